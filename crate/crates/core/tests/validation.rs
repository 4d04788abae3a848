//! Standing-assumption checks on the shipped utility families.

mod common;

use common::market;
use hjb_leverage::model::{
    validate, CheckStatus, ConstraintSpec, MarketParams, ProbeLattice, UtilityModel,
};

fn report(m: &MarketParams, u: &UtilityModel) -> hjb_leverage::model::ValidationReport {
    validate(
        m,
        u,
        &ConstraintSpec::constant(1.0),
        &ProbeLattice::default(),
    )
    .unwrap()
}

#[test]
fn shipped_families_pass() {
    let m = market();
    for u in [
        UtilityModel::crra_consumption(0.5),
        UtilityModel::crra_wealth(0.5),
        UtilityModel::Additive {
            alpha: 1.0,
            beta: 0.5,
            r_u: 0.5,
            r_v: 0.7,
        },
        UtilityModel::CobbDouglas {
            a: 0.6,
            b: 0.2,
            risk_aversion: 0.5,
        },
    ] {
        let r = report(&m, &u);
        assert!(r.passed(), "{u:?}: {:?}", r.failures().collect::<Vec<_>>());
    }
}

#[test]
fn degenerate_families_are_waived_not_failed() {
    let r = report(&market(), &UtilityModel::crra_consumption(0.5));
    assert!(r.consumption_only_mode);
    assert!(r.checks.iter().any(|c| c.status == CheckStatus::Waived));
    let r = report(&market(), &UtilityModel::crra_wealth(0.5));
    assert!(r.wealth_only_mode);
}

#[test]
fn small_discount_rate_fails_well_posedness() {
    let m = MarketParams {
        delta: 0.01,
        ..market()
    };
    let r = report(&m, &UtilityModel::crra_consumption(0.5));
    assert!(!r.passed());
    assert_eq!(r.get("well_posedness").unwrap().status, CheckStatus::Fail);
}

#[test]
fn cap_below_floor_is_rejected() {
    let r = validate(
        &market(),
        &UtilityModel::crra_consumption(0.5),
        &ConstraintSpec::constant(-1.0),
        &ProbeLattice::default(),
    )
    .unwrap();
    assert_eq!(r.get("parameters").unwrap().status, CheckStatus::Fail);
}
