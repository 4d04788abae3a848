//! The unconstrained CRRA problem against its closed form.

mod common;

use common::{crra, grid, market, solve};
use hjb_leverage::dual::{dual_residual, to_dual};
use hjb_leverage::grid::WealthGrid;
use hjb_leverage::hjb::{hjb_residual, refine_study, Region, SolverParams, ValueSolution};
use hjb_leverage::model::ConstraintSpec;
use hjb_leverage::montecarlo::{horizon_for_tail, simulate_value, SimConfig};
use hjb_leverage::policy::extract_policy;
use hjb_leverage::reference::MertonSolution;

const R: f64 = 0.5;

fn uncapped() -> ConstraintSpec {
    ConstraintSpec::constant(1e6)
}

fn inner(sol: &ValueSolution) -> std::ops::Range<usize> {
    let n = sol.x().len();
    n / 10..n - n / 10
}

#[test]
fn value_matches_closed_form_on_inner_nodes() {
    let sol = solve(&crra(), &uncapped(), 1000);
    let exact = MertonSolution::new(&market(), R).unwrap();
    let worst = inner(&sol)
        .map(|i| (sol.v[i] / exact.value(sol.x()[i]) - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-3, "relative error {worst}");
    assert!(sol.region.iter().all(|r| *r == Region::Unconstrained));
}

#[test]
fn proportion_matches_closed_form() {
    let m = market();
    let c = uncapped();
    let sol = solve(&crra(), &c, 1000);
    let table = extract_policy(&sol, &crra(), &m, &c).unwrap();
    let target = m.excess_return() / (m.sigma * m.sigma * R);
    for &p in &table.pi_bar {
        assert!(
            (p - target).abs() <= 1e-3 * target,
            "pi_bar {p} vs {target}"
        );
    }
    let exact = MertonSolution::new(&m, R).unwrap();
    for i in inner(&sol) {
        let x = table.x[i];
        assert!((table.c_star[i] / exact.consumption(x) - 1.0).abs() < 1e-3);
    }
}

#[test]
fn residual_is_small_for_solve_and_for_sampled_closed_form() {
    let m = market();
    let c = uncapped();
    let sol = solve(&crra(), &c, 1000);
    let vmax = sol.v.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let res = hjb_residual(&sol, &m, &crra(), &c).unwrap();
    assert!(res <= 1e-6 * m.delta * vmax, "residual {res}");

    // The exact solution on the grid, derivatives by finite differences,
    // leaves a residual of the size of the truncation error.
    let exact = MertonSolution::new(&m, R).unwrap();
    let coarse = grid(500);
    let x = coarse.nodes();
    let h = (x[1] / x[0]).ln();
    let v: Vec<f64> = x.iter().map(|&x| exact.value(x)).collect();
    let sampled = ValueSolution::from_samples(coarse.clone(), v.clone(), &m, &c);
    let res = hjb_residual(&sampled, &m, &crra(), &c).unwrap();
    let scale = m.delta * v.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    assert!(
        res / scale < 10.0 * h * h,
        "sampled residual {res} vs h^2 {}",
        h * h
    );
}

#[test]
fn refinement_order_at_least_one() {
    let m = market();
    let exact = MertonSolution::new(&m, R).unwrap();
    let grids: Vec<WealthGrid> = [250, 500, 1000].iter().map(|&n| grid(n)).collect();
    let f = |x: f64| exact.value(x);
    let table = refine_study(
        &m,
        &crra(),
        &uncapped(),
        &grids,
        &SolverParams::default(),
        Some(&f),
    )
    .unwrap();
    let order = table.observed_order().unwrap();
    assert!((1.0..=2.5).contains(&order), "order {order}");
    let diffs = table.diffs();
    assert!(diffs[1] < diffs[0]);
}

#[test]
fn dual_of_numerical_solution_satisfies_dual_ode() {
    let m = market();
    let sol = solve(&crra(), &uncapped(), 1000);
    let dual = to_dual(&sol).unwrap();
    let res = dual_residual(&dual, &m, &crra()).unwrap();
    assert!(res <= 1e-3, "dual residual {res}");
    // H inverts the map x -> V'(x)
    let exact = MertonSolution::new(&m, R).unwrap();
    for (y, h) in dual.y.iter().zip(&dual.h) {
        let x_from_y = exact.dual(*y);
        assert!((-x_from_y.1 / h - 1.0).abs() < 1e-2);
    }
}

#[test]
fn monte_carlo_agrees_with_closed_form() {
    let m = market();
    let c = uncapped();
    // wide grid so that almost no path leaves it
    let g = WealthGrid::log(1e-3, 1e7, 1000).unwrap();
    let sol = hjb_leverage::hjb::solve_hjb(&m, &crra(), &c, &g, &SolverParams::default()).unwrap();
    let table = extract_policy(&sol, &crra(), &m, &c).unwrap();
    let v1 = MertonSolution::new(&m, R).unwrap().value(1.0);
    let horizon = horizon_for_tail(&table, &m, &crra(), 1.0, 1e-2 * v1).unwrap();
    let cfg = SimConfig {
        x0: 1.0,
        horizon,
        dt: 1e-3 * horizon,
        n_paths: 4000,
        seed: 7,
    };
    let r = simulate_value(&table, &m, &crra(), &cfg).unwrap();
    let tol = 3.0 * r.stderr + r.tail_bound + 1e-2 * v1;
    assert!(
        (r.estimate - v1).abs() <= tol,
        "estimate {} vs {v1} (tol {tol}, {r:?})",
        r.estimate
    );
}
