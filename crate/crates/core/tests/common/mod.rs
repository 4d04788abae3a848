#![allow(dead_code)]

use hjb_leverage::grid::WealthGrid;
use hjb_leverage::hjb::{solve_hjb, SolverParams, ValueSolution};
use hjb_leverage::model::{ConstraintSpec, MarketParams, UtilityModel};

pub fn market() -> MarketParams {
    MarketParams {
        mu: 0.07,
        r: 0.0,
        sigma: 0.2,
        delta: 0.1,
        gamma_growth: 0.5,
        m_growth: 2.0,
    }
}

pub fn grid(n: usize) -> WealthGrid {
    WealthGrid::log(0.01, 100.0, n).unwrap()
}

pub fn solve(utility: &UtilityModel, constraint: &ConstraintSpec, n: usize) -> ValueSolution {
    solve_hjb(
        &market(),
        utility,
        constraint,
        &grid(n),
        &SolverParams::default(),
    )
    .unwrap()
}

pub fn crra() -> UtilityModel {
    UtilityModel::crra_consumption(0.5)
}
