//! Shared fixtures for the benchmark targets.

use levydiv_core::barrier::AuxProblem;
use levydiv_core::levy::{ExpComponent, LevyModel};
use levydiv_core::piecewise::PayoffFn;
use levydiv_core::regime::{RegimeModel, RegimeState, SwitchJump};

pub fn brownian() -> LevyModel {
    LevyModel::brownian(0.1, 1.0).unwrap()
}

pub fn hyper() -> LevyModel {
    LevyModel::new(
        2.0,
        0.0,
        3.0,
        vec![
            ExpComponent {
                weight: 0.6,
                rate: 2.0,
            },
            ExpComponent {
                weight: 0.4,
                rate: 5.0,
            },
        ],
    )
    .unwrap()
}

pub fn payoff() -> PayoffFn {
    PayoffFn::new(vec![0.0, 2.0], vec![0.0, 2.0], 0.0).unwrap()
}

pub fn aux_problem() -> AuxProblem {
    AuxProblem::new(brownian(), 0.1, 0.5, 2.0, 1.5, payoff()).unwrap()
}

pub fn two_state() -> RegimeModel {
    RegimeModel::new(
        vec![
            RegimeState {
                model: brownian(),
                discount: 0.25,
            },
            RegimeState {
                model: hyper(),
                discount: 0.3,
            },
        ],
        vec![vec![-0.3, 0.3], vec![0.4, -0.4]],
        vec![
            vec![SwitchJump::None, SwitchJump::NegExp { rate: 2.0 }],
            vec![SwitchJump::PointMass { at: -0.4 }, SwitchJump::None],
        ],
        1.5,
        1.6,
    )
    .unwrap()
}
