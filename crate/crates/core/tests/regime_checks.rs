//! Fixed-point iteration checks: contraction, monotonicity, membership in the
//! iterate class, convergence certificates and the Lipschitz sandwich.

use levydiv_core::barrier::AuxProblem;
use levydiv_core::levy::{ExpComponent, LevyModel};
use levydiv_core::piecewise::PayoffFn;
use levydiv_core::regime::{
    gamma_apply, hat_transform, norm_inf, solve_fixed_point, t_b_apply, FixedPointSettings, Grid,
    RegimeModel, RegimeState, SwitchJump, ValueIterate,
};

fn bm() -> LevyModel {
    LevyModel::brownian(0.1, 1.0).unwrap()
}

fn cl() -> LevyModel {
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

fn mix() -> LevyModel {
    LevyModel::new(
        0.5,
        0.8,
        2.0,
        vec![
            ExpComponent {
                weight: 0.5,
                rate: 1.5,
            },
            ExpComponent {
                weight: 0.5,
                rate: 4.0,
            },
        ],
    )
    .unwrap()
}

/// Three-state reference instance mixing path classes and jump families.
pub fn three_state() -> RegimeModel {
    RegimeModel::new(
        vec![
            RegimeState {
                model: bm(),
                discount: 0.25,
            },
            RegimeState {
                model: cl(),
                discount: 0.3,
            },
            RegimeState {
                model: mix(),
                discount: 0.2,
            },
        ],
        vec![
            vec![-0.3, 0.2, 0.1],
            vec![0.25, -0.45, 0.2],
            vec![0.1, 0.15, -0.25],
        ],
        vec![
            vec![
                SwitchJump::None,
                SwitchJump::None,
                SwitchJump::NegExp { rate: 2.0 },
            ],
            vec![
                SwitchJump::PointMass { at: -0.4 },
                SwitchJump::None,
                SwitchJump::None,
            ],
            vec![
                SwitchJump::Discrete {
                    atoms: vec![(0.5, 0.0), (0.5, -0.6)],
                },
                SwitchJump::NegExp { rate: 3.0 },
                SwitchJump::None,
            ],
        ],
        1.5,
        1.6,
    )
    .unwrap()
}

fn concave_iterate(grid: &Grid, n_states: usize, amp: f64, curve: f64, tail: f64) -> ValueIterate {
    let mut f = ValueIterate::zero(grid.clone(), n_states);
    for s in f.slices.iter_mut() {
        for (k, v) in s.values.iter_mut().enumerate() {
            let x = grid.point(k);
            *v = amp * (1.0 - (-curve * x).exp()) + tail * x;
        }
        s.tail_slope = tail;
    }
    f
}

#[test]
fn single_state_dispatches_to_aux() {
    let m = RegimeModel::new(
        vec![RegimeState {
            model: bm(),
            discount: 0.25,
        }],
        vec![vec![0.0]],
        vec![vec![SwitchJump::None]],
        1.5,
        1.6,
    )
    .unwrap();
    let sol = solve_fixed_point(&m, &FixedPointSettings::default()).unwrap();
    let p = AuxProblem::new(bm(), 0.25, 0.0, 1.5, 1.6, PayoffFn::zero()).unwrap();
    let aux = p.solve().unwrap();
    assert!((sol.b_star[0] - aux.b_star).abs() < 1e-12);
    assert_eq!(sol.k, 0.0);
    // exact agreement at the grid nodes (between nodes the iterate interpolates)
    for k in [0, 10, 500, 1999] {
        let x = sol.value.grid.point(k);
        assert!((sol.value.eval(0, x) - aux.value.eval(x)).abs() < 1e-9);
    }
}

#[test]
fn symmetric_two_state_stays_symmetric() {
    let m = RegimeModel::new(
        vec![
            RegimeState {
                model: bm(),
                discount: 0.25,
            },
            RegimeState {
                model: bm(),
                discount: 0.25,
            },
        ],
        vec![vec![-0.3, 0.3], vec![0.3, -0.3]],
        vec![
            vec![SwitchJump::None, SwitchJump::None],
            vec![SwitchJump::None, SwitchJump::None],
        ],
        1.5,
        1.6,
    )
    .unwrap();
    let grid = Grid {
        x_max: 20.0,
        n: 800,
    };
    let f = concave_iterate(&grid, 2, 1.0, 0.8, 0.4);
    let out = t_b_apply(&m, &f, &[1.0, 1.0]).unwrap();
    for k in 0..grid.n {
        assert!((out.slices[0].values[k] - out.slices[1].values[k]).abs() < 1e-10);
    }
}

#[test]
fn t_b_is_a_contraction() {
    let m = three_state();
    let k = m.contraction_k();
    let grid = Grid {
        x_max: 25.0,
        n: 1200,
    };
    let b = [0.8, 0.5, 1.1];
    // pairs with matching tail slopes so the sup-norm distance is finite
    let cases = [
        (0.9, 0.7, 0.25, 0.4, 1.3, 0.25),
        (1.5, 0.5, 0.0, 0.2, 2.0, 0.0),
        (0.3, 2.0, 0.6, 1.1, 0.9, 0.6),
        (2.0, 0.3, 0.8, 0.0, 1.0, 0.8),
        (0.0, 1.0, 0.5, 1.2, 0.4, 0.5),
    ];
    for (a1, c1, s, a2, c2, s2) in cases {
        let f = concave_iterate(&grid, 3, a1, c1, s);
        let g = concave_iterate(&grid, 3, a2, c2, s2);
        let dist = norm_inf(&f, &g);
        assert!(dist.is_finite());
        let tf = t_b_apply(&m, &f, &b).unwrap();
        let tg = t_b_apply(&m, &g, &b).unwrap();
        let out = norm_inf(&tf, &tg);
        assert!(
            out <= k * dist + 1e-6,
            "contraction violated: {out} vs K·{dist} = {}",
            k * dist
        );
    }
}

#[test]
fn gamma_is_monotone() {
    let m = three_state();
    let grid = Grid {
        x_max: 25.0,
        n: 1000,
    };
    let f = concave_iterate(&grid, 3, 0.5, 1.0, 0.3);
    let g = concave_iterate(&grid, 3, 1.0, 1.0, 0.3); // g ≥ f slice-wise
    let (gf, _) = gamma_apply(&m, &f).unwrap();
    let (gg, _) = gamma_apply(&m, &g).unwrap();
    for i in 0..3 {
        for k in 0..grid.n {
            assert!(gf.slices[i].values[k] <= gg.slices[i].values[k] + 1e-9);
        }
    }
}

#[test]
fn gamma_preserves_the_iterate_class() {
    let m = three_state();
    let grid = Grid {
        x_max: 25.0,
        n: 1000,
    };
    let f = concave_iterate(&grid, 3, 0.8, 0.9, 0.35);
    let (out, barriers) = gamma_apply(&m, &f).unwrap();
    assert_eq!(barriers.len(), 3);
    let beta = m.injection_cost();
    for s in &out.slices {
        // concave with slopes in [tail, β] and tail in [0, 1]
        let dx = out.grid.step();
        let mut prev = f64::INFINITY;
        for k in 0..out.grid.n - 1 {
            let sl = (s.values[k + 1] - s.values[k]) / dx;
            assert!(sl <= prev + 1e-7);
            assert!(sl <= beta + 1e-7);
            prev = sl;
        }
        assert!(s.tail_slope >= 0.0 && s.tail_slope <= 1.0);
        // the transform of the output must be admissible again
        let next = ValueIterate {
            grid: out.grid.clone(),
            slices: out.slices.clone(),
            barriers: out.barriers.clone(),
            iteration: out.iteration,
        };
        for i in 0..3 {
            assert!(hat_transform(&m, &next, i).is_ok());
        }
    }
}

#[test]
fn first_application_matches_direct_aux_solve() {
    let m = three_state();
    let grid = Grid {
        x_max: 25.0,
        n: 1500,
    };
    let zero = ValueIterate::zero(grid.clone(), 3);
    let (out, barriers) = gamma_apply(&m, &zero).unwrap();
    for i in 0..3 {
        let w = hat_transform(&m, &zero, i).unwrap();
        let p = m.aux_problem(i, w).unwrap();
        let b = p.optimal_barrier().unwrap();
        assert!((b - barriers[i]).abs() < 1e-12);
        let v = p.value(b).unwrap();
        for k in [0, 25, 300, 900, 1499] {
            let x = grid.point(k);
            assert!((out.eval(i, x) - v.eval(x)).abs() < 1e-9 + 2e-7 * v.eval(x).abs());
        }
    }
}

#[test]
fn fixed_point_converges_with_certificates() {
    let m = three_state();
    let settings = FixedPointSettings {
        grid_points: 2000,
        tol: 1e-8,
        max_iter: 400,
        x_max: None,
    };
    let sol = solve_fixed_point(&m, &settings).unwrap();
    let k = sol.k;
    assert!(k < 1.0);
    assert!(sol.posterior_bound < 1e-8);
    // successive-difference ratios bounded by the contraction constant
    for w in sol.deltas.windows(2) {
        if w[0] > 1e-11 && w[1] > 1e-13 {
            assert!(
                w[1] / w[0] <= k + 1e-3,
                "ratio {} exceeds K={k}",
                w[1] / w[0]
            );
        }
    }
    // V = T_{b*} V on the grid to the certified tolerance
    let tv = t_b_apply(&m, &sol.value, &sol.b_star).unwrap();
    let gap = norm_inf(&tv, &sol.value);
    assert!(
        gap <= 10.0 * sol.posterior_bound.max(1e-10),
        "fixed-point gap {gap:.3e}"
    );
    // Lipschitz sandwich 0 ≤ V(y,i) − V(x,i) ≤ β(y − x)
    let beta = m.injection_cost();
    let dx = sol.value.grid.step();
    for s in &sol.value.slices {
        for wv in s.values.windows(2) {
            let d = wv[1] - wv[0];
            assert!(d >= -1e-9);
            assert!(d <= beta * dx + 1e-9);
        }
    }
    // barriers reproduce themselves under one more Γ application
    let (_, b_again) = gamma_apply(&m, &sol.value).unwrap();
    for (a, b) in sol.b_star.iter().zip(&b_again) {
        assert!((a - b).abs() < 1e-6, "barrier drift {a} vs {b}");
    }
}

#[test]
fn iterates_increase_from_a_lower_bracket() {
    // Γ is monotone, so starting from a constant v₀ ≡ −M with Γv₀ ≥ v₀ the
    // iterates form a nondecreasing chain below V. (Starting from 0 is what
    // the solver does, but 0 does not sit below V when switch jumps force
    // injections, so monotonicity is checked from the bracket.)
    let m = three_state();
    let grid = Grid {
        x_max: 25.0,
        n: 800,
    };
    let k = m.contraction_k();
    let (g0, _) = gamma_apply(&m, &ValueIterate::zero(grid.clone(), 3)).unwrap();
    let g0_min = g0
        .slices
        .iter()
        .flat_map(|s| s.values.iter().cloned())
        .fold(f64::INFINITY, f64::min);
    let max_jump = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| m.jump(i, j).mean_abs())
        .fold(0.0, f64::max);
    let big = 2.0 * (g0_min.abs() + m.injection_cost() * max_jump + 1.0) / (1.0 - k);
    let mut v = ValueIterate::zero(grid, 3);
    for s in v.slices.iter_mut() {
        for val in s.values.iter_mut() {
            *val = -big;
        }
    }
    for n in 0..8 {
        let (next, _) = gamma_apply(&m, &v).unwrap();
        for (sn, sv) in next.slices.iter().zip(&v.slices) {
            for (a, b) in sn.values.iter().zip(&sv.values) {
                assert!(*a >= *b - 1e-9, "iterate decreased at step {n}");
            }
        }
        v = next;
    }
}

#[test]
fn barriers_stabilize_along_the_iteration() {
    let m = three_state();
    let grid = Grid {
        x_max: 25.0,
        n: 1200,
    };
    let mut v = ValueIterate::zero(grid, 3);
    let mut last: Vec<f64> = vec![f64::NAN; 3];
    let mut drift = f64::INFINITY;
    for _ in 0..40 {
        let (next, b) = gamma_apply(&m, &v).unwrap();
        if last.iter().all(|x| x.is_finite()) {
            drift = b
                .iter()
                .zip(&last)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
        }
        last = b;
        v = next;
    }
    assert!(drift < 1e-6, "barriers still moving by {drift:.3e}");
}
