//! Independent numerical Laplace inversion (shifted fixed-Talbot) of
//! 1/(ψ(s) − q) against the closed-form exponential-sum scale function.

use levydiv_core::levy::{ExpComponent, LevyModel};
use levydiv_core::scale::ScaleContext;
use num_complex::Complex64;
use std::f64::consts::PI;

fn psi_complex(m: &LevyModel, s: Complex64) -> Complex64 {
    let mut v = s * m.drift + s * s * (0.5 * m.volatility * m.volatility);
    if m.jump_rate > 0.0 {
        let mut mixc = Complex64::new(-1.0, 0.0);
        for c in &m.jump_mix {
            mixc += Complex64::new(c.weight * c.rate, 0.0) / (s + c.rate);
        }
        v += mixc * m.jump_rate;
    }
    v
}

/// Fixed-Talbot inversion of F(s) = 1/(ψ(s+σ) − q) at t, multiplied by e^{σt};
/// the shift σ moves every pole strictly left of the contour.
fn talbot_w(m: &LevyModel, q: f64, sigma: f64, t: f64, terms: usize) -> f64 {
    let r = 2.0 * terms as f64 / (5.0 * t);
    let f = |s: Complex64| Complex64::new(1.0, 0.0) / (psi_complex(m, s + sigma) - q);
    let mut acc = 0.5 * f(Complex64::new(r, 0.0)).re * (r * t).exp();
    for k in 1..terms {
        let theta = k as f64 * PI / terms as f64;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma_hat = theta + (theta * cot - 1.0) * cot;
        let val = (s * t).exp() * f(s) * Complex64::new(1.0, sigma_hat);
        acc += val.re;
    }
    (sigma * t).exp() * r / terms as f64 * acc
}

#[test]
fn talbot_inversion_matches_exponential_sum() {
    let models = [
        LevyModel::brownian(0.0, 2.0_f64.sqrt()).unwrap(),
        LevyModel::brownian(0.3, 1.0).unwrap(),
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
        .unwrap(),
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
        .unwrap(),
    ];
    for (mi, m) in models.iter().enumerate() {
        for &q in &[0.05, 0.4, 1.2] {
            let ctx = ScaleContext::new(m, q).unwrap();
            let sigma = ctx.phi_q() + 1.0;
            for &x in &[0.4, 1.0, 2.0, 4.5] {
                let inv = talbot_w(m, q, sigma, x, 20);
                let exact = ctx.w(x);
                assert!(
                    (inv - exact).abs() < 1e-8 * exact.abs().max(1.0),
                    "model {mi}, q={q}, x={x}: talbot {inv} vs closed form {exact}"
                );
            }
        }
    }
}
