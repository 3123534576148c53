//! Property tests over random models: convexity and root identities of the
//! Laplace exponent, and the defining Laplace transform of the scale function.

use levydiv_core::levy::{ExpComponent, LevyModel};
use levydiv_core::quad;
use levydiv_core::scale::ScaleContext;
use proptest::prelude::*;

fn arb_model() -> impl Strategy<Value = LevyModel> {
    (
        -1.0..3.0_f64,                     // drift
        prop_oneof![Just(0.0), 0.3..2.0],  // volatility
        0.0..3.0_f64,                      // jump rate
        proptest::collection::vec((0.2..1.0_f64, 0.3..6.0_f64), 1..4),
        any::<bool>(),
    )
        .prop_filter_map("valid model", |(drift, vol, etaj, comps, drop_jumps)| {
            let mut rate = if drop_jumps && vol > 0.0 { 0.0 } else { etaj.max(0.05) };
            let mut drift = drift;
            if vol == 0.0 {
                drift = drift.abs().max(0.2);
                rate = rate.max(0.1);
            }
            let wsum: f64 = comps.iter().map(|c| c.0).sum();
            let mut mix: Vec<ExpComponent> = comps
                .iter()
                .map(|&(w, a)| ExpComponent {
                    weight: w / wsum,
                    rate: a,
                })
                .collect();
            // distinct rates
            mix.sort_by(|a, b| a.rate.partial_cmp(&b.rate).unwrap());
            for k in 1..mix.len() {
                if (mix[k].rate - mix[k - 1].rate).abs() < 1e-3 {
                    mix[k].rate += 0.5 + k as f64 * 0.1;
                }
            }
            if rate == 0.0 {
                mix.clear();
            }
            LevyModel::new(drift, vol, rate, mix).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn psi_is_convex(m in arb_model(), t1 in 0.0..5.0_f64, dt1 in 0.01..3.0_f64, dt2 in 0.01..3.0_f64) {
        let t2 = t1 + dt1;
        let t3 = t2 + dt2;
        let f1 = m.laplace_exponent(t1).unwrap();
        let f2 = m.laplace_exponent(t2).unwrap();
        let f3 = m.laplace_exponent(t3).unwrap();
        let lam = (t2 - t1) / (t3 - t1);
        let chord = (1.0 - lam) * f1 + lam * f3;
        prop_assert!(f2 <= chord + 1e-9 * chord.abs().max(1.0));
    }

    #[test]
    fn phi_inverts_psi(m in arb_model(), q in 0.01..4.0_f64) {
        let phi = m.phi(q).unwrap();
        let back = m.laplace_exponent(phi).unwrap();
        prop_assert!((back - q).abs() <= 1e-10 * q.max(1.0));
    }

    #[test]
    fn phi_is_nondecreasing(m in arb_model(), q in 0.01..3.0_f64, dq in 0.0..2.0_f64) {
        let a = m.phi(q).unwrap();
        let b = m.phi(q + dq).unwrap();
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn mean_drift_matches_psi_slope(m in arb_model()) {
        let d1 = m.laplace_exponent(1e-4).unwrap() / 1e-4;
        let d2 = m.laplace_exponent(5e-5).unwrap() / 5e-5;
        let extrap = 2.0 * d2 - d1;
        prop_assert!((extrap - m.mean_drift()).abs() < 1e-6 * (1.0 + m.mean_drift().abs()));
    }
}

proptest! {
    // quadrature-backed, keep the case count moderate
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scale_function_laplace_transform(m in arb_model(), q in 0.05..2.0_f64, bump in 0.1..2.0_f64) {
        let ctx = ScaleContext::new(&m, q).unwrap();
        let theta = ctx.phi_q() + bump.max(0.1);
        let decay = theta - ctx.phi_q();
        let num = quad::integrate_decaying(|x| ctx.w_damped(x, theta), 0.0, decay, 1e-10);
        let exact = 1.0 / (m.laplace_exponent(theta).unwrap() - q);
        prop_assert!((num - exact).abs() <= 1e-7 * exact.abs().max(1e-8));
    }
}
