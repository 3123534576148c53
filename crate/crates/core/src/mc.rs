//! Monte-Carlo engine for the controlled processes: Parisian reflection at
//! Poisson decision epochs, classical reflection at 0, regime switching with
//! jumps, and the raw first-passage functionals of the appendix identities.
//!
//! Discounted functionals are estimated through exponential killing: an
//! independent Exp(q) event is superposed on the decision/claim event stream,
//! so E[∫ e^{−qt} h(U(t)) dt] = E[h(U(e_q))]/q and discounted totals become
//! plain sums stopped at the kill event. Between events the Brownian part is
//! sampled exactly (endpoint plus bridge minimum), so reflection amounts,
//! ruin detection and dividend states carry no time-discretization error; a
//! substep width dt enters only where an upper passage must be detected, and
//! there the coarse and refined estimates share one underlying path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::Write;

use crate::barrier::AuxProblem;
use crate::levy::{CoreError, LevyModel, Result};
use crate::piecewise::StepLinear;
use crate::regime::{RegimeModel, SwitchJump, ValueIterate};

/// Horizon policy: exact exponential killing, or truncation at T_max = factor/q
/// with explicit discounting and a reported tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    ExpKill,
    Truncate { t_max_factor: f64 },
}

#[derive(Debug, Clone)]
pub struct PathConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Substep width where one is needed; defaults to 1e-4 of the
    /// characteristic time 1/(q+r). Must stay below 1e-3/(q+r).
    pub dt: Option<f64>,
    pub horizon: Horizon,
    pub antithetic: bool,
}

impl PathConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        PathConfig {
            n_paths,
            seed,
            dt: None,
            horizon: Horizon::ExpKill,
            antithetic: false,
        }
    }

    /// Acceptance-scale default: 2×10^5 paths.
    pub fn acceptance(seed: u64) -> Self {
        Self::new(200_000, seed)
    }

    fn resolved_dt(&self, rate: f64) -> Result<f64> {
        let cap = 1e-3 / rate;
        let dt = self.dt.unwrap_or(1e-4 / rate);
        if dt > cap * (1.0 + 1e-9) || !(dt > 0.0) {
            return Err(CoreError::InvalidProblem(format!(
                "dt = {dt:.3e} violates the cap 1e-3/(q+r) = {cap:.3e}"
            )));
        }
        Ok(dt)
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(CoreError::InvalidProblem("need at least 2 paths".into()));
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(vals: &[f64]) -> Estimate {
        let n = vals.len();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        Estimate {
            mean,
            std_error: (var / n as f64).sqrt(),
            n,
        }
    }

    pub fn z_score(&self, reference: f64) -> f64 {
        let diff = self.mean - reference;
        if self.std_error == 0.0 {
            // degenerate estimator: every path produced the same value
            return if diff.abs() <= 1e-9 * reference.abs().max(1.0) {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            };
        }
        diff / self.std_error
    }
}

/// An estimate evaluated at substep width dt and at dt/2 on shared paths.
#[derive(Debug, Clone, Copy)]
pub struct PairedEstimate {
    pub at_dt: Estimate,
    pub at_half_dt: Estimate,
}

/// Path functionals of one simulated controlled path.
#[derive(Debug, Clone, Copy, Default)]
pub struct PathOutcome {
    pub dividends: f64,
    pub injections: f64,
    pub payoff_part: f64,
    pub terminal_state: f64,
}

impl PathOutcome {
    pub fn value(&self, beta: f64) -> f64 {
        self.dividends - beta * self.injections + self.payoff_part
    }
}

fn rng_for(seed: u64, path: usize, lane: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((path as u64) * 8 + lane);
    r
}

fn exp_time(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.gen::<f64>();
    -(1.0 - u).ln() / rate
}

fn normal(rng: &mut ChaCha8Rng, flip: bool) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    if flip {
        -z
    } else {
        z
    }
}

/// Minimum of a Brownian bridge over a segment, relative to its start, given
/// the displacement d and variance var; always ≤ min(0, d).
fn bridge_min(rng: &mut ChaCha8Rng, d: f64, var: f64) -> f64 {
    let u: f64 = rng.gen::<f64>();
    let lnu = (1.0 - u).max(1e-300).ln();
    0.5 * (d - (d * d - 2.0 * var * lnu).sqrt())
}

fn sample_claim(rng: &mut ChaCha8Rng, model: &LevyModel) -> f64 {
    let pick: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut rate = model.jump_mix.last().map(|c| c.rate).unwrap_or(1.0);
    for c in &model.jump_mix {
        acc += c.weight;
        if pick <= acc {
            rate = c.rate;
            break;
        }
    }
    let u: f64 = rng.gen::<f64>();
    -(1.0 - u).max(1e-300).ln() / rate
}

fn sample_switch_jump(rng: &mut ChaCha8Rng, j: &SwitchJump) -> f64 {
    match j {
        SwitchJump::None => 0.0,
        SwitchJump::PointMass { at } => *at,
        SwitchJump::NegExp { rate } => {
            let u: f64 = rng.gen::<f64>();
            (1.0 - u).max(1e-300).ln() / rate
        }
        SwitchJump::Discrete { atoms } => {
            let pick: f64 = rng.gen::<f64>();
            let mut acc = 0.0;
            for &(w, at) in atoms {
                acc += w;
                if pick <= acc {
                    return at;
                }
            }
            atoms.last().unwrap().1
        }
    }
}

fn run_paths<F>(cfg: &PathConfig, f: F) -> Result<Estimate>
where
    F: Fn(usize) -> f64 + Sync,
{
    cfg.validate()?;
    if cfg.antithetic {
        let pairs = cfg.n_paths / 2;
        let vals: Vec<f64> = (0..pairs).into_par_iter().map(|i| f(i)).collect();
        Ok(Estimate::from_samples(&vals))
    } else {
        let vals: Vec<f64> = (0..cfg.n_paths).into_par_iter().map(|i| f(i)).collect();
        Ok(Estimate::from_samples(&vals))
    }
}

// ---------------------------------------------------------------------------
// controlled aux process U^{0,b}: Parisian reflection at b, classical at 0
// ---------------------------------------------------------------------------

/// One exponential-kill path of the doubly reflected process. The payoff part
/// accumulates (λ/θ)·w(U) at the kill event; dividends and injections are
/// undiscounted (the kill carries the discount).
fn aux_kill_path(
    p: &AuxProblem,
    b: f64,
    x0: f64,
    rng: &mut ChaCha8Rng,
    flip: bool,
) -> PathOutcome {
    let model = p.model();
    let theta = p.theta();
    let r = p.decision_rate();
    let lambda = p.terminal_rate();
    let eta = model.volatility;
    let etaj = model.jump_rate;
    let total = theta + r + etaj;
    let mut out = PathOutcome::default();
    let mut u = x0;
    if u < 0.0 {
        out.injections += -u;
        u = 0.0;
    }
    loop {
        let tau = exp_time(rng, total);
        if eta > 0.0 {
            let d = model.drift * tau + eta * tau.sqrt() * normal(rng, flip);
            let m = bridge_min(rng, d, eta * eta * tau);
            let deficit = -(u + m);
            if deficit > 0.0 {
                out.injections += deficit;
                u = u + d + deficit;
            } else {
                u += d;
            }
        } else {
            u += model.drift * tau;
        }
        let pick: f64 = rng.gen::<f64>() * total;
        if pick < theta {
            if lambda > 0.0 {
                out.payoff_part = lambda / theta * p.payoff().eval(u);
            }
            out.terminal_state = u;
            return out;
        } else if pick < theta + r {
            if u > b {
                out.dividends += u - b;
                u = b;
            }
        } else {
            u -= sample_claim(rng, model);
            if u < 0.0 {
                out.injections += -u;
                u = 0.0;
            }
        }
    }
}

/// Truncated-horizon path with explicit discounting; substeps of width dt
/// resolve the within-segment discount of continuous injections and the
/// running payoff integral.
fn aux_truncate_path(
    p: &AuxProblem,
    b: f64,
    x0: f64,
    t_max: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
    flip: bool,
) -> PathOutcome {
    let model = p.model();
    let theta = p.theta();
    let r = p.decision_rate();
    let lambda = p.terminal_rate();
    let eta = model.volatility;
    let etaj = model.jump_rate;
    let event_rate = r + etaj;
    let mut out = PathOutcome::default();
    let mut u = x0;
    let mut t = 0.0;
    if u < 0.0 {
        out.injections += -u;
        u = 0.0;
    }
    while t < t_max {
        let tau = exp_time(rng, event_rate).min(t_max - t);
        // walk the segment in substeps
        let n_sub = (tau / dt).ceil().max(1.0) as usize;
        let h = tau / n_sub as f64;
        for _ in 0..n_sub {
            let w0 = p.payoff().eval(u);
            if eta > 0.0 {
                let d = model.drift * h + eta * h.sqrt() * normal(rng, flip);
                let m = bridge_min(rng, d, eta * eta * h);
                let deficit = -(u + m);
                if deficit > 0.0 {
                    out.injections += (-theta * (t + 0.5 * h)).exp() * deficit;
                    u = u + d + deficit;
                } else {
                    u += d;
                }
            } else {
                u += model.drift * h;
            }
            if lambda > 0.0 {
                let w1 = p.payoff().eval(u);
                out.payoff_part +=
                    lambda * 0.5 * ((-theta * t).exp() * w0 + (-theta * (t + h)).exp() * w1) * h;
            }
            t += h;
        }
        if t >= t_max {
            break;
        }
        let pick: f64 = rng.gen::<f64>() * event_rate;
        if pick < r {
            if u > b {
                out.dividends += (-theta * t).exp() * (u - b);
                u = b;
            }
        } else {
            u -= sample_claim(rng, model);
            if u < 0.0 {
                out.injections += (-theta * t).exp() * (-u);
                u = 0.0;
            }
        }
    }
    out.terminal_state = u;
    out
}

/// Simulates the controlled process under the configured horizon policy and
/// returns the per-path functionals.
pub fn simulate_controlled(
    p: &AuxProblem,
    b: f64,
    x0: f64,
    cfg: &PathConfig,
) -> Result<Vec<PathOutcome>> {
    cfg.validate()?;
    match cfg.horizon {
        Horizon::ExpKill => Ok((0..cfg.n_paths)
            .into_par_iter()
            .map(|i| {
                let (stream, flip) = if cfg.antithetic {
                    (i / 2, i % 2 == 1)
                } else {
                    (i, false)
                };
                let mut rng = rng_for(cfg.seed, stream, 0);
                aux_kill_path(p, b, x0, &mut rng, flip)
            })
            .collect()),
        Horizon::Truncate { t_max_factor } => {
            let t_max = t_max_factor / p.discount();
            let dt = cfg.resolved_dt(p.theta() + p.decision_rate())?;
            Ok((0..cfg.n_paths)
                .into_par_iter()
                .map(|i| {
                    let (stream, flip) = if cfg.antithetic {
                        (i / 2, i % 2 == 1)
                    } else {
                        (i, false)
                    };
                    let mut rng = rng_for(cfg.seed, stream, 0);
                    aux_truncate_path(p, b, x0, t_max, dt, &mut rng, flip)
                })
                .collect())
        }
    }
}

/// Crude bound on the value mass discarded by truncation at T_max.
pub fn truncate_tail_bound(p: &AuxProblem, t_max: f64) -> f64 {
    let m = p.model();
    let scale = m.drift.abs() + m.volatility + m.jump_rate * m.mean_jump();
    let w_scale = p.payoff().eval(1.0).abs() + 1.0;
    (-p.discount() * t_max).exp()
        * (p.decision_rate() * (1.0 + scale)
            + p.injection_cost() * scale
            + p.terminal_rate() * w_scale)
        / p.discount()
}

/// Estimates v_b(x0) = E[∫ e^{−qt} dL − β ∫ e^{−qt} dR + e^{−qζ} w(U(ζ))].
pub fn estimate_npv(p: &AuxProblem, b: f64, x0: f64, cfg: &PathConfig) -> Result<Estimate> {
    let beta = p.injection_cost();
    match cfg.horizon {
        Horizon::ExpKill => run_paths(cfg, |i| {
            if cfg.antithetic {
                let mut r0 = rng_for(cfg.seed, i, 0);
                let a = aux_kill_path(p, b, x0, &mut r0, false).value(beta);
                let mut r1 = rng_for(cfg.seed, i, 0);
                let c = aux_kill_path(p, b, x0, &mut r1, true).value(beta);
                0.5 * (a + c)
            } else {
                let mut rng = rng_for(cfg.seed, i, 0);
                aux_kill_path(p, b, x0, &mut rng, false).value(beta)
            }
        }),
        Horizon::Truncate { t_max_factor } => {
            let t_max = t_max_factor / p.discount();
            let dt = cfg.resolved_dt(p.theta() + p.decision_rate())?;
            run_paths(cfg, |i| {
                if cfg.antithetic {
                    let mut r0 = rng_for(cfg.seed, i, 0);
                    let a = aux_truncate_path(p, b, x0, t_max, dt, &mut r0, false).value(beta);
                    let mut r1 = rng_for(cfg.seed, i, 0);
                    let c = aux_truncate_path(p, b, x0, t_max, dt, &mut r1, true).value(beta);
                    0.5 * (a + c)
                } else {
                    let mut rng = rng_for(cfg.seed, i, 0);
                    aux_truncate_path(p, b, x0, t_max, dt, &mut rng, false).value(beta)
                }
            })
        }
    }
}

// ---------------------------------------------------------------------------
// first-passage functionals of the raw process X
// ---------------------------------------------------------------------------

/// E_x[e^{−qτ_0^-}; τ_0^- < ∞] as P(τ_0^- < e_q).
pub fn estimate_fpt_laplace(
    model: &LevyModel,
    q: f64,
    x0: f64,
    cfg: &PathConfig,
) -> Result<Estimate> {
    if x0 < 0.0 {
        return Err(CoreError::Domain("x0 must be >= 0".into()));
    }
    let eta = model.volatility;
    let etaj = model.jump_rate;
    let total = q + etaj;
    run_paths(cfg, |i| {
        let mut rng = rng_for(cfg.seed, i, 0);
        let mut u = x0;
        loop {
            let tau = exp_time(&mut rng, total);
            if eta > 0.0 {
                let d = model.drift * tau + eta * tau.sqrt() * normal(&mut rng, false);
                let m = bridge_min(&mut rng, d, eta * eta * tau);
                if u + m < 0.0 {
                    return 1.0;
                }
                u += d;
            } else {
                u += model.drift * tau;
            }
            let pick: f64 = rng.gen::<f64>() * total;
            if pick < q {
                return 0.0;
            }
            u -= sample_claim(&mut rng, model);
            if u < 0.0 {
                return 1.0;
            }
        }
    })
}

/// E_x[e^{−qτ_b^+}; τ_b^+ < τ_0^-] for 0 ≤ x0 ≤ b, via substep barrier
/// detection with Brownian-bridge crossing probabilities; returns the
/// estimate at dt and at dt/2 on shared paths.
pub fn estimate_two_sided(
    model: &LevyModel,
    q: f64,
    x0: f64,
    b: f64,
    cfg: &PathConfig,
) -> Result<PairedEstimate> {
    if !(0.0..=b).contains(&x0) {
        return Err(CoreError::Domain("need 0 <= x0 <= b".into()));
    }
    cfg.validate()?;
    let eta = model.volatility;
    let etaj = model.jump_rate;
    let total = q + etaj;
    let dt = cfg.resolved_dt(q)?;
    let outcomes: Vec<(f64, f64)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, i, 0);
            let mut det_c = rng_for(cfg.seed, i, 1);
            let mut det_f = rng_for(cfg.seed, i, 2);
            // per-resolution state: None = undecided, Some(v) = decided
            let mut res_c: Option<f64> = None;
            let mut res_f: Option<f64> = None;
            let mut u = x0;
            if x0 >= b {
                return (1.0, 1.0);
            }
            'path: loop {
                let tau = exp_time(&mut rng, total);
                if eta > 0.0 {
                    let n_half = ((tau / dt).ceil() as usize).max(1);
                    let h = tau / (2 * n_half) as f64;
                    let mut uc = u;
                    for _ in 0..n_half {
                        // two fine substeps sharing the coarse interval
                        let mut uf = uc;
                        let mut fine_pair = [0.0_f64; 2];
                        for s in 0..2 {
                            let d = model.drift * h + eta * h.sqrt() * normal(&mut rng, false);
                            let next = uf + d;
                            fine_pair[s] = next;
                            if res_f.is_none() {
                                res_f = two_sided_detect(
                                    &mut det_f,
                                    uf,
                                    next,
                                    b,
                                    eta * eta * h,
                                );
                            }
                            uf = next;
                        }
                        if res_c.is_none() {
                            res_c = two_sided_detect(
                                &mut det_c,
                                uc,
                                fine_pair[1],
                                b,
                                eta * eta * 2.0 * h,
                            );
                        }
                        uc = fine_pair[1];
                        if res_c.is_some() && res_f.is_some() {
                            break 'path;
                        }
                    }
                    u = uc;
                } else {
                    // pure drift upward: exact crossing time against the event clock
                    let t_hit = (b - u) / model.drift;
                    if t_hit <= tau {
                        res_c.get_or_insert(1.0);
                        res_f.get_or_insert(1.0);
                        break 'path;
                    }
                    u += model.drift * tau;
                }
                let pick: f64 = rng.gen::<f64>() * total;
                if pick < q {
                    res_c.get_or_insert(0.0);
                    res_f.get_or_insert(0.0);
                    break 'path;
                }
                u -= sample_claim(&mut rng, model);
                if u < 0.0 {
                    res_c.get_or_insert(0.0);
                    res_f.get_or_insert(0.0);
                    break 'path;
                }
            }
            (res_c.unwrap_or(0.0), res_f.unwrap_or(0.0))
        })
        .collect();
    let coarse: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let fine: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    Ok(PairedEstimate {
        at_dt: Estimate::from_samples(&coarse),
        at_half_dt: Estimate::from_samples(&fine),
    })
}

/// Crossing decision over one substep from endpoints (upper barrier b, lower
/// barrier 0): Some(1) up first, Some(0) down first, None no crossing.
fn two_sided_detect(rng: &mut ChaCha8Rng, u0: f64, u1: f64, b: f64, var: f64) -> Option<f64> {
    if u1 >= b {
        return Some(1.0);
    }
    if u1 <= 0.0 {
        return Some(0.0);
    }
    let p_hi = (-2.0 * (b - u0).max(0.0) * (b - u1) / var).exp();
    let p_lo = (-2.0 * u0.max(0.0) * u1 / var).exp();
    let pick: f64 = rng.gen::<f64>();
    if pick < p_hi {
        Some(1.0)
    } else if pick < p_hi + p_lo {
        Some(0.0)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Parisian-reflected process U^b up to the first passage below 0
// ---------------------------------------------------------------------------

enum ParisianEnd {
    Ruined,
    Killed(f64),
}

/// Runs U^b to min(τ_0^-(r), e_q) and reports how it ended.
fn parisian_path(
    model: &LevyModel,
    q: f64,
    r: f64,
    b: f64,
    x0: f64,
    rng: &mut ChaCha8Rng,
) -> ParisianEnd {
    let eta = model.volatility;
    let etaj = model.jump_rate;
    let total = q + r + etaj;
    let mut u = x0;
    if u < 0.0 {
        return ParisianEnd::Ruined;
    }
    loop {
        let tau = exp_time(rng, total);
        if eta > 0.0 {
            let d = model.drift * tau + eta * tau.sqrt() * normal(rng, false);
            let m = bridge_min(rng, d, eta * eta * tau);
            if u + m < 0.0 {
                return ParisianEnd::Ruined;
            }
            u += d;
        } else {
            u += model.drift * tau;
        }
        let pick: f64 = rng.gen::<f64>() * total;
        if pick < q {
            return ParisianEnd::Killed(u);
        } else if pick < q + r {
            if u > b {
                u = b;
            }
        } else {
            u -= sample_claim(rng, model);
            if u < 0.0 {
                return ParisianEnd::Ruined;
            }
        }
    }
}

/// E_x[e^{−qτ_0^-(r)}] as P(ruin before e_q) under Parisian reflection at b.
pub fn estimate_parisian_ruin(
    model: &LevyModel,
    q: f64,
    r: f64,
    b: f64,
    x0: f64,
    cfg: &PathConfig,
) -> Result<Estimate> {
    run_paths(cfg, |i| {
        let mut rng = rng_for(cfg.seed, i, 0);
        match parisian_path(model, q, r, b, x0, &mut rng) {
            ParisianEnd::Ruined => 1.0,
            ParisianEnd::Killed(_) => 0.0,
        }
    })
}

/// g̃^{(q)}(x0; h) = E_x[∫_0^{τ_0^-(r)} e^{−qt} h(U^b(t)) dt] = E[h(U(e_q)); e_q < τ]/q.
pub fn estimate_resolvent_g_tilde(
    model: &LevyModel,
    q: f64,
    r: f64,
    b: f64,
    x0: f64,
    h: &StepLinear,
    cfg: &PathConfig,
) -> Result<Estimate> {
    run_paths(cfg, |i| {
        let mut rng = rng_for(cfg.seed, i, 0);
        match parisian_path(model, q, r, b, x0, &mut rng) {
            ParisianEnd::Ruined => 0.0,
            ParisianEnd::Killed(u) => h.eval(u) / q,
        }
    })
}

/// g^{(q)}(x0; h) for the doubly reflected process, as E[h(U(e_q))]/q.
pub fn estimate_resolvent_g(
    model: &LevyModel,
    q: f64,
    r: f64,
    b: f64,
    x0: f64,
    h: &StepLinear,
    cfg: &PathConfig,
) -> Result<Estimate> {
    let eta = model.volatility;
    let etaj = model.jump_rate;
    let total = q + r + etaj;
    run_paths(cfg, |i| {
        let mut rng = rng_for(cfg.seed, i, 0);
        let mut u = x0.max(0.0);
        loop {
            let tau = exp_time(&mut rng, total);
            if eta > 0.0 {
                let d = model.drift * tau + eta * tau.sqrt() * normal(&mut rng, false);
                let m = bridge_min(&mut rng, d, eta * eta * tau);
                let deficit = -(u + m);
                u = if deficit > 0.0 { u + d + deficit } else { u + d };
            } else {
                u += model.drift * tau;
            }
            let pick: f64 = rng.gen::<f64>() * total;
            if pick < q {
                return h.eval(u) / q;
            } else if pick < q + r {
                if u > b {
                    u = b;
                }
            } else {
                u -= sample_claim(&mut rng, model);
                if u < 0.0 {
                    u = 0.0;
                }
            }
        }
    })
}

// ---------------------------------------------------------------------------
// reflected-at-0 process Y (no upper control)
// ---------------------------------------------------------------------------

/// E_x[∫_0^∞ e^{−qt} h(Y(t)) dt] = E[h(Y(e_q))]/q.
pub fn estimate_reflected_resolvent(
    model: &LevyModel,
    q: f64,
    x0: f64,
    h: &StepLinear,
    cfg: &PathConfig,
) -> Result<Estimate> {
    let eta = model.volatility;
    let etaj = model.jump_rate;
    let total = q + etaj;
    run_paths(cfg, |i| {
        let mut rng = rng_for(cfg.seed, i, 0);
        let mut u = x0.max(0.0);
        loop {
            let tau = exp_time(&mut rng, total);
            if eta > 0.0 {
                let d = model.drift * tau + eta * tau.sqrt() * normal(&mut rng, false);
                let m = bridge_min(&mut rng, d, eta * eta * tau);
                let deficit = -(u + m);
                u = if deficit > 0.0 { u + d + deficit } else { u + d };
            } else {
                u += model.drift * tau;
            }
            let pick: f64 = rng.gen::<f64>() * total;
            if pick < q {
                return h.eval(u) / q;
            }
            u -= sample_claim(&mut rng, model);
            if u < 0.0 {
                u = 0.0;
            }
        }
    })
}

/// E_x[∫_0^{κ_b^+} e^{−qt} h(Y(t)) dt]: reflected at 0, stopped at the first
/// passage above b; substep-paired like the two-sided estimator.
pub fn estimate_reflected_resolvent_to(
    model: &LevyModel,
    q: f64,
    b: f64,
    x0: f64,
    h: &StepLinear,
    cfg: &PathConfig,
) -> Result<PairedEstimate> {
    if !(0.0..=b).contains(&x0) {
        return Err(CoreError::Domain("need 0 <= x0 <= b".into()));
    }
    cfg.validate()?;
    let eta = model.volatility;
    let etaj = model.jump_rate;
    let total = q + etaj;
    let dt = cfg.resolved_dt(q)?;
    let outcomes: Vec<(f64, f64)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, i, 0);
            let mut det_c = rng_for(cfg.seed, i, 1);
            let mut det_f = rng_for(cfg.seed, i, 2);
            let mut res_c: Option<f64> = None;
            let mut res_f: Option<f64> = None;
            // separate reflected states per resolution, shared raw increments
            let mut uc = x0;
            let mut uf = x0;
            if x0 >= b {
                return (0.0, 0.0);
            }
            'path: loop {
                let tau = exp_time(&mut rng, total);
                if eta > 0.0 {
                    let n_half = ((tau / dt).ceil() as usize).max(1);
                    let h_sub = tau / (2 * n_half) as f64;
                    for _ in 0..n_half {
                        let mut d_pair = 0.0;
                        for _ in 0..2 {
                            let d = model.drift * h_sub
                                + eta * h_sub.sqrt() * normal(&mut rng, false);
                            d_pair += d;
                            if res_f.is_none() {
                                let (next, crossed) = reflect_step(
                                    &mut det_f,
                                    uf,
                                    d,
                                    b,
                                    eta * eta * h_sub,
                                );
                                if crossed {
                                    res_f = Some(0.0);
                                } else {
                                    uf = next;
                                }
                            }
                        }
                        if res_c.is_none() {
                            let (next, crossed) = reflect_step(
                                &mut det_c,
                                uc,
                                d_pair,
                                b,
                                eta * eta * 2.0 * h_sub,
                            );
                            if crossed {
                                res_c = Some(0.0);
                            } else {
                                uc = next;
                            }
                        }
                        if res_c.is_some() && res_f.is_some() {
                            break 'path;
                        }
                    }
                } else {
                    let t_hit = (b - uc.min(uf)) / model.drift;
                    if t_hit <= tau {
                        res_c.get_or_insert(0.0);
                        res_f.get_or_insert(0.0);
                        break 'path;
                    }
                    uc += model.drift * tau;
                    uf += model.drift * tau;
                }
                let pick: f64 = rng.gen::<f64>() * total;
                if pick < q {
                    if res_c.is_none() {
                        res_c = Some(h.eval(uc) / q);
                    }
                    if res_f.is_none() {
                        res_f = Some(h.eval(uf) / q);
                    }
                    break 'path;
                }
                let xi = sample_claim(&mut rng, model);
                uc = (uc - xi).max(0.0);
                uf = (uf - xi).max(0.0);
            }
            (res_c.unwrap_or(0.0), res_f.unwrap_or(0.0))
        })
        .collect();
    let coarse: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let fine: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    Ok(PairedEstimate {
        at_dt: Estimate::from_samples(&coarse),
        at_half_dt: Estimate::from_samples(&fine),
    })
}

/// One reflected substep: applies the bridge minimum for the reflection at 0
/// and tests the upper crossing; returns (next state, crossed_above).
fn reflect_step(rng: &mut ChaCha8Rng, u0: f64, d: f64, b: f64, var: f64) -> (f64, bool) {
    let m = bridge_min(rng, d, var);
    let deficit = -(u0 + m);
    let u1 = if deficit > 0.0 { u0 + d + deficit } else { u0 + d };
    if u1 >= b {
        return (u1, true);
    }
    let p_hi = (-2.0 * (b - u0).max(0.0) * (b - u1) / var).exp();
    let pick: f64 = rng.gen::<f64>();
    (u1, pick < p_hi)
}

// ---------------------------------------------------------------------------
// regime-switching controlled process
// ---------------------------------------------------------------------------

/// One exponential-kill path of the Markov-modulated controlled process under
/// the barrier policy b; the kill rate follows the current state's discount.
fn regime_kill_path(
    m: &RegimeModel,
    b: &[f64],
    x0: f64,
    i0: usize,
    rng: &mut ChaCha8Rng,
) -> PathOutcome {
    let r = m.decision_rate();
    let mut out = PathOutcome::default();
    let mut u = x0;
    let mut state = i0;
    if u < 0.0 {
        out.injections += -u;
        u = 0.0;
    }
    loop {
        let model = &m.state(state).model;
        let q_i = m.state(state).discount;
        let lam_i = m.switch_rate(state);
        let eta = model.volatility;
        let etaj = model.jump_rate;
        let total = q_i + r + etaj + lam_i;
        let tau = exp_time(rng, total);
        if eta > 0.0 {
            let d = model.drift * tau + eta * tau.sqrt() * normal(rng, false);
            let mn = bridge_min(rng, d, eta * eta * tau);
            let deficit = -(u + mn);
            if deficit > 0.0 {
                out.injections += deficit;
                u = u + d + deficit;
            } else {
                u += d;
            }
        } else {
            u += model.drift * tau;
        }
        let pick: f64 = rng.gen::<f64>() * total;
        if pick < q_i {
            out.terminal_state = u;
            return out;
        } else if pick < q_i + r {
            if u > b[state] {
                out.dividends += u - b[state];
                u = b[state];
            }
        } else if pick < q_i + r + etaj {
            u -= sample_claim(rng, model);
            if u < 0.0 {
                out.injections += -u;
                u = 0.0;
            }
        } else {
            // regime switch
            let mut pick_j: f64 = rng.gen::<f64>() * lam_i;
            let mut j = usize::MAX;
            for cand in 0..m.n_states() {
                if cand == state {
                    continue;
                }
                let lij = m.generator()[state][cand];
                if pick_j < lij {
                    j = cand;
                    break;
                }
                pick_j -= lij;
            }
            if j == usize::MAX {
                j = (0..m.n_states()).rev().find(|&c| c != state).unwrap();
            }
            let jump = sample_switch_jump(rng, m.jump(state, j));
            u += jump;
            if u < 0.0 {
                out.injections += -u;
                u = 0.0;
            }
            state = j;
        }
    }
}

/// Simulates the Markov-modulated policy π^{0,b} and returns per-path
/// functionals (exponential-kill discounting).
pub fn simulate_controlled_regime(
    m: &RegimeModel,
    b: &[f64],
    x0: f64,
    i0: usize,
    cfg: &PathConfig,
) -> Result<Vec<PathOutcome>> {
    cfg.validate()?;
    if b.len() != m.n_states() || i0 >= m.n_states() {
        return Err(CoreError::Domain("barrier vector/state mismatch".into()));
    }
    Ok((0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, i, 0);
            regime_kill_path(m, b, x0, i0, &mut rng)
        })
        .collect())
}

/// V_{π^{0,b}}(x0, i0) by simulation.
pub fn estimate_regime_value(
    m: &RegimeModel,
    b: &[f64],
    x0: f64,
    i0: usize,
    cfg: &PathConfig,
) -> Result<Estimate> {
    let beta = m.injection_cost();
    if b.len() != m.n_states() || i0 >= m.n_states() {
        return Err(CoreError::Domain("barrier vector/state mismatch".into()));
    }
    run_paths(cfg, |i| {
        let mut rng = rng_for(cfg.seed, i, 0);
        regime_kill_path(m, b, x0, i0, &mut rng).value(beta)
    })
}

/// One-switch localized value: dividends − β·injections until the first
/// regime switch, plus the discounted continuation read from V. Checks the
/// dynamic-programming decomposition V = T_{b} V path-wise.
pub fn estimate_one_switch_value(
    m: &RegimeModel,
    v: &ValueIterate,
    b_i: f64,
    x0: f64,
    i0: usize,
    cfg: &PathConfig,
) -> Result<Estimate> {
    if i0 >= m.n_states() {
        return Err(CoreError::Domain("state out of range".into()));
    }
    let beta = m.injection_cost();
    let q_i = m.state(i0).discount;
    let lam_i = m.switch_rate(i0);
    let theta_i = q_i + lam_i;
    let r = m.decision_rate();
    let model = m.state(i0).model.clone();
    let eta = model.volatility;
    let etaj = model.jump_rate;
    let total = theta_i + r + etaj;
    run_paths(cfg, |pidx| {
        let mut rng = rng_for(cfg.seed, pidx, 0);
        let mut u = x0;
        let mut value = 0.0;
        if u < 0.0 {
            value -= beta * (-u);
            u = 0.0;
        }
        loop {
            let tau = exp_time(&mut rng, total);
            if eta > 0.0 {
                let d = model.drift * tau + eta * tau.sqrt() * normal(&mut rng, false);
                let mn = bridge_min(&mut rng, d, eta * eta * tau);
                let deficit = -(u + mn);
                if deficit > 0.0 {
                    value -= beta * deficit;
                    u = u + d + deficit;
                } else {
                    u += d;
                }
            } else {
                u += model.drift * tau;
            }
            let pick: f64 = rng.gen::<f64>() * total;
            if pick < theta_i {
                // kill: with weight λ_i/θ_i the epoch is the regime switch
                let mut pick_j: f64 = rng.gen::<f64>() * lam_i.max(1e-300);
                let mut j = usize::MAX;
                for cand in 0..m.n_states() {
                    if cand == i0 {
                        continue;
                    }
                    let lij = m.generator()[i0][cand];
                    if pick_j < lij {
                        j = cand;
                        break;
                    }
                    pick_j -= lij;
                }
                if j == usize::MAX {
                    j = (0..m.n_states()).rev().find(|&c| c != i0).unwrap();
                }
                let jump = sample_switch_jump(&mut rng, m.jump(i0, j));
                let landed = u + jump;
                let cont = if landed < 0.0 {
                    beta * landed + v.eval(j, 0.0)
                } else {
                    v.eval(j, landed)
                };
                return value + lam_i / theta_i * cont;
            } else if pick < theta_i + r {
                if u > b_i {
                    value += u - b_i;
                    u = b_i;
                }
            } else {
                u -= sample_claim(&mut rng, &model);
                if u < 0.0 {
                    value -= beta * (-u);
                    u = 0.0;
                }
            }
        }
    })
}

// ---------------------------------------------------------------------------
// reporting
// ---------------------------------------------------------------------------

/// One row of the per-run CSV emitted by the oracle.
#[derive(Debug, Clone)]
pub struct CsvRow {
    pub quantity: String,
    pub x0: f64,
    pub state: usize,
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub formula_value: f64,
    pub z_score: f64,
}

impl CsvRow {
    pub fn new(quantity: &str, x0: f64, state: usize, est: &Estimate, formula: f64) -> Self {
        CsvRow {
            quantity: quantity.to_string(),
            x0,
            state,
            mean: est.mean,
            std_error: est.std_error,
            n_paths: est.n,
            formula_value: formula,
            z_score: est.z_score(formula),
        }
    }
}

pub const CSV_HEADER: &str = "quantity,x0,state,mean,std_error,n_paths,formula_value,z_score";


pub fn write_csv<W: Write>(out: &mut W, rows: &[CsvRow]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.quantity, r.x0, r.state, r.mean, r.std_error, r.n_paths, r.formula_value, r.z_score
        )?;
    }
    Ok(())
}
