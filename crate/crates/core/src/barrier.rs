//! Single-regime solver: the expected NPV v_b of the periodic-classical
//! reflection strategy with terminal payoff, its derivatives, the resolvents
//! of the controlled processes, the root function G and the optimal barrier.
//!
//! All values are assembled from the exponential-sum scale calculus. For
//! x ≥ b the growing Φ(θ+r) mode must cancel across the assembled terms; the
//! builder verifies the cancellation and removes the residual symbolically.

use crate::exppoly::ExpPoly;
use crate::levy::{CoreError, LevyModel, PathClass, Result};
use crate::piecewise::{PayoffFn, PrefixTable, StepLinear, SuffixTable};
use crate::quad;
use crate::scale::ScalePair;

/// Relative tolerance for the Φ(θ+r)-mode cancellation check.
const PHI_MODE_TOL: f64 = 1e-7;

/// Single-regime control instance: discount q, terminal rate λ, decision
/// rate r, injection cost β > 1 and concave payoff w.
#[derive(Debug, Clone)]
pub struct AuxProblem {
    model: LevyModel,
    q: f64,
    lambda: f64,
    r: f64,
    beta: f64,
    payoff: PayoffFn,
    theta: f64,
    pair: ScalePair,
    w_prime: StepLinear,
}

impl AuxProblem {
    pub fn new(
        model: LevyModel,
        q: f64,
        terminal_rate: f64,
        decision_rate: f64,
        injection_cost: f64,
        payoff: PayoffFn,
    ) -> Result<Self> {
        if !(q > 0.0) {
            return Err(CoreError::InvalidProblem(format!(
                "discount must be positive, got {q}"
            )));
        }
        if terminal_rate < 0.0 {
            return Err(CoreError::InvalidProblem(format!(
                "terminal rate must be nonnegative, got {terminal_rate}"
            )));
        }
        if !(decision_rate > 0.0) {
            return Err(CoreError::InvalidProblem(format!(
                "decision rate must be positive, got {decision_rate}"
            )));
        }
        if !(injection_cost > 1.0) {
            return Err(CoreError::InvalidProblem(format!(
                "injection cost beta must exceed 1, got {injection_cost}"
            )));
        }
        payoff.validate(injection_cost)?;
        let theta = q + terminal_rate;
        let pair = ScalePair::new(&model, theta, decision_rate)?;
        let w_prime = payoff.derivative();
        Ok(AuxProblem {
            model,
            q,
            lambda: terminal_rate,
            r: decision_rate,
            beta: injection_cost,
            payoff,
            theta,
            pair,
            w_prime,
        })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }
    pub fn discount(&self) -> f64 {
        self.q
    }
    pub fn terminal_rate(&self) -> f64 {
        self.lambda
    }
    pub fn decision_rate(&self) -> f64 {
        self.r
    }
    pub fn injection_cost(&self) -> f64 {
        self.beta
    }
    pub fn payoff(&self) -> &PayoffFn {
        &self.payoff
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn pair(&self) -> &ScalePair {
        &self.pair
    }

    /// C¹_b of the dividend/injection NPV.
    pub fn c1_coeff(&self, b: f64) -> f64 {
        let z_b = self.pair.lo.z(b);
        let phi = self.pair.phi;
        self.r * (self.beta * z_b - 1.0) / (self.theta * phi * self.pair.z_phi(b))
            + self.beta / phi
    }

    /// Expected NPV of dividends minus β × injections (no terminal payoff).
    pub fn v_lr(&self, b: f64, x: f64) -> Result<f64> {
        Ok(self.build_value(b, 0.0)?.eval(x))
    }

    /// Expected NPV including the terminal payoff, v_b(x).
    pub fn v_b(&self, b: f64, x: f64) -> Result<f64> {
        Ok(self.value(b)?.eval(x))
    }

    /// Value evaluator at barrier b (dividends − β·injections + λ-payoff part).
    pub fn value(&self, b: f64) -> Result<AuxValue> {
        self.build_value(b, self.lambda)
    }

    /// v_b'(x), x ∉ {0, b} (continuous extension used at those points).
    pub fn v_b_prime(&self, b: f64, x: f64) -> Result<f64> {
        Ok(self.value(b)?.deriv(x))
    }

    /// v_b''(x); only for unbounded variation.
    pub fn v_b_2prime(&self, b: f64, x: f64) -> Result<f64> {
        if let PathClass::BoundedVariation { .. } = self.model.path_class() {
            return Err(CoreError::Unsupported(
                "second derivative requires paths of unbounded variation".into(),
            ));
        }
        Ok(self.value(b)?.second(x))
    }

    /// Root function G(b) = β·E_b[e^{−θτ_0^-(r)}] − 1 + λ·C̃^{(θ,r)}(b; w'_+).
    pub fn root_fn_g(&self, b: f64) -> f64 {
        self.beta * self.pair.ruin_laplace(b) - 1.0
            + self.lambda * self.pair.c_tilde(b, &self.w_prime)
    }

    /// b* = inf{b ≥ 0 : G(b) ≤ 0}; bisection on the nonincreasing G.
    pub fn optimal_barrier(&self) -> Result<f64> {
        if self.root_fn_g(0.0) <= 0.0 {
            return Ok(0.0);
        }
        let mut hi = 50.0 / self.pair.phi;
        let mut doublings = 0;
        while self.root_fn_g(hi) > 0.0 {
            hi *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return Err(CoreError::Numerical(
                    "no sign change found for the barrier root function".into(),
                ));
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if self.root_fn_g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // the upper end keeps G(b*) ≤ 0
        Ok(hi)
    }

    /// Solves for b*, builds the value function and runs the verification
    /// diagnostics (reported, never thrown).
    pub fn solve(&self) -> Result<AuxSolution> {
        let b_star = self.optimal_barrier()?;
        let value = self.value(b_star)?;
        let g_at_b = self.root_fn_g(b_star);
        let vp_left = value.deriv(b_star);
        let vp_right = value.deriv_above(b_star);
        let x_hi = b_star + 20.0 / self.pair.phi;
        let mut slope_violation = 0.0_f64;
        let n = 400;
        for i in 1..n {
            let x = x_hi * i as f64 / n as f64;
            let vp = value.deriv(x);
            let (lo_b, hi_b) = if x < b_star {
                (1.0, self.beta)
            } else {
                (0.0, 1.0)
            };
            slope_violation = slope_violation.max(lo_b - vp).max(vp - hi_b);
        }
        let hjb_sup = self.hjb_sup(&value, b_star, x_hi);
        Ok(AuxSolution {
            b_star,
            value,
            diagnostics: AuxDiagnostics {
                g_at_b_star: g_at_b,
                v_prime_at_b_star: vp_left,
                v_prime_continuity_gap: (vp_left - vp_right).abs(),
                slope_violation,
                hjb_sup_rel: hjb_sup,
            },
        })
    }

    fn hjb_sup(&self, value: &AuxValue, b: f64, x_hi: f64) -> f64 {
        let scale = self.theta * value.eval(b).abs().max(1.0);
        let mut sup: f64 = 0.0;
        let n = 120;
        for i in 1..n {
            let x = x_hi * i as f64 / n as f64;
            if (x - b).abs() < 1e-4 || x < 5e-3 {
                continue;
            }
            sup = sup.max(self.hjb_residual_of(b, &|y| value.eval(y), x).abs());
        }
        sup / scale
    }

    /// (𝓛−θ)v(x) + λw(x) for x < b, plus the reflection term r((x−b)+v(b)−v(x))
    /// for x > b; ≈ 0 when v = v_b. The generator acts by finite differences
    /// on the supplied function, keeping the check independent of the
    /// closed-form derivative path.
    pub fn hjb_residual(&self, b: f64, x: f64) -> Result<f64> {
        let v = self.value(b)?;
        Ok(self.hjb_residual_of(b, &|y| v.eval(y), x))
    }

    /// Same residual for an arbitrary candidate function on [0,∞) (extended
    /// below 0 by f(0) + βx).
    pub fn hjb_residual_of(&self, b: f64, f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
        let f0 = f(0.0);
        let ext = |y: f64| if y < 0.0 { f0 + self.beta * y } else { f(y) };
        let (zone_lo, zone_hi) = if x < b { (0.0, b) } else { (b, f64::INFINITY) };
        let h = (1e-3 * x.abs().max(1.0)).min(if b > 0.0 { b / 6.0 } else { 0.25 });
        let (fp, fpp) = fd_derivs(&ext, x, zone_lo, zone_hi, h);
        let eta = self.model.volatility;
        let mut gen = self.model.drift * fp + 0.5 * eta * eta * fpp;
        if self.model.jump_rate > 0.0 {
            let mut jump = -ext(x);
            for c in &self.model.jump_mix {
                let a = c.rate;
                // ∫_0^x v(x−z) a e^{−az} dz, split at the kinks z = x−b and z = x
                let mut splits = vec![0.0, x];
                if x > b && b > 0.0 {
                    splits.insert(1, x - b);
                }
                let mut inner = 0.0;
                for wpair in splits.windows(2) {
                    inner += quad::integrate(
                        |z| ext(x - z) * a * (-a * z).exp(),
                        wpair[0],
                        wpair[1],
                        1e-11,
                    );
                }
                // exact tail over z > x where v(x−z) = v0 + β(x−z)
                inner += (-a * x).exp() * (f0 - self.beta / a);
                jump += c.weight * inner;
            }
            gen += self.model.jump_rate * jump;
        }
        let mut res = gen - self.theta * ext(x) + self.lambda * self.payoff.eval(x);
        if x > b {
            res += self.r * ((x - b) + ext(b) - ext(x));
        }
        res
    }

    fn build_value(&self, b: f64, lambda: f64) -> Result<AuxValue> {
        if b < 0.0 {
            return Err(CoreError::Domain(format!("barrier must be >= 0, got {b}")));
        }
        let pair = &self.pair;
        let theta = self.theta;
        let psi0 = self.model.mean_drift();
        let c1 = self.c1_coeff(b);
        let w_step = self.payoff.as_step_linear();

        let a_res = if lambda > 0.0 {
            pair.a_g(b, w_step)
        } else {
            0.0
        };
        let c_w = if lambda > 0.0 {
            a_res * pair.lo.z(b) - pair.lo.rho(b, b, w_step)
        } else {
            0.0
        };

        // zone A: (−C¹ + λA)·Z(x) + β·Z̄(x) + β ψ'(0+)/θ − λ·ρ_b(x; w)
        let mut poly_a = pair.lo.z_poly().scaled(-c1 + lambda * a_res);
        poly_a.add_assign(&pair.lo.zbar_poly(), self.beta);
        poly_a.push(0.0, 0, self.beta * psi0 / theta);
        let rho_a = if lambda > 0.0 {
            Some(ExpPrefix::new(
                pair.lo.roots().to_vec(),
                pair.lo.coefs().to_vec(),
                w_step.clone(),
            ))
        } else {
            None
        };

        // zone B, in u = x − b
        let mut phi_sum = 0.0_f64;
        let mut phi_scale = 0.0_f64;
        let mut poly_b = ExpPoly::zero();
        let mut add_part = |poly_b: &mut ExpPoly, mut part: ExpPoly, weight: f64| {
            if weight == 0.0 {
                return;
            }
            if let Some(cv) = part.take_rate(pair.phi) {
                phi_sum += weight * cv[0];
                phi_scale += (weight * cv[0]).abs();
                for &c in &cv[1..] {
                    phi_sum += 0.0 * c;
                    phi_scale += (weight * c).abs();
                }
            }
            poly_b.add_assign(&part, weight);
        };

        let z_qr = pair.composite_above(&pair.lo.basis_z(), b);
        let zbar_qr = pair.composite_above(&pair.lo.basis_zbar(), b);
        let wbar_hi = wbar_poly_of(pair);
        let wbarbar_hi = wbarbar_poly_of(pair);
        add_part(&mut poly_b, z_qr.clone(), -c1 + lambda * a_res);
        add_part(&mut poly_b, wbar_hi.clone(), self.r * c1 * pair.lo.z(b));
        add_part(&mut poly_b, wbarbar_hi, -self.r);
        add_part(&mut poly_b, zbar_qr, self.beta);
        add_part(
            &mut poly_b,
            wbar_hi.clone(),
            -self.beta * self.r * pair.lo.zbar(b),
        );
        poly_b.push(0.0, 0, self.beta * psi0 / theta);
        let mut tw = None;
        if lambda > 0.0 {
            let rho_qr = pair.composite_above(&pair.rho_basis(b, w_step), b);
            add_part(&mut poly_b, rho_qr, -lambda);
            add_part(&mut poly_b, wbar_hi, -lambda * self.r * c_w);
            // −λ T_w(u): prefix on the sub-Φ modes, suffix for the Φ mode
            let (prefix, d_top, k_inf, suffix) = t_w_parts(pair, b, w_step);
            phi_sum += -lambda * d_top * k_inf;
            phi_scale += (lambda * d_top * k_inf).abs();
            tw = Some(TwPart {
                prefix,
                suffix,
                d_top,
                lambda,
            });
        }

        let tol = PHI_MODE_TOL * phi_scale.max(1e-12);
        if phi_sum.abs() > tol {
            return Err(CoreError::Numerical(format!(
                "growing-mode cancellation failed: residual {phi_sum:.3e} vs scale {phi_scale:.3e}"
            )));
        }
        poly_b.prune(0.0);

        let v0 = poly_a.eval(0.0);
        Ok(AuxValue {
            b,
            beta: self.beta,
            lambda,
            poly_a,
            rho_a,
            poly_b,
            tw,
            v0,
            phi_residual: phi_sum.abs() / phi_scale.max(1e-300),
        })
    }
}

/// W̄^{(θ+r)} as an ExpPoly in u.
fn wbar_poly_of(pair: &ScalePair) -> ExpPoly {
    let mut p = ExpPoly::zero();
    for (&m, &d) in pair.hi.roots().iter().zip(pair.hi.coefs()) {
        p.push(m, 0, d / m);
        p.push(0.0, 0, -d / m);
    }
    p
}

/// W̄̄^{(θ+r)} as an ExpPoly in u.
fn wbarbar_poly_of(pair: &ScalePair) -> ExpPoly {
    let mut p = ExpPoly::zero();
    for (&m, &d) in pair.hi.roots().iter().zip(pair.hi.coefs()) {
        p.push(m, 0, d / (m * m));
        p.push(0.0, 0, -d / (m * m));
        p.push(0.0, 1, -d / m);
    }
    p
}

/// Prefix evaluator Σ_j c_j e^{r_j t} H_j(t) with H_j(t) = ∫_0^t e^{−r_j s} h(s) ds.
#[derive(Debug, Clone)]
struct ExpPrefix {
    rates: Vec<f64>,
    coefs: Vec<f64>,
    table: PrefixTable,
    h: StepLinear,
    hp: StepLinear,
    sum_c: f64,
    sum_cl: f64,
}

impl ExpPrefix {
    fn new(rates: Vec<f64>, coefs: Vec<f64>, h: StepLinear) -> Self {
        let table = PrefixTable::build(&h, &rates);
        let sum_c = coefs.iter().sum();
        let sum_cl = rates.iter().zip(&coefs).map(|(&r, &c)| r * c).sum();
        let hp = h.slope_fn();
        ExpPrefix {
            rates,
            coefs,
            table,
            h,
            hp,
            sum_c,
            sum_cl,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.rates
            .iter()
            .zip(&self.coefs)
            .enumerate()
            .map(|(j, (&r, &c))| c * (r * t).exp() * self.table.eval(j, t))
            .sum()
    }

    fn deriv(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let s: f64 = self
            .rates
            .iter()
            .zip(&self.coefs)
            .enumerate()
            .map(|(j, (&r, &c))| c * r * (r * t).exp() * self.table.eval(j, t))
            .sum();
        s + self.h.eval(t) * self.sum_c
    }

    fn second(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let s: f64 = self
            .rates
            .iter()
            .zip(&self.coefs)
            .enumerate()
            .map(|(j, (&r, &c))| c * r * r * (r * t).exp() * self.table.eval(j, t))
            .sum();
        s + self.h.eval(t) * self.sum_cl + self.hp.eval(t) * self.sum_c
    }
}

/// The −λ·T_w block of the zone-B value: sub-Φ prefix modes plus the suffix
/// transform that replaces the Φ mode.
#[derive(Debug, Clone)]
struct TwPart {
    prefix: ExpPrefix,
    suffix: SuffixTable,
    d_top: f64,
    lambda: f64,
}

/// Splits T_w(u) = Σ_i d_i e^{μ_i u} K_i(u): returns the sub-Φ prefix, the top
/// coefficient d_Φ, K_Φ(∞) and the suffix table S(x) = ∫_0^∞ e^{−Φt} w(x+t) dt.
fn t_w_parts(pair: &ScalePair, b: f64, w: &StepLinear) -> (ExpPrefix, f64, f64, SuffixTable) {
    let mu = pair.hi.roots();
    let d = pair.hi.coefs();
    let top = mu.len() - 1;
    let rates: Vec<f64> = mu[..top].to_vec();
    let coefs: Vec<f64> = d[..top].to_vec();
    let w_shift = w.shift_left(b);
    let prefix = ExpPrefix::new(rates, coefs, w_shift);
    let d_top = d[top];
    let k_inf = w.shifted_exp_tail(pair.phi, b);
    let suffix = SuffixTable::build(w, pair.phi);
    (prefix, d_top, k_inf, suffix)
}

/// Grid-free evaluator of v_b with its first two derivatives.
#[derive(Debug, Clone)]
pub struct AuxValue {
    b: f64,
    beta: f64,
    lambda: f64,
    poly_a: ExpPoly,
    rho_a: Option<ExpPrefix>,
    poly_b: ExpPoly,
    tw: Option<TwPart>,
    v0: f64,
    phi_residual: f64,
}

impl AuxValue {
    pub fn barrier(&self) -> f64 {
        self.b
    }

    pub fn at_zero(&self) -> f64 {
        self.v0
    }

    /// Relative residual of the growing-mode cancellation, for diagnostics.
    pub fn phi_residual(&self) -> f64 {
        self.phi_residual
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return self.v0 + self.beta * x;
        }
        if x <= self.b {
            let mut v = self.poly_a.eval(x);
            if let Some(rho) = &self.rho_a {
                v -= self.lambda * rho.eval(x);
            }
            v
        } else {
            self.eval_above(x)
        }
    }

    fn eval_above(&self, x: f64) -> f64 {
        let u = x - self.b;
        let mut v = self.poly_b.eval(u);
        if let Some(tw) = &self.tw {
            v -= tw.lambda * tw.prefix.eval(u);
            v += tw.lambda * tw.d_top * tw.suffix.eval(x);
        }
        v
    }

    pub fn deriv(&self, x: f64) -> f64 {
        if x < 0.0 {
            return self.beta;
        }
        if x <= self.b {
            let mut v = self.poly_a.deriv().eval(x);
            if let Some(rho) = &self.rho_a {
                v -= self.lambda * rho.deriv(x);
            }
            v
        } else {
            self.deriv_above(x)
        }
    }

    pub(crate) fn deriv_above(&self, x: f64) -> f64 {
        let u = x - self.b;
        let mut v = self.poly_b.deriv().eval(u);
        if let Some(tw) = &self.tw {
            v -= tw.lambda * tw.prefix.deriv(u);
            // S'(x) = Φ S(x) − w(x): Φ appears through the suffix table itself
            v += tw.lambda * tw.d_top * self.suffix_deriv(tw, x);
        }
        v
    }

    fn suffix_deriv(&self, tw: &TwPart, x: f64) -> f64 {
        // SuffixTable stores φ internally; reconstruct S' from S and w
        tw.suffix.phi() * tw.suffix.eval(x) - tw.suffix.source().eval(x)
    }

    pub fn second(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x <= self.b {
            let mut v = self.poly_a.deriv().deriv().eval(x);
            if let Some(rho) = &self.rho_a {
                v -= self.lambda * rho.second(x);
            }
            v
        } else {
            let u = x - self.b;
            let mut v = self.poly_b.deriv().deriv().eval(u);
            if let Some(tw) = &self.tw {
                v -= tw.lambda * tw.prefix.second(u);
                let sp = self.suffix_deriv(tw, x);
                let wp = tw.suffix.source().slope_fn().eval(x);
                v += tw.lambda * tw.d_top * (tw.suffix.phi() * sp - wp);
            }
            v
        }
    }
}

/// Verification diagnostics attached to a solved problem.
#[derive(Debug, Clone)]
pub struct AuxDiagnostics {
    pub g_at_b_star: f64,
    pub v_prime_at_b_star: f64,
    pub v_prime_continuity_gap: f64,
    pub slope_violation: f64,
    pub hjb_sup_rel: f64,
}

#[derive(Debug, Clone)]
pub struct AuxSolution {
    pub b_star: f64,
    pub value: AuxValue,
    pub diagnostics: AuxDiagnostics,
}

/// Which controlled process a resolvent refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reflection {
    /// Parisian reflection above b and classical reflection at 0 (g).
    Doubly,
    /// Parisian reflection above b only, killed at the first passage below 0 (g̃).
    ParisianOnly,
}

/// Resolvent evaluator x ↦ E_x[∫ e^{−qt} h(U(t)) dt] for either process.
#[derive(Debug, Clone)]
pub struct ResolventEval {
    kind: Reflection,
    b: f64,
    a_coef: f64,
    pair_lo_z0: f64,
    roots: Vec<f64>,
    coefs: Vec<f64>,
    z_exp: Vec<f64>,
    rho_a: ExpPrefix,
    poly_b: ExpPoly,
    tw: TwPart,
}

impl ResolventEval {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.b {
            // A·F(x) − ρ_b(x; h) with F = Z (doubly) or W (Parisian only)
            let f = match self.kind {
                Reflection::Doubly => {
                    if x <= 0.0 {
                        1.0
                    } else {
                        self.pair_lo_z0
                            + self
                                .roots
                                .iter()
                                .zip(&self.z_exp)
                                .map(|(&l, &e)| e * (l * x).exp())
                                .sum::<f64>()
                    }
                }
                Reflection::ParisianOnly => {
                    // W(0+) > 0 for bounded variation: ruin from 0 is not immediate
                    if x < 0.0 {
                        0.0
                    } else {
                        self.roots
                            .iter()
                            .zip(&self.coefs)
                            .map(|(&l, &c)| c * (l * x).exp())
                            .sum()
                    }
                }
            };
            self.a_coef * f - self.rho_a.eval(x.min(self.b).max(0.0))
        } else {
            let u = x - self.b;
            let mut v = self.poly_b.eval(u);
            v -= self.tw.prefix.eval(u);
            v += self.tw.d_top * self.tw.suffix.eval(x);
            v
        }
    }
}

/// Builds the resolvent g^{(q)}(·; h) (doubly reflected) or g̃^{(q)}(·; h)
/// (Parisian only, up to the first downcrossing of 0) at threshold b.
pub fn resolvent(
    pair: &ScalePair,
    b: f64,
    h: &StepLinear,
    kind: Reflection,
) -> Result<ResolventEval> {
    let a_coef = match kind {
        Reflection::Doubly => pair.a_g(b, h),
        Reflection::ParisianOnly => pair.a_gt(b, h),
    };
    let c_const = match kind {
        Reflection::Doubly => a_coef * pair.lo.z(b) - pair.lo.rho(b, b, h),
        Reflection::ParisianOnly => pair.c_tilde(b, h),
    };
    let mut phi_sum = 0.0_f64;
    let mut phi_scale = 0.0_f64;
    let mut poly_b = ExpPoly::zero();
    let mut add_part = |poly_b: &mut ExpPoly, mut part: ExpPoly, weight: f64| {
        if weight == 0.0 {
            return;
        }
        if let Some(cv) = part.take_rate(pair.phi) {
            phi_sum += weight * cv[0];
            phi_scale += (weight * cv[0]).abs();
        }
        poly_b.add_assign(&part, weight);
    };
    let base = match kind {
        Reflection::Doubly => pair.lo.basis_z(),
        Reflection::ParisianOnly => pair.lo.basis_w(),
    };
    add_part(&mut poly_b, pair.composite_above(&base, b), a_coef);
    add_part(&mut poly_b, pair.composite_above(&pair.rho_basis(b, h), b), -1.0);
    add_part(&mut poly_b, wbar_poly_of(pair), -pair.r * c_const);
    let (prefix, d_top, k_inf, suffix) = t_w_parts(pair, b, h);
    phi_sum -= d_top * k_inf;
    phi_scale += (d_top * k_inf).abs();
    let tol = PHI_MODE_TOL * phi_scale.max(1e-12);
    if phi_sum.abs() > tol {
        return Err(CoreError::Numerical(format!(
            "resolvent growing-mode residual {phi_sum:.3e} vs scale {phi_scale:.3e}"
        )));
    }
    let rho_a = ExpPrefix::new(pair.lo.roots().to_vec(), pair.lo.coefs().to_vec(), h.clone());
    Ok(ResolventEval {
        kind,
        b,
        a_coef,
        pair_lo_z0: pair.lo.z0(),
        roots: pair.lo.roots().to_vec(),
        coefs: pair.lo.coefs().to_vec(),
        z_exp: pair
            .lo
            .roots()
            .iter()
            .zip(pair.lo.coefs())
            .map(|(&l, &c)| pair.lo.q() * c / l)
            .collect(),
        rho_a,
        poly_b,
        tw: TwPart {
            prefix,
            suffix,
            d_top,
            lambda: 1.0,
        },
    })
}

/// Convenience wrappers matching the operation names.
pub fn resolvent_g(pair: &ScalePair, b: f64, x: f64, h: &StepLinear) -> Result<f64> {
    Ok(resolvent(pair, b, h, Reflection::Doubly)?.eval(x))
}

pub fn resolvent_g_tilde(pair: &ScalePair, b: f64, x: f64, h: &StepLinear) -> Result<f64> {
    Ok(resolvent(pair, b, h, Reflection::ParisianOnly)?.eval(x))
}

/// First and second derivative of f at x from a 5-point polynomial fit whose
/// nodes stay inside the smoothness zone (lo, hi).
pub fn fd_derivs(f: &dyn Fn(f64) -> f64, x: f64, lo: f64, hi: f64, h0: f64) -> (f64, f64) {
    let mut h = h0;
    if hi.is_finite() && hi - lo < 6.0 * h {
        h = (hi - lo) / 6.0;
    }
    let mut left = x - 2.0 * h;
    if left < lo {
        left = lo + 1e-12 * (1.0 + lo.abs());
    }
    let mut right = left + 4.0 * h;
    if hi.is_finite() && right > hi {
        right = hi - 1e-12 * (1.0 + hi.abs());
        left = right - 4.0 * h;
    }
    let nodes: Vec<f64> = (0..5).map(|i| left + (right - left) * i as f64 / 4.0).collect();
    let fv: Vec<f64> = nodes.iter().map(|&z| f(z)).collect();
    // Lagrange differentiation at x
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for i in 0..5 {
        let mut denom = 1.0;
        for k in 0..5 {
            if k != i {
                denom *= nodes[i] - nodes[k];
            }
        }
        // ℓ_i'(x) and ℓ_i''(x)
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        for m in 0..5 {
            if m == i {
                continue;
            }
            let mut prod = 1.0;
            for k in 0..5 {
                if k != i && k != m {
                    prod *= x - nodes[k];
                }
            }
            l1 += prod;
            for n in 0..5 {
                if n == i || n == m {
                    continue;
                }
                let mut prod2 = 1.0;
                for k in 0..5 {
                    if k != i && k != m && k != n {
                        prod2 *= x - nodes[k];
                    }
                }
                l2 += prod2;
            }
        }
        d1 += fv[i] * l1 / denom;
        d2 += fv[i] * l2 / denom;
    }
    (d1, d2)
}
