//! q-scale functions and their calculus for the supported model family.
//!
//! With hyperexponential claims, ψ(λ) = q has only real simple roots — one per
//! bracketing interval between the mixture poles plus the right inverse Φ(q) —
//! so W^{(q)}(x) = Σ_j e^{λ_j x}/ψ'(λ_j) exactly, and every antiderivative,
//! shifted function Z^{(q)}(x, Φ(q+r)) and (q,r)-composite stays inside the
//! exponential-polynomial class. Growing modes that must cancel analytically
//! (the inner-rate modes of the composites, via 1 + r/(ψ(λ)−q−r) = 0 at roots
//! of ψ = q, and the Φ(q+r) mode killed by the resolvent constants) are
//! removed symbolically, never by floating-point subtraction, which keeps the
//! far field stable.

use crate::exppoly::ExpPoly;
use crate::levy::{CoreError, LevyModel, Result};
use crate::piecewise::StepLinear;

/// Gap below which two rates are treated as confluent and the pair term is
/// emitted as t·e^{λt} plus cubic corrections.
const CONFLUENT_GAP: f64 = 1e-6;

/// Exponential-sum view of a function a₀ + a₁·x + Σ_j e_j e^{λ_j x} on the
/// roots of ψ(λ) = q.
#[derive(Debug, Clone)]
pub struct QBasis {
    pub exp: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
}

/// A (model, q) pair with the cached root decomposition of W^{(q)}.
#[derive(Debug, Clone)]
pub struct ScaleContext {
    model: LevyModel,
    q: f64,
    phi_q: f64,
    /// ascending; the last entry is Φ(q)
    roots: Vec<f64>,
    /// coefs[j] = 1/ψ'(roots[j])
    coefs: Vec<f64>,
    sum_c_over_l: f64,
    sum_c_over_l2: f64,
}

fn bisect_root(model: &LevyModel, q: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    // ψ(lo) and ψ(hi) must straddle q
    let flo = model.psi_unchecked(lo) - q;
    let fhi = model.psi_unchecked(hi) - q;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(CoreError::Numerical(format!(
            "root bracket [{lo}, {hi}] does not straddle psi = {q}"
        )));
    }
    let tol = 1e-12 * q.max(1.0);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..300 {
        let f = model.psi_unchecked(x) - q;
        if f.abs() <= tol || (hi - lo) < 1e-15 * (1.0 + x.abs()) {
            return Ok(x);
        }
        if f.signum() == flo.signum() {
            lo = x;
        } else {
            hi = x;
        }
        // Newton step when it stays inside the bracket
        let fp = model.psi_prime(x);
        let newton = x - f / fp;
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}

/// All real roots of ψ(λ) = q, ascending, last one = Φ(q).
fn all_roots(model: &LevyModel, q: f64) -> Result<Vec<f64>> {
    let phi_q = model.phi(q)?;
    let mut alphas: Vec<f64> = model.jump_mix.iter().map(|c| c.rate).collect();
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut roots = Vec::new();
    let pole_eps = |a: f64| 1e-13 * a.max(1.0);
    // one root per interval: (−α_1, 0) and (−α_{k}, −α_{k−1}) for k ≥ 2;
    // ψ → +∞ approaching −α_k from the right, and either ψ(0) = 0 < q or
    // ψ → −∞ approaching −α_{k−1} from the left.
    for k in 0..alphas.len() {
        let mut lo = -alphas[k] + pole_eps(alphas[k]);
        while model.psi_unchecked(lo) < q {
            lo = -alphas[k] + 0.5 * (lo + alphas[k]);
            if lo + alphas[k] < 1e-300 {
                return Err(CoreError::Numerical("pole bracketing failed".into()));
            }
        }
        let mut hi_end = if k == 0 {
            -1e-300
        } else {
            -alphas[k - 1] - pole_eps(alphas[k - 1])
        };
        while k > 0 && model.psi_unchecked(hi_end) > q {
            hi_end = -alphas[k - 1] - 0.5 * (alphas[k - 1] + hi_end).abs().max(1e-300);
        }
        roots.push(bisect_root(model, q, lo, hi_end)?);
    }
    // unbounded variation: one more root left of −α_m (or of 0 when no jumps)
    if model.volatility > 0.0 {
        let left_pole = alphas.last().copied().unwrap_or(0.0);
        let mut lo = -left_pole - 1.0;
        for _ in 0..300 {
            if model.psi_unchecked(lo) >= q {
                break;
            }
            lo = -left_pole + 2.0 * (lo + left_pole);
        }
        let hi = if alphas.is_empty() {
            -1e-300
        } else {
            -left_pole - pole_eps(left_pole)
        };
        roots.push(bisect_root(model, q, lo, hi)?);
    }
    roots.push(phi_q);
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(roots)
}

impl ScaleContext {
    pub fn new(model: &LevyModel, q: f64) -> Result<Self> {
        if !(q > 0.0) {
            return Err(CoreError::Domain(format!(
                "scale context requires q > 0, got {q}"
            )));
        }
        let roots = all_roots(model, q)?;
        let coefs: Vec<f64> = roots.iter().map(|&l| 1.0 / model.psi_prime(l)).collect();
        let phi_q = *roots.last().unwrap();
        let sum_c_over_l: f64 = roots.iter().zip(&coefs).map(|(&l, &c)| c / l).sum();
        let sum_c_over_l2: f64 = roots.iter().zip(&coefs).map(|(&l, &c)| c / (l * l)).sum();
        let ctx = ScaleContext {
            model: model.clone(),
            q,
            phi_q,
            roots,
            coefs,
            sum_c_over_l,
            sum_c_over_l2,
        };
        // W(0+) must match the path class
        let w0: f64 = ctx.coefs.iter().sum();
        let expect = ctx.model.w_at_zero();
        if (w0 - expect).abs() > 1e-8 * (1.0 + expect.abs()) {
            return Err(CoreError::Numerical(format!(
                "root decomposition inconsistent: W(0+) = {w0}, expected {expect}"
            )));
        }
        Ok(ctx)
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn phi_q(&self) -> f64 {
        self.phi_q
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    pub fn coefs(&self) -> &[f64] {
        &self.coefs
    }

    fn exp_sum(&self, x: f64, map: impl Fn(f64, f64) -> f64) -> f64 {
        self.roots
            .iter()
            .zip(&self.coefs)
            .map(|(&l, &c)| map(l, c) * (l * x).exp())
            .sum()
    }

    /// W^{(q)}(x); zero on the negative half-line.
    pub fn w(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.exp_sum(x, |_, c| c)
    }

    /// e^{−damp·x} W^{(q)}(x), evaluated as Σ c_j e^{(λ_j−damp)x} so the
    /// product never overflows when W alone would.
    pub fn w_damped(&self, x: f64, damp: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.roots
            .iter()
            .zip(&self.coefs)
            .map(|(&l, &c)| c * ((l - damp) * x).exp())
            .sum()
    }

    /// W^{(q)'}(x) for x > 0.
    pub fn w_prime(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.exp_sum(x, |l, c| c * l)
    }

    /// ∫_0^x W^{(q)}.
    pub fn wbar(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.exp_sum(x, |l, c| c / l) - self.sum_c_over_l
    }

    /// ∫_0^x ∫_0^z W^{(q)}.
    pub fn wbarbar(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.exp_sum(x, |l, c| c / (l * l)) - self.sum_c_over_l2 - x * self.sum_c_over_l
    }

    /// Z^{(q)}(x) = 1 + q·W̄^{(q)}(x); equals 1 for x ≤ 0.
    pub fn z(&self, x: f64) -> f64 {
        1.0 + self.q * self.wbar(x)
    }

    /// Z̄^{(q)}(x) = x + q·W̄̄^{(q)}(x); equals x for x ≤ 0.
    pub fn zbar(&self, x: f64) -> f64 {
        x + self.q * self.wbarbar(x)
    }

    /// Constant part of Z in the root basis: Z(x) = z0 + Σ_j (q c_j/λ_j) e^{λ_j x}.
    pub fn z0(&self) -> f64 {
        1.0 - self.q * self.sum_c_over_l
    }

    pub fn basis_w(&self) -> QBasis {
        QBasis {
            exp: self.coefs.clone(),
            c0: 0.0,
            c1: 0.0,
        }
    }

    pub fn basis_z(&self) -> QBasis {
        QBasis {
            exp: self
                .roots
                .iter()
                .zip(&self.coefs)
                .map(|(&l, &c)| self.q * c / l)
                .collect(),
            c0: self.z0(),
            c1: 0.0,
        }
    }

    pub fn basis_zbar(&self) -> QBasis {
        QBasis {
            exp: self
                .roots
                .iter()
                .zip(&self.coefs)
                .map(|(&l, &c)| self.q * c / (l * l))
                .collect(),
            c0: -self.q * self.sum_c_over_l2,
            c1: self.z0(),
        }
    }

    /// ρ_b^{(q)}(x; h) = ∫_0^{b∧x} W^{(q)}(x−y) h(y) dy.
    pub fn rho(&self, b: f64, x: f64, h: &StepLinear) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let cut = b.min(x);
        self.roots
            .iter()
            .zip(&self.coefs)
            .map(|(&l, &c)| c * (l * x).exp() * h.exp_integral(l, 0.0, cut))
            .sum()
    }

    /// H_j(b) = ∫_0^b e^{−λ_j y} h(y) dy for every root.
    pub fn h_moments(&self, b: f64, h: &StepLinear) -> Vec<f64> {
        self.roots
            .iter()
            .map(|&l| h.exp_integral(l, 0.0, b))
            .collect()
    }

    /// W^{(q)} as an ExpPoly on x ≥ 0.
    pub fn w_poly(&self) -> ExpPoly {
        let mut p = ExpPoly::zero();
        for (&l, &c) in self.roots.iter().zip(&self.coefs) {
            p.push(l, 0, c);
        }
        p
    }

    pub fn z_poly(&self) -> ExpPoly {
        let b = self.basis_z();
        let mut p = ExpPoly::zero();
        p.push(0.0, 0, b.c0);
        for (&l, &e) in self.roots.iter().zip(&b.exp) {
            p.push(l, 0, e);
        }
        p
    }

    pub fn zbar_poly(&self) -> ExpPoly {
        let b = self.basis_zbar();
        let mut p = ExpPoly::zero();
        p.push(0.0, 0, b.c0);
        p.push(0.0, 1, b.c1);
        for (&l, &e) in self.roots.iter().zip(&b.exp) {
            p.push(l, 0, e);
        }
        p
    }
}

/// Contexts at q and q + r together with Φ(q+r); the carrier of every
/// (q,r)-composite and both Parisian resolvent constants.
#[derive(Debug, Clone)]
pub struct ScalePair {
    pub lo: ScaleContext,
    pub hi: ScaleContext,
    pub r: f64,
    pub phi: f64,
}

impl ScalePair {
    pub fn new(model: &LevyModel, q: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(CoreError::Domain(format!(
                "composite functions require r > 0, got {r}"
            )));
        }
        let lo = ScaleContext::new(model, q)?;
        let hi = ScaleContext::new(model, q + r)?;
        let phi = hi.phi_q();
        Ok(ScalePair { lo, hi, r, phi })
    }

    /// Z^{(q)}(x, Φ(q+r)) = r Σ_j c_j e^{λ_j x}/(Φ − λ_j) for x ≥ 0, e^{Φx} below.
    pub fn z_phi(&self, x: f64) -> f64 {
        if x < 0.0 {
            return (self.phi * x).exp();
        }
        self.r
            * self
                .lo
                .roots()
                .iter()
                .zip(self.lo.coefs())
                .map(|(&l, &c)| c * (l * x).exp() / (self.phi - l))
                .sum::<f64>()
    }

    /// ∂/∂x Z^{(q)}(x, Φ(q+r)) = Φ·Z^{(q)}(x,Φ) − r·W^{(q)}(x), in stable form.
    pub fn z_phi_prime(&self, x: f64) -> f64 {
        if x < 0.0 {
            return self.phi * (self.phi * x).exp();
        }
        self.r
            * self
                .lo
                .roots()
                .iter()
                .zip(self.lo.coefs())
                .map(|(&l, &c)| c * l * (l * x).exp() / (self.phi - l))
                .sum::<f64>()
    }

    /// Full composite F_b^{(q,r)}(x) for x ≥ b, as an ExpPoly in u = x − b,
    /// where F is the function with QBasis view `g` on the q-roots:
    /// F_b(x) = g(x) + r ∫_b^x W^{(q+r)}(x−y) g(y) dy.
    ///
    /// Inner-rate modes are cancelled symbolically: at a root of ψ = q the
    /// mode factor 1 + r/(ψ(λ)−q−r) vanishes exactly.
    pub fn composite_above(&self, g: &QBasis, b: f64) -> ExpPoly {
        let mu = self.hi.roots();
        let d = self.hi.coefs();
        let lam = self.lo.roots();
        let top = lam.len() - 1;
        let mut p = ExpPoly::zero();

        // rate-0 polynomial part: own (c0 + c1 b) + c1 u, plus its convolution
        let a0 = g.c0 + g.c1 * b;
        if a0 != 0.0 || g.c1 != 0.0 {
            p.push(0.0, 0, a0);
            p.push(0.0, 1, g.c1);
            for (&m, &dd) in mu.iter().zip(d) {
                // r·(a0)·W̄r(u): term d(e^{mu u}−1)/m
                p.push(m, 0, self.r * a0 * dd / m);
                p.push(0.0, 0, -self.r * a0 * dd / m);
                // r·c1·∫_0^u Wr(u−s)s ds = r·c1·d[e^{mu}−1−mu]/m²
                if g.c1 != 0.0 {
                    let k = self.r * g.c1 * dd / (m * m);
                    p.push(m, 0, k);
                    p.push(0.0, 0, -k);
                    p.push(0.0, 1, -k * m);
                }
            }
        }

        // exponential parts on the q-roots
        for (j, (&l, &a)) in lam.iter().zip(&g.exp).enumerate() {
            if a == 0.0 {
                continue;
            }
            let ab = a * (l * b).exp();
            if j == top {
                // growing mode: own + pair own-sides cancel exactly; keep boundaries
                for (&m, &dd) in mu.iter().zip(d) {
                    p.push(m, 0, self.r * ab * dd / (m - l));
                }
            } else {
                p.push(l, 0, ab);
                for (&m, &dd) in mu.iter().zip(d) {
                    let delta = l - m;
                    if delta.abs() >= CONFLUENT_GAP {
                        let k = self.r * ab * dd / delta;
                        p.push(l, 0, k);
                        p.push(m, 0, -k);
                    } else {
                        // expm1(δu)/δ ≈ u + δu²/2 + δ²u³/6
                        let k = self.r * ab * dd;
                        p.push(m, 1, k);
                        p.push(m, 2, k * delta / 2.0);
                        p.push(m, 3, k * delta * delta / 6.0);
                    }
                }
            }
        }
        p
    }

    /// W_b^{(q,r)}(x).
    pub fn w_qr(&self, b: f64, x: f64) -> f64 {
        if x <= b {
            self.lo.w(x)
        } else {
            self.composite_above(&self.lo.basis_w(), b).eval(x - b)
        }
    }

    /// Z_b^{(q,r)}(x).
    pub fn z_qr(&self, b: f64, x: f64) -> f64 {
        if x <= b {
            self.lo.z(x)
        } else {
            self.composite_above(&self.lo.basis_z(), b).eval(x - b)
        }
    }

    /// Z̄_b^{(q,r)}(x).
    pub fn zbar_qr(&self, b: f64, x: f64) -> f64 {
        if x <= b {
            self.lo.zbar(x)
        } else {
            self.composite_above(&self.lo.basis_zbar(), b).eval(x - b)
        }
    }

    /// ρ̂: the basis of ρ_b^{(q)}(y;h) on y ≥ b, i.e. coefficients c_j H_j(b).
    pub fn rho_basis(&self, b: f64, h: &StepLinear) -> QBasis {
        let hm = self.lo.h_moments(b, h);
        QBasis {
            exp: self
                .lo
                .coefs()
                .iter()
                .zip(&hm)
                .map(|(&c, &m)| c * m)
                .collect(),
            c0: 0.0,
            c1: 0.0,
        }
    }

    /// ρ_b^{(q,r)}(x; h).
    pub fn rho_r(&self, b: f64, x: f64, h: &StepLinear) -> f64 {
        if x <= b {
            self.lo.rho(b, x, h)
        } else {
            self.composite_above(&self.rho_basis(b, h), b).eval(x - b)
        }
    }

    /// Ξ^{(q,r)}(b; h) = ∫_0^∞ h(y+b) e^{−Φy} dy + r ∫_b^∞ e^{−Φ(y−b)} ρ_b^{(q)}(y;h) dy.
    pub fn xi(&self, b: f64, h: &StepLinear) -> f64 {
        let t1 = h.shifted_exp_tail(self.phi, b);
        let hm = self.lo.h_moments(b, h);
        let t2: f64 = self
            .lo
            .roots()
            .iter()
            .zip(self.lo.coefs())
            .zip(&hm)
            .map(|((&l, &c), &m)| c * m * (l * b).exp() / (self.phi - l))
            .sum();
        t1 + self.r * t2
    }

    /// (C^{(q,r)}(b;h) + ρ_b^{(q)}(b;h)) / Z^{(q)}(b)
    /// = (Φ·Ξ − r·ρ_b(b;h)) / (q·Z^{(q)}(b,Φ)), division-safe at every b ≥ 0.
    pub fn a_g(&self, b: f64, h: &StepLinear) -> f64 {
        self.stable_numerator(b, h) / (self.lo.q() * self.z_phi(b))
    }

    /// (C̃^{(q,r)}(b;h) + ρ_b^{(q)}(b;h)) / W^{(q)}(b)
    /// = (Φ·Ξ − r·ρ_b(b;h)) / Z^{(q)'}(b,Φ), division-safe at every b ≥ 0.
    pub fn a_gt(&self, b: f64, h: &StepLinear) -> f64 {
        self.stable_numerator(b, h) / self.z_phi_prime(b)
    }

    /// Φ·Ξ(b;h) − r·ρ_b(b;h) = Φ·T₁ + r Σ_j c_j e^{λ_j b} H_j(b) λ_j/(Φ−λ_j),
    /// with no large cancellations.
    fn stable_numerator(&self, b: f64, h: &StepLinear) -> f64 {
        let t1 = h.shifted_exp_tail(self.phi, b);
        let hm = self.lo.h_moments(b, h);
        let s: f64 = self
            .lo
            .roots()
            .iter()
            .zip(self.lo.coefs())
            .zip(&hm)
            .map(|((&l, &c), &m)| c * m * l * (l * b).exp() / (self.phi - l))
            .sum();
        self.phi * t1 + self.r * s
    }

    /// C^{(q,r)}(b; h), the boundary value g^{(q)}(b;h) of the doubly
    /// reflected resolvent.
    pub fn c_const(&self, b: f64, h: &StepLinear) -> f64 {
        self.a_g(b, h) * self.lo.z(b) - self.lo.rho(b, b, h)
    }

    /// C̃^{(q,r)}(b; h) = g̃^{(q)}(b;h), in a form stable for every b: the
    /// e^{2λ_top b} blocks of Ξ·W − ρ·Z^{(q)}(·,Φ) cancel pairwise.
    pub fn c_tilde(&self, b: f64, h: &StepLinear) -> f64 {
        let lam = self.lo.roots();
        let c = self.lo.coefs();
        let hm = self.lo.h_moments(b, h);
        let t1 = h.shifted_exp_tail(self.phi, b);
        let w_b = self.lo.w(b);
        let mut pairs = 0.0;
        for j in 0..lam.len() {
            for k in (j + 1)..lam.len() {
                let num = (hm[j] - hm[k]) * (lam[j] - lam[k]);
                pairs += c[j]
                    * c[k]
                    * ((lam[j] + lam[k]) * b).exp()
                    * num
                    / ((self.phi - lam[j]) * (self.phi - lam[k]));
            }
        }
        self.phi * (t1 * w_b + self.r * pairs) / self.z_phi_prime(b)
    }

    /// E_b[e^{−qτ_0^-(r)}] for the process Parisian-reflected at b, in the
    /// pairwise-cancelled form (Z z' − q W z)/z'.
    pub fn ruin_laplace(&self, b: f64) -> f64 {
        let lam = self.lo.roots();
        let c = self.lo.coefs();
        let q = self.lo.q();
        let z0 = self.lo.z0();
        let mut pairs = 0.0;
        for j in 0..lam.len() {
            for k in (j + 1)..lam.len() {
                let dl = lam[k] - lam[j];
                pairs += q * self.r * self.phi * c[j] * c[k] * ((lam[j] + lam[k]) * b).exp() * dl
                    * dl
                    / (lam[j] * lam[k] * (self.phi - lam[j]) * (self.phi - lam[k]));
            }
        }
        (z0 * self.z_phi_prime(b) + pairs) / self.z_phi_prime(b)
    }

    /// E_x[e^{−qτ_0^-(r)}] at a general starting point (identity (403)):
    /// Z_b^{(q,r)}(x) − rZ(b)W̄^{(q+r)}(x−b)
    /// − q·(Z^{(q)}(b,Φ)/Z^{(q)'}(b,Φ))·(W_b^{(q,r)}(x) − rW(b)W̄^{(q+r)}(x−b)).
    pub fn ruin_laplace_at(&self, b: f64, x: f64) -> f64 {
        if x <= b {
            let ratio = self.z_phi(b) / self.z_phi_prime(b);
            return self.lo.z(x) - self.lo.q() * ratio * self.lo.w(x);
        }
        let u = x - b;
        let wbar_hi = self.hi.wbar(u);
        let ratio = self.z_phi(b) / self.z_phi_prime(b);
        self.z_qr(b, x) - self.r * self.lo.z(b) * wbar_hi
            - self.lo.q() * ratio * (self.w_qr(b, x) - self.r * self.lo.w(b) * wbar_hi)
    }
}
