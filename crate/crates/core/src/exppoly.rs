//! Exponential-polynomial functions Σ_t Σ_k c_{t,k} x^k e^{λ_t x}.
//!
//! Scale functions of the supported model family and every composite built
//! from them live in this class, so evaluation, differentiation and
//! integration stay closed-form.

/// Maximum polynomial degree produced by the confluent branches.
const MAX_DEG: usize = 8;

#[derive(Debug, Clone)]
pub struct Term {
    pub rate: f64,
    /// coef[k] multiplies x^k e^{rate·x}.
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ExpPoly {
    pub terms: Vec<Term>,
}

impl ExpPoly {
    pub fn zero() -> Self {
        ExpPoly { terms: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        let mut p = ExpPoly::zero();
        p.push(0.0, 0, c);
        p
    }

    /// Adds c·x^k·e^{rate·x}, merging into an existing term with the same rate.
    pub fn push(&mut self, rate: f64, k: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        assert!(k <= MAX_DEG, "polynomial degree overflow");
        if let Some(t) = self.terms.iter_mut().find(|t| t.rate == rate) {
            if t.coef.len() <= k {
                t.coef.resize(k + 1, 0.0);
            }
            t.coef[k] += c;
        } else {
            let mut coef = vec![0.0; k + 1];
            coef[k] = c;
            self.terms.push(Term { rate, coef });
        }
    }

    pub fn add_assign(&mut self, other: &ExpPoly, scale: f64) {
        for t in &other.terms {
            for (k, &c) in t.coef.iter().enumerate() {
                self.push(t.rate, k, scale * c);
            }
        }
    }

    pub fn scaled(&self, s: f64) -> ExpPoly {
        let mut p = self.clone();
        for t in &mut p.terms {
            for c in &mut t.coef {
                *c *= s;
            }
        }
        p
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for t in &self.terms {
            let mut poly = 0.0;
            for &c in t.coef.iter().rev() {
                poly = poly * x + c;
            }
            v += poly * (t.rate * x).exp();
        }
        v
    }

    /// Derivative, again an ExpPoly.
    pub fn deriv(&self) -> ExpPoly {
        let mut p = ExpPoly::zero();
        for t in &self.terms {
            for (k, &c) in t.coef.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                p.push(t.rate, k, c * t.rate);
                if k > 0 {
                    p.push(t.rate, k - 1, c * k as f64);
                }
            }
        }
        p
    }

    /// Antiderivative F with F(0) = 0.
    pub fn antideriv(&self) -> ExpPoly {
        let mut p = ExpPoly::zero();
        for t in &self.terms {
            if t.rate == 0.0 {
                for (k, &c) in t.coef.iter().enumerate() {
                    p.push(0.0, k + 1, c / (k + 1) as f64);
                }
            } else {
                // ∫ x^k e^{λx} dx = e^{λx} Σ_{m≤k} (−1)^{k−m} k!/(m! λ^{k−m+1}) x^m
                for (k, &c) in t.coef.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let mut fac = 1.0 / t.rate; // k!/(m! λ^{k−m+1}) going m = k down to 0
                    let mut sign = 1.0;
                    let mut const_part = 0.0;
                    for m in (0..=k).rev() {
                        p.push(t.rate, m, c * sign * fac);
                        if m == 0 {
                            const_part = c * sign * fac;
                        }
                        fac *= (m as f64) / t.rate;
                        sign = -sign;
                    }
                    // subtract F(0)
                    p.push(0.0, 0, -const_part);
                }
            }
        }
        p
    }

    /// f(x) ↦ f(x − b) expressed as an ExpPoly in x.
    pub fn shift(&self, b: f64) -> ExpPoly {
        let mut p = ExpPoly::zero();
        for t in &self.terms {
            let damp = (-t.rate * b).exp();
            for (k, &c) in t.coef.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                // (x−b)^k = Σ_m C(k,m) x^m (−b)^{k−m}
                let mut binom = 1.0;
                for m in 0..=k {
                    if m > 0 {
                        binom *= (k - m + 1) as f64 / m as f64;
                    }
                    p.push(t.rate, m, c * damp * binom * (-b).powi((k - m) as i32));
                }
            }
        }
        p
    }

    /// ∫_a^∞ e^{−s(y−a)} f(y) dy; requires s > every rate.
    pub fn laplace_tail(&self, s: f64, a: f64) -> f64 {
        let mut v = 0.0;
        for t in &self.terms {
            let d = s - t.rate;
            assert!(d > 0.0, "laplace_tail requires s above all rates");
            let damp = (t.rate * a).exp();
            for (k, &c) in t.coef.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                // ∫_a^∞ e^{−s(y−a)} y^k e^{λy} dy = e^{λa} Σ_m C(k,m) a^{k−m} m!/(d^{m+1})
                let mut binom = 1.0;
                let mut sum = 0.0;
                for m in 0..=k {
                    if m > 0 {
                        binom *= (k - m + 1) as f64 / m as f64;
                    }
                    let mut fact = 1.0;
                    for i in 1..=m {
                        fact *= i as f64;
                    }
                    sum += binom * a.powi((k - m) as i32) * fact / d.powi(m as i32 + 1);
                }
                v += c * damp * sum;
            }
        }
        v
    }

    /// Drops terms whose coefficients are all below `tol` in magnitude.
    pub fn prune(&mut self, tol: f64) {
        self.terms
            .retain(|t| t.coef.iter().any(|c| c.abs() > tol));
    }

    /// Removes and returns the total coefficient vector of the term at `rate`
    /// (exact match), if present.
    pub fn take_rate(&mut self, rate: f64) -> Option<Vec<f64>> {
        if let Some(pos) = self.terms.iter().position(|t| t.rate == rate) {
            Some(self.terms.remove(pos).coef)
        } else {
            None
        }
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.terms
            .iter()
            .flat_map(|t| t.coef.iter().map(|c| c.abs()))
            .fold(0.0, f64::max)
    }
}

/// expm1(d·u)/d, the stable kernel of two-exponential differences; u at d = 0.
pub fn expm1_div(d: f64, u: f64) -> f64 {
    if d == 0.0 {
        u
    } else {
        f64::exp_m1(d * u) / d
    }
}
