//! Piecewise-linear functions on [0,∞) with a linear tail, plus the exact
//! exponential moments ∫ e^{−sy} h(y) dy used throughout the scale-function
//! calculus. Jumps at knots are allowed (right-continuous), which covers
//! payoff derivatives and indicator-type densities.

use crate::levy::{CoreError, Result};

/// ∫_0^Δ e^{−s t} dt, stable for small |sΔ|.
pub fn e0(s: f64, dt: f64) -> f64 {
    if s == 0.0 {
        dt
    } else {
        -f64::exp_m1(-s * dt) / s
    }
}

/// ∫_0^Δ t e^{−s t} dt, stable for small |sΔ|.
pub fn e1(s: f64, dt: f64) -> f64 {
    let z = s * dt;
    if z.abs() < 1e-4 {
        // Δ²/2 − sΔ³/3 + s²Δ⁴/8 − s³Δ⁵/30
        dt * dt * (0.5 - z / 3.0 + z * z / 8.0 - z * z * z / 30.0)
    } else {
        (e0(s, dt) - dt * (-z).exp()) / s
    }
}

/// Right-continuous piecewise-linear function: on [xs[k], xs[k+1]) the value
/// is vals[k] + slopes[k]·(y − xs[k]); the last slope extends to +∞.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLinear {
    xs: Vec<f64>,
    vals: Vec<f64>,
    slopes: Vec<f64>,
}

impl StepLinear {
    pub fn new(xs: Vec<f64>, vals: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != vals.len() || xs.len() != slopes.len() {
            return Err(CoreError::InvalidPayoff(
                "knots, values and slopes must have equal positive length".into(),
            ));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(CoreError::InvalidPayoff(
                    "knot abscissae must be strictly increasing".into(),
                ));
            }
        }
        if xs
            .iter()
            .chain(vals.iter())
            .chain(slopes.iter())
            .any(|v| !v.is_finite())
        {
            return Err(CoreError::InvalidPayoff("non-finite entry".into()));
        }
        Ok(StepLinear { xs, vals, slopes })
    }

    /// Constant function.
    pub fn constant(c: f64) -> Self {
        StepLinear {
            xs: vec![0.0],
            vals: vec![c],
            slopes: vec![0.0],
        }
    }

    /// Indicator of [0, m) as a right-continuous step function.
    pub fn indicator(m: f64) -> Self {
        StepLinear {
            xs: vec![0.0, m],
            vals: vec![1.0, 0.0],
            slopes: vec![0.0, 0.0],
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn tail_slope(&self) -> f64 {
        *self.slopes.last().unwrap()
    }

    pub fn value_bound_on(&self, a: f64, b: f64) -> f64 {
        let mut m = self.eval(a).abs().max(self.eval(b).abs());
        for &x in &self.xs {
            if x >= a && x <= b {
                m = m.max(self.eval(x).abs());
            }
        }
        m
    }

    fn piece(&self, y: f64) -> usize {
        match self.xs.binary_search_by(|x| x.partial_cmp(&y).unwrap()) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        let k = self.piece(y);
        self.vals[k] + self.slopes[k] * (y - self.xs[k])
    }

    /// ∫_a^c e^{−s y} h(y) dy, exact.
    pub fn exp_integral(&self, s: f64, a: f64, c: f64) -> f64 {
        if c <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut lo = a;
        let mut k = self.piece(a);
        while lo < c {
            let hi = if k + 1 < self.xs.len() {
                self.xs[k + 1].min(c)
            } else {
                c
            };
            if hi > lo {
                let a0 = self.vals[k] + self.slopes[k] * (lo - self.xs[k]);
                let b0 = self.slopes[k];
                // ∫_lo^hi e^{−sy}(a0 + b0(y−lo)) dy
                total += (-s * lo).exp() * (a0 * e0(s, hi - lo) + b0 * e1(s, hi - lo));
            }
            lo = hi;
            k += 1;
        }
        total
    }

    /// ∫_a^∞ e^{−s y} h(y) dy for s > 0, exact including the linear tail.
    pub fn exp_tail(&self, s: f64, a: f64) -> f64 {
        assert!(s > 0.0, "exp_tail requires a positive decay rate");
        let last = *self.xs.last().unwrap();
        let cut = last.max(a);
        let mut total = self.exp_integral(s, a, cut);
        // beyond cut: h(y) = h(cut) + slope·(y − cut)
        let v = self.eval(cut);
        let sl = self.tail_slope();
        total += (-s * cut).exp() * (v / s + sl / (s * s));
        total
    }

    /// h(b + ·) as a StepLinear on [0, ∞).
    pub fn shift_left(&self, b: f64) -> StepLinear {
        let mut xs = vec![0.0];
        let mut vals = vec![self.eval(b)];
        let k0 = self.piece(b);
        let mut slopes = vec![self.slopes[k0]];
        for k in (k0 + 1)..self.xs.len() {
            if self.xs[k] > b {
                xs.push(self.xs[k] - b);
                vals.push(self.vals[k]);
                slopes.push(self.slopes[k]);
            }
        }
        StepLinear { xs, vals, slopes }
    }

    /// The a.e. derivative as a right-continuous step function.
    pub fn slope_fn(&self) -> StepLinear {
        StepLinear {
            xs: self.xs.clone(),
            vals: self.slopes.clone(),
            slopes: vec![0.0; self.xs.len()],
        }
    }

    /// ∫_0^∞ e^{−s u} h(b + u) du for s > 0, exact including the linear tail.
    pub fn shifted_exp_tail(&self, s: f64, b: f64) -> f64 {
        assert!(s > 0.0);
        let mut total = 0.0;
        let mut t = b;
        let mut k = self.piece(b);
        while k + 1 < self.xs.len() {
            let hi = self.xs[k + 1];
            if hi > t {
                let a0 = self.vals[k] + self.slopes[k] * (t - self.xs[k]);
                total +=
                    (-s * (t - b)).exp() * (a0 * e0(s, hi - t) + self.slopes[k] * e1(s, hi - t));
                t = hi;
            }
            k += 1;
        }
        let v = self.eval(t.max(b));
        let tt = t.max(b);
        total += (-s * (tt - b)).exp() * (v / s + self.tail_slope() / (s * s));
        total
    }

    /// Largest knot, as the natural split point list for quadrature.
    pub fn last_knot(&self) -> f64 {
        *self.xs.last().unwrap()
    }
}

/// Cumulative exponential moments H_j(t) = ∫_0^t e^{−s_j y} h(y) dy for a
/// fixed family of rates, tabulated at the knots for O(log) point queries.
#[derive(Debug, Clone)]
pub struct PrefixTable {
    rates: Vec<f64>,
    h: StepLinear,
    /// table[j][k] = H_j(xs[k])
    table: Vec<Vec<f64>>,
}

impl PrefixTable {
    pub fn build(h: &StepLinear, rates: &[f64]) -> Self {
        let n = h.xs.len();
        let mut table = Vec::with_capacity(rates.len());
        for &s in rates {
            let mut col = Vec::with_capacity(n);
            // H(xs[0]) = ∫_0^{xs[0]}; xs[0] is 0 in all our uses but stay general
            let first = if h.xs[0] > 0.0 {
                h.exp_integral(s, 0.0, h.xs[0])
            } else {
                0.0
            };
            col.push(first);
            let mut acc = first;
            for k in 1..n {
                let lo = h.xs[k - 1];
                let hi = h.xs[k];
                let a0 = h.vals[k - 1];
                let b0 = h.slopes[k - 1];
                acc += (-s * lo).exp() * (a0 * e0(s, hi - lo) + b0 * e1(s, hi - lo));
                col.push(acc);
            }
            table.push(col);
        }
        PrefixTable {
            rates: rates.to_vec(),
            h: h.clone(),
            table,
        }
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// H_j(t) for t ≥ 0.
    pub fn eval(&self, j: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let s = self.rates[j];
        let k = self.h.piece(t);
        let base = self.table[j][k];
        let lo = self.h.xs[k];
        if t <= lo {
            return base;
        }
        let a0 = self.h.vals[k];
        let b0 = self.h.slopes[k];
        base + (-s * lo).exp() * (a0 * e0(s, t - lo) + b0 * e1(s, t - lo))
    }
}

/// Suffix transform S(t) = ∫_0^∞ e^{−φ s} h(t + s) ds, tabulated at knots.
#[derive(Debug, Clone)]
pub struct SuffixTable {
    phi: f64,
    h: StepLinear,
    /// suffix[k] = S(xs[k])
    suffix: Vec<f64>,
}

impl SuffixTable {
    pub fn build(h: &StepLinear, phi: f64) -> Self {
        assert!(phi > 0.0);
        let n = h.xs.len();
        let mut suffix = vec![0.0; n];
        let last = h.xs[n - 1];
        suffix[n - 1] = h.vals[n - 1] / phi + h.slopes[n - 1] / (phi * phi);
        let _ = last;
        for k in (0..n - 1).rev() {
            let dt = h.xs[k + 1] - h.xs[k];
            let local = h.vals[k] * e0(phi, dt) + h.slopes[k] * e1(phi, dt);
            suffix[k] = local + (-phi * dt).exp() * suffix[k + 1];
        }
        SuffixTable {
            phi,
            h: h.clone(),
            suffix,
        }
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn source(&self) -> &StepLinear {
        &self.h
    }

    /// S(t) for t ≥ 0.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.h.piece(t);
        if k + 1 < self.h.xs.len() {
            let dt = self.h.xs[k + 1] - t;
            let v = self.h.eval(t);
            let local = v * e0(self.phi, dt) + self.h.slopes[k] * e1(self.phi, dt);
            local + (-self.phi * dt).exp() * self.suffix[k + 1]
        } else {
            let v = self.h.eval(t);
            v / self.phi + self.h.slopes[k] / (self.phi * self.phi)
        }
    }
}

/// Concave payoff w on [0,∞): continuous piecewise-linear, nonincreasing
/// slopes, w'_+(0+) ≤ β and terminal slope in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffFn {
    f: StepLinear,
}

impl PayoffFn {
    /// Builds from knot abscissae/values plus the slope beyond the last knot.
    pub fn new(xs: Vec<f64>, vals: Vec<f64>, tail_slope: f64) -> Result<Self> {
        if xs.is_empty() || xs[0] != 0.0 {
            return Err(CoreError::InvalidPayoff(
                "payoff knots must start at 0".into(),
            ));
        }
        let mut slopes = Vec::with_capacity(xs.len());
        for k in 0..xs.len() - 1 {
            slopes.push((vals[k + 1] - vals[k]) / (xs[k + 1] - xs[k]));
        }
        slopes.push(tail_slope);
        let f = StepLinear::new(xs, vals, slopes)?;
        let p = PayoffFn { f };
        p.validate(f64::INFINITY)?;
        Ok(p)
    }

    /// Zero payoff.
    pub fn zero() -> Self {
        PayoffFn {
            f: StepLinear::constant(0.0),
        }
    }

    pub(crate) fn validate(&self, beta: f64) -> Result<()> {
        let sl = &self.f.slopes;
        for w in sl.windows(2) {
            if w[1] > w[0] + 1e-9 {
                return Err(CoreError::InvalidPayoff(format!(
                    "slopes must be nonincreasing (got {} then {})",
                    w[0], w[1]
                )));
            }
        }
        let tail = self.f.tail_slope();
        if !(-1e-12..=1.0 + 1e-12).contains(&tail) {
            return Err(CoreError::InvalidPayoff(format!(
                "terminal slope must lie in [0,1], got {tail}"
            )));
        }
        if sl[0] > beta + 1e-9 {
            return Err(CoreError::InvalidPayoff(format!(
                "right slope at 0 ({}) exceeds the injection cost {beta}",
                sl[0]
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.f.eval(x)
    }

    pub fn as_step_linear(&self) -> &StepLinear {
        &self.f
    }

    /// Right derivative w'_+ as a right-continuous step function.
    pub fn derivative(&self) -> StepLinear {
        StepLinear {
            xs: self.f.xs.clone(),
            vals: self.f.slopes.clone(),
            slopes: vec![0.0; self.f.xs.len()],
        }
    }

    pub fn tail_slope(&self) -> f64 {
        self.f.tail_slope()
    }

    pub fn slope_at_zero(&self) -> f64 {
        self.f.slopes[0]
    }
}
