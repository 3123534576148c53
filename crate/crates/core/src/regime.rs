//! Regime-switching layer: the conditional-continuation transform f̂, the
//! recursion operator T_b, the optimization operator Γ and the contraction
//! fixed-point iteration that yields the Markov-modulated barriers b*(i) and
//! the value surface V(x, i).

use crate::barrier::{AuxProblem, AuxValue};
use crate::levy::{CoreError, LevyModel, Result};
use crate::piecewise::{e0, e1, PayoffFn};

/// Distribution of the (nonpositive) jump applied at a regime switch.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchJump {
    /// No jump (point mass at 0).
    None,
    /// Point mass at `at` ≤ 0.
    PointMass { at: f64 },
    /// J = −E with E exponential of the given rate μ > 0.
    NegExp { rate: f64 },
    /// Finite discrete mixture of point masses (weights sum to 1).
    Discrete { atoms: Vec<(f64, f64)> },
}

impl SwitchJump {
    fn validate(&self) -> Result<()> {
        match self {
            SwitchJump::None => Ok(()),
            SwitchJump::PointMass { at } => {
                if *at > 0.0 || !at.is_finite() {
                    Err(CoreError::InvalidProblem(format!(
                        "switch jump point mass must be <= 0, got {at}"
                    )))
                } else {
                    Ok(())
                }
            }
            SwitchJump::NegExp { rate } => {
                if *rate > 0.0 && rate.is_finite() {
                    Ok(())
                } else {
                    Err(CoreError::InvalidProblem(format!(
                        "switch jump rate must be positive, got {rate}"
                    )))
                }
            }
            SwitchJump::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(CoreError::InvalidProblem("empty jump mixture".into()));
                }
                let mut sum = 0.0;
                for &(w, at) in atoms {
                    if !(w > 0.0) || at > 0.0 || !at.is_finite() {
                        return Err(CoreError::InvalidProblem(
                            "jump mixture needs positive weights and nonpositive atoms".into(),
                        ));
                    }
                    sum += w;
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(CoreError::InvalidProblem(
                        "jump mixture weights must sum to 1".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// E|J|.
    pub fn mean_abs(&self) -> f64 {
        match self {
            SwitchJump::None => 0.0,
            SwitchJump::PointMass { at } => -at,
            SwitchJump::NegExp { rate } => 1.0 / rate,
            SwitchJump::Discrete { atoms } => atoms.iter().map(|&(w, at)| -w * at).sum(),
        }
    }
}

/// Per-state driving model and discount rate.
#[derive(Debug, Clone)]
pub struct RegimeState {
    pub model: LevyModel,
    pub discount: f64,
}

/// N-state instance: generator Q, per-state Lévy models and discounts,
/// switch-jump distributions, shared decision rate r and injection cost β.
#[derive(Debug, Clone)]
pub struct RegimeModel {
    states: Vec<RegimeState>,
    generator: Vec<Vec<f64>>,
    jumps: Vec<Vec<SwitchJump>>,
    r: f64,
    beta: f64,
}

impl RegimeModel {
    pub fn new(
        states: Vec<RegimeState>,
        generator: Vec<Vec<f64>>,
        jumps: Vec<Vec<SwitchJump>>,
        decision_rate: f64,
        injection_cost: f64,
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(CoreError::InvalidProblem("at least one state".into()));
        }
        if generator.len() != n || generator.iter().any(|row| row.len() != n) {
            return Err(CoreError::InvalidProblem(format!(
                "generator must be {n}x{n}"
            )));
        }
        if jumps.len() != n || jumps.iter().any(|row| row.len() != n) {
            return Err(CoreError::InvalidProblem(format!(
                "switch-jump matrix must be {n}x{n}"
            )));
        }
        for (i, row) in generator.iter().enumerate() {
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if i != j && v < 0.0 {
                    return Err(CoreError::InvalidProblem(format!(
                        "off-diagonal generator entry ({i},{j}) must be >= 0"
                    )));
                }
                sum += v;
            }
            if sum.abs() > 1e-10 {
                return Err(CoreError::InvalidProblem(format!(
                    "generator row {i} sums to {sum}, expected 0"
                )));
            }
            if n >= 2 {
                let lam_i: f64 = row
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &v)| v)
                    .sum();
                if !(lam_i > 0.0) {
                    return Err(CoreError::InvalidProblem(format!(
                        "state {i} has zero switch rate"
                    )));
                }
            }
        }
        for row in &jumps {
            for j in row {
                j.validate()?;
            }
        }
        for s in &states {
            if !(s.discount > 0.0) {
                return Err(CoreError::InvalidProblem(
                    "per-state discounts must be positive".into(),
                ));
            }
        }
        if !(decision_rate > 0.0) {
            return Err(CoreError::InvalidProblem("decision rate must be positive".into()));
        }
        if !(injection_cost > 1.0) {
            return Err(CoreError::InvalidProblem(
                "injection cost beta must exceed 1 in all regimes".into(),
            ));
        }
        Ok(RegimeModel {
            states,
            generator,
            jumps,
            r: decision_rate,
            beta: injection_cost,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }
    pub fn state(&self, i: usize) -> &RegimeState {
        &self.states[i]
    }
    pub fn generator(&self) -> &[Vec<f64>] {
        &self.generator
    }
    pub fn jump(&self, i: usize, j: usize) -> &SwitchJump {
        &self.jumps[i][j]
    }
    pub fn decision_rate(&self) -> f64 {
        self.r
    }
    pub fn injection_cost(&self) -> f64 {
        self.beta
    }

    /// λ_i = Σ_{j≠i} λ_ij.
    pub fn switch_rate(&self, i: usize) -> f64 {
        self.generator[i]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v)
            .sum()
    }

    /// θ(i) = q(i) + λ_i.
    pub fn theta(&self, i: usize) -> f64 {
        self.states[i].discount + self.switch_rate(i)
    }

    /// Contraction constant K = max_i λ_i/θ(i) < 1.
    pub fn contraction_k(&self) -> f64 {
        (0..self.n_states())
            .map(|i| self.switch_rate(i) / self.theta(i))
            .fold(0.0, f64::max)
    }

    /// The auxiliary problem induced at state i by the payoff w.
    pub fn aux_problem(&self, i: usize, w: PayoffFn) -> Result<AuxProblem> {
        AuxProblem::new(
            self.states[i].model.clone(),
            self.states[i].discount,
            self.switch_rate(i),
            self.r,
            self.beta,
            w,
        )
    }
}

/// Uniform grid on [0, x_max].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub x_max: f64,
    pub n: usize,
}

impl Grid {
    pub fn step(&self) -> f64 {
        self.x_max / (self.n - 1) as f64
    }
    pub fn point(&self, k: usize) -> f64 {
        self.x_max * k as f64 / (self.n - 1) as f64
    }
}

/// One per-state slice of a value iterate: samples on the grid plus the
/// terminal slope used for linear extrapolation beyond x_max.
#[derive(Debug, Clone)]
pub struct Slice {
    pub values: Vec<f64>,
    pub tail_slope: f64,
}

/// Per-state grid-sampled concave value functions, the object Γ transforms.
#[derive(Debug, Clone)]
pub struct ValueIterate {
    pub grid: Grid,
    pub slices: Vec<Slice>,
    pub barriers: Vec<f64>,
    pub iteration: usize,
}

impl ValueIterate {
    pub fn zero(grid: Grid, n_states: usize) -> Self {
        let n = grid.n;
        ValueIterate {
            grid,
            slices: vec![
                Slice {
                    values: vec![0.0; n],
                    tail_slope: 0.0,
                };
                n_states
            ],
            barriers: vec![0.0; n_states],
            iteration: 0,
        }
    }

    /// f(x, i) with linear extrapolation beyond the grid.
    pub fn eval(&self, i: usize, x: f64) -> f64 {
        let s = &self.slices[i];
        if x >= self.grid.x_max {
            return s.values[self.grid.n - 1] + s.tail_slope * (x - self.grid.x_max);
        }
        let t = (x.max(0.0)) / self.grid.step();
        let k = (t as usize).min(self.grid.n - 2);
        let frac = t - k as f64;
        s.values[k] * (1.0 - frac) + s.values[k + 1] * frac
    }
}

/// Sup-norm of f − g over the grid; infinite when the terminal slopes differ
/// (the functions then diverge linearly).
pub fn norm_inf(f: &ValueIterate, g: &ValueIterate) -> f64 {
    let mut sup = 0.0_f64;
    for (sf, sg) in f.slices.iter().zip(&g.slices) {
        if (sf.tail_slope - sg.tail_slope).abs() > 1e-12 {
            return f64::INFINITY;
        }
        for (a, b) in sf.values.iter().zip(&sg.values) {
            sup = sup.max((a - b).abs());
        }
    }
    sup
}

/// Growth norm max_i sup_x |f(x,i)|/(1+|x|).
pub fn norm_growth(f: &ValueIterate) -> f64 {
    let mut sup = 0.0_f64;
    for s in &f.slices {
        for (k, v) in s.values.iter().enumerate() {
            sup = sup.max(v.abs() / (1.0 + f.grid.point(k)));
        }
        sup = sup.max(s.tail_slope.abs());
    }
    sup
}

/// Pool-adjacent-violators pass: projects `slopes` onto the nonincreasing
/// cone (equal weights). Returns the largest adjustment made.
fn pav_nonincreasing(slopes: &mut [f64]) -> f64 {
    let n = slopes.len();
    let mut level: Vec<f64> = Vec::with_capacity(n);
    let mut count: Vec<usize> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = slopes[k];
        let mut c = 1usize;
        while let Some(&last) = level.last() {
            if last < v / c as f64 {
                // violation: pool
                let lc = count.pop().unwrap();
                let lv = level.pop().unwrap();
                v += lv * lc as f64;
                c += lc;
            } else {
                break;
            }
        }
        level.push(v / c as f64);
        count.push(c);
    }
    let mut out = Vec::with_capacity(n);
    for (v, c) in level.iter().zip(&count) {
        for _ in 0..*c {
            out.push(*v);
        }
    }
    let mut max_adj = 0.0_f64;
    for (s, o) in slopes.iter_mut().zip(&out) {
        max_adj = max_adj.max((*s - *o).abs());
        *s = *o;
    }
    max_adj
}

/// The transform f̂(·, i): averages the post-switch continuation over the
/// target states and jump laws, exactly per grid knot.
pub fn hat_transform(m: &RegimeModel, f: &ValueIterate, i: usize) -> Result<PayoffFn> {
    if i >= m.n_states() {
        return Err(CoreError::Domain(format!("state index {i} out of range")));
    }
    let lam_i = m.switch_rate(i);
    if !(lam_i > 0.0) {
        return Err(CoreError::InvalidProblem(
            "hat transform undefined for a state without switching".into(),
        ));
    }
    let n = f.grid.n;
    let beta = m.injection_cost();
    let mut vals = vec![0.0; n];
    let mut tail = 0.0;
    for j in 0..m.n_states() {
        if j == i {
            continue;
        }
        let p = m.generator()[i][j] / lam_i;
        if p == 0.0 {
            continue;
        }
        let sj = &f.slices[j];
        tail += p * sj.tail_slope;
        match m.jump(i, j) {
            SwitchJump::None => {
                for k in 0..n {
                    vals[k] += p * sj.values[k];
                }
            }
            SwitchJump::PointMass { at } => {
                add_point_mass(m, f, j, *at, p, beta, &mut vals);
            }
            SwitchJump::NegExp { rate } => {
                add_neg_exp(m, f, j, *rate, p, beta, &mut vals);
            }
            SwitchJump::Discrete { atoms } => {
                for &(w, at) in atoms {
                    add_point_mass(m, f, j, at, p * w, beta, &mut vals);
                }
            }
        }
    }
    // re-impose concavity of the sampled transform
    let dx = f.grid.step();
    let mut slopes: Vec<f64> = (0..n - 1).map(|k| (vals[k + 1] - vals[k]) / dx).collect();
    slopes.push(tail);
    let scale = slopes.iter().fold(1.0_f64, |a, s| a.max(s.abs()));
    let mut worst = 0.0_f64;
    for w in slopes.windows(2) {
        worst = worst.max(w[1] - w[0]);
    }
    if worst > 1e-7 * scale {
        return Err(CoreError::Numerical(format!(
            "hat transform lost concavity by {worst:.3e}"
        )));
    }
    pav_nonincreasing(&mut slopes);
    // slope at 0 may exceed β only by rounding
    if slopes[0] > beta {
        if slopes[0] > beta + 1e-9 {
            return Err(CoreError::Numerical(format!(
                "hat transform slope at zero {} exceeds beta {beta}",
                slopes[0]
            )));
        }
        let cap = beta;
        for s in slopes.iter_mut() {
            *s = s.min(cap);
        }
    }
    let tail = slopes.pop().unwrap().clamp(0.0, 1.0);
    let mut xs = Vec::with_capacity(n);
    let mut out_vals = Vec::with_capacity(n);
    let mut acc = vals[0];
    xs.push(0.0);
    out_vals.push(acc);
    for k in 0..n - 1 {
        acc += slopes[k] * dx;
        xs.push(f.grid.point(k + 1));
        out_vals.push(acc);
    }
    PayoffFn::new(xs, out_vals, tail)
}

fn add_point_mass(
    m: &RegimeModel,
    f: &ValueIterate,
    j: usize,
    at: f64,
    p: f64,
    beta: f64,
    vals: &mut [f64],
) {
    let n = f.grid.n;
    for k in 0..n {
        let x = f.grid.point(k) + at;
        vals[k] += p * if x < 0.0 {
            beta * x + f.slices[j].values[0]
        } else {
            f.eval(j, x)
        };
    }
    let _ = m;
}

/// Exponential jump: I(x) = μ e^{−μx} ∫_0^x f(s) e^{μs} ds + e^{−μx}(f(0) − β/μ),
/// accumulated by a forward recurrence over the shared grid.
fn add_neg_exp(
    m: &RegimeModel,
    f: &ValueIterate,
    j: usize,
    mu: f64,
    p: f64,
    beta: f64,
    vals: &mut [f64],
) {
    let n = f.grid.n;
    let dx = f.grid.step();
    let sj = &f.slices[j];
    let decay = (-mu * dx).exp();
    let mut mval = 0.0; // μ ∫_0^x f(s) e^{−μ(x−s)} ds
    vals[0] += p * (sj.values[0] - beta / mu);
    for k in 0..n - 1 {
        let v = sj.values[k];
        let g = (sj.values[k + 1] - sj.values[k]) / dx;
        // μ ∫_0^Δ (v + gσ) e^{−μ(Δ−σ)} dσ = μ[(v+gΔ)e0(μ,Δ) − g·e1(μ,Δ)]
        let piece = mu * ((v + g * dx) * e0(mu, dx) - g * e1(mu, dx));
        mval = mval * decay + piece;
        let x = f.grid.point(k + 1);
        vals[k + 1] += p * (mval + (-mu * x).exp() * (sj.values[0] - beta / mu));
    }
    let _ = m;
}

/// One application of the recursion operator T_b: per state, the auxiliary
/// value at barrier b(i) with payoff f̂(·, i), sampled back onto the grid.
pub fn t_b_apply(m: &RegimeModel, f: &ValueIterate, b: &[f64]) -> Result<ValueIterate> {
    let mut slices = Vec::with_capacity(m.n_states());
    for i in 0..m.n_states() {
        let w = hat_transform(m, f, i)?;
        let tail = tail_slope_of(m, i, &w);
        let p = m.aux_problem(i, w)?;
        let value = p.value(b[i])?;
        slices.push(sample_slice(&f.grid, &value, tail));
    }
    Ok(ValueIterate {
        grid: f.grid.clone(),
        slices,
        barriers: b.to_vec(),
        iteration: f.iteration + 1,
    })
}

/// Γf = T_{b^f} f with b^f(i) the optimal barrier of the induced problem.
pub fn gamma_apply(m: &RegimeModel, f: &ValueIterate) -> Result<(ValueIterate, Vec<f64>)> {
    let mut slices = Vec::with_capacity(m.n_states());
    let mut barriers = Vec::with_capacity(m.n_states());
    for i in 0..m.n_states() {
        let w = hat_transform(m, f, i)?;
        let tail = tail_slope_of(m, i, &w);
        let p = m.aux_problem(i, w)?;
        let b = p.optimal_barrier()?;
        if b > 0.45 * f.grid.x_max {
            return Err(CoreError::Numerical(format!(
                "barrier {b:.3} too close to the grid end {:.3}; enlarge the grid",
                f.grid.x_max
            )));
        }
        let value = p.value(b)?;
        slices.push(sample_slice(&f.grid, &value, tail));
        barriers.push(b);
    }
    let out = ValueIterate {
        grid: f.grid.clone(),
        slices,
        barriers: barriers.clone(),
        iteration: f.iteration + 1,
    };
    Ok((out, barriers))
}

/// Terminal slope of T f at state i: (r + λ_i ŝ)/(θ_i + r) with ŝ the tail
/// slope of f̂(·, i).
fn tail_slope_of(m: &RegimeModel, i: usize, w: &PayoffFn) -> f64 {
    (m.decision_rate() + m.switch_rate(i) * w.tail_slope()) / (m.theta(i) + m.decision_rate())
}

fn sample_slice(grid: &Grid, value: &AuxValue, tail_slope: f64) -> Slice {
    let values: Vec<f64> = (0..grid.n).map(|k| value.eval(grid.point(k))).collect();
    Slice { values, tail_slope }
}

/// Solver settings for the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct FixedPointSettings {
    pub grid_points: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Explicit grid end; derived from first-pass barriers when absent.
    pub x_max: Option<f64>,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        FixedPointSettings {
            grid_points: 2000,
            tol: 1e-8,
            max_iter: 400,
            x_max: None,
        }
    }
}

/// Converged fixed point of Γ.
#[derive(Debug, Clone)]
pub struct RegimeSolution {
    pub b_star: Vec<f64>,
    pub value: ValueIterate,
    /// Contraction constant K = max_i λ_i/θ(i).
    pub k: f64,
    pub iterations: usize,
    /// A-priori bound K^n/(1−K)·‖v₁−v₀‖ over the grid.
    pub error_bound: f64,
    /// A-posteriori bound K/(1−K)·‖v_n−v_{n−1}‖, the certified tolerance.
    pub posterior_bound: f64,
    /// Grid sup-norms of the successive differences.
    pub deltas: Vec<f64>,
}

/// Iterates v_{n+1} = Γ v_n from v₀ ≡ 0 until the contraction tail bound
/// certifies ‖v_n − V‖ < tol; returns the barriers of the last application.
pub fn solve_fixed_point(
    m: &RegimeModel,
    settings: &FixedPointSettings,
) -> Result<RegimeSolution> {
    if m.n_states() == 1 {
        // no switching: the problem is the plain auxiliary one with λ = 0
        let p = m.aux_problem(0, PayoffFn::zero())?;
        let sol = p.solve()?;
        let x_max = settings
            .x_max
            .unwrap_or(sol.b_star + 60.0 / p.pair().phi);
        let grid = Grid {
            x_max,
            n: settings.grid_points,
        };
        let tail = m.decision_rate() / (m.theta(0) + m.decision_rate());
        let slice = sample_slice(&grid, &sol.value, tail);
        return Ok(RegimeSolution {
            b_star: vec![sol.b_star],
            value: ValueIterate {
                grid,
                slices: vec![slice],
                barriers: vec![sol.b_star],
                iteration: 1,
            },
            k: 0.0,
            iterations: 1,
            error_bound: 0.0,
            posterior_bound: 0.0,
            deltas: vec![],
        });
    }

    let k = m.contraction_k();
    // grid from first-pass barriers of the w = 0 problems
    let x_max = match settings.x_max {
        Some(x) => x,
        None => {
            let mut b_guess = 0.0_f64;
            let mut min_phi = f64::INFINITY;
            for i in 0..m.n_states() {
                let p = m.aux_problem(i, PayoffFn::zero())?;
                b_guess = b_guess.max(p.optimal_barrier()?);
                min_phi = min_phi.min(p.pair().phi);
            }
            b_guess + 60.0 / min_phi
        }
    };
    let grid = Grid {
        x_max,
        n: settings.grid_points,
    };
    let mut v = ValueIterate::zero(grid, m.n_states());
    let mut deltas = Vec::new();
    let mut first_delta = f64::NAN;
    let threshold = settings.tol * (1.0 - k) / k;
    for it in 0..settings.max_iter {
        let (next, barriers) = gamma_apply(m, &v)?;
        let delta_grid: f64 = next
            .slices
            .iter()
            .zip(&v.slices)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        let slope_gap: f64 = next
            .slices
            .iter()
            .zip(&v.slices)
            .map(|(a, b)| (a.tail_slope - b.tail_slope).abs())
            .fold(0.0, f64::max);
        deltas.push(delta_grid);
        if it == 0 {
            first_delta = delta_grid;
        }
        v = next;
        v.barriers = barriers;
        if delta_grid < threshold && slope_gap < 1e-12 {
            let n_iter = it + 1;
            return Ok(RegimeSolution {
                b_star: v.barriers.clone(),
                value: v,
                k,
                iterations: n_iter,
                error_bound: k.powi(n_iter as i32) / (1.0 - k) * first_delta,
                posterior_bound: k / (1.0 - k) * delta_grid,
                deltas,
            });
        }
    }
    Err(CoreError::Convergence {
        iterations: settings.max_iter,
        bound: k / (1.0 - k) * deltas.last().copied().unwrap_or(f64::NAN),
    })
}

/// One row of the dynamic-programming check report.
#[derive(Debug, Clone)]
pub struct DppRow {
    pub state: usize,
    pub x0: f64,
    pub value: f64,
    pub estimate: crate::mc::Estimate,
    pub z_score: f64,
}

/// Monte-Carlo check of the one-switch decomposition: V(x, i) must equal the
/// expected dividends minus injections before the first regime switch plus
/// the discounted continuation V(U(ζ), H(ζ)) under the solved barrier policy.
pub fn dpp_check(
    m: &RegimeModel,
    sol: &RegimeSolution,
    samples: &[Vec<f64>],
    cfg: &crate::mc::PathConfig,
) -> Result<Vec<DppRow>> {
    if samples.len() != m.n_states() {
        return Err(CoreError::Domain(
            "one sample list per state expected".into(),
        ));
    }
    let mut rows = Vec::new();
    for (i, xs) in samples.iter().enumerate() {
        for &x0 in xs {
            let est =
                crate::mc::estimate_one_switch_value(m, &sol.value, sol.b_star[i], x0, i, cfg)?;
            let value = sol.value.eval(i, x0);
            let z_score = est.z_score(value);
            rows.push(DppRow {
                state: i,
                x0,
                value,
                estimate: est,
                z_score,
            });
        }
    }
    Ok(rows)
}
