//! Spectrally negative Lévy models with Brownian part and hyperexponential
//! downward jumps: X(t) = γt + ηB(t) − Σ claims, claim sizes drawn from a
//! finite mixture of exponentials.
//!
//! The Laplace exponent is
//! ψ(θ) = γθ + η²θ²/2 + η_J (Σ_k p_k α_k/(α_k+θ) − 1),
//! convex on [0,∞) with ψ(0) = 0.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("no convergence after {iterations} iterations (last error bound {bound:.3e})")]
    Convergence { iterations: usize, bound: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;

/// One component of the claim-size mixture: weight p > 0, rate α > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpComponent {
    pub weight: f64,
    pub rate: f64,
}

/// Parametric spectrally negative Lévy process.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    /// Total drift γ (per unit time); equals the bounded-variation drift c when η = 0.
    pub drift: f64,
    /// Gaussian coefficient η ≥ 0.
    pub volatility: f64,
    /// Claim arrival intensity η_J ≥ 0.
    pub jump_rate: f64,
    /// Mixture of exponential densities for the claim size |jump|.
    pub jump_mix: Vec<ExpComponent>,
}

/// Path regularity class of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathClass {
    /// η = 0; drift of the bounded-variation decomposition is c = γ > 0.
    BoundedVariation { c: f64 },
    /// η > 0.
    UnboundedVariation,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl LevyModel {
    /// Brownian motion with drift, no jumps.
    pub fn brownian(drift: f64, volatility: f64) -> Result<Self> {
        Self::new(drift, volatility, 0.0, vec![])
    }

    pub fn new(
        drift: f64,
        volatility: f64,
        jump_rate: f64,
        jump_mix: Vec<ExpComponent>,
    ) -> Result<Self> {
        if !drift.is_finite() || !volatility.is_finite() || !jump_rate.is_finite() {
            return Err(CoreError::InvalidModel("non-finite parameter".into()));
        }
        if volatility < 0.0 {
            return Err(CoreError::InvalidModel("volatility must be >= 0".into()));
        }
        if jump_rate < 0.0 {
            return Err(CoreError::InvalidModel("jump rate must be >= 0".into()));
        }
        if jump_rate > 0.0 && jump_mix.is_empty() {
            return Err(CoreError::InvalidModel(
                "positive jump rate requires a claim-size mixture".into(),
            ));
        }
        let mix = if jump_rate == 0.0 { vec![] } else { jump_mix };
        if !mix.is_empty() {
            let mut sum = 0.0;
            for c in &mix {
                if !(c.weight > 0.0) || !c.weight.is_finite() {
                    return Err(CoreError::InvalidModel(
                        "mixture weights must be positive".into(),
                    ));
                }
                if !(c.rate > 0.0) || !c.rate.is_finite() {
                    return Err(CoreError::InvalidModel(
                        "mixture rates must be positive".into(),
                    ));
                }
                sum += c.weight;
            }
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(CoreError::InvalidModel(format!(
                    "mixture weights must sum to 1 (got {sum})"
                )));
            }
            for i in 0..mix.len() {
                for j in (i + 1)..mix.len() {
                    if (mix[i].rate - mix[j].rate).abs() < 1e-12 * mix[i].rate.abs() {
                        return Err(CoreError::InvalidModel(
                            "mixture rates must be distinct; merge duplicate components".into(),
                        ));
                    }
                }
            }
        }
        let model = LevyModel {
            drift,
            volatility,
            jump_rate,
            jump_mix: mix,
        };
        // Monotone paths are excluded: for η = 0 the compensated drift c = γ
        // must be positive and some claim activity must be present.
        if volatility == 0.0 && drift <= 0.0 {
            return Err(CoreError::InvalidModel(
                "monotone paths: eta = 0 requires drift c > 0".into(),
            ));
        }
        if volatility == 0.0 && model.jump_rate == 0.0 {
            return Err(CoreError::InvalidModel(
                "monotone paths: pure drift without claims".into(),
            ));
        }
        debug_assert!(model.mean_drift().is_finite());
        Ok(model)
    }

    /// Laplace exponent ψ(θ) for θ ≥ 0 (analytic continuation for other real θ
    /// away from the mixture poles; used internally by the root finder).
    pub fn laplace_exponent(&self, theta: f64) -> Result<f64> {
        if theta < 0.0 {
            return Err(CoreError::Domain(format!(
                "laplace exponent requires theta >= 0, got {theta}"
            )));
        }
        Ok(self.psi_unchecked(theta))
    }

    /// ψ evaluated without the θ ≥ 0 domain check.
    pub(crate) fn psi_unchecked(&self, theta: f64) -> f64 {
        let mut v = self.drift * theta + 0.5 * self.volatility * self.volatility * theta * theta;
        if self.jump_rate > 0.0 {
            let mut mix = -1.0;
            for c in &self.jump_mix {
                mix += c.weight * c.rate / (c.rate + theta);
            }
            v += self.jump_rate * mix;
        }
        v
    }

    /// ψ'(θ).
    pub(crate) fn psi_prime(&self, theta: f64) -> f64 {
        let mut v = self.drift + self.volatility * self.volatility * theta;
        if self.jump_rate > 0.0 {
            for c in &self.jump_mix {
                let d = c.rate + theta;
                v -= self.jump_rate * c.weight * c.rate / (d * d);
            }
        }
        v
    }

    /// Mean drift ψ'(0+) = γ − η_J Σ p_k/α_k.
    pub fn mean_drift(&self) -> f64 {
        let mut v = self.drift;
        for c in &self.jump_mix {
            v -= self.jump_rate * c.weight / c.rate;
        }
        v
    }

    /// Mean claim size Σ p_k/α_k (0 when there are no jumps).
    pub fn mean_jump(&self) -> f64 {
        self.jump_mix.iter().map(|c| c.weight / c.rate).sum()
    }

    pub fn path_class(&self) -> PathClass {
        if self.volatility > 0.0 {
            PathClass::UnboundedVariation
        } else {
            PathClass::BoundedVariation { c: self.drift }
        }
    }

    /// W^{(q)}(0+): 1/c for bounded variation, 0 otherwise.
    pub fn w_at_zero(&self) -> f64 {
        match self.path_class() {
            PathClass::BoundedVariation { c } => 1.0 / c,
            PathClass::UnboundedVariation => 0.0,
        }
    }

    /// Right inverse Φ(q) = sup{λ ≥ 0 : ψ(λ) = q}, by safeguarded Newton on the
    /// convex ψ with a bisection fallback; |ψ(Φ(q)) − q| ≤ 1e-12·max(1, q).
    pub fn phi(&self, q: f64) -> Result<f64> {
        if q < 0.0 {
            return Err(CoreError::Domain(format!("phi requires q >= 0, got {q}")));
        }
        if q == 0.0 && self.mean_drift() >= 0.0 {
            return Ok(0.0);
        }
        let tol = 1e-12 * q.max(1.0);
        // Initial guess to the right of the root keeps Newton monotone on convex ψ.
        let eta = self.volatility;
        let mut hi = if eta > 0.0 {
            ((2.0 * q).sqrt() / eta).max(1.0)
        } else {
            (q / self.drift).max(1.0)
        };
        let lower = 0.0_f64;
        for _ in 0..200 {
            if self.psi_unchecked(hi) >= q {
                break;
            }
            hi *= 2.0;
        }
        let mut lo = lower;
        if self.psi_unchecked(hi) < q {
            return Err(CoreError::Numerical("phi bracket expansion failed".into()));
        }
        let mut x = hi;
        for _ in 0..200 {
            let f = self.psi_unchecked(x) - q;
            if f.abs() <= tol {
                return Ok(x);
            }
            if f > 0.0 {
                hi = hi.min(x);
            } else {
                lo = lo.max(x);
            }
            let fp = self.psi_prime(x);
            let newton = x - f / fp;
            x = if fp > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        let f = self.psi_unchecked(x) - q;
        if f.abs() <= tol * 10.0 {
            Ok(x)
        } else {
            Err(CoreError::Numerical(format!(
                "phi iteration stalled at residual {f:.3e}"
            )))
        }
    }
}
