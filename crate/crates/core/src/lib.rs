//! Optimal periodic dividend barriers with capital injection for spectrally
//! negative Lévy surplus processes.
//!
//! The surplus follows X(t) = γt + ηB(t) − Σ claims (hyperexponential claim
//! sizes), possibly modulated by a finite-state Markov chain with nonpositive
//! jumps at regime switches. Dividends can only be paid at the arrival times
//! of an independent Poisson clock of rate r (the surplus is then pushed down
//! to a barrier b), while capital injections keep the surplus nonnegative
//! continuously at unit cost β > 1. The solver computes the optimal barriers
//! and the value function:
//!
//! - [`levy`]: model family, Laplace exponent ψ, right inverse Φ;
//! - [`scale`]: exact exponential-sum scale functions W^{(q)}, Z^{(q)}, their
//!   antiderivatives, the shifted function Z^{(q)}(x, Φ(q+r)) and all
//!   (q,r)-composites and occupation kernels;
//! - [`barrier`]: the single-regime problem with exponential terminal payoff —
//!   value function, resolvents of the controlled processes, root function G
//!   and the optimal barrier b*;
//! - [`regime`]: the Markov-modulated layer — transform f̂, operators T_b and
//!   Γ, and the contraction fixed-point iteration with certified error bounds;
//! - [`mc`]: an independent event-driven Monte-Carlo engine used to
//!   cross-validate every closed form;
//! - [`quad`], [`exppoly`], [`piecewise`]: numerical support.

pub mod barrier;
pub mod exppoly;
pub mod levy;
pub mod mc;
pub mod piecewise;
pub mod quad;
pub mod regime;
pub mod scale;

pub use barrier::{AuxProblem, AuxSolution};
pub use levy::{CoreError, ExpComponent, LevyModel, PathClass};
pub use mc::{Estimate, PathConfig};
pub use piecewise::PayoffFn;
pub use regime::{RegimeModel, RegimeSolution};
pub use scale::{ScaleContext, ScalePair};
