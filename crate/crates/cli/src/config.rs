//! Configuration schema: a TOML file mirroring the problem definition
//! field-for-field, plus solver and oracle settings. Validation reports every
//! violated field with a named diagnostic before any numeric work starts.

use levydiv_core::levy::{ExpComponent, LevyModel};
use levydiv_core::piecewise::PayoffFn;
use levydiv_core::regime::{FixedPointSettings, RegimeModel, RegimeState, SwitchJump};
use levydiv_core::barrier::AuxProblem;
use levydiv_core::mc::{Horizon, PathConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Aux(AuxConfig),
    Regime(RegimeConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxConfig {
    pub model: ModelConfig,
    pub discount: f64,
    pub terminal_rate: f64,
    pub decision_rate: f64,
    pub injection_cost: f64,
    pub payoff: PayoffConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub drift: f64,
    pub volatility: f64,
    #[serde(default)]
    pub jump_rate: f64,
    #[serde(default)]
    pub jump_mixture: Vec<MixtureComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    /// [x, w(x)] pairs; x must start at 0 and increase.
    pub knots: Vec<[f64; 2]>,
    pub tail_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    pub decision_rate: f64,
    pub injection_cost: f64,
    pub generator: Vec<Vec<f64>>,
    pub states: Vec<StateConfig>,
    /// switch_jumps[i][j] describes the jump applied on a transition i → j.
    pub switch_jumps: Vec<Vec<JumpConfig>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub discount: f64,
    pub model: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpConfig {
    None,
    PointMass { at: f64 },
    NegExp { rate: f64 },
    Discrete { atoms: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub grid_points: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub x_max: Option<f64>,
    /// Fixed barrier override for `simulate`; the solver otherwise uses b*.
    pub barrier: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid_points: 2000,
            tolerance: 1e-8,
            max_iter: 400,
            x_max: None,
            barrier: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub dt: Option<f64>,
    /// "exp_kill" or "truncate"
    pub horizon: String,
    /// T_max = t_max_factor / q when horizon = "truncate"
    pub t_max_factor: f64,
    pub antithetic: bool,
    /// Evaluation points for `simulate` and `verify`.
    pub points: Vec<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_paths: 200_000,
            seed: 1,
            dt: None,
            horizon: "exp_kill".into(),
            t_max_factor: 40.0,
            antithetic: false,
            points: vec![],
        }
    }
}

impl OracleConfig {
    pub fn path_config(&self) -> Result<PathConfig, Vec<String>> {
        let horizon = match self.horizon.as_str() {
            "exp_kill" => Horizon::ExpKill,
            "truncate" => Horizon::Truncate {
                t_max_factor: self.t_max_factor,
            },
            other => {
                return Err(vec![format!(
                    "oracle.horizon: unknown policy '{other}' (use exp_kill or truncate)"
                )])
            }
        };
        if self.n_paths < 2 {
            return Err(vec!["oracle.n_paths: need at least 2 paths".into()]);
        }
        Ok(PathConfig {
            n_paths: self.n_paths,
            seed: self.seed,
            dt: self.dt,
            horizon,
            antithetic: self.antithetic,
        })
    }
}

impl ModelConfig {
    pub fn build(&self, at: &str, errors: &mut Vec<String>) -> Option<LevyModel> {
        let mix: Vec<ExpComponent> = self
            .jump_mixture
            .iter()
            .map(|c| ExpComponent {
                weight: c.weight,
                rate: c.rate,
            })
            .collect();
        match LevyModel::new(self.drift, self.volatility, self.jump_rate, mix) {
            Ok(m) => Some(m),
            Err(e) => {
                errors.push(format!("{at}: {e}"));
                None
            }
        }
    }
}

impl PayoffConfig {
    pub fn build(&self, at: &str, errors: &mut Vec<String>) -> Option<PayoffFn> {
        let xs: Vec<f64> = self.knots.iter().map(|k| k[0]).collect();
        let vals: Vec<f64> = self.knots.iter().map(|k| k[1]).collect();
        match PayoffFn::new(xs, vals, self.tail_slope) {
            Ok(w) => Some(w),
            Err(e) => {
                errors.push(format!("{at}: {e}"));
                None
            }
        }
    }
}

/// Fully validated problem ready to run.
#[derive(Debug)]
pub enum BuiltProblem {
    Aux(AuxProblem),
    Regime(RegimeModel),
}

impl RunConfig {
    /// Parses and validates; on failure returns the list of field-level errors.
    pub fn parse(text: &str) -> Result<(RunConfig, BuiltProblem), Vec<String>> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| vec![format!("config: {e}")])?;
        let built = cfg.build()?;
        Ok((cfg, built))
    }

    pub fn build(&self) -> Result<BuiltProblem, Vec<String>> {
        let mut errors = Vec::new();
        let built = match &self.problem {
            ProblemConfig::Aux(a) => {
                if !(a.injection_cost > 1.0) {
                    errors.push(format!(
                        "problem.injection_cost: must exceed 1 (got {})",
                        a.injection_cost
                    ));
                }
                if !(a.discount > 0.0) {
                    errors.push(format!(
                        "problem.discount: must be positive (got {})",
                        a.discount
                    ));
                }
                if a.terminal_rate < 0.0 {
                    errors.push("problem.terminal_rate: must be nonnegative".into());
                }
                if !(a.decision_rate > 0.0) {
                    errors.push("problem.decision_rate: must be positive".into());
                }
                let model = a.model.build("problem.model", &mut errors);
                let payoff = a.payoff.build("problem.payoff", &mut errors);
                match (model, payoff) {
                    (Some(m), Some(w)) if errors.is_empty() => {
                        match AuxProblem::new(
                            m,
                            a.discount,
                            a.terminal_rate,
                            a.decision_rate,
                            a.injection_cost,
                            w,
                        ) {
                            Ok(p) => Some(BuiltProblem::Aux(p)),
                            Err(e) => {
                                errors.push(format!("problem: {e}"));
                                None
                            }
                        }
                    }
                    _ => None,
                }
            }
            ProblemConfig::Regime(r) => {
                let n = r.states.len();
                if r.generator.len() != n || r.generator.iter().any(|row| row.len() != n) {
                    errors.push(format!("problem.generator: must be {n}x{n}"));
                }
                for (i, row) in r.generator.iter().enumerate() {
                    let s: f64 = row.iter().sum();
                    if s.abs() > 1e-10 {
                        errors.push(format!(
                            "problem.generator[{i}]: row sums to {s}, expected 0"
                        ));
                    }
                }
                if !(r.injection_cost > 1.0) {
                    errors.push(format!(
                        "problem.injection_cost: must exceed 1 (got {})",
                        r.injection_cost
                    ));
                }
                let mut states = Vec::new();
                for (i, sc) in r.states.iter().enumerate() {
                    if !(sc.discount > 0.0) {
                        errors.push(format!("problem.states[{i}].discount: must be positive"));
                    }
                    if let Some(m) =
                        sc.model.build(&format!("problem.states[{i}].model"), &mut errors)
                    {
                        states.push(RegimeState {
                            model: m,
                            discount: sc.discount,
                        });
                    }
                }
                let jumps: Vec<Vec<SwitchJump>> = r
                    .switch_jumps
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|j| match j {
                                JumpConfig::None => SwitchJump::None,
                                JumpConfig::PointMass { at } => SwitchJump::PointMass { at: *at },
                                JumpConfig::NegExp { rate } => SwitchJump::NegExp { rate: *rate },
                                JumpConfig::Discrete { atoms } => SwitchJump::Discrete {
                                    atoms: atoms.iter().map(|a| (a[0], a[1])).collect(),
                                },
                            })
                            .collect()
                    })
                    .collect();
                if states.len() == n && errors.is_empty() {
                    match RegimeModel::new(
                        states,
                        r.generator.clone(),
                        jumps,
                        r.decision_rate,
                        r.injection_cost,
                    ) {
                        Ok(m) => Some(BuiltProblem::Regime(m)),
                        Err(e) => {
                            errors.push(format!("problem: {e}"));
                            None
                        }
                    }
                } else {
                    None
                }
            }
        };
        match built {
            Some(b) if errors.is_empty() => Ok(b),
            _ => Err(errors)
        }
    }

    pub fn fixed_point_settings(&self) -> FixedPointSettings {
        FixedPointSettings {
            grid_points: self.solver.grid_points,
            tol: self.solver.tolerance,
            max_iter: self.solver.max_iter,
            x_max: self.solver.x_max,
        }
    }

    /// Canonical serialized form; parse(emit(parse(x))) == parse(x).
    pub fn emit(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }
}
