//! Structured-text run configuration (TOML): nested blocks of `key = value`
//! pairs, one block per concern. Unknown keys are rejected with the key
//! named, and parse -> serialize -> parse is the identity on recognized
//! fields.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use martmax::harness::TSamplingMode;
use martmax::martingale::{F0Atom, ScenarioKind, ScenarioParams, ScenarioSpec};

/// Which entry point the run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Verify,
    Bound,
    Simulate,
    Sweep,
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Bound => "bound",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub label: String,
    pub prob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
}

impl AtomConfig {
    fn to_atom(&self) -> F0Atom {
        let mut atom = F0Atom::new(self.label.clone(), self.prob);
        if let Some(s) = self.scale {
            atom = atom.with_scale(s);
        }
        if let Some(x) = self.x0 {
            atom = atom.with_x0(x);
        }
        atom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub d: usize,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_diag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_off: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trunc_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vol_strength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vol_sensitivity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomConfig>>,
}

impl ScenarioConfig {
    pub fn params(&self) -> ScenarioParams {
        let mut p = ScenarioParams::default();
        if let Some(v) = self.a_diag {
            p.a_diag = v;
        }
        if let Some(v) = self.a_off {
            p.a_off = v;
        }
        if let Some(v) = self.rho {
            p.rho = v;
        }
        if self.trunc_radius.is_some() {
            p.trunc_radius = self.trunc_radius;
        }
        if let Some(v) = self.vol_strength {
            p.vol_strength = v;
        }
        if let Some(v) = self.vol_sensitivity {
            p.vol_sensitivity = v;
        }
        p
    }

    pub fn atom_list(&self) -> Vec<F0Atom> {
        match &self.atoms {
            Some(list) if !list.is_empty() => list.iter().map(AtomConfig::to_atom).collect(),
            _ => vec![F0Atom::new("w", 1.0)],
        }
    }

    /// Build and validate the scenario for this configuration's own (kind,
    /// d, n).
    pub fn to_spec(&self) -> martmax::Result<ScenarioSpec> {
        ScenarioSpec::new(self.kind, self.d, self.n, self.params(), self.atom_list())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub replications: usize,
    pub base_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications_y: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<TSamplingMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub append: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_runtime: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kinds: Vec<ScenarioKind>,
    pub d: Vec<usize>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub base_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub only: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappas: Option<Vec<f64>>,
}

/// The whole run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
}

/// Minimum Monte Carlo replications for `simulate` and `sweep`.
pub const MIN_REPLICATIONS: usize = 1000;

/// A configuration problem: parse failure or invalid field values. Always
/// maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError(format!("config parse error: {e}")))
}

pub fn to_toml(config: &RunConfig) -> Result<String, ConfigError> {
    toml::to_string(config).map_err(|e| ConfigError(format!("config serialize error: {e}")))
}

impl RunConfig {
    /// Validate cross-field invariants and required blocks per command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(bound) = &self.bound {
            if let Some(alpha) = bound.alpha {
                if !(0.0..=0.25).contains(&alpha) {
                    return Err(ConfigError(format!(
                        "bound.alpha must lie in [0, 1/4], got {alpha}"
                    )));
                }
            }
            if let Some(c) = bound.constant {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(ConfigError(format!(
                        "bound.constant must be positive, got {c}"
                    )));
                }
            }
        }
        if let Some(mc) = &self.mc {
            if let Some(delta) = mc.delta {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(ConfigError(format!(
                        "mc.delta must lie in (0, 1), got {delta}"
                    )));
                }
            }
        }
        if let Some(verify) = &self.verify {
            if let Some(kappas) = &verify.kappas {
                if kappas.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
                    return Err(ConfigError(format!(
                        "verify.kappas must be positive and finite, got {kappas:?}"
                    )));
                }
            }
        }
        match self.command {
            Command::Verify | Command::Selftest => {
                if self.verify.is_none() {
                    return Err(ConfigError(
                        "command requires a [verify] block with base_seed (seeds are explicit; \
                         there is no wall-clock default)"
                            .into(),
                    ));
                }
            }
            Command::Bound => {
                if self.scenario.is_none() {
                    return Err(ConfigError("bound requires a [scenario] block".into()));
                }
                self.require_mc(false)?;
            }
            Command::Simulate => {
                if self.scenario.is_none() {
                    return Err(ConfigError("simulate requires a [scenario] block".into()));
                }
                self.require_mc(true)?;
            }
            Command::Sweep => {
                let sweep = self
                    .sweep
                    .as_ref()
                    .ok_or_else(|| ConfigError("sweep requires a [sweep] block".into()))?;
                if sweep.kinds.is_empty() || sweep.d.is_empty() || sweep.n.is_empty() {
                    return Err(ConfigError(
                        "sweep.kinds, sweep.d, and sweep.n must be non-empty".into(),
                    ));
                }
                self.require_mc(true)?;
            }
        }
        Ok(())
    }

    fn require_mc(&self, check_reps: bool) -> Result<(), ConfigError> {
        let mc = self.mc.as_ref().ok_or_else(|| {
            ConfigError(
                "command requires an [mc] block with base_seed (seeds are explicit; there is \
                 no wall-clock default)"
                    .into(),
            )
        })?;
        if check_reps {
            let reps = mc.replications.min(mc.replications_y.unwrap_or(mc.replications));
            if reps < MIN_REPLICATIONS {
                return Err(ConfigError(format!(
                    "mc.replications must be at least {MIN_REPLICATIONS} for simulate/sweep, \
                     got {reps}"
                )));
            }
        }
        Ok(())
    }
}
