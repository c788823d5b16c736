//! Experiment configuration files (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use enlarge_core::levy_sim::LevyModel;
use enlarge_core::random_time::HazardSpec;
use enlarge_core::representation::{FeatureSpec, Gate, Monomial, Payoff, TerminalFunction};
use enlarge_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyLevy,
    VerifyEnlargement,
    Represent,
    Multiplicity,
    TimeChange,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::VerifyLevy => "verify-levy",
            Experiment::VerifyEnlargement => "verify-enlargement",
            Experiment::Represent => "represent",
            Experiment::Multiplicity => "multiplicity",
            Experiment::TimeChange => "time-change",
        })
    }
}

fn default_horizon() -> f64 {
    1.0
}

fn default_steps() -> usize {
    1024
}

fn default_paths() -> usize {
    100_000
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub model: LevyModel<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard: Option<HazardSpec<f64>>,
    #[serde(default)]
    pub payoffs: Vec<Payoff<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureSpec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_features: Option<FeatureSpec<f64>>,
    #[serde(default)]
    pub levy: LevySection,
    #[serde(default)]
    pub enlargement: EnlargementSection,
    #[serde(default)]
    pub represent: RepresentSection,
    #[serde(default)]
    pub multiplicity: MultiplicitySection,
    #[serde(default)]
    pub time_change: TimeChangeSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevySection {
    pub u_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
}

impl Default for LevySection {
    fn default() -> Self {
        LevySection {
            u_grid: vec![0.5, 1.0, 2.0],
            t_grid: vec![0.25, 0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnlargementSection {
    pub identity_tolerance: f64,
    pub azema_outer_paths: usize,
    pub azema_inner_draws: usize,
    pub azema_times: Vec<f64>,
    pub test_times: Vec<f64>,
    pub u_grid: Vec<f64>,
    /// Conditioning time of the post-default characteristic-function check.
    pub post_default_time: f64,
    /// `max |z|` the uncompensated default indicator must exceed.
    pub negative_control_z: f64,
}

impl Default for EnlargementSection {
    fn default() -> Self {
        EnlargementSection {
            identity_tolerance: 1e-10,
            azema_outer_paths: 64,
            azema_inner_draws: 4000,
            azema_times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            test_times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            u_grid: vec![0.5, 1.0, 2.0],
            post_default_time: 0.5,
            negative_control_z: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSection {
    pub g: TerminalFunction<f64>,
    pub s: f64,
    #[serde(default = "default_explicit_tolerance")]
    pub tolerance: f64,
}

fn default_explicit_tolerance() -> f64 {
    0.05
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepresentSection {
    /// Residual gate per payoff, in panel order; missing entries are not gated.
    pub tolerances: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit: Option<ExplicitSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiplicitySection {
    pub tolerance: f64,
    pub gap: f64,
    /// Expect the single integrator to fail (absolutely continuous hazard only).
    pub negative_control: bool,
}

impl Default for MultiplicitySection {
    fn default() -> Self {
        MultiplicitySection {
            tolerance: 0.05,
            gap: 0.10,
            negative_control: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeChangeSection {
    /// Time at which the Cantor clock reaches one; defaults to the horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
    /// Relative tolerance on the batch mean of `[X, X]_T`.
    pub qv_tolerance: f64,
}

impl Default for TimeChangeSection {
    fn default() -> Self {
        TimeChangeSection {
            s_max: None,
            qv_tolerance: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Configuration(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the effective configuration (after overrides, ignoring
    /// the output directory), hex encoded.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        Sha256::digest(canonical.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn hazard(&self, experiment: Experiment) -> Result<&HazardSpec<f64>> {
        self.hazard
            .as_ref()
            .ok_or_else(|| Error::Configuration(format!("missing field `hazard` (required by {experiment})")))
    }

    /// Configured features, or the enlarged defaults with survival gates
    /// for every `s` in the panel.
    pub fn features(&self) -> FeatureSpec<f64> {
        self.features
            .clone()
            .unwrap_or_else(|| panel_features(&FeatureSpec::default_enlarged(), &self.payoffs))
    }

    pub fn reference_features(&self) -> FeatureSpec<f64> {
        self.reference_features
            .clone()
            .unwrap_or_else(|| FeatureSpec::default_reference().refined(&[Monomial::new(3, 0)], &[]))
    }

    /// Checks what the experiment needs beyond the file syntax.
    pub fn validate(&self, experiment: Experiment) -> Result<()> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(Error::Configuration(format!(
                    "field `experiment` is {e} but the subcommand is {experiment}"
                )));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Configuration("field `horizon` must be positive".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Configuration("field `n_steps` must be positive".into()));
        }
        self.model
            .validate()
            .map_err(|e| Error::Configuration(format!("field `model`: {e}")))?;
        if let Some(h) = &self.hazard {
            h.validate()
                .map_err(|e| Error::Configuration(format!("field `hazard`: {e}")))?;
        }
        for (i, p) in self.payoffs.iter().enumerate() {
            p.validate(self.horizon)
                .map_err(|e| Error::Configuration(format!("field `payoffs[{i}]`: {e}")))?;
            if let Payoff::JumpTerminal { index } = p {
                if *index >= self.model.nu.len() {
                    return Err(Error::Configuration(format!(
                        "field `payoffs[{i}]`: no jump member {index}"
                    )));
                }
            }
        }
        for (name, f) in [
            ("features", &self.features),
            ("reference_features", &self.reference_features),
        ] {
            if let Some(f) = f {
                f.validate()
                    .map_err(|e| Error::Configuration(format!("field `{name}`: {e}")))?;
            }
        }
        match experiment {
            Experiment::VerifyLevy => {}
            Experiment::VerifyEnlargement => {
                self.hazard(experiment)?;
            }
            Experiment::Represent => {
                if self.payoffs.is_empty() && self.represent.explicit.is_none() {
                    return Err(Error::Configuration(
                        "field `payoffs` is empty and no `represent.explicit` claim is given".into(),
                    ));
                }
                self.hazard(experiment)?;
                if let Some(x) = &self.represent.explicit {
                    if !x.g.is_bounded() {
                        return Err(Error::Configuration(
                            "field `represent.explicit.g` must be bounded".into(),
                        ));
                    }
                    if !(0.0..=self.horizon).contains(&x.s) {
                        return Err(Error::Configuration(
                            "field `represent.explicit.s` must lie in [0, horizon]".into(),
                        ));
                    }
                }
            }
            Experiment::Multiplicity | Experiment::TimeChange => {
                let h = self.hazard(experiment)?;
                if self.model.total_intensity() > 0.0 {
                    return Err(Error::Configuration(format!(
                        "field `model`: {experiment} needs a model without jumps"
                    )));
                }
                let ac = h.class() == enlarge_core::random_time::HazardClass::AbsolutelyContinuous;
                if experiment == Experiment::TimeChange && !ac {
                    return Err(Error::Configuration(
                        "field `hazard`: time-change needs an absolutely continuous hazard".into(),
                    ));
                }
                if self.multiplicity.negative_control && !ac {
                    return Err(Error::Configuration(
                        "field `multiplicity.negative_control` needs an absolutely continuous hazard".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Enlarged features with survival gates at every `s` used by the panel.
pub fn panel_features(base: &FeatureSpec<f64>, panel: &[Payoff<f64>]) -> FeatureSpec<f64> {
    let gates: Vec<Gate<f64>> = panel
        .iter()
        .filter_map(|p| match p {
            Payoff::Survival { s, .. } => Some([Gate::AliveUntil { s: *s }, Gate::AliveBefore { s: *s }]),
            _ => None,
        })
        .flatten()
        .collect();
    base.refined(&[], &gates)
}
