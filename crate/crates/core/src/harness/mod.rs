//! Experiment configuration and the sweeps reproducing the evaluation
//! experiments, plus the statistical property suite.
//!
//! Every sweep returns rows in a fixed grid order. Grid cells run in
//! parallel on the current rayon pool, and every estimate draws from streams
//! keyed by the row's seed, so output is byte-identical for any thread count.

mod bimodal;
mod hmm;
mod linreg;
mod property;

pub use bimodal::{run_bimodal, BimodalConfig, BimodalRow, ProposalSpec};
pub use hmm::{default_hmm_params, run_hmm_sweep, GoldKind, HmmRow, HmmSweepConfig};
pub use linreg::{default_linreg_params, run_linreg_sweep, LinregRow, LinregSweepConfig};
pub use property::{run_property_suite, PropertyCheck, PropertyReport, PropertySuiteConfig};

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LinregSweep,
    HmmSweep,
    Bimodal,
    PropertySuite,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExperimentKind::LinregSweep => "linreg-sweep",
            ExperimentKind::HmmSweep => "hmm-sweep",
            ExperimentKind::Bimodal => "bimodal",
            ExperimentKind::PropertySuite => "property-suite",
        })
    }
}

/// Top-level configuration. Only the section matching `experiment` is used;
/// absent sections take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub linreg: LinregSweepConfig,
    #[serde(default)]
    pub hmm: HmmSweepConfig,
    #[serde(default)]
    pub bimodal: BimodalConfig,
    #[serde(default)]
    pub property: PropertySuiteConfig,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 0,
            output: None,
            linreg: LinregSweepConfig::default(),
            hmm: HmmSweepConfig::default(),
            bimodal: BimodalConfig::default(),
            property: PropertySuiteConfig::default(),
        }
    }

    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::config(origin, e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::config(origin, e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Check the section used by `experiment`; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        match self.experiment {
            ExperimentKind::LinregSweep => self.linreg.validate("linreg"),
            ExperimentKind::HmmSweep => self.hmm.validate("hmm"),
            ExperimentKind::Bimodal => self.bimodal.validate("bimodal"),
            ExperimentKind::PropertySuite => self.property.validate("property"),
        }
    }
}

/// Result of running one experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Linreg(Vec<LinregRow>),
    Hmm(Vec<HmmRow>),
    Bimodal(Vec<BimodalRow>),
    Property(PropertyReport),
}

impl ExperimentOutput {
    /// The output file contents: CSV for sweeps, JSON for the property suite.
    pub fn render(&self) -> Result<String> {
        match self {
            ExperimentOutput::Linreg(rows) => to_csv(rows),
            ExperimentOutput::Hmm(rows) => to_csv(rows),
            ExperimentOutput::Bimodal(rows) => to_csv(rows),
            ExperimentOutput::Property(report) => Ok(serde_json::to_string_pretty(report)? + "\n"),
        }
    }

    /// Whether every check passed; sweeps always pass.
    pub fn passed(&self) -> bool {
        match self {
            ExperimentOutput::Property(r) => r.passed,
            _ => true,
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    Ok(match cfg.experiment {
        ExperimentKind::LinregSweep => {
            ExperimentOutput::Linreg(run_linreg_sweep(&cfg.linreg, cfg.seed)?)
        }
        ExperimentKind::HmmSweep => ExperimentOutput::Hmm(run_hmm_sweep(&cfg.hmm, cfg.seed)?),
        ExperimentKind::Bimodal => ExperimentOutput::Bimodal(run_bimodal(&cfg.bimodal, cfg.seed)?),
        ExperimentKind::PropertySuite => {
            ExperimentOutput::Property(run_property_suite(&cfg.property, cfg.seed)?)
        }
    })
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub(crate) fn check_positive(path: &str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(Error::config(path, "must be at least 1"));
    }
    Ok(())
}

pub(crate) fn check_grid(path: &str, values: &[usize]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(path, "grid must not be empty"));
    }
    for (i, &v) in values.iter().enumerate() {
        check_positive(&format!("{path}[{i}]"), v)?;
    }
    Ok(())
}

pub(crate) fn check_finite_positive(path: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::config(path, "must be a finite positive number"));
    }
    Ok(())
}

/// Key-value rendering of the settings that are constant across a sweep.
pub(crate) fn settings_string(pairs: &[(&str, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys_and_names_fields() {
        let err = ExperimentConfig::parse("experiment = \"bimodal\"\nbogus = 1\n", "cfg.toml")
            .unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = ExperimentConfig::parse(
            "experiment = \"bimodal\"\n[bimodal]\nn_gold = 0\n",
            "cfg.toml",
        )
        .unwrap_err();
        assert!(err.to_string().contains("bimodal.n_gold"), "{err}");
        let err = ExperimentConfig::parse(
            "experiment = \"linreg-sweep\"\n[linreg]\nsmc_particles = [4, 0]\n",
            "c",
        )
        .unwrap_err();
        assert!(err.to_string().contains("linreg.smc_particles[1]"), "{err}");
    }

    #[test]
    fn json_and_toml_agree() {
        let a = ExperimentConfig::parse(
            "experiment = \"hmm-sweep\"\nseed = 5\n[hmm]\nparticles = [2]\n",
            "a",
        )
        .unwrap();
        let b = ExperimentConfig::parse(
            r#"{"experiment": "hmm-sweep", "seed": 5, "hmm": {"particles": [2]}}"#,
            "b",
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_replications_rejected() {
        let err = ExperimentConfig::parse(
            "experiment = \"property-suite\"\n[property]\nreplications = 0\n",
            "c",
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Config { ref path, .. } if path == "property.replications"),
            "{err}"
        );
    }
}
