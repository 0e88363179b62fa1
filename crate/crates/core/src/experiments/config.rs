use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::report::AcceptanceRule;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    AlleleCounts,
    FluidDistance,
    KingmanBaseline,
    BetaLimits,
    SegregatingSites,
    ExactVsMc,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::AlleleCounts => "allele_counts",
            Self::FluidDistance => "fluid_distance",
            Self::KingmanBaseline => "kingman_baseline",
            Self::BetaLimits => "beta_limits",
            Self::SegregatingSites => "segregating_sites",
            Self::ExactVsMc => "exact_vs_mc",
        }
    }
}

/// Replicates per grid point: one count for all, one per grid point, or
/// the default schedule `2000 (1000/n)^(1/3)` clamped to `[30, 2000]`,
/// which gives 2000 at `n = 10^3` and 200 at `n = 10^6`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Replicates {
    Fixed(u64),
    PerN(Vec<u64>),
}

impl Replicates {
    pub fn auto(n_grid: &[u64]) -> Self {
        Self::PerN(
            n_grid
                .iter()
                .map(|&n| (2000.0 * (1000.0 / n as f64).cbrt()).round().clamp(30.0, 2000.0) as u64)
                .collect(),
        )
    }

    pub fn count(&self, index: usize) -> u64 {
        match self {
            Self::Fixed(r) => *r,
            Self::PerN(v) => v[index],
        }
    }

    fn check(&self, grid_len: usize) -> Result<()> {
        match self {
            Self::PerN(v) if v.len() != grid_len => Err(Error::Parameter(format!(
                "replicates list has {} entries for {grid_len} grid points",
                v.len()
            ))),
            _ => Ok(()),
        }
    }
}

impl From<u64> for Replicates {
    fn from(r: u64) -> Self {
        Self::Fixed(r)
    }
}

/// Experiment configuration, read from JSON or `key = value` lines.
/// Missing fields take per-experiment defaults in [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Truncation level; also the largest block size reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<Replicates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Not echoed into outputs.
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chisq_n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chisq_replicates: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluct_n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluct_replicates: Option<u64>,
    /// `oracle` or `ewens`, for `exact_vs_mc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<Vec<AcceptanceRule>>,
}

const GRID_3_TO_6: [u64; 4] = [1_000, 10_000, 100_000, 1_000_000];
const GRID_3_TO_5: [u64; 3] = [1_000, 10_000, 100_000];

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            model: None,
            rho: None,
            theta: None,
            alpha: None,
            d: None,
            n_grid: None,
            replicates: None,
            seed: None,
            out_dir: None,
            level: None,
            t0: None,
            grid_step: None,
            deltas: None,
            chisq_n: None,
            chisq_replicates: None,
            fluct_n: None,
            fluct_replicates: None,
            reference: None,
            rules: None,
        }
    }

    /// JSON when the text starts with `{`, otherwise `key = value` lines.
    /// Values are parsed as JSON where possible; a bare comma-separated
    /// value becomes a list. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("config JSON: {e}")))?
        } else {
            let mut map = Map::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, raw) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", lineno + 1)))?;
                let key = key.trim().replace('-', "_");
                if map.insert(key.clone(), scalar_or_list(raw.trim())).is_some() {
                    return Err(Error::Parse(format!("config line {}: duplicate key {key}", lineno + 1)));
                }
            }
            Value::Object(map)
        };
        serde_json::from_value(value).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fills every unset field with the default for this experiment.
    pub fn resolve(&self) -> Result<Self> {
        use ExperimentKind::*;
        let mut c = self.clone();
        let kind = c.experiment;
        c.seed.get_or_insert(1);
        c.level.get_or_insert(0.95);
        match kind {
            AlleleCounts | SegregatingSites => {
                c.model.get_or_insert_with(|| "bs".into());
                c.rho.get_or_insert(0.5);
                c.d.get_or_insert(3);
                c.n_grid.get_or_insert_with(|| GRID_3_TO_6.to_vec());
            }
            FluidDistance => {
                c.model.get_or_insert_with(|| "bs".into());
                c.rho.get_or_insert(0.5);
                c.d.get_or_insert(3);
                c.n_grid.get_or_insert_with(|| GRID_3_TO_5.to_vec());
                c.replicates.get_or_insert(Replicates::Fixed(200));
                c.t0.get_or_insert(3.0);
                c.grid_step.get_or_insert(0.01);
                c.deltas.get_or_insert_with(|| vec![0.25, 0.5]);
            }
            KingmanBaseline => {
                c.model.get_or_insert_with(|| "kingman".into());
                c.theta.get_or_insert(1.0);
                c.d.get_or_insert(3);
                c.n_grid.get_or_insert_with(|| GRID_3_TO_5.to_vec());
                c.chisq_n.get_or_insert(10_000);
                c.chisq_replicates.get_or_insert(10_000);
                c.fluct_n.get_or_insert(100_000);
                c.fluct_replicates.get_or_insert(10_000);
            }
            BetaLimits => {
                c.alpha.get_or_insert(1.5);
                let alpha = c.alpha.expect("set above");
                c.model.get_or_insert_with(|| format!("beta:{alpha}"));
                c.rho.get_or_insert(1.0);
                c.d.get_or_insert(2);
                c.n_grid.get_or_insert_with(|| GRID_3_TO_5.to_vec());
            }
            ExactVsMc => {
                c.model.get_or_insert_with(|| "bs".into());
                c.rho.get_or_insert(0.5);
                c.n_grid.get_or_insert_with(|| (2..=7).collect());
                c.replicates.get_or_insert(Replicates::Fixed(100_000));
                c.reference.get_or_insert_with(|| "oracle".into());
            }
        }
        let grid = c.n_grid.clone().expect("set above");
        if grid.is_empty() {
            return Err(Error::Parameter("n_grid is empty".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("n_grid must be strictly increasing".into()));
        }
        c.replicates.get_or_insert_with(|| Replicates::auto(&grid)).check(grid.len())?;
        Ok(c)
    }

    /// The resolved configuration as echoed into report headers.
    pub fn echo(&self) -> Map<String, Value> {
        match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        }
    }
}

fn scalar_or_list(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    if raw.contains(',') {
        return Value::Array(raw.split(',').map(|s| scalar_or_list(s.trim())).collect());
    }
    Value::String(raw.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_and_json_agree() {
        let kv = "# sweep\nexperiment = allele_counts\nrho = 0.5\nn_grid = 1000, 10000\nreplicates = 40\nseed = 9\n";
        let js = r#"{"experiment": "allele_counts", "rho": 0.5, "n_grid": [1000, 10000], "replicates": 40, "seed": 9}"#;
        assert_eq!(ExperimentConfig::parse(kv).unwrap(), ExperimentConfig::parse(js).unwrap());
    }

    #[test]
    fn rules_and_lists_in_key_value_form() {
        let kv = "experiment = exact_vs_mc\nn_grid = [2, 3]\nreplicates = [10, 20]\n\
                  rules = [{\"kind\": \"at_most\", \"observable\": \"tv\", \"bound\": 0.05}]\n";
        let c = ExperimentConfig::parse(kv).unwrap().resolve().unwrap();
        assert_eq!(c.replicates, Some(Replicates::PerN(vec![10, 20])));
        assert_eq!(c.rules.unwrap().len(), 1);
    }

    #[test]
    fn bad_configs() {
        assert!(ExperimentConfig::parse("experiment = nope").is_err());
        assert!(ExperimentConfig::parse("experiment = allele_counts\nbogus = 1").is_err());
        assert!(ExperimentConfig::parse("experiment allele_counts").is_err());
        let c = ExperimentConfig::parse("experiment = allele_counts\nn_grid = 10, 5").unwrap();
        assert!(c.resolve().is_err());
        let c = ExperimentConfig::parse("experiment = allele_counts\nn_grid = 10, 50\nreplicates = 3, 4, 5").unwrap();
        assert!(c.resolve().is_err());
    }

    #[test]
    fn default_replicate_schedule() {
        assert_eq!(Replicates::auto(&[1000, 1_000_000]), Replicates::PerN(vec![2000, 200]));
    }

    #[test]
    fn echo_omits_output_directory() {
        let mut c = ExperimentConfig::new(ExperimentKind::AlleleCounts);
        c.out_dir = Some("/tmp/x".into());
        let echo = c.resolve().unwrap().echo();
        assert!(!echo.contains_key("out_dir"));
        assert_eq!(echo["rho"], 0.5);
    }
}
