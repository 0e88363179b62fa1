use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::stats::spearman_decreasing;
use crate::Result;

/// One measured quantity at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observable {
    pub name: String,
    pub replicates: u64,
    pub mean: f64,
    /// Confidence half-width; absent for derived statistics such as
    /// quantiles or p-values.
    pub half_width: Option<f64>,
    pub target: Option<f64>,
}

impl Observable {
    pub fn new(name: impl Into<String>, replicates: u64, mean: f64) -> Self {
        Self { name: name.into(), replicates, mean, half_width: None, target: None }
    }

    pub fn with_ci(mut self, half_width: f64) -> Self {
        self.half_width = Some(half_width);
        self
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: u64,
    pub observables: Vec<Observable>,
}

impl SweepRow {
    pub fn get(&self, name: &str) -> Option<&Observable> {
        self.observables.iter().find(|o| o.name == name)
    }
}

/// Acceptance rule over the rows of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AcceptanceRule {
    /// Distance `|mean - target|` decreases along the grid: one-sided
    /// Spearman test at `level`.
    Trend {
        observable: String,
        #[serde(default = "default_level")]
        level: f64,
    },
    /// The mean strictly decreases along the grid.
    Decreasing { observable: String },
    /// `|mean - target| <= tolerance` at `at` (default: the largest `n`).
    Tolerance {
        observable: String,
        tolerance: f64,
        #[serde(default)]
        at: Option<u64>,
    },
    /// `mean <= bound` at `at`, or on every row carrying the observable.
    AtMost {
        observable: String,
        bound: f64,
        #[serde(default)]
        at: Option<u64>,
    },
    /// `mean > bound` at `at`, or on every row carrying the observable.
    Above {
        observable: String,
        bound: f64,
        #[serde(default)]
        at: Option<u64>,
    },
}

fn default_level() -> f64 {
    0.05
}

impl AcceptanceRule {
    pub fn trend(observable: &str) -> Self {
        Self::Trend { observable: observable.into(), level: default_level() }
    }

    pub fn observable(&self) -> &str {
        match self {
            Self::Trend { observable, .. }
            | Self::Decreasing { observable }
            | Self::Tolerance { observable, .. }
            | Self::AtMost { observable, .. }
            | Self::Above { observable, .. } => observable,
        }
    }

    pub fn label(&self) -> String {
        let kind = match self {
            Self::Trend { .. } => "trend",
            Self::Decreasing { .. } => "decreasing",
            Self::Tolerance { .. } => "tolerance",
            Self::AtMost { .. } => "at_most",
            Self::Above { .. } => "above",
        };
        format!("{kind}:{}", self.observable())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleOutcome {
    pub label: String,
    pub rule: AcceptanceRule,
    pub passed: bool,
    /// The number the rule was decided on (p-value, distance, extreme).
    pub statistic: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub experiment: String,
    /// Resolved parameters echoed into every output.
    pub metadata: Map<String, Value>,
    /// Sorted by `n`.
    pub rows: Vec<SweepRow>,
    pub outcomes: Vec<RuleOutcome>,
    pub flags: Vec<String>,
    /// Seconds per grid point. Not part of the data outputs, which must not
    /// depend on the machine.
    pub wall_time_secs: Vec<(u64, f64)>,
}

impl SweepReport {
    pub fn new(experiment: &str, metadata: Map<String, Value>) -> Self {
        Self {
            experiment: experiment.into(),
            metadata,
            rows: Vec::new(),
            outcomes: Vec::new(),
            flags: Vec::new(),
            wall_time_secs: Vec::new(),
        }
    }

    /// Row for `n`, created in sorted position if missing.
    pub fn row_mut(&mut self, n: u64) -> &mut SweepRow {
        let pos = match self.rows.binary_search_by_key(&n, |r| r.n) {
            Ok(i) => i,
            Err(i) => {
                self.rows.insert(i, SweepRow { n, observables: Vec::new() });
                i
            }
        };
        &mut self.rows[pos]
    }

    pub fn row(&self, n: u64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    /// `(n, observable)` for every row carrying `name`, in grid order.
    pub fn series(&self, name: &str) -> Vec<(u64, &Observable)> {
        self.rows.iter().filter_map(|r| r.get(name).map(|o| (r.n, o))).collect()
    }

    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn outcome(&self, label: &str) -> Option<&RuleOutcome> {
        self.outcomes.iter().find(|o| o.label == label)
    }

    /// Long-format CSV: `n,observable,replicates,mean,half_width,target`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,observable,replicates,mean,half_width,target\n");
        for row in &self.rows {
            for o in &row.observables {
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{},{},{}", row.n, o.name, o.replicates, o.mean, opt(o.half_width), opt(o.target))
                    .expect("writing to a String");
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": 1,
            "experiment": self.experiment,
            "config": self.metadata,
            "passed": self.passed(),
            "criteria": self.outcomes,
            "flags": self.flags,
            "rows": self.rows,
        })
    }

    /// Writes `<experiment>.csv` and `<experiment>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.csv", self.experiment)), self.to_csv())?;
        let json = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(dir.join(format!("{}.json", self.experiment)), json + "\n")?;
        Ok(())
    }
}

fn select<'a>(report: &'a SweepReport, name: &str, at: Option<u64>, default_last: bool) -> Vec<(u64, &'a Observable)> {
    let series = report.series(name);
    match at {
        Some(n) => series.into_iter().filter(|(m, _)| *m == n).collect(),
        None if default_last => series.last().cloned().into_iter().collect(),
        None => series,
    }
}

fn missing(rule: &AcceptanceRule, why: &str) -> RuleOutcome {
    RuleOutcome { label: rule.label(), rule: rule.clone(), passed: false, statistic: f64::NAN, detail: why.into() }
}

fn evaluate(report: &SweepReport, rule: &AcceptanceRule) -> RuleOutcome {
    let name = rule.observable();
    let outcome = |passed: bool, statistic: f64, detail: String| RuleOutcome {
        label: rule.label(),
        rule: rule.clone(),
        passed,
        statistic,
        detail,
    };
    match rule {
        AcceptanceRule::Trend { level, .. } => {
            let series = report.series(name);
            if series.len() < 2 {
                return missing(rule, "trend needs at least two grid points");
            }
            let Some(dist) = series.iter().map(|(_, o)| o.target.map(|t| (o.mean - t).abs())).collect::<Option<Vec<_>>>()
            else {
                return missing(rule, "observable has no target");
            };
            let (rho, p) = spearman_decreasing(&dist);
            let shown: Vec<String> = dist.iter().map(|d| format!("{d:.4}")).collect();
            outcome(p < *level, p, format!("distances [{}], spearman {rho:.3}, p = {p:.4}", shown.join(", ")))
        }
        AcceptanceRule::Decreasing { .. } => {
            let series = report.series(name);
            if series.len() < 2 {
                return missing(rule, "needs at least two grid points");
            }
            let means: Vec<f64> = series.iter().map(|(_, o)| o.mean).collect();
            let ok = means.windows(2).all(|w| w[1] < w[0]);
            let worst = means.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            let shown: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
            outcome(ok, worst, format!("values [{}]", shown.join(", ")))
        }
        AcceptanceRule::Tolerance { tolerance, at, .. } => {
            let Some((n, o)) = select(report, name, *at, true).into_iter().next() else {
                return missing(rule, "observable not found");
            };
            let Some(target) = o.target else {
                return missing(rule, "observable has no target");
            };
            let dist = (o.mean - target).abs();
            outcome(dist <= *tolerance, dist, format!("n = {n}: |{:.5} - {:.5}| = {dist:.5} vs {tolerance}", o.mean, target))
        }
        AcceptanceRule::AtMost { bound, at, .. } | AcceptanceRule::Above { bound, at, .. } => {
            let upper = matches!(rule, AcceptanceRule::AtMost { .. });
            let chosen = select(report, name, *at, false);
            if chosen.is_empty() {
                return missing(rule, "observable not found");
            }
            let ok = chosen.iter().all(|(_, o)| if upper { o.mean <= *bound } else { o.mean > *bound });
            let extreme = if upper {
                chosen.iter().map(|(_, o)| o.mean).fold(f64::NEG_INFINITY, f64::max)
            } else {
                chosen.iter().map(|(_, o)| o.mean).fold(f64::INFINITY, f64::min)
            };
            let shown: Vec<String> = chosen.iter().map(|(n, o)| format!("n={n}: {}", o.mean)).collect();
            outcome(ok, extreme, format!("[{}] vs {}{bound}", shown.join(", "), if upper { "<= " } else { "> " }))
        }
    }
}

/// Replaces the outcomes of `report` with those of `rules`.
pub fn evaluate_rules(report: &mut SweepReport, rules: &[AcceptanceRule]) {
    report.outcomes = rules.iter().map(|r| evaluate(report, r)).collect();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> SweepReport {
        let mut r = SweepReport::new("demo", Map::new());
        for (i, n) in [1000u64, 10_000, 100_000, 1_000_000].into_iter().enumerate() {
            r.row_mut(n).observables.push(Observable::new("x", 10, 1.0 - 0.1 * i as f64).with_target(0.0));
            r.row_mut(n).observables.push(Observable::new("y", 10, 0.5 + 0.1 * i as f64).with_target(1.0));
        }
        r
    }

    #[test]
    fn rules_on_monotone_series() {
        let mut r = report();
        let rules = vec![
            AcceptanceRule::trend("x"),
            AcceptanceRule::trend("y"),
            AcceptanceRule::Decreasing { observable: "x".into() },
            AcceptanceRule::Tolerance { observable: "y".into(), tolerance: 0.21, at: None },
            AcceptanceRule::AtMost { observable: "x".into(), bound: 1.0, at: None },
            AcceptanceRule::Above { observable: "x".into(), bound: 0.75, at: Some(1000) },
            AcceptanceRule::trend("missing"),
        ];
        evaluate_rules(&mut r, &rules);
        let passed: Vec<bool> = r.outcomes.iter().map(|o| o.passed).collect();
        assert_eq!(passed, vec![true, true, true, true, true, true, false]);
        assert!((r.outcomes[0].statistic - 1.0 / 24.0).abs() < 1e-12);
        assert!(!r.passed());
    }

    #[test]
    fn rules_parse_from_json() {
        let rule: AcceptanceRule = serde_json::from_str(r#"{"kind":"trend","observable":"n1"}"#).unwrap();
        assert_eq!(rule, AcceptanceRule::trend("n1"));
        let rule: AcceptanceRule =
            serde_json::from_str(r#"{"kind":"at_most","observable":"tv","bound":0.01}"#).unwrap();
        assert_eq!(rule.label(), "at_most:tv");
        assert!(serde_json::from_str::<AcceptanceRule>(r#"{"kind":"trend","observable":"a","lvl":1}"#).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = report();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "n,observable,replicates,mean,half_width,target");
        assert_eq!(lines.next().unwrap(), "1000,x,10,1,,0");
        assert_eq!(csv.lines().count(), 9);
    }
}
