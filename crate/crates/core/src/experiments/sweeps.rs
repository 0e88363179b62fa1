use std::collections::BTreeMap;
use std::time::Instant;

use serde_json::{json, Map, Value};
use statrs::function::gamma::gamma;

use super::config::{ExperimentConfig, ExperimentKind, Replicates};
use super::report::{evaluate_rules, AcceptanceRule, Observable, SweepReport};
use super::stats::{chi_square_poisson, ks_standard_normal, mean_ci, quantile, sample_sd, total_variation, tv_three_sigma};
use crate::coalescent_sim::{RunResult, SimMode, Simulator};
use crate::exact_solver::{absorption_oracle, enumerate_configs, ewens_q, AlleleConfig};
use crate::lambda_rates::LambdaModel;
use crate::seeding::derive_seed;
use crate::{Error, Result};

/// Grid, replicate counts, seed and confidence level shared by all sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n_grid: Vec<u64>,
    pub replicates: Replicates,
    pub seed: u64,
    pub level: f64,
}

impl GridSpec {
    pub fn new(n_grid: Vec<u64>, replicates: impl Into<Replicates>, seed: u64) -> Self {
        Self { n_grid, replicates: replicates.into(), seed, level: 0.95 }
    }

    /// Seed for the replicates of grid point `n`; `stream` separates
    /// independent batches at the same `n`.
    fn seed_for(&self, n: u64, stream: u64) -> u64 {
        derive_seed(derive_seed(self.seed, n), stream)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("mutation rate must be positive, got {rho}")))
    }
}

fn mean_obs(name: &str, xs: &[f64], level: f64) -> Observable {
    let (m, h) = mean_ci(xs, level);
    Observable::new(name, xs.len() as u64, m).with_ci(h)
}

fn timed<T>(report: &mut SweepReport, n: u64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    report.wall_time_secs.push((n, start.elapsed().as_secs_f64()));
    Ok(out)
}

fn base_metadata(grid: &GridSpec) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("n_grid".into(), json!(grid.n_grid));
    m.insert("replicates".into(), serde_json::to_value(&grid.replicates).unwrap_or(Value::Null));
    m.insert("seed".into(), json!(grid.seed));
    m.insert("level".into(), json!(grid.level));
    m
}

/// Rescaled allele counts of the Bolthausen-Sznitman coalescent against
/// their limits: `N_1 log n / n -> rho`, `N_k (log n)^2 / n -> rho/(k(k-1))`,
/// and `N log n / n`, `S log n / n -> rho`.
pub fn allele_count_sweep(rho: f64, k_max: usize, grid: &GridSpec) -> Result<SweepReport> {
    check_rho(rho)?;
    if k_max == 0 {
        return Err(Error::Parameter("k_max must be at least 1".into()));
    }
    let mut meta = base_metadata(grid);
    meta.insert("rho".into(), json!(rho));
    meta.insert("d".into(), json!(k_max));
    let mut report = SweepReport::new(ExperimentKind::AlleleCounts.name(), meta);
    let sim = Simulator::new(LambdaModel::BolthausenSznitman, rho, SimMode::Truncated(k_max))?;
    for (i, &n) in grid.n_grid.iter().enumerate() {
        let reps = grid.replicates.count(i);
        if reps < 30 {
            return Err(Error::Parameter(format!("at least 30 replicates per grid point, got {reps}")));
        }
        if n < 2 {
            return Err(Error::Domain("grid sizes must be at least 2".into()));
        }
        let runs = timed(&mut report, n, || sim.run_replicates(n, grid.seed_for(n, 0), reps, None))?;
        let (nf, ln) = (n as f64, (n as f64).ln());
        let row = report.row_mut(n);
        for k in 1..=k_max as u64 {
            let (scale, target) =
                if k == 1 { (ln / nf, rho) } else { (ln * ln / nf, rho / (k * (k - 1)) as f64) };
            let xs: Vec<f64> = runs.iter().map(|r| r.spectrum.count(k) as f64 * scale).collect();
            row.observables.push(mean_obs(&format!("n{k}"), &xs, grid.level).with_target(target));
        }
        let xs: Vec<f64> = runs.iter().map(|r| r.n_total as f64 * ln / nf).collect();
        row.observables.push(mean_obs("n_total", &xs, grid.level).with_target(rho));
        let xs: Vec<f64> = runs.iter().map(|r| r.s_count as f64 * ln / nf).collect();
        row.observables.push(mean_obs("s", &xs, grid.level).with_target(rho));
    }
    let mut rules: Vec<AcceptanceRule> = (1..=k_max).map(|k| AcceptanceRule::trend(&format!("n{k}"))).collect();
    rules.push(AcceptanceRule::trend("n_total"));
    rules.push(AcceptanceRule::trend("s"));
    evaluate_rules(&mut report, &rules);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidDistanceSettings {
    pub rho: f64,
    pub d: usize,
    pub t0: f64,
    pub grid_step: f64,
    pub deltas: Vec<f64>,
}

/// Sup-distance over `[0, t0]` between the rescaled truncated chain and the
/// fluid limit: quantiles, mean, and the fraction of replicates above
/// `(log n)^((delta-1)/2)`.
pub fn fluid_distance(settings: &FluidDistanceSettings, grid: &GridSpec) -> Result<SweepReport> {
    let FluidDistanceSettings { rho, d, t0, grid_step, ref deltas } = *settings;
    check_rho(rho)?;
    if !(t0 >= 0.0 && t0.is_finite()) || !(grid_step > 0.0) {
        return Err(Error::Parameter("need t0 >= 0 and grid_step > 0".into()));
    }
    let steps = (t0 / grid_step).round() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|i| (i as f64 * grid_step).min(t0)).collect();
    times.dedup();
    let mut meta = base_metadata(grid);
    meta.insert("rho".into(), json!(rho));
    meta.insert("d".into(), json!(d));
    meta.insert("t0".into(), json!(t0));
    meta.insert("grid_step".into(), json!(grid_step));
    meta.insert("deltas".into(), json!(deltas));
    let mut report = SweepReport::new(ExperimentKind::FluidDistance.name(), meta);
    let sim = Simulator::new(LambdaModel::BolthausenSznitman, rho, SimMode::Truncated(d))?;
    for (i, &n) in grid.n_grid.iter().enumerate() {
        let reps = grid.replicates.count(i);
        let runs = timed(&mut report, n, || sim.run_replicates(n, grid.seed_for(n, 0), reps, Some(&times)))?;
        let sups: Vec<f64> = runs
            .iter()
            .map(|r| r.trajectory.as_ref().expect("sampled run has a trajectory").sup_distance_to_closed_form())
            .collect();
        let ln = (n as f64).ln();
        let row = report.row_mut(n);
        row.observables.push(Observable::new("sup_median", reps, quantile(&sups, 0.5)));
        row.observables.push(Observable::new("sup_q10", reps, quantile(&sups, 0.1)));
        row.observables.push(Observable::new("sup_q90", reps, quantile(&sups, 0.9)));
        row.observables.push(mean_obs("sup_mean", &sups, grid.level).with_target(0.0));
        for &delta in deltas {
            let threshold = ln.powf((delta - 1.0) / 2.0);
            let hits: Vec<f64> = sups.iter().map(|&s| if s > threshold { 1.0 } else { 0.0 }).collect();
            row.observables.push(mean_obs(&format!("exceed_delta{delta}"), &hits, grid.level).with_target(0.0));
        }
    }
    let mut rules = vec![AcceptanceRule::Decreasing { observable: "sup_median".into() }];
    for &delta in deltas {
        rules.push(AcceptanceRule::Decreasing { observable: format!("exceed_delta{delta}") });
    }
    evaluate_rules(&mut report, &rules);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KingmanSettings {
    /// Scaled mutation rate; each lineage mutates at rate `theta/2`.
    pub theta: f64,
    pub k_max: usize,
    pub chisq_n: u64,
    pub chisq_replicates: u64,
    pub fluct_n: u64,
    pub fluct_replicates: u64,
}

/// Kingman's coalescent: `N(n)/log n -> theta` along the grid, the law of
/// `N_k(n)` against Poisson(`theta/k`) at `chisq_n`, and the normalized
/// fluctuation `(N - theta log n)/sqrt(theta log n)` at `fluct_n`.
pub fn kingman_baseline(settings: &KingmanSettings, grid: &GridSpec) -> Result<SweepReport> {
    let s = settings;
    if !(s.theta > 0.0 && s.theta.is_finite()) {
        return Err(Error::Parameter(format!("theta must be positive, got {}", s.theta)));
    }
    let theta = s.theta;
    let mut meta = base_metadata(grid);
    meta.insert("theta".into(), json!(theta));
    meta.insert("d".into(), json!(s.k_max));
    meta.insert("chisq_n".into(), json!(s.chisq_n));
    meta.insert("chisq_replicates".into(), json!(s.chisq_replicates));
    meta.insert("fluct_n".into(), json!(s.fluct_n));
    meta.insert("fluct_replicates".into(), json!(s.fluct_replicates));
    let mut report = SweepReport::new(ExperimentKind::KingmanBaseline.name(), meta);
    let sim = Simulator::new(LambdaModel::Kingman, theta / 2.0, SimMode::Truncated(s.k_max.max(1)))?;

    for (i, &n) in grid.n_grid.iter().enumerate() {
        let reps = grid.replicates.count(i);
        let runs = timed(&mut report, n, || sim.run_replicates(n, grid.seed_for(n, 0), reps, None))?;
        let ln = (n as f64).ln();
        let xs: Vec<f64> = runs.iter().map(|r| r.n_total as f64 / ln).collect();
        report.row_mut(n).observables.push(mean_obs("n_over_log", &xs, grid.level).with_target(theta));
    }

    let n = s.chisq_n;
    let runs = timed(&mut report, n, || sim.run_replicates(n, grid.seed_for(n, 1), s.chisq_replicates, None))?;
    for k in 1..=s.k_max as u64 {
        let values: Vec<u64> = runs.iter().map(|r| r.spectrum.count(k)).collect();
        let mean = theta / k as f64;
        let (_, _, p) = chi_square_poisson(&values, mean);
        let xs: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let row = report.row_mut(n);
        row.observables.push(mean_obs(&format!("nk_mean_k{k}"), &xs, grid.level).with_target(mean));
        row.observables.push(Observable::new(format!("chisq_p_k{k}"), s.chisq_replicates, p));
    }

    let n = s.fluct_n;
    let runs = timed(&mut report, n, || sim.run_replicates(n, grid.seed_for(n, 2), s.fluct_replicates, None))?;
    let centre = theta * (n as f64).ln();
    let zs: Vec<f64> = runs.iter().map(|r| (r.n_total as f64 - centre) / centre.sqrt()).collect();
    let (_, ks_p) = ks_standard_normal(&zs);
    let row = report.row_mut(n);
    row.observables.push(mean_obs("fluct_mean", &zs, grid.level).with_target(0.0));
    row.observables.push(Observable::new("fluct_sd", s.fluct_replicates, sample_sd(&zs)).with_target(1.0));
    row.observables.push(Observable::new("ks_p", s.fluct_replicates, ks_p));

    let last = *grid.n_grid.last().expect("nonempty grid");
    let mut rules = vec![
        AcceptanceRule::trend("n_over_log"),
        AcceptanceRule::Tolerance { observable: "n_over_log".into(), tolerance: 0.15, at: Some(last) },
    ];
    for k in 1..=s.k_max {
        rules.push(AcceptanceRule::Above { observable: format!("chisq_p_k{k}"), bound: 0.01, at: None });
    }
    rules.push(AcceptanceRule::Tolerance { observable: "fluct_mean".into(), tolerance: 0.05, at: None });
    evaluate_rules(&mut report, &rules);
    Ok(report)
}

/// Limits of `n^(alpha-2) N(n)` and `n^(alpha-2) N_k(n)`, `k = 1..=k_max`,
/// for the Beta(2-alpha, alpha) coalescent with `1 < alpha < 2`.
pub fn beta_limit_targets(alpha: f64, rho: f64, k_max: usize) -> (f64, Vec<f64>) {
    let total = rho * alpha * (alpha - 1.0) * gamma(alpha) / (2.0 - alpha);
    let per_k = (1..=k_max)
        .map(|k| {
            let k_fact: f64 = (1..=k).map(|i| i as f64).product();
            rho * alpha * (alpha - 1.0).powi(2) * gamma(k as f64 + alpha - 2.0) / k_fact
        })
        .collect();
    (total, per_k)
}

/// Margin below 2 within which the `N` constant is reported as divergent.
const BETA_POLE_MARGIN: f64 = 1e-3;

/// Beta-coalescent allele counts, full-mode simulation, against
/// [`beta_limit_targets`].
pub fn beta_limits(alpha: f64, rho: f64, k_max: usize, grid: &GridSpec) -> Result<SweepReport> {
    check_rho(rho)?;
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::Parameter(format!("beta limits need 1 < alpha < 2, got {alpha}")));
    }
    let (total_target, k_targets) = beta_limit_targets(alpha, rho, k_max);
    let mut meta = base_metadata(grid);
    meta.insert("alpha".into(), json!(alpha));
    meta.insert("rho".into(), json!(rho));
    meta.insert("d".into(), json!(k_max));
    let mut report = SweepReport::new(ExperimentKind::BetaLimits.name(), meta);
    if 2.0 - alpha < BETA_POLE_MARGIN || !total_target.is_finite() {
        report.flags.push(format!("divergent: N limit constant {total_target} near the pole at alpha = 2"));
    }
    let sim = Simulator::new(LambdaModel::beta(alpha)?, rho, SimMode::Full)?;
    for (i, &n) in grid.n_grid.iter().enumerate() {
        let reps = grid.replicates.count(i);
        let runs = timed(&mut report, n, || sim.run_replicates(n, grid.seed_for(n, 0), reps, None))?;
        let scale = (n as f64).powf(alpha - 2.0);
        let row = report.row_mut(n);
        let xs: Vec<f64> = runs.iter().map(|r| r.n_total as f64 * scale).collect();
        row.observables.push(mean_obs("n_total", &xs, grid.level).with_target(total_target));
        for (k, &target) in (1..=k_max as u64).zip(&k_targets) {
            let xs: Vec<f64> = runs.iter().map(|r| r.spectrum.count(k) as f64 * scale).collect();
            row.observables.push(mean_obs(&format!("n{k}"), &xs, grid.level).with_target(target));
        }
    }
    let mut rules = vec![AcceptanceRule::trend("n_total")];
    rules.extend((1..=k_max).map(|k| AcceptanceRule::trend(&format!("n{k}"))));
    evaluate_rules(&mut report, &rules);
    Ok(report)
}

/// `S(n) log n / n -> rho` for the Bolthausen-Sznitman coalescent, with the
/// number of coupled runs where `S(n) < N(n)`.
pub fn segregating_sites_lln(rho: f64, grid: &GridSpec) -> Result<SweepReport> {
    check_rho(rho)?;
    let mut meta = base_metadata(grid);
    meta.insert("rho".into(), json!(rho));
    let mut report = SweepReport::new(ExperimentKind::SegregatingSites.name(), meta);
    let sim = Simulator::new(LambdaModel::BolthausenSznitman, rho, SimMode::Truncated(1))?;
    for (i, &n) in grid.n_grid.iter().enumerate() {
        let reps = grid.replicates.count(i);
        let runs = timed(&mut report, n, || sim.run_replicates(n, grid.seed_for(n, 0), reps, None))?;
        let (nf, ln) = (n as f64, (n as f64).ln());
        let row = report.row_mut(n);
        let xs: Vec<f64> = runs.iter().map(|r| r.s_count as f64 * ln / nf).collect();
        row.observables.push(mean_obs("s", &xs, grid.level).with_target(rho));
        let xs: Vec<f64> = runs.iter().map(|r| r.n_total as f64 * ln / nf).collect();
        row.observables.push(mean_obs("n_total", &xs, grid.level).with_target(rho));
        let below = runs.iter().filter(|r| r.s_count < r.n_total).count();
        row.observables.push(Observable::new("s_below_n", reps, below as f64).with_target(0.0));
    }
    let rules = vec![
        AcceptanceRule::trend("s"),
        AcceptanceRule::AtMost { observable: "s_below_n".into(), bound: 0.0, at: None },
    ];
    evaluate_rules(&mut report, &rules);
    Ok(report)
}

/// Exact law used by [`exact_vs_mc`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// The absorption chain of the freeze process.
    Oracle,
    /// The Ewens sampling formula with `theta = 2 rho` (Kingman only).
    Ewens,
}

impl Reference {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "ewens" => Ok(Self::Ewens),
            other => Err(Error::Parameter(format!("unknown reference {other:?}, expected oracle or ewens"))),
        }
    }
}

fn reference_law(model: &LambdaModel, rho: f64, n: u32, reference: Reference) -> Result<BTreeMap<AlleleConfig, f64>> {
    match reference {
        Reference::Oracle => Ok(absorption_oracle(model, rho, n)?.probs),
        Reference::Ewens => {
            if *model != LambdaModel::Kingman {
                return Err(Error::UnsupportedModel(format!("the Ewens formula is for Kingman's coalescent, got {model}")));
            }
            enumerate_configs(n)?.into_iter().map(|c| ewens_q(2.0 * rho, &c).map(|p| (c, p))).collect()
        }
    }
}

/// Empirical spectrum law of `simulate_freeze` against an exact law:
/// total variation and its three-sigma scale, per sample size.
pub fn exact_vs_mc(model: &LambdaModel, rho: f64, reference: Reference, grid: &GridSpec) -> Result<SweepReport> {
    check_rho(rho)?;
    let mut meta = base_metadata(grid);
    meta.insert("model".into(), json!(model.to_string()));
    meta.insert("rho".into(), json!(rho));
    let mut report = SweepReport::new(ExperimentKind::ExactVsMc.name(), meta);
    let sim = Simulator::new(model.clone(), rho, SimMode::Full)?;
    for (i, &n) in grid.n_grid.iter().enumerate() {
        let reps = grid.replicates.count(i);
        let exact = reference_law(model, rho, n as u32, reference)?;
        let runs = timed(&mut report, n, || sim.run_replicates(n, grid.seed_for(n, 0), reps, None))?;
        let empirical = empirical_law(&runs);
        let mut p = Vec::new();
        let mut q = Vec::new();
        for (cfg, &prob) in &exact {
            p.push(prob);
            q.push(empirical.get(cfg).copied().unwrap_or(0) as f64 / reps as f64);
        }
        for (cfg, &count) in &empirical {
            if !exact.contains_key(cfg) {
                p.push(0.0);
                q.push(count as f64 / reps as f64);
            }
        }
        let row = report.row_mut(n);
        row.observables.push(Observable::new("tv", reps, total_variation(&p, &q)).with_target(0.0));
        row.observables.push(Observable::new("tv_bound3s", reps, tv_three_sigma(&p, reps)));
    }
    let rules = vec![AcceptanceRule::AtMost { observable: "tv".into(), bound: 0.01, at: None }];
    evaluate_rules(&mut report, &rules);
    Ok(report)
}

fn empirical_law(runs: &[RunResult]) -> BTreeMap<AlleleConfig, u64> {
    let mut counts = BTreeMap::new();
    for r in runs {
        let cfg = r.spectrum.to_config().expect("full-mode spectra are exact");
        *counts.entry(cfg).or_insert(0) += 1;
    }
    counts
}

fn require_bs(config: &ExperimentConfig) -> Result<()> {
    let model = LambdaModel::from_spec(config.model.as_deref().unwrap_or("bs"))?;
    if model != LambdaModel::BolthausenSznitman {
        return Err(Error::UnsupportedModel(format!(
            "{} is defined for the Bolthausen-Sznitman coalescent, got {model}",
            config.experiment.name()
        )));
    }
    Ok(())
}

/// Resolves `config`, runs the experiment, applies the configured rules (or
/// the experiment's defaults) and echoes the resolved config as metadata.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SweepReport> {
    let c = config.resolve()?;
    let grid = GridSpec {
        n_grid: c.n_grid.clone().expect("resolved"),
        replicates: c.replicates.clone().expect("resolved"),
        seed: c.seed.expect("resolved"),
        level: c.level.expect("resolved"),
    };
    let d = c.d.unwrap_or(1);
    let mut report = match c.experiment {
        ExperimentKind::AlleleCounts => {
            require_bs(&c)?;
            allele_count_sweep(c.rho.expect("resolved"), d, &grid)?
        }
        ExperimentKind::FluidDistance => {
            require_bs(&c)?;
            let settings = FluidDistanceSettings {
                rho: c.rho.expect("resolved"),
                d,
                t0: c.t0.expect("resolved"),
                grid_step: c.grid_step.expect("resolved"),
                deltas: c.deltas.clone().expect("resolved"),
            };
            fluid_distance(&settings, &grid)?
        }
        ExperimentKind::KingmanBaseline => {
            let model = LambdaModel::from_spec(c.model.as_deref().unwrap_or("kingman"))?;
            if model != LambdaModel::Kingman {
                return Err(Error::UnsupportedModel(format!("kingman_baseline needs the kingman model, got {model}")));
            }
            let settings = KingmanSettings {
                theta: c.theta.expect("resolved"),
                k_max: d,
                chisq_n: c.chisq_n.expect("resolved"),
                chisq_replicates: c.chisq_replicates.expect("resolved"),
                fluct_n: c.fluct_n.expect("resolved"),
                fluct_replicates: c.fluct_replicates.expect("resolved"),
            };
            kingman_baseline(&settings, &grid)?
        }
        ExperimentKind::BetaLimits => beta_limits(c.alpha.expect("resolved"), c.rho.expect("resolved"), d, &grid)?,
        ExperimentKind::SegregatingSites => {
            require_bs(&c)?;
            segregating_sites_lln(c.rho.expect("resolved"), &grid)?
        }
        ExperimentKind::ExactVsMc => {
            let model = LambdaModel::from_spec(c.model.as_deref().expect("resolved"))?;
            let reference = Reference::parse(c.reference.as_deref().expect("resolved"))?;
            exact_vs_mc(&model, c.rho.expect("resolved"), reference, &grid)?
        }
    };
    if let Some(rules) = &c.rules {
        evaluate_rules(&mut report, rules);
    }
    report.metadata = c.echo();
    Ok(report)
}
