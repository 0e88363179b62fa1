//! Event-driven simulation of the Λ-coalescent with freeze.
//!
//! The simulator runs the coalescent genealogy of `n` individuals with
//! mutations at rate `rho` on every lineage. A lineage carrying individuals
//! that have not mutated yet is an *active block*; the first mutation on it
//! freezes those individuals into one allelic block. Lineages whose
//! individuals have all mutated keep coalescing and collecting mutations,
//! which count towards the segregating sites `S(n)` but not towards the
//! allelic partition. By consistency of Λ-coalescents the active blocks
//! alone form the freeze chain: with `M` active blocks they merge like a
//! Λ-coalescent on `M` blocks and each freezes at rate `rho`. So the same
//! run yields the allele frequency spectrum, `S(n) >= N(n) - 1` and the
//! total tree length.
//!
//! After the most recent common ancestor the root lineage keeps mutating
//! until its remaining active individuals freeze; that stub is not part of
//! the tree, so its mutation is not a segregating site.

mod oracle;
mod store;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::Serialize;

pub use oracle::{paintbox_sample, spectrum_from_partition, tree_allelic_oracle, tree_allelic_partition, MAX_ORACLE_N};
use store::{FullStore, LineageStore, Mutation, TruncatedStore};

use crate::exact_solver::AlleleConfig;
use crate::fluid_limit::{rescale_state, FluidPath};
use crate::lambda_rates::{LambdaModel, MergeKernel};
use crate::seeding::{aux_rng, derive_seed, main_rng};
use crate::{Error, Result};

/// State representation of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "d")]
pub enum SimMode {
    /// Every block size tracked exactly.
    Full,
    /// Sizes `1..=d` tracked exactly, larger sizes pooled.
    Truncated(usize),
}

/// Frozen-block tally: `m_k` allelic blocks of size `k`. Truncated runs only
/// know the total number of blocks above the cutoff.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlleleSpectrum {
    counts: BTreeMap<u64, u64>,
    tail: Option<(u64, u64)>,
}

impl AlleleSpectrum {
    pub fn exact(counts: BTreeMap<u64, u64>) -> Self {
        Self { counts, tail: None }
    }

    pub(crate) fn with_tail(counts: BTreeMap<u64, u64>, cutoff: u64, tail: u64) -> Self {
        Self { counts, tail: Some((cutoff, tail)) }
    }

    /// Number of blocks of size `k` (`k` at most the cutoff, if any).
    pub fn count(&self, k: u64) -> u64 {
        if let Some((cutoff, _)) = self.tail {
            assert!(k <= cutoff, "size {k} beyond truncation cutoff {cutoff}");
        }
        self.counts.get(&k).copied().unwrap_or(0)
    }

    /// Blocks above the truncation cutoff (0 for exact spectra).
    pub fn tail_count(&self) -> u64 {
        self.tail.map_or(0, |t| t.1)
    }

    pub fn cutoff(&self) -> Option<u64> {
        self.tail.map(|t| t.0)
    }

    /// Nonzero `(size, count)` pairs at or below the cutoff.
    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    /// `N(n)`, the number of allelic blocks.
    pub fn total_blocks(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.tail_count()
    }

    /// Number of individuals covered by exactly known blocks.
    pub fn known_mass(&self) -> u64 {
        self.counts.iter().map(|(s, c)| s * c).sum()
    }

    /// Exact spectra only.
    pub fn to_config(&self) -> Option<AlleleConfig> {
        if self.tail.is_some() {
            return None;
        }
        let max = self.counts.keys().next_back().copied().unwrap_or(0) as usize;
        let mut m = vec![0u32; max];
        for (&s, &c) in &self.counts {
            m[s as usize - 1] = c as u32;
        }
        Some(AlleleConfig::from_multiplicities(m))
    }

    /// Sparse JSON form `{"size": count, ..., ">d": tail}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (s, c) in &self.counts {
            map.insert(s.to_string(), (*c).into());
        }
        if let Some((cutoff, tail)) = self.tail {
            map.insert(format!(">{cutoff}"), tail.into());
        }
        serde_json::Value::Object(map)
    }
}

/// The truncated freeze chain `(X_1..X_d, Y_{d+1})` with frozen tallies
/// `Z_1..Z_d` and the frozen tail, at time `t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruncatedState {
    pub x: Vec<u64>,
    pub y: u64,
    pub z: Vec<u64>,
    pub z_tail: u64,
    pub t: f64,
}

impl TruncatedState {
    pub fn d(&self) -> usize {
        self.x.len()
    }

    /// `(X_1, .., X_d, Y_{d+1}, Z_d)`.
    pub fn chain_coordinates(&self) -> Vec<u64> {
        let mut m = self.x.clone();
        m.push(self.y);
        m.push(*self.z.last().expect("d >= 1"));
        m
    }

    pub fn is_absorbed(&self) -> bool {
        self.y == 0 && self.x.iter().all(|&v| v == 0)
    }
}

/// Output of one replicate.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub n: u64,
    pub spectrum: AlleleSpectrum,
    /// `N(n)`.
    pub n_total: u64,
    /// Total branch length of the genealogy up to the most recent common
    /// ancestor.
    pub tree_length: f64,
    /// `S(n)`: mutations on the tree.
    pub s_count: u64,
    /// Jumps of the freeze chain: freezes plus mergers of at least two
    /// active blocks.
    pub event_count: u64,
    /// Time at which the last active block froze.
    pub absorption_time: f64,
    /// Rescaled trajectory, when sample times were requested.
    pub trajectory: Option<FluidPath>,
}

/// Event record passed to observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Event {
    Freeze,
    RedundantMutation,
    Merge { size: u64, active: u64 },
}

/// A configured simulator; replicates share the merge kernel and its rate
/// cache.
#[derive(Debug)]
pub struct Simulator {
    kernel: MergeKernel,
    rho: f64,
    mode: SimMode,
}

impl Simulator {
    pub fn new(model: LambdaModel, rho: f64, mode: SimMode) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Parameter(format!("mutation rate must be positive, got {rho}")));
        }
        if mode == SimMode::Truncated(0) {
            return Err(Error::Parameter("truncation cutoff d must be at least 1".into()));
        }
        Ok(Self { kernel: MergeKernel::new(model)?, rho, mode })
    }

    pub fn model(&self) -> &LambdaModel {
        self.kernel.model()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mode(&self) -> SimMode {
        self.mode
    }

    /// One replicate from `n` singletons. `sample_times` is a grid in
    /// rescaled time (coalescent time multiplied by `log n`) and needs
    /// truncated mode.
    pub fn run(&self, n: u64, seed: u64, sample_times: Option<&[f64]>) -> Result<RunResult> {
        if n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        match self.mode {
            SimMode::Full => {
                if sample_times.is_some() {
                    return Err(Error::Parameter("trajectory sampling needs truncated mode".into()));
                }
                let store = FullStore::new(n, u64::MAX, 1);
                Ok(self.drive(store, n, seed, None, |_, _| {}))
            }
            SimMode::Truncated(d) => {
                if let Some(times) = sample_times {
                    if n < 2 {
                        return Err(Error::Domain("trajectory rescaling needs n >= 2".into()));
                    }
                    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0)) {
                        return Err(Error::Parameter("sample times must be nonnegative and sorted".into()));
                    }
                }
                let store = TruncatedStore::new(n, d);
                Ok(self.drive(store, n, seed, sample_times.map(|t| (d, t)), |_, _| {}))
            }
        }
    }

    /// Replicates `0..replicates`, replicate `r` seeded with
    /// `derive_seed(seed, r)`. Runs on the current rayon pool; the output
    /// order and content do not depend on the number of workers.
    pub fn run_replicates(
        &self,
        n: u64,
        seed: u64,
        replicates: u64,
        sample_times: Option<&[f64]>,
    ) -> Result<Vec<RunResult>> {
        (0..replicates).into_par_iter().map(|r| self.run(n, derive_seed(seed, r), sample_times)).collect()
    }

    fn drive<S: LineageStore>(
        &self,
        mut store: S,
        n: u64,
        seed: u64,
        sampling: Option<(usize, &[f64])>,
        mut observe: impl FnMut(&S, Event),
    ) -> RunResult {
        let mut main = main_rng(seed);
        let mut aux = aux_rng(seed);
        let rho = self.rho;
        let log_n = (n as f64).ln();

        let mut t = 0.0;
        let mut tree_length = 0.0;
        let mut s_count = 0u64;
        let mut event_count = 0u64;

        let mut view = TruncatedState::default();
        let mut path = sampling.map(|(d, times)| (d, times, 0usize, FluidPath::empty(d, rho)));

        while store.active() > 0 {
            let b = store.lineages();
            let merge_rate = self.kernel.total_rate(b);
            let mutation_rate = rho * b as f64;
            let total = merge_rate + mutation_rate;
            let e: f64 = Exp1.sample(&mut main);
            let dt = e / total;
            if b >= 2 {
                tree_length += b as f64 * dt;
            }
            if let Some((_, times, next, fp)) = path.as_mut() {
                let t_new = t + dt;
                if *next < times.len() && times[*next] / log_n < t_new {
                    store.truncated_view(&mut view);
                    let xi = rescale_state(&view, n);
                    while *next < times.len() && times[*next] / log_n < t_new {
                        fp.push(times[*next], xi.clone());
                        *next += 1;
                    }
                }
            }
            t += dt;
            // Mutations are tested first, so a variate on the boundary
            // resolves to a mutation.
            let u: f64 = main.random();
            if u * total < mutation_rate {
                let r = main.random_range(0..b);
                if b >= 2 {
                    s_count += 1;
                }
                match store.mutate(r) {
                    Mutation::Froze => {
                        event_count += 1;
                        observe(&store, Event::Freeze);
                    }
                    Mutation::Redundant => observe(&store, Event::RedundantMutation),
                }
            } else {
                let j = self.kernel.sample_size(b, main.random());
                let active = store.merge(j, &mut main, &mut aux);
                if active >= 2 {
                    event_count += 1;
                }
                observe(&store, Event::Merge { size: j, active });
            }
        }
        let absorption_time = t;

        let trajectory = path.map(|(_, times, next, mut fp)| {
            store.truncated_view(&mut view);
            let xi = rescale_state(&view, n);
            for &s in &times[next..] {
                fp.push(s, xi.clone());
            }
            fp
        });

        // The rest of the genealogy only carries redundant mutations.
        let mut b = store.lineages();
        while b >= 2 {
            let merge_rate = self.kernel.total_rate(b);
            let mutation_rate = rho * b as f64;
            let total = merge_rate + mutation_rate;
            let e: f64 = Exp1.sample(&mut main);
            tree_length += b as f64 * e / total;
            let u: f64 = main.random();
            if u * total < mutation_rate {
                s_count += 1;
            } else {
                let j = self.kernel.sample_size(b, main.random());
                b -= j - 1;
            }
        }

        let spectrum = store.spectrum();
        RunResult {
            seed,
            n,
            n_total: spectrum.total_blocks(),
            spectrum,
            tree_length,
            s_count,
            event_count,
            absorption_time,
            trajectory,
        }
    }
}

/// One replicate of the freeze process; see [`Simulator::run`].
pub fn simulate_freeze(
    model: &LambdaModel,
    rho: f64,
    n: u64,
    mode: SimMode,
    seed: u64,
    sample_times: Option<&[f64]>,
) -> Result<RunResult> {
    Simulator::new(model.clone(), rho, mode)?.run(n, seed, sample_times)
}

/// Plain coalescent from `n` lineages to its root: total branch length and
/// a Poisson(`rho` × length) number of segregating sites.
pub fn simulate_tree_stats(model: &LambdaModel, rho: f64, n: u64, seed: u64) -> Result<(f64, u64)> {
    if n < 2 {
        return Err(Error::Domain(format!("tree statistics need n >= 2, got {n}")));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Parameter(format!("mutation rate must be nonnegative, got {rho}")));
    }
    let kernel = MergeKernel::with_capacity(model.clone(), 64)?;
    let mut rng = main_rng(seed);
    let mut b = n;
    let mut length = 0.0;
    while b >= 2 {
        let e: f64 = Exp1.sample(&mut rng);
        length += b as f64 * e / kernel.total_rate(b);
        let j = kernel.sample_size(b, rng.random());
        b -= j - 1;
    }
    let mean = rho * length;
    let s = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| Error::Parameter(e.to_string()))?.sample(&mut rng) as u64
    } else {
        0
    };
    Ok((length, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs() -> LambdaModel {
        LambdaModel::BolthausenSznitman
    }

    #[test]
    fn single_individual() {
        for mode in [SimMode::Full, SimMode::Truncated(3)] {
            for model in [bs(), LambdaModel::Kingman, LambdaModel::Star] {
                let r = simulate_freeze(&model, 1.0, 1, mode, 7, None).unwrap();
                assert_eq!(r.spectrum.count(1), 1);
                assert_eq!(r.n_total, 1);
                assert_eq!(r.event_count, 1);
                assert_eq!(r.s_count, 0);
                assert_eq!(r.tree_length, 0.0);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let sim = Simulator::new(bs(), 0.5, SimMode::Truncated(3)).unwrap();
        let times: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let a = sim.run(5000, 99, Some(&times)).unwrap();
        let b = sim.run(5000, 99, Some(&times)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        let c = sim.run(5000, 100, Some(&times)).unwrap();
        assert_ne!(a.spectrum, c.spectrum);
    }

    #[test]
    fn full_mode_invariants() {
        for model in [bs(), LambdaModel::Kingman, LambdaModel::beta(1.5).unwrap(), LambdaModel::Star] {
            let sim = Simulator::new(model.clone(), 0.7, SimMode::Full).unwrap();
            for seed in 0..20u64 {
                let n = 300;
                let store = FullStore::new(n, u64::MAX, 1);
                let mut events = 0u64;
                let result = sim.drive(store, n, seed, None, |s, _| {
                    assert_eq!(s.total_mass(), n);
                    events += 1;
                });
                assert!(result.event_count <= 2 * n - 1);
                let mass: u64 = result.spectrum.counts().iter().map(|(s, c)| s * c).sum();
                assert_eq!(mass, n, "{model}");
                assert_eq!(result.n_total, result.spectrum.counts().values().sum::<u64>());
                assert!(result.s_count + 1 >= result.n_total);
                assert!(events >= result.event_count);
            }
        }
    }

    /// Running the full representation with the truncated draw split gives
    /// the same truncated coordinates after every event.
    #[test]
    fn truncation_consistency() {
        for (model, d) in [(bs(), 1usize), (bs(), 3), (LambdaModel::Kingman, 2), (LambdaModel::beta(1.2).unwrap(), 4)] {
            let sim = Simulator::new(model, 0.4, SimMode::Truncated(d)).unwrap();
            for seed in 0..5u64 {
                let n = 2000;
                let mut full_views = Vec::new();
                let mut view = TruncatedState::default();
                sim.drive(FullStore::new(n, d as u64, d), n, seed, None, |s, _| {
                    s.truncated_view(&mut view);
                    full_views.push(view.clone());
                });
                let mut idx = 0;
                sim.drive(TruncatedStore::new(n, d), n, seed, None, |s, _| {
                    s.truncated_view(&mut view);
                    assert_eq!(view, full_views[idx], "event {idx}");
                    idx += 1;
                });
                assert_eq!(idx, full_views.len());
            }
        }
    }

    #[test]
    fn trajectory_starts_at_initial_point_and_absorbs() {
        let sim = Simulator::new(bs(), 0.5, SimMode::Truncated(2)).unwrap();
        let times = [0.0, 0.5, 1.0, 50.0];
        let r = sim.run(10_000, 3, Some(&times)).unwrap();
        let path = r.trajectory.unwrap();
        assert_eq!(path.values[0], vec![1.0, 0.0, 0.0, 0.0]);
        let last = path.values.last().unwrap();
        assert!(last[..3].iter().all(|&v| v == 0.0));
        let ln = (10_000f64).ln();
        assert!((last[3] - r.spectrum.count(2) as f64 * ln * ln / 10_000.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_requires_truncated_mode() {
        let sim = Simulator::new(bs(), 0.5, SimMode::Full).unwrap();
        assert!(sim.run(10, 1, Some(&[0.0])).is_err());
        assert!(Simulator::new(bs(), 0.5, SimMode::Truncated(0)).is_err());
        assert!(Simulator::new(bs(), -1.0, SimMode::Full).is_err());
    }

    #[test]
    fn replicate_fanout_matches_serial() {
        let sim = Simulator::new(bs(), 0.5, SimMode::Full).unwrap();
        let par = sim.run_replicates(200, 5, 16, None).unwrap();
        for (r, res) in par.iter().enumerate() {
            let serial = sim.run(200, derive_seed(5, r as u64), None).unwrap();
            assert_eq!(res.spectrum, serial.spectrum);
            assert_eq!(res.tree_length, serial.tree_length);
        }
    }

    #[test]
    fn two_lineage_tree_length_mean() {
        for model in [LambdaModel::Kingman, bs()] {
            let reps = 40_000u64;
            let mean: f64 =
                (0..reps).map(|r| simulate_tree_stats(&model, 0.0, 2, derive_seed(1, r)).unwrap().0).sum::<f64>()
                    / reps as f64;
            // 2·Exp(1): standard error sqrt(4/reps)
            assert!((mean - 2.0).abs() < 4.0 * (4.0 / reps as f64).sqrt(), "{model}: {mean}");
        }
        let (_, s) = simulate_tree_stats(&bs(), 0.0, 50, 3).unwrap();
        assert_eq!(s, 0);
        assert!(simulate_tree_stats(&bs(), 1.0, 1, 3).is_err());
    }

    #[test]
    fn two_individuals_match_first_step_analysis() {
        let sim = Simulator::new(bs(), 0.5, SimMode::Full).unwrap();
        let reps = 100_000u64;
        let hits = sim
            .run_replicates(2, 2024, reps, None)
            .unwrap()
            .iter()
            .filter(|r| r.spectrum.count(2) == 1)
            .count();
        // 1 / (1 + 2ρ)
        assert!((hits as f64 / reps as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn spectrum_json_form() {
        let mut counts = BTreeMap::new();
        counts.insert(1, 4);
        counts.insert(3, 1);
        let s = AlleleSpectrum::with_tail(counts, 3, 2);
        assert_eq!(s.to_json().to_string(), r#"{"1":4,"3":1,">3":2}"#);
        assert_eq!(s.total_blocks(), 7);
        assert!(s.to_config().is_none());
    }
}
