//! Λ-coalescent families and their collision rates.
//!
//! With `b` blocks present, any particular `k` of them merge at rate
//! `λ_{b,k} = ∫ x^{k-2} (1-x)^{b-k} Λ(dx)`. The number of `k`-subsets times
//! that rate is the group rate of a `k`-merger, and the group rates sum to
//! the total collision rate `λ_b`.

use std::fmt;
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use lru::LruCache;
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

use crate::numeric::{ln_beta, ln_binomial, CompensatedSum};
use crate::{Error, Result};

/// A finite measure on `[0, 1]` given as point masses, typically the nodes
/// and weights of a midpoint rule for a density.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    points: Vec<(f64, f64)>,
}

impl GridMeasure {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter("grid measure has no points".into()));
        }
        let mut total = 0.0;
        for &(x, w) in &points {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Parameter(format!("grid point {x} outside [0, 1]")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Parameter(format!("grid mass {w} is not finite and nonnegative")));
            }
            total += w;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Parameter("grid measure must have finite positive total mass".into()));
        }
        Ok(Self { points })
    }

    /// Midpoint rule for `density` on `cells` equal cells of `[0, 1]`.
    pub fn midpoint(cells: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 1.0 / cells as f64;
        Self::new(
            (0..cells)
                .map(|i| {
                    let x = (i as f64 + 0.5) * h;
                    (x, density(x) * h)
                })
                .collect(),
        )
    }

    /// Reads a two-column CSV of `point,mass` rows. Blank lines and lines
    /// starting with `#` are skipped, as is a header row that does not parse.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Parse(format!("{}:{}: expected two columns", path.display(), lineno + 1)));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(w)) => points.push((x, w)),
                _ if lineno == 0 && points.is_empty() => continue,
                _ => {
                    return Err(Error::Parse(format!(
                        "{}:{}: cannot parse `{line}`",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn total_mass(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum()
    }
}

/// Selector for the coalescent family.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaModel {
    /// `Λ = δ_0`: binary mergers only.
    Kingman,
    /// `Λ` uniform on `[0, 1]`.
    BolthausenSznitman,
    /// `Λ = Beta(2 - α, α)` density, `0 < α < 2`.
    Beta { alpha: f64 },
    /// `Λ = δ_1`: all blocks merge at once.
    Star,
    /// Arbitrary finite measure given on a grid.
    GridDensity(GridMeasure),
}

impl LambdaModel {
    pub fn beta(alpha: f64) -> Result<Self> {
        let model = LambdaModel::Beta { alpha };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LambdaModel::Beta { alpha } if !(*alpha > 0.0 && *alpha < 2.0) => {
                Err(Error::Parameter(format!("beta coalescent needs 0 < alpha < 2, got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    /// Parses `kingman`, `bs`, `star`, `beta:<alpha>` or `grid:<csv path>`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "kingman" => return Ok(LambdaModel::Kingman),
            "bs" => return Ok(LambdaModel::BolthausenSznitman),
            "star" => return Ok(LambdaModel::Star),
            _ => {}
        }
        if let Some(alpha) = spec.strip_prefix("beta:") {
            let alpha: f64 = alpha
                .parse()
                .map_err(|_| Error::Parse(format!("bad beta parameter in model spec `{spec}`")))?;
            return LambdaModel::beta(alpha);
        }
        if let Some(path) = spec.strip_prefix("grid:") {
            return Ok(LambdaModel::GridDensity(GridMeasure::from_csv(Path::new(path))?));
        }
        Err(Error::Parse(format!("unknown model spec `{spec}`")))
    }

    fn ln_beta_normalizer(alpha: f64) -> f64 {
        ln_beta(2.0 - alpha, alpha)
    }
}

impl fmt::Display for LambdaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaModel::Kingman => write!(f, "kingman"),
            LambdaModel::BolthausenSznitman => write!(f, "bs"),
            LambdaModel::Star => write!(f, "star"),
            LambdaModel::Beta { alpha } => write!(f, "beta:{alpha}"),
            LambdaModel::GridDensity(g) => write!(f, "grid[{} points]", g.points.len()),
        }
    }
}

fn check_range(b: u64, k: u64) -> Result<()> {
    if b < 2 || k < 2 || k > b {
        return Err(Error::Domain(format!("collision rate needs 2 <= k <= b, got b={b}, k={k}")));
    }
    Ok(())
}

/// `ln(x^p (1-x)^q)` with the convention `0^0 = 1`.
fn ln_kernel(x: f64, p: u64, q: u64) -> f64 {
    let a = if p == 0 { 0.0 } else { p as f64 * x.ln() };
    let c = if q == 0 { 0.0 } else { q as f64 * (-x).ln_1p() };
    a + c
}

/// `ln λ_{b,k}`; `-inf` for a zero rate. Range is not checked.
fn ln_collision_rate(model: &LambdaModel, b: u64, k: u64) -> f64 {
    match model {
        LambdaModel::Kingman => {
            if k == 2 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        LambdaModel::Star => {
            if k == b {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        LambdaModel::BolthausenSznitman => ln_factorial(k - 2) + ln_factorial(b - k) - ln_factorial(b - 1),
        LambdaModel::Beta { alpha } => {
            ln_gamma(k as f64 - alpha) + ln_gamma((b - k) as f64 + alpha)
                - ln_gamma(b as f64)
                - LambdaModel::ln_beta_normalizer(*alpha)
        }
        LambdaModel::GridDensity(g) => {
            let s: CompensatedSum = g
                .points
                .iter()
                .filter(|p| p.1 > 0.0)
                .map(|&(x, w)| w * ln_kernel(x, k - 2, b - k).exp())
                .collect();
            s.value().ln()
        }
    }
}

/// `λ_{b,k}`, the rate at which any particular `k` of `b` blocks merge.
pub fn collision_rate(model: &LambdaModel, b: u64, k: u64) -> Result<f64> {
    model.validate()?;
    check_range(b, k)?;
    Ok(ln_collision_rate(model, b, k).exp())
}

/// `C(b, j) λ_{b,j}`, evaluated in log space.
fn group_rate(model: &LambdaModel, b: u64, j: u64) -> f64 {
    match model {
        LambdaModel::GridDensity(g) => {
            // The binomial can overflow on its own; fold it into each term.
            let lc = ln_binomial(b, j);
            let s: CompensatedSum = g
                .points
                .iter()
                .filter(|p| p.1 > 0.0)
                .map(|&(x, w)| w * (lc + ln_kernel(x, j - 2, b - j)).exp())
                .collect();
            s.value()
        }
        _ => (ln_binomial(b, j) + ln_collision_rate(model, b, j)).exp(),
    }
}

/// Rates out of a state with `b` active blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    b: u64,
    lam: Vec<f64>,
    group: Vec<f64>,
    total: f64,
}

impl RateTable {
    pub fn b(&self) -> u64 {
        self.b
    }

    /// `λ_{b,k}` for `2 <= k <= b`.
    pub fn lam(&self, k: u64) -> f64 {
        self.lam[(k - 2) as usize]
    }

    /// `C(b,j) λ_{b,j}` for `2 <= j <= b`.
    pub fn group_rate(&self, j: u64) -> f64 {
        self.group[(j - 2) as usize]
    }

    /// Group rates indexed from `j = 2`.
    pub fn group_rates(&self) -> &[f64] {
        &self.group
    }

    /// `λ_b`, the total collision rate.
    pub fn total(&self) -> f64 {
        self.total
    }
}

pub fn rate_table(model: &LambdaModel, b: u64) -> Result<RateTable> {
    model.validate()?;
    if b < 2 {
        return Err(Error::Domain(format!("rate table needs b >= 2, got {b}")));
    }
    let lam: Vec<f64> = (2..=b).map(|k| ln_collision_rate(model, b, k).exp()).collect();
    let group: Vec<f64> = (2..=b).map(|j| group_rate(model, b, j)).collect();
    let total = group.iter().copied().collect::<CompensatedSum>().value();
    Ok(RateTable { b, lam, group, total })
}

/// Draws the size of the next merger with `b` blocks present, given a
/// uniform variate `u`: `j` has probability `C(b,j) λ_{b,j} / λ_b`.
pub fn sample_merge_size(model: &LambdaModel, b: u64, u: f64) -> Result<u64> {
    model.validate()?;
    if b < 2 {
        return Err(Error::Domain(format!("merge size needs b >= 2, got {b}")));
    }
    MergeKernel::with_capacity(model.clone(), 1).map(|kernel| kernel.sample_size(b, u))
}

/// `j` with `P(J <= j) >= u` for the Bolthausen-Sznitman law
/// `P(J = j) ∝ 1/(j(j-1))`. Uses `P(J <= j) = (1 - 1/j) / (1 - 1/b)`.
fn bs_merge_size(b: u64, u: f64) -> u64 {
    let bf = b as f64;
    let j = (1.0 / (1.0 - u * (1.0 - 1.0 / bf))).ceil();
    if j.is_nan() || j >= bf {
        b
    } else {
        (j as u64).max(2)
    }
}

#[derive(Debug)]
struct CumulativeTable {
    cumulative: Vec<f64>,
}

impl CumulativeTable {
    fn new(model: &LambdaModel, b: u64) -> Self {
        let mut acc = CompensatedSum::new();
        let cumulative = (2..=b)
            .map(|j| {
                acc.add(group_rate(model, b, j));
                acc.value()
            })
            .collect();
        Self { cumulative }
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().expect("table for b >= 2 is nonempty")
    }

    fn sample(&self, u: f64) -> u64 {
        let target = u * self.total();
        let idx = self.cumulative.partition_point(|&c| c < target);
        idx.min(self.cumulative.len() - 1) as u64 + 2
    }
}

/// Total collision rates and merge-size sampling for a fixed model, as used
/// by the simulators. Families without a closed form go through cumulative
/// rate tables, cached per `b` with least-recently-used eviction. Above
/// [`TABLE_LIMIT`] blocks a table costs too much to build for a single use;
/// totals then come from `λ_{b+1} = λ_b + b λ_{b+1,2}` and sizes from
/// inversion starting at `j = 2`.
#[derive(Debug)]
pub struct MergeKernel {
    model: LambdaModel,
    cache: Mutex<LruCache<u64, Arc<CumulativeTable>>>,
    totals: RwLock<Vec<f64>>,
}

pub const DEFAULT_RATE_CACHE_CAPACITY: usize = 2048;

/// Largest `b` served from cumulative tables.
pub const TABLE_LIMIT: u64 = 2048;

impl MergeKernel {
    pub fn new(model: LambdaModel) -> Result<Self> {
        Self::with_capacity(model, DEFAULT_RATE_CACHE_CAPACITY)
    }

    pub fn with_capacity(model: LambdaModel, capacity: usize) -> Result<Self> {
        model.validate()?;
        let capacity = NonZeroUsize::new(capacity)
            .ok_or_else(|| Error::Parameter("rate cache capacity must be positive".into()))?;
        Ok(Self { model, cache: Mutex::new(LruCache::new(capacity)), totals: RwLock::new(Vec::new()) })
    }

    pub fn model(&self) -> &LambdaModel {
        &self.model
    }

    fn table(&self, b: u64) -> Arc<CumulativeTable> {
        if let Some(t) = self.cache.lock().expect("rate cache poisoned").get(&b) {
            return Arc::clone(t);
        }
        // Built outside the lock; concurrent misses on the same b just race.
        let table = Arc::new(CumulativeTable::new(&self.model, b));
        self.cache.lock().expect("rate cache poisoned").put(b, Arc::clone(&table));
        table
    }

    /// `λ_b`; zero for `b < 2`.
    pub fn total_rate(&self, b: u64) -> f64 {
        if b < 2 {
            return 0.0;
        }
        match self.model {
            LambdaModel::Kingman => (b * (b - 1)) as f64 / 2.0,
            LambdaModel::BolthausenSznitman => (b - 1) as f64,
            LambdaModel::Star => 1.0,
            _ if b <= TABLE_LIMIT => self.table(b).total(),
            _ => self.prefix_total(b),
        }
    }

    /// `λ_b` from the increment identity; entry `i` holds `λ_{i+2}`.
    fn prefix_total(&self, b: u64) -> f64 {
        let idx = (b - 2) as usize;
        if let Some(&v) = self.totals.read().expect("rate totals poisoned").get(idx) {
            return v;
        }
        let mut totals = self.totals.write().expect("rate totals poisoned");
        if totals.is_empty() {
            totals.push(ln_collision_rate(&self.model, 2, 2).exp());
        }
        while totals.len() <= idx {
            let next = totals.len() as u64 + 2;
            let prev = *totals.last().expect("nonempty");
            totals.push(prev + (next - 1) as f64 * ln_collision_rate(&self.model, next, 2).exp());
        }
        totals[idx]
    }

    fn sample_by_inversion(&self, b: u64, u: f64) -> u64 {
        let target = u * self.prefix_total(b);
        let mut acc = 0.0;
        match self.model {
            LambdaModel::Beta { alpha } => {
                // C(b,j+1) λ_{b,j+1} / (C(b,j) λ_{b,j}) = (b-j)(j-α) / ((j+1)(b-j-1+α))
                let bf = b as f64;
                let mut g = group_rate(&self.model, b, 2);
                for j in 2..b {
                    acc += g;
                    if acc >= target {
                        return j;
                    }
                    let jf = j as f64;
                    g *= (bf - jf) * (jf - alpha) / ((jf + 1.0) * (bf - jf - 1.0 + alpha));
                }
                b
            }
            _ => {
                for j in 2..b {
                    acc += group_rate(&self.model, b, j);
                    if acc >= target {
                        return j;
                    }
                }
                b
            }
        }
    }

    /// Merge size for `b >= 2` blocks from a uniform variate `u` in `[0, 1)`.
    pub fn sample_size(&self, b: u64, u: f64) -> u64 {
        debug_assert!(b >= 2);
        match self.model {
            LambdaModel::Kingman => 2,
            LambdaModel::Star => b,
            LambdaModel::BolthausenSznitman => bs_merge_size(b, u),
            _ if b <= TABLE_LIMIT => self.table(b).sample(u),
            _ => self.sample_by_inversion(b, u),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    fn families() -> Vec<LambdaModel> {
        vec![
            LambdaModel::Kingman,
            LambdaModel::BolthausenSznitman,
            LambdaModel::beta(1.5).unwrap(),
            LambdaModel::beta(0.5).unwrap(),
            LambdaModel::Star,
            LambdaModel::GridDensity(GridMeasure::new(vec![(0.0, 0.3), (0.25, 0.5), (0.9, 0.2), (1.0, 0.1)]).unwrap()),
        ]
    }

    #[test]
    fn point_mass_families() {
        let k = LambdaModel::Kingman;
        assert_eq!(collision_rate(&k, 7, 2).unwrap(), 1.0);
        assert_eq!(collision_rate(&k, 7, 3).unwrap(), 0.0);
        let s = LambdaModel::Star;
        assert_eq!(collision_rate(&s, 5, 5).unwrap(), 1.0);
        assert_eq!(collision_rate(&s, 5, 3).unwrap(), 0.0);
    }

    #[test]
    fn bolthausen_sznitman_small_case() {
        // ∫ (1 - x) dx = 1/2
        let r = collision_rate(&LambdaModel::BolthausenSznitman, 3, 2).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        let t = rate_table(&LambdaModel::BolthausenSznitman, 3).unwrap();
        assert!(rel(t.group_rate(2), 1.5) < 1e-12);
        assert!(rel(t.group_rate(3), 0.5) < 1e-12);
        assert!(rel(t.total(), 2.0) < 1e-12);
    }

    #[test]
    fn bolthausen_sznitman_total_telescopes() {
        let t = rate_table(&LambdaModel::BolthausenSznitman, 100).unwrap();
        assert!(rel(t.total(), 99.0) < 1e-12);
    }

    #[test]
    fn kingman_table() {
        let t = rate_table(&LambdaModel::Kingman, 4).unwrap();
        assert_eq!(t.group_rate(2), 6.0);
        assert_eq!(t.group_rate(3), 0.0);
        assert_eq!(t.total(), 6.0);
    }

    #[test]
    fn bs_group_rate_identity() {
        for b in 2..=200u64 {
            let t = rate_table(&LambdaModel::BolthausenSznitman, b).unwrap();
            for j in 2..=b {
                let lhs = t.group_rate(j) * (j * (j - 1)) as f64;
                assert!(rel(lhs, b as f64) < 1e-12, "b={b} j={j} lhs={lhs}");
            }
        }
    }

    #[test]
    fn consistency_recursion_all_families() {
        for model in families() {
            for b in 2..200u64 {
                for k in 2..=b {
                    let lhs = collision_rate(&model, b + 1, k).unwrap() + collision_rate(&model, b + 1, k + 1).unwrap();
                    let rhs = collision_rate(&model, b, k).unwrap();
                    assert!(rhs >= 0.0);
                    assert!(rel(lhs, rhs) < 1e-10, "{model} b={b} k={k}: {lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn table_entries_finite_and_total_matches() {
        for model in families() {
            for b in [2u64, 3, 10, 57, 400] {
                let t = rate_table(&model, b).unwrap();
                assert!(t.group_rates().iter().all(|g| g.is_finite() && *g >= 0.0));
                let naive: f64 = t.group_rates().iter().sum();
                assert!(rel(naive, t.total()) < 1e-12);
            }
        }
    }

    #[test]
    fn large_b_does_not_overflow() {
        let t = rate_table(&LambdaModel::beta(1.5).unwrap(), 5000).unwrap();
        assert!(t.total().is_finite() && t.total() > 0.0);
        let r = collision_rate(&LambdaModel::BolthausenSznitman, 10_000_000, 3).unwrap();
        assert!(r > 0.0 && r.is_finite());
    }

    #[test]
    fn midpoint_grid_reproduces_uniform() {
        let grid = LambdaModel::GridDensity(GridMeasure::midpoint(10_000, |_| 1.0).unwrap());
        for b in [2u64, 3, 5, 10, 20] {
            for k in 2..=b {
                let a = collision_rate(&grid, b, k).unwrap();
                let e = collision_rate(&LambdaModel::BolthausenSznitman, b, k).unwrap();
                assert!((a - e).abs() < 1e-6, "b={b} k={k} {a} vs {e}");
            }
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(collision_rate(&LambdaModel::Kingman, 3, 4), Err(Error::Domain(_))));
        assert!(matches!(collision_rate(&LambdaModel::Kingman, 1, 1), Err(Error::Domain(_))));
        assert!(matches!(collision_rate(&LambdaModel::Beta { alpha: 2.5 }, 3, 2), Err(Error::Parameter(_))));
        assert!(matches!(rate_table(&LambdaModel::Kingman, 1), Err(Error::Domain(_))));
        assert!(GridMeasure::new(vec![(0.5, -1.0)]).is_err());
        assert!(GridMeasure::new(vec![(1.5, 1.0)]).is_err());
    }

    #[test]
    fn merge_size_examples() {
        let bs = LambdaModel::BolthausenSznitman;
        for u in [0.0, 0.3, 0.999] {
            assert_eq!(sample_merge_size(&bs, 2, u).unwrap(), 2);
            assert_eq!(sample_merge_size(&LambdaModel::Kingman, 10, u).unwrap(), 2);
        }
        // P(j = 2) = 3/4 at b = 3
        assert_eq!(sample_merge_size(&bs, 3, 0.5).unwrap(), 2);
        assert_eq!(sample_merge_size(&bs, 3, 0.8).unwrap(), 3);
        assert_eq!(sample_merge_size(&LambdaModel::Star, 6, 0.1).unwrap(), 6);
    }

    #[test]
    fn bs_closed_form_inverse_matches_table_search() {
        let bs = LambdaModel::BolthausenSznitman;
        let kernel_table = CumulativeTable::new(&bs, 50);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20_000 {
            let u: f64 = rng.random();
            let a = bs_merge_size(50, u);
            let b = kernel_table.sample(u);
            // Can only disagree when u sits on a table boundary.
            assert!(a == b || (a as i64 - b as i64).abs() == 1, "u={u} {a} {b}");
        }
    }

    fn check_frequencies(model: &LambdaModel, b: u64, draws: usize, seed: u64) {
        let kernel = MergeKernel::new(model.clone()).unwrap();
        let table = rate_table(model, b).unwrap();
        let mut counts = vec![0usize; b as usize + 1];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..draws {
            counts[kernel.sample_size(b, rng.random()) as usize] += 1;
        }
        for j in 2..=b {
            let p = table.group_rate(j) / table.total();
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let phat = counts[j as usize] as f64 / draws as f64;
            assert!((phat - p).abs() <= 4.0 * se + 1e-12, "{model} b={b} j={j}: {phat} vs {p}");
        }
    }

    #[test]
    fn merge_size_frequencies_match_group_rates() {
        check_frequencies(&LambdaModel::BolthausenSznitman, 12, 1_000_000, 11);
        check_frequencies(&LambdaModel::beta(1.5).unwrap(), 12, 1_000_000, 12);
    }

    #[test]
    fn spec_strings() {
        assert_eq!(LambdaModel::from_spec("bs").unwrap(), LambdaModel::BolthausenSznitman);
        assert_eq!(LambdaModel::from_spec("beta:1.5").unwrap(), LambdaModel::Beta { alpha: 1.5 });
        assert!(LambdaModel::from_spec("beta:3").is_err());
        assert!(LambdaModel::from_spec("beta:x").is_err());
        assert!(LambdaModel::from_spec("dirac").is_err());
        assert_eq!(LambdaModel::Beta { alpha: 1.5 }.to_string(), "beta:1.5");
    }

    #[test]
    fn grid_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        std::fs::write(&path, "point,mass\n0.25,0.5\n0.75, 0.5\n").unwrap();
        let model = LambdaModel::from_spec(&format!("grid:{}", path.display())).unwrap();
        match model {
            LambdaModel::GridDensity(g) => assert_eq!(g.points(), &[(0.25, 0.5), (0.75, 0.5)]),
            _ => panic!(),
        }
        std::fs::write(&path, "0.25,0.5\nnope\n").unwrap();
        assert!(LambdaModel::from_spec(&format!("grid:{}", path.display())).is_err());
    }

    #[test]
    fn large_b_path_matches_tables() {
        for model in [
            LambdaModel::beta(1.5).unwrap(),
            LambdaModel::beta(0.7).unwrap(),
            LambdaModel::GridDensity(GridMeasure::new(vec![(0.1, 0.4), (0.6, 0.3)]).unwrap()),
        ] {
            let kernel = MergeKernel::new(model.clone()).unwrap();
            for b in [TABLE_LIMIT + 1, TABLE_LIMIT + 500] {
                let table = rate_table(&model, b).unwrap();
                assert!(rel(kernel.total_rate(b), table.total()) < 1e-10, "{model} b={b}");
                for u in [0.0, 0.1, 0.5, 0.9, 0.999] {
                    let j = kernel.sample_size(b, u);
                    let below: f64 = (2..j).map(|i| table.group_rate(i)).sum();
                    let upto = below + table.group_rate(j);
                    let target = u * table.total();
                    assert!(below <= target * (1.0 + 1e-9) && target <= upto * (1.0 + 1e-9), "{model} b={b} u={u} j={j}");
                }
            }
        }
    }
}
