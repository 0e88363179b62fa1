//! Exact law of the allele frequency spectrum for small samples.
//!
//! Three independent routes: the Möhle recursion (any Λ), the Ewens
//! sampling formula (Kingman only) and a brute-force absorption computation
//! over the full freeze chain.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::rc::Rc;

use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

use crate::lambda_rates::{collision_rate, rate_table, LambdaModel, RateTable};
use crate::numeric::CompensatedSum;
use crate::{Error, Result};

/// Largest sample size accepted by [`enumerate_configs`].
pub const MAX_ENUMERATION_N: u32 = 40;
/// Largest sample size accepted by [`absorption_oracle`].
pub const MAX_ORACLE_N: u32 = 9;

/// An allele configuration `m = (m_1, m_2, ...)`: `m_j` types occur exactly
/// `j` times. Trailing zeros are stripped, so equal configurations compare
/// and hash equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AlleleConfig {
    m: Vec<u32>,
}

impl AlleleConfig {
    /// Builds a configuration and checks `Σ j m_j = n`.
    pub fn new(m: Vec<u32>, n: u32) -> Result<Self> {
        let cfg = Self::from_multiplicities(m);
        if cfg.n() != n {
            return Err(Error::Domain(format!("configuration {cfg} has Σ j·m_j = {} != {n}", cfg.n())));
        }
        Ok(cfg)
    }

    pub fn from_multiplicities(mut m: Vec<u32>) -> Self {
        while m.last() == Some(&0) {
            m.pop();
        }
        Self { m }
    }

    /// Multiplicity representation of a list of block sizes.
    pub fn from_block_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Vec::new();
        for s in sizes {
            assert!(s >= 1, "blocks are nonempty");
            if m.len() < s {
                m.resize(s, 0);
            }
            m[s - 1] += 1;
        }
        Self::from_multiplicities(m)
    }

    /// `m_j` for `j >= 1`.
    pub fn get(&self, j: usize) -> u32 {
        self.m.get(j - 1).copied().unwrap_or(0)
    }

    /// `(m_1, m_2, ...)` without trailing zeros.
    pub fn multiplicities(&self) -> &[u32] {
        &self.m
    }

    pub fn n(&self) -> u32 {
        self.m.iter().enumerate().map(|(i, &c)| (i as u32 + 1) * c).sum()
    }

    /// Number of types, `Σ m_j`.
    pub fn types(&self) -> u32 {
        self.m.iter().sum()
    }

    fn padded(&self, n: usize) -> Vec<u32> {
        let mut v = self.m.clone();
        v.resize(n.max(v.len()), 0);
        v
    }
}

impl fmt::Display for AlleleConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.m.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Exact law of the spectrum for one `(model, rho, n)`.
#[derive(Debug, Clone)]
pub struct SpectrumDistribution {
    pub n: u32,
    pub rho: f64,
    pub model: LambdaModel,
    pub probs: BTreeMap<AlleleConfig, f64>,
}

impl SpectrumDistribution {
    pub fn prob(&self, cfg: &AlleleConfig) -> f64 {
        self.probs.get(cfg).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().copied().collect::<CompensatedSum>().value()
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Parameter(format!("mutation rate must be positive, got {rho}")));
    }
    Ok(())
}

/// All integer partitions of `n` in multiplicity form, each once, ordered
/// lexicographically by `(m_1, ..., m_n)`.
pub fn enumerate_configs(n: u32) -> Result<Vec<AlleleConfig>> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    if n > MAX_ENUMERATION_N {
        return Err(Error::Resource(format!("partition enumeration capped at n = {MAX_ENUMERATION_N}, got {n}")));
    }
    fn descend(remaining: u32, max_part: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if remaining == 0 {
            out.push(current.clone());
            return;
        }
        for part in (1..=max_part.min(remaining)).rev() {
            current.push(part);
            descend(remaining - part, part, current, out);
            current.pop();
        }
    }
    let mut parts = Vec::new();
    descend(n, n, &mut Vec::new(), &mut parts);
    let mut configs: Vec<AlleleConfig> = parts
        .into_iter()
        .map(|p| AlleleConfig::from_block_sizes(p.into_iter().map(|x| x as usize)))
        .collect();
    configs.sort_by_cached_key(|c| c.padded(n as usize));
    Ok(configs)
}

/// Ewens sampling formula,
/// `q(m) = n! θ^{Σ m_j} / ((θ)_{n↑} Π j^{m_j} m_j!)`, in log space.
pub fn ewens_q(theta: f64, cfg: &AlleleConfig) -> Result<f64> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Parameter(format!("theta must be positive, got {theta}")));
    }
    let n = cfg.n();
    if n == 0 {
        return Err(Error::Domain("empty configuration".into()));
    }
    let rising = ln_gamma(theta + n as f64) - ln_gamma(theta);
    let mut ln_q = ln_factorial(n as u64) + cfg.types() as f64 * theta.ln() - rising;
    for (i, &mj) in cfg.multiplicities().iter().enumerate() {
        let j = (i + 1) as f64;
        ln_q -= mj as f64 * j.ln() + ln_factorial(mj as u64);
    }
    Ok(ln_q.exp())
}

/// Memoized evaluation of the Möhle recursion
///
/// `q(m) = nρ/(λ_n+nρ) q(m-e_1)
///        + Σ_{i=1}^{n-1} C(n,i+1)λ_{n,i+1}/(λ_n+nρ)
///          Σ_{j=1}^{n-i} j(m_j+1)/(n-i) q(m+e_j-e_{i+j})`.
///
/// Both terms live at strictly smaller sample sizes (`n-1` and `n-i`), so
/// the recursion bottoms out at `q((1)) = 1`.
pub struct MoehleSolver {
    model: LambdaModel,
    rho: f64,
    tables: HashMap<u32, RateTable>,
    memo: HashMap<AlleleConfig, f64>,
}

impl MoehleSolver {
    pub fn new(model: LambdaModel, rho: f64) -> Result<Self> {
        model.validate()?;
        check_rho(rho)?;
        Ok(Self { model, rho, tables: HashMap::new(), memo: HashMap::new() })
    }

    pub fn q(&mut self, cfg: &AlleleConfig) -> Result<f64> {
        if cfg.n() == 0 {
            return Err(Error::Domain("empty configuration".into()));
        }
        self.eval(cfg)
    }

    fn eval(&mut self, cfg: &AlleleConfig) -> Result<f64> {
        if let Some(&q) = self.memo.get(cfg) {
            return Ok(q);
        }
        let n = cfg.n();
        if n == 1 {
            return Ok(1.0);
        }
        if !self.tables.contains_key(&n) {
            self.tables.insert(n, rate_table(&self.model, n as u64)?);
        }
        let (total, group): (f64, Vec<f64>) = {
            let t = &self.tables[&n];
            (t.total(), t.group_rates().to_vec())
        };
        let nf = n as f64;
        let denom = total + nf * self.rho;
        let mut m = cfg.padded(n as usize + 1);
        let mut acc = CompensatedSum::new();

        if m[0] >= 1 {
            m[0] -= 1;
            let sub = AlleleConfig::from_multiplicities(m.clone());
            m[0] += 1;
            acc.add(nf * self.rho / denom * self.eval(&sub)?);
        }
        for i in 1..n {
            let g = group[(i - 1) as usize]; // C(n, i+1) λ_{n,i+1}
            if g == 0.0 {
                continue;
            }
            let reduced = (n - i) as f64;
            for j in 1..=(n - i) {
                let from = (i + j - 1) as usize;
                let to = (j - 1) as usize;
                if m[from] == 0 {
                    continue;
                }
                let weight = j as f64 * (m[to] + 1) as f64 / reduced;
                m[from] -= 1;
                m[to] += 1;
                let sub = AlleleConfig::from_multiplicities(m.clone());
                m[to] -= 1;
                m[from] += 1;
                acc.add(g / denom * weight * self.eval(&sub)?);
            }
        }
        let q = acc.value();
        self.memo.insert(cfg.clone(), q);
        Ok(q)
    }

    /// `q` over every configuration of size `n`.
    pub fn distribution(&mut self, n: u32) -> Result<SpectrumDistribution> {
        let configs = enumerate_configs(n)?;
        let mut probs = BTreeMap::new();
        for cfg in configs {
            let q = self.q(&cfg)?;
            probs.insert(cfg, q);
        }
        Ok(SpectrumDistribution { n, rho: self.rho, model: self.model.clone(), probs })
    }
}

/// One-shot [`MoehleSolver`] evaluation.
pub fn moehle_q(model: &LambdaModel, rho: f64, cfg: &AlleleConfig) -> Result<f64> {
    MoehleSolver::new(model.clone(), rho)?.q(cfg)
}

type FrozenLaw = Rc<HashMap<Vec<u32>, f64>>;

/// Absorption of the freeze chain started from an active multiset.
struct AbsorptionChain {
    model: LambdaModel,
    rho: f64,
    n: usize,
    lam: HashMap<(u64, u64), f64>,
    memo: HashMap<Vec<u32>, FrozenLaw>,
}

impl AbsorptionChain {
    fn lambda(&mut self, b: u64, k: u64) -> Result<f64> {
        if let Some(&v) = self.lam.get(&(b, k)) {
            return Ok(v);
        }
        let v = collision_rate(&self.model, b, k)?;
        self.lam.insert((b, k), v);
        Ok(v)
    }

    /// Law of the frozen tally (multiplicities of length `n`) accumulated
    /// from the sorted active multiset `active` until absorption.
    fn solve(&mut self, active: &[u32]) -> Result<FrozenLaw> {
        if let Some(law) = self.memo.get(active) {
            return Ok(Rc::clone(law));
        }
        let mut transitions: Vec<(f64, Vec<u32>, Option<u32>)> = Vec::new();
        // Freeze any one block.
        let mut i = 0;
        while i < active.len() {
            let s = active[i];
            let c = active[i..].iter().take_while(|&&x| x == s).count();
            let mut rest = active.to_vec();
            rest.remove(i);
            transitions.push((self.rho * c as f64, rest, Some(s)));
            i += c;
        }
        // Merge a sub-multiset of at least two blocks.
        let b = active.len() as u64;
        if b >= 2 {
            let mut classes: Vec<(u32, u32)> = Vec::new();
            for &s in active {
                match classes.last_mut() {
                    Some((size, count)) if *size == s => *count += 1,
                    _ => classes.push((s, 1)),
                }
            }
            let mut pick = vec![0u32; classes.len()];
            let mut merges = Vec::new();
            enumerate_submultisets(&classes, 0, &mut pick, &mut merges);
            for pick in merges {
                let j: u32 = pick.iter().sum();
                if j < 2 {
                    continue;
                }
                let ways: f64 = classes
                    .iter()
                    .zip(&pick)
                    .map(|(&(_, c), &p)| binomial_small(c, p))
                    .product();
                let rate = ways * self.lambda(b, j as u64)?;
                if rate == 0.0 {
                    continue;
                }
                let mut next = Vec::with_capacity(active.len());
                let mut merged = 0u32;
                for (&(s, c), &p) in classes.iter().zip(&pick) {
                    next.extend(std::iter::repeat_n(s, (c - p) as usize));
                    merged += s * p;
                }
                next.push(merged);
                next.sort_unstable();
                transitions.push((rate, next, None));
            }
        }
        let total: f64 = transitions.iter().map(|t| t.0).sum();
        let mut law: HashMap<Vec<u32>, CompensatedSum> = HashMap::new();
        for (rate, next, frozen) in transitions {
            let p = rate / total;
            let sub: FrozenLaw = if next.is_empty() {
                Rc::new(HashMap::from([(vec![0u32; self.n], 1.0)]))
            } else {
                self.solve(&next)?
            };
            for (tally, q) in sub.iter() {
                let mut tally = tally.clone();
                if let Some(s) = frozen {
                    tally[s as usize - 1] += 1;
                }
                law.entry(tally).or_default().add(p * q);
            }
        }
        let law: FrozenLaw = Rc::new(law.into_iter().map(|(k, v)| (k, v.value())).collect());
        self.memo.insert(active.to_vec(), Rc::clone(&law));
        Ok(law)
    }
}

fn binomial_small(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn enumerate_submultisets(classes: &[(u32, u32)], idx: usize, pick: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if idx == classes.len() {
        out.push(pick.clone());
        return;
    }
    for p in 0..=classes[idx].1 {
        pick[idx] = p;
        enumerate_submultisets(classes, idx + 1, pick, out);
    }
    pick[idx] = 0;
}

/// Exact spectrum law by solving the freeze chain on (active multiset,
/// frozen tally) states directly: each active block freezes at rate `rho`
/// and each `j`-subset of the active blocks merges at rate `λ_{|A|,j}`.
pub fn absorption_oracle(model: &LambdaModel, rho: f64, n: u32) -> Result<SpectrumDistribution> {
    model.validate()?;
    check_rho(rho)?;
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    if n > MAX_ORACLE_N {
        return Err(Error::Resource(format!("absorption oracle capped at n = {MAX_ORACLE_N}, got {n}")));
    }
    let mut chain = AbsorptionChain {
        model: model.clone(),
        rho,
        n: n as usize,
        lam: HashMap::new(),
        memo: HashMap::new(),
    };
    let law = chain.solve(&vec![1u32; n as usize])?;
    let probs = law
        .iter()
        .map(|(tally, &p)| (AlleleConfig::from_multiplicities(tally.clone()), p))
        .collect();
    Ok(SpectrumDistribution { n, rho, model: model.clone(), probs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: &[u32]) -> AlleleConfig {
        AlleleConfig::from_multiplicities(m.to_vec())
    }

    #[test]
    fn partition_counts() {
        assert_eq!(enumerate_configs(1).unwrap(), vec![cfg(&[1])]);
        assert_eq!(enumerate_configs(4).unwrap().len(), 5);
        assert_eq!(enumerate_configs(10).unwrap().len(), 42);
        assert_eq!(enumerate_configs(20).unwrap().len(), 627);
        assert!(matches!(enumerate_configs(41), Err(Error::Resource(_))));
    }

    #[test]
    fn enumeration_is_sorted_unique_and_valid() {
        let configs = enumerate_configs(12).unwrap();
        for w in configs.windows(2) {
            assert!(w[0].padded(12) < w[1].padded(12));
        }
        assert!(configs.iter().all(|c| c.n() == 12));
    }

    #[test]
    fn config_validation() {
        assert!(AlleleConfig::new(vec![1, 1], 3).is_ok());
        assert!(matches!(AlleleConfig::new(vec![1, 1], 4), Err(Error::Domain(_))));
        assert_eq!(cfg(&[2, 0, 0]), cfg(&[2]));
        assert_eq!(AlleleConfig::from_block_sizes([1, 3, 3, 1]), cfg(&[2, 0, 2]));
    }

    #[test]
    fn ewens_examples() {
        assert!((ewens_q(1.0, &cfg(&[2])).unwrap() - 0.5).abs() < 1e-12);
        assert!((ewens_q(1.0, &cfg(&[0, 1])).unwrap() - 0.5).abs() < 1e-12);
        assert!((ewens_q(3.0, &cfg(&[1])).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(ewens_q(0.0, &cfg(&[1])), Err(Error::Parameter(_))));
    }

    #[test]
    fn moehle_two_individuals() {
        let bs = LambdaModel::BolthausenSznitman;
        // coalescence before either freeze: 1 / (1 + 2ρ)
        assert!((moehle_q(&bs, 0.5, &cfg(&[0, 1])).unwrap() - 0.5).abs() < 1e-15);
        assert!((moehle_q(&bs, 0.5, &cfg(&[2])).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(moehle_q(&LambdaModel::Kingman, 0.7, &cfg(&[1])).unwrap(), 1.0);
    }

    #[test]
    fn oracle_small_cases() {
        let d = absorption_oracle(&LambdaModel::BolthausenSznitman, 0.5, 2).unwrap();
        assert!((d.prob(&cfg(&[2])) - 0.5).abs() < 1e-15);
        assert!((d.prob(&cfg(&[0, 1])) - 0.5).abs() < 1e-15);
        let d = absorption_oracle(&LambdaModel::Star, 1.3, 1).unwrap();
        assert_eq!(d.probs.len(), 1);
        assert_eq!(d.prob(&cfg(&[1])), 1.0);
        assert!(matches!(absorption_oracle(&LambdaModel::Star, 1.0, 10), Err(Error::Resource(_))));
    }

    #[test]
    fn oracle_matches_ewens_for_kingman() {
        let rho = 0.5;
        let d = absorption_oracle(&LambdaModel::Kingman, rho, 5).unwrap();
        let configs = enumerate_configs(5).unwrap();
        assert_eq!(configs.len(), 7);
        for c in &configs {
            assert!((d.prob(c) - ewens_q(2.0 * rho, c).unwrap()).abs() < 1e-10, "{c}");
        }
    }

    #[test]
    fn star_support() {
        let n = 6u32;
        let d = absorption_oracle(&LambdaModel::Star, 0.8, n).unwrap();
        let mut allowed = vec![cfg(&[n])];
        for k in 0..=(n - 2) {
            let mut m = vec![0u32; n as usize];
            m[0] += k;
            m[(n - k - 1) as usize] += 1;
            allowed.push(AlleleConfig::from_multiplicities(m));
        }
        for (c, &p) in &d.probs {
            if p > 0.0 {
                assert!(allowed.contains(c), "unexpected support {c}");
            }
        }
        assert!((d.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moehle_agrees_with_oracle_beta() {
        let model = LambdaModel::beta(1.5).unwrap();
        let mut solver = MoehleSolver::new(model.clone(), 0.25).unwrap();
        let exact = solver.distribution(6).unwrap();
        let oracle = absorption_oracle(&model, 0.25, 6).unwrap();
        for (c, &p) in &exact.probs {
            assert!((p - oracle.prob(c)).abs() < 1e-8, "{c}");
        }
        assert!((exact.total() - 1.0).abs() < 1e-9);
    }
}
