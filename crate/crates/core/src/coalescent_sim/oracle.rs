//! Labelled constructions used as independent checks of the counting
//! simulator: the allelic partition read off a coalescent tree with
//! mutations, and Kingman's paintbox.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;

use super::AlleleSpectrum;
use crate::lambda_rates::{LambdaModel, MergeKernel};
use crate::seeding::main_rng;
use crate::{Error, Result};

/// Largest sample the labelled tree oracle accepts.
pub const MAX_ORACLE_N: usize = 10;

/// Allelic partition of `{1..n}` from a labelled coalescent tree with
/// mutations at rate `rho` per lineage. Each individual belongs to the block
/// of the first mutation on its path to the root; the root lineage keeps
/// mutating after the most recent common ancestor until everyone is placed.
pub fn tree_allelic_partition(model: &LambdaModel, rho: f64, n: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    if n > MAX_ORACLE_N {
        return Err(Error::Resource(format!("tree oracle is limited to n <= {MAX_ORACLE_N}, got {n}")));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Parameter(format!("mutation rate must be positive, got {rho}")));
    }
    let kernel = MergeKernel::with_capacity(model.clone(), 16)?;
    let mut rng = main_rng(seed);
    // Each lineage lists the individuals below it with no mutation in between.
    let mut lineages: Vec<Vec<usize>> = (1..=n).map(|i| vec![i]).collect();
    let mut placed = 0;
    let mut blocks = Vec::new();
    while placed < n {
        let b = lineages.len() as u64;
        // Holding times do not affect the partition; only the jump chain is run.
        let total = kernel.total_rate(b) + rho * b as f64;
        if rng.random::<f64>() * total < rho * b as f64 {
            let i = rng.random_range(0..lineages.len());
            let members = std::mem::take(&mut lineages[i]);
            if !members.is_empty() {
                placed += members.len();
                blocks.push(members);
            }
        } else {
            let j = kernel.sample_size(b, rng.random()) as usize;
            let mut picked = sample(&mut rng, lineages.len(), j).into_vec();
            picked.sort_unstable_by(|a, b| b.cmp(a));
            let mut merged = Vec::new();
            for i in picked {
                merged.extend(lineages.swap_remove(i));
            }
            lineages.push(merged);
        }
    }
    for block in &mut blocks {
        block.sort_unstable();
    }
    blocks.sort();
    Ok(blocks)
}

/// Spectrum of [`tree_allelic_partition`].
pub fn tree_allelic_oracle(model: &LambdaModel, rho: f64, n: usize, seed: u64) -> Result<AlleleSpectrum> {
    tree_allelic_partition(model, rho, n, seed).map(|p| spectrum_from_partition(&p))
}

/// Block-size counts of a partition.
pub fn spectrum_from_partition(blocks: &[Vec<usize>]) -> AlleleSpectrum {
    let mut counts = BTreeMap::new();
    for block in blocks {
        *counts.entry(block.len() as u64).or_insert(0) += 1;
    }
    AlleleSpectrum::exact(counts)
}

/// Kingman's paintbox: individual `i` draws a uniform variate; individuals
/// landing in the same interval of lengths `frequencies` share a block, and
/// those in the remaining dust are singletons. Blocks are sorted by least
/// element.
pub fn paintbox_sample(frequencies: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if frequencies.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Domain("paintbox frequencies must lie in [0, 1]".into()));
    }
    if frequencies.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Domain("paintbox frequencies must be nonincreasing".into()));
    }
    let sum: f64 = frequencies.iter().sum();
    if sum > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("paintbox frequencies sum to {sum} > 1")));
    }
    let mut edges = Vec::with_capacity(frequencies.len());
    let mut acc = 0.0;
    for f in frequencies {
        acc += f;
        edges.push(acc);
    }
    let mut rng = main_rng(seed);
    let mut boxes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut blocks = Vec::new();
    for i in 1..=n {
        let u: f64 = rng.random();
        let k = edges.partition_point(|&e| e <= u);
        if k < edges.len() {
            boxes.entry(k).or_default().push(i);
        } else {
            blocks.push(vec![i]);
        }
    }
    blocks.extend(boxes.into_values());
    blocks.sort_by_key(|b| b[0]);
    Ok(blocks)
}
