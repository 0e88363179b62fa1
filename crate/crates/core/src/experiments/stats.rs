//! Summary statistics and the few hypothesis tests the sweeps need.

use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Normal, Poisson, StudentsT};

/// Sample mean and the half-width of a two-sided `level` confidence
/// interval from the Student t quantile.
pub fn mean_ci(xs: &[f64], level: f64) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom");
    let q = t.inverse_cdf(0.5 + level / 2.0);
    (mean, q * (var / n as f64).sqrt())
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Empirical `q`-quantile, linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Largest sequence for which the trend test enumerates permutations.
const EXACT_SPEARMAN_MAX: usize = 8;

/// Spearman correlation of `ys` against their position and the one-sided
/// p-value for a decreasing trend. Exact under the permutation null up to
/// eight points, normal approximation above.
pub fn spearman_decreasing(ys: &[f64]) -> (f64, f64) {
    let n = ys.len();
    if n < 2 {
        return (f64::NAN, 1.0);
    }
    let x: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let ry = ranks(ys);
    let rho = pearson(&x, &ry);
    if n <= EXACT_SPEARMAN_MAX {
        let mut perm = ry.clone();
        let mut hits = 0u64;
        let mut total = 0u64;
        permute(&mut perm, 0, &mut |p| {
            total += 1;
            if pearson(&x, p) <= rho + 1e-12 {
                hits += 1;
            }
        });
        (rho, hits as f64 / total as f64)
    } else {
        let z = rho * ((n - 1) as f64).sqrt();
        (rho, Normal::standard().cdf(z))
    }
}

fn permute(v: &mut [f64], k: usize, visit: &mut impl FnMut(&[f64])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}

/// Pearson chi-square goodness of fit of integer counts to Poisson(`mean`).
/// Cells are `0, 1, ..` with the upper tail pooled; adjacent cells are merged
/// from the right until each expects at least five observations. Returns
/// `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_poisson(values: &[u64], mean: f64) -> (f64, usize, f64) {
    let total = values.len() as f64;
    let law = Poisson::new(mean).expect("positive Poisson mean");
    let max = values.iter().copied().max().unwrap_or(0);
    let mut expected: Vec<f64> = (0..=max).map(|k| total * law.pmf(k)).collect();
    let last = expected.len() - 1;
    expected[last] = total * law.sf(max.saturating_sub(1));
    if max == 0 {
        expected[0] = total;
    }
    let mut observed = vec![0.0; expected.len()];
    for &v in values {
        observed[v as usize] += 1.0;
    }
    while expected.len() > 1 && *expected.last().expect("nonempty") < 5.0 {
        let e = expected.pop().expect("nonempty");
        let o = observed.pop().expect("nonempty");
        *expected.last_mut().expect("nonempty") += e;
        *observed.last_mut().expect("nonempty") += o;
    }
    let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = expected.len().saturating_sub(1);
    if df == 0 {
        return (stat, 0, 1.0);
    }
    let p = ChiSquared::new(df as f64).expect("positive degrees of freedom").sf(stat);
    (stat, df, p)
}

/// Kolmogorov-Smirnov test against the standard normal. Returns the
/// statistic and the asymptotic p-value with Stephens' small-sample factor.
pub fn ks_standard_normal(xs: &[f64]) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let normal = Normal::standard();
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `(1/2) sum |p - q|` over the union of supports given as aligned slices.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Three-sigma scale of the total-variation error of an empirical law from
/// `replicates` draws: `(1/2) sum 3 sqrt(p(1-p)/R)`.
pub fn tv_three_sigma(p: &[f64], replicates: u64) -> f64 {
    0.5 * p.iter().map(|&x| 3.0 * (x * (1.0 - x) / replicates as f64).sqrt()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_interval_known_case() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (m, h) = mean_ci(&xs, 0.95);
        assert_eq!(m, 3.0);
        // t_{0.975, 4} = 2.776445, sd = sqrt(2.5)
        assert!((h - 2.776445 * (2.5f64 / 5.0).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn spearman_exact_tail() {
        let (rho, p) = spearman_decreasing(&[4.0, 3.0, 2.0, 1.0]);
        assert!((rho + 1.0).abs() < 1e-12);
        assert!((p - 1.0 / 24.0).abs() < 1e-12);
        let (_, p) = spearman_decreasing(&[3.0, 4.0, 2.0, 1.0]);
        assert!(p > 0.05);
        let (rho, p) = spearman_decreasing(&[1.0, 2.0, 3.0]);
        assert!((rho - 1.0).abs() < 1e-12 && (p - 1.0).abs() < 1e-12);
        let (_, p) = spearman_decreasing(&(0..20).map(|i| -(i as f64)).collect::<Vec<_>>());
        assert!(p < 1e-4);
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }

    #[test]
    fn chi_square_on_poisson_and_shifted_samples() {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let law = rand_distr::Poisson::new(0.5).unwrap();
        let good: Vec<u64> = (0..10_000).map(|_| law.sample(&mut rng) as u64).collect();
        assert!(chi_square_poisson(&good, 0.5).2 > 0.001);
        assert!(chi_square_poisson(&good, 0.6).2 < 1e-6);
    }

    #[test]
    fn ks_detects_shift() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(ks_standard_normal(&xs).1 > 0.001);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.2).collect();
        assert!(ks_standard_normal(&shifted).1 < 1e-6);
    }

    #[test]
    fn total_variation_basics() {
        assert_eq!(total_variation(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
        assert!(tv_three_sigma(&[0.5, 0.5], 100) > 0.0);
    }
}
