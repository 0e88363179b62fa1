//! Brute-force jump enumeration for the truncated Bolthausen-Sznitman
//! freeze chain, shared by the integration and acceptance tests.

#![allow(dead_code)]

/// `lambda_{b,k}` for the uniform measure: `(k-2)! (b-k)! / (b-1)!`.
fn bs_rate(b: usize, k: usize) -> f64 {
    let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
    fact(k - 2) * fact(b - k) / fact(b - 1)
}

/// Sums `rate * delta` and `rate * delta^2` over every possible jump.
/// Blocks in the `Y` bucket are given size `d + 1`; any merge touching
/// them lands back in `Y`, so the exact size is irrelevant.
pub fn enumerate(rho: f64, d: usize, m: &[u64]) -> (Vec<f64>, Vec<f64>) {
    let mut sizes = Vec::new();
    for k in 1..=d {
        sizes.extend(std::iter::repeat_n(k, m[k - 1] as usize));
    }
    sizes.extend(std::iter::repeat_n(d + 1, m[d] as usize));
    let b = sizes.len();
    let mut drift = vec![0.0; d + 2];
    let mut second = vec![0.0; d + 2];
    let mut add = |rate: f64, delta: &[i64]| {
        for (i, &v) in delta.iter().enumerate() {
            drift[i] += rate * v as f64;
            second[i] += rate * (v * v) as f64;
        }
    };
    // Coordinate of a block of size s: X_s for s <= d, else Y.
    let slot = |s: usize| if s <= d { s - 1 } else { d };
    for &s in &sizes {
        let mut delta = vec![0i64; d + 2];
        delta[slot(s)] -= 1;
        if s == d {
            delta[d + 1] += 1;
        }
        add(rho, &delta);
    }
    for mask in 1u32..(1 << b) {
        let k = mask.count_ones() as usize;
        if k < 2 {
            continue;
        }
        let mut delta = vec![0i64; d + 2];
        let mut merged = 0;
        for (i, &s) in sizes.iter().enumerate() {
            if mask & (1 << i) != 0 {
                delta[slot(s)] -= 1;
                merged += s;
            }
        }
        delta[slot(merged)] += 1;
        add(bs_rate(b, k), &delta);
    }
    (drift, second)
}

/// All states `(X_1, .., X_d, Y, Z_d)` with 1 to `max_active` active blocks
/// and `Z_d` in `{0, 3}`.
pub fn states(d: usize, max_active: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut m = vec![0u64; d + 1];
    loop {
        let active: u64 = m.iter().sum();
        if (1..=max_active).contains(&active) {
            for z in [0, 3] {
                let mut s = m.clone();
                s.push(z);
                out.push(s);
            }
        }
        let mut i = 0;
        loop {
            if i == m.len() {
                return out;
            }
            m[i] += 1;
            if m.iter().sum::<u64>() <= max_active {
                break;
            }
            m[i] = 0;
            i += 1;
        }
    }
}
