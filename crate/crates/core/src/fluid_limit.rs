//! Deterministic limit of the rescaled Bolthausen-Sznitman freeze chain.
//!
//! Coordinates are `(x_1, .., x_d, y_{d+1}, z_d)`: active blocks of size
//! `k <= d`, active blocks larger than `d`, and frozen blocks of size `d`.
//! The chain `X^{n,d}` is rescaled by
//!
//! ```text
//! time      t / log n
//! X_1       X_1 / n
//! X_k, Y    X_k log n / n          (2 <= k <= d)
//! Z_d       Z_d (log n)^r / n      r = 1 if d = 1, else 2
//! ```
//!
//! and converges to the solution of the linear ODE `x' = b(x)` started from
//! `(1, 0, .., 0)`, which has a closed form.

use serde::Serialize;

use crate::coalescent_sim::TruncatedState;
use crate::lambda_rates::LambdaModel;
use crate::numeric::{harmonic, ln_binomial};
use crate::{Error, Result};

/// Euclidean Lipschitz constant `sqrt(rho^2 + pi^2/3)` of the vector field.
pub fn lipschitz_constant(rho: f64) -> f64 {
    (rho * rho + std::f64::consts::PI.powi(2) / 3.0).sqrt()
}

/// The closed-form solution at time `t`, `d + 2` coordinates.
pub fn closed_form(d: usize, rho: f64, t: f64) -> Vec<f64> {
    assert!(d >= 1, "d must be at least 1");
    let e = (-t).exp();
    let te = t * e;
    let mut v = Vec::with_capacity(d + 2);
    v.push(e);
    for k in 2..=d {
        v.push(te / (k * (k - 1)) as f64);
    }
    v.push(te / d as f64);
    v.push(frozen_limit(d, rho, t, e));
    v
}

/// `(z_1(t), .., z_d(t))`.
pub fn closed_form_frozen(d: usize, rho: f64, t: f64) -> Vec<f64> {
    let e = (-t).exp();
    (1..=d).map(|k| frozen_limit(k, rho, t, e)).collect()
}

fn frozen_limit(k: usize, rho: f64, t: f64, e: f64) -> f64 {
    if k == 1 {
        -rho * (-t).exp_m1()
    } else {
        rho / (k * (k - 1)) as f64 * (-(-t).exp_m1() - t * e)
    }
}

/// `b(xi)`.
pub fn vector_field(d: usize, rho: f64, xi: &[f64]) -> Vec<f64> {
    assert_eq!(xi.len(), d + 2, "state must have d + 2 coordinates");
    let mut b = Vec::with_capacity(d + 2);
    b.push(-xi[0]);
    for k in 2..=d {
        b.push(xi[0] / (k * (k - 1)) as f64 - xi[k - 1]);
    }
    b.push(xi[0] / d as f64 - xi[d]);
    b.push(rho * xi[d - 1]);
    b
}

/// Sampled trajectory of the fluid limit or of a rescaled simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidPath {
    pub d: usize,
    pub rho: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl FluidPath {
    pub fn empty(d: usize, rho: f64) -> Self {
        Self { d, rho, times: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, t: f64, value: Vec<f64>) {
        debug_assert_eq!(value.len(), self.d + 2);
        self.times.push(t);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max_t |path(t) - x(t)|` in the Euclidean norm over the sampled grid.
    pub fn sup_distance_to_closed_form(&self) -> f64 {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(&t, v)| euclidean(v, &closed_form(self.d, self.rho, t)))
            .fold(0.0, f64::max)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fixed-step classical Runge-Kutta from `(1, 0, .., 0)` to `t_max`. The
/// last step is shortened to land on `t_max`.
pub fn integrate_ode(d: usize, rho: f64, t_max: f64, step: f64) -> Result<FluidPath> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Parameter(format!("step must be positive, got {step}")));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::Parameter(format!("t_max must be finite and nonnegative, got {t_max}")));
    }
    if d == 0 {
        return Err(Error::Parameter("d must be at least 1".into()));
    }
    let mut path = FluidPath::empty(d, rho);
    let mut x = closed_form(d, rho, 0.0);
    path.push(0.0, x.clone());
    // Round away representation noise so that t_max = k * step gives k steps.
    let steps = ((t_max / step) * (1.0 - 1e-12)).ceil() as u64;
    for i in 0..steps {
        let t = i as f64 * step;
        let h = if i + 1 == steps { t_max - t } else { step };
        let k1 = vector_field(d, rho, &x);
        let k2 = vector_field(d, rho, &axpy(&x, h / 2.0, &k1));
        let k3 = vector_field(d, rho, &axpy(&x, h / 2.0, &k2));
        let k4 = vector_field(d, rho, &axpy(&x, h, &k3));
        for c in 0..x.len() {
            x[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        path.push(if i + 1 == steps { t_max } else { t + h }, x.clone());
    }
    Ok(path)
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| xi + a * yi).collect()
}

/// Exponent of `log n` in the scaling of `Z_d`.
pub fn frozen_exponent(d: usize) -> i32 {
    if d == 1 {
        1
    } else {
        2
    }
}

/// Per-coordinate factors mapping the chain state to `xi`.
pub fn state_scale(d: usize, n: u64) -> Vec<f64> {
    let nf = n as f64;
    let ln = nf.ln();
    let mut s = vec![ln / nf; d + 2];
    s[0] = 1.0 / nf;
    s[d + 1] = ln.powi(frozen_exponent(d)) / nf;
    s
}

/// Chain state `(X_1, .., X_d, Y, Z_d)` to rescaled coordinates.
pub fn state_to_xi(d: usize, n: u64, m: &[f64]) -> Vec<f64> {
    m.iter().zip(state_scale(d, n)).map(|(v, s)| v * s).collect()
}

/// Rescaled coordinates back to (real-valued) chain counts.
pub fn xi_to_state(d: usize, n: u64, xi: &[f64]) -> Vec<f64> {
    xi.iter().zip(state_scale(d, n)).map(|(v, s)| v / s).collect()
}

/// Rescaled coordinates of a simulated state.
pub fn rescale_state(state: &TruncatedState, n: u64) -> Vec<f64> {
    let m: Vec<f64> = state.chain_coordinates().into_iter().map(|v| v as f64).collect();
    state_to_xi(state.d(), n, &m)
}

/// Validated truncated state and its number of active blocks.
fn check_state(model: &LambdaModel, d: usize, m: &[u64], n: u64) -> Result<u64> {
    if *model != LambdaModel::BolthausenSznitman {
        return Err(Error::UnsupportedModel(format!(
            "closed drift formulas exist for the Bolthausen-Sznitman coalescent only, got {model}"
        )));
    }
    if d == 0 || m.len() != d + 2 {
        return Err(Error::Domain(format!("state must have d + 2 = {} coordinates, got {}", d + 2, m.len())));
    }
    let active: u64 = m[..=d].iter().sum();
    if active == 0 {
        return Err(Error::Domain("absorbed state has no drift".into()));
    }
    let mass: u64 = m[..d].iter().enumerate().map(|(i, c)| (i as u64 + 1) * c).sum::<u64>() + (d as u64 + 1) * m[d];
    if mass > n {
        return Err(Error::Domain(format!("state carries at least {mass} individuals, more than n = {n}")));
    }
    Ok(active)
}

/// Merge statistics shared by drift and variance: for each merge size `j`,
/// the rate `M/(j(j-1))` times the probability that the `j` participants all
/// have size `<= d` with total size `s <= d`, collected by `s`.
struct SmallMerges {
    /// `inflow[s]`, `s` in `0..=d`.
    inflow: Vec<f64>,
}

impl SmallMerges {
    fn new(d: usize, m: &[u64], active: u64) -> Self {
        let mut inflow = vec![0.0; d + 1];
        let mf = active as f64;
        for j in 2..=(d as u64).min(active) {
            let rate = mf / (j * (j - 1)) as f64;
            let ln_total = ln_binomial(active, j);
            let mut parts = vec![0u64; d];
            descend(m, &mut parts, 0, j, 0, d as u64, &mut |size, parts| {
                let ln_w: f64 = parts.iter().zip(m).map(|(&b, &c)| ln_binomial(c, b)).sum();
                inflow[size as usize] += rate * (ln_w - ln_total).exp();
            });
        }
        Self { inflow }
    }

    fn total(&self) -> f64 {
        self.inflow.iter().sum()
    }
}

/// Recursive descent over `(b_1, .., b_d)` with `sum b_l = j` and
/// `sum l b_l <= max_size`, calling `visit(size, parts)` on each.
fn descend(
    m: &[u64],
    parts: &mut [u64],
    level: usize,
    left: u64,
    size: u64,
    max_size: u64,
    visit: &mut impl FnMut(u64, &[u64]),
) {
    if left == 0 {
        visit(size, parts);
        return;
    }
    if level == parts.len() {
        return;
    }
    let l = level as u64 + 1;
    // Remaining parts have size >= l each.
    if size + left * l > max_size {
        return;
    }
    let most = left.min(m[level]).min((max_size - size) / l);
    for b in 0..=most {
        parts[level] = b;
        descend(m, parts, level + 1, left - b, size + b * l, max_size, visit);
    }
    parts[level] = 0;
}

/// Expected jump rate `beta(m)` of each coordinate of `(X_1, .., X_d, Y, Z_d)`
/// in the Bolthausen-Sznitman freeze chain.
pub fn exact_drift(model: &LambdaModel, rho: f64, d: usize, m: &[u64], n: u64) -> Result<Vec<f64>> {
    let active = check_state(model, d, m, n)?;
    let h = harmonic(active);
    let small = SmallMerges::new(d, m, active);
    let mf: Vec<f64> = m.iter().map(|&v| v as f64).collect();
    let mut beta = Vec::with_capacity(d + 2);
    for k in 1..=d {
        let inflow = if k >= 2 { small.inflow[k] } else { 0.0 };
        beta.push(-rho * mf[k - 1] - mf[k - 1] * h + inflow);
    }
    beta.push(-rho * mf[d] - mf[d] * h + (active - 1) as f64 - small.total());
    beta.push(rho * mf[d - 1]);
    Ok(beta)
}

/// Second moments `alpha(m)` of the jumps of each coordinate.
pub fn exact_variance(model: &LambdaModel, rho: f64, d: usize, m: &[u64], n: u64) -> Result<Vec<f64>> {
    let active = check_state(model, d, m, n)?;
    let h = harmonic(active);
    let small = SmallMerges::new(d, m, active);
    let mf: Vec<f64> = m.iter().map(|&v| v as f64).collect();
    let mut alpha = Vec::with_capacity(d + 2);
    for k in 1..=d {
        let c = mf[k - 1];
        let inflow = if k >= 2 { small.inflow[k] } else { 0.0 };
        alpha.push(rho * c + c * (c - 1.0) + c * h + inflow);
    }
    let y = mf[d];
    alpha.push(rho * y + y * (y - 1.0) - y * h + (active - 1) as f64 - small.total());
    alpha.push(rho * mf[d - 1]);
    Ok(alpha)
}

/// Drift of the rescaled chain in rescaled time, comparable with `b(xi)`.
pub fn rescaled_drift(rho: f64, d: usize, m: &[u64], n: u64) -> Result<Vec<f64>> {
    let beta = exact_drift(&LambdaModel::BolthausenSznitman, rho, d, m, n)?;
    let ln = (n as f64).ln();
    Ok(beta.iter().zip(state_scale(d, n)).map(|(b, s)| b * s / ln).collect())
}

/// Jump second moments of the rescaled chain in rescaled time.
pub fn rescaled_variance(rho: f64, d: usize, m: &[u64], n: u64) -> Result<Vec<f64>> {
    let alpha = exact_variance(&LambdaModel::BolthausenSznitman, rho, d, m, n)?;
    let ln = (n as f64).ln();
    Ok(alpha.iter().zip(state_scale(d, n)).map(|(a, s)| a * s * s / ln).collect())
}

/// For `x = i/n` in `[1/R, 1]`: `(h(i) / log n, log R / log n)`, where the
/// first should be within the second of 1.
pub fn harmonic_bound_check(n: u64, i: u64, r: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::Domain(format!("need n >= 2, got {n}")));
    }
    if !(r > std::f64::consts::E) {
        return Err(Error::Domain(format!("need R > e, got {r}")));
    }
    if i > n || (i as f64) < n as f64 / r {
        return Err(Error::Domain(format!("x = {i}/{n} outside [1/R, 1]")));
    }
    let ln = (n as f64).ln();
    Ok((harmonic(i) / ln, r.ln() / ln))
}

/// `(1 - C(n,j)/C(n+k,j), kj/(n-j+1))`; the first lies in `[0, second]`.
pub fn binom_ratio_bound_check(n: u64, j: u64, k: u64) -> Result<(f64, f64)> {
    if j > n {
        return Err(Error::Domain(format!("need j <= n, got j={j}, n={n}")));
    }
    let (nf, kf) = (n as f64, k as f64);
    let ln_ratio: f64 = (0..j).map(|i| (-kf / (nf + kf - i as f64)).ln_1p()).sum();
    Ok((-ln_ratio.exp_m1(), kf * j as f64 / (nf - j as f64 + 1.0)))
}
