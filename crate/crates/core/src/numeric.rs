//! Small numerical helpers shared by the rate, exact and fluid modules.

use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `ln B(a, b)` for positive reals.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// The `(n-1)`th harmonic number `h(n) = 1 + 1/2 + ... + 1/(n-1)`, with
/// `h(0) = h(1) = 0`.
pub fn harmonic(n: u64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = n - 1;
    if m < 64 {
        // sum smallest terms first
        return (1..=m).rev().map(|i| 1.0 / i as f64).sum();
    }
    // Euler-Maclaurin; the next omitted term is O(m^-8).
    let x = m as f64;
    let x2 = x * x;
    let euler_gamma = 0.577_215_664_901_532_9_f64;
    x.ln() + euler_gamma + 0.5 / x - 1.0 / (12.0 * x2) + 1.0 / (120.0 * x2 * x2)
        - 1.0 / (252.0 * x2 * x2 * x2)
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}
