//! Light statistics: running moments, binomial errors, and the
//! Kolmogorov–Smirnov statistic used by the walk-on-spheres validators.

/// Mean and standard error of a sample, accumulated in one pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n as f64 - 1.0)
        }
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Binomial standard error of an empirical frequency `k/n`.
pub fn binomial_std_err(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = k as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Two-sided Kolmogorov–Smirnov statistic of a sample against a CDF given as
/// already-transformed uniform values in [0, 1].
pub fn ks_statistic_uniform(mut u: Vec<f64>) -> f64 {
    let n = u.len();
    if n == 0 {
        return 0.0;
    }
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in u.iter().enumerate() {
        let hi = (i as f64 + 1.0) / nf - x;
        let lo = x - i as f64 / nf;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic KS critical value at significance `alpha` (supported: 0.05 and
/// 0.01) for sample size `n`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    let c = if alpha <= 0.01 { 1.628 } else { 1.358 };
    c / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_stats_match_direct() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let mut s = RunningStats::default();
        for &x in &xs {
            s.push(x);
        }
        assert!((s.mean() - 2.5).abs() < 1e-15);
        assert!((s.variance() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ks_of_exact_grid_is_small() {
        let u: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic_uniform(u) < 1.0 / 1000.0 + 1e-12);
    }

    #[test]
    fn ks_detects_mass_concentration() {
        let u = vec![0.5; 100];
        assert!(ks_statistic_uniform(u) >= 0.49);
    }
}
