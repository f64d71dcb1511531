//! Summation and Monte Carlo error analysis helpers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if !t.is_finite() {
            self.sum = t;
            return;
        }
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        if !self.sum.is_finite() {
            return self.sum;
        }
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<NeumaierSum>().value()
}

/// Value with a one-sigma standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Estimate { value, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }

    /// |value − target| measured in standard errors. Infinite when the
    /// estimate is noiseless and differs from the target.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else if self.stderr == 0.0 {
            f64::INFINITY
        } else {
            d / self.stderr
        }
    }

    pub fn within_sigmas(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (n - 1) as f64
}

/// Integrated autocorrelation time τ = 1 + 2Σρ(t) with Sokal's automatic
/// window (smallest W with W ≥ 5τ(W)). Independent samples give τ ≈ 1.
pub fn autocorrelation_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    let max_lag = n / 2;
    for t in 1..max_lag {
        let ct = centered[..n - t]
            .iter()
            .zip(&centered[t..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64;
        tau += 2.0 * ct / c0;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Block length of 5τ (at least 1 sample) used for error bars.
pub fn block_length(xs: &[f64]) -> usize {
    (5.0 * autocorrelation_time(xs)).ceil().max(1.0) as usize
}

/// Means of consecutive non-overlapping blocks; the ragged tail is dropped.
pub fn block_means(xs: &[f64], block_len: usize) -> Vec<f64> {
    let b = block_len.max(1);
    xs.chunks_exact(b).map(mean).collect()
}

/// Mean with a batch-means standard error (block length 5τ). Falls back to
/// the naive error when fewer than 10 blocks fit.
pub fn mean_with_error(xs: &[f64]) -> Estimate {
    let value = mean(xs);
    if xs.len() < 2 {
        return Estimate::new(value, f64::INFINITY);
    }
    let b = block_length(xs);
    let nb = xs.len() / b;
    let stderr = if nb >= 10 {
        let bm = block_means(xs, b);
        (variance(&bm) / nb as f64).sqrt()
    } else {
        (variance(xs) * autocorrelation_time(xs) / xs.len() as f64).sqrt()
    };
    Estimate::new(value, stderr)
}

/// Block bootstrap standard error of `stat` applied to the vector of means of
/// several aligned observables. Blocks of `block_len` consecutive samples are
/// resampled with replacement; the resample count and seed are fixed so the
/// result is deterministic.
pub fn block_bootstrap<F>(series: &[&[f64]], block_len: usize, n_boot: usize, seed: u64, stat: F) -> Estimate
where
    F: Fn(&[f64]) -> f64,
{
    let k = series.len();
    assert!(k > 0, "block bootstrap needs at least one observable");
    let n = series[0].len();
    assert!(series.iter().all(|s| s.len() == n), "observables must be aligned");
    let full: Vec<f64> = series.iter().map(|s| mean(s)).collect();
    let value = stat(&full);
    let b = block_len.max(1);
    let nb = n / b;
    if nb < 2 {
        return Estimate::new(value, f64::INFINITY);
    }
    let bm: Vec<Vec<f64>> = series.iter().map(|s| block_means(s, b)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reps = Vec::with_capacity(n_boot);
    let mut acc = vec![0.0; k];
    for _ in 0..n_boot {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for _ in 0..nb {
            let j = rng.gen_range(0..nb);
            for (a, col) in acc.iter_mut().zip(&bm) {
                *a += col[j];
            }
        }
        acc.iter_mut().for_each(|a| *a /= nb as f64);
        reps.push(stat(&acc));
    }
    Estimate::new(value, variance(&reps).sqrt())
}

/// Jackknife over blocks for `stat` of observable means.
pub fn block_jackknife<F>(series: &[&[f64]], block_len: usize, stat: F) -> Estimate
where
    F: Fn(&[f64]) -> f64,
{
    let k = series.len();
    let n = series[0].len();
    let full: Vec<f64> = series.iter().map(|s| mean(s)).collect();
    let value = stat(&full);
    let b = block_len.max(1);
    let nb = n / b;
    if nb < 2 {
        return Estimate::new(value, f64::INFINITY);
    }
    let bm: Vec<Vec<f64>> = series.iter().map(|s| block_means(s, b)).collect();
    let totals: Vec<f64> = bm.iter().map(|c| c.iter().sum()).collect();
    let mut leave = vec![0.0; k];
    let mut reps = Vec::with_capacity(nb);
    for j in 0..nb {
        for i in 0..k {
            leave[i] = (totals[i] - bm[i][j]) / (nb - 1) as f64;
        }
        reps.push(stat(&leave));
    }
    let m = mean(&reps);
    let var = reps.iter().map(|r| (r - m) * (r - m)).sum::<f64>() * (nb - 1) as f64 / nb as f64;
    Estimate::new(value, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
}

/// Weighted least squares y ≈ a + b·x with weights 1/σ². Standard errors
/// treat the σ as known.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), sigma.len());
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let w = 1.0 / (sigma[i] * sigma[i]);
        s += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    let delta = s * sxx - sx * sx;
    LinearFit {
        slope: (s * sxy - sx * sy) / delta,
        intercept: (sxx * sy - sx * sxy) / delta,
        slope_stderr: (s / delta).sqrt(),
        intercept_stderr: (sxx / delta).sqrt(),
    }
}

/// Ordinary least squares with residual-based standard errors.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len();
    assert!(n >= 2 && n == y.len());
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_stderr, intercept_stderr) = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - intercept - slope * a;
                r * r
            })
            .sum();
        let s2 = rss / (n - 2) as f64;
        ((s2 / sxx).sqrt(), (s2 * (1.0 / n as f64 + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    LinearFit {
        slope,
        intercept,
        slope_stderr,
        intercept_stderr,
    }
}
