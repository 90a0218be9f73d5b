//! Small statistics toolkit: moments, Kolmogorov-Smirnov, least squares.

/// Running sums for a mean and its standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
  pub n: u64,
  pub sum: f64,
  pub sum_sq: f64,
}

impl Moments {
  #[inline]
  pub fn push(&mut self, v: f64) {
    self.n += 1;
    self.sum += v;
    self.sum_sq += v * v;
  }

  pub fn merge(&mut self, o: &Moments) {
    self.n += o.n;
    self.sum += o.sum;
    self.sum_sq += o.sum_sq;
  }

  pub fn mean(&self) -> f64 {
    self.sum / self.n as f64
  }

  /// Sample standard deviation over `sqrt(n)`.
  pub fn stderr(&self) -> f64 {
    if self.n < 2 {
      return f64::INFINITY;
    }
    let n = self.n as f64;
    let m = self.mean();
    let var = ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0);
    (var / n).sqrt()
  }
}

/// Asymptotic Kolmogorov critical coefficient at level `level` (0.01 -> 1.6276).
pub fn ks_coefficient(level: f64) -> f64 {
  (-0.5 * (level / 2.0).ln()).sqrt()
}

/// One-sample statistic `sup |F_n - F|`; `xs` need not be sorted.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
  let mut v = xs.to_vec();
  v.sort_by(f64::total_cmp);
  let n = v.len() as f64;
  let mut d: f64 = 0.0;
  for (i, &x) in v.iter().enumerate() {
    let f = cdf(x);
    d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
  }
  d
}

/// Two-sample statistic `sup |F_n - G_m|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
  let mut x = a.to_vec();
  let mut y = b.to_vec();
  x.sort_by(f64::total_cmp);
  y.sort_by(f64::total_cmp);
  let (n, m) = (x.len() as f64, y.len() as f64);
  let (mut i, mut j) = (0usize, 0usize);
  let mut d: f64 = 0.0;
  while i < x.len() && j < y.len() {
    let v = x[i].min(y[j]);
    while i < x.len() && x[i] <= v {
      i += 1;
    }
    while j < y.len() && y[j] <= v {
      j += 1;
    }
    d = d.max((i as f64 / n - j as f64 / m).abs());
  }
  d
}

/// Critical value of the one-sample statistic for `n` draws.
pub fn ks_critical_one(n: usize, level: f64) -> f64 {
  ks_coefficient(level) / (n as f64).sqrt()
}

/// Critical value of the two-sample statistic.
pub fn ks_critical_two(n: usize, m: usize, level: f64) -> f64 {
  ks_coefficient(level) * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Ordinary least squares fit `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
  pub intercept: f64,
  pub slope: f64,
  pub slope_stderr: f64,
  pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
  let n = x.len() as f64;
  let mx = x.iter().sum::<f64>() / n;
  let my = y.iter().sum::<f64>() / n;
  let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
  let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
  let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
  let slope = sxy / sxx;
  let intercept = my - slope * mx;
  let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
  let slope_stderr = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
  let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
  LinearFit { intercept, slope, slope_stderr, r_squared }
}
