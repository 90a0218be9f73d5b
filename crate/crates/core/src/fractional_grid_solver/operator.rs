//! Quadrature weights for the integral fractional Laplacian on a uniform
//! lattice and the Dirichlet operator built from them.
//!
//! Off the diagonal the operator is Toeplitz. The diagonal is corrected so
//! that the lattice restriction of the Martin kernel is exactly harmonic on the
//! infinite lattice; truncation to `(-R, R)` then acts as extra killing.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use statrs::function::gamma::gamma;

/// Normalizing constant of `(-Delta)^{alpha/2}` in one dimension.
pub(crate) fn frac_const(alpha: f64) -> f64 {
  alpha * 2f64.powf(alpha - 1.0) * gamma((1.0 + alpha) / 2.0)
    / (std::f64::consts::PI.sqrt() * gamma(1.0 - alpha / 2.0))
}

const SERIES_FROM: usize = 20;

/// Hat-function moment of `|z|^{1-alpha}` centred at `k`.
fn hat_moment(alpha: f64, k: usize) -> f64 {
  let b = 2.0 - alpha;
  let c = 3.0 - alpha;
  if k == 0 {
    return 1.0 / (b * c);
  }
  if k < SERIES_FROM {
    let f = |z: f64| z.powf(c) / (b * c);
    let k = k as f64;
    return f(k + 1.0) - 2.0 * f(k) + f(k - 1.0);
  }
  let (p2, p4, p6) = series_coeffs(alpha);
  let k = k as f64;
  let r = 1.0 / (k * k);
  k.powf(1.0 - alpha) * (1.0 + r * (p2 / 12.0 + r * (p4 / 360.0 + r * p6 / 20160.0)))
}

fn series_coeffs(alpha: f64) -> (f64, f64, f64) {
  let p2 = (1.0 - alpha) * (-alpha);
  let p4 = p2 * (-alpha - 1.0) * (-alpha - 2.0);
  let p6 = p4 * (-alpha - 3.0) * (-alpha - 4.0);
  (p2, p4, p6)
}

/// Lattice weights `c_k`, `k = 0..=kmax` (`c_0 = 0`).
pub(crate) fn lattice_weights(alpha: f64, kmax: usize) -> Vec<f64> {
  let mut c = vec![0.0; kmax + 1];
  if kmax >= 1 {
    c[1] = hat_moment(alpha, 0) + hat_moment(alpha, 1);
  }
  for (k, ck) in c.iter_mut().enumerate().skip(2) {
    *ck = hat_moment(alpha, k) / (k * k) as f64;
  }
  c
}

/// `sum_{k > kk} k^{-s}` by Euler-Maclaurin.
fn power_tail(s: f64, kk: usize) -> f64 {
  let k = kk as f64;
  k.powf(1.0 - s) / (s - 1.0) - 0.5 * k.powf(-s) + s * k.powf(-s - 1.0) / 12.0
    - s * (s + 1.0) * (s + 2.0) * k.powf(-s - 3.0) / 720.0
}

/// Tail of the lattice weights, `sum_{k > kk} c_k`, from their expansion.
fn weights_tail(alpha: f64, kk: usize) -> f64 {
  let (p2, p4, _) = series_coeffs(alpha);
  power_tail(1.0 + alpha, kk) + p2 / 12.0 * power_tail(3.0 + alpha, kk)
    + p4 / 360.0 * power_tail(5.0 + alpha, kk)
}

const DIRECT: usize = 1 << 16;

/// `sum_{k >= 1} c_k`.
pub(crate) fn weights_total(alpha: f64) -> f64 {
  let c = lattice_weights(alpha, DIRECT);
  let mut s = weights_tail(alpha, DIRECT);
  for ck in c.iter().rev() {
    s += ck;
  }
  s
}

/// Which lattice sites belong to the cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Lattice {
  HalfLine,
  Punctured,
}

const DEFECT_SITES: usize = 1024;

fn binom(b: f64, m: usize) -> f64 {
  (0..m).fold(1.0, |acc, j| acc * (b - j as f64) / (j + 1) as f64)
}

/// Lattice defect `D(i) = sum_k c_k (m(i+k) + m(i-k) - 2 m(i))` of the
/// homogeneous function `m(j) = |j|^beta 1{j in cone}` for `i = 1..=DEFECT_SITES`.
fn harmonic_defect(alpha: f64, beta: f64, lat: Lattice) -> Vec<f64> {
  let kk = DIRECT;
  let c = lattice_weights(alpha, kk);
  let total = weights_total(alpha);
  let m: Vec<f64> = (0..=kk + DEFECT_SITES).map(|j| (j as f64).powf(beta)).collect();
  let (p2, _, _) = series_coeffs(alpha);
  (1..=DEFECT_SITES)
    .map(|i| {
      let mut s = 0.0;
      for k in (1..=kk).rev() {
        let left = if k < i {
          m[i - k]
        } else if lat == Lattice::Punctured {
          m[k - i]
        } else {
          0.0
        };
        s += c[k] * (m[i + k] + left);
      }
      // k > kk: expand c_k (k + i)^beta (+ (k - i)^beta) in powers of i / k.
      let fi = i as f64;
      for mm in 0..=4usize {
        let sides = match lat {
          Lattice::HalfLine => 1.0,
          Lattice::Punctured => 1.0 + if mm % 2 == 0 { 1.0 } else { -1.0 },
        };
        if sides == 0.0 {
          continue;
        }
        let g = binom(beta, mm) * fi.powi(mm as i32) * sides;
        let e = 1.0 + alpha + mm as f64 - beta;
        s += g * (power_tail(e, kk) + p2 / 12.0 * power_tail(e + 2.0, kk));
      }
      s - 2.0 * m[i] * total
    })
    .collect()
}

type DefectKey = (u64, u64, Lattice);

fn defect_cached(alpha: f64, beta: f64, lat: Lattice) -> Arc<Vec<f64>> {
  static CACHE: OnceLock<Mutex<HashMap<DefectKey, Arc<Vec<f64>>>>> = OnceLock::new();
  let key = (alpha.to_bits(), beta.to_bits(), lat);
  let cache = CACHE.get_or_init(Default::default);
  if let Some(v) = cache.lock().expect("defect cache").get(&key) {
    return v.clone();
  }
  let v = Arc::new(harmonic_defect(alpha, beta, lat));
  cache.lock().expect("defect cache").insert(key, v.clone());
  v
}

/// Symmetric operator on the lattice sites `1..=n` (half-line) or
/// `-n..=-1, 1..=n` (punctured line), with spacing `h`.
pub(crate) struct LatticeOperator {
  pub lat: Lattice,
  pub n: usize,
  /// Off-diagonal entries `A_{ij} = off[|i - j|]`.
  pub off: Vec<f64>,
  /// Diagonal per node, in node order.
  pub diag: Vec<f64>,
  fft_len: usize,
  spectrum: Vec<f64>,
  fwd: Arc<dyn Fft<f64>>,
  inv: Arc<dyn Fft<f64>>,
}

impl LatticeOperator {
  pub fn new(alpha: f64, beta: f64, h: f64, n: usize, lat: Lattice) -> Self {
    let span = match lat {
      Lattice::HalfLine => n,
      Lattice::Punctured => 2 * n + 1,
    };
    let scale = frac_const(alpha) * h.powf(-alpha);
    let c = lattice_weights(alpha, span);
    let off: Vec<f64> = c.iter().map(|v| scale * v).collect();
    let base = -2.0 * scale * weights_total(alpha);
    let defect = defect_cached(alpha, beta, lat);
    let corr = |i: usize| {
      if i <= DEFECT_SITES {
        -scale * defect[i - 1] / (i as f64).powf(beta)
      } else {
        0.0
      }
    };
    let sites = node_sites(lat, n);
    let diag = sites.iter().map(|&j| base + corr(j.unsigned_abs() as usize)).collect();
    let fft_len = (2 * span).next_power_of_two();
    let mut col = vec![Complex64::new(0.0, 0.0); fft_len];
    for k in 1..span {
      col[k].re = off[k];
      col[fft_len - k].re = off[k];
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    fwd.process(&mut col);
    let spectrum = col.iter().map(|z| z.re / fft_len as f64).collect();
    Self { lat, n, off, diag, fft_len, spectrum, fwd, inv }
  }

  pub fn len(&self) -> usize {
    self.diag.len()
  }

  /// Lattice slot of node `k` in the padded FFT buffer.
  fn slot(&self, k: usize) -> usize {
    match self.lat {
      Lattice::HalfLine => k,
      Lattice::Punctured => {
        if k < self.n {
          k
        } else {
          k + 1
        }
      }
    }
  }

  /// `y = A x`.
  pub fn apply(&self, x: &[f64], y: &mut [f64], buf: &mut Vec<Complex64>) {
    buf.clear();
    buf.resize(self.fft_len, Complex64::new(0.0, 0.0));
    for (k, v) in x.iter().enumerate() {
      buf[self.slot(k)].re = *v;
    }
    self.fwd.process(buf);
    for (z, s) in buf.iter_mut().zip(&self.spectrum) {
      *z *= *s;
    }
    self.inv.process(buf);
    for (k, out) in y.iter_mut().enumerate() {
      *out = buf[self.slot(k)].re + self.diag[k] * x[k];
    }
  }

  pub fn dense(&self) -> Array2<f64> {
    let m = self.len();
    let sites = node_sites(self.lat, self.n);
    Array2::from_shape_fn((m, m), |(i, j)| {
      if i == j {
        self.diag[i]
      } else {
        self.off[(sites[i] - sites[j]).unsigned_abs() as usize]
      }
    })
  }

  /// Bound on the spectral radius (Gershgorin).
  pub fn radius(&self) -> f64 {
    let offsum: f64 = 2.0 * self.off.iter().sum::<f64>();
    self.diag.iter().map(|d| d.abs()).fold(0.0, f64::max) + offsum
  }
}

/// Signed lattice index of every node.
pub(crate) fn node_sites(lat: Lattice, n: usize) -> Vec<i64> {
  let n = n as i64;
  match lat {
    Lattice::HalfLine => (1..=n).collect(),
    Lattice::Punctured => (-n..=-1).chain(1..=n).collect(),
  }
}

#[cfg(test)]
mod tests {
  use super::*;

  #[test]
  fn series_matches_direct_weights() {
    for &a in &[0.5, 1.0, 1.5, 1.9] {
      let b = 2.0 - a;
      let c = 3.0 - a;
      let f = |z: f64| z.powf(c) / (b * c);
      let k = SERIES_FROM as f64;
      let direct = f(k + 1.0) - 2.0 * f(k) + f(k - 1.0);
      let series = hat_moment(a, SERIES_FROM);
      assert!((direct - series).abs() < 1e-11 * series, "{a} {direct} {series}");
    }
  }

  #[test]
  fn weights_total_tail_is_consistent() {
    for &a in &[0.7, 1.0, 1.5] {
      let c = lattice_weights(a, 1 << 12);
      let partial: f64 = c.iter().sum();
      let s = partial + weights_tail(a, 1 << 12);
      assert!((s - weights_total(a)).abs() < 1e-12, "{a}");
    }
  }

  #[test]
  fn fft_apply_matches_dense() {
    for lat in [Lattice::HalfLine, Lattice::Punctured] {
      let op = LatticeOperator::new(1.3, 0.3, 0.1, 37, lat);
      let a = op.dense();
      let x: Vec<f64> = (0..op.len()).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
      let mut y = vec![0.0; op.len()];
      op.apply(&x, &mut y, &mut Vec::new());
      for i in 0..op.len() {
        let want: f64 = (0..op.len()).map(|j| a[[i, j]] * x[j]).sum();
        assert!((want - y[i]).abs() < 1e-9 * want.abs().max(1.0));
      }
    }
  }

  #[test]
  fn martin_restriction_is_lattice_harmonic() {
    // Applying the untruncated corrected operator to |j|^beta gives zero.
    let a = 1.5;
    let beta = 0.75;
    let d = defect_cached(a, beta, Lattice::HalfLine);
    assert!(d[0].abs() > 1e-3);
    for i in [100usize, 500, 1000] {
      assert!(d[i - 1].abs() < 1e-6 * (i as f64).powf(beta), "{i} {}", d[i - 1]);
    }
  }
}
