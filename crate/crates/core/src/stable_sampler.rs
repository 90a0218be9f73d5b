//! Exact sampling of symmetric and isotropic stable increments.
//!
//! All samplers draw a unit-time variate and multiply it by `t^{1/alpha}`
//! (or `t^{1/a}` for the positive law), so a draw at time `t` is bit-for-bit
//! the scaled unit-time draw under the same generator state.

use std::f64::consts::PI;

use rand::{Rng, RngExt};
use rand_distr::{Exp1, Open01, StandardNormal};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Isotropic alpha-stable law in dimension `dim` with characteristic function
/// `exp(-t |xi|^alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableLaw {
  alpha: f64,
  dim: usize,
}

impl StableLaw {
  pub fn new(alpha: f64, dim: usize) -> Result<Self> {
    check_alpha(alpha)?;
    if dim == 0 {
      return Err(invalid("dim", "dimension must be at least 1"));
    }
    Ok(Self { alpha, dim })
  }

  pub fn alpha(&self) -> f64 {
    self.alpha
  }

  pub fn dim(&self) -> usize {
    self.dim
  }

  /// Spatial scale `t^{1/alpha}` of the law at time `t`.
  pub fn scale(&self, t: f64) -> f64 {
    t.powf(1.0 / self.alpha)
  }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
  if !(alpha > 0.0 && alpha < 2.0) {
    return Err(invalid("alpha", format!("must lie in (0, 2), got {alpha}")));
  }
  Ok(())
}

fn check_time(t: f64) -> Result<()> {
  if !(t > 0.0 && t.is_finite()) {
    return Err(invalid("t", format!("time must be positive and finite, got {t}")));
  }
  Ok(())
}

/// Provenance of a reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
  pub seed: u64,
  pub stream_id: u64,
}

fn splitmix(mut z: u64) -> u64 {
  z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
  z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
  z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
  z ^ (z >> 31)
}

impl RngStream {
  pub fn new(seed: u64, stream_id: u64) -> Self {
    Self { seed, stream_id }
  }

  /// Generator for this stream. State and increment both depend on the pair,
  /// so neighbouring stream ids do not share a state trajectory.
  pub fn rng(&self) -> Pcg64 {
    let hi = splitmix(self.seed ^ splitmix(self.stream_id));
    let lo = splitmix(hi ^ self.stream_id.rotate_left(17));
    let state = ((hi as u128) << 64) | lo as u128;
    Pcg64::new(state, self.stream_id as u128)
  }

  /// Stream for chunk `k` of a partitioned job rooted at this stream.
  pub fn child(&self, k: u64) -> Self {
    Self { seed: splitmix(self.seed ^ splitmix(self.stream_id.wrapping_add(1))), stream_id: k }
  }
}

/// How draws at time `t` relate to unit-time draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Scaling {
  /// `t^{1/alpha}` times the stored unit-time draw (exact pathwise scaling).
  #[default]
  Coupled,
  /// Subordinator drawn at time `t` first, Gaussian scaled afterwards.
  Direct,
}

/// Chambers-Mallows-Stuck draw with characteristic function `exp(-|xi|^alpha)`.
pub fn unit_symmetric<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
  let u: f64 = rng.sample(Open01);
  let v = PI * (u - 0.5);
  if alpha == 1.0 {
    return v.tan();
  }
  let w: f64 = rng.sample(Exp1);
  let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
  a * ((((1.0 - alpha) * v).cos()) / w).powf((1.0 - alpha) / alpha)
}

/// Kanter draw with Laplace transform `exp(-lambda^a)`, `0 < a < 1`.
pub fn unit_positive<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
  let u: f64 = rng.sample(Open01);
  let u = PI * u;
  let w: f64 = rng.sample(Exp1);
  (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a)
}

/// One-dimensional symmetric stable draw at time `t`.
pub fn sample_symmetric_1d<R: Rng + ?Sized>(law: &StableLaw, t: f64, rng: &mut R) -> Result<f64> {
  check_time(t)?;
  if law.dim != 1 {
    return Err(invalid("dim", "sample_symmetric_1d needs a one-dimensional law"));
  }
  Ok(law.scale(t) * unit_symmetric(law.alpha, rng))
}

/// Positive `a`-stable draw with `E exp(-lambda S) = exp(-t lambda^a)`.
pub fn sample_positive_stable<R: Rng + ?Sized>(a: f64, t: f64, rng: &mut R) -> Result<f64> {
  if !(a > 0.0 && a < 1.0) {
    return Err(invalid("alpha_half", format!("must lie in (0, 1), got {a}")));
  }
  check_time(t)?;
  Ok(t.powf(1.0 / a) * unit_positive(a, rng))
}

/// Isotropic increment `sqrt(2 S) Z` at time `t`, written into `out`.
pub fn sample_isotropic_into<R: Rng + ?Sized>(
  law: &StableLaw,
  t: f64,
  scaling: Scaling,
  rng: &mut R,
  out: &mut [f64],
) -> Result<()> {
  check_time(t)?;
  if out.len() != law.dim {
    return Err(invalid("out", "buffer length must equal the dimension"));
  }
  let s1 = unit_positive(0.5 * law.alpha, rng);
  match scaling {
    Scaling::Coupled => {
      let q = (2.0 * s1).sqrt();
      let c = law.scale(t);
      for o in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *o = c * (q * z);
      }
    }
    Scaling::Direct => {
      let q = (2.0 * t.powf(2.0 / law.alpha) * s1).sqrt();
      for o in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *o = q * z;
      }
    }
  }
  Ok(())
}

pub fn sample_isotropic<R: Rng + ?Sized>(law: &StableLaw, t: f64, rng: &mut R) -> Result<Vec<f64>> {
  let mut out = vec![0.0; law.dim];
  sample_isotropic_into(law, t, Scaling::Coupled, rng, &mut out)?;
  Ok(out)
}

/// Uniform draw on the open unit interval; shared by other samplers.
pub(crate) fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
  rng.sample(Open01)
}

pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
  rng.sample(StandardNormal)
}

#[cfg(test)]
mod tests {
  use super::*;

  fn mean_cf(xs: &[f64], xi: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let v: Vec<f64> = xs.iter().map(|x| (xi * x).cos()).collect();
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
  }

  #[test]
  fn rejects_bad_parameters() {
    assert!(StableLaw::new(2.0, 1).is_err());
    assert!(StableLaw::new(0.0, 1).is_err());
    assert!(StableLaw::new(1.0, 0).is_err());
    let law = StableLaw::new(1.5, 1).unwrap();
    let mut rng = RngStream::new(1, 0).rng();
    assert!(sample_symmetric_1d(&law, 0.0, &mut rng).is_err());
    assert!(sample_symmetric_1d(&law, -1.0, &mut rng).is_err());
    assert!(sample_positive_stable(1.0, 1.0, &mut rng).is_err());
    assert!(sample_positive_stable(0.5, 0.0, &mut rng).is_err());
    let law2 = StableLaw::new(1.5, 2).unwrap();
    assert!(sample_symmetric_1d(&law2, 1.0, &mut rng).is_err());
    assert!(sample_isotropic(&law2, 0.0, &mut rng).is_err());
  }

  #[test]
  fn streams_reproduce_and_differ() {
    let a: Vec<u64> = {
      let mut r = RngStream::new(7, 3).rng();
      (0..8).map(|_| r.next_u64()).collect()
    };
    let b: Vec<u64> = {
      let mut r = RngStream::new(7, 3).rng();
      (0..8).map(|_| r.next_u64()).collect()
    };
    let c: Vec<u64> = {
      let mut r = RngStream::new(7, 4).rng();
      (0..8).map(|_| r.next_u64()).collect()
    };
    assert_eq!(a, b);
    assert_ne!(a, c);
  }

  #[test]
  fn zero_frequency_cf_is_one() {
    let law = StableLaw::new(1.3, 1).unwrap();
    let mut rng = RngStream::new(11, 0).rng();
    let xs: Vec<f64> = (0..1000).map(|_| sample_symmetric_1d(&law, 1.0, &mut rng).unwrap()).collect();
    assert_eq!(mean_cf(&xs, 0.0).0, 1.0);
    let mut rng = RngStream::new(11, 1).rng();
    let ss: Vec<f64> =
      (0..1000).map(|_| sample_positive_stable(0.6, 1.0, &mut rng).unwrap()).collect();
    let m = ss.iter().map(|s| (-0.0 * s).exp()).sum::<f64>() / ss.len() as f64;
    assert_eq!(m, 1.0);
  }

  #[test]
  fn cauchy_tail_fraction() {
    let law = StableLaw::new(1.0, 1).unwrap();
    let mut rng = RngStream::new(2024, 0).rng();
    let n = 1_000_000;
    let k = (0..n).filter(|_| sample_symmetric_1d(&law, 1.0, &mut rng).unwrap().abs() > 1.0).count();
    let p = k as f64 / n as f64;
    let se = (0.25 / n as f64).sqrt();
    assert!((p - 0.5).abs() < 3.0 * se, "p = {p}");
  }

  #[test]
  fn cf_at_unit_frequency() {
    let law = StableLaw::new(1.5, 1).unwrap();
    let mut rng = RngStream::new(5, 9).rng();
    let xs: Vec<f64> =
      (0..1_000_000).map(|_| sample_symmetric_1d(&law, 1.0, &mut rng).unwrap()).collect();
    let (m, se) = mean_cf(&xs, 1.0);
    assert!((m - (-1.0f64).exp()).abs() < 3.0 * se, "{m} +- {se}");
  }

  #[test]
  fn positive_laplace_transform() {
    let n = 1_000_000;
    for (k, &a) in [0.3, 0.5, 0.75, 0.9].iter().enumerate() {
      let mut rng = RngStream::new(99, k as u64).rng();
      let v: Vec<f64> = (0..n).map(|_| (-sample_positive_stable(a, 1.0, &mut rng).unwrap()).exp()).collect();
      let m = v.iter().sum::<f64>() / n as f64;
      let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
      assert!((m - (-1.0f64).exp()).abs() < 3.0 * sd / (n as f64).sqrt(), "a={a}: {m}");
    }
    let mut rng = RngStream::new(99, 10).rng();
    let v: Vec<f64> =
      (0..n).map(|_| (-4.0 * sample_positive_stable(0.5, 1.0, &mut rng).unwrap()).exp()).collect();
    let m = v.iter().sum::<f64>() / n as f64;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    // Oracle: exp(-t lambda^{1/2}) at lambda = 4.
    assert!((m - (-2.0f64).exp()).abs() < 3.0 * sd / (n as f64).sqrt(), "{m}");
  }

  #[test]
  fn isotropic_direction_mean_vanishes() {
    let law = StableLaw::new(1.2, 2).unwrap();
    let mut rng = RngStream::new(3, 3).rng();
    let n = 1_000_000;
    let mut s = [0.0; 2];
    let mut s2 = [0.0; 2];
    for _ in 0..n {
      let x = sample_isotropic(&law, 1.0, &mut rng).unwrap();
      let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
      for k in 0..2 {
        s[k] += x[k] / r;
        s2[k] += (x[k] / r).powi(2);
      }
    }
    for k in 0..2 {
      let m = s[k] / n as f64;
      let se = ((s2[k] / n as f64 - m * m) / n as f64).sqrt();
      assert!(m.abs() < 3.0 * se, "coord {k}: {m}");
    }
  }

  #[test]
  fn isotropic_cf_in_three_dimensions() {
    let law = StableLaw::new(0.8, 3).unwrap();
    let mut rng = RngStream::new(8, 1).rng();
    let n = 1_000_000;
    let xi = [0.6, 0.0, 0.8];
    let v: Vec<f64> = (0..n)
      .map(|_| {
        let x = sample_isotropic(&law, 1.0, &mut rng).unwrap();
        (xi[0] * x[0] + xi[1] * x[1] + xi[2] * x[2]).cos()
      })
      .collect();
    let m = v.iter().sum::<f64>() / n as f64;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    assert!((m - (-1.0f64).exp()).abs() < 3.0 * sd / (n as f64).sqrt(), "{m}");
  }

  #[test]
  fn coupled_scaling_is_bitwise() {
    let law = StableLaw::new(1.7, 1).unwrap();
    let t = 3.25;
    for id in 0..50 {
      let x1 = sample_symmetric_1d(&law, 1.0, &mut RngStream::new(1, id).rng()).unwrap();
      let xt = sample_symmetric_1d(&law, t, &mut RngStream::new(1, id).rng()).unwrap();
      assert_eq!(xt, law.scale(t) * x1);
    }
    let law2 = StableLaw::new(1.1, 2).unwrap();
    for id in 0..50 {
      let mut a = [0.0; 2];
      let mut b = [0.0; 2];
      sample_isotropic_into(&law2, 1.0, Scaling::Coupled, &mut RngStream::new(2, id).rng(), &mut a)
        .unwrap();
      sample_isotropic_into(&law2, t, Scaling::Coupled, &mut RngStream::new(2, id).rng(), &mut b)
        .unwrap();
      assert_eq!(b[0], law2.scale(t) * a[0]);
      assert_eq!(b[1], law2.scale(t) * a[1]);
    }
  }
}
