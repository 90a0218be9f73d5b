//! Tabulated unit-time radial density and exact bridge midpoint sampling.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use statrs::function::gamma::gamma;

use crate::error::Result;
use crate::stable_density::subordinator_table;
use crate::stable_sampler::{open01, std_normal, unit_positive, unit_symmetric};

const NEAR_MAX: f64 = 8.0;
const NEAR_STEP: f64 = 1.0 / 128.0;
const FAR_MAX: f64 = 1e4;
const FAR_PER_DECADE: f64 = 100.0;

/// `ln p_1(r)` for the isotropic law in dimension `d`, interpolated.
#[derive(Debug)]
pub struct UnitDensity {
  alpha: f64,
  dim: usize,
  near: Vec<f64>,
  far: Vec<f64>,
  far_step: f64,
  /// Coefficients of `r^{-d-k alpha}`, k = 1, 2, 3.
  tail_c: [f64; 3],
}

fn catmull(v: &[f64], s: f64) -> f64 {
  let n = v.len();
  let i = (s.floor() as usize).min(n - 2);
  let u = s - i as f64;
  let p0 = if i == 0 { 2.0 * v[0] - v[1] } else { v[i - 1] };
  let p1 = v[i];
  let p2 = v[i + 1];
  let p3 = if i + 2 < n { v[i + 2] } else { 2.0 * v[i + 1] - v[i] };
  let u2 = u * u;
  let u3 = u2 * u;
  0.5 * (2.0 * p1 + (p2 - p0) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2
    + (3.0 * p1 - p0 - 3.0 * p2 + p3) * u3)
}

impl UnitDensity {
  pub fn new(alpha: f64, dim: usize) -> Result<Self> {
    let tab = subordinator_table(alpha)?;
    let nn = (NEAR_MAX / NEAR_STEP).round() as usize + 1;
    let near: Vec<f64> = (0..nn).map(|k| tab.unit_radial(dim, k as f64 * NEAR_STEP).ln()).collect();
    let nf = ((FAR_MAX / NEAR_MAX).log10() * FAR_PER_DECADE).round() as usize + 1;
    let far_step = (FAR_MAX / NEAR_MAX).ln() / (nf - 1) as f64;
    let far: Vec<f64> =
      (0..nf).map(|k| tab.unit_radial(dim, NEAR_MAX * (k as f64 * far_step).exp()).ln()).collect();
    // Two exact terms of the large-r series, third matched to the last tabulated value.
    let d = dim as f64;
    let term = |k: f64| {
      let sign = if k == 1.0 { 1.0 } else { -1.0 };
      sign * 2f64.powf(k * alpha) * gamma(0.5 * k * alpha + 1.0) * gamma(0.5 * (k * alpha + d))
        * (0.5 * k * PI * alpha).sin()
        / (PI.powf(0.5 * d + 1.0) * gamma(k + 1.0))
    };
    let (c1, c2) = (term(1.0), term(2.0));
    let rest = far[nf - 1].exp() - c1 * FAR_MAX.powf(-d - alpha) - c2 * FAR_MAX.powf(-d - 2.0 * alpha);
    let tail_c = [c1, c2, rest * FAR_MAX.powf(d + 3.0 * alpha)];
    Ok(Self { alpha, dim, near, far, far_step, tail_c })
  }

  pub fn dim(&self) -> usize {
    self.dim
  }

  /// `p_1(r)`, radial argument.
  #[inline]
  pub fn eval(&self, r: f64) -> f64 {
    if r < NEAR_MAX {
      catmull(&self.near, r / NEAR_STEP).exp()
    } else if r < FAR_MAX {
      catmull(&self.far, (r / NEAR_MAX).ln() / self.far_step).exp()
    } else {
      let u = r.powf(-self.alpha);
      let [c1, c2, c3] = self.tail_c;
      u * (c1 + u * (c2 + u * c3)) * r.powi(-(self.dim as i32))
    }
  }
}

fn cache() -> &'static Mutex<HashMap<(u64, usize), Arc<UnitDensity>>> {
  static C: OnceLock<Mutex<HashMap<(u64, usize), Arc<UnitDensity>>>> = OnceLock::new();
  C.get_or_init(|| Mutex::new(HashMap::new()))
}

pub fn unit_density(alpha: f64, dim: usize) -> Result<Arc<UnitDensity>> {
  let key = (alpha.to_bits(), dim);
  if let Some(v) = cache().lock().expect("cache lock").get(&key) {
    return Ok(v.clone());
  }
  let v = Arc::new(UnitDensity::new(alpha, dim)?);
  cache().lock().expect("cache lock").entry(key).or_insert_with(|| v.clone());
  Ok(v)
}

/// Unit-time isotropic increment written into `out[..d]`.
#[inline]
pub fn unit_increment<R: Rng + ?Sized>(alpha: f64, d: usize, rng: &mut R, out: &mut [f64; 3]) {
  if d == 1 {
    out[0] = unit_symmetric(alpha, rng);
  } else {
    let q = (2.0 * unit_positive(0.5 * alpha, rng)).sqrt();
    for o in out.iter_mut().take(d) {
      *o = q * std_normal(rng);
    }
  }
}

#[inline]
fn dist(a: &[f64; 3], b: &[f64; 3], d: usize) -> f64 {
  let mut s = 0.0;
  for k in 0..d {
    s += (a[k] - b[k]) * (a[k] - b[k]);
  }
  s.sqrt()
}

/// Midpoint of a stable bridge from `a` to `b` over two halves of length
/// `tau`; `scale = tau^{1/alpha}`. Draws from the mixture of forward and
/// backward increments and accepts with the product-over-envelope ratio.
pub fn bridge_midpoint<R: Rng + ?Sized>(
  p: &UnitDensity,
  a: &[f64; 3],
  b: &[f64; 3],
  scale: f64,
  rng: &mut R,
) -> [f64; 3] {
  let d = p.dim;
  let pd = p.eval(0.5 * dist(a, b, d) / scale);
  let mut inc = [0.0; 3];
  loop {
    unit_increment(p.alpha, d, rng, &mut inc);
    let from = if open01(rng) < 0.5 { a } else { b };
    let mut m = [0.0; 3];
    for k in 0..d {
      m[k] = from[k] + scale * inc[k];
    }
    let p1 = p.eval(dist(&m, a, d) / scale);
    let p2 = p.eval(dist(&m, b, d) / scale);
    if open01(rng) * (p1 + p2) * pd <= p1 * p2 {
      return m;
    }
  }
}
