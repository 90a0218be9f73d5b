//! Free transition densities of the isotropic stable process.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, Wynn};
use crate::stable_sampler::{check_alpha, StableLaw};

/// Far-field constant `c` in `p_1(x) ~ c |x|^{-1-alpha}` (one dimension).
pub fn tail_constant(alpha: f64) -> f64 {
  gamma(1.0 + alpha) * (PI * alpha / 2.0).sin() / PI
}

/// Largest `r` where `exp(-r^alpha)` is still above the underflow floor.
fn damping_cutoff(alpha: f64) -> f64 {
  745.0f64.powf(1.0 / alpha)
}

/// Asymptotic (convergent for `alpha < 1`) tail series, summed to its smallest
/// term. `shift` is 1 for the density and 0 for the survival function.
fn tail_series(alpha: f64, x: f64, density: bool) -> Option<f64> {
  let lx = x.ln();
  let mut sum = 0.0;
  let mut last = f64::INFINITY;
  for k in 1..400 {
    let kf = k as f64;
    let s = (kf * PI * alpha / 2.0).sin();
    let lg = if density { ln_gamma(alpha * kf + 1.0) } else { ln_gamma(alpha * kf) };
    let mag = (lg - ln_gamma(kf + 1.0) - (alpha * kf + if density { 1.0 } else { 0.0 }) * lx).exp();
    if mag > last && k > 2 {
      break;
    }
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    sum += sign * s * mag / PI;
    last = mag;
    if mag < 1e-16 * sum.abs() {
      return Some(sum);
    }
  }
  if last < 1e-12 * sum.abs() {
    Some(sum)
  } else {
    None
  }
}

/// `int_0^inf exp(-r^alpha) kernel(r x) dr` split between zeros of the kernel and
/// summed with Wynn acceleration. `zero(k)` gives the k-th zero (k >= 1) of the
/// kernel in units of `r`.
fn oscillatory<F: Fn(f64) -> f64>(
  alpha: f64,
  f: F,
  first_zero: f64,
  spacing: f64,
) -> Result<f64> {
  let cut = damping_cutoff(alpha);
  if first_zero >= cut || cut / spacing < 8.0 {
    let mid = 1.0f64.min(0.5 * cut);
    let a = integrate(&f, 0.0, mid, 1e-17, 1e-13)?;
    let b = integrate(&f, mid, cut, 1e-17, 1e-13)?;
    return Ok(a + b);
  }
  let mut s = integrate(&f, 0.0, first_zero, 1e-18, 1e-14)?;
  let mut w = Wynn::new();
  let mut prev = w.push(s);
  let mut stable = 0;
  let mut lo = first_zero;
  let max_pieces = 200_000;
  for _ in 0..max_pieces {
    let hi = lo + spacing;
    if lo >= cut {
      return Ok(s);
    }
    s += integrate(&f, lo, hi, 1e-19, 1e-13)?;
    lo = hi;
    let est = w.push(s);
    if (est - prev).abs() <= 1e-14 * est.abs().max(1e-300) {
      stable += 1;
      if stable >= 3 {
        return Ok(est);
      }
    } else {
      stable = 0;
    }
    prev = est;
  }
  Err(Error::Quadrature("oscillatory series did not settle".into()))
}

fn unit_density(alpha: f64, x: f64) -> Result<f64> {
  let x = x.abs();
  if x == 0.0 {
    return Ok(gamma(1.0 + 1.0 / alpha) / PI);
  }
  if x.powf(alpha) >= 4.0 {
    if let Some(v) = tail_series(alpha, x, true) {
      return Ok(v);
    }
  }
  let v = oscillatory(
    alpha,
    |r| (-r.powf(alpha)).exp() * (r * x).cos(),
    0.5 * PI / x,
    PI / x,
  )?;
  Ok(v / PI)
}

/// `p_t(x) = (1/pi) int_0^inf exp(-t r^alpha) cos(r x) dr` in one dimension.
pub fn density_1d(alpha: f64, t: f64, x: f64) -> Result<f64> {
  check_alpha(alpha)?;
  if !(t > 0.0) {
    return Err(invalid("t", "time must be positive"));
  }
  let s = t.powf(-1.0 / alpha);
  Ok(s * unit_density(alpha, s * x)?)
}

/// `P(X_t <= x)` for the one-dimensional symmetric law.
pub fn cdf_1d(alpha: f64, t: f64, x: f64) -> Result<f64> {
  check_alpha(alpha)?;
  if !(t > 0.0) {
    return Err(invalid("t", "time must be positive"));
  }
  let y = x * t.powf(-1.0 / alpha);
  let a = y.abs();
  if a == 0.0 {
    return Ok(0.5);
  }
  let upper = if a.powf(alpha) >= 4.0 {
    tail_series(alpha, a, false)
  } else {
    None
  };
  let upper = match upper {
    Some(u) => u,
    None => {
      let half = oscillatory(alpha, |r| (-r.powf(alpha)).exp() * (r * a).sin() / r, PI / a, PI / a)?;
      0.5 - half / PI
    }
  };
  Ok(if y > 0.0 { 1.0 - upper } else { upper })
}

/// Kanter's function for the positive `a`-stable law.
fn kanter_a(a: f64, u: f64) -> f64 {
  (a * u).sin().powf(a / (1.0 - a)) * ((1.0 - a) * u).sin() / u.sin().powf(1.0 / (1.0 - a))
}

/// Density of the positive `a`-stable law with Laplace transform `exp(-lambda^a)`.
pub fn positive_density(a: f64, s: f64) -> Result<f64> {
  if !(a > 0.0 && a < 1.0) {
    return Err(invalid("alpha_half", format!("must lie in (0, 1), got {a}")));
  }
  if s <= 0.0 {
    return Ok(0.0);
  }
  let sa = s.powf(-a);
  if sa < 0.3 {
    // Convergent series in s^{-a}.
    let mut sum = 0.0;
    for k in 1..200 {
      let kf = k as f64;
      let mag = (ln_gamma(a * kf + 1.0) - ln_gamma(kf + 1.0)).exp() * sa.powf(kf) / s;
      let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
      sum += sign * (PI * a * kf).sin() * mag;
      if mag < 1e-17 * sum.abs() {
        break;
      }
    }
    return Ok(sum / PI);
  }
  let p = a / (1.0 - a);
  let scale = s.powf(-p);
  let f = |u: f64| {
    let b = kanter_a(a, u) * scale;
    if !(b < 700.0) {
      0.0
    } else {
      b * (-b).exp()
    }
  };
  // Split at the peak of b exp(-b), where b = 1.
  let target = 1.0 / scale;
  let mut lo = 0.0;
  let mut hi = PI;
  if kanter_a(a, 1e-9) < target {
    for _ in 0..80 {
      let mid = 0.5 * (lo + hi);
      if kanter_a(a, mid) < target {
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }
  let split = 0.5 * (lo + hi);
  let v = integrate(f, 0.0, split, 1e-300, 1e-12)? + integrate(f, split, PI, 1e-300, 1e-12)?;
  Ok(p * v / (PI * s))
}

/// Positive `(alpha/2)`-stable density tabulated on a log-spaced grid, used to
/// mix Gaussian kernels into the isotropic density.
#[derive(Debug)]
pub struct SubordinatorTable {
  alpha: f64,
  s: Vec<f64>,
  /// Trapezoid weight in log s times `s * eta_1(s)`.
  w: Vec<f64>,
}

impl SubordinatorTable {
  pub fn new(alpha: f64) -> Result<Self> {
    check_alpha(alpha)?;
    let a = 0.5 * alpha;
    let a0 = kanter_a(a, 1e-12);
    let s_lo = (a0 / 800.0).powf((1.0 - a) / a).max(1e-30);
    let s_hi: f64 = 1e16;
    let per_decade = 100.0;
    let (l0, l1) = (s_lo.log10(), s_hi.log10());
    let n = ((l1 - l0) * per_decade).ceil() as usize + 1;
    let du = (l1 - l0) / (n - 1) as f64 * std::f64::consts::LN_10;
    let mut s = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for k in 0..n {
      let sk = 10f64.powf(l0 + (l1 - l0) * k as f64 / (n - 1) as f64);
      let g = positive_density(a, sk)?;
      s.push(sk);
      w.push(du * sk * g);
    }
    Ok(Self { alpha, s, w })
  }

  pub fn alpha(&self) -> f64 {
    self.alpha
  }

  /// Unit-time radial density in dimension `d` at radius `r`.
  pub fn unit_radial(&self, d: usize, r: f64) -> f64 {
    let r2 = r * r;
    let half_d = d as f64 / 2.0;
    let mut acc = 0.0;
    for (sk, wk) in self.s.iter().zip(&self.w) {
      let e = r2 / (4.0 * sk);
      if e > 745.0 {
        continue;
      }
      acc += wk * (4.0 * PI * sk).powf(-half_d) * (-e).exp();
    }
    acc
  }
}

fn table_cache() -> &'static Mutex<HashMap<u64, Arc<SubordinatorTable>>> {
  static CACHE: OnceLock<Mutex<HashMap<u64, Arc<SubordinatorTable>>>> = OnceLock::new();
  CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared, lazily built subordinator table for `alpha`.
pub fn subordinator_table(alpha: f64) -> Result<Arc<SubordinatorTable>> {
  check_alpha(alpha)?;
  let key = alpha.to_bits();
  if let Some(t) = table_cache().lock().expect("cache lock").get(&key) {
    return Ok(t.clone());
  }
  let t = Arc::new(SubordinatorTable::new(alpha)?);
  table_cache().lock().expect("cache lock").entry(key).or_insert_with(|| t.clone());
  Ok(t)
}

/// Isotropic free density `p_t(x)` at `|x| = r` for `d <= 3`.
pub fn density_radial(law: &StableLaw, t: f64, r: f64) -> Result<f64> {
  if law.dim() > 3 {
    return Err(invalid("dim", "radial density supports d <= 3"));
  }
  if !(t > 0.0) {
    return Err(invalid("t", "time must be positive"));
  }
  if r < 0.0 {
    return Err(invalid("r", "radius must be nonnegative"));
  }
  let tab = subordinator_table(law.alpha())?;
  let s = t.powf(-1.0 / law.alpha());
  let v = s.powi(law.dim() as i32) * tab.unit_radial(law.dim(), s * r);
  if !(v.is_finite() && v > 0.0) {
    return Err(Error::Quadrature(format!("radial density not positive at r = {r}")));
  }
  Ok(v)
}

#[cfg(test)]
mod tests {
  use super::*;

  fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
  }

  #[test]
  fn cauchy_oracle() {
    for &x in &[0.0, 0.3, 1.0, 2.5, 7.0, 40.0, 900.0] {
      let v = density_1d(1.0, 1.0, x).unwrap();
      let exact = 1.0 / (PI * (1.0 + x * x));
      assert!(rel(v, exact) < 1e-8, "x={x}: {v} vs {exact}");
    }
    for &x in &[-3.0, 0.2, 1.0, 5.0, 100.0] {
      let v = cdf_1d(1.0, 1.0, x).unwrap();
      let exact = 0.5 + x.atan() / PI;
      assert!((v - exact).abs() < 1e-9, "x={x}: {v} vs {exact}");
    }
  }

  #[test]
  fn gaussian_like_limit_against_series() {
    // Small-x power series p_1(x) = (1/(pi alpha)) sum (-1)^k G((2k+1)/alpha) x^{2k}/(2k)!.
    let alpha: f64 = 1.5;
    for &x in &[0.1, 0.7, 1.3, 2.0] {
      let mut s = 0.0;
      for k in 0..60 {
        let kf = k as f64;
        let term = (ln_gamma((2.0 * kf + 1.0) / alpha) + (2.0 * kf) * f64::ln(x)
          - ln_gamma(2.0 * kf + 1.0))
        .exp();
        s += if k % 2 == 0 { term } else { -term };
      }
      let exact = s / (PI * alpha);
      let v = density_1d(alpha, 1.0, x).unwrap();
      assert!(rel(v, exact) < 1e-8, "x={x}: {v} vs {exact}");
    }
  }

  #[test]
  fn continuity_across_methods() {
    for &alpha in &[0.6, 1.2, 1.5, 1.9] {
      let x0 = 4.0f64.powf(1.0 / alpha);
      let a = unit_density(alpha, x0 * (1.0 - 1e-9)).unwrap();
      let b = unit_density(alpha, x0 * (1.0 + 1e-9)).unwrap();
      assert!(rel(a, b) < 1e-7, "alpha={alpha}: {a} vs {b}");
    }
  }

  #[test]
  fn scaling_identity() {
    for &(alpha, t, x) in &[(1.5, 3.0, 0.7), (0.8, 0.2, -4.0), (1.2, 17.0, 30.0)] {
      let lhs = density_1d(alpha, t, x).unwrap();
      let rhs = t.powf(-1.0 / alpha) * density_1d(alpha, 1.0, t.powf(-1.0 / alpha) * x).unwrap();
      assert!(rel(lhs, rhs) < 1e-10);
    }
  }

  #[test]
  fn heat_kernel_envelope() {
    let v = density_1d(1.5, 1.0, 10.0).unwrap();
    let env = 10f64.powf(-2.5);
    assert!(v > env / 10.0 && v < env * 10.0);
  }

  #[test]
  fn far_tail_matches_constant() {
    for &alpha in &[0.7, 1.0, 1.5, 1.8] {
      let x = 1e3;
      let v = density_1d(alpha, 1.0, x).unwrap();
      let asym = tail_constant(alpha) * x.powf(-1.0 - alpha);
      assert!(rel(v, asym) < 1e-2, "alpha={alpha}");
    }
  }

  #[test]
  fn normalization() {
    for &alpha in &[0.8, 1.0, 1.5, 1.9] {
      let l = 200.0;
      let body = integrate(|x| density_1d(alpha, 1.0, x).unwrap(), 0.0, 1.0, 1e-14, 1e-12).unwrap()
        + integrate(|x| density_1d(alpha, 1.0, x).unwrap(), 1.0, l, 1e-14, 1e-12).unwrap();
      let tail = tail_constant(alpha) * l.powf(-alpha) / alpha;
      let total = 2.0 * (body + tail);
      assert!((total - 1.0).abs() < 1e-4, "alpha={alpha}: {total}");
    }
  }

  #[test]
  fn positive_density_half_is_levy() {
    // a = 1/2: eta(s) = s^{-3/2} exp(-1/(4s)) / (2 sqrt(pi)).
    for &s in &[0.01, 0.1, 0.5, 1.0, 3.0, 50.0, 1e4] {
      let v = positive_density(0.5, s).unwrap();
      let exact = s.powf(-1.5) * (-1.0 / (4.0 * s)).exp() / (2.0 * PI.sqrt());
      assert!(rel(v, exact) < 1e-9, "s={s}: {v} vs {exact}");
    }
  }

  #[test]
  fn positive_density_methods_agree() {
    for &a in &[0.3, 0.6, 0.75, 0.95] {
      let s = 0.3f64.powf(-1.0 / a);
      let lo = positive_density(a, s * (1.0 - 1e-10)).unwrap();
      let hi = positive_density(a, s * (1.0 + 1e-10)).unwrap();
      assert!(rel(lo, hi) < 1e-8, "a={a}: {lo} vs {hi}");
    }
  }

  #[test]
  fn radial_matches_one_dimensional() {
    for &alpha in &[0.9, 1.5] {
      let law = StableLaw::new(alpha, 1).unwrap();
      for k in 0..20 {
        let x = 0.25 * k as f64 * (1.0 + 0.1 * k as f64);
        let a = density_radial(&law, 1.0, x).unwrap();
        let b = density_1d(alpha, 1.0, x).unwrap();
        assert!(rel(a, b) < 1e-4, "alpha={alpha}, x={x}: {a} vs {b}");
      }
    }
  }

  #[test]
  fn two_dimensional_cauchy_at_origin() {
    let law = StableLaw::new(1.0, 2).unwrap();
    let v = density_radial(&law, 1.0, 0.0).unwrap();
    assert!(rel(v, 1.0 / (2.0 * PI)) < 1e-6, "{v}");
    let v = density_radial(&law, 1.0, 2.0).unwrap();
    assert!(rel(v, 1.0 / (2.0 * PI * 5f64.powf(1.5))) < 1e-6, "{v}");
  }

  #[test]
  fn radial_scaling_and_monotone() {
    let law = StableLaw::new(1.3, 3).unwrap();
    let t: f64 = 2.7;
    let s = t.powf(-1.0 / 1.3);
    let mut prev = f64::INFINITY;
    for k in 0..40 {
      let r = 0.2 * k as f64;
      let v = density_radial(&law, t, r).unwrap();
      let w = s.powi(3) * density_radial(&law, 1.0, s * r).unwrap();
      assert!(rel(v, w) < 1e-8);
      assert!(v <= prev);
      prev = v;
    }
  }
}
