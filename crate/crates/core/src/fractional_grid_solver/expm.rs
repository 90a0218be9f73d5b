//! `exp(tA) v` for symmetric negative semidefinite `A` by Chebyshev expansion.

use rustfft::num_complex::Complex64;

use super::operator::LatticeOperator;

/// `e^{-z} I_k(z)` for `k = 0, 1, ...` until the terms fall below `1e-18`.
pub(crate) fn scaled_bessel(z: f64) -> Vec<f64> {
  if z == 0.0 {
    return vec![1.0];
  }
  let start = (z + 15.0 * z.sqrt() + 50.0).ceil() as usize;
  let mut vals = vec![0.0; start + 2];
  vals[start] = 1e-300;
  for k in (1..=start).rev() {
    vals[k - 1] = 2.0 * k as f64 / z * vals[k] + vals[k + 1];
    if vals[k - 1] > 1e200 {
      for v in &mut vals[k - 1..] {
        *v *= 1e-200;
      }
    }
  }
  let norm = vals[0] + 2.0 * vals[1..].iter().sum::<f64>();
  let mut out: Vec<f64> = vals.iter().map(|v| v / norm).collect();
  let last = out.iter().rposition(|v| *v > 1e-18).unwrap_or(0);
  out.truncate(last + 1);
  out
}

/// `exp(t A) v`.
pub(crate) fn expm_apply(op: &LatticeOperator, t: f64, v: &[f64]) -> Vec<f64> {
  let rho = op.radius();
  let z = 0.5 * t * rho;
  let coef = scaled_bessel(z);
  let n = v.len();
  let mut buf: Vec<Complex64> = Vec::new();
  // B = (2 / rho) A + I maps the spectrum into [-1, 1].
  let mut av = vec![0.0; n];
  let mut apply_b = |x: &[f64], out: &mut [f64], buf: &mut Vec<Complex64>| {
    op.apply(x, &mut av, buf);
    for i in 0..n {
      out[i] = 2.0 / rho * av[i] + x[i];
    }
  };
  let mut acc: Vec<f64> = v.iter().map(|x| coef[0] * x).collect();
  if coef.len() == 1 {
    return acc;
  }
  let mut prev = v.to_vec();
  let mut cur = vec![0.0; n];
  apply_b(v, &mut cur, &mut buf);
  for i in 0..n {
    acc[i] += 2.0 * coef[1] * cur[i];
  }
  let mut next = vec![0.0; n];
  for c in &coef[2..] {
    apply_b(&cur, &mut next, &mut buf);
    for i in 0..n {
      next[i] = 2.0 * next[i] - prev[i];
      acc[i] += 2.0 * c * next[i];
    }
    std::mem::swap(&mut prev, &mut cur);
    std::mem::swap(&mut cur, &mut next);
  }
  acc
}

#[cfg(test)]
mod tests {
  use super::*;

  #[test]
  fn bessel_coefficients_sum_to_one() {
    for &z in &[0.3, 5.0, 120.0, 4000.0] {
      let c = scaled_bessel(z);
      let s = c[0] + 2.0 * c[1..].iter().sum::<f64>();
      assert!((s - 1.0).abs() < 1e-13, "{z}");
    }
    // e^{-1} I_0(1) = 0.46575960759364043
    assert!((scaled_bessel(1.0)[0] - 0.465_759_607_593_640_4).abs() < 1e-15);
  }
}
