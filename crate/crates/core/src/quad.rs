//! Adaptive Gauss-Kronrod quadrature and Wynn epsilon acceleration.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
  0.991455371120812639206854697526329,
  0.949107912342758524526189684047851,
  0.864864423359769072789712788640926,
  0.741531185599394439863864773280788,
  0.586087235467691130294144845693013,
  0.405845151377397166906606412076961,
  0.207784955007898467600689403773245,
  0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
  0.022935322010529224963732008058970,
  0.063092092629978553290700663189204,
  0.104790010322250183839876322541518,
  0.140653259715525918745189590510238,
  0.169004726639267902826583426598550,
  0.190350578064785409913256402421014,
  0.204432940075298892414161999234649,
  0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
  0.129484966168869693270611432679082,
  0.279705391489276667901467771423780,
  0.381830050505118944950369775488975,
  0.417959183673469387755102040816327,
];

/// One G7-K15 panel: (kronrod estimate, |kronrod - gauss|).
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
  let c = 0.5 * (a + b);
  let h = 0.5 * (b - a);
  let fc = f(c);
  let mut rk = fc * WGK[7];
  let mut rg = fc * WG[3];
  for j in 0..7 {
    let dx = h * XGK[j];
    let s = f(c - dx) + f(c + dx);
    rk += WGK[j] * s;
    if j % 2 == 1 {
      rg += WG[j / 2] * s;
    }
  }
  (rk * h, ((rk - rg) * h).abs())
}

/// Globally adaptive G7-K15 on [a, b]; stops when the error estimate is below
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
  f: F,
  a: f64,
  b: f64,
  abs_tol: f64,
  rel_tol: f64,
) -> Result<f64> {
  if a == b {
    return Ok(0.0);
  }
  let mut panels: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
  let (v, e) = gk15(&f, a, b);
  panels.push((a, b, v, e));
  let mut total = v;
  let mut err = e;
  for _ in 0..2000 {
    if !total.is_finite() {
      return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
    }
    if err <= abs_tol.max(rel_tol * total.abs()) {
      return Ok(total);
    }
    let (k, _) = panels
      .iter()
      .enumerate()
      .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
      .expect("non-empty");
    let (lo, hi, v0, e0) = panels.swap_remove(k);
    let mid = 0.5 * (lo + hi);
    if mid <= lo || mid >= hi {
      break;
    }
    let (v1, e1) = gk15(&f, lo, mid);
    let (v2, e2) = gk15(&f, mid, hi);
    total += v1 + v2 - v0;
    err += e1 + e2 - e0;
    panels.push((lo, mid, v1, e1));
    panels.push((mid, hi, v2, e2));
  }
  // Resum to drop accumulated cancellation in the running totals.
  let total: f64 = panels.iter().map(|p| p.2).sum();
  let err: f64 = panels.iter().map(|p| p.3).sum();
  if err <= 10.0 * abs_tol.max(rel_tol * total.abs()) {
    Ok(total)
  } else {
    Err(Error::Quadrature(format!(
      "error estimate {err:.3e} exceeds tolerance on [{a}, {b}]"
    )))
  }
}

/// Wynn epsilon table over a growing sequence of partial sums.
#[derive(Debug, Default)]
pub struct Wynn {
  cols: Vec<f64>,
}

impl Wynn {
  pub fn new() -> Self {
    Self::default()
  }

  /// Pushes the next partial sum and returns the current best extrapolation.
  pub fn push(&mut self, s: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = s;
    let n = self.cols.len();
    for k in 0..n {
      let diff = cur - self.cols[k];
      let next = if diff == 0.0 { f64::INFINITY } else { prev + 1.0 / diff };
      prev = self.cols[k];
      self.cols[k] = cur;
      cur = next;
    }
    self.cols.push(cur);
    // Even columns hold the accelerated estimates.
    let last_even = (self.cols.len() - 1) & !1;
    let mut best = self.cols[0];
    let mut k = last_even;
    while k > 0 {
      if self.cols[k].is_finite() {
        best = self.cols[k];
        break;
      }
      k -= 2;
    }
    best
  }
}
