//! Deterministic solver for the killed process on the half-line and the
//! punctured line.
//!
//! The generator is discretized on a uniform lattice truncated to `(-R, R)`;
//! everything outside the cone or the window is killed. Node values are
//! densities with respect to Lebesgue measure and every node carries the
//! quadrature weight `h`.

mod expm;
mod operator;

use std::io::{self, Write};
use std::sync::OnceLock;

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eigh, UPLO};
use serde::{Deserialize, Serialize};

use crate::cone_geometry::{ConeKind, ConeSpec, MartinKernel};
use crate::error::{invalid, Error, Result};
use crate::stable_density::density_1d;
use operator::{Lattice, LatticeOperator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
  cone: ConeSpec,
  r: f64,
  h: f64,
  nodes: Vec<f64>,
  quad_weights: Vec<f64>,
}

impl Grid1D {
  /// Lattice `h Z` inside the cone and `(-R, R)`; `R / h` must be an integer.
  pub fn new(cone: &ConeSpec, r: f64, h: f64) -> Result<Self> {
    let lat = lattice_of(cone)?;
    if !(h > 0.0 && r > h) {
      return Err(invalid("grid", "need 0 < h < R"));
    }
    let ratio = r / h;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio {
      return Err(invalid("grid", "R / h must be an integer"));
    }
    let n = ratio.round() as usize - 1;
    let nodes: Vec<f64> = operator::node_sites(lat, n).iter().map(|&j| j as f64 * h).collect();
    let quad_weights = vec![h; nodes.len()];
    Ok(Self { cone: cone.clone(), r, h, nodes, quad_weights })
  }

  pub fn cone(&self) -> &ConeSpec {
    &self.cone
  }

  pub fn radius(&self) -> f64 {
    self.r
  }

  pub fn spacing(&self) -> f64 {
    self.h
  }

  pub fn nodes(&self) -> &[f64] {
    &self.nodes
  }

  pub fn quad_weights(&self) -> &[f64] {
    &self.quad_weights
  }

  pub fn len(&self) -> usize {
    self.nodes.len()
  }

  pub fn is_empty(&self) -> bool {
    self.nodes.is_empty()
  }

  /// Index of the node closest to `x`.
  pub fn nearest(&self, x: f64) -> usize {
    let mut best = 0;
    for (i, y) in self.nodes.iter().enumerate() {
      if (y - x).abs() < (self.nodes[best] - x).abs() {
        best = i;
      }
    }
    best
  }

  /// Node indices ordered by distance to the vertex.
  pub fn nearest_to_vertex(&self, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..self.len()).collect();
    idx.sort_by(|&a, &b| self.nodes[a].abs().total_cmp(&self.nodes[b].abs()).then(a.cmp(&b)));
    idx.truncate(count);
    idx
  }

  fn lattice(&self) -> Lattice {
    lattice_of(&self.cone).expect("validated")
  }

  fn half_count(&self) -> usize {
    (self.r / self.h).round() as usize - 1
  }

  /// Linear interpolation of node values; zero is used at the vertex of the
  /// punctured line only for bracketing, never as a data value.
  fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
    let lo = -self.r;
    if !(x > lo && x < self.r) {
      return Err(Error::OutOfRange { x, lo, hi: self.r });
    }
    match self.lattice() {
      Lattice::HalfLine => {
        if x <= 0.0 {
          return Err(Error::OutOfRange { x, lo: 0.0, hi: self.r });
        }
        let u = x / self.h;
        let k = u.floor() as usize;
        if k == 0 {
          return Ok(values[0]);
        }
        let f = u - k as f64;
        let hi = values.get(k).copied().unwrap_or(0.0);
        Ok((1.0 - f) * values[k - 1] + f * hi)
      }
      Lattice::Punctured => {
        let n = self.half_count();
        if x == 0.0 {
          return Err(Error::OutOfRange { x, lo: 0.0, hi: 0.0 });
        }
        // Position on the node list with the vertex gap closed.
        let u = x / self.h;
        let (a, b, f) = if x.abs() < self.h {
          (n - 1, n, (u + 1.0) / 2.0)
        } else {
          let k = u.floor();
          let f = u - k;
          let k = k as i64;
          let slot = |j: i64| -> Option<usize> {
            if j < 0 && j >= -(n as i64) {
              Some((j + n as i64) as usize)
            } else if j > 0 && j <= n as i64 {
              Some(n + j as usize - 1)
            } else {
              None
            }
          };
          let (sa, sb) = (slot(k), slot(k + 1));
          let va = sa.map(|i| values[i]).unwrap_or(0.0);
          let vb = sb.map(|i| values[i]).unwrap_or(0.0);
          return Ok((1.0 - f) * va + f * vb);
        };
        Ok((1.0 - f) * values[a] + f * values[b])
      }
    }
  }

  /// Spreads a point mass at `x` onto the two neighbouring nodes as a density
  /// (mass falling on killed sites is dropped).
  fn deposit(&self, values: &mut [f64], x: f64, mass: f64) {
    let n = self.half_count() as i64;
    let u = x / self.h;
    let k = u.floor();
    let f = u - k;
    let k = k as i64;
    let lat = self.lattice();
    let slot = |j: i64| -> Option<usize> {
      match lat {
        Lattice::HalfLine => (j >= 1 && j <= n).then(|| (j - 1) as usize),
        Lattice::Punctured => {
          if j < 0 && j >= -n {
            Some((j + n) as usize)
          } else if j > 0 && j <= n {
            Some((n + j - 1) as usize)
          } else {
            None
          }
        }
      }
    };
    if let Some(i) = slot(k) {
      values[i] += (1.0 - f) * mass / self.h;
    }
    if let Some(i) = slot(k + 1) {
      values[i] += f * mass / self.h;
    }
  }
}

fn lattice_of(cone: &ConeSpec) -> Result<Lattice> {
  match cone.kind() {
    ConeKind::HalfLine => Ok(Lattice::HalfLine),
    ConeKind::PuncturedLine => Ok(Lattice::Punctured),
    _ => Err(Error::Unsupported("the grid solver handles the half-line and the punctured line".into())),
  }
}

/// Discretized generator with its Martin kernel.
pub struct GridOperator {
  grid: Grid1D,
  alpha: f64,
  martin: MartinKernel,
  m: Vec<f64>,
  inner: LatticeOperator,
  eig: OnceLock<(Array1<f64>, Array2<f64>)>,
}

/// Discretizes `-(-Delta)^{alpha/2}` on `grid` with zero exterior values.
pub fn build_operator(alpha: f64, grid: &Grid1D) -> Result<GridOperator> {
  crate::stable_sampler::check_alpha(alpha)?;
  if (alpha - grid.cone.alpha()).abs() > 0.0 {
    return Err(invalid("alpha", "does not match the cone of the grid"));
  }
  let martin = grid.cone.martin_kernel()?;
  let beta = martin.beta();
  let inner = LatticeOperator::new(alpha, beta, grid.h, grid.half_count(), grid.lattice());
  let m = grid.nodes.iter().map(|x| martin.value(&[*x])).collect();
  Ok(GridOperator { grid: grid.clone(), alpha, martin, m, inner, eig: OnceLock::new() })
}

impl GridOperator {
  pub fn grid(&self) -> &Grid1D {
    &self.grid
  }

  pub fn alpha(&self) -> f64 {
    self.alpha
  }

  pub fn beta(&self) -> f64 {
    self.martin.beta()
  }

  pub fn martin(&self) -> &MartinKernel {
    &self.martin
  }

  /// Martin kernel at the nodes.
  pub fn martin_values(&self) -> &[f64] {
    &self.m
  }

  pub fn apply(&self, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    self.inner.apply(x, &mut y, &mut Vec::new());
    y
  }

  pub fn diagonal(&self) -> &[f64] {
    &self.inner.diag
  }

  pub fn dense(&self) -> Array2<f64> {
    self.inner.dense()
  }

  pub fn row_sums(&self) -> Vec<f64> {
    self.apply(&vec![1.0; self.grid.len()])
  }

  /// `P_t f` for a density `f` given by node values.
  pub fn evolve(&self, t: f64, f: &[f64]) -> Vec<f64> {
    expm::expm_apply(&self.inner, t, f)
  }

  /// Grid survival probabilities `P_x(tau > t)` at the nodes.
  pub fn survival(&self, t: f64) -> Vec<f64> {
    self.evolve(t, &vec![1.0; self.grid.len()])
  }

  fn eigen(&self) -> Result<&(Array1<f64>, Array2<f64>)> {
    if let Some(e) = self.eig.get() {
      return Ok(e);
    }
    let e = self.dense().eigh(UPLO::Lower).map_err(|e| Error::Linalg(e.to_string()))?;
    Ok(self.eig.get_or_init(|| e))
  }

  /// Dense `exp(tA)`.
  fn exp_dense(&self, t: f64) -> Result<Array2<f64>> {
    let (w, v) = self.eigen()?;
    let scaled = v * &w.mapv(|l| (t * l).exp()).insert_axis(Axis(0));
    Ok(scaled.dot(&v.t()))
  }
}

/// Dense Dirichlet heat kernel `K[i][j]` at time `t`.
#[derive(Debug, Clone)]
pub struct GridKernel {
  pub t: f64,
  pub values: Array2<f64>,
  pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
  pub max_asymmetry: f64,
  pub min_entry: f64,
  pub max_row_mass: f64,
}

impl KernelReport {
  pub fn holds(&self) -> bool {
    self.max_asymmetry <= 1e-8 && self.min_entry >= 0.0 && self.max_row_mass <= 1.0 + 1e-6
  }
}

/// `p_t^Gamma` on the grid from the eigendecomposition of the operator.
/// Negative rounding residue is clipped to zero.
pub fn heat_kernel(op: &GridOperator, t: f64) -> Result<GridKernel> {
  if !(t > 0.0) {
    return Err(invalid("t", "must be positive"));
  }
  let h = op.grid.h;
  let e = op.exp_dense(t)?;
  let n = e.nrows();
  let mut values = Array2::zeros((n, n));
  for i in 0..n {
    for j in 0..=i {
      let v = (0.5 * (e[[i, j]] + e[[j, i]]) / h).max(0.0);
      values[[i, j]] = v;
      values[[j, i]] = v;
    }
  }
  let k = GridKernel { t, values, h };
  let rep = k.report();
  if !rep.holds() {
    return Err(Error::Linalg(format!("matrix exponential violates kernel invariants: {rep:?}")));
  }
  Ok(k)
}

impl GridKernel {
  pub fn report(&self) -> KernelReport {
    let n = self.values.nrows();
    let mut asym: f64 = 0.0;
    let mut min = f64::INFINITY;
    let mut row: f64 = 0.0;
    for i in 0..n {
      let mut s = 0.0;
      for j in 0..n {
        let v = self.values[[i, j]];
        asym = asym.max((v - self.values[[j, i]]).abs());
        min = min.min(v);
        s += v * self.h;
      }
      row = row.max(s);
    }
    KernelReport { max_asymmetry: asym, min_entry: min, max_row_mass: row }
  }

  /// `(K o L)(x, y) = sum_z K(x, z) L(z, y) h`.
  pub fn compose(&self, other: &GridKernel) -> GridKernel {
    GridKernel { t: self.t + other.t, values: self.values.dot(&other.values) * self.h, h: self.h }
  }

  /// Row masses `sum_j K(i, j) h`.
  pub fn row_mass(&self) -> Vec<f64> {
    self.values.sum_axis(Axis(1)).iter().map(|v| v * self.h).collect()
  }

  /// Largest ratio `K(i, j) / p_t(x_i - x_j)` over pairs with both nodes in `|x| <= limit`.
  pub fn domination_ratio(&self, grid: &Grid1D, limit: f64) -> Result<f64> {
    let a = grid.cone.alpha();
    let idx: Vec<usize> = (0..grid.len()).filter(|&i| grid.nodes[i].abs() <= limit).collect();
    let mut free = std::collections::HashMap::new();
    let mut worst: f64 = 0.0;
    for &i in &idx {
      for &j in &idx {
        let key = (grid.nodes[i] - grid.nodes[j]).abs().to_bits();
        let p = match free.get(&key) {
          Some(p) => *p,
          None => {
            let p = density_1d(a, self.t, f64::from_bits(key))?;
            free.insert(key, p);
            p
          }
        };
        worst = worst.max(self.values[[i, j]] / p);
      }
    }
    Ok(worst)
  }

  pub fn write_csv<W: Write>(&self, grid: &Grid1D, w: &mut W) -> io::Result<()> {
    writeln!(w, "x,y,value")?;
    for (i, x) in grid.nodes.iter().enumerate() {
      for (j, y) in grid.nodes.iter().enumerate() {
        writeln!(w, "{},{},{}", fmt17(*x), fmt17(*y), fmt17(self.values[[i, j]]))?;
      }
    }
    Ok(())
  }
}

/// Full-precision decimal rendering (17 significant digits).
pub fn fmt17(v: f64) -> String {
  format!("{v:.16e}")
}

/// Doob-conditioned kernel `K(x, y) / (M(x) M(y))`.
#[derive(Debug, Clone)]
pub struct RhoKernel {
  pub t: f64,
  pub values: Array2<f64>,
  pub martin: Vec<f64>,
  pub h: f64,
  /// Nodes where the Martin kernel is below `1e-12`; their rows and columns
  /// are left at zero.
  pub flagged: Vec<usize>,
}

pub fn rho_kernel(k: &GridKernel, m: &MartinKernel, grid: &Grid1D) -> Result<RhoKernel> {
  if !m.is_exact() {
    return Err(Error::Unsupported("conditioning needs an exact Martin kernel".into()));
  }
  let mv: Vec<f64> = grid.nodes.iter().map(|x| m.value(&[*x])).collect();
  let flagged: Vec<usize> = (0..mv.len()).filter(|&i| mv[i] < 1e-12).collect();
  let n = mv.len();
  let values = Array2::from_shape_fn((n, n), |(i, j)| {
    if mv[i] < 1e-12 || mv[j] < 1e-12 {
      0.0
    } else {
      k.values[[i, j]] / (mv[i] * mv[j])
    }
  });
  Ok(RhoKernel { t: k.t, values, martin: mv, h: k.h, flagged })
}

impl RhoKernel {
  /// `sum_i rho(i, j)^q M(x_i)^2 h` for every column `j`.
  pub fn column_power_sums(&self, q: f64) -> Vec<f64> {
    let n = self.martin.len();
    (0..n)
      .map(|j| (0..n).map(|i| self.values[[i, j]].powf(q) * self.martin[i].powi(2) * self.h).sum())
      .collect()
  }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weight {
  Lebesgue,
  MartinSquared,
  Martin,
}

/// Node values of a density together with the measure it is normalized against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityOnGrid {
  pub nodes: Vec<f64>,
  pub values: Vec<f64>,
  pub weight: Weight,
  /// Integral of `values` against `weight` at construction.
  pub normalization: f64,
}

impl DensityOnGrid {
  fn new(grid: &Grid1D, m: &[f64], values: Vec<f64>, weight: Weight) -> Self {
    let normalization = weighted_integral(grid, m, &values, weight);
    Self { nodes: grid.nodes.clone(), values, weight, normalization }
  }

  pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
    writeln!(w, "x,value")?;
    for (x, v) in self.nodes.iter().zip(&self.values) {
      writeln!(w, "{},{}", fmt17(*x), fmt17(*v))?;
    }
    Ok(())
  }
}

fn weighted_integral(grid: &Grid1D, m: &[f64], v: &[f64], weight: Weight) -> f64 {
  v.iter()
    .zip(m)
    .zip(&grid.quad_weights)
    .map(|((f, m), w)| {
      f * w
        * match weight {
          Weight::Lebesgue => 1.0,
          Weight::MartinSquared => m * m,
          Weight::Martin => *m,
        }
    })
    .sum()
}

/// Start density for the stationary iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartDensity {
  /// Uniform on the part of the cone inside the unit ball.
  Uniform,
  /// Tent `(1 - |x| / 2)_+`.
  Triangular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryOptions {
  /// Step of the Ornstein-Uhlenbeck semigroup per iteration.
  pub t0: f64,
  pub tol: f64,
  pub max_iter: usize,
  pub start: StartDensity,
}

impl Default for StationaryOptions {
  fn default() -> Self {
    Self { t0: std::f64::consts::LN_2, tol: 1e-6, max_iter: 500, start: StartDensity::Uniform }
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
  pub phi: DensityOnGrid,
  /// Last step size `||L phi - phi||` in `L^1(M^2)`.
  pub residual: f64,
  /// A-posteriori bound on the distance to the fixed point.
  pub error_bound: f64,
  pub contraction: f64,
  pub iterations: usize,
  pub residual_history: Vec<f64>,
}

/// L^1(M^2) distance of two node functions.
pub fn l1_m2(grid: &Grid1D, m: &[f64], a: &[f64], b: &[f64]) -> f64 {
  a.iter().zip(b).zip(m).zip(&grid.quad_weights).map(|(((x, y), m), w)| (x - y).abs() * m * m * w).sum()
}

/// One step of the Ornstein-Uhlenbeck kernel, `phi -> int phi(x) l_t(x, .) M(x)^2 dx`.
pub fn ou_step(op: &GridOperator, t0: f64, phi: &[f64]) -> Vec<f64> {
  let g = &op.grid;
  let a = op.alpha;
  let c = (-t0 / a).exp();
  let s = 1.0 - (-t0).exp();
  let cb = c.powf(-op.beta());
  let mut mass = vec![0.0; g.len()];
  for (i, x) in g.nodes.iter().enumerate() {
    g.deposit(&mut mass, c * x, phi[i] * op.m[i] * cb * g.quad_weights[i]);
  }
  let out = op.evolve(s, &mass);
  out.iter().zip(&op.m).map(|(v, m)| if *m > 0.0 { v / m } else { 0.0 }).collect()
}

fn normalize_m2(g: &Grid1D, m: &[f64], v: &mut [f64]) {
  let s = weighted_integral(g, m, v, Weight::MartinSquared);
  for x in v.iter_mut() {
    *x /= s;
  }
}

/// Stationary density of the Ornstein-Uhlenbeck semigroup, normalized by `int phi M^2 = 1`.
pub fn ou_stationary(op: &GridOperator, opts: &StationaryOptions) -> Result<Stationary> {
  if !(opts.t0 > 0.0 && opts.tol > 0.0) {
    return Err(invalid("stationary", "step and tolerance must be positive"));
  }
  let g = &op.grid;
  let m = &op.m;
  let mut phi: Vec<f64> = g
    .nodes
    .iter()
    .map(|x| match opts.start {
      StartDensity::Uniform => (x.abs() < 1.0) as u8 as f64,
      StartDensity::Triangular => (1.0 - x.abs() / 2.0).max(0.0),
    })
    .collect();
  normalize_m2(g, m, &mut phi);
  let mut history = Vec::new();
  for it in 1..=opts.max_iter {
    let mut next = ou_step(op, opts.t0, &phi);
    normalize_m2(g, m, &mut next);
    let res = l1_m2(g, m, &next, &phi);
    phi = next;
    history.push(res);
    if history.len() >= 3 {
      let k = history.len();
      let r = (history[k - 1] / history[k - 2]).max(history[k - 2] / history[k - 3]);
      if r < 1.0 {
        let bound = res * r / (1.0 - r);
        if res < opts.tol && bound < opts.tol / 2.0 {
          let phi = DensityOnGrid::new(g, m, phi, Weight::MartinSquared);
          return Ok(Stationary {
            phi,
            residual: res,
            error_bound: bound,
            contraction: r,
            iterations: it,
            residual_history: history,
          });
        }
      }
      if k > 20 && history[k - 1] >= history[k - 11] {
        return Err(Error::NoConvergence(format!("stationary residual stagnated at {res:.3e}")));
      }
    }
  }
  Err(Error::NoConvergence(format!(
    "stationary iteration did not reach {:.1e} in {} steps",
    opts.tol, opts.max_iter
  )))
}

/// `Psi_t(x) = t^{-(1+2 beta)/alpha} phi(t^{-1/alpha} x) M(x)`.
pub fn psi(op: &GridOperator, phi: &DensityOnGrid, t: f64, x: f64) -> Result<f64> {
  if !(t > 0.0) {
    return Err(invalid("t", "must be positive"));
  }
  if !op.grid.cone.contains(&[x]) {
    return Err(Error::StartOutsideCone);
  }
  let a = op.alpha;
  let b = op.beta();
  let y = t.powf(-1.0 / a) * x;
  let f = op.grid.interpolate(&phi.values, y)?;
  Ok(t.powf(-(1.0 + 2.0 * b) / a) * f * op.martin.value(&[x]))
}

/// `Psi_t` at every node; zero where `t^{-1/alpha} x` leaves the grid.
pub fn psi_on_grid(op: &GridOperator, phi: &DensityOnGrid, t: f64) -> Result<Vec<f64>> {
  op.grid
    .nodes
    .iter()
    .map(|&x| match psi(op, phi, t, x) {
      Err(Error::OutOfRange { .. }) => Ok(0.0),
      other => other,
    })
    .collect()
}

/// `C_1 = int phi M` and the density `phi M / C_1`.
pub fn c1_and_mu(phi: &DensityOnGrid, op: &GridOperator) -> (f64, DensityOnGrid) {
  let g = &op.grid;
  let c1 = weighted_integral(g, &op.m, &phi.values, Weight::Martin);
  let mu: Vec<f64> = phi.values.iter().zip(&op.m).map(|(p, m)| p * m / c1).collect();
  (c1, DensityOnGrid::new(g, &op.m, mu, Weight::Lebesgue))
}

/// Distribution function of a Lebesgue density on the grid, by trapezoids
/// from the left end of the window, normalized to end at one.
pub fn grid_cdf(density: &DensityOnGrid, grid: &Grid1D) -> impl Fn(f64) -> f64 {
  let mut xs = vec![grid.nodes[0] - grid.h];
  let mut cum = vec![0.0];
  let mut prev = 0.0;
  for (x, v) in grid.nodes.iter().zip(&density.values) {
    let last = *cum.last().expect("non-empty");
    let dx = x - xs.last().expect("non-empty");
    cum.push(last + 0.5 * (prev + v) * dx);
    xs.push(*x);
    prev = *v;
  }
  let total = *cum.last().expect("non-empty") + 0.5 * prev * grid.h;
  xs.push(grid.r);
  cum.push(total);
  move |x: f64| {
    if x <= xs[0] {
      return 0.0;
    }
    if x >= *xs.last().expect("non-empty") {
      return 1.0;
    }
    let k = xs.partition_point(|v| *v <= x) - 1;
    let f = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ((1.0 - f) * cum[k] + f * cum[k + 1]) / total
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
  pub t: f64,
  /// `t^{((1+2 beta)/alpha)((q-1)/q)} ||P_t f - A Psi_t||_{q,M}`.
  pub rescaled_norm: f64,
  /// `int P_t f M`.
  pub martin_mass: f64,
  /// Share of `int |P_t f| M` carried by `|x| > R/2`.
  pub boundary_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
  pub q: f64,
  /// `A = int f M`.
  pub mass: f64,
  pub rows: Vec<DecayRow>,
  pub warning: Option<String>,
}

impl DecayTable {
  /// Ratio of the first to the last rescaled norm.
  pub fn decrease_factor(&self) -> f64 {
    self.rows[0].rescaled_norm / self.rows[self.rows.len() - 1].rescaled_norm
  }
}

/// `||g||_{q,M} = ||g / M||_{L^q(M^2)}`.
pub fn weighted_q_norm(grid: &Grid1D, m: &[f64], g: &[f64], q: f64) -> f64 {
  let s: f64 = g
    .iter()
    .zip(m)
    .zip(&grid.quad_weights)
    .filter(|((_, m), _)| **m > 0.0)
    .map(|((v, m), w)| (v / m).abs().powf(q) * m * m * w)
    .sum();
  s.powf(1.0 / q)
}

/// Tracks `P_t f` against `A Psi_t` over `t_grid`.
pub fn decay_check(
  op: &GridOperator,
  phi: &DensityOnGrid,
  f: &[f64],
  q: f64,
  t_grid: &[f64],
) -> Result<DecayTable> {
  let g = &op.grid;
  if f.len() != g.len() {
    return Err(invalid("f", "length does not match the grid"));
  }
  if !(q >= 1.0) {
    return Err(invalid("q", "must be at least 1"));
  }
  if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[0] < w[1])) || !(t_grid[0] > 0.0) {
    return Err(invalid("t_grid", "times must be positive and increasing"));
  }
  let a = op.alpha;
  let b = op.beta();
  let mass = weighted_integral(g, &op.m, f, Weight::Martin);
  let mut rows = Vec::new();
  let mut warning = None;
  let mut cur = f.to_vec();
  let mut now = 0.0;
  for &t in t_grid {
    cur = op.evolve(t - now, &cur);
    now = t;
    let psi_t = psi_on_grid(op, phi, t)?;
    let diff: Vec<f64> = cur.iter().zip(&psi_t).map(|(p, s)| p - mass * s).collect();
    let norm = weighted_q_norm(g, &op.m, &diff, q);
    let rescaled = t.powf((1.0 + 2.0 * b) / a * (q - 1.0) / q) * norm;
    let martin_mass = weighted_integral(g, &op.m, &cur, Weight::Martin);
    let abs: Vec<f64> = cur.iter().map(|v| v.abs()).collect();
    let total = weighted_integral(g, &op.m, &abs, Weight::Martin);
    let outer: f64 = g
      .nodes
      .iter()
      .zip(&abs)
      .zip(&op.m)
      .filter(|((x, _), _)| x.abs() > g.r / 2.0)
      .map(|((_, v), m)| v * m * g.h)
      .sum();
    let share = if total > 0.0 { outer / total } else { 0.0 };
    if share > 0.01 && warning.is_none() {
      warning = Some(format!("truncation dominates at t = {t}: {:.1}% of the mass near the window edge", 100.0 * share));
    }
    rows.push(DecayRow { t, rescaled_norm: rescaled, martin_mass, boundary_share: share });
  }
  Ok(DecayTable { q, mass, rows, warning })
}

/// Rescaled `||P_t Psi_1 - Psi_{1+t}||_{q,M}` for each `t` in `t_grid`.
pub fn entrance_evolution_gap(op: &GridOperator, phi: &DensityOnGrid, q: f64, t_grid: &[f64]) -> Result<Vec<f64>> {
  if !(q >= 1.0) {
    return Err(invalid("q", "must be at least 1"));
  }
  if t_grid.windows(2).any(|w| !(w[0] < w[1])) || t_grid.first().is_some_and(|t| !(*t > 0.0)) {
    return Err(invalid("t_grid", "times must be positive and increasing"));
  }
  let (a, b) = (op.alpha, op.beta());
  let mut cur = psi_on_grid(op, phi, 1.0)?;
  let mut now = 0.0;
  let mut out = Vec::with_capacity(t_grid.len());
  for &t in t_grid {
    cur = op.evolve(t - now, &cur);
    now = t;
    let want = psi_on_grid(op, phi, 1.0 + t)?;
    let diff: Vec<f64> = cur.iter().zip(&want).map(|(p, s)| p - s).collect();
    let norm = weighted_q_norm(&op.grid, &op.m, &diff, q);
    out.push((1.0 + t).powf((1.0 + 2.0 * b) / a * (q - 1.0) / q) * norm);
  }
  Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypercontractivity {
  pub q: f64,
  pub sup: f64,
  /// Node where the supremum is attained.
  pub at: f64,
}

/// `sup_j sum_i rho_1(x_i, x_j)^q M(x_i)^2 h`. For `q = 1` this is
/// `(e^A M) / M` and for `q = 2` it is `K_2(x_j, x_j) / M(x_j)^2`, both
/// without forming `rho_1`; other `q` use the dense kernel.
pub fn hypercontractivity_check(op: &GridOperator, q: f64) -> Result<Hypercontractivity> {
  if !(q >= 1.0) {
    return Err(invalid("q", "must be at least 1"));
  }
  let g = &op.grid;
  let sums: Vec<f64> = if q == 1.0 {
    let em = op.evolve(1.0, &op.m);
    em.iter().zip(&op.m).map(|(e, m)| e / m).collect()
  } else if q == 2.0 {
    let (w, v) = op.eigen()?;
    let ew: Vec<f64> = w.iter().map(|l| (2.0 * l).exp()).collect();
    (0..g.len())
      .map(|j| {
        let d: f64 = v.row(j).iter().zip(&ew).map(|(x, e)| x * x * e).sum();
        d / g.h / op.m[j].powi(2)
      })
      .collect()
  } else {
    let k = heat_kernel(op, 1.0)?;
    rho_kernel(&k, &op.martin, g)?.column_power_sums(q)
  };
  let (j, sup) =
    sums.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, v)| if *v > acc.1 { (j, *v) } else { acc });
  Ok(Hypercontractivity { q, sup, at: g.nodes[j] })
}
