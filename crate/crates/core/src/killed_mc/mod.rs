//! Monte Carlo for the process killed on leaving a cone.
//!
//! Paths are simulated in self-similar coordinates: a run for `(x, t, dt)` is
//! carried out as the run for `(t^{-1/alpha} x, 1, dt / t)`, so the scaling of
//! survival probabilities holds pathwise under a shared seed.

pub mod bridge;
mod engine;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone_geometry::{ConeSpec, MartinKernel};
use crate::error::{invalid, Error, Result};
use crate::stable_sampler::{open01, RngStream};
use crate::stats::{linear_fit, Moments};
use engine::{Engine, Pt, Scratch};

/// Exit detection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
  /// Refine intervals near the boundary with bridge midpoints.
  pub bridge: bool,
  /// Refine while an endpoint is closer than `refine_factor * len^{1/alpha}`.
  pub refine_factor: f64,
  /// Bridge levels below the fine step.
  pub max_depth: u32,
  /// For cones whose complement has no interior: kill within this distance
  /// (in unit-horizon coordinates).
  pub kill_distance: f64,
}

impl Default for MonitorConfig {
  fn default() -> Self {
    Self { bridge: true, refine_factor: 4.0, max_depth: 16, kill_distance: 1e-6 }
  }
}

impl MonitorConfig {
  /// Plain discrete-time monitoring at the grid points only.
  pub fn discrete() -> Self {
    Self { bridge: false, ..Self::default() }
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
  pub survived: bool,
  /// `X_t` when the path survived.
  pub endpoint: Option<Vec<f64>>,
  pub exit_step_index: Option<usize>,
  pub dt: f64,
}

/// One monitoring level of a multi-level estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
  pub dt: f64,
  pub value: f64,
  pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCI {
  pub value: f64,
  pub stderr: f64,
  pub n: u64,
  pub ci95: (f64, f64),
  pub seed: RngStream,
  pub dt_used: f64,
  pub extrapolated: bool,
  /// Raw estimates per monitoring step, finest first.
  pub levels: Vec<LevelEstimate>,
  /// Set when the extrapolation shift exceeds three standard errors.
  pub warning: Option<String>,
}

impl EstimateCI {
  fn from_moments(m: &Moments, seed: RngStream, dt_used: f64, extrapolated: bool) -> Self {
    let value = m.mean();
    let stderr = m.stderr();
    Self {
      value,
      stderr,
      n: m.n,
      ci95: (value - 1.96 * stderr, value + 1.96 * stderr),
      seed,
      dt_used,
      extrapolated,
      levels: Vec::new(),
      warning: None,
    }
  }

  /// Same estimate divided by a positive constant.
  pub fn scaled(&self, c: f64) -> Self {
    let mut e = self.clone();
    e.value /= c;
    e.stderr /= c;
    e.ci95 = (e.value - 1.96 * e.stderr, e.value + 1.96 * e.stderr);
    for l in &mut e.levels {
      l.value /= c;
      l.stderr /= c;
    }
    e
  }

  pub fn covers(&self, v: f64) -> bool {
    self.ci95.0 <= v && v <= self.ci95.1
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
  pub n_paths: u64,
  /// Monitoring steps in time units; consecutive values must differ by a factor 2.
  pub dt_schedule: Vec<f64>,
  pub stream: RngStream,
  pub monitor: MonitorConfig,
  /// Paths per random stream; the partition fixes the result.
  pub chunk_size: u64,
  /// Bias exponent used in the Richardson step; defaults to `min(1, 1/alpha)`.
  pub richardson_rate: Option<f64>,
}

impl McConfig {
  pub fn new(n_paths: u64, dt_schedule: Vec<f64>, stream: RngStream) -> Self {
    Self {
      n_paths,
      dt_schedule,
      stream,
      monitor: MonitorConfig::default(),
      chunk_size: 4096,
      richardson_rate: None,
    }
  }
}

fn to_pt(x: &[f64]) -> Pt {
  let mut p = [0.0; 3];
  p[..x.len()].copy_from_slice(x);
  p
}

fn check_start(cone: &ConeSpec, x: &[f64]) -> Result<()> {
  if x.len() != cone.dim() {
    return Err(invalid("x", "start point dimension does not match the cone"));
  }
  if !cone.contains(x) {
    return Err(Error::StartOutsideCone);
  }
  Ok(())
}

/// Simulates one path from `x` over `[0, t]` with monitoring step `dt`.
/// `t / dt` is rounded up to a whole number of steps.
pub fn simulate_killed_path<R: Rng + ?Sized>(
  cone: &ConeSpec,
  x: &[f64],
  t: f64,
  dt: f64,
  monitor: &MonitorConfig,
  rng: &mut R,
) -> Result<PathResult> {
  check_start(cone, x)?;
  if !(t > 0.0 && dt > 0.0 && dt <= t) {
    return Err(invalid("dt", "need 0 < dt <= t"));
  }
  let n = (t / dt - 1e-9).ceil().max(1.0) as usize;
  let a = cone.alpha();
  let s = t.powf(-1.0 / a);
  let start: Vec<f64> = x.iter().map(|v| v * s).collect();
  let eng = Engine::new(cone, 1.0 / n as f64, n, 1, monitor)?;
  let out = eng.run(&to_pt(&start), &mut Scratch::default(), rng);
  let back = t.powf(1.0 / a);
  let survived = out.exit[0].is_none();
  Ok(PathResult {
    survived,
    endpoint: survived.then(|| out.endpoint[..cone.dim()].iter().map(|v| v * back).collect()),
    exit_step_index: out.exit[0],
    dt: t / n as f64,
  })
}

/// Validated dyadic schedule: (number of levels, fine steps to the horizon).
fn schedule(t: f64, dts: &[f64]) -> Result<(usize, usize)> {
  if dts.is_empty() {
    return Err(invalid("dt_schedule", "at least one step is required"));
  }
  let mut v = dts.to_vec();
  v.sort_by(|a, b| b.total_cmp(a));
  for w in v.windows(2) {
    if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
      return Err(invalid("dt_schedule", "consecutive steps must differ by a factor 2"));
    }
  }
  if !(v[0] > 0.0 && v[0] <= t) {
    return Err(invalid("dt_schedule", "steps must lie in (0, t]"));
  }
  let levels = v.len();
  if levels > 8 {
    return Err(invalid("dt_schedule", "at most eight levels"));
  }
  let coarse = (t / v[0] - 1e-9).ceil().max(1.0) as usize;
  Ok((levels, coarse << (levels - 1)))
}

fn default_rate(alpha: f64) -> f64 {
  (1.0 / alpha).min(1.0)
}

struct Sums {
  levels: Vec<Moments>,
  rich: Moments,
  diff: Moments,
}

/// Runs `n_paths` paths from `x` to time `t` and averages `payoff(X_t)` on
/// survival, per monitoring level and extrapolated.
fn run_estimate<P>(cone: &ConeSpec, x: &[f64], t: f64, cfg: &McConfig, payoff: P) -> Result<EstimateCI>
where
  P: Fn(&[f64]) -> f64 + Sync,
{
  check_start(cone, x)?;
  if cfg.n_paths < 2 || cfg.chunk_size == 0 {
    return Err(invalid("n_paths", "need at least two paths and a positive chunk size"));
  }
  let (levels, n_fine) = schedule(t, &cfg.dt_schedule)?;
  let a = cone.alpha();
  let d = cone.dim();
  let s = t.powf(-1.0 / a);
  let back = t.powf(1.0 / a);
  let start = to_pt(&x.iter().map(|v| v * s).collect::<Vec<_>>());
  let dt_fine = 1.0 / n_fine as f64;
  let eng = Engine::new(cone, dt_fine, n_fine, levels, &cfg.monitor)?;
  let rate = cfg.richardson_rate.unwrap_or_else(|| default_rate(a));
  let w = 2f64.powf(rate);
  let n_chunks = cfg.n_paths.div_ceil(cfg.chunk_size);
  let parts: Vec<Sums> = (0..n_chunks)
    .into_par_iter()
    .map(|k| {
      let mut rng = cfg.stream.child(k).rng();
      let mut scratch = Scratch::default();
      let count = cfg.chunk_size.min(cfg.n_paths - k * cfg.chunk_size);
      let mut sums =
        Sums { levels: vec![Moments::default(); levels], rich: Moments::default(), diff: Moments::default() };
      let mut xt = [0.0; 3];
      for _ in 0..count {
        let out = eng.run(&start, &mut scratch, &mut rng);
        let v = if out.exit.iter().any(|e| e.is_none()) {
          for k in 0..d {
            xt[k] = out.endpoint[k] * back;
          }
          payoff(&xt[..d])
        } else {
          0.0
        };
        let z: Vec<f64> = out.exit.iter().map(|e| if e.is_none() { v } else { 0.0 }).collect();
        for (m, zi) in sums.levels.iter_mut().zip(&z) {
          m.push(*zi);
        }
        if levels > 1 {
          sums.rich.push((w * z[0] - z[1]) / (w - 1.0));
          sums.diff.push(z[0] - z[1]);
        }
      }
      sums
    })
    .collect();
  let mut total =
    Sums { levels: vec![Moments::default(); levels], rich: Moments::default(), diff: Moments::default() };
  for p in &parts {
    for (a, b) in total.levels.iter_mut().zip(&p.levels) {
      a.merge(b);
    }
    total.rich.merge(&p.rich);
    total.diff.merge(&p.diff);
  }
  let dt_used = t * dt_fine;
  let mut est = if levels > 1 {
    EstimateCI::from_moments(&total.rich, cfg.stream, dt_used, true)
  } else {
    EstimateCI::from_moments(&total.levels[0], cfg.stream, dt_used, false)
  };
  est.levels = total
    .levels
    .iter()
    .enumerate()
    .map(|(l, m)| LevelEstimate { dt: dt_used * (1u64 << l) as f64, value: m.mean(), stderr: m.stderr() })
    .collect();
  if levels > 1 {
    let shift = total.diff.mean();
    let se = total.diff.stderr();
    if shift.abs() > 3.0 * se {
      est.warning = Some(format!(
        "extrapolation shift {:.3e} exceeds three standard errors ({:.3e})",
        shift / (w - 1.0),
        se / (w - 1.0)
      ));
    }
  }
  Ok(est)
}

/// `P_x(tau > t)` with Richardson extrapolation over the dt schedule.
pub fn survival(cone: &ConeSpec, x: &[f64], t: f64, cfg: &McConfig) -> Result<EstimateCI> {
  run_estimate(cone, x, t, cfg, |_| 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceEstimate {
  /// `E_x[tau > t; M(X_t)]`.
  pub estimate: EstimateCI,
  /// The same divided by `M(x)`.
  pub ratio: EstimateCI,
  pub martin_start: f64,
}

/// Estimates `E_x[tau > t; M(X_t)]`; only exact kernels are accepted.
pub fn martin_invariance(
  kernel: &MartinKernel,
  x: &[f64],
  t: f64,
  cfg: &McConfig,
) -> Result<InvarianceEstimate> {
  if !kernel.is_exact() {
    return Err(Error::Unsupported("invariance needs an exact Martin kernel, not a surrogate".into()));
  }
  let cone = kernel.cone();
  let estimate = run_estimate(cone, x, t, cfg, |y| kernel.value(y))?;
  let m0 = kernel.value(x);
  Ok(InvarianceEstimate { ratio: estimate.scaled(m0), estimate, martin_start: m0 })
}

/// Start distributions whose `alpha`-moment is finite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialLaw {
  Point(Vec<f64>),
  /// Uniform on the box `[lo, hi]`; must sit inside the cone.
  UniformBox { lo: Vec<f64>, hi: Vec<f64> },
  /// `point * min(U^{-1/index}, cap)` along the ray through `point`; `index > alpha`.
  PowerTail { point: Vec<f64>, index: f64, cap: f64 },
}

impl InitialLaw {
  pub fn validate(&self, cone: &ConeSpec) -> Result<()> {
    let d = cone.dim();
    match self {
      InitialLaw::Point(x) => check_start(cone, x),
      InitialLaw::UniformBox { lo, hi } => {
        if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
          return Err(invalid("initial_law", "box needs lo < hi in every coordinate"));
        }
        let c: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let half_diag = 0.5 * lo.iter().zip(hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
        if !(cone.contains(&c) && cone.boundary_distance(&c) > half_diag) {
          return Err(invalid("initial_law", "box must lie inside the cone"));
        }
        Ok(())
      }
      InitialLaw::PowerTail { point, index, cap } => {
        check_start(cone, point)?;
        if !(*index > cone.alpha()) {
          return Err(invalid("initial_law", "tail index must exceed alpha"));
        }
        if !(*cap >= 1.0) {
          return Err(invalid("initial_law", "cap must be at least 1"));
        }
        Ok(())
      }
    }
  }

  fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
    match self {
      InitialLaw::Point(x) => x.clone(),
      InitialLaw::UniformBox { lo, hi } => {
        lo.iter().zip(hi).map(|(a, b)| a + (b - a) * open01(rng)).collect()
      }
      InitialLaw::PowerTail { point, index, cap } => {
        let r = open01(rng).powf(-1.0 / index).min(*cap);
        point.iter().map(|v| v * r).collect()
      }
    }
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YaglomConfig {
  pub stream: RngStream,
  pub monitor: MonitorConfig,
  pub chunk_size: u64,
  /// Chunks simulated between survivor-count checks.
  pub chunks_per_round: u64,
  /// Abort when the survival rate falls below this.
  pub cost_guard: f64,
}

impl YaglomConfig {
  pub fn new(stream: RngStream) -> Self {
    Self {
      stream,
      monitor: MonitorConfig::default(),
      chunk_size: 1024,
      chunks_per_round: 8,
      cost_guard: 1e-4,
    }
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YaglomSample {
  /// Rescaled endpoints `t^{-1/alpha} X_t` of surviving paths.
  pub points: Vec<Vec<f64>>,
  pub paths: u64,
  pub survival_rate: f64,
}

/// Survivors' rescaled endpoints, simulated until at least `n_target` survive.
pub fn yaglom_samples(
  cone: &ConeSpec,
  start: &InitialLaw,
  t: f64,
  n_target: usize,
  dt: f64,
  cfg: &YaglomConfig,
) -> Result<YaglomSample> {
  start.validate(cone)?;
  if !(t > 0.0 && dt > 0.0 && dt <= t) {
    return Err(invalid("dt", "need 0 < dt <= t"));
  }
  let a = cone.alpha();
  let d = cone.dim();
  let n = (t / dt - 1e-9).ceil().max(1.0) as usize;
  let eng = Engine::new(cone, 1.0 / n as f64, n, 1, &cfg.monitor)?;
  let s = t.powf(-1.0 / a);
  let mut points: Vec<Vec<f64>> = Vec::new();
  let mut paths = 0u64;
  let mut next_chunk = 0u64;
  while points.len() < n_target {
    let round: Vec<Vec<Vec<f64>>> = (next_chunk..next_chunk + cfg.chunks_per_round)
      .into_par_iter()
      .map(|k| {
        let mut rng = cfg.stream.child(k).rng();
        let mut scratch = Scratch::default();
        let mut out = Vec::new();
        for _ in 0..cfg.chunk_size {
          let x0: Vec<f64> = start.sample(&mut rng).iter().map(|v| v * s).collect();
          let o = eng.run(&to_pt(&x0), &mut scratch, &mut rng);
          if o.exit[0].is_none() {
            out.push(o.endpoint[..d].to_vec());
          }
        }
        out
      })
      .collect();
    next_chunk += cfg.chunks_per_round;
    paths += cfg.chunks_per_round * cfg.chunk_size;
    for r in round {
      points.extend(r);
    }
    let rate = points.len() as f64 / paths as f64;
    if paths >= 10_000 && rate < cfg.cost_guard {
      return Err(Error::CostGuard { rate, guard: cfg.cost_guard, paths });
    }
  }
  let survival_rate = points.len() as f64 / paths as f64;
  Ok(YaglomSample { points, paths, survival_rate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
  pub stream: RngStream,
  pub monitor: MonitorConfig,
  pub chunk_size: u64,
  /// Monitoring step in time units.
  pub dt: f64,
  /// Chunks are dealt round-robin into this many batches for standard errors.
  pub batches: usize,
}

impl CurveConfig {
  pub fn new(stream: RngStream, dt: f64) -> Self {
    Self { stream, monitor: MonitorConfig::default(), chunk_size: 1024, dt, batches: 16 }
  }
}

/// Survival at every time of `t_grid` from one set of paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
  pub times: Vec<f64>,
  pub value: Vec<f64>,
  pub stderr: Vec<f64>,
  /// Survivor counts per batch and time.
  pub batch_counts: Vec<Vec<u64>>,
  pub batch_paths: Vec<u64>,
}

/// Coupled survival curve: every path is followed to the last time of the
/// grid, so the curve is nonincreasing by construction.
pub fn survival_curve(
  cone: &ConeSpec,
  x: &[f64],
  t_grid: &[f64],
  n_paths: u64,
  cfg: &CurveConfig,
) -> Result<SurvivalCurve> {
  check_start(cone, x)?;
  if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[0] < w[1])) || !(t_grid[0] > 0.0) {
    return Err(invalid("t_grid", "times must be positive and increasing"));
  }
  if !(cfg.dt > 0.0 && cfg.dt <= t_grid[0]) {
    return Err(invalid("dt", "need 0 < dt <= first time"));
  }
  let idx: Vec<usize> = t_grid.iter().map(|t| (t / cfg.dt).round() as usize).collect();
  let n = *idx.last().expect("non-empty");
  let eng = Engine::new(cone, cfg.dt, n, 1, &cfg.monitor)?;
  let start = to_pt(x);
  let n_chunks = n_paths.div_ceil(cfg.chunk_size);
  let parts: Vec<(Vec<u64>, u64)> = (0..n_chunks)
    .into_par_iter()
    .map(|k| {
      let mut rng = cfg.stream.child(k).rng();
      let mut scratch = Scratch::default();
      let count = cfg.chunk_size.min(n_paths - k * cfg.chunk_size);
      let mut alive = vec![0u64; idx.len()];
      for _ in 0..count {
        let o = eng.run(&start, &mut scratch, &mut rng);
        for (c, &j) in alive.iter_mut().zip(&idx) {
          if o.exit[0].is_none_or(|e| e > j) {
            *c += 1;
          }
        }
      }
      (alive, count)
    })
    .collect();
  let nb = cfg.batches.max(1);
  let mut batch_counts = vec![vec![0u64; idx.len()]; nb];
  let mut batch_paths = vec![0u64; nb];
  for (k, (c, m)) in parts.iter().enumerate() {
    let b = k % nb;
    for (acc, v) in batch_counts[b].iter_mut().zip(c) {
      *acc += v;
    }
    batch_paths[b] += m;
  }
  let total: u64 = batch_paths.iter().sum();
  let mut value = Vec::with_capacity(idx.len());
  let mut stderr = Vec::with_capacity(idx.len());
  for j in 0..idx.len() {
    let k: u64 = batch_counts.iter().map(|c| c[j]).sum();
    let p = k as f64 / total as f64;
    value.push(p);
    stderr.push((p * (1.0 - p) / total as f64).sqrt());
  }
  Ok(SurvivalCurve { times: t_grid.to_vec(), value, stderr, batch_counts, batch_paths })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
  pub beta_hat: f64,
  /// Batch-means standard error.
  pub stderr: f64,
  pub r_squared: f64,
  /// Linear fit of log survival on log time was poor (`R^2 < 0.99`).
  pub poor_fit: bool,
  pub curve: SurvivalCurve,
}

fn fit_beta(alpha: f64, times: &[f64], p: &[f64]) -> Option<(f64, f64)> {
  if p.iter().any(|v| !(*v > 0.0)) {
    return None;
  }
  let lx: Vec<f64> = times.iter().map(|t| t.ln()).collect();
  let ly: Vec<f64> = p.iter().map(|v| v.ln()).collect();
  let f = linear_fit(&lx, &ly);
  Some((-alpha * f.slope, f.r_squared))
}

/// Homogeneity exponent from the decay of survival: `beta = -alpha * slope`
/// of `log P_x(tau > t)` against `log t`.
pub fn estimate_beta(
  cone: &ConeSpec,
  t_grid: &[f64],
  x: &[f64],
  n_paths: u64,
  cfg: &CurveConfig,
) -> Result<BetaEstimate> {
  if t_grid.len() < 3 || t_grid[t_grid.len() - 1] / t_grid[0] < 8.0 - 1e-12 {
    return Err(invalid("t_grid", "grid must span at least three doublings"));
  }
  let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
  if norm > t_grid[0].powf(1.0 / cone.alpha()) * (1.0 + 1e-12) {
    return Err(invalid("x", "start must satisfy |x| <= t_min^{1/alpha}"));
  }
  let curve = survival_curve(cone, x, t_grid, n_paths, cfg)?;
  let a = cone.alpha();
  let (beta_hat, r2) = fit_beta(a, t_grid, &curve.value)
    .ok_or_else(|| Error::Unsupported("no survivors at the largest time".into()))?;
  let per_batch: Vec<f64> = curve
    .batch_counts
    .iter()
    .zip(&curve.batch_paths)
    .filter_map(|(c, &m)| {
      let p: Vec<f64> = c.iter().map(|&k| k as f64 / m as f64).collect();
      fit_beta(a, t_grid, &p).map(|v| v.0)
    })
    .collect();
  let nb = per_batch.len() as f64;
  let stderr = if per_batch.len() >= 2 {
    let m = per_batch.iter().sum::<f64>() / nb;
    (per_batch.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (nb - 1.0) / nb).sqrt()
  } else {
    f64::INFINITY
  };
  Ok(BetaEstimate { beta_hat, stderr, r_squared: r2, poor_fit: r2 < 0.99, curve })
}
