//! Check batteries behind each subcommand.

use std::cell::OnceCell;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;
use stable_cones::cone_geometry::{Beta, ConeKind, ConeSpec};
use stable_cones::fractional_grid_solver::{
  build_operator, c1_and_mu, decay_check, entrance_evolution_gap, grid_cdf, heat_kernel, hypercontractivity_check, l1_m2,
  ou_stationary, psi, psi_on_grid, Grid1D, GridOperator, StartDensity, Stationary, StationaryOptions,
};
use stable_cones::killed_mc::{
  estimate_beta, martin_invariance, survival, CurveConfig, InitialLaw, McConfig, MonitorConfig,
  YaglomConfig,
};
use stable_cones::stable_density::density_1d;
use stable_cones::stable_sampler::{sample_isotropic_into, RngStream, Scaling, StableLaw};
use stable_cones::stats::{ks_one_sample, ks_two_sample};

use crate::config::{Config, ConfigError};
use crate::report::Report;

#[derive(Debug)]
pub enum Failure {
  Config(ConfigError),
  Io(std::io::Error),
  Numeric(String),
}

impl From<ConfigError> for Failure {
  fn from(e: ConfigError) -> Self {
    Failure::Config(e)
  }
}

impl From<std::io::Error> for Failure {
  fn from(e: std::io::Error) -> Self {
    Failure::Io(e)
  }
}

impl From<stable_cones::Error> for Failure {
  fn from(e: stable_cones::Error) -> Self {
    Failure::Numeric(e.to_string())
  }
}

pub type Outcome = Result<(), Failure>;

// Stream ids per battery keep results independent of which batteries run.
const S_SAMPLER: u64 = 1;
const S_SURVIVAL: u64 = 2;
const S_INVARIANCE: u64 = 3;
const S_YAGLOM: u64 = 4;
const S_BETA: u64 = 5;

pub struct Ctx<'a> {
  pub cfg: &'a Config,
  pub seed: u64,
  pub alpha: f64,
  /// Position of `alpha` in the configured list.
  pub index: u64,
  pub cone: ConeSpec,
  /// Main-window operator with its stationary density, built on first use.
  pub main: OnceCell<(GridOperator, Stationary)>,
}

impl Ctx<'_> {
  fn stream(&self, battery: u64) -> RngStream {
    RngStream::new(self.seed, battery * 1000 + self.index)
  }

  fn tag(&self) -> String {
    format!("alpha={}", self.alpha)
  }

  fn file(&self, stem: &str, ext: &str) -> String {
    format!("{stem}_{}_a{}.{ext}", self.cone.kind().name(), self.alpha)
  }

  fn monitor(&self) -> MonitorConfig {
    MonitorConfig {
      bridge: self.cfg.mc.bridge,
      refine_factor: self.cfg.mc.refine_factor,
      ..MonitorConfig::default()
    }
  }

  fn mc(&self, paths: u64, t: f64, battery: u64) -> McConfig {
    let mut c = McConfig::new(paths, self.cfg.mc.dt.iter().map(|d| d * t).collect(), self.stream(battery));
    c.monitor = self.monitor();
    c.chunk_size = self.cfg.mc.chunk_size;
    c
  }

  fn one_dimensional(&self) -> bool {
    matches!(self.cone.kind(), ConeKind::HalfLine | ConeKind::PuncturedLine)
  }

  fn require_grid(&self) -> Result<(), ConfigError> {
    if self.one_dimensional() {
      Ok(())
    } else {
      Err(ConfigError::new("cone.kind", "the grid solver supports half-line and punctured-line only"))
    }
  }

  fn grid(&self, r: f64, h: f64) -> Result<GridOperator, Failure> {
    let g = Grid1D::new(&self.cone, r, h)?;
    Ok(build_operator(self.alpha, &g)?)
  }

  fn main_solution(&self) -> Result<(&GridOperator, &Stationary), Failure> {
    if self.main.get().is_none() {
      let i = self.index as usize;
      let op = self.grid(self.cfg.grid.radius.at(i), self.cfg.grid.spacing.at(i))?;
      let st = stationary_on(&op, self.cfg.tolerances.stationary, StartDensity::Uniform)?;
      let _ = self.main.set((op, st));
    }
    let (op, st) = self.main.get().expect("set above");
    Ok((op, st))
  }
}

fn scale_to(x: &[f64], s: f64) -> Vec<f64> {
  x.iter().map(|v| v * s).collect()
}

/// Points along the ray through the unit point (positive side for the punctured line).
fn ray_points(cone: &ConeSpec, radii: &[f64]) -> Vec<Vec<f64>> {
  let u = cone.unit_point();
  radii.iter().map(|r| scale_to(&u, *r)).collect()
}

pub fn sampler(ctx: &Ctx, rep: &mut Report) -> Outcome {
  let tol = ctx.cfg.tolerances.sampler_cf;
  let n = 1_000_000usize;
  let radii: Vec<f64> = (0..9).map(|k| 0.5 * k as f64).collect();
  for d in [1usize, 2] {
    let law = StableLaw::new(ctx.alpha, d)?;
    let mut rng = ctx.stream(S_SAMPLER).child(d as u64).rng();
    let freqs: Vec<Vec<f64>> = radii
      .iter()
      .enumerate()
      .map(|(k, r)| {
        let th = k as f64 * PI / 9.0;
        if d == 1 {
          vec![*r]
        } else {
          vec![r * th.cos(), r * th.sin()]
        }
      })
      .collect();
    let mut sums = vec![0.0; freqs.len()];
    let mut x = vec![0.0; d];
    for _ in 0..n {
      sample_isotropic_into(&law, 1.0, Scaling::Coupled, &mut rng, &mut x)?;
      for (s, xi) in sums.iter_mut().zip(&freqs) {
        *s += xi.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().cos();
      }
    }
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (s, xi) in sums.iter().zip(&freqs) {
      let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
      let want = (-r.powf(ctx.alpha)).exp();
      let got = s / n as f64;
      worst = worst.max((got - want).abs());
      rows.push(vec![r, got, want]);
    }
    rep.csv(&format!("sampler_cf_d{d}_a{}.csv", ctx.alpha), &["xi", "empirical", "exact"], &rows)?;
    rep.check(format!("sampler_cf/{}/d={d}", ctx.tag()), worst, tol, worst < tol);
  }
  let law = StableLaw::new(ctx.alpha, 2)?;
  let mut exact = true;
  for k in 0..1000u64 {
    let t = 0.1 + k as f64 * 0.37;
    let mut a = [0.0; 2];
    let mut b = [0.0; 2];
    sample_isotropic_into(&law, 1.0, Scaling::Coupled, &mut ctx.stream(S_SAMPLER).child(100 + k).rng(), &mut a)?;
    sample_isotropic_into(&law, t, Scaling::Coupled, &mut ctx.stream(S_SAMPLER).child(100 + k).rng(), &mut b)?;
    let c = law.scale(t);
    exact &= a.iter().zip(&b).all(|(u, v)| (c * u).to_bits() == v.to_bits());
  }
  rep.check(format!("sampler_scaling_exact/{}", ctx.tag()), if exact { 0.0 } else { 1.0 }, 0.0, exact);
  Ok(())
}

pub fn survival_suite(ctx: &Ctx, rep: &mut Report) -> Outcome {
  let cfg = ctx.cfg;
  let x = cfg.start_point(&ctx.cone)?;
  let t = cfg.mc.t;
  let a = ctx.alpha;
  let est = survival(&ctx.cone, &x, t, &ctx.mc(cfg.mc.paths, t, S_SURVIVAL))?;
  if let Some(w) = &est.warning {
    rep.note(format!("survival: {w}"));
  }
  let mut rows = vec![];
  let mut row = x.clone();
  row.extend([t, est.value, est.stderr, est.levels[0].value, est.levels.last().map(|l| l.value).unwrap_or(f64::NAN)]);
  rows.push(row);

  // Pathwise scaling under a shared seed.
  let paths = (cfg.mc.paths / 10).max(1000);
  let t_big = 4.0 * t;
  let s1 = survival(&ctx.cone, &x, t_big, &ctx.mc(paths, t_big, S_SURVIVAL + 100))?;
  let xs = scale_to(&x, t_big.powf(-1.0 / a));
  let s2 = survival(&ctx.cone, &xs, 1.0, &ctx.mc(paths, 1.0, S_SURVIVAL + 100))?;
  let diff = (s1.value - s2.value).abs();
  rep.check(format!("survival_scaling_exact/{}", ctx.tag()), diff, 0.0, s1.value.to_bits() == s2.value.to_bits());

  // Deep inside: distance 100 t^{1/alpha} from the boundary.
  let d0 = ctx.cone.boundary_distance(&x);
  let deep = scale_to(&x, 100.0 * t.powf(1.0 / a) / d0);
  let sd = survival(&ctx.cone, &deep, t, &ctx.mc(10_000, t, S_SURVIVAL + 200))?;
  rep.check(format!("survival_deep_inside/{}", ctx.tag()), sd.value, 0.01, sd.value >= 0.99);

  let header_x: Vec<String> = (0..x.len()).map(|i| format!("x{i}")).collect();
  if ctx.one_dimensional() {
    let (op, _) = ctx.main_solution()?;
    let p = op.survival(t);
    let radii: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|r| r * t.powf(1.0 / a)).collect();
    let mut worst: f64 = 0.0;
    for (k, pt) in ray_points(&ctx.cone, &radii).into_iter().enumerate() {
      let e = survival(&ctx.cone, &pt, t, &ctx.mc((cfg.mc.paths / 4).max(1000), t, S_SURVIVAL + 300 + k as u64))?;
      let gp = p[op.grid().nearest(pt[0])];
      let gap = ((e.value - gp).abs() - 1.96 * e.stderr).max(0.0) / gp;
      worst = worst.max(gap);
      let mut row = pt.clone();
      row.extend([t, e.value, e.stderr, e.levels[0].value, e.levels.last().map(|l| l.value).unwrap_or(f64::NAN), gp]);
      rows.push(row);
    }
    let tol = cfg.tolerances.cross_validation;
    rep.check(format!("survival_vs_grid/{}", ctx.tag()), worst, tol, worst <= tol);
    rows[0].push(f64::NAN);
  }
  let mut header: Vec<&str> = header_x.iter().map(|s| s.as_str()).collect();
  header.extend(["t", "value", "stderr", "raw_fine", "raw_coarse"]);
  if ctx.one_dimensional() {
    header.push("grid");
  }
  rep.csv(&ctx.file("survival", "csv"), &header, &rows)?;
  Ok(())
}

pub fn invariance(ctx: &Ctx, rep: &mut Report) -> Outcome {
  let cfg = ctx.cfg;
  let kernel = ctx
    .cone
    .martin_kernel()
    .ok()
    .filter(|k| k.is_exact())
    .ok_or_else(|| ConfigError::new("cone.kind", "invariance needs a cone with an exact Martin kernel"))?;
  let x = cfg.start_point(&ctx.cone)?;
  let tol = cfg.tolerances.invariance;
  let mut rows = Vec::new();
  for (name, t, paths, tol) in [
    ("invariance_ratio", cfg.mc.t, cfg.mc.paths, tol),
    ("invariance_small_t", 1e-6, (cfg.mc.paths / 10).max(1000), cfg.tolerances.invariance_small_t),
  ] {
    let inv = martin_invariance(&kernel, &x, t, &ctx.mc(paths, t, S_INVARIANCE))?;
    let r = &inv.ratio;
    if let Some(w) = &r.warning {
      rep.note(format!("{name}: {w}"));
    }
    let dev = (r.value - 1.0).abs();
    rep.check(format!("{name}/{}", ctx.tag()), r.value, tol, dev <= tol && r.covers(1.0));
    rows.push(vec![t, r.value, r.stderr, r.ci95.0, r.ci95.1, r.levels[0].value, r.levels.last().map(|l| l.value).unwrap_or(f64::NAN)]);
  }
  rep.csv(&ctx.file("invariance", "csv"), &["t", "ratio", "stderr", "ci_lo", "ci_hi", "raw_fine", "raw_coarse"], &rows)?;
  Ok(())
}

fn stationary_on(op: &GridOperator, tol: f64, start: StartDensity) -> Result<Stationary, Failure> {
  Ok(ou_stationary(op, &StationaryOptions { tol, start, ..StationaryOptions::default() })?)
}

pub fn yaglom(ctx: &Ctx, rep: &mut Report) -> Outcome {
  let cfg = ctx.cfg;
  let x = cfg.start_point(&ctx.cone)?;
  let d0 = ctx.cone.boundary_distance(&x);
  let w = 0.6 * d0 / (x.len() as f64).sqrt();
  let box_law = if x.len() == 1 {
    InitialLaw::UniformBox { lo: vec![0.5 * x[0]], hi: vec![2.0 * x[0]] }
  } else {
    InitialLaw::UniformBox { lo: x.iter().map(|v| v - w).collect(), hi: x.iter().map(|v| v + w).collect() }
  };
  let t = cfg.mc.yaglom_t;
  let mut ycfg = YaglomConfig::new(ctx.stream(S_YAGLOM));
  ycfg.monitor = ctx.monitor();
  ycfg.cost_guard = cfg.mc.cost_guard;
  let a = stable_cones::killed_mc::yaglom_samples(
    &ctx.cone,
    &InitialLaw::Point(x.clone()),
    t,
    cfg.mc.yaglom_survivors,
    cfg.mc.yaglom_dt,
    &ycfg,
  )?;
  ycfg.stream = ctx.stream(S_YAGLOM + 100);
  let b = stable_cones::killed_mc::yaglom_samples(&ctx.cone, &box_law, t, cfg.mc.yaglom_survivors, cfg.mc.yaglom_dt, &ycfg)?;
  let header: Vec<String> = (0..x.len()).map(|i| format!("x{i}")).collect();
  let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
  rep.csv(&ctx.file("yaglom_point", "csv"), &header, &a.points)?;
  rep.csv(&ctx.file("yaglom_box", "csv"), &header, &b.points)?;
  let outside = a.points.iter().chain(&b.points).filter(|p| !ctx.cone.contains(p)).count();
  rep.check(format!("yaglom_in_cone/{}", ctx.tag()), outside as f64, 0.0, outside == 0);
  let tol = cfg.tolerances.ks;
  // Compare along the coordinate that carries the cone's axis.
  let axis = x.len() - 1;
  let pa: Vec<f64> = a.points.iter().map(|p| p[axis]).collect();
  let pb: Vec<f64> = b.points.iter().map(|p| p[axis]).collect();
  let ks2 = ks_two_sample(&pa, &pb);
  rep.check(format!("yaglom_two_laws_ks/{}", ctx.tag()), ks2, tol, ks2 < tol);
  if ctx.one_dimensional() {
    let (op, st) = ctx.main_solution()?;
    let (_, mu) = c1_and_mu(&st.phi, op);
    let cdf = grid_cdf(&mu, op.grid());
    let ks1 = ks_one_sample(&pa, &cdf);
    rep.check(format!("yaglom_limit_ks/{}", ctx.tag()), ks1, tol, ks1 < tol);
  }
  rep.note(format!("yaglom: survival rates {:.4} (point), {:.4} (box)", a.survival_rate, b.survival_rate));
  Ok(())
}

pub fn beta(ctx: &Ctx, rep: &mut Report) -> Outcome {
  let cfg = ctx.cfg;
  let m = &cfg.mc;
  let x = cfg.start_point(&ctx.cone)?;
  let grid: Vec<f64> = (0..=m.beta_doublings).map(|k| m.beta_t_min * 2f64.powi(k as i32)).collect();
  let mut ccfg = CurveConfig::new(ctx.stream(S_BETA), m.beta_dt);
  ccfg.monitor = ctx.monitor();
  let b = estimate_beta(&ctx.cone, &grid, &x, m.beta_paths, &ccfg)?;
  let rows: Vec<Vec<f64>> =
    (0..grid.len()).map(|i| vec![grid[i], b.curve.value[i], b.curve.stderr[i]]).collect();
  rep.csv(&ctx.file("beta_curve", "csv"), &["t", "survival", "stderr"], &rows)?;
  rep.check(format!("beta_fit/{}", ctx.tag()), b.r_squared, 0.01, !b.poor_fit);
  let a = ctx.alpha;
  let name = format!("beta_value/{}", ctx.tag());
  match (ctx.cone.kind(), ctx.cone.beta()) {
    (kind, Beta::Known(want)) => {
      let tol = if kind.thin_complement() { cfg.tolerances.beta_thin } else { cfg.tolerances.beta };
      rep.check(name, b.beta_hat, tol, (b.beta_hat - want).abs() <= tol);
    }
    (ConeKind::RightCircular { aperture }, Beta::Unknown) => {
      let half = a / 2.0;
      if aperture > FRAC_PI_2 {
        let bound = half - 2.0 * b.stderr;
        rep.check(name, b.beta_hat, bound, b.beta_hat < bound);
      } else {
        let bound = half + 2.0 * b.stderr;
        rep.check(name, b.beta_hat, bound, b.beta_hat > bound);
      }
    }
    _ => rep.note(format!("beta: estimate {:.4} +- {:.4}, no reference value", b.beta_hat, b.stderr)),
  }
  rep.note(format!("beta: estimate {:.4} +- {:.4}, R^2 {:.5}", b.beta_hat, b.stderr, b.r_squared));
  Ok(())
}

#[derive(Serialize)]
struct Manifest {
  cone: String,
  alpha: f64,
  beta: f64,
  radius: f64,
  spacing: f64,
  nodes: usize,
  tolerance: f64,
  residual: f64,
  error_bound: f64,
  contraction: f64,
  iterations: usize,
  two_start_distance: f64,
  normalization: f64,
}

pub fn stationary(ctx: &Ctx, rep: &mut Report) -> Outcome {
  ctx.require_grid()?;
  let cfg = ctx.cfg;
  let tol = cfg.tolerances.stationary;
  let op = &ctx.grid(cfg.grid.stationary_radius, cfg.grid.stationary_spacing)?;
  let g = op.grid();
  let m = op.martin_values();
  let s1 = stationary_on(op, tol, StartDensity::Uniform)?;
  let s2 = stationary_on(op, tol, StartDensity::Triangular)?;
  let dist = l1_m2(g, m, &s1.phi.values, &s2.phi.values);
  let norm = s1.phi.normalization;
  let tag = ctx.tag();
  rep.check(format!("stationary_residual/{tag}"), s1.residual.max(s2.residual), tol, s1.residual.max(s2.residual) < tol);
  rep.check(format!("stationary_uniqueness/{tag}"), dist, 2.0 * tol, dist < 2.0 * tol);
  rep.check(format!("stationary_normalization/{tag}"), (norm - 1.0).abs(), tol, (norm - 1.0).abs() <= tol);
  if ctx.cone.kind() == ConeKind::HalfLine {
    let p = 1.0 + 1.5 * ctx.alpha;
    let env: Vec<f64> = g
      .nodes()
      .iter()
      .zip(&s1.phi.values)
      .filter(|(x, _)| x.abs() <= g.radius() / 2.0)
      .map(|(x, v)| v * (1.0 + x.abs()).powf(p))
      .collect();
    let ratio = env.iter().cloned().fold(f64::MIN, f64::max) / env.iter().cloned().fold(f64::MAX, f64::min);
    let lim = cfg.tolerances.stationary_envelope;
    rep.check(format!("stationary_envelope/{tag}"), ratio, lim, ratio < lim);
  }
  let mut f = Vec::new();
  s1.phi.write_csv(&mut f)?;
  std::fs::write(rep_path(rep, &ctx.file("phi", "csv")), f)?;
  rep.json(
    &ctx.file("stationary_manifest", "json"),
    &Manifest {
      cone: ctx.cone.kind().name().into(),
      alpha: ctx.alpha,
      beta: op.beta(),
      radius: g.radius(),
      spacing: g.spacing(),
      nodes: g.len(),
      tolerance: tol,
      residual: s1.residual,
      error_bound: s1.error_bound,
      contraction: s1.contraction,
      iterations: s1.iterations,
      two_start_distance: dist,
      normalization: norm,
    },
  )?;
  Ok(())
}

/// Written profiles stop at this distance from the vertex.
const CSV_WINDOW: f64 = 1024.0;

fn window_rows(nodes: &[f64], values: &[f64]) -> Vec<Vec<f64>> {
  nodes.iter().zip(values).filter(|(x, _)| x.abs() <= CSV_WINDOW).map(|(x, v)| vec![*x, *v]).collect()
}

fn rep_path(rep: &Report, name: &str) -> std::path::PathBuf {
  rep.dir().join(name)
}

pub fn entrance(ctx: &Ctx, rep: &mut Report) -> Outcome {
  ctx.require_grid()?;
  let cfg = ctx.cfg;
  let tol = cfg.tolerances.entrance;
  let (op, st) = ctx.main_solution()?;
  let g = op.grid();
  let m = op.martin_values();
  let h = g.spacing();
  let a = ctx.alpha;
  let b = op.beta();
  let tag = ctx.tag();
  let phi = &st.phi;

  for t in [1.0, 4.0] {
    let ps = psi_on_grid(op, phi, t)?;
    let mass: f64 = ps.iter().zip(m).map(|(p, mm)| p * mm * h).sum();
    rep.check(format!("entrance_mass/{tag}/t={t}"), mass, tol, (mass - 1.0).abs() <= tol);
    rep.csv(&ctx.file(&format!("psi_t{t}"), "csv"), &["x", "value"], &window_rows(g.nodes(), &ps))?;
  }

  let half = psi_on_grid(op, phi, 0.5)?;
  let evolved = op.evolve(0.5, &half);
  let mut worst: f64 = 0.0;
  for x in [0.25, 0.5, 1.0, 2.0, 4.0] {
    let i = g.nearest(x);
    let want = psi(op, phi, 1.0, g.nodes()[i])?;
    worst = worst.max(((evolved[i] - want) / want).abs());
  }
  rep.check(format!("entrance_semigroup/{tag}"), worst, tol, worst <= tol);

  let mut scale_err: f64 = 0.0;
  for t in [0.5, 2.0, 4.0] {
    for &x in g.nodes().iter().filter(|x| x.abs() <= g.radius() / 8.0 && x.abs() >= 4.0 * h) {
      let lhs = psi(op, phi, t, x)?;
      let rhs = t.powf(-(1.0 + b) / a) * psi(op, phi, 1.0, t.powf(-1.0 / a) * x)?;
      if lhs != 0.0 {
        scale_err = scale_err.max(((lhs - rhs) / lhs).abs());
      }
    }
  }
  rep.check(format!("entrance_scaling_exact/{tag}"), scale_err, 1e-13, scale_err <= 1e-13);

  // Distance of rho_1(x, .) from phi over the nodes nearest the vertex, on the positive side.
  let near: Vec<usize> = (1..=3).map(|k| g.nearest(k as f64 * h)).collect();
  let mut dists = Vec::new();
  for &i in &near {
    let mut e = vec![0.0; g.len()];
    e[i] = 1.0 / h;
    let col = op.evolve(1.0, &e);
    let rho: Vec<f64> = col.iter().zip(m).map(|(c, mm)| if *mm > 0.0 { c / (m[i] * mm) } else { 0.0 }).collect();
    dists.push(l1_m2(g, m, &rho, &phi.values));
  }
  let monotone = dists[0] < dists[1] && dists[1] < dists[2];
  rep.check(format!("entrance_vertex_limit/{tag}"), dists[0], 0.0, monotone);
  let rows: Vec<Vec<f64>> = near.iter().zip(&dists).map(|(i, d)| vec![g.nodes()[*i], *d]).collect();
  rep.csv(&ctx.file("vertex_distance", "csv"), &["x", "l1_m2_distance"], &rows)?;

  let (c1, mu) = c1_and_mu(phi, op);
  let near = ctx.grid(cfg.grid.vertex_radius, cfg.grid.vertex_spacing)?;
  let p = near.survival(1.0);
  let mut dev: f64 = 0.0;
  let mut rows = Vec::new();
  for i in near.grid().nearest_to_vertex(5) {
    let ratio = p[i] / near.martin_values()[i];
    dev = dev.max((ratio - c1).abs() / c1);
    rows.push(vec![near.grid().nodes()[i], ratio, c1]);
  }
  rep.csv(&ctx.file("vertex_survival_ratio", "csv"), &["x", "survival_over_martin", "c1"], &rows)?;
  let lim = cfg.tolerances.vertex_limit;
  rep.check(format!("c1_vertex_limit/{tag}"), dev, lim, dev <= lim);
  let total: f64 = mu.values.iter().map(|v| v * h).sum();
  rep.check(format!("mu_normalization/{tag}"), (total - 1.0).abs(), 1e-8, (total - 1.0).abs() <= 1e-8);
  if ctx.cone.kind() == ConeKind::HalfLine {
    let shape: Vec<f64> = g
      .nodes()
      .iter()
      .zip(&mu.values)
      .filter(|(x, _)| **x <= g.radius() / 2.0)
      .map(|(x, v)| v / (x.powf(a / 2.0) * (1.0 + x).powf(-1.0 - 1.5 * a)))
      .collect();
    let ratio = shape.iter().cloned().fold(f64::MIN, f64::max) / shape.iter().cloned().fold(f64::MAX, f64::min);
    rep.check(format!("mu_shape/{tag}"), ratio, 100.0, ratio < 100.0);
  }
  rep.csv(&ctx.file("mu", "csv"), &["x", "density"], &window_rows(g.nodes(), &mu.values))?;

  let em = op.evolve(1.0, m);
  let i1 = g.nearest(ctx.cone.unit_point()[0]);
  let mass = em[i1] / m[i1];
  rep.check(format!("rho_mass/{tag}"), mass, tol, (mass - 1.0).abs() <= tol);
  rep.note(format!("entrance: C1 = {c1}"));
  Ok(())
}

pub fn decay(ctx: &Ctx, rep: &mut Report) -> Outcome {
  ctx.require_grid()?;
  let cfg = ctx.cfg;
  let (op, st) = ctx.main_solution()?;
  let g = op.grid();
  let m = op.martin_values();
  let h = g.spacing();
  let tag = ctx.tag();
  let phi = &st.phi;
  let times = [1.0, 2.0, 4.0, 8.0, 16.0];

  // Zero Martin mass: unit hat at 1 minus a matched hat at 2.
  let (i1, i2) = (g.nearest(1.0), g.nearest(2.0));
  let mut f = vec![0.0; g.len()];
  f[i1] = 1.0 / h;
  f[i2] = -m[i1] / m[i2] / h;
  let factor = cfg.tolerances.decay_factor;
  let mut mass_err: f64 = 0.0;
  for q in [1.0, 2.0] {
    let table = decay_check(op, phi, &f, q, &times)?;
    if let Some(w) = &table.warning {
      rep.note(format!("decay q={q}: {w}"));
    }
    let k = table.decrease_factor();
    rep.check(format!("decay_rate/{tag}/q={q}"), k, factor, k >= factor);
    for r in &table.rows {
      mass_err = mass_err.max((r.martin_mass - table.mass).abs());
    }
    let rows: Vec<Vec<f64>> =
      table.rows.iter().map(|r| vec![r.t, r.rescaled_norm, r.martin_mass, r.boundary_share]).collect();
    rep.csv(&ctx.file(&format!("decay_q{q}"), "csv"), &["t", "rescaled_norm", "martin_mass", "boundary_share"], &rows)?;
  }
  let tol = cfg.tolerances.mass;
  rep.check(format!("decay_mass/{tag}"), mass_err, tol, mass_err <= tol);

  let mut worst: f64 = 0.0;
  for q in [1.0, 2.0] {
    worst = entrance_evolution_gap(op, phi, q, &[1.0, 2.0, 4.0])?.into_iter().fold(worst, f64::max);
  }
  let tol = cfg.tolerances.entrance;
  rep.check(format!("decay_entrance_identity/{tag}"), worst, tol, worst < tol);

  let hc = hypercontractivity_check(op, 1.0)?;
  let tol = cfg.tolerances.hyper_q1;
  rep.check(format!("hyper_q1/{tag}"), hc.sup, tol, (hc.sup - 1.0).abs() <= tol);
  let (r, hk) = (cfg.grid.kernel_radius, cfg.grid.kernel_spacing);
  let coarse = hypercontractivity_check(&ctx.grid(r, hk)?, 2.0)?;
  let fine = hypercontractivity_check(&ctx.grid(r, hk / 2.0)?, 2.0)?;
  let rel = (fine.sup - coarse.sup).abs() / fine.sup;
  let tol = cfg.tolerances.hyper_q2;
  rep.check(format!("hyper_q2_stability/{tag}"), rel, tol, rel < tol);
  rep.note(format!("decay: q=2 suprema {} (h) and {} (h/2)", coarse.sup, fine.sup));
  Ok(())
}

/// Operator and dense-kernel checks on the small window.
pub fn kernel(ctx: &Ctx, rep: &mut Report) -> Outcome {
  ctx.require_grid()?;
  let cfg = ctx.cfg;
  let tag = ctx.tag();
  let a = ctx.alpha;

  let op = ctx.grid(64.0, 1.0 / 128.0)?;
  let rs = op.row_sums().into_iter().fold(f64::MIN, f64::max);
  rep.check(format!("operator_row_sums/{tag}"), rs, 0.0, rs < 0.0);
  let g = op.grid();
  let c: Vec<f64> = g.nodes().iter().map(|x| x.cos()).collect();
  let s: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
  let (ac, asn) = (op.apply(&c), op.apply(&s));
  let mut err: f64 = 0.0;
  for (i, x) in g.nodes().iter().enumerate() {
    if x.abs() >= 16.0 && x.abs() <= 48.0 {
      err = err.max(((ac[i] + c[i]).powi(2) + (asn[i] + s[i]).powi(2)).sqrt());
    }
  }
  rep.check(format!("operator_symbol/{tag}"), err, 1e-2, err < 1e-2);

  let op = &ctx.grid(cfg.grid.kernel_radius, cfg.grid.kernel_spacing)?;
  let g = op.grid();
  let k1 = heat_kernel(op, 1.0)?;
  let r = k1.report();
  rep.check(format!("kernel_invariants/{tag}"), r.max_asymmetry, 1e-8, r.holds());
  let mut ck: f64 = 0.0;
  for (t, s) in [(0.25, 0.25), (0.5, 0.5), (0.5, 1.0)] {
    let lhs = heat_kernel(op, t)?.compose(&heat_kernel(op, s)?);
    let rhs = heat_kernel(op, t + s)?;
    ck = ck.max((&lhs.values - &rhs.values).iter().fold(0.0, |m: f64, v| m.max(v.abs())));
  }
  rep.check(format!("kernel_chapman_kolmogorov/{tag}"), ck, 1e-6, ck < 1e-6);
  let limit = g.radius() / 4.0;
  let dom = k1.domination_ratio(g, limit)?;
  rep.check(format!("kernel_domination/{tag}"), dom, 1.0 + 1e-3, dom <= 1.0 + 1e-3);
  let p = k1.row_mass();
  let idx: Vec<usize> = (0..g.len()).filter(|&i| g.nodes()[i].abs() <= limit).collect();
  let mut worst: f64 = 1.0;
  for &i in &idx {
    for &j in &idx {
      let f = p[i] * density_1d(a, 1.0, g.nodes()[i] - g.nodes()[j])? * p[j];
      let r = k1.values[[i, j]] / f;
      worst = worst.max(r).max(1.0 / r);
    }
  }
  rep.check(format!("kernel_factorization/{tag}"), worst, 50.0, worst <= 50.0);
  Ok(())
}
