//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stable_cones::cone_geometry::{ConeKind, ConeSpec};

pub const SEED_ENV: &str = "STABLE_CONES_SEED";
const BUILTIN_SEED: u64 = 20261016;

/// A configuration problem tied to a field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
  pub field: String,
  pub message: String,
}

impl ConfigError {
  pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
    Self { field: field.into(), message: message.into() }
  }
}

impl std::fmt::Display for ConfigError {
  fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
    write!(f, "config error in `{}`: {}", self.field, self.message)
  }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alphas {
  One(f64),
  Many(Vec<f64>),
}

impl Alphas {
  pub fn values(&self) -> Vec<f64> {
    match self {
      Alphas::One(a) => vec![*a],
      Alphas::Many(v) => v.clone(),
    }
  }
}

/// A value shared by every alpha, or one value per configured alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAlpha {
  Shared(f64),
  Each(Vec<f64>),
}

impl PerAlpha {
  pub fn at(&self, index: usize) -> f64 {
    match self {
      PerAlpha::Shared(v) => *v,
      PerAlpha::Each(v) => v[index],
    }
  }

  fn values(&self) -> Vec<f64> {
    match self {
      PerAlpha::Shared(v) => vec![*v],
      PerAlpha::Each(v) => v.clone(),
    }
  }

  fn len(&self) -> Option<usize> {
    match self {
      PerAlpha::Shared(_) => None,
      PerAlpha::Each(v) => Some(v.len()),
    }
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeSection {
  pub kind: String,
  pub dim: Option<usize>,
  pub aperture: Option<f64>,
}

impl Default for ConeSection {
  fn default() -> Self {
    Self { kind: "half-line".into(), dim: None, aperture: None }
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
  pub radius: PerAlpha,
  pub spacing: PerAlpha,
  pub stationary_radius: f64,
  pub stationary_spacing: f64,
  pub vertex_radius: f64,
  pub vertex_spacing: f64,
  pub kernel_radius: f64,
  pub kernel_spacing: f64,
}

impl Default for GridSection {
  fn default() -> Self {
    Self {
      radius: PerAlpha::Each(vec![32768.0, 1024.0]),
      spacing: PerAlpha::Each(vec![0.125, 0.0625]),
      stationary_radius: 64.0,
      stationary_spacing: 0.015625,
      vertex_radius: 256.0,
      vertex_spacing: 0.00390625,
      kernel_radius: 16.0,
      kernel_spacing: 0.03125,
    }
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
  pub paths: u64,
  pub dt: Vec<f64>,
  pub t: f64,
  /// Start point; the cone's unit point when absent.
  pub x: Option<Vec<f64>>,
  pub chunk_size: u64,
  pub bridge: bool,
  pub refine_factor: f64,
  pub beta_paths: u64,
  pub beta_t_min: f64,
  pub beta_doublings: u32,
  pub beta_dt: f64,
  pub yaglom_t: f64,
  pub yaglom_dt: f64,
  pub yaglom_survivors: usize,
  pub cost_guard: f64,
}

impl Default for McSection {
  fn default() -> Self {
    Self {
      paths: 200_000,
      dt: vec![1e-3, 5e-4],
      t: 1.0,
      x: None,
      chunk_size: 4096,
      bridge: true,
      refine_factor: 4.0,
      beta_paths: 50_000,
      beta_t_min: 8.0,
      beta_doublings: 10,
      beta_dt: 0.1,
      yaglom_t: 64.0,
      yaglom_dt: 0.032,
      yaglom_survivors: 10_000,
      cost_guard: 1e-4,
    }
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
  pub sampler_cf: f64,
  pub invariance: f64,
  pub invariance_small_t: f64,
  pub cross_validation: f64,
  pub beta: f64,
  pub beta_thin: f64,
  pub ks: f64,
  pub stationary: f64,
  pub stationary_envelope: f64,
  pub entrance: f64,
  pub vertex_limit: f64,
  pub mass: f64,
  pub decay_factor: f64,
  pub hyper_q1: f64,
  pub hyper_q2: f64,
}

impl Default for Tolerances {
  fn default() -> Self {
    Self {
      sampler_cf: 4e-3,
      invariance: 0.02,
      invariance_small_t: 1e-3,
      cross_validation: 0.02,
      beta: 0.05,
      beta_thin: 0.07,
      ks: 0.05,
      stationary: 1e-6,
      stationary_envelope: 100.0,
      entrance: 1e-2,
      vertex_limit: 0.05,
      mass: 1e-3,
      decay_factor: 4.0,
      hyper_q1: 1e-2,
      hyper_q2: 0.05,
    }
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
  pub seed: Option<u64>,
  pub alpha: Alphas,
  pub cone: ConeSection,
  pub grid: GridSection,
  pub mc: McSection,
  pub tolerances: Tolerances,
}

impl Default for Config {
  fn default() -> Self {
    Self {
      seed: None,
      alpha: Alphas::Many(vec![1.0, 1.5]),
      cone: ConeSection::default(),
      grid: GridSection::default(),
      mc: McSection::default(),
      tolerances: Tolerances::default(),
    }
  }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
  pub seed: Option<u64>,
  pub alpha: Option<Vec<f64>>,
  pub cone: Option<String>,
  pub dim: Option<usize>,
  pub aperture: Option<f64>,
  pub paths: Option<u64>,
  pub t: Option<f64>,
  pub x: Option<Vec<f64>>,
}

impl Config {
  pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
    toml::from_str(text).map_err(|e| {
      let field = e.span().map(|s| locate_key(text, s.start)).unwrap_or_else(|| "config".into());
      ConfigError::new(field, e.message().trim().to_string())
    })
  }

  pub fn load(path: &Path) -> Result<Self, ConfigError> {
    let text = std::fs::read_to_string(path)
      .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    Self::from_toml(&text)
  }

  pub fn apply(&mut self, o: &Overrides) {
    if o.seed.is_some() {
      self.seed = o.seed;
    }
    if let Some(a) = &o.alpha {
      // Per-alpha grid lists no longer line up: keep the widest window and the finest spacing.
      let g = &mut self.grid;
      if g.radius.len().is_some_and(|n| n != a.len()) {
        g.radius = PerAlpha::Shared(g.radius.values().iter().cloned().fold(f64::MIN, f64::max));
      }
      if g.spacing.len().is_some_and(|n| n != a.len()) {
        g.spacing = PerAlpha::Shared(g.spacing.values().iter().cloned().fold(f64::MAX, f64::min));
      }
      self.alpha = Alphas::Many(a.clone());
    }
    if let Some(k) = &o.cone {
      self.cone.kind = k.clone();
    }
    if o.dim.is_some() {
      self.cone.dim = o.dim;
    }
    if o.aperture.is_some() {
      self.cone.aperture = o.aperture;
    }
    if let Some(p) = o.paths {
      self.mc.paths = p;
    }
    if let Some(t) = o.t {
      self.mc.t = t;
    }
    if o.x.is_some() {
      self.mc.x = o.x.clone();
    }
  }

  /// Flag, then file, then environment, then the built-in default.
  pub fn resolved_seed(&self) -> Result<u64, ConfigError> {
    if let Some(s) = self.seed {
      return Ok(s);
    }
    match std::env::var(SEED_ENV) {
      Ok(v) => v
        .trim()
        .parse()
        .map_err(|_| ConfigError::new(SEED_ENV, format!("`{v}` is not an unsigned 64-bit integer"))),
      Err(_) => Ok(BUILTIN_SEED),
    }
  }

  pub fn cone_for(&self, alpha: f64) -> Result<ConeSpec, ConfigError> {
    let kind = match self.cone.kind.as_str() {
      "half-line" => ConeKind::HalfLine,
      "punctured-line" => ConeKind::PuncturedLine,
      "half-space" => ConeKind::HalfSpace,
      "slit-plane" => ConeKind::SlitPlane,
      "right-circular" => {
        let aperture = self
          .cone
          .aperture
          .ok_or_else(|| ConfigError::new("cone.aperture", "required for right-circular cones"))?;
        ConeKind::RightCircular { aperture }
      }
      other => {
        return Err(ConfigError::new(
          "cone.kind",
          format!(
            "unknown kind `{other}`; expected half-line, punctured-line, half-space, right-circular or slit-plane"
          ),
        ))
      }
    };
    let dim = self.cone.dim.unwrap_or(match kind {
      ConeKind::HalfLine | ConeKind::PuncturedLine => 1,
      _ => 2,
    });
    ConeSpec::new(kind, dim, alpha).map_err(|e| {
      let field = match &e {
        stable_cones::Error::InvalidParameter { name, .. } => match *name {
          "alpha" => "alpha".to_string(),
          other => format!("cone.{other}"),
        },
        _ => "cone".into(),
      };
      ConfigError::new(field, e.to_string())
    })
  }

  /// Checks every field that does not need a cone.
  pub fn validate(&self) -> Result<(), ConfigError> {
    let alphas = self.alpha.values();
    if alphas.is_empty() {
      return Err(ConfigError::new("alpha", "at least one value is required"));
    }
    for a in &alphas {
      if !(*a > 0.0 && *a < 2.0) {
        return Err(ConfigError::new("alpha", format!("{a} must lie in the open interval (0, 2)")));
      }
      self.cone_for(*a)?;
    }
    let g = &self.grid;
    for (name, p) in [("grid.radius", &g.radius), ("grid.spacing", &g.spacing)] {
      if p.len().is_some_and(|n| n != alphas.len()) {
        return Err(ConfigError::new(name, "a list needs one entry per alpha"));
      }
    }
    let mut windows = vec![
      ("grid.stationary_radius", g.stationary_radius, g.stationary_spacing),
      ("grid.vertex_radius", g.vertex_radius, g.vertex_spacing),
      ("grid.kernel_radius", g.kernel_radius, g.kernel_spacing),
    ];
    windows.extend((0..alphas.len()).map(|i| ("grid.radius", g.radius.at(i), g.spacing.at(i))));
    for (name, r, h) in windows {
      if !(h > 0.0 && r > h) {
        return Err(ConfigError::new(name, "need 0 < spacing < radius"));
      }
      let ratio = r / h;
      if (ratio - ratio.round()).abs() > 1e-9 * ratio {
        return Err(ConfigError::new(name, "radius / spacing must be an integer"));
      }
    }
    let m = &self.mc;
    positive("mc.paths", m.paths as f64)?;
    positive("mc.t", m.t)?;
    positive("mc.chunk_size", m.chunk_size as f64)?;
    positive("mc.refine_factor", m.refine_factor)?;
    positive("mc.beta_paths", m.beta_paths as f64)?;
    positive("mc.beta_t_min", m.beta_t_min)?;
    positive("mc.beta_dt", m.beta_dt)?;
    positive("mc.yaglom_t", m.yaglom_t)?;
    positive("mc.yaglom_dt", m.yaglom_dt)?;
    positive("mc.yaglom_survivors", m.yaglom_survivors as f64)?;
    if m.beta_doublings < 3 {
      return Err(ConfigError::new("mc.beta_doublings", "the time grid must span at least three doublings"));
    }
    if m.dt.is_empty() || m.dt.iter().any(|d| !(*d > 0.0 && *d <= m.t)) {
      return Err(ConfigError::new("mc.dt", "steps must lie in (0, t]"));
    }
    if !(m.cost_guard > 0.0 && m.cost_guard < 1.0) {
      return Err(ConfigError::new("mc.cost_guard", "must lie in (0, 1)"));
    }
    let t = &self.tolerances;
    for (name, v) in [
      ("tolerances.sampler_cf", t.sampler_cf),
      ("tolerances.invariance", t.invariance),
      ("tolerances.invariance_small_t", t.invariance_small_t),
      ("tolerances.cross_validation", t.cross_validation),
      ("tolerances.beta", t.beta),
      ("tolerances.beta_thin", t.beta_thin),
      ("tolerances.ks", t.ks),
      ("tolerances.stationary", t.stationary),
      ("tolerances.stationary_envelope", t.stationary_envelope),
      ("tolerances.entrance", t.entrance),
      ("tolerances.vertex_limit", t.vertex_limit),
      ("tolerances.mass", t.mass),
      ("tolerances.decay_factor", t.decay_factor),
      ("tolerances.hyper_q1", t.hyper_q1),
      ("tolerances.hyper_q2", t.hyper_q2),
    ] {
      positive(name, v)?;
    }
    self.resolved_seed()?;
    Ok(())
  }

  /// Start point: configured, or the cone's unit point.
  pub fn start_point(&self, cone: &ConeSpec) -> Result<Vec<f64>, ConfigError> {
    let x = self.mc.x.clone().unwrap_or_else(|| cone.unit_point());
    if x.len() != cone.dim() {
      return Err(ConfigError::new("mc.x", format!("expected {} coordinates", cone.dim())));
    }
    if !cone.contains(&x) {
      return Err(ConfigError::new("mc.x", "start point lies outside the cone"));
    }
    Ok(x)
  }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
  if v > 0.0 && v.is_finite() {
    Ok(())
  } else {
    Err(ConfigError::new(name, format!("{v} must be positive")))
  }
}

/// Dotted key of the TOML line containing byte offset `pos`.
fn locate_key(text: &str, pos: usize) -> String {
  let mut table = String::new();
  let mut key = String::new();
  let mut offset = 0;
  for line in text.lines() {
    let trimmed = line.trim();
    if trimmed.starts_with('[') && trimmed.ends_with(']') {
      table = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
      key.clear();
    } else if let Some((k, _)) = trimmed.split_once('=') {
      key = k.trim().to_string();
    }
    offset += line.len() + 1;
    if offset > pos {
      break;
    }
  }
  match (table.is_empty(), key.is_empty()) {
    (true, _) => key,
    (false, true) => table,
    (false, false) => format!("{table}.{key}"),
  }
}

#[cfg(test)]
mod tests {
  use super::*;

  #[test]
  fn shipped_default_parses_and_validates() {
    let text = include_str!("../../../configs/default.toml");
    let c = Config::from_toml(text).unwrap();
    c.validate().unwrap();
    assert_eq!(c.alpha.values(), vec![1.0, 1.5]);
    assert_eq!(c.grid, GridSection::default());
    assert_eq!(c.mc, McSection::default());
    assert_eq!(c.tolerances, Tolerances::default());
  }

  #[test]
  fn out_of_range_alpha_names_the_field() {
    let c = Config::from_toml("alpha = 2.5").unwrap();
    let e = c.validate().unwrap_err();
    assert_eq!(e.field, "alpha");
  }

  #[test]
  fn type_errors_name_the_key() {
    let e = Config::from_toml("[mc]\npaths = \"many\"\n").unwrap_err();
    assert_eq!(e.field, "mc.paths");
    let e = Config::from_toml("[grid]\nradius = 64.0\nbogus = 1\n").unwrap_err();
    assert!(e.message.contains("bogus"), "{e}");
  }

  #[test]
  fn flags_override_file() {
    let mut c = Config::from_toml("seed = 1\nalpha = 1.2\n[mc]\npaths = 10\n").unwrap();
    c.apply(&Overrides { seed: Some(9), alpha: Some(vec![1.7]), paths: Some(20), ..Default::default() });
    assert_eq!(c.seed, Some(9));
    assert_eq!(c.alpha.values(), vec![1.7]);
    assert_eq!(c.mc.paths, 20);
  }

  #[test]
  fn per_alpha_grid_lists() {
    let c = Config::from_toml("alpha = [1.0, 1.5]\n[grid]\nradius = [64.0]\n").unwrap();
    assert_eq!(c.validate().unwrap_err().field, "grid.radius");
    let mut c = Config::from_toml("alpha = [1.0, 1.5]\n[grid]\nradius = [128.0, 64.0]\nspacing = [0.25, 0.125]\n").unwrap();
    c.validate().unwrap();
    assert_eq!(c.grid.radius.at(1), 64.0);
    c.apply(&Overrides { alpha: Some(vec![1.2]), ..Default::default() });
    assert_eq!(c.grid.radius, PerAlpha::Shared(128.0));
    assert_eq!(c.grid.spacing, PerAlpha::Shared(0.125));
  }

  #[test]
  fn cone_fields_are_checked() {
    let c = Config::from_toml("alpha = 0.8\n[cone]\nkind = \"punctured-line\"\n").unwrap();
    assert_eq!(c.validate().unwrap_err().field, "alpha");
    let c = Config::from_toml("[cone]\nkind = \"right-circular\"\n").unwrap();
    assert_eq!(c.validate().unwrap_err().field, "cone.aperture");
    let c = Config::from_toml("[cone]\nkind = \"cube\"\n").unwrap();
    assert_eq!(c.validate().unwrap_err().field, "cone.kind");
  }
}
