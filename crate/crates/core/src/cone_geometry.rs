//! Cones, boundary distance, Martin kernels and homogeneity exponents.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stable_sampler::check_alpha;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConeKind {
  /// `(0, inf)` in one dimension.
  HalfLine,
  /// The real line minus the origin; needs `alpha > 1`.
  PuncturedLine,
  /// `{x_d > 0}`.
  HalfSpace,
  /// `{x_d > |x| cos(aperture)}`, `d >= 2`.
  RightCircular { aperture: f64 },
  /// The plane minus the ray `[0, inf) x {0}`; needs `alpha > 1`.
  SlitPlane,
}

impl ConeKind {
  pub fn name(&self) -> &'static str {
    match self {
      ConeKind::HalfLine => "half-line",
      ConeKind::PuncturedLine => "punctured-line",
      ConeKind::HalfSpace => "half-space",
      ConeKind::RightCircular { .. } => "right-circular",
      ConeKind::SlitPlane => "slit-plane",
    }
  }

  /// Complement has empty interior, so exits happen only by hitting it.
  pub fn thin_complement(&self) -> bool {
    matches!(self, ConeKind::PuncturedLine | ConeKind::SlitPlane)
  }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
  kind: ConeKind,
  dim: usize,
  alpha: f64,
  /// Orthogonal matrix `T` (row-major); the cone is `T` applied to the
  /// standard cone of this kind.
  frame: Option<Vec<f64>>,
}

impl ConeSpec {
  pub fn new(kind: ConeKind, dim: usize, alpha: f64) -> Result<Self> {
    check_alpha(alpha)?;
    match kind {
      ConeKind::HalfLine | ConeKind::PuncturedLine if dim != 1 => {
        return Err(invalid("dim", format!("{} is one-dimensional", kind.name())))
      }
      ConeKind::SlitPlane if dim != 2 => {
        return Err(invalid("dim", "slit-plane is two-dimensional"))
      }
      ConeKind::RightCircular { .. } if dim < 2 => {
        return Err(invalid("dim", "right-circular cones need d >= 2"))
      }
      _ => {}
    }
    if dim > 3 {
      return Err(invalid("dim", "dimensions above 3 are not supported"));
    }
    if kind.thin_complement() && alpha <= 1.0 {
      return Err(invalid("alpha", format!("{} requires alpha > 1", kind.name())));
    }
    if let ConeKind::RightCircular { aperture } = kind {
      if !(aperture > 0.0 && aperture < PI) {
        return Err(invalid("aperture", "must lie in (0, pi)"));
      }
    }
    Ok(Self { kind, dim, alpha, frame: None })
  }

  pub fn half_line(alpha: f64) -> Result<Self> {
    Self::new(ConeKind::HalfLine, 1, alpha)
  }

  pub fn punctured_line(alpha: f64) -> Result<Self> {
    Self::new(ConeKind::PuncturedLine, 1, alpha)
  }

  pub fn half_space(dim: usize, alpha: f64) -> Result<Self> {
    Self::new(ConeKind::HalfSpace, dim, alpha)
  }

  pub fn right_circular(dim: usize, alpha: f64, aperture: f64) -> Result<Self> {
    Self::new(ConeKind::RightCircular { aperture }, dim, alpha)
  }

  pub fn slit_plane(alpha: f64) -> Result<Self> {
    Self::new(ConeKind::SlitPlane, 2, alpha)
  }

  /// Same cone mapped by the orthogonal matrix `t` (row-major, `dim x dim`).
  pub fn with_frame(mut self, t: Vec<f64>) -> Result<Self> {
    let d = self.dim;
    if t.len() != d * d {
      return Err(invalid("frame", "matrix size must be dim x dim"));
    }
    for i in 0..d {
      for j in 0..d {
        let dot: f64 = (0..d).map(|k| t[i * d + k] * t[j * d + k]).sum();
        let want = if i == j { 1.0 } else { 0.0 };
        if (dot - want).abs() > 1e-10 {
          return Err(invalid("frame", "matrix is not orthogonal"));
        }
      }
    }
    self.frame = Some(t);
    Ok(self)
  }

  pub fn kind(&self) -> ConeKind {
    self.kind
  }

  pub fn dim(&self) -> usize {
    self.dim
  }

  pub fn alpha(&self) -> f64 {
    self.alpha
  }

  /// The distinguished interior point `(0, ..., 0, 1)`, mapped by the frame.
  pub fn unit_point(&self) -> Vec<f64> {
    let mut e = vec![0.0; self.dim];
    e[self.dim - 1] = 1.0;
    match &self.frame {
      None => e,
      Some(t) => (0..self.dim).map(|i| t[i * self.dim + self.dim - 1]).collect(),
    }
  }

  /// Coordinates of `x` in the standard frame (`T^t x`), into a fixed buffer.
  #[inline]
  fn local(&self, x: &[f64]) -> [f64; 3] {
    let mut y = [0.0; 3];
    match &self.frame {
      None => y[..self.dim].copy_from_slice(&x[..self.dim]),
      Some(t) => {
        let d = self.dim;
        for (j, yj) in y.iter_mut().enumerate().take(d) {
          *yj = (0..d).map(|i| t[i * d + j] * x[i]).sum();
        }
      }
    }
    y
  }

  #[inline]
  pub fn contains(&self, x: &[f64]) -> bool {
    let y = self.local(x);
    let d = self.dim;
    match self.kind {
      ConeKind::HalfLine => y[0] > 0.0,
      ConeKind::PuncturedLine => y[0] != 0.0,
      ConeKind::HalfSpace => y[d - 1] > 0.0,
      ConeKind::RightCircular { aperture } => y[d - 1] > norm(&y[..d]) * aperture.cos(),
      ConeKind::SlitPlane => !(y[1] == 0.0 && y[0] >= 0.0),
    }
  }

  /// Euclidean distance from `x` to the complement of the cone (0 outside).
  #[inline]
  pub fn boundary_distance(&self, x: &[f64]) -> f64 {
    let y = self.local(x);
    let d = self.dim;
    match self.kind {
      ConeKind::HalfLine => y[0].max(0.0),
      ConeKind::PuncturedLine => y[0].abs(),
      ConeKind::HalfSpace => y[d - 1].max(0.0),
      ConeKind::RightCircular { aperture } => {
        let r = norm(&y[..d]);
        if r == 0.0 {
          return 0.0;
        }
        let theta = (y[d - 1] / r).clamp(-1.0, 1.0).acos();
        if theta >= aperture {
          0.0
        } else {
          r * (aperture - theta).min(PI / 2.0).sin()
        }
      }
      ConeKind::SlitPlane => {
        if y[0] >= 0.0 {
          y[1].abs()
        } else {
          norm(&y[..2])
        }
      }
    }
  }

  /// Homogeneity exponent of the Martin kernel where a closed form exists.
  pub fn beta(&self) -> Beta {
    let a = self.alpha;
    match self.kind {
      ConeKind::HalfLine | ConeKind::HalfSpace => Beta::Known(a / 2.0),
      ConeKind::PuncturedLine => Beta::Known(a - 1.0),
      ConeKind::SlitPlane => Beta::Known((a - 1.0) / 2.0),
      ConeKind::RightCircular { aperture } if aperture == PI / 2.0 => Beta::Known(a / 2.0),
      ConeKind::RightCircular { .. } => Beta::Unknown,
    }
  }

  /// Martin kernel with a closed form (half-line, punctured line, half-space,
  /// and the right-circular cone of aperture pi/2).
  pub fn martin_kernel(&self) -> Result<MartinKernel> {
    match (self.kind, self.beta()) {
      (ConeKind::SlitPlane, _) => Err(Error::Unsupported(
        "slit-plane exposes only its exponent, not a pointwise kernel".into(),
      )),
      (ConeKind::RightCircular { .. }, Beta::Known(b)) => {
        Ok(MartinKernel { cone: self.clone(), beta: b, exactness: Exactness::Surrogate, norm: 1.0 })
          .map(MartinKernel::normalized)
      }
      (_, Beta::Known(b)) => {
        Ok(MartinKernel { cone: self.clone(), beta: b, exactness: Exactness::Exact, norm: 1.0 })
      }
      (_, Beta::Unknown) => Err(Error::Unsupported(
        "exponent unknown; build a surrogate with an estimated beta".into(),
      )),
    }
  }

  /// Comparability surrogate `delta^{alpha/2} |x|^{beta - alpha/2}`, normalized
  /// at the unit point. Only right-circular cones are accepted.
  pub fn surrogate_kernel(&self, beta: f64) -> Result<MartinKernel> {
    if !matches!(self.kind, ConeKind::RightCircular { .. }) {
      return Err(Error::Unsupported("surrogates are only built for right-circular cones".into()));
    }
    if !(beta >= 0.0 && beta < self.alpha) {
      return Err(invalid("beta", "must lie in [0, alpha)"));
    }
    Ok(MartinKernel { cone: self.clone(), beta, exactness: Exactness::Surrogate, norm: 1.0 }.normalized())
  }
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
  x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Beta {
  Known(f64),
  Unknown,
}

impl Beta {
  pub fn value(&self) -> Option<f64> {
    match self {
      Beta::Known(b) => Some(*b),
      Beta::Unknown => None,
    }
  }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exactness {
  Exact,
  Surrogate,
}

/// A Martin kernel evaluation tagged with its exactness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartinValue {
  pub value: f64,
  pub exactness: Exactness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartinKernel {
  cone: ConeSpec,
  beta: f64,
  exactness: Exactness,
  norm: f64,
}

impl MartinKernel {
  fn normalized(mut self) -> Self {
    self.norm = 1.0;
    let u = self.cone.unit_point();
    self.norm = 1.0 / self.raw(&u);
    self
  }

  pub fn cone(&self) -> &ConeSpec {
    &self.cone
  }

  pub fn beta(&self) -> f64 {
    self.beta
  }

  pub fn exactness(&self) -> Exactness {
    self.exactness
  }

  pub fn is_exact(&self) -> bool {
    self.exactness == Exactness::Exact
  }

  #[inline]
  fn raw(&self, x: &[f64]) -> f64 {
    let c = &self.cone;
    if !c.contains(x) {
      return 0.0;
    }
    let y = c.local(x);
    let a = c.alpha;
    match (c.kind, self.exactness) {
      (_, Exactness::Surrogate) => {
        c.boundary_distance(x).powf(a / 2.0) * norm(&y[..c.dim]).powf(self.beta - a / 2.0)
      }
      (ConeKind::HalfLine, _) => y[0].powf(a / 2.0),
      (ConeKind::PuncturedLine, _) => y[0].abs().powf(a - 1.0),
      (ConeKind::HalfSpace, _) => y[c.dim - 1].powf(a / 2.0),
      _ => f64::NAN,
    }
  }

  /// Kernel value at `x`; zero outside the cone.
  #[inline]
  pub fn value(&self, x: &[f64]) -> f64 {
    self.norm * self.raw(x)
  }

  /// Kernel value tagged with exactness, so surrogate use is always visible.
  pub fn martin(&self, x: &[f64]) -> MartinValue {
    MartinValue { value: self.value(x), exactness: self.exactness }
  }
}
