//! Path simulation with several dyadic monitoring levels sharing one path.
//!
//! The fine grid has step `dt`; monitor `l` looks at every `2^l`-th fine point.
//! Near the boundary a monitor refines an interval by looking at its midpoint:
//! a fine grid point above the fine level, a lazily drawn bridge point below
//! it. Bridge points are memoized so all monitors see the same path.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::bridge::{bridge_midpoint, unit_increment, UnitDensity};
use super::MonitorConfig;
use crate::cone_geometry::ConeSpec;
use crate::error::Result;

pub(crate) type Pt = [f64; 3];

pub(crate) struct Engine<'a> {
  cone: &'a ConeSpec,
  alpha: f64,
  d: usize,
  thin: bool,
  density: Option<Arc<UnitDensity>>,
  kill_eps: f64,
  max_depth: u32,
  levels: usize,
  block: usize,
  n_fine: usize,
  step_scale: f64,
  /// `(dt 2^-j)^{1/alpha}` for sub-step depth `j`.
  sub_scale: Vec<f64>,
  /// Refinement thresholds `K (dt 2^l)^{1/alpha}` per coarse level.
  coarse_thr: Vec<f64>,
  sub_thr: Vec<f64>,
}

#[derive(Default)]
pub(crate) struct Scratch {
  pts: Vec<Pt>,
  dl: Vec<f64>,
  memo: HashMap<(usize, u64), Pt>,
}

pub(crate) struct Outcome {
  /// Fine step index closing the interval where monitor `l` saw the exit.
  pub exit: Vec<Option<usize>>,
  pub endpoint: Pt,
}

impl<'a> Engine<'a> {
  /// `n_fine` steps of length `dt`, `levels` monitors; `n_fine` must be a
  /// multiple of `2^(levels-1)`.
  pub fn new(
    cone: &'a ConeSpec,
    dt: f64,
    n_fine: usize,
    levels: usize,
    monitor: &MonitorConfig,
  ) -> Result<Self> {
    let alpha = cone.alpha();
    let d = cone.dim();
    let thin = cone.kind().thin_complement();
    let block = 1usize << (levels - 1);
    debug_assert!(n_fine % block == 0);
    let density = if monitor.bridge { Some(super::bridge::unit_density(alpha, d)?) } else { None };
    let k = monitor.refine_factor;
    let mut max_depth = monitor.max_depth;
    if thin && monitor.bridge {
      // Deep enough that the refinement threshold drops below the kill distance.
      let need = alpha * (k * dt.powf(1.0 / alpha) / monitor.kill_distance).log2();
      max_depth = max_depth.max(need.ceil().max(0.0) as u32 + 1).min(60);
    }
    let sub_scale: Vec<f64> =
      (0..=max_depth + 1).map(|j| (dt * 0.5f64.powi(j as i32)).powf(1.0 / alpha)).collect();
    let sub_thr = sub_scale.iter().map(|s| k * s).collect();
    let coarse_thr = (0..levels).map(|l| k * (dt * (1u64 << l) as f64).powf(1.0 / alpha)).collect();
    Ok(Self {
      cone,
      alpha,
      d,
      thin,
      density,
      kill_eps: monitor.kill_distance,
      max_depth,
      levels,
      block,
      n_fine,
      step_scale: dt.powf(1.0 / alpha),
      sub_scale,
      coarse_thr,
      sub_thr,
    })
  }

  #[inline]
  fn delta(&self, p: &Pt) -> f64 {
    self.cone.boundary_distance(&p[..self.d])
  }

  #[inline]
  fn outside(&self, p: &Pt) -> bool {
    !self.cone.contains(&p[..self.d]) || (self.thin && self.delta(p) < self.kill_eps)
  }

  fn check_coarse<R: Rng + ?Sized>(&self, s: &mut Scratch, lo: usize, span: usize, rng: &mut R) -> bool {
    if self.density.is_none() {
      return false;
    }
    if span == 1 {
      let (a, b) = (s.pts[lo], s.pts[lo + 1]);
      let (da, db) = (s.dl[lo], s.dl[lo + 1]);
      return self.check_sub(s, lo, 1, 0, &a, da, &b, db, rng);
    }
    let level = span.trailing_zeros() as usize;
    if s.dl[lo].min(s.dl[lo + span]) >= self.coarse_thr[level] {
      return false;
    }
    let mid = lo + span / 2;
    if self.outside(&s.pts[mid]) {
      return true;
    }
    self.check_coarse(s, lo, span / 2, rng) || self.check_coarse(s, mid, span / 2, rng)
  }

  #[allow(clippy::too_many_arguments)]
  fn check_sub<R: Rng + ?Sized>(
    &self,
    s: &mut Scratch,
    step: usize,
    heap: u64,
    depth: u32,
    a: &Pt,
    da: f64,
    b: &Pt,
    db: f64,
    rng: &mut R,
  ) -> bool {
    if depth >= self.max_depth || da.min(db) >= self.sub_thr[depth as usize] {
      return false;
    }
    let m = match s.memo.get(&(step, heap)) {
      Some(m) => *m,
      None => {
        let dens = self.density.as_ref().expect("bridge density");
        let m = bridge_midpoint(dens, a, b, self.sub_scale[depth as usize + 1], rng);
        s.memo.insert((step, heap), m);
        m
      }
    };
    if self.outside(&m) {
      return true;
    }
    let dm = self.delta(&m);
    self.check_sub(s, step, 2 * heap, depth + 1, a, da, &m, dm, rng)
      || self.check_sub(s, step, 2 * heap + 1, depth + 1, &m, dm, b, db, rng)
  }

  pub fn run<R: Rng + ?Sized>(&self, start: &Pt, s: &mut Scratch, rng: &mut R) -> Outcome {
    let b = self.block;
    s.pts.resize(b + 1, [0.0; 3]);
    s.dl.resize(b + 1, 0.0);
    let mut exit = vec![None; self.levels];
    let mut alive = self.levels;
    let mut pos = *start;
    let mut inc = [0.0; 3];
    for blk in 0..self.n_fine / b {
      s.pts[0] = pos;
      s.dl[0] = self.delta(&pos);
      for j in 1..=b {
        unit_increment(self.alpha, self.d, rng, &mut inc);
        let mut p = s.pts[j - 1];
        for k in 0..self.d {
          p[k] += self.step_scale * inc[k];
        }
        s.pts[j] = p;
        s.dl[j] = self.delta(&p);
      }
      s.memo.clear();
      for (l, ex) in exit.iter_mut().enumerate() {
        if ex.is_some() {
          continue;
        }
        let span = 1usize << l;
        for k in 0..b / span {
          let lo = k * span;
          let hi = lo + span;
          if self.outside(&s.pts[hi]) || self.check_coarse(s, lo, span, rng) {
            *ex = Some(blk * b + hi);
            alive -= 1;
            break;
          }
        }
      }
      pos = s.pts[b];
      if alive == 0 {
        break;
      }
    }
    Outcome { exit, endpoint: pos }
  }
}
