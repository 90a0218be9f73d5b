use std::f64::consts::PI;

use stable_cones::cone_geometry::ConeSpec;
use stable_cones::fractional_grid_solver::{build_operator, Grid1D};
use stable_cones::killed_mc::{
  martin_invariance, simulate_killed_path, survival, survival_curve, yaglom_samples, CurveConfig, EstimateCI,
  InitialLaw, McConfig, MonitorConfig, YaglomConfig,
};
use stable_cones::stable_density::cdf_1d;
use stable_cones::stable_sampler::RngStream;
use stable_cones::Error;

fn cfg(paths: u64, t: f64, stream: u64) -> McConfig {
  McConfig::new(paths, vec![2e-3 * t, 1e-3 * t], RngStream::new(77, stream))
}

fn same_bits(a: &EstimateCI, b: &EstimateCI) -> bool {
  a.value.to_bits() == b.value.to_bits()
    && a.levels.len() == b.levels.len()
    && a.levels.iter().zip(&b.levels).all(|(p, q)| p.value.to_bits() == q.value.to_bits())
}

#[test]
fn single_step_survival_is_the_increment_law() {
  // With one monitor at t, the path survives iff x + S_t > 0.
  let cone = ConeSpec::half_line(1.5).unwrap();
  let (x, t, n) = (0.7, 2.0, 50_000);
  let mut rng = RngStream::new(1, 0).rng();
  let mut alive = 0u32;
  for _ in 0..n {
    let p = simulate_killed_path(&cone, &[x], t, t, &MonitorConfig::discrete(), &mut rng).unwrap();
    assert_eq!(p.exit_step_index.is_none(), p.survived);
    if p.survived {
      assert!(p.endpoint.as_ref().unwrap()[0] > 0.0);
      alive += 1;
    }
  }
  let want = cdf_1d(1.5, t, x).unwrap();
  let got = alive as f64 / n as f64;
  let se = (want * (1.0 - want) / n as f64).sqrt();
  assert!((got - want).abs() < 4.0 * se, "{got} vs {want}");
}

#[test]
fn paths_reject_bad_input() {
  let cone = ConeSpec::half_line(1.0).unwrap();
  let mut rng = RngStream::new(1, 1).rng();
  let m = MonitorConfig::default();
  assert_eq!(simulate_killed_path(&cone, &[-1.0], 1.0, 0.1, &m, &mut rng).unwrap_err(), Error::StartOutsideCone);
  assert!(simulate_killed_path(&cone, &[1.0], 1.0, 2.0, &m, &mut rng).is_err());
}

#[test]
fn far_from_the_boundary_paths_survive() {
  for alpha in [0.8, 1.0, 1.5, 1.9] {
    let cone = ConeSpec::half_line(alpha).unwrap();
    let t: f64 = 3.0;
    let x = 100.0 * t.powf(1.0 / alpha);
    let e = survival(&cone, &[x], t, &cfg(10_000, t, 2)).unwrap();
    // Reflection: P(inf_{s<=t} S_s < -x) <= 2 P(S_t < -x).
    let reflected = 2.0 * cdf_1d(alpha, t, -x).unwrap();
    assert!(1.0 - e.value <= reflected + 4.0 * e.stderr, "alpha {alpha}: {} vs {reflected}", e.value);
    if alpha >= 1.0 {
      assert!(e.value >= 0.99, "alpha {alpha}: {}", e.value);
    }
  }
}

#[test]
fn survival_scales_exactly_under_coupled_seeds() {
  let cones = [ConeSpec::half_line(1.3).unwrap(), ConeSpec::half_space(2, 1.0).unwrap(), ConeSpec::slit_plane(1.6).unwrap()];
  for cone in cones {
    let a = cone.alpha();
    let x = cone.unit_point();
    for t in [0.01, 0.7, 5.0, 123.0] {
      let lhs = survival(&cone, &x, t, &cfg(4000, t, 3)).unwrap();
      let xs: Vec<f64> = x.iter().map(|v| v * t.powf(-1.0 / a)).collect();
      let rhs = survival(&cone, &xs, 1.0, &cfg(4000, 1.0, 3)).unwrap();
      assert!(same_bits(&lhs, &rhs), "{:?} t={t}", cone.kind());
    }
  }
}

#[test]
fn estimates_carry_their_provenance() {
  let cone = ConeSpec::half_line(1.5).unwrap();
  let c = cfg(5000, 1.0, 4);
  let e = survival(&cone, &[1.0], 1.0, &c).unwrap();
  assert_eq!(e.n, 5000);
  assert_eq!(e.seed, c.stream);
  assert!(e.extrapolated);
  assert_eq!(e.levels.len(), 2);
  assert!((e.ci95.0 - (e.value - 1.96 * e.stderr)).abs() < 1e-15);
  assert!((e.ci95.1 - (e.value + 1.96 * e.stderr)).abs() < 1e-15);
}

#[test]
fn short_horizon_invariance_is_trivial() {
  for cone in [ConeSpec::half_line(1.5).unwrap(), ConeSpec::half_space(2, 1.0).unwrap()] {
    let m = cone.martin_kernel().unwrap();
    let t = 1e-6;
    let r = martin_invariance(&m, &cone.unit_point(), t, &cfg(20_000, t, 5)).unwrap().ratio;
    assert!((r.value - 1.0).abs() <= 1e-3, "{:?}: {}", cone.kind(), r.value);
  }
}

#[test]
fn invariance_holds_at_unit_time() {
  let cone = ConeSpec::punctured_line(1.5).unwrap();
  let m = cone.martin_kernel().unwrap();
  let r = martin_invariance(&m, &[1.0], 1.0, &cfg(100_000, 1.0, 6)).unwrap().ratio;
  assert!((0.98..=1.02).contains(&r.value), "{}", r.value);
}

#[test]
fn surrogate_kernels_are_refused() {
  let cone = ConeSpec::right_circular(2, 1.0, 2.0 * PI / 3.0).unwrap();
  let m = cone.surrogate_kernel(0.4).unwrap();
  let err = martin_invariance(&m, &cone.unit_point(), 1.0, &cfg(100, 1.0, 7)).unwrap_err();
  assert!(matches!(err, Error::Unsupported(_)));
}

#[test]
fn yaglom_endpoints_are_rescaled_survivors() {
  let cone = ConeSpec::half_space(2, 1.2).unwrap();
  let y = yaglom_samples(&cone, &InitialLaw::Point(vec![0.3, 1.0]), 16.0, 2000, 0.05, &YaglomConfig::new(RngStream::new(8, 0)))
    .unwrap();
  assert!(y.points.len() >= 2000);
  assert!(y.points.iter().all(|p| cone.contains(p)));
  assert!(y.survival_rate > 0.0 && y.survival_rate < 1.0);
  let median = {
    let mut h: Vec<f64> = y.points.iter().map(|p| p[1]).collect();
    h.sort_by(f64::total_cmp);
    h[h.len() / 2]
  };
  assert!(median > 0.1 && median < 10.0, "median height {median}");
}

#[test]
fn cost_guard_aborts_rare_conditioning() {
  let cone = ConeSpec::half_line(1.0).unwrap();
  let mut c = YaglomConfig::new(RngStream::new(9, 0));
  c.cost_guard = 0.5;
  let err = yaglom_samples(&cone, &InitialLaw::Point(vec![1.0]), 64.0, 100_000, 0.1, &c).unwrap_err();
  assert!(matches!(err, Error::CostGuard { .. }), "{err:?}");
}

#[test]
fn initial_laws_are_checked() {
  let hl = ConeSpec::half_line(1.5).unwrap();
  assert!(InitialLaw::Point(vec![-1.0]).validate(&hl).is_err());
  assert!(InitialLaw::UniformBox { lo: vec![-0.5], hi: vec![1.0] }.validate(&hl).is_err());
  assert!(InitialLaw::UniformBox { lo: vec![2.0], hi: vec![1.0] }.validate(&hl).is_err());
  assert!(InitialLaw::UniformBox { lo: vec![0.5], hi: vec![2.0] }.validate(&hl).is_ok());
  assert!(InitialLaw::PowerTail { point: vec![1.0], index: 1.2, cap: 10.0 }.validate(&hl).is_err());
  assert!(InitialLaw::PowerTail { point: vec![1.0], index: 2.5, cap: 10.0 }.validate(&hl).is_ok());
}

#[test]
fn survival_curve_is_nonincreasing() {
  let cone = ConeSpec::punctured_line(1.5).unwrap();
  let times: Vec<f64> = (0..7).map(|k| 2f64.powi(k)).collect();
  let c = survival_curve(&cone, &[1.0], &times, 5000, &CurveConfig::new(RngStream::new(10, 0), 0.05)).unwrap();
  assert!(c.value.windows(2).all(|w| w[1] <= w[0]), "{:?}", c.value);
}

#[test]
fn rotating_cone_and_start_leaves_survival_unchanged() {
  let th: f64 = 0.6;
  let frame = vec![th.cos(), -th.sin(), th.sin(), th.cos()];
  let plain = ConeSpec::half_space(2, 1.0).unwrap();
  let turned = plain.clone().with_frame(frame.clone()).unwrap();
  let x = [0.4, 0.8];
  let tx = [frame[0] * x[0] + frame[1] * x[1], frame[2] * x[0] + frame[3] * x[1]];
  assert!(turned.contains(&tx));
  let a = survival(&plain, &x, 1.0, &cfg(40_000, 1.0, 11)).unwrap();
  let b = survival(&turned, &tx, 1.0, &cfg(40_000, 1.0, 12)).unwrap();
  let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
  assert!((a.value - b.value).abs() < 4.0 * se, "{} vs {}", a.value, b.value);
}

/// Fitted once as the largest survival / ((t^{-beta/alpha} + |x|^{alpha-beta} / t) M(x))
/// on half-line grids (alpha 1 and 1.5, |x| <= 256, t = 1), then frozen.
const UPPER_BOUND_C: f64 = 0.551;

#[test]
fn survival_obeys_the_frozen_upper_bound() {
  let cones = [
    ConeSpec::half_line(1.2).unwrap(),
    ConeSpec::punctured_line(1.5).unwrap(),
    ConeSpec::half_space(2, 1.0).unwrap(),
  ];
  for (k, cone) in cones.into_iter().enumerate() {
    let m = cone.martin_kernel().unwrap();
    let (a, b) = (cone.alpha(), m.beta());
    for r in [0.05, 0.3, 1.0, 3.0] {
      for t in [0.1, 1.0, 10.0] {
        let x: Vec<f64> = cone.unit_point().iter().map(|v| v * r).collect();
        let e = survival(&cone, &x, t, &cfg(4000, t, 20 + k as u64)).unwrap();
        let bound = 10.0 * UPPER_BOUND_C * (t.powf(-b / a) + r.powf(a - b) / t) * m.value(&x);
        assert!(e.value <= bound, "{:?} r={r} t={t}: {} > {bound}", cone.kind(), e.value);
      }
    }
  }
}

#[test]
fn monte_carlo_matches_the_grid_solver() {
  let cone = ConeSpec::half_line(1.0).unwrap();
  let op = build_operator(1.0, &Grid1D::new(&cone, 1024.0, 1.0 / 16.0).unwrap()).unwrap();
  let p = op.survival(1.0)[op.grid().nearest(1.0)];
  let e = survival(&cone, &[1.0], 1.0, &McConfig::new(100_000, vec![1e-3, 5e-4], RngStream::new(13, 0))).unwrap();
  let gap = ((e.value - p).abs() - 1.96 * e.stderr).max(0.0) / p;
  assert!(gap <= 0.02, "{} vs grid {p}", e.value);
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
  let cone = ConeSpec::half_space(2, 1.4).unwrap();
  let c = cfg(20_000, 1.0, 14);
  let run = |threads| {
    rayon::ThreadPoolBuilder::new()
      .num_threads(threads)
      .build()
      .unwrap()
      .install(|| survival(&cone, &[0.2, 0.5], 1.0, &c).unwrap())
  };
  assert!(same_bits(&run(1), &run(4)));
}
