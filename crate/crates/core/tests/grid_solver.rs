use stable_cones::cone_geometry::ConeSpec;
use stable_cones::fractional_grid_solver::{
  build_operator, c1_and_mu, decay_check, entrance_evolution_gap, fmt17, grid_cdf, heat_kernel,
  hypercontractivity_check, l1_m2, ou_stationary, psi, psi_on_grid, rho_kernel, Grid1D, GridOperator, StartDensity,
  StationaryOptions,
};
use stable_cones::stable_density::density_1d;

fn op(cone: &ConeSpec, r: f64, h: f64) -> GridOperator {
  build_operator(cone.alpha(), &Grid1D::new(cone, r, h).unwrap()).unwrap()
}

fn hl(alpha: f64) -> ConeSpec {
  ConeSpec::half_line(alpha).unwrap()
}

#[test]
fn grids_reject_bad_windows() {
  let cone = hl(1.5);
  assert!(Grid1D::new(&cone, 1.0, 0.3).is_err());
  assert!(Grid1D::new(&cone, 1.0, 2.0).is_err());
  assert!(Grid1D::new(&ConeSpec::half_space(2, 1.5).unwrap(), 8.0, 0.5).is_err());
  let g = Grid1D::new(&ConeSpec::punctured_line(1.5).unwrap(), 2.0, 0.5).unwrap();
  assert_eq!(g.nodes(), &[-1.5, -1.0, -0.5, 0.5, 1.0, 1.5]);
  assert!(g.quad_weights().iter().all(|w| *w == 0.5));
}

#[test]
fn vertex_correction_matches_frozen_value() {
  // Independent evaluation: direct lattice sum to 2e7 plus a Hurwitz-zeta tail.
  let o = op(&hl(1.5), 128.0, 1.0 / 16.0);
  let d = o.diagonal();
  let delta = d[0] - d[d.len() - 1];
  assert!((delta - 5.894216041927869).abs() < 1e-8 * 5.9, "{delta}");
}

#[test]
fn rows_lose_mass_to_the_exterior() {
  for cone in [hl(1.0), hl(1.7), ConeSpec::punctured_line(1.3).unwrap()] {
    let o = op(&cone, 8.0, 1.0 / 16.0);
    assert!(o.row_sums().iter().all(|s| *s < 0.0));
    let a = o.dense();
    let n = a.nrows();
    assert!((0..n).all(|i| a[[i, i]] <= 0.0 && (0..n).all(|j| i == j || a[[i, j]] >= 0.0)));
  }
}

#[test]
fn plane_waves_see_the_symbol() {
  let o = op(&hl(1.0), 64.0, 1.0 / 128.0);
  let g = o.grid();
  let c: Vec<f64> = g.nodes().iter().map(|x| x.cos()).collect();
  let s: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
  let (ac, asn) = (o.apply(&c), o.apply(&s));
  for (i, x) in g.nodes().iter().enumerate() {
    if (16.0..=48.0).contains(x) {
      let err = ((ac[i] + c[i]).powi(2) + (asn[i] + s[i]).powi(2)).sqrt();
      assert!(err < 1e-2, "x={x}: {err}");
    }
  }
}

#[test]
fn heat_kernels_compose() {
  let o = op(&hl(1.5), 8.0, 1.0 / 16.0);
  for (t, s) in [(0.5, 0.5), (0.25, 1.0), (0.1, 2.0)] {
    let lhs = heat_kernel(&o, t).unwrap().compose(&heat_kernel(&o, s).unwrap());
    let rhs = heat_kernel(&o, t + s).unwrap();
    let err = (&lhs.values - &rhs.values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err < 1e-6, "t={t} s={s}: {err}");
  }
}

#[test]
fn killed_kernel_is_below_the_free_kernel() {
  let o = op(&hl(1.2), 8.0, 1.0 / 16.0);
  let g = o.grid();
  let k = heat_kernel(&o, 0.5).unwrap();
  assert!(k.report().holds());
  for i in (0..g.len()).step_by(7) {
    for j in (0..g.len()).step_by(5) {
      let free = density_1d(1.2, 0.5, g.nodes()[i] - g.nodes()[j]).unwrap();
      assert!(k.values[[i, j]] <= free * (1.0 + 1e-3), "({i}, {j})");
    }
  }
}

#[test]
fn kernel_factorizes_through_survival() {
  let o = op(&hl(1.0), 8.0, 1.0 / 16.0);
  let g = o.grid();
  let k = heat_kernel(&o, 1.0).unwrap();
  let p = k.row_mass();
  for i in (0..g.len()).step_by(4) {
    for j in (0..g.len()).step_by(4) {
      if g.nodes()[i] <= 2.0 && g.nodes()[j] <= 2.0 {
        let r = k.values[[i, j]] / (p[i] * density_1d(1.0, 1.0, g.nodes()[i] - g.nodes()[j]).unwrap() * p[j]);
        assert!((1.0 / 50.0..=50.0).contains(&r), "({i}, {j}): {r}");
      }
    }
  }
}

#[test]
fn conditioned_kernel_is_stochastic_and_bounded() {
  let cone = hl(1.5);
  let big = op(&cone, 1024.0, 1.0 / 16.0);
  let m = big.martin_values();
  let i = big.grid().nearest(1.0);
  let mass = big.evolve(1.0, m)[i] / m[i];
  assert!((mass - 1.0).abs() < 1e-2, "{mass}");

  let small = op(&cone, 16.0, 1.0 / 16.0);
  let g = small.grid();
  let rho = rho_kernel(&heat_kernel(&small, 1.0).unwrap(), small.martin(), g).unwrap();
  let i1 = g.nearest(1.0);
  let max = rho.values.iter().cloned().fold(0.0, f64::max);
  assert!(max <= 10.0 * rho.values[[i1, i1]], "{max}");
}

#[test]
fn conditioned_kernel_scales() {
  // On the grid dilated by 2 = t^{1/alpha}, the operator is A / t exactly.
  let cone = hl(1.5);
  let t = 2f64.powf(1.5);
  let (a, b) = (op(&cone, 8.0, 1.0 / 16.0), op(&cone, 16.0, 1.0 / 8.0));
  let r1 = rho_kernel(&heat_kernel(&a, 1.0).unwrap(), a.martin(), a.grid()).unwrap();
  let rt = rho_kernel(&heat_kernel(&b, t).unwrap(), b.martin(), b.grid()).unwrap();
  let f = t.powf(-(1.0 + 2.0 * 0.75) / 1.5);
  for i in (0..r1.values.nrows()).step_by(9) {
    for j in (0..r1.values.nrows()).step_by(11) {
      let (lhs, rhs) = (rt.values[[i, j]], f * r1.values[[i, j]]);
      assert!((lhs - rhs).abs() < 1e-2 * rhs, "({i}, {j}): {lhs} vs {rhs}");
    }
  }
}

#[test]
fn stationary_density_is_unique_and_normalized() {
  let o = op(&hl(1.0), 32.0, 1.0 / 32.0);
  let run = |start| ou_stationary(&o, &StationaryOptions { start, ..StationaryOptions::default() }).unwrap();
  let (a, b) = (run(StartDensity::Uniform), run(StartDensity::Triangular));
  assert!(a.residual < 1e-6 && b.residual < 1e-6);
  assert!((a.phi.normalization - 1.0).abs() <= 1e-6);
  assert!(l1_m2(o.grid(), o.martin_values(), &a.phi.values, &b.phi.values) < 2e-6);
  let env: Vec<f64> =
    o.grid().nodes().iter().zip(&a.phi.values).filter(|(x, _)| **x <= 16.0).map(|(x, v)| v * (1.0 + x).powf(2.5)).collect();
  let ratio = env.iter().cloned().fold(f64::MIN, f64::max) / env.iter().cloned().fold(f64::MAX, f64::min);
  assert!(ratio < 100.0, "{ratio}");
}

#[test]
fn stationary_iteration_reports_failure() {
  let o = op(&hl(1.5), 16.0, 1.0 / 16.0);
  let opts = StationaryOptions { max_iter: 2, tol: 1e-14, ..StationaryOptions::default() };
  assert!(ou_stationary(&o, &opts).is_err());
}

#[test]
fn entrance_law_scales_and_evolves() {
  let o = op(&hl(1.5), 256.0, 1.0 / 16.0);
  let g = o.grid();
  let phi = ou_stationary(&o, &StationaryOptions::default()).unwrap().phi;
  let b = o.beta();
  for t in [0.5, 3.0] {
    for x in [0.25, 1.0, 7.0] {
      let lhs = psi(&o, &phi, t, x).unwrap();
      let rhs = t.powf(-(1.0 + b) / 1.5) * psi(&o, &phi, 1.0, t.powf(-1.0 / 1.5) * x).unwrap();
      assert!((lhs - rhs).abs() <= 1e-13 * lhs);
    }
  }
  assert!(psi(&o, &phi, 0.01, 200.0).is_err());
  let m = o.martin_values();
  let mass: f64 = psi_on_grid(&o, &phi, 1.0).unwrap().iter().zip(m).map(|(p, w)| p * w * g.spacing()).sum();
  assert!((mass - 1.0).abs() < 1e-2);
  let evolved = o.evolve(0.5, &psi_on_grid(&o, &phi, 0.5).unwrap());
  let i = g.nearest(1.0);
  let want = psi(&o, &phi, 1.0, g.nodes()[i]).unwrap();
  assert!((evolved[i] - want).abs() < 1e-2 * want, "{} vs {want}", evolved[i]);
}

#[test]
fn yaglom_density_is_a_probability() {
  let o = op(&hl(1.0), 256.0, 1.0 / 16.0);
  let phi = ou_stationary(&o, &StationaryOptions::default()).unwrap().phi;
  let (c1, mu) = c1_and_mu(&phi, &o);
  assert!(c1 > 0.0);
  let total: f64 = mu.values.iter().map(|v| v * o.grid().spacing()).sum();
  assert!((total - 1.0).abs() < 1e-8);
  let cdf = grid_cdf(&mu, o.grid());
  assert_eq!(cdf(-1.0), 0.0);
  assert!((cdf(1e9) - 1.0).abs() < 1e-12);
  assert!(cdf(1.0) < cdf(2.0));
}

#[test]
fn decay_of_balanced_data_and_entrance_identity() {
  let o = op(&hl(1.5), 1024.0, 1.0 / 16.0);
  let g = o.grid();
  let (m, h) = (o.martin_values(), g.spacing());
  let phi = ou_stationary(&o, &StationaryOptions::default()).unwrap().phi;
  let (i1, i2) = (g.nearest(1.0), g.nearest(2.0));
  let mut f = vec![0.0; g.len()];
  f[i1] = 1.0 / h;
  f[i2] = -m[i1] / m[i2] / h;
  let table = decay_check(&o, &phi, &f, 2.0, &[1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
  assert!(table.mass.abs() < 1e-12);
  assert!(table.decrease_factor() >= 4.0);
  assert!(table.rows.iter().all(|r| (r.martin_mass - table.mass).abs() <= 1e-3));
  for q in [1.0, 2.0] {
    let gap = entrance_evolution_gap(&o, &phi, q, &[1.0, 2.0, 4.0]).unwrap();
    assert!(gap.iter().all(|v| *v < 1e-2), "q={q}: {gap:?}");
  }
  assert!(decay_check(&o, &phi, &f, 0.5, &[1.0]).is_err());
  assert!(decay_check(&o, &phi, &f, 1.0, &[2.0, 1.0]).is_err());
}

#[test]
fn hypercontractivity_suprema() {
  let q1 = hypercontractivity_check(&op(&hl(1.5), 1024.0, 1.0 / 16.0), 1.0).unwrap();
  assert!((q1.sup - 1.0).abs() <= 1e-2, "{}", q1.sup);
  for cone in [hl(1.2), ConeSpec::punctured_line(1.5).unwrap()] {
    let a = hypercontractivity_check(&op(&cone, 16.0, 1.0 / 16.0), 2.0).unwrap().sup;
    let b = hypercontractivity_check(&op(&cone, 16.0, 1.0 / 32.0), 2.0).unwrap().sup;
    assert!((a - b).abs() < 0.05 * b, "{:?}: {a} vs {b}", cone.kind());
  }
}

#[test]
fn csv_output_keeps_seventeen_digits() {
  let v = 0.1 + 0.2;
  let s = fmt17(v);
  assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
  assert_eq!(s.trim_start_matches('-').split('e').next().unwrap().replace('.', "").len(), 17);
  let o = op(&hl(1.5), 2.0, 0.5);
  let mut out = Vec::new();
  heat_kernel(&o, 1.0).unwrap().write_csv(o.grid(), &mut out).unwrap();
  let text = String::from_utf8(out).unwrap();
  assert_eq!(text.lines().next(), Some("x,y,value"));
  assert_eq!(text.lines().count(), 1 + 9);
}
