use cardio_amg::ionic::{eval_ion_current, ionic_step, IonicState};
use cardio_amg::sparsekit::vector::mean;
use cardio_amg::stepper::{elliptic_solve, parabolic_solve, run_with_systems, time_step, Systems, TraceMeans};
use cardio_amg::{
    run_simulation, EllipticPrecond, IonicModel, MeshSpec, PcgOptions, RogersMcCulloch, RogersMcCullochParams,
    SimState, SimulationConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn box_config(n: [usize; 3], t_end: f64) -> SimulationConfig {
    SimulationConfig {
        mesh: MeshSpec::Box {
            lengths: [1.0, 1.0, 0.5],
            n,
        },
        t_end,
        ..SimulationConfig::default()
    }
}

fn dense(a: &cardio_amg::CsrMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.n_rows(), a.n_cols(), &a.to_dense())
}

/// Rogers–McCulloch without the closed-form override, to exercise the
/// generic Newton path.
struct GenericRm(RogersMcCulloch);

impl IonicModel for GenericRm {
    fn name(&self) -> &str {
        "generic"
    }
    fn n_w(&self) -> usize {
        1
    }
    fn n_c(&self) -> usize {
        0
    }
    fn resting_state(&self) -> (f64, Vec<f64>, Vec<f64>) {
        self.0.resting_state()
    }
    fn peak_potential(&self) -> f64 {
        self.0.peak_potential()
    }
    fn gating_rate(&self, v: f64, w: &[f64], out: &mut [f64]) {
        self.0.gating_rate(v, w, out)
    }
    fn ion_current(&self, v: f64, w: &[f64], c: &[f64]) -> f64 {
        self.0.ion_current(v, w, c)
    }
}

#[test]
fn gating_update_matches_closed_form() {
    let p = RogersMcCullochParams::default();
    let model = RogersMcCulloch::default();
    let dt = 0.05;
    // u = 1 in normalized units
    let v = p.v_rest + p.v_amp;
    for w0 in [0.0, 0.3, -0.2, 1.7] {
        let expect = (w0 + dt * p.eta2 * 1.0 / p.v_p) / (1.0 + dt * p.eta2 * p.eta3);
        let mut w = [w0];
        model.backward_euler(0, v, &mut w, &mut [], dt).unwrap();
        assert!((w[0] - expect).abs() < 1e-15);
        let mut w = [w0];
        GenericRm(model.clone())
            .backward_euler(0, v, &mut w, &mut [], dt)
            .unwrap();
        assert!((w[0] - expect).abs() < 1e-12);
    }
}

#[test]
fn ion_current_matches_scalar_formula() {
    let p = RogersMcCullochParams::default();
    let model = RogersMcCulloch::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v: Vec<f64> = (0..500).map(|_| rng.gen_range(-100.0..40.0)).collect();
    let state = IonicState {
        w: (0..500).map(|_| rng.gen_range(-0.5..2.0)).collect(),
        c: Vec::new(),
    };
    let i = eval_ion_current(&model, &v, &state).unwrap();
    for k in 0..500 {
        let u = (v[k] + 85.0) / 100.0;
        let w = state.w[k];
        let want = 100.0 * (p.g * u * (1.0 - u / 0.13) * (1.0 - u) + 4.4 * u * w);
        assert!((i[k] - want).abs() <= 1e-14 * want.abs().max(1.0));
    }
    // roots of the cubic
    assert_eq!(model.ion_current(-85.0, &[0.3], &[]), 0.0);
    assert!(model.ion_current(15.0, &[0.0], &[]).abs() < 1e-12);
}

#[test]
fn resting_state_is_a_fixed_point_of_the_gating_step() {
    let model = RogersMcCulloch::default();
    let v = vec![-85.0; 10];
    let mut s = IonicState::resting(&model, 10);
    ionic_step(&model, &v, &mut s, 0.5).unwrap();
    assert!(s.w.iter().all(|&w| w == 0.0));
}

#[test]
fn elliptic_solve_matches_pseudoinverse() {
    let cfg = box_config([4, 4, 4], 0.05);
    let sys = Systems::build(cfg.mesh.build().unwrap(), &cfg).unwrap();
    let n = sys.mesh.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-85.0..15.0)).collect();
    let opts = PcgOptions::default().with_rtol(1e-13);
    let (u, stats) = elliptic_solve(
        &sys.elliptic_matrix,
        &sys.a_i,
        &v,
        None,
        sys.elliptic_pc.as_ref(),
        &opts,
    )
    .unwrap();
    assert!(stats.converged);

    let b = -(dense(&sys.a_i) * DVector::from_column_slice(&v));
    let oracle = dense(&sys.elliptic_matrix).pseudo_inverse(1e-10).unwrap() * b;
    let scale = oracle.amax().max(1.0);
    for (x, y) in u.iter().zip(oracle.iter()) {
        assert!((x - y).abs() <= 1e-7 * scale);
    }
    assert!(mean(&u).abs() <= 1e-12 * scale);
}

#[test]
fn constant_potential_gives_zero_extracellular_field() {
    let cfg = box_config([4, 4, 4], 0.05);
    let sys = Systems::build(cfg.mesh.build().unwrap(), &cfg).unwrap();
    let v = vec![-20.0; sys.mesh.n_nodes()];
    let (u, _) = elliptic_solve(
        &sys.elliptic_matrix,
        &sys.a_i,
        &v,
        None,
        sys.elliptic_pc.as_ref(),
        &PcgOptions::default(),
    )
    .unwrap();
    assert!(u.iter().all(|x| x.abs() < 1e-9));
}

#[test]
fn parabolic_step_matches_dense_solve() {
    let cfg = box_config([8, 8, 8], 0.05);
    let sys = Systems::build(cfg.mesh.build().unwrap(), &cfg).unwrap();
    let n = sys.mesh.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-85.0..15.0)).collect();
    let u_e: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let i_ion: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
    let i_app = sys.applied_current(0.0);
    let opts = PcgOptions::default().with_rtol(1e-13);
    let (v1, _) = parabolic_solve(
        &sys.parabolic_matrix,
        &sys.mass,
        &sys.a_i,
        &v,
        &u_e,
        &i_ion,
        &i_app,
        cfg.dt,
        cfg.c_m,
        sys.parabolic_pc.as_ref(),
        &opts,
    )
    .unwrap();

    // assemble the system from the pieces independently of the stepper
    let m = DMatrix::from_diagonal(&DVector::from_column_slice(&sys.mass.diag));
    let ai = dense(&sys.a_i);
    let lhs = &m * (cfg.c_m / cfg.dt) + &ai;
    let vv = DVector::from_column_slice(&v);
    let rhs = &m * (cfg.c_m / cfg.dt) * &vv
        - &ai * DVector::from_column_slice(&u_e)
        - &m * DVector::from_column_slice(&i_ion)
        + &m * DVector::from_column_slice(&i_app);
    let oracle = lhs.lu().solve(&rhs).unwrap();
    for (x, y) in v1.iter().zip(oracle.iter()) {
        assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0));
    }
}

#[test]
fn rest_without_stimulus_stays_at_rest() {
    let mut cfg = box_config([6, 6, 3], 0.5);
    cfg.stimulus = None;
    let out = run_simulation(&cfg).unwrap();
    assert!(out.state.v.iter().all(|&v| (v + 85.0).abs() <= 1e-5 * 85.0));
    assert!(out.state.ionic.w.iter().all(|w| w.abs() < 1e-12));
    assert_eq!(out.summary.activated_nodes, 0);
}

#[test]
fn stimulated_region_depolarizes_on_first_step() {
    let cfg = box_config([8, 8, 4], 0.05);
    let out = run_simulation(&cfg).unwrap();
    assert_eq!(out.trace.len(), 1);
    let sys = Systems::build(cfg.mesh.build().unwrap(), &cfg).unwrap();
    let mut hit = 0;
    for (k, &m) in sys.stimulus_mask.iter().enumerate() {
        if m {
            assert!(out.state.v[k] > -85.0, "node {k}: {}", out.state.v[k]);
            hit += 1;
        }
    }
    assert!(hit > 0);
}

#[test]
fn split_run_equals_single_run_bitwise() {
    let mut cfg = box_config([6, 6, 3], 1.0);
    cfg.stimulus.as_mut().unwrap().duration = 0.5;
    let model = RogersMcCulloch::new(cfg.ionic).unwrap();
    let n_steps = cfg.n_steps();

    let sys = Systems::build(cfg.mesh.build().unwrap(), &cfg).unwrap();
    let mut full = SimState::resting(&model, sys.mesh.n_nodes());
    let mut full_its = Vec::new();
    for _ in 0..n_steps {
        let r = time_step(&mut full, &sys, &model, &cfg).unwrap();
        full_its.push((r.elliptic.iterations, r.parabolic.iterations));
    }

    let mut half = SimState::resting(&model, sys.mesh.n_nodes());
    let mut its = Vec::new();
    for _ in 0..n_steps / 2 {
        let r = time_step(&mut half, &sys, &model, &cfg).unwrap();
        its.push((r.elliptic.iterations, r.parabolic.iterations));
    }
    // second half on freshly built systems from the same configuration
    let sys2 = Systems::build(cfg.mesh.build().unwrap(), &cfg).unwrap();
    let mut resumed = half.clone();
    for _ in n_steps / 2..n_steps {
        let r = time_step(&mut resumed, &sys2, &model, &cfg).unwrap();
        its.push((r.elliptic.iterations, r.parabolic.iterations));
    }
    assert_eq!(its, full_its);
    assert_eq!(resumed.step, full.step);
    assert!(resumed.v.iter().zip(&full.v).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(resumed
        .u_e
        .iter()
        .zip(&full.u_e)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(resumed
        .ionic
        .w
        .iter()
        .zip(&full.ionic.w)
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    let out = run_with_systems(&sys, &cfg).unwrap();
    assert!(out.state.v.iter().zip(&full.v).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn summary_means_are_trace_means() {
    let cfg = box_config([6, 6, 3], 0.3);
    let out = run_simulation(&cfg).unwrap();
    assert_eq!(out.trace.len(), 6);
    let n = out.trace.len() as f64;
    let it: f64 = out.trace.iter().map(|r| r.elliptic.iterations as f64).sum::<f64>() / n;
    let ip: f64 = out.trace.iter().map(|r| r.parabolic.iterations as f64).sum::<f64>() / n;
    let te: f64 = out.trace.iter().map(|r| r.elliptic.wall_time).sum::<f64>() / n;
    let s = &out.summary.all_steps;
    assert!((s.it_ellip - it).abs() < 1e-12 && (s.it_parab - ip).abs() < 1e-12 && (s.t_ellip_s - te).abs() < 1e-12);
    assert_eq!(out.summary.after_first, TraceMeans::of(&out.trace[1..]));
    for (k, r) in out.trace.iter().enumerate() {
        assert_eq!(r.step, k + 1);
    }
}

#[test]
fn amg_needs_fewer_iterations_than_identity() {
    let cfg = SimulationConfig {
        mesh: MeshSpec::ellipsoid([16, 16, 16]),
        ..SimulationConfig::default()
    };
    let mesh = cfg.mesh.build().unwrap();
    let mut sys = Systems::build(mesh, &cfg).unwrap();
    let n = sys.mesh.n_nodes();
    let v: Vec<f64> = sys
        .mesh
        .nodes()
        .iter()
        .map(|p| -85.0 + 50.0 * (3.0 * p[2]).sin())
        .collect();
    let opts = PcgOptions::default();
    let (_, amg) = elliptic_solve(
        &sys.elliptic_matrix,
        &sys.a_i,
        &v,
        None,
        sys.elliptic_pc.as_ref(),
        &opts,
    )
    .unwrap();
    sys.replace_elliptic_precond(&EllipticPrecond::Identity).unwrap();
    let (_, plain) = elliptic_solve(
        &sys.elliptic_matrix,
        &sys.a_i,
        &v,
        None,
        sys.elliptic_pc.as_ref(),
        &opts,
    )
    .unwrap();
    assert!(n > 4000);
    assert!(amg.converged && plain.converged);
    assert!(
        amg.iterations < plain.iterations,
        "amg {} vs identity {}",
        amg.iterations,
        plain.iterations
    );
}
