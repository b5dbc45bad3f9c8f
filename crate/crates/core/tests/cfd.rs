use std::fs;

use vortexcast::cfd::*;
use vortexcast::Error;

/// Quarter-scale channel with one cylinder spanning eight cells.
fn small_channel() -> SolverConfig {
    SolverConfig {
        nx: 64,
        ny: 32,
        domain_width: 0.08,
        domain_height: 0.04,
        cylinders: vec![Cylinder {
            center_x: 0.02,
            center_y: 0.02,
            diameter: 0.01,
        }],
        n_steps: 60,
        ..SolverConfig::default()
    }
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn uniform_inflow_is_steady() {
    let cfg = SolverConfig {
        nx: 32,
        ny: 16,
        cylinders: vec![],
        n_steps: 50,
        ..SolverConfig::default()
    };
    let mut s = Solver::new(&cfg).unwrap();
    for _ in 0..cfg.n_steps {
        s.step().unwrap();
    }
    let (u, v) = s.face_velocities();
    assert!(u.data().iter().all(|&x| (x - 0.3).abs() <= 1e-10));
    assert!(max_abs(v.data()) <= 1e-10);
    assert!(max_abs(s.snapshot().p.data()) <= 1e-10);
}

#[test]
fn taylor_green_energy_decay() {
    let nu = 0.01;
    let dt = 0.002;
    let cfg = SolverConfig::periodic_box(64, 1.0, 1.0, nu, dt, 100);
    let k = 2.0 * std::f64::consts::PI;
    let mut s = Solver::new(&cfg).unwrap();
    let e0 = s.kinetic_energy();
    let mut last = e0;
    for n in 1..=100 {
        let st = s.step().unwrap();
        assert!(st.divergence <= 10.0 * cfg.poisson_tolerance);
        let e = s.kinetic_energy();
        assert!(e <= last, "energy increased at step {n}");
        last = e;
        let exact = (-4.0 * nu * k * k * n as f64 * dt).exp();
        let rel = (e / e0 - exact).abs() / exact;
        assert!(rel < 0.02, "step {n}: ratio {} vs {exact}", e / e0);
    }
}

#[test]
fn solid_cells_stay_at_rest_and_flow_stays_solenoidal() {
    let cfg = small_channel();
    let mut s = Solver::new(&cfg).unwrap();
    let mask = s.solid_mask();
    assert!(mask.iter().filter(|&&m| m).count() > 30);
    for _ in 0..cfg.n_steps {
        let st = s.step().unwrap();
        assert!(st.divergence <= 10.0 * cfg.poisson_tolerance, "divergence {}", st.divergence);
        assert!((s.max_divergence() - st.divergence).abs() < 1e-15);
        let snap = s.snapshot();
        for (k, &solid) in mask.iter().enumerate() {
            if solid {
                assert_eq!(snap.u.data()[k], 0.0);
                assert_eq!(snap.v.data()[k], 0.0);
            }
        }
    }
}

#[test]
fn symmetric_start_has_no_lift_and_positive_drag() {
    // The red-black sweep order is not mirror symmetric, so the
    // pressure solve must be tight for the lift to vanish.
    let cfg = SolverConfig {
        perturbation: 0.0,
        poisson_tolerance: 1e-12,
        ..small_channel()
    };
    let out = run_simulation(&cfg).unwrap();
    assert_eq!(out.forces.len(), cfg.n_steps);
    let last = out.forces.last().unwrap();
    assert!(last.lift.abs() < 1e-8, "lift {}", last.lift);
    assert!(last.drag > 0.5, "drag {}", last.drag);
}

#[test]
fn first_order_in_time() {
    let run = |dt: f64, steps: usize| {
        let cfg = SolverConfig {
            poisson_tolerance: 1e-12,
            ..SolverConfig::periodic_box(32, 1.0, 1.0, 0.01, dt, steps)
        };
        let tau = 2.0 * std::f64::consts::PI;
        let mut s = Solver::with_initial(
            &cfg,
            |x, y| (tau * y).sin() + 0.3 * (tau * x).sin() * (2.0 * tau * y).cos(),
            |x, y| 0.5 * (tau * x).cos() + 0.2 * (tau * (x + y)).sin(),
        )
        .unwrap();
        for _ in 0..steps {
            s.step().unwrap();
        }
        s.face_velocities().0
    };
    let dt = 0.01;
    let a = run(dt, 10);
    let b = run(dt / 2.0, 20);
    let c = run(dt / 4.0, 40);
    let e1 = a.max_abs_diff(&b).unwrap();
    let e2 = b.max_abs_diff(&c).unwrap();
    assert!(e1 > 0.0 && e1 < dt, "e1 = {e1}");
    assert!(e1 / e2 > 1.7, "successive differences {e1} then {e2}");
}

#[test]
fn snapshot_cadence() {
    let cfg = SolverConfig {
        nx: 16,
        ny: 8,
        domain_width: 0.32,
        domain_height: 0.16,
        dt: 0.02 / 4.0,
        cylinders: vec![],
        n_steps: 20_000,
        sample_interval: 0.1,
        ..SolverConfig::default()
    };
    let out = run_simulation(&cfg).unwrap();
    assert_eq!(out.snapshots.len(), 1000);
    assert_eq!(out.forces.len(), 0, "no cylinders, no force records");
    for (k, snap) in out.snapshots.iter().enumerate().step_by(97) {
        assert!((snap.t - (k + 1) as f64 * 0.1).abs() < 1e-9);
        assert_eq!(snap.u.shape(), [8, 16]);
    }
    let empty = run_simulation(&SolverConfig {
        n_steps: 0,
        ..small_channel()
    })
    .unwrap();
    assert!(empty.snapshots.is_empty() && empty.forces.is_empty());
}

#[test]
fn identical_configs_write_identical_files() {
    let cfg = SolverConfig {
        n_steps: 40,
        sample_interval: 0.01,
        ..small_channel()
    };
    let root = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let mut w = SnapshotWriter::create(&root.path().join(name), &cfg).unwrap();
        run_simulation_with(&cfg, &mut w).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(root.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 3 * 4 + 2);
    for n in names {
        let a = fs::read(root.path().join("a").join(&n)).unwrap();
        let b = fs::read(root.path().join("b").join(&n)).unwrap();
        assert_eq!(a, b, "{n:?} differs");
    }
}

#[test]
fn snapshot_directory_round_trip() {
    let cfg = SolverConfig {
        n_steps: 20,
        sample_interval: 0.005,
        ..small_channel()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut w = SnapshotWriter::create(dir.path(), &cfg).unwrap();
    run_simulation_with(&cfg, &mut w).unwrap();
    let mem = run_simulation(&cfg).unwrap();
    let disk = SnapshotDir::open(dir.path()).unwrap();
    assert_eq!(disk.count, 4);
    assert_eq!(disk.cfg, cfg);
    for (k, snap) in mem.snapshots.iter().enumerate() {
        let back = disk.load(k).unwrap();
        assert!((back.t - snap.t).abs() < 1e-12);
        for (x, y) in [(&back.u, &snap.u), (&back.v, &snap.v), (&back.p, &snap.p)] {
            let tol = 1e-6 * (1.0 + max_abs(y.data()));
            assert!(x.max_abs_diff(y).unwrap() <= tol);
        }
    }
    assert!(disk.load(4).is_err());
    let forces = disk.forces().unwrap();
    assert_eq!(forces, mem.forces);
}

#[test]
fn solver_failures_are_reported() {
    let cfg = SolverConfig {
        max_poisson_iterations: 1,
        poisson_tolerance: 1e-12,
        ..small_channel()
    };
    match run_simulation(&cfg) {
        Err(Error::PoissonNotConverged { iterations, residual, .. }) => {
            assert!(iterations >= 1);
            assert!(residual > 1e-12);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
    let poisoned = Solver::with_initial(&small_channel(), |x, _| if x > 0.05 { f64::NAN } else { 0.3 }, |_, _| 0.0);
    assert!(matches!(poisoned, Err(Error::NonFinite { step: 0 })));
}

fn lift_records(f: impl Fn(f64) -> f64, dt: f64, steps: usize) -> Vec<ForceRecord> {
    (1..=steps)
        .map(|n| {
            let t = n as f64 * dt;
            ForceRecord {
                t,
                cylinder: 0,
                drag: 1.0,
                lift: f(t),
            }
        })
        .collect()
}

#[test]
fn strouhal_of_synthetic_sine() {
    let cfg = SolverConfig::default();
    let rec = lift_records(|t| (2.0 * std::f64::consts::PI * 5.0 * t).sin(), cfg.dt, 4000);
    let st = strouhal(&rec, &cfg, 0).unwrap();
    let expect = 5.0 * 0.01 / 0.3;
    assert!((st - expect).abs() < 1e-3 * expect, "St = {st}");
}

#[test]
fn strouhal_rejects_flat_noisy_and_short_signals() {
    let cfg = SolverConfig::default();
    let flat = lift_records(|_| 0.7, cfg.dt, 4000);
    assert!(matches!(strouhal(&flat, &cfg, 0), Err(Error::NoShedding)));
    assert_eq!(strouhal(&flat, &cfg, 0).unwrap_err().to_string(), "no shedding detected");

    let mut rng = vortexcast::Rng::new(5);
    let noise: Vec<ForceRecord> = lift_records(|_| 0.0, cfg.dt, 4000)
        .into_iter()
        .map(|r| ForceRecord {
            lift: rng.next_f64() - 0.5,
            ..r
        })
        .collect();
    assert!(matches!(strouhal(&noise, &cfg, 0), Err(Error::NoShedding)));

    let short = lift_records(|t| (2.0 * std::f64::consts::PI * 5.0 * t).sin(), cfg.dt, 1200);
    assert!(strouhal(&short, &cfg, 0).is_err(), "4.5 periods after the cutoff");
    assert!(strouhal(&short, &cfg, 3).is_err());
}
