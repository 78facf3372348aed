//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured figures. The heavy sweeps serialize on a shared lock
//! so wall-clock budgets are measured without contention.

use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neplate::experiments::{
    run_recovery_study, run_scaling, ExperimentConfig, ImmersionSpec, MetricSpec, Verdict,
};
use neplate::grid::{Grid3, Mesh2};
use neplate::kirchhoff::{build_immersion, ImmersionCatalog};
use neplate::metric::{gaussian_curvature, riemann_flat_3d, CatalogMetric, MetricField};
use neplate::plate::{
    energy_gradient, energy_ih, init_deformation, minimize_ih, DeformationField3D, InitKind,
    MinimizeOptions, Quadrature,
};
use neplate::recovery::build_recovery;
use neplate::rigidity::{rigidity_sweep, SamplerSpec};
use neplate::sampling;
use neplate::wells::{
    hessian_form_fd, project_sym_ainv, project_sym_ainv_block, q2, q2_bruteforce, q3,
    SquaredDistanceWell,
};

static HEAVY: Mutex<()> = Mutex::new(());

fn random_matrix2(rng: &mut ChaCha8Rng) -> Matrix2<f64> {
    Matrix2::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

fn random_matrix3(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn criterion_01_q2_closed_form_matches_bruteforce() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a_tan = sampling::random_spd2::<f64, _>(&mut rng, 50.0);
        let f_tan = random_matrix2(&mut rng);
        let closed = q2(&a_tan, &f_tan).unwrap();
        let brute = q2_bruteforce(&a_tan, &f_tan).unwrap();
        let rel = (closed - brute).abs() / (1.0 + closed.abs());
        worst = worst.max(rel);
        assert!(
            rel <= 1e-8,
            "closed {closed} vs brute-force {brute} (rel {rel})"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 5.0, "runtime {elapsed:.2}s exceeds 5s");
    println!(
        "ACCEPTANCE 1 (Q2 closed form vs oracle): PASS  worst rel {worst:.2e}, {elapsed:.2}s"
    );
}

#[test]
fn criterion_02_projection_consistency() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    for _ in 0..1000 {
        let frame = sampling::random_block_frame::<f64, _>(&mut rng);
        let f = random_matrix3(&mut rng);
        let lyapunov = project_sym_ainv(&f, &frame.a).unwrap();
        let block = project_sym_ainv_block(&f, &frame).unwrap();
        assert!(
            (lyapunov - block).norm() <= 1e-10 * (1.0 + lyapunov.norm()),
            "Lyapunov and block projections disagree by {}",
            (lyapunov - block).norm()
        );
        // Idempotence and self-adjointness.
        let pp = project_sym_ainv(&lyapunov, &frame.a).unwrap();
        assert!((pp - lyapunov).norm() <= 1e-10 * (1.0 + lyapunov.norm()));
        let g = random_matrix3(&mut rng);
        let pg = project_sym_ainv(&g, &frame.a).unwrap();
        assert!((lyapunov.dot(&g) - f.dot(&pg)).abs() <= 1e-10);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 5.0, "runtime {elapsed:.2}s exceeds 5s");
    println!("ACCEPTANCE 2 (projection consistency): PASS  {elapsed:.2}s");
}

#[test]
fn criterion_03_hessian_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let energy = SquaredDistanceWell;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let frame = sampling::random_block_frame::<f64, _>(&mut rng);
        let dir = random_matrix3(&mut rng);
        let analytic = q3(&frame.a, &dir).unwrap();
        let fd = hessian_form_fd(&energy, &frame, &dir, 1e-4);
        let rel = (analytic - fd).abs() / (1.0 + analytic.abs());
        worst = worst.max(rel);
        assert!(rel <= 1e-4, "q3 {analytic} vs second difference {fd}");
    }
    println!("ACCEPTANCE 3 (Hessian identity): PASS  worst rel {worst:.2e}");
}

#[test]
fn criterion_04_gradient_check() {
    let metric = MetricField::<f64>::catalog(CatalogMetric::Sphere);
    let mesh = Mesh2::new(metric.domain(), 8, 8);
    let grid = Grid3::new(mesh, 3, 0.1).unwrap();
    let flat = init_deformation(InitKind::Flat, &grid).unwrap();
    let u = init_deformation(
        InitKind::Perturbed {
            base: &flat,
            amplitude: 0.05,
            seed: 1004,
        },
        &grid,
    )
    .unwrap();
    let grad = energy_gradient(&u, &metric, &grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let dir: Vec<Vector3<f64>> = (0..grid.n_nodes())
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let eps = 1e-6;
        let shifted = |sign: f64| DeformationField3D {
            grid,
            u: u.u
                .iter()
                .zip(&dir)
                .map(|(v, d)| v + d * (sign * eps))
                .collect(),
        };
        let ep = energy_ih(&shifted(1.0), &metric, &grid).unwrap();
        let em = energy_ih(&shifted(-1.0), &metric, &grid).unwrap();
        let fd = (ep - em) / (2.0 * eps);
        let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g.dot(d)).sum();
        let rel = (fd - analytic).abs() / (1.0 + analytic.abs());
        worst = worst.max(rel);
        assert!(rel <= 1e-5, "directional fd {fd} vs analytic {analytic}");
    }
    println!("ACCEPTANCE 4 (gradient check): PASS  worst rel {worst:.2e}");
}

#[test]
fn criterion_05_flat_metric_scaling() {
    let _lock = HEAVY.lock().unwrap();
    let start = Instant::now();

    // Identity: the flat start realizes the well exactly at every h.
    let identity_cfg = ExperimentConfig {
        metric: MetricSpec::Catalog("identity".into()),
        nx: 32,
        ny: 32,
        nz: 7,
        h_list: vec![0.2, 0.1, 0.05, 0.025],
        ..Default::default()
    };
    let identity = run_scaling(&identity_cfg).unwrap();
    assert_eq!(identity.verdict, Verdict::Flat, "identity rows {:?}", identity.rows);
    for row in &identity.rows {
        assert!(
            row.min_energy <= 1e-12,
            "identity min energy {} at h={}",
            row.min_energy,
            row.h
        );
    }

    // Polar-flat: descent digs to the discrete floor of the flat well.
    let polar_cfg = ExperimentConfig {
        metric: MetricSpec::Catalog("polar_flat".into()),
        immersion: Some(ImmersionSpec::Catalog("polar".into())),
        nx: 32,
        ny: 32,
        nz: 7,
        h_list: vec![0.2, 0.1, 0.05, 0.025],
        ..Default::default()
    };
    let polar = run_scaling(&polar_cfg).unwrap();
    assert_eq!(
        polar.verdict,
        Verdict::Flat,
        "polar rows {:?}",
        polar.rows
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 300.0, "runtime {elapsed:.0}s exceeds 5 min");
    println!(
        "ACCEPTANCE 5 (flat-metric scaling): PASS  verdicts flat/flat, {elapsed:.0}s"
    );
}

#[test]
fn criterion_06_nonflat_lower_bound() {
    let _lock = HEAVY.lock().unwrap();
    let start = Instant::now();
    let cfg = ExperimentConfig {
        metric: MetricSpec::Catalog("sphere".into()),
        immersion: Some(ImmersionSpec::Catalog("sphere_cap".into())),
        nx: 32,
        ny: 32,
        nz: 7,
        h_list: vec![0.12, 0.11, 0.1, 0.09],
        ..Default::default()
    };
    let result = run_scaling(&cfg).unwrap();
    let first = result.rows.first().unwrap().min_energy_over_h2;
    let last = result.rows.last().unwrap().min_energy_over_h2;
    assert!(
        last >= 0.1 * first,
        "min energy/h2 collapsed: {first:.3e} -> {last:.3e}"
    );
    assert_eq!(
        result.verdict,
        Verdict::ImmersibleW22,
        "rows {:?}",
        result.rows
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 600.0, "runtime {elapsed:.0}s exceeds 10 min");
    println!(
        "ACCEPTANCE 6 (non-flat lower bound): PASS  /h2 range [{last:.3e}, {first:.3e}], {elapsed:.0}s"
    );
}

#[test]
fn criterion_07_gamma_limsup_identity() {
    let _lock = HEAVY.lock().unwrap();
    let start = Instant::now();
    for (metric_tag, immersion_tag) in
        [("sphere", "sphere_cap"), ("hyperbolic", "hyperbolic_band")]
    {
        let cfg = ExperimentConfig {
            metric: MetricSpec::Catalog(metric_tag.into()),
            immersion: Some(ImmersionSpec::Catalog(immersion_tag.into())),
            nx: 48,
            ny: 48,
            nz: 7,
            h_list: vec![0.2, 0.1, 0.05, 0.025],
            ..Default::default()
        };
        let rows = run_recovery_study(&cfg).unwrap();
        let errors: Vec<f64> = rows
            .iter()
            .map(|r| (r.ratio.expect("positive limit") - 1.0).abs())
            .collect();
        let final_error = *errors.last().unwrap();
        assert!(
            final_error <= 0.10,
            "{metric_tag}: |ratio-1| = {final_error:.4} at h=0.025 (errors {errors:?})"
        );
        for pair in errors.windows(2) {
            assert!(
                pair[1] < pair[0],
                "{metric_tag}: error sequence not decreasing: {errors:?}"
            );
        }
        println!(
            "  {metric_tag}: errors {:?}",
            errors.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>()
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 300.0, "runtime {elapsed:.0}s exceeds 5 min");
    println!("ACCEPTANCE 7 (Gamma-limsup identity): PASS  {elapsed:.0}s");
}

#[test]
fn criterion_08_upper_bound_competitor() {
    let _lock = HEAVY.lock().unwrap();
    let metric = MetricField::<f64>::catalog(CatalogMetric::Sphere);
    let mesh = Mesh2::new(metric.domain(), 32, 32);
    let grid = Grid3::new(mesh, 7, 0.05).unwrap();
    let y = build_immersion(ImmersionCatalog::SphereCap, mesh);
    let u0 = build_recovery(&y, &metric, &grid).unwrap();
    let recovery_energy = energy_ih(&u0, &metric, &grid).unwrap();
    let (_, report) = minimize_ih(&metric, &grid, &u0, &MinimizeOptions::default()).unwrap();
    assert!(
        report.energy <= recovery_energy + 1e-10,
        "minimized {} exceeds recovery {}",
        report.energy,
        recovery_energy
    );
    println!(
        "ACCEPTANCE 8 (upper-bound competitor): PASS  {:.4e} <= {:.4e}",
        report.energy, recovery_energy
    );
}

#[test]
fn criterion_09_rigidity_sweep() {
    let _lock = HEAVY.lock().unwrap();
    let spec = SamplerSpec::default();
    let mut summaries = Vec::new();
    for tag in ["identity", "sphere"] {
        let metric = match tag {
            "identity" => MetricField::<f64>::catalog(CatalogMetric::Identity),
            _ => MetricField::catalog(CatalogMetric::Sphere),
        };
        let mesh = Mesh2::new(metric.domain(), 10, 10);
        let grid = Grid3::new(mesh, 5, 0.1).unwrap();
        let report = rigidity_sweep(&metric, &grid, &spec, 500, 2024).unwrap();
        // Tautological by construction, asserted anyway: no sample violates
        // lhs <= C_obs (well + geometry).
        for rec in &report.records {
            if rec.ratio.is_some() {
                assert!(
                    rec.lhs <= report.c_obs * (rec.well_term + rec.geometry_term) + 1e-12
                );
            }
            if tag == "identity" {
                assert_eq!(rec.geometry_term, 0.0);
            }
        }
        assert!(report.c_obs.is_finite());
        if tag == "identity" {
            let again = rigidity_sweep(&metric, &grid, &spec, 500, 2024).unwrap();
            assert_eq!(report.c_obs.to_bits(), again.c_obs.to_bits());
        }
        summaries.push(format!("{tag}: C_obs {:.3e}", report.c_obs));
    }
    println!("ACCEPTANCE 9 (rigidity sweep): PASS  {}", summaries.join(", "));
}

#[test]
fn criterion_10_geometry_suite() {
    // Analytic curvature of the curved catalog metrics.
    let sphere = MetricField::<f64>::catalog(CatalogMetric::Sphere);
    let hyper = MetricField::<f64>::catalog(CatalogMetric::Hyperbolic);
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for _ in 0..200 {
        let r = sphere.domain();
        let x1 = rng.random_range(r.x0..=r.x1);
        let x2 = rng.random_range(r.y0..=r.y1);
        let k = gaussian_curvature(&sphere, x1, x2).unwrap();
        assert!((k - 1.0).abs() <= 1e-6, "sphere curvature {k} at ({x1},{x2})");
        let r = hyper.domain();
        let x1 = rng.random_range(r.x0..=r.x1);
        let x2 = rng.random_range(r.y0..=r.y1);
        let k = gaussian_curvature(&hyper, x1, x2).unwrap();
        assert!((k + 1.0).abs() <= 1e-6, "hyperbolic curvature {k}");
    }

    // Sampled path on 64x64 grids.
    let mut worst_sampled: f64 = 0.0;
    for (field, expected) in [(&sphere, 1.0), (&hyper, -1.0)] {
        let mesh = Mesh2::new(field.domain(), 64, 64);
        let sampled =
            MetricField::sample_fn(mesh, |x1, x2| field.g_tan(x1, x2).unwrap()).unwrap();
        for j in 1..mesh.ny - 1 {
            for i in 1..mesh.nx - 1 {
                let (x1, x2) = mesh.node_pos(i, j);
                let k = gaussian_curvature(&sampled, x1, x2).unwrap();
                let err = (k - expected).abs();
                worst_sampled = worst_sampled.max(err);
                assert!(
                    err <= 1e-4,
                    "sampled curvature {k} vs {expected} at ({x1},{x2})"
                );
            }
        }
    }

    // Pullback flatness at the sampled tolerance.
    let diffeos: [(fn(f64, f64) -> Matrix2<f64>, &str); 2] = [
        (
            |x1, x2| {
                // φ = (x₁ + 0.1 sin(πx₂), x₂ + 0.1 x₁²)
                Matrix2::new(
                    1.0,
                    0.1 * std::f64::consts::PI * (std::f64::consts::PI * x2).cos(),
                    0.2 * x1,
                    1.0,
                )
            },
            "shear-sine",
        ),
        (
            |x1, x2| {
                // φ = (x₁ + 0.08 x₂³ + 0.05 x₁²x₂, x₂ + 0.06 x₁²): polynomial,
                // so the sampled-path stencils are exact on its pullback.
                Matrix2::new(
                    1.0 + 0.1 * x1 * x2,
                    0.24 * x2 * x2 + 0.05 * x1 * x1,
                    0.12 * x1,
                    1.0,
                )
            },
            "polynomial",
        ),
    ];
    for (jac, name) in diffeos {
        let mesh = Mesh2::new(neplate::grid::Rect::<f64>::unit(), 97, 97);
        let pullback = MetricField::sample_fn(mesh, |x1, x2| {
            let j = jac(x1, x2);
            j.transpose() * j
        })
        .unwrap();
        let report = riemann_flat_3d(&pullback);
        assert!(
            report.flat && report.max_abs_curvature <= 1e-5,
            "pullback {name}: max curvature {}",
            report.max_abs_curvature
        );
    }
    println!(
        "ACCEPTANCE 10 (geometry suite): PASS  worst sampled curvature error {worst_sampled:.2e}"
    );
}

// Cross-check supporting criterion 6: the minimizers the scaling sweep
// trusts are smooth fields, not sub-cell oscillations — their full-Gauss
// energy stays within a modest factor of the midpoint energy.
#[test]
fn scaling_minimizers_are_resolved_fields() {
    let _lock = HEAVY.lock().unwrap();
    let metric = MetricField::<f64>::catalog(CatalogMetric::Sphere);
    let mesh = Mesh2::new(metric.domain(), 32, 32);
    let grid = Grid3::new(mesh, 7, 0.1).unwrap();
    let y = build_immersion(ImmersionCatalog::SphereCap, mesh);
    let u0 = build_recovery(&y, &metric, &grid).unwrap();
    let (umin, report) = minimize_ih(&metric, &grid, &u0, &MinimizeOptions::default()).unwrap();
    assert!(report.converged);
    let midpoint = energy_ih(&umin, &metric, &grid).unwrap();
    let gauss = neplate::plate::energy_ih_quad(&umin, &metric, &grid, Quadrature::Gauss2).unwrap();
    assert!(
        gauss <= 10.0 * midpoint + 1e-6,
        "Gauss energy {gauss:.3e} far above midpoint {midpoint:.3e}: sub-cell oscillation"
    );
    println!("  resolved-field cross-check: gauss {gauss:.3e} vs midpoint {midpoint:.3e}");
}

// Supporting check for the non-flat lower bound on the second curved
// catalog metric: the h²-normalized minimum stays bounded away from zero
// across the sweep.
#[test]
fn hyperbolic_lower_bound_holds() {
    let _lock = HEAVY.lock().unwrap();
    let cfg = ExperimentConfig {
        metric: MetricSpec::Catalog("hyperbolic".into()),
        immersion: Some(ImmersionSpec::Catalog("hyperbolic_band".into())),
        nx: 24,
        ny: 24,
        nz: 7,
        h_list: vec![0.12, 0.1, 0.08],
        ..Default::default()
    };
    let result = run_scaling(&cfg).unwrap();
    let first = result.rows.first().unwrap().min_energy_over_h2;
    let last = result.rows.last().unwrap().min_energy_over_h2;
    assert!(first > 0.0 && last >= 0.1 * first, "rows {:?}", result.rows);
    println!("  hyperbolic /h2 range [{first:.3e}, {last:.3e}]");
}
