//! Empirical probes of the generalized rigidity estimate: the distance of
//! `∇u` from its best constant approximation, bounded by the well energy
//! plus a metric-variation term `‖∇g‖²_∞ (diam U)² |U|`.
//!
//! The estimate's constant is existential; the sweep reports the maximal
//! observed ratio `C_obs` for a declared sampling family and never claims
//! more than that.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::grid::Grid3;
use crate::metric::MetricField;
use crate::plate::{cell_frames, DeformationField3D};
use crate::sampling::random_rotation3;
use crate::scalar::{pairwise_sum, real, Real};
use crate::wells::dist_to_well_frame;

/// Records with `well_term + geometry_term` below this are 0/0 cases and
/// are excluded from ratio statistics.
const DEGENERATE_DENOMINATOR: f64 = 1e-14;

/// One evaluation of both sides of the rigidity inequality.
#[derive(Debug, Clone, Copy)]
pub struct RigidityRecord<T> {
    /// `∫ |∇u − Q*|²` with `Q*` the best constant matrix.
    pub lhs: T,
    /// `∫ dist²(∇u, SO(3)A(x'))`.
    pub well_term: T,
    /// `‖∇g‖²_{L∞} (diam U)² |U|`.
    pub geometry_term: T,
    /// `lhs / (well_term + geometry_term)`; `None` for 0/0 records.
    pub ratio: Option<T>,
}

/// Volume-weighted mean of the cell gradients: the exact minimizer of
/// `∫ |∇u − Q|²` over constant matrices (cells have equal volumes on the
/// uniform grid).
pub fn best_fit_matrix<T: Real>(u: &DeformationField3D<T>) -> Matrix3<T> {
    let grid = &u.grid;
    let (cx, cy, cz) = (grid.mesh.nx - 1, grid.mesh.ny - 1, grid.nz - 1);
    let mut sum = Matrix3::zeros();
    for k in 0..cz {
        for j in 0..cy {
            for i in 0..cx {
                sum += u.cell_gradient(i, j, k);
            }
        }
    }
    sum / real::<T>((cx * cy * cz) as f64)
}

/// Assembles the full rigidity record for a deformation.
pub fn rigidity_record<T: Real>(
    u: &DeformationField3D<T>,
    metric: &MetricField<T>,
    grid: &Grid3<T>,
) -> Result<RigidityRecord<T>> {
    let frames = cell_frames(metric, grid)?;
    Ok(record_with_frames(u, metric, grid, &frames))
}

fn record_with_frames<T: Real>(
    u: &DeformationField3D<T>,
    metric: &MetricField<T>,
    grid: &Grid3<T>,
    frames: &[crate::metric::WellFrame<T>],
) -> RigidityRecord<T> {
    let q_star = best_fit_matrix(u);
    let (cx, cy, cz) = (grid.mesh.nx - 1, grid.mesh.ny - 1, grid.nz - 1);
    let vol = grid.cell_volume();
    let mut lhs_cells = Vec::with_capacity(cx * cy * cz);
    let mut well_cells = Vec::with_capacity(cx * cy * cz);
    for k in 0..cz {
        for j in 0..cy {
            for i in 0..cx {
                let f = u.cell_gradient(i, j, k);
                let diff = f - q_star;
                lhs_cells.push(diff.norm_squared());
                well_cells.push(dist_to_well_frame(&f, &frames[grid.mesh.cell_index(i, j)]).value);
            }
        }
    }
    let lhs = pairwise_sum(&lhs_cells) * vol;
    let well_term = pairwise_sum(&well_cells) * vol;
    let grad_sup = metric.grad_sup_norm(33);
    let diam = grid.diameter();
    let geometry_term = grad_sup * grad_sup * diam * diam * grid.volume();
    let denom = well_term + geometry_term;
    let ratio = if denom > real::<T>(DEGENERATE_DENOMINATOR) {
        Some(lhs / denom)
    } else {
        None
    };
    RigidityRecord {
        lhs,
        well_term,
        geometry_term,
        ratio,
    }
}

/// The declared sampling family for rigidity sweeps: a rotated well-affine
/// base plus trigonometric fields and smooth polynomial bumps at the given
/// amplitude.
#[derive(Debug, Clone, Copy)]
pub struct SamplerSpec<T> {
    pub amplitude: T,
    pub trig_modes: usize,
    pub bump_count: usize,
}

impl<T: Real> Default for SamplerSpec<T> {
    fn default() -> Self {
        Self {
            amplitude: real(0.1),
            trig_modes: 3,
            bump_count: 2,
        }
    }
}

/// Sweep summary: every record, the empirical constant, and a histogram of
/// the observed ratios.
#[derive(Debug, Clone)]
pub struct SweepReport<T> {
    pub records: Vec<RigidityRecord<T>>,
    /// Maximal observed ratio; the empirical lower bound for the constant.
    pub c_obs: T,
    /// Index of the sample attaining `c_obs`.
    pub worst_sample: usize,
    /// Number of 0/0 records excluded from the statistics.
    pub excluded: usize,
    /// `(bin_upper_edge, count)` over `[0, c_obs]` in 12 equal bins.
    pub histogram: Vec<(T, usize)>,
}

fn sample_deformation<T: Real>(
    metric: &MetricField<T>,
    grid: &Grid3<T>,
    spec: &SamplerSpec<T>,
    seed: u64,
    index: usize,
) -> DeformationField3D<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    let rect = grid.mesh.rect;
    let center = (
        (rect.x0 + rect.x1) * real::<T>(0.5),
        (rect.y0 + rect.y1) * real::<T>(0.5),
    );
    let a_center = metric
        .well_frame(center.0, center.1)
        .expect("grid center lies in the metric domain")
        .a;
    let rot: Matrix3<T> = random_rotation3(&mut rng);
    let base = rot * a_center;
    let shift = Vector3::new(
        real::<T>(rng.random_range(-1.0..1.0)),
        real::<T>(rng.random_range(-1.0..1.0)),
        real::<T>(rng.random_range(-1.0..1.0)),
    );

    let mut trig = Vec::new();
    for _ in 0..spec.trig_modes {
        let coeff = Vector3::new(
            real::<T>(rng.random_range(-1.0..1.0)),
            real::<T>(rng.random_range(-1.0..1.0)),
            real::<T>(rng.random_range(-1.0..1.0)),
        );
        let freq = Vector3::new(
            real::<T>(rng.random_range(1.0..6.0)),
            real::<T>(rng.random_range(1.0..6.0)),
            real::<T>(rng.random_range(1.0..6.0)),
        );
        let phase = real::<T>(rng.random_range(0.0..std::f64::consts::TAU));
        trig.push((coeff, freq, phase));
    }
    let mut bumps = Vec::new();
    for _ in 0..spec.bump_count {
        let center = Vector3::new(
            real::<T>(rng.random_range(rect.x0.to_f64().unwrap()..rect.x1.to_f64().unwrap())),
            real::<T>(rng.random_range(rect.y0.to_f64().unwrap()..rect.y1.to_f64().unwrap())),
            T::zero(),
        );
        let width = real::<T>(rng.random_range(0.2..0.8));
        let coeff = Vector3::new(
            real::<T>(rng.random_range(-1.0..1.0)),
            real::<T>(rng.random_range(-1.0..1.0)),
            real::<T>(rng.random_range(-1.0..1.0)),
        );
        bumps.push((center, width, coeff));
    }

    let amp = spec.amplitude;
    DeformationField3D::from_fn(*grid, |x1, x2, x3| {
        let x = Vector3::new(x1, x2, x3);
        let mut v = base * x + shift;
        for (coeff, freq, phase) in &trig {
            let arg = freq[0] * x1 + freq[1] * x2 + freq[2] * x3 + *phase;
            v += coeff * (amp * arg.sin());
        }
        for (center, width, coeff) in &bumps {
            let r2 = ((x - center).norm_squared()) / (*width * *width);
            let cut = (T::one() - r2).max(T::zero());
            v += coeff * (amp * cut * cut);
        }
        v
    })
}

/// Runs `n` seeded samples of the declared family, evaluates every record,
/// and reports the maximal ratio. Samples are independent; each derives its
/// own generator from the master seed, so results do not depend on the
/// parallel schedule.
pub fn rigidity_sweep<T: Real>(
    metric: &MetricField<T>,
    grid: &Grid3<T>,
    spec: &SamplerSpec<T>,
    n: usize,
    seed: u64,
) -> Result<SweepReport<T>> {
    let frames = cell_frames(metric, grid)?;
    let records: Vec<RigidityRecord<T>> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let u = sample_deformation(metric, grid, spec, seed, idx);
            record_with_frames(&u, metric, grid, &frames)
        })
        .collect();
    let mut c_obs = T::zero();
    let mut worst = 0;
    let mut excluded = 0;
    for (idx, rec) in records.iter().enumerate() {
        match rec.ratio {
            Some(r) => {
                if r > c_obs {
                    c_obs = r;
                    worst = idx;
                }
            }
            None => excluded += 1,
        }
    }
    let bins = 12;
    let mut histogram = Vec::with_capacity(bins);
    let width = if c_obs > T::zero() {
        c_obs / real::<T>(bins as f64)
    } else {
        T::one()
    };
    let mut counts = vec![0usize; bins];
    for rec in &records {
        if let Some(r) = rec.ratio {
            let mut b = (r / width).to_f64().unwrap_or(0.0).floor() as usize;
            if b >= bins {
                b = bins - 1;
            }
            counts[b] += 1;
        }
    }
    for (b, count) in counts.into_iter().enumerate() {
        histogram.push((width * real::<T>((b + 1) as f64), count));
    }
    Ok(SweepReport {
        records,
        c_obs,
        worst_sample: worst,
        excluded,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mesh2;
    use crate::metric::CatalogMetric;
    use crate::plate::{init_deformation, InitKind};
    use crate::sampling;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(metric: &MetricField<f64>, n: usize, nz: usize, h: f64) -> Grid3<f64> {
        Grid3::new(Mesh2::new(metric.domain(), n, n), nz, h).unwrap()
    }

    #[test]
    fn best_fit_of_affine_map_is_its_matrix() {
        let metric = MetricField::<f64>::catalog(CatalogMetric::Identity);
        let grid = setup(&metric, 7, 3, 0.1);
        let m = Matrix3::new(1.0, 0.2, 0.0, -0.1, 0.9, 0.3, 0.0, 0.1, 1.1);
        let u = DeformationField3D::from_fn(grid, |x1, x2, x3| {
            m * Vector3::new(x1, x2, x3) + Vector3::new(1.0, 2.0, 3.0)
        });
        let q = best_fit_matrix(&u);
        assert_relative_eq!(q, m, epsilon = 1e-12);
    }

    #[test]
    fn best_fit_of_two_piece_affine_is_the_volume_average() {
        let metric = MetricField::<f64>::catalog(CatalogMetric::Identity);
        // 9 nodes -> 8 cells along x, split 4/4. Continuity across the
        // interface x₁ = 1/2 needs a rank-one jump M₂ = M₁ + a⊗e₁.
        let grid = setup(&metric, 9, 3, 0.1);
        let m1 = Matrix3::identity();
        let m2 = Matrix3::new(1.3, 0.0, 0.0, 0.2, 1.0, 0.0, -0.1, 0.0, 1.0);
        let mid = 0.5;
        let u = DeformationField3D::from_fn(grid, |x1, x2, x3| {
            let x = Vector3::new(x1, x2, x3);
            if x1 <= mid {
                m1 * x
            } else {
                m2 * (x - Vector3::new(mid, 0.0, 0.0)) + m1 * Vector3::new(mid, 0.0, 0.0)
                    + (m1 - Matrix3::identity()) * Vector3::new(0.0, x2, x3)
            }
        });
        let q = best_fit_matrix(&u);
        assert_relative_eq!(q, (m1 + m2) * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn best_fit_minimizes_over_random_competitors() {
        let metric = MetricField::<f64>::catalog(CatalogMetric::Identity);
        let grid = setup(&metric, 6, 3, 0.1);
        let flat = init_deformation(InitKind::Flat, &grid).unwrap();
        let u = init_deformation(
            InitKind::Perturbed {
                base: &flat,
                amplitude: 0.2,
                seed: 3,
            },
            &grid,
        )
        .unwrap();
        let q_star = best_fit_matrix(&u);
        let objective = |q: &Matrix3<f64>| {
            let mut total = 0.0;
            for k in 0..grid.nz - 1 {
                for j in 0..grid.mesh.ny - 1 {
                    for i in 0..grid.mesh.nx - 1 {
                        total += (u.cell_gradient(i, j, k) - q).norm_squared();
                    }
                }
            }
            total
        };
        let base = objective(&q_star);
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..100 {
            let q = q_star + Matrix3::from_fn(|_, _| rng.random_range(-0.5..0.5));
            assert!(objective(&q) + 1e-12 >= base);
        }
        // First-order optimality: the residual integrates to zero against
        // every constant direction.
        let mut mean_residual = Matrix3::<f64>::zeros();
        for k in 0..grid.nz - 1 {
            for j in 0..grid.mesh.ny - 1 {
                for i in 0..grid.mesh.nx - 1 {
                    mean_residual += u.cell_gradient(i, j, k) - q_star;
                }
            }
        }
        assert!(mean_residual.norm() <= 1e-12);
    }

    #[test]
    fn identity_metric_reduces_to_the_classical_estimate() {
        let metric = MetricField::<f64>::catalog(CatalogMetric::Identity);
        let grid = setup(&metric, 7, 3, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let r = sampling::random_rotation3::<f64, _>(&mut rng);
        let affine = DeformationField3D::from_fn(grid, |x1, x2, x3| {
            r * Vector3::new(x1, x2, x3)
        });
        let rec = rigidity_record(&affine, &metric, &grid).unwrap();
        assert_eq!(rec.geometry_term, 0.0);
        assert!(rec.lhs <= 1e-25);
        assert!(rec.well_term <= 1e-25);
        assert!(rec.ratio.is_none());
    }

    #[test]
    fn perturbed_identity_has_finite_ratio() {
        let metric = MetricField::<f64>::catalog(CatalogMetric::Identity);
        let grid = setup(&metric, 7, 3, 0.1);
        let u = DeformationField3D::from_fn(grid, |x1, x2, x3| {
            Vector3::new(
                x1 + 0.05 * (3.0 * x2).sin(),
                x2,
                x3 + 0.05 * (2.0 * x1).sin(),
            )
        });
        let rec = rigidity_record(&u, &metric, &grid).unwrap();
        assert!(rec.well_term > 0.0);
        assert_eq!(rec.geometry_term, 0.0);
        let ratio = rec.ratio.unwrap();
        assert!(ratio.is_finite() && ratio > 0.0);
    }

    #[test]
    fn curved_metric_contributes_a_positive_geometry_term() {
        let metric = MetricField::<f64>::catalog(CatalogMetric::Sphere);
        let grid = setup(&metric, 7, 3, 0.1);
        let flat = init_deformation(InitKind::Flat, &grid).unwrap();
        let rec = rigidity_record(&flat, &metric, &grid).unwrap();
        assert!(rec.geometry_term > 0.0);
        assert!(rec.ratio.is_some());
    }

    #[test]
    fn ratios_are_invariant_under_rigid_motions() {
        let metric = MetricField::<f64>::catalog(CatalogMetric::Sphere);
        let grid = setup(&metric, 7, 3, 0.1);
        let spec = SamplerSpec::default();
        let u = sample_deformation(&metric, &grid, &spec, 21, 0);
        let rec = rigidity_record(&u, &metric, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let r = sampling::random_rotation3::<f64, _>(&mut rng);
        let moved = DeformationField3D {
            grid,
            u: u.u.iter().map(|v| r * v + Vector3::new(1.0, -2.0, 0.5)).collect(),
        };
        let rec2 = rigidity_record(&moved, &metric, &grid).unwrap();
        assert_relative_eq!(rec.lhs, rec2.lhs, max_relative = 1e-10);
        assert_relative_eq!(rec.well_term, rec2.well_term, max_relative = 1e-9);
        assert_eq!(rec.geometry_term, rec2.geometry_term);
    }

    #[test]
    fn sweep_is_deterministic_and_self_consistent() {
        let metric = MetricField::<f64>::catalog(CatalogMetric::Identity);
        let grid = setup(&metric, 6, 3, 0.1);
        let spec = SamplerSpec::default();
        let a = rigidity_sweep(&metric, &grid, &spec, 40, 123).unwrap();
        let b = rigidity_sweep(&metric, &grid, &spec, 40, 123).unwrap();
        assert_eq!(a.c_obs.to_bits(), b.c_obs.to_bits());
        assert_eq!(a.worst_sample, b.worst_sample);
        assert_eq!(a.excluded, b.excluded);
        for rec in &a.records {
            if let Some(r) = rec.ratio {
                assert!(r <= a.c_obs);
                assert!(
                    rec.lhs <= a.c_obs * (rec.well_term + rec.geometry_term) + 1e-12
                );
            }
        }
        let counted: usize = a.histogram.iter().map(|(_, c)| c).sum();
        assert_eq!(counted + a.excluded, 40);
    }

    #[test]
    fn affine_well_samples_are_excluded_as_degenerate() {
        let metric = MetricField::<f64>::catalog(CatalogMetric::Identity);
        let grid = setup(&metric, 6, 3, 0.1);
        let spec = SamplerSpec {
            amplitude: 0.0,
            trig_modes: 0,
            bump_count: 0,
        };
        let report = rigidity_sweep(&metric, &grid, &spec, 5, 7).unwrap();
        assert_eq!(report.excluded, 5);
        assert_eq!(report.c_obs, 0.0);
    }
}
