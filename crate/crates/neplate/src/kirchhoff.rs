//! The 2d bending functional that the rescaled plate energies converge to:
//! `(1/24) ∫ Q₂(x')(A_tan⁻¹ (∇y)ᵀ∇n) dx'` on discrete immersions
//! `y: Ω → ℝ³`, together with an isometry penalty and its minimization.
//!
//! Discrete second fundamental form: cell normals come from the bilinear
//! cell gradients, nodal normals average the adjacent cell normals (cells
//! of a uniform mesh have equal areas, so the area weights are uniform),
//! and `∇n` differences the nodal normals with the same bilinear stencil
//! as `∇y`.

use nalgebra::{Matrix2, Matrix3x2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Mesh2;
use crate::metric::{MetricField, WellFrame};
use crate::optim::{self, MinimizeOptions, Objective};
use crate::plate::EnergyReport;
use crate::scalar::{pairwise_sum, real, Real};
use crate::wells::{project_sym_ainv_tan, q2_frame};

/// Cells with `|∂₁y×∂₂y|` below this are degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;
/// Fraction of degenerate cells above which the normal field is an error.
const DEGENERATE_FRACTION: f64 = 0.01;

/// Nodal immersion of the midplate into ℝ³.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmersionField2D<T> {
    pub mesh: Mesh2<T>,
    /// Node values, x-fastest.
    pub y: Vec<Vector3<T>>,
}

impl<T: Real> ImmersionField2D<T> {
    pub fn new(mesh: Mesh2<T>, y: Vec<Vector3<T>>) -> Result<Self> {
        if y.len() != mesh.n_nodes() {
            return Err(Error::MeshMismatch(format!(
                "immersion has {} nodes, mesh has {}",
                y.len(),
                mesh.n_nodes()
            )));
        }
        Ok(Self { mesh, y })
    }

    pub fn from_fn(mesh: Mesh2<T>, f: impl Fn(T, T) -> Vector3<T>) -> Self {
        let mut y = Vec::with_capacity(mesh.n_nodes());
        for j in 0..mesh.ny {
            for i in 0..mesh.nx {
                let (x1, x2) = mesh.node_pos(i, j);
                y.push(f(x1, x2));
            }
        }
        Self { mesh, y }
    }

    /// Bilinear-element gradient (3x2) at the center of cell `(i,j)`.
    pub fn cell_gradient(&self, i: usize, j: usize) -> Matrix3x2<T> {
        cell_gradient_raw(&self.y, &self.mesh, i, j)
    }
}

pub(crate) fn cell_gradient_raw<T: Real>(
    y: &[Vector3<T>],
    mesh: &Mesh2<T>,
    i: usize,
    j: usize,
) -> Matrix3x2<T> {
    let half: T = real(0.5);
    let n = |a: usize, b: usize| y[mesh.node_index(i + a, j + b)];
    let d1 = (n(1, 0) + n(1, 1) - n(0, 0) - n(0, 1)) * (half / mesh.dx());
    let d2 = (n(0, 1) + n(1, 1) - n(0, 0) - n(1, 0)) * (half / mesh.dy());
    Matrix3x2::from_columns(&[d1, d2])
}

/// Per-cell unit normals with degeneracy flags, and the nodal average used
/// by the discrete shape operator.
#[derive(Debug, Clone)]
pub struct NormalField<T> {
    pub cell_normals: Vec<Vector3<T>>,
    pub degenerate: Vec<bool>,
    pub nodal_normals: Vec<Vector3<T>>,
}

/// Computes the normal field `n = ∂₁y×∂₂y / |∂₁y×∂₂y|` per cell.
///
/// Returns an error when more than 1% of the cells are degenerate.
pub fn normal_field<T: Real>(y: &ImmersionField2D<T>) -> Result<NormalField<T>> {
    let mesh = y.mesh;
    let n_cells = mesh.n_cells();
    let mut cell_normals = vec![Vector3::zeros(); n_cells];
    let mut degenerate = vec![false; n_cells];
    let mut n_degenerate = 0usize;
    let threshold = real::<T>(DEGENERACY_THRESHOLD);
    for j in 0..mesh.ny - 1 {
        for i in 0..mesh.nx - 1 {
            let grad = cell_gradient_raw(&y.y, &mesh, i, j);
            let w = grad.column(0).cross(&grad.column(1));
            let norm = w.norm();
            let c = mesh.cell_index(i, j);
            if norm < threshold {
                degenerate[c] = true;
                n_degenerate += 1;
            } else {
                cell_normals[c] = w / norm;
            }
        }
    }
    if (n_degenerate as f64) > DEGENERATE_FRACTION * n_cells as f64 {
        return Err(Error::DegenerateImmersion {
            degenerate: n_degenerate,
            cells: n_cells,
        });
    }
    let nodal_normals = average_to_nodes(&cell_normals, &degenerate, &mesh);
    Ok(NormalField {
        cell_normals,
        degenerate,
        nodal_normals,
    })
}

/// Area-weighted average of cell vectors onto nodes; on a uniform mesh all
/// cell areas agree, so this is the arithmetic mean of the adjacent cells.
pub(crate) fn average_to_nodes<T: Real>(
    cell_values: &[Vector3<T>],
    skip: &[bool],
    mesh: &Mesh2<T>,
) -> Vec<Vector3<T>> {
    let mut out = vec![Vector3::zeros(); mesh.n_nodes()];
    let mut counts = vec![0usize; mesh.n_nodes()];
    for j in 0..mesh.ny - 1 {
        for i in 0..mesh.nx - 1 {
            let c = mesh.cell_index(i, j);
            if skip[c] {
                continue;
            }
            for a in 0..2 {
                for b in 0..2 {
                    let v = mesh.node_index(i + a, j + b);
                    out[v] += cell_values[c];
                    counts[v] += 1;
                }
            }
        }
    }
    for (v, count) in counts.iter().enumerate() {
        if *count > 0 {
            out[v] /= real::<T>(*count as f64);
        }
    }
    out
}

fn check_mesh_in_domain<T: Real>(mesh: &Mesh2<T>, metric: &MetricField<T>) -> Result<()> {
    let r = metric.domain();
    if !(r.contains(mesh.rect.x0, mesh.rect.y0) && r.contains(mesh.rect.x1, mesh.rect.y1)) {
        return Err(Error::MeshMismatch(
            "mesh extends outside the metric domain".into(),
        ));
    }
    Ok(())
}

/// Midpoint-quadrature value of `∫ |(∇y)ᵀ∇y − g|² dx'`.
pub fn isometry_defect<T: Real>(
    y: &ImmersionField2D<T>,
    metric: &MetricField<T>,
) -> Result<T> {
    check_mesh_in_domain(&y.mesh, metric)?;
    let mesh = y.mesh;
    let mut values = Vec::with_capacity(mesh.n_cells());
    for j in 0..mesh.ny - 1 {
        for i in 0..mesh.nx - 1 {
            let (x1, x2) = mesh.cell_center(i, j);
            let g = metric.g_tan(x1, x2)?;
            let grad = cell_gradient_raw(&y.y, &mesh, i, j);
            let s = grad.transpose() * grad - g;
            values.push(s.norm_squared());
        }
    }
    Ok(pairwise_sum(&values) * mesh.cell_area())
}

/// The limit bending energy
/// `(1/24) ∫ Q₂(x')(A_tan⁻¹ (∇y)ᵀ∇n) dx'` by midpoint quadrature.
pub fn limit_energy<T: Real>(
    y: &ImmersionField2D<T>,
    metric: &MetricField<T>,
) -> Result<T> {
    check_mesh_in_domain(&y.mesh, metric)?;
    let normals = normal_field(y)?;
    let frames = midplane_frames(metric, &y.mesh)?;
    limit_energy_inner(y, &normals, &frames).map(|(e, _)| e)
}

/// Well frames at the cell centers of a 2d mesh.
pub fn midplane_frames<T: Real>(
    metric: &MetricField<T>,
    mesh: &Mesh2<T>,
) -> Result<Vec<WellFrame<T>>> {
    let mut frames = Vec::with_capacity(mesh.n_cells());
    for j in 0..mesh.ny - 1 {
        for i in 0..mesh.nx - 1 {
            let (x1, x2) = mesh.cell_center(i, j);
            frames.push(metric.well_frame(x1, x2)?);
        }
    }
    Ok(frames)
}

/// Shared evaluation: returns the energy and the per-cell tangential
/// arguments `A_tan⁻¹ Π` (zero where degenerate).
fn limit_energy_inner<T: Real>(
    y: &ImmersionField2D<T>,
    normals: &NormalField<T>,
    frames: &[WellFrame<T>],
) -> Result<(T, Vec<Matrix2<T>>)> {
    let mesh = y.mesh;
    let cells: Vec<(usize, usize)> = (0..mesh.ny - 1)
        .flat_map(|j| (0..mesh.nx - 1).map(move |i| (i, j)))
        .collect();
    let per_cell: Vec<Result<(T, Matrix2<T>)>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let c = mesh.cell_index(i, j);
            if normals.degenerate[c] {
                return Ok((T::zero(), Matrix2::zeros()));
            }
            let dy = cell_gradient_raw(&y.y, &mesh, i, j);
            let dn = cell_gradient_raw(&normals.nodal_normals, &mesh, i, j);
            let pi = dy.transpose() * dn;
            let f_tan = frames[c].a_tan_inv * pi;
            let q = q2_frame(&frames[c], &f_tan)?;
            Ok((q, f_tan))
        })
        .collect();
    let mut values = Vec::with_capacity(per_cell.len());
    let mut args = Vec::with_capacity(per_cell.len());
    for r in per_cell {
        let (q, f) = r?;
        values.push(q);
        args.push(f);
    }
    let energy = pairwise_sum(&values) * mesh.cell_area() / real::<T>(24.0);
    Ok((energy, args))
}

/// Report of a penalized limit-energy minimization.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyReport<T> {
    pub limit_energy: T,
    pub isometry_defect: T,
    pub report: EnergyReport<T>,
}

struct LimitObjective<'a, T: Real> {
    mesh: Mesh2<T>,
    frames: &'a [WellFrame<T>],
    metrics: &'a [Matrix2<T>],
    mu: T,
}

impl<'a, T: Real> LimitObjective<'a, T> {
    fn unpack(&self, x: &[T]) -> ImmersionField2D<T> {
        ImmersionField2D {
            mesh: self.mesh,
            y: x.chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
        }
    }

    fn energy_of(&self, field: &ImmersionField2D<T>) -> T {
        let normals = match normal_field(field) {
            Ok(n) => n,
            Err(_) => return real(f64::INFINITY),
        };
        let (limit, _) = match limit_energy_inner(field, &normals, self.frames) {
            Ok(v) => v,
            Err(_) => return real(f64::INFINITY),
        };
        let defect = self.defect_of(field);
        limit + self.mu * defect
    }

    fn defect_of(&self, field: &ImmersionField2D<T>) -> T {
        let mesh = self.mesh;
        let mut values = Vec::with_capacity(mesh.n_cells());
        for j in 0..mesh.ny - 1 {
            for i in 0..mesh.nx - 1 {
                let c = mesh.cell_index(i, j);
                let grad = cell_gradient_raw(&field.y, &mesh, i, j);
                let s = grad.transpose() * grad - self.metrics[c];
                values.push(s.norm_squared());
            }
        }
        pairwise_sum(&values) * mesh.cell_area()
    }

    /// Hand-written adjoint of the full discrete pipeline
    /// y → cell normals → nodal normals → ∇n → Π → Q₂, plus the penalty.
    fn gradient_of(&self, field: &ImmersionField2D<T>, grad: &mut [T]) -> T {
        let mesh = self.mesh;
        let normals = match normal_field(field) {
            Ok(n) => n,
            Err(_) => return real(f64::INFINITY),
        };
        let (limit, _) = match limit_energy_inner(field, &normals, self.frames) {
            Ok(v) => v,
            Err(_) => return real(f64::INFINITY),
        };
        let defect = self.defect_of(field);

        let quarter_scale = mesh.cell_area() / real::<T>(24.0);
        let n_cells = mesh.n_cells();
        let mut g_dy = vec![Matrix3x2::<T>::zeros(); n_cells];
        let mut g_nodal_n = vec![Vector3::<T>::zeros(); mesh.n_nodes()];

        // Per-cell direct terms and the ∇n adjoint, scattered to nodal
        // normal gradients.
        for j in 0..mesh.ny - 1 {
            for i in 0..mesh.nx - 1 {
                let c = mesh.cell_index(i, j);
                let dy = cell_gradient_raw(&field.y, &mesh, i, j);
                // Penalty part: d|S|²/d(∇y) = 4·∇y·S.
                let s = dy.transpose() * dy - self.metrics[c];
                g_dy[c] += dy * s * (real::<T>(4.0) * self.mu * mesh.cell_area());

                if normals.degenerate[c] {
                    continue;
                }
                let dn = cell_gradient_raw(&normals.nodal_normals, &mesh, i, j);
                let pi = dy.transpose() * dn;
                let frame = &self.frames[c];
                let f_tan = frame.a_tan_inv * pi;
                // dQ₂/dF = 4·P₂F; pull back through F = A_tan⁻¹Π.
                let p = project_sym_ainv_tan(&f_tan, &frame.a_tan)
                    .expect("frame roots are SPD");
                let g_pi = frame.a_tan_inv * p * (real::<T>(4.0) * quarter_scale);
                // Π = (∇y)ᵀ∇n: adjoints ∇n·G_Πᵀ into ∇y and ∇y·G_Π into ∇n.
                g_dy[c] += dn * g_pi.transpose();
                let g_dn = dy * g_pi;
                // ∇n is the bilinear difference of nodal normals.
                scatter_gradient(&g_dn, &mesh, i, j, &mut g_nodal_n);
            }
        }

        // Nodal normals average adjacent cell normals.
        let mut counts = vec![0usize; mesh.n_nodes()];
        for j in 0..mesh.ny - 1 {
            for i in 0..mesh.nx - 1 {
                if normals.degenerate[mesh.cell_index(i, j)] {
                    continue;
                }
                for a in 0..2 {
                    for b in 0..2 {
                        counts[mesh.node_index(i + a, j + b)] += 1;
                    }
                }
            }
        }
        for j in 0..mesh.ny - 1 {
            for i in 0..mesh.nx - 1 {
                let c = mesh.cell_index(i, j);
                if normals.degenerate[c] {
                    continue;
                }
                // Gather the share of each adjacent node's gradient.
                let mut g_n = Vector3::zeros();
                for a in 0..2 {
                    for b in 0..2 {
                        let v = mesh.node_index(i + a, j + b);
                        g_n += g_nodal_n[v] / real::<T>(counts[v] as f64);
                    }
                }
                // n = w/|w| with w = ∂₁y×∂₂y.
                let dy = cell_gradient_raw(&field.y, &mesh, i, j);
                let c1: Vector3<T> = dy.column(0).into();
                let c2: Vector3<T> = dy.column(1).into();
                let w = c1.cross(&c2);
                let norm = w.norm();
                let n = w / norm;
                let g_w = (g_n - n * n.dot(&g_n)) / norm;
                let g_c1 = c2.cross(&g_w);
                let g_c2 = g_w.cross(&c1);
                g_dy[c] += Matrix3x2::from_columns(&[g_c1, g_c2]);
            }
        }

        // Scatter the ∇y adjoints to nodal y values.
        let mut g_y = vec![Vector3::<T>::zeros(); mesh.n_nodes()];
        for j in 0..mesh.ny - 1 {
            for i in 0..mesh.nx - 1 {
                scatter_gradient(&g_dy[mesh.cell_index(i, j)], &mesh, i, j, &mut g_y);
            }
        }
        for (v, gv) in g_y.iter().enumerate() {
            grad[3 * v] = gv[0];
            grad[3 * v + 1] = gv[1];
            grad[3 * v + 2] = gv[2];
        }
        limit + self.mu * defect
    }
}

/// Adjoint of the bilinear cell-gradient stencil: distributes a 3x2
/// cell-gradient sensitivity to the four corner nodes.
fn scatter_gradient<T: Real>(
    g: &Matrix3x2<T>,
    mesh: &Mesh2<T>,
    i: usize,
    j: usize,
    out: &mut [Vector3<T>],
) {
    let half: T = real(0.5);
    let wx = half / mesh.dx();
    let wy = half / mesh.dy();
    let col1: Vector3<T> = g.column(0).into();
    let col2: Vector3<T> = g.column(1).into();
    for a in 0..2 {
        for b in 0..2 {
            let sx = if a == 1 { wx } else { -wx };
            let sy = if b == 1 { wy } else { -wy };
            out[mesh.node_index(i + a, j + b)] += col1 * sx + col2 * sy;
        }
    }
}

impl<'a, T: Real> Objective<T> for LimitObjective<'a, T> {
    fn eval(&self, x: &[T]) -> T {
        self.energy_of(&self.unpack(x))
    }

    fn eval_grad(&self, x: &[T], grad: &mut [T]) -> T {
        self.gradient_of(&self.unpack(x), grad)
    }
}

/// Minimizes `limit_energy + μ·isometry_defect` over nodal immersions,
/// with the penalty weight `μ` increasing over the schedule (default
/// `{1e2, 1e3, 1e4}`) and warm starts between stages.
///
/// A degenerate initial immersion is an error; degeneracy appearing during
/// the search shows up as line-search failure and the best iterate is
/// returned with `converged = false`.
pub fn minimize_limit<T: Real>(
    metric: &MetricField<T>,
    init: &ImmersionField2D<T>,
    penalty_schedule: &[T],
    opts: &MinimizeOptions<T>,
) -> Result<(ImmersionField2D<T>, PenaltyReport<T>)> {
    check_mesh_in_domain(&init.mesh, metric)?;
    normal_field(init)?;
    let mesh = init.mesh;
    let frames = midplane_frames(metric, &mesh)?;
    let mut metrics = Vec::with_capacity(mesh.n_cells());
    for j in 0..mesh.ny - 1 {
        for i in 0..mesh.nx - 1 {
            let (x1, x2) = mesh.cell_center(i, j);
            metrics.push(metric.g_tan(x1, x2)?);
        }
    }
    let default_schedule: Vec<T> = vec![real(1e2), real(1e3), real(1e4)];
    let schedule: &[T] = if penalty_schedule.is_empty() {
        &default_schedule
    } else {
        penalty_schedule
    };

    let mut x: Vec<T> = init.y.iter().flat_map(|v| [v[0], v[1], v[2]]).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = T::zero();
    let mut wall_time = 0.0;
    for &mu in schedule {
        let objective = LimitObjective {
            mesh,
            frames: &frames,
            metrics: &metrics,
            mu,
        };
        let (x_new, outcome) = optim::minimize(&objective, x, opts);
        x = x_new;
        iterations += outcome.iterations;
        converged = outcome.converged;
        grad_norm = outcome.grad_sup_norm;
        wall_time += outcome.wall_time;
    }
    let field = ImmersionField2D {
        mesh,
        y: x.chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect(),
    };
    let limit = limit_energy(&field, metric)?;
    let defect = isometry_defect(&field, metric)?;
    Ok((
        field,
        PenaltyReport {
            limit_energy: limit,
            isometry_defect: defect,
            report: EnergyReport {
                energy: limit,
                grad_norm,
                iterations,
                converged,
                wall_time,
            },
        },
    ))
}

// ---------------------------------------------------------------------------
// Analytic immersions of the catalog metrics
// ---------------------------------------------------------------------------

/// Analytic isometric immersions matching the metric catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImmersionCatalog {
    /// `(x₁, x₂, 0)` — realizes the identity metric.
    Plane,
    /// `(x₁cos x₂, x₁sin x₂, 0)` — planar realization of the polar-flat
    /// metric.
    PolarPlanar,
    /// Unit-sphere patch `(sin x₁ cos x₂, sin x₁ sin x₂, cos x₁)` —
    /// realizes the sphere metric.
    SphereCap,
    /// Rotational surface `(cosh x₁ cos x₂, cosh x₁ sin x₂, φ(x₁))` with
    /// `φ' = √(1 − sinh²x₁)` — realizes the hyperbolic metric on its band.
    HyperbolicBand,
}

/// Eight-point Gauss–Legendre nodes/weights on [-1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.9602898564975362, 0.10122853629037626),
    (-0.7966664774136267, 0.22238103445337448),
    (-0.5255324099163290, 0.31370664587788729),
    (-0.1834346424956498, 0.36268378337836198),
    (0.1834346424956498, 0.36268378337836198),
    (0.5255324099163290, 0.31370664587788729),
    (0.7966664774136267, 0.22238103445337448),
    (0.9602898564975362, 0.10122853629037626),
];

/// `φ(x) = ∫₀ˣ √(1 − sinh²t) dt` by composite Gauss–Legendre quadrature.
fn hyperbolic_height(x: f64) -> f64 {
    let panels = (x.abs() / 0.05).ceil().max(1.0) as usize;
    let dx = x / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = p as f64 * dx;
        let mid = a + 0.5 * dx;
        let halfw = 0.5 * dx;
        for (node, weight) in GL8 {
            let t: f64 = mid + halfw * node;
            let s = t.sinh();
            total += weight * halfw * (1.0 - s * s).max(0.0).sqrt();
        }
    }
    total
}

/// Samples a catalog immersion on a mesh.
pub fn build_immersion<T: Real>(
    which: ImmersionCatalog,
    mesh: Mesh2<T>,
) -> ImmersionField2D<T> {
    ImmersionField2D::from_fn(mesh, |x1, x2| match which {
        ImmersionCatalog::Plane => Vector3::new(x1, x2, T::zero()),
        ImmersionCatalog::PolarPlanar => {
            Vector3::new(x1 * x2.cos(), x1 * x2.sin(), T::zero())
        }
        ImmersionCatalog::SphereCap => {
            Vector3::new(x1.sin() * x2.cos(), x1.sin() * x2.sin(), x1.cos())
        }
        ImmersionCatalog::HyperbolicBand => {
            let phi = real::<T>(hyperbolic_height(x1.to_f64().unwrap()));
            Vector3::new(x1.cosh() * x2.cos(), x1.cosh() * x2.sin(), phi)
        }
    })
}
