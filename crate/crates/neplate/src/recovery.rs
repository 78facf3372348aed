//! Recovery deformations `u(x', x₃) = y(x') + x₃·n(x') + (x₃²/2)·d(x')`
//! built from a discrete immersion, and the study verifying that
//! `Iʰ(u)/h²` approaches the 2d limit energy as the thickness shrinks.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::kirchhoff::{
    average_to_nodes, isometry_defect, limit_energy, midplane_frames, normal_field,
    ImmersionField2D,
};
use crate::metric::MetricField;
use crate::plate::{energy_ih, DeformationField3D};
use crate::scalar::{real, Real};
use crate::wells::reduction_maps;

/// An immersion together with its recovery data on a specific grid.
#[derive(Debug, Clone)]
pub struct RecoveryBundle<T> {
    pub y: ImmersionField2D<T>,
    /// Per-cell direction of the quadratic correction.
    pub d: Vec<Vector3<T>>,
    pub h: T,
    pub u: DeformationField3D<T>,
}

/// Per-cell correction direction `d = Q·A⁻¹·c(A_tan⁻¹ (∇y)ᵀ∇n)` with
/// `Q = [∂₁y, ∂₂y, n]` and `c` from [`reduction_maps`].
///
/// For the canonical squared-distance well `c ≡ 0`, so `d` vanishes up to
/// roundoff; the construction is kept in full because the maps are what
/// define the recovery for any admissible density.
pub fn d_field<T: Real>(
    y: &ImmersionField2D<T>,
    metric: &MetricField<T>,
) -> Result<Vec<Vector3<T>>> {
    let normals = normal_field(y)?;
    let defect = isometry_defect(y, metric)?;
    let area = y.mesh.rect.area();
    if defect > real::<T>(1e-3) * area {
        eprintln!(
            "warning: recovery built from an immersion with isometry defect {:.3e} (threshold {:.3e})",
            defect.to_f64().unwrap_or(f64::NAN),
            1e-3 * area.to_f64().unwrap_or(f64::NAN),
        );
    }
    let frames = midplane_frames(metric, &y.mesh)?;
    let mesh = y.mesh;
    let mut d = vec![Vector3::zeros(); mesh.n_cells()];
    for j in 0..mesh.ny - 1 {
        for i in 0..mesh.nx - 1 {
            let c = mesh.cell_index(i, j);
            if normals.degenerate[c] {
                continue;
            }
            let dy = y.cell_gradient(i, j);
            let n = normals.cell_normals[c];
            let q = Matrix3::from_columns(&[dy.column(0).into(), dy.column(1).into(), n]);
            let frame = &frames[c];
            let dn_tan = dy.transpose()
                * crate::kirchhoff::cell_gradient_raw(&normals.nodal_normals, &mesh, i, j);
            let f_tan = frame.a_tan_inv * dn_tan;
            let maps = reduction_maps(&frame.a_tan, &f_tan)?;
            d[c] = q * (frame.a_inv * maps.c);
        }
    }
    Ok(d)
}

/// Builds the recovery deformation on a 3d grid whose in-plane mesh matches
/// the immersion's mesh. Cell normals and corrections are averaged to the
/// nodes before assembling, matching the 2d discretization of `∇n`.
pub fn build_recovery<T: Real>(
    y: &ImmersionField2D<T>,
    metric: &MetricField<T>,
    grid: &Grid3<T>,
) -> Result<DeformationField3D<T>> {
    if grid.mesh != y.mesh {
        return Err(Error::MeshMismatch(
            "recovery grid must share the immersion mesh".into(),
        ));
    }
    let normals = normal_field(y)?;
    let d_cells = d_field(y, metric)?;
    let d_nodes = average_to_nodes(&d_cells, &normals.degenerate, &y.mesh);
    let half: T = real(0.5);
    let n2 = y.mesh.n_nodes();
    let mut u = Vec::with_capacity(grid.n_nodes());
    for k in 0..grid.nz {
        let x3 = grid.x3(k);
        for v in 0..n2 {
            u.push(y.y[v] + normals.nodal_normals[v] * x3 + d_nodes[v] * (half * x3 * x3));
        }
    }
    Ok(DeformationField3D { grid: *grid, u })
}

/// Convenience constructor bundling the immersion, its correction field and
/// the assembled deformation.
pub fn recovery_bundle<T: Real>(
    y: &ImmersionField2D<T>,
    metric: &MetricField<T>,
    grid: &Grid3<T>,
) -> Result<RecoveryBundle<T>> {
    Ok(RecoveryBundle {
        y: y.clone(),
        d: d_field(y, metric)?,
        h: grid.h,
        u: build_recovery(y, metric, grid)?,
    })
}

/// One row of a recovery convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow<T> {
    pub h: T,
    pub energy_over_h2: T,
    pub limit_energy: T,
    /// `None` when the limit energy sits below the 1e-12 floor, where the
    /// quotient is meaningless.
    pub ratio: Option<T>,
}

/// Evaluates `Iʰ(uʰ)/h²` for each thickness in `h_list` against the fixed
/// 2d limit energy of the immersion. Rows are deterministic.
pub fn convergence_study<T: Real>(
    y: &ImmersionField2D<T>,
    metric: &MetricField<T>,
    h_list: &[T],
    nz: usize,
) -> Result<Vec<ConvergenceRow<T>>> {
    if h_list.is_empty() {
        return Err(Error::EmptyResult);
    }
    for pair in h_list.windows(2) {
        if pair[1] >= pair[0] {
            return Err(Error::Parse(
                "h_list must be strictly decreasing".into(),
            ));
        }
    }
    if h_list[h_list.len() - 1] <= T::zero() {
        return Err(Error::Parse("thicknesses must be positive".into()));
    }
    let limit = limit_energy(y, metric)?;
    let floor = real::<T>(1e-12);
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let grid = Grid3::new(y.mesh, nz, h)?;
        let u = build_recovery(y, metric, &grid)?;
        let e = energy_ih(&u, metric, &grid)?;
        let over_h2 = e / (h * h);
        let ratio = if limit > floor {
            Some(over_h2 / limit)
        } else {
            None
        };
        rows.push(ConvergenceRow {
            h,
            energy_over_h2: over_h2,
            limit_energy: limit,
            ratio,
        });
    }
    Ok(rows)
}
