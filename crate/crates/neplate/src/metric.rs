//! 2d Riemannian metrics, their 3d block extensions, and the discrete
//! differential-geometry operators built on them: matrix square roots,
//! Christoffel symbols, Gaussian curvature, flatness checks and the
//! Laplace–Beltrami operator.

use nalgebra::{Matrix2, Matrix3};

use crate::error::{Error, Result};
use crate::grid::{Mesh2, Rect};
use crate::scalar::{real, Real};

/// Relative symmetry tolerance accepted by the SPD square root.
const SYM_TOL: f64 = 1e-12;
/// Flatness tolerance for metrics with analytic derivatives.
pub const FLATNESS_TOL_ANALYTIC: f64 = 1e-8;
/// Flatness tolerance for grid-sampled metrics (finite-difference error).
pub const FLATNESS_TOL_SAMPLED: f64 = 1e-5;

// ---------------------------------------------------------------------------
// SPD square roots and block extension
// ---------------------------------------------------------------------------

fn check_symmetric2<T: Real>(g: &Matrix2<T>) -> Result<()> {
    let scale = g.norm().max(T::one());
    if (g[(0, 1)] - g[(1, 0)]).abs() > real::<T>(SYM_TOL) * scale {
        return Err(Error::NotSpd("2x2 matrix is not symmetric".into()));
    }
    Ok(())
}

fn check_spd2<T: Real>(g: &Matrix2<T>) -> Result<()> {
    check_symmetric2(g)?;
    // Sylvester criterion for a symmetric 2x2.
    if g[(0, 0)] <= T::zero() || g.determinant() <= T::zero() {
        return Err(Error::NotSpd(
            "2x2 matrix has a non-positive eigenvalue".into(),
        ));
    }
    Ok(())
}

fn check_symmetric3<T: Real>(m: &Matrix3<T>) -> Result<()> {
    let scale = m.norm().max(T::one());
    let tol = real::<T>(SYM_TOL) * scale;
    for i in 0..3 {
        for j in (i + 1)..3 {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::NotSpd("3x3 matrix is not symmetric".into()));
            }
        }
    }
    Ok(())
}

pub(crate) fn check_spd3<T: Real>(m: &Matrix3<T>) -> Result<()> {
    check_symmetric3(m)?;
    // Leading principal minors.
    let m1 = m[(0, 0)];
    let m2 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let m3 = m.determinant();
    if m1 <= T::zero() || m2 <= T::zero() || m3 <= T::zero() {
        return Err(Error::NotSpd(
            "3x3 matrix has a non-positive eigenvalue".into(),
        ));
    }
    Ok(())
}

/// Unique symmetric positive definite square root of a 2x2 SPD matrix,
/// via eigendecomposition.
pub fn sqrt_metric2<T: Real>(g: &Matrix2<T>) -> Result<Matrix2<T>> {
    check_symmetric2(g)?;
    let eig = nalgebra::SymmetricEigen::new(*g);
    if eig.eigenvalues.iter().any(|&l| l <= T::zero()) {
        return Err(Error::NotSpd(
            "2x2 matrix has a non-positive eigenvalue".into(),
        ));
    }
    let sqrt_l = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt()));
    Ok(eig.eigenvectors * sqrt_l * eig.eigenvectors.transpose())
}

/// Unique symmetric positive definite square root of a 3x3 SPD matrix.
pub fn sqrt_metric3<T: Real>(g: &Matrix3<T>) -> Result<Matrix3<T>> {
    check_symmetric3(g)?;
    let eig = nalgebra::SymmetricEigen::new(*g);
    if eig.eigenvalues.iter().any(|&l| l <= T::zero()) {
        return Err(Error::NotSpd(
            "3x3 matrix has a non-positive eigenvalue".into(),
        ));
    }
    let sqrt_l = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt()));
    Ok(eig.eigenvectors * sqrt_l * eig.eigenvectors.transpose())
}

/// Extends a tangential 2x2 SPD metric to the 3x3 block metric with unit
/// normal component: `blockdiag(g_tan, 1)`.
pub fn extend_metric_3d<T: Real>(g_tan: &Matrix2<T>) -> Result<Matrix3<T>> {
    check_spd2(g_tan)?;
    let mut g = Matrix3::identity();
    for i in 0..2 {
        for j in 0..2 {
            g[(i, j)] = g_tan[(i, j)];
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// WellFrame
// ---------------------------------------------------------------------------

/// Pointwise data of the energy well `SO(3)·A(x')`: the block square root
/// `A = blockdiag(A_tan, 1)` and the inverses the quadratic forms need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellFrame<T> {
    /// 3x3 block square root of the extended metric, `A e₃ = e₃`.
    pub a: Matrix3<T>,
    pub a_inv: Matrix3<T>,
    /// `√(g_tan)`.
    pub a_tan: Matrix2<T>,
    pub a_tan_inv: Matrix2<T>,
    /// `A_tan⁻² = g_tan⁻¹`.
    pub a_tan_inv_sq: Matrix2<T>,
    /// `√(det g)`; equals `det A_tan`.
    pub sqrt_det_g: T,
}

impl<T: Real> WellFrame<T> {
    /// Builds the frame from the tangential 2x2 metric.
    pub fn from_tan_metric(g_tan: &Matrix2<T>) -> Result<Self> {
        let a_tan = sqrt_metric2(g_tan)?;
        let a_tan_inv = a_tan
            .try_inverse()
            .ok_or_else(|| Error::NotSpd("tangential square root not invertible".into()))?;
        let a_tan_inv_sq = a_tan_inv * a_tan_inv;
        let mut a = Matrix3::identity();
        let mut a_inv = Matrix3::identity();
        for i in 0..2 {
            for j in 0..2 {
                a[(i, j)] = a_tan[(i, j)];
                a_inv[(i, j)] = a_tan_inv[(i, j)];
            }
        }
        Ok(Self {
            a,
            a_inv,
            a_tan,
            a_tan_inv,
            a_tan_inv_sq,
            sqrt_det_g: a_tan.determinant(),
        })
    }
}

// ---------------------------------------------------------------------------
// Metric fields
// ---------------------------------------------------------------------------

/// Analytic catalog entries. Domains are chosen so the metric is SPD up to
/// the boundary and, for the curved entries, an isometric immersion of the
/// patch exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CatalogMetric<T> {
    /// `g = Id` on `[0,1]²`; flat.
    Identity,
    /// `g = diag(1, x₁²)` on `[1,2]×[0,1]`; flat (polar coordinates of the
    /// plane).
    PolarFlat,
    /// `g = diag(1, sin²x₁)` on `[0.4,1.2]×[0,1]`; Gaussian curvature +1.
    Sphere,
    /// `g = diag(1, cosh²x₁)` on `[0,0.75]×[0,1]`; Gaussian curvature −1.
    Hyperbolic,
    /// Conformal bump `g = (1 + c·exp(−|x'|²/σ²))·Id` on `[−1/2,1/2]²`;
    /// mixed-sign curvature.
    RadialBump { c: T, sigma: T },
}

impl<T: Real> CatalogMetric<T> {
    pub fn default_domain(&self) -> Rect<T> {
        match self {
            CatalogMetric::Identity => Rect::unit(),
            CatalogMetric::PolarFlat => {
                Rect::new(T::one(), real(2.0), T::zero(), T::one())
            }
            CatalogMetric::Sphere => Rect::new(real(0.4), real(1.2), T::zero(), T::one()),
            CatalogMetric::Hyperbolic => {
                Rect::new(T::zero(), real(0.75), T::zero(), T::one())
            }
            CatalogMetric::RadialBump { .. } => {
                Rect::new(real(-0.5), real(0.5), real(-0.5), real(0.5))
            }
        }
    }

    fn eval(&self, x1: T, x2: T) -> Matrix2<T> {
        match self {
            CatalogMetric::Identity => Matrix2::identity(),
            CatalogMetric::PolarFlat => {
                Matrix2::new(T::one(), T::zero(), T::zero(), x1 * x1)
            }
            CatalogMetric::Sphere => {
                let s = x1.sin();
                Matrix2::new(T::one(), T::zero(), T::zero(), s * s)
            }
            CatalogMetric::Hyperbolic => {
                let c = x1.cosh();
                Matrix2::new(T::one(), T::zero(), T::zero(), c * c)
            }
            CatalogMetric::RadialBump { c, sigma } => {
                let s2 = *sigma * *sigma;
                let r2 = x1 * x1 + x2 * x2;
                let rho = T::one() + *c * (-r2 / s2).exp();
                Matrix2::new(rho, T::zero(), T::zero(), rho)
            }
        }
    }

    /// Analytic first derivatives `[∂₁g, ∂₂g]`.
    fn eval_d(&self, x1: T, x2: T) -> [Matrix2<T>; 2] {
        let zero = Matrix2::zeros();
        match self {
            CatalogMetric::Identity => [zero, zero],
            CatalogMetric::PolarFlat => {
                let two: T = real(2.0);
                [
                    Matrix2::new(T::zero(), T::zero(), T::zero(), two * x1),
                    zero,
                ]
            }
            CatalogMetric::Sphere => {
                // d/dx sin²x = sin 2x
                [
                    Matrix2::new(T::zero(), T::zero(), T::zero(), (x1 + x1).sin()),
                    zero,
                ]
            }
            CatalogMetric::Hyperbolic => {
                // d/dx cosh²x = sinh 2x
                [
                    Matrix2::new(T::zero(), T::zero(), T::zero(), (x1 + x1).sinh()),
                    zero,
                ]
            }
            CatalogMetric::RadialBump { c, sigma } => {
                let s2 = *sigma * *sigma;
                let r2 = x1 * x1 + x2 * x2;
                let rho_p = -*c / s2 * (-r2 / s2).exp();
                let two: T = real(2.0);
                [
                    Matrix2::from_diagonal_element(rho_p * two * x1),
                    Matrix2::from_diagonal_element(rho_p * two * x2),
                ]
            }
        }
    }

    /// Analytic second derivatives `[∂₁₁g, ∂₁₂g, ∂₂₂g]`.
    fn eval_d2(&self, x1: T, x2: T) -> [Matrix2<T>; 3] {
        let zero = Matrix2::zeros();
        let two: T = real(2.0);
        match self {
            CatalogMetric::Identity => [zero, zero, zero],
            CatalogMetric::PolarFlat => [
                Matrix2::new(T::zero(), T::zero(), T::zero(), two),
                zero,
                zero,
            ],
            CatalogMetric::Sphere => [
                Matrix2::new(T::zero(), T::zero(), T::zero(), two * (x1 + x1).cos()),
                zero,
                zero,
            ],
            CatalogMetric::Hyperbolic => [
                Matrix2::new(T::zero(), T::zero(), T::zero(), two * (x1 + x1).cosh()),
                zero,
                zero,
            ],
            CatalogMetric::RadialBump { c, sigma } => {
                let s2 = *sigma * *sigma;
                let r2 = x1 * x1 + x2 * x2;
                let e = (-r2 / s2).exp();
                let rho_p = -*c / s2 * e;
                let rho_pp = *c / (s2 * s2) * e;
                let four: T = real(4.0);
                [
                    Matrix2::from_diagonal_element(rho_pp * four * x1 * x1 + two * rho_p),
                    Matrix2::from_diagonal_element(rho_pp * four * x1 * x2),
                    Matrix2::from_diagonal_element(rho_pp * four * x2 * x2 + two * rho_p),
                ]
            }
        }
    }
}

/// Grid-sampled metric with precomputed finite-difference derivative fields.
///
/// First derivatives use five-point fourth-order stencils (one-sided at the
/// boundary); second derivatives difference the first-derivative fields with
/// the same stencils. Off-node evaluation interpolates bilinearly, which
/// keeps every interpolated value SPD (the SPD cone is convex).
#[derive(Debug, Clone)]
struct SampledMetric<T> {
    mesh: Mesh2<T>,
    g: Vec<Matrix2<T>>,
    dg: [Vec<Matrix2<T>>; 2],
    d2g: [Vec<Matrix2<T>>; 3],
}

/// Applies the fourth-order first-derivative stencil along one axis of a
/// node field. `n >= 5` is required.
fn stencil_d1<T: Real, F: Fn(usize) -> Matrix2<T>>(
    n: usize,
    idx: usize,
    spacing: T,
    at: F,
) -> Matrix2<T> {
    let c = |x: f64| real::<T>(x);
    let inv12h = T::one() / (c(12.0) * spacing);
    if idx >= 2 && idx + 2 < n {
        (at(idx - 2) - at(idx + 2) + (at(idx + 1) - at(idx - 1)) * c(8.0)) * inv12h
    } else if idx == 0 {
        (at(0) * c(-25.0) + at(1) * c(48.0) - at(2) * c(36.0) + at(3) * c(16.0)
            - at(4) * c(3.0))
            * inv12h
    } else if idx == 1 {
        (at(0) * c(-3.0) - at(1) * c(10.0) + at(2) * c(18.0) - at(3) * c(6.0) + at(4))
            * inv12h
    } else if idx + 1 == n {
        (at(n - 1) * c(25.0) - at(n - 2) * c(48.0) + at(n - 3) * c(36.0)
            - at(n - 4) * c(16.0)
            + at(n - 5) * c(3.0))
            * inv12h
    } else {
        // idx == n - 2
        (at(n - 1) * c(3.0) + at(n - 2) * c(10.0) - at(n - 3) * c(18.0)
            + at(n - 4) * c(6.0)
            - at(n - 5))
            * inv12h
    }
}

impl<T: Real> SampledMetric<T> {
    fn new(mesh: Mesh2<T>, g: Vec<Matrix2<T>>) -> Result<Self> {
        if mesh.nx < 5 || mesh.ny < 5 {
            return Err(Error::MeshMismatch(
                "sampled metrics need at least a 5x5 grid".into(),
            ));
        }
        if g.len() != mesh.n_nodes() {
            return Err(Error::MeshMismatch(format!(
                "expected {} metric samples, got {}",
                mesh.n_nodes(),
                g.len()
            )));
        }
        for m in &g {
            check_spd2(m)?;
        }
        let (nx, ny) = (mesh.nx, mesh.ny);
        let (dx, dy) = (mesh.dx(), mesh.dy());
        let field_d = |src: &Vec<Matrix2<T>>, axis: usize| -> Vec<Matrix2<T>> {
            let mut out = vec![Matrix2::zeros(); src.len()];
            for j in 0..ny {
                for i in 0..nx {
                    out[j * nx + i] = if axis == 0 {
                        stencil_d1(nx, i, dx, |ii| src[j * nx + ii])
                    } else {
                        stencil_d1(ny, j, dy, |jj| src[jj * nx + i])
                    };
                }
            }
            out
        };
        let d1 = field_d(&g, 0);
        let d2 = field_d(&g, 1);
        let d11 = field_d(&d1, 0);
        let d12 = field_d(&d1, 1);
        let d22 = field_d(&d2, 1);
        Ok(Self {
            mesh,
            g,
            dg: [d1, d2],
            d2g: [d11, d12, d22],
        })
    }

    /// Bilinear interpolation of a node field at a point inside the domain.
    fn interp(&self, field: &[Matrix2<T>], x1: T, x2: T) -> Matrix2<T> {
        let m = &self.mesh;
        let fx = ((x1 - m.rect.x0) / m.dx()).max(T::zero());
        let fy = ((x2 - m.rect.y0) / m.dy()).max(T::zero());
        let mut i = fx.floor().to_usize().unwrap_or(0);
        let mut j = fy.floor().to_usize().unwrap_or(0);
        i = i.min(m.nx - 2);
        j = j.min(m.ny - 2);
        let tx = fx - real::<T>(i as f64);
        let ty = fy - real::<T>(j as f64);
        let f00 = field[m.node_index(i, j)];
        let f10 = field[m.node_index(i + 1, j)];
        let f01 = field[m.node_index(i, j + 1)];
        let f11 = field[m.node_index(i + 1, j + 1)];
        let one = T::one();
        f00 * ((one - tx) * (one - ty))
            + f10 * (tx * (one - ty))
            + f01 * ((one - tx) * ty)
            + f11 * (tx * ty)
    }
}

#[derive(Debug, Clone)]
enum MetricSource<T> {
    Catalog(CatalogMetric<T>),
    Sampled(SampledMetric<T>),
}

/// A 2d Riemannian metric on a rectangle, either from the analytic catalog
/// or sampled on a uniform grid. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MetricField<T> {
    domain: Rect<T>,
    source: MetricSource<T>,
}

impl<T: Real> MetricField<T> {
    /// Catalog metric on its default domain.
    pub fn catalog(entry: CatalogMetric<T>) -> Self {
        Self {
            domain: entry.default_domain(),
            source: MetricSource::Catalog(entry),
        }
    }

    /// Catalog metric on a caller-chosen domain. The metric must stay SPD
    /// there; this is checked on a coarse sample grid.
    pub fn catalog_on(entry: CatalogMetric<T>, domain: Rect<T>) -> Result<Self> {
        let field = Self {
            domain,
            source: MetricSource::Catalog(entry),
        };
        for j in 0..9 {
            for i in 0..9 {
                let x1 = domain.x0 + domain.width() * real::<T>(i as f64 / 8.0);
                let x2 = domain.y0 + domain.height() * real::<T>(j as f64 / 8.0);
                check_spd2(&entry.eval(x1, x2))?;
            }
        }
        Ok(field)
    }

    /// Builds a sampled metric from row-major node samples.
    pub fn from_samples(mesh: Mesh2<T>, samples: Vec<Matrix2<T>>) -> Result<Self> {
        Ok(Self {
            domain: mesh.rect,
            source: MetricSource::Sampled(SampledMetric::new(mesh, samples)?),
        })
    }

    /// Samples a closure on a uniform grid and builds a sampled metric from
    /// the result.
    pub fn sample_fn(
        mesh: Mesh2<T>,
        f: impl Fn(T, T) -> Matrix2<T>,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(mesh.n_nodes());
        for j in 0..mesh.ny {
            for i in 0..mesh.nx {
                let (x1, x2) = mesh.node_pos(i, j);
                samples.push(f(x1, x2));
            }
        }
        Self::from_samples(mesh, samples)
    }

    pub fn domain(&self) -> Rect<T> {
        self.domain
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self.source, MetricSource::Sampled(_))
    }

    /// Finite-difference step of a sampled metric (`max(dx, dy)` of its
    /// sample grid); `None` for catalog metrics, which differentiate
    /// analytically.
    pub fn derivative_step(&self) -> Option<T> {
        match &self.source {
            MetricSource::Catalog(_) => None,
            MetricSource::Sampled(s) => Some(s.mesh.dx().max(s.mesh.dy())),
        }
    }

    fn check_domain(&self, x1: T, x2: T) -> Result<()> {
        if !self.domain.contains(x1, x2) {
            return Err(Error::OutOfDomain {
                x1: x1.to_f64().unwrap_or(f64::NAN),
                x2: x2.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    /// Interior check for derivative evaluation: sampled metrics need a
    /// margin of one step from the boundary.
    fn check_derivative_domain(&self, x1: T, x2: T) -> Result<()> {
        self.check_domain(x1, x2)?;
        if let MetricSource::Sampled(s) = &self.source {
            let r = &self.domain;
            let (sx, sy) = (s.mesh.dx(), s.mesh.dy());
            if x1 < r.x0 + sx || x1 > r.x1 - sx || x2 < r.y0 + sy || x2 > r.y1 - sy {
                return Err(Error::OutOfDomain {
                    x1: x1.to_f64().unwrap_or(f64::NAN),
                    x2: x2.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    /// Tangential metric `g_{αβ}(x')`.
    pub fn g_tan(&self, x1: T, x2: T) -> Result<Matrix2<T>> {
        self.check_domain(x1, x2)?;
        Ok(match &self.source {
            MetricSource::Catalog(c) => c.eval(x1, x2),
            MetricSource::Sampled(s) => s.interp(&s.g, x1, x2),
        })
    }

    /// First derivatives `[∂₁g, ∂₂g]` of the tangential metric.
    pub fn dg_tan(&self, x1: T, x2: T) -> Result<[Matrix2<T>; 2]> {
        self.check_derivative_domain(x1, x2)?;
        Ok(match &self.source {
            MetricSource::Catalog(c) => c.eval_d(x1, x2),
            MetricSource::Sampled(s) => {
                [s.interp(&s.dg[0], x1, x2), s.interp(&s.dg[1], x1, x2)]
            }
        })
    }

    /// Second derivatives `[∂₁₁g, ∂₁₂g, ∂₂₂g]` of the tangential metric.
    pub fn d2g_tan(&self, x1: T, x2: T) -> Result<[Matrix2<T>; 3]> {
        self.check_derivative_domain(x1, x2)?;
        Ok(match &self.source {
            MetricSource::Catalog(c) => c.eval_d2(x1, x2),
            MetricSource::Sampled(s) => [
                s.interp(&s.d2g[0], x1, x2),
                s.interp(&s.d2g[1], x1, x2),
                s.interp(&s.d2g[2], x1, x2),
            ],
        })
    }

    /// Well frame `A = √g` (block form) at a point.
    pub fn well_frame(&self, x1: T, x2: T) -> Result<WellFrame<T>> {
        WellFrame::from_tan_metric(&self.g_tan(x1, x2)?)
    }

    /// Sup norm of the metric gradient over an `n × n` sample lattice:
    /// `max √(|∂₁g|² + |∂₂g|²)` in the Frobenius pairing. For sampled
    /// metrics the lattice shrinks to the derivative-admissible interior.
    pub fn grad_sup_norm(&self, n: usize) -> T {
        let pts = self.sample_lattice(n);
        let mut sup = T::zero();
        for (x1, x2) in pts {
            if let Ok([d1, d2]) = self.dg_tan(x1, x2) {
                let v = (d1.norm_squared() + d2.norm_squared()).sqrt();
                sup = sup.max(v);
            }
        }
        sup
    }

    /// Sample lattice used by flatness checks and gradient sup norms:
    /// `n × n` points spanning the domain, pulled inward by one step for
    /// sampled metrics.
    fn sample_lattice(&self, n: usize) -> Vec<(T, T)> {
        let r = self.domain;
        let (mut x0, mut x1, mut y0, mut y1) = (r.x0, r.x1, r.y0, r.y1);
        if let MetricSource::Sampled(s) = &self.source {
            x0 += s.mesh.dx();
            x1 -= s.mesh.dx();
            y0 += s.mesh.dy();
            y1 -= s.mesh.dy();
        }
        let mut pts = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let fx = real::<T>(i as f64 / (n - 1) as f64);
                let fy = real::<T>(j as f64 / (n - 1) as f64);
                pts.push((x0 + (x1 - x0) * fx, y0 + (y1 - y0) * fy));
            }
        }
        pts
    }
}

// ---------------------------------------------------------------------------
// Christoffel symbols and curvature
// ---------------------------------------------------------------------------

/// Christoffel symbols `Γ^m_{ij}` of a 2d metric, indexed `[m][i][j]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffel<T>(pub [[[T; 2]; 2]; 2]);

impl<T: Real> Christoffel<T> {
    #[inline]
    pub fn get(&self, m: usize, i: usize, j: usize) -> T {
        self.0[m][i][j]
    }
}

/// `Γ^m_{ij} = ½ g^{km} (∂ᵢ g_{kj} + ∂ⱼ g_{ik} − ∂ₖ g_{ij})`.
pub fn christoffel<T: Real>(field: &MetricField<T>, x1: T, x2: T) -> Result<Christoffel<T>> {
    let g = field.g_tan(x1, x2)?;
    let dg = field.dg_tan(x1, x2)?;
    let g_inv = g
        .try_inverse()
        .ok_or_else(|| Error::NotSpd("metric not invertible".into()))?;
    let half: T = real(0.5);
    let mut out = [[[T::zero(); 2]; 2]; 2];
    for m in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                let mut sum = T::zero();
                for k in 0..2 {
                    let term = dg[i][(k, j)] + dg[j][(i, k)] - dg[k][(i, j)];
                    sum += g_inv[(k, m)] * term;
                }
                out[m][i][j] = half * sum;
            }
        }
    }
    Ok(Christoffel(out))
}

/// Gaussian curvature `κ = R₁₂₁₂ / det g` from the covariant Riemann tensor
/// of the 2d metric.
pub fn gaussian_curvature<T: Real>(field: &MetricField<T>, x1: T, x2: T) -> Result<T> {
    let g = field.g_tan(x1, x2)?;
    let d2 = field.d2g_tan(x1, x2)?;
    let gamma = christoffel(field, x1, x2)?;
    let half: T = real(0.5);
    // R_{1212} = ½(2∂₁₂g₁₂ − ∂₂₂g₁₁ − ∂₁₁g₂₂) + g_{mn}(Γ^m₂₁Γ^n₁₂ − Γ^m₂₂Γ^n₁₁)
    let second = half * ((d2[1][(0, 1)] + d2[1][(0, 1)]) - d2[2][(0, 0)] - d2[0][(1, 1)]);
    let mut quad = T::zero();
    for m in 0..2 {
        for n in 0..2 {
            quad += g[(m, n)]
                * (gamma.get(m, 1, 0) * gamma.get(n, 0, 1)
                    - gamma.get(m, 1, 1) * gamma.get(n, 0, 0));
        }
    }
    Ok((second + quad) / g.determinant())
}

/// Result of a flatness scan over sample points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatnessReport<T> {
    pub flat: bool,
    pub max_abs_curvature: T,
    pub samples: usize,
}

/// Checks whether the 3d Riemann tensor of the block-extended metric
/// vanishes, which for this block structure is equivalent to the 2d
/// Gaussian curvature vanishing. Scans `κ` over a sample lattice and
/// compares the max against the analytic or sampled flatness tolerance.
pub fn riemann_flat_3d<T: Real>(field: &MetricField<T>) -> FlatnessReport<T> {
    let n = 33;
    let pts = field.sample_lattice(n);
    let mut max_abs = T::zero();
    let mut samples = 0;
    for (x1, x2) in pts {
        if let Ok(k) = gaussian_curvature(field, x1, x2) {
            max_abs = max_abs.max(k.abs());
            samples += 1;
        }
    }
    let tol = if field.is_sampled() {
        real::<T>(FLATNESS_TOL_SAMPLED)
    } else {
        real::<T>(FLATNESS_TOL_ANALYTIC)
    };
    FlatnessReport {
        flat: max_abs <= tol,
        max_abs_curvature: max_abs,
        samples,
    }
}

// ---------------------------------------------------------------------------
// Laplace–Beltrami
// ---------------------------------------------------------------------------

/// Discrete Laplace–Beltrami values on a mesh; boundary nodes carry no
/// valid value.
#[derive(Debug, Clone)]
pub struct LaplaceField<T> {
    pub values: Vec<T>,
    pub interior: Vec<bool>,
}

/// `Δ_g f = |g|^{-1/2} ∂_i(|g|^{1/2} g^{ij} ∂_j f)` discretized in
/// conservative flux form with centered differences; fluxes are evaluated
/// at half-nodes. Boundary nodes are marked invalid.
pub fn laplace_beltrami<T: Real>(
    field: &MetricField<T>,
    f: &[T],
    mesh: &Mesh2<T>,
) -> Result<LaplaceField<T>> {
    if f.len() != mesh.n_nodes() {
        return Err(Error::MeshMismatch(format!(
            "scalar field has {} values for a {}-node mesh",
            f.len(),
            mesh.n_nodes()
        )));
    }
    let r = field.domain();
    if !(r.contains(mesh.rect.x0, mesh.rect.y0) && r.contains(mesh.rect.x1, mesh.rect.y1)) {
        return Err(Error::MeshMismatch(
            "mesh extends outside the metric domain".into(),
        ));
    }
    let (nx, ny) = (mesh.nx, mesh.ny);
    let (dx, dy) = (mesh.dx(), mesh.dy());
    let half: T = real(0.5);
    let quarter: T = real(0.25);

    // √|g|·g^{ij} at an arbitrary point.
    let coeff = |x1: T, x2: T| -> Result<(T, Matrix2<T>)> {
        let g = field.g_tan(x1, x2)?;
        let det = g.determinant();
        let sqrt_det = det.sqrt();
        let g_inv = g
            .try_inverse()
            .ok_or_else(|| Error::NotSpd("metric not invertible".into()))?;
        Ok((sqrt_det, g_inv))
    };

    let mut values = vec![T::zero(); f.len()];
    let mut interior = vec![false; f.len()];
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            let (x1, x2) = mesh.node_pos(i, j);
            let fc = |ii: usize, jj: usize| f[mesh.node_index(ii, jj)];

            // Flux P¹ at (i±1/2, j); the transverse derivative averages the
            // two centered differences adjacent to the half-node.
            let flux1 = |ip: usize| -> Result<T> {
                let xh = x1 + (real::<T>(ip as f64) - half) * dx;
                let (s, gi) = coeff(xh, x2)?;
                let il = i + ip - 1;
                let d1 = (fc(il + 1, j) - fc(il, j)) / dx;
                let d2 = quarter
                    * ((fc(il, j + 1) - fc(il, j - 1)) / dy
                        + (fc(il + 1, j + 1) - fc(il + 1, j - 1)) / dy);
                Ok(s * (gi[(0, 0)] * d1 + gi[(0, 1)] * d2))
            };
            // Flux P² at (i, j±1/2).
            let flux2 = |jp: usize| -> Result<T> {
                let yh = x2 + (real::<T>(jp as f64) - half) * dy;
                let (s, gi) = coeff(x1, yh)?;
                let jl = j + jp - 1;
                let d2 = (fc(i, jl + 1) - fc(i, jl)) / dy;
                let d1 = quarter
                    * ((fc(i + 1, jl) - fc(i - 1, jl)) / dx
                        + (fc(i + 1, jl + 1) - fc(i - 1, jl + 1)) / dx);
                Ok(s * (gi[(1, 0)] * d1 + gi[(1, 1)] * d2))
            };

            let (s_c, _) = coeff(x1, x2)?;
            let div = (flux1(1)? - flux1(0)?) / dx + (flux2(1)? - flux2(0)?) / dy;
            let idx = mesh.node_index(i, j);
            values[idx] = div / s_c;
            interior[idx] = true;
        }
    }
    Ok(LaplaceField { values, interior })
}
