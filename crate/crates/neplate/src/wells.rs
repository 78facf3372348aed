//! The well energy density `W(x,F) = dist²(F, SO(3)·A(x))`, its gradient,
//! the orthogonal projection onto `sym·A⁻¹`, and the quadratic forms `Q₃`
//! and `Q₂` with their explicit reduction maps.
//!
//! `Q₃` is the Hessian of `W` at the well point `A`; for the squared
//! distance it has the closed form `Q₃(F) = 2·|P F|²` where `P` projects
//! onto `sym·A⁻¹`. `Q₂` partially minimizes `Q₃` over completions of a
//! tangential 2x2 argument; the minimizing completion is reached by the
//! linear maps of [`reduction_maps`].

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::metric::{check_spd3, WellFrame};
use crate::scalar::{real, Real};

/// Below this value of `σ₂+σ₃` the distance function is nonsmooth and the
/// nearest rotation is no longer unique.
const SMOOTH_TOL: f64 = 1e-10;

/// Frobenius inner product of 3x3 matrices.
#[inline]
pub(crate) fn frob3<T: Real>(a: &Matrix3<T>, b: &Matrix3<T>) -> T {
    let mut s = T::zero();
    for i in 0..9 {
        s += a[i] * b[i];
    }
    s
}

/// Embeds a 2x2 tangential block into a 3x3 matrix with zero completion.
#[inline]
pub fn embed_tan<T: Real>(f_tan: &Matrix2<T>) -> Matrix3<T> {
    let mut f = Matrix3::zeros();
    for i in 0..2 {
        for j in 0..2 {
            f[(i, j)] = f_tan[(i, j)];
        }
    }
    f
}

// ---------------------------------------------------------------------------
// Distance to the well
// ---------------------------------------------------------------------------

/// Squared Frobenius distance from a deformation gradient to the well
/// `SO(3)·A`, together with the minimizing rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellDistance<T> {
    /// `|F − R·A|²` at the nearest rotation `R`.
    pub value: T,
    /// The rotation realizing the distance (a subgradient choice at
    /// nonsmooth points).
    pub nearest_rotation: Matrix3<T>,
    /// False where `σ₂+σ₃` of `F·Aᵀ` is below tolerance.
    pub smooth: bool,
}

/// Distance of `F` to `SO(3)·A` for a precomputed well frame.
///
/// The nearest rotation is `U·diag(1,1,s)·Vᵀ` from the SVD `F·Aᵀ = UΣVᵀ`
/// with `s = det(U)·det(Vᵀ)`, which folds the orientation sign into the
/// direction of the smallest singular value. The value is accumulated as
/// `|F − R·A|²` directly; the algebraically equal form
/// `|F|² + |A|² − 2(σ₁+σ₂+sign(det F·Aᵀ)·σ₃)` cancels catastrophically
/// near the well.
pub fn dist_to_well_frame<T: Real>(f: &Matrix3<T>, frame: &WellFrame<T>) -> WellDistance<T> {
    let m = f * frame.a;
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd of 3x3 always yields u");
    let v_t = svd.v_t.expect("svd of 3x3 always yields v_t");
    let s = u.determinant() * v_t.determinant();
    // Singular values are sorted descending; fold the sign into the last.
    let mut d = Matrix3::identity();
    d[(2, 2)] = if s >= T::zero() { T::one() } else { -T::one() };
    let rotation = u * d * v_t;
    let diff = f - rotation * frame.a;
    let sigma = svd.singular_values;
    WellDistance {
        value: frob3(&diff, &diff),
        nearest_rotation: rotation,
        smooth: sigma[1] + sigma[2] > real::<T>(SMOOTH_TOL),
    }
}

/// Distance of `F` to the well `SO(3)·A` for a 3x3 SPD matrix `A`.
pub fn dist_to_well<T: Real>(f: &Matrix3<T>, a: &Matrix3<T>) -> Result<WellDistance<T>> {
    check_spd3(a)?;
    Ok(dist_to_well_frame(f, &frame_from_a(a)?))
}

/// Fréchet derivative of [`dist_to_well`] with respect to `F`:
/// `2(F − R·A)`. At nonsmooth points this is the subgradient selected by
/// the SVD sign convention.
pub fn well_gradient<T: Real>(f: &Matrix3<T>, a: &Matrix3<T>) -> Result<Matrix3<T>> {
    check_spd3(a)?;
    Ok(well_gradient_frame(f, &frame_from_a(a)?))
}

/// Gradient variant for a precomputed frame.
pub fn well_gradient_frame<T: Real>(f: &Matrix3<T>, frame: &WellFrame<T>) -> Matrix3<T> {
    let d = dist_to_well_frame(f, frame);
    (f - d.nearest_rotation * frame.a) * real::<T>(2.0)
}

/// Builds a [`WellFrame`] from a full 3x3 SPD `A`. Requires the block
/// structure `A e₃ = e₃` that every extended 2d metric produces.
fn frame_from_a<T: Real>(a: &Matrix3<T>) -> Result<WellFrame<T>> {
    let tol = real::<T>(1e-12) * a.norm().max(T::one());
    let block = (a[(2, 2)] - T::one()).abs() <= tol
        && a[(0, 2)].abs() <= tol
        && a[(1, 2)].abs() <= tol
        && a[(2, 0)].abs() <= tol
        && a[(2, 1)].abs() <= tol;
    if !block {
        return Err(Error::NotSpd(
            "A must have the block form blockdiag(A_tan, 1)".into(),
        ));
    }
    let a_tan = Matrix2::new(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    WellFrame::from_a_tan(&a_tan)
}

// ---------------------------------------------------------------------------
// Projection onto sym·A⁻¹
// ---------------------------------------------------------------------------

/// Orthogonal projection of `F` onto `{S·A⁻¹ | S symmetric}` in the
/// Frobenius inner product, for 3x3 SPD `A`.
///
/// The projection is `B·A⁻¹` where the symmetric `B` solves the Lyapunov
/// equation `B·A⁻² + A⁻²·B = F·A⁻¹ + (F·A⁻¹)ᵀ`, solved exactly in the
/// eigenbasis of `A⁻²`.
pub fn project_sym_ainv<T: Real>(f: &Matrix3<T>, a: &Matrix3<T>) -> Result<Matrix3<T>> {
    check_spd3(a)?;
    let eig = nalgebra::SymmetricEigen::new(*a);
    if eig.eigenvalues.iter().any(|&l| l <= T::zero()) {
        return Err(Error::NotSpd("A has a non-positive eigenvalue".into()));
    }
    let q = eig.eigenvectors;
    let a_inv = q * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| T::one() / l))
        * q.transpose();
    let mu = eig.eigenvalues.map(|l| T::one() / (l * l));
    let fa = f * a_inv;
    let m = fa + fa.transpose();
    let m_hat = q.transpose() * m * q;
    let mut b_hat = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            b_hat[(i, j)] = m_hat[(i, j)] / (mu[i] + mu[j]);
        }
    }
    let b = q * b_hat * q.transpose();
    Ok(b * a_inv)
}

/// 2x2 analog of [`project_sym_ainv`]: projection onto `sym·A_tan⁻¹`.
///
/// Solves the 3-unknown linear system for the symmetric `B` in
/// `B·G + G·B = F·A⁻¹ + (F·A⁻¹)ᵀ` with `G = A_tan⁻²` written out in
/// components, independently of any eigendecomposition.
pub fn project_sym_ainv_tan<T: Real>(
    f_tan: &Matrix2<T>,
    a_tan: &Matrix2<T>,
) -> Result<Matrix2<T>> {
    let a_inv = a_tan
        .try_inverse()
        .ok_or_else(|| Error::NotSpd("A_tan not invertible".into()))?;
    if a_tan[(0, 0)] <= T::zero() || a_tan.determinant() <= T::zero() {
        return Err(Error::NotSpd("A_tan is not SPD".into()));
    }
    let g = a_inv * a_inv;
    let fa = f_tan * a_inv;
    let m = fa + fa.transpose();
    // Unknowns (b11, b12, b22); rows are the (1,1), (1,2), (2,2) entries of
    // B·G + G·B.
    let two: T = real(2.0);
    let sys = Matrix3::new(
        two * g[(0, 0)],
        two * g[(0, 1)],
        T::zero(),
        g[(0, 1)],
        g[(0, 0)] + g[(1, 1)],
        g[(0, 1)],
        T::zero(),
        two * g[(0, 1)],
        two * g[(1, 1)],
    );
    let rhs = Vector3::new(m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotSpd("singular tangential Lyapunov system".into()))?;
    let b = Matrix2::new(sol[0], sol[1], sol[1], sol[2]);
    Ok(b * a_inv)
}

/// Projection onto `sym·A⁻¹` through the explicit block decomposition valid
/// when `A = blockdiag(A_tan, 1)`:
///
/// * the tangential block is the 2d projection of `F_tan`;
/// * the off column is `β = (Id + A_tan⁻²)⁻¹ (f_col + A_tan⁻¹ f_rowᵀ)`,
///   the off row is `βᵀA_tan⁻¹`;
/// * the corner entry `f₃₃` is left unchanged.
///
/// This is an independent route from the Lyapunov solve of
/// [`project_sym_ainv`] and the two are cross-checked in the tests.
pub fn project_sym_ainv_block<T: Real>(
    f: &Matrix3<T>,
    frame: &WellFrame<T>,
) -> Result<Matrix3<T>> {
    let f_tan = Matrix2::new(f[(0, 0)], f[(0, 1)], f[(1, 0)], f[(1, 1)]);
    let p_tan = project_sym_ainv_tan(&f_tan, &frame.a_tan)?;
    let col = Vector2::new(f[(0, 2)], f[(1, 2)]);
    let row = Vector2::new(f[(2, 0)], f[(2, 1)]);
    let lhs = Matrix2::identity() + frame.a_tan_inv_sq;
    let beta = lhs
        .lu()
        .solve(&(col + frame.a_tan_inv * row))
        .ok_or_else(|| Error::NotSpd("Id + A_tan⁻² singular".into()))?;
    let row_out = frame.a_tan_inv * beta;
    let mut p = Matrix3::zeros();
    for i in 0..2 {
        for j in 0..2 {
            p[(i, j)] = p_tan[(i, j)];
        }
        p[(i, 2)] = beta[i];
        p[(2, i)] = row_out[i];
    }
    p[(2, 2)] = f[(2, 2)];
    Ok(p)
}

// ---------------------------------------------------------------------------
// Quadratic forms
// ---------------------------------------------------------------------------

/// `Q₃(F) = ∇²W(x,·)|_A (F,F)`; for the squared-distance well this equals
/// `2·|P_{sym·A⁻¹} F|²`. Nonnegative, zero exactly on `skew·A`.
pub fn q3<T: Real>(a: &Matrix3<T>, f: &Matrix3<T>) -> Result<T> {
    let p = project_sym_ainv(f, a)?;
    Ok(real::<T>(2.0) * frob3(&p, &p))
}

/// Frame variant of [`q3`] using the block projection.
pub fn q3_frame<T: Real>(frame: &WellFrame<T>, f: &Matrix3<T>) -> Result<T> {
    let p = project_sym_ainv_block(f, frame)?;
    Ok(real::<T>(2.0) * frob3(&p, &p))
}

/// The linear reduction maps of the completion problem: `b` in the
/// convention of the block decomposition (negated projection entries) and
/// `c = −blockdiag(Id + A_tan⁻², 1)·b`, the vector that reappears in the
/// recovery direction `d = Q·A⁻¹·c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionMaps<T> {
    pub b: Vector3<T>,
    pub c: Vector3<T>,
}

/// Computes the reduction maps for a tangential argument.
///
/// The off-entries of the projected zero-completion of `F_tan` feed the
/// system `[b₁ b₂](Id + A_tan⁻²) = −[f₁₃ f₂₃] − [f₃₁ f₃₂]A_tan⁻¹` and
/// `b₃ = −f₃₃`. For the squared-distance well that projection has zero
/// off-entries, so `b = c = 0`; the maps stay exactly linear in `F_tan`.
pub fn reduction_maps<T: Real>(
    a_tan: &Matrix2<T>,
    f_tan: &Matrix2<T>,
) -> Result<ReductionMaps<T>> {
    let frame = WellFrame::from_a_tan(a_tan)?;
    let p = project_sym_ainv_block(&embed_tan(f_tan), &frame)?;
    let col = Vector2::new(p[(0, 2)], p[(1, 2)]);
    let row = Vector2::new(p[(2, 0)], p[(2, 1)]);
    let lhs = Matrix2::identity() + frame.a_tan_inv_sq;
    let b12 = lhs
        .lu()
        .solve(&(-(col + frame.a_tan_inv * row)))
        .ok_or_else(|| Error::NotSpd("Id + A_tan⁻² singular".into()))?;
    let b = Vector3::new(b12[0], b12[1], -p[(2, 2)]);
    let c12 = -(lhs * b12);
    let c = Vector3::new(c12[0], c12[1], -b[2]);
    Ok(ReductionMaps { b, c })
}

/// Closed form of `Q₂(F_tan) = min{Q₃(F̃) : F̃_tan = F_tan}`: project the
/// tangential argument, complete it through the reduction maps, and
/// evaluate `Q₃` at the assembled matrix.
pub fn q2<T: Real>(a_tan: &Matrix2<T>, f_tan: &Matrix2<T>) -> Result<T> {
    let frame = WellFrame::from_a_tan(a_tan)?;
    q2_frame(&frame, f_tan)
}

/// Frame variant of [`q2`].
pub fn q2_frame<T: Real>(frame: &WellFrame<T>, f_tan: &Matrix2<T>) -> Result<T> {
    let p_tan = project_sym_ainv_tan(f_tan, &frame.a_tan)?;
    let maps = reduction_maps(&frame.a_tan, f_tan)?;
    // Assemble with the projection-oriented entries (the negatives of b).
    let mut completion = embed_tan(&p_tan);
    let beta = Vector2::new(-maps.b[0], -maps.b[1]);
    let row = frame.a_tan_inv * beta;
    completion[(0, 2)] = beta[0];
    completion[(1, 2)] = beta[1];
    completion[(2, 0)] = row[0];
    completion[(2, 1)] = row[1];
    completion[(2, 2)] = -maps.b[2];
    q3_frame(frame, &completion)
}

/// Independent oracle for [`q2`]: minimizes the quadratic form over the
/// five free completion entries by solving the normal equations.
///
/// The 5x5 Gram matrix is rank-deficient (skew completions span a 2d
/// kernel), so the minimum-norm least-squares solution is taken; the
/// minimum value is unique regardless. Deterministic.
pub fn q2_bruteforce<T: Real>(a_tan: &Matrix2<T>, f_tan: &Matrix2<T>) -> Result<T> {
    let frame = WellFrame::from_a_tan(a_tan)?;
    let form = |m: &Matrix3<T>| q3_frame(&frame, m);
    q2_minimize_completions(form, f_tan)
}

/// The completion matrix found by the normal-equation minimizer of
/// [`q2_bruteforce`] (the minimum-norm representative; minimizers differ
/// by `skew·A` directions that the projection annihilates).
pub fn bruteforce_completion<T: Real>(
    a_tan: &Matrix2<T>,
    f_tan: &Matrix2<T>,
) -> Result<Matrix3<T>> {
    let frame = WellFrame::from_a_tan(a_tan)?;
    let form = |m: &Matrix3<T>| q3_frame(&frame, m);
    minimize_completions_inner(form, f_tan).map(|(_, m)| m)
}

/// Minimizes an arbitrary nonnegative quadratic form over the completions
/// of `F_tan`. Used both by [`q2_bruteforce`] and for caller-supplied
/// Hessian forms of alternative well energies.
pub fn q2_minimize_completions<T: Real>(
    form: impl Fn(&Matrix3<T>) -> Result<T>,
    f_tan: &Matrix2<T>,
) -> Result<T> {
    minimize_completions_inner(form, f_tan).map(|(v, _)| v)
}

fn minimize_completions_inner<T: Real>(
    form: impl Fn(&Matrix3<T>) -> Result<T>,
    f_tan: &Matrix2<T>,
) -> Result<(T, Matrix3<T>)> {
    let f0 = embed_tan(f_tan);
    let mut basis = Vec::with_capacity(5);
    for (i, j) in [(0, 2), (1, 2), (2, 0), (2, 1), (2, 2)] {
        let mut e = Matrix3::zeros();
        e[(i, j)] = T::one();
        basis.push(e);
    }
    // Polarization of the quadratic form.
    let q0 = form(&f0)?;
    let half: T = real(0.5);
    let mut qe = [T::zero(); 5];
    for (idx, e) in basis.iter().enumerate() {
        qe[idx] = form(e)?;
    }
    let mut gram = nalgebra::Matrix5::<T>::zeros();
    let mut lin = nalgebra::Vector5::<T>::zeros();
    for i in 0..5 {
        for j in i..5 {
            let v = if i == j {
                qe[i]
            } else {
                half * (form(&(basis[i] + basis[j]))? - qe[i] - qe[j])
            };
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
        lin[i] = half * (form(&(f0 + basis[i]))? - q0 - qe[i]);
    }
    let svd = gram.svd(true, true);
    let max_sv = svd.singular_values.max();
    let v = svd
        .solve(&(-lin), real::<T>(1e-10) * max_sv)
        .map_err(|e| Error::Parse(format!("normal-equation solve failed: {e}")))?;
    let mut opt = f0;
    for i in 0..5 {
        opt += basis[i] * v[i];
    }
    Ok((form(&opt)?, opt))
}

// ---------------------------------------------------------------------------
// Energy-density hook
// ---------------------------------------------------------------------------

/// A stored energy density over the well `SO(3)·A(x')`, abstracted so the
/// plate functionals can run on alternative densities. Only the default
/// squared distance ships with the closed-form `Q₂`; alternative densities
/// get the finite-difference Hessian and the completion minimizer.
pub trait WellEnergy<T: Real>: Sync {
    fn value(&self, frame: &WellFrame<T>, f: &Matrix3<T>) -> T;
    fn gradient(&self, frame: &WellFrame<T>, f: &Matrix3<T>) -> Matrix3<T>;
    /// Hessian quadratic form at the well point `A` along direction `e`.
    fn hessian_form(&self, frame: &WellFrame<T>, e: &Matrix3<T>) -> T;
}

/// The canonical density `W(x,F) = dist²(F, SO(3)A(x))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredDistanceWell;

impl<T: Real> WellEnergy<T> for SquaredDistanceWell {
    fn value(&self, frame: &WellFrame<T>, f: &Matrix3<T>) -> T {
        dist_to_well_frame(f, frame).value
    }

    fn gradient(&self, frame: &WellFrame<T>, f: &Matrix3<T>) -> Matrix3<T> {
        well_gradient_frame(f, frame)
    }

    fn hessian_form(&self, frame: &WellFrame<T>, e: &Matrix3<T>) -> T {
        q3_frame(frame, e).expect("block frame projection cannot fail")
    }
}

/// Second-difference Hessian oracle for any density: evaluates
/// `(W(A+εE) + W(A−εE) − 2W(A)) / ε²`.
pub fn hessian_form_fd<T: Real, W: WellEnergy<T>>(
    energy: &W,
    frame: &WellFrame<T>,
    e: &Matrix3<T>,
    eps: T,
) -> T {
    let fp = frame.a + e * eps;
    let fm = frame.a - e * eps;
    let w0 = energy.value(frame, &frame.a);
    (energy.value(frame, &fp) + energy.value(frame, &fm) - w0 - w0) / (eps * eps)
}

impl<T: Real> WellFrame<T> {
    /// Builds the frame directly from the tangential square root `A_tan`.
    pub fn from_a_tan(a_tan: &Matrix2<T>) -> Result<Self> {
        if (a_tan[(0, 1)] - a_tan[(1, 0)]).abs()
            > real::<T>(1e-12) * a_tan.norm().max(T::one())
        {
            return Err(Error::NotSpd("A_tan is not symmetric".into()));
        }
        if a_tan[(0, 0)] <= T::zero() || a_tan.determinant() <= T::zero() {
            return Err(Error::NotSpd("A_tan is not positive definite".into()));
        }
        let a_tan_inv = a_tan
            .try_inverse()
            .ok_or_else(|| Error::NotSpd("A_tan not invertible".into()))?;
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
            a_tan: *a_tan,
            a_tan_inv,
            a_tan_inv_sq,
            sqrt_det_g: a_tan.determinant(),
        })
    }
}
