//! Numerical subspaces of the fiber ℝ²ᵐ or ℂ²ᵐ.
//!
//! A [`Subspace`] stores an orthonormal basis (columns) produced by SVD.
//! Rank decisions use a hybrid threshold σ > rank_tol · max(σ_max, 1), so a
//! matrix whose entries are all roundoff noise has rank zero.
//!
//! Two different "perpendicular" notions coexist and must not be mixed:
//! the pairing-perp [`Subspace::perp_pairing`] uses the ℂ-bilinear extension
//! of the split pairing (matrix transpose), while orthogonal complements,
//! principal angles and coordinates use the Hermitian inner product
//! (matrix adjoint).

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Lift a real matrix into the scalar field `S`.
pub fn lift_real<S: ComplexField<RealField = f64>>(a: &DMatrix<f64>) -> DMatrix<S> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| S::from_real(a[(i, j)]))
}

/// One-sided Jacobi SVD: returns singular values (descending) and the
/// matching left singular vectors as columns. Orthogonality is driven to
/// machine precision even for clustered or zero singular values, which the
/// subspace operations below depend on.
pub fn jacobi_svd_columns<S: ComplexField<RealField = f64>>(
    a: &DMatrix<S>,
) -> (Vec<f64>, DMatrix<S>) {
    let (r, c) = a.shape();
    let mut m = a.clone();
    let eps = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..c {
            for j in i + 1..c {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = S::zero();
                for k in 0..r {
                    let mi = m[(k, i)].clone();
                    let mj = m[(k, j)].clone();
                    alpha += mi.clone().modulus_squared();
                    beta += mj.clone().modulus_squared();
                    gamma += mi.conjugate() * mj;
                }
                let gmod = gamma.clone().modulus();
                if gmod <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // phase-rotate column j so the pair's inner product is real,
                // then apply the real Jacobi rotation that diagonalizes the
                // 2×2 Gram matrix [[α, |γ|], [|γ|, β]]
                let phase = gamma.unscale(gmod);
                let theta = (beta - alpha) / (2.0 * gmod);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for k in 0..r {
                    let mi = m[(k, i)].clone();
                    let mj = m[(k, j)].clone() * phase.clone().conjugate();
                    m[(k, i)] = mi.clone().scale(cs) - mj.clone().scale(sn);
                    m[(k, j)] = mi.scale(sn) + mj.scale(cs);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = (0..c).map(|j| (m.column(j).norm(), j)).collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut u = DMatrix::zeros(r, c);
    let mut sv = Vec::with_capacity(c);
    for (k, &(s, j)) in order.iter().enumerate() {
        sv.push(s);
        if s > 0.0 {
            u.set_column(k, &m.column(j).unscale(s));
        }
    }
    (sv, u)
}

/// Orthonormal basis of the column space. Columns are ordered by descending
/// singular value.
pub fn column_space<S: ComplexField<RealField = f64>>(
    a: &DMatrix<S>,
    rank_tol: f64,
) -> DMatrix<S> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(r, 0);
    }
    let (sv, u) = jacobi_svd_columns(a);
    let smax = sv.first().copied().unwrap_or(0.0);
    let thresh = rank_tol * smax.max(1.0);
    let keep = sv.iter().take_while(|&&s| s > thresh).count();
    u.columns(0, keep).into_owned()
}

fn hermitian_complement<S: ComplexField<RealField = f64>>(
    basis: &DMatrix<S>,
    ambient: usize,
) -> DMatrix<S> {
    if basis.ncols() == 0 {
        return DMatrix::identity(ambient, ambient);
    }
    let p = DMatrix::identity(ambient, ambient) - basis * basis.adjoint();
    // singular values of the complement projector are 0 or 1
    column_space(&p, 0.5)
}

/// Orthonormal basis of {v : Av = 0}.
pub fn null_space<S: ComplexField<RealField = f64>>(a: &DMatrix<S>, rank_tol: f64) -> DMatrix<S> {
    let (r, c) = a.shape();
    if r == 0 {
        return DMatrix::identity(c, c);
    }
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    let row_space = column_space(&a.adjoint(), rank_tol);
    hermitian_complement(&row_space, c)
}

pub fn rank<S: ComplexField<RealField = f64>>(a: &DMatrix<S>, rank_tol: f64) -> usize {
    column_space(a, rank_tol).ncols()
}

/// Subspace with an orthonormal basis, generic over real or complex scalars.
#[derive(Clone, Debug)]
pub struct Subspace<S: ComplexField<RealField = f64>> {
    basis: DMatrix<S>,
}

impl<S: ComplexField<RealField = f64>> Subspace<S> {
    /// Span of the given columns.
    pub fn span(cols: &DMatrix<S>, rank_tol: f64) -> Self {
        Subspace { basis: column_space(cols, rank_tol) }
    }

    /// Wrap an already-orthonormal basis.
    pub fn from_orthonormal(basis: DMatrix<S>) -> Self {
        debug_assert!(
            (basis.adjoint() * &basis - DMatrix::<S>::identity(basis.ncols(), basis.ncols()))
                .norm()
                < 1e-10,
            "basis not orthonormal"
        );
        Subspace { basis }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace { basis: DMatrix::identity(ambient, ambient) }
    }

    pub fn zero(ambient: usize) -> Self {
        Subspace { basis: DMatrix::zeros(ambient, 0) }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<S> {
        &self.basis
    }

    /// Hermitian projector B Bᴴ onto the subspace.
    pub fn projector(&self) -> DMatrix<S> {
        &self.basis * self.basis.adjoint()
    }

    /// Hermitian orthogonal complement.
    pub fn orth_complement(&self) -> Self {
        Subspace { basis: hermitian_complement(&self.basis, self.ambient_dim()) }
    }

    /// Intersection: vectors fixed by both projectors.
    pub fn intersect(&self, other: &Self, rank_tol: f64) -> Self {
        let n = self.ambient_dim();
        assert_eq!(other.ambient_dim(), n);
        let id = DMatrix::<S>::identity(n, n);
        let mut stacked = DMatrix::zeros(2 * n, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&(self.projector() - &id));
        stacked.view_mut((n, 0), (n, n)).copy_from(&(other.projector() - &id));
        Subspace { basis: null_space(&stacked, rank_tol) }
    }

    pub fn sum(&self, other: &Self, rank_tol: f64) -> Self {
        let n = self.ambient_dim();
        assert_eq!(other.ambient_dim(), n);
        let mut cols = DMatrix::zeros(n, self.dim() + other.dim());
        cols.view_mut((0, 0), (n, self.dim())).copy_from(&self.basis);
        cols.view_mut((0, self.dim()), (n, other.dim())).copy_from(&other.basis);
        Self::span(&cols, rank_tol)
    }

    /// Perp with respect to a real bilinear pairing matrix q: the solution
    /// set of Bᵀ q v = 0. For complex scalars this is the bilinear extension
    /// of the pairing, not the Hermitian one.
    pub fn perp_pairing(&self, q: &DMatrix<f64>, rank_tol: f64) -> Self {
        let qs = lift_real::<S>(q);
        let m = self.basis.transpose() * qs;
        Subspace { basis: null_space(&m, rank_tol) }
    }

    /// max |uᵀ q v| over the basis: zero iff the subspace is isotropic for q.
    pub fn isotropy_defect(&self, q: &DMatrix<f64>) -> f64 {
        let qs = lift_real::<S>(q);
        let gram = self.basis.transpose() * qs * &self.basis;
        gram.iter().fold(0.0, |m, s| m.max(s.clone().modulus()))
    }

    pub fn is_isotropic(&self, q: &DMatrix<f64>, tol: f64) -> bool {
        self.isotropy_defect(q) < tol
    }

    /// Principal angles (radians, ascending) via singular values of B₁ᴴB₂.
    /// Cosine-based, so angles below ~1e-8 saturate; tolerance checks should
    /// use [`Subspace::max_principal_angle`], which is sine-based.
    pub fn principal_angles(&self, other: &Self) -> Vec<f64> {
        if self.dim() == 0 || other.dim() == 0 {
            return Vec::new();
        }
        let m = self.basis.adjoint() * &other.basis;
        let (sv, _) = jacobi_svd_columns(&m);
        sv.iter().map(|s| s.clamp(0.0, 1.0).acos()).collect()
    }

    /// Largest principal angle, symmetric in the two subspaces and accurate
    /// near zero.
    pub fn max_principal_angle(&self, other: &Self) -> f64 {
        self.inclusion_angle(other).max(other.inclusion_angle(self))
    }

    /// Same dimension and maximal principal angle below `angle_tol`.
    pub fn approx_eq(&self, other: &Self, angle_tol: f64) -> bool {
        self.dim() == other.dim() && self.max_principal_angle(other) < angle_tol
    }

    /// Largest angle any direction of `self` makes with `within`; zero iff
    /// self ⊆ within (up to roundoff). Computed from the sine of the angle,
    /// the largest singular value of (Id − P_within)·B_self, which keeps
    /// full precision for near-containment.
    pub fn inclusion_angle(&self, within: &Self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        if within.dim() == 0 {
            return std::f64::consts::FRAC_PI_2;
        }
        let resid = &self.basis - &within.basis * (within.basis.adjoint() * &self.basis);
        let (sv, _) = jacobi_svd_columns(&resid);
        sv.first().copied().unwrap_or(0.0).clamp(0.0, 1.0).asin()
    }

    /// Image under a linear map.
    pub fn apply(&self, mat: &DMatrix<S>, rank_tol: f64) -> Self {
        Self::span(&(mat * &self.basis), rank_tol)
    }

    /// Coordinates in the orthonormal basis and the out-of-subspace residual.
    pub fn coords_of(&self, v: &DVector<S>) -> (DVector<S>, f64) {
        let coords = self.basis.adjoint() * v;
        let residual = (&self.basis * &coords - v).norm();
        (coords, residual)
    }

    pub fn contains_vector(&self, v: &DVector<S>, tol: f64) -> bool {
        self.coords_of(v).1 <= tol * v.norm().max(1.0)
    }
}

impl Subspace<f64> {
    /// The same subspace with complex coefficients.
    pub fn complexify(&self) -> Subspace<C64> {
        Subspace { basis: lift_real::<C64>(&self.basis) }
    }
}

impl Subspace<C64> {
    /// Entrywise conjugate (an orthonormal basis stays orthonormal).
    pub fn conjugate(&self) -> Subspace<C64> {
        Subspace { basis: self.basis.map(|z| z.conj()) }
    }
}

/// Compress an operator to an invariant subspace: Bᴴ A B, after checking the
/// image A·B leaves the subspace by no more than `leak_tol` (relative
/// Frobenius).
pub fn restrict_operator<S: ComplexField<RealField = f64>>(
    a: &DMatrix<S>,
    sub: &Subspace<S>,
    leak_tol: f64,
) -> Result<DMatrix<S>> {
    let b = sub.basis();
    let ab = a * b;
    let leak = (&ab - b * (b.adjoint() * &ab)).norm();
    let scale = ab.norm().max(1.0);
    if leak > leak_tol * scale {
        return Err(Error::NotInvariant { leakage: leak / scale, tol: leak_tol });
    }
    Ok(b.adjoint() * ab)
}
