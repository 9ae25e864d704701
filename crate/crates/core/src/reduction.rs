//! Reduction of the split fiber by an extended Lie algebra action.
//!
//! An action datum consists of a Lie algebra 𝔤 acting by vector fields ψ,
//! a 𝔤-module 𝔥 with a moment map μ: M → 𝔥*, and optionally a one-form
//! correction ν: M → 𝔤*. The extended generators ψ̃(u) = ψ(u) + d⟨ν, u⟩ and
//! the moment differentials d⟨μ, w⟩ span a distribution K in TM ⊕ T*M. On
//! the zero level of μ, K is isotropic and the fiber
//!
//!   K^𝒢 = K^⊥ ∩ G K^⊥
//!
//! (the pairing-perp of K intersected with its image under an auxiliary
//! generalized metric G) is a model for the reduced fiber. A structure J
//! descends along two independent routes that this module keeps separate:
//!
//! * restriction: when J K^𝒢 = K^𝒢, compress J to K^𝒢;
//! * Dirac pushforward: map the +i-eigenbundle L to
//!   ((L ∩ K^⊥) + K)/K ≅ K^𝒢 by projecting along K.
//!
//! The algebra 𝔤 ⊕ 𝔥 carries the hemisemidirect bracket
//! ⟦(u₁,w₁),(u₂,w₂)⟧ = ([u₁,u₂], u₁·w₂), which satisfies the Leibniz
//! identity but is not skew; the extended action is required to be a bracket
//! morphism into sections, and [`ReductionData::morphism_residual`] measures
//! exactly that.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calculus::{courant_bracket, differential, lie_derivative_scalar, pairing_matrix, pairing_value};
use crate::error::{Error, Result};
use crate::fields::{FormField, MatrixField, ScalarField, SectionField, VectorField};
use crate::linalg::{lift_real, rank, restrict_operator, Subspace, C64};
use crate::structures::{GcField, MetricField};

/// Numerical thresholds shared across the pipeline.
///
/// `rank_tol` drives rank decisions (relative to the largest singular value),
/// `angle_tol` is the subspace-equality threshold in radians, `level_tol`
/// bounds |μ| on the level set, and `residual_tol` is the generic pass bound
/// for algebraic residuals.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Tolerances {
    pub rank_tol: f64,
    pub angle_tol: f64,
    pub level_tol: f64,
    pub residual_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rank_tol: 1e-10, angle_tol: 1e-8, level_tol: 1e-12, residual_tol: 1e-8 }
    }
}

/// Finite-dimensional Lie algebra given by its adjoint matrices in a fixed
/// basis: `ad[i]` has columns [eᵢ, eⱼ].
#[derive(Clone, Debug)]
pub struct LieAlgebraData {
    ad: Vec<DMatrix<f64>>,
}

impl LieAlgebraData {
    pub fn new(ad: Vec<DMatrix<f64>>) -> Self {
        let n = ad.len();
        for a in &ad {
            assert_eq!((a.nrows(), a.ncols()), (n, n), "adjoint matrices must be dim × dim");
        }
        LieAlgebraData { ad }
    }

    pub fn abelian(dim: usize) -> Self {
        LieAlgebraData { ad: vec![DMatrix::zeros(dim, dim); dim] }
    }

    /// so(3) in the cross-product basis: [eᵢ, eⱼ] = eᵢ × eⱼ.
    pub fn so3() -> Self {
        LieAlgebraData { ad: (0..3).map(|i| cross_matrix(i)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.ad.len()
    }

    pub fn bracket(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (i, ai) in a.iter().enumerate() {
            for j in 0..n {
                for k in 0..n {
                    out[k] += ai * b[j] * self.ad[i][(k, j)];
                }
            }
        }
        out
    }

    /// Coefficients of [eᵢ, eⱼ] in the basis.
    pub fn bracket_basis(&self, i: usize, j: usize) -> Vec<f64> {
        self.ad[i].column(j).iter().cloned().collect()
    }

    pub fn antisymmetry_residual(&self) -> f64 {
        let n = self.dim();
        let mut r = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    r = r.max((self.ad[i][(k, j)] + self.ad[j][(k, i)]).abs());
                }
            }
        }
        r
    }

    /// sup over basis triples of ‖[eᵢ,[eⱼ,eₖ]] − [[eᵢ,eⱼ],eₖ] − [eⱼ,[eᵢ,eₖ]]‖∞.
    pub fn jacobi_residual(&self) -> f64 {
        let n = self.dim();
        let basis: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut r = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let lhs = self.bracket(&basis[i], &self.bracket(&basis[j], &basis[k]));
                    let r1 = self.bracket(&self.bracket(&basis[i], &basis[j]), &basis[k]);
                    let r2 = self.bracket(&basis[j], &self.bracket(&basis[i], &basis[k]));
                    for a in 0..n {
                        r = r.max((lhs[a] - r1[a] - r2[a]).abs());
                    }
                }
            }
        }
        r
    }
}

fn cross_matrix(i: usize) -> DMatrix<f64> {
    let mut u = [0.0; 3];
    u[i] = 1.0;
    DMatrix::from_row_slice(3, 3, &[0.0, -u[2], u[1], u[2], 0.0, -u[0], -u[1], u[0], 0.0])
}

/// A 𝔤-module 𝔥: `rho[i]` is the action of the i-th basis vector of 𝔤.
#[derive(Clone, Debug)]
pub struct GModuleData {
    rho: Vec<DMatrix<f64>>,
    dim: usize,
}

impl GModuleData {
    pub fn new(g_dim: usize, rho: Vec<DMatrix<f64>>) -> Self {
        assert_eq!(rho.len(), g_dim, "one action matrix per algebra generator");
        let dim = rho.first().map_or(0, |r| r.nrows());
        for r in &rho {
            assert_eq!((r.nrows(), r.ncols()), (dim, dim), "action matrices must be dim × dim");
        }
        GModuleData { rho, dim }
    }

    /// Trivial action of a g_dim-dimensional algebra on ℝ^h_dim.
    pub fn trivial(g_dim: usize, h_dim: usize) -> Self {
        GModuleData { rho: vec![DMatrix::zeros(h_dim, h_dim); g_dim], dim: h_dim }
    }

    /// The algebra acting on itself through its adjoint matrices.
    pub fn adjoint(g: &LieAlgebraData) -> Self {
        GModuleData { rho: g.ad.clone(), dim: g.dim() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn action(&self, i: usize) -> &DMatrix<f64> {
        &self.rho[i]
    }

    pub fn act(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, ui) in u.iter().enumerate() {
            for k in 0..self.dim {
                for j in 0..self.dim {
                    out[k] += ui * self.rho[i][(k, j)] * w[j];
                }
            }
        }
        out
    }

    /// sup over basis pairs of ‖ρᵢρⱼ − ρⱼρᵢ − ρ([eᵢ,eⱼ])‖∞.
    pub fn representation_residual(&self, g: &LieAlgebraData) -> f64 {
        let n = g.dim();
        let mut r = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let comm = &self.rho[i] * &self.rho[j] - &self.rho[j] * &self.rho[i];
                let c = g.bracket_basis(i, j);
                let mut rb = DMatrix::zeros(self.dim, self.dim);
                for (k, ck) in c.iter().enumerate() {
                    rb += &self.rho[k] * *ck;
                }
                r = r.max((comm - rb).amax());
            }
        }
        r
    }
}

/// Bracket on 𝔤 ⊕ 𝔥: ⟦(u₁,w₁),(u₂,w₂)⟧ = ([u₁,u₂], u₁·w₂). Leibniz but not
/// skew-symmetric.
pub fn hemisemi_bracket(
    g: &LieAlgebraData,
    module: &GModuleData,
    z1: (&[f64], &[f64]),
    z2: (&[f64], &[f64]),
) -> (Vec<f64>, Vec<f64>) {
    (g.bracket(z1.0, z2.0), module.act(z1.0, z2.1))
}

/// ‖⟦z₁,⟦z₂,z₃⟧⟧ − ⟦⟦z₁,z₂⟧,z₃⟧ − ⟦z₂,⟦z₁,z₃⟧⟧‖∞.
pub fn hemisemi_leibniz_residual(
    g: &LieAlgebraData,
    module: &GModuleData,
    z1: (&[f64], &[f64]),
    z2: (&[f64], &[f64]),
    z3: (&[f64], &[f64]),
) -> f64 {
    fn pair(z: &(Vec<f64>, Vec<f64>)) -> (&[f64], &[f64]) {
        (z.0.as_slice(), z.1.as_slice())
    }
    let b23 = hemisemi_bracket(g, module, z2, z3);
    let lhs = hemisemi_bracket(g, module, z1, pair(&b23));
    let b12 = hemisemi_bracket(g, module, z1, z2);
    let r1 = hemisemi_bracket(g, module, pair(&b12), z3);
    let b13 = hemisemi_bracket(g, module, z1, z3);
    let r2 = hemisemi_bracket(g, module, z2, pair(&b13));
    let mut r = 0.0_f64;
    for k in 0..lhs.0.len() {
        r = r.max((lhs.0[k] - r1.0[k] - r2.0[k]).abs());
    }
    for k in 0..lhs.1.len() {
        r = r.max((lhs.1[k] - r1.1[k] - r2.1[k]).abs());
    }
    r
}

/// Action datum on a chart: algebra generators as vector fields, the module
/// moment map, an optional one-form correction ν, and an optional twist.
pub struct ReductionData {
    pub m: usize,
    pub algebra: LieAlgebraData,
    pub module: GModuleData,
    pub psi: Vec<VectorField>,
    pub nu: Vec<ScalarField>,
    pub mu: Vec<ScalarField>,
    pub twist: Option<FormField>,
}

impl ReductionData {
    pub fn new(
        m: usize,
        algebra: LieAlgebraData,
        module: GModuleData,
        psi: Vec<VectorField>,
        nu: Vec<ScalarField>,
        mu: Vec<ScalarField>,
        twist: Option<FormField>,
    ) -> Result<Self> {
        if psi.len() != algebra.dim() {
            return Err(Error::Dim(format!(
                "{} generator fields for an algebra of dimension {}",
                psi.len(),
                algebra.dim()
            )));
        }
        if !nu.is_empty() && nu.len() != algebra.dim() {
            return Err(Error::Dim("one-form correction must match the algebra dimension".into()));
        }
        if mu.len() != module.dim() {
            return Err(Error::Dim(format!(
                "{} moment components for a module of dimension {}",
                mu.len(),
                module.dim()
            )));
        }
        Ok(ReductionData { m, algebra, module, psi, nu, mu, twist })
    }

    pub fn dim_g(&self) -> usize {
        self.algebra.dim()
    }

    pub fn dim_h(&self) -> usize {
        self.module.dim()
    }

    /// ψ̃ᵢ = ψᵢ + dνᵢ as sections of the split fiber.
    pub fn extended_sections(&self) -> Vec<SectionField> {
        self.psi
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let form = if self.nu.is_empty() {
                    FormField::zero(self.m, 1)
                } else {
                    differential(&self.nu[i])
                };
                SectionField::from_parts(v, &form)
            })
            .collect()
    }

    /// dμⱼ as pure covector sections.
    pub fn moment_sections(&self) -> Vec<SectionField> {
        let zero = VectorField::constant(self.m, &vec![0.0; self.m]);
        self.mu
            .iter()
            .map(|f| SectionField::from_parts(&zero, &differential(f)))
            .collect()
    }

    pub fn mu_at(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.mu.len(), self.mu.iter().map(|f| f.eval(p)))
    }

    pub fn level_residual(&self, p: &[f64]) -> f64 {
        if self.mu.is_empty() {
            0.0
        } else {
            self.mu_at(p).amax()
        }
    }

    /// Rows are the gradients of the moment components.
    pub fn dmu_at(&self, p: &[f64]) -> DMatrix<f64> {
        let h = self.dim_h();
        let mut out = DMatrix::zeros(h, self.m);
        for (j, f) in self.mu.iter().enumerate() {
            let grad = f.gradient(p);
            for k in 0..self.m {
                out[(j, k)] = grad[k];
            }
        }
        out
    }

    /// Columns spanning K at p: extended generators followed by moment
    /// differentials.
    pub fn k_columns_at(&self, p: &[f64]) -> DMatrix<f64> {
        let cols = self.dim_g() + self.dim_h();
        let mut out = DMatrix::zeros(2 * self.m, cols);
        for (c, sec) in
            self.extended_sections().iter().chain(self.moment_sections().iter()).enumerate()
        {
            let v = sec.eval(p);
            for r in 0..2 * self.m {
                out[(r, c)] = v[r];
            }
        }
        out
    }

    pub fn k_at(&self, p: &[f64], rank_tol: f64) -> Subspace<f64> {
        Subspace::span(&self.k_columns_at(p), rank_tol)
    }

    /// sup over basis pairs of ‖[ψᵢ,ψⱼ] − ψ([eᵢ,eⱼ])‖∞ at p.
    pub fn homomorphism_residual(&self, p: &[f64]) -> f64 {
        let n = self.dim_g();
        let mut r = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let lie = crate::calculus::lie_bracket(&self.psi[i], &self.psi[j]).eval(p);
                let c = self.algebra.bracket_basis(i, j);
                let mut rhs = vec![0.0; self.m];
                for (k, ck) in c.iter().enumerate() {
                    if ck.abs() > 0.0 {
                        let v = self.psi[k].eval(p);
                        for a in 0..self.m {
                            rhs[a] += ck * v[a];
                        }
                    }
                }
                for a in 0..self.m {
                    r = r.max((lie[a] - rhs[a]).abs());
                }
            }
        }
        r
    }

    /// sup over basis pairs of |𝓛_{ψᵢ}⟨μ, wⱼ⟩ − ⟨μ, ρᵢ wⱼ⟩| at p.
    pub fn equivariance_residual(&self, p: &[f64]) -> f64 {
        let muv = self.mu_at(p);
        let mut r = 0.0_f64;
        for i in 0..self.dim_g() {
            for j in 0..self.dim_h() {
                let lie = lie_derivative_scalar(&self.psi[i], &self.mu[j]).eval(p);
                let mut rhs = 0.0;
                for k in 0..self.dim_h() {
                    rhs += muv[k] * self.module.action(i)[(k, j)];
                }
                r = r.max((lie - rhs).abs());
            }
        }
        r
    }

    /// Deviation of the extended action from a bracket morphism at p: the
    /// twisted bracket of the images must match the image of the
    /// hemisemidirect bracket on all basis pairs of 𝔤 ⊕ 𝔥.
    pub fn morphism_residual(&self, p: &[f64]) -> f64 {
        let ext = self.extended_sections();
        let mom = self.moment_sections();
        let twist = self.twist.as_ref();
        let n2 = 2 * self.m;
        let mut r = 0.0_f64;
        let mut acc = |lhs: Vec<f64>, rhs: Vec<f64>| {
            for a in 0..n2 {
                r = r.max((lhs[a] - rhs[a]).abs());
            }
        };
        for i in 0..self.dim_g() {
            for j in 0..self.dim_g() {
                let lhs = courant_bracket(&ext[i], &ext[j], twist).eval(p);
                let c = self.algebra.bracket_basis(i, j);
                let mut rhs = vec![0.0; n2];
                for (k, ck) in c.iter().enumerate() {
                    if ck.abs() > 0.0 {
                        let v = ext[k].eval(p);
                        for a in 0..n2 {
                            rhs[a] += ck * v[a];
                        }
                    }
                }
                acc(lhs, rhs);
            }
            for j in 0..self.dim_h() {
                let lhs = courant_bracket(&ext[i], &mom[j], twist).eval(p);
                let mut rhs = vec![0.0; n2];
                for k in 0..self.dim_h() {
                    let ck = self.module.action(i)[(k, j)];
                    if ck.abs() > 0.0 {
                        let v = mom[k].eval(p);
                        for a in 0..n2 {
                            rhs[a] += ck * v[a];
                        }
                    }
                }
                acc(lhs, rhs);
                let back = courant_bracket(&mom[j], &ext[i], twist).eval(p);
                acc(back, vec![0.0; n2]);
            }
        }
        for i in 0..self.dim_h() {
            for j in 0..self.dim_h() {
                let lhs = courant_bracket(&mom[i], &mom[j], twist).eval(p);
                acc(lhs, vec![0.0; n2]);
            }
        }
        r
    }

    /// Off-level pairing identity: ⟨Ψ(ζ₁), Ψ(ζ₂)⟩ = ⟨μ, u₁·w₂ + u₂·w₁⟩ for
    /// ζ = (u, w) ranging over the basis of 𝔤 ⊕ 𝔥. On the zero level the
    /// right side vanishes and the identity becomes isotropy of K.
    pub fn moment_pairing_residual(&self, p: &[f64]) -> f64 {
        let ext = self.extended_sections();
        let mom = self.moment_sections();
        let muv = self.mu_at(p);
        let g = self.dim_g();
        let h = self.dim_h();
        let vals: Vec<Vec<f64>> =
            ext.iter().chain(mom.iter()).map(|s| s.eval(p)).collect();
        let mut r = 0.0_f64;
        for a in 0..g + h {
            for b in 0..g + h {
                let lhs = pairing_value(&vals[a], &vals[b]);
                let mut rhs = 0.0;
                if a < g && b >= g {
                    for k in 0..h {
                        rhs += muv[k] * self.module.action(a)[(k, b - g)];
                    }
                }
                if b < g && a >= g {
                    for k in 0..h {
                        rhs += muv[k] * self.module.action(b)[(k, a - g)];
                    }
                }
                r = r.max((lhs - rhs).abs());
            }
        }
        r
    }

    /// Infinitesimal invariance of an operator field under the extended
    /// generators: sup over generators and frame sections of
    /// ‖⟦ψ̃, S e⟧ − S ⟦ψ̃, e⟧‖∞ at p.
    pub fn invariance_residual(&self, op: &MatrixField, p: &[f64]) -> f64 {
        let twist = self.twist.as_ref();
        let mut r = 0.0_f64;
        for gen in self.extended_sections() {
            for a in 0..2 * self.m {
                let e = SectionField::frame(self.m, a);
                let lhs = courant_bracket(&gen, &op.apply_section(&e), twist).eval(p);
                let rhs = op.apply_section(&courant_bracket(&gen, &e, twist)).eval(p);
                for k in 0..2 * self.m {
                    r = r.max((lhs[k] - rhs[k]).abs());
                }
            }
        }
        r
    }

    /// Newton projection onto the zero level of μ, moving by least-norm
    /// steps −dμ⁺ μ. Fails with [`Error::SingularLevel`] where dμ loses rank
    /// and [`Error::NoConvergence`] past `max_iter`.
    pub fn project_to_level(
        &self,
        x0: &[f64],
        tols: &Tolerances,
        max_iter: usize,
    ) -> Result<Vec<f64>> {
        let h = self.dim_h();
        let mut x = x0.to_vec();
        if h == 0 {
            return Ok(x);
        }
        for _ in 0..max_iter {
            let muv = self.mu_at(&x);
            if muv.amax() < tols.level_tol {
                return Ok(x);
            }
            let dmu = self.dmu_at(&x);
            let r = rank(&dmu, tols.rank_tol);
            if r < h {
                return Err(Error::SingularLevel { rank: r, expected: h });
            }
            let normal = &dmu * dmu.transpose();
            let lambda = normal
                .lu()
                .solve(&muv)
                .ok_or(Error::SingularLevel { rank: r, expected: h })?;
            let step = dmu.transpose() * lambda;
            for k in 0..self.m {
                x[k] -= step[k];
            }
        }
        Err(Error::NoConvergence(max_iter))
    }
}

/// Fourth-order Runge-Kutta flow of a vector field.
pub fn flow_rk4(v: &VectorField, x0: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let m = x0.len();
    let dt = t / steps as f64;
    let mut x = x0.to_vec();
    let shifted = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        (0..m).map(|i| x[i] + s * k[i]).collect()
    };
    for _ in 0..steps {
        let k1 = v.eval(&x);
        let k2 = v.eval(&shifted(&x, &k1, dt / 2.0));
        let k3 = v.eval(&shifted(&x, &k2, dt / 2.0));
        let k4 = v.eval(&shifted(&x, &k3, dt));
        for i in 0..m {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

/// Pointwise data for the reducibility conditions: K, its pairing-perp, and
/// the complement K^𝒢 carved out by an auxiliary generalized metric.
pub struct FiberContext {
    pub q: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub k: Subspace<f64>,
    pub kperp: Subspace<f64>,
    pub kg: Subspace<f64>,
}

impl FiberContext {
    pub fn new(k: Subspace<f64>, g: DMatrix<f64>, rank_tol: f64) -> Self {
        let n = k.ambient_dim();
        assert_eq!(n % 2, 0, "fiber dimension must be even");
        let q = pairing_matrix(n / 2);
        let kperp = k.perp_pairing(&q, rank_tol);
        let kg = kperp.intersect(&kperp.apply(&g, rank_tol), rank_tol);
        FiberContext { q, g, k, kperp, kg }
    }

    pub fn check(&self, cond: Condition, j: &DMatrix<f64>, tols: &Tolerances) -> ConditionResult {
        let defect = match cond {
            Condition::PreservesK => self.k.apply(j, tols.rank_tol).max_principal_angle(&self.k),
            Condition::Reducible => {
                let jk = self.k.apply(j, tols.rank_tol);
                let cap = jk.intersect(&self.kperp, tols.rank_tol);
                cap.inclusion_angle(&self.k)
            }
            Condition::PreservesKg => {
                self.kg.apply(j, tols.rank_tol).max_principal_angle(&self.kg)
            }
            Condition::PreservesKSum => {
                let s = self.k.sum(&self.k.apply(&self.g, tols.rank_tol), tols.rank_tol);
                s.apply(j, tols.rank_tol).max_principal_angle(&s)
            }
        };
        ConditionResult { holds: defect < tols.angle_tol, defect }
    }

    pub fn check_all(&self, j: &DMatrix<f64>, tols: &Tolerances) -> Vec<(Condition, ConditionResult)> {
        Condition::ALL.iter().map(|&c| (c, self.check(c, j, tols))).collect()
    }
}

/// Reducibility conditions on a structure J at a fiber, ordered from the
/// strongest to the weakest requirement actually used downstream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// J K = K.
    PreservesK,
    /// J K ∩ K^⊥ ⊆ K; enough for the Dirac pushforward to stay almost
    /// complex.
    Reducible,
    /// J K^𝒢 = K^𝒢; allows direct restriction to the chosen complement.
    PreservesKg,
    /// J (K + GK) = K + GK; equivalent to [`Condition::PreservesKg`] when J
    /// commutes with G.
    PreservesKSum,
}

impl Condition {
    pub const ALL: [Condition; 4] =
        [Condition::PreservesK, Condition::Reducible, Condition::PreservesKg, Condition::PreservesKSum];

    pub fn id(&self) -> &'static str {
        match self {
            Condition::PreservesK => "preserves_k",
            Condition::Reducible => "reducible",
            Condition::PreservesKg => "preserves_kg",
            Condition::PreservesKSum => "preserves_k_plus_gk",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConditionResult {
    pub holds: bool,
    /// Angle defect in radians; zero when the condition holds exactly.
    pub defect: f64,
}

/// Orthonormal basis of a fiber subspace split into a pure-tangent block
/// followed by a pure-covector block. Available only when the subspace is
/// the direct sum of its intersections with TM and T*M.
pub struct AdaptedBasis {
    pub basis: DMatrix<f64>,
    pub tangent_dim: usize,
    pub cotangent_dim: usize,
    /// Vector components of the tangent block, m × tangent_dim.
    pub x_part: DMatrix<f64>,
    /// Covector components of the cotangent block, m × cotangent_dim.
    pub xi_part: DMatrix<f64>,
}

pub fn adapted_basis(sub: &Subspace<f64>, rank_tol: f64) -> Option<AdaptedBasis> {
    let n = sub.ambient_dim();
    let m = n / 2;
    let mut tb = DMatrix::zeros(n, m);
    let mut cb = DMatrix::zeros(n, m);
    for i in 0..m {
        tb[(i, i)] = 1.0;
        cb[(m + i, i)] = 1.0;
    }
    let tangent = Subspace::from_orthonormal(tb);
    let cotangent = Subspace::from_orthonormal(cb);
    let ti = sub.intersect(&tangent, rank_tol);
    let ci = sub.intersect(&cotangent, rank_tol);
    if ti.dim() + ci.dim() != sub.dim() {
        return None;
    }
    // the intersections carry numerically dead opposite blocks; rebuild the
    // basis with those blocks exactly zero
    let x_part = crate::linalg::column_space(&ti.basis().rows(0, m).into_owned(), rank_tol);
    let xi_part = crate::linalg::column_space(&ci.basis().rows(m, m).into_owned(), rank_tol);
    if x_part.ncols() != ti.dim() || xi_part.ncols() != ci.dim() {
        return None;
    }
    let mut basis = DMatrix::zeros(n, sub.dim());
    basis.view_mut((0, 0), (m, x_part.ncols())).copy_from(&x_part);
    basis.view_mut((m, x_part.ncols()), (m, xi_part.ncols())).copy_from(&xi_part);
    Some(AdaptedBasis {
        basis,
        tangent_dim: x_part.ncols(),
        cotangent_dim: xi_part.ncols(),
        x_part,
        xi_part,
    })
}

/// Coordinates of complex fiber vectors in `basis`, projecting along K:
/// each column z is written K a + B c and the c-part is returned. None when
/// the combined system is singular.
fn coords_along_k(
    z: &DMatrix<C64>,
    k_basis: &DMatrix<C64>,
    basis: &DMatrix<C64>,
) -> Option<DMatrix<C64>> {
    let n = z.nrows();
    let kd = k_basis.ncols();
    let d = basis.ncols();
    let mut stacked = DMatrix::zeros(n, kd + d);
    stacked.view_mut((0, 0), (n, kd)).copy_from(k_basis);
    stacked.view_mut((0, kd), (n, d)).copy_from(basis);
    let gram = stacked.adjoint() * &stacked;
    let rhs = stacked.adjoint() * z;
    let sol = gram.lu().solve(&rhs)?;
    Some(sol.view((kd, 0), (d, z.ncols())).into_owned())
}

/// Push a Dirac fiber L through the reduction: L_red = ((L ∩ K^⊥) + K)/K,
/// realized as the projection of L ∩ K^⊥ onto the span of `basis` along K.
/// The result lives in the coordinates of `basis`.
pub fn dirac_reduce_fiber(
    l: &Subspace<C64>,
    k: &Subspace<f64>,
    kperp: &Subspace<f64>,
    basis: &DMatrix<f64>,
    rank_tol: f64,
) -> Subspace<C64> {
    let d = basis.ncols();
    let cap = l.intersect(&kperp.complexify(), rank_tol);
    if cap.dim() == 0 {
        return Subspace::zero(d);
    }
    let kc = lift_real::<C64>(k.basis());
    let bc = lift_real::<C64>(basis);
    match coords_along_k(cap.basis(), &kc, &bc) {
        Some(coords) => Subspace::span(&coords, rank_tol),
        None => Subspace::zero(d),
    }
}

/// Re-express a reduced fiber subspace computed in `from_basis` coordinates
/// in `to_basis` coordinates, projecting along K. Complement choices differ
/// by a shear along K, so reductions against different auxiliary metrics
/// must agree under this transport.
pub fn transport_reduced_fiber(
    sub: &Subspace<C64>,
    k: &Subspace<f64>,
    from_basis: &DMatrix<f64>,
    to_basis: &DMatrix<f64>,
    rank_tol: f64,
) -> Subspace<C64> {
    if sub.dim() == 0 {
        return Subspace::zero(to_basis.ncols());
    }
    let ambient = lift_real::<C64>(from_basis) * sub.basis();
    let kc = lift_real::<C64>(k.basis());
    let bc = lift_real::<C64>(to_basis);
    match coords_along_k(&ambient, &kc, &bc) {
        Some(coords) => Subspace::span(&coords, rank_tol),
        None => Subspace::zero(to_basis.ncols()),
    }
}

/// Reconstruct the real structure whose +i-eigenspace is `l`, via
/// J = Re(C diag(i, −i) C⁻¹) with C = [L | L̄]. Also returns the imaginary
/// leftover, which is a consistency measure. Requires L transverse to its
/// conjugate.
pub fn structure_from_eigenspace(l: &Subspace<C64>) -> Result<(DMatrix<f64>, f64)> {
    let d = l.ambient_dim();
    let h = l.dim();
    if 2 * h != d {
        return Err(Error::Invalid(format!(
            "eigenspace dimension {h} does not halve the ambient dimension {d}"
        )));
    }
    let mut c = DMatrix::<C64>::zeros(d, d);
    c.view_mut((0, 0), (d, h)).copy_from(l.basis());
    c.view_mut((0, h), (d, h)).copy_from(&l.basis().map(|z| z.conj()));
    let det = c.determinant();
    let ci = c
        .clone()
        .try_inverse()
        .ok_or(Error::Degenerate { det: det.norm() })?;
    let mut diag = DMatrix::<C64>::zeros(d, d);
    for a in 0..h {
        diag[(a, a)] = C64::new(0.0, 1.0);
        diag[(h + a, h + a)] = C64::new(0.0, -1.0);
    }
    let jc = c * diag * ci;
    let mut imag = 0.0_f64;
    let j = DMatrix::from_fn(d, d, |r, cidx| {
        imag = imag.max(jc[(r, cidx)].im.abs());
        jc[(r, cidx)].re
    });
    Ok((j, imag))
}

/// Restriction of one structure to the reduced fiber.
pub struct ReducedStructure {
    /// Operator in the coordinates of the reduced basis.
    pub operator: DMatrix<f64>,
    pub square_residual: f64,
    pub orthogonality_residual: f64,
}

/// The Dirac route for one structure.
pub struct DiracOutcome {
    pub dim: usize,
    pub isotropy_defect: f64,
    /// Dimension of L_red ∩ conj(L_red); zero exactly when the reduced
    /// eigenspace still defines an almost complex structure.
    pub conjugate_overlap: usize,
    pub operator: Option<DMatrix<f64>>,
    pub reconstruction_imag: f64,
}

/// Everything measured for one named structure at one fiber.
pub struct StructureFiberReport {
    pub name: String,
    pub conditions: Vec<(Condition, ConditionResult)>,
    pub invariance_residual: f64,
    pub reduced: Option<ReducedStructure>,
    pub dirac: DiracOutcome,
    /// Angle between the eigenbundle of the restricted operator and the
    /// Dirac pushforward of the eigenbundle; the two routes must agree.
    pub two_path_angle: Option<f64>,
    /// sup-entry gap between the restricted operator and the one
    /// reconstructed from the Dirac route.
    pub operator_gap: Option<f64>,
}

/// Full fiber-level reduction outcome at one point.
pub struct FiberReduction {
    pub point: Vec<f64>,
    pub level_residual: f64,
    pub k_dim: usize,
    pub kperp_dim: usize,
    pub kg_dim: usize,
    pub tangent_dim: Option<usize>,
    pub cotangent_dim: Option<usize>,
    pub k_isotropy_defect: f64,
    pub homomorphism_residual: f64,
    pub equivariance_residual: f64,
    pub morphism_residual: f64,
    pub moment_pairing_residual: f64,
    /// Basis of K^𝒢 actually used for coordinates on the reduced fiber.
    pub basis: DMatrix<f64>,
    pub x_part: Option<DMatrix<f64>>,
    pub xi_part: Option<DMatrix<f64>>,
    /// Pairing compressed to the reduced basis.
    pub reduced_pairing: DMatrix<f64>,
    /// Auxiliary metric compressed to the reduced basis.
    pub reduced_metric: Option<DMatrix<f64>>,
    pub structures: Vec<StructureFiberReport>,
    pub warnings: Vec<String>,
}

/// Run the fiberwise reduction at p: build K from the action datum, carve
/// K^𝒢 with the auxiliary metric, check the reducibility conditions for
/// every named structure, and reduce each along both routes.
pub fn reduce_at(
    data: &ReductionData,
    aux: &MetricField,
    structures: &[(String, GcField)],
    p: &[f64],
    tols: &Tolerances,
) -> Result<FiberReduction> {
    let mut warnings = Vec::new();
    let level_residual = data.level_residual(p);
    if level_residual > tols.level_tol * 1e3 {
        warnings.push(format!("point sits off the zero level (|mu| = {level_residual:.3e})"));
    }
    let expected = data.dim_g() + data.dim_h();
    let kcols = data.k_columns_at(p);
    let krank = rank(&kcols, tols.rank_tol);
    if krank < expected {
        return Err(Error::NotFree { rank: krank, expected });
    }
    let k = Subspace::span(&kcols, tols.rank_tol);
    let gmat = aux.at(p);
    let ctx = FiberContext::new(k, gmat, tols.rank_tol);
    let k_isotropy_defect = ctx.k.isotropy_defect(&ctx.q);
    if k_isotropy_defect > tols.residual_tol {
        warnings.push(format!(
            "generator span is not isotropic (defect {k_isotropy_defect:.3e})"
        ));
    }
    let adapted = adapted_basis(&ctx.kg, tols.rank_tol);
    let (basis, x_part, xi_part, tangent_dim, cotangent_dim) = match adapted {
        Some(ab) => (
            ab.basis,
            Some(ab.x_part),
            Some(ab.xi_part),
            Some(ab.tangent_dim),
            Some(ab.cotangent_dim),
        ),
        None => {
            warnings.push("reduced fiber mixes tangent and covector directions".into());
            (ctx.kg.basis().clone(), None, None, None, None)
        }
    };
    let reduced_pairing = basis.transpose() * &ctx.q * &basis;
    let basis_sub = Subspace::from_orthonormal(basis.clone());
    let reduced_metric = match restrict_operator(&ctx.g, &basis_sub, tols.residual_tol) {
        Ok(gr) => Some(gr),
        Err(Error::NotInvariant { leakage, .. }) => {
            warnings.push(format!(
                "auxiliary metric does not preserve the reduced fiber (leakage {leakage:.3e})"
            ));
            None
        }
        Err(e) => return Err(e),
    };

    let mut reports = Vec::new();
    for (name, j) in structures {
        let jm = j.at(p);
        let conditions = ctx.check_all(&jm, tols);
        let invariance_residual = data.invariance_residual(&j.op, p);
        let preserves_kg = conditions
            .iter()
            .find(|(c, _)| *c == Condition::PreservesKg)
            .map(|(_, r)| r.holds)
            .unwrap_or(false);
        let reduced = if preserves_kg {
            match restrict_operator(&jm, &basis_sub, tols.residual_tol.max(tols.angle_tol)) {
                Ok(op) => {
                    let d = op.nrows();
                    let square_residual = (&op * &op + DMatrix::identity(d, d)).amax();
                    let orthogonality_residual =
                        (op.transpose() * &reduced_pairing * &op - &reduced_pairing).amax();
                    Some(ReducedStructure { operator: op, square_residual, orthogonality_residual })
                }
                Err(Error::NotInvariant { leakage, .. }) => {
                    warnings.push(format!(
                        "structure '{name}' leaked out of the reduced fiber (leakage {leakage:.3e})"
                    ));
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let l = j.eigenbundle().subspace_at(p, tols.rank_tol);
        let l_red = dirac_reduce_fiber(&l, &ctx.k, &ctx.kperp, &basis, tols.rank_tol);
        let conjugate_overlap = l_red.intersect(&l_red.conjugate(), tols.rank_tol).dim();
        let isotropy_defect = l_red.isotropy_defect(&reduced_pairing);
        let (op_dirac, reconstruction_imag) = if conjugate_overlap == 0
            && 2 * l_red.dim() == basis.ncols()
        {
            match structure_from_eigenspace(&l_red) {
                Ok((op, imag)) => (Some(op), imag),
                Err(_) => (None, f64::NAN),
            }
        } else {
            (None, 0.0)
        };
        let (two_path_angle, operator_gap) = match (&reduced, &op_dirac) {
            (Some(r), od) => {
                let d = r.operator.nrows();
                let half = DMatrix::from_fn(d, d, |a, b| {
                    C64::new(if a == b { 0.5 } else { 0.0 }, -0.5 * r.operator[(a, b)])
                });
                let l2 = Subspace::span(&half, tols.rank_tol);
                let angle = l_red.max_principal_angle(&l2);
                let gap = od.as_ref().map(|o| (o - &r.operator).amax());
                (Some(angle), gap)
            }
            (None, _) => (None, None),
        };
        reports.push(StructureFiberReport {
            name: name.clone(),
            conditions,
            invariance_residual,
            reduced,
            dirac: DiracOutcome {
                dim: l_red.dim(),
                isotropy_defect,
                conjugate_overlap,
                operator: op_dirac,
                reconstruction_imag,
            },
            two_path_angle,
            operator_gap,
        });
    }

    Ok(FiberReduction {
        point: p.to_vec(),
        level_residual,
        k_dim: ctx.k.dim(),
        kperp_dim: ctx.kperp.dim(),
        kg_dim: ctx.kg.dim(),
        tangent_dim,
        cotangent_dim,
        k_isotropy_defect,
        homomorphism_residual: data.homomorphism_residual(p),
        equivariance_residual: data.equivariance_residual(p),
        morphism_residual: data.morphism_residual(p),
        moment_pairing_residual: data.moment_pairing_residual(p),
        basis,
        x_part,
        xi_part,
        reduced_pairing,
        reduced_metric,
        structures: reports,
        warnings,
    })
}

/// Random commuting (J, G) fiber pair obtained from constant bihermitian
/// data, evaluated at the origin.
pub fn sample_pair_fiber<R: rand::Rng>(rng: &mut R, m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (g, b, ip, im) = crate::structures::sample_bihermitian(rng, m);
    let (j1, _) = GcField::from_bihermitian(&g, &b, &ip, &im);
    let gm = MetricField::from_metric_and_b(&g, &b);
    let p = vec![0.0; m];
    (j1.at(&p), gm.at(&p))
}

/// Random isotropic fiber subspace: tangent and covector coordinate
/// directions on disjoint index ranges, sheared by pairing isometries
/// e^B e^π with random antisymmetric blocks.
pub fn sample_isotropic_fiber<R: rand::Rng>(
    rng: &mut R,
    m: usize,
    tangent: usize,
    covector: usize,
) -> Subspace<f64> {
    assert!(tangent + covector <= m, "isotropic dimension is at most m");
    let n = 2 * m;
    let mut cols = DMatrix::zeros(n, tangent + covector);
    for i in 0..tangent {
        cols[(i, i)] = 1.0;
    }
    for j in 0..covector {
        cols[(m + tangent + j, tangent + j)] = 1.0;
    }
    let mut anti = |scale: f64| {
        let raw = DMatrix::from_fn(m, m, |_, _| rng.random_range(-scale..scale));
        &raw - raw.transpose()
    };
    let b = anti(1.0);
    let pi = anti(1.0);
    let mut shear_b = DMatrix::identity(n, n);
    shear_b.view_mut((m, 0), (m, m)).copy_from(&b);
    let mut shear_pi = DMatrix::identity(n, n);
    shear_pi.view_mut((0, m), (m, m)).copy_from(&pi);
    Subspace::span(&(shear_pi * shear_b * cols), 1e-10)
}

/// Random two-dimensional isotropic subspace invariant under J: the span of
/// a null vector and its image.
pub fn sample_invariant_isotropic_fiber<R: rand::Rng>(
    rng: &mut R,
    j: &DMatrix<f64>,
) -> Subspace<f64> {
    let n = j.nrows();
    let m = n / 2;
    loop {
        let x = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let mut xi = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let xx = x.dot(&x);
        if xx < 0.1 {
            continue;
        }
        xi -= &x * (xi.dot(&x) / xx);
        let mut v = DVector::zeros(n);
        v.view_mut((0, 0), (m, 1)).copy_from(&x);
        v.view_mut((m, 0), (m, 1)).copy_from(&xi);
        let jv = j * &v;
        let mut cols = DMatrix::zeros(n, 2);
        cols.set_column(0, &v);
        cols.set_column(1, &jv);
        let sub = Subspace::span(&cols, 1e-10);
        if sub.dim() == 2 {
            return sub;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::PolyTerm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    /// Rotations of ℝ³ acting on themselves: ψ(u) = −u × x with the adjoint
    /// module and moment map μ = x.
    fn rotation_fixture() -> ReductionData {
        let algebra = LieAlgebraData::so3();
        let module = GModuleData::adjoint(&algebra);
        let psi = (0..3)
            .map(|i| VectorField::linear(3, &(-cross_matrix(i))))
            .collect();
        let mu = (0..3).map(|j| ScalarField::coordinate(3, j)).collect();
        ReductionData::new(3, algebra, module, psi, Vec::new(), mu, None).unwrap()
    }

    /// Circle rotation of ℝ⁴ ≅ ℂ² with moment μ = (|z|² − 1)/2 for the
    /// standard symplectic form.
    fn circle_fixture() -> ReductionData {
        let m = 4;
        let mut a = DMatrix::zeros(m, m);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = -1.0;
        a[(2, 3)] = 1.0;
        a[(3, 2)] = -1.0;
        let psi = vec![VectorField::linear(m, &a)];
        let mut terms: Vec<PolyTerm> =
            (0..m).map(|i| PolyTerm::new(0.5).pow(i, 2)).collect();
        terms.push(PolyTerm::new(-0.5));
        let mu = vec![ScalarField::poly(m, terms)];
        ReductionData::new(
            m,
            LieAlgebraData::abelian(1),
            GModuleData::trivial(1, 1),
            psi,
            Vec::new(),
            mu,
            None,
        )
        .unwrap()
    }

    fn standard_symplectic(m: usize) -> GcField {
        let pairs = m * (m - 1) / 2;
        let combs = crate::fields::combinations(m, 2);
        let mut comps = vec![0.0; pairs];
        for (ci, c) in combs.iter().enumerate() {
            if c[1] == c[0] + 1 && c[0] % 2 == 0 {
                comps[ci] = 1.0;
            }
        }
        GcField::from_symplectic(&FormField::constant(m, 2, &comps))
    }

    fn flat_metric(m: usize) -> MetricField {
        MetricField::from_metric_and_b(&MatrixField::identity(m, m), &FormField::zero(m, 2))
    }

    #[test]
    fn rotation_algebra_is_exact() {
        let g = LieAlgebraData::so3();
        assert_eq!(g.antisymmetry_residual(), 0.0);
        assert_eq!(g.jacobi_residual(), 0.0);
        let module = GModuleData::adjoint(&g);
        assert_eq!(module.representation_residual(&g), 0.0);
        // [e₀, e₁] = e₂
        assert_eq!(g.bracket(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn hemisemidirect_bracket_is_leibniz_not_skew() {
        let g = LieAlgebraData::so3();
        let module = GModuleData::adjoint(&g);
        let z1 = (vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 3.0]);
        let z2 = (vec![0.0, 1.0, 1.0], vec![2.0, 0.0, 1.0]);
        let z3 = (vec![1.0, 0.0, 2.0], vec![1.0, 1.0, 0.0]);
        fn pair(z: &(Vec<f64>, Vec<f64>)) -> (&[f64], &[f64]) {
            (z.0.as_slice(), z.1.as_slice())
        }
        // integer inputs keep the arithmetic exact, so Leibniz is exactly zero
        assert_eq!(
            hemisemi_leibniz_residual(&g, &module, pair(&z1), pair(&z2), pair(&z3)),
            0.0
        );
        let fwd = hemisemi_bracket(&g, &module, pair(&z1), pair(&z2));
        let bwd = hemisemi_bracket(&g, &module, pair(&z2), pair(&z1));
        let skew: f64 = fwd
            .1
            .iter()
            .zip(&bwd.1)
            .map(|(a, b)| (a + b).abs())
            .fold(0.0, f64::max);
        assert!(skew > 0.5, "module parts do not anti-commute");
    }

    #[test]
    fn rotation_fixture_satisfies_action_identities() {
        let data = rotation_fixture();
        let p = [0.3, -0.7, 0.5];
        assert!(data.homomorphism_residual(&p) < 1e-12);
        assert!(data.equivariance_residual(&p) < 1e-12);
        assert!(data.morphism_residual(&p) < 1e-12);
        assert!(data.moment_pairing_residual(&p) < 1e-12);
        // the identity is non-vacuous off the level: at x = (1,2,3) the
        // extended pairing ⟨ψ̃₀, dμ₁⟩ equals ⟨μ, e₀ × e₁⟩ = x₂ = 3
        let q = [1.0, 2.0, 3.0];
        let ext = data.extended_sections();
        let mom = data.moment_sections();
        let lhs = pairing_value(&ext[0].eval(&q), &mom[1].eval(&q));
        assert!((lhs - 3.0).abs() < 1e-13);
    }

    #[test]
    fn rotation_moment_is_conserved_along_flow() {
        let data = rotation_fixture();
        let x0 = [0.8, -0.4, 0.3];
        let end = flow_rk4(&data.psi[1], &x0, 2.5, 400);
        // the flow of −e₁ × x is a rotation, so each |x| and μ·e₁ persist
        let r0: f64 = x0.iter().map(|v| v * v).sum();
        let r1: f64 = end.iter().map(|v| v * v).sum();
        assert!((r0 - r1).abs() < 1e-10);
        assert!((end[1] - x0[1]).abs() < 1e-10);
    }

    #[test]
    fn newton_projection_reaches_level_set() {
        let data = circle_fixture();
        let x = data.project_to_level(&[2.0, 0.0, 0.0, 0.0], &tols(), 50).unwrap();
        let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((r - 1.0).abs() < 1e-10);
        assert!(data.level_residual(&x) < 1e-12);
        // dμ = x·dx vanishes at the origin, where the level set is singular
        match data.project_to_level(&[0.0; 4], &tols(), 50) {
            Err(Error::SingularLevel { rank, expected }) => {
                assert_eq!((rank, expected), (0, 1));
            }
            other => panic!("expected a singular level, got {other:?}"),
        }
    }

    #[test]
    fn circle_reduction_fiber_dimensions_and_conditions() {
        let data = circle_fixture();
        let j = standard_symplectic(4);
        let aux = flat_metric(4);
        let p = data.project_to_level(&[1.0, 0.3, -0.2, 0.4], &tols(), 50).unwrap();
        let out = reduce_at(&data, &aux, &[("symplectic".into(), j)], &p, &tols()).unwrap();
        assert_eq!((out.k_dim, out.kperp_dim, out.kg_dim), (2, 6, 4));
        assert_eq!((out.tangent_dim, out.cotangent_dim), (Some(2), Some(2)));
        assert!(out.k_isotropy_defect < 1e-12);
        assert!(out.homomorphism_residual < 1e-12);
        assert!(out.morphism_residual < 1e-12);
        assert!(out.warnings.is_empty(), "{:?}", out.warnings);
        let s = &out.structures[0];
        for (cond, res) in &s.conditions {
            assert!(res.holds, "{cond} fails with defect {}", res.defect);
        }
        assert!(s.invariance_residual < 1e-10);
        let red = s.reduced.as_ref().expect("restriction applies");
        assert!(red.square_residual < 1e-9);
        assert!(red.orthogonality_residual < 1e-9);
        assert_eq!(s.dirac.dim, 2);
        assert_eq!(s.dirac.conjugate_overlap, 0);
        assert!(s.dirac.isotropy_defect < 1e-9);
        assert!(s.two_path_angle.unwrap() < 1e-8);
        assert!(s.operator_gap.unwrap() < 1e-8);
    }

    #[test]
    fn condition_checks_on_hand_built_spans() {
        let m = 4;
        let j = standard_symplectic(m);
        let jm = j.at(&[0.0; 4]);
        let gm = flat_metric(m).at(&[0.0; 4]);
        // ∂₀ with its moment partner dx¹ is preserved by the symplectic
        // structure; the mismatched partner dx² is not
        let mut good = DMatrix::zeros(2 * m, 2);
        good[(0, 0)] = 1.0;
        good[(m + 1, 1)] = 1.0;
        let ctx = FiberContext::new(Subspace::span(&good, 1e-10), gm.clone(), 1e-10);
        assert_eq!((ctx.k.dim(), ctx.kperp.dim(), ctx.kg.dim()), (2, 6, 4));
        for (cond, res) in ctx.check_all(&jm, &tols()) {
            assert!(res.holds, "{cond} should hold, defect {}", res.defect);
        }
        let mut bad = DMatrix::zeros(2 * m, 2);
        bad[(0, 0)] = 1.0;
        bad[(m + 2, 1)] = 1.0;
        let ctx_bad = FiberContext::new(Subspace::span(&bad, 1e-10), gm, 1e-10);
        let results = ctx_bad.check_all(&jm, &tols());
        for (cond, res) in &results {
            assert!(!res.holds, "{cond} should fail");
            assert!(res.defect > 0.1);
        }
    }

    #[test]
    fn preserved_k_implies_weaker_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let (j, g) = sample_pair_fiber(&mut rng, 4);
            let k = sample_invariant_isotropic_fiber(&mut rng, &j);
            let ctx = FiberContext::new(k, g, 1e-10);
            let results = ctx.check_all(&j, &tols());
            assert!(results[0].1.holds, "constructed span is preserved");
            for (cond, res) in &results[1..] {
                assert!(res.holds, "{cond} must follow, defect {}", res.defect);
            }
        }
    }

    #[test]
    fn kg_and_sum_conditions_agree_for_commuting_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..10 {
            let (j, g) = sample_pair_fiber(&mut rng, 4);
            let k = if case % 2 == 0 {
                sample_isotropic_fiber(&mut rng, 4, 1, 1)
            } else {
                sample_invariant_isotropic_fiber(&mut rng, &j)
            };
            let ctx = FiberContext::new(k, g, 1e-10);
            let kg = ctx.check(Condition::PreservesKg, &j, &tols());
            let sum = ctx.check(Condition::PreservesKSum, &j, &tols());
            assert_eq!(kg.holds, sum.holds, "defects {} vs {}", kg.defect, sum.defect);
        }
    }

    #[test]
    fn dirac_route_is_independent_of_the_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let m = 4;
        for _ in 0..5 {
            let (j, g1) = sample_pair_fiber(&mut rng, m);
            let (_, g2) = sample_pair_fiber(&mut rng, m);
            let k = sample_invariant_isotropic_fiber(&mut rng, &j);
            let n = 2 * m;
            let half = DMatrix::from_fn(n, n, |a, b| {
                C64::new(if a == b { 0.5 } else { 0.0 }, -0.5 * j[(a, b)])
            });
            let l = Subspace::span(&half, 1e-10);
            let ctx1 = FiberContext::new(k.clone(), g1, 1e-10);
            let ctx2 = FiberContext::new(k, g2, 1e-10);
            let r1 = dirac_reduce_fiber(&l, &ctx1.k, &ctx1.kperp, ctx1.kg.basis(), 1e-10);
            let r2 = dirac_reduce_fiber(&l, &ctx2.k, &ctx2.kperp, ctx2.kg.basis(), 1e-10);
            // a J-invariant K of dimension 2 leaves a reduced fiber of
            // dimension 2m − 4, half of it holomorphic
            assert_eq!(ctx1.kg.dim(), 2 * m - 4);
            assert_eq!(r1.dim(), m - 2);
            let moved = transport_reduced_fiber(&r2, &ctx1.k, ctx2.kg.basis(), ctx1.kg.basis(), 1e-10);
            assert!(r1.max_principal_angle(&moved) < 1e-8);
        }
    }

    #[test]
    fn eigenspace_reconstruction_inverts_eigenbundle() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let (j, _) = sample_pair_fiber(&mut rng, 4);
        let n = j.nrows();
        let half = DMatrix::from_fn(n, n, |a, b| {
            C64::new(if a == b { 0.5 } else { 0.0 }, -0.5 * j[(a, b)])
        });
        let l = Subspace::span(&half, 1e-10);
        let (back, imag) = structure_from_eigenspace(&l).unwrap();
        assert!((back - j).amax() < 1e-10);
        assert!(imag < 1e-10);
    }
}
