//! Generalized structures on the split fiber TM ⊕ T*M.
//!
//! A generalized almost complex structure is an operator field J with
//! J² = −Id that preserves the pairing; its +i-eigenbundle is carried as the
//! projector field P = (Id − iJ)/2, stored as real and imaginary matrix
//! fields. A generalized metric is an involutive, pairing-symmetric operator
//! field G with ⟨G·,·⟩ positive definite; its ±1 eigenbundles C_± are graphs
//! of b ± g and are extracted pointwise.
//!
//! Conventions used throughout (and pinned by the unit tests):
//!
//! * symplectic type: J_ω = [[0, −ω̂⁻¹], [ω̂, 0]], so J_ω(∂₀) = dx¹ and
//!   J_ω(dx¹) = −∂₀ for ω = dx⁰∧dx¹;
//! * complex type: J_I = [[−I, 0], [0, Iᵀ]], whose +i-eigenbundle combines
//!   antiholomorphic vectors with holomorphic covectors;
//! * two-form operators: ω̂ = ĝ Î for the Hermitian two-forms, with the
//!   matrix convention of [`crate::calculus::two_form_operator`];
//! * the bihermitian dictionary maps (g, b, I₊, I₋) to the commuting pair
//!   J = ½ e^b [[Î₊+Î₋, −(ω̂₊⁻¹−ω̂₋⁻¹)], [ω̂₊−ω̂₋, −(Î₊+Î₋)ᵀ]] e^{−b},
//!   J' = ½ e^b [[Î₊−Î₋, −(ω̂₊⁻¹+ω̂₋⁻¹)], [ω̂₊+ω̂₋, −(Î₊−Î₋)ᵀ]] e^{−b}.

use nalgebra::DMatrix;

use crate::calculus::{
    bivector_operator_field, courant_bracket, exterior_derivative, pairing_matrix, pairing_value,
    two_form_from_operator_field, two_form_operator_field,
};
use crate::error::{Error, Result};
use crate::fields::{
    alt_apply, combinations, BivectorField, FormField, MatrixField, SectionField,
};
use crate::linalg::{Subspace, C64};

fn sup_entry(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Generalized almost complex structure as a 2m×2m operator field.
#[derive(Clone)]
pub struct GcField {
    pub op: MatrixField,
}

impl GcField {
    pub fn from_operator(op: MatrixField) -> Self {
        let (r, c) = op.shape();
        assert_eq!(r, c);
        assert_eq!(r, 2 * op.chart_dim());
        GcField { op }
    }

    pub fn chart_dim(&self) -> usize {
        self.op.chart_dim()
    }

    /// Symplectic type. Evaluation panics where ω is degenerate.
    pub fn from_symplectic(omega: &FormField) -> Self {
        assert_eq!(omega.degree(), 2);
        let m = omega.chart_dim();
        let om = two_form_operator_field(omega);
        let zero = MatrixField::constant(m, &DMatrix::zeros(m, m));
        Self::from_operator(MatrixField::block2x2(
            &zero,
            &om.inverse().scale(-1.0),
            &om,
            &zero,
        ))
    }

    /// Complex type from an almost complex structure on the tangent bundle.
    pub fn from_complex(i: &MatrixField) -> Self {
        let m = i.chart_dim();
        assert_eq!(i.shape(), (m, m));
        let zero = MatrixField::constant(m, &DMatrix::zeros(m, m));
        Self::from_operator(MatrixField::block2x2(&i.scale(-1.0), &zero, &zero, &i.transpose()))
    }

    /// Both structures of the bihermitian dictionary, (J, J').
    pub fn from_bihermitian(
        g: &MatrixField,
        b: &FormField,
        i_plus: &MatrixField,
        i_minus: &MatrixField,
    ) -> (Self, Self) {
        let m = g.chart_dim();
        assert_eq!(g.shape(), (m, m));
        assert_eq!(i_plus.shape(), (m, m));
        assert_eq!(i_minus.shape(), (m, m));
        assert_eq!(b.degree(), 2);
        let om_p = g.mul(i_plus);
        let om_m = g.mul(i_minus);
        let om_p_inv = om_p.inverse();
        let om_m_inv = om_m.inverse();
        let shear = b_shear(b);
        let unshear = b_shear(&b.scale(-1.0));
        let build = |tl: MatrixField, tr: MatrixField, bl: MatrixField, br: MatrixField| {
            let core = MatrixField::block2x2(&tl, &tr, &bl, &br).scale(0.5);
            GcField::from_operator(shear.mul(&core).mul(&unshear))
        };
        let j = build(
            i_plus.add(i_minus),
            om_p_inv.sub(&om_m_inv).scale(-1.0),
            om_p.sub(&om_m),
            i_plus.add(i_minus).transpose().scale(-1.0),
        );
        let j_prime = build(
            i_plus.sub(i_minus),
            om_p_inv.add(&om_m_inv).scale(-1.0),
            om_p.add(&om_m),
            i_plus.sub(i_minus).transpose().scale(-1.0),
        );
        (j, j_prime)
    }

    pub fn at(&self, p: &[f64]) -> DMatrix<f64> {
        self.op.eval(p)
    }

    pub fn apply(&self, e: &SectionField) -> SectionField {
        self.op.apply_section(e)
    }

    /// (‖J² + Id‖∞, ‖JᵀQJ − Q‖∞) at p.
    pub fn almost_structure_residuals(&self, p: &[f64]) -> (f64, f64) {
        let j = self.at(p);
        let n = j.nrows();
        let q = pairing_matrix(n / 2);
        let sq = sup_entry(&(&j * &j + DMatrix::identity(n, n)));
        let orth = sup_entry(&(j.transpose() * &q * &j - &q));
        (sq, orth)
    }

    /// +i-eigenbundle as a projector field (Id − iJ)/2.
    pub fn eigenbundle(&self) -> DiracField {
        let n = 2 * self.chart_dim();
        DiracField {
            re: MatrixField::identity(self.chart_dim(), n).scale(0.5),
            im: self.op.scale(-0.5),
        }
    }

    /// Max sup-norm of the Nijenhuis expression
    /// N(e₁,e₂) = ⟦Je₁,Je₂⟧ − ⟦e₁,e₂⟧ − J(⟦Je₁,e₂⟧ + ⟦e₁,Je₂⟧)
    /// over constant frame pairs at p. Tensorial for pairing-orthogonal J,
    /// so frame pairs decide integrability.
    pub fn nijenhuis_residual(&self, twist: Option<&FormField>, p: &[f64]) -> f64 {
        let m = self.chart_dim();
        let frames: Vec<SectionField> = (0..2 * m).map(|i| SectionField::frame(m, i)).collect();
        let j_frames: Vec<SectionField> = frames.iter().map(|e| self.apply(e)).collect();
        let mut worst = 0.0_f64;
        for a in 0..2 * m {
            for b in a + 1..2 * m {
                let t1 = courant_bracket(&j_frames[a], &j_frames[b], twist);
                let t2 = courant_bracket(&frames[a], &frames[b], twist);
                let t3 = self.apply(&courant_bracket(&j_frames[a], &frames[b], twist));
                let t4 = self.apply(&courant_bracket(&frames[a], &j_frames[b], twist));
                let (v1, v2) = (t1.eval(p), t2.eval(p));
                let (v3, v4) = (t3.eval(p), t4.eval(p));
                for i in 0..2 * m {
                    worst = worst.max((v1[i] - v2[i] - v3[i] - v4[i]).abs());
                }
            }
        }
        worst
    }
}

fn b_shear(b: &FormField) -> MatrixField {
    let m = b.chart_dim();
    let id = MatrixField::identity(m, m);
    let zero = MatrixField::constant(m, &DMatrix::zeros(m, m));
    MatrixField::block2x2(&id, &zero, &two_form_operator_field(b), &id)
}

/// Generalized metric as a 2m×2m operator field.
#[derive(Clone)]
pub struct MetricField {
    pub op: MatrixField,
}

impl MetricField {
    pub fn from_operator(op: MatrixField) -> Self {
        let (r, c) = op.shape();
        assert_eq!(r, c);
        assert_eq!(r, 2 * op.chart_dim());
        MetricField { op }
    }

    /// G = e^b [[0, g⁻¹], [g, 0]] e^{−b} from a Riemannian metric operator
    /// and a two-form.
    pub fn from_metric_and_b(g: &MatrixField, b: &FormField) -> Self {
        let m = g.chart_dim();
        assert_eq!(g.shape(), (m, m));
        let zero = MatrixField::constant(m, &DMatrix::zeros(m, m));
        let core = MatrixField::block2x2(&zero, &g.inverse(), g, &zero);
        let shear = b_shear(b);
        let unshear = b_shear(&b.scale(-1.0));
        Self::from_operator(shear.mul(&core).mul(&unshear))
    }

    /// G = −J₁J₂ for a commuting pair.
    pub fn from_pair(j1: &GcField, j2: &GcField) -> Self {
        Self::from_operator(j1.op.mul(&j2.op).scale(-1.0))
    }

    pub fn chart_dim(&self) -> usize {
        self.op.chart_dim()
    }

    pub fn at(&self, p: &[f64]) -> DMatrix<f64> {
        self.op.eval(p)
    }

    /// (‖G² − Id‖∞, ‖(QG)ᵀ − QG‖∞, min eigenvalue of sym(QG)) at p.
    pub fn metric_residuals(&self, p: &[f64]) -> (f64, f64, f64) {
        let g = self.at(p);
        let n = g.nrows();
        let q = pairing_matrix(n / 2);
        let sq = sup_entry(&(&g * &g - DMatrix::identity(n, n)));
        let qg = &q * &g;
        let sym_res = sup_entry(&(qg.transpose() - &qg));
        let sym = (&qg + qg.transpose()) * 0.5;
        let eigs = sym.symmetric_eigen().eigenvalues;
        let min_eig = eigs.iter().fold(f64::INFINITY, |m, &e| m.min(e));
        (sq, sym_res, min_eig)
    }

    /// ±1 eigenbundle C_± at p, as the image of (Id ± G)/2.
    pub fn c_space_at(&self, p: &[f64], sign: f64, rank_tol: f64) -> Subspace<f64> {
        c_space_of(&self.at(p), sign, rank_tol)
    }
}

/// ±1 eigenbundle of a pointwise generalized metric, as the image of
/// (Id ± G)/2.
pub fn c_space_of(g: &DMatrix<f64>, sign: f64, rank_tol: f64) -> Subspace<f64> {
    let n = g.nrows();
    let proj = (DMatrix::identity(n, n) + g * sign) * 0.5;
    Subspace::span(&proj, rank_tol)
}

/// Complex distribution carried as the real and imaginary parts of a
/// projector field. Rank-deciding operations take the rank tolerance of the
/// caller.
#[derive(Clone)]
pub struct DiracField {
    pub re: MatrixField,
    pub im: MatrixField,
}

impl DiracField {
    pub fn chart_dim(&self) -> usize {
        self.re.chart_dim()
    }

    /// Graph {X + i_X B} of a two-form, as a real projector field.
    pub fn graph_of_two_form(b: &FormField) -> Self {
        assert_eq!(b.degree(), 2);
        let m = b.chart_dim();
        let id = MatrixField::identity(m, m);
        let zero = MatrixField::constant(m, &DMatrix::zeros(m, m));
        let bop = two_form_operator_field(b);
        Self::projector_of_graph(&MatrixField::block2x2(&id, &zero, &bop, &zero), m)
    }

    /// Graph {π(ξ,·) + ξ} of a bivector, as a real projector field.
    pub fn graph_of_bivector(pi: &BivectorField) -> Self {
        let m = pi.chart_dim();
        let id = MatrixField::identity(m, m);
        let zero = MatrixField::constant(m, &DMatrix::zeros(m, m));
        let pop = bivector_operator_field(pi);
        Self::projector_of_graph(&MatrixField::block2x2(&pop, &zero, &id, &zero), m)
    }

    // orthogonal projector M (MᵀM)⁻¹ Mᵀ onto the column space of the first
    // m columns of a 2m×2m block assembly whose last m columns are zero
    fn projector_of_graph(cols: &MatrixField, m: usize) -> Self {
        let gram = cols.transpose().mul(cols);
        // the zero columns make the Gram singular; replace the dead block
        // with the identity so the inverse exists and the projector is
        // unchanged
        let fix = {
            let mut fix = DMatrix::zeros(2 * m, 2 * m);
            for i in m..2 * m {
                fix[(i, i)] = 1.0;
            }
            MatrixField::constant(m, &fix)
        };
        let proj = cols.mul(&gram.add(&fix).inverse()).mul(&cols.transpose());
        DiracField { re: proj, im: MatrixField::constant(m, &DMatrix::zeros(2 * m, 2 * m)) }
    }

    /// The distribution at p as a complex subspace.
    pub fn subspace_at(&self, p: &[f64], rank_tol: f64) -> Subspace<C64> {
        let re = self.re.eval(p);
        let im = self.im.eval(p);
        let c = DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]));
        Subspace::span(&c, rank_tol)
    }

    pub fn rank_at(&self, p: &[f64], rank_tol: f64) -> usize {
        self.subspace_at(p, rank_tol).dim()
    }

    /// Max of |⟨⟦eᵢ,eⱼ⟧_H, eₖ⟩|(p) over sections eᵢ(x) = P(x)cᵢ through a
    /// basis {cᵢ} of the fiber at p, normalized by the section norms at p.
    /// Zero (to roundoff) iff the distribution is bracket-involutive at p.
    pub fn integrability_residual(
        &self,
        twist: Option<&FormField>,
        p: &[f64],
        rank_tol: f64,
    ) -> f64 {
        let m = self.chart_dim();
        let basis = self.subspace_at(p, rank_tol);
        let k = basis.dim();
        // sections P(x)·c split into real and imaginary section fields
        let mut sections = Vec::with_capacity(k);
        for col in 0..k {
            let c = basis.basis().column(col).into_owned();
            let cre = SectionField::constant(m, &c.iter().map(|z| z.re).collect::<Vec<_>>());
            let cim = SectionField::constant(m, &c.iter().map(|z| z.im).collect::<Vec<_>>());
            let u = SectionField::lin_comb(&[
                (1.0, &self.re.apply_section(&cre)),
                (-1.0, &self.im.apply_section(&cim)),
            ]);
            let v = SectionField::lin_comb(&[
                (1.0, &self.re.apply_section(&cim)),
                (1.0, &self.im.apply_section(&cre)),
            ]);
            sections.push((u, v));
        }
        let at = |s: &(SectionField, SectionField)| (s.0.eval(p), s.1.eval(p));
        let norms: Vec<f64> = sections
            .iter()
            .map(|s| {
                let (u, v) = at(s);
                (u.iter().chain(v.iter()).map(|x| x * x).sum::<f64>()).sqrt()
            })
            .collect();
        let mut worst = 0.0_f64;
        for i in 0..k {
            for j in i..k {
                let (ui, vi) = (&sections[i].0, &sections[i].1);
                let (uj, vj) = (&sections[j].0, &sections[j].1);
                // ⟦uᵢ+ivᵢ, uⱼ+ivⱼ⟧ by bilinearity
                let re_br = SectionField::lin_comb(&[
                    (1.0, &courant_bracket(ui, uj, twist)),
                    (-1.0, &courant_bracket(vi, vj, twist)),
                ])
                .eval(p);
                let im_br = SectionField::lin_comb(&[
                    (1.0, &courant_bracket(ui, vj, twist)),
                    (1.0, &courant_bracket(vi, uj, twist)),
                ])
                .eval(p);
                for kk in 0..k {
                    let (uk, vk) = at(&sections[kk]);
                    let re_p = pairing_value(&re_br, &uk) - pairing_value(&im_br, &vk);
                    let im_p = pairing_value(&re_br, &vk) + pairing_value(&im_br, &uk);
                    let denom = (norms[i] * norms[j] * norms[kk]).max(1e-300);
                    worst = worst.max((re_p * re_p + im_p * im_p).sqrt() / denom);
                }
            }
        }
        worst
    }
}

/// Pointwise consistency of a structure pair.
#[derive(Clone, Copy, Debug)]
pub struct PairCheck {
    pub j1_square: f64,
    pub j1_orthogonality: f64,
    pub j2_square: f64,
    pub j2_orthogonality: f64,
    pub commutator: f64,
    pub metric_involution: f64,
    pub metric_symmetry: f64,
    pub metric_min_eigenvalue: f64,
}

impl PairCheck {
    pub fn max_residual(&self) -> f64 {
        self.j1_square
            .max(self.j1_orthogonality)
            .max(self.j2_square)
            .max(self.j2_orthogonality)
            .max(self.commutator)
            .max(self.metric_involution)
            .max(self.metric_symmetry)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual() < tol && self.metric_min_eigenvalue > 0.0
    }
}

/// Check that (J₁, J₂) is a commuting pair with positive metric −J₁J₂ at p.
pub fn check_pair(j1: &GcField, j2: &GcField, p: &[f64]) -> PairCheck {
    let (j1_square, j1_orthogonality) = j1.almost_structure_residuals(p);
    let (j2_square, j2_orthogonality) = j2.almost_structure_residuals(p);
    let a = j1.at(p);
    let b = j2.at(p);
    let commutator = sup_entry(&(&a * &b - &b * &a));
    let g = MetricField::from_pair(j1, j2);
    let (metric_involution, metric_symmetry, metric_min_eigenvalue) = g.metric_residuals(p);
    PairCheck {
        j1_square,
        j1_orthogonality,
        j2_square,
        j2_orthogonality,
        commutator,
        metric_involution,
        metric_symmetry,
        metric_min_eigenvalue,
    }
}

/// Pointwise consistency of a quaternionic triple with a shared metric.
#[derive(Clone, Copy, Debug)]
pub struct TripleCheck {
    /// max over the relations J₁J₂−J₃, J₂J₃−J₁, J₃J₁−J₂
    pub quaternion: f64,
    /// max almost-structure residual over the three
    pub structures: f64,
    /// max ‖[Jₐ, G]‖ over the three
    pub metric_commutators: f64,
    pub metric_min_eigenvalue: f64,
}

impl TripleCheck {
    pub fn max_residual(&self) -> f64 {
        self.quaternion.max(self.structures).max(self.metric_commutators)
    }
}

pub fn check_triple(triple: &[GcField; 3], g: &MetricField, p: &[f64]) -> TripleCheck {
    let mats: Vec<DMatrix<f64>> = triple.iter().map(|j| j.at(p)).collect();
    let quaternion = sup_entry(&(&mats[0] * &mats[1] - &mats[2]))
        .max(sup_entry(&(&mats[1] * &mats[2] - &mats[0])))
        .max(sup_entry(&(&mats[2] * &mats[0] - &mats[1])));
    let structures = triple
        .iter()
        .map(|j| {
            let (s, o) = j.almost_structure_residuals(p);
            s.max(o)
        })
        .fold(0.0_f64, f64::max);
    let gm = g.at(p);
    let metric_commutators =
        mats.iter().map(|j| sup_entry(&(j * &gm - &gm * j))).fold(0.0_f64, f64::max);
    let (_, _, metric_min_eigenvalue) = g.metric_residuals(p);
    TripleCheck { quaternion, structures, metric_commutators, metric_min_eigenvalue }
}

/// Pointwise bihermitian data recovered from a pair.
#[derive(Clone, Debug)]
pub struct BihermitianAt {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub i_plus: DMatrix<f64>,
    pub i_minus: DMatrix<f64>,
}

/// Invert the bihermitian dictionary at p: split the fiber into C_±, read
/// off g and b from the graph slopes b ± g, and project J₁ to the tangent
/// factors of C_±.
pub fn bihermitian_at(
    j1: &GcField,
    g: &MetricField,
    p: &[f64],
    rank_tol: f64,
) -> Result<BihermitianAt> {
    bihermitian_from_operators(&j1.at(p), &g.at(p), rank_tol)
}

/// Pointwise form of [`bihermitian_at`], for operators living on fibers
/// without a field description (reduced fibers in particular). Both
/// operators must refer to a split frame with the standard pairing.
pub fn bihermitian_from_operators(
    j: &DMatrix<f64>,
    g: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<BihermitianAt> {
    let m = j.nrows() / 2;
    let slope = |sign: f64| -> Result<DMatrix<f64>> {
        let c = c_space_of(g, sign, rank_tol);
        if c.dim() != m {
            return Err(Error::Invalid(format!(
                "eigenbundle of the metric has dimension {} at the sample point, expected {m}",
                c.dim()
            )));
        }
        let basis = c.basis();
        let x = basis.rows(0, m).into_owned();
        let xi = basis.rows(m, m).into_owned();
        let lu = x.lu();
        let xinv = lu.try_inverse().ok_or(Error::Degenerate { det: lu.determinant() })?;
        Ok(xi * xinv)
    };
    let s_plus = slope(1.0)?;
    let s_minus = slope(-1.0)?;
    let g_op = (&s_plus - &s_minus) * 0.5;
    let b_op = (&s_plus + &s_minus) * 0.5;
    let a_block = j.view((0, 0), (m, m)).into_owned();
    let b_block = j.view((0, m), (m, m)).into_owned();
    let i_plus = &a_block + &b_block * &s_plus;
    let i_minus = &a_block + &b_block * &s_minus;
    Ok(BihermitianAt { g: g_op, b: b_op, i_plus, i_minus })
}

/// Residuals of the two-form compatibility equations at p: the twisted
/// derivative convention is d^c α = −dα(I·, I·, I·), and a bihermitian
/// geometry with pure b-field torsion satisfies d^c₋ω₋ = db = −d^c₊ω₊.
/// Returns (‖d^c₋ω₋ − db‖∞, ‖d^c₊ω₊ + db‖∞).
pub fn dc_compatibility_residual(
    g: &MatrixField,
    b: &FormField,
    i_plus: &MatrixField,
    i_minus: &MatrixField,
    p: &[f64],
) -> (f64, f64) {
    let m = g.chart_dim();
    let combs3 = combinations(m, 3);
    let db = exterior_derivative(b).eval_components(p);
    let dc = |i_field: &MatrixField| -> Vec<f64> {
        let omega = two_form_from_operator_field(&g.mul(i_field));
        let domega = exterior_derivative(&omega).eval_components(p);
        let i_mat = i_field.eval(p);
        let cols: Vec<Vec<f64>> = (0..m).map(|j| i_mat.column(j).iter().cloned().collect()).collect();
        combs3
            .iter()
            .map(|c| {
                let args: Vec<&[f64]> =
                    vec![&cols[c[0]], &cols[c[1]], &cols[c[2]]];
                -alt_apply(&domega, &combs3, &args)
            })
            .collect()
    };
    let dc_minus = dc(i_minus);
    let dc_plus = dc(i_plus);
    let mut r_minus = 0.0_f64;
    let mut r_plus = 0.0_f64;
    for (ci, &dbv) in db.iter().enumerate() {
        r_minus = r_minus.max((dc_minus[ci] - dbv).abs());
        r_plus = r_plus.max((dc_plus[ci] + dbv).abs());
    }
    (r_minus, r_plus)
}

/// Standard complex structure on ℝ^m ≅ ℂ^{m/2} in interleaved coordinates
/// (x₁, y₁, x₂, y₂, …): I ∂xₖ = ∂yₖ.
pub fn standard_complex_matrix(m: usize) -> DMatrix<f64> {
    assert_eq!(m % 2, 0, "even dimension required");
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    DMatrix::identity(m / 2, m / 2).kronecker(&rot)
}

/// Random constant bihermitian data (g, b, I₊, I₋) on ℝ^m: each I is
/// conjugate to the standard complex structure and Hermitian for g.
pub fn sample_bihermitian<R: rand::Rng>(
    rng: &mut R,
    m: usize,
) -> (MatrixField, FormField, MatrixField, MatrixField) {
    assert_eq!(m % 2, 0, "even dimension required");
    // I = T O I₀ Oᵀ T⁻¹ squares to −Id; it is compatible with the
    // metric g = T⁻ᵀ T⁻¹ for any orthogonal O
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let i0 = rot.kronecker(&DMatrix::identity(m / 2, m / 2));
    let t = DMatrix::identity(m, m) + DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.3..0.3));
    let tinv = t.clone().try_inverse().expect("shear is invertible");
    let g = tinv.transpose() * &tinv;
    let mk_i = |rng: &mut R| {
        let raw = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let o = raw.qr().q();
        &t * &o * &i0 * o.transpose() * &tinv
    };
    let i_plus = mk_i(rng);
    let i_minus = mk_i(rng);
    let bcomps: Vec<f64> = (0..m * (m - 1) / 2).map(|_| rng.random_range(-0.5..0.5)).collect();
    (
        MatrixField::constant(m, &g),
        FormField::constant(m, 2, &bcomps),
        MatrixField::constant(m, &i_plus),
        MatrixField::constant(m, &i_minus),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::PolyTerm;
    use crate::linalg::null_space;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RANK_TOL: f64 = 1e-10;

    /// Left multiplication by the quaternion units on (x₀, x₁, x₂, x₃).
    pub fn quaternion_units() -> [DMatrix<f64>; 3] {
        let li = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0],
        );
        let lj = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0],
        );
        let lk = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.0, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        );
        [li, lj, lk]
    }

    #[test]
    fn symplectic_structure_action() {
        // ω = dx⁰∧dx¹: J(∂₀) = dx¹, J(dx¹) = −∂₀
        let omega = FormField::constant(2, 2, &[1.0]);
        let j = GcField::from_symplectic(&omega);
        let p = [0.3, 0.4];
        let jm = j.at(&p);
        let d0 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let dx1 = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        assert!((&jm * &d0 - &dx1).norm() < 1e-14);
        assert!((&jm * &dx1 + &d0).norm() < 1e-14);
        let (sq, orth) = j.almost_structure_residuals(&p);
        assert!(sq < 1e-14 && orth < 1e-14);
    }

    #[test]
    fn complex_structure_eigenbundle() {
        // standard I on ℝ²: the +i-eigenbundle holds ∂₀ + i∂₁ and dx⁰ + i dx¹
        let i = MatrixField::constant(2, &standard_complex_matrix(2));
        let j = GcField::from_complex(&i);
        let p = [0.1, -0.2];
        let l = j.eigenbundle().subspace_at(&p, RANK_TOL);
        assert_eq!(l.dim(), 2);
        let one = C64::new(1.0, 0.0);
        let iu = C64::new(0.0, 1.0);
        let z = C64::new(0.0, 0.0);
        let antiholo = DVector::from_vec(vec![one, iu, z, z]);
        let holo_form = DVector::from_vec(vec![z, z, one, iu]);
        assert!(l.contains_vector(&antiholo, 1e-10));
        assert!(l.contains_vector(&holo_form, 1e-10));
        assert!(l.is_isotropic(&pairing_matrix(2), 1e-12));
    }

    #[test]
    fn eigenbundle_matches_null_space_oracle() {
        // independent route: null space of J − i·Id
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            // random constant symplectic form: antisymmetric + dominance
            let m = 2;
            let raw = DMatrix::from_fn(2 * m, 2 * m, |_, _| rng.random_range(-1.0..1.0));
            let anti = (&raw - raw.transpose()) * 0.5 + standard_complex_matrix(4) * 2.0;
            let omega = FormField::constant(
                2 * m,
                2,
                &crate::calculus::operator_to_two_form(&anti.transpose()),
            );
            let j = GcField::from_symplectic(&omega);
            let p = [0.0; 4];
            let jm = j.at(&p);
            let n = jm.nrows();
            let c = DMatrix::from_fn(n, n, |i, k| C64::new(jm[(i, k)], 0.0))
                - DMatrix::from_diagonal_element(n, n, C64::new(0.0, 1.0));
            let oracle = Subspace::from_orthonormal(null_space(&c, RANK_TOL));
            let l = j.eigenbundle().subspace_at(&p, RANK_TOL);
            assert_eq!(l.dim(), n / 2);
            assert!(l.approx_eq(&oracle, 1e-8));
        }
    }

    #[test]
    fn flat_metric_eigenbundles() {
        let g = MatrixField::identity(2, 2);
        let b = FormField::zero(2, 2);
        let gm = MetricField::from_metric_and_b(&g, &b);
        let p = [0.5, 0.5];
        let (invol, sym, min_eig) = gm.metric_residuals(&p);
        assert!(invol < 1e-14 && sym < 1e-14);
        assert!((min_eig - 1.0).abs() < 1e-12);
        // C_± are the graphs of ±g
        let cp = gm.c_space_at(&p, 1.0, RANK_TOL);
        let cm = gm.c_space_at(&p, -1.0, RANK_TOL);
        assert_eq!(cp.dim(), 2);
        assert_eq!(cm.dim(), 2);
        let up = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        let um = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]);
        assert!(cp.contains_vector(&up, 1e-10));
        assert!(cm.contains_vector(&um, 1e-10));
    }

    #[test]
    fn dictionary_reduces_to_kaehler_pair() {
        // I₊ = I₋ = I, b = 0: J is the complex structure with flipped sign,
        // J' is the symplectic structure of ω = gI
        let m = 2;
        let i = MatrixField::constant(m, &standard_complex_matrix(2));
        let g = MatrixField::identity(m, m);
        let b = FormField::zero(m, 2);
        let (j, j_prime) = GcField::from_bihermitian(&g, &b, &i, &i);
        let p = [0.2, 0.9];
        let complex_j = GcField::from_complex(&i);
        assert!(sup_entry(&(j.at(&p) + complex_j.at(&p))) < 1e-14);
        let omega = two_form_from_operator_field(&g.mul(&i));
        let symp_j = GcField::from_symplectic(&omega);
        assert!(sup_entry(&(j_prime.at(&p) - symp_j.at(&p))) < 1e-14);
        let chk = check_pair(&j, &j_prime, &p);
        assert!(chk.passes(1e-12), "{chk:?}");
        // the metric of the pair is the flat one
        let gm = MetricField::from_pair(&j, &j_prime);
        assert!(sup_entry(&(gm.at(&p) - pairing_matrix(m))) < 1e-14);
    }

    #[test]
    fn quaternionic_triple_from_dictionary() {
        let m = 4;
        let units = quaternion_units();
        let g = MatrixField::identity(m, m);
        let b = FormField::zero(m, 2);
        let triple: Vec<GcField> = units
            .iter()
            .map(|u| GcField::from_bihermitian(&g, &b, &MatrixField::constant(m, u), &MatrixField::constant(m, u)).0)
            .collect();
        let (j1, rest) = triple.split_first().unwrap();
        let pair = GcField::from_bihermitian(
            &g,
            &b,
            &MatrixField::constant(m, &units[0]),
            &MatrixField::constant(m, &units[0]),
        );
        let gm = MetricField::from_pair(j1, &pair.1);
        let p = [0.1, 0.2, 0.3, 0.4];
        let triple_arr = [j1.clone(), rest[0].clone(), rest[1].clone()];
        let chk = check_triple(&triple_arr, &gm, &p);
        assert!(chk.max_residual() < 1e-13, "{chk:?}");
        assert!(chk.metric_min_eigenvalue > 0.9);
    }

    #[test]
    fn bihermitian_roundtrip_recovers_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for m in [2usize, 4] {
            for _ in 0..4 {
                let (g, b, ip, im) = sample_bihermitian(&mut rng, m);
                let (j1, j2) = GcField::from_bihermitian(&g, &b, &ip, &im);
                let p: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let chk = check_pair(&j1, &j2, &p);
                assert!(chk.passes(1e-10), "{chk:?}");
                let gm = MetricField::from_pair(&j1, &j2);
                let back = bihermitian_at(&j1, &gm, &p, RANK_TOL).unwrap();
                assert!(sup_entry(&(&back.g - g.eval(&p))) < 1e-8);
                let bop = crate::calculus::two_form_operator(m, &b.eval_components(&p));
                assert!(sup_entry(&(&back.b - bop)) < 1e-8);
                assert!(sup_entry(&(&back.i_plus - ip.eval(&p))) < 1e-8);
                assert!(sup_entry(&(&back.i_minus - im.eval(&p))) < 1e-8);
            }
        }
    }

    #[test]
    fn symplectic_integrability_detects_closedness() {
        // closed: ω = dx⁰∧dx¹ + dx²∧dx³
        let m = 4;
        let mut closed = vec![0.0; 6];
        closed[0] = 1.0;
        closed[5] = 1.0;
        let omega = FormField::constant(m, 2, &closed);
        let j = GcField::from_symplectic(&omega);
        let p = [0.3, -0.1, 0.2, 0.5];
        assert!(j.nijenhuis_residual(None, &p) < 1e-10);
        // non-closed: ω = dx⁰∧dx¹ + x⁰ dx²∧dx³, dω = dx⁰∧dx²∧dx³ ≠ 0
        let comps = vec![
            vec![PolyTerm::new(1.0)],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![PolyTerm::new(1.0).pow(0, 1)],
        ];
        let omega_bad = FormField::poly(m, 2, comps);
        let j_bad = GcField::from_symplectic(&omega_bad);
        assert!(j_bad.nijenhuis_residual(None, &[0.5, -0.1, 0.2, 0.5]) > 1e-3);
    }

    #[test]
    fn twist_obstructs_symplectic_structure() {
        // a closed ω that is integrable untwisted fails against a volume twist
        let omega = FormField::constant(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let j = GcField::from_symplectic(&omega);
        let mut hc = vec![0.0; 4];
        hc[0] = 1.0; // dx⁰∧dx¹∧dx²
        let h = FormField::constant(4, 3, &hc);
        let p = [0.1, 0.7, -0.3, 0.2];
        assert!(j.nijenhuis_residual(Some(&h), &p) > 1e-3);
    }

    #[test]
    fn graph_of_two_form_is_lagrangian_and_projects() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 3;
        let b = FormField::poly(
            m,
            2,
            (0..3).map(|_| vec![PolyTerm::new(rng.random_range(-1.0..1.0)).pow(0, 1)]).collect(),
        );
        let d = DiracField::graph_of_two_form(&b);
        let p = [0.4, 0.2, -0.6];
        let l = d.subspace_at(&p, RANK_TOL);
        assert_eq!(l.dim(), m);
        assert!(l.isotropy_defect(&pairing_matrix(m)) < 1e-12);
        // the graph contains X + i_X B for X = e₀
        let bop = crate::calculus::two_form_operator(m, &b.eval_components(&p));
        let mut v = DVector::zeros(2 * m);
        v[0] = 1.0;
        for i in 0..m {
            v[m + i] = bop[(i, 0)];
        }
        let vc = v.map(|x| C64::new(x, 0.0));
        assert!(l.contains_vector(&vc, 1e-10));
    }

    #[test]
    fn graph_integrability_matches_twist_condition() {
        // {X + i_X B} is involutive for ⟦,⟧_H exactly when H + dB = 0
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = 3;
        let comps: Vec<Vec<PolyTerm>> = (0..3)
            .map(|_| {
                vec![PolyTerm::new(rng.random_range(-1.0..1.0))
                    .pow(rng.random_range(0..m), 1)
                    .pow(rng.random_range(0..m), 1)]
            })
            .collect();
        let b = FormField::poly(m, 2, comps);
        let d = DiracField::graph_of_two_form(&b);
        let h_good = exterior_derivative(&b.scale(-1.0));
        let h_bad = exterior_derivative(&b);
        let p = [0.5, -0.4, 0.3];
        assert!(d.integrability_residual(Some(&h_good), &p, RANK_TOL) < 1e-10);
        assert!(d.integrability_residual(Some(&h_bad), &p, RANK_TOL) > 1e-4);
        assert!(d.integrability_residual(None, &p, RANK_TOL) > 1e-4);
    }

    #[test]
    fn bivector_graph_integrability_is_poisson() {
        let m = 3;
        // π = x² ∂₀∧∂₁ + ∂₀∧∂₂ satisfies the Jacobi identity
        let poisson = BivectorField::poly(
            m,
            vec![vec![PolyTerm::new(1.0).pow(2, 1)], vec![PolyTerm::new(1.0)], vec![]],
        );
        let d = DiracField::graph_of_bivector(&poisson);
        let p = [0.3, 0.8, -0.5];
        assert_eq!(d.rank_at(&p, RANK_TOL), m);
        assert!(d.subspace_at(&p, RANK_TOL).isotropy_defect(&pairing_matrix(m)) < 1e-12);
        assert!(d.integrability_residual(None, &p, RANK_TOL) < 1e-10);
        // π = ∂₀∧∂₁ − x⁰ ∂₀∧∂₂ has Jacobiator 1
        let contact = BivectorField::poly(
            m,
            vec![vec![PolyTerm::new(1.0)], vec![PolyTerm::new(-1.0).pow(0, 1)], vec![]],
        );
        let d_bad = DiracField::graph_of_bivector(&contact);
        assert!(d_bad.integrability_residual(None, &p, RANK_TOL) > 1e-4);
    }

    #[test]
    fn dc_residual_vanishes_for_kaehler_data() {
        let m = 4;
        let units = quaternion_units();
        let g = MatrixField::identity(m, m);
        let b = FormField::zero(m, 2);
        let i = MatrixField::constant(m, &units[0]);
        let (rm, rp) = dc_compatibility_residual(&g, &b, &i, &i, &[0.1, 0.2, 0.3, 0.4]);
        assert!(rm < 1e-13 && rp < 1e-13);
    }

    #[test]
    fn complex_structure_twisted_integrability_depends_on_twist_type() {
        // the twisted obstruction is the component of H on three
        // antiholomorphic directions, so in complex dimension two every
        // twist is invisible to a complex-type structure
        let i4 = MatrixField::constant(4, &standard_complex_matrix(4));
        let j4 = GcField::from_complex(&i4);
        let p4 = [0.4, 0.1, -0.2, 0.3];
        assert!(j4.nijenhuis_residual(None, &p4) < 1e-12);
        let mut hc = vec![Vec::new(); 4];
        hc[0] = vec![PolyTerm::new(1.0).pow(3, 1)];
        let h4 = FormField::poly(4, 3, hc);
        assert!(j4.nijenhuis_residual(Some(&h4), &p4) < 1e-12);
        // in complex dimension three, the real part of dz¹∧dz²∧dz³ has a
        // nonzero antiholomorphic component and obstructs
        let i6 = MatrixField::constant(6, &standard_complex_matrix(6));
        let j6 = GcField::from_complex(&i6);
        let mut h6 = vec![0.0; 20];
        h6[5] = 1.0; // dx⁰∧dx²∧dx⁴
        h6[8] = -1.0; // dx⁰∧dx³∧dx⁵
        h6[12] = -1.0; // dx¹∧dx²∧dx⁵
        h6[13] = -1.0; // dx¹∧dx³∧dx⁴
        let h = FormField::constant(6, 3, &h6);
        let p6 = [0.4, 0.1, -0.2, 0.3, 0.6, -0.5];
        assert!(j6.nijenhuis_residual(None, &p6) < 1e-12);
        assert!(j6.nijenhuis_residual(Some(&h), &p6) > 1e-3);
    }
}
