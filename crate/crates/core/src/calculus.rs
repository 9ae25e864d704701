//! Differential operators on chart fields.
//!
//! Conventions, with sections written (X; ξ) and the vector part first:
//!
//! * pairing ⟨X+ξ, Y+η⟩ = η(X) + ξ(Y), so ⟨∂₀+dx⁰, ∂₀+dx⁰⟩ = 2;
//! * twisted bracket ⟦X+ξ, Y+η⟧_H = [X,Y] + 𝓛_X η − i_Y dξ + i_Y i_X H;
//! * exterior derivative (dα)_{i₀…i_k} = Σ_j (−1)ʲ ∂_{i_j} α_{i₀…î_j…i_k};
//! * b-transform e^B(X+ξ) = X + ξ + i_X B.
//!
//! The bracket satisfies, for sections e₁, e₂, e₃, functions f and closed H:
//! the Jacobi identity in Leibniz form, the anchored Leibniz rule
//! ⟦e₁, f e₂⟧ = f ⟦e₁,e₂⟧ + (π(e₁)f) e₂, invariance of the pairing,
//! anchor compatibility π⟦e₁,e₂⟧ = [π e₁, π e₂], and
//! ⟦e,e⟧ = (0; ½ d⟨e,e⟩). [`axioms_residual`] measures all five pointwise.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::ad::{jet1, ChartMap, JetScalar, SmoothFn};
use crate::fields::{
    combinations, BivectorField, FormField, MatrixField, ScalarField, SectionField, VectorField,
};

/// Matrix of the canonical pairing in the (X; ξ) component order.
pub fn pairing_matrix(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        if i + m == j || j + m == i {
            1.0
        } else {
            0.0
        }
    })
}

/// ⟨u, v⟩ for fiber vectors of length 2m.
pub fn pairing_value(u: &[f64], v: &[f64]) -> f64 {
    let m = u.len() / 2;
    (0..m).map(|i| u[i] * v[m + i] + v[i] * u[m + i]).sum()
}

fn pairing_jet<T: JetScalar>(u: &[T], v: &[T]) -> T {
    let m = u.len() / 2;
    let mut acc = T::zero();
    for i in 0..m {
        acc = acc + u[i] * v[m + i] + v[i] * u[m + i];
    }
    acc
}

struct PairingMap {
    e1: Arc<dyn ChartMap>,
    e2: Arc<dyn ChartMap>,
    m: usize,
}

impl SmoothFn for PairingMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut a = vec![T::zero(); 2 * self.m];
        let mut b = vec![T::zero(); 2 * self.m];
        T::eval_map(self.e1.as_ref(), x, &mut a);
        T::eval_map(self.e2.as_ref(), x, &mut b);
        out[0] = pairing_jet(&a, &b);
    }
}

/// ⟨e₁, e₂⟩ as a scalar field.
pub fn pairing_field(e1: &SectionField, e2: &SectionField) -> ScalarField {
    assert_eq!(e1.chart_dim(), e2.chart_dim());
    ScalarField::from_map(
        e1.chart_dim(),
        Arc::new(PairingMap { e1: e1.map().clone(), e2: e2.map().clone(), m: e1.chart_dim() }),
    )
}

struct ExtDerivMap {
    inner: Arc<dyn ChartMap>,
    m: usize,
    // combinations indexing the input and output components
    combs_in: Vec<Vec<usize>>,
    combs_out: Vec<Vec<usize>>,
}

impl ExtDerivMap {
    fn index_in(&self, combo: &[usize]) -> usize {
        self.combs_in.iter().position(|c| c == combo).expect("combination")
    }
}

impl SmoothFn for ExtDerivMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        self.combs_out.len()
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let (_, parts) = jet1::<T>(self.inner.as_ref(), x);
        for (oi, combo) in self.combs_out.iter().enumerate() {
            let mut acc = T::zero();
            let mut sign = 1.0;
            for (j, &dir) in combo.iter().enumerate() {
                let rest: Vec<usize> =
                    combo.iter().enumerate().filter(|&(t, _)| t != j).map(|(_, &v)| v).collect();
                let ci = self.index_in(&rest);
                acc = acc + T::from_f64(sign) * parts[dir][ci];
                sign = -sign;
            }
            out[oi] = acc;
        }
    }
}

/// Exterior derivative of a k-form (k ≤ 3).
pub fn exterior_derivative(alpha: &FormField) -> FormField {
    let m = alpha.chart_dim();
    let k = alpha.degree();
    assert!(k + 1 <= 4, "derivative would exceed degree 4");
    FormField::from_map(
        m,
        k + 1,
        Arc::new(ExtDerivMap {
            inner: alpha.map().clone(),
            m,
            combs_in: combinations(m, k),
            combs_out: combinations(m, k + 1),
        }),
    )
}

/// df of a scalar field as a one-form.
pub fn differential(f: &ScalarField) -> FormField {
    exterior_derivative(&FormField::from_scalar(f))
}

/// Operator matrix of a two-form: (i_X B)_i = Σ_j X^j B_{ji}, so the matrix
/// acting on vector components is M[i][j] = B_{ji}.
pub fn two_form_operator(m: usize, comps: &[f64]) -> DMatrix<f64> {
    let combs = combinations(m, 2);
    let mut mat = DMatrix::zeros(m, m);
    for (ci, c) in combs.iter().enumerate() {
        let (a, b) = (c[0], c[1]);
        mat[(b, a)] = comps[ci];
        mat[(a, b)] = -comps[ci];
    }
    mat
}

/// Components of a two-form from its operator matrix (inverse of
/// [`two_form_operator`]; the matrix must be antisymmetric).
pub fn operator_to_two_form(mat: &DMatrix<f64>) -> Vec<f64> {
    let m = mat.nrows();
    combinations(m, 2).iter().map(|c| mat[(c[1], c[0])]).collect()
}

/// Same index convention as [`two_form_operator`], in jet arithmetic:
/// M[i][j] = c_{ji} for components c over increasing pairs.
pub(crate) fn two_index_operator_gmat<T: JetScalar>(
    m: usize,
    comps: &[T],
    combs: &[Vec<usize>],
) -> crate::ad::GMat<T> {
    let mut mat = crate::ad::GMat::zeros(m, m);
    for (ci, c) in combs.iter().enumerate() {
        let (a, b) = (c[0], c[1]);
        mat.set(b, a, comps[ci]);
        mat.set(a, b, T::zero() - comps[ci]);
    }
    mat
}

struct TwoIndexOperatorMap {
    inner: Arc<dyn ChartMap>,
    m: usize,
    combs: Vec<Vec<usize>>,
}

impl SmoothFn for TwoIndexOperatorMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        self.m * self.m
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut comps = vec![T::zero(); self.combs.len()];
        T::eval_map(self.inner.as_ref(), x, &mut comps);
        let mat = two_index_operator_gmat(self.m, &comps, &self.combs);
        out.copy_from_slice(&mat.a);
    }
}

/// The operator X ↦ i_X B of a two-form field, as an m×m matrix field.
pub fn two_form_operator_field(b: &FormField) -> MatrixField {
    assert_eq!(b.degree(), 2);
    let m = b.chart_dim();
    MatrixField::from_map(
        m,
        m,
        m,
        Arc::new(TwoIndexOperatorMap { inner: b.map().clone(), m, combs: combinations(m, 2) }),
    )
}

/// The operator ξ ↦ π(ξ, ·) of a bivector field, acting on covector
/// components, as an m×m matrix field.
pub fn bivector_operator_field(pi: &BivectorField) -> MatrixField {
    let m = pi.chart_dim();
    MatrixField::from_map(
        m,
        m,
        m,
        Arc::new(TwoIndexOperatorMap { inner: pi.map().clone(), m, combs: combinations(m, 2) }),
    )
}

struct OperatorToFormMap {
    inner: Arc<dyn ChartMap>,
    m: usize,
    combs: Vec<Vec<usize>>,
}

impl SmoothFn for OperatorToFormMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        self.combs.len()
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut buf = vec![T::zero(); self.m * self.m];
        T::eval_map(self.inner.as_ref(), x, &mut buf);
        for (ci, c) in self.combs.iter().enumerate() {
            out[ci] = buf[c[1] * self.m + c[0]];
        }
    }
}

/// Two-form with components B_{ab} = M[b][a] from an antisymmetric operator
/// field (inverse of [`two_form_operator_field`]).
pub fn two_form_from_operator_field(op: &MatrixField) -> FormField {
    let (r, c) = op.shape();
    assert_eq!(r, c);
    let m = op.chart_dim();
    assert_eq!(r, m);
    FormField::from_map(
        m,
        2,
        Arc::new(OperatorToFormMap { inner: op.map().clone(), m, combs: combinations(m, 2) }),
    )
}

struct CourantBracketMap {
    e1: Arc<dyn ChartMap>,
    e2: Arc<dyn ChartMap>,
    twist: Option<(Arc<dyn ChartMap>, Vec<Vec<usize>>)>,
    m: usize,
}

impl SmoothFn for CourantBracketMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        2 * self.m
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let m = self.m;
        let (v1, p1) = jet1::<T>(self.e1.as_ref(), x);
        let (v2, p2) = jet1::<T>(self.e2.as_ref(), x);
        // [X,Y]^i = X^j ∂_j Y^i − Y^j ∂_j X^i
        for i in 0..m {
            let mut acc = T::zero();
            for j in 0..m {
                acc = acc + v1[j] * p2[j][i] - v2[j] * p1[j][i];
            }
            out[i] = acc;
        }
        // (𝓛_X η)_i − (i_Y dξ)_i
        //   = Σ_j X^j ∂_j η_i + η_j ∂_i X^j − Y^j (∂_j ξ_i − ∂_i ξ_j)
        for i in 0..m {
            let mut acc = T::zero();
            for j in 0..m {
                acc = acc + v1[j] * p2[j][m + i] + v2[m + j] * p1[i][j];
                acc = acc - v2[j] * (p1[j][m + i] - p1[i][m + j]);
            }
            out[m + i] = acc;
        }
        // + i_Y i_X H, expanded per ordered triple a<b<c of each H component
        if let Some((h, combs)) = &self.twist {
            let mut hc = vec![T::zero(); combs.len()];
            T::eval_map(h.as_ref(), x, &mut hc);
            for (ci, c) in combs.iter().enumerate() {
                let (a, b, cc) = (c[0], c[1], c[2]);
                let hval = hc[ci];
                // H(X,Y,e_i) expands the 3×3 determinant along its last column
                out[m + cc] = out[m + cc] + hval * (v1[a] * v2[b] - v1[b] * v2[a]);
                out[m + b] = out[m + b] - hval * (v1[a] * v2[cc] - v1[cc] * v2[a]);
                out[m + a] = out[m + a] + hval * (v1[b] * v2[cc] - v1[cc] * v2[b]);
            }
        }
    }
}

/// H-twisted Dorfman bracket ⟦e₁, e₂⟧_H as a section field.
pub fn courant_bracket(
    e1: &SectionField,
    e2: &SectionField,
    twist: Option<&FormField>,
) -> SectionField {
    let m = e1.chart_dim();
    assert_eq!(e2.chart_dim(), m);
    let twist = twist.map(|h| {
        assert_eq!(h.degree(), 3);
        assert_eq!(h.chart_dim(), m);
        (h.map().clone(), combinations(m, 3))
    });
    SectionField::from_map(
        m,
        Arc::new(CourantBracketMap { e1: e1.map().clone(), e2: e2.map().clone(), twist, m }),
    )
}

struct BTransformMap {
    e: Arc<dyn ChartMap>,
    b: Arc<dyn ChartMap>,
    combs: Vec<Vec<usize>>,
    m: usize,
}

impl SmoothFn for BTransformMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        2 * self.m
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let m = self.m;
        let mut e = vec![T::zero(); 2 * m];
        let mut bc = vec![T::zero(); self.combs.len()];
        T::eval_map(self.e.as_ref(), x, &mut e);
        T::eval_map(self.b.as_ref(), x, &mut bc);
        out.copy_from_slice(&e);
        // (i_X B)_i = Σ_j X^j B_{ji}
        for (ci, c) in self.combs.iter().enumerate() {
            let (a, b) = (c[0], c[1]);
            out[m + b] = out[m + b] + bc[ci] * e[a];
            out[m + a] = out[m + a] - bc[ci] * e[b];
        }
    }
}

/// e^B(X+ξ) = X + ξ + i_X B for a two-form B.
pub fn b_transform(e: &SectionField, b: &FormField) -> SectionField {
    let m = e.chart_dim();
    assert_eq!(b.degree(), 2);
    assert_eq!(b.chart_dim(), m);
    SectionField::from_map(
        m,
        Arc::new(BTransformMap {
            e: e.map().clone(),
            b: b.map().clone(),
            combs: combinations(m, 2),
            m,
        }),
    )
}

struct LieScalarMap {
    v: Arc<dyn ChartMap>,
    f: Arc<dyn ChartMap>,
    m: usize,
}

impl SmoothFn for LieScalarMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut v = vec![T::zero(); self.m];
        T::eval_map(self.v.as_ref(), x, &mut v);
        let (_, parts) = jet1::<T>(self.f.as_ref(), x);
        let mut acc = T::zero();
        for (j, &vj) in v.iter().enumerate() {
            acc = acc + vj * parts[j][0];
        }
        out[0] = acc;
    }
}

/// X·f as a scalar field.
pub fn lie_derivative_scalar(v: &VectorField, f: &ScalarField) -> ScalarField {
    assert_eq!(v.chart_dim(), f.chart_dim());
    ScalarField::from_map(
        v.chart_dim(),
        Arc::new(LieScalarMap { v: v.map().clone(), f: f.map().clone(), m: v.chart_dim() }),
    )
}

struct LieBracketMap {
    a: Arc<dyn ChartMap>,
    b: Arc<dyn ChartMap>,
    m: usize,
}

impl SmoothFn for LieBracketMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        self.m
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let (va, pa) = jet1::<T>(self.a.as_ref(), x);
        let (vb, pb) = jet1::<T>(self.b.as_ref(), x);
        for i in 0..self.m {
            let mut acc = T::zero();
            for j in 0..self.m {
                acc = acc + va[j] * pb[j][i] - vb[j] * pa[j][i];
            }
            out[i] = acc;
        }
    }
}

/// Lie bracket of vector fields [X, Y].
pub fn lie_bracket(a: &VectorField, b: &VectorField) -> VectorField {
    assert_eq!(a.chart_dim(), b.chart_dim());
    VectorField::from_map(
        a.chart_dim(),
        Arc::new(LieBracketMap { a: a.map().clone(), b: b.map().clone(), m: a.chart_dim() }),
    )
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Pointwise residuals of the five bracket axioms.
#[derive(Clone, Copy, Debug)]
pub struct AxiomResiduals {
    /// Jacobi identity in Leibniz form.
    pub jacobi: f64,
    /// Leibniz rule for a function multiplying the second argument.
    pub leibniz: f64,
    /// Pairing invariance under the bracket adjoint action.
    pub invariance: f64,
    /// Anchor is bracket-compatible.
    pub anchor: f64,
    /// Symmetric part is half the differential of the norm.
    pub symmetric_part: f64,
}

impl AxiomResiduals {
    pub fn max(&self) -> f64 {
        self.jacobi
            .max(self.leibniz)
            .max(self.invariance)
            .max(self.anchor)
            .max(self.symmetric_part)
    }
}

/// Evaluate all five axiom residuals at a point for given test sections and
/// a test function. `twist` must be a three-form (closedness is what the
/// residuals probe; a non-closed twist shows up in `jacobi`).
pub fn axioms_residual(
    twist: Option<&FormField>,
    e1: &SectionField,
    e2: &SectionField,
    e3: &SectionField,
    f: &ScalarField,
    p: &[f64],
) -> AxiomResiduals {
    let br = |a: &SectionField, b: &SectionField| courant_bracket(a, b, twist);

    // Jacobi: ⟦e₁,⟦e₂,e₃⟧⟧ − ⟦⟦e₁,e₂⟧,e₃⟧ − ⟦e₂,⟦e₁,e₃⟧⟧
    let b23 = br(e2, e3);
    let b12 = br(e1, e2);
    let b13 = br(e1, e3);
    let lhs = br(e1, &b23).eval(p);
    let r1 = br(&b12, e3).eval(p);
    let r2 = br(e2, &b13).eval(p);
    let jac: Vec<f64> = lhs.iter().zip(r1.iter().zip(&r2)).map(|(l, (a, b))| l - a - b).collect();

    // Leibniz: ⟦e₁, f e₂⟧ − f ⟦e₁,e₂⟧ − (π(e₁)f) e₂
    let fe2 = e2.scale_by(f);
    let lhs = br(e1, &fe2).eval(p);
    let fval = f.eval(p);
    let xf = lie_derivative_scalar(&e1.vector_part(), f).eval(p);
    let b12p = b12.eval(p);
    let e2p = e2.eval(p);
    let lei: Vec<f64> = lhs
        .iter()
        .enumerate()
        .map(|(i, l)| l - fval * b12p[i] - xf * e2p[i])
        .collect();

    // Invariance: π(e₁)⟨e₂,e₃⟩ − ⟨⟦e₁,e₂⟧,e₃⟩ − ⟨e₂,⟦e₁,e₃⟧⟩
    let d_pair = lie_derivative_scalar(&e1.vector_part(), &pairing_field(e2, e3)).eval(p);
    let e3p = e3.eval(p);
    let inv = d_pair - pairing_value(&b12p, &e3p) - pairing_value(&e2p, &b13.eval(p));

    // Anchor: π⟦e₁,e₂⟧ − [π e₁, π e₂]
    let lb = lie_bracket(&e1.vector_part(), &e2.vector_part()).eval(p);
    let m = e1.chart_dim();
    let anc: Vec<f64> = (0..m).map(|i| b12p[i] - lb[i]).collect();

    // Symmetric part: ⟦e₁,e₁⟧ − (0; ½ d⟨e₁,e₁⟩)
    let b11 = br(e1, e1).eval(p);
    let dn = differential(&pairing_field(e1, e1)).eval_components(p);
    let mut sym = sup_norm(&b11[..m]);
    for i in 0..m {
        sym = sym.max((b11[m + i] - 0.5 * dn[i]).abs());
    }

    AxiomResiduals {
        jacobi: sup_norm(&jac),
        leibniz: sup_norm(&lei),
        invariance: inv.abs(),
        anchor: sup_norm(&anc),
        symmetric_part: sym,
    }
}

/// Curvature identity of an isotropic splitting shifted by a two-form b:
/// with ∇X = X + i_X b and background twist H₀,
/// ⟨⟦∇X, ∇Y⟧_{H₀}, ∇Z⟩ = (H₀ + db)(X, Y, Z).
/// Returns (lhs, rhs, |lhs − rhs|) at p.
pub fn splitting_curvature(
    b: &FormField,
    h0: Option<&FormField>,
    x: &VectorField,
    y: &VectorField,
    z: &VectorField,
    p: &[f64],
) -> (f64, f64, f64) {
    let grade_x = b_transform(&x.as_section(), b);
    let grade_y = b_transform(&y.as_section(), b);
    let grade_z = b_transform(&z.as_section(), b);
    let lhs = pairing_value(&courant_bracket(&grade_x, &grade_y, h0).eval(p), &grade_z.eval(p));
    let db = exterior_derivative(b);
    let xp = x.eval(p);
    let yp = y.eval(p);
    let zp = z.eval(p);
    let args: Vec<&[f64]> = vec![&xp, &yp, &zp];
    let mut rhs = db.apply_at(p, &args);
    if let Some(h) = h0 {
        rhs += h.apply_at(p, &args);
    }
    (lhs, rhs, (lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{binomial, PolyTerm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_poly_terms(rng: &mut ChaCha8Rng, m: usize) -> Vec<PolyTerm> {
        let n = rng.random_range(1..3);
        (0..n)
            .map(|_| {
                let mut t = PolyTerm::new(rng.random_range(-1.0..1.0));
                for _ in 0..rng.random_range(0..3) {
                    t = t.pow(rng.random_range(0..m), rng.random_range(1..3));
                }
                t
            })
            .collect()
    }

    fn rand_section(rng: &mut ChaCha8Rng, m: usize) -> SectionField {
        SectionField::poly(m, (0..2 * m).map(|_| rand_poly_terms(rng, m)).collect())
    }

    fn rand_point(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn pairing_of_mixed_frame_section() {
        let m = 2;
        let e = SectionField::constant(m, &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(pairing_value(&e.eval(&[0.0, 0.0]), &e.eval(&[0.0, 0.0])), 2.0);
        let q = pairing_matrix(m);
        assert_eq!(q[(0, 2)], 1.0);
        assert_eq!(q[(2, 0)], 1.0);
        assert_eq!(q[(0, 1)], 0.0);
        // Q² = Id
        assert!((q.clone() * q - DMatrix::identity(4, 4)).norm() < 1e-15);
    }

    #[test]
    fn exterior_derivative_of_one_form() {
        // d(x⁰ dx¹) = dx⁰∧dx¹
        let alpha = FormField::poly(2, 1, vec![vec![], vec![PolyTerm::new(1.0).pow(0, 1)]]);
        let d = exterior_derivative(&alpha);
        assert_eq!(d.eval_components(&[0.7, -0.3]), vec![1.0]);
        // d(x¹ dx⁰) = −dx⁰∧dx¹
        let beta = FormField::poly(2, 1, vec![vec![PolyTerm::new(1.0).pow(1, 1)], vec![]]);
        assert_eq!(exterior_derivative(&beta).eval_components(&[0.7, -0.3]), vec![-1.0]);
    }

    #[test]
    fn exterior_derivative_of_three_form() {
        // d(x³ dx⁰∧dx¹∧dx²) = −dx⁰∧dx¹∧dx²∧dx³
        let mut comps = vec![Vec::new(); binomial(4, 3)];
        comps[0] = vec![PolyTerm::new(1.0).pow(3, 1)];
        let h = FormField::poly(4, 3, comps);
        let dh = exterior_derivative(&h);
        assert_eq!(dh.eval_components(&[0.1, 0.2, 0.3, 0.4]), vec![-1.0]);
    }

    #[test]
    fn d_squared_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 4;
        for _ in 0..5 {
            let alpha =
                FormField::poly(m, 2, (0..binomial(m, 2)).map(|_| rand_poly_terms(&mut rng, m)).collect());
            let dd = exterior_derivative(&exterior_derivative(&alpha));
            let p = rand_point(&mut rng, m);
            for c in dd.eval_components(&p) {
                assert!(c.abs() < 1e-13, "d∘d component {c}");
            }
        }
    }

    #[test]
    fn differential_matches_gradient() {
        let f = ScalarField::poly(
            3,
            vec![PolyTerm::new(1.5).pow(0, 2).pow(2, 1), PolyTerm::new(-0.5).sin(1)],
        );
        let p = [0.3, 1.1, -0.7];
        let df = differential(&f).eval_components(&p);
        let g = f.gradient(&p);
        for i in 0..3 {
            assert!((df[i] - g[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn bracket_of_constant_vectors_with_volume_twist() {
        // ⟦∂₀, ∂₁⟧_H = i_{∂₁} i_{∂₀} H = dx² for H = dx⁰∧dx¹∧dx²
        let m = 3;
        let h = FormField::constant(m, 3, &[1.0]);
        let e1 = SectionField::frame(m, 0);
        let e2 = SectionField::frame(m, 1);
        let b = courant_bracket(&e1, &e2, Some(&h)).eval(&[0.4, -0.2, 0.9]);
        assert_eq!(b, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        // antisymmetric in the constant-section case
        let b_rev = courant_bracket(&e2, &e1, Some(&h)).eval(&[0.4, -0.2, 0.9]);
        assert_eq!(b_rev, vec![0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn bracket_lie_derivative_term() {
        // ⟦∂₀, x⁰ dx¹⟧ = 𝓛_{∂₀}(x⁰ dx¹) = dx¹
        let m = 2;
        let e1 = SectionField::frame(m, 0);
        let e2 = SectionField::poly(
            m,
            vec![vec![], vec![], vec![], vec![PolyTerm::new(1.0).pow(0, 1)]],
        );
        let b = courant_bracket(&e1, &e2, None).eval(&[0.5, 0.8]);
        assert_eq!(b, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn bracket_contraction_of_exact_term() {
        // ⟦x¹ dx⁰, ∂₀⟧ = −i_{∂₀} d(x¹ dx⁰) = −i_{∂₀}(dx¹∧dx⁰) = dx¹
        let m = 2;
        let xi = SectionField::poly(
            m,
            vec![vec![], vec![], vec![PolyTerm::new(1.0).pow(1, 1)], vec![]],
        );
        let e = SectionField::frame(m, 0);
        let b = courant_bracket(&xi, &e, None).eval(&[0.5, 0.8]);
        assert_eq!(b, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn closed_one_forms_are_central() {
        // ⟦df, e⟧ = 0 for any section e
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 3;
        let f = ScalarField::poly(m, rand_poly_terms(&mut rng, m));
        let df = differential(&f).as_section();
        let e = rand_section(&mut rng, m);
        for _ in 0..5 {
            let p = rand_point(&mut rng, m);
            for c in courant_bracket(&df, &e, None).eval(&p) {
                assert!(c.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn axioms_hold_for_closed_twist() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = 4;
        // closed twist: d of a random polynomial two-form
        let b2 =
            FormField::poly(m, 2, (0..binomial(m, 2)).map(|_| rand_poly_terms(&mut rng, m)).collect());
        let h = exterior_derivative(&b2);
        for _ in 0..10 {
            let e1 = rand_section(&mut rng, m);
            let e2 = rand_section(&mut rng, m);
            let e3 = rand_section(&mut rng, m);
            let f = ScalarField::poly(m, rand_poly_terms(&mut rng, m));
            let p = rand_point(&mut rng, m);
            let r = axioms_residual(Some(&h), &e1, &e2, &e3, &f, &p);
            assert!(r.max() < 1e-10, "residuals {r:?}");
        }
    }

    #[test]
    fn non_closed_twist_breaks_jacobi() {
        // H = x³ dx⁰∧dx¹∧dx², dH = −dx⁰∧dx¹∧dx²∧dx³ ≠ 0
        let m = 4;
        let mut comps = vec![Vec::new(); binomial(m, 3)];
        comps[0] = vec![PolyTerm::new(1.0).pow(3, 1)];
        let h = FormField::poly(m, 3, comps);
        let e1 = SectionField::frame(m, 0);
        let e2 = SectionField::frame(m, 1);
        let e3 = SectionField::frame(m, 3);
        let f = ScalarField::constant(m, 1.0);
        let r = axioms_residual(Some(&h), &e1, &e2, &e3, &f, &[0.3, 0.1, 0.7, 0.2]);
        assert!(r.jacobi > 1e-3, "expected jacobi violation, got {}", r.jacobi);
        // the other axioms do not involve dH
        assert!(r.leibniz < 1e-12);
        assert!(r.anchor < 1e-12);
    }

    #[test]
    fn closed_b_transform_commutes_with_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = 3;
        // closed two-form: d of a random one-form
        let theta = FormField::poly(m, 1, (0..m).map(|_| rand_poly_terms(&mut rng, m)).collect());
        let b = exterior_derivative(&theta);
        for _ in 0..5 {
            let e1 = rand_section(&mut rng, m);
            let e2 = rand_section(&mut rng, m);
            let p = rand_point(&mut rng, m);
            let lhs = courant_bracket(&b_transform(&e1, &b), &b_transform(&e2, &b), None).eval(&p);
            let rhs = b_transform(&courant_bracket(&e1, &e2, None), &b).eval(&p);
            for (l, r) in lhs.iter().zip(&rhs) {
                assert!((l - r).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn b_transform_preserves_pairing_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let m = 4;
        let b =
            FormField::poly(m, 2, (0..binomial(m, 2)).map(|_| rand_poly_terms(&mut rng, m)).collect());
        for _ in 0..5 {
            let e1 = rand_section(&mut rng, m);
            let e2 = rand_section(&mut rng, m);
            let p = rand_point(&mut rng, m);
            let lhs = pairing_value(&b_transform(&e1, &b).eval(&p), &b_transform(&e2, &b).eval(&p));
            let rhs = pairing_value(&e1.eval(&p), &e2.eval(&p));
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn splitting_curvature_of_coordinate_shear() {
        // b = x⁰ dx¹∧dx², H₀ = 0: ⟨⟦∇∂₀, ∇∂₁⟧, ∇∂₂⟩ = db(∂₀,∂₁,∂₂) = 1
        let m = 3;
        let mut comps = vec![Vec::new(); binomial(m, 2)];
        comps[2] = vec![PolyTerm::new(1.0).pow(0, 1)]; // combination (1,2)
        let b = FormField::poly(m, 2, comps);
        let x = VectorField::basis(m, 0);
        let y = VectorField::basis(m, 1);
        let z = VectorField::basis(m, 2);
        let (lhs, rhs, res) = splitting_curvature(&b, None, &x, &y, &z, &[0.3, 0.5, -0.2]);
        assert!((lhs - 1.0).abs() < 1e-13);
        assert!((rhs - 1.0).abs() < 1e-13);
        assert!(res < 1e-13);
    }

    #[test]
    fn splitting_curvature_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let m = 4;
        let b =
            FormField::poly(m, 2, (0..binomial(m, 2)).map(|_| rand_poly_terms(&mut rng, m)).collect());
        let h0 =
            FormField::poly(m, 3, (0..binomial(m, 3)).map(|_| rand_poly_terms(&mut rng, m)).collect());
        for _ in 0..5 {
            let x = VectorField::poly(m, (0..m).map(|_| rand_poly_terms(&mut rng, m)).collect());
            let y = VectorField::poly(m, (0..m).map(|_| rand_poly_terms(&mut rng, m)).collect());
            let z = VectorField::poly(m, (0..m).map(|_| rand_poly_terms(&mut rng, m)).collect());
            let p = rand_point(&mut rng, m);
            let (_, _, res) = splitting_curvature(&b, Some(&h0), &x, &y, &z, &p);
            assert!(res < 1e-10, "curvature residual {res}");
        }
    }

    #[test]
    fn two_form_operator_convention() {
        // ω = dx⁰∧dx¹ acts as ∂₀ ↦ dx¹, ∂₁ ↦ −dx⁰
        let mat = two_form_operator(2, &[1.0]);
        assert_eq!(mat[(1, 0)], 1.0);
        assert_eq!(mat[(0, 1)], -1.0);
        assert_eq!(operator_to_two_form(&mat), vec![1.0]);
    }
}
