//! Fields on a coordinate chart ℝᵐ.
//!
//! A field is a smooth map from chart coordinates to a fixed-size value:
//! scalars, tangent vectors (m components), differential k-forms (components
//! over increasing index combinations), generalized sections of TM ⊕ T*M
//! (2m components, vector part first), and matrix fields (row-major).
//!
//! Primitive fields come from a small expression vocabulary — polynomial,
//! trigonometric and rational terms — so they can be evaluated at any dual
//! depth. Derived fields (products, slices, linear combinations, and the
//! operators in [`crate::calculus`]) wrap their operands and evaluate them in
//! the same jet arithmetic.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::ad::{eval_at, ChartMap, JetScalar, SmoothFn};

/// Increasing index combinations of length `k` out of `0..m`, in
/// lexicographic order. This fixes the component ordering of every k-form.
pub fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k > m {
        return Vec::new();
    }
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + m - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn binomial(m: usize, k: usize) -> usize {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (m - i) / (i + 1);
    }
    acc
}

/// One monomial-style term: coeff · ∏ x_v^p · ∏ sin(x_s) · ∏ cos(x_c).
#[derive(Clone, Debug)]
pub struct PolyTerm {
    pub coeff: f64,
    pub powers: Vec<(usize, u32)>,
    pub sin_of: Vec<usize>,
    pub cos_of: Vec<usize>,
}

impl PolyTerm {
    pub fn new(coeff: f64) -> Self {
        PolyTerm { coeff, powers: Vec::new(), sin_of: Vec::new(), cos_of: Vec::new() }
    }

    pub fn pow(mut self, var: usize, k: u32) -> Self {
        self.powers.push((var, k));
        self
    }

    pub fn sin(mut self, var: usize) -> Self {
        self.sin_of.push(var);
        self
    }

    pub fn cos(mut self, var: usize) -> Self {
        self.cos_of.push(var);
        self
    }

    pub fn eval<T: JetScalar>(&self, x: &[T]) -> T {
        let mut acc = T::from_f64(self.coeff);
        for &(v, k) in &self.powers {
            acc = acc * x[v].powi(k as i32);
        }
        for &v in &self.sin_of {
            acc = acc * x[v].sin();
        }
        for &v in &self.cos_of {
            acc = acc * x[v].cos();
        }
        acc
    }
}

struct PolyMap {
    m: usize,
    comps: Vec<Vec<PolyTerm>>,
}

impl SmoothFn for PolyMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        self.comps.len()
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        for (i, terms) in self.comps.iter().enumerate() {
            let mut acc = T::zero();
            for t in terms {
                acc = acc + t.eval(x);
            }
            out[i] = acc;
        }
    }
}

struct ConstMap {
    m: usize,
    vals: Vec<f64>,
}

impl SmoothFn for ConstMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        self.vals.len()
    }
    fn eval<T: JetScalar>(&self, _x: &[T], out: &mut [T]) {
        for (o, &v) in out.iter_mut().zip(&self.vals) {
            *o = T::from_f64(v);
        }
    }
}

/// out = A·x for a constant matrix A (rows × m, row-major).
struct LinearMap {
    m: usize,
    rows: usize,
    a: Vec<f64>,
}

impl SmoothFn for LinearMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        self.rows
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        for i in 0..self.rows {
            let mut acc = T::zero();
            for (j, &xj) in x.iter().enumerate() {
                acc = acc + T::from_f64(self.a[i * self.m + j]) * xj;
            }
            out[i] = acc;
        }
    }
}

struct StackMap {
    m: usize,
    parts: Vec<Arc<dyn ChartMap>>,
    total: usize,
}

impl SmoothFn for StackMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        self.total
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut off = 0;
        for p in &self.parts {
            let k = p.dim_out();
            T::eval_map(p.as_ref(), x, &mut out[off..off + k]);
            off += k;
        }
    }
}

struct SliceMap {
    inner: Arc<dyn ChartMap>,
    start: usize,
    len: usize,
}

impl SmoothFn for SliceMap {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.len
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut buf = vec![T::zero(); self.inner.dim_out()];
        T::eval_map(self.inner.as_ref(), x, &mut buf);
        out.copy_from_slice(&buf[self.start..self.start + self.len]);
    }
}

struct LinCombMap {
    m: usize,
    n_out: usize,
    terms: Vec<(f64, Arc<dyn ChartMap>)>,
}

impl SmoothFn for LinCombMap {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        self.n_out
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        for o in out.iter_mut() {
            *o = T::zero();
        }
        let mut buf = vec![T::zero(); self.n_out];
        for (c, map) in &self.terms {
            T::eval_map(map.as_ref(), x, &mut buf);
            let c = T::from_f64(*c);
            for (o, &v) in out.iter_mut().zip(&buf) {
                *o = *o + c * v;
            }
        }
    }
}

/// Row-major matrix product of two matrix-valued maps.
struct MatMulMap {
    l: Arc<dyn ChartMap>,
    r: Arc<dyn ChartMap>,
    lr: usize,
    lc: usize,
    rc: usize,
}

impl SmoothFn for MatMulMap {
    fn dim_in(&self) -> usize {
        self.l.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.lr * self.rc
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut lb = vec![T::zero(); self.lr * self.lc];
        let mut rb = vec![T::zero(); self.lc * self.rc];
        T::eval_map(self.l.as_ref(), x, &mut lb);
        T::eval_map(self.r.as_ref(), x, &mut rb);
        for i in 0..self.lr {
            for j in 0..self.rc {
                let mut acc = T::zero();
                for k in 0..self.lc {
                    acc = acc + lb[i * self.lc + k] * rb[k * self.rc + j];
                }
                out[i * self.rc + j] = acc;
            }
        }
    }
}

/// Matrix-valued map applied to a vector-valued map.
struct MatVecMap {
    mat: Arc<dyn ChartMap>,
    vec: Arc<dyn ChartMap>,
    rows: usize,
    cols: usize,
}

impl SmoothFn for MatVecMap {
    fn dim_in(&self) -> usize {
        self.vec.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.rows
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut mb = vec![T::zero(); self.rows * self.cols];
        let mut vb = vec![T::zero(); self.cols];
        T::eval_map(self.mat.as_ref(), x, &mut mb);
        T::eval_map(self.vec.as_ref(), x, &mut vb);
        for i in 0..self.rows {
            let mut acc = T::zero();
            for j in 0..self.cols {
                acc = acc + mb[i * self.cols + j] * vb[j];
            }
            out[i] = acc;
        }
    }
}

struct ScaleByScalarMap {
    s: Arc<dyn ChartMap>,
    v: Arc<dyn ChartMap>,
}

impl SmoothFn for ScaleByScalarMap {
    fn dim_in(&self) -> usize {
        self.v.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.v.dim_out()
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut s = [T::zero()];
        T::eval_map(self.s.as_ref(), x, &mut s);
        T::eval_map(self.v.as_ref(), x, out);
        for o in out.iter_mut() {
            *o = *o * s[0];
        }
    }
}

/// Pointwise inverse of a square matrix field. Evaluation panics where the
/// matrix is singular; callers sample away from degenerate loci.
struct InverseMap {
    inner: Arc<dyn ChartMap>,
    n: usize,
}

impl SmoothFn for InverseMap {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.n * self.n
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut buf = vec![T::zero(); self.n * self.n];
        T::eval_map(self.inner.as_ref(), x, &mut buf);
        let g = crate::ad::GMat { r: self.n, c: self.n, a: buf };
        let (inv, _) = g.lu_inverse();
        let inv = inv.expect("matrix field is singular at evaluation point");
        out.copy_from_slice(&inv.a);
    }
}

/// [[A, B], [C, D]] of four n×n blocks, producing a 2n×2n matrix.
struct Block2Map {
    m: usize,
    n: usize,
    parts: [Arc<dyn ChartMap>; 4],
}

impl SmoothFn for Block2Map {
    fn dim_in(&self) -> usize {
        self.m
    }
    fn dim_out(&self) -> usize {
        4 * self.n * self.n
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let n = self.n;
        let mut buf = vec![T::zero(); n * n];
        for (bi, part) in self.parts.iter().enumerate() {
            T::eval_map(part.as_ref(), x, &mut buf);
            let (ro, co) = (n * (bi / 2), n * (bi % 2));
            for i in 0..n {
                for j in 0..n {
                    out[(ro + i) * 2 * n + (co + j)] = buf[i * n + j];
                }
            }
        }
    }
}

struct TransposeMap {
    inner: Arc<dyn ChartMap>,
    r: usize,
    c: usize,
}

impl SmoothFn for TransposeMap {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.r * self.c
    }
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]) {
        let mut buf = vec![T::zero(); self.r * self.c];
        T::eval_map(self.inner.as_ref(), x, &mut buf);
        for i in 0..self.r {
            for j in 0..self.c {
                out[j * self.r + i] = buf[i * self.c + j];
            }
        }
    }
}

macro_rules! field_common {
    ($ty:ident) => {
        impl $ty {
            pub fn chart_dim(&self) -> usize {
                self.m
            }
            pub fn map(&self) -> &Arc<dyn ChartMap> {
                &self.map
            }
        }
    };
}

/// Smooth function on the chart.
#[derive(Clone)]
pub struct ScalarField {
    pub(crate) map: Arc<dyn ChartMap>,
    pub(crate) m: usize,
}

field_common!(ScalarField);

impl ScalarField {
    pub fn from_map(m: usize, map: Arc<dyn ChartMap>) -> Self {
        assert_eq!(map.dim_in(), m);
        assert_eq!(map.dim_out(), 1);
        ScalarField { map, m }
    }

    pub fn constant(m: usize, v: f64) -> Self {
        Self::from_map(m, Arc::new(ConstMap { m, vals: vec![v] }))
    }

    pub fn coordinate(m: usize, i: usize) -> Self {
        assert!(i < m);
        Self::poly(m, vec![PolyTerm::new(1.0).pow(i, 1)])
    }

    pub fn poly(m: usize, terms: Vec<PolyTerm>) -> Self {
        Self::from_map(m, Arc::new(PolyMap { m, comps: vec![terms] }))
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        eval_at(self.map.as_ref(), p)[0]
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let (_, parts) = crate::ad::jet1::<f64>(self.map.as_ref(), p);
        parts.iter().map(|row| row[0]).collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_map(
            self.m,
            Arc::new(LinCombMap { m: self.m, n_out: 1, terms: vec![(c, self.map.clone())] }),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_map(
            self.m,
            Arc::new(LinCombMap {
                m: self.m,
                n_out: 1,
                terms: vec![(1.0, self.map.clone()), (1.0, other.map.clone())],
            }),
        )
    }
}

/// Tangent vector field, m components.
#[derive(Clone)]
pub struct VectorField {
    pub(crate) map: Arc<dyn ChartMap>,
    pub(crate) m: usize,
}

field_common!(VectorField);

impl VectorField {
    pub fn from_map(m: usize, map: Arc<dyn ChartMap>) -> Self {
        assert_eq!(map.dim_in(), m);
        assert_eq!(map.dim_out(), m);
        VectorField { map, m }
    }

    pub fn constant(m: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), m);
        Self::from_map(m, Arc::new(ConstMap { m, vals: v.to_vec() }))
    }

    pub fn basis(m: usize, i: usize) -> Self {
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        Self::constant(m, &v)
    }

    /// x ↦ A·x.
    pub fn linear(m: usize, a: &DMatrix<f64>) -> Self {
        assert_eq!((a.nrows(), a.ncols()), (m, m));
        let rows: Vec<f64> = (0..m).flat_map(|i| (0..m).map(move |j| a[(i, j)])).collect();
        Self::from_map(m, Arc::new(LinearMap { m, rows: m, a: rows }))
    }

    pub fn poly(m: usize, comps: Vec<Vec<PolyTerm>>) -> Self {
        assert_eq!(comps.len(), m);
        Self::from_map(m, Arc::new(PolyMap { m, comps }))
    }

    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        eval_at(self.map.as_ref(), p)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_map(
            self.m,
            Arc::new(LinCombMap { m: self.m, n_out: self.m, terms: vec![(c, self.map.clone())] }),
        )
    }

    /// Embed as a generalized section with zero covector part.
    pub fn as_section(&self) -> SectionField {
        SectionField::from_parts(self, &FormField::zero(self.m, 1))
    }
}

/// Differential k-form field; components over increasing index combinations
/// in the order produced by [`combinations`]. Degree 0 is a scalar in form
/// clothing (one component), degrees up to 4 are supported.
#[derive(Clone)]
pub struct FormField {
    pub(crate) map: Arc<dyn ChartMap>,
    pub(crate) m: usize,
    pub(crate) degree: usize,
}

impl FormField {
    pub fn from_map(m: usize, degree: usize, map: Arc<dyn ChartMap>) -> Self {
        assert!(degree <= 4, "forms of degree ≤ 4 only");
        assert_eq!(map.dim_in(), m);
        assert_eq!(map.dim_out(), binomial(m, degree));
        FormField { map, m, degree }
    }

    pub fn chart_dim(&self) -> usize {
        self.m
    }

    pub fn map(&self) -> &Arc<dyn ChartMap> {
        &self.map
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_components(&self) -> usize {
        binomial(self.m, self.degree)
    }

    pub fn zero(m: usize, degree: usize) -> Self {
        Self::constant(m, degree, &vec![0.0; binomial(m, degree)])
    }

    pub fn constant(m: usize, degree: usize, comps: &[f64]) -> Self {
        assert_eq!(comps.len(), binomial(m, degree));
        Self::from_map(m, degree, Arc::new(ConstMap { m, vals: comps.to_vec() }))
    }

    pub fn poly(m: usize, degree: usize, comps: Vec<Vec<PolyTerm>>) -> Self {
        assert_eq!(comps.len(), binomial(m, degree));
        Self::from_map(m, degree, Arc::new(PolyMap { m, comps }))
    }

    pub fn from_scalar(s: &ScalarField) -> Self {
        FormField { map: s.map.clone(), m: s.m, degree: 0 }
    }

    pub fn eval_components(&self, p: &[f64]) -> Vec<f64> {
        eval_at(self.map.as_ref(), p)
    }

    /// α(v₁, …, v_k) at p.
    pub fn apply_at(&self, p: &[f64], args: &[&[f64]]) -> f64 {
        assert_eq!(args.len(), self.degree);
        let comps = self.eval_components(p);
        let combs = combinations(self.m, self.degree);
        alt_apply(&comps, &combs, args)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_map(
            self.m,
            self.degree,
            Arc::new(LinCombMap {
                m: self.m,
                n_out: self.n_components(),
                terms: vec![(c, self.map.clone())],
            }),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.degree, other.degree);
        Self::from_map(
            self.m,
            self.degree,
            Arc::new(LinCombMap {
                m: self.m,
                n_out: self.n_components(),
                terms: vec![(1.0, self.map.clone()), (1.0, other.map.clone())],
            }),
        )
    }

    /// One-form as a generalized section with zero vector part.
    pub fn as_section(&self) -> SectionField {
        assert_eq!(self.degree, 1, "only one-forms embed as sections");
        SectionField::from_parts(&VectorField::constant(self.m, &vec![0.0; self.m]), self)
    }
}

/// Σ over increasing combinations of comp · det(minor of the argument list).
/// Evaluates a k-form on k argument vectors in any jet arithmetic.
pub fn alt_apply<T: JetScalar>(comps: &[T], combs: &[Vec<usize>], args: &[&[T]]) -> T {
    let k = args.len();
    let mut acc = T::zero();
    for (ci, combo) in combs.iter().enumerate() {
        debug_assert_eq!(combo.len(), k);
        acc = acc + comps[ci] * minor_det(combo, args);
    }
    acc
}

/// det of the k×k matrix M[r][c] = args[c][combo[r]], k ≤ 4.
fn minor_det<T: JetScalar>(combo: &[usize], args: &[&[T]]) -> T {
    match combo.len() {
        0 => T::one(),
        1 => args[0][combo[0]],
        2 => {
            let (a, b) = (combo[0], combo[1]);
            args[0][a] * args[1][b] - args[0][b] * args[1][a]
        }
        3 => {
            let (a, b, c) = (combo[0], combo[1], combo[2]);
            let m = |r: usize, cc: usize| args[cc][r];
            m(a, 0) * (m(b, 1) * m(c, 2) - m(c, 1) * m(b, 2))
                - m(b, 0) * (m(a, 1) * m(c, 2) - m(c, 1) * m(a, 2))
                + m(c, 0) * (m(a, 1) * m(b, 2) - m(b, 1) * m(a, 2))
        }
        4 => {
            // Laplace expansion along the first column.
            let mut acc = T::zero();
            let mut sign = 1.0;
            for drop in 0..4 {
                let sub: Vec<usize> =
                    combo.iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, &v)| v).collect();
                let sub_args = &args[1..];
                acc = acc + T::from_f64(sign) * args[0][combo[drop]] * minor_det(&sub, sub_args);
                sign = -sign;
            }
            acc
        }
        _ => panic!("forms of degree ≤ 4 only"),
    }
}

/// Generalized section of TM ⊕ T*M: 2m components, vector part first.
#[derive(Clone)]
pub struct SectionField {
    pub(crate) map: Arc<dyn ChartMap>,
    pub(crate) m: usize,
}

field_common!(SectionField);

impl SectionField {
    pub fn from_map(m: usize, map: Arc<dyn ChartMap>) -> Self {
        assert_eq!(map.dim_in(), m);
        assert_eq!(map.dim_out(), 2 * m);
        SectionField { map, m }
    }

    pub fn from_parts(v: &VectorField, xi: &FormField) -> Self {
        assert_eq!(v.m, xi.m);
        assert_eq!(xi.degree, 1);
        Self::from_map(
            v.m,
            Arc::new(StackMap {
                m: v.m,
                parts: vec![v.map.clone(), xi.map.clone()],
                total: 2 * v.m,
            }),
        )
    }

    pub fn constant(m: usize, fiber: &[f64]) -> Self {
        assert_eq!(fiber.len(), 2 * m);
        Self::from_map(m, Arc::new(ConstMap { m, vals: fiber.to_vec() }))
    }

    /// Constant frame section e_i (0 ≤ i < 2m).
    pub fn frame(m: usize, i: usize) -> Self {
        let mut v = vec![0.0; 2 * m];
        v[i] = 1.0;
        Self::constant(m, &v)
    }

    pub fn poly(m: usize, comps: Vec<Vec<PolyTerm>>) -> Self {
        assert_eq!(comps.len(), 2 * m);
        Self::from_map(m, Arc::new(PolyMap { m, comps }))
    }

    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        eval_at(self.map.as_ref(), p)
    }

    pub fn vector_part(&self) -> VectorField {
        VectorField::from_map(
            self.m,
            Arc::new(SliceMap { inner: self.map.clone(), start: 0, len: self.m }),
        )
    }

    pub fn form_part(&self) -> FormField {
        FormField::from_map(
            self.m,
            1,
            Arc::new(SliceMap { inner: self.map.clone(), start: self.m, len: self.m }),
        )
    }

    pub fn scale_by(&self, f: &ScalarField) -> Self {
        Self::from_map(
            self.m,
            Arc::new(ScaleByScalarMap { s: f.map.clone(), v: self.map.clone() }),
        )
    }

    pub fn lin_comb(terms: &[(f64, &SectionField)]) -> Self {
        let m = terms[0].1.m;
        Self::from_map(
            m,
            Arc::new(LinCombMap {
                m,
                n_out: 2 * m,
                terms: terms.iter().map(|(c, s)| (*c, s.map.clone())).collect(),
            }),
        )
    }
}

/// Matrix-valued field, row-major.
#[derive(Clone)]
pub struct MatrixField {
    pub(crate) map: Arc<dyn ChartMap>,
    pub(crate) m: usize,
    pub(crate) rows: usize,
    pub(crate) cols: usize,
}

impl MatrixField {
    pub fn from_map(m: usize, rows: usize, cols: usize, map: Arc<dyn ChartMap>) -> Self {
        assert_eq!(map.dim_in(), m);
        assert_eq!(map.dim_out(), rows * cols);
        MatrixField { map, m, rows, cols }
    }

    pub fn chart_dim(&self) -> usize {
        self.m
    }

    pub fn map(&self) -> &Arc<dyn ChartMap> {
        &self.map
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn constant(m: usize, a: &DMatrix<f64>) -> Self {
        let vals: Vec<f64> =
            (0..a.nrows()).flat_map(|i| (0..a.ncols()).map(move |j| a[(i, j)])).collect();
        Self::from_map(m, a.nrows(), a.ncols(), Arc::new(ConstMap { m, vals }))
    }

    pub fn identity(m: usize, n: usize) -> Self {
        Self::constant(m, &DMatrix::identity(n, n))
    }

    /// Entries as polynomial terms, row-major.
    pub fn poly(m: usize, rows: usize, cols: usize, comps: Vec<Vec<PolyTerm>>) -> Self {
        assert_eq!(comps.len(), rows * cols);
        Self::from_map(m, rows, cols, Arc::new(PolyMap { m, comps }))
    }

    pub fn eval(&self, p: &[f64]) -> DMatrix<f64> {
        let vals = eval_at(self.map.as_ref(), p);
        DMatrix::from_row_slice(self.rows, self.cols, &vals)
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows);
        Self::from_map(
            self.m,
            self.rows,
            rhs.cols,
            Arc::new(MatMulMap {
                l: self.map.clone(),
                r: rhs.map.clone(),
                lr: self.rows,
                lc: self.cols,
                rc: rhs.cols,
            }),
        )
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self::from_map(
            self.m,
            self.rows,
            self.cols,
            Arc::new(LinCombMap {
                m: self.m,
                n_out: self.rows * self.cols,
                terms: vec![(1.0, self.map.clone()), (1.0, rhs.map.clone())],
            }),
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_map(
            self.m,
            self.rows,
            self.cols,
            Arc::new(LinCombMap {
                m: self.m,
                n_out: self.rows * self.cols,
                terms: vec![(c, self.map.clone())],
            }),
        )
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.scale(-1.0))
    }

    pub fn transpose(&self) -> Self {
        Self::from_map(
            self.m,
            self.cols,
            self.rows,
            Arc::new(TransposeMap { inner: self.map.clone(), r: self.rows, c: self.cols }),
        )
    }

    /// Pointwise inverse; evaluation panics where the matrix is singular.
    pub fn inverse(&self) -> Self {
        assert_eq!(self.rows, self.cols);
        Self::from_map(
            self.m,
            self.rows,
            self.cols,
            Arc::new(InverseMap { inner: self.map.clone(), n: self.rows }),
        )
    }

    /// Assemble [[a, b], [c, d]] from equal square blocks.
    pub fn block2x2(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        let n = a.rows;
        let m = a.m;
        for part in [a, b, c, d] {
            assert_eq!((part.rows, part.cols, part.m), (n, n, m));
        }
        Self::from_map(
            m,
            2 * n,
            2 * n,
            Arc::new(Block2Map {
                m,
                n,
                parts: [a.map.clone(), b.map.clone(), c.map.clone(), d.map.clone()],
            }),
        )
    }

    /// Apply to a generalized section (cols must be 2m).
    pub fn apply_section(&self, e: &SectionField) -> SectionField {
        assert_eq!(self.cols, 2 * self.m);
        assert_eq!(self.rows, 2 * self.m);
        SectionField::from_map(
            self.m,
            Arc::new(MatVecMap {
                mat: self.map.clone(),
                vec: e.map.clone(),
                rows: self.rows,
                cols: self.cols,
            }),
        )
    }

    /// Apply to a tangent vector field (cols must be m).
    pub fn apply_vector(&self, v: &VectorField) -> VectorField {
        assert_eq!(self.cols, self.m);
        assert_eq!(self.rows, self.m);
        VectorField::from_map(
            self.m,
            Arc::new(MatVecMap {
                mat: self.map.clone(),
                vec: v.map.clone(),
                rows: self.rows,
                cols: self.cols,
            }),
        )
    }
}

/// Bivector field; components over increasing index pairs in the same order
/// a two-form uses, but contracting covectors instead of vectors.
#[derive(Clone)]
pub struct BivectorField {
    pub(crate) map: Arc<dyn ChartMap>,
    pub(crate) m: usize,
}

field_common!(BivectorField);

impl BivectorField {
    pub fn from_map(m: usize, map: Arc<dyn ChartMap>) -> Self {
        assert_eq!(map.dim_in(), m);
        assert_eq!(map.dim_out(), binomial(m, 2));
        BivectorField { map, m }
    }

    pub fn constant(m: usize, comps: &[f64]) -> Self {
        assert_eq!(comps.len(), binomial(m, 2));
        Self::from_map(m, Arc::new(ConstMap { m, vals: comps.to_vec() }))
    }

    pub fn poly(m: usize, comps: Vec<Vec<PolyTerm>>) -> Self {
        assert_eq!(comps.len(), binomial(m, 2));
        Self::from_map(m, Arc::new(PolyMap { m, comps }))
    }

    pub fn eval_components(&self, p: &[f64]) -> Vec<f64> {
        eval_at(self.map.as_ref(), p)
    }
}
