//! Forward-mode automatic differentiation over chart coordinates.
//!
//! Every geometric object in this crate is ultimately a smooth map
//! ℝᵐ → ℝⁿ evaluated in dual-number arithmetic. `Dual<T>` carries a value
//! together with one directional derivative; nesting (`Dual<Dual<f64>>`, …)
//! yields second and higher derivatives exactly, with no finite differencing
//! anywhere.
//!
//! Maps are stored as `Arc<dyn ChartMap>`, a trait object exposing evaluation
//! at a fixed ladder of scalar types `f64, D1, D2, D3`. Derived operators
//! (exterior derivative, Courant brackets, Lie derivatives) spend one ladder
//! rung per differentiation: an operator evaluated at depth k queries its
//! operand at depth k+1. The ladder is deep enough for every residual in this
//! crate (a twice-derived field evaluated with one further derivative);
//! exceeding it panics loudly rather than silently aliasing seed channels.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value plus one directional derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    /// value
    pub a: T,
    /// derivative along the seeded direction
    pub b: T,
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;
pub type D4 = Dual<D3>;

/// Arithmetic required of scalars that flow through smooth maps.
///
/// `value` strips every derivative channel, which is what rank decisions and
/// pivot selection must use: branching on derivative payloads would make a
/// map non-smooth.
pub trait DiffScalar:
    Copy
    + Send
    + Sync
    + std::fmt::Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn recip(self) -> Self {
        Self::one() / self
    }
    fn powi(self, n: i32) -> Self {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut acc = Self::one();
        let mut base = self;
        let mut k = n as u32;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }
}

impl DiffScalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

impl<T: DiffScalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual { a: self.a + rhs.a, b: self.b + rhs.b }
    }
}

impl<T: DiffScalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual { a: self.a - rhs.a, b: self.b - rhs.b }
    }
}

impl<T: DiffScalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Dual { a: self.a * rhs.a, b: self.a * rhs.b + self.b * rhs.a }
    }
}

impl<T: DiffScalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        Dual {
            a: self.a / rhs.a,
            b: (self.b * rhs.a - self.a * rhs.b) / (rhs.a * rhs.a),
        }
    }
}

impl<T: DiffScalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { a: -self.a, b: -self.b }
    }
}

impl<T: DiffScalar> DiffScalar for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Dual { a: T::from_f64(v), b: T::zero() }
    }
    fn value(self) -> f64 {
        self.a.value()
    }
    fn sin(self) -> Self {
        Dual { a: self.a.sin(), b: self.b * self.a.cos() }
    }
    fn cos(self) -> Self {
        Dual { a: self.a.cos(), b: -(self.b * self.a.sin()) }
    }
    fn sqrt(self) -> Self {
        let r = self.a.sqrt();
        Dual { a: r, b: self.b / (r + r) }
    }
}

/// A smooth map evaluated at a fixed ladder of dual-number depths.
///
/// Object-safe so fields can hold `Arc<dyn ChartMap>`; implement [`SmoothFn`]
/// instead and the blanket impl provides every rung.
pub trait ChartMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval_d0(&self, x: &[f64], out: &mut [f64]);
    fn eval_d1(&self, x: &[D1], out: &mut [D1]);
    fn eval_d2(&self, x: &[D2], out: &mut [D2]);
    fn eval_d3(&self, x: &[D3], out: &mut [D3]);
}

/// Dispatch from a generic scalar to the matching [`ChartMap`] rung, plus the
/// lift/unlift plumbing derived operators use to spend one derivative.
pub trait JetScalar: DiffScalar {
    type Lift: JetScalar;
    fn lift_with(self, d: Self) -> Self::Lift;
    fn unlift(l: Self::Lift) -> (Self, Self);
    fn eval_map(map: &dyn ChartMap, x: &[Self], out: &mut [Self]);
}

macro_rules! jet_rung {
    ($ty:ty, $lift:ty, $eval:ident) => {
        impl JetScalar for $ty {
            type Lift = $lift;
            fn lift_with(self, d: Self) -> Self::Lift {
                Dual { a: self, b: d }
            }
            fn unlift(l: Self::Lift) -> (Self, Self) {
                (l.a, l.b)
            }
            fn eval_map(map: &dyn ChartMap, x: &[Self], out: &mut [Self]) {
                map.$eval(x, out)
            }
        }
    };
}

jet_rung!(f64, D1, eval_d0);
jet_rung!(D1, D2, eval_d1);
jet_rung!(D2, D3, eval_d2);
jet_rung!(D3, D4, eval_d3);

impl JetScalar for D4 {
    type Lift = D4;
    fn lift_with(self, _d: Self) -> Self::Lift {
        panic!("differentiation depth exceeded: no rung above D4")
    }
    fn unlift(_l: Self::Lift) -> (Self, Self) {
        panic!("differentiation depth exceeded: no rung above D4")
    }
    fn eval_map(_map: &dyn ChartMap, _x: &[Self], _out: &mut [Self]) {
        panic!("differentiation depth exceeded: map evaluated at depth 4")
    }
}

/// Maps written once, generically over the scalar; the blanket impl turns any
/// of these into a [`ChartMap`] covering the whole ladder.
pub trait SmoothFn: Send + Sync + 'static {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval<T: JetScalar>(&self, x: &[T], out: &mut [T]);
}

impl<F: SmoothFn> ChartMap for F {
    fn dim_in(&self) -> usize {
        SmoothFn::dim_in(self)
    }
    fn dim_out(&self) -> usize {
        SmoothFn::dim_out(self)
    }
    fn eval_d0(&self, x: &[f64], out: &mut [f64]) {
        self.eval::<f64>(x, out)
    }
    fn eval_d1(&self, x: &[D1], out: &mut [D1]) {
        self.eval::<D1>(x, out)
    }
    fn eval_d2(&self, x: &[D2], out: &mut [D2]) {
        self.eval::<D2>(x, out)
    }
    fn eval_d3(&self, x: &[D3], out: &mut [D3]) {
        self.eval::<D3>(x, out)
    }
}

/// Plain evaluation at a chart point.
pub fn eval_at(map: &dyn ChartMap, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; map.dim_out()];
    map.eval_d0(x, &mut out);
    out
}

/// Evaluate at the given depth, seeding nothing.
pub fn eval_jet<T: JetScalar>(map: &dyn ChartMap, x: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); map.dim_out()];
    T::eval_map(map, x, &mut out);
    out
}

/// Values and all first partials of a map at jet-typed coordinates.
///
/// Returns `(values, partials)` with `partials[dir][comp]` = ∂_dir comp.
/// Spends one ladder rung: the map is queried at `T::Lift`.
pub fn jet1<T: JetScalar>(map: &dyn ChartMap, x: &[T]) -> (Vec<T>, Vec<Vec<T>>) {
    let n = map.dim_in();
    let k = map.dim_out();
    assert_eq!(x.len(), n, "jet1: coordinate count {} != dim_in {}", x.len(), n);
    let mut vals = vec![T::zero(); k];
    let mut parts = vec![vec![T::zero(); k]; n];
    if n == 0 {
        T::eval_map(map, x, &mut vals);
        return (vals, parts);
    }
    let mut buf = vec![<T::Lift as DiffScalar>::zero(); k];
    let mut xs: Vec<T::Lift> = x.iter().map(|&v| v.lift_with(T::zero())).collect();
    for dir in 0..n {
        for (j, xj) in x.iter().enumerate() {
            xs[j] = xj.lift_with(if j == dir { T::one() } else { T::zero() });
        }
        <T::Lift as JetScalar>::eval_map(map, &xs, &mut buf);
        for i in 0..k {
            let (a, b) = T::unlift(buf[i]);
            if dir == 0 {
                vals[i] = a;
            }
            parts[dir][i] = b;
        }
    }
    (vals, parts)
}

/// Jacobian at an f64 point, rows = components, cols = directions.
pub fn jacobian(map: &dyn ChartMap, x: &[f64]) -> nalgebra::DMatrix<f64> {
    let (_, parts) = jet1::<f64>(map, x);
    let n = map.dim_in();
    let k = map.dim_out();
    nalgebra::DMatrix::from_fn(k, n, |i, j| parts[j][i])
}

/// Dense matrix in jet arithmetic, row-major. Just enough linear algebra for
/// derived fields: products, inverses and determinants must happen *inside*
/// the dual-number tower so their derivatives come out of the same evaluation.
#[derive(Clone, Debug)]
pub struct GMat<T> {
    pub r: usize,
    pub c: usize,
    pub a: Vec<T>,
}

impl<T: DiffScalar> GMat<T> {
    pub fn zeros(r: usize, c: usize) -> Self {
        GMat { r, c, a: vec![T::zero(); r * c] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.a[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(r: usize, c: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut a = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                a.push(f(i, j));
            }
        }
        GMat { r, c, a }
    }

    pub fn from_slice(r: usize, c: usize, a: &[T]) -> Self {
        assert_eq!(a.len(), r * c);
        GMat { r, c, a: a.to_vec() }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.a[i * self.c + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.a[i * self.c + j] = v;
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.c, rhs.r, "GMat::mul: inner dims");
        let mut out = Self::zeros(self.r, rhs.c);
        for i in 0..self.r {
            for k in 0..self.c {
                let s = self.at(i, k);
                if s == T::zero() {
                    continue;
                }
                for j in 0..rhs.c {
                    let v = out.at(i, j) + s * rhs.at(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.r, self.c), (rhs.r, rhs.c));
        GMat {
            r: self.r,
            c: self.c,
            a: self.a.iter().zip(&rhs.a).map(|(&x, &y)| x + y).collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.r, self.c), (rhs.r, rhs.c));
        GMat {
            r: self.r,
            c: self.c,
            a: self.a.iter().zip(&rhs.a).map(|(&x, &y)| x - y).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        GMat { r: self.r, c: self.c, a: self.a.iter().map(|&x| x * s).collect() }
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.c, self.r, |i, j| self.at(j, i))
    }

    pub fn mat_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.c);
        (0..self.r)
            .map(|i| {
                let mut s = T::zero();
                for j in 0..self.c {
                    s = s + self.at(i, j) * v[j];
                }
                s
            })
            .collect()
    }

    /// Gauss–Jordan inverse with partial pivoting on `value()` magnitude.
    /// Returns `(inverse, det)`; `None` if a pivot collapses (determinant is
    /// still returned so callers can report how degenerate the input was).
    pub fn lu_inverse(&self) -> (Option<Self>, T) {
        assert_eq!(self.r, self.c, "GMat::lu_inverse: square required");
        let n = self.r;
        let mut m = self.clone();
        let mut inv = Self::identity(n);
        let mut det = T::one();
        for col in 0..n {
            let mut piv = col;
            let mut best = m.at(col, col).value().abs();
            for row in (col + 1)..n {
                let mag = m.at(row, col).value().abs();
                if mag > best {
                    best = mag;
                    piv = row;
                }
            }
            if !(best > 1e-306) {
                return (None, T::zero());
            }
            if piv != col {
                for j in 0..n {
                    let tmp = m.at(col, j);
                    m.set(col, j, m.at(piv, j));
                    m.set(piv, j, tmp);
                    let tmp = inv.at(col, j);
                    inv.set(col, j, inv.at(piv, j));
                    inv.set(piv, j, tmp);
                }
                det = -det;
            }
            let p = m.at(col, col);
            det = det * p;
            let pinv = p.recip();
            for j in 0..n {
                m.set(col, j, m.at(col, j) * pinv);
                inv.set(col, j, inv.at(col, j) * pinv);
            }
            for row in 0..n {
                if row == col {
                    continue;
                }
                let f = m.at(row, col);
                if f == T::zero() {
                    continue;
                }
                for j in 0..n {
                    let v = m.at(row, j) - f * m.at(col, j);
                    m.set(row, j, v);
                    let v = inv.at(row, j) - f * inv.at(col, j);
                    inv.set(row, j, v);
                }
            }
        }
        (Some(inv), det)
    }

    pub fn det(&self) -> T {
        self.lu_inverse().1
    }
}
