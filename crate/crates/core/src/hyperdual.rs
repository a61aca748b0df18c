//! Truncated second-order Taylor (hyper-dual) arithmetic.
//!
//! A hyper-dual value carries four channels `(re, e1, e2, e12)` representing
//! the coefficients of `1, ε1, ε2, ε1ε2` in a Taylor expansion truncated by
//! the rule `ε1² = ε2² = (ε1ε2)² = 0`. Pushing a seeded input through a
//! composition of the supported primitives yields, in one pass, the value,
//! two directional first derivatives and the mixed second derivative
//! `v1ᵀ H v2` of every output.
//!
//! The supported primitive set is exactly what the basis networks need:
//! add, sub, mul, scalar scale, affine maps, `tanh`, and `square`. Batches
//! are stored as four parallel real matrices so that the affine rule is four
//! plain matrix products.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// One hyper-dual number: value, two tangent coefficients and the mixed
/// second-derivative coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperDual {
    pub re: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
}

impl HyperDual {
    pub fn new(re: f64, e1: f64, e2: f64, e12: f64) -> Self {
        Self { re, e1, e2, e12 }
    }

    /// Lift a constant: all derivative channels are zero.
    pub fn lift(c: f64) -> Self {
        Self::new(c, 0.0, 0.0, 0.0)
    }

    pub fn add(self, rhs: Self) -> Self {
        Self::new(
            self.re + rhs.re,
            self.e1 + rhs.e1,
            self.e2 + rhs.e2,
            self.e12 + rhs.e12,
        )
    }

    pub fn sub(self, rhs: Self) -> Self {
        Self::new(
            self.re - rhs.re,
            self.e1 - rhs.e1,
            self.e2 - rhs.e2,
            self.e12 - rhs.e12,
        )
    }

    /// Product under the truncation rule:
    /// `(a·b).e12 = a.re·b.e12 + a.e1·b.e2 + a.e2·b.e1 + a.e12·b.re`.
    pub fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.re * rhs.re,
            self.re * rhs.e1 + self.e1 * rhs.re,
            self.re * rhs.e2 + self.e2 * rhs.re,
            self.re * rhs.e12 + self.e1 * rhs.e2 + self.e2 * rhs.e1 + self.e12 * rhs.re,
        )
    }

    /// Multiply all four channels by a real scalar.
    pub fn scale(self, c: f64) -> Self {
        Self::new(self.re * c, self.e1 * c, self.e2 * c, self.e12 * c)
    }

    pub fn square(self) -> Self {
        self.mul(self)
    }

    /// Apply `tanh` through the Taylor channels using
    /// `f' = 1 − tanh²` and `f'' = −2·tanh·(1 − tanh²)`.
    pub fn tanh(self) -> Self {
        let t = self.re.tanh();
        let f1 = 1.0 - t * t;
        let f2 = -2.0 * t * f1;
        Self::new(
            t,
            f1 * self.e1,
            f1 * self.e2,
            f1 * self.e12 + f2 * self.e1 * self.e2,
        )
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.e1.is_finite() && self.e2.is_finite() && self.e12.is_finite()
    }
}

/// Seed an input point for differentiation along coordinates `i` and `j`:
/// component `k` gets `e1 = [k == i]`, `e2 = [k == j]`, `e12 = 0`.
pub fn seed_point(x: ArrayView1<f64>, i: usize, j: usize) -> Result<Vec<HyperDual>> {
    let dim = x.len();
    for (name, idx) in [("i", i), ("j", j)] {
        if idx >= dim {
            let _ = name;
            return Err(Error::IndexOutOfRange { index: idx, dim });
        }
    }
    Ok(x.iter()
        .enumerate()
        .map(|(k, &v)| {
            HyperDual::new(v, (k == i) as u8 as f64, (k == j) as u8 as f64, 0.0)
        })
        .collect())
}

/// A batch of hyper-dual values over `n_points × n_outputs`, stored as four
/// parallel channel matrices of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperDualBatch {
    pub re: Array2<f64>,
    pub e1: Array2<f64>,
    pub e2: Array2<f64>,
    pub e12: Array2<f64>,
}

impl HyperDualBatch {
    pub fn new(re: Array2<f64>, e1: Array2<f64>, e2: Array2<f64>, e12: Array2<f64>) -> Result<Self> {
        let shape = re.dim();
        if e1.dim() != shape || e2.dim() != shape || e12.dim() != shape {
            return Err(Error::shape(format!(
                "hyper-dual channel shapes differ: re {:?}, e1 {:?}, e2 {:?}, e12 {:?}",
                re.dim(),
                e1.dim(),
                e2.dim(),
                e12.dim()
            )));
        }
        Ok(Self { re, e1, e2, e12 })
    }

    pub fn zeros(n_points: usize, n_outputs: usize) -> Self {
        Self {
            re: Array2::zeros((n_points, n_outputs)),
            e1: Array2::zeros((n_points, n_outputs)),
            e2: Array2::zeros((n_points, n_outputs)),
            e12: Array2::zeros((n_points, n_outputs)),
        }
    }

    /// Seed a batch of input points (`x` is `[n_points × dim]`) along
    /// coordinates `i` and `j`.
    pub fn seed(x: &Array2<f64>, i: usize, j: usize) -> Result<Self> {
        let (n, dim) = x.dim();
        for idx in [i, j] {
            if idx >= dim {
                return Err(Error::IndexOutOfRange { index: idx, dim });
            }
        }
        let mut e1 = Array2::zeros((n, dim));
        let mut e2 = Array2::zeros((n, dim));
        e1.column_mut(i).fill(1.0);
        e2.column_mut(j).fill(1.0);
        Ok(Self {
            re: x.clone(),
            e1,
            e2,
            e12: Array2::zeros((n, dim)),
        })
    }

    pub fn n_points(&self) -> usize {
        self.re.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.re.ncols()
    }

    pub fn get(&self, point: usize, output: usize) -> HyperDual {
        HyperDual::new(
            self.re[[point, output]],
            self.e1[[point, output]],
            self.e2[[point, output]],
            self.e12[[point, output]],
        )
    }

    /// Unpack into `(values, d_i, d_j, d_ij)` arrays.
    pub fn extract(self) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        (self.re, self.e1, self.e2, self.e12)
    }

    /// Elementwise `tanh` across all channels.
    pub fn tanh(&self) -> Self {
        let t = self.re.mapv(f64::tanh);
        let f1 = t.mapv(|v| 1.0 - v * v);
        let f2 = -2.0 * &t * &f1;
        Self {
            e1: &f1 * &self.e1,
            e2: &f1 * &self.e2,
            e12: &f1 * &self.e12 + &f2 * &self.e1 * &self.e2,
            re: t,
        }
    }

    /// Affine map `y = x·Wᵀ + b` applied channelwise; the bias joins the
    /// value channel only (it vanishes under differentiation).
    pub fn affine(&self, weight: &Array2<f64>, bias: &Array1<f64>) -> Result<Self> {
        if weight.ncols() != self.n_outputs() {
            return Err(Error::shape(format!(
                "affine expects {} inputs, batch has {}",
                weight.ncols(),
                self.n_outputs()
            )));
        }
        if bias.len() != weight.nrows() {
            return Err(Error::shape(format!(
                "bias length {} does not match {} rows",
                bias.len(),
                weight.nrows()
            )));
        }
        let wt = weight.t();
        Ok(Self {
            re: self.re.dot(&wt) + bias,
            e1: self.e1.dot(&wt),
            e2: self.e2.dot(&wt),
            e12: self.e12.dot(&wt),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.re.iter().all(|v| v.is_finite())
            && self.e1.iter().all(|v| v.is_finite())
            && self.e2.iter().all(|v| v.is_finite())
            && self.e12.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn lift_is_constant() {
        assert_eq!(HyperDual::lift(5.0), HyperDual::new(5.0, 0.0, 0.0, 0.0));
        assert_eq!(HyperDual::lift(0.0), HyperDual::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!(HyperDual::lift(-1.5), HyperDual::new(-1.5, 0.0, 0.0, 0.0));
    }

    #[test]
    fn seeding_places_unit_tangents() {
        let x = array![0.3, 0.7];
        let s = seed_point(x.view(), 0, 0).unwrap();
        assert_eq!(s[0], HyperDual::new(0.3, 1.0, 1.0, 0.0));
        assert_eq!(s[1], HyperDual::new(0.7, 0.0, 0.0, 0.0));

        let s = seed_point(x.view(), 0, 1).unwrap();
        assert_eq!(s[0], HyperDual::new(0.3, 1.0, 0.0, 0.0));
        assert_eq!(s[1], HyperDual::new(0.7, 0.0, 1.0, 0.0));

        let t = array![2.0];
        let s = seed_point(t.view(), 0, 0).unwrap();
        assert_eq!(s[0], HyperDual::new(2.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn seeding_rejects_out_of_range_index() {
        let x = array![1.0, 2.0];
        assert!(seed_point(x.view(), 2, 0).is_err());
        assert!(HyperDualBatch::seed(&array![[1.0, 2.0]], 0, 5).is_err());
    }

    #[test]
    fn componentwise_add_and_scale() {
        let a = HyperDual::new(1.0, 2.0, 3.0, 4.0);
        let b = HyperDual::new(5.0, 6.0, 7.0, 8.0);
        assert_eq!(a.add(b), HyperDual::new(6.0, 8.0, 10.0, 12.0));
        assert_eq!(
            HyperDual::new(1.0, 1.0, 0.0, 0.0).scale(2.0),
            HyperDual::new(2.0, 2.0, 0.0, 0.0)
        );
    }

    #[test]
    fn square_of_seeded_variable() {
        // f(x) = x² at x = 3 seeded with i = j: f = 9, f' = 6, f'' = 2.
        let x = HyperDual::new(3.0, 1.0, 1.0, 0.0);
        let y = x.square();
        assert_eq!(y, HyperDual::new(9.0, 6.0, 6.0, 2.0));

        // Cross-checked by central differences of x².
        let h = 1e-4;
        let f = |v: f64| v * v;
        let fd1 = (f(3.0 + h) - f(3.0 - h)) / (2.0 * h);
        let fd2 = (f(3.0 + h) - 2.0 * f(3.0) + f(3.0 - h)) / (h * h);
        assert!(close(y.e1, fd1, 1e-5));
        assert!(close(y.e12, fd2, 1e-4));
    }

    #[test]
    fn tanh_channel_rules() {
        let y = HyperDual::new(0.0, 1.0, 1.0, 0.0).tanh();
        assert_eq!(y, HyperDual::new(0.0, 1.0, 1.0, 0.0));

        let y = HyperDual::new(1.0, 1.0, 0.0, 0.0).tanh();
        let t = 1.0f64.tanh();
        assert_eq!(y.re, t);
        assert_eq!(y.e1, 1.0 - t * t);
        assert_eq!(y.e2, 0.0);

        // e12 picks up f''(0.5) = −2·tanh(0.5)·(1 − tanh²(0.5)).
        let y = HyperDual::new(0.5, 1.0, 1.0, 0.0).tanh();
        let t = 0.5f64.tanh();
        let expected = -2.0 * t * (1.0 - t * t);
        assert!((y.e12 - expected).abs() < 1e-15);
    }

    #[test]
    fn batch_extract_unpacks_channels() {
        let mut b = HyperDualBatch::zeros(1, 1);
        b.re[[0, 0]] = 9.0;
        b.e1[[0, 0]] = 6.0;
        b.e2[[0, 0]] = 6.0;
        b.e12[[0, 0]] = 2.0;
        let (v, d1, d2, d12) = b.extract();
        assert_eq!(v[[0, 0]], 9.0);
        assert_eq!(d1[[0, 0]], 6.0);
        assert_eq!(d2[[0, 0]], 6.0);
        assert_eq!(d12[[0, 0]], 2.0);
    }

    #[test]
    fn affine_has_zero_mixed_derivative() {
        // A linear map has zero Hessian: e12 of W·x stays zero under (0,1) seeding.
        let x = array![[0.3, 0.7], [1.0, -2.0]];
        let seeded = HyperDualBatch::seed(&x, 0, 1).unwrap();
        let w = array![[2.0, -1.0], [0.5, 3.0], [1.0, 1.0]];
        let b = array![0.1, 0.2, 0.3];
        let y = seeded.affine(&w, &b).unwrap();
        assert!(y.e12.iter().all(|&v| v == 0.0));
        // value channel carries the bias, derivative channels do not
        assert_eq!(y.re[[0, 0]], 2.0 * 0.3 - 1.0 * 0.7 + 0.1);
        assert_eq!(y.e1[[0, 0]], 2.0);
        assert_eq!(y.e2[[0, 0]], -1.0);
    }

    #[test]
    fn mismatched_channel_shapes_rejected() {
        let r = HyperDualBatch::new(
            Array2::zeros((2, 3)),
            Array2::zeros((2, 3)),
            Array2::zeros((3, 2)),
            Array2::zeros((2, 3)),
        );
        assert!(r.is_err());
    }

    /// Evaluate a small fixed composition of supported primitives:
    /// g(a, b) = tanh(a·b + 0.3·a)² − b
    fn composition(a: HyperDual, b: HyperDual) -> HyperDual {
        a.mul(b).add(a.scale(0.3)).tanh().square().sub(b)
    }

    fn composition_plain(a: f64, b: f64) -> f64 {
        let t = (a * b + 0.3 * a).tanh();
        t * t - b
    }

    #[test]
    fn composition_matches_finite_differences() {
        let h = 1e-4;
        for &(a, b) in &[(0.2, -0.4), (1.1, 0.7), (-0.9, 0.3), (0.0, 0.0), (2.0, -1.5)] {
            // seed e1 along a, e2 along b
            let ha = HyperDual::new(a, 1.0, 0.0, 0.0);
            let hb = HyperDual::new(b, 0.0, 1.0, 0.0);
            let y = composition(ha, hb);

            let f = composition_plain;
            assert!(close(y.re, f(a, b), 1e-12));
            let fd_a = (f(a + h, b) - f(a - h, b)) / (2.0 * h);
            let fd_b = (f(a, b + h) - f(a, b - h)) / (2.0 * h);
            let fd_ab = (f(a + h, b + h) - f(a + h, b - h) - f(a - h, b + h) + f(a - h, b - h))
                / (4.0 * h * h);
            assert!(close(y.e1, fd_a, 1e-5), "d/da at ({a},{b})");
            assert!(close(y.e2, fd_b, 1e-5), "d/db at ({a},{b})");
            assert!(close(y.e12, fd_ab, 1e-4), "d²/dadb at ({a},{b})");

            // pure second derivative via i == j seeding
            let ha = HyperDual::new(a, 1.0, 1.0, 0.0);
            let hb = HyperDual::lift(b);
            let y = composition(ha, hb);
            let fd_aa = (f(a + h, b) - 2.0 * f(a, b) + f(a - h, b)) / (h * h);
            assert!(close(y.e12, fd_aa, 1e-4), "d²/da² at ({a},{b})");
            // symmetric seeding makes the two first-derivative channels equal
            assert_eq!(y.e1, y.e2);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn product_rule_identity(
            a in proptest::array::uniform4(-10.0f64..10.0),
            b in proptest::array::uniform4(-10.0f64..10.0),
        ) {
            let x = HyperDual::new(a[0], a[1], a[2], a[3]);
            let y = HyperDual::new(b[0], b[1], b[2], b[3]);
            let p = x.mul(y);
            let expected = x.re * y.e12 + x.e1 * y.e2 + x.e2 * y.e1 + x.e12 * y.re;
            prop_assert!((p.e12 - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            prop_assert_eq!(p.re, x.re * y.re);
        }
    }

    proptest! {
        #[test]
        fn symmetric_seed_channels_agree(
            vals in proptest::collection::vec(-2.0f64..2.0, 2),
            idx in 0usize..2,
        ) {
            // For any composition with i == j seeds, e1 equals e2 throughout.
            let x = Array1::from_vec(vals);
            let s = seed_point(x.view(), idx, idx).unwrap();
            let y = composition(s[0], s[1]);
            prop_assert_eq!(y.e1, y.e2);
        }
    }
}
