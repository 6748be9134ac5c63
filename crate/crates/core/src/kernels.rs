//! Compactly supported radial interaction kernels `phi: [0, R] -> R` and the
//! piecewise-polynomial bases used to parameterize them.
//!
//! A basis is a clamped uniform B-spline family of degree 0..=3 on `[0, R]`
//! with the right-endpoint spline removed, so every element is supported in
//! the half-open interval `[0, R)` and (for degree >= 1) is continuous and
//! vanishes at `R`. Degree 0 gives cell indicators, degree 1 the classical
//! hat functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A piecewise-polynomial basis on `[0, support_radius]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpecWire", into = "BasisSpecWire")]
pub struct BasisSpec {
    support_radius: f64,
    num_elements: usize,
    degree: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisSpecWire {
    support_radius: f64,
    num_elements: usize,
    degree: usize,
}

impl TryFrom<BasisSpecWire> for BasisSpec {
    type Error = Error;
    fn try_from(w: BasisSpecWire) -> Result<BasisSpec> {
        BasisSpec::new(w.support_radius, w.num_elements, w.degree)
    }
}

impl From<BasisSpec> for BasisSpecWire {
    fn from(b: BasisSpec) -> BasisSpecWire {
        BasisSpecWire {
            support_radius: b.support_radius,
            num_elements: b.num_elements,
            degree: b.degree,
        }
    }
}

impl BasisSpec {
    pub fn new(support_radius: f64, num_elements: usize, degree: usize) -> Result<Self> {
        if !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(Error::InvalidBasis(format!(
                "support radius must be positive and finite, got {support_radius}"
            )));
        }
        if degree > 3 {
            return Err(Error::InvalidBasis(format!(
                "degree must be 0..=3, got {degree}"
            )));
        }
        if num_elements == 0 || (degree >= 1 && num_elements < degree) {
            return Err(Error::InvalidBasis(format!(
                "need at least max(1, degree) elements, got {num_elements} at degree {degree}"
            )));
        }
        Ok(BasisSpec {
            support_radius,
            num_elements,
            degree,
        })
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of uniform knot spans of `[0, R]`.
    pub fn num_spans(&self) -> usize {
        if self.degree == 0 {
            self.num_elements
        } else {
            self.num_elements + 1 - self.degree
        }
    }

    /// Span width `R / num_spans`.
    pub fn span_width(&self) -> f64 {
        self.support_radius / self.num_spans() as f64
    }

    /// Full clamped knot vector (with endpoint multiplicities `degree + 1`).
    fn knot(&self, idx: usize) -> f64 {
        let d = self.degree;
        let spans = self.num_spans();
        let k = idx.saturating_sub(d).min(spans);
        k as f64 * self.span_width()
    }

    /// Evaluates all basis elements at `r` into a dense length-`num_elements`
    /// vector. Zero vector for `r >= support_radius`; errors on negative `r`.
    pub fn eval_all(&self, r: f64) -> Result<DVector<f64>> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::NegativeRadius(r));
        }
        let mut out = DVector::zeros(self.num_elements);
        self.accumulate(r, |idx, val| out[idx] = val);
        Ok(out)
    }

    /// Sparse evaluation: calls `sink(index, value)` for each of the at most
    /// `degree + 1` elements that are nonzero at `r`. No-op outside `[0, R)`.
    pub(crate) fn accumulate(&self, r: f64, mut sink: impl FnMut(usize, f64)) {
        if !(r >= 0.0 && r < self.support_radius) {
            return;
        }
        let d = self.degree;
        let spans = self.num_spans();
        let h = self.span_width();
        let span = ((r / h) as usize).min(spans - 1);
        // Knot index of the span start in the clamped vector.
        let i = span + d;
        // Cox-de Boor triangular scheme for the d+1 nonzero splines.
        let mut vals = [0.0_f64; 4];
        let mut left = [0.0_f64; 4];
        let mut right = [0.0_f64; 4];
        vals[0] = 1.0;
        for j in 1..=d {
            left[j] = r - self.knot(i + 1 - j);
            right[j] = self.knot(i + j) - r;
            let mut saved = 0.0;
            for k in 0..j {
                let temp = vals[k] / (right[k + 1] + left[j - k]);
                vals[k] = saved + right[k + 1] * temp;
                saved = left[j - k] * temp;
            }
            vals[j] = saved;
        }
        // Spline j of the triangle has global index span + j; the clamped
        // family's right-endpoint spline (index num_elements when degree >= 1)
        // is dropped to enforce vanishing at R.
        for (j, v) in vals.iter().enumerate().take(d + 1) {
            let idx = span + j;
            if idx < self.num_elements {
                sink(idx, *v);
            }
        }
    }

    /// Exact pairwise `L^2([0, R], dr)` inner products (Gauss-Legendre per
    /// span, exact for polynomial products up to degree 7). Nonsingularity of
    /// this matrix witnesses linear independence.
    pub fn lebesgue_gram(&self) -> DMatrix<f64> {
        let k = self.num_elements;
        let mut g = DMatrix::zeros(k, k);
        let (nodes, weights) = crate::quadrature::gauss_legendre(4);
        let h = self.span_width();
        for span in 0..self.num_spans() {
            let a = span as f64 * h;
            for (t, w) in nodes.iter().zip(weights.iter()) {
                let r = a + 0.5 * h * (t + 1.0);
                let scale = 0.5 * h * w;
                let mut idx = [0usize; 4];
                let mut val = [0.0f64; 4];
                let mut cnt = 0;
                self.accumulate(r, |i, v| {
                    idx[cnt] = i;
                    val[cnt] = v;
                    cnt += 1;
                });
                for a_ in 0..cnt {
                    for b_ in 0..cnt {
                        g[(idx[a_], idx[b_])] += scale * val[a_] * val[b_];
                    }
                }
            }
        }
        g
    }
}

/// Closed-form kernels used by the scenario suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BuiltinKernel {
    /// `1` on `[0, radius)`, `0` beyond.
    Constant { radius: f64 },
    /// Smooth bump: `exp(1 - 1/(1 - (r/inner)^2))` on `[0, inner)`, `0` beyond.
    Bump { radius: f64, inner: f64 },
    /// Opinion-dynamics profile: `1` on `[0, 0.6 radius]`, then linear decay
    /// to `0` at `radius`.
    OpinionPiecewiseLinear { radius: f64 },
    /// Smooth bump supported on the annulus `(lo, hi)`.
    AnnularBump { radius: f64, lo: f64, hi: f64 },
}

impl BuiltinKernel {
    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidBasis(msg));
        let radius = self.radius();
        if !radius.is_finite() || radius <= 0.0 {
            return bad(format!("builtin kernel radius must be positive, got {radius}"));
        }
        match *self {
            BuiltinKernel::Bump { inner, .. } if inner.is_nan() || inner <= 0.0 || inner > radius => {
                bad(format!("bump inner radius {inner} outside (0, {radius}]"))
            }
            BuiltinKernel::AnnularBump { lo, hi, .. }
                if lo.is_nan() || hi.is_nan() || lo < 0.0 || lo >= hi || hi > radius =>
            {
                bad(format!("annulus [{lo}, {hi}] invalid for radius {radius}"))
            }
            _ => Ok(()),
        }
    }

    fn radius(&self) -> f64 {
        match *self {
            BuiltinKernel::Constant { radius }
            | BuiltinKernel::Bump { radius, .. }
            | BuiltinKernel::OpinionPiecewiseLinear { radius }
            | BuiltinKernel::AnnularBump { radius, .. } => radius,
        }
    }

    fn value(&self, r: f64) -> f64 {
        match *self {
            BuiltinKernel::Constant { radius } => {
                if r < radius {
                    1.0
                } else {
                    0.0
                }
            }
            BuiltinKernel::Bump { inner, .. } => smooth_bump(r / inner),
            BuiltinKernel::OpinionPiecewiseLinear { radius } => {
                if r <= 0.6 * radius {
                    1.0
                } else if r < radius {
                    (radius - r) / (0.4 * radius)
                } else {
                    0.0
                }
            }
            BuiltinKernel::AnnularBump { lo, hi, .. } => {
                let c = 0.5 * (lo + hi);
                let w = 0.5 * (hi - lo);
                smooth_bump((r - c) / w)
            }
        }
    }
}

/// `exp(1 - 1/(1 - s^2))` for `|s| < 1`, else `0`. Peak value 1 at `s = 0`.
fn smooth_bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum KernelRepr {
    Spline { basis: BasisSpec, coeffs: Vec<f64> },
    Builtin { builtin: BuiltinKernel },
}

/// A radial interaction kernel: either a coefficient vector over a
/// [`BasisSpec`] or a closed-form builtin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct RadialKernel {
    repr: KernelRepr,
}

impl TryFrom<KernelRepr> for RadialKernel {
    type Error = Error;
    fn try_from(repr: KernelRepr) -> Result<RadialKernel> {
        match repr {
            KernelRepr::Spline { basis, coeffs } => {
                RadialKernel::from_coeffs(basis, DVector::from_vec(coeffs))
            }
            KernelRepr::Builtin { builtin } => RadialKernel::builtin(builtin),
        }
    }
}

impl From<RadialKernel> for KernelRepr {
    fn from(k: RadialKernel) -> KernelRepr {
        k.repr
    }
}

impl RadialKernel {
    /// Kernel `sum_k coeffs[k] * b_k` over a basis. `eval` is exactly linear
    /// in the coefficients.
    pub fn from_coeffs(basis: BasisSpec, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != basis.num_elements() {
            return Err(Error::CoeffLenMismatch {
                expected: basis.num_elements(),
                got: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidBasis("non-finite coefficient".into()));
        }
        Ok(RadialKernel {
            repr: KernelRepr::Spline {
                basis,
                coeffs: coeffs.iter().copied().collect(),
            },
        })
    }

    pub fn builtin(b: BuiltinKernel) -> Result<Self> {
        b.check()?;
        Ok(RadialKernel {
            repr: KernelRepr::Builtin { builtin: b },
        })
    }

    /// Declared support radius `R`; `eval` vanishes for `r >= R`.
    pub fn support_radius(&self) -> f64 {
        match &self.repr {
            KernelRepr::Spline { basis, .. } => basis.support_radius(),
            KernelRepr::Builtin { builtin } => builtin.radius(),
        }
    }

    pub fn as_spline(&self) -> Option<(&BasisSpec, DVector<f64>)> {
        match &self.repr {
            KernelRepr::Spline { basis, coeffs } => {
                Some((basis, DVector::from_column_slice(coeffs)))
            }
            KernelRepr::Builtin { .. } => None,
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::NegativeRadius(r));
        }
        Ok(self.value_at(r))
    }

    /// The alternate interaction convention `phi(r) * r` as a plain value;
    /// radial kernels themselves always use the `phi(d) log_x(y)` form.
    pub fn eval_times_r(&self, r: f64) -> Result<f64> {
        Ok(self.eval(r)? * r)
    }

    /// Evaluation without the sign check; used on distances, which are
    /// nonnegative by construction.
    pub(crate) fn value_at(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        match &self.repr {
            KernelRepr::Spline { basis, coeffs } => {
                let mut acc = 0.0;
                basis.accumulate(r, |idx, val| acc += coeffs[idx] * val);
                acc
            }
            KernelRepr::Builtin { builtin } => builtin.value(r),
        }
    }

    /// `(r, phi(r))` on a uniform closed grid over `[0, R]`, for CSV export
    /// and plotting.
    pub fn sample_grid(&self, points: usize) -> Vec<(f64, f64)> {
        let n = points.max(2);
        let r_max = self.support_radius();
        (0..n)
            .map(|i| {
                let r = r_max * i as f64 / (n - 1) as f64;
                (r, self.value_at(r))
            })
            .collect()
    }

    pub fn describe(&self) -> String {
        match &self.repr {
            KernelRepr::Spline { basis, .. } => format!(
                "spline(R={}, elements={}, degree={})",
                basis.support_radius(),
                basis.num_elements(),
                basis.degree()
            ),
            KernelRepr::Builtin { builtin } => match builtin {
                BuiltinKernel::Constant { radius } => format!("constant(R={radius})"),
                BuiltinKernel::Bump { radius, inner } => {
                    format!("bump(R={radius}, inner={inner})")
                }
                BuiltinKernel::OpinionPiecewiseLinear { radius } => {
                    format!("opinion-piecewise-linear(R={radius})")
                }
                BuiltinKernel::AnnularBump { radius, lo, hi } => {
                    format!("annular-bump(R={radius}, support=({lo}, {hi}))")
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn degree0_indicator_selects_cell() {
        let b = BasisSpec::new(1.0, 4, 0).unwrap();
        let v = b.eval_all(0.3).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(b.eval_all(1.0).unwrap().norm(), 0.0);
        assert_eq!(b.eval_all(7.0).unwrap().norm(), 0.0);
    }

    #[test]
    fn degree1_hat_interpolation() {
        let b = BasisSpec::new(1.0, 2, 1).unwrap();
        let k = RadialKernel::from_coeffs(b, DVector::from_column_slice(&[0.0, 1.0])).unwrap();
        assert!((k.eval(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((k.eval(0.25).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(k.eval(1.0).unwrap(), 0.0);
    }

    #[test]
    fn negative_radius_rejected() {
        let b = BasisSpec::new(1.0, 3, 1).unwrap();
        assert!(b.eval_all(-0.1).is_err());
        let k = RadialKernel::from_coeffs(b, DVector::from_element(3, 1.0)).unwrap();
        assert!(matches!(k.eval(-1.0), Err(Error::NegativeRadius(_))));
    }

    /// Dropping the right-endpoint spline leaves a partition of unity on
    /// [0, R - span_width] for every degree.
    #[test]
    fn partition_of_unity_away_from_right_edge() {
        for degree in 0..=3 {
            let b = BasisSpec::new(2.0, 7.max(degree), degree).unwrap();
            let upper = b.support_radius() - b.span_width();
            for i in 0..=400 {
                let r = upper * i as f64 / 400.0;
                let s: f64 = b.eval_all(r).unwrap().sum();
                assert!((s - 1.0).abs() < 1e-12, "degree {degree}, r={r}: sum {s}");
            }
        }
    }

    #[test]
    fn elements_vanish_at_support_radius() {
        for degree in 1..=3 {
            let b = BasisSpec::new(1.5, 6, degree).unwrap();
            for i in 0..6 {
                let eps = 1e-9;
                let v = b.eval_all(1.5 - eps).unwrap();
                // Continuity at R: values near R are near zero.
                assert!(v[i] < 1e-6, "degree {degree} element {i}: {}", v[i]);
            }
        }
    }

    #[test]
    fn degree_ge1_is_continuous() {
        for degree in 1..=3 {
            let b = BasisSpec::new(1.0, 6, degree).unwrap();
            let eps = 1e-9;
            for step in 1..b.num_spans() {
                let r = step as f64 * b.span_width();
                let lo = b.eval_all(r - eps).unwrap();
                let hi = b.eval_all(r + eps).unwrap();
                assert!((lo - hi).amax() < 1e-6, "jump at knot {r} (degree {degree})");
            }
        }
    }

    #[test]
    fn eval_is_linear_in_coefficients() {
        let b = BasisSpec::new(3.0, 8, 2).unwrap();
        let mut rng = crate::rng::substream(3, 0);
        for _ in 0..20 {
            let c1 = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
            let c2 = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
            let a: f64 = rng.random_range(-2.0..2.0);
            let k1 = RadialKernel::from_coeffs(b.clone(), c1.clone()).unwrap();
            let k2 = RadialKernel::from_coeffs(b.clone(), c2.clone()).unwrap();
            let k3 = RadialKernel::from_coeffs(b.clone(), &c1 * a + &c2).unwrap();
            let r = rng.random_range(0.0..3.0);
            let lhs = k3.eval(r).unwrap();
            let rhs = a * k1.eval(r).unwrap() + k2.eval(r).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn lebesgue_gram_is_nonsingular() {
        for degree in 0..=3 {
            for k in [degree.max(1), 4, 9] {
                let b = BasisSpec::new(1.7, k, degree).unwrap();
                let g = b.lebesgue_gram();
                let chol = g.clone().cholesky();
                assert!(
                    chol.is_some(),
                    "degree {degree}, {k} elements: Gram singular"
                );
            }
        }
    }

    #[test]
    fn constants_reproduced_on_inner_interval() {
        for degree in 0..=1 {
            let k = 5;
            let b = BasisSpec::new(1.0, k, degree).unwrap();
            let kernel =
                RadialKernel::from_coeffs(b.clone(), DVector::from_element(k, 3.5)).unwrap();
            let upper = 1.0 - 1.0 / k as f64;
            for i in 0..=200 {
                let r = upper * i as f64 / 200.0;
                assert!((kernel.eval(r).unwrap() - 3.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn builtin_values() {
        let c = RadialKernel::builtin(BuiltinKernel::Constant { radius: 2.0 }).unwrap();
        assert_eq!(c.eval(0.0).unwrap(), 1.0);
        assert_eq!(c.eval(1.999).unwrap(), 1.0);
        assert_eq!(c.eval(2.0).unwrap(), 0.0);

        let bump = RadialKernel::builtin(BuiltinKernel::Bump {
            radius: 1.0,
            inner: 0.8,
        })
        .unwrap();
        assert_eq!(bump.eval(0.9).unwrap(), 0.0);
        assert!((bump.eval(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(bump.eval(0.5).unwrap() > 0.0);

        let op = RadialKernel::builtin(BuiltinKernel::OpinionPiecewiseLinear { radius: 2.0 })
            .unwrap();
        assert_eq!(op.eval(1.2).unwrap(), 1.0);
        assert!((op.eval(1.6).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(op.eval(2.0).unwrap(), 0.0);

        let ann = RadialKernel::builtin(BuiltinKernel::AnnularBump {
            radius: 1.0,
            lo: 0.5,
            hi: 0.8,
        })
        .unwrap();
        assert_eq!(ann.eval(0.45).unwrap(), 0.0);
        assert_eq!(ann.eval(0.85).unwrap(), 0.0);
        assert!(ann.eval(0.65).unwrap() > 0.9);
        assert!((ann.eval_times_r(0.65).unwrap() - 0.65 * ann.eval(0.65).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn builtin_validation() {
        assert!(RadialKernel::builtin(BuiltinKernel::Constant { radius: -1.0 }).is_err());
        assert!(RadialKernel::builtin(BuiltinKernel::Bump {
            radius: 1.0,
            inner: 1.5
        })
        .is_err());
        assert!(RadialKernel::builtin(BuiltinKernel::AnnularBump {
            radius: 1.0,
            lo: 0.8,
            hi: 0.5
        })
        .is_err());
    }

    #[test]
    fn json_roundtrip_and_unknown_builtin() {
        let b = BasisSpec::new(1.0, 3, 1).unwrap();
        let k = RadialKernel::from_coeffs(b, DVector::from_column_slice(&[0.1, 0.2, 0.3]))
            .unwrap();
        let json = serde_json::to_string(&k).unwrap();
        let back: RadialKernel = serde_json::from_str(&json).unwrap();
        assert_eq!(k, back);

        let c = RadialKernel::builtin(BuiltinKernel::Constant { radius: 2.0 }).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("constant"));
        let back: RadialKernel = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);

        let bad = r#"{"builtin":{"name":"mystery","radius":1.0}}"#;
        assert!(serde_json::from_str::<RadialKernel>(bad).is_err());

        let bad_basis = r#"{"basis":{"support_radius":1.0,"num_elements":3,"degree":9},"coeffs":[1,2,3]}"#;
        assert!(serde_json::from_str::<RadialKernel>(bad_basis).is_err());
    }

    #[test]
    fn sample_grid_covers_support() {
        let k = RadialKernel::builtin(BuiltinKernel::Constant { radius: 2.0 }).unwrap();
        let g = k.sample_grid(5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], (0.0, 1.0));
        assert_eq!(g[4].0, 2.0);
    }
}
