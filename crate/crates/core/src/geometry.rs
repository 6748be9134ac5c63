//! Points, tangent vectors and closed-form Riemannian primitives on the three
//! supported manifolds.
//!
//! * `S^n`: unit sphere in `R^{n+1}`, geodesic distance `arccos(<x,y>)`.
//! * `H^n`: hyperboloid sheet `{<x,x>_L = -1, x_0 > 0}` in Minkowski space
//!   `R^{1,n}` with the time coordinate first; half-space coordinates
//!   (positive last component) are accepted and produced through exact
//!   isometries. Distance `arccosh(-<x,y>_L)`.
//! * `R^n`: flat Euclidean space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Membership residual allowed by [`validate_point`]: `|‖x‖² - 1|` on spheres,
/// `|<x,x>_L + 1|` on hyperboloids.
pub const POINT_TOL: f64 = 1e-10;
/// Tangency residual allowed by [`Tangent::new`]: `|<x, v>|` in the ambient
/// (Minkowski for hyperboloids) pairing.
pub const TANGENT_TOL: f64 = 1e-10;
/// Antipodal detection on spheres: `y` is treated as the cut locus of `x`
/// when `1 + <x,y> <= CUT_LOCUS_TOL`, and `log_map` returns zero there.
pub const CUT_LOCUS_TOL: f64 = 1e-9;
/// Below this tangent norm, `exp_map` switches to series evaluation of
/// `sin(r)/r` and `sinh(r)/r`.
pub const SMALL_RADIUS: f64 = 1e-6;
/// Two tangents are "based at the same point" when coordinates agree within
/// this componentwise tolerance.
pub const BASE_MATCH_TOL: f64 = 1e-10;

/// Supported manifold families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Sphere,
    Hyperbolic,
    Euclidean,
}

/// A manifold family together with its intrinsic dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub dim: usize,
}

impl std::fmt::Display for ManifoldSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let letter = match self.kind {
            ManifoldKind::Sphere => "S",
            ManifoldKind::Hyperbolic => "H",
            ManifoldKind::Euclidean => "R",
        };
        write!(f, "{letter}^{}", self.dim)
    }
}

impl ManifoldSpec {
    /// Dimensions 1 through 8 are supported.
    pub fn new(kind: ManifoldKind, dim: usize) -> Result<Self> {
        if !(1..=8).contains(&dim) {
            return Err(Error::DimensionOutOfRange {
                dim,
                min: 1,
                max: 8,
                context: "manifold dimension",
            });
        }
        Ok(ManifoldSpec { kind, dim })
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        Self::new(ManifoldKind::Sphere, dim)
    }

    pub fn hyperbolic(dim: usize) -> Result<Self> {
        Self::new(ManifoldKind::Hyperbolic, dim)
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(ManifoldKind::Euclidean, dim)
    }

    /// Length of the ambient coordinate vector (`n+1` except for `R^n`).
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Euclidean => self.dim,
            _ => self.dim + 1,
        }
    }

    /// `pi` on spheres, infinite otherwise.
    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => std::f64::consts::PI,
            _ => f64::INFINITY,
        }
    }

    /// Origin of the canonical chart: north pole `e_0` on spheres, hyperboloid
    /// base point `(1, 0, ..., 0)`, or the zero vector.
    pub fn origin(&self) -> Point {
        let mut coords = DVector::zeros(self.ambient_dim());
        match self.kind {
            ManifoldKind::Sphere | ManifoldKind::Hyperbolic => coords[0] = 1.0,
            ManifoldKind::Euclidean => {}
        }
        Point {
            manifold: *self,
            coords,
        }
    }

    /// Ambient pairing that restricts to the Riemannian metric on tangent
    /// spaces: the Euclidean dot product, or the Minkowski form on `H^n`.
    pub(crate) fn pairing(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self.kind {
            ManifoldKind::Hyperbolic => mdot(a, b),
            _ => a.dot(b),
        }
    }

    pub(crate) fn distance_raw(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => x.dot(y).clamp(-1.0, 1.0).acos(),
            ManifoldKind::Hyperbolic => (-mdot(x, y)).max(1.0).acosh(),
            ManifoldKind::Euclidean => (x - y).norm(),
        }
    }

    pub(crate) fn exp_raw(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Sphere => {
                let r = v.norm();
                let (c, sc) = if r < SMALL_RADIUS {
                    (1.0 - r * r / 2.0, 1.0 - r * r / 6.0)
                } else {
                    (r.cos(), r.sin() / r)
                };
                let mut y = x * c + v * sc;
                y /= y.norm();
                y
            }
            ManifoldKind::Hyperbolic => {
                let r = mdot(v, v).max(0.0).sqrt();
                let (c, sc) = if r < SMALL_RADIUS {
                    (1.0 + r * r / 2.0, 1.0 + r * r / 6.0)
                } else {
                    (r.cosh(), r.sinh() / r)
                };
                let mut y = x * c + v * sc;
                let s = (-mdot(&y, &y)).max(f64::MIN_POSITIVE);
                y /= s.sqrt();
                y
            }
            ManifoldKind::Euclidean => x + v,
        }
    }

    /// Riemannian logarithm; zero at `y = x` and, on spheres, on the cut
    /// locus (antipode). Its norm equals the geodesic distance.
    pub(crate) fn log_raw(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Sphere => {
                let c = x.dot(y).clamp(-1.0, 1.0);
                if 1.0 + c <= CUT_LOCUS_TOL {
                    return DVector::zeros(x.len());
                }
                let d = c.acos();
                if d == 0.0 {
                    return DVector::zeros(x.len());
                }
                let u = y - x * c;
                let nu = u.norm();
                if nu == 0.0 {
                    return DVector::zeros(x.len());
                }
                u * (d / nu)
            }
            ManifoldKind::Hyperbolic => {
                let c = (-mdot(x, y)).max(1.0);
                let d = c.acosh();
                if d == 0.0 {
                    return DVector::zeros(x.len());
                }
                let u = y - x * c;
                let nu = mdot(&u, &u).max(0.0).sqrt();
                if nu == 0.0 {
                    return DVector::zeros(x.len());
                }
                u * (d / nu)
            }
            ManifoldKind::Euclidean => y - x,
        }
    }

    pub(crate) fn project_raw(&self, x: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Sphere => a - x * x.dot(a),
            ManifoldKind::Hyperbolic => a + x * mdot(a, x),
            ManifoldKind::Euclidean => a.clone(),
        }
    }

    /// Deviation of raw coordinates from the defining constraint (infinite
    /// for wrong length, nonfinite entries, or the wrong hyperboloid sheet).
    pub fn membership_residual(&self, x: &DVector<f64>) -> f64 {
        if x.len() != self.ambient_dim() || x.iter().any(|c| !c.is_finite()) {
            return f64::INFINITY;
        }
        match self.kind {
            ManifoldKind::Sphere => (x.norm_squared() - 1.0).abs(),
            ManifoldKind::Hyperbolic => {
                if x[0] <= 0.0 {
                    f64::INFINITY
                } else {
                    (mdot(x, x) + 1.0).abs()
                }
            }
            ManifoldKind::Euclidean => 0.0,
        }
    }

    pub(crate) fn tangency_residual(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        if v.len() != self.ambient_dim() || v.iter().any(|c| !c.is_finite()) {
            return f64::INFINITY;
        }
        match self.kind {
            ManifoldKind::Euclidean => 0.0,
            _ => self.pairing(x, v).abs(),
        }
    }
}

/// Minkowski pairing `-a_0 b_0 + sum_{i>=1} a_i b_i`.
pub(crate) fn mdot(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut s = -a[0] * b[0];
    for i in 1..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// A validated point on a manifold, stored in ambient coordinates
/// (hyperboloid coordinates for `H^n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PointRepr", into = "PointRepr")]
pub struct Point {
    manifold: ManifoldSpec,
    coords: DVector<f64>,
}

impl Point {
    pub fn new(manifold: ManifoldSpec, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != manifold.ambient_dim() {
            return Err(Error::AmbientDimMismatch {
                expected: manifold.ambient_dim(),
                got: coords.len(),
            });
        }
        let residual = manifold.membership_residual(&coords);
        if residual > POINT_TOL {
            return Err(Error::InvalidPoint(manifold, residual));
        }
        Ok(Point { manifold, coords })
    }

    pub fn from_slice(manifold: ManifoldSpec, coords: &[f64]) -> Result<Self> {
        Self::new(manifold, DVector::from_column_slice(coords))
    }

    /// Caller guarantees membership; used on freshly produced outputs of
    /// `exp_raw` and the samplers, which renormalize internally.
    pub(crate) fn new_unchecked(manifold: ManifoldSpec, coords: DVector<f64>) -> Self {
        debug_assert!(manifold.membership_residual(&coords) <= POINT_TOL);
        Point { manifold, coords }
    }

    pub fn manifold(&self) -> ManifoldSpec {
        self.manifold
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn approx_eq(&self, other: &Point, tol: f64) -> bool {
        self.manifold == other.manifold
            && self
                .coords
                .iter()
                .zip(other.coords.iter())
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// A tangent vector `vec` at `base`, validated against the tangency
/// constraint of the base manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    base: Point,
    vec: DVector<f64>,
}

impl Tangent {
    pub fn new(base: Point, vec: DVector<f64>) -> Result<Self> {
        let residual = base.manifold.tangency_residual(&base.coords, &vec);
        if vec.len() != base.manifold.ambient_dim() {
            return Err(Error::AmbientDimMismatch {
                expected: base.manifold.ambient_dim(),
                got: vec.len(),
            });
        }
        if residual > TANGENT_TOL {
            return Err(Error::NotTangent(residual));
        }
        Ok(Tangent { base, vec })
    }

    pub fn zero(base: Point) -> Self {
        let vec = DVector::zeros(base.manifold.ambient_dim());
        Tangent { base, vec }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn vec(&self) -> &DVector<f64> {
        &self.vec
    }

    pub fn scale(&self, s: f64) -> Tangent {
        Tangent {
            base: self.base.clone(),
            vec: &self.vec * s,
        }
    }

    /// Metric norm `sqrt(g(v, v))`.
    pub fn norm(&self) -> f64 {
        let m = self.base.manifold;
        m.pairing(&self.vec, &self.vec).max(0.0).sqrt()
    }
}

/// True when the coordinates satisfy the defining constraint of their
/// manifold within [`POINT_TOL`].
pub fn validate_point(p: &Point) -> bool {
    p.manifold.membership_residual(&p.coords) <= POINT_TOL
}

/// Geodesic distance. Symmetric, nonnegative, bounded by `pi` on spheres.
pub fn distance(p: &Point, q: &Point) -> Result<f64> {
    if p.manifold != q.manifold {
        return Err(Error::ManifoldMismatch(p.manifold, q.manifold));
    }
    Ok(p.manifold.distance_raw(&p.coords, &q.coords))
}

/// Riemannian exponential. The result is renormalized onto the manifold, so
/// membership holds exactly to validation tolerance even after long orbits.
pub fn exp_map(t: &Tangent) -> Point {
    let m = t.base.manifold;
    Point::new_unchecked(m, m.exp_raw(&t.base.coords, &t.vec))
}

/// Riemannian logarithm `log_x(y)`: the tangent at `x` with `exp_x(v) = y`,
/// of norm `d(x, y)`. Returns the zero tangent for `y = x` and, on spheres,
/// when `y` lies on the cut locus of `x` (`1 + <x,y> <= CUT_LOCUS_TOL`).
pub fn log_map(x: &Point, y: &Point) -> Result<Tangent> {
    if x.manifold != y.manifold {
        return Err(Error::ManifoldMismatch(x.manifold, y.manifold));
    }
    let v = x.manifold.log_raw(&x.coords, &y.coords);
    Ok(Tangent {
        base: x.clone(),
        vec: v,
    })
}

/// Riemannian inner product of two tangents at the same base point.
pub fn metric_inner(u: &Tangent, v: &Tangent) -> Result<f64> {
    if !u.base.approx_eq(&v.base, BASE_MATCH_TOL) {
        return Err(Error::BaseMismatch);
    }
    Ok(u.base.manifold.pairing(&u.vec, &v.vec))
}

/// Orthogonal (Minkowski-orthogonal on `H^n`) projection of an ambient vector
/// onto the tangent space at `x`. Idempotent.
pub fn tangent_project(x: &Point, ambient: &DVector<f64>) -> Result<Tangent> {
    if ambient.len() != x.manifold.ambient_dim() {
        return Err(Error::AmbientDimMismatch {
            expected: x.manifold.ambient_dim(),
            got: ambient.len(),
        });
    }
    let v = x.manifold.project_raw(&x.coords, ambient);
    Ok(Tangent {
        base: x.clone(),
        vec: v,
    })
}

/// Point and velocity of the geodesic `t -> exp_x(t w)` at parameter `t`,
/// for a starting tangent `w`. The returned velocity is tangent at the
/// returned point and has constant norm `|w|`.
pub fn geodesic_flow(start: &Tangent, t: f64) -> (Point, Tangent) {
    let m = start.base().manifold();
    let x = start.base().coords();
    let w = start.vec();
    let speed = start.norm();
    if speed == 0.0 {
        return (start.base().clone(), start.clone());
    }
    let dir = w / speed;
    let s = t * speed;
    let (point, vel) = match m.kind {
        ManifoldKind::Sphere => {
            let mut y = x * s.cos() + &dir * s.sin();
            y /= y.norm();
            let v = (&dir * s.cos() - x * s.sin()) * speed;
            (y, v)
        }
        ManifoldKind::Hyperbolic => {
            let mut y = x * s.cosh() + &dir * s.sinh();
            let norm2 = (-mdot(&y, &y)).max(f64::MIN_POSITIVE);
            y /= norm2.sqrt();
            let v = (&dir * s.cosh() + x * s.sinh()) * speed;
            (y, v)
        }
        ManifoldKind::Euclidean => (x + w * t, w.clone()),
    };
    let point = Point::new_unchecked(m, point);
    // Re-project so the velocity is tangent to machine precision at the
    // renormalized point.
    let vel = m.project_raw(point.coords(), &vel);
    let vel = Tangent {
        base: point.clone(),
        vec: vel,
    };
    (point, vel)
}

/// Jacobian of geodesic polar coordinates at radius `r`: `sin(r)^{n-1}`,
/// `sinh(r)^{n-1}` or `r^{n-1}`.
pub fn polar_jacobian(m: ManifoldSpec, r: f64) -> Result<f64> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::NegativeRadius(r));
    }
    let e = (m.dim - 1) as i32;
    match m.kind {
        ManifoldKind::Sphere => {
            if r > std::f64::consts::PI + 1e-12 {
                return Err(Error::RadiusOutOfRange {
                    r,
                    max: std::f64::consts::PI,
                });
            }
            Ok(r.sin().max(0.0).powi(e))
        }
        ManifoldKind::Hyperbolic => Ok(r.sinh().powi(e)),
        ManifoldKind::Euclidean => Ok(r.powi(e)),
    }
}

// ---------------------------------------------------------------------------
// Half-space coordinates for H^n
// ---------------------------------------------------------------------------

/// Inversion through the sphere of radius `sqrt(2)` centered at `-e_n`.
/// Swaps the open unit ball and the upper half-space `{h_n > 0}` of `R^n`,
/// and is an isometry between the Poincare ball and half-space metrics.
fn cayley_involution(p: &DVector<f64>) -> DVector<f64> {
    let n = p.len();
    let mut shifted = p.clone();
    shifted[n - 1] += 1.0;
    let s = shifted.norm_squared();
    let mut out = shifted * (2.0 / s);
    out[n - 1] -= 1.0;
    out
}

/// Converts half-space coordinates `h` (with `h_n > 0`) to a hyperboloid
/// point of `H^n`, `n = h.len()`.
pub fn halfspace_to_hyperboloid(h: &DVector<f64>) -> Result<Point> {
    let n = h.len();
    let m = ManifoldSpec::hyperbolic(n)?;
    let height = h[n - 1];
    if h.iter().any(|c| !c.is_finite()) || height <= 0.0 {
        return Err(Error::NonpositiveHeight(height));
    }
    let b = cayley_involution(h);
    let b2 = b.norm_squared();
    let denom = 1.0 - b2;
    let mut coords = DVector::zeros(n + 1);
    coords[0] = (1.0 + b2) / denom;
    for i in 0..n {
        coords[i + 1] = 2.0 * b[i] / denom;
    }
    // Absorb roundoff so membership holds at tolerance.
    let s = (-mdot(&coords, &coords)).max(f64::MIN_POSITIVE);
    coords /= s.sqrt();
    Ok(Point::new_unchecked(m, coords))
}

/// Converts a hyperboloid point to half-space coordinates (positive last
/// component). Inverse of [`halfspace_to_hyperboloid`].
pub fn hyperboloid_to_halfspace(p: &Point) -> Result<DVector<f64>> {
    if p.manifold.kind != ManifoldKind::Hyperbolic {
        return Err(Error::ManifoldMismatch(
            ManifoldSpec {
                kind: ManifoldKind::Hyperbolic,
                dim: p.manifold.dim,
            },
            p.manifold,
        ));
    }
    let n = p.manifold.dim;
    let x = &p.coords;
    let b = DVector::from_fn(n, |i, _| x[i + 1] / (1.0 + x[0]));
    Ok(cayley_involution(&b))
}

/// Closed-form hyperbolic distance in half-space coordinates:
/// `arccosh(1 + |h - h'|^2 / (2 h_n h'_n))`.
pub fn halfspace_distance(h: &DVector<f64>, hp: &DVector<f64>) -> Result<f64> {
    if h.len() != hp.len() {
        return Err(Error::AmbientDimMismatch {
            expected: h.len(),
            got: hp.len(),
        });
    }
    let n = h.len();
    if h[n - 1].is_nan() || h[n - 1] <= 0.0 {
        return Err(Error::NonpositiveHeight(h[n - 1]));
    }
    if hp[n - 1].is_nan() || hp[n - 1] <= 0.0 {
        return Err(Error::NonpositiveHeight(hp[n - 1]));
    }
    let num = (h - hp).norm_squared();
    Ok((1.0 + num / (2.0 * h[n - 1] * hp[n - 1])).max(1.0).acosh())
}

// ---------------------------------------------------------------------------
// Sampling laws
// ---------------------------------------------------------------------------

/// Single-point sampling laws for building product and mixture distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PointLaw {
    /// Normalized surface measure on `S^n`.
    UniformSphere,
    /// Normalized volume measure on a geodesic ball of `H^n`.
    UniformHyperbolicBall { center: Point, radius: f64 },
    /// Product of `Uniform([lo, hi])` over the coordinates of `R^n`.
    UniformEuclideanCube { lo: f64, hi: f64 },
}

impl std::fmt::Display for PointLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PointLaw::UniformSphere => write!(f, "uniform-sphere"),
            PointLaw::UniformHyperbolicBall { radius, .. } => {
                write!(f, "uniform-hyperbolic-ball(radius {radius})")
            }
            PointLaw::UniformEuclideanCube { lo, hi } => {
                write!(f, "uniform-euclidean-cube([{lo}, {hi}])")
            }
        }
    }
}

impl PointLaw {
    /// Checks the law against a manifold (family, dimension, parameter sanity).
    pub fn check_compatible(&self, m: ManifoldSpec) -> Result<()> {
        let incompatible = || Error::IncompatibleLaw {
            law: self.to_string(),
            manifold: m,
        };
        match self {
            PointLaw::UniformSphere => {
                if m.kind != ManifoldKind::Sphere {
                    return Err(incompatible());
                }
            }
            PointLaw::UniformHyperbolicBall { center, radius } => {
                if m.kind != ManifoldKind::Hyperbolic
                    || center.manifold() != m
                    || !(*radius > 0.0 && radius.is_finite())
                {
                    return Err(incompatible());
                }
            }
            PointLaw::UniformEuclideanCube { lo, hi } => {
                if m.kind != ManifoldKind::Euclidean || lo.is_nan() || hi.is_nan() || lo >= hi {
                    return Err(incompatible());
                }
            }
        }
        Ok(())
    }
}

/// Draws one point of `m` from `law`.
pub fn sample_point<R: Rng + ?Sized>(m: ManifoldSpec, law: &PointLaw, rng: &mut R) -> Result<Point> {
    law.check_compatible(m)?;
    match law {
        PointLaw::UniformSphere => {
            let a = m.ambient_dim();
            loop {
                let g = DVector::from_fn(a, |_, _| rng.sample::<f64, _>(StandardNormal));
                let n = g.norm();
                if n > 1e-12 {
                    return Ok(Point::new_unchecked(m, g / n));
                }
            }
        }
        PointLaw::UniformHyperbolicBall { center, radius } => {
            // Polar sampling: metric-orthonormal frame at the center, uniform
            // direction, radius from the density proportional to sinh^{n-1}.
            let frame = orthonormal_frame(center, None)?;
            let dir = loop {
                let g = DVector::from_fn(m.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let n = g.norm();
                if n > 1e-12 {
                    break g / n;
                }
            };
            let u: f64 = rng.random();
            let r = hyperbolic_ball_radius_quantile(m.dim, *radius, u);
            let mut v = DVector::zeros(m.ambient_dim());
            for (c, e) in dir.iter().zip(frame.iter()) {
                v += e.vec() * (*c * r);
            }
            Ok(exp_map(&Tangent {
                base: center.clone(),
                vec: v,
            }))
        }
        PointLaw::UniformEuclideanCube { lo, hi } => {
            let coords = DVector::from_fn(m.dim, |_, _| rng.random_range(*lo..*hi));
            Ok(Point::new_unchecked(m, coords))
        }
    }
}

/// Antiderivative `S_m(r) = integral_0^r sinh(t)^m dt` (`m <= 7`), via the
/// reduction `S_m = (sinh^{m-1} cosh - (m-1) S_{m-2}) / m`.
pub fn sinh_power_primitive(m: usize, r: f64) -> f64 {
    match m {
        0 => r,
        1 => 2.0 * (r / 2.0).sinh().powi(2), // cosh(r) - 1, stable near 0
        _ => {
            let s = r.sinh();
            (s.powi(m as i32 - 1) * r.cosh() - (m as f64 - 1.0) * sinh_power_primitive(m - 2, r))
                / m as f64
        }
    }
}

/// Quantile of the radial law on `[0, r_max]` with density proportional to
/// `sinh(r)^{n-1}` (the uniform-ball radial law on `H^n`). Rejection-free:
/// safeguarded Newton on the closed-form CDF.
pub fn hyperbolic_ball_radius_quantile(n: usize, r_max: f64, u: f64) -> f64 {
    let total = sinh_power_primitive(n - 1, r_max);
    let target = u.clamp(0.0, 1.0) * total;
    let (mut lo, mut hi) = (0.0_f64, r_max);
    // Euclidean-like initial guess.
    let mut r = r_max * u.powf(1.0 / n as f64);
    for _ in 0..80 {
        let f = sinh_power_primitive(n - 1, r) - target;
        if f > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let df = r.sinh().powi(n as i32 - 1).max(f64::MIN_POSITIVE);
        let mut next = r - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= 1e-14 * r_max {
            return next;
        }
        r = next;
    }
    r
}

// ---------------------------------------------------------------------------
// Frames and volumes
// ---------------------------------------------------------------------------

/// Metric-orthonormal basis of the tangent space at `x`, built by
/// Gram-Schmidt over projected ambient axes. When `first` is given (a nonzero
/// tangent at `x`), its normalization becomes the first frame vector.
/// Deterministic in its inputs.
pub fn orthonormal_frame(x: &Point, first: Option<&Tangent>) -> Result<Vec<Tangent>> {
    let m = x.manifold();
    let n = m.dim;
    let a = m.ambient_dim();
    let mut frame: Vec<DVector<f64>> = Vec::with_capacity(n);
    if let Some(t) = first {
        if !t.base().approx_eq(x, BASE_MATCH_TOL) {
            return Err(Error::BaseMismatch);
        }
        let norm = t.norm();
        if norm <= 1e-12 {
            return Err(Error::NotTangent(0.0));
        }
        frame.push(t.vec() / norm);
    }
    let mut axis = 0;
    while frame.len() < n && axis < a {
        let mut e = DVector::zeros(a);
        e[axis] = 1.0;
        axis += 1;
        let mut v = m.project_raw(&x.coords, &e);
        for f in &frame {
            let c = m.pairing(&v, f);
            v -= f * c;
        }
        let norm2 = m.pairing(&v, &v);
        if norm2 > 1e-12 {
            frame.push(v / norm2.sqrt());
        }
    }
    debug_assert_eq!(frame.len(), n);
    Ok(frame
        .into_iter()
        .map(|v| Tangent {
            base: x.clone(),
            vec: v,
        })
        .collect())
}

/// `Gamma(k/2)` for positive integer `k`.
fn gamma_half(k: usize) -> f64 {
    let mut z = k as f64 / 2.0;
    let mut acc = 1.0;
    while z > 1.25 {
        z -= 1.0;
        acc *= z;
    }
    // z is now 1/2 or 1.
    if (z - 0.5).abs() < 1e-12 {
        acc * std::f64::consts::PI.sqrt()
    } else {
        acc
    }
}

/// Surface measure of the unit sphere `S^n`: `2 pi^{(n+1)/2} / Gamma((n+1)/2)`.
pub fn sphere_surface_measure(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf((n as f64 + 1.0) / 2.0) / gamma_half(n + 1)
}

/// Volume of a geodesic ball of radius `r` in `H^n`.
pub fn hyperbolic_ball_volume(n: usize, r: f64) -> f64 {
    sphere_surface_measure(n - 1) * sinh_power_primitive(n - 1, r)
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the sign
/// convention fixed by the R diagonal).
pub fn haar_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Wire form of [`Point`]: manifold header plus ambient coordinates. For
/// hyperbolic points the optional `convention` field selects between
/// `"hyperboloid"` (default; time coordinate first) and `"halfspace"`
/// (positive last coordinate) on input; output always uses hyperboloid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointRepr {
    kind: ManifoldKind,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    convention: Option<String>,
    coords: Vec<f64>,
}

impl TryFrom<PointRepr> for Point {
    type Error = Error;

    fn try_from(repr: PointRepr) -> Result<Point> {
        let m = ManifoldSpec::new(repr.kind, repr.dim)?;
        match repr.convention.as_deref() {
            None | Some("hyperboloid") => {
                Point::new(m, DVector::from_vec(repr.coords))
            }
            Some("halfspace") => {
                if repr.kind != ManifoldKind::Hyperbolic {
                    return Err(Error::Serialization(
                        "the halfspace convention applies only to hyperbolic points".into(),
                    ));
                }
                if repr.coords.len() != repr.dim {
                    return Err(Error::AmbientDimMismatch {
                        expected: repr.dim,
                        got: repr.coords.len(),
                    });
                }
                halfspace_to_hyperboloid(&DVector::from_vec(repr.coords))
            }
            Some(other) => Err(Error::Serialization(format!(
                "unknown coordinate convention {other:?}; expected \"hyperboloid\" or \"halfspace\""
            ))),
        }
    }
}

impl From<Point> for PointRepr {
    fn from(p: Point) -> PointRepr {
        PointRepr {
            kind: p.manifold.kind,
            dim: p.manifold.dim,
            convention: None,
            coords: p.coords.iter().copied().collect(),
        }
    }
}
