//! Deterministic quadrature for the coercivity-condition integrals.
//!
//! For a point `x`, a metric-orthonormal tangent frame `(e_1, ..., e_n)` and a
//! radial kernel `phi`, the quantity of interest is the frame component
//!
//! ```text
//! I_i(x) = \int_{D(x)} u_i phi(|u|) p(exp_x(u)) (sin|u| / |u|)^{n-1} du
//! ```
//!
//! (`sinh` on hyperbolic spaces, `1` on flat space), i.e. the i-th coordinate
//! of the mean influence vector at `x` under the single-point density `p`. A
//! vanishing value for every `x` and `i` is the degenerate case in which the
//! mean-field lower bound on the identifiability constant is sharp; any
//! nonconstant profile along a geodesic certifies a positive refinement.
//!
//! In polar coordinates the integral splits into an angular rule over unit
//! directions and a per-direction radial Gauss-Legendre rule over the exact
//! admissible interval (closed-form geodesic-ball clipping; no rejection).

use serde::Serialize;

use crate::geometry::{
    self, distance, geodesic_flow, log_map, metric_inner, orthonormal_frame, ManifoldKind, Point,
    PointLaw, Tangent,
};
use crate::kernels::RadialKernel;
use crate::{Error, Result};

/// Node counts for the product rule: `radial` Gauss-Legendre nodes per
/// admissible interval, `angular` azimuth nodes (`angular / 2` Gauss-Legendre
/// colatitude nodes in dimension 3). Accuracy is estimated by doubling both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QuadSpec {
    pub radial: usize,
    pub angular: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            radial: 32,
            angular: 64,
        }
    }
}

impl QuadSpec {
    pub fn doubled(&self) -> QuadSpec {
        QuadSpec {
            radial: self.radial * 2,
            angular: self.angular * 2,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on the Legendre
/// recurrence; accurate to machine precision for the orders used here).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0_f64, x);
            for j in 2..=n {
                let jf = j as f64;
                let p = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x.abs();
        nodes[n - 1 - k] = x.abs();
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Unit directions and weights for integration over `S^{n-1}` in frame
/// coordinates, `n <= 3`. Weights sum to the surface measure of `S^{n-1}`.
fn sphere_directions(n: usize, angular: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    match n {
        1 => Ok(vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)]),
        2 => {
            let a = angular.max(4);
            let w = 2.0 * std::f64::consts::PI / a as f64;
            Ok((0..a)
                .map(|j| {
                    let th = 2.0 * std::f64::consts::PI * j as f64 / a as f64;
                    (vec![th.cos(), th.sin()], w)
                })
                .collect())
        }
        3 => {
            let a = angular.max(8);
            let colat = (a / 2).max(4);
            let (cn, cw) = gauss_legendre(colat);
            let wa = 2.0 * std::f64::consts::PI / a as f64;
            let mut dirs = Vec::with_capacity(a * colat);
            for (u, wu) in cn.iter().zip(cw.iter()) {
                let s = (1.0 - u * u).max(0.0).sqrt();
                for j in 0..a {
                    let th = 2.0 * std::f64::consts::PI * j as f64 / a as f64;
                    dirs.push((vec![*u, s * th.cos(), s * th.sin()], wu * wa));
                }
            }
            Ok(dirs)
        }
        _ => Err(Error::UnsupportedQuadratureDim(n)),
    }
}

/// Admissible radial interval along a unit direction on a hyperbolic space:
/// values `r >= 0` with `d(exp_x(r v), center) <= ball_radius`, intersected
/// with `[0, r_cap]`. `dist_to_center = d(x, center)` and `cos_angle` is the
/// metric cosine between `v` and the direction from `x` to the center.
///
/// Uses the hyperbolic law of cosines
/// `cosh d(r) = cosh r cosh D - sinh r sinh D cos(angle) = Q cosh(r - m)`
/// with `Q = sqrt(cosh^2 D - sinh^2 D cos^2)` and `m = atanh(tanh D cos)`.
pub fn hyperbolic_ball_clip(
    dist_to_center: f64,
    cos_angle: f64,
    ball_radius: f64,
    r_cap: f64,
) -> Option<(f64, f64)> {
    let d = dist_to_center;
    if d == 0.0 {
        let hi = ball_radius.min(r_cap);
        return (hi > 0.0).then_some((0.0, hi));
    }
    let a = d.cosh();
    let b = d.sinh() * cos_angle.clamp(-1.0, 1.0);
    let c = ball_radius.cosh();
    let q2 = (a * a - b * b).max(1.0); // >= 1 analytically
    let q = q2.sqrt();
    if c < q {
        return None;
    }
    let mid = (b / a).atanh();
    let half = (c / q).max(1.0).acosh();
    let lo = (mid - half).max(0.0);
    let hi = (mid + half).min(r_cap);
    (hi > lo).then_some((lo, hi))
}

struct RadialRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl RadialRule {
    fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order.max(2));
        RadialRule { nodes, weights }
    }

    /// `\int_lo^hi r phi(r) jac(r) dr` by affine-mapped Gauss-Legendre.
    fn integrate(&self, lo: f64, hi: f64, kernel: &RadialKernel, jac: impl Fn(f64) -> f64) -> f64 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(self.weights.iter()) {
            let r = mid + half * t;
            acc += w * r * kernel.value_at(r) * jac(r);
        }
        acc * half
    }
}

fn check_density(m: geometry::ManifoldSpec, density: &PointLaw) -> Result<()> {
    if !(1..=3).contains(&m.dim) {
        return Err(Error::UnsupportedQuadratureDim(m.dim));
    }
    let ok = matches!(
        (m.kind, density),
        (ManifoldKind::Sphere, PointLaw::UniformSphere)
            | (ManifoldKind::Hyperbolic, PointLaw::UniformHyperbolicBall { .. })
    );
    if !ok {
        return Err(Error::UnsupportedDensity {
            law: density.to_string(),
            manifold: m,
        });
    }
    density.check_compatible(m)
}

/// Coercivity-condition integral `I_component(x)` in an explicitly supplied
/// metric-orthonormal frame (see module docs). `component` is 0-based.
pub fn coercivity_integral_in_frame(
    density: &PointLaw,
    kernel: &RadialKernel,
    frame: &[Tangent],
    component: usize,
    quad: &QuadSpec,
) -> Result<f64> {
    let x = frame
        .first()
        .ok_or(Error::UnsupportedQuadratureDim(0))?
        .base()
        .clone();
    let m = x.manifold();
    check_density(m, density)?;
    if frame.len() != m.dim {
        return Err(Error::UnsupportedQuadratureDim(frame.len()));
    }
    if component >= m.dim {
        return Err(Error::ComponentOutOfRange {
            i: component,
            dim: m.dim,
        });
    }
    let n = m.dim;
    let dirs = sphere_directions(n, quad.angular)?;
    let radial = RadialRule::new(quad.radial);
    let exp1 = n as i32 - 1;

    match density {
        PointLaw::UniformSphere => {
            let p = 1.0 / geometry::sphere_surface_measure(n);
            let r_hi = kernel.support_radius().min(std::f64::consts::PI);
            if r_hi <= 0.0 {
                return Ok(0.0);
            }
            let rad = radial.integrate(0.0, r_hi, kernel, |r| r.sin().max(0.0).powi(exp1));
            let mut acc = 0.0;
            for (v, w) in &dirs {
                acc += w * v[component];
            }
            Ok(p * rad * acc)
        }
        PointLaw::UniformHyperbolicBall { center, radius } => {
            let p = 1.0 / geometry::hyperbolic_ball_volume(n, *radius);
            let r_cap = kernel.support_radius();
            let d = distance(&x, center)?;
            // Frame coordinates of the unit direction from x to the center.
            let to_center: Vec<f64> = if d > 1e-14 {
                let lg = log_map(&x, center)?;
                frame
                    .iter()
                    .map(|e| metric_inner(&lg, e).unwrap() / d)
                    .collect()
            } else {
                vec![0.0; n]
            };
            let mut acc = 0.0;
            for (v, w) in &dirs {
                let cos_angle: f64 = v.iter().zip(to_center.iter()).map(|(a, b)| a * b).sum();
                if let Some((lo, hi)) = hyperbolic_ball_clip(d, cos_angle, *radius, r_cap) {
                    let rad = radial.integrate(lo, hi, kernel, |r| r.sinh().powi(exp1));
                    acc += w * v[component] * rad;
                }
            }
            Ok(p * acc)
        }
        PointLaw::UniformEuclideanCube { .. } => unreachable!("rejected by check_density"),
    }
}

/// Coercivity-condition integral in the default deterministic frame at `x`
/// (Gram-Schmidt over projected ambient axes).
pub fn coercivity_integral(
    density: &PointLaw,
    kernel: &RadialKernel,
    x: &Point,
    component: usize,
    quad: &QuadSpec,
) -> Result<f64> {
    let frame = orthonormal_frame(x, None)?;
    coercivity_integral_in_frame(density, kernel, &frame, component, quad)
}

/// Integral together with a node-doubling error estimate: returns the
/// doubled-resolution value and `|fine - coarse|`.
pub fn coercivity_integral_with_error(
    density: &PointLaw,
    kernel: &RadialKernel,
    x: &Point,
    component: usize,
    quad: &QuadSpec,
) -> Result<(f64, f64)> {
    let frame = orthonormal_frame(x, None)?;
    let coarse = coercivity_integral_in_frame(density, kernel, &frame, component, quad)?;
    let fine = coercivity_integral_in_frame(density, kernel, &frame, component, &quad.doubled())?;
    Ok((fine, (fine - coarse).abs()))
}

/// First-component coercivity integrals along a unit-speed geodesic, with the
/// frame chosen so that `e_1 = geodesic velocity`.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileReport {
    pub t: Vec<f64>,
    /// `I_1(gamma(t))` at doubled resolution.
    pub values: Vec<f64>,
    /// Node-doubling error estimate per grid point.
    pub quad_errors: Vec<f64>,
    /// Centered finite differences of `values` on the grid.
    pub derivatives: Vec<f64>,
    pub max_abs_value: f64,
    pub max_abs_derivative: f64,
    pub max_quad_error: f64,
    /// True when the profile is resolvably nonconstant:
    /// `max |d/dt| > 10 max(max_quad_error, 1e-12)`.
    pub nonconstant: bool,
}

/// Evaluates the profile `t -> I_1(gamma(t))` for `gamma(t) = exp_x(t w)`,
/// `w = geodesic` normalized to unit speed. A nonconstant profile certifies
/// a strictly positive identifiability refinement for densities like the
/// uniform hyperbolic ball (it is identically zero under the uniform sphere
/// law, where the angular integral vanishes by symmetry).
pub fn coercivity_profile(
    density: &PointLaw,
    kernel: &RadialKernel,
    geodesic: &Tangent,
    t_grid: &[f64],
    quad: &QuadSpec,
) -> Result<ProfileReport> {
    if t_grid.is_empty() {
        return Err(Error::EmptySamples);
    }
    let speed = geodesic.norm();
    if speed == 0.0 {
        return Err(Error::NotTangent(0.0));
    }
    let unit = geodesic.scale(1.0 / speed);
    let mut values = Vec::with_capacity(t_grid.len());
    let mut errors = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (x, vel) = geodesic_flow(&unit, t);
        let frame = orthonormal_frame(&x, Some(&vel))?;
        let coarse = coercivity_integral_in_frame(density, kernel, &frame, 0, quad)?;
        let fine = coercivity_integral_in_frame(density, kernel, &frame, 0, &quad.doubled())?;
        values.push(fine);
        errors.push((fine - coarse).abs());
    }
    let mut derivatives = vec![0.0; t_grid.len()];
    for (j, slot) in derivatives.iter_mut().enumerate() {
        let (a, b) = match j {
            0 => (0, (t_grid.len() - 1).min(1)),
            j if j == t_grid.len() - 1 => (j - 1, j),
            j => (j - 1, j + 1),
        };
        let dt = t_grid[b] - t_grid[a];
        *slot = if dt != 0.0 {
            (values[b] - values[a]) / dt
        } else {
            0.0
        };
    }
    let max_abs_value = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let max_abs_derivative = derivatives.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let max_quad_error = errors.iter().fold(0.0_f64, |m, v| m.max(*v));
    let nonconstant = max_abs_derivative > 10.0 * max_quad_error.max(1e-12);
    Ok(ProfileReport {
        t: t_grid.to_vec(),
        values,
        quad_errors: errors,
        derivatives,
        max_abs_value,
        max_abs_derivative,
        max_quad_error,
        nonconstant,
    })
}
