//! Configurations of interacting particles, their kernel-driven velocity
//! fields, geodesic time steppers and observation datasets.
//!
//! The governing field is `f_i(X) = (1/N) sum_{j != i} phi(d(x_i, x_j))
//! log_{x_i}(x_j)`, a tangent vector at each particle. The product tangent
//! space carries the normalized metric `<U, V> = (1/N) sum_i g(u_i, v_i)`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::{ManifoldSpec, Point, Tangent, BASE_MATCH_TOL};
use crate::kernels::RadialKernel;
use crate::measure::{sample_configuration, DistributionSpec};
use crate::rng::substream;
use crate::{Error, Result};

/// An ordered tuple of `N >= 2` particles on a common manifold.
///
/// Serializes as a plain list of points; deserialization revalidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Configuration {
    manifold: ManifoldSpec,
    points: Vec<Point>,
}

impl TryFrom<Vec<Point>> for Configuration {
    type Error = Error;

    fn try_from(points: Vec<Point>) -> Result<Self> {
        Configuration::new(points)
    }
}

impl From<Configuration> for Vec<Point> {
    fn from(c: Configuration) -> Vec<Point> {
        c.points
    }
}

impl Configuration {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewParticles {
                min: 2,
                got: points.len(),
            });
        }
        let manifold = points[0].manifold();
        for p in &points {
            if p.manifold() != manifold {
                return Err(Error::ManifoldMismatch(manifold, p.manifold()));
            }
            if !crate::geometry::validate_point(p) {
                return Err(Error::InvalidPoint(
                    manifold,
                    manifold.membership_residual(p.coords()),
                ));
            }
        }
        Ok(Configuration { manifold, points })
    }

    pub fn manifold(&self) -> ManifoldSpec {
        self.manifold
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    /// Componentwise coordinate agreement within `tol`.
    pub fn approx_eq(&self, other: &Configuration, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .points
                .iter()
                .zip(other.points.iter())
                .all(|(a, b)| a.approx_eq(b, tol))
    }

    /// Applies a permutation: particle `i` of the result is particle
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Configuration> {
        if perm.len() != self.len() {
            return Err(Error::TooFewParticles {
                min: self.len(),
                got: perm.len(),
            });
        }
        Configuration::new(perm.iter().map(|&j| self.points[j].clone()).collect())
    }
}

/// An element of the product tangent space at a configuration: one ambient
/// tangent vector per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigTangent {
    base: Configuration,
    vecs: Vec<DVector<f64>>,
}

impl ConfigTangent {
    pub fn new(base: Configuration, vecs: Vec<DVector<f64>>) -> Result<Self> {
        if vecs.len() != base.len() {
            return Err(Error::TooFewParticles {
                min: base.len(),
                got: vecs.len(),
            });
        }
        let m = base.manifold();
        for (p, v) in base.points().iter().zip(vecs.iter()) {
            let res = m.tangency_residual(p.coords(), v);
            if res > crate::geometry::TANGENT_TOL {
                return Err(Error::NotTangent(res));
            }
        }
        Ok(ConfigTangent { base, vecs })
    }

    pub(crate) fn new_unchecked(base: Configuration, vecs: Vec<DVector<f64>>) -> Self {
        ConfigTangent { base, vecs }
    }

    pub fn base(&self) -> &Configuration {
        &self.base
    }

    pub fn vecs(&self) -> &[DVector<f64>] {
        &self.vecs
    }

    pub fn component(&self, i: usize) -> Tangent {
        Tangent::new(self.base.point(i).clone(), self.vecs[i].clone())
            .expect("stored component is tangent by construction")
    }

    /// Norm in the product metric, `sqrt((1/N) sum_i g(v_i, v_i))`.
    pub fn norm(&self) -> f64 {
        config_inner(self, self).expect("same base").max(0.0).sqrt()
    }

    /// Largest single-particle metric norm.
    pub fn max_component_norm(&self) -> f64 {
        let m = self.base.manifold();
        self.vecs
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(m.pairing(v, v).max(0.0).sqrt()))
    }
}

/// Product-metric inner product `(1/N) sum_i g(u_i, v_i)`. The tangents must
/// be based at the same configuration (coordinates within `1e-10`).
pub fn config_inner(u: &ConfigTangent, v: &ConfigTangent) -> Result<f64> {
    if !u.base.approx_eq(&v.base, BASE_MATCH_TOL) {
        return Err(Error::BaseMismatch);
    }
    let m = u.base.manifold();
    let mut acc = 0.0;
    for (a, b) in u.vecs.iter().zip(v.vecs.iter()) {
        acc += m.pairing(a, b);
    }
    Ok(acc / u.base.len() as f64)
}

/// Visits every ordered pair `(i, j)`, `i != j`, with the pair distance and
/// the influence vector `log_{x_i}(x_j)`. The distance is computed once per
/// unordered pair, so `d_ij == d_ji` exactly.
pub(crate) fn for_each_directed_pair(
    c: &Configuration,
    mut sink: impl FnMut(usize, usize, f64, &DVector<f64>),
) {
    let m = c.manifold();
    let n = c.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let xi = c.points[i].coords();
            let xj = c.points[j].coords();
            let d = m.distance_raw(xi, xj);
            let wij = m.log_raw(xi, xj);
            sink(i, j, d, &wij);
            let wji = m.log_raw(xj, xi);
            sink(j, i, d, &wji);
        }
    }
}

/// Interaction velocity field `f_i = (1/N) sum_{j != i} phi(d_ij) w_ij`.
/// On spheres, antipodal pairs contribute zero (the influence vector is zero
/// on the cut locus).
pub fn velocity_field(kernel: &RadialKernel, config: &Configuration) -> Result<ConfigTangent> {
    let n = config.len();
    if n < 2 {
        return Err(Error::TooFewParticles { min: 2, got: n });
    }
    let a = config.manifold().ambient_dim();
    let mut vecs = vec![DVector::zeros(a); n];
    for_each_directed_pair(config, |i, _j, d, w| {
        let phi = kernel.value_at(d);
        if phi != 0.0 {
            vecs[i].axpy(phi, w, 1.0);
        }
    });
    let scale = 1.0 / n as f64;
    for v in &mut vecs {
        *v *= scale;
    }
    Ok(ConfigTangent::new_unchecked(config.clone(), vecs))
}

/// Time-stepping schemes on the product manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `x_i <- exp_{x_i}(h f_i)`; first order.
    GeodesicEuler,
    /// Heun variant: average of the Euler tangent and the tangent-projected
    /// field at the Euler predictor, then one exponential; second order.
    GeodesicHeun,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::GeodesicEuler => write!(f, "geodesic-euler"),
            Scheme::GeodesicHeun => write!(f, "geodesic-heun"),
        }
    }
}

/// One time step of size `h > 0`.
pub fn step(
    kernel: &RadialKernel,
    config: &Configuration,
    h: f64,
    scheme: Scheme,
) -> Result<Configuration> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidStep(h));
    }
    let m = config.manifold();
    let f = velocity_field(kernel, config)?;
    let euler = |cfg: &Configuration, field: &ConfigTangent, scale: f64| {
        let points = cfg
            .points()
            .iter()
            .zip(field.vecs().iter())
            .map(|(p, v)| Point::new_unchecked(m, m.exp_raw(p.coords(), &(v * scale))))
            .collect();
        Configuration {
            manifold: m,
            points,
        }
    };
    match scheme {
        Scheme::GeodesicEuler => Ok(euler(config, &f, h)),
        Scheme::GeodesicHeun => {
            let predictor = euler(config, &f, h);
            let f_pred = velocity_field(kernel, &predictor)?;
            let vecs: Vec<DVector<f64>> = config
                .points()
                .iter()
                .zip(f.vecs().iter().zip(f_pred.vecs().iter()))
                .map(|(p, (v0, v1))| {
                    let back = m.project_raw(p.coords(), v1);
                    (v0 + back) * 0.5
                })
                .collect();
            let avg = ConfigTangent::new_unchecked(config.clone(), vecs);
            Ok(euler(config, &avg, h))
        }
    }
}

/// A discrete trajectory: states at the uniform grid `t_k = k h`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Configuration>,
}

/// Integrates from `initial` to (at least) `t_final` with uniform steps `h`,
/// recording every grid state including the initial one.
pub fn simulate(
    kernel: &RadialKernel,
    initial: &Configuration,
    t_final: f64,
    h: f64,
    scheme: Scheme,
) -> Result<Trajectory> {
    if !(h > 0.0 && h.is_finite()) || !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidStep(h.min(t_final)));
    }
    let steps = ((t_final / h) - 1e-9).ceil().max(0.0) as usize;
    let mut states = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    states.push(initial.clone());
    times.push(0.0);
    let mut current = initial.clone();
    for k in 1..=steps {
        current = step(kernel, &current, h, scheme)?;
        states.push(current.clone());
        times.push(k as f64 * h);
    }
    Ok(Trajectory { times, states })
}

/// What to record from each sampled trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservationPlan {
    /// Only the initial configuration (time 0).
    InitialOnly,
    /// Integrate to `t_final` with step `h` and keep every `stride`-th grid
    /// state (times `0, stride*h, 2*stride*h, ...`).
    TrajectoryGrid {
        t_final: f64,
        h: f64,
        stride: usize,
        scheme: Scheme,
    },
}

impl ObservationPlan {
    fn describe(&self) -> String {
        match self {
            ObservationPlan::InitialOnly => "initial-only".to_string(),
            ObservationPlan::TrajectoryGrid {
                t_final,
                h,
                stride,
                scheme,
            } => format!("grid(t_final={t_final}, h={h}, stride={stride}, scheme={scheme})"),
        }
    }
}

/// Provenance of a dataset; serialized as the directory manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub manifold: ManifoldSpec,
    pub n_particles: usize,
    pub num_trajectories: usize,
    pub samples_per_trajectory: usize,
    pub law: String,
    pub observation: String,
    pub kernel: String,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Flattened observation set: sample `s` of trajectory `m` sits at index
/// `m * samples_per_trajectory + s`.
#[derive(Debug, Clone)]
pub struct TrajectoryDataset {
    pub configs: Vec<Configuration>,
    pub velocities: Vec<ConfigTangent>,
    pub times: Vec<f64>,
    pub meta: DatasetMeta,
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

/// Draws `num_trajectories` initial states from `spec`, observes them per
/// `obs`, and records exact velocity-field values perturbed by ambient
/// Gaussian noise of scale `noise_sd` projected to each tangent space.
///
/// Trajectory `m` uses the RNG stream `(seed, m)`; the result is bit-identical
/// for a given seed regardless of thread count.
pub fn generate_dataset(
    spec: &DistributionSpec,
    kernel: &RadialKernel,
    obs: ObservationPlan,
    num_trajectories: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if num_trajectories == 0 {
        return Err(Error::EmptySamples);
    }
    let per_traj: Vec<Result<Vec<(f64, Configuration, ConfigTangent)>>> = (0..num_trajectories)
        .into_par_iter()
        .map(|m| {
            let mut rng = substream(seed, m as u64);
            let initial = sample_configuration(spec, &mut rng)?;
            let sampled: Vec<(f64, Configuration)> = match obs {
                ObservationPlan::InitialOnly => vec![(0.0, initial)],
                ObservationPlan::TrajectoryGrid {
                    t_final,
                    h,
                    stride,
                    scheme,
                } => {
                    let stride = stride.max(1);
                    let traj = simulate(kernel, &initial, t_final, h, scheme)?;
                    traj.times
                        .iter()
                        .zip(traj.states.iter())
                        .enumerate()
                        .filter(|(k, _)| k % stride == 0)
                        .map(|(_, (t, s))| (*t, s.clone()))
                        .collect()
                }
            };
            sampled
                .into_iter()
                .map(|(t, cfg)| {
                    let mut vel = velocity_field(kernel, &cfg)?;
                    if noise_sd > 0.0 {
                        let man = cfg.manifold();
                        let a = man.ambient_dim();
                        for (p, v) in cfg.points().iter().zip(vel.vecs.iter_mut()) {
                            let g = DVector::from_fn(a, |_, _| {
                                rng.sample::<f64, _>(StandardNormal)
                            });
                            let noise = man.project_raw(p.coords(), &g);
                            v.axpy(noise_sd, &noise, 1.0);
                        }
                    }
                    Ok((t, cfg, vel))
                })
                .collect()
        })
        .collect();

    let mut configs = Vec::new();
    let mut velocities = Vec::new();
    let mut times = Vec::new();
    let mut samples_per_trajectory = 0;
    for block in per_traj {
        let block = block?;
        samples_per_trajectory = block.len();
        for (t, cfg, vel) in block {
            times.push(t);
            configs.push(cfg);
            velocities.push(vel);
        }
    }
    let meta = DatasetMeta {
        manifold: spec.manifold(),
        n_particles: spec.n_particles(),
        num_trajectories,
        samples_per_trajectory,
        law: spec.describe(),
        observation: obs.describe(),
        kernel: kernel.describe(),
        noise_sd,
        seed,
    };
    Ok(TrajectoryDataset {
        configs,
        velocities,
        times,
        meta,
    })
}

/// Finite-difference velocity `v_i = log_{x_i}(y_i) / h` between consecutive
/// states; first-order consistent with the exact field.
pub fn finite_difference_velocity(
    from: &Configuration,
    to: &Configuration,
    h: f64,
) -> Result<ConfigTangent> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidStep(h));
    }
    if from.manifold() != to.manifold() || from.len() != to.len() {
        return Err(Error::ManifoldMismatch(from.manifold(), to.manifold()));
    }
    let m = from.manifold();
    let vecs = from
        .points()
        .iter()
        .zip(to.points().iter())
        .map(|(p, q)| m.log_raw(p.coords(), q.coords()) / h)
        .collect();
    Ok(ConfigTangent::new_unchecked(from.clone(), vecs))
}

/// The regular `(n+2)`-vertex simplex inscribed in `S^n`: unit vectors with
/// `sum_i v_i = 0` and constant pairwise inner product `-1/(n+1)`, so all
/// pairwise distances equal `arccos(-1/(n+1))` and every radial-kernel
/// velocity field vanishes by symmetry (each particle's influence vectors sum
/// to a multiple of the projected centroid, which is zero).
pub fn regular_simplex(n: usize) -> Result<Configuration> {
    let m = ManifoldSpec::sphere(n)?;
    let big = n + 2;
    // Centered basis vectors of R^{n+2}, mapped to the hyperplane 1^perp via
    // the Helmert orthonormal rows, then normalized.
    let mut points = Vec::with_capacity(big);
    for i in 0..big {
        let mut u = DVector::from_element(big, -1.0 / big as f64);
        u[i] += 1.0;
        let mut coords = DVector::zeros(n + 1);
        for k in 1..big {
            // Helmert row k: (1,...,1, -k, 0, ...)/sqrt(k(k+1)), k ones.
            let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
            let mut acc = 0.0;
            for j in 0..k {
                acc += u[j];
            }
            acc -= k as f64 * u[k];
            coords[k - 1] = acc * scale;
        }
        coords /= coords.norm();
        points.push(Point::new(m, coords)?);
    }
    Configuration::new(points)
}

// ---------------------------------------------------------------------------
// Dataset directory serialization
// ---------------------------------------------------------------------------

/// Writes `manifest.json` plus one `traj_NNNN.csv` per trajectory with rows
/// `time, particle, <ambient coords>, <velocity coords>`. Floats use the
/// shortest round-trip decimal form, so write/read is lossless.
pub fn write_dataset_dir(ds: &TrajectoryDataset, dir: &Path) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Serialization(e.to_string());
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let manifest = serde_json::to_string_pretty(&ds.meta)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), manifest + "\n").map_err(io_err)?;
    let a = ds.meta.manifold.ambient_dim();
    let spt = ds.meta.samples_per_trajectory.max(1);
    for m in 0..ds.meta.num_trajectories {
        let mut out = String::new();
        out.push_str("time,particle");
        for k in 0..a {
            let _ = write!(out, ",x{k}");
        }
        for k in 0..a {
            let _ = write!(out, ",v{k}");
        }
        out.push('\n');
        for s in 0..spt {
            let idx = m * spt + s;
            let cfg = &ds.configs[idx];
            let vel = &ds.velocities[idx];
            for i in 0..cfg.len() {
                let _ = write!(out, "{},{}", ds.times[idx], i);
                for c in cfg.point(i).coords().iter() {
                    let _ = write!(out, ",{c}");
                }
                for c in vel.vecs()[i].iter() {
                    let _ = write!(out, ",{c}");
                }
                out.push('\n');
            }
        }
        std::fs::write(dir.join(format!("traj_{m:04}.csv")), out).map_err(io_err)?;
    }
    Ok(())
}

/// Reads a directory produced by [`write_dataset_dir`].
pub fn read_dataset_dir(dir: &Path) -> Result<TrajectoryDataset> {
    let io_err = |e: std::io::Error| Error::Serialization(e.to_string());
    let manifest = std::fs::read_to_string(dir.join("manifest.json")).map_err(io_err)?;
    let meta: DatasetMeta =
        serde_json::from_str(&manifest).map_err(|e| Error::Serialization(e.to_string()))?;
    let m = meta.manifold;
    let a = m.ambient_dim();
    let mut configs = Vec::new();
    let mut velocities = Vec::new();
    let mut times = Vec::new();
    for t in 0..meta.num_trajectories {
        let text = std::fs::read_to_string(dir.join(format!("traj_{t:04}.csv"))).map_err(io_err)?;
        let mut lines = text.lines();
        let _header = lines.next();
        let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 + 2 * a {
                return Err(Error::Serialization(format!(
                    "trajectory {t}: expected {} fields, got {}",
                    2 + 2 * a,
                    fields.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Serialization(format!("bad float {s:?}: {e}")))
            };
            let time = parse(fields[0])?;
            let rest: Result<Vec<f64>> = fields[2..].iter().map(|s| parse(s)).collect();
            rows.push((time, rest?));
        }
        if !rows.len().is_multiple_of(meta.n_particles) {
            return Err(Error::Serialization(format!(
                "trajectory {t}: row count {} not divisible by N={}",
                rows.len(),
                meta.n_particles
            )));
        }
        for chunk in rows.chunks(meta.n_particles) {
            let points: Result<Vec<Point>> = chunk
                .iter()
                .map(|(_, row)| Point::new(m, DVector::from_column_slice(&row[..a])))
                .collect();
            let cfg = Configuration::new(points?)?;
            let vecs: Vec<DVector<f64>> = chunk
                .iter()
                .map(|(_, row)| DVector::from_column_slice(&row[a..]))
                .collect();
            let vel = ConfigTangent::new(cfg.clone(), vecs)?;
            times.push(chunk[0].0);
            configs.push(cfg);
            velocities.push(vel);
        }
    }
    Ok(TrajectoryDataset {
        configs,
        velocities,
        times,
        meta,
    })
}
