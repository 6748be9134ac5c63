//! Configuration distributions and the empirical pairwise-distance measure.
//!
//! For an exchangeable configuration law, the distance measure weights each
//! unordered particle pair by the squared distance: a bin `[a, b)` receives
//! `(1/(M N (N-1))) sum over sampled ordered pairs with d in [a, b) of d^2`.
//! This is the measure in which kernel estimation errors are naturally
//! controlled, because the interaction term `phi(d) w` has metric norm
//! `|phi(d)| d`. The raw (unweighted) pair-count histogram is kept alongside
//! for density diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::{step, Configuration, Scheme};
use crate::geometry::{haar_orthogonal, sample_point, ManifoldKind, ManifoldSpec, Point, PointLaw};
use crate::kernels::RadialKernel;
use crate::{Error, Result};

/// Above this many stored pairwise distances, [`estimate_rho`] keeps only the
/// histogram and inner products fall back to bin midpoints.
const PAIR_STORAGE_LIMIT: usize = 10_000_000;

/// How a configuration is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistributionKind {
    /// All particles independent with the same single-particle law.
    IidProduct { law: PointLaw },
    /// Each particle independently draws a component (by weight) and then a
    /// point from it; equivalently, iid from the mixture density.
    MixtureIid { components: Vec<MixtureComponent> },
    /// Draw an initial configuration from `base`, integrate the dynamics for
    /// a uniformly random number of steps on the grid `0, h, ..., ceil(t_final/h) h`,
    /// and return the reached state.
    TrajectoryInduced {
        base: Box<DistributionSpec>,
        kernel: RadialKernel,
        t_final: f64,
        h: f64,
        scheme: Scheme,
    },
    /// A fixed configuration, optionally conjugated by a Haar-random isometry
    /// fixing the origin (a rotation), which preserves all pair distances.
    Singular {
        config: Configuration,
        random_rotation: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub law: PointLaw,
}

/// A validated configuration law: manifold, particle count, and sampling rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpecWire", into = "DistributionSpecWire")]
pub struct DistributionSpec {
    manifold: ManifoldSpec,
    n_particles: usize,
    kind: DistributionKind,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistributionSpecWire {
    manifold: ManifoldSpec,
    n_particles: usize,
    kind: DistributionKind,
}

impl TryFrom<DistributionSpecWire> for DistributionSpec {
    type Error = Error;

    fn try_from(w: DistributionSpecWire) -> Result<Self> {
        DistributionSpec::new(w.manifold, w.n_particles, w.kind)
    }
}

impl From<DistributionSpec> for DistributionSpecWire {
    fn from(s: DistributionSpec) -> Self {
        DistributionSpecWire {
            manifold: s.manifold,
            n_particles: s.n_particles,
            kind: s.kind,
        }
    }
}

impl DistributionSpec {
    pub fn new(manifold: ManifoldSpec, n_particles: usize, kind: DistributionKind) -> Result<Self> {
        if n_particles < 2 {
            return Err(Error::TooFewParticles {
                min: 2,
                got: n_particles,
            });
        }
        match &kind {
            DistributionKind::IidProduct { law } => law.check_compatible(manifold)?,
            DistributionKind::MixtureIid { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if components.is_empty()
                    || components.iter().any(|c| !c.weight.is_finite() || c.weight < 0.0)
                    || (total - 1.0).abs() > 1e-12
                {
                    return Err(Error::BadMixtureWeights(total));
                }
                for c in components {
                    c.law.check_compatible(manifold)?;
                }
            }
            DistributionKind::TrajectoryInduced {
                base,
                kernel,
                t_final,
                h,
                ..
            } => {
                if base.manifold != manifold || base.n_particles != n_particles {
                    return Err(Error::ManifoldMismatch(manifold, base.manifold));
                }
                if !(*h > 0.0 && h.is_finite() && *t_final >= 0.0 && t_final.is_finite()) {
                    return Err(Error::InvalidStep(h.min(*t_final)));
                }
                kernel.support_radius();
            }
            DistributionKind::Singular { config, .. } => {
                if config.manifold() != manifold {
                    return Err(Error::ManifoldMismatch(manifold, config.manifold()));
                }
                if config.len() != n_particles {
                    return Err(Error::TooFewParticles {
                        min: n_particles,
                        got: config.len(),
                    });
                }
            }
        }
        Ok(DistributionSpec {
            manifold,
            n_particles,
            kind,
        })
    }

    pub fn manifold(&self) -> ManifoldSpec {
        self.manifold
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    /// True when particles are iid (possibly from a mixture density), which
    /// triple-sampling estimators require.
    pub fn is_iid_product(&self) -> bool {
        matches!(
            self.kind,
            DistributionKind::IidProduct { .. } | DistributionKind::MixtureIid { .. }
        )
    }

    pub fn describe(&self) -> String {
        let inner = match &self.kind {
            DistributionKind::IidProduct { law } => format!("iid {law}"),
            DistributionKind::MixtureIid { components } => {
                let parts: Vec<String> = components
                    .iter()
                    .map(|c| format!("{}*{}", c.weight, c.law))
                    .collect();
                format!("iid mixture[{}]", parts.join(" + "))
            }
            DistributionKind::TrajectoryInduced {
                base, t_final, h, ..
            } => format!(
                "trajectory-induced(base={}, t_final={t_final}, h={h})",
                base.describe()
            ),
            DistributionKind::Singular {
                random_rotation, ..
            } => format!("singular(random_rotation={random_rotation})"),
        };
        format!("{} particles on {}: {}", self.n_particles, self.manifold, inner)
    }
}

fn random_rotation_matrix<R: Rng + ?Sized>(
    m: ManifoldSpec,
    rng: &mut R,
) -> nalgebra::DMatrix<f64> {
    match m.kind {
        ManifoldKind::Sphere => haar_orthogonal(m.ambient_dim(), rng),
        ManifoldKind::Euclidean => haar_orthogonal(m.dim, rng),
        ManifoldKind::Hyperbolic => {
            // Spatial rotation fixing the apex: block diag(1, Q).
            let n = m.dim;
            let q = haar_orthogonal(n, rng);
            let mut out = nalgebra::DMatrix::zeros(n + 1, n + 1);
            out[(0, 0)] = 1.0;
            out.view_mut((1, 1), (n, n)).copy_from(&q);
            out
        }
    }
}

/// Draws one configuration from `spec`.
pub fn sample_configuration<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    rng: &mut R,
) -> Result<Configuration> {
    let m = spec.manifold;
    match &spec.kind {
        DistributionKind::IidProduct { law } => Configuration::new(
            (0..spec.n_particles)
                .map(|_| sample_point(m, law, rng))
                .collect::<Result<_>>()?,
        ),
        DistributionKind::MixtureIid { components } => Configuration::new(
            (0..spec.n_particles)
                .map(|_| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut chosen = &components[components.len() - 1].law;
                    for c in components {
                        acc += c.weight;
                        if u < acc {
                            chosen = &c.law;
                            break;
                        }
                    }
                    sample_point(m, chosen, rng)
                })
                .collect::<Result<_>>()?,
        ),
        DistributionKind::TrajectoryInduced {
            base,
            kernel,
            t_final,
            h,
            scheme,
        } => {
            let mut cfg = sample_configuration(base, rng)?;
            let steps = ((t_final / h) - 1e-9).ceil().max(0.0) as usize;
            let k = rng.random_range(0..=steps);
            for _ in 0..k {
                cfg = step(kernel, &cfg, *h, *scheme)?;
            }
            Ok(cfg)
        }
        DistributionKind::Singular {
            config,
            random_rotation,
        } => {
            if !random_rotation {
                return Ok(config.clone());
            }
            let q = random_rotation_matrix(m, rng);
            let points: Result<Vec<Point>> = config
                .points()
                .iter()
                .map(|p| Point::new(m, &q * p.coords()))
                .collect();
            Configuration::new(points?)
        }
    }
}

/// Upper-triangle pairwise distances `(i < j)` in row-major order.
pub fn pairwise_distances(config: &Configuration) -> Vec<f64> {
    let m = config.manifold();
    let n = config.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(m.distance_raw(config.point(i).coords(), config.point(j).coords()));
        }
    }
    out
}

/// The empirical distance measure of a configuration sample on `[0, R)`,
/// with uniform bins plus an overflow tally for distances `>= R`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRho {
    support_radius: f64,
    num_bins: usize,
    /// d^2-weighted mass per bin (ordered-pair normalization).
    bin_mass: Vec<f64>,
    /// Unweighted pair-probability mass per bin.
    bin_count: Vec<f64>,
    overflow_mass: f64,
    overflow_count: f64,
    sample_count: usize,
    n_particles: usize,
    /// All pair distances, sorted within each configuration then concatenated
    /// in sample order; absent above [`PAIR_STORAGE_LIMIT`].
    pair_distances: Option<Vec<f64>>,
}

/// Summary serialized next to the histogram CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoMeta {
    pub support_radius: f64,
    pub num_bins: usize,
    pub sample_count: usize,
    pub n_particles: usize,
    pub total_mass: f64,
    pub overflow_mass: f64,
    pub overflow_fraction: f64,
    pub pair_exact: bool,
}

impl EmpiricalRho {
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn bin_width(&self) -> f64 {
        self.support_radius / self.num_bins as f64
    }

    pub fn bin_edges(&self, b: usize) -> (f64, f64) {
        let w = self.bin_width();
        (b as f64 * w, (b + 1) as f64 * w)
    }

    pub fn bin_mass(&self) -> &[f64] {
        &self.bin_mass
    }

    pub fn bin_count(&self) -> &[f64] {
        &self.bin_count
    }

    /// Total d^2-weighted mass inside `[0, R)`.
    pub fn total_mass(&self) -> f64 {
        self.bin_mass.iter().sum()
    }

    pub fn overflow_mass(&self) -> f64 {
        self.overflow_mass
    }

    /// Fraction of pairs at distance `>= R`.
    pub fn overflow_fraction(&self) -> f64 {
        self.overflow_count
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn pair_exact(&self) -> bool {
        self.pair_distances.is_some()
    }

    pub fn pair_distances(&self) -> Option<&[f64]> {
        self.pair_distances.as_deref()
    }

    /// d^2-weighted density (mass / bin width) per bin.
    pub fn mass_density(&self) -> Vec<f64> {
        let w = self.bin_width();
        self.bin_mass.iter().map(|m| m / w).collect()
    }

    /// Unweighted pair-distance probability density per bin.
    pub fn count_density(&self) -> Vec<f64> {
        let w = self.bin_width();
        self.bin_count.iter().map(|m| m / w).collect()
    }

    /// `integral f g drho`, pair-exact when distances are stored, otherwise
    /// a bin-midpoint sum. Both kernels must be supported inside `[0, R]`.
    pub fn inner(&self, f: &RadialKernel, g: &RadialKernel) -> Result<f64> {
        for k in [f, g] {
            if k.support_radius() > self.support_radius + 1e-12 {
                return Err(Error::SupportExceedsRadius {
                    support: k.support_radius(),
                    radius: self.support_radius,
                });
            }
        }
        match &self.pair_distances {
            Some(dists) => {
                let m = self.sample_count as f64;
                let n = self.n_particles as f64;
                let w = 2.0 / (m * n * (n - 1.0));
                let mut acc = 0.0;
                for &d in dists {
                    let fv = f.value_at(d);
                    if fv != 0.0 {
                        let gv = g.value_at(d);
                        if gv != 0.0 {
                            acc += fv * gv * d * d * w;
                        }
                    }
                }
                Ok(acc)
            }
            None => {
                let w = self.bin_width();
                let mut acc = 0.0;
                for (b, mass) in self.bin_mass.iter().enumerate() {
                    if *mass != 0.0 {
                        let mid = (b as f64 + 0.5) * w;
                        acc += f.value_at(mid) * g.value_at(mid) * mass;
                    }
                }
                Ok(acc)
            }
        }
    }

    /// `sqrt(<f - g, f - g>)` in this measure.
    pub fn distance_between(&self, f: &RadialKernel, g: &RadialKernel) -> Result<f64> {
        let ff = self.inner(f, f)?;
        let fg = self.inner(f, g)?;
        let gg = self.inner(g, g)?;
        Ok((ff - 2.0 * fg + gg).max(0.0).sqrt())
    }

    pub fn meta(&self) -> RhoMeta {
        RhoMeta {
            support_radius: self.support_radius,
            num_bins: self.num_bins,
            sample_count: self.sample_count,
            n_particles: self.n_particles,
            total_mass: self.total_mass(),
            overflow_mass: self.overflow_mass,
            overflow_fraction: self.overflow_count,
            pair_exact: self.pair_exact(),
        }
    }

    /// Histogram rows: `bin_left,bin_right,mass,mass_density,count_density`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("bin_left,bin_right,mass,mass_density,count_density\n");
        let md = self.mass_density();
        let cd = self.count_density();
        for b in 0..self.num_bins {
            let (l, r) = self.bin_edges(b);
            let _ = writeln!(out, "{l},{r},{},{},{}", self.bin_mass[b], md[b], cd[b]);
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json` under `dir`.
    pub fn write_artifacts(&self, dir: &Path, stem: &str) -> Result<()> {
        let io_err = |e: std::io::Error| Error::Serialization(e.to_string());
        std::fs::create_dir_all(dir).map_err(io_err)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv_string()).map_err(io_err)?;
        let meta = serde_json::to_string_pretty(&self.meta())
            .map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(dir.join(format!("{stem}.json")), meta + "\n").map_err(io_err)?;
        Ok(())
    }
}

/// Estimates the distance measure from sampled configurations.
///
/// Distances are sorted within each configuration before accumulation, so the
/// result is bit-identical under particle relabeling.
pub fn estimate_rho(
    samples: &[Configuration],
    support_radius: f64,
    num_bins: usize,
) -> Result<EmpiricalRho> {
    estimate_rho_with_limit(samples, support_radius, num_bins, PAIR_STORAGE_LIMIT)
}

pub(crate) fn estimate_rho_with_limit(
    samples: &[Configuration],
    support_radius: f64,
    num_bins: usize,
    pair_limit: usize,
) -> Result<EmpiricalRho> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(support_radius > 0.0 && support_radius.is_finite()) {
        return Err(Error::NegativeRadius(support_radius));
    }
    let num_bins = num_bins.max(1);
    let manifold = samples[0].manifold();
    let n = samples[0].len();
    for s in samples {
        if s.manifold() != manifold {
            return Err(Error::ManifoldMismatch(manifold, s.manifold()));
        }
        if s.len() != n {
            return Err(Error::TooFewParticles {
                min: n,
                got: s.len(),
            });
        }
    }
    let m = samples.len();
    let total_pairs = m * n * (n - 1) / 2;
    let keep_pairs = total_pairs <= pair_limit;
    let weight = 2.0 / (m as f64 * n as f64 * (n as f64 - 1.0));
    let inv_width = num_bins as f64 / support_radius;

    let mut bin_mass = vec![0.0; num_bins];
    let mut bin_count = vec![0.0; num_bins];
    let mut overflow_mass = 0.0;
    let mut overflow_count = 0.0;
    let mut stored = keep_pairs.then(|| Vec::with_capacity(total_pairs));

    let mut scratch = Vec::with_capacity(n * (n - 1) / 2);
    for cfg in samples {
        scratch.clear();
        scratch.extend(pairwise_distances(cfg));
        scratch.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
        for &d in &scratch {
            if d < support_radius {
                let b = ((d * inv_width) as usize).min(num_bins - 1);
                bin_mass[b] += d * d * weight;
                bin_count[b] += weight;
            } else {
                overflow_mass += d * d * weight;
                overflow_count += weight;
            }
        }
        if let Some(v) = stored.as_mut() {
            v.extend_from_slice(&scratch);
        }
    }

    Ok(EmpiricalRho {
        support_radius,
        num_bins,
        bin_mass,
        bin_count,
        overflow_mass,
        overflow_count,
        sample_count: m,
        n_particles: n,
        pair_distances: stored,
    })
}
