//! Monte Carlo estimation of the interaction operator's Gram matrix and the
//! induced spectral bounds.
//!
//! For basis elements `phi_k`, the operator Gram is
//! `G_kl = E[(1/N) sum_i g(F_k,i(X), F_l,i(X))]` where `F_k,i` is the velocity
//! field driven by `phi_k`, and the distance-measure Gram is
//! `Bm_kl = E[(1/(N(N-1))) sum over ordered pairs of phi_k(d) phi_l(d) d^2]`.
//! The generalized eigenvalues `lambda(G, Bm)` always satisfy
//! `(N-1)/N^2 <= lambda <= ((N-1)/N)^2`; the lower bound is the coercivity
//! constant floor and the upper one follows from Cauchy-Schwarz.
//!
//! For iid particles the decomposition
//! `G_kl = (N-1)/N^2 Bm_kl + (N-1)(N-2)/N^2 C_kl` splits off the triple
//! cross term `C_kl = E[phi_k(d(x,y)) phi_l(d(x,z)) g(w(x,y), w(x,z))]`
//! with `x, y, z` iid; `C` is estimated here by direct triple sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::for_each_directed_pair;
use crate::geometry::{sample_point, Point};
use crate::kernels::{BasisSpec, RadialKernel};
use crate::measure::{sample_configuration, DistributionKind, DistributionSpec};
use crate::rng::substream;
use crate::{Error, Result};

/// Number of contiguous sample blocks kept for jackknife standard errors.
const JACKKNIFE_BLOCKS: usize = 10;

/// Relative threshold below which a rho-Gram diagonal entry marks a basis
/// element as unsupported by the data.
const EMPTY_DIAG_REL: f64 = 1e-10;

/// Paired Monte Carlo sums for the operator Gram `G` and rho-Gram `Bm`,
/// retained per block so leave-one-block-out spectra are cheap.
#[derive(Debug, Clone)]
pub struct GramPair {
    basis: BasisSpec,
    sum_g: DMatrix<f64>,
    sum_bm: DMatrix<f64>,
    block_g: Vec<DMatrix<f64>>,
    block_bm: Vec<DMatrix<f64>>,
    block_sizes: Vec<usize>,
    sample_count: usize,
    n_particles: usize,
    seed: u64,
}

impl GramPair {
    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    /// Mean operator Gram over all samples.
    pub fn g(&self) -> DMatrix<f64> {
        &self.sum_g / self.sample_count as f64
    }

    /// Mean rho-Gram over all samples.
    pub fn bm(&self) -> DMatrix<f64> {
        &self.sum_bm / self.sample_count as f64
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Per-configuration Gram contributions.
fn sample_grams(
    cfg: &crate::dynamics::Configuration,
    basis: &BasisSpec,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = cfg.manifold();
    let k_n = basis.num_elements();
    let n = cfg.len();
    let a = m.ambient_dim();
    let mut fields = vec![DVector::zeros(a); k_n * n];
    let mut bm = DMatrix::zeros(k_n, k_n);
    for_each_directed_pair(cfg, |i, _j, d, w| {
        let mut buf = [(0usize, 0.0f64); 4];
        let mut nb = 0;
        basis.accumulate(d, |k, v| {
            buf[nb] = (k, v);
            nb += 1;
        });
        let d2 = d * d;
        for &(k, vk) in &buf[..nb] {
            fields[k * n + i].axpy(vk, w, 1.0);
            for &(l, vl) in &buf[..nb] {
                bm[(k, l)] += vk * vl * d2;
            }
        }
    });
    let inv_n = 1.0 / n as f64;
    for f in &mut fields {
        *f *= inv_n;
    }
    let mut g = DMatrix::zeros(k_n, k_n);
    for i in 0..n {
        for k in 0..k_n {
            let fk = &fields[k * n + i];
            for l in k..k_n {
                g[(k, l)] += m.pairing(fk, &fields[l * n + i]);
            }
        }
    }
    for k in 0..k_n {
        for l in k..k_n {
            let v = g[(k, l)] * inv_n;
            g[(k, l)] = v;
            g[(l, k)] = v;
        }
    }
    bm /= (n * (n - 1)) as f64;
    (g, bm)
}

/// Estimates `G` and `Bm` from `n_samples` configurations drawn from `spec`.
///
/// Sample `s` uses RNG stream `(seed, s)` and contributions are merged in
/// index order, so the result does not depend on the thread count. The basis
/// support must fit inside the manifold's injectivity radius.
pub fn operator_gram(
    spec: &DistributionSpec,
    basis: &BasisSpec,
    n_samples: usize,
    seed: u64,
) -> Result<GramPair> {
    if n_samples == 0 {
        return Err(Error::EmptySamples);
    }
    let m = spec.manifold();
    if basis.support_radius() > m.injectivity_radius() + 1e-9 {
        return Err(Error::SupportExceedsInjectivity {
            support: basis.support_radius(),
            injectivity: m.injectivity_radius(),
        });
    }
    let per: Vec<Result<(DMatrix<f64>, DMatrix<f64>)>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, s as u64);
            let cfg = sample_configuration(spec, &mut rng)?;
            Ok(sample_grams(&cfg, basis))
        })
        .collect();

    let k_n = basis.num_elements();
    let blocks = JACKKNIFE_BLOCKS.min(n_samples);
    let mut sum_g = DMatrix::zeros(k_n, k_n);
    let mut sum_bm = DMatrix::zeros(k_n, k_n);
    let mut block_g = vec![DMatrix::zeros(k_n, k_n); blocks];
    let mut block_bm = vec![DMatrix::zeros(k_n, k_n); blocks];
    let mut block_sizes = vec![0usize; blocks];
    for (s, item) in per.into_iter().enumerate() {
        let (g, bm) = item?;
        let b = (s * blocks / n_samples).min(blocks - 1);
        block_g[b] += &g;
        block_bm[b] += &bm;
        block_sizes[b] += 1;
        sum_g += g;
        sum_bm += bm;
    }
    Ok(GramPair {
        basis: basis.clone(),
        sum_g,
        sum_bm,
        block_g,
        block_bm,
        block_sizes,
        sample_count: n_samples,
        n_particles: spec.n_particles(),
        seed,
    })
}

/// Sorted generalized eigenvalues of the pencil `(g, bm)` with `bm` positive
/// definite, via Cholesky whitening.
pub fn generalized_eigenvalues(g: &DMatrix<f64>, bm: &DMatrix<f64>) -> Result<Vec<f64>> {
    let k_n = bm.nrows();
    let chol = nalgebra::Cholesky::new(bm.clone()).ok_or_else(|| Error::SingularRhoGram {
        elements: (0..k_n).collect(),
    })?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(g)
        .ok_or_else(|| Error::SingularRhoGram {
            elements: (0..k_n).collect(),
        })?;
    let w = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::SingularRhoGram {
            elements: (0..k_n).collect(),
        })?;
    let sym = (&w + w.transpose()) * 0.5;
    let mut eigs: Vec<f64> = nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(eigs)
}

/// Verdict on the spectral sandwich for one Gram pair.
#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub n_particles: usize,
    pub sample_count: usize,
    pub num_elements: usize,
    /// Basis elements dropped because the data never hit their support.
    pub dropped_elements: Vec<usize>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub se_min: f64,
    pub se_max: f64,
    /// `(N-1)/N^2`.
    pub lower_bound: f64,
    /// `((N-1)/N)^2`.
    pub upper_bound: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// Excess coercivity `(lambda_min - lower) N^2 / ((N-1)(N-2))`; absent
    /// for `N = 2`, where the lower bound is attained identically.
    pub c_estimate: Option<f64>,
}

fn submatrix(mat: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(keep.len(), keep.len(), |r, c| mat[(keep[r], keep[c])])
}

/// Computes the generalized spectrum of `(G, Bm)`, jackknife standard errors
/// over sample blocks, and pass/fail verdicts for the spectral sandwich at
/// relative tolerance `tol_mc` plus three standard errors.
pub fn coercivity_report(gp: &GramPair, tol_mc: f64) -> Result<CoercivityReport> {
    let k_n = gp.basis.num_elements();
    let bm = gp.bm();
    let g = gp.g();
    let trace = bm.trace();
    let floor = EMPTY_DIAG_REL * trace.max(f64::MIN_POSITIVE) / k_n as f64;
    let mut keep = Vec::with_capacity(k_n);
    let mut dropped = Vec::new();
    for k in 0..k_n {
        if bm[(k, k)] > floor {
            keep.push(k);
        } else {
            dropped.push(k);
        }
    }
    if keep.is_empty() {
        return Err(Error::SingularRhoGram { elements: dropped });
    }
    let bm_s = submatrix(&bm, &keep);
    let g_s = submatrix(&g, &keep);
    let eigs = generalized_eigenvalues(&g_s, &bm_s).map_err(|_| Error::SingularRhoGram {
        elements: keep.clone(),
    })?;
    let lambda_min = eigs[0];
    let lambda_max = *eigs.last().expect("nonempty");

    // Leave-one-block-out spectra.
    let mut lo_min = Vec::new();
    let mut lo_max = Vec::new();
    for b in 0..gp.block_g.len() {
        let m_rest = gp.sample_count - gp.block_sizes[b];
        if m_rest == 0 {
            continue;
        }
        let scale = 1.0 / m_rest as f64;
        let g_b = (&gp.sum_g - &gp.block_g[b]) * scale;
        let bm_b = (&gp.sum_bm - &gp.block_bm[b]) * scale;
        if let Ok(e) = generalized_eigenvalues(&submatrix(&g_b, &keep), &submatrix(&bm_b, &keep)) {
            lo_min.push(e[0]);
            lo_max.push(*e.last().expect("nonempty"));
        }
    }
    let jackknife_se = |vals: &[f64]| -> f64 {
        let j = vals.len() as f64;
        if vals.len() < 2 {
            return 0.0;
        }
        let mean = vals.iter().sum::<f64>() / j;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        ((j - 1.0) / j * var).sqrt()
    };
    let se_min = jackknife_se(&lo_min);
    let se_max = jackknife_se(&lo_max);

    let n = gp.n_particles as f64;
    let lower_bound = (n - 1.0) / (n * n);
    let upper_bound = ((n - 1.0) / n).powi(2);
    let lower_ok = lambda_min + 3.0 * se_min >= lower_bound * (1.0 - tol_mc);
    let upper_ok = lambda_max - 3.0 * se_max <= upper_bound * (1.0 + tol_mc);
    let c_estimate = (gp.n_particles >= 3)
        .then(|| (lambda_min - lower_bound) * n * n / ((n - 1.0) * (n - 2.0)));

    Ok(CoercivityReport {
        n_particles: gp.n_particles,
        sample_count: gp.sample_count,
        num_elements: k_n,
        dropped_elements: dropped,
        lambda_min,
        lambda_max,
        se_min,
        se_max,
        lower_bound,
        upper_bound,
        lower_ok,
        upper_ok,
        c_estimate,
    })
}

fn sample_single_point<R: Rng + ?Sized>(spec: &DistributionSpec, rng: &mut R) -> Result<Point> {
    let m = spec.manifold();
    match spec.kind() {
        DistributionKind::IidProduct { law } => sample_point(m, law, rng),
        DistributionKind::MixtureIid { components } => {
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
        }
        _ => Err(Error::NotIidTriple(spec.describe())),
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CrossTermEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_triples: usize,
}

/// Estimates `C(f, g) = E[f(d(x,y)) g(d(x,z)) g_x(w(x,y), w(x,z))]` over iid
/// triples from the single-particle law (symmetrized in `y, z`). Requires an
/// iid-product distribution.
pub fn cross_term(
    spec: &DistributionSpec,
    f: &RadialKernel,
    g: &RadialKernel,
    n_triples: usize,
    seed: u64,
) -> Result<CrossTermEstimate> {
    if n_triples == 0 {
        return Err(Error::EmptySamples);
    }
    let raw = triple_geometry(spec, n_triples, seed)?;
    let mut vals = Vec::with_capacity(n_triples);
    for (dxy, dxz, s) in raw {
        let v = 0.5
            * (f.value_at(dxy) * g.value_at(dxz) + f.value_at(dxz) * g.value_at(dxy))
            * s;
        vals.push(v);
    }
    let t = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / t;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0).max(1.0);
    Ok(CrossTermEstimate {
        mean,
        std_error: (var / t).sqrt(),
        n_triples,
    })
}

/// Cross-term matrix over a spline basis: entrywise means and standard
/// errors of `C(phi_k, phi_l)`.
pub fn cross_term_matrix(
    spec: &DistributionSpec,
    basis: &BasisSpec,
    n_triples: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n_triples == 0 {
        return Err(Error::EmptySamples);
    }
    let raw = triple_geometry(spec, n_triples, seed)?;
    let k_n = basis.num_elements();
    let mut sum: DMatrix<f64> = DMatrix::zeros(k_n, k_n);
    let mut sum_sq: DMatrix<f64> = DMatrix::zeros(k_n, k_n);
    let mut contrib: DMatrix<f64> = DMatrix::zeros(k_n, k_n);
    for (dxy, dxz, s) in raw {
        let mut by = [(0usize, 0.0f64); 4];
        let mut nby = 0;
        basis.accumulate(dxy, |k, v| {
            by[nby] = (k, v);
            nby += 1;
        });
        let mut bz = [(0usize, 0.0f64); 4];
        let mut nbz = 0;
        basis.accumulate(dxz, |k, v| {
            bz[nbz] = (k, v);
            nbz += 1;
        });
        contrib.fill(0.0);
        for &(k, vk) in &by[..nby] {
            for &(l, vl) in &bz[..nbz] {
                let half = 0.5 * vk * vl * s;
                contrib[(k, l)] += half;
                contrib[(l, k)] += half;
            }
        }
        for k in 0..k_n {
            for l in 0..k_n {
                let c = contrib[(k, l)];
                sum[(k, l)] += c;
                sum_sq[(k, l)] += c * c;
            }
        }
    }
    let t = n_triples as f64;
    let mean = &sum / t;
    let se = DMatrix::from_fn(k_n, k_n, |k: usize, l: usize| -> f64 {
        let var: f64 = (sum_sq[(k, l)] - sum[(k, l)].powi(2) / t) / (t - 1.0).max(1.0);
        (var.max(0.0) / t).sqrt()
    });
    Ok((mean, se))
}

/// Draws iid triples `(x, y, z)` and returns `(d(x,y), d(x,z),
/// g_x(w(x,y), w(x,z)))` per triple, in stream order.
fn triple_geometry(
    spec: &DistributionSpec,
    n_triples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>> {
    if !spec.is_iid_product() {
        return Err(Error::NotIidTriple(spec.describe()));
    }
    let m = spec.manifold();
    (0..n_triples)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, t as u64);
            let x = sample_single_point(spec, &mut rng)?;
            let y = sample_single_point(spec, &mut rng)?;
            let z = sample_single_point(spec, &mut rng)?;
            let dxy = m.distance_raw(x.coords(), y.coords());
            let dxz = m.distance_raw(x.coords(), z.coords());
            let wxy = m.log_raw(x.coords(), y.coords());
            let wxz = m.log_raw(x.coords(), z.coords());
            Ok((dxy, dxz, m.pairing(&wxy, &wxz)))
        })
        .collect()
}

/// Minimum eigenvalue of a (nearly) symmetric matrix; errors when the
/// asymmetry exceeds `1e-9` times the scale.
pub fn symmetric_min_eigenvalue(mat: &DMatrix<f64>) -> Result<f64> {
    let scale = mat.amax().max(1.0);
    let asym = (mat - mat.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (mat + mat.transpose()) * 0.5;
    Ok(nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ManifoldSpec, PointLaw};
    use crate::kernels::BuiltinKernel;

    fn iid_spec(m: ManifoldSpec, n: usize) -> DistributionSpec {
        let law = match m.kind {
            crate::geometry::ManifoldKind::Sphere => PointLaw::UniformSphere,
            crate::geometry::ManifoldKind::Hyperbolic => PointLaw::UniformHyperbolicBall {
                center: m.origin(),
                radius: 1.0,
            },
            crate::geometry::ManifoldKind::Euclidean => {
                PointLaw::UniformEuclideanCube { lo: 0.0, hi: 1.0 }
            }
        };
        DistributionSpec::new(m, n, DistributionKind::IidProduct { law }).unwrap()
    }

    #[test]
    fn two_particle_gram_is_quarter_rho_gram() {
        let spec = iid_spec(ManifoldSpec::sphere(2).unwrap(), 2);
        let basis = BasisSpec::new(std::f64::consts::PI, 5, 1).unwrap();
        let gp = operator_gram(&spec, &basis, 200, 4).unwrap();
        let g = gp.g();
        let bm = gp.bm();
        let diff = (&g - &bm * 0.25).amax();
        assert!(diff < 1e-12 * bm.amax(), "max deviation {diff}");
        let report = coercivity_report(&gp, 0.1).unwrap();
        assert!((report.lambda_min - 0.25).abs() < 1e-10);
        assert!((report.lambda_max - 0.25).abs() < 1e-10);
        assert!(report.c_estimate.is_none());
        assert!(report.lower_ok && report.upper_ok);
    }

    #[test]
    fn spectrum_respects_universal_sandwich() {
        for (m, n) in [
            (ManifoldSpec::sphere(2).unwrap(), 5usize),
            (ManifoldSpec::hyperbolic(2).unwrap(), 4),
            (ManifoldSpec::euclidean(2).unwrap(), 3),
        ] {
            let spec = iid_spec(m, n);
            let r = match m.kind {
                crate::geometry::ManifoldKind::Sphere => std::f64::consts::PI,
                _ => 2.5,
            };
            let basis = BasisSpec::new(r, 4, 1).unwrap();
            let gp = operator_gram(&spec, &basis, 600, 7).unwrap();
            let report = coercivity_report(&gp, 0.1).unwrap();
            let nf = n as f64;
            // The upper bound is pathwise (Cauchy-Schwarz per configuration)
            // and therefore survives averaging exactly; the lower bound only
            // holds in expectation, so it gets the Monte Carlo allowance.
            assert!(
                report.lambda_max <= ((nf - 1.0) / nf).powi(2) + 1e-9,
                "{m}: lambda_max {}",
                report.lambda_max
            );
            assert!(report.lower_ok && report.upper_ok, "{m}");
        }
    }

    /// With uniformly distributed particles on the sphere the triple cross
    /// term vanishes, so the whole spectrum collapses onto the lower bound.
    #[test]
    fn uniform_sphere_spectrum_collapses_to_lower_bound() {
        let spec = iid_spec(ManifoldSpec::sphere(2).unwrap(), 4);
        let basis = BasisSpec::new(std::f64::consts::PI, 4, 1).unwrap();
        let gp = operator_gram(&spec, &basis, 3000, 11).unwrap();
        let report = coercivity_report(&gp, 0.1).unwrap();
        let lower = 3.0 / 16.0;
        assert!(
            (report.lambda_min - lower).abs() < 0.1 * lower,
            "lambda_min {}",
            report.lambda_min
        );
        assert!(
            (report.lambda_max - lower).abs() < 0.1 * lower,
            "lambda_max {}",
            report.lambda_max
        );
    }

    #[test]
    fn uniform_sphere_cross_term_is_statistically_zero() {
        let spec = iid_spec(ManifoldSpec::sphere(2).unwrap(), 3);
        let f = RadialKernel::builtin(BuiltinKernel::Constant {
            radius: std::f64::consts::PI,
        })
        .unwrap();
        let est = cross_term(&spec, &f, &f, 20_000, 9).unwrap();
        assert!(
            est.mean.abs() <= 3.0 * est.std_error + 1e-12,
            "mean {} se {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn three_particle_decomposition_identity() {
        // G = (2/9) Bm + (2/9) C at N = 3; check within combined Monte Carlo
        // error for a hyperbolic ball law where C is genuinely nonzero.
        let spec = iid_spec(ManifoldSpec::hyperbolic(2).unwrap(), 3);
        let f = RadialKernel::builtin(BuiltinKernel::Constant { radius: 2.5 }).unwrap();
        let basis = BasisSpec::new(2.5, 1, 0).unwrap();
        let gp = operator_gram(&spec, &basis, 6000, 21).unwrap();
        // Degree-0 single element equals the constant kernel on [0, 2.5).
        let g = gp.g()[(0, 0)];
        let bm = gp.bm()[(0, 0)];
        let c = cross_term(&spec, &f, &f, 60_000, 22).unwrap();
        let lhs = g;
        let rhs = 2.0 / 9.0 * bm + 2.0 / 9.0 * c.mean;
        let tol = 2.0 / 9.0 * 3.0 * c.std_error + 0.02 * g.abs();
        assert!((lhs - rhs).abs() < tol, "lhs {lhs} rhs {rhs} tol {tol}");
        assert!(c.mean > 0.0, "ball law should have positive cross term");
    }

    #[test]
    fn cross_term_requires_iid_law() {
        let cfg = crate::dynamics::regular_simplex(2).unwrap();
        let spec = DistributionSpec::new(
            ManifoldSpec::sphere(2).unwrap(),
            4,
            DistributionKind::Singular {
                config: cfg,
                random_rotation: true,
            },
        )
        .unwrap();
        let f = RadialKernel::builtin(BuiltinKernel::Constant {
            radius: std::f64::consts::PI,
        })
        .unwrap();
        assert!(matches!(
            cross_term(&spec, &f, &f, 10, 1),
            Err(Error::NotIidTriple(_))
        ));
    }

    #[test]
    fn zero_kernel_cross_term_vanishes_exactly() {
        let spec = iid_spec(ManifoldSpec::sphere(2).unwrap(), 3);
        let basis = BasisSpec::new(1.0, 3, 1).unwrap();
        let zero = RadialKernel::from_coeffs(
            basis,
            nalgebra::DVector::zeros(3),
        )
        .unwrap();
        let one = RadialKernel::builtin(BuiltinKernel::Constant {
            radius: std::f64::consts::PI,
        })
        .unwrap();
        let est = cross_term(&spec, &zero, &one, 500, 3).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn gram_estimation_is_thread_count_invariant() {
        let spec = iid_spec(ManifoldSpec::sphere(2).unwrap(), 4);
        let basis = BasisSpec::new(std::f64::consts::PI, 6, 2).unwrap();
        let a = operator_gram(&spec, &basis, 300, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| operator_gram(&spec, &basis, 300, 5).unwrap());
        assert_eq!(a.sum_g, b.sum_g);
        assert_eq!(a.sum_bm, b.sum_bm);
        for (x, y) in a.block_g.iter().zip(b.block_g.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn unsupported_elements_are_dropped_not_fatal() {
        // Concentrated law: all particles inside a ball of radius ~0.6, but
        // the basis extends to pi, so far-out elements see no data.
        let m = ManifoldSpec::sphere(2).unwrap();
        let cfg = {
            let mut rng = crate::rng::substream(17, 0);
            let origin = m.origin();
            let pts: Vec<Point> = (0..4)
                .map(|_| {
                    let f = crate::geometry::orthonormal_frame(&origin, None).unwrap();
                    let mut v = nalgebra::DVector::zeros(3);
                    for t in &f {
                        v += t.vec() * (0.2 * rng.random::<f64>());
                    }
                    let tan = crate::geometry::Tangent::new(origin.clone(), v).unwrap();
                    crate::geometry::exp_map(&tan)
                })
                .collect();
            crate::dynamics::Configuration::new(pts).unwrap()
        };
        let spec = DistributionSpec::new(
            m,
            4,
            DistributionKind::Singular {
                config: cfg,
                random_rotation: true,
            },
        )
        .unwrap();
        let basis = BasisSpec::new(std::f64::consts::PI, 8, 0).unwrap();
        let gp = operator_gram(&spec, &basis, 100, 2).unwrap();
        let report = coercivity_report(&gp, 0.1).unwrap();
        assert!(!report.dropped_elements.is_empty());
        assert!(report.lambda_min.is_finite());
    }

    #[test]
    fn basis_must_fit_injectivity_radius() {
        let spec = iid_spec(ManifoldSpec::sphere(2).unwrap(), 3);
        let basis = BasisSpec::new(4.0, 4, 1).unwrap();
        assert!(matches!(
            operator_gram(&spec, &basis, 10, 1),
            Err(Error::SupportExceedsInjectivity { .. })
        ));
    }

    #[test]
    fn min_eigenvalue_checks_symmetry() {
        let sym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((symmetric_min_eigenvalue(&sym).unwrap() - 1.0).abs() < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.5, 2.0]);
        assert!(matches!(
            symmetric_min_eigenvalue(&bad),
            Err(Error::NotSymmetric(_))
        ));
    }
}
