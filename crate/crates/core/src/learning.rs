//! Nonparametric kernel recovery by least squares over a spline basis.
//!
//! Observed velocities are regressed on the basis-driven fields: with
//! `F_k(X)` the field generated by basis element `phi_k`, the normal system
//! is `A_kl = sum over observations of <F_k(X), F_l(X)>` and
//! `b_k = sum of <F_k(X), V>`, both in the product metric. Sums are not
//! averaged, so concatenating datasets adds systems.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{for_each_directed_pair, TrajectoryDataset};
use crate::kernels::{BasisSpec, RadialKernel};
use crate::measure::EmpiricalRho;
use crate::{Error, Result};

/// Assembled normal equations for one dataset and basis.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSystem {
    basis: BasisSpec,
    normal: DMatrix<f64>,
    rhs: DVector<f64>,
    /// `sum of |V|^2` over observations, for residual reporting.
    velocity_norm2: f64,
    sample_count: usize,
}

impl RegressionSystem {
    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn normal_matrix(&self) -> &DMatrix<f64> {
        &self.normal
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn velocity_norm2(&self) -> f64 {
        self.velocity_norm2
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Adds another system over the same basis (dataset concatenation).
    pub fn merge(&self, other: &RegressionSystem) -> Result<RegressionSystem> {
        if self.basis != other.basis {
            return Err(Error::CoeffLenMismatch {
                expected: self.basis.num_elements(),
                got: other.basis.num_elements(),
            });
        }
        Ok(RegressionSystem {
            basis: self.basis.clone(),
            normal: &self.normal + &other.normal,
            rhs: &self.rhs + &other.rhs,
            velocity_norm2: self.velocity_norm2 + other.velocity_norm2,
            sample_count: self.sample_count + other.sample_count,
        })
    }
}

/// Builds the normal equations from every observation in the dataset.
/// The basis support must fit inside the manifold's injectivity radius.
pub fn assemble(dataset: &TrajectoryDataset, basis: &BasisSpec) -> Result<RegressionSystem> {
    if dataset.is_empty() {
        return Err(Error::EmptySamples);
    }
    let m = dataset.meta.manifold;
    if basis.support_radius() > m.injectivity_radius() + 1e-9 {
        return Err(Error::SupportExceedsInjectivity {
            support: basis.support_radius(),
            injectivity: m.injectivity_radius(),
        });
    }
    let k_n = basis.num_elements();
    let per: Vec<(DMatrix<f64>, DVector<f64>, f64)> = dataset
        .configs
        .par_iter()
        .zip(dataset.velocities.par_iter())
        .map(|(cfg, vel)| {
            let n = cfg.len();
            let a = m.ambient_dim();
            let mut fields = vec![DVector::zeros(a); k_n * n];
            for_each_directed_pair(cfg, |i, _j, d, w| {
                let mut buf = [(0usize, 0.0f64); 4];
                let mut nb = 0;
                basis.accumulate(d, |k, v| {
                    buf[nb] = (k, v);
                    nb += 1;
                });
                for &(k, vk) in &buf[..nb] {
                    fields[k * n + i].axpy(vk, w, 1.0);
                }
            });
            let inv_n = 1.0 / n as f64;
            for f in &mut fields {
                *f *= inv_n;
            }
            let mut a_loc = DMatrix::zeros(k_n, k_n);
            let mut b_loc = DVector::zeros(k_n);
            let mut v2 = 0.0;
            for i in 0..n {
                let vi = &vel.vecs()[i];
                v2 += m.pairing(vi, vi);
                for k in 0..k_n {
                    let fk = &fields[k * n + i];
                    b_loc[k] += m.pairing(fk, vi);
                    for l in k..k_n {
                        a_loc[(k, l)] += m.pairing(fk, &fields[l * n + i]);
                    }
                }
            }
            for k in 0..k_n {
                for l in k..k_n {
                    let v = a_loc[(k, l)] * inv_n;
                    a_loc[(k, l)] = v;
                    a_loc[(l, k)] = v;
                }
            }
            (a_loc, b_loc * inv_n, v2 * inv_n)
        })
        .collect();

    let mut normal = DMatrix::zeros(k_n, k_n);
    let mut rhs = DVector::zeros(k_n);
    let mut velocity_norm2 = 0.0;
    for (a_loc, b_loc, v2) in per {
        normal += a_loc;
        rhs += b_loc;
        velocity_norm2 += v2;
    }
    Ok(RegressionSystem {
        basis: basis.clone(),
        normal,
        rhs,
        velocity_norm2,
        sample_count: dataset.len(),
    })
}

/// How to handle ill-conditioned normal matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum Regularizer {
    /// Plain Cholesky solve; fails on a singular system.
    None,
    /// Tikhonov shift: solve `(A + lambda I) c = b`.
    Ridge(f64),
    /// Spectral pseudo-inverse dropping eigenvalues below
    /// `rel_tol * max eigenvalue`.
    TruncatedSvd(f64),
}

impl Regularizer {
    /// Ridge strength `1e-8 * trace(A) / K`, a scale-aware default.
    pub fn default_ridge(system: &RegressionSystem) -> Regularizer {
        let k = system.basis.num_elements() as f64;
        Regularizer::Ridge(1e-8 * system.normal.trace() / k)
    }
}

/// A recovered kernel with its fit diagnostics.
#[derive(Debug, Clone)]
pub struct EstimatorResult {
    pub kernel: RadialKernel,
    pub regularizer: Regularizer,
    /// Summed squared residual `|V - F c|^2` over observations (clamped
    /// at zero against roundoff).
    pub residual: f64,
    pub sample_count: usize,
}

impl EstimatorResult {
    /// Residual per observation.
    pub fn residual_mean(&self) -> f64 {
        self.residual / self.sample_count.max(1) as f64
    }
}

/// Solves the normal equations under the chosen regularizer.
pub fn solve(system: &RegressionSystem, regularizer: Regularizer) -> Result<EstimatorResult> {
    let a = &system.normal;
    let k_n = system.basis.num_elements();
    let coeffs = match regularizer {
        Regularizer::None => {
            let chol = nalgebra::Cholesky::new(a.clone()).ok_or_else(|| {
                let min_eig = nalgebra::SymmetricEigen::new((a + a.transpose()) * 0.5)
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |x, &y| x.min(y));
                Error::SingularSystem { pivot: min_eig }
            })?;
            chol.solve(&system.rhs)
        }
        Regularizer::Ridge(lambda) => {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidStep(lambda));
            }
            let shifted = a + DMatrix::identity(k_n, k_n) * lambda;
            nalgebra::Cholesky::new(shifted)
                .ok_or(Error::SingularSystem { pivot: lambda })?
                .solve(&system.rhs)
        }
        Regularizer::TruncatedSvd(rel_tol) => {
            if !(rel_tol >= 0.0 && rel_tol.is_finite()) {
                return Err(Error::InvalidStep(rel_tol));
            }
            let eig = nalgebra::SymmetricEigen::new((a + a.transpose()) * 0.5);
            let max_eig = eig.eigenvalues.iter().fold(0.0_f64, |x, &y| x.max(y));
            let cutoff = rel_tol * max_eig;
            let projected = eig.eigenvectors.transpose() * &system.rhs;
            let scaled = DVector::from_fn(k_n, |k, _| {
                let e = eig.eigenvalues[k];
                if e > cutoff && e > 0.0 {
                    projected[k] / e
                } else {
                    0.0
                }
            });
            &eig.eigenvectors * scaled
        }
    };
    let fit = (coeffs.dot(&(a * &coeffs)) - 2.0 * coeffs.dot(&system.rhs)
        + system.velocity_norm2)
        .max(0.0);
    Ok(EstimatorResult {
        kernel: RadialKernel::from_coeffs(system.basis.clone(), coeffs)?,
        regularizer,
        residual: fit,
        sample_count: system.sample_count,
    })
}

/// Estimation error in the empirical distance measure.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelError {
    /// `|estimate - truth|` in the measure's norm.
    pub absolute: f64,
    /// `absolute / |truth|`; a doubled kernel scores exactly 1.
    pub relative: f64,
}

/// Compares an estimate against the generating kernel in `L^2(rho)`.
pub fn evaluate(
    estimate: &RadialKernel,
    truth: &RadialKernel,
    rho: &EmpiricalRho,
) -> Result<KernelError> {
    let ref_norm2 = rho.inner(truth, truth)?;
    if ref_norm2 <= 0.0 {
        return Err(Error::ZeroNormReference);
    }
    let absolute = rho.distance_between(estimate, truth)?;
    Ok(KernelError {
        absolute,
        relative: absolute / ref_norm2.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{generate_dataset, ObservationPlan};
    use crate::geometry::{ManifoldSpec, PointLaw};
    use crate::kernels::BuiltinKernel;
    use crate::measure::{estimate_rho, DistributionKind, DistributionSpec};

    fn sphere_spec(n: usize) -> DistributionSpec {
        DistributionSpec::new(
            ManifoldSpec::sphere(2).unwrap(),
            n,
            DistributionKind::IidProduct {
                law: PointLaw::UniformSphere,
            },
        )
        .unwrap()
    }

    fn spline_truth(basis: &BasisSpec) -> RadialKernel {
        let coeffs: Vec<f64> = (0..basis.num_elements())
            .map(|k| 1.0 + 0.5 * (k as f64 * 1.3).sin())
            .collect();
        RadialKernel::from_coeffs(basis.clone(), DVector::from_vec(coeffs)).unwrap()
    }

    #[test]
    fn noiseless_in_span_recovery_is_exact() {
        let basis = BasisSpec::new(std::f64::consts::PI, 5, 1).unwrap();
        let truth = spline_truth(&basis);
        let spec = sphere_spec(6);
        let ds = generate_dataset(&spec, &truth, ObservationPlan::InitialOnly, 60, 0.0, 8)
            .unwrap();
        let system = assemble(&ds, &basis).unwrap();
        let est = solve(&system, Regularizer::None).unwrap();
        let got = est.kernel.as_spline().unwrap().1;
        let want = truth.as_spline().unwrap().1;
        let gap = (&got - &want).amax();
        assert!(gap < 1e-8, "coefficient error {gap}");
        assert!(est.residual_mean() < 1e-16);
    }

    #[test]
    fn merged_system_equals_sum() {
        let basis = BasisSpec::new(std::f64::consts::PI, 4, 2).unwrap();
        let truth = spline_truth(&basis);
        let spec = sphere_spec(4);
        let ds = generate_dataset(&spec, &truth, ObservationPlan::InitialOnly, 30, 0.01, 3)
            .unwrap();
        let sys = assemble(&ds, &basis).unwrap();
        let doubled = sys.merge(&sys).unwrap();
        let scale = sys.normal_matrix().amax();
        assert!((doubled.normal_matrix() - sys.normal_matrix() * 2.0).amax() < 1e-12 * scale);
        assert!((doubled.rhs() - sys.rhs() * 2.0).amax() < 1e-12 * sys.rhs().amax());
        assert_eq!(doubled.sample_count(), 60);
    }

    #[test]
    fn relabeled_dataset_assembles_identically() {
        let basis = BasisSpec::new(std::f64::consts::PI, 5, 1).unwrap();
        let truth = spline_truth(&basis);
        let spec = sphere_spec(5);
        let mut ds = generate_dataset(&spec, &truth, ObservationPlan::InitialOnly, 20, 0.0, 9)
            .unwrap();
        let sys = assemble(&ds, &basis).unwrap();
        let perm = [2usize, 4, 1, 0, 3];
        for (cfg, vel) in ds.configs.iter_mut().zip(ds.velocities.iter_mut()) {
            let vecs: Vec<_> = perm.iter().map(|&j| vel.vecs()[j].clone()).collect();
            *cfg = cfg.permuted(&perm).unwrap();
            *vel = crate::dynamics::ConfigTangent::new(cfg.clone(), vecs).unwrap();
        }
        let sys_p = assemble(&ds, &basis).unwrap();
        let scale = sys.normal_matrix().amax();
        assert!((sys.normal_matrix() - sys_p.normal_matrix()).amax() < 1e-12 * scale);
        assert!((sys.rhs() - sys_p.rhs()).amax() < 1e-12 * sys.rhs().amax().max(1.0));
    }

    #[test]
    fn singular_system_names_the_failure_and_regularizers_rescue() {
        // Two particles observed once: a single pair distance cannot pin
        // down five spline coefficients.
        let basis = BasisSpec::new(std::f64::consts::PI, 5, 1).unwrap();
        let truth = spline_truth(&basis);
        let spec = sphere_spec(2);
        let ds = generate_dataset(&spec, &truth, ObservationPlan::InitialOnly, 1, 0.0, 4)
            .unwrap();
        let sys = assemble(&ds, &basis).unwrap();
        let plain = solve(&sys, Regularizer::None);
        assert!(matches!(plain, Err(Error::SingularSystem { .. })));
        let msg = plain.unwrap_err().to_string();
        assert!(msg.contains("Ridge") && msg.contains("TruncatedSvd"), "{msg}");
        assert!(solve(&sys, Regularizer::default_ridge(&sys)).is_ok());
        assert!(solve(&sys, Regularizer::TruncatedSvd(1e-10)).is_ok());
    }

    #[test]
    fn default_ridge_uses_trace_scale() {
        let basis = BasisSpec::new(std::f64::consts::PI, 4, 1).unwrap();
        let truth = spline_truth(&basis);
        let spec = sphere_spec(4);
        let ds = generate_dataset(&spec, &truth, ObservationPlan::InitialOnly, 10, 0.0, 5)
            .unwrap();
        let sys = assemble(&ds, &basis).unwrap();
        let want = 1e-8 * sys.normal_matrix().trace() / 4.0;
        match Regularizer::default_ridge(&sys) {
            Regularizer::Ridge(l) => assert!((l - want).abs() <= 1e-20 + 1e-12 * want),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn doubled_kernel_scores_relative_error_one() {
        let basis = BasisSpec::new(std::f64::consts::PI, 5, 1).unwrap();
        let truth = spline_truth(&basis);
        let doubled = RadialKernel::from_coeffs(
            basis.clone(),
            truth.as_spline().unwrap().1 * 2.0,
        )
        .unwrap();
        let spec = sphere_spec(4);
        let ds = generate_dataset(&spec, &truth, ObservationPlan::InitialOnly, 50, 0.0, 6)
            .unwrap();
        let rho = estimate_rho(&ds.configs, std::f64::consts::PI, 20).unwrap();
        let err = evaluate(&doubled, &truth, &rho).unwrap();
        assert!((err.relative - 1.0).abs() < 1e-12);
        let zero = RadialKernel::from_coeffs(basis, DVector::zeros(5)).unwrap();
        assert!(matches!(
            evaluate(&truth, &zero, &rho),
            Err(Error::ZeroNormReference)
        ));
    }

    #[test]
    fn truncated_svd_matches_plain_solve_when_well_posed() {
        let basis = BasisSpec::new(std::f64::consts::PI, 4, 1).unwrap();
        let truth = spline_truth(&basis);
        let spec = sphere_spec(5);
        let ds = generate_dataset(&spec, &truth, ObservationPlan::InitialOnly, 40, 0.0, 7)
            .unwrap();
        let sys = assemble(&ds, &basis).unwrap();
        let a = solve(&sys, Regularizer::None).unwrap();
        let b = solve(&sys, Regularizer::TruncatedSvd(1e-12)).unwrap();
        let ca = a.kernel.as_spline().unwrap().1;
        let cb = b.kernel.as_spline().unwrap().1;
        assert!((ca - cb).amax() < 1e-8);
    }

    #[test]
    fn noisy_recovery_stays_close_in_measure() {
        let basis = BasisSpec::new(std::f64::consts::PI, 6, 1).unwrap();
        let truth = RadialKernel::builtin(BuiltinKernel::OpinionPiecewiseLinear {
            radius: 2.8,
        })
        .unwrap();
        let spec = sphere_spec(8);
        let ds = generate_dataset(&spec, &truth, ObservationPlan::InitialOnly, 200, 0.01, 2)
            .unwrap();
        let sys = assemble(&ds, &basis).unwrap();
        let est = solve(&sys, Regularizer::default_ridge(&sys)).unwrap();
        let rho = estimate_rho(&ds.configs, std::f64::consts::PI, 40).unwrap();
        let err = evaluate(&est.kernel, &truth, &rho).unwrap();
        assert!(err.relative < 0.2, "relative error {}", err.relative);
    }
}
