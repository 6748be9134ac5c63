//! Cross-module invariants: constraint preservation over long runs, the
//! pathwise norm chain, and end-to-end determinism.

use geoswarm::dynamics::{
    generate_dataset, simulate, velocity_field, Configuration, ObservationPlan, Scheme,
};
use geoswarm::geometry::{sample_point, ManifoldKind, ManifoldSpec, PointLaw};
use geoswarm::kernels::{BasisSpec, BuiltinKernel, RadialKernel};
use geoswarm::learning::{assemble, solve, Regularizer};
use geoswarm::measure::{estimate_rho, DistributionKind, DistributionSpec};
use geoswarm::rng::substream;
use nalgebra::DVector;
use rand::Rng;

fn law_for(m: ManifoldSpec) -> PointLaw {
    match m.kind {
        ManifoldKind::Sphere => PointLaw::UniformSphere,
        ManifoldKind::Hyperbolic => PointLaw::UniformHyperbolicBall {
            center: m.origin(),
            radius: 1.2,
        },
        ManifoldKind::Euclidean => PointLaw::UniformEuclideanCube { lo: -1.0, hi: 1.0 },
    }
}

fn random_config(m: ManifoldSpec, n: usize, seed: u64) -> Configuration {
    let mut rng = substream(seed, 0);
    let law = law_for(m);
    Configuration::new(
        (0..n)
            .map(|_| sample_point(m, &law, &mut rng).unwrap())
            .collect(),
    )
    .unwrap()
}

#[test]
fn long_runs_stay_on_manifold_everywhere() {
    let kernel = RadialKernel::builtin(BuiltinKernel::Bump {
        radius: 3.0,
        inner: 2.5,
    })
    .unwrap();
    for m in [
        ManifoldSpec::sphere(2).unwrap(),
        ManifoldSpec::hyperbolic(2).unwrap(),
        ManifoldSpec::euclidean(3).unwrap(),
    ] {
        let cfg = random_config(m, 5, 1);
        let traj = simulate(&kernel, &cfg, 500.0, 0.05, Scheme::GeodesicHeun).unwrap();
        assert_eq!(traj.states.len(), 10_001);
        let last = traj.states.last().unwrap();
        for p in last.points() {
            assert!(
                m.membership_residual(p.coords()) <= 1e-9,
                "{m}: residual {}",
                m.membership_residual(p.coords())
            );
        }
        let f = velocity_field(&kernel, last).unwrap();
        assert!(f.norm().is_finite());
    }
}

/// For every configuration and kernel, the product-metric field norm obeys
/// `|f|^2 <= ((N-1)/N)^2 <phi, phi>_rho(X)`: Cauchy-Schwarz applied per
/// particle, then summed. Checked over randomized manifolds, particle
/// counts, and spline coefficients.
#[test]
fn pathwise_norm_chain_for_random_kernels() {
    for seed in 0..100u64 {
        let mut rng = substream(4000, seed);
        let m = match seed % 3 {
            0 => ManifoldSpec::sphere(2).unwrap(),
            1 => ManifoldSpec::hyperbolic(2).unwrap(),
            _ => ManifoldSpec::euclidean(2).unwrap(),
        };
        let n = 2 + (seed as usize % 5);
        let cfg = random_config(m, n, 5000 + seed);
        let radius = if m.kind == ManifoldKind::Sphere {
            std::f64::consts::PI
        } else {
            4.0
        };
        let k_elems = 3 + (seed as usize % 4);
        let basis = BasisSpec::new(radius, k_elems, (seed % 3) as usize).unwrap();
        let coeffs = DVector::from_fn(k_elems, |_, _| rng.random_range(-2.0..2.0));
        let kernel = RadialKernel::from_coeffs(basis, coeffs).unwrap();

        let f = velocity_field(&kernel, &cfg).unwrap();
        let lhs = f.norm().powi(2);
        let rho = estimate_rho(std::slice::from_ref(&cfg), radius, 32).unwrap();
        let pair_norm2 = rho.inner(&kernel, &kernel).unwrap();
        let nf = n as f64;
        let rhs = ((nf - 1.0) / nf).powi(2) * pair_norm2;
        assert!(
            lhs <= rhs + 1e-10 * (1.0 + rhs),
            "seed {seed} on {m}: {lhs} > {rhs}"
        );
    }
}

#[test]
fn recovery_pipeline_is_bit_identical_across_thread_counts() {
    let m = ManifoldSpec::sphere(2).unwrap();
    let spec = DistributionSpec::new(
        m,
        5,
        DistributionKind::IidProduct {
            law: PointLaw::UniformSphere,
        },
    )
    .unwrap();
    let basis = BasisSpec::new(std::f64::consts::PI, 6, 1).unwrap();
    let truth = RadialKernel::builtin(BuiltinKernel::OpinionPiecewiseLinear { radius: 2.8 })
        .unwrap();
    let run = || {
        let ds = generate_dataset(&spec, &truth, ObservationPlan::InitialOnly, 50, 0.02, 31)
            .unwrap();
        let sys = assemble(&ds, &basis).unwrap();
        let est = solve(&sys, Regularizer::default_ridge(&sys)).unwrap();
        est.kernel.as_spline().unwrap().1
    };
    let base = run();
    for threads in [1usize, 2, 7] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let other = pool.install(run);
        assert_eq!(base, other, "thread count {threads} changed the result");
    }
}

#[test]
fn relabeling_leaves_measure_and_estimate_invariant() {
    let m = ManifoldSpec::sphere(2).unwrap();
    let spec = DistributionSpec::new(
        m,
        6,
        DistributionKind::IidProduct {
            law: PointLaw::UniformSphere,
        },
    )
    .unwrap();
    let basis = BasisSpec::new(std::f64::consts::PI, 5, 1).unwrap();
    let truth = RadialKernel::builtin(BuiltinKernel::Constant {
        radius: std::f64::consts::PI,
    })
    .unwrap();
    let mut ds = generate_dataset(&spec, &truth, ObservationPlan::InitialOnly, 40, 0.0, 77)
        .unwrap();
    let rho_before = estimate_rho(&ds.configs, std::f64::consts::PI, 25).unwrap();
    let sys_before = assemble(&ds, &basis).unwrap();

    let perm = [5usize, 3, 0, 4, 1, 2];
    for (cfg, vel) in ds.configs.iter_mut().zip(ds.velocities.iter_mut()) {
        let vecs: Vec<_> = perm.iter().map(|&j| vel.vecs()[j].clone()).collect();
        *cfg = cfg.permuted(&perm).unwrap();
        *vel = geoswarm::dynamics::ConfigTangent::new(cfg.clone(), vecs).unwrap();
    }
    let rho_after = estimate_rho(&ds.configs, std::f64::consts::PI, 25).unwrap();
    assert_eq!(rho_before, rho_after, "histogram must be bitwise stable");

    let sys_after = assemble(&ds, &basis).unwrap();
    let scale = sys_before.normal_matrix().amax();
    assert!((sys_before.normal_matrix() - sys_after.normal_matrix()).amax() < 1e-12 * scale);
    assert!(
        (sys_before.rhs() - sys_after.rhs()).amax()
            < 1e-12 * sys_before.rhs().amax().max(1.0)
    );
}

#[test]
fn trajectory_observations_feed_recovery() {
    // A smoke test of the full loop with trajectory-grid observations and
    // finite-difference checks between recorded samples.
    let m = ManifoldSpec::sphere(2).unwrap();
    let spec = DistributionSpec::new(
        m,
        4,
        DistributionKind::IidProduct {
            law: PointLaw::UniformSphere,
        },
    )
    .unwrap();
    let basis = BasisSpec::new(std::f64::consts::PI, 5, 1).unwrap();
    let coeffs = DVector::from_column_slice(&[0.8, 1.1, 0.3, 0.9, 0.5]);
    let truth = RadialKernel::from_coeffs(basis.clone(), coeffs).unwrap();
    let obs = ObservationPlan::TrajectoryGrid {
        t_final: 1.0,
        h: 0.05,
        stride: 5,
        scheme: Scheme::GeodesicHeun,
    };
    let ds = generate_dataset(&spec, &truth, obs, 30, 0.0, 13).unwrap();
    assert_eq!(ds.meta.samples_per_trajectory, 5);
    let sys = assemble(&ds, &basis).unwrap();
    let est = solve(&sys, Regularizer::None).unwrap();
    let got = est.kernel.as_spline().unwrap().1;
    let want = truth.as_spline().unwrap().1;
    assert!((&got - &want).amax() < 1e-8);
}
