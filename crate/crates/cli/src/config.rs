//! Scenario configuration: a strict JSON file schema overlaid with
//! command-line flags and documented defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use geoswarm::dynamics::ObservationPlan;
use geoswarm::kernels::{BasisSpec, RadialKernel};
use geoswarm::measure::DistributionSpec;
use serde::Deserialize;

/// Keys accepted in a `--config` JSON file. Every key is optional; scenarios
/// fall back to their documented defaults. Unknown keys are rejected with an
/// error naming the key, and a seed must come from here or from `--seed`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub tol_mc: Option<f64>,
    pub bins: Option<usize>,
    pub n_particles: Option<usize>,
    pub num_samples: Option<usize>,
    pub num_trajectories: Option<usize>,
    pub num_triples: Option<usize>,
    pub noise_sd: Option<f64>,
    pub support_radius: Option<f64>,
    pub quad_radial: Option<usize>,
    pub quad_angular: Option<usize>,
    pub basis: Option<BasisSpec>,
    pub kernel: Option<RadialKernel>,
    pub distribution: Option<DistributionSpec>,
    pub observation: Option<ObservationPlan>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    /// Reads and validates a config file. Schema violations (including
    /// unknown keys, which serde reports by name) become errors.
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: FileConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }
}

/// Resolved run parameters: file values overlaid with flags and defaults.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub tol_mc: f64,
    pub bins: usize,
    pub out: PathBuf,
    pub exact_paper_scale: bool,
    pub file: FileConfig,
}

impl Settings {
    /// Defaults everywhere except the seed and output directory; used by
    /// tests that call scenario functions directly.
    pub fn new(seed: u64, out: impl Into<PathBuf>) -> Settings {
        Settings {
            seed,
            tol_mc: 0.1,
            bins: 20,
            out: out.into(),
            exact_paper_scale: false,
            file: FileConfig::default(),
        }
    }

    /// Precedence: `--seed` beats the file seed, and a missing seed is an
    /// error because every run must be reproducible. `--out` beats the file
    /// `out`, which beats `artifacts/<scenario>`. `tol_mc` defaults to 0.1
    /// and `bins` to 20.
    pub fn resolve(
        scenario: &str,
        file: FileConfig,
        seed_flag: Option<u64>,
        out_flag: Option<PathBuf>,
        exact_paper_scale: bool,
    ) -> Result<Settings> {
        let seed = match seed_flag.or(file.seed) {
            Some(s) => s,
            None => bail!(
                "missing seed: pass --seed or set \"seed\" in the config \
                 (runs never draw entropy from the clock)"
            ),
        };
        let tol_mc = file.tol_mc.unwrap_or(0.1);
        if !(tol_mc >= 0.0 && tol_mc.is_finite()) {
            bail!("tol_mc must be a nonnegative finite number, got {tol_mc}");
        }
        let bins = file.bins.unwrap_or(20);
        if bins == 0 {
            bail!("bins must be at least 1");
        }
        let out = out_flag
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("artifacts").join(scenario));
        Ok(Settings {
            seed,
            tol_mc,
            bins,
            out,
            exact_paper_scale,
            file,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = serde_json::from_str::<FileConfig>(r#"{"seed": 1, "foo": 3}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("foo"), "error should name the key: {err}");
    }

    #[test]
    fn missing_seed_is_an_error() {
        let err = Settings::resolve("bounds", FileConfig::default(), None, None, false)
            .unwrap_err()
            .to_string();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn flag_seed_overrides_file_seed() {
        let file: FileConfig = serde_json::from_str(r#"{"seed": 11}"#).unwrap();
        let s = Settings::resolve("bounds", file.clone(), Some(42), None, false).unwrap();
        assert_eq!(s.seed, 42);
        let s = Settings::resolve("bounds", file, None, None, false).unwrap();
        assert_eq!(s.seed, 11);
    }

    #[test]
    fn defaults_applied_to_minimal_config() {
        let file: FileConfig = serde_json::from_str(r#"{"seed": 5}"#).unwrap();
        let s = Settings::resolve("rho", file, None, None, false).unwrap();
        assert_eq!(s.tol_mc, 0.1);
        assert_eq!(s.bins, 20);
        assert_eq!(s.out, PathBuf::from("artifacts").join("rho"));
    }

    #[test]
    fn nested_specs_parse() {
        let text = r#"{
            "seed": 3,
            "kernel": {"builtin": {"name": "constant", "radius": 1.5}},
            "basis": {"support_radius": 3.14, "num_elements": 8, "degree": 1},
            "distribution": {
                "manifold": {"kind": "sphere", "dim": 2},
                "n_particles": 4,
                "kind": {"type": "iid-product", "law": {"type": "uniform-sphere"}}
            },
            "observation": {"type": "initial-only"}
        }"#;
        let file: FileConfig = serde_json::from_str(text).unwrap();
        assert!(file.kernel.is_some());
        assert!(file.basis.is_some());
        assert_eq!(file.distribution.as_ref().unwrap().n_particles(), 4);
    }
}
