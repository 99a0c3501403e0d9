//! The experiment manifest: one JSON document configuring every command.

use std::fs;
use std::path::{Path, PathBuf};

use idphase::diffeo::MobiusParams;
use idphase::ensemble::EnsembleConfig;
use idphase::phaseshift::{FringeParams, MODULATION_THRESHOLD};
use idphase::reconstruct::PhaseDepthModel;
use idphase::simbench::{BenchConfig, DoubleGaussianSpec, NoiseSpec};
use idphase::unwrap::UnwrapConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run needs, in one schema-checked document. Unknown keys are
/// rejected so a typo cannot silently fall back to a default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. All randomness flows from here: it overwrites
    /// `noise.seed` and `bench.seed` when the config is resolved.
    pub seed: u64,
    /// Directory receiving every output file.
    pub out_dir: PathBuf,
    /// Worker-thread count; absent means one thread per core.
    pub threads: Option<usize>,
    /// Ground-truth scene for `synth`.
    pub scene: DoubleGaussianSpec,
    /// Projector pattern for `synth`.
    pub fringe: FringeParams,
    /// Additive phase noise for `synth` (`sigma: 0` disables it).
    pub noise: NoiseSpec,
    /// Contrast threshold below which `decode` masks a pixel as unlit.
    pub decode_threshold: f64,
    /// Minimizer parameters shared by every unwrapping method.
    pub unwrap: UnwrapConfig,
    /// Voting-ensemble layout for `unwrap --method idhier`; absent means
    /// the default three-member ensemble sized to the input grid.
    pub ensemble: Option<EnsembleConfig>,
    /// Phase→depth model for `reconstruct`; absent means a unit-gain model
    /// with the principal point at the grid center.
    pub depth: Option<PhaseDepthModel>,
    /// Benchmark suites for `bench`.
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out_dir: PathBuf::from("out"),
            threads: None,
            scene: DoubleGaussianSpec::default(),
            fringe: FringeParams::default(),
            noise: NoiseSpec::default(),
            decode_threshold: MODULATION_THRESHOLD,
            unwrap: UnwrapConfig::default(),
            ensemble: None,
            depth: None,
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads and schema-checks a config file. Any failure here is a config
    /// error (exit code 2): the run never started.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    /// Applies command-line overrides (flags win over the file) and funnels
    /// the master seed into every seeded sub-config.
    pub fn resolve(
        mut self,
        seed: Option<u64>,
        out: Option<PathBuf>,
        threads: Option<usize>,
    ) -> RunConfig {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(dir) = out {
            self.out_dir = dir;
        }
        if let Some(n) = threads {
            self.threads = Some(n);
        }
        self.noise.seed = self.seed;
        self.bench.seed = self.seed;
        self
    }

    /// Front-loaded parameter checks so a bad manifest exits with the
    /// config code before touching any input data.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: idphase::Error| CliError::Usage(e.to_string());
        self.scene.validate().map_err(usage)?;
        self.fringe.validate().map_err(usage)?;
        self.unwrap.validate().map_err(usage)?;
        self.bench.validate().map_err(usage)?;
        if let Some(depth) = &self.depth {
            depth.validate().map_err(usage)?;
        }
        if !(self.noise.sigma.is_finite() && self.noise.sigma >= 0.0) {
            return Err(CliError::Usage(format!(
                "noise sigma must be non-negative, got {}",
                self.noise.sigma
            )));
        }
        if !(self.decode_threshold.is_finite() && self.decode_threshold >= 0.0) {
            return Err(CliError::Usage(format!(
                "decode threshold must be non-negative, got {}",
                self.decode_threshold
            )));
        }
        if self.threads == Some(0) {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        // The ensemble layout is grid-dependent; validated against the
        // input shape by the unwrap command. Only shape-free checks here.
        if let Some(ens) = &self.ensemble {
            if ens.n() == 0 || ens.n() % 2 == 0 {
                return Err(CliError::Usage(format!(
                    "ensemble size must be odd and non-zero, got {}",
                    ens.n()
                )));
            }
        }
        Ok(())
    }
}

/// Parses `theta,re,im` into disk-automorphism parameters.
pub fn parse_mobius(text: &str) -> Result<MobiusParams, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "--mobius expects THETA,RE,IM (three comma-separated numbers), got {text:?}"
        )));
    }
    let mut nums = [0.0; 3];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("bad number {part:?} in --mobius {text:?}")))?;
    }
    Ok(MobiusParams {
        theta: nums[0],
        z0: [nums[1], nums[2]],
    })
}

/// Parses `cx,cy,sigma,weight` into a region-of-interest spec.
pub fn parse_roi(text: &str) -> Result<idphase::diffeo::RoiSpec, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(CliError::Usage(format!(
            "--roi expects CX,CY,SIGMA,WEIGHT (four comma-separated numbers), got {text:?}"
        )));
    }
    let mut nums = [0.0; 4];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("bad number {part:?} in --roi {text:?}")))?;
    }
    Ok(idphase::diffeo::RoiSpec {
        center: [nums[0], nums[1]],
        sigma: nums[2],
        weight: nums[3],
    })
}
