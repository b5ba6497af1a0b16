//! Experiment configuration, presets, and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::DiscreteActionSpace;
use crate::distill::StudentConfig;
use crate::error::{Error, Result, ResultExt};
use crate::eval::EvalParams;
use crate::nn::NetSpec;
use crate::ppo::TeacherConfig;
use crate::render::{Camera, Renderer, VisualDomain};
use crate::sim::{EpisodeLimits, Environment, RewardConfig, Track, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    /// Frames driven past before subsampling.
    pub target_count: usize,
    /// Frames kept.
    pub sample_count: usize,
}

/// Named seeds; every stochastic stage draws from one of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub teacher: u64,
    pub collect: u64,
    pub student: u64,
    pub eval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub track: PathBuf,
    pub train_domain: VisualDomain,
    pub test_domain: VisualDomain,
    pub camera: Camera,
    pub actions: DiscreteActionSpace,
    pub net: NetSpec,
    pub vehicle: VehicleParams,
    pub limits: EpisodeLimits,
    pub reward: RewardConfig,
    pub teacher: TeacherConfig,
    pub collect: CollectConfig,
    pub student: StudentConfig,
    pub eval: EvalParams,
    /// Teacher iterations used as ablation checkpoints.
    pub ablation_checkpoints: Vec<usize>,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Desk-scale preset: small images and budgets that train on one CPU.
    pub fn desk() -> Self {
        let camera = Camera::default();
        let actions = DiscreteActionSpace::build(2.0, 30.0, 3, 7)
            .and_then(|s| s.override_speeds(&[0.75, 1.25, 2.0]))
            .expect("preset action space is valid");
        Self {
            name: "desk".into(),
            track: PathBuf::from("tracks/default.json"),
            train_domain: VisualDomain::train(),
            test_domain: VisualDomain::test(),
            net: NetSpec::standard(camera.height, camera.width, actions.len()),
            camera,
            actions,
            vehicle: VehicleParams::default(),
            limits: EpisodeLimits::default(),
            reward: RewardConfig::default(),
            teacher: TeacherConfig::desk(),
            collect: CollectConfig {
                target_count: 30_000,
                sample_count: 6_000,
            },
            student: StudentConfig::desk(),
            eval: EvalParams {
                seed: 4,
                ..EvalParams::default()
            },
            ablation_checkpoints: vec![60, 90, 120],
            seeds: Seeds {
                teacher: 1,
                collect: 2,
                student: 3,
                eval: 4,
            },
            output_dir: PathBuf::from("runs/desk"),
        }
    }

    /// Full-size images, the 21-action set with speeds {3, 5, 8}, and the
    /// original training budgets.
    pub fn full() -> Self {
        let camera = Camera::default().with_resolution(120, 160);
        let actions = DiscreteActionSpace::build(8.0, 30.0, 3, 7)
            .and_then(|s| s.override_speeds(&[3.0, 5.0, 8.0]))
            .expect("preset action space is valid");
        Self {
            name: "full".into(),
            net: NetSpec::standard(camera.height, camera.width, actions.len()),
            camera,
            actions,
            teacher: TeacherConfig::full(),
            collect: CollectConfig {
                target_count: 10_000_000,
                sample_count: 100_000,
            },
            student: StudentConfig::full(),
            ablation_checkpoints: vec![300, 450, 600],
            output_dir: PathBuf::from("runs/full"),
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" => Some(Self::full()),
            _ => None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::Config(format!("config file not found: {}", path.display()))
            } else {
                Error::Io(e)
            }
        })?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }

    /// Normalized pretty JSON.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        if !self.track.exists() {
            return Err(Error::Config(format!("track file not found: {}", self.track.display())));
        }
        self.actions
            .check_outputs(self.net.outputs)
            .context("action space vs network")?;
        self.net.parameter_count().context("network")?;
        if (self.net.input_height, self.net.input_width) != (self.camera.height, self.camera.width) {
            log::warn!(
                "network input {}x{} differs from camera {}x{}; frames will be resized",
                self.net.input_height,
                self.net.input_width,
                self.camera.height,
                self.camera.width
            );
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            return Err(Error::Config("camera resolution must be positive".into()));
        }
        self.train_domain.validate()?;
        self.test_domain.validate()?;
        self.teacher.validate()?;
        self.student.validate()?;
        if self.collect.sample_count > self.collect.target_count || self.collect.sample_count == 0 {
            return Err(Error::Config("collect: need 0 < sample_count <= target_count".into()));
        }
        if self.eval.trials == 0 {
            return Err(Error::Config("eval: trials must be positive".into()));
        }
        if let Some(&bad) = self.ablation_checkpoints.iter().find(|&&c| c == 0 || c > self.teacher.iterations) {
            return Err(Error::Config(format!(
                "ablation checkpoint {bad} outside 1..={}",
                self.teacher.iterations
            )));
        }
        Ok(())
    }

    pub fn load_track(&self) -> Result<Track> {
        Track::load(&self.track)
    }

    pub fn environment(&self) -> Result<Environment> {
        Ok(Environment {
            track: self.load_track()?,
            renderer: Renderer::new(self.camera),
            actions: self.actions.clone(),
            vehicle: self.vehicle,
            limits: self.limits,
            reward: self.reward,
        })
    }
}

/// Written next to every artifact set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub config_hash: String,
    pub seeds: Seeds,
    pub parallel: bool,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, command: Vec<String>, outputs: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            config_hash: config.hash(),
            seeds: config.seeds,
            parallel: crate::parallel::mode() == crate::parallel::Exec::Parallel,
            config: config.clone(),
            outputs,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(self)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for cfg in [ExperimentConfig::desk(), ExperimentConfig::full()] {
            let json = cfg.to_json();
            let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_json(), json);
            assert_eq!(back.hash(), cfg.hash());
        }
        assert_ne!(ExperimentConfig::desk().hash(), ExperimentConfig::full().hash());
        assert_eq!(ExperimentConfig::full().actions.len(), 21);
    }

    #[test]
    fn missing_track_is_reported() {
        let cfg = ExperimentConfig {
            track: PathBuf::from("/nonexistent/track.json"),
            ..ExperimentConfig::desk()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("track file not found"), "{err}");
    }

    #[test]
    fn output_count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let track = dir.path().join("t.json");
        crate::sim::TrackFile::default_loop().save(&track).unwrap();
        let mut cfg = ExperimentConfig { track, ..ExperimentConfig::desk() };
        assert!(cfg.validate().is_ok());
        cfg.net.outputs = 15;
        assert!(cfg.validate().is_err());
    }
}
