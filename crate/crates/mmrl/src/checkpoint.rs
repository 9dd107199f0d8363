//! Versioned training snapshots.
//!
//! A checkpoint captures everything [`Trainer::restore`] needs: network
//! parameters, Adam moments, the shuffle stream, and each pool slot's
//! sampling stream, plus the iteration counters. Environments themselves
//! are rebuilt from configuration on resume, so a resumed run restarts its
//! episodes at a boundary; see [`Trainer::restore`] for the consequences.
//!
//! Files are JSON written through a sibling temp file and an atomic rename,
//! so a crash never leaves a torn checkpoint behind. Loading refuses other
//! format versions, and resuming refuses snapshots whose semantic
//! configuration hash differs from the current run's.

use crate::ppo::{PpoError, Trainer};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

/// Current file format version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint was written under configuration hash {found:#018x}, expected {expected:#018x}")]
    HashMismatch { found: u64, expected: u64 },
    #[error("checkpoint does not fit the trainer: {0}")]
    Trainer(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Semantic configuration fingerprint; see `RunConfig::semantic_hash`.
    pub config_hash: u64,
    pub run_seed: u64,
    pub iteration: usize,
    pub env_steps: usize,
    pub params: crate::net::PolicyParams,
    pub adam: crate::net::AdamState,
    pub shuffle_rng: ChaCha8Rng,
    pub slot_rngs: Vec<ChaCha8Rng>,
}

impl Checkpoint {
    /// Snapshots a trainer under the given configuration hash.
    pub fn of_trainer(trainer: &Trainer, config_hash: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config_hash,
            run_seed: trainer.run_seed(),
            iteration: trainer.iteration_count(),
            env_steps: trainer.env_steps(),
            params: trainer.params.clone(),
            adam: trainer.adam.clone(),
            shuffle_rng: trainer.shuffle_rng().clone(),
            slot_rngs: trainer.slot_rngs(),
        }
    }

    /// Moves this snapshot's state into `trainer` after checking the
    /// configuration hash.
    pub fn resume_into(
        self,
        trainer: &mut Trainer,
        config_hash: u64,
    ) -> Result<(), CheckpointError> {
        if self.config_hash != config_hash {
            return Err(CheckpointError::HashMismatch {
                found: self.config_hash,
                expected: config_hash,
            });
        }
        trainer
            .restore(
                self.params,
                self.adam,
                self.shuffle_rng,
                self.slot_rngs,
                self.iteration,
                self.env_steps,
            )
            .map_err(|e: PpoError| CheckpointError::Trainer(e.to_string()))
    }
}

/// Serialization probe that tolerates any payload around the version field.
#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

/// Writes `checkpoint` to `path` atomically (temp file, then rename).
pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    let json = serde_json::to_string(checkpoint).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(json.as_bytes())?;
        file.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint, rejecting unsupported versions before decoding the
/// full payload.
pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = std::fs::read_to_string(path)?;
    let probe: VersionProbe =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    if probe.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: probe.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    serde_json::from_str(&text).map_err(|e| CheckpointError::Corrupt(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::env::{EnvError, PointMassEnv, TaskEnv};
    use crate::ppo::{PpoConfig, Trainer};
    use crate::traj::TrajectoryFamily;

    fn build_env(_i: usize, base_seed: u64) -> Result<Box<dyn TaskEnv>, EnvError> {
        Ok(Box::new(PointMassEnv::new(TrajectoryFamily::Circle, base_seed)) as Box<dyn TaskEnv>)
    }

    fn tiny_trainer(seed: u64) -> Trainer {
        let cfg = PpoConfig {
            n_envs: 3,
            rollout_len: 40,
            epochs: 2,
            minibatch_size: 32,
            total_env_steps: 360,
            hidden: vec![8],
            seeds: vec![seed],
            ..PpoConfig::default()
        };
        Trainer::new(cfg, seed, &build_env).unwrap()
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let mut trainer = tiny_trainer(21);
        trainer.iteration().unwrap();
        let snapshot = Checkpoint::of_trainer(&trainer, 0xfeed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save(&path, &snapshot).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded, snapshot);
        // No temp residue next to the target.
        let residue: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(residue, vec![std::ffi::OsString::from("ckpt.json")]);
    }

    #[test]
    fn resume_restores_counters_and_is_reproducible() {
        let mut trainer = tiny_trainer(22);
        trainer.iteration().unwrap();
        let snapshot = Checkpoint::of_trainer(&trainer, 7);
        let resume = || {
            let mut t = tiny_trainer(22);
            snapshot.clone().resume_into(&mut t, 7).unwrap();
            assert_eq!(t.iteration_count(), 1);
            assert_eq!(t.env_steps(), 120);
            while !t.done() {
                t.iteration().unwrap();
            }
            t
        };
        let a = resume();
        let b = resume();
        assert_eq!(a.params, b.params);
        assert_eq!(a.env_steps(), 360);
    }

    #[test]
    fn hash_mismatch_is_rejected() {
        let trainer = tiny_trainer(23);
        let snapshot = Checkpoint::of_trainer(&trainer, RunConfig::default().semantic_hash());
        let mut other = tiny_trainer(23);
        let err = snapshot.resume_into(&mut other, 0xdead).unwrap_err();
        assert!(matches!(err, CheckpointError::HashMismatch { .. }));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let trainer = tiny_trainer(24);
        let snapshot = Checkpoint::of_trainer(&trainer, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save(&path, &snapshot).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        value["version"] = serde_json::json!(99);
        std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        let err = load(&path).unwrap_err();
        assert!(matches!(
            err,
            CheckpointError::VersionMismatch {
                found: 99,
                expected: CHECKPOINT_VERSION
            }
        ));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        std::fs::write(&path, "not json at all").unwrap();
        assert!(matches!(load(&path).unwrap_err(), CheckpointError::Corrupt(_)));
        // Truncated payload: valid prefix, cut mid-document.
        let trainer = tiny_trainer(25);
        let snapshot = Checkpoint::of_trainer(&trainer, 1);
        save(&path, &snapshot).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load(&path).unwrap_err(), CheckpointError::Corrupt(_)));
        assert!(matches!(
            load(&dir.path().join("missing.json")).unwrap_err(),
            CheckpointError::Io(_)
        ));
    }
}
