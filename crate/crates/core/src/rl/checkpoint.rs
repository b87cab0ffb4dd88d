use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::PolicyParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned policy snapshot stored as pretty-printed JSON. Floats
/// round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub policy: PolicyParams,
    /// Seed of the run that produced the policy.
    pub seed: u64,
    /// Free-form description of the task the policy was trained on.
    pub task: String,
}

impl Checkpoint {
    pub fn new(policy: PolicyParams, seed: u64, task: impl Into<String>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            policy,
            seed,
            task: task.into(),
        }
    }

    pub fn to_string_pretty(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string_pretty()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::MissingCheckpoint(path.display().to_string()))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("unsupported checkpoint version {}", ck.version),
            });
        }
        PolicyParams::new(ck.policy.arch, ck.policy.theta.clone(), ck.policy.log_std.clone()).map_err(
            |e| Error::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            },
        )?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::Arch;

    #[test]
    fn round_trip_is_exact() {
        let p = PolicyParams::init(Arch::Mlp { input: 5, hidden: 7, output: 1 }, -0.7, 3);
        let ck = Checkpoint::new(p, 3, "nav1-5 left");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            Checkpoint::load(Path::new("/nonexistent/ck.json")),
            Err(Error::MissingCheckpoint(_))
        ));
    }
}
