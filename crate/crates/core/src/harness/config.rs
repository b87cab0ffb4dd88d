//! Experiment configuration: one TOML document per experiment, versioned,
//! with unknown keys rejected everywhere.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curriculum::{BarrierStages, FindSb1Config, Method, Plan};
use crate::envs::{AngleEnv, AngleParams, AngleSide, BaseReward, Env, NavEnv, NavParams, Side};
use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Point2, RegionSet};
use crate::rl::{Arch, Convergence, LandscapeConfig, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    Nav1,
    Nav2,
    Angle,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<EnvName>,
    /// Barrier width of `nav1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    /// Overrides merged onto the environment's default parameters.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
}

impl EnvironmentConfig {
    pub fn build(&self) -> Result<Env> {
        let name = self
            .name
            .ok_or_else(|| Error::config("environment.name", "missing; expected nav1, nav2 or angle"))?;
        if name != EnvName::Nav1 && self.size.is_some() {
            return Err(Error::config("environment.size", "only nav1 takes a barrier size"));
        }
        match name {
            EnvName::Nav1 => {
                let size = self
                    .size
                    .ok_or_else(|| Error::config("environment.size", "nav1 needs a barrier size"))?;
                let params = overlay(NavParams::default(), &self.params, "environment.params")?;
                NavEnv::nav1(size, params, self.seed)
                    .map(Env::Nav)
                    .map_err(|e| Error::config("environment.size", e.to_string()))
            }
            EnvName::Nav2 => {
                let params = overlay(NavParams::nav2_defaults(), &self.params, "environment.params")?;
                Ok(Env::Nav(NavEnv::nav2(params, self.seed)))
            }
            EnvName::Angle => {
                let params = overlay(AngleParams::default(), &self.params, "environment.params")?;
                Ok(Env::Angle(AngleEnv::new(params, self.seed)))
            }
        }
    }
}

/// Deserialises `base` with the keys of `overrides` replaced.
fn overlay<T: Serialize + DeserializeOwned>(base: T, overrides: &toml::Table, prefix: &str) -> Result<T> {
    let mut table =
        toml::Table::try_from(&base).map_err(|e| Error::config(prefix, e.to_string()))?;
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| path_error(prefix, e))
}

fn path_error(prefix: &str, e: serde_path_to_error::Error<toml::de::Error>) -> Error {
    let path = e.path().to_string();
    let message = e.inner().message().to_string();
    let mut key: Vec<&str> = Vec::new();
    if !prefix.is_empty() {
        key.push(prefix);
    }
    if path != "." && !path.is_empty() {
        key.push(&path);
    }
    // Missing and unknown fields are reported against their parent table.
    let field = ["missing field `", "unknown field `"]
        .iter()
        .find_map(|p| message.strip_prefix(p))
        .and_then(|rest| rest.split('`').next());
    // Some deserialisers already end the path at the offending field.
    if let Some(f) = field.filter(|f| path.rsplit('.').next() != Some(f)) {
        key.push(f);
    }
    let key = if key.is_empty() { "<root>".to_string() } else { key.join(".") };
    Error::config(key, message)
}

/// Prefixes the key of a configuration error.
fn within(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config { key, message } => Error::config(format!("{prefix}.{key}"), message),
        other => Error::config(prefix, other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Hidden width of the MLP.
    pub hidden: usize,
    pub init_log_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kind: PolicyKind::Mlp,
            hidden: 32,
            init_log_std: -0.5,
        }
    }
}

impl PolicyConfig {
    pub fn arch(&self, env: &Env) -> Result<Arch> {
        let spec = env.spec();
        match self.kind {
            PolicyKind::Linear => Ok(Arch::Linear {
                input: spec.obs_dim,
                output: spec.action_dim,
            }),
            PolicyKind::Mlp if self.hidden == 0 => Err(Error::config("policy.hidden", "must be at least 1")),
            PolicyKind::Mlp => Ok(Arch::Mlp {
                input: spec.obs_dim,
                hidden: self.hidden,
                output: spec.action_dim,
            }),
        }
    }
}

/// Which homotopy class a task rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// One side per barrier (`left`/`right`), or a posture (`up`/`down`)
    /// for the angle task.
    pub sides: Vec<String>,
    /// Replaces the side-preference weight (posture weight for `angle`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side_coef: Option<f64>,
}

impl TaskConfig {
    pub fn base_reward(&self, env: &Env, key: &str) -> Result<BaseReward> {
        match env {
            Env::Nav(n) => {
                let sides = self
                    .sides
                    .iter()
                    .map(|s| parse_side(s, key))
                    .collect::<Result<Vec<_>>>()?;
                let parts = n.barrier().parts.len();
                if sides.len() != parts {
                    return Err(Error::config(
                        format!("{key}.sides"),
                        format!("{} needs {parts} side(s), got {}", n.name(), sides.len()),
                    ));
                }
                if parts == 1 {
                    let mut base = n.swerve_reward(sides[0]);
                    if let (Some(c), BaseReward::Swerve { side_coef, .. }) = (self.side_coef, &mut base) {
                        *side_coef = c;
                    }
                    Ok(base)
                } else if self.side_coef.is_some() {
                    Err(Error::config(format!("{key}.side_coef"), "only single-barrier tasks take a side weight"))
                } else {
                    Ok(n.classes_reward(sides))
                }
            }
            Env::Angle(a) => {
                let [side] = self.sides.as_slice() else {
                    return Err(Error::config(format!("{key}.sides"), "angle needs exactly one posture"));
                };
                let side = match side.as_str() {
                    "up" => AngleSide::Up,
                    "down" => AngleSide::Down,
                    other => {
                        return Err(Error::config(
                            format!("{key}.sides"),
                            format!("unknown posture `{other}`; expected up or down"),
                        ))
                    }
                };
                let mut base = a.posture_reward(side);
                if let (Some(c), BaseReward::Posture { coef, .. }) = (self.side_coef, &mut base) {
                    *coef = c;
                }
                Ok(base)
            }
        }
    }

    /// Class label a policy solving this task is expected to produce.
    pub fn class_label(&self, env: &Env) -> String {
        match env {
            Env::Nav(_) => self
                .sides
                .iter()
                .map(|s| if s == "left" { 'L' } else { 'R' })
                .collect(),
            Env::Angle(_) => self.sides.concat(),
        }
    }
}

fn parse_side(s: &str, key: &str) -> Result<Side> {
    match s {
        "left" => Ok(Side::Left),
        "right" => Ok(Side::Right),
        other => Err(Error::config(
            format!("{key}.sides"),
            format!("unknown side `{other}`; expected left or right"),
        )),
    }
}

fn default_attempts() -> u32 {
    1
}

fn never() -> Convergence {
    Convergence::Never
}

/// How source policies are trained and accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub sides: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side_coef: Option<f64>,
    /// Train the first phase without the barrier penalty.
    #[serde(default)]
    pub relaxed: bool,
    pub budget: u64,
    #[serde(default = "never")]
    pub convergence: Convergence,
    /// Reward-weight curriculum run after the first phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub curriculum_budget: u64,
    /// Fresh initialisations tried before giving up.
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    /// Smallest acceptable noise-free return on the source task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_return: Option<f64>,
}

impl SourceConfig {
    pub fn task(&self) -> TaskConfig {
        TaskConfig {
            sides: self.sides.clone(),
            side_coef: self.side_coef,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardScheduleConfig {
    pub alphas: Vec<f64>,
}

/// Polygon literal: counter-clockwise `[x, y]` vertices.
pub type PolygonLiteral = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierScheduleConfig {
    /// Stage count of the automatic schedule, final stage included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,
    /// Explicit nested stages, each a list of polygons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsets: Option<Vec<Vec<PolygonLiteral>>>,
}

pub const DEFAULT_AUTO_STAGES: usize = 3;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedules {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ease_reward: Option<RewardScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ease_barrier: Option<BarrierScheduleConfig>,
}

/// Derives the band centre from random-init runs on the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub runs: usize,
    /// Steps per reference run; defaults to the experiment budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    pub trajectories: bool,
    pub curves: bool,
    pub landscape: bool,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig {
            trajectories: true,
            curves: true,
            landscape: true,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_stage_convergence() -> Convergence {
    Convergence::Plateau { tolerance: 0.5 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub budget: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub l2sp_coef: f64,
    /// Rule for the relaxed and intermediate curriculum stages.
    #[serde(default = "default_stage_convergence")]
    pub stage_convergence: Convergence,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    pub source: SourceConfig,
    pub target: TaskConfig,
    #[serde(default)]
    pub schedules: Schedules,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub find_sb1: FindSb1Config,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default)]
    pub landscape: LandscapeConfig,
    #[serde(default)]
    pub plots: PlotConfig,
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.message()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| path_error("", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    /// Hex SHA-256 of the canonical serialisation. The output directory is
    /// excluded: it locates results rather than defining them.
    pub fn hash(&self) -> Result<String> {
        let canonical = ExperimentConfig {
            output: default_output(),
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}; expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.budget == 0 {
            return Err(Error::config("budget", "must be positive"));
        }
        if !(self.l2sp_coef >= 0.0) {
            return Err(Error::config("l2sp_coef", "must be non-negative"));
        }
        let env = self.environment.build()?;
        self.policy.arch(&env)?;
        self.source.task().base_reward(&env, "source")?;
        self.target.base_reward(&env, "target")?;
        self.train.validate().map_err(|e| within("train", e))?;
        self.find_sb1.validate().map_err(|e| within("find_sb1", e))?;
        if self.source.budget == 0 {
            return Err(Error::config("source.budget", "must be positive"));
        }
        if self.source.max_attempts == 0 {
            return Err(Error::config("source.max_attempts", "must be at least 1"));
        }
        if let Some(alphas) = &self.source.alphas {
            crate::curriculum::validate_alphas(alphas).map_err(|e| within("source.alphas", e))?;
            if self.source.curriculum_budget == 0 {
                return Err(Error::config("source.curriculum_budget", "must be positive with alphas"));
            }
        }
        if let Some(c) = &self.calibration {
            if c.runs == 0 {
                return Err(Error::config("calibration.runs", "must be at least 1"));
            }
            if !matches!(self.train.convergence, Convergence::Band { .. }) {
                return Err(Error::config(
                    "calibration",
                    "calibration sets a band centre; train.convergence must use the band rule",
                ));
            }
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::config("methods", format!("{} listed twice", m.name())));
            }
            self.plan(*m, &env)?;
        }
        Ok(())
    }

    /// Schedule of a method; `None` for baselines.
    pub fn plan(&self, method: Method, env: &Env) -> Result<Option<Plan>> {
        match method {
            Method::EaseReward => {
                let s = self.schedules.ease_reward.as_ref().ok_or_else(|| {
                    Error::config("schedules.ease_reward", "ease_reward is listed but has no schedule")
                })?;
                crate::curriculum::validate_alphas(&s.alphas)
                    .map_err(|e| within("schedules.ease_reward.alphas", e))?;
                Ok(Some(Plan::Reward { alphas: s.alphas.clone() }))
            }
            Method::EaseBarrier => {
                let s = self.schedules.ease_barrier.as_ref().ok_or_else(|| {
                    Error::config("schedules.ease_barrier", "ease_barrier is listed but has no schedule")
                })?;
                let stages = match (&s.subsets, s.stages) {
                    (Some(subsets), stages) => {
                        if stages.is_some_and(|k| k != subsets.len()) {
                            return Err(Error::config(
                                "schedules.ease_barrier.stages",
                                "disagrees with the number of explicit subsets",
                            ));
                        }
                        let penalty = env.barrier().penalty();
                        let regions = subsets
                            .iter()
                            .map(|stage| region_literal(stage, penalty))
                            .collect::<Result<Vec<_>>>()
                            .map_err(|e| within("schedules.ease_barrier.subsets", e))?;
                        BarrierStages::Explicit(regions)
                    }
                    (None, Some(0)) => {
                        return Err(Error::config("schedules.ease_barrier.stages", "must be at least 1"))
                    }
                    (None, stages) => BarrierStages::Auto {
                        stages: stages.unwrap_or(DEFAULT_AUTO_STAGES),
                    },
                };
                if let (BarrierStages::Explicit(regions), Some(full)) = (&stages, env.barrier().as_regions()) {
                    crate::curriculum::validate_subsets(regions, full)
                        .map_err(|e| within("schedules.ease_barrier.subsets", e))?;
                }
                Ok(Some(Plan::Barrier(stages)))
            }
            _ => Ok(None),
        }
    }
}

/// Builds a region from polygon literals.
pub fn region_literal(polygons: &[PolygonLiteral], penalty: f64) -> Result<RegionSet> {
    let parts = polygons
        .iter()
        .map(|vs| ConvexPolygon::new(vs.iter().map(|v| Point2::new(v[0], v[1])).collect()))
        .collect::<Result<Vec<_>>>()?;
    RegionSet::new(parts, penalty)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seeds = [0, 1]
budget = 1000
methods = ["naive", "ease_barrier"]

[environment]
name = "nav1"
size = 7

[source]
sides = ["left"]
budget = 500

[target]
sides = ["right"]

[schedules.ease_barrier]
stages = 4
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1]);
        assert_eq!(cfg.methods, vec![Method::Naive, Method::EaseBarrier]);
        let env = cfg.environment.build().unwrap();
        assert_eq!(env.name(), "nav1-7");
        assert!(matches!(
            cfg.plan(Method::EaseBarrier, &env).unwrap(),
            Some(Plan::Barrier(BarrierStages::Auto { stages: 4 }))
        ));
    }

    fn key_of(text: &str) -> String {
        match ExperimentConfig::from_toml_str(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_env_name_names_the_key() {
        assert_eq!(key_of(&MINIMAL.replace("name = \"nav1\"\n", "")), "environment.name");
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        assert_eq!(key_of(&MINIMAL.replace("size = 7", "size = 7\ncolour = 3")), "environment.colour");
        assert_eq!(key_of(&format!("{MINIMAL}\n[train]\nlearning_rat = 0.1\n")), "train.learning_rat");
        assert_eq!(
            key_of(&MINIMAL.replace("size = 7", "size = 7\n[environment.params]\nspeeed = 2.0")),
            "environment.params.speeed"
        );
    }

    #[test]
    fn structural_rules() {
        assert_eq!(key_of(&MINIMAL.replace("seeds = [0, 1]", "seeds = []")), "seeds");
        assert_eq!(key_of(&MINIMAL.replace("budget = 1000", "budget = 0")), "budget");
        assert_eq!(key_of(&MINIMAL.replace("schema_version = 1", "schema_version = 9")), "schema_version");
        assert_eq!(
            key_of(&MINIMAL.replace("[schedules.ease_barrier]\nstages = 4", "")),
            "schedules.ease_barrier"
        );
        assert_eq!(key_of(&MINIMAL.replace("size = 7", "size = 4")), "environment.size");
        assert_eq!(key_of(&MINIMAL.replace("sides = [\"right\"]", "sides = [\"up\"]")), "target.sides");
    }

    #[test]
    fn nav2_params_start_from_their_own_defaults() {
        let text = MINIMAL
            .replace("name = \"nav1\"\nsize = 7", "name = \"nav2\"\n[environment.params]\nstep_cost = 1.0")
            .replace("[\"left\"]", "[\"left\", \"left\"]")
            .replace("[\"right\"]", "[\"right\", \"right\"]")
            .replace("\"naive\", \"ease_barrier\"", "\"naive\"");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let Env::Nav(n) = cfg.environment.build().unwrap() else { panic!() };
        assert_eq!(n.params.discount, 1.0);
        assert_eq!(n.params.step_cost, 1.0);
    }

    #[test]
    fn explicit_subsets_are_checked() {
        let text = MINIMAL.replace(
            "stages = 4",
            "subsets = [[[[-1.0, 9.0], [1.0, 9.0], [1.0, 11.0], [-1.0, 11.0]]], \
             [[[-3.5, 9.0], [3.5, 9.0], [3.5, 11.0], [-3.5, 11.0]]]]",
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let env = cfg.environment.build().unwrap();
        let Some(Plan::Barrier(BarrierStages::Explicit(s))) = cfg.plan(Method::EaseBarrier, &env).unwrap() else {
            panic!()
        };
        assert_eq!(s.len(), 2);
        let bad = text.replace("[-1.0, 9.0], [1.0, 9.0]", "[-1.0, 9.0], [5.0, 9.0]");
        assert_eq!(key_of(&bad), "schedules.ease_barrier.subsets");
    }
}
