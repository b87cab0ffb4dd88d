//! Source training, band calibration, the method × seed transfer grid and
//! the landscape scan, each writing into its own directory.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::plot::{curve_svg, heatmap_svg, scene_svg, Layer};
use super::table::{collect_named, ResultsTable};
use crate::curriculum::{run_curriculum, transfer, Method, Schedule, StageRecord, TransferJob, TransferOutcome, TransferReport};
use crate::envs::{rollout, Barrier, Env, NoiseMode, RewardSpec};
use crate::error::{Error, Result};
use crate::geometry::{Bounds, Point2, RegionSet};
use crate::homotopy::{fmt_f64, Trajectory};
use crate::rl::{derive_seed, evaluate, landscape_scan, train, Arch, Checkpoint, Convergence, Landscape, PolicyParams, TrainConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const SOURCE_STREAM: u64 = 20;
const CALIBRATION_STREAM: u64 = 21;
const SOURCE_CURRICULUM_STREAM: u64 = 22;

/// Provenance record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub env: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    traj.write_csv(BufWriter::new(fs::File::create(path)?))
}

/// Geometry needed to redraw a run without its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub env: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<[[f64; 2]; 2]>,
    pub barrier: Vec<Vec<[f64; 2]>>,
    pub stages: Vec<SceneStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneStage {
    pub label: String,
    pub alpha: f64,
    /// Penalised polygons of the stage; empty when none are.
    pub active: Vec<Vec<[f64; 2]>>,
}

fn polygons(region: &RegionSet) -> Vec<Vec<[f64; 2]>> {
    region
        .parts
        .iter()
        .map(|p| p.vertices().iter().map(|v| [v.x, v.y]).collect())
        .collect()
}

fn active_polygons(env: &Env, reward: &RewardSpec) -> Vec<Vec<[f64; 2]>> {
    match &reward.active {
        Barrier::Regions(r) => polygons(r),
        Barrier::Intervals(i) if !i.intervals().is_empty() => polygons(&env.barrier_regions()),
        Barrier::Intervals(_) => Vec::new(),
    }
}

/// A validated experiment with its environment and rewards built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub env: Env,
    pub source_reward: RewardSpec,
    pub target_reward: RewardSpec,
    pub arch: Arch,
    pub config_hash: String,
}

/// A trained and accepted source policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceOutcome {
    pub seed: u64,
    pub policy: PolicyParams,
    /// Initialisations tried, the accepted one included.
    pub attempts: u32,
    pub phases: Vec<StageRecord>,
    pub total_steps: u64,
    pub mean_return: f64,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let env = config.environment.build()?;
        let source_reward = env.target_reward(config.source.task().base_reward(&env, "source")?);
        let target_reward = env.target_reward(config.target.base_reward(&env, "target")?);
        let arch = config.policy.arch(&env)?;
        let config_hash = config.hash()?;
        Ok(Experiment {
            config,
            env,
            source_reward,
            target_reward,
            arch,
            config_hash,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.output
    }

    pub fn source_dir(&self, seed: u64) -> PathBuf {
        self.out_dir().join("sources").join(format!("seed-{seed}"))
    }

    pub fn run_dir(&self, method: Method, seed: u64) -> PathBuf {
        self.out_dir().join("runs").join(method.name()).join(format!("seed-{seed}"))
    }

    fn manifest(&self, command: &str, method: Option<Method>, seed: Option<u64>) -> Manifest {
        Manifest {
            tool: "eieo".into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            config_sha256: self.config_hash.clone(),
            env: self.env.name(),
            method: method.map(|m| m.name().to_string()),
            seed,
        }
    }

    fn scene(&self, stages: &[StageRecord]) -> Scene {
        let field = match &self.env {
            Env::Nav(n) => Some([[n.field.min.x, n.field.min.y], [n.field.max.x, n.field.max.y]]),
            Env::Angle(_) => None,
        };
        Scene {
            env: self.env.name(),
            field,
            barrier: polygons(&self.env.barrier_regions()),
            stages: stages
                .iter()
                .map(|s| SceneStage {
                    label: s.label.clone(),
                    alpha: s.reward.alpha,
                    active: active_polygons(&self.env, &s.reward),
                })
                .collect(),
        }
    }

    /// Whether the noise-free rollout solves the source task in its class.
    pub fn accepts_source(&self, policy: &PolicyParams) -> Result<bool> {
        let ep = rollout(&self.env, policy, &self.source_reward, 0, NoiseMode::Mean)?;
        let reaches = self.env.spec().goal_set.is_none() || ep.reached_goal;
        let label = self.config.source.task().class_label(&self.env);
        let class_ok = self.env.classify(&ep.trajectory).as_deref() == Some(label.as_str());
        let return_ok = self.config.source.min_return.is_none_or(|m| ep.ret >= m);
        Ok(!ep.collided && reaches && class_ok && return_ok)
    }

    /// Trains from fresh initialisations until one passes
    /// [`Experiment::accepts_source`].
    pub fn train_source(&self, seed: u64) -> Result<SourceOutcome> {
        let src = &self.config.source;
        let phase_train = TrainConfig {
            convergence: src.convergence,
            ..self.config.train.clone()
        };
        for attempt in 0..src.max_attempts {
            let run_seed = derive_seed(seed, SOURCE_STREAM, attempt as u64);
            let init = PolicyParams::init(self.arch, self.config.policy.init_log_std, run_seed);
            let first_reward = if src.relaxed {
                self.source_reward.relaxed()
            } else {
                self.source_reward.clone()
            };
            let cfg = TrainConfig {
                max_interaction_steps: src.budget,
                seed: run_seed,
                ..phase_train.clone()
            };
            let first = match train(&self.env, &first_reward, &init, &cfg) {
                Ok(r) => r,
                Err(Error::DivergedTraining { .. }) => continue,
                Err(e) => return Err(e),
            };
            let mut policy = first.final_theta.clone();
            let mut phases = vec![StageRecord {
                label: if src.relaxed { "relax".into() } else { "source".into() },
                reward: first_reward,
                report: first,
            }];
            if let Some(alphas) = &src.alphas {
                let job = TransferJob {
                    method: Method::EaseReward,
                    env: self.env.clone(),
                    target: self.source_reward.clone(),
                    source_policy: policy.clone(),
                    plan: None,
                    l2sp_coef: 0.0,
                    budget: src.curriculum_budget,
                    seed: derive_seed(seed, SOURCE_CURRICULUM_STREAM, attempt as u64),
                    train: phase_train.clone(),
                    stage_convergence: self.config.stage_convergence,
                    find_sb1: self.config.find_sb1,
                    init_log_std: self.config.policy.init_log_std,
                };
                let schedule = Schedule::RewardWeight { alphas: alphas.clone() };
                let run = run_curriculum(&job, &policy, &schedule, src.curriculum_budget)?;
                policy = run.policy;
                phases.extend(run.stages);
            }
            if self.accepts_source(&policy)? {
                let ep = rollout(&self.env, &policy, &self.source_reward, 0, NoiseMode::Mean)?;
                return Ok(SourceOutcome {
                    seed,
                    total_steps: phases.iter().map(|p| p.report.interaction_steps).sum(),
                    policy,
                    attempts: attempt + 1,
                    phases,
                    mean_return: ep.ret,
                });
            }
        }
        Err(Error::BudgetExhausted(format!(
            "no source policy for seed {seed} passed validation in {} attempt(s)",
            src.max_attempts
        )))
    }

    pub fn write_source(&self, out: &SourceOutcome) -> Result<()> {
        let dir = self.source_dir(out.seed);
        fs::create_dir_all(&dir)?;
        Checkpoint::new(out.policy.clone(), out.seed, format!("{} source {}", self.env.name(), self.config.source.sides.join("-")))
            .save(&dir.join("checkpoint.json"))?;
        write_curve(&dir.join("curve.csv"), &out.phases)?;
        let ep = rollout(&self.env, &out.policy, &self.source_reward, 0, NoiseMode::Mean)?;
        write_trajectory(&dir.join("traj-source.csv"), &ep.trajectory)?;
        write_json(&dir.join("scene.json"), &self.scene(&[]))?;
        write_json(&dir.join("manifest.json"), &self.manifest("train", None, Some(out.seed)))
    }

    pub fn load_source(&self, seed: u64) -> Result<PolicyParams> {
        let ck = Checkpoint::load(&self.source_dir(seed).join("checkpoint.json"))?;
        if ck.policy.arch != self.arch {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint for seed {seed} does not match the configured policy"
            )));
        }
        Ok(ck.policy)
    }

    /// Band centre from random-init reference runs on the target: the best
    /// final evaluation return among them. `None` without calibration.
    pub fn calibrate(&self) -> Result<Option<f64>> {
        let Some(c) = &self.config.calibration else {
            return Ok(None);
        };
        let budget = c.budget.unwrap_or(self.config.budget);
        let finals = (0..c.runs as u64)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(0, CALIBRATION_STREAM, r);
                let init = PolicyParams::init(self.arch, self.config.policy.init_log_std, seed);
                let cfg = TrainConfig {
                    max_interaction_steps: budget,
                    seed,
                    convergence: Convergence::Never,
                    ..self.config.train.clone()
                };
                let report = train(&self.env, &self.target_reward, &init, &cfg)?;
                let ev = evaluate(
                    &self.env,
                    &self.target_reward,
                    &report.final_theta,
                    cfg.eval_episodes,
                    seed,
                    cfg.eval_noise,
                )?;
                Ok(ev.mean_return)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(finals.into_iter().reduce(f64::max))
    }

    /// Training template with the calibrated band centre applied.
    pub fn target_train(&self, centre: Option<f64>) -> TrainConfig {
        let mut train = self.config.train.clone();
        if let (Some(c), Convergence::Band { center, .. }) = (centre, &mut train.convergence) {
            *center = c;
        }
        train
    }

    pub fn job(&self, method: Method, seed: u64, source: PolicyParams, train: &TrainConfig) -> Result<TransferJob> {
        Ok(TransferJob {
            method,
            env: self.env.clone(),
            target: self.target_reward.clone(),
            source_policy: source,
            plan: self.config.plan(method, &self.env)?,
            l2sp_coef: self.config.l2sp_coef,
            budget: self.config.budget,
            seed,
            train: train.clone(),
            stage_convergence: self.config.stage_convergence,
            find_sb1: self.config.find_sb1,
            init_log_std: self.config.policy.init_log_std,
        })
    }

    pub fn write_run(&self, out: &TransferOutcome, source: &PolicyParams) -> Result<()> {
        let r = &out.report;
        let dir = self.run_dir(r.method, r.seed);
        fs::create_dir_all(&dir)?;
        fs::write(
            dir.join("run.csv"),
            format!("{}\n{}\n", TransferReport::CSV_HEADER, r.csv_row()),
        )?;
        write_curve(&dir.join("curve.csv"), &out.stages)?;
        let src = rollout(&self.env, source, &self.target_reward, 0, NoiseMode::Mean)?;
        write_trajectory(&dir.join("traj-source.csv"), &src.trajectory)?;
        for stage in &out.stages {
            let ep = rollout(&self.env, &stage.report.final_theta, &self.target_reward, 0, NoiseMode::Mean)?;
            write_trajectory(&dir.join(format!("traj-{}.csv", stage.label)), &ep.trajectory)?;
        }
        Checkpoint::new(out.policy.clone(), r.seed, format!("{} {}", self.env.name(), r.method.name()))
            .save(&dir.join("policy.json"))?;
        write_json(&dir.join("scene.json"), &self.scene(&out.stages))?;
        if let Some(note) = &out.note {
            fs::write(dir.join("note.txt"), format!("{note}\n"))?;
        }
        write_json(&dir.join("manifest.json"), &self.manifest("transfer", Some(r.method), Some(r.seed)))
    }
}

/// `stage,step,mean_return` with steps accumulated across stages.
fn write_curve(path: &Path, stages: &[StageRecord]) -> Result<()> {
    let mut text = String::from("stage,step,mean_return\n");
    let mut offset = 0;
    for s in stages {
        for p in &s.report.return_curve {
            text += &format!("{},{},{}\n", s.label, offset + p.step, fmt_f64(p.mean_return));
        }
        offset += s.report.interaction_steps;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Trains and writes the source policy of every seed.
pub fn run_train(exp: &Experiment, seeds: &[u64]) -> Result<Vec<SourceOutcome>> {
    let outcomes = seeds
        .par_iter()
        .map(|&s| {
            let out = exp.train_source(s)?;
            exp.write_source(&out)?;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSummary {
    pub band_centre: Option<f64>,
    pub reports: Vec<TransferReport>,
    pub table: ResultsTable,
}

/// Runs every (method, seed) job, then writes the results table.
pub fn run_transfer(exp: &Experiment, seeds: &[u64]) -> Result<TransferSummary> {
    let needs_source = exp.config.methods.iter().any(|m| *m != Method::Random);
    let sources = seeds
        .iter()
        .map(|&s| {
            if needs_source {
                exp.load_source(s)
            } else {
                Ok(PolicyParams::init(exp.arch, exp.config.policy.init_log_std, s))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let centre = exp.calibrate()?;
    let train = exp.target_train(centre);
    fs::create_dir_all(exp.out_dir())?;
    if let Some(c) = centre {
        fs::write(exp.out_dir().join("calibration.txt"), format!("band_centre,{}\n", fmt_f64(c)))?;
    }
    let jobs: Vec<(Method, usize)> = exp
        .config
        .methods
        .iter()
        .flat_map(|&m| (0..seeds.len()).map(move |i| (m, i)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(method, i)| {
            let job = exp.job(method, seeds[i], sources[i].clone(), &train)?;
            let out = transfer(&job)?;
            exp.write_run(&out, &sources[i])?;
            Ok(out.report)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = ResultsTable::from_reports(&reports);
    fs::write(exp.out_dir().join("results.csv"), table.to_csv())?;
    fs::write(exp.out_dir().join("results.txt"), table.to_text())?;
    write_json(&exp.out_dir().join("manifest.json"), &exp.manifest("transfer", None, None))?;
    Ok(TransferSummary {
        band_centre: centre,
        reports,
        table,
    })
}

/// Scans the source, barrier and no-barrier grids and writes them.
pub fn run_landscape(exp: &Experiment) -> Result<Landscape> {
    let land = landscape_scan(&exp.env, &exp.source_reward, &exp.target_reward, &exp.config.landscape)?;
    let dir = exp.out_dir().join("landscape");
    fs::create_dir_all(&dir)?;
    land.barrier.write_csv(&dir.join("barrier.csv"))?;
    land.no_barrier.write_csv(&dir.join("no_barrier.csv"))?;
    fs::write(
        dir.join("summary.csv"),
        format!(
            "theta_source_1,theta_source_2,theta_target_1,theta_target_2,hump_barrier,hump_no_barrier\n{},{},{},{},{},{}\n",
            fmt_f64(land.theta_source.0),
            fmt_f64(land.theta_source.1),
            fmt_f64(land.theta_target.0),
            fmt_f64(land.theta_target.1),
            fmt_f64(land.hump_barrier),
            fmt_f64(land.hump_no_barrier)
        ),
    )?;
    if exp.config.plots.landscape {
        fs::write(
            dir.join("barrier.svg"),
            heatmap_svg("loss with barrier", &land.barrier, land.theta_source, land.theta_target),
        )?;
        fs::write(
            dir.join("no_barrier.svg"),
            heatmap_svg("loss without barrier", &land.no_barrier, land.theta_source, land.theta_target),
        )?;
    }
    write_json(&dir.join("manifest.json"), &exp.manifest("landscape", None, Some(exp.config.landscape.seed)))?;
    Ok(land)
}

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    Trajectory::read_csv(fs::File::open(path)?).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn literal_region(polys: &[Vec<[f64; 2]>]) -> Result<RegionSet> {
    super::config::region_literal(polys, 1.0)
}

fn drawing_bounds(scene: &Scene, trajs: &[&Trajectory]) -> Bounds {
    let mut pts: Vec<Point2> = scene
        .barrier
        .iter()
        .flatten()
        .map(|v| Point2::new(v[0], v[1]))
        .chain(trajs.iter().flat_map(|t| t.states().iter().copied()))
        .collect();
    if let Some([lo, hi]) = scene.field {
        pts.push(Point2::new(lo[0], lo[1]));
        pts.push(Point2::new(hi[0], hi[1]));
    }
    let mut b = Bounds {
        min: pts[0],
        max: pts[0],
    };
    for p in &pts {
        b = b.union(&Bounds { min: *p, max: *p });
    }
    b
}

/// Renders one run directory: a snapshot per stage, an overlay of all
/// stages and the learning curve.
pub fn plot_run(dir: &Path) -> Result<Vec<PathBuf>> {
    let scene_path = dir.join("scene.json");
    let scene: Scene = serde_json::from_str(&fs::read_to_string(&scene_path)?).map_err(|e| Error::Parse {
        path: scene_path.display().to_string(),
        message: e.to_string(),
    })?;
    let source_path = dir.join("traj-source.csv");
    let source = source_path.exists().then(|| read_trajectory(&source_path)).transpose()?;
    let stage_trajs = scene
        .stages
        .iter()
        .map(|s| read_trajectory(&dir.join(format!("traj-{}.csv", s.label))))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<&Trajectory> = source.iter().chain(stage_trajs.iter()).collect();
    if all.is_empty() {
        return Err(Error::MissingData(format!("no trajectories in {}", dir.display())));
    }
    let field = drawing_bounds(&scene, &all);
    let barrier = literal_region(&scene.barrier)?;
    let mut written = Vec::new();
    for (stage, traj) in scene.stages.iter().zip(&stage_trajs) {
        let active = literal_region(&stage.active)?;
        let mut layers = Vec::new();
        if let Some(s) = &source {
            layers.push(Layer { label: "source", trajectory: s });
        }
        layers.push(Layer { label: &stage.label, trajectory: traj });
        let path = dir.join(format!("stage-{}.svg", stage.label));
        let title = format!("{} {} (alpha {})", scene.env, stage.label, stage.alpha);
        fs::write(&path, scene_svg(&title, field, &barrier, Some(&active), &layers))?;
        written.push(path);
    }
    let mut layers = Vec::new();
    if let Some(s) = &source {
        layers.push(Layer { label: "source", trajectory: s });
    }
    for (stage, traj) in scene.stages.iter().zip(&stage_trajs) {
        layers.push(Layer { label: &stage.label, trajectory: traj });
    }
    let path = dir.join("overlay.svg");
    fs::write(&path, scene_svg(&scene.env, field, &barrier, None, &layers))?;
    written.push(path);
    let curve_path = dir.join("curve.csv");
    if curve_path.exists() {
        let curve = read_curve(&curve_path)?;
        let path = dir.join("curve.svg");
        fs::write(&path, curve_svg(&scene.env, &curve))?;
        written.push(path);
    }
    Ok(written)
}

fn read_curve(path: &Path) -> Result<Vec<(String, Vec<(u64, f64)>)>> {
    let text = fs::read_to_string(path)?;
    let mut stages: Vec<(String, Vec<(u64, f64)>)> = Vec::new();
    for line in text.lines().skip(1) {
        let bad = || Error::Parse {
            path: path.display().to_string(),
            message: format!("bad curve row `{line}`"),
        };
        let [label, step, ret] = line.split(',').collect::<Vec<_>>()[..] else {
            return Err(bad());
        };
        let point = (step.parse().map_err(|_| bad())?, ret.parse().map_err(|_| bad())?);
        match stages.last_mut() {
            Some((l, pts)) if l == label => pts.push(point),
            _ => stages.push((label.to_string(), vec![point])),
        }
    }
    Ok(stages)
}

/// Plots every run below `dir` (a run directory, or an output root).
pub fn plot_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut scenes = Vec::new();
    collect_named(dir, "scene.json", &mut scenes)?;
    scenes.sort();
    if scenes.is_empty() {
        return Err(Error::MissingData(format!("no run data below {}", dir.display())));
    }
    let mut written = Vec::new();
    for s in scenes {
        written.extend(plot_run(s.parent().expect("file has a parent"))?);
    }
    Ok(written)
}
