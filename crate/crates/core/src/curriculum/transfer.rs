use serde::{Deserialize, Serialize};

use super::{auto_barrier_stages, find_sb1, FindSb1Config, Schedule, Sb1};
use crate::envs::{rollout, Env, NoiseMode, RewardSpec};
use crate::error::{Error, Result};
use crate::geometry::RegionSet;
use crate::homotopy::{fmt_f64, Trajectory};
use crate::rl::{derive_seed, evaluate, train, Convergence, L2Sp, PolicyParams, TrainConfig, TrainReport};

const STAGE_STREAM: u64 = 10;
const INIT_STREAM: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EaseReward,
    EaseBarrier,
    Naive,
    L2sp,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::EaseReward,
        Method::EaseBarrier,
        Method::Naive,
        Method::L2sp,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::EaseReward => "ease_reward",
            Method::EaseBarrier => "ease_barrier",
            Method::Naive => "naive",
            Method::L2sp => "l2sp",
            Method::Random => "random",
        }
    }

    pub fn is_curriculum(self) -> bool {
        matches!(self, Method::EaseReward | Method::EaseBarrier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BarrierStages {
    /// First stage from the subset search, then dilations out to the
    /// barrier; `stages` counts the final full-barrier stage.
    Auto { stages: usize },
    /// Hand-written nested subsets ending at the barrier.
    Explicit(Vec<RegionSet>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Plan {
    Reward { alphas: Vec<f64> },
    Barrier(BarrierStages),
}

/// One transfer run. `train` is the template for every training phase:
/// its convergence rule applies to the final phase, `stage_convergence` to
/// the relaxed and intermediate phases.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferJob {
    pub method: Method,
    pub env: Env,
    pub target: RewardSpec,
    pub source_policy: PolicyParams,
    pub plan: Option<Plan>,
    pub l2sp_coef: f64,
    pub budget: u64,
    pub seed: u64,
    pub train: TrainConfig,
    pub stage_convergence: Convergence,
    pub find_sb1: FindSb1Config,
    /// Initial log standard deviation of a freshly initialised policy.
    pub init_log_std: f64,
}

impl TransferJob {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::config("budget", "must be positive"));
        }
        self.train.validate()?;
        let spec = self.env.spec();
        if self.source_policy.input_dim() != spec.obs_dim || self.source_policy.output_dim() != spec.action_dim {
            return Err(Error::DimensionMismatch("source policy does not fit the environment".into()));
        }
        match (self.method, &self.plan) {
            (Method::EaseReward, Some(Plan::Reward { alphas })) => super::validate_alphas(alphas),
            (Method::EaseBarrier, Some(Plan::Barrier(stages))) => {
                let Some(full) = self.target.barrier.as_regions() else {
                    return Err(Error::InvalidSchedule("barrier mode needs polygon barriers".into()));
                };
                if full.parts.len() != 1 {
                    return Err(Error::InvalidSchedule(
                        "barrier mode supports a single barrier; use reward mode".into(),
                    ));
                }
                match stages {
                    BarrierStages::Auto { stages: 0 } => {
                        Err(Error::InvalidSchedule("need at least one stage".into()))
                    }
                    BarrierStages::Auto { .. } => Ok(()),
                    BarrierStages::Explicit(s) => super::validate_subsets(s, full),
                }
            }
            (Method::EaseReward | Method::EaseBarrier, _) => Err(Error::config(
                "schedule",
                format!("method {} needs a matching schedule", self.method.name()),
            )),
            (Method::L2sp, _) if !(self.l2sp_coef >= 0.0) => {
                Err(Error::config("l2sp_coef", "must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    fn phase_config(&self, phase: u64, budget: u64, convergence: Convergence) -> TrainConfig {
        TrainConfig {
            max_interaction_steps: budget,
            seed: derive_seed(self.seed, STAGE_STREAM, phase),
            convergence,
            ..self.train.clone()
        }
    }
}

/// One training phase of a transfer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub label: String,
    pub reward: RewardSpec,
    pub report: TrainReport,
}

/// Summary row of a transfer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub method: Method,
    pub env: String,
    pub seed: u64,
    pub total_steps: u64,
    pub converged: bool,
    pub stage_steps: Vec<u64>,
    pub final_mean_return: f64,
    pub final_class: Option<String>,
    /// Zero is the relaxed stage; curriculum stages count from one.
    pub failed_stage: Option<usize>,
}

impl TransferReport {
    pub const CSV_HEADER: &'static str =
        "method,env,seed,total_steps,converged,stage_steps,final_mean_return,final_class";

    pub fn csv_row(&self) -> String {
        let stages: Vec<String> = self.stage_steps.iter().map(u64::to_string).collect();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method.name(),
            self.env,
            self.seed,
            self.total_steps,
            self.converged,
            stages.join(";"),
            fmt_f64(self.final_mean_return),
            self.final_class.as_deref().unwrap_or("none")
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub report: TransferReport,
    pub policy: PolicyParams,
    pub stages: Vec<StageRecord>,
    /// Subset search result (barrier mode with an automatic schedule).
    pub sb1: Option<Sb1>,
    /// Why the run stopped early, when it did for a reason other than a
    /// stage running out of budget.
    pub note: Option<String>,
}

/// Trajectory of the noise-free policy under the target reward.
pub fn mean_trajectory(env: &Env, reward: &RewardSpec, policy: &PolicyParams, seed: u64) -> Result<Trajectory> {
    Ok(rollout(env, policy, reward, seed, NoiseMode::Mean)?.trajectory)
}

/// Splits a total budget over phases; unused steps carry forward and the
/// last phase takes the remainder.
struct Budget {
    total: u64,
    phases: u64,
    spent: u64,
    done: u64,
}

impl Budget {
    fn new(total: u64, phases: usize) -> Self {
        Budget {
            total,
            phases: phases as u64,
            spent: 0,
            done: 0,
        }
    }

    fn next(&mut self) -> u64 {
        let share = self.total / self.phases;
        self.done += 1;
        if self.done == self.phases {
            self.total - self.spent
        } else {
            (share * self.done).saturating_sub(self.spent)
        }
    }

    fn spend(&mut self, steps: u64) {
        self.spent += steps;
    }
}

/// Trains from the source policy with the barrier penalty removed.
pub fn relax_stage(job: &TransferJob, budget: u64) -> Result<StageRecord> {
    let reward = job.target.relaxed();
    let cfg = job.phase_config(0, budget, job.stage_convergence);
    let report = train(&job.env, &reward, &job.source_policy, &cfg)?;
    Ok(StageRecord {
        label: "relax".into(),
        reward,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumRun {
    pub policy: PolicyParams,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<usize>,
}

/// Trains through `rewards` in order, each stage starting from the previous
/// stage's result. Stops at the first stage that fails to converge.
/// Barrier-mode stages only converge once evaluation avoids the active set.
fn curriculum_with(
    job: &TransferJob,
    start: &PolicyParams,
    rewards: &[RewardSpec],
    budget: &mut Budget,
    require_clear: bool,
) -> Result<CurriculumRun> {
    let mut policy = start.clone();
    let mut stages = Vec::with_capacity(rewards.len());
    for (k, reward) in rewards.iter().enumerate() {
        let last = k + 1 == rewards.len();
        let convergence = if last {
            job.train.convergence
        } else {
            job.stage_convergence
        };
        let cfg = TrainConfig {
            require_clear,
            ..job.phase_config(k as u64 + 1, budget.next(), convergence)
        };
        let report = match train(&job.env, reward, &policy, &cfg) {
            Ok(r) => r,
            Err(Error::DivergedTraining { .. }) => {
                return Ok(CurriculumRun {
                    policy,
                    stages,
                    failed_stage: Some(k + 1),
                })
            }
            Err(e) => return Err(e),
        };
        budget.spend(report.interaction_steps);
        policy = report.final_theta.clone();
        let converged = report.converged;
        stages.push(StageRecord {
            label: format!("stage{}", k + 1),
            reward: reward.clone(),
            report,
        });
        if !converged {
            return Ok(CurriculumRun {
                policy,
                stages,
                failed_stage: Some(k + 1),
            });
        }
    }
    Ok(CurriculumRun {
        policy,
        stages,
        failed_stage: None,
    })
}

/// Runs the stages of `schedule` from `start` with an even budget split.
pub fn run_curriculum(job: &TransferJob, start: &PolicyParams, schedule: &Schedule, budget: u64) -> Result<CurriculumRun> {
    schedule.validate(&job.target.barrier)?;
    let rewards = stage_rewards(&job.target, schedule)?;
    let mut split = Budget::new(budget, rewards.len());
    let barrier_mode = matches!(schedule, Schedule::BarrierSet { .. });
    curriculum_with(job, start, &rewards, &mut split, barrier_mode)
}

fn stage_rewards(target: &RewardSpec, schedule: &Schedule) -> Result<Vec<RewardSpec>> {
    match schedule {
        Schedule::RewardWeight { alphas } => alphas.iter().map(|&a| target.with_alpha(a)).collect(),
        Schedule::BarrierSet { subsets } => Ok(subsets
            .iter()
            .map(|s| target.with_active_subset(s.clone()))
            .collect()),
    }
}

fn finish(
    job: &TransferJob,
    policy: PolicyParams,
    stages: Vec<StageRecord>,
    failed_stage: Option<usize>,
    sb1: Option<Sb1>,
) -> Result<TransferOutcome> {
    let ev = evaluate(
        &job.env,
        &job.target,
        &policy,
        job.train.eval_episodes,
        derive_seed(job.seed, STAGE_STREAM, u64::MAX),
        job.train.eval_noise,
    )?;
    let stage_steps: Vec<u64> = stages.iter().map(|s| s.report.interaction_steps).collect();
    let converged = failed_stage.is_none() && stages.last().is_some_and(|s| s.report.converged);
    Ok(TransferOutcome {
        report: TransferReport {
            method: job.method,
            env: job.env.name(),
            seed: job.seed,
            total_steps: stage_steps.iter().sum(),
            converged,
            stage_steps,
            final_mean_return: ev.mean_return,
            final_class: ev.dominant_class().map(str::to_owned),
            failed_stage,
        },
        policy,
        stages,
        sb1,
        note: None,
    })
}

/// Relax, then reintroduce the penalty stage by stage.
pub fn ease_in_ease_out(job: &TransferJob) -> Result<TransferOutcome> {
    job.validate()?;
    let plan = job.plan.as_ref().expect("validated");
    let stage_count = match plan {
        Plan::Reward { alphas } => alphas.len(),
        Plan::Barrier(BarrierStages::Auto { stages }) => *stages,
        Plan::Barrier(BarrierStages::Explicit(s)) => s.len(),
    };
    let mut budget = Budget::new(job.budget, stage_count + 1);

    let relax = match relax_stage(job, budget.next()) {
        Ok(r) => r,
        Err(e @ Error::DivergedTraining { .. }) => {
            let mut out = finish(job, job.source_policy.clone(), Vec::new(), Some(0), None)?;
            out.note = Some(e.to_string());
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    budget.spend(relax.report.interaction_steps);
    let relaxed_policy = relax.report.final_theta.clone();
    if !relax.report.converged {
        return finish(job, relaxed_policy, vec![relax], Some(0), None);
    }

    let mut sb1 = None;
    let schedule = match plan {
        Plan::Reward { alphas } => Schedule::RewardWeight {
            alphas: alphas.clone(),
        },
        Plan::Barrier(BarrierStages::Explicit(s)) => Schedule::BarrierSet { subsets: s.clone() },
        Plan::Barrier(BarrierStages::Auto { stages }) => {
            let full = job.target.barrier.as_regions().expect("validated");
            let xi_s = mean_trajectory(&job.env, &job.target, &job.source_policy, job.seed)?;
            let xi_relax = mean_trajectory(&job.env, &job.target, &relaxed_policy, job.seed)?;
            let found = match find_sb1(&xi_s, &xi_relax, full, job.env.anchors(), &job.find_sb1) {
                Ok(f) => f,
                Err(e @ (Error::PreconditionViolated(_) | Error::BudgetExhausted(_))) => {
                    let mut out = finish(job, relaxed_policy, vec![relax], Some(1), None)?;
                    out.note = Some(format!("subset search failed: {e}"));
                    return Ok(out);
                }
                Err(e) => return Err(e),
            };
            let subsets = auto_barrier_stages(&found.region, full, *stages)?;
            sb1 = Some(found);
            Schedule::BarrierSet { subsets }
        }
    };
    schedule.validate(&job.target.barrier)?;
    let rewards = stage_rewards(&job.target, &schedule)?;
    let barrier_mode = matches!(schedule, Schedule::BarrierSet { .. });
    let run = curriculum_with(job, &relaxed_policy, &rewards, &mut budget, barrier_mode)?;
    let mut stages = vec![relax];
    stages.extend(run.stages);
    finish(job, run.policy, stages, run.failed_stage, sb1)
}

/// Naive fine-tuning, L2-SP or training from a fresh initialisation, all on
/// the full target with the whole budget.
pub fn baseline_transfer(job: &TransferJob) -> Result<TransferOutcome> {
    job.validate()?;
    let mut cfg = job.phase_config(1, job.budget, job.train.convergence);
    let init = match job.method {
        Method::Naive => job.source_policy.clone(),
        Method::L2sp => {
            cfg.l2sp = Some(L2Sp {
                coef: job.l2sp_coef,
                anchor: job.source_policy.theta.clone(),
            });
            job.source_policy.clone()
        }
        Method::Random => PolicyParams::init(
            job.source_policy.arch,
            job.init_log_std,
            derive_seed(job.seed, INIT_STREAM, 0),
        ),
        m => {
            return Err(Error::config(
                "method",
                format!("{} is not a baseline", m.name()),
            ))
        }
    };
    match train(&job.env, &job.target, &init, &cfg) {
        Ok(report) => {
            let policy = report.final_theta.clone();
            let stage = StageRecord {
                label: "target".into(),
                reward: job.target.clone(),
                report,
            };
            finish(job, policy, vec![stage], None, None)
        }
        Err(Error::DivergedTraining { .. }) => finish(job, init, Vec::new(), Some(1), None),
        Err(e) => Err(e),
    }
}

/// Dispatches on the job's method.
pub fn transfer(job: &TransferJob) -> Result<TransferOutcome> {
    if job.method.is_curriculum() {
        ease_in_ease_out(job)
    } else {
        baseline_transfer(job)
    }
}
