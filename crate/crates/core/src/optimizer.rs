//! Group-relative policy optimisation with boundary-aware rewards.
//!
//! One training step samples a batch of questions, rolls out a search-disabled
//! and a search-enabled group per question, labels each question from the two
//! groups, scores every trajectory under the variant's reward rule, normalises
//! advantages within each group and takes one clipped, KL-regularised gradient
//! step.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{
    estimate_boundary, BoundaryLabel, BoundaryRecord, BoundaryVerdict, RolloutGroups,
};
use crate::environment::{EnvError, Environment, Question};
use crate::metrics::{compute_dynamics, EvalRecord, MetricsError, MetricsReport};
use crate::policy::{
    action_distribution, log_prob_gradient, rollout, rollout_groups_par, Checkpoint, GroupSplit,
    PolicyError, PolicyParams, Rollout, NUM_ACTIONS, NUM_FEATURES, NUM_WEIGHTS,
};
use crate::reward::{
    accuracy_f1, breakdown, fixed_penalty_reward, RewardConfig, RewardError, RewardRecord, Stage,
};
use crate::seed::{derive_seed, derived_rng};
use crate::trajectory::{search_count, Mode};

/// Floor on the group standard deviation when normalising advantages.
pub const ADVANTAGE_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training question set is empty")]
    NoQuestions,
    #[error("validation question set is empty")]
    NoValidation,
    #[error("need {need} questions per step but only {have} training questions exist")]
    QuestionsExhausted { need: usize, have: usize },
    #[error("non-finite gradient at step {step}: {diagnostics}")]
    NonFiniteGradient { step: usize, diagnostics: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Zero-mean, unit population-std scaling of one group's rewards.
/// A group whose rewards are all equal maps to zeros.
pub fn normalize_group_advantages(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if rewards.iter().all(|r| *r == rewards[0]) || std == 0.0 {
        return vec![0.0; rewards.len()];
    }
    let scale = std.max(ADVANTAGE_EPS);
    rewards.iter().map(|r| (r - mean) / scale).collect()
}

/// Clipped-surrogate and KL statistics of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub kl: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateSettings {
    pub lr: f64,
    pub clip_ratio: f64,
    pub kl_coeff: f64,
}

fn kl_divergence(p: &[f64; NUM_ACTIONS], q: &[f64; NUM_ACTIONS]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * (p / q).ln())
        .sum()
}

/// Value and gradient of
/// `mean_i sum_t min(rho A_i, clip(rho) A_i) - kl_coeff * mean_s KL(new || old)`.
pub fn surrogate(
    params: &PolicyParams,
    old: &PolicyParams,
    batch: &[(&Rollout, f64)],
    clip_ratio: f64,
    kl_coeff: f64,
) -> (f64, [f64; NUM_WEIGHTS], UpdateStats) {
    let mut grad = [0.0; NUM_WEIGHTS];
    let mut objective = 0.0;
    let mut ratio_sum = 0.0;
    let mut clipped = 0usize;
    let mut decisions = 0usize;
    let mut kl_sum = 0.0;
    let mut kl_grad = [0.0; NUM_WEIGHTS];
    let trajectories = batch.len().max(1) as f64;

    for (rollout, adv) in batch {
        for d in &rollout.decisions {
            decisions += 1;
            let p = action_distribution(params, &d.features, &d.legal);
            let q = action_distribution(old, &d.features, &d.legal);
            let a = d.action.index();
            let rho = p[a] / q[a];
            ratio_sum += rho;
            let clipped_rho = rho.clamp(1.0 - clip_ratio, 1.0 + clip_ratio);
            let unclipped_term = rho * adv;
            let clipped_term = clipped_rho * adv;
            if clipped_term < unclipped_term {
                clipped += 1;
                objective += clipped_term / trajectories;
            } else {
                objective += unclipped_term / trajectories;
                let score = log_prob_gradient(params, &d.features, &d.legal, d.action);
                for (g, s) in grad.iter_mut().zip(score) {
                    *g += adv * rho * s / trajectories;
                }
            }

            let kl = kl_divergence(&p, &q);
            kl_sum += kl;
            for j in 0..NUM_ACTIONS {
                if p[j] <= 0.0 {
                    continue;
                }
                let dz = p[j] * ((p[j] / q[j]).ln() - kl);
                for f in 0..NUM_FEATURES {
                    kl_grad[f * NUM_ACTIONS + j] += d.features[f] * dz;
                }
            }
        }
    }
    let states = decisions.max(1) as f64;
    let kl_mean = kl_sum / states;
    for (g, k) in grad.iter_mut().zip(kl_grad) {
        *g -= kl_coeff * k / states;
    }
    objective -= kl_coeff * kl_mean;
    let stats = UpdateStats {
        mean_ratio: if decisions == 0 {
            1.0
        } else {
            ratio_sum / states
        },
        clip_fraction: if decisions == 0 {
            0.0
        } else {
            clipped as f64 / states
        },
        kl: kl_mean,
        objective,
    };
    (objective, grad, stats)
}

/// One gradient-ascent step on [`surrogate`], starting from `params`.
pub fn update_policy(
    params: &PolicyParams,
    batch: &[(&Rollout, f64)],
    old: &PolicyParams,
    settings: UpdateSettings,
) -> Result<(PolicyParams, UpdateStats), String> {
    let (_, grad, stats) = surrogate(params, old, batch, settings.clip_ratio, settings.kl_coeff);
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(format!(
            "gradient[{i}] = {}, mean_ratio = {}, kl = {}",
            grad[i], stats.mean_ratio, stats.kl
        ));
    }
    let weights = params
        .weights()
        .iter()
        .zip(grad)
        .map(|(w, g)| w + settings.lr * g)
        .collect();
    let next = PolicyParams::from_weights(weights).map_err(|e| e.to_string())?;
    Ok((next, stats))
}

/// True iff none of the last `patience` entries beats the best value before
/// them by at least `min_delta`, each compared against the running best.
pub fn detect_plateau(history: &[f64], patience: usize, min_delta: f64) -> bool {
    assert!(patience >= 1, "patience must be at least 1");
    if history.len() <= patience {
        return false;
    }
    let split = history.len() - patience;
    let mut best = history[..split]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    for &v in &history[split..] {
        if v - best >= min_delta {
            return false;
        }
        best = best.max(v);
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Saas,
    OutcomeOnly,
    #[serde(rename = "fixed_penalty")]
    FixedPenaltyFromStart,
    NoStageWise,
    FrozenBoundary,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Saas,
        Variant::OutcomeOnly,
        Variant::FixedPenaltyFromStart,
        Variant::NoStageWise,
        Variant::FrozenBoundary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Saas => "saas",
            Variant::OutcomeOnly => "outcome_only",
            Variant::FixedPenaltyFromStart => "fixed_penalty",
            Variant::NoStageWise => "no_stage_wise",
            Variant::FrozenBoundary => "frozen_boundary",
        }
    }

    fn initial_stage(self) -> Stage {
        match self {
            Variant::NoStageWise => Stage::StageII,
            _ => Stage::StageI,
        }
    }

    fn switches_stage(self) -> bool {
        matches!(self, Variant::Saas | Variant::FrozenBoundary)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                format!(
                    "unknown variant {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauConfig {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            patience: 5,
            min_delta: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub questions_per_step: usize,
    pub lr: f64,
    pub clip_ratio: f64,
    pub kl_coeff: f64,
    pub alpha: f64,
    pub delta: usize,
    pub split: GroupSplit,
    pub cap: usize,
    pub plateau: PlateauConfig,
    pub variant: Variant,
    pub seed: u64,
    /// Steps between validation evaluations.
    pub eval_every: usize,
    /// Rollouts per validation question, both for plateau tracking and the
    /// final report.
    pub eval_rollouts: usize,
    /// Switch to Stage II at this step instead of waiting for a plateau.
    pub stage_switch_step: Option<usize>,
    /// Whether search-disabled rollouts contribute to the gradient.
    pub train_disabled_group: bool,
    /// Optimisation passes over each batch; the clip matters only when > 1.
    pub update_epochs: usize,
    /// Initial weights; `None` uses [`PolicyParams::base_prior`].
    pub init_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            questions_per_step: 16,
            lr: 0.05,
            clip_ratio: 0.2,
            kl_coeff: 0.001,
            alpha: 0.05,
            delta: 2,
            split: GroupSplit::default(),
            cap: 5,
            plateau: PlateauConfig::default(),
            variant: Variant::Saas,
            seed: 7,
            eval_every: 10,
            eval_rollouts: 4,
            stage_switch_step: None,
            train_disabled_group: true,
            update_epochs: 1,
            init_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.clip_ratio.is_finite() && self.clip_ratio > 0.0) {
            return bad("clip_ratio must be positive");
        }
        if !(self.kl_coeff.is_finite() && self.kl_coeff >= 0.0) {
            return bad("kl_coeff must be non-negative");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if self.delta == 0 {
            return bad("delta must be at least 1");
        }
        if self.split.disabled == 0 || self.split.enabled == 0 {
            return bad("both rollout groups must be non-empty");
        }
        if self.plateau.patience == 0 {
            return bad("plateau.patience must be at least 1");
        }
        if self.questions_per_step == 0 {
            return bad("questions_per_step must be at least 1");
        }
        if self.eval_every == 0 || self.eval_rollouts == 0 || self.update_epochs == 0 {
            return bad("eval_every, eval_rollouts and update_epochs must be at least 1");
        }
        Ok(())
    }

    pub fn initial_params(&self) -> Result<PolicyParams, TrainError> {
        match &self.init_weights {
            Some(w) => Ok(PolicyParams::from_weights(w.clone())?),
            None => Ok(PolicyParams::base_prior()),
        }
    }
}

/// One training step's summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub stage: Stage,
    pub f1: f64,
    pub sc: f64,
    pub no_search_ratio: f64,
    pub redundant_search_ratio: Option<f64>,
    pub no_search_labels: usize,
    pub need_search_labels: usize,
    pub undetermined_labels: usize,
    pub validation_f1: Option<f64>,
}

pub const LOG_COLUMNS: [&str; 10] = [
    "step",
    "stage",
    "f1",
    "sc",
    "no_search_ratio",
    "redundant_search_ratio",
    "no_search_labels",
    "need_search_labels",
    "undetermined_labels",
    "validation_f1",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        crate::io::to_csv(&self.rows).expect("log rows serialize")
    }

    /// Parses a log, rejecting files whose header differs from [`LOG_COLUMNS`].
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| e.to_string())?.clone();
        for (i, col) in LOG_COLUMNS.iter().enumerate() {
            if header.get(i) != Some(*col) {
                return Err(format!("missing column {col}"));
            }
        }
        if header.len() != LOG_COLUMNS.len() {
            return Err(format!("unexpected column {}", &header[LOG_COLUMNS.len()]));
        }
        let rows = r
            .deserialize()
            .collect::<Result<Vec<LogRow>, _>>()
            .map_err(|e| e.to_string())?;
        Ok(Self { rows })
    }

    /// First step run under Stage II, if any.
    pub fn switch_step(&self) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.stage == Stage::StageII)
            .map(|r| r.step)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainingLog,
    pub params: PolicyParams,
    pub checkpoint: Checkpoint,
    pub boundary_log: Vec<BoundaryRecord>,
    pub reward_log: Vec<RewardRecord>,
    pub final_report: MetricsReport,
}

/// Rollouts of `params` on `questions` in search-enabled mode, `per_question`
/// each, seeded from `(seed, tag)`.
pub fn evaluate(
    params: &PolicyParams,
    questions: &[Question],
    env: &Environment,
    cap: usize,
    per_question: usize,
    seed: u64,
) -> Result<Vec<EvalRecord>, EnvError> {
    let nested: Vec<Vec<EvalRecord>> = questions
        .par_iter()
        .map(|q| {
            (0..per_question)
                .map(|i| {
                    let s = derive_seed(seed, &[q.id.as_str().into(), i.into()]);
                    let r = rollout(params, q, Mode::SearchEnabled, env.handles(), cap, s)?;
                    Ok(EvalRecord::new(q, r.trajectory, &env.profile))
                })
                .collect()
        })
        .collect::<Result<_, EnvError>>()?;
    Ok(nested.into_iter().flatten().collect())
}

fn mean_f1(records: &[EvalRecord]) -> f64 {
    let total: f64 = records
        .iter()
        .map(|r| {
            accuracy_f1(
                r.trajectory.predicted_answer.as_deref().unwrap_or(""),
                &r.gold,
            )
        })
        .sum();
    total / records.len().max(1) as f64
}

struct Scored {
    rewards: Vec<RewardRecord>,
    advantages_d: Vec<f64>,
    advantages_e: Vec<f64>,
}

fn score_groups(
    step: usize,
    groups: &RolloutGroups,
    question: &Question,
    verdict: &BoundaryVerdict,
    config: &TrainConfig,
    stage: Stage,
) -> Result<Scored, RewardError> {
    let gold = question.gold_text();
    let reward_config = RewardConfig::new(config.alpha, stage)?;
    let mut rewards = Vec::with_capacity(groups.disabled.len() + groups.enabled.len());
    let mut score = |rollouts: &[Rollout], tag: &str| -> Result<Vec<f64>, RewardError> {
        let mut totals = Vec::with_capacity(rollouts.len());
        for r in rollouts {
            let t = &r.trajectory;
            let n = search_count(t);
            let r_acc = accuracy_f1(t.predicted_answer.as_deref().unwrap_or(""), &gold);
            let b = match config.variant {
                Variant::FixedPenaltyFromStart => fixed_penalty_reward(r_acc, n, config.alpha),
                _ => breakdown(r_acc, n, verdict, &reward_config)?,
            };
            totals.push(b.total);
            rewards.push(RewardRecord {
                step,
                question_id: question.id.clone(),
                group: tag.to_string(),
                label: verdict.label,
                n,
                n_min: verdict.n_min,
                r_acc: b.r_acc,
                r_search: b.r_search,
                gated: b.gated,
                total: b.total,
            });
        }
        Ok(totals)
    };
    let totals_d = score(&groups.disabled, Mode::SearchDisabled.tag())?;
    let totals_e = score(&groups.enabled, Mode::SearchEnabled.tag())?;
    Ok(Scored {
        rewards,
        advantages_d: normalize_group_advantages(&totals_d),
        advantages_e: normalize_group_advantages(&totals_e),
    })
}

/// Runs the full training loop on a pool of `workers` threads. The output is
/// a pure function of `config` and `env`.
pub fn train_run(
    config: &TrainConfig,
    env: &Environment,
    workers: usize,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if env.train.is_empty() {
        return Err(TrainError::NoQuestions);
    }
    if env.validation.is_empty() {
        return Err(TrainError::NoValidation);
    }
    if config.questions_per_step > env.train.len() {
        return Err(TrainError::QuestionsExhausted {
            need: config.questions_per_step,
            have: env.train.len(),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    pool.install(|| train_loop(config, env))
}

fn train_loop(config: &TrainConfig, env: &Environment) -> Result<TrainOutcome, TrainError> {
    let seed = config.seed;
    let mut params = config.initial_params()?;
    let by_id: HashMap<&str, &Question> = env.train.iter().map(|q| (q.id.as_str(), q)).collect();

    let frozen: Option<HashMap<String, BoundaryVerdict>> =
        if config.variant == Variant::FrozenBoundary {
            let all: Vec<&Question> = env.train.iter().collect();
            let groups = rollout_groups_par(
                &params,
                &all,
                config.split,
                env.handles(),
                config.cap,
                derive_seed(seed, &["frozen".into()]),
            )?;
            Some(
                groups
                    .iter()
                    .map(|g| {
                        let q = by_id[g.question_id.as_str()];
                        (
                            g.question_id.clone(),
                            estimate_boundary(g, &q.gold_text(), config.delta),
                        )
                    })
                    .collect(),
            )
        } else {
            None
        };

    let mut stage = config.variant.initial_stage();
    let mut rows = Vec::with_capacity(config.steps);
    let mut boundary_log = Vec::new();
    let mut reward_log = Vec::new();
    let mut validation_history = Vec::new();
    // Every evaluation replays the same random streams, so successive scores
    // differ only through the policy.
    let validation_seed = derive_seed(seed, &["validation".into()]);

    for step in 0..config.steps {
        if config.variant.switches_stage()
            && stage == Stage::StageI
            && config.stage_switch_step.is_some_and(|s| step >= s)
        {
            stage = Stage::StageII;
        }

        let mut rng = derived_rng(seed, &["batch".into(), step.into()]);
        let batch_questions: Vec<&Question> = env
            .train
            .choose_multiple(&mut rng, config.questions_per_step)
            .collect();
        let groups = rollout_groups_par(
            &params,
            &batch_questions,
            config.split,
            env.handles(),
            config.cap,
            derive_seed(seed, &["rollout".into(), step.into()]),
        )?;

        let verdicts: Vec<BoundaryVerdict> = groups
            .iter()
            .zip(&batch_questions)
            .map(|(g, q)| match &frozen {
                Some(map) => map[&q.id],
                None => estimate_boundary(g, &q.gold_text(), config.delta),
            })
            .collect();

        let mut batch: Vec<(&Rollout, f64)> = Vec::new();
        let mut label_counts = [0usize; 3];
        for ((g, q), v) in groups.iter().zip(&batch_questions).zip(&verdicts) {
            boundary_log.push(BoundaryRecord::new(step, &q.id, config.delta, v));
            label_counts[BoundaryLabel::ALL
                .iter()
                .position(|l| *l == v.label)
                .unwrap()] += 1;
            let scored = score_groups(step, g, q, v, config, stage)?;
            reward_log.extend(scored.rewards);
            if config.train_disabled_group {
                batch.extend(g.disabled.iter().zip(scored.advantages_d));
            }
            batch.extend(g.enabled.iter().zip(scored.advantages_e));
        }

        let enabled: Vec<&Rollout> = groups.iter().flat_map(|g| &g.enabled).collect();
        let f1 = enabled
            .iter()
            .zip(
                groups
                    .iter()
                    .zip(&batch_questions)
                    .flat_map(|(g, q)| std::iter::repeat_n(*q, g.enabled.len())),
            )
            .map(|(r, q)| {
                accuracy_f1(
                    r.trajectory.predicted_answer.as_deref().unwrap_or(""),
                    &q.gold_text(),
                )
            })
            .sum::<f64>()
            / enabled.len() as f64;
        let sc = enabled
            .iter()
            .map(|r| search_count(&r.trajectory))
            .sum::<usize>() as f64
            / enabled.len() as f64;
        let dynamics = compute_dynamics(
            enabled.iter().map(|r| &r.trajectory),
            &env.world,
            &env.profile,
        );

        let old = params.clone();
        let settings = UpdateSettings {
            lr: config.lr,
            clip_ratio: config.clip_ratio,
            kl_coeff: config.kl_coeff,
        };
        for _ in 0..config.update_epochs {
            let (next, _) = update_policy(&params, &batch, &old, settings)
                .map_err(|diagnostics| TrainError::NonFiniteGradient { step, diagnostics })?;
            params = next;
        }

        let mut validation_f1 = None;
        if (step + 1) % config.eval_every == 0 {
            let records = evaluate(
                &params,
                &env.validation,
                env,
                config.cap,
                config.eval_rollouts,
                validation_seed,
            )?;
            let v = mean_f1(&records);
            validation_f1 = Some(v);
            validation_history.push(v);
        }

        rows.push(LogRow {
            step,
            stage,
            f1,
            sc,
            no_search_ratio: dynamics.no_search_ratio,
            redundant_search_ratio: dynamics.redundant_search_ratio,
            no_search_labels: label_counts[0],
            need_search_labels: label_counts[1],
            undetermined_labels: label_counts[2],
            validation_f1,
        });

        if config.variant.switches_stage()
            && stage == Stage::StageI
            && config.stage_switch_step.is_none()
            && validation_f1.is_some()
            && detect_plateau(
                &validation_history,
                config.plateau.patience,
                config.plateau.min_delta,
            )
        {
            stage = Stage::StageII;
        }
    }

    let records = evaluate(
        &params,
        &env.validation,
        env,
        config.cap,
        config.eval_rollouts,
        derive_seed(seed, &["final".into()]),
    )?;
    let final_report = MetricsReport::compute(&records, &env.world, &env.profile)?;
    Ok(TrainOutcome {
        log: TrainingLog { rows },
        checkpoint: params.checkpoint(config.steps),
        params,
        boundary_log,
        reward_log,
        final_report,
    })
}
