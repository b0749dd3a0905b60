//! Linear softmax policy over three search/answer actions and the rollout
//! machinery that turns it into trajectories.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::RolloutGroups;
use crate::environment::{
    parametric_lookup, retrieve, EntityId, EnvError, Environment, EvidenceItem, ParametricAnswer,
    ParametricProfile, Query, Question, RetrievalSettings, World,
};
use crate::seed::{derive_seed, rng_from};
use crate::trajectory::{Information, Mode, SearchQuery, Step, Trajectory, THINK_PLACEHOLDER};

pub const NUM_FEATURES: usize = 5;
pub const NUM_ACTIONS: usize = 3;
pub const NUM_WEIGHTS: usize = NUM_FEATURES * NUM_ACTIONS;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "evidence_progress",
    "knows_current_hop",
    "searches_used_fraction",
    "all_hops_resolved",
    "bias",
];

/// Answer emitted when the hop chain cannot be completed.
pub const PLACEHOLDER_ANSWER: &str = "unknown";

pub type Features = [f64; NUM_FEATURES];
pub type Distribution = [f64; NUM_ACTIONS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    SearchNext,
    SearchRedundant,
    AnswerNow,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::SearchNext,
        Action::SearchRedundant,
        Action::AnswerNow,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::SearchNext => "search_next",
            Action::SearchRedundant => "search_redundant",
            Action::AnswerNow => "answer_now",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("expected {NUM_WEIGHTS} weights, got {0}")]
    WrongLength(usize),
    #[error("weight {0} is not finite")]
    NonFinite(usize),
    #[error("checkpoint {field} mismatch: {found:?}")]
    Schema {
        field: &'static str,
        found: Vec<String>,
    },
}

/// Weights stored row-major as `[feature][action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    weights: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros() -> Self {
        Self {
            weights: vec![0.0; NUM_WEIGHTS],
        }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self, PolicyError> {
        if weights.len() != NUM_WEIGHTS {
            return Err(PolicyError::WrongLength(weights.len()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(PolicyError::NonFinite(i));
        }
        Ok(Self { weights })
    }

    /// Starting point that mimics an untrained model: it mostly answers from
    /// memory when it knows the current hop, mostly searches when it does not,
    /// and rarely repeats a search.
    pub fn base_prior() -> Self {
        let mut p = Self::zeros();
        let set =
            |p: &mut Self, f: usize, a: Action, v: f64| p.weights[f * NUM_ACTIONS + a.index()] = v;
        // knows_current_hop
        set(&mut p, 1, Action::SearchNext, -1.0);
        set(&mut p, 1, Action::AnswerNow, 1.0);
        // all_hops_resolved
        set(&mut p, 3, Action::SearchNext, -1.0);
        set(&mut p, 3, Action::AnswerNow, 1.5);
        // bias
        set(&mut p, 4, Action::SearchNext, 0.5);
        set(&mut p, 4, Action::SearchRedundant, -1.5);
        p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, feature: usize, action: Action) -> f64 {
        self.weights[feature * NUM_ACTIONS + action.index()]
    }

    pub fn logits(&self, features: &Features) -> Distribution {
        let mut z = [0.0; NUM_ACTIONS];
        for (f, x) in features.iter().enumerate() {
            for (a, zi) in z.iter_mut().enumerate() {
                *zi += self.weights[f * NUM_ACTIONS + a] * x;
            }
        }
        z
    }

    pub fn checkpoint(&self, step: usize) -> Checkpoint {
        Checkpoint {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            actions: Action::ALL.iter().map(|a| a.name().to_string()).collect(),
            weights: self.weights.clone(),
            step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub feature_names: Vec<String>,
    pub actions: Vec<String>,
    pub weights: Vec<f64>,
    pub step: usize,
}

impl Checkpoint {
    pub fn params(&self) -> Result<PolicyParams, PolicyError> {
        if self.feature_names != FEATURE_NAMES {
            return Err(PolicyError::Schema {
                field: "feature_names",
                found: self.feature_names.clone(),
            });
        }
        let actions: Vec<&str> = Action::ALL.iter().map(|a| a.name()).collect();
        if self.actions != actions {
            return Err(PolicyError::Schema {
                field: "actions",
                found: self.actions.clone(),
            });
        }
        PolicyParams::from_weights(self.weights.clone())
    }
}

/// Search and redundant search are illegal without search or at the cap.
pub fn legal_actions(mode: Mode, searches_used: usize, cap: usize) -> [bool; NUM_ACTIONS] {
    let can_search = mode == Mode::SearchEnabled && searches_used < cap;
    [can_search, can_search, true]
}

/// Softmax over `weights^T features`, restricted to the legal actions.
pub fn action_distribution(
    params: &PolicyParams,
    features: &Features,
    legal: &[bool; NUM_ACTIONS],
) -> Distribution {
    let z = params.logits(features);
    let max = z
        .iter()
        .zip(legal)
        .filter(|(_, &l)| l)
        .map(|(z, _)| *z)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; NUM_ACTIONS];
    let mut total = 0.0;
    for a in 0..NUM_ACTIONS {
        if legal[a] {
            p[a] = (z[a] - max).exp();
            total += p[a];
        }
    }
    for v in &mut p {
        *v /= total;
    }
    p
}

/// Inverse-CDF draw from `dist` using one uniform from `rng`.
pub fn sample_action<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R) -> Action {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = Action::AnswerNow;
    for a in Action::ALL {
        let p = dist[a.index()];
        if p <= 0.0 {
            continue;
        }
        last = a;
        acc += p;
        if u < acc {
            return a;
        }
    }
    last
}

/// `d log pi(action | s) / d weights` for the masked softmax:
/// `features (x) (one_hot(action) - p)`.
pub fn log_prob_gradient(
    params: &PolicyParams,
    features: &Features,
    legal: &[bool; NUM_ACTIONS],
    action: Action,
) -> [f64; NUM_WEIGHTS] {
    let p = action_distribution(params, features, legal);
    let mut g = [0.0; NUM_WEIGHTS];
    for (f, x) in features.iter().enumerate() {
        for a in 0..NUM_ACTIONS {
            let indicator = if a == action.index() { 1.0 } else { 0.0 };
            g[f * NUM_ACTIONS + a] = x * (indicator - p[a]);
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopSource {
    Evidence,
    Parametric,
    Unresolved,
}

/// What the agent has established so far while working on one question.
#[derive(Debug, Clone)]
pub struct AgentState<'a> {
    pub question: &'a Question,
    pub mode: Mode,
    pub hops: Vec<HopSource>,
    /// Object the agent believes each hop resolves to.
    resolved: Vec<Option<EntityId>>,
    pub evidence: Vec<EvidenceItem>,
    pub searches_used: usize,
}

impl<'a> AgentState<'a> {
    pub fn new(question: &'a Question, mode: Mode) -> Self {
        Self {
            question,
            mode,
            hops: vec![HopSource::Unresolved; question.hop_count],
            resolved: vec![None; question.hop_count],
            evidence: Vec::new(),
            searches_used: 0,
        }
    }

    pub fn first_unresolved(&self) -> Option<usize> {
        self.hops.iter().position(|h| *h == HopSource::Unresolved)
    }

    pub fn resolved_count(&self) -> usize {
        self.hops
            .iter()
            .filter(|h| **h != HopSource::Unresolved)
            .count()
    }

    /// Query the agent would issue for hop `i`, if its subject is established.
    pub fn hop_query(&self, i: usize) -> Option<Query> {
        let relation = self.question.hops.get(i)?.1;
        let subject = if i == 0 {
            self.question.hops[0].0
        } else {
            self.resolved[i - 1]?
        };
        Some((subject, relation))
    }

    pub fn features(&self, profile: &ParametricProfile, cap: usize) -> Features {
        let total = self.question.hop_count.max(1) as f64;
        let progress = self.resolved_count() as f64 / total;
        let knows = if self.memory_completes_chain(profile) {
            1.0
        } else {
            0.0
        };
        let used = if cap == 0 {
            1.0
        } else {
            self.searches_used as f64 / cap as f64
        };
        let done = if self.first_unresolved().is_none() {
            1.0
        } else {
            0.0
        };
        [progress, knows, used, done, 1.0]
    }

    /// Whether parametric memory alone can carry the chain from the first
    /// unresolved hop to an answer. Corrupt beliefs count as known.
    pub fn memory_completes_chain(&self, profile: &ParametricProfile) -> bool {
        let Some(start) = self.first_unresolved() else {
            return false;
        };
        let Some((mut current, _)) = self.hop_query(start) else {
            return false;
        };
        for &(_, relation) in &self.question.hops[start..] {
            match parametric_lookup(profile, (current, relation)) {
                Ok(ParametricAnswer::Answer(o)) => current = o,
                _ => return false,
            }
        }
        true
    }

    /// Records retrieved evidence; resolves hop `hop` when it holds the gold fact.
    pub fn absorb(&mut self, hop: usize, items: &[EvidenceItem]) {
        self.searches_used += 1;
        self.evidence.extend_from_slice(items);
        if self.hops[hop] == HopSource::Unresolved {
            if let Some(gold) = items.iter().find(|i| i.is_gold) {
                self.hops[hop] = HopSource::Evidence;
                self.resolved[hop] = Some(gold.fact.object);
            }
        }
    }

    /// Chains resolved hops, filling the rest from parametric memory.
    pub fn assemble_answer(&mut self, profile: &ParametricProfile) -> String {
        let mut current = self.question.hops[0].0;
        for i in 0..self.question.hop_count {
            match self.hops[i] {
                HopSource::Evidence => {
                    current = self.resolved[i].expect("evidence hops carry an object");
                }
                HopSource::Parametric | HopSource::Unresolved => {
                    let query = (current, self.question.hops[i].1);
                    match parametric_lookup(profile, query) {
                        Ok(ParametricAnswer::Answer(o)) => {
                            self.hops[i] = HopSource::Parametric;
                            self.resolved[i] = Some(o);
                            current = o;
                        }
                        _ => return PLACEHOLDER_ANSWER.to_string(),
                    }
                }
            }
        }
        current.to_string()
    }
}

/// One policy decision, kept for the gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub features: Features,
    pub legal: [bool; NUM_ACTIONS],
    pub action: Action,
}

/// A trajectory together with the decisions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub decisions: Vec<Decision>,
}

#[derive(Debug, Clone, Copy)]
pub struct EnvHandles<'a> {
    pub world: &'a World,
    pub profile: &'a ParametricProfile,
    pub retrieval: RetrievalSettings,
}

impl Environment {
    pub fn handles(&self) -> EnvHandles<'_> {
        EnvHandles {
            world: &self.world,
            profile: &self.profile,
            retrieval: self.retrieval,
        }
    }
}

/// Samples one trajectory. Each loop iteration emits a think step and one
/// decision; searches beyond `cap` are impossible because search actions are
/// masked at the cap, which forces an answer.
pub fn rollout(
    params: &PolicyParams,
    question: &Question,
    mode: Mode,
    env: EnvHandles<'_>,
    cap: usize,
    seed: u64,
) -> Result<Rollout, EnvError> {
    let mut rng = rng_from(seed);
    let mut state = AgentState::new(question, mode);
    let mut steps = Vec::new();
    let mut decisions = Vec::new();
    loop {
        steps.push(Step::Think(THINK_PLACEHOLDER.to_string()));
        let features = state.features(env.profile, cap);
        let legal = legal_actions(mode, state.searches_used, cap);
        let dist = action_distribution(params, &features, &legal);
        let action = sample_action(&dist, &mut rng);
        decisions.push(Decision {
            features,
            legal,
            action,
        });

        let resolved: Vec<usize> = (0..question.hop_count)
            .filter(|&i| state.hops[i] != HopSource::Unresolved)
            .collect();
        let hop = match (action, state.first_unresolved()) {
            (Action::AnswerNow, _) => {
                let answer = state.assemble_answer(env.profile);
                steps.push(Step::Answer(answer));
                break;
            }
            (Action::SearchNext, Some(i)) => i,
            (Action::SearchRedundant, _) | (Action::SearchNext, None) => {
                match resolved.choose(&mut rng) {
                    Some(&i) => i,
                    // Nothing resolved yet: degrade to the next hop.
                    None => state.first_unresolved().expect("some hop is unresolved"),
                }
            }
        };
        let query = state
            .hop_query(hop)
            .expect("searched hops have a known subject");
        let items = retrieve(
            env.world,
            query,
            env.retrieval.k,
            env.retrieval.noise(),
            rng.gen::<u64>(),
        )?;
        steps.push(Step::Search(SearchQuery::Structured(query)));
        steps.push(Step::Information(Information::Evidence(items.clone())));
        state.absorb(hop, &items);
    }
    Ok(Rollout {
        trajectory: Trajectory::new(question.id.clone(), mode, steps),
        decisions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSplit {
    pub disabled: usize,
    pub enabled: usize,
}

impl Default for GroupSplit {
    fn default() -> Self {
        Self {
            disabled: 4,
            enabled: 4,
        }
    }
}

/// Seed of one rollout: a pure function of master seed, question, group and index.
pub fn rollout_seed(master: u64, question_id: &str, mode: Mode, index: usize) -> u64 {
    derive_seed(
        master,
        &[question_id.into(), mode.tag().into(), index.into()],
    )
}

/// Samples the search-disabled and search-enabled groups for one question.
pub fn rollout_group(
    params: &PolicyParams,
    question: &Question,
    split: GroupSplit,
    env: EnvHandles<'_>,
    cap: usize,
    seed: u64,
) -> Result<RolloutGroups, EnvError> {
    assert!(
        split.disabled >= 1 && split.enabled >= 1,
        "groups must be non-empty"
    );
    let run = |mode: Mode, n: usize| -> Result<Vec<Rollout>, EnvError> {
        (0..n)
            .map(|i| {
                rollout(
                    params,
                    question,
                    mode,
                    env,
                    cap,
                    rollout_seed(seed, &question.id, mode, i),
                )
            })
            .collect()
    };
    Ok(RolloutGroups {
        question_id: question.id.clone(),
        disabled: run(Mode::SearchDisabled, split.disabled)?,
        enabled: run(Mode::SearchEnabled, split.enabled)?,
    })
}

/// [`rollout_group`] for many questions on a pool of `workers` threads.
/// Output order follows `questions` and does not depend on `workers`.
pub fn rollout_groups_parallel(
    params: &PolicyParams,
    questions: &[&Question],
    split: GroupSplit,
    env: EnvHandles<'_>,
    cap: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<RolloutGroups>, EnvError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| rollout_groups_par(params, questions, split, env, cap, seed))
}

/// [`rollout_group`] for many questions on the current rayon pool.
pub fn rollout_groups_par(
    params: &PolicyParams,
    questions: &[&Question],
    split: GroupSplit,
    env: EnvHandles<'_>,
    cap: usize,
    seed: u64,
) -> Result<Vec<RolloutGroups>, EnvError> {
    questions
        .par_iter()
        .map(|q| rollout_group(params, q, split, env, cap, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvConfig, FactStatus, RelationId};
    use crate::trajectory::search_count;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> Environment {
        EnvConfig::default().build().unwrap()
    }

    fn state_features(known: f64) -> Features {
        [0.0, known, 0.0, 0.0, 1.0]
    }

    #[test]
    fn zero_weights_give_uniform() {
        let p = action_distribution(&PolicyParams::zeros(), &state_features(1.0), &[true; 3]);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn disabled_mode_masks_search() {
        let legal = legal_actions(Mode::SearchDisabled, 0, 5);
        let p = action_distribution(&PolicyParams::base_prior(), &state_features(0.0), &legal);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[1], 0.0);
        assert_eq!(p[2], 1.0);
        assert_eq!(
            legal_actions(Mode::SearchEnabled, 5, 5),
            [false, false, true]
        );
    }

    #[test]
    fn distribution_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let w: Vec<f64> = (0..NUM_WEIGHTS)
                .map(|_| rng.gen_range(-20.0..20.0))
                .collect();
            let params = PolicyParams::from_weights(w).unwrap();
            let f: Features = [rng.gen(), rng.gen_range(0..2) as f64, rng.gen(), 0.0, 1.0];
            let legal = [rng.gen_bool(0.5), rng.gen_bool(0.5), true];
            let p = action_distribution(&params, &f, &legal);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn degenerate_distribution_always_samples_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(
                sample_action(&[1.0, 0.0, 0.0], &mut rng),
                Action::SearchNext
            );
        }
    }

    #[test]
    fn replayed_stream_gives_same_actions() {
        let dist = [0.2, 0.3, 0.5];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| sample_action(&dist, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn empirical_frequencies_pass_chi_square() {
        let dist = [0.2, 0.3, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_action(&dist, &mut rng).index()] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(dist)
            .map(|(&c, p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 2 degrees of freedom, 99.9% quantile.
        assert!(chi2 < 13.82, "chi2 = {chi2}");
        for (c, p) in counts.iter().zip(dist) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - p * n as f64).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let w: Vec<f64> = (0..NUM_WEIGHTS).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let params = PolicyParams::from_weights(w.clone()).unwrap();
            let f: Features = [rng.gen(), 1.0, rng.gen(), 0.0, 1.0];
            let legal = [true, rng.gen_bool(0.7), true];
            let action = if legal[1] {
                Action::SearchRedundant
            } else {
                Action::SearchNext
            };
            let g = log_prob_gradient(&params, &f, &legal, action);
            let h = 1e-6;
            for i in 0..NUM_WEIGHTS {
                let mut up = w.clone();
                up[i] += h;
                let mut down = w.clone();
                down[i] -= h;
                let lp = |w: Vec<f64>| {
                    action_distribution(&PolicyParams::from_weights(w).unwrap(), &f, &legal)
                        [action.index()]
                    .ln()
                };
                let fd = (lp(up) - lp(down)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(g[i].abs()).max(1e-3));
            }
        }
    }

    #[test]
    fn disabled_rollouts_never_search() {
        let env = env();
        for (i, q) in env.train.iter().take(50).enumerate() {
            let r = rollout(
                &PolicyParams::zeros(),
                q,
                Mode::SearchDisabled,
                env.handles(),
                5,
                i as u64,
            )
            .unwrap();
            assert_eq!(search_count(&r.trajectory), 0);
            assert!(r.trajectory.validate(Some(5)).is_ok());
        }
    }

    fn always(action: Action) -> PolicyParams {
        let mut w = vec![0.0; NUM_WEIGHTS];
        w[4 * NUM_ACTIONS + action.index()] = 100.0;
        PolicyParams::from_weights(w).unwrap()
    }

    #[test]
    fn cap_truncates_to_answer() {
        let env = env();
        let params = always(Action::SearchNext);
        for (i, q) in env.train.iter().take(30).enumerate() {
            let r = rollout(&params, q, Mode::SearchEnabled, env.handles(), 5, i as u64).unwrap();
            assert_eq!(search_count(&r.trajectory), 5);
            assert!(matches!(r.trajectory.steps.last(), Some(Step::Answer(_))));
            assert!(r.trajectory.validate(Some(5)).is_ok());
        }
    }

    #[test]
    fn answering_from_known_correct_memory_is_right() {
        let env = env();
        let q = env
            .train
            .iter()
            .find(|q| {
                q.hop_count == 1 && env.profile.status(q.hops[0]) == Some(FactStatus::KnownCorrect)
            })
            .unwrap();
        let r = rollout(
            &always(Action::AnswerNow),
            q,
            Mode::SearchEnabled,
            env.handles(),
            5,
            0,
        )
        .unwrap();
        // Oracle: the profile's stored object for the single hop.
        let expected = match parametric_lookup(&env.profile, q.hops[0]).unwrap() {
            ParametricAnswer::Answer(o) => o,
            ParametricAnswer::Unknown => unreachable!(),
        };
        assert_eq!(expected, q.gold_answer);
        assert_eq!(r.trajectory.predicted_answer, Some(q.gold_text()));
    }

    #[test]
    fn redundant_search_requeries_a_resolved_hop() {
        let env = EnvConfig {
            p_miss: 0.0,
            ..EnvConfig::default()
        }
        .build()
        .unwrap();
        let q = env.train.iter().find(|q| q.hop_count == 1).unwrap();
        // Search, then redundant search, then answer.
        let mut state = AgentState::new(q, Mode::SearchEnabled);
        let items = retrieve(&env.world, q.hops[0], 3, env.retrieval.noise(), 0).unwrap();
        state.absorb(0, &items);
        assert_eq!(state.hops[0], HopSource::Evidence);
        assert_eq!(state.features(&env.profile, 5)[3], 1.0);
        assert_eq!(state.hop_query(0), Some(q.hops[0]));
        assert_eq!(state.assemble_answer(&env.profile), q.gold_text());
    }

    #[test]
    fn broken_chain_gives_placeholder() {
        let env = env();
        let q = env
            .train
            .iter()
            .find(|q| !env.profile.is_known(q.hops[0]))
            .unwrap();
        let mut state = AgentState::new(q, Mode::SearchDisabled);
        assert_eq!(state.assemble_answer(&env.profile), PLACEHOLDER_ANSWER);
        let _ = RelationId(0);
    }

    #[test]
    fn group_sizes_and_modes() {
        let env = env();
        let q = &env.train[0];
        let g = rollout_group(
            &PolicyParams::base_prior(),
            q,
            GroupSplit::default(),
            env.handles(),
            5,
            1,
        )
        .unwrap();
        assert_eq!((g.disabled.len(), g.enabled.len()), (4, 4));
        assert!(g
            .disabled
            .iter()
            .all(|r| r.trajectory.mode == Mode::SearchDisabled));
        assert!(g
            .enabled
            .iter()
            .all(|r| r.trajectory.mode == Mode::SearchEnabled));
        let one = GroupSplit {
            disabled: 1,
            enabled: 1,
        };
        let g = rollout_group(&PolicyParams::base_prior(), q, one, env.handles(), 5, 1).unwrap();
        assert_eq!((g.disabled.len(), g.enabled.len()), (1, 1));
    }

    #[test]
    fn groups_do_not_depend_on_worker_count() {
        let env = env();
        let qs: Vec<&Question> = env.train.iter().take(40).collect();
        let run = |workers| {
            rollout_groups_parallel(
                &PolicyParams::base_prior(),
                &qs,
                GroupSplit::default(),
                env.handles(),
                5,
                77,
                workers,
            )
            .unwrap()
        };
        let one = run(1);
        assert_eq!(one, run(2));
        assert_eq!(one, run(8));
    }

    #[test]
    fn checkpoint_round_trip_and_schema() {
        let p = PolicyParams::base_prior();
        let c = p.checkpoint(12);
        let back: Checkpoint = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back.params().unwrap(), p);
        let mut bad = c.clone();
        bad.feature_names.swap(0, 1);
        assert!(bad.params().is_err());
        assert_eq!(
            PolicyParams::from_weights(vec![0.0; 3]),
            Err(PolicyError::WrongLength(3))
        );
        let mut nan = vec![0.0; NUM_WEIGHTS];
        nan[2] = f64::NAN;
        assert_eq!(
            PolicyParams::from_weights(nan),
            Err(PolicyError::NonFinite(2))
        );
    }
}
