//! Synthetic knowledge-graph QA world.
//!
//! A [`World`] is a set of functional `(subject, relation) -> object` facts.
//! Questions are chains of hops through those facts, [`retrieve`] plays the
//! role of a top-k search engine, and a [`ParametricProfile`] decides which
//! facts the agent "knows" without searching (and which of those it knows
//! wrongly).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::seed::{derived_rng, rng_from};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("a chain of depth {depth} needs at least {needed} entities, world has {entities}")]
    ChainImpossible {
        depth: usize,
        needed: usize,
        entities: usize,
    },
    #[error("world has no facts")]
    EmptyWorld,
    #[error("hop distribution must sum to 1, got {0}")]
    BadDistribution(f64),
    #[error("world has no chain of {0} hops")]
    UnsatisfiableDepth(usize),
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("unknown relation {0}")]
    UnknownRelation(RelationId),
    #[error("retrieval depth k must be at least 1")]
    ZeroK,
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let digits = s
                    .strip_prefix($prefix)
                    .ok_or_else(|| format!("expected {}<n>, got {s:?}", $prefix))?;
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(format!("expected {}<n>, got {s:?}", $prefix));
                }
                // Canonical form only: no leading zeros.
                if digits.len() > 1 && digits.starts_with('0') {
                    return Err(format!("non-canonical id {s:?}"));
                }
                digits
                    .parse()
                    .map($name)
                    .map_err(|e| format!("bad id {s:?}: {e}"))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

id_type!(EntityId, "e");
id_type!(RelationId, "r");

/// `(entity, relation)`: one hop of a question, or one search query.
pub type Query = (EntityId, RelationId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    #[serde(rename = "s")]
    pub subject: EntityId,
    #[serde(rename = "r")]
    pub relation: RelationId,
    #[serde(rename = "o")]
    pub object: EntityId,
}

impl Fact {
    pub fn query(&self) -> Query {
        (self.subject, self.relation)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldConfig {
    pub entity_count: usize,
    pub relation_count: usize,
    /// Probability that a given `(subject, relation)` pair carries a fact.
    pub fact_density: f64,
    pub max_chain_depth: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            entity_count: 50,
            relation_count: 8,
            fact_density: 0.35,
            max_chain_depth: 3,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    seed: u64,
    entities: Vec<EntityId>,
    relations: Vec<RelationId>,
    facts: Vec<Fact>,
}

/// Immutable fact graph. Facts are kept sorted by `(subject, relation)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldFile", into = "WorldFile")]
pub struct World {
    seed: u64,
    entities: Vec<EntityId>,
    relations: Vec<RelationId>,
    facts: Vec<Fact>,
    #[serde(skip)]
    index: HashMap<Query, usize>,
    #[serde(skip)]
    by_subject: Vec<Vec<usize>>,
    #[serde(skip)]
    by_relation: Vec<Vec<usize>>,
}

impl TryFrom<WorldFile> for World {
    type Error = EnvError;

    fn try_from(f: WorldFile) -> Result<Self, Self::Error> {
        World::new(f.seed, f.entities.len(), f.relations.len(), f.facts).and_then(|w| {
            // Ids are dense and in order.
            let dense_e = f
                .entities
                .iter()
                .enumerate()
                .all(|(i, e)| e.0 as usize == i);
            let dense_r = f
                .relations
                .iter()
                .enumerate()
                .all(|(i, r)| r.0 as usize == i);
            if dense_e && dense_r {
                Ok(w)
            } else {
                Err(EnvError::InvalidWorld(
                    "entity/relation ids must be dense 0..n".into(),
                ))
            }
        })
    }
}

impl From<World> for WorldFile {
    fn from(w: World) -> Self {
        WorldFile {
            seed: w.seed,
            entities: w.entities,
            relations: w.relations,
            facts: w.facts,
        }
    }
}

impl World {
    /// Builds a world and checks its invariants.
    pub fn new(
        seed: u64,
        entity_count: usize,
        relation_count: usize,
        mut facts: Vec<Fact>,
    ) -> Result<Self, EnvError> {
        facts.sort_by_key(|f| f.query());
        let mut index = HashMap::with_capacity(facts.len());
        let mut by_subject = vec![Vec::new(); entity_count];
        let mut by_relation = vec![Vec::new(); relation_count];
        for (i, f) in facts.iter().enumerate() {
            let (s, r, o) = (
                f.subject.0 as usize,
                f.relation.0 as usize,
                f.object.0 as usize,
            );
            if s >= entity_count || o >= entity_count {
                return Err(EnvError::InvalidWorld(format!(
                    "fact {f:?} references an undeclared entity"
                )));
            }
            if r >= relation_count {
                return Err(EnvError::InvalidWorld(format!(
                    "fact {f:?} references an undeclared relation"
                )));
            }
            if f.subject == f.object {
                return Err(EnvError::InvalidWorld(format!("fact {f:?} is a self loop")));
            }
            if index.insert(f.query(), i).is_some() {
                return Err(EnvError::InvalidWorld(format!(
                    "duplicate (subject, relation) pair ({}, {})",
                    f.subject, f.relation
                )));
            }
            by_subject[s].push(i);
            by_relation[r].push(i);
        }
        Ok(Self {
            seed,
            entities: (0..entity_count as u32).map(EntityId).collect(),
            relations: (0..relation_count as u32).map(RelationId).collect(),
            facts,
            index,
            by_subject,
            by_relation,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn fact_index(&self, query: Query) -> Option<usize> {
        self.index.get(&query).copied()
    }

    pub fn lookup(&self, query: Query) -> Option<&Fact> {
        self.fact_index(query).map(|i| &self.facts[i])
    }

    pub fn validate_query(&self, (e, r): Query) -> Result<(), EnvError> {
        if e.0 as usize >= self.entities.len() {
            return Err(EnvError::UnknownEntity(e));
        }
        if r.0 as usize >= self.relations.len() {
            return Err(EnvError::UnknownRelation(r));
        }
        Ok(())
    }

    /// Follows a hop chain through the facts, returning the final object.
    pub fn follow(&self, hops: &[Query]) -> Option<EntityId> {
        let mut current = hops.first()?.0;
        for &(e, r) in hops {
            if e != current {
                return None;
            }
            current = self.lookup((e, r))?.object;
        }
        Some(current)
    }

    /// Every simple chain (no repeated entity) of exactly `depth` hops.
    pub fn chains(&self, depth: usize) -> Vec<Vec<Query>> {
        let mut out = Vec::new();
        if depth == 0 {
            return out;
        }
        let mut path: Vec<Query> = Vec::with_capacity(depth);
        let mut visited = vec![false; self.entities.len()];
        for start in 0..self.entities.len() {
            visited[start] = true;
            self.extend_chains(
                EntityId(start as u32),
                depth,
                &mut path,
                &mut visited,
                &mut out,
            );
            visited[start] = false;
        }
        out
    }

    fn extend_chains(
        &self,
        at: EntityId,
        depth: usize,
        path: &mut Vec<Query>,
        visited: &mut [bool],
        out: &mut Vec<Vec<Query>>,
    ) {
        for &fi in &self.by_subject[at.0 as usize] {
            let f = self.facts[fi];
            let o = f.object.0 as usize;
            if visited[o] {
                continue;
            }
            path.push(f.query());
            if path.len() == depth {
                out.push(path.clone());
            } else {
                visited[o] = true;
                self.extend_chains(f.object, depth, path, visited, out);
                visited[o] = false;
            }
            path.pop();
        }
    }
}

/// Generates a world. A chain of `max_chain_depth` hops through distinct
/// entities is planted first whenever `fact_density > 0`; the remaining pairs
/// are filled independently with probability `fact_density`.
pub fn generate_world(config: &WorldConfig, seed: u64) -> Result<World, EnvError> {
    if config.entity_count == 0 {
        return Err(EnvError::InvalidConfig("entity_count must be >= 1".into()));
    }
    if config.relation_count == 0 {
        return Err(EnvError::InvalidConfig(
            "relation_count must be >= 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.fact_density) {
        return Err(EnvError::InvalidConfig(
            "fact_density must be in [0, 1]".into(),
        ));
    }
    let plant = config.fact_density > 0.0 && config.max_chain_depth > 0;
    if plant && config.entity_count < config.max_chain_depth + 1 {
        return Err(EnvError::ChainImpossible {
            depth: config.max_chain_depth,
            needed: config.max_chain_depth + 1,
            entities: config.entity_count,
        });
    }

    let mut rng = derived_rng(seed, &["world".into()]);
    let n_e = config.entity_count as u32;
    let n_r = config.relation_count as u32;
    let mut facts: BTreeMap<Query, EntityId> = BTreeMap::new();

    if plant {
        let mut order: Vec<u32> = (0..n_e).collect();
        order.shuffle(&mut rng);
        for w in order[..=config.max_chain_depth].windows(2) {
            let r = RelationId(rng.gen_range(0..n_r));
            facts.insert((EntityId(w[0]), r), EntityId(w[1]));
        }
    }
    if n_e >= 2 {
        for s in 0..n_e {
            for r in 0..n_r {
                let key = (EntityId(s), RelationId(r));
                // Draw unconditionally so the stream does not depend on planting.
                let keep = rng.gen_bool(config.fact_density);
                let mut o = rng.gen_range(0..n_e - 1);
                if o >= s {
                    o += 1;
                }
                if keep {
                    facts.entry(key).or_insert(EntityId(o));
                }
            }
        }
    }

    let facts = facts
        .into_iter()
        .map(|((subject, relation), object)| Fact {
            subject,
            relation,
            object,
        })
        .collect();
    World::new(seed, config.entity_count, config.relation_count, facts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "QuestionRecord", into = "QuestionRecord")]
pub struct Question {
    pub id: String,
    pub hops: Vec<Query>,
    pub text: String,
    pub gold_answer: EntityId,
    pub hop_count: usize,
}

impl Question {
    pub fn gold_text(&self) -> String {
        self.gold_answer.to_string()
    }
}

#[derive(Serialize, Deserialize)]
struct QuestionRecord {
    id: String,
    text: String,
    hops: Vec<(EntityId, RelationId)>,
    gold: EntityId,
    hop_count: usize,
}

impl TryFrom<QuestionRecord> for Question {
    type Error = String;

    fn try_from(r: QuestionRecord) -> Result<Self, Self::Error> {
        if r.hops.is_empty() {
            return Err(format!("question {} has no hops", r.id));
        }
        if r.hop_count != r.hops.len() {
            return Err(format!(
                "question {}: hop_count {} != {} hops",
                r.id,
                r.hop_count,
                r.hops.len()
            ));
        }
        Ok(Question {
            id: r.id,
            hops: r.hops,
            text: r.text,
            gold_answer: r.gold,
            hop_count: r.hop_count,
        })
    }
}

impl From<Question> for QuestionRecord {
    fn from(q: Question) -> Self {
        QuestionRecord {
            id: q.id,
            text: q.text,
            hops: q.hops,
            gold: q.gold_answer,
            hop_count: q.hop_count,
        }
    }
}

fn render_question(hops: &[Query]) -> String {
    let mut text = hops[0].0.to_string();
    for &(_, r) in hops {
        text = format!("the {r} of {text}");
    }
    format!("What is {text}?")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopWeight {
    pub hops: usize,
    pub p: f64,
}

pub fn default_hop_distribution() -> Vec<HopWeight> {
    vec![
        HopWeight { hops: 1, p: 0.5 },
        HopWeight { hops: 2, p: 0.3 },
        HopWeight { hops: 3, p: 0.2 },
    ]
}

/// Inverse-CDF draw of a hop count. `u` is uniform in `[0, 1)`; entries are
/// visited in ascending hop order.
pub fn draw_hop_count(distribution: &[HopWeight], u: f64) -> usize {
    let mut sorted = distribution.to_vec();
    sorted.sort_by_key(|h| h.hops);
    let mut acc = 0.0;
    for h in &sorted {
        acc += h.p;
        if u < acc && h.p > 0.0 {
            return h.hops;
        }
    }
    sorted
        .iter()
        .rev()
        .find(|h| h.p > 0.0)
        .map(|h| h.hops)
        .unwrap_or(1)
}

/// Samples `count` questions. Hop counts come from one stream (label
/// `question-hops`) and chain choices from another (`question-chains`), so the
/// hop-count sequence can be re-drawn independently.
pub fn generate_questions(
    world: &World,
    count: usize,
    hop_distribution: &[HopWeight],
    seed: u64,
) -> Result<Vec<Question>, EnvError> {
    if world.facts().is_empty() {
        return Err(EnvError::EmptyWorld);
    }
    let total: f64 = hop_distribution.iter().map(|h| h.p).sum();
    if (total - 1.0).abs() > 1e-9 || hop_distribution.iter().any(|h| h.p < 0.0) {
        return Err(EnvError::BadDistribution(total));
    }
    let mut chains: BTreeMap<usize, Vec<Vec<Query>>> = BTreeMap::new();
    for h in hop_distribution.iter().filter(|h| h.p > 0.0) {
        if h.hops == 0 {
            return Err(EnvError::UnsatisfiableDepth(0));
        }
        let c = world.chains(h.hops);
        if c.is_empty() {
            return Err(EnvError::UnsatisfiableDepth(h.hops));
        }
        chains.insert(h.hops, c);
    }

    let mut hop_rng = derived_rng(seed, &["question-hops".into()]);
    let mut chain_rng = derived_rng(seed, &["question-chains".into()]);
    let width = count.saturating_sub(1).to_string().len().max(4);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let hops = draw_hop_count(hop_distribution, hop_rng.gen::<f64>());
        let pool = &chains[&hops];
        let chain = pool[chain_rng.gen_range(0..pool.len())].clone();
        let gold = world.follow(&chain).expect("enumerated chains are valid");
        out.push(Question {
            id: format!("q{i:0width$}"),
            text: render_question(&chain),
            hop_count: chain.len(),
            hops: chain,
            gold_answer: gold,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalNoise {
    pub p_miss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub fact: Fact,
    pub is_gold: bool,
    pub source_query: Query,
}

/// Top-k retrieval. The gold fact (if any, and unless the miss draw fires)
/// appears once at a random position; other slots hold distractors sharing the
/// query's subject or relation.
pub fn retrieve(
    world: &World,
    query: Query,
    k: usize,
    noise: RetrievalNoise,
    seed: u64,
) -> Result<Vec<EvidenceItem>, EnvError> {
    if k == 0 {
        return Err(EnvError::ZeroK);
    }
    world.validate_query(query)?;
    let mut rng = rng_from(seed);
    let missed = rng.gen_bool(noise.p_miss.clamp(0.0, 1.0));
    let gold = world.fact_index(query);

    let mut distractors: Vec<usize> = world.by_subject[query.0 .0 as usize]
        .iter()
        .chain(&world.by_relation[query.1 .0 as usize])
        .copied()
        .filter(|&i| Some(i) != gold)
        .collect();
    distractors.sort_unstable();
    distractors.dedup();

    let include_gold = gold.is_some() && !missed;
    let slots = k - usize::from(include_gold);
    let mut items: Vec<EvidenceItem> = distractors
        .choose_multiple(&mut rng, slots.min(distractors.len()))
        .map(|&i| EvidenceItem {
            fact: world.facts[i],
            is_gold: false,
            source_query: query,
        })
        .collect();
    if include_gold {
        let at = rng.gen_range(0..=items.len());
        items.insert(
            at,
            EvidenceItem {
                fact: world.facts[gold.unwrap()],
                is_gold: true,
                source_query: query,
            },
        );
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FactStatus {
    KnownCorrect,
    KnownCorrupt { wrong: EntityId },
    Unknown,
}

impl FactStatus {
    pub fn is_known(&self) -> bool {
        !matches!(self, FactStatus::Unknown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    /// Fraction of facts with a status other than `Unknown`.
    pub coverage: f64,
    /// Fraction of known facts whose stored object is wrong.
    pub corruption_rate: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            coverage: 0.6,
            corruption_rate: 0.15,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileEntry {
    s: EntityId,
    r: RelationId,
    o: EntityId,
    #[serde(flatten)]
    status: FactStatus,
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    seed: u64,
    coverage: f64,
    corruption_rate: f64,
    entity_count: usize,
    relation_count: usize,
    facts: Vec<ProfileEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Belief {
    object: EntityId,
    status: FactStatus,
}

/// What the agent knows without searching, keyed by `(subject, relation)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileFile", into = "ProfileFile")]
pub struct ParametricProfile {
    seed: u64,
    coverage: f64,
    corruption_rate: f64,
    entity_count: usize,
    relation_count: usize,
    beliefs: BTreeMap<Query, Belief>,
}

impl TryFrom<ProfileFile> for ParametricProfile {
    type Error = EnvError;

    fn try_from(f: ProfileFile) -> Result<Self, Self::Error> {
        let mut beliefs = BTreeMap::new();
        for e in f.facts {
            if let FactStatus::KnownCorrupt { wrong } = e.status {
                if wrong == e.o {
                    return Err(EnvError::InvalidProfile(format!(
                        "corrupt entry ({}, {}) stores the true object",
                        e.s, e.r
                    )));
                }
            }
            let belief = Belief {
                object: e.o,
                status: e.status,
            };
            if beliefs.insert((e.s, e.r), belief).is_some() {
                return Err(EnvError::InvalidProfile(format!(
                    "duplicate entry ({}, {})",
                    e.s, e.r
                )));
            }
        }
        Ok(Self {
            seed: f.seed,
            coverage: f.coverage,
            corruption_rate: f.corruption_rate,
            entity_count: f.entity_count,
            relation_count: f.relation_count,
            beliefs,
        })
    }
}

impl From<ParametricProfile> for ProfileFile {
    fn from(p: ParametricProfile) -> Self {
        ProfileFile {
            seed: p.seed,
            coverage: p.coverage,
            corruption_rate: p.corruption_rate,
            entity_count: p.entity_count,
            relation_count: p.relation_count,
            facts: p
                .beliefs
                .into_iter()
                .map(|((s, r), b)| ProfileEntry {
                    s,
                    r,
                    o: b.object,
                    status: b.status,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParametricAnswer {
    Answer(EntityId),
    Unknown,
}

impl ParametricProfile {
    /// Each fact is known with probability `coverage`; a known fact is corrupt
    /// with probability `corruption_rate`.
    pub fn generate(world: &World, config: &ProfileConfig, seed: u64) -> Result<Self, EnvError> {
        if !(0.0..=1.0).contains(&config.coverage) || !(0.0..=1.0).contains(&config.corruption_rate)
        {
            return Err(EnvError::InvalidConfig(
                "coverage and corruption_rate must be in [0, 1]".into(),
            ));
        }
        let mut rng = derived_rng(seed, &["profile".into()]);
        let n_e = world.entities().len() as u32;
        let mut beliefs = BTreeMap::new();
        for f in world.facts() {
            let known = rng.gen_bool(config.coverage);
            let corrupt = rng.gen_bool(config.corruption_rate);
            let pick = rng.gen::<u64>();
            let status = if !known {
                FactStatus::Unknown
            } else if corrupt {
                FactStatus::KnownCorrupt {
                    wrong: wrong_object(f, n_e, pick),
                }
            } else {
                FactStatus::KnownCorrect
            };
            beliefs.insert(
                f.query(),
                Belief {
                    object: f.object,
                    status,
                },
            );
        }
        Ok(Self {
            seed,
            coverage: config.coverage,
            corruption_rate: config.corruption_rate,
            entity_count: world.entities().len(),
            relation_count: world.relations().len(),
            beliefs,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn corruption_rate(&self) -> f64 {
        self.corruption_rate
    }

    /// Status of the fact answering `query`; `None` when no such fact exists.
    pub fn status(&self, query: Query) -> Option<FactStatus> {
        self.beliefs.get(&query).map(|b| b.status)
    }

    pub fn statuses(&self) -> impl Iterator<Item = (Query, FactStatus)> + '_ {
        self.beliefs.iter().map(|(q, b)| (*q, b.status))
    }

    /// Known vs Unknown is observable; correct vs corrupt is not.
    pub fn is_known(&self, query: Query) -> bool {
        self.status(query).is_some_and(|s| s.is_known())
    }

    pub fn is_known_correct(&self, query: Query) -> bool {
        matches!(self.status(query), Some(FactStatus::KnownCorrect))
    }

    /// True iff every hop of the question's true chain is `KnownCorrect`.
    pub fn answerable_without_search(&self, question: &Question) -> bool {
        question.hops.iter().all(|&q| self.is_known_correct(q))
    }
}

fn wrong_object(f: &Fact, n_e: u32, pick: u64) -> EntityId {
    let candidates: Vec<u32> = (0..n_e)
        .filter(|&e| e != f.object.0 && (e != f.subject.0 || n_e <= 2))
        .collect();
    EntityId(candidates[(pick % candidates.len() as u64) as usize])
}

pub fn parametric_lookup(
    profile: &ParametricProfile,
    query: Query,
) -> Result<ParametricAnswer, EnvError> {
    if query.0 .0 as usize >= profile.entity_count {
        return Err(EnvError::UnknownEntity(query.0));
    }
    if query.1 .0 as usize >= profile.relation_count {
        return Err(EnvError::UnknownRelation(query.1));
    }
    Ok(match profile.beliefs.get(&query) {
        None => ParametricAnswer::Unknown,
        Some(b) => match b.status {
            FactStatus::Unknown => ParametricAnswer::Unknown,
            FactStatus::KnownCorrupt { wrong } => ParametricAnswer::Answer(wrong),
            FactStatus::KnownCorrect => ParametricAnswer::Answer(b.object),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSettings {
    pub k: usize,
    pub p_miss: f64,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        Self { k: 3, p_miss: 0.1 }
    }
}

impl RetrievalSettings {
    pub fn noise(&self) -> RetrievalNoise {
        RetrievalNoise {
            p_miss: self.p_miss,
        }
    }
}

/// Everything needed to build an [`Environment`] deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub seed: u64,
    pub entity_count: usize,
    pub relation_count: usize,
    pub fact_density: f64,
    pub max_chain_depth: usize,
    pub coverage: f64,
    pub corruption_rate: f64,
    pub train_questions: usize,
    pub validation_questions: usize,
    pub hop_distribution: Vec<HopWeight>,
    pub k: usize,
    pub p_miss: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let world = WorldConfig::default();
        let profile = ProfileConfig::default();
        let retrieval = RetrievalSettings::default();
        Self {
            seed: 2024,
            entity_count: world.entity_count,
            relation_count: world.relation_count,
            fact_density: world.fact_density,
            max_chain_depth: world.max_chain_depth,
            coverage: profile.coverage,
            corruption_rate: profile.corruption_rate,
            train_questions: 300,
            validation_questions: 100,
            hop_distribution: default_hop_distribution(),
            k: retrieval.k,
            p_miss: retrieval.p_miss,
        }
    }
}

impl EnvConfig {
    pub fn world_config(&self) -> WorldConfig {
        WorldConfig {
            entity_count: self.entity_count,
            relation_count: self.relation_count,
            fact_density: self.fact_density,
            max_chain_depth: self.max_chain_depth,
        }
    }

    pub fn profile_config(&self) -> ProfileConfig {
        ProfileConfig {
            coverage: self.coverage,
            corruption_rate: self.corruption_rate,
        }
    }

    pub fn retrieval(&self) -> RetrievalSettings {
        RetrievalSettings {
            k: self.k,
            p_miss: self.p_miss,
        }
    }

    /// Builds world, profile and the disjoint train / validation question sets.
    pub fn build(&self) -> Result<Environment, EnvError> {
        if self.k == 0 {
            return Err(EnvError::ZeroK);
        }
        if !(0.0..=1.0).contains(&self.p_miss) {
            return Err(EnvError::InvalidConfig("p_miss must be in [0, 1]".into()));
        }
        let world = generate_world(&self.world_config(), self.seed)?;
        let profile = ParametricProfile::generate(&world, &self.profile_config(), self.seed)?;
        let mut questions = generate_questions(
            &world,
            self.train_questions + self.validation_questions,
            &self.hop_distribution,
            self.seed,
        )?;
        let validation = questions.split_off(self.train_questions);
        Ok(Environment {
            world,
            profile,
            train: questions,
            validation,
            retrieval: self.retrieval(),
        })
    }
}

/// World plus everything the agent interacts with. Immutable once built.
#[derive(Debug, Clone)]
pub struct Environment {
    pub world: World,
    pub profile: ParametricProfile,
    pub train: Vec<Question>,
    pub validation: Vec<Question>,
    pub retrieval: RetrievalSettings,
}

impl Environment {
    pub fn question(&self, id: &str) -> Option<&Question> {
        self.train
            .iter()
            .chain(&self.validation)
            .find(|q| q.id == id)
    }
}
