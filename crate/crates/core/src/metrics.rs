//! Evaluation metrics (ACC, SC, QOR, SOR) and the per-step search dynamics.
//!
//! Answer equivalence is exact normalized-token match. A search is redundant
//! when the gold fact for its query is already in evidence retrieved earlier
//! in the same trajectory, or when the profile already knows that fact
//! correctly.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{Fact, ParametricProfile, Question, World};
use crate::reward::{accuracy_f1, is_exact};
use crate::trajectory::{search_count, Information, Mode, Step, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no records to aggregate")]
    Empty,
    #[error("trajectory {question_id}: search steps {steps:?} have neither a structured query nor a redundancy annotation")]
    Unjudgeable {
        question_id: String,
        steps: Vec<usize>,
    },
    #[error(
        "trajectory {question_id}: {annotations} redundancy annotations for {searches} searches"
    )]
    AnnotationMismatch {
        question_id: String,
        annotations: usize,
        searches: usize,
    },
}

pub fn judge_answer(predicted: &str, gold: &str) -> bool {
    is_exact(accuracy_f1(predicted, gold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub trajectory: Trajectory,
    pub gold: String,
    pub parametric_answerable: bool,
    /// One flag per search step, for transcripts whose queries the oracle
    /// cannot interpret.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redundancy: Option<Vec<bool>>,
}

impl EvalRecord {
    pub fn new(question: &Question, trajectory: Trajectory, profile: &ParametricProfile) -> Self {
        Self {
            question_id: question.id.clone(),
            trajectory,
            gold: question.gold_text(),
            parametric_answerable: profile.answerable_without_search(question),
            redundancy: None,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.trajectory
            .predicted_answer
            .as_deref()
            .is_some_and(|p| judge_answer(p, &self.gold))
    }
}

pub fn compute_acc(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = records.iter().filter(|r| r.is_correct()).count();
    Ok(correct as f64 / records.len() as f64)
}

pub fn compute_sc(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: usize = records.iter().map(|r| search_count(&r.trajectory)).sum();
    Ok(total as f64 / records.len() as f64)
}

/// Fraction of parametric-answerable questions on which the trajectory searched.
pub fn compute_qor(records: &[EvalRecord]) -> Option<f64> {
    let para: Vec<&EvalRecord> = records.iter().filter(|r| r.parametric_answerable).collect();
    if para.is_empty() {
        return None;
    }
    let searched = para
        .iter()
        .filter(|r| search_count(&r.trajectory) >= 1)
        .count();
    Some(searched as f64 / para.len() as f64)
}

/// Redundancy flag for every search step of `trajectory`, in order.
/// Errors carry the indices of search steps the oracle cannot judge.
pub fn redundancy_flags(
    trajectory: &Trajectory,
    world: &World,
    profile: &ParametricProfile,
) -> Result<Vec<bool>, Vec<usize>> {
    let mut seen: HashSet<Fact> = HashSet::new();
    let mut flags = Vec::new();
    let mut offending = Vec::new();
    for (i, step) in trajectory.steps.iter().enumerate() {
        match step {
            Step::Search(q) => match q.structured() {
                Some(query) => {
                    let in_evidence = world.lookup(query).is_some_and(|f| seen.contains(f));
                    flags.push(in_evidence || profile.is_known_correct(query));
                }
                None => offending.push(i),
            },
            Step::Information(Information::Evidence(items)) => {
                seen.extend(items.iter().map(|e| e.fact));
            }
            _ => {}
        }
    }
    if offending.is_empty() {
        Ok(flags)
    } else {
        Err(offending)
    }
}

fn record_flags(
    record: &EvalRecord,
    world: &World,
    profile: &ParametricProfile,
) -> Result<Vec<bool>, MetricsError> {
    if let Some(flags) = &record.redundancy {
        let searches = search_count(&record.trajectory);
        if flags.len() != searches {
            return Err(MetricsError::AnnotationMismatch {
                question_id: record.question_id.clone(),
                annotations: flags.len(),
                searches,
            });
        }
        return Ok(flags.clone());
    }
    redundancy_flags(&record.trajectory, world, profile).map_err(|steps| {
        MetricsError::Unjudgeable {
            question_id: record.question_id.clone(),
            steps,
        }
    })
}

/// `(redundant, total)` search counts over `records`.
pub fn redundant_counts(
    records: &[EvalRecord],
    world: &World,
    profile: &ParametricProfile,
) -> Result<(usize, usize), MetricsError> {
    let mut redundant = 0;
    let mut total = 0;
    for r in records {
        let flags = record_flags(r, world, profile)?;
        total += flags.len();
        redundant += flags.iter().filter(|f| **f).count();
    }
    Ok((redundant, total))
}

pub fn compute_sor(
    records: &[EvalRecord],
    world: &World,
    profile: &ParametricProfile,
) -> Result<Option<f64>, MetricsError> {
    let (redundant, total) = redundant_counts(records, world, profile)?;
    Ok((total > 0).then(|| redundant as f64 / total as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    /// Share of search-enabled trajectories with no search; 0 when there are none.
    pub no_search_ratio: f64,
    /// Redundant over total searches among search-enabled trajectories.
    pub redundant_search_ratio: Option<f64>,
}

/// Search dynamics over the search-enabled trajectories of one training step.
pub fn compute_dynamics<'a, I>(
    trajectories: I,
    world: &World,
    profile: &ParametricProfile,
) -> Dynamics
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    let mut enabled = 0usize;
    let mut silent = 0usize;
    let mut redundant = 0usize;
    let mut total = 0usize;
    for t in trajectories
        .into_iter()
        .filter(|t| t.mode == Mode::SearchEnabled)
    {
        enabled += 1;
        if search_count(t) == 0 {
            silent += 1;
        }
        // Raw queries are never produced by the simulator; they count as
        // non-redundant here.
        let flags = redundancy_flags(t, world, profile).unwrap_or_default();
        total += search_count(t);
        redundant += flags.iter().filter(|f| **f).count();
    }
    Dynamics {
        no_search_ratio: if enabled == 0 {
            0.0
        } else {
            silent as f64 / enabled as f64
        },
        redundant_search_ratio: (total > 0).then(|| redundant as f64 / total as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub questions: usize,
    pub para_questions: usize,
    pub total_searches: usize,
    pub redundant_searches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub sc: f64,
    pub qor: Option<f64>,
    pub sor: Option<f64>,
    pub counts: MetricCounts,
}

pub const REPORT_CSV_HEADER: [&str; 8] = [
    "acc",
    "sc",
    "qor",
    "sor",
    "questions",
    "para_questions",
    "total_searches",
    "redundant_searches",
];

impl MetricsReport {
    pub fn compute(
        records: &[EvalRecord],
        world: &World,
        profile: &ParametricProfile,
    ) -> Result<Self, MetricsError> {
        let (redundant, total) = redundant_counts(records, world, profile)?;
        Ok(Self {
            acc: compute_acc(records)?,
            sc: compute_sc(records)?,
            qor: compute_qor(records),
            sor: (total > 0).then(|| redundant as f64 / total as f64),
            counts: MetricCounts {
                questions: records.len(),
                para_questions: records.iter().filter(|r| r.parametric_answerable).count(),
                total_searches: total,
                redundant_searches: redundant,
            },
        })
    }

    pub fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.acc.to_string(),
            self.sc.to_string(),
            opt(self.qor),
            opt(self.sor),
            self.counts.questions.to_string(),
            self.counts.para_questions.to_string(),
            self.counts.total_searches.to_string(),
            self.counts.redundant_searches.to_string(),
        ]
    }

    /// Header plus one data row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_CSV_HEADER).expect("in-memory write");
        w.write_record(self.csv_row()).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{retrieve, EnvConfig, Environment, RelationId, RetrievalNoise};
    use crate::trajectory::{SearchQuery, THINK_PLACEHOLDER};

    fn env() -> Environment {
        EnvConfig::default().build().unwrap()
    }

    fn record(id: &str, answer: &str, searches: usize, para: bool) -> EvalRecord {
        let mut steps = vec![Step::Think(THINK_PLACEHOLDER.into())];
        for _ in 0..searches {
            steps.push(Step::Search(SearchQuery::Raw("x".into())));
            steps.push(Step::Information(Information::Raw("y".into())));
        }
        steps.push(Step::Answer(answer.into()));
        EvalRecord {
            question_id: id.into(),
            trajectory: Trajectory::new(id, Mode::SearchEnabled, steps),
            gold: "Beijing".into(),
            parametric_answerable: para,
            redundancy: Some(vec![false; searches]),
        }
    }

    #[test]
    fn judge_examples() {
        assert!(judge_answer("beijing.", "Beijing"));
        assert!(judge_answer("The Beijing", "Beijing"));
        assert!(!judge_answer("Shanghai", "Beijing"));
    }

    #[test]
    fn acc_sc_qor_examples() {
        let rs = vec![
            record("a", "Beijing", 0, true),
            record("b", "Beijing", 1, true),
            record("c", "Beijing", 2, true),
            record("d", "Paris", 1, true),
        ];
        assert_eq!(compute_acc(&rs).unwrap(), 0.75);
        assert_eq!(compute_sc(&rs).unwrap(), 1.0);
        assert_eq!(compute_qor(&rs), Some(0.75));
        assert_eq!(compute_sc(&rs[..1]).unwrap(), 0.0);
        assert_eq!(compute_qor(&rs[..1]), Some(0.0));
        assert_eq!(compute_acc(&[]), Err(MetricsError::Empty));
        assert_eq!(compute_sc(&[]), Err(MetricsError::Empty));
        let no_para: Vec<_> = rs
            .iter()
            .cloned()
            .map(|mut r| {
                r.parametric_answerable = false;
                r
            })
            .collect();
        assert_eq!(compute_qor(&no_para), None);
    }

    #[test]
    fn sor_from_annotations() {
        let env = env();
        let mut rs = vec![record("a", "x", 5, false), record("b", "x", 5, false)];
        rs[0].redundancy = Some(vec![true, false, false, false, false]);
        rs[1].redundancy = Some(vec![false, false, true, false, false]);
        assert_eq!(
            compute_sor(&rs, &env.world, &env.profile).unwrap(),
            Some(0.2)
        );
        let silent = vec![record("c", "x", 0, false)];
        assert_eq!(
            compute_sor(&silent, &env.world, &env.profile).unwrap(),
            None
        );
    }

    #[test]
    fn unannotated_raw_queries_are_reported() {
        let env = env();
        let mut r = record("a", "x", 2, false);
        r.redundancy = None;
        assert_eq!(
            compute_sor(&[r.clone()], &env.world, &env.profile),
            Err(MetricsError::Unjudgeable {
                question_id: "a".into(),
                steps: vec![1, 3]
            })
        );
        r.redundancy = Some(vec![true]);
        assert!(matches!(
            compute_sor(&[r], &env.world, &env.profile),
            Err(MetricsError::AnnotationMismatch { .. })
        ));
    }

    #[test]
    fn repeated_hop_is_redundant() {
        let env = env();
        let q = env
            .train
            .iter()
            .find(|q| !env.profile.is_known_correct(q.hops[0]))
            .unwrap();
        let noise = RetrievalNoise { p_miss: 0.0 };
        let items = retrieve(&env.world, q.hops[0], 3, noise, 1).unwrap();
        let search = Step::Search(SearchQuery::Structured(q.hops[0]));
        let info = Step::Information(Information::Evidence(items));
        let t = Trajectory::new(
            q.id.clone(),
            Mode::SearchEnabled,
            vec![
                search.clone(),
                info.clone(),
                search,
                info,
                Step::Answer("e0".into()),
            ],
        );
        assert_eq!(
            redundancy_flags(&t, &env.world, &env.profile),
            Ok(vec![false, true])
        );
        let d = compute_dynamics([&t], &env.world, &env.profile);
        assert_eq!(d.no_search_ratio, 0.0);
        assert_eq!(d.redundant_search_ratio, Some(0.5));
    }

    #[test]
    fn known_correct_hop_is_redundant_on_first_search() {
        let env = env();
        let (query, _) = env
            .profile
            .statuses()
            .find(|(q, _)| env.profile.is_known_correct(*q) && env.world.lookup(*q).is_some())
            .unwrap();
        let t = Trajectory::new(
            "q",
            Mode::SearchEnabled,
            vec![
                Step::Search(SearchQuery::Structured(query)),
                Step::Information(Information::Evidence(vec![])),
                Step::Answer("e0".into()),
            ],
        );
        assert_eq!(
            redundancy_flags(&t, &env.world, &env.profile),
            Ok(vec![true])
        );
        let _ = RelationId(0);
    }

    #[test]
    fn dynamics_without_searches() {
        let env = env();
        let t = Trajectory::new("q", Mode::SearchEnabled, vec![Step::Answer("e1".into())]);
        let d_mode = Trajectory::new("q", Mode::SearchDisabled, vec![Step::Answer("e1".into())]);
        let d = compute_dynamics([&t, &d_mode], &env.world, &env.profile);
        assert_eq!(d.no_search_ratio, 1.0);
        assert_eq!(d.redundant_search_ratio, None);
    }

    #[test]
    fn report_csv_and_json() {
        let env = env();
        let rs = vec![record("a", "Beijing", 1, true)];
        let rep = MetricsReport::compute(&rs, &env.world, &env.profile).unwrap();
        assert_eq!(rep.counts.total_searches, 1);
        assert_eq!(rep.sor, Some(0.0));
        let csv = rep.to_csv();
        assert!(csv.starts_with("acc,sc,qor,sor,"));
        let back: MetricsReport =
            serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(back, rep);
    }
}
