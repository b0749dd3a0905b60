//! Token-F1 accuracy, the label-conditioned search penalty and the gated total.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{BoundaryLabel, BoundaryVerdict};
use crate::trajectory::{search_count, Trajectory};

/// Tolerance for treating an F1 score as exactly 1.
pub const F1_GATE_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("NeedSearch label without a minimum sufficient search count")]
    MissingNMin,
    #[error("alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "I")]
    StageI,
    #[serde(rename = "II")]
    StageII,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::StageI => "I",
            Stage::StageII => "II",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub alpha: f64,
    pub stage: Stage,
}

impl RewardConfig {
    pub fn new(alpha: f64, stage: Stage) -> Result<Self, RewardError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(RewardError::InvalidAlpha(alpha));
        }
        Ok(Self { alpha, stage })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_acc: f64,
    pub r_search: f64,
    pub gated: bool,
    pub total: f64,
}

/// Lowercase, drop punctuation, drop the articles `a`/`an`/`the`, split on
/// whitespace.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

pub fn accuracy_f1(predicted: &str, gold: &str) -> f64 {
    let p = normalize_answer(predicted);
    let g = normalize_answer(gold);
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn is_exact(f1: f64) -> bool {
    (f1 - 1.0).abs() <= F1_GATE_TOLERANCE
}

pub fn search_reward(
    label: BoundaryLabel,
    n_searches: usize,
    n_min: Option<usize>,
    alpha: f64,
) -> Result<f64, RewardError> {
    Ok(match label {
        BoundaryLabel::NoSearch => -alpha * n_searches as f64,
        BoundaryLabel::NeedSearch => {
            let n_min = n_min.ok_or(RewardError::MissingNMin)?;
            -alpha * n_searches.saturating_sub(n_min) as f64
        }
        BoundaryLabel::Undetermined => 0.0,
    })
}

/// Stage I pays accuracy only. Stage II adds the search term, but only for
/// fully correct answers.
pub fn total_reward(
    trajectory: &Trajectory,
    gold: &str,
    verdict: &BoundaryVerdict,
    config: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let r_acc = accuracy_f1(trajectory.predicted_answer.as_deref().unwrap_or(""), gold);
    breakdown(r_acc, search_count(trajectory), verdict, config)
}

/// [`total_reward`] from an already computed accuracy and search count.
pub fn breakdown(
    r_acc: f64,
    n_searches: usize,
    verdict: &BoundaryVerdict,
    config: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let r_search = search_reward(verdict.label, n_searches, verdict.n_min, config.alpha)?;
    let gated = config.stage == Stage::StageII && is_exact(r_acc);
    let total = if gated { r_acc + r_search } else { r_acc };
    Ok(RewardBreakdown {
        r_acc,
        r_search,
        gated,
        total,
    })
}

/// `r_acc - alpha * N` with no gate and no label.
pub fn fixed_penalty_reward(r_acc: f64, n_searches: usize, alpha: f64) -> RewardBreakdown {
    let r_search = -alpha * n_searches as f64;
    RewardBreakdown {
        r_acc,
        r_search,
        gated: true,
        total: r_acc + r_search,
    }
}

/// One row of the reward CSV log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub step: usize,
    pub question_id: String,
    pub group: String,
    pub label: BoundaryLabel,
    pub n: usize,
    pub n_min: Option<usize>,
    pub r_acc: f64,
    pub r_search: f64,
    pub gated: bool,
    pub total: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EntityId, RelationId};
    use crate::trajectory::{Information, Mode, SearchQuery, Step};
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn f1_examples() {
        assert_eq!(accuracy_f1("Beijing", "Beijing"), 1.0);
        assert!(close(accuracy_f1("the city of Beijing", "Beijing"), 0.5));
        assert_eq!(accuracy_f1("Paris", "Beijing"), 0.0);
        assert_eq!(accuracy_f1("", "the"), 1.0);
        assert_eq!(accuracy_f1("", "Beijing"), 0.0);
        assert_eq!(accuracy_f1("Beijing", "..."), 0.0);
        assert_eq!(accuracy_f1("beijing.", "Beijing"), 1.0);
    }

    #[test]
    fn f1_counts_duplicates_once_per_gold_token() {
        // pred {a1, a1}, gold {a1}: one overlap, precision 1/2, recall 1.
        assert!(close(accuracy_f1("x x", "x"), 2.0 * 0.5 / 1.5));
    }

    #[test]
    fn search_reward_examples() {
        assert!(close(
            search_reward(BoundaryLabel::NoSearch, 3, None, 0.05).unwrap(),
            -0.15
        ));
        assert_eq!(
            search_reward(BoundaryLabel::NeedSearch, 2, Some(2), 0.05).unwrap(),
            0.0
        );
        assert!(close(
            search_reward(BoundaryLabel::NeedSearch, 4, Some(2), 0.05).unwrap(),
            -0.10
        ));
        assert_eq!(
            search_reward(BoundaryLabel::Undetermined, 5, None, 0.05).unwrap(),
            0.0
        );
        assert_eq!(
            search_reward(BoundaryLabel::NeedSearch, 1, None, 0.05),
            Err(RewardError::MissingNMin)
        );
    }

    fn verdict(label: BoundaryLabel, n_min: Option<usize>) -> BoundaryVerdict {
        BoundaryVerdict {
            n_d: 0,
            n_e: 0,
            label,
            n_min,
        }
    }

    #[test]
    fn breakdown_examples() {
        let s1 = RewardConfig::new(0.05, Stage::StageI).unwrap();
        let s2 = RewardConfig::new(0.05, Stage::StageII).unwrap();
        let b = breakdown(0.7, 3, &verdict(BoundaryLabel::NoSearch, None), &s1).unwrap();
        assert!(close(b.total, 0.7) && !b.gated);
        let b = breakdown(1.0, 3, &verdict(BoundaryLabel::NoSearch, None), &s2).unwrap();
        assert!(close(b.total, 0.85) && b.gated);
        let b = breakdown(0.6, 5, &verdict(BoundaryLabel::NoSearch, None), &s2).unwrap();
        assert!(close(b.total, 0.6) && !b.gated);
        assert!(RewardConfig::new(-0.1, Stage::StageI).is_err());
    }

    #[test]
    fn total_reads_answer_and_search_count() {
        let q = (EntityId(1), RelationId(2));
        let steps = vec![
            Step::Search(SearchQuery::Structured(q)),
            Step::Information(Information::Evidence(vec![])),
            Step::Search(SearchQuery::Structured(q)),
            Step::Information(Information::Evidence(vec![])),
            Step::Answer("e9".into()),
        ];
        let t = Trajectory::new("q", Mode::SearchEnabled, steps);
        let cfg = RewardConfig::new(0.05, Stage::StageII).unwrap();
        let b = total_reward(&t, "e9", &verdict(BoundaryLabel::NoSearch, None), &cfg).unwrap();
        assert!(close(b.total, 0.9));
        let none = Trajectory::new("q", Mode::SearchEnabled, vec![]);
        let b = total_reward(&none, "e9", &verdict(BoundaryLabel::NoSearch, None), &cfg).unwrap();
        assert_eq!(b.total, 0.0);
    }

    fn label() -> impl Strategy<Value = BoundaryLabel> {
        prop::sample::select(BoundaryLabel::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn gate_and_bounds(r_acc in 0.0f64..=1.0, exact in any::<bool>(), n in 0usize..=5,
                           n_min in 0usize..=5, alpha in 0.0f64..1.0, l in label(),
                           stage2 in any::<bool>()) {
            let r_acc = if exact { 1.0 } else { r_acc };
            let stage = if stage2 { Stage::StageII } else { Stage::StageI };
            let cfg = RewardConfig::new(alpha, stage).unwrap();
            let v = verdict(l, Some(n_min));
            let b = breakdown(r_acc, n, &v, &cfg).unwrap();
            if !is_exact(r_acc) {
                prop_assert_eq!(b.total, r_acc);
            }
            prop_assert!(b.r_search <= 0.0);
            prop_assert!(b.total <= 1.0 && b.total >= -alpha * 5.0);
            prop_assert_eq!(b.total, b.r_acc + if b.gated { b.r_search } else { 0.0 });
            prop_assert_eq!(b.gated, is_exact(r_acc) && stage == Stage::StageII);
            let more = breakdown(r_acc, n + 1, &v, &cfg).unwrap();
            prop_assert!(more.total <= b.total);
            let zero = RewardConfig::new(0.0, Stage::StageII).unwrap();
            let first = RewardConfig::new(0.0, Stage::StageI).unwrap();
            prop_assert_eq!(breakdown(r_acc, n, &v, &zero).unwrap().total,
                            breakdown(r_acc, n, &v, &first).unwrap().total);
        }

        #[test]
        fn f1_is_symmetric_and_bounded(a in "[a-z ]{0,12}", b in "[a-z ]{0,12}") {
            let x = accuracy_f1(&a, &b);
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((x - accuracy_f1(&b, &a)).abs() < 1e-12);
        }
    }
}
