//! Success counting over contrasted rollout groups, boundary labels and the
//! minimum sufficient search count.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::policy::Rollout;
use crate::reward::accuracy_f1;
use crate::trajectory::{search_count, Mode, Trajectory};

/// Search-disabled (`G_d`) and search-enabled (`G_e`) rollouts for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroups {
    pub question_id: String,
    pub disabled: Vec<Rollout>,
    pub enabled: Vec<Rollout>,
}

impl RolloutGroups {
    pub fn disabled_trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.disabled.iter().map(|r| &r.trajectory)
    }

    pub fn enabled_trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.enabled.iter().map(|r| &r.trajectory)
    }

    /// Checks that each side is non-empty and carries the matching mode.
    pub fn is_well_formed(&self) -> bool {
        !self.disabled.is_empty()
            && !self.enabled.is_empty()
            && self
                .disabled_trajectories()
                .all(|t| t.mode == Mode::SearchDisabled)
            && self
                .enabled_trajectories()
                .all(|t| t.mode == Mode::SearchEnabled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryLabel {
    NoSearch,
    NeedSearch,
    Undetermined,
}

impl BoundaryLabel {
    pub const ALL: [BoundaryLabel; 3] = [
        BoundaryLabel::NoSearch,
        BoundaryLabel::NeedSearch,
        BoundaryLabel::Undetermined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundaryLabel::NoSearch => "NoSearch",
            BoundaryLabel::NeedSearch => "NeedSearch",
            BoundaryLabel::Undetermined => "Undetermined",
        }
    }
}

impl fmt::Display for BoundaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryVerdict {
    pub n_d: usize,
    pub n_e: usize,
    pub label: BoundaryLabel,
    pub n_min: Option<usize>,
}

/// Correct iff the predicted answer has token F1 of exactly 1 against `gold`.
/// A trajectory without an answer is incorrect.
pub fn is_correct(trajectory: &Trajectory, gold: &str) -> bool {
    trajectory
        .predicted_answer
        .as_deref()
        .is_some_and(|p| accuracy_f1(p, gold) >= 1.0 - 1e-12)
}

/// `(n_d, n_e)`: correct trajectories in the disabled and enabled groups.
pub fn count_successes<F>(groups: &RolloutGroups, judge: F) -> (usize, usize)
where
    F: Fn(&Trajectory) -> bool,
{
    let n_d = groups.disabled_trajectories().filter(|t| judge(t)).count();
    let n_e = groups.enabled_trajectories().filter(|t| judge(t)).count();
    (n_d, n_e)
}

/// # Panics
/// When `delta` is zero.
pub fn classify(n_d: usize, n_e: usize, delta: usize) -> BoundaryLabel {
    assert!(delta >= 1, "delta must be at least 1");
    if n_d >= delta {
        BoundaryLabel::NoSearch
    } else if n_d == 0 && n_e > 0 {
        BoundaryLabel::NeedSearch
    } else {
        BoundaryLabel::Undetermined
    }
}

/// Fewest searches among correct enabled trajectories, if any is correct.
pub fn min_sufficient_searches<'a, I, F>(enabled: I, judge: F) -> Option<usize>
where
    I: IntoIterator<Item = &'a Trajectory>,
    F: Fn(&Trajectory) -> bool,
{
    enabled
        .into_iter()
        .filter(|t| judge(t))
        .map(search_count)
        .min()
}

/// Counts, label and `N_min` for one question's groups.
pub fn estimate_boundary(groups: &RolloutGroups, gold: &str, delta: usize) -> BoundaryVerdict {
    let judge = |t: &Trajectory| is_correct(t, gold);
    let (n_d, n_e) = count_successes(groups, judge);
    BoundaryVerdict {
        n_d,
        n_e,
        label: classify(n_d, n_e, delta),
        n_min: min_sufficient_searches(groups.enabled_trajectories(), judge),
    }
}

/// One line of the boundary JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub step: usize,
    pub question_id: String,
    pub n_d: usize,
    pub n_e: usize,
    pub delta: usize,
    pub label: BoundaryLabel,
    pub n_min: Option<usize>,
}

impl BoundaryRecord {
    pub fn new(step: usize, question_id: &str, delta: usize, verdict: &BoundaryVerdict) -> Self {
        Self {
            step,
            question_id: question_id.to_string(),
            n_d: verdict.n_d,
            n_e: verdict.n_e,
            delta,
            label: verdict.label,
            n_min: verdict.n_min,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EntityId, RelationId};
    use crate::trajectory::{Information, SearchQuery, Step, THINK_PLACEHOLDER};
    use proptest::prelude::*;

    fn traj(mode: Mode, searches: usize, answer: Option<&str>) -> Trajectory {
        let mut steps = vec![Step::Think(THINK_PLACEHOLDER.into())];
        for _ in 0..searches {
            steps.push(Step::Search(SearchQuery::Structured((
                EntityId(0),
                RelationId(0),
            ))));
            steps.push(Step::Information(Information::Evidence(vec![])));
        }
        if let Some(a) = answer {
            steps.push(Step::Answer(a.into()));
        }
        Trajectory::new("q0", mode, steps)
    }

    fn wrap(t: Trajectory) -> Rollout {
        Rollout {
            trajectory: t,
            decisions: vec![],
        }
    }

    fn groups(disabled: Vec<Trajectory>, enabled: Vec<Trajectory>) -> RolloutGroups {
        RolloutGroups {
            question_id: "q0".into(),
            disabled: disabled.into_iter().map(wrap).collect(),
            enabled: enabled.into_iter().map(wrap).collect(),
        }
    }

    #[test]
    fn literal_cases() {
        assert_eq!(classify(2, 0, 2), BoundaryLabel::NoSearch);
        assert_eq!(classify(2, 4, 2), BoundaryLabel::NoSearch);
        assert_eq!(classify(0, 1, 2), BoundaryLabel::NeedSearch);
        assert_eq!(classify(1, 4, 2), BoundaryLabel::Undetermined);
        assert_eq!(classify(0, 0, 2), BoundaryLabel::Undetermined);
    }

    #[test]
    fn counts_with_rescan_oracle() {
        let d = |a| traj(Mode::SearchDisabled, 0, a);
        let g = groups(
            vec![d(Some("e5")), d(Some("e5")), d(Some("e6")), d(None)],
            vec![traj(Mode::SearchEnabled, 1, Some("e6"))],
        );
        assert!(g.is_well_formed());
        let judge = |t: &Trajectory| is_correct(t, "e5");
        assert_eq!(count_successes(&g, judge), (2, 0));
        // Independent rescan: compare answers textually.
        let rescan = g
            .disabled
            .iter()
            .filter(|r| r.trajectory.predicted_answer.as_deref() == Some("e5"))
            .count();
        assert_eq!(rescan, 2);

        let all = groups(
            vec![d(Some("e5")); 4],
            vec![traj(Mode::SearchEnabled, 0, Some("e5"))],
        );
        assert_eq!(count_successes(&all, judge).0, 4);
        let none = groups(vec![d(None); 4], vec![traj(Mode::SearchEnabled, 0, None)]);
        assert_eq!(count_successes(&none, judge), (0, 0));
    }

    #[test]
    fn n_min_examples() {
        let judge = |t: &Trajectory| is_correct(t, "e1");
        let e = |n, a| traj(Mode::SearchEnabled, n, a);
        let ts = [
            e(3, Some("e1")),
            e(1, Some("e1")),
            e(2, Some("e1")),
            e(0, Some("e2")),
        ];
        assert_eq!(min_sufficient_searches(&ts, judge), Some(1));
        assert_eq!(min_sufficient_searches(&[e(0, Some("e2"))], judge), None);
        assert_eq!(min_sufficient_searches(&[e(2, Some("e1"))], judge), Some(2));
    }

    #[test]
    fn malformed_groups_detected() {
        let g = groups(
            vec![traj(Mode::SearchEnabled, 0, None)],
            vec![traj(Mode::SearchEnabled, 0, None)],
        );
        assert!(!g.is_well_formed());
    }

    proptest! {
        #[test]
        fn raising_delta_never_creates_no_search(n_d in 0usize..=4, n_e in 0usize..=4, delta in 1usize..4) {
            let before = classify(n_d, n_e, delta);
            let after = classify(n_d, n_e, delta + 1);
            if before != BoundaryLabel::NoSearch {
                prop_assert_ne!(after, BoundaryLabel::NoSearch);
            }
        }

        #[test]
        fn need_search_implies_n_min(
            enabled in prop::collection::vec((any::<bool>(), 0usize..=5), 1..=4),
            disabled in prop::collection::vec(any::<bool>(), 1..=4),
            delta in 1usize..=4,
        ) {
            let g = groups(
                disabled.iter().map(|&c| traj(Mode::SearchDisabled, 0, Some(if c { "e1" } else { "e2" }))).collect(),
                enabled.iter().map(|&(c, n)| traj(Mode::SearchEnabled, n, Some(if c { "e1" } else { "e2" }))).collect(),
            );
            let v = estimate_boundary(&g, "e1", delta);
            prop_assert!(v.n_d <= g.disabled.len() && v.n_e <= g.enabled.len());
            if v.label == BoundaryLabel::NeedSearch {
                prop_assert!(v.n_min.is_some());
            }
            if let Some(m) = v.n_min {
                let correct: Vec<usize> = enabled.iter().filter(|e| e.0).map(|e| e.1).collect();
                prop_assert!(correct.contains(&m));
                prop_assert!(correct.iter().all(|&n| n >= m));
            }
        }
    }
}
