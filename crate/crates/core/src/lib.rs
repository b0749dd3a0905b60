//! Search-boundary-aware reinforcement learning on a synthetic multi-hop QA world.
//!
//! The crate is organised bottom-up:
//!
//! - [`environment`]: knowledge-graph world, questions, top-k retrieval and the
//!   parametric-knowledge profile that stands in for what a model "knows".
//! - [`trajectory`]: step/trajectory model and the strict tagged-transcript parser.
//! - [`policy`]: softmax policy over `SearchNext` / `SearchRedundant` / `AnswerNow`
//!   plus rollout machinery for search-enabled and search-disabled groups.
//! - [`boundary`]: success counting, boundary labels and minimum sufficient searches.
//! - [`reward`]: F1 accuracy, label-conditioned search penalty, correctness gate.
//! - [`optimizer`]: group-wise advantage normalisation, clipped update, plateau
//!   detection and the full training loop with its ablation variants.
//! - [`metrics`]: ACC, SC, QOR, SOR and the training-dynamics ratios.
//! - [`io`]: file formats shared by the command-line tool.

pub mod boundary;
pub mod environment;
pub mod io;
pub mod metrics;
pub mod optimizer;
pub mod policy;
pub mod reward;
pub mod seed;
pub mod trajectory;

pub use boundary::{BoundaryLabel, BoundaryVerdict, RolloutGroups};
pub use environment::{
    EntityId, EnvConfig, Environment, EvidenceItem, Fact, ParametricProfile, Question, RelationId,
    World,
};
pub use metrics::{EvalRecord, MetricsReport};
pub use optimizer::{TrainConfig, TrainOutcome, TrainingLog, Variant};
pub use policy::{Action, PolicyParams, Rollout};
pub use reward::{RewardBreakdown, RewardConfig, Stage};
pub use trajectory::{Mode, Step, Trajectory};
