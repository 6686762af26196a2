//! Rank-based evaluation for knowledge graph link prediction and entity
//! alignment.
//!
//! Ranks come in optimistic, pessimistic and realistic flavours (plus a
//! non-deterministic one for an explicit tie order). On top of them sit the
//! usual Hits@k, mean rank and MRR, and the chance-adjusted metrics: expected
//! mean rank under a random scorer, adjusted mean rank (AMR) and the adjusted
//! mean rank index (AMRI), which is 0 for a random model and 1 for a perfect
//! one regardless of the candidate set sizes.
//!
//! ```
//! use kgeval::{rank_scores, metrics::adjusted_mean_rank_index, RankCollection};
//!
//! let r = rank_scores(&[0.9, 0.9, 0.1], 0, None).unwrap();
//! assert_eq!((r.optimistic, r.pessimistic), (1, 2));
//! let rc: RankCollection = [r].into_iter().collect();
//! assert_eq!(adjusted_mean_rank_index(&rc).unwrap(), 0.5);
//! ```

pub mod ea;
pub mod error;
pub mod experiment;
pub mod io;
pub mod kg;
pub mod lp;
pub mod metrics;
mod parallel;
pub mod rank;
pub mod scorers;
pub mod stats;
pub mod synthetic;

pub use ea::{evaluate_ea, AlignedPair, AlignmentSet, EaScorer};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, Task};
pub use kg::{EntityId, KnowledgeGraph, RelationId, Triple, Vocabulary};
pub use lp::{evaluate_lp, FilterIndex, LpOptions, LpScorer, SideHandling};
pub use metrics::{summarize, MetricReport, RankCollection, RankEntry, Side};
pub use rank::{rank_scores, RankRecord, RankVariant, ScoredCandidates};
pub use scorers::ScorerSpec;
