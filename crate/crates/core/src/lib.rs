//! Network-based unconventionality scoring for patent applications.
//!
//! The pipeline runs in stages that each map onto a module:
//!
//! - [`corpus`]: JSON-Lines ingestion, CPC parsing, the scoreability filter.
//! - [`cooccur`]: cumulative yearly subclass co-occurrence networks.
//! - [`nullmodel`]: token-shuffle null model, per-pair `mu`/`sigma` and z-scores.
//! - [`scoring`]: focal-pair aggregation into `p_atypical`.
//! - [`gender`]: dictionary name→gender inference and team composition.
//! - [`metrics`]: experience, claims, latency, survivorship, homophily,
//!   reversal rates and the lost-value estimators.
//! - [`stats`]: fixed-effect GLMs, cluster-robust errors, binned tables and
//!   hypothesis tests.
//! - [`synth`]: seeded synthetic corpora with planted effects.

pub mod cooccur;
pub mod corpus;
pub mod gender;
pub mod metrics;
pub mod nullmodel;
pub mod rng;
pub mod scoring;
pub mod stats;
pub mod synth;

pub use cooccur::{build_network, merge_networks, CodePair, CooccurrenceNetwork};
pub use corpus::{filter_scoreable, parse_corpus, validate_cpc, CorpusFilter, CpcCode, PatentApplication};
pub use gender::{infer_gender, team_composition, GenderDict, GenderLabel, TeamComposition};
pub use nullmodel::{exact_null_small, null_stats, pair_z, permute_once, PairStats, ZSnapshot};
pub use scoring::{score_corpus, score_patent, Aggregation, ScoreResult, SnapshotSet, TimingPolicy};
pub use metrics::{experience, lost_value, over_assignment, reassignment_gain, EstimatorReport, ExperienceIndex};
pub use stats::{fit_glm, Family, Frame, GlmFit, GlmSpec};
pub use synth::{synth_corpus, SynthCorpus, SynthParams};
