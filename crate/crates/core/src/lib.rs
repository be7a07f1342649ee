//! Data-source failover for digital-twin data ingress.
//!
//! Sources of the same data type are described by a shared attribute
//! taxonomy and compared pairwise ahead of a crisis ([`similarity`]). At
//! runtime the [`monitor`] watches every source, and when the one in use
//! fails the [`replacement`] manager switches to the most similar source
//! that is still available. Everything is logged to the [`store`] and can be
//! replayed in event-time order. [`system`] ties the pieces together and
//! [`simulator`] drives it through scripted scenarios under virtual time.

pub mod case_study;
pub mod ids;
pub mod monitor;
pub mod replacement;
pub mod similarity;
pub mod simulator;
pub mod store;
pub mod system;
pub mod taxonomy;
pub mod testkit;
pub mod time;

pub use ids::{AttributeId, DataType, SourceId};
pub use monitor::{
    plausibility_check, Monitor, MonitorConfig, MonitorError, ObservationRecord, Payload,
    PlausibilityProfile, SourceState, SourceStatus, StateKind, StatusTransition, Verdict,
};
pub use replacement::{
    run_assessment, Action, AssessmentPack, Designation, ReplacementConfig, ReplacementDecision,
    ReplacementError, ReplacementManager,
};
pub use similarity::{
    build_assessment_matrix, rank_candidates, similarity, AssessmentMatrix, MatrixTable,
    PairAssessment, RankingEntry, SimilarityError,
};
pub use simulator::{
    assert_trace, AssertionReport, Expectation, SimulationError, SimulationScript, SimulationTrace,
};
pub use store::{
    export_csv, read_interval, RecordBody, RecordKind, ReplayFilter, ScenarioRecord, ScenarioStore,
    StateSpan, StoreConfig, StoreError,
};
pub use system::{CommandOutcome, OperatorCommand, System, SystemConfig, SystemError, SystemEvent};
pub use taxonomy::{
    load_registry, AttributeSchema, AttributeValue, Category, RawSource, Registry,
    RegistryDocument, RegistryError, Score, SourceDescriptor, Weights,
};
pub use time::Timestamp;
