//! The full stack behind one clock: registry, assessment pack, monitor,
//! replacement manager and scenario store.
//!
//! Every input (observation, tick, operator command) takes the current time
//! as an argument. State changes are appended to the store and queued as
//! [`SystemEvent`]s for the caller to publish.

use crate::ids::{DataType, SourceId};
use crate::monitor::{
    Monitor, MonitorConfig, MonitorError, ObservationRecord, SourceState, SourceStatus, StateKind,
    StatusTransition,
};
use crate::replacement::{
    run_assessment, Action, AssessmentPack, Designation, ReplacementConfig, ReplacementDecision,
    ReplacementError, ReplacementManager,
};
use crate::similarity::SimilarityError;
use crate::store::{OperatorAction, RecordBody, ScenarioStore, StoreError};
use crate::taxonomy::{RawSource, Registry, RegistryError, Weights};
use crate::time::Timestamp;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;
use thiserror::Error;

/// File name of the registry snapshot kept next to the store segments.
pub const REGISTRY_SNAPSHOT: &str = "registry.json";

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("unknown source {0:?}")]
    UnknownSource(SourceId),
    #[error("source not available: {source_id} is {state}")]
    NotAvailable {
        source_id: SourceId,
        state: StateKind,
    },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Replacement(ReplacementError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot write registry snapshot {path}: {source}")]
    Snapshot {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<ReplacementError> for SystemError {
    fn from(e: ReplacementError) -> Self {
        match e {
            ReplacementError::UnknownSource(id) => SystemError::UnknownSource(id),
            ReplacementError::NotAvailable { source_id, state } => {
                SystemError::NotAvailable { source_id, state }
            }
            ReplacementError::Registry(r) => SystemError::Registry(r),
            ReplacementError::Similarity(SimilarityError::InvalidWeight { attribute, value }) => {
                SystemError::InvalidWeights(format!("{attribute} = {value}"))
            }
            other => SystemError::Replacement(other),
        }
    }
}

impl From<MonitorError> for SystemError {
    fn from(e: MonitorError) -> Self {
        match e {
            MonitorError::UnknownSource(id) => SystemError::UnknownSource(id),
            MonitorError::NotActivatable { source_id, state } => {
                SystemError::NotAvailable { source_id, state }
            }
            MonitorError::AlreadyRegistered(id) => {
                SystemError::Registry(RegistryError::DuplicateSource(id))
            }
        }
    }
}

/// Commands a control center can issue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "command",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case"
)]
pub enum OperatorCommand {
    /// Merge new weighting factors and re-rank.
    SetWeights { weights: Weights },
    /// Start activating a dormant source ahead of need.
    PreActivate { source: SourceId },
    /// Designate a source regardless of ranking.
    ForceSwitch { source: SourceId },
    /// Add a source that became available.
    RegisterSource { source: RawSource },
    /// Close the open store segment.
    CloseSegment,
}

impl OperatorCommand {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorCommand::SetWeights { .. } => "set-weights",
            OperatorCommand::PreActivate { .. } => "pre-activate",
            OperatorCommand::ForceSwitch { .. } => "force-switch",
            OperatorCommand::RegisterSource { .. } => "register-source",
            OperatorCommand::CloseSegment => "close-segment",
        }
    }
}

/// Result of an operator command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CommandOutcome {
    pub command: String,
    pub at: Timestamp,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix_version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ready_at: Option<Timestamp>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transition: Option<StatusTransition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<ReplacementDecision>,
}

impl CommandOutcome {
    fn new(command: &OperatorCommand, at: Timestamp) -> Self {
        Self {
            command: command.name().into(),
            at,
            matrix_version: None,
            ready_at: None,
            transition: None,
            decision: None,
        }
    }
}

/// Something observers should hear about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "event",
    content = "data",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case"
)]
pub enum SystemEvent {
    Transition(StatusTransition),
    Decision {
        sequence: u64,
        decision: ReplacementDecision,
    },
    MatrixUpdated {
        at: Timestamp,
        matrix_version: String,
        registry_version: String,
    },
    Alarm {
        data_type: DataType,
        at: Timestamp,
        rationale: String,
    },
}

impl SystemEvent {
    pub fn name(&self) -> &'static str {
        match self {
            SystemEvent::Transition(_) => "transition",
            SystemEvent::Decision { .. } => "decision",
            SystemEvent::MatrixUpdated { .. } => "matrix-updated",
            SystemEvent::Alarm { .. } => "alarm",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct SystemConfig {
    pub monitor: MonitorConfig,
    pub replacement: ReplacementConfig,
}

#[derive(Debug)]
pub struct System {
    registry: Registry,
    pack: AssessmentPack,
    monitor: Monitor,
    manager: ReplacementManager,
    store: ScenarioStore,
    events: Vec<SystemEvent>,
}

impl System {
    /// Assess `registry`, register every source and designate the standard
    /// sources.
    pub fn new(
        registry: Registry,
        config: SystemConfig,
        store: ScenarioStore,
        now: Timestamp,
    ) -> Result<Self, SystemError> {
        let pack = run_assessment(&registry, now)?;
        let (monitor, registrations) = Monitor::new(&registry, config.monitor, now);
        let mut manager = ReplacementManager::new(config.replacement);
        manager.initialize(&pack, monitor.statuses(), now);
        let mut system = Self {
            registry,
            pack,
            monitor,
            manager,
            store,
            events: Vec::new(),
        };
        system.persist_registry()?;
        system.apply_transitions(registrations, now)?;
        Ok(system)
    }

    /// Resume from a store that already holds records. Uses the registry
    /// snapshot in the store directory when one exists, rebuilds the pack,
    /// then restores statuses and designations from the logged transitions
    /// and decisions. Falls back to [`System::new`] for an empty store.
    pub fn recover(
        registry: Registry,
        config: SystemConfig,
        store: ScenarioStore,
        now: Timestamp,
    ) -> Result<Self, SystemError> {
        let registry = match store.dir().map(|d| d.join(REGISTRY_SNAPSHOT)) {
            Some(path) if path.exists() => Registry::load_file(&path)?,
            _ => registry,
        };
        if store.is_empty() {
            return Self::new(registry, config, store, now);
        }
        let pack = run_assessment(&registry, now)?;
        let (mut monitor, _) = Monitor::new(&registry, config.monitor, now);
        let mut manager = ReplacementManager::new(config.replacement);

        let mut statuses: BTreeMap<SourceId, SourceStatus> = BTreeMap::new();
        let mut last_seen: BTreeMap<SourceId, Timestamp> = BTreeMap::new();
        let mut designations: BTreeMap<DataType, Option<Designation>> = BTreeMap::new();
        for record in store.records() {
            match &record.body {
                RecordBody::Observation(o) => {
                    let seen = last_seen
                        .entry(o.source_id.clone())
                        .or_insert(o.arrival_time);
                    *seen = (*seen).max(o.arrival_time);
                }
                RecordBody::Transition(t) => {
                    let state = match (t.to, t.ready_at) {
                        (StateKind::PendingActivation, Some(ready_at)) => {
                            SourceState::PendingActivation { ready_at }
                        }
                        (StateKind::PendingActivation, None) => SourceState::Standby,
                        (StateKind::Standby, _) => SourceState::Standby,
                        (StateKind::Active, _) => SourceState::Active,
                        (StateKind::Degraded, _) => SourceState::Degraded,
                        (StateKind::Failed, _) => SourceState::Failed,
                        (StateKind::Retired, _) => SourceState::Retired,
                    };
                    if matches!(state, SourceState::Active) {
                        let seen = last_seen.entry(t.source_id.clone()).or_insert(t.at);
                        *seen = (*seen).max(t.at);
                    }
                    statuses.insert(
                        t.source_id.clone(),
                        SourceStatus {
                            source_id: t.source_id.clone(),
                            data_type: t.data_type.clone(),
                            state,
                            last_seen: None,
                            reason: t.reason.clone(),
                        },
                    );
                }
                RecordBody::Decision(d) if d.action != Action::IntegrateNew => {
                    designations.insert(
                        d.data_type.clone(),
                        d.chosen.as_ref().map(|source| Designation {
                            source: source.clone(),
                            since: d.decided_at,
                            pending_until: d.effective_at.filter(|t| *t > d.decided_at),
                        }),
                    );
                }
                _ => {}
            }
        }
        for (id, mut status) in statuses {
            status.last_seen = last_seen.get(&id).copied();
            monitor.restore(status);
        }
        manager.initialize(&pack, monitor.statuses(), now);
        for (data_type, designation) in designations {
            let designation = designation.map(|mut d| {
                if monitor.status(d.source.as_str()).map(SourceStatus::kind)
                    == Some(StateKind::Active)
                {
                    d.pending_until = None;
                }
                d
            });
            manager.restore(data_type, designation);
        }
        let system = Self {
            registry,
            pack,
            monitor,
            manager,
            store,
            events: Vec::new(),
        };
        system.persist_registry()?;
        Ok(system)
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn pack(&self) -> &AssessmentPack {
        &self.pack
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn statuses(&self) -> &BTreeMap<SourceId, SourceStatus> {
        self.monitor.statuses()
    }

    pub fn designations(&self) -> &BTreeMap<DataType, Designation> {
        self.manager.designations()
    }

    /// Data types with no usable source.
    pub fn alarms(&self) -> Vec<DataType> {
        self.manager.alarms(&self.pack).cloned().collect()
    }

    pub fn store(&self) -> &ScenarioStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ScenarioStore {
        &mut self.store
    }

    /// Take the queued events.
    pub fn drain_events(&mut self) -> Vec<SystemEvent> {
        std::mem::take(&mut self.events)
    }

    fn persist_registry(&self) -> Result<(), SystemError> {
        if let Some(dir) = self.store.dir() {
            let path = dir.join(REGISTRY_SNAPSHOT);
            let tmp = dir.join(format!("{REGISTRY_SNAPSHOT}.tmp"));
            fs::write(&tmp, self.registry.to_json_pretty())
                .and_then(|_| fs::rename(&tmp, &path))
                .map_err(|source| SystemError::Snapshot { path, source })?;
        }
        Ok(())
    }

    /// Process one observation received at `now`.
    pub fn ingest(&mut self, record: ObservationRecord, now: Timestamp) -> Result<(), SystemError> {
        let transitions = self.monitor.ingest(&record, now)?;
        let data_type = self
            .monitor
            .status(record.source_id.as_str())
            .map(|s| s.data_type.clone());
        self.store
            .append(data_type, RecordBody::Observation(record))?;
        self.apply_transitions(transitions, now)
    }

    /// Advance the clock: detect stale sources, complete activations and
    /// react to both.
    pub fn tick(&mut self, now: Timestamp) -> Result<(), SystemError> {
        let transitions = self.monitor.tick(now);
        self.apply_transitions(transitions, now)?;
        self.store.close_if_idle(now)?;
        Ok(())
    }

    fn record_transition(&mut self, t: StatusTransition) -> Result<(), SystemError> {
        self.store
            .append(Some(t.data_type.clone()), RecordBody::Transition(t.clone()))?;
        if t.to == StateKind::Active {
            self.manager.activation_completed(&t.source_id);
        }
        self.events.push(SystemEvent::Transition(t));
        Ok(())
    }

    fn record_decision(&mut self, d: ReplacementDecision) -> Result<(), SystemError> {
        let sequence = self
            .store
            .append(Some(d.data_type.clone()), RecordBody::Decision(d.clone()))?;
        if d.action == Action::Alarm {
            self.events.push(SystemEvent::Alarm {
                data_type: d.data_type.clone(),
                at: d.decided_at,
                rationale: d.rationale.clone(),
            });
        }
        self.events.push(SystemEvent::Decision {
            sequence,
            decision: d,
        });
        Ok(())
    }

    /// Record a decision and start activating its chosen source if that
    /// source is dormant.
    fn enact(&mut self, d: ReplacementDecision, now: Timestamp) -> Result<(), SystemError> {
        let chosen = d.chosen.clone();
        self.record_decision(d)?;
        if let Some(chosen) = chosen {
            if self.monitor.status(chosen.as_str()).map(SourceStatus::kind)
                == Some(StateKind::Standby)
            {
                let t = self.monitor.request_activation(chosen.as_str(), now)?;
                self.record_transition(t)?;
            }
        }
        Ok(())
    }

    fn apply_transitions(
        &mut self,
        transitions: Vec<StatusTransition>,
        now: Timestamp,
    ) -> Result<(), SystemError> {
        let mut touched = BTreeSet::new();
        for t in transitions {
            let lost = matches!(t.to, StateKind::Failed | StateKind::Retired)
                && t.from.is_some_and(StateKind::is_available);
            let (source, data_type) = (t.source_id.clone(), t.data_type.clone());
            self.record_transition(t)?;
            if lost && self.pack.standard(&data_type).is_some() {
                let d = self.manager.on_source_failure(
                    &data_type,
                    &source,
                    self.monitor.statuses(),
                    &self.pack,
                    now,
                )?;
                self.enact(d, now)?;
            }
            touched.insert(data_type);
        }
        for data_type in touched {
            self.review(&data_type, now)?;
        }
        Ok(())
    }

    fn review(&mut self, data_type: &DataType, now: Timestamp) -> Result<(), SystemError> {
        if self.pack.standard(data_type).is_none() {
            return Ok(());
        }
        let d = self
            .manager
            .review_active(data_type, self.monitor.statuses(), &self.pack, now)?;
        if d.is_switch() {
            self.enact(d, now)?;
        }
        Ok(())
    }

    /// Apply an operator command and log it.
    pub fn command(
        &mut self,
        command: OperatorCommand,
        now: Timestamp,
    ) -> Result<CommandOutcome, SystemError> {
        let mut outcome = CommandOutcome::new(&command, now);
        let mut data_type = None;
        match &command {
            OperatorCommand::SetWeights { weights } => {
                weights
                    .check_known(self.registry.schema())
                    .map_err(|e| SystemError::InvalidWeights(e.to_string()))?;
                let merged = self.registry.weights().merged(weights);
                merged
                    .validate(self.registry.schema())
                    .map_err(|e| SystemError::InvalidWeights(e.to_string()))?;
                self.pack = self.pack.reweigh(weights).map_err(ReplacementError::from)?;
                self.registry = self.registry.with_weights(merged)?;
                self.persist_registry()?;
                outcome.matrix_version = Some(self.pack.matrix.version());
            }
            OperatorCommand::PreActivate { source } => {
                let t = self.monitor.request_activation(source.as_str(), now)?;
                outcome.ready_at = t.ready_at.or(Some(now));
                outcome.transition = Some(t.clone());
                data_type = Some(t.data_type.clone());
            }
            OperatorCommand::ForceSwitch { source } => {
                let d =
                    self.manager
                        .force_switch(source, self.monitor.statuses(), &self.pack, now)?;
                outcome.decision = Some(d.clone());
                data_type = Some(d.data_type.clone());
            }
            OperatorCommand::RegisterSource { source } => {
                let (registry, pack, d) = self.manager.on_source_available(
                    source.clone(),
                    &self.pack,
                    &self.registry,
                    now,
                )?;
                let desc = registry
                    .source(source.id.as_str())
                    .expect("registered source")
                    .clone();
                let t = self.monitor.register(&desc, now)?;
                self.registry = registry;
                self.pack = pack;
                self.persist_registry()?;
                outcome.matrix_version = Some(self.pack.matrix.version());
                outcome.transition = Some(t);
                outcome.decision = Some(d);
                data_type = Some(desc.data_type);
            }
            OperatorCommand::CloseSegment => {
                self.store.close_segment()?;
            }
        }
        self.store.append(
            data_type,
            RecordBody::OperatorAction(OperatorAction {
                at: now,
                command: command.clone(),
                outcome: "ok".into(),
            }),
        )?;
        match command {
            OperatorCommand::SetWeights { .. } => {
                self.matrix_updated(now);
                for dt in self
                    .pack
                    .standard_source
                    .keys()
                    .cloned()
                    .collect::<Vec<_>>()
                {
                    self.review(&dt, now)?;
                }
            }
            OperatorCommand::PreActivate { .. } => {
                let t = outcome.transition.clone().expect("set above");
                self.apply_transitions(vec![t], now)?;
            }
            OperatorCommand::ForceSwitch { .. } => {
                let d = outcome.decision.clone().expect("set above");
                self.enact(d, now)?;
            }
            OperatorCommand::RegisterSource { .. } => {
                self.matrix_updated(now);
                let d = outcome.decision.clone().expect("set above");
                self.record_decision(d)?;
                let t = outcome.transition.clone().expect("set above");
                self.apply_transitions(vec![t], now)?;
            }
            OperatorCommand::CloseSegment => {}
        }
        Ok(outcome)
    }

    fn matrix_updated(&mut self, now: Timestamp) {
        self.events.push(SystemEvent::MatrixUpdated {
            at: now,
            matrix_version: self.pack.matrix.version(),
            registry_version: self.registry.content_version(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_study;
    use crate::monitor::Payload;

    fn obs(source: &str, t: i64) -> ObservationRecord {
        ObservationRecord {
            source_id: SourceId::new(source),
            event_time: Timestamp(t),
            arrival_time: Timestamp(t),
            payload: Payload::Measurement {
                value: 40.0,
                unit: "km/h".into(),
            },
            quality: None,
        }
    }

    fn system() -> System {
        System::new(
            case_study::registry(),
            SystemConfig::default(),
            ScenarioStore::in_memory(),
            Timestamp(0),
        )
        .unwrap()
    }

    fn decisions(s: &System) -> Vec<ReplacementDecision> {
        s.store()
            .decisions_since(0)
            .map(|(_, d)| d.clone())
            .collect()
    }

    #[test]
    fn test_startup_registers_and_designates_standard() {
        let mut s = system();
        assert_eq!(
            s.designations()[&DataType::new("traffic")].source,
            "traffic-sensors"
        );
        let events = s.drain_events();
        assert_eq!(events.len(), 3);
        assert!(decisions(&s).is_empty());
    }

    #[test]
    fn test_stale_standard_triggers_fallback_and_activation() {
        let mut s = system();
        s.ingest(obs("traffic-sensors", 1000), Timestamp(1000))
            .unwrap();
        s.tick(Timestamp(4000)).unwrap();
        assert!(decisions(&s).is_empty());
        s.tick(Timestamp(4001)).unwrap();
        let ds = decisions(&s);
        assert_eq!(ds.len(), 1);
        assert_eq!(ds[0].chosen.as_ref().unwrap(), "floating-car-data");
        assert_eq!(
            s.statuses()["floating-car-data"].state,
            SourceState::PendingActivation {
                ready_at: Timestamp(64_001)
            }
        );
        s.tick(Timestamp(64_001)).unwrap();
        assert_eq!(s.statuses()["floating-car-data"].kind(), StateKind::Active);
        assert!(s.designations()[&DataType::new("traffic")]
            .pending_until
            .is_none());
    }

    #[test]
    fn test_operator_commands() {
        let mut s = system();
        let mut w = Weights::default();
        w.set("autonomous-operation-time", 3.0);
        let before = s.pack().matrix.version();
        let out = s
            .command(OperatorCommand::SetWeights { weights: w }, Timestamp(10))
            .unwrap();
        assert_ne!(out.matrix_version.unwrap(), before);
        assert_eq!(s.registry().weights().get("autonomous-operation-time"), 3.0);

        let mut bad = Weights::default();
        bad.set("delay", -1.0);
        assert!(matches!(
            s.command(OperatorCommand::SetWeights { weights: bad }, Timestamp(11)),
            Err(SystemError::InvalidWeights(_))
        ));

        let out = s
            .command(
                OperatorCommand::PreActivate {
                    source: "remote-sensing".into(),
                },
                Timestamp(1000),
            )
            .unwrap();
        assert_eq!(out.ready_at, Some(Timestamp(1000 + 20 * 60 * 1000)));
        assert!(matches!(
            s.command(
                OperatorCommand::PreActivate {
                    source: "remote-sensing".into()
                },
                Timestamp(1001)
            ),
            Err(SystemError::NotAvailable { .. })
        ));
        assert!(matches!(
            s.command(
                OperatorCommand::PreActivate {
                    source: "nope".into()
                },
                Timestamp(1001)
            ),
            Err(SystemError::UnknownSource(_))
        ));
        let out = s
            .command(
                OperatorCommand::ForceSwitch {
                    source: "floating-car-data".into(),
                },
                Timestamp(2000),
            )
            .unwrap();
        assert_eq!(out.decision.unwrap().rationale, "operator override");
        assert_eq!(
            s.statuses()["floating-car-data"].kind(),
            StateKind::PendingActivation
        );
        let actions = s
            .store()
            .records()
            .iter()
            .filter(|r| matches!(r.body, RecordBody::OperatorAction(_)))
            .count();
        assert_eq!(actions, 3);
    }

    #[test]
    fn test_recover_rebuilds_same_state() {
        let dir = tempfile::tempdir().unwrap();
        let open = || ScenarioStore::open(dir.path(), Default::default()).unwrap();
        let (pack, designations, statuses, log) = {
            let mut s = System::new(
                case_study::registry(),
                SystemConfig::default(),
                open(),
                Timestamp(0),
            )
            .unwrap();
            let mut w = Weights::default();
            w.set("delay", 2.0);
            s.command(OperatorCommand::SetWeights { weights: w }, Timestamp(5))
                .unwrap();
            s.ingest(obs("traffic-sensors", 1000), Timestamp(1000))
                .unwrap();
            s.tick(Timestamp(5000)).unwrap();
            (
                s.pack().clone(),
                s.designations().clone(),
                s.statuses().clone(),
                decisions(&s),
            )
        };
        let s = System::recover(
            case_study::registry(),
            SystemConfig::default(),
            open(),
            Timestamp(9000),
        )
        .unwrap();
        assert!(s.pack().same_contents(&pack));
        assert_eq!(s.designations(), &designations);
        assert_eq!(decisions(&s), log);
        for (id, st) in statuses {
            assert_eq!(s.statuses()[&id].state, st.state, "{id}");
        }
    }
}
