//! Health monitoring of live sources.
//!
//! The monitor tracks one [`SourceStatus`] per registered source. Incoming
//! observations refresh `last_seen` and are checked for plausibility;
//! [`Monitor::tick`] fails sources whose data has gone stale and completes
//! pending activations. Every state change is returned as a
//! [`StatusTransition`]. Time is always passed in, never read.

use crate::ids::{DataType, SourceId};
use crate::taxonomy::{Registry, SourceDescriptor};
use crate::time::Timestamp;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MonitorError {
    #[error("unknown source {0:?}; record quarantined")]
    UnknownSource(SourceId),
    #[error("source {source_id} cannot be activated from state {state}")]
    NotActivatable {
        source_id: SourceId,
        state: StateKind,
    },
    #[error("source {0} is already registered")]
    AlreadyRegistered(SourceId),
}

/// State of a source without attached data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    /// Registered but dormant; needs an activation request.
    Standby,
    PendingActivation,
    Active,
    Degraded,
    Failed,
    Retired,
}

impl StateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StateKind::Standby => "standby",
            StateKind::PendingActivation => "pending-activation",
            StateKind::Active => "active",
            StateKind::Degraded => "degraded",
            StateKind::Failed => "failed",
            StateKind::Retired => "retired",
        }
    }

    /// Failed and retired sources are never selected.
    pub fn is_available(self) -> bool {
        !matches!(self, StateKind::Failed | StateKind::Retired)
    }

    /// Whether `from -> to` is a legal transition. `from == None` is the
    /// initial registration.
    pub fn transition_allowed(from: Option<StateKind>, to: StateKind) -> bool {
        use StateKind::*;
        matches!(
            (from, to),
            (None, Active | Standby)
                | (Some(_), Retired)
                | (Some(Standby), PendingActivation | Active)
                | (Some(PendingActivation), Active)
                | (Some(Active), Degraded | Failed)
                | (Some(Degraded), Active | Failed)
                | (Some(Failed), Active)
        )
    }
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum SourceState {
    Standby,
    PendingActivation {
        #[serde(rename = "ready-at")]
        ready_at: Timestamp,
    },
    Active,
    Degraded,
    Failed,
    Retired,
}

impl SourceState {
    pub fn kind(self) -> StateKind {
        match self {
            SourceState::Standby => StateKind::Standby,
            SourceState::PendingActivation { .. } => StateKind::PendingActivation,
            SourceState::Active => StateKind::Active,
            SourceState::Degraded => StateKind::Degraded,
            SourceState::Failed => StateKind::Failed,
            SourceState::Retired => StateKind::Retired,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SourceStatus {
    pub source_id: SourceId,
    pub data_type: DataType,
    #[serde(flatten)]
    pub state: SourceState,
    pub last_seen: Option<Timestamp>,
    pub reason: String,
}

impl SourceStatus {
    pub fn kind(&self) -> StateKind {
        self.state.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StatusTransition {
    pub source_id: SourceId,
    pub data_type: DataType,
    /// `None` for the registration of a source.
    pub from: Option<StateKind>,
    pub to: StateKind,
    pub at: Timestamp,
    pub reason: String,
    /// Staleness horizon that triggered a failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_ms: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ready_at: Option<Timestamp>,
}

/// Measurement carried by an observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Measurement { value: f64, unit: String },
    Blob(Json),
}

impl Payload {
    pub fn value(&self) -> Option<f64> {
        match self {
            Payload::Measurement { value, .. } => Some(*value),
            Payload::Blob(_) => None,
        }
    }
}

/// One observation from a source. Arrival may precede the event time
/// (clock skew) or trail it by any amount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ObservationRecord {
    pub source_id: SourceId,
    pub event_time: Timestamp,
    pub arrival_time: Timestamp,
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
}

/// Value range and maximum rate of change for one data type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PlausibilityProfile {
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step_per_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "kebab-case")]
pub enum Verdict {
    Plausible,
    Implausible(String),
}

/// Check a record against a profile. `previous` is the last plausible
/// `(event_time, value)` of the same source, used for the step rule.
pub fn plausibility_check(
    record: &ObservationRecord,
    profile: &PlausibilityProfile,
    previous: Option<(Timestamp, f64)>,
) -> Verdict {
    let Some(value) = record.payload.value() else {
        return Verdict::Plausible;
    };
    if !value.is_finite() {
        return Verdict::Implausible("not a number".into());
    }
    if value < profile.min {
        return Verdict::Implausible("below range".into());
    }
    if value > profile.max {
        return Verdict::Implausible("above range".into());
    }
    if let (Some(max_step), Some((t_prev, v_prev))) = (profile.max_step_per_s, previous) {
        let dt = (record.event_time - t_prev).unsigned_abs() as f64 / 1000.0;
        if (value - v_prev).abs() > max_step * dt {
            return Verdict::Implausible("step".into());
        }
    }
    Verdict::Plausible
}

/// Per-source staleness parameters overriding [`MonitorConfig`] defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StalenessOverride {
    pub grace_multiplier: Option<f64>,
    pub margin_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct MonitorConfig {
    pub grace_multiplier: f64,
    pub margin_ms: i64,
    pub per_source: BTreeMap<SourceId, StalenessOverride>,
    pub plausibility: BTreeMap<DataType, PlausibilityProfile>,
    /// Initial state per source. Sources not listed start active when their
    /// activation delay is zero and on standby otherwise.
    pub initial_states: BTreeMap<SourceId, InitialState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    Active,
    Standby,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            grace_multiplier: 3.0,
            margin_ms: 1000,
            per_source: BTreeMap::new(),
            plausibility: BTreeMap::new(),
            initial_states: BTreeMap::new(),
        }
    }
}

impl MonitorConfig {
    /// Silence after which an active source is declared failed:
    /// `max(grace * period, delay + margin)`.
    pub fn staleness_horizon(&self, source: &SourceDescriptor) -> Duration {
        let o = self.per_source.get(&source.id).cloned().unwrap_or_default();
        let grace = o.grace_multiplier.unwrap_or(self.grace_multiplier).max(0.0);
        let margin = o.margin_ms.unwrap_or(self.margin_ms).max(0) as u64;
        let period = source.duration("frequency").unwrap_or_default();
        let delay = source.duration("delay").unwrap_or_default();
        period
            .mul_f64(grace)
            .max(delay + Duration::from_millis(margin))
    }
}

#[derive(Debug, Clone)]
struct Profile {
    horizon_ms: i64,
    activation_delay: Duration,
    previous: Option<(Timestamp, f64)>,
}

/// Source health tracker. One logical writer per data type.
#[derive(Debug, Clone)]
pub struct Monitor {
    config: MonitorConfig,
    statuses: BTreeMap<SourceId, SourceStatus>,
    profiles: BTreeMap<SourceId, Profile>,
    quarantined: u64,
    last_tick: Option<Timestamp>,
}

impl Monitor {
    /// Monitor for every source of `registry`, with the registration
    /// transitions of all sources at `start`.
    pub fn new(
        registry: &Registry,
        config: MonitorConfig,
        start: Timestamp,
    ) -> (Self, Vec<StatusTransition>) {
        let mut monitor = Self {
            config,
            statuses: BTreeMap::new(),
            profiles: BTreeMap::new(),
            quarantined: 0,
            last_tick: None,
        };
        let transitions = registry
            .sources()
            .iter()
            .map(|s| monitor.register(s, start).expect("registry ids are unique"))
            .collect();
        (monitor, transitions)
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    /// Start tracking a new source.
    pub fn register(
        &mut self,
        source: &SourceDescriptor,
        now: Timestamp,
    ) -> Result<StatusTransition, MonitorError> {
        if self.statuses.contains_key(&source.id) {
            return Err(MonitorError::AlreadyRegistered(source.id.clone()));
        }
        let activation_delay = source.duration("activation-delay").unwrap_or_default();
        let initial = self
            .config
            .initial_states
            .get(&source.id)
            .copied()
            .unwrap_or(if activation_delay.is_zero() {
                InitialState::Active
            } else {
                InitialState::Standby
            });
        let (state, last_seen) = match initial {
            InitialState::Active => (SourceState::Active, Some(now)),
            InitialState::Standby => (SourceState::Standby, None),
        };
        let horizon = self.config.staleness_horizon(source);
        self.profiles.insert(
            source.id.clone(),
            Profile {
                horizon_ms: i64::try_from(horizon.as_millis()).unwrap_or(i64::MAX),
                activation_delay,
                previous: None,
            },
        );
        self.statuses.insert(
            source.id.clone(),
            SourceStatus {
                source_id: source.id.clone(),
                data_type: source.data_type.clone(),
                state,
                last_seen,
                reason: "registered".into(),
            },
        );
        Ok(StatusTransition {
            source_id: source.id.clone(),
            data_type: source.data_type.clone(),
            from: None,
            to: state.kind(),
            at: now,
            reason: "registered".into(),
            horizon_ms: None,
            ready_at: None,
        })
    }

    pub fn statuses(&self) -> &BTreeMap<SourceId, SourceStatus> {
        &self.statuses
    }

    pub fn status(&self, source: &str) -> Option<&SourceStatus> {
        self.statuses.get(source)
    }

    /// Number of records rejected for naming an unknown source.
    pub fn quarantined(&self) -> u64 {
        self.quarantined
    }

    pub fn horizon(&self, source: &str) -> Option<Duration> {
        self.profiles
            .get(source)
            .map(|p| Duration::from_millis(p.horizon_ms as u64))
    }

    pub fn activation_delay(&self, source: &str) -> Option<Duration> {
        self.profiles.get(source).map(|p| p.activation_delay)
    }

    fn set_state(
        &mut self,
        source: &SourceId,
        to: SourceState,
        at: Timestamp,
        reason: String,
    ) -> StatusTransition {
        let status = self.statuses.get_mut(source).expect("known source");
        let from = status.kind();
        debug_assert!(
            StateKind::transition_allowed(Some(from), to.kind()),
            "{from} -> {}",
            to.kind()
        );
        status.state = to;
        status.reason = reason.clone();
        let ready_at = match to {
            SourceState::PendingActivation { ready_at } => Some(ready_at),
            _ => None,
        };
        StatusTransition {
            source_id: source.clone(),
            data_type: status.data_type.clone(),
            from: Some(from),
            to: to.kind(),
            at,
            reason,
            horizon_ms: None,
            ready_at,
        }
    }

    fn touch(&mut self, source: &SourceId, now: Timestamp) {
        let status = self.statuses.get_mut(source).expect("known source");
        status.last_seen = Some(status.last_seen.map_or(now, |t| t.max(now)));
    }

    /// Process one observation received at `now`.
    pub fn ingest(
        &mut self,
        record: &ObservationRecord,
        now: Timestamp,
    ) -> Result<Vec<StatusTransition>, MonitorError> {
        let Some(status) = self.statuses.get(&record.source_id) else {
            self.quarantined += 1;
            return Err(MonitorError::UnknownSource(record.source_id.clone()));
        };
        let kind = status.kind();
        let verdict = match self.config.plausibility.get(&status.data_type) {
            Some(profile) => {
                let previous = self.profiles[&record.source_id].previous;
                plausibility_check(record, profile, previous)
            }
            None => Verdict::Plausible,
        };
        if kind == StateKind::Retired {
            return Ok(Vec::new());
        }
        self.touch(&record.source_id, now);
        let id = &record.source_id;
        let mut out = Vec::new();
        match verdict {
            Verdict::Plausible => {
                if let Some(value) = record.payload.value() {
                    let profile = self.profiles.get_mut(id).expect("known source");
                    if profile.previous.is_none_or(|(t, _)| record.event_time >= t) {
                        profile.previous = Some((record.event_time, value));
                    }
                }
                let reason = match kind {
                    StateKind::Degraded => Some("plausible data"),
                    StateKind::Failed => Some("data resumed"),
                    StateKind::Standby | StateKind::PendingActivation => Some("data received"),
                    _ => None,
                };
                if let Some(reason) = reason {
                    out.push(self.set_state(id, SourceState::Active, now, reason.into()));
                }
            }
            Verdict::Implausible(why) => {
                if kind == StateKind::Active {
                    out.push(self.set_state(
                        id,
                        SourceState::Degraded,
                        now,
                        format!("implausible: {why}"),
                    ));
                }
            }
        }
        Ok(out)
    }

    /// Advance monitor time to `now`: fail stale sources and complete
    /// activations that are due. Calls with a time earlier than the previous
    /// tick are ignored.
    pub fn tick(&mut self, now: Timestamp) -> Vec<StatusTransition> {
        if self.last_tick.is_some_and(|t| now < t) {
            return Vec::new();
        }
        self.last_tick = Some(now);
        let mut due = Vec::new();
        for (id, status) in &self.statuses {
            match status.state {
                SourceState::Active | SourceState::Degraded => {
                    let horizon = self.profiles[id].horizon_ms;
                    let last = status.last_seen.unwrap_or(now);
                    if now - last > horizon {
                        due.push((id.clone(), SourceState::Failed, Some(horizon), now - last));
                    }
                }
                SourceState::PendingActivation { ready_at } if now >= ready_at => {
                    due.push((id.clone(), SourceState::Active, None, 0));
                }
                _ => {}
            }
        }
        let mut out = Vec::with_capacity(due.len());
        for (id, to, horizon, silence) in due {
            if let Some(h) = horizon {
                let mut t = self.set_state(
                    &id,
                    to,
                    now,
                    format!("no data for {silence}ms (horizon {h}ms)"),
                );
                t.horizon_ms = Some(h);
                out.push(t);
            } else {
                let ready_at = match self.statuses[&id].state {
                    SourceState::PendingActivation { ready_at } => ready_at,
                    _ => now,
                };
                let t = self.set_state(&id, to, now, "activation complete".into());
                let status = self.statuses.get_mut(&id).expect("known source");
                status.last_seen = Some(status.last_seen.map_or(ready_at, |t| t.max(ready_at)));
                out.push(t);
            }
        }
        out
    }

    /// Request a dormant source. It becomes pending until `now` plus its
    /// activation delay, or active at once when the delay is zero.
    pub fn request_activation(
        &mut self,
        source: &str,
        now: Timestamp,
    ) -> Result<StatusTransition, MonitorError> {
        let status = self
            .statuses
            .get(source)
            .ok_or_else(|| MonitorError::UnknownSource(SourceId::new(source)))?;
        if status.kind() != StateKind::Standby {
            return Err(MonitorError::NotActivatable {
                source_id: status.source_id.clone(),
                state: status.kind(),
            });
        }
        let id = status.source_id.clone();
        let delay = self.profiles[source].activation_delay;
        if delay.is_zero() {
            let t = self.set_state(&id, SourceState::Active, now, "activated".into());
            self.touch(&id, now);
            return Ok(t);
        }
        let ready_at = now + delay;
        Ok(self.set_state(
            &id,
            SourceState::PendingActivation { ready_at },
            now,
            "activation requested".into(),
        ))
    }

    /// Take a source out of service for good.
    pub fn retire(
        &mut self,
        source: &str,
        now: Timestamp,
        reason: &str,
    ) -> Result<Option<StatusTransition>, MonitorError> {
        let status = self
            .statuses
            .get(source)
            .ok_or_else(|| MonitorError::UnknownSource(SourceId::new(source)))?;
        if status.kind() == StateKind::Retired {
            return Ok(None);
        }
        let id = status.source_id.clone();
        Ok(Some(self.set_state(
            &id,
            SourceState::Retired,
            now,
            reason.into(),
        )))
    }

    /// Overwrite a status, used when rebuilding state from a stored log.
    pub fn restore(&mut self, status: SourceStatus) {
        if self.statuses.contains_key(&status.source_id) {
            self.statuses.insert(status.source_id.clone(), status);
        }
    }
}
