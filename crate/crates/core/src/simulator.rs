//! Deterministic discrete-event driver for crisis scripts.
//!
//! A script names a registry, payload generators, faults and operator
//! commands on a virtual millisecond timeline. [`run`] drives a [`System`]
//! through it and returns the trace of decisions and transitions;
//! [`assert_trace`] checks the script's expectations against that trace.

use crate::case_study;
use crate::ids::{DataType, SourceId};
use crate::monitor::{
    MonitorConfig, ObservationRecord, Payload, SourceStatus, StateKind, StatusTransition,
};
use crate::replacement::{Action, Designation, ReplacementConfig, ReplacementDecision};
use crate::store::ScenarioStore;
use crate::system::{OperatorCommand, System, SystemConfig, SystemError, SystemEvent};
use crate::taxonomy::{load_registry, parse_rate, Registry, RegistryDocument, RegistryError, Span};
use crate::time::Timestamp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid script: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("timeline not sorted: event {index} at {at_ms}ms precedes {previous_ms}ms")]
    Unsorted {
        index: usize,
        at_ms: i64,
        previous_ms: i64,
    },
    #[error("event {index} references unknown source {source_id:?}")]
    UnknownSource { index: usize, source_id: SourceId },
    #[error("event {index}: invalid rate {rate:?}: {reason}")]
    InvalidRate {
        index: usize,
        rate: String,
        reason: String,
    },
    #[error("invalid tick interval {0}ms")]
    InvalidTick(i64),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("at {at}: {source}")]
    System {
        at: Timestamp,
        #[source]
        source: SystemError,
    },
}

/// Generator for synthetic measurement values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "model",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case"
)]
pub enum PayloadModel {
    Constant {
        value: f64,
    },
    Ramp {
        start: f64,
        slope_per_s: f64,
    },
    NoisyRamp {
        start: f64,
        slope_per_s: f64,
        noise: f64,
    },
}

impl PayloadModel {
    /// Value at `elapsed_ms` after the generator started.
    pub fn sample(&self, elapsed_ms: i64, rng: &mut ChaCha8Rng) -> f64 {
        let secs = elapsed_ms as f64 / 1000.0;
        match *self {
            PayloadModel::Constant { value } => value,
            PayloadModel::Ramp { start, slope_per_s } => start + slope_per_s * secs,
            PayloadModel::NoisyRamp {
                start,
                slope_per_s,
                noise,
            } => {
                let jitter = if noise > 0.0 {
                    rng.random_range(-noise..=noise)
                } else {
                    0.0
                };
                start + slope_per_s * secs + jitter
            }
        }
    }
}

fn default_unit() -> String {
    "km/h".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "event",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case"
)]
pub enum ScriptEvent {
    /// Emit observations from `source` at `rate` while it is powered and
    /// has been activated.
    GenerateObservations {
        source: SourceId,
        rate: String,
        model: PayloadModel,
        #[serde(default = "default_unit")]
        unit: String,
    },
    /// The source stops delivering.
    FailSource {
        source: SourceId,
        #[serde(default)]
        reason: String,
    },
    /// The source delivers again.
    RecoverSource {
        source: SourceId,
    },
    /// Register a new source (shorthand for the operator command).
    RegisterSource {
        source: crate::taxonomy::RawSource,
    },
    /// One hand-made observation, arriving after `delay_ms`.
    InjectObservation {
        source: SourceId,
        value: f64,
        #[serde(default)]
        delay_ms: i64,
    },
    Operator {
        command: OperatorCommand,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TimedEvent {
    pub at_ms: i64,
    #[serde(flatten)]
    pub event: ScriptEvent,
}

/// A check on the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "expect",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case"
)]
pub enum Expectation {
    /// The next matching decision, in order.
    Decision {
        #[serde(default)]
        data_type: Option<DataType>,
        #[serde(default)]
        action: Option<Action>,
        #[serde(default)]
        chosen: Option<SourceId>,
        #[serde(default)]
        failed: Option<SourceId>,
        #[serde(default)]
        rationale_contains: Option<String>,
        /// Minimum gap between decision and effective time.
        #[serde(default)]
        min_activation_ms: Option<i64>,
        /// Maximum gap between decision and effective time.
        #[serde(default)]
        max_activation_ms: Option<i64>,
        #[serde(default)]
        after_ms: Option<i64>,
        #[serde(default)]
        before_ms: Option<i64>,
    },
    /// The next matching transition, in order.
    Transition {
        source: SourceId,
        to: StateKind,
        #[serde(default)]
        after_ms: Option<i64>,
        #[serde(default)]
        before_ms: Option<i64>,
    },
    /// State of a source at the end of the run.
    FinalState { source: SourceId, state: StateKind },
    /// Active source of a data type at the end; `null` means alarm.
    Designation {
        data_type: DataType,
        source: Option<SourceId>,
    },
    /// Exact number of decisions in the trace.
    DecisionCount { count: usize },
}

impl Expectation {
    fn ordered(&self) -> bool {
        matches!(
            self,
            Expectation::Decision { .. } | Expectation::Transition { .. }
        )
    }
}

fn within(at: Timestamp, after: Option<i64>, before: Option<i64>) -> bool {
    after.is_none_or(|a| at.as_millis() >= a) && before.is_none_or(|b| at.as_millis() <= b)
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let json = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&json)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulationScript {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    /// Virtual time at which the run stops.
    pub end_ms: i64,
    #[serde(default = "default_tick")]
    pub tick_ms: i64,
    /// Registry to run against; the case-study registry when absent.
    #[serde(default)]
    pub registry: Option<RegistryDocument>,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub replacement: ReplacementConfig,
    pub timeline: Vec<TimedEvent>,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
}

fn default_tick() -> i64 {
    1000
}

impl SimulationScript {
    pub fn from_json(text: &str) -> Result<Self, SimulationError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn registry(&self) -> Result<Registry, SimulationError> {
        Ok(match &self.registry {
            Some(doc) => Registry::from_document(doc.clone())?,
            None => load_registry(case_study::REGISTRY_JSON)?,
        })
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            monitor: self.monitor.clone(),
            replacement: self.replacement.clone(),
        }
    }

    /// Checks ordering, source references and rates.
    pub fn validate(&self, registry: &Registry) -> Result<(), SimulationError> {
        if self.tick_ms <= 0 {
            return Err(SimulationError::InvalidTick(self.tick_ms));
        }
        let mut known: BTreeSet<SourceId> =
            registry.sources().iter().map(|s| s.id.clone()).collect();
        let mut previous = i64::MIN;
        for (index, e) in self.timeline.iter().enumerate() {
            if e.at_ms < previous {
                return Err(SimulationError::Unsorted {
                    index,
                    at_ms: e.at_ms,
                    previous_ms: previous,
                });
            }
            previous = e.at_ms;
            let referenced = match &e.event {
                ScriptEvent::GenerateObservations { source, rate, .. } => {
                    match parse_rate(rate) {
                        Ok(Span::Finite(d)) if !d.is_zero() => {}
                        Ok(_) => {
                            return Err(SimulationError::InvalidRate {
                                index,
                                rate: rate.clone(),
                                reason: "rate must be positive".into(),
                            })
                        }
                        Err(reason) => {
                            return Err(SimulationError::InvalidRate {
                                index,
                                rate: rate.clone(),
                                reason,
                            })
                        }
                    }
                    Some(source)
                }
                ScriptEvent::FailSource { source, .. }
                | ScriptEvent::RecoverSource { source }
                | ScriptEvent::InjectObservation { source, .. } => Some(source),
                ScriptEvent::RegisterSource { source }
                | ScriptEvent::Operator {
                    command: OperatorCommand::RegisterSource { source },
                } => {
                    known.insert(source.id.clone());
                    None
                }
                ScriptEvent::Operator {
                    command:
                        OperatorCommand::PreActivate { source }
                        | OperatorCommand::ForceSwitch { source },
                } => Some(source),
                ScriptEvent::Operator { .. } => None,
            };
            if let Some(source) = referenced {
                if !known.contains(source) {
                    return Err(SimulationError::UnknownSource {
                        index,
                        source_id: source.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// One entry of the chronological trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceItem {
    Decision(ReplacementDecision),
    Transition(StatusTransition),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulationTrace {
    pub script: String,
    pub seed: u64,
    pub decisions: Vec<ReplacementDecision>,
    pub transitions: Vec<StatusTransition>,
    /// Decisions and transitions interleaved in the order they happened.
    pub timeline: Vec<TraceItem>,
    pub final_statuses: BTreeMap<SourceId, SourceStatus>,
    pub final_designations: BTreeMap<DataType, Designation>,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Step {
    Script(usize),
    Emit(SourceId),
    Arrival(usize),
    Tick,
}

struct Generator {
    period_ms: i64,
    model: PayloadModel,
    unit: String,
    started: Timestamp,
}

/// Run `script` with an in-memory store.
pub fn run(script: &SimulationScript) -> Result<SimulationTrace, SimulationError> {
    run_with_seed(script, script.seed)
}

/// Run `script` with a different seed.
pub fn run_with_seed(
    script: &SimulationScript,
    seed: u64,
) -> Result<SimulationTrace, SimulationError> {
    run_with_store(script, seed, ScenarioStore::in_memory()).map(|(trace, _)| trace)
}

/// Run `script` against `store` and hand back the system for inspection.
pub fn run_with_store(
    script: &SimulationScript,
    seed: u64,
    store: ScenarioStore,
) -> Result<(SimulationTrace, System), SimulationError> {
    let registry = script.registry()?;
    script.validate(&registry)?;
    let start = Timestamp(0);
    let mut system = System::new(registry, script.system_config(), store, start)
        .map_err(|source| SimulationError::System { at: start, source })?;
    let mut trace = SimulationTrace {
        script: script.name.clone(),
        seed,
        decisions: Vec::new(),
        transitions: Vec::new(),
        timeline: Vec::new(),
        final_statuses: BTreeMap::new(),
        final_designations: BTreeMap::new(),
        observations: 0,
    };
    collect(&mut system, &mut trace);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queue: BinaryHeap<Reverse<(i64, u64, Step)>> = BinaryHeap::new();
    let mut order = 0u64;
    let mut push = |queue: &mut BinaryHeap<_>, at: i64, step: Step| {
        queue.push(Reverse((at, order, step)));
        order += 1;
    };
    for (i, e) in script.timeline.iter().enumerate() {
        push(&mut queue, e.at_ms, Step::Script(i));
    }
    push(&mut queue, script.tick_ms, Step::Tick);

    let mut generators: BTreeMap<SourceId, Generator> = BTreeMap::new();
    let mut down: BTreeSet<SourceId> = BTreeSet::new();
    let mut in_flight: Vec<Option<ObservationRecord>> = Vec::new();

    while let Some(Reverse((at, _, step))) = queue.pop() {
        if at > script.end_ms {
            break;
        }
        let now = Timestamp(at);
        let fail = |source| SimulationError::System { at: now, source };
        match step {
            Step::Script(i) => match &script.timeline[i].event {
                ScriptEvent::GenerateObservations {
                    source,
                    rate,
                    model,
                    unit,
                } => {
                    let period = match parse_rate(rate) {
                        Ok(Span::Finite(d)) => d.as_millis().max(1) as i64,
                        _ => unreachable!("validated"),
                    };
                    let fresh = generators
                        .insert(
                            source.clone(),
                            Generator {
                                period_ms: period,
                                model: model.clone(),
                                unit: unit.clone(),
                                started: now,
                            },
                        )
                        .is_none();
                    if fresh {
                        push(&mut queue, at, Step::Emit(source.clone()));
                    }
                }
                ScriptEvent::FailSource { source, .. } => {
                    down.insert(source.clone());
                }
                ScriptEvent::RecoverSource { source } => {
                    down.remove(source);
                }
                ScriptEvent::RegisterSource { source } => {
                    system
                        .command(
                            OperatorCommand::RegisterSource {
                                source: source.clone(),
                            },
                            now,
                        )
                        .map_err(fail)?;
                }
                ScriptEvent::InjectObservation {
                    source,
                    value,
                    delay_ms,
                } => {
                    let record = ObservationRecord {
                        source_id: source.clone(),
                        event_time: now,
                        arrival_time: Timestamp(at + delay_ms),
                        payload: Payload::Measurement {
                            value: *value,
                            unit: default_unit(),
                        },
                        quality: None,
                    };
                    in_flight.push(Some(record));
                    push(
                        &mut queue,
                        at + delay_ms,
                        Step::Arrival(in_flight.len() - 1),
                    );
                }
                ScriptEvent::Operator { command } => {
                    system.command(command.clone(), now).map_err(fail)?;
                }
            },
            Step::Emit(source) => {
                let Some(generator) = generators.get(&source) else {
                    continue;
                };
                let powered = !down.contains(&source)
                    && system.statuses().get(&source).is_some_and(|s| {
                        matches!(
                            s.kind(),
                            StateKind::Active | StateKind::Degraded | StateKind::Failed
                        )
                    });
                if powered {
                    let delay = system
                        .registry()
                        .source(source.as_str())
                        .and_then(|s| s.duration("delay"))
                        .unwrap_or_default()
                        .as_millis() as i64;
                    let value = generator.model.sample(now - generator.started, &mut rng);
                    in_flight.push(Some(ObservationRecord {
                        source_id: source.clone(),
                        event_time: now,
                        arrival_time: Timestamp(at + delay),
                        payload: Payload::Measurement {
                            value,
                            unit: generator.unit.clone(),
                        },
                        quality: None,
                    }));
                    push(&mut queue, at + delay, Step::Arrival(in_flight.len() - 1));
                }
                let next = at + generator.period_ms;
                push(&mut queue, next, Step::Emit(source));
            }
            Step::Arrival(i) => {
                let record = in_flight[i].take().expect("each record arrives once");
                system.ingest(record, now).map_err(fail)?;
                trace.observations += 1;
            }
            Step::Tick => {
                system.tick(now).map_err(fail)?;
                push(&mut queue, at + script.tick_ms, Step::Tick);
            }
        }
        collect(&mut system, &mut trace);
    }
    trace.final_statuses = system.statuses().clone();
    trace.final_designations = system.designations().clone();
    Ok((trace, system))
}

fn collect(system: &mut System, trace: &mut SimulationTrace) {
    for event in system.drain_events() {
        match event {
            SystemEvent::Transition(t) => {
                trace.transitions.push(t.clone());
                trace.timeline.push(TraceItem::Transition(t));
            }
            SystemEvent::Decision { decision, .. } => {
                trace.decisions.push(decision.clone());
                trace.timeline.push(TraceItem::Decision(decision));
            }
            SystemEvent::MatrixUpdated { .. } | SystemEvent::Alarm { .. } => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExpectationResult {
    pub index: usize,
    pub expectation: Expectation,
    pub passed: bool,
    /// The matched trace element or why nothing matched.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AssertionReport {
    pub results: Vec<ExpectationResult>,
}

impl AssertionReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let mark = if r.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "{mark} #{} {}\n     {}\n",
                r.index, r.expectation, r.detail
            ));
        }
        out
    }
}

fn describe_decision(d: &ReplacementDecision) -> String {
    format!(
        "decision at {}: {} {} -> {} (effective {})",
        d.decided_at,
        d.action.as_str(),
        d.failed_source.as_ref().map_or("-", SourceId::as_str),
        d.chosen.as_ref().map_or("none", SourceId::as_str),
        d.effective_at.map_or("-".to_string(), |t| t.to_string())
    )
}

fn describe_transition(t: &StatusTransition) -> String {
    format!(
        "transition at {}: {} {} -> {}",
        t.at,
        t.source_id,
        t.from.map_or("none", StateKind::as_str),
        t.to
    )
}

fn decision_matches(e: &Expectation, d: &ReplacementDecision) -> bool {
    let Expectation::Decision {
        data_type,
        action,
        chosen,
        failed,
        rationale_contains,
        min_activation_ms,
        max_activation_ms,
        after_ms,
        before_ms,
    } = e
    else {
        return false;
    };
    let gap = d.effective_at.map(|t| t - d.decided_at);
    data_type.as_ref().is_none_or(|x| *x == d.data_type)
        && action.is_none_or(|x| x == d.action)
        && chosen.as_ref().is_none_or(|x| Some(x) == d.chosen.as_ref())
        && failed
            .as_ref()
            .is_none_or(|x| Some(x) == d.failed_source.as_ref())
        && rationale_contains
            .as_ref()
            .is_none_or(|x| d.rationale.contains(x.as_str()))
        && min_activation_ms.is_none_or(|m| gap.is_some_and(|g| g >= m))
        && max_activation_ms.is_none_or(|m| gap.is_some_and(|g| g <= m))
        && within(d.decided_at, *after_ms, *before_ms)
}

/// Match `expectations` against `trace`. Decision and transition
/// expectations must match trace elements in order; final-state checks
/// look at the end state only.
pub fn assert_trace(trace: &SimulationTrace, expectations: &[Expectation]) -> AssertionReport {
    let mut cursor = 0;
    let mut results = Vec::with_capacity(expectations.len());
    for (index, e) in expectations.iter().enumerate() {
        let (passed, detail) = if e.ordered() {
            let found = trace.timeline[cursor..]
                .iter()
                .position(|item| match (e, item) {
                    (Expectation::Decision { .. }, TraceItem::Decision(d)) => {
                        decision_matches(e, d)
                    }
                    (
                        Expectation::Transition {
                            source,
                            to,
                            after_ms,
                            before_ms,
                        },
                        TraceItem::Transition(t),
                    ) => {
                        &t.source_id == source && t.to == *to && within(t.at, *after_ms, *before_ms)
                    }
                    _ => false,
                });
            match found {
                Some(offset) => {
                    let item = &trace.timeline[cursor + offset];
                    cursor += offset + 1;
                    let detail = match item {
                        TraceItem::Decision(d) => describe_decision(d),
                        TraceItem::Transition(t) => describe_transition(t),
                    };
                    (true, detail)
                }
                None => {
                    let what = match e {
                        Expectation::Decision { .. } => "decision",
                        _ => "transition",
                    };
                    let already = trace
                        .timeline
                        .iter()
                        .take(cursor)
                        .any(|item| match (e, item) {
                            (Expectation::Decision { .. }, TraceItem::Decision(d)) => {
                                decision_matches(e, d)
                            }
                            _ => false,
                        });
                    let detail = if already {
                        format!("no matching {what} after position {cursor} (out of order)")
                    } else {
                        format!("no matching {what}")
                    };
                    (false, detail)
                }
            }
        } else {
            match e {
                Expectation::FinalState { source, state } => match trace.final_statuses.get(source)
                {
                    Some(s) if s.kind() == *state => (true, format!("{source} is {state}")),
                    Some(s) => (false, format!("{source} is {}", s.kind())),
                    None => (false, format!("{source} unknown")),
                },
                Expectation::Designation { data_type, source } => {
                    let actual = trace.final_designations.get(data_type).map(|d| &d.source);
                    let shown = actual.map_or("none", SourceId::as_str);
                    (
                        actual == source.as_ref(),
                        format!("{data_type} uses {shown}"),
                    )
                }
                Expectation::DecisionCount { count } => (
                    trace.decisions.len() == *count,
                    format!("{} decisions", trace.decisions.len()),
                ),
                _ => unreachable!("ordered expectations handled above"),
            }
        };
        results.push(ExpectationResult {
            index,
            expectation: e.clone(),
            passed,
            detail,
        });
    }
    AssertionReport { results }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_shipped_scripts_pass() {
        for (name, text) in case_study::scripts() {
            let script = case_study::script(text);
            let trace = run(&script).unwrap();
            let report = assert_trace(&trace, &script.expectations);
            assert!(report.passed(), "{name}\n{}", report.render());
            assert!(!script.expectations.is_empty(), "{name}");
        }
    }

    #[test]
    fn test_flood_decision_sequence() {
        let trace = run(&case_study::script(case_study::FLOOD_SCRIPT)).unwrap();
        let switches: Vec<_> = trace
            .decisions
            .iter()
            .map(|d| (d.action, d.chosen.as_ref().map(|c| c.to_string())))
            .collect();
        assert_eq!(
            switches,
            [
                (Action::ActivateFallback, Some("floating-car-data".into())),
                (Action::ActivateFallback, Some("remote-sensing".into())),
            ]
        );
        let rs = &trace.decisions[1];
        assert_eq!(rs.effective_at.unwrap() - rs.decided_at, 20 * 60 * 1000);
        let active = trace
            .transitions
            .iter()
            .find(|t| t.source_id == "remote-sensing" && t.to == StateKind::Active)
            .unwrap();
        assert_eq!(active.at, rs.effective_at.unwrap());
    }

    #[test]
    fn test_extended_flood_ends_in_alarm() {
        let trace = run(&case_study::script(case_study::FLOOD_EXTENDED_SCRIPT)).unwrap();
        assert_eq!(trace.decisions.last().unwrap().action, Action::Alarm);
        assert!(trace.final_designations.is_empty());
    }

    #[test]
    fn test_runs_are_bit_identical() {
        let script = case_study::script(case_study::FAULT_INJECTION_SCRIPT);
        let a = serde_json::to_string(&run(&script).unwrap()).unwrap();
        let b = serde_json::to_string(&run(&script).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn test_no_faults_no_decisions() {
        let mut script = case_study::script(case_study::FLOOD_SCRIPT);
        script
            .timeline
            .retain(|e| matches!(e.event, ScriptEvent::GenerateObservations { .. }));
        let trace = run(&script).unwrap();
        assert!(trace.decisions.is_empty());
    }

    #[test]
    fn test_empty_trace_reports_no_matching_decision() {
        let trace = SimulationTrace {
            script: "empty".into(),
            seed: 0,
            decisions: vec![],
            transitions: vec![],
            timeline: vec![],
            final_statuses: BTreeMap::new(),
            final_designations: BTreeMap::new(),
            observations: 0,
        };
        let e = Expectation::Decision {
            data_type: None,
            action: None,
            chosen: Some("remote-sensing".into()),
            failed: None,
            rationale_contains: None,
            min_activation_ms: None,
            max_activation_ms: None,
            after_ms: None,
            before_ms: None,
        };
        let report = assert_trace(&trace, &[e]);
        assert!(!report.passed());
        assert_eq!(report.results[0].detail, "no matching decision");
    }

    #[test]
    fn test_reordered_expectations_fail() {
        let script = case_study::script(case_study::FLOOD_SCRIPT);
        let trace = run(&script).unwrap();
        let pick = |chosen: &str| Expectation::Decision {
            data_type: None,
            action: None,
            chosen: Some(chosen.into()),
            failed: None,
            rationale_contains: None,
            min_activation_ms: None,
            max_activation_ms: None,
            after_ms: None,
            before_ms: None,
        };
        let ok = assert_trace(&trace, &[pick("floating-car-data"), pick("remote-sensing")]);
        assert!(ok.passed());
        let bad = assert_trace(&trace, &[pick("remote-sensing"), pick("floating-car-data")]);
        assert!(bad.results[0].passed);
        assert!(!bad.results[1].passed);
        assert!(bad.results[1].detail.contains("out of order"));
    }

    #[test]
    fn test_unknown_source_rejected() {
        let mut script = case_study::script(case_study::FLOOD_SCRIPT);
        script.timeline.push(TimedEvent {
            at_ms: script.end_ms,
            event: ScriptEvent::FailSource {
                source: "ghost".into(),
                reason: String::new(),
            },
        });
        assert!(matches!(
            run(&script),
            Err(SimulationError::UnknownSource { .. })
        ));
        let mut script = case_study::script(case_study::FLOOD_SCRIPT);
        script.timeline.reverse();
        assert!(matches!(
            run(&script),
            Err(SimulationError::Unsorted { .. })
        ));
    }
}
