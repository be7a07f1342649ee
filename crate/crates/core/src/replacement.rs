//! Pre-crisis assessment and the in-crisis replacement mechanism.
//!
//! [`run_assessment`] prepares an [`AssessmentPack`] ahead of time. During a
//! crisis the [`ReplacementManager`] owns which source is in use for each data
//! type. When that source fails it filters the still-available sources,
//! ranks them against the standard source and switches to the best one, or
//! raises an alarm when nothing is left.

use crate::ids::{DataType, SourceId};
use crate::monitor::{SourceState, SourceStatus, StateKind};
use crate::similarity::{
    build_assessment_matrix, rank_candidates, AssessmentMatrix, RankingEntry, SimilarityError,
};
use crate::taxonomy::{RawSource, Registry, RegistryError, Weights};
use crate::time::Timestamp;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplacementError {
    #[error("data type {0:?} has sources but none is marked standard")]
    MissingStandard(DataType),
    #[error("unknown source {0:?}")]
    UnknownSource(SourceId),
    #[error("source {source_id} not available ({state})")]
    NotAvailable {
        source_id: SourceId,
        state: StateKind,
    },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// What the manager did about an assessment outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    /// A suitable source is already in use.
    NoActionRedundancy,
    /// Switch to an available similar source.
    ActivateFallback,
    /// A new source was assessed and integrated.
    IntegrateNew,
    /// Nothing suitable is available; operators must act.
    Alarm,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::NoActionRedundancy => "no-action-redundancy",
            Action::ActivateFallback => "activate-fallback",
            Action::IntegrateNew => "integrate-new",
            Action::Alarm => "alarm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReplacementDecision {
    pub data_type: DataType,
    pub failed_source: Option<SourceId>,
    pub ranking: Vec<RankingEntry>,
    /// Absent exactly when `action` is `Alarm`.
    pub chosen: Option<SourceId>,
    pub action: Action,
    pub decided_at: Timestamp,
    /// When the chosen source delivers data; later than `decided_at` while
    /// it is still activating.
    pub effective_at: Option<Timestamp>,
    /// Source in use before this decision.
    pub previous: Option<SourceId>,
    pub rationale: String,
}

impl ReplacementDecision {
    /// Whether the designation changed.
    pub fn is_switch(&self) -> bool {
        self.action != Action::IntegrateNew && self.chosen != self.previous
    }
}

/// Everything prepared before a crisis: the matrix and the baseline source
/// of each data type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AssessmentPack {
    pub matrix: AssessmentMatrix,
    pub standard_source: BTreeMap<DataType, SourceId>,
    pub activation_delays: BTreeMap<SourceId, Duration>,
    pub prepared_at: Timestamp,
}

impl AssessmentPack {
    pub fn standard(&self, data_type: &DataType) -> Option<&SourceId> {
        self.standard_source.get(data_type)
    }

    /// Same matrix contents, standard sources and activation delays.
    pub fn same_contents(&self, other: &AssessmentPack) -> bool {
        self.matrix.same_contents(&other.matrix)
            && self.standard_source == other.standard_source
            && self.activation_delays == other.activation_delays
    }

    /// A copy with the matrix re-weighted.
    pub fn reweigh(&self, update: &Weights) -> Result<AssessmentPack, SimilarityError> {
        Ok(AssessmentPack {
            matrix: self.matrix.reweigh(update)?,
            ..self.clone()
        })
    }
}

/// Build the matrix and resolve the standard source of every data type.
pub fn run_assessment(
    registry: &Registry,
    at: Timestamp,
) -> Result<AssessmentPack, ReplacementError> {
    let mut standard_source = BTreeMap::new();
    for data_type in registry.data_types() {
        let standard = registry
            .standard_source(&data_type)
            .ok_or_else(|| ReplacementError::MissingStandard(data_type.clone()))?;
        standard_source.insert(data_type, standard.id.clone());
    }
    Ok(AssessmentPack {
        matrix: build_assessment_matrix(registry, at),
        standard_source,
        activation_delays: activation_delays(registry),
        prepared_at: at,
    })
}

fn activation_delays(registry: &Registry) -> BTreeMap<SourceId, Duration> {
    registry
        .sources()
        .iter()
        .map(|s| {
            (
                s.id.clone(),
                s.duration("activation-delay").unwrap_or_default(),
            )
        })
        .collect()
}

/// The source in use for one data type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Designation {
    pub source: SourceId,
    pub since: Timestamp,
    /// Set while the source is still activating.
    pub pending_until: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct ReplacementConfig {
    /// Margin by which a challenger's rank score must exceed the incumbent's
    /// before review switches. The standard source is exempt.
    pub hysteresis: f64,
}

impl Default for ReplacementConfig {
    fn default() -> Self {
        Self { hysteresis: 0.0 }
    }
}

type Statuses = BTreeMap<SourceId, SourceStatus>;

fn state_of(statuses: &Statuses, id: &SourceId) -> Option<StateKind> {
    statuses.get(id).map(SourceStatus::kind)
}

/// Owns the active-source designation of every data type.
#[derive(Debug, Clone, Default)]
pub struct ReplacementManager {
    config: ReplacementConfig,
    designations: BTreeMap<DataType, Designation>,
}

impl ReplacementManager {
    pub fn new(config: ReplacementConfig) -> Self {
        Self {
            config,
            designations: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &ReplacementConfig {
        &self.config
    }

    pub fn designations(&self) -> &BTreeMap<DataType, Designation> {
        &self.designations
    }

    pub fn designation(&self, data_type: &DataType) -> Option<&Designation> {
        self.designations.get(data_type)
    }

    /// Data types whose sources are all unavailable.
    pub fn alarms<'a>(&'a self, pack: &'a AssessmentPack) -> impl Iterator<Item = &'a DataType> {
        pack.standard_source
            .keys()
            .filter(|dt| !self.designations.contains_key(*dt))
    }

    /// Designate the standard source of each data type, when available.
    pub fn initialize(&mut self, pack: &AssessmentPack, statuses: &Statuses, now: Timestamp) {
        for (data_type, standard) in &pack.standard_source {
            if state_of(statuses, standard).is_some_and(StateKind::is_available) {
                self.designations.insert(
                    data_type.clone(),
                    Designation {
                        source: standard.clone(),
                        since: now,
                        pending_until: pending_until(statuses, standard),
                    },
                );
            }
        }
    }

    /// Replace the data type's designation wholesale; used when rebuilding
    /// state from a decision log.
    pub fn restore(&mut self, data_type: DataType, designation: Option<Designation>) {
        match designation {
            Some(d) => self.designations.insert(data_type, d),
            None => self.designations.remove(&data_type),
        };
    }

    /// Clear the pending marker once the designated source is active.
    pub fn activation_completed(&mut self, source: &SourceId) {
        for d in self.designations.values_mut() {
            if &d.source == source {
                d.pending_until = None;
            }
        }
    }

    /// Handle the loss of `failed` for `data_type`.
    pub fn on_source_failure(
        &mut self,
        data_type: &DataType,
        failed: &SourceId,
        statuses: &Statuses,
        pack: &AssessmentPack,
        now: Timestamp,
    ) -> Result<ReplacementDecision, ReplacementError> {
        let current = self.designations.get(data_type).map(|d| d.source.clone());
        if current.as_ref() != Some(failed) {
            return Ok(ReplacementDecision {
                data_type: data_type.clone(),
                failed_source: Some(failed.clone()),
                ranking: Vec::new(),
                chosen: current.clone(),
                action: if current.is_some() {
                    Action::NoActionRedundancy
                } else {
                    Action::Alarm
                },
                decided_at: now,
                effective_at: current.as_ref().map(|_| now),
                previous: current,
                rationale: "already switched".into(),
            });
        }
        self.select(
            data_type,
            Some(failed),
            statuses,
            pack,
            now,
            "replacing failed source",
        )
    }

    /// Rank the available sources of `data_type` and designate the best one,
    /// or raise an alarm.
    fn select(
        &mut self,
        data_type: &DataType,
        exclude: Option<&SourceId>,
        statuses: &Statuses,
        pack: &AssessmentPack,
        now: Timestamp,
        context: &str,
    ) -> Result<ReplacementDecision, ReplacementError> {
        let previous = self.designations.get(data_type).map(|d| d.source.clone());
        let standard = pack
            .standard(data_type)
            .ok_or_else(|| ReplacementError::MissingStandard(data_type.clone()))?;
        let available: Vec<SourceId> = pack
            .matrix
            .sources_of(data_type)
            .filter(|id| Some(*id) != exclude)
            .filter(|id| state_of(statuses, id).is_some_and(StateKind::is_available))
            .cloned()
            .collect();
        let others: Vec<SourceId> = available
            .iter()
            .filter(|id| *id != standard)
            .cloned()
            .collect();
        let ranking = rank_candidates(&pack.matrix, standard.as_str(), &others)?;

        let (chosen, why) = if available.contains(standard) {
            (
                Some(standard.clone()),
                format!("{context}: standard source {standard} available"),
            )
        } else if let Some(best) = ranking.first() {
            (
                Some(best.candidate.clone()),
                format!(
                    "{context}: {} ranks first against {standard} (features {}, vulnerability {}, score {})",
                    best.candidate,
                    best.feature_similarity,
                    best.vulnerability_similarity,
                    best.rank_score
                ),
            )
        } else {
            (None, format!("{context}: no similar data source available"))
        };

        let Some(chosen) = chosen else {
            self.designations.remove(data_type);
            return Ok(ReplacementDecision {
                data_type: data_type.clone(),
                failed_source: exclude.cloned(),
                ranking,
                chosen: None,
                action: Action::Alarm,
                decided_at: now,
                effective_at: None,
                previous,
                rationale: why,
            });
        };
        Ok(self.designate(
            data_type, chosen, exclude, ranking, statuses, pack, now, previous, why,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn designate(
        &mut self,
        data_type: &DataType,
        chosen: SourceId,
        failed: Option<&SourceId>,
        ranking: Vec<RankingEntry>,
        statuses: &Statuses,
        pack: &AssessmentPack,
        now: Timestamp,
        previous: Option<SourceId>,
        mut rationale: String,
    ) -> ReplacementDecision {
        let effective_at = match statuses.get(&chosen).map(|s| s.state) {
            Some(SourceState::PendingActivation { ready_at }) => ready_at,
            Some(SourceState::Standby) => {
                now + pack
                    .activation_delays
                    .get(&chosen)
                    .copied()
                    .unwrap_or_default()
            }
            _ => now,
        };
        if state_of(statuses, &chosen) == Some(StateKind::Degraded) {
            rationale.push_str(&format!("; {chosen} is degraded"));
        }
        self.designations.insert(
            data_type.clone(),
            Designation {
                source: chosen.clone(),
                since: now,
                pending_until: (effective_at > now).then_some(effective_at),
            },
        );
        ReplacementDecision {
            data_type: data_type.clone(),
            failed_source: failed.cloned(),
            ranking,
            chosen: Some(chosen),
            action: Action::ActivateFallback,
            decided_at: now,
            effective_at: Some(effective_at),
            previous,
            rationale,
        }
    }

    /// Re-evaluate the designation of `data_type`: switch back to a recovered
    /// standard source, to a strictly better healthy candidate, or away from
    /// a failed incumbent. Resolves an alarm when a source is available again.
    pub fn review_active(
        &mut self,
        data_type: &DataType,
        statuses: &Statuses,
        pack: &AssessmentPack,
        now: Timestamp,
    ) -> Result<ReplacementDecision, ReplacementError> {
        let standard = pack
            .standard(data_type)
            .ok_or_else(|| ReplacementError::MissingStandard(data_type.clone()))?
            .clone();
        let Some(incumbent) = self.designations.get(data_type).map(|d| d.source.clone()) else {
            return self.select(data_type, None, statuses, pack, now, "alarm review");
        };
        if !state_of(statuses, &incumbent).is_some_and(StateKind::is_available) {
            return self.select(
                data_type,
                Some(&incumbent),
                statuses,
                pack,
                now,
                "replacing failed source",
            );
        }
        let keep = |ranking: Vec<RankingEntry>, rationale: String| ReplacementDecision {
            data_type: data_type.clone(),
            failed_source: None,
            ranking,
            chosen: Some(incumbent.clone()),
            action: Action::NoActionRedundancy,
            decided_at: now,
            effective_at: Some(now),
            previous: Some(incumbent.clone()),
            rationale,
        };
        if incumbent == standard {
            return Ok(keep(Vec::new(), "standard source in use".into()));
        }
        if state_of(statuses, &standard) == Some(StateKind::Active) {
            let why = format!("standard source {standard} recovered");
            return Ok(self.designate(
                data_type,
                standard,
                None,
                Vec::new(),
                statuses,
                pack,
                now,
                Some(incumbent),
                why,
            ));
        }
        let mut field: Vec<SourceId> = pack
            .matrix
            .sources_of(data_type)
            .filter(|id| **id != standard && **id != incumbent)
            .filter(|id| state_of(statuses, id) == Some(StateKind::Active))
            .cloned()
            .collect();
        field.push(incumbent.clone());
        let ranking = rank_candidates(&pack.matrix, standard.as_str(), &field)?;
        let inc = ranking
            .iter()
            .find(|e| e.candidate == incumbent)
            .expect("incumbent is ranked")
            .clone();
        let Some(best) = ranking.iter().find(|e| e.candidate != incumbent).cloned() else {
            return Ok(keep(ranking, "no healthier candidate".into()));
        };
        let lead = best.rank_score - inc.rank_score;
        let wins = if self.config.hysteresis > 0.0 {
            lead > self.config.hysteresis
        } else {
            best.ranking_cmp(&inc).is_lt()
        };
        if !wins {
            return Ok(keep(
                ranking,
                format!(
                    "no candidate ahead of {incumbent} by more than {}",
                    self.config.hysteresis
                ),
            ));
        }
        let why = format!(
            "{} outranks {incumbent} ({} vs {})",
            best.candidate, best.rank_score, inc.rank_score
        );
        Ok(self.designate(
            data_type,
            best.candidate.clone(),
            None,
            ranking,
            statuses,
            pack,
            now,
            Some(incumbent),
            why,
        ))
    }

    /// Operator override: designate `source` regardless of ranking.
    pub fn force_switch(
        &mut self,
        source: &SourceId,
        statuses: &Statuses,
        pack: &AssessmentPack,
        now: Timestamp,
    ) -> Result<ReplacementDecision, ReplacementError> {
        let status = statuses
            .get(source)
            .ok_or_else(|| ReplacementError::UnknownSource(source.clone()))?;
        if !status.kind().is_available() {
            return Err(ReplacementError::NotAvailable {
                source_id: source.clone(),
                state: status.kind(),
            });
        }
        let data_type = status.data_type.clone();
        let previous = self.designations.get(&data_type).map(|d| d.source.clone());
        Ok(self.designate(
            &data_type,
            source.clone(),
            None,
            Vec::new(),
            statuses,
            pack,
            now,
            previous,
            "operator override".into(),
        ))
    }

    /// Register a source that became available mid-crisis: validate it,
    /// extend the matrix with its pairs only, and record the integration.
    /// The caller then reviews the data type, which switches to the new
    /// source when the current one is failed or missing.
    pub fn on_source_available(
        &mut self,
        new_source: RawSource,
        pack: &AssessmentPack,
        registry: &Registry,
        now: Timestamp,
    ) -> Result<(Registry, AssessmentPack, ReplacementDecision), ReplacementError> {
        let next_registry = registry.with_source(new_source.clone())?;
        let desc = next_registry
            .source(new_source.id.as_str())
            .expect("just added");
        let mut next_pack = pack.clone();
        next_pack.matrix = pack.matrix.extend_with(&next_registry, desc.id.as_str())?;
        next_pack.activation_delays.insert(
            desc.id.clone(),
            desc.duration("activation-delay").unwrap_or_default(),
        );
        if desc.standard {
            next_pack
                .standard_source
                .insert(desc.data_type.clone(), desc.id.clone());
        }
        if !next_pack.standard_source.contains_key(&desc.data_type) {
            return Err(ReplacementError::MissingStandard(desc.data_type.clone()));
        }

        let current = self
            .designations
            .get(&desc.data_type)
            .map(|d| d.source.clone());
        let mut rationale = format!("integrated {} into {}", desc.id, desc.data_type);
        if let Some(active) = current
            .as_ref()
            .and_then(|id| next_registry.source(id.as_str()))
        {
            if active.values == desc.values {
                rationale.push_str(&format!("; redundant with active source {}", active.id));
            }
        }
        let standard = &next_pack.standard_source[&desc.data_type];
        let ranking = if standard != &desc.id {
            rank_candidates(
                &next_pack.matrix,
                standard.as_str(),
                std::slice::from_ref(&desc.id),
            )?
        } else {
            Vec::new()
        };
        let decision = ReplacementDecision {
            data_type: desc.data_type.clone(),
            failed_source: None,
            ranking,
            chosen: Some(desc.id.clone()),
            action: Action::IntegrateNew,
            decided_at: now,
            effective_at: None,
            previous: current,
            rationale,
        };
        Ok((next_registry, next_pack, decision))
    }
}

fn pending_until(statuses: &Statuses, id: &SourceId) -> Option<Timestamp> {
    match statuses.get(id).map(|s| s.state) {
        Some(SourceState::PendingActivation { ready_at }) => Some(ready_at),
        _ => None,
    }
}
