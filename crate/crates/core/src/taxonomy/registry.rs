//! Source registry: schema, weights, source descriptors and manual overrides,
//! loaded from and written to a JSON document.
//!
//! ```json
//! {
//!   "schema":    [ { "id": "delay", "category": "data-features", ... } ],
//!   "weights":   { "delay": 1.0, ... },
//!   "sources":   [ { "id": "traffic-sensors", "data-type": "traffic",
//!                    "standard": true, "attributes": { "delay": "1s", ... } } ],
//!   "overrides": [ { "source-a": "a", "source-b": "b",
//!                    "attribute-id": "delay", "score": 0 } ]
//! }
//! ```
//!
//! `schema` defaults to [`AttributeSchema::default_taxonomy`], missing weights
//! default to 1.0, and `overrides` defaults to empty.

use super::comparator::Score;
use super::schema::AttributeSchema;
use super::value::{AttributeValue, ValueKind};
use crate::ids::{AttributeId, DataType, SourceId};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("malformed registry document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("source {source_id}: unknown attribute {attribute:?}")]
    UnknownAttribute {
        source_id: SourceId,
        attribute: String,
    },
    #[error("source {source_id}: missing value for attribute {attribute:?}")]
    MissingValue {
        source_id: SourceId,
        attribute: AttributeId,
    },
    #[error("source {source_id}: invalid value for attribute {attribute:?}: {reason}")]
    InvalidValue {
        source_id: SourceId,
        attribute: AttributeId,
        reason: String,
    },
    #[error("duplicate source id {0:?}")]
    DuplicateSource(SourceId),
    #[error("data type {data_type:?} has two standard sources: {first} and {second}")]
    MultipleStandard {
        data_type: DataType,
        first: SourceId,
        second: SourceId,
    },
    #[error("weight for {attribute:?} must be a non-negative number, got {value}")]
    InvalidWeight { attribute: String, value: f64 },
    #[error("weight given for unknown attribute {0:?}")]
    UnknownWeight(String),
    #[error("invalid override: {0}")]
    InvalidOverride(String),
}

/// One data source and its attribute values.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDescriptor {
    pub id: SourceId,
    pub display_name: String,
    pub data_type: DataType,
    /// Marks the baseline source of its data type.
    pub standard: bool,
    pub values: BTreeMap<AttributeId, AttributeValue>,
}

impl SourceDescriptor {
    pub fn value(&self, attribute: &str) -> Option<&AttributeValue> {
        self.values.get(attribute)
    }

    /// Duration attribute as a finite duration (`unlimited` maps to `None`).
    pub fn duration(&self, attribute: &str) -> Option<std::time::Duration> {
        match self.values.get(attribute)? {
            AttributeValue::Duration(s) | AttributeValue::Rate(s) => s.finite(),
            _ => None,
        }
    }

    /// Parse and validate a raw descriptor against `schema`.
    pub fn from_raw(raw: RawSource, schema: &AttributeSchema) -> Result<Self, RegistryError> {
        let id = raw.id;
        if let Some(unknown) = raw.attributes.keys().find(|k| schema.get(k).is_none()) {
            return Err(RegistryError::UnknownAttribute {
                source_id: id,
                attribute: unknown.clone(),
            });
        }
        let mut values = BTreeMap::new();
        for def in schema.iter() {
            let Some(json) = raw.attributes.get(def.id.as_str()) else {
                return Err(RegistryError::MissingValue {
                    source_id: id,
                    attribute: def.id.clone(),
                });
            };
            let value = AttributeValue::parse(def.value_kind, json).map_err(|reason| {
                RegistryError::InvalidValue {
                    source_id: id.clone(),
                    attribute: def.id.clone(),
                    reason,
                }
            })?;
            if def.value_kind == ValueKind::Categorical && !def.classes.is_empty() {
                let label = value.label().unwrap_or_default();
                if !def.classes.iter().any(|c| c == label) {
                    return Err(RegistryError::InvalidValue {
                        source_id: id,
                        attribute: def.id.clone(),
                        reason: format!("{label:?} is not one of {:?}", def.classes),
                    });
                }
            }
            values.insert(def.id.clone(), value);
        }
        Ok(Self {
            display_name: if raw.display_name.is_empty() {
                id.to_string()
            } else {
                raw.display_name
            },
            id,
            data_type: raw.data_type,
            standard: raw.standard,
            values,
        })
    }

    pub fn to_raw(&self) -> RawSource {
        RawSource {
            id: self.id.clone(),
            display_name: self.display_name.clone(),
            data_type: self.data_type.clone(),
            standard: self.standard,
            attributes: self
                .values
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_json()))
                .collect(),
        }
    }
}

/// Wire form of a source descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RawSource {
    pub id: SourceId,
    #[serde(default)]
    pub display_name: String,
    pub data_type: DataType,
    #[serde(default)]
    pub standard: bool,
    pub attributes: BTreeMap<String, Json>,
}

/// A manual score for one attribute of one source pair. Takes precedence
/// over the attribute's comparator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Override {
    pub source_a: SourceId,
    pub source_b: SourceId,
    pub attribute_id: AttributeId,
    pub score: Score,
}

impl Override {
    fn matches(&self, a: &str, b: &str, attribute: &str) -> bool {
        self.attribute_id == attribute
            && ((self.source_a == a && self.source_b == b)
                || (self.source_a == b && self.source_b == a))
    }
}

/// Per-attribute weighting factors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(BTreeMap<AttributeId, f64>);

impl Weights {
    /// Weight 1.0 for every attribute of `schema`.
    pub fn unit(schema: &AttributeSchema) -> Self {
        Self(schema.iter().map(|d| (d.id.clone(), 1.0)).collect())
    }

    pub fn get(&self, attribute: &str) -> f64 {
        self.0.get(attribute).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, attribute: impl Into<AttributeId>, weight: f64) {
        self.0.insert(attribute.into(), weight);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AttributeId, f64)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    /// Every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .collect(),
        )
    }

    /// `self` with the entries of `update` replacing existing ones.
    pub fn merged(&self, update: &Weights) -> Self {
        let mut out = self.clone();
        for (k, v) in update.iter() {
            out.0.insert(k.clone(), v);
        }
        out
    }

    /// Checks every key names a schema attribute and every value is a finite
    /// non-negative number.
    pub fn check_known(&self, schema: &AttributeSchema) -> Result<(), RegistryError> {
        for (k, v) in &self.0 {
            if schema.get(k.as_str()).is_none() {
                return Err(RegistryError::UnknownWeight(k.to_string()));
            }
            if !(v.is_finite() && *v >= 0.0) {
                return Err(RegistryError::InvalidWeight {
                    attribute: k.to_string(),
                    value: *v,
                });
            }
        }
        Ok(())
    }

    /// Like [`Weights::check_known`], and additionally every schema attribute
    /// has a weight.
    pub fn validate(&self, schema: &AttributeSchema) -> Result<(), RegistryError> {
        self.check_known(schema)?;
        if let Some(missing) = schema.iter().find(|d| !self.0.contains_key(&d.id)) {
            return Err(RegistryError::InvalidWeight {
                attribute: missing.id.to_string(),
                value: f64::NAN,
            });
        }
        Ok(())
    }
}

impl FromIterator<(AttributeId, f64)> for Weights {
    fn from_iter<T: IntoIterator<Item = (AttributeId, f64)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Wire form of a registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryDocument {
    #[serde(default)]
    pub schema: Option<AttributeSchema>,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub sources: Vec<RawSource>,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

/// A validated, immutable registry.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    schema: AttributeSchema,
    weights: Weights,
    sources: Vec<SourceDescriptor>,
    overrides: Vec<Override>,
}

/// Parse and validate a registry document.
pub fn load_registry(document: &str) -> Result<Registry, RegistryError> {
    let doc: RegistryDocument = serde_json::from_str(document)?;
    Registry::from_document(doc)
}

impl Registry {
    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        load_registry(&text)
    }

    pub fn from_document(doc: RegistryDocument) -> Result<Self, RegistryError> {
        let schema = doc.schema.unwrap_or_else(AttributeSchema::default_taxonomy);
        schema.validate().map_err(RegistryError::Schema)?;

        doc.weights.check_known(&schema)?;
        let weights = Weights::unit(&schema).merged(&doc.weights);

        let mut registry = Registry {
            schema,
            weights,
            sources: Vec::with_capacity(doc.sources.len()),
            overrides: Vec::new(),
        };
        for raw in doc.sources {
            let desc = SourceDescriptor::from_raw(raw, &registry.schema)?;
            registry.push_source(desc)?;
        }
        for o in doc.overrides {
            registry.push_override(o)?;
        }
        Ok(registry)
    }

    /// Registry with the given schema and sources, unit weights and no
    /// overrides.
    pub fn new(
        schema: AttributeSchema,
        sources: Vec<SourceDescriptor>,
    ) -> Result<Self, RegistryError> {
        schema.validate().map_err(RegistryError::Schema)?;
        let mut registry = Registry {
            weights: Weights::unit(&schema),
            schema,
            sources: Vec::new(),
            overrides: Vec::new(),
        };
        for s in sources {
            let raw = s.to_raw();
            registry.push_source(SourceDescriptor::from_raw(raw, &registry.schema)?)?;
        }
        Ok(registry)
    }

    fn push_source(&mut self, desc: SourceDescriptor) -> Result<(), RegistryError> {
        if self.source(desc.id.as_str()).is_some() {
            return Err(RegistryError::DuplicateSource(desc.id));
        }
        if desc.standard {
            if let Some(first) = self.standard_source(&desc.data_type) {
                return Err(RegistryError::MultipleStandard {
                    data_type: desc.data_type.clone(),
                    first: first.id.clone(),
                    second: desc.id,
                });
            }
        }
        self.sources.push(desc);
        Ok(())
    }

    fn push_override(&mut self, o: Override) -> Result<(), RegistryError> {
        let a = self.source(o.source_a.as_str()).ok_or_else(|| {
            RegistryError::InvalidOverride(format!("unknown source {:?}", o.source_a.as_str()))
        })?;
        let b = self.source(o.source_b.as_str()).ok_or_else(|| {
            RegistryError::InvalidOverride(format!("unknown source {:?}", o.source_b.as_str()))
        })?;
        if a.id == b.id {
            return Err(RegistryError::InvalidOverride(format!(
                "override pairs {} with itself",
                a.id
            )));
        }
        if a.data_type != b.data_type {
            return Err(RegistryError::InvalidOverride(format!(
                "{} and {} have different data types",
                a.id, b.id
            )));
        }
        if self.schema.get(o.attribute_id.as_str()).is_none() {
            return Err(RegistryError::InvalidOverride(format!(
                "unknown attribute {:?}",
                o.attribute_id.as_str()
            )));
        }
        if let Some(prev) = self.override_for(
            o.source_a.as_str(),
            o.source_b.as_str(),
            o.attribute_id.as_str(),
        ) {
            if prev != o.score {
                return Err(RegistryError::InvalidOverride(format!(
                    "conflicting overrides for ({}, {}, {})",
                    o.source_a, o.source_b, o.attribute_id
                )));
            }
            return Ok(());
        }
        self.overrides.push(o);
        Ok(())
    }

    pub fn to_document(&self) -> RegistryDocument {
        RegistryDocument {
            schema: Some(self.schema.clone()),
            weights: self.weights.clone(),
            sources: self.sources.iter().map(SourceDescriptor::to_raw).collect(),
            overrides: self.overrides.clone(),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("registry serializes")
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn sources(&self) -> &[SourceDescriptor] {
        &self.sources
    }

    pub fn overrides(&self) -> &[Override] {
        &self.overrides
    }

    pub fn source(&self, id: &str) -> Option<&SourceDescriptor> {
        self.sources.iter().find(|s| s.id == id)
    }

    /// Sources of one data type, in registry order.
    pub fn sources_of<'a>(
        &'a self,
        data_type: &'a DataType,
    ) -> impl Iterator<Item = &'a SourceDescriptor> + 'a {
        self.sources
            .iter()
            .filter(move |s| &s.data_type == data_type)
    }

    /// Data types in order of first appearance.
    pub fn data_types(&self) -> Vec<DataType> {
        let mut seen = BTreeSet::new();
        self.sources
            .iter()
            .filter(|s| seen.insert(&s.data_type))
            .map(|s| s.data_type.clone())
            .collect()
    }

    pub fn standard_source(&self, data_type: &DataType) -> Option<&SourceDescriptor> {
        self.sources
            .iter()
            .find(|s| s.standard && &s.data_type == data_type)
    }

    pub fn override_for(&self, a: &str, b: &str, attribute: &str) -> Option<Score> {
        self.overrides
            .iter()
            .find(|o| o.matches(a, b, attribute))
            .map(|o| o.score)
    }

    /// A copy with `weights` replacing the current weights.
    pub fn with_weights(&self, weights: Weights) -> Result<Self, RegistryError> {
        weights.validate(&self.schema)?;
        Ok(Self {
            weights,
            ..self.clone()
        })
    }

    /// A copy with one more source.
    pub fn with_source(&self, raw: RawSource) -> Result<Self, RegistryError> {
        let desc = SourceDescriptor::from_raw(raw, &self.schema)?;
        let mut next = self.clone();
        next.push_source(desc)?;
        Ok(next)
    }

    /// Hash of schema, sources and overrides. Weights are excluded so that
    /// matrices built from the same content but different weights share it.
    pub fn content_version(&self) -> String {
        let doc = self.to_document();
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&doc.schema).expect("schema serializes"));
        hasher.update(serde_json::to_vec(&doc.sources).expect("sources serialize"));
        hasher.update(serde_json::to_vec(&doc.overrides).expect("overrides serialize"));
        hex::encode(&hasher.finalize()[..8])
    }
}
