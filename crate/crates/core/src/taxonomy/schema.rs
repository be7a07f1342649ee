//! The attribute schema: two categories, each a list of attributes with
//! a value kind and a comparison rule.

use super::comparator::{ComparatorSpec, Score};
use super::value::ValueKind;
use crate::ids::AttributeId;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

/// The two taxonomy categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    /// Characteristics of the delivered data.
    DataFeatures,
    /// Susceptibility of the source to crisis-induced failure.
    SourceVulnerability,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::DataFeatures, Category::SourceVulnerability];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::DataFeatures => "data-features",
            Category::SourceVulnerability => "source-vulnerability",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AttributeDef {
    pub id: AttributeId,
    pub category: Category,
    #[serde(default)]
    pub description: String,
    pub value_kind: ValueKind,
    pub comparator: ComparatorSpec,
    /// Allowed labels for categorical attributes. Empty means any label.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
}

/// Ordered attribute list. Order is display order and summation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeSchema {
    attributes: Vec<AttributeDef>,
}

impl AttributeSchema {
    /// Builds a schema, checking id uniqueness and comparator validity.
    pub fn new(attributes: Vec<AttributeDef>) -> Result<Self, String> {
        let schema = Self { attributes };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for def in &self.attributes {
            if !seen.insert(def.id.as_str()) {
                return Err(format!("duplicate attribute id {:?}", def.id.as_str()));
            }
            def.comparator
                .validate()
                .map_err(|e| format!("attribute {}: {e}", def.id))?;
            if !def.comparator.supports(def.value_kind) {
                return Err(format!(
                    "attribute {}: comparator {} does not apply to {} values",
                    def.id,
                    def.comparator.name(),
                    def.value_kind
                ));
            }
            if !def.classes.is_empty() {
                if let ComparatorSpec::LookupTable { entries, .. } = &def.comparator {
                    for e in entries {
                        for label in [&e.a, &e.b] {
                            if !def.classes.contains(label) {
                                return Err(format!(
                                    "attribute {}: lookup entry uses unknown class {label:?}",
                                    def.id
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|d| d.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AttributeDef> {
        self.attributes.iter()
    }

    pub fn in_category(&self, category: Category) -> impl Iterator<Item = &AttributeDef> {
        self.attributes
            .iter()
            .filter(move |d| d.category == category)
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// The eleven-attribute taxonomy with generic comparison rules:
    /// absolute bands for durations and rates, exact matching for labels.
    pub fn default_taxonomy() -> Self {
        use Category::*;
        use ValueKind::*;
        let band = |t1: f64, t2: f64| ComparatorSpec::AbsoluteBand { t1, t2 };
        let exact = || ComparatorSpec::ExactMatch;
        let restricted = || ComparatorSpec::LookupTable {
            default: Score::Restricted,
            entries: Vec::new(),
        };
        let def = |id: &str, category, description: &str, value_kind, comparator| AttributeDef {
            id: AttributeId::new(id),
            category,
            description: description.into(),
            value_kind,
            comparator,
            classes: Vec::new(),
        };
        let attributes = vec![
            def(
                "environmental-impact",
                DataFeatures,
                "possible impact from the non-crisis environment (weather, time of day)",
                Categorical,
                restricted(),
            ),
            def(
                "level-of-detail",
                DataFeatures,
                "detail of the data source (resolution, sensor density)",
                Categorical,
                exact(),
            ),
            def(
                "delay",
                DataFeatures,
                "time until the data is available for processing",
                Duration,
                band(30.0, 120.0),
            ),
            def(
                "frequency",
                DataFeatures,
                "update interval",
                Rate,
                band(60.0, 600.0),
            ),
            def(
                "spatial-coverage",
                DataFeatures,
                "coverage of the observed area",
                Categorical,
                exact(),
            ),
            def(
                "activation-delay",
                DataFeatures,
                "time until a dormant source delivers data",
                Duration,
                band(300.0, 1800.0),
            ),
            def(
                "use-case",
                DataFeatures,
                "critical infrastructure monitored with the source",
                Categorical,
                exact(),
            ),
            def(
                "data-transfer",
                SourceVulnerability,
                "transfer medium to processing (wired, radio, physical)",
                Categorical,
                exact(),
            ),
            def(
                "sensor-location",
                SourceVulnerability,
                "placement of the sensor relative to the observed area",
                Categorical,
                exact(),
            ),
            def(
                "dependency-on-ci",
                SourceVulnerability,
                "dependency on local critical infrastructure",
                Categorical,
                exact(),
            ),
            def(
                "autonomous-operation-time",
                SourceVulnerability,
                "duration of operation after interruption of supply",
                Duration,
                band(1800.0, 7200.0),
            ),
        ];
        Self { attributes }
    }
}
