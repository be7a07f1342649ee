//! Random registries and weight vectors, for property tests and benchmarks.

use crate::case_study;
use crate::taxonomy::{AttributeSchema, RawSource, Registry, RegistryDocument, ValueKind, Weights};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::Value as Json;
use std::collections::BTreeMap;

const DURATIONS: [&str; 9] = [
    "none",
    "1s",
    "5s",
    "30s",
    "1min",
    "5min",
    "20min",
    "1h",
    "unlimited",
];
const RATES: [&str; 5] = ["1/s", "1/10s", "1/min", "1/10min", "1/h"];
const LABELS: [&str; 3] = ["alpha", "beta", "gamma"];

fn random_value(rng: &mut impl Rng, kind: ValueKind, classes: &[String]) -> Json {
    match kind {
        ValueKind::Categorical | ValueKind::FreeText => {
            if classes.is_empty() {
                Json::from(*LABELS.choose(rng).expect("non-empty"))
            } else {
                Json::from(classes.choose(rng).expect("non-empty").as_str())
            }
        }
        ValueKind::Duration => Json::from(*DURATIONS.choose(rng).expect("non-empty")),
        ValueKind::Rate => Json::from(*RATES.choose(rng).expect("non-empty")),
        ValueKind::Percentage => Json::from(rng.random_range(0..=100)),
    }
}

/// A source with random values for every attribute of `schema`.
pub fn random_source(
    rng: &mut impl Rng,
    schema: &AttributeSchema,
    id: &str,
    data_type: &str,
    standard: bool,
) -> RawSource {
    let attributes: BTreeMap<String, Json> = schema
        .iter()
        .map(|d| {
            (
                d.id.to_string(),
                random_value(rng, d.value_kind, &d.classes),
            )
        })
        .collect();
    RawSource {
        id: id.into(),
        display_name: String::new(),
        data_type: data_type.into(),
        standard,
        attributes,
    }
}

/// Registry over the case-study schema with `sources` sources spread
/// round-robin over `data_types` data types. The first source of each data
/// type is its standard source.
pub fn random_registry(rng: &mut impl Rng, sources: usize, data_types: usize) -> Registry {
    let schema = case_study::registry().schema().clone();
    let data_types = data_types.max(1);
    let raw = (0..sources)
        .map(|i| {
            random_source(
                rng,
                &schema,
                &format!("source-{i:04}"),
                &format!("type-{}", i % data_types),
                i < data_types,
            )
        })
        .collect();
    Registry::from_document(RegistryDocument {
        schema: Some(schema),
        weights: Weights::default(),
        sources: raw,
        overrides: Vec::new(),
    })
    .expect("generated registry is valid")
}

/// Weights `k/8` with `k` in `0..=32` for every attribute. Multiples of
/// 1/8 keep sums and scalings exact in floating point.
pub fn random_weights(rng: &mut impl Rng, schema: &AttributeSchema) -> Weights {
    schema
        .iter()
        .map(|d| (d.id.clone(), f64::from(rng.random_range(0..=32u8)) / 8.0))
        .collect()
}
