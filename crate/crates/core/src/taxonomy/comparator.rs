//! Per-attribute comparison rules.
//!
//! Every rule maps a pair of values to a three-level [`Score`]: similar,
//! similar with restrictions, or different. Equal values always score
//! [`Score::Similar`], whatever the rule.

use super::value::{AttributeValue, ValueKind};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Outcome of comparing one attribute of two sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Score {
    Different,
    Restricted,
    Similar,
}

impl Score {
    pub const ALL: [Score; 3] = [Score::Different, Score::Restricted, Score::Similar];

    pub fn value(self) -> i8 {
        match self {
            Score::Different => -1,
            Score::Restricted => 0,
            Score::Similar => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }
}

impl TryFrom<i8> for Score {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            -1 => Ok(Score::Different),
            0 => Ok(Score::Restricted),
            1 => Ok(Score::Similar),
            other => Err(format!("score {other} not in {{-1, 0, 1}}")),
        }
    }
}

impl From<Score> for i8 {
    fn from(s: Score) -> i8 {
        s.value()
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// One entry of a lookup table. Entries are unordered pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupEntry {
    pub a: String,
    pub b: String,
    pub score: Score,
}

impl LookupEntry {
    fn matches(&self, x: &str, y: &str) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

/// Rule turning a value pair into a [`Score`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ComparatorSpec {
    /// Explicit scores for pairs of class labels, `default` for unlisted pairs.
    LookupTable {
        default: Score,
        #[serde(default)]
        entries: Vec<LookupEntry>,
    },
    /// `|a - b| <= t1` is similar, `<= t2` restricted, otherwise different.
    /// Thresholds are in the attribute's canonical unit (seconds or percent).
    AbsoluteBand { t1: f64, t2: f64 },
    /// Equal values are similar, anything else different.
    ExactMatch,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("cannot compare a {left} value with a {right} value")]
    KindMismatch { left: ValueKind, right: ValueKind },
    #[error("comparator {comparator} does not apply to {kind} values")]
    UnsupportedKind {
        comparator: &'static str,
        kind: ValueKind,
    },
}

impl ComparatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ComparatorSpec::LookupTable { .. } => "lookup-table",
            ComparatorSpec::AbsoluteBand { .. } => "absolute-band",
            ComparatorSpec::ExactMatch => "exact-match",
        }
    }

    /// Whether this comparator can evaluate values of `kind`.
    pub fn supports(&self, kind: ValueKind) -> bool {
        match self {
            ComparatorSpec::LookupTable { .. } => {
                matches!(kind, ValueKind::Categorical | ValueKind::FreeText)
            }
            ComparatorSpec::AbsoluteBand { .. } => matches!(
                kind,
                ValueKind::Duration | ValueKind::Rate | ValueKind::Percentage
            ),
            ComparatorSpec::ExactMatch => true,
        }
    }

    /// Checks the structural invariants: symmetric lookup tables with a
    /// similar diagonal, and `0 <= t1 <= t2` for bands.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            ComparatorSpec::LookupTable { entries, .. } => {
                for (i, e) in entries.iter().enumerate() {
                    if e.a == e.b && e.score != Score::Similar {
                        return Err(format!(
                            "entry ({}, {}) must score 1: equal values are always similar",
                            e.a, e.b
                        ));
                    }
                    if let Some(other) = entries[..i].iter().find(|o| o.matches(&e.a, &e.b)) {
                        if other.score != e.score {
                            return Err(format!(
                                "entries ({}, {}) and ({}, {}) disagree",
                                other.a, other.b, e.a, e.b
                            ));
                        }
                    }
                }
                Ok(())
            }
            ComparatorSpec::AbsoluteBand { t1, t2 } => {
                if !(t1.is_finite() && t2.is_finite()) {
                    return Err("band thresholds must be finite".into());
                }
                if *t1 < 0.0 || *t2 < 0.0 {
                    return Err("band thresholds must be non-negative".into());
                }
                if t1 > t2 {
                    return Err(format!("band threshold t1={t1} exceeds t2={t2}"));
                }
                Ok(())
            }
            ComparatorSpec::ExactMatch => Ok(()),
        }
    }
}

/// Compare two values of one attribute.
///
/// The result depends only on the arguments and is symmetric in `a` and `b`.
pub fn compare_attribute(
    a: &AttributeValue,
    b: &AttributeValue,
    spec: &ComparatorSpec,
) -> Result<Score, CompareError> {
    if a.kind() != b.kind() {
        return Err(CompareError::KindMismatch {
            left: a.kind(),
            right: b.kind(),
        });
    }
    if !spec.supports(a.kind()) {
        return Err(CompareError::UnsupportedKind {
            comparator: spec.name(),
            kind: a.kind(),
        });
    }
    if a == b {
        return Ok(Score::Similar);
    }
    let score = match spec {
        ComparatorSpec::LookupTable { default, entries } => {
            let (x, y) = (a.label().unwrap_or(""), b.label().unwrap_or(""));
            entries
                .iter()
                .find(|e| e.matches(x, y))
                .map_or(*default, |e| e.score)
        }
        ComparatorSpec::AbsoluteBand { t1, t2 } => {
            let (x, y) = (a.numeric().unwrap_or(0.0), b.numeric().unwrap_or(0.0));
            let gap = (x - y).abs();
            if gap <= *t1 {
                Score::Similar
            } else if gap <= *t2 {
                Score::Restricted
            } else {
                Score::Different
            }
        }
        ComparatorSpec::ExactMatch => Score::Different,
    };
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::value::Span;
    use proptest::prelude::*;
    use std::time::Duration;

    fn secs(s: u64) -> AttributeValue {
        AttributeValue::Duration(Span::Finite(Duration::from_secs(s)))
    }

    fn period(s: u64) -> AttributeValue {
        AttributeValue::Rate(Span::Finite(Duration::from_secs(s)))
    }

    fn cat(s: &str) -> AttributeValue {
        AttributeValue::Categorical(s.into())
    }

    #[test]
    fn test_delay_band() {
        let band = ComparatorSpec::AbsoluteBand {
            t1: 30.0,
            t2: 120.0,
        };
        assert_eq!(
            compare_attribute(&secs(1), &secs(5), &band),
            Ok(Score::Similar)
        );
        assert_eq!(
            compare_attribute(&secs(1), &secs(60), &band),
            Ok(Score::Restricted)
        );
        assert_eq!(
            compare_attribute(&secs(1), &secs(600), &band),
            Ok(Score::Different)
        );
    }

    #[test]
    fn test_frequency_band_on_periods() {
        let band = ComparatorSpec::AbsoluteBand {
            t1: 60.0,
            t2: 600.0,
        };
        assert_eq!(
            compare_attribute(&period(1), &period(3600), &band),
            Ok(Score::Different)
        );
        assert_eq!(
            compare_attribute(&period(1), &period(1), &band),
            Ok(Score::Similar)
        );
    }

    #[test]
    fn test_unlimited_is_different_from_finite() {
        let band = ComparatorSpec::AbsoluteBand {
            t1: 1800.0,
            t2: 7200.0,
        };
        let unlimited = AttributeValue::Duration(Span::Unlimited);
        assert_eq!(
            compare_attribute(&secs(3600), &unlimited, &band),
            Ok(Score::Different)
        );
        assert_eq!(
            compare_attribute(&unlimited, &unlimited, &band),
            Ok(Score::Similar)
        );
    }

    #[test]
    fn test_lookup_is_unordered() {
        let table = ComparatorSpec::LookupTable {
            default: Score::Different,
            entries: vec![LookupEntry {
                a: "power".into(),
                b: "power-and-network".into(),
                score: Score::Similar,
            }],
        };
        assert_eq!(
            compare_attribute(&cat("power-and-network"), &cat("power"), &table),
            Ok(Score::Similar)
        );
        assert_eq!(
            compare_attribute(&cat("power"), &cat("independent"), &table),
            Ok(Score::Different)
        );
    }

    #[test]
    fn test_kind_mismatch() {
        let err = compare_attribute(&secs(1), &period(1), &ComparatorSpec::ExactMatch);
        assert!(matches!(err, Err(CompareError::KindMismatch { .. })));
        let band = ComparatorSpec::AbsoluteBand { t1: 0.0, t2: 0.0 };
        let err = compare_attribute(&cat("a"), &cat("b"), &band);
        assert!(matches!(err, Err(CompareError::UnsupportedKind { .. })));
    }

    #[test]
    fn test_validate_rejects_asymmetric_table() {
        let table = ComparatorSpec::LookupTable {
            default: Score::Restricted,
            entries: vec![
                LookupEntry {
                    a: "x".into(),
                    b: "y".into(),
                    score: Score::Similar,
                },
                LookupEntry {
                    a: "y".into(),
                    b: "x".into(),
                    score: Score::Different,
                },
            ],
        };
        assert!(table.validate().is_err());
        let diag = ComparatorSpec::LookupTable {
            default: Score::Restricted,
            entries: vec![LookupEntry {
                a: "x".into(),
                b: "x".into(),
                score: Score::Different,
            }],
        };
        assert!(diag.validate().is_err());
    }

    #[test]
    fn test_validate_band_order() {
        assert!(ComparatorSpec::AbsoluteBand { t1: 5.0, t2: 1.0 }
            .validate()
            .is_err());
        assert!(ComparatorSpec::AbsoluteBand { t1: -1.0, t2: 1.0 }
            .validate()
            .is_err());
        assert!(ComparatorSpec::AbsoluteBand { t1: 1.0, t2: 1.0 }
            .validate()
            .is_ok());
    }

    #[test]
    fn test_score_serde_rejects_out_of_range() {
        assert!(serde_json::from_str::<Score>("2").is_err());
        assert_eq!(
            serde_json::from_str::<Score>("-1").unwrap(),
            Score::Different
        );
    }

    fn arb_score() -> impl Strategy<Value = Score> {
        prop::sample::select(Score::ALL.to_vec())
    }

    const LABELS: [&str; 4] = ["a", "b", "c", "d"];

    fn arb_table() -> impl Strategy<Value = ComparatorSpec> {
        // Build from unordered pairs so the table is valid by construction.
        (
            arb_score(),
            prop::collection::vec((0usize..4, 0usize..4, arb_score()), 0..6),
        )
            .prop_map(|(default, raw)| {
                let mut entries: Vec<LookupEntry> = Vec::new();
                for (i, j, s) in raw {
                    let (a, b) = (LABELS[i.min(j)], LABELS[i.max(j)]);
                    let score = if a == b { Score::Similar } else { s };
                    if !entries.iter().any(|e| e.matches(a, b)) {
                        entries.push(LookupEntry {
                            a: a.into(),
                            b: b.into(),
                            score,
                        });
                    }
                }
                ComparatorSpec::LookupTable { default, entries }
            })
    }

    fn arb_band() -> impl Strategy<Value = ComparatorSpec> {
        (0.0f64..1e4, 0.0f64..1e4).prop_map(|(x, y)| ComparatorSpec::AbsoluteBand {
            t1: x.min(y),
            t2: x.max(y),
        })
    }

    fn arb_span() -> impl Strategy<Value = Span> {
        prop_oneof![
            9 => (0u64..100_000_000).prop_map(|ms| Span::Finite(Duration::from_millis(ms))),
            1 => Just(Span::Unlimited),
        ]
    }

    fn arb_numeric_pair() -> impl Strategy<Value = (AttributeValue, AttributeValue)> {
        prop_oneof![
            (arb_span(), arb_span())
                .prop_map(|(a, b)| (AttributeValue::Duration(a), AttributeValue::Duration(b))),
            (arb_span(), arb_span())
                .prop_map(|(a, b)| (AttributeValue::Rate(a), AttributeValue::Rate(b))),
            (0.0f64..=100.0, 0.0f64..=100.0)
                .prop_map(|(a, b)| (AttributeValue::Percentage(a), AttributeValue::Percentage(b))),
        ]
    }

    fn arb_label_pair() -> impl Strategy<Value = (AttributeValue, AttributeValue)> {
        (0usize..4, 0usize..4).prop_map(|(i, j)| (cat(LABELS[i]), cat(LABELS[j])))
    }

    proptest! {
        #[test]
        fn prop_lookup_symmetric_and_closed((a, b) in arb_label_pair(), spec in arb_table()) {
            prop_assert!(spec.validate().is_ok());
            let ab = compare_attribute(&a, &b, &spec).unwrap();
            let ba = compare_attribute(&b, &a, &spec).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(Score::ALL.contains(&ab));
            prop_assert_eq!(compare_attribute(&a, &a, &spec).unwrap(), Score::Similar);
        }

        #[test]
        fn prop_band_symmetric_and_closed((a, b) in arb_numeric_pair(), spec in arb_band()) {
            let ab = compare_attribute(&a, &b, &spec).unwrap();
            prop_assert_eq!(ab, compare_attribute(&b, &a, &spec).unwrap());
            prop_assert!(Score::ALL.contains(&ab));
            prop_assert_eq!(compare_attribute(&a, &a, &spec).unwrap(), Score::Similar);
            prop_assert_eq!(compare_attribute(&b, &b, &ComparatorSpec::ExactMatch).unwrap(), Score::Similar);
        }
    }
}
