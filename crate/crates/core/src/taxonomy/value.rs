//! Typed attribute values and their text encodings.
//!
//! Durations are written the way people write them in a source sheet
//! (`"1s"`, `"20min"`, `"1h"`), plus two sentinels: `"none"` (zero) and
//! `"unlimited"`. Rates are written as `"<count>/<interval>"` (`"1/s"`,
//! `"1/h"`, `"4/15min"`) and are canonicalized to their period.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use std::fmt;
use std::time::Duration;

/// How an attribute's values are written and compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Categorical,
    Duration,
    Rate,
    Percentage,
    FreeText,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Categorical => "categorical",
            ValueKind::Duration => "duration",
            ValueKind::Rate => "rate",
            ValueKind::Percentage => "percentage",
            ValueKind::FreeText => "free-text",
        };
        f.write_str(s)
    }
}

/// A duration that may be unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Span {
    Finite(Duration),
    Unlimited,
}

impl Span {
    /// Seconds on the canonical comparison scale; `Unlimited` is +inf.
    pub fn as_secs_f64(self) -> f64 {
        match self {
            Span::Finite(d) => d.as_secs_f64(),
            Span::Unlimited => f64::INFINITY,
        }
    }

    /// The finite duration, with `Unlimited` mapped to `None`.
    pub fn finite(self) -> Option<Duration> {
        match self {
            Span::Finite(d) => Some(d),
            Span::Unlimited => None,
        }
    }
}

/// A validated attribute value. The variant always matches the attribute's
/// [`ValueKind`].
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    Categorical(String),
    Duration(Span),
    /// Stored as the period between two updates.
    Rate(Span),
    Percentage(f64),
    FreeText(String),
}

impl AttributeValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            AttributeValue::Categorical(_) => ValueKind::Categorical,
            AttributeValue::Duration(_) => ValueKind::Duration,
            AttributeValue::Rate(_) => ValueKind::Rate,
            AttributeValue::Percentage(_) => ValueKind::Percentage,
            AttributeValue::FreeText(_) => ValueKind::FreeText,
        }
    }

    /// Position on the attribute's numeric scale (seconds for durations and
    /// periods, percentage points for percentages).
    pub fn numeric(&self) -> Option<f64> {
        match self {
            AttributeValue::Duration(s) | AttributeValue::Rate(s) => Some(s.as_secs_f64()),
            AttributeValue::Percentage(p) => Some(*p),
            AttributeValue::Categorical(_) | AttributeValue::FreeText(_) => None,
        }
    }

    /// Class label for table lookups.
    pub fn label(&self) -> Option<&str> {
        match self {
            AttributeValue::Categorical(s) | AttributeValue::FreeText(s) => Some(s),
            _ => None,
        }
    }

    /// Parse a JSON value according to `kind`.
    pub fn parse(kind: ValueKind, raw: &Json) -> Result<Self, String> {
        match kind {
            ValueKind::Categorical | ValueKind::FreeText => {
                let s = raw
                    .as_str()
                    .ok_or_else(|| format!("expected a string, found {raw}"))?;
                if kind == ValueKind::Categorical && s.trim().is_empty() {
                    return Err("empty category".into());
                }
                Ok(if kind == ValueKind::Categorical {
                    AttributeValue::Categorical(s.to_owned())
                } else {
                    AttributeValue::FreeText(s.to_owned())
                })
            }
            ValueKind::Duration => {
                let s = raw
                    .as_str()
                    .ok_or_else(|| format!("expected a duration string, found {raw}"))?;
                parse_span(s).map(AttributeValue::Duration)
            }
            ValueKind::Rate => {
                let s = raw
                    .as_str()
                    .ok_or_else(|| format!("expected a rate string, found {raw}"))?;
                parse_rate(s).map(AttributeValue::Rate)
            }
            ValueKind::Percentage => {
                let p = raw
                    .as_f64()
                    .ok_or_else(|| format!("expected a number, found {raw}"))?;
                if !(0.0..=100.0).contains(&p) {
                    return Err(format!("percentage {p} outside [0, 100]"));
                }
                Ok(AttributeValue::Percentage(p))
            }
        }
    }

    /// Canonical JSON encoding; `parse(kind, &v.to_json())` yields `v` again.
    pub fn to_json(&self) -> Json {
        match self {
            AttributeValue::Categorical(s) | AttributeValue::FreeText(s) => Json::from(s.clone()),
            AttributeValue::Duration(span) => Json::from(format_span(*span)),
            AttributeValue::Rate(span) => Json::from(format_rate(*span)),
            AttributeValue::Percentage(p) => Json::from(*p),
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_json() {
            Json::String(s) => f.write_str(&s),
            other => write!(f, "{other}"),
        }
    }
}

/// Parse a duration with the `none` / `unlimited` sentinels.
pub fn parse_span(s: &str) -> Result<Span, String> {
    let t = s.trim();
    match t.to_ascii_lowercase().as_str() {
        "none" | "0" => return Ok(Span::Finite(Duration::ZERO)),
        "unlimited" => return Ok(Span::Unlimited),
        _ => {}
    }
    humantime::parse_duration(t)
        .map(Span::Finite)
        .map_err(|e| format!("invalid duration {s:?}: {e}"))
}

pub fn format_span(span: Span) -> String {
    match span {
        Span::Unlimited => "unlimited".into(),
        Span::Finite(d) if d.is_zero() => "none".into(),
        Span::Finite(d) => humantime::format_duration(d).to_string(),
    }
}

/// Parse `"<count>/<interval>"` into a period. A bare unit is read as one of
/// that unit (`"1/h"` is one per hour).
pub fn parse_rate(s: &str) -> Result<Span, String> {
    let (count, per) = s
        .trim()
        .split_once('/')
        .ok_or_else(|| format!("invalid rate {s:?}: expected <count>/<interval>"))?;
    let count: f64 = count
        .trim()
        .parse()
        .map_err(|_| format!("invalid rate {s:?}: bad count"))?;
    if !(count.is_finite() && count > 0.0) {
        return Err(format!("invalid rate {s:?}: count must be positive"));
    }
    let per = per.trim();
    let interval = if per.starts_with(|c: char| c.is_ascii_digit()) {
        humantime::parse_duration(per)
    } else {
        humantime::parse_duration(&format!("1{per}"))
    }
    .map_err(|e| format!("invalid rate {s:?}: {e}"))?;
    if interval.is_zero() {
        return Err(format!("invalid rate {s:?}: zero interval"));
    }
    Ok(Span::Finite(interval.div_f64(count)))
}

pub fn format_rate(period: Span) -> String {
    match period {
        Span::Unlimited => "0/1s".into(),
        Span::Finite(d) => format!("1/{}", humantime::format_duration(d)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn test_duration_sentinels() {
        assert_eq!(parse_span("none").unwrap(), Span::Finite(Duration::ZERO));
        assert_eq!(parse_span("unlimited").unwrap(), Span::Unlimited);
        assert_eq!(
            parse_span("20min").unwrap(),
            Span::Finite(Duration::from_secs(1200))
        );
        assert!(parse_span("soon").is_err());
    }

    #[test]
    fn test_rate_is_period() {
        assert_eq!(
            parse_rate("1/s").unwrap(),
            Span::Finite(Duration::from_secs(1))
        );
        assert_eq!(
            parse_rate("1/h").unwrap(),
            Span::Finite(Duration::from_secs(3600))
        );
        assert_eq!(
            parse_rate("4/1min").unwrap(),
            Span::Finite(Duration::from_secs(15))
        );
        assert!(parse_rate("0/s").is_err());
        assert!(parse_rate("fast").is_err());
    }

    #[test]
    fn test_json_round_trip() {
        for (kind, raw) in [
            (ValueKind::Duration, json!("1min")),
            (ValueKind::Duration, json!("none")),
            (ValueKind::Duration, json!("unlimited")),
            (ValueKind::Rate, json!("1/h")),
            (ValueKind::Rate, json!("3/s")),
            (ValueKind::Percentage, json!(42.5)),
            (ValueKind::Categorical, json!("wired")),
        ] {
            let v = AttributeValue::parse(kind, &raw).unwrap();
            assert_eq!(AttributeValue::parse(kind, &v.to_json()).unwrap(), v);
        }
    }

    #[test]
    fn test_percentage_range() {
        assert!(AttributeValue::parse(ValueKind::Percentage, &json!(101)).is_err());
        assert!(AttributeValue::parse(ValueKind::Percentage, &json!("50")).is_err());
    }
}
