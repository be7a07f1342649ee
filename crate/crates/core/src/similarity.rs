//! Pairwise similarity, the assessment matrix, and candidate ranking.
//!
//! For two sources of one data type and one category, each attribute is
//! compared to a score in {-1, 0, +1} and the similarity is the weighted sum
//! of those scores. The matrix stores the per-attribute scores, so changing
//! weights never re-runs a comparator.

use crate::ids::{AttributeId, DataType, SourceId};
use crate::taxonomy::{
    compare_attribute, Category, CompareError, Registry, Score, SourceDescriptor, Weights,
};
use crate::time::Timestamp;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("unknown source {0:?}")]
    UnknownSource(SourceId),
    #[error("{0} cannot be compared with itself")]
    SameSource(SourceId),
    #[error("{a} ({a_type}) and {b} ({b_type}) serve different data types")]
    DataTypeMismatch {
        a: SourceId,
        a_type: DataType,
        b: SourceId,
        b_type: DataType,
    },
    #[error("weight given for unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("weight for {attribute:?} must be a non-negative number, got {value}")]
    InvalidWeight { attribute: String, value: f64 },
    #[error("attribute {attribute}: {source}")]
    Compare {
        attribute: AttributeId,
        #[source]
        source: CompareError,
    },
}

/// Similarity of one source pair in one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PairAssessment {
    pub data_type: DataType,
    pub source_m: SourceId,
    pub source_n: SourceId,
    pub category: Category,
    pub attribute_scores: BTreeMap<AttributeId, Score>,
    pub weighted_sum: f64,
}

impl PairAssessment {
    pub fn involves(&self, a: &str, b: &str) -> bool {
        (self.source_m == a && self.source_n == b) || (self.source_m == b && self.source_n == a)
    }
}

/// An attribute column of the matrix, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSlot {
    pub id: AttributeId,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MatrixSource {
    pub id: SourceId,
    pub data_type: DataType,
}

/// Precomputed similarities for every unordered source pair within each
/// data type, in both categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AssessmentMatrix {
    pub registry_version: String,
    pub created_at: Timestamp,
    pub weights: Weights,
    pub attributes: Vec<AttributeSlot>,
    /// Registry order; used for display.
    pub sources: Vec<MatrixSource>,
    /// Sorted by `(data_type, source_m, source_n, category)` with
    /// `source_m < source_n`.
    pub pairs: Vec<PairAssessment>,
}

/// A replacement candidate scored against a reference source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RankingEntry {
    pub candidate: SourceId,
    pub feature_similarity: f64,
    pub vulnerability_similarity: f64,
    /// `feature_similarity - vulnerability_similarity`.
    pub rank_score: f64,
}

impl RankingEntry {
    pub fn new(candidate: SourceId, feature: f64, vulnerability: f64) -> Self {
        Self {
            candidate,
            feature_similarity: feature,
            vulnerability_similarity: vulnerability,
            rank_score: feature - vulnerability,
        }
    }

    /// Ranking order: higher score first, then ascending id.
    pub fn ranking_cmp(&self, other: &Self) -> Ordering {
        other
            .rank_score
            .total_cmp(&self.rank_score)
            .then_with(|| self.candidate.cmp(&other.candidate))
    }
}

fn weighted_sum<'a>(
    scores: &BTreeMap<AttributeId, Score>,
    order: impl Iterator<Item = &'a AttributeId>,
    weights: &Weights,
) -> f64 {
    order.fold(0.0, |acc, id| {
        let s = scores.get(id).copied().unwrap_or(Score::Restricted);
        acc + weights.get(id.as_str()) * s.as_f64()
    })
}

fn check_weights(weights: &Weights, registry: &Registry) -> Result<(), SimilarityError> {
    for (id, w) in weights.iter() {
        if registry.schema().get(id.as_str()).is_none() {
            return Err(SimilarityError::UnknownAttribute(id.to_string()));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(SimilarityError::InvalidWeight {
                attribute: id.to_string(),
                value: w,
            });
        }
    }
    Ok(())
}

fn attribute_scores(
    registry: &Registry,
    m: &str,
    n: &str,
    category: Category,
) -> Result<BTreeMap<AttributeId, Score>, SimilarityError> {
    let (a, b) = pair_sources(registry, m, n)?;
    let mut scores = BTreeMap::new();
    for def in registry.schema().in_category(category) {
        let score = match registry.override_for(m, n, def.id.as_str()) {
            Some(s) => s,
            None => {
                // Descriptors are validated against the schema, so both
                // values exist and have the attribute's kind.
                let (va, vb) = (&a.values[&def.id], &b.values[&def.id]);
                compare_attribute(va, vb, &def.comparator).map_err(|source| {
                    SimilarityError::Compare {
                        attribute: def.id.clone(),
                        source,
                    }
                })?
            }
        };
        scores.insert(def.id.clone(), score);
    }
    Ok(scores)
}

fn pair_sources<'r>(
    registry: &'r Registry,
    m: &str,
    n: &str,
) -> Result<(&'r SourceDescriptor, &'r SourceDescriptor), SimilarityError> {
    let a = registry
        .source(m)
        .ok_or_else(|| SimilarityError::UnknownSource(SourceId::new(m)))?;
    let b = registry
        .source(n)
        .ok_or_else(|| SimilarityError::UnknownSource(SourceId::new(n)))?;
    if a.id == b.id {
        return Err(SimilarityError::SameSource(a.id.clone()));
    }
    if a.data_type != b.data_type {
        return Err(SimilarityError::DataTypeMismatch {
            a: a.id.clone(),
            a_type: a.data_type.clone(),
            b: b.id.clone(),
            b_type: b.data_type.clone(),
        });
    }
    Ok((a, b))
}

/// Similarity of sources `m` and `n` of `registry` in one category under
/// `weights`. Manual overrides take precedence over comparators.
pub fn similarity(
    registry: &Registry,
    m: &str,
    n: &str,
    category: Category,
    weights: &Weights,
) -> Result<PairAssessment, SimilarityError> {
    check_weights(weights, registry)?;
    let scores = attribute_scores(registry, m, n, category)?;
    let sum = weighted_sum(
        &scores,
        registry.schema().in_category(category).map(|d| &d.id),
        weights,
    );
    let data_type = registry.source(m).expect("checked above").data_type.clone();
    Ok(PairAssessment {
        data_type,
        source_m: SourceId::new(m),
        source_n: SourceId::new(n),
        category,
        attribute_scores: scores,
        weighted_sum: sum,
    })
}

fn canonical(a: &SourceId, b: &SourceId) -> (SourceId, SourceId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

fn pair_key(p: &PairAssessment) -> (&str, &str, &str, Category) {
    (
        p.data_type.as_str(),
        p.source_m.as_str(),
        p.source_n.as_str(),
        p.category,
    )
}

/// Assess every unordered source pair within each data type of `registry`.
pub fn build_assessment_matrix(registry: &Registry, created_at: Timestamp) -> AssessmentMatrix {
    let mut matrix = AssessmentMatrix {
        registry_version: registry.content_version(),
        created_at,
        weights: registry.weights().clone(),
        attributes: registry
            .schema()
            .iter()
            .map(|d| AttributeSlot {
                id: d.id.clone(),
                category: d.category,
            })
            .collect(),
        sources: registry
            .sources()
            .iter()
            .map(|s| MatrixSource {
                id: s.id.clone(),
                data_type: s.data_type.clone(),
            })
            .collect(),
        pairs: Vec::new(),
    };
    let sources = registry.sources();
    for (i, a) in sources.iter().enumerate() {
        for b in &sources[i + 1..] {
            if a.data_type == b.data_type {
                matrix.push_pair(registry, &a.id, &b.id);
            }
        }
    }
    matrix.sort_pairs();
    matrix
}

impl AssessmentMatrix {
    fn push_pair(&mut self, registry: &Registry, a: &SourceId, b: &SourceId) {
        let (m, n) = canonical(a, b);
        for category in Category::ALL {
            let scores = attribute_scores(registry, m.as_str(), n.as_str(), category)
                .expect("registry sources are validated against the schema");
            let sum = weighted_sum(&scores, self.category_order(category), &self.weights);
            self.pairs.push(PairAssessment {
                data_type: registry
                    .source(m.as_str())
                    .expect("present")
                    .data_type
                    .clone(),
                source_m: m.clone(),
                source_n: n.clone(),
                category,
                attribute_scores: scores,
                weighted_sum: sum,
            });
        }
    }

    fn sort_pairs(&mut self) {
        self.pairs.sort_by(|x, y| pair_key(x).cmp(&pair_key(y)));
    }

    fn category_order(&self, category: Category) -> impl Iterator<Item = &AttributeId> + '_ {
        self.attributes
            .iter()
            .filter(move |s| s.category == category)
            .map(|s| &s.id)
    }

    /// Identifier of this matrix's content and weights.
    pub fn version(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.registry_version.as_bytes());
        hasher.update(serde_json::to_vec(&self.weights).expect("weights serialize"));
        hex::encode(&hasher.finalize()[..8])
    }

    /// The assessment of `a` and `b` in `category`, in either order.
    pub fn pair(&self, a: &str, b: &str, category: Category) -> Option<&PairAssessment> {
        let (m, n) = if a <= b { (a, b) } else { (b, a) };
        let data_type = self.data_type_of(m)?;
        self.pairs
            .binary_search_by(|p| pair_key(p).cmp(&(data_type.as_str(), m, n, category)))
            .ok()
            .map(|i| &self.pairs[i])
    }

    pub fn data_type_of(&self, source: &str) -> Option<&DataType> {
        self.sources
            .iter()
            .find(|s| s.id == source)
            .map(|s| &s.data_type)
    }

    pub fn sources_of<'a>(&'a self, data_type: &'a DataType) -> impl Iterator<Item = &'a SourceId> {
        self.sources
            .iter()
            .filter(move |s| &s.data_type == data_type)
            .map(|s| &s.id)
    }

    pub fn pairs_of<'a>(
        &'a self,
        data_type: &'a DataType,
    ) -> impl Iterator<Item = &'a PairAssessment> + 'a {
        self.pairs.iter().filter(move |p| &p.data_type == data_type)
    }

    /// Sum of weights over the attributes of `category`; the similarity of
    /// attribute-identical sources.
    pub fn max_similarity(&self, category: Category) -> f64 {
        self.category_order(category)
            .fold(0.0, |acc, id| acc + self.weights.get(id.as_str()))
    }

    /// A copy with recomputed sums under `update`, merged over the current
    /// weights. Per-attribute scores are reused unchanged.
    pub fn reweigh(&self, update: &Weights) -> Result<AssessmentMatrix, SimilarityError> {
        for (id, w) in update.iter() {
            if !self.attributes.iter().any(|s| &s.id == id) {
                return Err(SimilarityError::UnknownAttribute(id.to_string()));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(SimilarityError::InvalidWeight {
                    attribute: id.to_string(),
                    value: w,
                });
            }
        }
        let mut next = self.clone();
        next.weights = self.weights.merged(update);
        for i in 0..next.pairs.len() {
            let category = next.pairs[i].category;
            let sum = weighted_sum(
                &next.pairs[i].attribute_scores,
                next.category_order(category),
                &next.weights,
            );
            next.pairs[i].weighted_sum = sum;
        }
        Ok(next)
    }

    /// A copy extended with the pairs between `new_source` and the existing
    /// sources of its data type. `registry` must already contain the source.
    pub fn extend_with(
        &self,
        registry: &Registry,
        new_source: &str,
    ) -> Result<AssessmentMatrix, SimilarityError> {
        let desc = registry
            .source(new_source)
            .ok_or_else(|| SimilarityError::UnknownSource(SourceId::new(new_source)))?;
        let mut next = self.clone();
        next.registry_version = registry.content_version();
        if next.sources.iter().any(|s| s.id == new_source) {
            return Ok(next);
        }
        let peers: Vec<SourceId> = next.sources_of(&desc.data_type).cloned().collect();
        next.sources.push(MatrixSource {
            id: desc.id.clone(),
            data_type: desc.data_type.clone(),
        });
        for peer in &peers {
            next.push_pair(registry, peer, &desc.id);
        }
        next.sort_pairs();
        Ok(next)
    }

    /// Equal pairs, weights, layout and content version; `created_at` is
    /// ignored.
    pub fn same_contents(&self, other: &AssessmentMatrix) -> bool {
        self.registry_version == other.registry_version
            && self.weights == other.weights
            && self.attributes == other.attributes
            && self.sources == other.sources
            && self.pairs == other.pairs
    }

    /// Per-category view of one data type in the row/column layout of a
    /// printed assessment table.
    pub fn table(&self, data_type: &DataType) -> MatrixTable {
        let ids: Vec<&SourceId> = self.sources_of(data_type).collect();
        let mut columns = Vec::new();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                columns.push((*a, *b));
            }
        }
        let sections = Category::ALL
            .iter()
            .map(|&category| {
                let rows = self
                    .category_order(category)
                    .map(|attr| TableRow {
                        attribute: attr.clone(),
                        weight: self.weights.get(attr.as_str()),
                        scores: columns
                            .iter()
                            .map(|(a, b)| {
                                self.pair(a.as_str(), b.as_str(), category)
                                    .and_then(|p| p.attribute_scores.get(attr).copied())
                                    .map_or(0, Score::value)
                            })
                            .collect(),
                    })
                    .collect();
                let sums = columns
                    .iter()
                    .map(|(a, b)| {
                        self.pair(a.as_str(), b.as_str(), category)
                            .map_or(0.0, |p| p.weighted_sum)
                    })
                    .collect();
                TableSection {
                    category,
                    rows,
                    sums,
                }
            })
            .collect();
        MatrixTable {
            data_type: data_type.clone(),
            matrix_version: self.version(),
            columns: columns
                .iter()
                .map(|(a, b)| [(*a).clone(), (*b).clone()])
                .collect(),
            sections,
        }
    }

    /// One line per (pair, category, attribute).
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "source-a",
            "source-b",
            "category",
            "attribute",
            "score",
            "weight",
        ])
        .expect("in-memory write");
        for p in &self.pairs {
            for slot in self.attributes.iter().filter(|s| s.category == p.category) {
                let score = p
                    .attribute_scores
                    .get(&slot.id)
                    .copied()
                    .unwrap_or(Score::Restricted);
                w.write_record([
                    p.source_m.as_str(),
                    p.source_n.as_str(),
                    p.category.as_str(),
                    slot.id.as_str(),
                    &score.value().to_string(),
                    &self.weights.get(slot.id.as_str()).to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Table view of one data type: one column per source pair, one row per
/// attribute, and a sum row per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MatrixTable {
    pub data_type: DataType,
    pub matrix_version: String,
    pub columns: Vec<[SourceId; 2]>,
    pub sections: Vec<TableSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TableSection {
    pub category: Category,
    pub rows: Vec<TableRow>,
    pub sums: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TableRow {
    pub attribute: AttributeId,
    pub weight: f64,
    pub scores: Vec<i8>,
}

impl MatrixTable {
    pub fn sums(&self, category: Category) -> &[f64] {
        self.sections
            .iter()
            .find(|s| s.category == category)
            .map_or(&[], |s| &s.sums)
    }

    /// Plain-text rendering.
    pub fn render(&self) -> String {
        let headers: Vec<String> = self
            .columns
            .iter()
            .map(|[a, b]| format!("{a} - {b}"))
            .collect();
        let first = self
            .sections
            .iter()
            .flat_map(|s| s.rows.iter().map(|r| r.attribute.as_str().len()))
            .max()
            .unwrap_or(0)
            .max(self.data_type.as_str().len())
            .max(3);
        let widths: Vec<usize> = headers.iter().map(|h| h.len().max(4)).collect();
        let mut out = String::new();
        out.push_str(&format!("{:<first$}", self.data_type.as_str()));
        for (h, w) in headers.iter().zip(&widths) {
            out.push_str(&format!(" | {h:>w$}"));
        }
        out.push('\n');
        let rule = "-".repeat(first + widths.iter().map(|w| w + 3).sum::<usize>());
        for section in &self.sections {
            out.push_str(&rule);
            out.push('\n');
            for row in &section.rows {
                out.push_str(&format!("{:<first$}", row.attribute.as_str()));
                for (s, w) in row.scores.iter().zip(&widths) {
                    out.push_str(&format!(" | {s:>w$}"));
                }
                out.push('\n');
            }
            out.push_str(&format!("{:<first$}", "SUM"));
            for (s, w) in section.sums.iter().zip(&widths) {
                out.push_str(&format!(" | {s:>w$}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Rank `candidates` against `reference` by feature similarity minus
/// vulnerability similarity, best first; ties go to the smaller id.
pub fn rank_candidates(
    matrix: &AssessmentMatrix,
    reference: &str,
    candidates: &[SourceId],
) -> Result<Vec<RankingEntry>, SimilarityError> {
    let mut entries = Vec::with_capacity(candidates.len());
    for c in candidates {
        if c == reference {
            return Err(SimilarityError::SameSource(c.clone()));
        }
        let lookup = |category| {
            matrix
                .pair(reference, c.as_str(), category)
                .map(|p| p.weighted_sum)
        };
        let (Some(feature), Some(vulnerability)) = (
            lookup(Category::DataFeatures),
            lookup(Category::SourceVulnerability),
        ) else {
            return match (
                matrix.data_type_of(reference),
                matrix.data_type_of(c.as_str()),
            ) {
                (Some(a), Some(b)) if a != b => Err(SimilarityError::DataTypeMismatch {
                    a: SourceId::new(reference),
                    a_type: a.clone(),
                    b: c.clone(),
                    b_type: b.clone(),
                }),
                (None, _) => Err(SimilarityError::UnknownSource(SourceId::new(reference))),
                _ => Err(SimilarityError::UnknownSource(c.clone())),
            };
        };
        entries.push(RankingEntry::new(c.clone(), feature, vulnerability));
    }
    entries.sort_by(RankingEntry::ranking_cmp);
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_study;
    use crate::taxonomy::RawSource;

    const TS: &str = "traffic-sensors";
    const FC: &str = "floating-car-data";
    const RS: &str = "remote-sensing";

    fn matrix() -> AssessmentMatrix {
        build_assessment_matrix(&case_study::registry(), Timestamp(0))
    }

    fn sum(m: &AssessmentMatrix, a: &str, b: &str, c: Category) -> f64 {
        m.pair(a, b, c).unwrap().weighted_sum
    }

    #[test]
    fn test_case_study_sums() {
        let m = matrix();
        let f = Category::DataFeatures;
        let v = Category::SourceVulnerability;
        assert_eq!(
            [sum(&m, TS, FC, f), sum(&m, TS, RS, f), sum(&m, FC, RS, f)],
            [5.0, 0.0, 1.0]
        );
        assert_eq!(
            [sum(&m, TS, FC, v), sum(&m, TS, RS, v), sum(&m, FC, RS, v)],
            [-1.0, -4.0, -3.0]
        );
    }

    #[test]
    fn test_case_study_row_scores() {
        // Columns: TS-FC, TS-RS, FC-RS.
        let expected: [(&str, Category, [i8; 3]); 10] = [
            ("environmental-impact", Category::DataFeatures, [0, 0, 0]),
            ("level-of-detail", Category::DataFeatures, [1, 1, 1]),
            ("delay", Category::DataFeatures, [1, 0, 0]),
            ("frequency", Category::DataFeatures, [1, -1, -1]),
            ("spatial-coverage", Category::DataFeatures, [1, 0, 1]),
            ("activation-delay", Category::DataFeatures, [1, 0, 0]),
            ("data-transfer", Category::SourceVulnerability, [-1, -1, 0]),
            (
                "sensor-location",
                Category::SourceVulnerability,
                [-1, -1, -1],
            ),
            (
                "dependency-on-ci",
                Category::SourceVulnerability,
                [1, -1, -1],
            ),
            (
                "autonomous-operation-time",
                Category::SourceVulnerability,
                [0, -1, -1],
            ),
        ];
        let m = matrix();
        for (attr, cat, row) in expected {
            let got: Vec<i8> = [(TS, FC), (TS, RS), (FC, RS)]
                .iter()
                .map(|(a, b)| m.pair(a, b, cat).unwrap().attribute_scores[attr].value())
                .collect();
            assert_eq!(got, row, "{attr}");
        }
    }

    #[test]
    fn test_similarity_direct() {
        let reg = case_study::registry();
        let s = similarity(&reg, TS, FC, Category::DataFeatures, reg.weights()).unwrap();
        assert_eq!(s.weighted_sum, 5.0);
        let s = similarity(&reg, TS, RS, Category::SourceVulnerability, reg.weights()).unwrap();
        assert_eq!(s.weighted_sum, -4.0);
        let rev = similarity(&reg, RS, TS, Category::SourceVulnerability, reg.weights()).unwrap();
        assert_eq!(rev.weighted_sum, s.weighted_sum);
    }

    fn with_duplicate(reg: &Registry, of: &str, id: &str) -> Registry {
        let raw = RawSource {
            id: SourceId::new(id),
            standard: false,
            ..reg.source(of).unwrap().to_raw()
        };
        reg.with_source(raw).unwrap()
    }

    #[test]
    fn test_similarity_of_duplicate_is_weight_total() {
        let reg = case_study::registry();
        let mut w = reg.weights().clone();
        w.set("delay", 2.5);
        let reg = with_duplicate(&reg.with_weights(w).unwrap(), TS, "ts-copy");
        for c in Category::ALL {
            let s = similarity(&reg, TS, "ts-copy", c, reg.weights()).unwrap();
            let total: f64 = reg
                .schema()
                .in_category(c)
                .map(|d| reg.weights().get(d.id.as_str()))
                .sum();
            assert_eq!(s.weighted_sum, total);
        }
    }

    #[test]
    fn test_similarity_errors() {
        let reg = case_study::registry();
        let w = reg.weights();
        assert!(matches!(
            similarity(&reg, TS, TS, Category::DataFeatures, w),
            Err(SimilarityError::SameSource(_))
        ));
        assert!(matches!(
            similarity(&reg, TS, "nope", Category::DataFeatures, w),
            Err(SimilarityError::UnknownSource(_))
        ));
        let mut bad = w.clone();
        bad.set("colour", 1.0);
        assert!(matches!(
            similarity(&reg, TS, FC, Category::DataFeatures, &bad),
            Err(SimilarityError::UnknownAttribute(_))
        ));
        let mut raw = reg.source(RS).unwrap().to_raw();
        raw.id = SourceId::new("river-gauge");
        raw.data_type = DataType::new("water-level");
        let reg = reg.with_source(raw).unwrap();
        assert!(matches!(
            similarity(&reg, TS, "river-gauge", Category::DataFeatures, w),
            Err(SimilarityError::DataTypeMismatch { .. })
        ));
    }

    #[test]
    fn test_override_takes_precedence() {
        let mut doc: serde_json::Value = serde_json::from_str(case_study::REGISTRY_JSON).unwrap();
        doc["overrides"] = serde_json::json!([
            { "source-a": RS, "source-b": TS, "attribute-id": "frequency", "score": 1 }
        ]);
        let reg = crate::taxonomy::load_registry(&doc.to_string()).unwrap();
        let m = build_assessment_matrix(&reg, Timestamp(0));
        let p = m.pair(TS, RS, Category::DataFeatures).unwrap();
        assert_eq!(p.attribute_scores["frequency"], Score::Similar);
        assert_eq!(p.weighted_sum, 2.0);
    }

    #[test]
    fn test_pair_counts() {
        assert_eq!(matrix().pairs.len(), 3 * 2);
        let reg = case_study::registry();
        let four = with_duplicate(&reg, FC, "fc-copy");
        let m = build_assessment_matrix(&four, Timestamp(0));
        assert_eq!(m.pairs.len(), 6 * 2);
        let single =
            Registry::new(reg.schema().clone(), vec![reg.source(TS).unwrap().clone()]).unwrap();
        assert!(build_assessment_matrix(&single, Timestamp(0))
            .pairs
            .is_empty());
    }

    #[test]
    fn test_lookup_is_symmetric() {
        let m = matrix();
        for c in Category::ALL {
            assert_eq!(m.pair(TS, RS, c), m.pair(RS, TS, c));
        }
        assert!(m.pair(TS, TS, Category::DataFeatures).is_none());
    }

    #[test]
    fn test_reweigh_autonomous_operation_time() {
        let m = matrix();
        let mut update = Weights::default();
        update.set("autonomous-operation-time", 3.0);
        let heavier = m.reweigh(&update).unwrap();
        assert_eq!(sum(&heavier, TS, RS, Category::SourceVulnerability), -6.0);
        // input unchanged
        assert_eq!(sum(&m, TS, RS, Category::SourceVulnerability), -4.0);
        assert_ne!(heavier.version(), m.version());
    }

    #[test]
    fn test_reweigh_identity_and_doubling() {
        let m = matrix();
        assert_eq!(m.reweigh(&m.weights).unwrap(), m);
        let doubled = m.reweigh(&m.weights.scaled(2.0)).unwrap();
        for (a, b) in m.pairs.iter().zip(&doubled.pairs) {
            assert_eq!(b.weighted_sum, 2.0 * a.weighted_sum);
            assert_eq!(a.attribute_scores, b.attribute_scores);
        }
    }

    #[test]
    fn test_reweigh_rejects_bad_weights() {
        let m = matrix();
        let mut unknown = Weights::default();
        unknown.set("colour", 1.0);
        assert!(matches!(
            m.reweigh(&unknown),
            Err(SimilarityError::UnknownAttribute(_))
        ));
        let mut negative = Weights::default();
        negative.set("delay", -1.0);
        assert!(matches!(
            m.reweigh(&negative),
            Err(SimilarityError::InvalidWeight { .. })
        ));
    }

    #[test]
    fn test_extend_matches_rebuild() {
        let reg = case_study::registry();
        let m = build_assessment_matrix(&reg, Timestamp(0));
        let bigger = with_duplicate(&reg, RS, "drone-imagery");
        let extended = m.extend_with(&bigger, "drone-imagery").unwrap();
        assert_eq!(extended.pairs.len(), m.pairs.len() + 3 * 2);
        assert_eq!(extended, build_assessment_matrix(&bigger, Timestamp(0)));
    }

    #[test]
    fn test_rank_case_study() {
        let m = matrix();
        let ranked = rank_candidates(&m, TS, &[SourceId::new(RS), SourceId::new(FC)]).unwrap();
        assert_eq!(ranked[0].candidate, FC);
        assert_eq!(ranked[0].rank_score, 6.0);
        assert_eq!(ranked[1].candidate, RS);
        assert_eq!(ranked[1].rank_score, 4.0);
        assert_eq!(ranked[1].feature_similarity, 0.0);
        assert_eq!(ranked[1].vulnerability_similarity, -4.0);
        assert!(rank_candidates(&m, TS, &[]).unwrap().is_empty());
    }

    #[test]
    fn test_rank_ties_by_id() {
        let reg = case_study::registry();
        let reg = with_duplicate(&reg, FC, "a-fc-twin");
        let m = build_assessment_matrix(&reg, Timestamp(0));
        let ranked =
            rank_candidates(&m, TS, &[SourceId::new(FC), SourceId::new("a-fc-twin")]).unwrap();
        assert_eq!(ranked[0].rank_score, ranked[1].rank_score);
        assert_eq!(ranked[0].candidate, "a-fc-twin");
    }

    #[test]
    fn test_rank_errors() {
        let m = matrix();
        assert!(matches!(
            rank_candidates(&m, TS, &[SourceId::new("drone-7")]),
            Err(SimilarityError::UnknownSource(_))
        ));
        assert!(matches!(
            rank_candidates(&m, TS, &[SourceId::new(TS)]),
            Err(SimilarityError::SameSource(_))
        ));
    }

    #[test]
    fn test_table_layout_and_csv() {
        let m = matrix();
        let table = m.table(&DataType::new("traffic"));
        assert_eq!(table.columns.len(), 3);
        assert_eq!(table.columns[0], [SourceId::new(TS), SourceId::new(FC)]);
        assert_eq!(table.sums(Category::DataFeatures), [5.0, 0.0, 1.0]);
        assert_eq!(
            table.sums(Category::SourceVulnerability),
            [-1.0, -4.0, -3.0]
        );
        let text = table.render();
        assert!(text.contains("traffic-sensors - floating-car-data"));
        assert_eq!(text.matches("SUM").count(), 2);
        let csv = m.to_csv();
        assert!(csv.starts_with("source-a,source-b,category,attribute,score,weight"));
        // 3 pairs x 11 attributes + header
        assert_eq!(csv.lines().count(), 1 + 3 * 11);
    }

    #[test]
    fn test_matrix_json_round_trip() {
        let m = matrix();
        let back: AssessmentMatrix =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
