//! Append-only scenario store.
//!
//! Records go to numbered segment files, one line per record:
//! `<crc32 hex> <json>`. A closed segment gets a sidecar `.idx` with its
//! sequence and event-time range; a missing index is rebuilt by scanning.
//! A torn final line (crash during append) is cut off on open, a bad line
//! anywhere else is reported as corruption.

use crate::ids::{DataType, SourceId};
use crate::monitor::{ObservationRecord, StateKind, StatusTransition};
use crate::replacement::ReplacementDecision;
use crate::system::OperatorCommand;
use crate::time::Timestamp;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt record in {segment} line {line}: {reason}")]
    Corrupt {
        segment: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid interval: {0} > {1}")]
    InvalidInterval(Timestamp, Timestamp),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    Observation,
    Transition,
    Decision,
    OperatorAction,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Observation => "observation",
            RecordKind::Transition => "transition",
            RecordKind::Decision => "decision",
            RecordKind::OperatorAction => "operator-action",
        }
    }
}

/// An operator command as it was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct OperatorAction {
    pub at: Timestamp,
    pub command: OperatorCommand,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "kebab-case")]
pub enum RecordBody {
    Observation(ObservationRecord),
    Transition(StatusTransition),
    Decision(ReplacementDecision),
    OperatorAction(OperatorAction),
}

impl RecordBody {
    pub fn kind(&self) -> RecordKind {
        match self {
            RecordBody::Observation(_) => RecordKind::Observation,
            RecordBody::Transition(_) => RecordKind::Transition,
            RecordBody::Decision(_) => RecordKind::Decision,
            RecordBody::OperatorAction(_) => RecordKind::OperatorAction,
        }
    }

    pub fn event_time(&self) -> Timestamp {
        match self {
            RecordBody::Observation(o) => o.event_time,
            RecordBody::Transition(t) => t.at,
            RecordBody::Decision(d) => d.decided_at,
            RecordBody::OperatorAction(a) => a.at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScenarioRecord {
    pub sequence: u64,
    pub event_time: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_type: Option<DataType>,
    #[serde(flatten)]
    pub body: RecordBody,
}

impl ScenarioRecord {
    pub fn kind(&self) -> RecordKind {
        self.body.kind()
    }

    pub fn source_id(&self) -> Option<&SourceId> {
        match &self.body {
            RecordBody::Observation(o) => Some(&o.source_id),
            RecordBody::Transition(t) => Some(&t.source_id),
            RecordBody::Decision(d) => d.chosen.as_ref(),
            RecordBody::OperatorAction(_) => None,
        }
    }

    fn replay_key(&self) -> (Timestamp, u64) {
        (self.event_time, self.sequence)
    }
}

/// Restricts a replay to some record kinds and one data type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct ReplayFilter {
    pub kinds: Vec<RecordKind>,
    pub data_type: Option<DataType>,
}

impl ReplayFilter {
    pub fn kind(kind: RecordKind) -> Self {
        Self {
            kinds: vec![kind],
            data_type: None,
        }
    }

    pub fn with_data_type(mut self, data_type: impl Into<DataType>) -> Self {
        self.data_type = Some(data_type.into());
        self
    }

    pub fn matches(&self, record: &ScenarioRecord) -> bool {
        (self.kinds.is_empty() || self.kinds.contains(&record.kind()))
            && self
                .data_type
                .as_ref()
                .is_none_or(|dt| record.data_type.as_ref() == Some(dt))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct StoreConfig {
    /// Records per segment before a new one is started.
    pub segment_records: usize,
    /// Close the open segment after this long without appends.
    pub idle_close_ms: Option<i64>,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            segment_records: 10_000,
            idle_close_ms: None,
        }
    }
}

/// Sidecar summary of one segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SegmentIndex {
    pub segment: u32,
    pub count: usize,
    pub first_sequence: Option<u64>,
    pub last_sequence: Option<u64>,
    pub min_event_time: Option<Timestamp>,
    pub max_event_time: Option<Timestamp>,
}

impl SegmentIndex {
    fn empty(segment: u32) -> Self {
        Self {
            segment,
            count: 0,
            first_sequence: None,
            last_sequence: None,
            min_event_time: None,
            max_event_time: None,
        }
    }

    fn add(&mut self, record: &ScenarioRecord) {
        self.count += 1;
        self.first_sequence.get_or_insert(record.sequence);
        self.last_sequence = Some(record.sequence);
        let t = record.event_time;
        self.min_event_time = Some(self.min_event_time.map_or(t, |m| m.min(t)));
        self.max_event_time = Some(self.max_event_time.map_or(t, |m| m.max(t)));
    }

    fn overlaps(&self, t0: Timestamp, t1: Timestamp) -> bool {
        match (self.min_event_time, self.max_event_time) {
            (Some(lo), Some(hi)) => lo <= t1 && hi >= t0,
            _ => false,
        }
    }
}

struct OpenSegment {
    file: File,
    index: SegmentIndex,
    last_append: Option<Timestamp>,
}

pub fn segment_path(dir: &Path, segment: u32) -> PathBuf {
    dir.join(format!("segment-{segment:08}.log"))
}

fn index_path(dir: &Path, segment: u32) -> PathBuf {
    dir.join(format!("segment-{segment:08}.idx"))
}

fn encode_line(record: &ScenarioRecord) -> String {
    let json = serde_json::to_string(record).expect("records serialize");
    format!("{:08x} {json}\n", crc32fast::hash(json.as_bytes()))
}

fn decode_line(line: &str) -> Result<ScenarioRecord, String> {
    let (crc, json) = line.split_once(' ').ok_or("missing checksum")?;
    let crc = u32::from_str_radix(crc, 16).map_err(|e| format!("bad checksum field: {e}"))?;
    if crc32fast::hash(json.as_bytes()) != crc {
        return Err("checksum mismatch".into());
    }
    serde_json::from_str(json).map_err(|e| e.to_string())
}

/// Segment numbers present in `dir`, ascending.
fn list_segments(dir: &Path) -> Result<Vec<u32>, StoreError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(n) = name
            .strip_prefix("segment-")
            .and_then(|s| s.strip_suffix(".log"))
            .and_then(|s| s.parse().ok())
        {
            out.push(n);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Records of one segment and the byte length of its valid prefix. A bad
/// line is tolerated only as the final line of the final segment.
fn scan_segment(path: &Path, last: bool) -> Result<(Vec<ScenarioRecord>, u64, bool), StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut valid = 0u64;
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            return Ok((records, valid, false));
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        match decode_line(buf.trim_end_matches('\n')) {
            Ok(record) if complete => {
                records.push(record);
                valid += n as u64;
            }
            result => {
                let reason = match result {
                    Err(e) => e,
                    Ok(_) => "incomplete line".into(),
                };
                let mut rest = String::new();
                reader.read_line(&mut rest).map_err(io_err(path))?;
                if last && rest.is_empty() {
                    return Ok((records, valid, true));
                }
                return Err(StoreError::Corrupt {
                    segment: path.to_path_buf(),
                    line: line_no,
                    reason,
                });
            }
        }
    }
}

fn write_index(dir: &Path, index: &SegmentIndex) -> Result<(), StoreError> {
    let path = index_path(dir, index.segment);
    let json = serde_json::to_string_pretty(index).expect("index serializes");
    fs::write(&path, json).map_err(io_err(&path))
}

fn read_index(dir: &Path, segment: u32) -> Option<SegmentIndex> {
    let text = fs::read_to_string(index_path(dir, segment)).ok()?;
    serde_json::from_str(&text).ok()
}

/// The scenario store. Keeps every record in memory; with a directory it
/// also appends each record durably to disk.
pub struct ScenarioStore {
    dir: Option<PathBuf>,
    config: StoreConfig,
    records: Vec<ScenarioRecord>,
    next_sequence: u64,
    next_segment: u32,
    open: Option<OpenSegment>,
}

impl std::fmt::Debug for ScenarioStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScenarioStore")
            .field("dir", &self.dir)
            .field("records", &self.records.len())
            .field("next_sequence", &self.next_sequence)
            .finish()
    }
}

impl ScenarioStore {
    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            config: StoreConfig::default(),
            records: Vec::new(),
            next_sequence: 1,
            next_segment: 0,
            open: None,
        }
    }

    /// Open or create a store in `dir`, loading all existing segments.
    /// Appends always go to a fresh segment.
    pub fn open(dir: impl AsRef<Path>, config: StoreConfig) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let segments = list_segments(&dir)?;
        let mut records = Vec::new();
        for (i, &segment) in segments.iter().enumerate() {
            let path = segment_path(&dir, segment);
            let last = i + 1 == segments.len();
            let (mut recs, valid_len, torn) = scan_segment(&path, last)?;
            if torn {
                let file = OpenOptions::new()
                    .write(true)
                    .open(&path)
                    .map_err(io_err(&path))?;
                file.set_len(valid_len).map_err(io_err(&path))?;
            }
            if torn || read_index(&dir, segment).is_none() {
                let mut index = SegmentIndex::empty(segment);
                recs.iter().for_each(|r| index.add(r));
                write_index(&dir, &index)?;
            }
            records.append(&mut recs);
        }
        let next_sequence = records.last().map_or(1, |r| r.sequence + 1);
        Ok(Self {
            dir: Some(dir),
            config,
            records,
            next_sequence,
            next_segment: segments.last().map_or(0, |s| s + 1),
            open: None,
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All records in arrival order.
    pub fn records(&self) -> &[ScenarioRecord] {
        &self.records
    }

    pub fn last_sequence(&self) -> u64 {
        self.next_sequence - 1
    }

    /// Append a record and return its sequence number.
    pub fn append(
        &mut self,
        data_type: Option<DataType>,
        body: RecordBody,
    ) -> Result<u64, StoreError> {
        let record = ScenarioRecord {
            sequence: self.next_sequence,
            event_time: body.event_time(),
            data_type,
            body,
        };
        if let Some(dir) = self.dir.clone() {
            if self
                .open
                .as_ref()
                .is_some_and(|o| o.index.count >= self.config.segment_records.max(1))
            {
                self.close_segment()?;
            }
            if self.open.is_none() {
                let segment = self.next_segment;
                let path = segment_path(&dir, segment);
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(io_err(&path))?;
                self.next_segment += 1;
                self.open = Some(OpenSegment {
                    file,
                    index: SegmentIndex::empty(segment),
                    last_append: None,
                });
            }
            let open = self.open.as_mut().expect("segment is open");
            let path = segment_path(&dir, open.index.segment);
            open.file
                .write_all(encode_line(&record).as_bytes())
                .map_err(io_err(&path))?;
            open.index.add(&record);
            open.last_append = Some(record.event_time);
        }
        self.next_sequence += 1;
        let sequence = record.sequence;
        self.records.push(record);
        Ok(sequence)
    }

    /// Finish the open segment and write its index. The next append
    /// starts a new segment.
    pub fn close_segment(&mut self) -> Result<(), StoreError> {
        if let (Some(dir), Some(open)) = (self.dir.as_ref(), self.open.take()) {
            let path = segment_path(dir, open.index.segment);
            open.file.sync_all().map_err(io_err(&path))?;
            write_index(dir, &open.index)?;
        }
        Ok(())
    }

    /// Close the open segment when nothing was appended for the configured
    /// idle time. Returns whether a segment was closed.
    pub fn close_if_idle(&mut self, now: Timestamp) -> Result<bool, StoreError> {
        let Some(idle) = self.config.idle_close_ms else {
            return Ok(false);
        };
        let due = self
            .open
            .as_ref()
            .and_then(|o| o.last_append)
            .is_some_and(|t| now - t >= idle);
        if due {
            self.close_segment()?;
        }
        Ok(due)
    }

    /// Records with event time in `[t0, t1]` matching `filter`, ordered by
    /// event time then sequence number.
    pub fn replay(
        &self,
        t0: Timestamp,
        t1: Timestamp,
        filter: &ReplayFilter,
    ) -> Result<Vec<ScenarioRecord>, StoreError> {
        if t0 > t1 {
            return Err(StoreError::InvalidInterval(t0, t1));
        }
        Ok(sorted_selection(self.records.iter(), t0, t1, filter))
    }

    /// Every record, replay-ordered.
    pub fn replay_all(&self) -> Vec<ScenarioRecord> {
        sorted_selection(
            self.records.iter(),
            Timestamp::MIN,
            Timestamp::MAX,
            &ReplayFilter::default(),
        )
    }

    /// Decisions with a sequence number above `since`, in arrival order.
    pub fn decisions_since(&self, since: u64) -> impl Iterator<Item = (u64, &ReplacementDecision)> {
        let start = self.records.partition_point(|r| r.sequence <= since);
        self.records[start..].iter().filter_map(|r| match &r.body {
            RecordBody::Decision(d) => Some((r.sequence, d)),
            _ => None,
        })
    }

    /// Per-source state spans over `[t0, t1]` for one data type, derived
    /// from transition records.
    pub fn availability_timeline(
        &self,
        t0: Timestamp,
        t1: Timestamp,
        data_type: &DataType,
    ) -> Result<BTreeMap<SourceId, Vec<StateSpan>>, StoreError> {
        if t0 > t1 {
            return Err(StoreError::InvalidInterval(t0, t1));
        }
        let mut by_source: BTreeMap<SourceId, Vec<&StatusTransition>> = BTreeMap::new();
        let mut ordered: Vec<&ScenarioRecord> = self.records.iter().collect();
        ordered.sort_by_key(|r| r.replay_key());
        for r in ordered {
            if let RecordBody::Transition(t) = &r.body {
                if &t.data_type == data_type {
                    by_source.entry(t.source_id.clone()).or_default().push(t);
                }
            }
        }
        Ok(by_source
            .into_iter()
            .map(|(id, transitions)| (id, spans(&transitions, t0, t1)))
            .collect())
    }
}

impl Drop for ScenarioStore {
    fn drop(&mut self) {
        let _ = self.close_segment();
    }
}

fn sorted_selection<'a>(
    records: impl Iterator<Item = &'a ScenarioRecord>,
    t0: Timestamp,
    t1: Timestamp,
    filter: &ReplayFilter,
) -> Vec<ScenarioRecord> {
    let mut out: Vec<ScenarioRecord> = records
        .filter(|r| r.event_time >= t0 && r.event_time <= t1 && filter.matches(r))
        .cloned()
        .collect();
    out.sort_by_key(ScenarioRecord::replay_key);
    out
}

/// One stretch of time in a single state. `state` is `None` before the
/// first known transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StateSpan {
    pub state: Option<StateKind>,
    pub from: Timestamp,
    pub to: Timestamp,
}

impl StateSpan {
    pub fn label(&self) -> &'static str {
        self.state.map_or("unknown", StateKind::as_str)
    }

    pub fn duration_ms(&self) -> i64 {
        self.to - self.from
    }
}

fn spans(transitions: &[&StatusTransition], t0: Timestamp, t1: Timestamp) -> Vec<StateSpan> {
    let initial = transitions
        .iter()
        .take_while(|t| t.at <= t0)
        .last()
        .map(|t| t.to);
    let mut out = vec![StateSpan {
        state: initial,
        from: t0,
        to: t1,
    }];
    for t in transitions.iter().filter(|t| t.at > t0 && t.at < t1) {
        let current = out.last_mut().expect("at least one span");
        if current.state == Some(t.to) {
            continue;
        }
        if current.from == t.at {
            current.state = Some(t.to);
            continue;
        }
        current.to = t.at;
        out.push(StateSpan {
            state: Some(t.to),
            from: t.at,
            to: t1,
        });
    }
    out
}

/// Read records in `[t0, t1]` straight from a store directory without
/// opening it for appends. Closed segments whose index lies outside the
/// interval are skipped.
pub fn read_interval(
    dir: impl AsRef<Path>,
    t0: Timestamp,
    t1: Timestamp,
    filter: &ReplayFilter,
) -> Result<Vec<ScenarioRecord>, StoreError> {
    if t0 > t1 {
        return Err(StoreError::InvalidInterval(t0, t1));
    }
    let dir = dir.as_ref();
    let segments = list_segments(dir)?;
    let mut records = Vec::new();
    for (i, &segment) in segments.iter().enumerate() {
        if read_index(dir, segment).is_some_and(|idx| !idx.overlaps(t0, t1)) {
            continue;
        }
        let last = i + 1 == segments.len();
        let (recs, _, _) = scan_segment(&segment_path(dir, segment), last)?;
        records.extend(recs);
    }
    Ok(sorted_selection(records.iter(), t0, t1, filter))
}

/// Write records as CSV: one row per record with the body as JSON.
pub fn export_csv<W: io::Write>(records: &[ScenarioRecord], out: W) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "sequence",
        "event-time",
        "kind",
        "data-type",
        "source",
        "body",
    ])?;
    for r in records {
        let body = match &r.body {
            RecordBody::Observation(b) => serde_json::to_string(b),
            RecordBody::Transition(b) => serde_json::to_string(b),
            RecordBody::Decision(b) => serde_json::to_string(b),
            RecordBody::OperatorAction(b) => serde_json::to_string(b),
        }
        .expect("records serialize");
        w.write_record([
            r.sequence.to_string(),
            r.event_time.as_millis().to_string(),
            r.kind().as_str().to_string(),
            r.data_type
                .as_ref()
                .map_or("", DataType::as_str)
                .to_string(),
            r.source_id().map_or("", SourceId::as_str).to_string(),
            body,
        ])?;
    }
    w.flush().map_err(|e| StoreError::Csv(e.into()))?;
    Ok(())
}
