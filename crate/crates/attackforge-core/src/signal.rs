//! Signals, samples, traces and historian CSV ingestion.
//!
//! A [`Trace`] is an immutable, 1 Hz time-indexed table of sensor and
//! actuator readings, optionally carrying a per-sample attack label
//! (0 normal / 1 attack). Traces are never mutated in place; every
//! derived trace is a new value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Short uppercase identifier for a sensor or actuator, e.g. `LIT101`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalTag(String);

impl SignalTag {
    pub fn new(name: &str) -> Result<Self, SignalError> {
        let ok = !name.is_empty()
            && name.chars().next().unwrap().is_ascii_alphabetic()
            && name.chars().all(|c| c.is_ascii_alphanumeric())
            && name.chars().any(|c| c.is_ascii_digit())
            && name == name.to_ascii_uppercase();
        if ok {
            Ok(SignalTag(name.to_string()))
        } else {
            Err(SignalError::BadTag(name.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for SignalTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Discrete actuator state codes: 1 is CLOSE/STOP, 2 is OPEN/START.
pub const STATE_CLOSE_STOP: i64 = 1;
pub const STATE_OPEN_START: i64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SignalKind {
    AnalogSensor { unit: String },
    DiscreteActuator { states: BTreeMap<i64, String> },
    AlarmFlag,
}

impl SignalKind {
    /// Standard two-state actuator (1 = CLOSE/STOP, 2 = OPEN/START).
    pub fn two_state_actuator() -> Self {
        let mut states = BTreeMap::new();
        states.insert(STATE_CLOSE_STOP, "CLOSE/STOP".to_string());
        states.insert(STATE_OPEN_START, "OPEN/START".to_string());
        SignalKind::DiscreteActuator { states }
    }

    pub fn is_analog(&self) -> bool {
        matches!(self, SignalKind::AnalogSensor { .. })
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, SignalKind::DiscreteActuator { .. })
    }

    pub fn state_codes(&self) -> Vec<i64> {
        match self {
            SignalKind::DiscreteActuator { states } => states.keys().copied().collect(),
            SignalKind::AlarmFlag => vec![0, 1],
            SignalKind::AnalogSensor { .. } => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub tag: SignalTag,
    pub kind: SignalKind,
    /// Physical limits in the signal's unit, when known.
    pub hard_bounds: Option<(f64, f64)>,
}

impl SignalSpec {
    pub fn new(tag: SignalTag, kind: SignalKind, hard_bounds: Option<(f64, f64)>) -> Result<Self, SignalError> {
        if let Some((lo, hi)) = hard_bounds {
            if !(lo < hi) {
                return Err(SignalError::BadBounds { tag: tag.to_string(), lo, hi });
            }
        }
        Ok(SignalSpec { tag, kind, hard_bounds })
    }
}

/// One reading per registered tag at integer second `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: u64,
    pub values: BTreeMap<SignalTag, f64>,
}

/// Registry of signal specs shared by traces and evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    specs: Vec<SignalSpec>,
}

impl Registry {
    pub fn new(specs: Vec<SignalSpec>) -> Result<Self, SignalError> {
        for (i, a) in specs.iter().enumerate() {
            if specs[..i].iter().any(|b| b.tag == a.tag) {
                return Err(SignalError::DuplicateTag(a.tag.to_string()));
            }
        }
        Ok(Registry { specs })
    }

    pub fn specs(&self) -> &[SignalSpec] {
        &self.specs
    }

    pub fn get(&self, tag: &SignalTag) -> Option<&SignalSpec> {
        self.specs.iter().find(|s| &s.tag == tag)
    }

    pub fn contains(&self, tag: &SignalTag) -> bool {
        self.get(tag).is_some()
    }

    pub fn tags(&self) -> impl Iterator<Item = &SignalTag> {
        self.specs.iter().map(|s| &s.tag)
    }
}

/// Immutable time-indexed table of readings at fixed 1 Hz cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    registry: Arc<Registry>,
    columns: BTreeMap<SignalTag, Vec<f64>>,
    labels: Vec<u8>,
}

/// Analog values are stored at micro-unit resolution so that emitted CSV
/// (at most 6 decimal places) reloads to the identical f64.
pub fn quantize(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn format_value(v: f64, discrete: bool) -> String {
    if discrete {
        format!("{}", v as i64)
    } else {
        format!("{}", v)
    }
}

impl Trace {
    pub fn from_columns(
        registry: Arc<Registry>,
        columns: BTreeMap<SignalTag, Vec<f64>>,
        labels: Vec<u8>,
    ) -> Result<Self, SignalError> {
        let mut len = None;
        for tag in registry.tags() {
            let col = columns
                .get(tag)
                .ok_or_else(|| SignalError::MissingColumn(tag.to_string()))?;
            match len {
                None => len = Some(col.len()),
                Some(n) if n != col.len() => {
                    return Err(SignalError::RaggedColumns(tag.to_string()))
                }
                _ => {}
            }
        }
        let len = len.unwrap_or(0);
        if labels.len() != len {
            return Err(SignalError::RaggedColumns("label".to_string()));
        }
        for spec in registry.specs() {
            if spec.kind.is_analog() {
                continue;
            }
            let codes = spec.kind.state_codes();
            for (row, &v) in columns[&spec.tag].iter().enumerate() {
                if v.fract() != 0.0 || !codes.contains(&(v as i64)) {
                    return Err(SignalError::NonIntegerActuatorValue {
                        row,
                        tag: spec.tag.to_string(),
                    });
                }
            }
        }
        Ok(Trace { registry, columns, labels })
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, tag: &SignalTag) -> Option<&[f64]> {
        self.columns.get(tag).map(|c| c.as_slice())
    }

    pub fn value(&self, tag: &SignalTag, t: usize) -> Option<f64> {
        self.columns.get(tag).and_then(|c| c.get(t)).copied()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sample(&self, t: usize) -> Option<Sample> {
        if t >= self.len() {
            return None;
        }
        let values = self
            .columns
            .iter()
            .map(|(tag, col)| (tag.clone(), col[t]))
            .collect();
        Some(Sample { t: t as u64, values })
    }

    /// Historian CSV emission: header row, 0-based integer timestamps,
    /// analog values at up to 6 decimal places, trailing label column.
    pub fn emit_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("Timestamp");
        for spec in self.registry.specs() {
            out.push(',');
            out.push_str(spec.tag.as_str());
        }
        out.push_str(",label\n");
        for t in 0..self.len() {
            let _ = write!(out, "{t}");
            for spec in self.registry.specs() {
                out.push(',');
                out.push_str(&format_value(self.columns[&spec.tag][t], !spec.kind.is_analog()));
            }
            let _ = write!(out, ",{}\n", self.labels[t]);
        }
        out
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("invalid signal tag {0:?}")]
    BadTag(String),
    #[error("bad hard bounds for {tag}: [{lo}, {hi}]")]
    BadBounds { tag: String, lo: f64, hi: f64 },
    #[error("duplicate tag {0} in registry")]
    DuplicateTag(String),
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("non-monotonic timestamp at row {0}")]
    NonMonotonicTimestamp(usize),
    #[error("non-integer actuator value at row {row}, tag {tag}")]
    NonIntegerActuatorValue { row: usize, tag: String },
    #[error("malformed number at row {row}, column {col}")]
    MalformedNumber { row: usize, col: String },
    #[error("columns have unequal lengths (at {0})")]
    RaggedColumns(String),
    #[error("trace of {len} samples cannot be split into {k} segments")]
    TooFewSamples { len: usize, k: usize },
    #[error("empty CSV source")]
    EmptySource,
}

/// Parse historian CSV from `source` against `registry`.
///
/// Timestamps are normalized to 0-based integer seconds and must advance
/// by exactly 1 per row. A trailing `label` column is parsed when present,
/// otherwise all labels are zero.
pub fn load_trace<R: Read>(source: R, registry: Arc<Registry>) -> Result<Trace, SignalError> {
    let mut lines = BufReader::new(source).lines();
    let header = lines
        .next()
        .ok_or(SignalError::EmptySource)?
        .map_err(|_| SignalError::EmptySource)?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.first() != Some(&"Timestamp") {
        return Err(SignalError::MissingColumn("Timestamp".to_string()));
    }
    let has_label = cols.last() == Some(&"label");
    let data_cols = &cols[1..if has_label { cols.len() - 1 } else { cols.len() }];
    let mut tag_index: Vec<(SignalTag, usize)> = Vec::new();
    for tag in registry.tags() {
        let idx = data_cols
            .iter()
            .position(|c| *c == tag.as_str())
            .ok_or_else(|| SignalError::MissingColumn(tag.to_string()))?;
        tag_index.push((tag.clone(), idx + 1));
    }

    let mut columns: BTreeMap<SignalTag, Vec<f64>> =
        registry.tags().map(|t| (t.clone(), Vec::new())).collect();
    let mut labels = Vec::new();
    let mut base: Option<i64> = None;
    for (row, line) in lines.enumerate() {
        let line = line.map_err(|_| SignalError::MalformedNumber {
            row,
            col: "Timestamp".to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        let ts: i64 = fields
            .first()
            .and_then(|f| f.trim().parse().ok())
            .ok_or(SignalError::MalformedNumber {
                row,
                col: "Timestamp".to_string(),
            })?;
        let base = *base.get_or_insert(ts);
        if ts - base != row as i64 {
            return Err(SignalError::NonMonotonicTimestamp(row));
        }
        for (tag, idx) in &tag_index {
            let raw = fields.get(*idx).map(|f| f.trim()).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| SignalError::MalformedNumber {
                row,
                col: tag.to_string(),
            })?;
            let spec = registry.get(tag).unwrap();
            if !spec.kind.is_analog() {
                let codes = spec.kind.state_codes();
                if v.fract() != 0.0 || !codes.contains(&(v as i64)) {
                    return Err(SignalError::NonIntegerActuatorValue {
                        row,
                        tag: tag.to_string(),
                    });
                }
            }
            columns.get_mut(tag).unwrap().push(v);
        }
        let label = if has_label {
            let raw = fields.last().map(|f| f.trim()).unwrap_or("");
            match raw {
                "0" => 0,
                "1" => 1,
                _ => {
                    return Err(SignalError::MalformedNumber {
                        row,
                        col: "label".to_string(),
                    })
                }
            }
        } else {
            0
        };
        labels.push(label);
    }
    Trace::from_columns(registry, columns, labels)
}

/// Split `trace` into `k` contiguous, order-preserving segments whose
/// lengths differ by at most one; earlier segments absorb the remainder.
pub fn slice_segments(trace: &Trace, k: usize) -> Result<Vec<Trace>, SignalError> {
    if k < 2 || trace.len() < k {
        return Err(SignalError::TooFewSamples {
            len: trace.len(),
            k,
        });
    }
    let base = trace.len() / k;
    let rem = trace.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < rem);
        let columns = trace
            .columns
            .iter()
            .map(|(tag, col)| (tag.clone(), col[start..start + len].to_vec()))
            .collect();
        let labels = trace.labels[start..start + len].to_vec();
        out.push(Trace::from_columns(trace.registry.clone(), columns, labels)?);
        start += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_registry() -> Arc<Registry> {
        Arc::new(
            Registry::new(vec![
                SignalSpec::new(
                    SignalTag::new("LIT101").unwrap(),
                    SignalKind::AnalogSensor { unit: "mm".to_string() },
                    Some((0.0, 1300.0)),
                )
                .unwrap(),
                SignalSpec::new(
                    SignalTag::new("MV101").unwrap(),
                    SignalKind::two_state_actuator(),
                    None,
                )
                .unwrap(),
            ])
            .unwrap(),
        )
    }

    fn trace_of(n: usize) -> Trace {
        let reg = small_registry();
        let mut columns = BTreeMap::new();
        columns.insert(
            SignalTag::new("LIT101").unwrap(),
            (0..n).map(|i| 500.0 + i as f64).collect(),
        );
        columns.insert(SignalTag::new("MV101").unwrap(), vec![2.0; n]);
        Trace::from_columns(reg, columns, vec![0; n]).unwrap()
    }

    #[test]
    fn tag_rules() {
        assert!(SignalTag::new("LIT101").is_ok());
        assert!(SignalTag::new("FIT201").is_ok());
        assert!(SignalTag::new("").is_err());
        assert!(SignalTag::new("lit101").is_err());
        assert!(SignalTag::new("101LIT").is_err());
        assert!(SignalTag::new("LIT").is_err());
    }

    #[test]
    fn load_three_rows() {
        let csv = "Timestamp,LIT101,MV101\n0,500.0,2\n1,520.1,2\n2,540.2,2\n";
        let trace = load_trace(csv.as_bytes(), small_registry()).unwrap();
        assert_eq!(trace.len(), 3);
        let lit = trace.column(&SignalTag::new("LIT101").unwrap()).unwrap();
        assert_eq!(lit, &[500.0, 520.1, 540.2]);
        assert_eq!(trace.labels(), &[0, 0, 0]);
    }

    #[test]
    fn missing_column_is_reported() {
        let reg = Arc::new(
            Registry::new(vec![SignalSpec::new(
                SignalTag::new("FIT201").unwrap(),
                SignalKind::AnalogSensor { unit: "m3/h".to_string() },
                None,
            )
            .unwrap()])
            .unwrap(),
        );
        let csv = "Timestamp,LIT101\n0,500.0\n";
        let err = load_trace(csv.as_bytes(), reg).unwrap_err();
        assert_eq!(err, SignalError::MissingColumn("FIT201".to_string()));
    }

    #[test]
    fn non_monotonic_timestamp() {
        let csv = "Timestamp,LIT101,MV101\n0,500.0,2\n2,501.0,2\n";
        let err = load_trace(csv.as_bytes(), small_registry()).unwrap_err();
        assert_eq!(err, SignalError::NonMonotonicTimestamp(1));
    }

    #[test]
    fn actuator_values_must_be_declared_codes() {
        let csv = "Timestamp,LIT101,MV101\n0,500.0,3\n";
        let err = load_trace(csv.as_bytes(), small_registry()).unwrap_err();
        assert!(matches!(err, SignalError::NonIntegerActuatorValue { row: 0, .. }));
        let csv = "Timestamp,LIT101,MV101\n0,500.0,1.5\n";
        let err = load_trace(csv.as_bytes(), small_registry()).unwrap_err();
        assert!(matches!(err, SignalError::NonIntegerActuatorValue { .. }));
    }

    #[test]
    fn label_column_roundtrip() {
        let csv = "Timestamp,LIT101,MV101,label\n0,500.0,2,0\n1,501.0,2,1\n";
        let trace = load_trace(csv.as_bytes(), small_registry()).unwrap();
        assert_eq!(trace.labels(), &[0, 1]);
        let again = load_trace(trace.emit_csv().as_bytes(), small_registry()).unwrap();
        assert_eq!(trace, again);
    }

    #[test]
    fn even_split() {
        let segs = slice_segments(&trace_of(10), 5).unwrap();
        assert_eq!(segs.len(), 5);
        assert!(segs.iter().all(|s| s.len() == 2));
    }

    #[test]
    fn remainder_goes_to_earlier_segments() {
        let segs = slice_segments(&trace_of(11), 5).unwrap();
        let lens: Vec<usize> = segs.iter().map(|s| s.len()).collect();
        assert_eq!(lens, vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn too_few_samples() {
        let err = slice_segments(&trace_of(4), 5).unwrap_err();
        assert_eq!(err, SignalError::TooFewSamples { len: 4, k: 5 });
    }

    #[test]
    fn quantize_keeps_six_decimals() {
        assert_eq!(quantize(123.4567894), 123.456789);
        assert_eq!(format!("{}", quantize(0.1 + 0.2)), "0.3");
    }
}
