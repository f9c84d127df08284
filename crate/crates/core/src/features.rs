//! Keystroke log parsing and feature extraction.
//!
//! A session is a sequence of press/release events. Two kinds of features are
//! measured from it: keyhold latencies (release minus press of the same key
//! instance) and digraph latencies (press-to-press time of two consecutive
//! keydowns forming a given letter pair). Every measurement is anchored at the
//! timestamp of its first press, which decides the time window it belongs to.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default number of discretization bits.
pub const DEFAULT_BITS: u32 = 8;
/// Largest supported discretization width.
pub const MAX_BITS: u32 = 32;
/// Latencies strictly above this many milliseconds are outliers.
pub const DEFAULT_OUTLIER_MS: f64 = 500.0;

const DEFAULT_KEYHOLDS: [&str; 23] = [
    "Spacebar", "E", "O", "I", "A", "S", "H", "N", "R", "T", "L", "D", "U", "Y", "W", "G", "P",
    "C", "M", "B", "F", "V", "K",
];
const DEFAULT_DIGRAPHS: [&str; 9] = ["HE", "IN", "TH", "ER", "AN", "RE", "EN", "ND", "HA"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Press,
    Release,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeystrokeEvent {
    /// Milliseconds since session start.
    pub timestamp: u64,
    pub key: String,
    pub action: Action,
}

impl KeystrokeEvent {
    pub fn press(key: &str, timestamp: u64) -> Self {
        Self { timestamp, key: normalize_key(key), action: Action::Press }
    }

    pub fn release(key: &str, timestamp: u64) -> Self {
        Self { timestamp, key: normalize_key(key), action: Action::Release }
    }
}

/// Maps a raw key token to its label: letters are uppercased and the space
/// bar is always `Spacebar`.
pub fn normalize_key(raw: &str) -> String {
    let trimmed = raw.trim();
    if raw == " " || trimmed.eq_ignore_ascii_case("space") || trimmed.eq_ignore_ascii_case("spacebar")
    {
        return "Spacebar".to_string();
    }
    trimmed.to_uppercase()
}

/// Anomalies found while parsing a log. They never abort parsing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    /// A release without a preceding unmatched press; the event is dropped.
    OrphanRelease { line: usize, key: String, timestamp: u64 },
    /// A press that is never released; the event is kept.
    UnmatchedPress { line: usize, key: String, timestamp: u64 },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeystrokeLog {
    pub events: Vec<KeystrokeEvent>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses the `timestamp_ms,key,action` CSV format.
///
/// Lines starting with `#` and blank lines are skipped. Events are returned in
/// timestamp order (stable for equal timestamps).
pub fn parse_keystroke_log(raw: &str) -> Result<KeystrokeLog> {
    let mut parsed: Vec<(usize, KeystrokeEvent)> = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let ts: i64 = fields[0].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad timestamp {:?}", fields[0]),
        })?;
        if ts < 0 {
            return Err(Error::Validation(format!("line {line_no}: negative timestamp {ts}")));
        }
        if fields[1].trim().is_empty() && fields[1] != " " {
            return Err(Error::Parse { line: line_no, msg: "empty key".into() });
        }
        let action = match fields[2].trim().to_ascii_lowercase().as_str() {
            "down" => Action::Press,
            "up" => Action::Release,
            other => {
                return Err(Error::Parse { line: line_no, msg: format!("bad action {other:?}") })
            }
        };
        parsed.push((
            line_no,
            KeystrokeEvent { timestamp: ts as u64, key: normalize_key(fields[1]), action },
        ));
    }
    parsed.sort_by_key(|(_, e)| e.timestamp);

    let mut open: HashMap<String, VecDeque<(usize, u64)>> = HashMap::new();
    let mut log = KeystrokeLog::default();
    for (line, ev) in parsed {
        match ev.action {
            Action::Press => {
                open.entry(ev.key.clone()).or_default().push_back((line, ev.timestamp));
                log.events.push(ev);
            }
            Action::Release => match open.get_mut(&ev.key).and_then(|q| q.pop_front()) {
                Some(_) => log.events.push(ev),
                None => log.diagnostics.push(Diagnostic::OrphanRelease {
                    line,
                    key: ev.key,
                    timestamp: ev.timestamp,
                }),
            },
        }
    }
    let mut unmatched: Vec<Diagnostic> = open
        .into_iter()
        .flat_map(|(key, q)| {
            q.into_iter().map(move |(line, timestamp)| Diagnostic::UnmatchedPress {
                line,
                key: key.clone(),
                timestamp,
            })
        })
        .collect();
    unmatched.sort_by_key(|d| match d {
        Diagnostic::UnmatchedPress { line, .. } | Diagnostic::OrphanRelease { line, .. } => *line,
    });
    log.diagnostics.extend(unmatched);
    Ok(log)
}

/// Renders events in the CSV log format accepted by [`parse_keystroke_log`].
pub fn write_keystroke_log(events: &[KeystrokeEvent]) -> String {
    let mut out = String::with_capacity(events.len() * 12 + 32);
    out.push_str("# timestamp_ms,key,action\n");
    for e in events {
        let action = match e.action {
            Action::Press => "down",
            Action::Release => "up",
        };
        out.push_str(&format!("{},{},{}\n", e.timestamp, e.key, action));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureSpec {
    Keyhold { key: String },
    Digraph { first: String, second: String },
}

impl FeatureSpec {
    pub fn keyhold(key: &str) -> Self {
        FeatureSpec::Keyhold { key: normalize_key(key) }
    }

    pub fn digraph(first: &str, second: &str) -> Self {
        FeatureSpec::Digraph { first: normalize_key(first), second: normalize_key(second) }
    }

    /// Parses a label: a single key (or `Spacebar`) is a keyhold, two
    /// characters are a digraph.
    pub fn parse(label: &str) -> Result<Self> {
        let label = label.trim();
        let chars: Vec<char> = label.chars().collect();
        if label.eq_ignore_ascii_case("spacebar") || label.eq_ignore_ascii_case("space") {
            return Ok(Self::keyhold("Spacebar"));
        }
        match chars.len() {
            1 => Ok(Self::keyhold(label)),
            2 => Ok(Self::digraph(&chars[0].to_string(), &chars[1].to_string())),
            _ => Err(Error::Validation(format!("bad feature label {label:?}"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FeatureSpec::Keyhold { key } => key.clone(),
            FeatureSpec::Digraph { first, second } => format!("{first}{second}"),
        }
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn default_keyholds() -> Vec<FeatureSpec> {
    DEFAULT_KEYHOLDS.iter().map(|k| FeatureSpec::keyhold(k)).collect()
}

pub fn default_digraphs() -> Vec<FeatureSpec> {
    DEFAULT_DIGRAPHS.iter().map(|d| FeatureSpec::parse(d).expect("static label")).collect()
}

/// The 23 keyhold features followed by the 9 digraph features.
pub fn default_features() -> Vec<FeatureSpec> {
    let mut all = default_keyholds();
    all.extend(default_digraphs());
    all
}

/// Parses a newline-separated feature list. Duplicates are rejected.
pub fn parse_feature_spec(text: &str) -> Result<Vec<FeatureSpec>> {
    let mut out: Vec<FeatureSpec> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let spec = FeatureSpec::parse(line)?;
        if out.contains(&spec) {
            return Err(Error::Validation(format!("duplicate feature {spec}")));
        }
        out.push(spec);
    }
    Ok(out)
}

/// Half-open time interval `[start_ms, end_ms)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Window {
    pub fn new(start_ms: u64, end_ms: u64) -> Self {
        Self { start_ms, end_ms }
    }

    pub fn all() -> Self {
        Self { start_ms: 0, end_ms: u64::MAX }
    }

    pub fn contains(&self, t: u64) -> bool {
        t >= self.start_ms && t < self.end_ms
    }
}

/// Consecutive full slices of `slice_ms` covering `[0, end_ms)`. A trailing
/// partial slice is dropped.
pub fn time_slices(end_ms: u64, slice_ms: u64) -> Vec<Window> {
    assert!(slice_ms > 0, "slice length must be positive");
    (0..end_ms / slice_ms).map(|k| Window::new(k * slice_ms, (k + 1) * slice_ms)).collect()
}

/// Session end as an exclusive bound: one past the last timestamp.
pub fn session_end(events: &[KeystrokeEvent]) -> u64 {
    events.iter().map(|e| e.timestamp).max().map_or(0, |t| t + 1)
}

/// Per-feature latency lists in milliseconds, aligned with `features`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub features: Vec<FeatureSpec>,
    pub values: Vec<Vec<f64>>,
    /// Set once outliers have been removed.
    pub cleaned: bool,
}

impl RawSample {
    pub fn empty(features: &[FeatureSpec]) -> Self {
        Self { features: features.to_vec(), values: vec![Vec::new(); features.len()], cleaned: false }
    }

    pub fn counts(&self) -> Vec<usize> {
        self.values.iter().map(Vec::len).collect()
    }

    /// True when every feature has at least `min_samples` observations.
    pub fn is_complete(&self, min_samples: usize) -> bool {
        self.values.iter().all(|v| v.len() >= min_samples)
    }

    /// Per-feature mean of the discretized observations, or `None` when some
    /// feature is empty.
    pub fn discretized_means(&self, d: u32, ranges: &[FeatureRange]) -> Result<Option<Vec<f64>>> {
        check_ranges(ranges, self.values.len())?;
        let mut out = Vec::with_capacity(self.values.len());
        for (vals, r) in self.values.iter().zip(ranges) {
            if vals.is_empty() {
                return Ok(None);
            }
            let mut sum = 0.0;
            for &x in vals {
                sum += discretize(x, d, r.min, r.max)? as f64;
            }
            out.push(sum / vals.len() as f64);
        }
        Ok(Some(out))
    }
}

/// Every measured latency of a session with its anchor timestamp.
#[derive(Clone, Debug)]
pub struct Observations {
    pub features: Vec<FeatureSpec>,
    series: Vec<Vec<(u64, f64)>>,
    end_ms: u64,
}

impl Observations {
    pub fn end_ms(&self) -> u64 {
        self.end_ms
    }

    pub fn window(&self, window: Window) -> RawSample {
        let values = self
            .series
            .iter()
            .map(|s| s.iter().filter(|(t, _)| window.contains(*t)).map(|&(_, v)| v).collect())
            .collect();
        RawSample { features: self.features.clone(), values, cleaned: false }
    }

    pub fn slices(&self, slice_ms: u64) -> Vec<RawSample> {
        time_slices(self.end_ms, slice_ms).into_iter().map(|w| self.window(w)).collect()
    }
}

/// Measures every configured feature over the whole session.
pub fn observe(events: &[KeystrokeEvent], spec: &[FeatureSpec]) -> Observations {
    let mut keyhold_idx: HashMap<&str, usize> = HashMap::new();
    let mut digraph_idx: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, f) in spec.iter().enumerate() {
        match f {
            FeatureSpec::Keyhold { key } => {
                keyhold_idx.insert(key.as_str(), i);
            }
            FeatureSpec::Digraph { first, second } => {
                digraph_idx.insert((first.as_str(), second.as_str()), i);
            }
        }
    }

    let mut series: Vec<Vec<(u64, f64)>> = vec![Vec::new(); spec.len()];
    let mut open: HashMap<&str, VecDeque<u64>> = HashMap::new();
    let mut last_press: Option<(&str, u64)> = None;
    for e in events {
        match e.action {
            Action::Press => {
                open.entry(e.key.as_str()).or_default().push_back(e.timestamp);
                if let Some((prev, t0)) = last_press {
                    if let Some(&i) = digraph_idx.get(&(prev, e.key.as_str())) {
                        series[i].push((t0, (e.timestamp - t0) as f64));
                    }
                }
                last_press = Some((e.key.as_str(), e.timestamp));
            }
            Action::Release => {
                if let Some(t0) = open.get_mut(e.key.as_str()).and_then(|q| q.pop_front()) {
                    if let Some(&i) = keyhold_idx.get(e.key.as_str()) {
                        series[i].push((t0, (e.timestamp - t0) as f64));
                    }
                }
            }
        }
    }
    for s in &mut series {
        s.sort_by_key(|&(t, _)| t);
    }
    Observations { features: spec.to_vec(), series, end_ms: session_end(events) }
}

/// Latencies of every feature whose anchor press falls inside `window`.
pub fn extract_features(
    events: &[KeystrokeEvent],
    spec: &[FeatureSpec],
    window: Window,
) -> RawSample {
    observe(events, spec).window(window)
}

/// Removes every latency strictly greater than `threshold_ms`.
pub fn clean_outliers(sample: &RawSample, threshold_ms: f64) -> RawSample {
    assert!(threshold_ms > 0.0, "outlier threshold must be positive");
    RawSample {
        features: sample.features.clone(),
        values: sample
            .values
            .iter()
            .map(|v| v.iter().copied().filter(|&x| x <= threshold_ms).collect())
            .collect(),
        cleaned: true,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    /// `[0, 500]` ms, the range used for every keystroke feature.
    pub const fn keystroke() -> Self {
        Self { min: 0.0, max: DEFAULT_OUTLIER_MS }
    }

    pub fn uniform(n: usize) -> Vec<Self> {
        vec![Self::keystroke(); n]
    }
}

fn check_ranges(ranges: &[FeatureRange], n: usize) -> Result<()> {
    if ranges.len() != n {
        return Err(Error::Dimension { expected: n, got: ranges.len() });
    }
    Ok(())
}

/// Maps `x` onto `2^d` cells spanning `[min, max]`, clamping outside values.
pub fn discretize(x: f64, d: u32, min: f64, max: f64) -> Result<u32> {
    if !(1..=MAX_BITS).contains(&d) {
        return Err(Error::Param(format!("bit width {d} not in 1..={MAX_BITS}")));
    }
    if !(max > min) || !min.is_finite() || !max.is_finite() {
        return Err(Error::Param(format!("empty range [{min}, {max}]")));
    }
    if x.is_nan() {
        return Err(Error::Param("NaN latency".into()));
    }
    let top = ((1u64 << d) - 1) as f64;
    if x >= max {
        return Ok(top as u32);
    }
    if x <= min {
        return Ok(0);
    }
    let cell = (top * ((x - min) / (max - min))).floor();
    Ok(cell.clamp(0.0, top) as u32)
}

/// Ordered discretized features, each in `[0, 2^d)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<u32>,
    pub d: u32,
}

impl FeatureVector {
    pub fn new(values: Vec<u32>, d: u32) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&d) {
            return Err(Error::Param(format!("bit width {d} not in 1..={MAX_BITS}")));
        }
        if let Some(&v) = values.iter().find(|&&v| (v as u64) >> d != 0) {
            return Err(Error::OutOfRange { value: v as u64, d });
        }
        Ok(Self { values, d })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rounds half-up and clamps real-valued cells into a vector.
    pub fn from_reals(values: &[f64], d: u32) -> Result<Self> {
        let top = ((1u64 << d) - 1) as f64;
        Self::new(values.iter().map(|&x| round_half_up(x).clamp(0.0, top) as u32).collect(), d)
    }
}

pub(crate) fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Per-user template: rounded per-feature mean and population variance of
/// the discretized observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub mean: FeatureVector,
    pub mean_exact: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn build_template(samples: &[RawSample], d: u32, ranges: &[FeatureRange]) -> Result<Template> {
    let first = samples.first().ok_or_else(|| Error::Validation("no samples".into()))?;
    let n = first.features.len();
    check_ranges(ranges, n)?;
    let mut mean_exact = Vec::with_capacity(n);
    let mut variance = Vec::with_capacity(n);
    for i in 0..n {
        let mut cells = Vec::new();
        for s in samples {
            if s.values.len() != n {
                return Err(Error::Dimension { expected: n, got: s.values.len() });
            }
            for &x in &s.values[i] {
                cells.push(discretize(x, d, ranges[i].min, ranges[i].max)? as f64);
            }
        }
        if cells.is_empty() {
            return Err(Error::Availability(first.features[i].label()));
        }
        let m = cells.len() as f64;
        let mu = cells.iter().sum::<f64>() / m;
        let var = cells.iter().map(|c| (c - mu) * (c - mu)).sum::<f64>() / m;
        mean_exact.push(mu);
        variance.push(var);
    }
    Ok(Template { mean: FeatureVector::from_reals(&mean_exact, d)?, mean_exact, variance })
}

/// Fraction of full, non-overlapping slices in which every feature has at
/// least `min_samples` observations. Zero when the session is shorter than
/// one slice.
pub fn availability(
    events: &[KeystrokeEvent],
    spec: &[FeatureSpec],
    slice_minutes: f64,
    min_samples: usize,
) -> f64 {
    assert!(slice_minutes > 0.0 && min_samples >= 1);
    let slice_ms = (slice_minutes * 60_000.0).round() as u64;
    let slices = observe(events, spec).slices(slice_ms);
    if slices.is_empty() {
        return 0.0;
    }
    slices.iter().filter(|s| s.is_complete(min_samples)).count() as f64 / slices.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_press_release_pair() {
        let log = parse_keystroke_log("0,E,down\n94,E,up").unwrap();
        assert_eq!(log.events, vec![KeystrokeEvent::press("E", 0), KeystrokeEvent::release("E", 94)]);
        assert!(log.diagnostics.is_empty());
    }

    #[test]
    fn empty_log_is_empty() {
        let log = parse_keystroke_log("").unwrap();
        assert!(log.events.is_empty() && log.diagnostics.is_empty());
    }

    #[test]
    fn orphan_release_is_diagnosed() {
        let log = parse_keystroke_log("10,E,up").unwrap();
        assert!(log.events.is_empty());
        assert_eq!(
            log.diagnostics,
            vec![Diagnostic::OrphanRelease { line: 1, key: "E".into(), timestamp: 10 }]
        );
    }

    #[test]
    fn unmatched_press_is_kept_and_flagged() {
        let log = parse_keystroke_log("# header\n5,a,down\n").unwrap();
        assert_eq!(log.events, vec![KeystrokeEvent::press("A", 5)]);
        assert_eq!(
            log.diagnostics,
            vec![Diagnostic::UnmatchedPress { line: 2, key: "A".into(), timestamp: 5 }]
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse_keystroke_log("0,E,down\n1,E\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_keystroke_log("0,E,sideways"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn negative_timestamp_is_validation_error() {
        assert!(matches!(parse_keystroke_log("-3,E,down"), Err(Error::Validation(_))));
    }

    #[test]
    fn out_of_order_lines_are_sorted() {
        let log = parse_keystroke_log("50,E,up\n0,E,down\n").unwrap();
        assert_eq!(log.events[0].timestamp, 0);
        assert!(log.diagnostics.is_empty());
    }

    #[test]
    fn space_labels_normalize() {
        let log = parse_keystroke_log("0,space,down\n80, ,up").unwrap();
        assert_eq!(log.events[0].key, "Spacebar");
        assert_eq!(log.events[1].key, "Spacebar");
    }

    #[test]
    fn written_log_parses_back() {
        let events = vec![
            KeystrokeEvent::press("T", 0),
            KeystrokeEvent::press("H", 120),
            KeystrokeEvent::release("T", 130),
            KeystrokeEvent::release("H", 200),
        ];
        let log = parse_keystroke_log(&write_keystroke_log(&events)).unwrap();
        assert_eq!(log.events, events);
    }

    #[test]
    fn keyhold_and_digraph_definitions() {
        let spec = vec![FeatureSpec::keyhold("E"), FeatureSpec::digraph("T", "H")];
        let ev = vec![KeystrokeEvent::press("E", 0), KeystrokeEvent::release("E", 94)];
        let s = extract_features(&ev, &spec, Window::all());
        assert_eq!(s.values, vec![vec![94.0], vec![]]);

        let ev = vec![KeystrokeEvent::press("T", 0), KeystrokeEvent::press("H", 120)];
        let s = extract_features(&ev, &spec, Window::all());
        assert_eq!(s.values, vec![vec![], vec![120.0]]);
    }

    #[test]
    fn digraph_needs_consecutive_presses() {
        let spec = vec![FeatureSpec::digraph("T", "H")];
        let ev = vec![
            KeystrokeEvent::press("T", 0),
            KeystrokeEvent::press("X", 50),
            KeystrokeEvent::press("H", 120),
        ];
        assert!(extract_features(&ev, &spec, Window::all()).values[0].is_empty());
    }

    #[test]
    fn no_pairs_gives_all_empty_sample() {
        let spec = default_features();
        let ev = vec![KeystrokeEvent::press("Q", 0)];
        let s = extract_features(&ev, &spec, Window::all());
        assert!(s.values.iter().all(Vec::is_empty));
        assert_eq!(s.values.len(), 32);
    }

    #[test]
    fn window_uses_anchor_press() {
        let spec = vec![FeatureSpec::keyhold("E")];
        let ev = vec![KeystrokeEvent::press("E", 90), KeystrokeEvent::release("E", 150)];
        assert_eq!(extract_features(&ev, &spec, Window::new(0, 100)).values[0], vec![60.0]);
        assert!(extract_features(&ev, &spec, Window::new(100, 200)).values[0].is_empty());
    }

    #[test]
    fn outlier_rule_is_strict() {
        let spec = vec![FeatureSpec::keyhold("E")];
        let mk = |v: Vec<f64>| RawSample { features: spec.clone(), values: vec![v], cleaned: false };
        assert_eq!(clean_outliers(&mk(vec![94.0, 620.0]), 500.0).values[0], vec![94.0]);
        assert!(clean_outliers(&mk(vec![]), 500.0).values[0].is_empty());
        assert_eq!(clean_outliers(&mk(vec![500.0]), 500.0).values[0], vec![500.0]);
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize(0.0, 8, 0.0, 500.0).unwrap(), 0);
        assert_eq!(discretize(500.0, 8, 0.0, 500.0).unwrap(), 255);
        assert_eq!(discretize(80.0, 8, 0.0, 500.0).unwrap(), 40);
        assert_eq!(discretize(900.0, 8, 0.0, 500.0).unwrap(), 255);
        assert_eq!(discretize(-5.0, 8, 0.0, 500.0).unwrap(), 0);
        assert!(matches!(discretize(1.0, 8, 5.0, 5.0), Err(Error::Param(_))));
        assert!(matches!(discretize(1.0, 0, 0.0, 5.0), Err(Error::Param(_))));
    }

    #[test]
    fn template_examples() {
        let spec = vec![FeatureSpec::keyhold("E")];
        let ident = [FeatureRange::new(0.0, 255.0)];
        let one = RawSample { features: spec.clone(), values: vec![vec![42.0]], cleaned: true };
        let t = build_template(&[one], 8, &ident).unwrap();
        assert_eq!(t.mean.values, vec![42]);
        assert_eq!(t.variance, vec![0.0]);

        let two = RawSample { features: spec.clone(), values: vec![vec![10.0, 20.0]], cleaned: true };
        let t = build_template(&[two], 8, &ident).unwrap();
        assert_eq!(t.mean_exact, vec![15.0]);
        assert_eq!(t.variance, vec![25.0]);

        // half-up rounding of the mean
        let odd = RawSample { features: spec.clone(), values: vec![vec![10.0, 11.0]], cleaned: true };
        assert_eq!(build_template(&[odd], 8, &ident).unwrap().mean.values, vec![11]);

        let spec2 = vec![FeatureSpec::keyhold("E"), FeatureSpec::keyhold("K")];
        let missing =
            RawSample { features: spec2, values: vec![vec![10.0], vec![]], cleaned: true };
        match build_template(&[missing], 8, &FeatureRange::uniform(2)) {
            Err(Error::Availability(f)) => assert_eq!(f, "K"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn feature_spec_parsing() {
        let spec = parse_feature_spec("Spacebar\ne\nTH\n").unwrap();
        assert_eq!(
            spec,
            vec![FeatureSpec::keyhold("Spacebar"), FeatureSpec::keyhold("E"), FeatureSpec::digraph("T", "H")]
        );
        assert!(parse_feature_spec("E\nE").is_err());
        assert!(parse_feature_spec("THE").is_err());
        assert_eq!(default_features().len(), 32);
    }

    #[test]
    fn availability_extremes() {
        let spec = vec![FeatureSpec::keyhold("E")];
        let minute = 60_000;
        let mut ev = Vec::new();
        for k in 0..4u64 {
            ev.push(KeystrokeEvent::press("E", k * minute + 10));
            ev.push(KeystrokeEvent::release("E", k * minute + 90));
        }
        ev.push(KeystrokeEvent::press("Q", 4 * minute - 1));
        assert_eq!(availability(&ev, &spec, 1.0, 1), 1.0);
        assert_eq!(availability(&ev, &spec, 1.0, 2), 0.0);
    }

    proptest! {
        #[test]
        fn discretize_monotone_and_bounded(a in -1e4f64..1e4, b in -1e4f64..1e4, d in 1u32..=24) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let dl = discretize(lo, d, 0.0, 500.0).unwrap();
            let dh = discretize(hi, d, 0.0, 500.0).unwrap();
            prop_assert!(dl <= dh);
            prop_assert!((dh as u64) < (1u64 << d));
        }

        #[test]
        fn cleaning_is_idempotent(vals in proptest::collection::vec(0f64..1000.0, 0..40)) {
            let s = RawSample { features: vec![FeatureSpec::keyhold("E")], values: vec![vals], cleaned: false };
            let once = clean_outliers(&s, 500.0);
            prop_assert_eq!(&clean_outliers(&once, 500.0).values, &once.values);
            prop_assert!(once.values[0].len() <= s.values[0].len());
        }

        #[test]
        fn disjoint_windows_concatenate(
            gaps in proptest::collection::vec((1u64..400, 1u64..300, 0usize..3), 1..60),
            split in 0u64..20_000,
        ) {
            let keys = ["T", "H", "E"];
            let mut t = 0;
            let mut ev = Vec::new();
            for (gap, hold, k) in gaps {
                t += gap;
                ev.push(KeystrokeEvent::press(keys[k], t));
                ev.push(KeystrokeEvent::release(keys[k], t + hold.min(gap.saturating_sub(1)).max(1)));
            }
            ev.sort_by_key(|e| e.timestamp);
            let spec = vec![FeatureSpec::keyhold("E"), FeatureSpec::keyhold("T"), FeatureSpec::digraph("T", "H")];
            let whole = extract_features(&ev, &spec, Window::new(0, 30_000));
            let a = extract_features(&ev, &spec, Window::new(0, split));
            let b = extract_features(&ev, &spec, Window::new(split, 30_000));
            for i in 0..spec.len() {
                let mut joined = a.values[i].clone();
                joined.extend(&b.values[i]);
                prop_assert_eq!(&joined, &whole.values[i]);
            }
        }
    }
}
