//! Line-oriented text formats for pings, navigation, decisions and ground
//! truth. Floats are written in Rust's shortest round-trip form, so a value
//! read back is bit-identical to the one written.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::channel::Ping;
use crate::decision::{Action, DecisionReport};
use crate::error::{Error, Result};

pub const NAV_HEADER: &str = "timestamp_s,x_m,y_m,z_m,yaw_deg,pitch_deg,speed_mps";
pub const TRUTH_HEADER: &str =
    "timestamp_s,threat,min_distance_m,target_range_m,target_theta_deg,target_phi_deg";
pub const SUMMARY_HEADER: &str =
    "seed,outcome,min_distance_m,false_alarm_count,first_avoidance_range_m";

pub fn trace_header() -> String {
    let mut h = String::from("timestamp_s,chosen_action");
    for prefix in ["R", "kappa", "C0"] {
        for a in Action::ALL {
            let _ = write!(h, ",{prefix}_{a}");
        }
    }
    h
}

/// Writes `contents` to `path` through a temporary sibling and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn parse_f64(path: &Path, line: usize, name: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("{name}: `{s}` is not a number")))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn parse_opt(path: &Path, line: usize, name: &str, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(path, line, name, s).map(Some)
    }
}

/// Content lines (1-based numbers), skipping blanks.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

// ---------------------------------------------------------------- pings

pub fn ping_log_header(layout_hash: &str) -> String {
    format!("# layout_hash {layout_hash}")
}

/// Appends one row per beam of `ping`.
pub fn write_ping_rows(out: &mut String, ping: &Ping) {
    for (&beam, values) in ping.beam_ids().iter().zip(ping.intensities()) {
        let _ = write!(out, "{},{}", ping.timestamp(), beam);
        for v in values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
}

pub fn format_ping_log(layout_hash: &str, pings: &[Ping]) -> String {
    let mut out = ping_log_header(layout_hash);
    out.push('\n');
    for p in pings {
        write_ping_rows(&mut out, p);
    }
    out
}

/// A parsed ping log: the layout hash from its header and the pings.
#[derive(Debug, Clone, PartialEq)]
pub struct PingLog {
    pub layout_hash: String,
    pub pings: Vec<Ping>,
}

/// Parses a ping log. Rows sharing a timestamp form one ping; a timestamp
/// lower than the previous row's is an error.
pub fn parse_ping_log(text: &str, path: &Path) -> Result<PingLog> {
    let mut lines = content_lines(text);
    let (n, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty ping log"))?;
    let layout_hash = header
        .strip_prefix("# layout_hash ")
        .map(|h| h.trim().to_string())
        .ok_or_else(|| parse_err(path, n, "expected `# layout_hash <hash>` header"))?;

    let mut pings = Vec::new();
    let mut cur: Option<(f64, Vec<usize>, Vec<Vec<f64>>)> = None;
    let mut width: Option<usize> = None;
    let flush = |cur: Option<(f64, Vec<usize>, Vec<Vec<f64>>)>, pings: &mut Vec<Ping>, n: usize| {
        if let Some((t, ids, vals)) = cur {
            pings.push(Ping::new(t, ids, vals).map_err(|e| parse_err(path, n, e.to_string()))?);
        }
        Ok::<(), Error>(())
    };
    for (n, line) in lines {
        let f = fields(line);
        if f.len() < 3 {
            return Err(parse_err(path, n, "expected timestamp, beam id and at least one bin"));
        }
        let t = parse_f64(path, n, "timestamp_s", f[0])?;
        if !t.is_finite() {
            return Err(parse_err(path, n, "timestamp is not finite"));
        }
        let beam: usize = f[1]
            .parse()
            .map_err(|_| parse_err(path, n, format!("beam_id: `{}` is not an index", f[1])))?;
        let values = f[2..]
            .iter()
            .map(|s| parse_f64(path, n, "intensity", s))
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, n, "intensity is not finite"));
        }
        match width {
            Some(w) if w != values.len() => {
                return Err(parse_err(path, n, format!("{} bins, expected {w}", values.len())))
            }
            _ => width = Some(values.len()),
        }
        match &mut cur {
            Some((ct, ids, vals)) if *ct == t => {
                if ids.contains(&beam) {
                    return Err(parse_err(path, n, format!("beam {beam} repeated at t={t}")));
                }
                ids.push(beam);
                vals.push(values);
            }
            Some((ct, _, _)) if t < *ct => {
                return Err(parse_err(path, n, format!("timestamp {t} goes back from {ct}")));
            }
            _ => {
                flush(cur.take(), &mut pings, n)?;
                cur = Some((t, vec![beam], vec![values]));
            }
        }
    }
    flush(cur, &mut pings, 0)?;
    Ok(PingLog { layout_hash, pings })
}

pub fn read_ping_log(path: &Path) -> Result<PingLog> {
    parse_ping_log(&read_text(path)?, path)
}

// ---------------------------------------------------------------- nav

/// Vehicle pose sample. Position is north, east, down in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavRecord {
    pub timestamp: f64,
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    pub speed: f64,
}

pub fn format_nav_row(out: &mut String, r: &NavRecord) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{}",
        r.timestamp, r.position[0], r.position[1], r.position[2], r.yaw, r.pitch, r.speed
    );
}

pub fn format_nav_log(records: &[NavRecord]) -> String {
    let mut out = format!("{NAV_HEADER}\n");
    for r in records {
        format_nav_row(&mut out, r);
    }
    out
}

pub fn parse_nav_log(text: &str, path: &Path) -> Result<Vec<NavRecord>> {
    let mut lines = content_lines(text).peekable();
    if let Some((_, first)) = lines.peek() {
        if first.starts_with("timestamp_s") {
            lines.next();
        }
    }
    let mut out: Vec<NavRecord> = Vec::new();
    for (n, line) in lines {
        let f = fields(line);
        if f.len() != 7 {
            return Err(parse_err(path, n, format!("expected 7 fields, found {}", f.len())));
        }
        let names = ["timestamp_s", "x_m", "y_m", "z_m", "yaw_deg", "pitch_deg", "speed_mps"];
        let mut v = [0.0; 7];
        for (k, s) in f.iter().enumerate() {
            v[k] = parse_f64(path, n, names[k], s)?;
            if !v[k].is_finite() {
                return Err(parse_err(path, n, format!("{} is not finite", names[k])));
            }
        }
        if let Some(prev) = out.last() {
            if v[0] < prev.timestamp {
                return Err(parse_err(
                    path,
                    n,
                    format!("timestamp {} goes back from {}", v[0], prev.timestamp),
                ));
            }
        }
        out.push(NavRecord {
            timestamp: v[0],
            position: [v[1], v[2], v[3]],
            yaw: v[4],
            pitch: v[5],
            speed: v[6],
        });
    }
    Ok(out)
}

pub fn read_nav_log(path: &Path) -> Result<Vec<NavRecord>> {
    parse_nav_log(&read_text(path)?, path)
}

// ---------------------------------------------------------------- decisions

/// One decision trace row: the command issued and every risk term.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub timestamp: f64,
    pub command: Action,
    pub report: DecisionReport,
}

pub fn format_trace_row(out: &mut String, r: &TraceRecord) {
    let _ = write!(out, "{},{}", r.timestamp, r.command);
    let column = |f: fn(&crate::decision::ActionRisk) -> f64| -> Vec<String> {
        Action::ALL
            .iter()
            .map(|&a| r.report.get(a).map_or_else(|| "NaN".to_string(), |x| f(x).to_string()))
            .collect()
    };
    for col in [column(|x| x.risk), column(|x| x.kappa), column(|x| x.c0)] {
        for v in col {
            let _ = write!(out, ",{v}");
        }
    }
    out.push('\n');
}

pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut out = trace_header();
    out.push('\n');
    for r in records {
        format_trace_row(&mut out, r);
    }
    out
}

/// Timestamps and commands of a decision trace file.
pub fn parse_trace_commands(text: &str, path: &Path) -> Result<Vec<(f64, Action)>> {
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        if line.starts_with("timestamp_s") {
            continue;
        }
        let f = fields(line);
        if f.len() < 2 {
            return Err(parse_err(path, n, "expected timestamp and action"));
        }
        let t = parse_f64(path, n, "timestamp_s", f[0])?;
        let a = f[1]
            .parse::<Action>()
            .map_err(|e| parse_err(path, n, e.to_string()))?;
        out.push((t, a));
    }
    Ok(out)
}

// ---------------------------------------------------------------- truth

/// Ground truth at one ping of a synthetic log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRecord {
    pub timestamp: f64,
    /// Some obstacle lies on some candidate trajectory.
    pub threat: bool,
    /// Distance from the vehicle to the nearest obstacle surface, m.
    pub min_distance: f64,
    /// Sonar-frame `(range, theta, phi)` of the nearest obstacle's front.
    pub target: Option<(f64, f64, f64)>,
}

pub fn format_truth_row(out: &mut String, r: &TruthRecord) {
    let (a, b, c) = match r.target {
        Some((x, y, z)) => (Some(x), Some(y), Some(z)),
        None => (None, None, None),
    };
    let _ = writeln!(
        out,
        "{},{},{},{},{},{}",
        r.timestamp,
        u8::from(r.threat),
        r.min_distance,
        opt(a),
        opt(b),
        opt(c)
    );
}

pub fn format_truth(records: &[TruthRecord]) -> String {
    let mut out = format!("{TRUTH_HEADER}\n");
    for r in records {
        format_truth_row(&mut out, r);
    }
    out
}

pub fn parse_truth(text: &str, path: &Path) -> Result<Vec<TruthRecord>> {
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        if line.starts_with("timestamp_s") {
            continue;
        }
        let f = fields(line);
        if f.len() != 6 {
            return Err(parse_err(path, n, format!("expected 6 fields, found {}", f.len())));
        }
        let threat = match f[1] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(path, n, format!("threat: `{other}` is not 0 or 1"))),
        };
        let r = parse_opt(path, n, "target_range_m", f[3])?;
        let t = parse_opt(path, n, "target_theta_deg", f[4])?;
        let p = parse_opt(path, n, "target_phi_deg", f[5])?;
        out.push(TruthRecord {
            timestamp: parse_f64(path, n, "timestamp_s", f[0])?,
            threat,
            min_distance: parse_f64(path, n, "min_distance_m", f[2])?,
            target: match (r, t, p) {
                (Some(r), Some(t), Some(p)) => Some((r, t, p)),
                _ => None,
            },
        });
    }
    Ok(out)
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRecord>> {
    parse_truth(&read_text(path)?, path)
}

// ---------------------------------------------------------------- summary

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub seed: u64,
    pub outcome: Outcome,
    pub min_distance: f64,
    pub false_alarm_count: usize,
    pub first_avoidance_range: Option<f64>,
}

pub fn format_summary_row(out: &mut String, r: &SummaryRecord) {
    let _ = writeln!(
        out,
        "{},{},{},{},{}",
        r.seed,
        r.outcome.label(),
        r.min_distance,
        r.false_alarm_count,
        opt(r.first_avoidance_range)
    );
}

pub fn format_summary(records: &[SummaryRecord]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in records {
        format_summary_row(&mut out, r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::ActionRisk;

    fn p() -> &'static Path {
        Path::new("test.log")
    }

    #[test]
    fn ping_log_round_trips_exactly() {
        let a = Ping::full(0.1, vec![vec![60.123, 0.1 + 0.2], vec![-3.0, 1e-300]]).unwrap();
        let b = Ping::new(0.2, vec![1], vec![vec![61.0, 62.5]]).unwrap();
        let text = format_ping_log("abc123", &[a.clone(), b.clone()]);
        let log = parse_ping_log(&text, p()).unwrap();
        assert_eq!(log.layout_hash, "abc123");
        assert_eq!(log.pings, vec![a, b]);
    }

    #[test]
    fn corrupt_ping_line_reports_its_number() {
        let text = "# layout_hash x\n0,0,1,2\n0,1,1,2\n0.1,0,1,2\n0.1,1,1,2\n0.2,0,1,2\n0.2,1,1,oops\n";
        match parse_ping_log(text, p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        let back = "# layout_hash x\n0.2,0,1\n0.1,0,1\n";
        assert!(matches!(parse_ping_log(back, p()), Err(Error::Parse { line: 3, .. })));
        let dup = "# layout_hash x\n0.2,0,1\n0.2,0,1\n";
        assert!(matches!(parse_ping_log(dup, p()), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_ping_log("0,0,1\n", p()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn nav_log_round_trips_and_rejects_regression() {
        let r = NavRecord {
            timestamp: 0.30000000000000004,
            position: [1.0 / 3.0, -2.5, 10.0],
            yaw: 179.99,
            pitch: -0.1,
            speed: 1.5,
        };
        let mut s = r;
        s.timestamp = 0.4;
        let text = format_nav_log(&[r, s]);
        assert_eq!(parse_nav_log(&text, p()).unwrap(), vec![r, s]);
        let bad = format_nav_log(&[s, r]);
        assert!(matches!(parse_nav_log(&bad, p()), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn trace_has_nan_for_missing_actions() {
        let report = DecisionReport {
            chosen: Action::TurnRight,
            risks: vec![ActionRisk {
                action: Action::Straight,
                kappa: 0.5,
                c0: 0.0,
                risk: 0.5,
            }],
        };
        let text = format_trace(&[TraceRecord {
            timestamp: 1.5,
            command: Action::Straight,
            report,
        }]);
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("1.5,a0,0.5,NaN,NaN,NaN,NaN,0.5,NaN"));
        assert_eq!(text.lines().next().unwrap().split(',').count(), 17);
        assert_eq!(parse_trace_commands(&text, p()).unwrap(), vec![(1.5, Action::Straight)]);
    }

    #[test]
    fn truth_round_trips() {
        let rows = vec![
            TruthRecord {
                timestamp: 0.0,
                threat: false,
                min_distance: 12.5,
                target: None,
            },
            TruthRecord {
                timestamp: 0.1,
                threat: true,
                min_distance: 3.25,
                target: Some((4.0, -1.5, 0.25)),
            },
        ];
        assert_eq!(parse_truth(&format_truth(&rows), p()).unwrap(), rows);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("a.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
