//! Offline re-runs of the perception and decision cycle over recorded ping
//! and navigation logs, one run per sensitivity level.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::UnitQuaternion;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::Action;
use crate::error::{Error, Result};
use crate::logio::{self, NavRecord, PingLog, TraceRecord, TruthRecord};
use crate::motion::KernelCache;
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::sim::{MissionScript, VehicleState, WaypointTracker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    /// Sensitivity levels in dB; empty means the channel's own level.
    pub levels: Vec<f64>,
    /// Steer toward the mission waypoints when scoring actions.
    pub include_waypoint_cost: bool,
    /// Times at which the map is exported.
    pub snapshot_times: Vec<f64>,
    /// Occupancy probability at the true target cell that counts as a
    /// detection.
    pub detection_threshold: f64,
    /// Consecutive pings above the threshold needed to confirm a detection.
    pub detection_pings: usize,
    /// Log locations used when a sweep replays instead of simulating.
    pub pings: Option<String>,
    pub nav: Option<String>,
    /// Ground-truth sidecar; enables false-alarm labels.
    pub truth: Option<String>,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            levels: Vec::new(),
            include_waypoint_cost: false,
            snapshot_times: Vec::new(),
            detection_threshold: 0.5,
            detection_pings: 10,
            pings: None,
            nav: None,
            truth: None,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        for &l in &self.levels {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::config("replay.levels", format!("level {l} must be > 0")));
            }
        }
        if !(self.detection_threshold > 0.0 && self.detection_threshold < 1.0) {
            return Err(Error::config("replay.detection_threshold", "must be in (0, 1)"));
        }
        if self.detection_pings == 0 {
            return Err(Error::config("replay.detection_pings", "must be >= 1"));
        }
        if self.snapshot_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("replay.snapshot_times", "must be finite"));
        }
        Ok(())
    }

    /// Levels to run, falling back to `default` when none are listed.
    pub fn levels_or(&self, default: f64) -> Vec<f64> {
        if self.levels.is_empty() {
            vec![default]
        } else {
            self.levels.clone()
        }
    }
}

/// Inputs of one replay besides the configuration.
#[derive(Debug, Clone, Copy)]
pub struct ReplayInputs<'a> {
    pub pings: &'a PingLog,
    pub nav: &'a [NavRecord],
    /// Ground truth aligned with the pings; enables labeled metrics.
    pub truth: Option<&'a [TruthRecord]>,
    /// Waypoints, used only with `include_waypoint_cost`.
    pub script: Option<&'a MissionScript>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub delta_db: f64,
    pub timeline: Vec<TraceRecord>,
    pub avoidance_count: usize,
    pub first_avoidance_s: Option<f64>,
    /// Ping completing the first run of `detection_pings` consecutive pings
    /// at which the map marks the true target cell occupied.
    pub first_detection_s: Option<f64>,
    pub first_detection_range_m: Option<f64>,
    /// Non-a0 commands issued while no candidate trajectory was threatened;
    /// `None` for logs without ground truth.
    pub false_alarm_count: Option<usize>,
    /// `(time, snapshot text)` in the order requested.
    pub snapshots: Vec<(f64, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub levels: Vec<LevelReport>,
}

pub const REPORT_HEADER: &str = "delta_db,pings,avoidance_count,first_avoidance_s,first_detection_s,first_detection_range_m,false_alarm_count";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ReplayReport {
    pub fn get(&self, delta_db: f64) -> Option<&LevelReport> {
        self.levels.iter().find(|l| l.delta_db == delta_db)
    }

    /// One line per level.
    pub fn format_table(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for l in &self.levels {
            let fa = l
                .false_alarm_count
                .map(|c| c.to_string())
                .unwrap_or_else(|| "unlabeled".to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                l.delta_db,
                l.timeline.len(),
                l.avoidance_count,
                opt(l.first_avoidance_s),
                opt(l.first_detection_s),
                opt(l.first_detection_range_m),
                fa
            ));
        }
        out
    }

    /// Writes `report.csv`, one `timeline_delta_<level>.csv` per level and
    /// `snapshot_delta_<level>_t_<time>.csv` per requested snapshot.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        logio::write_atomic(&dir.join("report.csv"), self.format_table().as_bytes())?;
        for l in &self.levels {
            let name = format!("timeline_delta_{}.csv", l.delta_db);
            logio::write_atomic(&dir.join(name), logio::format_trace(&l.timeline).as_bytes())?;
            for (t, text) in &l.snapshots {
                let name = format!("snapshot_delta_{}_t_{}.csv", l.delta_db, t);
                logio::write_atomic(&dir.join(name), text.as_bytes())?;
            }
        }
        Ok(())
    }
}

fn attitude(r: &NavRecord) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(0.0, r.pitch.to_radians(), r.yaw.to_radians())
}

/// Navigation state at `t`: linear in position and speed, spherical-linear
/// in attitude. Exact records are returned unchanged.
pub fn interpolate_nav(nav: &[NavRecord], t: f64) -> Result<NavRecord> {
    let (Some(first), Some(last)) = (nav.first(), nav.last()) else {
        return Err(Error::Alignment("navigation log is empty".into()));
    };
    if t < first.timestamp || t > last.timestamp {
        return Err(Error::Alignment(format!(
            "ping at {t} s outside navigation span [{}, {}] s",
            first.timestamp, last.timestamp
        )));
    }
    let hi = nav.partition_point(|r| r.timestamp < t);
    let b = nav[hi];
    if b.timestamp == t {
        return Ok(b);
    }
    let a = nav[hi - 1];
    let s = (t - a.timestamp) / (b.timestamp - a.timestamp);
    let lerp = |x: f64, y: f64| x + s * (y - x);
    let q = attitude(&a).slerp(&attitude(&b), s);
    let (_, pitch, yaw) = q.euler_angles();
    Ok(NavRecord {
        timestamp: t,
        position: [
            lerp(a.position[0], b.position[0]),
            lerp(a.position[1], b.position[1]),
            lerp(a.position[2], b.position[2]),
        ],
        yaw: yaw.to_degrees(),
        pitch: pitch.to_degrees(),
        speed: lerp(a.speed, b.speed),
    })
}

fn state_of(r: &NavRecord) -> VehicleState {
    VehicleState {
        position: r.position,
        yaw: r.yaw,
        pitch: r.pitch,
        speed: r.speed,
        time: r.timestamp,
    }
}

/// Highest probability in the target's beam within one bin of its range.
fn target_probability(pipeline: &Pipeline, truth: &TruthRecord) -> Option<f64> {
    let (r, theta, phi) = truth.target?;
    let layout = &pipeline.config().layout;
    let beam = layout.beam_of_direction(theta, phi)?;
    let i = layout.radial_index(r)?;
    let probs = pipeline.map().probs();
    let lo = i.saturating_sub(1).max(1);
    let hi = (i + 1).min(layout.bin_count());
    (lo..=hi).map(|n| probs[layout.flat(beam, n)]).reduce(f64::max)
}

fn replay_level(
    inputs: &ReplayInputs<'_>,
    nav_at: &[NavRecord],
    base: &PipelineConfig,
    cfg: &ReplayConfig,
    delta_db: f64,
    cache: Arc<KernelCache>,
) -> Result<LevelReport> {
    let mut pcfg = base.clone();
    pcfg.channel = base.channel.with_delta(delta_db)?;
    if !cfg.include_waypoint_cost {
        pcfg.loss.c_waypoint = 0.0;
    }
    let mut pipeline = Pipeline::new(pcfg, cache)?;
    let mut tracker = match (cfg.include_waypoint_cost, inputs.script) {
        (true, Some(s)) => Some(WaypointTracker::new(s, s.start_index())),
        _ => None,
    };
    let truth_at: Option<HashMap<u64, &TruthRecord>> = inputs
        .truth
        .map(|t| t.iter().map(|r| (r.timestamp.to_bits(), r)).collect());

    let mut snaps: Vec<(usize, f64)> = cfg.snapshot_times.iter().copied().enumerate().collect();
    snaps.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut snap_iter = snaps.into_iter().peekable();
    let mut snapshots = vec![None; cfg.snapshot_times.len()];

    let mut timeline = Vec::with_capacity(inputs.pings.pings.len());
    let mut first_detection = None;
    let mut streak = 0usize;
    let mut false_alarms = truth_at.as_ref().map(|_| 0usize);

    for (ping, nav) in inputs.pings.pings.iter().zip(nav_at) {
        while let Some(&(n, t)) = snap_iter.peek() {
            if t > ping.timestamp() {
                break;
            }
            snapshots[n] = Some((t, pipeline.map().snapshot()));
            snap_iter.next();
        }
        let waypoint = tracker.as_mut().and_then(|tr| {
            tr.update(nav.position);
            tr.active().map(|g| state_of(nav).waypoint_to(g))
        });
        let cycle = pipeline.process(ping, nav, waypoint.as_ref())?;
        if let Some(table) = &truth_at {
            let truth = table.get(&ping.timestamp().to_bits()).ok_or_else(|| {
                Error::Alignment(format!("no ground truth at ping time {} s", ping.timestamp()))
            })?;
            if target_probability(&pipeline, truth).is_some_and(|p| p >= cfg.detection_threshold) {
                streak += 1;
            } else {
                streak = 0;
            }
            if first_detection.is_none() && streak >= cfg.detection_pings {
                first_detection = Some((ping.timestamp(), truth.target.map(|t| t.0)));
            }
            if cycle.command != Action::Straight && !truth.threat {
                *false_alarms.as_mut().expect("labeled") += 1;
            }
        }
        timeline.push(TraceRecord {
            timestamp: cycle.timestamp,
            command: cycle.command,
            report: cycle.report,
        });
    }
    for (n, t) in snap_iter {
        snapshots[n] = Some((t, pipeline.map().snapshot()));
    }

    let avoiding: Vec<&TraceRecord> = timeline.iter().filter(|r| r.command != Action::Straight).collect();
    Ok(LevelReport {
        delta_db,
        avoidance_count: avoiding.len(),
        first_avoidance_s: avoiding.first().map(|r| r.timestamp),
        first_detection_s: first_detection.map(|d| d.0),
        first_detection_range_m: first_detection.and_then(|d| d.1),
        false_alarm_count: false_alarms,
        snapshots: snapshots.into_iter().map(|s| s.expect("every snapshot taken")).collect(),
        timeline,
    })
}

/// Replays the logs once per sensitivity level. Levels run in parallel and
/// are reported in the order given.
pub fn replay(
    inputs: ReplayInputs<'_>,
    base: &PipelineConfig,
    cfg: &ReplayConfig,
    cache: Arc<KernelCache>,
) -> Result<ReplayReport> {
    cfg.validate()?;
    if inputs.pings.layout_hash != base.layout.hash() {
        return Err(Error::Alignment(format!(
            "ping log layout {} differs from configured layout {}",
            inputs.pings.layout_hash,
            base.layout.hash()
        )));
    }
    let pings = &inputs.pings.pings;
    if let (Some(first), Some(last)) = (pings.first(), pings.last()) {
        for &t in &cfg.snapshot_times {
            if t < first.timestamp() || t > last.timestamp() {
                return Err(Error::SnapshotOutOfRange {
                    requested: t,
                    first: first.timestamp(),
                    last: last.timestamp(),
                });
            }
        }
    } else if let Some(&t) = cfg.snapshot_times.first() {
        return Err(Error::SnapshotOutOfRange {
            requested: t,
            first: f64::NAN,
            last: f64::NAN,
        });
    }
    let nav_at = pings
        .iter()
        .map(|p| interpolate_nav(inputs.nav, p.timestamp()))
        .collect::<Result<Vec<_>>>()?;
    let levels = cfg.levels_or(base.channel.delta_db());
    let reports = levels
        .par_iter()
        .map(|&d| replay_level(&inputs, &nav_at, base, cfg, d, Arc::clone(&cache)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplayReport { levels: reports })
}

/// Map export of the replay at `delta_db` at time `t`.
pub fn snapshot(
    inputs: ReplayInputs<'_>,
    base: &PipelineConfig,
    delta_db: f64,
    t: f64,
    cache: Arc<KernelCache>,
) -> Result<String> {
    let cfg = ReplayConfig {
        levels: vec![delta_db],
        snapshot_times: vec![t],
        ..ReplayConfig::default()
    };
    let mut report = replay(inputs, base, &cfg, cache)?;
    Ok(report.levels.remove(0).snapshots.remove(0).1)
}
