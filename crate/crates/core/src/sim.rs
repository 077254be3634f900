//! Kinematic vehicle, obstacle scene and the seeded mission loop.
//!
//! World frame is north-east-down in metres. Yaw is measured from north
//! toward east and pitch is positive nose-up, both in degrees.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ping_seed, synth_ping, Ping};
use crate::decision::{Action, Waypoint};
use crate::error::{Error, Result};
use crate::geometry::to_spherical;
use crate::logio::{self, NavRecord, Outcome, SummaryRecord, TraceRecord, TruthRecord};
use crate::motion::KernelCache;
use crate::pipeline::{wrap_degrees, Pipeline, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    pub speed: f64,
    pub time: f64,
}

impl Default for VehicleState {
    fn default() -> Self {
        VehicleState {
            position: [0.0; 3],
            yaw: 0.0,
            pitch: 0.0,
            speed: 1.5,
            time: 0.0,
        }
    }
}

impl VehicleState {
    /// Body axes (forward, starboard, down) expressed in the world frame.
    fn axes(&self) -> [[f64; 3]; 3] {
        let (sy, cy) = self.yaw.to_radians().sin_cos();
        let (sp, cp) = self.pitch.to_radians().sin_cos();
        [
            [cy * cp, sy * cp, -sp],
            [-sy, cy, 0.0],
            [cy * sp, sy * sp, cp],
        ]
    }

    /// World point in the body (sonar) frame.
    pub fn to_body(&self, world: [f64; 3]) -> [f64; 3] {
        let d = [
            world[0] - self.position[0],
            world[1] - self.position[1],
            world[2] - self.position[2],
        ];
        self.axes().map(|a| a[0] * d[0] + a[1] * d[1] + a[2] * d[2])
    }

    /// Body-frame point in the world frame.
    pub fn to_world(&self, body: [f64; 3]) -> [f64; 3] {
        let ax = self.axes();
        let mut w = self.position;
        for (k, axis) in ax.iter().enumerate() {
            for d in 0..3 {
                w[d] += body[k] * axis[d];
            }
        }
        w
    }

    pub fn nav_record(&self) -> NavRecord {
        NavRecord {
            timestamp: self.time,
            position: self.position,
            yaw: self.yaw,
            pitch: self.pitch,
            speed: self.speed,
        }
    }

    /// Direction to `goal` as a decision waypoint: heading relative to the
    /// current yaw and absolute pitch.
    pub fn waypoint_to(&self, goal: [f64; 3]) -> Waypoint {
        let dn = goal[0] - self.position[0];
        let de = goal[1] - self.position[1];
        let dd = goal[2] - self.position[2];
        let bearing = de.atan2(dn).to_degrees();
        Waypoint {
            heading: wrap_degrees(bearing - self.yaw),
            pitch: (-dd).atan2(dn.hypot(de)).to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinematicLimits {
    pub min_speed: f64,
    pub cruise_speed: f64,
    pub max_yaw_rate: f64,
    pub max_pitch_rate: f64,
    pub max_pitch: f64,
    /// Proportional gain of the a0 waypoint controller, 1/s.
    pub steering_gain: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        KinematicLimits {
            min_speed: 0.5,
            cruise_speed: 1.5,
            max_yaw_rate: 10.0,
            max_pitch_rate: 5.0,
            max_pitch: 30.0,
            steering_gain: 1.0,
        }
    }
}

impl KinematicLimits {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("limits.min_speed", self.min_speed),
            ("limits.cruise_speed", self.cruise_speed),
            ("limits.max_yaw_rate", self.max_yaw_rate),
            ("limits.max_pitch_rate", self.max_pitch_rate),
            ("limits.max_pitch", self.max_pitch),
            ("limits.steering_gain", self.steering_gain),
        ];
        for (key, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("{v} must be > 0")));
            }
        }
        if self.min_speed > self.cruise_speed {
            return Err(Error::config("limits.min_speed", "exceeds cruise_speed"));
        }
        if self.max_pitch >= 90.0 {
            return Err(Error::config("limits.max_pitch", "must be below 90 degrees"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub position: [f64; 3],
    pub radius: f64,
    pub target_strength_db: f64,
}

/// Broadband interference raising every bin of one beam for a while.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBurst {
    pub start_s: f64,
    pub duration_s: f64,
    pub beam: usize,
    pub level_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default = "default_water_depth")]
    pub water_depth: f64,
    #[serde(default)]
    pub bursts: Vec<NoiseBurst>,
}

fn default_water_depth() -> f64 {
    30.0
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            obstacles: Vec::new(),
            water_depth: default_water_depth(),
            bursts: Vec::new(),
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        for (n, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0 && o.radius.is_finite()) {
                return Err(Error::config(format!("scene.obstacles[{n}].radius"), "must be > 0"));
            }
            if o.position.iter().chain([&o.target_strength_db]).any(|v| !v.is_finite()) {
                return Err(Error::config(format!("scene.obstacles[{n}]"), "values must be finite"));
            }
        }
        for (n, b) in self.bursts.iter().enumerate() {
            if !(b.duration_s >= 0.0 && b.start_s.is_finite() && b.level_db.is_finite()) {
                return Err(Error::config(format!("scene.bursts[{n}]"), "invalid burst"));
            }
        }
        if !(self.water_depth > 0.0) {
            return Err(Error::config("scene.water_depth", "must be > 0"));
        }
        Ok(())
    }

    /// Copy with every obstacle shifted horizontally by a uniform offset in
    /// `[-jitter, jitter]` on north and east, drawn from `seed`.
    pub fn jittered(&self, jitter: f64, seed: u64) -> Scene {
        if jitter <= 0.0 {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c909);
        let mut out = self.clone();
        for o in &mut out.obstacles {
            o.position[0] += rng.random_range(-jitter..=jitter);
            o.position[1] += rng.random_range(-jitter..=jitter);
        }
        out
    }

    /// Distance from `p` to the nearest obstacle surface, and that obstacle.
    pub fn nearest(&self, p: [f64; 3]) -> Option<(f64, &Obstacle)> {
        self.obstacles
            .iter()
            .map(|o| (distance(p, o.position) - o.radius, o))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionScript {
    pub waypoints: Vec<[f64; 3]>,
    pub acceptance_radius: f64,
}

impl MissionScript {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::config("mission.waypoints", "need at least one waypoint"));
        }
        if !(self.acceptance_radius > 0.0) {
            return Err(Error::config("mission.acceptance_radius", "must be > 0"));
        }
        Ok(())
    }

    /// Index of the first waypoint to steer for: a run starts on the first
    /// waypoint of a multi-waypoint script.
    pub fn start_index(&self) -> usize {
        usize::from(self.waypoints.len() >= 2)
    }
}

/// Boustrophedon survey of `legs` parallel north-south legs, `spacing` m
/// apart in east, centered on `center` at the given depth.
pub fn lawnmower(
    center: [f64; 2],
    leg_length: f64,
    spacing: f64,
    legs: usize,
    depth: f64,
    acceptance_radius: f64,
) -> Result<MissionScript> {
    if legs < 2 {
        return Err(Error::config("mission.lawnmower.legs", "need at least 2 legs"));
    }
    if !(leg_length > 0.0 && spacing > 0.0) {
        return Err(Error::config("mission.lawnmower", "leg_length and spacing must be > 0"));
    }
    let half = leg_length / 2.0;
    let mut waypoints = Vec::with_capacity(2 * legs);
    for l in 0..legs {
        let east = center[1] + (l as f64 - (legs as f64 - 1.0) / 2.0) * spacing;
        let (a, b) = if l % 2 == 0 { (-half, half) } else { (half, -half) };
        waypoints.push([center[0] + a, east, depth]);
        waypoints.push([center[0] + b, east, depth]);
    }
    let script = MissionScript {
        waypoints,
        acceptance_radius,
    };
    script.validate()?;
    Ok(script)
}

/// Active-waypoint bookkeeping shared by live runs and replay.
#[derive(Debug, Clone)]
pub struct WaypointTracker {
    waypoints: Vec<[f64; 3]>,
    radius: f64,
    next: usize,
}

impl WaypointTracker {
    pub fn new(script: &MissionScript, first: usize) -> Self {
        WaypointTracker {
            waypoints: script.waypoints.clone(),
            radius: script.acceptance_radius,
            next: first,
        }
    }

    /// Advances past every waypoint within the acceptance radius of `p`.
    pub fn update(&mut self, p: [f64; 3]) {
        while self.next < self.waypoints.len() && distance(p, self.waypoints[self.next]) <= self.radius {
            self.next += 1;
        }
    }

    pub fn active(&self) -> Option<[f64; 3]> {
        self.waypoints.get(self.next).copied()
    }

    pub fn index(&self) -> usize {
        self.next
    }

    pub fn done(&self) -> bool {
        self.next >= self.waypoints.len()
    }
}

/// Advances the vehicle by `dt` at constant speed with rate-limited yaw and
/// pitch. a0 steers toward `waypoint` (or holds course without one).
pub fn step(
    state: &VehicleState,
    command: Action,
    waypoint: Option<[f64; 3]>,
    limits: &KinematicLimits,
    dt: f64,
) -> VehicleState {
    let (yaw_cmd, pitch_cmd) = match command {
        Action::Straight => match waypoint {
            Some(w) => {
                let wp = state.waypoint_to(w);
                let pitch_goal = wp.pitch.clamp(-limits.max_pitch, limits.max_pitch);
                (
                    limits.steering_gain * wp.heading,
                    limits.steering_gain * (pitch_goal - state.pitch),
                )
            }
            None => (0.0, 0.0),
        },
        Action::TurnLeft => (-limits.max_yaw_rate, 0.0),
        Action::TurnRight => (limits.max_yaw_rate, 0.0),
        Action::Up => (0.0, limits.max_pitch_rate),
        Action::Down => (0.0, -limits.max_pitch_rate),
    };
    let yaw_rate = yaw_cmd.clamp(-limits.max_yaw_rate, limits.max_yaw_rate);
    let pitch_rate = pitch_cmd.clamp(-limits.max_pitch_rate, limits.max_pitch_rate);
    let pitch = (state.pitch + pitch_rate * dt).clamp(-limits.max_pitch, limits.max_pitch);
    let yaw = state.yaw + yaw_rate * dt;
    let speed = state.speed.max(limits.min_speed);

    let mid_yaw = (0.5 * (state.yaw + yaw)).to_radians();
    let mid_pitch = (0.5 * (state.pitch + pitch)).to_radians();
    let dist = speed * dt;
    let mut position = state.position;
    position[0] += dist * mid_pitch.cos() * mid_yaw.cos();
    position[1] += dist * mid_pitch.cos() * mid_yaw.sin();
    position[2] -= dist * mid_pitch.sin();
    VehicleState {
        position,
        yaw: wrap_degrees(yaw),
        pitch,
        speed,
        time: state.time + dt,
    }
}

/// Static description of a mission run, shared by every seed.
#[derive(Debug, Clone)]
pub struct MissionSetup {
    pub pipeline: PipelineConfig,
    pub limits: KinematicLimits,
    pub scene: Scene,
    pub script: MissionScript,
    pub ping_period_s: f64,
    pub vehicle_radius_m: f64,
    /// Run is abandoned after this multiple of the obstacle-free duration.
    pub timeout_factor: f64,
    /// Per-seed horizontal jitter of obstacle positions, m.
    pub obstacle_jitter_m: f64,
}

impl MissionSetup {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.limits.validate()?;
        self.scene.validate()?;
        self.script.validate()?;
        if !(self.ping_period_s > 0.0 && self.ping_period_s.is_finite()) {
            return Err(Error::config("sim.ping_period_s", "must be > 0"));
        }
        if !(self.vehicle_radius_m >= 0.0) {
            return Err(Error::config("sim.vehicle_radius_m", "must be >= 0"));
        }
        if !(self.timeout_factor >= 1.0) {
            return Err(Error::config("sim.timeout_factor", "must be >= 1"));
        }
        if !(self.obstacle_jitter_m >= 0.0) {
            return Err(Error::config("sim.obstacle_jitter_m", "must be >= 0"));
        }
        Ok(())
    }

    /// Start pose: the first waypoint, facing the second (or the only
    /// waypoint from the origin), at cruise speed.
    pub fn start(&self) -> (VehicleState, usize) {
        let w = &self.script.waypoints;
        let first = self.script.start_index();
        let position = if first == 1 { w[0] } else { [0.0; 3] };
        let mut state = VehicleState {
            position,
            yaw: 0.0,
            pitch: 0.0,
            speed: self.limits.cruise_speed,
            time: 0.0,
        };
        let wp = state.waypoint_to(w[first]);
        state.yaw = wp.heading;
        (state, first)
    }

    /// Pings allowed before the run times out.
    pub fn max_pings(&self) -> usize {
        let (start, first) = self.start();
        let mut length = 0.0;
        let mut at = start.position;
        for &w in &self.script.waypoints[first..] {
            length += distance(at, w);
            at = w;
        }
        let nominal = length / self.limits.cruise_speed;
        (self.timeout_factor * nominal / self.ping_period_s).ceil() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MissionOptions {
    /// Issue the selected actions; when false every command is a0.
    pub avoidance: bool,
    /// End the run at the first collision.
    pub stop_on_collision: bool,
    /// Keep every ping in the log.
    pub record_pings: bool,
}

impl Default for MissionOptions {
    fn default() -> Self {
        MissionOptions {
            avoidance: true,
            stop_on_collision: true,
            record_pings: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionLog {
    pub layout_hash: String,
    pub nav: Vec<NavRecord>,
    pub pings: Vec<Ping>,
    pub trace: Vec<TraceRecord>,
    pub truth: Vec<TruthRecord>,
    pub summary: SummaryRecord,
}

pub const NAV_FILE: &str = "nav.csv";
pub const PING_FILE: &str = "pings.csv";
pub const TRACE_FILE: &str = "decisions.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

impl MissionLog {
    /// Writes nav, ping (if recorded), decision, truth and summary files.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        logio::write_atomic(&dir.join(NAV_FILE), logio::format_nav_log(&self.nav).as_bytes())?;
        if !self.pings.is_empty() {
            let text = logio::format_ping_log(&self.layout_hash, &self.pings);
            logio::write_atomic(&dir.join(PING_FILE), text.as_bytes())?;
        }
        logio::write_atomic(&dir.join(TRACE_FILE), logio::format_trace(&self.trace).as_bytes())?;
        logio::write_atomic(&dir.join(TRUTH_FILE), logio::format_truth(&self.truth).as_bytes())?;
        let summary = logio::format_summary(std::slice::from_ref(&self.summary));
        logio::write_atomic(&dir.join(SUMMARY_FILE), summary.as_bytes())
    }

    pub fn avoidance_commands(&self) -> usize {
        self.trace.iter().filter(|r| r.command != Action::Straight).count()
    }
}

/// Whether any candidate trajectory passes within the collision distance
/// of an obstacle.
fn threat(pipeline: &mut Pipeline, state: &VehicleState, scene: &Scene, margin: f64) -> Result<bool> {
    if scene.obstacles.is_empty() {
        return Ok(false);
    }
    let reach = pipeline.config().trajectories.horizon_s * state.speed;
    let near: Vec<&Obstacle> = scene
        .obstacles
        .iter()
        .filter(|o| distance(state.position, o.position) <= reach + o.radius + margin)
        .collect();
    if near.is_empty() {
        return Ok(false);
    }
    let prepared = pipeline.trajectories(state.speed, state.pitch)?;
    let dist = prepared.distribution();
    for action in dist.actions() {
        for traj in dist.get(action)? {
            for &p in &traj.samples {
                let w = state.to_world(p);
                if near.iter().any(|o| distance(w, o.position) < o.radius + margin) {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

fn truth_target(state: &VehicleState, scene: &Scene) -> Option<(f64, f64, f64)> {
    let (_, o) = scene.nearest(state.position)?;
    let rel = state.to_body(o.position);
    let (r, theta, phi) = to_spherical(rel);
    Some((r - o.radius, theta, phi))
}

/// Runs one seeded mission: synthesize a ping, run the perception and
/// decision cycle, log, then move the vehicle, every ping period until the
/// last waypoint is reached, a collision, or timeout.
pub fn run_mission(
    setup: &MissionSetup,
    seed: u64,
    options: MissionOptions,
    cache: Arc<KernelCache>,
) -> Result<MissionLog> {
    setup.validate()?;
    let layout = Arc::clone(&setup.pipeline.layout);
    let scene = setup.scene.jittered(setup.obstacle_jitter_m, seed);
    let mut pipeline = Pipeline::new(setup.pipeline.clone(), cache)?;
    let (mut state, first) = setup.start();
    let mut tracker = WaypointTracker::new(&setup.script, first);
    let max_pings = setup.max_pings();
    let period = setup.ping_period_s;
    let margin = setup.vehicle_radius_m;

    let mut nav = Vec::new();
    let mut pings = Vec::new();
    let mut trace = Vec::new();
    let mut truth = Vec::new();
    let mut min_distance = f64::INFINITY;
    let mut false_alarms = 0;
    let mut first_avoidance = None;
    let mut collided = false;
    let mut outcome = Outcome::Timeout;

    for k in 0..max_pings {
        state.time = k as f64 / period.recip();
        tracker.update(state.position);
        if tracker.done() {
            outcome = Outcome::Completed;
            break;
        }
        let surface = scene.nearest(state.position).map(|(d, _)| d);
        if let Some(d) = surface {
            min_distance = min_distance.min(d);
            if d < margin {
                collided = true;
                if options.stop_on_collision {
                    break;
                }
            }
        }

        let record = state.nav_record();
        let ping = synth_ping(&scene, &state, &layout, &setup.pipeline.channel, ping_seed(seed, k as u64));
        let goal = tracker.active();
        let wp = goal.map(|g| state.waypoint_to(g));
        let cycle = pipeline.process(&ping, &record, wp.as_ref())?;
        let command = if options.avoidance { cycle.command } else { Action::Straight };
        let threatened = threat(&mut pipeline, &state, &scene, margin)?;
        if command != Action::Straight {
            if threatened {
                if first_avoidance.is_none() {
                    first_avoidance = surface;
                }
            } else {
                false_alarms += 1;
            }
        }

        nav.push(record);
        if options.record_pings {
            pings.push(ping);
        }
        trace.push(TraceRecord {
            timestamp: cycle.timestamp,
            command,
            report: cycle.report,
        });
        truth.push(TruthRecord {
            timestamp: state.time,
            threat: threatened,
            min_distance: surface.unwrap_or(f64::INFINITY),
            target: truth_target(&state, &scene),
        });
        state = step(&state, command, goal, &setup.limits, period);
    }
    if collided {
        outcome = Outcome::Collision;
    }
    Ok(MissionLog {
        layout_hash: layout.hash().to_string(),
        nav,
        pings,
        trace,
        truth,
        summary: SummaryRecord {
            seed,
            outcome,
            min_distance,
            false_alarm_count: false_alarms,
            first_avoidance_range: first_avoidance,
        },
    })
}
