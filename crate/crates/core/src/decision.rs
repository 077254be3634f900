//! Action selection by posterior expected loss over candidate trajectories.
//!
//! Each action carries a small weighted set of body-frame trajectories. The
//! collision cost of a trajectory is `1 - prod(1 - w_i p)` over the map cells it
//! passes through, where `w_i = (I_x - (i - 1) c_d) / I_x` discounts far cells.
//! The risk of action `k` is `R_k = C0_k (1 - kappa_k) + (C0_k + C1) kappa_k`
//! with `kappa_k` the weighted collision cost and `C0_k` the waypoint
//! deviation cost of its nominal trajectory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BeamLayout, CellIndex, PolarMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Action {
    /// a0: hold course (toward the waypoint).
    Straight,
    /// a1: turn to port.
    TurnLeft,
    /// a2: turn to starboard.
    TurnRight,
    /// a3: pitch up.
    Up,
    /// a4: pitch down.
    Down,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Straight,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Up,
        Action::Down,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["a0", "a1", "a2", "a3", "a4"][self.index()]
    }

    /// Signed yaw and pitch rate multipliers: `(+1, 0)` is a starboard turn.
    fn rate_signs(self) -> (f64, f64) {
        match self {
            Action::Straight => (0.0, 0.0),
            Action::TurnLeft => (-1.0, 0.0),
            Action::TurnRight => (1.0, 0.0),
            Action::Up => (0.0, 1.0),
            Action::Down => (0.0, -1.0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::config("action", format!("unknown action `{s}`")))
    }
}

impl TryFrom<String> for Action {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Action> for String {
    fn from(a: Action) -> String {
        a.label().to_string()
    }
}

/// Ordered set of available actions; always contains a0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    actions: Vec<Action>,
}

impl ActionSet {
    pub fn new(actions: Vec<Action>) -> Result<Self> {
        if !actions.contains(&Action::Straight) {
            return Err(Error::config("trajectories.actions", "a0 must be available"));
        }
        let mut sorted = actions.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("trajectories.actions", "actions must be distinct"));
        }
        Ok(ActionSet { actions })
    }

    pub fn horizontal() -> Self {
        ActionSet {
            actions: vec![Action::Straight, Action::TurnLeft, Action::TurnRight],
        }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn contains(&self, a: Action) -> bool {
        self.actions.contains(&a)
    }
}

impl Default for ActionSet {
    fn default() -> Self {
        ActionSet {
            actions: Action::ALL.to_vec(),
        }
    }
}

/// A candidate path in the sonar frame (x forward, y starboard, z down),
/// starting at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Centerline points.
    pub samples: Vec<[f64; 3]>,
    /// Extra points offset sideways and vertically from the centerline by
    /// the clearance; their cells count as visited too.
    pub envelope: Vec<[f64; 3]>,
    pub duration: f64,
    /// Heading change at the end of the horizon, degrees (starboard positive).
    pub terminal_yaw: f64,
    /// Pitch at the end of the horizon, degrees (up positive).
    pub terminal_pitch: f64,
    pub weight: f64,
}

impl Trajectory {
    /// Straight line along the sonar axis with samples every `spacing` m.
    pub fn straight(length: f64, spacing: f64) -> Self {
        let n = (length / spacing).ceil().max(0.0) as usize;
        let samples = (0..=n)
            .map(|s| [(s as f64 * spacing).min(length), 0.0, 0.0])
            .collect();
        Trajectory {
            samples,
            envelope: Vec::new(),
            duration: 0.0,
            terminal_yaw: 0.0,
            terminal_pitch: 0.0,
            weight: 1.0,
        }
    }
}

/// Weighted trajectories per action.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDistribution {
    per_action: Vec<(Action, Vec<Trajectory>)>,
}

impl TrajectoryDistribution {
    pub fn new(per_action: Vec<(Action, Vec<Trajectory>)>) -> Result<Self> {
        for (action, trajs) in &per_action {
            let key = format!("trajectories.{action}");
            if trajs.is_empty() {
                return Err(Error::config(key, "no trajectories"));
            }
            if trajs.iter().any(|t| !(t.weight >= 0.0 && t.weight.is_finite())) {
                return Err(Error::config(key, "weights must be finite and >= 0"));
            }
            let total: f64 = trajs.iter().map(|t| t.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::config(key, format!("weights sum to {total}")));
            }
        }
        Ok(TrajectoryDistribution { per_action })
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.per_action.iter().map(|(a, _)| *a)
    }

    pub fn get(&self, action: Action) -> Result<&[Trajectory]> {
        self.per_action
            .iter()
            .find(|(a, _)| *a == action)
            .map(|(_, t)| t.as_slice())
            .ok_or(Error::UnknownAction(action))
    }

    /// Highest-weight trajectory of `action` (first one on ties).
    pub fn nominal(&self, action: Action) -> Result<&Trajectory> {
        let trajs = self.get(action)?;
        let mut best = &trajs[0];
        for t in &trajs[1..] {
            if t.weight > best.weight {
                best = t;
            }
        }
        Ok(best)
    }
}

/// Constant-rate arc generator for the candidate trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySpec {
    pub actions: Vec<Action>,
    /// Planning horizon `T`, s.
    pub horizon_s: f64,
    /// Turn rate commanded by a1/a2, deg/s.
    pub yaw_rate_dps: f64,
    /// Pitch rate commanded by a3/a4, deg/s.
    pub pitch_rate_dps: f64,
    /// Pitch magnitude the arcs saturate at, degrees.
    pub max_pitch_deg: f64,
    /// Relative rate perturbations, one trajectory each.
    pub rate_scales: Vec<f64>,
    pub weights: Vec<f64>,
    /// Half-width of the swept tube around each path, m.
    pub clearance_m: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            actions: Action::ALL.to_vec(),
            horizon_s: 10.0,
            yaw_rate_dps: 10.0,
            pitch_rate_dps: 5.0,
            max_pitch_deg: 30.0,
            rate_scales: vec![0.8, 1.0, 1.2],
            weights: vec![0.25, 0.5, 0.25],
            clearance_m: 0.0,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        ActionSet::new(self.actions.clone())?;
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("trajectories.{key}"), format!("{v} must be > 0")))
            }
        };
        positive("horizon_s", self.horizon_s)?;
        positive("yaw_rate_dps", self.yaw_rate_dps)?;
        positive("pitch_rate_dps", self.pitch_rate_dps)?;
        positive("max_pitch_deg", self.max_pitch_deg)?;
        if !(self.clearance_m >= 0.0 && self.clearance_m.is_finite()) {
            return Err(Error::config("trajectories.clearance_m", "must be >= 0"));
        }
        if self.rate_scales.is_empty() || self.rate_scales.len() != self.weights.len() {
            return Err(Error::config(
                "trajectories.weights",
                "need one weight per rate scale",
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("trajectories.weights", "must be >= 0 and sum to 1"));
        }
        Ok(())
    }

    pub fn action_set(&self) -> Result<ActionSet> {
        ActionSet::new(self.actions.clone())
    }

    /// Trajectories for a vehicle moving at `speed` with current pitch
    /// `pitch_deg`, sampled at most `spacing` m apart.
    pub fn generate(&self, speed: f64, pitch_deg: f64, spacing: f64) -> Result<TrajectoryDistribution> {
        self.validate()?;
        let mut per_action = Vec::with_capacity(self.actions.len());
        for &action in &self.actions {
            let (sy, sp) = action.rate_signs();
            let trajs = self
                .rate_scales
                .iter()
                .zip(&self.weights)
                .map(|(&scale, &w)| {
                    let yaw_rate = sy * scale * self.yaw_rate_dps;
                    let pitch_rate = sp * scale * self.pitch_rate_dps;
                    let mut t = self.arc(speed, pitch_deg, yaw_rate, pitch_rate, spacing);
                    t.weight = w;
                    t
                })
                .collect();
            per_action.push((action, trajs));
        }
        TrajectoryDistribution::new(per_action)
    }

    fn arc(&self, speed: f64, pitch0: f64, yaw_rate: f64, pitch_rate: f64, spacing: f64) -> Trajectory {
        let length = speed * self.horizon_s;
        let steps = (length / spacing).ceil().max(1.0) as usize;
        let dt = self.horizon_s / steps as f64;
        let limit = self.max_pitch_deg;
        let pitch_at = |t: f64| (pitch0 + pitch_rate * t).clamp(-limit.max(pitch0.abs()), limit.max(pitch0.abs()));
        let c = self.clearance_m;
        let mut pos = [0.0; 3];
        let mut samples = Vec::with_capacity(steps + 1);
        let mut envelope = Vec::new();
        samples.push(pos);
        for s in 0..steps {
            let tm = (s as f64 + 0.5) * dt;
            let yaw = (yaw_rate * tm).to_radians();
            let pitch = (pitch_at(tm) - pitch0).to_radians();
            let (sy, cy) = yaw.sin_cos();
            let (sp, cp) = pitch.sin_cos();
            let step = speed * dt;
            pos[0] += step * cp * cy;
            pos[1] += step * cp * sy;
            pos[2] -= step * sp;
            samples.push(pos);
            if c > 0.0 {
                let side = [-sy, cy, 0.0];
                let down = [sp * cy, sp * sy, cp];
                for sign in [-1.0, 1.0] {
                    envelope.push([pos[0] + sign * c * side[0], pos[1] + sign * c * side[1], pos[2]]);
                    envelope.push([
                        pos[0] + sign * c * down[0],
                        pos[1] + sign * c * down[1],
                        pos[2] + sign * c * down[2],
                    ]);
                }
            }
        }
        Trajectory {
            samples,
            envelope,
            duration: self.horizon_s,
            terminal_yaw: yaw_rate * self.horizon_s,
            terminal_pitch: pitch_at(self.horizon_s),
            weight: 1.0,
        }
    }
}

/// Direction to the goal: heading relative to the vehicle and absolute pitch,
/// both degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub heading: f64,
    pub pitch: f64,
}

impl Waypoint {
    pub fn new(heading: f64, pitch: f64) -> Result<Self> {
        if !heading.is_finite() || !(-90.0..=90.0).contains(&pitch) {
            return Err(Error::config("waypoint", "heading must be finite, pitch in [-90, 90]"));
        }
        Ok(Waypoint { heading, pitch })
    }

    pub fn ahead() -> Self {
        Waypoint {
            heading: 0.0,
            pitch: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSpec {
    /// Collision cost `C1`, shared by all actions.
    pub c1: f64,
    /// Waypoint deviation cost per radian.
    pub c_waypoint: f64,
    /// Distance discount in `[0, 1]`; 0 weights all cells equally.
    pub c_d: f64,
    /// Fixed cost of any action other than a0.
    pub maneuver_cost: f64,
    /// Extra cost of a maneuver other than a0 that differs from the
    /// maneuver issued on the previous ping.
    pub switch_cost: f64,
    /// Replace `C0_k` by `max(0, C0_k - C0_0)` for `k != 0`.
    pub relative_to_straight: bool,
    /// Preference order among actions whose risks tie.
    pub tie_break: Vec<Action>,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            c1: 1.0,
            c_waypoint: 0.05,
            c_d: 0.5,
            maneuver_cost: 0.1,
            switch_cost: 0.0,
            relative_to_straight: false,
            tie_break: Action::ALL.to_vec(),
        }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::config("loss.c1", "must be > 0"));
        }
        if !(self.c_waypoint >= 0.0 && self.c_waypoint.is_finite()) {
            return Err(Error::config("loss.c_waypoint", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.c_d) {
            return Err(Error::config("loss.c_d", "must be in [0, 1]"));
        }
        if !(self.maneuver_cost >= 0.0 && self.maneuver_cost.is_finite()) {
            return Err(Error::config("loss.maneuver_cost", "must be >= 0"));
        }
        if !(self.switch_cost >= 0.0 && self.switch_cost.is_finite()) {
            return Err(Error::config("loss.switch_cost", "must be >= 0"));
        }
        let mut order = self.tie_break.clone();
        order.sort();
        if order.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("loss.tie_break", "actions must be distinct"));
        }
        Ok(())
    }

    /// Same loss with every cost constant multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        LossSpec {
            c1: self.c1 * factor,
            c_waypoint: self.c_waypoint * factor,
            maneuver_cost: self.maneuver_cost * factor,
            switch_cost: self.switch_cost * factor,
            ..self.clone()
        }
    }
}

/// Flat indices of the cells containing at least one centerline or
/// envelope point, ascending.
pub fn member_cells(traj: &Trajectory, layout: &BeamLayout) -> Vec<usize> {
    let mut cells: Vec<usize> = traj
        .samples
        .iter()
        .chain(&traj.envelope)
        .filter_map(|&p| layout.locate(p))
        .collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Cells the trajectory passes through.
pub fn cell_membership(traj: &Trajectory, map: &PolarMap) -> Vec<CellIndex> {
    let layout = map.layout();
    member_cells(traj, layout)
        .into_iter()
        .map(|c| layout.cell_index(c))
        .collect()
}

/// Distance weight `(I_x - (i - 1) c_d) / I_x` of radial index `i`.
pub fn distance_weight(i: usize, c_d: f64, bins: usize) -> f64 {
    let ix = bins as f64;
    (ix - (i - 1) as f64 * c_d) / ix
}

fn weighted_product(cells: &[usize], map: &PolarMap, c_d: f64) -> f64 {
    let layout = map.layout();
    let bins = layout.bin_count();
    let probs = map.probs();
    let mut free = 1.0;
    for &c in cells {
        let (_, i) = layout.unflat(c);
        free *= 1.0 - probs[c] * distance_weight(i, c_d, bins);
    }
    (1.0 - free).clamp(0.0, 1.0)
}

/// Probability that the trajectory meets an occupied cell:
/// `1 - prod (1 - p)` over its member cells.
pub fn collision_prob(traj: &Trajectory, map: &PolarMap) -> f64 {
    weighted_product(&member_cells(traj, map.layout()), map, 0.0)
}

/// [`collision_prob`] with each cell's probability discounted by range.
pub fn weighted_collision_cost(traj: &Trajectory, map: &PolarMap, c_d: f64) -> f64 {
    weighted_product(&member_cells(traj, map.layout()), map, c_d)
}

/// Expected weighted collision cost of an action over its trajectories.
pub fn action_collision_cost(
    action: Action,
    dist: &TrajectoryDistribution,
    map: &PolarMap,
    c_d: f64,
) -> Result<f64> {
    let total: f64 = dist
        .get(action)?
        .iter()
        .map(|t| t.weight * weighted_collision_cost(t, map, c_d))
        .sum();
    Ok(total.clamp(0.0, 1.0))
}

/// Angle between the terminal heading of `traj` and the waypoint direction,
/// times `c`.
pub fn waypoint_cost(traj: &Trajectory, wp: &Waypoint, c: f64) -> f64 {
    angle_between(traj.terminal_yaw, traj.terminal_pitch, wp.heading, wp.pitch) * c
}

/// Angle (radians) between two directions given as (yaw, pitch) in degrees.
///
/// Equal to `acos(cos pb cos pa (cos tb cos ta + sin tb sin ta) + sin pb sin pa)`
/// but evaluated as `atan2(|a x b|, a . b)`, which keeps full precision for
/// nearly parallel directions.
pub fn angle_between(yaw_a: f64, pitch_a: f64, yaw_b: f64, pitch_b: f64) -> f64 {
    let unit = |yaw: f64, pitch: f64| {
        let (t, p) = (yaw.to_radians(), pitch.to_radians());
        [p.cos() * t.cos(), p.cos() * t.sin(), p.sin()]
    };
    let (a, b) = (unit(yaw_a, pitch_a), unit(yaw_b, pitch_b));
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let sin = cross.iter().map(|c| c * c).sum::<f64>().sqrt();
    let cos: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    sin.atan2(cos)
}

/// Trajectories with their member cells resolved against one layout, so the
/// per-ping cost is only the probability products.
#[derive(Debug, Clone)]
pub struct PreparedTrajectories {
    layout_hash: String,
    dist: TrajectoryDistribution,
    cells: Vec<(Action, Vec<(f64, Vec<usize>)>)>,
}

impl PreparedTrajectories {
    pub fn new(dist: TrajectoryDistribution, layout: &BeamLayout) -> Self {
        let cells = dist
            .per_action
            .iter()
            .map(|(a, trajs)| {
                let lists = trajs
                    .iter()
                    .map(|t| (t.weight, member_cells(t, layout)))
                    .collect();
                (*a, lists)
            })
            .collect();
        PreparedTrajectories {
            layout_hash: layout.hash().to_string(),
            dist,
            cells,
        }
    }

    pub fn distribution(&self) -> &TrajectoryDistribution {
        &self.dist
    }

    fn kappa(&self, action: Action, map: &PolarMap, c_d: f64) -> Result<f64> {
        let (_, lists) = self
            .cells
            .iter()
            .find(|(a, _)| *a == action)
            .ok_or(Error::UnknownAction(action))?;
        let total: f64 = lists
            .iter()
            .map(|(w, cells)| w * weighted_product(cells, map, c_d))
            .sum();
        Ok(total.clamp(0.0, 1.0))
    }
}

/// Every term of the risk of one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionRisk {
    pub action: Action,
    /// Expected weighted collision cost `kappa`.
    pub kappa: f64,
    /// No-collision cost `C0`.
    pub c0: f64,
    /// Total risk `C0 (1 - kappa) + (C0 + C1) kappa`.
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionReport {
    pub chosen: Action,
    pub risks: Vec<ActionRisk>,
}

impl DecisionReport {
    pub fn get(&self, action: Action) -> Option<&ActionRisk> {
        self.risks.iter().find(|r| r.action == action)
    }
}

/// Index of the minimum risk; risks within `1e-12` (relative to the minimum
/// when it exceeds 1) of it tie and are resolved by `preference`, then by
/// action order.
pub fn argmin_action(risks: &[(Action, f64)], preference: &[Action]) -> Result<Action> {
    let min = risks
        .iter()
        .map(|(_, r)| *r)
        .filter(|r| r.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::NoFiniteRisk);
    }
    let tol = 1e-12 * min.abs().max(1.0);
    let tied = |a: Action| {
        risks
            .iter()
            .any(|(b, r)| *b == a && r.is_finite() && *r - min <= tol)
    };
    preference
        .iter()
        .copied()
        .chain(Action::ALL)
        .find(|&a| tied(a))
        .ok_or(Error::NoFiniteRisk)
}

/// Adds `loss.switch_cost` to every maneuver other than a0 and `previous`
/// when `previous` was a maneuver, then picks the action again.
pub fn commit_to(report: DecisionReport, previous: Action, loss: &LossSpec) -> Result<DecisionReport> {
    if previous == Action::Straight || loss.switch_cost == 0.0 {
        return Ok(report);
    }
    let mut risks = report.risks;
    for r in &mut risks {
        if r.action != Action::Straight && r.action != previous {
            r.risk += loss.switch_cost;
        }
    }
    let pairs: Vec<(Action, f64)> = risks.iter().map(|r| (r.action, r.risk)).collect();
    let chosen = argmin_action(&pairs, &loss.tie_break)?;
    Ok(DecisionReport { chosen, risks })
}

fn evaluate(
    actions: Vec<Action>,
    dist: &TrajectoryDistribution,
    wp: Option<&Waypoint>,
    loss: &LossSpec,
    kappa: impl Fn(Action) -> Result<f64>,
) -> Result<DecisionReport> {
    loss.validate()?;
    let mut c0s = Vec::with_capacity(actions.len());
    for &a in &actions {
        let deviation = match wp {
            Some(wp) => waypoint_cost(dist.nominal(a)?, wp, loss.c_waypoint),
            None => 0.0,
        };
        let maneuver = if a == Action::Straight { 0.0 } else { loss.maneuver_cost };
        c0s.push((a, deviation + maneuver));
    }
    if loss.relative_to_straight {
        let base = c0s
            .iter()
            .find(|(a, _)| *a == Action::Straight)
            .map_or(0.0, |(_, c)| *c);
        for (a, c) in &mut c0s {
            if *a != Action::Straight {
                *c = (*c - base).max(0.0);
            }
        }
    }
    let mut risks = Vec::with_capacity(actions.len());
    for (a, c0) in c0s {
        let k = kappa(a)?;
        let risk = c0 * (1.0 - k) + (c0 + loss.c1) * k;
        risks.push(ActionRisk {
            action: a,
            kappa: k,
            c0,
            risk,
        });
    }
    let pairs: Vec<(Action, f64)> = risks.iter().map(|r| (r.action, r.risk)).collect();
    let chosen = argmin_action(&pairs, &loss.tie_break)?;
    Ok(DecisionReport { chosen, risks })
}

/// Risk-minimizing action among those in `dist`; `wp = None` drops the
/// waypoint term from `C0`.
pub fn select_action(
    map: &PolarMap,
    dist: &TrajectoryDistribution,
    wp: Option<&Waypoint>,
    loss: &LossSpec,
) -> Result<DecisionReport> {
    let actions: Vec<Action> = dist.actions().collect();
    evaluate(actions, dist, wp, loss, |a| {
        action_collision_cost(a, dist, map, loss.c_d)
    })
}

/// [`select_action`] using cached cell membership.
pub fn select_action_prepared(
    map: &PolarMap,
    prepared: &PreparedTrajectories,
    wp: Option<&Waypoint>,
    loss: &LossSpec,
) -> Result<DecisionReport> {
    if prepared.layout_hash != map.layout().hash() {
        return Err(Error::Alignment(
            "trajectories prepared for another layout".into(),
        ));
    }
    let actions: Vec<Action> = prepared.dist.actions().collect();
    evaluate(actions, &prepared.dist, wp, loss, |a| {
        prepared.kappa(a, map, loss.c_d)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn proto_map(p: f64) -> PolarMap {
        PolarMap::new(Arc::new(BeamLayout::prototype()), p).unwrap()
    }

    #[test]
    fn straight_five_metres_covers_the_first_22_center_cells() {
        let map = proto_map(0.0);
        let traj = Trajectory::straight(5.0, 0.05);
        let cells = cell_membership(&traj, &map);
        let (jc, kc) = map.layout().center();
        let expected: Vec<CellIndex> = (1..=22).map(|i| CellIndex { i, j: jc, k: kc }).collect();
        assert_eq!(cells, expected);
        assert!(cell_membership(&Trajectory::straight(0.0, 0.05), &map).is_empty());
    }

    #[test]
    fn collision_probability_examples() {
        let mut map = proto_map(0.0);
        let (jc, kc) = map.layout().center();
        let traj = Trajectory::straight(0.4, 0.05);
        map.set(CellIndex { i: 1, j: jc, k: kc }, 0.3).unwrap();
        assert!((collision_prob(&traj, &map) - 0.3).abs() < 1e-15);
        map.set(CellIndex { i: 1, j: jc, k: kc }, 0.5).unwrap();
        map.set(CellIndex { i: 2, j: jc, k: kc }, 0.5).unwrap();
        assert_eq!(collision_prob(&traj, &map), 0.75);
        assert_eq!(collision_prob(&traj, &proto_map(0.0)), 0.0);
    }

    #[test]
    fn distance_weight_examples() {
        assert_eq!(distance_weight(1, 1.0, 219), 1.0);
        assert!((distance_weight(219, 1.0, 219) - 1.0 / 219.0).abs() < 1e-15);
        assert!((0.4 * distance_weight(219, 1.0, 219) - 0.001_826_484).abs() < 1e-8);
        assert_eq!(distance_weight(57, 0.0, 219), 1.0);
    }

    #[test]
    fn waypoint_cost_examples() {
        let t = |yaw: f64, pitch: f64| Trajectory {
            terminal_yaw: yaw,
            terminal_pitch: pitch,
            ..Trajectory::straight(1.0, 0.1)
        };
        let wp = Waypoint::new(20.0, 5.0).unwrap();
        assert_eq!(waypoint_cost(&t(20.0, 5.0), &wp, 1.0), 0.0);
        let wp0 = Waypoint::ahead();
        assert!((waypoint_cost(&t(90.0, 0.0), &wp0, 1.0) - PI / 2.0).abs() < 1e-12);
        assert!((waypoint_cost(&t(180.0, 0.0), &wp0, 2.0) - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn empty_map_and_waypoint_ahead_goes_straight() {
        let map = proto_map(0.0);
        let dist = TrajectorySpec::default().generate(1.5, 0.0, 0.1).unwrap();
        let report = select_action(&map, &dist, Some(&Waypoint::ahead()), &LossSpec::default()).unwrap();
        assert_eq!(report.chosen, Action::Straight);
        assert_eq!(report.get(Action::Straight).unwrap().risk, 0.0);
    }

    #[test]
    fn obstacle_ahead_and_to_port_turns_starboard() {
        let mut map = proto_map(0.0);
        let layout = map.layout_arc().clone();
        let (jc, kc) = layout.center();
        for j in [jc - 1, jc] {
            for i in 20..40 {
                map.set(CellIndex { i, j, k: kc }, 0.9).unwrap();
            }
        }
        let spec = TrajectorySpec {
            actions: ActionSet::horizontal().actions().to_vec(),
            ..TrajectorySpec::default()
        };
        let dist = spec.generate(1.5, 0.0, layout.cell_length() / 2.0).unwrap();
        let report = select_action(&map, &dist, Some(&Waypoint::ahead()), &LossSpec::default()).unwrap();
        assert_eq!(report.chosen, Action::TurnRight, "{report:?}");
        let prepared = PreparedTrajectories::new(dist, &layout);
        let cached = select_action_prepared(&map, &prepared, Some(&Waypoint::ahead()), &LossSpec::default()).unwrap();
        assert_eq!(cached, report);
    }

    #[test]
    fn ties_follow_preference_order() {
        let risks = [(Action::TurnRight, 0.5), (Action::Straight, 0.5 + 1e-13), (Action::TurnLeft, 0.7)];
        assert_eq!(argmin_action(&risks, &Action::ALL).unwrap(), Action::Straight);
        let pref = [Action::TurnRight, Action::Straight];
        assert_eq!(argmin_action(&risks, &pref).unwrap(), Action::TurnRight);
        assert!(matches!(
            argmin_action(&[(Action::Straight, f64::NAN)], &Action::ALL),
            Err(Error::NoFiniteRisk)
        ));
    }

    #[test]
    fn unknown_action_is_an_error() {
        let map = proto_map(0.0);
        let spec = TrajectorySpec {
            actions: vec![Action::Straight],
            ..TrajectorySpec::default()
        };
        let dist = spec.generate(1.5, 0.0, 0.1).unwrap();
        assert!(matches!(
            action_collision_cost(Action::Up, &dist, &map, 0.0),
            Err(Error::UnknownAction(Action::Up))
        ));
    }

    #[test]
    fn action_set_requires_straight_and_distinct() {
        assert!(ActionSet::new(vec![Action::TurnLeft]).is_err());
        assert!(ActionSet::new(vec![Action::Straight, Action::Up, Action::Up]).is_err());
        assert_eq!("a2".parse::<Action>().unwrap(), Action::TurnRight);
        assert!("a9".parse::<Action>().is_err());
    }

    #[test]
    fn arcs_turn_by_rate_times_horizon_and_saturate_pitch() {
        let spec = TrajectorySpec::default();
        let dist = spec.generate(1.5, 0.0, 0.1).unwrap();
        let right = dist.nominal(Action::TurnRight).unwrap();
        assert_eq!(right.terminal_yaw, 100.0);
        assert!(right.samples.iter().all(|p| p[1] >= 0.0));
        let up = dist.nominal(Action::Up).unwrap();
        assert_eq!(up.terminal_pitch, 30.0);
        assert!(up.samples.last().unwrap()[2] < 0.0);
        for pair in right.samples.windows(2) {
            let step: f64 = (0..3).map(|d| (pair[1][d] - pair[0][d]).powi(2)).sum::<f64>().sqrt();
            assert!(step <= 0.1 + 1e-12);
        }
    }
}
