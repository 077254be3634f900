//! The per-ping perception and decision cycle shared by live missions and
//! log replay: propagate the map over the elapsed time, fold in the ping,
//! then pick an action.
//!
//! Everything the cycle consumes comes from a ping and a navigation record,
//! so feeding the same records in the same order gives the same decisions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::{bin_likelihoods, ChannelModel, Ping};
use crate::decision::{
    commit_to, select_action_prepared, Action, DecisionReport, LossSpec, PreparedTrajectories,
    TrajectorySpec, Waypoint,
};
use crate::error::{Error, Result};
use crate::geometry::{BeamLayout, PolarMap, DEFAULT_CLAMP_EPS};
use crate::logio::NavRecord;
use crate::motion::{KernelCache, PropagationSettings, Propagator, VelocityDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSpec {
    pub prior: f64,
    pub clamp_eps: f64,
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec {
            prior: 0.5,
            clamp_eps: DEFAULT_CLAMP_EPS,
        }
    }
}

/// Navigation uncertainty fed to propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSpec {
    /// Speed standard deviation as a fraction of speed.
    pub speed_sigma_frac: f64,
    /// Yaw and pitch rate standard deviation, deg/s.
    pub rate_sigma_dps: f64,
    /// Gauss-Hermite points per velocity axis.
    pub points: usize,
    pub propagation: PropagationSettings,
}

impl Default for MotionSpec {
    fn default() -> Self {
        MotionSpec {
            speed_sigma_frac: 0.05,
            rate_sigma_dps: 1.0,
            points: 7,
            propagation: PropagationSettings::default(),
        }
    }
}

impl MotionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_sigma_frac >= 0.0 && self.speed_sigma_frac.is_finite()) {
            return Err(Error::config("motion.speed_sigma_frac", "must be >= 0"));
        }
        if !(self.rate_sigma_dps >= 0.0 && self.rate_sigma_dps.is_finite()) {
            return Err(Error::config("motion.rate_sigma_dps", "must be >= 0"));
        }
        if self.points == 0 {
            return Err(Error::config("motion.points", "must be >= 1"));
        }
        let q = self.propagation.displacement_quantum;
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::config(
                "motion.propagation.displacement_quantum",
                "must be >= 0",
            ));
        }
        let rule = self.propagation.quadrature;
        if !(rule.max_panel_deg > 0.0) || rule.order == 0 {
            return Err(Error::config("motion.propagation.quadrature", "panel and order must be positive"));
        }
        Ok(())
    }

    /// Velocity samples for the interval between two navigation records.
    pub fn velocity(&self, prev: &NavRecord, cur: &NavRecord) -> Result<VelocityDistribution> {
        let tau = cur.timestamp - prev.timestamp;
        let rate = |a: f64, b: f64| {
            if tau > 0.0 {
                wrap_degrees(b - a) / tau
            } else {
                0.0
            }
        };
        let mean = (prev.speed, rate(prev.yaw, cur.yaw), rate(prev.pitch, cur.pitch));
        let sigma = (
            self.speed_sigma_frac * prev.speed.abs(),
            self.rate_sigma_dps,
            self.rate_sigma_dps,
        );
        VelocityDistribution::normal(mean, sigma, self.points)
    }
}

/// Angle wrapped to `(-180, 180]` degrees.
pub fn wrap_degrees(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Everything the cycle needs besides the inputs of each ping.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub layout: Arc<BeamLayout>,
    pub map: MapSpec,
    pub channel: ChannelModel,
    pub loss: LossSpec,
    pub trajectories: TrajectorySpec,
    pub motion: MotionSpec,
    /// Pings at the start during which a0 is issued regardless of the risks,
    /// while the map leaves its prior.
    pub warmup_pings: usize,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.map.prior) {
            return Err(Error::config("map.prior", "must be in [0, 1]"));
        }
        if !(0.0..0.5).contains(&self.map.clamp_eps) {
            return Err(Error::config("map.clamp_eps", "must be in [0, 0.5)"));
        }
        self.channel.validate()?;
        self.loss.validate()?;
        self.trajectories.validate()?;
        self.motion.validate()
    }
}

/// Result of one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub timestamp: f64,
    /// Action issued to the vehicle.
    pub command: Action,
    pub report: DecisionReport,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    map: PolarMap,
    propagator: Propagator,
    prepared: Option<((u64, u64), PreparedTrajectories)>,
    prev: Option<NavRecord>,
    last_command: Action,
    cycles: usize,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, cache: Arc<KernelCache>) -> Result<Self> {
        cfg.validate()?;
        let map = PolarMap::new(Arc::clone(&cfg.layout), cfg.map.prior)?.with_clamp(cfg.map.clamp_eps);
        let propagator = Propagator::with_cache(cfg.motion.propagation, cache);
        Ok(Pipeline {
            cfg,
            map,
            propagator,
            prepared: None,
            prev: None,
            last_command: Action::Straight,
            cycles: 0,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn map(&self) -> &PolarMap {
        &self.map
    }

    pub fn cycles(&self) -> usize {
        self.cycles
    }

    /// Candidate trajectories at the vehicle's current speed and pitch.
    pub fn trajectories(&mut self, speed: f64, pitch: f64) -> Result<&PreparedTrajectories> {
        self.prepare(speed, pitch)?;
        Ok(&self.prepared.as_ref().expect("just prepared").1)
    }

    fn prepare(&mut self, speed: f64, pitch: f64) -> Result<()> {
        let key = (speed.to_bits(), pitch.to_bits());
        if self.prepared.as_ref().is_none_or(|(k, _)| *k != key) {
            let spacing = self.cfg.layout.cell_length() / 2.0;
            let dist = self.cfg.trajectories.generate(speed, pitch, spacing)?;
            self.prepared = Some((key, PreparedTrajectories::new(dist, &self.cfg.layout)));
        }
        Ok(())
    }

    /// Runs one cycle on a ping and the navigation record at its timestamp.
    pub fn process(&mut self, ping: &Ping, nav: &NavRecord, waypoint: Option<&Waypoint>) -> Result<Cycle> {
        if let Some(prev) = self.prev {
            let tau = nav.timestamp - prev.timestamp;
            if tau < 0.0 {
                return Err(Error::Alignment(format!(
                    "navigation time goes back from {} to {}",
                    prev.timestamp, nav.timestamp
                )));
            }
            let vel = self.cfg.motion.velocity(&prev, nav)?;
            self.propagator.propagate(&mut self.map, &vel, tau)?;
        }
        self.map.set_timestamp(ping.timestamp());
        let lik = bin_likelihoods(ping, &self.cfg.layout, &self.cfg.channel)?;
        self.map.bayes_update(&lik)?;

        let warm = self.cycles < self.cfg.warmup_pings;
        self.prepare(nav.speed, nav.pitch)?;
        let prepared = &self.prepared.as_ref().expect("just prepared").1;
        let report = select_action_prepared(&self.map, prepared, waypoint, &self.cfg.loss)?;
        let report = commit_to(report, self.last_command, &self.cfg.loss)?;
        let command = if warm { Action::Straight } else { report.chosen };
        self.last_command = command;
        self.prev = Some(*nav);
        self.cycles += 1;
        Ok(Cycle {
            timestamp: ping.timestamp(),
            command,
            report,
        })
    }
}
