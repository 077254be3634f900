//! Single TOML run configuration covering simulation, replay and sweeps.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::decision::{LossSpec, TrajectorySpec};
use crate::error::{Error, Result};
use crate::geometry::BeamLayout;
use crate::logio;
use crate::pipeline::{MapSpec, MotionSpec, PipelineConfig};
use crate::replay::ReplayConfig;
use crate::sim::{lawnmower, KinematicLimits, MissionScript, MissionSetup, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawnmowerSpec {
    pub center: [f64; 2],
    pub leg_length: f64,
    pub spacing: f64,
    pub legs: usize,
    pub depth: f64,
}

/// Waypoints given either explicitly or as a lawnmower pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSpec {
    #[serde(default)]
    pub waypoints: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub lawnmower: Option<LawnmowerSpec>,
    #[serde(default = "default_acceptance")]
    pub acceptance_radius: f64,
}

fn default_acceptance() -> f64 {
    3.0
}

impl Default for MissionSpec {
    fn default() -> Self {
        MissionSpec {
            waypoints: None,
            lawnmower: Some(LawnmowerSpec {
                center: [0.0, 0.0],
                leg_length: 80.0,
                spacing: 20.0,
                legs: 3,
                depth: 10.0,
            }),
            acceptance_radius: default_acceptance(),
        }
    }
}

impl MissionSpec {
    pub fn script(&self) -> Result<MissionScript> {
        match (&self.waypoints, &self.lawnmower) {
            (Some(w), None) => {
                let s = MissionScript {
                    waypoints: w.clone(),
                    acceptance_radius: self.acceptance_radius,
                };
                s.validate()?;
                Ok(s)
            }
            (None, Some(l)) => lawnmower(
                l.center,
                l.leg_length,
                l.spacing,
                l.legs,
                l.depth,
                self.acceptance_radius,
            ),
            _ => Err(Error::config(
                "mission",
                "give exactly one of `waypoints` or `lawnmower`",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub seeds: Vec<u64>,
    /// When set, replaces `seeds` with `0..seed_count`.
    pub seed_count: Option<u64>,
    pub ping_period_s: f64,
    pub vehicle_radius_m: f64,
    pub warmup_pings: usize,
    pub avoidance: bool,
    pub stop_on_collision: bool,
    pub record_pings: bool,
    pub timeout_factor: f64,
    pub obstacle_jitter_m: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            seeds: vec![0],
            seed_count: None,
            ping_period_s: 0.1,
            vehicle_radius_m: 0.5,
            warmup_pings: 10,
            avoidance: true,
            stop_on_collision: true,
            record_pings: true,
            timeout_factor: 3.0,
            obstacle_jitter_m: 0.0,
        }
    }
}

impl SimSpec {
    pub fn seed_list(&self) -> Vec<u64> {
        match self.seed_count {
            Some(n) => (0..n).collect(),
            None => self.seeds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "BeamLayout::prototype")]
    pub layout: BeamLayout,
    #[serde(default)]
    pub map: MapSpec,
    #[serde(default)]
    pub channel: ChannelModel,
    #[serde(default)]
    pub limits: KinematicLimits,
    #[serde(default)]
    pub loss: LossSpec,
    #[serde(default)]
    pub trajectories: TrajectorySpec,
    #[serde(default)]
    pub motion: MotionSpec,
    #[serde(default)]
    pub scene: Option<Scene>,
    #[serde(default)]
    pub mission: MissionSpec,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub replay: ReplayConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            layout: BeamLayout::prototype(),
            map: MapSpec::default(),
            channel: ChannelModel::default(),
            limits: KinematicLimits::default(),
            loss: LossSpec::default(),
            trajectories: TrajectorySpec::default(),
            motion: MotionSpec::default(),
            scene: None,
            mission: MissionSpec::default(),
            sim: SimSpec::default(),
            replay: ReplayConfig::default(),
        }
    }
}

fn parse_error(e: toml::de::Error) -> Error {
    let key = e
        .message()
        .split('`')
        .nth(1)
        .unwrap_or("")
        .to_string();
    Error::config(key, e.to_string().trim_end().to_string())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(parse_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&logio::read_text(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks every section except `scene`, which only simulation needs.
    pub fn validate(&self) -> Result<()> {
        self.pipeline()?.validate()?;
        self.limits.validate()?;
        self.mission.script()?;
        if let Some(scene) = &self.scene {
            scene.validate()?;
        }
        if self.sim.seed_list().is_empty() {
            return Err(Error::config("sim.seeds", "need at least one seed"));
        }
        self.replay.validate()
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            layout: Arc::new(self.layout.clone()),
            map: self.map,
            channel: self.channel,
            loss: self.loss.clone(),
            trajectories: self.trajectories.clone(),
            motion: self.motion,
            warmup_pings: self.sim.warmup_pings,
        })
    }

    /// Mission setup; requires the `scene` section.
    pub fn mission_setup(&self) -> Result<MissionSetup> {
        let scene = self
            .scene
            .clone()
            .ok_or_else(|| Error::config("scene", "section is required to simulate"))?;
        let setup = MissionSetup {
            pipeline: self.pipeline()?,
            limits: self.limits,
            scene,
            script: self.mission.script()?,
            ping_period_s: self.sim.ping_period_s,
            vehicle_radius_m: self.sim.vehicle_radius_m,
            timeout_factor: self.sim.timeout_factor,
            obstacle_jitter_m: self.sim.obstacle_jitter_m,
        };
        setup.validate()?;
        Ok(setup)
    }
}

/// Returns `text` with the scalar at dotted `key` replaced by `value`.
/// The value is parsed as TOML (number, bool or quoted string) and must
/// have the same kind as the value it replaces; absent keys under an
/// existing table are added.
pub fn override_scalar(text: &str, key: &str, value: &str) -> Result<String> {
    let mut doc: toml::Table = toml::from_str(text).map_err(parse_error)?;
    let new = parse_scalar(value).ok_or_else(|| Error::config(key, format!("`{value}` is not a scalar")))?;
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = &mut doc;
    for p in parents {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    if let Some(old) = table.get(*last) {
        let same = matches!(
            (old, &new),
            (toml::Value::Integer(_) | toml::Value::Float(_), toml::Value::Integer(_) | toml::Value::Float(_))
                | (toml::Value::Boolean(_), toml::Value::Boolean(_))
                | (toml::Value::String(_), toml::Value::String(_))
        );
        if !same {
            return Err(Error::config(key, "not a scalar key of matching type"));
        }
        let new = match (old, new) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(last.to_string(), new);
    } else {
        table.insert(last.to_string(), new);
    }
    Ok(toml::to_string(&doc).expect("table serializes"))
}

fn parse_scalar(value: &str) -> Option<toml::Value> {
    let wrapped: toml::Table = toml::from_str(&format!("v = {value}"))
        .or_else(|_| toml::from_str(&format!("v = {:?}", value)))
        .ok()?;
    let v = wrapped.get("v")?.clone();
    match v {
        toml::Value::Array(_) | toml::Value::Table(_) => None,
        v => Some(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig {
            scene: Some(Scene::default()),
            ..RunConfig::default()
        };
        let text = cfg.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml_str("[loss]\nc_dd = 0.5\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "c_dd"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_scene_is_named() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        match cfg.mission_setup().unwrap_err() {
            Error::Config { key, .. } => assert_eq!(key, "scene"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn invalid_value_is_named() {
        let err = RunConfig::from_toml_str("[loss]\nc_d = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("loss.c_d"), "{err}");
    }

    #[test]
    fn override_scalar_replaces_numbers_and_rejects_tables() {
        let text = "[loss]\nc_d = 0.5\n[channel]\ndelta_db = 10.0\n";
        let out = override_scalar(text, "loss.c_d", "0").unwrap();
        let cfg = RunConfig::from_toml_str(&out).unwrap();
        assert_eq!(cfg.loss.c_d, 0.0);
        assert!(override_scalar(text, "loss", "1").is_err());
        let added = override_scalar("", "channel.delta_db", "4").unwrap();
        assert_eq!(RunConfig::from_toml_str(&added).unwrap().channel.delta_db(), 4.0);
    }
}
