#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sonar_avoid::config::RunConfig;
use sonar_avoid::decision::{Action, Trajectory};
use sonar_avoid::geometry::{to_cartesian, to_spherical, BeamLayout, PolarMap, Topology};
use sonar_avoid::logio::Outcome;
use sonar_avoid::motion::{rotational_overlap, translational_overlap, VelocityDistribution};
use sonar_avoid::sim::{MissionLog, NoiseBurst, Obstacle, Scene};

pub const SURVEY: &str = include_str!("../../../../configs/survey.toml");
pub const TRANSIT: &str = include_str!("../../../../configs/transit.toml");

/// Three side-by-side 10-degree beams, ten bins over 10 m.
pub fn small_layout() -> Arc<BeamLayout> {
    Arc::new(
        BeamLayout::new(
            vec![-15.0, -5.0, 5.0, 15.0],
            vec![-5.0, 5.0],
            10,
            10.0,
            Topology::FullGrid,
        )
        .unwrap(),
    )
}

pub fn random_map(layout: &Arc<BeamLayout>, prior: f64, rng: &mut impl Rng) -> PolarMap {
    let mut map = PolarMap::new(Arc::clone(layout), prior).unwrap();
    for p in map.probs_mut() {
        *p = rng.random::<f64>();
    }
    map
}

/// Cell containing a point, found by testing every cell's extent.
pub fn cell_by_scan(layout: &BeamLayout, p: [f64; 3]) -> Option<usize> {
    let (r, theta, phi) = to_spherical(p);
    (0..layout.cell_count()).find(|&c| layout.extent(c).contains(r, theta, phi))
}

/// Volume-uniform point inside `cell`.
pub fn sample_in_cell(layout: &BeamLayout, cell: usize, rng: &mut impl Rng) -> [f64; 3] {
    let e = layout.extent(cell);
    let (r0, r1) = e.r;
    let r = (r0.powi(3) + rng.random::<f64>() * (r1.powi(3) - r0.powi(3))).cbrt();
    let theta = e.theta.0 + rng.random::<f64>() * (e.theta.1 - e.theta.0);
    let (s0, s1) = (e.phi.0.to_radians().sin(), e.phi.1.to_radians().sin());
    let phi = (s0 + rng.random::<f64>() * (s1 - s0)).asin().to_degrees();
    to_cartesian(r, theta, phi)
}

/// Monte Carlo estimate of the fraction of `target` whose pre-image under a
/// forward displacement `d` lies in each source cell.
pub fn mc_inflow(layout: &BeamLayout, target: usize, d: f64, samples: usize, seed: u64) -> BTreeMap<usize, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = BTreeMap::new();
    for _ in 0..samples {
        let q = sample_in_cell(layout, target, &mut rng);
        if let Some(s) = layout.locate([q[0] + d, q[1], q[2]]) {
            *counts.entry(s).or_insert(0usize) += 1;
        }
    }
    counts
        .into_iter()
        .map(|(s, c)| (s, c as f64 / samples as f64))
        .collect()
}

/// Propagation evaluated term by term from the pairwise overlap functions,
/// summing over every source cell and velocity sample. Only valid for
/// single-fan layouts.
pub fn direct_propagation(map: &PolarMap, vel: &VelocityDistribution, tau: f64) -> Vec<f64> {
    let layout = map.layout();
    let cells = layout.cell_count();
    let prior = map.prior();
    let p = map.probs();
    let mut translated = vec![0.0; cells];
    for (t, out) in translated.iter_mut().enumerate() {
        let ti = layout.cell_index(t);
        for &(v, w) in vel.translational() {
            let mut sum = 0.0;
            let mut covered = 0.0;
            for (s, ps) in p.iter().enumerate() {
                let f = translational_overlap(layout, layout.cell_index(s), ti, v, tau).unwrap();
                sum += f * ps;
                covered += f;
            }
            *out += w * (sum + (1.0 - covered).max(0.0) * prior);
        }
        *out = out.clamp(0.0, 1.0);
    }
    let mut rotated = vec![0.0; cells];
    for (t, out) in rotated.iter_mut().enumerate() {
        let ti = layout.cell_index(t);
        for &((vt, vp), w) in vel.rotational() {
            let mut sum = 0.0;
            let mut covered = 0.0;
            for (s, ps) in translated.iter().enumerate() {
                let f = rotational_overlap(layout, layout.cell_index(s), ti, vt, vp, tau).unwrap();
                sum += f * ps;
                covered += f;
            }
            *out += w * (sum + (1.0 - covered).max(0.0) * prior);
        }
        *out = out.clamp(0.0, 1.0);
    }
    rotated
}

/// Polyline from the origin with a random initial direction and steady
/// curvature.
pub fn random_trajectory(rng: &mut impl Rng, max_len: f64) -> Trajectory {
    let len = rng.random_range(0.0..max_len);
    let mut yaw: f64 = rng.random_range(-20.0..20.0);
    let mut pitch: f64 = rng.random_range(-6.0..6.0);
    let (dyaw, dpitch) = (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0));
    let step = 0.1;
    let mut p = [0.0; 3];
    let mut samples = vec![p];
    let mut s = 0.0;
    while s < len {
        let dir = to_cartesian(step, yaw, pitch);
        for k in 0..3 {
            p[k] += dir[k];
        }
        samples.push(p);
        yaw += dyaw * step;
        pitch += dpitch * step;
        s += step;
    }
    Trajectory {
        samples,
        envelope: Vec::new(),
        duration: len / 1.5,
        terminal_yaw: yaw,
        terminal_pitch: pitch,
        weight: 1.0,
    }
}

pub fn survey_config() -> RunConfig {
    RunConfig::from_toml_str(SURVEY).unwrap()
}

/// Transit scenario for one seed: the target just off the track with a
/// jittered strength, and three noise bursts on the center beam.
pub fn transit_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_toml_str(TRANSIT).unwrap();
    let (jc, kc) = cfg.layout.center();
    let center = cfg.layout.beam_at(jc, kc).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let offset = rng.random_range(0.5..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let bursts = (0..3)
        .map(|b| NoiseBurst {
            start_s: 3.0 + 9.0 * b as f64 + rng.random_range(0.0..3.0),
            duration_s: rng.random_range(2.0..4.0),
            beam: center,
            level_db: rng.random_range(4.2..4.8),
        })
        .collect();
    cfg.scene = Some(Scene {
        obstacles: vec![Obstacle {
            position: [0.0, offset, 10.0],
            radius: 1.0,
            target_strength_db: 15.0 + rng.random_range(-1.0..1.0),
        }],
        bursts,
        ..Scene::default()
    });
    cfg.sim.seeds = vec![seed];
    cfg
}

/// A run of at least ten identical turn commands issued within 20 m of the
/// obstacle while the range closes, followed later by at least 20
/// consecutive straight commands, in a completed mission.
pub fn turns_then_returns(log: &MissionLog) -> bool {
    if log.summary.outcome != Outcome::Completed {
        return false;
    }
    let cmds: Vec<Action> = log.trace.iter().map(|r| r.command).collect();
    let dist: Vec<f64> = log.truth.iter().map(|t| t.min_distance).collect();
    let mut k = 0;
    while k < cmds.len() {
        if cmds[k] == Action::Straight || dist[k] >= 20.0 {
            k += 1;
            continue;
        }
        let mut end = k;
        while end < cmds.len() && cmds[end] == cmds[k] {
            end += 1;
        }
        if end - k >= 10 && dist[end - 1] < dist[k] {
            let mut run = 0;
            for c in &cmds[end..] {
                run = if *c == Action::Straight { run + 1 } else { 0 };
                if run >= 20 {
                    return true;
                }
            }
        }
        k = end;
    }
    false
}
