//! Sonar returns: per-cell likelihoods from measured intensities, and a
//! parametric ping synthesizer for simulated scenes.
//!
//! The likelihood model is two Gaussians in dB sharing one spread: background
//! `N(H0, sigma)` for a free cell and `N(H0 + delta, sigma)` for an occupied
//! one. Smaller `delta` means higher sensitivity.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{to_cartesian, BeamLayout, Likelihood};
use crate::sim::{Scene, VehicleState};

/// One sonar measurement set: intensity bins (dB) per beam at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Ping {
    timestamp: f64,
    beam_ids: Vec<usize>,
    intensities: Vec<Vec<f64>>,
}

impl Ping {
    pub fn new(timestamp: f64, beam_ids: Vec<usize>, intensities: Vec<Vec<f64>>) -> Result<Self> {
        if !timestamp.is_finite() {
            return Err(Error::Alignment(format!("timestamp {timestamp} is not finite")));
        }
        if beam_ids.len() != intensities.len() {
            return Err(Error::Alignment(format!(
                "{} beam ids for {} intensity vectors",
                beam_ids.len(),
                intensities.len()
            )));
        }
        let mut seen = beam_ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Alignment("beam id listed twice".into()));
        }
        if let Some(first) = intensities.first() {
            if intensities.iter().any(|v| v.len() != first.len()) {
                return Err(Error::Alignment("beams have different bin counts".into()));
            }
        }
        if intensities.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Alignment("non-finite intensity".into()));
        }
        Ok(Ping {
            timestamp,
            beam_ids,
            intensities,
        })
    }

    /// Ping covering beams `0..intensities.len()` in order.
    pub fn full(timestamp: f64, intensities: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..intensities.len()).collect();
        Ping::new(timestamp, ids, intensities)
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn beam_ids(&self) -> &[usize] {
        &self.beam_ids
    }

    pub fn intensities(&self) -> &[Vec<f64>] {
        &self.intensities
    }

    pub fn beam(&self, id: usize) -> Option<&[f64]> {
        let pos = self.beam_ids.iter().position(|&b| b == id)?;
        Some(&self.intensities[pos])
    }

    pub fn bins_per_beam(&self) -> usize {
        self.intensities.first().map_or(0, Vec::len)
    }
}

/// Assumed obstacle excess over background, dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensitivityLevel {
    delta_db: f64,
}

impl SensitivityLevel {
    pub fn new(delta_db: f64) -> Result<Self> {
        if !(delta_db > 0.0 && delta_db.is_finite()) {
            return Err(Error::config("channel.delta_db", format!("{delta_db} must be > 0")));
        }
        Ok(SensitivityLevel { delta_db })
    }

    pub fn delta_db(&self) -> f64 {
        self.delta_db
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModel {
    /// Background level `H0` of an empty bin, dB.
    pub background_db: f64,
    /// Spread of both hypotheses, dB.
    pub noise_sigma_db: f64,
    #[serde(rename = "delta_db")]
    pub sensitivity: SensitivityLevel,
    /// Range at which the spreading penalty is zero, m.
    pub reference_range_m: f64,
    /// Synthesized intensities are rounded to this step, dB; 0 disables.
    pub quantum_db: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            background_db: 60.0,
            noise_sigma_db: 3.0,
            sensitivity: SensitivityLevel { delta_db: 10.0 },
            reference_range_m: 10.0,
            quantum_db: 0.01,
        }
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !self.background_db.is_finite() {
            return Err(Error::config("channel.background_db", "must be finite"));
        }
        if !(self.noise_sigma_db > 0.0 && self.noise_sigma_db.is_finite()) {
            return Err(Error::config("channel.noise_sigma_db", "must be > 0"));
        }
        SensitivityLevel::new(self.sensitivity.delta_db)?;
        if !(self.reference_range_m > 0.0 && self.reference_range_m.is_finite()) {
            return Err(Error::config("channel.reference_range_m", "must be > 0"));
        }
        if !(self.quantum_db >= 0.0 && self.quantum_db.is_finite()) {
            return Err(Error::config("channel.quantum_db", "must be >= 0"));
        }
        Ok(())
    }

    pub fn delta_db(&self) -> f64 {
        self.sensitivity.delta_db()
    }

    /// Same model at another sensitivity level.
    pub fn with_delta(&self, delta_db: f64) -> Result<Self> {
        Ok(ChannelModel {
            sensitivity: SensitivityLevel::new(delta_db)?,
            ..*self
        })
    }

    /// `(L1, L0)` for one intensity `z` against background `h0`.
    ///
    /// These are the two Gaussian densities. If either would underflow, both
    /// are rescaled by the same factor so the pair stays positive; Bayes'
    /// rule only sees their ratio.
    pub fn likelihood_at(&self, z: f64, h0: f64) -> Likelihood {
        let s = self.noise_sigma_db;
        let log_density = |mean: f64| {
            let u = (z - mean) / s;
            -0.5 * u * u - s.ln() - LN_SQRT_2PI
        };
        let l1 = log_density(h0 + self.delta_db());
        let l0 = log_density(h0);
        let floor = f64::MIN_POSITIVE.ln();
        let shift = if l1.min(l0) < floor { l1.max(l0) } else { 0.0 };
        Likelihood {
            occupied: (l1 - shift).exp().max(f64::MIN_POSITIVE),
            free: (l0 - shift).exp().max(f64::MIN_POSITIVE),
        }
    }

    /// Log-likelihood ratio `ln(L1 / L0)`, exact even where densities underflow.
    pub fn log_likelihood_ratio(&self, z: f64, h0: f64) -> f64 {
        let d = self.delta_db();
        d * (z - h0 - 0.5 * d) / (self.noise_sigma_db * self.noise_sigma_db)
    }
}

/// Per-cell likelihoods for a ping using the model's constant background.
/// Cells of beams absent from the ping are `None` (not ensonified).
pub fn bin_likelihoods(
    ping: &Ping,
    layout: &BeamLayout,
    model: &ChannelModel,
) -> Result<Vec<Option<Likelihood>>> {
    let background = vec![model.background_db; layout.beam_count()];
    likelihoods_with_background(ping, layout, model, &background)
}

/// Like [`bin_likelihoods`] with one background level per layout beam.
///
/// A ping may carry `q * bin_count` bins per beam; each cell then uses the
/// strongest of its `q` bins.
pub fn likelihoods_with_background(
    ping: &Ping,
    layout: &BeamLayout,
    model: &ChannelModel,
    background: &[f64],
) -> Result<Vec<Option<Likelihood>>> {
    let cells = layout.bin_count();
    let bins = ping.bins_per_beam();
    if background.len() != layout.beam_count() {
        return Err(Error::Alignment(format!(
            "{} background levels for {} beams",
            background.len(),
            layout.beam_count()
        )));
    }
    if !ping.beam_ids().is_empty() && (bins == 0 || bins % cells != 0) {
        return Err(Error::Alignment(format!(
            "{bins} bins per beam cannot be split into {cells} cells"
        )));
    }
    let per_cell = bins / cells.max(1);
    let mut out = vec![None; layout.cell_count()];
    for (&beam, values) in ping.beam_ids().iter().zip(ping.intensities()) {
        if beam >= layout.beam_count() {
            return Err(Error::Alignment(format!(
                "beam id {beam} outside layout of {} beams",
                layout.beam_count()
            )));
        }
        for (c, chunk) in values.chunks(per_cell).enumerate() {
            let z = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out[layout.flat(beam, c + 1)] = Some(model.likelihood_at(z, background[beam]));
        }
    }
    Ok(out)
}

/// Per-beam running median of each ping's median intensity, as a
/// background estimate for logs whose `H0` is unknown.
#[derive(Debug, Clone)]
pub struct BackgroundEstimator {
    window: usize,
    history: Vec<VecDeque<f64>>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl BackgroundEstimator {
    pub fn new(beams: usize, window: usize) -> Self {
        BackgroundEstimator {
            window: window.max(1),
            history: vec![VecDeque::new(); beams],
        }
    }

    pub fn observe(&mut self, ping: &Ping) {
        for (&beam, values) in ping.beam_ids().iter().zip(ping.intensities()) {
            if beam >= self.history.len() || values.is_empty() {
                continue;
            }
            let mut v = values.clone();
            let m = median(&mut v);
            let h = &mut self.history[beam];
            if h.len() == self.window {
                h.pop_front();
            }
            h.push_back(m);
        }
    }

    /// Current estimate for `beam`, or `None` before any observation.
    pub fn background(&self, beam: usize) -> Option<f64> {
        let h = self.history.get(beam)?;
        if h.is_empty() {
            return None;
        }
        let mut v: Vec<f64> = h.iter().copied().collect();
        Some(median(&mut v))
    }

    /// Estimates for every beam, falling back to `default` where unknown.
    pub fn levels(&self, default: f64) -> Vec<f64> {
        (0..self.history.len())
            .map(|b| self.background(b).unwrap_or(default))
            .collect()
    }
}

/// Angular distance (degrees) from direction `(theta, phi)` to the nearest
/// direction inside the beam's angular box.
fn angular_gap(theta: f64, phi: f64, beam_theta: (f64, f64), beam_phi: (f64, f64)) -> f64 {
    let t = theta.clamp(beam_theta.0, beam_theta.1);
    let p = phi.clamp(beam_phi.0, beam_phi.1);
    let a = to_cartesian(1.0, theta, phi);
    let b = to_cartesian(1.0, t, p);
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Echo excess (dB) of a target of strength `ts_db` at range `r`.
pub fn echo_excess(ts_db: f64, r: f64, model: &ChannelModel) -> f64 {
    ts_db - 20.0 * (r.max(1e-3) / model.reference_range_m).log10()
}

/// Synthetic ping for `state` in `scene`. A pure function of its inputs:
/// every bin starts at `H0`, each obstacle adds its echo excess to one bin
/// (its near-surface range) in every beam its angular disk touches, active
/// noise bursts raise whole beams, then Gaussian noise is added.
pub fn synth_ping(
    scene: &Scene,
    state: &VehicleState,
    layout: &BeamLayout,
    model: &ChannelModel,
    seed: u64,
) -> Ping {
    let bins = layout.bin_count();
    let mut beams = vec![vec![model.background_db; bins]; layout.beam_count()];

    for obs in &scene.obstacles {
        let rel = state.to_body(obs.position);
        let r = rel.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r <= obs.radius {
            continue;
        }
        let Some(i) = layout.radial_index(r - obs.radius) else {
            continue;
        };
        let (_, theta, phi) = crate::geometry::to_spherical(rel);
        let disk = (obs.radius / r).asin().to_degrees();
        let excess = echo_excess(obs.target_strength_db, r - obs.radius, model);
        for (b, beam) in layout.beams().iter().enumerate() {
            if angular_gap(theta, phi, beam.theta, beam.phi) <= disk {
                beams[b][i - 1] += excess;
            }
        }
    }

    for burst in &scene.bursts {
        if state.time >= burst.start_s && state.time < burst.start_s + burst.duration_s {
            if let Some(values) = beams.get_mut(burst.beam) {
                for v in values.iter_mut() {
                    *v += burst.level_db;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, model.noise_sigma_db).expect("sigma validated positive");
    let q = model.quantum_db;
    for values in &mut beams {
        for v in values.iter_mut() {
            *v += noise.sample(&mut rng);
            if q > 0.0 {
                *v = (*v / q).round() / q.recip();
            }
        }
    }
    Ping::full(state.time, beams).expect("synthesized ping is well formed")
}

/// Per-ping seed derived from a run seed, so pings are independent streams.
pub fn ping_seed(run_seed: u64, ping_index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = run_seed ^ ping_index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
