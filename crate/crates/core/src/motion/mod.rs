//! Propagation of the polar map between pings.
//!
//! Velocities are the vehicle's own motion: `v_x` forward speed (m/s) and
//! `(v_theta, v_phi)` yaw and pitch rates (deg/s). The scene therefore moves
//! by `-v_x tau` along the sonar axis and rotates by `-(v_theta, v_phi) tau`.
//! Translation is applied first, then rotation. Each step is a sparse linear
//! operator on the cell probabilities plus a prior fill for the part of a
//! cell whose pre-image lies outside the map.

mod rotation;
mod translation;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BeamLayout, CellIndex, PolarMap};
use crate::quadrature::{gauss_hermite, AngularRule};

use rotation::BeamOperator;

/// Weighted velocity samples shared by every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityDistribution {
    translational: Vec<(f64, f64)>,
    rotational: Vec<((f64, f64), f64)>,
}

fn check_weights<'a>(key: &str, weights: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut total = 0.0;
    let mut count = 0;
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::config(key, format!("weight {w} is not a finite non-negative number")));
        }
        total += w;
        count += 1;
    }
    if count == 0 {
        return Err(Error::config(key, "empty velocity sample set"));
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(key, format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

impl VelocityDistribution {
    pub fn new(translational: Vec<(f64, f64)>, rotational: Vec<((f64, f64), f64)>) -> Result<Self> {
        check_weights("velocity.translational", translational.iter().map(|(_, w)| w))?;
        check_weights("velocity.rotational", rotational.iter().map(|(_, w)| w))?;
        if translational.iter().any(|(v, _)| !v.is_finite())
            || rotational.iter().any(|((a, b), _)| !(a.is_finite() && b.is_finite()))
        {
            return Err(Error::config("velocity", "non-finite velocity sample"));
        }
        Ok(VelocityDistribution {
            translational,
            rotational,
        })
    }

    pub fn deterministic(v_x: f64, v_theta: f64, v_phi: f64) -> Self {
        VelocityDistribution {
            translational: vec![(v_x, 1.0)],
            rotational: vec![((v_theta, v_phi), 1.0)],
        }
    }

    /// Gauss-Hermite discretization of independent normals on speed, yaw
    /// rate and pitch rate with `points` nodes per axis. A zero sigma
    /// collapses that axis to its mean.
    pub fn normal(
        mean: (f64, f64, f64),
        sigma: (f64, f64, f64),
        points: usize,
    ) -> Result<Self> {
        if points == 0 {
            return Err(Error::config("motion.points", "need at least one sample"));
        }
        let axis = |mu: f64, sd: f64| -> Vec<(f64, f64)> {
            if sd <= 0.0 || points == 1 {
                return vec![(mu, 1.0)];
            }
            let (x, w) = gauss_hermite(points);
            let norm: f64 = w.iter().sum();
            x.iter()
                .zip(&w)
                .map(|(x, w)| (mu + std::f64::consts::SQRT_2 * sd * x, w / norm))
                .collect()
        };
        let translational = axis(mean.0, sigma.0);
        let yaw = axis(mean.1, sigma.1);
        let pitch = axis(mean.2, sigma.2);
        let mut rotational = Vec::with_capacity(yaw.len() * pitch.len());
        for &(vt, wt) in &yaw {
            for &(vp, wp) in &pitch {
                rotational.push(((vt, vp), wt * wp));
            }
        }
        VelocityDistribution::new(translational, rotational)
    }

    /// Equal-weight midpoint grid over `[lo, hi]` on each axis.
    pub fn uniform(
        speed: (f64, f64),
        yaw_rate: (f64, f64),
        pitch_rate: (f64, f64),
        points: usize,
    ) -> Result<Self> {
        if points == 0 {
            return Err(Error::config("motion.points", "need at least one sample"));
        }
        let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
            (0..points)
                .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / points as f64)
                .collect()
        };
        let w = 1.0 / points as f64;
        let translational = axis(speed).into_iter().map(|v| (v, w)).collect();
        let mut rotational = Vec::new();
        for vt in axis(yaw_rate) {
            for vp in axis(pitch_rate) {
                rotational.push(((vt, vp), w * w));
            }
        }
        VelocityDistribution::new(translational, rotational)
    }

    pub fn translational(&self) -> &[(f64, f64)] {
        &self.translational
    }

    pub fn rotational(&self) -> &[((f64, f64), f64)] {
        &self.rotational
    }
}

/// Numerical settings of the propagation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationSettings {
    pub quadrature: AngularRule,
    /// Grid (m) that per-ping displacements are snapped to before a
    /// translation kernel is looked up; 0 uses the exact displacement.
    pub displacement_quantum: f64,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        PropagationSettings {
            quadrature: AngularRule::default(),
            displacement_quantum: 1e-4,
        }
    }
}

impl PropagationSettings {
    pub fn exact() -> Self {
        PropagationSettings {
            displacement_quantum: 0.0,
            ..Default::default()
        }
    }

    fn snap(&self, displacement: f64) -> f64 {
        let q = self.displacement_quantum;
        if q > 0.0 {
            let inv = (1.0 / q).round();
            (displacement * inv).round() / inv
        } else {
            displacement
        }
    }
}

/// Per-target inflow lists for one forward displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationKernel {
    displacement: f64,
    inflow: Vec<Vec<(u32, f64)>>,
}

impl TranslationKernel {
    pub fn build(layout: &BeamLayout, displacement: f64, rule: &AngularRule) -> Self {
        let inflow = (0..layout.cell_count())
            .into_par_iter()
            .map(|t| translation::target_inflow(layout, t, displacement, rule))
            .collect();
        TranslationKernel {
            displacement,
            inflow,
        }
    }

    pub fn displacement(&self) -> f64 {
        self.displacement
    }

    /// Fraction of `target` supplied by `source` (flat indices).
    pub fn fraction(&self, source: usize, target: usize) -> f64 {
        self.inflow[target]
            .iter()
            .find(|(s, _)| *s as usize == source)
            .map_or(0.0, |(_, f)| *f)
    }

    /// Nonzero `(source, fraction)` pairs for `target`, sorted by source.
    pub fn inflow(&self, target: usize) -> &[(u32, f64)] {
        &self.inflow[target]
    }
}

/// Overlap fractions for every velocity sample of a distribution at a fixed
/// ping period. Immutable once built.
#[derive(Debug, Clone)]
pub struct OverlapTable {
    layout: Arc<BeamLayout>,
    tau: f64,
    translational: Vec<(f64, Arc<TranslationKernel>)>,
    rotational: Vec<(f64, (f64, f64), BeamOperator)>,
    /// Weighted sum of the rotational operators.
    rotation_mix: BeamOperator,
}

impl OverlapTable {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn layout(&self) -> &BeamLayout {
        &self.layout
    }

    pub fn translational_samples(&self) -> usize {
        self.translational.len()
    }

    pub fn rotational_samples(&self) -> usize {
        self.rotational.len()
    }

    pub fn translation_kernel(&self, sample: usize) -> &TranslationKernel {
        &self.translational[sample].1
    }

    pub fn translational_fraction(&self, sample: usize, source: usize, target: usize) -> f64 {
        self.translational[sample].1.fraction(source, target)
    }

    /// Per-fan mean rotational fraction from `source` into `target` cell.
    pub fn rotational_fraction(&self, sample: usize, source: usize, target: usize) -> f64 {
        let (sb, si) = self.layout.unflat(source);
        let (tb, ti) = self.layout.unflat(target);
        if si != ti {
            return 0.0;
        }
        self.rotational[sample].2.inflow[tb]
            .iter()
            .find(|(b, _)| *b == sb)
            .map_or(0.0, |(_, f)| *f)
    }

    /// Applies translation then rotation to `map`, advancing its timestamp.
    pub fn apply(&self, map: &mut PolarMap) -> Result<()> {
        if map.layout().hash() != self.layout.hash() {
            return Err(Error::Alignment("overlap table built for another layout".into()));
        }
        let prior = map.prior();
        let cells = self.layout.cell_count();

        // translation
        let src = map.probs().to_vec();
        let translated: Vec<f64> = (0..cells)
            .map(|t| {
                let mut acc = 0.0;
                let mut covered = 0.0;
                for (w, kernel) in &self.translational {
                    let mut part = 0.0;
                    let mut frac = 0.0;
                    for &(s, f) in kernel.inflow(t) {
                        part += f * src[s as usize];
                        frac += f;
                    }
                    acc += w * part;
                    covered += w * frac;
                }
                (acc + (1.0 - covered).max(0.0) * prior).clamp(0.0, 1.0)
            })
            .collect();

        // rotation, beam operator shared by every radial index
        let bins = self.layout.bin_count();
        let out = map.probs_mut();
        let op = &self.rotation_mix;
        for t in 0..cells {
            let (tb, i) = (t / bins, t % bins);
            let mut acc = op.fill[tb] * prior;
            for &(sb, f) in &op.inflow[tb] {
                acc += f * translated[sb * bins + i];
            }
            out[t] = acc.clamp(0.0, 1.0);
        }
        map.set_timestamp(map.timestamp() + self.tau);
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::config("tau", format!("ping period {tau} must be >= 0")));
    }
    Ok(())
}

/// Cache of translation kernels keyed by layout and snapped displacement.
#[derive(Debug, Default)]
pub struct KernelCache {
    kernels: Mutex<HashMap<(String, u64, u64, usize), Arc<TranslationKernel>>>,
}

impl KernelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.kernels.lock().expect("kernel cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_build(
        &self,
        layout: &BeamLayout,
        displacement: f64,
        rule: &AngularRule,
    ) -> Arc<TranslationKernel> {
        let key = (
            layout.hash().to_string(),
            displacement.to_bits(),
            rule.max_panel_deg.to_bits(),
            rule.order,
        );
        if let Some(k) = self.kernels.lock().expect("kernel cache poisoned").get(&key) {
            return Arc::clone(k);
        }
        // built outside the lock; a racing duplicate build yields the same kernel
        let kernel = Arc::new(TranslationKernel::build(layout, displacement, rule));
        self.kernels
            .lock()
            .expect("kernel cache poisoned")
            .entry(key)
            .or_insert(kernel)
            .clone()
    }
}

/// Builds overlap tables and propagates maps, reusing translation kernels.
#[derive(Debug, Clone, Default)]
pub struct Propagator {
    settings: PropagationSettings,
    cache: Arc<KernelCache>,
}

impl Propagator {
    pub fn new(settings: PropagationSettings) -> Self {
        Propagator {
            settings,
            cache: Arc::new(KernelCache::new()),
        }
    }

    pub fn with_cache(settings: PropagationSettings, cache: Arc<KernelCache>) -> Self {
        Propagator { settings, cache }
    }

    pub fn settings(&self) -> &PropagationSettings {
        &self.settings
    }

    pub fn cache(&self) -> &Arc<KernelCache> {
        &self.cache
    }

    pub fn table(
        &self,
        layout: &Arc<BeamLayout>,
        vel: &VelocityDistribution,
        tau: f64,
    ) -> Result<OverlapTable> {
        check_tau(tau)?;
        let translational = vel
            .translational
            .iter()
            .map(|&(v, w)| {
                let d = self.settings.snap(v * tau);
                (w, self.cache.get_or_build(layout, d, &self.settings.quadrature))
            })
            .collect();
        let rotational: Vec<_> = vel
            .rotational
            .iter()
            .map(|&((vt, vp), w)| {
                let op = BeamOperator::for_rotation(layout, -vt * tau, -vp * tau);
                (w, (vt, vp), op)
            })
            .collect();
        let rotation_mix = BeamOperator::mixture(
            layout.beam_count(),
            rotational.iter().map(|(w, _, op)| (*w, op)),
        );
        Ok(OverlapTable {
            layout: Arc::clone(layout),
            tau,
            translational,
            rotational,
            rotation_mix,
        })
    }

    pub fn propagate(&self, map: &mut PolarMap, vel: &VelocityDistribution, tau: f64) -> Result<()> {
        let table = self.table(map.layout_arc(), vel, tau)?;
        table.apply(map)
    }
}

/// Overlap table for a fixed ping period, computed with exact displacements.
pub fn precompute_overlaps(
    layout: &Arc<BeamLayout>,
    vel: &VelocityDistribution,
    tau: f64,
) -> Result<OverlapTable> {
    Propagator::new(PropagationSettings::exact()).table(layout, vel, tau)
}

/// Map at `t + tau` from the map at `t` and the velocity distribution.
pub fn propagate(map: &PolarMap, vel: &VelocityDistribution, tau: f64) -> Result<PolarMap> {
    let mut next = map.clone();
    precompute_overlaps(map.layout_arc(), vel, tau)?.apply(&mut next)?;
    Ok(next)
}

/// Fraction of `target`'s volume covered by `source` after the scene moves
/// by `-v_x tau` along the sonar axis.
pub fn translational_overlap(
    layout: &BeamLayout,
    source: CellIndex,
    target: CellIndex,
    v_x: f64,
    tau: f64,
) -> Result<f64> {
    translational_overlap_with(layout, source, target, v_x, tau, &AngularRule::default())
}

pub fn translational_overlap_with(
    layout: &BeamLayout,
    source: CellIndex,
    target: CellIndex,
    v_x: f64,
    tau: f64,
    rule: &AngularRule,
) -> Result<f64> {
    check_tau(tau)?;
    let s = layout.flat_index(source)?;
    let t = layout.flat_index(target)?;
    Ok(translation::target_inflow(layout, t, v_x * tau, rule)
        .iter()
        .find(|(src, _)| *src as usize == s)
        .map_or(0.0, |(_, f)| *f))
}

/// Rotational overlap: zero unless both cells share a radial index, else the
/// product of the angular overlap fractions after rotating the source by
/// `-(v_theta, v_phi) tau` degrees, normalized by the source's widths.
pub fn rotational_overlap(
    layout: &BeamLayout,
    source: CellIndex,
    target: CellIndex,
    v_theta: f64,
    v_phi: f64,
    tau: f64,
) -> Result<f64> {
    check_tau(tau)?;
    let (sb, si) = layout.unflat(layout.flat_index(source)?);
    let (tb, ti) = layout.unflat(layout.flat_index(target)?);
    if si != ti {
        return Ok(0.0);
    }
    let beams = layout.beams();
    Ok(rotation::beam_fraction(
        &beams[sb],
        &beams[tb],
        -v_theta * tau,
        -v_phi * tau,
    ))
}
