//! Beam-aligned spherical cell grid and the occupancy map stored on it.
//!
//! Frame convention: x forward along the sonar axis, y to starboard, z down.
//! Azimuth `theta` is positive to starboard and elevation `phi` is positive
//! up, both in degrees from the sonar center-line. A cell
//! `(i, j, k)` covers `r in ((i-1) l_c, i l_c]`, `theta in (theta_j, theta_{j+1}]`
//! and `phi in (phi_k, phi_{k+1}]`; `i` is 1-based, `j` and `k` are 0-based
//! interval indices into the edge lists.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default clamp applied to stored probabilities after a measurement update.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Every (azimuth, elevation) interval pair is a beam.
    FullGrid,
    /// One horizontal and one vertical fan sharing the center beam.
    #[default]
    Cross,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    horizontal_edges: Vec<f64>,
    vertical_edges: Vec<f64>,
    bin_count: usize,
    max_range: f64,
    #[serde(default)]
    topology: Topology,
}

/// One sonar beam: an azimuth interval crossed with an elevation interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    pub j: usize,
    pub k: usize,
    pub theta: (f64, f64),
    pub phi: (f64, f64),
}

/// Validated beam geometry. Construct with [`BeamLayout::new`] or deserialize.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawLayout", into = "RawLayout")]
pub struct BeamLayout {
    horizontal_edges: Vec<f64>,
    vertical_edges: Vec<f64>,
    bin_count: usize,
    max_range: f64,
    topology: Topology,
    beams: Vec<Beam>,
    lookup: Vec<Option<usize>>,
    hash: String,
}

impl PartialEq for BeamLayout {
    fn eq(&self, other: &Self) -> bool {
        self.horizontal_edges == other.horizontal_edges
            && self.vertical_edges == other.vertical_edges
            && self.bin_count == other.bin_count
            && self.max_range == other.max_range
            && self.topology == other.topology
    }
}

impl TryFrom<RawLayout> for BeamLayout {
    type Error = Error;

    fn try_from(raw: RawLayout) -> Result<Self> {
        BeamLayout::new(
            raw.horizontal_edges,
            raw.vertical_edges,
            raw.bin_count,
            raw.max_range,
            raw.topology,
        )
    }
}

impl From<BeamLayout> for RawLayout {
    fn from(layout: BeamLayout) -> Self {
        RawLayout {
            horizontal_edges: layout.horizontal_edges,
            vertical_edges: layout.vertical_edges,
            bin_count: layout.bin_count,
            max_range: layout.max_range,
            topology: layout.topology,
        }
    }
}

fn check_edges(name: &str, edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidLayout(format!(
            "{name} needs at least two edges"
        )));
    }
    if edges.iter().any(|e| !e.is_finite() || e.abs() >= 90.0) {
        return Err(Error::InvalidLayout(format!(
            "{name} must be finite and inside (-90, 90) degrees"
        )));
    }
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidLayout(format!(
            "{name} must be strictly increasing"
        )));
    }
    Ok(())
}

impl BeamLayout {
    pub fn new(
        horizontal_edges: Vec<f64>,
        vertical_edges: Vec<f64>,
        bin_count: usize,
        max_range: f64,
        topology: Topology,
    ) -> Result<Self> {
        check_edges("horizontal_edges", &horizontal_edges)?;
        check_edges("vertical_edges", &vertical_edges)?;
        if bin_count == 0 {
            return Err(Error::InvalidLayout("bin_count must be at least 1".into()));
        }
        if !(max_range.is_finite() && max_range > 0.0) {
            return Err(Error::InvalidLayout("max_range must be positive".into()));
        }
        let n = horizontal_edges.len() - 1;
        let o = vertical_edges.len() - 1;
        let mut beams = Vec::new();
        let mut lookup = vec![None; n * o];
        let mut push = |j: usize, k: usize, beams: &mut Vec<Beam>| {
            lookup[k * n + j] = Some(beams.len());
            beams.push(Beam {
                j,
                k,
                theta: (horizontal_edges[j], horizontal_edges[j + 1]),
                phi: (vertical_edges[k], vertical_edges[k + 1]),
            });
        };
        match topology {
            Topology::FullGrid => {
                for k in 0..o {
                    for j in 0..n {
                        push(j, k, &mut beams);
                    }
                }
            }
            Topology::Cross => {
                if n % 2 == 0 || o % 2 == 0 {
                    return Err(Error::InvalidLayout(
                        "cross topology needs an odd number of beams in each fan".into(),
                    ));
                }
                let (jc, kc) = (n / 2, o / 2);
                for j in 0..n {
                    push(j, kc, &mut beams);
                }
                for k in (0..o).filter(|&k| k != kc) {
                    push(jc, k, &mut beams);
                }
            }
        }
        let mut layout = BeamLayout {
            horizontal_edges,
            vertical_edges,
            bin_count,
            max_range,
            topology,
            beams,
            lookup,
            hash: String::new(),
        };
        layout.hash = layout.compute_hash();
        Ok(layout)
    }

    /// Nine-beam cross layout of the prototype: 10 degree center beam, 20
    /// degree outer beams centered at +-15 and +-35 degrees, 219 bins to 50 m.
    pub fn prototype() -> Self {
        let edges = vec![-45.0, -25.0, -5.0, 5.0, 25.0, 45.0];
        BeamLayout::new(edges.clone(), edges, 219, 50.0, Topology::Cross)
            .expect("prototype layout is valid")
    }

    fn compute_hash(&self) -> String {
        let mut text = String::new();
        let _ = write!(
            text,
            "{:?}|{:?}|{}|{}|{:?}",
            self.horizontal_edges, self.vertical_edges, self.bin_count, self.max_range, self.topology
        );
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Short stable fingerprint of the geometry, written into log headers.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn horizontal_edges(&self) -> &[f64] {
        &self.horizontal_edges
    }

    pub fn vertical_edges(&self) -> &[f64] {
        &self.vertical_edges
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Radial cell length `l_c`.
    pub fn cell_length(&self) -> f64 {
        self.max_range / self.bin_count as f64
    }

    pub fn beams(&self) -> &[Beam] {
        &self.beams
    }

    pub fn beam_count(&self) -> usize {
        self.beams.len()
    }

    pub fn cell_count(&self) -> usize {
        self.beams.len() * self.bin_count
    }

    pub fn azimuth_count(&self) -> usize {
        self.horizontal_edges.len() - 1
    }

    pub fn elevation_count(&self) -> usize {
        self.vertical_edges.len() - 1
    }

    /// Interval indices of the beam shared by both fans (cross topology).
    pub fn center(&self) -> (usize, usize) {
        (self.azimuth_count() / 2, self.elevation_count() / 2)
    }

    pub fn beam_at(&self, j: usize, k: usize) -> Option<usize> {
        if j >= self.azimuth_count() || k >= self.elevation_count() {
            return None;
        }
        self.lookup[k * self.azimuth_count() + j]
    }

    /// Lower and upper radius of radial cell `i` (1-based).
    pub fn radial_bounds(&self, i: usize) -> (f64, f64) {
        let n = self.bin_count as f64;
        (
            self.max_range * (i - 1) as f64 / n,
            self.max_range * i as f64 / n,
        )
    }

    /// 1-based radial index containing range `r`, if inside `(0, max_range]`.
    pub fn radial_index(&self, r: f64) -> Option<usize> {
        if !(r > 0.0 && r <= self.max_range) {
            return None;
        }
        let i = (r / self.cell_length()).ceil() as usize;
        Some(i.clamp(1, self.bin_count))
    }

    /// Beam containing the direction `(theta, phi)` in degrees.
    pub fn beam_of_direction(&self, theta: f64, phi: f64) -> Option<usize> {
        let j = interval_index(&self.horizontal_edges, theta)?;
        let k = interval_index(&self.vertical_edges, phi)?;
        self.beam_at(j, k)
    }

    /// Flat cell index for a point given in spherical coordinates.
    pub fn locate_spherical(&self, r: f64, theta: f64, phi: f64) -> Option<usize> {
        let beam = self.beam_of_direction(theta, phi)?;
        let i = self.radial_index(r)?;
        Some(self.flat(beam, i))
    }

    /// Flat cell index for a point in the sonar frame.
    pub fn locate(&self, point: [f64; 3]) -> Option<usize> {
        let (r, theta, phi) = to_spherical(point);
        self.locate_spherical(r, theta, phi)
    }

    /// Flat storage index of `(beam, i)`; `i` is 1-based.
    pub fn flat(&self, beam: usize, i: usize) -> usize {
        beam * self.bin_count + (i - 1)
    }

    /// Inverse of [`BeamLayout::flat`]: `(beam, i)`.
    pub fn unflat(&self, flat: usize) -> (usize, usize) {
        (flat / self.bin_count, flat % self.bin_count + 1)
    }

    pub fn cell_index(&self, flat: usize) -> CellIndex {
        let (beam, i) = self.unflat(flat);
        let b = &self.beams[beam];
        CellIndex { i, j: b.j, k: b.k }
    }

    pub fn flat_index(&self, idx: CellIndex) -> Result<usize> {
        let out = || Error::CellOutOfRange {
            i: idx.i,
            j: idx.j,
            k: idx.k,
        };
        if idx.i == 0 || idx.i > self.bin_count {
            return Err(out());
        }
        let beam = self.beam_at(idx.j, idx.k).ok_or_else(out)?;
        Ok(self.flat(beam, idx.i))
    }

    pub fn extent(&self, flat: usize) -> SphericalExtent {
        let (beam, i) = self.unflat(flat);
        let b = &self.beams[beam];
        SphericalExtent {
            r: self.radial_bounds(i),
            theta: b.theta,
            phi: b.phi,
        }
    }
}

/// Index `j` with `edges[j] < x <= edges[j + 1]`.
pub(crate) fn interval_index(edges: &[f64], x: f64) -> Option<usize> {
    let p = edges.partition_point(|&e| e < x);
    (p >= 1 && p < edges.len()).then(|| p - 1)
}

/// Sonar-frame cartesian point from `(r, theta_deg, phi_deg)`.
pub fn to_cartesian(r: f64, theta_deg: f64, phi_deg: f64) -> [f64; 3] {
    let (st, ct) = theta_deg.to_radians().sin_cos();
    let (sp, cp) = phi_deg.to_radians().sin_cos();
    [r * cp * ct, r * cp * st, -r * sp]
}

/// `(r, theta_deg, phi_deg)` of a sonar-frame point.
pub fn to_spherical(p: [f64; 3]) -> (f64, f64, f64) {
    let horiz = p[0].hypot(p[1]);
    let r = horiz.hypot(p[2]);
    (
        r,
        p[1].atan2(p[0]).to_degrees(),
        (-p[2]).atan2(horiz).to_degrees(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    /// Radial index, 1 = nearest the sonar.
    pub i: usize,
    /// Azimuth interval index.
    pub j: usize,
    /// Elevation interval index.
    pub k: usize,
}

/// Half-open spherical box `(lo, hi]` on each axis; angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalExtent {
    pub r: (f64, f64),
    pub theta: (f64, f64),
    pub phi: (f64, f64),
}

impl SphericalExtent {
    pub fn volume(&self) -> f64 {
        let radial = (self.r.1.powi(3) - self.r.0.powi(3)) / 3.0;
        let azimuth = (self.theta.1 - self.theta.0).to_radians();
        let elevation = self.phi.1.to_radians().sin() - self.phi.0.to_radians().sin();
        radial * azimuth * elevation
    }

    pub fn contains(&self, r: f64, theta: f64, phi: f64) -> bool {
        r > self.r.0
            && r <= self.r.1
            && theta > self.theta.0
            && theta <= self.theta.1
            && phi > self.phi.0
            && phi <= self.phi.1
    }
}

/// Measurement likelihood pair for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Likelihood {
    /// `p(z | c = 1)`
    pub occupied: f64,
    /// `p(z | c = 0)`
    pub free: f64,
}

/// Posterior `p(c = 1 | z)` from a prior and the two likelihoods.
pub fn bayes_posterior(prior: f64, lik: Likelihood) -> Option<f64> {
    let Likelihood { occupied, free } = lik;
    if !(occupied >= 0.0 && free >= 0.0) || (occupied == 0.0 && free == 0.0) {
        return None;
    }
    let num = occupied * prior;
    let den = num + free * (1.0 - prior);
    if den == 0.0 {
        // prior sits on the side the measurement rules out
        return None;
    }
    Some(num / den)
}

/// Occupancy probabilities over the cells of a [`BeamLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolarMap {
    layout: Arc<BeamLayout>,
    probs: Vec<f64>,
    timestamp: f64,
    prior: f64,
    clamp_eps: f64,
}

impl PolarMap {
    /// Map with every cell at `prior`, timestamp 0.
    pub fn new(layout: Arc<BeamLayout>, prior: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&prior) {
            return Err(Error::InvalidProbability(prior));
        }
        Ok(PolarMap {
            probs: vec![prior; layout.cell_count()],
            layout,
            timestamp: 0.0,
            prior,
            clamp_eps: DEFAULT_CLAMP_EPS,
        })
    }

    /// Sets the clamp `eps` so updated cells stay in `[eps, 1 - eps]`; 0 disables.
    pub fn with_clamp(mut self, eps: f64) -> Self {
        self.clamp_eps = eps.clamp(0.0, 0.5);
        self
    }

    pub fn layout(&self) -> &BeamLayout {
        &self.layout
    }

    pub fn layout_arc(&self) -> &Arc<BeamLayout> {
        &self.layout
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn clamp_eps(&self) -> f64 {
        self.clamp_eps
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn set_timestamp(&mut self, t: f64) {
        self.timestamp = t;
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    pub fn get(&self, idx: CellIndex) -> Result<f64> {
        Ok(self.probs[self.layout.flat_index(idx)?])
    }

    pub fn set(&mut self, idx: CellIndex, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        let flat = self.layout.flat_index(idx)?;
        self.probs[flat] = p;
        Ok(())
    }

    pub fn cell_bounds(&self, idx: CellIndex) -> Result<SphericalExtent> {
        Ok(self.layout.extent(self.layout.flat_index(idx)?))
    }

    /// Recursive Bayes update of every cell with a likelihood; `None` cells
    /// were not ensonified and keep their value.
    ///
    /// The map is left untouched when any cell is degenerate.
    pub fn bayes_update(&mut self, likelihoods: &[Option<Likelihood>]) -> Result<()> {
        if likelihoods.len() != self.probs.len() {
            return Err(Error::Alignment(format!(
                "{} likelihoods for {} cells",
                likelihoods.len(),
                self.probs.len()
            )));
        }
        let eps = self.clamp_eps;
        let mut next = self.probs.clone();
        for (cell, (p, lik)) in next.iter_mut().zip(likelihoods).enumerate() {
            let Some(lik) = lik else { continue };
            let post = bayes_posterior(*p, *lik).ok_or(Error::DegenerateUpdate {
                cell,
                l1: lik.occupied,
                l0: lik.free,
            })?;
            *p = if eps > 0.0 {
                post.clamp(eps, 1.0 - eps)
            } else {
                post
            };
        }
        self.probs = next;
        Ok(())
    }

    /// Flat text table, one row per cell, for external plotting.
    pub fn snapshot(&self) -> String {
        let mut out = String::from("i,j,k,r_lo,r_hi,theta_lo,theta_hi,phi_lo,phi_hi,prob\n");
        for (flat, p) in self.probs.iter().enumerate() {
            let idx = self.layout.cell_index(flat);
            let e = self.layout.extent(flat);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                idx.i, idx.j, idx.k, e.r.0, e.r.1, e.theta.0, e.theta.1, e.phi.0, e.phi.1, p
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(prior: f64) -> PolarMap {
        PolarMap::new(Arc::new(BeamLayout::prototype()), prior).unwrap()
    }

    #[test]
    fn prototype_has_nine_beams_of_219_cells() {
        let layout = BeamLayout::prototype();
        assert_eq!(layout.beam_count(), 9);
        assert_eq!(layout.cell_count(), 1971);
        assert!((layout.cell_length() - 50.0 / 219.0).abs() < 1e-15);
        assert!((layout.cell_length() - 0.2283).abs() < 1e-4);
    }

    #[test]
    fn cross_shares_exactly_one_beam() {
        let layout = BeamLayout::prototype();
        let (jc, kc) = layout.center();
        let horizontal = layout.beams().iter().filter(|b| b.k == kc).count();
        let vertical = layout.beams().iter().filter(|b| b.j == jc).count();
        assert_eq!(horizontal, 5);
        assert_eq!(vertical, 5);
        assert_eq!(horizontal + vertical - layout.beam_count(), 1);
        assert!(layout.beam_at(0, 0).is_none());
    }

    #[test]
    fn full_grid_allocates_every_pair() {
        let layout =
            BeamLayout::new(vec![-10.0, 0.0, 10.0], vec![-5.0, 5.0], 4, 2.0, Topology::FullGrid)
                .unwrap();
        assert_eq!(layout.beam_count(), 2);
        assert_eq!(layout.cell_count(), 8);
    }

    #[test]
    fn invalid_layouts_are_rejected() {
        let e = vec![-5.0, 5.0];
        assert!(BeamLayout::new(vec![1.0, 1.0], e.clone(), 3, 1.0, Topology::FullGrid).is_err());
        assert!(BeamLayout::new(e.clone(), e.clone(), 0, 1.0, Topology::FullGrid).is_err());
        assert!(BeamLayout::new(e.clone(), e.clone(), 3, 0.0, Topology::FullGrid).is_err());
        assert!(BeamLayout::new(vec![-5.0, 0.0, 5.0], e, 3, 1.0, Topology::Cross).is_err());
    }

    #[test]
    fn uniform_prior() {
        let m = map(0.5);
        assert!(m.probs().iter().all(|&p| p == 0.5));
        assert_eq!(m.timestamp(), 0.0);
        assert!(PolarMap::new(Arc::new(BeamLayout::prototype()), 1.5).is_err());
    }

    #[test]
    fn cell_bounds_examples() {
        let m = map(0.5);
        let lc = 50.0 / 219.0;
        let first = m.cell_bounds(CellIndex { i: 1, j: 2, k: 2 }).unwrap();
        assert_eq!(first.r, (0.0, lc));
        assert_eq!(first.theta, (-5.0, 5.0));
        assert_eq!(first.phi, (-5.0, 5.0));
        let last = m.cell_bounds(CellIndex { i: 219, j: 2, k: 2 }).unwrap();
        assert!((last.r.0 - 49.7717).abs() < 1e-4);
        assert_eq!(last.r.1, 50.0);
        assert!(m.cell_bounds(CellIndex { i: 0, j: 2, k: 2 }).is_err());
        assert!(m.cell_bounds(CellIndex { i: 220, j: 2, k: 2 }).is_err());
        assert!(m.cell_bounds(CellIndex { i: 1, j: 0, k: 0 }).is_err());
    }

    #[test]
    fn radial_intervals_tile_each_beam() {
        let layout = BeamLayout::prototype();
        let mut prev = 0.0;
        for i in 1..=layout.bin_count() {
            let (lo, hi) = layout.radial_bounds(i);
            assert_eq!(lo, prev);
            assert!(hi > lo);
            prev = hi;
        }
        assert_eq!(prev, layout.max_range());
    }

    #[test]
    fn locate_round_trips_cell_centers() {
        let layout = BeamLayout::prototype();
        for flat in (0..layout.cell_count()).step_by(7) {
            let e = layout.extent(flat);
            let p = to_cartesian(
                0.5 * (e.r.0 + e.r.1),
                0.5 * (e.theta.0 + e.theta.1),
                0.5 * (e.phi.0 + e.phi.1),
            );
            assert_eq!(layout.locate(p), Some(flat));
        }
        assert_eq!(layout.locate([0.0, 0.0, 0.0]), None);
        assert_eq!(layout.locate([60.0, 0.0, 0.0]), None);
        // between the fans of the cross
        assert_eq!(layout.locate(to_cartesian(10.0, 15.0, 15.0)), None);
    }

    #[test]
    fn bayes_examples() {
        let lik = |a, b| Likelihood {
            occupied: a,
            free: b,
        };
        assert!((bayes_posterior(0.5, lik(0.8, 0.2)).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(bayes_posterior(0.37, lik(0.3, 0.3)).unwrap(), 0.37);
        assert_eq!(bayes_posterior(1.0, lik(0.1, 0.9)).unwrap(), 1.0);
        assert_eq!(bayes_posterior(0.0, lik(0.9, 0.1)).unwrap(), 0.0);
        assert!(bayes_posterior(0.5, lik(0.0, 0.0)).is_none());
    }

    #[test]
    fn update_touches_only_ensonified_cells() {
        let mut m = map(0.5).with_clamp(0.0);
        let mut liks = vec![None; m.probs().len()];
        liks[3] = Some(Likelihood {
            occupied: 0.8,
            free: 0.2,
        });
        m.bayes_update(&liks).unwrap();
        assert!((m.probs()[3] - 0.8).abs() < 1e-15);
        assert_eq!(m.probs()[4], 0.5);
        liks[5] = Some(Likelihood {
            occupied: 0.0,
            free: 0.0,
        });
        let before = m.clone();
        assert!(matches!(
            m.bayes_update(&liks),
            Err(Error::DegenerateUpdate { cell: 5, .. })
        ));
        assert_eq!(m, before);
        assert!(m.bayes_update(&liks[1..]).is_err());
    }

    #[test]
    fn clamp_keeps_cells_off_the_absorbing_states() {
        let mut m = map(0.5);
        let liks = vec![
            Some(Likelihood {
                occupied: 1.0,
                free: 1e-30,
            });
            m.probs().len()
        ];
        m.bayes_update(&liks).unwrap();
        assert!(m.probs().iter().all(|&p| p == 1.0 - DEFAULT_CLAMP_EPS));
    }

    #[test]
    fn snapshot_has_one_row_per_cell() {
        let m = map(0.25);
        let text = m.snapshot();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "i,j,k,r_lo,r_hi,theta_lo,theta_hi,phi_lo,phi_hi,prob"
        );
        assert_eq!(lines.clone().count(), 1971);
        assert!(lines.all(|l| l.ends_with(",0.25")));
    }

    #[test]
    fn layout_round_trips_through_toml() {
        let layout = BeamLayout::prototype();
        let text = toml::to_string(&layout).unwrap();
        let back: BeamLayout = toml::from_str(&text).unwrap();
        assert_eq!(back.hash(), layout.hash());
        assert!(toml::from_str::<BeamLayout>("horizontal_edges=[0.0]\nvertical_edges=[0.0,1.0]\nbin_count=1\nmax_range=1.0").is_err());
    }
}
