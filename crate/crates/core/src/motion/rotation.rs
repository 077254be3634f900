//! Angular overlap of beams under a small rotation of the vehicle.

use crate::geometry::{Beam, BeamLayout, Topology};

fn interval_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// Fraction of the source beam that lands in the target beam after the
/// scene is rotated by `(d_theta, d_phi)` degrees, normalized by the
/// source beam's angular widths.
pub(crate) fn beam_fraction(source: &Beam, target: &Beam, d_theta: f64, d_phi: f64) -> f64 {
    let shifted_theta = (source.theta.0 + d_theta, source.theta.1 + d_theta);
    let shifted_phi = (source.phi.0 + d_phi, source.phi.1 + d_phi);
    let ft = interval_overlap(shifted_theta, target.theta) / (source.theta.1 - source.theta.0);
    let fp = interval_overlap(shifted_phi, target.phi) / (source.phi.1 - source.phi.0);
    ft * fp
}

/// A group of beams that rotate together, with the scene rotation it sees.
pub(crate) struct Fan {
    pub beams: Vec<usize>,
    pub shift: (f64, f64),
}

/// Fans containing `target`. In the cross topology the horizontal fan only
/// sees the azimuth rotation and the vertical fan only the elevation
/// rotation; the shared center beam belongs to both.
pub(crate) fn fans_of(layout: &BeamLayout, target: usize, d_theta: f64, d_phi: f64) -> Vec<Fan> {
    match layout.topology() {
        Topology::FullGrid => vec![Fan {
            beams: (0..layout.beam_count()).collect(),
            shift: (d_theta, d_phi),
        }],
        Topology::Cross => {
            let (jc, kc) = layout.center();
            let b = layout.beams()[target];
            let mut fans = Vec::with_capacity(2);
            if b.k == kc {
                fans.push(Fan {
                    beams: (0..layout.beam_count())
                        .filter(|&s| layout.beams()[s].k == kc)
                        .collect(),
                    shift: (d_theta, 0.0),
                });
            }
            if b.j == jc {
                fans.push(Fan {
                    beams: (0..layout.beam_count())
                        .filter(|&s| layout.beams()[s].j == jc)
                        .collect(),
                    shift: (0.0, d_phi),
                });
            }
            fans
        }
    }
}

/// Beam-level linear operator for one rotation sample: per target beam,
/// coefficients on source beams plus the weight of prior fill.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BeamOperator {
    pub inflow: Vec<Vec<(usize, f64)>>,
    pub fill: Vec<f64>,
}

impl BeamOperator {
    #[cfg(test)]
    pub fn identity(beams: usize) -> Self {
        BeamOperator {
            inflow: (0..beams).map(|b| vec![(b, 1.0)]).collect(),
            fill: vec![0.0; beams],
        }
    }

    /// Weighted sum of operators.
    pub fn mixture<'a>(beams: usize, parts: impl Iterator<Item = (f64, &'a BeamOperator)>) -> Self {
        let mut inflow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); beams];
        let mut fill = vec![0.0; beams];
        for (w, op) in parts {
            for t in 0..beams {
                fill[t] += w * op.fill[t];
                for &(s, f) in &op.inflow[t] {
                    match inflow[t].iter_mut().find(|(b, _)| *b == s) {
                        Some(c) => c.1 += w * f,
                        None => inflow[t].push((s, w * f)),
                    }
                }
            }
        }
        for row in &mut inflow {
            row.sort_by_key(|&(b, _)| b);
        }
        BeamOperator { inflow, fill }
    }

    /// Operator for a scene rotation of `(d_theta, d_phi)` degrees. Each fan's
    /// prediction is `sum f p + max(0, 1 - sum f) prior`; a beam in two fans
    /// takes the mean of both.
    pub fn for_rotation(layout: &BeamLayout, d_theta: f64, d_phi: f64) -> Self {
        let beams = layout.beams();
        let mut inflow = Vec::with_capacity(beams.len());
        let mut fill = Vec::with_capacity(beams.len());
        for t in 0..beams.len() {
            let fans = fans_of(layout, t, d_theta, d_phi);
            let share = 1.0 / fans.len() as f64;
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            let mut f_total = 0.0;
            for fan in &fans {
                let mut sum = 0.0;
                for &s in &fan.beams {
                    let f = beam_fraction(&beams[s], &beams[t], fan.shift.0, fan.shift.1);
                    if f > 0.0 {
                        sum += f;
                        match coeffs.iter_mut().find(|(b, _)| *b == s) {
                            Some(c) => c.1 += share * f,
                            None => coeffs.push((s, share * f)),
                        }
                    }
                }
                f_total += share * (1.0 - sum).max(0.0);
            }
            coeffs.sort_by_key(|&(b, _)| b);
            inflow.push(coeffs);
            fill.push(f_total);
        }
        BeamOperator { inflow, fill }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beam(theta: (f64, f64)) -> Beam {
        Beam {
            j: 0,
            k: 0,
            theta,
            phi: (-5.0, 5.0),
        }
    }

    #[test]
    fn one_beam_width_moves_everything_to_the_neighbor() {
        let a = beam((5.0, 25.0));
        let b = beam((25.0, 45.0));
        assert_eq!(beam_fraction(&a, &b, 20.0, 0.0), 1.0);
        assert_eq!(beam_fraction(&a, &a, 20.0, 0.0), 0.0);
        assert_eq!(beam_fraction(&a, &a, 0.0, 0.0), 1.0);
        assert_eq!(beam_fraction(&a, &b, 5.0, 0.0), 0.25);
    }

    #[test]
    fn zero_rotation_operator_is_identity() {
        let layout = BeamLayout::prototype();
        assert_eq!(
            BeamOperator::for_rotation(&layout, 0.0, 0.0),
            BeamOperator::identity(layout.beam_count())
        );
    }

    #[test]
    fn center_beam_averages_both_fans() {
        let layout = BeamLayout::prototype();
        let (jc, kc) = layout.center();
        let center = layout.beam_at(jc, kc).unwrap();
        let op = BeamOperator::for_rotation(&layout, 2.0, 0.0);
        // horizontal fan: 8 of 10 degrees stay, 2 degrees arrive from port
        // (normalized by the 20 degree source); vertical fan: unchanged.
        let own = op.inflow[center].iter().find(|(b, _)| *b == center).unwrap().1;
        assert!((own - 0.5 * (0.8 + 1.0)).abs() < 1e-15);
        let port = layout.beam_at(jc - 1, kc).unwrap();
        let from_port = op.inflow[center].iter().find(|(b, _)| *b == port).unwrap().1;
        assert!((from_port - 0.5 * 0.1).abs() < 1e-15);
    }
}
