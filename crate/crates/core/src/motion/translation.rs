//! Overlap of a target cell with displaced source cells under forward motion.
//!
//! For each quadrature direction inside the target cell the ray `r -> r u`
//! is pulled back by the displacement, `q(r) = r u + d x`, and split at every
//! range where `q` crosses a radial, azimuth or elevation cell boundary. The
//! source cell is constant between breakpoints, so the `r^2 dr` integral is
//! exact per segment; only the two angular integrals use quadrature.
//!
//! Near a beam edge the pulled-back point can cross into the neighboring
//! beam over a sliver only a fraction of a degree wide. The angular panels
//! are split where that sliver begins and ends so the quadrature sees a
//! smooth integrand on every panel.

use crate::geometry::{BeamLayout, SphericalExtent};
use crate::quadrature::AngularRule;

/// Fractions of the target's volume supplied by each source cell, sorted by
/// source. Sources outside the map are omitted, so the sum may be below 1.
pub(crate) fn target_inflow(
    layout: &BeamLayout,
    target: usize,
    displacement: f64,
    rule: &AngularRule,
) -> Vec<(u32, f64)> {
    if displacement == 0.0 {
        return vec![(target as u32, 1.0)];
    }
    let ext = layout.extent(target);
    let (r0, r1) = ext.r;
    let shell = (r1.powi(3) - r0.powi(3)) / 3.0;
    let phi_breaks = elevation_breaks(layout.vertical_edges(), &ext, displacement);
    let phi_nodes = rule.nodes_with_breaks(ext.phi, &phi_breaks);

    let h_trig: Vec<(f64, f64)> = layout
        .horizontal_edges()
        .iter()
        .map(|t| t.to_radians().sin_cos())
        .collect();
    let v_trig: Vec<(f64, f64)> = layout
        .vertical_edges()
        .iter()
        .map(|e| e.to_radians().sin_cos())
        .collect();

    let d = displacement;
    let lc = layout.cell_length();
    let bins = layout.bin_count();
    let mut acc: Vec<(u32, f64)> = Vec::with_capacity(8);
    let mut volume = 0.0;
    let mut cuts: Vec<f64> = Vec::with_capacity(24);

    let mut theta_breaks: Vec<f64> = Vec::with_capacity(2 * h_trig.len());
    for &(phi, wp) in &phi_nodes {
        let (sp, cp) = phi.to_radians().sin_cos();
        // azimuth of the pulled-back point equals edge T where r cp sin(theta - T) = d sin T
        theta_breaks.clear();
        for (&edge, &(s_t, _)) in layout.horizontal_edges().iter().zip(&h_trig) {
            for r in [r0, r1] {
                let x = displacement * s_t / (r * cp);
                if x.abs() < 1.0 {
                    theta_breaks.push(edge + x.asin().to_degrees());
                }
            }
        }
        let theta_nodes = rule.nodes_with_breaks(ext.theta, &theta_breaks);
        for &(theta, wt) in &theta_nodes {
            let (st, ct) = theta.to_radians().sin_cos();
            let w = wp * wt * cp;
            // unit direction in the sonar frame, elevation handled via sp
            let (a, b) = (cp * ct, cp * st);
            volume += w * shell;

            cuts.clear();
            cuts.push(r0);
            cuts.push(r1);
            let keep = |r: f64, cuts: &mut Vec<f64>| {
                if r > r0 && r < r1 {
                    cuts.push(r);
                }
            };

            // radial boundaries: r^2 + 2 r d a + d^2 = R^2
            let norm = |r: f64| (r * r + 2.0 * r * d * a + d * d).max(0.0).sqrt();
            let vertex = -d * a;
            let mut qlo = norm(r0).min(norm(r1));
            let qhi = norm(r0).max(norm(r1));
            if vertex > r0 && vertex < r1 {
                qlo = qlo.min(norm(vertex));
            }
            let m_lo = ((qlo / lc).floor() as usize).max(1);
            let m_hi = ((qhi / lc).ceil() as usize).min(bins);
            let perp = d * d * (1.0 - a * a);
            for m in m_lo..=m_hi {
                let big_r = layout.radial_bounds(m).1;
                let disc = big_r * big_r - perp;
                if disc >= 0.0 {
                    let s = disc.sqrt();
                    keep(vertex + s, &mut cuts);
                    keep(vertex - s, &mut cuts);
                }
            }

            // azimuth boundaries: r (b cos T - a sin T) = d sin T
            for &(s_t, c_t) in &h_trig {
                let den = b * c_t - a * s_t;
                if den != 0.0 {
                    keep(d * s_t / den, &mut cuts);
                }
            }

            // elevation boundaries: (r sp)^2 cos^2 E = ((r a + d)^2 + (r b)^2) sin^2 E
            for &(s_e, c_e) in &v_trig {
                let s2 = s_e * s_e;
                let qa = sp * sp * c_e * c_e - (a * a + b * b) * s2;
                let qb = -2.0 * a * d * s2;
                let qc = -d * d * s2;
                for r in quadratic_roots(qa, qb, qc).into_iter().flatten() {
                    keep(r, &mut cuts);
                }
            }

            cuts.sort_by(f64::total_cmp);
            for seg in cuts.windows(2) {
                let (lo, hi) = (seg[0], seg[1]);
                if hi <= lo {
                    continue;
                }
                let mid = 0.5 * (lo + hi);
                let q = [mid * a + d, mid * b, -mid * sp];
                if let Some(src) = layout.locate(q) {
                    let v = w * (hi.powi(3) - lo.powi(3)) / 3.0;
                    match acc.iter_mut().find(|(s, _)| *s == src as u32) {
                        Some(entry) => entry.1 += v,
                        None => acc.push((src as u32, v)),
                    }
                }
            }
        }
    }

    acc.sort_by_key(|&(s, _)| s);
    for entry in &mut acc {
        entry.1 /= volume;
    }
    acc
}

/// Elevation (degrees) of the pulled-back point `r u(theta, phi) + d x`.
fn pulled_elevation(r: f64, theta: f64, phi: f64, d: f64) -> f64 {
    let (st, ct) = theta.to_radians().sin_cos();
    let (sp, cp) = phi.to_radians().sin_cos();
    let x = r * cp * ct + d;
    let y = r * cp * st;
    (r * sp).atan2(x.hypot(y)).to_degrees()
}

/// Target elevations at which the pulled-back point crosses an elevation
/// edge, evaluated at the corners of the target's `(r, theta)` box. The
/// crossing elevation is monotone in `r` and in `cos theta`, so these bound
/// the band where the crossing curve sweeps through the cell.
fn elevation_breaks(edges: &[f64], ext: &SphericalExtent, d: f64) -> Vec<f64> {
    let mut thetas = vec![ext.theta.0, ext.theta.1];
    if ext.theta.0 < 0.0 && ext.theta.1 > 0.0 {
        thetas.push(0.0);
    }
    let mut out = Vec::new();
    for &edge in edges {
        if edge == 0.0 {
            continue;
        }
        for r in [ext.r.0, ext.r.1] {
            for &theta in &thetas {
                // pulled elevation is increasing in phi; only crossings inside
                // the target's own elevation range matter
                let (mut lo, mut hi) = ext.phi;
                if pulled_elevation(r, theta, lo, d) > edge || pulled_elevation(r, theta, hi, d) < edge {
                    continue;
                }
                for _ in 0..48 {
                    let mid = 0.5 * (lo + hi);
                    if pulled_elevation(r, theta, mid, d) < edge {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
        }
    }
    out
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> [Option<f64>; 2] {
    if a.abs() < 1e-300 {
        if b != 0.0 {
            return [Some(-c / b), None];
        }
        return [None, None];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return [None, None];
    }
    let s = disc.sqrt();
    let q = -0.5 * (b + b.signum() * s);
    if q == 0.0 {
        return [Some(0.0), None];
    }
    [Some(q / a), Some(c / q)]
}
