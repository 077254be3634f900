//! Gauss rules used by the overlap integrals and the velocity discretization.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp;
        loop {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Hermite nodes and weights for the weight function `exp(-x^2)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-14 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    x.reverse();
    w.reverse();
    (x, w)
}

/// Composite Gauss-Legendre rule over an angular interval given in degrees.
/// Returned weights are in radians so they integrate `d(angle)` directly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngularRule {
    /// Widest panel, degrees.
    pub max_panel_deg: f64,
    /// Gauss-Legendre points per panel.
    pub order: usize,
}

impl Default for AngularRule {
    fn default() -> Self {
        AngularRule {
            max_panel_deg: 2.5,
            order: 4,
        }
    }
}

impl AngularRule {
    pub fn nodes(&self, range: (f64, f64)) -> Vec<(f64, f64)> {
        self.nodes_with_breaks(range, &[])
    }

    /// Like [`AngularRule::nodes`] but with extra panel boundaries at `breaks`
    /// (values outside the open interval are ignored), so integrands with
    /// kinks there are integrated piecewise.
    pub fn nodes_with_breaks(&self, (lo, hi): (f64, f64), breaks: &[f64]) -> Vec<(f64, f64)> {
        let (gx, gw) = gauss_legendre(self.order.max(1));
        let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
        cuts.push(lo);
        cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        let mut out = Vec::new();
        for piece in cuts.windows(2) {
            let width = piece[1] - piece[0];
            if width <= 0.0 {
                continue;
            }
            let panels = (width / self.max_panel_deg).ceil().max(1.0) as usize;
            let h = width / panels as f64;
            for p in 0..panels {
                let a = piece[0] + p as f64 * h;
                for (x, w) in gx.iter().zip(&gw) {
                    out.push((a + 0.5 * h * (x + 1.0), 0.5 * h.to_radians() * w));
                }
            }
        }
        out
    }
}
