use crate::error::{Error, Result};

/// Rate-distortion points `(rate in kbps, quality in dB)`, sorted by rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    points: Vec<(f64, f64)>,
}

impl RdCurve {
    /// Needs at least four finite points with strictly increasing positive
    /// rate and non-decreasing quality.
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::invalid(format!("RD curve needs at least 4 points, got {}", points.len())));
        }
        if points.iter().any(|&(r, q)| !r.is_finite() || !q.is_finite() || r <= 0.0) {
            return Err(Error::invalid("RD points must be finite with positive rate"));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid(format!("duplicate rate {} in RD curve", w[0].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::invalid(format!(
                    "quality drops from {} dB to {} dB as rate rises to {}",
                    w[0].1, w[1].1, w[1].0
                )));
            }
        }
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Same qualities with every rate multiplied by `factor`.
    pub fn scale_rate(&self, factor: f64) -> Result<Self> {
        RdCurve::new(self.points.iter().map(|&(r, q)| (r * factor, q)).collect())
    }

    fn quality_range(&self) -> (f64, f64) {
        (self.points[0].1, self.points[self.points.len() - 1].1)
    }
}

/// Log-rate as a function of quality.
enum Interp {
    /// Coefficients of `c0 + c1·t + c2·t² + c3·t³` with `t = (q − centre) / scale`.
    Cubic { c: [f64; 4], centre: f64, scale: f64 },
    Pchip { x: Vec<f64>, y: Vec<f64>, d: Vec<f64> },
}

impl Interp {
    fn fit(curve: &RdCurve) -> Result<Self> {
        let x: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
        let y: Vec<f64> = curve.points.iter().map(|p| p.0.ln()).collect();
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("BD-rate needs strictly increasing quality"));
        }
        if x.len() == 4 {
            let centre = x.iter().sum::<f64>() / 4.0;
            let scale = (x[3] - x[0]) / 2.0;
            let mut a = [[0.0; 5]; 4];
            for i in 0..4 {
                let t = (x[i] - centre) / scale;
                a[i] = [1.0, t, t * t, t * t * t, y[i]];
            }
            Ok(Interp::Cubic { c: solve4(a)?, centre, scale })
        } else {
            let d = pchip_slopes(&x, &y);
            Ok(Interp::Pchip { x, y, d })
        }
    }

    fn eval(&self, q: f64) -> f64 {
        match self {
            Interp::Cubic { c, centre, scale } => {
                let t = (q - centre) / scale;
                c[0] + t * (c[1] + t * (c[2] + t * c[3]))
            }
            Interp::Pchip { x, y, d } => {
                let k = match x.iter().position(|&xi| xi > q) {
                    Some(0) => 0,
                    Some(i) => i - 1,
                    None => x.len() - 2,
                };
                let h = x[k + 1] - x[k];
                let s = (q - x[k]) / h;
                let (h00, h10) = (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s);
                let (h01, h11) = (-2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
                h00 * y[k] + h10 * h * d[k] + h01 * y[k + 1] + h11 * h * d[k + 1]
            }
        }
    }

    fn breakpoints(&self) -> &[f64] {
        match self {
            Interp::Cubic { .. } => &[],
            Interp::Pchip { x, .. } => x,
        }
    }

    /// Exact integral over `[lo, hi]`: three-point Gauss-Legendre on each
    /// cubic piece.
    fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let mut cuts = vec![lo];
        cuts.extend(self.breakpoints().iter().copied().filter(|&b| b > lo && b < hi));
        cuts.push(hi);
        let r = (0.6f64).sqrt();
        cuts.windows(2)
            .map(|w| {
                let (m, h) = ((w[0] + w[1]) / 2.0, (w[1] - w[0]) / 2.0);
                h * (5.0 * self.eval(m - h * r) + 8.0 * self.eval(m) + 5.0 * self.eval(m + h * r)) / 9.0
            })
            .sum()
    }
}

fn solve4(mut a: [[f64; 5]; 4]) -> Result<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).expect("rows");
        if a[piv][col].abs() < 1e-12 {
            return Err(Error::invalid("degenerate RD points for cubic fit"));
        }
        a.swap(col, piv);
        for r in 0..4 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..5 {
                    a[r][k] -= f * a[col][k];
                }
            }
        }
    }
    Ok([0, 1, 2, 3].map(|i| a[i][4] / a[i][i]))
}

/// Shape-preserving derivative estimates (Fritsch-Carlson).
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// Average bitrate difference of `test` relative to `anchor` at equal
/// quality, in percent; negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (a_lo, a_hi) = anchor.quality_range();
    let (t_lo, t_hi) = test.quality_range();
    let (lo, hi) = (a_lo.max(t_lo), a_hi.min(t_hi));
    if hi <= lo {
        return Err(Error::invalid(format!(
            "quality ranges [{a_lo}, {a_hi}] and [{t_lo}, {t_hi}] dB do not overlap"
        )));
    }
    let ia = Interp::fit(anchor)?.integrate(lo, hi);
    let it = Interp::fit(test)?.integrate(lo, hi);
    Ok(((it - ia) / (hi - lo)).exp_m1() * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(n: usize) -> RdCurve {
        RdCurve::new((0..n).map(|i| (100.0 * 1.6f64.powi(i as i32), 30.0 + 2.5 * i as f64 + 0.1 * (i * i) as f64)).collect())
            .unwrap()
    }

    #[test]
    fn identical_curves() {
        for n in [4, 5, 7] {
            assert!(bd_rate(&curve(n), &curve(n)).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_rates_give_ten_percent() {
        for n in [4, 6] {
            let a = curve(n);
            let b = a.scale_rate(1.1).unwrap();
            assert!((bd_rate(&a, &b).unwrap() - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cubic_interpolates_points() {
        let c = curve(4);
        let f = Interp::fit(&c).unwrap();
        for &(r, q) in c.points() {
            assert!((f.eval(q) - r.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn pchip_interpolates_and_integrates_lines_exactly() {
        let c = RdCurve::new((0..5).map(|i| ((1.0 + i as f64).exp(), 30.0 + i as f64)).collect()).unwrap();
        let f = Interp::fit(&c).unwrap();
        // ln r = q − 29 is linear: PCHIP reproduces it.
        assert!((f.eval(31.3) - 2.3).abs() < 1e-12);
        assert!((f.integrate(30.5, 33.0) - (4.0f64.powi(2) - 1.5f64.powi(2)) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(RdCurve::new(vec![(1.0, 30.0); 3]).is_err());
        assert!(RdCurve::new(vec![(1.0, 30.0), (2.0, 31.0), (2.0, 32.0), (3.0, 33.0)]).is_err());
        assert!(RdCurve::new(vec![(1.0, 30.0), (2.0, 31.0), (3.0, 29.0), (4.0, 33.0)]).is_err());
        let low = RdCurve::new((1..5).map(|i| (i as f64, 20.0 + i as f64)).collect()).unwrap();
        let high = RdCurve::new((1..5).map(|i| (i as f64, 40.0 + i as f64)).collect()).unwrap();
        assert!(bd_rate(&low, &high).is_err());
    }
}
