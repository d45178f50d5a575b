//! Kantorovich potentials for the quadratic cost.

use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::quantile::QuantileFn;

/// Potential `phi` with `phi'(r) = r - t(r)`, where `t` is the monotone map,
/// stored as knots with `t` affine between them and normalised by `phi(x0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential1D {
    radii: Vec<f64>,
    values: Vec<f64>,
    /// `t` at the left end of each interval.
    t_lo: Vec<f64>,
    /// `t` at the right end of each interval.
    t_hi: Vec<f64>,
    x0: f64,
}

impl Potential1D {
    /// Builds the potential from knots and the map's one-sided values on each
    /// interval, integrating `phi' = r - t` backwards from the last knot.
    pub fn from_map(radii: Vec<f64>, t_lo: Vec<f64>, t_hi: Vec<f64>) -> Result<Self> {
        let k = radii.len();
        if k < 2 || t_lo.len() != k - 1 || t_hi.len() != k - 1 {
            return Err(Error::InvalidArgument("potential needs matching knots and map values".into()));
        }
        let mut values = vec![0.0; k];
        for i in (0..k - 1).rev() {
            let (r0, r1) = (radii[i], radii[i + 1]);
            let inc = 0.5 * (r1 - r0) * (r1 + r0) - 0.5 * (t_lo[i] + t_hi[i]) * (r1 - r0);
            values[i] = values[i + 1] - inc;
        }
        let x0 = radii[k - 1];
        Ok(Self {
            radii,
            values,
            t_lo,
            t_hi,
            x0,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Normalisation point, where the potential vanishes.
    pub fn x0(&self) -> f64 {
        self.x0
    }

    fn interval(&self, r: f64) -> usize {
        let k = self.radii.partition_point(|&x| x <= r);
        k.saturating_sub(1).min(self.radii.len() - 2)
    }

    /// Transport map `t(r)`.
    pub fn map(&self, r: f64) -> f64 {
        let i = self.interval(r);
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let th = if r1 > r0 { ((r - r0) / (r1 - r0)).clamp(0.0, 1.0) } else { 0.0 };
        self.t_lo[i] + (self.t_hi[i] - self.t_lo[i]) * th
    }

    /// `phi(r)`.
    pub fn value(&self, r: f64) -> f64 {
        let i = self.interval(r);
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let h = r - r0;
        let slope_t = if r1 > r0 { (self.t_hi[i] - self.t_lo[i]) / (r1 - r0) } else { 0.0 };
        self.values[i] + 0.5 * h * (r + r0) - (self.t_lo[i] * h + 0.5 * slope_t * h * h)
    }

    /// `phi'(r) = r - t(r)`.
    pub fn slope(&self, r: f64) -> f64 {
        r - self.map(r)
    }

    /// c-transform `phi^c(y) = inf_x (x - y)^2 / 2 - phi(x)` over the knot range.
    pub fn c_transform(&self, y: f64) -> f64 {
        // The objective is convex in x with derivative t(x) - y.
        let n = self.radii.len();
        let i = self.t_hi.partition_point(|&t| t < y);
        let x = match i {
            i if i == n - 1 => self.radii[n - 1],
            i => {
                let (r0, r1) = (self.radii[i], self.radii[i + 1]);
                if self.t_lo[i] >= y {
                    r0
                } else {
                    let th = (y - self.t_lo[i]) / (self.t_hi[i] - self.t_lo[i]);
                    r0 + th * (r1 - r0)
                }
            }
        };
        0.5 * (x - y).powi(2) - self.value(x)
    }

    /// Dual objective `\int phi d(src) + \int phi^c d(dst)`.
    pub fn dual_value(&self, src: &QuantileFn, dst: &QuantileFn) -> f64 {
        src.integrate_refined(|r| self.value(r), 16384) + dst.integrate_refined(|y| self.c_transform(y), 16384)
    }
}

/// Potential of the monotone map from `src` to `dst`, with knots on the
/// support pieces of `src` refined to at least `n_knots` intervals.
pub fn potential_between(src: &QuantileFn, dst: &QuantileFn, n_knots: usize) -> Result<Potential1D> {
    let d = *src.domain();
    let (a, big_r) = (d.a(), d.r_max());
    let ds = *dst.domain();
    let mut radii = vec![a];
    let mut t_lo = Vec::new();
    let mut t_hi = Vec::new();
    let dst_breaks = dst.breakpoints();
    let push = |radii: &mut Vec<f64>, t_lo: &mut Vec<f64>, t_hi: &mut Vec<f64>, r: f64, tl: f64, th: f64| {
        let last = *radii.last().expect("non-empty");
        if r > last {
            radii.push(r);
            t_lo.push(tl);
            t_hi.push(th);
        }
    };
    let dst_at = |s: f64, right: bool| if right { dst.eval_right(s) } else { dst.eval(s) };
    for p in src.pieces() {
        if p.is_atom() || p.mass() <= 0.0 {
            continue;
        }
        // Vacuum or the region below the support: constant map.
        let t_gap = dst_at(p.s0, true);
        push(&mut radii, &mut t_lo, &mut t_hi, p.r0, t_gap, t_gap);
        let mut cuts: Vec<f64> = vec![p.s0, p.s1];
        let m = ((n_knots as f64) * p.mass()).ceil().max(1.0) as usize;
        cuts.extend((1..m).map(|k| p.s0 + p.mass() * k as f64 / m as f64));
        let lo = dst_breaks.partition_point(|&s| s <= p.s0);
        let hi = dst_breaks.partition_point(|&s| s < p.s1);
        cuts.extend_from_slice(&dst_breaks[lo..hi]);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for w in cuts.windows(2) {
            let (u, v) = (w[0], w[1]);
            let mid = 0.5 * (u + v);
            let q = dst.pieces()[dst.pieces().partition_point(|x| x.s1 <= mid).min(dst.pieces().len() - 1)];
            push(&mut radii, &mut t_lo, &mut t_hi, p.eval(&d, v), q.eval(&ds, u), q.eval(&ds, v));
        }
    }
    let t_end = dst.eval(1.0);
    push(&mut radii, &mut t_lo, &mut t_hi, big_r, t_end, t_end);
    if radii.len() < 2 {
        // Everything sits on an atom at a: any constant map works.
        radii.push(big_r);
        t_lo.push(t_end);
        t_hi.push(t_end);
    }
    Potential1D::from_map(radii, t_lo, t_hi)
}

/// Kantorovich potential of the optimal map from `src` to `dst`, normalised
/// to vanish at `R`.
pub fn kantorovich_potential(src: &Measure1D, dst: &Measure1D) -> Result<Potential1D> {
    src.domain().require_same(dst.domain())?;
    potential_between(&QuantileFn::exact(src)?, &QuantileFn::exact(dst)?, 4096)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain1D;
    use crate::transport::w2_squared_quantiles;

    #[test]
    fn shift_has_constant_slope() {
        let d = Domain1D::flat(0.0, 4.0, false).unwrap();
        let mut x = vec![0.0; 8];
        let mut y = vec![0.0; 8];
        x[0..2].iter_mut().for_each(|v| *v = 1.0);
        y[3..5].iter_mut().for_each(|v| *v = 1.0);
        let (mx, my) = (Measure1D::new(d, x, 0.0).unwrap(), Measure1D::new(d, y, 0.0).unwrap());
        let phi = kantorovich_potential(&mx, &my).unwrap();
        for r in [0.1, 0.5, 0.9] {
            assert!((phi.slope(r) + 1.5).abs() < 1e-12);
        }
        assert_eq!(phi.value(4.0), 0.0);
    }

    #[test]
    fn dual_value_matches_half_squared_distance() {
        let d = Domain1D::radial_normalized(1.0, 10.0, 0.4, true).unwrap();
        let x = Measure1D::uniform(d, 0.4, 30).unwrap();
        let mut rho = vec![0.0; 30];
        let e = crate::measure::uniform_edges(&d, 30);
        let mut m = 0.0;
        for i in 5..20 {
            rho[i] = 0.9;
            m += 0.9 * d.weight_between(e[i], e[i + 1]);
        }
        let y = Measure1D::new(d, rho, 1.0 - m).unwrap();
        let (qx, qy) = (QuantileFn::exact(&x).unwrap(), QuantileFn::exact(&y).unwrap());
        let phi = potential_between(&qx, &qy, 4096).unwrap();
        let w = w2_squared_quantiles(&qx, &qy).unwrap();
        let dual = phi.dual_value(&qx, &qy);
        assert!((dual - 0.5 * w).abs() <= 1e-6 * 0.5 * w, "{dual} vs {}", 0.5 * w);
    }
}
