//! Optimal transport between one-dimensional measures.
//!
//! In one dimension the monotone rearrangement is optimal for every convex
//! cost, so distances reduce to integrals over mass coordinates of
//! `|Q_src(s) - Q_dst(s)|^p`. These are evaluated exactly piece by piece.

mod lp;
mod potential;

pub use lp::w2_lp_oracle;
pub use potential::{kantorovich_potential, Potential1D};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::numerics::{brent_root, integrate};
use crate::quantile::{Piece, QuantileFn};

/// Default number of samples stored in a transport map summary.
pub const DEFAULT_MAP_SAMPLES: usize = 4096;

/// Distances and sampled monotone map between two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlanSummary {
    pub w2: f64,
    pub w1: f64,
    /// `(s, Q_src(s), Q_dst(s))` at midpoints of `n` uniform mass cells.
    pub map_samples: Vec<(f64, f64, f64)>,
    /// Whether all mass in the source exit stays in the target exit.
    pub stay_on_exit: bool,
}

impl TransportPlanSummary {
    /// Debug CSV with columns `s,Q_src,Q_dst`.
    pub fn map_csv(&self) -> String {
        let mut out = String::from("s,Q_src,Q_dst\n");
        for (s, a, b) in &self.map_samples {
            let _ = writeln!(out, "{s},{a},{b}");
        }
        out
    }
}

/// Common refinement of the breakpoints of two quantile functions, paired
/// with the pieces active on each sub-interval.
fn merged<'a>(q1: &'a QuantileFn, q2: &'a QuantileFn) -> Vec<(f64, f64, &'a Piece, &'a Piece)> {
    let mut cuts: Vec<f64> = q1.breakpoints();
    cuts.extend(q2.breakpoints());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (p1, p2) = (q1.pieces(), q2.pieces());
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v <= u {
            continue;
        }
        let mid = 0.5 * (u + v);
        while i + 1 < p1.len() && p1[i].s1 <= mid {
            i += 1;
        }
        while j + 1 < p2.len() && p2[j].s1 <= mid {
            j += 1;
        }
        out.push((u, v, &p1[i], &p2[j]));
    }
    out
}

fn check_pair(q1: &QuantileFn, q2: &QuantileFn) -> Result<()> {
    let (a, b) = (q1.domain(), q2.domain());
    if a.kind() != b.kind() || a.has_exit() != b.has_exit() || (a.a() - b.a()).abs() > 1e-12 {
        return Err(Error::Domain("transport between different domains".into()));
    }
    Ok(())
}

/// `\int_u^v f` with a cheap rule for smooth pieces and adaptivity elsewhere.
fn piece_integral(f: impl Fn(f64) -> f64, u: f64, v: f64) -> f64 {
    integrate(f, u, v, 1e-17, 1e-13)
}

/// Squared Wasserstein-2 distance between two quantile functions.
pub fn w2_squared_quantiles(q1: &QuantileFn, q2: &QuantileFn) -> Result<f64> {
    check_pair(q1, q2)?;
    let (d1, d2) = (*q1.domain(), *q2.domain());
    let mut total = 0.0;
    for (u, v, p1, p2) in merged(q1, q2) {
        if p1.is_atom() && p2.is_atom() {
            total += (v - u) * (p1.r0 - p2.r0).powi(2);
        } else {
            total += piece_integral(|s| (p1.eval(&d1, s) - p2.eval(&d2, s)).powi(2), u, v);
        }
    }
    Ok(total)
}

/// Wasserstein-1 distance between two quantile functions.
pub fn w1_quantiles(q1: &QuantileFn, q2: &QuantileFn) -> Result<f64> {
    check_pair(q1, q2)?;
    let (d1, d2) = (*q1.domain(), *q2.domain());
    let mut total = 0.0;
    for (u, v, p1, p2) in merged(q1, q2) {
        let diff = |s: f64| p1.eval(&d1, s) - p2.eval(&d2, s);
        if p1.is_atom() && p2.is_atom() {
            total += (v - u) * (p1.r0 - p2.r0).abs();
            continue;
        }
        let (du, dv) = (diff(u), diff(v));
        let mut cuts = vec![u];
        if du * dv < 0.0 {
            if let Ok(c) = brent_root(diff, u, v, 1e-15 * (1.0 + v.abs())) {
                cuts.push(c);
            }
        }
        cuts.push(v);
        for w in cuts.windows(2) {
            total += piece_integral(|s| diff(s).abs(), w[0], w[1]);
        }
    }
    Ok(total)
}

/// Wasserstein-2 distance between two quantile functions.
pub fn w2_quantiles(q1: &QuantileFn, q2: &QuantileFn) -> Result<f64> {
    Ok(w2_squared_quantiles(q1, q2)?.max(0.0).sqrt())
}

/// Transport summary between two quantile functions with `n` map samples.
pub fn plan_summary(src: &QuantileFn, dst: &QuantileFn, n: usize) -> Result<TransportPlanSummary> {
    let w2 = w2_quantiles(src, dst)?;
    let w1 = w1_quantiles(src, dst)?;
    let map_samples = (0..n)
        .map(|j| {
            let s = (j as f64 + 0.5) / n as f64;
            (s, src.eval(s), dst.eval(s))
        })
        .collect();
    Ok(TransportPlanSummary {
        w2,
        w1,
        map_samples,
        stay_on_exit: dst.exit_mass() >= src.exit_mass() - 1e-12,
    })
}

/// Wasserstein-2 summary between two probability measures on the same domain.
pub fn w2_1d(src: &Measure1D, dst: &Measure1D) -> Result<TransportPlanSummary> {
    w2_1d_with(src, dst, DEFAULT_MAP_SAMPLES)
}

/// As [`w2_1d`] with an explicit number of map samples.
pub fn w2_1d_with(src: &Measure1D, dst: &Measure1D, n_samples: usize) -> Result<TransportPlanSummary> {
    src.domain().require_same(dst.domain())?;
    let (qs, qd) = (QuantileFn::exact(src)?, QuantileFn::exact(dst)?);
    plan_summary(&qs, &qd, n_samples)
}

/// Wasserstein-2 distance between atomic measures given as `(position, mass)`.
pub fn w2_atoms(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<f64> {
    lp::check_balance(src, dst)?;
    let mut a: Vec<(f64, f64)> = src.iter().copied().filter(|p| p.1 > 0.0).collect();
    let mut b: Vec<(f64, f64)> = dst.iter().copied().filter(|p| p.1 > 0.0).collect();
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        cost += m * (a[i].0 - b[j].0).powi(2);
        ra -= m;
        rb -= m;
        if ra <= 0.0 {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= 0.0 {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    Ok(cost.sqrt())
}
