//! Quantile (inverse cumulative distribution) representation of measures.
//!
//! A [`QuantileFn`] is a list of pieces over mass coordinates `s in [0, 1]`.
//! Inside a piece the cumulative weight `W(Q(s))` is affine in `s`, which is
//! exactly the quantile of a piecewise-constant density. A piece with equal
//! end radii is an atom; the exit is an atom at `r = a` occupying `[0, m]`.
//! Gaps between pieces in `r` are vacuum.

use crate::domain::Domain1D;
use crate::error::{Error, Result};
use crate::measure::{uniform_edges, Measure1D, MASS_TOL};

/// A segment of the quantile function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub s0: f64,
    pub s1: f64,
    pub r0: f64,
    pub r1: f64,
    y0: f64,
    y1: f64,
}

impl Piece {
    fn new(domain: &Domain1D, s0: f64, s1: f64, r0: f64, r1: f64) -> Self {
        Self {
            s0,
            s1,
            r0,
            r1,
            y0: domain.cum_weight(r0),
            y1: domain.cum_weight(r1),
        }
    }

    pub fn is_atom(&self) -> bool {
        self.r0 == self.r1
    }

    pub fn mass(&self) -> f64 {
        self.s1 - self.s0
    }

    /// Density of the piece (infinite for atoms).
    pub fn density(&self) -> f64 {
        if self.is_atom() {
            f64::INFINITY
        } else {
            self.mass() / (self.y1 - self.y0)
        }
    }

    /// Quantile at mass coordinate `s`, clamped to the piece.
    pub fn eval(&self, domain: &Domain1D, s: f64) -> f64 {
        if self.is_atom() || self.s1 <= self.s0 {
            return self.r0;
        }
        let th = ((s - self.s0) / (self.s1 - self.s0)).clamp(0.0, 1.0);
        let r = domain.inv_cum_weight(self.y0 + (self.y1 - self.y0) * th);
        r.clamp(self.r0, self.r1)
    }
}

/// Monotone quantile function `Q : [0, 1] -> [a, R]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFn {
    domain: Domain1D,
    pieces: Vec<Piece>,
    exit_mass: f64,
}

impl QuantileFn {
    /// Exact quantile function of a probability measure.
    pub fn exact(m: &Measure1D) -> Result<Self> {
        let total = m.total_mass();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::MassMismatch {
                expected: 1.0,
                found: total,
            });
        }
        let d = *m.domain();
        let mut pieces = Vec::new();
        let mut s = m.exit_mass();
        if s > 0.0 {
            pieces.push(Piece::new(&d, 0.0, s, d.a(), d.a()));
        }
        let e = m.edges();
        for i in 0..m.n_cells() {
            let mass = m.cell_mass(i);
            if mass > 0.0 {
                pieces.push(Piece::new(&d, s, s + mass, e[i], e[i + 1]));
                s += mass;
            }
        }
        if let Some(last) = pieces.last_mut() {
            last.s1 = 1.0;
        }
        Ok(Self {
            domain: d,
            pieces,
            exit_mass: m.exit_mass(),
        })
    }

    /// Piecewise quantile through the points `(s_k, r_k)` with an exit atom on `[0, exit_mass]`.
    ///
    /// Points must have nondecreasing `s` from `exit_mass` to `1`; equal `s`
    /// values encode a jump (vacuum).
    pub fn from_points(domain: Domain1D, points: &[(f64, f64)], exit_mass: f64) -> Result<Self> {
        if points.is_empty() && exit_mass < 1.0 {
            return Err(Error::InvalidArgument("no quantile points".into()));
        }
        if exit_mass > 0.0 && !domain.has_exit() {
            return Err(Error::InvalidArgument("exit mass on a domain without exit".into()));
        }
        let tol = 1e-12 * (1.0 + domain.r_max());
        for (k, p) in points.iter().enumerate() {
            if !(p.1 >= domain.a() - tol && p.1 <= domain.r_max() + tol) {
                return Err(Error::Domain(format!("quantile value {} outside the domain", p.1)));
            }
            if k > 0 && (p.1 < points[k - 1].1 - tol || p.0 < points[k - 1].0) {
                return Err(Error::Monotonicity { index: k });
            }
        }
        let clamp = |r: f64| r.clamp(domain.a(), domain.r_max());
        let mut pieces = Vec::new();
        if exit_mass > 0.0 {
            pieces.push(Piece::new(&domain, 0.0, exit_mass, domain.a(), domain.a()));
        }
        for w in points.windows(2) {
            if w[1].0 > w[0].0 {
                let r0 = clamp(w[0].1);
                let r1 = clamp(w[1].1).max(r0);
                pieces.push(Piece::new(&domain, w[0].0, w[1].0, r0, r1));
            }
        }
        if pieces.is_empty() {
            return Err(Error::InvalidArgument("quantile points carry no mass".into()));
        }
        let first = pieces[0].s0;
        let last = pieces[pieces.len() - 1].s1;
        if first.abs() > MASS_TOL || (last - 1.0).abs() > MASS_TOL {
            return Err(Error::MassMismatch {
                expected: 1.0,
                found: last - first,
            });
        }
        Ok(Self {
            domain,
            pieces,
            exit_mass,
        })
    }

    /// Quantile through uniform nodes `s_j = j / N` where the first `exit_nodes`
    /// nodes sit in the exit. The atom then holds mass `s_{exit_nodes - 1}`.
    pub fn from_nodes(domain: Domain1D, q: &[f64], exit_nodes: usize) -> Result<Self> {
        let n = q.len() - 1;
        let s = |j: usize| j as f64 / n as f64;
        if exit_nodes > n {
            let pieces = vec![Piece::new(&domain, 0.0, 1.0, domain.a(), domain.a())];
            return Ok(Self {
                domain,
                pieces,
                exit_mass: 1.0,
            });
        }
        let start = exit_nodes.saturating_sub(1);
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(n + 1 - start);
        if exit_nodes > 0 {
            pts.push((s(start), domain.a()));
        } else {
            pts.push((0.0, q[0]));
        }
        for (j, &v) in q.iter().enumerate().skip(start + 1) {
            pts.push((s(j), v));
        }
        Self::from_points(domain, &pts, s(start) * (exit_nodes > 0) as u8 as f64)
    }

    /// An atomic measure `sum_i m_i delta_{x_i}` on a flat line spanning the atoms.
    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        let mut sorted: Vec<(f64, f64)> = atoms.iter().copied().filter(|a| a.1 > 0.0).collect();
        if sorted.is_empty() {
            return Err(Error::InvalidArgument("no atoms with positive mass".into()));
        }
        sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
        let total: f64 = sorted.iter().map(|a| a.1).sum();
        let lo = sorted[0].0;
        let hi = sorted[sorted.len() - 1].0;
        let domain = Domain1D::flat(lo.min(0.0), hi.max(lo.min(0.0) + 1.0), false)?;
        let mut pieces = Vec::new();
        let mut s = 0.0;
        for (x, m) in sorted {
            let m = m / total;
            pieces.push(Piece::new(&domain, s, s + m, x, x));
            s += m;
        }
        pieces.last_mut().expect("non-empty").s1 = 1.0;
        Ok(Self {
            domain,
            pieces,
            exit_mass: 0.0,
        })
    }

    pub fn domain(&self) -> &Domain1D {
        &self.domain
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn exit_mass(&self) -> f64 {
        self.exit_mass
    }

    fn piece_at(&self, s: f64, right: bool) -> &Piece {
        let k = if right {
            self.pieces.partition_point(|p| p.s1 <= s)
        } else {
            self.pieces.partition_point(|p| p.s1 < s)
        };
        &self.pieces[k.min(self.pieces.len() - 1)]
    }

    /// Left-continuous quantile `Q(s)`.
    pub fn eval(&self, s: f64) -> f64 {
        self.piece_at(s, false).eval(&self.domain, s)
    }

    /// Right limit `Q(s+)`.
    pub fn eval_right(&self, s: f64) -> f64 {
        self.piece_at(s, true).eval(&self.domain, s)
    }

    /// `Q` at `n` uniform points `s_j = j / (n - 1)`.
    pub fn samples(&self, n: usize) -> Vec<f64> {
        (0..n).map(|j| self.eval(j as f64 / (n - 1) as f64)).collect()
    }

    /// Number of the `n` uniform samples that fall in the exit plateau `Q = a`.
    pub fn exit_plateau(&self, n: usize) -> usize {
        (0..n)
            .take_while(|&j| j as f64 / (n - 1) as f64 <= self.exit_mass)
            .count()
            * (self.exit_mass > 0.0) as usize
    }

    /// Cumulative distribution `F(r) = mu([a, r])`, counting the exit.
    pub fn cdf(&self, r: f64) -> f64 {
        let k = self.pieces.partition_point(|p| p.r1 <= r);
        if k == self.pieces.len() {
            return 1.0;
        }
        let p = &self.pieces[k];
        if r < p.r0 {
            return p.s0;
        }
        let y = self.domain.cum_weight(r);
        p.s0 + (p.s1 - p.s0) * ((y - p.y0) / (p.y1 - p.y0)).clamp(0.0, 1.0)
    }

    /// All piece boundaries in `s`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().map(|p| p.s0).collect();
        b.push(1.0);
        b
    }

    /// Largest density of a non-exit piece; infinite if the measure has an interior atom.
    pub fn max_density(&self) -> f64 {
        self.pieces
            .iter()
            .filter(|p| !(p.is_atom() && self.domain.has_exit() && p.r0 == self.domain.a()))
            .filter(|p| p.mass() > 0.0)
            .map(|p| p.density())
            .fold(0.0, f64::max)
    }

    /// Whether the measure satisfies `rho <= 1 + tol`.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_density() <= 1.0 + tol
    }

    /// Integral `\int_0^1 g(Q(s)) ds`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.integrate_refined(g, 1)
    }

    /// `\int_u^v g(Q(s)) ds`.
    pub fn integrate_between(&self, g: impl Fn(f64) -> f64, u: f64, v: f64) -> f64 {
        let mut total = 0.0;
        for p in &self.pieces {
            let (lo, hi) = (p.s0.max(u), p.s1.min(v));
            if hi <= lo {
                continue;
            }
            total += if p.is_atom() {
                (hi - lo) * g(p.r0)
            } else {
                crate::numerics::gauss5(|s| g(p.eval(&self.domain, s)), lo, hi)
            };
        }
        total
    }

    /// As [`Self::integrate`], splitting each piece into about `n * mass` sub-intervals.
    pub fn integrate_refined(&self, g: impl Fn(f64) -> f64, n: usize) -> f64 {
        let mut total = 0.0;
        for p in &self.pieces {
            if p.is_atom() {
                total += p.mass() * g(p.r0);
                continue;
            }
            let k = ((n as f64) * p.mass()).ceil().max(1.0) as usize;
            for i in 0..k {
                let u = p.s0 + p.mass() * i as f64 / k as f64;
                let v = p.s0 + p.mass() * (i + 1) as f64 / k as f64;
                total += crate::numerics::gauss5(|s| g(p.eval(&self.domain, s)), u, v);
            }
        }
        total
    }
}

/// Quantile function sampled at `n_samples` uniform mass coordinates.
///
/// The result interpolates linearly in cumulative weight between samples and
/// keeps the exit atom exact.
pub fn quantile_of(m: &Measure1D, n_samples: usize) -> Result<QuantileFn> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two quantile samples".into()));
    }
    let exact = QuantileFn::exact(m)?;
    let d = *m.domain();
    let ex = m.exit_mass();
    let mut pts = Vec::with_capacity(n_samples + 2);
    if ex > 0.0 {
        if ex >= 1.0 {
            return QuantileFn::from_points(d, &[], 1.0);
        }
        pts.push((ex, exact.eval_right(ex)));
    }
    for j in 0..n_samples {
        let s = j as f64 / (n_samples - 1) as f64;
        if s > ex || (ex == 0.0 && j == 0) {
            let r = if j == 0 { exact.eval_right(0.0) } else { exact.eval(s) };
            pts.push((s, r));
        }
    }
    QuantileFn::from_points(d, &pts, ex)
}

/// Piecewise-constant density on `n_cells` uniform cells carrying the mass of `q`.
pub fn density_of(q: &QuantileFn, d: &Domain1D, n_cells: usize) -> Result<Measure1D> {
    q.domain.require_same(d)?;
    if n_cells == 0 {
        return Err(Error::InvalidArgument("need at least one cell".into()));
    }
    let edges = uniform_edges(d, n_cells);
    let ys: Vec<f64> = edges.iter().map(|&r| d.cum_weight(r)).collect();
    let mut mass = vec![0.0; n_cells];
    let mut exit = 0.0;
    let cell_of = |r: f64| -> usize {
        (edges.partition_point(|&e| e <= r).saturating_sub(1)).min(n_cells - 1)
    };
    for p in &q.pieces {
        if p.mass() <= 0.0 {
            continue;
        }
        if p.is_atom() || p.y1 <= p.y0 {
            if d.has_exit() && p.r0 <= d.a() {
                exit += p.mass();
            } else {
                mass[cell_of(p.r0)] += p.mass();
            }
            continue;
        }
        let dens = p.mass() / (p.y1 - p.y0);
        let mut i = cell_of(p.r0);
        let mut placed = 0.0;
        while i < n_cells && ys[i] < p.y1 {
            let lo = ys[i].max(p.y0);
            let hi = ys[i + 1].min(p.y1);
            if hi > lo {
                let dm = if hi >= p.y1 { p.mass() - placed } else { dens * (hi - lo) };
                mass[i] += dm;
                placed += dm;
            }
            i += 1;
        }
    }
    let rho = (0..n_cells).map(|i| mass[i] / (ys[i + 1] - ys[i])).collect();
    Measure1D::with_edges(*d, edges, rho, exit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_quantile_on_unit_interval() {
        let d = Domain1D::flat(0.0, 1.0, false).unwrap();
        let m = Measure1D::uniform(d, 1.0, 16).unwrap();
        let q = quantile_of(&m, 33).unwrap();
        for (j, v) in q.samples(33).iter().enumerate() {
            assert!((v - j as f64 / 32.0).abs() < 1e-14);
        }
    }

    #[test]
    fn all_mass_in_exit_gives_constant_quantile() {
        let d = Domain1D::flat(1.0, 3.0, true).unwrap();
        let m = Measure1D::new(d, vec![0.0; 4], 1.0).unwrap();
        let q = quantile_of(&m, 9).unwrap();
        assert!(q.samples(9).iter().all(|&v| v == 1.0));
        assert_eq!(q.exit_plateau(9), 9);
    }

    #[test]
    fn radial_uniform_quantile_is_square_root() {
        let d = Domain1D::radial_normalized(0.0, 10.0, 0.4, false).unwrap();
        let m = Measure1D::uniform(d, 0.4, 64).unwrap();
        let q = QuantileFn::exact(&m).unwrap();
        assert!((q.eval(0.25) - 5.0).abs() < 1e-12);
        for s in [0.01, 0.3, 0.77, 1.0] {
            assert!((q.eval(s) - 10.0 * f64::sqrt(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_mismatch_is_reported() {
        let d = Domain1D::flat(0.0, 1.0, false).unwrap();
        let m = Measure1D::unnormalized(d, uniform_edges(&d, 2), vec![1.0, 1.0], 0.0).unwrap();
        let half = Measure1D::unnormalized(d, uniform_edges(&d, 2), vec![0.5, 0.0], 0.0).unwrap();
        assert!(quantile_of(&m, 8).is_ok());
        assert!(matches!(quantile_of(&half, 8), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn decreasing_points_are_rejected() {
        let d = Domain1D::flat(0.0, 2.0, false).unwrap();
        let r = QuantileFn::from_points(d, &[(0.0, 1.0), (0.5, 0.5), (1.0, 1.5)], 0.0);
        assert_eq!(r, Err(Error::Monotonicity { index: 1 }));
    }

    #[test]
    fn density_round_trip_keeps_vacuum_and_exit() {
        let d = Domain1D::radial_normalized(1.0, 10.0, 0.4, true).unwrap();
        let n = 90;
        let mut rho = vec![0.0; n];
        let edges = uniform_edges(&d, n);
        let mut inner = 0.0;
        for i in 30..n {
            rho[i] = if i < 50 { 1.0 } else { 0.25 };
            inner += rho[i] * d.weight_between(edges[i], edges[i + 1]);
        }
        let m = Measure1D::new(d, rho, 1.0 - inner).unwrap();
        let back = density_of(&QuantileFn::exact(&m).unwrap(), &d, n).unwrap();
        assert!((back.exit_mass() - m.exit_mass()).abs() < 1e-14);
        for i in 0..n {
            assert!((back.rho()[i] - m.rho()[i]).abs() < 1e-10, "cell {i}");
        }
    }

    #[test]
    fn cdf_inverts_quantile() {
        let d = Domain1D::radial_normalized(1.0, 10.0, 0.4, true).unwrap();
        let m = Measure1D::uniform(d, 0.4, 50).unwrap();
        let q = QuantileFn::exact(&m).unwrap();
        for s in [0.1, 0.5, 0.9] {
            assert!((q.cdf(q.eval(s)) - s).abs() < 1e-13);
        }
    }

    #[test]
    fn nodes_with_exit_encode_atom() {
        let d = Domain1D::flat(0.0, 4.0, true).unwrap();
        let q = [0.0, 0.0, 0.5, 1.0, 1.5];
        let f = QuantileFn::from_nodes(d, &q, 2).unwrap();
        assert_eq!(f.exit_mass(), 0.25);
        assert!((f.eval(0.375) - 0.25).abs() < 1e-14);
        assert!((f.eval(0.625) - 0.75).abs() < 1e-14);
        assert!(f.is_feasible(1e-12));
    }
}
