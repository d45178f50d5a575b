use crate::domain::Domain1D;
use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::potential::PotentialD;
use crate::quantile::{density_of, QuantileFn};

/// Relative slack used to recognise saturated segments.
pub const SATURATION_TOL: f64 = 1e-6;

/// A measure stored as `N + 1` quantile nodes at `s_j = j / N` plus the mass
/// held by the exit.
///
/// The first `exit_nodes` nodes sit in the exit. The exit mass `e` lies in
/// `[s_{J-1}, s_J]` for `J = exit_nodes`, so node `J` may be partly absorbed;
/// between `e` and `s_J` the quantile rises linearly in cumulative weight
/// from `a` to `Q_J`, as it does between consecutive free nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    domain: Domain1D,
    q: Vec<f64>,
    exit_nodes: usize,
    exit_mass: f64,
}

impl NodeState {
    /// State whose exit holds exactly the absorbed nodes' share `s_{J-1}`.
    pub fn new(domain: Domain1D, q: Vec<f64>, exit_nodes: usize) -> Result<Self> {
        let n = q.len().saturating_sub(1).max(1);
        let e = match exit_nodes {
            0 => 0.0,
            j => ((j - 1) as f64 / n as f64).min(1.0),
        };
        Self::with_exit_mass(domain, q, exit_nodes, e)
    }

    pub fn with_exit_mass(domain: Domain1D, q: Vec<f64>, exit_nodes: usize, exit_mass: f64) -> Result<Self> {
        if q.len() < 2 {
            return Err(Error::InvalidArgument("need at least two nodes".into()));
        }
        if exit_nodes > 0 && !domain.has_exit() {
            return Err(Error::InvalidArgument("absorbed nodes on a domain without exit".into()));
        }
        let n = q.len() - 1;
        let s = |j: usize| (j as f64 / n as f64).min(1.0);
        let ok = match exit_nodes {
            0 => exit_mass == 0.0,
            j if j > n => exit_mass == 1.0,
            j => exit_mass >= s(j - 1) && exit_mass <= s(j),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "exit mass {exit_mass} inconsistent with {exit_nodes} absorbed nodes out of {}",
                n + 1
            )));
        }
        let st = Self {
            domain,
            q,
            exit_nodes,
            exit_mass,
        };
        st.quantile()?;
        Ok(st)
    }

    /// Samples `m` at `n + 1` nodes and repairs rounding so the node
    /// configuration satisfies the discrete density constraint.
    pub fn from_measure(m: &Measure1D, n: usize) -> Result<Self> {
        Self::from_quantile(&QuantileFn::exact(m)?, n)
    }

    pub fn from_quantile(f: &QuantileFn, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidArgument("need at least one node interval".into()));
        }
        let d = *f.domain();
        let ds = 1.0 / n as f64;
        let m = f.exit_mass().clamp(0.0, 1.0);
        let exit_nodes = if m > 0.0 { ((m * n as f64).floor() as usize + 1).min(n + 1) } else { 0 };
        let mut y: Vec<f64> = (0..=n)
            .map(|j| {
                if j < exit_nodes {
                    0.0
                } else if j == 0 {
                    d.cum_weight(f.eval_right(0.0))
                } else {
                    d.cum_weight(f.eval(j as f64 * ds))
                }
            })
            .collect();
        if exit_nodes > 0 && exit_nodes <= n {
            let j = exit_nodes;
            y[j] = y[j].max(j as f64 * ds - m);
        }
        for j in exit_nodes.max(1)..=n {
            y[j] = y[j].max(y[j - 1] + ds);
        }
        let cap = d.capacity();
        if exit_nodes <= n {
            y[n] = y[n].min(cap);
            for j in (exit_nodes..n).rev() {
                y[j] = y[j].min(y[j + 1] - ds);
            }
            if exit_nodes == 0 && y[0] < -1e-12 {
                return Err(Error::ConstraintViolation { cell: 0, value: 1.0 });
            }
        }
        let q = y
            .iter()
            .enumerate()
            .map(|(j, &v)| if j < exit_nodes { d.a() } else { d.inv_cum_weight(v.max(0.0)) })
            .collect();
        let e = if exit_nodes > n { 1.0 } else { m };
        Self::with_exit_mass(d, q, exit_nodes, e)
    }

    pub fn domain(&self) -> &Domain1D {
        &self.domain
    }

    pub fn nodes(&self) -> &[f64] {
        &self.q
    }

    pub fn exit_nodes(&self) -> usize {
        self.exit_nodes
    }

    /// Number of node intervals `N`.
    pub fn n(&self) -> usize {
        self.q.len() - 1
    }

    pub fn exit_mass(&self) -> f64 {
        self.exit_mass
    }

    /// Breakpoints `(s, Q(s))` of the quantile outside the exit, starting at
    /// `(e, a)` when mass has been absorbed.
    pub fn interior_points(&self) -> Vec<(f64, f64)> {
        let n = self.n();
        let j0 = self.exit_nodes;
        if j0 > n {
            return Vec::new();
        }
        let mut pts = Vec::with_capacity(n + 2 - j0);
        if j0 > 0 {
            pts.push((self.exit_mass, self.domain.a()));
        }
        pts.extend((j0..=n).map(|j| (j as f64 / n as f64, self.q[j])));
        pts
    }

    /// `Q(s)`, linear in cumulative weight between breakpoints.
    pub fn value_at(&self, s: f64) -> f64 {
        let a = self.domain.a();
        if s <= self.exit_mass {
            return a;
        }
        let pts = self.interior_points();
        let k = pts.partition_point(|p| p.0 < s).clamp(1, pts.len() - 1);
        let ((s0, r0), (s1, r1)) = (pts[k - 1], pts[k]);
        if s1 <= s0 {
            return r1;
        }
        let th = ((s - s0) / (s1 - s0)).clamp(0.0, 1.0);
        let (y0, y1) = (self.domain.cum_weight(r0), self.domain.cum_weight(r1));
        self.domain.inv_cum_weight(y0 + th * (y1 - y0)).clamp(r0, r1)
    }

    pub fn quantile(&self) -> Result<QuantileFn> {
        if self.exit_nodes > self.n() {
            return QuantileFn::from_nodes(self.domain, &self.q, self.exit_nodes);
        }
        QuantileFn::from_points(self.domain, &self.interior_points(), self.exit_mass)
    }

    /// Piecewise-constant density on `n_cells` uniform cells.
    pub fn render(&self, n_cells: usize) -> Result<Measure1D> {
        density_of(&self.quantile()?, &self.domain, n_cells)
    }

    /// Trapezoid approximation of `\int D drho`, the exit contributing `D(a)`.
    pub fn energy(&self, d: &PotentialD) -> f64 {
        let pts = self.interior_points();
        let inner: f64 = pts
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (d.value(w[0].1) + d.value(w[1].1)))
            .sum();
        self.exit_mass * d.value(self.domain.a()) + inner
    }

    /// Trapezoid approximation of the Wasserstein-2 distance in mass
    /// coordinates, on the breakpoints of `self`.
    pub fn w2_to(&self, other: &NodeState) -> f64 {
        let n = self.n();
        let other_at = |s: f64, node: Option<usize>| match node {
            Some(j) if other.n() == n => other.q[j],
            _ => other.value_at(s),
        };
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(n + 2);
        let a = self.domain.a();
        for j in 0..self.exit_nodes.min(n + 1) {
            let s = j as f64 / n as f64;
            pts.push((s, (a - other_at(s, Some(j))).powi(2)));
        }
        if self.exit_nodes > 0 && self.exit_nodes <= n {
            let e = self.exit_mass;
            pts.push((e, (a - other_at(e, None)).powi(2)));
        }
        for j in self.exit_nodes..=n {
            let s = j as f64 / n as f64;
            pts.push((s, (self.q[j] - other_at(s, Some(j))).powi(2)));
        }
        pts.windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum::<f64>()
            .sqrt()
    }

    /// Outer radius of the packed zone adjacent to `a`, or `a` if the density
    /// at the exit side is below one.
    pub fn saturated_front(&self) -> f64 {
        let d = &self.domain;
        let pts = self.interior_points();
        if pts.is_empty() || d.cum_weight(pts[0].1) > 1e-12 * (1.0 + d.capacity()) {
            return d.a();
        }
        let mut b = d.a();
        let mut prev = (pts[0].0, 0.0);
        for &(s, r) in &pts[1..] {
            let y = d.cum_weight(r);
            if y - prev.1 > (s - prev.0) * (1.0 + SATURATION_TOL) {
                break;
            }
            b = r;
            prev = (s, y);
        }
        b
    }
}
