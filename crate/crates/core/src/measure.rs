//! Piecewise-constant densities on a one-dimensional domain, plus the mass
//! absorbed by the exit.

use std::fmt::Write as _;

use crate::domain::Domain1D;
use crate::error::{Error, Result};

/// Absolute tolerance on total mass for probability measures.
pub const MASS_TOL: f64 = 1e-12;
/// Slack allowed on the pointwise constraint `0 <= rho <= 1`.
pub const DENSITY_TOL: f64 = 1e-9;

/// Density `rho_i` on cells `[r_i, r_{i+1})` together with the mass held at the exit.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure1D {
    domain: Domain1D,
    edges: Vec<f64>,
    rho: Vec<f64>,
    exit_mass: f64,
}

/// Edges of `n` equal cells covering the domain.
pub fn uniform_edges(domain: &Domain1D, n: usize) -> Vec<f64> {
    let (a, r) = (domain.a(), domain.r_max());
    (0..=n)
        .map(|i| if i == n { r } else { a + (r - a) * i as f64 / n as f64 })
        .collect()
}

impl Measure1D {
    /// Probability measure on a uniform grid.
    pub fn new(domain: Domain1D, rho: Vec<f64>, exit_mass: f64) -> Result<Self> {
        let edges = uniform_edges(&domain, rho.len());
        Self::with_edges(domain, edges, rho, exit_mass)
    }

    /// Probability measure on arbitrary increasing cell edges spanning the domain.
    pub fn with_edges(domain: Domain1D, edges: Vec<f64>, rho: Vec<f64>, exit_mass: f64) -> Result<Self> {
        let m = Self::unnormalized(domain, edges, rho, exit_mass)?;
        let total = m.total_mass();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::MassMismatch {
                expected: 1.0,
                found: total,
            });
        }
        Ok(m)
    }

    /// A measure that satisfies the density bounds but need not have unit mass.
    pub fn unnormalized(domain: Domain1D, edges: Vec<f64>, rho: Vec<f64>, exit_mass: f64) -> Result<Self> {
        if rho.is_empty() || edges.len() != rho.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} edges for {} cells",
                edges.len(),
                rho.len()
            )));
        }
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + y.abs());
        if !close(edges[0], domain.a()) || !close(edges[rho.len()], domain.r_max()) {
            return Err(Error::Domain("cell edges must span [a, R]".into()));
        }
        if edges.windows(2).any(|e| !(e[1] > e[0])) {
            return Err(Error::InvalidArgument("cell edges must increase".into()));
        }
        for (i, &v) in rho.iter().enumerate() {
            if !(v >= -DENSITY_TOL && v <= 1.0 + DENSITY_TOL) {
                return Err(Error::ConstraintViolation { cell: i, value: v });
            }
        }
        if !(exit_mass >= 0.0) || (!domain.has_exit() && exit_mass != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "exit mass {exit_mass} not allowed on this domain"
            )));
        }
        Ok(Self {
            domain,
            edges,
            rho,
            exit_mass,
        })
    }

    /// Constant density `rho0` on `n` cells, which must carry unit mass.
    pub fn uniform(domain: Domain1D, rho0: f64, n: usize) -> Result<Self> {
        Self::new(domain, vec![rho0; n], 0.0)
    }

    /// Builds densities from per-cell masses on a uniform grid.
    pub fn from_cell_masses(domain: Domain1D, masses: &[f64], exit_mass: f64) -> Result<Self> {
        let edges = uniform_edges(&domain, masses.len());
        let rho = masses
            .iter()
            .enumerate()
            .map(|(i, m)| m / domain.weight_between(edges[i], edges[i + 1]))
            .collect();
        Self::with_edges(domain, edges, rho, exit_mass)
    }

    pub fn domain(&self) -> &Domain1D {
        &self.domain
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn exit_mass(&self) -> f64 {
        self.exit_mass
    }

    pub fn n_cells(&self) -> usize {
        self.rho.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    pub fn cell_weight(&self, i: usize) -> f64 {
        self.domain.weight_between(self.edges[i], self.edges[i + 1])
    }

    pub fn cell_mass(&self, i: usize) -> f64 {
        self.rho[i] * self.cell_weight(i)
    }

    /// Mass inside the domain, excluding the exit.
    pub fn interior_mass(&self) -> f64 {
        (0..self.rho.len()).map(|i| self.cell_mass(i)).sum()
    }

    /// Interior mass plus exit mass.
    pub fn total_mass(&self) -> f64 {
        self.interior_mass() + self.exit_mass
    }

    pub fn max_density(&self) -> f64 {
        self.rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Integral of `g` against the measure; the exit contributes `g(a)` per unit mass.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        let mut s = self.exit_mass * g(self.domain.a());
        for i in 0..self.rho.len() {
            if self.rho[i] != 0.0 {
                let d = &self.domain;
                s += self.rho[i]
                    * crate::numerics::gauss5(|r| g(r) * d.weight(r), self.edges[i], self.edges[i + 1]);
            }
        }
        s
    }

    /// CSV with header `r_left,r_right,rho` and a trailing `exit_mass,<value>` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r_left,r_right,rho\n");
        for i in 0..self.rho.len() {
            let _ = writeln!(out, "{},{},{}", self.edges[i], self.edges[i + 1], self.rho[i]);
        }
        let _ = writeln!(out, "exit_mass,{}", self.exit_mass);
        out
    }

    /// Parses the output of [`Self::to_csv`] on the given domain.
    pub fn from_csv(domain: Domain1D, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "r_left,r_right,rho" => {}
            other => return Err(Error::Parse(format!("unexpected header {other:?}"))),
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
        };
        let mut edges = Vec::new();
        let mut rho = Vec::new();
        let mut exit = None;
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() == 2 && fields[0].trim() == "exit_mass" {
                exit = Some(num(fields[1])?);
                continue;
            }
            if exit.is_some() {
                return Err(Error::Parse("rows after exit_mass".into()));
            }
            if fields.len() != 3 {
                return Err(Error::Parse(format!("bad row {line:?}")));
            }
            let (l, r) = (num(fields[0])?, num(fields[1])?);
            match edges.last() {
                None => edges.push(l),
                Some(&prev) if prev == l => {}
                Some(_) => return Err(Error::Parse(format!("cells are not contiguous at {l}"))),
            }
            edges.push(r);
            rho.push(num(fields[2])?);
        }
        let exit = exit.ok_or_else(|| Error::Parse("missing exit_mass row".into()))?;
        Self::with_edges(domain, edges, rho, exit)
    }
}

/// Total mass of `m`, including the exit.
pub fn total_mass(m: &Measure1D) -> f64 {
    m.total_mass()
}
