//! Projected gradient reference solver for small step problems without an exit.
//!
//! Minimises the same node objective as the main solver, but by gradient
//! steps followed by a Dykstra projection onto the intersection of the
//! pairwise spacing constraints. Slow; used to cross-check the main solver.

use crate::domain::Domain1D;
use crate::error::{Error, Result};
use crate::potential::PotentialD;

use super::solver::node_weight;

/// Result of the reference solver.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub q: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Problem<'a> {
    dom: Domain1D,
    d: &'a PotentialD,
    tau: f64,
    q: &'a [f64],
    n: usize,
}

impl Problem<'_> {
    fn objective(&self, y: &[f64]) -> f64 {
        (0..=self.n)
            .map(|j| {
                let p = self.dom.inv_cum_weight(y[j]);
                node_weight(j, self.n) * (self.d.value(p) + (p - self.q[j]).powi(2) / (2.0 * self.tau))
            })
            .sum()
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        (0..=self.n)
            .map(|j| {
                let p = self.dom.inv_cum_weight(y[j]);
                node_weight(j, self.n) * (self.d.slope(p) + (p - self.q[j]) / self.tau) / self.dom.weight(p)
            })
            .collect()
    }

    /// Euclidean projection onto `{y_{j+1} - y_j >= ds, 0 <= y_0, y_n <= cap}` by Dykstra's method.
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let ds = 1.0 / n as f64;
        let cap = self.dom.capacity();
        let mut y = x.to_vec();
        let mut inc = vec![vec![0.0; n + 1]; 3];
        for _ in 0..200_000 {
            let before = y.clone();
            for (set, incr) in inc.iter_mut().enumerate() {
                let z: Vec<f64> = y.iter().zip(incr.iter()).map(|(a, b)| a + b).collect();
                let mut p = z.clone();
                if set < 2 {
                    let mut i = set;
                    while i + 1 <= n {
                        if p[i + 1] - p[i] < ds {
                            let m = 0.5 * (p[i] + p[i + 1]);
                            p[i] = m - 0.5 * ds;
                            p[i + 1] = m + 0.5 * ds;
                        }
                        i += 2;
                    }
                } else {
                    p[0] = p[0].max(0.0);
                    p[n] = p[n].min(cap);
                }
                for j in 0..=n {
                    incr[j] = z[j] - p[j];
                }
                y = p;
            }
            let change = y.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if change < 1e-15 {
                break;
            }
        }
        y
    }
}

/// Solves the step with projected gradient descent and Armijo backtracking.
///
/// Stops when the relative objective decrease over 10 iterations falls
/// below `1e-12`; fails after `max_iter` iterations.
pub fn solve(dom: Domain1D, d: &PotentialD, tau: f64, q_prev: &[f64], max_iter: usize) -> Result<ReferenceSolution> {
    if dom.has_exit() {
        return Err(Error::InvalidArgument("reference solver handles domains without exit".into()));
    }
    let n = q_prev.len() - 1;
    let pb = Problem { dom, d, tau, q: q_prev, n };
    let mut y = pb.project(&q_prev.iter().map(|&r| dom.cum_weight(r)).collect::<Vec<_>>());
    let mut f = pb.objective(&y);
    let mut history = vec![f];
    let w_min = dom.weight(dom.a()).min(dom.weight(dom.r_max())).max(1e-3);
    let mut eta = tau * n as f64 * w_min * w_min;
    for it in 0..max_iter {
        let g = pb.gradient(&y);
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
            let yn = pb.project(&trial);
            let fnew = pb.objective(&yn);
            let decrease: f64 = y.iter().zip(&yn).zip(&g).map(|((a, b), c)| c * (a - b)).sum();
            let dist2: f64 = y.iter().zip(&yn).map(|(a, b)| (a - b).powi(2)).sum();
            if fnew <= f - 0.5 * decrease.min(dist2 / eta) + 1e-16 * f.abs() {
                y = yn;
                f = fnew;
                accepted = true;
                eta *= 1.5;
                break;
            }
            eta *= 0.5;
        }
        history.push(f);
        let h = history.len();
        if !accepted || (h > 10 && (history[h - 11] - f).abs() <= 1e-12 * f.abs().max(1e-300)) {
            let q = y.iter().map(|&v| dom.inv_cum_weight(v)).collect();
            return Ok(ReferenceSolution {
                q,
                objective: f,
                iterations: it + 1,
            });
        }
    }
    let h = history.len();
    Err(Error::SolverFailure {
        reason: format!("projected gradient did not converge in {max_iter} iterations"),
        gap: (history[h.saturating_sub(11)] - f).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jko::solver::StepProblem;

    fn compare(dom: Domain1D, d: &PotentialD, tau: f64, q: &[f64]) {
        let fast = StepProblem::new(dom, d, tau, q, 0).solve().unwrap();
        let slow = solve(dom, d, tau, q, 200_000).unwrap();
        assert!(
            (fast.objective - slow.objective).abs() <= 1e-9 * (1.0 + fast.objective.abs()),
            "{} vs {}",
            fast.objective,
            slow.objective
        );
        // The exact solver is never beaten.
        assert!(fast.objective <= slow.objective + 1e-12);
        for (a, b) in fast.q.iter().zip(&slow.q) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn agrees_on_flat_domain() {
        let dom = Domain1D::flat(0.0, 3.0, false).unwrap();
        let d = PotentialD::polynomial(0.0, 1.0, 0.2);
        let n = 16;
        // Packed head, sparse tail.
        let q: Vec<f64> = (0..=n)
            .map(|j| {
                let s = j as f64 / n as f64;
                if s < 0.5 { 0.2 + s } else { 0.7 + 3.0 * (s - 0.5) }
            })
            .collect();
        compare(dom, &d, 0.2, &q);
    }

    #[test]
    fn agrees_on_radial_domain() {
        let dom = Domain1D::radial_normalized(1.0, 4.0, 0.5, false).unwrap();
        let d = PotentialD::distance_to_exit(&dom);
        let n = 12;
        let q: Vec<f64> = (0..=n)
            .map(|j| dom.inv_cum_weight(2.0 * j as f64 / n as f64 * 0.999))
            .collect();
        compare(dom, &d, 0.5, &q);
    }
}
