//! Discrete optimal transport by min-cost flow, independent of sorting.

use crate::error::{Error, Result};

pub(crate) fn check_balance(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<()> {
    let l: f64 = src.iter().map(|p| p.1).sum();
    let r: f64 = dst.iter().map(|p| p.1).sum();
    if src.iter().chain(dst).any(|p| !(p.1 >= 0.0) || !p.0.is_finite()) {
        return Err(Error::InvalidArgument("atoms need finite positions and nonnegative masses".into()));
    }
    if !(l > 0.0) || (l - r).abs() > 1e-12 * l.max(r) {
        return Err(Error::Unbalanced { left: l, right: r });
    }
    Ok(())
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Wasserstein-2 distance between atomic measures, computed as a
/// transportation problem with quadratic cost and solved by successive
/// shortest augmenting paths.
pub fn w2_lp_oracle(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<f64> {
    check_balance(src, dst)?;
    let (n, m) = (src.len(), dst.len());
    let source = n + m;
    let sink = source + 1;
    let nodes = sink + 1;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |edges: &mut Vec<Edge>, u: usize, v: usize, cap: f64, cost: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0.0, cost: -cost });
    };
    for (i, p) in src.iter().enumerate() {
        add(&mut edges, source, i, p.1, 0.0);
    }
    for (j, q) in dst.iter().enumerate() {
        add(&mut edges, n + j, sink, q.1, 0.0);
    }
    for (i, p) in src.iter().enumerate() {
        for (j, q) in dst.iter().enumerate() {
            add(&mut edges, i, n + j, f64::INFINITY, (p.0 - q.0).powi(2));
        }
    }
    let total: f64 = src.iter().map(|p| p.1).sum();
    let eps = 1e-15 * total;
    let mut flow = 0.0;
    let mut cost = 0.0;
    for _ in 0..10 * (n + m + 2) * (n + m + 2) {
        if total - flow <= eps {
            break;
        }
        // Bellman-Ford on the residual graph.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<usize>> = vec![None; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &adj[u] {
                    let ed = &edges[e];
                    if ed.cap > eps && dist[u] + ed.cost < dist[ed.to] - 1e-15 {
                        dist[ed.to] = dist[u] + ed.cost;
                        prev[ed.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == f64::INFINITY {
            break;
        }
        let mut push = total - flow;
        let mut v = sink;
        while let Some(e) = prev[v] {
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = prev[v] {
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        flow += push;
        cost += push * dist[sink];
    }
    if total - flow > 1e-12 * total {
        return Err(Error::SolverFailure {
            reason: "min-cost flow did not route all mass".into(),
            gap: total - flow,
        });
    }
    Ok(cost.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_pair_onto_midpoint() {
        let w = w2_lp_oracle(&[(0.0, 0.5), (1.0, 0.5)], &[(0.5, 1.0)]).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unbalanced_is_an_error() {
        assert!(matches!(
            w2_lp_oracle(&[(0.0, 0.4)], &[(1.0, 0.5)]),
            Err(Error::Unbalanced { .. })
        ));
    }

    #[test]
    fn crossing_pairs_are_uncrossed() {
        let w = w2_lp_oracle(&[(0.0, 0.5), (2.0, 0.5)], &[(3.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!((w * w - 1.0).abs() < 1e-14);
    }
}
