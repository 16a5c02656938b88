//! Exact 1-Wasserstein distance between small atomic measures with the
//! kernel metric as ground cost.
//!
//! Uniform measures with equally many atoms reduce to a linear assignment
//! problem, solved with the Hungarian method (shortest augmenting paths with
//! potentials, `O(n^3)`). Everything else goes through successive shortest
//! paths on the transportation network.

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::measures::AtomicMeasure;

/// Largest total atom count accepted by [`wasserstein1`].
pub const W1_MAX_ATOMS: usize = 64;

/// Flow amounts below this are treated as zero.
const FLOW_EPS: f64 = 1e-15;

/// 1-Wasserstein (Kantorovich-Rubinstein) distance under the ground cost
/// `d_k`.
pub fn wasserstein1(k: &Kernel, mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<f64> {
    let atoms = mu.len() + nu.len();
    if atoms > W1_MAX_ATOMS {
        return Err(Error::Size {
            atoms,
            limit: W1_MAX_ATOMS,
        });
    }
    mu.check_in(k.domain())?;
    nu.check_in(k.domain())?;

    let mut cost = vec![vec![0.0; nu.len()]; mu.len()];
    for (i, x) in mu.atoms().enumerate() {
        for (j, y) in nu.atoms().enumerate() {
            cost[i][j] = k.metric_unchecked(x, y)?;
        }
    }

    let uniform = |m: &AtomicMeasure| {
        let w = 1.0 / m.len() as f64;
        m.weights().iter().all(|v| *v == w)
    };
    if mu.len() == nu.len() && uniform(mu) && uniform(nu) {
        let (total, _) = assignment(&cost);
        Ok(total / mu.len() as f64)
    } else {
        transport_cost(&cost, mu.weights(), nu.weights())
    }
}

/// Minimum-cost perfect matching on a square cost matrix. Returns the
/// optimal total cost and, for every row, its assigned column.
pub fn assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    // 1-based arrays; column 0 is a virtual start node.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[row_of[j] - 1] = j - 1;
    }
    let total = col_of_row
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .sum();
    (total, col_of_row)
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Discrete optimal transport by successive shortest augmenting paths.
/// Ground costs are nonnegative, so Bellman-Ford on the residual graph is
/// enough at these sizes.
fn transport_cost(cost: &[Vec<f64>], supply: &[f64], demand: &[f64]) -> Result<f64> {
    let (n, m) = (supply.len(), demand.len());
    let source = n + m;
    let sink = source + 1;
    let nodes = sink + 1;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |edges: &mut Vec<Edge>, a: usize, b: usize, cap: f64, c: f64| {
        adj[a].push(edges.len());
        edges.push(Edge { to: b, cap, cost: c });
        adj[b].push(edges.len());
        edges.push(Edge {
            to: a,
            cap: 0.0,
            cost: -c,
        });
    };
    for (i, s) in supply.iter().enumerate() {
        add(&mut edges, source, i, *s, 0.0);
    }
    for (j, d) in demand.iter().enumerate() {
        add(&mut edges, n + j, sink, *d, 0.0);
    }
    for (i, row) in cost.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            add(&mut edges, i, n + j, f64::INFINITY, *c);
        }
    }

    let total_supply: f64 = supply.iter().sum();
    let total_demand: f64 = demand.iter().sum();
    let target = total_supply.min(total_demand);
    if (total_supply - total_demand).abs() > 1e-12 {
        return Err(Error::Invariant(format!(
            "unbalanced transport: supply {total_supply}, demand {total_demand}"
        )));
    }

    let mut shipped = 0.0;
    let mut total_cost = 0.0;
    // Each augmentation saturates an edge, so this bound is never reached on
    // well-formed input.
    let max_rounds = 4 * (n * m + n + m) + 16;
    for _ in 0..max_rounds {
        if target - shipped <= FLOW_EPS {
            return Ok(total_cost);
        }
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev_edge = vec![usize::MAX; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for a in 0..nodes {
                if dist[a] == f64::INFINITY {
                    continue;
                }
                for &e in &adj[a] {
                    let edge = &edges[e];
                    if edge.cap > FLOW_EPS && dist[a] + edge.cost < dist[edge.to] - 1e-15 {
                        dist[edge.to] = dist[a] + edge.cost;
                        prev_edge[edge.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == f64::INFINITY {
            // Only round-off mass is left unshipped.
            if target - shipped <= 1e-12 {
                return Ok(total_cost);
            }
            return Err(Error::Numerical(
                "transport network has no augmenting path".into(),
            ));
        }
        let mut push = target - shipped;
        let mut node = sink;
        while node != source {
            let e = prev_edge[node];
            push = push.min(edges[e].cap);
            node = edges[e ^ 1].to;
        }
        let mut node = sink;
        while node != source {
            let e = prev_edge[node];
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            node = edges[e ^ 1].to;
        }
        shipped += push;
        total_cost += push * dist[sink];
    }
    Err(Error::Numerical(
        "transport solver did not converge".into(),
    ))
}
