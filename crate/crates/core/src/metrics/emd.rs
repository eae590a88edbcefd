//! Exact discrete optimal transport by successive shortest augmenting paths.
//!
//! The transportation problem is solved as a min-cost flow on the bipartite
//! graph between source and target atoms. Each augmentation follows a
//! cheapest path in the residual graph (Bellman-Ford, so negative residual
//! costs need no potentials), which keeps every intermediate flow optimal for
//! the mass shipped so far. The result is an exact vertex of the
//! transportation polytope.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::distance::euclidean_distance;
use super::DiscreteDistribution;
use crate::error::{Error, Result};

/// Largest supported number of atoms per side.
pub const MAX_ATOMS: usize = 64;

const MASS_MATCH: f64 = 1e-9;
const FLOW_EPS: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct TransportSolution {
    pub cost: f64,
    /// `plan[i][j]` is the mass moved from source atom `i` to target atom `j`.
    pub plan: Vec<Vec<f64>>,
}

/// Earth mover's distance under the Euclidean ground metric, with an optimal plan.
pub fn emd_discrete(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<TransportSolution> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension { expected: p.dim(), actual: q.dim() });
    }
    let mut cost = vec![vec![0.0; q.len()]; p.len()];
    for (i, a) in p.locations().iter().enumerate() {
        for (j, b) in q.locations().iter().enumerate() {
            cost[i][j] = euclidean_distance(a, b)?;
        }
    }
    transport(p.masses(), q.masses(), &cost)
}

/// Minimum-cost transport between `supply` and `demand` for an arbitrary cost matrix.
pub fn transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<TransportSolution> {
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 {
        return Err(Error::domain("transport needs non-empty marginals"));
    }
    if n > MAX_ATOMS || m > MAX_ATOMS {
        return Err(Error::domain(format!("at most {MAX_ATOMS} atoms per side are supported")));
    }
    if cost.len() != n || cost.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension { expected: n * m, actual: cost.iter().map(Vec::len).sum() });
    }
    if supply.iter().chain(demand).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::domain("marginals must be finite and non-negative"));
    }
    let (ts, td): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if (ts - td).abs() > MASS_MATCH {
        return Err(Error::domain(format!("mass mismatch: {ts} vs {td}")));
    }

    let mut left = supply.to_vec();
    let mut need = demand.to_vec();
    let mut flow = vec![vec![0.0; m]; n];

    // Node layout: sources 0..n, sinks n..n+m.
    let total = n + m;
    let mut dist = vec![f64::INFINITY; total];
    let mut pred: Vec<Option<usize>> = vec![None; total];
    loop {
        let remaining: f64 = left.iter().sum();
        if remaining <= FLOW_EPS * n as f64 || need.iter().all(|&d| d <= FLOW_EPS) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        pred.iter_mut().for_each(|p| *p = None);
        for i in 0..n {
            if left[i] > FLOW_EPS {
                dist[i] = 0.0;
            }
        }
        // Bellman-Ford over the residual bipartite graph.
        for _ in 0..total {
            let mut changed = false;
            for i in 0..n {
                if dist[i].is_finite() {
                    for j in 0..m {
                        let d = dist[i] + cost[i][j];
                        if d < dist[n + j] - 1e-15 {
                            dist[n + j] = d;
                            pred[n + j] = Some(i);
                            changed = true;
                        }
                    }
                }
            }
            for j in 0..m {
                if dist[n + j].is_finite() {
                    for i in 0..n {
                        if flow[i][j] > FLOW_EPS {
                            let d = dist[n + j] - cost[i][j];
                            if d < dist[i] - 1e-15 {
                                dist[i] = d;
                                pred[i] = Some(n + j);
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let sink = (0..m)
            .filter(|&j| need[j] > FLOW_EPS && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]))
            .ok_or_else(|| Error::domain("no augmenting path; marginals inconsistent"))?;

        // Walk back to the originating source, collecting the bottleneck.
        let mut amount = need[sink];
        let mut node = n + sink;
        let mut path = Vec::new();
        while let Some(prev) = pred[node] {
            path.push((prev, node));
            if prev >= n {
                // backward edge sink(prev) -> source(node)
                amount = amount.min(flow[node][prev - n]);
            }
            node = prev;
            if path.len() > 2 * total {
                return Err(Error::domain("cycle in augmenting path"));
            }
        }
        let origin = node;
        amount = amount.min(left[origin]);
        if amount <= 0.0 {
            return Err(Error::domain("zero-capacity augmenting path"));
        }
        for &(from, to) in &path {
            if from < n {
                flow[from][to - n] += amount;
            } else {
                let f = &mut flow[to][from - n];
                *f -= amount;
                if *f < FLOW_EPS {
                    *f = 0.0;
                }
            }
        }
        left[origin] -= amount;
        need[sink] -= amount;
    }

    let cost_total = flow.iter().zip(cost).map(|(fr, cr)| fr.iter().zip(cr).map(|(f, c)| f * c).sum::<f64>()).sum();
    Ok(TransportSolution { cost: cost_total, plan: flow })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(atoms: &[(f64, f64)]) -> DiscreteDistribution {
        DiscreteDistribution::new(atoms.iter().map(|&(x, m)| (vec![x], m)).collect()).unwrap()
    }

    #[test]
    fn identity_is_zero_with_diagonal_plan() {
        let p = line(&[(0.0, 0.2), (1.0, 0.5), (4.0, 0.3)]);
        let sol = emd_discrete(&p, &p).unwrap();
        assert_eq!(sol.cost, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { p.masses()[i] } else { 0.0 };
                assert!((sol.plan[i][j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_atoms_and_split_mass() {
        let sol = emd_discrete(&line(&[(0.0, 1.0)]), &line(&[(3.0, 1.0)])).unwrap();
        assert_eq!(sol.cost, 3.0);
        let sol = emd_discrete(&line(&[(0.0, 0.5), (1.0, 0.5)]), &line(&[(0.0, 1.0)])).unwrap();
        assert!((sol.cost - 0.5).abs() < 1e-15);
        assert_eq!(sol.plan, vec![vec![0.5], vec![0.5]]);
    }

    #[test]
    fn mass_mismatch_rejected() {
        let err = transport(&[0.5, 0.5], &[0.7], &[vec![1.0], vec![2.0]]);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn marginals_reproduced() {
        let supply = [0.1, 0.4, 0.5];
        let demand = [0.3, 0.3, 0.2, 0.2];
        let cost = vec![vec![3.0, 1.0, 4.0, 1.5], vec![2.0, 6.0, 0.5, 3.0], vec![5.0, 2.5, 1.0, 0.0]];
        let sol = transport(&supply, &demand, &cost).unwrap();
        for (i, s) in supply.iter().enumerate() {
            assert!((sol.plan[i].iter().sum::<f64>() - s).abs() < 1e-12);
        }
        for (j, d) in demand.iter().enumerate() {
            assert!((sol.plan.iter().map(|r| r[j]).sum::<f64>() - d).abs() < 1e-12);
        }
    }
}
