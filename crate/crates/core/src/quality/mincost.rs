//! Exact earth mover's distance by successive shortest augmenting paths.
//!
//! The bipartite supply/demand graph is kept implicit and dense: every supply
//! connects to every demand at its ground distance, and a reverse arc exists
//! wherever flow has been shipped. Dijkstra runs on reduced costs with node
//! potentials (Johnson), which stay valid because all initial costs are
//! non-negative. Each augmentation saturates a supply, a demand, or a reverse
//! arc, so the number of rounds is bounded by the number of basic arcs.

use super::{QualityError, TransportInstance};

/// Optimal transport plan and its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// Dense `supplies x demands` flow matrix, row-major.
    pub flow: Vec<f64>,
    pub cost: f64,
    pub augmentations: usize,
}

impl TransportPlan {
    pub fn shipped_from(&self, supply: usize, demands: usize) -> f64 {
        self.flow[supply * demands..(supply + 1) * demands].iter().sum()
    }

    pub fn shipped_to(&self, demand: usize, demands: usize) -> f64 {
        self.flow.iter().skip(demand).step_by(demands).sum()
    }
}

/// Minimum total work `sum flow(i, j) * distance(i, j)` to turn the supplies
/// into the demands.
pub fn emd_exact(inst: &TransportInstance) -> Result<f64, QualityError> {
    solve_transport(inst).map(|p| p.cost)
}

pub fn solve_transport(inst: &TransportInstance) -> Result<TransportPlan, QualityError> {
    inst.validate()?;
    let ns = inst.supplies.len();
    let nd = inst.demands.len();
    if ns == 0 || nd == 0 {
        return Ok(TransportPlan {
            flow: vec![0.0; ns * nd],
            cost: 0.0,
            augmentations: 0,
        });
    }

    let cost: Vec<f64> = inst
        .supplies
        .iter()
        .flat_map(|s| inst.demands.iter().map(move |d| inst.distance(s, d)))
        .collect();
    let mut flow = vec![0.0; ns * nd];
    let mut rem_supply: Vec<f64> = inst.supplies.iter().map(|s| s.mass).collect();
    let mut rem_demand: Vec<f64> = inst.demands.iter().map(|d| d.mass).collect();
    let total = inst.total_supply();
    // Remaining mass below this is rounding residue of the balance check.
    let residue = 1e-13 * total;

    // Node layout: 0 = source, 1..=ns supplies, ns+1..=ns+nd demands, sink.
    let n = ns + nd + 2;
    let sink = n - 1;
    let sup = |i: usize| 1 + i;
    let dem = |j: usize| 1 + ns + j;
    let mut potential = vec![0.0f64; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut parent = vec![usize::MAX; n];
    let mut augmentations = 0;

    loop {
        if rem_supply.iter().sum::<f64>() <= residue {
            break;
        }
        dist.fill(f64::INFINITY);
        done.fill(false);
        parent.fill(usize::MAX);
        dist[0] = 0.0;

        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (v, &d) in dist.iter().enumerate() {
                if !done[v] && d < best {
                    best = d;
                    u = v;
                }
            }
            if u == usize::MAX || u == sink {
                break;
            }
            done[u] = true;
            let du = dist[u];
            let relax = |v: usize, arc_cost: f64, dist: &mut Vec<f64>, parent: &mut Vec<usize>| {
                let reduced = (arc_cost + potential[u] - potential[v]).max(0.0);
                let cand = du + reduced;
                if cand < dist[v] {
                    dist[v] = cand;
                    parent[v] = u;
                }
            };
            if u == 0 {
                for i in 0..ns {
                    if rem_supply[i] > residue && !done[sup(i)] {
                        relax(sup(i), 0.0, &mut dist, &mut parent);
                    }
                }
            } else if u <= ns {
                let i = u - 1;
                for j in 0..nd {
                    if !done[dem(j)] {
                        relax(dem(j), cost[i * nd + j], &mut dist, &mut parent);
                    }
                }
            } else {
                let j = u - 1 - ns;
                for i in 0..ns {
                    if flow[i * nd + j] > 0.0 && !done[sup(i)] {
                        relax(sup(i), -cost[i * nd + j], &mut dist, &mut parent);
                    }
                }
                if rem_demand[j] > residue {
                    relax(sink, 0.0, &mut dist, &mut parent);
                }
            }
        }

        if !dist[sink].is_finite() {
            break;
        }
        let reach = dist[sink];
        for v in 0..n {
            potential[v] += dist[v].min(reach);
        }

        // Walk back sink -> source: sink <- demand (<- supply <- demand)* <- supply <- source.
        let last_demand = parent[sink] - 1 - ns;
        let mut bottleneck = rem_demand[last_demand];
        let mut v = parent[sink];
        let first_supply;
        loop {
            let s = parent[v];
            let i = s - 1;
            let p = parent[s];
            if p == 0 {
                first_supply = i;
                bottleneck = bottleneck.min(rem_supply[i]);
                break;
            }
            let j = p - 1 - ns;
            bottleneck = bottleneck.min(flow[i * nd + j]);
            v = p;
        }

        rem_demand[last_demand] -= bottleneck;
        rem_supply[first_supply] -= bottleneck;
        let mut v = parent[sink];
        loop {
            let j = v - 1 - ns;
            let s = parent[v];
            let i = s - 1;
            flow[i * nd + j] += bottleneck;
            let p = parent[s];
            if p == 0 {
                break;
            }
            let jj = p - 1 - ns;
            let f = &mut flow[i * nd + jj];
            *f -= bottleneck;
            if *f < 0.0 {
                *f = 0.0;
            }
            v = p;
        }
        augmentations += 1;
    }

    let cost = flow.iter().zip(&cost).map(|(f, c)| f * c).sum();
    Ok(TransportPlan {
        flow,
        cost,
        augmentations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::Site;

    fn site(col: usize, row: usize, mass: f64) -> Site {
        Site { col, row, mass }
    }

    #[test]
    fn single_arc() {
        let inst = TransportInstance::new(vec![site(0, 0, 1.0)], vec![site(1, 0, 1.0)], 1.0);
        assert_eq!(emd_exact(&inst).unwrap(), 1.0);
    }

    #[test]
    fn split_to_two_neighbors() {
        let inst = TransportInstance::new(vec![site(0, 0, 1.0)], vec![site(1, 0, 0.5), site(0, 1, 0.5)], 1.0);
        assert!((emd_exact(&inst).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn crossing_assignment_is_uncrossed() {
        // shipping inward-out costs 1 + 1; the crossed assignment costs 2 + 2
        let inst = TransportInstance::new(
            vec![site(1, 0, 1.0), site(2, 0, 1.0)],
            vec![site(0, 0, 1.0), site(3, 0, 1.0)],
            1.0,
        );
        assert!((emd_exact(&inst).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reverse_arc_needed() {
        // 2 -> 1 is as short as 0 -> 1; only 0 -> 1, 2 -> 3 is optimal
        let inst = TransportInstance::new(
            vec![site(0, 0, 1.0), site(2, 0, 1.0)],
            vec![site(1, 0, 1.0), site(3, 0, 1.0)],
            1.0,
        );
        let plan = solve_transport(&inst).unwrap();
        assert!((plan.cost - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cost_scales_with_cell_size() {
        let sup = vec![site(0, 0, 0.7), site(3, 1, 0.3)];
        let dem = vec![site(2, 2, 0.4), site(1, 4, 0.6)];
        let a = emd_exact(&TransportInstance::new(sup.clone(), dem.clone(), 1.0)).unwrap();
        let b = emd_exact(&TransportInstance::new(sup, dem, 2.5)).unwrap();
        assert!((b - 2.5 * a).abs() < 1e-12);
    }

    #[test]
    fn identical_layouts_cost_nothing() {
        let sites = vec![site(0, 0, 0.2), site(4, 1, 0.5), site(2, 3, 0.3)];
        let inst = TransportInstance::new(sites.clone(), sites, 1.0);
        assert_eq!(emd_exact(&inst).unwrap(), 0.0);
    }

    #[test]
    fn unbalanced_rejected() {
        let inst = TransportInstance::new(vec![site(0, 0, 1.0)], vec![site(1, 0, 1.5)], 1.0);
        assert!(matches!(emd_exact(&inst), Err(QualityError::Unbalanced { .. })));
    }

    #[test]
    fn empty_instance_is_zero() {
        assert_eq!(
            emd_exact(&TransportInstance::new(vec![], vec![], 1.0)).unwrap(),
            0.0
        );
    }
}
