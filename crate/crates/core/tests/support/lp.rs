//! Dense two-phase tableau simplex with Bland's rule, used as a reference
//! solver for transportation problems.

#![allow(dead_code)]

use rand::Rng;

use cpps::quality::{Site, TransportInstance};

const EPS: f64 = 1e-11;

/// Minimizes `c . x` subject to `A x = b`, `x >= 0`. Requires `b >= 0`.
/// Returns `None` when infeasible or unbounded.
pub fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let rhs = n + m;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        assert!(b[i] >= 0.0);
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][rhs] = b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    run(&mut t, &mut basis, &phase1, n + m)?;
    let infeas: f64 = (0..m).filter(|&i| basis[i] >= n).map(|i| t[i][rhs]).sum();
    if infeas > 1e-9 {
        return None;
    }
    // Drive zero-level artificials out where possible; rows with no original
    // entries are redundant and stay inert.
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }

    let mut phase2 = c.to_vec();
    phase2.resize(n + m, 0.0);
    run(&mut t, &mut basis, &phase2, n)?;
    Some((0..m).map(|i| phase2[basis[i]] * t[i][rhs]).sum())
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    t[row].iter_mut().for_each(|v| *v /= p);
    let prow = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                r.iter_mut().zip(&prow).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    basis[row] = col;
}

/// Iterates until optimal; only columns below `enter_limit` may enter.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], enter_limit: usize) -> Option<()> {
    let m = t.len();
    let rhs = t.first().map_or(0, |r| r.len() - 1);
    loop {
        let entering = (0..enter_limit).find(|&j| {
            let reduced = cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
            reduced < -EPS
        });
        let Some(col) = entering else {
            return Some(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][col] > EPS {
                let ratio = t[i][rhs] / t[i][col];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        if ratio < best - EPS || (ratio <= best + EPS && basis[i] < basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
        }
        let (row, _) = leave?;
        pivot(t, basis, row, col);
    }
}

/// Transportation problem as an LP: one variable per supply/demand pair,
/// one row per supply and one per demand except the last (implied by balance).
pub fn transport_lp(inst: &TransportInstance) -> f64 {
    let ns = inst.supplies.len();
    let nd = inst.demands.len();
    if ns == 0 || nd == 0 {
        return 0.0;
    }
    let n = ns * nd;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, s) in inst.supplies.iter().enumerate() {
        let mut row = vec![0.0; n];
        row[i * nd..(i + 1) * nd].iter_mut().for_each(|v| *v = 1.0);
        a.push(row);
        b.push(s.mass);
    }
    for (j, d) in inst.demands.iter().enumerate().take(nd - 1) {
        let mut row = vec![0.0; n];
        (0..ns).for_each(|i| row[i * nd + j] = 1.0);
        a.push(row);
        b.push(d.mass);
    }
    let mut c = Vec::with_capacity(n);
    for s in &inst.supplies {
        for d in &inst.demands {
            let dx = s.col as f64 - d.col as f64;
            let dy = s.row as f64 - d.row as f64;
            c.push(inst.cell_size * (dx * dx + dy * dy).sqrt());
        }
    }
    simplex_min(&a, &b, &c).expect("balanced transport LP is feasible and bounded")
}

/// Random balanced instance on a grid of at most `max_side` x `max_side`
/// cells; every cell is a supply, a demand or empty.
pub fn random_instance<R: Rng>(rng: &mut R, max_side: usize) -> TransportInstance {
    loop {
        let w = rng.random_range(1..=max_side);
        let h = rng.random_range(1..=max_side);
        let mut supplies = Vec::new();
        let mut demands = Vec::new();
        for row in 0..h {
            for col in 0..w {
                let mass = rng.random_range(0.05..2.0);
                match rng.random_range(0..3) {
                    0 => supplies.push(Site { col, row, mass }),
                    1 => demands.push(Site { col, row, mass }),
                    _ => {}
                }
            }
        }
        if supplies.is_empty() || demands.is_empty() {
            continue;
        }
        let total_s: f64 = supplies.iter().map(|s| s.mass).sum();
        let total_d: f64 = demands.iter().map(|s| s.mass).sum();
        demands.iter_mut().for_each(|d| d.mass *= total_s / total_d);
        let cell_size = rng.random_range(0.5..3.0);
        return TransportInstance::new(supplies, demands, cell_size);
    }
}
