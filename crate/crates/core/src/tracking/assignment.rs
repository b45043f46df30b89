//! Gated minimum-cost bipartite assignment (Hungarian method).

use crate::ingest::BBox;

/// Intersection over union of two boxes. Degenerate boxes give 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a.w <= 0.0 || a.h <= 0.0 || b.w <= 0.0 || b.h <= 0.0 {
        return 0.0;
    }
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Minimum-cost assignment of rows to columns; pairs whose cost exceeds
/// `gate` are rejected into the unmatched sets.
///
/// Gated entries are replaced by a penalty larger than any sum of feasible
/// costs, so the solver first maximises the number of feasible pairs and
/// then minimises their total cost. Rows and columns are scanned in index
/// order with strict comparisons, which makes the result deterministic.
pub fn assign(costs: &[Vec<f64>], gate: f64) -> Assignment {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Assignment {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        };
    }
    debug_assert!(costs.iter().all(|r| r.len() == cols));

    let max_feasible = costs
        .iter()
        .flatten()
        .filter(|&&c| c <= gate)
        .fold(0.0_f64, |m, &c| m.max(c.abs()));
    let penalty = (max_feasible + 1.0) * (rows.max(cols) as f64 + 1.0);
    let cost = |r: usize, c: usize| {
        let v = costs[r][c];
        if v <= gate {
            v
        } else {
            penalty
        }
    };

    let pairs: Vec<(usize, usize)> = if rows <= cols {
        hungarian(rows, cols, cost)
    } else {
        hungarian(cols, rows, |r, c| cost(c, r))
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect()
    };

    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut matches: Vec<(usize, usize)> = pairs
        .into_iter()
        .filter(|&(r, c)| costs[r][c] <= gate)
        .collect();
    matches.sort_unstable();
    for &(r, c) in &matches {
        row_used[r] = true;
        col_used[c] = true;
    }
    Assignment {
        matches,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Shortest augmenting path Hungarian algorithm with potentials, for
/// `n <= m`. Returns one column per row.
fn hungarian(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    // 1-based indices; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect()
}
