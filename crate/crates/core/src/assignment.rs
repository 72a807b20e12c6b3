//! Maximum-weight bipartite matching via the Hungarian method.
//!
//! Weights must be non-negative, so a maximum-weight matching is the same as
//! a maximum-weight perfect matching on the zero-padded square matrix.

/// Result of [`max_weight_matching`].
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub value: f64,
    /// `row_to_col[r]` is the column matched to row `r`, if the edge has
    /// positive weight.
    pub row_to_col: Vec<Option<usize>>,
}

/// `weights[r][c]` for `rows x cols`; every row must have the same length.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Assignment {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Assignment {
            value: 0.0,
            row_to_col: vec![None; rows],
        };
    }
    let cost = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            -weights[r][c]
        } else {
            0.0
        }
    };

    // Potentials u (rows), v (cols); p[c] = row assigned to column c, 1-based
    // with 0 as the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for r in 1..=n {
        p[0] = r;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
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
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![None; rows];
    let mut value = 0.0;
    for c in 1..=n {
        let r = p[c];
        if r >= 1 && r <= rows && c <= cols && weights[r - 1][c - 1] > 0.0 {
            row_to_col[r - 1] = Some(c - 1);
            value += weights[r - 1][c - 1];
        }
    }
    Assignment { value, row_to_col }
}
