//! Comparing estimates against a known truth: adjusted Rand index and
//! optimal matching of subpopulation columns.

use std::collections::HashMap;

use ndarray::Array2;
use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index of two labelings of the same items. Two trivial
/// partitions that agree give 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return if index == expected { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// Assignment minimising the total cost; `result[r]` is the column matched
/// to row `r`. Needs `rows <= cols`. Costs are rounded to 1e-9.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let (r, c) = cost.dim();
    assert!(r <= c, "more rows than columns");
    if r == 0 {
        return Vec::new();
    }
    let m = Matrix::from_fn(r, c, |(i, j)| (cost[[i, j]] * 1e9).round() as i64);
    kuhn_munkres_min(&m).1
}

/// Matches estimated columns to true columns. The cost of a pair is the
/// Hamming distance between the `Z` columns, with the summed absolute weight
/// difference over samples as a tie-breaker. `w` arrays are `I x K`.
/// Returns `perm` with estimated column `perm[k]` matched to true column `k`.
pub fn match_columns(
    z_true: &Array2<bool>,
    w_true: &Array2<f64>,
    z_est: &Array2<bool>,
    w_est: &Array2<f64>,
) -> Vec<usize> {
    let kt = z_true.ncols();
    let ke = z_est.ncols();
    assert_eq!(z_true.nrows(), z_est.nrows());
    let cost = Array2::from_shape_fn((kt, ke), |(a, b)| {
        let ham = (0..z_true.nrows()).filter(|&j| z_true[[j, a]] != z_est[[j, b]]).count() as f64;
        let wd: f64 = (0..w_true.nrows()).map(|i| (w_true[[i, a]] - w_est[[i, b]]).abs()).sum();
        ham * 10.0 + wd
    });
    min_cost_assignment(&cost)
}

/// Hamming distance between the columns `cols` of `z_est` and the true
/// columns they are matched to.
pub fn matched_hamming(z_true: &Array2<bool>, z_est: &Array2<bool>, perm: &[usize], cols: &[usize]) -> usize {
    let mut d = 0;
    for (k, &e) in perm.iter().enumerate() {
        if cols.contains(&e) {
            d += (0..z_true.nrows()).filter(|&j| z_true[[j, k]] != z_est[[j, e]]).count();
        }
    }
    d
}

/// Whether the two binary matrices are equal up to a column permutation.
pub fn equal_up_to_permutation(a: &Array2<bool>, b: &Array2<bool>) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let mut ca: Vec<Vec<bool>> = a.columns().into_iter().map(|c| c.to_vec()).collect();
    let mut cb: Vec<Vec<bool>> = b.columns().into_iter().map(|c| c.to_vec()).collect();
    ca.sort();
    cb.sort();
    ca == cb
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ari_identical_and_relabelled() {
        let a = [0, 0, 1, 1, 2, 2];
        assert!((adjusted_rand_index(&a, &a) - 1.0).abs() < 1e-15);
        let b = [5, 5, 3, 3, 9, 9];
        assert!((adjusted_rand_index(&a, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ari_known_value() {
        // reference values from sklearn.metrics.adjusted_rand_score
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]);
        assert!((v - 0.5714285714285714).abs() < 1e-12);
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 1, 2, 0, 1, 2]);
        assert!((v + 0.36363636363636365).abs() < 1e-12);
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1, 2, 2], &[0, 0, 1, 1, 1, 2, 2, 2]);
        assert!((v - 0.23809523809523808).abs() < 1e-12);
    }

    #[test]
    fn assignment_finds_permutation() {
        let cost = array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let p = min_cost_assignment(&cost);
        let total: f64 = p.iter().enumerate().map(|(r, &c)| cost[[r, c]]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn columns_matched_after_shuffle() {
        let zt = array![[true, false, true], [false, true, true]];
        let wt = array![[0.2, 0.3, 0.5]];
        let ze = array![[true, true, false], [true, false, true]];
        let we = array![[0.5, 0.2, 0.3]];
        let perm = match_columns(&zt, &wt, &ze, &we);
        assert_eq!(perm, vec![1, 2, 0]);
        assert_eq!(matched_hamming(&zt, &ze, &perm, &[0, 1, 2]), 0);
        assert!(equal_up_to_permutation(&zt, &ze));
    }
}
