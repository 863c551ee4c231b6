//! Partition agreement: Hungarian-matched accuracy and adjusted Rand index.

use crate::{Error, Result};

/// Dense re-indexing of arbitrary labels, in order of first appearance.
fn compress(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = Vec::new();
    let ids = labels
        .iter()
        .map(|l| match seen.iter().position(|s| s == l) {
            Some(i) => i,
            None => {
                seen.push(*l);
                seen.len() - 1
            }
        })
        .collect();
    (ids, seen.len())
}

fn contingency(pred: &[usize], truth: &[usize]) -> Result<Vec<Vec<usize>>> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::input("empty labelings"));
    }
    let (p, kp) = compress(pred);
    let (t, kt) = compress(truth);
    let mut table = vec![vec![0usize; kt]; kp];
    for (a, b) in p.iter().zip(&t) {
        table[*a][*b] += 1;
    }
    Ok(table)
}

/// Minimum-cost perfect assignment on a square matrix; returns the column
/// assigned to each row. Potentials-based Hungarian method, `O(n³)`.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut owner = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = inf;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

/// Largest fraction of points on which `pred` agrees with `truth` under an
/// injective mapping of predicted clusters to true classes. Clusters left
/// without a class count as errors.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let size = table.len().max(table[0].len());
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| -(table.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0) as f64))
                .collect()
        })
        .collect();
    let assignment = hungarian_min(&cost);
    let matched: usize = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| table.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0))
        .sum();
    Ok(matched as f64 / pred.len() as f64)
}

fn pairs(k: usize) -> f64 {
    (k * k.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index (Hubert and Arabie) from the contingency table.
/// Returns 1 for the degenerate cases where both partitions are the same
/// trivial partition (one cluster, or all singletons) or fewer than two
/// points are given.
pub fn adjusted_rand_index(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len();
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let b: f64 = (0..table[0].len())
        .map(|j| pairs(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = pairs(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(clustering_accuracy(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[2, 0, 1, 0], &[0, 1, 2, 1]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.5);
        // more clusters than classes: the extra cluster cannot be matched
        assert_eq!(clustering_accuracy(&[0, 1, 2, 2], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(clustering_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[5, 5, 5, 5], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0], &[3]).unwrap(), 1.0);
    }

    #[test]
    fn hungarian_on_known_matrix() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian_min(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }
}
