//! Reference implementations shared by the property and acceptance suites.
#![allow(dead_code)]

use cnlab::{Matrix, NOISE};
use rand::Rng;

/// Pair counts by direct enumeration: (together in both, apart in both,
/// together only in a, together only in b).
pub fn pair_counts(a: &[i32], b: &[i32]) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => c.0 += 1,
                (false, false) => c.1 += 1,
                (true, false) => c.2 += 1,
                (false, true) => c.3 += 1,
            }
        }
    }
    c
}

/// ARI in its pair-count form, `2(ad − bc) / ((a+b)(b+d) + (a+c)(c+d))`.
pub fn oracle_ari(a: &[i32], b: &[i32]) -> f64 {
    let (ss, dd, sd, ds) = pair_counts(a, b);
    let (ss, dd, sd, ds) = (ss as f64, dd as f64, sd as f64, ds as f64);
    let denom = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if denom == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    2.0 * (ss * dd - sd * ds) / denom
}

/// Every labelling of `n` points with labels in `0..k`, one per set
/// partition (restricted growth strings).
pub fn partitions(n: usize, k: i32) -> Vec<Vec<i32>> {
    fn grow(prefix: &mut Vec<i32>, n: usize, k: i32, out: &mut Vec<Vec<i32>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let top = prefix.iter().copied().max().map_or(0, |m| m + 1).min(k - 1);
        for label in 0..=top {
            prefix.push(label);
            grow(prefix, n, k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), n, k, &mut out);
    out
}

/// Reference DBSCAN: core points from explicit neighbour counts, clusters as
/// connected components of the core adjacency graph, border points attached
/// to the first cluster (in component order) holding a core neighbour.
pub fn dbscan_oracle(points: &[Vec<f64>], eps: f64, min_points: usize) -> (Vec<bool>, Vec<i32>) {
    let n = points.len();
    let dist = |i: usize, j: usize| -> f64 {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let near = |i: usize, j: usize| dist(i, j) <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_points).collect();

    // transitive closure over core-core adjacency (Floyd–Warshall on booleans)
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = core[i] && core[j] && near(i, j);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }

    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for seed in 0..n {
        if !core[seed] || labels[seed] != NOISE {
            continue;
        }
        // members: cores connected to the seed, then unclaimed borders near any of them
        let cores: Vec<usize> = (0..n).filter(|&j| j == seed || reach[seed][j]).collect();
        for &c in &cores {
            labels[c] = next;
        }
        for j in 0..n {
            if !core[j] && labels[j] == NOISE && cores.iter().any(|&c| near(c, j)) {
                labels[j] = next;
            }
        }
        next += 1;
    }
    (core, labels)
}

pub fn random_instance<R: Rng>(rng: &mut R) -> (Vec<Vec<f64>>, f64, usize) {
    let n = rng.random_range(0..=12);
    let d = rng.random_range(1..=3);
    // a coarse grid makes exact-distance ties and duplicates common
    let points = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(0..6) as f64 * 0.5).collect())
        .collect();
    let eps = rng.random_range(1..=5) as f64 * 0.5;
    let min_points = rng.random_range(1..=5);
    (points, eps, min_points)
}

pub fn matrix(points: &[Vec<f64>]) -> Matrix {
    if points.is_empty() {
        Matrix::zeros(0, 1)
    } else {
        Matrix::from_rows(points).unwrap()
    }
}

