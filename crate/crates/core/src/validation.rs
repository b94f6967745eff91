//! Partition similarity (Rand, adjusted Rand, Jaccard) and bootstrap
//! cluster stability.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbscan::{dbscan, DbscanParams};
use crate::error::{Error, Result};
use crate::labels::{ClusterLabels, NOISE};
use crate::linalg::Matrix;
use crate::rng::RngStream;

#[inline]
fn choose2(m: u64) -> u64 {
    m * m.saturating_sub(1) / 2
}

/// Cross-tabulation of two labelings of the same rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    /// Distinct labels of the first and second labeling, ascending.
    pub row_labels: Vec<i32>,
    pub col_labels: Vec<i32>,
    /// Row-major `row_labels.len() × col_labels.len()` counts.
    pub cells: Vec<u64>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

fn dense_codes(labels: &[i32]) -> (Vec<i32>, Vec<usize>) {
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let index: HashMap<i32, usize> = distinct.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let codes = labels.iter().map(|l| index[l]).collect();
    (distinct, codes)
}

impl ContingencyTable {
    pub fn new(a: &[i32], b: &[i32]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch(a.len(), b.len()));
        }
        let (row_labels, ra) = dense_codes(a);
        let (col_labels, cb) = dense_codes(b);
        let cols = col_labels.len();
        let mut cells = vec![0u64; row_labels.len() * cols];
        let mut row_sums = vec![0u64; row_labels.len()];
        let mut col_sums = vec![0u64; cols];
        for (&i, &j) in ra.iter().zip(&cb) {
            cells[i * cols + j] += 1;
            row_sums[i] += 1;
            col_sums[j] += 1;
        }
        Ok(Self {
            row_labels,
            col_labels,
            cells,
            row_sums,
            col_sums,
            n: a.len() as u64,
        })
    }

    /// Pairs grouped together in both labelings, `Σ C(n_ij, 2)`.
    pub fn agree_same(&self) -> u64 {
        self.cells.iter().map(|&c| choose2(c)).sum()
    }

    pub fn row_pairs(&self) -> u64 {
        self.row_sums.iter().map(|&c| choose2(c)).sum()
    }

    pub fn col_pairs(&self) -> u64 {
        self.col_sums.iter().map(|&c| choose2(c)).sum()
    }

    pub fn total_pairs(&self) -> u64 {
        choose2(self.n)
    }

    /// Pairs separated in both labelings.
    pub fn agree_different(&self) -> u64 {
        self.total_pairs() + self.agree_same() - self.row_pairs() - self.col_pairs()
    }
}

fn table_for_index(a: &[i32], b: &[i32]) -> Result<ContingencyTable> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: a.len() });
    }
    ContingencyTable::new(a, b)
}

/// `(a + b) / C(n, 2)` from pair agreement counts.
pub fn rand_index(a: &[i32], b: &[i32]) -> Result<f64> {
    let t = table_for_index(a, b)?;
    Ok((t.agree_same() + t.agree_different()) as f64 / t.total_pairs() as f64)
}

/// Hubert–Arabie adjusted Rand index. A zero denominator yields 1 when the
/// two labelings induce the same partition and 0 otherwise.
pub fn adjusted_rand_index(a: &[i32], b: &[i32]) -> Result<f64> {
    let t = table_for_index(a, b)?;
    let index = t.agree_same() as f64;
    let (rows, cols) = (t.row_pairs() as f64, t.col_pairs() as f64);
    let expected = rows * cols / t.total_pairs() as f64;
    let max = 0.5 * (rows + cols);
    let denom = max - expected;
    if denom == 0.0 {
        let same = t.row_labels.len() == t.col_labels.len() && t.cells.iter().filter(|&&c| c > 0).count() == t.row_labels.len();
        return Ok(if same { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// `|a ∩ b| / |a ∪ b|` for index sets (duplicates ignored).
pub fn jaccard(a: &[usize], b: &[usize]) -> Result<f64> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    if a.is_empty() && b.is_empty() {
        return Err(Error::BothEmpty);
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(common as f64 / (a.len() + b.len() - common) as f64)
}

/// Something that can recluster a resample with fixed hyperparameters.
pub trait Reclusterer: Sync {
    fn recluster(&self, data: &Matrix) -> Result<ClusterLabels>;
}

impl Reclusterer for DbscanParams {
    fn recluster(&self, data: &Matrix) -> Result<ClusterLabels> {
        dbscan(data, self)
    }
}

impl<F> Reclusterer for F
where
    F: Fn(&Matrix) -> Result<ClusterLabels> + Sync,
{
    fn recluster(&self, data: &Matrix) -> Result<ClusterLabels> {
        self(data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStability {
    /// Reference label; [`NOISE`] for the noise set.
    pub label: i32,
    pub size: usize,
    pub mean_jaccard: f64,
    pub stable: bool,
    /// Bootstraps in which at least one member was drawn.
    pub present_in: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Clusters `0..n_clusters` in order, then the noise set if non-empty.
    pub clusters: Vec<ClusterStability>,
    pub bootstraps: usize,
    pub threshold: f64,
}

impl StabilityReport {
    pub fn cluster(&self, label: i32) -> Option<&ClusterStability> {
        self.clusters.iter().find(|c| c.label == label)
    }

    pub fn noise(&self) -> Option<&ClusterStability> {
        self.cluster(NOISE)
    }

    /// Stable clusters, noise excluded.
    pub fn n_stable(&self) -> usize {
        self.clusters.iter().filter(|c| c.label != NOISE && c.stable).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Best Jaccard match of every reference group within one bootstrap.
fn bootstrap_similarities(
    data: &Matrix,
    reference: &[i32],
    groups: &[i32],
    clusterer: &dyn Reclusterer,
    stream: &RngStream,
) -> Result<Vec<Option<f64>>> {
    let n = data.rows();
    let mut rng = stream.rng();
    let mut drawn = vec![false; n];
    for _ in 0..n {
        drawn[rng.random_range(0..n)] = true;
    }
    let present: Vec<usize> = (0..n).filter(|&i| drawn[i]).collect();
    let boot = clusterer.recluster(&data.select_rows(&present))?;

    let mut ref_size: HashMap<i32, usize> = HashMap::new();
    let mut boot_size: HashMap<i32, usize> = HashMap::new();
    let mut overlap: HashMap<(i32, i32), usize> = HashMap::new();
    for (&i, &bl) in present.iter().zip(boot.labels()) {
        let rl = reference[i];
        *ref_size.entry(rl).or_default() += 1;
        *boot_size.entry(bl).or_default() += 1;
        *overlap.entry((rl, bl)).or_default() += 1;
    }
    Ok(groups
        .iter()
        .map(|g| {
            let size = *ref_size.get(g)?;
            let best = boot_size
                .iter()
                .map(|(bl, &bs)| {
                    let common = overlap.get(&(*g, *bl)).copied().unwrap_or(0);
                    common as f64 / (size + bs - common) as f64
                })
                .fold(0.0, f64::max);
            Some(best)
        })
        .collect())
}

/// Bootstrap stability of each reference cluster (and of the noise set).
///
/// Each of the `bootstraps` resamples draws `n` indices with replacement from
/// sub-stream `("boot", b)`; the distinct drawn rows are reclustered and every
/// reference group is scored by its best Jaccard match among the resample's
/// groups, both restricted to the drawn rows. A group is stable when its mean
/// over the bootstraps in which it appears exceeds `threshold`.
pub fn assess_stability(
    data: &Matrix,
    reference: &ClusterLabels,
    clusterer: &dyn Reclusterer,
    bootstraps: usize,
    threshold: f64,
    stream: &RngStream,
) -> Result<StabilityReport> {
    if bootstraps == 0 {
        return Err(Error::InvalidB);
    }
    if reference.len() != data.rows() {
        return Err(Error::LengthMismatch(reference.len(), data.rows()));
    }
    let mut groups: Vec<i32> = (0..reference.n_clusters() as i32).collect();
    if reference.noise_count() > 0 {
        groups.push(NOISE);
    }
    if reference.n_clusters() == 0 {
        return Err(Error::InvalidParams("reference has no clusters".into()));
    }

    let per_boot: Vec<Vec<Option<f64>>> = (0..bootstraps)
        .into_par_iter()
        .map(|b| {
            bootstrap_similarities(
                data,
                reference.labels(),
                &groups,
                clusterer,
                &stream.child("boot", b as u64),
            )
        })
        .collect::<Result<_>>()?;

    let sizes = reference.cluster_sizes();
    let clusters = groups
        .iter()
        .enumerate()
        .map(|(g, &label)| {
            let seen: Vec<f64> = per_boot.iter().filter_map(|row| row[g]).collect();
            let mean_jaccard = if seen.is_empty() {
                0.0
            } else {
                seen.iter().sum::<f64>() / seen.len() as f64
            };
            ClusterStability {
                label,
                size: if label == NOISE {
                    reference.noise_count()
                } else {
                    sizes[label as usize]
                },
                mean_jaccard,
                stable: mean_jaccard > threshold,
                present_in: seen.len(),
            }
        })
        .collect();
    Ok(StabilityReport {
        clusters,
        bootstraps,
        threshold,
    })
}

/// Keeps only stable clusters: members of unstable clusters become noise and
/// the survivors are renumbered contiguously in their original order.
pub fn stable_subset_labels(reference: &ClusterLabels, report: &StabilityReport) -> ClusterLabels {
    let mut remap = vec![NOISE; reference.n_clusters()];
    let mut next = 0;
    for (c, slot) in remap.iter_mut().enumerate() {
        if report.cluster(c as i32).is_some_and(|s| s.stable) {
            *slot = next;
            next += 1;
        }
    }
    let labels = reference
        .labels()
        .iter()
        .map(|&l| if l < 0 { NOISE } else { remap[l as usize] })
        .collect();
    ClusterLabels::new(labels, next as usize).expect("remapped labels are in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_pairs(a: &[i32], b: &[i32]) -> (u64, u64, u64, u64) {
        // (same in both, different in both, same in a, same in b)
        let (mut same, mut diff, mut sa, mut sb) = (0, 0, 0, 0);
        for i in 0..a.len() {
            for j in (i + 1)..a.len() {
                let (x, y) = (a[i] == a[j], b[i] == b[j]);
                same += u64::from(x && y);
                diff += u64::from(!x && !y);
                sa += u64::from(x);
                sb += u64::from(y);
            }
        }
        (same, diff, sa, sb)
    }

    #[test]
    fn identical_labelings() {
        let a = [0, 0, 1, 1, 2];
        assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn crossed_halves() {
        let (a, b) = ([0, 0, 1, 1], [0, 1, 0, 1]);
        let (same, diff, ..) = brute_pairs(&a, &b);
        assert_eq!((same, diff), (0, 2));
        assert!((rand_index(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // Index 0, Expected 2·2/6 = 2/3, Max 2
        assert!((adjusted_rand_index(&a, &b).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn against_single_cluster() {
        let a = [0, 0, 0, 1, 1, 2];
        let one = [5; 6];
        let t = ContingencyTable::new(&a, &one).unwrap();
        assert_eq!(t.agree_same(), 3 + 1);
        assert_eq!(t.agree_different(), 0);
        assert_eq!(adjusted_rand_index(&a, &one).unwrap(), 0.0);
    }

    #[test]
    fn permuted_labels_score_one() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1, 2, -1], &[7, 7, 3, 3, -1, 0]).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_denominator() {
        assert_eq!(adjusted_rand_index(&[1, 1, 1], &[0, 0, 0]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 1, 2], &[2, 0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn index_errors() {
        assert!(matches!(rand_index(&[0, 1], &[0]), Err(Error::LengthMismatch(2, 1))));
        assert!(matches!(adjusted_rand_index(&[0], &[0]), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard(&[1, 2, 3], &[3, 2, 1]).unwrap(), 1.0);
        assert_eq!(jaccard(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert!((jaccard(&[1, 2], &[2, 3]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&[], &[1]).unwrap(), 0.0);
        assert!(matches!(jaccard(&[], &[]), Err(Error::BothEmpty)));
    }

    #[test]
    fn stable_subset_relabels() {
        let reference = ClusterLabels::new(vec![0, 0, 1, 1, 2, -1], 3).unwrap();
        let report = |flags: [bool; 3]| StabilityReport {
            clusters: flags
                .iter()
                .enumerate()
                .map(|(c, &stable)| ClusterStability {
                    label: c as i32,
                    size: 2,
                    mean_jaccard: if stable { 0.9 } else { 0.2 },
                    stable,
                    present_in: 1,
                })
                .collect(),
            bootstraps: 1,
            threshold: 0.7,
        };
        let all = stable_subset_labels(&reference, &report([true; 3]));
        assert_eq!(all, reference);
        let none = stable_subset_labels(&reference, &report([false; 3]));
        assert_eq!(none.labels(), &[-1; 6]);
        assert_eq!(none.n_clusters(), 0);
        let middle = stable_subset_labels(&reference, &report([false, true, true]));
        assert_eq!(middle.labels(), &[-1, -1, 0, 0, 1, -1]);
    }

    #[test]
    fn zero_bootstraps_rejected() {
        let data = Matrix::zeros(4, 1);
        let labels = ClusterLabels::new(vec![0; 4], 1).unwrap();
        let params = DbscanParams::new(1.0, 2).unwrap();
        assert!(matches!(
            assess_stability(&data, &labels, &params, 0, 0.7, &RngStream::new(1)),
            Err(Error::InvalidB)
        ));
    }

    #[test]
    fn stability_report_json() {
        let r = StabilityReport {
            clusters: vec![ClusterStability {
                label: -1,
                size: 3,
                mean_jaccard: 0.25,
                stable: false,
                present_in: 50,
            }],
            bootstraps: 50,
            threshold: 0.7,
        };
        let back: StabilityReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
