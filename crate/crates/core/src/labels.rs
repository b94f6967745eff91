use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label of points that belong to no cluster.
pub const NOISE: i32 = -1;

/// A hard partition of `n` rows. Non-negative values are cluster ids in
/// `0..n_clusters`; [`NOISE`] marks unclustered rows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    labels: Vec<i32>,
    n_clusters: usize,
}

impl ClusterLabels {
    pub fn new(labels: Vec<i32>, n_clusters: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l < NOISE || l >= n_clusters as i32) {
            return Err(Error::InvalidParams(format!(
                "label {bad} outside [-1, {n_clusters})"
            )));
        }
        Ok(Self { labels, n_clusters })
    }

    /// Renumbers non-noise labels contiguously in order of first appearance.
    pub fn from_raw(raw: &[i32]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&l| {
                if l < 0 {
                    NOISE
                } else {
                    let next = map.len() as i32;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        Self {
            labels,
            n_clusters: map.len(),
        }
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Row indices carrying `label` (which may be [`NOISE`]).
    pub fn members(&self, label: i32) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// Sizes of clusters `0..n_clusters`.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Writes `row_index,label` lines with a header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_owned(),
            source,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        writeln!(out, "row_index,label").map_err(io_err)?;
        for (i, l) in self.labels.iter().enumerate() {
            writeln!(out, "{i},{l}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_raw_renumbers_by_first_appearance() {
        let l = ClusterLabels::from_raw(&[7, 7, -1, 3, 7, 9]);
        assert_eq!(l.labels(), &[0, 0, -1, 1, 0, 2]);
        assert_eq!(l.n_clusters(), 3);
        assert_eq!(l.noise_count(), 1);
        assert_eq!(l.cluster_sizes(), vec![3, 1, 1]);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(ClusterLabels::new(vec![0, 2], 2).is_err());
        assert!(ClusterLabels::new(vec![0, -2], 2).is_err());
        assert!(ClusterLabels::new(vec![0, -1, 1], 2).is_ok());
    }

    #[test]
    fn csv_export() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        ClusterLabels::new(vec![0, -1, 1], 2).unwrap().write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "row_index,label\n0,0\n1,-1\n2,1\n");
    }
}
