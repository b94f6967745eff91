//! Density-based clustering (DBSCAN) with Euclidean distance.
//!
//! A point is *core* when its closed `eps`-ball holds at least `min_points`
//! points, itself included. Clusters are the maximal density-connected sets;
//! non-core points reachable from a core point join that core's cluster (the
//! first cluster to claim them in scan order) and everything else is noise.
//!
//! `eps` can be picked automatically from the sorted k-th nearest neighbour
//! distance curve by taking the point furthest from the chord joining the
//! curve's endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClusterLabels, NOISE};
use crate::linalg::{euclidean, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_points: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_points: usize) -> Result<Self> {
        let p = Self { eps, min_points };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidParams(format!("eps must be positive, got {}", self.eps)));
        }
        if self.min_points == 0 {
            return Err(Error::InvalidParams("min_points must be at least 1".into()));
        }
        Ok(())
    }

    /// The conventional `d + 1`.
    pub fn default_min_points(d: usize) -> usize {
        d + 1
    }
}

/// Every index within `eps` of `point_index`, the point itself included.
pub fn eps_neighborhood(data: &Matrix, point_index: usize, eps: f64) -> Result<Vec<usize>> {
    if point_index >= data.rows() {
        return Err(Error::IndexOutOfRange {
            index: point_index,
            len: data.rows(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
    }
    let p = data.row(point_index);
    Ok((0..data.rows())
        .filter(|&q| euclidean(p, data.row(q)) <= eps)
        .collect())
}

fn all_neighborhoods(data: &Matrix, eps: f64) -> Vec<Vec<usize>> {
    let n = data.rows();
    let mut hoods: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for i in 0..n {
        let p = data.row(i);
        for j in (i + 1)..n {
            if euclidean(p, data.row(j)) <= eps {
                hoods[i].push(j);
                hoods[j].push(i);
            }
        }
    }
    for h in &mut hoods {
        h.sort_unstable();
    }
    hoods
}

/// Core-point flags for the given parameters.
pub fn core_points(data: &Matrix, params: &DbscanParams) -> Result<Vec<bool>> {
    params.validate()?;
    Ok(all_neighborhoods(data, params.eps)
        .iter()
        .map(|h| h.len() >= params.min_points)
        .collect())
}

/// DBSCAN scanning seeds in ascending index order.
pub fn dbscan(data: &Matrix, params: &DbscanParams) -> Result<ClusterLabels> {
    let order: Vec<usize> = (0..data.rows()).collect();
    dbscan_in_order(data, params, &order)
}

/// DBSCAN scanning seeds in the given order, which must be a permutation of
/// `0..n`. Only border-point ownership and cluster numbering depend on it.
pub fn dbscan_in_order(data: &Matrix, params: &DbscanParams, order: &[usize]) -> Result<ClusterLabels> {
    params.validate()?;
    let n = data.rows();
    if order.len() != n {
        return Err(Error::LengthMismatch(order.len(), n));
    }
    const UNCLASSIFIED: i32 = -2;

    let hoods = all_neighborhoods(data, params.eps);
    let core: Vec<bool> = hoods.iter().map(|h| h.len() >= params.min_points).collect();
    let mut labels = vec![UNCLASSIFIED; n];
    let mut cluster = 0i32;
    let mut queue = Vec::new();

    for &p in order {
        if labels[p] != UNCLASSIFIED {
            continue;
        }
        if !core[p] {
            labels[p] = NOISE;
            continue;
        }
        labels[p] = cluster;
        queue.clear();
        queue.extend_from_slice(&hoods[p]);
        while let Some(q) = queue.pop() {
            match labels[q] {
                NOISE => labels[q] = cluster,
                UNCLASSIFIED => {
                    labels[q] = cluster;
                    if core[q] {
                        queue.extend_from_slice(&hoods[q]);
                    }
                }
                _ => {}
            }
        }
        cluster += 1;
    }
    ClusterLabels::new(labels, cluster as usize)
}

/// For each point, the distance to its `k`-th nearest other point, sorted ascending.
pub fn kth_nn_distances(data: &Matrix, k: usize) -> Result<Vec<f64>> {
    let n = data.rows();
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    if k >= n {
        return Err(Error::TooFewPoints { needed: k + 1, got: n });
    }
    let mut dist = vec![0.0; n - 1];
    let mut curve: Vec<f64> = (0..n)
        .map(|i| {
            let p = data.row(i);
            let mut t = 0;
            for j in (0..n).filter(|&j| j != i) {
                dist[t] = euclidean(p, data.row(j));
                t += 1;
            }
            *dist.select_nth_unstable_by(k - 1, f64::total_cmp).1
        })
        .collect();
    curve.sort_by(f64::total_cmp);
    Ok(curve)
}

/// Elbow of an ascending curve: the interior value furthest from the chord
/// between its first and last points. A zero elbow falls back to the smallest
/// positive value.
pub fn choose_eps(curve: &[f64]) -> Result<f64> {
    let n = curve.len();
    if n < 3 {
        return Err(Error::CurveTooShort(n));
    }
    let (x0, y0) = (0.0, curve[0]);
    let (x1, y1) = ((n - 1) as f64, curve[n - 1]);
    // line through the endpoints: a x + b y + c = 0
    let (a, b) = (y1 - y0, x0 - x1);
    let c = -(a * x0 + b * y0);
    let norm = (a * a + b * b).sqrt();
    let mut best = 1;
    let mut best_dist = f64::NEG_INFINITY;
    for (i, &y) in curve.iter().enumerate().take(n - 1).skip(1) {
        let dist = (a * i as f64 + b * y + c).abs() / norm;
        if dist > best_dist {
            best_dist = dist;
            best = i;
        }
    }
    let eps = curve[best];
    if eps > 0.0 {
        return Ok(eps);
    }
    curve
        .iter()
        .copied()
        .find(|&v| v > 0.0)
        .ok_or_else(|| Error::InvalidParams("k-distance curve has no positive value".into()))
}

/// DBSCAN with `eps` chosen from the `min_points`-th nearest neighbour curve.
pub fn fit_auto(data: &Matrix, min_points: usize) -> Result<(DbscanParams, ClusterLabels)> {
    if data.rows() <= min_points {
        return Err(Error::TooFewPoints {
            needed: min_points + 1,
            got: data.rows(),
        });
    }
    let eps = choose_eps(&kth_nn_distances(data, min_points)?)?;
    let params = DbscanParams::new(eps, min_points)?;
    let labels = dbscan(data, &params)?;
    Ok((params, labels))
}
