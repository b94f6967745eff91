mod common;

use cnlab::dbscan::{core_points, dbscan, dbscan_in_order, DbscanParams};
use cnlab::{RngStream, NOISE};
use common::{dbscan_oracle, matrix, random_instance};

#[test]
fn matches_transitive_closure_oracle_on_500_instances() {
    let mut rng = RngStream::new(2024).child("dbscan-oracle", 0).rng();
    for case in 0..500 {
        let (points, eps, min_points) = random_instance(&mut rng);
        let data = matrix(&points);
        let params = DbscanParams::new(eps, min_points).unwrap();
        let (core, expected) = dbscan_oracle(&points, eps, min_points);
        let got = dbscan(&data, &params).unwrap();
        assert_eq!(got.labels(), &expected[..], "case {case}: {points:?} eps={eps} m={min_points}");
        assert_eq!(core_points(&data, &params).unwrap(), core, "case {case}");
        let clusters = expected.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        assert_eq!(got.n_clusters(), clusters);
    }
}

#[test]
fn core_partition_is_independent_of_scan_order() {
    let mut rng = RngStream::new(7).child("scan-order", 0).rng();
    for case in 0..300 {
        let (points, eps, min_points) = random_instance(&mut rng);
        let data = matrix(&points);
        let params = DbscanParams::new(eps, min_points).unwrap();
        let n = points.len();
        let forward = dbscan(&data, &params).unwrap();
        let reversed: Vec<usize> = (0..n).rev().collect();
        let backward = dbscan_in_order(&data, &params, &reversed).unwrap();
        let core = core_points(&data, &params).unwrap();
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] {
                    assert_eq!(
                        forward.labels()[i] == forward.labels()[j],
                        backward.labels()[i] == backward.labels()[j],
                        "case {case}"
                    );
                }
            }
            if core[i] {
                assert_ne!(forward.labels()[i], NOISE);
            }
            // noise is noise in any order: it has no core neighbour at all
            assert_eq!(forward.labels()[i] == NOISE, backward.labels()[i] == NOISE, "case {case}");
        }
        assert_eq!(forward.n_clusters(), backward.n_clusters());
    }
}

#[test]
fn every_cluster_holds_a_core_point() {
    let mut rng = RngStream::new(8).child("core-present", 0).rng();
    for _ in 0..200 {
        let (points, eps, min_points) = random_instance(&mut rng);
        let data = matrix(&points);
        let params = DbscanParams::new(eps, min_points).unwrap();
        let labels = dbscan(&data, &params).unwrap();
        let core = core_points(&data, &params).unwrap();
        for c in 0..labels.n_clusters() as i32 {
            let members = labels.members(c);
            assert!(members.iter().any(|&i| core[i]));
        }
    }
}
