mod common;

use common::*;
use srdl::metrics::{cmc, mean_average_precision, RetrievalSet};

#[test]
fn matches_brute_force_on_random_instances() {
    let mut r = rng(99);
    for _ in 0..50 {
        let (dim, probe, pids, gallery, gids) = random_retrieval(&mut r);
        let (first, aps) = brute_force_retrieval(dim, &probe, &pids, &gallery, &gids);
        let set = RetrievalSet::new(dim, probe, pids, gallery, gids).unwrap();
        let ranks: Vec<usize> = (1..=50).collect();
        let curve = cmc(&set, &ranks, false).unwrap();
        for (k, got) in ranks.iter().zip(&curve) {
            let want = first.iter().filter(|&&f| f <= *k).count() as f64 / first.len() as f64;
            assert!((got - want).abs() < 1e-9, "rank {k}: {got} vs {want}");
        }
        let map = mean_average_precision(&set, false).unwrap();
        let want = aps.iter().sum::<f64>() / aps.len() as f64;
        assert!((map - want).abs() < 1e-9, "{map} vs {want}");
    }
}

#[test]
fn cmc_is_monotone_and_reaches_one() {
    let mut r = rng(5);
    for _ in 0..20 {
        let (dim, probe, pids, gallery, gids) = random_retrieval(&mut r);
        let set = RetrievalSet::new(dim, probe, pids, gallery, gids).unwrap();
        let curve = cmc(&set, &(1..=50).collect::<Vec<_>>(), false).unwrap();
        assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*curve.last().unwrap(), 1.0);
    }
}

#[test]
fn hand_worked_average_precision() {
    // matches at ranks 1 and 3: (1/1 + 2/3) / 2
    let set = RetrievalSet::new(1, vec![0.0], vec![4], vec![1.0, 2.0, 3.0], vec![4, 9, 4]).unwrap();
    assert!((mean_average_precision(&set, false).unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(cmc(&set, &[1, 2, 3], false).unwrap(), vec![1.0, 1.0, 1.0]);
}

#[test]
fn ties_keep_gallery_order() {
    let set = RetrievalSet::new(1, vec![0.0], vec![1], vec![1.0, -1.0], vec![2, 1]).unwrap();
    assert_eq!(cmc(&set, &[1, 2], false).unwrap(), vec![0.0, 1.0]);
    assert!((mean_average_precision(&set, false).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn same_camera_matches_are_skipped() {
    let set = RetrievalSet::new(1, vec![0.0], vec![1], vec![0.1, 0.2, 0.3], vec![1, 2, 1])
        .unwrap()
        .with_cameras(vec![0], vec![0, 1, 1])
        .unwrap();
    assert_eq!(cmc(&set, &[1], false).unwrap(), vec![1.0]);
    assert_eq!(cmc(&set, &[1, 2], true).unwrap(), vec![0.0, 1.0]);
}

#[test]
fn probes_without_a_match_are_rejected() {
    let set = RetrievalSet::new(1, vec![0.0], vec![3], vec![1.0], vec![1]).unwrap();
    assert!(cmc(&set, &[1], false).is_err());
    assert!(mean_average_precision(&set, false).is_err());
    let set = RetrievalSet::new(1, vec![0.0], vec![1], vec![1.0], vec![1]).unwrap();
    assert!(cmc(&set, &[0], false).is_err());
}
