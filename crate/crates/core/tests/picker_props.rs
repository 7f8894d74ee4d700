use das_traffic::picker::*;
use das_traffic::strain_io::{StrainBatch, StrainMeta};
use proptest::prelude::*;
use std::collections::{BTreeSet, HashMap};

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut i = i;
    while parent[i] != r {
        let next = parent[i];
        parent[i] = r;
        i = next;
    }
    r
}

/// Connected components of the open epsilon-neighbourhood graph, by
/// all-pairs union-find.
fn components(points: &[[f64; 2]], eps: f64) -> BTreeSet<BTreeSet<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            let d2 = (points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2);
            if d2 < eps * eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().insert(i);
    }
    groups.into_values().collect()
}

fn partition(labels: &[i64]) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: HashMap<i64, BTreeSet<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        assert!(l >= 0, "min_pts = 1 leaves no noise");
        groups.entry(l).or_default().insert(i);
    }
    groups.into_values().collect()
}

fn points() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y)| [x, y]), 0..200)
}

fn field(values: &[f64], n_samples: usize, n_channels: usize) -> StrainBatch {
    let meta = StrainMeta {
        channel_spacing: 2.0,
        channel0_position: 3960.0,
        sample_interval: 0.2,
        t0: 10.0,
        n_channels,
        n_samples,
        gauge_length: 2.0,
        is_log_rms: true,
    };
    StrainBatch::new(meta, values.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn min_pts_one_gives_connected_components(pts in points(), eps in 0.01..0.2f64) {
        prop_assert_eq!(partition(&dbscan(&pts, eps, 1)), components(&pts, eps));
    }

    #[test]
    fn partition_survives_permutation(
        pts in points(),
        eps in 0.01..0.2f64,
        min_pts in 1usize..5,
        key in any::<u64>(),
    ) {
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by_key(|&i| (i as u64).wrapping_mul(key | 1).rotate_left(17));
        let shuffled: Vec<[f64; 2]> = order.iter().map(|&i| pts[i]).collect();
        let a = dbscan(&pts, eps, min_pts);
        let b = dbscan(&shuffled, eps, min_pts);
        // core points and noise are order independent; border points may
        // join either neighbouring cluster, so compare with min_pts = 1
        // where every point is core
        let noise_a: BTreeSet<usize> = (0..pts.len()).filter(|&i| a[i] == NOISE).collect();
        let noise_b: BTreeSet<usize> = (0..pts.len()).filter(|&k| b[k] == NOISE).map(|k| order[k]).collect();
        prop_assert_eq!(noise_a, noise_b);
        if min_pts == 1 {
            let pa = partition(&a);
            let pb: BTreeSet<BTreeSet<usize>> = partition(&b)
                .into_iter()
                .map(|g| g.into_iter().map(|k| order[k]).collect())
                .collect();
            prop_assert_eq!(pa, pb);
        }
    }

    #[test]
    fn raising_threshold_never_adds_cells(
        values in prop::collection::vec(-12.0..-6.0f64, 120),
        a in -12.0..-6.0f64,
        step in 0.0..3.0f64,
    ) {
        let b = field(&values, 10, 12);
        prop_assert!(threshold_exceedances(&b, a + step).len() <= threshold_exceedances(&b, a).len());
    }

    #[test]
    fn picks_lie_in_their_cluster_box(
        values in prop::collection::vec(-12.0..-6.0f64, 400),
        eps in 0.05..0.3f64,
    ) {
        let b = field(&values, 20, 20);
        let cfg = PickerConfig { amplitude_threshold: -8.0, dbscan_epsilon: eps, ..Default::default() };
        let labeled = cluster_cells(threshold_exceedances(&b, cfg.amplitude_threshold), 20, 20, eps, 1);
        let mut boxes = vec![(f64::MAX, f64::MIN, f64::MAX, f64::MIN, 0usize); labeled.n_clusters()];
        for (cell, &l) in labeled.points.iter().zip(&labeled.labels) {
            let bx = &mut boxes[l as usize];
            let t = b.meta.sample_time(cell.sample as f64);
            let x = b.meta.channel_position(cell.channel as f64);
            *bx = (bx.0.min(t), bx.1.max(t), bx.2.min(x), bx.3.max(x), bx.4 + 1);
        }
        let picks = extract_picks(&b, &cfg);
        prop_assert_eq!(picks.len(), boxes.len());
        let tol = 1e-9;
        for p in &picks {
            let inside = boxes.iter().any(|bx| {
                bx.4 == p.cluster_size
                    && p.time >= bx.0 - tol && p.time <= bx.1 + tol
                    && p.position >= bx.2 - tol && p.position <= bx.3 + tol
            });
            prop_assert!(inside, "{:?}", p);
        }
    }
}
