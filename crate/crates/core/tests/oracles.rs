mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roadside_teacher::background::{build_histogram, filter_frame, select_background, BackgroundModel};
use roadside_teacher::clustering::dbscan;
use roadside_teacher::pointcloud::{Frame, FrameSequence, Point};

use common::*;

fn raw(seq: &FrameSequence) -> Vec<Vec<Point>> {
    seq.frames.iter().map(|f| f.points.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn histogram_agrees_with_naive_loop(seed: u64, n_query in 1usize..12, n_bin in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = random_sequence(&mut rng, n_query, 64);
        let hist = build_histogram(&seq, n_bin).unwrap();
        for (h, n) in hist.per_index.iter().zip(naive_histogram(&raw(&seq), n_bin)) {
            match n {
                None => prop_assert_eq!(h.observed, 0),
                Some((d_min, d_max, w, counts, means)) => {
                    prop_assert_eq!((h.d_min, h.d_max, h.bin_width), (d_min, d_max, w));
                    prop_assert_eq!(&h.bin_count, &counts);
                    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                    prop_assert_eq!(bits(&h.bin_mean), bits(&means));
                }
            }
        }
    }

    #[test]
    fn filter_agrees_with_naive_selection(
        seed: u64,
        (n_bin, n_tall) in (1usize..12).prop_flat_map(|b| (Just(b), 1..=b.min(4))),
        thr in 0.0..1.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = random_sequence(&mut rng, 8, 64);
        let model = select_background(&build_histogram(&seq, n_bin).unwrap(), n_tall).unwrap();
        let tall = naive_select(&naive_histogram(&raw(&seq), n_bin), n_tall);
        prop_assert_eq!(&model.tall_distances, &tall);
        for frame in &seq.frames {
            let got = filter_frame(frame, &model, thr).unwrap();
            prop_assert_eq!(got.points, naive_filter(&frame.points, &tall, thr));
        }
    }

    #[test]
    fn model_ignores_query_order_and_survives_encoding(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = random_sequence(&mut rng, 10, 48);
        let model = select_background(&build_histogram(&seq, 10).unwrap(), 3).unwrap();
        let mut points = raw(&seq);
        points.shuffle(&mut rng);
        let frames: Vec<Frame> = points
            .into_iter()
            .enumerate()
            .map(|(k, p)| Frame::new(k + 1, format!("s{k:03}"), p))
            .collect();
        let shuffled = FrameSequence::new(frames, seq.meta.clone()).unwrap();
        let again = select_background(&build_histogram(&shuffled, 10).unwrap(), 3).unwrap();
        prop_assert_eq!(&model, &again);
        prop_assert_eq!(BackgroundModel::decode(&model.encode()).unwrap(), model);
    }

    #[test]
    fn dbscan_agrees_with_brute_force(seed: u64, eps in 0.2..2.0f64, min_pts in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = random_cluster_frame(&mut rng, 300);
        let got = dbscan(&frame, eps, min_pts);
        let (want, noise) = brute_dbscan(&frame.points, eps, min_pts);
        let clusters: Vec<Vec<usize>> = got.clusters.iter().map(|c| c.point_indices.clone()).collect();
        prop_assert_eq!(canonical(&clusters), want);
        prop_assert_eq!(got.noise, noise);
    }
}
