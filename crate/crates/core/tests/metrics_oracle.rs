mod support;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use railguard_core::ingest::{ClassLabel, FrameRecord};
use railguard_core::metrics::{
    average_precision, confidence_grid, evaluate_frames, f1_confidence_curve, f1_score, match_detections, pr_curve,
    GroundTruthFrame, ScoredSet,
};
use support::oracles::{envelope_ap, random_instance, recount, OracleFrame};

const CLASSES: [ClassLabel; 3] = [ClassLabel::Person, ClassLabel::Object, ClassLabel::Track];

fn scored(frames: &[OracleFrame], iou: f64, class: ClassLabel) -> ScoredSet {
    let preds: Vec<FrameRecord> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| FrameRecord::new(i as u64, i as u64 * 40, f.preds.clone()))
        .collect();
    let gt: Vec<GroundTruthFrame> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| GroundTruthFrame {
            frame_index: i as u64,
            boxes: f.gt.clone(),
        })
        .collect();
    evaluate_frames(&preds, &gt, iou, class).unwrap()
}

#[test]
fn curves_and_ap_equal_recount_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA9);
    for case in 0..100 {
        let frames = random_instance(&mut rng, 100);
        for class in CLASSES {
            let iou = if case % 2 == 0 { 0.5 } else { 0.3 };
            let set = scored(&frames, iou, class);

            // Grid curve plus every distinct confidence as a cutoff.
            let mut cutoffs: Vec<f64> = set.predictions.iter().map(|p| p.confidence).collect();
            cutoffs.sort_by(f64::total_cmp);
            cutoffs.dedup();
            for p in f1_confidence_curve(&set).into_iter().chain(pr_curve(&set, &cutoffs)) {
                let (tp, fp, fne) = recount(&frames, p.threshold, iou, class);
                let c = p.counts;
                assert_eq!(
                    (c.true_positives, c.false_positives, c.false_negatives),
                    (tp, fp, fne),
                    "case {case} {class} t={}",
                    p.threshold
                );
                assert!((p.f1 - f1_score(p.precision, p.recall)).abs() <= 1e-12);
            }

            let (ap, want) = (average_precision(&set), envelope_ap(&frames, iou, class));
            assert!((ap - want).abs() <= 1e-9, "case {case} {class}: ap {ap} oracle {want}");
        }
    }
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn counting_identities_and_recall_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let frames = random_instance(&mut rng, 50);
        for class in CLASSES {
            let set = scored(&frames, 0.5, class);
            let curve = f1_confidence_curve(&set);
            for w in curve.windows(2) {
                assert!(w[1].recall <= w[0].recall);
            }
            for p in &curve {
                let above = set.predictions.iter().filter(|s| s.confidence >= p.threshold).count();
                assert_eq!(p.counts.true_positives + p.counts.false_positives, above);
                assert_eq!(p.counts.true_positives + p.counts.false_negatives, set.ground_truth);
            }
            let ap = average_precision(&set);
            assert!((0.0..=1.0).contains(&ap));
        }
    }
}

#[test]
fn matching_ignores_input_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        for f in random_instance(&mut rng, 30) {
            let forward = match_detections(&f.preds, &f.gt, 0.5, ClassLabel::Person);
            let mut preds = f.preds.clone();
            preds.reverse();
            let mut gt = f.gt.clone();
            gt.reverse();
            let backward = match_detections(&preds, &gt, 0.5, ClassLabel::Person);
            assert_eq!(
                (forward.true_positives, forward.false_positives, forward.false_negatives),
                (backward.true_positives, backward.false_positives, backward.false_negatives)
            );
            let ious = |m: &railguard_core::metrics::MatchResult| {
                let mut v: Vec<(u64, u64)> = m.pairs.iter().map(|p| (p.confidence.to_bits(), p.iou.to_bits())).collect();
                v.sort();
                v
            };
            assert_eq!(ious(&forward), ious(&backward));
        }
    }
}

#[test]
fn ap_is_one_only_with_a_perfect_operating_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let frames = random_instance(&mut rng, 20);
        let set = scored(&frames, 0.5, ClassLabel::Person);
        let perfect = confidence_grid()
            .into_iter()
            .chain(set.predictions.iter().map(|p| p.confidence))
            .any(|t| {
                let c = set.counts_at(t);
                set.ground_truth > 0 && c.false_positives == 0 && c.false_negatives == 0
            });
        assert_eq!(average_precision(&set) == 1.0, perfect);
    }
}
