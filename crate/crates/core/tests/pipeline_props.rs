use std::collections::{BTreeMap, BTreeSet};

use railguard_core::calibration::Calibration;
use railguard_core::geometry::BoundingBox;
use railguard_core::ingest::{ClassLabel, Detection, FrameRecord, StreamHeader};
use railguard_core::pipeline::{
    classify_frame, run_collect, AlertKind, Collected, DistanceMode, ObjectKey, PipelineConfig,
};
use railguard_core::simgen::{generate, NoiseSpec, Scenario};

const MODES: [DistanceMode; 2] = [DistanceMode::CenterToCenter, DistanceMode::CenterToPolyline];

fn boxed(class: ClassLabel, cx: f64, cy: f64) -> Detection {
    Detection::new(class, BoundingBox::new(cx - 4.0, cy - 4.0, cx + 4.0, cy + 4.0).unwrap(), 0.9)
}

fn breaches(out: &Collected) -> BTreeSet<(u64, ObjectKey)> {
    out.statuses.iter().filter(|s| s.breach).map(|s| (s.frame_index, s.object_key)).collect()
}

/// Noisy synthetic streams: jitter makes breaches flicker near the edge.
fn noisy_streams() -> Vec<(StreamHeader, Vec<FrameRecord>, Calibration)> {
    (0..12)
        .map(|seed| {
            let mut s = Scenario::randomized(seed);
            s.noise = NoiseSpec {
                center_jitter_px: 12.0,
                false_positive_rate: 0.2,
                miss_rate: 0.1,
            };
            let (h, f, _) = generate(&s);
            (h, f, s.calibration)
        })
        .collect()
}

#[test]
fn boundary_distance_is_a_breach_in_every_mode_and_calibration() {
    let h_half = Calibration::homography([[0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 1.0]]).unwrap();
    let cases = [
        // (calibration, pixel offset that lands exactly on 1 m)
        (Calibration::scalar(0.01).unwrap(), 100.0),
        (Calibration::scalar(0.25).unwrap(), 4.0),
        (h_half, 2.0),
    ];
    for (cal, px) in cases {
        for mode in MODES {
            let cfg = PipelineConfig {
                distance_mode: mode,
                ..PipelineConfig::default()
            };
            // A single track box, so both modes measure to the same point.
            let frame = |offset: f64| {
                FrameRecord::new(
                    0,
                    0,
                    vec![boxed(ClassLabel::Track, 0.0, 0.0), boxed(ClassLabel::Person, 0.0, offset)],
                )
            };
            let at = classify_frame(&frame(px), &cal, &cfg);
            assert_eq!(at[0].distance_m, Some(1.0), "{cal:?} {mode:?}");
            assert!(at[0].breach, "{cal:?} {mode:?}: d = T must breach");
            let past = classify_frame(&frame(px * 1.2), &cal, &cfg);
            assert!(!past[0].breach, "{cal:?} {mode:?}");
        }
    }
}

#[test]
fn scale_examples_at_one_centimeter_per_pixel() {
    let cal = Calibration::scalar(0.01).unwrap();
    let cfg = PipelineConfig::default();
    for (y, d, breach) in [(80.0, 0.8, true), (100.0, 1.0, true), (120.0, 1.2, false)] {
        let f = FrameRecord::new(0, 0, vec![boxed(ClassLabel::Track, 0.0, 0.0), boxed(ClassLabel::Person, 0.0, y)]);
        let s = &classify_frame(&f, &cal, &cfg)[0];
        assert!((s.distance_m.unwrap() - d).abs() < 1e-12);
        assert_eq!(s.breach, breach);
    }
}

#[test]
fn breach_sets_grow_with_threshold() {
    for (h, frames, cal) in noisy_streams() {
        for mode in MODES {
            let mut prev: Option<BTreeSet<_>> = None;
            for t in [0.25, 0.5, 1.0, 1.5, 3.0] {
                let cfg = PipelineConfig {
                    threshold_m: t,
                    distance_mode: mode,
                    ..PipelineConfig::default()
                };
                let set = breaches(&run_collect(&h, &frames, &cal, &cfg).unwrap().0);
                if let Some(p) = &prev {
                    assert!(p.is_subset(&set), "{} T={t}", h.source_id);
                }
                prev = Some(set);
            }
        }
    }
}

#[test]
fn alerts_alternate_and_require_persistence() {
    for (h, frames, cal) in noisy_streams() {
        for (debounce, release, hysteresis) in [(1, 1, 0.0), (3, 5, 0.2), (2, 3, 0.5)] {
            let cfg = PipelineConfig {
                threshold_m: 1.5,
                debounce_frames: debounce,
                release_frames: release,
                hysteresis_m: hysteresis,
                distance_mode: DistanceMode::CenterToPolyline,
                ..PipelineConfig::default()
            };
            let (out, summary) = run_collect(&h, &frames, &cal, &cfg).unwrap();
            let breach_at: BTreeSet<(u64, ObjectKey)> = breaches(&out);
            let order: Vec<u64> = frames.iter().map(|f| f.frame_index).collect();

            let mut per_key: BTreeMap<ObjectKey, Vec<AlertKind>> = BTreeMap::new();
            for e in &out.events {
                per_key.entry(e.object_key).or_default().push(e.kind);
                if e.kind == AlertKind::Raised {
                    let pos = order.iter().position(|&k| k == e.frame_index).unwrap();
                    assert!(pos + 1 >= debounce as usize);
                    for &k in &order[pos + 1 - debounce as usize..=pos] {
                        assert!(breach_at.contains(&(k, e.object_key)), "raised without persistence");
                    }
                }
            }
            for kinds in per_key.values() {
                for (i, k) in kinds.iter().enumerate() {
                    let want = if i % 2 == 0 { AlertKind::Raised } else { AlertKind::Cleared };
                    assert_eq!(*k, want);
                }
            }
            assert_eq!(summary.alerts_raised + summary.alerts_cleared, out.events.len() as u64);
            assert_eq!(summary.frames, frames.len() as u64);
        }
    }
}

#[test]
fn doubling_scale_and_threshold_keeps_breaches() {
    for (h, frames, cal) in noisy_streams() {
        let Calibration::Scalar { meters_per_pixel: s } = cal else {
            unreachable!("randomized scenarios use scalar calibration")
        };
        let doubled = Calibration::scalar(2.0 * s).unwrap();
        for mode in MODES {
            let cfg = |t: f64| PipelineConfig {
                threshold_m: t,
                distance_mode: mode,
                ..PipelineConfig::default()
            };
            let a = breaches(&run_collect(&h, &frames, &cal, &cfg(1.0)).unwrap().0);
            let b = breaches(&run_collect(&h, &frames, &doubled, &cfg(2.0)).unwrap().0);
            assert_eq!(a, b);
        }
    }
}

#[test]
fn identical_inputs_give_identical_bytes() {
    for (h, frames, cal) in noisy_streams() {
        let render = || {
            let (out, _) = run_collect(&h, &frames, &cal, &PipelineConfig::default()).unwrap();
            let mut s = String::new();
            for e in &out.events {
                s += &e.to_json_line();
                s.push('\n');
            }
            for st in &out.statuses {
                s += &st.to_json_line();
                s.push('\n');
            }
            s
        };
        assert_eq!(render(), render());
    }
}

#[test]
fn no_track_means_unknown_and_quiet() {
    let frames: Vec<FrameRecord> = (0..10)
        .map(|k| FrameRecord::new(k, k * 100, vec![boxed(ClassLabel::Person, 5.0, 5.0)]))
        .collect();
    let h = StreamHeader {
        source_id: "no-track".into(),
        frame_width: 100,
        frame_height: 100,
        fps: 10.0,
    };
    let cfg = PipelineConfig {
        debounce_frames: 1,
        ..PipelineConfig::default()
    };
    let (out, summary) = run_collect(&h, &frames, &Calibration::default(), &cfg).unwrap();
    assert!(out.events.is_empty());
    assert!(out.statuses.iter().all(|s| s.distance_m.is_none() && !s.breach));
    assert_eq!((summary.unknown_distance, summary.frames_without_track), (10, 10));
}
