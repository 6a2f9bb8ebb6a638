//! Decoding, tolerance matching and corpus scores.

use autoshot::annotation::{derive_transitions, ShotAnnotation, TransitionKind, TransitionSpan};
use autoshot::metrics::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gradual(lo: u64, hi: u64) -> TransitionSpan {
    TransitionSpan {
        kind: TransitionKind::Gradual,
        lo,
        hi,
    }
}

/// Eligibility written from the rule text: hard `|d - e| <= 2`; gradual
/// `lo <= d <= hi` or `|d - lo| <= 2`.
fn eligible(d: u64, s: &TransitionSpan) -> bool {
    let near = |e: u64| d.abs_diff(e) <= 2;
    match s.kind {
        TransitionKind::Hard => near(s.lo),
        TransitionKind::Gradual => (s.lo..=s.hi).contains(&d) || near(s.lo),
    }
}

/// Maximum bipartite matching by augmenting paths.
fn max_matching(detected: &[u64], truth: &[TransitionSpan]) -> usize {
    fn augment(d: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &t in &adj[d] {
            if !seen[t] {
                seen[t] = true;
                if owner[t].is_none_or(|o| augment(o, adj, seen, owner)) {
                    owner[t] = Some(d);
                    return true;
                }
            }
        }
        false
    }
    let adj: Vec<Vec<usize>> = detected
        .iter()
        .map(|&d| (0..truth.len()).filter(|&j| eligible(d, &truth[j])).collect())
        .collect();
    let mut owner = vec![None; truth.len()];
    (0..detected.len())
        .filter(|&d| augment(d, &adj, &mut vec![false; truth.len()], &mut owner))
        .count()
}

fn random_instance<R: Rng>(r: &mut R) -> (Vec<u64>, ShotAnnotation) {
    let n = r.gen_range(1..=31);
    let mut pairs = Vec::new();
    let mut next = 0u64;
    for _ in 0..n {
        let len = r.gen_range(1..8);
        pairs.push((next, next + len - 1));
        next += len + if r.gen_bool(0.4) { r.gen_range(1..6) } else { 0 };
    }
    let ann = ShotAnnotation::from_pairs(&pairs).unwrap();
    let total = next + 3;
    let k = r.gen_range(0..=40usize);
    let mut det: Vec<u64> = (0..k).map(|_| r.gen_range(0..total)).collect();
    det.sort_unstable();
    det.dedup();
    (det, ann)
}

#[test]
fn decode_examples() {
    assert!(predictions_to_boundaries(&[0.0; 10], 0.5).unwrap().is_empty());
    let mut p = vec![0.1; 10];
    p[3] = 0.9;
    let d = predictions_to_boundaries(&p, 0.5).unwrap();
    assert_eq!(d.boundaries, vec![Boundary {
        frame: 3,
        confidence: 0.9
    }]);
    let mut p = vec![0.0; 10];
    p[4..=6].fill(0.8);
    assert_eq!(predictions_to_boundaries(&p, 0.5).unwrap().frames(), vec![4]);
    let p = [0.6, 0.7, 0.95, 0.7, 0.2, 0.55, 0.4, 0.9];
    let d = predictions_to_boundaries(&p, 0.5).unwrap();
    assert_eq!(d.frames(), vec![2, 5, 7]);
    assert_eq!(d.boundaries[0].confidence, 0.95);
}

#[test]
fn decode_rejects_bad_threshold() {
    for t in [0.0, 1.0, -0.2, f64::NAN] {
        assert!(predictions_to_boundaries(&[0.5], t).is_err(), "{t}");
    }
}

#[test]
fn matching_examples() {
    let m = match_boundaries(&[74], &[TransitionSpan::hard(72)]);
    assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
    let m = match_boundaries(&[75], &[TransitionSpan::hard(72)]);
    assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
    let m = match_boundaries(&[105], &[gradual(102, 108)]);
    assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
    let m = match_boundaries(&[112], &[gradual(102, 108)]);
    assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
    // leading-edge tolerance and short-span extension
    assert_eq!(match_boundaries(&[100], &[gradual(102, 108)]).tp, 1);
    assert_eq!(match_boundaries(&[104], &[gradual(102, 103)]).tp, 1);
    assert_eq!(match_window(&gradual(102, 108)), (100, 108));
    assert_eq!(match_window(&TransitionSpan::hard(1)), (0, 3));
}

#[test]
fn matching_is_one_to_one() {
    // one detection between two cuts whose windows overlap
    let truth = [TransitionSpan::hard(10), TransitionSpan::hard(13)];
    let m = match_boundaries(&[11], &truth);
    assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 1));
    // two detections near one cut
    let m = match_boundaries(&[9, 11], &[TransitionSpan::hard(10)]);
    assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
    // the earlier-closing window is claimed first, leaving room for the next detection
    let m = match_boundaries(&[11, 14], &truth);
    assert_eq!(m.tp, 2);
}

#[test]
fn greedy_equals_optimal_on_1000_instances() {
    let mut r = rng(1);
    for seed in 0..1000 {
        let (det, ann) = random_instance(&mut r);
        let truth = derive_transitions(&ann);
        assert!(truth.len() <= 30);
        let m = match_boundaries(&det, &truth);
        assert_eq!(m.tp, max_matching(&det, &truth), "instance {seed}: {det:?} vs {truth:?}");
        assert_eq!(m.tp + m.fp, det.len());
        assert_eq!(m.tp + m.fn_, truth.len());
        let mut ds: Vec<_> = m.pairs.iter().map(|p| p.0).collect();
        let mut ts: Vec<_> = m.pairs.iter().map(|p| p.1).collect();
        ds.sort_unstable();
        ts.sort_unstable();
        ds.dedup();
        ts.dedup();
        assert_eq!(ds.len(), m.tp);
        assert_eq!(ts.len(), m.tp);
        assert!(m.pairs.iter().all(|&(i, j)| eligible(det[i], &truth[j])));
    }
}

#[test]
fn score_examples() {
    let ann = ShotAnnotation::from_pairs(&[(0, 72), (73, 102), (109, 180)]).unwrap();
    let exact = score(&[72, 102], &ann);
    assert_eq!((exact.precision, exact.recall, exact.f1), (1.0, 1.0, 1.0));
    let none = score(&[], &ann);
    assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    let half = score(&[72, 150], &ann);
    assert_eq!((half.tp, half.fp, half.fn_), (1, 1, 1));
    assert_eq!((half.precision, half.recall, half.f1), (0.5, 0.5, 0.5));
    let json = serde_json::to_value(half).unwrap();
    for key in ["tp", "fp", "fn", "precision", "recall", "f1", "threshold"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn score_is_shift_invariant() {
    let mut r = rng(2);
    for _ in 0..300 {
        let (det, ann) = random_instance(&mut r);
        let c = r.gen_range(1..1000u64);
        let pairs: Vec<_> = ann.shots().iter().map(|s| (s.begin + c, s.end + c)).collect();
        let shifted = ShotAnnotation::from_pairs(&pairs).unwrap();
        let det2: Vec<u64> = det.iter().map(|d| d + c).collect();
        assert_eq!(score(&det, &ann), score(&det2, &shifted));
    }
}

#[test]
fn run_decoding_can_raise_recall_at_a_higher_threshold() {
    // 0.5 merges frames 0..=2 into one detection; 0.7 splits it in two
    let p = [0.9, 0.6, 0.9, 0.0, 0.0];
    let ann = ShotAnnotation::from_pairs(&[(0, 0), (1, 3), (4, 4)]).unwrap();
    let low = score_predictions(&p, &ann, 0.5).unwrap();
    let high = score_predictions(&p, &ann, 0.7).unwrap();
    assert!(high.recall > low.recall);
}

fn staircase() -> (Vec<(DetectedBoundaries, ShotAnnotation)>, usize) {
    // eight hard cuts at 100, 200, ..., 800; ten detections with confidences
    // 1.0, 0.9, ..., 0.1, correct in ranks 1, 2, 4, 6, 8, 9
    let pairs: Vec<(u64, u64)> = (0..9).map(|k| (k * 100 + if k == 0 { 0 } else { 1 }, k * 100 + 100)).collect();
    let ann = ShotAnnotation::from_pairs(&pairs[..9]).unwrap();
    let cuts: Vec<u64> = derive_transitions(&ann).iter().map(|s| s.lo).collect();
    assert_eq!(cuts, vec![100, 200, 300, 400, 500, 600, 700, 800]);
    let correct = [true, true, false, true, false, true, false, true, true, false];
    let mut next_cut = cuts.iter();
    let mut boundaries = Vec::new();
    for (rank, &ok) in correct.iter().enumerate() {
        let frame = if ok { *next_cut.next().unwrap() } else { 150 + 100 * rank as u64 };
        boundaries.push(Boundary {
            frame,
            confidence: 1.0 - 0.1 * rank as f64,
        });
    }
    (vec![(DetectedBoundaries::new(boundaries).unwrap(), ann)], cuts.len())
}

#[test]
fn precision_at_recall_follows_hand_computed_staircase() {
    let (corpus, n) = staircase();
    assert_eq!(n, 8);
    // cumulative tp by rank: 1 2 2 3 3 4 4 5 6 6
    let check = |target: f64, thr: f64, prec: f64, rec: f64, status: RecallStatus| {
        let r = precision_at_recall(&corpus, target).unwrap();
        assert!((r.threshold - thr).abs() < 1e-12, "target {target}: threshold {}", r.threshold);
        assert!((r.precision - prec).abs() < 1e-12, "target {target}: precision {}", r.precision);
        assert!((r.recall - rec).abs() < 1e-12);
        assert_eq!(r.status, status);
    };
    check(0.1, 1.0, 1.0, 1.0 / 8.0, RecallStatus::Reached);
    check(0.25, 0.9, 1.0, 2.0 / 8.0, RecallStatus::Reached);
    check(0.3, 0.7, 3.0 / 4.0, 3.0 / 8.0, RecallStatus::Reached);
    check(0.5, 0.5, 4.0 / 6.0, 4.0 / 8.0, RecallStatus::Reached);
    check(0.71, 0.2, 6.0 / 9.0, 6.0 / 8.0, RecallStatus::Reached);
    check(0.75, 0.2, 6.0 / 9.0, 6.0 / 8.0, RecallStatus::Reached);
    check(0.8, 0.1, 6.0 / 10.0, 6.0 / 8.0, RecallStatus::Unreachable);
    let zero = precision_at_recall(&corpus, 0.0).unwrap();
    assert_eq!(zero.threshold, f64::INFINITY);
    assert_eq!(zero.precision, 0.0);
    assert_eq!(zero.status, RecallStatus::NoDetections);
}

#[test]
fn perfect_detections_keep_full_precision() {
    let ann = ShotAnnotation::from_pairs(&[(0, 9), (10, 19), (20, 29), (30, 39)]).unwrap();
    let dets = DetectedBoundaries::new(vec![
        Boundary { frame: 9, confidence: 0.9 },
        Boundary { frame: 19, confidence: 0.6 },
        Boundary { frame: 29, confidence: 0.3 },
    ])
    .unwrap();
    let corpus = vec![(dets, ann)];
    for target in [0.2, 0.5, 0.7, 1.0] {
        let r = precision_at_recall(&corpus, target).unwrap();
        assert_eq!(r.precision, 1.0, "target {target}");
    }
}

#[test]
fn precision_at_recall_rejects_empty_corpus() {
    assert!(precision_at_recall(&[], 0.71).is_err());
}

#[test]
fn corpus_scores_pool_counts() {
    let a = ShotAnnotation::from_pairs(&[(0, 9), (10, 19)]).unwrap();
    let b = ShotAnnotation::from_pairs(&[(0, 4), (5, 9), (10, 20)]).unwrap();
    let da = DetectedBoundaries::new(vec![Boundary { frame: 9, confidence: 0.8 }]).unwrap();
    let db = DetectedBoundaries::new(vec![Boundary { frame: 15, confidence: 0.8 }]).unwrap();
    let r = corpus_report(&[(da, a), (db, b)], 0.5);
    assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 2));
    assert!((r.precision - 0.5).abs() < 1e-15);
    assert!((r.recall - 1.0 / 3.0).abs() < 1e-15);
    assert!((r.f1 - 0.4).abs() < 1e-15);
}

proptest! {
    #[test]
    fn filtering_by_confidence_never_raises_recall(seed in any::<u64>(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let mut r = rng(seed);
        let (det, ann) = random_instance(&mut r);
        let boundaries = det.iter().map(|&f| Boundary { frame: f, confidence: r.gen_range(0.0..1.0) }).collect();
        let corpus = vec![(DetectedBoundaries::new(boundaries).unwrap(), ann)];
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(corpus_report(&corpus, hi).recall <= corpus_report(&corpus, lo).recall);
    }

    #[test]
    fn decoded_boundaries_are_valid(p in proptest::collection::vec(0.0f64..1.0, 0..200), t in 0.05f64..0.95) {
        let d = predictions_to_boundaries(&p, t).unwrap();
        prop_assert!(d.boundaries.windows(2).all(|w| w[0].frame < w[1].frame));
        for b in &d.boundaries {
            prop_assert!(p[b.frame as usize] >= t);
            prop_assert_eq!(p[b.frame as usize], b.confidence);
        }
        // one boundary per run above threshold
        let runs = p.iter().enumerate().filter(|&(i, &v)| v >= t && (i == 0 || p[i - 1] < t)).count();
        prop_assert_eq!(d.len(), runs);
    }
}
