use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gebd_core::classifier::{
    frame_features, intensity_bin, pc_concat, score_sequence, train_logistic, FrameFeature, LogisticModel, PcInput,
    Standardizer, TrainConfig, FEATURE_DIM,
};
use gebd_core::data::normalize_track;
use gebd_core::postprocess::{detect_peaks, scores_to_boundaries, DetectionConfig, ScoreSequence};
use gebd_core::report::{render_class_bars, render_timeline, TimelineSpec};
use gebd_core::synth::{annotate, plan_video, SynthConfig};

fn feature() -> impl Strategy<Value = FrameFeature> {
    prop::collection::vec(-10.0f64..10.0, FEATURE_DIM).prop_map(|v| FrameFeature(v.try_into().unwrap()))
}

/// Feature vector recomputed pixel by pixel.
fn naive_features(rgb: &[f32], flow: &[f32], prev: Option<&[f32]>) -> Vec<f64> {
    let n = rgb.len() / 3;
    let mut mags = Vec::new();
    let mut angle = [0.0; 8];
    for i in 0..n {
        let (dx, dy) = (flow[i] as f64, flow[n + i] as f64);
        let mag = dx.hypot(dy);
        mags.push(mag);
        if mag > 0.0 {
            let mut a = dy.atan2(dx);
            if a < 0.0 {
                a += 2.0 * std::f64::consts::PI;
            }
            angle[((a / (std::f64::consts::PI / 4.0)) as usize).min(7)] += mag;
        }
    }
    let total: f64 = angle.iter().sum();
    let angle: Vec<f64> = if total > 0.0 { angle.iter().map(|a| a / total).collect() } else { vec![0.125; 8] };
    let mut luma = [0.0; 16];
    for i in 0..n {
        let y = 0.299 * rgb[i] as f64 + 0.587 * rgb[n + i] as f64 + 0.114 * rgb[2 * n + i] as f64;
        luma[((y * 16.0).floor() as i64).clamp(0, 15) as usize] += 1.0 / n as f64;
    }
    let diff = prev.map_or(0.0, |p| {
        rgb.iter().zip(p).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / rgb.len() as f64
    });
    let mut out = vec![mags.iter().sum::<f64>() / n as f64, mags.iter().cloned().fold(0.0, f64::max)];
    out.extend(angle);
    out.extend(luma);
    out.push(diff);
    out
}

fn separable_2d(seed: u64) -> Vec<(PcInput, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let u = [angle.cos(), angle.sin()];
    let mut out = Vec::with_capacity(200);
    while out.len() < 200 {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let proj = x[0] * u[0] + x[1] * u[1];
        if proj.abs() >= 0.5 {
            out.push((PcInput(x.to_vec()), proj > 0.0));
        }
    }
    out
}

fn accuracy(model: &LogisticModel, data: &[(PcInput, bool)]) -> f64 {
    let hits = data.iter().filter(|(x, y)| (model.score(&x.0).unwrap() > 0.5) == *y).count();
    hits as f64 / data.len() as f64
}

#[test]
fn random_frames_match_naive_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.random_range(1..200);
        let rgb: Vec<f32> = (0..3 * n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let prev: Vec<f32> = (0..3 * n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let flow: Vec<f32> = (0..2 * n)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(-4.0..4.0) })
            .collect();
        for p in [None, Some(prev.as_slice())] {
            let got = frame_features(&rgb, &flow, p).unwrap();
            for (a, b) in got.0.iter().zip(naive_features(&rgb, &flow, p)) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
    assert_eq!(intensity_bin(1.0), 15);
    assert_eq!(intensity_bin(-0.1), 0);
}

#[test]
fn separable_2d_reaches_full_accuracy() {
    let data = separable_2d(3);
    let out = train_logistic(&data, &TrainConfig::default()).unwrap();
    assert!(accuracy(&out.model, &data) >= 0.99);
}

#[test]
fn loss_is_non_increasing_in_most_runs() {
    let monotone = (0..20u64)
        .filter(|&seed| {
            let config = TrainConfig { seed, ..TrainConfig::default() };
            let losses = train_logistic(&separable_2d(100 + seed), &config).unwrap().epoch_losses;
            losses.windows(2).all(|w| w[1] <= w[0])
        })
        .count();
    assert!(monotone >= 19, "{monotone}/20 runs monotone");
}

fn scaled_dataset(data: &[(PcInput, bool)], dim: usize, a: f64, b: f64) -> Vec<(PcInput, bool)> {
    data.iter()
        .map(|(x, y)| {
            let mut x = x.0.clone();
            x[dim] = a * x[dim] + b;
            (PcInput(x), *y)
        })
        .collect()
}

#[test]
fn standardization_absorbs_affine_rescaling() {
    let data = separable_2d(9);
    let config = TrainConfig { seed: 4, ..TrainConfig::default() };
    let base = train_logistic(&data, &config).unwrap();

    // Power-of-two scale factors are exact in floating point, so training is bitwise identical.
    for (dim, a) in [(0, 8.0), (1, 0.125), (0, -4.0)] {
        let other = train_logistic(&scaled_dataset(&data, dim, a, 0.0), &config).unwrap();
        assert_eq!(other.epoch_losses, base.epoch_losses);
        let mut w = base.model.weights.clone();
        w[dim] *= a.signum();
        assert_eq!(other.model.weights, w);
        assert_eq!(other.model.bias, base.model.bias);
    }

    // General affine maps agree up to rounding.
    for (dim, a, b) in [(0, 3.7, -12.0), (1, 0.013, 5.5)] {
        let other = train_logistic(&scaled_dataset(&data, dim, a, b), &config).unwrap();
        for (p, q) in other.epoch_losses.iter().zip(&base.epoch_losses) {
            assert!((p - q).abs() < 1e-9);
        }
        for (p, q) in other.model.weights.iter().zip(&base.model.weights) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}

fn model(weights: Vec<f64>, bias: f64) -> LogisticModel {
    let dim = weights.len();
    LogisticModel {
        weights,
        bias,
        ..LogisticModel::zeros(dim)
    }
}

fn sequence(scores: &[f64], step: f64, offset: f64) -> ScoreSequence {
    let ts = (0..scores.len()).map(|i| offset + step * (i as f64 + 0.5)).collect();
    ScoreSequence::new("v", ts, scores.to_vec()).unwrap()
}

/// Picks the best remaining maximum, drops everything too close to it, repeats.
fn oracle_peaks(seq: &ScoreSequence, threshold: f64, min_sep: f64) -> Vec<f64> {
    let s = &seq.scores;
    let n = s.len();
    let mut maxima = Vec::new();
    for i in 0..n {
        if i > 0 && s[i - 1] == s[i] {
            continue;
        }
        let mut j = i;
        while j + 1 < n && s[j + 1] == s[i] {
            j += 1;
        }
        let left_ok = i == 0 || s[i - 1] < s[i];
        let right_ok = j + 1 == n || s[j + 1] < s[i];
        if left_ok && right_ok && s[i] >= threshold {
            maxima.push(i);
        }
    }
    let mut kept = Vec::new();
    while !maxima.is_empty() {
        let &best = maxima
            .iter()
            .max_by(|&&a, &&b| s[a].total_cmp(&s[b]).then(b.cmp(&a)))
            .unwrap();
        kept.push(seq.timestamps[best]);
        let tb = seq.timestamps[best];
        maxima.retain(|&k| (seq.timestamps[k] - tb).abs() >= min_sep - 1e-9);
    }
    kept.sort_by(f64::total_cmp);
    kept
}

fn scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    // A coarse grid makes plateaus and ties common.
    prop::collection::vec((0u32..=20).prop_map(|k| k as f64 / 20.0), 1..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pc_concat_ignores_order_within_side(
        before in prop::collection::vec(feature(), 1..6),
        seed in any::<u64>(),
    ) {
        let m = before.len();
        let after: Vec<FrameFeature> = before.iter().rev().cloned().collect();
        let mut shuffled = before.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = pc_concat(&before, &after, m).unwrap();
        let b = pc_concat(&shuffled, &after, m).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            prop_assert!((x - y).abs() < 1e-12);
        }

        let swapped = pc_concat(&after, &before, m).unwrap();
        prop_assert_eq!(&swapped.0[..FEATURE_DIM], &a.0[FEATURE_DIM..]);
        prop_assert_eq!(&swapped.0[FEATURE_DIM..], &a.0[..FEATURE_DIM]);
    }

    #[test]
    fn score_is_monotone_in_margin(
        w in prop::collection::vec(-2.0f64..2.0, 3),
        b in -1.0f64..1.0,
        xs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..20),
    ) {
        let model = model(w, b);
        let mut pairs: Vec<(f64, f64)> = xs
            .iter()
            .map(|x| (model.margin(x).unwrap(), model.score(x).unwrap()))
            .collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        for w in pairs.windows(2) {
            prop_assert!(w[1].1 >= w[0].1);
            if w[1].0 - w[0].0 > 1e-6 {
                prop_assert!(w[1].1 > w[0].1);
            }
        }
    }

    #[test]
    fn batch_scoring_equals_scalar_scoring(
        w in prop::collection::vec(-2.0f64..2.0, 4),
        b in -1.0f64..1.0,
        xs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..20),
    ) {
        let mut model = model(w, b);
        model.standardizer = Standardizer { mean: vec![0.5, -1.0, 0.0, 2.0], std: vec![1.5, 0.5, 1.0, 3.0] };
        let inputs: Vec<(f64, PcInput)> = xs.iter().enumerate().map(|(i, x)| (i as f64 * 0.25, PcInput(x.clone()))).collect();
        let seq = score_sequence(&model, "v", &inputs).unwrap();
        for (s, (_, x)) in seq.scores.iter().zip(&inputs) {
            prop_assert_eq!(s.to_bits(), model.score(&x.0).unwrap().to_bits());
        }
    }

    #[test]
    fn detected_peaks_are_sorted_and_separated(
        s in scores(60),
        threshold in 0.0f64..1.0,
        min_sep in 0.0f64..2.0,
    ) {
        let config = DetectionConfig { smooth_sigma: 0.0, score_threshold: threshold, min_separation: min_sep };
        let seq = sequence(&s, 0.25, 0.0);
        let out = detect_peaks(&seq, &config);
        prop_assert!(out.timestamps.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] >= min_sep - 1e-9));
        prop_assert_eq!(out.timestamps, oracle_peaks(&seq, threshold, min_sep));
    }

    #[test]
    fn raising_threshold_never_adds(
        s in scores(60),
        t1 in 0.0f64..1.0,
        dt in 0.0f64..0.5,
        sigma in 0.0f64..2.0,
    ) {
        let seq = sequence(&s, 0.25, 0.0);
        let low = scores_to_boundaries(&seq, &DetectionConfig { smooth_sigma: sigma, score_threshold: t1, min_separation: 0.5 }).unwrap();
        let high = scores_to_boundaries(&seq, &DetectionConfig { smooth_sigma: sigma, score_threshold: t1 + dt, min_separation: 0.5 }).unwrap();
        prop_assert!(high.timestamps.iter().all(|t| low.timestamps.contains(t)));
    }

    #[test]
    fn shifting_time_shifts_boundaries(
        s in scores(60),
        shift in 0.0f64..100.0,
        sigma in 0.0f64..2.0,
    ) {
        let config = DetectionConfig { smooth_sigma: sigma, score_threshold: 0.3, min_separation: 0.5 };
        let base = sequence(&s, 0.25, 0.0);
        let moved = ScoreSequence::new("v", base.timestamps.iter().map(|t| t + shift).collect(), s.clone()).unwrap();
        let a = scores_to_boundaries(&base, &config).unwrap();
        let b = scores_to_boundaries(&moved, &config).unwrap();
        let expected: Vec<f64> = a.timestamps.iter().map(|t| t + shift).collect();
        prop_assert_eq!(b.timestamps, expected);
    }

    #[test]
    fn scaling_scores_and_threshold_together_is_invisible(
        s in scores(60),
        k in 0i32..8,
        threshold in 0.0f64..1.0,
        sigma in 0.0f64..2.0,
    ) {
        let c = 2f64.powi(-k);
        let base = sequence(&s, 0.25, 0.0);
        let scaled = sequence(&s.iter().map(|v| v * c).collect::<Vec<_>>(), 0.25, 0.0);
        let a = scores_to_boundaries(&base, &DetectionConfig { smooth_sigma: sigma, score_threshold: threshold, min_separation: 0.5 }).unwrap();
        let b = scores_to_boundaries(&scaled, &DetectionConfig { smooth_sigma: sigma, score_threshold: threshold * c, min_separation: 0.5 }).unwrap();
        prop_assert_eq!(a.timestamps, b.timestamps);
    }

    #[test]
    fn timeline_is_pure_and_ticks_follow_time(
        mut ts in prop::collection::vec(0.0f64..=10.0, 0..30),
        other in prop::collection::vec(0.0f64..=10.0, 0..5),
    ) {
        ts.sort_by(f64::total_cmp);
        let spec = TimelineSpec::new("vid<1>", 10.0).track("pred", ts.clone()).track("gt", other);
        let svg = render_timeline(&spec).unwrap();
        prop_assert_eq!(&svg, &render_timeline(&spec).unwrap());
        let xs: Vec<f64> = svg
            .lines()
            .take_while(|l| !l.contains("data-name=\"gt\""))
            .filter_map(|l| l.split("x1=\"").nth(1))
            .map(|rest| rest.split('"').next().unwrap().parse().unwrap())
            .collect();
        prop_assert_eq!(xs.len(), ts.len());
        prop_assert!(xs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn class_bars_are_deterministic(values in prop::collection::vec(0.0f64..=1.0, 1..8)) {
        let classes: Vec<(String, f64)> = values.iter().enumerate().map(|(i, v)| (format!("c{i}"), *v)).collect();
        prop_assert_eq!(render_class_bars("t", &classes).unwrap(), render_class_bars("t", &classes).unwrap());
    }
}

#[test]
fn two_bumps_give_two_boundaries() {
    let ts: Vec<f64> = (0..40).map(|i| 0.125 + 0.25 * i as f64).collect();
    let scores: Vec<f64> = ts
        .iter()
        .map(|t| 0.1 + 0.8 * (-(t - 3.0f64).powi(2) / 0.1).exp() + 0.8 * (-(t - 6.0f64).powi(2) / 0.1).exp())
        .collect();
    let seq = ScoreSequence::new("v", ts, scores).unwrap();
    let config = DetectionConfig { min_separation: 1.0, ..DetectionConfig::default() };
    let out = scores_to_boundaries(&seq, &config).unwrap();
    assert_eq!(out.timestamps.len(), 2);
    assert!((out.timestamps[0] - 3.0).abs() <= 0.125 && (out.timestamps[1] - 6.0).abs() <= 0.125);
}

#[test]
fn synthetic_annotators_stay_within_three_sigma() {
    let config = SynthConfig { num_videos: 40, ..SynthConfig::default() };
    let limit = 3.0 * config.jitter_sigma + 1e-9;
    let mut planted_total = 0;
    let mut errors = Vec::new();
    for i in 0..config.num_videos {
        let video = plan_video(&config, i);
        let planted = video.planted();
        planted_total += planted.len();
        let set = annotate(&config, &video).unwrap();
        assert_eq!(set.tracks.len(), 5);
        for track in &set.tracks {
            let got = normalize_track(track, &set.meta).unwrap();
            assert_eq!(got.len(), planted.len(), "{}", set.meta.video_id);
            for (g, p) in got.timestamps.iter().zip(&planted) {
                assert!((g - p).abs() <= limit);
                errors.push(g - p);
            }
        }
    }
    assert!(planted_total >= 100, "{planted_total} planted boundaries");
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let sd = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    // A normal truncated at three sigma keeps about 98.7% of its spread.
    assert!((sd - 0.0987).abs() < 0.01, "jitter sd {sd}");
}
