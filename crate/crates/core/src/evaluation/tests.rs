use super::*;
use crate::data::{BounceEvent, BounceLog, Wall};
use crate::model::Futures;

/// splitmix64 stream; pixel = top 53 bits / 2^53.
fn frame(seed: u64, h: usize, w: usize) -> Vec<f64> {
    let mut state = seed;
    (0..h * w)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

const SSIM_ORACLE: [f64; 20] = [
    1.0,
    0.9209063712054768,
    0.6207550321207349,
    0.24472689865709554,
    -0.09699509942324458,
    1.0,
    0.9247561657837178,
    0.6815884540595368,
    0.284674979235957,
    -0.0675273940200753,
    1.0,
    0.9238869860771997,
    0.6366993346412179,
    0.3873828304004908,
    0.04190123380912443,
    1.0,
    0.923925649510647,
    0.6369300895631764,
    0.10008728566803544,
    0.01659620776565552,
];

#[test]
fn frame_generator_matches_reference() {
    let f = frame(1000, 1, 4);
    let want = [0.23484388, 0.81437096, 0.77341331, 0.30982739];
    for (a, b) in f.iter().zip(want) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn ssim_matches_reference_values() {
    for (k, want) in SSIM_ORACLE.iter().enumerate() {
        let (h, w) = (16 + (k % 3) * 8, 16 + (k % 2) * 8);
        let x = frame(1000 + k as u64, h, w);
        let n = frame(5000 + k as u64, h, w);
        let mix = (k % 5) as f64 / 4.0;
        let y: Vec<f64> = x.iter().zip(&n).map(|(a, b)| ((1.0 - mix) * a + mix * b).clamp(0.0, 1.0)).collect();
        let got = ssim(&x, &y, h, w).unwrap();
        assert!((got - want).abs() < 1e-4, "pair {k}: {got} vs {want}");
    }
    let x = frame(77, 32, 32);
    let inv: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
    assert!((ssim(&x, &inv, 32, 32).unwrap() + 0.967436368771449).abs() < 1e-4);
}

/// Two videos, three futures, two steps of 12×12 frames. Future `k` of
/// video `v` is the truth blended towards noise by `k / 2`.
fn toy() -> (Futures, Vec<Vec<f32>>) {
    let (h, w, steps, k) = (12, 12, 2, 3);
    let px = h * w;
    let mut truths = Vec::new();
    let mut frames = Vec::new();
    let mut s = Vec::new();
    for v in 0..2u64 {
        let gt: Vec<f32> = (0..steps).flat_map(|j| frame(100 + 10 * v + j as u64, h, w)).map(|x| x as f32).collect();
        for f in 0..k {
            let mix = f as f32 / 2.0;
            let noise = frame(900 + v * 7 + f as u64, 1, steps * px);
            frames.extend(gt.iter().zip(&noise).map(|(a, b)| (1.0 - mix) * a + mix * *b as f32));
            s.extend((0..steps).map(|j| (v * 100 + f as u64 * 10 + j as u64) as f64));
        }
        truths.push(gt);
    }
    (Futures { num_videos: 2, num_futures: k, steps, height: h, width: w, frames, s }, truths)
}

#[test]
fn best_of_k_prefers_the_clean_future() {
    let (f, truth) = toy();
    let scored = score_futures(&f, &truth, &[4, 9], 5, true).unwrap();
    assert_eq!(scored.ssim_of(0, 0), &[1.0, 1.0]);
    assert_eq!(scored.best(0, 3, Selection::Ssim), 0);
    assert_eq!(scored.best(1, 3, Selection::Psnr), 0);
    let r = best_of_k(&scored, 3, Selection::Ssim).unwrap();
    assert_eq!(r.videos.iter().map(|v| v.video).collect::<Vec<_>>(), vec![4, 9]);
    assert!((r.mean_ssim() - 1.0).abs() < 1e-12);
    assert_eq!(r.mean_psnr(), PSNR_CAP);
    let traces = best_traces(&scored, 3, Selection::Ssim);
    assert_eq!(traces[1].s, vec![100.0, 101.0]);
}

#[test]
fn best_of_k_is_monotone_in_k() {
    let (mut f, truth) = toy();
    // Reverse the futures so the clean one comes last.
    let px = f.height * f.width * f.steps;
    let mut frames = Vec::new();
    for v in 0..2 {
        for k in (0..3).rev() {
            let off = (v * 3 + k) * px;
            frames.extend_from_slice(&f.frames[off..off + px]);
        }
    }
    f.frames = frames;
    let scored = score_futures(&f, &truth, &[0, 1], 5, true).unwrap();
    let d = diversity_report(&scored, &[1, 2, 3], Selection::Ssim).unwrap();
    assert!(d.best_of_k.windows(2).all(|p| p[1] >= p[0]));
    assert!(d.best_of_k[2] > d.best_of_k[0]);
    assert_eq!(d.intra_ssim.len(), 2);
    assert!(d.intra_ssim.iter().all(|v| *v < 1.0));
}

#[test]
fn ties_pick_the_earliest_future() {
    let (mut f, truth) = toy();
    let px = f.height * f.width * f.steps;
    let first = f.frames[..px].to_vec();
    f.frames[px..2 * px].copy_from_slice(&first);
    let scored = score_futures(&f, &truth, &[0, 1], 5, false).unwrap();
    assert_eq!(scored.best(0, 3, Selection::Ssim), 0);
    assert!(scored.intra.is_none());
    assert!(diversity_report(&scored, &[1], Selection::Ssim).is_err());
}

#[test]
fn score_rejects_mismatched_truth() {
    let (f, mut truth) = toy();
    truth[0].pop();
    assert!(matches!(score_futures(&f, &truth, &[0, 1], 5, false), Err(crate::NuqError::Shape(_))));
}

#[test]
fn selection_round_trips() {
    for s in [Selection::Ssim, Selection::Psnr] {
        assert_eq!(s.to_string().parse::<Selection>().unwrap(), s);
    }
    assert!("mse".parse::<Selection>().is_err());
}

fn bounce(frame: usize) -> BounceEvent {
    BounceEvent { frame, wall: Wall::Left, direction: [1.0, 0.0] }
}

#[test]
fn uncertainty_marks_frames_near_bounces() {
    let traces = vec![
        SeqTrace { video: 0, s: vec![1.0, 5.0, 1.0, 1.0, 3.0] },
        SeqTrace { video: 1, s: vec![2.0, 2.0, 2.0, 2.0, 2.0] },
    ];
    let log = BounceLog { videos: vec![vec![bounce(6)], vec![bounce(20)]] };
    let r = uncertainty_report(&traces, Some(&log), 5).unwrap();
    let q = &r.sequences[0];
    assert_eq!(q.u, vec![0.0, 1.0, 0.0, 0.0, 0.5]);
    assert_eq!(q.near_bounce, vec![true, true, true, false, false]);
    assert!((q.near_mean.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(q.far_mean, Some(0.25));
    assert_eq!(r.sequences[1].near_mean, None);
    let t = r.sign_test.as_ref().unwrap();
    assert_eq!((t.positive, t.negative, t.ties), (1, 0, 0));
    assert!((t.p_value - 0.5).abs() < 1e-12);
    let bare = uncertainty_report(&traces, None, 5).unwrap();
    assert!(bare.sign_test.is_none() && bare.pooled_near.is_none());
    assert!(uncertainty_report(&[], None, 5).is_err());
}

#[test]
fn sign_test_tail() {
    assert!((sign_test(10, 0, 3).p_value - 0.5f64.powi(10)).abs() < 1e-12);
    assert_eq!(sign_test(0, 4, 0).p_value, 1.0);
    assert!((sign_test(7, 3, 0).p_value - 176.0 / 1024.0).abs() < 1e-12);
}

#[test]
fn minmax_handles_constant_traces() {
    assert_eq!(minmax_normalize(&[3.0, 3.0]), vec![0.0, 0.0]);
    assert_eq!(minmax_normalize(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
}

#[test]
fn reports_are_written_deterministically() {
    let (f, truth) = toy();
    let scored = score_futures(&f, &truth, &[0, 1], 5, true).unwrap();
    let traces = best_traces(&scored, 3, Selection::Ssim);
    let log = BounceLog { videos: vec![vec![bounce(5)], vec![bounce(6)]] };
    let reports = Reports {
        metrics: Some(best_of_k(&scored, 3, Selection::Ssim).unwrap()),
        diversity: Some(diversity_report(&scored, &[1, 2, 3], Selection::Ssim).unwrap()),
        uncertainty: Some(uncertainty_report(&traces, Some(&log), 5).unwrap()),
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let wa = emit_reports(&reports, a.path()).unwrap();
    let wb = emit_reports(&reports, b.path()).unwrap();
    assert_eq!(wa.len(), 9);
    for (x, y) in wa.iter().zip(&wb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
    let metrics = std::fs::read_to_string(a.path().join(METRICS_FILE)).unwrap();
    assert!(metrics.starts_with("video,frame,ssim,psnr\n0,5,1.0,100.0\n"));
    assert!(metrics.trim_end().ends_with("all,all,1.0,100.0"));
    let summary = std::fs::read_to_string(a.path().join(SUMMARY_FILE)).unwrap();
    assert!(summary.contains("mean_ssim=1.0\n") && summary.contains("sign_p="));

    let c = tempfile::tempdir().unwrap();
    let plots = render_plots(a.path(), c.path()).unwrap();
    assert_eq!(plots.len(), 3);
    assert_eq!(std::fs::read(&plots[2]).unwrap(), std::fs::read(a.path().join(UNCERTAINTY_PLOT)).unwrap());
}

#[test]
fn empty_reports_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(emit_reports(&Reports::default(), &out).unwrap().is_empty());
    assert!(!out.exists());
}

#[test]
fn malformed_csv_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(BEST_OF_K_FILE), "k,best_score\n1,abc\n").unwrap();
    assert!(matches!(render_plots(dir.path(), dir.path()), Err(crate::NuqError::Format { .. })));
}
