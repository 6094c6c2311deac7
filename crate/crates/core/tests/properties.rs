use antispoof::artifact_gen::{band_indices, fixed_freq_swap, swap_band, BandSpec};
use antispoof::audio_io::{peak_normalize, Waveform};
use antispoof::metrics::{auc, ScoreSet};
use antispoof::spectral::{dft_forward, dft_inverse, freq_to_index};
use proptest::prelude::*;

fn waveform(len: std::ops::Range<usize>) -> impl Strategy<Value = Waveform> {
    prop::collection::vec(-1.0f64..1.0, len).prop_map(|s| Waveform::new(s, 16_000).unwrap())
}

fn score_set() -> impl Strategy<Value = Vec<(f64, u8)>> {
    prop::collection::vec((-5i32..5, 0u8..2), 2..30)
        .prop_map(|v| v.into_iter().map(|(s, l)| (s as f64 * 0.25, l)).collect())
        .prop_filter("both classes", |v: &Vec<(f64, u8)>| {
            v.iter().any(|x| x.1 == 1) && v.iter().any(|x| x.1 == 0)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_and_round_trip(w in waveform(2..600)) {
        let s = dft_forward(&w).unwrap();
        let n = w.len();
        let time: f64 = w.samples.iter().map(|x| x * x).sum();
        let freq: f64 = s.bins().iter().enumerate().map(|(k, b)| {
            let mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
            b.norm_sqr() * if mirrored { 2.0 } else { 1.0 }
        }).sum::<f64>() / n as f64;
        prop_assert!((time - freq).abs() <= 1e-9 * time.max(1e-300));
        let back = dft_inverse(&s);
        for (a, b) in back.samples.iter().zip(&w.samples) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn freq_to_index_is_monotone(a in 0.0f64..8000.0, b in 0.0f64..8000.0, n in 2usize..50_000) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let i = freq_to_index(lo, 16_000, n).unwrap();
        let j = freq_to_index(hi, 16_000, n).unwrap();
        prop_assert!(i <= j);
        prop_assert!(j <= n / 2);
    }

    #[test]
    fn peak_normalize_is_idempotent(w in waveform(1..200)) {
        let once = peak_normalize(&w);
        let twice = peak_normalize(&once);
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
        if w.peak() > 0.0 {
            prop_assert!((once.peak() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps(v in score_set()) {
        let base = auc(&ScoreSet::new(v.clone()).unwrap()).unwrap();
        let mapped = ScoreSet::new(v.iter().map(|&(s, l)| ((s * 3.0).exp() + 2.0, l))).unwrap();
        prop_assert_eq!(base, auc(&mapped).unwrap());
    }

    #[test]
    fn flipping_labels_mirrors_auc(v in score_set()) {
        let a = auc(&ScoreSet::new(v.clone()).unwrap()).unwrap();
        let b = auc(&ScoreSet::new(v.iter().map(|&(s, l)| (s, 1 - l))).unwrap()).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn band_swap_leaves_other_bins(fake in waveform(400..401), real in waveform(400..401),
                                   start in 100.0f64..6000.0, width in 50.0f64..1500.0) {
        let band = BandSpec::new(start, (start + width).min(8000.0)).unwrap();
        let sf = dft_forward(&fake).unwrap();
        let sr = dft_forward(&real).unwrap();
        let idx = band_indices(&band, 16_000, 400).unwrap();
        let out = swap_band(&sf, &sr, idx).unwrap();
        for k in 0..sf.bins().len() {
            let expect = if idx.contains(k) { sr.bins()[k] } else { sf.bins()[k] };
            prop_assert_eq!(out.bins()[k], expect);
        }
    }

    #[test]
    fn self_swap_is_peak_normalization(w in waveform(64..300), start in 100.0f64..4000.0) {
        let band = BandSpec::new(start, start + 700.0).unwrap();
        let out = fixed_freq_swap(&w, &w, &band).unwrap();
        let expect = peak_normalize(&w);
        for (a, b) in out.samples.iter().zip(&expect.samples) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
