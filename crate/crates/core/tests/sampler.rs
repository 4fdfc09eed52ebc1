use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slidens_core::sampler::{rotate90, smart_crop, BatchStream, Patch, SampleSource};
use slidens_core::scene::{BandSetting, Scene, BAND_COUNT};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn scene_with_label(h: usize, w: usize, label: Vec<u8>) -> Scene {
    let bands = (0..BAND_COUNT)
        .map(|b| (0..h * w).map(|k| (k * (b + 1)) as f32).collect())
        .collect();
    Scene::new("s", w, h, bands, label, vec![1; h * w], BTreeMap::new()).unwrap()
}

fn single_positive(h: usize, w: usize, r: usize, c: usize) -> Scene {
    let mut label = vec![0u8; h * w];
    label[r * w + c] = 1;
    scene_with_label(h, w, label)
}

/// Upper tail probability of Pearson's statistic for observed vs expected.
fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Bins `values` (all in `lo..=hi`) into ten equal-width bins.
fn bin_of(v: usize, lo: usize, hi: usize) -> usize {
    ((v - lo) * 10 / (hi - lo + 1)).min(9)
}

#[test]
fn forced_inclusion_of_the_only_positive() {
    let s = single_positive(512, 512, 300, 300);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let first: Patch<f32> = smart_crop(&s, BandSetting::S2, 256, &mut rng).unwrap();
    assert_eq!(first.size, 256);
    let src = SampleSource::<f32>::new(&s, BandSetting::S2, None);
    for _ in 0..2000 {
        let p = src.crop(256, &mut rng).unwrap();
        let (r0, c0) = p.origin;
        assert!((r0..r0 + 256).contains(&300) && (c0..c0 + 256).contains(&300));
        assert!(r0 + 256 <= 512 && c0 + 256 <= 512);
        assert_eq!(p.label[(300 - r0) * 256 + 300 - c0], 1);
        assert!(p.has_valid_positive());
    }
}

#[test]
fn crop_copies_the_right_pixels() {
    let s = single_positive(300, 280, 100, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p: Patch<f64> = smart_crop(&s, BandSetting::S1S2, 64, &mut rng).unwrap();
    assert_eq!(p.channels(), 11);
    let (r0, c0) = p.origin;
    for (ch, &band) in BandSetting::S1S2.indices().iter().enumerate() {
        for i in [0, 17, 63] {
            for j in [0, 5, 63] {
                let want = s.band(band)[(r0 + i) * 280 + c0 + j] as f64;
                assert_eq!(p.stack[ch * 64 * 64 + i * 64 + j], want);
            }
        }
    }
}

#[test]
fn small_or_empty_scenes_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = smart_crop::<f32, _>(&single_positive(200, 200, 5, 5), BandSetting::S1, 256, &mut rng).unwrap_err();
    assert!(err.to_string().contains("scene smaller than crop"), "{err}");
    let empty = scene_with_label(300, 300, vec![0; 300 * 300]);
    assert!(smart_crop::<f32, _>(&empty, BandSetting::S1, 256, &mut rng).is_err());
}

#[test]
fn window_is_uniform_given_the_pixel() {
    // with one positive at (300, 300) the origin range is 45..=256 per axis
    let s = single_positive(512, 512, 300, 300);
    let src = SampleSource::<f32>::new(&s, BandSetting::S2, None);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (lo, hi) = (45, 256);
    let mut rows = [0.0; 10];
    let mut cols = [0.0; 10];
    let draws = 10_000;
    for _ in 0..draws {
        let p = src.crop(256, &mut rng).unwrap();
        rows[bin_of(p.origin.0, lo, hi)] += 1.0;
        cols[bin_of(p.origin.1, lo, hi)] += 1.0;
    }
    let mut expected = [0.0; 10];
    for v in lo..=hi {
        expected[bin_of(v, lo, hi)] += draws as f64 / (hi - lo + 1) as f64;
    }
    let (pr, pc) = (chi_square_p(&rows, &expected), chi_square_p(&cols, &expected));
    assert!(pr > 0.001 && pc > 0.001, "p-values {pr} {pc}");
}

/// Exact law of the row origin when every pixel is positive: a uniform row
/// `r`, then a uniform origin among those whose window covers `r`.
fn all_positive_origin_law(n: usize, size: usize) -> Vec<f64> {
    let mut p = vec![0.0; n - size + 1];
    for r in 0..n {
        let lo = r.saturating_sub(size - 1);
        let hi = r.min(n - size);
        for o in lo..=hi {
            p[o] += 1.0 / n as f64 / (hi - lo + 1) as f64;
        }
    }
    p
}

#[test]
fn all_positive_origins_follow_the_two_stage_law() {
    let s = scene_with_label(512, 512, vec![1; 512 * 512]);
    let law = all_positive_origin_law(512, 256);
    assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let draws = 10_000;
    let mut expected = [0.0; 10];
    for (o, p) in law.iter().enumerate() {
        expected[bin_of(o, 0, 256)] += p * draws as f64;
    }
    let src = SampleSource::<f32>::new(&s, BandSetting::S2, None);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rows = [0.0; 10];
    let mut cols = [0.0; 10];
    for _ in 0..draws {
        let p = src.crop(256, &mut rng).unwrap();
        rows[bin_of(p.origin.0, 0, 256)] += 1.0;
        cols[bin_of(p.origin.1, 0, 256)] += 1.0;
    }
    let (pr, pc) = (chi_square_p(&rows, &expected), chi_square_p(&cols, &expected));
    assert!(pr > 0.001 && pc > 0.001, "p-values {pr} {pc}");
    // the law is not flat: edge origins are favoured over interior ones
    assert!(law[0] > 4.0 * law[128]);
}

fn marker_patch(size: usize) -> Patch<f32> {
    // channel 0 encodes position; the label marks one off-centre corner
    let mut label = vec![0u8; size * size];
    label[1] = 1;
    let stack = (0..2 * size * size).map(|v| v as f32).collect();
    Patch { size, stack, label, valid: vec![1; size * size], source_scene: "m".into(), origin: (0, 0) }
}

#[test]
fn rotation_group_laws() {
    let p = marker_patch(5);
    assert_eq!(rotate90(&p, 0), p);
    let mut q = p.clone();
    for _ in 0..4 {
        q = rotate90(&q, 1);
    }
    assert_eq!(q, p);
    assert_eq!(rotate90(&p, 2), rotate90(&rotate90(&p, 1), 1));
    assert_eq!(rotate90(&p, 3), rotate90(&rotate90(&p, 2), 1));
    assert_ne!(rotate90(&p, 1), p);
}

#[test]
fn planes_rotate_together() {
    let p = marker_patch(6);
    for k in 0..4 {
        let q = rotate90(&p, k);
        // the marker pixel's band values travel with its label
        let idx = q.label.iter().position(|&l| l == 1).unwrap();
        assert_eq!(q.stack[idx], 1.0);
        assert_eq!(q.stack[36 + idx], 37.0);
    }
}

#[test]
fn batch_stream_is_deterministic_and_sized() {
    let scenes = [single_positive(300, 300, 10, 290), single_positive(280, 260, 150, 20)];
    let sources: Vec<SampleSource<f32>> = scenes.iter().map(|s| SampleSource::new(s, BandSetting::S2, None)).collect();
    let a: Vec<_> = BatchStream::new(&sources, 4, 256, 9).unwrap().take(10).collect();
    let b: Vec<_> = BatchStream::new(&sources, 4, 256, 9).unwrap().take(10).collect();
    assert_eq!(a, b);
    for batch in &a {
        assert_eq!(batch.stacks.shape(), &[4, 2, 256, 256]);
        assert_eq!(batch.labels.len(), 4 * 256 * 256);
    }
    let c: Vec<_> = BatchStream::new(&sources, 4, 256, 10).unwrap().take(10).collect();
    assert_ne!(a, c);
}

#[test]
fn every_patch_of_a_long_stream_has_a_positive() {
    let scenes = [single_positive(300, 300, 299, 0), single_positive(256, 256, 128, 128)];
    let sources: Vec<SampleSource<f32>> = scenes.iter().map(|s| SampleSource::new(s, BandSetting::S2, None)).collect();
    let mut stream = BatchStream::new(&sources, 4, 256, 5).unwrap();
    for _ in 0..1000 {
        for p in stream.next_patches() {
            assert_eq!(p.label.iter().zip(&p.valid).filter(|(&l, &v)| l == 1 && v == 1).count(), 1);
        }
    }
}

#[test]
fn ineligible_scenes_are_dropped() {
    let scenes = [single_positive(100, 100, 5, 5), scene_with_label(300, 300, vec![0; 300 * 300])];
    let sources: Vec<SampleSource<f32>> = scenes.iter().map(|s| SampleSource::new(s, BandSetting::S1, None)).collect();
    assert!(BatchStream::new(&sources, 4, 256, 0).is_err());
    let mut all = sources.clone();
    all.push(SampleSource::new(&single_positive(256, 256, 0, 0), BandSetting::S1, None));
    assert_eq!(BatchStream::new(&all, 4, 256, 0).unwrap().eligible(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crops_always_hold_a_valid_positive(
        h in 16usize..48, w in 16usize..48, size in 4usize..16,
        label_seed in any::<u64>(), seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut lr = ChaCha8Rng::seed_from_u64(label_seed);
        let mut label: Vec<u8> = (0..h * w).map(|_| u8::from(lr.gen_bool(0.01))).collect();
        label[lr.gen_range(0..h * w)] = 1;
        let valid: Vec<u8> = (0..h * w).map(|i| u8::from(label[i] == 1 || lr.gen_bool(0.8))).collect();
        let bands = (0..BAND_COUNT).map(|_| vec![0.0f32; h * w]).collect();
        let s = Scene::new("p", w, h, bands, label, valid, BTreeMap::new()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let p: Patch<f32> = smart_crop(&s, BandSetting::S2, size, &mut rng).unwrap();
            prop_assert!(p.has_valid_positive());
            prop_assert!(p.origin.0 + size <= h && p.origin.1 + size <= w);
        }
    }
}
