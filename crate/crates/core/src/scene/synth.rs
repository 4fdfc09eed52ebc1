//! Seeded synthetic case studies with the statistical traits of the real
//! scenes: rare elliptical landslides that darken dNDVI strongly and shift
//! SAR backscatter weakly, water bodies that mimic the optical signature,
//! and SAR change clutter unrelated to landslides.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Scene, BAND_COUNT};
use crate::error::{Error, Result};

pub const MIN_POSITIVE_FRACTION: f64 = 0.001;
pub const MAX_POSITIVE_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    /// Inclusive range of landslide blobs per scene.
    pub blob_count: (usize, usize),
    /// Range of ellipse semi-axes in pixels.
    pub blob_radius: (f64, f64),
    /// Target fraction of the scene covered by water.
    pub water_fraction: f64,
    /// Speckle standard deviation of every SAR band, in dB.
    pub sar_noise: f64,
    /// Mean backscatter change inside landslides, in dB.
    pub sar_signal: f64,
    /// Number of non-landslide SAR change patches.
    pub sar_clutter: usize,
    /// dNDVI drop inside landslides.
    pub optical_signal: f64,
    /// dNDVI drop over water, as a fraction of `optical_signal`.
    pub water_dndvi: f64,
    pub optical_noise: f64,
    /// Approximate fraction of layover plus shadow pixels (SAR nodata).
    pub nodata_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            height: 256,
            width: 256,
            blob_count: (3, 8),
            blob_radius: (4.0, 12.0),
            water_fraction: 0.03,
            sar_noise: 1.5,
            sar_signal: 1.5,
            sar_clutter: 10,
            optical_signal: 0.35,
            water_dndvi: 0.5,
            optical_noise: 0.05,
            nodata_fraction: 0.01,
        }
    }
}

impl SynthSpec {
    /// The default spec at another size. Below 256 pixels the landslide,
    /// lake and clutter counts and sizes shrink so small scenes stay within
    /// the positive-fraction bounds.
    pub fn sized(height: usize, width: usize) -> Self {
        let s = ((height.min(width)) as f64 / 256.0).min(1.0);
        let d = Self::default();
        Self {
            height,
            width,
            blob_count: (((3.0 * s).round() as usize).max(1), ((8.0 * s).round() as usize).max(3)),
            blob_radius: ((4.0 * s).max(2.0), (12.0 * s).max(5.0)),
            sar_clutter: ((10.0 * s).round() as usize).max(2),
            ..d
        }
    }
}

#[derive(Clone, Copy)]
struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize, r: (f64, f64)) -> Self {
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        Self {
            cy: rng.gen_range(0.0..h as f64),
            cx: rng.gen_range(0.0..w as f64),
            a: rng.gen_range(r.0..=r.1),
            b: rng.gen_range(r.0..=r.1),
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    fn contains(&self, y: usize, x: usize) -> bool {
        let dy = y as f64 + 0.5 - self.cy;
        let dx = x as f64 + 0.5 - self.cx;
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        u * u + v * v <= 1.0
    }

    fn paint(&self, mask: &mut [u8], h: usize, w: usize, value: u8) -> usize {
        let reach = self.a.max(self.b).ceil() as isize + 1;
        let (y0, y1) = ((self.cy as isize - reach).max(0), (self.cy as isize + reach).min(h as isize - 1));
        let (x0, x1) = ((self.cx as isize - reach).max(0), (self.cx as isize + reach).min(w as isize - 1));
        let mut n = 0;
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(y as usize, x as usize) {
                    mask[y as usize * w + x as usize] = value;
                    n += 1;
                }
            }
        }
        n
    }
}

/// Smooth value noise in roughly [-1, 1] with feature size `cell` pixels.
fn smooth_field(rng: &mut ChaCha8Rng, h: usize, w: usize, cell: usize) -> Vec<f64> {
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let grid: Vec<f64> = (0..gh * gw).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fade = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let gy = y as f64 / cell as f64;
        let (iy, ty) = (gy.floor() as usize, fade(gy.fract()));
        for x in 0..w {
            let gx = x as f64 / cell as f64;
            let (ix, tx) = (gx.floor() as usize, fade(gx.fract()));
            let g = |r: usize, c: usize| grid[r * gw + c];
            let top = g(iy, ix) * (1.0 - tx) + g(iy, ix + 1) * tx;
            let bot = g(iy + 1, ix) * (1.0 - tx) + g(iy + 1, ix + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let i = ((v.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
    v[i]
}

/// Generates one scene; identical `(seed, spec)` give bit-identical output.
pub fn synth_case_study(seed: u64, spec: &SynthSpec) -> Result<Scene> {
    let (h, w) = (spec.height, spec.width);
    let n = h * w;
    if n == 0 {
        return Err(Error::invalid("synthetic scene must have non-zero size"));
    }
    if spec.blob_count.1 == 0 || spec.blob_count.0 > spec.blob_count.1 {
        return Err(Error::invalid(format!(
            "blob count range {:?} yields zero positive pixels",
            spec.blob_count
        )));
    }
    if !(spec.blob_radius.0 > 0.0 && spec.blob_radius.0 <= spec.blob_radius.1) {
        return Err(Error::invalid(format!("invalid blob radius range {:?}", spec.blob_radius)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    // terrain
    let e1 = smooth_field(&mut rng, h, w, 64);
    let e2 = smooth_field(&mut rng, h, w, 16);
    let elevation: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| 600.0 + 250.0 * a + 40.0 * b).collect();
    let mut slope = vec![0.0; n];
    let mut grad_x = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let at = |yy: usize, xx: usize| elevation[yy * w + xx];
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let gx = (at(y, xr) - at(y, xl)) / (10.0 * (xr - xl).max(1) as f64);
            let gy = (at(yd, x) - at(yu, x)) / (10.0 * (yd - yu).max(1) as f64);
            slope[y * w + x] = (gx * gx + gy * gy).sqrt().atan().to_degrees();
            grad_x[y * w + x] = gx;
        }
    }

    // water bodies, some of which the land-cover map misses
    let mut water = vec![0u8; n];
    let mut water_mapped = vec![0u8; n];
    if spec.water_fraction > 0.0 {
        let target = (spec.water_fraction * n as f64).ceil() as usize;
        let mut covered = 0;
        let mut guard = 0;
        while covered < target && guard < 1000 {
            guard += 1;
            let r = (spec.blob_radius.1 * 0.8).max(2.0);
            let lake = Ellipse::random(&mut rng, h, w, (r, 2.0 * r));
            let mapped = rng.gen_bool(0.5);
            lake.paint(&mut water, h, w, 1);
            if mapped {
                lake.paint(&mut water_mapped, h, w, 1);
            }
            covered = water.iter().filter(|&&v| v == 1).count();
        }
    }

    // landslides: connected ellipses clear of water
    let mut label = vec![0u8; n];
    let mut accepted = false;
    for _ in 0..200 {
        label.fill(0);
        let count = rng.gen_range(spec.blob_count.0..=spec.blob_count.1).max(1);
        let mut placed = 0;
        let mut tries = 0;
        while placed < count && tries < 50 * count {
            tries += 1;
            let e = Ellipse::random(&mut rng, h, w, spec.blob_radius);
            let mut tmp = vec![0u8; n];
            e.paint(&mut tmp, h, w, 1);
            if tmp.iter().zip(&water).any(|(&t, &wt)| t == 1 && wt == 1) {
                continue;
            }
            if tmp.iter().all(|&t| t == 0) {
                continue;
            }
            e.paint(&mut label, h, w, 1);
            placed += 1;
        }
        let frac = label.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
        if (MIN_POSITIVE_FRACTION..=MAX_POSITIVE_FRACTION).contains(&frac) {
            accepted = true;
            break;
        }
    }
    if !accepted {
        return Err(Error::invalid(format!(
            "synthetic spec cannot place landslides covering {MIN_POSITIVE_FRACTION}..{MAX_POSITIVE_FRACTION} of a {h}x{w} scene"
        )));
    }
    if label.iter().all(|&v| v == 0) {
        return Err(Error::invalid("synthetic spec yields zero positive pixels"));
    }

    // SAR change clutter outside landslides
    let mut clutter = vec![0u8; n];
    for _ in 0..spec.sar_clutter {
        let e = Ellipse::random(&mut rng, h, w, spec.blob_radius);
        e.paint(&mut clutter, h, w, 1);
    }
    for (c, &l) in clutter.iter_mut().zip(&label) {
        if l == 1 {
            *c = 0;
        }
    }

    // layover (slopes facing the sensor) and shadow (facing away)
    let (mut layover, mut shadow) = (vec![0u8; n], vec![0u8; n]);
    if spec.nodata_fraction > 0.0 {
        let q = spec.nodata_fraction / 2.0;
        let hi = quantile(&grad_x, 1.0 - q);
        let lo = quantile(&grad_x, q);
        for i in 0..n {
            layover[i] = u8::from(grad_x[i] > hi);
            shadow[i] = u8::from(grad_x[i] < lo);
        }
    }

    let texture = smooth_field(&mut rng, h, w, 24);
    let veg = smooth_field(&mut rng, h, w, 32);
    let canopy = smooth_field(&mut rng, h, w, 20);
    let cover = smooth_field(&mut rng, h, w, 40);
    let greening = smooth_field(&mut rng, h, w, 48);
    let climate = [4.0, 7.0, 8.0, 14.0, 15.0, 26.0, 27.0][rng.gen_range(0..7)];

    let mut bands: Vec<Vec<f32>> = (0..BAND_COUNT).map(|_| vec![0.0; n]).collect();
    let mut valid = vec![1u8; n];
    for i in 0..n {
        let mut noise = || std_normal.sample(&mut rng);
        let lia = 39.0 - grad_x[i].atan().to_degrees() + 0.5 * noise();
        let is_water = water[i] == 1;
        let (base_vv, base_vh) = if is_water {
            (-22.0, -28.0)
        } else {
            let t = texture[i] + 0.3 * veg[i];
            (-10.0 + 2.0 * t - 0.05 * (lia - 39.0), -17.0 + 2.5 * t)
        };
        let change = if label[i] == 1 || clutter[i] == 1 {
            spec.sar_signal * (1.0 + 0.2 * noise())
        } else {
            0.0
        };
        let pre_vv = base_vv + spec.sar_noise * noise();
        let post_vv = base_vv + change + spec.sar_noise * noise();
        let pre_vh = base_vh + spec.sar_noise * noise();
        let post_vh = base_vh - change + spec.sar_noise * noise();

        let dndvi = if label[i] == 1 {
            -spec.optical_signal + spec.optical_noise * noise()
        } else if is_water {
            -spec.water_dndvi * spec.optical_signal + spec.optical_noise * noise()
        } else {
            (0.03 + 0.02 * greening[i] + spec.optical_noise * noise()).max(0.0)
        };

        let land_cover = if water_mapped[i] == 1 {
            5.0
        } else if cover[i] < -0.5 {
            1.0
        } else if cover[i] < 0.1 {
            2.0
        } else if cover[i] < 0.6 {
            3.0
        } else {
            4.0
        };
        let tree = if is_water || land_cover != 2.0 { 0.0 } else { 15.0 + 8.0 * canopy[i] };

        let distorted = layover[i] == 1 || shadow[i] == 1;
        let sar = |v: f64| if distorted { f32::NAN } else { v as f32 };
        bands[0][i] = sar(pre_vv);
        bands[1][i] = sar(post_vv);
        bands[2][i] = sar(post_vv - pre_vv);
        bands[3][i] = sar(pre_vh);
        bands[4][i] = sar(post_vh);
        bands[5][i] = sar(post_vh - pre_vh);
        bands[6][i] = layover[i] as f32;
        bands[7][i] = shadow[i] as f32;
        bands[8][i] = lia as f32;
        bands[9][i] = elevation[i] as f32;
        bands[10][i] = slope[i] as f32;
        bands[11][i] = climate as f32;
        bands[12][i] = tree as f32;
        bands[13][i] = land_cover as f32;
        bands[14][i] = dndvi as f32;
        if distorted {
            valid[i] = 0;
        }
    }

    let mut meta = BTreeMap::new();
    meta.insert("source".into(), "synthetic".into());
    meta.insert("seed".into(), seed.into());
    meta.insert("resolution_m".into(), 10.into());
    meta.insert("event_date".into(), "2020-01-01".into());
    Scene::new(format!("synth_{seed}"), w, h, bands, label, valid, meta)
}
