//! Training patches: crops guaranteed to contain a positive pixel, random
//! quarter-turn rotations and an endless seeded batch stream.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slidens_tensor::{Scalar, Tensor};

use crate::error::{Error, Result};
use crate::scene::{apply_norm, select_bands, BandSetting, BandStack, NormStats, Scene};

/// A square training crop.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch<T> {
    pub size: usize,
    /// `C x size x size`, channel-major.
    pub stack: Vec<T>,
    pub label: Vec<u8>,
    pub valid: Vec<u8>,
    pub source_scene: String,
    /// Top-left corner of the crop in the scene, as (row, col).
    pub origin: (usize, usize),
}

impl<T> Patch<T> {
    pub fn channels(&self) -> usize {
        self.stack.len() / (self.size * self.size)
    }

    pub fn has_valid_positive(&self) -> bool {
        self.label.iter().zip(&self.valid).any(|(&l, &v)| l == 1 && v == 1)
    }
}

/// A scene prepared for sampling: band stack (optionally normalised) plus
/// the index of every valid positive pixel.
#[derive(Clone, Debug)]
pub struct SampleSource<T> {
    id: String,
    stack: BandStack<T>,
    label: Vec<u8>,
    valid: Vec<u8>,
    positives: Vec<usize>,
}

impl<T: Scalar> SampleSource<T> {
    pub fn new(scene: &Scene, setting: BandSetting, stats: Option<&NormStats>) -> Self {
        let mut stack = select_bands::<T>(scene, setting);
        if let Some(stats) = stats {
            apply_norm(&mut stack, stats, scene.valid());
        }
        let positives = scene
            .label()
            .iter()
            .zip(scene.valid())
            .enumerate()
            .filter(|(_, (&l, &v))| l == 1 && v == 1)
            .map(|(i, _)| i)
            .collect();
        Self {
            id: scene.id().to_string(),
            stack,
            label: scene.label().to_vec(),
            valid: scene.valid().to_vec(),
            positives,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn channels(&self) -> usize {
        self.stack.channels()
    }

    pub fn positive_count(&self) -> usize {
        self.positives.len()
    }

    /// Errors unless a `size` crop containing a positive can be drawn.
    pub fn check_eligible(&self, size: usize) -> Result<()> {
        if self.stack.height < size || self.stack.width < size {
            return Err(Error::invalid(format!(
                "scene {} ({}×{}) is smaller than crop {size}",
                self.id, self.stack.height, self.stack.width
            )));
        }
        if self.positives.is_empty() {
            return Err(Error::invalid(format!("scene {} has no valid positive pixel", self.id)));
        }
        Ok(())
    }

    /// Picks a valid positive pixel uniformly, then a window uniformly among
    /// the in-bounds `size x size` windows containing it.
    pub fn crop<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Patch<T>> {
        self.check_eligible(size)?;
        let (h, w) = (self.stack.height, self.stack.width);
        let anchor = self.positives[rng.gen_range(0..self.positives.len())];
        let (r, c) = (anchor / w, anchor % w);
        let row = rng.gen_range(r.saturating_sub(size - 1)..=r.min(h - size));
        let col = rng.gen_range(c.saturating_sub(size - 1)..=c.min(w - size));
        Ok(self.window(row, col, size))
    }

    fn window(&self, row: usize, col: usize, size: usize) -> Patch<T> {
        let w = self.stack.width;
        let copy = |src: &[u8]| -> Vec<u8> {
            (0..size).flat_map(|i| src[(row + i) * w + col..(row + i) * w + col + size].iter().copied()).collect()
        };
        let mut stack = Vec::with_capacity(self.stack.channels() * size * size);
        for ch in 0..self.stack.channels() {
            let plane = self.stack.plane(ch);
            for i in 0..size {
                stack.extend_from_slice(&plane[(row + i) * w + col..(row + i) * w + col + size]);
            }
        }
        Patch {
            size,
            stack,
            label: copy(&self.label),
            valid: copy(&self.valid),
            source_scene: self.id.clone(),
            origin: (row, col),
        }
    }
}

/// Crops raw (unnormalised) bands of `scene`; see [`SampleSource::crop`].
pub fn smart_crop<T: Scalar, R: Rng + ?Sized>(
    scene: &Scene,
    setting: BandSetting,
    size: usize,
    rng: &mut R,
) -> Result<Patch<T>> {
    if scene.height() < size || scene.width() < size {
        return Err(Error::invalid(format!(
            "scene smaller than crop: {}×{} < {size}×{size}",
            scene.height(),
            scene.width()
        )));
    }
    SampleSource::new(scene, setting, None).crop(size, rng)
}

/// Rotates one `size x size` plane by `k` counter-clockwise quarter turns.
fn rotate_plane<V: Copy>(src: &[V], size: usize, k: usize) -> Vec<V> {
    let n = size - 1;
    let mut out = Vec::with_capacity(src.len());
    for i in 0..size {
        for j in 0..size {
            let (si, sj) = match k % 4 {
                0 => (i, j),
                1 => (j, n - i),
                2 => (n - i, n - j),
                _ => (n - j, i),
            };
            out.push(src[si * size + sj]);
        }
    }
    out
}

/// Rotates every plane of the patch by `k` counter-clockwise quarter turns.
/// The origin still refers to the unrotated crop.
pub fn rotate90<T: Copy>(patch: &Patch<T>, k: usize) -> Patch<T> {
    let s = patch.size;
    let stack = patch.stack.chunks(s * s).flat_map(|p| rotate_plane(p, s, k)).collect();
    Patch {
        size: s,
        stack,
        label: rotate_plane(&patch.label, s, k),
        valid: rotate_plane(&patch.valid, s, k),
        source_scene: patch.source_scene.clone(),
        origin: patch.origin,
    }
}

/// A mini-batch laid out for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    /// `B x C x S x S`.
    pub stacks: Tensor<T>,
    pub labels: Vec<u8>,
    pub valids: Vec<u8>,
}

/// Endless deterministic stream of augmented batches.
pub struct BatchStream<'a, T> {
    sources: Vec<&'a SampleSource<T>>,
    batch_size: usize,
    size: usize,
    rng: ChaCha8Rng,
}

impl<'a, T: Scalar> BatchStream<'a, T> {
    /// Keeps the sources a `size` crop can be drawn from, warning about the
    /// others; errors if none remain.
    pub fn new(sources: &'a [SampleSource<T>], batch_size: usize, size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let eligible: Vec<_> = sources
            .iter()
            .filter(|s| match s.check_eligible(size) {
                Ok(()) => true,
                Err(e) => {
                    warn!("excluded from training: {e}");
                    false
                }
            })
            .collect();
        if eligible.is_empty() {
            return Err(Error::invalid("no training scene is eligible for cropping"));
        }
        Ok(Self { sources: eligible, batch_size, size, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn eligible(&self) -> usize {
        self.sources.len()
    }

    /// The next batch of patches: a scene drawn uniformly with replacement,
    /// a smart crop, and a rotation by a uniform `k ∈ {0, 1, 2, 3}`.
    pub fn next_patches(&mut self) -> Vec<Patch<T>> {
        (0..self.batch_size)
            .map(|_| {
                let src = self.sources[self.rng.gen_range(0..self.sources.len())];
                let patch = src.crop(self.size, &mut self.rng).expect("eligibility checked");
                let k = self.rng.gen_range(0..4);
                rotate90(&patch, k)
            })
            .collect()
    }

    pub fn next_batch(&mut self) -> Batch<T> {
        let patches = self.next_patches();
        let c = patches[0].channels();
        let s = self.size;
        let mut data = Vec::with_capacity(self.batch_size * c * s * s);
        let mut labels = Vec::with_capacity(self.batch_size * s * s);
        let mut valids = Vec::with_capacity(self.batch_size * s * s);
        for p in patches {
            data.extend(p.stack);
            labels.extend(p.label);
            valids.extend(p.valid);
        }
        Batch { stacks: Tensor::from_vec(&[self.batch_size, c, s, s], data), labels, valids }
    }
}

impl<T: Scalar> Iterator for BatchStream<'_, T> {
    type Item = Batch<T>;

    fn next(&mut self) -> Option<Batch<T>> {
        Some(self.next_batch())
    }
}
