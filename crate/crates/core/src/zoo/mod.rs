//! Registry of nine fully convolutional segmentation architectures sharing
//! one contract: `(N, C, H, W)` inputs map to `(N, 1, H, W)` logits.

mod archs;
mod encoder;
mod layers;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use slidens_tensor::{Graph, ParamStore, Scalar, Tensor, Var};

pub use archs::{ASPP_RATES, DEEPLAB_OUTPUT_STRIDE, PPM_BINS, PSP_DEPTH};

use crate::error::{Error, Result};
use crate::probability::{ProbabilityMap, Provenance};
use crate::scene::{apply_norm, select_bands, BandSetting, NormStats, Scene};
use crate::util::write_json_atomic;
use archs::Net;
use layers::Builder;

pub const DEFAULT_WIDTH: usize = 16;
pub const DEFAULT_DEPTH: usize = 4;
pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArchName {
    Unet,
    #[serde(rename = "UnetPP")]
    UnetPlusPlus,
    #[serde(rename = "MANet")]
    MaNet,
    Linknet,
    #[serde(rename = "FPN")]
    Fpn,
    #[serde(rename = "PSPNet")]
    PspNet,
    #[serde(rename = "PAN")]
    Pan,
    DeepLabV3,
    DeepLabV3Plus,
}

impl ArchName {
    pub const ALL: [ArchName; 9] = [
        Self::Unet,
        Self::UnetPlusPlus,
        Self::MaNet,
        Self::Linknet,
        Self::Fpn,
        Self::PspNet,
        Self::Pan,
        Self::DeepLabV3,
        Self::DeepLabV3Plus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Unet => "Unet",
            Self::UnetPlusPlus => "UnetPP",
            Self::MaNet => "MANet",
            Self::Linknet => "Linknet",
            Self::Fpn => "FPN",
            Self::PspNet => "PSPNet",
            Self::Pan => "PAN",
            Self::DeepLabV3 => "DeepLabV3",
            Self::DeepLabV3Plus => "DeepLabV3Plus",
        }
    }
}

impl fmt::Display for ArchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchName {
    type Err = Error;

    /// Case-insensitive; also accepts the usual spellings `Unet++`,
    /// `MA-Net`, `PSP-Net` and `DeepLabV3+`.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_ascii_lowercase();
        let key = key.replace('+', "p").replace("plus", "p");
        let found = Self::ALL.into_iter().find(|a| {
            let canon = a.name().to_ascii_lowercase().replace("plus", "p");
            canon == key
        });
        found.ok_or_else(|| Error::UnknownName {
            kind: "architecture",
            name: s.to_string(),
            valid: Self::ALL.iter().map(|a| a.name()).collect(),
        })
    }
}

/// Architecture plus the hyperparameters that fix its parameter shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: ArchName,
    pub in_channels: usize,
    pub width: usize,
    pub depth: usize,
}

impl ArchSpec {
    pub const VALID_IN_CHANNELS: [usize; 4] = [2, 9, 11, 15];

    pub fn new(name: ArchName, in_channels: usize) -> Self {
        Self { name, in_channels, width: DEFAULT_WIDTH, depth: DEFAULT_DEPTH }
    }

    pub fn for_setting(name: ArchName, setting: BandSetting) -> Self {
        Self::new(name, setting.channels())
    }

    pub fn with_size(mut self, width: usize, depth: usize) -> Self {
        self.width = width;
        self.depth = depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !Self::VALID_IN_CHANNELS.contains(&self.in_channels) {
            return Err(Error::invalid(format!(
                "in_channels must be one of {:?}, got {}",
                Self::VALID_IN_CHANNELS,
                self.in_channels
            )));
        }
        if self.width < 4 || !self.width.is_multiple_of(2) {
            return Err(Error::invalid(format!("width must be an even number ≥ 4, got {}", self.width)));
        }
        if !(3..=6).contains(&self.depth) {
            return Err(Error::invalid(format!("depth must be between 3 and 6, got {}", self.depth)));
        }
        Ok(())
    }

    /// Spatial sizes must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.depth
    }
}

/// A built network and its parameters.
pub struct Model<T: Scalar> {
    spec: ArchSpec,
    seed: u64,
    params: ParamStore<T>,
    net: Net,
}

/// Builds `spec` with parameters drawn deterministically from `seed`.
pub fn build_model<T: Scalar>(spec: ArchSpec, seed: u64) -> Result<Model<T>> {
    spec.validate()?;
    let mut params = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = {
        let mut b = Builder::new(&mut params, &mut rng);
        Net::build(spec.name, &mut b, spec.in_channels, spec.width, spec.depth)
    };
    Ok(Model { spec, seed, params, net })
}

impl<T: Scalar> fmt::Debug for Model<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("spec", &self.spec)
            .field("seed", &self.seed)
            .field("param_count", &self.param_count())
            .finish()
    }
}

impl<T: Scalar> Model<T> {
    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    /// Errors unless `shape` is `(N, in_channels, H, W)` with `H`, `W`
    /// positive multiples of `2^depth`.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 {
            return Err(Error::invalid(format!("expected an N×C×H×W input, got shape {shape:?}")));
        }
        if shape[1] != self.spec.in_channels {
            return Err(Error::invalid(format!(
                "{} was built for {} input channels, got {}",
                self.spec.name, self.spec.in_channels, shape[1]
            )));
        }
        let d = self.spec.divisor();
        if shape[2] == 0 || shape[3] == 0 || !shape[2].is_multiple_of(d) || !shape[3].is_multiple_of(d) {
            return Err(Error::invalid(format!(
                "spatial size {}×{} is not a positive multiple of {d}",
                shape[2], shape[3]
            )));
        }
        Ok(())
    }

    /// Records the forward pass on `g`. `p` must come from
    /// `g.params(self.params())`.
    pub fn forward_on(&self, g: &mut Graph<T>, p: &[Var], x: Var) -> Var {
        self.net.fwd(g, p, x)
    }

    /// Logits for a batch, without recording gradients.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x.shape())?;
        let mut g = Graph::inference();
        let p = g.params(&self.params);
        let xv = g.input(x.clone());
        let y = self.forward_on(&mut g, &p, xv);
        Ok(g.value(y).clone())
    }
}

/// Maps an index of a padded axis back into `0..n` by mirroring about the
/// edges (without repeating the edge sample).
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Tile origins along an axis of length `n`, and the padded length.
fn tile_origins(n: usize, tile: usize, stride: usize) -> (Vec<usize>, usize) {
    if n <= tile {
        return (vec![0], tile);
    }
    let count = (n - tile).div_ceil(stride) + 1;
    let origins: Vec<usize> = (0..count).map(|i| i * stride).collect();
    let padded = origins[count - 1] + tile;
    (origins, padded)
}

/// Full-scene landslide probabilities.
///
/// The normalised band stack is reflect-padded on the bottom and right so
/// that `tile`-sized windows at multiples of `stride` cover it, every window
/// is passed through the model and the logistic function, overlapping
/// contributions are averaged and the padding is cropped. Pixels outside the
/// scene's valid mask are set to 0.
pub fn predict_scene<T: Scalar>(
    model: &Model<T>,
    scene: &Scene,
    setting: BandSetting,
    stats: &NormStats,
    tile: usize,
    stride: usize,
) -> Result<ProbabilityMap> {
    if setting.channels() != model.spec.in_channels {
        return Err(Error::invalid(format!(
            "setting {setting} has {} channels but the model expects {}",
            setting.channels(),
            model.spec.in_channels
        )));
    }
    if tile == 0 || !tile.is_multiple_of(model.spec.divisor()) {
        return Err(Error::invalid(format!("tile {tile} is not a positive multiple of {}", model.spec.divisor())));
    }
    if stride == 0 || stride > tile {
        return Err(Error::invalid(format!("stride must be in 1..={tile}, got {stride}")));
    }
    let (h, w) = (scene.height(), scene.width());
    let mut stack = select_bands::<T>(scene, setting);
    apply_norm(&mut stack, stats, scene.valid());
    let c = stack.channels();
    let (rows, ph) = tile_origins(h, tile, stride);
    let (cols, pw) = tile_origins(w, tile, stride);
    let mut sum = vec![0.0f64; ph * pw];
    let mut count = vec![0u32; ph * pw];
    let mut buf = vec![T::zero(); c * tile * tile];
    for &r0 in &rows {
        for &c0 in &cols {
            for ch in 0..c {
                let plane = stack.plane(ch);
                for i in 0..tile {
                    let src_row = reflect(r0 + i, h) * w;
                    let dst = &mut buf[(ch * tile + i) * tile..(ch * tile + i + 1) * tile];
                    for (j, d) in dst.iter_mut().enumerate() {
                        *d = plane[src_row + reflect(c0 + j, w)];
                    }
                }
            }
            let logits = model.forward(&Tensor::from_vec(&[1, c, tile, tile], buf.clone()))?;
            for i in 0..tile {
                for j in 0..tile {
                    let z = logits.data()[i * tile + j].to_f64().unwrap();
                    let k = (r0 + i) * pw + c0 + j;
                    sum[k] += logistic(z);
                    count[k] += 1;
                }
            }
        }
    }
    let valid = scene.valid();
    let mut values = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let k = i * pw + j;
            values.push(if valid[i * w + j] == 1 { sum[k] / count[k] as f64 } else { 0.0 });
        }
    }
    Ok(ProbabilityMap {
        scene_id: scene.id().to_string(),
        height: h,
        width: w,
        values,
        provenance: Provenance::Model {
            arch: model.spec.name,
            in_channels: model.spec.in_channels,
            seed: model.seed,
        },
    })
}

/// Numerically stable `1 / (1 + e^-z)`.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// JSON stored next to every weight file; required to load it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightsSidecar {
    pub arch: ArchName,
    pub in_channels: usize,
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
    pub format_version: u32,
    pub dtype: String,
}

/// `weights.bin` → `weights.json`.
pub fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

pub fn save_weights<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("bin.tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        model.params.write_to(&mut w).map_err(|e| Error::io(&tmp, e))?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    let sidecar = WeightsSidecar {
        arch: model.spec.name,
        in_channels: model.spec.in_channels,
        width: model.spec.width,
        depth: model.spec.depth,
        seed: model.seed,
        format_version: WEIGHTS_FORMAT_VERSION,
        dtype: T::DTYPE.to_string(),
    };
    write_json_atomic(&sidecar_path(path), &sidecar)
}

/// Loads weights saved for exactly `spec`.
pub fn load_weights<T: Scalar>(spec: ArchSpec, path: &Path) -> Result<Model<T>> {
    let side_path = sidecar_path(path);
    let side: WeightsSidecar = crate::util::read_json(&side_path)?;
    if side.format_version != WEIGHTS_FORMAT_VERSION {
        return Err(Error::Format {
            path: side_path,
            field: "format_version",
            msg: format!("unsupported version {}", side.format_version),
        });
    }
    let saved = ArchSpec { name: side.arch, in_channels: side.in_channels, width: side.width, depth: side.depth };
    if saved != spec {
        return Err(Error::invalid(format!(
            "{} holds weights for {} ({} channels, width {}, depth {}), not {} ({} channels, width {}, depth {})",
            path.display(),
            saved.name,
            saved.in_channels,
            saved.width,
            saved.depth,
            spec.name,
            spec.in_channels,
            spec.width,
            spec.depth
        )));
    }
    let mut model = build_model::<T>(spec, side.seed)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    model
        .params
        .read_from(BufReader::new(file))
        .map_err(|source| Error::Weights { path: path.to_path_buf(), source })?;
    Ok(model)
}
