//! The five segmentation losses, each returning its value and the exact
//! gradient with respect to the logits.
//!
//! Every loss takes flattened `logits`, binary `target` and binary `valid`
//! slices of equal length. Pixels with `valid == 0` are excluded from every
//! sum and mean and receive a zero gradient. Region losses (Dice, Jaccard,
//! Lovász) pool all valid pixels of the slice, so a batch is treated as one
//! region rather than averaged per image. Internally everything is computed
//! in `f64`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use slidens_tensor::Scalar;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LossName {
    #[serde(rename = "BCELoss")]
    Bce,
    #[serde(rename = "DiceLoss")]
    Dice,
    #[serde(rename = "FocalLoss")]
    Focal,
    #[serde(rename = "JaccardLoss")]
    Jaccard,
    #[serde(rename = "LovaszLoss")]
    Lovasz,
}

impl LossName {
    pub const ALL: [LossName; 5] = [Self::Bce, Self::Dice, Self::Focal, Self::Jaccard, Self::Lovasz];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bce => "BCELoss",
            Self::Dice => "DiceLoss",
            Self::Focal => "FocalLoss",
            Self::Jaccard => "JaccardLoss",
            Self::Lovasz => "LovaszLoss",
        }
    }
}

impl fmt::Display for LossName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossName {
    type Err = Error;

    /// Case-insensitive; the `Loss` suffix is optional.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        let key = key.strip_suffix("loss").unwrap_or(&key);
        Self::ALL
            .into_iter()
            .find(|l| l.name().to_ascii_lowercase().strip_suffix("loss") == Some(key))
            .ok_or_else(|| Error::UnknownName {
                kind: "loss",
                name: s.to_string(),
                valid: Self::ALL.iter().map(|l| l.name()).collect(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub name: LossName,
    /// Additive smoothing of the Dice and Jaccard ratios.
    pub smooth_eps: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::new(LossName::Bce)
    }
}

impl LossConfig {
    pub fn new(name: LossName) -> Self {
        Self { name, smooth_eps: 1.0, focal_gamma: 2.0, focal_alpha: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.smooth_eps > 0.0 && self.smooth_eps.is_finite()) {
            return Err(Error::invalid(format!("smooth_eps must be positive, got {}", self.smooth_eps)));
        }
        if !(self.focal_gamma >= 0.0 && self.focal_gamma.is_finite()) {
            return Err(Error::invalid(format!("focal_gamma must be ≥ 0, got {}", self.focal_gamma)));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha.is_finite()) {
            return Err(Error::invalid(format!("focal_alpha must be positive, got {}", self.focal_alpha)));
        }
        Ok(())
    }
}

/// A loss value and its gradient with respect to each logit.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEval<T> {
    pub value: f64,
    pub grad: Vec<T>,
}

/// A configured loss, as handed out by [`get_loss`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Loss {
    config: LossConfig,
}

/// Looks up a loss by configuration.
pub fn get_loss(config: LossConfig) -> Result<Loss> {
    config.validate()?;
    Ok(Loss { config })
}

/// Every registered loss with default parameters.
pub fn registry() -> Vec<Loss> {
    LossName::ALL.iter().map(|&n| Loss { config: LossConfig::new(n) }).collect()
}

impl Loss {
    pub fn name(&self) -> LossName {
        self.config.name
    }

    pub fn config(&self) -> &LossConfig {
        &self.config
    }

    pub fn eval<T: Scalar>(&self, logits: &[T], target: &[u8], valid: &[u8]) -> Result<LossEval<T>> {
        let c = &self.config;
        let z = Pixels::gather(logits, target, valid)?;
        let (value, g) = match c.name {
            LossName::Bce => bce_impl(&z),
            LossName::Dice => dice_impl(&z, c.smooth_eps),
            LossName::Focal => focal_impl(&z, c.focal_gamma, c.focal_alpha),
            LossName::Jaccard => jaccard_impl(&z, c.smooth_eps),
            LossName::Lovasz => lovasz_impl(&z),
        };
        Ok(LossEval { value, grad: z.scatter(&g) })
    }

    pub fn value<T: Scalar>(&self, logits: &[T], target: &[u8], valid: &[u8]) -> Result<f64> {
        self.eval(logits, target, valid).map(|e| e.value)
    }
}

/// Mean binary cross-entropy over valid pixels.
pub fn bce<T: Scalar>(logits: &[T], target: &[u8], valid: &[u8]) -> Result<f64> {
    Loss { config: LossConfig::new(LossName::Bce) }.value(logits, target, valid)
}

/// `1 − (2Σpy + ε) / (Σp + Σy + ε)` with ε = 1.
pub fn dice_loss<T: Scalar>(logits: &[T], target: &[u8], valid: &[u8]) -> Result<f64> {
    Loss { config: LossConfig::new(LossName::Dice) }.value(logits, target, valid)
}

/// `1 − (Σpy + ε) / (Σp + Σy − Σpy + ε)` with ε = 1.
pub fn jaccard_loss<T: Scalar>(logits: &[T], target: &[u8], valid: &[u8]) -> Result<f64> {
    Loss { config: LossConfig::new(LossName::Jaccard) }.value(logits, target, valid)
}

/// Mean of `−(1 − p_t)^2 · ln p_t` over valid pixels.
pub fn focal_loss<T: Scalar>(logits: &[T], target: &[u8], valid: &[u8]) -> Result<f64> {
    Loss { config: LossConfig::new(LossName::Focal) }.value(logits, target, valid)
}

/// Binary Lovász hinge over all valid pixels.
pub fn lovasz_loss<T: Scalar>(logits: &[T], target: &[u8], valid: &[u8]) -> Result<f64> {
    Loss { config: LossConfig::new(LossName::Lovasz) }.value(logits, target, valid)
}

/// The valid pixels of a loss input, widened to `f64`.
struct Pixels {
    len: usize,
    index: Vec<usize>,
    z: Vec<f64>,
    y: Vec<f64>,
}

impl Pixels {
    fn gather<T: Scalar>(logits: &[T], target: &[u8], valid: &[u8]) -> Result<Self> {
        if logits.len() != target.len() || logits.len() != valid.len() {
            return Err(Error::invalid(format!(
                "loss inputs differ in length: {} logits, {} targets, {} mask values",
                logits.len(),
                target.len(),
                valid.len()
            )));
        }
        let mut px = Self { len: logits.len(), index: Vec::new(), z: Vec::new(), y: Vec::new() };
        for (i, ((&z, &y), &m)) in logits.iter().zip(target).zip(valid).enumerate() {
            if m != 0 {
                px.index.push(i);
                px.z.push(z.to_f64().unwrap_or(f64::NAN));
                px.y.push(if y != 0 { 1.0 } else { 0.0 });
            }
        }
        if px.index.is_empty() {
            return Err(Error::invalid("loss needs at least one valid pixel"));
        }
        Ok(px)
    }

    fn scatter<T: Scalar>(&self, g: &[f64]) -> Vec<T> {
        let mut out = vec![T::zero(); self.len];
        for (&i, &v) in self.index.iter().zip(g) {
            out[i] = T::lit(v);
        }
        out
    }
}

fn sigmoid(z: f64) -> f64 {
    crate::zoo::logistic(z)
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn bce_impl(px: &Pixels) -> (f64, Vec<f64>) {
    let n = px.z.len() as f64;
    let mut total = 0.0;
    let mut g = Vec::with_capacity(px.z.len());
    for (&z, &y) in px.z.iter().zip(&px.y) {
        total += softplus(z) - z * y;
        g.push((sigmoid(z) - y) / n);
    }
    (total / n, g)
}

fn focal_impl(px: &Pixels, gamma: f64, alpha: f64) -> (f64, Vec<f64>) {
    let n = px.z.len() as f64;
    let mut total = 0.0;
    let mut g = Vec::with_capacity(px.z.len());
    for (&z, &y) in px.z.iter().zip(&px.y) {
        // zt is the logit of the true class, so p_t = σ(zt) and q = 1 − p_t
        let s = if y == 1.0 { 1.0 } else { -1.0 };
        let zt = s * z;
        let (pt, q) = (sigmoid(zt), sigmoid(-zt));
        let nll = softplus(-zt);
        let w = q.powf(gamma);
        total += alpha * w * nll;
        let dzt = -alpha * w * (gamma * pt * nll + q);
        g.push(s * dzt / n);
    }
    (total / n, g)
}

fn dice_impl(px: &Pixels, eps: f64) -> (f64, Vec<f64>) {
    let p: Vec<f64> = px.z.iter().map(|&z| sigmoid(z)).collect();
    let (sp, sy) = (p.iter().sum::<f64>(), px.y.iter().sum::<f64>());
    let inter: f64 = p.iter().zip(&px.y).map(|(p, y)| p * y).sum();
    let (num, den) = (2.0 * inter + eps, sp + sy + eps);
    let g = p
        .iter()
        .zip(&px.y)
        .map(|(&p, &y)| -(2.0 * y * den - num) / (den * den) * p * (1.0 - p))
        .collect();
    (1.0 - num / den, g)
}

fn jaccard_impl(px: &Pixels, eps: f64) -> (f64, Vec<f64>) {
    let p: Vec<f64> = px.z.iter().map(|&z| sigmoid(z)).collect();
    let (sp, sy) = (p.iter().sum::<f64>(), px.y.iter().sum::<f64>());
    let inter: f64 = p.iter().zip(&px.y).map(|(p, y)| p * y).sum();
    let (num, den) = (inter + eps, sp + sy - inter + eps);
    let g = p
        .iter()
        .zip(&px.y)
        .map(|(&p, &y)| -(y * den - num * (1.0 - y)) / (den * den) * p * (1.0 - p))
        .collect();
    (1.0 - num / den, g)
}

/// Hinge errors sorted in decreasing order, weighted by the discrete
/// differences of the Jaccard loss along the sorted ground truth.
fn lovasz_impl(px: &Pixels) -> (f64, Vec<f64>) {
    let n = px.z.len();
    let positives: f64 = px.y.iter().sum();
    if positives == 0.0 {
        return (0.0, vec![0.0; n]);
    }
    let signs: Vec<f64> = px.y.iter().map(|&y| 2.0 * y - 1.0).collect();
    let errors: Vec<f64> = px.z.iter().zip(&signs).map(|(&z, &s)| 1.0 - z * s).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]));
    let mut g = vec![0.0; n];
    let (mut cum_pos, mut cum_neg) = (0.0, 0.0);
    let mut prev_jaccard = 0.0;
    let mut value = 0.0;
    for &k in &order {
        cum_pos += px.y[k];
        cum_neg += 1.0 - px.y[k];
        let jaccard = 1.0 - (positives - cum_pos) / (positives + cum_neg);
        let weight = jaccard - prev_jaccard;
        prev_jaccard = jaccard;
        if errors[k] > 0.0 {
            value += errors[k] * weight;
            g[k] = -signs[k] * weight;
        }
    }
    (value, g)
}
