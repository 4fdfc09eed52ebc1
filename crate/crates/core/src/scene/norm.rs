use serde::{Deserialize, Serialize};
use slidens_tensor::Scalar;

use super::{BandStack, Scene, BAND_COUNT};
use crate::error::{Error, Result};

/// Climate zone and land cover carry class codes, not magnitudes.
pub const CATEGORICAL_BANDS: [usize; 2] = [11, 13];
/// Class codes are divided by this instead of being standardised.
pub const CATEGORICAL_SCALE: f64 = 100.0;

/// Per-band standardisation fitted on the training scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub categorical: Vec<bool>,
    /// Bands with zero variance on the train split; their std is forced to 1.
    pub constant: Vec<bool>,
}

/// Population mean and standard deviation of every band over the valid
/// pixels of `train`.
pub fn fit_norm_stats(train: &[&Scene]) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::invalid("cannot fit normalisation on an empty train set"));
    }
    let mut mean = vec![0.0; BAND_COUNT];
    let mut std_dev = vec![1.0; BAND_COUNT];
    let mut constant = vec![false; BAND_COUNT];
    for b in 0..BAND_COUNT {
        let mut n = 0usize;
        let mut sum = 0.0f64;
        for s in train {
            for (&v, &m) in s.band(b).iter().zip(s.valid()) {
                if m == 1 {
                    n += 1;
                    sum += v as f64;
                }
            }
        }
        if n == 0 {
            return Err(Error::invalid(format!("band {b} has no valid pixels in the train split")));
        }
        let mu = sum / n as f64;
        let mut ss = 0.0f64;
        for s in train {
            for (&v, &m) in s.band(b).iter().zip(s.valid()) {
                if m == 1 {
                    let d = v as f64 - mu;
                    ss += d * d;
                }
            }
        }
        let sd = (ss / n as f64).sqrt();
        mean[b] = mu;
        // relative threshold: float32 bands never produce an exact zero spread
        if sd <= 1e-12 * mu.abs().max(1.0) {
            constant[b] = true;
        } else {
            std_dev[b] = sd;
        }
    }
    let categorical = (0..BAND_COUNT).map(|b| CATEGORICAL_BANDS.contains(&b)).collect();
    Ok(NormStats { mean, std_dev, categorical, constant })
}

/// Standardises continuous bands, scales categorical codes and zeroes every
/// pixel outside `valid`.
pub fn apply_norm<T: Scalar>(stack: &mut BandStack<T>, stats: &NormStats, valid: &[u8]) {
    assert_eq!(valid.len(), stack.height * stack.width, "valid mask does not match stack");
    for c in 0..stack.channels() {
        let b = stack.bands[c];
        let (categorical, mu, sd) = (stats.categorical[b], stats.mean[b], stats.std_dev[b]);
        let constant = stats.constant[b];
        for (x, &m) in stack.plane_mut(c).iter_mut().zip(valid) {
            *x = if m == 0 {
                T::zero()
            } else if categorical {
                T::lit(x.to_f64().unwrap() / CATEGORICAL_SCALE)
            } else if constant {
                T::zero()
            } else {
                T::lit((x.to_f64().unwrap() - mu) / sd)
            };
        }
    }
}
