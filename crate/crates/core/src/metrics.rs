//! Pixel confusion counts, skill scores, ensemble improvement and the
//! geometry of the precision/recall performance diagram.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pooled pixel counts over the valid area.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Sum of two disjoint countings.
    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Predicted over actual positives. Infinite when there are predicted
    /// but no actual positives (serialised as `null`).
    pub frequency_bias: f64,
}

/// Counts and scores together, as written by `eval`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub scores: SkillScores,
}

impl From<ConfusionCounts> for EvalReport {
    fn from(counts: ConfusionCounts) -> Self {
        Self { counts, scores: scores(&counts) }
    }
}

/// Counts agreement between binary `pred` and `label` where `valid` is set.
pub fn confusion(pred: &[u8], label: &[u8], valid: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != label.len() || pred.len() != valid.len() {
        return Err(Error::invalid(format!(
            "mask sizes differ: prediction {}, label {}, valid {}",
            pred.len(),
            label.len(),
            valid.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for ((&p, &l), &m) in pred.iter().zip(label).zip(valid) {
        if m == 0 {
            continue;
        }
        match (p != 0, l != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall, F1 and frequency bias; every `0/0` is taken as 0.
pub fn scores(c: &ConfusionCounts) -> SkillScores {
    let predicted = c.tp + c.fp;
    let actual = c.tp + c.fn_;
    let frequency_bias = match (predicted, actual) {
        (0, 0) => 0.0,
        (_, 0) => f64::INFINITY,
        (p, a) => p as f64 / a as f64,
    };
    SkillScores {
        precision: ratio(c.tp, predicted),
        recall: ratio(c.tp, actual),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        frequency_bias,
    }
}

/// Percentage gain of the ensemble over the single best model, relative to
/// the ensemble score: `100 · (ens − single) / ens`.
pub fn improvement(f1_single: f64, f1_ens: f64) -> Result<f64> {
    if !(f1_ens > 0.0) {
        return Err(Error::invalid(format!("ensemble F1 must be positive, got {f1_ens}")));
    }
    Ok(100.0 * (f1_ens - f1_single) / f1_ens)
}

/// F1 levels drawn as isolines.
pub const ISOLINE_F1: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
/// Frequency-bias levels drawn as rays through the origin.
pub const BIAS_RAYS: [f64; 7] = [0.3, 0.5, 0.8, 1.0, 1.3, 2.0, 3.3];
/// Samples per isoline.
pub const ISOLINE_SAMPLES: usize = 101;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    pub name: String,
    /// Precision.
    pub x: f64,
    /// Recall.
    pub y: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Isoline {
    pub f1: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRay {
    pub bias: f64,
    /// Where the ray `y = bias · x` leaves the unit square.
    pub end: (f64, f64),
}

/// Everything needed to draw a performance diagram, in unit coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramSpec {
    pub points: Vec<DiagramPoint>,
    pub isolines: Vec<Isoline>,
    pub bias_rays: Vec<BiasRay>,
}

/// Marker positions plus F1 isolines `y = f·x / (2x − f)` sampled where they
/// cross the unit square (`x ≥ f / (2 − f)`), and bias rays `y = b·x`.
pub fn diagram_data(points: &[(String, SkillScores)]) -> DiagramSpec {
    let points = points
        .iter()
        .map(|(name, s)| DiagramPoint { name: name.clone(), x: s.precision, y: s.recall, f1: s.f1 })
        .collect();
    let isolines = ISOLINE_F1
        .iter()
        .map(|&f| {
            let x0 = f / (2.0 - f);
            let pts = (0..ISOLINE_SAMPLES)
                .map(|i| {
                    let x = x0 + (1.0 - x0) * i as f64 / (ISOLINE_SAMPLES - 1) as f64;
                    (x, f * x / (2.0 * x - f))
                })
                .collect();
            Isoline { f1: f, points: pts }
        })
        .collect();
    let bias_rays = BIAS_RAYS
        .iter()
        .map(|&b| BiasRay { bias: b, end: if b <= 1.0 { (1.0, b) } else { (1.0 / b, 1.0) } })
        .collect();
    DiagramSpec { points, isolines, bias_rays }
}
