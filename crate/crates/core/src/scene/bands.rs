use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use slidens_tensor::Scalar;

use super::Scene;
use crate::error::Error;

/// Named subset of the 15 scene bands fed to a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandSetting {
    /// Sentinel-1 backscatter, change, distortion masks and incidence angle.
    S1,
    /// Land cover and dNDVI.
    S2,
    S1S2,
    #[serde(rename = "ALL")]
    All,
}

const S1_BANDS: [usize; 9] = [0, 1, 2, 3, 4, 5, 6, 7, 8];
const S2_BANDS: [usize; 2] = [13, 14];
const S1S2_BANDS: [usize; 11] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 13, 14];
const ALL_BANDS: [usize; 15] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14];

impl BandSetting {
    pub const ALL_SETTINGS: [BandSetting; 4] = [Self::S1, Self::S2, Self::S1S2, Self::All];

    pub fn indices(self) -> &'static [usize] {
        match self {
            Self::S1 => &S1_BANDS,
            Self::S2 => &S2_BANDS,
            Self::S1S2 => &S1S2_BANDS,
            Self::All => &ALL_BANDS,
        }
    }

    pub fn channels(self) -> usize {
        self.indices().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::S1 => "S1",
            Self::S2 => "S2",
            Self::S1S2 => "S1S2",
            Self::All => "ALL",
        }
    }
}

impl fmt::Display for BandSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BandSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Self::S1),
            "S2" => Ok(Self::S2),
            "S1S2" | "S1+S2" => Ok(Self::S1S2),
            "ALL" => Ok(Self::All),
            _ => Err(Error::UnknownName {
                kind: "band setting",
                name: s.to_string(),
                valid: vec!["S1", "S2", "S1S2", "ALL"],
            }),
        }
    }
}

/// `C x H x W` planes taken from a scene, with the source band of each plane.
#[derive(Clone, Debug, PartialEq)]
pub struct BandStack<T> {
    pub bands: Vec<usize>,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> BandStack<T> {
    pub fn channels(&self) -> usize {
        self.bands.len()
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Copies the setting's bands, in the setting's order.
pub fn select_bands<T: Scalar>(scene: &Scene, setting: BandSetting) -> BandStack<T> {
    let idx = setting.indices();
    let mut data = Vec::with_capacity(idx.len() * scene.width() * scene.height());
    for &b in idx {
        data.extend(scene.band(b).iter().map(|&v| T::from_f32(v).unwrap_or_else(T::nan)));
    }
    BandStack {
        bands: idx.to_vec(),
        height: scene.height(),
        width: scene.width(),
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::tests::tiny_scene;

    #[test]
    fn settings_match_band_table() {
        assert_eq!(BandSetting::S1.indices(), &[0, 1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(BandSetting::S2.indices(), &[13, 14]);
        assert_eq!(BandSetting::S1S2.indices(), &[0, 1, 2, 3, 4, 5, 6, 7, 8, 13, 14]);
        assert_eq!(BandSetting::All.indices(), (0..15).collect::<Vec<_>>().as_slice());
        let counts: Vec<_> = BandSetting::ALL_SETTINGS.iter().map(|s| s.channels()).collect();
        assert_eq!(counts, vec![9, 2, 11, 15]);
    }

    #[test]
    fn select_preserves_order_and_values() {
        let s = tiny_scene(3, 2);
        let st = select_bands::<f32>(&s, BandSetting::S2);
        assert_eq!(st.channels(), 2);
        assert_eq!(st.plane(0), s.band(13));
        assert_eq!(st.plane(1), s.band(14));
        let all = select_bands::<f64>(&s, BandSetting::All);
        for b in 0..15 {
            assert!(all.plane(b).iter().zip(s.band(b)).all(|(&a, &x)| a == x as f64));
        }
        assert_eq!(select_bands::<f32>(&s, BandSetting::S1S2).channels(), 11);
    }

    #[test]
    fn parses_names() {
        assert_eq!("s1+s2".parse::<BandSetting>().unwrap(), BandSetting::S1S2);
        assert_eq!("ALL".parse::<BandSetting>().unwrap(), BandSetting::All);
        assert!("S3".parse::<BandSetting>().is_err());
    }
}
