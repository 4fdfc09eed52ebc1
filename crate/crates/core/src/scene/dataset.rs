use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{load_scene, save_scene, synth_case_study, Scene, SynthSpec};
use crate::error::{Error, Result};
use crate::util::{derive_seed, write_json_atomic};

pub const PAPER_TRAIN: usize = 16;
pub const PAPER_VAL: usize = 4;
pub const PAPER_TEST: usize = 1;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Contents of `dataset.json`. Scene paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenes: Vec<String>,
    pub split: DatasetSplit,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// A manifest together with every scene it lists.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest_path: PathBuf,
    pub manifest: DatasetManifest,
    scenes: BTreeMap<String, Scene>,
    fingerprint: String,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::read(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&manifest.split).expect("split serializes"));
        let mut scenes = BTreeMap::new();
        for rel in &manifest.scenes {
            let path = root.join(rel);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
            let scene = load_scene(&path)?;
            if scenes.contains_key(scene.id()) {
                return Err(Error::invalid(format!("duplicate scene id {}", scene.id())));
            }
            scenes.insert(scene.id().to_string(), scene);
        }
        Ok(Self {
            manifest_path: manifest_path.to_path_buf(),
            manifest,
            scenes,
            fingerprint: hex::encode(hasher.finalize()),
        })
    }

    /// SHA-256 over the split and every scene file, in manifest order.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn scene(&self, id: &str) -> Result<&Scene> {
        self.scenes
            .get(id)
            .ok_or_else(|| Error::invalid(format!("scene {id} is not part of the dataset")))
    }

    pub fn scenes(&self) -> impl Iterator<Item = &Scene> {
        self.scenes.values()
    }

    fn collect(&self, ids: &[String]) -> Result<Vec<&Scene>> {
        ids.iter().map(|id| self.scene(id)).collect()
    }

    pub fn train(&self) -> Result<Vec<&Scene>> {
        self.collect(&self.manifest.split.train)
    }

    pub fn val(&self) -> Result<Vec<&Scene>> {
        self.collect(&self.manifest.split.val)
    }

    pub fn test(&self) -> Result<Vec<&Scene>> {
        self.collect(&self.manifest.split.test)
    }

    /// Split invariants: disjoint, covering every scene, non-empty parts and,
    /// in paper-faithful mode, exactly 16/4/1 scenes.
    pub fn validate(&self, paper_faithful: bool) -> Result<()> {
        let split = &self.manifest.split;
        if paper_faithful {
            for (name, part, want) in [
                ("train", &split.train, PAPER_TRAIN),
                ("val", &split.val, PAPER_VAL),
                ("test", &split.test, PAPER_TEST),
            ] {
                if part.len() != want {
                    return Err(Error::invalid(format!(
                        "{name} split must have {want} scenes, found {}",
                        part.len()
                    )));
                }
            }
        }
        for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
            if part.is_empty() {
                return Err(Error::invalid(format!("{name} split is empty")));
            }
        }
        let mut seen = BTreeSet::new();
        for id in split.train.iter().chain(&split.val).chain(&split.test) {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("scene {id} appears in more than one split")));
            }
            self.scene(id)?;
        }
        if let Some(missing) = self.scenes.keys().find(|k| !seen.contains(k.as_str())) {
            return Err(Error::invalid(format!("scene {missing} is not assigned to any split")));
        }
        Ok(())
    }
}

/// Writes `count` synthetic scenes plus `dataset.json` into `out`.
///
/// For 21 scenes the split is 16/4/1; other counts keep one test scene and
/// about a fifth of the rest for validation.
pub fn synth_dataset(out: &Path, count: usize, seed: u64, spec: &SynthSpec) -> Result<DatasetManifest> {
    if count < 3 {
        return Err(Error::invalid("a synthetic dataset needs at least 3 scenes"));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let n_test = PAPER_TEST;
    let n_val = if count == PAPER_TRAIN + PAPER_VAL + PAPER_TEST {
        PAPER_VAL
    } else {
        ((count - n_test) / 5).max(1)
    };
    let mut manifest = DatasetManifest { scenes: Vec::new(), split: DatasetSplit::default() };
    for i in 0..count {
        let scene_seed = derive_seed(seed, &["scene", &i.to_string()]);
        let generated = synth_case_study(scene_seed, spec)?;
        let id = format!("scene_{i:02}");
        let scene = Scene { id: id.clone(), ..generated };
        let file = format!("{id}.bst");
        save_scene(&scene, &out.join(&file))?;
        manifest.scenes.push(file);
        let part = if i < count - n_val - n_test {
            &mut manifest.split.train
        } else if i < count - n_test {
            &mut manifest.split.val
        } else {
            &mut manifest.split.test
        };
        part.push(id);
    }
    write_json_atomic(&out.join("dataset.json"), &manifest)?;
    Ok(manifest)
}
