use std::fs;
use std::path::{Path, PathBuf};

use ckm_grid::{io as grid_io, ValueMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{generate_environment, simulate_gain_map, EnvGenError, EnvironmentSpec,
            PropagationParams, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEntry {
    /// CKM image path, relative to the manifest's directory.
    pub path: String,
    pub mask_path: String,
    pub seed: u64,
    pub split: Split,
    pub tx: (usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub value_map: ValueMap,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| EnvGenError::InvalidSpec(e.to_string()))?;
        fs::write(path, json).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let m: Self = serde_json::from_str(&json)
            .map_err(|e| EnvGenError::InvalidSpec(format!("bad manifest {}: {e}", path.display())))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(EnvGenError::InvalidSpec(format!(
                "manifest schema {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> EnvGenError {
    EnvGenError::Io {
        path: path.display().to_string(),
        source,
    }
}

// SplitMix64: independent per-map streams from (corpus seed, index)
fn derive_seed(corpus_seed: u64, index: u64) -> u64 {
    let mut z = corpus_seed
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Generates `n_maps` gain maps under the template layout parameters. The
/// transmitter is re-drawn per map among free cells; the template's seed is
/// the corpus seed and its tx only anchors layout generation. The last
/// n_maps/10 entries are tagged test, the rest train. Writes the images,
/// masks, and `manifest.json` into `out_dir`.
pub fn build_dataset(
    n_maps: usize,
    template: &EnvironmentSpec,
    params: &PropagationParams,
    value_map: ValueMap,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let n_test = n_maps / 10;
    let mut entries = Vec::with_capacity(n_maps);
    for i in 0..n_maps {
        let seed = derive_seed(template.seed, i as u64);
        let spec = EnvironmentSpec {
            seed,
            ..template.clone()
        };
        let mask = generate_environment(&spec)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let tx = loop {
            let cand = (
                rng.gen_range(0..spec.height),
                rng.gen_range(0..spec.width),
            );
            if !mask[cand] {
                break cand;
            }
        };
        let grid = simulate_gain_map(&mask, params, tx, value_map, &mut rng)?;
        let name = format!("map_{i:05}.pgm");
        let path = out_dir.join(&name);
        grid_io::write_ckm(&path, &grid)?;
        let split = if i >= n_maps - n_test {
            Split::Test
        } else {
            Split::Train
        };
        entries.push(DatasetEntry {
            path: name.clone(),
            mask_path: Path::new(&name)
                .with_extension("mask.pgm")
                .display()
                .to_string(),
            seed,
            split,
            tx,
        });
    }
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        value_map,
        entries,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Joins an entry path onto the directory holding the manifest.
pub fn entry_file(manifest_dir: &Path, entry: &DatasetEntry) -> PathBuf {
    manifest_dir.join(&entry.path)
}
