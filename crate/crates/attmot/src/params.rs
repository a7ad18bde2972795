//! Named parameter store, initializers, and the checkpoint archive format
//! (manifest.json listing array names/dtypes/shapes + arrays.bin, raw
//! little-endian float32 in manifest order).

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AttmotError, Result};

/// Ordered name -> array map. BTreeMap keeps iteration deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    arrays: BTreeMap<String, ArrayD<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<f64>) {
        assert!(
            self.arrays.insert(name.to_string(), value).is_none(),
            "duplicate parameter '{name}'"
        );
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.arrays
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        self.arrays
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.arrays.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.arrays.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<f64>)> {
        self.arrays.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.arrays.values().map(|a| a.len()).sum()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }
}

/// Uniform fan-in initializer for conv kernels and dense weights.
pub fn fan_in_uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> ArrayD<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-bound..bound))
}

/// Orthogonal (or row/column-orthonormal) init for projection matrices via
/// Gram-Schmidt on a Gaussian draw.
pub fn orthogonal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> ArrayD<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let n = rows.max(cols);
    let mut m = Array2::<f64>::zeros((n, n));
    for v in m.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    // Gram-Schmidt over columns
    for j in 0..n {
        for k in 0..j {
            let dot: f64 = (0..n).map(|i| m[[i, j]] * m[[i, k]]).sum();
            for i in 0..n {
                m[[i, j]] -= dot * m[[i, k]];
            }
        }
        let norm: f64 = (0..n).map(|i| m[[i, j]] * m[[i, j]]).sum::<f64>().sqrt();
        let norm = if norm < 1e-12 { 1.0 } else { norm };
        for i in 0..n {
            m[[i, j]] /= norm;
        }
    }
    m.slice(ndarray::s![..rows, ..cols]).to_owned().into_dyn()
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveManifest {
    schema_version: u32,
    arrays: Vec<ArchiveEntry>,
}

/// Save a parameter store as a named-array archive directory.
pub fn save_archive(store: &ParamStore, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = ArchiveManifest {
        schema_version: 1,
        arrays: Vec::new(),
    };
    let mut payload: Vec<u8> = Vec::new();
    for (name, arr) in store.iter() {
        manifest.arrays.push(ArchiveEntry {
            name: name.clone(),
            dtype: "float32".to_string(),
            shape: arr.shape().to_vec(),
        });
        for &v in arr.iter() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    crate::dataset::container::write_atomic(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    crate::dataset::container::write_atomic(&dir.join("arrays.bin"), &payload)?;
    Ok(())
}

/// Load a named-array archive.
pub fn load_archive(dir: &Path) -> Result<ParamStore> {
    let manifest: ArchiveManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)
            .map_err(|e| AttmotError::format(format!("{}: {e}", dir.display())))?;
    if manifest.schema_version != 1 {
        return Err(AttmotError::format(format!(
            "unsupported archive schema version {}",
            manifest.schema_version
        )));
    }
    let bytes = std::fs::read(dir.join("arrays.bin"))?;
    let expected: usize = manifest.arrays.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if bytes.len() != expected * 4 {
        return Err(AttmotError::format(format!(
            "arrays.bin truncated: expected {} bytes, found {}",
            expected * 4,
            bytes.len()
        )));
    }
    let mut store = ParamStore::new();
    let mut off = 0usize;
    for entry in &manifest.arrays {
        if entry.dtype != "float32" {
            return Err(AttmotError::format(format!(
                "unsupported dtype '{}' for '{}'",
                entry.dtype, entry.name
            )));
        }
        let n: usize = entry.shape.iter().product();
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let b = &bytes[off + 4 * i..off + 4 * i + 4];
                f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64
            })
            .collect();
        off += 4 * n;
        store.insert(
            &entry.name,
            ArrayD::from_shape_vec(IxDyn(&entry.shape), vals)
                .map_err(|e| AttmotError::format(e.to_string()))?,
        );
    }
    Ok(store)
}

/// Write a debug/inspection PNG of a grayscale [0,1] image.
pub fn save_png(img: &ndarray::ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let (h, w) = img.dim();
    let mut buf = image::GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let v = (img[[y, x]].clamp(0.0, 1.0) * 255.0).round() as u8;
            buf.put_pixel(x as u32, y as u32, image::Luma([v]));
        }
    }
    buf.save(path)
        .map_err(|e| AttmotError::format(format!("{}: {e}", path.display())))
}
