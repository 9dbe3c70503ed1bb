use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Feature;

use super::pipeline::PipelineConfig;
use super::window::XmdWindow;

pub const WINDOW_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BINARY_FILE: &str = "windows.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceNote {
    pub participant_id: String,
    pub kind: String,
    pub detail: String,
}

/// Everything about a window set except the windows themselves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_profile: String,
    pub pipeline: PipelineConfig,
    pub dropped_windows: usize,
    pub provenance: Vec<ProvenanceNote>,
    /// Generator parameters when the windows are synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub meta: DatasetMeta,
    pub windows: Vec<XmdWindow>,
}

impl WindowSet {
    /// Distinct participant ids in sorted order.
    pub fn participants(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.windows.iter().map(|w| w.participant_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn label_distribution(&self) -> LabelDistribution {
        let high = self.windows.iter().filter(|w| w.label == 1).count();
        LabelDistribution {
            low: self.windows.len() - high,
            high,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub low: usize,
    pub high: usize,
}

/// On-disk description of `windows.bin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub n_windows: usize,
    pub steps: usize,
    pub width: usize,
    pub features: Vec<Feature>,
    pub layout: String,
    pub participants: Vec<String>,
    pub label_distribution: LabelDistribution,
    #[serde(flatten)]
    pub meta: DatasetMeta,
    pub binary: String,
    pub windows: Vec<XmdWindow>,
}

/// Writes `manifest.json` and `windows.bin` into `out_dir` and returns the
/// manifest path. The binary holds little-endian f32 values, each window
/// `steps × width` row-major, in manifest order.
pub fn serialize_windows(set: &WindowSet, out_dir: &Path) -> Result<PathBuf> {
    let (steps, width) = match set.windows.first() {
        Some(w) => (w.steps, w.width),
        None => (set.meta.pipeline.window_steps(), 3 * Feature::ALL.len()),
    };
    for w in &set.windows {
        if w.steps != steps || w.width != width || w.z.len() != steps * width {
            return Err(Error::Contract(format!(
                "window {}#{} is {}×{} with {} values; set is {steps}×{width}",
                w.participant_id,
                w.window_index,
                w.steps,
                w.width,
                w.z.len()
            )));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;

    let bin_path = out_dir.join(BINARY_FILE);
    let mut bin =
        BufWriter::new(File::create(&bin_path).map_err(|e| Error::io(format!("creating {}", bin_path.display()), e))?);
    for w in &set.windows {
        for v in &w.z {
            bin.write_all(&v.to_le_bytes())?;
        }
    }
    bin.flush()?;

    let manifest = Manifest {
        format_version: WINDOW_FORMAT_VERSION,
        n_windows: set.windows.len(),
        steps,
        width,
        features: Feature::ALL.to_vec(),
        layout: "values|masks|log1p_deltas".into(),
        participants: set.participants(),
        label_distribution: set.label_distribution(),
        meta: set.meta.clone(),
        binary: BINARY_FILE.into(),
        windows: set.windows.clone(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    let file = File::create(&path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.flush()?;
    Ok(path)
}

/// Reads a window set back. `path` may be the manifest or its directory.
pub fn load_windows(path: &Path) -> Result<WindowSet> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let file = File::open(&manifest_path).map_err(|e| Error::io(format!("opening {}", manifest_path.display()), e))?;
    let manifest: Manifest = serde_json::from_reader(BufReader::new(file))?;
    if manifest.format_version != WINDOW_FORMAT_VERSION {
        return Err(Error::Corruption(format!(
            "unsupported window format version {}",
            manifest.format_version
        )));
    }
    if manifest.windows.len() != manifest.n_windows {
        return Err(Error::Corruption(format!(
            "manifest lists {} windows but declares {}",
            manifest.windows.len(),
            manifest.n_windows
        )));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let bin_path = dir.join(&manifest.binary);
    let mut bytes = Vec::new();
    File::open(&bin_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("reading {}", bin_path.display()), e))?;
    let per = manifest.steps * manifest.width;
    let expected = manifest.n_windows * per * 4;
    if bytes.len() != expected {
        return Err(Error::Corruption(format!(
            "{} holds {} bytes; manifest implies {expected}",
            bin_path.display(),
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut windows = manifest.windows;
    for w in &mut windows {
        if w.steps != manifest.steps || w.width != manifest.width {
            return Err(Error::Corruption(format!(
                "window {}#{} shape {}×{} disagrees with manifest",
                w.participant_id, w.window_index, w.steps, w.width
            )));
        }
        if w.label > 1 {
            return Err(Error::Corruption(format!("label {} is not binary", w.label)));
        }
        w.z = values.by_ref().take(per).collect();
    }
    Ok(WindowSet {
        meta: manifest.meta,
        windows,
    })
}
