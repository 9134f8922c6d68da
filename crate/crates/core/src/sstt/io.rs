//! Labelled dataset file.
//!
//! A small JSON object naming the world file it was drawn from, that file's
//! SHA-256, and per camera the tracklet ids in label order (label `k` is
//! entry `k - 1`). Frames are never copied; loading resolves the ids
//! against the world.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabelledDataset, LabelledTracklet, SsttConfig};
use crate::error::{Error, Result};
use crate::manifest::file_sha256;
use crate::world::{load_world, TrackletId, World};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const DATASET_FORMAT: &str = "taudl-dataset";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub format: String,
    pub version: u32,
    /// Relative paths are taken from the dataset file's directory.
    pub world: String,
    pub world_sha256: String,
    pub sstt: Option<SsttConfig>,
    pub cameras: Vec<Vec<TrackletId>>,
}

impl DatasetFile {
    pub fn new(world: &Path, world_sha256: String, sstt: Option<SsttConfig>, dataset: &LabelledDataset) -> Self {
        DatasetFile {
            format: DATASET_FORMAT.into(),
            version: DATASET_FORMAT_VERSION,
            world: world.display().to_string(),
            world_sha256,
            sstt,
            cameras: dataset
                .cameras
                .iter()
                .map(|c| c.iter().map(|l| l.tracklet.tracklet_id).collect())
                .collect(),
        }
    }
}

/// Path to store for `world` inside a dataset file written to `dataset`:
/// the bare file name when both share a directory, otherwise absolute.
fn stored_world_path(world: &Path, dataset: &Path) -> PathBuf {
    let same_dir = match (world.parent(), dataset.parent()) {
        (Some(a), Some(b)) => {
            let canon = |p: &Path| {
                let p = if p.as_os_str().is_empty() { Path::new(".") } else { p };
                std::fs::canonicalize(p).ok()
            };
            canon(a).is_some() && canon(a) == canon(b)
        }
        _ => false,
    };
    match world.file_name() {
        Some(name) if same_dir => PathBuf::from(name),
        _ => std::path::absolute(world).unwrap_or_else(|_| world.to_path_buf()),
    }
}

pub fn save_dataset(
    dataset: &LabelledDataset,
    sstt: Option<&SsttConfig>,
    world_path: &Path,
    path: &Path,
) -> Result<()> {
    let hash = file_sha256(world_path)?;
    let file = DatasetFile::new(&stored_world_path(world_path, path), hash, sstt.cloned(), dataset);
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_dataset_file(path: &Path) -> Result<DatasetFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: DatasetFile = serde_json::from_str(&text)?;
    if file.format != DATASET_FORMAT {
        return Err(Error::Format(format!(
            "expected format {DATASET_FORMAT}, found {}",
            file.format
        )));
    }
    if file.version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            expected: DATASET_FORMAT_VERSION,
            found: file.version,
        });
    }
    Ok(file)
}

/// Rebuild a dataset from its id lists and the world they refer to.
pub fn resolve_dataset(file: &DatasetFile, world: &World) -> Result<LabelledDataset> {
    if file.cameras.len() != world.config.num_cameras {
        return Err(Error::Dimension(format!(
            "dataset has {} cameras, world has {}",
            file.cameras.len(),
            world.config.num_cameras
        )));
    }
    let mut cameras = Vec::with_capacity(file.cameras.len());
    for (c, ids) in file.cameras.iter().enumerate() {
        let mut cam = Vec::with_capacity(ids.len());
        for (k, &id) in ids.iter().enumerate() {
            let tracklet = world
                .tracklets
                .get(id as usize)
                .filter(|t| t.tracklet_id == id)
                .ok_or_else(|| Error::InvalidInput(format!("tracklet {id} not in world")))?;
            if tracklet.camera_id != c + 1 {
                return Err(Error::InvalidInput(format!(
                    "tracklet {id} belongs to camera {}, listed under camera {}",
                    tracklet.camera_id,
                    c + 1
                )));
            }
            cam.push(LabelledTracklet {
                tracklet: tracklet.clone(),
                camera_id: c + 1,
                label: k as u32 + 1,
            });
        }
        cameras.push(cam);
    }
    let ds = LabelledDataset { cameras };
    ds.validate()?;
    Ok(ds)
}

/// Load a dataset file and its world, checking the world hash.
pub fn load_dataset(path: &Path) -> Result<(LabelledDataset, World, DatasetFile)> {
    let file = read_dataset_file(path)?;
    let world_path = {
        let p = PathBuf::from(&file.world);
        if p.is_absolute() {
            p
        } else {
            path.parent().unwrap_or(Path::new(".")).join(p)
        }
    };
    let found = file_sha256(&world_path)?;
    if found != file.world_sha256 {
        return Err(Error::HashMismatch {
            what: world_path.display().to_string(),
            expected: file.world_sha256.clone(),
            found,
        });
    }
    let world = load_world(&world_path)?;
    let ds = resolve_dataset(&file, &world)?;
    Ok((ds, world, file))
}
