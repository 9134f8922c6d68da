//! World file format.
//!
//! A world is a JSON-lines text file plus a binary sidecar:
//!
//! * line 1: header object `{"format": "taudl-world", "version": 1, ...}`
//!   carrying the config, identities, camera models and the sidecar's
//!   file name and SHA-256;
//! * one `{"record": "trajectory", ...}` line per trajectory;
//! * one `{"record": "tracklet", ...}` line per tracklet, with
//!   `frame_offset`/`num_frames` pointing into the sidecar.
//!
//! The sidecar holds all frame features as little-endian IEEE-754 32-bit
//! floats, row-major, `frame_dim` values per frame, tracklets in record order.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{
    CameraId, CameraModel, Identity, IdentityId, TrackletId, TrackletRecord,
    Trajectory, World, WorldConfig,
};
use crate::error::{Error, Result};
use crate::manifest::sha256_hex;

pub const WORLD_FORMAT_VERSION: u32 = 1;
const WORLD_FORMAT: &str = "taudl-world";

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    camera_id: CameraId,
    transform: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: WorldConfig,
    identities: Vec<Identity>,
    cameras: Vec<CameraRecord>,
    sidecar: String,
    sidecar_sha256: String,
}

#[derive(Serialize, Deserialize)]
struct TrackletLine {
    tracklet_id: TrackletId,
    trajectory_id: u64,
    camera_id: CameraId,
    identity_id: IdentityId,
    start_time: f64,
    end_time: f64,
    frame_times: Vec<f64>,
    positions: Vec<[f64; 2]>,
    frame_offset: usize,
    num_frames: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Line {
    Trajectory(Trajectory),
    Tracklet(TrackletLine),
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("bin")
}

/// Write `world` to `path` (text) and `path.with_extension("bin")` (frames).
pub fn save_world(world: &World, path: &Path) -> Result<()> {
    let frame_dim = world.config.frame_dim;
    let mut bin = Vec::new();
    let mut lines = Vec::with_capacity(world.trajectories.len() + world.tracklets.len());
    for t in &world.trajectories {
        lines.push(serde_json::to_string(&Line::Trajectory(t.clone()))?);
    }
    let mut offset = 0;
    for t in &world.tracklets {
        if t.frames.ncols() != frame_dim {
            return Err(Error::Dimension(format!(
                "tracklet {} has {} columns, world frame_dim is {frame_dim}",
                t.tracklet_id,
                t.frames.ncols()
            )));
        }
        for v in t.frames.iter() {
            bin.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        lines.push(serde_json::to_string(&Line::Tracklet(TrackletLine {
            tracklet_id: t.tracklet_id,
            trajectory_id: t.trajectory_id,
            camera_id: t.camera_id,
            identity_id: t.identity_id,
            start_time: t.start_time,
            end_time: t.end_time,
            frame_times: t.frame_times.clone(),
            positions: t.positions.clone(),
            frame_offset: offset,
            num_frames: t.num_frames(),
        }))?);
        offset += t.num_frames();
    }

    let bin_path = sidecar_path(path);
    let header = Header {
        format: WORLD_FORMAT.to_string(),
        version: WORLD_FORMAT_VERSION,
        config: world.config.clone(),
        identities: world.identities.clone(),
        cameras: world
            .cameras
            .iter()
            .map(|c| CameraRecord {
                camera_id: c.camera_id,
                transform: c.transform.rows().into_iter().map(|r| r.to_vec()).collect(),
                offset: c.offset.to_vec(),
            })
            .collect(),
        sidecar: bin_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sidecar_sha256: sha256_hex(&bin),
    };

    fs::write(&bin_path, &bin).map_err(|e| Error::io(&bin_path, e))?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write_line = |s: &str| -> Result<()> {
        w.write_all(s.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    };
    write_line(&serde_json::to_string(&header)?)?;
    for l in &lines {
        write_line(l)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_world(path: &Path) -> Result<World> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&first)?;
    if header.format != WORLD_FORMAT {
        return Err(Error::Format(format!(
            "expected format {WORLD_FORMAT}, found {}",
            header.format
        )));
    }
    if header.version != WORLD_FORMAT_VERSION {
        return Err(Error::Version {
            expected: WORLD_FORMAT_VERSION,
            found: header.version,
        });
    }
    let config = header.config;
    config.validate()?;
    let frame_dim = config.frame_dim;

    let bin_path = path.with_file_name(&header.sidecar);
    let bin = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let found = sha256_hex(&bin);
    if found != header.sidecar_sha256 {
        return Err(Error::HashMismatch {
            what: bin_path.display().to_string(),
            expected: header.sidecar_sha256,
            found,
        });
    }
    if bin.len() % 4 != 0 {
        return Err(Error::Format("sidecar length is not a multiple of 4".into()));
    }
    let values: Vec<f64> = bin
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();

    let cameras = header
        .cameras
        .into_iter()
        .map(|c| {
            let rows = c.transform.len();
            let cols = c.transform.first().map_or(0, Vec::len);
            if rows != frame_dim || cols != config.appearance_dim || c.offset.len() != frame_dim
            {
                return Err(Error::Dimension(format!(
                    "camera {} transform is {rows}x{cols}",
                    c.camera_id
                )));
            }
            let flat: Vec<f64> = c.transform.into_iter().flatten().collect();
            Ok(CameraModel {
                camera_id: c.camera_id,
                transform: Array2::from_shape_vec((rows, cols), flat)
                    .map_err(|e| Error::Dimension(e.to_string()))?,
                offset: Array1::from(c.offset),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut trajectories = Vec::new();
    let mut tracklets = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line)? {
            Line::Trajectory(t) => trajectories.push(t),
            Line::Tracklet(t) => {
                let start = t.frame_offset * frame_dim;
                let end = (t.frame_offset + t.num_frames) * frame_dim;
                if end > values.len() || t.num_frames == 0 {
                    return Err(Error::Format(format!(
                        "tracklet {} frames out of sidecar range",
                        t.tracklet_id
                    )));
                }
                let frames =
                    Array2::from_shape_vec((t.num_frames, frame_dim), values[start..end].to_vec())
                        .map_err(|e| Error::Dimension(e.to_string()))?;
                tracklets.push(TrackletRecord {
                    tracklet_id: t.tracklet_id,
                    trajectory_id: t.trajectory_id,
                    camera_id: t.camera_id,
                    identity_id: t.identity_id,
                    start_time: t.start_time,
                    end_time: t.end_time,
                    frame_times: t.frame_times,
                    positions: t.positions,
                    frames,
                });
            }
        }
    }

    Ok(World {
        config,
        identities: header.identities,
        cameras,
        trajectories,
        tracklets,
    })
}
