//! Binary trajectory container.
//!
//! Layout, little-endian: magic `RKTJ`, version `u32`, point count `u64`,
//! frame count `u64`, time step `f64`, bounding box of frame 0 as six `f64`
//! (min xyz, max xyz), then every frame as `N` xyz triples of `f64`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Point3;
use rkpm_core::sampling::Aabb;

use crate::error::{HarnessError, Stage};

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"RKTJ";
pub const TRAJECTORY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub h: f64,
    pub frames: Vec<Vec<Point3<f64>>>,
}

fn format_error(message: impl Into<String>) -> HarnessError {
    HarnessError::Format {
        stage: Stage::Output,
        message: message.into(),
    }
}

impl TrajectoryFile {
    pub fn new(h: f64, frames: Vec<Vec<Point3<f64>>>) -> Result<Self, HarnessError> {
        let first = frames.first().ok_or_else(|| format_error("trajectory has no frames"))?;
        if first.is_empty() {
            return Err(format_error("trajectory has no points"));
        }
        if let Some(f) = frames.iter().position(|f| f.len() != first.len()) {
            return Err(format_error(format!("frame {f} has {} points, frame 0 has {}", frames[f].len(), first.len())));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(format_error(format!("time step must be > 0, got {h}")));
        }
        if let Some(f) = frames.iter().position(|f| f.iter().any(|p| !p.iter().all(|c| c.is_finite()))) {
            return Err(format_error(format!("frame {f} has non-finite positions")));
        }
        Ok(Self { h, frames })
    }

    pub fn n_points(&self) -> usize {
        self.frames[0].len()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.frames[0]).expect("non-empty frame")
    }

    pub fn write_to(&self, w: impl Write) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(TRAJECTORY_MAGIC)?;
        w.write_all(&TRAJECTORY_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_points() as u64).to_le_bytes())?;
        w.write_all(&(self.n_frames() as u64).to_le_bytes())?;
        w.write_all(&self.h.to_le_bytes())?;
        let b = self.bbox();
        for v in b.min.iter().chain(b.max.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        for frame in &self.frames {
            for p in frame {
                for c in p.iter() {
                    w.write_all(&c.to_le_bytes())?;
                }
            }
        }
        w.flush()
    }

    pub fn read_from(r: impl Read) -> Result<Self, HarnessError> {
        let mut r = BufReader::new(r);
        let io = |e: std::io::Error| format_error(format!("truncated or unreadable trajectory: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != TRAJECTORY_MAGIC {
            return Err(format_error("not a trajectory file (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != TRAJECTORY_VERSION {
            return Err(format_error(format!("unsupported trajectory version {version}")));
        }
        let mut read_u64 = |r: &mut BufReader<_>| -> Result<u64, HarnessError> {
            r.read_exact(&mut b8).map_err(io)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = read_u64(&mut r)? as usize;
        let t = read_u64(&mut r)? as usize;
        let read_f64 = |r: &mut BufReader<_>| -> Result<f64, HarnessError> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(io)?;
            Ok(f64::from_le_bytes(b))
        };
        let h = read_f64(&mut r)?;
        for _ in 0..6 {
            read_f64(&mut r)?;
        }
        let mut frames = Vec::with_capacity(t);
        for _ in 0..t {
            let mut frame = Vec::with_capacity(n);
            for _ in 0..n {
                frame.push(Point3::new(read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?));
            }
            frames.push(frame);
        }
        Self::new(h, frames)
    }

    /// Writes to a temporary file beside `path` and renames it into place,
    /// so a failed write never leaves a partial file.
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_atomic(path, |f| self.write_to(f))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let f = std::fs::File::open(path).map_err(|e| HarnessError::io(Stage::Compare, path, e))?;
        Self::read_from(f)
    }
}

/// Write-then-rename helper shared by every file the CLI produces.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut std::fs::File) -> std::io::Result<()>) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let err = |e| HarnessError::io(Stage::Output, path, e);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    write(tmp.as_file_mut()).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryFile {
        let f0 = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 2.0, 3.0)];
        let f1 = vec![Point3::new(0.1, 0.0, -0.5), Point3::new(1.0, 2.5, 3.0)];
        TrajectoryFile::new(0.01, vec![f0, f1]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 8 + 48 + 2 * 2 * 24);
        assert_eq!(TrajectoryFile::read_from(&buf[..]).unwrap(), t);
    }

    #[test]
    fn truncation_and_bad_magic_are_detected() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert!(TrajectoryFile::read_from(&buf[..buf.len() - 1]).is_err());
        buf[0] = b'X';
        assert!(TrajectoryFile::read_from(&buf[..]).is_err());
    }

    #[test]
    fn rejects_ragged_and_non_finite_frames() {
        let f0 = vec![Point3::origin()];
        assert!(TrajectoryFile::new(0.1, vec![f0.clone(), vec![]]).is_err());
        assert!(TrajectoryFile::new(0.1, vec![vec![Point3::new(f64::NAN, 0.0, 0.0)]]).is_err());
        assert!(TrajectoryFile::new(0.0, vec![f0]).is_err());
    }

    #[test]
    fn save_replaces_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rktj");
        sample().save(&path).unwrap();
        assert_eq!(TrajectoryFile::load(&path).unwrap(), sample());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
