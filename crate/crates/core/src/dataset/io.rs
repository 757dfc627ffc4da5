//! Sequence directories: `manifest.json` plus one binary PGM per frame.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::Pose;
use super::LabelMap;
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub file: String,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub t: f64,
}

impl FrameRecord {
    pub fn pose(&self) -> Pose {
        Pose {
            x: self.x,
            y: self.y,
            heading: self.heading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub schema_version: u32,
    /// (width, height)
    pub image_dims: (u32, u32),
    pub domain_tag: String,
    pub frames: Vec<FrameRecord>,
}

impl SequenceManifest {
    pub fn new(image_dims: (u32, u32), domain_tag: impl Into<String>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            image_dims,
            domain_tag: domain_tag.into(),
            frames: Vec::new(),
        }
    }

    pub fn push(&mut self, pose: &Pose, t: f64) -> &FrameRecord {
        let file = format!("frame_{:05}.pgm", self.frames.len());
        self.frames.push(FrameRecord {
            file,
            x: pose.x,
            y: pose.y,
            heading: pose.heading,
            t,
        });
        self.frames.last().unwrap()
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::MalformedManifest(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.image_dims.0 < 3 || self.image_dims.1 < 3 {
            return Err(Error::MalformedManifest("image_dims below 3x3".into()));
        }
        for w in self.frames.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::MalformedManifest(format!(
                    "timestamps not strictly increasing at {}",
                    w[1].file
                )));
            }
        }
        for f in &self.frames {
            if f.file.contains("..") || Path::new(&f.file).is_absolute() {
                return Err(Error::MalformedManifest(format!(
                    "frame path {:?} escapes the sequence",
                    f.file
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn write_pgm(map: &LabelMap, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    write!(file, "P5\n{} {}\n255\n", map.width(), map.height())?;
    file.write_all(map.labels())?;
    Ok(())
}

fn pgm_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &data[start..*pos])
}

pub(crate) fn read_pgm(path: &Path) -> Result<LabelMap> {
    let data = fs::read(path)?;
    let bad = |why: &str| Error::MalformedPgm(format!("{}: {why}", path.display()));
    let mut pos = 0;
    if pgm_token(&data, &mut pos) != Some(b"P5") {
        return Err(bad("missing P5 magic"));
    }
    let mut number = |what: &str| -> Result<u32> {
        pgm_token(&data, &mut pos)
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(what))
    };
    let width = number("bad width")?;
    let height = number("bad height")?;
    let maxval = number("bad maxval")?;
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let expected = width as usize * height as usize;
    if data.len() < pos || data.len() - pos != expected {
        return Err(bad("payload size does not match dimensions"));
    }
    LabelMap::new(width, height, data[pos..].to_vec())
}

/// Writes `manifest.json` and one PGM per frame under `dir`.
pub fn save_sequence(manifest: &SequenceManifest, maps: &[LabelMap], dir: &Path) -> Result<()> {
    manifest.validate()?;
    if manifest.frames.len() != maps.len() {
        return Err(Error::LengthMismatch(manifest.frames.len(), maps.len()));
    }
    fs::create_dir_all(dir)?;
    for (frame, map) in manifest.frames.iter().zip(maps) {
        if map.dims() != manifest.image_dims {
            return Err(Error::DimensionMismatch {
                file: PathBuf::from(&frame.file),
                expected: manifest.image_dims,
                found: map.dims(),
            });
        }
        write_pgm(map, &dir.join(&frame.file))?;
    }
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_sequence(dir: &Path) -> Result<(SequenceManifest, Vec<LabelMap>)> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: SequenceManifest =
        serde_json::from_str(&text).map_err(|e| Error::MalformedManifest(e.to_string()))?;
    manifest.validate()?;
    let mut maps = Vec::with_capacity(manifest.frames.len());
    for frame in &manifest.frames {
        let path = dir.join(&frame.file);
        if !path.is_file() {
            return Err(Error::MissingFrameFile(path));
        }
        let map = read_pgm(&path)?;
        if map.dims() != manifest.image_dims {
            return Err(Error::DimensionMismatch {
                file: path,
                expected: manifest.image_dims,
                found: map.dims(),
            });
        }
        maps.push(map);
    }
    Ok((manifest, maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_world, render_label_map, WorldConfig};

    fn three_frames() -> (SequenceManifest, Vec<LabelMap>) {
        let world = generate_world(&WorldConfig {
            seed: 2,
            render_dims: (101, 77),
            ..Default::default()
        })
        .unwrap();
        let mut manifest = SequenceManifest::new((101, 77), "summer");
        let mut maps = Vec::new();
        for i in 0..3 {
            let pose = world.route.pose_at(7.3 * i as f64 + 0.1);
            manifest.push(&pose, 0.5 + i as f64 * 1.25);
            maps.push(render_label_map(&world, &pose).unwrap());
        }
        (manifest, maps)
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, maps) = three_frames();
        save_sequence(&manifest, &maps, dir.path()).unwrap();
        let (m2, maps2) = load_sequence(dir.path()).unwrap();
        assert_eq!(m2, manifest);
        assert_eq!(maps2, maps);
        let raw = fs::read(dir.path().join("frame_00000.pgm")).unwrap();
        assert!(raw.starts_with(b"P5\n101 77\n255\n"));
        assert_eq!(&raw[raw.len() - maps[0].labels().len()..], maps[0].labels());
    }

    #[test]
    fn missing_frame_file() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, maps) = three_frames();
        save_sequence(&manifest, &maps, dir.path()).unwrap();
        fs::remove_file(dir.path().join("frame_00001.pgm")).unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(Error::MissingFrameFile(_))
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, maps) = three_frames();
        save_sequence(&manifest, &maps, dir.path()).unwrap();
        let small = LabelMap::filled(5, 5, crate::dataset::SemanticLabel::SKY).unwrap();
        write_pgm(&small, &dir.path().join("frame_00002.pgm")).unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn malformed_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("manifest.json"), "{\"frames\": 3}").unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(Error::MalformedManifest(_))
        ));

        let (mut manifest, maps) = three_frames();
        manifest.frames[2].t = manifest.frames[1].t;
        assert!(matches!(
            save_sequence(&manifest, &maps, dir.path()),
            Err(Error::MalformedManifest(_))
        ));
    }
}
