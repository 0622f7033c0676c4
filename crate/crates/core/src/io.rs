//! JSON / JSONL file helpers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::Extrinsics;

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    serde_json::from_reader(reader).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// A camera file: either a bare camera object or
/// `{"camera": {...}, "extrinsics": {"rotation": [9], "translation": [3]}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CameraFile {
    pub camera: CameraModel,
    pub extrinsics: Extrinsics,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CameraFileRepr {
    Posed {
        camera: CameraModel,
        #[serde(default)]
        extrinsics: Extrinsics,
    },
    Bare(CameraModel),
}

impl<'de> Deserialize<'de> for CameraFile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        if value.get("camera").is_some() {
            match serde_json::from_value::<CameraFileRepr>(value) {
                Ok(CameraFileRepr::Posed { camera, extrinsics }) => Ok(CameraFile { camera, extrinsics }),
                Ok(CameraFileRepr::Bare(camera)) => Ok(CameraFile { camera, extrinsics: Extrinsics::identity() }),
                Err(e) => Err(serde::de::Error::custom(e)),
            }
        } else {
            let camera = CameraModel::deserialize(value).map_err(serde::de::Error::custom)?;
            Ok(CameraFile { camera, extrinsics: Extrinsics::identity() })
        }
    }
}

impl CameraFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_file_forms() {
        let bare = r#"{"kind":"PH","fx":500,"fy":500,"cx":320,"cy":240,"width":640,"height":480}"#;
        let f: CameraFile = serde_json::from_str(bare).unwrap();
        assert_eq!(f.extrinsics, Extrinsics::identity());
        let posed =
            format!(r#"{{"camera":{bare},"extrinsics":{{"rotation":[1,0,0,0,1,0,0,0,1],"translation":[0,0,100]}}}}"#);
        let f: CameraFile = serde_json::from_str(&posed).unwrap();
        assert_eq!(f.extrinsics.translation.z, 100.0);
        let bad = bare.replace("PH", "XX");
        let err = serde_json::from_str::<CameraFile>(&bad).unwrap_err().to_string();
        assert!(err.contains("unknown camera kind"), "{err}");
    }
}
