//! Depth raster loading: 16-bit millimeter PNG or raw little-endian `f32`
//! meters with a JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::png::{decode_depth16_png, encode_depth16_png};
use super::{read_bytes, write_bytes};
use crate::geo::DepthPanorama;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub height: usize,
    pub width: usize,
    pub unit: String,
}

pub fn parse_sidecar(bytes: &[u8]) -> Result<DepthSidecar> {
    let s: DepthSidecar = serde_json::from_slice(bytes)?;
    if s.unit != "m" {
        return Err(Error::parse(format!("unsupported depth unit {:?}", s.unit)));
    }
    Ok(s)
}

pub fn decode_depth_f32(raw: &[u8], sidecar: &DepthSidecar) -> Result<DepthPanorama> {
    let n = sidecar
        .height
        .checked_mul(sidecar.width)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::parse("sidecar dimensions overflow"))?;
    if raw.len() != n {
        return Err(Error::parse(format!(
            "raw depth has {} bytes, sidecar {}x{} needs {n}",
            raw.len(),
            sidecar.height,
            sidecar.width
        )));
    }
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    DepthPanorama::new(sidecar.height, sidecar.width, data)
}

pub fn encode_depth_f32(depth: &DepthPanorama) -> (Vec<u8>, DepthSidecar) {
    let raw = depth
        .data()
        .iter()
        .flat_map(|d| (*d as f32).to_le_bytes())
        .collect();
    (
        raw,
        DepthSidecar {
            height: depth.height(),
            width: depth.width(),
            unit: "m".into(),
        },
    )
}

/// Sidecar of a raw depth file: `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Loads `*.png` as 16-bit millimeters, anything else as raw `f32`.
pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthPanorama> {
    let path = path.as_ref();
    if is_png(path) {
        decode_depth16_png(&read_bytes(path)?)
    } else {
        let sidecar = parse_sidecar(&read_bytes(sidecar_path(path))?)?;
        decode_depth_f32(&read_bytes(path)?, &sidecar)
    }
}

pub fn save_depth(path: impl AsRef<Path>, depth: &DepthPanorama) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        write_bytes(path, &encode_depth16_png(depth)?)
    } else {
        let (raw, sidecar) = encode_depth_f32(depth);
        write_bytes(path, &raw)?;
        write_bytes(sidecar_path(path), serde_json::to_string(&sidecar)?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_round_trip() {
        let d = DepthPanorama::new(2, 2, vec![0.0, 1.5, 2.25, 10.0]).unwrap();
        let (raw, side) = encode_depth_f32(&d);
        let json = serde_json::to_vec(&side).unwrap();
        let back = decode_depth_f32(&raw, &parse_sidecar(&json).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn sidecar_checks() {
        assert!(parse_sidecar(br#"{"height":1,"width":1,"unit":"mm"}"#).is_err());
        assert!(parse_sidecar(b"{").is_err());
        let s = parse_sidecar(br#"{"height":1,"width":2,"unit":"m"}"#).unwrap();
        assert!(decode_depth_f32(&[0; 4], &s).is_err());
        let huge = DepthSidecar {
            height: usize::MAX,
            width: 2,
            unit: "m".into(),
        };
        assert!(decode_depth_f32(&[], &huge).is_err());
    }

    #[test]
    fn negative_raw_depth_rejected() {
        let s = DepthSidecar {
            height: 1,
            width: 1,
            unit: "m".into(),
        };
        assert!(decode_depth_f32(&(-1.0f32).to_le_bytes(), &s).is_err());
    }
}
