//! File formats: 16-bit binary PGM maps with JSON sidecars, and binary
//! observation files with a JSON header.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::degrade::{DegradationKind, DegradationSpec, Observation};
use crate::error::{GridError, Result};
use crate::grid::CkmGrid;
use crate::value_map::ValueMap;

const PGM_MAXVAL: u32 = 65535;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    min_db: f64,
    max_db: f64,
    height: usize,
    width: usize,
    has_building_mask: bool,
}

fn io_err(path: &Path, source: std::io::Error) -> GridError {
    GridError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> GridError {
    GridError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("json")
}

pub fn mask_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("mask.pgm")
}

fn write_pgm_u16(path: &Path, data: &Array2<u16>) -> Result<()> {
    let (h, w) = data.dim();
    let mut buf = Vec::with_capacity(32 + h * w * 2);
    buf.extend_from_slice(format!("P5\n{w} {h}\n{PGM_MAXVAL}\n").as_bytes());
    for &v in data.iter() {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

fn write_pgm_bits(path: &Path, data: &Array2<bool>) -> Result<()> {
    let (h, w) = data.dim();
    let mut buf = Vec::with_capacity(16 + h * w);
    buf.extend_from_slice(format!("P5\n{w} {h}\n1\n").as_bytes());
    buf.extend(data.iter().map(|&b| b as u8));
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

fn parse_pgm(path: &Path) -> Result<(usize, usize, u32, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    // header: "P5" ws width ws height ws maxval single-ws, then raster
    let mut pos = 0usize;
    let mut fields: Vec<u64> = Vec::new();
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(format_err(path, "missing P5 magic"));
    }
    pos += 2;
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(format_err(path, "truncated PGM header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        fields.push(
            text.parse::<u64>()
                .map_err(|_| format_err(path, "bad header field"))?,
        );
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(format_err(path, "missing raster separator"));
    }
    pos += 1;
    let (w, h, maxval) = (fields[0] as usize, fields[1] as usize, fields[2] as u32);
    Ok((h, w, maxval, bytes[pos..].to_vec()))
}

/// Writes a CKM as a 16-bit big-endian P5 PGM plus a JSON sidecar; the building
/// mask, when present, goes to a maxval-1 PGM next to it.
pub fn write_ckm(path: &Path, grid: &CkmGrid) -> Result<()> {
    let px = grid.pixels();
    let quantized = px.mapv(|v| (v * PGM_MAXVAL as f64).round().clamp(0.0, PGM_MAXVAL as f64) as u16);
    write_pgm_u16(path, &quantized)?;

    let sidecar = Sidecar {
        min_db: grid.value_map().min_db,
        max_db: grid.value_map().max_db,
        height: grid.height(),
        width: grid.width(),
        has_building_mask: grid.building_mask().is_some(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    let sp = sidecar_path(path);
    fs::write(&sp, json).map_err(|e| io_err(&sp, e))?;

    if let Some(mask) = grid.building_mask() {
        write_pgm_bits(&mask_path(path), mask)?;
    }
    Ok(())
}

pub fn read_ckm(path: &Path) -> Result<CkmGrid> {
    let sp = sidecar_path(path);
    let json = fs::read_to_string(&sp).map_err(|e| io_err(&sp, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&json).map_err(|e| format_err(&sp, e.to_string()))?;
    let value_map = ValueMap::new(sidecar.min_db, sidecar.max_db)?;

    let (h, w, maxval, raster) = parse_pgm(path)?;
    if (h, w) != (sidecar.height, sidecar.width) {
        return Err(format_err(path, "PGM shape disagrees with sidecar"));
    }
    if maxval != PGM_MAXVAL {
        return Err(format_err(path, format!("expected maxval {PGM_MAXVAL}, got {maxval}")));
    }
    if raster.len() < h * w * 2 {
        return Err(format_err(path, "raster shorter than header implies"));
    }
    let mut px = Array2::zeros((h, w));
    for (i, p) in px.iter_mut().enumerate() {
        let v = u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]);
        *p = v as f64 / PGM_MAXVAL as f64;
    }

    let mask = if sidecar.has_building_mask {
        let mp = mask_path(path);
        let (mh, mw, mmax, mraster) = parse_pgm(&mp)?;
        if (mh, mw) != (h, w) || mmax != 1 {
            return Err(format_err(&mp, "mask shape or maxval mismatch"));
        }
        let mut m = Array2::from_elem((h, w), false);
        for (i, cell) in m.iter_mut().enumerate() {
            *cell = mraster[i] != 0;
        }
        Some(m)
    } else {
        None
    };

    // Quantization can leave building pixels a hair above 0; snap them back to
    // the sentinel so the grid invariant holds after a round trip.
    if let Some(m) = &mask {
        for (idx, &inside) in m.indexed_iter() {
            if inside {
                px[idx] = 0.0;
            }
        }
    }
    CkmGrid::from_pixels(px, value_map, mask)
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationHeader {
    kind: String,
    factor: Option<usize>,
    mask: Option<Vec<u8>>,
    noise_std: f64,
    seed: u64,
    height: usize,
    width: usize,
}

/// Observation file: u32-LE header length, JSON header, then the raw values as
/// little-endian f64.
pub fn write_observation(path: &Path, obs: &Observation) -> Result<()> {
    let (l, w) = obs.source_shape;
    let (kind, factor, mask) = match &obs.spec.kind {
        DegradationKind::Denoise => ("denoise", None, None),
        DegradationKind::Inpaint(m) => (
            "inpaint",
            None,
            Some(m.iter().map(|&b| b as u8).collect::<Vec<u8>>()),
        ),
        DegradationKind::SuperRes(f) => ("sr", Some(*f), None),
        DegradationKind::Generate => ("generate", None, None),
    };
    let header = ObservationHeader {
        kind: kind.to_string(),
        factor,
        mask,
        noise_std: obs.spec.noise_std,
        seed: obs.spec.seed,
        height: l,
        width: w,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(4 + json.len() + obs.values.len() * 8);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in &obs.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

pub fn read_observation(path: &Path) -> Result<Observation> {
    let mut file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
    if bytes.len() < 4 {
        return Err(format_err(path, "file too short"));
    }
    let hlen = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    if bytes.len() < 4 + hlen {
        return Err(format_err(path, "header length exceeds file"));
    }
    let header: ObservationHeader = serde_json::from_slice(&bytes[4..4 + hlen])
        .map_err(|e| format_err(path, e.to_string()))?;
    let payload = &bytes[4 + hlen..];
    if payload.len() % 8 != 0 {
        return Err(format_err(path, "payload not a multiple of 8 bytes"));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let kind = match header.kind.as_str() {
        "denoise" => DegradationKind::Denoise,
        "inpaint" => {
            let m = header
                .mask
                .ok_or_else(|| format_err(path, "inpaint header lacks mask"))?;
            if m.len() != header.height * header.width {
                return Err(format_err(path, "mask length mismatch"));
            }
            DegradationKind::Inpaint(
                Array2::from_shape_vec((header.height, header.width), m)
                    .unwrap()
                    .mapv(|b| b != 0),
            )
        }
        "sr" => DegradationKind::SuperRes(
            header
                .factor
                .ok_or_else(|| format_err(path, "sr header lacks factor"))?,
        ),
        "generate" => DegradationKind::Generate,
        other => return Err(format_err(path, format!("unknown kind {other}"))),
    };
    let spec = DegradationSpec::new(kind, header.noise_std, header.seed)?;
    let expected = spec.observation_len(header.height, header.width);
    if values.len() != expected {
        return Err(format_err(
            path,
            format!("payload has {} values, spec implies {expected}", values.len()),
        ));
    }
    Ok(Observation {
        values,
        spec,
        source_shape: (header.height, header.width),
    })
}

/// Raw f64 dump used for reconstructions that are plain pixel images: the same
/// container with a "denoise"-style header and full-size payload.
pub fn write_pixel_image(path: &Path, image: &Array2<f64>) -> Result<()> {
    let obs = Observation {
        values: image.iter().copied().collect(),
        spec: DegradationSpec::new(DegradationKind::Denoise, 0.0, 0)?,
        source_shape: image.dim(),
    };
    write_observation(path, &obs)
}

pub fn read_pixel_image(path: &Path) -> Result<Array2<f64>> {
    let obs = read_observation(path)?;
    let (l, w) = obs.source_shape;
    Array2::from_shape_vec((l, w), obs.values)
        .map_err(|_| format_err(path, "payload does not fill the declared shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ckm_round_trip_with_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.pgm");
        let px = array![[0.0, 0.25], [0.5, 1.0]];
        let mask = array![[true, false], [false, false]];
        let grid = CkmGrid::from_pixels(px, ValueMap::RADIO_MAP_SEER, Some(mask)).unwrap();
        write_ckm(&path, &grid).unwrap();
        let back = read_ckm(&path).unwrap();
        assert_eq!(back.shape(), (2, 2));
        assert_eq!(back.value_map(), grid.value_map());
        assert_eq!(back.building_mask(), grid.building_mask());
        for (a, b) in grid.pixels().iter().zip(back.pixels().iter()) {
            // 16-bit quantization
            assert!((a - b).abs() < 1.0 / 65535.0);
        }
    }

    #[test]
    fn observation_round_trip_inpaint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.bin");
        let mask = array![[true, false], [true, true]];
        let spec = DegradationSpec::new(DegradationKind::Inpaint(mask), 0.05, 42).unwrap();
        let obs = Observation {
            values: vec![0.1, 0.2, 0.3],
            spec,
            source_shape: (2, 2),
        };
        write_observation(&path, &obs).unwrap();
        let back = read_observation(&path).unwrap();
        assert_eq!(back, obs);
    }

    #[test]
    fn observation_round_trip_sr() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.bin");
        let spec = DegradationSpec::new(DegradationKind::SuperRes(2), 0.0, 1).unwrap();
        let obs = Observation {
            values: vec![0.5],
            spec,
            source_shape: (2, 2),
        };
        write_observation(&path, &obs).unwrap();
        assert_eq!(read_observation(&path).unwrap(), obs);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, [1, 2]).unwrap();
        assert!(read_observation(&path).is_err());
    }
}
