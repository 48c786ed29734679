//! Checkpoint container: magic `CKMD`, format version, an opaque metadata
//! block (model configs go here as structured text), then a table of named
//! tensors followed by raw little-endian payloads.

use std::fs;
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CKMD";
const VERSION: u16 = 1;
const DTYPE_F64: u8 = 0;

fn ck_err(path: &Path, reason: impl Into<String>) -> TensorError {
    TensorError::Checkpoint {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn write_checkpoint(
    path: &Path,
    meta: &[u8],
    tensors: &[(String, &Tensor)],
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(meta);
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.push(DTYPE_F64);
        buf.extend_from_slice(&offset.to_le_bytes());
        offset += (t.numel() * 8) as u64;
    }
    for (_, t) in tensors {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| TensorError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<(Vec<u8>, Vec<(String, Tensor)>)> {
    let bytes = fs::read(path).map_err(|e| TensorError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(ck_err(path, "truncated checkpoint"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(ck_err(path, "bad magic"));
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(ck_err(path, format!("unsupported version {version}")));
    }
    let meta_len = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let meta = take(&mut pos, meta_len)?.to_vec();
    let count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;

    struct Entry {
        name: String,
        shape: Vec<usize>,
        offset: u64,
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|_| ck_err(path, "non-utf8 tensor name"))?;
        let ndim = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
        }
        let dtype = take(&mut pos, 1)?[0];
        if dtype != DTYPE_F64 {
            return Err(ck_err(path, format!("unsupported dtype {dtype}")));
        }
        let offset = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        entries.push(Entry {
            name,
            shape,
            offset,
        });
    }
    let payload_start = pos;
    let mut tensors = Vec::with_capacity(count);
    for e in entries {
        let numel: usize = e.shape.iter().product();
        let start = payload_start + e.offset as usize;
        if start + numel * 8 > bytes.len() {
            return Err(ck_err(path, format!("payload for {} out of bounds", e.name)));
        }
        let data: Vec<f64> = bytes[start..start + numel * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((e.name, Tensor::from_vec(e.shape, data)?));
    }
    Ok((meta, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckmd");
        let a = Tensor::from_vec(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::scalar(-0.5).reshaped(vec![1]).unwrap();
        write_checkpoint(
            &path,
            br#"{"kind":"test"}"#,
            &[("enc.w".to_string(), &a), ("bias".to_string(), &b)],
        )
        .unwrap();
        let (meta, tensors) = read_checkpoint(&path).unwrap();
        assert_eq!(meta, br#"{"kind":"test"}"#);
        assert_eq!(tensors.len(), 2);
        assert_eq!(tensors[0].0, "enc.w");
        assert_eq!(tensors[0].1, a);
        assert_eq!(tensors[1].1, b);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckmd");
        fs::write(&path, b"NOPE").unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
