//! PLOG v1 binary layout.
//!
//! ```text
//! "PLOG" 0x31 0x00
//! u32 num_checkpoints, u32 num_examples, u32 num_classes    (little-endian)
//! u8  flags                     bit0: noise mask + true labels present
//! u32 checkpoint ids            [num_checkpoints]
//! u32 labels                    [num_examples]
//! u8  noise mask                [num_examples]   (flag only)
//! u32 true labels               [num_examples]   (flag only)
//! f32 probabilities             [num_checkpoints][num_examples][num_classes]
//! u32 manifest length, then that many bytes of UTF-8 JSON
//! ```
//!
//! The JSON manifest is written with keys in a fixed order
//! (`dims`, `dtype`, `metadata`, `split_name`, `version`), so writing a log
//! that was read from a file produced here reproduces the file byte for byte.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    check_checkpoint_order, check_labels, check_probabilities, check_true_labels, LogError,
    NoiseRecord, PredictionLog,
};

pub const MAGIC: &[u8; 6] = b"PLOG\x31\x00";
pub const FORMAT_VERSION: u8 = 1;
pub(crate) const DTYPE: &str = "f32le";

const FLAG_NOISE: u8 = 0x01;
const HEADER_LEN: usize = MAGIC.len() + 3 * 4 + 1;

#[derive(Serialize)]
struct ManifestOut<'a> {
    dims: [u32; 3],
    dtype: &'a str,
    metadata: &'a BTreeMap<String, Value>,
    split_name: &'a str,
    version: u8,
}

#[derive(Deserialize)]
struct ManifestIn {
    dims: Option<[u64; 3]>,
    dtype: Option<String>,
    #[serde(default)]
    metadata: BTreeMap<String, Value>,
    #[serde(default)]
    split_name: String,
    version: Option<u8>,
}

pub fn encode(log: &PredictionLog) -> Result<Vec<u8>, LogError> {
    log.validate()?;
    let (c, n, k) = (log.num_checkpoints(), log.num_examples, log.num_classes);
    let to_u32 = |v: usize, field: &'static str| {
        u32::try_from(v).map_err(|_| LogError::DimensionMismatch {
            field,
            expected: u32::MAX as u64,
            found: v as u64,
        })
    };
    let dims = [
        to_u32(c, "num_checkpoints")?,
        to_u32(n, "num_examples")?,
        to_u32(k, "num_classes")?,
    ];
    let manifest = serde_json::to_vec(&ManifestOut {
        dims,
        dtype: DTYPE,
        metadata: &log.metadata,
        split_name: &log.split_name,
        version: FORMAT_VERSION,
    })
    .map_err(|e| LogError::Manifest(e.to_string()))?;
    let manifest_len = to_u32(manifest.len(), "manifest")?;

    let noise_len = if log.noise.is_some() { 5 * n } else { 0 };
    let mut out =
        Vec::with_capacity(HEADER_LEN + 4 * c + 4 * n + noise_len + 4 * c * n * k + 4 + manifest.len());
    out.extend_from_slice(MAGIC);
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(if log.noise.is_some() { FLAG_NOISE } else { 0 });
    for &id in &log.checkpoints {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for &l in &log.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    if let Some(noise) = &log.noise {
        out.extend(noise.mask.iter().map(|&m| m as u8));
        for &l in &noise.true_labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    for &p in &log.probabilities {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out.extend_from_slice(&manifest_len.to_le_bytes());
    out.extend_from_slice(&manifest);
    Ok(out)
}

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap())
}

fn parse_manifest(raw: &[u8]) -> Result<ManifestIn, LogError> {
    let text = std::str::from_utf8(raw).map_err(|e| LogError::Manifest(e.to_string()))?;
    serde_json::from_str(text).map_err(|e| LogError::Manifest(e.to_string()))
}

/// Find a manifest whose length prefix exactly accounts for the rest of the
/// file, searching backwards from the end. Used only when the header
/// dimensions do not line up with the bytes present.
fn locate_manifest(bytes: &[u8]) -> Option<(usize, ManifestIn)> {
    let len = bytes.len();
    if len < HEADER_LEN + 4 {
        return None;
    }
    (HEADER_LEN..=len - 4).rev().find_map(|off| {
        let declared = u32_at(bytes, off) as usize;
        if declared != len - off - 4 || bytes.get(off + 4) != Some(&b'{') {
            return None;
        }
        parse_manifest(&bytes[off + 4..]).ok().map(|m| (off, m))
    })
}

fn check_manifest_dims(manifest: &ManifestIn, header: [u64; 3]) -> Result<(), LogError> {
    const NAMES: [&str; 3] = ["num_checkpoints", "num_examples", "num_classes"];
    if let Some(dims) = manifest.dims {
        for ((field, declared), recorded) in NAMES.into_iter().zip(header).zip(dims) {
            if declared != recorded {
                return Err(LogError::DimensionMismatch {
                    field,
                    expected: recorded,
                    found: declared,
                });
            }
        }
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<PredictionLog, LogError> {
    let len = bytes.len();
    if len < 4 || &bytes[..4] != b"PLOG" {
        return Err(LogError::BadMagic);
    }
    if len < MAGIC.len() {
        return Err(LogError::Truncated {
            needed: MAGIC.len() as u64,
            available: len as u64,
        });
    }
    if bytes[4..6] != MAGIC[4..6] {
        return Err(LogError::UnsupportedVersion(bytes[4]));
    }
    if len < HEADER_LEN {
        return Err(LogError::Truncated {
            needed: HEADER_LEN as u64,
            available: len as u64,
        });
    }
    let c = u32_at(bytes, 6) as u64;
    let n = u32_at(bytes, 10) as u64;
    let k = u32_at(bytes, 14) as u64;
    let flags = bytes[18];
    if flags & !FLAG_NOISE != 0 {
        return Err(LogError::InvalidFlags(flags));
    }
    for (v, field) in [(c, "num_checkpoints"), (n, "num_examples"), (k, "num_classes")] {
        if v == 0 {
            return Err(LogError::ZeroDimension { field });
        }
    }
    let has_noise = flags & FLAG_NOISE != 0;
    let payload = c.saturating_mul(n).saturating_mul(k).saturating_mul(4);
    let body_len = (4 * c + 4 * n + if has_noise { 5 * n } else { 0 }).saturating_add(payload);
    let body_end = (HEADER_LEN as u64).saturating_add(body_len);
    let total = len as u64;

    let aligned = body_end.saturating_add(4) <= total
        && u32_at(bytes, body_end as usize) as u64 == total - body_end - 4;
    if !aligned {
        if let Some((off, manifest)) = locate_manifest(bytes) {
            check_manifest_dims(&manifest, [c, n, k])?;
            return Err(LogError::DimensionMismatch {
                field: "payload_bytes",
                expected: body_len,
                found: (off - HEADER_LEN) as u64,
            });
        }
        if body_end.saturating_add(4) > total {
            return Err(LogError::Truncated {
                needed: body_end + 4,
                available: total,
            });
        }
        let declared = u32_at(bytes, body_end as usize) as u64;
        let needed = body_end + 4 + declared;
        if needed > total {
            return Err(LogError::Truncated {
                needed,
                available: total,
            });
        }
        return Err(LogError::DimensionMismatch {
            field: "payload_bytes",
            expected: needed,
            found: total,
        });
    }

    let (c, n, k) = (c as usize, n as usize, k as usize);
    let mut off = HEADER_LEN;
    let mut read_u32s = |count: usize| {
        let v: Vec<u32> = (0..count).map(|i| u32_at(bytes, off + 4 * i)).collect();
        off += 4 * count;
        v
    };
    let checkpoints = read_u32s(c);
    let labels = read_u32s(n);
    let noise = if has_noise {
        let mut mask = Vec::with_capacity(n);
        for (i, &b) in bytes[off..off + n].iter().enumerate() {
            match b {
                0 => mask.push(false),
                1 => mask.push(true),
                value => return Err(LogError::NoiseMaskValue { example: i, value }),
            }
        }
        off += n;
        let true_labels = (0..n).map(|i| u32_at(bytes, off + 4 * i)).collect();
        off += 4 * n;
        Some(NoiseRecord { mask, true_labels })
    } else {
        None
    };
    let probabilities: Vec<f32> = bytes[off..off + 4 * c * n * k]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    off += 4 * c * n * k;
    let manifest = parse_manifest(&bytes[off + 4..])?;
    check_manifest_dims(&manifest, [c as u64, n as u64, k as u64])?;
    if let Some(dtype) = &manifest.dtype {
        if dtype != DTYPE {
            return Err(LogError::Manifest(format!("unsupported dtype {dtype:?}")));
        }
    }
    if let Some(v) = manifest.version {
        if v != FORMAT_VERSION {
            return Err(LogError::Manifest(format!("manifest version {v} != 1")));
        }
    }

    check_checkpoint_order(&checkpoints)?;
    check_labels(&labels, k)?;
    if let Some(noise) = &noise {
        check_true_labels(&noise.true_labels, k)?;
    }
    check_probabilities(&probabilities, n, k)?;

    Ok(PredictionLog {
        checkpoints,
        num_examples: n,
        num_classes: k,
        probabilities,
        labels,
        noise,
        split_name: manifest.split_name,
        metadata: manifest.metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(noise: bool) -> PredictionLog {
        PredictionLog {
            checkpoints: vec![1, 4],
            num_examples: 2,
            num_classes: 3,
            probabilities: vec![
                0.2, 0.3, 0.5, 1.0, 0.0, 0.0, //
                0.1, 0.8, 0.1, 0.25, 0.25, 0.5,
            ],
            labels: vec![2, 0],
            noise: noise.then(|| NoiseRecord {
                mask: vec![true, false],
                true_labels: vec![1, 0],
            }),
            split_name: "train".into(),
            metadata: [("run".to_string(), Value::from("a"))].into(),
        }
    }

    #[test]
    fn layout_offsets() {
        let bytes = encode(&sample(true)).unwrap();
        assert_eq!(&bytes[..6], MAGIC);
        assert_eq!(u32_at(&bytes, 6), 2);
        assert_eq!(u32_at(&bytes, 10), 2);
        assert_eq!(u32_at(&bytes, 14), 3);
        assert_eq!(bytes[18], 1);
        assert_eq!(u32_at(&bytes, 19), 1);
        assert_eq!(u32_at(&bytes, 23), 4);
        // labels, mask, true labels
        assert_eq!(u32_at(&bytes, 27), 2);
        assert_eq!(&bytes[35..37], &[1, 0]);
        assert_eq!(u32_at(&bytes, 37), 1);
        let probs_at = 45;
        assert_eq!(f32::from_le_bytes(bytes[probs_at..probs_at + 4].try_into().unwrap()), 0.2);
        let tail_at = probs_at + 4 * 12;
        let tail_len = u32_at(&bytes, tail_at) as usize;
        assert_eq!(tail_at + 4 + tail_len, bytes.len());
        let json = std::str::from_utf8(&bytes[tail_at + 4..]).unwrap();
        assert_eq!(
            json,
            r#"{"dims":[2,2,3],"dtype":"f32le","metadata":{"run":"a"},"split_name":"train","version":1}"#
        );
    }

    #[test]
    fn decode_encode_is_identity() {
        for noise in [false, true] {
            let bytes = encode(&sample(noise)).unwrap();
            let log = decode(&bytes).unwrap();
            assert_eq!(log, sample(noise));
            assert_eq!(encode(&log).unwrap(), bytes);
        }
    }

    #[test]
    fn manifest_without_dims_is_accepted() {
        let mut bytes = encode(&sample(false)).unwrap();
        // header, checkpoint ids, labels, probabilities
        bytes.truncate(19 + 8 + 8 + 48);
        let json = br#"{"split_name":"x"}"#;
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(json);
        let log = decode(&bytes).unwrap();
        assert_eq!(log.split_name, "x");
    }

    #[test]
    fn inflated_header_dimension_names_the_field() {
        let mut bytes = encode(&sample(false)).unwrap();
        bytes[14] = 4;
        match decode(&bytes) {
            Err(LogError::DimensionMismatch { field, expected, found }) => {
                assert_eq!((field, expected, found), ("num_classes", 3, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_file_is_truncated() {
        let bytes = encode(&sample(false)).unwrap();
        for cut in [7, 20, 40, bytes.len() - 1] {
            let err = decode(&bytes[..cut]).unwrap_err();
            assert_eq!(err.kind(), "truncated", "cut at {cut}");
        }
    }
}
