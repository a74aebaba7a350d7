//! FMAP raw tensor dumps.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FMAP"
//! 4       4     u32 version (1)
//! 8       4     u32 H
//! 12      4     u32 W
//! 16      4     u32 C
//! 20      1     u8 role (0 heatmap, 1 embedding, 2 offset, 3 generic)
//! 21      4*HWC f32 payload, row-major (row, col, channel)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FeatureMap, MapRole};

pub const MAGIC: &[u8; 4] = b"FMAP";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 21;

pub fn encode(map: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [map.height(), map.width(), map.channels()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.push(map.role().tag());
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format {
            offset: bytes.len(),
            msg: format!("truncated header while reading {what}"),
        })
}

pub fn decode(bytes: &[u8]) -> Result<FeatureMap> {
    match bytes.get(0..4) {
        Some(m) if m == MAGIC => {}
        Some(_) => {
            return Err(Error::Format {
                offset: 0,
                msg: "bad magic, expected \"FMAP\"".into(),
            })
        }
        None => {
            return Err(Error::Format {
                offset: bytes.len(),
                msg: "truncated header while reading magic".into(),
            })
        }
    }
    let version = read_u32(bytes, 4, "version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let h = read_u32(bytes, 8, "height")? as usize;
    let w = read_u32(bytes, 12, "width")? as usize;
    let c = read_u32(bytes, 16, "channels")? as usize;
    let tag = *bytes.get(20).ok_or_else(|| Error::Format {
        offset: bytes.len(),
        msg: "truncated header while reading role".into(),
    })?;
    let role = MapRole::from_tag(tag).ok_or_else(|| Error::Format {
        offset: 20,
        msg: format!("unknown role tag {tag}"),
    })?;
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::Format {
            offset: 8,
            msg: format!("zero dimension in {h}x{w}x{c}"),
        });
    }
    let count = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| Error::Format {
            offset: 8,
            msg: "dimensions overflow".into(),
        })?;
    let payload = &bytes[HEADER_LEN..];
    let need = count.checked_mul(4).ok_or_else(|| Error::Format {
        offset: 8,
        msg: "dimensions overflow".into(),
    })?;
    if payload.len() < need {
        return Err(Error::Format {
            offset: bytes.len(),
            msg: format!("truncated payload, expected {need} bytes, found {}", payload.len()),
        });
    }
    if payload.len() > need {
        return Err(Error::Format {
            offset: HEADER_LEN + need,
            msg: format!("{} trailing bytes after payload", payload.len() - need),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    FeatureMap::new(h, w, c, role, data).map_err(|e| Error::Format {
        offset: HEADER_LEN,
        msg: e.to_string(),
    })
}

pub fn write_to(map: &FeatureMap, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(&encode(map))
}

pub fn read_from(mut r: impl Read) -> Result<FeatureMap> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::io("<reader>", e))?;
    decode(&buf)
}

pub fn read_file(path: &Path) -> Result<FeatureMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { offset, msg } => Error::Format {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = FeatureMap::new(1, 2, 1, MapRole::Offset, vec![1.0, -2.5]).unwrap();
        let b = encode(&m);
        assert_eq!(&b[0..4], b"FMAP");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..16], &[2, 0, 0, 0]);
        assert_eq!(&b[16..20], &[1, 0, 0, 0]);
        assert_eq!(b[20], 2);
        assert_eq!(&b[21..25], &1.0f32.to_le_bytes());
        assert_eq!(&b[25..29], &(-2.5f32).to_le_bytes());
        assert_eq!(b.len(), 29);
    }

    #[test]
    fn malformed_inputs_name_offsets() {
        let m = FeatureMap::zeros(2, 2, 1, MapRole::Heatmap).unwrap();
        let good = encode(&m);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format { offset: 0, .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode(&bad), Err(Error::Format { offset: 4, .. })));

        let mut bad = good.clone();
        bad[20] = 9;
        assert!(matches!(decode(&bad), Err(Error::Format { offset: 20, .. })));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(
            decode(truncated),
            Err(Error::Format { offset, .. }) if offset == truncated.len()
        ));

        assert!(matches!(decode(&good[..10]), Err(Error::Format { offset: 10, .. })));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode(&long), Err(Error::Format { .. })));

        // heatmap role with an out-of-range payload value
        let mut bad = good;
        bad[21..25].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(matches!(decode(&bad), Err(Error::Format { offset: 21, .. })));
    }

    proptest! {
        #[test]
        fn encode_decode_identity(h in 1usize..6, w in 1usize..6, c in 1usize..4, seed in any::<u32>()) {
            let m = FeatureMap::from_fn(h, w, c, MapRole::Embedding, |r, col, ch| {
                ((r * 31 + col * 7 + ch) as f32 * 0.37 + seed as f32).sin()
            }).unwrap();
            let bytes = encode(&m);
            prop_assert_eq!(decode(&bytes).unwrap(), m);
        }
    }
}
