//! Binary weight files.
//!
//! Layout (little-endian): magic `LAPI`, u32 version (1), u32 tensor count,
//! then per tensor a u16 name length, the UTF-8 name, a u8 rank, one u32 per
//! dimension and the raw f32 values.

use std::path::Path;

use super::params::NamedTensors;
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};
use crate::tensor::{Shape4, Tensor};

pub const MAGIC: &[u8; 4] = b"LAPI";
pub const VERSION: u32 = 1;

pub fn encode_weights(params: &NamedTensors<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + params.num_values() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(params.len()).map_err(|_| Error::Size("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in params.iter() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Size(format!("tensor name {name:?} longer than 65535 bytes")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(4);
        let s = t.shape();
        for d in [s.n, s.c, s.h, s.w] {
            let d = u32::try_from(d).map_err(|_| Error::Size(format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                field,
                self.pos as u64,
                format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<NamedTensors<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format("magic", 0, "expected \"LAPI\""));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(
            "version",
            4,
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }
    let count = r.u32("tensor count")?;
    let mut out = NamedTensors::new();
    for i in 0..count {
        let at = r.pos as u64;
        let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap());
        let name = std::str::from_utf8(r.take(len as usize, "name")?)
            .map_err(|_| Error::format("name", at + 2, format!("tensor {i} name is not UTF-8")))?
            .to_owned();
        let rank_at = r.pos as u64;
        let rank = r.take(1, "rank")?[0];
        if !(1..=4).contains(&rank) {
            return Err(Error::format("rank", rank_at, format!("rank {rank} not in 1..=4")));
        }
        let mut dims = [1usize; 4];
        for d in dims.iter_mut().take(rank as usize) {
            *d = r.u32("dims")? as usize;
        }
        let shape = Shape4::new(dims[0], dims[1], dims[2], dims[3])
            .map_err(|e| Error::format("dims", rank_at + 1, e.to_string()))?;
        let raw = r.take(
            shape.len().checked_mul(4).ok_or_else(|| Error::format("dims", rank_at + 1, "overflow"))?,
            "values",
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(name, Tensor::from_vec(shape, data)?)
            .map_err(|e| Error::format("name", at, e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            "trailer",
            r.pos as u64,
            format!("{} unexpected trailing bytes", bytes.len() - r.pos),
        ));
    }
    Ok(out)
}

pub fn save_weights(params: &NamedTensors<f32>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_weights(params)?)
}

pub fn load_weights(path: &Path) -> Result<NamedTensors<f32>> {
    decode_weights(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> NamedTensors<f32> {
        let mut p = NamedTensors::new();
        let s = Shape4::new(2, 1, 1, 3).unwrap();
        p.push("a.weight", Tensor::from_vec(s, vec![1.5, -0.0, f32::MIN_POSITIVE, 3.0, 1e-30, -7.25]).unwrap())
            .unwrap();
        p.push("a.bias", Tensor::zeros(Shape4::new(2, 1, 1, 1).unwrap())).unwrap();
        p
    }

    #[test]
    fn round_trip_bitwise() {
        let p = sample();
        let back = decode_weights(&encode_weights(&p).unwrap()).unwrap();
        assert!(back.bit_eq(&p));
    }

    #[test]
    fn empty_list_is_valid() {
        let bytes = encode_weights(&NamedTensors::new()).unwrap();
        assert_eq!(bytes.len(), 12);
        assert!(decode_weights(&bytes).unwrap().is_empty());
    }

    #[test]
    fn corrupted_headers() {
        let good = encode_weights(&sample()).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_weights(&bad), Err(Error::Format { ref field, .. }) if field == "magic"));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_weights(&bad), Err(Error::Format { ref field, .. }) if field == "version"));
        let bad = &good[..good.len() - 1];
        assert!(matches!(decode_weights(bad), Err(Error::Format { ref field, .. }) if field == "values"));
        assert!(matches!(decode_weights(&good[..6]), Err(Error::Format { ref field, .. }) if field == "version"));
    }
}
