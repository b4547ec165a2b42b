//! SHVT binary tensors.
//!
//! Layout: the ASCII magic `SHVT`, one rank byte, `rank` little-endian `u32`
//! dimensions, then the elements in row-major order, little-endian, at the
//! width of the element type (8 bytes for f64, 4 for f32).

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use uvguard_core::{Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"SHVT";

#[derive(Debug, thiserror::Error)]
pub enum ShvtError {
    #[error("not an SHVT file (bad magic)")]
    BadMagic,
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("payload is {found} bytes, expected {expected} for {elements} {ty} elements")]
    Payload {
        expected: usize,
        found: usize,
        elements: usize,
        ty: &'static str,
    },
    #[error("tensor rank {0} does not fit in one byte")]
    RankTooLarge(usize),
    #[error("dimension {0} does not fit in u32")]
    DimTooLarge(usize),
    #[error(transparent)]
    Tensor(#[from] uvguard_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>, ShvtError> {
    let rank = t.rank();
    if rank > u8::MAX as usize {
        return Err(ShvtError::RankTooLarge(rank));
    }
    let mut out = Vec::with_capacity(5 + 4 * rank + t.len() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.push(rank as u8);
    for &d in t.shape() {
        let d32 = u32::try_from(d).map_err(|_| ShvtError::DimTooLarge(d))?;
        out.extend_from_slice(&d32.to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>, ShvtError> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(ShvtError::BadMagic);
    }
    let rank = bytes[4] as usize;
    if rank == 0 {
        return Err(ShvtError::ZeroRank);
    }
    let header = 5 + 4 * rank;
    if bytes.len() < header {
        return Err(ShvtError::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated header")));
    }
    let shape: Vec<usize> = bytes[5..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")) as usize)
        .collect();
    let elements: usize = shape.iter().product();
    let payload = &bytes[header..];
    if payload.len() != elements * T::BYTES {
        return Err(ShvtError::Payload {
            expected: elements * T::BYTES,
            found: payload.len(),
            elements,
            ty: T::NAME,
        });
    }
    let data = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
    Ok(Tensor::new(&shape, data)?)
}

pub fn write<T: Scalar>(w: &mut impl Write, t: &Tensor<T>) -> Result<(), ShvtError> {
    w.write_all(&encode(t)?)?;
    Ok(())
}

pub fn read<T: Scalar>(r: &mut impl Read) -> Result<Tensor<T>, ShvtError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn save<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<(), ShvtError> {
    fs::write(path, encode(t)?)?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<Tensor<T>, ShvtError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uvguard_core::tensor::{random_tensor, Dist};
    use uvguard_core::Seed;

    #[test]
    fn header_layout() {
        let t = Tensor::new(&[2, 1], vec![1.0f64, -2.0]).unwrap();
        let b = encode(&t).unwrap();
        assert_eq!(&b[..4], b"SHVT");
        assert_eq!(b[4], 2);
        assert_eq!(&b[5..9], &2u32.to_le_bytes());
        assert_eq!(&b[9..13], &1u32.to_le_bytes());
        assert_eq!(&b[13..21], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 13 + 16);
    }

    #[test]
    fn round_trip_both_widths() {
        let t: Tensor = random_tensor(&[3, 4, 5], Seed(1), Dist::Normal).unwrap();
        assert_eq!(decode::<f64>(&encode(&t).unwrap()).unwrap(), t);
        let s: Tensor<f32> = random_tensor(&[7], Seed(2), Dist::Uniform).unwrap();
        let b = encode(&s).unwrap();
        assert_eq!(b.len(), 5 + 4 + 7 * 4);
        assert_eq!(decode::<f32>(&b).unwrap(), s);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(decode::<f64>(b"NOPE\x01"), Err(ShvtError::BadMagic)));
        assert!(matches!(decode::<f64>(b"SHVT\x00"), Err(ShvtError::ZeroRank)));
        let t = Tensor::new(&[2], vec![1.0f32, 2.0]).unwrap();
        // f32 payload read as f64
        assert!(matches!(decode::<f64>(&encode(&t).unwrap()), Err(ShvtError::Payload { .. })));
        assert!(decode::<f64>(b"SHVT\x02\x01\x00").is_err());
    }
}
