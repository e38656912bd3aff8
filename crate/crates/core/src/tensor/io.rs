//! Binary tensor format: `"NTSR"`, version `u32`, dtype code `u32`, four
//! `u64` dimensions, then the raw payload. All integers and floats are
//! little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NTSR";
const VERSION: u32 = 1;

/// On-disk element type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u32 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(Error::Format(format!("unknown NTSR dtype code {other}"))),
        }
    }
}

pub fn write_ntsr<W: Write>(w: &mut W, t: &Tensor, dtype: Dtype) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dtype.code().to_le_bytes())?;
    for d in t.shape().dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.numel() * 8);
    match dtype {
        Dtype::F64 => t.data().iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        Dtype::F32 => t
            .data()
            .iter()
            .for_each(|&x| buf.extend_from_slice(&(x as f32).to_le_bytes())),
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_ntsr<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad NTSR magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported NTSR version {version}")));
    }
    let dtype = Dtype::from_code(read_u32(r)?)?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = usize::try_from(read_u64(r)?)
            .map_err(|_| Error::Format("NTSR dimension overflows usize".into()))?;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("NTSR element count overflows".into()))?;
    let width = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let mut raw = vec![0u8; n * width];
    r.read_exact(&mut raw)?;
    let data = match dtype {
        Dtype::F64 => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Tensor::from_vec(shape, data)
}

pub fn write_ntsr_file(path: impl AsRef<Path>, t: &Tensor, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(Error::at_path(path))?);
    write_ntsr(&mut f, t, dtype)?;
    f.flush().map_err(Error::at_path(path))?;
    Ok(())
}

pub fn read_ntsr_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let mut f = std::io::BufReader::new(std::fs::File::open(path).map_err(Error::at_path(path))?);
    read_ntsr(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_ntsr(&mut buf, &t, Dtype::F64).unwrap();
        assert_eq!(&buf[..4], b"NTSR");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[36..44].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 44 + 16);
        assert_eq!(f64::from_le_bytes(buf[52..60].try_into().unwrap()), -2.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_ntsr(&mut &b"XXXX\x01\0\0\0"[..]).is_err());
        let t = Tensor::zeros(Shape::new(1, 1, 2, 2));
        let mut buf = Vec::new();
        write_ntsr(&mut buf, &t, Dtype::F32).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_ntsr(&mut buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(dims in prop::array::uniform4(1usize..4), seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
            let t = Tensor::randn(shape, 3.0, &mut rng);
            let mut buf = Vec::new();
            write_ntsr(&mut buf, &t, Dtype::F64).unwrap();
            prop_assert_eq!(read_ntsr(&mut buf.as_slice()).unwrap(), t.clone());

            let mut buf = Vec::new();
            write_ntsr(&mut buf, &t, Dtype::F32).unwrap();
            let back = read_ntsr(&mut buf.as_slice()).unwrap();
            prop_assert!(back.max_abs_diff(&t).unwrap() <= t.max_abs() * 1e-7);
        }
    }
}
