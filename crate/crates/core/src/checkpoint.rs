//! Binary model container.
//!
//! Layout (all integers little-endian):
//! `XVQACKPT` magic, `u32` version, `u32` kind length + UTF-8 kind,
//! `u32` dimension count + `u64` dimensions, `u32` tensor count, then per
//! tensor `u32` rank, `u64` shape entries and `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::kernel::{KernelError, Tensor};

pub const MAGIC: &[u8; 8] = b"XVQACKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    Kind { expected: String, found: String },
    #[error("checkpoint layout mismatch: {0}")]
    Layout(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Decoded checkpoint contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub dims: Vec<u64>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(kind: &str, dims: Vec<u64>, tensors: Vec<Tensor>) -> Self {
        Self {
            kind: kind.to_owned(),
            dims,
            tensors,
        }
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.kind != kind {
            return Err(CheckpointError::Kind {
                expected: kind.to_owned(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }

    pub fn dim(&self, i: usize) -> Result<usize, CheckpointError> {
        self.dims
            .get(i)
            .map(|&d| d as usize)
            .ok_or_else(|| CheckpointError::Layout(format!("missing dimension {i}")))
    }

    /// Copies stored tensors into `targets`, checking count and shapes.
    pub fn restore_into(&self, targets: Vec<&mut Tensor>) -> Result<(), CheckpointError> {
        if targets.len() != self.tensors.len() {
            return Err(CheckpointError::Layout(format!(
                "{} stored tensors, model declares {}",
                self.tensors.len(),
                targets.len()
            )));
        }
        for (k, (dst, src)) in targets.into_iter().zip(&self.tensors).enumerate() {
            if dst.shape() != src.shape() {
                return Err(CheckpointError::Layout(format!(
                    "tensor {k}: stored {:?}, model {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.kind.len() as u32).to_le_bytes())?;
        w.write_all(self.kind.as_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for d in &self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for s in t.shape() {
                w.write_all(&(*s as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let n = read_u32(&mut r)? as usize;
        let mut kind = vec![0u8; n];
        r.read_exact(&mut kind)?;
        let kind = String::from_utf8(kind)
            .map_err(|_| CheckpointError::Layout("kind is not UTF-8".into()))?;
        let dims = (0..read_u32(&mut r)?)
            .map(|_| read_u64(&mut r))
            .collect::<Result<Vec<_>, _>>()?;
        let count = read_u32(&mut r)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let rank = read_u32(&mut r)?;
            let shape = (0..rank)
                .map(|_| read_u64(&mut r).map(|s| s as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            tensors.push(Tensor::new(shape, data)?);
        }
        Ok(Self {
            kind,
            dims,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint::new(
            "toy",
            vec![2, 3],
            vec![
                Tensor::matrix(2, 3, vec![1.0, -2.5, 0.0, 1e-300, f64::MAX, 3.0]).unwrap(),
                Tensor::vector(vec![0.1]),
            ],
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(Checkpoint::read_from(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn rejects_foreign_bytes_and_versions() {
        assert!(matches!(
            Checkpoint::read_from(&b"NOTACKPTxxxx"[..]),
            Err(CheckpointError::Magic)
        ));
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        buf[8] = 9;
        assert!(matches!(
            Checkpoint::read_from(&buf[..]),
            Err(CheckpointError::Version(9))
        ));
        assert!(Checkpoint::read_from(&buf[..20]).is_err());
    }

    #[test]
    fn restore_checks_shapes() {
        let ck = sample();
        let mut a = Tensor::zeros(&[2, 3]);
        let mut b = Tensor::zeros(&[2]);
        assert!(ck.restore_into(vec![&mut a, &mut b]).is_err());
        let mut b = Tensor::zeros(&[1]);
        ck.restore_into(vec![&mut a, &mut b]).unwrap();
        assert_eq!(a, ck.tensors[0]);
        assert!(ck.expect_kind("other").is_err());
    }
}
