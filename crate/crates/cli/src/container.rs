//! `GTC1` tensor container.
//!
//! ```text
//! magic   b"GTC1"
//! count   u32
//! repeat count times:
//!   name_len u16, name (UTF-8), rank u32, dims u32 × rank,
//!   payload f32 × product(dims), row-major
//! ```
//! All integers and floats little-endian. Names are unique.

use std::path::Path;

use gma3d_core::numkern::DenseArray;
use gma3d_core::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GTC1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    /// Widens to `f64`. Fails for rank 0 or zero-sized dims.
    pub fn to_array(&self) -> Result<DenseArray<f64>> {
        DenseArray::new(
            self.dims.clone(),
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .map_err(|e| Error::Format(format!("tensor '{}': {e}", self.name)))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorContainer {
    tensors: Vec<Tensor>,
}

impl TensorContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Looks up a tensor and widens it, failing if absent.
    pub fn array(&self, name: &str) -> Result<DenseArray<f64>> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("container has no tensor '{name}'")))?
            .to_array()
    }

    pub fn push_raw(&mut self, name: &str, dims: Vec<usize>, data: Vec<f32>) -> Result<()> {
        if self.get(name).is_some() {
            return Err(Error::Format(format!("duplicate tensor name '{name}'")));
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::Format(format!(
                "tensor name of {} bytes is too long",
                name.len()
            )));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Format(format!(
                "tensor '{name}' has dims {dims:?} but {} values",
                data.len()
            )));
        }
        self.tensors.push(Tensor {
            name: name.to_string(),
            dims,
            data,
        });
        Ok(())
    }

    /// Rounds to `f32` on the way in.
    pub fn push(&mut self, name: &str, a: &DenseArray<f64>) -> Result<()> {
        self.push_raw(
            name,
            a.shape().to_vec(),
            a.data().iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, expected GTC1".into()));
        }
        let count = r.u32()?;
        let mut c = TensorContainer::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| {
                    Error::Format(format!("tensor '{name}' dims {dims:?} exceed the file"))
                })?;
            let data = r
                .take(4 * n)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            c.push_raw(&name, dims, data)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated container at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
