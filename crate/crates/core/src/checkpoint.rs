//! Versioned binary container for network weights and training state.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "TCYCKPT\0"
//! version      u32      currently 1
//! header_len   u32      followed by header_len bytes of UTF-8 JSON
//! n_sections   u32
//! per section:
//!   name_len u16, name bytes
//!   n_arrays u32
//!   per array:
//!     name_len u16, name bytes
//!     dtype    u8       0 = f32, 1 = f64
//!     ndim     u8
//!     dims     ndim x u64
//!     n_bytes  u64      followed by the row-major element bytes
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempcycle_autograd::{DType, Scalar, Tensor};

use crate::error::{io_err, Error, Result};
use crate::nets::ParamSet;

pub const MAGIC: &[u8; 8] = b"TCYCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub bytes: Vec<u8>,
}

impl NamedArray {
    pub fn from_tensor<T: Scalar>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        let mut bytes = Vec::with_capacity(t.numel() * T::DTYPE.size_of());
        for &v in t.data() {
            v.write_le(&mut bytes);
        }
        Self {
            name: name.into(),
            dtype: T::DTYPE,
            shape: t.shape().to_vec(),
            bytes,
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> std::result::Result<Tensor<T>, String> {
        if self.dtype != T::DTYPE {
            return Err(format!(
                "array {} has dtype {:?}, expected {:?}",
                self.name,
                self.dtype,
                T::DTYPE
            ));
        }
        let data = self
            .bytes
            .chunks_exact(T::DTYPE.size_of())
            .map(T::read_le)
            .collect();
        Tensor::new(self.shape.clone(), data).map_err(|e| format!("array {}: {e}", self.name))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Section {
    pub name: String,
    pub arrays: Vec<NamedArray>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            arrays: Vec::new(),
        }
    }

    pub fn from_params<T: Scalar>(name: impl Into<String>, params: &ParamSet<T>) -> Self {
        Self {
            name: name.into(),
            arrays: params
                .iter()
                .map(|(n, t)| NamedArray::from_tensor(n, t))
                .collect(),
        }
    }

    pub fn push<T: Scalar>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        self.arrays.push(NamedArray::from_tensor(name, t));
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn to_params<T: Scalar>(&self) -> std::result::Result<ParamSet<T>, String> {
        let mut p = ParamSet::default();
        for a in &self.arrays {
            p.push(a.name.clone(), a.to_tensor()?);
        }
        Ok(p)
    }
}

/// JSON header plus named sections of arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: serde_json::Value,
    pub sections: Vec<Section>,
}

impl Container {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.header).expect("json header");
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for s in &self.sections {
            write_name(&mut out, &s.name);
            out.extend_from_slice(&(s.arrays.len() as u32).to_le_bytes());
            for a in &s.arrays {
                write_name(&mut out, &a.name);
                out.push(a.dtype.code());
                out.push(a.shape.len() as u8);
                for &d in &a.shape {
                    out.extend_from_slice(&(d as u64).to_le_bytes());
                }
                out.extend_from_slice(&(a.bytes.len() as u64).to_le_bytes());
                out.extend_from_slice(&a.bytes);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let header_len = r.u32()? as usize;
        let header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| format!("header: {e}"))?;
        let n_sections = r.u32()?;
        let mut sections = Vec::new();
        for _ in 0..n_sections {
            let name = r.name()?;
            let n_arrays = r.u32()?;
            let mut arrays = Vec::new();
            for _ in 0..n_arrays {
                let aname = r.name()?;
                let dtype = DType::from_code(r.u8()?).ok_or("unknown dtype code")?;
                let ndim = r.u8()? as usize;
                let shape = (0..ndim)
                    .map(|_| r.u64().map(|d| d as usize))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let n_bytes = r.u64()? as usize;
                let numel: usize = shape.iter().product();
                if n_bytes != numel * dtype.size_of() {
                    return Err(format!("array {aname}: {n_bytes} bytes for shape {shape:?}"));
                }
                arrays.push(NamedArray {
                    name: aname,
                    dtype,
                    shape,
                    bytes: r.take(n_bytes)?.to_vec(),
                });
            }
            sections.push(Section { name, arrays });
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(Self { header, sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        // write-then-rename so a crash never leaves a truncated checkpoint
        let tmp = path.with_extension("partial");
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&self.to_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes).map_err(|reason| checkpoint_error(path, reason))
    }
}

pub(crate) fn checkpoint_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: PathBuf::from(path),
        reason: reason.into(),
    }
}

fn write_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> std::result::Result<&'b [u8], String> {
        let end = self.pos.checked_add(n).ok_or("length overflow")?;
        if end > self.bytes.len() {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn name(&mut self) -> std::result::Result<String, String> {
        let n = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
}
