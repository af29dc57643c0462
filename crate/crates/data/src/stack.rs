//! CTMR stack file (little-endian):
//!
//! ```text
//! "CTMR" | u8 version=1 | u8 dtype (1=float32, 2=uint8) | u8 ndim |
//! ndim x u32 dims | row-major payload
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use ct2mr_tensor::Tensor;

use crate::{DataError, Result};

const MAGIC: [u8; 4] = *b"CTMR";
const VERSION: u8 = 1;
const DTYPE_F32: u8 = 1;
const DTYPE_U8: u8 = 2;
const MAX_ELEMENTS: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq)]
pub enum StackPayload {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    pub dims: Vec<usize>,
    pub payload: StackPayload,
}

impl Stack {
    pub fn len(&self) -> usize {
        match &self.payload {
            StackPayload::F32(v) => v.len(),
            StackPayload::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_tensor(self) -> Result<Tensor> {
        match self.payload {
            StackPayload::F32(v) => Ok(Tensor::new(self.dims, v)?),
            StackPayload::U8(_) => Err(DataError::InvalidScan {
                scan: String::new(),
                details: "expected a float32 stack, found uint8".to_string(),
            }),
        }
    }

    pub fn into_mask(self) -> Result<Vec<u8>> {
        match self.payload {
            StackPayload::U8(v) => Ok(v),
            StackPayload::F32(_) => Err(DataError::InvalidScan {
                scan: String::new(),
                details: "expected a uint8 stack, found float32".to_string(),
            }),
        }
    }
}

fn write_header<W: Write>(w: &mut W, dtype: u8, dims: &[usize]) -> Result<()> {
    if dims.len() > u8::MAX as usize {
        return Err(DataError::DimOverflow(format!("rank {} exceeds 255", dims.len())));
    }
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION, dtype, dims.len() as u8])?;
    for &d in dims {
        let d32 =
            u32::try_from(d).map_err(|_| DataError::DimOverflow(format!("dimension {d}")))?;
        w.write_all(&d32.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_stack_f32(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::IoAt {
        path: path.to_path_buf(),
        source: e,
    })?);
    write_header(&mut w, DTYPE_F32, tensor.shape())?;
    for &v in tensor.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stack_u8(path: impl AsRef<Path>, dims: &[usize], data: &[u8]) -> Result<()> {
    let expected: usize = dims.iter().product();
    if expected != data.len() {
        return Err(DataError::DimOverflow(format!(
            "dims {dims:?} need {expected} bytes, got {}",
            data.len()
        )));
    }
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::IoAt {
        path: path.to_path_buf(),
        source: e,
    })?);
    write_header(&mut w, DTYPE_U8, dims)?;
    w.write_all(data)?;
    w.flush()?;
    Ok(())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            DataError::Truncated(what)
        } else {
            DataError::Io(e)
        }
    })
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<Stack> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| {
        if e.kind() == ErrorKind::NotFound {
            DataError::MissingFile(path.to_path_buf())
        } else {
            DataError::IoAt {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?);
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(DataError::BadMagic(magic));
    }
    let mut head = [0u8; 3];
    read_exact_or(&mut r, &mut head, "header")?;
    let [version, dtype, ndim] = head;
    if version != VERSION {
        return Err(DataError::BadVersion(version));
    }
    if dtype != DTYPE_F32 && dtype != DTYPE_U8 {
        return Err(DataError::BadDtype(dtype));
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    let mut elements: u64 = 1;
    for _ in 0..ndim {
        let mut b = [0u8; 4];
        read_exact_or(&mut r, &mut b, "dimension")?;
        let d = u32::from_le_bytes(b);
        elements = elements.saturating_mul(d as u64);
        if elements > MAX_ELEMENTS {
            return Err(DataError::DimOverflow(format!(
                "more than {MAX_ELEMENTS} elements claimed"
            )));
        }
        dims.push(d as usize);
    }
    let n = elements as usize;
    let payload = match dtype {
        DTYPE_F32 => {
            let mut bytes = vec![0u8; n * 4];
            read_exact_or(&mut r, &mut bytes, "payload")?;
            StackPayload::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        }
        _ => {
            let mut bytes = vec![0u8; n];
            read_exact_or(&mut r, &mut bytes, "payload")?;
            StackPayload::U8(bytes)
        }
    };
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(DataError::TrailingData);
    }
    Ok(Stack { dims, payload })
}
