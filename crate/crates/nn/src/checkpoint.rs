//! Versioned binary checkpoint container (little-endian):
//!
//! ```text
//! "CKPT" | u8 version=1 | u32 count |
//!   per parameter: u16 name_len | name UTF-8 | u8 ndim | ndim x u32 dims | f32 payload
//! ```
//!
//! optionally followed by an optimizer block with the same entry layout,
//! prefixed by magic "ADAM": per-parameter `<name>.m` / `<name>.v` moment
//! buffers plus `adam.t`, `adam.lr`, `adam.beta1`, `adam.beta2`, `adam.eps`
//! singletons.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use ct2mr_tensor::Tensor;

use crate::{AdamHyper, AdamState, NnError, ParamSet, Result};

const PARAM_MAGIC: [u8; 4] = *b"CKPT";
const ADAM_MAGIC: [u8; 4] = *b"ADAM";
const VERSION: u8 = 1;

// Guard against allocating absurd buffers from corrupt headers.
const MAX_ELEMENTS: u64 = 1 << 31;

fn write_entry<W: Write>(w: &mut W, name: &str, tensor: &Tensor) -> Result<()> {
    let name_bytes = name.as_bytes();
    if name_bytes.len() > u16::MAX as usize {
        return Err(NnError::DimOverflow(format!("name '{name}' too long")));
    }
    if tensor.shape().len() > u8::MAX as usize {
        return Err(NnError::DimOverflow(format!("rank of '{name}' exceeds 255")));
    }
    w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
    w.write_all(name_bytes)?;
    w.write_all(&[tensor.shape().len() as u8])?;
    for &d in tensor.shape() {
        let d32 = u32::try_from(d)
            .map_err(|_| NnError::DimOverflow(format!("dimension {d} of '{name}'")))?;
        w.write_all(&d32.to_le_bytes())?;
    }
    for &v in tensor.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_block<W: Write>(
    w: &mut W,
    magic: &[u8; 4],
    entries: &[(&str, &Tensor)],
) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&[VERSION])?;
    let count = u32::try_from(entries.len())
        .map_err(|_| NnError::DimOverflow("entry count".to_string()))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, tensor) in entries {
        write_entry(w, name, tensor)?;
    }
    Ok(())
}

/// Serialize parameters (and optionally optimizer state) to `path`.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ParamSet,
    adam: Option<&AdamState>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let entries: Vec<(&str, &Tensor)> = params.iter().collect();
    write_block(&mut w, &PARAM_MAGIC, &entries)?;

    if let Some(state) = adam {
        let (m, v) = state.buffers();
        let scalars = [
            ("adam.t", Tensor::new(vec![1], vec![state.step as f32])?),
            ("adam.lr", Tensor::new(vec![1], vec![state.hyper.lr])?),
            ("adam.beta1", Tensor::new(vec![1], vec![state.hyper.beta1])?),
            ("adam.beta2", Tensor::new(vec![1], vec![state.hyper.beta2])?),
            ("adam.eps", Tensor::new(vec![1], vec![state.hyper.eps])?),
        ];
        let mut names: Vec<String> = Vec::with_capacity(2 * params.len());
        for (name, _) in params.iter() {
            names.push(format!("{name}.m"));
            names.push(format!("{name}.v"));
        }
        let mut entries: Vec<(&str, &Tensor)> = Vec::with_capacity(names.len() + scalars.len());
        for (i, _) in params.iter().enumerate() {
            entries.push((&names[2 * i], &m[i]));
            entries.push((&names[2 * i + 1], &v[i]));
        }
        for (n, t) in &scalars {
            entries.push((n, t));
        }
        write_block(&mut w, &ADAM_MAGIC, &entries)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            NnError::Truncated(what)
        } else {
            NnError::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read, what: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_entry(r: &mut impl Read) -> Result<(String, Tensor)> {
    let mut len = [0u8; 2];
    read_exact_or(r, &mut len, "entry name length")?;
    let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
    read_exact_or(r, &mut name, "entry name")?;
    let name = String::from_utf8(name).map_err(|_| NnError::NameEncoding)?;
    let mut ndim = [0u8; 1];
    read_exact_or(r, &mut ndim, "entry rank")?;
    let mut dims = Vec::with_capacity(ndim[0] as usize);
    let mut elements: u64 = 1;
    for _ in 0..ndim[0] {
        let d = read_u32(r, "entry dimension")?;
        elements = elements.saturating_mul(d as u64);
        if elements > MAX_ELEMENTS {
            return Err(NnError::DimOverflow(format!(
                "entry '{name}' claims more than {MAX_ELEMENTS} elements"
            )));
        }
        dims.push(d as usize);
    }
    let mut payload = vec![0u8; elements as usize * 4];
    read_exact_or(r, &mut payload, "entry payload")?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((name, Tensor::new(dims, data)?))
}

fn read_block(r: &mut impl Read, expected_magic: &[u8; 4]) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    read_exact_or(r, &mut magic, "block magic")?;
    if magic != *expected_magic {
        return Err(NnError::BadMagic {
            expected: *expected_magic,
            got: magic,
        });
    }
    let mut version = [0u8; 1];
    read_exact_or(r, &mut version, "block version")?;
    if version[0] != VERSION {
        return Err(NnError::BadVersion(version[0]));
    }
    let count = read_u32(r, "block count")?;
    (0..count).map(|_| read_entry(r)).collect()
}

/// Load a checkpoint. Any malformed container yields an error and no
/// partially filled state.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParamSet, Option<AdamState>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut params = ParamSet::new();
    for (name, tensor) in read_block(&mut r, &PARAM_MAGIC)? {
        params.insert(name, tensor)?;
    }

    // Peek for the optional optimizer block.
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => return Ok((params, None)),
        _ => {
            let rest = &mut r;
            let mut magic = [probe[0], 0, 0, 0];
            read_exact_or(rest, &mut magic[1..], "optimizer magic")?;
            if magic != ADAM_MAGIC {
                return Err(NnError::BadMagic {
                    expected: ADAM_MAGIC,
                    got: magic,
                });
            }
            let mut version = [0u8; 1];
            read_exact_or(rest, &mut version, "optimizer version")?;
            if version[0] != VERSION {
                return Err(NnError::BadVersion(version[0]));
            }
            let count = read_u32(rest, "optimizer count")?;
            let mut entries = Vec::with_capacity(count as usize);
            for _ in 0..count {
                entries.push(read_entry(rest)?);
            }
            if rest.read(&mut probe)? != 0 {
                return Err(NnError::TrailingData);
            }
            let state = rebuild_adam(&params, entries)?;
            Ok((params, Some(state)))
        }
    }
}

fn rebuild_adam(params: &ParamSet, entries: Vec<(String, Tensor)>) -> Result<AdamState> {
    let expected = 2 * params.len() + 5;
    if entries.len() != expected {
        return Err(NnError::AdamMismatch(format!(
            "expected {expected} optimizer entries, found {}",
            entries.len()
        )));
    }
    let mut m = Vec::with_capacity(params.len());
    let mut v = Vec::with_capacity(params.len());
    for (i, (name, tensor)) in params.iter().enumerate() {
        for (buf, suffix) in [(&mut m, "m"), (&mut v, "v")] {
            let idx = 2 * i + usize::from(suffix == "v");
            let (entry_name, entry) = &entries[idx];
            let want = format!("{name}.{suffix}");
            if *entry_name != want {
                return Err(NnError::AdamMismatch(format!(
                    "expected entry '{want}', found '{entry_name}'"
                )));
            }
            if entry.shape() != tensor.shape() {
                return Err(NnError::AdamMismatch(format!(
                    "moment '{want}' shape {:?} does not match parameter {:?}",
                    entry.shape(),
                    tensor.shape()
                )));
            }
            buf.push(entry.clone());
        }
    }
    let scalar = |offset: usize, want: &str| -> Result<f32> {
        let (name, t) = &entries[2 * params.len() + offset];
        if name != want || !t.is_scalar() {
            return Err(NnError::AdamMismatch(format!(
                "expected scalar entry '{want}', found '{name}'"
            )));
        }
        Ok(t.data()[0])
    };
    let step = scalar(0, "adam.t")? as u64;
    let hyper = AdamHyper {
        lr: scalar(1, "adam.lr")?,
        beta1: scalar(2, "adam.beta1")?,
        beta2: scalar(3, "adam.beta2")?,
        eps: scalar(4, "adam.eps")?,
    };
    Ok(AdamState::from_buffers(hyper, step, m, v))
}
