//! Checkpoint file format.
//!
//! Little-endian binary layout:
//!
//! ```text
//! magic        8  bytes  "ODMDDBX1"
//! version      u32       1
//! n            u32
//! input_dim    u32       7
//! hidden       u32
//! fc_width     u32
//! fc_layers    u32
//! loss_mode    u8        0 = rel, 1 = abs
//! xbar_order   u8        0 = observation-major flattening
//! reserved     u16       0
//! tensor_count u32
//! per tensor:  u16 name_len, name bytes, u8 ndim, ndim x u32 dims
//! param_count  u64
//! payload      param_count x f32
//! ```
//!
//! Round-trips are bit-exact: the payload is the flat parameter buffer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DBoxParams, LossMode, NetworkShape, INPUT_DIM};
use crate::error::{OdmdError, Result};

const MAGIC: &[u8; 8] = b"ODMDDBX1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(params: &DBoxParams<f32>, mode: LossMode, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_checkpoint(params, mode, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(
    params: &DBoxParams<f32>,
    mode: LossMode,
    w: &mut W,
) -> Result<()> {
    let shape = params.shape();
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for v in [
        shape.n as u32,
        INPUT_DIM as u32,
        shape.hidden as u32,
        shape.fc_width as u32,
        shape.fc_layers as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&[match mode {
        LossMode::Rel => 0u8,
        LossMode::Abs => 1u8,
    }])?;
    w.write_all(&[0u8])?; // observation-major flattening
    w.write_all(&0u16.to_le_bytes())?;

    let tensors = shape.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in &tensors {
        let name = t.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[t.dims.len() as u8])?;
        for &d in &t.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
    }
    w.write_all(&(params.flat().len() as u64).to_le_bytes())?;
    for v in params.flat() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(DBoxParams<f32>, LossMode)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    read_checkpoint(&mut r)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(DBoxParams<f32>, LossMode)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(OdmdError::Version {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(OdmdError::Version {
            expected: CHECKPOINT_VERSION.to_string(),
            found: version.to_string(),
        });
    }
    let n = read_u32(r)? as usize;
    let input_dim = read_u32(r)? as usize;
    let hidden = read_u32(r)? as usize;
    let fc_width = read_u32(r)? as usize;
    let fc_layers = read_u32(r)? as usize;
    if input_dim != INPUT_DIM {
        return Err(OdmdError::contract(format!(
            "checkpoint input_dim {input_dim} unsupported (expected {INPUT_DIM})"
        )));
    }
    let mut tail = [0u8; 4];
    r.read_exact(&mut tail)?;
    let mode = match tail[0] {
        0 => LossMode::Rel,
        1 => LossMode::Abs,
        other => {
            return Err(OdmdError::contract(format!("unknown loss mode tag {other}")));
        }
    };
    if tail[1] != 0 {
        return Err(OdmdError::contract("unknown input flattening order"));
    }

    let shape = NetworkShape {
        n,
        hidden,
        fc_width,
        fc_layers,
    };
    shape.validate()?;
    let expected = shape.tensors();

    let tensor_count = read_u32(r)? as usize;
    if tensor_count != expected.len() {
        return Err(OdmdError::contract(format!(
            "checkpoint lists {tensor_count} tensors, shape defines {}",
            expected.len()
        )));
    }
    for exp in &expected {
        let name_len = read_u16(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| OdmdError::contract("tensor name is not utf-8"))?;
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        let dims: Vec<usize> = (0..ndim[0])
            .map(|_| read_u32(r).map(|d| d as usize))
            .collect::<Result<_>>()?;
        if name != exp.name || dims != exp.dims {
            return Err(OdmdError::contract(format!(
                "tensor mismatch: checkpoint has {name} {dims:?}, shape expects {} {:?}",
                exp.name, exp.dims
            )));
        }
    }

    let param_count = read_u64(r)? as usize;
    if param_count != shape.param_count() {
        return Err(OdmdError::contract(format!(
            "payload holds {param_count} parameters, shape needs {}",
            shape.param_count()
        )));
    }
    let mut params = DBoxParams::zeros(shape);
    let mut buf = [0u8; 4];
    for v in params.flat_mut() {
        r.read_exact(&mut buf)?;
        *v = f32::from_le_bytes(buf);
    }
    Ok((params, mode))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
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
