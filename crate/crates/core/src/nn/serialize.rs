//! Parameter files.
//!
//! Layout, all integers little-endian: the magic `MANN1`, a `u32` record
//! count, then per parameter a `u32` name length, the UTF-8 name, a `u8` dtype
//! tag, a `u32` rank, `rank` dimensions as `u64`, and the values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DType, NnError, ParamStore, Scalar, Tensor};

pub const MAGIC: &[u8; 5] = b"MANN1";

pub fn write_params<T: Scalar, W: Write>(store: &ParamStore<T>, out: &mut W) -> Result<(), NnError> {
    out.write_all(MAGIC)?;
    out.write_all(&(store.len() as u32).to_le_bytes())?;
    let mut buf = Vec::new();
    for p in store.params() {
        out.write_all(&(p.name.len() as u32).to_le_bytes())?;
        out.write_all(p.name.as_bytes())?;
        out.write_all(&[T::DTYPE.tag()])?;
        let shape = p.tensor.shape();
        out.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        buf.clear();
        p.tensor.data().iter().for_each(|&x| x.write_le(&mut buf));
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>, NnError> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|e| NnError::Format(format!("truncated file ({e})")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    Ok(u32::from_le_bytes(read_exact(r, 4)?.try_into().unwrap()))
}

/// Reads a parameter file whose values are stored as `T`.
pub fn read_params<T: Scalar, R: Read>(input: &mut R) -> Result<ParamStore<T>, NnError> {
    if read_exact(input, MAGIC.len())? != MAGIC {
        return Err(NnError::Format("bad magic bytes".into()));
    }
    let count = read_u32(input)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(input)? as usize;
        let name = String::from_utf8(read_exact(input, len)?)
            .map_err(|_| NnError::Format("parameter name is not UTF-8".into()))?;
        let tag = read_exact(input, 1)?[0];
        let dtype =
            DType::from_tag(tag).ok_or_else(|| NnError::Format(format!("unknown dtype tag {tag}")))?;
        if dtype != T::DTYPE {
            return Err(NnError::DtypeMismatch {
                name,
                found: dtype,
                expected: T::DTYPE,
            });
        }
        let rank = read_u32(input)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = u64::from_le_bytes(read_exact(input, 8)?.try_into().unwrap());
            shape.push(d as usize);
        }
        let n: usize = shape.iter().product();
        let width = dtype.width();
        let bytes = read_exact(input, n * width)?;
        let data = bytes.chunks_exact(width).map(T::read_le).collect();
        store.add(name, Tensor::from_vec(&shape, data)?)?;
    }
    Ok(store)
}

pub fn save_params<T: Scalar>(store: &ParamStore<T>, path: &Path) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(store, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_params<T: Scalar>(path: &Path) -> Result<ParamStore<T>, NnError> {
    read_params(&mut BufReader::new(File::open(path)?))
}
