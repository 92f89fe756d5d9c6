//! Weight file: `SGCW` magic, then little-endian u32 version, M, p, q, then
//! every weight array as little-endian f32 in canonical order (conv kernel
//! and bias per layer, batch-norm gamma and beta per instance, classifier).
//! Momentum is not stored.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::segnet::{NetworkParams, ParamSet};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: [u8; 4] = *b"SGCW";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model<W: Write>(params: &NetworkParams<f32>, mut out: W) -> std::io::Result<()> {
    let (m, p, q) = params.dims();
    out.write_all(&MODEL_MAGIC)?;
    for v in [MODEL_VERSION, m as u32, p as u32, q as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    for array in params.weights.arrays() {
        for v in array.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

fn read_exact_or(input: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated {
                buffer: what.to_string(),
            }
        } else {
            Error::Format(format!("reading {what}: {e}"))
        }
    })
}

pub fn read_model<R: Read>(mut input: R) -> Result<NetworkParams<f32>> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut input, &mut magic, "magic")?;
    if magic != MODEL_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"SGCW\"")));
    }
    let mut header = [0u32; 4];
    for (v, name) in header.iter_mut().zip(["version", "M", "p", "q"]) {
        let mut b = [0u8; 4];
        read_exact_or(&mut input, &mut b, &format!("header field {name}"))?;
        *v = u32::from_le_bytes(b);
    }
    let [version, m, p, q] = header.map(|v| v as usize);
    if version as u32 != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    if m == 0 || p == 0 || q == 0 || m > 1 << 10 || p > 1 << 16 || q > 1 << 16 {
        return Err(Error::Format(format!("implausible dimensions M={m} p={p} q={q}")));
    }
    let shapes = ParamSet::<f32>::shapes(m, p, q);
    let names = ParamSet::<f32>::names_for(m);
    let mut arrays = Vec::with_capacity(shapes.len());
    for (shape, name) in shapes.iter().zip(&names) {
        let len: usize = shape.iter().product();
        let mut bytes = vec![0u8; 4 * len];
        read_exact_or(&mut input, &mut bytes, name)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        arrays.push(Tensor::from_vec(shape, data)?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after classifier".into()));
    }
    Ok(NetworkParams::from_weights(ParamSet::from_arrays(m, arrays)?))
}

pub fn save_model(params: &NetworkParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(params, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkParams<f32>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(file))
}
