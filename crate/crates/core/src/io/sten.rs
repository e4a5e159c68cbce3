//! STEN: the crate's bit-exact binary tensor format.
//!
//! Layout, all little endian:
//!
//! ```text
//! magic   4 bytes  "STEN"
//! version 1 byte   0x01
//! dtype   1 byte   0x01 = 32-bit real
//! rank    1 byte
//! extents rank x u32
//! payload product(extents) x f32, row major
//! ```
//!
//! Videos (`.vten`), embedding matrices and checkpoint parameter blobs all
//! use this container. The payload is written and read verbatim, so a
//! write/read round trip reproduces every bit, including NaN payloads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: [u8; 4] = *b"STEN";
const VERSION: u8 = 0x01;
const DTYPE_F32: u8 = 0x01;

pub fn write_tensor_to<W: Write>(w: &mut W, t: &Tensor<f32>) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION, DTYPE_F32])?;
    let rank = t.rank();
    assert!(rank <= u8::MAX as usize, "rank exceeds format limit");
    w.write_all(&[rank as u8])?;
    for &d in t.dims() {
        assert!(d <= u32::MAX as usize, "extent exceeds format limit");
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_tensor(path: &Path, t: &Tensor<f32>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor_to(&mut w, t).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tensor_from<R: Read>(r: &mut R, path: &Path) -> Result<Tensor<f32>> {
    let bad = |detail: String| Error::format(path, detail);
    let io = |e: std::io::Error| Error::io(path, e);

    let mut head = [0u8; 7];
    r.read_exact(&mut head).map_err(io)?;
    if head[..4] != MAGIC {
        return Err(bad("bad magic, not a STEN file".into()));
    }
    if head[4] != VERSION {
        return Err(bad(format!("unsupported version {}", head[4])));
    }
    if head[5] != DTYPE_F32 {
        return Err(bad(format!("unsupported dtype {}", head[5])));
    }
    let rank = head[6] as usize;
    if rank == 0 {
        return Err(bad("rank must be at least 1".into()));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(io)?;
        dims.push(u32::from_le_bytes(b) as usize);
    }
    let n = Tensor::<f32>::checked_len(&dims)
        .map_err(|e| bad(format!("invalid extents {dims:?}: {e}")))?;
    let mut payload = vec![0u8; n * 4];
    r.read_exact(&mut payload).map_err(io)?;
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing).map_err(io)? {
        0 => {}
        _ => return Err(bad("trailing bytes after payload".into())),
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(dims, data).map_err(|e| bad(e.to_string()))
}

pub fn read_tensor(path: &Path) -> Result<Tensor<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    read_tensor_from(&mut r, path)
}
