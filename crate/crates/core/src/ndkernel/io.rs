//! LGT1 tensor files: a text header line `LGT1 <ndim> <d0> <d1> ...\n`
//! followed by the raw little-endian `f64` values in row-major order.

use std::io::{Read, Write};

use super::Tensor;
use crate::error::IoError;

pub const MAGIC: &str = "LGT1";

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> std::io::Result<()> {
    let mut header = format!("{MAGIC} {}", t.ndim());
    for d in t.shape() {
        header.push(' ');
        header.push_str(&d.to_string());
    }
    header.push('\n');
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::new();
    write_tensor(&mut out, t).expect("writing to a Vec cannot fail");
    out
}

/// Parses one tensor starting at `bytes[offset..]`.
///
/// Returns the tensor and the offset just past it. Errors report the
/// absolute byte offset where parsing failed.
pub fn read_tensor_at(bytes: &[u8], offset: usize) -> Result<(Tensor, usize), IoError> {
    let malformed = |at: usize, reason: String| IoError::Malformed { offset: at, reason };
    let rest = &bytes[offset.min(bytes.len())..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| malformed(offset, "missing LGT1 header line".into()))?;
    let header = std::str::from_utf8(&rest[..nl]).map_err(|_| malformed(offset, "header is not UTF-8".into()))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(MAGIC) {
        return Err(malformed(offset, format!("expected magic {MAGIC}")));
    }
    let ndim: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(offset, "bad ndim".into()))?;
    let shape = fields
        .map(|s| s.parse::<usize>().map_err(|_| malformed(offset, format!("bad dimension {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if shape.len() != ndim || shape.contains(&0) {
        return Err(malformed(offset, format!("header declares {ndim} dims but lists {shape:?}")));
    }
    let n: usize = shape.iter().product();
    let body = offset + nl + 1;
    let end = body + n * 8;
    if end > bytes.len() {
        return Err(malformed(
            bytes.len(),
            format!("truncated tensor body: need {} bytes from offset {body}", n * 8),
        ));
    }
    let data = bytes[body..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let t = Tensor::new(shape, data).map_err(|e| malformed(offset, e.to_string()))?;
    Ok((t, end))
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor, IoError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let (t, end) = read_tensor_at(&bytes, 0)?;
    if end != bytes.len() {
        return Err(IoError::Malformed {
            offset: end,
            reason: "trailing bytes after tensor".into(),
        });
    }
    Ok(t)
}

pub fn save_tensor(path: &std::path::Path, t: &Tensor) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensor(&mut f, t)?;
    f.flush()?;
    Ok(())
}

pub fn load_tensor(path: &std::path::Path) -> Result<Tensor, IoError> {
    let mut f = std::fs::File::open(path)?;
    read_tensor(&mut f)
}
