//! Tensor serialization.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! b"DTEN" | rank: u32 | dims: rank x u64 | data: prod(dims) x f64
//! ```
//!
//! TSV export writes one matrix row per line with shortest round-trip
//! float formatting, so `read_tsv(write_tsv(t))` is exact.

use std::io::{BufRead, Read, Write};

use super::{NumericError, Tensor};

const MAGIC: &[u8; 4] = b"DTEN";

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<(), NumericError> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &x in t.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor, NumericError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NumericError::Format("bad tensor magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let rank = u32::from_le_bytes(b4) as usize;
    if rank == 0 || rank > 8 {
        return Err(NumericError::Format(format!("unsupported rank {rank}")));
    }
    let mut b8 = [0u8; 8];
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut b8)?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    Tensor::new(shape, data)
}

pub fn write_tsv<W: Write>(w: &mut W, t: &Tensor) -> Result<(), NumericError> {
    for i in 0..t.rows() {
        let line: Vec<String> = t.row(i).iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", line.join("\t"))?;
    }
    Ok(())
}

pub fn read_tsv<R: BufRead>(r: R) -> Result<Tensor, NumericError> {
    let mut rows = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split('\t')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| NumericError::Format(format!("line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    Tensor::from_rows(&rows)
}
