//! Parameter checkpoint files.
//!
//! Layout, all integers little-endian `u32`, all values little-endian `f64`:
//!
//! ```text
//! magic    8 bytes  b"MITCKPT\0"
//! version  u32      1
//! count    u32      number of parameter records
//! record   repeated `count` times:
//!   name_len u32, name (UTF-8, name_len bytes),
//!   rows u32, cols u32, rows*cols f64 values in row-major order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MITCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub value: Tensor,
}

pub fn write(store: &ParamStore, mut out: impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(store.len() as u32).to_le_bytes())?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&(p.value.rows() as u32).to_le_bytes())?;
        out.write_all(&(p.value.cols() as u32).to_le_bytes())?;
        for v in p.value.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!(
                "unexpected end of file at byte {} (needed {n} more)",
                self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn parse(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = c.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rows = c.u32()? as usize;
        let cols = c.u32()? as usize;
        let data = (0..rows * cols).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        records.push(Record {
            name,
            value: Tensor::from_vec(rows, cols, data)?,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(records)
}

/// Overwrites every parameter of `store` from `records`, matched by name.
pub fn restore(store: &mut ParamStore, records: &[Record]) -> Result<()> {
    for p in store.iter_mut() {
        let r = records
            .iter()
            .find(|r| r.name == p.name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{}`", p.name)))?;
        if r.value.shape() != p.value.shape() {
            return Err(Error::Checkpoint(format!(
                "`{}` has shape {:?} in file, {:?} in model",
                p.name,
                r.value.shape(),
                p.value.shape()
            )));
        }
        p.value = r.value.clone();
    }
    Ok(())
}

pub fn save(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write(store, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(store: &mut ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    restore(store, &parse(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian() {
        let mut s = ParamStore::new();
        s.add("ab", Tensor::from_vec(1, 2, vec![1.0, -2.5]).unwrap());
        let mut buf = Vec::new();
        write(&s, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(&buf[8..12], &[1, 0, 0, 0]);
        assert_eq!(&buf[12..16], &[1, 0, 0, 0]);
        assert_eq!(&buf[16..20], &[2, 0, 0, 0]);
        assert_eq!(&buf[20..22], b"ab");
        assert_eq!(&buf[22..26], &[1, 0, 0, 0]);
        assert_eq!(&buf[26..30], &[2, 0, 0, 0]);
        assert_eq!(&buf[30..38], &1.0f64.to_le_bytes());
        assert_eq!(buf.len(), 46);
    }

    #[test]
    fn restore_roundtrip_and_errors() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let mut buf = Vec::new();
        write(&s, &mut buf).unwrap();

        let mut t = ParamStore::new();
        t.add("w", Tensor::zeros(2, 2));
        restore(&mut t, &parse(&buf).unwrap()).unwrap();
        assert_eq!(t.flat_values(), vec![1.0, 2.0, 3.0, 4.0]);

        let mut wrong = ParamStore::new();
        wrong.add("w", Tensor::zeros(1, 4));
        assert!(restore(&mut wrong, &parse(&buf).unwrap()).is_err());

        assert!(parse(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(parse(&bad).is_err());
    }
}
