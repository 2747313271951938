//! Versioned little-endian binary container shared by all model files.
//!
//! Layout: 8-byte magic, u32 format version, u8 model kind, then a stream
//! of tagged fields. Every field starts with its tag string so a reader
//! fails loudly on layout drift. Floats are stored as raw IEEE-754 bits.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DYNKT\0\0\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Factor = 1,
    Dynamic = 2,
}

pub struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub fn new(mut inner: W, kind: ModelKind) -> Result<Self> {
        inner.write_all(MAGIC)?;
        inner.write_all(&FORMAT_VERSION.to_le_bytes())?;
        inner.write_all(&[kind as u8])?;
        Ok(Writer { inner })
    }

    fn tag(&mut self, tag: &str) -> Result<()> {
        let bytes = tag.as_bytes();
        self.inner.write_all(&(bytes.len() as u16).to_le_bytes())?;
        self.inner.write_all(bytes)?;
        Ok(())
    }

    pub fn u64(&mut self, tag: &str, v: u64) -> Result<()> {
        self.tag(tag)?;
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn f64(&mut self, tag: &str, v: f64) -> Result<()> {
        self.u64(tag, v.to_bits())
    }

    pub fn f64s(&mut self, tag: &str, vs: &[f64]) -> Result<()> {
        self.tag(tag)?;
        self.inner.write_all(&(vs.len() as u64).to_le_bytes())?;
        for v in vs {
            self.inner.write_all(&v.to_bits().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn i64s(&mut self, tag: &str, vs: &[i64]) -> Result<()> {
        self.tag(tag)?;
        self.inner.write_all(&(vs.len() as u64).to_le_bytes())?;
        for v in vs {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    pub fn new(mut inner: R, kind: ModelKind) -> Result<Self> {
        let mut magic = [0u8; 8];
        inner.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut ver = [0u8; 4];
        inner.read_exact(&mut ver)?;
        let ver = u32::from_le_bytes(ver);
        if ver != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {ver}")));
        }
        let mut k = [0u8; 1];
        inner.read_exact(&mut k)?;
        if k[0] != kind as u8 {
            return Err(Error::Format(format!(
                "model kind {} where {} was expected",
                k[0], kind as u8
            )));
        }
        Ok(Reader { inner })
    }

    fn raw_u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn expect_tag(&mut self, tag: &str) -> Result<()> {
        let mut len = [0u8; 2];
        self.inner.read_exact(&mut len)?;
        let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
        self.inner.read_exact(&mut buf)?;
        if buf != tag.as_bytes() {
            return Err(Error::Format(format!(
                "expected field {tag:?}, found {:?}",
                String::from_utf8_lossy(&buf)
            )));
        }
        Ok(())
    }

    pub fn u64(&mut self, tag: &str) -> Result<u64> {
        self.expect_tag(tag)?;
        self.raw_u64()
    }

    pub fn usize(&mut self, tag: &str) -> Result<usize> {
        usize::try_from(self.u64(tag)?).map_err(|_| Error::Format(format!("{tag} overflows usize")))
    }

    pub fn f64(&mut self, tag: &str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(tag)?))
    }

    fn len(&mut self, tag: &str) -> Result<usize> {
        self.expect_tag(tag)?;
        let n = self.raw_u64()?;
        if n > (1 << 40) {
            return Err(Error::Format(format!("{tag}: implausible length {n}")));
        }
        Ok(n as usize)
    }

    pub fn f64s(&mut self, tag: &str) -> Result<Vec<f64>> {
        let n = self.len(tag)?;
        (0..n).map(|_| self.raw_u64().map(f64::from_bits)).collect()
    }

    pub fn i64s(&mut self, tag: &str) -> Result<Vec<i64>> {
        let n = self.len(tag)?;
        (0..n).map(|_| self.raw_u64().map(|v| v as i64)).collect()
    }

    /// Fails unless the stream is exhausted.
    pub fn finish(mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after model".into())),
        }
    }
}
