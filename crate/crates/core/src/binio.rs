//! Little-endian binary encoding shared by the model file formats.
//!
//! Every file starts with a four-byte magic tag followed by a `u32` format
//! version; readers reject anything else.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W, magic: &[u8; 4], version: u32) -> std::io::Result<Self> {
        let mut w = BinWriter { inner };
        w.inner.write_all(magic)?;
        w.u32(version)?;
        Ok(w)
    }

    pub fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn f32(&mut self, v: f32) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn str(&mut self, s: &str) -> std::io::Result<()> {
        self.u64(s.len() as u64)?;
        self.inner.write_all(s.as_bytes())
    }

    pub fn u32s(&mut self, vs: &[u32]) -> std::io::Result<()> {
        self.u64(vs.len() as u64)?;
        vs.iter().try_for_each(|&v| self.u32(v))
    }

    pub fn f32s(&mut self, vs: &[f32]) -> std::io::Result<()> {
        self.u64(vs.len() as u64)?;
        vs.iter().try_for_each(|&v| self.f32(v))
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub struct BinReader<R: Read> {
    inner: R,
    what: &'static str,
}

impl<R: Read> BinReader<R> {
    /// Checks the magic tag and returns the reader with the file's version.
    pub fn open(mut inner: R, magic: &[u8; 4], what: &'static str) -> Result<(Self, u32)> {
        let mut tag = [0u8; 4];
        inner
            .read_exact(&mut tag)
            .map_err(|e| Error::format(what, e.to_string()))?;
        if &tag != magic {
            return Err(Error::format(what, "bad magic tag"));
        }
        let mut r = BinReader { inner, what };
        let version = r.u32()?;
        Ok((r, version))
    }

    fn fill<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::format(self.what, e.to_string()))?;
        Ok(buf)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.fill()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.fill()?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.fill()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.fill()?))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > (1 << 34) {
            return Err(Error::format(self.what, format!("implausible length {n}")));
        }
        Ok(n as usize)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::format(self.what, e.to_string()))?;
        String::from_utf8(buf).map_err(|e| Error::format(self.what, e.to_string()))
    }

    pub fn u32s(&mut self) -> Result<Vec<u32>> {
        let n = self.len()?;
        (0..n).map(|_| self.u32()).collect()
    }

    pub fn f32s(&mut self) -> Result<Vec<f32>> {
        let n = self.len()?;
        (0..n).map(|_| self.f32()).collect()
    }
}
