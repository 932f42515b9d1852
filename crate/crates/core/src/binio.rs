//! Little-endian binary helpers shared by the weight, model, and
//! correlation file formats. Every format ends with a CRC32 (IEEE) of all
//! preceding bytes.

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4]) -> Self {
        Self { buf: magic.to_vec() }
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f64) {
        self.buf.extend_from_slice(&(v as f32).to_le_bytes());
    }

    pub fn f32s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 4);
        for &v in vs {
            self.f32(v);
        }
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        let len = u16::try_from(s.len()).map_err(|_| Error::InvalidArgument(format!("name too long: {s}")))?;
        self.u16(len);
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    format: &'static str,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks the magic; the trailing checksum is verified by [`Reader::finish`].
    pub fn new(format: &'static str, magic: &[u8; 4], data: &'a [u8]) -> Result<Self> {
        if data.len() < 4 || &data[..4] != magic {
            return Err(Error::format(format, format!("missing {:?} magic", std::str::from_utf8(magic).unwrap_or("?"))));
        }
        Ok(Self { format, data, pos: 4 })
    }

    fn take(&mut self, n: usize, what: &dyn Fn() -> String) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::format(self.format, format!("truncated while reading {}", what())));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u16(&mut self, what: &dyn Fn() -> String) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &dyn Fn() -> String) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize, what: &dyn Fn() -> String) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format(self.format, "size overflow"))?, what)?;
        let out: Vec<f64> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(self.format, format!("non-finite value in {}", what())));
        }
        Ok(out)
    }

    pub fn str(&mut self, what: &dyn Fn() -> String) -> Result<String> {
        let len = self.u16(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::format(self.format, format!("invalid UTF-8 in {}", what())))
    }

    /// Expects exactly the 4 checksum bytes to remain and verifies them.
    pub fn finish(self) -> Result<()> {
        let rest = self.data.len() - self.pos;
        if rest != 4 {
            return Err(Error::format(
                self.format,
                if rest < 4 { "truncated checksum".to_string() } else { format!("{} trailing bytes", rest - 4) },
            ));
        }
        let stored = u32::from_le_bytes(self.data[self.pos..].try_into().unwrap());
        let computed = crc32fast::hash(&self.data[..self.pos]);
        if stored != computed {
            return Err(Error::Checksum { format: self.format, stored, computed });
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
