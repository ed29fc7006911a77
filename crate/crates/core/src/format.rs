//! Little-endian binary container helpers shared by the "ROMS", "ROMW",
//! "ROMP" and "ROMD" file formats.
//!
//! Every container starts with a 4-byte ASCII magic followed by a `u32`
//! format version. Integers are `u64`, reals are IEEE-754 `f64`, all
//! little-endian.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported {magic} version {found} (expected {expected})")]
    Version {
        magic: String,
        expected: u32,
        found: u32,
    },

    #[error("truncated file: {missing} more bytes needed while reading {what}")]
    Truncated { what: String, missing: usize },

    #[error("trailing data: {0} unread bytes")]
    Trailing(usize),

    #[error("corrupt header: {0}")]
    Corrupt(String),
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.f64(*v);
        }
    }

    /// Length-prefixed array of reals.
    pub fn f64_array(&mut self, vs: &[f64]) {
        self.usize(vs.len());
        self.f64s(vs);
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn write_to(self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.buf)
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version, leaving the cursor after the header.
    pub fn open(buf: &'a [u8], magic: &[u8; 4], version: u32) -> Result<Self, FormatError> {
        let mut r = Reader { buf, pos: 0 };
        let found = r.take(4, "magic")?;
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let v = r.u32("version")?;
        if v != version {
            return Err(FormatError::Version {
                magic: String::from_utf8_lossy(magic).into_owned(),
                expected: version,
                found: v,
            });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(FormatError::Truncated {
                what: what.to_string(),
                missing: n - available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Fails early when `n` bytes are not available, naming the shortfall.
    pub fn require(&self, n: usize, what: &str) -> Result<(), FormatError> {
        let available = self.buf.len() - self.pos;
        if available < n {
            Err(FormatError::Truncated {
                what: what.to_string(),
                missing: n - available,
            })
        } else {
            Ok(())
        }
    }

    pub fn u8(&mut self, what: &str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    /// Reads a `u64` count, rejecting values that cannot be a sane length.
    pub fn count(&mut self, what: &str) -> Result<usize, FormatError> {
        let v = self.u64(what)?;
        if v > (self.buf.len() as u64).saturating_mul(8).max(1 << 32) {
            return Err(FormatError::Corrupt(format!("{what} = {v} is implausible")));
        }
        Ok(v as usize)
    }

    pub fn f64(&mut self, what: &str) -> Result<f64, FormatError> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, FormatError> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| FormatError::Corrupt(format!("{what}: length overflow")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn f64_array(&mut self, what: &str) -> Result<Vec<f64>, FormatError> {
        let n = self.count(what)?;
        self.f64s(n, what)
    }

    pub fn finish(self) -> Result<(), FormatError> {
        let rest = self.buf.len() - self.pos;
        if rest == 0 {
            Ok(())
        } else {
            Err(FormatError::Trailing(rest))
        }
    }
}
