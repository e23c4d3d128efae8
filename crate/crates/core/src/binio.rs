//! Little-endian primitives shared by the binary file formats.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub(crate) fn put_u16(w: &mut impl Write, v: u16) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn put_f32(w: &mut impl Write, v: f32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn put_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn to_u32(v: usize, what: &'static str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format(what, format!("{v} does not fit in u32")))
}

/// Reader that reports truncation as a format error naming the file kind.
pub(crate) struct LeReader<R> {
    inner: R,
    what: &'static str,
}

impl<R: Read> LeReader<R> {
    pub(crate) fn new(inner: R, what: &'static str) -> Self {
        LeReader { inner, what }
    }

    pub(crate) fn bytes<const N: usize>(&mut self, field: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::format(self.what, format!("truncated while reading {field}")),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    pub(crate) fn vec(&mut self, len: usize, field: &str) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        (&mut self.inner)
            .take(len as u64)
            .read_to_end(&mut buf)
            .map_err(Error::Io)?;
        if buf.len() != len {
            return Err(Error::format(self.what, format!("truncated while reading {field}")));
        }
        Ok(buf)
    }

    pub(crate) fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(field)?))
    }

    pub(crate) fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(field)?))
    }

    pub(crate) fn f32(&mut self, field: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(field)?))
    }

    pub(crate) fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(field)?))
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got: [u8; 4] = self.bytes("magic")?;
        if &got != expected {
            return Err(Error::format(
                self.what,
                format!(
                    "bad magic {:?}, expected {:?}",
                    got,
                    std::str::from_utf8(expected).unwrap_or("?")
                ),
            ));
        }
        Ok(())
    }

    pub(crate) fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::format(self.what, "trailing bytes after payload")),
        }
    }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp_name = format!(".{}.tmp", name.to_string_lossy());
    let tmp = match dir {
        Some(d) => d.join(tmp_name),
        None => std::path::PathBuf::from(tmp_name),
    };
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
