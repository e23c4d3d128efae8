//! `MIAD` dataset files.
//!
//! Layout (little-endian): `"MIAD"`, version u32 = 1, n u32, C u32, ndim u32,
//! dims u32 × ndim, labels u16 × n, data f32 × (n · prod(dims)), row-major
//! per example.

use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::binio::{put_f32, put_u16, put_u32, to_u32, write_atomic, LeReader};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MIAD";
const VERSION: u32 = 1;
const WHAT: &str = "dataset file";

pub fn write_dataset<S: Real>(ds: &Dataset<S>, w: &mut impl Write) -> Result<()> {
    if ds.classes() > u16::MAX as usize + 1 {
        return Err(Error::format(WHAT, "labels must fit in u16"));
    }
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, to_u32(ds.len(), WHAT)?)?;
    put_u32(w, to_u32(ds.classes(), WHAT)?)?;
    put_u32(w, to_u32(ds.shape().len(), WHAT)?)?;
    for &d in ds.shape() {
        put_u32(w, to_u32(d, WHAT)?)?;
    }
    for &y in ds.labels() {
        put_u16(w, y as u16)?;
    }
    for x in ds.inputs() {
        for &v in x.data() {
            put_f32(w, v.as_f64() as f32)?;
        }
    }
    Ok(())
}

pub fn read_dataset<S: Real>(r: impl Read) -> Result<Dataset<S>> {
    let mut r = LeReader::new(r, WHAT);
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(WHAT, format!("unsupported version {version}")));
    }
    let n = r.u32("example count")? as usize;
    let classes = r.u32("class count")? as usize;
    let ndim = r.u32("ndim")? as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::format(WHAT, format!("implausible ndim {ndim}")));
    }
    let dims = (0..ndim)
        .map(|_| r.u32("dims").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let per: usize = dims.iter().product();
    if n == 0 || per == 0 {
        return Err(Error::format(WHAT, "empty dataset"));
    }
    let labels = (0..n)
        .map(|_| r.u16("labels").map(usize::from))
        .collect::<Result<Vec<_>>>()?;
    let mut xs = Vec::with_capacity(n);
    for i in 0..n {
        let data = (0..per)
            .map(|_| r.f32("data").map(|v| S::lit(v as f64)))
            .collect::<Result<Vec<_>>>()?;
        xs.push(Tensor::new(dims.clone(), data).map_err(|e| Error::format(WHAT, format!("example {i}: {e}")))?);
    }
    r.expect_end()?;
    Dataset::new(xs, labels, classes).map_err(|e| Error::format(WHAT, e.to_string()))
}

pub fn save_dataset<S: Real>(ds: &Dataset<S>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf)?;
    write_atomic(path, &buf)
}

pub fn load_dataset<S: Real>(path: &Path) -> Result<Dataset<S>> {
    read_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
}
