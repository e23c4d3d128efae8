//! `MIAM` model checkpoints.
//!
//! Layout (little-endian):
//! ```text
//! "MIAM" | version u32 = 1
//! input ndim u32 | dims u32 × ndim | classes u32
//! layer count u32
//! per layer: id length u32 | id UTF-8 bytes | kind tag u32 | extents u32 × k
//! parameters f64 × |θ| in declaration order
//! ```
//! Kind tags and extents: 0 Dense(in, out), 1 Conv2d(in_ch, out_ch, k, stride, pad),
//! 2 ReLU, 3 Flatten, 4 MeanPool2d(k), 5 LayerNorm(dim).

use std::io::{Read, Write};
use std::path::Path;

use super::{Layer, Model, ModelSpec, ParamSet};
use crate::binio::{put_f64, put_u32, to_u32, write_atomic, LeReader};
use crate::error::{Error, Result};
use crate::layers::LayerKind;
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"MIAM";
const VERSION: u32 = 1;
const WHAT: &str = "model checkpoint";

fn kind_fields(kind: &LayerKind) -> (u32, Vec<usize>) {
    match *kind {
        LayerKind::Dense { inputs, outputs } => (0, vec![inputs, outputs]),
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => (1, vec![in_channels, out_channels, kernel, stride, padding]),
        LayerKind::Relu => (2, vec![]),
        LayerKind::Flatten => (3, vec![]),
        LayerKind::MeanPool2d { kernel } => (4, vec![kernel]),
        LayerKind::LayerNorm { dim } => (5, vec![dim]),
    }
}

pub fn write_checkpoint<S: Real>(model: &Model<S>, w: &mut impl Write) -> Result<()> {
    let spec = model.spec();
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, to_u32(spec.input_shape().len(), WHAT)?)?;
    for &d in spec.input_shape() {
        put_u32(w, to_u32(d, WHAT)?)?;
    }
    put_u32(w, to_u32(spec.classes(), WHAT)?)?;
    put_u32(w, to_u32(spec.layers().len(), WHAT)?)?;
    for layer in spec.layers() {
        put_u32(w, to_u32(layer.id.len(), WHAT)?)?;
        w.write_all(layer.id.as_bytes())?;
        let (tag, extents) = kind_fields(&layer.kind);
        put_u32(w, tag)?;
        for e in extents {
            put_u32(w, to_u32(e, WHAT)?)?;
        }
    }
    for v in model.params().flatten() {
        put_f64(w, v.as_f64())?;
    }
    Ok(())
}

pub fn read_checkpoint<S: Real>(r: impl Read) -> Result<Model<S>> {
    let mut r = LeReader::new(r, WHAT);
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(WHAT, format!("unsupported version {version}")));
    }
    let ndim = r.u32("input ndim")? as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::format(WHAT, format!("implausible input ndim {ndim}")));
    }
    let input_shape = (0..ndim)
        .map(|_| r.u32("input dims").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let classes = r.u32("classes")? as usize;
    let count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let id_len = r.u32("layer id length")? as usize;
        if id_len > 4096 {
            return Err(Error::format(WHAT, format!("layer {i}: id length {id_len}")));
        }
        let id = String::from_utf8(r.vec(id_len, "layer id")?)
            .map_err(|_| Error::format(WHAT, format!("layer {i}: id is not UTF-8")))?;
        let tag = r.u32("kind tag")?;
        let mut ext =
            |n: usize| -> Result<Vec<usize>> { (0..n).map(|_| r.u32("extent").map(|v| v as usize)).collect() };
        let kind = match tag {
            0 => {
                let e = ext(2)?;
                LayerKind::Dense {
                    inputs: e[0],
                    outputs: e[1],
                }
            }
            1 => {
                let e = ext(5)?;
                LayerKind::Conv2d {
                    in_channels: e[0],
                    out_channels: e[1],
                    kernel: e[2],
                    stride: e[3],
                    padding: e[4],
                }
            }
            2 => LayerKind::Relu,
            3 => LayerKind::Flatten,
            4 => LayerKind::MeanPool2d { kernel: ext(1)?[0] },
            5 => LayerKind::LayerNorm { dim: ext(1)?[0] },
            other => return Err(Error::format(WHAT, format!("layer {i}: unknown kind tag {other}"))),
        };
        layers.push(Layer { id, kind });
    }
    let spec = ModelSpec::new(layers, input_shape, classes)
        .map_err(|e| Error::format(WHAT, format!("invalid model description: {e}")))?;
    let template = ParamSet::<S>::zeros(&spec);
    let flat = (0..template.len())
        .map(|_| r.f64("parameters").map(S::lit))
        .collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    let params = template.unflatten(&flat)?;
    Model::new(spec, params)
}

pub fn save_checkpoint<S: Real>(model: &Model<S>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    write_atomic(path, &buf)
}

pub fn load_checkpoint<S: Real>(path: &Path) -> Result<Model<S>> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Architecture};
    use crate::tensor::Tensor;

    #[test]
    fn roundtrip_reproduces_forward_bitwise() {
        let model = build_model::<f64>(Architecture::TinyCnn, &[2, 8, 8], 3, 11).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"MIAM");
        let back: Model<f64> = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, model);
        let x = Tensor::from_f64(vec![2, 8, 8], &(0..128).map(|i| (i as f64).sin()).collect::<Vec<_>>()).unwrap();
        let a = model.forward(&x).unwrap();
        let b = back.forward(&x).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let model = build_model::<f64>(Architecture::TinyMlp, &[4], 2, 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        let err = read_checkpoint::<f64>(&buf[..buf.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint::<f64>(bad.as_slice()).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint::<f64>(long.as_slice()).is_err());
    }
}
