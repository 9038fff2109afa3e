//! Model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "GSTLMODL"
//! version      u32      MODEL_FORMAT_VERSION
//! arch         u8       0 = GIN, 1 = GCN
//! num_layers   u32
//! hidden_dim   u32
//! num_classes  u32
//! feature_dim  u32
//! seed         u64
//! n_tensors    u32
//! n_tensors × { rows u32, cols u32, rows·cols × f64 }   in ModelState::params() order
//! ```

use std::fs;
use std::path::Path;

use super::{Arch, ModelConfig, ModelState};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"GSTLMODL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn encode_model(state: &ModelState) -> Vec<u8> {
    let c = &state.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    out.push(match c.arch {
        Arch::GIN => 0,
        Arch::GCN => 1,
    });
    for v in [c.num_layers, c.hidden_dim, c.num_classes, c.feature_dim] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    let params = state.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.cols() as u32).to_le_bytes());
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::ModelFile(format!("truncated at byte {}", self.buf.len())));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelState> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::ModelFile("bad magic".into()));
    }
    let version = r.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFile(format!(
            "format version {version}, expected {MODEL_FORMAT_VERSION}"
        )));
    }
    let arch = match r.take(1)?[0] {
        0 => Arch::GIN,
        1 => Arch::GCN,
        x => return Err(Error::ModelFile(format!("unknown arch tag {x}"))),
    };
    let config = ModelConfig {
        arch,
        num_layers: r.u32()? as usize,
        hidden_dim: r.u32()? as usize,
        num_classes: r.u32()? as usize,
        feature_dim: r.u32()? as usize,
        seed: r.u64()?,
    };
    let mut state = ModelState::init(&config).map_err(|e| Error::ModelFile(e.to_string()))?;
    let n = r.u32()? as usize;
    let mut params = state.params_mut();
    if n != params.len() {
        return Err(Error::ModelFile(format!("{n} tensors, config implies {}", params.len())));
    }
    for (i, p) in params.iter_mut().enumerate() {
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        if [rows, cols] != p.shape() {
            return Err(Error::ModelFile(format!(
                "tensor {i} is {rows}x{cols}, config implies {:?}",
                p.shape()
            )));
        }
        for v in p.data_mut() {
            *v = r.f64()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::ModelFile("trailing bytes".into()));
    }
    Ok(state)
}

pub fn save_model(state: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(state))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelState> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor;
    use crate::graph::Graph;
    use crate::model::forward;

    fn state() -> ModelState {
        let mut s = ModelState::init(&ModelConfig {
            hidden_dim: 5,
            feature_dim: 3,
            ..Default::default()
        })
        .unwrap();
        s.cls_b = Tensor::row(vec![0.1, -std::f64::consts::PI]);
        s
    }

    #[test]
    fn round_trip_is_bitwise() {
        let s = state();
        let back = decode_model(&encode_model(&s)).unwrap();
        assert_eq!(s, back);
        for (a, b) in s.params().iter().zip(back.params()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn loaded_model_reproduces_logits() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("m.bin");
        let s = state();
        save_model(&s, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let g = Graph::new(
            3,
            vec![(0, 1), (1, 2)],
            Tensor::new(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
            None,
        )
        .unwrap();
        let (a, b) = (forward(&s, &g).unwrap(), forward(&loaded, &g).unwrap());
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn truncated_and_wrong_version() {
        let bytes = encode_model(&state());
        assert!(matches!(decode_model(&bytes[..bytes.len() - 3]), Err(Error::ModelFile(_))));
        let mut v2 = bytes.clone();
        v2[8..12].copy_from_slice(&2u32.to_le_bytes());
        let err = decode_model(&v2).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
