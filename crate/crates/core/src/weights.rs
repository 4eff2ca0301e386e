//! Binary weight file.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "NPTIWGT"                    7-byte magic
//! version                      currently 1
//! n_layers d_model d_ff n_heads vocab_size max_seq_len activation
//! tensor_count
//! repeated: name_len name[name_len] ndim dims[ndim] f32 data (row-major)
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{NptiError, Result};
use crate::model::{Activation, Layer, ModelConfig, ToyModel};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 7] = b"NPTIWGT";
pub const VERSION: u32 = 1;

pub fn save_weights(model: &ToyModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_weights<W: Write>(model: &ToyModel, w: &mut W) -> Result<()> {
    let cfg = model.config();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [
        cfg.n_layers,
        cfg.d_model,
        cfg.d_ff,
        cfg.n_heads,
        cfg.vocab_size,
        cfg.max_seq_len,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&cfg.activation.code().to_le_bytes())?;
    let tensors = model.named_tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, shape, data) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for s in shape {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ToyModel> {
    let mut r = BufReader::new(File::open(path)?);
    read_weights(&mut r)
}

struct Reader<'a, R: Read> {
    inner: &'a mut R,
}

impl<R: Read> Reader<'_, R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => NptiError::format(format!("truncated file while reading {what}")),
            _ => NptiError::Io(e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_weights<R: Read>(r: &mut R) -> Result<ToyModel> {
    let mut rd = Reader { inner: r };
    let magic = rd.bytes(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(NptiError::format("bad magic: not an NPTIWGT weight file"));
    }
    let version = rd.u32("version")?;
    if version != VERSION {
        return Err(NptiError::format(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 6];
    for (slot, name) in dims.iter_mut().zip([
        "n_layers",
        "d_model",
        "d_ff",
        "n_heads",
        "vocab_size",
        "max_seq_len",
    ]) {
        *slot = rd.u32(name)? as usize;
    }
    let act_code = rd.u32("activation")?;
    let activation = Activation::from_code(act_code)
        .ok_or_else(|| NptiError::format(format!("unknown activation code {act_code}")))?;
    let config = ModelConfig {
        n_layers: dims[0],
        d_model: dims[1],
        d_ff: dims[2],
        n_heads: dims[3],
        vocab_size: dims[4],
        max_seq_len: dims[5],
        activation,
    };
    config
        .validate()
        .map_err(|e| NptiError::format(format!("invalid config block: {e}")))?;

    let expected = ToyModel::expected_tensor_shapes(&config);
    let count = rd.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(NptiError::format(format!(
            "file has {count} tensors, config implies {}",
            expected.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for (want_name, want_shape) in &expected {
        let name_len = rd.u32(&format!("name length of tensor {want_name}"))? as usize;
        if name_len > 4096 {
            return Err(NptiError::format(format!("tensor {want_name}: implausible name length {name_len}")));
        }
        let name = String::from_utf8(rd.bytes(name_len, &format!("name of tensor {want_name}"))?)
            .map_err(|_| NptiError::format(format!("tensor {want_name}: name is not UTF-8")))?;
        if &name != want_name {
            return Err(NptiError::format(format!("expected tensor {want_name}, found {name}")));
        }
        let ndim = rd.u32(&format!("rank of tensor {name}"))? as usize;
        if ndim > 8 {
            return Err(NptiError::format(format!("tensor {name}: implausible rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(rd.u32(&format!("shape of tensor {name}"))? as usize);
        }
        if &shape != want_shape {
            return Err(NptiError::format(format!(
                "tensor {name}: shape {shape:?} does not match config {want_shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let raw = rd.bytes(n * 4, &format!("data of tensor {name}"))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NptiError::format(format!("tensor {name}: non-finite values")));
        }
        tensors.push((shape, data));
    }

    let mut it = tensors.into_iter();
    let mut mat = || {
        let (shape, data) = it.next().expect("count checked above");
        if shape.len() == 2 {
            Matrix::from_vec(shape[0], shape[1], data).expect("shape checked above")
        } else {
            Matrix::from_vec(1, shape[0], data).expect("shape checked above")
        }
    };
    let token_embedding = mat();
    let position_embedding = mat();
    let mut layers = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        let attn_norm = mat().as_slice().to_vec();
        let wq = mat();
        let wk = mat();
        let wv = mat();
        let wo = mat();
        let ffn_norm = mat().as_slice().to_vec();
        let w1 = mat();
        let w2 = mat();
        let w3 = mat();
        layers.push(Layer {
            attn_norm,
            wq,
            wk,
            wv,
            wo,
            ffn_norm,
            w1,
            w2,
            w3,
        });
    }
    let final_norm = mat().as_slice().to_vec();
    let lm_head = mat();
    ToyModel::from_parts(config, token_embedding, position_embedding, layers, final_norm, lm_head)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ToyModel {
        let cfg = ModelConfig {
            n_layers: 2,
            d_model: 8,
            d_ff: 16,
            n_heads: 2,
            vocab_size: 32,
            max_seq_len: 8,
            activation: Activation::Silu,
        };
        ToyModel::new_random(cfg, 7).unwrap()
    }

    fn bytes(m: &ToyModel) -> Vec<u8> {
        let mut buf = Vec::new();
        write_weights(m, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let buf = bytes(&m);
        let back = read_weights(&mut &buf[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fingerprint(), m.fingerprint());
    }

    #[test]
    fn truncated_file_is_format_error() {
        let buf = bytes(&model());
        for cut in [3, 11, 40, buf.len() / 2, buf.len() - 1] {
            let err = read_weights(&mut &buf[..cut]).unwrap_err();
            assert!(matches!(err, NptiError::Format(_)), "cut {cut}: {err}");
        }
    }

    #[test]
    fn unsupported_version() {
        let mut buf = bytes(&model());
        buf[7..11].copy_from_slice(&99u32.to_le_bytes());
        let err = read_weights(&mut &buf[..]).unwrap_err();
        assert!(err.to_string().contains("unsupported version"), "{err}");
    }

    #[test]
    fn bad_magic() {
        let mut buf = bytes(&model());
        buf[0] = b'X';
        assert!(read_weights(&mut &buf[..]).unwrap_err().to_string().contains("bad magic"));
    }

    #[test]
    fn shape_mismatch_names_tensor() {
        let m = model();
        let mut buf = bytes(&m);
        // header: 7 magic + 4 version + 28 config + 4 count, then the first
        // tensor's name length, name and rank precede its first dim.
        let name_len = "token_embedding".len();
        let first_dim = 7 + 4 + 28 + 4 + 4 + name_len + 4;
        buf[first_dim..first_dim + 4].copy_from_slice(&31u32.to_le_bytes());
        let err = read_weights(&mut &buf[..]).unwrap_err();
        assert!(err.to_string().contains("token_embedding"), "{err}");
    }
}
