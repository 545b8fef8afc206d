//! Checkpoint file: a plain-text header followed by a little-endian `f64`
//! blob.
//!
//! ```text
//! DFE-CHECKPOINT
//! format_version 1
//! model_spec {...json...}
//! training {...json...|null}
//! tensor encoder.0.weight 32,3,3,3 0
//! ...
//! end_header
//! <blob>
//! ```
//!
//! Tensor offsets are in bytes from the start of the blob.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Autoencoder, ModelSpec};
use super::train::LossConfig;
use crate::error::{Error, Result};
use crate::nn::{LayerKind, Network};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "DFE-CHECKPOINT";
const END: &str = "end_header\n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub loss: LossConfig,
    pub epochs: usize,
    pub final_loss: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Autoencoder,
    pub meta: Option<TrainingMeta>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

/// Every stored tensor of a network in a fixed order.
fn network_tensors<'a>(prefix: &str, net: &'a Network) -> Vec<(String, Vec<usize>, &'a [f64])> {
    let mut out = Vec::new();
    for (k, layer) in net.layers().iter().enumerate() {
        let spec = layer.spec();
        let p = layer.params();
        match spec.kind {
            LayerKind::Conv | LayerKind::ConvTranspose => {
                out.push((format!("{prefix}.{k}.weight"), spec.weight_shape(), &p.weight[..]));
                out.push((format!("{prefix}.{k}.bias"), vec![spec.out_channels], &p.bias[..]));
            }
            LayerKind::BatchNorm => {
                let c = vec![spec.out_channels];
                out.push((format!("{prefix}.{k}.weight"), c.clone(), &p.weight[..]));
                out.push((format!("{prefix}.{k}.bias"), c.clone(), &p.bias[..]));
                out.push((format!("{prefix}.{k}.running_mean"), c.clone(), &p.running_mean[..]));
                out.push((format!("{prefix}.{k}.running_var"), c, &p.running_var[..]));
            }
            LayerKind::Relu => {}
        }
    }
    out
}

fn network_tensors_mut<'a>(prefix: &str, net: &'a mut Network) -> Vec<(String, &'a mut Vec<f64>)> {
    let mut out = Vec::new();
    for (k, layer) in net.layers_mut().iter_mut().enumerate() {
        let kind = layer.spec().kind;
        let p = layer.params_mut();
        match kind {
            LayerKind::Conv | LayerKind::ConvTranspose => {
                out.push((format!("{prefix}.{k}.weight"), &mut p.weight));
                out.push((format!("{prefix}.{k}.bias"), &mut p.bias));
            }
            LayerKind::BatchNorm => {
                out.push((format!("{prefix}.{k}.weight"), &mut p.weight));
                out.push((format!("{prefix}.{k}.bias"), &mut p.bias));
                out.push((format!("{prefix}.{k}.running_mean"), &mut p.running_mean));
                out.push((format!("{prefix}.{k}.running_var"), &mut p.running_var));
            }
            LayerKind::Relu => {}
        }
    }
    out
}

fn join_shape(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

pub fn checkpoint_to_bytes(model: &Autoencoder, meta: Option<&TrainingMeta>) -> Vec<u8> {
    let mut tensors = network_tensors("encoder", model.encoder());
    tensors.extend(network_tensors("decoder", model.decoder()));
    let mut header = format!("{MAGIC}\nformat_version {CHECKPOINT_VERSION}\n");
    header.push_str(&format!(
        "model_spec {}\n",
        serde_json::to_string(model.spec()).expect("model spec serializes")
    ));
    header.push_str(&format!(
        "training {}\n",
        serde_json::to_string(&meta).expect("metadata serializes")
    ));
    let mut blob = Vec::new();
    for (name, shape, data) in &tensors {
        header.push_str(&format!("tensor {name} {} {}\n", join_shape(shape), blob.len()));
        for v in data.iter() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    header.push_str(END);
    let mut out = header.into_bytes();
    out.extend_from_slice(&blob);
    out
}

pub fn save_checkpoint(model: &Autoencoder, meta: Option<&TrainingMeta>, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptHeader(msg.into())
}

fn field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    line.and_then(|l| l.strip_prefix(key))
        .and_then(|l| l.strip_prefix(' '))
        .ok_or_else(|| corrupt(format!("expected `{key}` line")))
}

fn parse_tensor_line(line: &str) -> Result<TensorEntry> {
    let parts: Vec<&str> = line.split(' ').collect();
    if parts.len() != 4 || parts[0] != "tensor" {
        return Err(corrupt(format!("bad tensor line `{line}`")));
    }
    let shape = parts[2]
        .split(',')
        .map(|d| d.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| corrupt(format!("bad shape in `{line}`")))?;
    let offset = parts[3]
        .parse()
        .map_err(|_| corrupt(format!("bad offset in `{line}`")))?;
    Ok(TensorEntry {
        name: parts[1].to_string(),
        shape,
        offset,
    })
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let end = bytes
        .windows(END.len() + 1)
        .position(|w| w[0] == b'\n' && &w[1..] == END.as_bytes())
        .ok_or_else(|| corrupt("missing end_header"))?;
    let header_len = end + 1 + END.len();
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| corrupt("header is not UTF-8"))?;
    let blob = &bytes[header_len..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(corrupt("missing magic line"));
    }
    let found: u32 = field(lines.next(), "format_version")?
        .parse()
        .map_err(|_| corrupt("bad format_version"))?;
    if found != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found,
            expected: CHECKPOINT_VERSION,
        });
    }
    let spec: ModelSpec = serde_json::from_str(field(lines.next(), "model_spec")?)
        .map_err(|e| corrupt(format!("model_spec: {e}")))?;
    let meta: Option<TrainingMeta> = serde_json::from_str(field(lines.next(), "training")?)
        .map_err(|e| corrupt(format!("training: {e}")))?;
    let entries = lines.map(parse_tensor_line).collect::<Result<Vec<_>>>()?;

    let mut model = Autoencoder::new(spec, 0)?;
    let expected_total: usize = entries.iter().map(|e| e.shape.iter().product::<usize>() * 8).sum();
    if blob.len() < expected_total {
        return Err(Error::TruncatedBlob {
            expected: expected_total,
            actual: blob.len(),
        });
    }
    if blob.len() > expected_total {
        return Err(corrupt(format!(
            "blob has {} bytes, header describes {expected_total}",
            blob.len()
        )));
    }

    let expected_shapes: Vec<(String, Vec<usize>)> = network_tensors("encoder", model.encoder())
        .into_iter()
        .chain(network_tensors("decoder", model.decoder()))
        .map(|(n, s, _)| (n, s))
        .collect();
    if expected_shapes.len() != entries.len() {
        return Err(corrupt(format!(
            "{} tensors listed, model needs {}",
            entries.len(),
            expected_shapes.len()
        )));
    }
    let (encoder, decoder) = model.networks_mut();
    let mut targets = network_tensors_mut("encoder", encoder);
    targets.extend(network_tensors_mut("decoder", decoder));
    for ((entry, (name, shape)), (_, target)) in
        entries.iter().zip(&expected_shapes).zip(targets.iter_mut())
    {
        if &entry.name != name || &entry.shape != shape {
            return Err(corrupt(format!(
                "tensor {} {:?} where {name} {shape:?} was expected",
                entry.name, entry.shape
            )));
        }
        let n: usize = shape.iter().product();
        let bytes = blob
            .get(entry.offset..entry.offset + n * 8)
            .ok_or_else(|| corrupt(format!("tensor {name} lies outside the blob")))?;
        for (dst, chunk) in target.iter_mut().zip(bytes.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("chunk of eight bytes"));
        }
    }
    Ok(Checkpoint { model, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Crop, CropWindow};

    fn model() -> Autoencoder {
        let mut m = Autoencoder::new(ModelSpec::width_reduced(4), 11).unwrap();
        // non-trivial running statistics
        for (k, l) in m.encoder_mut().layers_mut().iter_mut().enumerate() {
            let p = l.params_mut();
            p.running_mean.iter_mut().for_each(|v| *v = 0.1 * k as f64 + 1.0 / 3.0);
            p.running_var.iter_mut().for_each(|v| *v = 1.7);
        }
        m
    }

    fn meta() -> TrainingMeta {
        TrainingMeta {
            loss: LossConfig::Weighted { sigma: 5.0 },
            epochs: 3,
            final_loss: 1.25e-3,
            seed: 9,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = checkpoint_to_bytes(&m, Some(&meta()));
        let loaded = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(loaded.model, m);
        assert_eq!(loaded.meta, Some(meta()));
        assert_eq!(checkpoint_to_bytes(&loaded.model, loaded.meta.as_ref()), bytes);
        let crop = Crop::new(
            CropWindow::default(),
            (0..2883).map(|k| (k as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        assert_eq!(m.encode(&crop).unwrap(), loaded.model.encode(&crop).unwrap());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let q = dir.path().join("n.ckpt");
        save_checkpoint(&model(), None, &p).unwrap();
        let loaded = load_checkpoint(&p).unwrap();
        assert!(loaded.meta.is_none());
        save_checkpoint(&loaded.model, None, &q).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }

    #[test]
    fn header_shapes_match_blob() {
        let m = model();
        let bytes = checkpoint_to_bytes(&m, None);
        let text = String::from_utf8_lossy(&bytes);
        let total: usize = text
            .lines()
            .filter_map(|l| l.strip_prefix("tensor "))
            .map(|l| {
                l.split(' ').nth(1).unwrap().split(',').map(|d| d.parse::<usize>().unwrap()).product::<usize>()
            })
            .sum();
        let header_len = text.find("end_header\n").unwrap() + "end_header\n".len();
        assert_eq!(total * 8, bytes.len() - header_len);
        assert!(text.contains("tensor encoder.0.weight 8,3,3,3 0\n"));
    }

    #[test]
    fn truncated_and_corrupt() {
        let bytes = checkpoint_to_bytes(&model(), None);
        let err = checkpoint_from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(err, Error::TruncatedBlob { .. }));
        let text = String::from_utf8(bytes[..200].to_vec()).unwrap();
        let bumped = text.replacen("format_version 1", "format_version 2", 1);
        let mut b2 = bumped.into_bytes();
        b2.extend_from_slice(&bytes[200..]);
        assert!(matches!(
            checkpoint_from_bytes(&b2),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
        assert!(matches!(
            checkpoint_from_bytes(b"garbage"),
            Err(Error::CorruptHeader(_))
        ));
    }
}
