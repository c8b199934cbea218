use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{HeadInput, HyperConfig};
use super::params::{HiCiParams, ModelDims};
use super::train::{stream_rng, STREAM_INIT};
use crate::error::{Error, Result};
use crate::losses::PropensityModel;
use crate::ndnet::Parameters;
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: HyperConfig,
    pub p: usize,
    pub k: usize,
    pub e: usize,
    pub head_input: HeadInput,
    pub seed: u64,
    pub epoch: usize,
    /// `(name, length)` of every payload segment in order.
    pub segments: Vec<(String, usize)>,
}

fn payload_segments<S: Scalar>(params: &HiCiParams<S>) -> Vec<(String, &[S])> {
    let mut out: Vec<(String, &[S])> = Vec::new();
    let names = params.segment_names();
    let segs = params.segments();
    let split = names.iter().position(|n| n.starts_with("treat_embed")).unwrap_or(names.len());
    for (n, s) in names.iter().zip(&segs).take(split) {
        out.push((n.clone(), s));
    }
    out.push(("propensity.theta".into(), params.propensity.theta().data()));
    for (n, s) in names.iter().zip(&segs).skip(split) {
        out.push((n.clone(), s));
    }
    out
}

/// Writes `u64` LE header length, the JSON header, then every parameter as
/// little-endian `f64` in declaration order (encoder, decoder, propensity,
/// embeddings, heads).
pub fn save_checkpoint<S: Scalar>(path: &Path, params: &HiCiParams<S>, config: &HyperConfig, epoch: usize) -> Result<()> {
    let dims = params.dims();
    let segs = payload_segments(params);
    let header = CheckpointHeader {
        config: config.clone(),
        p: dims.p,
        k: dims.k,
        e: dims.e,
        head_input: params.head_input,
        seed: config.seed,
        epoch,
        segments: segs.iter().map(|(n, s)| (n.clone(), s.len())).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, s) in &segs {
        for &v in *s {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<(CheckpointHeader, HiCiParams<S>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(Error::Checkpoint(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let dims = ModelDims {
        p: header.p,
        k: header.k,
        e: header.e,
    };
    let mut params = HiCiParams::<S>::init(&header.config, dims, header.head_input, &mut stream_rng(0, STREAM_INIT))
        .map_err(|e| Error::Checkpoint(format!("header describes an invalid model: {e}")))?;
    let expected: Vec<(String, usize)> = payload_segments(&params).iter().map(|(n, s)| (n.clone(), s.len())).collect();
    if expected != header.segments {
        return Err(Error::Checkpoint("segment layout does not match the header's configuration".into()));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let total: usize = expected.iter().map(|(_, l)| l).sum();
    if payload.len() != total * 8 {
        return Err(Error::Checkpoint(format!(
            "payload holds {} bytes, header requires {}",
            payload.len(),
            total * 8
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| S::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))));

    let theta_at = expected.iter().position(|(n, _)| n == "propensity.theta").expect("theta segment");
    let theta_len = expected[theta_at].1;
    let before: usize = expected[..theta_at].iter().map(|(_, l)| l).sum();
    let mut theta = Vec::with_capacity(theta_len);
    {
        let mut segs = params.segments_mut();
        let mut consumed = 0usize;
        let mut si = 0usize;
        while consumed < before {
            for v in segs[si].iter_mut() {
                *v = values.next().expect("length checked");
            }
            consumed += segs[si].len();
            si += 1;
        }
        theta.extend(values.by_ref().take(theta_len));
        for seg in segs.into_iter().skip(si) {
            for v in seg.iter_mut() {
                *v = values.next().expect("length checked");
            }
        }
    }
    let l = params.latent_dim();
    params.propensity = PropensityModel::new(Tensor2::from_vec(header.k, l, theta)?)
        .map_err(|e| Error::Checkpoint(format!("propensity weights: {e}")))?;
    params.validate()?;
    Ok((header, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> (HyperConfig, HiCiParams<f64>) {
        let c = HyperConfig {
            encoder_width: 5,
            decoder_width: 5,
            outcome_width: 5,
            latent_dim: 2,
            treat_embed_dim: 3,
            seed: 9,
            ..Default::default()
        };
        let mut p =
            HiCiParams::init(&c, ModelDims { p: 4, k: 3, e: 2 }, HeadInput::Representation, &mut ChaCha8Rng::seed_from_u64(4))
                .unwrap();
        p.propensity = PropensityModel::new(Tensor2::from_vec(3, 2, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap()).unwrap();
        (c, p)
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (c, p) = params();
        save_checkpoint(&path, &p, &c, 17).unwrap();
        let (h, q) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(h.epoch, 17);
        assert_eq!(h.seed, 9);
        assert_eq!(q, p);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (c, p) = params();
        save_checkpoint(&path, &p, &c, 1).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn header_shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (c, p) = params();
        save_checkpoint(&path, &p, &c, 1).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let mut header: CheckpointHeader = serde_json::from_slice(&bytes[8..8 + len]).unwrap();
        header.config.outcome_width = 6;
        let json = serde_json::to_vec(&header).unwrap();
        let mut out = (json.len() as u64).to_le_bytes().to_vec();
        out.extend(json);
        out.extend(&bytes[8 + len..]);
        std::fs::write(&path, out).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Checkpoint(_))));
    }
}
