//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `BOGCNMDL`, a little-endian `u32` format
//! version, a little-endian `u32` header length, a UTF-8 JSON header with
//! the model kind, shapes, seed and parameter count, then every parameter
//! as a little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GcnConfig, GcnParams, MlpConfig, MlpParams, Surrogate};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BOGCNMDL";
pub const FORMAT_VERSION: u32 = 1;

/// Either predictor family, as stored in checkpoints and search state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurrogateModel {
    Gcn(GcnParams),
    Mlp(MlpParams),
}

impl SurrogateModel {
    pub fn params(&self) -> &[f64] {
        match self {
            SurrogateModel::Gcn(p) => p.params(),
            SurrogateModel::Mlp(p) => p.params(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match self {
            SurrogateModel::Gcn(p) => p.embedding_dim(),
            SurrogateModel::Mlp(p) => p.embedding_dim(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Header {
    Gcn { config: GcnConfig, seed: u64, param_count: usize },
    Mlp { config: MlpConfig, seed: u64, param_count: usize },
}

pub fn checkpoint_bytes(model: &SurrogateModel) -> Result<Vec<u8>> {
    let (header, params) = match model {
        SurrogateModel::Gcn(p) => {
            (Header::Gcn { config: *p.config(), seed: p.seed(), param_count: p.params().len() }, p.params())
        }
        SurrogateModel::Mlp(p) => {
            (Header::Mlp { config: p.config().clone(), seed: p.seed(), param_count: p.params().len() }, p.params())
        }
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for w in params {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<SurrogateModel> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let header_end = 16 + header_len;
    if bytes.len() < header_end {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
    let payload = &bytes[header_end..];
    let param_count = match &header {
        Header::Gcn { param_count, .. } | Header::Mlp { param_count, .. } => *param_count,
    };
    if payload.len() != 8 * param_count {
        return Err(Error::Checkpoint(format!(
            "payload has {} bytes, header announces {param_count} parameters",
            payload.len()
        )));
    }
    let weights: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(match header {
        Header::Gcn { config, seed, .. } => SurrogateModel::Gcn(GcnParams::from_parts(config, seed, weights)?),
        Header::Mlp { config, seed, .. } => SurrogateModel::Mlp(MlpParams::from_parts(config, seed, weights)?),
    })
}

pub fn save_checkpoint(path: &Path, model: &SurrogateModel) -> Result<()> {
    fs::write(path, checkpoint_bytes(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SurrogateModel> {
    checkpoint_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_bit_exactly() {
        let gcn = SurrogateModel::Gcn(GcnParams::new(GcnConfig::new(6), 3).unwrap());
        let mlp = SurrogateModel::Mlp(MlpParams::new(MlpConfig::new(7, 5).padded(), 4).unwrap());
        for m in [gcn, mlp] {
            let bytes = checkpoint_bytes(&m).unwrap();
            assert_eq!(checkpoint_from_bytes(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn header_is_self_describing() {
        let m = SurrogateModel::Gcn(GcnParams::new(GcnConfig::new(6).with_hidden(8), 3).unwrap());
        let bytes = checkpoint_bytes(&m).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        let len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        assert_eq!(header["kind"], "gcn");
        assert_eq!(header["config"]["hidden"], 8);
        assert_eq!(header["seed"], 3);
        let first = f64::from_le_bytes(bytes[16 + len..24 + len].try_into().unwrap());
        assert_eq!(first, m.params()[0]);
    }

    #[test]
    fn rejects_corruption() {
        let m = SurrogateModel::Gcn(GcnParams::new(GcnConfig::new(6).with_hidden(4), 0).unwrap());
        let bytes = checkpoint_bytes(&m).unwrap();
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(checkpoint_from_bytes(&wrong_version).is_err());
        assert!(checkpoint_from_bytes(b"nope").is_err());
    }
}
