//! Policy checkpoint: a flat little-endian binary.
//!
//! ```text
//! bytes 0..8    magic "DRAILPOL"
//! u32           format version (1)
//! u32 x 9       obs height, obs width, obs channels, downsample height,
//!               downsample width, hidden 0, hidden 1, state dim, action dim
//! f32 x S       state normalization mean (S = state dim)
//! f32 x S       state normalization scale
//! f32 x E       encoder parameters, layer by layer: weights (out x in,
//!               row-major) then biases
//! f32 x H       head parameters, same layout
//! ```
//!
//! Nothing follows the head parameters.

use std::fs;
use std::path::Path;

use drail_core::bench::{PolicyDims, StateNorm, TinyPolicy};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DRAILPOL";
pub const VERSION: u32 = 1;
/// Largest header dimension accepted when reading.
const MAX_DIM: usize = 1 << 16;

pub fn encode(policy: &TinyPolicy) -> Vec<u8> {
    let d = policy.dims();
    let mut out = Vec::with_capacity(48 + 4 * (policy.param_count() + 2 * d.state_dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let header = [
        d.obs_height,
        d.obs_width,
        d.obs_channels,
        d.ds_height,
        d.ds_width,
        d.hidden[0],
        d.hidden[1],
        d.state_dim,
        d.action_dim,
    ];
    for v in header {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let n = policy.state_norm();
    let weights = n.mean.iter().chain(&n.scale).chain(policy.encoder().params()).chain(policy.head().params());
    for v in weights {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<TinyPolicy> {
    let bad = |msg: &str| Error::format(path, format!("not a policy checkpoint: {msg}"));
    if bytes.len() < 48 || &bytes[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    if word(0) != VERSION as usize {
        return Err(bad(&format!("unsupported version {}", word(0))));
    }
    let dims = PolicyDims {
        obs_height: word(1),
        obs_width: word(2),
        obs_channels: word(3),
        ds_height: word(4),
        ds_width: word(5),
        hidden: [word(6), word(7)],
        state_dim: word(8),
        action_dim: word(9),
    };
    if dims.ds_height == 0 || dims.ds_width == 0 || dims.hidden.contains(&0) || dims.action_dim == 0 {
        return Err(bad("zero dimension in header"));
    }
    if (1..10).any(|i| word(i) > MAX_DIM) {
        return Err(bad("dimension out of range"));
    }
    let n_enc = dims.encoder_param_count();
    let n_head = dims.head_param_count();
    let s = dims.state_dim;
    let body = &bytes[48..];
    if body.len() != 4 * (2 * s + n_enc + n_head) {
        return Err(bad(&format!("expected {} weight bytes, found {}", 4 * (2 * s + n_enc + n_head), body.len())));
    }
    let vals: Vec<f64> =
        body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    let (norm, rest) = vals.split_at(2 * s);
    let (enc, head) = rest.split_at(n_enc);
    let mut policy = TinyPolicy::from_params(dims, enc.to_vec(), head.to_vec())
        .map_err(|e| Error::format(path, e.to_string()))?;
    policy
        .set_state_norm(StateNorm { mean: norm[..s].to_vec(), scale: norm[s..].to_vec() })
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(policy)
}

pub fn save(policy: &TinyPolicy, path: &Path) -> Result<()> {
    let d = policy.dims();
    let fits = [d.obs_height, d.obs_width, d.obs_channels, d.ds_height, d.ds_width, d.hidden[0], d.hidden[1], d.state_dim, d.action_dim]
        .iter()
        .all(|&v| u32::try_from(v).is_ok());
    if !fits {
        return Err(Error::format(path, "policy dims exceed the checkpoint header range"));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode(policy)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<TinyPolicy> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
