//! Checkpoints: a manifest of named tensors plus one file holding their RXT1
//! records back to back in manifest order.

use std::fmt::Write as _;
use std::path::Path;

use super::RexNet;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::rxt::{read_tensor, to_bytes};

pub const CHECKPOINT_MANIFEST: &str = "manifest.csv";
pub const CHECKPOINT_WEIGHTS: &str = "weights.rxt";

pub fn save_checkpoint(net: &RexNet, dir: &Path) -> Result<()> {
    let mut manifest = String::from("name,shape,offset,bytes\n");
    let mut weights = Vec::new();
    for (name, t) in net.named_params() {
        let bytes = to_bytes(t);
        let _ = writeln!(manifest, "{name},{},{},{}", t.shape(), weights.len(), bytes.len());
        weights.extend_from_slice(&bytes);
    }
    write_atomic(&dir.join(CHECKPOINT_WEIGHTS), &weights)?;
    write_atomic(&dir.join(CHECKPOINT_MANIFEST), manifest.as_bytes())
}

/// Loads into a network built with the same architecture; every manifest
/// entry must match a parameter by name and shape.
pub fn load_checkpoint(net: &mut RexNet, dir: &Path) -> Result<()> {
    let mpath = dir.join(CHECKPOINT_MANIFEST);
    let wpath = dir.join(CHECKPOINT_WEIGHTS);
    let manifest = std::fs::read_to_string(&mpath).map_err(|e| Error::file(&mpath, e))?;
    let weights = std::fs::read(&wpath).map_err(|e| Error::file(&wpath, e))?;
    let entries: Vec<(&str, usize, usize)> = manifest
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::file(&mpath, format!("bad line `{l}`")));
            if f.len() != 4 {
                return Err(Error::file(&mpath, format!("bad line `{l}`")));
            }
            Ok((f[0], parse(f[2])?, parse(f[3])?))
        })
        .collect::<Result<_>>()?;
    let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
    if entries.len() != names.len() {
        return Err(Error::file(&mpath, format!("{} tensors, network has {}", entries.len(), names.len())));
    }
    let mut loaded = Vec::with_capacity(names.len());
    for ((name, off, len), expected) in entries.iter().zip(&names) {
        if name != expected {
            return Err(Error::file(&mpath, format!("expected tensor `{expected}`, found `{name}`")));
        }
        let bytes = weights
            .get(*off..off + len)
            .ok_or_else(|| Error::file(&wpath, format!("tensor `{name}` out of range")))?;
        loaded.push(read_tensor(bytes).map_err(|e| Error::file(&wpath, format!("{name}: {e}")))?);
    }
    for ((name, p), t) in net.named_params().into_iter().zip(&loaded) {
        if p.shape() != t.shape() {
            return Err(Error::file(
                &wpath,
                format!("tensor `{name}` has shape {}, network expects {}", t.shape(), p.shape()),
            ));
        }
    }
    for (p, t) in net.params_mut().into_iter().zip(loaded) {
        *p = t;
    }
    Ok(())
}
