//! XNET model container.
//!
//! ```text
//! XNET 1
//! manifest <k>
//! arch conv:8 pool conv:16 pool head:1
//! tensor block0.kernels <bytes>
//! tensor block0.bias <bytes>
//! ...
//! tensor head.weights <bytes>
//! tensor head.bias <bytes>
//! <concatenated XTEN blobs in manifest order>
//! ```
//!
//! `k` counts the manifest lines after the `manifest` line. Each header line
//! ends with `\n`; blob sizes must match the XTEN payloads exactly.

use std::fs;
use std::path::Path;

use super::{Architecture, Block, ConvLayer, MicroNet};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const XNET_MAGIC: &str = "XNET 1";

fn tensor_names(arch: &Architecture) -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..arch.blocks.len() {
        names.push(format!("block{i}.kernels"));
        names.push(format!("block{i}.bias"));
    }
    names.push("head.weights".into());
    names.push("head.bias".into());
    names
}

impl<T: Real> MicroNet<T> {
    pub fn to_xnet_bytes(&self) -> Vec<u8> {
        let arch = self.architecture();
        let mut tensors: Vec<&Tensor<T>> = Vec::new();
        for b in &self.blocks {
            tensors.push(&b.conv.kernels);
            tensors.push(&b.conv.bias);
        }
        tensors.push(&self.head);
        tensors.push(&self.head_bias);
        let blobs: Vec<Vec<u8>> = tensors.iter().map(|t| t.to_xten_bytes()).collect();
        let names = tensor_names(&arch);
        let mut header = format!("{XNET_MAGIC}\nmanifest {}\narch {arch}\n", names.len() + 1);
        for (name, blob) in names.iter().zip(&blobs) {
            header.push_str(&format!("tensor {name} {}\n", blob.len()));
        }
        let mut out = header.into_bytes();
        for blob in blobs {
            out.extend_from_slice(&blob);
        }
        out
    }

    pub fn from_xnet_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let next_line = |pos: &mut usize| -> Result<(u64, String)> {
            let start = *pos;
            let rel = bytes[start..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::format(start as u64, "unterminated header line"))?;
            let line = std::str::from_utf8(&bytes[start..start + rel])
                .map_err(|_| Error::format(start as u64, "header is not UTF-8"))?;
            *pos = start + rel + 1;
            Ok((start as u64, line.to_string()))
        };
        let (off, magic) = next_line(&mut pos)?;
        if magic != XNET_MAGIC {
            return Err(Error::format(off, format!("bad model magic {magic:?}")));
        }
        let (off, count_line) = next_line(&mut pos)?;
        let count: usize = count_line
            .strip_prefix("manifest ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(off, "expected `manifest <count>`"))?;
        let (off, arch_line) = next_line(&mut pos)?;
        let arch: Architecture = arch_line
            .strip_prefix("arch ")
            .ok_or_else(|| Error::format(off, "expected `arch <descriptor>`"))?
            .parse()
            .map_err(|e| Error::format(off, format!("architecture: {e}")))?;
        let names = tensor_names(&arch);
        if count != names.len() + 1 {
            return Err(Error::format(
                off,
                format!(
                    "manifest lists {count} lines, architecture needs {}",
                    names.len() + 1
                ),
            ));
        }
        let mut sizes = Vec::with_capacity(names.len());
        for expected in &names {
            let (off, line) = next_line(&mut pos)?;
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some("tensor"), Some(name), Some(size), None) if name == expected => {
                    sizes.push(
                        size.parse::<usize>()
                            .map_err(|_| Error::format(off, "bad blob size"))?,
                    );
                }
                _ => {
                    return Err(Error::format(
                        off,
                        format!("expected `tensor {expected} <bytes>`, got {line:?}"),
                    ))
                }
            }
        }
        let mut tensors = Vec::with_capacity(names.len());
        for (name, size) in names.iter().zip(sizes) {
            let blob = bytes.get(pos..pos + size).ok_or_else(|| {
                Error::format(pos as u64, format!("truncated blob {name}"))
            })?;
            let (t, used) = Tensor::<T>::from_xten_prefix(blob, pos as u64)?;
            if used != size {
                return Err(Error::format(
                    (pos + used) as u64,
                    format!("blob {name} is {size} bytes but holds {used}"),
                ));
            }
            tensors.push(t);
            pos += size;
        }
        if pos != bytes.len() {
            return Err(Error::format(pos as u64, "trailing bytes after last blob"));
        }
        let mut it = tensors.into_iter();
        let mut blocks = Vec::with_capacity(arch.blocks.len());
        let mut c_in = 1;
        for spec in &arch.blocks {
            let kernels = it.next().unwrap();
            let bias = it.next().unwrap();
            if kernels.dims() != [spec.channels, c_in, 3, 3] {
                return Err(Error::format(
                    0,
                    format!(
                        "kernel shape {:?} disagrees with architecture (expected {:?})",
                        kernels.dims(),
                        [spec.channels, c_in, 3, 3]
                    ),
                ));
            }
            blocks.push(Block {
                conv: ConvLayer::new(kernels, bias)
                    .map_err(|e| Error::format(0, e.to_string()))?,
                pool: spec.pool,
            });
            c_in = spec.channels;
        }
        let head = it.next().unwrap();
        let head_bias = it.next().unwrap();
        if head.dims() != [c_in, arch.classes] {
            return Err(Error::format(0, format!("head shape {:?} disagrees with architecture", head.dims())));
        }
        MicroNet::new(blocks, head, head_bias).map_err(|e| Error::format(0, e.to_string()))
    }
}

pub fn net_save<T: Real>(net: &MicroNet<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, net.to_xnet_bytes()).map_err(|e| Error::io(path, e))
}

pub fn net_load<T: Real>(path: impl AsRef<Path>) -> Result<MicroNet<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    MicroNet::from_xnet_bytes(&bytes)
}
