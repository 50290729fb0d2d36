use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One conv → ReLU → optional 2×2 max-pool stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub channels: usize,
    pub pool: bool,
}

/// Network layout, written as e.g. `conv:8 pool conv:16 pool head:1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub blocks: Vec<BlockSpec>,
    pub classes: usize,
}

impl Architecture {
    pub const DEFAULT: &'static str = "conv:8 pool conv:16 pool head:1";

    pub fn new(blocks: Vec<BlockSpec>, classes: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::validation("architecture has no conv blocks"));
        }
        if blocks.iter().any(|b| b.channels == 0) {
            return Err(Error::validation("conv block with zero channels"));
        }
        if classes == 0 {
            return Err(Error::validation("head needs at least one class"));
        }
        Ok(Architecture { blocks, classes })
    }

    /// Channels entering the head (C′).
    pub fn feature_channels(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.channels)
    }

    /// Spatial size of the feature maps for an `h×w` input.
    pub fn feature_dims(&self, h: usize, w: usize) -> (usize, usize) {
        self.blocks.iter().fold((h, w), |(h, w), b| {
            if b.pool {
                (h / 2, w / 2)
            } else {
                (h, w)
            }
        })
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::DEFAULT.parse().expect("default architecture parses")
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut blocks: Vec<BlockSpec> = Vec::new();
        let mut classes = None;
        for tok in s.split_whitespace() {
            if classes.is_some() {
                return Err(Error::validation(format!("token {tok:?} after head")));
            }
            match tok.split_once(':') {
                Some(("conv", n)) => blocks.push(BlockSpec {
                    channels: parse_count(tok, n)?,
                    pool: false,
                }),
                Some(("head", n)) => classes = Some(parse_count(tok, n)?),
                None if tok == "pool" => match blocks.last_mut() {
                    Some(b) if !b.pool => b.pool = true,
                    Some(_) => return Err(Error::validation("double pool after one conv")),
                    None => return Err(Error::validation("pool before any conv")),
                },
                _ => return Err(Error::validation(format!("unknown token {tok:?}"))),
            }
        }
        let classes = classes.ok_or_else(|| Error::validation("missing head:<classes>"))?;
        Architecture::new(blocks, classes)
    }
}

fn parse_count(tok: &str, n: &str) -> Result<usize> {
    n.parse()
        .map_err(|_| Error::validation(format!("bad count in {tok:?}")))
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            write!(f, "conv:{} ", b.channels)?;
            if b.pool {
                write!(f, "pool ")?;
            }
        }
        write!(f, "head:{}", self.classes)
    }
}
