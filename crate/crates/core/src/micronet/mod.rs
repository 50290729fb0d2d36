//! A small forward-only convolutional scorer whose classifier is a 1×1
//! convolution, so class activation maps fall out of the forward pass.
//!
//! Layout is `[channels, height, width]` throughout. Every conv is 3×3, stride
//! 1, zero padding 1, followed by ReLU and an optional 2×2 max-pool.

mod arch;
mod io;
mod lesion;

pub use arch::{Architecture, BlockSpec};
pub use io::{net_load, net_save, XNET_MAGIC};
pub use lesion::{lesion_detector, LESION_THRESHOLD};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::numerics::Rng;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Minimum accepted input side length.
pub const MIN_INPUT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T = f64> {
    /// `C_out × C_in × 3 × 3`
    pub kernels: Tensor<T>,
    /// `C_out`
    pub bias: Tensor<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        match kernels.dims() {
            &[c_out, _, 3, 3] if bias.dims() == [c_out] => Ok(ConvLayer { kernels, bias }),
            &[_, _, 3, 3] => Err(Error::shape(format!(
                "bias {:?} does not match kernels {:?}",
                bias.dims(),
                kernels.dims()
            ))),
            d => Err(Error::shape(format!("kernels must be C_out×C_in×3×3, got {d:?}"))),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.dims()[1]
    }

    /// Same-size 3×3 convolution of a `C_in×h×w` map.
    fn apply(&self, input: &[T], h: usize, w: usize) -> Vec<T> {
        let c_in = self.in_channels();
        let c_out = self.out_channels();
        let k = self.kernels.data();
        let plane = h * w;
        let mut out = vec![T::zero(); c_out * plane];
        for (o, dst) in out.chunks_mut(plane).enumerate() {
            let b = self.bias.data()[o];
            dst.iter_mut().for_each(|v| *v = b);
            for i in 0..c_in {
                let src = &input[i * plane..(i + 1) * plane];
                let taps = &k[(o * c_in + i) * 9..(o * c_in + i + 1) * 9];
                for (t, &wt) in taps.iter().enumerate() {
                    if wt == T::zero() {
                        continue;
                    }
                    let dy = t as isize / 3 - 1;
                    let dx = t as isize % 3 - 1;
                    // Output (r, c) reads input (r + dy, c + dx) when in range.
                    let r0 = (-dy).max(0) as usize;
                    let r1 = (h as isize - dy.max(0)) as usize;
                    let c0 = (-dx).max(0) as usize;
                    let c1 = (w as isize - dx.max(0)) as usize;
                    if r0 >= r1 || c0 >= c1 {
                        continue;
                    }
                    for r in r0..r1 {
                        let sr = (r as isize + dy) as usize;
                        let s = &src[sr * w + (c0 as isize + dx) as usize..][..c1 - c0];
                        let d = &mut dst[r * w + c0..r * w + c1];
                        for (dv, &sv) in d.iter_mut().zip(s) {
                            *dv = *dv + wt * sv;
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T = f64> {
    pub conv: ConvLayer<T>,
    pub pool: bool,
}

/// Conv blocks followed by a 1×1 convolution head `W ∈ ℝ^{C′×C}` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroNet<T = f64> {
    blocks: Vec<Block<T>>,
    head: Tensor<T>,
    head_bias: Tensor<T>,
}

/// Outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult<T = f64> {
    /// `C′×H′×W′`
    pub feature_maps: Tensor<T>,
    /// `C×H′×W′`
    pub activation_maps: Tensor<T>,
    /// `C`
    pub scores: Tensor<T>,
}

impl<T: Real> ForwardResult<T> {
    /// Activation map of one class as an `H′×W′` tensor.
    pub fn activation_map(&self, class: usize) -> Tensor<T> {
        let d = self.activation_maps.dims();
        let plane = d[1] * d[2];
        Tensor::from_parts_unchecked(
            vec![d[1], d[2]],
            self.activation_maps.data()[class * plane..(class + 1) * plane].to_vec(),
        )
    }
}

impl<T: Real> MicroNet<T> {
    pub fn new(blocks: Vec<Block<T>>, head: Tensor<T>, head_bias: Tensor<T>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::validation("network has no conv blocks"));
        }
        if blocks[0].conv.in_channels() != 1 {
            return Err(Error::shape("first conv must take one input channel"));
        }
        for pair in blocks.windows(2) {
            if pair[1].conv.in_channels() != pair[0].conv.out_channels() {
                return Err(Error::shape(format!(
                    "conv expects {} channels, previous block yields {}",
                    pair[1].conv.in_channels(),
                    pair[0].conv.out_channels()
                )));
            }
        }
        let c_feat = blocks.last().unwrap().conv.out_channels();
        match head.dims() {
            &[cf, c] if cf == c_feat && head_bias.dims() == [c] => {}
            d => {
                return Err(Error::shape(format!(
                    "head {d:?} / bias {:?} incompatible with {c_feat} feature channels",
                    head_bias.dims()
                )))
            }
        }
        Ok(MicroNet {
            blocks,
            head,
            head_bias,
        })
    }

    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    /// `C′×C` classifier weights.
    pub fn head(&self) -> &Tensor<T> {
        &self.head
    }

    pub fn head_bias(&self) -> &Tensor<T> {
        &self.head_bias
    }

    pub fn classes(&self) -> usize {
        self.head.dims()[1]
    }

    pub fn feature_channels(&self) -> usize {
        self.head.dims()[0]
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockSpec {
                    channels: b.conv.out_channels(),
                    pool: b.pool,
                })
                .collect(),
            classes: self.classes(),
        }
    }

    /// Copy with head weights and bias replaced.
    pub fn with_head(&self, head: Tensor<T>, head_bias: Tensor<T>) -> Result<Self> {
        MicroNet::new(self.blocks.clone(), head, head_bias)
    }

    /// Runs the conv stack, returning `(maps, channels, h, w)`.
    fn features(&self, img: &GrayImage<T>) -> Result<(Vec<T>, usize, usize, usize)> {
        let (mut h, mut w) = (img.height(), img.width());
        if h < MIN_INPUT || w < MIN_INPUT {
            return Err(Error::shape(format!(
                "input {h}x{w} smaller than {MIN_INPUT}x{MIN_INPUT}"
            )));
        }
        let mut x = img.pixels().to_vec();
        let mut c = 1;
        for (idx, block) in self.blocks.iter().enumerate() {
            x = block.conv.apply(&x, h, w);
            c = block.conv.out_channels();
            x.iter_mut().for_each(|v| *v = v.max(T::zero()));
            if block.pool {
                if h < 2 || w < 2 {
                    return Err(Error::shape(format!(
                        "block {idx}: {h}x{w} map too small to pool"
                    )));
                }
                x = max_pool2(&x, c, h, w);
                h /= 2;
                w /= 2;
            }
        }
        Ok((x, c, h, w))
    }

    /// In-network CAM forward pass: activation maps are the 1×1-conv head
    /// applied at every location, and each score is the spatial mean of its
    /// map plus the head bias.
    pub fn forward(&self, img: &GrayImage<T>) -> Result<ForwardResult<T>> {
        let (feat, c_feat, h, w) = self.features(img)?;
        let classes = self.classes();
        let plane = h * w;
        let head = self.head.data();
        let mut act = vec![T::zero(); classes * plane];
        for (c, dst) in act.chunks_mut(plane).enumerate() {
            for d in 0..c_feat {
                let wdc = head[d * classes + c];
                if wdc == T::zero() {
                    continue;
                }
                for (a, &f) in dst.iter_mut().zip(&feat[d * plane..(d + 1) * plane]) {
                    *a = *a + wdc * f;
                }
            }
        }
        let denom = T::lit(plane as f64);
        let scores = act
            .chunks(plane)
            .zip(self.head_bias.data())
            .map(|(a, &b)| a.iter().copied().sum::<T>() / denom + b)
            .collect();
        Ok(ForwardResult {
            feature_maps: Tensor::from_parts_unchecked(vec![c_feat, h, w], feat),
            activation_maps: Tensor::from_parts_unchecked(vec![classes, h, w], act),
            scores: Tensor::from_parts_unchecked(vec![classes], scores),
        })
    }

    /// Classic CAM ordering: global-average-pool each feature map, then apply
    /// the head as a fully connected layer.
    pub fn forward_fc_equivalent(&self, img: &GrayImage<T>) -> Result<Tensor<T>> {
        let (feat, c_feat, h, w) = self.features(img)?;
        let plane = h * w;
        let denom = T::lit(plane as f64);
        let pooled: Vec<T> = (0..c_feat)
            .map(|d| feat[d * plane..(d + 1) * plane].iter().copied().sum::<T>() / denom)
            .collect();
        let classes = self.classes();
        let head = self.head.data();
        let scores = (0..classes)
            .map(|c| {
                (0..c_feat).fold(T::zero(), |acc, d| acc + head[d * classes + c] * pooled[d])
                    + self.head_bias.data()[c]
            })
            .collect();
        Ok(Tensor::from_parts_unchecked(vec![classes], scores))
    }

    /// Score of one class, the black-box view used by the explainers.
    pub fn score(&self, img: &GrayImage<T>, class: usize) -> Result<T> {
        if class >= self.classes() {
            return Err(Error::validation(format!(
                "class {class} out of range for {} classes",
                self.classes()
            )));
        }
        Ok(self.forward(img)?.scores.data()[class])
    }
}

fn max_pool2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        for r in 0..oh {
            let a = &src[2 * r * w..];
            let b = &src[(2 * r + 1) * w..];
            for col in 0..ow {
                out.push(
                    a[2 * col]
                        .max(a[2 * col + 1])
                        .max(b[2 * col])
                        .max(b[2 * col + 1]),
                );
            }
        }
    }
    out
}

/// Rounds through `f32` so the value survives the XTEN container unchanged.
fn storable<T: Real>(v: f64) -> T {
    T::lit(v as f32 as f64)
}

/// Seeded He-uniform initialization. Kernels draw from `±√(6/fan_in)`, conv
/// biases from `±0.05`, head bias is zero. All values are `f32`-representable.
pub fn net_init<T: Real>(seed: u64, arch: &Architecture) -> Result<MicroNet<T>> {
    let arch = Architecture::new(arch.blocks.clone(), arch.classes)?;
    let mut rng = Rng::new(seed);
    let mut blocks = Vec::with_capacity(arch.blocks.len());
    let mut c_in = 1;
    for spec in &arch.blocks {
        let c_out = spec.channels;
        let bound = (6.0 / (c_in * 9) as f64).sqrt();
        let kernels = (0..c_out * c_in * 9)
            .map(|_| storable(rng.range(-bound, bound)))
            .collect();
        let bias = (0..c_out).map(|_| storable(rng.range(-0.05, 0.05))).collect();
        blocks.push(Block {
            conv: ConvLayer::new(
                Tensor::new(vec![c_out, c_in, 3, 3], kernels)?,
                Tensor::new(vec![c_out], bias)?,
            )?,
            pool: spec.pool,
        });
        c_in = c_out;
    }
    let bound = (6.0 / c_in as f64).sqrt();
    let head = (0..c_in * arch.classes)
        .map(|_| storable(rng.range(-bound, bound)))
        .collect();
    MicroNet::new(
        blocks,
        Tensor::new(vec![c_in, arch.classes], head)?,
        Tensor::zeros(vec![arch.classes])?,
    )
}
