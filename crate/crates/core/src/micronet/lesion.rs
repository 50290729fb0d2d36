use super::{storable, Block, ConvLayer, MicroNet};
use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Local mean intensity above which the first layer fires.
pub const LESION_THRESHOLD: f64 = 0.42;
const HEAD_GAIN: f64 = 1200.0;
const HEAD_BIAS: f64 = -3.0;

/// Analytically constructed bright-blob detector, `conv:1 pool conv:1 pool head:1`.
///
/// Layer 1 is a 3×3 box filter minus [`LESION_THRESHOLD`], so after ReLU only
/// regions brighter than soft tissue respond. Layer 2 smooths that response
/// once more, and the head scales the pooled mean so one mid-sized lesion
/// moves the score from about `HEAD_BIAS` to clearly positive.
pub fn lesion_detector<T: Real>() -> Result<MicroNet<T>> {
    let box9 = |gain: f64| Tensor::new(vec![1, 1, 3, 3], vec![storable::<T>(gain / 9.0); 9]);
    let blocks = vec![
        Block {
            conv: ConvLayer::new(box9(1.0)?, Tensor::new(vec![1], vec![storable(-LESION_THRESHOLD)])?)?,
            pool: true,
        },
        Block {
            conv: ConvLayer::new(box9(1.0)?, Tensor::zeros(vec![1])?)?,
            pool: true,
        },
    ];
    MicroNet::new(
        blocks,
        Tensor::new(vec![1, 1], vec![storable(HEAD_GAIN)])?,
        Tensor::new(vec![1], vec![storable(HEAD_BIAS)])?,
    )
}
