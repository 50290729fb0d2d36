//! Perturbation attributions over superpixels.
//!
//! Every explainer sees the model only as a set function: a coalition mask
//! (`true` = superpixel kept) maps to one real score. Image-level entry points
//! build that set function by occluding masked superpixels with a fill value.

mod exact;
mod lime;
mod shap;

pub use exact::{exact_shapley, exact_shapley_image, MAX_EXACT_FEATURES};
pub use lime::{lime_explain, lime_explain_game, lime_from_samples, LimeConfig, Penalty};
pub use shap::{shap_explain, shap_explain_game, shap_kernel_weight, ShapConfig};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::numerics::Rng;
use crate::scalar::Real;
use crate::superpixel::{apply_mask, SuperpixelMap};

/// One perturbed evaluation: `mask[i]` is true when superpixel `i` is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionSample<T = f64> {
    pub mask: Vec<bool>,
    pub score: T,
}

impl<T> CoalitionSample<T> {
    pub fn present(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lime,
    KernelShap,
    ExactShapley,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lime => "lime",
            Method::KernelShap => "kernel-shap",
            Method::ExactShapley => "exact-shapley",
        }
    }
}

/// Per-superpixel weights of a linear surrogate `intercept + Σ w_i x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution<T = f64> {
    pub weights: Vec<T>,
    pub intercept: T,
    pub method: Method,
    pub n_samples: usize,
    pub converged: bool,
}

impl<T: Real> Attribution<T> {
    /// Surrogate prediction for a coalition.
    pub fn predict(&self, mask: &[bool]) -> T {
        self.weights
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .fold(self.intercept, |acc, (&w, _)| acc + w)
    }

    /// Index of the largest weight (first on ties).
    pub fn top_feature(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, w) in self.weights.iter().enumerate() {
            if best.is_none_or(|b| *w > self.weights[b]) {
                best = Some(i);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Every superpixel kept independently with probability ½.
    Uniform,
    /// Coalition size drawn ∝ `(N−1)/(s(N−s))`, members uniform at that size.
    ShapleyKernel,
}

/// Draws `m` coalition masks over `n` features. The first two are always the
/// full and the empty coalition.
pub fn sample_coalitions(
    n: usize,
    m: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<Vec<Vec<bool>>> {
    if n == 0 {
        return Err(Error::validation("no features to sample"));
    }
    if m < n + 2 {
        return Err(Error::validation(format!(
            "{m} samples cannot determine {n} weights plus intercept (need ≥ {})",
            n + 2
        )));
    }
    if mode == SamplingMode::ShapleyKernel && n < 2 {
        return Err(Error::validation("Shapley-kernel sampling needs at least 2 features"));
    }
    let mut rng = Rng::new(seed);
    let mut masks = Vec::with_capacity(m);
    masks.push(vec![true; n]);
    masks.push(vec![false; n]);
    match mode {
        SamplingMode::Uniform => {
            for _ in 2..m {
                masks.push((0..n).map(|_| rng.bernoulli(0.5)).collect());
            }
        }
        SamplingMode::ShapleyKernel => {
            let cumulative: Vec<f64> = (1..n)
                .scan(0.0, |acc, s| {
                    *acc += shap_kernel_weight(n, s);
                    Some(*acc)
                })
                .collect();
            let total = *cumulative.last().unwrap();
            for _ in 2..m {
                let u = rng.uniform() * total;
                let size = 1 + cumulative.iter().position(|&c| u < c).unwrap_or(n - 2);
                let mut mask = vec![false; n];
                for i in rng.choose_k(n, size) {
                    mask[i] = true;
                }
                masks.push(mask);
            }
        }
    }
    Ok(masks)
}

/// Scores every mask, possibly in parallel; results keep mask order and the
/// first failing mask (by index) is reported.
pub fn evaluate_coalitions<T, F>(masks: Vec<Vec<bool>>, game: &F) -> Result<Vec<CoalitionSample<T>>>
where
    T: Real,
    F: Fn(&[bool]) -> Result<T> + Sync,
{
    let results: Vec<Result<CoalitionSample<T>>> = masks
        .into_par_iter()
        .enumerate()
        .map(|(index, mask)| {
            let score = game(&mask).map_err(|e| Error::Explanation {
                index,
                source: Box::new(e),
            })?;
            if !score.is_finite() {
                return Err(Error::Explanation {
                    index,
                    source: Box::new(Error::validation(format!("non-finite score {score}"))),
                });
            }
            Ok(CoalitionSample { mask, score })
        })
        .collect();
    results.into_iter().collect()
}

/// Set function over superpixels: the scorer applied to the occluded image.
pub fn occlusion_game<'a, T, F>(
    f: &'a F,
    img: &'a GrayImage<T>,
    sp: &'a SuperpixelMap,
    fill: T,
) -> impl Fn(&[bool]) -> Result<T> + Sync + 'a
where
    T: Real,
    F: Fn(&GrayImage<T>) -> Result<T> + Sync,
{
    move |mask: &[bool]| f(&apply_mask(img, sp, mask, fill)?)
}
