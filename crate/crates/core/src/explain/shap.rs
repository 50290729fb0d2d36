use super::{
    evaluate_coalitions, occlusion_game, sample_coalitions, Attribution, CoalitionSample, Method,
    SamplingMode, MAX_EXACT_FEATURES,
};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::numerics::{wls_solve, WlsProblem};
use crate::scalar::Real;
use crate::superpixel::SuperpixelMap;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapConfig {
    /// Coalitions to evaluate. At or above `2^N` every coalition is enumerated.
    pub samples: usize,
    pub seed: u64,
    pub fill: f64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig {
            samples: 1000,
            seed: 0,
            fill: 0.0,
        }
    }
}

/// Total kernel mass of all coalitions of size `s`: `(N−1)/(s(N−s))`.
pub fn shap_kernel_weight(n: usize, s: usize) -> f64 {
    (n - 1) as f64 / (s * (n - s)) as f64
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Weighted regression with the empty and full coalitions as hard
/// constraints: `intercept = f(∅)` and `intercept + Σw = f(full)`.
///
/// The last weight is eliminated as `w_{N−1} = Δ − Σ_{i<N−1} w_i`, leaving an
/// unconstrained least-squares problem in `N−1` unknowns.
fn constrained_fit<T: Real>(
    rows: &[(&CoalitionSample<T>, T)],
    n: usize,
    f_empty: T,
    f_full: T,
) -> Result<Vec<T>> {
    let delta = f_full - f_empty;
    let last = n - 1;
    let mut design = Vec::with_capacity(rows.len() * last);
    let mut targets = Vec::with_capacity(rows.len());
    let mut weights = Vec::with_capacity(rows.len());
    let ind = |b: bool| if b { T::one() } else { T::zero() };
    for (s, w) in rows {
        let z_last = ind(s.mask[last]);
        design.extend(s.mask[..last].iter().map(|&b| ind(b) - z_last));
        targets.push(s.score - f_empty - z_last * delta);
        weights.push(*w);
    }
    let problem = WlsProblem::new(
        Tensor::new(vec![rows.len(), last], design)?,
        Tensor::from_vec(targets)?,
        Tensor::from_vec(weights)?,
    )?;
    let mut phi = wls_solve(&problem)?.into_data();
    let rest = phi.iter().copied().fold(T::zero(), |a, b| a + b);
    phi.push(delta - rest);
    Ok(phi)
}

/// Kernel SHAP over an arbitrary set function of `n_features` players.
///
/// With `cfg.samples ≥ 2^N` (and `N ≤ 20`) all coalitions are enumerated and
/// weighted by the exact Shapley kernel `(N−1)/(C(N,s)·s·(N−s))`, which
/// reproduces exact Shapley values. Otherwise sizes are drawn proportionally
/// to `(N−1)/(s(N−s))` with uniform membership and every draw has unit weight.
pub fn shap_explain_game<T, F>(game: &F, n_features: usize, cfg: &ShapConfig) -> Result<Attribution<T>>
where
    T: Real,
    F: Fn(&[bool]) -> Result<T> + Sync,
{
    let n = n_features;
    if n < 2 {
        return Err(Error::validation("Kernel SHAP needs at least 2 features"));
    }
    if cfg.samples < n + 2 {
        return Err(Error::validation(format!(
            "{} samples cannot determine {n} weights (need ≥ {})",
            cfg.samples,
            n + 2
        )));
    }
    let enumerate = n <= MAX_EXACT_FEATURES && cfg.samples >= 1usize << n;
    let masks = if enumerate {
        let mut masks = vec![vec![true; n], vec![false; n]];
        for bits in 1..(1u64 << n) - 1 {
            masks.push((0..n).map(|i| bits >> i & 1 == 1).collect());
        }
        masks
    } else {
        sample_coalitions(n, cfg.samples, cfg.seed, SamplingMode::ShapleyKernel)?
    };
    let samples = evaluate_coalitions(masks, game)?;
    let f_full = samples[0].score;
    let f_empty = samples[1].score;
    let rows: Vec<(&CoalitionSample<T>, T)> = samples[2..]
        .iter()
        .map(|s| {
            let w = if enumerate {
                let k = s.present();
                T::lit(shap_kernel_weight(n, k) / binomial(n, k))
            } else {
                T::one()
            };
            (s, w)
        })
        .collect();
    let weights = constrained_fit(&rows, n, f_empty, f_full)?;
    Ok(Attribution {
        weights,
        intercept: f_empty,
        method: Method::KernelShap,
        n_samples: samples.len(),
        converged: true,
    })
}

/// Kernel SHAP attribution of `f` on `img` over the superpixels of `sp`.
pub fn shap_explain<T, F>(
    f: &F,
    img: &GrayImage<T>,
    sp: &SuperpixelMap,
    cfg: &ShapConfig,
) -> Result<Attribution<T>>
where
    T: Real,
    F: Fn(&GrayImage<T>) -> Result<T> + Sync,
{
    let game = occlusion_game(f, img, sp, T::lit(cfg.fill));
    shap_explain_game(&game, sp.n_segments(), cfg)
}
