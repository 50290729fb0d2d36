use super::{
    evaluate_coalitions, occlusion_game, sample_coalitions, Attribution, CoalitionSample, Method,
    SamplingMode,
};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::numerics::{lambda_max, lasso_fit, WlsProblem};
use crate::scalar::Real;
use crate::superpixel::SuperpixelMap;
use crate::tensor::Tensor;

/// L1 penalty on the surrogate weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Absolute(f64),
    /// Fraction of the smallest penalty that zeroes every weight.
    RelativeToMax(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimeConfig {
    pub samples: usize,
    /// Width of the exponential locality kernel.
    pub sigma: f64,
    pub penalty: Penalty,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Intensity painted over masked superpixels.
    pub fill: f64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            samples: 1000,
            sigma: 2.0,
            penalty: Penalty::RelativeToMax(0.01),
            tol: 1e-12,
            max_iter: 200_000,
            seed: 0,
            fill: 0.0,
        }
    }
}

impl LimeConfig {
    fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::validation("sigma must be positive"));
        }
        match self.penalty {
            Penalty::Absolute(l) | Penalty::RelativeToMax(l) if !(l.is_finite() && l >= 0.0) => {
                Err(Error::validation("penalty must be non-negative"))
            }
            _ => Ok(()),
        }
    }
}

/// Fits the locally weighted sparse surrogate to already-scored coalitions.
///
/// Each sample is weighted by `exp(−d²/σ²)` where `d²` counts the masked
/// superpixels, and the weights come from a Lasso with the intercept left
/// unpenalized.
pub fn lime_from_samples<T: Real>(
    samples: &[CoalitionSample<T>],
    n_features: usize,
    cfg: &LimeConfig,
) -> Result<Attribution<T>> {
    cfg.validate()?;
    if samples.iter().any(|s| s.mask.len() != n_features) {
        return Err(Error::validation("sample mask length differs from feature count"));
    }
    let p = n_features + 1;
    let mut design = Vec::with_capacity(samples.len() * p);
    let mut targets = Vec::with_capacity(samples.len());
    let mut weights = Vec::with_capacity(samples.len());
    let sigma2 = cfg.sigma * cfg.sigma;
    for s in samples {
        design.push(T::one());
        design.extend(s.mask.iter().map(|&b| if b { T::one() } else { T::zero() }));
        targets.push(s.score);
        let d2 = (n_features - s.present()) as f64;
        weights.push(T::lit((-d2 / sigma2).exp()));
    }
    let problem = WlsProblem::new(
        Tensor::new(vec![samples.len(), p], design)?,
        Tensor::from_vec(targets)?,
        Tensor::from_vec(weights)?,
    )?;
    let lambda = match cfg.penalty {
        Penalty::Absolute(l) => T::lit(l),
        Penalty::RelativeToMax(frac) => lambda_max(&problem) * T::lit(frac),
    };
    let fit = lasso_fit(&problem, lambda, T::lit(cfg.tol), cfg.max_iter);
    let coef = fit.coefficients.into_data();
    Ok(Attribution {
        intercept: coef[0],
        weights: coef[1..].to_vec(),
        method: Method::Lime,
        n_samples: samples.len(),
        converged: fit.converged,
    })
}

/// LIME over an arbitrary set function of `n_features` players.
pub fn lime_explain_game<T, F>(game: &F, n_features: usize, cfg: &LimeConfig) -> Result<Attribution<T>>
where
    T: Real,
    F: Fn(&[bool]) -> Result<T> + Sync,
{
    cfg.validate()?;
    let masks = sample_coalitions(n_features, cfg.samples, cfg.seed, SamplingMode::Uniform)?;
    let samples = evaluate_coalitions(masks, game)?;
    lime_from_samples(&samples, n_features, cfg)
}

/// LIME attribution of `f` on `img` over the superpixels of `sp`.
pub fn lime_explain<T, F>(
    f: &F,
    img: &GrayImage<T>,
    sp: &SuperpixelMap,
    cfg: &LimeConfig,
) -> Result<Attribution<T>>
where
    T: Real,
    F: Fn(&GrayImage<T>) -> Result<T> + Sync,
{
    if sp.n_segments() < 2 {
        return Err(Error::validation("LIME needs at least 2 superpixels"));
    }
    let game = occlusion_game(f, img, sp, T::lit(cfg.fill));
    lime_explain_game(&game, sp.n_segments(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_game() {
        let game = |m: &[bool]| -> Result<f64> { Ok(if m[1] { 1.0 } else { 0.0 }) };
        let a = lime_explain_game(&game, 6, &LimeConfig { seed: 3, ..Default::default() }).unwrap();
        assert!(a.converged);
        assert!(a.weights[1] >= 0.9, "{:?}", a.weights);
        for (j, w) in a.weights.iter().enumerate() {
            if j != 1 {
                assert!(w.abs() <= 0.05);
            }
        }
    }

    #[test]
    fn constant_game_has_no_weights() {
        let game = |_: &[bool]| -> Result<f64> { Ok(2.5) };
        let a = lime_explain_game(&game, 5, &LimeConfig::default()).unwrap();
        assert!(a.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((a.intercept - 2.5).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let game = |m: &[bool]| -> Result<f64> {
            Ok(m.iter().enumerate().map(|(i, &b)| if b { (i as f64).sin() } else { 0.0 }).sum())
        };
        let cfg = LimeConfig { seed: 9, samples: 200, ..Default::default() };
        assert_eq!(lime_explain_game(&game, 7, &cfg).unwrap(), lime_explain_game(&game, 7, &cfg).unwrap());
    }

    #[test]
    fn bad_config() {
        let game = |_: &[bool]| -> Result<f64> { Ok(0.0) };
        let cfg = LimeConfig { sigma: 0.0, ..Default::default() };
        assert!(lime_explain_game(&game, 3, &cfg).is_err());
        let cfg = LimeConfig { samples: 4, ..Default::default() };
        assert!(lime_explain_game(&game, 3, &cfg).is_err());
    }
}
