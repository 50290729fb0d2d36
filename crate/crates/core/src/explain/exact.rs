use super::{occlusion_game, Attribution, Method};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Real;
use crate::superpixel::SuperpixelMap;

/// Enumeration cap: `2^20` evaluations.
pub const MAX_EXACT_FEATURES: usize = 20;

/// Shapley values by brute force over all `2^N` coalitions:
///
/// `φ_i = Σ_{S ∌ i} |S|!(N−|S|−1)!/N! · (f(S ∪ {i}) − f(S))`
///
/// The intercept is `f(∅)`, so `intercept + Σφ = f(full)`.
pub fn exact_shapley<T, F>(game: &F, n: usize) -> Result<Attribution<T>>
where
    T: Real,
    F: Fn(&[bool]) -> Result<T>,
{
    if n == 0 {
        return Err(Error::validation("no players"));
    }
    if n > MAX_EXACT_FEATURES {
        return Err(Error::Resource(format!(
            "exact Shapley over {n} players needs 2^{n} evaluations (limit {MAX_EXACT_FEATURES})"
        )));
    }
    let total = 1usize << n;
    let mut values = Vec::with_capacity(total);
    let mut mask = vec![false; n];
    for bits in 0..total {
        for (i, m) in mask.iter_mut().enumerate() {
            *m = bits >> i & 1 == 1;
        }
        let v = game(&mask).map_err(|e| Error::Explanation {
            index: bits,
            source: Box::new(e),
        })?;
        if !v.is_finite() {
            return Err(Error::Explanation {
                index: bits,
                source: Box::new(Error::validation("non-finite score")),
            });
        }
        values.push(v);
    }
    // |S|!(N−|S|−1)!/N! = 1 / (N · C(N−1, |S|))
    let mut coef = vec![0.0f64; n];
    let mut binom = 1.0f64;
    for (s, c) in coef.iter_mut().enumerate() {
        *c = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }
    let coef: Vec<T> = coef.into_iter().map(T::lit).collect();
    let mut phi = vec![T::zero(); n];
    for (bits, &v) in values.iter().enumerate() {
        let size = bits.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if bits >> i & 1 == 0 {
                *p = *p + coef[size] * (values[bits | 1 << i] - v);
            }
        }
    }
    Ok(Attribution {
        weights: phi,
        intercept: values[0],
        method: Method::ExactShapley,
        n_samples: total,
        converged: true,
    })
}

/// Exact Shapley values of `f` on `img`, with absent superpixels painted `baseline`.
pub fn exact_shapley_image<T, F>(
    f: &F,
    img: &GrayImage<T>,
    sp: &SuperpixelMap,
    baseline: T,
) -> Result<Attribution<T>>
where
    T: Real,
    F: Fn(&GrayImage<T>) -> Result<T> + Sync,
{
    let game = occlusion_game(f, img, sp, baseline);
    exact_shapley(&game, sp.n_segments())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_game() {
        let v = [0.5, -1.25, 3.0, 0.0];
        let game = |m: &[bool]| -> Result<f64> {
            Ok(m.iter().zip(v).filter(|(b, _)| **b).map(|(_, x)| x).sum())
        };
        let a = exact_shapley(&game, 4).unwrap();
        for (p, x) in a.weights.iter().zip(v) {
            assert!((p - x).abs() < 1e-12);
        }
    }

    #[test]
    fn unanimity_game() {
        let game = |m: &[bool]| -> Result<f64> { Ok(if m.iter().all(|&b| b) { 1.0 } else { 0.0 }) };
        let a = exact_shapley(&game, 3).unwrap();
        for p in &a.weights {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn too_many_players() {
        let game = |_: &[bool]| -> Result<f64> { Ok(0.0) };
        assert!(matches!(exact_shapley(&game, 21), Err(Error::Resource(_))));
    }
}
