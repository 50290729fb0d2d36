use std::io::Write;

use crate::error::{Error, Result};
use crate::explain::{exact_shapley, shap_explain_game, ShapConfig};
use crate::image::GrayImage;
use crate::micronet::{net_init, Architecture};
use crate::numerics::Rng;

const TOL: f64 = 1e-6;

fn bits(mask: &[bool]) -> usize {
    mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| 1 << i).sum()
}

fn random_image(rng: &mut Rng, h: usize, w: usize) -> Result<GrayImage<f64>> {
    GrayImage::new(h, w, (0..h * w).map(|_| rng.uniform()).collect())
}

/// Largest `|GAP→linear − per-position head then GAP|` over seeded nets and images.
fn fc_equivalence(seed: u64) -> Result<f64> {
    let mut rng = Rng::derive(seed, 1);
    let archs: Vec<Architecture> = [Architecture::DEFAULT, "conv:4 conv:4 pool head:3", "conv:2 head:2"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for i in 0..12 {
        let net = net_init::<f64>(rng.next_u64(), &archs[i % archs.len()])?;
        for _ in 0..2 {
            let img = random_image(&mut rng, 32, 32)?;
            let a = net.forward(&img)?.scores;
            let b = net.forward_fc_equivalent(&img)?;
            for (x, y) in a.data().iter().zip(b.data()) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest per-feature gap between enumerated Kernel SHAP and brute-force
/// Shapley values, and the largest efficiency residual.
fn shapley_oracle(seed: u64) -> Result<(f64, f64)> {
    let n = 8;
    let mut rng = Rng::derive(seed, 2);
    let (mut gap, mut eff) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let table: Vec<f64> = (0..1 << n).map(|_| rng.range(-1.0, 1.0)).collect();
        let game = |m: &[bool]| -> Result<f64> { Ok(table[bits(m)]) };
        let exact = exact_shapley(&game, n)?;
        let kernel = shap_explain_game(&game, n, &ShapConfig { samples: 1 << n, ..ShapConfig::default() })?;
        for (a, b) in exact.weights.iter().zip(&kernel.weights) {
            gap = gap.max((a - b).abs());
        }
        let total = kernel.intercept + kernel.weights.iter().sum::<f64>();
        eff = eff.max((total - table[(1 << n) - 1]).abs());
    }
    Ok((gap, eff))
}

/// Worst violation across the symmetry, dummy and additivity axioms.
fn axioms() -> Result<f64> {
    let n = 6;
    let sym = |m: &[bool]| -> Result<f64> { Ok(if m[0] || m[1] { 1.0 } else { 0.0 } + if m[2] { 0.3 } else { 0.0 }) };
    let phi = exact_shapley(&sym, n)?.weights;
    let mut worst = (phi[0] - phi[1]).abs();

    let dummy = |m: &[bool]| -> Result<f64> { Ok(if m[0] && m[1] { 2.0 } else { 0.0 } + if m[2] { 0.5 } else { 0.0 }) };
    let phi = exact_shapley(&dummy, n)?.weights;
    worst = worst.max(phi[5].abs());

    let v = [0.4, -1.0, 2.5, 0.0, 0.7, -0.2];
    let additive = |m: &[bool]| -> Result<f64> { Ok(m.iter().zip(v).filter(|(b, _)| **b).map(|(_, x)| x).sum()) };
    let phi = exact_shapley(&additive, n)?.weights;
    for (p, x) in phi.iter().zip(v) {
        worst = worst.max((p - x).abs());
    }
    Ok(worst)
}

pub fn run(seed: u64, out: &mut dyn Write) -> Result<bool> {
    let mut all = true;
    let mut report = |name: &str, value: f64, tol: f64| -> Result<()> {
        let ok = value < tol;
        all &= ok;
        writeln!(out, "{} {name} max_err {value:.3e} tol {tol:.0e}", if ok { "PASS" } else { "FAIL" })
            .map_err(|e| Error::io("<stdout>", e))
    };
    report("fc-equivalence", fc_equivalence(seed)?, 1e-9)?;
    let (gap, eff) = shapley_oracle(seed)?;
    report("kernel-shap-vs-exact", gap, TOL)?;
    report("shap-efficiency", eff, TOL)?;
    report("shapley-axioms", axioms()?, 1e-9)?;
    Ok(all)
}
