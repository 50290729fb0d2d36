//! Deterministic synthetic CT-like slices with known lesion ground truth.
//!
//! A slice is a mid-gray elliptical body with two dark lung fields on a black
//! background. Lesions are bright soft-edged discs over lung-density tissue,
//! composited with `max` so they never brighten the body wall beyond their own
//! peak, and seeded Gaussian noise is applied last. Everything is a pure function of the seed.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::numerics::Rng;
use crate::slices::PatientVolume;

pub const DEFAULT_SIZE: usize = 224;
pub const DEFAULT_NOISE: f64 = 0.02;
pub const BODY_INTENSITY: f64 = 0.35;
pub const LUNG_INTENSITY: f64 = 0.1;

/// One soft bright disc. `softness` is the σ of the Gaussian-like edge ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    pub center: (f64, f64),
    pub radius: f64,
    pub intensity: f64,
    pub softness: f64,
}

impl LesionSpec {
    fn validate(&self, h: usize, w: usize) -> Result<()> {
        let (r, c) = self.center;
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::validation(format!("lesion radius {} must be positive", self.radius)));
        }
        if !(self.intensity > 0.0 && self.intensity <= 1.0) {
            return Err(Error::validation(format!("lesion intensity {} outside (0,1]", self.intensity)));
        }
        if !(self.softness.is_finite() && self.softness > 0.0) {
            return Err(Error::validation(format!("lesion softness {} must be positive", self.softness)));
        }
        let fits = r - self.radius >= 0.0
            && c - self.radius >= 0.0
            && r + self.radius <= (h - 1) as f64
            && c + self.radius <= (w - 1) as f64;
        if !fits {
            return Err(Error::validation(format!(
                "lesion at ({r}, {c}) with radius {} leaves the {h}x{w} image",
                self.radius
            )));
        }
        Ok(())
    }

    /// Added intensity at distance `d` from the center: a dome
    /// `0.7 + 0.3(1 − d²/r²)` times a logistic edge of width `softness`.
    fn profile(&self, d: f64) -> f64 {
        let dome = 0.7 + 0.3 * (1.0 - (d / self.radius).powi(2)).max(0.0);
        let edge = 1.0 / (1.0 + (-1.702 * (self.radius - d) / self.softness).exp());
        self.intensity * dome * edge
    }

    fn contains(&self, row: usize, col: usize) -> bool {
        let (dr, dc) = (row as f64 - self.center.0, col as f64 - self.center.1);
        dr * dr + dc * dc <= self.radius * self.radius
    }
}

/// Ground-truth lesion pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        BinaryMask { height, width, bits: vec![false; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Black/white PGM (maxval 255).
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }
}

fn in_ellipse(r: f64, c: f64, center: (f64, f64), axes: (f64, f64)) -> bool {
    let (dr, dc) = ((r - center.0) / axes.0, (c - center.1) / axes.1);
    dr * dr + dc * dc <= 1.0
}

fn lung_geometry(h: usize, w: usize) -> [((f64, f64), (f64, f64)); 2] {
    let (h, w) = (h as f64, w as f64);
    let axes = (0.30 * h, 0.15 * w);
    [((0.48 * h, 0.30 * w), axes), ((0.48 * h, 0.70 * w), axes)]
}

/// Noise-free anatomy: body ellipse, two lung fields, black outside.
pub fn anatomy(h: usize, w: usize) -> Vec<f64> {
    let body = ((h as f64 / 2.0, w as f64 / 2.0), (0.42 * h as f64, 0.46 * w as f64));
    let lungs = lung_geometry(h, w);
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (rf, cf) = (r as f64, c as f64);
            let v = if lungs.iter().any(|&(ctr, ax)| in_ellipse(rf, cf, ctr, ax)) {
                LUNG_INTENSITY
            } else if in_ellipse(rf, cf, body.0, body.1) {
                BODY_INTENSITY
            } else {
                0.0
            };
            out.push(v);
        }
    }
    out
}

/// Renders one slice and its lesion mask.
pub fn gen_slice(
    lesions: &[LesionSpec],
    h: usize,
    w: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(GrayImage<f64>, BinaryMask)> {
    if h == 0 || w == 0 {
        return Err(Error::shape(format!("empty slice {h}x{w}")));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::validation(format!("noise sigma {noise_sigma} must be non-negative")));
    }
    for l in lesions {
        l.validate(h, w)?;
    }
    let mut pixels = anatomy(h, w);
    let mut added = vec![0.0; h * w];
    let mut mask = BinaryMask::empty(h, w);
    for l in lesions {
        let reach = l.radius + 6.0 * l.softness;
        let r0 = (l.center.0 - reach).floor().max(0.0) as usize;
        let r1 = ((l.center.0 + reach).ceil() as usize).min(h - 1);
        let c0 = (l.center.1 - reach).floor().max(0.0) as usize;
        let c1 = ((l.center.1 + reach).ceil() as usize).min(w - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                let d = (r as f64 - l.center.0).hypot(c as f64 - l.center.1);
                added[r * w + c] += l.profile(d);
                if l.contains(r, c) {
                    mask.bits[r * w + c] = true;
                }
            }
        }
    }
    for (p, a) in pixels.iter_mut().zip(&added) {
        if *a > 0.0 {
            *p = p.max(LUNG_INTENSITY + a);
        }
    }
    let mut rng = Rng::new(seed);
    if noise_sigma > 0.0 {
        for p in &mut pixels {
            *p += noise_sigma * rng.normal();
        }
    }
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }
    Ok((GrayImage::new(h, w, pixels)?, mask))
}

/// Draws a lesion centered inside one of the lung fields.
pub fn random_lesion(rng: &mut Rng, h: usize, w: usize, radius: Range<f64>, intensity: Range<f64>) -> LesionSpec {
    let lungs = lung_geometry(h, w);
    let radius = rng.range(radius.start, radius.end);
    let intensity = rng.range(intensity.start, intensity.end);
    let ((cr, cc), (ar, ac)) = lungs[rng.below(2)];
    // uniform in the inner 60% of the lung ellipse, clipped to keep the disc in frame
    let (rho, theta) = (0.6 * rng.uniform().sqrt(), rng.range(0.0, std::f64::consts::TAU));
    let row = (cr + rho * ar * theta.sin()).clamp(radius, h as f64 - 1.0 - radius);
    let col = (cc + rho * ac * theta.cos()).clamp(radius, w as f64 - 1.0 - radius);
    LesionSpec { center: (row, col), radius, intensity, softness: 2.0 }
}

/// Patient volume recipe. `lesions[i]` lists the lesions on slice
/// `lesion_slices.start + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSpec {
    pub n_slices: usize,
    pub lesion_slices: Range<usize>,
    pub lesions: Vec<Vec<LesionSpec>>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
}

impl VolumeSpec {
    /// The same lesion set on every slice of `lesion_slices`.
    pub fn repeated(
        n_slices: usize,
        lesion_slices: Range<usize>,
        lesions: Vec<LesionSpec>,
        noise_sigma: f64,
        seed: u64,
        size: (usize, usize),
    ) -> Self {
        VolumeSpec {
            n_slices,
            lesions: vec![lesions; lesion_slices.len()],
            lesion_slices,
            noise_sigma,
            seed,
            height: size.0,
            width: size.1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_slices == 0 {
            return Err(Error::validation("volume needs at least one slice"));
        }
        if self.lesion_slices.start > self.lesion_slices.end || self.lesion_slices.end > self.n_slices {
            return Err(Error::validation(format!(
                "lesion slices {:?} outside 0..{}",
                self.lesion_slices, self.n_slices
            )));
        }
        if self.lesions.len() != self.lesion_slices.len() {
            return Err(Error::validation(format!(
                "{} lesion lists for {} lesion slices",
                self.lesions.len(),
                self.lesion_slices.len()
            )));
        }
        Ok(())
    }

    /// Noise seed of slice `i`.
    pub fn slice_seed(&self, i: usize) -> u64 {
        Rng::derive(self.seed, i as u64).next_u64()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedVolume {
    pub volume: PatientVolume<f64>,
    pub masks: Vec<BinaryMask>,
}

pub fn gen_volume(spec: &VolumeSpec) -> Result<GeneratedVolume> {
    spec.validate()?;
    let mut slices = Vec::with_capacity(spec.n_slices);
    let mut masks = Vec::with_capacity(spec.n_slices);
    for i in 0..spec.n_slices {
        let lesions: &[LesionSpec] = if spec.lesion_slices.contains(&i) {
            &spec.lesions[i - spec.lesion_slices.start]
        } else {
            &[]
        };
        let (img, mask) = gen_slice(lesions, spec.height, spec.width, spec.noise_sigma, spec.slice_seed(i))?;
        slices.push(img);
        masks.push(mask);
    }
    let label = masks.iter().any(|m| !m.is_empty());
    Ok(GeneratedVolume { volume: PatientVolume::new(slices, Some(label))?, masks })
}

/// Settings for a whole on-disk corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub patients: usize,
    pub n_slices: usize,
    pub size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { patients: 6, n_slices: 24, size: DEFAULT_SIZE, noise_sigma: DEFAULT_NOISE, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientEntry {
    pub id: String,
    pub label: bool,
    pub spec: VolumeSpec,
    pub slices: Vec<PathBuf>,
    pub masks: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: CorpusConfig,
    pub patients: Vec<PatientEntry>,
}

/// Volume specs of a corpus: even-indexed patients are negative, the others
/// carry one to `n_slices/2` consecutive lesion slices with lesions whose
/// geometry is fixed per patient.
pub fn corpus_specs(cfg: &CorpusConfig) -> Result<Vec<VolumeSpec>> {
    let min_size = 64;
    if cfg.size < min_size {
        return Err(Error::validation(format!("slice size {} below {min_size}", cfg.size)));
    }
    if cfg.patients == 0 || cfg.n_slices == 0 {
        return Err(Error::validation("corpus needs patients and slices"));
    }
    let mut rng = Rng::new(cfg.seed);
    let scale = cfg.size as f64 / DEFAULT_SIZE as f64;
    let mut specs = Vec::with_capacity(cfg.patients);
    for p in 0..cfg.patients {
        let seed = rng.next_u64();
        let range = if p % 2 == 1 {
            let count = 1 + rng.below((cfg.n_slices / 2).max(1));
            let start = rng.below(cfg.n_slices - count + 1);
            start..start + count
        } else {
            0..0
        };
        let n_lesions = 1 + rng.below(2);
        let lesions: Vec<LesionSpec> = (0..n_lesions)
            .map(|_| random_lesion(&mut rng, cfg.size, cfg.size, 20.0 * scale..26.0 * scale, 0.5..0.55))
            .collect();
        specs.push(VolumeSpec::repeated(
            cfg.n_slices,
            range,
            lesions,
            cfg.noise_sigma,
            seed,
            (cfg.size, cfg.size),
        ));
    }
    Ok(specs)
}

/// Writes `patient_XXX/slice_YYY.pgm`, `mask_YYY.pgm` and `manifest.json`.
/// Slices are 16-bit PGM.
pub fn write_corpus(dir: &Path, cfg: &CorpusConfig) -> Result<Manifest> {
    let specs = corpus_specs(cfg)?;
    let mut patients = Vec::with_capacity(specs.len());
    for (p, spec) in specs.into_iter().enumerate() {
        let id = format!("patient_{p:03}");
        let pdir = dir.join(&id);
        fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
        let generated = gen_volume(&spec)?;
        let mut slices = Vec::new();
        let mut masks = Vec::new();
        for (i, (img, mask)) in generated.volume.slices().iter().zip(&generated.masks).enumerate() {
            let slice_rel = PathBuf::from(&id).join(format!("slice_{i:03}.pgm"));
            let mask_rel = PathBuf::from(&id).join(format!("mask_{i:03}.pgm"));
            let slice_path = dir.join(&slice_rel);
            fs::write(&slice_path, img.to_pgm_bytes(u16::MAX)).map_err(|e| Error::io(&slice_path, e))?;
            let mask_path = dir.join(&mask_rel);
            fs::write(&mask_path, mask.to_pgm_bytes()).map_err(|e| Error::io(&mask_path, e))?;
            slices.push(slice_rel);
            masks.push(mask_rel);
        }
        patients.push(PatientEntry {
            id,
            label: generated.volume.label().unwrap_or(false),
            spec,
            slices,
            masks,
        });
    }
    let manifest = Manifest { config: cfg.clone(), patients };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lesion(center: (f64, f64), radius: f64) -> LesionSpec {
        LesionSpec { center, radius, intensity: 0.5, softness: 2.0 }
    }

    #[test]
    fn empty_slice() {
        let (img, mask) = gen_slice(&[], 64, 64, 0.0, 1).unwrap();
        assert!(mask.is_empty());
        assert_eq!(img.pixels(), anatomy(64, 64).as_slice());
    }

    #[test]
    fn disc_area_bounds() {
        let (_, mask) = gen_slice(&[lesion((32.0, 32.0), 10.0)], 64, 64, 0.0, 0).unwrap();
        let area = mask.area() as f64;
        let pi = std::f64::consts::PI;
        assert!(area >= pi * 64.0 && area <= pi * 144.0, "{area}");
    }

    #[test]
    fn seeded() {
        let l = [lesion((40.0, 30.0), 8.0)];
        assert_eq!(gen_slice(&l, 64, 64, 0.05, 9).unwrap(), gen_slice(&l, 64, 64, 0.05, 9).unwrap());
        assert_ne!(gen_slice(&l, 64, 64, 0.05, 9).unwrap().0, gen_slice(&l, 64, 64, 0.05, 10).unwrap().0);
    }

    #[test]
    fn out_of_bounds_lesion() {
        assert!(matches!(gen_slice(&[lesion((5.0, 30.0), 8.0)], 64, 64, 0.0, 0), Err(Error::Validation(_))));
        let bad = LesionSpec { intensity: 0.0, ..lesion((32.0, 32.0), 4.0) };
        assert!(gen_slice(&[bad], 64, 64, 0.0, 0).is_err());
    }

    #[test]
    fn mask_pixels_are_bright() {
        let lesions = [lesion((100.0, 70.0), 22.0), lesion((110.0, 150.0), 20.0)];
        let (img, mask) = gen_slice(&lesions, 224, 224, DEFAULT_NOISE, 3).unwrap();
        let background: Vec<f64> = img.pixels().iter().zip(mask.bits()).filter(|(_, &m)| !m).map(|(&p, _)| p).collect();
        let mean = background.iter().sum::<f64>() / background.len() as f64;
        assert!(img.pixels().iter().zip(mask.bits()).all(|(&p, &m)| !m || p >= mean));
    }

    #[test]
    fn volume_lesion_slices() {
        let spec = VolumeSpec::repeated(20, 8..12, vec![lesion((32.0, 20.0), 6.0)], 0.01, 5, (64, 64));
        let v = gen_volume(&spec).unwrap();
        assert_eq!(v.masks.iter().filter(|m| !m.is_empty()).count(), 4);
        assert!((8..12).all(|i| !v.masks[i].is_empty()));
        assert_eq!(v.volume.label(), Some(true));

        let clean = VolumeSpec { lesion_slices: 0..0, lesions: vec![], ..spec };
        let v = gen_volume(&clean).unwrap();
        assert_eq!(v.volume.label(), Some(false));
        assert!(v.masks.iter().all(BinaryMask::is_empty));
    }

    #[test]
    fn volume_spec_checks() {
        let spec = VolumeSpec::repeated(5, 3..7, vec![], 0.0, 0, (64, 64));
        assert!(gen_volume(&spec).is_err());
    }

    #[test]
    fn random_lesions_fit() {
        let mut rng = Rng::new(4);
        for _ in 0..200 {
            let l = random_lesion(&mut rng, 224, 224, 20.0..26.0, 0.5..0.55);
            l.validate(224, 224).unwrap();
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        let cfg = CorpusConfig { patients: 3, n_slices: 4, size: 64, ..Default::default() };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = write_corpus(a.path(), &cfg).unwrap();
        write_corpus(b.path(), &cfg).unwrap();
        for rel in ma.patients.iter().flat_map(|p| p.slices.iter().chain(&p.masks)) {
            assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap());
        }
        assert_eq!(
            fs::read(a.path().join("manifest.json")).unwrap(),
            fs::read(b.path().join("manifest.json")).unwrap()
        );
        assert!(ma.patients[1].label);
        assert!(!ma.patients[0].label);
    }
}
