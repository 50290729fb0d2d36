//! SLIC superpixels on grayscale slices.
//!
//! Pixels are clustered by k-means in `(100·intensity, m·row/S, m·col/S)`
//! space, each center only searching a window around itself. A final pass
//! makes every label 4-connected by folding stray fragments into the adjacent
//! region with the closest mean intensity.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::numerics::Rng;
use crate::scalar::Real;

pub const DEFAULT_SEGMENTS: usize = 50;
pub const DEFAULT_COMPACTNESS: f64 = 10.0;
pub const DEFAULT_ITERS: usize = 10;
/// Intensities live in `[0,1]`; this brings them to the scale of the spatial term.
pub const INTENSITY_SCALE: f64 = 100.0;
/// Grid jitter as a fraction of the grid step.
const SEED_JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub row: f64,
    pub col: f64,
    pub intensity: f64,
}

/// Partition of an image into `n_segments` 4-connected labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    height: usize,
    width: usize,
    labels: Vec<usize>,
    n_segments: usize,
    centroids: Vec<Centroid>,
}

impl SuperpixelMap {
    /// Wraps an existing label field. Labels must cover `0..n` with no gaps;
    /// connectivity is not required here (see [`SuperpixelMap::is_connected`]).
    pub fn from_labels<T: Real>(img: &GrayImage<T>, labels: Vec<usize>) -> Result<Self> {
        let (h, w) = (img.height(), img.width());
        if labels.len() != h * w {
            return Err(Error::shape(format!(
                "{} labels for a {h}x{w} image",
                labels.len()
            )));
        }
        let n = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n];
        labels.iter().for_each(|&l| seen[l] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::validation(format!("label {missing} is empty")));
        }
        let centroids = centroids_of(img, &labels, n);
        Ok(SuperpixelMap {
            height: h,
            width: w,
            labels,
            n_segments: n,
            centroids,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_at(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col]
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    /// Pixel count per label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_segments];
        self.labels.iter().for_each(|&l| s[l] += 1);
        s
    }

    /// True when every label's pixels form one 4-connected region.
    pub fn is_connected(&self) -> bool {
        let (h, w) = (self.height, self.width);
        let mut seen = vec![false; h * w];
        let mut regions = vec![0usize; self.n_segments];
        let mut stack = Vec::new();
        for start in 0..h * w {
            if seen[start] {
                continue;
            }
            let l = self.labels[start];
            regions[l] += 1;
            if regions[l] > 1 {
                return false;
            }
            seen[start] = true;
            stack.push(start);
            while let Some(p) = stack.pop() {
                let (r, c) = (p / w, p % w);
                for q in neighbors4(r, c, h, w) {
                    if !seen[q] && self.labels[q] == l {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        true
    }
}

fn neighbors4(r: usize, c: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let p = r * w + c;
    [
        (r > 0).then(|| p - w),
        (r + 1 < h).then(|| p + w),
        (c > 0).then(|| p - 1),
        (c + 1 < w).then(|| p + 1),
    ]
    .into_iter()
    .flatten()
}

fn centroids_of<T: Real>(img: &GrayImage<T>, labels: &[usize], n: usize) -> Vec<Centroid> {
    let w = img.width();
    let mut acc = vec![(0.0, 0.0, 0.0, 0usize); n];
    for (p, &l) in labels.iter().enumerate() {
        let a = &mut acc[l];
        a.0 += (p / w) as f64;
        a.1 += (p % w) as f64;
        a.2 += img.pixels()[p].to_f64_lossless();
        a.3 += 1;
    }
    acc.into_iter()
        .map(|(r, c, i, k)| {
            let k = k.max(1) as f64;
            Centroid {
                row: r / k,
                col: c / k,
                intensity: i / k,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SlicParams {
    pub n_target: usize,
    pub compactness: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            n_target: DEFAULT_SEGMENTS,
            compactness: DEFAULT_COMPACTNESS,
            iters: DEFAULT_ITERS,
            seed: 0,
        }
    }
}

/// Segments `img` into roughly `n_target` superpixels. The seed jitters the
/// initial grid; identical inputs give identical label fields.
pub fn slic_segment<T: Real>(
    img: &GrayImage<T>,
    n_target: usize,
    compactness: f64,
    iters: usize,
    seed: u64,
) -> Result<SuperpixelMap> {
    let (h, w) = (img.height(), img.width());
    let area = h * w;
    if n_target < 2 {
        return Err(Error::validation("need at least 2 target segments"));
    }
    if n_target > area {
        return Err(Error::validation(format!(
            "{n_target} segments requested for {area} pixels"
        )));
    }
    if !(compactness.is_finite() && compactness > 0.0) {
        return Err(Error::validation("compactness must be positive"));
    }
    let pix: Vec<f64> = img.pixels().iter().map(|p| p.to_f64_lossless()).collect();

    let cols = ((n_target as f64 * w as f64 / h as f64).sqrt().ceil() as usize).clamp(1, w);
    let rows = ((n_target as f64 / cols as f64).round() as usize).clamp(1, h);
    let (step_r, step_c) = (h as f64 / rows as f64, w as f64 / cols as f64);
    let k = rows * cols;
    let s = (area as f64 / k as f64).sqrt();
    let spatial = compactness / s;

    let mut rng = Rng::new(seed);
    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(k);
    for i in 0..rows {
        for j in 0..cols {
            let r = ((i as f64 + 0.5) * step_r + rng.range(-SEED_JITTER, SEED_JITTER) * step_r)
                .clamp(0.0, (h - 1) as f64);
            let c = ((j as f64 + 0.5) * step_c + rng.range(-SEED_JITTER, SEED_JITTER) * step_c)
                .clamp(0.0, (w - 1) as f64);
            let v = pix[r.floor() as usize * w + c.floor() as usize];
            centers.push([r, c, v]);
        }
    }

    let reach = step_r.max(step_c).max(s);
    let dist = |p: usize, ctr: &[f64; 3]| -> f64 {
        let dr = (p / w) as f64 - ctr[0];
        let dc = (p % w) as f64 - ctr[1];
        let di = (pix[p] - ctr[2]) * INTENSITY_SCALE;
        di * di + spatial * spatial * (dr * dr + dc * dc)
    };

    let mut labels = vec![0usize; area];
    let mut best = vec![f64::INFINITY; area];
    for _ in 0..iters.max(1) {
        best.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (ci, ctr) in centers.iter().enumerate() {
            let r0 = (ctr[0] - reach).floor().max(0.0) as usize;
            let r1 = ((ctr[0] + reach).ceil() as usize).min(h - 1);
            let c0 = (ctr[1] - reach).floor().max(0.0) as usize;
            let c1 = ((ctr[1] + reach).ceil() as usize).min(w - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let p = r * w + c;
                    let d = dist(p, ctr);
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = ci;
                    }
                }
            }
        }
        for p in 0..area {
            if best[p].is_infinite() {
                let (ci, _) = centers
                    .iter()
                    .enumerate()
                    .map(|(ci, ctr)| (ci, dist(p, ctr)))
                    .fold((0, f64::INFINITY), |b, cur| if cur.1 < b.1 { cur } else { b });
                labels[p] = ci;
            }
        }
        let mut acc = vec![[0.0f64; 4]; k];
        for (p, &l) in labels.iter().enumerate() {
            let a = &mut acc[l];
            a[0] += (p / w) as f64;
            a[1] += (p % w) as f64;
            a[2] += pix[p];
            a[3] += 1.0;
        }
        for (ctr, a) in centers.iter_mut().zip(&acc) {
            if a[3] > 0.0 {
                *ctr = [a[0] / a[3], a[1] / a[3], a[2] / a[3]];
            }
        }
    }

    let min_fragment = ((s * s / 16.0).floor() as usize).max(1);
    let labels = enforce_connectivity(&pix, &labels, h, w, min_fragment);
    SuperpixelMap::from_labels(img, labels)
}

/// Keeps the largest component of each label (if not tiny) and merges every
/// other component into an adjacent kept region, then renumbers labels in
/// raster order of first appearance.
fn enforce_connectivity(
    pix: &[f64],
    labels: &[usize],
    h: usize,
    w: usize,
    min_fragment: usize,
) -> Vec<usize> {
    let area = h * w;
    // Components of equal-label pixels.
    let mut comp = vec![usize::MAX; area];
    let mut comp_label = Vec::new();
    let mut comp_size: Vec<usize> = Vec::new();
    let mut comp_sum: Vec<f64> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..area {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let l = labels[start];
        comp_label.push(l);
        comp_size.push(0);
        comp_sum.push(0.0);
        comp[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            comp_size[id] += 1;
            comp_sum[id] += pix[p];
            for q in neighbors4(p / w, p % w, h, w) {
                if comp[q] == usize::MAX && labels[q] == l {
                    comp[q] = id;
                    stack.push(q);
                }
            }
        }
    }
    let n_comp = comp_label.len();
    let mean: Vec<f64> = (0..n_comp).map(|i| comp_sum[i] / comp_size[i] as f64).collect();

    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut largest = vec![None::<usize>; n_labels];
    for id in 0..n_comp {
        let l = comp_label[id];
        match largest[l] {
            Some(b) if comp_size[b] >= comp_size[id] => {}
            _ => largest[l] = Some(id),
        }
    }
    let mut root: Vec<Option<usize>> = vec![None; n_comp];
    for id in largest.into_iter().flatten() {
        if comp_size[id] >= min_fragment {
            root[id] = Some(id);
        }
    }
    if root.iter().all(Option::is_none) {
        let big = (0..n_comp).max_by_key(|&i| (comp_size[i], std::cmp::Reverse(i))).unwrap();
        root[big] = Some(big);
    }

    let mut adjacent: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_comp];
    for p in 0..area {
        let (r, c) = (p / w, p % w);
        if c + 1 < w && comp[p] != comp[p + 1] {
            adjacent[comp[p]].insert(comp[p + 1]);
            adjacent[comp[p + 1]].insert(comp[p]);
        }
        if r + 1 < h && comp[p] != comp[p + w] {
            adjacent[comp[p]].insert(comp[p + w]);
            adjacent[comp[p + w]].insert(comp[p]);
        }
    }

    let mut pending: Vec<usize> = (0..n_comp).filter(|&i| root[i].is_none()).collect();
    pending.sort_by_key(|&i| (std::cmp::Reverse(comp_size[i]), i));
    while !pending.is_empty() {
        let mut still = Vec::new();
        for &o in &pending {
            let target = adjacent[o]
                .iter()
                .filter_map(|&n| root[n])
                .map(|r| (r, (mean[r] - mean[o]).abs()))
                .fold(None::<(usize, f64)>, |b, cur| match b {
                    Some(bb) if bb.1 < cur.1 || (bb.1 == cur.1 && bb.0 <= cur.0) => Some(bb),
                    _ => Some(cur),
                });
            match target {
                Some((r, _)) => root[o] = Some(r),
                None => still.push(o),
            }
        }
        if still.len() == pending.len() {
            // Unreachable for a connected grid; keep leftovers as their own regions.
            for &o in &still {
                root[o] = Some(o);
            }
            break;
        }
        pending = still;
    }

    let mut renumber = vec![usize::MAX; n_comp];
    let mut next = 0;
    let mut out = vec![0usize; area];
    for p in 0..area {
        let r = root[comp[p]].unwrap();
        if renumber[r] == usize::MAX {
            renumber[r] = next;
            next += 1;
        }
        out[p] = renumber[r];
    }
    out
}

/// Replaces every pixel of a superpixel with `mask[i] == false` by `fill`.
pub fn apply_mask<T: Real>(
    img: &GrayImage<T>,
    sp: &SuperpixelMap,
    mask: &[bool],
    fill: T,
) -> Result<GrayImage<T>> {
    if mask.len() != sp.n_segments() {
        return Err(Error::validation(format!(
            "mask has {} entries for {} superpixels",
            mask.len(),
            sp.n_segments()
        )));
    }
    if (img.height(), img.width()) != (sp.height(), sp.width()) {
        return Err(Error::shape("superpixel map does not match image"));
    }
    if !(fill >= T::zero() && fill <= T::one()) {
        return Err(Error::validation(format!("fill {fill} outside [0,1]")));
    }
    let pixels = img
        .pixels()
        .iter()
        .zip(sp.labels())
        .map(|(&p, &l)| if mask[l] { p } else { fill })
        .collect();
    Ok(GrayImage::from_parts_unchecked(img.height(), img.width(), pixels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_tone(h: usize, w: usize) -> GrayImage<f64> {
        GrayImage::new(h, w, (0..h * w).map(|p| if p % w < w / 2 { 0.0 } else { 1.0 }).collect())
            .unwrap()
    }

    #[test]
    fn constant_image_gives_balanced_quadrants() {
        let img = GrayImage::filled(64, 64, 0.4).unwrap();
        let sp = slic_segment(&img, 4, 10.0, 10, 0).unwrap();
        assert_eq!(sp.n_segments(), 4);
        assert!(sp.is_connected());
        for s in sp.sizes() {
            assert!((960..=1088).contains(&s), "size {s}");
        }
    }

    #[test]
    fn two_tone_splits_on_the_edge() {
        let img = two_tone(64, 64);
        let sp = slic_segment(&img, 2, 10.0, 10, 3).unwrap();
        assert_eq!(sp.n_segments(), 2);
        for r in 0..64 {
            for c in 0..64 {
                assert_eq!(sp.label_at(r, c), usize::from(c >= 32));
            }
        }
    }

    #[test]
    fn deterministic_and_connected() {
        let mut rng = Rng::new(5);
        let img = GrayImage::new(48, 40, (0..48 * 40).map(|_| rng.uniform()).collect()).unwrap();
        let a = slic_segment(&img, 20, 10.0, 10, 9).unwrap();
        let b = slic_segment(&img, 20, 10.0, 10, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        assert!(a.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn argument_checks() {
        let img = GrayImage::filled(4, 4, 0.0).unwrap();
        assert!(slic_segment(&img, 1, 10.0, 10, 0).is_err());
        assert!(slic_segment(&img, 17, 10.0, 10, 0).is_err());
        assert!(slic_segment(&img, 16, 10.0, 10, 0).is_ok());
    }

    #[test]
    fn mask_identity_and_occlusion() {
        let img = two_tone(8, 8);
        let sp = slic_segment(&img, 2, 10.0, 5, 0).unwrap();
        assert_eq!(apply_mask(&img, &sp, &[true, true], 0.0).unwrap(), img);
        let dark = apply_mask(&img, &sp, &[false, false], 0.25).unwrap();
        assert!(dark.pixels().iter().all(|&p| p == 0.25));
        assert!(apply_mask(&img, &sp, &[true], 0.0).is_err());
        assert!(apply_mask(&img, &sp, &[true, true], 1.5).is_err());
    }

    #[test]
    fn fragments_are_absorbed() {
        // Label 0 in two pieces separated by label 1.
        let labels = vec![0, 1, 0, 0, 1, 0, 0, 1, 0];
        let pix = vec![0.0, 1.0, 0.9, 0.0, 1.0, 0.9, 0.0, 1.0, 0.9];
        let out = enforce_connectivity(&pix, &labels, 3, 3, 1);
        // Right column (mean 0.9) joins the middle column (mean 1.0).
        assert_eq!(out, vec![0, 1, 1, 0, 1, 1, 0, 1, 1]);
    }
}
