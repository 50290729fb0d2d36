//! Heatmaps and bounding boxes from class activation maps.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.5;
pub const DEFAULT_MIN_AREA: usize = 16;

/// Normalized `H×W` attention map for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T = f64> {
    pub values: Tensor<T>,
    pub class_index: usize,
}

impl<T: Real> Heatmap<T> {
    pub fn height(&self) -> usize {
        self.values.dims()[0]
    }

    pub fn width(&self) -> usize {
        self.values.dims()[1]
    }

    /// Row-major position of the first maximal value.
    pub fn argmax(&self) -> (usize, usize) {
        let data = self.values.data();
        let mut best = 0;
        for (i, v) in data.iter().enumerate() {
            if *v > data[best] {
                best = i;
            }
        }
        (best / self.width(), best % self.width())
    }
}

/// Inclusive pixel box around one thresholded component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<T = f64> {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
    /// Mean heatmap value inside the box.
    pub score: T,
    /// Pixels in the component that produced the box.
    pub area: usize,
}

impl<T: Real> BBox<T> {
    pub fn center(&self) -> (f64, f64) {
        (
            (self.top + self.bottom) as f64 / 2.0,
            (self.left + self.right) as f64 / 2.0,
        )
    }
}

/// Min-max normalizes an `H′×W′` activation map and upsamples it bilinearly
/// (corner-aligned) to `out_h×out_w`. A constant map yields all zeros.
pub fn heatmap_from_activation<T: Real>(
    a: &Tensor<T>,
    out_h: usize,
    out_w: usize,
    class_index: usize,
) -> Result<Heatmap<T>> {
    let (h, w) = match a.dims() {
        &[h, w] => (h, w),
        d => return Err(Error::shape(format!("activation map must be 2-D, got {d:?}"))),
    };
    if out_h < h || out_w < w {
        return Err(Error::validation(format!(
            "cannot downsample {h}x{w} activation map to {out_h}x{out_w}"
        )));
    }
    let data = a.data();
    let lo = data.iter().copied().fold(T::infinity(), T::min);
    let hi = data.iter().copied().fold(T::neg_infinity(), T::max);
    let range = hi - lo;
    let norm: Vec<T> = if range > T::zero() {
        data.iter().map(|&v| ((v - lo) / range).min(T::one())).collect()
    } else {
        vec![T::zero(); data.len()]
    };
    let src_coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, T) {
        if n_out <= 1 || n_in <= 1 {
            return (0, 0, T::zero());
        }
        let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let i0 = (x.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, T::lit(x - i0 as f64))
    };
    let cols: Vec<_> = (0..out_w).map(|c| src_coord(c, out_w, w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let (r0, r1, fr) = src_coord(r, out_h, h);
        for &(c0, c1, fc) in &cols {
            let top = norm[r0 * w + c0] * (T::one() - fc) + norm[r0 * w + c1] * fc;
            let bot = norm[r1 * w + c0] * (T::one() - fc) + norm[r1 * w + c1] * fc;
            let v = top * (T::one() - fr) + bot * fr;
            out.push(v.max(T::zero()).min(T::one()));
        }
    }
    Ok(Heatmap {
        values: Tensor::from_parts_unchecked(vec![out_h, out_w], out),
        class_index,
    })
}

/// 4-connected component labels of a boolean field; `None` for background.
pub(crate) fn label_components(on: &[bool], h: usize, w: usize) -> (Vec<Option<usize>>, usize) {
    let mut labels = vec![None; h * w];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !on[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (r, c) = (p / w, p % w);
            let mut visit = |q: usize| {
                if on[q] && labels[q].is_none() {
                    labels[q] = Some(next);
                    stack.push(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        next += 1;
    }
    (labels, next)
}

/// Thresholds at `threshold_frac × max`, labels 4-connected components and
/// boxes every component of at least `min_area` pixels. Boxes are ordered by
/// score (descending), then top, then left.
pub fn extract_bboxes<T: Real>(h: &Heatmap<T>, threshold_frac: T, min_area: usize) -> Vec<BBox<T>> {
    let (height, width) = (h.height(), h.width());
    let data = h.values.data();
    let max = data.iter().copied().fold(T::zero(), T::max);
    if max <= T::zero() {
        return Vec::new();
    }
    let cut = threshold_frac * max;
    let on: Vec<bool> = data.iter().map(|&v| v >= cut && v > T::zero()).collect();
    let (labels, n) = label_components(&on, height, width);
    let mut extent = vec![(usize::MAX, usize::MAX, 0usize, 0usize, 0usize); n];
    for (p, l) in labels.iter().enumerate() {
        if let Some(l) = *l {
            let (r, c) = (p / width, p % width);
            let e = &mut extent[l];
            e.0 = e.0.min(r);
            e.1 = e.1.min(c);
            e.2 = e.2.max(r);
            e.3 = e.3.max(c);
            e.4 += 1;
        }
    }
    let mut boxes: Vec<BBox<T>> = extent
        .into_iter()
        .filter(|e| e.4 >= min_area.max(1))
        .map(|(top, left, bottom, right, area)| {
            let mut sum = T::zero();
            for r in top..=bottom {
                for c in left..=right {
                    sum = sum + data[r * width + c];
                }
            }
            let count = ((bottom - top + 1) * (right - left + 1)) as f64;
            BBox {
                top,
                left,
                bottom,
                right,
                score: sum / T::lit(count),
                area,
            }
        })
        .collect();
    boxes.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.top.cmp(&b.top))
            .then(a.left.cmp(&b.left))
    });
    boxes
}
