//! Patient-level probability from per-slice scores.
//!
//! Slices are split into `max(1, ⌊n/l_s⌋)` contiguous sections. Each section's
//! probability is the sigmoid of the mean of its `k` largest raw scores, and
//! the patient probability is the noisy-OR `1 − Π(1 − p_i)` over sections.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::numerics::sigmoid;
use crate::scalar::Real;

pub const DEFAULT_SECTION_LENGTH: usize = 8;
pub const DEFAULT_TOP_K: usize = 2;
/// Probabilities are clamped into `[ε, 1 − ε]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Ordered CT slices of one patient with an optional binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientVolume<T = f64> {
    slices: Vec<GrayImage<T>>,
    label: Option<bool>,
}

impl<T: Real> PatientVolume<T> {
    pub fn new(slices: Vec<GrayImage<T>>, label: Option<bool>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::validation("volume has no slices"))?;
        let dims = (first.height(), first.width());
        if let Some(i) = slices
            .iter()
            .position(|s| (s.height(), s.width()) != dims)
        {
            return Err(Error::shape(format!(
                "slice {i} is {}x{}, expected {}x{}",
                slices[i].height(),
                slices[i].width(),
                dims.0,
                dims.1
            )));
        }
        Ok(PatientVolume { slices, label })
    }

    pub fn slices(&self) -> &[GrayImage<T>] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn label(&self) -> Option<bool> {
        self.label
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionPartition {
    pub sections: Vec<Range<usize>>,
    pub section_length: usize,
}

impl SectionPartition {
    pub fn n_slices(&self) -> usize {
        self.sections.last().map_or(0, |r| r.end)
    }
}

/// Splits `n` slices into `max(1, ⌊n/l_s⌋)` contiguous sections whose sizes
/// differ by at most one; the earliest sections take the remainder.
pub fn partition_sections(n: usize, section_length: usize) -> Result<SectionPartition> {
    if n == 0 {
        return Err(Error::validation("cannot partition zero slices"));
    }
    if section_length == 0 {
        return Err(Error::validation("section length must be at least 1"));
    }
    let count = (n / section_length).max(1);
    let base = n / count;
    let extra = n % count;
    let mut start = 0;
    let sections = (0..count)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect();
    Ok(SectionPartition {
        sections,
        section_length,
    })
}

/// Sigmoid of the mean of the `k` largest scores (all of them if fewer).
pub fn section_prob<T: Real>(scores: &[T], k: usize) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::validation("section has no scores"));
    }
    if k == 0 {
        return Err(Error::validation("top-k needs k ≥ 1"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let take = k.min(sorted.len());
    let mean = sorted[..take].iter().copied().sum::<T>() / T::lit(take as f64);
    Ok(sigmoid(mean))
}

/// `1 − Π(1 − p_i)`.
pub fn noisy_or<T: Real>(probs: &[T]) -> T {
    T::one() - probs.iter().fold(T::one(), |acc, &p| acc * (T::one() - p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientScore<T = f64> {
    pub section_probs: Vec<T>,
    pub patient_prob: T,
}

pub fn patient_prob<T: Real>(
    slice_scores: &[T],
    part: &SectionPartition,
    k: usize,
) -> Result<PatientScore<T>> {
    if slice_scores.len() != part.n_slices() {
        return Err(Error::validation(format!(
            "{} slice scores for a partition of {} slices",
            slice_scores.len(),
            part.n_slices()
        )));
    }
    let section_probs = part
        .sections
        .iter()
        .map(|r| section_prob(&slice_scores[r.clone()], k))
        .collect::<Result<Vec<_>>>()?;
    let patient_prob = noisy_or(&section_probs);
    Ok(PatientScore {
        section_probs,
        patient_prob,
    })
}

/// Mean binary cross-entropy of patient probabilities against labels.
pub fn bce_loss<T: Real>(probs: &[T], labels: &[bool]) -> Result<T> {
    if probs.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let eps = T::lit(PROB_CLAMP);
    let total = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.max(eps).min(T::one() - eps);
            if y {
                -p.ln()
            } else {
                -(T::one() - p).ln()
            }
        })
        .sum::<T>();
    Ok(total / T::lit(probs.len() as f64))
}
