use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cam::{BBox, Heatmap};
use crate::error::Result;
use crate::image::GrayImage;
use crate::superpixel::SuperpixelMap;
use crate::tensor::Tensor;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Pretty JSON with a trailing newline. Object keys come out sorted.
pub fn to_json_line(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Gray image with superpixel borders painted red.
pub fn boundary_rgb(img: &GrayImage<f64>, sp: &SuperpixelMap) -> Vec<u8> {
    let (h, w) = (img.height(), img.width());
    let labels = sp.labels();
    let mut rgb = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for c in 0..w {
            let l = labels[r * w + c];
            let border = (c + 1 < w && labels[r * w + c + 1] != l) || (r + 1 < h && labels[(r + 1) * w + c] != l);
            if border {
                rgb.extend([255, 0, 0]);
            } else {
                let g = (img.at(r, c) * 255.0).round() as u8;
                rgb.extend([g, g, g]);
            }
        }
    }
    rgb
}

/// Heatmap in the red channel with box outlines in green.
pub fn cam_overlay(hm: &Heatmap<f64>, boxes: &[BBox<f64>]) -> Result<Tensor<f64>> {
    let (h, w) = (hm.height(), hm.width());
    let mut data = vec![0.0; h * w * 3];
    for (i, v) in hm.values.data().iter().enumerate() {
        data[3 * i] = *v;
    }
    for b in boxes {
        for r in b.top..=b.bottom {
            for c in b.left..=b.right {
                if r == b.top || r == b.bottom || c == b.left || c == b.right {
                    let i = 3 * (r * w + c);
                    data[i..i + 3].copy_from_slice(&[0.0, 1.0, 0.0]);
                }
            }
        }
    }
    Tensor::new(vec![h, w, 3], data)
}

/// Positive weights in red, negative in blue, scaled by the largest magnitude.
pub fn attribution_overlay(sp: &SuperpixelMap, weights: &[f64], positive_only: bool) -> Result<Tensor<f64>> {
    let scale = weights
        .iter()
        .filter(|w| !positive_only || **w > 0.0)
        .fold(0.0f64, |m, w| m.max(w.abs()));
    let mut data = Vec::with_capacity(sp.labels().len() * 3);
    for &l in sp.labels() {
        let v = if scale > 0.0 { weights[l] / scale } else { 0.0 };
        let neg = if positive_only { 0.0 } else { (-v).max(0.0) };
        data.extend([v.max(0.0), 0.0, neg]);
    }
    Tensor::new(vec![sp.height(), sp.width(), 3], data)
}

/// Plain-text table with one `segment weight size row col` line per superpixel.
pub fn weight_table(sp: &SuperpixelMap, weights: &[f64]) -> String {
    let sizes = sp.sizes();
    let mut text = String::from("segment weight size row col\n");
    for (i, w) in weights.iter().enumerate() {
        let c = sp.centroids()[i];
        text += &format!("{i} {w:.9e} {} {:.3} {:.3}\n", sizes[i], c.row, c.col);
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_hex() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn positive_overlay_drops_negative_weights() {
        let img = crate::image::GrayImage::<f64>::new(8, 8, vec![0.5; 64]).unwrap();
        let sp = crate::superpixel::slic_segment(&img, 4, 10.0, 10, 0).unwrap();
        let n = sp.n_segments();
        let weights: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -3.0 }).collect();
        let pos = attribution_overlay(&sp, &weights, true).unwrap();
        let signed = attribution_overlay(&sp, &weights, false).unwrap();
        for (i, &l) in sp.labels().iter().enumerate() {
            let px = &pos.data()[3 * i..3 * i + 3];
            assert_eq!(px[2], 0.0);
            assert_eq!(px[0], if l % 2 == 0 { 1.0 } else { 0.0 });
            let sx = &signed.data()[3 * i..3 * i + 3];
            assert_eq!(sx[2], if l % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert_eq!(weight_table(&sp, &weights).lines().count(), n + 1);
    }
}
