//! Cross-module behavior on synthetic slices, checked against ground truth
//! from the generator or against straight-line reference code.

mod common;

use common::Lcg;
use ctxai::cam::{extract_bboxes, heatmap_from_activation};
use ctxai::corpus::{gen_slice, random_lesion, BinaryMask, LesionSpec, DEFAULT_NOISE};
use ctxai::explain::{lime_explain, sample_coalitions, shap_kernel_weight, LimeConfig, SamplingMode};
use ctxai::image::GrayImage;
use ctxai::micronet::{lesion_detector, net_init, net_load, net_save, Architecture, MicroNet};
use ctxai::numerics::Rng;
use ctxai::superpixel::{apply_mask, slic_segment, SuperpixelMap};
use ctxai::tensor::Tensor;

fn lesion_at(row: f64, col: f64) -> LesionSpec {
    LesionSpec { center: (row, col), radius: 22.0, intensity: 0.52, softness: 2.0 }
}

fn centroid(mask: &BinaryMask) -> (f64, f64) {
    let (mut r, mut c, mut n) = (0.0, 0.0, 0.0);
    for row in 0..mask.height() {
        for col in 0..mask.width() {
            if mask.get(row, col) {
                r += row as f64;
                c += col as f64;
                n += 1.0;
            }
        }
    }
    (r / n, c / n)
}

/// Nested-loop forward pass: zero-padded 3×3 cross-correlation, ReLU, 2×2 max
/// pooling, per-location head, spatial mean plus bias.
fn naive_scores(net: &MicroNet<f64>, img: &GrayImage<f64>) -> Vec<f64> {
    let (mut h, mut w) = (img.height(), img.width());
    let mut maps: Vec<Vec<f64>> = vec![img.pixels().to_vec()];
    for block in net.blocks() {
        let k = block.conv.kernels.data();
        let c_in = maps.len();
        let mut next = Vec::new();
        for o in 0..block.conv.out_channels() {
            let mut out = vec![0.0; h * w];
            for r in 0..h {
                for c in 0..w {
                    let mut acc = block.conv.bias.data()[o];
                    for (i, map) in maps.iter().enumerate() {
                        for dy in 0..3 {
                            for dx in 0..3 {
                                let (sr, sc) = (r as isize + dy as isize - 1, c as isize + dx as isize - 1);
                                if sr >= 0 && sc >= 0 && (sr as usize) < h && (sc as usize) < w {
                                    acc += k[((o * c_in + i) * 3 + dy) * 3 + dx] * map[sr as usize * w + sc as usize];
                                }
                            }
                        }
                    }
                    out[r * w + c] = acc.max(0.0);
                }
            }
            next.push(out);
        }
        if block.pool {
            let (ph, pw) = (h / 2, w / 2);
            next = next
                .iter()
                .map(|m| {
                    let mut p = vec![f64::NEG_INFINITY; ph * pw];
                    for r in 0..ph * 2 {
                        for c in 0..pw * 2 {
                            let v = &mut p[(r / 2) * pw + c / 2];
                            *v = v.max(m[r * w + c]);
                        }
                    }
                    p
                })
                .collect();
            h = ph;
            w = pw;
        }
        maps = next;
    }
    let classes = net.classes();
    (0..classes)
        .map(|cls| {
            let mut total = 0.0;
            for p in 0..h * w {
                for (d, map) in maps.iter().enumerate() {
                    total += net.head().data()[d * classes + cls] * map[p];
                }
            }
            total / (h * w) as f64 + net.head_bias().data()[cls]
        })
        .collect()
}

#[test]
fn forward_matches_nested_loop_reference() {
    let mut rng = Lcg(17);
    for (seed, arch) in [(1, Architecture::DEFAULT), (2, "conv:3 pool conv:4 head:2"), (3, "conv:2 conv:3 pool head:3")] {
        let net = net_init::<f64>(seed, &arch.parse().unwrap()).unwrap();
        let img = GrayImage::new(32, 32, (0..1024).map(|_| rng.next_f64()).collect()).unwrap();
        let fast = net.forward(&img).unwrap().scores;
        for (a, b) in fast.data().iter().zip(naive_scores(&net, &img)) {
            assert!((a - b).abs() < 1e-9, "{arch}: {a} vs {b}");
        }
    }
}

#[test]
fn default_arch_on_corpus_sized_slice() {
    let (img, _) = gen_slice(&[], 224, 224, DEFAULT_NOISE, 0).unwrap();
    assert_eq!(img.to_tensor().dims(), &[224, 224]);
    let net = net_init::<f64>(0, &Architecture::DEFAULT.parse().unwrap()).unwrap();
    assert_eq!(net.forward(&img).unwrap().feature_maps.dims(), &[16, 56, 56]);
}

#[test]
fn slice_survives_pgm_round_trip() {
    let (img, _) = gen_slice(&[lesion_at(100.0, 70.0)], 224, 224, DEFAULT_NOISE, 4).unwrap();
    let back = GrayImage::<f64>::from_pgm_bytes(&img.to_pgm_bytes(255)).unwrap();
    let worst = img.pixels().iter().zip(back.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1.0 / 255.0, "{worst}");
}

#[test]
fn detector_separates_lesion_and_clean_slices() {
    let net = lesion_detector::<f64>().unwrap();
    let mut rng = Rng::new(21);
    for seed in 0..8 {
        let (clean, _) = gen_slice(&[], 224, 224, DEFAULT_NOISE, seed).unwrap();
        let lesion = random_lesion(&mut rng, 224, 224, 20.0..26.0, 0.5..0.55);
        let (sick, _) = gen_slice(&[lesion], 224, 224, DEFAULT_NOISE, seed).unwrap();
        let (c, s) = (net.score(&clean, 0).unwrap(), net.score(&sick, 0).unwrap());
        assert!(s > c + 1.0, "seed {seed}: lesion {s} vs clean {c}");
    }
}

#[test]
fn saved_detector_scores_identically() {
    let net = lesion_detector::<f64>().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.xnet");
    net_save(&net, &path).unwrap();
    let loaded: MicroNet<f64> = net_load(&path).unwrap();
    let (img, _) = gen_slice(&[lesion_at(110.0, 150.0)], 224, 224, DEFAULT_NOISE, 2).unwrap();
    assert_eq!(net.score(&img, 0).unwrap().to_bits(), loaded.score(&img, 0).unwrap().to_bits());
}

#[test]
fn cam_peak_and_overlay_sit_on_the_lesion() {
    let net = lesion_detector::<f64>().unwrap();
    let (img, mask) = gen_slice(&[lesion_at(96.0, 68.0)], 224, 224, DEFAULT_NOISE, 5).unwrap();
    let hm = heatmap_from_activation(&net.forward(&img).unwrap().activation_map(0), 224, 224, 0).unwrap();
    let (cr, cc) = centroid(&mask);
    let (pr, pc) = hm.argmax();
    assert!((pr as f64 - cr).hypot(pc as f64 - cc) <= 8.0);

    // red mass of the blended overlay, weighted by how much red exceeds gray
    let overlay = Tensor::new(vec![224, 224, 3], hm.values.data().iter().flat_map(|&v| [v, 0.0, 0.0]).collect()).unwrap();
    let rgb = img.blend_overlay(&overlay).unwrap();
    let (mut mr, mut mc, mut m) = (0.0, 0.0, 0.0);
    for p in 0..224 * 224 {
        let excess = (rgb[3 * p] as f64 - rgb[3 * p + 1] as f64).max(0.0);
        mr += excess * (p / 224) as f64;
        mc += excess * (p % 224) as f64;
        m += excess;
    }
    assert!((mr / m - cr).hypot(mc / m - cc) <= 5.0, "red mass at ({}, {})", mr / m, mc / m);
}

#[test]
fn two_lesions_give_two_boxes() {
    let net = lesion_detector::<f64>().unwrap();
    let lesions = [lesion_at(90.0, 66.0), lesion_at(130.0, 158.0)];
    let (img, _) = gen_slice(&lesions, 224, 224, DEFAULT_NOISE, 6).unwrap();
    let hm = heatmap_from_activation(&net.forward(&img).unwrap().activation_map(0), 224, 224, 0).unwrap();
    let boxes = extract_bboxes(&hm, 0.5, 16);
    assert_eq!(boxes.len(), 2, "{boxes:?}");
    for l in &lesions {
        let near = boxes.iter().any(|b| {
            let (r, c) = b.center();
            (r - l.center.0).hypot(c - l.center.1) <= 8.0
        });
        assert!(near, "no box near {:?}: {boxes:?}", l.center);
    }
}

fn lesion_overlap(sp: &SuperpixelMap, mask: &BinaryMask) -> Vec<usize> {
    let mut inside = vec![0; sp.n_segments()];
    for (p, &l) in sp.labels().iter().enumerate() {
        inside[l] += usize::from(mask.bits()[p]);
    }
    inside
}

#[test]
fn some_superpixel_lies_inside_the_lesion() {
    let (img, mask) = gen_slice(&[lesion_at(100.0, 150.0)], 224, 224, DEFAULT_NOISE, 7).unwrap();
    let sp = slic_segment(&img, 40, 10.0, 10, 0).unwrap();
    assert!(sp.is_connected());
    let inside = lesion_overlap(&sp, &mask);
    let sizes = sp.sizes();
    assert!((0..sp.n_segments()).any(|s| inside[s] as f64 >= 0.8 * sizes[s] as f64));
}

#[test]
fn occluding_the_lesion_drops_the_score() {
    let net = lesion_detector::<f64>().unwrap();
    let (img, mask) = gen_slice(&[lesion_at(100.0, 70.0)], 224, 224, DEFAULT_NOISE, 8).unwrap();
    let (clean, _) = gen_slice(&[], 224, 224, DEFAULT_NOISE, 8).unwrap();
    let sp = slic_segment(&img, 50, 10.0, 10, 0).unwrap();
    let keep: Vec<bool> = lesion_overlap(&sp, &mask).iter().map(|&n| n == 0).collect();
    let occluded = apply_mask(&img, &sp, &keep, 0.0).unwrap();
    assert!(net.score(&occluded, 0).unwrap() <= net.score(&clean, 0).unwrap());
    assert!(net.score(&img, 0).unwrap() > net.score(&clean, 0).unwrap());
}

#[test]
fn lime_top_superpixel_covers_the_lesion() {
    let net = lesion_detector::<f64>().unwrap();
    let f = |im: &GrayImage<f64>| net.score(im, 0);
    let (img, mask) = gen_slice(&[lesion_at(120.0, 66.0)], 224, 224, DEFAULT_NOISE, 9).unwrap();
    let sp = slic_segment(&img, 50, 10.0, 10, 1).unwrap();
    let attr = lime_explain(&f, &img, &sp, &LimeConfig { seed: 1, ..Default::default() }).unwrap();
    let top = attr.top_feature().unwrap();
    assert!(2 * lesion_overlap(&sp, &mask)[top] >= sp.sizes()[top]);
}

#[test]
fn kernel_sampling_matches_size_distribution() {
    let (n, m) = (10, 1000);
    let masks = sample_coalitions(n, m, 2024, SamplingMode::ShapleyKernel).unwrap();
    let mut counts = vec![0.0; n];
    for mask in &masks[2..] {
        counts[mask.iter().filter(|&&b| b).count()] += 1.0;
    }
    let total: f64 = (1..n).map(|s| shap_kernel_weight(n, s)).sum();
    let draws = (m - 2) as f64;
    let chi2: f64 = (1..n)
        .map(|s| {
            let expected = draws * shap_kernel_weight(n, s) / total;
            (counts[s] - expected).powi(2) / expected
        })
        .sum();
    // 99th percentile of χ² with 8 degrees of freedom
    assert!(chi2 < 20.09, "χ² = {chi2}");
}

#[test]
fn single_precision_pipeline() {
    let (img, _) = gen_slice(&[lesion_at(64.0, 90.0)], 128, 128, DEFAULT_NOISE, 3).unwrap();
    let img = img.cast::<f32>();
    let net = lesion_detector::<f32>().unwrap();
    let net64 = lesion_detector::<f64>().unwrap();
    let s32 = net.score(&img, 0).unwrap() as f64;
    let s64 = net64.score(&img.cast::<f64>(), 0).unwrap();
    assert!((s32 - s64).abs() < 1e-3, "{s32} vs {s64}");
    let sp = slic_segment(&img, 30, 10.0, 10, 0).unwrap();
    let f = |im: &GrayImage<f32>| net.score(im, 0);
    let attr = lime_explain(&f, &img, &sp, &LimeConfig { samples: 300, ..Default::default() }).unwrap();
    assert_eq!(attr.weights.len(), sp.n_segments());
}
