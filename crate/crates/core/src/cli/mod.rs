//! The `ctxai` command line.
//!
//! Every subcommand is deterministic in its flags: JSON goes to stdout (or
//! `--json`), images and tensors go to `--out` when given.

mod report;
mod selftest;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::cam::{extract_bboxes, heatmap_from_activation, DEFAULT_MIN_AREA, DEFAULT_THRESHOLD_FRAC};
use crate::corpus::{write_corpus, CorpusConfig, DEFAULT_NOISE, DEFAULT_SIZE};
use crate::error::{Error, Result};
use crate::explain::{
    lime_explain, shap_explain, Attribution, LimeConfig, Penalty, ShapConfig,
};
use crate::image::{write_ppm_rgb, GrayImage};
use crate::micronet::{lesion_detector, net_load, net_save, MicroNet};
use crate::slices::{partition_sections, patient_prob, DEFAULT_SECTION_LENGTH, DEFAULT_TOP_K};
use crate::tensor::Tensor;
use crate::superpixel::{slic_segment, SuperpixelMap, DEFAULT_COMPACTNESS, DEFAULT_ITERS, DEFAULT_SEGMENTS};

use report::{attribution_overlay, boundary_rgb, cam_overlay, sha256_hex, to_json_line, weight_table};

/// File name of the detector written next to a generated corpus.
pub const CORPUS_MODEL_FILE: &str = "lesion_net.xnet";

#[derive(Debug, Parser)]
#[command(name = "ctxai", version, about = "Explainability toolkit for slice-level CT classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic CT corpus and the matching lesion detector.
    GenCorpus(GenCorpusArgs),
    /// Partition an image into SLIC superpixels.
    Segment(SegmentArgs),
    /// Score a patient from a directory of slices with section-wise noisy-OR.
    PatientScore(PatientScoreArgs),
    /// Class activation heatmap and bounding boxes for one slice.
    Cam(CamArgs),
    /// LIME attribution over superpixels.
    Lime(LimeArgs),
    /// Kernel SHAP attribution over superpixels.
    Shap(ShapArgs),
    /// Run the built-in oracle checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    patients: usize,
    /// Slices per patient.
    #[arg(long, default_value_t = 24)]
    slices: usize,
    /// Square slice edge in pixels.
    #[arg(long, default_value_t = DEFAULT_SIZE)]
    size: usize,
    #[arg(long, default_value_t = DEFAULT_NOISE)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Clone)]
struct ModelArgs {
    /// XNET model file; the built-in lesion detector when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output class to score.
    #[arg(long, default_value_t = 0)]
    class: usize,
}

#[derive(Debug, Args, Clone)]
struct SegmentParams {
    /// Target superpixel count.
    #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
    segments: usize,
    #[arg(long, default_value_t = DEFAULT_COMPACTNESS)]
    compactness: f64,
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    iters: usize,
    /// Seed for superpixel initialization and sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Directory for image and tensor artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    params: SegmentParams,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct PatientScoreArgs {
    /// Directory of slice PGMs, ordered by file name; `mask_*` files are skipped.
    #[arg(long)]
    slices: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Section length l_s.
    #[arg(long, default_value_t = DEFAULT_SECTION_LENGTH)]
    ls: usize,
    /// Top-k slices pooled per section.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    k: usize,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CamArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Box threshold as a fraction of the heatmap maximum.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_FRAC)]
    threshold_frac: f64,
    /// Smallest component (pixels) that gets a box.
    #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
    min_area: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct LimeArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    segment: SegmentParams,
    /// Locality kernel width.
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    /// Perturbation count M.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Absolute L1 penalty; overrides --lambda-frac.
    #[arg(long)]
    lambda: Option<f64>,
    /// L1 penalty as a fraction of the smallest all-zero penalty.
    #[arg(long, default_value_t = 0.01)]
    lambda_frac: f64,
    /// Intensity painted over removed superpixels.
    #[arg(long, default_value_t = 0.0)]
    fill: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ShapArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    segment: SegmentParams,
    /// Coalition count M; at or above 2^N every coalition is enumerated.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Intensity painted over removed superpixels.
    #[arg(long, default_value_t = 0.0)]
    fill: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 success, 1 runtime or file failure, 2 usage or range
/// error.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ctxai: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) => 2,
        Error::Explanation { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::GenCorpus(a) => gen_corpus(a, out),
        Command::Segment(a) => segment(a, out),
        Command::PatientScore(a) => patient_score(a, out),
        Command::Cam(a) => cam(a, out),
        Command::Lime(a) => lime(a, out),
        Command::Shap(a) => shap(a, out),
        Command::Selftest(a) => selftest::run(a.seed, out),
    }
    .map(|ok| if ok { 0 } else { 1 })
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

struct LoadedModel {
    net: MicroNet<f64>,
    name: String,
    sha256: String,
    class: usize,
}

impl LoadedModel {
    fn load(args: &ModelArgs) -> Result<Self> {
        let (net, name, bytes) = match &args.model {
            Some(path) => {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                let net = net_load::<f64>(path)?;
                (net, path.display().to_string(), bytes)
            }
            None => {
                let net = lesion_detector::<f64>()?;
                let bytes = net.to_xnet_bytes();
                (net, "builtin:lesion-detector".to_string(), bytes)
            }
        };
        if args.class >= net.classes() {
            return Err(Error::validation(format!(
                "class {} out of range for {} classes",
                args.class,
                net.classes()
            )));
        }
        Ok(LoadedModel { net, name, sha256: sha256_hex(&bytes), class: args.class })
    }

    fn score(&self, img: &GrayImage<f64>) -> Result<f64> {
        self.net.score(img, self.class)
    }

    fn provenance(&self, seed: Option<u64>) -> Value {
        json!({ "model": self.name, "model_sha256": self.sha256, "seed": seed })
    }
}

fn emit(report: &Value, json_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let text = to_json_line(report);
    match json_path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => out.write_all(text.as_bytes()).map_err(stdout_err),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::validation(format!("--{name} {v} outside [0,1]")))
    }
}

fn gen_corpus(a: GenCorpusArgs, out: &mut dyn Write) -> Result<bool> {
    if !(a.noise.is_finite() && a.noise >= 0.0) {
        return Err(Error::validation(format!("--noise {} must be non-negative", a.noise)));
    }
    ensure_dir(&a.out)?;
    let cfg = CorpusConfig {
        patients: a.patients,
        n_slices: a.slices,
        size: a.size,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let manifest = write_corpus(&a.out, &cfg)?;
    net_save(&lesion_detector::<f64>()?, a.out.join(CORPUS_MODEL_FILE))?;
    for p in &manifest.patients {
        writeln!(out, "{} label {} slices {}", p.id, u8::from(p.label), p.slices.len()).map_err(stdout_err)?;
    }
    Ok(true)
}

fn segment_image(img: &GrayImage<f64>, p: &SegmentParams) -> Result<SuperpixelMap> {
    slic_segment(img, p.segments, p.compactness, p.iters, p.seed)
}

fn segment_params_json(p: &SegmentParams) -> Value {
    json!({
        "segments": p.segments,
        "compactness": p.compactness,
        "iters": p.iters,
    })
}

fn segments_json(sp: &SuperpixelMap) -> Vec<Value> {
    sp.sizes()
        .iter()
        .zip(sp.centroids())
        .enumerate()
        .map(|(i, (size, c))| json!({ "segment": i, "size": size, "centroid": [c.row, c.col] }))
        .collect()
}

fn segment(a: SegmentArgs, out: &mut dyn Write) -> Result<bool> {
    let img = GrayImage::<f64>::read_pgm(&a.image)?;
    let sp = segment_image(&img, &a.params)?;
    if let Some(dir) = &a.output.out {
        ensure_dir(dir)?;
        let labels = sp.labels().iter().map(|&l| l as f64).collect();
        Tensor::new(vec![sp.height(), sp.width()], labels)?.write(dir.join("labels.xten"))?;
        let rgb = boundary_rgb(&img, &sp);
        write_ppm_rgb(img.height(), img.width(), &rgb, dir.join("segments.ppm"))?;
    }
    let report = json!({
        "method": "slic",
        "input": { "image": a.image.display().to_string(), "height": img.height(), "width": img.width() },
        "parameters": segment_params_json(&a.params),
        "provenance": { "seed": a.params.seed },
        "n_segments": sp.n_segments(),
        "segments": segments_json(&sp),
    });
    emit(&report, a.output.json.as_deref(), out)?;
    Ok(true)
}

fn slice_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(".pgm") && !name.starts_with("mask") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no slice PGMs")));
    }
    Ok(files)
}

fn patient_score(a: PatientScoreArgs, out: &mut dyn Write) -> Result<bool> {
    let model = LoadedModel::load(&a.model)?;
    let files = slice_files(&a.slices)?;
    let part = partition_sections(files.len(), a.ls)?;
    if a.k == 0 {
        return Err(Error::validation("--k must be at least 1"));
    }
    let scores = files
        .iter()
        .map(|f| model.score(&GrayImage::<f64>::read_pgm(f)?))
        .collect::<Result<Vec<f64>>>()?;
    let result = patient_prob(&scores, &part, a.k)?;
    let mut text = String::new();
    for (f, s) in files.iter().zip(&scores) {
        let name = f.file_name().unwrap_or_default().to_string_lossy();
        text += &format!("slice {name} score {s:.6}\n");
    }
    for (i, (r, p)) in part.sections.iter().zip(&result.section_probs).enumerate() {
        text += &format!("section {i} slices {}..{} prob {p:.6}\n", r.start, r.end);
    }
    text += &format!("patient prob {:.6}\n", result.patient_prob);
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    if let Some(path) = &a.json {
        let report = json!({
            "method": "noisy-or",
            "input": { "slices": a.slices.display().to_string(), "n_slices": files.len() },
            "parameters": { "ls": a.ls, "k": a.k, "class": model.class },
            "provenance": model.provenance(None),
            "slice_scores": scores,
            "sections": part.sections.iter().map(|r| [r.start, r.end]).collect::<Vec<_>>(),
            "section_probs": result.section_probs,
            "patient_prob": result.patient_prob,
        });
        fs::write(path, to_json_line(&report)).map_err(|e| Error::io(path, e))?;
    }
    Ok(true)
}

fn cam(a: CamArgs, out: &mut dyn Write) -> Result<bool> {
    check_unit("threshold-frac", a.threshold_frac)?;
    let model = LoadedModel::load(&a.model)?;
    let img = GrayImage::<f64>::read_pgm(&a.image)?;
    let fwd = model.net.forward(&img)?;
    let hm = heatmap_from_activation(&fwd.activation_map(model.class), img.height(), img.width(), model.class)?;
    let boxes = extract_bboxes(&hm, a.threshold_frac, a.min_area);
    if let Some(dir) = &a.output.out {
        ensure_dir(dir)?;
        hm.values.write(dir.join("heatmap.xten"))?;
        img.write_ppm(&cam_overlay(&hm, &boxes)?, dir.join("cam.ppm"))?;
    }
    let (pr, pc) = hm.argmax();
    let report = json!({
        "method": "cam",
        "input": { "image": a.image.display().to_string(), "height": img.height(), "width": img.width() },
        "parameters": { "class": model.class, "threshold_frac": a.threshold_frac, "min_area": a.min_area },
        "provenance": model.provenance(None),
        "score": fwd.scores.data()[model.class],
        "peak": [pr, pc],
        "boxes": boxes.iter().map(|b| json!({
            "top": b.top, "left": b.left, "bottom": b.bottom, "right": b.right,
            "score": b.score, "area": b.area,
        })).collect::<Vec<_>>(),
    });
    emit(&report, a.output.json.as_deref(), out)?;
    Ok(true)
}

fn attribution_report(
    attr: &Attribution<f64>,
    sp: &SuperpixelMap,
    image: &Path,
    img: &GrayImage<f64>,
    score: f64,
    parameters: Value,
    provenance: Value,
) -> Value {
    let sizes = sp.sizes();
    let attributions: Vec<Value> = attr
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let c = sp.centroids()[i];
            json!({ "segment": i, "weight": w, "size": sizes[i], "centroid": [c.row, c.col] })
        })
        .collect();
    json!({
        "method": attr.method.as_str(),
        "input": { "image": image.display().to_string(), "height": img.height(), "width": img.width() },
        "parameters": parameters,
        "provenance": provenance,
        "score": score,
        "intercept": attr.intercept,
        "n_samples": attr.n_samples,
        "converged": attr.converged,
        "top_segment": attr.top_feature(),
        "attributions": attributions,
    })
}

fn write_attribution_artifacts(dir: &Path, name: &str, img: &GrayImage<f64>, sp: &SuperpixelMap, attr: &Attribution<f64>) -> Result<()> {
    ensure_dir(dir)?;
    img.write_ppm(&attribution_overlay(sp, &attr.weights, false)?, dir.join(format!("{name}.ppm")))?;
    img.write_ppm(&attribution_overlay(sp, &attr.weights, true)?, dir.join(format!("{name}_positive.ppm")))?;
    let table = dir.join(format!("{name}_weights.txt"));
    fs::write(&table, weight_table(sp, &attr.weights)).map_err(|e| Error::io(&table, e))
}

fn lime(a: LimeArgs, out: &mut dyn Write) -> Result<bool> {
    check_unit("fill", a.fill)?;
    let model = LoadedModel::load(&a.model)?;
    let img = GrayImage::<f64>::read_pgm(&a.image)?;
    let sp = segment_image(&img, &a.segment)?;
    let penalty = match a.lambda {
        Some(l) => Penalty::Absolute(l),
        None => Penalty::RelativeToMax(a.lambda_frac),
    };
    let cfg = LimeConfig {
        samples: a.samples,
        sigma: a.sigma,
        penalty,
        seed: a.segment.seed,
        fill: a.fill,
        ..LimeConfig::default()
    };
    let f = |im: &GrayImage<f64>| model.score(im);
    let attr = lime_explain(&f, &img, &sp, &cfg)?;
    if let Some(dir) = &a.output.out {
        write_attribution_artifacts(dir, "lime", &img, &sp, &attr)?;
    }
    let mut params = segment_params_json(&a.segment);
    let extra = json!({
        "class": model.class,
        "sigma": a.sigma,
        "samples": a.samples,
        "lambda": a.lambda,
        "lambda_frac": if a.lambda.is_some() { None } else { Some(a.lambda_frac) },
        "fill": a.fill,
    });
    merge(&mut params, extra);
    let report = attribution_report(&attr, &sp, &a.image, &img, model.score(&img)?, params, model.provenance(Some(a.segment.seed)));
    emit(&report, a.output.json.as_deref(), out)?;
    Ok(true)
}

fn shap(a: ShapArgs, out: &mut dyn Write) -> Result<bool> {
    check_unit("fill", a.fill)?;
    let model = LoadedModel::load(&a.model)?;
    let img = GrayImage::<f64>::read_pgm(&a.image)?;
    let sp = segment_image(&img, &a.segment)?;
    let cfg = ShapConfig { samples: a.samples, seed: a.segment.seed, fill: a.fill };
    let f = |im: &GrayImage<f64>| model.score(im);
    let attr = shap_explain(&f, &img, &sp, &cfg)?;
    if let Some(dir) = &a.output.out {
        write_attribution_artifacts(dir, "shap", &img, &sp, &attr)?;
    }
    let mut params = segment_params_json(&a.segment);
    merge(&mut params, json!({ "class": model.class, "samples": a.samples, "fill": a.fill }));
    let report = attribution_report(&attr, &sp, &a.image, &img, model.score(&img)?, params, model.provenance(Some(a.segment.seed)));
    emit(&report, a.output.json.as_deref(), out)?;
    Ok(true)
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}
