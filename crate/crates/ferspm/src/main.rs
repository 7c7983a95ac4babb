//! Command-line interface for salient-patch facial expression
//! recognition.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
//! failure.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::process::ExitCode;

use ferspm::cascade_file::load_cascade;
use ferspm::image_io::read_image;
use ferspm::landmark_file::{landmarks_to_string, overlay, read_landmarks};
use ferspm::manifest::read_manifest;
use ferspm::model_file::{load_model, save_model, ModelConfig};
use ferspm::pgm::write_pgm;
use ferspm::pipeline::{
    cross_validate, evaluate_features, fused_protocol, predict, preprocess, preprocess_manifest,
    train, Cascades, PipelineConfig, Prediction,
};
use ferspm::synth::write_fixture_set;
use ferspm::Error;
use ferspm_core::eval::{metrics, EvaluationReport, ALL_LABELS, CLASS_COUNT};
use ferspm_core::features::{LbpVariant, PatchFeatureSet};
use ferspm_core::landmarks::{landmark_error, SUPPORTED_RESOLUTIONS};
use ferspm_core::patches::{layout_patches, PATCH_COUNT};
use ferspm_core::saliency::select;

const USAGE: &str = "\
ferspm - facial expression recognition from salient facial patches

USAGE:
    ferspm <command> [options]

COMMANDS:
    train      --data <manifest> --out <model>
               [--resolution 96] [--bins 16] [--top-k 4] [--folds 10]
               [--seed N] [--grid-search] [cascade options]
    predict    --model <file> --image <path> [--json] [cascade options]
    evaluate   --model <file> --data <manifest> [cascade options]
    crossval   --data <manifest> [--folds 10] [--resolution 96] [--bins 16]
               [--top-k 4] [--seed N] [--grid-search] [--reference-macro-f X]
               [cascade options]
    fused      --data <m1> --data <m2> [...] [--repeats 10] [other train options]
    landmarks  --image <path> [--truth <pts>] [--overlay <out.pgm>]
               [--resolution 96] [cascade options]
               or: --data <manifest> [--cdf-out <csv>] (batch evaluation)
    saliency   --data <manifest> --out <csv> [--top-k 4] [--folds 10]
               [--seed N] [--dump-features <csv>] [cascade options]
    layout     --image <path> [--overlay <out.pgm>] [--resolution 96]
               [cascade options]
    synth      --out-dir <dir> [--per-class 10] [--seed N]

CASCADE OPTIONS (all optional):
    --face-cascade <file>   face detector; without it the whole frame
                            is treated as the face (pre-cropped data)
    --eye-cascade <file>    per-eye detector
    --nose-cascade <file>   nose detector

Randomized commands accept --seed (default 0). Exit codes: 0 ok,
1 usage, 2 data error, 3 numeric failure.
";

struct Args {
    values: VecDeque<String>,
}

impl Args {
    fn new() -> Args {
        Args { values: std::env::args().skip(1).collect() }
    }

    fn next(&mut self) -> Option<String> {
        self.values.pop_front()
    }

    /// Collect flags into (name, value) pairs; boolean flags get "true".
    fn parse_flags(mut self, bool_flags: &[&str]) -> Result<Vec<(String, String)>, Error> {
        let mut out = Vec::new();
        while let Some(flag) = self.next() {
            let name = flag
                .strip_prefix("--")
                .ok_or_else(|| Error::Usage(format!("unexpected argument '{flag}'")))?
                .to_string();
            if bool_flags.contains(&name.as_str()) {
                out.push((name, "true".to_string()));
            } else {
                let value = self
                    .next()
                    .ok_or_else(|| Error::Usage(format!("--{name} needs a value")))?;
                out.push((name, value));
            }
        }
        Ok(out)
    }
}

#[derive(Default)]
struct CommonOpts {
    data: Vec<PathBuf>,
    out: Option<PathBuf>,
    model: Option<PathBuf>,
    image: Option<PathBuf>,
    truth: Option<PathBuf>,
    overlay: Option<PathBuf>,
    cdf_out: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    dump_features: Option<PathBuf>,
    resolution: usize,
    bins: String,
    top_k: usize,
    folds: usize,
    seed: u64,
    grid_search: bool,
    repeats: usize,
    per_class: usize,
    json: bool,
    reference_macro_f: Option<f64>,
    face_cascade: Option<PathBuf>,
    eye_cascade: Option<PathBuf>,
    nose_cascade: Option<PathBuf>,
}

fn parse_opts(args: Args) -> Result<CommonOpts, Error> {
    let mut o = CommonOpts {
        resolution: 96,
        bins: "16".to_string(),
        top_k: 4,
        folds: 10,
        seed: 0,
        repeats: 10,
        per_class: 10,
        ..Default::default()
    };
    let flags = args.parse_flags(&["grid-search", "json"])?;
    for (name, value) in flags {
        let parse_num = |what: &str, v: &str| -> Result<usize, Error> {
            v.parse().map_err(|_| Error::Usage(format!("invalid {what} '{v}'")))
        };
        match name.as_str() {
            "data" => o.data.push(PathBuf::from(value)),
            "out" => o.out = Some(PathBuf::from(value)),
            "model" => o.model = Some(PathBuf::from(value)),
            "image" => o.image = Some(PathBuf::from(value)),
            "truth" => o.truth = Some(PathBuf::from(value)),
            "overlay" => o.overlay = Some(PathBuf::from(value)),
            "cdf-out" => o.cdf_out = Some(PathBuf::from(value)),
            "dump-features" => o.dump_features = Some(PathBuf::from(value)),
            "out-dir" => o.out_dir = Some(PathBuf::from(value)),
            "resolution" => o.resolution = parse_num("resolution", &value)?,
            "bins" => o.bins = value,
            "top-k" => o.top_k = parse_num("top-k", &value)?,
            "folds" => o.folds = parse_num("folds", &value)?,
            "repeats" => o.repeats = parse_num("repeats", &value)?,
            "per-class" => o.per_class = parse_num("per-class", &value)?,
            "seed" => {
                o.seed = value.parse().map_err(|_| Error::Usage(format!("invalid seed '{value}'")))?
            }
            "grid-search" => o.grid_search = true,
            "json" => o.json = true,
            "reference-macro-f" => {
                o.reference_macro_f = Some(
                    value
                        .parse()
                        .map_err(|_| Error::Usage(format!("invalid reference '{value}'")))?,
                )
            }
            "face-cascade" => o.face_cascade = Some(PathBuf::from(value)),
            "eye-cascade" => o.eye_cascade = Some(PathBuf::from(value)),
            "nose-cascade" => o.nose_cascade = Some(PathBuf::from(value)),
            other => return Err(Error::Usage(format!("unknown flag --{other}"))),
        }
    }
    Ok(o)
}

impl CommonOpts {
    fn cascades(&self) -> Result<Cascades, Error> {
        Ok(Cascades {
            face: self.face_cascade.as_deref().map(load_cascade).transpose()?,
            eye: self.eye_cascade.as_deref().map(load_cascade).transpose()?,
            nose: self.nose_cascade.as_deref().map(load_cascade).transpose()?,
        })
    }

    fn pipeline_config(&self) -> Result<PipelineConfig, Error> {
        if !SUPPORTED_RESOLUTIONS.contains(&self.resolution) {
            return Err(Error::Usage(format!(
                "--resolution {} unsupported (48, 96, 144 or 192)",
                self.resolution
            )));
        }
        let variant = LbpVariant::from_name(&self.bins).ok_or_else(|| {
            Error::Usage(format!("--bins {} unsupported (16, 32, 256, u2 or riu2)", self.bins))
        })?;
        if self.top_k == 0 || self.top_k > PATCH_COUNT {
            return Err(Error::Usage(format!("--top-k {} outside 1..=19", self.top_k)));
        }
        if self.folds < 2 {
            return Err(Error::Usage("--folds must be at least 2".into()));
        }
        Ok(PipelineConfig {
            model: ModelConfig {
                resolution: self.resolution,
                variant,
                top_k: self.top_k,
                folds: self.folds,
                seed: self.seed,
                grid_search: self.grid_search,
            },
            landmarks: Default::default(),
            grid_search: self.grid_search,
        })
    }

    fn single_data(&self) -> Result<&PathBuf, Error> {
        match self.data.as_slice() {
            [one] => Ok(one),
            [] => Err(Error::Usage("--data <manifest> is required".into())),
            _ => Err(Error::Usage("this command takes a single --data manifest".into())),
        }
    }

    fn require(&self, field: Option<&PathBuf>, flag: &str) -> Result<PathBuf, Error> {
        field.cloned().ok_or_else(|| Error::Usage(format!("--{flag} is required")))
    }
}

fn print_report(report: &EvaluationReport) {
    println!("confusion matrix (rows = truth, %):");
    print!("{:>12}", "");
    for label in ALL_LABELS {
        print!("{:>11}", label.as_str());
    }
    println!();
    for (t, label) in ALL_LABELS.iter().enumerate() {
        print!("{:>12}", label.as_str());
        for p in 0..CLASS_COUNT {
            print!("{:>11.2}", report.percentages[t][p]);
        }
        println!();
    }
    println!();
    println!("per-class precision/recall:");
    for (c, label) in ALL_LABELS.iter().enumerate() {
        println!(
            "  {:<10} precision {:6.2}%  recall {:6.2}%",
            label.as_str(),
            100.0 * report.precision[c],
            100.0 * report.recall[c]
        );
    }
    println!();
    println!("samples:          {}", report.total_samples);
    println!("accuracy:         {:.2}%", 100.0 * report.accuracy);
    println!("macro precision:  {:.2}%", 100.0 * report.macro_precision);
    println!("macro recall:     {:.2}%", 100.0 * report.macro_recall);
    println!("macro F-score:    {:.2}%", 100.0 * report.macro_f);
}

fn warn_if_folds_reduced(records: &[ferspm::manifest::ManifestRecord], folds: usize) {
    let smallest = ALL_LABELS
        .iter()
        .map(|label| records.iter().filter(|r| r.label == *label).count())
        .min()
        .unwrap_or(0);
    if smallest > 0 && smallest < folds {
        eprintln!(
            "warning: smallest class has {smallest} samples; saliency cross-validation \
             uses {smallest} folds instead of {folds}"
        );
    }
}

fn cmd_train(opts: CommonOpts) -> Result<(), Error> {
    let out_path = opts.require(opts.out.as_ref(), "out")?;
    let config = opts.pipeline_config()?;
    let records = read_manifest(opts.single_data()?)?;
    warn_if_folds_reduced(&records, config.model.folds);
    let cascades = opts.cascades()?;
    let output = train(&records, &cascades, &config)?;
    for (record, reason) in &output.preprocess.failures {
        eprintln!("warning: skipped {}: {reason}", record.image.display());
    }
    save_model(&out_path, &output.model)?;
    println!(
        "trained on {} images ({} skipped); model written to {}",
        output.preprocess.processed.len(),
        output.preprocess.failures.len(),
        out_path.display()
    );
    Ok(())
}

fn cmd_predict(opts: CommonOpts) -> Result<(), Error> {
    let model_path = opts.require(opts.model.as_ref(), "model")?;
    let image = opts.require(opts.image.as_ref(), "image")?;
    let model = load_model(&model_path)?;
    let cascades = opts.cascades()?;
    let prediction = predict(&model, &cascades, &image, &Default::default())?;
    match prediction {
        Prediction::Label { label, votes } => {
            if opts.json {
                let votes_json: Vec<String> = votes.iter().map(|v| v.to_string()).collect();
                println!(
                    "{{\"label\":\"{}\",\"votes\":[{}],\"no_face\":false}}",
                    label.as_str(),
                    votes_json.join(",")
                );
            } else {
                println!("label: {}", label.as_str());
                for (c, label) in ALL_LABELS.iter().enumerate() {
                    println!("  {:<10} {:>2} votes", label.as_str(), votes[c]);
                }
            }
        }
        Prediction::NoFace => {
            if opts.json {
                println!("{{\"label\":null,\"votes\":null,\"no_face\":true}}");
            } else {
                println!("no face found");
            }
        }
    }
    Ok(())
}

fn cmd_evaluate(opts: CommonOpts) -> Result<(), Error> {
    let model_path = opts.require(opts.model.as_ref(), "model")?;
    let model = load_model(&model_path)?;
    let records = read_manifest(opts.single_data()?)?;
    let cascades = opts.cascades()?;
    let config = PipelineConfig {
        model: model.config,
        landmarks: Default::default(),
        grid_search: model.config.grid_search,
    };
    let report = preprocess_manifest(&records, &cascades, &config)?;
    for (record, reason) in &report.failures {
        eprintln!("warning: skipped {}: {reason}", record.image.display());
    }
    let faces: Vec<_> = report.processed.iter().map(|p| p.face.clone()).collect();
    let labels: Vec<usize> = report.processed.iter().map(|p| p.record.label.index()).collect();
    let set = PatchFeatureSet::extract(&faces, &labels, model.config.variant)?;
    let rows: Vec<usize> = (0..set.n_samples()).collect();
    let counts = evaluate_features(&model, &set, &rows)?;
    print_report(&metrics(&counts)?);
    Ok(())
}

fn cmd_crossval(opts: CommonOpts) -> Result<(), Error> {
    let config = opts.pipeline_config()?;
    let records = read_manifest(opts.single_data()?)?;
    let cascades = opts.cascades()?;
    let result = cross_validate(&records, &cascades, &config, opts.folds)?;
    for (record, reason) in &result.preprocess.failures {
        eprintln!("warning: skipped {}: {reason}", record.image.display());
    }
    println!(
        "{}-fold cross-validation, resolution {}, {} bins, top-{} patches, seed {}:",
        opts.folds,
        config.model.resolution,
        config.model.variant.bins(),
        config.model.top_k,
        config.model.seed
    );
    println!();
    print_report(&result.report);
    if let Some(reference) = opts.reference_macro_f {
        let got = 100.0 * result.report.macro_f;
        println!();
        println!(
            "reference macro F-score: {reference:.2}%  (this run: {got:.2}%, difference {:+.2})",
            got - reference
        );
    }
    Ok(())
}

fn cmd_fused(opts: CommonOpts) -> Result<(), Error> {
    if opts.data.len() < 2 {
        return Err(Error::Usage("fused needs at least two --data manifests".into()));
    }
    let config = opts.pipeline_config()?;
    let mut records = Vec::new();
    for (i, path) in opts.data.iter().enumerate() {
        let mut batch = read_manifest(path)?;
        // Distinct per-manifest source tags unless the manifest sets them.
        for r in batch.iter_mut() {
            if r.source == ferspm::manifest::DEFAULT_SOURCE {
                r.source = format!("source{}", i + 1);
            }
        }
        records.extend(batch);
    }
    let cascades = opts.cascades()?;
    let result = fused_protocol(&records, &cascades, &config, opts.repeats)?;
    println!(
        "fused protocol over {} repeats (90/10 splits per source and class):",
        result.repeats
    );
    for (source, report) in &result.per_source {
        println!();
        println!("=== source: {source} ===");
        print_report(report);
    }
    Ok(())
}

fn cmd_landmarks(opts: CommonOpts) -> Result<(), Error> {
    let config = opts.pipeline_config()?;
    let cascades = opts.cascades()?;

    if let Some(image_path) = &opts.image {
        let img = read_image(image_path)?;
        let face = preprocess(&img, &cascades, &config, image_path, None)?;
        print!("{}", landmarks_to_string(&face.landmarks));
        if let Some(truth_path) = &opts.truth {
            let truth = read_landmarks(truth_path)?;
            let e = landmark_error(&face.landmarks, &truth)
                .map_err(|e| Error::Numeric(e.to_string()))?;
            println!("# normalized error e = {e:.6}");
        }
        if let Some(overlay_path) = &opts.overlay {
            write_pgm(overlay_path, &overlay(&face.image, &face.landmarks))?;
            eprintln!("overlay written to {}", overlay_path.display());
        }
        return Ok(());
    }

    // Batch mode over a manifest with ground-truth landmark files.
    let records = read_manifest(opts.single_data()?)?;
    let evaluation = ferspm::pipeline::evaluate_landmarks(&records, &cascades, &config)?;
    for (path, reason) in &evaluation.skipped {
        eprintln!("warning: skipped {}: {reason}", path.display());
    }
    for (path, e) in &evaluation.errors {
        println!("{} {e:.6}", path.display());
    }
    let mut cdf_csv = String::from("threshold,fraction\n");
    for (t, frac) in &evaluation.cdf {
        cdf_csv.push_str(&format!("{t:.2},{frac:.6}\n"));
    }
    match &opts.cdf_out {
        Some(path) => {
            std::fs::write(path, cdf_csv).map_err(|e| Error::io(path, e))?;
            eprintln!("CDF written to {}", path.display());
        }
        None => print!("{cdf_csv}"),
    }
    Ok(())
}

fn cmd_saliency(opts: CommonOpts) -> Result<(), Error> {
    let out_path = opts.require(opts.out.as_ref(), "out")?;
    let config = opts.pipeline_config()?;
    let records = read_manifest(opts.single_data()?)?;
    warn_if_folds_reduced(&records, config.model.folds);
    let cascades = opts.cascades()?;
    let report = preprocess_manifest(&records, &cascades, &config)?;
    for (record, reason) in &report.failures {
        eprintln!("warning: skipped {}: {reason}", record.image.display());
    }
    let faces: Vec<_> = report.processed.iter().map(|p| p.face.clone()).collect();
    let labels: Vec<usize> = report.processed.iter().map(|p| p.record.label.index()).collect();
    let set = PatchFeatureSet::extract(&faces, &labels, config.model.variant)?;
    if let Some(path) = &opts.dump_features {
        dump_features(path, &report, &set, config.model.variant)?;
        eprintln!("features written to {}", path.display());
    }
    let table =
        ferspm::pipeline::build_table_parallel(&set, config.model.folds, config.model.seed)?;

    let mut csv = String::from("pair");
    for p in 1..=PATCH_COUNT {
        csv.push_str(&format!(",P{p}"));
    }
    csv.push('\n');
    for (k, (a, b)) in ferspm_core::eval::all_pairs().into_iter().enumerate() {
        csv.push_str(&format!("{}-{}", ALL_LABELS[a].as_str(), ALL_LABELS[b].as_str()));
        for patch in 0..PATCH_COUNT {
            csv.push_str(&format!(",{:.4}", table.scores[k][patch]));
        }
        csv.push('\n');
    }
    std::fs::write(&out_path, csv).map_err(|e| Error::io(&out_path, e))?;
    println!("saliency table written to {}", out_path.display());

    let selection = select(&table, opts.top_k);
    println!();
    println!("top-{} salient patches per pair:", opts.top_k);
    print!("{:>10}", "");
    for label in ALL_LABELS.iter().skip(1) {
        print!(" {:>16}", label.as_str());
    }
    println!();
    for (row, row_label) in ALL_LABELS.iter().take(CLASS_COUNT - 1).enumerate() {
        print!("{:>10}", row_label.as_str());
        for col in 1..CLASS_COUNT {
            if col <= row {
                print!(" {:>16}", "-");
            } else {
                let k = ferspm_core::eval::pair_index(row, col);
                let names: Vec<String> =
                    selection.per_pair[k].iter().map(|&i| format!("P{}", i + 1)).collect();
                print!(" {:>16}", names.join(" "));
            }
        }
        println!();
    }
    Ok(())
}

/// One CSV row per image; the header encodes (patch, block, bin) per
/// column.
fn dump_features(
    path: &std::path::Path,
    report: &ferspm::pipeline::PreprocessReport,
    set: &PatchFeatureSet,
    variant: LbpVariant,
) -> Result<(), Error> {
    let mut csv = String::from("path,label");
    for patch in 1..=PATCH_COUNT {
        for block in 0..4 {
            for bin in 0..variant.bins() {
                csv.push_str(&format!(",P{patch}.b{block}.bin{bin}"));
            }
        }
    }
    csv.push('\n');
    for (row, processed) in report.processed.iter().enumerate() {
        csv.push_str(&format!(
            "{},{}",
            processed.record.image.display(),
            processed.record.label.as_str()
        ));
        for values in set.face_rows(row) {
            for v in values {
                csv.push_str(&format!(",{v}"));
            }
        }
        csv.push('\n');
    }
    std::fs::write(path, csv).map_err(|e| Error::io(path, e))
}

fn cmd_layout(opts: CommonOpts) -> Result<(), Error> {
    let image_path = opts.require(opts.image.as_ref(), "image")?;
    let config = opts.pipeline_config()?;
    let img = read_image(&image_path)?;
    let cascades = opts.cascades()?;
    let face = preprocess(&img, &cascades, &config, &image_path, None)?;
    let layout = layout_patches(&face.landmarks, face.resolution);
    for (i, rect) in layout.boxes.iter().enumerate() {
        println!("P{} {} {} {}", i + 1, rect.x, rect.y, layout.side);
    }
    if let Some(overlay_path) = &opts.overlay {
        let mut out = face.image.clone();
        for rect in &layout.boxes {
            for x in rect.x..rect.right() {
                out.set(x, rect.y, 255);
                out.set(x, rect.bottom() - 1, 255);
            }
            for y in rect.y..rect.bottom() {
                out.set(rect.x, y, 255);
                out.set(rect.right() - 1, y, 255);
            }
        }
        write_pgm(overlay_path, &out)?;
        eprintln!("overlay written to {}", overlay_path.display());
    }
    Ok(())
}

fn cmd_synth(opts: CommonOpts) -> Result<(), Error> {
    let dir = opts.require(opts.out_dir.as_ref(), "out-dir")?;
    let set = write_fixture_set(&dir, opts.per_class, opts.seed)?;
    println!(
        "wrote {} images, manifest and cascades to {}",
        set.images.len(),
        set.dir.display()
    );
    println!("try:");
    println!(
        "  ferspm crossval --data {} --face-cascade {} --eye-cascade {} --nose-cascade {}",
        set.manifest.display(),
        set.face_cascade.display(),
        set.eye_cascade.display(),
        set.nose_cascade.display()
    );
    Ok(())
}

fn run() -> Result<(), Error> {
    let mut args = Args::new();
    let command = match args.next() {
        Some(c) => c,
        None => return Err(Error::Usage(USAGE.into())),
    };
    if command == "--help" || command == "-h" || command == "help" {
        println!("{USAGE}");
        return Ok(());
    }
    let opts = parse_opts(args)?;
    match command.as_str() {
        "train" => cmd_train(opts),
        "predict" => cmd_predict(opts),
        "evaluate" => cmd_evaluate(opts),
        "crossval" => cmd_crossval(opts),
        "fused" => cmd_fused(opts),
        "landmarks" => cmd_landmarks(opts),
        "saliency" => cmd_saliency(opts),
        "layout" => cmd_layout(opts),
        "synth" => cmd_synth(opts),
        other => Err(Error::Usage(format!("unknown command '{other}'\n\n{USAGE}"))),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
