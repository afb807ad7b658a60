use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{
    ClassifyArgs, CliError, CliResult, DetectArgs, EvalArgs, InspectArgs, PipelineArgs, RuleArg,
    SynthArgs, TrainArgs, TrainingArgs,
};
use crate::detection::{annotate, composite_classify, Detector, DetectorConfig};
use crate::error::Error;
use crate::evaluation::{evaluate, split, write_roc_csv, LabeledDataset};
use crate::filter::{Label, TrainedClassifier};
use crate::imaging::{load_gray, load_picture, GrayImage, ImageVector, Preprocessor};
use crate::locality::{parse_region_spec, Region};
use crate::model::{ModelFile, TrainingMetadata};
use crate::synth::{generate, write_dataset, SynthKind};
use crate::training::{train, write_history_csv, TrainingConfig, TrainingOutcome, UpdateRule};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "jpg", "jpeg"];

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    Error::io(path, e).into()
}

/// Image files of `dir`, sorted by file name.
fn image_paths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::usage(format!("no images found in {}", dir.display())));
    }
    Ok(paths)
}

/// Loads and preprocesses every image of `dir`, skipping undecodable files.
fn load_dir(dir: &Path, pre: &Preprocessor) -> CliResult<Vec<ImageVector>> {
    let mut out = Vec::new();
    for path in image_paths(dir)? {
        match load_gray(&path) {
            Ok(img) => out.push(pre.prepare(&img)?),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if out.is_empty() {
        return Err(CliError::usage(format!(
            "no decodable images in {}",
            dir.display()
        )));
    }
    log::info!("loaded {} images from {}", out.len(), dir.display());
    Ok(out)
}

fn preprocessor(size: usize, pipeline: &PipelineArgs) -> Preprocessor {
    Preprocessor {
        width: size,
        height: size,
        equalize: !pipeline.no_equalize,
    }
}

fn update_rule(args: &TrainingArgs) -> UpdateRule {
    match args.rule {
        RuleArg::Hardlim => UpdateRule::Hardlim,
        RuleArg::Sigmoid => UpdateRule::Sigmoid { epsilon: args.eps },
    }
}

/// Regions named by `--region`, or `None` for global training.
fn regions(args: &TrainingArgs) -> CliResult<Option<Vec<Region>>> {
    match &args.region {
        None => Ok(None),
        Some(spec) => Ok(Some(parse_region_spec(spec, args.size, args.size)?)),
    }
}

fn training_config(args: &TrainingArgs, region: Option<&Region>) -> CliResult<TrainingConfig> {
    let (mut n_black, mut n_white) = match (args.n, region) {
        (Some(n), _) => (n / 2, n - n / 2),
        (None, Some(r)) => (r.default_filter_size(), r.default_filter_size()),
        (None, None) => {
            let d = TrainingConfig::default();
            (d.n_black, d.n_white)
        }
    };
    n_black = args.n_black.unwrap_or(n_black);
    n_white = args.n_white.unwrap_or(n_white);
    let cfg = TrainingConfig {
        n_black,
        n_white,
        rule: update_rule(args),
        max_iterations: args.max_iter,
        region: region.cloned(),
    };
    cfg.validate()?;
    let available = region.map_or(args.size * args.size, Region::len);
    if n_black + n_white > available {
        return Err(CliError::usage(format!(
            "filter needs {} pixels, only {available} available",
            n_black + n_white
        )));
    }
    Ok(cfg)
}

fn metadata(cfg: &TrainingConfig, outcome: &TrainingOutcome) -> TrainingMetadata {
    TrainingMetadata {
        rule: cfg.rule.name().to_string(),
        epsilon: cfg.rule.epsilon(),
        iterations: outcome.history.len(),
        best_iteration: Some(outcome.best_iteration),
        converged: Some(outcome.converged),
        region: cfg.region.as_ref().map(|r| r.name().to_string()),
    }
}

fn write_history(outcome: &TrainingOutcome, path: &Path) -> CliResult {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    write_history_csv(&outcome.history, std::io::BufWriter::new(file))?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{suffix}.{ext}"),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

struct Trained {
    config: TrainingConfig,
    outcome: TrainingOutcome,
}

fn train_one(faces: &[ImageVector], clutters: &[ImageVector], args: &TrainingArgs, region: Option<&Region>) -> CliResult<Trained> {
    let config = training_config(args, region)?;
    let outcome = train(faces, clutters, &config)?;
    log::info!(
        "trained {}: best iteration {} with {} errors",
        region.map_or("global filter".to_string(), |r| r.to_string()),
        outcome.best_iteration,
        outcome.best_errors
    );
    Ok(Trained { config, outcome })
}

fn report_training(t: &Trained, model_path: &Path, stdout: &mut dyn Write) -> CliResult {
    let last = t.outcome.history.last().expect("history is never empty");
    writeln!(
        stdout,
        "{}: iterations={} best_iteration={} errors={} converged={} theta={}",
        model_path.display(),
        t.outcome.history.len(),
        t.outcome.best_iteration,
        t.outcome.best_errors,
        t.outcome.converged,
        last.theta
    )
    .map_err(|e| io_err(Path::new("<stdout>"), e))
}

pub fn train_cmd(args: &TrainArgs, stdout: &mut dyn Write) -> CliResult {
    let pre = preprocessor(args.training.size, &args.pipeline);
    let faces = load_dir(&args.faces, &pre)?;
    let clutters = load_dir(&args.clutter, &pre)?;
    let history = args
        .history
        .clone()
        .unwrap_or_else(|| args.out.with_file_name("history.csv"));

    let jobs: Vec<(Option<Region>, PathBuf, PathBuf)> = match regions(&args.training)? {
        None => vec![(None, args.out.clone(), history)],
        Some(rs) if rs.len() == 1 => {
            let r = rs.into_iter().next().expect("one region");
            vec![(Some(r), args.out.clone(), history)]
        }
        Some(rs) => rs
            .into_iter()
            .map(|r| {
                let (m, h) = (with_suffix(&args.out, r.name()), with_suffix(&history, r.name()));
                (Some(r), m, h)
            })
            .collect(),
    };
    for (region, model_path, history_path) in jobs {
        let t = train_one(&faces, &clutters, &args.training, region.as_ref())?;
        ModelFile::from_classifier(&t.outcome.classifier, metadata(&t.config, &t.outcome)).save(&model_path)?;
        write_history(&t.outcome, &history_path)?;
        report_training(&t, &model_path, stdout)?;
    }
    Ok(())
}

fn load_models(paths: &[PathBuf]) -> CliResult<Vec<TrainedClassifier>> {
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        out.push(ModelFile::load(p)?.classifier()?);
    }
    let (w, h) = (out[0].mask.width(), out[0].mask.height());
    for (c, p) in out.iter().zip(paths) {
        if (c.mask.width(), c.mask.height()) != (w, h) {
            return Err(CliError::shape(format!(
                "{} is {}x{}, first model is {w}x{h}",
                p.display(),
                c.mask.width(),
                c.mask.height()
            )));
        }
    }
    Ok(out)
}

fn model_preprocessor(models: &[TrainedClassifier], pipeline: &PipelineArgs) -> Preprocessor {
    Preprocessor {
        width: models[0].mask.width(),
        height: models[0].mask.height(),
        equalize: !pipeline.no_equalize,
    }
}

pub fn classify(args: &ClassifyArgs, stdout: &mut dyn Write) -> CliResult {
    if !matches!(args.models.len(), 1 | 3) {
        return Err(CliError::usage(format!(
            "classify takes one model or three, got {}",
            args.models.len()
        )));
    }
    let models = load_models(&args.models)?;
    let x = model_preprocessor(&models, &args.pipeline).prepare(&load_gray(&args.image)?)?;
    let label: Label = composite_classify(&x, &models)?;
    let out_err = |e| io_err(Path::new("<stdout>"), e);
    writeln!(stdout, "{label}").map_err(out_err)?;
    for (m, p) in models.iter().zip(&args.models) {
        writeln!(stdout, "{}\t{}\t{}", p.display(), m.mask.size(), m.margin(&x)?).map_err(out_err)?;
    }
    Ok(())
}

pub fn detect(args: &DetectArgs, stdout: &mut dyn Write) -> CliResult {
    if args.models.len() != 3 {
        return Err(CliError::usage(format!(
            "detect takes exactly three models, got {}",
            args.models.len()
        )));
    }
    let models = load_models(&args.models)?;
    let config = DetectorConfig {
        min_side: args.min_side,
        max_side: args.max_side,
        scale_step: args.scale_step,
        stride_frac: args.stride_frac,
        support_frac: args.support_frac,
        use_skin: !args.no_skin,
        preprocess: model_preprocessor(&models, &args.pipeline),
        ..DetectorConfig::default()
    };
    let picture = load_picture(&args.picture)?;
    let detector = Detector::new(models, config)?;
    let detections = detector.detect(&picture)?;
    log::info!("{} detections", detections.len());

    let mut json = serde_json::to_string_pretty(&detections).map_err(Error::from)?;
    json.push('\n');
    match &args.out {
        Some(path) => fs::write(path, &json).map_err(|e| io_err(path, e))?,
        None => stdout
            .write_all(json.as_bytes())
            .map_err(|e| io_err(Path::new("<stdout>"), e))?,
    }
    if let Some(path) = &args.annotate {
        annotate(&picture, &detections)
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn eval(args: &EvalArgs, stdout: &mut dyn Write) -> CliResult {
    fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let (classifier, test) = match &args.model {
        Some(path) => {
            let model = ModelFile::load(path)?.classifier()?;
            let pre = model_preprocessor(std::slice::from_ref(&model), &args.pipeline);
            let ds = LabeledDataset::from_classes(load_dir(&args.faces, &pre)?, load_dir(&args.clutter, &pre)?);
            (model, ds)
        }
        None => {
            let pre = preprocessor(args.training.size, &args.pipeline);
            let ds = LabeledDataset::from_classes(load_dir(&args.faces, &pre)?, load_dir(&args.clutter, &pre)?);
            let (train_set, test_set) = split(&ds, args.train_frac, args.seed)?;
            let region = match regions(&args.training)? {
                None => None,
                Some(rs) if rs.len() == 1 => rs.into_iter().next(),
                Some(rs) => {
                    return Err(CliError::usage(format!(
                        "eval trains a single filter, region spec gives {}",
                        rs.len()
                    )))
                }
            };
            let t = train_one(
                &train_set.class(Label::Face),
                &train_set.class(Label::Clutter),
                &args.training,
                region.as_ref(),
            )?;
            let model_path = args.out_dir.join("model.json");
            ModelFile::from_classifier(&t.outcome.classifier, metadata(&t.config, &t.outcome)).save(&model_path)?;
            write_history(&t.outcome, &args.out_dir.join("history.csv"))?;
            report_training(&t, &model_path, stdout)?;
            (t.outcome.classifier, test_set)
        }
    };

    let report = evaluate(&classifier, &test)?;
    let roc_path = args.out_dir.join("roc.csv");
    let file = fs::File::create(&roc_path).map_err(|e| io_err(&roc_path, e))?;
    write_roc_csv(&report.curve, std::io::BufWriter::new(file))?;
    let mut summary = serde_json::to_string_pretty(&report.summary).map_err(Error::from)?;
    summary.push('\n');
    let summary_path = args.out_dir.join("summary.json");
    fs::write(&summary_path, &summary).map_err(|e| io_err(&summary_path, e))?;
    stdout
        .write_all(summary.as_bytes())
        .map_err(|e| io_err(Path::new("<stdout>"), e))
}

pub fn synth(args: &SynthArgs, stdout: &mut dyn Write) -> CliResult {
    let kind: SynthKind = args.kind.parse()?;
    let ds = generate(kind, args.count, args.seed);
    write_dataset(&ds, &args.out_dir)?;
    writeln!(
        stdout,
        "wrote {} faces and {} clutter images to {}",
        ds.faces.len(),
        ds.clutters.len(),
        args.out_dir.display()
    )
    .map_err(|e| io_err(Path::new("<stdout>"), e))
}

pub fn inspect(args: &InspectArgs, stdout: &mut dyn Write) -> CliResult {
    let model = ModelFile::load(&args.model)?;
    let mut levels = vec![128u8; model.width * model.height];
    for &i in &model.black_indices {
        levels[i] = 0;
    }
    for &i in &model.white_indices {
        levels[i] = 255;
    }
    GrayImage::from_bytes(model.width, model.height, &levels)?.save_png(&args.out)?;
    writeln!(
        stdout,
        "{}x{} black={} white={} theta={}",
        model.width,
        model.height,
        model.black_indices.len(),
        model.white_indices.len(),
        model.theta
    )
    .map_err(|e| io_err(Path::new("<stdout>"), e))
}
