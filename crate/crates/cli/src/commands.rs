use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use serde_json::json;

use ugac::data::{self, ImageFormat, PairedDataset};
use ugac::metrics::{EvalReport, Metric};
use ugac::nets::checkpoint::write_atomic;
use ugac::nets::Generator;
use ugac::perturb::{parse_level, Family, PerturbSpec};
use ugac::train::{load_generators, TrainConfig, Trainer, FINAL_CHECKPOINT, METRICS_FILE};
use ugac::uncertainty::{predict_with_uncertainty, uncertainty_residual_stats};
use ugac::{Rng, Tensor};

use crate::manifest::Recorder;
use crate::plot::{self, Series, PALETTE};
use crate::{CliError, CorrArgs, Direction, EvaluateArgs, PerturbArgs, SynthArgs, TrainArgs, TranslateArgs};

type Result<T> = std::result::Result<T, CliError>;

const MANIFEST: &str = "manifest.json";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Core(ugac::Error::Io { path: dir.to_path_buf(), source: e }))
}

fn json_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn pick_generator(ckpt: &Path, direction: Direction) -> Result<Generator> {
    let (g_a, g_b) = load_generators(ckpt)?;
    Ok(match direction {
        Direction::A2b => g_a,
        Direction::B2a => g_b,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn as_batch(x: &Tensor) -> Result<Tensor> {
    Ok(Tensor::stack_batch(std::slice::from_ref(x))?)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) if !path.is_file() => {
            return Err(CliError::Usage(format!("config file {} does not exist", path.display())));
        }
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let rec = Recorder::start("train", cfg.seed);
    let ds = match (&args.data, args.synth) {
        (Some(dir), _) => data::load_dataset(dir, None)?,
        (None, Some(n)) => data::synth_shapes_dataset(n, args.size, cfg.seed)?,
        (None, None) => return Err(CliError::Usage("one of --data or --synth is required".into())),
    };
    create_dir(&args.out)?;
    let config_echo = args.out.join("config.toml");
    write_text(&config_echo, &cfg.to_toml())?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let logs = trainer.fit(&ds, Some(&args.out))?;
    if let Some(last) = logs.last() {
        eprintln!("trained {} epochs; final loss_g {:.5}, loss_d {:.5}", last.epoch, last.loss_g, last.loss_d);
    }
    let mut artifacts = vec![config_echo, args.out.join(METRICS_FILE), args.out.join(FINAL_CHECKPOINT)];
    if cfg.checkpoint_every > 0 {
        artifacts.extend(
            (1..=cfg.epochs)
                .filter(|e| e % cfg.checkpoint_every == 0)
                .map(|e| args.out.join(format!("epoch_{e:04}.ckpt"))),
        );
    }
    let echo = json!({
        "train": json_value(&cfg),
        "data": args.data,
        "synth": args.synth.map(|n| json!({"n": n, "size": args.size})),
    });
    rec.finish(&args.out.join(MANIFEST), echo, artifacts)?;
    Ok(())
}

pub fn translate(args: TranslateArgs) -> Result<()> {
    let rec = Recorder::start("translate", args.seed);
    let model = pick_generator(&args.ckpt, args.direction)?;
    let inputs = data::list_images(&args.input)?;
    if inputs.is_empty() {
        return Err(CliError::Core(ugac::Error::Data(format!("{} contains no images", args.input.display()))));
    }
    create_dir(&args.out)?;
    let mut rng = Rng::seed_from_u64(args.seed);
    let mut artifacts = Vec::new();
    for path in &inputs {
        let x = as_batch(&data::load_image(path)?)?;
        let name = stem(path);
        let mut outputs: Vec<(String, Tensor, bool)> = Vec::new();
        if args.uncertainty {
            let (pred, maps) = predict_with_uncertainty(&model, &x, args.mc_samples, &mut rng)?;
            outputs.push((name.clone(), pred.mean.batch_item(0)?, false));
            outputs.push((format!("{name}_alpha"), pred.alpha.batch_item(0)?, true));
            outputs.push((format!("{name}_beta"), pred.beta.batch_item(0)?, true));
            outputs.push((format!("{name}_sigma"), maps.sigma().batch_item(0)?, true));
        } else {
            outputs.push((name.clone(), model.predict(&x, None)?.mean.batch_item(0)?, false));
        }
        for (file, t, is_map) in outputs {
            let raw = args.out.join(format!("{file}.rt"));
            data::save_raw(&raw, &t)?;
            artifacts.push(raw);
            if args.png {
                let png = args.out.join(format!("{file}.png"));
                let shown = if is_map { data::normalize_for_display(&t) } else { t };
                data::save_png(&png, &shown)?;
                artifacts.push(png);
            }
        }
    }
    let echo = json!({
        "ckpt": args.ckpt,
        "input": args.input,
        "direction": format!("{:?}", args.direction).to_lowercase(),
        "uncertainty": args.uncertainty,
        "mc_samples": args.mc_samples,
        "sigma": if args.mc_samples.is_some() { "sqrt(aleatoric + epistemic)" } else { "sqrt(aleatoric)" },
    });
    rec.finish(&args.out.join(MANIFEST), echo, artifacts)?;
    Ok(())
}

pub fn perturb(args: PerturbArgs) -> Result<()> {
    let family: Family = args.family.parse()?;
    let spec = PerturbSpec::new(family, parse_level(&args.level)?)?;
    let rec = Recorder::start("perturb", args.seed);
    let inputs = data::list_images(&args.input)?;
    if inputs.is_empty() {
        return Err(CliError::Core(ugac::Error::Data(format!("{} contains no images", args.input.display()))));
    }
    create_dir(&args.out)?;
    let mut artifacts = Vec::new();
    for (i, path) in inputs.iter().enumerate() {
        let mut rng = Rng::seed_from_u64(args.seed);
        rng.set_stream(i as u64);
        let y = spec.apply(&data::load_image(path)?, &mut rng)?;
        let dst = args.out.join(path.file_name().expect("listed images have file names"));
        data::save_image(&dst, &y)?;
        artifacts.push(dst);
    }
    let echo = json!({
        "input": args.input,
        "family": spec.family,
        "level": format!("NL{}", spec.level),
        "parameter": spec.parameter,
    });
    rec.finish(&args.out.join(MANIFEST), echo, artifacts)?;
    Ok(())
}

/// Inputs for evaluation: `dir/domainA` (or `domainB` for b2a) when present,
/// otherwise the images directly in `dir`.
fn evaluation_inputs(dir: &Path, direction: Direction) -> Result<Vec<Tensor>> {
    let domain = dir.join(match direction {
        Direction::A2b => "domainA",
        Direction::B2a => "domainB",
    });
    let src = if domain.is_dir() { domain } else { dir.to_path_buf() };
    let paths = data::list_images(&src)?;
    if paths.is_empty() {
        return Err(CliError::Core(ugac::Error::Data(format!("{} contains no images", src.display()))));
    }
    Ok(paths.iter().map(|p| data::load_image(p)).collect::<ugac::Result<Vec<_>>>()?)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    parent.join(format!("{}{suffix}", stem(path)))
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let families = args.families.iter().map(|f| f.trim().parse::<Family>()).collect::<ugac::Result<Vec<_>>>()?;
    if families.is_empty() {
        return Err(CliError::Usage("--families is empty".into()));
    }
    let rec = Recorder::start("evaluate", args.seed);
    let model = pick_generator(&args.ckpt, args.direction)?;
    let inputs = evaluation_inputs(&args.data, args.direction)?;
    let mut report = EvalReport::evaluate(&model, &inputs, &families, args.seed)?;
    report.config = json!({
        "ckpt": args.ckpt,
        "data": args.data,
        "direction": format!("{:?}", args.direction).to_lowercase(),
        "families": families,
    });
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_text(&args.out, &report.to_json()?)?;
    let csv_path = sibling(&args.out, ".csv");
    write_text(&csv_path, &report.to_csv()?)?;
    let mut artifacts = vec![args.out.clone(), csv_path];
    for (metric, suffix) in [(Metric::Mse, "_amse.png"), (Metric::Ssim, "_assim.png")] {
        let curves: Vec<Vec<(f64, f64)>> = report
            .families
            .iter()
            .map(|f| {
                let c = f.curve(metric);
                c.levels.iter().copied().zip(c.scores.iter().copied()).collect()
            })
            .collect();
        let series: Vec<Series> =
            curves.iter().enumerate().map(|(i, pts)| Series { points: pts, color: PALETTE[i % PALETTE.len()] }).collect();
        let path = sibling(&args.out, suffix);
        plot::line_chart(&path, &series)?;
        artifacts.push(path);
    }
    for f in &report.families {
        eprintln!("{:>8}: AMSE {:.6e}  ASSIM {:.6}", f.family.name(), f.amse.area, f.assim.area);
    }
    rec.finish(&sibling(&args.out, ".manifest.json"), report.config.clone(), artifacts)?;
    Ok(())
}

pub fn uncertainty_corr(args: CorrArgs) -> Result<()> {
    let rec = Recorder::start("uncertainty-corr", args.seed);
    let model = pick_generator(&args.ckpt, Direction::A2b)?;
    let PairedDataset { inputs, targets } = data::load_paired(&args.paired_eval)?;
    if inputs.len() < 3 {
        return Err(CliError::Core(ugac::Error::Data(format!(
            "uncertainty correlation needs at least 3 image pairs, got {}",
            inputs.len()
        ))));
    }
    let mut rng = Rng::seed_from_u64(args.seed);
    let (mut preds, mut totals) = (Vec::new(), Vec::new());
    for x in &inputs {
        let (pred, maps) = predict_with_uncertainty(&model, &as_batch(x)?, args.mc_samples, &mut rng)?;
        preds.push(pred.mean.batch_item(0)?);
        totals.push(maps.total.batch_item(0)?);
    }
    let stats = uncertainty_residual_stats(&preds, &targets, &totals)?;
    create_dir(&args.out)?;
    let stats_path = args.out.join("stats.json");
    let stats_json = json!({
        "n_images": inputs.len(),
        "uncertainty_score": "mean sigma, sigma = sqrt(total variance)",
        "pearson": stats.pearson,
        "spearman": stats.spearman,
        "mc_samples": args.mc_samples,
    });
    write_text(&stats_path, &serde_json::to_string_pretty(&stats_json).expect("json"))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Core(ugac::Error::Data(e.to_string()));
    w.write_record(["image", "mean_sigma", "mean_abs_residual"]).map_err(csv_err)?;
    for (i, (s, r)) in stats.mean_sigma.iter().zip(&stats.mean_residual).enumerate() {
        w.write_record([i.to_string(), s.to_string(), r.to_string()]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Core(ugac::Error::Data(e.to_string())))?;
    let csv_path = args.out.join("scatter.csv");
    write_atomic(&csv_path, &bytes)?;

    let points: Vec<(f64, f64)> = stats.mean_sigma.iter().copied().zip(stats.mean_residual.iter().copied()).collect();
    let plot_path = args.out.join("scatter.png");
    plot::scatter_chart(&plot_path, &points)?;
    eprintln!("pearson {:.4}  spearman {:.4}  ({} images)", stats.pearson, stats.spearman, inputs.len());

    let echo = json!({"ckpt": args.ckpt, "paired_eval": args.paired_eval, "mc_samples": args.mc_samples});
    rec.finish(&args.out.join(MANIFEST), echo, vec![stats_path, csv_path, plot_path])?;
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let rec = Recorder::start("synth", args.seed);
    let format = ImageFormat::from(args.format);
    let (a, b) = if args.paired {
        let p = data::synth_paired_dataset(args.n, args.size, args.seed)?;
        (p.inputs, p.targets)
    } else {
        let d = data::synth_shapes_dataset(args.n, args.size, args.seed)?;
        (d.domain_a, d.domain_b)
    };
    let mut artifacts = data::save_images(&args.out.join("domainA"), &a, format)?;
    artifacts.extend(data::save_images(&args.out.join("domainB"), &b, format)?);
    let echo = json!({"n": args.n, "size": args.size, "paired": args.paired, "format": format.extension()});
    rec.finish(&args.out.join(MANIFEST), echo, artifacts)?;
    Ok(())
}
