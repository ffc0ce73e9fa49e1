use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clickmat_core::compositor::{load_manifest, make_partition, write_dataset, DatasetConfig, PartitionRadii};
use clickmat_core::evaluation::{sparsification, MetricRegistry, MetricReport, Scope, SparsificationCurve};
use clickmat_core::io::{decode_uncertainty_map, encode_uncertainty_map, read_alpha, read_image, write_alpha};
use clickmat_core::ClickSet;
use clickmat_nn::checkpoint::{load_matting, load_refiner};
use clickmat_service::{Engine, EngineConfig, MattingService};
use clickmat_train::{train_stages, Stage, TrainConfig};
use serde::Serialize;

use crate::args::*;

pub fn run(cli: Cli) -> Result<()> {
    let (seed, json) = (cli.seed, cli.json);
    match cli.command {
        Command::SynthData(a) => synth_data(a, seed, json),
        Command::Train(a) => train(a, seed),
        Command::Eval(a) => eval(a, json),
        Command::Sparsify(a) => sparsify(a, json),
        Command::Infer(a) => infer(a, json),
        Command::Refine(a) => refine(a, json),
        Command::Serve(a) => serve(a),
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn synth_data(args: SynthArgs, seed: Option<u64>, json: bool) -> Result<()> {
    let mut config: DatasetConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => DatasetConfig::default(),
    };
    if let Some(s) = seed {
        config.master_seed = s;
    }
    if let Some(side) = args.size {
        config.height = side;
        config.width = side;
    }
    let records = write_dataset(&args.out, &config).context("writing dataset")?;
    let train = records.iter().filter(|r| r.split == "train").count();
    if json {
        print_json(&serde_json::json!({ "train": train, "test": records.len() - train, "root": args.out }))?;
    } else {
        println!("wrote {train} train and {} test samples to {}", records.len() - train, args.out.display());
    }
    Ok(())
}

fn train(args: TrainArgs, seed: Option<u64>) -> Result<()> {
    let mut config = match (&args.config, args.paper_scale) {
        (Some(p), _) => TrainConfig::load(p)?,
        (None, true) => TrainConfig::paper_scale(),
        (None, false) => TrainConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(m) = args.max_steps {
        config.max_steps = Some(m);
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    config.validate()?;
    let stages = args
        .stages
        .iter()
        .map(|s| s.parse::<Stage>())
        .collect::<Result<Vec<_>, _>>()?;
    let radii = PartitionRadii::default();
    let samples: Vec<_> = load_manifest(&args.data, Some("train"), radii)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    if samples.is_empty() {
        bail!("no train samples in {}", args.data.display());
    }
    let validation: Vec<_> = match args.validation_split.as_str() {
        "none" => Vec::new(),
        split => load_manifest(&args.data, Some(split), radii)?
            .into_iter()
            .map(|(_, s)| s)
            .collect(),
    };
    let (_, artifacts) = train_stages(&samples, &validation, &config, &args.out, &stages)?;
    println!("training log: {}", artifacts.log.display());
    Ok(())
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct ImageReport {
    id: String,
    report: MetricReport,
}

#[derive(Debug, Serialize)]
struct ScopeReport {
    scope: Scope,
    mean: Option<MetricReport>,
    images: Vec<ImageReport>,
}

fn eval(args: EvalArgs, json: bool) -> Result<()> {
    let mut registry = MetricRegistry::default();
    if !args.metrics.is_empty() {
        let names: Vec<&str> = args.metrics.iter().map(String::as_str).collect();
        registry = registry.select(&names)?;
    }
    let scopes = args
        .scope
        .iter()
        .map(|s| s.parse::<Scope>())
        .collect::<Result<Vec<_>, _>>()?;
    let preds = png_files(&args.pred)?;
    if preds.is_empty() {
        bail!("no PNG mattes in {}", args.pred.display());
    }
    let radii = PartitionRadii::default();
    let mut out: Vec<ScopeReport> = scopes
        .iter()
        .map(|&scope| ScopeReport {
            scope,
            mean: None,
            images: Vec::new(),
        })
        .collect();
    for pred_path in &preds {
        let name = pred_path.file_name().expect("listed files have names");
        let gt_path = args.gt.join(name);
        let pred = read_alpha(pred_path).with_context(|| format!("reading {}", pred_path.display()))?;
        let gt = read_alpha(&gt_path).with_context(|| format!("reading {}", gt_path.display()))?;
        let partition = make_partition(&gt, radii.dilate, radii.erode)?;
        for scope_report in &mut out {
            let report = registry.evaluate(&pred, &gt, &partition, scope_report.scope)?;
            scope_report.images.push(ImageReport {
                id: file_stem(pred_path),
                report,
            });
        }
    }
    for s in &mut out {
        let reports: Vec<MetricReport> = s.images.iter().map(|i| i.report.clone()).collect();
        s.mean = MetricReport::mean(&reports);
    }
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&out)?)?;
    }
    if json {
        return print_json(&out);
    }
    for s in &out {
        let Some(mean) = &s.mean else { continue };
        println!("{}", mean.csv_header());
        for i in &s.images {
            println!("{}", i.report.csv_row(&i.id));
        }
        println!("{}", mean.csv_row("mean"));
    }
    Ok(())
}

fn default_fractions() -> Vec<f64> {
    (0..20).map(|i| i as f64 * 0.05).collect()
}

fn sparsify(args: SparsifyArgs, json: bool) -> Result<()> {
    let fractions = if args.fractions.is_empty() { default_fractions() } else { args.fractions.clone() };
    let triples: Vec<(PathBuf, PathBuf, PathBuf)> = if args.pred.is_dir() {
        png_files(&args.pred)?
            .into_iter()
            .map(|p| {
                let name = p.file_name().expect("listed files have names").to_owned();
                let sigma = args.sigma.join(format!("{}.sigma", file_stem(&p)));
                (p, args.gt.join(name), sigma)
            })
            .collect()
    } else {
        vec![(args.pred.clone(), args.gt.clone(), args.sigma.clone())]
    };
    let mut curves = Vec::with_capacity(triples.len());
    for (pred, gt, sigma) in &triples {
        let alpha_p = read_alpha(pred).with_context(|| format!("reading {}", pred.display()))?;
        let alpha_g = read_alpha(gt).with_context(|| format!("reading {}", gt.display()))?;
        let bytes = std::fs::read(sigma).with_context(|| format!("reading {}", sigma.display()))?;
        let sigma_p = decode_uncertainty_map(&bytes)?;
        curves.push(sparsification(&alpha_p, &alpha_g, &sigma_p, &fractions)?);
    }
    let curve: SparsificationCurve = SparsificationCurve::mean(&curves).context("no inputs")?;
    std::fs::write(&args.out, curve.to_csv())?;
    if json {
        return print_json(&curve);
    }
    if let Some(i) = curve.fractions.iter().position(|&f| (f - 0.2).abs() < 1e-9) {
        println!("MSE reduction at 20% removal: {:.1}%", 100.0 * curve.predicted_reduction(i));
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

struct Prepared {
    engine: Engine,
    image: clickmat_core::Image,
    clicks: ClickSet,
}

fn prepare(args: &InferArgs, refiner: Option<&Path>, config: EngineConfig) -> Result<Prepared> {
    let net = load_matting(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let refiner = refiner
        .map(|p| load_refiner(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let image = read_image(&args.image).with_context(|| format!("reading {}", args.image.display()))?;
    let clicks = match &args.clicks {
        Some(p) => ClickSet::from_json(&std::fs::read_to_string(p)?, args.radius)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => ClickSet::empty(args.radius),
    };
    clicks.check_bounds(image.height(), image.width())?;
    let config = EngineConfig {
        click_radius: args.radius,
        ..config
    };
    Ok(Prepared {
        engine: Engine::new(net, refiner, config)?,
        image,
        clicks,
    })
}

fn write_outputs(args: &InferArgs, inference: &clickmat_service::Inference, alpha: &clickmat_core::AlphaMatte) -> Result<()> {
    write_alpha(&args.out, alpha).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.sigma_out {
        let sigma = inference
            .sigma
            .as_ref()
            .context("the checkpoint has no uncertainty decoder")?;
        std::fs::write(path, encode_uncertainty_map(sigma))?;
    }
    Ok(())
}

fn infer(args: InferArgs, json: bool) -> Result<()> {
    let p = prepare(&args, None, EngineConfig::default())?;
    let inference = p.engine.infer(&p.image, &p.clicks)?;
    write_outputs(&args, &inference, &inference.alpha)?;
    if json {
        let (h, w) = inference.alpha.shape();
        print_json(&serde_json::json!({ "height": h, "width": w, "clicks": p.clicks.len(), "out": args.out }))?;
    }
    Ok(())
}

fn refine(args: RefineArgs, json: bool) -> Result<()> {
    let config = EngineConfig {
        patch_size: args.patch_size,
        strategy: args.strategy.clone(),
        ..EngineConfig::default()
    };
    let p = prepare(&args.infer, Some(&args.refiner), config)?;
    let inference = p.engine.infer(&p.image, &p.clicks)?;
    let refined = p.engine.refine(&p.image, &inference, args.k)?;
    write_outputs(&args.infer, &inference, &refined.alpha)?;
    if let Some(path) = &args.patches_out {
        std::fs::write(path, serde_json::to_string(&refined.patches)?)?;
    }
    if json {
        let mut summary = BTreeMap::new();
        summary.insert("patches", serde_json::to_value(&refined.patches)?);
        summary.insert("refined_pixels", refined.refined_pixels.into());
        print_json(&summary)?;
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let config: EngineConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => EngineConfig::default(),
    };
    let net = load_matting(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let refiner = args
        .refiner
        .as_deref()
        .map(|p| load_refiner(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let service = MattingService::new(Engine::new(net, refiner, config)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(clickmat_service::serve(service, args.addr))?;
    Ok(())
}
