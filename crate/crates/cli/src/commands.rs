use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use afdc::afdc::{compute_ratio, WeightMode};
use afdc::cost::{self, CostNet, RatioHistogram};
use afdc::model::{load_checkpoint, mean_score, save_checkpoint, Model, CHECKPOINT_VERSION};
use afdc::pipeline::{
    load_image, read_manifest, synth_dataset, write_dataset, GroupBoundaries, ImageRecord, MANIFEST_FILE,
};
use afdc::tensor::{format, resize_bilinear};
use afdc::training::{evaluate, predict, save_log, train_loop, EvalConfig, MetricReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::args::{Arch, CostArgs, EvalArgs, SweepArgs, TrainArgs};
use crate::config::RunConfig;
use crate::manifest::RunManifest;
use crate::selftest;
use crate::{CliError, Output};

pub const TRAIN_LOG: &str = "train_log.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const COST_CSV: &str = "cost.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
/// Version of the CSV layouts written here (train log, eval, sweep, cost).
pub const CSV_VERSION: u32 = 1;

/// Common run context: config, effective seed and the manifest being built.
pub struct Ctx {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub manifest: RunManifest,
}

impl Ctx {
    pub fn new(sub: &str, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<Self, CliError> {
        let cfg = RunConfig::load(config)?;
        let seed = seed.unwrap_or(cfg.train.seed);
        let mut manifest = RunManifest::new(sub, out);
        manifest.seed = Some(seed);
        if let Some(p) = config {
            manifest.config_paths.push(p.display().to_string());
        }
        Ok(Ctx {
            cfg,
            seed,
            out: out.to_path_buf(),
            manifest,
        })
    }

    fn mkdir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::Usage(format!("{}: {e}", self.out.display())))
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn selftest(fault: Option<&str>, json: bool) -> Result<Output, CliError> {
    if let Some(f) = fault {
        if !selftest::SUITES.contains(&f) {
            return Err(CliError::Usage(format!("unknown suite {f:?}")));
        }
    }
    let report = selftest::run_all(fault);
    let text = if json {
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Failure(e.to_string()))?
    } else {
        report.to_text()
    };
    if report.passed {
        Ok(Output(text))
    } else {
        Err(CliError::Invariant(text))
    }
}

pub fn synth(ctx: &mut Ctx, json: bool) -> Result<Output, CliError> {
    ctx.mkdir()?;
    let mut r = rng(ctx.seed, 2);
    let sizes = ctx.cfg.data.clone();
    let mut counts = Vec::new();
    for (name, n) in [("train", sizes.train), ("val", sizes.val), ("test", sizes.test)] {
        let records = synth_dataset(n, &mut r, &ctx.cfg.synth)?;
        write_dataset(ctx.out.join(name), &records)?;
        ctx.manifest.output(format!("{name}/{MANIFEST_FILE}"));
        counts.push((name, n));
    }
    ctx.manifest
        .format("tensor", format::FORMAT_VERSION)
        .format("manifest_csv", CSV_VERSION);
    Ok(Output(if json {
        json!({ "splits": counts.iter().map(|(k, n)| json!({"split": k, "records": n})).collect::<Vec<_>>() })
            .to_string()
    } else {
        counts.iter().map(|(k, n)| format!("{k}: {n} records\n")).collect()
    }))
}

/// Records of a manifest file, or of `dir/manifest.csv`.
pub fn load_split(path: &Path) -> Result<Vec<ImageRecord>, CliError> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    if !file.exists() {
        return Err(CliError::Usage(format!("missing dataset manifest {}", file.display())));
    }
    Ok(read_manifest(&file)?)
}

pub fn train(ctx: &mut Ctx, args: &TrainArgs, json: bool) -> Result<Output, CliError> {
    let train = load_split(&args.data.join("train"))?;
    let val_dir = args.data.join("val");
    let val = if val_dir.join(MANIFEST_FILE).exists() { load_split(&val_dir)? } else { Vec::new() };
    ctx.mkdir()?;
    let mut cfg = ctx.cfg.train.clone();
    cfg.seed = ctx.seed;
    let network = ctx.cfg.network.with_afdc(!args.vanilla && ctx.cfg.network.has_afdc());
    let model = Model::<f32>::build(&network, &mut rng(ctx.seed, 1))?;
    let outcome = train_loop(model, &train, &val, &cfg)?;
    save_log(&outcome.rows, ctx.out.join(TRAIN_LOG))?;
    save_checkpoint(&outcome.best, ctx.out.join(CHECKPOINT_DIR))?;
    ctx.manifest
        .arg("data", args.data.display())
        .arg("vanilla", args.vanilla)
        .format("tensor", format::FORMAT_VERSION)
        .format("checkpoint", CHECKPOINT_VERSION)
        .format("train_log_csv", CSV_VERSION)
        .output(TRAIN_LOG)
        .output(CHECKPOINT_DIR);
    if let Some(h) = &outcome.halted {
        log::warn!("training halted: {h}");
    }
    let last = outcome.rows.last();
    Ok(Output(if json {
        json!({
            "epochs": outcome.rows.iter().map(|r| r.epoch).max().map_or(0, |e| e + 1),
            "best_epoch": outcome.best_epoch,
            "halted": outcome.halted,
            "final": last.map(|r| json!({"split": r.split, "emd": r.report.emd})),
        })
        .to_string()
    } else {
        format!(
            "trained {} parameters, best epoch {:?}{}\n",
            outcome.best.param_count(),
            outcome.best_epoch,
            outcome.halted.as_ref().map(|h| format!(" (halted: {h})")).unwrap_or_default()
        )
    }))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |x| format!("{x:.6}"))
}

pub const EVAL_HEADER: &str = "mode,cls_acc,mse,emd,srcc,lcc";

pub fn eval_row(mode: WeightMode, r: &MetricReport) -> String {
    format!(
        "{mode},{:.6},{:.6},{:.6},{},{}",
        r.cls_acc,
        r.mse,
        r.emd,
        fmt_opt(r.srcc),
        fmt_opt(r.lcc)
    )
}

fn eval_config(ctx: &Ctx) -> EvalConfig {
    EvalConfig::from_train(&ctx.cfg.train)
}

pub fn eval(ctx: &mut Ctx, args: &EvalArgs, json: bool) -> Result<Output, CliError> {
    let model = load_model(&args.checkpoint)?;
    let records = load_split(&args.data)?;
    ctx.mkdir()?;
    let ec = eval_config(ctx);
    let mut csv = format!("{EVAL_HEADER}\n");
    let mut rows = Vec::new();
    for mode in args.weight_mode.modes() {
        let r = evaluate(&model, &records, mode, &ec)?;
        csv.push_str(&eval_row(mode, &r));
        csv.push('\n');
        rows.push(json!({"mode": mode.to_string(), "metrics": r}));
    }
    std::fs::write(ctx.out.join(EVAL_CSV), &csv)?;
    ctx.manifest
        .arg("checkpoint", args.checkpoint.display())
        .arg("data", args.data.display())
        .format("eval_csv", CSV_VERSION)
        .output(EVAL_CSV);
    Ok(Output(if json { json!({ "rows": rows }).to_string() } else { csv }))
}

fn load_model(dir: &Path) -> Result<Model<f32>, CliError> {
    if !dir.join(afdc::model::CHECKPOINT_FILE).exists() {
        return Err(CliError::Usage(format!("no checkpoint in {}", dir.display())));
    }
    Ok(load_checkpoint::<f32>(dir)?)
}

/// `(h, w)` with `h / w` close to `ratio` and area close to `area`.
pub fn dims_for_ratio(area: f64, ratio: f64) -> (usize, usize) {
    let h = (area * ratio).sqrt().round().max(1.0) as usize;
    let w = (area / ratio).sqrt().round().max(1.0) as usize;
    (h, w)
}

pub fn sweep(ctx: &mut Ctx, args: &SweepArgs, json: bool) -> Result<Output, CliError> {
    let model = load_model(&args.checkpoint)?;
    if !args.image.exists() {
        return Err(CliError::Usage(format!("missing image {}", args.image.display())));
    }
    let src = load_image(&args.image)?;
    ctx.mkdir()?;
    let mut ec = eval_config(ctx);
    if let Some(w) = args.warp {
        ec.warp_size = w;
    }
    let d = src.pixels.dims();
    let area = (d.height * d.width) as f64;
    let r_max = ec.rates.rates().iter().map(|r| r.dilation()).max().unwrap_or(1) as f64;
    let mut csv = String::from("ratio,mean_score\n");
    let mut rows = Vec::new();
    for rho in args.ratio_grid.values() {
        if rho.max(1.0 / rho) > r_max {
            log::warn!("ratio {rho} beyond the supported {r_max}; dilation weights clamp");
        }
        let (h, w) = dims_for_ratio(area, rho);
        let pixels = resize_bilinear(&src.pixels, h, w)?;
        let rec = ImageRecord {
            pixels,
            ratio: compute_ratio(h, w)?,
            label: src.label,
        };
        let p = predict(&model, &[rec], args.weight_mode, &ec)?;
        let m = mean_score(&p[0]);
        let _ = writeln!(csv, "{rho:.4},{m:.6}");
        rows.push(json!({"ratio": rho, "mean_score": m}));
    }
    std::fs::write(ctx.out.join(SWEEP_CSV), &csv)?;
    ctx.manifest
        .arg("checkpoint", args.checkpoint.display())
        .arg("image", args.image.display())
        .arg(
            "ratio_grid",
            format!("{}:{}:{}", args.ratio_grid.start, args.ratio_grid.stop, args.ratio_grid.step),
        )
        .arg("weight_mode", args.weight_mode)
        .arg("warp", ec.warp_size)
        .format("sweep_csv", CSV_VERSION)
        .output(SWEEP_CSV);
    Ok(Output(if json { json!({ "rows": rows }).to_string() } else { csv }))
}

pub fn cost_net(ctx: &Ctx, args: &CostArgs) -> Result<CostNet, CliError> {
    Ok(match args.arch {
        Arch::Resnet50 => cost::resnet50(args.first_conv_dilated),
        Arch::Vgg16 => cost::vgg16(),
        Arch::Custom => CostNet::from_network(&ctx.cfg.network)?,
    })
}

pub fn cost_report(ctx: &mut Ctx, args: &CostArgs, json: bool) -> Result<Output, CliError> {
    if args.k_dilations.is_empty() || args.k_dilations.contains(&0) {
        return Err(CliError::Usage("--k-dilations needs positive counts".into()));
    }
    let net = cost_net(ctx, args)?;
    let hw = (args.input_size, args.input_size);
    let rows = cost::cost_table(&net, hw, &args.k_dilations)?;
    let grouping = cost::grouping_report(&net, hw, &RatioHistogram::photo_collection(), &GroupBoundaries::default())?;
    ctx.mkdir()?;
    std::fs::write(ctx.out.join(COST_CSV), cost::cost_table_csv(&rows)?)?;
    ctx.manifest
        .arg("arch", format!("{:?}", args.arch).to_lowercase())
        .arg("k_dilations", format!("{:?}", args.k_dilations))
        .arg("first_conv_dilated", args.first_conv_dilated)
        .arg("input_size", args.input_size)
        .format("cost_csv", CSV_VERSION)
        .output(COST_CSV);
    Ok(Output(if json {
        json!({ "rows": rows, "grouping": grouping }).to_string()
    } else {
        format!(
            "{}\ngrouped batches (97.8% of ratios within [1/2, 2]):\n{}",
            cost::cost_table_text(&rows),
            grouping.to_text()
        )
    }))
}
