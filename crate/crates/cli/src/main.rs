use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use facewarp::archive::{Archive, ArrayData};
use facewarp::face_model::{lbs, procedural_head, FaceParams, HeadAsset};
use facewarp::guidance::{geom_disp_field, nmfc, posed_neural_codes, GuidanceMap, MapKind, NeuralCodes, CODE_DIM};
use facewarp::pipeline::run::{read_metrics, METRICS_FILE};
use facewarp::pipeline::{
    edit, evaluate, generate_dataset, reenact, Dataset, EvalConfig, Image, Method, Protocol, ReenactMode, Reenactment,
    RunOptions, Sweep,
};
use facewarp::training::{Config, Trainer};
use rand::SeedableRng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "facewarp", version, about = "Geometry-guided face animation toolkit")]
struct Cli {
    /// TOML run configuration. Defaults are used for anything it leaves out.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set train.iterations=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Head asset file; the built-in procedural head if omitted.
    #[arg(long, global = true)]
    asset: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic multi-identity dataset described by `[data]`.
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Rasterize one guidance map for a (source, driving) parameter pair.
    RenderGuidance(RenderGuidanceArgs),
    /// Train a generator. Without `--data` the dataset is generated in memory.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint; its configuration replaces `--config`.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many iterations in total.
        #[arg(long)]
        stop_at: Option<usize>,
        /// Print losses every N iterations (0 disables).
        #[arg(long, default_value_t = 50)]
        log_every: usize,
    },
    /// Reenact a source frame with one or more driving parameter sets.
    Animate(AnimateArgs),
    /// Sweep parameters of the source frame, e.g. `--sweep jaw=0:0.4:5`.
    Edit(EditArgs),
    /// Score a checkpoint or a baseline on held-out identities.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    GeomDisp,
    NeuralCodes,
    Nmfc,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Same,
    Cross,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Copy,
    GroundTruth,
}

/// A frame given either as files or as `identity:frame` in a dataset.
#[derive(Args)]
struct SourceArgs {
    /// Dataset directory for `--source-frame` / `--driving-frame`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, conflicts_with = "source_params")]
    source_frame: Option<String>,
    #[arg(long)]
    source_params: Option<PathBuf>,
    /// Source image, required with `--source-params`.
    #[arg(long)]
    source_image: Option<PathBuf>,
}

#[derive(Args)]
struct RenderGuidanceArgs {
    #[arg(long, value_enum)]
    kind: MapArg,
    #[arg(long)]
    source_params: Option<PathBuf>,
    #[arg(long)]
    driving_params: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, conflicts_with = "source_params")]
    source_frame: Option<String>,
    #[arg(long, conflicts_with = "driving_params")]
    driving_frame: Option<String>,
    /// Output width and height in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Take learned codes from this checkpoint instead of a fresh draw.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output prefix; writes `<out>.fwa` and `<out>.png`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnimateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    source: SourceArgs,
    /// Driving parameter files, one output frame each.
    #[arg(long)]
    driving_params: Vec<PathBuf>,
    /// Driving frames as `identity:frame`, one output frame each.
    #[arg(long)]
    driving_frame: Vec<String>,
    #[arg(long, value_enum, default_value = "same")]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long = "sweep")]
    sweeps: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "baseline")]
    checkpoint: Option<PathBuf>,
    /// Score a baseline instead of a checkpoint.
    #[arg(long, value_enum, conflicts_with = "checkpoint")]
    baseline: Option<BaselineArg>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "same")]
    protocol: ModeArg,
    #[arg(long)]
    pairs_per_identity: Option<usize>,
    #[arg(long)]
    eval_seed: Option<u64>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set_key(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| anyhow!("empty key in override"))?;
    let mut table = root;
    for p in parts {
        table = table
            .entry(p)
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("{p} is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn load_config(cli: &Cli) -> Result<Config> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut table: toml::Table = text.parse().context("parsing configuration")?;
    for o in &cli.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("override {o:?} is not KEY=VALUE"))?;
        set_key(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    if let Some(s) = cli.seed {
        table.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    Ok(Config::from_toml(&toml::to_string(&table)?)?)
}

fn load_asset(path: Option<&Path>) -> Result<HeadAsset> {
    match path {
        Some(p) => Ok(HeadAsset::load(p)?),
        None => Ok(procedural_head()),
    }
}

fn read_params(path: &Path) -> Result<FaceParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let p: FaceParams = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    p.validate()?;
    Ok(p)
}

fn parse_frame(spec: &str) -> Result<(usize, usize)> {
    let (a, b) = spec.split_once(':').ok_or_else(|| anyhow!("frame {spec:?} is not IDENTITY:FRAME"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn dataset_frame<'a>(ds: Option<&'a Dataset>, spec: &str) -> Result<(&'a FaceParams, &'a Image)> {
    let ds = ds.ok_or_else(|| anyhow!("frame {spec:?} needs --data"))?;
    let (id, f) = parse_frame(spec)?;
    let rec = ds.manifest.identities.get(id).ok_or_else(|| anyhow!("no identity {id}"))?;
    if f >= rec.frames.len() {
        bail!("identity {id} has {} frames", rec.frames.len());
    }
    let (r, img) = ds.frame(id, f);
    Ok((&r.params, img))
}

fn load_source(args: &SourceArgs, ds: Option<&Dataset>) -> Result<(FaceParams, Image)> {
    match (&args.source_frame, &args.source_params) {
        (Some(spec), _) => dataset_frame(ds, spec).map(|(p, i)| (p.clone(), i.clone())),
        (None, Some(p)) => {
            let img = args.source_image.as_ref().ok_or_else(|| anyhow!("--source-params needs --source-image"))?;
            Ok((read_params(p)?, Image::load_png(img)?))
        }
        (None, None) => bail!("give --source-frame or --source-params"),
    }
}

fn load_dataset(dir: Option<&Path>) -> Result<Option<Dataset>> {
    dir.map(|d| Dataset::load(d).with_context(|| format!("loading dataset {}", d.display()))).transpose()
}

fn save_rgb(path: &Path, width: usize, height: usize, rgb: Vec<u8>) -> Result<()> {
    let img = image::RgbImage::from_raw(width as u32, height as u32, rgb).ok_or_else(|| anyhow!("bad image buffer"))?;
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

fn save_map(map: &GuidanceMap, prefix: &Path) -> Result<()> {
    let kind = match map.kind {
        MapKind::GeomDisp => "geom-disp",
        MapKind::NeuralCodes => "neural-codes",
        MapKind::Nmfc => "nmfc",
    };
    let mut ar = Archive::new("guidance-map", serde_json::json!({ "kind": kind }));
    ar.push_f32("image", vec![map.channels, map.height, map.width], map.image.iter().map(|&v| v as f32).collect())?;
    ar.push(
        "coverage",
        vec![map.height, map.width],
        ArrayData::U32(map.coverage.iter().map(|&c| c as u32).collect()),
    )?;
    ar.save(&prefix.with_extension("fwa"))?;
    save_rgb(&prefix.with_extension("png"), map.width, map.height, map.to_rgb8())
}

fn displacement_preview(r: &Reenactment) -> GuidanceMap {
    let (w, h) = (r.image.width, r.image.height);
    GuidanceMap {
        kind: MapKind::GeomDisp,
        channels: 2,
        width: w,
        height: h,
        image: r.displacement.iter().map(|&v| v as f64).collect(),
        coverage: vec![true; w * h],
    }
}

fn write_outputs(out: &Path, results: &[Reenactment]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for (k, r) in results.iter().enumerate() {
        if !r.image.data.iter().all(|v| v.is_finite()) {
            return Err(facewarp::Error::Invariant(format!("output frame {k} is not finite")).into());
        }
        r.image.save_png(&out.join(format!("frame_{k:03}.png")))?;
        let d = displacement_preview(r);
        save_rgb(&out.join(format!("displacement_{k:03}.png")), d.width, d.height, d.to_rgb8())?;
        std::fs::write(out.join(format!("params_{k:03}.json")), serde_json::to_string_pretty(&r.target_params)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let asset = load_asset(cli.asset.as_deref())?;
    match &cli.command {
        Command::GenData { out } => {
            let cfg = load_config(&cli)?;
            let ds = generate_dataset(&asset, &cfg.data)?;
            ds.save(out)?;
            eprintln!("wrote {} identities x {} frames to {}", cfg.data.identities, cfg.data.frames_per_identity, out.display());
        }
        Command::RenderGuidance(a) => {
            let cfg = load_config(&cli)?;
            let ds = load_dataset(a.data.as_deref())?;
            let params = |file: &Option<PathBuf>, frame: &Option<String>, what: &str| -> Result<FaceParams> {
                match (file, frame) {
                    (Some(p), _) => read_params(p),
                    (None, Some(s)) => dataset_frame(ds.as_ref(), s).map(|(p, _)| p.clone()),
                    (None, None) => bail!("give --{what}-params or --{what}-frame"),
                }
            };
            let ps = params(&a.source_params, &a.source_frame, "source")?;
            let pd = params(&a.driving_params, &a.driving_frame, "driving")?;
            let (ms, md) = (lbs(&asset, &ps)?, lbs(&asset, &pd)?);
            let n = a.size;
            let map = match a.kind {
                MapArg::GeomDisp => geom_disp_field(&asset.faces, &ms, &md, ps.camera, pd.camera, n, n)?,
                MapArg::Nmfc => nmfc(&asset, &md, pd.camera, n, n)?,
                MapArg::NeuralCodes => {
                    let codes = match &a.checkpoint {
                        Some(ck) => Trainer::load(ck)?
                            .model
                            .neural_codes()
                            .ok_or_else(|| anyhow!("checkpoint has no latent codes"))?,
                        None => NeuralCodes::random(asset.num_vertices(), CODE_DIM, &mut rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed)),
                    };
                    posed_neural_codes(&codes, &asset.faces, &md, pd.camera, n, n)?
                }
            };
            save_map(&map, &a.out)?;
        }
        Command::Train {
            data,
            out,
            resume,
            stop_at,
            log_every,
        } => {
            let mut trainer = match resume {
                Some(ck) => Trainer::load(ck)?,
                None => Trainer::new(load_config(&cli)?, asset.num_vertices())?,
            };
            let ds = match data {
                Some(d) => Dataset::load(d)?,
                None => generate_dataset(&asset, &trainer.config.data)?,
            };
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("config.toml"), trainer.config.to_toml())?;
            let opts = RunOptions {
                out_dir: Some(out.clone()),
                stop_at: *stop_at,
            };
            let every = *log_every;
            let mut it = trainer.iteration;
            facewarp::pipeline::train(&mut trainer, &ds, &asset, &opts, |r| {
                it += 1;
                if every > 0 && it % every == 0 {
                    eprintln!(
                        "iter {it}: g {:.4} perceptual {:.4} warp {:.4} d {:.4}",
                        r.g_total, r.perceptual, r.warp, r.d_loss
                    );
                }
            })?;
            let n = read_metrics(&out.join(METRICS_FILE))?.len();
            eprintln!("finished at iteration {}, {n} logged", trainer.iteration);
        }
        Command::Animate(a) => {
            let trainer = Trainer::load(&a.checkpoint)?;
            let ds = load_dataset(a.source.data.as_deref())?;
            let (ps, img) = load_source(&a.source, ds.as_ref())?;
            let mut driving = Vec::new();
            for p in &a.driving_params {
                driving.push(read_params(p)?);
            }
            for s in &a.driving_frame {
                driving.push(dataset_frame(ds.as_ref(), s)?.0.clone());
            }
            if driving.is_empty() {
                bail!("give at least one --driving-params or --driving-frame");
            }
            let mode = match a.mode {
                ModeArg::Same => ReenactMode::Same,
                ModeArg::Cross => ReenactMode::Cross,
            };
            let results = driving
                .iter()
                .map(|pd| reenact(&trainer.model, &asset, &img, &ps, pd, mode))
                .collect::<facewarp::Result<Vec<_>>>()?;
            write_outputs(&a.out, &results)?;
        }
        Command::Edit(a) => {
            let trainer = Trainer::load(&a.checkpoint)?;
            let ds = load_dataset(a.source.data.as_deref())?;
            let (ps, img) = load_source(&a.source, ds.as_ref())?;
            let sweeps = a.sweeps.iter().map(|s| s.parse()).collect::<facewarp::Result<Vec<Sweep>>>()?;
            let results = edit(&trainer.model, &asset, &img, &ps, &sweeps)?;
            write_outputs(&a.out, &results)?;
        }
        Command::Eval(a) => {
            let trainer = a.checkpoint.as_deref().map(Trainer::load).transpose()?;
            let ds = match (&a.data, &trainer) {
                (Some(d), _) => Dataset::load(d)?,
                (None, Some(t)) => generate_dataset(&asset, &t.config.data)?,
                (None, None) => generate_dataset(&asset, &load_config(&cli)?.data)?,
            };
            let method = match (&trainer, a.baseline) {
                (Some(t), _) => Method::Model(&t.model),
                (None, Some(BaselineArg::GroundTruth)) => Method::GroundTruth,
                (None, _) => Method::CopySource,
            };
            let mut ec = EvalConfig::default();
            ec.pairs_per_identity = a.pairs_per_identity.unwrap_or(ec.pairs_per_identity);
            ec.seed = a.eval_seed.unwrap_or(ec.seed);
            let protocol = match a.protocol {
                ModeArg::Same => Protocol::Same,
                ModeArg::Cross => Protocol::Cross,
            };
            let report = evaluate(method, &asset, &ds, protocol, &ec)?;
            let text = report.to_text();
            print!("{text}");
            if let Some(p) = &a.out {
                std::fs::write(p, &text)?;
            }
            if !report.is_finite() {
                return Err(facewarp::Error::Invariant("evaluation produced non-finite metrics".into()).into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Invariant violations get their own code so scripts can tell
            // them apart from bad arguments or missing files.
            let invariant = matches!(
                e.downcast_ref::<facewarp::Error>(),
                Some(facewarp::Error::Invariant(_) | facewarp::Error::NonFiniteLoss { .. })
            );
            ExitCode::from(if invariant { 3 } else { 1 })
        }
    }
}
