//! Command-line front end: scenario simulation, detection, localization,
//! dataset/training/classification, Monte-Carlo campaigns and report
//! conversion.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use radar2_core::classify::{
    generate_dataset, train_model, ClassifierModel, DatasetConfig, TrainConfig,
};
use radar2_core::detection::DetectionReport;
use radar2_core::frontend::{if_power_series, mix_and_filter, ProbeSignal};
use radar2_core::io;
use radar2_core::localize::{
    multi_device_localize, triangulate, AnchorBearing, LocalizationResult, MultiDeviceOptions,
};
use radar2_core::montecarlo::monte_carlo;
use radar2_core::pipeline::{run_pipeline, trial_seed};
use radar2_core::report::{emit_report, ReportFormat};
use radar2_core::scenario::{load_scenario, save_scenario, ScenarioConfig};
use radar2_core::Scalar;

/// Exit status when a spy radar was detected.
const EXIT_SPY_RADAR: u8 = 10;
/// Exit status for any error (the detect contract reserves > 63).
const EXIT_ERROR: u8 = 65;

#[derive(Parser)]
#[command(
    name = "radar2",
    about = "Passive mmWave emitter detection, classification and localization",
    version
)]
struct Cli {
    /// Master seed; overrides the scenario file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Report format: structured | csv.
    #[arg(long, global = true, default_value = "structured")]
    format: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one probe capture and export the IF record.
    Simulate(SimulateArgs),
    /// Run the detection pass; exits 0 (clear) or 10 (spy radar present).
    Detect(DetectArgs),
    /// Triangulate emitter positions from a bearing file.
    Localize(LocalizeArgs),
    /// Generate a labeled synthetic dataset.
    Dataset(DatasetArgs),
    /// Train the waveform classifier on a dataset file.
    Train(TrainArgs),
    /// Classify features from a dataset file with a trained model.
    Classify(ClassifyArgs),
    /// Run the scenario's Monte-Carlo campaign and emit the report.
    Montecarlo,
    /// Re-emit an existing report in another format.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Probe to capture with: "sweep" or "tone:<GHz>".
    #[arg(long, default_value = "sweep")]
    probe: String,
    /// Anchor index the detector sits at.
    #[arg(long, default_value_t = 0)]
    anchor: usize,
}

#[derive(Args)]
struct DetectArgs {
    /// Trained classifier model file.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct LocalizeArgs {
    /// Bearing file: `anchor_x, anchor_y, angle_deg` rows.
    #[arg(long)]
    bearings: PathBuf,
    /// Multi-device assignment search instead of single-target triangulation.
    #[arg(long)]
    multi: bool,
    /// Combination budget for the multi-device search.
    #[arg(long, default_value_t = 1_000_000)]
    cap: usize,
}

#[derive(Args)]
struct DatasetArgs {
    /// Features per waveform class.
    #[arg(long, default_value_t = 400)]
    per_class: usize,
    /// Lower SNR bound (dB).
    #[arg(long, default_value_t = 5.0)]
    snr_min: f64,
    /// Upper SNR bound (dB).
    #[arg(long, default_value_t = 25.0)]
    snr_max: f64,
    /// Equalize the binary label counts.
    #[arg(long)]
    balanced: bool,
    /// Output file name (within --out).
    #[arg(long, default_value = "dataset.r2ds")]
    name: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file produced by `dataset`.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 14)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    /// Held-out fraction for validation.
    #[arg(long, default_value_t = 0.2)]
    val_split: f64,
    /// Parallel batch gradients (faster, not bitwise reproducible).
    #[arg(long)]
    parallel: bool,
    /// Output model file name (within --out).
    #[arg(long, default_value = "model.r2nn")]
    name: String,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Trained classifier model file.
    #[arg(long)]
    model: PathBuf,
    /// Dataset file with features to classify.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Existing structured report (JSON).
    #[arg(long)]
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    let format: ReportFormat = cli
        .format
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;

    match &cli.command {
        Command::Simulate(args) => simulate(&cli, args),
        Command::Detect(args) => detect(&cli, args),
        Command::Localize(args) => localize(&cli, args),
        Command::Dataset(args) => dataset(&cli, args),
        Command::Train(args) => train(&cli, args),
        Command::Classify(args) => classify(&cli, args),
        Command::Montecarlo => montecarlo(&cli, format),
        Command::Report(args) => reemit(&cli, args, format),
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let path = cli
        .config
        .as_ref()
        .context("this command needs --config <scenario.json>")?;
    let (mut config, warnings) = load_scenario(path)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<ExitCode> {
    let config = load_config(cli)?;
    let probe: ProbeSignal<Scalar> = if args.probe == "sweep" {
        config.detection.sweep_probe()
    } else if let Some(ghz) = args.probe.strip_prefix("tone:") {
        let freq: f64 = ghz
            .parse()
            .with_context(|| format!("bad tone frequency {ghz:?} (GHz)"))?;
        ProbeSignal::single_tone(freq * 1e9)
    } else {
        bail!("--probe must be \"sweep\" or \"tone:<GHz>\"");
    };

    let scene = radar2_core::pipeline::scene_at_anchor(&config, args.anchor, trial_seed(config.seed, 0))?;
    let mut receiver = config.receiver.clone();
    receiver.frames_per_detection = config.detection.frames_per_detection;
    let record = mix_and_filter(&scene, &probe, &receiver, trial_seed(config.seed, 1))?;

    let data = cli.out.join("if_record.iq");
    let sidecar = cli.out.join("if_record.json");
    io::export_if_record(&record, &data, &sidecar)?;
    let power = cli.out.join("if_power.csv");
    io::export_power_csv(&if_power_series(&record), &power)?;
    let canonical = cli.out.join("scenario.canonical.json");
    save_scenario(&config, &canonical)?;
    println!(
        "wrote {} ({} complex samples), {}, {}",
        data.display(),
        record.samples.len(),
        sidecar.display(),
        power.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn detect(cli: &Cli, args: &DetectArgs) -> Result<ExitCode> {
    let config = load_config(cli)?;
    let model = io::read_model(&args.model)
        .with_context(|| format!("cannot read model {}", args.model.display()))?;
    let outcome = run_pipeline(&config, Some(&model), trial_seed(config.seed, 0))?;
    let report: &DetectionReport<Scalar> = outcome
        .detection
        .as_ref()
        .context("detection did not run (scenario is in synthetic-bearing mode)")?;

    let path = cli.out.join("detection.json");
    write_json(&path, report)?;
    if let Some(localization) = &outcome.localization {
        let loc_path = cli.out.join("localization.json");
        write_json(&loc_path, &localization_view(localization))?;
    }
    println!(
        "mmwave_detected={} spy_radar_present={} spy_radar_count={} -> {}",
        report.mmwave_detected,
        report.spy_radar_present,
        report.spy_radar_count,
        path.display()
    );
    Ok(if report.spy_radar_present {
        ExitCode::from(EXIT_SPY_RADAR)
    } else {
        ExitCode::SUCCESS
    })
}

fn localize(cli: &Cli, args: &LocalizeArgs) -> Result<ExitCode> {
    let anchors = io::read_bearing_file(&args.bearings)
        .with_context(|| format!("cannot read bearings {}", args.bearings.display()))?;
    let result: LocalizationResult<Scalar> = if args.multi {
        let options = MultiDeviceOptions {
            combination_cap: args.cap,
            ..MultiDeviceOptions::default()
        };
        multi_device_localize(&anchors, &options)?
    } else {
        let lines: Vec<AnchorBearing<Scalar>> = anchors
            .iter()
            .filter_map(|a| {
                a.bearings
                    .first()
                    .map(|b| AnchorBearing::new(a.x, a.y, b.angle_deg))
            })
            .collect();
        let position = triangulate(&lines)?;
        LocalizationResult {
            positions: vec![position],
            device_count: 1,
        }
    };
    let path = cli.out.join("localization.json");
    write_json(&path, &localization_view(&result))?;
    for p in &result.positions {
        println!("position ({:.4}, {:.4}) residual {:.6e}", p.x, p.y, p.residual);
    }
    Ok(ExitCode::SUCCESS)
}

fn dataset(cli: &Cli, args: &DatasetArgs) -> Result<ExitCode> {
    // Band and receiver come from the scenario when given, else defaults.
    let mut cfg = DatasetConfig::<Scalar> {
        per_class: args.per_class,
        snr_db_range: (args.snr_min, args.snr_max),
        balance_binary: args.balanced,
        ..DatasetConfig::default()
    };
    let mut seed = 1;
    if let Some(path) = &cli.config {
        let (scenario, _) = load_scenario(path)?;
        cfg.band_min_hz = scenario.band.min_hz;
        cfg.band_max_hz = scenario.band.max_hz;
        cfg.receiver = scenario.receiver.clone();
        cfg.receiver.frames_per_detection = 1;
        seed = scenario.seed;
    }
    if let Some(s) = cli.seed {
        seed = s;
    }
    let ds = generate_dataset(&cfg, seed)?;
    let path = cli.out.join(&args.name);
    io::write_dataset(&ds.features, &path)?;
    let (radar, wigig) = ds.label_counts();
    println!(
        "wrote {} ({} features: {radar} radar / {wigig} wigig, hash {:016x})",
        path.display(),
        ds.features.len(),
        ds.hash
    );
    Ok(ExitCode::SUCCESS)
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<ExitCode> {
    let features = io::read_dataset(&args.dataset)
        .with_context(|| format!("cannot read dataset {}", args.dataset.display()))?;
    if features.is_empty() {
        bail!("dataset is empty");
    }
    let seed = cli.seed.unwrap_or(1);

    // Deterministic shuffled split.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let val_len = ((features.len() as f64) * args.val_split).round() as usize;
    let views: Vec<(&[f64], radar2_core::classify::SignalLabel)> = order
        .iter()
        .map(|&i| {
            (
                features[i].bins.as_slice(),
                features[i].label.expect("dataset features are labeled"),
            )
        })
        .collect();
    let (val, train_set) = views.split_at(val_len);

    let mut model = ClassifierModel::<Scalar>::new(seed);
    let tc = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        shuffle_seed: seed ^ 0x7ea1,
        parallel: args.parallel,
        ..TrainConfig::default()
    };
    let curve = train_model(&mut model, train_set, val, &tc)?;
    model.metadata.dataset_hash = radar2_core::classify::dataset::dataset_hash(&features);

    let path = cli.out.join(&args.name);
    io::write_model(&model, &path)?;
    let curve_path = cli.out.join("training_curve.json");
    write_json(&curve_path, &curve)?;
    println!(
        "wrote {} (train acc {:.4}, val acc {:.4})",
        path.display(),
        model.metadata.final_train_accuracy,
        model.metadata.final_validation_accuracy
    );
    Ok(ExitCode::SUCCESS)
}

fn classify(cli: &Cli, args: &ClassifyArgs) -> Result<ExitCode> {
    let model = io::read_model(&args.model)
        .with_context(|| format!("cannot read model {}", args.model.display()))?;
    let features = io::read_dataset(&args.input)
        .with_context(|| format!("cannot read dataset {}", args.input.display()))?;
    let mut results = Vec::new();
    let mut correct = 0usize;
    let mut labeled = 0usize;
    for feature in &features {
        let c = model.classify(feature)?;
        if let Some(truth) = feature.label {
            labeled += 1;
            if truth == c.label {
                correct += 1;
            }
        }
        results.push(c);
    }
    let path = cli.out.join("classifications.json");
    write_json(&path, &results)?;
    if labeled > 0 {
        println!(
            "classified {} features -> {} ({} of {labeled} labeled match)",
            features.len(),
            path.display(),
            correct
        );
    } else {
        println!("classified {} features -> {}", features.len(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn montecarlo(cli: &Cli, format: ReportFormat) -> Result<ExitCode> {
    let config = load_config(cli)?;
    let model = match config.localization.mode {
        radar2_core::scenario::LocalizationMode::SyntheticBearings => None,
        radar2_core::scenario::LocalizationMode::Music => {
            let path = cli.out.join("model.r2nn");
            Some(io::read_model(&path).with_context(|| {
                format!(
                    "full-pipeline campaigns need a trained model at {} (run `radar2 train`)",
                    path.display()
                )
            })?)
        }
    };
    let report = monte_carlo(&config, model.as_ref())?;
    let paths = emit_report(&report, format, &cli.out)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    println!(
        "trials {} detection_rate {:.4} false_alarm_rate {:.4}",
        report.trials, report.aggregate.detection_rate, report.aggregate.false_alarm_rate
    );
    Ok(ExitCode::SUCCESS)
}

fn reemit(cli: &Cli, args: &ReportArgs, format: ReportFormat) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read report {}", args.input.display()))?;
    let report: radar2_core::montecarlo::RunReport = serde_json::from_str(&text)?;
    if report.schema != radar2_core::montecarlo::REPORT_SCHEMA {
        bail!(
            "unsupported report schema {:?} (expected {:?})",
            report.schema,
            radar2_core::montecarlo::REPORT_SCHEMA
        );
    }
    let paths = emit_report(&report, format, &cli.out)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// Stable JSON view of a localization result.
fn localization_view(result: &LocalizationResult<Scalar>) -> serde_json::Value {
    serde_json::json!({
        "device_count": result.device_count,
        "positions": result.positions.iter().map(|p| serde_json::json!({
            "x": p.x,
            "y": p.y,
            "residual": p.residual,
            "along_track": p.along_track,
            "singular_values": p.singular_values,
            "condition_ok": p.condition_ok,
            "bearings_used": p.bearings_used,
        })).collect::<Vec<_>>(),
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
