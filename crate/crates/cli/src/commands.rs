//! Command implementations.

use std::io::Write;
use std::path::Path;

use helios_core::data::{
    build_dataset, filter_partition, read_data_csv, read_descriptors_csv, split, standardize_with,
    write_data_csv, write_descriptors_csv, Dataset, Partition, PipelineConfig, SampleWindow,
    SplitAssignment,
};
use helios_core::forecaster::{
    baseline_nmae, evaluate, forecast, load, run_ablation, save, train, ModelArtifact,
    TrainData, Variant,
};
use helios_core::metrics::MetricsReport;
use helios_core::net::gradcheck::{run_gradient_check, REL_TOLERANCE};
use helios_core::synth::generate_fleet;

use crate::config::{
    load_file_config, AblateArgs, Cli, Command, EvaluateArgs, FileConfig, ForecastArgs,
    GradcheckArgs, PartitionArg, SplitArgs, SynthArgs, TrainArgs,
};
use crate::AppError;

pub fn run(cli: Cli) -> Result<(), AppError> {
    let file_config = load_file_config(&cli.config)?;
    match &cli.command {
        Command::Synth(args) => synth(args, &file_config),
        Command::Split(args) => split_cmd(args, &file_config),
        Command::Train(args) => train_cmd(args, &file_config, cli.verbose),
        Command::Forecast(args) => forecast_cmd(args, &file_config),
        Command::Evaluate(args) => evaluate_cmd(args, &file_config),
        Command::Ablate(args) => ablate_cmd(args, &file_config, cli.verbose),
        Command::Gradcheck(args) => gradcheck_cmd(args),
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), AppError> {
    if !path.is_file() {
        return Err(AppError::validation(format!(
            "{what} file does not exist: {}",
            path.display()
        )));
    }
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(path)
        .map_err(|e| AppError::runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_out(path: &Path, bytes: &str) -> Result<(), AppError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| AppError::runtime(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, bytes)
        .map_err(|e| AppError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn synth(args: &SynthArgs, file: &FileConfig) -> Result<(), AppError> {
    let mut spec = match (&file.fleet, args.systems) {
        (Some(f), n) => {
            let mut f = f.clone();
            if let Some(n) = n {
                f.n_systems = n;
            }
            f
        }
        (None, n) => helios_core::synth::FleetSpec::default_for(n.unwrap_or(12)),
    };
    spec.seed = args.seed;
    let weather = file.weather.clone().unwrap_or_default();
    let days = args.days.unwrap_or(180);
    let start = chrono::NaiveDate::parse_from_str(&args.start_date, "%Y-%m-%d")
        .map_err(|e| AppError::validation(format!("--start-date: {e}")))?;

    let fleet = generate_fleet(&spec, &weather, start, days)
        .map_err(|e| AppError::validation(e.to_string()))?;
    ensure_dir(&args.out_dir)?;
    write_data_csv(&args.out_dir.join("data.csv"), &fleet.series)
        .map_err(|e| AppError::runtime(e))?;
    write_descriptors_csv(&args.out_dir.join("descriptors.csv"), &fleet.descriptors)
        .map_err(|e| AppError::runtime(e))?;
    let effects = serde_json::to_string_pretty(&fleet.effects)
        .map_err(|e| AppError::runtime(e))?;
    write_out(&args.out_dir.join("effects.json"), &effects)?;
    println!(
        "synth: {} systems x {} days -> {}",
        fleet.series.len(),
        days,
        args.out_dir.display()
    );
    Ok(())
}

fn load_dataset(
    data: &Path,
    descriptors: &Path,
    pipeline: &PipelineConfig,
) -> Result<Dataset, AppError> {
    require_file(data, "data")?;
    require_file(descriptors, "descriptor")?;
    let series = read_data_csv(data).map_err(|e| AppError::runtime(e))?;
    let descs = read_descriptors_csv(descriptors).map_err(|e| AppError::runtime(e))?;
    build_dataset(&series, &descs, pipeline).map_err(|e| AppError::runtime(e))
}

fn split_cmd(args: &SplitArgs, file: &FileConfig) -> Result<(), AppError> {
    let pipeline = file.pipeline.clone().unwrap_or_default();
    let dataset = load_dataset(&args.data, &args.descriptors, &pipeline)?;
    let assignment = split(
        &dataset.windows,
        pipeline.utc_offset_hours,
        &|ws| baseline_nmae(ws),
        args.seed,
    )
    .map_err(|e| AppError::runtime(e))?;
    let json = serde_json::to_string_pretty(&assignment).map_err(|e| AppError::runtime(e))?;
    write_out(&args.out, &json)?;
    println!(
        "split: {} train / {} val / {} test days (gap {:.4} pp, {} retries) -> {}",
        assignment.count(Partition::Train),
        assignment.count(Partition::Val),
        assignment.count(Partition::Test),
        assignment.balancing.gap * 100.0,
        assignment.balancing.retries_used,
        args.out.display()
    );
    Ok(())
}

fn read_split(path: &Path) -> Result<SplitAssignment, AppError> {
    require_file(path, "split")?;
    let bytes = std::fs::read_to_string(path)
        .map_err(|e| AppError::runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&bytes)
        .map_err(|e| AppError::runtime(format!("{}: {e}", path.display())))
}

struct Partitions<'a> {
    train: Vec<&'a SampleWindow>,
    val: Vec<&'a SampleWindow>,
    test: Vec<&'a SampleWindow>,
}

fn partition_windows<'a>(
    dataset: &'a Dataset,
    assignment: &SplitAssignment,
    utc_offset_hours: i32,
) -> Partitions<'a> {
    Partitions {
        train: filter_partition(&dataset.windows, assignment, Partition::Train, utc_offset_hours),
        val: filter_partition(&dataset.windows, assignment, Partition::Val, utc_offset_hours),
        test: filter_partition(&dataset.windows, assignment, Partition::Test, utc_offset_hours),
    }
}

fn train_cmd(args: &TrainArgs, file: &FileConfig, verbose: bool) -> Result<(), AppError> {
    let pipeline = file.pipeline.clone().unwrap_or_default();
    let mut config = args.model.apply(file.model.clone().unwrap_or_default());
    config.seed = args.seed;
    config.validate().map_err(|e| AppError::validation(e))?;

    let dataset = load_dataset(&args.data, &args.descriptors, &pipeline)?;
    let assignment = read_split(&args.split)?;
    let parts = partition_windows(&dataset, &assignment, pipeline.utc_offset_hours);

    let artifact = train(
        &config,
        &TrainData {
            train: &parts.train,
            val: &parts.val,
            vocabulary: &dataset.vocabulary,
            static_stats: &dataset.static_stats,
        },
    )
    .map_err(|e| AppError::runtime(e))?;

    ensure_dir(&args.out_dir)?;
    let model_path = args.out_dir.join("model.json");
    save(&artifact, &model_path).map_err(|e| AppError::runtime(e))?;
    let mut history = String::from("epoch,train_nll,val_nmae\n");
    for r in &artifact.history {
        history.push_str(&format!("{},{},{}\n", r.epoch, r.train_nll, r.val_nmae));
    }
    write_out(&args.out_dir.join("history.csv"), &history)?;
    if verbose {
        for r in &artifact.history {
            eprintln!("epoch {:>4}: train NLL {:.5}, val nMAE {:.5}", r.epoch, r.train_nll,
                r.val_nmae);
        }
    }
    println!(
        "train: {} windows, best epoch {} (val nMAE {:.5}) -> {}",
        parts.train.len(),
        artifact.best_epoch,
        artifact.history[artifact.best_epoch].val_nmae,
        model_path.display()
    );
    Ok(())
}

/// Re-standardizes window static features with the artifact's training
/// statistics, so systems outside the training fleet score correctly.
fn adapt_windows_to_artifact(
    dataset: &mut Dataset,
    descriptors_path: &Path,
    artifact: &ModelArtifact,
) -> Result<(), AppError> {
    let descs = read_descriptors_csv(descriptors_path).map_err(|e| AppError::runtime(e))?;
    let by_id: std::collections::HashMap<&str, &helios_core::data::PVSystemDescriptor> =
        descs.iter().map(|d| (d.system_id.as_str(), d)).collect();
    for w in &mut dataset.windows {
        if let Some(d) = by_id.get(w.system_id.as_str()) {
            w.static_features = standardize_with(d, &artifact.static_stats);
        }
    }
    Ok(())
}

fn forecast_cmd(args: &ForecastArgs, file: &FileConfig) -> Result<(), AppError> {
    require_file(&args.artifact, "artifact")?;
    if args.paths == 0 {
        return Err(AppError::validation("--paths must be >= 1"));
    }
    for &l in &args.levels {
        if !(l > 0.0 && l < 1.0) {
            return Err(AppError::validation(format!("--levels entry {l} outside (0,1)")));
        }
    }
    let pipeline = file.pipeline.clone().unwrap_or_default();
    let artifact = load(&args.artifact).map_err(|e| AppError::runtime(e))?;
    let mut dataset = load_dataset(&args.data, &args.descriptors, &pipeline)?;
    adapt_windows_to_artifact(&mut dataset, &args.descriptors, &artifact)?;

    let windows: Vec<&SampleWindow> = match (&args.split, args.partition) {
        (None, _) | (_, PartitionArg::All) => dataset.windows.iter().collect(),
        (Some(split_path), part) => {
            let assignment = read_split(split_path)?;
            let part = match part {
                PartitionArg::Train => Partition::Train,
                PartitionArg::Val => Partition::Val,
                PartitionArg::Test => Partition::Test,
                PartitionArg::All => unreachable!(),
            };
            filter_partition(&dataset.windows, &assignment, part, pipeline.utc_offset_hours)
        }
    };
    if windows.is_empty() {
        return Err(AppError::runtime("no windows to forecast"));
    }

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    let f = std::fs::File::create(&args.out)
        .map_err(|e| AppError::runtime(format!("{}: {e}", args.out.display())))?;
    let mut out = std::io::BufWriter::new(f);
    for w in &windows {
        let result =
            forecast(&artifact, w, args.paths, &args.levels).map_err(|e| AppError::runtime(e))?;
        let record = result.to_ndjson_record();
        writeln!(out, "{record}").map_err(|e| AppError::runtime(e))?;
    }
    out.flush().map_err(|e| AppError::runtime(e))?;
    println!("forecast: {} windows x {} paths -> {}", windows.len(), args.paths,
        args.out.display());
    Ok(())
}

fn write_metrics_outputs(
    out_dir: &Path,
    label: &str,
    report: &MetricsReport,
) -> Result<(), AppError> {
    let json = serde_json::to_string_pretty(report).map_err(|e| AppError::runtime(e))?;
    write_out(&out_dir.join("metrics.json"), &json)?;
    let mut csv = String::from(MetricsReport::csv_header());
    csv.push_str(&report.csv_row(label));
    write_out(&out_dir.join("metrics.csv"), &csv)?;
    let mut per_system = String::from("system_id,windows,nmae,baseline_nmae,improvement\n");
    for s in &report.per_system {
        per_system.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            s.system_id, s.windows, s.nmae, s.baseline_nmae, s.improvement
        ));
    }
    write_out(&out_dir.join("per_system.csv"), &per_system)?;
    Ok(())
}

fn evaluate_cmd(args: &EvaluateArgs, file: &FileConfig) -> Result<(), AppError> {
    require_file(&args.artifact, "artifact")?;
    let pipeline = file.pipeline.clone().unwrap_or_default();
    let artifact = load(&args.artifact).map_err(|e| AppError::runtime(e))?;
    let mut dataset = load_dataset(&args.data, &args.descriptors, &pipeline)?;
    adapt_windows_to_artifact(&mut dataset, &args.descriptors, &artifact)?;
    let assignment = read_split(&args.split)?;
    let windows = match args.partition {
        PartitionArg::All => dataset.windows.iter().collect(),
        PartitionArg::Train => {
            filter_partition(&dataset.windows, &assignment, Partition::Train,
                pipeline.utc_offset_hours)
        }
        PartitionArg::Val => filter_partition(&dataset.windows, &assignment, Partition::Val,
            pipeline.utc_offset_hours),
        PartitionArg::Test => filter_partition(&dataset.windows, &assignment, Partition::Test,
            pipeline.utc_offset_hours),
    };
    if windows.is_empty() {
        return Err(AppError::runtime("no windows in the requested partition"));
    }
    let report = evaluate(&artifact, &windows).map_err(|e| AppError::runtime(e))?;
    ensure_dir(&args.out_dir)?;
    write_metrics_outputs(&args.out_dir, "model", &report)?;
    println!(
        "evaluate: {} windows | nMAE {:.4} | nRMSE {:.4} | skill {:+.2}% | CRPS {:.1} W -> {}",
        report.windows,
        report.nmae,
        report.nrmse,
        report.skill * 100.0,
        report.crps_w,
        args.out_dir.display()
    );
    Ok(())
}

fn ablate_cmd(args: &AblateArgs, file: &FileConfig, verbose: bool) -> Result<(), AppError> {
    let pipeline = file.pipeline.clone().unwrap_or_default();
    let mut base = args.model.apply(file.model.clone().unwrap_or_default());
    base.seed = args.seed;

    let variants: Vec<Variant> = match &args.models {
        None => Variant::ALL.to_vec(),
        Some(ids) => {
            let mut out = Vec::new();
            for &id in ids {
                if !Variant::ALL.iter().any(|v| v.0 == id) {
                    return Err(AppError::validation(format!(
                        "--models: unknown variant id {id} (valid: 1,2,3,4,5,6,7,9)"
                    )));
                }
                out.push(Variant(id));
            }
            out
        }
    };
    if args.replicates == 0 {
        return Err(AppError::validation("--replicates must be >= 1"));
    }

    let dataset = load_dataset(&args.data, &args.descriptors, &pipeline)?;
    let assignment = read_split(&args.split)?;
    let parts = partition_windows(&dataset, &assignment, pipeline.utc_offset_hours);
    if verbose {
        eprintln!(
            "ablate: {} variants x {} replicates on {}/{}/{} windows",
            variants.len(),
            args.replicates,
            parts.train.len(),
            parts.val.len(),
            parts.test.len()
        );
    }

    let table = run_ablation(
        &base,
        &variants,
        args.replicates,
        &parts.train,
        &parts.val,
        &parts.test,
        &dataset.vocabulary,
        &dataset.static_stats,
    )
    .map_err(|e| AppError::runtime(e))?;

    ensure_dir(&args.out_dir)?;
    write_out(&args.out_dir.join("ablation.csv"), &table.to_csv())?;
    let json = serde_json::to_string_pretty(&table).map_err(|e| AppError::runtime(e))?;
    write_out(&args.out_dir.join("ablation.json"), &json)?;
    // flat plot-ready rows: one per variant
    let mut flat = String::from(MetricsReport::csv_header());
    for r in &table.rows {
        flat.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.label, r.nmae_median, r.nrmse_median, r.skill, r.crps_median
        ));
    }
    write_out(&args.out_dir.join("metrics.csv"), &flat)?;
    for r in &table.rows {
        println!(
            "model {:>2} {:<32} nMAE {:.4}±{:.4}  skill {:+.2}%",
            r.model_id,
            r.label,
            r.nmae_median,
            r.nmae_std,
            r.skill * 100.0
        );
    }
    println!("ablate: table -> {}", args.out_dir.join("ablation.csv").display());
    Ok(())
}

fn gradcheck_cmd(args: &GradcheckArgs) -> Result<(), AppError> {
    let report = run_gradient_check(args.seed).map_err(|e| AppError::runtime(e))?;
    for c in &report.cases {
        println!(
            "{:<16} {:>6} params  max rel err {:.3e}  {}",
            c.name,
            c.params_checked,
            c.max_rel_err,
            if c.max_rel_err < REL_TOLERANCE { "pass" } else { "FAIL" }
        );
    }
    println!("gradcheck: max relative error {:.3e} (tolerance {REL_TOLERANCE:.1e})",
        report.max_rel_err());
    if report.passed() {
        Ok(())
    } else {
        Err(AppError::runtime("gradient check failed"))
    }
}
