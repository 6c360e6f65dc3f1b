use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use streamfirst::datagen::{
    generate_traces, window_traces, LabeledTrace, LabeledWindow, SynthConfig,
};
use streamfirst::format::{load_model, load_profile, model_to_json, to_canonical_json, write_file};
use streamfirst::model::{build_network, forward_g, NetworkSpec};
use streamfirst::partition::{CostModelParams, DeviceProfile, ExecMode};
use streamfirst::power::{power_report, Pipeline, Scenario};
use streamfirst::sim::{replay_with, sweep_csv, sweep_window, ReplayOptions};
use streamfirst::stream::{PushResult, StreamState};
use streamfirst::trace::{read_labels, write_labels, LabelEntry, Trace};
use streamfirst::train::{gradient_check, init_weights, train_two_step, TrainConfig};

#[derive(Parser)]
#[command(
    name = "streamfirst",
    version,
    about = "Depth-first sensor inference simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct SeedArg {
    /// RNG seed for every random choice the command makes.
    #[arg(long, env = "STREAMFIRST_SEED", default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct Output {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(alias = "df")]
    DepthFirst,
    #[value(alias = "wf")]
    WidthFirst,
}

impl From<ModeArg> for ExecMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::DepthFirst => ExecMode::DepthFirst,
            ModeArg::WidthFirst => ExecMode::WidthFirst,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Ours,
    RegularWf,
    RegularDf,
}

impl From<PipelineArg> for Pipeline {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::Ours => Pipeline::Ours,
            PipelineArg::RegularWf => Pipeline::RegularWf,
            PipelineArg::RegularDf => Pipeline::RegularDf,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic worn/not-worn dataset: trace CSVs plus labels.csv.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = 3.0)]
        minutes_per_class: f64,
        #[arg(long, default_value_t = 12)]
        sessions: usize,
    },
    /// Train the reference network and its exit head on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Training report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        /// Exit-gate threshold stored in the model.
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
    },
    /// Replay a trace through the sensor/host pipeline.
    Run {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::DepthFirst)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = PipelineArg::Ours)]
        pipeline: PipelineArg,
        /// Overrides the profile's ODR.
        #[arg(long)]
        odr: Option<f64>,
        /// Overrides the model's exit threshold.
        #[arg(long)]
        threshold: Option<f32>,
        #[command(flatten)]
        output: Output,
    },
    /// Memory/timing sweep over window lengths given in seconds, e.g. `1:10`.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value = "1:10")]
        windows: String,
        #[command(flatten)]
        output: Output,
    },
    /// Average current, energy and battery life for a pipeline.
    Power {
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        wake_fraction: f64,
        #[arg(long, value_enum, default_value_t = PipelineArg::Ours)]
        pipeline: PipelineArg,
        #[arg(long, default_value_t = 3600.0)]
        duration_s: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Depth-first vs width-first agreement and a gradient check on a model.
    Check {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[command(flatten)]
        output: Output,
    },
}

fn profile_or_default(path: &Option<PathBuf>) -> Result<DeviceProfile> {
    match path {
        Some(p) => Ok(load_profile(p)?),
        None => Ok(DeviceProfile::default()),
    }
}

fn emit(output: &Output, value: &Value, csv: impl FnOnce() -> String) -> Result<()> {
    let text = match output.format {
        Format::Json => to_canonical_json(value),
        Format::Csv => csv(),
        Format::Table => table(value),
    };
    match &output.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// `key  value` lines for the scalar fields of an object.
fn table(value: &Value) -> String {
    let mut s = String::new();
    match value {
        Value::Object(map) => {
            let w = map.keys().map(String::len).max().unwrap_or(0);
            for (k, v) in map {
                match v {
                    Value::Array(a) => writeln!(s, "{k:<w$}  [{} entries]", a.len()),
                    Value::String(t) => writeln!(s, "{k:<w$}  {t}"),
                    other => writeln!(s, "{k:<w$}  {other}"),
                }
                .unwrap();
            }
        }
        Value::Array(rows) => {
            for r in rows {
                s.push_str(&table(r));
                s.push('\n');
            }
        }
        other => writeln!(s, "{other}").unwrap(),
    }
    s
}

fn gen_data(out: &Path, seed: u64, minutes: f64, sessions: usize) -> Result<()> {
    let cfg = SynthConfig {
        seed,
        minutes_per_class: minutes,
        sessions,
        ..SynthConfig::default()
    };
    let traces = generate_traces(&cfg)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut labels = Vec::with_capacity(traces.len());
    for t in &traces {
        write_file(&out.join(&t.name), &t.trace.to_csv_string())?;
        labels.push(LabelEntry {
            file: t.name.clone(),
            label: t.label,
        });
    }
    let mut buf = Vec::new();
    write_labels(&labels, &mut buf)?;
    write_file(&out.join("labels.csv"), std::str::from_utf8(&buf)?)?;
    println!("wrote {} traces to {}", traces.len(), out.display());
    Ok(())
}

fn read_dataset(dir: &Path, window_len: usize) -> Result<Vec<LabeledWindow>> {
    let labels_path = dir.join("labels.csv");
    let labels = read_labels(
        std::fs::File::open(&labels_path)
            .with_context(|| format!("opening {}", labels_path.display()))?,
    )
    .with_context(|| format!("reading {}", labels_path.display()))?;
    let mut traces = Vec::with_capacity(labels.len());
    for e in labels {
        let path = dir.join(&e.file);
        let file =
            std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let trace = Trace::from_csv(file).with_context(|| format!("reading {}", path.display()))?;
        traces.push(LabeledTrace {
            name: e.file,
            label: e.label,
            trace,
        });
    }
    Ok(window_traces(&traces, window_len))
}

#[allow(clippy::too_many_arguments)]
fn train(
    data: &Path,
    out: &Path,
    report: Option<&Path>,
    seed: u64,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    threshold: f32,
) -> Result<()> {
    let spec = NetworkSpec {
        ee_threshold: threshold,
        ..NetworkSpec::reference()
    };
    let windows = read_dataset(data, spec.window_len)?;
    if windows.is_empty() {
        bail!("no complete windows in {}", data.display());
    }
    let net = build_network(spec.clone(), init_weights(&spec, seed)?)?;
    let cfg = TrainConfig {
        epochs,
        learning_rate: lr,
        batch_size,
        seed,
        ..TrainConfig::default()
    };
    let (trained, rep) = train_two_step(&net, &windows, &cfg)?;
    write_file(out, &model_to_json(&trained))?;
    if let Some(p) = report {
        write_file(p, &to_canonical_json(&rep))?;
    }
    println!(
        "windows {}  f holdout acc {:.4}  ee holdout acc {:.4}  model {}",
        windows.len(),
        rep.end_to_end.holdout_accuracy.unwrap_or(f64::NAN),
        rep.exit.holdout_accuracy.unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

/// Parses `a:b` (inclusive) or a single integer number of seconds.
fn parse_windows(s: &str) -> Result<Vec<u32>> {
    let parse = |x: &str| -> Result<u32> {
        x.trim()
            .parse::<u32>()
            .with_context(|| format!("bad window seconds {x:?} in {s:?}"))
    };
    let (a, b) = match s.split_once(':') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let v = parse(s)?;
            (v, v)
        }
    };
    if a == 0 || b < a {
        bail!("window range {s:?} must be a:b with 1 <= a <= b");
    }
    Ok((a..=b).collect())
}

fn bench(model: &Path, profile: &Option<PathBuf>, windows: &str, output: &Output) -> Result<()> {
    let net = load_model(model)?;
    let profile = profile_or_default(profile)?;
    let seconds = parse_windows(windows)?;
    let lens: Vec<usize> = seconds
        .iter()
        .map(|&s| (s as f64 * profile.odr_hz).round() as usize)
        .collect();
    let rows = sweep_window(
        &net,
        &lens,
        &[ExecMode::DepthFirst, ExecMode::WidthFirst],
        &profile,
        &CostModelParams::reference(),
    )?;
    let value = serde_json::to_value(&rows)?;
    let output = Output {
        out: output.out.clone(),
        format: match (&output.out, output.format) {
            // A file named *.csv gets CSV unless asked otherwise.
            (Some(p), Format::Table) if p.extension().is_some_and(|e| e == "csv") => Format::Csv,
            (_, f) => f,
        },
    };
    emit(&output, &value, || sweep_csv(&rows))
}

#[allow(clippy::too_many_arguments)]
fn run(
    model: &Path,
    profile: &Option<PathBuf>,
    trace: &Path,
    mode: ExecMode,
    pipeline: Pipeline,
    odr: Option<f64>,
    threshold: Option<f32>,
    output: &Output,
) -> Result<()> {
    let mut net = load_model(model)?;
    if let Some(t) = threshold {
        let spec = NetworkSpec {
            ee_threshold: t,
            ..net.spec().clone()
        };
        net = build_network(spec, net.weights().clone())?;
    }
    let mut profile = profile_or_default(profile)?;
    if let Some(o) = odr {
        profile.odr_hz = o;
    }
    let file =
        std::fs::File::open(trace).with_context(|| format!("opening {}", trace.display()))?;
    let trace = Trace::from_csv(file).with_context(|| format!("reading {}", trace.display()))?;
    let opts = ReplayOptions {
        pipeline,
        ..ReplayOptions::default()
    };
    let report = replay_with(&trace, &net, mode, &profile, &opts)?;
    let value = serde_json::to_value(&report)?;
    emit(output, &value, || report.summary_csv())
}

fn power(
    profile: &Option<PathBuf>,
    p: f64,
    pipeline: Pipeline,
    duration_s: f64,
    output: &Output,
) -> Result<()> {
    let profile = profile_or_default(profile)?;
    let report = power_report(&Scenario::new(pipeline, p)?, &profile, duration_s);
    let value = serde_json::to_value(report)?;
    emit(output, &value, || {
        format!(
            "pipeline,wake_fraction,avg_current_ma,reduction_pct,energy_j,battery_life_h\n{},{},{},{},{},{}\n",
            report.pipeline.as_str(),
            report.wake_fraction,
            report.avg_current_ma,
            report.reduction_vs_regular_pct,
            report.energy_j,
            report.battery_life_h
        )
    })
}

const EQUIVALENCE_TOL: f64 = 1e-5;
const GRADIENT_TOL: f64 = 1e-3;

fn check(model: &Path, seed: u64, cases: usize, output: &Output) -> Result<()> {
    let net = load_model(model)?;
    let cfg = SynthConfig {
        seed,
        window_len: net.window_len(),
        minutes_per_class: (cases as f64 * net.window_len() as f64 / 2.0 / 60.0 / 26.0).max(0.1),
        ..SynthConfig::default()
    };
    let mut windows: Vec<LabeledWindow> = window_traces(&generate_traces(&cfg)?, net.window_len());
    windows.truncate(cases.max(1));
    let mut max_rel = 0.0f64;
    let mut stream = StreamState::new(&net, true);
    for w in &windows {
        let wf = forward_g(&net, &w.window)?;
        let mut df = None;
        for s in &w.window.samples {
            if let PushResult::WindowComplete(f) = stream.push(s)? {
                df = Some(f);
            }
        }
        let df = df.context("stream did not complete a window")?;
        for (a, b) in df.values.iter().zip(&wf.values) {
            let (a, b) = (*a as f64, *b as f64);
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
            max_rel = max_rel.max(rel);
        }
    }
    let batch: Vec<LabeledWindow> = windows.iter().take(4).cloned().collect();
    let grad = gradient_check(&net, &batch, 1e-4)?;
    let ok = max_rel <= EQUIVALENCE_TOL && grad.max_rel_error <= GRADIENT_TOL;
    let value = json!({
        "cases": windows.len(),
        "df_wf_max_rel_error": max_rel,
        "df_wf_tolerance": EQUIVALENCE_TOL,
        "grad_checked": grad.checked,
        "grad_skipped": grad.skipped,
        "grad_max_rel_error": grad.max_rel_error,
        "grad_tolerance": GRADIENT_TOL,
        "ok": ok,
    });
    emit(output, &value, || {
        format!(
            "cases,df_wf_max_rel_error,grad_max_rel_error,grad_checked,grad_skipped,ok\n{},{},{},{},{},{}\n",
            windows.len(),
            max_rel,
            grad.max_rel_error,
            grad.checked,
            grad.skipped,
            ok
        )
    })?;
    if !ok {
        bail!(
            "check failed: df/wf {max_rel:e}, gradient {:e}",
            grad.max_rel_error
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            out,
            seed,
            minutes_per_class,
            sessions,
        } => gen_data(&out, seed.seed, minutes_per_class, sessions),
        Command::Train {
            data,
            out,
            report,
            seed,
            epochs,
            lr,
            batch_size,
            threshold,
        } => train(
            &data,
            &out,
            report.as_deref(),
            seed.seed,
            epochs,
            lr,
            batch_size,
            threshold,
        ),
        Command::Run {
            model,
            profile,
            trace,
            mode,
            pipeline,
            odr,
            threshold,
            output,
        } => run(
            &model,
            &profile,
            &trace,
            mode.into(),
            pipeline.into(),
            odr,
            threshold,
            &output,
        ),
        Command::Bench {
            model,
            profile,
            windows,
            output,
        } => bench(&model, &profile, &windows, &output),
        Command::Power {
            profile,
            wake_fraction,
            pipeline,
            duration_s,
            output,
        } => power(
            &profile,
            wake_fraction,
            pipeline.into(),
            duration_s,
            &output,
        ),
        Command::Check {
            model,
            seed,
            cases,
            output,
        } => check(&model, seed.seed, cases, &output),
    }
}

/// One JSON object on stderr: `{"error": kind, "message": text}`.
fn error_line(e: &anyhow::Error) -> String {
    let kind = e
        .chain()
        .find_map(|c| c.downcast_ref::<streamfirst::Error>())
        .map_or("other", streamfirst::Error::kind);
    let message = e
        .chain()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(": ");
    json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{}", e.render());
            eprintln!(
                "{}",
                json!({ "error": "usage", "message": e.kind().to_string() })
            );
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
