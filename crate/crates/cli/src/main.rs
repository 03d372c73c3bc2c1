//! `iic` — surprisal-controlled symbolic music generation.
//!
//! Subcommands:
//! - `train`: build the Witten-Bell Markov critic from a MIDI corpus and
//!   store it with calibrated kernel weights and default target levels.
//! - `generate`: beam-search a continuation whose IIC tracks a target curve;
//!   writes MIDI, the realized curve CSV, and a reproducibility manifest.
//! - `analyze`: correlate IIC-based segment surprisal with tonal tension,
//!   note density, and (given measure annotations) IOI histogram entropy.
//! - `curve`: render a canonical target shape, or extract the IIC curve of
//!   a window of real music, as CSV.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 search failure.
//! `IIC_THREADS` caps worker threads for candidate expansion.

// Validation guards use `!(x > 0.0)` so NaN inputs fail them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod svg;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use iic_core::analysis::{
    correlation_series, correlation_series_per_piece, measure_segments, onset_segments,
    CorrelationPoint, MeasureSpan, SegmentMetric, SpiralConfig,
};
use iic_core::critic::{token_ic, MarkovCritic};
use iic_core::curves::{extract_curve, make_shape, ShapeKind, ShapeSpec};
use iic_core::iic::{
    calibrate_type_weights, grid_len, iic_from_events, localized_events, Curve, KernelConfig,
};
use iic_core::midi::{load_midi, save_midi, NoteList, DEFAULT_TEMPO_US};
use iic_core::search::{generate, SearchError, SearchParams};
use iic_core::tokenizer::{tokenize, TokenSeq};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "iic",
    version,
    about = "Generate and analyze symbolic music whose surprisal tracks a target curve"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the default Markov critic on a directory of MIDI files.
    Train(TrainArgs),
    /// Generate music whose IIC follows a target curve.
    Generate(GenerateArgs),
    /// Correlate complexity metrics with segment surprisal over a corpus.
    Analyze(AnalyzeArgs),
    /// Write a target shape or extract an IIC curve as CSV.
    Curve(CurveArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of .mid/.midi files.
    #[arg(long)]
    corpus: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Longest context in tokens (8 = two note groups).
    #[arg(long, default_value_t = 8)]
    max_order: usize,
    #[command(flatten)]
    kernel: KernelFlags,
}

#[derive(Args)]
struct GenerateArgs {
    /// Trained model file (used as both generator and critic).
    #[arg(long)]
    model: PathBuf,
    /// Prompt MIDI providing the initial context (optional).
    #[arg(long)]
    prompt: Option<PathBuf>,
    /// Canonical target shape.
    #[arg(long, value_enum)]
    target_shape: Option<ShapeArg>,
    /// Target curve CSV (alternative to --target-shape).
    #[arg(long, conflicts_with = "target_shape")]
    target_csv: Option<PathBuf>,
    /// Low level of the shape in nats/s; defaults to the model's stored
    /// corpus percentile.
    #[arg(long)]
    low: Option<f64>,
    /// High level of the shape in nats/s; defaults like --low.
    #[arg(long)]
    high: Option<f64>,
    /// Step position as a fraction of the duration, for step shapes.
    #[arg(long, default_value_t = 0.5)]
    step_fraction: f64,
    /// Duration T to generate in seconds; defaults to the target CSV span.
    #[arg(long)]
    duration: Option<f64>,
    /// Beam step size t' in seconds.
    #[arg(long, default_value_t = 0.3)]
    step_size: f64,
    /// Candidate continuations per iteration.
    #[arg(long, default_value_t = 128)]
    k: usize,
    /// Entropy constant C_H; 0 disables dynamic temperature.
    #[arg(long, default_value_t = 50.0)]
    ch: f64,
    /// Token cap per candidate per iteration.
    #[arg(long, default_value_t = 64)]
    max_tokens_per_step: usize,
    /// Use the type-valid codebook size for H_max instead of the full
    /// vocabulary.
    #[arg(long, default_value_t = false)]
    h_max_typed: bool,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for generated.mid, realized_curve.csv, manifest.txt.
    #[arg(long)]
    out: PathBuf,
    /// Also write an SVG of the target and realized curves.
    #[arg(long, default_value_t = false)]
    plot: bool,
    #[command(flatten)]
    kernel: KernelFlags,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Directory of .mid/.midi files to analyze.
    #[arg(long)]
    corpus: PathBuf,
    /// Measure annotation CSV: piece_id,measure_index,first_note_index,last_note_index.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Restrict to one token mask (default: report all three).
    #[arg(long, value_enum)]
    mask: Option<MaskArg>,
    /// Largest segment-prefix length n in the correlation series.
    #[arg(long, default_value_t = 100)]
    n_max: usize,
    /// Average per-piece correlations instead of pooling all segments.
    #[arg(long, default_value_t = false)]
    per_piece: bool,
    /// Segment width in seconds for tension/density segments.
    #[arg(long, default_value_t = 1.0)]
    segment_width: f64,
    /// Also write per-metric SVG plots next to the report.
    #[arg(long, default_value_t = false)]
    plot: bool,
    #[command(flatten)]
    kernel: KernelFlags,
}

#[derive(Args)]
struct CurveArgs {
    /// Canonical target shape to render.
    #[arg(long, value_enum)]
    target_shape: Option<ShapeArg>,
    /// Low level in nats/s (shape mode).
    #[arg(long)]
    low: Option<f64>,
    /// High level in nats/s (shape mode).
    #[arg(long)]
    high: Option<f64>,
    /// Step position as a fraction of the duration, for step shapes.
    #[arg(long, default_value_t = 0.5)]
    step_fraction: f64,
    /// Shape duration in seconds (shape mode).
    #[arg(long)]
    duration: Option<f64>,
    /// MIDI file to extract from (extraction mode).
    #[arg(long, conflicts_with = "target_shape")]
    input: Option<PathBuf>,
    /// Trained model file (extraction mode).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Window start in seconds (extraction mode).
    #[arg(long)]
    window_start: Option<f64>,
    /// Window end in seconds (extraction mode).
    #[arg(long)]
    window_end: Option<f64>,
    /// Token mask for extraction.
    #[arg(long, value_enum)]
    mask: Option<MaskArg>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also write an SVG next to the CSV.
    #[arg(long, default_value_t = false)]
    plot: bool,
    #[command(flatten)]
    kernel: KernelFlags,
}

/// Kernel flags shared by every subcommand.
#[derive(Args)]
struct KernelFlags {
    /// Curve grid step in seconds.
    #[arg(long, default_value_t = 0.1)]
    delta_t: f64,
    /// Hann window parameter L in seconds (support ends at L/2).
    #[arg(long, default_value_t = 4.0)]
    window_l: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Constant,
    RampUp,
    RampDown,
    StepUp,
    StepDown,
}

impl From<ShapeArg> for ShapeKind {
    fn from(s: ShapeArg) -> ShapeKind {
        match s {
            ShapeArg::Constant => ShapeKind::Constant,
            ShapeArg::RampUp => ShapeKind::RampUp,
            ShapeArg::RampDown => ShapeKind::RampDown,
            ShapeArg::StepUp => ShapeKind::StepUp,
            ShapeArg::StepDown => ShapeKind::StepDown,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MaskArg {
    Pitch,
    Timeshift,
    Both,
}

impl MaskArg {
    fn name(self) -> &'static str {
        match self {
            MaskArg::Pitch => "pitch",
            MaskArg::Timeshift => "timeshift",
            MaskArg::Both => "both",
        }
    }

    fn apply(self, cfg: KernelConfig) -> KernelConfig {
        match self {
            MaskArg::Pitch => cfg.with_mask(true, false),
            MaskArg::Timeshift => cfg.with_mask(false, true),
            MaskArg::Both => cfg,
        }
    }
}

/// Error carrying the process exit code.
struct CliError {
    code: u8,
    error: anyhow::Error,
}

trait WithCode<T> {
    fn or_exit(self, code: u8) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Result<T, CliError> {
        self.map_err(|e| CliError {
            code,
            error: e.into(),
        })
    }
}

const EXIT_INPUT: u8 = 2;
const EXIT_SEARCH: u8 = 3;

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("IIC_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => eprintln!("warning: ignoring invalid IIC_THREADS={threads}"),
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Curve(args) => cmd_curve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}

impl KernelFlags {
    fn config(&self, c_pitch: f64, c_timeshift: f64) -> Result<KernelConfig> {
        if !(self.delta_t > 0.0) {
            bail!("--delta-t must be positive, got {}", self.delta_t);
        }
        if !(self.window_l > 0.0) {
            bail!("--window-l must be positive, got {}", self.window_l);
        }
        Ok(KernelConfig {
            window_len: self.window_l,
            c_pitch,
            c_timeshift,
            dt: self.delta_t,
        })
    }
}

/// A corpus piece that loaded cleanly.
struct Piece {
    name: String,
    notes: NoteList,
    seq: TokenSeq,
}

/// Loads every readable MIDI file in a directory, sorted by file name;
/// unreadable or empty files are skipped with a warning.
fn load_corpus(dir: &Path) -> Result<Vec<Piece>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read corpus directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
        })
        .collect();
    paths.sort();
    let mut pieces = Vec::new();
    for path in paths {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("piece")
            .to_string();
        let loaded = match fs::read(&path)
            .map_err(anyhow::Error::from)
            .and_then(|bytes| load_midi(&bytes).map_err(anyhow::Error::from))
        {
            Ok(l) => l,
            Err(e) => {
                eprintln!("warning: skipping {}: {e:#}", path.display());
                continue;
            }
        };
        if loaded.has_warnings() {
            eprintln!(
                "warning: {}: {} dangling note-ons, {} zero-length notes repaired",
                path.display(),
                loaded.dangling_note_ons,
                loaded.dropped_zero_length
            );
        }
        if loaded.notes.is_empty() {
            eprintln!("warning: skipping {}: no usable notes", path.display());
            continue;
        }
        let seq = tokenize(&loaded.notes)?;
        pieces.push(Piece {
            name,
            notes: loaded.notes,
            seq,
        });
    }
    Ok(pieces)
}

fn load_model(path: &Path) -> Result<MarkovCritic> {
    let bytes =
        fs::read(path).with_context(|| format!("cannot read model {}", path.display()))?;
    MarkovCritic::read_from(&mut bytes.as_slice())
        .with_context(|| format!("cannot parse model {}", path.display()))
}

/// Kernel config taking c weights from the model's stored calibration.
fn model_kernel(flags: &KernelFlags, model: &MarkovCritic) -> Result<KernelConfig> {
    let (cp, ct) = match (model.c_pitch, model.c_timeshift) {
        (Some(cp), Some(ct)) => (cp, ct),
        _ => {
            eprintln!("warning: model carries no calibration; using unit kernel weights");
            (1.0, 1.0)
        }
    };
    flags.config(cp, ct)
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let pieces = load_corpus(&args.corpus).or_exit(EXIT_INPUT)?;
    if pieces.is_empty() {
        return Err(anyhow!("no usable MIDI files in {}", args.corpus.display()))
            .or_exit(EXIT_INPUT);
    }
    let seqs: Vec<TokenSeq> = pieces.iter().map(|p| p.seq.clone()).collect();
    let mut model = MarkovCritic::train(&seqs, args.max_order).or_exit(EXIT_INPUT)?;
    let weights = calibrate_type_weights(&seqs, &model).or_exit(EXIT_INPUT)?;
    let cfg = args
        .kernel
        .config(weights.c_pitch, weights.c_timeshift)
        .or_exit(EXIT_INPUT)?;
    let levels = iic_core::curves::default_levels(&seqs, &model, &cfg).or_exit(EXIT_INPUT)?;
    if !levels.reliable {
        eprintln!("warning: corpus too small for stable level percentiles");
    }
    model.set_calibration(weights.c_pitch, weights.c_timeshift, levels.low, levels.high);
    fs::write(&args.out, model.to_bytes())
        .with_context(|| format!("cannot write model {}", args.out.display()))
        .or_exit(EXIT_INPUT)?;

    let notes: usize = pieces.iter().map(|p| p.notes.len()).sum();
    println!(
        "trained on {} files, {} notes, {} tokens",
        pieces.len(),
        notes,
        notes * 4
    );
    println!(
        "mean IC: pitch {:.4} nats, timeshift {:.4} nats",
        weights.mean_ic_pitch, weights.mean_ic_timeshift
    );
    println!(
        "kernel weights: c_pitch {:.6}, c_timeshift {:.6}",
        weights.c_pitch, weights.c_timeshift
    );
    println!(
        "corpus IIC quartiles: low {:.4}, high {:.4} nats/s",
        levels.low, levels.high
    );
    println!(
        "model written to {} ({})",
        args.out.display(),
        iic_core::critic::CriticModel::fingerprint(&model)
    );
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let model = load_model(&args.model).or_exit(EXIT_INPUT)?;
    let cfg = model_kernel(&args.kernel, &model).or_exit(EXIT_INPUT)?;

    let prompt = match &args.prompt {
        Some(path) => {
            let bytes = fs::read(path)
                .with_context(|| format!("cannot read prompt {}", path.display()))
                .or_exit(EXIT_INPUT)?;
            load_midi(&bytes).or_exit(EXIT_INPUT)?.notes
        }
        None => NoteList::default(),
    };

    let (target, total_seconds) = build_target(
        args.target_shape,
        args.target_csv.as_deref(),
        args.low,
        args.high,
        args.step_fraction,
        args.duration,
        &cfg,
        Some(&model),
    )
    .or_exit(EXIT_INPUT)?;

    let params = SearchParams {
        step_seconds: args.step_size,
        fanout: args.k,
        entropy_constant: (args.ch > 0.0).then_some(args.ch),
        total_seconds,
        max_tokens_per_step: args.max_tokens_per_step,
        seed: args.seed,
        h_max_typed: args.h_max_typed,
    };

    let result = match generate(&prompt, &target, &model, &model, &cfg, &params) {
        Ok(r) => r,
        Err(e @ (SearchError::AllCandidatesTruncated { .. } | SearchError::Stalled { .. })) => {
            return Err(e).or_exit(EXIT_SEARCH)
        }
        Err(e) => return Err(e).or_exit(EXIT_INPUT),
    };

    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))
        .or_exit(EXIT_INPUT)?;
    let midi_path = args.out.join("generated.mid");
    fs::write(&midi_path, save_midi(&result.notes, DEFAULT_TEMPO_US)).or_exit(EXIT_INPUT)?;
    fs::write(args.out.join("realized_curve.csv"), result.realized.to_csv_string())
        .or_exit(EXIT_INPUT)?;
    fs::write(args.out.join("manifest.txt"), &result.manifest).or_exit(EXIT_INPUT)?;
    if args.plot {
        let plot = svg::line_plot(
            "target vs realized IIC",
            "time (s)",
            "nats/s",
            &[
                svg::Series {
                    label: "target".into(),
                    points: curve_points(&target),
                },
                svg::Series {
                    label: "realized".into(),
                    points: curve_points(&result.realized),
                },
            ],
        );
        fs::write(args.out.join("curves.svg"), plot).or_exit(EXIT_INPUT)?;
    }

    println!(
        "generated {} notes over {:.2}s in {} iterations",
        result.notes.len(),
        params.total_seconds,
        result.iterations
    );
    println!("final IC deviation: {:.6} nats", result.deviation);
    println!("artifacts in {}", args.out.display());
    Ok(())
}

/// Builds the target curve and the generation duration from CLI inputs.
#[allow(clippy::too_many_arguments)]
fn build_target(
    shape: Option<ShapeArg>,
    csv: Option<&Path>,
    low: Option<f64>,
    high: Option<f64>,
    step_fraction: f64,
    duration: Option<f64>,
    cfg: &KernelConfig,
    model: Option<&MarkovCritic>,
) -> Result<(Curve, f64)> {
    match (shape, csv) {
        (Some(kind), None) => {
            let duration =
                duration.ok_or_else(|| anyhow!("--duration is required with --target-shape"))?;
            let low = low.or_else(|| model.and_then(|m| m.level_low));
            let high = high.or_else(|| model.and_then(|m| m.level_high));
            let (low, high) = match (low, high) {
                (Some(l), Some(h)) => (l, h),
                _ => bail!("--low/--high not given and the model stores no default levels"),
            };
            let spec = ShapeSpec::new(kind.into(), low, high, duration)?
                .with_step_fraction(step_fraction)?;
            Ok((make_shape(&spec, cfg.dt), duration))
        }
        (None, Some(path)) => {
            let file = fs::File::open(path)
                .with_context(|| format!("cannot open target csv {}", path.display()))?;
            let curve = Curve::read_csv(BufReader::new(file))?;
            let total = duration.unwrap_or_else(|| curve.t_end());
            if curve.t_end() + 1e-9 < total {
                bail!(
                    "target curve ends at {:.3}s but --duration asks for {:.3}s",
                    curve.t_end(),
                    total
                );
            }
            Ok((curve, total))
        }
        (None, None) => bail!("one of --target-shape or --target-csv is required"),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with prevents both"),
    }
}

fn curve_points(curve: &Curve) -> Vec<(f64, f64)> {
    curve
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| (curve.time(i), v))
        .collect()
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let model = load_model(&args.model).or_exit(EXIT_INPUT)?;
    let pieces = load_corpus(&args.corpus).or_exit(EXIT_INPUT)?;
    if pieces.is_empty() {
        return Err(anyhow!("no usable MIDI files in {}", args.corpus.display()))
            .or_exit(EXIT_INPUT);
    }
    let base_cfg = model_kernel(&args.kernel, &model).or_exit(EXIT_INPUT)?;
    if !(args.segment_width > 0.0) {
        return Err(anyhow!("--segment-width must be positive")).or_exit(EXIT_INPUT);
    }
    let spiral = SpiralConfig::default();
    let masks: Vec<MaskArg> = match args.mask {
        Some(m) => vec![m],
        None => vec![MaskArg::Pitch, MaskArg::Timeshift, MaskArg::Both],
    };

    let annotations = match &args.annotations {
        Some(path) => Some(read_annotations(path).or_exit(EXIT_INPUT)?),
        None => {
            eprintln!("notice: no --annotations given; IOI entropy rows omitted");
            None
        }
    };

    // Token ICs are mask-independent; compute once per piece.
    let piece_ics: Vec<Vec<f64>> = pieces.iter().map(|p| token_ic(&model, &p.seq)).collect();
    let piece_iic = |piece: &Piece, ics: &[f64], cfg: &KernelConfig| {
        let events = localized_events(&piece.seq, ics);
        let span = piece.seq.timeshift_span() + cfg.window_len / 2.0;
        iic_from_events(&events, cfg, 0.0, grid_len(span, cfg.dt))
    };

    let mut report = String::from("n,metric,token_mask,pearson_r,p_value\n");
    let mut plots: Vec<(String, Vec<svg::Series>)> = Vec::new();

    for (metric_name, metric) in [("tt", SegmentMetric::Tension), ("d", SegmentMetric::Density)] {
        let mut series_for_plot = Vec::new();
        for &mask in &masks {
            let cfg = mask.apply(base_cfg);
            let mut per_piece = Vec::new();
            for (piece, ics) in pieces.iter().zip(&piece_ics) {
                let iic = piece_iic(piece, ics, &cfg);
                let records =
                    onset_segments(&piece.notes, &iic, args.segment_width, metric, &spiral)
                        .or_exit(EXIT_INPUT)?;
                per_piece.push(
                    records
                        .iter()
                        .map(|r| (r.metric, r.surprisal))
                        .collect::<Vec<_>>(),
                );
            }
            let series = if args.per_piece {
                correlation_series_per_piece(&per_piece, args.n_max)
            } else {
                correlation_series(&per_piece, args.n_max)
            };
            append_report_rows(&mut report, metric_name, mask.name(), &series);
            series_for_plot.push(svg::Series {
                label: mask.name().into(),
                points: defined_points(&series),
            });
        }
        plots.push((metric_name.to_string(), series_for_plot));
    }

    if let Some(by_piece) = &annotations {
        let mut series_for_plot = Vec::new();
        for &mask in &masks {
            let cfg = mask.apply(base_cfg);
            let mut per_piece = Vec::new();
            for (piece, ics) in pieces.iter().zip(&piece_ics) {
                let Some(measures) = by_piece.get(&piece.name) else {
                    continue;
                };
                let iic = piece_iic(piece, ics, &cfg);
                let records =
                    measure_segments(&piece.notes, measures, &iic).or_exit(EXIT_INPUT)?;
                per_piece.push(
                    records
                        .iter()
                        .map(|r| (r.metric, r.surprisal))
                        .collect::<Vec<_>>(),
                );
            }
            if per_piece.is_empty() {
                eprintln!("warning: annotations match no corpus piece; he rows omitted");
                break;
            }
            let series = if args.per_piece {
                correlation_series_per_piece(&per_piece, args.n_max)
            } else {
                correlation_series(&per_piece, args.n_max)
            };
            append_report_rows(&mut report, "he", mask.name(), &series);
            series_for_plot.push(svg::Series {
                label: mask.name().into(),
                points: defined_points(&series),
            });
        }
        if !series_for_plot.is_empty() {
            plots.push(("he".to_string(), series_for_plot));
        }
    }

    fs::write(&args.out, &report)
        .with_context(|| format!("cannot write report {}", args.out.display()))
        .or_exit(EXIT_INPUT)?;
    println!("report written to {}", args.out.display());

    if args.plot {
        for (metric_name, series) in &plots {
            if series.iter().all(|s| s.points.is_empty()) {
                continue;
            }
            let path = args.out.with_file_name(format!(
                "{}_{metric_name}.svg",
                args.out
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("report")
            ));
            let doc = svg::line_plot(
                &format!("correlation of {metric_name} with segment surprisal"),
                "prefix length n",
                "pearson r",
                series,
            );
            fs::write(&path, doc).or_exit(EXIT_INPUT)?;
            println!("plot written to {}", path.display());
        }
    }
    Ok(())
}

fn append_report_rows(
    report: &mut String,
    metric: &str,
    mask: &str,
    series: &[CorrelationPoint],
) {
    use std::fmt::Write as _;
    for point in series {
        // Undefined coefficients stay empty rather than fabricated.
        let r = point.r.map(|r| format!("{r:.6}")).unwrap_or_default();
        let p = point.p_value.map(|p| format!("{p:.6}")).unwrap_or_default();
        let _ = writeln!(report, "{},{metric},{mask},{r},{p}", point.n);
    }
}

fn defined_points(series: &[CorrelationPoint]) -> Vec<(f64, f64)> {
    series
        .iter()
        .filter_map(|p| p.r.map(|r| (p.n as f64, r)))
        .collect()
}

/// Parses the measure annotation CSV into spans grouped by piece id.
fn read_annotations(path: &Path) -> Result<std::collections::BTreeMap<String, Vec<MeasureSpan>>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read annotations {}", path.display()))?;
    let mut by_piece: std::collections::BTreeMap<String, Vec<MeasureSpan>> =
        std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("piece_id")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            bail!(
                "annotations line {}: expected 4 fields, got {}",
                i + 1,
                fields.len()
            );
        }
        let parse = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|e| anyhow!("annotations line {}: bad {what} '{s}': {e}", i + 1))
        };
        by_piece
            .entry(fields[0].to_string())
            .or_default()
            .push(MeasureSpan {
                measure_index: parse(fields[1], "measure_index")?,
                first_note: parse(fields[2], "first_note_index")?,
                last_note: parse(fields[3], "last_note_index")?,
            });
    }
    for spans in by_piece.values_mut() {
        spans.sort_by_key(|s| s.measure_index);
    }
    Ok(by_piece)
}

fn cmd_curve(args: CurveArgs) -> Result<(), CliError> {
    let curve = match (&args.target_shape, &args.input) {
        (Some(_), None) => {
            let flags_cfg = args.kernel.config(1.0, 1.0).or_exit(EXIT_INPUT)?;
            let (curve, _) = build_target(
                args.target_shape,
                None,
                args.low,
                args.high,
                args.step_fraction,
                args.duration,
                &flags_cfg,
                None,
            )
            .or_exit(EXIT_INPUT)?;
            curve
        }
        (None, Some(input)) => {
            let model_path = args
                .model
                .as_ref()
                .ok_or_else(|| anyhow!("--model is required for extraction"))
                .or_exit(EXIT_INPUT)?;
            let model = load_model(model_path).or_exit(EXIT_INPUT)?;
            let mut cfg = model_kernel(&args.kernel, &model).or_exit(EXIT_INPUT)?;
            if let Some(mask) = args.mask {
                cfg = mask.apply(cfg);
            }
            let bytes = fs::read(input)
                .with_context(|| format!("cannot read {}", input.display()))
                .or_exit(EXIT_INPUT)?;
            let notes = load_midi(&bytes).or_exit(EXIT_INPUT)?.notes;
            let (start, end) = match (args.window_start, args.window_end) {
                (Some(s), Some(e)) => (s, e),
                _ => (0.0, notes.end_time().max(args.kernel.delta_t)),
            };
            // Malformed windows are input errors; windows past the music are
            // legitimate and simply extract silence.
            if start < 0.0 || end <= start {
                return Err(anyhow!(
                    "window [{start}, {end}] is reversed or starts before zero"
                ))
                .or_exit(EXIT_INPUT);
            }
            extract_curve(&notes, &model, &cfg, start, end).or_exit(EXIT_INPUT)?
        }
        (None, None) => {
            return Err(anyhow!("one of --target-shape or --input is required"))
                .or_exit(EXIT_INPUT)
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with prevents both"),
    };

    fs::write(&args.out, curve.to_csv_string())
        .with_context(|| format!("cannot write {}", args.out.display()))
        .or_exit(EXIT_INPUT)?;
    println!(
        "curve with {} points written to {}",
        curve.len(),
        args.out.display()
    );
    if args.plot {
        let doc = svg::line_plot(
            "curve",
            "time (s)",
            "nats/s",
            &[svg::Series {
                label: "curve".into(),
                points: curve_points(&curve),
            }],
        );
        let path = args.out.with_extension("svg");
        fs::write(&path, doc).or_exit(EXIT_INPUT)?;
        println!("plot written to {}", path.display());
    }
    Ok(())
}
