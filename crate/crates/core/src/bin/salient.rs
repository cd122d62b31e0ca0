use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use serde::de::DeserializeOwned;

use saliency::config::{parse_levels, PipelineConfig};
use saliency::evaluation::{read_curve_csv, write_pr_svg};
use saliency::low_level::ColorHistogramMode;
use saliency::mid_level::BndConMode;
use saliency::pipeline::{dump_flow, dump_segmentation, evaluate_dataset, run_dataset, write_eval_outputs};
use saliency::spatiotemporal::McaLambda;
use saliency::synth::{write_synthetic, SynthKind, SynthSpec};
use saliency::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "salient", version, about = "Multiscale spatiotemporal video saliency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute saliency maps for every video in a dataset.
    Run {
        dataset: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score saliency maps against ground truth.
    Eval {
        maps: PathBuf,
        dataset: PathBuf,
        /// Report directory (defaults to the maps directory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "method")]
        label: String,
        #[arg(long, default_value = "*")]
        pattern: String,
    },
    /// Generate a synthetic video with exact ground truth.
    Synth {
        #[arg(long, value_parser = parse_kind)]
        kind: SynthKind,
        #[arg(long, default_value_t = 32)]
        frames: usize,
        /// WIDTHxHEIGHT
        #[arg(long, default_value = "160x120", value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump optical flow fields of one video as .flo files.
    Flow {
        video: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Dump multiscale superpixel labels of one video.
    Segment {
        video: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Plot PR curves from one or more pr.csv files into an SVG.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated curve labels (defaults to parent directory names).
        #[arg(long)]
        labels: Option<String>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON file with flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set atw.lambda=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Scale levels: 1, 2, 3, a comma list, or `all`.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    no_atw: bool,
    #[arg(long)]
    no_mca: bool,
    #[arg(long)]
    pattern: Option<String>,
    /// Boundary-connectivity form: `soft` or `literal`.
    #[arg(long, value_parser = parse_mode::<BndConMode>)]
    bndcon: Option<BndConMode>,
    /// Color histogram comparison: `joint` or `per-channel`.
    #[arg(long, value_parser = parse_mode::<ColorHistogramMode>)]
    color_hist: Option<ColorHistogramMode>,
    /// Cellular-automata state space: `log-odds` or `odds`.
    #[arg(long, value_parser = parse_mode::<McaLambda>)]
    mca_lambda: Option<McaLambda>,
    /// Directory of precomputed objectness maps named after the frames.
    #[arg(long)]
    objectness_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> saliency::Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(levels) = &self.levels {
            config.levels = parse_levels(levels)?;
        }
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if self.no_atw {
            config.atw_enabled = false;
        }
        if self.no_mca {
            config.mca_enabled = false;
        }
        if let Some(pattern) = &self.pattern {
            config.frame_pattern = pattern.clone();
        }
        if let Some(mode) = self.bndcon {
            config.mid_level.bndcon = mode;
        }
        if let Some(mode) = self.color_hist {
            config.low_level.color_hist = mode;
        }
        if let Some(mode) = self.mca_lambda {
            config.mca.lambda = mode;
        }
        if let Some(dir) = &self.objectness_dir {
            config.objectness_dir = Some(dir.clone());
        }
        for assignment in &self.set {
            config = config.with_assignment(assignment)?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn parse_kind(s: &str) -> Result<SynthKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses a kebab-case mode name through its serde representation.
fn parse_mode<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((parse(w)?, parse(h)?))
}

fn label_for(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn execute(command: Command) -> saliency::Result<u8> {
    match command {
        Command::Run {
            dataset,
            output,
            config,
        } => {
            let config = config.resolve()?;
            let outcomes = run_dataset(&dataset, &output, &config)?;
            let failed = outcomes.iter().filter(|o| !o.ok()).count();
            for o in &outcomes {
                match &o.error {
                    None => println!("{}: {} frames", o.name, o.frames),
                    Some(e) => println!("{}: failed: {e}", o.name),
                }
            }
            Ok(match failed {
                0 => 0,
                n if n == outcomes.len() => EXIT_DATA,
                _ => EXIT_PARTIAL,
            })
        }
        Command::Eval {
            maps,
            dataset,
            out,
            label,
            pattern,
        } => {
            let report = evaluate_dataset(&maps, &dataset, &pattern)?;
            write_eval_outputs(&report, out.as_deref().unwrap_or(&maps), &label)?;
            println!(
                "f_adap {:.4}  f_max {:.4}  mae {:.4}",
                report.f_adap, report.f_max, report.mae
            );
            Ok(0)
        }
        Command::Synth {
            kind,
            frames,
            size,
            seed,
            out,
        } => {
            let dir = write_synthetic(&SynthSpec::new(kind, frames, size.0, size.1, seed), &out)?;
            println!("{}", dir.display());
            Ok(0)
        }
        Command::Flow {
            video,
            output,
            config,
        } => {
            let n = dump_flow(&video, &output, &config.resolve()?)?;
            println!("{n} flow fields");
            Ok(0)
        }
        Command::Segment {
            video,
            output,
            config,
        } => {
            let n = dump_segmentation(&video, &output, &config.resolve()?)?;
            println!("{n} frames segmented");
            Ok(0)
        }
        Command::Plot { csv, out, labels } => {
            let names: Vec<String> = match labels {
                Some(l) => l.split(',').map(str::to_string).collect(),
                None => csv.iter().map(|p| label_for(p)).collect(),
            };
            if names.len() != csv.len() {
                return Err(Error::Config("one label per CSV file is required".into()));
            }
            let curves = csv
                .iter()
                .zip(names)
                .map(|(path, name)| Ok((name, read_curve_csv(path)?)))
                .collect::<saliency::Result<Vec<_>>>()?;
            write_pr_svg(&curves, &out)?;
            Ok(0)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("SALIENT_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("SALIENT_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
