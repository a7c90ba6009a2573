use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oad_cli::convert::{convert_dataset, ConvertOptions};
use oad_cli::embeddings::export_embeddings;
use oad_cli::experiment::{
    load_dataset, run_dynamic_suite, run_experiment, run_group_size_sweep, SummaryRow, NOISE_LEVELS, REMOVAL_LEVELS,
};
use oad_cli::{parameter_counts, CliError, ExperimentConfig, Result};
use oad_core::graph::synthetic::{CitationLike, ProteinLike};
use oad_core::graph::{PerturbationKind, SplitSizes};

#[derive(Parser)]
#[command(name = "oad", version, about = "Online adversarial distillation for graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// key=value config file
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set train.lr=0.01
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
            None => String::new(),
        };
        let mut pairs = Vec::new();
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        flag("dataset", self.dataset.as_ref().map(|p| p.display().to_string()));
        flag("method", self.method.clone());
        flag("arch", self.arch.clone());
        flag("preset", self.preset.clone());
        flag("train.seed", self.seed.map(|s| s.to_string()));
        flag("repeats", self.repeats.map(|s| s.to_string()));
        flag("group_size", self.group_size.map(|s| s.to_string()));
        flag("output", self.output.as_ref().map(|p| p.display().to_string()));
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Invalid(format!("--set expects KEY=VALUE, got {o:?}")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        ExperimentConfig::parse_with(&text, &pairs)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured method for every seed
    Run(ConfigArgs),
    /// Perturbation sweep comparing a single student, KD and OAD
    Dynamic {
        #[command(flatten)]
        args: ConfigArgs,
        /// Comma-separated levels; defaults to the standard sweep of the
        /// configured perturbation kind
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
    },
    /// OAD over a range of group sizes
    SweepGroup {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        sizes: Vec<usize>,
    },
    /// Write last-hidden-layer embeddings and anchor distances as CSV
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        anchor_seed: u64,
        #[arg(long, default_value_t = 0)]
        graph: usize,
        /// Skip feature row normalization
        #[arg(long)]
        raw_features: bool,
    },
    /// Build a dataset file from an edge list, feature CSV and label CSV
    Convert {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "dataset")]
        name: String,
        #[arg(long)]
        split_file: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 500)]
        val: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print parameter counts of the configured models
    Params {
        #[command(flatten)]
        args: ConfigArgs,
        /// Input feature count (defaults to the preset's)
        #[arg(long)]
        features: Option<usize>,
        /// Class count (defaults to the preset's)
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Write a synthetic dataset for trying things out
    Synth {
        #[arg(long, default_value = "citation")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Full Cora-sized graph instead of the small one
        #[arg(long)]
        large: bool,
    },
}

fn print_summary(rows: &[SummaryRow]) {
    println!("method\tM\tlevel\truns\tmean\tstd\tensemble");
    for r in rows {
        let std = r.std.map_or(String::new(), |s| format!("{s:.4}"));
        println!(
            "{}\t{}\t{}\t{}\t{:.4}\t{}\t{:.4}",
            r.method, r.group_size, r.level, r.runs, r.mean, std, r.ensemble_mean
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let out = run_experiment(&cfg)?;
            print_summary(&out.summary);
            println!("wrote {}", out.dir.display());
        }
        Command::Dynamic { args, levels } => {
            let cfg = args.load()?;
            let levels = if levels.is_empty() {
                match cfg.perturbation.map(|p| p.kind) {
                    Some(PerturbationKind::AttributeNoise) => NOISE_LEVELS.to_vec(),
                    Some(PerturbationKind::EdgeRemoval) => REMOVAL_LEVELS.to_vec(),
                    None => Vec::new(),
                }
            } else {
                levels
            };
            let out = run_dynamic_suite(&cfg, &levels)?;
            println!("level\tstudent\tkd\toad\tkd-student\toad-student");
            for d in &out.deltas {
                println!(
                    "{}\t{:.4}\t{:.4}\t{:.4}\t{:+.4}\t{:+.4}",
                    d.level, d.student, d.kd, d.oad, d.kd_minus_student, d.oad_minus_student
                );
            }
            println!("wrote {}", out.dir.display());
        }
        Command::SweepGroup { args, sizes } => {
            let cfg = args.load()?;
            let out = run_group_size_sweep(&cfg, &sizes)?;
            print_summary(&out.summary);
            println!("wrote {}", out.dir.display());
        }
        Command::ExportEmbeddings {
            checkpoint,
            dataset,
            out,
            anchor_seed,
            graph,
            raw_features,
        } => {
            let mut cfg = ExperimentConfig::parse("")?;
            cfg.dataset = dataset;
            cfg.normalize_features = !raw_features;
            let ds = load_dataset(&cfg)?;
            let anchor = export_embeddings(&checkpoint, &ds, graph, anchor_seed, &out)?;
            println!("anchor node {anchor}; wrote {}", out.display());
        }
        Command::Convert {
            edges,
            features,
            labels,
            out,
            name,
            split_file,
            per_class,
            val,
            test,
            seed,
        } => {
            let opts = ConvertOptions {
                name,
                split_file,
                split: SplitSizes { per_class, val, test },
                seed,
            };
            let ds = convert_dataset(&edges, &features, &labels, &out, &opts)?;
            let g = &ds.graphs()[0];
            println!(
                "{} nodes, {} edges, {} features, {} classes; wrote {}",
                g.num_nodes(),
                g.num_edges(),
                ds.num_features(),
                ds.num_classes(),
                out.display()
            );
        }
        Command::Params { args, features, classes } => {
            let cfg = args.load()?;
            let d = features.unwrap_or(cfg.preset.num_features());
            let k = classes.unwrap_or(cfg.preset.num_classes());
            let c = parameter_counts(&cfg, d, k)?;
            println!("student\t{}", c.student);
            println!("teacher\t{}", c.teacher);
            println!("discriminator\t{}", c.discriminator);
            println!("group(M={})\t{}", cfg.train.group_size, c.group);
        }
        Command::Synth { kind, out, seed, large } => {
            let ds = match kind.as_str() {
                "citation" if large => CitationLike::cora_scale(seed).generate()?,
                "citation" => CitationLike::small(seed).generate()?,
                "protein" => ProteinLike::small(seed).generate()?,
                other => return Err(CliError::Invalid(format!("unknown synthetic kind {other:?}"))),
            };
            oad_cli::output::write_atomic(&out, ds.to_json_string()?.as_bytes())?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
