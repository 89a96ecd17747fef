use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use wchain::harness::{self, Axis, ExperimentConfig, Format};
use wchain::protocol;

#[derive(Parser)]
#[command(name = "wchain", version, about = "Run wireless blockchain simulations and parameter sweeps")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single configuration over its seed list.
    Run(Common),
    /// Run one row per value along an axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// n, gamma, alpha, beta or distribution.
        #[arg(long)]
        axis: Axis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `1,2,3` or `0..20`.
    #[arg(long)]
    seed_list: Option<String>,
    /// Output file; defaults to `results.<ext>` in $WCHAIN_OUT_DIR or `.`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Write the first seed's per-slot trace next to the output.
    #[arg(long)]
    trace: bool,
    /// Allow n above the desk-scale limit.
    #[arg(long)]
    long_run: bool,
    #[command(flatten)]
    keys: Keys,
}

/// One flag per config key.
#[derive(Args, Default)]
struct Keys {
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    distribution: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    height: Option<String>,
    #[arg(long)]
    normal_sd_frac: Option<String>,
    #[arg(long)]
    exp_mean_frac: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    p_hat: Option<String>,
    #[arg(long)]
    spanner_mode: Option<String>,
    #[arg(long)]
    c_span: Option<String>,
    #[arg(long)]
    phase_slots: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    crash_rate: Option<String>,
    #[arg(long)]
    tx_per_node: Option<String>,
    #[arg(long)]
    invalid_rate: Option<String>,
    #[arg(long)]
    empty_blocks: Option<String>,
}

impl Keys {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("label", &self.label),
            ("n", &self.n),
            ("distribution", &self.distribution),
            ("width", &self.width),
            ("height", &self.height),
            ("normal_sd_frac", &self.normal_sd_frac),
            ("exp_mean_frac", &self.exp_mean_frac),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("noise", &self.noise),
            ("mu", &self.mu),
            ("sigma", &self.sigma),
            ("p_hat", &self.p_hat),
            ("spanner_mode", &self.spanner_mode),
            ("c_span", &self.c_span),
            ("phase_slots", &self.phase_slots),
            ("s", &self.s),
            ("epochs", &self.epochs),
            ("crash_rate", &self.crash_rate),
            ("tx_per_node", &self.tx_per_node),
            ("invalid_rate", &self.invalid_rate),
            ("empty_blocks", &self.empty_blocks),
        ]
    }
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for (key, value) in self.keys.pairs() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(seeds) = &self.seed_list {
            cfg.set("seeds", seeds)?;
        }
        if self.long_run {
            cfg.long_run = true;
        }
        Ok(cfg)
    }

    fn out_path(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| harness::default_output_dir().join(format!("results.{}", self.format.extension())))
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_epoch_log(metrics: &harness::RunMetrics, path: &Path) -> Result<()> {
    let history: Vec<_> = metrics.trials.iter().flat_map(|t| t.epochs.iter().cloned()).collect();
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    protocol::write_epoch_log(&history, BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Command::Run(common) => {
            let cfg = common.config()?;
            let out = common.out_path();
            let (metrics, trace) = harness::run_experiment_traced(&cfg, common.trace)?;
            harness::emit(std::slice::from_ref(&metrics), &out, common.format)?;
            write_epoch_log(&metrics, &sibling(&out, "epochs.csv"))?;
            if let Some(trace) = trace {
                let path = sibling(&out, "trace.csv");
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                trace.write_csv(BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
            }
            let row = metrics.row();
            println!(
                "{}: {} epochs, {} committed, mean epoch {} slots, {} TPS -> {}",
                row.label,
                row.epochs,
                row.committed_epochs,
                row.mean_epoch_slots,
                row.tps,
                out.display()
            );
        }
        Command::Sweep { common, axis, values } => {
            let cfg = common.config()?;
            let out = common.out_path();
            let rows = harness::sweep(&cfg, axis, &values)?;
            harness::emit(&rows, &out, common.format)?;
            for m in &rows {
                let r = m.row();
                println!("{}: mean epoch {} slots, {} TPS", r.label, r.mean_epoch_slots, r.tps);
            }
            println!("{} rows -> {}", rows.len(), out.display());
        }
    }
    Ok(())
}
