use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "polya-forest",
    version,
    about = "Polya tree ensemble priors: sampling, posterior fits, metrics, and verification",
    long_about = None
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorArg {
    Dpa,
    Cpa,
    Spt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Hellinger,
    L1,
    Sup,
    Kl,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate the m-fold convolution kernel on [0, m]
    KernelTable {
        /// Convolution order
        #[arg(long)]
        m: u32,
        /// Number of equal steps across the support (emits resolution+1 rows)
        #[arg(long)]
        resolution: usize,
        /// Output CSV (columns x, value)
        #[arg(long)]
        out: PathBuf,
    },

    /// Draw one density from a prior and tabulate it on a grid
    SamplePrior {
        #[arg(long, value_enum)]
        prior: PriorArg,
        /// Aggregation order m
        #[arg(long)]
        m: u32,
        /// Tree depth L
        #[arg(long)]
        depth: u32,
        /// Number of trees q (discrete aggregation only)
        #[arg(long)]
        trees: Option<usize>,
        /// Edge bound U (aggregation priors only)
        #[arg(long = "u-bound")]
        u_bound: Option<f64>,
        /// Density floor tau (spline-map prior only)
        #[arg(long)]
        tau: Option<f64>,
        /// Beta level parameters: one value for all levels, or one per level
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        beta: Vec<f64>,
        #[arg(long)]
        seed: u64,
        /// Number of evaluation cells on [0, 1)
        #[arg(long, default_value_t = 512)]
        grid: usize,
        /// Output CSV (columns x, f)
        #[arg(long)]
        out: PathBuf,
    },

    /// Fit a posterior by MCMC and summarize it
    Fit {
        /// Input CSV: one observation per line, optional header "x"
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        prior: PriorArg,
        /// Put the depth prior on L and reversible-jump over depths
        #[arg(long, default_value_t = false)]
        adaptive: bool,
        /// Known smoothness (fixed-depth runs; sets the depth and order)
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 4000)]
        iters: usize,
        #[arg(long, default_value_t = 1000)]
        burnin: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        /// Run summary (JSON)
        #[arg(long)]
        out: PathBuf,
        /// Posterior density table (columns x, mean, lower, upper)
        #[arg(long = "density-out")]
        density_out: PathBuf,
    },

    /// Distance or divergence between two tabulated densities
    Metrics {
        /// First density CSV (columns x, f on a uniform grid)
        #[arg(long)]
        f: PathBuf,
        /// Second density CSV
        #[arg(long)]
        g: PathBuf,
        #[arg(long, value_enum)]
        metric: MetricArg,
    },

    /// Contraction-rate study over increasing sample sizes
    RateExperiment {
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum)]
        prior: PriorArg,
        #[arg(long, default_value_t = false)]
        adaptive: bool,
        /// Sample sizes, ascending
        #[arg(long, value_delimiter = ',')]
        n: Vec<u64>,
        #[arg(long, default_value_t = 5)]
        replicates: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4000)]
        iters: usize,
        #[arg(long, default_value_t = 1000)]
        burnin: usize,
        /// Output CSV, one row per (n, replicate)
        #[arg(long)]
        out: PathBuf,
    },

    /// Check the supporting inequalities on randomized instances
    VerifyLemmas {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt one cumulative weight first (fault-injection test hook)
        #[arg(long, hide = true, default_value_t = false)]
        inject_omega_fault: bool,
    },
}
