use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use polya_forest::dyadic::TptParams;
use polya_forest::error::{Error, Result};
use polya_forest::experiments::{
    derive_seed, holder_density, rate_experiment, rate_optimal_config, verify_lemmas, RateOptions,
    TruthKind,
};
use polya_forest::kernel::KernelTable;
use polya_forest::metrics::{distance, kl_and_v, EvaluableDensity, Metric};
use polya_forest::posterior::{run_chain, ChainOptions, ChainTarget};
use polya_forest::priors::{
    sample_prior, AdaptiveSchedule, AdaptiveVariant, PriorConfig, PriorKind,
};

use crate::args::{MetricArg, PriorArg};
use crate::csvio;
use crate::manifest::ManifestBuilder;

fn kind_of(prior: PriorArg) -> PriorKind {
    match prior {
        PriorArg::Dpa => PriorKind::Dpa,
        PriorArg::Cpa => PriorKind::Cpa,
        PriorArg::Spt => PriorKind::Spt,
    }
}

fn variant_of(prior: PriorArg) -> AdaptiveVariant {
    match prior {
        PriorArg::Dpa => AdaptiveVariant::DpaDepth,
        PriorArg::Cpa => AdaptiveVariant::CpaDepth,
        PriorArg::Spt => AdaptiveVariant::SptDepth,
    }
}

pub fn kernel_table(m: u32, resolution: usize, out: &Path) -> Result<i32> {
    if resolution == 0 {
        return Err(Error::Config("resolution must be at least 1".into()));
    }
    let table = KernelTable::new(m.clamp(1, polya_forest::kernel::MAX_SAFE_ORDER));
    let mut builder = ManifestBuilder::new(
        "kernel-table",
        json!({ "m": m, "resolution": resolution, "out": out.display().to_string() }),
        None,
    );
    let rows: Result<Vec<Vec<f64>>> = (0..=resolution)
        .map(|i| {
            let x = m as f64 * i as f64 / resolution as f64;
            Ok(vec![x, table.eval(m, x)?])
        })
        .collect();
    csvio::write_columns(out, &["x", "value"], &rows?)?;
    builder.stage("tabulate");
    builder.finalize(&[out.to_path_buf()])?;
    Ok(0)
}

fn resolve_levels(beta: &[f64], depth: u32) -> Result<Vec<f64>> {
    if beta.len() == 1 {
        Ok(vec![beta[0]; depth as usize])
    } else if beta.len() == depth as usize {
        Ok(beta.to_vec())
    } else {
        Err(Error::Config(format!(
            "--beta needs one value or exactly {depth}, got {}",
            beta.len()
        )))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn sample_prior_cmd(
    prior: PriorArg,
    m: u32,
    depth: u32,
    trees: Option<usize>,
    u_bound: Option<f64>,
    tau: Option<f64>,
    beta: &[f64],
    seed: u64,
    grid: usize,
    out: &Path,
) -> Result<i32> {
    let tpt = TptParams::new(depth, resolve_levels(beta, depth)?)?;
    let config = match prior {
        PriorArg::Dpa => {
            if tau.is_some() {
                return Err(Error::Config("--tau applies to the spt prior only".into()));
            }
            let trees = trees.ok_or_else(|| Error::Config("dpa requires --trees".into()))?;
            let u = u_bound.ok_or_else(|| Error::Config("dpa requires --u-bound".into()))?;
            PriorConfig::dpa(m, depth, trees, u, tpt)?
        }
        PriorArg::Cpa => {
            if trees.is_some() {
                return Err(Error::Config(
                    "--trees applies to the dpa prior only".into(),
                ));
            }
            if tau.is_some() {
                return Err(Error::Config("--tau applies to the spt prior only".into()));
            }
            let u = u_bound.ok_or_else(|| Error::Config("cpa requires --u-bound".into()))?;
            PriorConfig::cpa(m, depth, u, tpt)?
        }
        PriorArg::Spt => {
            if trees.is_some() {
                return Err(Error::Config(
                    "--trees does not apply to the spt prior".into(),
                ));
            }
            if u_bound.is_some() {
                return Err(Error::Config(
                    "--u-bound does not apply to the spt prior".into(),
                ));
            }
            let tau = tau.ok_or_else(|| Error::Config("spt requires --tau".into()))?;
            PriorConfig::spt(m, depth, tau, tpt)?
        }
    };
    if grid == 0 {
        return Err(Error::Config("grid must have at least one cell".into()));
    }

    let mut builder = ManifestBuilder::new(
        "sample-prior",
        json!({
            "prior": kind_of(prior).as_str(),
            "config": serde_json::to_value(&config).unwrap_or_default(),
            "grid": grid,
            "out": out.display().to_string(),
        }),
        Some(seed),
    );
    let table = KernelTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "sample-prior", 0));
    let density = sample_prior(&config, &table, &mut rng)?;
    builder.stage("draw");
    let rows: Vec<Vec<f64>> = (0..grid)
        .map(|i| {
            let x = (i as f64 + 0.5) / grid as f64;
            vec![x, density.eval(x)]
        })
        .collect();
    csvio::write_columns(out, &["x", "f"], &rows)?;
    builder.stage("tabulate");
    builder.finalize(&[out.to_path_buf()])?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
pub fn fit(
    data_path: &Path,
    prior: PriorArg,
    adaptive: bool,
    alpha: Option<f64>,
    iters: usize,
    burnin: usize,
    seed: u64,
    grid: usize,
    out: &Path,
    density_out: &Path,
) -> Result<i32> {
    let data = csvio::read_observations(data_path)?;
    let n = data.n() as u64;
    let table = KernelTable::default();

    let mut opts = ChainOptions::new(iters, burnin, derive_seed(seed, "fit-chain", 0));
    opts.grid = grid;

    let mut builder;
    let (trace, summary) = if adaptive {
        let mut schedule = AdaptiveSchedule::new(variant_of(prior), n, 8);
        schedule.trees_cap = opts.mcmc_trees_cap;
        builder = ManifestBuilder::new(
            "fit",
            json!({
                "data": data_path.display().to_string(),
                "n": n,
                "prior": kind_of(prior).as_str(),
                "adaptive": true,
                "schedule": serde_json::to_value(&schedule).unwrap_or_default(),
                "iters": iters,
                "burnin": burnin,
                "grid": grid,
            }),
            Some(seed),
        );
        if alpha.is_some() {
            builder.warn("--alpha is ignored in adaptive mode");
        }
        if kind_of(prior) == PriorKind::Dpa && schedule.trees_capped() {
            builder.warn(format!(
                "tree count capped at {} (full scale would be n^(1+zeta) = {})",
                schedule.trees(),
                n
            ));
        }
        builder.stage("read-data");
        run_chain(Some(&data), ChainTarget::Adaptive(&schedule), &opts, &table)?
    } else {
        let alpha = alpha.ok_or_else(|| {
            Error::Config("fixed-depth fits need --alpha (or pass --adaptive)".into())
        })?;
        let config = rate_optimal_config(kind_of(prior), alpha, n, opts.mcmc_trees_cap)?;
        builder = ManifestBuilder::new(
            "fit",
            json!({
                "data": data_path.display().to_string(),
                "n": n,
                "prior": kind_of(prior).as_str(),
                "adaptive": false,
                "alpha": alpha,
                "config": serde_json::to_value(&config).unwrap_or_default(),
                "iters": iters,
                "burnin": burnin,
                "grid": grid,
            }),
            Some(seed),
        );
        if let Some(q) = config.trees {
            if (q as u64) < n {
                builder.warn(format!("tree count capped at {q} (full scale is n = {n})"));
            }
        }
        builder.stage("read-data");
        run_chain(Some(&data), ChainTarget::Fixed(&config), &opts, &table)?
    };
    builder.stage("mcmc");
    for w in &summary.warnings {
        builder.warn(w.clone());
    }

    let run_json = json!({
        "summary": serde_json::to_value(&summary).unwrap_or_default(),
        "sweeps_recorded": trace.log_likelihood.len(),
        "density_samples": trace.density_samples.len(),
    });
    std::fs::write(
        out,
        serde_json::to_string_pretty(&run_json)
            .map_err(|e| Error::Data(format!("summary serialization: {e}")))?
            + "\n",
    )
    .map_err(|e| Error::Data(format!("writing {}: {e}", out.display())))?;

    let rows: Vec<Vec<f64>> = (0..summary.grid)
        .map(|i| {
            let x = (i as f64 + 0.5) / summary.grid as f64;
            vec![x, summary.mean[i], summary.lower[i], summary.upper[i]]
        })
        .collect();
    csvio::write_columns(density_out, &["x", "mean", "lower", "upper"], &rows)?;
    builder.stage("write");
    builder.finalize(&[out.to_path_buf(), density_out.to_path_buf()])?;
    Ok(0)
}

pub fn metrics(f_path: &Path, g_path: &Path, metric: MetricArg) -> Result<i32> {
    let f = csvio::read_grid_density(f_path)?;
    let g = csvio::read_grid_density(g_path)?;
    let fe = EvaluableDensity::Grid(&f);
    let ge = EvaluableDensity::Grid(&g);
    match metric {
        MetricArg::Hellinger => println!("hellinger = {}", distance(Metric::Hellinger, &fe, &ge)?),
        MetricArg::L1 => println!("l1 = {}", distance(Metric::L1, &fe, &ge)?),
        MetricArg::Sup => println!("sup = {}", distance(Metric::Sup, &fe, &ge)?),
        MetricArg::Kl => {
            let (k, v) = kl_and_v(&fe, &ge)?;
            println!("K = {k}");
            println!("V = {v}");
        }
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
pub fn rate_experiment_cmd(
    alpha: f64,
    prior: PriorArg,
    adaptive: bool,
    n_list: &[u64],
    replicates: u32,
    seed: u64,
    iters: usize,
    burnin: usize,
    out: &Path,
) -> Result<i32> {
    let truth = holder_density(alpha, TruthKind::Kink);
    let mut opts = RateOptions::new(kind_of(prior), n_list.to_vec(), replicates, seed);
    opts.adaptive = adaptive;
    opts.iters = iters;
    opts.burnin = burnin;

    let mut builder = ManifestBuilder::new(
        "rate-experiment",
        json!({
            "alpha": alpha,
            "prior": kind_of(prior).as_str(),
            "adaptive": adaptive,
            "n": n_list,
            "replicates": replicates,
            "iters": iters,
            "burnin": burnin,
            "grid": opts.grid,
            "trees_cap": opts.trees_cap,
        }),
        Some(seed),
    );
    if kind_of(prior) == PriorKind::Dpa {
        for &n in n_list {
            if n as usize > opts.trees_cap {
                builder.warn(format!(
                    "tree count capped at {} for n = {n} (full scale is q = n)",
                    opts.trees_cap
                ));
            }
        }
    }

    let table = KernelTable::default();
    let result = rate_experiment(&truth, &opts, &table)?;
    builder.stage("chains");

    // Per-cell wall times live in the manifest, not the data file: outputs
    // must be byte-identical across reruns of the same argv and seed.
    let header = [
        "n",
        "replicate",
        "prior",
        "adaptive",
        "hellinger_error",
        "seed",
        "within_1eps",
        "within_2eps",
        "within_4eps",
        "warnings",
    ];
    let mut body = String::new();
    body.push_str(&header.join(","));
    body.push('\n');
    for r in &result.rows {
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.replicate,
            r.prior.as_str(),
            r.adaptive,
            r.hellinger_error,
            r.seed,
            r.within_eps[0],
            r.within_eps[1],
            r.within_eps[2],
            r.warnings
        ));
    }
    let total_wall: f64 = result.rows.iter().map(|r| r.wall_seconds).sum();
    builder.warn(format!("chain wall time across cells: {total_wall:.2}s"));
    std::fs::write(out, body)
        .map_err(|e| Error::Data(format!("writing {}: {e}", out.display())))?;
    builder.stage("write");
    builder.finalize(&[out.to_path_buf()])?;

    println!(
        "fitted slope = {:.4} (se {:.4}), target = {:.4}",
        result.slope, result.slope_se, -result.target_exponent
    );
    for (n, med) in &result.medians {
        println!("n = {n}: median hellinger error {med:.4}");
    }
    Ok(0)
}

pub fn verify_lemmas_cmd(trials: usize, seed: u64, inject_fault: bool) -> Result<i32> {
    let mut table = KernelTable::default();
    if inject_fault {
        table.inject_omega_fault();
    }
    let report = verify_lemmas(&table, seed, trials)?;
    print!("{report}");
    if report.passed() {
        println!("all inequality families hold");
        Ok(0)
    } else {
        println!("violations detected");
        Ok(4)
    }
}

pub fn dispatch(cli: crate::args::Cli) -> Result<i32> {
    use crate::args::Command::*;
    match cli.command {
        KernelTable { m, resolution, out } => kernel_table(m, resolution, &out),
        SamplePrior {
            prior,
            m,
            depth,
            trees,
            u_bound,
            tau,
            beta,
            seed,
            grid,
            out,
        } => sample_prior_cmd(
            prior, m, depth, trees, u_bound, tau, &beta, seed, grid, &out,
        ),
        Fit {
            data,
            prior,
            adaptive,
            alpha,
            iters,
            burnin,
            seed,
            grid,
            out,
            density_out,
        } => fit(
            &data,
            prior,
            adaptive,
            alpha,
            iters,
            burnin,
            seed,
            grid,
            &out,
            &density_out,
        ),
        Metrics { f, g, metric } => metrics(&f, &g, metric),
        RateExperiment {
            alpha,
            prior,
            adaptive,
            n,
            replicates,
            seed,
            iters,
            burnin,
            out,
        } => rate_experiment_cmd(
            alpha, prior, adaptive, &n, replicates, seed, iters, burnin, &out,
        ),
        VerifyLemmas {
            trials,
            seed,
            inject_omega_fault,
        } => verify_lemmas_cmd(trials, seed, inject_omega_fault),
    }
}
