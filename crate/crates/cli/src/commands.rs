use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use ccpo_core::data::{estimate_moments, synth_returns, ReturnsPanel, SectorLayout, SynthParams};
use ccpo_core::experiments::{
    default_beta_grid, default_gamma_grid, default_universe, default_variants, escape_experiment,
    frontier_cvar, frontier_markowitz, quantile_rank, write_escape_csv, write_frontier_csv,
    ModelSpec, Variant,
};
use ccpo_core::oracle::{exhaustive_search, write_histogram_csv};
use ccpo_core::projection::GroupConfig;
use ccpo_core::solver::{solve, SolveReport, StepMode};
use ccpo_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Objective, RunConfig};
use crate::{Command, ConfigArgs, EscapeArgs, FrontierArgs, ModelArg, OracleArgs, SynthArgs, VariantSet};

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub tickers: Vec<String>,
    pub partition: Vec<GroupConfig>,
    #[serde(flatten)]
    pub report: SolveReport,
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Solve(a) => solve_cmd(&a),
        Command::Frontier(a) => frontier(&a),
        Command::Oracle(a) => oracle(&a),
        Command::Escape(a) => escape(&a),
    }
}

/// Load the config, apply flag overrides, and check it.
pub fn effective_config(args: &ConfigArgs) -> Result<RunConfig> {
    if !args.config.is_file() {
        return Err(Error::Validation(vec![format!(
            "config file {} does not exist",
            args.config.display()
        )]));
    }
    let mut cfg = RunConfig::load(&args.config)?;
    let mut problems = Vec::new();
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.max_iters {
        cfg.solver.max_iters = m;
    }
    if let Some(t) = args.tol {
        cfg.solver.tol = t;
    }
    if let Some(a) = args.accelerate {
        cfg.solver.accelerate = a;
    }
    if let Some(nu) = &args.nu_schedule {
        cfg.solver.nu_schedule = nu.clone();
    }
    if let Some(step) = &args.step {
        match step.as_str() {
            "lipschitz" => cfg.solver.step_mode = StepMode::InverseLipschitz,
            s => match s.parse::<f64>() {
                Ok(d) => cfg.solver.step_mode = StepMode::Fixed(d),
                Err(_) => problems.push(format!("--step: expected a number or `lipschitz`, got `{s}`")),
            },
        }
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    problems.extend(cfg.violations());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Validation(problems))
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn stamp(cfg: &RunConfig) -> String {
    format!("config_hash={} seed={}", cfg.hash(), cfg.seed)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let clock = Instant::now();
    let layout = SectorLayout::Even(args.sectors);
    let panel = synth_returns(args.n_assets, args.n_samples, &layout, &SynthParams::default(), args.seed)?;
    let mut out = create(&args.out, "returns.csv")?;
    writeln!(out, "# seed={}", args.seed)?;
    panel.write_csv(&mut out)?;
    out.flush()?;
    if let Some(labels) = &panel.sectors {
        let map: std::collections::BTreeMap<_, _> = panel.tickers.iter().zip(labels).collect();
        let mut f = create(&args.out, "sectors.json")?;
        serde_json::to_writer_pretty(&mut f, &map)?;
        f.flush()?;
    }
    println!(
        "assets={} samples={} seed={} wall_time={:.3}s",
        panel.n_assets(),
        panel.n_samples(),
        args.seed,
        clock.elapsed().as_secs_f64()
    );
    Ok(())
}

fn estimate(args: &ConfigArgs) -> Result<()> {
    let clock = Instant::now();
    let cfg = effective_config(args)?;
    let panel = cfg.load_panel()?;
    let m = estimate_moments(&panel);
    let mut out = create(&cfg.output_dir, "moments.csv")?;
    writeln!(out, "# {}", stamp(&cfg))?;
    let mut w = csv::Writer::from_writer(&mut out);
    let mut header = vec!["ticker".to_owned(), "mean".to_owned()];
    header.extend(panel.tickers.iter().cloned());
    w.write_record(&header)?;
    for (i, t) in panel.tickers.iter().enumerate() {
        let mut row = vec![t.clone(), format!("{:.17e}", m.mu[i])];
        row.extend(m.sigma.row(i).iter().map(|v| format!("{v:.17e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    println!(
        "assets={} samples={} wall_time={:.3}s",
        panel.n_assets(),
        panel.n_samples(),
        clock.elapsed().as_secs_f64()
    );
    Ok(())
}

fn solve_cmd(args: &ConfigArgs) -> Result<()> {
    let cfg = effective_config(args)?;
    let panel = cfg.load_panel()?;
    let problem = cfg.problem(&panel)?;
    let report = solve(&problem, &cfg.solver_config())?;

    let mut out = create(&cfg.output_dir, "weights.csv")?;
    writeln!(out, "# {}", stamp(&cfg))?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(&panel.tickers)?;
    w.write_record(report.weights.iter().map(|v| format!("{v:.17e}")))?;
    w.flush()?;
    drop(w);
    out.flush()?;

    let full = RunReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        tickers: panel.tickers.clone(),
        partition: problem.partition.to_config(&panel.tickers),
        report,
    };
    let mut f = create(&cfg.output_dir, "report.json")?;
    serde_json::to_writer_pretty(&mut f, &full)?;
    f.flush()?;

    let r = &full.report;
    println!(
        "objective={:.10e} gap={:.3e} iterations={} wall_time={:.3}s",
        r.objective, r.relax_gap, r.iterations, r.wall_time
    );
    Ok(())
}

fn frontier(args: &FrontierArgs) -> Result<()> {
    let clock = Instant::now();
    let cfg = effective_config(&args.base)?;
    let panel = cfg.load_panel()?;
    let variants = match args.variants {
        VariantSet::Config => vec![Variant {
            label: "config".into(),
            partition: cfg.partition(&panel)?,
        }],
        VariantSet::Default => default_variants(&panel)?,
    };
    let solver = cfg.solver_config();
    let curves = match cfg.objective {
        Objective::Markowitz { lambda_ridge, .. } => {
            let grid = args.grid.clone().unwrap_or_else(default_gamma_grid);
            frontier_markowitz(&panel, &grid, lambda_ridge, &variants, &solver)?
        }
        Objective::Cvar { rho_relax, .. } => {
            let grid = args.grid.clone().unwrap_or_else(default_beta_grid);
            frontier_cvar(&panel, &grid, rho_relax, &variants, &solver)?
        }
    };
    let out = create(&cfg.output_dir, "frontier.csv")?;
    write_frontier_csv(out, &stamp(&cfg), panel.n_assets(), &curves)?;
    let points: usize = curves.iter().map(|c| c.points.len()).sum();
    let failed: usize = curves
        .iter()
        .flat_map(|c| &c.points)
        .filter(|p| p.error.is_some())
        .count();
    for c in &curves {
        for p in c.points.iter().filter(|p| p.error.is_some()) {
            eprintln!("{} at {}: {}", c.label, p.parameter, p.error.as_deref().unwrap_or(""));
        }
    }
    println!(
        "curves={} points={points} failed={failed} wall_time={:.3}s",
        curves.len(),
        clock.elapsed().as_secs_f64()
    );
    Ok(())
}

#[derive(Serialize)]
struct OracleSummary<'a> {
    config_hash: String,
    seed: u64,
    best_support: Vec<&'a str>,
    best_value: f64,
    best_weights: &'a [f64],
    subsets_evaluated: u64,
    solver_value: f64,
    solver_quantile_rank: f64,
    oracle_seconds: f64,
    solver_seconds: f64,
}

fn oracle(args: &OracleArgs) -> Result<()> {
    let cfg = effective_config(&args.base)?;
    let panel = cfg.load_panel()?;
    let problem = cfg.problem(&panel)?;
    let clock = Instant::now();
    let result = exhaustive_search(&problem, args.cap, true)?;
    let oracle_seconds = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let rep = solve(&problem, &cfg.solver_config())?;
    let solver_seconds = clock.elapsed().as_secs_f64();
    let values = result.all_values.as_deref().unwrap_or(&[]);
    let summary = OracleSummary {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        best_support: result.best_support.iter().map(|&i| panel.tickers[i].as_str()).collect(),
        best_value: result.best_value,
        best_weights: &result.best_w,
        subsets_evaluated: result.subsets_evaluated,
        solver_value: rep.objective,
        solver_quantile_rank: quantile_rank(values, rep.objective),
        oracle_seconds,
        solver_seconds,
    };
    let hist = create(&cfg.output_dir, "histogram.csv")?;
    write_histogram_csv(hist, &stamp(&cfg), values)?;
    let mut f = create(&cfg.output_dir, "oracle.json")?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.flush()?;
    println!(
        "best={:.10e} solver={:.10e} rank={:.4} subsets={} wall_time={:.3}s",
        summary.best_value,
        summary.solver_value,
        summary.solver_quantile_rank,
        summary.subsets_evaluated,
        oracle_seconds + solver_seconds
    );
    Ok(())
}

fn escape(args: &EscapeArgs) -> Result<()> {
    let (panel, solver): (ReturnsPanel, _) = match &args.config {
        Some(path) => {
            let cfg = effective_config(&ConfigArgs {
                config: path.clone(),
                seed: Some(args.seed),
                max_iters: None,
                tol: None,
                accelerate: None,
                nu_schedule: None,
                step: None,
                out: None,
            })?;
            (cfg.load_panel()?, cfg.solver_config())
        }
        None => (
            default_universe(),
            ccpo_core::solver::SolverConfig {
                seed: args.seed,
                ..Default::default()
            },
        ),
    };
    let spec = match args.model {
        ModelArg::Markowitz => ModelSpec::markowitz(args.gamma),
        ModelArg::Cvar => ModelSpec::cvar(args.beta),
    };
    let table = escape_experiment(&panel, &spec, &args.n, &args.k, args.trials, args.seed, &solver)?;
    let comment = format!("seed={}", args.seed);
    write_escape_csv(std::io::stdout().lock(), &comment, &table)?;
    if let Some(dir) = &args.out {
        write_escape_csv(create(dir, "escape.csv")?, &comment, &table)?;
    }
    Ok(())
}
