//! Command-line front end: simulate, fit, decode, sweep, consistency and
//! curve runs driven by flags or flat key=value config files, writing all
//! outputs plus a checksummed manifest under --out.
//!
//! Exit codes: 0 success, 2 usage/validation, 3 ingestion/file I/O,
//! 4 numeric or convergence failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ctssm::decoding::{expected_trajectory, viterbi};
use ctssm::discretization::{build_grid, default_range, TransitionCache};
use ctssm::inference::{
    fit, moment_start, FitOptions, FitResult, FitTemplate, PanelDataset,
};
use ctssm::io::{
    read_dataset_csv, read_fit_report, read_true_states_csv, write_consistency_csv,
    write_curve_csv, write_dataset_csv, write_decoded_csv, write_fit_report, write_sweep_csv,
    write_true_states_csv, DecodedRow, Manifest,
};
use ctssm::simulation::{
    generate_dataset, generate_panel, run_consistency_study, run_m_sweep, PanelConfig, SimSetting,
};
use ctssm::splines::{SplineBasis, SplineCoefficients};
use ctssm::state_process::OuParams;
use ctssm::{Error, Result};

#[derive(Parser)]
#[command(name = "ctssm", about = "Continuous-time state-space models for irregular counts")]
struct Cli {
    /// Flat key=value config file; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (single sequence or case-study panel)
    Simulate(SimulateArgs),
    /// Fit a model to a dataset CSV
    Fit(FitArgs),
    /// Decode the most likely state path given a fit report
    Decode(DecodeArgs),
    /// Fit one dataset across a range of grid sizes (Table-2-shaped)
    Sweep(SweepArgs),
    /// Replicated generate-and-fit bias study (boxplot-ready CSV)
    Consistency(ConsistencyArgs),
    /// Emit fitted age-effect curves from a spline fit report
    Curve(CurveArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation setting 1, 2 or 3 (single-sequence mode)
    #[arg(long)]
    setting: Option<usize>,
    /// Number of observations (single-sequence mode)
    #[arg(long = "T")]
    t_len: Option<usize>,
    /// Generate a case-study-shaped panel instead of one sequence
    #[arg(long)]
    panel: bool,
    #[arg(long)]
    n_individuals: Option<usize>,
    /// Per-wave nonresponse probability (panel mode)
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// poisson-scale | negbin-spline | benchmark
    #[arg(long)]
    family: Option<String>,
    /// Number of grid intervals
    #[arg(long)]
    m: Option<usize>,
    /// Grid range as two values, e.g. --range -2.5 2.5, or "auto"
    #[arg(long, num_args = 1..=2, allow_hyphen_values = true)]
    range: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    multi_start: Option<usize>,
    /// Skip the quasi-Newton polish after Nelder-Mead
    #[arg(long)]
    no_refine: bool,
    /// Skip observed-Fisher standard errors (on by default)
    #[arg(long)]
    no_ci: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Fit report JSON produced by `fit`
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Optional true-states CSV; decoded-vs-true correlation goes in the
    /// manifest
    #[arg(long)]
    true_states: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    setting: Option<usize>,
    #[arg(long = "T")]
    t_len: Option<usize>,
    /// Comma-separated grid sizes (default 20,30,50,100,150)
    #[arg(long)]
    m_values: Option<String>,
    #[arg(long, num_args = 2, allow_hyphen_values = true)]
    range: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConsistencyArgs {
    #[arg(long)]
    setting: Option<usize>,
    /// Comma-separated sequence lengths (default 2000,5000)
    #[arg(long)]
    t_values: Option<String>,
    /// Add T = 10000 to the default schedule
    #[arg(long)]
    full: bool,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Age grid as min:max:step (default 12:28:0.25)
    #[arg(long)]
    ages: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = match cli.config.as_deref().map(load_config).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => return fail(&e),
    };
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args, &config),
        Command::Fit(args) => cmd_fit(args, &config),
        Command::Decode(args) => cmd_decode(args, &config),
        Command::Sweep(args) => cmd_sweep(args, &config),
        Command::Consistency(args) => cmd_consistency(args, &config),
        Command::Curve(args) => cmd_curve(args, &config),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    let code = match e {
        Error::Ingestion { .. } | Error::Io { .. } => 3,
        Error::NumericFailure { .. }
        | Error::NumericDomain(_)
        | Error::IllConditionedGrid(_)
        | Error::InvalidStart(_) => 4,
        _ => 2,
    };
    ExitCode::from(code)
}

type Config = BTreeMap<String, String>;

fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::invalid(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Flag value if given, else the config-file value, else the default.
fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    config: &Config,
    key: &str,
    default: Option<T>,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    if let Some(raw) = config.get(key) {
        return raw
            .parse()
            .map_err(|_| Error::invalid(format!("config key {key}: cannot parse {raw:?}")));
    }
    default.ok_or_else(|| Error::invalid(format!("missing required option --{key}")))
}

fn resolve_out(flag: Option<PathBuf>, config: &Config) -> Result<PathBuf> {
    let out = match flag {
        Some(p) => p,
        None => PathBuf::from(
            config
                .get("out")
                .ok_or_else(|| Error::invalid("missing required option --out"))?,
        ),
    };
    std::fs::create_dir_all(&out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("cannot parse {what} value {s:?}")))
        })
        .collect()
}

const TIME_UNIT_DAYS: &str = "days";
const TIME_UNIT_YEARS: &str = "years";

fn cmd_simulate(args: SimulateArgs, config: &Config) -> Result<ExitCode> {
    let out = resolve_out(args.out, config)?;
    let seed = resolve(args.seed, config, "seed", None)?;
    let panel_mode =
        args.panel || config.get("panel").map(|v| v == "true").unwrap_or(false);
    let mut cfg: Config = config.clone();
    cfg.insert("seed".into(), seed.to_string());

    let data_path = out.join("dataset.csv");
    let states_path = out.join("true_states.csv");
    let (unit, blocks, panel) = if panel_mode {
        let n = resolve(args.n_individuals, config, "n-individuals", Some(1000))?;
        let dropout = resolve(args.dropout, config, "dropout", Some(0.0))?;
        cfg.insert("panel".into(), "true".into());
        cfg.insert("n-individuals".into(), n.to_string());
        cfg.insert("dropout".into(), dropout.to_string());
        let generated = generate_panel(&PanelConfig {
            n_individuals: n,
            dropout,
            ..PanelConfig::case_study_default(seed)
        })?;
        let blocks: Vec<(String, Vec<f64>, Vec<f64>)> = generated
            .true_states
            .iter()
            .map(|(id, states)| {
                let seq = &generated
                    .panel
                    .sequences()
                    .iter()
                    .find(|(sid, _)| sid == id)
                    .expect("aligned ids")
                    .1;
                (id.clone(), seq.times().to_vec(), states.clone())
            })
            .collect();
        (TIME_UNIT_YEARS, blocks, generated.panel)
    } else {
        let setting_idx = resolve(args.setting, config, "setting", None)?;
        let t_len = resolve(args.t_len, config, "T", Some(2000))?;
        cfg.insert("setting".into(), setting_idx.to_string());
        cfg.insert("T".into(), t_len.to_string());
        let setting = SimSetting::preset(setting_idx, seed)?.with_t_len(t_len);
        let generated = generate_dataset(&setting)?;
        let blocks = vec![(
            "0".to_string(),
            generated.observations.times().to_vec(),
            generated.true_states.clone(),
        )];
        (
            TIME_UNIT_DAYS,
            blocks,
            PanelDataset::single(generated.observations),
        )
    };
    write_dataset_csv(&data_path, &panel)?;
    write_true_states_csv(&states_path, &blocks)?;

    let mut manifest = Manifest::new("simulate", cfg, Some(seed), unit);
    manifest.add_file(&data_path)?;
    manifest.add_file(&states_path)?;
    manifest.write(&out.join("manifest.json"))?;
    println!(
        "wrote {} ({} individuals, {} observations)",
        data_path.display(),
        panel.len(),
        panel.n_observations()
    );
    Ok(ExitCode::SUCCESS)
}

fn build_template(
    family: &str,
    data: &PanelDataset,
    m: usize,
    range: Option<(f64, f64)>,
) -> Result<FitTemplate> {
    let auto_range = |fallback: (f64, f64)| -> Result<(f64, f64)> {
        match family {
            "poisson-scale" => {
                let (theta0, sigma0, _) = moment_start(data);
                let process = OuParams::new(theta0, 0.0, sigma0)?;
                Ok(default_range(&process))
            }
            _ => Ok(fallback),
        }
    };
    match family {
        "poisson-scale" => {
            let (b0, bm) = match range {
                Some(r) => r,
                None => auto_range((-2.5, 2.5))?,
            };
            Ok(FitTemplate::PoissonScale {
                grid: build_grid(b0, bm, m)?,
            })
        }
        "negbin-spline" => {
            let (b0, bm) = range.unwrap_or((-9.0, 9.0));
            Ok(FitTemplate::NegBinSpline {
                grid: build_grid(b0, bm, m)?,
                basis: SplineBasis::age_default(),
            })
        }
        "benchmark" => Ok(FitTemplate::Benchmark {
            basis: SplineBasis::age_default(),
        }),
        other => Err(Error::invalid(format!(
            "unknown family {other:?} (expected poisson-scale, negbin-spline or benchmark)"
        ))),
    }
}

fn parse_range(raw: &[String]) -> Result<Option<(f64, f64)>> {
    if raw.len() == 1 && raw[0] == "auto" {
        return Ok(None);
    }
    if raw.len() == 2 {
        let b0: f64 = raw[0]
            .parse()
            .map_err(|_| Error::invalid(format!("bad range value {:?}", raw[0])))?;
        let bm: f64 = raw[1]
            .parse()
            .map_err(|_| Error::invalid(format!("bad range value {:?}", raw[1])))?;
        return Ok(Some((b0, bm)));
    }
    Err(Error::invalid("--range takes two numbers or the word auto"))
}

fn render_summary(result: &FitResult) -> String {
    let mut s = String::new();
    s.push_str(&format!("model: {}\n", result.model));
    if let Some(g) = result.grid {
        s.push_str(&format!("grid: [{}, {}] with m = {}\n", g.b0, g.bm, g.m));
    }
    s.push_str(&format!(
        "{:<12} {:>12} {:>12} {:>24}\n",
        "parameter", "estimate", "se", "95% CI"
    ));
    for (name, est) in &result.estimates {
        let se = result.se[name]
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        let ci = result.ci95[name]
            .map(|[lo, hi]| format!("[{lo:.4}; {hi:.4}]"))
            .unwrap_or_else(|| "-".into());
        s.push_str(&format!("{name:<12} {est:>12.4} {se:>12} {ci:>24}\n"));
    }
    s.push_str(&format!(
        "-llk: {:.2}  AIC: {:.2}\n{} after {} evaluations in {:.1} s\n",
        -result.loglik,
        result.aic,
        result.convergence.status,
        result.convergence.evaluations,
        result.convergence.seconds
    ));
    for d in &result.diagnostics {
        s.push_str(&format!("note: {d}\n"));
    }
    s
}

fn cmd_fit(args: FitArgs, config: &Config) -> Result<ExitCode> {
    let out = resolve_out(args.out, config)?;
    let data_path: PathBuf = resolve(args.data, config, "data", None)?;
    let family: String = resolve(args.family, config, "family", None)?;
    let m = resolve(args.m, config, "m", Some(100))?;
    let seed = resolve(args.seed, config, "seed", Some(0))?;
    let range = match args.range {
        Some(raw) => parse_range(&raw)?,
        None => match config.get("range") {
            Some(raw) => {
                let parts: Vec<String> =
                    raw.split_whitespace().map(str::to_string).collect();
                parse_range(&parts)?
            }
            None => None,
        },
    };
    let data = read_dataset_csv(&data_path)?;
    let template = build_template(&family, &data, m, range)?;
    let default_starts = if data.len() > 1 { 3 } else { 1 };
    let options = FitOptions {
        multi_start: resolve(args.multi_start, config, "multi-start", Some(default_starts))?,
        refine: !args.no_refine,
        compute_ci: !args.no_ci,
        seed: Some(seed),
        ..FitOptions::default()
    };
    let result = fit(&data, &template, &options)?;

    let report_path = out.join("fit.json");
    write_fit_report(&report_path, &result)?;
    let summary = render_summary(&result);
    let summary_path = out.join("summary.txt");
    std::fs::write(&summary_path, &summary).map_err(|source| Error::Io {
        path: summary_path.display().to_string(),
        source,
    })?;
    print!("{summary}");

    let mut cfg: Config = config.clone();
    cfg.insert("data".into(), data_path.display().to_string());
    cfg.insert("family".into(), family.clone());
    cfg.insert("m".into(), m.to_string());
    cfg.insert("seed".into(), seed.to_string());
    let mut manifest = Manifest::new("fit", cfg, Some(seed), TIME_UNIT_DAYS);
    manifest.add_file(&report_path)?;
    manifest.add_file(&summary_path)?;
    manifest.write(&out.join("manifest.json"))?;

    if result.converged() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("warning: optimizer did not converge; report written anyway");
        Ok(ExitCode::from(4))
    }
}

fn cmd_decode(args: DecodeArgs, config: &Config) -> Result<ExitCode> {
    let out = resolve_out(args.out, config)?;
    let data_path: PathBuf = resolve(args.data, config, "data", None)?;
    let fit_path: PathBuf = resolve(args.fit, config, "fit", None)?;
    let data = read_dataset_csv(&data_path)?;
    let report = read_fit_report(&fit_path)?;
    let spec = report.to_model_spec()?;
    let cache = TransitionCache::new();

    let mut rows = Vec::with_capacity(data.n_observations());
    let mut decoded_all = Vec::new();
    for (id, seq) in data.sequences() {
        let path = viterbi(seq, &spec, &cache)?;
        let (expected, equilibrium) = expected_trajectory(seq, &spec, &path)?;
        for k in 0..seq.len() {
            rows.push(DecodedRow {
                id: id.clone(),
                time: seq.times()[k],
                state_index: path.state_indices[k],
                state_value: path.state_values[k],
                expected_count: expected[k],
                equilibrium_count: equilibrium[k],
            });
        }
        decoded_all.push((id.clone(), path));
    }
    let decoded_path = out.join("decoded.csv");
    write_decoded_csv(&decoded_path, &rows)?;

    let mut cfg: Config = config.clone();
    cfg.insert("data".into(), data_path.display().to_string());
    cfg.insert("fit".into(), fit_path.display().to_string());
    let mut manifest = Manifest::new("decode", cfg, report.seed, TIME_UNIT_DAYS);
    manifest.add_file(&decoded_path)?;

    let truth_flag = args.true_states.or_else(|| {
        config.get("true-states").map(PathBuf::from)
    });
    if let Some(truth_path) = truth_flag {
        let truth = read_true_states_csv(&truth_path)?;
        let mut xs = Vec::new();
        let mut ds = Vec::new();
        for (id, _, states) in &truth {
            if let Some((_, path)) = decoded_all.iter().find(|(did, _)| did == id) {
                if path.state_values.len() == states.len() {
                    xs.extend_from_slice(states);
                    ds.extend_from_slice(&path.state_values);
                }
            }
        }
        if xs.len() > 1 {
            manifest.note("decoded_true_correlation", format!("{:.6}", correlation(&ds, &xs)));
        }
    }
    manifest.write(&out.join("manifest.json"))?;
    println!("wrote {} ({} rows)", decoded_path.display(), rows.len());
    Ok(ExitCode::SUCCESS)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt().max(1e-300)
}

fn cmd_sweep(args: SweepArgs, config: &Config) -> Result<ExitCode> {
    let out = resolve_out(args.out, config)?;
    let setting_idx = resolve(args.setting, config, "setting", None)?;
    let t_len = resolve(args.t_len, config, "T", Some(2000))?;
    let seed = resolve(args.seed, config, "seed", None)?;
    let m_values: Vec<usize> = match args.m_values.or_else(|| config.get("m-values").cloned()) {
        Some(raw) => parse_list(&raw, "m")?,
        None => vec![20, 30, 50, 100, 150],
    };
    let range = match args.range {
        Some(r) => (r[0], r[1]),
        None => (-2.5, 2.5),
    };
    let setting = SimSetting::preset(setting_idx, seed)?.with_t_len(t_len);
    let sweep = run_m_sweep(&setting, &m_values, range, &FitOptions::default())?;

    let table_path = out.join("sweep.csv");
    write_sweep_csv(&table_path, &sweep)?;
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>9} {:>12}",
        "m", "theta", "sigma", "alpha", "seconds", "neg_llk"
    );
    let mut n_ok = 0usize;
    for row in &sweep.rows {
        match &row.error {
            None => {
                n_ok += 1;
                println!(
                    "{:>6} {:>10.4} {:>10.4} {:>10.2} {:>9.1} {:>12.2}",
                    row.m,
                    row.estimates["theta"],
                    row.estimates["sigma"],
                    row.estimates["alpha"],
                    row.seconds,
                    row.neg_loglik
                );
            }
            Some(e) => println!("{:>6} failed: {e}", row.m),
        }
    }

    let mut cfg: Config = config.clone();
    cfg.insert("setting".into(), setting_idx.to_string());
    cfg.insert("T".into(), t_len.to_string());
    cfg.insert("seed".into(), seed.to_string());
    let mut manifest = Manifest::new("sweep", cfg, Some(seed), TIME_UNIT_DAYS);
    manifest.add_file(&table_path)?;
    manifest.write(&out.join("manifest.json"))?;
    if n_ok == 0 {
        Err(Error::NumericFailure {
            step: 0,
            message: "every sweep fit failed".into(),
        })
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_consistency(args: ConsistencyArgs, config: &Config) -> Result<ExitCode> {
    let out = resolve_out(args.out, config)?;
    let setting_idx = resolve(args.setting, config, "setting", None)?;
    let seed = resolve(args.seed, config, "seed", None)?;
    let replicates = resolve(args.replicates, config, "replicates", Some(50))?;
    let m = resolve(args.m, config, "m", Some(100))?;
    let t_values: Vec<usize> = match args.t_values.or_else(|| config.get("t-values").cloned()) {
        Some(raw) => parse_list(&raw, "T")?,
        None if args.full => vec![2000, 5000, 10000],
        None => vec![2000, 5000],
    };
    let setting = SimSetting::preset(setting_idx, seed)?;
    let study = run_consistency_study(
        &setting,
        &t_values,
        replicates,
        m,
        (-2.5, 2.5),
        &FitOptions::default(),
    )?;

    let table_path = out.join("consistency.csv");
    write_consistency_csv(&table_path, &study)?;
    for &t in &t_values {
        for param in ["theta", "sigma", "alpha"] {
            let mut biases: Vec<f64> = study
                .rows
                .iter()
                .filter(|r| r.t_len == t && r.error.is_none())
                .map(|r| r.relative_bias[param])
                .collect();
            if biases.is_empty() {
                continue;
            }
            biases.sort_by(|a, b| a.total_cmp(b));
            let median = biases[biases.len() / 2];
            println!("T={t} {param:<6} median relative bias {median:+.3}");
        }
    }
    if study.n_failed > 0 {
        println!("{} replicate fits failed and were excluded", study.n_failed);
    }

    let mut cfg: Config = config.clone();
    cfg.insert("setting".into(), setting_idx.to_string());
    cfg.insert("replicates".into(), replicates.to_string());
    cfg.insert("m".into(), m.to_string());
    cfg.insert("seed".into(), seed.to_string());
    let mut manifest = Manifest::new("consistency", cfg, Some(seed), TIME_UNIT_DAYS);
    manifest.note("failed_fits", study.n_failed.to_string());
    manifest.add_file(&table_path)?;
    manifest.write(&out.join("manifest.json"))?;
    if study.rows.len() == study.n_failed {
        Err(Error::NumericFailure {
            step: 0,
            message: "every replicate fit failed".into(),
        })
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_curve(args: CurveArgs, config: &Config) -> Result<ExitCode> {
    let out = resolve_out(args.out, config)?;
    let fit_path: PathBuf = resolve(args.fit, config, "fit", None)?;
    let report = read_fit_report(&fit_path)?;
    let basis = SplineBasis::age_default();
    let coeff = |prefix: &str| -> Result<SplineCoefficients> {
        let mut v = Vec::with_capacity(basis.basis_count());
        for l in 1..=basis.basis_count() {
            let key = format!("{prefix}_{l}");
            v.push(*report.estimates.get(&key).ok_or_else(|| {
                Error::invalid(format!(
                    "fit report has no {key}; curve needs a spline-family fit"
                ))
            })?);
        }
        SplineCoefficients::new(v, &basis)
    };
    let omega1 = coeff("omega1")?;
    let omega2 = coeff("omega2")?;

    let spec = args
        .ages
        .or_else(|| config.get("ages").cloned())
        .unwrap_or_else(|| "12:28:0.25".to_string());
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| {
            s.parse()
                .map_err(|_| Error::invalid(format!("bad --ages component {s:?}")))
        })
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(Error::invalid("--ages must look like min:max:step"));
    };
    if !(step > 0.0 && hi >= lo) {
        return Err(Error::invalid("--ages must have positive step and max >= min"));
    }
    let mut ages = Vec::new();
    let mut a = lo;
    while a <= hi + 1e-9 {
        ages.push(a);
        a += step;
    }

    let curve_path = out.join("curve.csv");
    write_curve_csv(&curve_path, &basis, &omega1, &omega2, &ages)?;
    let mut cfg: Config = config.clone();
    cfg.insert("fit".into(), fit_path.display().to_string());
    cfg.insert("ages".into(), spec);
    let mut manifest = Manifest::new("curve", cfg, report.seed, TIME_UNIT_YEARS);
    manifest.add_file(&curve_path)?;
    manifest.write(&out.join("manifest.json"))?;
    println!("wrote {} ({} ages)", curve_path.display(), ages.len());
    Ok(ExitCode::SUCCESS)
}
