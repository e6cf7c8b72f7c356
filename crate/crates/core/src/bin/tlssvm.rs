use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tlssvm::cv::{grid_search, HyperParams};
use tlssvm::dataset::{
    csv_header, generate_synthetic, load_csv, load_csv_infer_grid, read_table, MtlDataset,
};
use tlssvm::experiment::{run_benchmark, ExperimentSpec};
use tlssvm::metrics::{comparison_table, EvalReport};
use tlssvm::model::{AnyModel, Method, TrainedModel};
use tlssvm::solver::{fit, FitState, Step};
use tlssvm::tensor::TaskGrid;
use tlssvm::{Error, Result};

/// Tensorized LSSVM multitask regression.
#[derive(Parser)]
#[command(name = "tlssvm", version)]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the command's random draws.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train.csv, test.csv and truth.json.
    Generate {
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Fit a model; writes model.json, trace.csv and fit.json.
    Train(TrainArgs),
    /// Append a y_hat column to a CSV file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output file name inside --out-dir.
        #[arg(long, default_value = "predictions.csv")]
        output: String,
    },
    /// Score one or more models on a test CSV; writes report.json.
    Evaluate {
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long)]
        test: PathBuf,
    },
    /// Grid search with k-fold cross-validation; writes cv.json.
    Cv {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Multi-SNR synthetic comparison; writes benchmark.csv, benchmark.json
    /// and runs/*.json.
    Benchmark,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    train: PathBuf,
    /// Task grid sizes, e.g. `3,4`; inferred from the file when omitted.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<usize>>,
    #[arg(long)]
    method: Option<Method>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    jitter: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut spec = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            ExperimentSpec::from_json(&text)?
        }
        None => ExperimentSpec::default(),
    };
    fs::create_dir_all(&cli.out_dir)?;
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Generate { snr } => {
            if let Some(seed) = cli.seed {
                spec.synthetic.seed = seed;
            }
            if let Some(snr) = snr {
                spec.synthetic.snr = snr;
            }
            cmd_generate(&spec, out)
        }
        Command::Train(args) => {
            if cli.config.is_none() {
                return Err(Error::Config("train requires --config".into()));
            }
            apply_overrides(&mut spec, cli.seed, &args.data);
            if let Some(n) = args.max_iters {
                spec.fit.max_iters = n;
            }
            if let Some(j) = args.jitter {
                spec.fit.jitter = j;
            }
            cmd_train(&spec, &args.data, out)
        }
        Command::Predict {
            model,
            data,
            output,
        } => cmd_predict(&model, &data, &out.join(output)),
        Command::Evaluate { model, test } => cmd_evaluate(&model, &test, out),
        Command::Cv { data } => {
            apply_overrides(&mut spec, cli.seed, &data);
            cmd_cv(&spec, &data, out)
        }
        Command::Benchmark => {
            if let Some(seed) = cli.seed {
                spec.synthetic.seed = seed;
            }
            cmd_benchmark(&spec, out)
        }
    }
}

fn apply_overrides(spec: &mut ExperimentSpec, seed: Option<u64>, data: &DataArgs) {
    if let Some(seed) = seed {
        spec.fit.seed = seed;
    }
    if let Some(m) = data.method {
        spec.method = m;
    }
    if let Some(modes) = &data.modes {
        spec.modes = Some(modes.clone());
    }
}

fn load_train(spec: &ExperimentSpec, path: &Path) -> Result<MtlDataset> {
    match &spec.modes {
        Some(modes) => load_csv(path, &TaskGrid::new(modes.clone())?),
        None => load_csv_infer_grid(path),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn cmd_generate(spec: &ExperimentSpec, out: &Path) -> Result<()> {
    let data = generate_synthetic(&spec.synthetic)?;
    data.train.save_csv(out.join("train.csv"))?;
    data.test.save_csv(out.join("test.csv"))?;
    write_json(&out.join("truth.json"), &data.truth.to_json())?;
    println!(
        "wrote {} training and {} test samples over {} tasks to {}",
        data.train.len(),
        data.test.len(),
        data.train.num_tasks(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    method: Method,
    params: HyperParams,
    converged: Option<bool>,
    iterations: Option<usize>,
    final_objective: Option<f64>,
    warnings: Vec<String>,
    cv_mean_rmse: Option<f64>,
}

fn cmd_train(spec: &ExperimentSpec, args: &DataArgs, out: &Path) -> Result<()> {
    spec.fit.validate()?;
    let data = load_train(spec, &args.train)?;
    let (params, cv_mean_rmse) = if spec.tune {
        let report = grid_search(
            &data,
            spec.method,
            &spec.grid,
            &spec.fit,
            spec.folds,
            spec.fit.seed,
        )?;
        (report.best_params, Some(report.best_mean_rmse))
    } else {
        (spec.fixed_params(spec.method), None)
    };
    let config = params.apply(&spec.fit);
    let mut summary = FitSummary {
        method: spec.method,
        params,
        converged: None,
        iterations: None,
        final_objective: None,
        warnings: Vec::new(),
        cv_mean_rmse,
    };
    match spec.method {
        Method::Tlssvm => {
            let state = fit(&data, &config)?;
            TrainedModel::from_fit(&state)?.save(out.join("model.json"))?;
            write_trace(&state, &out.join("trace.csv"))?;
            for w in &state.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} after {} iterations, objective {:.6e}",
                if state.converged {
                    "converged"
                } else {
                    "stopped"
                },
                state.iterations,
                state.final_objective()
            );
            summary.converged = Some(state.converged);
            summary.iterations = Some(state.iterations);
            summary.final_objective = Some(state.final_objective());
            summary.warnings = state.warnings;
        }
        Method::LssvmIndependent => {
            AnyModel::fit(spec.method, &data, &config)?.save(out.join("model.json"))?;
            println!("fitted {} independent task models", data.num_tasks());
        }
    }
    write_json(&out.join("fit.json"), &summary)
}

/// Columns: iteration, step (`L` or `U`), mode, row, objective, train_rmse,
/// residual, factor_change. Mode and row are empty on L-steps, and
/// factor_change is only set on the last step of an iteration.
fn write_trace(state: &FitState, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "iteration",
        "step",
        "mode",
        "row",
        "objective",
        "train_rmse",
        "residual",
        "factor_change",
    ])
    .map_err(csv_err)?;
    for e in &state.trace {
        let (step, mode, row) = match e.step {
            Step::LStep => ("L", String::new(), String::new()),
            Step::URow { mode, row } => ("U", mode.to_string(), row.to_string()),
        };
        w.write_record([
            e.iteration.to_string(),
            step.to_string(),
            mode,
            row,
            e.objective.to_string(),
            e.train_rmse.to_string(),
            e.residual.to_string(),
            e.factor_change.map(|f| f.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}

fn cmd_predict(model_path: &Path, data_path: &Path, output: &Path) -> Result<()> {
    let model = AnyModel::load(model_path)?;
    let table = read_table(
        fs::File::open(data_path)?,
        &data_path.display().to_string(),
        false,
    )?;
    let grid = model.grid();
    if table.modes != grid.num_modes() {
        return Err(Error::Shape(format!(
            "data has {} index columns, model grid {:?} has {} modes",
            table.modes,
            grid.mode_sizes(),
            grid.num_modes()
        )));
    }
    let mut w = csv::Writer::from_path(output).map_err(csv_err)?;
    let mut header = csv_header(table.modes, table.dim, table.has_response);
    header.push("y_hat".into());
    w.write_record(&header).map_err(csv_err)?;
    for row in &table.rows {
        let y_hat = model
            .predict(&row.index, &row.x)
            .map_err(|e| Error::Parse {
                path: data_path.display().to_string(),
                line: row.line,
                msg: e.to_string(),
            })?;
        let mut rec: Vec<String> = row.index.iter().map(ToString::to_string).collect();
        rec.extend(row.x.iter().map(ToString::to_string));
        if let Some(y) = row.y {
            rec.push(y.to_string());
        }
        rec.push(y_hat.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    println!(
        "wrote {} predictions to {}",
        table.rows.len(),
        output.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ModelReport {
    model: String,
    method: &'static str,
    report: EvalReport,
}

fn cmd_evaluate(models: &[PathBuf], test_path: &Path, out: &Path) -> Result<()> {
    let loaded = models
        .iter()
        .map(AnyModel::load)
        .collect::<Result<Vec<_>>>()?;
    let test = load_csv(test_path, loaded[0].grid())?;
    let mut reports = Vec::new();
    for (path, model) in models.iter().zip(&loaded) {
        if model.grid() != test.grid() {
            return Err(Error::Shape(format!(
                "model {} has grid {:?}, test data has {:?}",
                path.display(),
                model.grid().mode_sizes(),
                test.grid().mode_sizes()
            )));
        }
        let pred = model.predict_dataset(&test)?;
        reports.push(ModelReport {
            model: path.display().to_string(),
            method: model.method(),
            report: EvalReport::evaluate(&test, &pred)?,
        });
    }
    let rows: Vec<(String, _)> = reports
        .iter()
        .map(|r| (format!("{} ({})", r.model, r.method), &r.report.pooled))
        .collect();
    print!("{}", comparison_table(&rows));
    write_json(&out.join("report.json"), &reports)
}

fn cmd_cv(spec: &ExperimentSpec, args: &DataArgs, out: &Path) -> Result<()> {
    spec.fit.validate()?;
    let data = load_train(spec, &args.train)?;
    let report = grid_search(
        &data,
        spec.method,
        &spec.grid,
        &spec.fit,
        spec.folds,
        spec.fit.seed,
    )?;
    let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
    println!(
        "best of {} cells ({} failed): K={} C={} gamma={} mean validation RMSE {:.6}",
        report.cells.len(),
        failed,
        report
            .best_params
            .rank
            .map_or("-".into(), |k| k.to_string()),
        report.best_params.c,
        report
            .best_params
            .gamma
            .map_or("-".into(), |g| g.to_string()),
        report.best_mean_rmse
    );
    write_json(&out.join("cv.json"), &report)
}

fn cmd_benchmark(spec: &ExperimentSpec, out: &Path) -> Result<()> {
    let report = run_benchmark(spec)?;
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir)?;
    for r in &report.runs {
        write_json(
            &runs_dir.join(format!(
                "snr{}_rep{}_{}.json",
                r.snr, r.repetition, r.method
            )),
            r,
        )?;
    }
    let mut w = csv::Writer::from_path(out.join("benchmark.csv")).map_err(csv_err)?;
    w.write_record(["snr", "method", "repetitions", "rmse", "q2", "correlation"])
        .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for s in &report.summary {
        w.write_record([
            s.snr.to_string(),
            s.method.to_string(),
            s.repetitions.to_string(),
            s.rmse.to_string(),
            opt(s.q2),
            opt(s.correlation),
        ])
        .map_err(csv_err)?;
        println!(
            "snr {:>6}  {:<18} rmse {:.4}  q2 {}  corr {}",
            s.snr,
            s.method,
            s.rmse,
            s.q2.map_or("-".into(), |v| format!("{v:.4}")),
            s.correlation.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    w.flush()?;
    write_json(&out.join("benchmark.json"), &report)
}
