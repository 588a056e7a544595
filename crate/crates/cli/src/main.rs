use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qkan_core::baseline::Optimizer;
use qkan_core::bench::{Arm, TaskName};
use qkan_core::AuxMode;

mod commands;
mod config;

use config::RunConfig;

/// Train Bezier KANs by compiling them to QUBO and annealing.
#[derive(Parser, Debug)]
#[command(name = "qkan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a generated task or CSV data.
    Train(TrainArgs),
    /// Update a saved objective state with new batches and re-solve.
    Retrain(RetrainArgs),
    /// Score a saved model.
    Eval(EvalArgs),
    /// Benchmark experiments.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Summarize a model or state file.
    Inspect(InspectArgs),
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Run arms on a task and write CSV/JSON reports.
    Run(BenchRunArgs),
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Generated benchmark task.
    #[arg(long)]
    task: Option<TaskName>,
    /// Training CSV (header x1,..,xd,y).
    #[arg(long, value_name = "CSV")]
    train: Option<PathBuf>,
    /// Validation CSV.
    #[arg(long, value_name = "CSV")]
    val: Option<PathBuf>,
    /// Test CSV, scored after training.
    #[arg(long, value_name = "CSV")]
    test: Option<PathBuf>,
    /// Hold out this fraction of the training rows as validation data.
    #[arg(long)]
    val_frac: Option<f64>,
    /// Training samples for a generated task.
    #[arg(long)]
    n_train: Option<usize>,
    /// Validation samples for a generated task.
    #[arg(long)]
    n_val: Option<usize>,
    /// Test samples for a generated task.
    #[arg(long)]
    n_test: Option<usize>,
    /// Input noise for classification tasks.
    #[arg(long)]
    noise: Option<f64>,
    /// Report classification metrics (inferred from 0/1 targets otherwise).
    #[arg(long)]
    classification: bool,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// Layer widths, e.g. 2,1.
    #[arg(long, value_delimiter = ',')]
    shape: Option<Vec<usize>>,
    /// One degree for all edges, or one per edge in layout order.
    #[arg(long, value_delimiter = ',')]
    degrees: Option<Vec<u32>>,
    /// Lowest encoding exponent.
    #[arg(long, allow_hyphen_values = true)]
    low_exp: Option<i32>,
    /// Highest encoding exponent.
    #[arg(long, allow_hyphen_values = true)]
    high_exp: Option<i32>,
    /// Non-negative control points only.
    #[arg(long)]
    unsigned: bool,
    /// Weight of the validation term in the objective.
    #[arg(long)]
    lambda_val: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct SolveArgs {
    /// QUBO solver: sa or exact.
    #[arg(long)]
    solver: Option<String>,
    /// Annealing reads (restarts).
    #[arg(long)]
    reads: Option<usize>,
    /// Sweeps per read.
    #[arg(long)]
    sweeps: Option<usize>,
    /// Seed for data generation, annealing and initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Initial inverse temperature (derived from the QUBO when absent).
    #[arg(long)]
    beta_start: Option<f64>,
    /// Final inverse temperature (derived from the QUBO when absent).
    #[arg(long)]
    beta_end: Option<f64>,
    /// follow (default) or free.
    #[arg(long)]
    aux_mode: Option<AuxMode>,
    /// Penalty weight as a multiple of the largest coefficient.
    #[arg(long)]
    w_factor: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct GdArgs {
    /// Train with gradient descent instead of annealing.
    #[arg(long)]
    optimizer: Option<Optimizer>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Gradient steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Sweep the learning-rate grid and keep the best run.
    #[arg(long)]
    lr_sweep: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSON config; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solve: SolveArgs,
    #[command(flatten)]
    gd: GdArgs,
    /// Model output path; the resolved config and metrics go next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Persist the collapsed objective for later retraining.
    #[arg(long)]
    save_state: Option<PathBuf>,
    /// Write the QUBO as <PREFIX>.coo and <PREFIX>.json.
    #[arg(long, value_name = "PREFIX")]
    export_qubo: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RetrainArgs {
    /// JSON config; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Saved objective state.
    #[arg(long)]
    state: PathBuf,
    /// Training batches to add.
    #[arg(long, value_name = "CSV")]
    add: Vec<PathBuf>,
    /// Training batches to remove (must have been added before).
    #[arg(long, value_name = "CSV")]
    remove: Vec<PathBuf>,
    /// Validation batches to add.
    #[arg(long, value_name = "CSV")]
    add_val: Vec<PathBuf>,
    /// Validation batches to remove.
    #[arg(long, value_name = "CSV")]
    remove_val: Vec<PathBuf>,
    /// Test CSV, scored after retraining.
    #[arg(long, value_name = "CSV")]
    test: Option<PathBuf>,
    /// Report classification metrics.
    #[arg(long)]
    classification: bool,
    #[command(flatten)]
    solve: SolveArgs,
    /// Model output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the updated state.
    #[arg(long)]
    save_state: Option<PathBuf>,
    /// Write the QUBO as <PREFIX>.coo and <PREFIX>.json.
    #[arg(long, value_name = "PREFIX")]
    export_qubo: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Data CSV to score.
    #[arg(long, value_name = "CSV")]
    data: Option<PathBuf>,
    /// Score the test split of a generated task instead.
    #[arg(long)]
    task: Option<TaskName>,
    /// Task seed (selects the test split).
    #[arg(long)]
    seed: Option<u64>,
    /// Test samples for a generated task.
    #[arg(long)]
    n_test: Option<usize>,
    /// Report classification metrics.
    #[arg(long)]
    classification: bool,
}

#[derive(Args, Debug)]
struct BenchRunArgs {
    /// JSON config; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solve: SolveArgs,
    #[command(flatten)]
    gd: GdArgs,
    /// Comma-separated arms: sa, exact, adam, sgd, adagrad.
    #[arg(long, value_delimiter = ',')]
    arms: Option<Vec<Arm>>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Timing repetitions (medians are reported).
    #[arg(long)]
    repeats: Option<usize>,
    /// Incremental retrain rounds to time after the initial fit.
    #[arg(long)]
    retrain_rounds: Option<usize>,
    /// Samples added per retrain round.
    #[arg(long)]
    retrain_batch: Option<usize>,
    /// Degrees of the first bottom edge to sweep (reg3).
    #[arg(long, value_delimiter = ',')]
    degree_sweep: Option<Vec<u32>>,
    /// Seeded annealing runs per sweep setting.
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Model JSON or state file.
    path: PathBuf,
    /// Penalty factor used for the qubit accounting.
    #[arg(long)]
    w_factor: Option<f64>,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Solver(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
        }
    }
}

impl From<qkan_core::Error> for CliError {
    fn from(e: qkan_core::Error) -> Self {
        use qkan_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidSpec(_) | E::InvalidEncoding(_) | E::Domain { .. } => CliError::Usage(msg),
            E::TooManyVariables { .. } | E::UnknownSolver(_) | E::Diverged { .. } => {
                CliError::Solver(msg)
            }
            _ => CliError::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl DataArgs {
    fn apply(&self, c: &mut RunConfig) {
        if self.task.is_some() {
            c.task = self.task;
        }
        set(&mut c.train, self.train.clone());
        set(&mut c.val, self.val.clone());
        set(&mut c.test, self.test.clone());
        if let Some(v) = self.val_frac {
            c.val_frac = v;
        }
        set(&mut c.n_train, self.n_train);
        set(&mut c.n_val, self.n_val);
        set(&mut c.n_test, self.n_test);
        set(&mut c.noise, self.noise);
        if self.classification {
            c.classification = Some(true);
        }
    }
}

impl ModelArgs {
    fn apply(&self, c: &mut RunConfig) -> Result<(), CliError> {
        set(&mut c.shape, self.shape.clone());
        set(&mut c.degrees, self.degrees.clone());
        if self.low_exp.is_some() || self.high_exp.is_some() || self.unsigned {
            let base = c.encoding.unwrap_or_default();
            let enc = qkan_core::EncodingSpec::new(
                self.low_exp.unwrap_or(base.low_exp),
                self.high_exp.unwrap_or(base.high_exp),
                if self.unsigned { false } else { base.signed },
            )?;
            c.encoding = Some(enc);
        }
        if let Some(l) = self.lambda_val {
            c.objective.lambda_val = l;
        }
        Ok(())
    }
}

impl SolveArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(s) = &self.solver {
            c.solver = s.clone();
        }
        if let Some(v) = self.reads {
            c.schedule.reads = v;
        }
        if let Some(v) = self.sweeps {
            c.schedule.sweeps = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if self.beta_start.is_some() {
            c.schedule.beta_start = self.beta_start;
        }
        if self.beta_end.is_some() {
            c.schedule.beta_end = self.beta_end;
        }
        if let Some(m) = self.aux_mode {
            c.schedule.aux_mode = m;
        }
        if let Some(w) = self.w_factor {
            c.w_factor = w;
        }
    }
}

impl GdArgs {
    fn apply(&self, c: &mut RunConfig) {
        if self.optimizer.is_some() {
            c.optimizer = self.optimizer;
        }
        if let Some(v) = self.lr {
            c.gd.learning_rate = v;
        }
        if let Some(v) = self.steps {
            c.gd.steps = v;
        }
        if self.lr_sweep {
            c.lr_sweep = true;
        }
    }
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => {
            let mut c = RunConfig::from_file(a.config.as_deref())?;
            a.data.apply(&mut c);
            a.model.apply(&mut c)?;
            a.solve.apply(&mut c);
            a.gd.apply(&mut c);
            set(&mut c.out, a.out);
            set(&mut c.save_state, a.save_state);
            set(&mut c.export_qubo, a.export_qubo);
            commands::train(c.resolve()?)
        }
        Command::Retrain(a) => {
            let mut c = RunConfig::from_file(a.config.as_deref())?;
            a.solve.apply(&mut c);
            set(&mut c.test, a.test);
            if a.classification {
                c.classification = Some(true);
            }
            set(&mut c.out, a.out);
            set(&mut c.save_state, a.save_state);
            set(&mut c.export_qubo, a.export_qubo);
            let batches = commands::Batches {
                add: a.add,
                remove: a.remove,
                add_val: a.add_val,
                remove_val: a.remove_val,
            };
            commands::retrain(c.resolve()?, &a.state, &batches)
        }
        Command::Eval(a) => commands::eval(
            &a.model,
            a.data.as_deref(),
            a.task,
            a.seed,
            a.n_test,
            a.classification,
        ),
        Command::Bench(BenchCommand::Run(a)) => {
            let mut c = RunConfig::from_file(a.config.as_deref())?;
            a.data.apply(&mut c);
            a.model.apply(&mut c)?;
            a.solve.apply(&mut c);
            a.gd.apply(&mut c);
            set(&mut c.out, a.out);
            if let Some(arms) = a.arms {
                c.arms = arms;
            }
            if let Some(v) = a.repeats {
                c.repeats = v;
            }
            if let Some(v) = a.retrain_rounds {
                c.retrain_rounds = v;
            }
            if let Some(v) = a.retrain_batch {
                c.retrain_batch = v;
            }
            if let Some(v) = a.degree_sweep {
                c.degree_sweep = v;
            }
            if let Some(v) = a.runs {
                c.runs = v;
            }
            if a.solve.seed.is_none() && a.config.is_none() {
                return Err(CliError::Usage(
                    "bench run requires --seed (or a config file) so reports replay".into(),
                ));
            }
            commands::bench_run(c.resolve()?)
        }
        Command::Inspect(a) => commands::inspect(
            &a.path,
            a.w_factor.unwrap_or(qkan_core::reduction::DEFAULT_W_FACTOR),
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qkan: {e}");
            ExitCode::from(e.code())
        }
    }
}
