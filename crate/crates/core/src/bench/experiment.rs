use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{self, Metrics};
use super::tasks::{default_network, extra_batch, generate, TaskData, TaskName, TaskSpec};
use crate::baseline::{lr_sweep, train_from, train_gd, GdConfig, GdOutcome, Optimizer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::DecodedModel;
use crate::objective::ObjectiveConfig;
use crate::reduction::DEFAULT_W_FACTOR;
use crate::session::{prepare_qubo, ObjectiveState};
use crate::solver::{
    decode_solution, AnnealSchedule, ExactSolver, SimulatedAnnealer, SolveResult, Solver,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Sa,
    Exact,
    Adam,
    Sgd,
    Adagrad,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::Sa, Arm::Exact, Arm::Adam, Arm::Sgd, Arm::Adagrad];

    pub fn optimizer(self) -> Option<Optimizer> {
        match self {
            Arm::Adam => Some(Optimizer::Adam),
            Arm::Sgd => Some(Optimizer::Sgd),
            Arm::Adagrad => Some(Optimizer::Adagrad),
            _ => None,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Sa => "sa",
            Arm::Exact => "exact",
            Arm::Adam => "adam",
            Arm::Sgd => "sgd",
            Arm::Adagrad => "adagrad",
        })
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown arm {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentOptions {
    pub objective: ObjectiveConfig,
    pub schedule: AnnealSchedule,
    pub w_factor: f64,
    pub gd: GdConfig,
    /// Try every rate of the sweep grid instead of `gd.learning_rate`.
    pub lr_sweep: bool,
    /// Timings are medians over this many repetitions.
    pub repeats: usize,
    pub retrain_rounds: usize,
    pub retrain_batch: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            objective: ObjectiveConfig::default(),
            schedule: AnnealSchedule::default(),
            w_factor: DEFAULT_W_FACTOR,
            gd: GdConfig {
                steps: 300,
                ..GdConfig::default()
            },
            lr_sweep: true,
            repeats: 1,
            retrain_rounds: 0,
            retrain_batch: 1_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Normalization, moment collapse, assembly and reduction.
    pub preprocess_s: f64,
    pub solve_s: f64,
    pub total_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_step_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: Option<Arm>,
    pub error: Option<String>,
    pub train: Option<Metrics>,
    pub test: Option<Metrics>,
    pub timing: Timing,
    pub energy: Option<f64>,
    pub aux_violations: Option<usize>,
    pub qubits: Option<usize>,
    pub hubo_terms: Option<usize>,
    pub learning_rate: Option<f64>,
    pub steps: Option<usize>,
    pub steps_to_converge: Option<usize>,
    pub model: Option<DecodedModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainRound {
    pub arm: Arm,
    pub round: usize,
    pub n_train: usize,
    pub seconds: f64,
    pub test: Option<Metrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: TaskSpec,
    pub options: ExperimentOptions,
    pub arms: Vec<ArmReport>,
    pub retrain: Vec<RetrainRound>,
}

impl ExperimentReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmReport> {
        self.arms.iter().find(|r| r.arm == Some(arm))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
        w.write_record([
            "arm",
            "split",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "mse",
            "r2",
            "preprocess_s",
            "solve_s",
            "total_s",
            "energy",
            "error",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for r in &self.arms {
            let arm = r.arm.map(|a| a.to_string()).unwrap_or_default();
            for (split, m) in [("train", &r.train), ("test", &r.test)] {
                let m = m.unwrap_or_default();
                w.write_record([
                    arm.clone(),
                    split.to_string(),
                    opt(m.accuracy),
                    opt(m.precision),
                    opt(m.recall),
                    opt(m.f1),
                    if r.error.is_some() {
                        String::new()
                    } else {
                        format!("{:?}", m.mse)
                    },
                    opt(m.r2),
                    format!("{:?}", r.timing.preprocess_s),
                    format!("{:?}", r.timing.solve_s),
                    format!("{:?}", r.timing.total_s),
                    opt(r.energy),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        if !self.retrain.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("retrain.csv"))?;
            w.write_record([
                "arm",
                "round",
                "n_train",
                "seconds",
                "test_mse",
                "test_r2",
                "test_accuracy",
                "error",
            ])?;
            for r in &self.retrain {
                let m = r.test.unwrap_or_default();
                w.write_record([
                    r.arm.to_string(),
                    r.round.to_string(),
                    r.n_train.to_string(),
                    format!("{:?}", r.seconds),
                    r.test.map(|m| format!("{:?}", m.mse)).unwrap_or_default(),
                    opt(m.r2),
                    opt(m.accuracy),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

/// Scores a model on raw data. Inputs are clamped into the shared bounds.
pub fn evaluate(model: &DecodedModel, data: &Dataset, task: TaskName) -> Result<Metrics> {
    let x = model.bounds.apply_clamped(data)?;
    let pred: Vec<f64> = model
        .predict(&x.inputs)?
        .into_iter()
        .map(|o| o[0])
        .collect();
    let truth = data.target_column();
    if task.is_classification() {
        metrics::classification(&pred, &truth)
    } else {
        metrics::regression(&pred, &truth)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Result of one annealing-path solve with its phase timings.
pub struct QuboRun {
    pub model: DecodedModel,
    pub result: SolveResult,
    pub qubits: usize,
    pub hubo_terms: usize,
    pub preprocess_s: f64,
    pub solve_s: f64,
}

pub fn run_qubo(
    data: &TaskData,
    task: &TaskSpec,
    opts: &ExperimentOptions,
    solver: &dyn Solver,
) -> Result<QuboRun> {
    let t0 = Instant::now();
    let state = ObjectiveState::build(
        &task.network,
        &task.encoding,
        &opts.objective,
        &data.bounds,
        &data.train,
        data.val_opt(),
    )?;
    let mut h = state.assemble()?;
    let (qubo, hubo_terms, _) = prepare_qubo(&mut h, state.layout(), opts.w_factor);
    let t1 = Instant::now();
    let result = solver.solve(&qubo, &opts.schedule)?;
    let t2 = Instant::now();
    let model = decode_solution(
        &result,
        state.layout(),
        &task.network,
        &task.encoding,
        &data.bounds,
    )?;
    Ok(QuboRun {
        model,
        qubits: qubo.num_vars,
        hubo_terms,
        result,
        preprocess_s: (t1 - t0).as_secs_f64(),
        solve_s: (t2 - t1).as_secs_f64(),
    })
}

fn run_gd(
    data: &TaskData,
    task: &TaskSpec,
    opts: &ExperimentOptions,
    optimizer: Optimizer,
) -> Result<GdOutcome> {
    let cfg = GdConfig {
        optimizer,
        ..opts.gd
    };
    let val = data.val_opt().map(|v| data.bounds.apply(v)).transpose()?;
    let train = data.bounds.apply(&data.train)?;
    if opts.lr_sweep {
        lr_sweep(
            &task.network,
            &task.encoding,
            &data.bounds,
            &train,
            val.as_ref(),
            &cfg,
        )
    } else {
        train_gd(
            &task.network,
            &task.encoding,
            &data.bounds,
            &train,
            val.as_ref(),
            &cfg,
        )
    }
}

fn run_arm(
    arm: Arm,
    data: &TaskData,
    task: &TaskSpec,
    opts: &ExperimentOptions,
) -> Result<ArmReport> {
    let repeats = opts.repeats.max(1);
    let mut report = ArmReport {
        arm: Some(arm),
        ..Default::default()
    };
    let model = match arm.optimizer() {
        None => {
            let solver: &dyn Solver = if arm == Arm::Sa {
                &SimulatedAnnealer
            } else {
                &ExactSolver
            };
            let mut runs = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                runs.push(run_qubo(data, task, opts, solver)?);
            }
            report.timing = Timing {
                preprocess_s: median(runs.iter().map(|r| r.preprocess_s).collect()),
                solve_s: median(runs.iter().map(|r| r.solve_s).collect()),
                total_s: median(runs.iter().map(|r| r.preprocess_s + r.solve_s).collect()),
                per_step_s: None,
            };
            let run = runs.swap_remove(0);
            report.energy = Some(run.result.best_energy);
            report.aux_violations = Some(run.result.aux_violations);
            report.qubits = Some(run.qubits);
            report.hubo_terms = Some(run.hubo_terms);
            run.model
        }
        Some(optimizer) => {
            let mut times = Vec::with_capacity(repeats);
            let mut out = None;
            for _ in 0..repeats {
                let t0 = Instant::now();
                out = Some(run_gd(data, task, opts, optimizer)?);
                times.push(t0.elapsed().as_secs_f64());
            }
            let out = out.expect("at least one repeat");
            let total = median(times);
            let sweep_len = if opts.lr_sweep {
                crate::baseline::LR_SWEEP.len()
            } else {
                1
            };
            report.timing = Timing {
                preprocess_s: 0.0,
                solve_s: total,
                total_s: total,
                per_step_s: Some(total / (sweep_len * out.config.steps) as f64),
            };
            report.learning_rate = Some(out.config.learning_rate);
            report.steps = Some(out.config.steps);
            report.steps_to_converge = Some(out.steps_to_converge());
            out.model
        }
    };
    report.train = Some(evaluate(&model, &data.train, task.name)?);
    report.test = Some(evaluate(&model, &data.test, task.name)?);
    report.model = Some(model);
    Ok(report)
}

/// Runs the retraining protocol: after the initial fit, each round adds a
/// fresh batch and retrains. The annealing arm updates its stored objective;
/// gradient arms warm-start on the full cumulative data.
fn retrain_protocol(
    arm: Arm,
    initial: &DecodedModel,
    data: &TaskData,
    task: &TaskSpec,
    opts: &ExperimentOptions,
) -> Result<Vec<RetrainRound>> {
    let mut rounds = Vec::new();
    let mut cumulative = data.train.clone();
    let mut model = initial.clone();
    let mut state = if arm.optimizer().is_none() {
        Some(ObjectiveState::build(
            &task.network,
            &task.encoding,
            &opts.objective,
            &data.bounds,
            &data.train,
            data.val_opt(),
        )?)
    } else {
        None
    };
    for round in 0..opts.retrain_rounds {
        let batch = extra_batch(task, round, opts.retrain_batch);
        cumulative = cumulative.concat(&batch);
        let t0 = Instant::now();
        let step = (|| -> Result<DecodedModel> {
            match (&mut state, arm.optimizer()) {
                (Some(s), _) => {
                    *s = s.add_samples(&batch, crate::data::DatasetKind::Train)?;
                    let solver: &dyn Solver = if arm == Arm::Sa {
                        &SimulatedAnnealer
                    } else {
                        &ExactSolver
                    };
                    Ok(s.retrain(solver, &opts.schedule, opts.w_factor)?.model)
                }
                (None, Some(optimizer)) => {
                    let train = data.bounds.apply(&cumulative)?;
                    let cfg = GdConfig {
                        optimizer,
                        ..opts.gd
                    };
                    Ok(train_from(model.clone(), &train, None, &cfg)?.model)
                }
                (None, None) => unreachable!(),
            }
        })();
        let seconds = t0.elapsed().as_secs_f64();
        match step {
            Ok(m) => {
                model = m;
                rounds.push(RetrainRound {
                    arm,
                    round: round + 1,
                    n_train: cumulative.len(),
                    seconds,
                    test: Some(evaluate(&model, &data.test, task.name)?),
                    error: None,
                });
            }
            Err(e) => {
                rounds.push(RetrainRound {
                    arm,
                    round: round + 1,
                    n_train: cumulative.len(),
                    seconds,
                    test: None,
                    error: Some(e.to_string()),
                });
                break;
            }
        }
    }
    Ok(rounds)
}

/// Trains every arm on identical data and bounds. A failing arm is
/// recorded with its error and the remaining arms still run.
pub fn run_experiment(
    task: &TaskSpec,
    arms: &[Arm],
    opts: &ExperimentOptions,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    let data = generate(task)?;
    let mut report = ExperimentReport {
        task: task.clone(),
        options: opts.clone(),
        arms: Vec::new(),
        retrain: Vec::new(),
    };
    for &arm in arms {
        match run_arm(arm, &data, task, opts) {
            Ok(r) => {
                if opts.retrain_rounds > 0 {
                    let initial = r.model.as_ref().expect("successful arms carry a model");
                    let mut opts = opts.clone();
                    if let Some(lr) = r.learning_rate {
                        opts.gd.learning_rate = lr;
                    }
                    report
                        .retrain
                        .extend(retrain_protocol(arm, initial, &data, task, &opts)?);
                }
                report.arms.push(r);
            }
            Err(e) => report.arms.push(ArmReport {
                arm: Some(arm),
                error: Some(e.to_string()),
                ..Default::default()
            }),
        }
    }
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}

/// One seeded solve in a degree sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    pub energy: f64,
    pub aux_violations: usize,
    pub test_mse: f64,
    pub test_r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSetting {
    pub degree: u32,
    pub qubits: usize,
    pub runs: Vec<SweepRun>,
}

impl SweepSetting {
    /// Run with the lowest training energy; ties to the earlier seed.
    pub fn best(&self) -> Option<&SweepRun> {
        self.runs
            .iter()
            .fold(None, |acc: Option<&SweepRun>, r| match acc {
                Some(b) if b.energy <= r.energy => Some(b),
                _ => Some(r),
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub task: TaskSpec,
    pub settings: Vec<SweepSetting>,
}

impl SweepReport {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("degree_sweep.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        let mut w = csv::Writer::from_path(dir.join("degree_sweep.csv"))?;
        w.write_record([
            "degree",
            "seed",
            "energy",
            "aux_violations",
            "test_mse",
            "test_r2",
        ])?;
        for s in &self.settings {
            for r in &s.runs {
                w.write_record([
                    s.degree.to_string(),
                    r.seed.to_string(),
                    format!("{:?}", r.energy),
                    r.aux_violations.to_string(),
                    format!("{:?}", r.test_mse),
                    format!("{:?}", r.test_r2),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Seeded annealing runs for each degree of the first bottom edge. The
/// objective is built once per setting; runs differ only in solver seed
/// (`opts.schedule.seed + run`).
pub fn degree_sweep(
    task: &TaskSpec,
    degrees: &[u32],
    runs: usize,
    opts: &ExperimentOptions,
    out_dir: Option<&Path>,
) -> Result<SweepReport> {
    let mut settings = Vec::new();
    for &degree in degrees {
        let task = TaskSpec {
            network: default_network(task.name, degree),
            ..task.clone()
        };
        let data = generate(&task)?;
        let state = ObjectiveState::build(
            &task.network,
            &task.encoding,
            &opts.objective,
            &data.bounds,
            &data.train,
            data.val_opt(),
        )?;
        let mut h = state.assemble()?;
        let (qubo, _, _) = prepare_qubo(&mut h, state.layout(), opts.w_factor);
        let mut out = Vec::with_capacity(runs);
        for r in 0..runs {
            let seed = opts.schedule.seed.wrapping_add(r as u64 * 1_000_003);
            let schedule = AnnealSchedule {
                seed,
                ..opts.schedule
            };
            let result = SimulatedAnnealer.solve(&qubo, &schedule)?;
            let model = decode_solution(
                &result,
                state.layout(),
                &task.network,
                &task.encoding,
                &data.bounds,
            )?;
            let m = evaluate(&model, &data.test, task.name)?;
            out.push(SweepRun {
                seed,
                energy: result.best_energy,
                aux_violations: result.aux_violations,
                test_mse: m.mse,
                test_r2: m.r2.unwrap_or(f64::NAN),
            });
        }
        settings.push(SweepSetting {
            degree,
            qubits: qubo.num_vars,
            runs: out,
        });
    }
    let report = SweepReport {
        task: task.clone(),
        settings,
    };
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}
