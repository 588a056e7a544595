//! Gradient-descent training of the same network over continuous control
//! points, used as the classical comparison arm.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Normalizer};
use crate::encoding::EncodingSpec;
use crate::error::{Error, Result};
use crate::network::{bernstein_unchecked, DecodedModel, KanSpec};
use crate::objective::direct_mse;

pub const LR_MIN: f64 = 1e-4;
pub const LR_MAX: f64 = 2.0;
pub const LR_SWEEP: [f64; 8] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 1.5];

const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
    Adagrad,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
            Optimizer::Adagrad => "adagrad",
        })
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            "adagrad" => Ok(Optimizer::Adagrad),
            other => Err(Error::InvalidSpec(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            steps: 500,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl GdConfig {
    /// A zero rate is accepted so a run can be frozen for debugging.
    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate;
        if !(lr == 0.0 || (LR_MIN..=LR_MAX).contains(&lr)) {
            return Err(Error::Domain {
                value: lr,
                domain: "learning rate in [1e-4, 2]",
            });
        }
        if self.steps == 0 {
            return Err(Error::InvalidSpec("steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct GdOutcome {
    pub model: DecodedModel,
    pub trace: Vec<TracePoint>,
    pub config: GdConfig,
}

impl GdOutcome {
    pub fn final_point(&self) -> TracePoint {
        *self
            .trace
            .last()
            .expect("trace always has the initial point")
    }

    /// First step whose train loss is within 1% of the final one.
    pub fn steps_to_converge(&self) -> usize {
        let last = self.final_point().train_mse;
        let tol = 0.01 * last.abs() + 1e-12;
        self.trace
            .iter()
            .find(|p| p.train_mse - last <= tol)
            .map_or(0, |p| p.step)
    }

    pub fn write_trace_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "train_mse", "val_mse"])?;
        for p in &self.trace {
            let val = p.val_mse.map(|v| format!("{v:?}")).unwrap_or_default();
            w.write_record([p.step.to_string(), format!("{:?}", p.train_mse), val])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Control points drawn uniformly from the encoding's representable range.
pub fn random_init(
    spec: &KanSpec,
    encoding: &EncodingSpec,
    bounds: &Normalizer,
    seed: u64,
) -> DecodedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = DecodedModel::zeros(spec.clone(), *encoding, bounds.clone());
    let (lo, hi) = (encoding.min_value(), encoding.max_value());
    for pts in &mut model.control_points {
        for p in pts.iter_mut() {
            *p = rng.random_range(lo..=hi);
        }
    }
    model
}

fn sample_gradient(
    model: &DecodedModel,
    edges: &[crate::network::Edge],
    x: &[f64],
    y: &[f64],
    grad: &mut [f64],
    offsets: &[usize],
) -> f64 {
    let spec = &model.spec;
    let depth = spec.depth();
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(depth + 1);
    values.push(x.to_vec());
    for layer in 0..depth {
        let mut next = vec![0.0; spec.widths()[layer + 1]];
        for (e, edge) in edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.key.layer == layer)
        {
            let w = bernstein_unchecked(edge.degree, values[layer][edge.key.input]);
            next[edge.key.output] += w
                .iter()
                .zip(&model.control_points[e])
                .map(|(a, p)| a * p)
                .sum::<f64>();
        }
        values.push(next);
    }

    let out = &values[depth];
    let mut loss = 0.0;
    let mut upstream: Vec<f64> = out
        .iter()
        .zip(y)
        .map(|(f, t)| {
            loss += (t - f).powi(2);
            -2.0 * (t - f)
        })
        .collect();

    for layer in (0..depth).rev() {
        let mut down = vec![0.0; spec.widths()[layer]];
        for (e, edge) in edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.key.layer == layer)
        {
            let g = upstream[edge.key.output];
            if g == 0.0 {
                continue;
            }
            let t = values[layer][edge.key.input];
            let n = edge.degree;
            let pts = &model.control_points[e];
            for (i, b) in bernstein_unchecked(n, t).into_iter().enumerate() {
                grad[offsets[e] + i] += g * b;
            }
            if layer > 0 {
                let lower = bernstein_unchecked(n - 1, t);
                let slope: f64 = lower
                    .iter()
                    .enumerate()
                    .map(|(i, b)| (pts[i + 1] - pts[i]) * b)
                    .sum();
                down[edge.key.input] += g * n as f64 * slope;
            }
        }
        upstream = down;
    }
    loss
}

/// Mean squared error and its exact gradient with respect to every control
/// point, in flattened layout order.
pub fn loss_and_gradient(model: &DecodedModel, batch: &Dataset) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("gradient batch"));
    }
    batch.validate_shape(model.spec.inputs(), model.spec.outputs())?;
    let edges = model.spec.edges();
    let mut offsets = Vec::with_capacity(edges.len());
    let mut acc = 0;
    for pts in &model.control_points {
        offsets.push(acc);
        acc += pts.len();
    }
    let n_params = acc;

    let chunks: Vec<(f64, Vec<f64>)> = batch
        .inputs
        .par_chunks(CHUNK)
        .zip(batch.targets.par_chunks(CHUNK))
        .map(|(xs, ys)| {
            let mut g = vec![0.0; n_params];
            let mut l = 0.0;
            for (x, y) in xs.iter().zip(ys) {
                l += sample_gradient(model, &edges, x, y, &mut g, &offsets);
            }
            (l, g)
        })
        .collect();

    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for (l, g) in chunks {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, grad))
}

pub fn gradient(model: &DecodedModel, batch: &Dataset) -> Result<Vec<f64>> {
    loss_and_gradient(model, batch).map(|(_, g)| g)
}

struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(n: usize) -> Self {
        OptimizerState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &GdConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let lr = cfg.learning_rate;
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adagrad => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(&mut self.v) {
                    *v += g * g;
                    *p -= lr * g / (v.sqrt() + cfg.epsilon);
                }
            }
            Optimizer::Adam => {
                let c1 = 1.0 - cfg.beta1.powi(self.t);
                let c2 = 1.0 - cfg.beta2.powi(self.t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
                }
            }
        }
    }
}

/// Full-batch training from a seeded uniform initialization.
pub fn train_gd(
    spec: &KanSpec,
    encoding: &EncodingSpec,
    bounds: &Normalizer,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &GdConfig,
) -> Result<GdOutcome> {
    let init = random_init(spec, encoding, bounds, cfg.seed);
    train_from(init, train, val, cfg)
}

/// Full-batch training from a given model. The trace starts with the
/// initial loss at step 0.
pub fn train_from(
    mut model: DecodedModel,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &GdConfig,
) -> Result<GdOutcome> {
    cfg.validate()?;
    let val = val.filter(|v| !v.is_empty());
    let mut params = model.flat_parameters();
    let mut state = OptimizerState::new(params.len());
    let mut trace = Vec::with_capacity(cfg.steps + 1);

    for step in 0..=cfg.steps {
        let (loss, grad) = loss_and_gradient(&model, train)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step });
        }
        let val_mse = val.map(|v| direct_mse(&model, v)).transpose()?;
        trace.push(TracePoint {
            step,
            train_mse: loss,
            val_mse,
        });
        if step == cfg.steps {
            break;
        }
        state.step(cfg, &mut params, &grad);
        model.set_flat_parameters(&params);
    }
    Ok(GdOutcome {
        model,
        trace,
        config: *cfg,
    })
}

/// Trains at every rate of [`LR_SWEEP`] and keeps the run with the lowest
/// final validation loss (train loss without a validation set). Diverged
/// runs are skipped; ties go to the earlier rate.
pub fn lr_sweep(
    spec: &KanSpec,
    encoding: &EncodingSpec,
    bounds: &Normalizer,
    train: &Dataset,
    val: Option<&Dataset>,
    base: &GdConfig,
) -> Result<GdOutcome> {
    let mut best: Option<(f64, GdOutcome)> = None;
    let mut last_err = None;
    for lr in LR_SWEEP {
        let cfg = GdConfig {
            learning_rate: lr,
            ..*base
        };
        match train_gd(spec, encoding, bounds, train, val, &cfg) {
            Ok(out) => {
                let p = out.final_point();
                let score = p.val_mse.unwrap_or(p.train_mse);
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    best = Some((score, out));
                }
            }
            Err(e @ Error::Diverged { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.map(|(_, o)| o)
        .ok_or_else(|| last_err.unwrap_or(Error::Diverged { step: 0 }))
}
