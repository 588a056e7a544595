use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetKind, Normalizer};
use crate::encoding::EncodingSpec;
use crate::error::{Error, Result};
use crate::network::KanSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    Circle,
    Moons,
    Reg1,
    Reg2Sph,
    Reg3,
}

impl TaskName {
    pub const ALL: [TaskName; 5] = [
        TaskName::Circle,
        TaskName::Moons,
        TaskName::Reg1,
        TaskName::Reg2Sph,
        TaskName::Reg3,
    ];

    pub fn is_classification(self) -> bool {
        matches!(self, TaskName::Circle | TaskName::Moons)
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskName::Circle => "circle",
            TaskName::Moons => "moons",
            TaskName::Reg1 => "reg1",
            TaskName::Reg2Sph => "reg2_sph",
            TaskName::Reg3 => "reg3",
        })
    }
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown task {s:?}")))
    }
}

/// Everything needed to regenerate a task's data and network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: TaskName,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Gaussian noise on the inputs (classification only).
    pub noise: f64,
    pub seed: u64,
    pub network: KanSpec,
    pub encoding: EncodingSpec,
}

/// Ratio of inner to outer radius for the circle task.
pub const CIRCLE_FACTOR: f64 = 0.5;

impl TaskSpec {
    /// Desk-scale defaults for a task.
    pub fn desk(name: TaskName, seed: u64) -> Self {
        let (n_train, n_test, noise) = match name {
            TaskName::Circle => (10_000, 1_000, 0.05),
            TaskName::Moons => (10_000, 1_000, 0.1),
            _ => (10_000, 1_000, 0.0),
        };
        TaskSpec {
            name,
            n_train,
            n_val: 0,
            n_test,
            noise,
            seed,
            network: default_network(name, 1),
            encoding: default_encoding(name),
        }
    }

    /// Small data sizes for quick checks.
    pub fn tiny(name: TaskName, seed: u64) -> Self {
        TaskSpec {
            n_train: 200,
            n_test: 100,
            ..Self::desk(name, seed)
        }
    }

    pub fn with_network(mut self, network: KanSpec) -> Self {
        self.network = network;
        self
    }

    pub fn with_encoding(mut self, encoding: EncodingSpec) -> Self {
        self.encoding = encoding;
        self
    }
}

/// Default network per task. `variant` is the degree of the first bottom
/// edge for reg3 and is ignored elsewhere.
pub fn default_network(name: TaskName, variant: u32) -> KanSpec {
    match name {
        TaskName::Circle | TaskName::Moons => KanSpec::uniform(vec![2, 1], 2),
        TaskName::Reg1 => KanSpec::uniform(vec![2, 2, 1], 1),
        TaskName::Reg2Sph => KanSpec::uniform(vec![2, 1], 3),
        TaskName::Reg3 => KanSpec::with_degrees(vec![2, 1, 1], &[variant, 2, 1]),
    }
    .expect("default networks are valid")
}

pub fn default_encoding(name: TaskName) -> EncodingSpec {
    match name {
        TaskName::Reg3 => EncodingSpec::new(-2, 1, false).expect("valid"),
        _ => EncodingSpec::default(),
    }
}

/// Raw splits plus the normalization bounds every arm shares.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub bounds: Normalizer,
}

impl TaskData {
    pub fn val_opt(&self) -> Option<&Dataset> {
        (!self.val.is_empty()).then_some(&self.val)
    }
}

const STREAM_TRAIN: u64 = 0;
const STREAM_VAL: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_EXTRA: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample(task: &TaskSpec, n: usize, stream: u64, kind: DatasetKind) -> Dataset {
    let mut rng = rng_for(task.seed, stream);
    let noise = Normal::new(0.0, task.noise.max(0.0)).expect("finite noise");
    let jitter = |rng: &mut ChaCha8Rng| {
        if task.noise > 0.0 {
            noise.sample(rng)
        } else {
            0.0
        }
    };
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = match task.name {
            TaskName::Circle => {
                let label = rng.random_range(0..2u8);
                let r = if label == 1 { CIRCLE_FACTOR } else { 1.0 };
                let a = rng.random_range(0.0..2.0 * PI);
                (
                    vec![
                        r * a.cos() + jitter(&mut rng),
                        r * a.sin() + jitter(&mut rng),
                    ],
                    label as f64,
                )
            }
            TaskName::Moons => {
                let label = rng.random_range(0..2u8);
                let a = rng.random_range(0.0..PI);
                let (px, py) = if label == 0 {
                    (a.cos(), a.sin())
                } else {
                    (1.0 - a.cos(), 0.5 - a.sin())
                };
                (
                    vec![px + jitter(&mut rng), py + jitter(&mut rng)],
                    label as f64,
                )
            }
            TaskName::Reg1 => {
                let (x, y) = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
                (vec![x, y], reg1(x, y))
            }
            TaskName::Reg2Sph => {
                let (theta, phi) = (rng.random_range(0.0..=PI), rng.random_range(0.0..=2.0 * PI));
                (vec![theta, phi], sph_y10(theta))
            }
            TaskName::Reg3 => {
                let (x, y) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
                (vec![x, y], reg3(x, y))
            }
        };
        inputs.push(x);
        targets.push(vec![y]);
    }
    Dataset {
        inputs,
        targets,
        kind,
    }
}

pub fn reg1(x: f64, y: f64) -> f64 {
    3.0 * x / (y.exp() + (-y).exp())
}

/// Real spherical harmonic with l = 1, m = 0.
pub fn sph_y10(theta: f64) -> f64 {
    0.5 * (3.0 / PI).sqrt() * theta.cos()
}

pub fn reg3(x: f64, y: f64) -> f64 {
    2.0 * (1.0 + x * x + y * y).sqrt()
}

/// Fixed input box for the regression tasks.
pub fn input_box(name: TaskName) -> Option<Normalizer> {
    match name {
        TaskName::Reg1 => Some(Normalizer {
            min: vec![-1.0, -1.0],
            max: vec![1.0, 1.0],
        }),
        TaskName::Reg2Sph => Some(Normalizer {
            min: vec![0.0, 0.0],
            max: vec![PI, 2.0 * PI],
        }),
        TaskName::Reg3 => Some(Normalizer {
            min: vec![0.0, 0.0],
            max: vec![1.0, 1.0],
        }),
        _ => None,
    }
}

/// Train, validation and test splits from disjoint random streams. Bounds
/// are the task's input box for regression and fit over all three splits
/// for classification.
pub fn generate(task: &TaskSpec) -> Result<TaskData> {
    let train = sample(task, task.n_train, STREAM_TRAIN, DatasetKind::Train);
    let val = sample(task, task.n_val, STREAM_VAL, DatasetKind::Validation);
    let test = sample(task, task.n_test, STREAM_TEST, DatasetKind::Test);
    let bounds = match input_box(task.name) {
        Some(b) => b,
        None => Normalizer::fit([&train, &val, &test])?,
    };
    Ok(TaskData {
        train,
        val,
        test,
        bounds,
    })
}

/// Extra training batch `round` for the retraining protocol, drawn from a
/// stream disjoint from the initial splits.
pub fn extra_batch(task: &TaskSpec, round: usize, n: usize) -> Dataset {
    sample(task, n, STREAM_EXTRA + round as u64, DatasetKind::Train)
}
