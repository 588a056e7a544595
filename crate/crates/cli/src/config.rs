//! Run configuration: defaults, overlaid by a JSON file, overlaid by flags.

use std::path::{Path, PathBuf};

use qkan_core::baseline::{GdConfig, Optimizer};
use qkan_core::bench::{default_encoding, default_network, Arm, TaskName, TaskSpec};
use qkan_core::{AnnealSchedule, EncodingSpec, KanSpec, ObjectiveConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const RESOLVED_NAME: &str = "config.resolved.json";

/// Every knob of a run. `seed` drives data generation, the annealer and
/// gradient-descent initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<TaskName>,
    pub n_train: Option<usize>,
    pub n_val: Option<usize>,
    pub n_test: Option<usize>,
    pub noise: Option<f64>,
    pub seed: u64,

    pub shape: Option<Vec<usize>>,
    /// One degree for every edge, or one per edge in layout order.
    pub degrees: Option<Vec<u32>>,
    pub encoding: Option<EncodingSpec>,

    pub objective: ObjectiveConfig,
    pub solver: String,
    pub schedule: AnnealSchedule,
    pub w_factor: f64,

    pub optimizer: Option<Optimizer>,
    pub gd: GdConfig,
    pub lr_sweep: bool,

    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub val_frac: f64,
    /// Force classification metrics; inferred from the data when absent.
    pub classification: Option<bool>,

    pub out: Option<PathBuf>,
    pub save_state: Option<PathBuf>,
    pub export_qubo: Option<PathBuf>,

    pub arms: Vec<Arm>,
    pub repeats: usize,
    pub retrain_rounds: usize,
    pub retrain_batch: usize,
    pub degree_sweep: Vec<u32>,
    pub runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: None,
            n_train: None,
            n_val: None,
            n_test: None,
            noise: None,
            seed: 0,
            shape: None,
            degrees: None,
            encoding: None,
            objective: ObjectiveConfig::default(),
            solver: "sa".into(),
            schedule: AnnealSchedule::default(),
            w_factor: qkan_core::reduction::DEFAULT_W_FACTOR,
            optimizer: None,
            gd: GdConfig {
                steps: 300,
                ..GdConfig::default()
            },
            lr_sweep: false,
            train: None,
            val: None,
            test: None,
            val_frac: 0.0,
            classification: None,
            out: None,
            save_state: None,
            export_qubo: None,
            arms: vec![Arm::Sa, Arm::Adam],
            repeats: 1,
            retrain_rounds: 0,
            retrain_batch: 1_000,
            degree_sweep: Vec::new(),
            runs: 50,
        }
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl RunConfig {
    /// Defaults with the file's fields merged in (nested objects merge
    /// field by field).
    pub fn from_file(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let overlay: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut base =
            serde_json::to_value(RunConfig::default()).expect("default config serializes");
        merge(&mut base, overlay);
        serde_json::from_value(base)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Fills task-dependent defaults so the echoed config is explicit and
    /// propagates the seed.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(task) = self.task {
            let desk = TaskSpec::desk(task, self.seed);
            self.n_train.get_or_insert(desk.n_train);
            self.n_val.get_or_insert(desk.n_val);
            self.n_test.get_or_insert(desk.n_test);
            self.noise.get_or_insert(desk.noise);
            if self.shape.is_none() && self.degrees.is_none() {
                let net = default_network(task, 1);
                self.shape = Some(net.widths().to_vec());
                self.degrees = Some(net.edges().iter().map(|e| e.degree).collect());
            }
            self.encoding.get_or_insert(default_encoding(task));
        }
        self.encoding.get_or_insert_with(EncodingSpec::default);
        self.schedule.seed = self.seed;
        self.gd.seed = self.seed;
        if !(0.0..1.0).contains(&self.val_frac) {
            return Err(CliError::Usage(format!(
                "--val-frac must be in [0, 1), got {}",
                self.val_frac
            )));
        }
        if self.shape.is_some() && self.degrees.is_none() {
            self.degrees = Some(vec![1]);
        }
        if self.shape.is_some() {
            self.network()?;
        }
        Ok(self)
    }

    pub fn encoding(&self) -> EncodingSpec {
        self.encoding.unwrap_or_default()
    }

    pub fn network(&self) -> Result<KanSpec, CliError> {
        let shape = self
            .shape
            .clone()
            .ok_or_else(|| CliError::Usage("--shape is required without --task".into()))?;
        let degrees = self.degrees.clone().unwrap_or_else(|| vec![1]);
        let spec = if degrees.len() == 1 {
            KanSpec::uniform(shape, degrees[0])
        } else {
            KanSpec::with_degrees(shape, &degrees)
        };
        spec.map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn task_spec(&self) -> Result<Option<TaskSpec>, CliError> {
        let Some(name) = self.task else {
            return Ok(None);
        };
        let desk = TaskSpec::desk(name, self.seed);
        Ok(Some(TaskSpec {
            n_train: self.n_train.unwrap_or(desk.n_train),
            n_val: self.n_val.unwrap_or(desk.n_val),
            n_test: self.n_test.unwrap_or(desk.n_test),
            noise: self.noise.unwrap_or(desk.noise),
            network: self.network()?,
            encoding: self.encoding(),
            ..desk
        }))
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join(RESOLVED_NAME),
            serde_json::to_string_pretty(self).expect("config serializes"),
        )?;
        Ok(())
    }
}
