//! Shared fixtures for the criterion benchmarks.

use qkan_core::bench::{default_network, generate, TaskName, TaskSpec};
use qkan_core::reduction::reduce_from;
use qkan_core::session::ObjectiveState;
use qkan_core::{
    BinaryPolynomial, Dataset, DecodedModel, KanSpec, ObjectiveConfig, QuboProblem, VariableLayout,
};

pub struct Fixture {
    pub task: TaskSpec,
    pub layout: VariableLayout,
    pub train: Dataset,
    pub normalized: Dataset,
}

impl Fixture {
    pub fn new(name: TaskName, n_train: usize) -> Self {
        let task = TaskSpec {
            n_train,
            n_val: 0,
            n_test: 0,
            ..TaskSpec::desk(name, 0)
        };
        let data = generate(&task).expect("task generates");
        let layout = VariableLayout::new(&task.network, &task.encoding).expect("layout");
        let normalized = data.bounds.apply(&data.train).expect("normalize");
        Fixture {
            task,
            layout,
            train: data.train,
            normalized,
        }
    }

    pub fn spec(&self) -> &KanSpec {
        &self.task.network
    }

    pub fn state(&self) -> ObjectiveState {
        let bounds = generate(&TaskSpec {
            n_train: 1,
            ..self.task.clone()
        })
        .expect("task")
        .bounds;
        ObjectiveState::build(
            &self.task.network,
            &self.task.encoding,
            &ObjectiveConfig::default(),
            &bounds,
            &self.train,
            None,
        )
        .expect("state")
    }

    pub fn objective(&self) -> BinaryPolynomial {
        self.state().assemble().expect("assemble")
    }

    pub fn qubo(&self) -> QuboProblem {
        reduce_from(
            &self.objective(),
            qkan_core::reduction::DEFAULT_W_FACTOR,
            self.layout.total_bits(),
        )
    }

    pub fn zero_model(&self) -> DecodedModel {
        let bounds = generate(&TaskSpec {
            n_train: 1,
            ..self.task.clone()
        })
        .expect("task")
        .bounds;
        DecodedModel::zeros(self.task.network.clone(), self.task.encoding, bounds)
    }
}

/// reg3 with the given bottom-edge degree.
pub fn reg3(degree: u32, n_train: usize) -> Fixture {
    let mut f = Fixture::new(TaskName::Reg3, n_train);
    f.task.network = default_network(TaskName::Reg3, degree);
    f.layout = VariableLayout::new(&f.task.network, &f.task.encoding).expect("layout");
    f
}
