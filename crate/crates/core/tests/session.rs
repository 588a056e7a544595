mod common;

use common::coef_rel_diff;
use proptest::prelude::*;
use qkan_core::bench::{generate, TaskName, TaskSpec};
use qkan_core::reduction::DEFAULT_W_FACTOR;
use qkan_core::session::{train_once, ObjectiveState};
use qkan_core::solver::SimulatedAnnealer;
use qkan_core::{AnnealSchedule, Dataset, DatasetKind, Error, ObjectiveConfig};

fn task_strategy() -> impl Strategy<Value = TaskName> {
    prop::sample::select(TaskName::ALL.to_vec())
}

fn build(task: &TaskSpec, train: &Dataset, val: Option<&Dataset>) -> ObjectiveState {
    let bounds = generate(task).unwrap().bounds;
    ObjectiveState::build(
        &task.network,
        &task.encoding,
        &ObjectiveConfig::default(),
        &bounds,
        train,
        val,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn incremental_equals_from_scratch(name in task_strategy(), seed in any::<u64>(), cut in 1usize..199) {
        let task = TaskSpec::tiny(name, seed);
        let all = generate(&task).unwrap().train;
        let (a, b) = (all.slice(0..cut), all.slice(cut..all.len()));
        let inc = build(&task, &a, None).add_samples(&b, DatasetKind::Train).unwrap();
        let full = build(&task, &all, None);
        prop_assert_eq!(inc.n_train(), full.n_train());
        prop_assert!(coef_rel_diff(&inc.assemble().unwrap(), &full.assemble().unwrap()) <= 1e-9);
    }

    #[test]
    fn add_then_remove_is_identity(name in task_strategy(), seed in any::<u64>()) {
        let task = TaskSpec::tiny(name, seed);
        let data = generate(&task).unwrap();
        let base = build(&task, &data.train, None);
        let batch = data.train.slice(0..37);
        for kind in [DatasetKind::Train, DatasetKind::Validation] {
            let round = base.add_samples(&batch, kind).unwrap().remove_samples(&batch, kind).unwrap();
            prop_assert_eq!((round.n_train(), round.n_val()), (base.n_train(), base.n_val()));
            prop_assert!(coef_rel_diff(&round.assemble().unwrap(), &base.assemble().unwrap()) <= 1e-9);
        }
    }

    #[test]
    fn bytes_round_trip(name in task_strategy(), seed in any::<u64>()) {
        let task = TaskSpec::tiny(name, seed);
        let d = generate(&task).unwrap();
        let state = build(&task, &d.train, Some(&d.train.slice(0..20).with_kind(DatasetKind::Validation)));
        let back = ObjectiveState::from_bytes(&state.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), state.to_bytes().unwrap());
        prop_assert!(back == state);
    }
}

#[test]
fn any_flipped_byte_is_detected() {
    let task = TaskSpec::tiny(TaskName::Reg1, 2);
    let state = build(&task, &generate(&task).unwrap().train, None);
    let bytes = state.to_bytes().unwrap();
    for i in (0..bytes.len()).step_by(bytes.len() / 50 + 1) {
        let mut bad = bytes.clone();
        bad[i] ^= 0x41;
        assert!(
            matches!(ObjectiveState::from_bytes(&bad), Err(Error::DigestMismatch)),
            "byte {i}"
        );
    }
    assert!(ObjectiveState::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn out_of_range_samples_are_rejected() {
    let task = TaskSpec::tiny(TaskName::Reg1, 2);
    let state = build(&task, &generate(&task).unwrap().train, None);
    let far = Dataset::new(vec![vec![5.0, 0.0]], vec![0.0], DatasetKind::Train);
    assert!(matches!(
        state.add_samples(&far, DatasetKind::Train),
        Err(Error::OutOfRange { .. })
    ));
}

#[test]
fn removing_more_than_present_underflows() {
    let task = TaskSpec::tiny(TaskName::Reg1, 2);
    let d = generate(&task).unwrap();
    let state = build(&task, &d.train.slice(0..10), None);
    assert!(matches!(
        state.remove_samples(&d.train.slice(0..11), DatasetKind::Train),
        Err(Error::CountUnderflow { .. })
    ));
}

#[test]
fn retrain_after_build_equals_one_shot() {
    let task = TaskSpec::tiny(TaskName::Circle, 4);
    let d = generate(&task).unwrap();
    let schedule = AnnealSchedule {
        reads: 10,
        sweeps: 200,
        ..AnnealSchedule::with_seed(3)
    };
    let state = build(&task, &d.train, None);
    let a = state
        .retrain(&SimulatedAnnealer, &schedule, DEFAULT_W_FACTOR)
        .unwrap();
    let b = train_once(
        &task.network,
        &task.encoding,
        &ObjectiveConfig::default(),
        &d.bounds,
        &d.train,
        None,
        &SimulatedAnnealer,
        &schedule,
        DEFAULT_W_FACTOR,
    )
    .unwrap();
    assert_eq!(a.qubo, b.qubo);
    assert_eq!(a.result, b.result);
    assert_eq!(a.model, b.model);
}

#[test]
fn removal_matches_a_rebuild_on_the_remainder() {
    let task = TaskSpec::tiny(TaskName::Reg3, 8);
    let d = generate(&task).unwrap();
    let state = build(&task, &d.train, None)
        .remove_samples(&d.train.slice(150..200), DatasetKind::Train)
        .unwrap();
    let rebuilt = build(&task, &d.train.slice(0..150), None);
    assert!(coef_rel_diff(&state.assemble().unwrap(), &rebuilt.assemble().unwrap()) <= 1e-9);
}
