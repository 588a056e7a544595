use std::path::{Path, PathBuf};

use qkan_core::baseline::{lr_sweep, train_gd};
use qkan_core::bench::{
    self, degree_sweep, generate, run_experiment, ExperimentOptions, Metrics, TaskName,
};
use qkan_core::objective::{MomentTable, ObjectiveTemplate};
use qkan_core::reduction::qubit_count;
use qkan_core::session::{prepare_qubo, ObjectiveState, STATE_MAGIC};
use qkan_core::solver::decode_solution;
use qkan_core::{
    Dataset, DatasetKind, DecodedModel, Normalizer, QuboProblem, SolverRegistry, VariableLayout,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::CliError;

fn out_dir(out: &Path) -> PathBuf {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn read_csv(path: &Path, kind: DatasetKind) -> Result<Dataset, CliError> {
    Dataset::read_csv(path, kind).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn looks_binary(d: &Dataset) -> bool {
    d.targets.iter().flatten().all(|y| *y == 0.0 || *y == 1.0)
}

fn score(model: &DecodedModel, data: &Dataset, classification: bool) -> Result<Metrics, CliError> {
    let task = if classification {
        TaskName::Circle
    } else {
        TaskName::Reg1
    };
    Ok(bench::evaluate(model, data, task)?)
}

struct Splits {
    train: Dataset,
    val: Option<Dataset>,
    test: Option<Dataset>,
    bounds: Normalizer,
    classification: bool,
}

fn load_splits(c: &RunConfig) -> Result<Splits, CliError> {
    if let Some(task) = c.task_spec()? {
        if c.train.is_some() {
            return Err(CliError::Usage(
                "use either --task or --train, not both".into(),
            ));
        }
        let d = generate(&task)?;
        let val = d.val_opt().cloned();
        return Ok(Splits {
            classification: c.classification.unwrap_or(task.name.is_classification()),
            train: d.train,
            val,
            test: Some(d.test),
            bounds: d.bounds,
        });
    }
    let path = c
        .train
        .as_ref()
        .ok_or_else(|| CliError::Usage("either --task or --train is required".into()))?;
    let mut train = read_csv(path, DatasetKind::Train)?;
    let mut val = c
        .val
        .as_deref()
        .map(|p| read_csv(p, DatasetKind::Validation))
        .transpose()?;
    if val.is_none() && c.val_frac > 0.0 {
        let keep = train.len() - ((train.len() as f64 * c.val_frac).round() as usize);
        val = Some(
            train
                .slice(keep..train.len())
                .with_kind(DatasetKind::Validation),
        );
        train = train.slice(0..keep);
    }
    let test = c
        .test
        .as_deref()
        .map(|p| read_csv(p, DatasetKind::Test))
        .transpose()?;
    let bounds = Normalizer::fit(std::iter::once(&train).chain(val.as_ref()))?;
    Ok(Splits {
        classification: c.classification.unwrap_or(looks_binary(&train)),
        train,
        val,
        test,
        bounds,
    })
}

fn export(qubo: &QuboProblem, prefix: &Path) -> Result<(), CliError> {
    qubo.export(
        &prefix.with_extension("coo"),
        &prefix.with_extension("json"),
    )?;
    Ok(())
}

fn finish(
    c: &RunConfig,
    model: &DecodedModel,
    mut report: serde_json::Value,
    splits: (&Dataset, Option<&Dataset>),
    classification: bool,
) -> Result<(), CliError> {
    report["train"] = json!(score(model, splits.0, classification)?);
    if let Some(t) = splits.1 {
        report["test"] = json!(score(model, t, classification)?);
    }
    if let Some(out) = &c.out {
        let dir = out_dir(out);
        c.write_resolved(&dir)?;
        model.save(out)?;
        std::fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(&report).expect("json"),
        )?;
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    Ok(())
}

pub fn train(c: RunConfig) -> Result<(), CliError> {
    let splits = load_splits(&c)?;
    let spec = c.network()?;
    let enc = c.encoding();

    if let Some(optimizer) = c.optimizer {
        let gd = qkan_core::GdConfig { optimizer, ..c.gd };
        let train = splits.bounds.apply(&splits.train)?;
        let val = splits
            .val
            .as_ref()
            .map(|v| splits.bounds.apply_clamped(v))
            .transpose()?;
        let out = if c.lr_sweep {
            lr_sweep(&spec, &enc, &splits.bounds, &train, val.as_ref(), &gd)?
        } else {
            train_gd(&spec, &enc, &splits.bounds, &train, val.as_ref(), &gd)?
        };
        if let Some(o) = &c.out {
            std::fs::create_dir_all(out_dir(o))?;
            out.write_trace_csv(&out_dir(o).join("trace.csv"))?;
        }
        let report = json!({
            "arm": optimizer.to_string(),
            "learning_rate": out.config.learning_rate,
            "steps": out.config.steps,
            "final_train_mse": out.final_point().train_mse,
        });
        return finish(
            &c,
            &out.model,
            report,
            (&splits.train, splits.test.as_ref()),
            splits.classification,
        );
    }

    let solver = SolverRegistry::default().get(&c.solver)?;
    let state = ObjectiveState::build(
        &spec,
        &enc,
        &c.objective,
        &splits.bounds,
        &splits.train,
        splits.val.as_ref(),
    )?;
    if let Some(p) = &c.save_state {
        state.save(p)?;
    }
    let mut h = state.assemble()?;
    let (qubo, hubo_terms, hubo_degree) = prepare_qubo(&mut h, state.layout(), c.w_factor);
    if let Some(prefix) = &c.export_qubo {
        export(&qubo, prefix)?;
    }
    let result = solver.solve(&qubo, &c.schedule)?;
    let model = decode_solution(&result, state.layout(), &spec, &enc, &splits.bounds)?;
    let report = json!({
        "arm": c.solver,
        "energy": result.best_energy,
        "aux_violations": result.aux_violations,
        "control_bits": state.layout().total_bits(),
        "aux_bits": qubo.registry.len(),
        "qubits": qubit_count(state.layout(), &qubo.registry),
        "hubo_terms": hubo_terms,
        "hubo_degree": hubo_degree,
        "moments": state.num_moments(),
    });
    finish(
        &c,
        &model,
        report,
        (&splits.train, splits.test.as_ref()),
        splits.classification,
    )
}

pub struct Batches {
    pub add: Vec<PathBuf>,
    pub remove: Vec<PathBuf>,
    pub add_val: Vec<PathBuf>,
    pub remove_val: Vec<PathBuf>,
}

pub fn retrain(c: RunConfig, state_path: &Path, b: &Batches) -> Result<(), CliError> {
    let mut state = ObjectiveState::load(state_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", state_path.display())))?;
    for p in &b.remove {
        state = state.remove_samples(&read_csv(p, DatasetKind::Train)?, DatasetKind::Train)?;
    }
    for p in &b.remove_val {
        state = state.remove_samples(
            &read_csv(p, DatasetKind::Validation)?,
            DatasetKind::Validation,
        )?;
    }
    let mut last_added = None;
    for p in &b.add {
        let d = read_csv(p, DatasetKind::Train)?;
        state = state.add_samples(&d, DatasetKind::Train)?;
        last_added = Some(d);
    }
    for p in &b.add_val {
        state = state.add_samples(
            &read_csv(p, DatasetKind::Validation)?,
            DatasetKind::Validation,
        )?;
    }
    if let Some(p) = &c.save_state {
        state.save(p)?;
    }

    let solver = SolverRegistry::default().get(&c.solver)?;
    let mut h = state.assemble()?;
    let (qubo, _, _) = prepare_qubo(&mut h, state.layout(), c.w_factor);
    if let Some(prefix) = &c.export_qubo {
        export(&qubo, prefix)?;
    }
    let result = solver.solve(&qubo, &c.schedule)?;
    let model = decode_solution(
        &result,
        state.layout(),
        state.spec(),
        state.encoding(),
        state.bounds(),
    )?;
    let test = c
        .test
        .as_deref()
        .map(|p| read_csv(p, DatasetKind::Test))
        .transpose()?;
    let classification = c
        .classification
        .or(last_added.as_ref().map(looks_binary))
        .or(test.as_ref().map(looks_binary))
        .unwrap_or(false);
    let mut report = json!({
        "arm": c.solver,
        "energy": result.best_energy,
        "aux_violations": result.aux_violations,
        "n_train": state.n_train(),
        "n_val": state.n_val(),
    });
    if let Some(t) = &test {
        report["test"] = json!(score(&model, t, classification)?);
    }
    if let Some(out) = &c.out {
        let dir = out_dir(out);
        c.write_resolved(&dir)?;
        model.save(out)?;
        std::fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(&report).expect("json"),
        )?;
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    Ok(())
}

pub fn eval(
    model_path: &Path,
    data: Option<&Path>,
    task: Option<TaskName>,
    seed: Option<u64>,
    n_test: Option<usize>,
    classification: bool,
) -> Result<(), CliError> {
    let model = DecodedModel::load(model_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", model_path.display())))?;
    let (d, cls) = match (data, task) {
        (Some(p), None) => {
            let d = read_csv(p, DatasetKind::Test)?;
            let cls = classification || looks_binary(&d);
            (d, cls)
        }
        (None, Some(t)) => {
            let mut spec = bench::TaskSpec::desk(t, seed.unwrap_or(0));
            if let Some(n) = n_test {
                spec.n_test = n;
            }
            spec.n_train = 0;
            (
                generate(&spec)?.test,
                classification || t.is_classification(),
            )
        }
        _ => {
            return Err(CliError::Usage(
                "eval needs exactly one of --data or --task".into(),
            ))
        }
    };
    let m = score(&model, &d, cls)?;
    println!("{}", serde_json::to_string_pretty(&m).expect("json"));
    Ok(())
}

pub fn bench_run(c: RunConfig) -> Result<(), CliError> {
    let task = c
        .task_spec()?
        .ok_or_else(|| CliError::Usage("bench run requires --task".into()))?;
    let out = c
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("bench run requires --out".into()))?;
    c.write_resolved(&out)?;
    let opts = ExperimentOptions {
        objective: c.objective,
        schedule: c.schedule,
        w_factor: c.w_factor,
        gd: c.gd,
        lr_sweep: c.lr_sweep || c.optimizer.is_none(),
        repeats: c.repeats,
        retrain_rounds: c.retrain_rounds,
        retrain_batch: c.retrain_batch,
    };
    if !c.degree_sweep.is_empty() {
        let report = degree_sweep(&task, &c.degree_sweep, c.runs, &opts, Some(&out))?;
        for s in &report.settings {
            if let Some(b) = s.best() {
                println!(
                    "degree {}: qubits {}, best energy {:.6}, test mse {:.6}, r2 {:.4}",
                    s.degree, s.qubits, b.energy, b.test_mse, b.test_r2
                );
            }
        }
        return Ok(());
    }
    let report = run_experiment(&task, &c.arms, &opts, Some(&out))?;
    for r in &report.arms {
        let arm = r.arm.map(|a| a.to_string()).unwrap_or_default();
        match (&r.error, &r.test) {
            (Some(e), _) => println!("{arm}: failed: {e}"),
            (None, Some(m)) => println!(
                "{arm}: test {}  total {:.3}s",
                serde_json::to_string(m).expect("json"),
                r.timing.total_s
            ),
            _ => {}
        }
    }
    Ok(())
}

fn structural_aux(
    layout: &VariableLayout,
    spec: &qkan_core::KanSpec,
    w_factor: f64,
) -> Result<usize, CliError> {
    let template = ObjectiveTemplate::new(spec, layout);
    let ones = MomentTable::from_entries(template.keys().map(|k| (k.clone(), 1.0)));
    let mut h = template.combine([(&ones, 1.0)])?;
    Ok(prepare_qubo(&mut h, layout, w_factor).0.registry.len())
}

pub fn inspect(path: &Path, w_factor: f64) -> Result<(), CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(STATE_MAGIC) {
        let state = ObjectiveState::from_bytes(&bytes)?;
        let layout = state.layout();
        println!("objective state {}", path.display());
        println!("  widths        {:?}", state.spec().widths());
        println!(
            "  degrees       {:?}",
            state
                .spec()
                .edges()
                .iter()
                .map(|e| e.degree)
                .collect::<Vec<_>>()
        );
        println!("  encoding      {:?}", state.encoding());
        println!(
            "  samples       train {}  val {}",
            state.n_train(),
            state.n_val()
        );
        println!("  moments       {}", state.num_moments());
        println!(
            "  bounds        min {:?} max {:?}",
            state.bounds().min,
            state.bounds().max
        );
        println!("  control bits  {}", layout.total_bits());
        if state.n_train() > 0 {
            let mut h = state.assemble()?;
            let (q, terms, degree) = prepare_qubo(&mut h, layout, w_factor);
            println!("  objective     {terms} terms, degree {degree}");
            println!("  aux bits      {}", q.registry.len());
            println!("  qubits        {}", qubit_count(layout, &q.registry));
            println!("  penalty w     {:.6}", q.penalty_weight);
        }
        return Ok(());
    }
    let model =
        DecodedModel::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let layout = VariableLayout::new(&model.spec, &model.encoding)?;
    let aux = structural_aux(&layout, &model.spec, w_factor)?;
    println!("model {}", path.display());
    println!("  widths        {:?}", model.spec.widths());
    println!("  encoding      {:?}", model.encoding);
    for (edge, pts) in model.spec.edges().iter().zip(&model.control_points) {
        println!(
            "  edge {:<8} degree {}  points {:?}",
            edge.key.to_string(),
            edge.degree,
            pts
        );
    }
    println!("  control bits  {}", layout.total_bits());
    println!("  aux bits      {aux}");
    println!("  qubits        {}", layout.total_bits() + aux);
    Ok(())
}
