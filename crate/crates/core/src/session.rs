//! Persisted collapsed objective for incremental retraining.
//!
//! An [`ObjectiveState`] holds unnormalized moment sums and sample counts
//! for the training and validation partitions. Adding or removing a batch
//! only touches the batch itself; the objective is rebuilt from the sums at
//! solve time.
//!
//! Removal trusts the caller. Subtracting a batch that was never added
//! still succeeds as long as the counts allow it, and silently corrupts the
//! moments:
//!
//! ```
//! use qkan_core::{Dataset, DatasetKind, EncodingSpec, KanSpec, Normalizer, ObjectiveConfig};
//! use qkan_core::session::ObjectiveState;
//!
//! let spec = KanSpec::uniform(vec![1, 1], 1).unwrap();
//! let a = Dataset::new(vec![vec![0.1], vec![0.9]], vec![0.2, 0.8], DatasetKind::Train);
//! let stranger = Dataset::new(vec![vec![0.5]], vec![-1.0], DatasetKind::Train);
//! let bounds = Normalizer::identity(1);
//! let enc = EncodingSpec::default();
//! let cfg = ObjectiveConfig::default();
//!
//! let state = ObjectiveState::build(&spec, &enc, &cfg, &bounds, &a, None).unwrap();
//! let misused = state.remove_samples(&stranger, DatasetKind::Train).unwrap();
//! let honest = ObjectiveState::build(&spec, &enc, &cfg, &bounds, &a.slice(0..1), None).unwrap();
//! assert_eq!(misused.n_train(), honest.n_train());
//! assert_ne!(misused.assemble().unwrap(), honest.assemble().unwrap());
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binpoly::BinaryPolynomial;
use crate::data::{Dataset, DatasetKind, Normalizer};
use crate::encoding::EncodingSpec;
use crate::error::{Error, Result};
use crate::network::{DecodedModel, KanSpec, VariableLayout};
use crate::objective::{
    assemble, partition_scales, MomentKey, MomentTable, ObjectiveConfig, ObjectiveTemplate,
};
use crate::reduction::{reduce_from, QuboProblem};
use crate::solver::{decode_solution, AnnealSchedule, SolveResult, Solver};

pub const STATE_MAGIC: &[u8; 8] = b"QKANSTAT";
pub const STATE_FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 8;

/// Coefficients below this fraction of the largest one are dropped before
/// reduction.
pub const COMPRESS_RELATIVE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ObjectiveState {
    spec: KanSpec,
    encoding: EncodingSpec,
    config: ObjectiveConfig,
    bounds: Normalizer,
    train: MomentTable,
    n_train: u64,
    val: MomentTable,
    n_val: u64,
    template: Arc<ObjectiveTemplate>,
    layout: Arc<VariableLayout>,
}

impl PartialEq for ObjectiveState {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.encoding == other.encoding
            && self.config == other.config
            && self.bounds == other.bounds
            && self.train == other.train
            && self.n_train == other.n_train
            && self.val == other.val
            && self.n_val == other.n_val
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: KanSpec,
    encoding: EncodingSpec,
    config: ObjectiveConfig,
    features: usize,
    keys: Vec<MomentKey>,
}

/// Everything a solve produced.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: DecodedModel,
    pub result: SolveResult,
    pub qubo: QuboProblem,
    pub hubo_terms: usize,
    pub hubo_degree: usize,
}

impl ObjectiveState {
    /// Collapses raw (unnormalized) datasets after normalizing them with
    /// `bounds`, which are frozen into the state.
    pub fn build(
        spec: &KanSpec,
        encoding: &EncodingSpec,
        config: &ObjectiveConfig,
        bounds: &Normalizer,
        train: &Dataset,
        val: Option<&Dataset>,
    ) -> Result<Self> {
        let layout = Arc::new(VariableLayout::new(spec, encoding)?);
        let template = Arc::new(ObjectiveTemplate::new(spec, &layout));
        if bounds.features() != spec.inputs() {
            return Err(Error::FeatureCount {
                expected: spec.inputs(),
                found: bounds.features(),
            });
        }
        let mut state = ObjectiveState {
            spec: spec.clone(),
            encoding: *encoding,
            config: *config,
            bounds: bounds.clone(),
            train: MomentTable::zeros(&template),
            n_train: 0,
            val: MomentTable::zeros(&template),
            n_val: 0,
            template,
            layout,
        };
        state.fold(train, DatasetKind::Train, 1.0)?;
        if let Some(v) = val {
            state.fold(v, DatasetKind::Validation, 1.0)?;
        }
        Ok(state)
    }

    pub fn spec(&self) -> &KanSpec {
        &self.spec
    }

    pub fn encoding(&self) -> &EncodingSpec {
        &self.encoding
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    pub fn bounds(&self) -> &Normalizer {
        &self.bounds
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn template(&self) -> &ObjectiveTemplate {
        &self.template
    }

    pub fn n_train(&self) -> u64 {
        self.n_train
    }

    pub fn n_val(&self) -> u64 {
        self.n_val
    }

    pub fn train_moments(&self) -> &MomentTable {
        &self.train
    }

    pub fn val_moments(&self) -> &MomentTable {
        &self.val
    }

    pub fn num_moments(&self) -> usize {
        self.template.len()
    }

    fn fold(&mut self, batch: &Dataset, kind: DatasetKind, sign: f64) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        batch.validate_shape(self.spec.inputs(), self.spec.outputs())?;
        let count = match kind {
            DatasetKind::Train => &mut self.n_train,
            DatasetKind::Validation => &mut self.n_val,
            DatasetKind::Test => {
                return Err(Error::SchemaMismatch(
                    "test data cannot enter the objective".into(),
                ))
            }
        };
        let n = batch.len() as u64;
        if sign < 0.0 && n > *count {
            return Err(Error::CountUnderflow {
                present: *count,
                removing: n,
            });
        }
        let normalized = self.bounds.apply(batch)?;
        let moments = self.template.collapse(&normalized)?;
        let table = match kind {
            DatasetKind::Train => &mut self.train,
            _ => &mut self.val,
        };
        table.accumulate(&moments, sign)?;
        *count = if sign < 0.0 { *count - n } else { *count + n };
        Ok(())
    }

    /// New state with the batch's moments added to the given partition.
    pub fn add_samples(&self, batch: &Dataset, kind: DatasetKind) -> Result<Self> {
        let mut next = self.clone();
        next.fold(batch, kind, 1.0)?;
        Ok(next)
    }

    /// New state with the batch's moments subtracted. Only the counts are
    /// checked; see the module docs.
    pub fn remove_samples(&self, batch: &Dataset, kind: DatasetKind) -> Result<Self> {
        let mut next = self.clone();
        next.fold(batch, kind, -1.0)?;
        Ok(next)
    }

    /// Objective from the stored sums with the current counts.
    pub fn assemble(&self) -> Result<BinaryPolynomial> {
        if self.n_train == 0 {
            return Err(Error::EmptyDataset("training set"));
        }
        let (st, sv) = partition_scales(&self.config, self.n_train, self.n_val);
        if self.n_val > 0 {
            self.template.combine([(&self.train, st), (&self.val, sv)])
        } else {
            self.template.combine([(&self.train, st)])
        }
    }

    pub fn retrain(
        &self,
        solver: &dyn Solver,
        schedule: &AnnealSchedule,
        w_factor: f64,
    ) -> Result<TrainOutcome> {
        let h = self.assemble()?;
        solve_objective(
            h,
            &self.spec,
            &self.encoding,
            &self.layout,
            &self.bounds,
            solver,
            schedule,
            w_factor,
        )
    }

    fn header(&self) -> Header {
        Header {
            spec: self.spec.clone(),
            encoding: self.encoding,
            config: self.config,
            features: self.spec.inputs(),
            keys: self.template.keys().cloned().collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header())?;
        let mut buf = Vec::new();
        buf.extend_from_slice(STATE_MAGIC);
        buf.extend_from_slice(&STATE_FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&self.n_train.to_le_bytes());
        buf.extend_from_slice(&self.n_val.to_le_bytes());
        let floats = self
            .bounds
            .min
            .iter()
            .chain(&self.bounds.max)
            .copied()
            .chain(self.train.entries().map(|(_, v)| v))
            .chain(self.val.entries().map(|(_, v)| v));
        for f in floats {
            buf.extend_from_slice(&f.to_le_bytes());
        }
        let d = digest(&buf);
        buf.extend_from_slice(&d);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < STATE_MAGIC.len() + 8 + DIGEST_LEN {
            return Err(Error::DigestMismatch);
        }
        let (body, tail) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if digest(body) != tail {
            return Err(Error::DigestMismatch);
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != STATE_MAGIC {
            return Err(Error::Format("not an objective state file".into()));
        }
        let version = r.u32()?;
        if version != STATE_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: STATE_FORMAT_VERSION,
                found: version,
            });
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)?;
        let n_train = r.u64()?;
        let n_val = r.u64()?;
        let d = header.features;
        let min = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let max = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let table = |r: &mut Reader| -> Result<MomentTable> {
            let vals = (0..header.keys.len())
                .map(|_| r.f64())
                .collect::<Result<Vec<_>>>()?;
            Ok(MomentTable::from_entries(
                header.keys.iter().cloned().zip(vals),
            ))
        };
        let train = table(&mut r)?;
        let val = table(&mut r)?;
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes in state payload".into()));
        }

        let layout = Arc::new(VariableLayout::new(&header.spec, &header.encoding)?);
        let template = Arc::new(ObjectiveTemplate::new(&header.spec, &layout));
        if !template.keys().eq(header.keys.iter()) {
            return Err(Error::SchemaMismatch(
                "stored moment keys do not match the network".into(),
            ));
        }
        Ok(ObjectiveState {
            spec: header.spec,
            encoding: header.encoding,
            config: header.config,
            bounds: Normalizer { min, max },
            train,
            n_train,
            val,
            n_val,
            template,
            layout,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn digest(bytes: &[u8]) -> [u8; DIGEST_LEN] {
    let full = Sha256::digest(bytes);
    let mut out = [0u8; DIGEST_LEN];
    out.copy_from_slice(&full[..DIGEST_LEN]);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("state payload too short".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Drops negligible coefficients and reduces to quadratic order. Returns
/// the QUBO with the term count and degree of the compressed objective.
pub fn prepare_qubo(
    h: &mut BinaryPolynomial,
    layout: &VariableLayout,
    w_factor: f64,
) -> (QuboProblem, usize, usize) {
    h.compress(COMPRESS_RELATIVE * h.max_abs_coefficient());
    let qubo = reduce_from(h, w_factor, layout.total_bits());
    (qubo, h.len(), h.max_degree())
}

/// Compress, reduce, solve and decode an assembled objective.
#[allow(clippy::too_many_arguments)]
pub fn solve_objective(
    mut h: BinaryPolynomial,
    spec: &KanSpec,
    encoding: &EncodingSpec,
    layout: &VariableLayout,
    bounds: &Normalizer,
    solver: &dyn Solver,
    schedule: &AnnealSchedule,
    w_factor: f64,
) -> Result<TrainOutcome> {
    let (qubo, hubo_terms, hubo_degree) = prepare_qubo(&mut h, layout, w_factor);
    let result = solver.solve(&qubo, schedule)?;
    let model = decode_solution(&result, layout, spec, encoding, bounds)?;
    Ok(TrainOutcome {
        model,
        result,
        qubo,
        hubo_terms,
        hubo_degree,
    })
}

/// One-shot training on raw datasets without keeping a state.
#[allow(clippy::too_many_arguments)]
pub fn train_once(
    spec: &KanSpec,
    encoding: &EncodingSpec,
    config: &ObjectiveConfig,
    bounds: &Normalizer,
    train: &Dataset,
    val: Option<&Dataset>,
    solver: &dyn Solver,
    schedule: &AnnealSchedule,
    w_factor: f64,
) -> Result<TrainOutcome> {
    let layout = VariableLayout::new(spec, encoding)?;
    let train = bounds.apply(train)?;
    let val = val
        .filter(|v| !v.is_empty())
        .map(|v| bounds.apply(v))
        .transpose()?;
    let h = assemble(spec, &layout, &train, val.as_ref(), config)?;
    solve_objective(
        h, spec, encoding, &layout, bounds, solver, schedule, w_factor,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::max_relative_difference;
    use crate::reduction::DEFAULT_W_FACTOR;
    use crate::solver::{ExactSolver, SimulatedAnnealer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64, kind: DatasetKind) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let ys = xs.iter().map(|x| x[0] - 0.5 * x[1]).collect();
        Dataset::new(xs, ys, kind)
    }

    fn setup() -> (KanSpec, EncodingSpec, ObjectiveConfig, Normalizer) {
        (
            KanSpec::uniform(vec![2, 1], 1).unwrap(),
            EncodingSpec::default(),
            ObjectiveConfig::default(),
            Normalizer {
                min: vec![0.0, 0.0],
                max: vec![1.0, 1.0],
            },
        )
    }

    #[test]
    fn round_trip_and_fixed_size() {
        let (spec, enc, cfg, b) = setup();
        let small = ObjectiveState::build(
            &spec,
            &enc,
            &cfg,
            &b,
            &data(100, 1, DatasetKind::Train),
            None,
        )
        .unwrap();
        let big = ObjectiveState::build(
            &spec,
            &enc,
            &cfg,
            &b,
            &data(100_000, 2, DatasetKind::Train),
            None,
        )
        .unwrap();
        let bytes = small.to_bytes().unwrap();
        assert_eq!(ObjectiveState::from_bytes(&bytes).unwrap(), small);
        assert_eq!(bytes.len(), big.to_bytes().unwrap().len());
    }

    #[test]
    fn corrupt_files_are_distinct_errors() {
        let (spec, enc, cfg, b) = setup();
        let s = ObjectiveState::build(
            &spec,
            &enc,
            &cfg,
            &b,
            &data(10, 1, DatasetKind::Train),
            None,
        )
        .unwrap();
        let bytes = s.to_bytes().unwrap();
        assert!(matches!(
            ObjectiveState::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::DigestMismatch)
        ));

        let mut other = bytes[..bytes.len() - DIGEST_LEN].to_vec();
        other[8..12].copy_from_slice(&7u32.to_le_bytes());
        let d = digest(&other);
        other.extend_from_slice(&d);
        assert!(matches!(
            ObjectiveState::from_bytes(&other),
            Err(Error::VersionMismatch {
                expected: 1,
                found: 7
            })
        ));
        assert!(matches!(
            ObjectiveState::load(Path::new("/nonexistent/s.qks")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn incremental_matches_scratch() {
        let (spec, enc, cfg, b) = setup();
        let a = data(300, 3, DatasetKind::Train);
        let bb = data(50, 4, DatasetKind::Train);
        let v = data(40, 5, DatasetKind::Validation);
        let s = ObjectiveState::build(&spec, &enc, &cfg, &b, &a, Some(&v)).unwrap();
        let inc = s.add_samples(&bb, DatasetKind::Train).unwrap();
        let scratch =
            ObjectiveState::build(&spec, &enc, &cfg, &b, &a.concat(&bb), Some(&v)).unwrap();
        assert!(
            max_relative_difference(&inc.assemble().unwrap(), &scratch.assemble().unwrap()) <= 1e-9
        );
        let back = inc.remove_samples(&bb, DatasetKind::Train).unwrap();
        assert_eq!(back.n_train(), 300);
        assert!(max_relative_difference(&back.assemble().unwrap(), &s.assemble().unwrap()) <= 1e-9);
        assert_eq!(
            s.add_samples(&Dataset::empty(DatasetKind::Train), DatasetKind::Train)
                .unwrap(),
            s
        );
    }

    #[test]
    fn guards() {
        let (spec, enc, cfg, b) = setup();
        let a = data(5, 3, DatasetKind::Train);
        let s = ObjectiveState::build(&spec, &enc, &cfg, &b, &a, None).unwrap();
        assert!(matches!(
            s.remove_samples(&data(6, 1, DatasetKind::Train), DatasetKind::Train),
            Err(Error::CountUnderflow {
                present: 5,
                removing: 6
            })
        ));
        let outside = Dataset::new(vec![vec![1.5, 0.5]], vec![0.0], DatasetKind::Train);
        assert!(matches!(
            s.add_samples(&outside, DatasetKind::Train),
            Err(Error::OutOfRange { feature: 0, .. })
        ));
        let empty = s.remove_samples(&a, DatasetKind::Train).unwrap();
        assert!(matches!(empty.assemble(), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn retrain_equals_one_shot() {
        let (spec, enc, cfg, b) = setup();
        let a = data(200, 8, DatasetKind::Train);
        let sched = AnnealSchedule {
            reads: 8,
            sweeps: 200,
            seed: 4,
            ..Default::default()
        };
        let s = ObjectiveState::build(&spec, &enc, &cfg, &b, &a, None).unwrap();
        let r1 = s
            .retrain(&SimulatedAnnealer, &sched, DEFAULT_W_FACTOR)
            .unwrap();
        let r2 = train_once(
            &spec,
            &enc,
            &cfg,
            &b,
            &a,
            None,
            &SimulatedAnnealer,
            &sched,
            DEFAULT_W_FACTOR,
        )
        .unwrap();
        assert_eq!(r1.qubo, r2.qubo);
        assert_eq!(r1.result, r2.result);
        assert_eq!(r1.model, r2.model);
    }

    #[test]
    fn exact_retrain_fits_linear_target() {
        let spec = KanSpec::uniform(vec![1, 1], 1).unwrap();
        let enc = EncodingSpec::default();
        let b = Normalizer::identity(1);
        let xs: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64 / 10.0]).collect();
        let ys = xs.iter().map(|x| 0.5 + x[0]).collect();
        let d = Dataset::new(xs, ys, DatasetKind::Train);
        let s =
            ObjectiveState::build(&spec, &enc, &ObjectiveConfig::default(), &b, &d, None).unwrap();
        let out = s
            .retrain(&ExactSolver, &AnnealSchedule::default(), DEFAULT_W_FACTOR)
            .unwrap();
        assert_eq!(out.model.control_points, vec![vec![0.5, 1.5]]);
    }
}
