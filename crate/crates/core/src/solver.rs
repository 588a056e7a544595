//! Exhaustive search and simulated annealing over QUBO problems.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binpoly::BinaryPolynomial;
use crate::data::Normalizer;
use crate::encoding::EncodingSpec;
use crate::error::{Error, Result};
use crate::network::{DecodedModel, KanSpec, VariableLayout};
use crate::reduction::QuboProblem;

pub const MAX_BRUTE_FORCE_VARS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    /// Initial inverse temperature; derived from the problem when absent.
    pub beta_start: Option<f64>,
    /// Final inverse temperature; derived from the problem when absent.
    pub beta_end: Option<f64>,
    pub sweeps: usize,
    pub reads: usize,
    pub seed: u64,
    pub aux_mode: AuxMode,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            beta_start: None,
            beta_end: None,
            sweeps: 1000,
            reads: 100,
            seed: 0,
            aux_mode: AuxMode::Follow,
        }
    }
}

/// How auxiliary bits move during annealing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxMode {
    /// Only non-auxiliary bits are proposed; every aux bit that depends on
    /// the flipped bit is reset to its product in the same move, so states
    /// stay consistent and the penalty never has to be climbed.
    #[default]
    Follow,
    /// Plain single-bit Metropolis over every variable.
    Free,
}

impl std::str::FromStr for AuxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "follow" => Ok(AuxMode::Follow),
            "free" => Ok(AuxMode::Free),
            other => Err(Error::InvalidSpec(format!("unknown aux mode {other:?}"))),
        }
    }
}

impl AnnealSchedule {
    pub fn with_seed(seed: u64) -> Self {
        AnnealSchedule {
            seed,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// Dense assignment indexed by variable id.
    pub best_assignment: Vec<u8>,
    pub best_energy: f64,
    pub energies_per_read: Vec<f64>,
    pub aux_violations: usize,
}

impl SolveResult {
    pub fn assignment_map(&self) -> BTreeMap<crate::VarId, u8> {
        self.best_assignment
            .iter()
            .enumerate()
            .map(|(i, b)| (crate::VarId(i as u32), *b))
            .collect()
    }
}

/// Anything with a dense-assignment energy.
pub trait EnergyModel: Sync {
    fn num_vars(&self) -> usize;
    fn energy(&self, bits: &[u8]) -> f64;
    fn aux_violations(&self, _bits: &[u8]) -> usize {
        0
    }
}

impl EnergyModel for BinaryPolynomial {
    fn num_vars(&self) -> usize {
        BinaryPolynomial::num_vars(self)
    }

    fn energy(&self, bits: &[u8]) -> f64 {
        self.evaluate_bits(bits)
    }
}

impl EnergyModel for QuboProblem {
    fn num_vars(&self) -> usize {
        self.num_vars
    }

    fn energy(&self, bits: &[u8]) -> f64 {
        QuboProblem::energy(self, bits)
    }

    fn aux_violations(&self, bits: &[u8]) -> usize {
        self.registry.violations(bits)
    }
}

/// Exhaustive argmin. Ties go to the assignment with the smallest integer
/// value (variable 0 is the least significant bit).
pub fn brute_force<E: EnergyModel + ?Sized>(problem: &E) -> Result<SolveResult> {
    let n = problem.num_vars();
    if n > MAX_BRUTE_FORCE_VARS {
        return Err(Error::TooManyVariables {
            found: n,
            max: MAX_BRUTE_FORCE_VARS,
        });
    }
    const CHUNK_BITS: usize = 14;
    let total = 1u64 << n;
    let chunk = 1u64 << CHUNK_BITS.min(n);
    let chunks = total / chunk;
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut bits = vec![0u8; n];
            let mut best = (f64::INFINITY, u64::MAX);
            for x in c * chunk..(c + 1) * chunk {
                for (i, b) in bits.iter_mut().enumerate() {
                    *b = ((x >> i) & 1) as u8;
                }
                let e = problem.energy(&bits);
                if e < best.0 {
                    best = (e, x);
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(
            (f64::INFINITY, u64::MAX),
            |a, b| if b.0 < a.0 { b } else { a },
        );
    let x = if best.1 == u64::MAX { 0 } else { best.1 };
    let bits: Vec<u8> = (0..n).map(|i| ((x >> i) & 1) as u8).collect();
    let e = problem.energy(&bits);
    Ok(SolveResult {
        aux_violations: problem.aux_violations(&bits),
        best_assignment: bits,
        best_energy: e,
        energies_per_read: vec![e],
    })
}

/// Sparse symmetric view of a QUBO for fast single-flip updates.
struct Adjacency {
    linear: Vec<f64>,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Adjacency {
    fn new(q: &QuboProblem) -> Self {
        let mut linear = vec![0.0; q.num_vars];
        for (v, c) in &q.linear {
            linear[v.index()] = *c;
        }
        let mut degree = vec![0usize; q.num_vars + 1];
        for (a, b) in q.quadratic.keys() {
            degree[a.index() + 1] += 1;
            degree[b.index() + 1] += 1;
        }
        for i in 0..q.num_vars {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut cols = vec![0u32; offsets[q.num_vars]];
        let mut vals = vec![0.0; offsets[q.num_vars]];
        for ((a, b), c) in &q.quadratic {
            for (u, v) in [(a, b), (b, a)] {
                let k = fill[u.index()];
                cols[k] = v.0;
                vals[k] = *c;
                fill[u.index()] += 1;
            }
        }
        Adjacency {
            linear,
            offsets,
            cols,
            vals,
        }
    }

    fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    /// Local fields `h_i = lin_i + sum_j Q_ij x_j`.
    fn fields(&self, x: &[u8]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let (cols, vals) = self.row(i);
                self.linear[i]
                    + cols
                        .iter()
                        .zip(vals)
                        .filter(|(j, _)| x[**j as usize] != 0)
                        .map(|(_, c)| c)
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Inverse temperatures from the single-flip energy bounds `|lin_i| +
/// sum_j |Q_ij|`: `1 / max` and `10 / min` over the nonzero bounds.
pub fn default_betas(q: &QuboProblem) -> (f64, f64) {
    let adj = Adjacency::new(q);
    let bounds: Vec<f64> = (0..q.num_vars)
        .map(|i| adj.linear[i].abs() + adj.row(i).1.iter().map(|c| c.abs()).sum::<f64>())
        .filter(|b| *b > 0.0)
        .collect();
    if bounds.is_empty() {
        return (1.0, 10.0);
    }
    let max = bounds.iter().copied().fold(0.0, f64::max);
    let min = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    (1.0 / max, 10.0 / min)
}

fn beta_ladder(start: f64, end: f64, sweeps: usize) -> Vec<f64> {
    if sweeps <= 1 {
        return vec![end; sweeps];
    }
    let ratio = (end / start).ln();
    (0..sweeps)
        .map(|k| start * (ratio * k as f64 / (sweeps - 1) as f64).exp())
        .collect()
}

struct ReadOutcome {
    energy: f64,
    state: Vec<u8>,
}

/// Per-problem data shared by every read.
struct Plan<'a> {
    q: &'a QuboProblem,
    adj: Adjacency,
    /// Variables proposed for flipping.
    movable: Vec<usize>,
    /// For each variable, the registry entries that read it.
    dependents: Vec<Vec<usize>>,
    follow: bool,
}

impl<'a> Plan<'a> {
    fn new(q: &'a QuboProblem, mode: AuxMode) -> Self {
        let adj = Adjacency::new(q);
        let follow = mode == AuxMode::Follow && !q.registry.is_empty();
        let mut dependents = vec![Vec::new(); q.num_vars];
        let mut is_aux = vec![false; q.num_vars];
        if follow {
            for (k, e) in q.registry.entries.iter().enumerate() {
                dependents[e.left.index()].push(k);
                dependents[e.right.index()].push(k);
                is_aux[e.aux.index()] = true;
            }
        }
        let movable = (0..q.num_vars).filter(|i| !is_aux[*i]).collect();
        Plan {
            q,
            adj,
            movable,
            dependents,
            follow,
        }
    }
}

struct Walker<'p, 'a> {
    plan: &'p Plan<'a>,
    x: Vec<u8>,
    h: Vec<f64>,
    flipped: Vec<usize>,
    stack: Vec<usize>,
}

impl Walker<'_, '_> {
    fn flip(&mut self, i: usize) -> f64 {
        let delta = if self.x[i] == 0 {
            self.h[i]
        } else {
            -self.h[i]
        };
        self.x[i] ^= 1;
        let sign = if self.x[i] == 1 { 1.0 } else { -1.0 };
        let (cols, vals) = self.plan.adj.row(i);
        for (&j, &c) in cols.iter().zip(vals) {
            self.h[j as usize] += sign * c;
        }
        delta
    }

    /// Flips `i` and, in follow mode, every aux bit whose product changed.
    /// Returns the total energy change; the flipped bits are in `flipped`.
    fn propose(&mut self, i: usize) -> f64 {
        self.flipped.clear();
        let mut delta = self.flip(i);
        self.flipped.push(i);
        if !self.plan.follow {
            return delta;
        }
        let entries = &self.plan.q.registry.entries;
        self.stack.clear();
        self.stack.push(i);
        while let Some(v) = self.stack.pop() {
            for &k in &self.plan.dependents[v] {
                let e = &entries[k];
                let want = self.x[e.left.index()] & self.x[e.right.index()];
                let a = e.aux.index();
                if self.x[a] != want {
                    delta += self.flip(a);
                    self.flipped.push(a);
                    self.stack.push(a);
                }
            }
        }
        delta
    }

    fn undo(&mut self) {
        while let Some(v) = self.flipped.pop() {
            self.flip(v);
        }
    }
}

fn anneal_read(plan: &Plan, betas: &[f64], seed: u64, read: usize) -> ReadOutcome {
    let q = plan.q;
    let n = q.num_vars;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(read as u64));
    let mut x: Vec<u8> = vec![0; n];
    if read > 0 {
        for &i in &plan.movable {
            x[i] = rng.random_range(0..2);
        }
        if plan.follow {
            q.registry.fill_consistent(&mut x);
        }
    }
    let h = plan.adj.fields(&x);
    let mut energy = QuboProblem::energy(q, &x);
    let mut best = ReadOutcome {
        energy,
        state: x.clone(),
    };
    let mut w = Walker {
        plan,
        x,
        h,
        flipped: Vec::new(),
        stack: Vec::new(),
    };

    for &beta in betas {
        for &i in &plan.movable {
            let delta = w.propose(i);
            let accept = delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp();
            if accept {
                energy += delta;
            } else {
                w.undo();
            }
        }
        #[cfg(debug_assertions)]
        if read == 0 {
            let exact = QuboProblem::energy(q, &w.x);
            let scale = 1.0 + exact.abs() + q.max_abs_coefficient();
            debug_assert!(
                (exact - energy).abs() <= 1e-9 * scale,
                "incremental energy {energy} drifted from {exact}"
            );
        }
        if energy < best.energy {
            best.energy = energy;
            best.state.copy_from_slice(&w.x);
        }
    }
    best.energy = QuboProblem::energy(q, &best.state);
    best
}

/// Best of `reads` independent Metropolis runs over a geometric beta ladder.
/// Ties between reads go to the lower read index.
pub fn anneal(q: &QuboProblem, schedule: &AnnealSchedule) -> SolveResult {
    let (bs, be) = default_betas(q);
    let start = schedule.beta_start.unwrap_or(bs);
    let end = schedule.beta_end.unwrap_or(be).max(start);
    let betas = beta_ladder(start, end, schedule.sweeps);
    let plan = Plan::new(q, schedule.aux_mode);
    let reads = schedule.reads.max(1);
    let outcomes: Vec<ReadOutcome> = (0..reads)
        .into_par_iter()
        .map(|r| anneal_read(&plan, &betas, schedule.seed, r))
        .collect();
    let energies: Vec<f64> = outcomes.iter().map(|o| o.energy).collect();
    let (best_idx, _) = energies
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |acc, (i, e)| {
            if *e < acc.1 {
                (i, *e)
            } else {
                acc
            }
        });
    let state = outcomes.into_iter().nth(best_idx).unwrap().state;
    SolveResult {
        best_energy: QuboProblem::energy(q, &state),
        aux_violations: q.registry.violations(&state),
        best_assignment: state,
        energies_per_read: energies,
    }
}

/// Pluggable QUBO solver.
pub trait Solver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &QuboProblem, params: &AnnealSchedule) -> Result<SolveResult>;
}

pub struct SimulatedAnnealer;

impl Solver for SimulatedAnnealer {
    fn name(&self) -> &str {
        "sa"
    }

    fn solve(&self, problem: &QuboProblem, params: &AnnealSchedule) -> Result<SolveResult> {
        Ok(anneal(problem, params))
    }
}

pub struct ExactSolver;

impl Solver for ExactSolver {
    fn name(&self) -> &str {
        "exact"
    }

    fn solve(&self, problem: &QuboProblem, _params: &AnnealSchedule) -> Result<SolveResult> {
        brute_force(problem)
    }
}

/// Solvers by name; `sa` and `exact` are registered by default.
#[derive(Clone)]
pub struct SolverRegistry {
    solvers: BTreeMap<String, Arc<dyn Solver>>,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut r = SolverRegistry {
            solvers: BTreeMap::new(),
        };
        r.register(Arc::new(SimulatedAnnealer));
        r.register(Arc::new(ExactSolver));
        r
    }
}

impl SolverRegistry {
    pub fn register(&mut self, solver: Arc<dyn Solver>) {
        self.solvers.insert(solver.name().to_string(), solver);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Solver>> {
        self.solvers
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.solvers.keys().map(String::as_str)
    }
}

/// Control points from the solution's control bits; aux bits are ignored.
pub fn decode_solution(
    result: &SolveResult,
    layout: &VariableLayout,
    spec: &KanSpec,
    encoding: &EncodingSpec,
    bounds: &Normalizer,
) -> Result<DecodedModel> {
    if result.best_assignment.len() < layout.total_bits() {
        let missing = (result.best_assignment.len()..layout.total_bits())
            .map(|i| crate::VarId(i as u32))
            .collect();
        return Err(Error::MissingVariables(missing));
    }
    DecodedModel::new(
        spec.clone(),
        *encoding,
        layout.decode_points(&result.best_assignment),
        bounds.clone(),
    )
}
