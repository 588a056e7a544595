//! Degree reduction of higher-order binary objectives to QUBO form.
//!
//! A product `a*b` inside a cubic-or-higher monomial is replaced by a fresh
//! auxiliary bit `z`, and the penalty `w (ab - 2za - 2zb + 3z)` is added so
//! that any assignment with `z != ab` pays at least `w`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binpoly::{BinaryPolynomial, Monomial, VarId};
use crate::error::{Error, Result};
use crate::network::VariableLayout;

pub const DEFAULT_W_FACTOR: f64 = 20.0;

/// `aux = left * right`, with `left < right`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxEntry {
    pub aux: VarId,
    pub left: VarId,
    pub right: VarId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxRegistry {
    pub entries: Vec<AuxEntry>,
}

impl AuxRegistry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries whose aux bit differs from the product it stands for.
    pub fn violations(&self, bits: &[u8]) -> usize {
        self.entries
            .iter()
            .filter(|e| {
                let want = bits[e.left.index()] & bits[e.right.index()];
                bits[e.aux.index()] != want
            })
            .count()
    }

    /// Sets every aux bit to its product, in registration order (later aux
    /// bits may depend on earlier ones).
    pub fn fill_consistent(&self, bits: &mut [u8]) {
        for e in &self.entries {
            bits[e.aux.index()] = bits[e.left.index()] & bits[e.right.index()];
        }
    }
}

/// `w * (p1 p2 - 2 aux p1 - 2 aux p2 + 3 aux)`.
pub fn penalty(aux: VarId, p1: VarId, p2: VarId, w: f64) -> BinaryPolynomial {
    BinaryPolynomial::from_terms([
        (vec![p1, p2], w),
        (vec![aux, p1], -2.0 * w),
        (vec![aux, p2], -2.0 * w),
        (vec![aux], 3.0 * w),
    ])
}

/// Quadratic binary objective `offset + sum lin_i x_i + sum_{i<j} Q_ij x_i x_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuboProblem {
    pub num_vars: usize,
    pub linear: BTreeMap<VarId, f64>,
    pub quadratic: BTreeMap<(VarId, VarId), f64>,
    pub offset: f64,
    pub registry: AuxRegistry,
    pub penalty_weight: f64,
}

impl QuboProblem {
    /// Splits a polynomial of degree at most two into QUBO parts.
    pub fn from_polynomial(p: &BinaryPolynomial, num_vars: usize) -> Result<Self> {
        let mut linear = BTreeMap::new();
        let mut quadratic = BTreeMap::new();
        let mut offset = 0.0;
        for (m, c) in p.terms() {
            match m.vars() {
                [] => offset += c,
                [a] => {
                    linear.insert(*a, c);
                }
                [a, b] => {
                    quadratic.insert((*a, *b), c);
                }
                _ => {
                    return Err(Error::SchemaMismatch(format!(
                        "monomial {m} has degree {} > 2",
                        m.degree()
                    )))
                }
            }
        }
        let num_vars = num_vars.max(p.num_vars());
        Ok(QuboProblem {
            num_vars,
            linear,
            quadratic,
            offset,
            registry: AuxRegistry::default(),
            penalty_weight: 0.0,
        })
    }

    pub fn to_polynomial(&self) -> BinaryPolynomial {
        let mut p = BinaryPolynomial::constant(self.offset);
        for (v, c) in &self.linear {
            p.add_term(Monomial::var(*v), *c);
        }
        for ((a, b), c) in &self.quadratic {
            p.add_term(Monomial::new([*a, *b]), *c);
        }
        p
    }

    /// Exact energy, summed offset, then linear, then quadratic in key order.
    pub fn energy(&self, bits: &[u8]) -> f64 {
        let mut e = self.offset;
        for (v, c) in &self.linear {
            if bits[v.index()] != 0 {
                e += c;
            }
        }
        for ((a, b), c) in &self.quadratic {
            if bits[a.index()] != 0 && bits[b.index()] != 0 {
                e += c;
            }
        }
        e
    }

    pub fn num_terms(&self) -> usize {
        self.linear.len() + self.quadratic.len()
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.linear
            .values()
            .chain(self.quadratic.values())
            .fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Writes `i j value` lines (`i == j` for linear terms) and a JSON sidecar
    /// holding the offset, penalty weight and auxiliary registry.
    pub fn export(&self, coo_path: &Path, sidecar_path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(coo_path)?);
        for (v, c) in &self.linear {
            writeln!(f, "{} {} {:?}", v.0, v.0, c)?;
        }
        for ((a, b), c) in &self.quadratic {
            writeln!(f, "{} {} {:?}", a.0, b.0, c)?;
        }
        f.flush()?;
        let side = QuboSidecar {
            version: 1,
            num_vars: self.num_vars,
            offset: self.offset,
            penalty_weight: self.penalty_weight,
            registry: self.registry.clone(),
        };
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn import(coo_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let side: QuboSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
        let mut linear = BTreeMap::new();
        let mut quadratic = BTreeMap::new();
        for (n, line) in std::fs::read_to_string(coo_path)?.lines().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("line {}: {line:?}", n + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let i: u32 = parts[0].parse().map_err(|_| bad())?;
            let j: u32 = parts[1].parse().map_err(|_| bad())?;
            let c: f64 = parts[2].parse().map_err(|_| bad())?;
            if i == j {
                linear.insert(VarId(i), c);
            } else {
                quadratic.insert((VarId(i.min(j)), VarId(i.max(j))), c);
            }
        }
        Ok(QuboProblem {
            num_vars: side.num_vars,
            linear,
            quadratic,
            offset: side.offset,
            registry: side.registry,
            penalty_weight: side.penalty_weight,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct QuboSidecar {
    version: u32,
    num_vars: usize,
    offset: f64,
    penalty_weight: f64,
    registry: AuxRegistry,
}

/// Reduces with auxiliary ids starting after the largest variable in `h`.
pub fn reduce(h: &BinaryPolynomial, w_factor: f64) -> QuboProblem {
    reduce_from(h, w_factor, h.num_vars())
}

/// Reduces with auxiliary ids starting at `first_aux`, which must exceed
/// every id in use (pass the layout's bit count so aux never collide with
/// control bits absent from `h`).
pub fn reduce_from(h: &BinaryPolynomial, w_factor: f64, first_aux: usize) -> QuboProblem {
    assert!(w_factor > 0.0, "penalty factor must be positive");
    let first_aux = first_aux.max(h.num_vars());
    let (reduced, registry) = substitute_pairs(h, first_aux as u32);
    let penalty_weight = w_factor * max_abs_nonconstant(&reduced);
    let mut full = reduced;
    for e in &registry.entries {
        full.add_assign(&penalty(e.aux, e.left, e.right, penalty_weight));
    }
    let num_vars = first_aux + registry.len();
    let mut q =
        QuboProblem::from_polynomial(&full, num_vars).expect("reduction leaves degree <= 2");
    q.registry = registry;
    q.penalty_weight = penalty_weight;
    q
}

fn max_abs_nonconstant(p: &BinaryPolynomial) -> f64 {
    p.terms()
        .filter(|(m, _)| !m.is_constant())
        .fold(0.0, |a, (_, c)| a.max(c.abs()))
}

/// Greedy pair substitution: each round replaces the pair that co-occurs in
/// the most monomials of degree >= 3 (ties to the smallest pair). Aux ids are
/// fresh, so a rewritten monomial never collides with an existing one and the
/// pair index can be updated in place.
fn substitute_pairs(h: &BinaryPolynomial, first_aux: u32) -> (BinaryPolynomial, AuxRegistry) {
    type Pair = (VarId, VarId);
    let mut terms: Vec<(Monomial, f64)> = h
        .terms()
        .filter(|(_, c)| *c != 0.0)
        .map(|(m, c)| (m.clone(), c))
        .collect();
    let mut registry = AuxRegistry::default();
    let mut next = first_aux;

    let mut index: HashMap<Pair, BTreeSet<usize>> = HashMap::new();
    let mut ranked: BTreeSet<(usize, Reverse<Pair>)> = BTreeSet::new();
    let pairs = |m: &Monomial| -> Vec<Pair> {
        let v = m.vars();
        let mut out = Vec::new();
        if v.len() >= 3 {
            for i in 0..v.len() {
                for j in i + 1..v.len() {
                    out.push((v[i], v[j]));
                }
            }
        }
        out
    };
    let update = |index: &mut HashMap<Pair, BTreeSet<usize>>,
                  ranked: &mut BTreeSet<(usize, Reverse<Pair>)>,
                  p: Pair,
                  id: usize,
                  add: bool| {
        let set = index.entry(p).or_default();
        ranked.remove(&(set.len(), Reverse(p)));
        if add {
            set.insert(id);
        } else {
            set.remove(&id);
        }
        if set.is_empty() {
            index.remove(&p);
        } else {
            ranked.insert((set.len(), Reverse(p)));
        }
    };
    for (id, (m, _)) in terms.iter().enumerate() {
        for p in pairs(m) {
            update(&mut index, &mut ranked, p, id, true);
        }
    }

    while let Some(&(_, Reverse((a, b)))) = ranked.last() {
        let aux = VarId(next);
        next += 1;
        registry.entries.push(AuxEntry {
            aux,
            left: a,
            right: b,
        });
        let hits: Vec<usize> = index[&(a, b)].iter().copied().collect();
        for id in hits {
            let old = terms[id].0.clone();
            for p in pairs(&old) {
                update(&mut index, &mut ranked, p, id, false);
            }
            let rest = old.vars().iter().copied().filter(|v| *v != a && *v != b);
            let m = Monomial::new(rest.chain(std::iter::once(aux)));
            for p in pairs(&m) {
                update(&mut index, &mut ranked, p, id, true);
            }
            terms[id].0 = m;
        }
    }

    let mut out = BinaryPolynomial::zero();
    for (m, c) in terms {
        out.add_term(m, c);
    }
    (out, registry)
}

/// Logical qubits: control-point bits plus auxiliary bits.
pub fn qubit_count(layout: &VariableLayout, registry: &AuxRegistry) -> usize {
    layout.total_bits() + registry.len()
}
