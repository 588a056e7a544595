//! Squared-error objective over the control-point bits.
//!
//! For a fixed architecture the network output is a polynomial in the
//! input-layer Bernstein weights `phi_(e,i)(x)` whose coefficients are
//! polynomials in the bits. Squaring and summing over samples therefore only
//! ever needs the dataset through a fixed set of sums
//! `sum_s prod phi(x_s)^p * prod y_s^r` (the moment table). The objective is
//! assembled as `sum_key moment[key] * template[key]`, which costs the same
//! for ten samples or ten million.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binpoly::BinaryPolynomial;
pub use crate::data::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::network::{bernstein_weights, binomial, symbolic_output, KanSpec, VariableLayout};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    /// Weight of the validation term.
    pub lambda_val: f64,
    /// Divide each partition's sum by its sample count.
    pub normalize_by_n: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            lambda_val: 1.0,
            normalize_by_n: true,
        }
    }
}

/// Input-layer Bernstein factor: weight `index` of input-layer edge `edge`.
type Feature = (u16, u8);

/// Canonical identifier of one collapsed sum.
///
/// `factors` holds `(edge, bernstein index, power)` sorted by `(edge, index)`;
/// `targets` holds `(output, power)` sorted by output.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MomentKey {
    #[serde(rename = "f")]
    pub factors: Vec<(u16, u8, u8)>,
    #[serde(rename = "y")]
    pub targets: Vec<(u8, u8)>,
}

impl MomentKey {
    fn from_multisets(features: &[Feature], targets: &[u8]) -> Self {
        let mut factors: Vec<(u16, u8, u8)> = Vec::new();
        for &(e, i) in features {
            match factors.last_mut() {
                Some((le, li, p)) if *le == e && *li == i => *p += 1,
                _ => factors.push((e, i, 1)),
            }
        }
        let mut ts: Vec<(u8, u8)> = Vec::new();
        for &o in targets {
            match ts.last_mut() {
                Some((lo, p)) if *lo == o => *p += 1,
                _ => ts.push((o, 1)),
            }
        }
        MomentKey {
            factors,
            targets: ts,
        }
    }

    /// Value of the product for one sample, given its input-layer weights.
    fn eval(&self, weights: &[Vec<f64>], target: &[f64]) -> f64 {
        let mut v = 1.0;
        for &(e, i, p) in &self.factors {
            v *= weights[e as usize][i as usize].powi(p as i32);
        }
        for &(o, p) in &self.targets {
            v *= target[o as usize].powi(p as i32);
        }
        v
    }
}

impl std::fmt::Display for MomentKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sum(")?;
        let mut first = true;
        for (e, i, p) in &self.factors {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            write!(f, "b{e}_{i}")?;
            if *p > 1 {
                write!(f, "^{p}")?;
            }
        }
        for (o, p) in &self.targets {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            write!(f, "y{o}")?;
            if *p > 1 {
                write!(f, "^{p}")?;
            }
        }
        if first {
            write!(f, "1")?;
        }
        write!(f, ")")
    }
}

/// Polynomial in the bits whose coefficients are polynomials in the
/// input-layer features; keys are sorted feature multisets.
#[derive(Clone, Debug, Default)]
struct FeaturePoly {
    terms: BTreeMap<Vec<Feature>, BinaryPolynomial>,
}

impl FeaturePoly {
    fn constant(p: BinaryPolynomial) -> Self {
        let mut f = FeaturePoly::default();
        f.add_term(Vec::new(), &p, 1.0);
        f
    }

    fn add_term(&mut self, key: Vec<Feature>, p: &BinaryPolynomial, scale: f64) {
        let slot = self.terms.entry(key).or_default();
        slot.add_scaled(p, scale);
        if slot.is_zero() {
            // Keep the map free of empty coefficients.
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    fn add_scaled(&mut self, other: &FeaturePoly, scale: f64) {
        for (k, p) in &other.terms {
            self.add_term(k.clone(), p, scale);
        }
    }

    fn multiply(&self, other: &FeaturePoly) -> FeaturePoly {
        let mut scratch: BTreeMap<Vec<Feature>, BinaryPolynomial> = BTreeMap::new();
        for (ka, pa) in &self.terms {
            for (kb, pb) in &other.terms {
                let mut k = ka.clone();
                k.extend_from_slice(kb);
                k.sort_unstable();
                scratch.entry(k).or_default().add_assign(&pa.multiply(pb));
            }
        }
        scratch.retain(|_, p| !p.is_zero());
        FeaturePoly { terms: scratch }
    }

    fn powers(&self, n: u32) -> Vec<FeaturePoly> {
        let mut out = vec![FeaturePoly::constant(BinaryPolynomial::constant(1.0))];
        for k in 1..=n as usize {
            let next = out[k - 1].multiply(self);
            out.push(next);
        }
        out
    }
}

/// Network outputs with the input-layer Bernstein weights left symbolic.
fn feature_outputs(spec: &KanSpec, layout: &VariableLayout) -> Vec<FeaturePoly> {
    let edges = layout.edges();
    let mut nodes: Vec<FeaturePoly> = Vec::new();
    let mut e = 0;
    for layer in 0..spec.depth() {
        let mut next = vec![FeaturePoly::default(); spec.widths()[layer + 1]];
        if layer == 0 {
            while e < edges.len() && edges[e].key.layer == 0 {
                let edge = edges[e];
                for i in 0..=edge.degree as usize {
                    next[edge.key.output].add_term(
                        vec![(e as u16, i as u8)],
                        layout.expansion(e, i),
                        1.0,
                    );
                }
                e += 1;
            }
        } else {
            let mut cache: BTreeMap<(usize, u32), (Vec<FeaturePoly>, Vec<FeaturePoly>)> =
                BTreeMap::new();
            while e < edges.len() && edges[e].key.layer == layer {
                let edge = edges[e];
                let n = edge.degree;
                let (pu, pv) = cache.entry((edge.key.input, n)).or_insert_with(|| {
                    let u = &nodes[edge.key.input];
                    let mut v = FeaturePoly::constant(BinaryPolynomial::constant(1.0));
                    v.add_scaled(u, -1.0);
                    (u.powers(n), v.powers(n))
                });
                for i in 0..=n {
                    let basis = pv[(n - i) as usize].multiply(&pu[i as usize]);
                    let point = FeaturePoly::constant(layout.expansion(e, i as usize).clone());
                    next[edge.key.output]
                        .add_scaled(&basis.multiply(&point), binomial(n, i) as f64);
                }
                e += 1;
            }
        }
        nodes = next;
    }
    nodes
}

/// Per-architecture map from moment key to the bit polynomial it multiplies.
#[derive(Clone, Debug)]
pub struct ObjectiveTemplate {
    terms: BTreeMap<MomentKey, BinaryPolynomial>,
    input_edges: Vec<(usize, u32)>,
    outputs: usize,
    features: usize,
}

impl ObjectiveTemplate {
    pub fn new(spec: &KanSpec, layout: &VariableLayout) -> Self {
        let outs = feature_outputs(spec, layout);
        let mut terms: BTreeMap<MomentKey, BinaryPolynomial> = BTreeMap::new();
        let mut push = |key: MomentKey, p: &BinaryPolynomial, scale: f64| {
            let slot = terms.entry(key).or_default();
            slot.add_scaled(p, scale);
        };
        for (o, f) in outs.iter().enumerate() {
            let o = o as u8;
            // (y - f)^2 = y^2 - 2 y f + f^2
            push(
                MomentKey::from_multisets(&[], &[o, o]),
                &BinaryPolynomial::constant(1.0),
                1.0,
            );
            for (k, p) in &f.terms {
                push(MomentKey::from_multisets(k, &[o]), p, -2.0);
            }
            for (k, p) in &f.multiply(f).terms {
                push(MomentKey::from_multisets(k, &[]), p, 1.0);
            }
        }
        terms.retain(|_, p| !p.is_zero());
        let input_edges = layout
            .edges()
            .iter()
            .filter(|e| e.key.layer == 0)
            .map(|e| (e.key.input, e.degree))
            .collect();
        ObjectiveTemplate {
            terms,
            input_edges,
            outputs: spec.outputs(),
            features: spec.inputs(),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &MomentKey> {
        self.terms.keys()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn polynomial(&self, key: &MomentKey) -> Option<&BinaryPolynomial> {
        self.terms.get(key)
    }

    /// Largest bit-degree among the template polynomials.
    pub fn max_degree(&self) -> usize {
        self.terms
            .values()
            .map(BinaryPolynomial::max_degree)
            .max()
            .unwrap_or(0)
    }

    fn sample_weights(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.input_edges
            .iter()
            .map(|&(j, n)| bernstein_weights(n, x[j]))
            .collect()
    }

    /// One pass over the samples. Chunks are summed in ascending sample order
    /// and merged in chunk order, so the result does not depend on the
    /// number of worker threads.
    pub fn collapse(&self, data: &Dataset) -> Result<MomentTable> {
        data.validate_shape(self.features, self.outputs)?;
        const CHUNK: usize = 2048;
        let keys: Vec<&MomentKey> = self.terms.keys().collect();
        let idx: Vec<usize> = (0..data.len()).collect();
        let partials: Vec<Vec<f64>> = idx
            .par_chunks(CHUNK)
            .map(|chunk| -> Result<Vec<f64>> {
                let mut acc = vec![0.0; keys.len()];
                for &s in chunk {
                    let w = self.sample_weights(&data.inputs[s])?;
                    for (a, k) in acc.iter_mut().zip(&keys) {
                        *a += k.eval(&w, &data.targets[s]);
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut sums = vec![0.0; keys.len()];
        for p in partials {
            for (s, v) in sums.iter_mut().zip(p) {
                *s += v;
            }
        }
        Ok(MomentTable {
            sums: keys.into_iter().cloned().zip(sums).collect(),
        })
    }

    /// `sum_key weight(key) * template[key]`, accumulated in key order.
    pub fn combine<'a>(
        &self,
        parts: impl IntoIterator<Item = (&'a MomentTable, f64)>,
    ) -> Result<BinaryPolynomial> {
        let parts: Vec<(&MomentTable, f64)> = parts.into_iter().collect();
        let mut out = BinaryPolynomial::zero();
        for (key, poly) in &self.terms {
            let mut w = 0.0;
            for (table, scale) in &parts {
                let m = table.sums.get(key).ok_or_else(|| {
                    Error::SchemaMismatch(format!("moment table lacks key {key}"))
                })?;
                w += scale * m;
            }
            out.add_scaled(poly, w);
        }
        Ok(out)
    }
}

/// Collapsed sums keyed canonically; unnormalized.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    sums: BTreeMap<MomentKey, f64>,
}

impl MomentTable {
    /// Table with every key present and zero.
    pub fn zeros(template: &ObjectiveTemplate) -> Self {
        MomentTable {
            sums: template.keys().map(|k| (k.clone(), 0.0)).collect(),
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (MomentKey, f64)>) -> Self {
        MomentTable {
            sums: entries.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }

    pub fn get(&self, key: &MomentKey) -> Option<f64> {
        self.sums.get(key).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&MomentKey, f64)> {
        self.sums.iter().map(|(k, v)| (k, *v))
    }

    /// `self += scale * other`; both tables must share the same keys.
    pub fn accumulate(&mut self, other: &MomentTable, scale: f64) -> Result<()> {
        if self.sums.len() != other.sums.len()
            || self.sums.keys().zip(other.sums.keys()).any(|(a, b)| a != b)
        {
            return Err(Error::SchemaMismatch(
                "moment tables have different keys".into(),
            ));
        }
        for (a, b) in self.sums.values_mut().zip(other.sums.values()) {
            *a += scale * b;
        }
        Ok(())
    }
}

/// Partition weights `(1/n_t, lambda/n_v)` or `(1, lambda)`.
pub fn partition_scales(cfg: &ObjectiveConfig, n_train: u64, n_val: u64) -> (f64, f64) {
    if cfg.normalize_by_n {
        let v = if n_val > 0 {
            cfg.lambda_val / n_val as f64
        } else {
            0.0
        };
        (1.0 / n_train as f64, v)
    } else {
        (1.0, if n_val > 0 { cfg.lambda_val } else { 0.0 })
    }
}

pub fn collapse_moments(
    spec: &KanSpec,
    layout: &VariableLayout,
    data: &Dataset,
) -> Result<MomentTable> {
    ObjectiveTemplate::new(spec, layout).collapse(data)
}

/// `sum_o (y_o - f_o(x))^2` for one sample, expanded symbolically.
pub fn sample_objective(
    spec: &KanSpec,
    layout: &VariableLayout,
    sample: &[f64],
    target: &[f64],
) -> Result<BinaryPolynomial> {
    let outs = symbolic_output(spec, layout, sample)?;
    if target.len() != outs.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} targets for {} outputs",
            target.len(),
            outs.len()
        )));
    }
    let mut acc = BinaryPolynomial::zero();
    for (f, y) in outs.iter().zip(target) {
        let r = BinaryPolynomial::constant(*y).sub(f);
        acc.add_assign(&r.power(2));
    }
    Ok(acc)
}

/// Training objective with optional validation term, via collapsed moments.
pub fn assemble(
    spec: &KanSpec,
    layout: &VariableLayout,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &ObjectiveConfig,
) -> Result<BinaryPolynomial> {
    let template = ObjectiveTemplate::new(spec, layout);
    assemble_with(&template, train, val, cfg)
}

pub fn assemble_with(
    template: &ObjectiveTemplate,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &ObjectiveConfig,
) -> Result<BinaryPolynomial> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    if matches!(val, Some(v) if v.is_empty()) {
        return Err(Error::EmptyDataset("validation set"));
    }
    let t = template.collapse(train)?;
    let v = val.map(|d| template.collapse(d)).transpose()?;
    let (st, sv) = partition_scales(cfg, train.len() as u64, val.map_or(0, |d| d.len() as u64));
    match &v {
        Some(v) => template.combine([(&t, st), (v, sv)]),
        None => template.combine([(&t, st)]),
    }
}

/// Sample-by-sample sum of [`sample_objective`]; the reference the
/// collapsed path is checked against.
pub fn assemble_naive(
    spec: &KanSpec,
    layout: &VariableLayout,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &ObjectiveConfig,
) -> Result<BinaryPolynomial> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    let sum = |d: &Dataset| -> Result<BinaryPolynomial> {
        let mut acc = BinaryPolynomial::zero();
        for (x, y) in d.inputs.iter().zip(&d.targets) {
            acc.add_assign(&sample_objective(spec, layout, x, y)?);
        }
        Ok(acc)
    };
    let (st, sv) = partition_scales(cfg, train.len() as u64, val.map_or(0, |d| d.len() as u64));
    let mut out = sum(train)?.scale(st);
    if let Some(v) = val {
        if v.is_empty() {
            return Err(Error::EmptyDataset("validation set"));
        }
        out.add_scaled(&sum(v)?, sv);
    }
    Ok(out)
}

/// Mean squared error computed directly from a model, for cross-checks.
pub fn direct_mse(model: &crate::network::DecodedModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("evaluation set"));
    }
    let mut acc = 0.0;
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        let out = crate::network::numeric_forward(model, x)?;
        acc += out.iter().zip(y).map(|(f, t)| (t - f).powi(2)).sum::<f64>();
    }
    Ok(acc / data.len() as f64)
}

/// Largest per-coefficient relative difference between two polynomials.
/// Denominators are floored at `1e-12` times the largest coefficient so that
/// entries which cancel to rounding noise compare as equal.
pub fn max_relative_difference(a: &BinaryPolynomial, b: &BinaryPolynomial) -> f64 {
    let floor = 1e-12
        * a.max_abs_coefficient()
            .max(b.max_abs_coefficient())
            .max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (m, x) in a.terms() {
        let y = b.coefficient(m);
        worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(floor));
    }
    for (m, y) in b.terms() {
        let x = a.coefficient(m);
        worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(floor));
    }
    worst
}
