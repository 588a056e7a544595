//! Bezier Kolmogorov-Arnold networks.
//!
//! Every edge between adjacent layers carries a univariate Bezier curve
//! `B(t) = sum_i C(n,i) (1-t)^(n-i) t^i P_i`; a node's value is the plain sum
//! of its incoming edge curves. The same network can be run numerically on
//! decoded control points or symbolically, producing a [`BinaryPolynomial`]
//! in the control-point bits.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::binpoly::{BinaryPolynomial, VarId};
use crate::data::Normalizer;
use crate::encoding::{self, ControlPointCode, EncodingSpec};
use crate::error::{Error, Result};

pub const MAX_DEGREE: u32 = 20;

/// Exact binomial coefficient for `n <= MAX_DEGREE`.
pub fn binomial(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u64;
    let n = n as u64;
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Bernstein basis values `C(n,i) (1-t)^(n-i) t^i`, `i = 0..=n`.
pub fn bernstein_weights(n: u32, t: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain {
            value: t,
            domain: "[0, 1]",
        });
    }
    if n == 0 || n > MAX_DEGREE {
        return Err(Error::InvalidSpec(format!(
            "Bezier degree {n} outside 1..={MAX_DEGREE}"
        )));
    }
    Ok(bernstein_unchecked(n, t))
}

/// Bernstein basis evaluated as a formal polynomial, for any real `t`.
pub fn bernstein_unchecked(n: u32, t: f64) -> Vec<f64> {
    let s = 1.0 - t;
    (0..=n)
        .map(|i| binomial(n, i) as f64 * s.powi((n - i) as i32) * t.powi(i as i32))
        .collect()
}

/// One edge, identified by `layer` (0 = input layer) and node indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey {
    pub layer: usize,
    pub input: usize,
    pub output: usize,
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.layer, self.input, self.output)
    }
}

impl std::str::FromStr for EdgeKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let parse = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidSpec(format!("bad edge key {s:?}")))
        };
        match parts.as_slice() {
            [l, i, o] => Ok(EdgeKey {
                layer: parse(l)?,
                input: parse(i)?,
                output: parse(o)?,
            }),
            _ => Err(Error::InvalidSpec(format!(
                "edge key {s:?} is not layer:in:out"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub key: EdgeKey,
    pub degree: u32,
}

/// Layer widths plus one Bezier degree per edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KanSpec {
    widths: Vec<usize>,
    degrees: BTreeMap<EdgeKey, u32>,
}

#[derive(Serialize, Deserialize)]
struct KanSpecJson {
    widths: Vec<usize>,
    degrees: BTreeMap<String, u32>,
}

impl Serialize for KanSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        KanSpecJson {
            widths: self.widths.clone(),
            degrees: self
                .degrees
                .iter()
                .map(|(k, d)| (k.to_string(), *d))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for KanSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = KanSpecJson::deserialize(d)?;
        let degrees = j
            .degrees
            .iter()
            .map(|(k, v)| Ok((k.parse::<EdgeKey>()?, *v)))
            .collect::<Result<BTreeMap<_, _>>>()
            .map_err(serde::de::Error::custom)?;
        KanSpec::new(j.widths, degrees).map_err(serde::de::Error::custom)
    }
}

impl KanSpec {
    pub fn new(widths: Vec<usize>, degrees: BTreeMap<EdgeKey, u32>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidSpec(
                "need at least an input and an output layer".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidSpec("layer widths must be positive".into()));
        }
        let spec = KanSpec { widths, degrees };
        let expected: Vec<EdgeKey> = spec.edge_keys().collect();
        if expected.len() != spec.degrees.len()
            || expected.iter().any(|k| !spec.degrees.contains_key(k))
        {
            return Err(Error::InvalidSpec(format!(
                "expected exactly one degree per edge ({} edges, {} entries)",
                expected.len(),
                spec.degrees.len()
            )));
        }
        for (k, d) in &spec.degrees {
            if *d == 0 || *d > MAX_DEGREE {
                return Err(Error::InvalidSpec(format!(
                    "edge {k}: degree {d} outside 1..={MAX_DEGREE}"
                )));
            }
        }
        Ok(spec)
    }

    /// Every edge gets the same degree.
    pub fn uniform(widths: Vec<usize>, degree: u32) -> Result<Self> {
        let probe = KanSpec {
            widths: widths.clone(),
            degrees: BTreeMap::new(),
        };
        let degrees = probe.edge_keys().map(|k| (k, degree)).collect();
        KanSpec::new(widths, degrees)
    }

    /// Degrees given in layout edge order (see [`KanSpec::edges`]).
    pub fn with_degrees(widths: Vec<usize>, degrees: &[u32]) -> Result<Self> {
        let probe = KanSpec {
            widths: widths.clone(),
            degrees: BTreeMap::new(),
        };
        let keys: Vec<EdgeKey> = probe.edge_keys().collect();
        if keys.len() != degrees.len() {
            return Err(Error::InvalidSpec(format!(
                "{} degrees given for {} edges",
                degrees.len(),
                keys.len()
            )));
        }
        KanSpec::new(
            widths,
            keys.into_iter().zip(degrees.iter().copied()).collect(),
        )
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn outputs(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    /// Edge keys in layout order: layer, then output node, then input node.
    fn edge_keys(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        (0..self.widths.len() - 1).flat_map(move |layer| {
            (0..self.widths[layer + 1]).flat_map(move |output| {
                (0..self.widths[layer]).map(move |input| EdgeKey {
                    layer,
                    input,
                    output,
                })
            })
        })
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.edge_keys()
            .map(|key| Edge {
                key,
                degree: self.degrees[&key],
            })
            .collect()
    }

    pub fn degree(&self, key: &EdgeKey) -> Option<u32> {
        self.degrees.get(key).copied()
    }

    pub fn num_control_points(&self) -> usize {
        self.degrees.values().map(|d| *d as usize + 1).sum()
    }

    /// Upper bound on the degree of a network output in the control-point
    /// bits: input-layer curves are linear, and a degree-`n` curve applied
    /// to a degree-`d` node multiplies `u^n` by one more linear factor.
    pub fn degree_bound(&self) -> usize {
        let edges = self.edges();
        (1..self.depth()).fold(1, |d, l| {
            let n = edges
                .iter()
                .filter(|e| e.key.layer == l)
                .map(|e| e.degree as usize)
                .max()
                .unwrap_or(1);
            n * d + 1
        })
    }
}

impl fmt::Display for KanSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w: Vec<String> = self.widths.iter().map(ToString::to_string).collect();
        let d: Vec<String> = self.edges().iter().map(|e| e.degree.to_string()).collect();
        write!(f, "[{}] degrees ({})", w.join(","), d.join(","))
    }
}

/// Binary variables for every control point of every edge.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableLayout {
    encoding: EncodingSpec,
    edges: Vec<Edge>,
    codes: Vec<Vec<ControlPointCode>>,
    expansions: Vec<Vec<BinaryPolynomial>>,
    total_bits: usize,
}

impl VariableLayout {
    /// Allocates ids in the order (layer, output, input, control point,
    /// sign + then -, exponent ascending).
    pub fn new(spec: &KanSpec, encoding: &EncodingSpec) -> Result<Self> {
        encoding.validate()?;
        let n = encoding.exponents();
        let mut next = 0u32;
        let mut alloc = |count: usize| -> Vec<VarId> {
            let ids = (next..next + count as u32).map(VarId).collect();
            next += count as u32;
            ids
        };
        let edges = spec.edges();
        let mut codes = Vec::with_capacity(edges.len());
        for e in &edges {
            let points = (0..=e.degree)
                .map(|_| {
                    let plus_bits = alloc(n);
                    let minus_bits = if encoding.signed {
                        alloc(n)
                    } else {
                        Vec::new()
                    };
                    ControlPointCode {
                        plus_bits,
                        minus_bits,
                    }
                })
                .collect::<Vec<_>>();
            codes.push(points);
        }
        let expansions = codes
            .iter()
            .map(|pts| {
                pts.iter()
                    .map(|c| encoding::expansion_polynomial(c, encoding))
                    .collect()
            })
            .collect();
        Ok(VariableLayout {
            encoding: *encoding,
            edges,
            codes,
            expansions,
            total_bits: next as usize,
        })
    }

    pub fn encoding(&self) -> &EncodingSpec {
        &self.encoding
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn codes(&self, edge: usize) -> &[ControlPointCode] {
        &self.codes[edge]
    }

    pub fn expansion(&self, edge: usize, point: usize) -> &BinaryPolynomial {
        &self.expansions[edge][point]
    }

    pub fn total_control_points(&self) -> usize {
        self.codes.iter().map(Vec::len).sum()
    }

    /// Number of control-point bits; ids `0..total_bits` are all taken.
    pub fn total_bits(&self) -> usize {
        self.total_bits
    }

    pub fn all_vars(&self) -> Vec<VarId> {
        self.codes
            .iter()
            .flatten()
            .flat_map(|c| c.vars().collect::<Vec<_>>())
            .collect()
    }

    /// Decodes every control point from a dense assignment.
    pub fn decode_points(&self, bits: &[u8]) -> Vec<Vec<f64>> {
        self.codes
            .iter()
            .map(|pts| {
                pts.iter()
                    .map(|c| encoding::decode_bits(bits, c, &self.encoding))
                    .collect()
            })
            .collect()
    }

    /// Dense assignment encoding the nearest grid value of every control point.
    pub fn encode_points(&self, points: &[Vec<f64>]) -> Vec<u8> {
        let mut bits = vec![0u8; self.total_bits];
        for (codes, values) in self.codes.iter().zip(points) {
            for (code, v) in codes.iter().zip(values) {
                encoding::nearest_code(*v, &self.encoding).write_into(code, &mut bits);
            }
        }
        bits
    }
}

/// A network with concrete control points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedModel {
    pub version: u32,
    pub spec: KanSpec,
    pub encoding: EncodingSpec,
    /// Control points per edge, in layout edge order.
    pub control_points: Vec<Vec<f64>>,
    pub bounds: Normalizer,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl DecodedModel {
    pub fn new(
        spec: KanSpec,
        encoding: EncodingSpec,
        control_points: Vec<Vec<f64>>,
        bounds: Normalizer,
    ) -> Result<Self> {
        let edges = spec.edges();
        if control_points.len() != edges.len()
            || edges
                .iter()
                .zip(&control_points)
                .any(|(e, p)| p.len() != e.degree as usize + 1)
        {
            return Err(Error::SchemaMismatch(
                "control points do not match the network shape".into(),
            ));
        }
        if bounds.features() != spec.inputs() {
            return Err(Error::FeatureCount {
                expected: spec.inputs(),
                found: bounds.features(),
            });
        }
        Ok(DecodedModel {
            version: MODEL_FORMAT_VERSION,
            spec,
            encoding,
            control_points,
            bounds,
        })
    }

    /// All control points zero.
    pub fn zeros(spec: KanSpec, encoding: EncodingSpec, bounds: Normalizer) -> Self {
        let control_points = spec
            .edges()
            .iter()
            .map(|e| vec![0.0; e.degree as usize + 1])
            .collect();
        DecodedModel {
            version: MODEL_FORMAT_VERSION,
            spec,
            encoding,
            control_points,
            bounds,
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.control_points.iter().map(Vec::len).sum()
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        self.control_points.iter().flatten().copied().collect()
    }

    pub fn set_flat_parameters(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for pts in &mut self.control_points {
            for p in pts {
                *p = *it.next().expect("parameter vector too short");
            }
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let m: DecodedModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: MODEL_FORMAT_VERSION,
                found: m.version,
            });
        }
        DecodedModel::new(m.spec, m.encoding, m.control_points, m.bounds)
    }

    /// Outputs on already-normalized inputs.
    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        inputs.iter().map(|x| numeric_forward(self, x)).collect()
    }
}

/// Plain floating-point forward pass. Inner-layer values are not clamped.
pub fn numeric_forward(model: &DecodedModel, sample: &[f64]) -> Result<Vec<f64>> {
    let spec = &model.spec;
    if sample.len() != spec.inputs() {
        return Err(Error::FeatureCount {
            expected: spec.inputs(),
            found: sample.len(),
        });
    }
    let edges = spec.edges();
    let mut values = sample.to_vec();
    let mut e = 0;
    for layer in 0..spec.depth() {
        let mut next = vec![0.0; spec.widths()[layer + 1]];
        while e < edges.len() && edges[e].key.layer == layer {
            let edge = edges[e];
            let w = bernstein_unchecked(edge.degree, values[edge.key.input]);
            next[edge.key.output] += w
                .iter()
                .zip(&model.control_points[e])
                .map(|(a, p)| a * p)
                .sum::<f64>();
            e += 1;
        }
        values = next;
    }
    Ok(values)
}

/// Network outputs as polynomials in the control-point bits for one
/// normalized sample. Inner node values are composed as formal polynomials.
pub fn symbolic_output(
    spec: &KanSpec,
    layout: &VariableLayout,
    sample: &[f64],
) -> Result<Vec<BinaryPolynomial>> {
    if sample.len() != spec.inputs() {
        return Err(Error::FeatureCount {
            expected: spec.inputs(),
            found: sample.len(),
        });
    }
    let edges = layout.edges();
    let mut nodes: Vec<BinaryPolynomial> = Vec::new();
    let mut e = 0;
    for layer in 0..spec.depth() {
        let mut next = vec![BinaryPolynomial::zero(); spec.widths()[layer + 1]];
        if layer == 0 {
            while e < edges.len() && edges[e].key.layer == 0 {
                let edge = edges[e];
                let w = bernstein_weights(edge.degree, sample[edge.key.input])?;
                for (i, wi) in w.iter().enumerate() {
                    next[edge.key.output].add_scaled(layout.expansion(e, i), *wi);
                }
                e += 1;
            }
        } else {
            // Powers of u and (1 - u) per source node, shared across its edges.
            let mut cache: BTreeMap<(usize, u32), (Vec<BinaryPolynomial>, Vec<BinaryPolynomial>)> =
                BTreeMap::new();
            while e < edges.len() && edges[e].key.layer == layer {
                let edge = edges[e];
                let (pu, pv) = cache
                    .entry((edge.key.input, edge.degree))
                    .or_insert_with(|| {
                        let u = &nodes[edge.key.input];
                        let v = BinaryPolynomial::constant(1.0).sub(u);
                        (powers(u, edge.degree), powers(&v, edge.degree))
                    });
                let n = edge.degree;
                for i in 0..=n {
                    let basis = pv[(n - i) as usize].multiply(&pu[i as usize]);
                    let term = basis.multiply(layout.expansion(e, i as usize));
                    next[edge.key.output].add_scaled(&term, binomial(n, i) as f64);
                }
                e += 1;
            }
        }
        nodes = next;
    }
    Ok(nodes)
}

fn powers(p: &BinaryPolynomial, n: u32) -> Vec<BinaryPolynomial> {
    let mut out = vec![BinaryPolynomial::constant(1.0)];
    for k in 1..=n as usize {
        let next = out[k - 1].multiply(p);
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binpoly::Monomial;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(20, 10), 184_756);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn bernstein_examples() {
        let w = bernstein_weights(1, 0.3).unwrap();
        assert!((w[0] - 0.7).abs() < 1e-15 && (w[1] - 0.3).abs() < 1e-15);
        assert_eq!(bernstein_weights(2, 0.5).unwrap(), vec![0.25, 0.5, 0.25]);
        assert!(matches!(
            bernstein_weights(2, 1.5),
            Err(Error::Domain { .. })
        ));
        assert!(bernstein_weights(2, -0.1).is_err());
        assert!(bernstein_weights(0, 0.5).is_err());
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let n = rng.random_range(1..=5);
            let t: f64 = rng.random();
            let s: f64 = bernstein_weights(n, t).unwrap().iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn spec_json_and_validation() {
        let spec = KanSpec::uniform(vec![2, 1], 2).unwrap();
        let j = serde_json::to_string(&spec).unwrap();
        assert_eq!(j, r#"{"widths":[2,1],"degrees":{"0:0:0":2,"0:1:0":2}}"#);
        let back: KanSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, spec);

        let missing = r#"{"widths":[2,1],"degrees":{"0:0:0":2}}"#;
        assert!(serde_json::from_str::<KanSpec>(missing).is_err());
        assert!(KanSpec::uniform(vec![2], 1).is_err());
        assert!(KanSpec::uniform(vec![1, 1], 21).is_err());
    }

    #[test]
    fn layout_order_is_deterministic() {
        let spec = KanSpec::with_degrees(vec![2, 2, 1], &[1, 2, 1, 1, 2, 1]).unwrap();
        let enc = EncodingSpec::default();
        let a = VariableLayout::new(&spec, &enc).unwrap();
        let b = VariableLayout::new(&spec, &enc).unwrap();
        assert_eq!(a.all_vars(), b.all_vars());
        let ids: Vec<u32> = a.all_vars().iter().map(|v| v.0).collect();
        assert_eq!(ids, (0..a.total_bits() as u32).collect::<Vec<_>>());
        assert_eq!(a.total_control_points(), spec.num_control_points());
        assert_eq!(a.total_bits(), spec.num_control_points() * 6);

        // Edge order: layer, output, input.
        let keys: Vec<String> = spec.edges().iter().map(|e| e.key.to_string()).collect();
        assert_eq!(keys, ["0:0:0", "0:1:0", "0:0:1", "0:1:1", "1:0:0", "1:1:0"]);
        // First edge, first point: plus bits 0..3 then minus bits 3..6.
        assert_eq!(a.codes(0)[0].plus_bits, vec![VarId(0), VarId(1), VarId(2)]);
        assert_eq!(a.codes(0)[0].minus_bits, vec![VarId(3), VarId(4), VarId(5)]);
    }

    fn bounds(n: usize) -> Normalizer {
        Normalizer::identity(n)
    }

    #[test]
    fn numeric_examples() {
        let spec = KanSpec::uniform(vec![1, 1], 1).unwrap();
        let m = DecodedModel::new(
            spec,
            EncodingSpec::default(),
            vec![vec![0.0, 1.0]],
            bounds(1),
        )
        .unwrap();
        assert_eq!(numeric_forward(&m, &[0.25]).unwrap(), vec![0.25]);
        assert!(matches!(
            numeric_forward(&m, &[0.1, 0.2]),
            Err(Error::FeatureCount { .. })
        ));

        let spec = KanSpec::uniform(vec![1, 1, 1], 1).unwrap();
        let m = DecodedModel::new(
            spec,
            EncodingSpec::default(),
            vec![vec![0.0, 1.0]; 2],
            bounds(1),
        )
        .unwrap();
        for t in [0.0, 0.3, 0.9] {
            assert!((numeric_forward(&m, &[t]).unwrap()[0] - t).abs() < 1e-15);
        }

        // [2,1]: degree-2 curve on x1, degree-1 curve on x2.
        let spec = KanSpec::with_degrees(vec![2, 1], &[2, 1]).unwrap();
        let m = DecodedModel::new(
            spec,
            EncodingSpec::default(),
            vec![vec![1.0, -1.0, 0.5], vec![0.25, 1.5]],
            bounds(2),
        )
        .unwrap();
        // x1 = 0.5: 0.25*1 + 0.5*(-1) + 0.25*0.5 = -0.125; x2 = 0.2: 0.8*0.25 + 0.2*1.5 = 0.5
        let y = numeric_forward(&m, &[0.5, 0.2]).unwrap()[0];
        assert!((y - 0.375).abs() < 1e-15, "{y}");
    }

    #[test]
    fn single_edge_at_zero_is_first_point() {
        let spec = KanSpec::uniform(vec![1, 1], 1).unwrap();
        let enc = EncodingSpec::default();
        let layout = VariableLayout::new(&spec, &enc).unwrap();
        let out = symbolic_output(&spec, &layout, &[0.0]).unwrap();
        assert_eq!(out[0], *layout.expansion(0, 0));
    }

    /// Hand transcription of the two-layer, degree-1, 2-bit expansion
    /// `A0 - A0 C0 + t A0 C0 - t A0 C1 + A1 C0 - t A1 C0 + t A1 C1`
    /// with `C` the inner and `A` the outer control points.
    fn two_layer_reference(t: f64) -> BinaryPolynomial {
        let c0 = [VarId(0), VarId(1)];
        let c1 = [VarId(2), VarId(3)];
        let a0 = [VarId(4), VarId(5)];
        let a1 = [VarId(6), VarId(7)];
        let mut p = BinaryPolynomial::zero();
        let w = [1.0, 2.0];
        for k in 0..2 {
            p.add_term(Monomial::var(a0[k]), w[k]);
        }
        let mut pair = |x: &[VarId; 2], y: &[VarId; 2], c: f64| {
            for i in 0..2 {
                for j in 0..2 {
                    p.add_term(Monomial::new([x[i], y[j]]), c * w[i] * w[j]);
                }
            }
        };
        pair(&a0, &c0, -1.0);
        pair(&a0, &c0, t);
        pair(&a0, &c1, -t);
        pair(&a1, &c0, 1.0);
        pair(&a1, &c0, -t);
        pair(&a1, &c1, t);
        p
    }

    #[test]
    fn two_layer_expansion_term_for_term() {
        let spec = KanSpec::uniform(vec![1, 1, 1], 1).unwrap();
        let enc = EncodingSpec::new(0, 1, false).unwrap();
        let layout = VariableLayout::new(&spec, &enc).unwrap();
        for t in [0.0, 1.0] {
            let got = &symbolic_output(&spec, &layout, &[t]).unwrap()[0];
            let want = two_layer_reference(t);
            assert_eq!(got, &want, "t = {t}");
            assert_eq!(got.max_degree(), 2);
        }
        // t = 0, every bit set: A0 = C0 = A1 = 3 gives 3 - 9 + 9.
        let got = &symbolic_output(&spec, &layout, &[0.0]).unwrap()[0];
        let all: BTreeMap<VarId, u8> = layout.all_vars().into_iter().map(|v| (v, 1)).collect();
        assert_eq!(got.evaluate(&all).unwrap(), 3.0);
    }

    #[test]
    fn symbolic_matches_numeric_random() {
        let enc = EncodingSpec::new(-1, 0, true).unwrap();
        let matrix = [
            KanSpec::uniform(vec![1, 1], 2).unwrap(),
            KanSpec::uniform(vec![2, 1], 2).unwrap(),
            KanSpec::uniform(vec![1, 1, 1], 2).unwrap(),
            KanSpec::uniform(vec![2, 2, 1], 1).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for spec in &matrix {
            let layout = VariableLayout::new(spec, &enc).unwrap();
            for _ in 0..100 {
                let x: Vec<f64> = (0..spec.inputs()).map(|_| rng.random()).collect();
                let bits: Vec<u8> = (0..layout.total_bits())
                    .map(|_| rng.random_range(0..2))
                    .collect();
                let sym = symbolic_output(spec, &layout, &x).unwrap();
                let model = DecodedModel::new(
                    spec.clone(),
                    enc,
                    layout.decode_points(&bits),
                    bounds(spec.inputs()),
                )
                .unwrap();
                let num = numeric_forward(&model, &x).unwrap();
                for (s, n) in sym.iter().zip(&num) {
                    let v = s.evaluate_bits(&bits);
                    assert!(
                        (v - n).abs() <= 1e-9 * (1.0 + n.abs()),
                        "{spec}: {v} vs {n}"
                    );
                }
                assert!(sym.iter().all(|p| p.max_degree() <= spec.degree_bound()));
            }
        }
    }
}
