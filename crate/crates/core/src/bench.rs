//! Synthetic tabular benchmark, table-backed oracle and predictor evaluation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::pareto_front;
use crate::dataset::{dataset_to_string, DatasetRecord};
use crate::error::{Error, Result};
use crate::graph::{encode, ArchGraph, EncodedGraph, OpVocabulary};
use crate::linalg::sigmoid;
use crate::objective::{ObjectiveSpec, ObjectiveVector, TargetScaling};
use crate::search::EvaluationOracle;
use crate::stats::{pearson, spearman};
use crate::surrogate::{
    fit, GcnConfig, GcnParams, LossKind, MlpConfig, MlpParams, Surrogate, SurrogateModel, TrainConfig,
};

pub const INPUT_OP: &str = "input";
pub const OUTPUT_OP: &str = "output";

/// Parameter cost of one node, by operation name.
pub fn op_params(name: &str) -> u64 {
    if name.contains("conv3x3") {
        147_456
    } else if name.contains("conv1x1") {
        16_384
    } else {
        0
    }
}

pub fn graph_params(g: &ArchGraph, vocab: &OpVocabulary) -> Result<u64> {
    Ok(g.op_names(vocab)?.iter().map(|n| op_params(n)).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticBenchSpec {
    /// Inclusive node-count range, input and output included.
    pub node_range: [usize; 2],
    /// Operations available to interior nodes.
    pub ops: Vec<String>,
    pub space_size: usize,
    pub seed: u64,
    /// Share of new cells produced by editing an existing one.
    pub mutation_fraction: f64,
    pub max_edges: usize,
    pub edge_probability: f64,
    pub target_mean_accuracy: f64,
    /// Standard deviation of the hidden logit before perturbation.
    pub logit_spread: f64,
    pub interaction_terms: usize,
    /// Half-width of the per-architecture logit perturbation.
    pub perturbation: f64,
}

impl Default for SyntheticBenchSpec {
    fn default() -> Self {
        Self {
            node_range: [5, 7],
            ops: vec!["conv3x3".into(), "conv1x1".into(), "maxpool3x3".into()],
            space_size: 10_000,
            seed: 0,
            mutation_fraction: 0.85,
            max_edges: 9,
            edge_probability: 0.4,
            target_mean_accuracy: 0.88,
            logit_spread: 0.6,
            interaction_terms: 4,
            perturbation: 0.02,
        }
    }
}

impl SyntheticBenchSpec {
    pub fn op_count(&self) -> usize {
        self.ops.len()
    }

    pub fn vocabulary(&self) -> Result<OpVocabulary> {
        let mut names = vec![INPUT_OP.to_string(), OUTPUT_OP.to_string()];
        names.extend(self.ops.iter().cloned());
        OpVocabulary::new(names)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        let [lo, hi] = self.node_range;
        if lo < 3 || hi < lo {
            return bad("node_range must satisfy 3 <= min <= max");
        }
        if self.ops.is_empty() {
            return bad("at least one interior operation is required");
        }
        if self.space_size < 2 {
            return bad("space_size must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.mutation_fraction)
            || !(0.0 < self.edge_probability && self.edge_probability <= 1.0)
        {
            return bad("mutation_fraction and edge_probability must be probabilities");
        }
        if self.max_edges < lo - 1 {
            return bad("max_edges cannot connect the smallest cells");
        }
        if !(0.0 < self.target_mean_accuracy && self.target_mean_accuracy < 1.0) {
            return bad("target_mean_accuracy must lie in (0, 1)");
        }
        if self.logit_spread.is_nan()
            || self.logit_spread <= 0.0
            || self.perturbation.is_nan()
            || self.perturbation < 0.0
        {
            return bad("logit_spread must be positive and perturbation non-negative");
        }
        self.vocabulary().map(|_| ())
    }
}

/// Generated space plus everything needed to persist it.
#[derive(Debug, Clone)]
pub struct SyntheticBench {
    pub spec: SyntheticBenchSpec,
    pub vocab: OpVocabulary,
    pub records: Vec<DatasetRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMetadata {
    pub spec: SyntheticBenchSpec,
    pub records: usize,
    pub sha256: String,
    pub best_accuracy: f64,
    pub best_id: String,
}

impl SyntheticBench {
    pub fn graphs(&self) -> Vec<ArchGraph> {
        self.records.iter().map(|r| r.graph.clone()).collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        dataset_to_string(&self.records, &self.vocab)
    }

    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(self.to_jsonl()?.as_bytes()))
    }

    pub fn metadata(&self) -> Result<BenchMetadata> {
        let best = self
            .records
            .iter()
            .max_by(|a, b| a.metrics["accuracy"].total_cmp(&b.metrics["accuracy"]))
            .expect("space is non-empty");
        Ok(BenchMetadata {
            spec: self.spec.clone(),
            records: self.records.len(),
            sha256: self.digest()?,
            best_accuracy: best.metrics["accuracy"],
            best_id: best.graph.id().to_string(),
        })
    }

    /// Records whose node count lies in `[lo, hi]`.
    pub fn slice(&self, lo: usize, hi: usize) -> Vec<DatasetRecord> {
        self.records.iter().filter(|r| (lo..=hi).contains(&r.graph.node_count())).cloned().collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

const FRESH_TRIES: usize = 1000;

/// Interior nodes need an inbound and an outbound edge; edges only point forward.
fn is_valid_cell(g: &ArchGraph, max_edges: usize) -> bool {
    let n = g.node_count();
    if g.edge_count() > max_edges {
        return false;
    }
    for i in 0..n {
        for j in 0..=i {
            if g.has_edge(i, j) {
                return false;
            }
        }
    }
    let has_in = |v: usize| (0..v).any(|u| g.has_edge(u, v));
    let has_out = |v: usize| (v + 1..n).any(|w| g.has_edge(v, w));
    has_out(0) && has_in(n - 1) && (1..n - 1).all(|v| has_in(v) && has_out(v))
}

/// Node count is drawn first, then structures are redrawn until one is valid,
/// so larger cells are not crowded out by the validity check.
fn fresh_cell(spec: &SyntheticBenchSpec, rng: &mut ChaCha8Rng) -> Result<Option<ArchGraph>> {
    let n = rng.gen_range(spec.node_range[0]..=spec.node_range[1]);
    for _ in 0..FRESH_TRIES {
        let mut adj = vec![vec![0u8; n]; n];
        for (i, row) in adj.iter_mut().enumerate() {
            for cell in row.iter_mut().skip(i + 1) {
                *cell = rng.gen_bool(spec.edge_probability) as u8;
            }
        }
        let mut ops = vec![0usize; n];
        ops[n - 1] = 1;
        for op in ops.iter_mut().take(n - 1).skip(1) {
            *op = 2 + rng.gen_range(0..spec.ops.len());
        }
        let g = ArchGraph::new(adj, ops)?;
        if is_valid_cell(&g, spec.max_edges) {
            return Ok(Some(g));
        }
    }
    Ok(None)
}

fn mutate_cell(g: &ArchGraph, spec: &SyntheticBenchSpec, rng: &mut ChaCha8Rng) -> Option<ArchGraph> {
    let n = g.node_count();
    if rng.gen_bool(0.5) {
        let node = rng.gen_range(1..n - 1);
        let op = 2 + rng.gen_range(0..spec.ops.len());
        (op != g.ops()[node]).then(|| g.with_op(node, op))
    } else {
        let from = rng.gen_range(0..n - 1);
        let to = rng.gen_range(from + 1..n);
        g.with_edge_toggled(from, to)
    }
}

/// Hand-crafted descriptors the hidden accuracy is built from: interior op
/// counts, counts of every (source kind, target kind) edge, longest path,
/// edge count and node count.
fn cell_features(g: &ArchGraph, op_count: usize) -> Vec<f64> {
    let n = g.node_count();
    let kind = |v: usize| -> usize {
        match g.ops()[v] {
            0 => 0,
            1 => op_count + 1,
            o => o - 1,
        }
    };
    let kinds = op_count + 2;
    let mut f = vec![0.0; op_count + kinds * kinds + 3];
    for v in 1..n - 1 {
        f[kind(v) - 1] += 1.0;
    }
    for u in 0..n {
        for v in 0..n {
            if g.has_edge(u, v) {
                f[op_count + kind(u) * kinds + kind(v)] += 1.0;
            }
        }
    }
    let tail = f.len() - 3;
    f[tail] = g.longest_path() as f64;
    f[tail + 1] = g.edge_count() as f64;
    f[tail + 2] = n as f64;
    f
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Deterministic value in `[-1, 1]` derived from the seed and the cell id.
fn id_noise(seed: u64, id: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let bytes = h.finalize();
    let x = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    2.0 * (x >> 11) as f64 / (1u64 << 53) as f64 - 1.0
}

/// Builds the deterministic benchmark described by `spec`.
pub fn generate_bench(spec: &SyntheticBenchSpec) -> Result<SyntheticBench> {
    spec.validate()?;
    let vocab = spec.vocabulary()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut graphs: Vec<ArchGraph> = Vec::with_capacity(spec.space_size);
    let mut seen = HashSet::new();
    let retry_limit = spec.space_size.saturating_mul(200);
    let mut attempts = 0usize;
    // a small pool of fresh cells seeds the mutation process
    let seeds = (spec.space_size / 50).max(1);
    while graphs.len() < spec.space_size {
        attempts += 1;
        if attempts > retry_limit {
            return Err(Error::InvalidArgument(format!(
                "only {} distinct cells after {retry_limit} attempts",
                graphs.len()
            )));
        }
        let candidate = if graphs.len() >= seeds && rng.gen_bool(spec.mutation_fraction) {
            let parent = &graphs[rng.gen_range(0..graphs.len())];
            mutate_cell(parent, spec, &mut rng)
        } else {
            fresh_cell(spec, &mut rng)?
        };
        if let Some(g) = candidate {
            if is_valid_cell(&g, spec.max_edges) && seen.insert(g.id().to_string()) {
                graphs.push(g);
            }
        }
    }

    let op_count = spec.ops.len();
    let width = op_count + (op_count + 2) * (op_count + 2) + 3;
    let weights: Vec<f64> = (0..width).map(|_| standard_normal(&mut rng)).collect();
    let interactions: Vec<(usize, usize, f64)> = (0..spec.interaction_terms)
        .map(|_| {
            let a = rng.gen_range(0..width);
            let b = rng.gen_range(0..width);
            (a, b, 0.3 * standard_normal(&mut rng))
        })
        .collect();

    let features: Vec<Vec<f64>> = graphs.iter().map(|g| cell_features(g, op_count)).collect();
    // standardize each descriptor so the weights act on comparable scales
    let n = graphs.len() as f64;
    let mut mean = vec![0.0; width];
    let mut sd = vec![0.0; width];
    for f in &features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n;
        }
    }
    for f in &features {
        for ((s, v), m) in sd.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in &mut sd {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let raw: Vec<f64> = features
        .iter()
        .map(|f| {
            let z: Vec<f64> = (0..width).map(|k| (f[k] - mean[k]) / sd[k]).collect();
            let linear: f64 = z.iter().zip(&weights).map(|(a, b)| a * b).sum();
            linear + interactions.iter().map(|&(a, b, c)| c * z[a] * z[b]).sum::<f64>()
        })
        .collect();
    let raw_mean = raw.iter().sum::<f64>() / n;
    let raw_sd = (raw.iter().map(|r| (r - raw_mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    let logits: Vec<f64> = raw
        .iter()
        .zip(&graphs)
        .map(|(r, g)| spec.logit_spread * (r - raw_mean) / raw_sd + spec.perturbation * id_noise(spec.seed, g.id()))
        .collect();

    // shift so the mean accuracy hits the target
    let mean_acc = |shift: f64| logits.iter().map(|l| sigmoid(l + shift)).sum::<f64>() / n;
    let (mut lo, mut hi) = (-20.0, 20.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_acc(mid) < spec.target_mean_accuracy {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shift = 0.5 * (lo + hi);

    let mut records = Vec::with_capacity(graphs.len());
    for (g, l) in graphs.into_iter().zip(&logits) {
        let mut metrics = BTreeMap::new();
        metrics.insert("accuracy".to_string(), sigmoid(l + shift));
        metrics.insert("params".to_string(), graph_params(&g, &vocab)? as f64);
        records.push(DatasetRecord { graph: g, metrics });
    }
    let best = records.iter().map(|r| r.metrics["accuracy"]).fold(f64::NEG_INFINITY, f64::max);
    let ties = records.iter().filter(|r| r.metrics["accuracy"] == best).count();
    if ties != 1 {
        return Err(Error::InvalidArgument(format!("{ties} cells share the best accuracy; choose another seed")));
    }
    Ok(SyntheticBench { spec: spec.clone(), vocab, records })
}

/// Lookup-table oracle over a finite space.
#[derive(Debug, Clone)]
pub struct TabularOracle {
    spec: ObjectiveSpec,
    table: HashMap<String, ObjectiveVector>,
    optimal: Vec<String>,
}

impl TabularOracle {
    /// Picks the `spec` columns out of every record's metrics.
    pub fn new(records: &[DatasetRecord], spec: ObjectiveSpec) -> Result<Self> {
        let mut table = HashMap::with_capacity(records.len());
        let mut ids = Vec::with_capacity(records.len());
        let mut vectors = Vec::with_capacity(records.len());
        for r in records {
            let mut values = Vec::with_capacity(spec.len());
            for name in spec.names() {
                let v = r.metric(name).ok_or_else(|| Error::Validation {
                    id: r.graph.id().to_string(),
                    message: format!("objective {name:?} is not among the dataset metrics"),
                })?;
                values.push(v);
            }
            let v = ObjectiveVector::new(values)?;
            if table.insert(r.graph.id().to_string(), v.clone()).is_none() {
                ids.push(r.graph.id().to_string());
                vectors.push(v);
            }
        }
        if ids.is_empty() {
            return Err(Error::InsufficientData("empty table".into()));
        }
        let optimal = pareto_front(&vectors, &spec)?.into_iter().map(|i| ids[i].clone()).collect();
        Ok(Self { spec, table, optimal })
    }

    pub fn objectives(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn lookup(&self, id: &str) -> Option<&ObjectiveVector> {
        self.table.get(id)
    }
}

impl EvaluationOracle for TabularOracle {
    fn objectives(&self) -> &ObjectiveSpec {
        &self.spec
    }

    fn evaluate(&self, g: &ArchGraph) -> Result<ObjectiveVector> {
        self.table
            .get(g.id())
            .cloned()
            .ok_or_else(|| Error::Oracle { id: g.id().to_string(), message: "not in the table".into() })
    }

    fn optimal_front(&self) -> Option<Vec<String>> {
        Some(self.optimal.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Gcn,
    Mlp,
}

impl std::str::FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(PredictorKind::Gcn),
            "mlp" => Ok(PredictorKind::Mlp),
            _ => Err(Error::InvalidArgument(format!("unknown predictor {s:?} (expected gcn or mlp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorEvalConfig {
    pub train_n: usize,
    pub val_n: usize,
    pub test_n: usize,
    pub objective: String,
    pub loss: LossKind,
    pub kind: PredictorKind,
    pub hidden: usize,
    pub layers: usize,
    pub train: TrainConfig,
    pub seed: u64,
    /// Evaluate on the training records themselves.
    pub test_on_train: bool,
}

impl Default for PredictorEvalConfig {
    fn default() -> Self {
        Self {
            train_n: 1000,
            val_n: 100,
            test_n: 10_000,
            objective: "accuracy".into(),
            loss: LossKind::Mse,
            kind: PredictorKind::Gcn,
            hidden: 64,
            layers: 4,
            train: TrainConfig::default(),
            seed: 0,
            test_on_train: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorMetrics {
    pub pearson: f64,
    pub spearman: f64,
    pub train_n: usize,
    pub val_n: usize,
    pub test_n: usize,
    pub seed: u64,
    pub kind: PredictorKind,
    pub loss: LossKind,
    pub objective: String,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Either trained predictor, ready for inference.
#[derive(Debug, Clone)]
pub enum TrainedPredictor {
    Gcn(GcnParams),
    Mlp(MlpParams),
}

impl TrainedPredictor {
    pub fn into_model(self) -> SurrogateModel {
        match self {
            TrainedPredictor::Gcn(p) => SurrogateModel::Gcn(p),
            TrainedPredictor::Mlp(p) => SurrogateModel::Mlp(p),
        }
    }

    pub fn predict(&self, graphs: &[&ArchGraph], vocab: &OpVocabulary) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(graphs.len());
        match self {
            TrainedPredictor::Gcn(p) => {
                for chunk in graphs.chunks(1024) {
                    let enc = chunk.iter().map(|g| encode(g, vocab)).collect::<Result<Vec<_>>>()?;
                    let refs: Vec<&EncodedGraph> = enc.iter().collect();
                    out.extend(p.predict_batch(&refs)?);
                }
            }
            TrainedPredictor::Mlp(p) => {
                for chunk in graphs.chunks(1024) {
                    let xs = chunk.iter().map(|g| p.flatten(g)).collect::<Result<Vec<_>>>()?;
                    let refs: Vec<&Vec<f64>> = xs.iter().collect();
                    out.extend(p.predict_batch(&refs)?);
                }
            }
        }
        Ok(out)
    }
}

/// Trains a predictor on `records` against targets in `(0, 1)`.
pub fn train_predictor(
    records: &[&DatasetRecord],
    validation: Option<&[&DatasetRecord]>,
    vocab: &OpVocabulary,
    cfg: &PredictorEvalConfig,
) -> Result<(TrainedPredictor, TargetScaling, usize, usize)> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no training records".into()));
    }
    let values = |rs: &[&DatasetRecord]| -> Result<Vec<f64>> {
        rs.iter()
            .map(|r| {
                r.metric(&cfg.objective).ok_or_else(|| Error::Validation {
                    id: r.graph.id().to_string(),
                    message: format!("metric {:?} missing", cfg.objective),
                })
            })
            .collect()
    };
    let raw = values(records)?;
    let objective = crate::objective::Objective {
        name: cfg.objective.clone(),
        direction: crate::objective::Direction::Maximize,
        costly: true,
    };
    let scaling = TargetScaling::fit(&objective, &raw);
    let targets: Vec<f64> = raw.iter().map(|&v| scaling.apply(v)).collect();
    let val_targets: Option<Vec<f64>> = match validation {
        Some(v) => Some(values(v)?.iter().map(|&x| scaling.apply(x)).collect()),
        None => None,
    };
    match cfg.kind {
        PredictorKind::Gcn => {
            let config = GcnConfig::new(vocab.feature_width()).with_hidden(cfg.hidden).with_layers(cfg.layers);
            let init = GcnParams::new(config, cfg.seed)?;
            let enc = records.iter().map(|r| encode(&r.graph, vocab)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&EncodedGraph> = enc.iter().collect();
            let venc = match validation {
                Some(v) => v.iter().map(|r| encode(&r.graph, vocab)).collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            let vrefs: Vec<&EncodedGraph> = venc.iter().collect();
            let val = val_targets.as_ref().map(|t| (vrefs.as_slice(), t.as_slice()));
            let out = fit(init, &refs, &targets, &cfg.train, cfg.loss, val)?;
            Ok((TrainedPredictor::Gcn(out.model), scaling, out.best_epoch, out.epochs_run))
        }
        PredictorKind::Mlp => {
            let max_nodes =
                records.iter().chain(validation.unwrap_or(&[]).iter()).map(|r| r.graph.node_count()).max().unwrap_or(1);
            let mut config = MlpConfig::new(max_nodes, vocab.len()).padded();
            config.hidden = vec![cfg.hidden; 2];
            let init = MlpParams::new(config, cfg.seed)?;
            let xs = records.iter().map(|r| init.flatten(&r.graph)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Vec<f64>> = xs.iter().collect();
            let vxs = match validation {
                Some(v) => v.iter().map(|r| init.flatten(&r.graph)).collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            let vrefs: Vec<&Vec<f64>> = vxs.iter().collect();
            let val = val_targets.as_ref().map(|t| (vrefs.as_slice(), t.as_slice()));
            let out = fit(init, &refs, &targets, &cfg.train, cfg.loss, val)?;
            Ok((TrainedPredictor::Mlp(out.model), scaling, out.best_epoch, out.epochs_run))
        }
    }
}

/// Shuffles `data` with `seed` and cuts consecutive parts of the given sizes.
pub fn seeded_split<const K: usize>(
    data: &[DatasetRecord],
    sizes: [usize; K],
    seed: u64,
) -> Result<[Vec<&DatasetRecord>; K]> {
    let needed: usize = sizes.iter().sum();
    if data.len() < needed {
        return Err(Error::InsufficientData(format!("{} records, split needs {needed}", data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut start = 0;
    Ok(sizes.map(|n| {
        let part = order[start..start + n].iter().map(|&i| &data[i]).collect();
        start += n;
        part
    }))
}

/// Seeded train/validation/test split, training, and test-set correlations.
pub fn eval_predictor(
    data: &[DatasetRecord],
    vocab: &OpVocabulary,
    cfg: &PredictorEvalConfig,
) -> Result<PredictorMetrics> {
    if cfg.train_n == 0 || (!cfg.test_on_train && cfg.test_n < 2) {
        return Err(Error::InvalidArgument("train_n must be positive and test_n at least 2".into()));
    }
    let (train, val, test) = if cfg.test_on_train {
        let [train] = seeded_split(data, [cfg.train_n], cfg.seed)?;
        (train.clone(), train.clone(), train)
    } else {
        let [train, val, test] = seeded_split(data, [cfg.train_n, cfg.val_n, cfg.test_n], cfg.seed)?;
        (train, val, test)
    };
    let validation = (!val.is_empty()).then_some(val.as_slice());
    let (model, scaling, best_epoch, epochs_run) = train_predictor(&train, validation, vocab, cfg)?;
    let graphs: Vec<&ArchGraph> = test.iter().map(|r| &r.graph).collect();
    let predicted = model.predict(&graphs, vocab)?;
    let truth: Vec<f64> =
        test.iter().map(|r| r.metric(&cfg.objective).map(|v| scaling.apply(v)).unwrap_or(f64::NAN)).collect();
    Ok(PredictorMetrics {
        pearson: pearson(&predicted, &truth)?,
        spearman: spearman(&predicted, &truth)?,
        train_n: cfg.train_n,
        val_n: if cfg.test_on_train { 0 } else { cfg.val_n },
        test_n: test.len(),
        seed: cfg.seed,
        kind: cfg.kind,
        loss: cfg.loss,
        objective: cfg.objective.clone(),
        best_epoch,
        epochs_run,
    })
}

/// Writes `bench.jsonl`, `bench.meta.json` and `vocab.json` into `dir`.
pub fn write_bench(dir: &Path, bench: &SyntheticBench) -> Result<BenchMetadata> {
    std::fs::create_dir_all(dir)?;
    let text = bench.to_jsonl()?;
    std::fs::write(dir.join("bench.jsonl"), &text)?;
    let meta = bench.metadata()?;
    std::fs::write(dir.join("bench.meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    crate::dataset::write_vocabulary(&dir.join("vocab.json"), &bench.vocab)?;
    Ok(meta)
}
