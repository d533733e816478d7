use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::report::{FrontMember, IterationSummary, SearchReport};
use super::{EvaluationOracle, SearchConfig, SearchSpace, SurrogateKind};
use crate::acquisition::{pareto_front, score_candidates, select_batch, AcquisitionContext, ScoreMode};
use crate::blr::{
    fit_logit_targets, logit, optimize_hyperparams_logit, BlrPosterior, HyperSearch, HyperparamFit, LogitTransform,
    DEFAULT_ALPHA, DEFAULT_BETA,
};
use crate::error::{Error, Result};
use crate::graph::{ArchGraph, EncodedGraph};
use crate::objective::{Direction, ObjectiveSpec, ObjectiveVector, TargetScaling, TrainedRecord};
use crate::surrogate::{
    fit, GcnConfig, GcnParams, LossKind, MlpConfig, MlpParams, Surrogate, SurrogateModel, TrainConfig,
};

/// Anything that can embed cells of a space and be refit on evaluated ones.
pub trait FeatureModel: Clone + Send + Sync + Serialize + DeserializeOwned {
    fn embed(&self, space: &SearchSpace, indices: &[usize]) -> Result<Vec<Vec<f64>>>;

    /// A copy trained on `(indices, targets)`, targets in `(0, 1)`.
    fn retrain(
        &self,
        space: &SearchSpace,
        indices: &[usize],
        targets: &[f64],
        cfg: &TrainConfig,
        loss: LossKind,
    ) -> Result<Self>;
}

const EMBED_CHUNK: usize = 256;

impl FeatureModel for SurrogateModel {
    fn embed(&self, space: &SearchSpace, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
        let chunks: Vec<Vec<Vec<f64>>> = indices
            .par_chunks(EMBED_CHUNK)
            .map(|chunk| match self {
                SurrogateModel::Gcn(p) => {
                    let refs: Vec<&EncodedGraph> = chunk.iter().map(|&i| space.encoded(i)).collect();
                    Ok(p.forward_batch(&refs)?.0)
                }
                SurrogateModel::Mlp(p) => {
                    let xs = chunk.iter().map(|&i| p.flatten(space.graph(i))).collect::<Result<Vec<_>>>()?;
                    let refs: Vec<&Vec<f64>> = xs.iter().collect();
                    Ok(p.forward_batch(&refs)?.0)
                }
            })
            .collect::<Result<_>>()?;
        Ok(chunks.concat())
    }

    fn retrain(
        &self,
        space: &SearchSpace,
        indices: &[usize],
        targets: &[f64],
        cfg: &TrainConfig,
        loss: LossKind,
    ) -> Result<Self> {
        Ok(match self {
            SurrogateModel::Gcn(p) => {
                let refs: Vec<&EncodedGraph> = indices.iter().map(|&i| space.encoded(i)).collect();
                SurrogateModel::Gcn(fit(p.clone(), &refs, targets, cfg, loss, None)?.model)
            }
            SurrogateModel::Mlp(p) => {
                let xs = indices.iter().map(|&i| p.flatten(space.graph(i))).collect::<Result<Vec<_>>>()?;
                let refs: Vec<&Vec<f64>> = xs.iter().collect();
                SurrogateModel::Mlp(fit(p.clone(), &refs, targets, cfg, loss, None)?.model)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The requested share of the true front was recovered.
    Threshold,
    Budget,
    /// No unevaluated cells remain.
    Exhausted,
}

/// Everything a run needs to continue: the evaluated set, surrogate and
/// posterior per costly objective, counters and the random stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "M: FeatureModel")]
pub struct SearchState<M = SurrogateModel> {
    pub objectives: ObjectiveSpec,
    pub vocab: Vec<String>,
    pub trained: Vec<TrainedRecord>,
    /// Positions in `trained` of its non-dominated members.
    pub estimated_front: Vec<usize>,
    /// Oracle calls charged so far (failed calls included when charged).
    pub evaluations_used: usize,
    pub failed: Vec<String>,
    pub iteration: usize,
    pub rng: ChaCha8Rng,
    /// One per costly objective.
    pub models: Vec<M>,
    pub posteriors: Vec<BlrPosterior>,
    pub hyperparams: Vec<HyperparamFit>,
    pub scalings: Vec<TargetScaling>,
    pub trace: Vec<IterationSummary>,
    pub evaluations_to_optimum: Option<usize>,
    /// True front members found so far.
    pub optimal_found: usize,
    pub stop: Option<StopReason>,
    #[serde(skip)]
    cache: Vec<Vec<Option<Vec<f64>>>>,
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(super) struct Truth {
    ids: HashSet<String>,
}

impl Truth {
    pub(super) fn of(oracle: &impl EvaluationOracle) -> Option<Self> {
        oracle.optimal_front().map(|ids| Truth { ids: ids.into_iter().collect() })
    }

    fn reached(&self, found: usize, threshold: f64) -> bool {
        !self.ids.is_empty() && found as f64 >= threshold * self.ids.len() as f64 - 1e-9
    }
}

impl<M> SearchState<M> {
    pub(super) fn empty(objectives: ObjectiveSpec, vocab: Vec<String>, rng: ChaCha8Rng, models: Vec<M>) -> Self {
        SearchState {
            objectives,
            vocab,
            trained: Vec::new(),
            estimated_front: Vec::new(),
            evaluations_used: 0,
            failed: Vec::new(),
            iteration: 0,
            rng,
            models,
            posteriors: Vec::new(),
            hyperparams: Vec::new(),
            scalings: Vec::new(),
            trace: Vec::new(),
            evaluations_to_optimum: None,
            optimal_found: 0,
            stop: None,
            cache: Vec::new(),
        }
    }

    pub fn trained_ids(&self) -> HashSet<&str> {
        self.trained.iter().map(|r| r.graph.id()).collect()
    }

    pub(super) fn record(
        &mut self,
        cfg: &SearchConfig,
        oracle: &impl EvaluationOracle,
        truth: &Option<Truth>,
        g: &ArchGraph,
    ) -> Result<()> {
        let outcome = oracle.evaluate(g).and_then(|v| TrainedRecord::new(g.clone(), v, &self.objectives));
        match outcome {
            Ok(rec) => {
                self.evaluations_used += 1;
                if let Some(t) = truth {
                    if t.ids.contains(rec.graph.id()) {
                        self.optimal_found += 1;
                        if self.evaluations_to_optimum.is_none() && t.reached(self.optimal_found, cfg.threshold) {
                            self.evaluations_to_optimum = Some(self.evaluations_used);
                        }
                    }
                }
                self.trained.push(rec);
                Ok(())
            }
            Err(e @ (Error::Oracle { .. } | Error::Validation { .. } | Error::InvalidArgument(_))) => {
                log::warn!("evaluation of {} failed: {e}", g.id());
                if cfg.charge_failures {
                    self.evaluations_used += 1;
                }
                self.failed.push(g.id().to_string());
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    /// Report of the run so far.
    pub fn report(
        &self,
        cfg: &SearchConfig,
        method: &str,
        settings: BTreeMap<String, serde_json::Value>,
    ) -> SearchReport {
        build_report(self, cfg, method, settings)
    }

    pub(super) fn update_front(&mut self) -> Result<()> {
        let points: Vec<ObjectiveVector> = self.trained.iter().map(|r| r.objectives.clone()).collect();
        self.estimated_front = pareto_front(&points, &self.objectives)?;
        Ok(())
    }

    pub(super) fn summarize(&mut self) {
        let m = self.objectives.len();
        let best_per_objective = (0..m)
            .map(|k| {
                let dir = self.objectives.objectives()[k].direction;
                let vals = self.trained.iter().map(|r| r.objectives.values()[k]);
                match dir {
                    Direction::Maximize => vals.fold(f64::NEG_INFINITY, f64::max),
                    Direction::Minimize => vals.fold(f64::INFINITY, f64::min),
                }
            })
            .collect();
        self.trace.push(IterationSummary {
            iteration: self.iteration,
            evaluations_used: self.evaluations_used,
            best_per_objective,
            front_size: self.estimated_front.len(),
        });
    }

    pub(super) fn check_stop(&mut self, cfg: &SearchConfig) {
        if self.stop.is_some() {
            return;
        }
        if self.evaluations_to_optimum.is_some() {
            self.stop = Some(StopReason::Threshold);
        } else if cfg.max_evaluations.is_some_and(|b| self.evaluations_used >= b) {
            self.stop = Some(StopReason::Budget);
        }
    }
}

impl<M: FeatureModel> SearchState<M> {
    fn ensure_embeddings(&mut self, space: &SearchSpace, indices: &[usize]) -> Result<()> {
        if self.cache.len() != self.models.len() || self.cache.iter().any(|c| c.len() != space.len()) {
            self.cache = vec![vec![None; space.len()]; self.models.len()];
        }
        for slot in 0..self.models.len() {
            let missing: Vec<usize> = indices.iter().copied().filter(|&i| self.cache[slot][i].is_none()).collect();
            if missing.is_empty() {
                continue;
            }
            let embeddings = self.models[slot].embed(space, &missing)?;
            for (i, e) in missing.into_iter().zip(embeddings) {
                self.cache[slot][i] = Some(e);
            }
        }
        Ok(())
    }

    fn trained_indices(&self, space: &SearchSpace) -> Result<Vec<usize>> {
        self.trained
            .iter()
            .map(|r| {
                space.index_of(r.graph.id()).ok_or_else(|| Error::Validation {
                    id: r.graph.id().to_string(),
                    message: "evaluated cell is not part of the search space".into(),
                })
            })
            .collect()
    }

    fn objective_values(&self, k: usize) -> Vec<f64> {
        self.trained.iter().map(|r| r.objectives.values()[k]).collect()
    }

    fn retrain_models(&mut self, cfg: &SearchConfig, space: &SearchSpace, train: &TrainConfig) -> Result<()> {
        let indices = self.trained_indices(space)?;
        for (slot, k) in self.objectives.costly_indices().into_iter().enumerate() {
            let values = self.objective_values(k);
            let scaling = TargetScaling::fit(&self.objectives.objectives()[k], &values);
            let targets: Vec<f64> = values.iter().map(|&v| scaling.apply(v)).collect();
            let tc = TrainConfig {
                seed: derive_seed(cfg.seed, ((self.iteration as u64) << 8) | slot as u64),
                ..train.clone()
            };
            self.models[slot] = self.models[slot].retrain(space, &indices, &targets, &tc, cfg.loss_kind)?;
            if let Some(c) = self.cache.get_mut(slot) {
                c.iter_mut().for_each(|e| *e = None);
            }
        }
        Ok(())
    }

    fn refresh_posteriors(&mut self, cfg: &SearchConfig, space: &SearchSpace) -> Result<()> {
        let indices = self.trained_indices(space)?;
        self.ensure_embeddings(space, &indices)?;
        let tr = LogitTransform::default();
        let costly = self.objectives.costly_indices();
        let mut posteriors = Vec::with_capacity(costly.len());
        let mut hypers = Vec::with_capacity(costly.len());
        let mut scalings = Vec::with_capacity(costly.len());
        for (slot, &k) in costly.iter().enumerate() {
            let values = self.objective_values(k);
            let scaling = TargetScaling::fit(&self.objectives.objectives()[k], &values);
            let z = values.iter().map(|&v| logit(scaling.apply(v), tr)).collect::<Result<Vec<_>>>()?;
            let phi: Vec<Vec<f64>> =
                indices.iter().map(|&i| self.cache[slot][i].clone().expect("embedded above")).collect();
            let previous = self.hyperparams.get(slot).copied();
            let hyper = match previous {
                Some(h) if !cfg.reoptimize_hyperparams => h,
                _ if z.len() >= 2 => optimize_hyperparams_logit(&phi, &z, HyperSearch::default())?,
                _ => {
                    HyperparamFit { alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA, log_evidence: f64::NAN, degenerate: true }
                }
            };
            posteriors.push(fit_logit_targets(&phi, &z, hyper.alpha, hyper.beta)?);
            hypers.push(hyper);
            scalings.push(scaling);
        }
        self.posteriors = posteriors;
        self.hyperparams = hypers;
        self.scalings = scalings;
        Ok(())
    }
}

pub(super) fn build_report<M>(
    state: &SearchState<M>,
    cfg: &SearchConfig,
    method: &str,
    settings: BTreeMap<String, serde_json::Value>,
) -> SearchReport {
    SearchReport {
        method: method.to_string(),
        config: cfg.clone(),
        seed: cfg.seed,
        objectives: state.objectives.clone(),
        settings,
        per_iteration: state.trace.clone(),
        final_front: state
            .estimated_front
            .iter()
            .map(|&i| FrontMember {
                id: state.trained[i].graph.id().to_string(),
                graph: state.trained[i].graph.clone(),
                objectives: state.trained[i].objectives.clone(),
            })
            .collect(),
        evaluations_used: state.evaluations_used,
        failed_evaluations: state.failed.len(),
        evaluations_to_optimum: state.evaluations_to_optimum,
        optimal_front_recovered: None,
        stop_reason: state.stop.unwrap_or(StopReason::Budget),
    }
}

fn fresh_models(cfg: &SearchConfig, space: &SearchSpace, costly: usize) -> Result<Vec<SurrogateModel>> {
    (0..costly)
        .map(|slot| {
            let seed = derive_seed(cfg.seed, 0xC0FFEE + slot as u64);
            Ok(match cfg.surrogate {
                SurrogateKind::Gcn => {
                    let c =
                        GcnConfig::new(space.vocab().feature_width()).with_hidden(cfg.hidden).with_layers(cfg.layers);
                    SurrogateModel::Gcn(GcnParams::new(c, seed)?)
                }
                SurrogateKind::Mlp => {
                    let mut c = MlpConfig::new(space.max_nodes(), space.vocab().len()).padded();
                    c.hidden = vec![cfg.hidden; 2];
                    SurrogateModel::Mlp(MlpParams::new(c, seed)?)
                }
            })
        })
        .collect()
}

/// Samples and evaluates the initial cells, trains fresh surrogates and
/// fits the Bayesian heads.
pub fn initialize(cfg: &SearchConfig, oracle: &impl EvaluationOracle, space: &SearchSpace) -> Result<SearchState> {
    let models = fresh_models(cfg, space, oracle.objectives().costly_indices().len())?;
    initialize_with_models(cfg, oracle, space, models, true)
}

/// As [`initialize`], starting from the given surrogates; `train` decides
/// whether they are fit on the initial samples before the heads.
pub fn initialize_with_models<M: FeatureModel>(
    cfg: &SearchConfig,
    oracle: &impl EvaluationOracle,
    space: &SearchSpace,
    models: Vec<M>,
    train: bool,
) -> Result<SearchState<M>> {
    cfg.validate_for(space.len())?;
    let objectives = oracle.objectives().clone();
    if models.len() != objectives.costly_indices().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} surrogates for {} costly objectives",
            models.len(),
            objectives.costly_indices().len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picks = rand::seq::index::sample(&mut rng, space.len(), cfg.init_samples).into_vec();
    let mut state = SearchState::empty(objectives, space.vocab().names().to_vec(), rng, models);
    let truth = Truth::of(oracle);
    for i in picks {
        state.record(cfg, oracle, &truth, space.graph(i))?;
    }
    if state.trained.is_empty() {
        return Err(Error::InsufficientData("every initial evaluation failed".into()));
    }
    state.update_front()?;
    if train {
        state.retrain_models(cfg, space, &cfg.train)?;
    }
    state.refresh_posteriors(cfg, space)?;
    state.summarize();
    state.check_stop(cfg);
    Ok(state)
}

/// Candidate positions for the next iteration.
pub fn sample_pool<M: FeatureModel>(
    cfg: &SearchConfig,
    state: &mut SearchState<M>,
    space: &SearchSpace,
) -> Result<Vec<usize>> {
    let mut taken: HashSet<&str> = state.trained_ids();
    taken.extend(state.failed.iter().map(String::as_str));
    let open: Vec<usize> = (0..space.len()).filter(|&i| !taken.contains(space.graph(i).id())).collect();
    if open.is_empty() {
        return Err(Error::SpaceExhausted);
    }
    if cfg.pool_size == 0 || cfg.pool_size >= open.len() {
        return Ok(open);
    }
    let mut picked: Vec<usize> =
        rand::seq::index::sample(&mut state.rng, open.len(), cfg.pool_size).into_iter().map(|j| open[j]).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// One iteration: score a pool, evaluate the best batch, update the heads
/// (and every `k`-th iteration the surrogates).
pub fn step<M: FeatureModel>(
    cfg: &SearchConfig,
    state: &mut SearchState<M>,
    oracle: &impl EvaluationOracle,
    space: &SearchSpace,
) -> Result<()> {
    state.check_stop(cfg);
    if state.stop.is_some() {
        return Ok(());
    }
    let pool = match sample_pool(cfg, state, space) {
        Ok(p) => p,
        Err(Error::SpaceExhausted) => {
            state.stop = Some(StopReason::Exhausted);
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    state.ensure_embeddings(space, &pool)?;

    let costly = state.objectives.costly_indices();
    let mut incumbent = vec![0.0; state.objectives.len()];
    for (slot, &k) in costly.iter().enumerate() {
        incumbent[k] = state.posteriors[slot].targets.max();
    }
    let ctx = AcquisitionContext { incumbent, posteriors: state.posteriors.clone() };
    let mode = if cfg.point_estimate_only { ScoreMode::PointEstimate } else { ScoreMode::ExpectedImprovement };
    let graphs: Vec<&ArchGraph> = pool.iter().map(|&i| space.graph(i)).collect();
    let cache = &state.cache;
    let scores = score_candidates(
        &graphs,
        &ctx,
        &state.objectives,
        mode,
        |slot, i| Ok(cache[slot][pool[i]].clone().expect("pool embedded")),
        |k, i| oracle.exact(k, graphs[i]),
    )?;
    let remaining = cfg.max_evaluations.map_or(usize::MAX, |b| b.saturating_sub(state.evaluations_used));
    let l = cfg.batch_size_l.min(remaining);
    let chosen = select_batch(&graphs, &scores, l, &HashSet::new())?;

    let truth = Truth::of(oracle);
    for p in chosen {
        state.record(cfg, oracle, &truth, graphs[p])?;
    }
    state.iteration += 1;
    state.update_front()?;
    if state.iteration.is_multiple_of(cfg.retrain_period_k) {
        state.retrain_models(cfg, space, &cfg.retrain)?;
    }
    state.refresh_posteriors(cfg, space)?;
    state.summarize();
    state.check_stop(cfg);
    Ok(())
}

/// Steps until a stop criterion fires and reports.
pub fn run_state<M: FeatureModel>(
    cfg: &SearchConfig,
    mut state: SearchState<M>,
    oracle: &impl EvaluationOracle,
    space: &SearchSpace,
) -> Result<SearchReport> {
    while state.stop.is_none() {
        step(cfg, &mut state, oracle, space)?;
    }
    Ok(finish(&state, cfg, oracle, "bogcn"))
}

pub(super) fn finish<M>(
    state: &SearchState<M>,
    cfg: &SearchConfig,
    oracle: &impl EvaluationOracle,
    method: &str,
) -> SearchReport {
    let mut settings = BTreeMap::new();
    if method == "bogcn" {
        settings.insert("point_estimate_only".into(), serde_json::Value::Bool(cfg.point_estimate_only));
    }
    let mut report = build_report(state, cfg, method, settings);
    if let Some(ids) = oracle.optimal_front() {
        if !ids.is_empty() {
            report.optimal_front_recovered = Some(state.optimal_found as f64 / ids.len() as f64);
        }
    }
    report
}

/// Full search from scratch.
pub fn run(cfg: &SearchConfig, oracle: &impl EvaluationOracle, space: &SearchSpace) -> Result<SearchReport> {
    let state = initialize(cfg, oracle, space)?;
    run_state(cfg, state, oracle, space)
}

/// Like [`run`], writing the state to `checkpoint` after every iteration and
/// resuming from it when the file already exists.
pub fn run_resumable(
    cfg: &SearchConfig,
    oracle: &impl EvaluationOracle,
    space: &SearchSpace,
    checkpoint: &Path,
) -> Result<SearchReport> {
    let mut state: SearchState = if checkpoint.exists() {
        load_state(checkpoint)?
    } else {
        let s = initialize(cfg, oracle, space)?;
        save_state(checkpoint, &s)?;
        s
    };
    while state.stop.is_none() {
        step(cfg, &mut state, oracle, space)?;
        save_state(checkpoint, &state)?;
    }
    Ok(finish(&state, cfg, oracle, "bogcn"))
}

/// Carries the surrogates of a finished (smaller) search into a new space;
/// the Bayesian heads start over on the new space's initial samples.
pub fn transfer_pretrain<M: FeatureModel>(
    small: &SearchState<M>,
    cfg: &SearchConfig,
    oracle: &impl EvaluationOracle,
    large: &SearchSpace,
) -> Result<SearchState<M>> {
    if small.vocab.as_slice() != large.vocab().names() {
        return Err(Error::InvalidVocabulary(format!(
            "pretrained on {:?}, target space uses {:?}",
            small.vocab,
            large.vocab().names()
        )));
    }
    initialize_with_models(cfg, oracle, large, small.models.clone(), false)
}

pub fn save_state<M: FeatureModel>(path: &Path, state: &SearchState<M>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec(state)?)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_state<M: FeatureModel>(path: &Path) -> Result<SearchState<M>> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}
