use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::{finish, SearchState, StopReason, Truth};
use super::report::SearchReport;
use super::{EvaluationOracle, SearchConfig, SearchSpace};
use crate::error::Result;

/// Evaluates `order` front to back, summarizing after the first
/// `init_samples` calls and then after every `batch_size_l` calls.
fn evaluate_in_order(
    cfg: &SearchConfig,
    oracle: &impl EvaluationOracle,
    space: &SearchSpace,
    state: &mut SearchState<()>,
    truth: &Option<Truth>,
    next: &mut dyn FnMut(&SearchState<()>, &mut ChaCha8Rng) -> Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut in_batch = 0;
    let mut batch_target = cfg.init_samples;
    loop {
        state.check_stop(cfg);
        if state.stop.is_some() {
            break;
        }
        let Some(i) = next(state, rng) else {
            state.stop = Some(StopReason::Exhausted);
            break;
        };
        state.record(cfg, oracle, truth, space.graph(i))?;
        in_batch += 1;
        if in_batch == batch_target {
            state.update_front()?;
            state.summarize();
            state.iteration += 1;
            in_batch = 0;
            batch_target = cfg.batch_size_l;
        }
    }
    if in_batch > 0 || state.trace.is_empty() {
        state.update_front()?;
        state.summarize();
    }
    Ok(())
}

/// Uniform sampling without replacement.
pub fn run_random_baseline(
    cfg: &SearchConfig,
    oracle: &impl EvaluationOracle,
    space: &SearchSpace,
) -> Result<SearchReport> {
    cfg.validate_for(space.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..space.len()).collect();
    order.shuffle(&mut rng);
    let mut state =
        SearchState::empty(oracle.objectives().clone(), space.vocab().names().to_vec(), rng.clone(), Vec::new());
    let truth = Truth::of(oracle);
    let mut cursor = 0;
    let mut next = |_: &SearchState<()>, _: &mut ChaCha8Rng| {
        let i = order.get(cursor).copied();
        cursor += 1;
        i
    };
    evaluate_in_order(cfg, oracle, space, &mut state, &truth, &mut next, &mut rng)?;
    Ok(finish(&state, cfg, oracle, "random"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population: usize,
    pub sample_size: usize,
    /// Tournaments retried when a parent has no unevaluated neighbour.
    pub retries: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self { population: 50, sample_size: 10, retries: 10 }
    }
}

/// Regularized (aging) evolution: tournament selection, single-edit
/// mutation within the space, removal of the oldest member.
///
/// Fitness is the first objective, direction-adjusted. The first
/// `population` members are uniform random samples.
pub fn run_evolution_baseline(
    cfg: &SearchConfig,
    evo: &EvolutionConfig,
    oracle: &impl EvaluationOracle,
    space: &SearchSpace,
) -> Result<SearchReport> {
    cfg.validate_for(space.len())?;
    if evo.population == 0 || evo.sample_size == 0 {
        return Err(crate::error::Error::InvalidArgument("population and sample_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state =
        SearchState::empty(oracle.objectives().clone(), space.vocab().names().to_vec(), rng.clone(), Vec::new());
    let truth = Truth::of(oracle);
    let direction = oracle.objectives().objectives()[0].direction;
    let vocab_size = space.vocab().len();
    let mut seen: HashSet<usize> = HashSet::new();
    let mut population = AgingPopulation::new(evo.population);
    let mut last_len = 0usize;
    let cfg_evo = SearchConfig { init_samples: evo.population.min(space.len()), ..cfg.clone() };

    let mut next = |state: &SearchState<()>, rng: &mut ChaCha8Rng| -> Option<usize> {
        // absorb the outcome of the previous pick
        if state.trained.len() > last_len {
            let rec = state.trained.last().unwrap();
            let idx = space.index_of(rec.graph.id()).unwrap();
            population.push(idx, direction.orient(rec.objectives.values()[0]));
            last_len = state.trained.len();
        }
        let unevaluated = |i: usize, seen: &HashSet<usize>| !seen.contains(&i);
        let pick = if population.len() < evo.population && seen.len() < evo.population {
            random_unseen(space.len(), &seen, rng)
        } else {
            let mut child = None;
            for _ in 0..=evo.retries {
                if population.is_empty() {
                    break;
                }
                let k = evo.sample_size.min(population.len());
                let contenders = rand::seq::index::sample(rng, population.len(), k);
                let parent = contenders
                    .iter()
                    .map(|j| population.members[j])
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
                    .unwrap();
                let options: Vec<usize> = space
                    .graph(parent)
                    .single_edit_neighbors(vocab_size)
                    .iter()
                    .filter_map(|g| space.index_of(g.id()))
                    .filter(|&i| unevaluated(i, &seen))
                    .collect();
                if !options.is_empty() {
                    child = Some(options[rng.gen_range(0..options.len())]);
                    break;
                }
            }
            child.or_else(|| random_unseen(space.len(), &seen, rng))
        };
        if let Some(i) = pick {
            seen.insert(i);
        }
        pick
    };
    evaluate_in_order(&cfg_evo, oracle, space, &mut state, &truth, &mut next, &mut rng)?;
    let mut report = finish(&state, cfg, oracle, "evolution");
    report.settings = BTreeMap::from([
        ("population".to_string(), serde_json::json!(evo.population)),
        ("sample_size".to_string(), serde_json::json!(evo.sample_size)),
        ("retries".to_string(), serde_json::json!(evo.retries)),
    ]);
    Ok(report)
}

/// Fixed-capacity queue of `(space index, fitness)`, oldest first.
#[derive(Debug, Clone)]
struct AgingPopulation {
    capacity: usize,
    members: VecDeque<(usize, f64)>,
}

impl AgingPopulation {
    fn new(capacity: usize) -> Self {
        Self { capacity, members: VecDeque::with_capacity(capacity + 1) }
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Adds a member and returns the one aged out, if any.
    fn push(&mut self, index: usize, fitness: f64) -> Option<(usize, f64)> {
        self.members.push_back((index, fitness));
        (self.members.len() > self.capacity).then(|| self.members.pop_front().unwrap())
    }
}

fn random_unseen(len: usize, seen: &HashSet<usize>, rng: &mut ChaCha8Rng) -> Option<usize> {
    if seen.len() >= len {
        return None;
    }
    if seen.len() * 2 < len {
        loop {
            let i = rng.gen_range(0..len);
            if !seen.contains(&i) {
                return Some(i);
            }
        }
    }
    let open: Vec<usize> = (0..len).filter(|i| !seen.contains(i)).collect();
    Some(open[rng.gen_range(0..open.len())])
}
