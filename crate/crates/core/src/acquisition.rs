//! Expected Improvement, Pareto dominance and batch selection.

use std::cmp::Ordering;
use std::collections::HashSet;

use libm::erfc;
use rayon::prelude::*;

use crate::blr::BlrPosterior;
use crate::error::{Error, Result};
use crate::graph::ArchGraph;
use crate::objective::{ObjectiveSpec, ObjectiveVector};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `gamma * Phi(gamma) + pdf(gamma)` for `gamma <= 0`, evaluated without
/// cancellation in the lower tail.
fn standardized_ei(gamma: f64) -> f64 {
    if gamma > -3.0 {
        return gamma * normal_cdf(gamma) + normal_pdf(gamma);
    }
    // x = -gamma >= 3. With the Mills ratio written as 1 / (x + c) and
    // c = 1 / (x + 2 / (x + 3 / (x + ...))), the bracket equals pdf(x) c / (x + c).
    let x = -gamma;
    let mut tail = 0.0;
    for k in (2..=200).rev() {
        tail = k as f64 / (x + tail);
    }
    let c = 1.0 / (x + tail);
    normal_pdf(x) * c / (x + c)
}

/// `sigma * (gamma Phi(gamma) + pdf(gamma))` with `gamma = (mu - f_best) / sigma`.
/// Zero variance yields zero.
pub fn expected_improvement(mu: f64, variance: f64, f_best: f64) -> Result<f64> {
    if variance < 0.0 || variance.is_nan() {
        return Err(Error::InvalidArgument(format!("negative variance {variance}")));
    }
    if variance == 0.0 {
        return Ok(0.0);
    }
    let sigma = variance.sqrt();
    let diff = mu - f_best;
    let gamma = diff / sigma;
    // above the incumbent, gamma Phi(gamma) + pdf(gamma) = gamma + (the same at -gamma)
    let ei = if gamma > 0.0 { diff + sigma * standardized_ei(-gamma) } else { sigma * standardized_ei(gamma) };
    Ok(ei.max(0.0))
}

/// `a` is at least as good as `b` everywhere and strictly better somewhere.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector, spec: &ObjectiveSpec) -> Result<bool> {
    if a.len() != spec.len() || b.len() != spec.len() {
        return Err(Error::DimensionMismatch(format!(
            "comparing vectors of length {} and {} under {} objectives",
            a.len(),
            b.len(),
            spec.len()
        )));
    }
    Ok(dominates_oriented(&spec.orient(a), &spec.orient(b)))
}

/// Dominance on vectors that are already larger-is-better.
pub fn dominates_oriented(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

fn lex_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Indices (ascending) of the non-dominated members of `subset`, larger-is-better.
fn front_of(points: &[Vec<f64>], subset: &[usize]) -> Vec<usize> {
    let mut order = subset.to_vec();
    order.sort_by(|&i, &j| lex_desc(&points[i], &points[j]).then(i.cmp(&j)));
    // A dominator sorts strictly before what it dominates, so comparing
    // against the members kept so far is enough.
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates_oriented(&points[f], &points[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

/// Indices of all points not dominated by any other point, ascending.
pub fn pareto_front(points: &[ObjectiveVector], spec: &ObjectiveSpec) -> Result<Vec<usize>> {
    if points.iter().any(|p| p.len() != spec.len()) {
        return Err(Error::DimensionMismatch("objective vector length differs from the objective count".into()));
    }
    let oriented: Vec<Vec<f64>> = points.iter().map(|p| spec.orient(p)).collect();
    let all: Vec<usize> = (0..points.len()).collect();
    Ok(front_of(&oriented, &all))
}

/// Successive non-dominated fronts of larger-is-better vectors, computed
/// lazily until at least `want` points are covered.
pub fn non_dominated_sort(points: &[Vec<f64>], want: usize) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    let mut covered = 0;
    while covered < want && !remaining.is_empty() {
        let front = front_of(points, &remaining);
        covered += front.len();
        let taken: HashSet<usize> = front.iter().copied().collect();
        remaining.retain(|i| !taken.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Inputs to pool scoring: per-objective incumbents on the scoring scale
/// and one posterior per costly objective (in `spec.costly_indices()` order).
#[derive(Debug, Clone)]
pub struct AcquisitionContext {
    pub incumbent: Vec<f64>,
    pub posteriors: Vec<BlrPosterior>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    ExpectedImprovement,
    /// Predictive mean only, no exploration bonus.
    PointEstimate,
}

/// Score vectors for every pool member, larger-is-better per component.
///
/// `embed(slot, i)` returns the embedding of pool member `i` under the
/// surrogate of the `slot`-th costly objective; `exact(objective, i)` returns
/// the raw value of a non-costly objective.
pub fn score_candidates<E, X>(
    pool: &[&ArchGraph],
    ctx: &AcquisitionContext,
    spec: &ObjectiveSpec,
    mode: ScoreMode,
    embed: E,
    exact: X,
) -> Result<Vec<ObjectiveVector>>
where
    E: Fn(usize, usize) -> Result<Vec<f64>> + Sync,
    X: Fn(usize, usize) -> Result<f64> + Sync,
{
    let costly = spec.costly_indices();
    if ctx.posteriors.len() != costly.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} posteriors for {} costly objectives",
            ctx.posteriors.len(),
            costly.len()
        )));
    }
    if ctx.incumbent.len() != spec.len() || ctx.incumbent.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("incumbent must be a finite vector per objective".into()));
    }
    let tag = |i: usize, e: Error| match e {
        e @ Error::Oracle { .. } => e,
        e => Error::Oracle { id: pool[i].id().to_string(), message: e.to_string() },
    };
    (0..pool.len())
        .into_par_iter()
        .map(|i| {
            let mut v = Vec::with_capacity(spec.len());
            let mut slot = 0;
            for (k, o) in spec.objectives().iter().enumerate() {
                if o.costly {
                    let phi = embed(slot, i).map_err(|e| tag(i, e))?;
                    let (mu, var) = ctx.posteriors[slot].predict(&phi).map_err(|e| tag(i, e))?;
                    v.push(match mode {
                        ScoreMode::ExpectedImprovement => expected_improvement(mu, var, ctx.incumbent[k])?,
                        ScoreMode::PointEstimate => mu,
                    });
                    slot += 1;
                } else {
                    v.push(o.direction.orient(exact(k, i).map_err(|e| tag(i, e))?));
                }
            }
            Ok(ObjectiveVector(v))
        })
        .collect()
}

/// Average ranks in `[0, 1]` (0 for the smallest value).
fn normalized_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut s = 0;
    while s < n {
        let mut e = s;
        while e + 1 < n && values[order[e + 1]] == values[order[s]] {
            e += 1;
        }
        let r = (s + e) as f64 / 2.0;
        for &i in &order[s..=e] {
            ranks[i] = r / (n - 1) as f64;
        }
        s = e + 1;
    }
    ranks
}

/// Positions in `pool` of up to `l` candidates, fronts first.
///
/// Excluded ids are dropped before ranking. Inside a front, candidates are
/// ordered by the sum of their per-component normalized ranks (descending),
/// then by id.
pub fn select_batch(
    pool: &[&ArchGraph],
    scores: &[ObjectiveVector],
    l: usize,
    exclude: &HashSet<String>,
) -> Result<Vec<usize>> {
    if l == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if pool.len() != scores.len() {
        return Err(Error::DimensionMismatch("scores are not aligned with the pool".into()));
    }
    let keep: Vec<usize> = (0..pool.len()).filter(|&i| !exclude.contains(pool[i].id())).collect();
    if keep.is_empty() {
        return Ok(Vec::new());
    }
    let m = scores[keep[0]].len();
    if keep.iter().any(|&i| scores[i].len() != m || scores[i].values().iter().any(|v| v.is_nan())) {
        return Err(Error::InvalidArgument("ragged or NaN score vectors".into()));
    }
    let points: Vec<Vec<f64>> = keep.iter().map(|&i| scores[i].0.clone()).collect();
    let mut scalar = vec![0.0; keep.len()];
    for c in 0..m {
        let column: Vec<f64> = points.iter().map(|p| p[c]).collect();
        for (s, r) in scalar.iter_mut().zip(normalized_ranks(&column)) {
            *s += r;
        }
    }
    let mut out = Vec::with_capacity(l);
    for mut front in non_dominated_sort(&points, l) {
        front
            .sort_by(|&a, &b| scalar[b].total_cmp(&scalar[a]).then_with(|| pool[keep[a]].id().cmp(pool[keep[b]].id())));
        for j in front {
            if out.len() == l {
                return Ok(out);
            }
            out.push(keep[j]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blr::blr_fit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(dirs: &str) -> ObjectiveSpec {
        let items: Vec<String> = dirs.split(',').enumerate().map(|(i, d)| format!("f{i}:{d}")).collect();
        ObjectiveSpec::parse(&items.join(",")).unwrap()
    }

    fn ov(v: &[f64]) -> ObjectiveVector {
        ObjectiveVector(v.to_vec())
    }

    fn chain(n: usize, op: usize) -> ArchGraph {
        let mut adj = vec![vec![0u8; n]; n];
        for i in 0..n - 1 {
            adj[i][i + 1] = 1;
        }
        let mut ops = vec![op; n];
        ops[0] = 0;
        ArchGraph::new(adj, ops).unwrap()
    }

    fn distinct_graphs(count: usize) -> Vec<ArchGraph> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut frontier = vec![chain(5, 2)];
        while out.len() < count {
            let g = frontier.remove(0);
            if seen.insert(g.id().to_string()) {
                frontier.extend(g.single_edit_neighbors(5));
                out.push(g);
            }
        }
        out
    }

    #[test]
    fn ei_examples() {
        assert_eq!(expected_improvement(3.0, 0.0, 1.0).unwrap(), 0.0);
        let at_par = expected_improvement(0.7, 1.0, 0.7).unwrap();
        assert!((at_par - INV_SQRT_2PI).abs() < 1e-15);
        assert!((expected_improvement(10.0, 1.0, 0.0).unwrap() - 10.0).abs() < 1e-6);
        assert!(expected_improvement(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn ei_grows_with_sigma_far_above_the_incumbent() {
        let (mu, best) = (8.011343800030723, -3.9075395414454706);
        let mut last = 0.0;
        for k in 0..2000 {
            let sd = 0.5 + k as f64 * 1e-3;
            let ei = expected_improvement(mu, sd * sd, best).unwrap();
            assert!(ei >= last, "sd {sd}: {ei} < {last}");
            assert!(ei >= mu - best);
            last = ei;
        }
    }

    #[test]
    fn ei_tail_matches_high_precision_values() {
        // sigma = 1, gamma in {-3, -5, -10, -20, -35}; reference values from 50-digit arithmetic.
        let cases = [
            (-3.0, 3.821_543_170_477_236e-4),
            (-5.0, 5.346_165_533_832_815e-8),
            (-10.0, 7.474_560_254_589_328e-25),
            (-20.0, 1.370_012_494_729_58e-90),
            (-35.0, 3.208_804_482_602_477e-270),
        ];
        for (g, want) in cases {
            let got = expected_improvement(g, 1.0, 0.0).unwrap();
            assert!(((got - want) / want).abs() < 1e-10, "gamma {g}: {got} vs {want}");
        }
    }

    #[test]
    fn ei_branches_join_smoothly() {
        let below = standardized_ei(-3.0 - 1e-12);
        let above = standardized_ei(-3.0 + 1e-12);
        assert!(below <= above);
        assert!(((above - below) / above).abs() < 1e-10);
    }

    #[test]
    fn dominance_examples() {
        let s = spec("max,min");
        assert!(dominates(&ov(&[0.9, 5e6]), &ov(&[0.8, 6e6]), &s).unwrap());
        assert!(!dominates(&ov(&[0.9, 5e6]), &ov(&[0.9, 5e6]), &s).unwrap());
        assert!(!dominates(&ov(&[0.9, 6e6]), &ov(&[0.8, 5e6]), &s).unwrap());
        assert!(!dominates(&ov(&[0.8, 5e6]), &ov(&[0.9, 6e6]), &s).unwrap());
        assert!(dominates(&ov(&[0.9]), &ov(&[0.8, 1.0]), &s).is_err());
    }

    #[test]
    fn front_examples() {
        let s = spec("max,max");
        assert_eq!(pareto_front(&[ov(&[1.0, 1.0]), ov(&[2.0, 2.0])], &s).unwrap(), vec![1]);
        let one = spec("max");
        let pts = [ov(&[0.3]), ov(&[0.9]), ov(&[0.1]), ov(&[0.9])];
        assert_eq!(pareto_front(&pts, &one).unwrap(), vec![1, 3]);
        let dup = [ov(&[1.0, 0.0]), ov(&[0.0, 1.0]), ov(&[1.0, 0.0]), ov(&[0.5, 0.5]), ov(&[0.4, 0.4])];
        assert_eq!(pareto_front(&dup, &s).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn front_matches_all_pairs_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = spec("max,min,max");
        let pts: Vec<ObjectiveVector> = (0..1000).map(|_| ov(&[rng.gen(), rng.gen(), rng.gen()])).collect();
        let brute: Vec<usize> =
            (0..pts.len()).filter(|&i| !pts.iter().any(|q| dominates(q, &pts[i], &s).unwrap())).collect();
        assert_eq!(pareto_front(&pts, &s).unwrap(), brute);
    }

    #[test]
    fn sorted_fronts_partition_the_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> =
            (0..200).map(|_| vec![rng.gen_range(0..5) as f64, rng.gen_range(0..5) as f64]).collect();
        let fronts = non_dominated_sort(&pts, usize::MAX);
        let mut all: Vec<usize> = fronts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        for w in fronts.windows(2) {
            for &b in &w[1] {
                assert!(w[0].iter().any(|&a| dominates_oriented(&pts[a], &pts[b])));
            }
        }
    }

    #[test]
    fn single_objective_selection_is_top_l_with_id_ties() {
        let graphs = distinct_graphs(30);
        let pool: Vec<&ArchGraph> = graphs.iter().collect();
        let scores: Vec<ObjectiveVector> = (0..30).map(|i| ov(&[(i % 7) as f64])).collect();
        let picked = select_batch(&pool, &scores, 8, &HashSet::new()).unwrap();
        let mut expected: Vec<usize> = (0..30).collect();
        expected.sort_by(|&a, &b| scores[b].0[0].total_cmp(&scores[a].0[0]).then(pool[a].id().cmp(pool[b].id())));
        assert_eq!(picked, expected[..8]);
        assert_eq!(select_batch(&pool, &scores, 100, &HashSet::new()).unwrap().len(), 30);
    }

    #[test]
    fn selection_respects_exclusions() {
        let graphs = distinct_graphs(10);
        let pool: Vec<&ArchGraph> = graphs.iter().collect();
        let scores: Vec<ObjectiveVector> = (0..10).map(|i| ov(&[i as f64])).collect();
        let exclude: HashSet<String> = graphs[5..].iter().map(|g| g.id().to_string()).collect();
        let picked = select_batch(&pool, &scores, 10, &exclude).unwrap();
        assert_eq!(picked, vec![4, 3, 2, 1, 0]);
        let everything: HashSet<String> = graphs.iter().map(|g| g.id().to_string()).collect();
        assert!(select_batch(&pool, &scores, 3, &everything).unwrap().is_empty());
        assert!(select_batch(&pool, &scores, 0, &exclude).is_err());
    }

    #[test]
    fn selection_fills_from_later_fronts() {
        let graphs = distinct_graphs(4);
        let pool: Vec<&ArchGraph> = graphs.iter().collect();
        let scores = vec![ov(&[1.0, 0.0]), ov(&[0.0, 1.0]), ov(&[0.5, 0.5]), ov(&[0.1, 0.1])];
        let picked = select_batch(&pool, &scores, 4, &HashSet::new()).unwrap();
        assert_eq!(picked[3], 3);
        // rank sums: [0.667+0, 0+0.667, 0.333+0.333, ...] tie, so the first three follow id order
        let mut head = picked[..3].to_vec();
        head.sort_unstable();
        assert_eq!(head, vec![0, 1, 2]);
    }

    #[test]
    fn scoring_uses_posteriors_and_exact_values() {
        let graphs = distinct_graphs(6);
        let pool: Vec<&ArchGraph> = graphs.iter().collect();
        let embeds: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64 / 5.0]).collect();
        let post = blr_fit(&embeds, &[0.2, 0.3, 0.4, 0.5, 0.6, 0.7], 1.0, 10.0).unwrap();
        let s = ObjectiveSpec::parse("accuracy:max,params:min:exact").unwrap();
        let ctx = AcquisitionContext { incumbent: vec![0.5, 0.0], posteriors: vec![post.clone()] };
        let run = |mode| {
            score_candidates(&pool, &ctx, &s, mode, |_, i| Ok(embeds[i].clone()), |_, i| Ok(100.0 * i as f64)).unwrap()
        };
        let ei = run(ScoreMode::ExpectedImprovement);
        let mu = run(ScoreMode::PointEstimate);
        for i in 0..6 {
            let (m, v) = post.predict(&embeds[i]).unwrap();
            assert_eq!(ei[i].0[0], expected_improvement(m, v, 0.5).unwrap());
            assert_eq!(mu[i].0[0], m);
            assert_eq!(ei[i].0[1], -100.0 * i as f64);
        }
        let short = AcquisitionContext { incumbent: vec![0.5], posteriors: vec![post] };
        assert!(score_candidates(
            &pool,
            &short,
            &s,
            ScoreMode::PointEstimate,
            |_, i| Ok(embeds[i].clone()),
            |_, _| Ok(0.0)
        )
        .is_err());
    }

    #[test]
    fn scoring_errors_name_the_candidate() {
        let graphs = distinct_graphs(3);
        let pool: Vec<&ArchGraph> = graphs.iter().collect();
        let post = blr_fit(&[vec![1.0], vec![2.0]], &[0.4, 0.6], 1.0, 1.0).unwrap();
        let ctx = AcquisitionContext { incumbent: vec![0.0], posteriors: vec![post] };
        let err = score_candidates(
            &pool,
            &ctx,
            &spec("max"),
            ScoreMode::ExpectedImprovement,
            |_, _| Ok(vec![1.0, 2.0]),
            |_, _| Ok(0.0),
        )
        .unwrap_err();
        assert!(err.to_string().contains(graphs[0].id()) || graphs.iter().any(|g| err.to_string().contains(g.id())));
    }
}
