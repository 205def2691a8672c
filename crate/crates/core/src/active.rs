//! Choosing the next concept pair to ask about.
//!
//! Concepts are grouped by co-reference (a logistic similarity classifier
//! followed by correlation clustering), and the default heuristic asks about
//! pairs that straddle groups, starting from the most dissimilar and moving
//! toward similar ones as the budget is spent. Six classic active learning
//! strategies are available for comparison.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{cosine, Concept, DocumentCluster, EmbeddingTable};
use crate::error::{Error, Result};
use crate::preflearn::{self, PreferenceRecord, UtilityModel};
use crate::scalar::Scalar;
use crate::text;

pub const SIMILARITY_FEATURES: [&str; 3] = ["levenshtein", "jaccard", "embedding_cosine"];
pub const COMMITTEE_SIZE: usize = 5;
pub const BANDIT_EPSILON: f64 = 0.2;
pub const LOCAL_SEARCH_RESTARTS: usize = 3;
/// Weight of the "unlike previous questions" term in the heuristic cost.
pub const NOVELTY_WEIGHT: f64 = 1.0;
const TIE_EPS: f64 = 1e-12;

fn content_stems(c: &Concept) -> BTreeSet<String> {
    c.surface_tokens()
        .filter(|t| !text::is_stopword(t))
        .map(|t| text::stem(t).to_string())
        .collect()
}

/// `[1 − normalized Levenshtein, Jaccard of stemmed content words, cosine]`.
pub fn similarity_features(a: &Concept, b: &Concept, embeddings: Option<&EmbeddingTable>) -> [f64; 3] {
    let longest = a.surface.chars().count().max(b.surface.chars().count());
    let lev = if longest == 0 {
        1.0
    } else {
        1.0 - strsim::levenshtein(&a.surface, &b.surface) as f64 / longest as f64
    };
    let sa = content_stems(a);
    let sb = content_stems(b);
    let union = sa.union(&sb).count();
    let jaccard = if union == 0 {
        if a.surface == b.surface { 1.0 } else { 0.0 }
    } else {
        sa.intersection(&sb).count() as f64 / union as f64
    };
    let cos = embeddings
        .and_then(|table| {
            let va = table.mean_of(a.surface_tokens())?;
            let vb = table.mean_of(b.surface_tokens())?;
            Some(cosine(&va, &vb).clamp(0.0, 1.0))
        })
        .unwrap_or(0.0);
    [lev, jaccard, cos]
}

/// Which sigmoid turns similarity features into a co-reference probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmoidForm {
    /// `σ(θ·δ + b)`.
    #[default]
    Logistic,
    /// `1 / (1 + exp(θ₀ (1 − z)))` with `z` the mean similarity feature.
    ScalarExponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityModel<T> {
    pub theta: Vec<T>,
    pub bias: T,
    #[serde(default)]
    pub form: SigmoidForm,
}

/// Hand-labeled similarity vectors: near-duplicates and shared-head phrases
/// are co-referent, unrelated surfaces are not.
const COREF_TRAINING: &[([f64; 3], u8)] = &[
    ([1.0, 1.0, 1.0], 1),
    ([0.92, 1.0, 0.0], 1),
    ([0.85, 0.67, 0.0], 1),
    ([0.8, 0.5, 0.9], 1),
    ([0.75, 0.5, 0.0], 1),
    ([0.7, 1.0, 0.0], 1),
    ([0.6, 0.5, 0.8], 1),
    ([0.9, 0.5, 0.0], 1),
    ([0.55, 0.67, 0.7], 1),
    ([0.65, 0.5, 0.6], 1),
    ([0.1, 0.0, 0.1], 0),
    ([0.2, 0.0, 0.0], 0),
    ([0.3, 0.0, 0.3], 0),
    ([0.4, 0.0, 0.0], 0),
    ([0.25, 0.0, 0.5], 0),
    ([0.5, 0.0, 0.2], 0),
    ([0.45, 0.33, 0.0], 0),
    ([0.35, 0.0, 0.4], 0),
    ([0.15, 0.0, 0.0], 0),
    ([0.55, 0.0, 0.0], 0),
];

fn trained_parameters() -> &'static ([f64; 3], f64) {
    static PARAMS: OnceLock<([f64; 3], f64)> = OnceLock::new();
    PARAMS.get_or_init(|| {
        let mut theta = [0.0; 3];
        let mut bias = 0.0;
        let lr = 0.5;
        let l2 = 1e-3;
        let n = COREF_TRAINING.len() as f64;
        for _ in 0..5000 {
            let mut g = [0.0; 3];
            let mut gb = 0.0;
            for (x, y) in COREF_TRAINING {
                let z: f64 = theta.iter().zip(x).map(|(t, v)| t * v).sum::<f64>() + bias;
                let r = *y as f64 - z.sigmoid();
                g.iter_mut().zip(x).for_each(|(gi, v)| *gi += r * v);
                gb += r;
            }
            for k in 0..3 {
                theta[k] += lr * (g[k] / n - l2 * theta[k]);
            }
            bias += lr * gb / n;
        }
        (theta, bias)
    })
}

impl<T: Scalar> SimilarityModel<T> {
    pub fn new(theta: Vec<T>, bias: T, form: SigmoidForm) -> Self {
        Self { theta, bias, form }
    }

    /// Logistic regression fitted on the bundled co-reference examples.
    pub fn default_trained() -> Self {
        let (theta, bias) = trained_parameters();
        Self {
            theta: theta.iter().map(|&v| T::of(v)).collect(),
            bias: T::of(*bias),
            form: SigmoidForm::Logistic,
        }
    }

    pub fn probability_from_features(&self, delta: &[f64; 3]) -> T {
        match self.form {
            SigmoidForm::Logistic => {
                let z: T = self.theta.iter().zip(delta).map(|(&t, &d)| t * T::of(d)).sum();
                (z + self.bias).sigmoid()
            }
            SigmoidForm::ScalarExponent => {
                let z = T::of(delta.iter().sum::<f64>() / delta.len() as f64);
                let theta = self.theta.first().copied().unwrap_or_else(T::zero);
                (-(theta * (T::one() - z))).sigmoid()
            }
        }
    }
}

pub fn coreference_probability<T: Scalar>(
    model: &SimilarityModel<T>,
    a: &Concept,
    b: &Concept,
    embeddings: Option<&EmbeddingTable>,
) -> T {
    model.probability_from_features(&similarity_features(a, b, embeddings))
}

/// Symmetric matrix of pairwise co-reference probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    n: usize,
    values: Vec<f64>,
}

impl ProbabilityTable {
    /// Build from a closure over `i < j`; the diagonal is 1.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![1.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let p = f(i, j);
                values[i * n + j] = p;
                values[j * n + i] = p;
            }
        }
        Self { n, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::validation("probability table must be square"));
            }
            for (j, &p) in row.iter().enumerate() {
                if i != j && !(p > 0.0 && p < 1.0) {
                    return Err(Error::validation(format!("probability ({i},{j}) = {p} outside (0,1)")));
                }
                if (p - rows[j][i]).abs() > 1e-12 {
                    return Err(Error::validation("probability table must be symmetric"));
                }
            }
            values.extend_from_slice(row);
        }
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Co-reference probabilities for every concept pair of a cluster.
pub fn coreference_table<T: Scalar>(
    model: &SimilarityModel<T>,
    cluster: &DocumentCluster,
    embeddings: Option<&EmbeddingTable>,
) -> ProbabilityTable {
    let n = cluster.concepts.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    coreference_probability(model, &cluster.concepts[i], &cluster.concepts[j], embeddings)
                        .as_f64()
                        .clamp(1e-9, 1.0 - 1e-9)
                })
                .collect()
        })
        .collect();
    ProbabilityTable::from_fn(n, |i, j| rows[i][j - i - 1])
}

/// Assignment of concepts to co-reference groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    /// `labels[i]` is the group of concept `i`; labels are numbered in
    /// order of first appearance.
    pub labels: Vec<usize>,
}

impl Partition {
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = BTreeMap::new();
        let labels = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { labels }
    }

    pub fn singletons(n: usize) -> Self {
        Self { labels: (0..n).collect() }
    }

    pub fn coref(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    pub fn num_groups(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `Σ_{i<j} p·x + (1 − p)(1 − x)`.
    pub fn objective(&self, table: &ProbabilityTable) -> f64 {
        let n = self.labels.len();
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let p = table.get(i, j);
                total += if self.coref(i, j) { p } else { 1.0 - p };
            }
        }
        total
    }
}

enum Move {
    Relabel { item: usize, to: usize },
    Merge { a: usize, b: usize },
}

fn local_search(table: &ProbabilityTable, mut labels: Vec<usize>, max_iters: usize) -> Vec<usize> {
    let n = labels.len();
    let affinity = |i: usize, j: usize| 2.0 * table.get(i, j) - 1.0;
    for _ in 0..max_iters {
        let groups = labels.iter().max().map_or(0, |m| m + 1);
        // sums[i][k] = Σ_{j in group k, j != i} (2p_ij − 1)
        let mut sums = vec![vec![0.0; groups]; n];
        let mut sizes = vec![0usize; groups];
        for i in 0..n {
            sizes[labels[i]] += 1;
            for j in 0..n {
                if i != j {
                    sums[i][labels[j]] += affinity(i, j);
                }
            }
        }
        let mut best: Option<(f64, Move)> = None;
        let mut consider = |gain: f64, mv: Move| {
            if gain > TIE_EPS && best.as_ref().is_none_or(|(g, _)| gain > *g + TIE_EPS) {
                best = Some((gain, mv));
            }
        };
        for i in 0..n {
            let own = sums[i][labels[i]];
            for k in 0..groups {
                if k != labels[i] {
                    consider(sums[i][k] - own, Move::Relabel { item: i, to: k });
                }
            }
            if sizes[labels[i]] > 1 {
                consider(-own, Move::Relabel { item: i, to: groups });
            }
        }
        for a in 0..groups {
            for b in (a + 1)..groups {
                let gain: f64 = (0..n).filter(|&i| labels[i] == a).map(|i| sums[i][b]).sum();
                consider(gain, Move::Merge { a, b });
            }
        }
        match best {
            None => break,
            Some((_, Move::Relabel { item, to })) => labels[item] = to,
            Some((_, Move::Merge { a, b })) => labels.iter_mut().filter(|l| **l == b).for_each(|l| *l = a),
        }
        labels = Partition::from_labels(&labels).labels;
    }
    labels
}

/// Correlation clustering by greedy local search with seeded restarts.
pub fn partition_concepts(table: &ProbabilityTable, max_iters: usize, seed: u64) -> Result<Partition> {
    let n = table.len();
    if n == 0 {
        return Err(Error::validation("cannot partition an empty concept set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Partition)> = None;
    for restart in 0..LOCAL_SEARCH_RESTARTS {
        let init = if restart == 0 {
            (0..n).collect()
        } else {
            let k = rng.gen_range(1..=n);
            (0..n).map(|_| rng.gen_range(0..k)).collect::<Vec<_>>()
        };
        let init = Partition::from_labels(&init).labels;
        let part = Partition::from_labels(&local_search(table, init, max_iters));
        let obj = part.objective(table);
        if best.as_ref().is_none_or(|(b, _)| obj > *b + TIE_EPS) {
            best = Some((obj, part));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// Unordered pair with the smaller id first.
pub fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Bookkeeping for one elicitation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryState {
    pub budget: usize,
    pub asked: BTreeSet<(usize, usize)>,
    pub history: Vec<PreferenceRecord>,
}

impl QueryState {
    pub fn new(budget: usize) -> Self {
        Self { budget, ..Self::default() }
    }

    pub fn round(&self) -> usize {
        self.asked.len()
    }

    pub fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.asked.len())
    }

    pub fn is_asked(&self, a: usize, b: usize) -> bool {
        self.asked.contains(&ordered(a, b))
    }

    fn ensure_budget(&self) -> Result<()> {
        if self.remaining() == 0 {
            Err(Error::Exhausted)
        } else {
            Ok(())
        }
    }

    /// Record `pair` as asked.
    pub fn mark(&mut self, pair: (usize, usize)) {
        self.asked.insert(ordered(pair.0, pair.1));
    }

    fn unasked_pairs(&self, n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if !self.asked.contains(&(a, b)) {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// How alike two questions are: the better of the two ways of matching
/// their members, averaged over the matched co-reference probabilities.
fn pair_similarity(table: &ProbabilityTable, (a, b): (usize, usize), (c, d): (usize, usize)) -> f64 {
    let straight = (table.get(a, c) + table.get(b, d)) / 2.0;
    let crossed = (table.get(a, d) + table.get(b, c)) / 2.0;
    straight.max(crossed)
}

/// Value at quantile `q` of `values` (nearest-rank on the sorted list).
fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let idx = ((values.len() - 1) as f64 * q.clamp(0.0, 1.0)).floor() as usize;
    values[idx]
}

/// The heuristic's choice for the current round, without recording it.
pub fn heuristic_pick(state: &QueryState, partition: &Partition, table: &ProbabilityTable) -> Result<(usize, usize)> {
    state.ensure_budget()?;
    let n = table.len();
    let unasked = state.unasked_pairs(n);
    if unasked.is_empty() {
        return Err(Error::Exhausted);
    }
    let cross: Vec<_> = unasked.iter().copied().filter(|&(a, b)| !partition.coref(a, b)).collect();
    let candidates = if cross.is_empty() { unasked } else { cross };
    let mut probs: Vec<f64> = candidates.iter().map(|&(a, b)| table.get(a, b)).collect();
    let target = quantile(&mut probs, state.round() as f64 / state.budget.max(1) as f64);
    let mut best: Option<(f64, (usize, usize))> = None;
    for &pair in &candidates {
        let novelty = state
            .asked
            .iter()
            .map(|&prev| pair_similarity(table, pair, prev))
            .fold(0.0, f64::max);
        let cost = (table.get(pair.0, pair.1) - target).abs() + NOVELTY_WEIGHT * novelty;
        if best.is_none_or(|(c, _)| cost < c - TIE_EPS) {
            best = Some((cost, pair));
        }
    }
    Ok(best.expect("candidates are non-empty").1)
}

/// Pick and record the heuristic's pair.
pub fn next_query_heuristic(state: &mut QueryState, partition: &Partition, table: &ProbabilityTable) -> Result<(usize, usize)> {
    let pair = heuristic_pick(state, partition, table)?;
    state.mark(pair);
    Ok(pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Heuristic,
    Random,
    Uncertainty,
    ExpectedModelChange,
    QueryByCommittee,
    Conformal,
    Bandit,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Heuristic,
        Strategy::Random,
        Strategy::Uncertainty,
        Strategy::ExpectedModelChange,
        Strategy::QueryByCommittee,
        Strategy::Conformal,
        Strategy::Bandit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Heuristic => "heuristic",
            Strategy::Random => "random",
            Strategy::Uncertainty => "uncertainty",
            Strategy::ExpectedModelChange => "expected_model_change",
            Strategy::QueryByCommittee => "query_by_committee",
            Strategy::Conformal => "conformal",
            Strategy::Bandit => "bandit",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::validation(format!("unknown strategy `{s}`")))
    }
}

/// Everything a strategy may look at when picking a pair.
pub struct QueryContext<'a, T> {
    pub cluster: &'a DocumentCluster,
    pub model: &'a UtilityModel<T>,
    pub partition: &'a Partition,
    pub table: &'a ProbabilityTable,
    pub seed: u64,
}

fn round_rng(seed: u64, round: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(round as u64))
}

/// Index of the minimum score; near-ties are broken uniformly at random.
fn argmin_seeded(scores: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] <= best + TIE_EPS).collect();
    *ties.choose(rng).expect("scores are non-empty")
}

fn diff_vector(cluster: &DocumentCluster, a: usize, b: usize) -> Vec<f64> {
    cluster.concepts[a]
        .features
        .values()
        .iter()
        .zip(cluster.concepts[b].features.values())
        .map(|(x, y)| x - y)
        .collect()
}

fn probabilities_for<T: Scalar>(utils: &[T], pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs.iter().map(|&(a, b)| (utils[a] - utils[b]).sigmoid().as_f64()).collect()
}

/// The strategy's choice for the current round, without recording it.
pub fn strategy_pick<T: Scalar>(strategy: Strategy, state: &QueryState, ctx: &QueryContext<'_, T>) -> Result<(usize, usize)> {
    if strategy == Strategy::Heuristic {
        return heuristic_pick(state, ctx.partition, ctx.table);
    }
    state.ensure_budget()?;
    let n = ctx.cluster.concepts.len();
    let pairs = state.unasked_pairs(n);
    if pairs.is_empty() {
        return Err(Error::Exhausted);
    }
    let mut rng = round_rng(ctx.seed, state.round());
    let utils = preflearn::utilities(ctx.model, ctx.cluster)?;
    let pick = match strategy {
        Strategy::Heuristic => unreachable!(),
        Strategy::Random => *pairs.choose(&mut rng).expect("non-empty"),
        Strategy::Uncertainty => {
            let scores: Vec<f64> = probabilities_for(&utils, &pairs).iter().map(|h| (h - 0.5).abs()).collect();
            pairs[argmin_seeded(&scores, &mut rng)]
        }
        Strategy::ExpectedModelChange => {
            let probs = probabilities_for(&utils, &pairs);
            let scores: Vec<f64> = pairs
                .iter()
                .zip(&probs)
                .map(|(&(a, b), &h)| {
                    let predicted = if h >= 0.5 { 1.0 } else { 0.0 };
                    let norm = diff_vector(ctx.cluster, a, b).iter().map(|v| v * v).sum::<f64>().sqrt();
                    -((predicted - h).abs() * norm)
                })
                .collect();
            pairs[argmin_seeded(&scores, &mut rng)]
        }
        Strategy::QueryByCommittee => {
            let committee = bootstrap_committee(ctx, state, &mut rng)?;
            let scores: Vec<f64> = pairs
                .iter()
                .map(|&(a, b)| {
                    let hs: Vec<f64> = committee.iter().map(|u| (u[a] - u[b]).sigmoid()).collect();
                    -crate::stats::stddev(&hs)
                })
                .collect();
            pairs[argmin_seeded(&scores, &mut rng)]
        }
        Strategy::Conformal => {
            let asked: Vec<Vec<f64>> = state.asked.iter().map(|&(a, b)| diff_vector(ctx.cluster, a, b)).collect();
            let scores: Vec<f64> = pairs
                .par_iter()
                .map(|&(a, b)| {
                    let d = diff_vector(ctx.cluster, a, b);
                    asked.iter().map(|prev| cosine(&d, prev).abs()).fold(0.0, f64::max)
                })
                .collect();
            pairs[argmin_seeded(&scores, &mut rng)]
        }
        Strategy::Bandit => bandit_pick(ctx, state, &pairs, &utils, &mut rng),
    };
    Ok(pick)
}

/// Pick and record a pair with the named strategy.
pub fn next_query_strategy<T: Scalar>(strategy: Strategy, state: &mut QueryState, ctx: &QueryContext<'_, T>) -> Result<(usize, usize)> {
    let pair = strategy_pick(strategy, state, ctx)?;
    state.mark(pair);
    Ok(pair)
}

fn bootstrap_committee<T: Scalar>(ctx: &QueryContext<'_, T>, state: &QueryState, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let base = UtilityModel::<T>::new(ctx.model.schema.clone())
        .with_learning_rate(ctx.model.learning_rate)
        .with_epochs(ctx.model.epochs);
    let mut committee = Vec::with_capacity(COMMITTEE_SIZE);
    for k in 0..COMMITTEE_SIZE {
        let model = if state.history.is_empty() {
            base.clone()
        } else {
            let sample: Vec<PreferenceRecord> = (0..state.history.len())
                .map(|_| state.history[rng.gen_range(0..state.history.len())])
                .collect();
            preflearn::fit(&base.clone().with_seed(ctx.seed.wrapping_add(k as u64)), &sample, ctx.cluster)?
        };
        committee.push(preflearn::utilities(&model, ctx.cluster)?.into_iter().map(Scalar::as_f64).collect());
    }
    Ok(committee)
}

fn bandit_pick<T: Scalar>(
    ctx: &QueryContext<'_, T>,
    state: &QueryState,
    pairs: &[(usize, usize)],
    utils: &[T],
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    let arm_of = |(a, b): (usize, usize)| ordered(ctx.partition.labels[a], ctx.partition.labels[b]);
    let mut arms: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for &p in pairs {
        arms.entry(arm_of(p)).or_default().push(p);
    }
    if rng.gen::<f64>() < BANDIT_EPSILON {
        let keys: Vec<_> = arms.keys().copied().collect();
        let arm = keys.choose(rng).expect("non-empty");
        return *arms[arm].choose(rng).expect("non-empty arm");
    }
    // information gain of a past answer: how far the current model is from it
    let mut gains: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in &state.history {
        let h = (utils[r.left_id] - utils[r.right_id]).sigmoid().as_f64();
        gains.entry(arm_of((r.left_id, r.right_id))).or_default().push((r.label as f64 - h).abs());
    }
    let score = |arm: &(usize, usize)| gains.get(arm).map_or(1.0, |g| crate::stats::mean(g));
    let (arm, _) = arms
        .keys()
        .map(|arm| (arm, score(arm)))
        .fold(None::<(&(usize, usize), f64)>, |acc, (arm, s)| match acc {
            Some((_, best)) if best >= s - TIE_EPS => acc,
            _ => Some((arm, s)),
        })
        .expect("non-empty");
    let members = &arms[arm];
    let probs = probabilities_for(utils, members);
    let (i, _) = probs
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bs), (i, h)| {
            let s = (h - 0.5).abs();
            if s < bs - TIE_EPS { (i, s) } else { (bi, bs) }
        });
    members[i]
}

/// Every distinct unordered pair, used for full-feedback baselines.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    QueryState::default().unasked_pairs(n)
}

/// Distinct concepts that appeared in any question so far.
pub fn mentioned_concepts(history: &[PreferenceRecord]) -> HashSet<usize> {
    history.iter().flat_map(|r| [r.left_id, r.right_id]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ConceptUnit, FeatureVector};

    fn concept(id: usize, surface: &str) -> Concept {
        Concept {
            id,
            unit: ConceptUnit::Bigram,
            surface: surface.into(),
            sentence_ids: BTreeSet::from([0]),
            features: FeatureVector::default(),
        }
    }

    #[test]
    fn self_similarity() {
        let a = concept(0, "cancer treatment");
        assert_eq!(similarity_features(&a, &a, None), [1.0, 1.0, 0.0]);
        let table = EmbeddingTable::parse("cancer 1 0\ntreatment 0 1\n").unwrap();
        let f = similarity_features(&a, &a, Some(&table));
        assert!((f[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_words() {
        let f = similarity_features(&concept(0, "alpha"), &concept(1, "zzz"), None);
        assert_eq!(f[1], 0.0);
        // "alpha" → "zzz" needs 5 edits over a max length of 5
        assert_eq!(f[0], 0.0);
    }

    #[test]
    fn hand_traced_levenshtein() {
        let f = similarity_features(&concept(0, "cancer treatment"), &concept(1, "cancer symptoms"), None);
        assert!((f[1] - 1.0 / 3.0).abs() < 1e-12);
        // The shared prefix "cancer " costs nothing. "treatment" → "symptoms":
        // the DP table bottoms out at 8 (only the 'm' can be aligned).
        assert!((f[0] - (1.0 - 8.0 / 16.0)).abs() < 1e-12);
    }

    #[test]
    fn coreference_examples() {
        let zero = SimilarityModel::<f64>::new(vec![0.0; 3], 0.0, SigmoidForm::Logistic);
        let (a, b) = (concept(0, "storm surge"), concept(1, "flood wall"));
        assert_eq!(coreference_probability(&zero, &a, &b, None), 0.5);
        let ones = SimilarityModel::<f64>::new(vec![1.0; 3], 0.0, SigmoidForm::Logistic);
        let p = ones.probability_from_features(&[1.0, 1.0, 1.0]);
        assert!((p - 0.9525741268224334).abs() < 1e-12);
        let trained = SimilarityModel::<f64>::default_trained();
        assert_eq!(
            coreference_probability(&trained, &a, &b, None),
            coreference_probability(&trained, &b, &a, None)
        );
    }

    #[test]
    fn scalar_exponent_form() {
        let m = SimilarityModel::<f64>::new(vec![2.0], 0.0, SigmoidForm::ScalarExponent);
        assert_eq!(m.probability_from_features(&[1.0, 1.0, 1.0]), 0.5);
        let p = m.probability_from_features(&[0.5, 0.5, 0.5]);
        assert!((p - 1.0 / (1.0 + 1.0f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn trained_model_separates_bundled_examples() {
        let m = SimilarityModel::<f64>::default_trained();
        assert!(m.probability_from_features(&[0.95, 1.0, 0.0]) > 0.5);
        assert!(m.probability_from_features(&[0.1, 0.0, 0.0]) < 0.5);
    }

    #[test]
    fn two_element_partitions() {
        let t = ProbabilityTable::from_rows(&[vec![1.0, 0.9], vec![0.9, 1.0]]).unwrap();
        assert!(partition_concepts(&t, 100, 0).unwrap().coref(0, 1));
        let t = ProbabilityTable::from_rows(&[vec![1.0, 0.1], vec![0.1, 1.0]]).unwrap();
        assert!(!partition_concepts(&t, 100, 0).unwrap().coref(0, 1));
        let empty = ProbabilityTable::from_rows(&[]).unwrap();
        assert!(partition_concepts(&empty, 10, 0).is_err());
    }

    #[test]
    fn table_validation() {
        assert!(ProbabilityTable::from_rows(&[vec![1.0, 0.9], vec![0.8, 1.0]]).is_err());
        assert!(ProbabilityTable::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn strategy_names_parse() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("variance_reduction".parse::<Strategy>().is_err());
    }

    fn two_blocks() -> (Partition, ProbabilityTable) {
        // {0,1,2} and {3,4,5}; the (2,5) link is the weakest cross pair
        let table = ProbabilityTable::from_fn(6, |i, j| {
            if (i < 3) == (j < 3) {
                0.9
            } else if (i, j) == (2, 5) {
                0.02
            } else {
                0.1 + 0.01 * (i + j) as f64
            }
        });
        (partition_concepts(&table, 100, 1).unwrap(), table)
    }

    #[test]
    fn heuristic_round_zero_takes_weakest_cross_pair() {
        let (partition, table) = two_blocks();
        assert_eq!(partition.num_groups(), 2);
        let mut state = QueryState::new(3);
        assert_eq!(next_query_heuristic(&mut state, &partition, &table).unwrap(), (2, 5));
    }

    #[test]
    fn heuristic_never_repeats_and_respects_budget() {
        let (partition, table) = two_blocks();
        let mut state = QueryState::new(3);
        let first = next_query_heuristic(&mut state, &partition, &table).unwrap();
        let second = next_query_heuristic(&mut state, &partition, &table).unwrap();
        assert_ne!(first, second);
        next_query_heuristic(&mut state, &partition, &table).unwrap();
        assert!(matches!(next_query_heuristic(&mut state, &partition, &table), Err(Error::Exhausted)));
    }

    #[test]
    fn heuristic_exhausts_all_pairs() {
        let (partition, table) = two_blocks();
        let mut state = QueryState::new(100);
        for _ in 0..15 {
            next_query_heuristic(&mut state, &partition, &table).unwrap();
        }
        assert!(matches!(next_query_heuristic(&mut state, &partition, &table), Err(Error::Exhausted)));
    }
}
