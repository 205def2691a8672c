//! Candidate summaries: weighted concept coverage under a length budget.
//!
//! The selection problem is
//!
//! ```text
//! maximize   Σ_i w_i · p_ci
//! subject to Σ_j l_j · p_sj < L
//! ```
//!
//! where `p_ci = 1` iff some selected sentence contains concept `i`. Up to
//! [`EXACT_SENTENCE_LIMIT`] sentences it is solved exactly by branch and
//! bound; larger clusters use greedy selection with single swaps.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DocumentCluster;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const EXACT_SENTENCE_LIMIT: usize = 25;
const EPS: f64 = 1e-9;
/// Perturbed greedy runs per requested pool member at large scale.
const PERTURBED_RUNS_PER_MEMBER: usize = 4;
const PERTURBATION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Sentence indices in cluster order.
    pub sentence_ids: Vec<usize>,
    pub length: usize,
    pub concept_cover: BTreeSet<usize>,
    pub score: f64,
    pub redundancy: f64,
}

/// The wire form of a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub sentence_ids: Vec<usize>,
    pub text: String,
    pub length: usize,
    pub score: f64,
    pub redundancy: f64,
}

impl Summary {
    /// Assemble a summary from sentence ids, scoring it under `weights`.
    pub fn from_sentences<T: Scalar>(
        cluster: &DocumentCluster,
        ids: &[usize],
        weights: &[T],
        preferred: &HashSet<usize>,
    ) -> Result<Self> {
        let mut sentence_ids = ids.to_vec();
        sentence_ids.sort_unstable();
        sentence_ids.dedup();
        if let Some(&bad) = sentence_ids.iter().find(|&&s| s >= cluster.sentences.len()) {
            return Err(Error::validation(format!("sentence {bad} is not in the cluster")));
        }
        let index = SentenceIndex::new(cluster, weights);
        let concept_cover = index.cover(&sentence_ids);
        let score = concept_cover.iter().map(|&c| index.weights[c]).sum();
        let length = sentence_ids.iter().map(|&s| cluster.sentences[s].length).sum();
        let redundancy = if sentence_ids.is_empty() {
            0.0
        } else {
            redundancy_of(cluster, &sentence_ids, preferred)
        };
        Ok(Self { sentence_ids, length, concept_cover, score, redundancy })
    }

    pub fn is_empty(&self) -> bool {
        self.sentence_ids.is_empty()
    }

    pub fn text(&self, cluster: &DocumentCluster) -> String {
        self.sentence_ids
            .iter()
            .map(|&s| cluster.sentences[s].text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// All tokens of the member sentences, in order.
    pub fn tokens(&self, cluster: &DocumentCluster) -> Vec<String> {
        self.sentence_ids
            .iter()
            .flat_map(|&s| cluster.sentences[s].tokens.iter().cloned())
            .collect()
    }

    pub fn record(&self, cluster: &DocumentCluster) -> SummaryRecord {
        SummaryRecord {
            sentence_ids: self.sentence_ids.clone(),
            text: self.text(cluster),
            length: self.length,
            score: self.score,
            redundancy: self.redundancy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPool {
    pub summaries: Vec<Summary>,
    pub budget_l: usize,
}

impl SummaryPool {
    pub fn len(&self) -> usize {
        self.summaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
    }
}

struct SentenceIndex {
    concepts: Vec<Vec<usize>>,
    lengths: Vec<usize>,
    weights: Vec<f64>,
}

impl SentenceIndex {
    fn new<T: Scalar>(cluster: &DocumentCluster, weights: &[T]) -> Self {
        let n = cluster.concepts.len();
        let weights = (0..n).map(|i| weights.get(i).map_or(0.0, |w| w.as_f64())).collect();
        Self {
            concepts: cluster.sentence_concepts(),
            lengths: cluster.sentences.iter().map(|s| s.length).collect(),
            weights,
        }
    }

    fn cover(&self, ids: &[usize]) -> BTreeSet<usize> {
        ids.iter().flat_map(|&s| self.concepts[s].iter().copied()).collect()
    }

    fn score(&self, ids: &[usize]) -> f64 {
        self.cover(ids).iter().map(|&c| self.weights[c]).sum()
    }

    /// Gain of adding sentence `s` given per-concept coverage counts.
    fn gain(&self, s: usize, covered: &[u32]) -> f64 {
        self.concepts[s].iter().filter(|&&c| covered[c] == 0).map(|&c| self.weights[c]).sum()
    }

    /// Optimistic gain: only positive, not-yet-covered weights.
    fn positive_gain(&self, s: usize, covered: &[u32]) -> f64 {
        self.concepts[s]
            .iter()
            .filter(|&&c| covered[c] == 0)
            .map(|&c| self.weights[c].max(0.0))
            .sum()
    }
}

/// Fractional knapsack over optimistic marginal gains of sentences `from..`.
/// Coverage is submodular, so this bounds any completion of the current set.
fn fractional_bound(index: &SentenceIndex, usable: &[usize], from: usize, covered: &[u32], capacity: usize) -> f64 {
    let mut items: Vec<(f64, usize)> = usable[from..]
        .iter()
        .filter(|&&s| index.lengths[s] <= capacity)
        .map(|&s| (index.positive_gain(s, covered), index.lengths[s]))
        .filter(|(g, _)| *g > 0.0)
        .collect();
    items.sort_by(|a, b| (b.0 / b.1 as f64).partial_cmp(&(a.0 / a.1 as f64)).unwrap_or(std::cmp::Ordering::Equal));
    let mut room = capacity as f64;
    let mut total = 0.0;
    for (g, l) in items {
        if room <= 0.0 {
            break;
        }
        let take = (l as f64).min(room);
        total += g * take / l as f64;
        room -= take;
    }
    total
}

/// Ranking of candidates: higher score first, then the lexicographically
/// smaller sentence sequence.
fn better(score: f64, ids: &[usize], than_score: f64, than_ids: &[usize]) -> bool {
    score > than_score + EPS || ((score - than_score).abs() <= EPS && ids < than_ids)
}

struct Search<'a> {
    index: &'a SentenceIndex,
    usable: Vec<usize>,
    capacity: usize,
    chosen: Vec<usize>,
    covered: Vec<u32>,
}

impl<'a> Search<'a> {
    fn new(index: &'a SentenceIndex, capacity: usize) -> Self {
        let usable = (0..index.lengths.len()).filter(|&s| index.lengths[s] <= capacity).collect();
        Self { index, usable, capacity, chosen: Vec::new(), covered: vec![0; index.weights.len()] }
    }

    fn push(&mut self, s: usize) {
        self.chosen.push(s);
        self.capacity -= self.index.lengths[s];
        for &c in &self.index.concepts[s] {
            self.covered[c] += 1;
        }
    }

    fn pop(&mut self) {
        let s = self.chosen.pop().expect("push/pop are paired");
        self.capacity += self.index.lengths[s];
        for &c in &self.index.concepts[s] {
            self.covered[c] -= 1;
        }
    }

    /// Depth-first enumeration with pruning. `visit` sees every node's
    /// chosen set and score; `threshold` returns the incumbent to beat.
    fn run(&mut self, from: usize, score: f64, sink: &mut dyn Sink) {
        sink.visit(&self.chosen, score);
        let bound = score + fractional_bound(self.index, &self.usable, from, &self.covered, self.capacity);
        if sink.prune(bound, &self.chosen) {
            return;
        }
        for k in from..self.usable.len() {
            let s = self.usable[k];
            if self.index.lengths[s] > self.capacity {
                continue;
            }
            let gain = self.index.gain(s, &self.covered);
            self.push(s);
            self.run(k + 1, score + gain, sink);
            self.pop();
        }
    }
}

trait Sink {
    fn visit(&mut self, ids: &[usize], score: f64);
    /// True when no extension of `prefix` with score ≤ `bound` can matter.
    fn prune(&self, bound: f64, prefix: &[usize]) -> bool;
}

struct BestSink {
    score: f64,
    ids: Vec<usize>,
}

impl Sink for BestSink {
    fn visit(&mut self, ids: &[usize], score: f64) {
        if better(score, ids, self.score, &self.ids) {
            self.score = score;
            self.ids = ids.to_vec();
        }
    }

    fn prune(&self, bound: f64, prefix: &[usize]) -> bool {
        // every extension of `prefix` sorts after it, so on ties it can only
        // win if the prefix itself precedes the incumbent
        bound < self.score - EPS || (bound <= self.score + EPS && prefix > self.ids.as_slice())
    }
}

struct TopKSink<'a> {
    k: usize,
    keep: &'a dyn Fn(&[usize]) -> bool,
    items: Vec<(f64, Vec<usize>)>,
}

impl TopKSink<'_> {
    fn worst(&self) -> Option<&(f64, Vec<usize>)> {
        (self.items.len() == self.k).then(|| self.items.last()).flatten()
    }
}

impl Sink for TopKSink<'_> {
    fn visit(&mut self, ids: &[usize], score: f64) {
        if ids.is_empty() {
            return;
        }
        if let Some((ws, wi)) = self.worst() {
            if !better(score, ids, *ws, wi) {
                return;
            }
        }
        if !(self.keep)(ids) {
            return;
        }
        let pos = self
            .items
            .iter()
            .position(|(s, i)| better(score, ids, *s, i))
            .unwrap_or(self.items.len());
        self.items.insert(pos, (score, ids.to_vec()));
        self.items.truncate(self.k);
    }

    fn prune(&self, bound: f64, prefix: &[usize]) -> bool {
        match self.worst() {
            None => false,
            Some((ws, wi)) => bound < ws - EPS || (bound <= ws + EPS && prefix > wi.as_slice()),
        }
    }
}

fn check_budget(cluster: &DocumentCluster, l: usize) -> Result<()> {
    if !cluster.sentences.iter().any(|s| s.length < l) {
        return Err(Error::Infeasible(format!(
            "no sentence is shorter than the length budget {l} (shortest has {})",
            cluster.min_sentence_length()
        )));
    }
    Ok(())
}

/// Greedy by gain per token, then single swaps until no improvement.
fn greedy_with_swaps(index: &SentenceIndex, capacity: usize, rank_weights: &[f64]) -> Vec<usize> {
    let n = index.lengths.len();
    let score_under = |ids: &[usize], w: &[f64]| -> f64 {
        ids.iter()
            .flat_map(|&s| index.concepts[s].iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|c| w[c])
            .sum()
    };
    let mut chosen: Vec<usize> = Vec::new();
    let mut used = 0usize;
    loop {
        let current = score_under(&chosen, rank_weights);
        let mut best: Option<(f64, usize)> = None;
        for s in 0..n {
            if chosen.contains(&s) || used + index.lengths[s] > capacity {
                continue;
            }
            chosen.push(s);
            let gain = score_under(&chosen, rank_weights) - current;
            chosen.pop();
            let ratio = gain / index.lengths[s] as f64;
            if gain > EPS && best.is_none_or(|(r, _)| ratio > r + EPS) {
                best = Some((ratio, s));
            }
        }
        match best {
            Some((_, s)) => {
                chosen.push(s);
                used += index.lengths[s];
            }
            None => break,
        }
    }
    // 1-swap improvement under the true weights
    let mut improved = true;
    while improved {
        improved = false;
        let current = index.score(&chosen);
        'outer: for i in 0..chosen.len() {
            for t in 0..n {
                if chosen.contains(&t) {
                    continue;
                }
                let len = used - index.lengths[chosen[i]] + index.lengths[t];
                if len > capacity {
                    continue;
                }
                let mut trial = chosen.clone();
                trial[i] = t;
                if index.score(&trial) > current + EPS {
                    chosen = trial;
                    used = len;
                    improved = true;
                    break 'outer;
                }
            }
        }
        if !improved {
            for t in 0..n {
                if !chosen.contains(&t) && used + index.lengths[t] <= capacity {
                    let mut trial = chosen.clone();
                    trial.push(t);
                    if index.score(&trial) > current + EPS {
                        chosen = trial;
                        used += index.lengths[t];
                        improved = true;
                        break;
                    }
                }
            }
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Best sentence subset under the strict length budget `Σ l_j < l`.
pub fn generate_optimal<T: Scalar>(cluster: &DocumentCluster, weights: &[T], l: usize) -> Result<Summary> {
    generate_optimal_with(cluster, weights, l, &HashSet::new())
}

/// [`generate_optimal`] with redundancy measured against `preferred`.
pub fn generate_optimal_with<T: Scalar>(
    cluster: &DocumentCluster,
    weights: &[T],
    l: usize,
    preferred: &HashSet<usize>,
) -> Result<Summary> {
    check_budget(cluster, l)?;
    let index = SentenceIndex::new(cluster, weights);
    let capacity = l - 1;
    let ids = if cluster.sentences.len() <= EXACT_SENTENCE_LIMIT {
        let mut search = Search::new(&index, capacity);
        let greedy = greedy_with_swaps(&index, capacity, &index.weights);
        let mut sink = BestSink { score: index.score(&greedy), ids: greedy };
        search.run(0, 0.0, &mut sink);
        sink.ids
    } else {
        greedy_with_swaps(&index, capacity, &index.weights)
    };
    Summary::from_sentences(cluster, &ids, weights, preferred)
}

fn redundancy_of(cluster: &DocumentCluster, ids: &[usize], preferred: &HashSet<usize>) -> f64 {
    let stripped: HashSet<&str> = preferred
        .iter()
        .filter_map(|&c| cluster.concepts.get(c))
        .flat_map(|c| c.surface_tokens())
        .collect();
    let sets: Vec<HashSet<&str>> = ids
        .iter()
        .map(|&s| {
            cluster.sentences[s]
                .content_tokens()
                .into_iter()
                .filter(|t| !stripped.contains(t))
                .collect()
        })
        .collect();
    if sets.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            let union = sets[i].union(&sets[j]).count();
            total += if union == 0 { 0.0 } else { sets[i].intersection(&sets[j]).count() as f64 / union as f64 };
            pairs += 1;
        }
    }
    total / pairs as f64 / sets.len() as f64
}

/// Mean pairwise Jaccard of member sentences (content tokens, minus the
/// tokens of `preferred` concepts), divided by the number of sentences.
pub fn redundancy(summary: &Summary, cluster: &DocumentCluster, preferred: &HashSet<usize>) -> Result<f64> {
    if summary.is_empty() {
        return Err(Error::validation("redundancy of an empty summary is undefined"));
    }
    Ok(redundancy_of(cluster, &summary.sentence_ids, preferred))
}

/// Top-scoring distinct summaries whose redundancy does not exceed the cap.
pub fn build_pool<T: Scalar>(
    cluster: &DocumentCluster,
    weights: &[T],
    l: usize,
    pool_size: usize,
    redundancy_cap: f64,
    preferred: &HashSet<usize>,
    seed: u64,
) -> Result<SummaryPool> {
    if pool_size == 0 {
        return Err(Error::validation("pool size must be at least 1"));
    }
    check_budget(cluster, l)?;
    let index = SentenceIndex::new(cluster, weights);
    let capacity = l - 1;
    let keep = |ids: &[usize]| redundancy_of(cluster, ids, preferred) <= redundancy_cap + EPS;
    let chosen: Vec<Vec<usize>> = if cluster.sentences.len() <= EXACT_SENTENCE_LIMIT {
        let mut sink = TopKSink { k: pool_size, keep: &keep, items: Vec::new() };
        Search::new(&index, capacity).run(0, 0.0, &mut sink);
        sink.items.into_iter().map(|(_, ids)| ids).collect()
    } else {
        perturbed_greedy_pool(&index, capacity, pool_size, &keep, seed)
    };
    if chosen.is_empty() {
        return Err(Error::Infeasible("no summary satisfies the length and redundancy limits".into()));
    }
    let summaries = chosen
        .iter()
        .map(|ids| Summary::from_sentences(cluster, ids, weights, preferred))
        .collect::<Result<Vec<_>>>()?;
    Ok(SummaryPool { summaries, budget_l: l })
}

fn perturbed_greedy_pool(
    index: &SentenceIndex,
    capacity: usize,
    pool_size: usize,
    keep: &dyn Fn(&[usize]) -> bool,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut found: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut consider = |ids: Vec<usize>| {
        if !ids.is_empty() && seen.insert(ids.clone()) && keep(&ids) {
            found.push((index.score(&ids), ids));
        }
    };
    consider(greedy_with_swaps(index, capacity, &index.weights));
    for _ in 0..pool_size * PERTURBED_RUNS_PER_MEMBER {
        let noisy: Vec<f64> = index
            .weights
            .iter()
            .map(|w| w * (1.0 + PERTURBATION * rng.gen_range(-1.0..1.0)))
            .collect();
        consider(greedy_with_swaps(index, capacity, &noisy));
    }
    found.sort_by(|a, b| {
        if better(a.0, &a.1, b.0, &b.1) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    found.into_iter().take(pool_size).map(|(_, ids)| ids).collect()
}
