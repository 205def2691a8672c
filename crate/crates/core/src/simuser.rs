//! Simulated user and domain expert, plus a synthetic cluster generator.

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{featurize_concepts, ConceptUnit, Document, DocumentCluster, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::eval::rouge::{rouge_n, TRUNCATION_TOKENS};
use crate::preflearn::{rank_weights, PreferenceRecord};
use crate::sumgen::{build_pool, redundancy, Summary};
use crate::text;

pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 0.25;

/// Planted utility weights over [`FEATURE_NAMES`].
pub const DEFAULT_PLANTED_WEIGHTS: [f64; 9] = [1.0, 0.6, 0.5, 0.0, 0.8, 0.0, -0.3, 0.1, 0.1];

const CONSONANTS: &[u8] = b"bdfgklmnprtvz";
const VOWELS: &[u8] = b"aiou";
const GLUE: &[&str] = &["the", "of", "and", "in", "with", "for", "on"];
const GLUE_PROB: f64 = 0.35;
const HOME_DOC_PROB: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthUser {
    /// True utility per concept id, pairwise distinct.
    pub utilities: Vec<f64>,
    pub noise: f64,
}

impl GroundTruthUser {
    pub fn new(utilities: Vec<f64>, noise: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::validation(format!("noise must lie in [0, 1), got {noise}")));
        }
        let mut sorted = utilities.clone();
        if sorted.iter().any(|u| !u.is_finite()) {
            return Err(Error::validation("utilities must be finite"));
        }
        sorted.sort_by(|a, b| a.total_cmp(b));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("ground-truth utilities must be pairwise distinct"));
        }
        Ok(Self { utilities, noise })
    }

    /// Label 1 iff `U(a) > U(b)`, flipped with probability `noise`.
    /// Noise-free answers draw nothing from `rng`.
    pub fn answer_preference(&self, a: usize, b: usize, round: usize, rng: &mut impl Rng) -> Result<PreferenceRecord> {
        let n = self.utilities.len();
        if a >= n || b >= n {
            return Err(Error::validation(format!("concept {} is unknown to the user", a.max(b))));
        }
        let mut label = u8::from(self.utilities[a] > self.utilities[b]);
        if self.noise > 0.0 && rng.gen_bool(self.noise) {
            label = 1 - label;
        }
        PreferenceRecord::new(a, b, label, round)
    }

    pub fn answer_seeded(&self, a: usize, b: usize, round: usize, seed: u64) -> Result<PreferenceRecord> {
        self.answer_preference(a, b, round, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthReward {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub references: Vec<Vec<String>>,
}

impl GroundTruthReward {
    pub fn new(references: Vec<Vec<String>>) -> Self {
        Self { alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA, gamma: DEFAULT_GAMMA, references }
    }

    pub fn for_cluster(cluster: &DocumentCluster) -> Self {
        Self::new(cluster.reference_tokens())
    }

    pub fn with_coefficients(mut self, alpha: f64, beta: f64, gamma: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self.gamma = gamma;
        self
    }

    /// `α·R1 + β·R2 − γ·Red`.
    pub fn combine(&self, rouge1: f64, rouge2: f64, redundancy: f64) -> f64 {
        self.alpha * rouge1 + self.beta * rouge2 - self.gamma * redundancy
    }

    /// ROUGE-1 and ROUGE-2 recall of a summary at the 75-token limit.
    pub fn rouge(&self, summary: &Summary, cluster: &DocumentCluster) -> Result<(f64, f64)> {
        let tokens = summary.tokens(cluster);
        Ok((
            rouge_n::<f64, _>(&tokens, &self.references, 1, Some(TRUNCATION_TOKENS))?,
            rouge_n::<f64, _>(&tokens, &self.references, 2, Some(TRUNCATION_TOKENS))?,
        ))
    }

    pub fn score_summary(&self, summary: &Summary, cluster: &DocumentCluster) -> Result<f64> {
        if self.references.is_empty() {
            return Err(Error::validation("the ground-truth reward needs reference summaries"));
        }
        let (r1, r2) = self.rouge(summary, cluster)?;
        let red = if summary.is_empty() { 0.0 } else { redundancy(summary, cluster, &HashSet::new())? };
        Ok(self.combine(r1, r2, red))
    }

    /// Simulated expert judgment: 1 iff `a` scores at least as high as `b`.
    pub fn prefer(&self, a: &Summary, b: &Summary, cluster: &DocumentCluster) -> Result<u8> {
        Ok(u8::from(self.score_summary(a, cluster)? >= self.score_summary(b, cluster)?))
    }
}

/// Generator configuration for [`make_synthetic_cluster`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub id: String,
    pub documents: usize,
    pub sentences: usize,
    pub vocab_size: usize,
    /// Relative prominence of each planted topic.
    pub topic_weights: Vec<f64>,
    /// Share of the vocabulary used as topic-neutral filler.
    pub filler_share: f64,
    /// Chance that a content word is drawn from the filler vocabulary.
    pub filler_ratio: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub unit: ConceptUnit,
    pub planted_weights: Vec<f64>,
    pub jitter: f64,
    pub noise: f64,
    pub references: usize,
    pub reference_length: usize,
    /// Syllables every word of a topic shares as a prefix; 0 draws
    /// unrelated words.
    pub stem_syllables: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            id: "synthetic".into(),
            documents: 4,
            sentences: 20,
            vocab_size: 40,
            topic_weights: vec![0.5, 0.3, 0.2],
            filler_share: 0.2,
            filler_ratio: 0.15,
            min_words: 4,
            max_words: 7,
            unit: ConceptUnit::Bigram,
            planted_weights: DEFAULT_PLANTED_WEIGHTS.to_vec(),
            jitter: 1e-3,
            noise: 0.0,
            references: 2,
            reference_length: 40,
            stem_syllables: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::validation(m));
        if self.vocab_size < 2 {
            return fail(format!("vocabulary of {} words is degenerate", self.vocab_size));
        }
        if self.topic_weights.is_empty() || self.topic_weights.iter().any(|w| !(*w > 0.0)) {
            return fail("topic weights must be nonempty and positive".into());
        }
        if self.documents == 0 || self.sentences < self.topic_weights.len() {
            return fail("need at least one document and one sentence per topic".into());
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return fail("word counts must satisfy 1 <= min_words <= max_words".into());
        }
        if self.topic_vocab() < self.topic_weights.len() {
            return fail("every topic needs at least one word".into());
        }
        if !(0.0..1.0).contains(&self.filler_share) || !(0.0..=1.0).contains(&self.filler_ratio) {
            return fail("filler share must lie in [0, 1) and ratio in [0, 1]".into());
        }
        if self.planted_weights.len() != FEATURE_NAMES.len() {
            return Err(Error::SchemaMismatch { expected: FEATURE_NAMES.len(), got: self.planted_weights.len() });
        }
        if self.references == 0 || self.reference_length < 2 {
            return fail("need at least one reference of positive length".into());
        }
        if !(0.0..1.0).contains(&self.noise) {
            return fail(format!("noise must lie in [0, 1), got {}", self.noise));
        }
        Ok(())
    }

    fn filler_vocab(&self) -> usize {
        (self.vocab_size as f64 * self.filler_share).round() as usize
    }

    fn topic_vocab(&self) -> usize {
        self.vocab_size - self.filler_vocab()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub cluster: DocumentCluster,
    pub user: GroundTruthUser,
    /// Planted vocabulary of each topic.
    pub topics: Vec<Vec<String>>,
    pub filler: Vec<String>,
}

impl SyntheticInstance {
    pub fn reward(&self) -> GroundTruthReward {
        GroundTruthReward::for_cluster(&self.cluster)
    }
}

fn syllables(n: usize, rng: &mut ChaCha8Rng) -> String {
    let mut w = String::with_capacity(2 * n);
    for _ in 0..n {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    w
}

/// `n` fresh words starting with `stem`, none already in `seen`.
fn vocabulary(n: usize, stem: &str, seen: &mut BTreeSet<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        let extra = if stem.is_empty() || tries > 64 * n { rng.gen_range(2..=3) } else { rng.gen_range(1..=2) };
        let w = format!("{stem}{}", syllables(extra, rng));
        if !text::is_stopword(&w) && text::background_count(&w) == 0.0 && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Sentence counts per topic by largest remainder, at least one each.
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let k = weights.len();
    let spare = total - k;
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * spare as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = spare - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts.iter().map(|c| c + 1).collect()
}

struct Drawer<'a> {
    words: &'a [String],
    unused: VecDeque<usize>,
}

impl<'a> Drawer<'a> {
    fn new(words: &'a [String], rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..words.len()).collect();
        order.shuffle(rng);
        Self { words, unused: order.into() }
    }

    /// Unused words first so the whole vocabulary gets covered.
    fn draw(&mut self, rng: &mut ChaCha8Rng, avoid: &[&'a str]) -> Option<&'a str> {
        if self.words.is_empty() {
            return None;
        }
        if let Some(i) = self.unused.pop_front() {
            return Some(&self.words[i]);
        }
        for _ in 0..8 {
            let w = &self.words[rng.gen_range(0..self.words.len())];
            if !avoid.contains(&w.as_str()) {
                return Some(w);
            }
        }
        Some(&self.words[rng.gen_range(0..self.words.len())])
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn generate_documents(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> (Vec<Document>, Vec<Vec<String>>, Vec<String>) {
    let mut seen = BTreeSet::new();
    let filler = vocabulary(spec.filler_vocab(), "", &mut seen, rng);
    let k = spec.topic_weights.len();
    let per = spec.topic_vocab() / k;
    let mut stems = BTreeSet::new();
    let topics: Vec<Vec<String>> = (0..k)
        .map(|t| {
            let size = if t + 1 == k { spec.topic_vocab() - per * (k - 1) } else { per };
            let stem = loop {
                let s = syllables(spec.stem_syllables, rng);
                if s.is_empty() || stems.insert(s.clone()) || stems.len() >= 4usize.pow(spec.stem_syllables as u32) {
                    break s;
                }
            };
            vocabulary(size, &stem, &mut seen, rng)
        })
        .collect();

    let counts = allocate(spec.sentences, &spec.topic_weights);
    let mut plan: Vec<usize> = counts.iter().enumerate().flat_map(|(t, &c)| std::iter::repeat_n(t, c)).collect();
    plan.shuffle(rng);

    let mut drawers: Vec<Drawer> = topics.iter().map(|w| Drawer::new(w, rng)).collect();
    let mut filler_drawer = Drawer::new(&filler, rng);
    let mut docs: Vec<Vec<String>> = vec![Vec::new(); spec.documents];
    for &topic in &plan {
        let n_words = rng.gen_range(spec.min_words..=spec.max_words);
        let mut words: Vec<&str> = Vec::with_capacity(n_words);
        while words.len() < n_words {
            let use_filler = !filler.is_empty() && rng.gen_bool(spec.filler_ratio);
            let drawer = if use_filler { &mut filler_drawer } else { &mut drawers[topic] };
            if let Some(w) = drawer.draw(rng, &words) {
                words.push(w);
            }
        }
        let mut parts: Vec<String> = Vec::with_capacity(2 * n_words);
        for (i, w) in words.iter().enumerate() {
            if i > 0 && rng.gen_bool(GLUE_PROB) {
                parts.push(GLUE[rng.gen_range(0..GLUE.len())].to_string());
            }
            parts.push(if i == 0 { capitalize(w) } else { (*w).to_string() });
        }
        let doc = if rng.gen_bool(HOME_DOC_PROB) { topic % spec.documents } else { rng.gen_range(0..spec.documents) };
        docs[doc].push(format!("{}.", parts.join(" ")));
    }
    let documents = docs
        .into_iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| Document { id: format!("d{i}"), text: s.join(" ") })
        .collect();
    (documents, topics, filler)
}

/// `U(c) = planted · φ(c)` plus a small distinct jitter per concept.
pub fn planted_utilities(cluster: &DocumentCluster, planted: &[f64], jitter: f64, rng: &mut impl Rng) -> Vec<f64> {
    cluster
        .concepts
        .iter()
        .map(|c| {
            let base: f64 = planted.iter().zip(c.features.values()).map(|(w, x)| w * x).sum();
            base + jitter * rng.gen::<f64>() + 1e-12 * c.id as f64
        })
        .collect()
}

/// Utilities of word-level concepts under a sentence-level interest: the
/// summed weight of the sentences each concept occurs in.
fn derived_utilities(cluster: &DocumentCluster, sentence_weights: &[f64], jitter: f64, rng: &mut impl Rng) -> Vec<f64> {
    cluster
        .concepts
        .iter()
        .map(|c| {
            let base: f64 = c.sentence_ids.iter().map(|&s| sentence_weights[s]).sum();
            base + jitter * rng.gen::<f64>() + 1e-12 * c.id as f64
        })
        .collect()
}

/// Deterministic synthetic cluster with a planted user and references.
///
/// Documents depend only on the spec and seed, never on `spec.unit`. The
/// planted utility lives on sentences and the references are the top
/// summaries under it, so the same seed yields comparable instances across
/// units; unigram and bigram users inherit it through [`derived_utilities`].
pub fn make_synthetic_cluster(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (documents, topics, filler) = generate_documents(spec, &mut rng);

    let reference_view = featurize_concepts(
        DocumentCluster::from_documents(spec.id.clone(), documents.clone(), Vec::new(), ConceptUnit::Sentence)?,
        None,
    )?;
    let mut ref_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_7ef5);
    let ref_utils = planted_utilities(&reference_view, &spec.planted_weights, spec.jitter, &mut ref_rng);
    let pool = build_pool(
        &reference_view,
        &rank_weights(&ref_utils),
        spec.reference_length,
        spec.references,
        f64::INFINITY,
        &HashSet::new(),
        seed,
    )?;
    let references: Vec<String> = pool.summaries.iter().map(|s| s.text(&reference_view)).collect();

    let cluster = featurize_concepts(
        DocumentCluster::from_documents(spec.id.clone(), documents, references, spec.unit)?,
        None,
    )?;
    let utilities = match spec.unit {
        ConceptUnit::Sentence => ref_utils,
        _ => {
            let mut user_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a11_ce);
            derived_utilities(&cluster, &rank_weights(&ref_utils), spec.jitter, &mut user_rng)
        }
    };
    let user = GroundTruthUser::new(utilities, spec.noise)?;
    Ok(SyntheticInstance { cluster, user, topics, filler })
}

/// Best ROUGE-1 recall reachable by any sentence subset with `Σ l < l`.
///
/// Exact branch-and-bound over sentences in cluster order. Truncation is
/// ignored, so for `l > 76` the value is an upper bound.
pub fn oracle_rouge1(cluster: &DocumentCluster, l: usize) -> Result<f64> {
    let refs = cluster.reference_tokens();
    if refs.is_empty() {
        return Err(Error::validation("the oracle bound needs reference summaries"));
    }
    let mut vocab: Vec<&str> = refs.iter().flatten().map(String::as_str).collect();
    vocab.sort_unstable();
    vocab.dedup();
    let idx = |w: &str| vocab.binary_search(&w).ok();
    // clip[r][v]: count of word v in reference r
    let mut clip = vec![vec![0u32; vocab.len()]; refs.len()];
    for (r, toks) in refs.iter().enumerate() {
        for t in toks {
            clip[r][idx(t).expect("reference word in vocab")] += 1;
        }
    }
    let total: u32 = refs.iter().map(|r| r.len() as u32).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let sent_counts: Vec<Vec<(usize, u32)>> = cluster
        .sentences
        .iter()
        .map(|s| {
            let mut c = std::collections::BTreeMap::new();
            for t in &s.tokens {
                if let Some(v) = idx(t) {
                    *c.entry(v).or_insert(0u32) += 1;
                }
            }
            c.into_iter().collect()
        })
        .collect();
    let lengths: Vec<usize> = cluster.sentences.iter().map(|s| s.length).collect();
    let capacity = l.saturating_sub(1);

    struct Bb<'a> {
        clip: &'a [Vec<u32>],
        sent: &'a [Vec<(usize, u32)>],
        lengths: &'a [usize],
        counts: Vec<u32>,
        best: u32,
    }
    impl Bb<'_> {
        fn matched(&self) -> u32 {
            self.clip.iter().map(|ref_c| ref_c.iter().zip(&self.counts).map(|(&a, &b)| a.min(b)).sum::<u32>()).sum()
        }
        fn gain(&self, s: usize) -> u32 {
            let mut g = 0;
            for ref_c in self.clip {
                for &(v, k) in &self.sent[s] {
                    let have = self.counts[v].min(ref_c[v]);
                    g += (self.counts[v] + k).min(ref_c[v]) - have;
                }
            }
            g
        }
        fn run(&mut self, from: usize, room: usize) {
            let here = self.matched();
            self.best = self.best.max(here);
            let mut cand: Vec<(f64, usize, u32)> = (from..self.sent.len())
                .filter(|&s| self.lengths[s] <= room)
                .map(|s| {
                    let g = self.gain(s);
                    (g as f64 / self.lengths[s].max(1) as f64, s, g)
                })
                .filter(|c| c.2 > 0)
                .collect();
            cand.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut bound = here as f64;
            let mut left = room as f64;
            for &(ratio, s, g) in &cand {
                let l = self.lengths[s] as f64;
                if l <= left {
                    bound += g as f64;
                    left -= l;
                } else {
                    bound += ratio * left;
                    break;
                }
            }
            if bound.floor() as u32 <= self.best {
                return;
            }
            for s in from..self.sent.len() {
                if self.lengths[s] > room || self.gain(s) == 0 {
                    continue;
                }
                for &(v, k) in &self.sent[s] {
                    self.counts[v] += k;
                }
                self.run(s + 1, room - self.lengths[s]);
                for &(v, k) in &self.sent[s] {
                    self.counts[v] -= k;
                }
            }
        }
    }
    let mut bb = Bb { clip: &clip, sent: &sent_counts, lengths: &lengths, counts: vec![0; vocab.len()], best: 0 };
    bb.run(0, capacity);
    Ok(bb.best as f64 / total as f64)
}
