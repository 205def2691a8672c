//! Summary construction as an episodic MDP solved with linear TD(0).
//!
//! Two modes share one model type. `Bandit` treats every pool summary as an
//! arm with one-hot features, so `π(y)` is a softmax over the pool.
//! `Sequential` builds a draft sentence by sentence with features taken from
//! the draft's summary features plus the action's marginal concept gain.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DocumentCluster;
use crate::error::{Error, Result};
use crate::reward::{summary_features, RewardModel};
use crate::scalar::{all_finite, Scalar};
use crate::simuser::GroundTruthReward;
use crate::sumgen::{Summary, SummaryPool};

pub const DEFAULT_POLICY_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_EPISODES: usize = 2000;
pub const TEMPERATURE_START: f64 = 1.0;
pub const TEMPERATURE_END: f64 = 0.1;
pub const CHECKPOINTS: usize = 10;

/// Anything that can score a finished summary.
pub trait SummaryScorer {
    fn score(&self, summary: &Summary, cluster: &DocumentCluster) -> Result<f64>;
}

impl SummaryScorer for GroundTruthReward {
    fn score(&self, summary: &Summary, cluster: &DocumentCluster) -> Result<f64> {
        self.score_summary(summary, cluster)
    }
}

/// Wraps a closure as a scorer.
pub struct FnScorer<F>(pub F);

impl<F: Fn(&Summary) -> f64> SummaryScorer for FnScorer<F> {
    fn score(&self, summary: &Summary, _: &DocumentCluster) -> Result<f64> {
        Ok((self.0)(summary))
    }
}

/// The learned reward `V*` evaluated on summary features.
pub struct RewardScorer<'a, T> {
    pub model: &'a RewardModel<T>,
    pub references: Option<Vec<Vec<String>>>,
    pub length_budget: usize,
}

impl<'a, T: Scalar> RewardScorer<'a, T> {
    pub fn new(model: &'a RewardModel<T>, cluster: &DocumentCluster, length_budget: usize) -> Self {
        let refs = cluster.reference_tokens();
        Self { model, references: (!refs.is_empty()).then_some(refs), length_budget }
    }
}

impl<T: Scalar> SummaryScorer for RewardScorer<'_, T> {
    fn score(&self, summary: &Summary, cluster: &DocumentCluster) -> Result<f64> {
        let f = summary_features(summary, cluster, self.references.as_deref(), self.length_budget);
        Ok(self.model.value(&f).as_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftState {
    pub chosen_sentence_ids: Vec<usize>,
    pub remaining_budget: usize,
    pub terminated: bool,
}

impl DraftState {
    /// Empty draft under the strict limit `Σ l < length_budget`.
    pub fn new(length_budget: usize) -> Self {
        Self { chosen_sentence_ids: Vec::new(), remaining_budget: length_budget.saturating_sub(1), terminated: false }
    }

    pub fn summary(&self, cluster: &DocumentCluster, weights: &[f64], preferred: &HashSet<usize>) -> Result<Summary> {
        Summary::from_sentences(cluster, &self.chosen_sentence_ids, weights, preferred)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Terminate,
    Add(usize),
}

pub fn actions(state: &DraftState, cluster: &DocumentCluster) -> Result<Vec<Action>> {
    if state.terminated {
        return Err(Error::Precondition { stage: "terminal".into(), message: "no actions from a finished draft".into() });
    }
    let mut out = vec![Action::Terminate];
    out.extend(
        cluster
            .sentences
            .iter()
            .enumerate()
            .filter(|(j, s)| s.length <= state.remaining_budget && !state.chosen_sentence_ids.contains(j))
            .map(|(j, _)| Action::Add(j)),
    );
    Ok(out)
}

pub fn step(state: &DraftState, action: Action, cluster: &DocumentCluster) -> Result<DraftState> {
    if !actions(state, cluster)?.contains(&action) {
        return Err(Error::validation(format!("{action:?} is not available")));
    }
    let mut next = state.clone();
    match action {
        Action::Terminate => next.terminated = true,
        Action::Add(j) => {
            next.chosen_sentence_ids.push(j);
            next.remaining_budget -= cluster.sentences[j].length;
        }
    }
    Ok(next)
}

/// `V*(summary)` at a terminal state, 0 elsewhere.
pub fn episode_reward<S: SummaryScorer + ?Sized>(
    state: &DraftState,
    scorer: &S,
    cluster: &DocumentCluster,
    weights: &[f64],
    preferred: &HashSet<usize>,
) -> Result<f64> {
    if !state.terminated {
        return Ok(0.0);
    }
    scorer.score(&state.summary(cluster, weights, preferred)?, cluster)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    #[default]
    Bandit,
    Sequential,
}

impl fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyMode::Bandit => "bandit",
            PolicyMode::Sequential => "sequential",
        })
    }
}

impl FromStr for PolicyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bandit" => Ok(PolicyMode::Bandit),
            "sequential" => Ok(PolicyMode::Sequential),
            other => Err(Error::validation(format!("unknown policy mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub mode: PolicyMode,
    pub episodes: usize,
    pub learning_rate: f64,
    pub temperature_start: f64,
    pub temperature_end: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            mode: PolicyMode::Bandit,
            episodes: DEFAULT_EPISODES,
            learning_rate: DEFAULT_POLICY_LEARNING_RATE,
            temperature_start: TEMPERATURE_START,
            temperature_end: TEMPERATURE_END,
        }
    }
}

impl PolicyConfig {
    /// Linear anneal from the start to the end temperature.
    pub fn temperature(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            return self.temperature_end;
        }
        let f = episode as f64 / (self.episodes - 1) as f64;
        self.temperature_start + (self.temperature_end - self.temperature_start) * f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel<T> {
    pub mode: PolicyMode,
    pub weights: Vec<T>,
    pub temperature: T,
    pub episodes: usize,
}

impl<T: Scalar> PolicyModel<T> {
    pub fn untrained(mode: PolicyMode, width: usize) -> Self {
        Self { mode, weights: vec![T::zero(); width], temperature: T::of(TEMPERATURE_START), episodes: 0 }
    }
}

/// Everything an episode needs to see.
pub struct PolicyEnv<'a, S: ?Sized> {
    pub cluster: &'a DocumentCluster,
    pub pool: &'a SummaryPool,
    pub scorer: &'a S,
    pub concept_weights: &'a [f64],
    pub preferred: &'a HashSet<usize>,
}

impl<'a, S: SummaryScorer + ?Sized> PolicyEnv<'a, S> {
    fn references(&self) -> Option<Vec<Vec<String>>> {
        let refs = self.cluster.reference_tokens();
        (!refs.is_empty()).then_some(refs)
    }

    fn feature_width(&self) -> usize {
        crate::reward::summary_schema(&self.cluster.schema).len() + 1
    }

    /// State–action features for the sequential mode.
    fn features(&self, state: &DraftState, action: Action, refs: Option<&[Vec<String>]>) -> Result<Vec<f64>> {
        let (ids, gain) = match action {
            Action::Terminate => (state.chosen_sentence_ids.clone(), 0.0),
            Action::Add(j) => {
                let before = state.summary(self.cluster, self.concept_weights, self.preferred)?;
                let mut ids = state.chosen_sentence_ids.clone();
                ids.push(j);
                let after = Summary::from_sentences(self.cluster, &ids, self.concept_weights, self.preferred)?;
                let total: f64 = self.concept_weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
                (ids, (after.score - before.score) / total)
            }
        };
        let summary = Summary::from_sentences(self.cluster, &ids, self.concept_weights, self.preferred)?;
        let mut f = summary_features(&summary, self.cluster, refs, self.pool.budget_l).0;
        f.push(gain);
        Ok(f)
    }
}

fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    let t = temperature.max(1e-12);
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| ((v - m) / t).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn sample(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn q<T: Scalar>(w: &[T], f: &[f64]) -> f64 {
    w.iter().zip(f).map(|(a, b)| a.as_f64() * b).sum()
}

fn td_update<T: Scalar>(w: &mut [T], f: &[f64], error: f64, lr: f64) {
    for (wi, fi) in w.iter_mut().zip(f) {
        *wi = *wi + T::of(lr * error * fi);
    }
}

/// `π` over the pool (bandit) or over the available actions of `state`.
pub fn policy_probabilities<T: Scalar, S: SummaryScorer + ?Sized>(
    model: &PolicyModel<T>,
    env: &PolicyEnv<'_, S>,
    state: &DraftState,
) -> Result<Vec<f64>> {
    let t = model.temperature.as_f64();
    match model.mode {
        PolicyMode::Bandit => Ok(softmax(&model.weights.iter().map(|w| w.as_f64()).collect::<Vec<_>>(), t)),
        PolicyMode::Sequential => {
            let refs = env.references();
            let qs = actions(state, env.cluster)?
                .into_iter()
                .map(|a| Ok(q(&model.weights, &env.features(state, a, refs.as_deref())?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(softmax(&qs, t))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrace<T> {
    pub model: PolicyModel<T>,
    /// `(episode, true score of the greedy summary)` at evenly spaced checkpoints.
    pub curve: Vec<(usize, f64)>,
}

pub fn train_policy<T: Scalar, S: SummaryScorer + ?Sized>(
    env: &PolicyEnv<'_, S>,
    config: &PolicyConfig,
    seed: u64,
) -> Result<PolicyTrace<T>> {
    if config.episodes == 0 {
        return Err(Error::validation("policy training needs at least one episode"));
    }
    if !(config.learning_rate > 0.0) || !(config.temperature_end > 0.0) || !(config.temperature_start > 0.0) {
        return Err(Error::validation("learning rate and temperatures must be positive"));
    }
    match config.mode {
        PolicyMode::Bandit if env.pool.is_empty() => Err(Error::validation("cannot train on an empty pool")),
        PolicyMode::Sequential if env.cluster.sentences.is_empty() => {
            Err(Error::validation("cannot train on a cluster without sentences"))
        }
        PolicyMode::Bandit => train_bandit(env, config, seed),
        PolicyMode::Sequential => train_sequential(env, config, seed),
    }
}

fn checkpoint_at(config: &PolicyConfig, episode: usize) -> bool {
    let every = (config.episodes / CHECKPOINTS).max(1);
    (episode + 1) % every == 0 || episode + 1 == config.episodes
}

fn train_bandit<T: Scalar, S: SummaryScorer + ?Sized>(
    env: &PolicyEnv<'_, S>,
    config: &PolicyConfig,
    seed: u64,
) -> Result<PolicyTrace<T>> {
    let rewards = env
        .pool
        .summaries
        .iter()
        .map(|s| env.scorer.score(s, env.cluster))
        .collect::<Result<Vec<f64>>>()?;
    let n = rewards.len();
    let mut model = PolicyModel::<T>::untrained(PolicyMode::Bandit, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::new();
    let mut onehot = vec![0.0; n];
    for ep in 0..config.episodes {
        let t = config.temperature(ep);
        model.temperature = T::of(t);
        let values: Vec<f64> = model.weights.iter().map(|w| w.as_f64()).collect();
        let arm = sample(&softmax(&values, t), &mut rng);
        onehot[arm] = 1.0;
        td_update(&mut model.weights, &onehot, rewards[arm] - values[arm], config.learning_rate);
        onehot[arm] = 0.0;
        model.episodes = ep + 1;
        if checkpoint_at(config, ep) {
            let pick = argmax(&model.weights.iter().map(|w| w.as_f64()).collect::<Vec<_>>());
            curve.push((ep + 1, rewards[pick]));
        }
    }
    finish(model, curve)
}

fn train_sequential<T: Scalar, S: SummaryScorer + ?Sized>(
    env: &PolicyEnv<'_, S>,
    config: &PolicyConfig,
    seed: u64,
) -> Result<PolicyTrace<T>> {
    let refs = env.references();
    let mut model = PolicyModel::<T>::untrained(PolicyMode::Sequential, env.feature_width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::new();
    let choose = |model: &PolicyModel<T>, state: &DraftState, t: f64, rng: &mut ChaCha8Rng| -> Result<(Action, Vec<f64>, f64)> {
        let acts = actions(state, env.cluster)?;
        let feats = acts
            .iter()
            .map(|&a| env.features(state, a, refs.as_deref()))
            .collect::<Result<Vec<_>>>()?;
        let qs: Vec<f64> = feats.iter().map(|f| q(&model.weights, f)).collect();
        let i = sample(&softmax(&qs, t), rng);
        Ok((acts[i], feats[i].clone(), qs[i]))
    };
    for ep in 0..config.episodes {
        let t = config.temperature(ep);
        model.temperature = T::of(t);
        let mut state = DraftState::new(env.pool.budget_l);
        let (mut action, mut feats, mut value) = choose(&model, &state, t, &mut rng)?;
        loop {
            let next = step(&state, action, env.cluster)?;
            if next.terminated {
                let r = episode_reward(&next, env.scorer, env.cluster, env.concept_weights, env.preferred)?;
                td_update(&mut model.weights, &feats, r - value, config.learning_rate);
                break;
            }
            let (a2, f2, v2) = choose(&model, &next, t, &mut rng)?;
            td_update(&mut model.weights, &feats, v2 - value, config.learning_rate);
            state = next;
            action = a2;
            feats = f2;
            value = q(&model.weights, &feats);
        }
        model.episodes = ep + 1;
        if checkpoint_at(config, ep) {
            let s = best_summary(&model, env)?;
            curve.push((ep + 1, env.scorer.score(&s, env.cluster)?));
        }
    }
    finish(model, curve)
}

fn finish<T: Scalar>(model: PolicyModel<T>, curve: Vec<(usize, f64)>) -> Result<PolicyTrace<T>> {
    if !all_finite(&model.weights) {
        return Err(Error::validation("policy weights diverged"));
    }
    Ok(PolicyTrace { model, curve })
}

/// Greedy decoding: the highest-valued pool member, or a greedy rollout.
pub fn best_summary<T: Scalar, S: SummaryScorer + ?Sized>(model: &PolicyModel<T>, env: &PolicyEnv<'_, S>) -> Result<Summary> {
    match model.mode {
        PolicyMode::Bandit => {
            if env.pool.is_empty() {
                return Err(Error::validation("the pool is empty"));
            }
            if model.weights.len() != env.pool.len() {
                return Err(Error::SchemaMismatch { expected: env.pool.len(), got: model.weights.len() });
            }
            let values: Vec<f64> = model.weights.iter().map(|w| w.as_f64()).collect();
            Ok(env.pool.summaries[argmax(&values)].clone())
        }
        PolicyMode::Sequential => {
            let refs = env.references();
            let mut state = DraftState::new(env.pool.budget_l);
            while !state.terminated {
                let acts = actions(&state, env.cluster)?;
                let qs = acts
                    .iter()
                    .map(|&a| Ok(q(&model.weights, &env.features(&state, a, refs.as_deref())?)))
                    .collect::<Result<Vec<_>>>()?;
                state = step(&state, acts[argmax(&qs)], env.cluster)?;
            }
            state.summary(env.cluster, env.concept_weights, env.preferred)
        }
    }
}

/// `episode,greedy_value` CSV with a header row.
pub fn learning_curve_csv(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("episode,greedy_value\n");
    for (ep, v) in curve {
        out.push_str(&format!("{ep},{v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ConceptUnit, Document};

    fn cluster() -> DocumentCluster {
        DocumentCluster::from_documents(
            "p",
            vec![Document {
                id: "d".into(),
                text: "alpha bravo charlie delta echo. foxtrot golf hotel india juliet. kilo lima mike november oscar."
                    .into(),
            }],
            vec![],
            ConceptUnit::Sentence,
        )
        .unwrap()
    }

    fn three_arm_pool(c: &DocumentCluster) -> SummaryPool {
        let none = HashSet::new();
        let summaries = (0..3).map(|i| Summary::from_sentences(c, &[i], &[0.0f64; 3], &none).unwrap()).collect();
        SummaryPool { summaries, budget_l: 6 }
    }

    #[test]
    fn action_sets() {
        let c = cluster();
        assert_eq!(actions(&DraftState::new(1), &c).unwrap(), vec![Action::Terminate]);
        assert_eq!(actions(&DraftState::new(100), &c).unwrap().len(), 4);
        let s = DraftState::new(11);
        let s = step(&s, Action::Add(0), &c).unwrap();
        assert_eq!(actions(&s, &c).unwrap().len(), 3);
        let done = step(&s, Action::Terminate, &c).unwrap();
        assert!(actions(&done, &c).is_err());
    }

    #[test]
    fn reward_only_at_the_end() {
        let c = cluster();
        let scorer = FnScorer(|s: &Summary| s.length as f64);
        let none = HashSet::new();
        let s = step(&DraftState::new(20), Action::Add(1), &c).unwrap();
        assert_eq!(episode_reward(&s, &scorer, &c, &[0.0; 3], &none).unwrap(), 0.0);
        let s = step(&s, Action::Terminate, &c).unwrap();
        assert_eq!(episode_reward(&s, &scorer, &c, &[0.0; 3], &none).unwrap(), 5.0);
    }

    #[test]
    fn bandit_finds_best_arm() {
        let c = cluster();
        let pool = three_arm_pool(&c);
        let values = [1.0, 0.5, 0.1];
        let scorer = FnScorer(|s: &Summary| values[s.sentence_ids[0]]);
        let none = HashSet::new();
        let env = PolicyEnv { cluster: &c, pool: &pool, scorer: &scorer, concept_weights: &[0.0; 3], preferred: &none };
        let trace = train_policy::<f64, _>(&env, &PolicyConfig::default(), 4).unwrap();
        assert_eq!(best_summary(&trace.model, &env).unwrap().sentence_ids, vec![0]);
        let p = policy_probabilities(&trace.model, &env, &DraftState::new(6)).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(trace.curve.len(), CHECKPOINTS);
        assert!(learning_curve_csv(&trace.curve).starts_with("episode,greedy_value\n"));
    }

    #[test]
    fn single_summary_pool() {
        let c = cluster();
        let mut pool = three_arm_pool(&c);
        pool.summaries.truncate(1);
        let scorer = FnScorer(|_: &Summary| 0.3);
        let none = HashSet::new();
        let env = PolicyEnv { cluster: &c, pool: &pool, scorer: &scorer, concept_weights: &[0.0; 3], preferred: &none };
        let trace = train_policy::<f32, _>(&env, &PolicyConfig { episodes: 10, ..Default::default() }, 0).unwrap();
        let p = policy_probabilities(&trace.model, &env, &DraftState::new(6)).unwrap();
        assert_eq!(p, vec![1.0]);
        assert_eq!(best_summary(&trace.model, &env).unwrap(), pool.summaries[0]);
    }

    #[test]
    fn sequential_learns_to_pick_the_valuable_sentence() {
        let c = crate::corpus::featurize_concepts(cluster(), None).unwrap();
        let pool = three_arm_pool(&c);
        let scorer = FnScorer(|s: &Summary| if s.sentence_ids == vec![2] { 1.0 } else { 0.0 });
        let none = HashSet::new();
        let weights = [0.0, 0.0, 1.0];
        let env = PolicyEnv { cluster: &c, pool: &pool, scorer: &scorer, concept_weights: &weights, preferred: &none };
        let cfg = PolicyConfig { mode: PolicyMode::Sequential, episodes: 400, learning_rate: 0.1, ..Default::default() };
        let trace = train_policy::<f64, _>(&env, &cfg, 1).unwrap();
        let s = best_summary(&trace.model, &env).unwrap();
        assert_eq!(s.sentence_ids, vec![2]);
        assert!(s.length < pool.budget_l);
    }

    #[test]
    fn rejects_degenerate_input() {
        let c = cluster();
        let pool = SummaryPool { summaries: vec![], budget_l: 6 };
        let scorer = FnScorer(|_: &Summary| 0.0);
        let none = HashSet::new();
        let env = PolicyEnv { cluster: &c, pool: &pool, scorer: &scorer, concept_weights: &[0.0; 3], preferred: &none };
        assert!(train_policy::<f64, _>(&env, &PolicyConfig::default(), 0).is_err());
        assert!(train_policy::<f64, _>(&env, &PolicyConfig { episodes: 0, ..Default::default() }, 0).is_err());
    }
}
