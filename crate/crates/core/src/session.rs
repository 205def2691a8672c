//! The staged interactive session, driven by an append-only event list.
//!
//! Every state change goes through [`Session::apply`], so replaying the
//! events of a session rebuilds it exactly. Commands validate their input,
//! emit events, apply them, then advance through the automatic stages
//! (pool building and policy training).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::active::{
    coreference_table, heuristic_pick, mentioned_concepts, partition_concepts, strategy_pick, Partition,
    ProbabilityTable, QueryContext, QueryState, SimilarityModel, Strategy,
};
use crate::config::{RunConfig, Variant};
use crate::corpus::{featurize_concepts, DocumentCluster};
use crate::error::{Error, Result};
use crate::policy::{best_summary, train_policy, PolicyEnv, RewardScorer};
use crate::preflearn::{self, rank_weights, PreferenceRecord, UtilityModel};
use crate::reward::{fit_pairwise, fit_point, pool_features, select_query_summaries, RewardMode, RewardModel, SummaryFeatureVector};
use crate::sumgen::{build_pool, generate_optimal_with, Summary, SummaryPool, SummaryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Elicitation,
    Pool,
    Reward,
    Policy,
    Final,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Elicitation => "elicitation",
            Stage::Pool => "pool",
            Stage::Reward => "reward",
            Stage::Policy => "policy",
            Stage::Final => "final",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One expert judgment on pool summaries (ids index the pool).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Judgment {
    Preference { left: usize, right: usize, label: u8 },
    Score { summary: usize, score: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    Created { cluster: Box<DocumentCluster>, config: Box<RunConfig> },
    QueryIssued { left: usize, right: usize, round: usize },
    Feedback { left: usize, right: usize, label: u8, round: usize },
    PoolBuilt { size: usize },
    RewardFeedback { judgment: Judgment },
    SummaryEmitted { summary: SummaryRecord },
    Rated { score: u8 },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Created { .. } => "created",
            Event::QueryIssued { .. } => "query_issued",
            Event::Feedback { .. } => "feedback",
            Event::PoolBuilt { .. } => "pool_built",
            Event::RewardFeedback { .. } => "reward_feedback",
            Event::SummaryEmitted { .. } => "summary_emitted",
            Event::Rated { .. } => "rated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptView {
    pub id: usize,
    pub surface: String,
    /// First sentence containing the concept.
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QueryView {
    Pending { left: ConceptView, right: ConceptView, round: usize, budget: usize, budget_remaining: usize },
    Exhausted { stage: Stage },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SummaryQuery {
    Pair { left: usize, right: usize },
    Score { summary: usize },
}

/// Observable state, used to compare live and replayed sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub stage: Stage,
    pub round: usize,
    pub budget: usize,
    pub pending: Option<(usize, usize)>,
    pub history: Vec<PreferenceRecord>,
    pub utility_weights: Vec<f64>,
    pub pool: Vec<SummaryRecord>,
    pub reward_weights: Vec<f64>,
    pub judgments: Vec<Judgment>,
    pub final_summary: Option<SummaryRecord>,
    pub rating: Option<u8>,
    pub events: usize,
}

#[derive(Debug, Clone)]
pub struct Session {
    cluster: DocumentCluster,
    config: RunConfig,
    budget: usize,
    table: ProbabilityTable,
    partition: Partition,
    query: QueryState,
    pending: Option<(usize, usize)>,
    model: UtilityModel<f64>,
    stage: Stage,
    pool: Option<SummaryPool>,
    features: Vec<SummaryFeatureVector>,
    reward: RewardModel<f64>,
    judgments: Vec<Judgment>,
    shown: Vec<usize>,
    champion: Option<usize>,
    final_summary: Option<Summary>,
    policy_curve: Vec<(usize, f64)>,
    rating: Option<u8>,
    events: Vec<Event>,
    staged_final: Option<Summary>,
}

fn precondition(stage: Stage, message: impl Into<String>) -> Error {
    Error::Precondition { stage: stage.to_string(), message: message.into() }
}

impl Session {
    /// Start a session. The cluster is featurized here when needed so the
    /// `created` event carries everything replay requires.
    pub fn create(cluster: DocumentCluster, config: RunConfig) -> Result<(Self, Vec<Event>)> {
        config.validate()?;
        let cluster = if cluster.is_featurized() { cluster } else { featurize_concepts(cluster, None)? };
        cluster.validate()?;
        let event = Event::Created { cluster: Box::new(cluster), config: Box::new(config) };
        let mut session = Self::initial(&event)?;
        session.events.push(event);
        let mut emitted = session.events.clone();
        emitted.extend(session.advance()?);
        Ok((session, emitted))
    }

    /// Rebuild a session from its event list.
    pub fn replay(events: &[Event]) -> Result<Self> {
        let (first, rest) = events.split_first().ok_or_else(|| Error::validation("empty event log"))?;
        let mut session = Self::initial(first)?;
        session.events.push(first.clone());
        for e in rest {
            session.apply(e.clone())?;
        }
        Ok(session)
    }

    /// Emit whatever automatic events a replayed log stopped short of.
    pub fn resume(&mut self) -> Result<Vec<Event>> {
        self.advance()
    }

    fn initial(event: &Event) -> Result<Self> {
        let Event::Created { cluster, config } = event else {
            return Err(Error::validation("an event log must start with `created`"));
        };
        let (cluster, config) = (cluster.as_ref().clone(), config.as_ref().clone());
        config.validate()?;
        let n = cluster.concepts.len();
        if n < 2 {
            return Err(Error::validation(format!("need at least 2 concepts, found {n}")));
        }
        if config.length_budget <= cluster.min_sentence_length() {
            return Err(Error::validation(format!(
                "summary length {} admits no sentence (shortest has {} tokens)",
                config.length_budget,
                cluster.min_sentence_length()
            )));
        }
        let budget = if config.variant == Variant::Pr { 0 } else { config.budget.min(n * (n - 1) / 2) };
        let mut sim = SimilarityModel::<f64>::default_trained();
        sim.form = config.sigmoid_form;
        let table = coreference_table(&sim, &cluster, None);
        let partition = partition_concepts(&table, config.local_search_iters, config.seed)?;
        let model = UtilityModel::for_cluster(&cluster)
            .with_learning_rate(config.concept_learning_rate)
            .with_epochs(config.epochs)
            .with_seed(config.seed);
        let reward = RewardModel::for_cluster(&cluster, config.reward_mode)
            .with_learning_rate(config.reward_learning_rate)
            .with_iterations(config.reward_iterations)
            .with_l2(config.reward_l2);
        Ok(Self {
            stage: if budget == 0 { Stage::Pool } else { Stage::Elicitation },
            budget,
            table,
            partition,
            query: QueryState::new(budget),
            pending: None,
            model,
            pool: None,
            features: Vec::new(),
            reward,
            judgments: Vec::new(),
            shown: Vec::new(),
            champion: None,
            final_summary: None,
            policy_curve: Vec::new(),
            rating: None,
            events: Vec::new(),
            staged_final: None,
            cluster,
            config,
        })
    }

    pub fn cluster(&self) -> &DocumentCluster {
        &self.cluster
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn history(&self) -> &[PreferenceRecord] {
        &self.query.history
    }

    pub fn utility_model(&self) -> &UtilityModel<f64> {
        &self.model
    }

    pub fn reward_model(&self) -> &RewardModel<f64> {
        &self.reward
    }

    pub fn pool(&self) -> Option<&SummaryPool> {
        self.pool.as_ref()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn policy_curve(&self) -> &[(usize, f64)] {
        &self.policy_curve
    }

    pub fn rating(&self) -> Option<u8> {
        self.rating
    }

    /// Concept weights handed to the summary generator.
    pub fn concept_weights(&self) -> Result<Vec<f64>> {
        if self.config.variant == Variant::Pr {
            return Ok(vec![1.0; self.cluster.concepts.len()]);
        }
        Ok(rank_weights(&preflearn::utilities(&self.model, &self.cluster)?))
    }

    pub fn preferred(&self) -> HashSet<usize> {
        mentioned_concepts(&self.query.history)
    }

    pub fn snapshot(&self) -> Snapshot {
        let record = |s: &Summary| s.record(&self.cluster);
        Snapshot {
            stage: self.stage,
            round: self.query.history.len(),
            budget: self.budget,
            pending: self.pending,
            history: self.query.history.clone(),
            utility_weights: self.model.weights.clone(),
            pool: self.pool.iter().flat_map(|p| p.summaries.iter().map(record)).collect(),
            reward_weights: self.reward.weights.clone(),
            judgments: self.judgments.clone(),
            final_summary: self.final_summary.as_ref().map(record),
            rating: self.rating,
            events: self.events.len(),
        }
    }

    fn concept_view(&self, id: usize) -> ConceptView {
        let c = &self.cluster.concepts[id];
        let context = c
            .sentence_ids
            .iter()
            .next()
            .map(|&s| self.cluster.sentences[s].text.clone())
            .unwrap_or_default();
        ConceptView { id, surface: c.surface.clone(), context }
    }

    fn view(&self, (a, b): (usize, usize)) -> QueryView {
        QueryView::Pending {
            left: self.concept_view(a),
            right: self.concept_view(b),
            round: self.query.history.len(),
            budget: self.budget,
            budget_remaining: self.budget - self.query.history.len(),
        }
    }

    /// The outstanding concept pair, issuing a new one when none is pending.
    pub fn next_query(&mut self) -> Result<(QueryView, Vec<Event>)> {
        if self.stage != Stage::Elicitation {
            return Ok((QueryView::Exhausted { stage: self.stage }, Vec::new()));
        }
        if let Some(p) = self.pending {
            return Ok((self.view(p), Vec::new()));
        }
        let strategy = self.config.effective_strategy();
        let (left, right) = if strategy == Strategy::Heuristic {
            heuristic_pick(&self.query, &self.partition, &self.table)?
        } else {
            let ctx = QueryContext {
                cluster: &self.cluster,
                model: &self.model,
                partition: &self.partition,
                table: &self.table,
                seed: self.config.seed,
            };
            strategy_pick(strategy, &self.query, &ctx)?
        };
        let event = Event::QueryIssued { left, right, round: self.query.round() };
        self.apply(event.clone())?;
        Ok((self.view((left, right)), vec![event]))
    }

    /// Answer the outstanding query; `label` is 1 when `left` is preferred.
    pub fn feedback(&mut self, left: usize, right: usize, label: u8) -> Result<Vec<Event>> {
        if self.stage != Stage::Elicitation {
            return Err(precondition(self.stage, "concept feedback is closed"));
        }
        if label > 1 {
            return Err(Error::validation(format!("label must be 0 or 1, got {label}")));
        }
        let Some((a, b)) = self.pending else {
            return Err(Error::Conflict("no query is outstanding".into()));
        };
        let label = if (left, right) == (a, b) {
            label
        } else if (left, right) == (b, a) {
            1 - label
        } else {
            return Err(Error::Conflict(format!("outstanding query is ({a}, {b}), got ({left}, {right})")));
        };
        let event = Event::Feedback { left: a, right: b, label, round: self.query.history.len() };
        self.apply(event.clone())?;
        let mut out = vec![event];
        out.extend(self.advance()?);
        Ok(out)
    }

    fn reward_limit(&self) -> usize {
        let n = self.pool.as_ref().map_or(0, SummaryPool::len);
        match self.config.reward_mode {
            RewardMode::Pairwise => self.config.reward_budget.min(n.saturating_sub(1)),
            RewardMode::Point => self.config.reward_budget.min(n),
        }
    }

    /// The next pool comparison (pairwise) or summary to score (point).
    pub fn summary_query(&self) -> Result<Option<SummaryQuery>> {
        if self.stage != Stage::Reward {
            return Err(precondition(self.stage, "the reward stage is not active"));
        }
        if self.judgments.len() >= self.reward_limit() {
            return Ok(None);
        }
        Ok(Some(match self.config.reward_mode {
            RewardMode::Pairwise => match self.champion {
                None => {
                    let s = select_query_summaries(&self.features, &[], 2)?;
                    SummaryQuery::Pair { left: s[0], right: s[1] }
                }
                Some(c) => {
                    let s = select_query_summaries(&self.features, &self.shown, 1)?;
                    SummaryQuery::Pair { left: c, right: s[0] }
                }
            },
            RewardMode::Point => {
                let s = select_query_summaries(&self.features, &self.shown, 1)?;
                SummaryQuery::Score { summary: s[0] }
            }
        }))
    }

    pub fn summary_preference(&mut self, left: usize, right: usize, label: u8) -> Result<Vec<Event>> {
        if self.config.reward_mode != RewardMode::Pairwise {
            return Err(precondition(self.stage, "this session collects summary scores, not preferences"));
        }
        if label > 1 {
            return Err(Error::validation(format!("label must be 0 or 1, got {label}")));
        }
        let Some(SummaryQuery::Pair { left: a, right: b }) = self.summary_query()? else {
            return Err(precondition(self.stage, "no summary comparison is outstanding"));
        };
        let label = if (left, right) == (a, b) {
            label
        } else if (left, right) == (b, a) {
            1 - label
        } else {
            return Err(Error::Conflict(format!("outstanding comparison is ({a}, {b}), got ({left}, {right})")));
        };
        self.judge(Judgment::Preference { left: a, right: b, label })
    }

    pub fn summary_score(&mut self, summary: usize, score: f64) -> Result<Vec<Event>> {
        if self.config.reward_mode != RewardMode::Point {
            return Err(precondition(self.stage, "this session collects summary preferences, not scores"));
        }
        if !score.is_finite() {
            return Err(Error::validation("score must be finite"));
        }
        let Some(SummaryQuery::Score { summary: s }) = self.summary_query()? else {
            return Err(precondition(self.stage, "no summary is awaiting a score"));
        };
        if s != summary {
            return Err(Error::Conflict(format!("summary {s} is awaiting a score, got {summary}")));
        }
        self.judge(Judgment::Score { summary, score })
    }

    fn judge(&mut self, judgment: Judgment) -> Result<Vec<Event>> {
        let event = Event::RewardFeedback { judgment };
        self.apply(event.clone())?;
        let mut out = vec![event];
        out.extend(self.advance()?);
        Ok(out)
    }

    /// User satisfaction with the final summary, 0 to 10.
    pub fn rate(&mut self, score: u8) -> Result<Vec<Event>> {
        if score > 10 {
            return Err(Error::validation(format!("rating must lie in 0..=10, got {score}")));
        }
        if self.stage != Stage::Final {
            return Err(precondition(self.stage, "ratings open once the final summary is out"));
        }
        if self.rating.is_some() {
            return Err(Error::Conflict("the session is already rated".into()));
        }
        let event = Event::Rated { score };
        self.apply(event.clone())?;
        Ok(vec![event])
    }

    /// The generator's output under the current concept weights.
    pub fn draft(&self) -> Result<Summary> {
        if self.query.history.is_empty() && self.config.variant != Variant::Pr {
            return Err(precondition(self.stage, "a draft needs at least one answer"));
        }
        generate_optimal_with(&self.cluster, &self.concept_weights()?, self.config.length_budget, &self.preferred())
    }

    pub fn final_summary(&self) -> Result<&Summary> {
        self.final_summary.as_ref().ok_or_else(|| precondition(self.stage, "the final summary is not ready"))
    }

    fn compute_final(&self) -> Result<(Summary, Vec<(usize, f64)>)> {
        let pool = self.pool.as_ref().ok_or_else(|| precondition(self.stage, "no pool"))?;
        if self.config.variant == Variant::Ge {
            return Ok((pool.summaries[0].clone(), Vec::new()));
        }
        let weights = self.concept_weights()?;
        let preferred = self.preferred();
        let scorer = RewardScorer::new(&self.reward, &self.cluster, self.config.length_budget);
        let env = PolicyEnv { cluster: &self.cluster, pool, scorer: &scorer, concept_weights: &weights, preferred: &preferred };
        let trace = train_policy::<f64, _>(&env, &self.config.policy, self.config.seed)?;
        Ok((best_summary(&trace.model, &env)?, trace.curve))
    }

    /// Emit the automatic transitions that follow from the current stage.
    fn advance(&mut self) -> Result<Vec<Event>> {
        let mut out = Vec::new();
        loop {
            let event = match self.stage {
                Stage::Pool => {
                    let pool = self.build_pool()?;
                    let event = Event::PoolBuilt { size: pool.len() };
                    self.pool = Some(pool);
                    event
                }
                Stage::Policy => {
                    let (summary, curve) = self.compute_final()?;
                    let event = Event::SummaryEmitted { summary: summary.record(&self.cluster) };
                    self.staged_final = Some(summary);
                    self.policy_curve = curve;
                    event
                }
                _ => return Ok(out),
            };
            self.apply(event.clone())?;
            out.push(event);
        }
    }

    fn build_pool(&self) -> Result<SummaryPool> {
        build_pool(
            &self.cluster,
            &self.concept_weights()?,
            self.config.length_budget,
            self.config.pool_size,
            self.config.redundancy_cap,
            &self.preferred(),
            self.config.seed,
        )
    }

    fn refit_reward(&self, judgments: &[Judgment]) -> Result<RewardModel<f64>> {
        match self.config.reward_mode {
            RewardMode::Pairwise => {
                let prefs = judgments
                    .iter()
                    .enumerate()
                    .filter_map(|(i, j)| match *j {
                        Judgment::Preference { left, right, label } => Some(PreferenceRecord::new(left, right, label, i)),
                        Judgment::Score { .. } => None,
                    })
                    .collect::<Result<Vec<_>>>()?;
                fit_pairwise(&self.reward, &prefs, &self.features)
            }
            RewardMode::Point => {
                let samples: Vec<_> = judgments
                    .iter()
                    .filter_map(|j| match *j {
                        Judgment::Score { summary, score } => Some((self.features[summary].clone(), score)),
                        Judgment::Preference { .. } => None,
                    })
                    .collect();
                fit_point(&self.reward, &samples)
            }
        }
    }

    /// Apply one event. Validation happens before any mutation, so a
    /// rejected event leaves the session untouched.
    pub fn apply(&mut self, event: Event) -> Result<()> {
        let n = self.cluster.concepts.len();
        match &event {
            Event::Created { .. } => return Err(Error::validation("`created` may only open a log")),
            Event::QueryIssued { left, right, round } => {
                if self.stage != Stage::Elicitation || self.pending.is_some() {
                    return Err(precondition(self.stage, "a query cannot be issued now"));
                }
                if *left >= n || *right >= n || left == right || self.query.is_asked(*left, *right) {
                    return Err(Error::validation(format!("invalid query pair ({left}, {right})")));
                }
                if *round != self.query.round() {
                    return Err(Error::Conflict(format!("query round {round} out of order")));
                }
                self.query.mark((*left, *right));
                self.pending = Some((*left, *right));
            }
            Event::Feedback { left, right, label, round } => {
                if self.pending != Some((*left, *right)) {
                    return Err(Error::Conflict(format!("feedback for ({left}, {right}) does not match the query")));
                }
                if *round != self.query.history.len() {
                    return Err(Error::Conflict(format!("feedback round {round} out of order")));
                }
                let record = PreferenceRecord::new(*left, *right, *label, *round)?;
                let mut history = self.query.history.clone();
                history.push(record);
                let model = if self.config.full_refit {
                    let base = UtilityModel::for_cluster(&self.cluster)
                        .with_learning_rate(self.config.concept_learning_rate)
                        .with_epochs(self.config.epochs)
                        .with_seed(self.config.seed.wrapping_add(*round as u64));
                    UtilityModel { seed: self.model.seed, ..preflearn::fit(&base, &history, &self.cluster)? }
                } else {
                    preflearn::refit_incremental(&self.model, &record, &history, &self.cluster)?
                };
                self.model = model;
                self.query.history = history;
                self.pending = None;
                if self.query.history.len() >= self.budget {
                    self.stage = Stage::Pool;
                }
            }
            Event::PoolBuilt { size } => {
                if self.stage != Stage::Pool {
                    return Err(precondition(self.stage, "the pool is already built"));
                }
                let pool = match &self.pool {
                    Some(p) => p.clone(),
                    None => self.build_pool()?,
                };
                if pool.len() != *size {
                    return Err(Error::Conflict(format!("log records a pool of {size}, rebuilt {}", pool.len())));
                }
                let refs = self.cluster.reference_tokens();
                self.features = pool_features(&pool, &self.cluster, (!refs.is_empty()).then_some(refs.as_slice()));
                self.pool = Some(pool);
                self.stage = if self.config.variant == Variant::Ge || self.reward_limit() == 0 {
                    Stage::Policy
                } else {
                    Stage::Reward
                };
            }
            Event::RewardFeedback { judgment } => {
                let expected = self.summary_query()?;
                let ok = match (judgment, &expected) {
                    (Judgment::Preference { left, right, label }, Some(SummaryQuery::Pair { left: a, right: b })) => {
                        (left, right) == (a, b) && *label <= 1
                    }
                    (Judgment::Score { summary, score }, Some(SummaryQuery::Score { summary: s })) => {
                        summary == s && score.is_finite()
                    }
                    _ => false,
                };
                if !ok {
                    return Err(Error::Conflict(format!("judgment {judgment:?} does not answer {expected:?}")));
                }
                let mut judgments = self.judgments.clone();
                judgments.push(*judgment);
                self.reward = self.refit_reward(&judgments)?;
                self.judgments = judgments;
                match *judgment {
                    Judgment::Preference { left, right, label } => {
                        for s in [left, right] {
                            if !self.shown.contains(&s) {
                                self.shown.push(s);
                            }
                        }
                        self.champion = Some(if label == 1 { left } else { right });
                    }
                    Judgment::Score { summary, .. } => self.shown.push(summary),
                }
                if self.judgments.len() >= self.reward_limit() {
                    self.stage = Stage::Policy;
                }
            }
            Event::SummaryEmitted { summary } => {
                if self.stage != Stage::Policy {
                    return Err(precondition(self.stage, "the final summary cannot be emitted now"));
                }
                let computed = match self.staged_final.take() {
                    Some(s) => s,
                    None => {
                        let (s, curve) = self.compute_final()?;
                        self.policy_curve = curve;
                        s
                    }
                };
                if computed.record(&self.cluster) != *summary {
                    return Err(Error::Conflict("logged final summary differs from the recomputed one".into()));
                }
                self.final_summary = Some(computed);
                self.stage = Stage::Final;
            }
            Event::Rated { score } => {
                if self.stage != Stage::Final || self.rating.is_some() || *score > 10 {
                    return Err(precondition(self.stage, "rating rejected"));
                }
                self.rating = Some(*score);
            }
        }
        self.events.push(event);
        Ok(())
    }
}
