//! Offline runs of a session against a simulated user and expert.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::DocumentCluster;
use crate::error::{Error, Result};
use crate::eval::rouge::{rouge_scores, RougeMode, RougeScore, TRUNCATION_TOKENS};
use crate::preflearn::{self, PreferenceRecord};
use crate::session::{Event, QueryView, Session, Stage, SummaryQuery};
use crate::simuser::{GroundTruthReward, GroundTruthUser};
use crate::stats::kendall_tau;
use crate::sumgen::{Summary, SummaryRecord};

const USER_STREAM: u64 = 0x75_5e_72;

/// Answers a session's questions on behalf of a simulated user and expert.
pub struct Responder {
    pub user: GroundTruthUser,
    pub expert: GroundTruthReward,
    rng: ChaCha8Rng,
}

impl Responder {
    pub fn new(user: GroundTruthUser, expert: GroundTruthReward, seed: u64) -> Self {
        Self { user, expert, rng: ChaCha8Rng::seed_from_u64(seed ^ USER_STREAM) }
    }

    pub fn answer(&mut self, left: usize, right: usize, round: usize) -> Result<PreferenceRecord> {
        self.user.answer_preference(left, right, round, &mut self.rng)
    }

    pub fn judge(&self, cluster: &DocumentCluster, a: &Summary, b: &Summary) -> Result<u8> {
        self.expert.prefer(a, b, cluster)
    }

    pub fn score(&self, cluster: &DocumentCluster, s: &Summary) -> Result<f64> {
        self.expert.score_summary(s, cluster)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftPoint {
    pub round: usize,
    pub sentence_ids: Vec<usize>,
    pub rouge1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    pub config: RunConfig,
    pub cluster_id: String,
    pub summary: SummaryRecord,
    pub rouge: RougeScore<f64>,
    pub ground_truth_value: f64,
    /// Kendall tau between learned and true concept utilities.
    pub kendall_tau: f64,
    pub rounds: usize,
    pub judgments: usize,
    pub policy_curve: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub drafts: Vec<DraftPoint>,
}

/// Push one answer through the session for whatever it is waiting on.
/// Returns false once nothing more is asked.
pub fn respond_once(session: &mut Session, responder: &mut Responder) -> Result<bool> {
    match session.stage() {
        Stage::Elicitation => {
            let (view, _) = session.next_query()?;
            let QueryView::Pending { left, right, round, .. } = view else {
                return Err(Error::validation("elicitation stage without a query"));
            };
            let record = responder.answer(left.id, right.id, round)?;
            session.feedback(record.left_id, record.right_id, record.label)?;
            Ok(true)
        }
        Stage::Reward => {
            let pool = session.pool().expect("pool exists in the reward stage").clone();
            match session.summary_query()? {
                Some(SummaryQuery::Pair { left, right }) => {
                    let label = responder.judge(session.cluster(), &pool.summaries[left], &pool.summaries[right])?;
                    session.summary_preference(left, right, label)?;
                }
                Some(SummaryQuery::Score { summary }) => {
                    let score = responder.score(session.cluster(), &pool.summaries[summary])?;
                    session.summary_score(summary, score)?;
                }
                None => return Err(Error::validation("reward stage without a pending judgment")),
            }
            Ok(true)
        }
        _ => Ok(false),
    }
}

fn rouge_of(cluster: &DocumentCluster, summary: &Summary) -> Result<RougeScore<f64>> {
    let refs = cluster.reference_tokens();
    if refs.is_empty() {
        return Err(Error::validation("simulation needs reference summaries"));
    }
    rouge_scores(&summary.tokens(cluster), &refs, Some(TRUNCATION_TOKENS), RougeMode::Recall)
}

/// Run a full session to its final summary.
pub fn simulate(cluster: DocumentCluster, user: &GroundTruthUser, config: &RunConfig) -> Result<SimulationOutcome> {
    run(cluster, user, config, false).map(|(o, _)| o)
}

/// Like [`simulate`], also recording the draft after every answer and
/// returning the event log.
pub fn simulate_traced(
    cluster: DocumentCluster,
    user: &GroundTruthUser,
    config: &RunConfig,
) -> Result<(SimulationOutcome, Vec<Event>)> {
    run(cluster, user, config, true)
}

fn run(cluster: DocumentCluster, user: &GroundTruthUser, config: &RunConfig, trace: bool) -> Result<(SimulationOutcome, Vec<Event>)> {
    let mut user = user.clone();
    user.noise = config.user_noise;
    let expert = GroundTruthReward::for_cluster(&cluster).with_coefficients(config.alpha, config.beta, config.gamma);
    let (mut session, _) = Session::create(cluster, config.clone())?;
    let mut responder = Responder::new(user, expert, config.seed);
    let mut drafts = Vec::new();
    loop {
        let before = session.history().len();
        if !respond_once(&mut session, &mut responder)? {
            break;
        }
        if trace && session.history().len() > before {
            let draft = session.draft()?;
            drafts.push(DraftPoint {
                round: session.history().len(),
                rouge1: rouge_of(session.cluster(), &draft)?.rouge1,
                sentence_ids: draft.sentence_ids,
            });
        }
    }
    let cluster = session.cluster();
    let summary = session.final_summary()?;
    let learned: Vec<f64> = preflearn::utilities(session.utility_model(), cluster)?;
    let outcome = SimulationOutcome {
        config: config.clone(),
        cluster_id: cluster.id.clone(),
        summary: summary.record(cluster),
        rouge: rouge_of(cluster, summary)?,
        ground_truth_value: responder.expert.score_summary(summary, cluster)?,
        kendall_tau: kendall_tau(&learned, &responder.user.utilities),
        rounds: session.history().len(),
        judgments: session.snapshot().judgments.len(),
        policy_curve: session.policy_curve().to_vec(),
        drafts,
    };
    Ok((outcome, session.events().to_vec()))
}

/// Share of the upper-bound ROUGE-1 a draft must reach to count as converged.
pub const CONVERGENCE_FRACTION: f64 = 0.85;

/// First round whose draft reaches `fraction` of the upper bound `bound`,
/// or one past the last round when none does.
pub fn rounds_to_converge(drafts: &[DraftPoint], bound: f64, fraction: f64) -> usize {
    drafts
        .iter()
        .find(|d| d.rouge1 >= fraction * bound - 1e-12)
        .map_or_else(|| drafts.last().map_or(0, |d| d.round) + 1, |d| d.round)
}
