#![allow(dead_code)]

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use prefsum::config::RunConfig;
use prefsum::policy::PolicyConfig;
use prefsum::session::{QueryView, Snapshot, Stage, SummaryQuery};
use prefsum::simulate::Responder;
use prefsum::simuser::{make_synthetic_cluster, GroundTruthReward, SyntheticInstance, SyntheticSpec};
use prefsum::{Summary, SummaryRecord};
use prefsum_service::{router, Store};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const SMALL_SEED: u64 = 5;

pub fn small_spec() -> SyntheticSpec {
    SyntheticSpec { sentences: 12, vocab_size: 24, documents: 3, ..SyntheticSpec::default() }
}

pub fn small() -> SyntheticInstance {
    make_synthetic_cluster(&small_spec(), SMALL_SEED).unwrap()
}

pub fn quick(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        budget: 4,
        reward_budget: 3,
        reward_iterations: 200,
        policy: PolicyConfig { episodes: 200, ..PolicyConfig::default() },
        ..RunConfig::default()
    }
}

pub struct Client {
    pub app: Router,
}

impl Client {
    pub fn open(dir: &Path) -> Self {
        Self { app: router(Arc::new(Store::open(dir).unwrap())) }
    }

    pub async fn raw(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(v) => req.header("content-type", "application/json").body(Body::from(v.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (s, b) = self.raw(method, uri, body).await;
        (s, if b.is_empty() { Value::Null } else { serde_json::from_slice(&b).unwrap() })
    }

    pub async fn ok<T: DeserializeOwned>(&self, method: Method, uri: &str, body: Option<Value>) -> T {
        let (s, v) = self.call(method, uri, body).await;
        assert!(s.is_success(), "{uri}: {s} {v}");
        serde_json::from_value(v).unwrap()
    }

    pub async fn create(&self, config: &RunConfig) -> String {
        let body = json!({ "synthetic": { "spec": small_spec(), "seed": SMALL_SEED }, "config": config });
        let (s, v) = self.call(Method::POST, "/sessions", Some(body)).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    pub async fn snapshot(&self, id: &str) -> Snapshot {
        self.ok(Method::GET, &format!("/sessions/{id}"), None).await
    }
}

fn summary_of(inst: &SyntheticInstance, r: &SummaryRecord) -> Summary {
    Summary::from_sentences::<f64>(&inst.cluster, &r.sentence_ids, &[], &HashSet::new()).unwrap()
}

/// Answer every question of a session over HTTP as the simulated user and
/// expert would, recording (event count, snapshot) after every command.
pub async fn drive(client: &Client, id: &str, inst: &SyntheticInstance, config: &RunConfig) -> Vec<(usize, Snapshot)> {
    let expert = GroundTruthReward::for_cluster(&inst.cluster).with_coefficients(config.alpha, config.beta, config.gamma);
    let mut responder = Responder::new(inst.user.clone(), expert, config.seed);
    let mut marks = Vec::new();
    let mut mark = |s: Snapshot| marks.push((s.events, s));
    mark(client.snapshot(id).await);
    loop {
        let snap = client.snapshot(id).await;
        match snap.stage {
            Stage::Elicitation => {
                let view: QueryView = client.ok(Method::GET, &format!("/sessions/{id}/query"), None).await;
                mark(client.snapshot(id).await);
                let QueryView::Pending { left, right, round, .. } = view else { panic!("no pending query") };
                let r = responder.answer(left.id, right.id, round).unwrap();
                let body = json!({ "left": r.left_id, "right": r.right_id, "label": r.label });
                let _: Value = client.ok(Method::POST, &format!("/sessions/{id}/feedback"), Some(body)).await;
            }
            Stage::Reward => {
                let pool: Vec<SummaryRecord> = client.ok(Method::GET, &format!("/sessions/{id}/pool"), None).await;
                let q: Option<SummaryQuery> = client.ok(Method::GET, &format!("/sessions/{id}/summary-query"), None).await;
                match q.expect("reward stage has a pending judgment") {
                    SummaryQuery::Pair { left, right } => {
                        let label = responder
                            .judge(&inst.cluster, &summary_of(inst, &pool[left]), &summary_of(inst, &pool[right]))
                            .unwrap();
                        let body = json!({ "left": left, "right": right, "label": label });
                        let _: Value = client.ok(Method::POST, &format!("/sessions/{id}/summary-preference"), Some(body)).await;
                    }
                    SummaryQuery::Score { summary } => {
                        let score = responder.score(&inst.cluster, &summary_of(inst, &pool[summary])).unwrap();
                        let body = json!({ "summary": summary, "score": score });
                        let _: Value = client.ok(Method::POST, &format!("/sessions/{id}/summary-score"), Some(body)).await;
                    }
                }
            }
            _ => break,
        }
        mark(client.snapshot(id).await);
    }
    let _: Value = client.ok(Method::POST, &format!("/sessions/{id}/rating"), Some(json!({ "score": 7 }))).await;
    mark(client.snapshot(id).await);
    marks
}

/// Copy a data directory, keeping only the first `k` events of one session.
pub fn truncated_copy(src: &Path, dst: &Path, id: &str, k: usize) {
    std::fs::copy(src.join("index.jsonl"), dst.join("index.jsonl")).unwrap();
    let log = std::fs::read_to_string(src.join(format!("{id}.jsonl"))).unwrap();
    let kept: String = log.lines().take(k).map(|l| format!("{l}\n")).collect();
    std::fs::write(dst.join(format!("{id}.jsonl")), kept).unwrap();
}
