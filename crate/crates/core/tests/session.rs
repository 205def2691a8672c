use prefsum::config::{RunConfig, Variant};
use prefsum::error::Error;
use prefsum::policy::PolicyConfig;
use prefsum::reward::RewardMode;
use prefsum::session::{Event, QueryView, Session, Snapshot, Stage, SummaryQuery};
use prefsum::simulate::{respond_once, simulate, Responder};
use prefsum::simuser::{make_synthetic_cluster, GroundTruthReward, SyntheticInstance, SyntheticSpec};

fn small() -> SyntheticInstance {
    let spec = SyntheticSpec { sentences: 12, vocab_size: 24, documents: 3, ..SyntheticSpec::default() };
    make_synthetic_cluster(&spec, 5).unwrap()
}

fn quick(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        budget: 4,
        reward_budget: 3,
        reward_iterations: 200,
        policy: PolicyConfig { episodes: 200, ..PolicyConfig::default() },
        ..RunConfig::default()
    }
}

/// Drive a session to the end, recording the snapshot after every command.
fn scripted(inst: &SyntheticInstance, config: RunConfig) -> (Session, Vec<(usize, Snapshot)>) {
    let (mut session, _) = Session::create(inst.cluster.clone(), config.clone()).unwrap();
    let expert = GroundTruthReward::for_cluster(session.cluster());
    let mut responder = Responder::new(inst.user.clone(), expert, config.seed);
    let mut marks = vec![(session.events().len(), session.snapshot())];
    loop {
        if session.stage() == Stage::Elicitation {
            session.next_query().unwrap();
            marks.push((session.events().len(), session.snapshot()));
        }
        if !respond_once(&mut session, &mut responder).unwrap() {
            break;
        }
        marks.push((session.events().len(), session.snapshot()));
    }
    session.rate(7).unwrap();
    marks.push((session.events().len(), session.snapshot()));
    (session, marks)
}

#[test]
fn replay_after_a_crash_at_any_event_matches_the_live_session() {
    let inst = small();
    let (live, marks) = scripted(&inst, quick(3));
    let events = live.events().to_vec();
    assert!(events.iter().any(|e| e.kind() == "pool_built"));
    for k in 1..=events.len() {
        let mut replayed = Session::replay(&events[..k]).unwrap();
        let resumed = replayed.resume().unwrap();
        let end = k + resumed.len();
        assert_eq!(&events[k..end], resumed.as_slice(), "prefix {k}");
        let (_, expected) = marks.iter().find(|(n, _)| *n == end).unwrap_or_else(|| panic!("no command ends at event {end}"));
        assert_eq!(&replayed.snapshot(), expected, "prefix {k}");
    }
}

#[test]
fn event_log_survives_json() {
    let inst = small();
    let (live, _) = scripted(&inst, quick(1));
    let json: Vec<String> = live.events().iter().map(|e| serde_json::to_string(e).unwrap()).collect();
    assert!(json[1].starts_with(r#"{"kind":"query_issued","payload":"#));
    let back: Vec<Event> = json.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(Session::replay(&back).unwrap().snapshot(), live.snapshot());
}

#[test]
fn scripted_run_matches_offline_simulation() {
    let inst = small();
    let config = quick(9);
    let (live, _) = scripted(&inst, config.clone());
    let offline = simulate(inst.cluster.clone(), &inst.user, &config).unwrap();
    let live_json = serde_json::to_string(&live.final_summary().unwrap().record(live.cluster())).unwrap();
    assert_eq!(live_json, serde_json::to_string(&offline.summary).unwrap());
}

#[test]
fn answers_must_match_the_outstanding_query() {
    let inst = small();
    let (mut s, _) = Session::create(inst.cluster.clone(), quick(0)).unwrap();
    assert!(matches!(s.feedback(0, 1, 1), Err(Error::Conflict(_))));
    let (view, events) = s.next_query().unwrap();
    assert_eq!(events.len(), 1);
    let QueryView::Pending { left, right, budget_remaining, .. } = view else { panic!("expected a query") };
    assert_eq!(budget_remaining, 4);
    let (again, none) = s.next_query().unwrap();
    assert!(none.is_empty());
    assert_eq!(again, s.next_query().unwrap().0);
    let other = (0..inst.cluster.concepts.len()).find(|&c| c != left.id && c != right.id).unwrap();
    assert!(matches!(s.feedback(left.id, other, 1), Err(Error::Conflict(_))));
    assert!(matches!(s.feedback(left.id, right.id, 2), Err(Error::Validation(_))));
    s.feedback(right.id, left.id, 0).unwrap();
    assert_eq!(s.history()[0].label, 1);
    assert_eq!(s.history()[0].left_id, left.id);
}

#[test]
fn stage_preconditions() {
    let inst = small();
    let (mut s, _) = Session::create(inst.cluster.clone(), quick(0)).unwrap();
    assert!(matches!(s.draft(), Err(Error::Precondition { .. })));
    assert!(matches!(s.final_summary(), Err(Error::Precondition { .. })));
    assert!(matches!(s.summary_query(), Err(Error::Precondition { .. })));
    assert!(matches!(s.rate(5), Err(Error::Precondition { .. })));
    assert!(matches!(s.rate(11), Err(Error::Validation(_))));
    let (done, _) = scripted(&inst, quick(0));
    let mut done = done;
    assert!(matches!(done.rate(3), Err(Error::Conflict(_))));
    assert!(matches!(done.feedback(0, 1, 1), Err(Error::Precondition { .. })));
    assert_eq!(done.next_query().unwrap().0, QueryView::Exhausted { stage: Stage::Final });
}

#[test]
fn rejected_events_leave_state_untouched() {
    let inst = small();
    let (mut s, _) = Session::create(inst.cluster.clone(), quick(0)).unwrap();
    s.next_query().unwrap();
    let before = s.snapshot();
    assert!(s.apply(Event::Feedback { left: 0, right: 0, label: 1, round: 0 }).is_err());
    assert!(s.apply(Event::Rated { score: 4 }).is_err());
    assert_eq!(s.snapshot(), before);
}

#[test]
fn variants_shape_the_session() {
    let inst = small();
    let (pr, events) = Session::create(inst.cluster.clone(), RunConfig { variant: Variant::Pr, ..quick(0) }).unwrap();
    assert_eq!(events.last().unwrap().kind(), "pool_built");
    assert_eq!(pr.stage(), Stage::Reward);
    assert!(pr.concept_weights().unwrap().iter().all(|&w| w == 1.0));

    let (ge, _) = scripted(&inst, RunConfig { variant: Variant::Ge, ..quick(0) });
    assert_eq!(ge.snapshot().judgments.len(), 0);
    assert_eq!(ge.final_summary().unwrap(), &ge.pool().unwrap().summaries[0]);
}

#[test]
fn point_mode_asks_for_scores() {
    let inst = small();
    let (s, _) = scripted(&inst, RunConfig { reward_mode: RewardMode::Point, ..quick(2) });
    assert_eq!(s.snapshot().judgments.len(), 3);
    assert!(s.final_summary().is_ok());
    let (mut fresh, _) = Session::create(inst.cluster.clone(), RunConfig { reward_mode: RewardMode::Point, budget: 1, ..quick(2) }).unwrap();
    let (view, _) = fresh.next_query().unwrap();
    let QueryView::Pending { left, right, .. } = view else { panic!() };
    fresh.feedback(left.id, right.id, 1).unwrap();
    let Some(SummaryQuery::Score { summary }) = fresh.summary_query().unwrap() else { panic!("expected a score query") };
    assert!(matches!(fresh.summary_preference(0, 1, 1), Err(Error::Precondition { .. })));
    assert!(matches!(fresh.summary_score(summary + 1, 0.5), Err(Error::Conflict(_))));
    fresh.summary_score(summary, 0.5).unwrap();
}

#[test]
fn created_events_round_trip_exactly() {
    for seed in 0..8 {
        for unit in prefsum::ConceptUnit::ALL {
            let spec = SyntheticSpec { unit, ..SyntheticSpec::default() };
            let inst = make_synthetic_cluster(&spec, seed).unwrap();
            let (session, _) = Session::create(inst.cluster, RunConfig { unit, ..quick(seed) }).unwrap();
            let e = &session.events()[0];
            let back: Event = serde_json::from_str(&serde_json::to_string(e).unwrap()).unwrap();
            assert_eq!(&back, e, "seed {seed}, {unit:?}");
        }
    }
}
