use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use auditkit::allocation::{Assignment, AssignmentStatus};
use auditkit::ledger::{parse_and_verify, Ledger, ProgressSnapshot};
use auditkit::prompts::{generate_prompts, PromptSpec};
use auditkit::{ingest, AuditDesign};
use auditkit_coordinator::{
    router, serve, AssignmentsResponse, Coordinator, CoordinatorConfig, SessionToken,
};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::{DateTime, Duration, Utc};
use serde_json::{json, Value};
use tower::ServiceExt;

const OPERATOR: &str = "00000000000000000000000000000000operator";

fn token(tester: &str) -> String {
    format!("{:0>40}", format!("secret-{tester}"))
}

fn t0() -> DateTime<Utc> {
    "2018-09-17T00:00:00Z".parse().unwrap()
}

const CELL: &str =
    "ad_poster=US;ad_type=issue.mistake;leaning=Democrat;location=state;platform=Facebook";

fn bare_assignment(id: &str, tester: &str) -> Assignment {
    Assignment {
        assignment_id: id.into(),
        prompt_id: format!("p-{id}"),
        tester_id: tester.into(),
        cell_id: CELL.into(),
        status: AssignmentStatus::Pending,
        created_at: t0(),
        window_hours: 48,
        retry_of: None,
    }
}

fn sample_prompts(n: usize) -> Vec<PromptSpec> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let design = AuditDesign::paper();
    let pool = ingest::load_fixture_dir(&dir)
        .unwrap()
        .pool(&design)
        .unwrap();
    generate_prompts(&design, &pool, 1, 5)
        .unwrap()
        .into_iter()
        .take(n)
        .collect()
}

fn config(testers: &[&str]) -> CoordinatorConfig {
    CoordinatorConfig {
        operator_token: OPERATOR.into(),
        sessions: testers
            .iter()
            .map(|t| SessionToken {
                tester_id: t.to_string(),
                secret: token(t),
                expires_at: None,
            })
            .collect(),
        static_dir: None,
        snapshot_every: 0,
    }
}

/// Three assignments with prompts for `alice`, one for `bob`.
fn small_study() -> Arc<Coordinator> {
    let mut ledger = Ledger::in_memory();
    for (i, p) in sample_prompts(4).into_iter().enumerate() {
        let tester = if i < 3 { "alice" } else { "bob" };
        let a = Assignment {
            assignment_id: format!("a-{i}"),
            prompt_id: p.prompt_id.clone(),
            tester_id: tester.into(),
            cell_id: p.creative.cell_id.clone(),
            status: AssignmentStatus::Pending,
            created_at: t0() + Duration::minutes(i as i64),
            window_hours: 48,
            retry_of: None,
        };
        ledger.append_assignment(a, Some(p)).unwrap();
    }
    Coordinator::new(ledger, config(&["alice", "bob"])).unwrap()
}

async fn call(
    c: &Arc<Coordinator>,
    method: &str,
    uri: &str,
    bearer: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = bearer {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(Arc::clone(c)).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX)
        .await
        .unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn outcome(decision: &str) -> Value {
    json!({ "decision": decision, "decided_at": "2018-09-19T12:00:00Z" })
}

#[tokio::test]
async fn health_needs_no_token() {
    let c = small_study();
    let (status, body) = call(&c, "GET", "/api/health", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["seq"], 4);
}

#[tokio::test]
async fn auth_failures() {
    let c = small_study();
    for bearer in [None, Some("nope"), Some("")] {
        let (status, body) = call(&c, "GET", "/api/assignments", bearer, None).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED, "{bearer:?}");
        assert_eq!(body["error"]["code"], "unauthorized");
    }
    let (status, _) = call(&c, "GET", "/api/assignments", Some(OPERATOR), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = call(&c, "GET", "/api/progress", Some(&token("alice")), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = call(&c, "GET", "/api/progress", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn expired_tokens_are_rejected() {
    let mut cfg = config(&["alice"]);
    cfg.sessions[0].expires_at = Some(Utc::now() - Duration::seconds(1));
    let c = Coordinator::new(Ledger::in_memory(), cfg).unwrap();
    let (status, body) = call(&c, "GET", "/api/assignments", Some(&token("alice")), None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"]["message"], "token expired");
}

#[test]
fn weak_or_shared_tokens_are_refused() {
    let mut cfg = config(&["alice"]);
    cfg.sessions[0].secret = "short".into();
    assert!(Coordinator::new(Ledger::in_memory(), cfg).is_err());
    let mut cfg = config(&["alice", "bob"]);
    cfg.sessions[1].secret = token("alice");
    assert!(Coordinator::new(Ledger::in_memory(), cfg).is_err());
    let mut cfg = config(&[]);
    cfg.operator_token = "op".into();
    assert!(Coordinator::new(Ledger::in_memory(), cfg).is_err());
}

#[tokio::test]
async fn tester_sees_own_open_assignments_oldest_first() {
    let c = small_study();
    let (status, body) = call(
        &c,
        "GET",
        "/api/assignments?limit=10",
        Some(&token("alice")),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let r: AssignmentsResponse = serde_json::from_value(body).unwrap();
    assert_eq!(r.tester_id, "alice");
    let ids: Vec<_> = r
        .assignments
        .iter()
        .map(|i| i.assignment.assignment_id.as_str())
        .collect();
    assert_eq!(ids, ["a-0", "a-1", "a-2"]);
    assert!(!r.study_complete);
    for item in &r.assignments {
        let prompt = item.prompt.as_ref().unwrap();
        let ins = item.instructions.as_ref().unwrap();
        assert_eq!(ins.platform, prompt.creative.platform);
        assert_eq!((ins.budget_per_day, ins.duration_hours), (1, 48));
        assert!(ins.page_group.is_some() || ins.search_terms.is_some());
    }
    let (_, body) = call(
        &c,
        "GET",
        "/api/assignments?limit=2",
        Some(&token("alice")),
        None,
    )
    .await;
    assert_eq!(body["assignments"].as_array().unwrap().len(), 2);
    for bad in [
        "/api/assignments?limit=0",
        "/api/assignments?limit=abc",
        "/api/assignments?limit=5000",
    ] {
        let (status, body) = call(&c, "GET", bad, Some(&token("alice")), None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert_eq!(body["error"]["code"], "invalid_request");
    }
}

#[tokio::test]
async fn outcome_flow_and_status_mapping() {
    let c = small_study();
    let alice = token("alice");
    let (status, ack) = call(
        &c,
        "POST",
        "/api/assignments/a-0/outcome",
        Some(&alice),
        Some(outcome("published")),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        (ack["seq"].as_u64(), ack["duplicate"].as_bool()),
        (Some(5), Some(false))
    );

    let (status, again) = call(
        &c,
        "POST",
        "/api/assignments/a-0/outcome",
        Some(&alice),
        Some(outcome("published")),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["seq"], 5);
    assert_eq!(again["duplicate"], true);

    let (status, body) = call(
        &c,
        "POST",
        "/api/assignments/a-0/outcome",
        Some(&alice),
        Some(outcome("prohibited_political")),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "conflict");

    let (status, _) = call(
        &c,
        "POST",
        "/api/assignments/a-3/outcome",
        Some(&alice),
        Some(outcome("published")),
    )
    .await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = call(
        &c,
        "POST",
        "/api/assignments/zzz/outcome",
        Some(&alice),
        Some(outcome("published")),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = call(
        &c,
        "POST",
        "/api/assignments/a-1/outcome",
        Some(&alice),
        Some(outcome("blocked_other")),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["message"], "blocked_other requires notes");
    let (status, body) = call(
        &c,
        "POST",
        "/api/assignments/a-1/outcome",
        Some(&alice),
        Some(json!({"decision": "yes"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid_request");
    assert_eq!(c.with_ledger(Ledger::len), 5);

    let mut posted = outcome("pending");
    posted["notes"] = json!("live since noon");
    let (status, _) = call(
        &c,
        "POST",
        "/api/assignments/a-1/outcome",
        Some(&alice),
        Some(posted),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (_, body) = call(&c, "GET", "/api/assignments", Some(&alice), None).await;
    let r: AssignmentsResponse = serde_json::from_value(body).unwrap();
    let statuses: Vec<_> = r.assignments.iter().map(|i| i.assignment.status).collect();
    assert_eq!(
        statuses,
        [AssignmentStatus::Posted, AssignmentStatus::Pending]
    );
}

#[tokio::test]
async fn progress_tracks_writes_and_completion() {
    let c = small_study();
    let (status, body) = call(&c, "GET", "/api/progress", Some(OPERATOR), None).await;
    assert_eq!(status, StatusCode::OK);
    let p: ProgressSnapshot = serde_json::from_value(body).unwrap();
    assert!(p.cells.values().all(|cell| cell.decided == 0));
    assert_eq!(p.testers["alice"], 3);

    let ids = [
        ("alice", "a-0"),
        ("alice", "a-1"),
        ("alice", "a-2"),
        ("bob", "a-3"),
    ];
    for (who, id) in ids {
        let uri = format!("/api/assignments/{id}/outcome");
        let (status, _) = call(
            &c,
            "POST",
            &uri,
            Some(&token(who)),
            Some(outcome("published")),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, body) = call(&c, "GET", "/api/progress", Some(OPERATOR), None).await;
    let p: ProgressSnapshot = serde_json::from_value(body).unwrap();
    assert_eq!(p.seq, 8);
    assert!(p.complete);
    assert_eq!(p.cells.values().map(|c| c.decided).sum::<usize>(), 4);
    let (_, body) = call(&c, "GET", "/api/assignments", Some(&token("bob")), None).await;
    assert_eq!(body["assignments"].as_array().unwrap().len(), 0);
    assert_eq!(body["study_complete"], true);
}

#[tokio::test]
async fn unknown_routes_use_error_shape() {
    let c = small_study();
    let (status, body) = call(&c, "GET", "/api/nothing", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "not_found");
}

#[tokio::test]
async fn static_dir_is_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>tester</h1>").unwrap();
    let mut cfg = config(&["alice"]);
    cfg.static_dir = Some(dir.path().to_path_buf());
    let c = Coordinator::new(Ledger::in_memory(), cfg).unwrap();
    let req = Request::builder()
        .uri("/index.html")
        .body(Body::empty())
        .unwrap();
    let resp = router(c).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}

async fn start(
    c: Arc<Coordinator>,
) -> (
    String,
    tokio::sync::oneshot::Sender<()>,
    tokio::task::JoinHandle<()>,
) {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        serve(listener, c, async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    (base, tx, handle)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn thousand_concurrent_submissions_keep_the_chain_valid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    let testers: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
    let mut ledger = Ledger::open(&path).unwrap();
    for i in 0..1000 {
        ledger
            .append_assignment(
                bare_assignment(&format!("a-{i:04}"), &testers[i % 10]),
                None,
            )
            .unwrap();
    }
    let names: Vec<&str> = testers.iter().map(String::as_str).collect();
    let mut cfg = config(&names);
    cfg.snapshot_every = 128;
    let c = Coordinator::new(ledger, cfg).unwrap();
    let (base, stop, handle) = start(Arc::clone(&c)).await;

    let client = reqwest::Client::new();
    let mut tasks = Vec::new();
    for i in 0..1000 {
        for _ in 0..2 {
            let client = client.clone();
            let url = format!("{base}/api/assignments/a-{i:04}/outcome");
            let bearer = token(&testers[i % 10]);
            let decision = if i % 7 == 0 {
                "prohibited_political"
            } else {
                "published"
            };
            tasks.push(tokio::spawn(async move {
                let resp = client
                    .post(url)
                    .bearer_auth(bearer)
                    .json(&outcome(decision))
                    .send()
                    .await
                    .unwrap();
                assert_eq!(resp.status(), reqwest::StatusCode::OK);
                let ack: Value = resp.json().await.unwrap();
                (i, ack["seq"].as_u64().unwrap())
            }));
        }
    }
    let mut seq_by_id: BTreeMap<usize, BTreeSet<u64>> = BTreeMap::new();
    for t in tasks {
        let (i, seq) = t.await.unwrap();
        seq_by_id.entry(i).or_default().insert(seq);
    }
    assert_eq!(seq_by_id.len(), 1000);
    assert!(
        seq_by_id.values().all(|s| s.len() == 1),
        "duplicates must share one sequence"
    );
    let all: BTreeSet<u64> = seq_by_id.values().flatten().copied().collect();
    assert_eq!(all, (1001..=2000).collect());

    stop.send(()).unwrap();
    handle.await.unwrap();
    let entries = parse_and_verify(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(entries.len(), 2000);
    let reopened = Ledger::open(&path).unwrap();
    assert_eq!(reopened.progress().cells[CELL].decided, 1000);
    let snapshot: auditkit::ledger::LedgerSnapshot =
        serde_json::from_slice(&std::fs::read(auditkit::ledger::snapshot_path(&path)).unwrap())
            .unwrap();
    assert_eq!(snapshot.seq, 2000);
    reopened.verify_snapshot(&snapshot).unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_polling_is_disjoint() {
    let testers: Vec<String> = (0..6).map(|i| format!("t{i}")).collect();
    let mut ledger = Ledger::in_memory();
    for i in 0..300 {
        ledger
            .append_assignment(
                bare_assignment(&format!("a-{i:03}"), &testers[(i * 7) % 6]),
                None,
            )
            .unwrap();
    }
    let names: Vec<&str> = testers.iter().map(String::as_str).collect();
    let c = Coordinator::new(ledger, config(&names)).unwrap();
    let (base, stop, handle) = start(Arc::clone(&c)).await;
    let client = reqwest::Client::new();
    let mut tasks = Vec::new();
    for round in 0..5 {
        for t in &testers {
            let client = client.clone();
            let url = format!("{base}/api/assignments?limit=1000");
            let (t, bearer) = (t.clone(), token(t));
            tasks.push(tokio::spawn(async move {
                let r: AssignmentsResponse = client
                    .get(url)
                    .bearer_auth(bearer)
                    .send()
                    .await
                    .unwrap()
                    .json()
                    .await
                    .unwrap();
                (round, t, r)
            }));
        }
    }
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for task in tasks {
        let (_, t, r) = task.await.unwrap();
        assert_eq!(r.tester_id, t);
        for item in r.assignments {
            assert_eq!(item.assignment.tester_id, t);
            let prev = owner.insert(item.assignment.assignment_id.clone(), t.clone());
            assert!(
                prev.is_none_or(|p| p == t),
                "assignment served to two testers"
            );
        }
    }
    assert_eq!(owner.len(), 300);
    stop.send(()).unwrap();
    handle.await.unwrap();
}
