//! Acceptance suite: one test per release gate, each printing a PASS line
//! with the measured numbers (run with `--nocapture` to see them all).
//!
//! Timing-sensitive gates take a shared lock so parallel test threads
//! cannot distort each other's measurements, and best-effort quiesce the
//! host (flush and drop page caches) before measuring.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use actordb_core::bench::{bench_e2e, bench_read, bench_write};
use actordb_core::control::{ControlPlane, DecisionAction, PromotionPolicy};
use actordb_core::expr::{CompOp, Expression, Operand};
use actordb_core::projection::{
    ColumnKind, MaterializationMode, ProjectionDefinition, ProjectionEngine,
};
use actordb_core::query::{
    parse, QueryRoute, QueryService, QueryStatement, SelectList, SelectStatement,
    SubscribeStatement,
};
use actordb_core::scalar::{Document, Scalar, ScalarKey};
use actordb_core::security::{
    sign_command, AttributeCondition, AuditAction, AuditSink, Effect, Policy, Principal,
    SecurityLayer, SignedCommand, TokenAuthority,
};
use actordb_core::store::{
    EventStore, FileLogBackend, MemoryBackend, NewEvent, RetentionPolicy, StoreError,
};
use actordb_core::time::ManualClock;
use actordb_core::{Engine, EngineConfig};

use common::issue_signer;

fn timing_lock() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// Best-effort host quiesce before a timing measurement: flush dirty pages
/// and drop reclaimable caches so the timed region does not pay for
/// another process's page cache.
fn quiesce() {
    let _ = std::process::Command::new("sync").status();
    let _ = std::fs::write("/proc/sys/vm/drop_caches", "3");
}

fn report(number: u32, name: &str, detail: &str) {
    println!("ACCEPTANCE {number:02} {name}: PASS — {detail}");
}

// ---------------------------------------------------------------------------
// 1-3: benchmark gates
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_write_throughput() {
    let _serial = timing_lock();
    quiesce();
    let bench = bench_write(1_000_000, None);
    assert!(
        bench.wall_time_ms < 60_000.0,
        "write bench exceeded its 1 minute budget: {:.0}ms",
        bench.wall_time_ms
    );
    assert!(bench.gate.pass, "write gate failed: {}", bench.gate.description);
    report(1, "write throughput", &bench.gate.description);
}

#[test]
fn criterion_02_read_latency() {
    let _serial = timing_lock();
    quiesce();
    let bench = bench_read(100_000, None);
    assert!(
        bench.wall_time_ms < 60_000.0,
        "read bench exceeded its 1 minute budget: {:.0}ms",
        bench.wall_time_ms
    );
    assert!(bench.gate.pass, "read gate failed: {}", bench.gate.description);
    report(2, "read latency", &bench.gate.description);
}

#[test]
fn criterion_03_e2e_latency() {
    let _serial = timing_lock();
    quiesce();
    let bench = bench_e2e(1_000, 10, None);
    assert!(
        bench.wall_time_ms < 120_000.0,
        "e2e bench exceeded its 2 minute budget: {:.0}ms",
        bench.wall_time_ms
    );
    assert!(bench.gate.pass, "e2e gate failed: {}", bench.gate.description);
    report(3, "e2e latency", &bench.gate.description);
}

// ---------------------------------------------------------------------------
// 4: late-event disposition correctness over 1e6 randomized events
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_late_event_disposition() {
    let _serial = timing_lock();
    quiesce();
    const N: usize = 1_000_000;
    const LATENESS: i64 = 5_000;
    const WINDOW: i64 = 60_000;
    const KEYS: usize = 64;

    let store = Arc::new(EventStore::in_memory(ManualClock::new(0)));
    let engine = ProjectionEngine::new(
        Arc::clone(&store),
        Arc::new(AuditSink::new()),
        ManualClock::new(0),
    );
    engine
        .register_projection(
            ProjectionDefinition::new("disp", &["evt"], "k")
                .with_column("count", ColumnKind::Count)
                .with_column("total", ColumnKind::sum("v"))
                .with_lateness(LATENESS, WINDOW),
        )
        .unwrap();

    // Independent oracle state, tracked during generation.
    let mut rng = StdRng::seed_from_u64(0x04ac);
    let mut wm_oracle = 0i64;
    let mut frontier = 1_000_000_000i64;
    let mut expected: BTreeMap<usize, (i64, i64)> = BTreeMap::new(); // key -> (count, sum)
    let mut expected_dead: HashSet<String> = HashSet::new();
    let (mut n_ontime, mut n_corrected, mut n_dead, mut n_boundary) = (0u64, 0u64, 0u64, 0u64);

    let mut batch: Vec<NewEvent> = Vec::with_capacity(256);
    for i in 0..N {
        frontier += rng.gen_range(0..1_500);
        let zone = rng.gen_range(0u32..100);
        let t = if i == 0 || zone < 34 {
            frontier
        } else if zone < 67 {
            // Late but inside the correction window; hit the exact
            // boundary regularly.
            if zone == 66 {
                n_boundary += 1;
                wm_oracle - WINDOW
            } else {
                wm_oracle - rng.gen_range(1..=WINDOW)
            }
        } else {
            // Beyond the window; include the first millisecond past it.
            if zone == 99 {
                n_boundary += 1;
                wm_oracle - WINDOW - 1
            } else {
                wm_oracle - WINDOW - rng.gen_range(1..=100_000)
            }
        };

        let key = rng.gen_range(0..KEYS);
        let value = rng.gen_range(-50i64..50);
        let cid = format!("e{i}");

        // Oracle disposition against the pre-event watermark.
        if t >= wm_oracle {
            n_ontime += 1;
            let slot = expected.entry(key).or_insert((0, 0));
            slot.0 += 1;
            slot.1 += value;
        } else if wm_oracle - t <= WINDOW {
            n_corrected += 1;
            let slot = expected.entry(key).or_insert((0, 0));
            slot.0 += 1;
            slot.1 += value;
        } else {
            n_dead += 1;
            expected_dead.insert(cid.clone());
        }
        wm_oracle = wm_oracle.max(t - LATENESS);

        let mut payload = Document::new();
        payload.insert("k".into(), Scalar::Str(format!("k{key}")));
        payload.insert("v".into(), Scalar::Int(value));
        batch.push(NewEvent::new("evt", t, payload, &cid));
        if batch.len() == 256 || i == N - 1 {
            store.append("gen", None, std::mem::take(&mut batch)).unwrap();
        }
    }
    assert!(n_ontime > 100_000 && n_corrected > 100_000 && n_dead > 100_000 && n_boundary > 1_000,
        "generator must exercise all zones: {n_ontime}/{n_corrected}/{n_dead}/{n_boundary}");

    loop {
        let r = engine.catch_up("disp", 16_384).unwrap();
        if r.new_applied_offset >= store.max_global_offset() {
            break;
        }
    }

    // Every beyond-window event is dead-lettered, none other.
    let dead: HashSet<String> = engine
        .dead_letters("disp")
        .unwrap()
        .into_iter()
        .map(|dl| dl.command_id)
        .collect();
    assert_eq!(dead.len(), expected_dead.len(), "dead letter count");
    assert_eq!(dead, expected_dead, "dead letter set");

    // Every in-window event is reflected in query results.
    let rows = engine.query_rows("disp", None, None, None).unwrap();
    assert_eq!(rows.len(), expected.len());
    for (key, row) in &rows {
        let Scalar::Str(name) = key else { panic!("string keys") };
        let idx: usize = name[1..].parse().unwrap();
        let (count, sum) = expected[&idx];
        assert_eq!(row["count"], Scalar::Int(count), "count for {name}");
        assert_eq!(row["total"], Scalar::Int(sum), "sum for {name}");
    }
    assert_eq!(engine.watermark("disp").unwrap(), wm_oracle);

    report(
        4,
        "late-event disposition",
        &format!(
            "zero misclassifications over {N} events (applied {n_ontime}, corrected {n_corrected}, dead {n_dead}, boundary {n_boundary})"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5: rebuild speed and equivalence at 1e6 events
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_rebuild() {
    let _serial = timing_lock();
    quiesce();
    const N: usize = 1_000_000;
    let store = Arc::new(EventStore::in_memory(ManualClock::new(0)));
    let engine = ProjectionEngine::new(
        Arc::clone(&store),
        Arc::new(AuditSink::new()),
        ManualClock::new(0),
    );
    engine
        .register_projection(
            ProjectionDefinition::new("big", &["evt"], "k")
                .with_column("count", ColumnKind::Count)
                .with_column("total", ColumnKind::sum("v"))
                .with_column("high", ColumnKind::max("v"))
                .with_lateness(5_000, 60_000),
        )
        .unwrap();

    let mut rng = StdRng::seed_from_u64(0x05ac);
    let mut t = 1_000_000_000i64;
    let mut batch = Vec::with_capacity(512);
    for i in 0..N {
        t += rng.gen_range(0..200);
        let late = if rng.gen_bool(0.2) { rng.gen_range(0..30_000) } else { 0 };
        let mut payload = Document::new();
        payload.insert("k".into(), Scalar::Str(format!("k{}", rng.gen_range(0..512))));
        payload.insert("v".into(), Scalar::Int(rng.gen_range(0..1_000)));
        batch.push(NewEvent::new("evt", t - late, payload, &format!("e{i}")));
        if batch.len() == 512 || i == N - 1 {
            store.append("gen", None, std::mem::take(&mut batch)).unwrap();
        }
    }

    loop {
        let r = engine.catch_up("big", 16_384).unwrap();
        if r.new_applied_offset >= store.max_global_offset() {
            break;
        }
    }
    let incremental = engine.state_bytes("big").unwrap();

    let rebuilt = engine.rebuild("big").unwrap();
    assert!(
        rebuilt.duration <= Duration::from_secs(10),
        "rebuild of {N} events took {:?} (gate 10s)",
        rebuilt.duration
    );
    assert_eq!(
        engine.state_bytes("big").unwrap(),
        incremental,
        "rebuilt state must be byte-identical to the incrementally maintained state"
    );
    report(
        5,
        "rebuild",
        &format!("{N} events refolded in {:?}, byte-identical state", rebuilt.duration),
    );
}

// ---------------------------------------------------------------------------
// 6: revocation propagation under the real clock
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_revocation_propagation() {
    let _serial = timing_lock();
    let engine = Engine::start(EngineConfig::default()).unwrap();
    assert_eq!(engine.config().revocation_poll_interval_s, 5);

    let mut worst = Duration::ZERO;
    for trial in 0..20 {
        let signer = issue_signer(&engine, &format!("p{trial}"), &["writer"], 100 + trial as u8);
        let mut payload = Document::new();
        payload.insert("n".into(), Scalar::Int(trial as i64));
        let cmd = sign_command(
            &signer.signing,
            &signer.token,
            &format!("t{trial}"),
            engine.clock().now_ms(),
            &format!("actor{trial}"),
            None,
            vec![NewEvent::new("evt", 1, payload, &format!("t{trial}"))],
        )
        .unwrap();

        // Accepted while the key is live (this also refreshes the
        // verifier view, putting the revocation in the worst-case slot).
        engine.submit_command(&cmd).unwrap();

        let revoked_at = Instant::now();
        engine
            .security()
            .revoke_key(&signer.key_id, engine.clock().now_ms())
            .unwrap();

        let elapsed = loop {
            match engine.submit_command(&cmd) {
                Ok(_) => std::thread::sleep(Duration::from_millis(50)),
                Err(e) if e.code() == "KeyRevoked" => break revoked_at.elapsed(),
                Err(e) => panic!("unexpected rejection: {e}"),
            }
            assert!(
                revoked_at.elapsed() < Duration::from_secs(30),
                "revocation not enforced within the 30s propagation bound"
            );
        };
        assert!(
            elapsed <= Duration::from_secs(6),
            "trial {trial}: propagation took {elapsed:?} (gate poll+1s = 6s)"
        );
        worst = worst.max(elapsed);
    }
    report(
        6,
        "revocation propagation",
        &format!("20 trials, worst {worst:?} (gates: 6s tight, 30s hard)"),
    );
}

// ---------------------------------------------------------------------------
// 7: promotion / demotion behavior on a scripted trace
// ---------------------------------------------------------------------------

fn control_fixture(policy: PromotionPolicy) -> (Arc<ProjectionEngine>, ControlPlane, Arc<AuditSink>) {
    let clock = ManualClock::new(0);
    let store = Arc::new(EventStore::in_memory(clock.clone()));
    let projections = Arc::new(ProjectionEngine::new(
        Arc::clone(&store),
        Arc::new(AuditSink::new()),
        clock,
    ));
    projections
        .register_projection(
            ProjectionDefinition::new("hot", &["evt"], "k").with_column("n", ColumnKind::Count),
        )
        .unwrap();
    let audit = Arc::new(AuditSink::new());
    let control = ControlPlane::new(10_000, 20, policy, Vec::new(), Arc::clone(&audit));
    (projections, control, audit)
}

fn feed_window(control: &ControlPlane, window: i64, samples: usize, latency_ms: f64) {
    for i in 0..samples {
        let now = window * 10_000 + (i as i64 * 9_000 / samples.max(1) as i64);
        control.record_sample("hot", QueryRoute::OnDemandCatchUp, latency_ms, now);
    }
}

#[test]
fn criterion_07_promotion_demotion() {
    // Scripted trace at the default knobs: K=3, M=30, C=6, >=1 Hz.
    let (projections, control, audit) = control_fixture(PromotionPolicy::default());
    let mut decisions = Vec::new();

    // Three violating 10s windows at 3.5 Hz.
    for w in 0..3 {
        feed_window(&control, w, 35, 500.0);
        let ds = control.evaluate(&projections, (w + 1) * 10_000);
        control.apply(ds.clone(), &projections, (w + 1) * 10_000);
        decisions.extend(ds);
    }
    assert_eq!(decisions.len(), 1, "exactly one promote");
    assert_eq!(decisions[0].action, DecisionAction::Promote);
    assert_eq!(projections.mode("hot").unwrap(), MaterializationMode::Materialized);

    // Thirty idle windows demote exactly once.
    let mut demotes = Vec::new();
    for w in 3..40 {
        let ds = control.evaluate(&projections, (w + 1) * 10_000);
        control.apply(ds.clone(), &projections, (w + 1) * 10_000);
        demotes.extend(ds);
    }
    assert_eq!(demotes.len(), 1, "exactly one demote, got {demotes:?}");
    assert_eq!(demotes[0].action, DecisionAction::Demote);
    assert_eq!(projections.mode("hot").unwrap(), MaterializationMode::OnDemand);
    assert_eq!(
        audit.count_action(AuditAction::PromotionDecision),
        2,
        "both decisions audited"
    );

    // Anti-thrash: an aggressive oscillating trace under a tight policy
    // never produces two transitions within one cooldown span.
    let policy = PromotionPolicy {
        violation_windows: 2,
        idle_windows: 2,
        cooldown_windows: 6,
        min_query_rate_hz: 1.0,
    };
    let (projections, control, _) = control_fixture(policy.clone());
    let mut transition_windows = Vec::new();
    for w in 0..120 {
        if w % 4 < 2 {
            feed_window(&control, w, 30, 800.0);
        }
        let ds = control.evaluate(&projections, (w + 1) * 10_000);
        for d in &ds {
            transition_windows.push(d.window_index);
        }
        control.apply(ds, &projections, (w + 1) * 10_000);
    }
    assert!(transition_windows.len() >= 2, "oscillation must cause transitions");
    for pair in transition_windows.windows(2) {
        assert!(
            pair[1] - pair[0] >= policy.cooldown_windows as i64,
            "two transitions within one cooldown span: {transition_windows:?}"
        );
    }
    report(
        7,
        "promotion/demotion",
        &format!(
            "one promote, one demote on the scripted trace; {} oscillation transitions all >= C apart",
            transition_windows.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 8: security oracle — mutated envelopes and RLS brute force
// ---------------------------------------------------------------------------

#[test]
fn criterion_08a_envelope_mutations_never_verify() {
    let audit = Arc::new(AuditSink::new());
    let security = SecurityLayer::new(TokenAuthority::from_seed(&[8; 32]), 5_000, audit, 0);
    security.upsert_principal(Principal::new("alice"));
    let signing = ed25519_dalek::SigningKey::from_bytes(&[18; 32]);
    security
        .register_key("k1", signing.verifying_key().to_bytes(), "alice", 0)
        .unwrap();
    let token = security.issue_token("t1", "alice", "k1", 300, 1_000).unwrap();

    let mut payload = Document::new();
    payload.insert("qty".into(), Scalar::Int(2));
    let cmd = sign_command(
        &signing,
        &token,
        "cmd-1",
        2_000,
        "cart-1",
        Some(0),
        vec![NewEvent::new("item_added", 5_000, payload, "cmd-1")],
    )
    .unwrap();
    let wire = cmd.to_wire();
    // Sanity: the unmutated envelope verifies.
    assert!(security
        .verify_command(&SignedCommand::from_wire(&wire).unwrap(), 3_000)
        .is_ok());

    const TRIALS: usize = 100_000;
    let mut rng = StdRng::seed_from_u64(0x08ac);
    let mut accepted = 0usize;
    let mut structurally_valid = 0usize;
    let segments: Vec<&str> = wire.split('.').collect();

    for _ in 0..TRIALS {
        let mutated = if rng.gen_bool(0.1) {
            // Raw wire-level character corruption.
            let mut chars: Vec<char> = wire.chars().collect();
            let at = rng.gen_range(0..chars.len());
            let replacement = b"ABCdef012_-="[rng.gen_range(0..12)] as char;
            chars[at] = replacement;
            chars.into_iter().collect::<String>()
        } else {
            // Bit flips in the decoded header/body/signature/token bytes.
            let seg_idx = rng.gen_range(0..3);
            let mut bytes = base64url_decode(segments[seg_idx]);
            for _ in 0..rng.gen_range(1..=3) {
                let at = rng.gen_range(0..bytes.len());
                bytes[at] ^= 1 << rng.gen_range(0..8);
            }
            let encoded = base64url_encode(&bytes);
            let mut parts: Vec<&str> = segments.clone();
            parts[seg_idx] = &encoded;
            parts.join(".")
        };
        if mutated == wire {
            continue; // the rare no-op mutation
        }
        if let Ok(parsed) = SignedCommand::from_wire(&mutated) {
            structurally_valid += 1;
            if security.verify_command(&parsed, 3_000).is_ok() {
                accepted += 1;
            }
        }
    }
    assert_eq!(accepted, 0, "forged envelopes accepted");
    assert!(structurally_valid > 1_000, "mutation corpus must reach the verifier");
    report(
        8,
        "security oracle (forgeries)",
        &format!("{TRIALS} mutated envelopes, {structurally_valid} reached signature checks, 0 accepted"),
    );
}

fn base64url_decode(seg: &str) -> Vec<u8> {
    use base64::engine::general_purpose::URL_SAFE_NO_PAD;
    use base64::Engine as _;
    URL_SAFE_NO_PAD.decode(seg).unwrap()
}

fn base64url_encode(bytes: &[u8]) -> String {
    use base64::engine::general_purpose::URL_SAFE_NO_PAD;
    use base64::Engine as _;
    URL_SAFE_NO_PAD.encode(bytes)
}

/// Independent expression evaluator for the RLS brute-force oracle.
fn brute_eval(expr: &Expression, row: &Document, principal: &Principal) -> bool {
    match expr {
        Expression::Bool(b) => *b,
        Expression::Not(e) => !brute_eval(e, row, principal),
        Expression::And(a, b) => {
            brute_eval(a, row, principal) && brute_eval(b, row, principal)
        }
        Expression::Or(a, b) => brute_eval(a, row, principal) || brute_eval(b, row, principal),
        Expression::Comparison { left, op, right } => {
            let fetch = |o: &Operand| -> Option<Scalar> {
                match o {
                    Operand::Literal(v) => Some(v.clone()),
                    Operand::Column(c) => row.get(c).cloned(),
                    Operand::PrincipalRef(a) => {
                        if a == "sub" || a == "id" {
                            Some(Scalar::Str(principal.principal_id.clone()))
                        } else {
                            principal.attributes.get(a).cloned()
                        }
                    }
                }
            };
            let (Some(l), Some(r)) = (fetch(left), fetch(right)) else { return false };
            let ord = match (&l, &r) {
                (Scalar::Int(a), Scalar::Int(b)) => Some(a.cmp(b)),
                (Scalar::Str(a), Scalar::Str(b)) => Some(a.cmp(b)),
                (Scalar::Bool(a), Scalar::Bool(b)) => Some(a.cmp(b)),
                (Scalar::Int(a), Scalar::Float(b)) => (*a as f64).partial_cmp(b),
                (Scalar::Float(a), Scalar::Int(b)) => a.partial_cmp(&(*b as f64)),
                (Scalar::Float(a), Scalar::Float(b)) => a.partial_cmp(b),
                _ => None,
            };
            let Some(ord) = ord else { return false };
            match op {
                CompOp::Eq => ord.is_eq(),
                CompOp::Ne => !ord.is_eq(),
                CompOp::Lt => ord.is_lt(),
                CompOp::Le => ord.is_le(),
                CompOp::Gt => ord.is_gt(),
                CompOp::Ge => ord.is_ge(),
            }
        }
    }
}

#[test]
fn criterion_08b_rls_matches_brute_force() {
    const CASES: usize = 1_000;
    let mut rng = StdRng::seed_from_u64(0x8b);
    let regions = ["eu", "us", "apac", "latam"];
    let roles = ["viewer", "ops", "admin"];
    let columns = ["owner", "region", "score"];

    let gen_pred = |rng: &mut StdRng| -> Expression {
        let column = columns[rng.gen_range(0..columns.len())];
        let op = [CompOp::Eq, CompOp::Ne, CompOp::Lt, CompOp::Ge][rng.gen_range(0..4)];
        let right = match column {
            "score" => Operand::Literal(Scalar::Int(rng.gen_range(0..10))),
            "owner" => {
                if rng.gen_bool(0.4) {
                    Operand::PrincipalRef("sub".into())
                } else {
                    Operand::Literal(Scalar::Str(format!("user{}", rng.gen_range(0..3))))
                }
            }
            _ => Operand::Literal(Scalar::Str(regions[rng.gen_range(0..4)].into())),
        };
        Expression::Comparison {
            left: Operand::Column(column.into()),
            op,
            right,
        }
    };

    for case in 0..CASES {
        // Fresh tiny engine per case.
        let clock = ManualClock::new(1_000);
        let store = Arc::new(EventStore::in_memory(clock.clone()));
        let audit = Arc::new(AuditSink::new());
        let security = Arc::new(SecurityLayer::new(
            TokenAuthority::from_seed(&[9; 32]),
            5_000,
            Arc::clone(&audit),
            0,
        ));
        let projections = Arc::new(ProjectionEngine::new(Arc::clone(&store), audit, clock.clone()));
        projections
            .register_projection(
                ProjectionDefinition::new("view", &["set"], "k")
                    .with_column("owner", ColumnKind::last("owner"))
                    .with_column("region", ColumnKind::last("region"))
                    .with_column("score", ColumnKind::last("score")),
            )
            .unwrap();
        let service = QueryService::new(Arc::clone(&projections), Arc::clone(&security), clock);

        // Rows.
        let n_rows = rng.gen_range(4..12);
        let mut rows: Vec<Document> = Vec::new();
        for r in 0..n_rows {
            let mut payload = Document::new();
            payload.insert("k".into(), Scalar::Str(format!("row{r}")));
            payload.insert("owner".into(), Scalar::Str(format!("user{}", rng.gen_range(0..3))));
            payload.insert("region".into(), Scalar::Str(regions[rng.gen_range(0..4)].into()));
            payload.insert("score".into(), Scalar::Int(rng.gen_range(0..10)));
            store
                .append("seed", None, vec![NewEvent::new("set", 1_000 + r as i64, payload.clone(), &format!("c{r}"))])
                .unwrap();
            rows.push(payload);
        }
        projections.catch_up("view", 1_000).unwrap();

        // Policies.
        let n_policies = rng.gen_range(1..=4);
        let mut policies = Vec::new();
        for p in 0..n_policies {
            let is_default = rng.gen_bool(0.15);
            let mut role_any_of = BTreeSet::new();
            if !is_default {
                for role in roles {
                    if rng.gen_bool(0.45) {
                        role_any_of.insert(role.to_string());
                    }
                }
            }
            let mut attribute_conditions = Vec::new();
            if !is_default && (role_any_of.is_empty() || rng.gen_bool(0.3)) {
                attribute_conditions.push(AttributeCondition {
                    attribute: "level".into(),
                    op: if rng.gen_bool(0.5) { CompOp::Ge } else { CompOp::Lt },
                    value: Scalar::Int(rng.gen_range(0..5)),
                });
            }
            let mut column_masks = BTreeSet::new();
            for column in columns {
                if rng.gen_bool(0.25) {
                    column_masks.insert(column.to_string());
                }
            }
            policies.push(Policy {
                policy_id: format!("p{p}"),
                effect: if rng.gen_bool(0.75) { Effect::Allow } else { Effect::Deny },
                resource: if rng.gen_bool(0.8) { "view".into() } else { "*".into() },
                role_any_of,
                attribute_conditions,
                row_predicate: if rng.gen_bool(0.7) { Some(gen_pred(&mut rng)) } else { None },
                column_masks,
                is_default,
            });
        }
        security.policies().replace_all(policies.clone()).unwrap();

        // Principal.
        let mut attrs = Document::new();
        attrs.insert("level".into(), Scalar::Int(rng.gen_range(0..5)));
        let mut principal_roles = BTreeSet::new();
        for role in roles {
            if rng.gen_bool(0.4) {
                principal_roles.insert(role.to_string());
            }
        }
        let principal = Principal {
            principal_id: format!("user{}", rng.gen_range(0..3)),
            roles: principal_roles,
            attributes: attrs,
        };

        let user_pred = if rng.gen_bool(0.6) { Some(gen_pred(&mut rng)) } else { None };

        // Engine route.
        let statement = SelectStatement {
            projection: "view".into(),
            select_list: SelectList::Star,
            as_of: None,
            predicate: user_pred.clone(),
            limit: None,
        };
        let engine_result: Option<Vec<Document>> = match service.plan(statement, &principal) {
            Ok(plan) => Some(service.execute(&plan).unwrap()),
            Err(actordb_core::query::QueryError::AccessDenied) => None,
            Err(e) => panic!("case {case}: unexpected plan error {e}"),
        };

        // Brute force: independent combining, filtering, masking.
        let matches = |p: &Policy| -> bool {
            if p.resource != "*" && p.resource != "view" {
                return false;
            }
            if p.is_default {
                return true;
            }
            let roles_ok = p.role_any_of.is_empty()
                || p.role_any_of.iter().any(|r| principal.roles.contains(r));
            let attrs_ok = p.attribute_conditions.iter().all(|c| {
                let probe = Expression::Comparison {
                    left: Operand::PrincipalRef(c.attribute.clone()),
                    op: c.op,
                    right: Operand::Literal(c.value.clone()),
                };
                brute_eval(&probe, &Document::new(), &principal)
            });
            roles_ok && attrs_ok
        };
        let matching: Vec<&Policy> = policies.iter().filter(|p| matches(p)).collect();
        let denied = matching.is_empty() || matching.iter().any(|p| p.effect == Effect::Deny);
        let allows: Vec<&&Policy> =
            matching.iter().filter(|p| p.effect == Effect::Allow).collect();
        let brute: Option<Vec<Document>> = if denied || allows.is_empty() {
            None
        } else {
            let mut masks: BTreeSet<String> = allows[0].column_masks.clone();
            for a in &allows[1..] {
                masks = masks.intersection(&a.column_masks).cloned().collect();
            }
            let mut visible = Vec::new();
            for row in &rows {
                let rls_ok = allows.iter().any(|a| match &a.row_predicate {
                    None => true,
                    Some(p) => brute_eval(p, row, &principal),
                });
                let user_ok = user_pred
                    .as_ref()
                    .map(|p| brute_eval(p, row, &principal))
                    .unwrap_or(true);
                if rls_ok && user_ok {
                    let mut out = row.clone();
                    for mask in &masks {
                        if mask != "k" {
                            if let Some(slot) = out.get_mut(mask) {
                                *slot = Scalar::Str("***".into());
                            }
                        }
                    }
                    visible.push(out);
                }
            }
            Some(visible)
        };

        // Compare as key-sorted sets.
        match (engine_result, brute) {
            (None, None) => {}
            (Some(mut got), Some(mut want)) => {
                let sort_key = |d: &Document| ScalarKey(d["k"].clone());
                got.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
                want.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
                assert_eq!(got, want, "case {case}: rows diverge from brute force");
            }
            (got, want) => panic!(
                "case {case}: allow/deny divergence (engine {:?}, brute {:?})",
                got.is_some(),
                want.is_some()
            ),
        }
    }
    report(8, "security oracle (RLS)", &format!("{CASES} randomized cases match brute-force filter+mask"));
}

// ---------------------------------------------------------------------------
// 9: parser round-trip corpus and the documented statements
// ---------------------------------------------------------------------------

fn gen_rand_expr(rng: &mut StdRng, depth: usize) -> Expression {
    if depth == 0 || rng.gen_bool(0.4) {
        if rng.gen_bool(0.1) {
            return Expression::Bool(rng.gen());
        }
        let left = if rng.gen_bool(0.8) {
            Operand::Column(format!("col{}", rng.gen_range(0..6)))
        } else {
            Operand::PrincipalRef(["sub", "region", "level"][rng.gen_range(0..3)].into())
        };
        let op = [CompOp::Eq, CompOp::Ne, CompOp::Lt, CompOp::Le, CompOp::Gt, CompOp::Ge]
            [rng.gen_range(0..6)];
        let right = match rng.gen_range(0..4) {
            0 => Operand::Literal(Scalar::Int(rng.gen_range(-1_000_000..1_000_000))),
            1 => Operand::Literal(Scalar::Float(rng.gen_range(-500_000..500_000) as f64 / 64.0)),
            2 => Operand::Literal(Scalar::Str(
                ["abc", "it's", "x y z", "", "0quote'"][rng.gen_range(0..5)].to_string(),
            )),
            _ => Operand::Column(format!("col{}", rng.gen_range(0..6))),
        };
        return Expression::Comparison { left, op, right };
    }
    match rng.gen_range(0..3) {
        0 => Expression::And(
            Box::new(gen_rand_expr(rng, depth - 1)),
            Box::new(gen_rand_expr(rng, depth - 1)),
        ),
        1 => Expression::Or(
            Box::new(gen_rand_expr(rng, depth - 1)),
            Box::new(gen_rand_expr(rng, depth - 1)),
        ),
        _ => Expression::Not(Box::new(gen_rand_expr(rng, depth - 1))),
    }
}

#[test]
fn criterion_09_parser_round_trip() {
    const CORPUS: usize = 10_000;
    let mut rng = StdRng::seed_from_u64(0x09ac);
    for i in 0..CORPUS {
        let statement = if rng.gen_bool(0.7) {
            QueryStatement::Select(SelectStatement {
                projection: format!("proj{}", rng.gen_range(0..20)),
                select_list: if rng.gen_bool(0.5) {
                    SelectList::Star
                } else {
                    SelectList::Columns(
                        (0..rng.gen_range(1..4)).map(|c| format!("col{c}")).collect(),
                    )
                },
                as_of: if rng.gen_bool(0.3) {
                    Some(rng.gen_range(0..4_000_000_000_000i64))
                } else {
                    None
                },
                predicate: if rng.gen_bool(0.8) {
                    Some(gen_rand_expr(&mut rng, 3))
                } else {
                    None
                },
                limit: if rng.gen_bool(0.3) {
                    Some(rng.gen_range(1..10_000))
                } else {
                    None
                },
            })
        } else {
            QueryStatement::Subscribe(SubscribeStatement {
                projection: format!("proj{}", rng.gen_range(0..20)),
                predicate: if rng.gen_bool(0.8) {
                    Some(gen_rand_expr(&mut rng, 3))
                } else {
                    None
                },
            })
        };
        let text = statement.print();
        let parsed = parse(&text).unwrap_or_else(|e| panic!("corpus {i}: {text:?}: {e}"));
        assert_eq!(parsed, statement, "round trip failed for {text:?}");
        // Fixpoint: parse(print(parse(s))) == parse(s).
        assert_eq!(parse(&parsed.print()).unwrap(), parsed);
    }

    // The three documented statements parse to the documented shapes.
    let plain = parse("SELECT * FROM projections.cart_view WHERE cart_id = 'some-uuid';").unwrap();
    assert_eq!(
        plain,
        QueryStatement::Select(SelectStatement {
            projection: "cart_view".into(),
            select_list: SelectList::Star,
            as_of: None,
            predicate: Some(Expression::Comparison {
                left: Operand::Column("cart_id".into()),
                op: CompOp::Eq,
                right: Operand::Literal(Scalar::Str("some-uuid".into())),
            }),
            limit: None,
        })
    );
    let temporal = parse(
        "SELECT * FROM projections.cart_view \
         FOR TIMESTAMP AS OF '2025-09-29T10:00:00Z' \
         WHERE cart_id = 'some-uuid';",
    )
    .unwrap();
    match &temporal {
        QueryStatement::Select(s) => {
            assert_eq!(s.as_of, Some(1_759_140_000_000));
            assert!(s.predicate.is_some());
        }
        _ => panic!("expected select"),
    }
    let streaming = parse("SUBSCRIBE TO projections.cart_view WHERE cart_id = 'some-uuid';").unwrap();
    assert_eq!(
        streaming,
        QueryStatement::Subscribe(SubscribeStatement {
            projection: "cart_view".into(),
            predicate: Some(Expression::Comparison {
                left: Operand::Column("cart_id".into()),
                op: CompOp::Eq,
                right: Operand::Literal(Scalar::Str("some-uuid".into())),
            }),
        })
    );
    report(9, "parser", &format!("{CORPUS} generated statements round-trip; documented statements parse as specified"));
}

// ---------------------------------------------------------------------------
// 10: single-writer linearizability under contention
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_single_writer_linearizability() {
    const TARGET: u64 = 10_000;
    const WRITERS: usize = 8;
    let store = Arc::new(EventStore::in_memory(ManualClock::new(0)));
    let committed = Arc::new(AtomicU64::new(0));

    let mut handles = Vec::new();
    for writer in 0..WRITERS {
        let store = Arc::clone(&store);
        let committed = Arc::clone(&committed);
        handles.push(std::thread::spawn(move || {
            let mut wins: Vec<u64> = Vec::new();
            let mut attempt = 0u64;
            let mut payload = Document::new();
            payload.insert("w".into(), Scalar::Int(writer as i64));
            while committed.load(Ordering::Relaxed) < TARGET {
                let head = store.actor_max_sequence("contended");
                let event = NewEvent::new(
                    "evt",
                    head as i64,
                    payload.clone(),
                    &format!("w{writer}-{attempt}"),
                );
                attempt += 1;
                match store.append("contended", Some(head), vec![event]) {
                    Ok(receipt) => {
                        committed.fetch_add(1, Ordering::Relaxed);
                        wins.push(receipt.first_sequence);
                    }
                    Err(StoreError::SequenceConflict { .. }) => {}
                    Err(e) => panic!("writer {writer}: {e}"),
                }
            }
            wins
        }));
    }
    let per_writer: Vec<Vec<u64>> = handles.into_iter().map(|h| h.join().unwrap()).collect();

    let max = store.actor_max_sequence("contended");
    assert!(max >= TARGET);
    let mut all: Vec<u64> = per_writer.iter().flatten().copied().collect();
    all.sort_unstable();
    assert_eq!(all.len() as u64, max, "every slot has exactly one winner");
    assert_eq!(all, (1..=max).collect::<Vec<u64>>(), "gap-free, duplicate-free");

    // The stream itself is contiguous too.
    let stream = store.read_stream("contended", 1, None).unwrap();
    assert_eq!(stream.len() as u64, max);
    for (i, record) in stream.iter().enumerate() {
        assert_eq!(record.sequence, i as u64 + 1);
    }
    report(
        10,
        "single-writer linearizability",
        &format!("{WRITERS} writers, {max} committed events, gap-free and duplicate-free"),
    );
}

// ---------------------------------------------------------------------------
// 11: backend conformance and crash recovery
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum OpResult {
    Receipt(u64, u64, u64),
    Records(Vec<(String, u64, u64, String, i64)>),
    Snapshot(Option<(u64, i64)>),
    Count(usize),
    Error(String),
}

fn run_op(store: &EventStore, op_seed: u64, op_index: usize, rng: &mut StdRng) -> OpResult {
    let actor = format!("a{}", rng.gen_range(0..3));
    match rng.gen_range(0..8) {
        0 | 1 | 2 => {
            let n_events = rng.gen_range(1..=3);
            let expected = match rng.gen_range(0..3) {
                0 => None,
                1 => Some(store.actor_max_sequence(&actor)),
                _ => Some(rng.gen_range(0..4)), // often wrong on purpose
            };
            let reuse_cid = rng.gen_bool(0.15);
            let events: Vec<NewEvent> = (0..n_events)
                .map(|e| {
                    let cid = if reuse_cid {
                        format!("s{op_seed}-dup")
                    } else {
                        format!("s{op_seed}-{op_index}-{e}")
                    };
                    let mut payload = Document::new();
                    payload.insert("v".into(), Scalar::Int(rng.gen_range(-9..9)));
                    NewEvent::new(
                        ["added", "removed"][rng.gen_range(0..2)],
                        1_000 + op_index as i64,
                        payload,
                        &cid,
                    )
                })
                .collect();
            match store.append(&actor, expected, events) {
                Ok(r) => OpResult::Receipt(r.first_sequence, r.last_sequence, r.last_global_offset),
                Err(e) => OpResult::Error(error_code(&e)),
            }
        }
        3 => match store.read_stream(&actor, rng.gen_range(1..5), None) {
            Ok(records) => OpResult::Records(project(records)),
            Err(e) => OpResult::Error(error_code(&e)),
        },
        4 => OpResult::Records(project(store.read_global(rng.gen_range(1..5), 100))),
        5 => OpResult::Records(project(store.read_by_event_type(
            ["added", "removed", "ghost"][rng.gen_range(0..3)],
            1,
            100,
        ))),
        6 => {
            let up_to = rng.gen_range(1..8);
            let mut state = Document::new();
            state.insert("at".into(), Scalar::Int(up_to as i64));
            match store.save_snapshot(&actor, up_to, state) {
                Ok(s) => OpResult::Snapshot(Some((s.up_to_sequence, s.created_at))),
                Err(e) => OpResult::Error(error_code(&e)),
            }
        }
        _ => {
            if rng.gen_bool(0.5) {
                OpResult::Snapshot(
                    store
                        .load_latest_snapshot(&actor)
                        .map(|s| (s.up_to_sequence, s.created_at)),
                )
            } else {
                match store.prune_snapshots(
                    &actor,
                    &RetentionPolicy { keep_last_n: 1, min_events_between_snapshots: 1 },
                ) {
                    Ok(n) => OpResult::Count(n),
                    Err(e) => OpResult::Error(error_code(&e)),
                }
            }
        }
    }
}

fn project(records: Vec<actordb_core::EventRecord>) -> Vec<(String, u64, u64, String, i64)> {
    records
        .into_iter()
        .map(|r| (r.actor_id, r.sequence, r.global_offset, r.event_type, r.ingest_time))
        .collect()
}

fn error_code(e: &StoreError) -> String {
    match e {
        StoreError::SequenceConflict { .. } => "SequenceConflict".into(),
        StoreError::DuplicateCommand { receipt, .. } => {
            format!("Duplicate@{}..{}", receipt.first_sequence, receipt.last_sequence)
        }
        StoreError::InvalidArgument(_) => "InvalidArgument".into(),
        other => format!("{other}"),
    }
}

#[test]
fn criterion_11a_backend_conformance() {
    const SEQUENCES: u64 = 1_000;
    for seed in 0..SEQUENCES {
        let dir = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(10_000 + seed as i64);
        let mem = EventStore::open(Arc::new(MemoryBackend::new()), clock.clone());
        let file = EventStore::open(
            Arc::new(FileLogBackend::open(dir.path()).unwrap()),
            clock.clone(),
        );

        let n_ops = 8 + (seed % 12) as usize;
        // Identical rng per store so both see the same operation stream.
        let mut rng_a = StdRng::seed_from_u64(seed * 7 + 1);
        let mut rng_b = StdRng::seed_from_u64(seed * 7 + 1);
        for op in 0..n_ops {
            clock.advance(13);
            let a = run_op(&mem, seed, op, &mut rng_a);
            let b = run_op(&file, seed, op, &mut rng_b);
            assert_eq!(a, b, "seed {seed} op {op}: backends diverged");
        }

        // Reopen the file log; the persisted feed must match memory.
        drop(file);
        let reopened = EventStore::open(
            Arc::new(FileLogBackend::open(dir.path()).unwrap()),
            clock.clone(),
        );
        assert_eq!(
            project(mem.read_global(1, 10_000)),
            project(reopened.read_global(1, 10_000)),
            "seed {seed}: reopen lost or reordered records"
        );
        assert_eq!(mem.max_global_offset(), reopened.max_global_offset());
        for actor in mem.actor_ids() {
            assert_eq!(
                mem.load_latest_snapshot(&actor).map(|s| (s.up_to_sequence, s.created_at)),
                reopened.load_latest_snapshot(&actor).map(|s| (s.up_to_sequence, s.created_at)),
                "seed {seed}: snapshot state diverged for {actor}"
            );
        }
    }
    report(11, "backend conformance", &format!("{SEQUENCES} generated operation sequences agree (memory vs file-log, incl. reopen)"));
}

#[test]
fn criterion_11b_truncation_at_every_boundary() {
    // Build a log with a healthy mix of record sizes.
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(5_000);
    let store = EventStore::open(
        Arc::new(FileLogBackend::open(dir.path()).unwrap()),
        clock.clone(),
    );
    for i in 0..10u64 {
        let mut payload = Document::new();
        payload.insert("v".into(), Scalar::Int(i as i64));
        if i % 3 == 0 {
            payload.insert("pad".into(), Scalar::Str("x".repeat((i * 7) as usize)));
        }
        store
            .append(
                &format!("a{}", i % 2),
                None,
                vec![NewEvent::new("evt", i as i64, payload, &format!("c{i}"))],
            )
            .unwrap();
    }
    let full = store.read_global(1, 100);
    drop(store);
    let bytes = std::fs::read(dir.path().join("events.adb")).unwrap();

    // Independent frame walk: how many records are fully contained in a
    // prefix of length `cut`?
    let frames_within = |cut: usize| -> usize {
        let mut pos = 4; // magic
        let mut count = 0;
        loop {
            if pos + 4 > cut {
                return count;
            }
            let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            if pos + 8 + len > cut {
                return count;
            }
            count += 1;
            pos += 8 + len;
        }
    };

    let mut checked = 0usize;
    for cut in 4..=bytes.len() {
        let case_dir = tempfile::tempdir().unwrap();
        std::fs::write(case_dir.path().join("events.adb"), &bytes[..cut]).unwrap();
        let reopened = EventStore::open(
            Arc::new(FileLogBackend::open(case_dir.path()).unwrap()),
            clock.clone(),
        );
        let expected = frames_within(cut);
        let recovered = reopened.read_global(1, 100);
        assert_eq!(
            recovered.len(),
            expected,
            "cut {cut}: torn tail must be dropped, fully-written records kept"
        );
        assert_eq!(
            project(recovered),
            project(full[..expected].to_vec()),
            "cut {cut}: recovered records must match the original prefix"
        );
        // The reopened store still accepts appends.
        if cut % 97 == 0 {
            let mut payload = Document::new();
            payload.insert("post".into(), Scalar::Bool(true));
            reopened
                .append("recovered", None, vec![NewEvent::new("evt", 1, payload, "post-1")])
                .unwrap();
        }
        checked += 1;
    }
    report(
        11,
        "crash recovery",
        &format!("{checked} truncation points recovered cleanly (file-log)"),
    );
}
