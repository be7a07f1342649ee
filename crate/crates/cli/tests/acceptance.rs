//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails.

use dsm_core::monitor::Payload;
use dsm_core::simulator::run;
use dsm_core::taxonomy::Category;
use dsm_core::testkit::{random_registry, random_weights};
use dsm_core::{
    assert_trace, build_assessment_matrix, case_study, rank_candidates, similarity, Action,
    Monitor, MonitorConfig, ObservationRecord, RecordBody, ReplayFilter, ScenarioStore, SourceId,
    Timestamp,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

type Check = Result<String, String>;
type Criterion = fn() -> Check;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, Criterion); 7] = [
        ("matrix reproduction", matrix_reproduction),
        ("case-study trace", case_study_trace),
        ("similarity properties", similarity_properties),
        ("ranking scale invariance", ranking_scale_invariance),
        ("monitor determinism", monitor_determinism),
        ("replay ordering", replay_ordering),
        ("crash recovery", crash_recovery),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome =
            std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {name} ({elapsed:.2?}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({elapsed:.2?}): {detail}");
            }
        }
    }
    println!("{} of 7 criteria passed", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn matrix_reproduction() -> Check {
    let start = Instant::now();
    let registry = case_study::registry();
    let m = build_assessment_matrix(&registry, Timestamp(0));
    let elapsed = start.elapsed();
    let sums = |c| {
        [
            ("traffic-sensors", "floating-car-data"),
            ("traffic-sensors", "remote-sensing"),
            ("floating-car-data", "remote-sensing"),
        ]
        .map(|(a, b)| m.pair(a, b, c).map(|p| p.weighted_sum))
    };
    let features = sums(Category::DataFeatures);
    let vulnerability = sums(Category::SourceVulnerability);
    ensure!(
        features == [Some(5.0), Some(0.0), Some(1.0)],
        "feature sums {features:?}"
    );
    ensure!(
        vulnerability == [Some(-1.0), Some(-4.0), Some(-3.0)],
        "vulnerability sums {vulnerability:?}"
    );
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok("features [5, 0, 1], vulnerability [-1, -4, -3]".into())
}

fn case_study_trace() -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    for text in [case_study::FLOOD_SCRIPT, case_study::FLOOD_EXTENDED_SCRIPT] {
        let script = case_study::script(text);
        let trace = run(&script).map_err(|e| e.to_string())?;
        let report = assert_trace(&trace, &script.expectations);
        ensure!(report.passed(), "{}:\n{}", script.name, report.render());
        notes.push(format!(
            "{} {}/{} expectations",
            script.name,
            report.results.len(),
            script.expectations.len()
        ));

        let d = &trace.decisions;
        ensure!(d.len() >= 2, "{}: {} decisions", script.name, d.len());
        let chosen = |i: usize| d[i].chosen.as_ref().map(|s| s.as_str());
        ensure!(
            d[0].action == Action::ActivateFallback && chosen(0) == Some("floating-car-data"),
            "first decision {:?} -> {:?}",
            d[0].action,
            chosen(0)
        );
        ensure!(
            d[1].action == Action::ActivateFallback && chosen(1) == Some("remote-sensing"),
            "second decision {:?} -> {:?}",
            d[1].action,
            chosen(1)
        );
        let gap = d[1]
            .effective_at
            .map(|t| t.as_millis() - d[1].decided_at.as_millis());
        ensure!(
            gap == Some(1_200_000),
            "remote sensing activation gap {gap:?}"
        );
        if text == case_study::FLOOD_EXTENDED_SCRIPT {
            ensure!(
                d.len() == 3 && d[2].action == Action::Alarm && d[2].chosen.is_none(),
                "extended variant does not end in an alarm: {:?}",
                d.iter().map(|d| d.action).collect::<Vec<_>>()
            );
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(notes.join(", "))
}

fn category_total(registry: &dsm_core::Registry, w: &dsm_core::Weights, c: Category) -> f64 {
    registry
        .schema()
        .in_category(c)
        .map(|d| w.get(d.id.as_str()))
        .sum()
}

fn similarity_properties() -> Check {
    const CASES: u64 = 1000;
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let registry = random_registry(&mut rng, 2, 1);
        let weights = random_weights(&mut rng, registry.schema());
        let (m, n) = ("source-0000", "source-0001");

        let mut twin = registry.source(m).ok_or("missing source")?.to_raw();
        twin.id = SourceId::new("twin");
        twin.standard = false;
        let with_twin = registry.with_source(twin).map_err(|e| e.to_string())?;

        for c in Category::ALL {
            let total = category_total(&registry, &weights, c);
            let mn = similarity(&registry, m, n, c, &weights).map_err(|e| e.to_string())?;
            let nm = similarity(&registry, n, m, c, &weights).map_err(|e| e.to_string())?;
            ensure!(
                mn.weighted_sum == nm.weighted_sum && mn.attribute_scores == nm.attribute_scores,
                "seed {seed}: asymmetric {c:?}"
            );
            ensure!(
                mn.weighted_sum.abs().le(&total),
                "seed {seed}: |{}| > {total}",
                mn.weighted_sum
            );
            let own = similarity(&with_twin, m, "twin", c, &weights).map_err(|e| e.to_string())?;
            ensure!(
                own.weighted_sum == total,
                "seed {seed}: self comparison {} != {total}",
                own.weighted_sum
            );
        }

        let wider = random_registry(&mut rng, 4, 2);
        let w = random_weights(&mut rng, wider.schema());
        let reweighed = build_assessment_matrix(&wider, Timestamp(0))
            .reweigh(&w)
            .map_err(|e| e.to_string())?;
        let rebuilt = build_assessment_matrix(
            &wider
                .with_weights(wider.weights().merged(&w))
                .map_err(|e| e.to_string())?,
            Timestamp(0),
        );
        ensure!(
            reweighed.same_contents(&rebuilt),
            "seed {seed}: reweigh differs from rebuild"
        );
    }
    Ok(format!("{CASES} pairs and weight vectors"))
}

fn ranking_scale_invariance() -> Check {
    const REGISTRIES: u64 = 100;
    let mut ties = 0;
    for seed in 0..REGISTRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let n = rng.random_range(3..10);
        let registry = random_registry(&mut rng, n, 1);
        let weights = random_weights(&mut rng, registry.schema());
        let base = build_assessment_matrix(&registry, Timestamp(0));
        let candidates: Vec<SourceId> = registry
            .sources()
            .iter()
            .skip(1)
            .map(|s| s.id.clone())
            .collect();
        let reference = registry.sources()[0].id.as_str();
        let shape = |w: &dsm_core::Weights| -> Result<(Vec<SourceId>, Vec<bool>), String> {
            let matrix = base.reweigh(w).map_err(|e| e.to_string())?;
            let ranking =
                rank_candidates(&matrix, reference, &candidates).map_err(|e| e.to_string())?;
            Ok((
                ranking.iter().map(|e| e.candidate.clone()).collect(),
                ranking
                    .windows(2)
                    .map(|p| p[0].rank_score == p[1].rank_score)
                    .collect(),
            ))
        };
        let expected = shape(&weights)?;
        ties += expected.1.iter().filter(|t| **t).count();
        for c in [0.5, 2.0, 10.0] {
            let got = shape(&weights.scaled(c))?;
            ensure!(
                got == expected,
                "seed {seed}, c = {c}: {got:?} != {expected:?}"
            );
        }
    }
    Ok(format!(
        "{REGISTRIES} registries x c in {{0.5, 2, 10}}, {ties} ties preserved"
    ))
}

fn monitor_determinism() -> Check {
    let registry = case_study::registry();
    let config = MonitorConfig::default();
    let (monitor, _) = Monitor::new(&registry, config.clone(), Timestamp(0));
    let horizon = monitor.horizon("traffic-sensors");
    ensure!(
        horizon == Some(Duration::from_secs(3)),
        "traffic sensor horizon {horizon:?}"
    );

    let ids = ["traffic-sensors", "floating-car-data", "remote-sensing"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let steps: Vec<(usize, i64, f64)> = (0..5_000)
        .map(|_| {
            (
                rng.random_range(0..4),
                rng.random_range(0..4_000),
                rng.random_range(-20.0..220.0),
            )
        })
        .collect();
    let run_once = || -> Result<Vec<dsm_core::StatusTransition>, String> {
        let (mut m, mut out) = Monitor::new(&registry, config.clone(), Timestamp(0));
        let mut now = 0;
        for &(what, dt, value) in &steps {
            now += dt;
            if what == 3 {
                out.extend(m.tick(Timestamp(now)));
            } else {
                let record = ObservationRecord {
                    source_id: ids[what].into(),
                    event_time: Timestamp(now - dt / 2),
                    arrival_time: Timestamp(now),
                    payload: Payload::Measurement {
                        value,
                        unit: "km/h".into(),
                    },
                    quality: None,
                };
                out.extend(
                    m.ingest(&record, Timestamp(now))
                        .map_err(|e| e.to_string())?,
                );
            }
        }
        Ok(out)
    };
    let first = run_once()?;
    for i in 2..=3 {
        ensure!(run_once()? == first, "run {i} differs from run 1");
    }
    Ok(format!(
        "3 runs, {} identical transitions; traffic sensor horizon 3 s",
        first.len()
    ))
}

fn replay_ordering() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let times: Vec<i64> = (0..10_000)
        .map(|_| rng.random_range(0..3_600_000))
        .collect();
    for round in 0..10 {
        let mut order = times.clone();
        order.shuffle(&mut rng);
        let mut store = ScenarioStore::in_memory();
        for &t in &order {
            store
                .append(
                    None,
                    RecordBody::Observation(ObservationRecord {
                        source_id: "s".into(),
                        event_time: Timestamp(t),
                        arrival_time: Timestamp(t),
                        payload: Payload::Measurement {
                            value: 0.0,
                            unit: String::new(),
                        },
                        quality: None,
                    }),
                )
                .map_err(|e| e.to_string())?;
        }
        let replayed = store
            .replay(Timestamp::MIN, Timestamp::MAX, &ReplayFilter::default())
            .map_err(|e| e.to_string())?;
        ensure!(
            replayed
                .windows(2)
                .all(|p| (p[0].event_time, p[0].sequence) < (p[1].event_time, p[1].sequence)),
            "round {round}: not sorted"
        );
        let mut seqs: Vec<u64> = replayed.iter().map(|r| r.sequence).collect();
        seqs.sort_unstable();
        ensure!(
            seqs == (1..=10_000).collect::<Vec<_>>(),
            "round {round}: not a permutation"
        );
        ensure!(
            replayed
                .iter()
                .all(|r| r.event_time.as_millis() == order[r.sequence as usize - 1]),
            "round {round}: record contents changed"
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok("10 append orders of 10000 records".into())
}

struct Service {
    child: Child,
    base: String,
    http: reqwest::blocking::Client,
}

impl Service {
    fn start(registry: &Path, store: &Path) -> Result<Self, String> {
        let port = TcpListener::bind("127.0.0.1:0")
            .and_then(|l| l.local_addr())
            .map_err(|e| e.to_string())?
            .port();
        let child = Command::new(env!("CARGO_BIN_EXE_dsm"))
            .args(["serve", "--tick-ms", "100", "--listen"])
            .arg(format!("127.0.0.1:{port}"))
            .arg("--registry")
            .arg(registry)
            .arg("--store-dir")
            .arg(store)
            .env_remove("DSM_TOKEN")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("spawning dsm: {e}"))?;
        let service = Self {
            child,
            base: format!("http://127.0.0.1:{port}"),
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(5))
                .build()
                .map_err(|e| e.to_string())?,
        };
        let deadline = Instant::now() + Duration::from_secs(10);
        while Instant::now() < deadline {
            if service.get("/health").is_ok() {
                return Ok(service);
            }
            std::thread::sleep(Duration::from_millis(50));
        }
        Err("service did not become healthy".into())
    }

    fn get(&self, path: &str) -> Result<Value, String> {
        let resp = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .map_err(|e| e.to_string())?;
        ensure!(resp.status().is_success(), "GET {path}: {}", resp.status());
        resp.json().map_err(|e| e.to_string())
    }

    fn send(&self, method: reqwest::Method, path: &str, body: Value) -> Result<Value, String> {
        let resp = self
            .http
            .request(method, format!("{}{path}", self.base))
            .json(&body)
            .send()
            .map_err(|e| e.to_string())?;
        ensure!(resp.status().is_success(), "{path}: {}", resp.status());
        resp.json().map_err(|e| e.to_string())
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

fn crash_recovery() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let registry = dir.path().join("registry.json");
    std::fs::write(&registry, case_study::REGISTRY_JSON).map_err(|e| e.to_string())?;
    let store = dir.path().join("store");

    let service = Service::start(&registry, &store)?;
    for offset in [2_000, 1_000, 0] {
        service.send(
            reqwest::Method::POST,
            "/observations",
            json!({
                "source-id": "traffic-sensors",
                "event-time": now_ms() - offset,
                "payload": { "value": 42.0, "unit": "km/h" }
            }),
        )?;
    }
    service.send(
        reqwest::Method::PUT,
        "/weights",
        json!({ "autonomous-operation-time": 3.0 }),
    )?;

    // traffic sensors stop reporting; wait for the failover decision
    let deadline = Instant::now() + Duration::from_secs(15);
    let before = loop {
        let log = service.get("/decisions")?;
        if log.as_array().is_some_and(|l| !l.is_empty()) {
            break log;
        }
        ensure!(Instant::now() < deadline, "no decision before the crash");
        std::thread::sleep(Duration::from_millis(100));
    };
    let matrix_before = service.get("/matrix")?;
    let active_before = service.get("/active")?;
    service.kill();

    let service = Service::start(&registry, &store)?;
    let after = service.get("/decisions")?;
    let matrix_after = service.get("/matrix")?;
    let active_after = service.get("/active")?;
    service.kill();

    let (before, after) = (
        before.as_array().ok_or("decision log is not a list")?,
        after.as_array().ok_or("decision log is not a list")?,
    );
    ensure!(
        after.len() >= before.len() && after[..before.len()] == before[..],
        "decision log after restart is not a superset of {before:?}: {after:?}"
    );
    for key in [
        "pairs",
        "weights",
        "registry-version",
        "attributes",
        "sources",
    ] {
        ensure!(
            matrix_after["matrix"][key] == matrix_before["matrix"][key],
            "matrix {key} differs after restart"
        );
    }
    ensure!(
        matrix_after["matrix-version"] == matrix_before["matrix-version"],
        "matrix version {} != {}",
        matrix_after["matrix-version"],
        matrix_before["matrix-version"]
    );
    ensure!(
        active_after["designations"]["traffic"]["source"]
            == active_before["designations"]["traffic"]["source"],
        "designation changed: {} -> {}",
        active_before["designations"]["traffic"],
        active_after["designations"]["traffic"]
    );
    Ok(format!(
        "{} decisions kept, matrix {} restored",
        before.len(),
        matrix_after["matrix-version"]
    ))
}
