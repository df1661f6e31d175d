//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero on any
//! failure.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::Rng;
use sha2::{Digest, Sha256};

use choicectx::detector::DetectorConfig;
use choicectx::fixtures;
use choicectx::intervention::{adapt_choice_set, AdaptParams, DetectorContext};
use choicectx::learner::{
    constraints_from_log, constraints_from_observation, ChoiceLog, LearnerConfig, MatrixEstimate,
    Observation,
};
use choicectx::reversal::{classify_outcome, minimal_tipping_sets, OutcomeClass};
use choicectx::service::{
    CreateSessionRequest, OfferRequest, RetractRequest, Service, SessionConfig, Store,
    SubmitRequest,
};
use choicectx::sim::{
    evaluate_detector, evaluate_learner, representation_counts, sample_matrix, sample_spaces,
    DetectorPlant,
};
use choicectx::{full_method_utility, AdditiveGains, ChoiceSpace, ItemId, UtilityMatrix};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, fail: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(fail())
    }
}

fn space(s: &str) -> ChoiceSpace {
    ChoiceSpace::parse(s).unwrap()
}

fn table_reproduction() -> Outcome {
    let start = Instant::now();
    let cases: [(UtilityMatrix, &str, &[f64], &str); 5] = [
        (fixtures::table4(), "H,R", &[5.0, 10.0], "R"),
        (fixtures::table5(), "H,R", &[5.0, 10.0], "R"),
        (fixtures::table1(), "H,R,F", &[20.0, 10.0, 7.0], "H"),
        (fixtures::table6(), "H,R,F", &[8.0, 10.0, 7.0], "R"),
        (fixtures::table7(), "H,R,F", &[20.0, 10.0, 30.0], "F"),
    ];
    for (m, s, expect, winner) in &cases {
        let t = m.utility_table(&space(s)).map_err(|e| e.to_string())?;
        check(t.values() == *expect, || {
            format!("table over {s}: {:?} != {expect:?}", t.values())
        })?;
        let w = m.best_choice(&space(s)).map_err(|e| e.to_string())?;
        check(w.as_str() == *winner, || {
            format!("winner over {s}: {w} != {winner}")
        })?;
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("5 tables exact, {elapsed:?}"))
}

fn reversal_narrative() -> Outcome {
    let (old, new) = (space("H,R"), space("H,R,F"));
    let got: Vec<OutcomeClass> = [fixtures::table1(), fixtures::table6(), fixtures::table7()]
        .iter()
        .map(|m| classify_outcome(m, &old, &new, None).unwrap())
        .collect();
    let want = [
        OutcomeClass::ReversalToPriorItem,
        OutcomeClass::Unchanged,
        OutcomeClass::NewItemChosen,
    ];
    check(got == want, || format!("{got:?} != {want:?}"))?;
    Ok("table1 reversal to prior item, table6 unchanged, table7 new item chosen".into())
}

fn tipping_oracle() -> Outcome {
    let start = Instant::now();
    let mut compared = 0;
    let mut nonempty = 0;
    for seed in 1..=100u64 {
        let n = 2 + (seed as usize % 7);
        let m = sample_matrix(n, seed, 0.3).unwrap();
        let cat = m.catalog().clone();
        let rows = common::rows_of(&m);
        let mut rng = common::rng(seed);
        let base = common::random_subset(&mut rng, n, 2, 3);
        let current = base[0];
        let target = base[1 + rng.random_range(0..base.len() - 1)];
        let pool: Vec<usize> = (0..n).filter(|i| !base.contains(i)).collect();
        for full in [false, true] {
            let got = minimal_tipping_sets(
                &m,
                cat.item(current),
                cat.item(target),
                &common::space(&cat, &base),
                &common::ids(&cat, &pool),
                full,
            )
            .map_err(|e| format!("seed {seed}: {e}"))?;
            let got: Vec<Vec<usize>> = got.sets.iter().map(|s| common::indices(&cat, s)).collect();
            let want = common::tipping_antichain(&rows, current, target, &base, &pool, full);
            check(got == want, || {
                format!("seed {seed} full={full}: {got:?} != {want:?}")
            })?;
            compared += 1;
            nonempty += usize::from(!want.is_empty());
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{compared} antichains identical ({nonempty} non-empty), {elapsed:?}"
    ))
}

fn additivity_oracle() -> Outcome {
    let mut pairs = 0usize;
    for seed in 1..=50u64 {
        let n = 2 + (seed as usize % 3);
        let m = sample_matrix(n, seed, 0.3).unwrap();
        let cat = m.catalog().clone();
        let rows = common::rows_of(&m);
        let gains = AdditiveGains::new(&m);
        for mask in 1u32..(1 << n) {
            let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let s = common::space(&cat, &members);
            for &k in &members {
                let item = cat.item(k);
                let full = full_method_utility(&m, &gains, item, &s).unwrap();
                let ctx = m.contextual_utility(item, &s).unwrap();
                let reference = common::utility(&rows, k, &members);
                check(
                    full.to_bits() == ctx.to_bits() && ctx.to_bits() == reference.to_bits(),
                    || format!("seed {seed} {item} in {s}: full {full} ctx {ctx} ref {reference}"),
                )?;
                pairs += 1;
            }
        }
    }
    let counts: Vec<String> = (1..=8)
        .map(|n| {
            let (matrix, full) = representation_counts(n);
            format!("n={n}: {matrix} vs {full}")
        })
        .collect();
    Ok(format!(
        "{pairs} (item, space) pairs exact; parameters n^2 vs n*2^(n-1): {}",
        counts.join(", ")
    ))
}

fn learner_feasibility() -> Outcome {
    let start = Instant::now();
    let mut heldout = Vec::new();
    let mut min_margin = f64::INFINITY;
    for seed in 1..=50u64 {
        let n = 2 + (seed as usize % 4);
        let truth = sample_matrix(n, seed, 0.3).unwrap();
        let train = sample_spaces(truth.catalog().items(), 200, 2, n, seed).unwrap();
        let seen: std::collections::BTreeSet<&ChoiceSpace> = train.iter().collect();
        let held: Vec<ChoiceSpace> = (1u32..(1 << n))
            .filter(|m| m.count_ones() >= 2)
            .map(|m| {
                let idx: Vec<usize> = (0..n).filter(|i| m >> i & 1 == 1).collect();
                common::space(truth.catalog(), &idx)
            })
            .filter(|s| !seen.contains(s))
            .collect();
        let r = evaluate_learner(&truth, &train, &held, seed)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        check(r.truth_satisfaction == 1.0, || {
            format!("seed {seed}: truth satisfies {}", r.truth_satisfaction)
        })?;
        check(r.margin > 0.0, || {
            format!("seed {seed}: margin {}", r.margin)
        })?;
        check(r.training_consistency == 1.0, || {
            format!(
                "seed {seed}: training consistency {}",
                r.training_consistency
            )
        })?;
        min_margin = min_margin.min(r.margin);
        if r.n_heldout > 0 {
            heldout.push(r.heldout_accuracy);
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(120), || {
        format!("took {elapsed:?}")
    })?;
    let mean = heldout.iter().sum::<f64>() / heldout.len().max(1) as f64;
    Ok(format!(
        "50 runs: truth feasible, margin > 0 (min {min_margin:.3e}), consistency 1.0; held-out accuracy {mean:.3} (reported; runs with unseen spaces: {}), {elapsed:?}",
        heldout.len()
    ))
}

fn scale_invariance() -> Outcome {
    let mut rng = common::rng(2024);
    let mut plans = 0;
    for trial in 0..1000u64 {
        let n = rng.random_range(2..=8usize);
        let m = sample_matrix(n, 10_000 + trial, rng.random_range(0.0..=1.0)).unwrap();
        let cat = m.catalog().clone();
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled = m.scale(c).unwrap();
        let members = common::random_subset(&mut rng, n, 1, n);
        let s = common::space(&cat, &members);
        let (a, b) = (m.best_choice(&s).unwrap(), scaled.best_choice(&s).unwrap());
        check(a == b, || {
            format!("trial {trial}: best {a} vs {b} at c={c}")
        })?;

        let pool = common::random_subset(&mut rng, n, 1, n);
        let k = rng.random_range(1..=pool.len());
        let n_required = rng.random_range(0..=k.min(2));
        let required: Vec<ItemId> = common::ids(&cat, &pool[..n_required]);
        let protect = rng
            .random_bool(0.5)
            .then(|| cat.item(pool[rng.random_range(0..pool.len())]).clone());
        let suspects = if rng.random_bool(0.3) {
            vec![cat.item(rng.random_range(0..n)).clone()]
        } else {
            Vec::new()
        };
        let params = AdaptParams {
            pool: common::ids(&cat, &pool),
            k,
            required,
            protect,
            rho_max: 0.6,
        };
        let ctx = DetectorContext {
            history: None,
            suspects,
        };
        let est = |matrix: UtilityMatrix| MatrixEstimate {
            matrix,
            margin: 1.0,
            violated: Vec::new(),
        };
        let p = adapt_choice_set(&est(m.clone()), &params, &ctx)
            .map_err(|e| format!("trial {trial}: {e}"))?;
        let q = adapt_choice_set(&est(scaled), &params, &ctx)
            .map_err(|e| format!("trial {trial}: {e}"))?;
        check(
            p.choice_set == q.choice_set
                && p.predicted_winner == q.predicted_winner
                && p.safety == q.safety
                && p.alternatives_considered == q.alternatives_considered,
            || format!("trial {trial}: plans differ at c={c}: {p:?} vs {q:?}"),
        )?;
        check(
            p.predicted_winner == m.best_choice(&p.choice_set).unwrap(),
            || format!("trial {trial}: plan winner is not the best choice"),
        )?;
        plans += 1;
    }
    Ok(format!(
        "1000 triples: best_choice unchanged; {plans} adaptation plans unchanged"
    ))
}

fn detector_precision_recall() -> Outcome {
    let config = DetectorConfig::default();
    let plant = DetectorPlant::default();
    let mut planted = 0;
    for seed in 1..=20u64 {
        let e = evaluate_detector(seed, &plant, &config).map_err(|e| e.to_string())?;
        check(e.flags_recall == Some(1.0), || {
            format!("seed {seed}: recall {:?}", e.flags_recall)
        })?;
        check(e.control_flags == 0, || {
            format!("seed {seed}: {} control flags", e.control_flags)
        })?;
        check(e.suspect_rank == Some(1), || {
            format!("seed {seed}: suspect rank {:?}", e.suspect_rank)
        })?;
        planted += e.planted;
        let controls = DetectorPlant {
            violation_users: 0,
            suspect_users: 0,
            ..plant.clone()
        };
        let c = evaluate_detector(seed, &controls, &config).map_err(|e| e.to_string())?;
        check(c.flagged == 0, || {
            format!("seed {seed}: {} flags on consistent logs", c.flagged)
        })?;
    }
    Ok(format!(
        "20 seeds: recall 1.0 on {planted} planted violations, zero control flags, planted suspect ranked first"
    ))
}

fn constraint_count() -> Outcome {
    let config = LearnerConfig::default();
    let mut checked = 0;
    for seed in 1..=20u64 {
        let n = 2 + (seed as usize % 7);
        let truth = sample_matrix(n, seed, 0.3).unwrap();
        let cat = truth.catalog().clone();
        let spaces = sample_spaces(cat.items(), 50, 1, n, seed).unwrap();
        let mut log = ChoiceLog::new("u");
        for (t, s) in spaces.iter().enumerate() {
            let mut obs = Observation::new(
                s.clone(),
                truth.best_choice(s).unwrap(),
                Utc.timestamp_opt(1_700_000_000 + t as i64, 0).unwrap(),
            )
            .unwrap();
            obs.retracted = t % 7 == 3;
            let cs = constraints_from_observation(&obs, t, &cat, None, &config).unwrap();
            let strict = cs.iter().filter(|c| c.is_strict()).count();
            let want = if obs.retracted { 0 } else { s.len() - 1 };
            check(strict == want, || {
                format!("seed {seed} obs {t}: {strict} strict, want {want}")
            })?;
            log.push(obs).unwrap();
            checked += 1;
        }
        let expected: usize = log
            .observations()
            .iter()
            .filter(|o| !o.retracted)
            .map(|o| o.space.len() - 1)
            .sum();
        let total = constraints_from_log(&log, &cat, &config)
            .unwrap()
            .iter()
            .filter(|c| c.is_strict())
            .count();
        check(total == expected, || {
            format!("seed {seed}: log emits {total}, want {expected}")
        })?;
    }
    Ok(format!(
        "{checked} observations: N-1 strict constraints each, none for retracted"
    ))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_dir(dir: &Path) -> String {
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for entry in walk(dir) {
        let rel = entry
            .strip_prefix(dir)
            .unwrap()
            .to_string_lossy()
            .into_owned();
        files.insert(rel, std::fs::read(&entry).unwrap());
    }
    let mut h = Sha256::new();
    for (name, bytes) in files {
        h.update(name.as_bytes());
        h.update(&bytes);
    }
    hex(&h.finalize())
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

async fn snapshot(svc: &Service, ids: &[String]) -> String {
    let mut out = String::new();
    for id in ids {
        out.push_str(&serde_json::to_string(&svc.estimate(id).await.unwrap()).unwrap());
        out.push_str(&serde_json::to_string(&svc.report(id).await.unwrap()).unwrap());
    }
    out
}

async fn service_script(dir: &Path) -> Outcome {
    let svc = Service::new(Store::on_disk(dir).unwrap(), SessionConfig::default()).unwrap();
    let catalog = fixtures::table1().catalog().clone();
    let mut ids = Vec::new();
    for _ in 0..3 {
        let state = svc
            .create_session(CreateSessionRequest {
                catalog: catalog.items().to_vec(),
                labels: catalog.labels().clone(),
                config: None,
            })
            .await
            .unwrap();
        ids.push(state.session_id);
    }
    let explicit = |s: &str| OfferRequest {
        items: Some(choicectx::parse_ids(s).unwrap()),
        ..Default::default()
    };
    let submit = |set: &str, chosen: &str, commit: bool| SubmitRequest {
        choice_set_id: set.to_string(),
        chosen: ItemId::new(chosen).unwrap(),
        commit,
    };
    for (u, id) in ids.iter().enumerate() {
        let hr = svc.offer(id, &explicit("H,R")).await.unwrap().choice_set_id;
        for _ in 0..10 + u {
            svc.submit(id, &submit(&hr, "R", true)).await.unwrap();
        }
        let hrf = svc
            .offer(id, &explicit("H,R,F"))
            .await
            .unwrap()
            .choice_set_id;
        svc.submit(id, &submit(&hrf, "H", true)).await.unwrap();
        svc.submit(id, &submit(&hrf, "F", true)).await.unwrap();
        svc.retract(
            id,
            &RetractRequest {
                observation: 11 + u,
            },
        )
        .await
        .unwrap();
    }
    let adaptive = OfferRequest {
        pool: Some(choicectx::parse_ids("H,R,F").unwrap()),
        k: Some(2),
        protect: Some(ItemId::new("R").unwrap()),
        ..Default::default()
    };
    svc.offer(&ids[0], &adaptive).await.unwrap();

    let live = snapshot(&svc, &ids).await;
    let before = (
        hash_dir(dir),
        serde_json::to_string(&svc.state(&ids[0]).await.unwrap()).unwrap(),
    );
    let hrf = svc
        .offer(&ids[1], &explicit("H,R,F"))
        .await
        .unwrap()
        .choice_set_id;
    let before_dry = (
        hash_dir(dir),
        serde_json::to_string(&svc.state(&ids[1]).await.unwrap()).unwrap(),
        snapshot(&svc, &ids).await,
    );
    let dry = svc
        .submit(&ids[1], &submit(&hrf, "H", false))
        .await
        .unwrap();
    check(!dry.committed && !dry.warnings.is_empty(), || {
        "dry run should warn without committing".into()
    })?;
    let after_dry = (
        hash_dir(dir),
        serde_json::to_string(&svc.state(&ids[1]).await.unwrap()).unwrap(),
        snapshot(&svc, &ids).await,
    );
    check(before_dry == after_dry, || {
        "dry-run submit changed the state hash".into()
    })?;
    check(before.0 != before_dry.0, || {
        "offer should have been persisted".into()
    })?;

    drop(svc);
    let rebuilt = Service::new(Store::on_disk(dir).unwrap(), SessionConfig::default()).unwrap();
    let replayed = snapshot(&rebuilt, &ids).await;
    check(live == replayed, || {
        "rebuilt estimate/report differ from live".into()
    })?;
    let digest = hex(&Sha256::digest(live.as_bytes()));
    Ok(format!(
        "3 sessions rebuilt from logs byte-identical (sha256 {}), dry-run left state hash unchanged",
        &digest[..16]
    ))
}

fn service_replay() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap();
    rt.block_on(service_script(dir.path()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("fixture table reproduction", table_reproduction),
        ("reversal narrative", reversal_narrative),
        ("tipping-set oracle equivalence", tipping_oracle),
        ("additivity oracle", additivity_oracle),
        ("learner feasibility and consistency", learner_feasibility),
        ("argmax scale invariance", scale_invariance),
        ("detector precision/recall", detector_precision_recall),
        ("constraint count", constraint_count),
        ("service replay determinism", service_replay),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match std::panic::catch_unwind(run) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
