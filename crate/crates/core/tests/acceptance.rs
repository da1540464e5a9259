//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ramp_core::config::EngineConfig;
use ramp_core::corpus::PolicyEntry;
use ramp_core::eval::{
    file_digest, mean_ap, results_jsonl, run_ablation, run_suite, success_rate, DetectionFixture, EpisodeOutcome,
    EpisodeRecord, EvalContext, Planner, Suite,
};
use ramp_core::gateway::GeneratorGateway;
use ramp_core::lexical::{idf_bm25_raw, idf_tfidf_raw, score_bm25, score_tfidf, tokenize, Bm25Params, CorpusStats};
use ramp_core::prompt::TARGET_TOKENS;
use ramp_core::retrieval::fuse_and_rank;
use ramp_core::sim::{resolve_reference, BBox, Color, Point, ReferenceExpr, Scene, SceneObject, Shape};
use ramp_core::{
    assemble, generate_task, run_pipeline, Codebase, HashingEmbedder, Metric, PromptTemplate, Query, RankedCandidate,
    RetrievalConfig, TaskFamily,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ------------------------------------------------------------------ 1

const VOCAB: [&str; 12] = [
    "put", "the", "red", "block", "into", "bowl", "rotate", "by", "degrees", "blue", "star", "pan",
];

/// ln(N / (df + 1)) and query-side tf, recomputed from raw token lists.
fn oracle_tfidf(q: &[&str], doc: &[&str], docs: &[Vec<&str>]) -> f64 {
    let n = docs.len() as f64;
    let mut seen = BTreeSet::new();
    let mut s = 0.0;
    for &t in q {
        if !seen.insert(t) || !doc.contains(&t) {
            continue;
        }
        let df = docs.iter().filter(|d| d.contains(&t)).count() as f64;
        let tf = q.iter().filter(|x| **x == t).count() as f64 / q.len() as f64;
        s += tf * (n / (df + 1.0)).ln();
    }
    s
}

fn oracle_bm25(q: &[&str], doc: &[&str], docs: &[Vec<&str>], k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut seen = BTreeSet::new();
    let mut s = 0.0;
    for &t in q {
        if !seen.insert(t) || !doc.contains(&t) {
            continue;
        }
        let df = docs.iter().filter(|d| d.contains(&t)).count() as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        let tf = q.iter().filter(|x| **x == t).count() as f64 / q.len() as f64;
        s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * q.len() as f64 / avg));
    }
    s
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn c1_scoring_oracles() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let p = Bm25Params::default();
    let mut compared = 0;
    for _ in 0..200 {
        let docs: Vec<Vec<&str>> = (0..r.gen_range(1..=10))
            .map(|_| {
                (0..r.gen_range(1..=20))
                    .map(|_| VOCAB[r.gen_range(0..VOCAB.len())])
                    .collect()
            })
            .collect();
        let q: Vec<&str> = (0..r.gen_range(1..=8))
            .map(|_| VOCAB[r.gen_range(0..VOCAB.len())])
            .collect();
        let streams: Vec<_> = docs.iter().map(|d| tokenize(&d.join(" "))).collect();
        let ids: Vec<String> = (0..docs.len()).map(|i| format!("d{i}")).collect();
        let stats = CorpusStats::build(ids.iter().map(String::as_str).zip(streams.iter()));
        let qs = tokenize(&q.join(" "));
        for (i, d) in docs.iter().enumerate() {
            let t = score_tfidf(&qs, &streams[i], &stats).map_err(|e| e.to_string())?;
            let b = score_bm25(&qs, &ids[i], &stats, p).map_err(|e| e.to_string())?;
            let (to, bo) = (oracle_tfidf(&q, d, &docs), oracle_bm25(&q, d, &docs, p.k1, p.b));
            check(rel_close(t, to, 1e-9), format!("tfidf {t} vs oracle {to}"))?;
            check(rel_close(b, bo, 1e-9), format!("bm25 {b} vs oracle {bo}"))?;
            compared += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 5.0, format!("took {secs:.2}s"))?;
    Ok(format!("{compared} documents over 200 corpora in {secs:.2}s"))
}

// ------------------------------------------------------------------ 2

fn c2_idf_spot_values() -> Outcome {
    let t = idf_tfidf_raw(4, 1).map_err(|e| e.to_string())?;
    let b = idf_bm25_raw(4, 1).map_err(|e| e.to_string())?;
    check((t - 2f64.ln()).abs() <= 1e-12, format!("tfidf idf {t}"))?;
    check((b - (10.0f64 / 3.0).ln()).abs() <= 1e-12, format!("bm25 idf {b}"))?;
    Ok(format!("idf_tfidf = {t:.12}, idf_bm25 = {b:.12}"))
}

// ------------------------------------------------------------------ 3

fn argsort(cands: &[RankedCandidate], key: impl Fn(&RankedCandidate) -> f64) -> Vec<String> {
    let mut v: Vec<(f64, String)> = cands.iter().map(|c| (key(c), c.entry.id.clone())).collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    v.into_iter().map(|(_, id)| id).collect()
}

fn c3_fusion_degeneracy() -> Outcome {
    let mut r = rng(3);
    for set in 0..100 {
        let n = r.gen_range(2..=12);
        let cands: Vec<RankedCandidate> = (0..n)
            .map(|i| RankedCandidate {
                entry: PolicyEntry::new(format!("e{:02}", (i * 7 + set) % 97), "x", "y", "s"),
                // coarse scores sometimes tie to exercise the id tie-break
                score_cr: f64::from(r.gen_range(0..6u8)) * 1.5,
                score_fr: Some(f64::from(r.gen_range(0..5u8)) / 5.0 + 0.1),
                fused: None,
                rank: 0,
            })
            .collect();
        let mut ids = BTreeSet::new();
        if !cands.iter().all(|c| ids.insert(c.entry.id.clone())) {
            continue;
        }
        let cfg = |lambda| RetrievalConfig {
            recall_k: n,
            k: n,
            lambda,
            ..RetrievalConfig::default()
        };
        let got = |lambda| {
            fuse_and_rank(&cands, &cfg(lambda))
                .into_iter()
                .map(|c| c.entry.id)
                .collect::<Vec<_>>()
        };
        check(
            got(1.0) == argsort(&cands, |c| c.score_cr),
            format!("set {set}: λ=1 differs from coarse order"),
        )?;
        check(
            got(0.0) == argsort(&cands, |c| c.score_fr.unwrap()),
            format!("set {set}: λ=0 differs from fine order"),
        )?;
    }
    Ok("100 candidate sets".into())
}

// ------------------------------------------------------------------ 4

fn c4_reverse_order() -> Outcome {
    let cb = Codebase::seed();
    let tmpl = PromptTemplate::builtin();
    let prov = HashingEmbedder::new(256);
    let mut n = 0;
    for (i, family) in TaskFamily::ALL.iter().cycle().take(50).enumerate() {
        let (_, task) = generate_task(*family, i as u64).map_err(|e| e.to_string())?;
        let cfg = RetrievalConfig {
            recall_k: 5,
            k: 1 + i % 5,
            ..RetrievalConfig::default()
        };
        let q = Query::new(task.instruction.clone()).map_err(|e| e.to_string())?;
        let out = run_pipeline(&q, &cb, &cfg, None, &prov).map_err(|e| e.to_string())?;
        let bundle = assemble(&tmpl, &out.query, &out.ranked).map_err(|e| e.to_string())?;
        let pos = |c: &RankedCandidate| {
            bundle
                .text
                .rfind(&tmpl.render_demo(&c.entry.instruction, &c.entry.code))
                .expect("demo present")
        };
        let rank1 = out.ranked.iter().find(|c| c.rank == 1).ok_or("no rank 1")?;
        let last = out.ranked.iter().map(pos).max().unwrap();
        check(
            pos(rank1) == last,
            format!("fixture {i}: rank-1 demo is not the final block"),
        )?;
        check(
            bundle.demo_order.last() == Some(&rank1.entry.id),
            format!("fixture {i}: demo_order"),
        )?;
        n += 1;
    }
    Ok(format!("{n} prompts"))
}

// ------------------------------------------------------------------ 5

fn c5_defaults() -> Outcome {
    let cfg = RetrievalConfig::default();
    check(
        (cfg.recall_k, cfg.k, cfg.lambda, cfg.metric) == (5, 2, 0.25, Metric::Tfidf),
        format!(
            "defaults K={} k={} λ={} metric={:?}",
            cfg.recall_k, cfg.k, cfg.lambda, cfg.metric
        ),
    )?;
    let (scene, task) = generate_task(TaskFamily::VisualManipulation, 0).map_err(|e| e.to_string())?;
    let q = Query::new(task.instruction)
        .map_err(|e| e.to_string())?
        .with_image(ramp_core::sim::render_png(&scene));
    let out = run_pipeline(&q, &Codebase::seed(), &cfg, None, &HashingEmbedder::new(256)).map_err(|e| e.to_string())?;
    let bundle = assemble(&PromptTemplate::builtin(), &out.query, &out.ranked).map_err(|e| e.to_string())?;
    let t = bundle.token_estimate as f64;
    let target = TARGET_TOKENS as f64;
    check((t - target).abs() <= 0.25 * target, format!("token estimate {t}"))?;
    Ok(format!("K=5 k=2 λ=0.25 tfidf; full prompt ≈ {t} tokens"))
}

// ------------------------------------------------------------------ 6

fn thing(id: &str, name: &str, color: Color, shape: Shape, x: f64, y: f64) -> SceneObject {
    SceneObject {
        id: id.into(),
        name: name.into(),
        color,
        shape,
        bbox: BBox::centered(Point::new(x, y), 40.0, 40.0),
        receptacle: false,
        orientation: 0.0,
        properties: BTreeMap::new(),
    }
}

/// The four figure scenarios, each with the ids the expression must pick.
fn resolver_scenario(kind: usize, r: &mut ChaCha8Rng) -> (Scene, &'static str, Vec<&'static str>) {
    let (ox, oy) = (r.gen_range(150.0..650.0), r.gen_range(150.0..350.0));
    let gap = r.gen_range(120.0..200.0);
    match kind {
        0 => (
            Scene::new(
                vec![
                    thing("a", "block", Color::Blue, Shape::Square, ox, oy),
                    thing("b", "block", Color::Blue, Shape::Square, ox + 2.0 * gap, oy),
                    thing(
                        "c",
                        "block",
                        Color::Yellow,
                        Shape::Square,
                        ox + gap,
                        oy + r.gen_range(-5.0..5.0),
                    ),
                    thing("d", "block", Color::Yellow, Shape::Square, ox + gap, oy + 150.0),
                    thing("e", "star", Color::Red, Shape::Star, ox - 100.0, oy + 200.0),
                ],
                0,
            ),
            "the yellow block in the middle of the blue blocks",
            vec!["c"],
        ),
        1 => (
            Scene::new(
                vec![
                    thing("a", "cube", Color::Blue, Shape::Cube, ox, oy),
                    thing("b", "star", Color::Blue, Shape::Star, ox + gap, oy),
                    thing("c", "ring", Color::Blue, Shape::Ring, ox, oy + gap),
                    thing("d", "cube", Color::Red, Shape::Cube, ox + gap, oy + gap),
                    thing("e", "heart", Color::Green, Shape::Heart, ox + 2.0 * gap, oy),
                ],
                0,
            ),
            "all objects with the same color as the blue cube",
            vec!["b", "c"],
        ),
        2 => (
            Scene::new(
                vec![
                    thing("a", "block", Color::Purple, Shape::Square, ox, oy + gap),
                    thing(
                        "b",
                        "block",
                        Color::Orange,
                        Shape::Square,
                        ox + r.gen_range(-20.0..20.0),
                        oy,
                    ),
                    thing("c", "block", Color::Orange, Shape::Square, ox, oy + 2.0 * gap),
                    thing("d", "block", Color::Green, Shape::Square, ox + 30.0, oy - 60.0),
                ],
                0,
            ),
            "the orange block at the bottom of the purple block",
            vec!["b"],
        ),
        _ => {
            let mut tools = vec![
                thing("a", "screwdriver", Color::Brown, Shape::Tool, ox, oy),
                thing("b", "scissors", Color::Gray, Shape::Tool, ox + gap, oy),
                thing("c", "hammer", Color::Red, Shape::Tool, ox, oy + gap),
                thing("d", "block", Color::Red, Shape::Square, ox + gap, oy + gap),
            ];
            for (t, (verb, what)) in
                tools
                    .iter_mut()
                    .zip([("repair", "television"), ("cut", "paper"), ("drive", "nail")])
            {
                t.properties.insert(verb.into(), what.into());
            }
            (
                Scene::new(tools, 0),
                "an object capable of repairing the television",
                vec!["a"],
            )
        }
    }
}

fn c6_resolver_suite() -> Outcome {
    let mut r = rng(6);
    let mut total = 0;
    for kind in 0..4 {
        for variant in 0..20 {
            let (scene, text, expect) = resolver_scenario(kind, &mut r);
            let expr = ReferenceExpr::parse(text).map_err(|e| e.to_string())?;
            let got: Vec<&str> = resolve_reference(&scene, &expr)
                .map_err(|e| format!("{text} (variant {variant}): {e}"))?
                .into_iter()
                .map(|o| o.id.as_str())
                .collect();
            check(
                got == expect,
                format!("{text} (variant {variant}): got {got:?}, want {expect:?}"),
            )?;
            total += 1;
        }
    }
    Ok(format!("{total}/80 exact matches"))
}

// ------------------------------------------------------------------ 7

fn c7_simulator_calibration() -> Outcome {
    let start = Instant::now();
    let cb = Codebase::seed();
    let tmpl = PromptTemplate::builtin();
    let prov = HashingEmbedder::new(256);
    let suite = Suite::all(0..50);
    let rate = |planner| {
        let ctx = EvalContext {
            codebase: &cb,
            template: &tmpl,
            gateway: None,
            provider: &prov,
            planner,
            cassette_hash: "none".into(),
        };
        success_rate(&run_suite(&ctx, &RetrievalConfig::default(), &suite)).expect("non-empty")
    };
    let scripted = rate(Planner::Scripted);
    let random = rate(Planner::Random);
    let secs = start.elapsed().as_secs_f64();
    if let Some((f, v)) = scripted.per_family.iter().find(|(_, v)| **v != 100.0) {
        return Err(format!("scripted SR on {f} is {v}"));
    }
    check(scripted.per_family.len() == 9, "missing families")?;
    check(random.overall < 30.0, format!("random SR {:.1}", random.overall))?;
    check(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "scripted 100.0 on 9 families, random {:.1}, {secs:.1}s",
        random.overall
    ))
}

// ------------------------------------------------------------------ 8

fn c8_table2_average() -> Outcome {
    let families = &TaskFamily::ALL[..6];
    let mut records = Vec::new();
    for (f, pct) in families.iter().zip([90, 90, 90, 70, 80, 55]) {
        for i in 0..20u64 {
            records.push(EpisodeRecord {
                family: *f,
                seed: i,
                fingerprint: String::new(),
                outcome: if i * 100 < pct * 20 {
                    EpisodeOutcome::Success
                } else {
                    EpisodeOutcome::Failure {
                        reason: "GoalNotMet".into(),
                        detail: String::new(),
                    }
                },
                steps: 0,
                wall_time: Default::default(),
            });
        }
    }
    let rep = success_rate(&records).map_err(|e| e.to_string())?;
    let shown = format!("{:.1}", rep.overall);
    check(shown == "79.2", format!("average {shown}"))?;
    Ok(format!("average {shown}"))
}

// ------------------------------------------------------------------ 9

fn c9_ablation_direction() -> Outcome {
    let cassette = manifest_dir().join("data/cassettes/suite.jsonl");
    let gw = GeneratorGateway::replay("imitation-v1", &cassette).map_err(|e| e.to_string())?;
    let cb = Codebase::with_distractors();
    check(cb.len() >= Codebase::seed().len() + 50, "distractor corpus too small")?;
    let tmpl = PromptTemplate::builtin();
    let prov = HashingEmbedder::new(256);
    let ctx = EvalContext {
        codebase: &cb,
        template: &tmpl,
        gateway: Some(&gw),
        provider: &prov,
        planner: Planner::Gateway,
        cassette_hash: file_digest(Some(&cassette)),
    };
    let table = run_ablation(&Suite::all(0..4), &RetrievalConfig::default(), &ctx);
    let sr = |name: &str| table.row(name).and_then(|r| r.overall).ok_or(format!("{name} is n/a"));
    let (full, wo_cr, wo_ramp) = (sr("full")?, sr("w/o CR")?, sr("w/o RAMP")?);
    check(full > wo_ramp, format!("full {full:.1} <= w/o RAMP {wo_ramp:.1}"))?;
    check(wo_cr < full, format!("w/o CR {wo_cr:.1} >= full {full:.1}"))?;
    Ok(format!(
        "full {full:.1} > w/o CR {wo_cr:.1}, full > w/o RAMP {wo_ramp:.1}"
    ))
}

// ------------------------------------------------------------------ 10

fn sq(x: f64, y: f64) -> BBox {
    BBox::new(x, y, x + 10.0, y + 10.0)
}

fn c10_map() -> Outcome {
    let fixtures = vec![
        DetectionFixture {
            ref_exp: "the red block".into(),
            ground_truth: vec![sq(0.0, 0.0)],
            predicted: vec![(sq(0.0, 0.0), 0.9)],
        },
        // IoU of the shifted box is 7.5/12.5 = 0.6
        DetectionFixture {
            ref_exp: "the blue bowls".into(),
            ground_truth: vec![sq(100.0, 0.0), sq(200.0, 0.0)],
            predicted: vec![(sq(100.0, 0.0), 0.8), (sq(400.0, 400.0), 0.7), (sq(202.5, 0.0), 0.6)],
        },
        // IoU 0.4; the second box is never predicted
        DetectionFixture {
            ref_exp: "the star left of the pan".into(),
            ground_truth: vec![sq(300.0, 0.0), sq(300.0, 100.0)],
            predicted: vec![(sq(300.0 + 30.0 / 7.0, 0.0), 0.95)],
        },
    ];
    // per class AP by hand:
    //   t=0.3: 1, 1/2 + 1/2 * 2/3 = 5/6, 1/2
    //   t=0.5: 1, 5/6, 0
    //   t=0.75: 1, 1/2, 0
    let expected = [
        (0.3, (1.0 + 5.0 / 6.0 + 0.5) / 3.0),
        (0.5, (1.0 + 5.0 / 6.0) / 3.0),
        (0.75, 0.5),
    ];
    for (t, want) in expected {
        let got = mean_ap(&fixtures, t);
        check((got - want).abs() <= 1e-9, format!("mAP@{t} = {got}, want {want}"))?;
    }
    let mut r = rng(10);
    for set in 0..100 {
        let fixtures: Vec<DetectionFixture> = (0..r.gen_range(1..5))
            .map(|i| {
                let gt: Vec<BBox> = (0..r.gen_range(1..4))
                    .map(|_| sq(r.gen_range(0.0..60.0), r.gen_range(0.0..60.0)))
                    .collect();
                let pred = (0..r.gen_range(0..6))
                    .map(|_| {
                        let g = gt[r.gen_range(0..gt.len())];
                        let b = BBox::new(
                            g.x0 + r.gen_range(-6.0..6.0),
                            g.y0 + r.gen_range(-6.0..6.0),
                            g.x1 + r.gen_range(-6.0..6.0),
                            g.y1 + r.gen_range(-6.0..6.0),
                        );
                        (b, r.gen_range(0.0..1.0))
                    })
                    .collect();
                DetectionFixture {
                    ref_exp: format!("object {}", i % 2),
                    ground_truth: gt,
                    predicted: pred,
                }
            })
            .collect();
        let v: Vec<f64> = [0.3, 0.5, 0.75].iter().map(|t| mean_ap(&fixtures, *t)).collect();
        check(
            v[0] >= v[1] - 1e-12 && v[1] >= v[2] - 1e-12,
            format!("set {set}: {v:?} increases"),
        )?;
    }
    Ok("hand-computed 0.7778 / 0.6111 / 0.5000; monotone on 100 sets".into())
}

// ------------------------------------------------------------------ 11

fn c11_replay_determinism() -> Outcome {
    let cfg = EngineConfig::load(manifest_dir().join("../../ramp.toml")).map_err(|e| e.to_string())?;
    let cassette = cfg.gateway.cassette.clone().ok_or("no cassette configured")?;
    let cb = Codebase::load(cfg.corpus.clone().ok_or("no corpus configured")?).map_err(|e| e.to_string())?;
    let tmpl = PromptTemplate::builtin();
    let prov = HashingEmbedder::new(256);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in 0..2 {
        let gw = GeneratorGateway::replay(&cfg.gateway.model, &cassette).map_err(|e| e.to_string())?;
        let ctx = EvalContext {
            codebase: &cb,
            template: &tmpl,
            gateway: Some(&gw),
            provider: &prov,
            planner: Planner::Gateway,
            cassette_hash: file_digest(Some(&cassette)),
        };
        let suite = Suite::new(cfg.sim.families.clone(), (cfg.sim.seeds.0..cfg.sim.seeds.1).collect());
        let records = run_suite(&ctx, &cfg.retrieval, &suite);
        if let Some(r) = records.iter().find(|r| r.is_missing()) {
            return Err(format!("{} seed {} missed the cassette", r.family, r.seed));
        }
        let path = dir.path().join(format!("results-{run}.jsonl"));
        std::fs::write(&path, results_jsonl(&records)).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    check(files[0] == files[1], "results files differ")?;
    Ok(format!("{} bytes, identical", files[0].len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("scoring oracle equivalence", c1_scoring_oracles),
        ("idf spot values", c2_idf_spot_values),
        ("fusion degeneracy", c3_fusion_degeneracy),
        ("reverse demo order", c4_reverse_order),
        ("defaults and prompt size", c5_defaults),
        ("reference resolver suite", c6_resolver_suite),
        ("simulator calibration", c7_simulator_calibration),
        ("success-rate average", c8_table2_average),
        ("ablation direction", c9_ablation_direction),
        ("mAP harness", c10_map),
        ("replay determinism", c11_replay_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let res = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match res {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
