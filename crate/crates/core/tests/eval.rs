use proptest::prelude::*;

use ramp_core::eval::{results_jsonl, sort_records, SweepGrid};
use ramp_core::sim::{BBox, Outcome};
use ramp_core::{
    execute_plan, generate_task, is_success, mean_ap, parse_plan, run_suite, success_rate, Codebase, DetectionFixture,
    EpisodeOutcome, EpisodeRecord, EvalContext, HashingEmbedder, Planner, PromptTemplate, RetrievalConfig, Suite,
    TaskFamily,
};

fn record(family: TaskFamily, seed: u64, ok: bool) -> EpisodeRecord {
    EpisodeRecord {
        family,
        seed,
        fingerprint: "f".into(),
        outcome: if ok {
            EpisodeOutcome::Success
        } else {
            EpisodeOutcome::Failure {
                reason: "GoalNotMet".into(),
                detail: String::new(),
            }
        },
        steps: 1,
        wall_time: Default::default(),
    }
}

proptest! {
    #[test]
    fn success_rate_is_a_bounded_mean(flags in prop::collection::vec((0usize..9, any::<bool>()), 1..80)) {
        let recs: Vec<_> = flags.iter().enumerate()
            .map(|(i, (f, ok))| record(TaskFamily::ALL[*f], i as u64, *ok))
            .collect();
        let rep = success_rate(&recs).unwrap();
        for v in rep.per_family.values() {
            prop_assert!((0.0..=100.0).contains(v));
        }
        let mean = rep.per_family.values().sum::<f64>() / rep.per_family.len() as f64;
        prop_assert!((rep.overall - mean).abs() < 1e-9);
    }

    #[test]
    fn results_ignore_input_order(flags in prop::collection::vec((0usize..9, any::<bool>()), 1..40)) {
        let recs: Vec<_> = flags.iter().enumerate()
            .map(|(i, (f, ok))| record(TaskFamily::ALL[*f], i as u64, *ok))
            .collect();
        let mut a = recs.clone();
        let mut b = recs;
        b.reverse();
        sort_records(&mut a);
        sort_records(&mut b);
        prop_assert_eq!(results_jsonl(&a), results_jsonl(&b));
    }

    #[test]
    fn map_is_a_fraction(
        boxes in prop::collection::vec((0.0f64..50.0, 0.0f64..50.0, 1.0f64..20.0, any::<bool>(), 0.0f64..1.0), 1..12),
        t in 0.05f64..0.95,
    ) {
        let fx: Vec<_> = boxes.iter().enumerate().map(|(i, (x, y, s, hit, conf))| {
            let gt = BBox::new(*x, *y, x + s, y + s);
            let pred = if *hit { gt } else { BBox::new(x + 100.0, *y, x + 100.0 + s, y + s) };
            DetectionFixture { ref_exp: format!("r{}", i % 3), ground_truth: vec![gt], predicted: vec![(pred, *conf)] }
        }).collect();
        let m = mean_ap(&fx, t);
        prop_assert!((0.0..=1.0).contains(&m));
        if boxes.iter().all(|b| b.3) {
            prop_assert!((m - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn failures_never_count_as_success() {
    let recs = vec![
        record(TaskFamily::Rotate, 0, true),
        EpisodeRecord {
            outcome: EpisodeOutcome::Failure {
                reason: "CassetteMiss".into(),
                detail: "abc".into(),
            },
            ..record(TaskFamily::Rotate, 1, true)
        },
    ];
    assert_eq!(success_rate(&recs).unwrap().overall, 50.0);
    assert!(recs[1].is_missing());
    assert!(success_rate(&[]).is_err());
}

#[test]
fn oracle_plans_solve_every_family() {
    for family in TaskFamily::ALL {
        for seed in 0..5 {
            let (scene, task) = generate_task(family, seed).unwrap();
            let plan = parse_plan(&task.oracle_plan).unwrap();
            let (fin, log, outcome) = execute_plan(&scene, &plan);
            assert_eq!(outcome, Outcome::Completed, "{family} seed {seed}");
            assert!(is_success(&task, &scene, &fin, &log), "{family} seed {seed}");
        }
    }
}

#[test]
fn gateway_planner_without_gateway_reports_no_backend() {
    let cb = Codebase::seed();
    let tmpl = PromptTemplate::builtin();
    let prov = HashingEmbedder::new(256);
    let ctx = EvalContext {
        codebase: &cb,
        template: &tmpl,
        gateway: None,
        provider: &prov,
        planner: Planner::Gateway,
        cassette_hash: "none".into(),
    };
    let recs = run_suite(
        &ctx,
        &RetrievalConfig::default(),
        &Suite::new(vec![TaskFamily::SameColor], vec![0, 1]),
    );
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r.outcome.reason() == Some("NoBackend")));
}

#[test]
fn sweep_argmax_prefers_first_best() {
    let grid = SweepGrid {
        metrics: vec![ramp_core::Metric::Tfidf],
        lambdas: vec![0.0, 0.5, 1.0],
        cells: vec![vec![Some(50.0), Some(80.0), Some(80.0)]],
        records: vec![],
    };
    assert_eq!(grid.argmax(), Some((0, 1)));
    assert!(grid.render().contains("80.0*"));
}
