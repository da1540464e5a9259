use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ramp_bench::{family_queries, scaled_codebase};
use ramp_core::eval::random_plan;
use ramp_core::retrieval::coarse_retrieve;
use ramp_core::{
    assemble, execute_plan, generate_task, parse_plan, run_pipeline, HashingEmbedder, Metric, PromptTemplate,
    RetrievalConfig, TaskFamily,
};

fn coarse(c: &mut Criterion) {
    let prov = HashingEmbedder::new(256);
    let queries = family_queries();
    let mut g = c.benchmark_group("coarse");
    for times in [1, 8] {
        let cb = scaled_codebase(times);
        for metric in Metric::ALL {
            let cfg = RetrievalConfig {
                metric,
                ..RetrievalConfig::default()
            };
            g.bench_with_input(BenchmarkId::new(metric.as_str(), cb.len()), &cb, |b, cb| {
                b.iter(|| {
                    for q in &queries {
                        coarse_retrieve(q, cb, &cfg, &prov).unwrap();
                    }
                })
            });
        }
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let prov = HashingEmbedder::new(256);
    let queries = family_queries();
    let cb = scaled_codebase(1);
    let tmpl = PromptTemplate::builtin();
    let cfg = RetrievalConfig::default();
    c.bench_function("pipeline+assemble", |b| {
        b.iter(|| {
            for q in &queries {
                let out = run_pipeline(q, &cb, &cfg, None, &prov).unwrap();
                assemble(&tmpl, &out.query, &out.ranked).unwrap();
            }
        })
    });
}

fn simulator(c: &mut Criterion) {
    let tasks: Vec<_> = TaskFamily::ALL.iter().map(|f| generate_task(*f, 0).unwrap()).collect();
    c.bench_function("generate_task", |b| {
        b.iter(|| {
            for f in TaskFamily::ALL {
                generate_task(f, 7).unwrap();
            }
        })
    });
    let oracles: Vec<_> = tasks.iter().map(|(_, t)| parse_plan(&t.oracle_plan).unwrap()).collect();
    c.bench_function("execute_oracle", |b| {
        b.iter(|| {
            for ((scene, _), plan) in tasks.iter().zip(&oracles) {
                execute_plan(scene, plan);
            }
        })
    });
    c.bench_function("execute_random", |b| {
        b.iter(|| {
            for (scene, t) in &tasks {
                execute_plan(scene, &random_plan(scene, t.family, 3));
            }
        })
    });
}

criterion_group!(benches, coarse, pipeline, simulator);
criterion_main!(benches);
