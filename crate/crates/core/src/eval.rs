//! Success-rate aggregation, detection mAP, and the episode, ablation and
//! λ-sweep runners.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Codebase;
use crate::embedding::EmbeddingProvider;
use crate::gateway::{GatewayError, GeneratorGateway};
use crate::plan::{parse_plan, PlanProgram};
use crate::prompt::{assemble, PromptTemplate};
use crate::retrieval::{run_pipeline, Metric, Query, RetrievalConfig, RetrievalError};
use crate::sim::{execute_plan, generate_task, is_success, render_png, BBox, Outcome, Scene, TaskFamily};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episode records")]
    EmptyInput,
    #[error("lambda {0} outside [0, 1]")]
    BadLambda(f64),
}

// ---------------------------------------------------------------- records

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Success,
    Failure { reason: String, detail: String },
}

impl EpisodeOutcome {
    fn failure(reason: &str, detail: impl Into<String>) -> Self {
        EpisodeOutcome::Failure {
            reason: reason.to_string(),
            detail: detail.into(),
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, EpisodeOutcome::Success)
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            EpisodeOutcome::Success => None,
            EpisodeOutcome::Failure { reason, .. } => Some(reason),
        }
    }
}

/// One executed episode. Wall time is kept out of the serialized record so
/// results files stay byte-stable; it is written to a separate timings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub family: TaskFamily,
    pub seed: u64,
    pub fingerprint: String,
    pub outcome: EpisodeOutcome,
    pub steps: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl EpisodeRecord {
    /// The gateway had nothing recorded for this episode.
    pub fn is_missing(&self) -> bool {
        matches!(self.outcome.reason(), Some("CassetteMiss" | "NoBackend"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessReport {
    pub per_family: BTreeMap<TaskFamily, f64>,
    /// Unweighted mean of the per-family rates.
    pub overall: f64,
}

/// Per-family and overall success rate in percent.
pub fn success_rate(records: &[EpisodeRecord]) -> Result<SuccessReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut counts: BTreeMap<TaskFamily, (usize, usize)> = BTreeMap::new();
    for r in records {
        let c = counts.entry(r.family).or_default();
        c.0 += usize::from(r.outcome.is_success());
        c.1 += 1;
    }
    let per_family: BTreeMap<_, _> = counts
        .into_iter()
        .map(|(f, (s, n))| (f, s as f64 / n as f64 * 100.0))
        .collect();
    let overall = per_family.values().sum::<f64>() / per_family.len() as f64;
    Ok(SuccessReport { per_family, overall })
}

/// Records sorted by (family, seed).
pub fn sort_records(records: &mut [EpisodeRecord]) {
    records.sort_by(|a, b| (a.family, a.seed, &a.fingerprint).cmp(&(b.family, b.seed, &b.fingerprint)));
}

/// One JSON object per line, in the given order.
pub fn results_jsonl(records: &[EpisodeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn timings_jsonl(records: &[EpisodeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let line = serde_json::json!({
            "family": r.family,
            "seed": r.seed,
            "wall_time_ms": r.wall_time.as_secs_f64() * 1000.0,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

/// Fixed-width table of per-family results.
pub fn summary_table(records: &[EpisodeRecord]) -> String {
    let mut counts: BTreeMap<TaskFamily, (usize, usize)> = BTreeMap::new();
    for r in records {
        let c = counts.entry(r.family).or_default();
        c.0 += usize::from(r.outcome.is_success());
        c.1 += 1;
    }
    let mut out = format!("{:<28} {:>8} {:>9} {:>7}\n", "family", "episodes", "successes", "SR");
    for (f, (s, n)) in &counts {
        let _ = writeln!(
            out,
            "{:<28} {:>8} {:>9} {:>7.1}",
            f.as_str(),
            n,
            s,
            *s as f64 / *n as f64 * 100.0
        );
    }
    match success_rate(records) {
        Ok(rep) => {
            let _ = writeln!(
                out,
                "{:<28} {:>8} {:>9} {:>7.1}",
                "overall",
                records.len(),
                "",
                rep.overall
            );
        }
        Err(_) => out.push_str("overall                      n/a\n"),
    }
    out
}

// ---------------------------------------------------------------- detection

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// A referential expression with its true and predicted boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFixture {
    pub ref_exp: String,
    pub ground_truth: Vec<BBox>,
    /// (box, confidence)
    pub predicted: Vec<(BBox, f64)>,
}

impl DetectionFixture {
    pub fn is_valid(&self) -> bool {
        self.ground_truth
            .iter()
            .chain(self.predicted.iter().map(|(b, _)| b))
            .all(BBox::is_valid)
    }
}

/// All-point interpolated AP for one class. `hits` is in descending
/// confidence order.
fn average_precision(hits: &[bool], n_truth: usize) -> f64 {
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &hit) in hits.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_truth as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Mean over referential expressions of the AP at the given IoU threshold.
/// Fixtures sharing a `ref_exp` are pooled into one class; classes without
/// ground truth are skipped.
pub fn mean_ap(fixtures: &[DetectionFixture], threshold: f64) -> f64 {
    let mut classes: BTreeMap<&str, Vec<&DetectionFixture>> = BTreeMap::new();
    for f in fixtures {
        classes.entry(f.ref_exp.as_str()).or_default().push(f);
    }
    let mut aps = Vec::new();
    for group in classes.values() {
        let n_truth: usize = group.iter().map(|f| f.ground_truth.len()).sum();
        if n_truth == 0 {
            continue;
        }
        // (confidence, fixture, prediction), highest confidence first
        let mut preds: Vec<(f64, usize, usize)> = group
            .iter()
            .enumerate()
            .flat_map(|(fi, f)| f.predicted.iter().enumerate().map(move |(pi, (_, c))| (*c, fi, pi)))
            .collect();
        preds.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut taken: Vec<Vec<bool>> = group.iter().map(|f| vec![false; f.ground_truth.len()]).collect();
        let hits: Vec<bool> = preds
            .iter()
            .map(|&(_, fi, pi)| {
                let pb = &group[fi].predicted[pi].0;
                let best = group[fi]
                    .ground_truth
                    .iter()
                    .enumerate()
                    .filter(|(gi, _)| !taken[fi][*gi])
                    .map(|(gi, gt)| (gi, iou(pb, gt)))
                    .filter(|(_, v)| *v >= threshold)
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
                match best {
                    Some((gi, _)) => {
                        taken[fi][gi] = true;
                        true
                    }
                    None => false,
                }
            })
            .collect();
        aps.push(average_precision(&hits, n_truth));
    }
    if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}

// ---------------------------------------------------------------- episodes

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Planner {
    /// Retrieval, prompt and the generator gateway.
    Gateway,
    /// The task's reference plan.
    Scripted,
    /// Seeded random plans of one to three steps.
    Random,
}

impl Planner {
    pub fn as_str(self) -> &'static str {
        match self {
            Planner::Gateway => "gateway",
            Planner::Scripted => "scripted",
            Planner::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gateway" => Some(Planner::Gateway),
            "scripted" => Some(Planner::Scripted),
            "random" => Some(Planner::Random),
            _ => None,
        }
    }
}

/// Families × seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Suite {
    pub families: Vec<TaskFamily>,
    pub seeds: Vec<u64>,
}

impl Suite {
    pub fn new(families: Vec<TaskFamily>, seeds: Vec<u64>) -> Self {
        Self { families, seeds }
    }

    pub fn all(seeds: std::ops::Range<u64>) -> Self {
        Self::new(TaskFamily::ALL.to_vec(), seeds.collect())
    }

    fn cells(&self) -> Vec<(TaskFamily, u64)> {
        self.families
            .iter()
            .flat_map(|&f| self.seeds.iter().map(move |&s| (f, s)))
            .collect()
    }
}

/// Everything an episode needs besides the retrieval config.
pub struct EvalContext<'a> {
    pub codebase: &'a Codebase,
    pub template: &'a PromptTemplate,
    pub gateway: Option<&'a GeneratorGateway>,
    pub provider: &'a dyn EmbeddingProvider,
    pub planner: Planner,
    /// SHA-256 of the cassette file, or "none".
    pub cassette_hash: String,
}

/// SHA-256 of a file's bytes, or "none" when there is no readable file.
pub fn file_digest(path: Option<&std::path::Path>) -> String {
    path.and_then(|p| std::fs::read(p).ok())
        .map_or_else(|| "none".to_string(), |b| hex::encode(Sha256::digest(b)))
}

/// Short hash of everything that determines an episode's plan.
pub fn config_fingerprint(cfg: &RetrievalConfig, planner: Planner, template_hash: &str, cassette_hash: &str) -> String {
    let v = serde_json::json!({
        "retrieval": cfg,
        "planner": planner,
        "template": template_hash,
        "cassette": cassette_hash,
    });
    let digest = Sha256::digest(v.to_string().as_bytes());
    hex::encode(&digest[..8])
}

/// Seeded plan of one to three random but well-formed calls over the
/// scene's objects.
pub fn random_plan(scene: &Scene, family: TaskFamily, seed: u64) -> PlanProgram {
    let digest = Sha256::digest(format!("random:{family}:{seed}").as_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")));
    let objects: Vec<String> = scene
        .objects
        .iter()
        .filter(|o| !o.receptacle)
        .map(|o| o.description())
        .collect();
    let containers: Vec<String> = scene.containers().map(|o| o.description()).collect();
    let n = rng.gen_range(1..=3);
    let mut lines = Vec::with_capacity(n);
    for _ in 0..n {
        let obj = objects.choose(&mut rng).cloned().unwrap_or_else(|| "object".into());
        let target = containers
            .choose(&mut rng)
            .cloned()
            .unwrap_or_else(|| "container".into());
        let line = match rng.gen_range(0..5) {
            0 | 1 => format!("pick_place(obj=\"{obj}\", target=\"{target}\")"),
            2 => format!(
                "rotate(obj=\"{obj}\", degrees={})",
                [30, 45, 60, 90, 120, 135, 150, 180].choose(&mut rng).unwrap()
            ),
            3 => format!(
                "push(obj=\"{obj}\", direction=\"{}\", distance={})",
                ["left", "right", "up", "down"].choose(&mut rng).unwrap(),
                rng.gen_range(1..=20) * 10
            ),
            _ => format!("distract(obj=\"{obj}\")"),
        };
        lines.push(line);
    }
    parse_plan(&lines.join("\n")).expect("random plans are well formed")
}

fn gateway_failure(e: &GatewayError) -> EpisodeOutcome {
    EpisodeOutcome::failure(e.name(), e.to_string())
}

fn generated_plan(
    ctx: &EvalContext<'_>,
    cfg: &RetrievalConfig,
    scene: &Scene,
    instruction: &str,
) -> Result<String, EpisodeOutcome> {
    let gateway = ctx
        .gateway
        .ok_or_else(|| EpisodeOutcome::failure("NoBackend", "no generator gateway configured"))?;
    let q = Query::new(instruction)
        .map_err(|e| EpisodeOutcome::failure("Pipeline", e.to_string()))?
        .with_image(render_png(scene));
    let out = run_pipeline(&q, ctx.codebase, cfg, Some(gateway), ctx.provider).map_err(|e| match &e {
        RetrievalError::Gateway { source, .. } => gateway_failure(source),
        _ => EpisodeOutcome::failure("Pipeline", e.to_string()),
    })?;
    let bundle = assemble(ctx.template, &out.query, &out.ranked)
        .map_err(|e| EpisodeOutcome::failure("Template", e.to_string()))?;
    gateway.complete_multimodal(&bundle).map_err(|e| gateway_failure(&e))
}

/// Generates the task, plans, executes and scores one episode.
pub fn run_episode(ctx: &EvalContext<'_>, cfg: &RetrievalConfig, family: TaskFamily, seed: u64) -> EpisodeRecord {
    let start = Instant::now();
    let fingerprint = config_fingerprint(cfg, ctx.planner, &ctx.template.hash, &ctx.cassette_hash);
    let (outcome, steps) = match generate_task(family, seed) {
        Err(e) => (EpisodeOutcome::failure("TaskGeneration", e.to_string()), 0),
        Ok((scene, task)) => {
            let plan = match ctx.planner {
                Planner::Scripted => Ok(task.oracle()),
                Planner::Random => Ok(random_plan(&scene, family, seed)),
                Planner::Gateway => generated_plan(ctx, cfg, &scene, &task.instruction).and_then(|text| {
                    parse_plan(&text).map_err(|e| EpisodeOutcome::failure("Unparseable", e.to_string()))
                }),
            };
            match plan {
                Err(o) => (o, 0),
                Ok(plan) => {
                    let (fin, log, outcome) = execute_plan(&scene, &plan);
                    let steps = log.entries.len();
                    let o = match outcome {
                        Outcome::Failed(r) => EpisodeOutcome::failure(r.name(), r.to_string()),
                        Outcome::Completed if is_success(&task, &scene, &fin, &log) => EpisodeOutcome::Success,
                        Outcome::Completed => EpisodeOutcome::failure("GoalNotMet", ""),
                    };
                    (o, steps)
                }
            }
        }
    };
    EpisodeRecord {
        family,
        seed,
        fingerprint,
        outcome,
        steps,
        wall_time: start.elapsed(),
    }
}

/// Runs every cell of the suite in parallel; records come back sorted.
pub fn run_suite(ctx: &EvalContext<'_>, cfg: &RetrievalConfig, suite: &Suite) -> Vec<EpisodeRecord> {
    let mut records: Vec<EpisodeRecord> = suite
        .cells()
        .into_par_iter()
        .map(|(f, s)| run_episode(ctx, cfg, f, s))
        .collect();
    sort_records(&mut records);
    records
}

// ---------------------------------------------------------------- ablation

pub const ABLATION_ROWS: [&str; 5] = ["full", "w/o CR", "w/o IR", "w/o SR", "w/o RAMP"];

/// The five configurations of the ablation table, derived from `base`.
pub fn ablation_configs(base: &RetrievalConfig) -> Vec<(&'static str, RetrievalConfig)> {
    ABLATION_ROWS
        .iter()
        .map(|&name| {
            let mut cfg = base.clone();
            match name {
                "w/o CR" => cfg.coarse_enabled = false,
                "w/o IR" => cfg.rewrite_enabled = false,
                "w/o SR" => cfg.reorder_enabled = false,
                "w/o RAMP" => cfg.ramp_enabled = false,
                _ => {}
            }
            (name, cfg)
        })
        .collect()
}

/// Success rate of one family's records, or `None` when any episode had no
/// recorded answer.
fn cell_rate(records: &[&EpisodeRecord]) -> Option<f64> {
    if records.is_empty() || records.iter().any(|r| r.is_missing()) {
        return None;
    }
    let s = records.iter().filter(|r| r.outcome.is_success()).count();
    Some(s as f64 / records.len() as f64 * 100.0)
}

fn family_cells(families: &[TaskFamily], records: &[EpisodeRecord]) -> (Vec<Option<f64>>, Option<f64>) {
    let cells: Vec<Option<f64>> = families
        .iter()
        .map(|f| cell_rate(&records.iter().filter(|r| r.family == *f).collect::<Vec<_>>()))
        .collect();
    let overall = cells
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64);
    (cells, overall)
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}"))
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: &'static str,
    pub config: RetrievalConfig,
    pub cells: Vec<Option<f64>>,
    pub overall: Option<f64>,
    pub records: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub families: Vec<TaskFamily>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<10}", "config");
        for f in &self.families {
            let _ = write!(out, " {:>27}", f.as_str());
        }
        out.push_str(&format!(" {:>8}\n", "avg"));
        for r in &self.rows {
            let _ = write!(out, "{:<10}", r.name);
            for c in &r.cells {
                let _ = write!(out, " {:>27}", fmt_cell(*c));
            }
            let _ = writeln!(out, " {:>8}", fmt_cell(r.overall));
        }
        out
    }

    /// Every row's records, concatenated in row order.
    pub fn records(&self) -> Vec<EpisodeRecord> {
        self.rows.iter().flat_map(|r| r.records.iter().cloned()).collect()
    }
}

/// SR of the suite under each ablation configuration. Cells whose
/// episodes miss the cassette are reported as n/a.
pub fn run_ablation(suite: &Suite, base: &RetrievalConfig, ctx: &EvalContext<'_>) -> AblationTable {
    let rows = ablation_configs(base)
        .into_iter()
        .map(|(name, config)| {
            let records = run_suite(ctx, &config, suite);
            let (cells, overall) = family_cells(&suite.families, &records);
            AblationRow {
                name,
                config,
                cells,
                overall,
                records,
            }
        })
        .collect();
    AblationTable {
        families: suite.families.clone(),
        rows,
    }
}

// ---------------------------------------------------------------- λ sweep

pub const DEFAULT_LAMBDAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_METRICS: [Metric; 3] = [Metric::Tfidf, Metric::Bm25, Metric::Embedding];

#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub metrics: Vec<Metric>,
    pub lambdas: Vec<f64>,
    /// `cells[metric][lambda]`
    pub cells: Vec<Vec<Option<f64>>>,
    pub records: Vec<EpisodeRecord>,
}

impl SweepGrid {
    /// First cell holding the highest SR, scanning metrics then λ.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    if best.is_none_or(|(_, _, b)| *v > b) {
                        best = Some((i, j, *v));
                    }
                }
            }
        }
        best.map(|(i, j, _)| (i, j))
    }

    /// The argmax cell carries a trailing `*`.
    pub fn render(&self) -> String {
        let best = self.argmax();
        let mut out = format!("{:<10}", "metric");
        for l in &self.lambdas {
            let _ = write!(out, " {:>8}", format!("λ={l}"));
        }
        out.push('\n');
        for (i, m) in self.metrics.iter().enumerate() {
            let _ = write!(out, "{:<10}", m.as_str());
            for (j, v) in self.cells[i].iter().enumerate() {
                let mark = if best == Some((i, j)) { "*" } else { "" };
                let _ = write!(out, " {:>8}", format!("{}{mark}", fmt_cell(*v)));
            }
            out.push('\n');
        }
        out
    }
}

/// SR for every (metric, λ) pair over the suite.
pub fn sweep_lambda(
    suite: &Suite,
    lambdas: &[f64],
    metrics: &[Metric],
    base: &RetrievalConfig,
    ctx: &EvalContext<'_>,
) -> Result<SweepGrid, EvalError> {
    if let Some(&bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(EvalError::BadLambda(bad));
    }
    let mut cells = Vec::with_capacity(metrics.len());
    let mut all = Vec::new();
    for &metric in metrics {
        let mut row = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let cfg = RetrievalConfig {
                metric,
                lambda,
                ..base.clone()
            };
            let records = run_suite(ctx, &cfg, suite);
            row.push(family_cells(&suite.families, &records).1);
            all.extend(records);
        }
        cells.push(row);
    }
    Ok(SweepGrid {
        metrics: metrics.to_vec(),
        lambdas: lambdas.to_vec(),
        cells,
        records: all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rec(family: TaskFamily, ok: bool) -> EpisodeRecord {
        EpisodeRecord {
            family,
            seed: 0,
            fingerprint: String::new(),
            outcome: if ok {
                EpisodeOutcome::Success
            } else {
                EpisodeOutcome::failure("GoalNotMet", "")
            },
            steps: 0,
            wall_time: Duration::ZERO,
        }
    }

    #[test]
    fn success_rate_basics() {
        let all: Vec<_> = (0..10).map(|_| rec(TaskFamily::Rotate, true)).collect();
        assert_eq!(success_rate(&all).unwrap().overall, 100.0);
        let none: Vec<_> = (0..10).map(|_| rec(TaskFamily::Rotate, false)).collect();
        assert_eq!(success_rate(&none).unwrap().overall, 0.0);
        assert!(matches!(success_rate(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn overall_is_unweighted_over_families() {
        // 1/1 and 1/4: mean of 100 and 25, not 2/5
        let mut r = vec![rec(TaskFamily::Rotate, true)];
        r.push(rec(TaskFamily::Rearrange, true));
        r.extend((0..3).map(|_| rec(TaskFamily::Rearrange, false)));
        assert_relative_eq!(success_rate(&r).unwrap().overall, 62.5);
    }

    #[test]
    fn iou_half_overlap() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BBox::new(0.5, 0.0, 1.5, 1.0);
        assert_relative_eq!(iou(&a, &b), 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(2.0, 2.0, 3.0, 3.0)), 0.0);
    }

    #[test]
    fn ap_without_predictions_is_zero() {
        let f = DetectionFixture {
            ref_exp: "x".into(),
            ground_truth: vec![BBox::new(0.0, 0.0, 1.0, 1.0)],
            predicted: vec![],
        };
        assert_eq!(mean_ap(&[f], 0.5), 0.0);
    }

    #[test]
    fn random_plans_are_seeded() {
        let (scene, _) = generate_task(TaskFamily::Rotate, 3).unwrap();
        assert_eq!(
            random_plan(&scene, TaskFamily::Rotate, 3),
            random_plan(&scene, TaskFamily::Rotate, 3)
        );
    }

    #[test]
    fn ablation_rows() {
        let names: Vec<_> = ablation_configs(&RetrievalConfig::default())
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(names, ABLATION_ROWS);
    }
}
