//! End-to-end pipeline: data in (synthetic or g2o), outlier rejection,
//! graph cut, optimization, evaluation, reports out.

use crate::eval::{align_and_rmse, edge_key, edge_metrics};
use crate::geometry::{Pose, Pose2, Pose3};
use crate::graphio::{self, G2oPose};
use crate::multicut::{gc_filter, McMode, SupportConfig};
use crate::optimizer::{initial_guess, optimize, Estimate, LmConfig, OptimizeError};
use crate::pcm::{pcm_filter, ConsistencyMetric, PcmConfig};
use crate::posegraph::{EdgeKind, LabelSidecar, NodeId, PoseGraph};
use crate::scalar::to_f64;
use crate::synth::{generate_multisession, SynthConfig, SynthError, SynthPose};
use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// Pipeline ablation being run (the rows of the comparison table).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Optimize the raw graph.
    Raw,
    /// Pairwise-consistency rejection only.
    Pcm,
    /// Graph cut only.
    Gc,
    /// Rejection then graph cut.
    PcmGc,
}

impl Variant {
    fn uses_pcm(self) -> bool {
        matches!(self, Variant::Pcm | Variant::PcmGc)
    }

    fn uses_gc(self) -> bool {
        matches!(self, Variant::Gc | Variant::PcmGc)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Raw => "raw",
            Variant::Pcm => "pcm",
            Variant::Gc => "gc",
            Variant::PcmGc => "pcm_gc",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// 2 for SE(2), 3 for SE(3). Ignored when an input file dictates it.
    pub dim: u32,
    pub seeds: Vec<u64>,
    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub run_pcm: bool,
    pub run_gc: bool,
    pub synth: SynthConfig,
    pub pcm: PcmConfig,
    pub support: SupportConfig,
    pub lm: LmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dim: 2,
            seeds: vec![1],
            input: None,
            labels: None,
            gt: None,
            output: None,
            report: None,
            run_pcm: true,
            run_gc: true,
            synth: SynthConfig::default(),
            pcm: PcmConfig::default(),
            support: SupportConfig::default(),
            lm: LmConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Format(#[from] graphio::IoError),
    #[error("config file line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("stage {stage}: {msg}")]
    Stage { stage: &'static str, msg: String },
}

impl PipelineError {
    /// Exit codes: 1 usage, 2 parse/format, 3 numerical/feasibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Format(_) | PipelineError::Config { .. } => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::BadConfig(msg) => PipelineError::Usage(msg),
            other => PipelineError::Stage {
                stage: "synth",
                msg: other.to_string(),
            },
        }
    }
}

/// One line of the evaluation table.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub dataset: String,
    pub seed: u64,
    pub variant: Variant,
    pub rmse: f64,
    pub n_nodes: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub wall_ms: u64,
    /// Landmark edges removed across both stages, split by label.
    pub removed_incorrect: usize,
    pub removed_correct: usize,
    pub n_incorrect_edges: usize,
    pub n_correct_edges: usize,
    pub final_error: f64,
    pub numerical_failure: bool,
}

impl RunReport {
    /// `dataset, variant, rmse_m, precision, recall, f1, wall_ms`
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.4}\t{:.4}\t{:.4}\t{}",
            self.dataset,
            self.variant,
            self.rmse,
            self.precision,
            self.recall,
            self.f1,
            self.wall_ms
        )
    }

    /// The TSV line with the volatile timing column blanked, for
    /// byte-comparing reruns.
    pub fn tsv_line_stable(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.4}\t{:.4}\t{:.4}",
            self.dataset, self.variant, self.rmse, self.precision, self.recall, self.f1
        )
    }
}

struct Problem<P: Pose> {
    name: String,
    graph: PoseGraph<P>,
    ground_truth: Option<Estimate<P>>,
    labels: Option<LabelSidecar>,
}

fn read_to_string(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_problem<P: G2oPose>(cfg: &PipelineConfig) -> Result<Problem<P>, PipelineError> {
    let input = cfg.input.as_ref().expect("caller checked input");
    let graph = graphio::read_g2o::<P>(&read_to_string(input)?)?;
    let labels = match &cfg.labels {
        Some(p) => Some(graphio::read_labels(&read_to_string(p)?)?),
        None => None,
    };
    let ground_truth = match &cfg.gt {
        Some(p) => {
            let gt_graph = graphio::read_g2o::<P>(&read_to_string(p)?)?;
            let mut est = Estimate::new();
            for (id, pose) in gt_graph.nodes() {
                if let Some(pose) = pose {
                    est.set(id, pose.clone());
                }
            }
            Some(est)
        }
        None => None,
    };
    let name = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    Ok(Problem {
        name,
        graph,
        ground_truth,
        labels,
    })
}

fn synth_problem<P: SynthPose>(
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Problem<P>, PipelineError> {
    let mut synth_cfg = cfg.synth.clone();
    synth_cfg.seed = seed;
    let ds = generate_multisession::<P>(&synth_cfg)?;
    Ok(Problem {
        name: format!("synth-{seed}"),
        graph: ds.graph,
        ground_truth: Some(ds.ground_truth),
        labels: Some(ds.labels),
    })
}

fn landmark_pairs<P: Pose>(g: &PoseGraph<P>) -> BTreeSet<(NodeId, NodeId)> {
    g.edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::Landmark)
        .map(|e| edge_key(e.from, e.to))
        .collect()
}

/// Run one variant over one problem. Optimization failures fall back to the
/// last finite estimate and are flagged rather than fatal.
fn run_variant<P: G2oPose + SynthPose>(
    problem: &Problem<P>,
    variant: Variant,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(RunReport, PoseGraph<P>, Estimate<P>), PipelineError> {
    let t0 = Instant::now();
    let g0 = &problem.graph;
    let before = landmark_pairs(g0);

    let g1 = if variant.uses_pcm() {
        pcm_filter(g0, &cfg.pcm).0
    } else {
        g0.clone()
    };
    let g2 = if variant.uses_gc() {
        gc_filter(&g1, &cfg.support).0
    } else {
        g1
    };

    let after = landmark_pairs(&g2);
    let removed: BTreeSet<(NodeId, NodeId)> = before.difference(&after).copied().collect();

    let (init, _unplaced) = initial_guess(&g2);
    let (estimate, final_error, numerical_failure) = match optimize(&g2, &init, &cfg.lm) {
        Ok(out) => (out.estimate, out.final_error, false),
        Err(OptimizeError::NumericalFailure { last, .. }) => (last, f64::NAN, true),
        Err(OptimizeError::MissingNode(id)) => {
            return Err(PipelineError::Stage {
                stage: "optimize",
                msg: format!("estimate is missing node {id}"),
            })
        }
    };

    let (rmse, n_nodes) = match &problem.ground_truth {
        Some(gt) => {
            let report = align_and_rmse(&estimate, gt).map_err(|e| PipelineError::Stage {
                stage: "eval",
                msg: e.to_string(),
            })?;
            (report.rmse, report.n_nodes)
        }
        None => (f64::NAN, estimate.len()),
    };

    let (precision, recall, f1, removed_incorrect, removed_correct, n_inc, n_cor) =
        match &problem.labels {
            Some(labels) => {
                let m = edge_metrics(&removed, labels);
                let n_inc = labels.incorrect_count();
                let n_cor = labels.labels.len() - n_inc;
                let hits = removed
                    .iter()
                    .filter(|(a, b)| labels.get(*a, *b) == Some(true))
                    .count();
                (
                    m.precision,
                    m.recall,
                    m.f1,
                    hits,
                    removed.len() - hits,
                    n_inc,
                    n_cor,
                )
            }
            None => (f64::NAN, f64::NAN, f64::NAN, 0, removed.len(), 0, 0),
        };

    let report = RunReport {
        dataset: problem.name.clone(),
        seed,
        variant,
        rmse,
        n_nodes,
        precision,
        recall,
        f1,
        wall_ms: t0.elapsed().as_millis() as u64,
        removed_incorrect,
        removed_correct,
        n_incorrect_edges: n_inc,
        n_correct_edges: n_cor,
        final_error,
        numerical_failure,
    };
    Ok((report, g2, estimate))
}

/// The variant set the toggles imply: the full configured pipeline plus,
/// when the graph cut is enabled, its ablation without it.
pub fn variants_for(run_pcm: bool, run_gc: bool) -> Vec<Variant> {
    match (run_pcm, run_gc) {
        (true, true) => vec![Variant::Pcm, Variant::PcmGc],
        (true, false) => vec![Variant::Pcm],
        (false, true) => vec![Variant::Raw, Variant::Gc],
        (false, false) => vec![Variant::Raw],
    }
}

fn write_outputs<P: G2oPose>(
    dir: &Path,
    report: &RunReport,
    graph: &PoseGraph<P>,
    estimate: &Estimate<P>,
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| PipelineError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let stem = format!("{}_{}", report.dataset, report.variant);
    let mut out_graph = graph.clone();
    for (id, pose) in estimate.iter() {
        out_graph.add_node(id, Some(pose.clone()));
    }
    let g2o_path = dir.join(format!("{stem}.g2o"));
    std::fs::write(&g2o_path, graphio::write_g2o(&out_graph))
        .map_err(|e| PipelineError::Usage(format!("cannot write {}: {e}", g2o_path.display())))?;

    let mut traj = String::new();
    let offset = graphio::encoding_offset(&out_graph);
    for (id, pose) in estimate.iter() {
        let t = pose.translation();
        let coords: Vec<String> = t.iter().map(|v| format!("{:.6}", to_f64(*v))).collect();
        traj.push_str(&format!(
            "{}\t{}\n",
            graphio::encode_id(id, offset),
            coords.join("\t")
        ));
    }
    let traj_path = dir.join(format!("{stem}.traj"));
    std::fs::write(&traj_path, traj)
        .map_err(|e| PipelineError::Usage(format!("cannot write {}: {e}", traj_path.display())))?;
    Ok(())
}

fn run_typed<P: G2oPose + SynthPose>(
    cfg: &PipelineConfig,
) -> Result<Vec<RunReport>, PipelineError> {
    let mut reports = Vec::new();
    let variants = variants_for(cfg.run_pcm, cfg.run_gc);
    if cfg.input.is_some() {
        let problem = load_problem::<P>(cfg)?;
        for &variant in &variants {
            let (report, graph, estimate) = run_variant(&problem, variant, cfg, 0)?;
            if let Some(dir) = &cfg.output {
                write_outputs(dir, &report, &graph, &estimate)?;
            }
            reports.push(report);
        }
    } else {
        for &seed in &cfg.seeds {
            let problem = synth_problem::<P>(cfg, seed)?;
            for &variant in &variants {
                let (report, graph, estimate) = run_variant(&problem, variant, cfg, seed)?;
                if let Some(dir) = &cfg.output {
                    write_outputs(dir, &report, &graph, &estimate)?;
                }
                reports.push(report);
            }
        }
    }
    if let Some(path) = &cfg.report {
        let mut text = String::from("# dataset\tvariant\trmse_m\tprecision\trecall\tf1\twall_ms\n");
        for r in &reports {
            text.push_str(&r.tsv_line());
            text.push('\n');
        }
        std::fs::write(path, text)
            .map_err(|e| PipelineError::Usage(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(reports)
}

/// Execute the configured pipeline: one run per (seed, variant) for
/// synthetic data, one per variant for file input.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<RunReport>, PipelineError> {
    let dim = match &cfg.input {
        Some(path) => graphio::detect_dim(&read_to_string(path)?).ok_or_else(|| {
            PipelineError::Usage(format!("{} contains no SE2/SE3 records", path.display()))
        })?,
        None => cfg.dim,
    };
    match dim {
        2 => run_typed::<Pose2<f64>>(cfg),
        3 => run_typed::<Pose3<f64>>(cfg),
        other => Err(PipelineError::Usage(format!(
            "dim must be 2 or 3, got {other}"
        ))),
    }
}

/// Apply a flat `key = value` config file (`#` comments allowed) on top of
/// an existing configuration. CLI flags override file values, so callers
/// apply the file first.
pub fn apply_config_file(cfg: &mut PipelineConfig, text: &str) -> Result<(), PipelineError> {
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let Some((key, value)) = t.split_once('=') else {
            return Err(PipelineError::Config {
                line,
                msg: "expected `key = value`".into(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        apply_key(cfg, key, value).map_err(|msg| PipelineError::Config { line, msg })?;
    }
    Ok(())
}

/// Parse a `N..M` inclusive seed range or a single seed.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|_| format!("bad seed `{a}`"))?;
        let hi: u64 = b.trim().parse().map_err(|_| format!("bad seed `{b}`"))?;
        if hi < lo {
            return Err(format!("empty seed range `{s}`"));
        }
        Ok((lo..=hi).collect())
    } else {
        let v: u64 = s.trim().parse().map_err(|_| format!("bad seed `{s}`"))?;
        Ok(vec![v])
    }
}

fn apply_key(cfg: &mut PipelineConfig, key: &str, value: &str) -> Result<(), String> {
    let parse_f64 = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number `{v}`"));
    let parse_usize = |v: &str| v.parse::<usize>().map_err(|_| format!("bad integer `{v}`"));
    let parse_bool = |v: &str| match v {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(format!("bad boolean `{v}`")),
    };
    match key {
        "dim" => cfg.dim = value.parse().map_err(|_| format!("bad dim `{value}`"))?,
        "seed" | "seeds" => cfg.seeds = parse_seeds(value)?,
        "input" => cfg.input = Some(PathBuf::from(value)),
        "labels" => cfg.labels = Some(PathBuf::from(value)),
        "gt" => cfg.gt = Some(PathBuf::from(value)),
        "output" => cfg.output = Some(PathBuf::from(value)),
        "report" => cfg.report = Some(PathBuf::from(value)),
        "pcm" => cfg.run_pcm = parse_bool(value)?,
        "gc" => cfg.run_gc = parse_bool(value)?,
        "frames_per_session" => cfg.synth.frames_per_session = parse_usize(value)?,
        "step_length" => cfg.synth.step_length = parse_f64(value)?,
        "turn_probability" => cfg.synth.turn_probability = parse_f64(value)?,
        "odom_sigma_t" => cfg.synth.odom_sigma_t = parse_f64(value)?,
        "odom_sigma_r" => cfg.synth.odom_sigma_r = parse_f64(value)?,
        "revisit_radius" => cfg.synth.revisit_radius = parse_f64(value)?,
        "outlier_rate" => cfg.synth.outlier_rate = parse_f64(value)?,
        "min_outlier_distance" => cfg.synth.min_outlier_distance = parse_f64(value)?,
        "gamma_t" => cfg.pcm.gamma_t = parse_f64(value)?,
        "gamma_r" => cfg.pcm.gamma_r = parse_f64(value)?,
        "exact_clique_limit" => cfg.pcm.exact_clique_limit = parse_usize(value)?,
        "kappa" => cfg.pcm.kappa = parse_f64(value)?,
        "pcm_metric" => {
            cfg.pcm.metric = match value {
                "plain" => ConsistencyMetric::PlainNorm,
                "noise-scaled" => ConsistencyMetric::NoiseScaled,
                _ => {
                    return Err(format!(
                        "pcm_metric must be plain or noise-scaled, got `{value}`"
                    ))
                }
            }
        }
        "delta" => cfg.support.delta = value.parse().map_err(|_| format!("bad delta `{value}`"))?,
        "mode" => {
            cfg.support.mode = match value {
                "landmark-only" => McMode::LandmarkOnly,
                "full" => McMode::FullGraph,
                _ => return Err(format!("mode must be landmark-only or full, got `{value}`")),
            }
        }
        "theta_odo" => cfg.support.theta_odo = parse_f64(value)?,
        "max_iterations" => cfg.lm.max_iterations = parse_usize(value)?,
        "lambda_init" => cfg.lm.lambda_init = parse_f64(value)?,
        "lambda_factor" => cfg.lm.lambda_factor = parse_f64(value)?,
        other => return Err(format!("unknown key `{other}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_sets() {
        assert_eq!(variants_for(true, true), vec![Variant::Pcm, Variant::PcmGc]);
        assert_eq!(variants_for(true, false), vec![Variant::Pcm]);
        assert_eq!(variants_for(false, true), vec![Variant::Raw, Variant::Gc]);
        assert_eq!(variants_for(false, false), vec![Variant::Raw]);
    }

    #[test]
    fn config_file_round() {
        let mut cfg = PipelineConfig::default();
        let text = "\
# comment
dim = 2
seeds = 3..5
outlier_rate = 0.2
gamma_t = 1.5
mode = full
pcm = off
";
        apply_config_file(&mut cfg, text).unwrap();
        assert_eq!(cfg.seeds, vec![3, 4, 5]);
        assert_eq!(cfg.synth.outlier_rate, 0.2);
        assert_eq!(cfg.pcm.gamma_t, 1.5);
        assert_eq!(cfg.support.mode, McMode::FullGraph);
        assert!(!cfg.run_pcm);
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let mut cfg = PipelineConfig::default();
        let err = apply_config_file(&mut cfg, "no_such_key = 1\n").unwrap_err();
        assert!(matches!(err, PipelineError::Config { line: 1, .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn seed_range_parsing() {
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert_eq!(parse_seeds("2..4").unwrap(), vec![2, 3, 4]);
        assert!(parse_seeds("9..2").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn zero_noise_raw_pipeline_scores_zero() {
        let cfg = PipelineConfig {
            run_pcm: false,
            run_gc: false,
            synth: SynthConfig {
                frames_per_session: 40,
                odom_sigma_t: 0.0,
                odom_sigma_r: 0.0,
                outlier_rate: 0.0,
                seed: 3,
                ..SynthConfig::default()
            },
            seeds: vec![3],
            ..PipelineConfig::default()
        };
        let reports = run_pipeline(&cfg).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].variant, Variant::Raw);
        assert!(reports[0].rmse < 1e-6, "rmse {}", reports[0].rmse);
    }

    #[test]
    fn pcm_stage_isolated_from_gc_toggle() {
        let base = PipelineConfig {
            synth: SynthConfig {
                frames_per_session: 60,
                ..SynthConfig::default()
            },
            seeds: vec![4],
            ..PipelineConfig::default()
        };
        let with_gc = run_pipeline(&base).unwrap();
        let without_gc = run_pipeline(&PipelineConfig {
            run_gc: false,
            ..base.clone()
        })
        .unwrap();
        let pcm_a = with_gc.iter().find(|r| r.variant == Variant::Pcm).unwrap();
        let pcm_b = without_gc
            .iter()
            .find(|r| r.variant == Variant::Pcm)
            .unwrap();
        assert_eq!(pcm_a.tsv_line_stable(), pcm_b.tsv_line_stable());
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = PipelineConfig {
            synth: SynthConfig {
                frames_per_session: 60,
                ..SynthConfig::default()
            },
            seeds: vec![5, 6],
            ..PipelineConfig::default()
        };
        let a = run_pipeline(&cfg).unwrap();
        let b = run_pipeline(&cfg).unwrap();
        let lines = |rs: &[RunReport]| rs.iter().map(|r| r.tsv_line_stable()).collect::<Vec<_>>();
        assert_eq!(lines(&a), lines(&b));
    }
}
