//! Experiment configuration, batch execution, and artifact emission:
//! strict-JSON configs, 17-significant-digit trajectory CSVs, JSONL
//! verdict streams, and the canned figure-data protocols.

use crate::engine::{run, RunConfig, Trajectory};
use crate::family::ObjectiveSpec;
use crate::nn::{
    idx::load_idx, Dataset, InitConfig, Network, NetworkConfig, NnTrajectory, TrainConfig,
};
use crate::phenomena::PhenomenaReport;
use crate::props::{run_suite, PropsConfig, PropsReport};
use crate::theorems::{learning_rate_from_c, sweep, GridCell, TheoremCheck, TheoremId};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("trajectory csv, line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Idx(#[from] crate::nn::idx::IdxError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig5,
    Fig6,
    Fig7,
    NnFig9,
    NnFig10,
    NnFig11,
    NnFig12,
}

impl FigureId {
    pub const ALL: [FigureId; 10] = [
        FigureId::Fig1,
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig5,
        FigureId::Fig6,
        FigureId::Fig7,
        FigureId::NnFig9,
        FigureId::NnFig10,
        FigureId::NnFig11,
        FigureId::NnFig12,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig5 => "fig5",
            FigureId::Fig6 => "fig6",
            FigureId::Fig7 => "fig7",
            FigureId::NnFig9 => "nn_fig9",
            FigureId::NnFig10 => "nn_fig10",
            FigureId::NnFig11 => "nn_fig11",
            FigureId::NnFig12 => "nn_fig12",
        }
    }
}

impl std::str::FromStr for FigureId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FigureId::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown figure {s:?}"))
    }
}

/// Learning rate given either directly or as the theorem-form multiplier.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LearningRate {
    H(f64),
    C(f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatePayload {
    pub spec: ObjectiveSpec,
    pub x0: f64,
    pub y0: f64,
    pub lr: LearningRate,
    #[serde(default = "default_max_iters")]
    pub max_iters: u64,
    #[serde(default = "default_stride")]
    pub record_stride: u64,
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
    #[serde(default = "default_divergence")]
    pub divergence_bound: f64,
}

fn default_max_iters() -> u64 {
    2_000_000
}
fn default_stride() -> u64 {
    1
}
fn default_tol() -> f64 {
    1e-12
}
fn default_divergence() -> f64 {
    1e12
}

impl SimulatePayload {
    pub fn to_run_config(&self) -> RunConfig {
        let h = match self.lr {
            LearningRate::H(h) => h,
            LearningRate::C(c) => learning_rate_from_c(&self.spec, self.x0, self.y0, c),
        };
        let mut cfg = RunConfig::new(self.spec.clone(), self.x0, self.y0, h);
        cfg.max_iters = self.max_iters;
        cfg.record_stride = self.record_stride;
        cfg.convergence_tol = self.convergence_tol;
        cfg.divergence_bound = self.divergence_bound;
        cfg
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic { seed: u64, samples: usize },
    Idx { images: PathBuf, labels: PathBuf, subset_size: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSelection {
    Fixed { h: f64 },
    /// `h = c / S_0` with `S_0` measured by Lanczos at the initial weights.
    COverS0 { c: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnTrainPayload {
    pub network: NetworkConfig,
    pub data: DataSource,
    pub lr: LrSelection,
    pub epochs: u64,
    #[serde(default = "default_nn_stride")]
    pub record_stride: u64,
    #[serde(default = "default_lanczos_iters")]
    pub lanczos_iters: usize,
    #[serde(default = "default_lanczos_seed")]
    pub lanczos_seed: u64,
}

fn default_nn_stride() -> u64 {
    100
}
fn default_lanczos_iters() -> usize {
    40
}
fn default_lanczos_seed() -> u64 {
    17
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    Simulate {
        run: SimulatePayload,
        output_dir: PathBuf,
        format: OutputFormat,
    },
    Sweep {
        theorem: TheoremId,
        grid: Vec<GridCell>,
        output_dir: PathBuf,
        format: OutputFormat,
    },
    Verify {
        theorem: TheoremId,
        grid: Vec<GridCell>,
        output_dir: PathBuf,
        format: OutputFormat,
    },
    NnTrain {
        train: NnTrainPayload,
        output_dir: PathBuf,
        format: OutputFormat,
    },
    Props {
        #[serde(default)]
        a: Vec<f64>,
        #[serde(default)]
        b: Vec<u32>,
        output_dir: PathBuf,
        format: OutputFormat,
    },
    FigureData {
        figure: FigureId,
        output_dir: PathBuf,
        format: OutputFormat,
    },
}

/// Strict parse: unknown keys and malformed values name the offending key.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Config(e.to_string()))
}

pub fn save_config(config: &ExperimentConfig, path: &Path) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(config)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub const TRAJECTORY_HEADER: &str = "k,x,y,loss,delta,ell,q,r,uu,sharpness";

/// Exact column order `k,x,y,loss,delta,ell,q,r,uu,sharpness`, floats with
/// 17 significant digits.
pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<(), ExperimentError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for s in &traj.steps {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.k,
            fmt17(s.x),
            fmt17(s.y),
            fmt17(s.loss),
            fmt17(s.delta),
            fmt17(s.ell),
            fmt17(s.q),
            fmt17(s.r),
            fmt17(s.uu),
            fmt17(s.sharpness)
        )?;
    }
    Ok(())
}

/// Re-parse a trajectory CSV written by [`write_trajectory`].
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<crate::engine::StepRecord>, ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TRAJECTORY_HEADER => {}
        other => {
            return Err(ExperimentError::Csv {
                line: 1,
                message: format!("bad header {:?}", other.map(|(_, h)| h)),
            })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(ExperimentError::Csv {
                line: i + 1,
                message: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let parse = |j: usize| -> Result<f64, ExperimentError> {
            fields[j].parse().map_err(|e| ExperimentError::Csv {
                line: i + 1,
                message: format!("field {j}: {e}"),
            })
        };
        records.push(crate::engine::StepRecord {
            k: fields[0].parse().map_err(|e| ExperimentError::Csv {
                line: i + 1,
                message: format!("field 0: {e}"),
            })?,
            x: parse(1)?,
            y: parse(2)?,
            loss: parse(3)?,
            delta: parse(4)?,
            ell: parse(5)?,
            q: parse(6)?,
            r: parse(7)?,
            uu: parse(8)?,
            sharpness: parse(9)?,
        });
    }
    Ok(records)
}

pub fn write_phenomena(report: &PhenomenaReport, path: &Path) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(&report.to_json())
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// One `TheoremCheck` JSON object per line.
pub fn write_checks_jsonl(checks: &[TheoremCheck], path: &Path) -> Result<(), ExperimentError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for check in checks {
        let line =
            serde_json::to_string(check).map_err(|e| ExperimentError::Config(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_props(report: &PropsReport, path: &Path) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// NN trajectory CSV: `epoch,loss,sharpness,balancing_gap_sq`.
pub fn write_nn_trajectory(traj: &NnTrajectory, path: &Path) -> Result<(), ExperimentError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,loss,sharpness,balancing_gap_sq")?;
    for r in &traj.records {
        writeln!(
            out,
            "{},{},{},{}",
            r.epoch,
            fmt17(r.loss),
            fmt17(r.sharpness),
            fmt17(r.balancing_gap_sq)
        )?;
    }
    Ok(())
}

pub fn build_dataset(source: &DataSource, net: &NetworkConfig) -> Result<Dataset, ExperimentError> {
    Ok(match source {
        DataSource::Synthetic { seed, samples } => {
            Dataset::synthetic(*seed, *samples, net.dims[0], net.dims[2])
        }
        DataSource::Idx { images, labels, subset_size, seed } => {
            load_idx(images, labels, *subset_size, *seed)?
        }
    })
}

pub struct NnRunOutcome {
    pub trajectory: NnTrajectory,
    pub learning_rate: f64,
    pub initial_sharpness: Option<f64>,
}

pub fn run_nn_train(payload: &NnTrainPayload) -> Result<NnRunOutcome, ExperimentError> {
    let mut net = Network::init(payload.network.clone())?;
    let data = build_dataset(&payload.data, &payload.network)?;
    let (h, s0) = match payload.lr {
        LrSelection::Fixed { h } => (h, None),
        LrSelection::COverS0 { c } => {
            let (h, s0) = crate::nn::select_learning_rate(
                &net,
                &data,
                c,
                payload.lanczos_iters,
                payload.lanczos_seed,
            );
            (h, Some(s0))
        }
    };
    let tcfg = TrainConfig {
        learning_rate: h,
        epochs: payload.epochs,
        record_stride: payload.record_stride,
        lanczos_iters: payload.lanczos_iters,
        lanczos_seed: payload.lanczos_seed,
    };
    let trajectory = net.train(&data, &tcfg);
    Ok(NnRunOutcome { trajectory, learning_rate: h, initial_sharpness: s0 })
}

// --- figure-data protocols -------------------------------------------------

fn sidecar(
    figure: FigureId,
    params: serde_json::Value,
    files: &[PathBuf],
    dir: &Path,
) -> Result<PathBuf, ExperimentError> {
    let meta = serde_json::json!({
        "figure": figure.name(),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "parameters": params,
        "files": files.iter().map(|p| p.file_name().unwrap().to_string_lossy()).collect::<Vec<_>>(),
    });
    let path = dir.join(format!("{}.json", figure.name()));
    std::fs::write(&path, serde_json::to_string_pretty(&meta).unwrap())?;
    Ok(path)
}

fn write_series(
    dir: &Path,
    name: &str,
    header: &str,
    rows: impl Iterator<Item = (u64, f64)>,
) -> Result<PathBuf, ExperimentError> {
    let path = dir.join(name);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "{header}")?;
    for (k, v) in rows {
        writeln!(out, "{k},{}", fmt17(v))?;
    }
    Ok(path)
}

fn gap_sq(s: &crate::engine::StepRecord) -> f64 {
    (s.x - s.y) * (s.x - s.y)
}

fn run_simple(
    spec: ObjectiveSpec,
    x0: f64,
    y0: f64,
    h: f64,
    stride: u64,
) -> Result<Trajectory, ExperimentError> {
    let mut cfg = RunConfig::new(spec, x0, y0, h);
    cfg.record_stride = stride;
    Ok(run(&cfg)?)
}

/// Desk-scale defaults shared by the qualitative network runs.
pub fn desk_network(
    loss: crate::nn::Loss,
    activation: crate::nn::Activation,
    depth: u32,
    batch_norm: bool,
) -> NetworkConfig {
    let (frob_w1, frob_w2) = if depth == 3 { (3.0, 10.0) } else { (6.0, 20.0) };
    NetworkConfig {
        dims: [20, 30, 5],
        depth,
        loss,
        activation,
        batch_norm,
        init: InitConfig { seed: 1, frob_w1, frob_w2 },
        bn_eps: 1e-5,
    }
}

pub fn desk_train(net: NetworkConfig, c_target: f64, epochs: u64) -> NnTrainPayload {
    NnTrainPayload {
        network: net,
        data: DataSource::Synthetic { seed: 7, samples: 200 },
        lr: LrSelection::COverS0 { c: c_target },
        epochs,
        record_stride: 100,
        lanczos_iters: 40,
        lanczos_seed: 17,
    }
}

/// Emit the plot-ready CSV set for one canned figure protocol; returns the
/// written files (sidecar last).
#[allow(clippy::needless_late_init)] // every protocol arm both writes files and builds params
pub fn figure_data(figure: FigureId, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    use crate::nn::{Activation::*, Loss::*};
    let mut files = Vec::new();
    let params;
    match figure {
        FigureId::Fig1 => {
            // Good regularity, h = 4/uu0: catapult, balancing, and the two
            // edge-of-stability starts (sharp and flat initial sharpness).
            let spec = ObjectiveSpec::good(1.0).expect("valid");
            let sharp = run_simple(spec.clone(), 0.2, 10.0, 4.0 / 100.04, 1)?;
            let flat = run_simple(spec, 2.0, 10.0, 4.0 / 104.0, 1)?;
            files.push(write_series(
                dir,
                "fig1_loss.csv",
                "k,loss",
                sharp.steps.iter().map(|s| (s.k, s.loss)),
            )?);
            files.push(write_series(
                dir,
                "fig1_balancing_gap.csv",
                "k,gap_sq",
                sharp.steps.iter().map(|s| (s.k, gap_sq(s))),
            )?);
            files.push(write_series(
                dir,
                "fig1_sharpness_sharp_start.csv",
                "k,sharpness",
                sharp.steps.iter().map(|s| (s.k, s.sharpness)),
            )?);
            files.push(write_series(
                dir,
                "fig1_sharpness_flat_start.csv",
                "k,sharpness",
                flat.steps.iter().map(|s| (s.k, s.sharpness)),
            )?);
            params = serde_json::json!({
                "spec": {"kind": "good", "a": 1.0},
                "starts": [[0.2, 10.0], [2.0, 10.0]],
                "learning_rate_rule": "4 / (x0^2 + y0^2)",
                "two_over_h": [2.0 / (4.0 / 100.04), 2.0 / (4.0 / 104.0)],
            });
        }
        FigureId::Fig2 => {
            let spec = ObjectiveSpec::bad(3).expect("valid");
            let (x0, y0) = (0.15f64, 10.0f64);
            let uu0 = x0 * x0 + y0 * y0;
            let h = 4.0 / (uu0 * (x0 * y0).powi(4));
            let traj = run_simple(spec, x0, y0, h, 1)?;
            files.push(write_series(
                dir,
                "fig2_loss.csv",
                "k,loss",
                traj.steps.iter().map(|s| (s.k, s.loss)),
            )?);
            files.push(write_series(
                dir,
                "fig2_balancing_gap.csv",
                "k,gap_sq",
                traj.steps.iter().map(|s| (s.k, gap_sq(s))),
            )?);
            files.push(write_series(
                dir,
                "fig2_sharpness.csv",
                "k,sharpness",
                traj.steps.iter().map(|s| (s.k, s.sharpness)),
            )?);
            params = serde_json::json!({
                "spec": {"kind": "bad", "b": 3},
                "start": [x0, y0],
                "learning_rate_rule": "4 / ((x0^2 + y0^2) (x0 y0)^(2b-2))",
                "learning_rate": h,
                "one_over_h": 1.0 / h,
            });
        }
        FigureId::Fig3 => {
            let spec = ObjectiveSpec::perturbed();
            let (x0, y0) = (10.0f64, 0.15f64);
            let h = 4.0 / (x0 * x0 + y0 * y0);
            let traj = run_simple(spec, x0, y0, h, 1)?;
            files.push(write_series(
                dir,
                "fig3_loss.csv",
                "k,loss",
                traj.steps.iter().map(|s| (s.k, s.loss)),
            )?);
            files.push(write_series(
                dir,
                "fig3_sharpness.csv",
                "k,sharpness",
                traj.steps.iter().map(|s| (s.k, s.sharpness)),
            )?);
            params = serde_json::json!({
                "spec": {"kind": "perturbed"},
                "start": [x0, y0],
                "learning_rate": h,
                "two_over_h": 2.0 / h,
            });
        }
        FigureId::Fig5 => {
            let spec = ObjectiveSpec::bad(3).expect("valid");
            let (x0, y0) = (6.0f64, 1.0f64);
            let uu0 = x0 * x0 + y0 * y0;
            let mut runs = serde_json::Map::new();
            for c in [2u32, 4, 6, 8] {
                let h = c as f64 / (uu0 * (x0 * y0).powi(4));
                let traj = run_simple(spec.clone(), x0, y0, h, 1)?;
                files.push(write_series(
                    dir,
                    &format!("fig5_sharpness_c{c}.csv"),
                    "k,sharpness",
                    traj.steps.iter().map(|s| (s.k, s.sharpness)),
                )?);
                files.push(write_series(
                    dir,
                    &format!("fig5_balancing_gap_c{c}.csv"),
                    "k,gap_sq",
                    traj.steps.iter().map(|s| (s.k, gap_sq(s))),
                )?);
                runs.insert(
                    format!("c{c}"),
                    serde_json::json!({
                        "learning_rate": h,
                        "status": format!("{:?}", traj.status),
                    }),
                );
            }
            params = serde_json::json!({
                "spec": {"kind": "bad", "b": 3},
                "start": [x0, y0],
                "learning_rate_rule": "C / ((x0^2 + y0^2) (x0 y0)^(2b-2))",
                "runs": runs,
            });
        }
        FigureId::Fig6 => {
            let spec = ObjectiveSpec::bad(1).expect("valid");
            let x0 = 10.0;
            for (tag, y0) in [("015", 0.15), ("15", 1.5), ("150", 15.0)] {
                let h = 4.0 / (x0 * x0 + y0 * y0);
                let traj = run_simple(spec.clone(), x0, y0, h, 1)?;
                files.push(write_series(
                    dir,
                    &format!("fig6_loss_y{tag}.csv"),
                    "k,loss",
                    traj.steps.iter().map(|s| (s.k, s.loss)),
                )?);
                files.push(write_series(
                    dir,
                    &format!("fig6_sharpness_y{tag}.csv"),
                    "k,sharpness",
                    traj.steps.iter().map(|s| (s.k, s.sharpness)),
                )?);
            }
            params = serde_json::json!({
                "spec": {"kind": "bad", "b": 1},
                "x0": 10.0,
                "y0": [0.15, 1.5, 15.0],
                "learning_rate_rule": "4 / (x0^2 + y0^2)",
            });
        }
        FigureId::Fig7 => {
            // Start very close to the minima: the remaining good region of
            // the degree-6 member (balancing, limiting sharpness) which is
            // gone again at degree 18.
            let (x0, y0) = (10.0f64, 0.11f64);
            let uu0: f64 = x0 * x0 + y0 * y0;
            for b in [3u32, 9] {
                let spec = ObjectiveSpec::bad(b).expect("valid");
                let h = 4.0 / ((uu0 + 4.0) * (x0 * y0).powi(2 * b as i32 - 2));
                let traj = run_simple(spec, x0, y0, h, 1)?;
                files.push(write_series(
                    dir,
                    &format!("fig7_loss_b{b}.csv"),
                    "k,loss",
                    traj.steps.iter().map(|s| (s.k, s.loss)),
                )?);
                files.push(write_series(
                    dir,
                    &format!("fig7_balancing_gap_b{b}.csv"),
                    "k,gap_sq",
                    traj.steps.iter().map(|s| (s.k, gap_sq(s))),
                )?);
                files.push(write_series(
                    dir,
                    &format!("fig7_sharpness_b{b}.csv"),
                    "k,sharpness",
                    traj.steps.iter().map(|s| (s.k, s.sharpness)),
                )?);
            }
            params = serde_json::json!({
                "b": [3, 9],
                "start": [x0, y0],
                "learning_rate_rule": "4 / ((x0^2 + y0^2 + 4) (x0 y0)^(2b-2))",
            });
        }
        FigureId::NnFig9 | FigureId::NnFig10 => {
            let cases: [(&str, NetworkConfig); 6] = [
                ("huber_tanh", desk_network(Huber { delta: 1.0 }, Tanh, 2, false)),
                ("huber_relu", desk_network(Huber { delta: 1.0 }, Relu, 2, false)),
                (
                    "huber_relu3_3layer",
                    desk_network(Huber { delta: 1.0 }, ReluK { k: 3 }, 3, false),
                ),
                ("l2_tanh", desk_network(L2, Tanh, 2, false)),
                ("l2_relu", desk_network(L2, Relu, 2, false)),
                ("l2_relu3", desk_network(L2, ReluK { k: 3 }, 2, false)),
            ];
            let mut meta = serde_json::Map::new();
            for (tag, net) in cases {
                let outcome = run_nn_train(&desk_train(net, 2.5, 8000))?;
                let (prefix, header) = match figure {
                    FigureId::NnFig9 => ("nn_fig9_sharpness", "epoch,sharpness"),
                    _ => ("nn_fig10_balancing_gap", "epoch,gap_sq"),
                };
                files.push(write_series(
                    dir,
                    &format!("{prefix}_{tag}.csv"),
                    header,
                    outcome.trajectory.records.iter().map(|r| {
                        let v = if figure == FigureId::NnFig9 {
                            r.sharpness
                        } else {
                            r.balancing_gap_sq
                        };
                        (r.epoch, v)
                    }),
                )?);
                meta.insert(
                    tag.to_string(),
                    serde_json::json!({
                        "learning_rate": outcome.learning_rate,
                        "two_over_h": 2.0 / outcome.learning_rate,
                        "initial_sharpness": outcome.initial_sharpness,
                    }),
                );
            }
            params = serde_json::json!({"protocol": "c_over_s0", "c": 2.5, "cases": meta});
        }
        FigureId::NnFig11 => {
            let cases: [(&str, NetworkConfig); 3] = [
                ("l2_relu_bn", desk_network(L2, Relu, 2, true)),
                ("l2_relu3_bn", desk_network(L2, ReluK { k: 3 }, 2, true)),
                (
                    "huber_relu3_3layer_bn",
                    desk_network(Huber { delta: 1.0 }, ReluK { k: 3 }, 3, true),
                ),
            ];
            let mut meta = serde_json::Map::new();
            for (tag, net) in cases {
                let outcome = run_nn_train(&desk_train(net, 2.5, 8000))?;
                files.push(write_series(
                    dir,
                    &format!("nn_fig11_sharpness_{tag}.csv"),
                    "epoch,sharpness",
                    outcome.trajectory.records.iter().map(|r| (r.epoch, r.sharpness)),
                )?);
                meta.insert(
                    tag.to_string(),
                    serde_json::json!({
                        "learning_rate": outcome.learning_rate,
                        "two_over_h": 2.0 / outcome.learning_rate,
                    }),
                );
            }
            params = serde_json::json!({"protocol": "c_over_s0", "c": 2.5, "cases": meta});
        }
        FigureId::NnFig12 => {
            let cases: [(&str, NetworkConfig, f64); 4] = [
                ("huber_relu_small", desk_network(Huber { delta: 1.0 }, Relu, 2, false), 1.5),
                ("huber_relu_large", desk_network(Huber { delta: 1.0 }, Relu, 2, false), 2.5),
                ("l2_tanh_small", desk_network(L2, Tanh, 2, false), 1.5),
                ("l2_tanh_large", desk_network(L2, Tanh, 2, false), 2.5),
            ];
            let mut meta = serde_json::Map::new();
            for (tag, net, c) in cases {
                let outcome = run_nn_train(&desk_train(net, c, 8000))?;
                files.push(write_series(
                    dir,
                    &format!("nn_fig12_sharpness_{tag}.csv"),
                    "epoch,sharpness",
                    outcome.trajectory.records.iter().map(|r| (r.epoch, r.sharpness)),
                )?);
                files.push(write_series(
                    dir,
                    &format!("nn_fig12_balancing_gap_{tag}.csv"),
                    "epoch,gap_sq",
                    outcome.trajectory.records.iter().map(|r| (r.epoch, r.balancing_gap_sq)),
                )?);
                meta.insert(
                    tag.to_string(),
                    serde_json::json!({
                        "c": c,
                        "learning_rate": outcome.learning_rate,
                        "two_over_h": 2.0 / outcome.learning_rate,
                    }),
                );
            }
            params = serde_json::json!({"protocol": "c_over_s0", "cases": meta});
        }
    }
    let meta = sidecar(figure, params, &files, dir)?;
    files.push(meta);
    Ok(files)
}

/// Run the proposition suite for the CLI.
pub fn run_props(a: &[f64], b: &[u32]) -> PropsReport {
    let a_default: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let b_default = vec![1, 3, 5, 9];
    run_suite(
        if a.is_empty() { &a_default } else { a },
        if b.is_empty() { &b_default } else { b },
        PropsConfig::default(),
    )
}

/// Execute a loaded configuration, writing artifacts under its output
/// directory. Returns the process exit code.
pub fn execute(config: &ExperimentConfig) -> Result<i32, ExperimentError> {
    match config {
        ExperimentConfig::Simulate { run: payload, output_dir, format } => {
            std::fs::create_dir_all(output_dir)?;
            let cfg = payload.to_run_config();
            let traj = run(&cfg)?;
            let report = PhenomenaReport::from_trajectory(&traj);
            match format {
                OutputFormat::Csv => write_trajectory(&traj, &output_dir.join("trajectory.csv"))?,
                OutputFormat::Jsonl => {
                    let mut out = std::io::BufWriter::new(std::fs::File::create(
                        output_dir.join("trajectory.jsonl"),
                    )?);
                    for s in &traj.steps {
                        writeln!(out, "{}", serde_json::to_string(s).unwrap())?;
                    }
                }
            }
            write_phenomena(&report, &output_dir.join("phenomena.json"))?;
            println!(
                "simulate: {:?} after {} iterations, S_inf = {:?}",
                traj.status, traj.iterations, traj.limit_sharpness
            );
            Ok(0)
        }
        ExperimentConfig::Sweep { theorem, grid, output_dir, .. }
        | ExperimentConfig::Verify { theorem, grid, output_dir, .. } => {
            std::fs::create_dir_all(output_dir)?;
            let checks = sweep(*theorem, grid);
            write_checks_jsonl(&checks, &output_dir.join("checks.jsonl"))?;
            let mut failed = 0;
            for check in &checks {
                println!(
                    "{} c={} hypotheses={:?} verdict={:?} margin={:?}",
                    check.theorem.name(),
                    check.c,
                    check.hypotheses,
                    check.verdict,
                    check.margin
                );
                if check.hard_failure() {
                    failed += 1;
                }
            }
            Ok(if failed > 0 { 1 } else { 0 })
        }
        ExperimentConfig::NnTrain { train, output_dir, .. } => {
            std::fs::create_dir_all(output_dir)?;
            let outcome = run_nn_train(train)?;
            write_nn_trajectory(&outcome.trajectory, &output_dir.join("nn_trajectory.csv"))?;
            let last = outcome.trajectory.records.last();
            println!(
                "nn-train: h = {:.6e}, 2/h = {:.4}, final sharpness = {:?}, diverged = {}",
                outcome.learning_rate,
                2.0 / outcome.learning_rate,
                last.map(|r| r.sharpness),
                outcome.trajectory.diverged
            );
            Ok(0)
        }
        ExperimentConfig::Props { a, b, output_dir, .. } => {
            std::fs::create_dir_all(output_dir)?;
            let report = run_props(a, b);
            write_props(&report, &output_dir.join("props.json"))?;
            let mut failed = 0;
            for check in &report.checks {
                println!(
                    "{} [{}]: {} (margin {:.3e})",
                    check.name,
                    check.member,
                    if check.pass { "pass" } else { "FAIL" },
                    check.worst_margin
                );
                if !check.pass {
                    failed += 1;
                }
            }
            Ok(if failed > 0 { 1 } else { 0 })
        }
        ExperimentConfig::FigureData { figure, output_dir, .. } => {
            let files = figure_data(*figure, output_dir)?;
            for f in &files {
                println!("wrote {}", f.display());
            }
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RunConfig;

    #[test]
    fn config_round_trip() {
        let config = ExperimentConfig::Sweep {
            theorem: TheoremId::NoEosBad,
            grid: vec![GridCell {
                spec: ObjectiveSpec::bad(3).unwrap(),
                x0: 6.0,
                y0: 1.0,
                c: 2.0,
            }],
            output_dir: PathBuf::from("out"),
            format: OutputFormat::Jsonl,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        save_config(&config, &path).unwrap();
        let back = load_config(&path).unwrap();
        let a = serde_json::to_string(&config).unwrap();
        let b = serde_json::to_string(&back).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn strict_parsing_names_offending_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(
            &path,
            r#"{"mode":"figure_data","figure":"fig1","output_dir":"o","format":"csv","bogus":1}"#,
        )
        .unwrap();
        let err = load_config(&path).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn trajectory_csv_round_trip_preserves_identities() {
        // 17-significant-digit serialization keeps the one-step identity
        // intact on re-parse.
        let h = 4.0 / 100.04;
        let cfg = RunConfig::new(ObjectiveSpec::good(1.0).unwrap(), 0.2, 10.0, h);
        let traj = run(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory(&traj, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(TRAJECTORY_HEADER));
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back.len(), traj.steps.len());
        for (orig, parsed) in traj.steps.iter().zip(&back) {
            assert_eq!(orig.x.to_bits(), parsed.x.to_bits());
            assert_eq!(orig.r.to_bits(), parsed.r.to_bits());
        }
        for w in back.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let rhs = a.r * a.delta;
            assert!((b.delta - rhs).abs() <= 1e-10 * (1.0 + b.delta.abs()));
        }
    }

    #[test]
    fn figure_one_data_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = figure_data(FigureId::Fig1, dir.path()).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for expect in [
            "fig1_loss.csv",
            "fig1_balancing_gap.csv",
            "fig1_sharpness_sharp_start.csv",
            "fig1_sharpness_flat_start.csv",
            "fig1.json",
        ] {
            assert!(names.iter().any(|n| n == expect), "missing {expect} in {names:?}");
        }
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("fig1.json")).unwrap())
                .unwrap();
        assert_eq!(meta["figure"], "fig1");
        assert!(meta["parameters"]["two_over_h"][0].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn simulate_execute_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig::Simulate {
            run: SimulatePayload {
                spec: ObjectiveSpec::bad(1).unwrap(),
                x0: 2.0,
                y0: 1.0,
                lr: LearningRate::H(0.1),
                max_iters: 100_000,
                record_stride: 1,
                convergence_tol: 1e-12,
                divergence_bound: 1e12,
            },
            output_dir: dir.path().to_path_buf(),
            format: OutputFormat::Csv,
        };
        assert_eq!(execute(&config).unwrap(), 0);
        assert!(dir.path().join("trajectory.csv").exists());
        let report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("phenomena.json")).unwrap(),
        )
        .unwrap();
        assert!(report.get("regime").is_some());
    }
}
