//! File-staged pipeline: simulate → estimate → align → report, each stage
//! reading and writing files in one session directory.

use std::fs;
use std::path::{Path, PathBuf};

use lhtrack_core::alignment::{align as align_streams, AlignConfig, AlignedDataset, CfSample};
use lhtrack_core::crossing_beam::{CrossingBeam, DEFAULT_DELTA_GATE, DEFAULT_EPOCH_WINDOW_US};
use lhtrack_core::ekf::{Ekf, EkfConfig, EkfState};
use lhtrack_core::geometry::SweepAngle;
use lhtrack_core::metrics::{apply_filters, EpochInfo, FilterPolicy, MetricsReport, DEFAULT_DELTA_MAX};
use lhtrack_core::simulator::{led_anchors, simulate as simulate_session, volume_centre, CfEvent, ScenarioConfig};

use crate::config::{parse_scenario_config, ConfigError, KeyValues};
use crate::format::{read_cf_log, read_mocap, write_cf_log, write_session, FormatError, CF_LOG_FILE, MOCAP_FILE};
use crate::manifest::{Estimator, RunManifest, UnknownEstimator, TOOL_VERSION};
use crate::tables::{self, TableError};

pub const SESSION_CONFIG: &str = "session.cfg";
pub const SESSION_MANIFEST: &str = "manifest.txt";
pub const ESTIMATES_FILE: &str = "estimates.lhk";
pub const ESTIMATE_INFO: &str = "estimates.txt";
pub const EPOCHS_FILE: &str = "epochs.tsv";
pub const ALIGNED_FILE: &str = "aligned.tsv";
pub const REPORT_FILE: &str = "report.txt";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const BOXPLOT_FILE: &str = "boxplot.tsv";
pub const ACCURACY_FILE: &str = "accuracy.tsv";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path} not found: run `lhtrack {stage}` first")]
    MissingStage { stage: &'static str, path: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error(transparent)]
    Manifest(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Estimator(#[from] UnknownEstimator),
    #[error("{0}")]
    Core(#[from] lhtrack_core::Error),
    #[error("empty after filtering: no record passed the {0} filters")]
    EmptyAfterFiltering(Estimator),
    #[error("{0}")]
    Data(String),
}

pub(crate) fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Fails with the name of the stage that produces `file` when it is absent.
fn require(dir: &Path, file: &str, stage: &'static str) -> Result<PathBuf, PipelineError> {
    let path = dir.join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(PipelineError::MissingStage {
            stage,
            path: path.display().to_string(),
        })
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<(String, ScenarioConfig), PipelineError> {
    let text = read_text(path)?;
    let mut config = parse_scenario_config(&text).map_err(|source| PipelineError::Config {
        path: path.display().to_string(),
        source,
    })?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok((text, config))
}

/// Scenario of an existing session directory.
pub fn session_config(dir: &Path) -> Result<ScenarioConfig, PipelineError> {
    let manifest = RunManifest::load(&require(dir, SESSION_MANIFEST, "simulate")?)?;
    Ok(load_config(&require(dir, SESSION_CONFIG, "simulate")?, manifest.seed)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub cf_events: usize,
    pub sweeps: usize,
    pub mocap_samples: usize,
}

/// Simulates the scenario in `config_path` into `out`. The config is copied
/// verbatim next to the session files and a session manifest records the
/// effective seed.
pub fn simulate(config_path: &Path, out: &Path, seed: Option<u64>, estimator: Estimator) -> Result<SimulateSummary, PipelineError> {
    let (text, config) = load_config(config_path, seed)?;
    let session = simulate_session(&config)?;
    write_session(out, &session.bundle)?;
    write_text(&out.join(SESSION_CONFIG), &text)?;
    let manifest = RunManifest {
        config: SESSION_CONFIG.into(),
        output: ".".into(),
        estimator,
        seed: Some(config.seed),
        tool_version: TOOL_VERSION.into(),
    };
    write_text(&out.join(SESSION_MANIFEST), &manifest.to_text())?;
    Ok(SimulateSummary {
        cf_events: session.bundle.cf_events.len(),
        sweeps: session.bundle.sweeps().count(),
        mocap_samples: session.bundle.mocap.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub delta_gate: f64,
    pub epoch_window_us: u64,
    pub ekf: EkfConfig,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            delta_gate: DEFAULT_DELTA_GATE,
            epoch_window_us: DEFAULT_EPOCH_WINDOW_US,
            ekf: EkfConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub estimator: Estimator,
    pub estimates: usize,
    pub epochs: usize,
    /// Crossing beam: incomplete epochs. EKF: rejected measurements.
    pub rejected: usize,
}

fn sweeps_of(events: &[CfEvent]) -> Vec<SweepAngle> {
    events
        .iter()
        .filter_map(|e| match e {
            CfEvent::Sweep(s) => Some(*s),
            _ => None,
        })
        .collect()
}

/// Runs `estimator` over the session's sweeps and writes the position
/// stream (plus the per-epoch sidecar for the crossing beam).
pub fn estimate(dir: &Path, estimator: Estimator, options: &EstimateOptions) -> Result<EstimateSummary, PipelineError> {
    let config = session_config(dir)?;
    let events = read_cf_log(&require(dir, CF_LOG_FILE, "simulate")?)?;
    let sweeps = sweeps_of(&events);
    if sweeps.is_empty() {
        return Err(PipelineError::Data(format!("{}: session contains no sweep angles", dir.display())));
    }
    let [b0, b1] = &config.stations;
    let cb = CrossingBeam {
        delta_gate: options.delta_gate,
    };
    let solutions = cb.solve_stream(b0, b1, &sweeps, options.epoch_window_us);
    let (positions, epochs, rejected) = match estimator {
        Estimator::CrossingBeam => {
            write_text(&dir.join(EPOCHS_FILE), &tables::write_epochs(&solutions))?;
            let positions: Vec<CfEvent> = solutions
                .iter()
                .filter_map(|s| s.result.as_ref().ok())
                .map(|r| {
                    CfEvent::Position(CfSample {
                        timestamp_us: r.timestamp_us,
                        position: r.position,
                    })
                })
                .collect();
            let incomplete = solutions.len() - positions.len();
            (positions, solutions.len(), incomplete)
        }
        Estimator::Ekf => {
            let start = solutions
                .iter()
                .find_map(|s| s.result.as_ref().ok())
                .map_or(volume_centre(), |r| r.position);
            let t0 = sweeps[0].timestamp_us as f64 * 1e-6;
            let mut ekf = Ekf::new(EkfState::at_rest(start, 0.5, 0.1), t0, options.ekf);
            let out = ekf.run_stream(&sweeps, &config.stations, &config.deck, options.epoch_window_us);
            let positions = out
                .iter()
                .map(|o| {
                    CfEvent::Position(CfSample {
                        timestamp_us: o.timestamp_us,
                        position: o.state.position,
                    })
                })
                .collect();
            (positions, out.len(), ekf.rejected)
        }
    };
    write_cf_log(&dir.join(ESTIMATES_FILE), &positions)?;
    let summary = EstimateSummary {
        estimator,
        estimates: positions.len(),
        epochs,
        rejected,
    };
    write_text(
        &dir.join(ESTIMATE_INFO),
        &format!(
            "estimator = {}\nestimates = {}\nepochs = {}\nrejected = {}\n",
            estimator, summary.estimates, summary.epochs, summary.rejected
        ),
    )?;
    Ok(summary)
}

fn estimator_of(dir: &Path) -> Result<Estimator, PipelineError> {
    let mut kv = KeyValues::parse(&read_text(&require(dir, ESTIMATE_INFO, "estimate")?)?)?;
    Ok(kv.require("estimator")?.parse()?)
}

/// Aligns the estimates with the mocap stream and writes `aligned.tsv`.
pub fn align(dir: &Path, config: &AlignConfig) -> Result<AlignedDataset, PipelineError> {
    let estimator = estimator_of(dir)?;
    let estimates = read_cf_log(&require(dir, ESTIMATES_FILE, "estimate")?)?;
    let events = read_cf_log(&require(dir, CF_LOG_FILE, "simulate")?)?;
    let (mocap, _) = read_mocap(&require(dir, MOCAP_FILE, "simulate")?)?;
    let anchors = led_anchors(&events).ok_or(PipelineError::Data("session has no LED on/off markers".into()))?;
    let samples: Vec<CfSample> = estimates
        .iter()
        .filter_map(|e| match e {
            CfEvent::Position(p) => Some(*p),
            _ => None,
        })
        .collect();
    let ds = align_streams(&samples, anchors, &mocap, config)?;
    write_text(&dir.join(ALIGNED_FILE), &tables::write_aligned(&ds, estimator))?;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub delta_max: f64,
    pub visibility_window: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            delta_max: DEFAULT_DELTA_MAX,
            visibility_window: lhtrack_core::metrics::DEFAULT_VISIBILITY_WINDOW,
        }
    }
}

/// Filters the aligned dataset and writes the metric tables.
pub fn report(dir: &Path, options: &ReportOptions) -> Result<MetricsReport, PipelineError> {
    let (ds, estimator) = tables::read_aligned(&read_text(&require(dir, ALIGNED_FILE, "align")?)?)?;
    let config = session_config(dir)?;
    let events = read_cf_log(&require(dir, CF_LOG_FILE, "simulate")?)?;
    let mut info = EpochInfo {
        sweeps: sweeps_of(&events).iter().map(|s| (s.timestamp_us, s.base_station)).collect(),
        stations: config.stations.iter().map(|s| s.id).collect(),
        ..EpochInfo::default()
    };
    let mut policy = match estimator {
        Estimator::CrossingBeam => {
            info.epochs = tables::read_epochs(&read_text(&require(dir, EPOCHS_FILE, "estimate")?)?)?;
            FilterPolicy::crossing_beam()
        }
        Estimator::Ekf => FilterPolicy::ekf(),
    };
    if estimator == Estimator::CrossingBeam {
        policy.delta_max = options.delta_max;
    }
    policy.visibility_window = options.visibility_window;
    let report = match MetricsReport::compute(&ds, &policy, &info) {
        Err(lhtrack_core::Error::EmptyDataset) => return Err(PipelineError::EmptyAfterFiltering(estimator)),
        other => other?,
    };
    let (kept, _) = apply_filters(&ds, &policy, &info);
    write_text(&dir.join(REPORT_FILE), &tables::write_report(&report, &ds, estimator))?;
    write_text(&dir.join(SUMMARY_FILE), &tables::write_summary(&report, &ds, estimator))?;
    write_text(&dir.join(BOXPLOT_FILE), &tables::write_boxplot(&report, estimator))?;
    write_text(&dir.join(ACCURACY_FILE), &tables::write_accuracy(&kept.records, &report.accuracy.errors))?;
    Ok(report)
}

/// Every stage for one manifest, with default options.
pub fn run(manifest: &RunManifest) -> Result<MetricsReport, PipelineError> {
    simulate(&manifest.config, &manifest.output, manifest.seed, manifest.estimator)?;
    estimate(&manifest.output, manifest.estimator, &EstimateOptions::default())?;
    align(&manifest.output, &AlignConfig::default())?;
    report(&manifest.output, &ReportOptions::default())
}

/// Runs independent manifests on up to `jobs` threads. Results come back in
/// manifest order.
pub fn batch(manifests: &[RunManifest], jobs: usize) -> Vec<Result<MetricsReport, PipelineError>> {
    let mut outputs: Vec<&Path> = manifests.iter().map(|m| m.output.as_path()).collect();
    outputs.sort();
    if let Some(w) = outputs.windows(2).find(|w| w[0] == w[1]) {
        let msg = format!("{}: output directory shared by several manifests", w[0].display());
        return manifests.iter().map(|_| Err(PipelineError::Data(msg.clone()))).collect();
    }
    let jobs = jobs.max(1);
    let mut results: Vec<Option<Result<MetricsReport, PipelineError>>> = manifests.iter().map(|_| None).collect();
    for (chunk_manifests, chunk_results) in manifests.chunks(jobs).zip(results.chunks_mut(jobs)) {
        std::thread::scope(|s| {
            for (m, slot) in chunk_manifests.iter().zip(chunk_results.iter_mut()) {
                s.spawn(move || *slot = Some(run(m)));
            }
        });
    }
    results.into_iter().map(|r| r.expect("every job stores a result")).collect()
}
