//! Simulation harness: sweep one model parameter, run the competing
//! methods on freshly sampled instances, and aggregate misclustering
//! rates into a results table.
//!
//! Every (sweep value, replicate) cell is seeded independently from the
//! experiment seed, so runs are reproducible and the table does not
//! depend on how work is scheduled across threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{hosvd_tucker, m3_spectral, sum_adj};
use crate::clustering::{kmeans, misclustering, KmeansConfig, Partition};
use crate::error::{Error, Result};
use crate::mmsbm::{
    global_membership, membership_svd, planted_params, sample_labels, sample_tensor,
};
use crate::power::{estimate_embedding, InitMethod, TwistConfig};
use crate::rng::derive_seed;

/// A community-detection method entered in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Full power-iteration pipeline.
    Twist,
    /// Spectral clustering of the summed adjacency matrices.
    SumAdj,
    /// One-shot orthogonal projections without regularization.
    HosvdTucker,
    /// Spectral clustering of the mode-3 unfolding.
    M3Sc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Twist => "twist",
            Method::SumAdj => "sum-adj",
            Method::HosvdTucker => "hosvd-tucker",
            Method::M3Sc => "m3-sc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "twist" => Ok(Method::Twist),
            "sum-adj" => Ok(Method::SumAdj),
            "hosvd-tucker" => Ok(Method::HosvdTucker),
            "m3-sc" => Ok(Method::M3Sc),
            other => Err(Error::InvalidParameter(format!(
                "unknown method {other:?}; expected one of twist, sum-adj, hosvd-tucker, m3-sc"
            ))),
        }
    }

    /// Whether the method can produce the given metric at all: summing
    /// adjacency matrices erases layer identity, and clustering the
    /// mode-3 unfolding only labels layers.
    pub fn supports(self, metric: Metric) -> bool {
        match self {
            Method::Twist | Method::HosvdTucker => true,
            Method::SumAdj => metric == Metric::Global,
            Method::M3Sc => metric == Metric::Layer,
        }
    }
}

/// Which misclustering rate an experiment reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Node-level global community recovery.
    Global,
    /// Layer-label recovery.
    Layer,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Global => "global",
            Metric::Layer => "layer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "global" => Ok(Metric::Global),
            "layer" => Ok(Metric::Layer),
            other => Err(Error::InvalidParameter(format!(
                "unknown metric {other:?}; expected global or layer"
            ))),
        }
    }
}

/// The model parameter swept across the x-axis of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    AvgDegree,
    OutInRatio,
    Layers,
    Nodes,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::AvgDegree => "d",
            SweepParam::OutInRatio => "alpha",
            SweepParam::Layers => "L",
            SweepParam::Nodes => "n",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "d" => Ok(SweepParam::AvgDegree),
            "alpha" => Ok(SweepParam::OutInRatio),
            "L" => Ok(SweepParam::Layers),
            "n" => Ok(SweepParam::Nodes),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep parameter {other:?}; expected one of d, alpha, L, n"
            ))),
        }
    }
}

/// Full description of one sweep experiment.
///
/// The swept parameter takes each entry of `values` in turn; the other
/// parameters stay at their base values. The per-class community count
/// is the same for every class, matching how the planted instances are
/// generated.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub nodes: usize,
    pub layers: usize,
    /// Number of layer classes.
    pub classes: usize,
    /// Communities per class.
    pub communities: usize,
    pub avg_degree: f64,
    pub out_in_ratio: f64,
    /// When set, the average degree is this fraction of the node count,
    /// overriding `avg_degree`; useful when sweeping `n` at constant
    /// density.
    pub degree_fraction: Option<f64>,
    pub sweep: SweepParam,
    pub values: Vec<f64>,
    pub metric: Metric,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub seed: u64,
}

/// Resolved per-instance shape after substituting one sweep value.
#[derive(Debug, Clone, Copy)]
struct InstanceShape {
    nodes: usize,
    layers: usize,
    avg_degree: f64,
    out_in_ratio: f64,
}

impl ExperimentConfig {
    /// The eight stock experiments. 1-4 sweep up the signal for global
    /// community detection (two communities per class); 5-8 do the same
    /// for layer-label recovery (three communities per class).
    pub fn simulation(which: usize) -> Result<Self> {
        let global_base = Self {
            name: format!("sim{which}"),
            nodes: 600,
            layers: 20,
            classes: 3,
            communities: 2,
            avg_degree: 10.0,
            out_in_ratio: 0.4,
            degree_fraction: None,
            sweep: SweepParam::AvgDegree,
            values: Vec::new(),
            metric: Metric::Global,
            methods: vec![Method::Twist, Method::HosvdTucker, Method::SumAdj],
            replicates: 100,
            seed: 0,
        };
        let layer_base = Self {
            communities: 3,
            out_in_ratio: 0.6,
            metric: Metric::Layer,
            methods: vec![Method::Twist, Method::HosvdTucker, Method::M3Sc],
            ..global_base.clone()
        };
        let int_range = |lo: usize, hi: usize, step: usize| -> Vec<f64> {
            (lo..=hi).step_by(step).map(|v| v as f64).collect()
        };
        let cfg = match which {
            1 => Self { values: int_range(2, 20, 1), ..global_base },
            2 => Self {
                sweep: SweepParam::OutInRatio,
                values: (1..=8).map(|i| i as f64 / 10.0).collect(),
                ..global_base
            },
            3 => Self {
                out_in_ratio: 0.6,
                sweep: SweepParam::Layers,
                values: int_range(10, 60, 10),
                ..global_base
            },
            4 => Self {
                out_in_ratio: 0.6,
                sweep: SweepParam::Nodes,
                values: int_range(100, 1200, 100),
                ..global_base
            },
            5 => Self { values: int_range(3, 30, 3), ..layer_base },
            6 => Self {
                layers: 30,
                sweep: SweepParam::OutInRatio,
                values: (1..=9).map(|i| i as f64 / 10.0).collect(),
                ..layer_base
            },
            7 => Self {
                layers: 30,
                sweep: SweepParam::Layers,
                values: int_range(20, 80, 10),
                ..layer_base
            },
            8 => Self {
                layers: 30,
                degree_fraction: Some(0.02),
                sweep: SweepParam::Nodes,
                values: int_range(100, 1200, 100),
                ..layer_base
            },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown simulation id {other}; expected 1-8"
                )))
            }
        };
        Ok(cfg)
    }

    /// Parses a flat `key = value` config file. A `simulation` key loads
    /// the corresponding stock experiment as the starting point; all
    /// other keys override individual fields. Without `simulation`, the
    /// structural fields (`n`, `L`, `m`, `K`, `sweep`, `values`,
    /// `metric`, `methods`) are required.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut seen = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.trim();
            if stripped.is_empty() || stripped.starts_with('#') {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or(Error::Parse {
                line,
                message: "expected key = value".into(),
            })?;
            let key = key.trim().to_string();
            if seen.contains(&key) {
                return Err(Error::Parse { line, message: format!("duplicate key {key:?}") });
            }
            seen.push(key.clone());
            pairs.push((line, key, value.trim().to_string()));
        }

        let parse_err = |line: usize, what: &str, value: &str| Error::Parse {
            line,
            message: format!("invalid {what}: {value:?}"),
        };
        let preset = pairs.iter().find(|(_, key, _)| key == "simulation");
        let mut cfg = match preset {
            Some(&(line, _, ref value)) => {
                let which: usize =
                    value.parse().map_err(|_| parse_err(line, "simulation id", value))?;
                Self::simulation(which).map_err(|e| Error::Parse { line, message: e.to_string() })?
            }
            None => Self {
                name: "custom".into(),
                nodes: 0,
                layers: 0,
                classes: 0,
                communities: 0,
                avg_degree: f64::NAN,
                out_in_ratio: f64::NAN,
                degree_fraction: None,
                sweep: SweepParam::AvgDegree,
                values: Vec::new(),
                metric: Metric::Global,
                methods: Vec::new(),
                replicates: 100,
                seed: 0,
            },
        };

        let custom = preset.is_none();
        let mut required = vec!["n", "L", "m", "K", "sweep", "values", "metric", "methods"];
        for (line, key, value) in &pairs {
            let line = *line;
            required.retain(|k| k != key);
            match key.as_str() {
                "simulation" => {}
                "name" => cfg.name = value.clone(),
                "n" => cfg.nodes = value.parse().map_err(|_| parse_err(line, "n", value))?,
                "L" => cfg.layers = value.parse().map_err(|_| parse_err(line, "L", value))?,
                "m" => cfg.classes = value.parse().map_err(|_| parse_err(line, "m", value))?,
                "K" => {
                    cfg.communities = value.parse().map_err(|_| parse_err(line, "K", value))?
                }
                "d" => cfg.avg_degree = value.parse().map_err(|_| parse_err(line, "d", value))?,
                "alpha" => {
                    cfg.out_in_ratio = value.parse().map_err(|_| parse_err(line, "alpha", value))?
                }
                "d_fraction" => {
                    cfg.degree_fraction =
                        Some(value.parse().map_err(|_| parse_err(line, "d_fraction", value))?)
                }
                "sweep" => {
                    cfg.sweep = SweepParam::parse(value)
                        .map_err(|e| Error::Parse { line, message: e.to_string() })?
                }
                "values" => {
                    cfg.values = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| parse_err(line, "values list", value))?
                }
                "metric" => {
                    cfg.metric = Metric::parse(value)
                        .map_err(|e| Error::Parse { line, message: e.to_string() })?
                }
                "methods" => {
                    cfg.methods = value
                        .split(',')
                        .map(Method::parse)
                        .collect::<Result<_>>()
                        .map_err(|e| Error::Parse { line, message: e.to_string() })?
                }
                "replicates" => {
                    cfg.replicates =
                        value.parse().map_err(|_| parse_err(line, "replicates", value))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| parse_err(line, "seed", value))?,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }

        if custom {
            // The swept parameter and degree fraction stand in for their
            // base keys.
            required.retain(|k| *k != cfg.sweep.name());
            if cfg.degree_fraction.is_some() {
                required.retain(|k| *k != "d");
            }
            if cfg.avg_degree.is_nan() && !required.contains(&"d") {
                cfg.avg_degree = 0.0; // never read: d is swept or derived
            }
            if !required.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "custom experiment is missing keys: {}",
                    required.join(", ")
                )));
            }
            if cfg.out_in_ratio.is_nan() && cfg.sweep != SweepParam::OutInRatio {
                return Err(Error::InvalidParameter(
                    "custom experiment is missing keys: alpha".into(),
                ));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one value".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("method list is empty".into()));
        }
        for (i, &m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(&m) {
                return Err(Error::InvalidParameter(format!(
                    "method {} listed twice",
                    m.name()
                )));
            }
            if !m.supports(self.metric) {
                return Err(Error::InvalidParameter(format!(
                    "method {} cannot report the {} metric",
                    m.name(),
                    self.metric.name()
                )));
            }
        }
        if let Some(f) = self.degree_fraction {
            if !(f > 0.0) {
                return Err(Error::InvalidParameter(
                    "degree fraction must be positive".into(),
                ));
            }
        }
        // Validate every instance shape up front so an impossible grid
        // fails before any sampling starts. Per-value signal strength
        // (e.g. an infeasible degree) is still a per-cell concern.
        for &value in &self.values {
            self.instance(value)?;
        }
        Ok(())
    }

    fn instance(&self, value: f64) -> Result<InstanceShape> {
        let as_count = |what: &str, v: f64| -> Result<usize> {
            if v < 1.0 || v.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{what} must be a positive integer, got {v}"
                )));
            }
            Ok(v as usize)
        };
        let mut shape = InstanceShape {
            nodes: self.nodes,
            layers: self.layers,
            avg_degree: self.avg_degree,
            out_in_ratio: self.out_in_ratio,
        };
        match self.sweep {
            SweepParam::AvgDegree => shape.avg_degree = value,
            SweepParam::OutInRatio => shape.out_in_ratio = value,
            SweepParam::Layers => shape.layers = as_count("L", value)?,
            SweepParam::Nodes => shape.nodes = as_count("n", value)?,
        }
        if let Some(f) = self.degree_fraction {
            shape.avg_degree = f * shape.nodes as f64;
        }
        if shape.layers < self.classes {
            return Err(Error::InvalidParameter(format!(
                "L={} is smaller than the class count m={}",
                shape.layers, self.classes
            )));
        }
        if shape.nodes < self.classes * self.communities {
            return Err(Error::InvalidParameter(format!(
                "n={} is too small for m={} classes of K={} communities",
                shape.nodes, self.classes, self.communities
            )));
        }
        Ok(shape)
    }
}

/// One row of the results table: the aggregated error of one method at
/// one sweep value. `mean`/`stderr` are absent when every replicate
/// failed; `replicates` counts the successful ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_param: String,
    pub value: f64,
    pub method: String,
    pub metric: String,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub replicates: usize,
}

/// Runs the full sweep. Cells are processed in parallel; the table is
/// assembled by (value, replicate) key, so the output is identical for
/// any thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let tasks: Vec<(usize, usize)> = (0..config.values.len())
        .flat_map(|vi| (0..config.replicates).map(move |rep| (vi, rep)))
        .collect();
    let mut outcomes: Vec<((usize, usize), Vec<Option<f64>>)> = tasks
        .into_par_iter()
        .map(|(vi, rep)| ((vi, rep), replicate_errors(config, vi, rep)))
        .collect();
    outcomes.sort_unstable_by_key(|&(key, _)| key);

    let reps = config.replicates;
    let mut rows = Vec::with_capacity(config.values.len() * config.methods.len());
    for (vi, &value) in config.values.iter().enumerate() {
        let cell = &outcomes[vi * reps..(vi + 1) * reps];
        for (mi, &method) in config.methods.iter().enumerate() {
            let samples: Vec<f64> =
                cell.iter().filter_map(|(_, errors)| errors[mi]).collect();
            rows.push(summarize(config, value, method, &samples));
        }
    }
    Ok(rows)
}

fn summarize(
    config: &ExperimentConfig,
    value: f64,
    method: Method,
    samples: &[f64],
) -> ResultRow {
    let count = samples.len();
    let (mean, stderr) = if count == 0 {
        (None, None)
    } else {
        let mean = samples.iter().sum::<f64>() / count as f64;
        let stderr = if count < 2 {
            0.0
        } else {
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (count as f64 - 1.0);
            (var / count as f64).sqrt()
        };
        (Some(mean), Some(stderr))
    };
    ResultRow {
        sweep_param: config.sweep.name().into(),
        value,
        method: method.name().into(),
        metric: config.metric.name().into(),
        mean,
        stderr,
        replicates: count,
    }
}

/// Errors of every method on one sampled instance, aligned with
/// `config.methods`; `None` marks a failure of that method alone. A
/// failure to generate the instance fails every method of the cell.
fn replicate_errors(config: &ExperimentConfig, value_idx: usize, rep: usize) -> Vec<Option<f64>> {
    let seed = derive_seed(config.seed, value_idx as u64, rep as u64);
    let value = config.values[value_idx];
    match run_replicate(config, value, seed) {
        Ok(errors) => errors,
        Err(err) => {
            log::warn!(
                "replicate {rep} at {}={value} could not be generated: {err}",
                config.sweep.name()
            );
            vec![None; config.methods.len()]
        }
    }
}

fn run_replicate(config: &ExperimentConfig, value: f64, seed: u64) -> Result<Vec<Option<f64>>> {
    let shape = config.instance(value)?;
    let params = planted_params(
        shape.nodes,
        config.classes,
        config.communities,
        shape.avg_degree,
        shape.out_in_ratio,
        derive_seed(seed, 0, 0),
    )?;
    let labels = sample_labels(&params, shape.layers, derive_seed(seed, 1, 0));
    let a = sample_tensor(&params, &labels, derive_seed(seed, 2, 0), false);
    let truth = match config.metric {
        Metric::Global => global_membership(&params),
        Metric::Layer => labels.as_partition(config.classes),
    };
    let kbar = global_membership(&params).k();
    let r = membership_svd(&params)?.rank;

    let mut errors = Vec::with_capacity(config.methods.len());
    for (mi, &method) in config.methods.iter().enumerate() {
        let km = KmeansConfig { seed: derive_seed(seed, 3, mi as u64), ..KmeansConfig::default() };
        match method_partition(method, config, &a, r, kbar, &km) {
            Ok(part) => errors.push(Some(misclustering(&part, &truth).1)),
            Err(err) => {
                log::warn!("method {} failed: {err}", method.name());
                errors.push(None);
            }
        }
    }
    Ok(errors)
}

fn method_partition(
    method: Method,
    config: &ExperimentConfig,
    a: &crate::tensor::Tensor3,
    r: usize,
    kbar: usize,
    km: &KmeansConfig,
) -> Result<Partition> {
    let m = config.classes;
    match method {
        Method::SumAdj => sum_adj(a, kbar, km),
        Method::M3Sc => m3_spectral(a, m, km),
        Method::Twist | Method::HosvdTucker => {
            // The squared-slice warm start survives the occasional layer
            // class whose summed signal sits below the noise edge, where
            // the plain layer-sum start loses that direction for good.
            let twist_config =
                TwistConfig { init: InitMethod::Hosvd, ..TwistConfig::new(r, m) };
            let embedding = if method == Method::Twist {
                estimate_embedding(a, &twist_config)?
            } else {
                hosvd_tucker(a, &twist_config)?
            };
            let part = match config.metric {
                Metric::Global => kmeans(embedding.u.matrix(), kbar, km),
                Metric::Layer => kmeans(embedding.w.matrix(), m, km),
            };
            Ok(part)
        }
    }
}

/// Serializes rows as CSV with a fixed header. Missing means render as
/// empty fields.
pub fn write_csv<W: std::io::Write + ?Sized>(rows: &[ResultRow], out: &mut W) -> Result<()> {
    writeln!(out, "sweep_param,value,method,metric,mean,stderr,replicates")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.sweep_param,
            row.value,
            row.method,
            row.metric,
            opt(row.mean),
            opt(row.stderr),
            row.replicates
        )?;
    }
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

/// Serializes rows as a pretty-printed JSON array; missing means become
/// nulls.
pub fn write_json<W: std::io::Write + ?Sized>(rows: &[ResultRow], out: &mut W) -> Result<()> {
    let text = serde_json::to_string_pretty(rows).expect("rows are serializable");
    writeln!(out, "{text}")?;
    Ok(())
}
