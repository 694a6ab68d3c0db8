//! Command-line front end: run sweep experiments, fit layered networks,
//! sample planted instances, and score label files.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
//! malformed input, impossible parameters), 3 numerical failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use twist::clustering::{misclustering, KmeansConfig, Partition};
use twist::experiment::{run_experiment, write_csv, write_json, ExperimentConfig};
use twist::graph::{load_layered_edgelist, preprocess, write_layered_edgelist, LayeredGraph};
use twist::mmsbm::{planted_params, sample_labels, sample_tensor};
use twist::pipeline::{twist_pipeline, LayerClusterMethod};
use twist::power::{InitMethod, TwistConfig};
use twist::rng::derive_seed;
use twist::Error;

#[derive(Parser)]
#[command(name = "twist", version, about = "Community detection on multi-layer networks")]
struct Cli {
    /// Base RNG seed (overrides the seed in experiment configs).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for experiments; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Output format for results tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Init {
    /// Dominant subspace of the summed adjacency matrices.
    LayerSum,
    /// Dominant subspace of the mode-1 unfolding; survives structure
    /// that cancels under summation.
    Hosvd,
}

impl From<Init> for InitMethod {
    fn from(init: Init) -> Self {
        match init {
            Init::LayerSum => InitMethod::LayerSum,
            Init::Hosvd => InitMethod::Hosvd,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep experiment described by a key-value config file.
    Simulate {
        /// Experiment config file (`key = value` lines; `simulation = 1`..8
        /// loads a stock grid).
        config: PathBuf,
        /// Write the results table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cap replicates at 20 for a quick run.
        #[arg(long)]
        fast: bool,
    },
    /// Fit the model to a layered edge list; writes label and embedding files.
    Fit {
        /// Input edge list (TSV).
        input: PathBuf,
        /// Node and layer ranks as `R,M`.
        #[arg(long, value_name = "R,M")]
        ranks: String,
        /// Number of global node clusters; defaults to the node rank.
        #[arg(long)]
        global_k: Option<usize>,
        /// Per-class local community counts, comma separated; one value is
        /// repeated for every class. Defaults to the global cluster count.
        #[arg(long, value_name = "K1,..")]
        local_k: Option<String>,
        /// Drop edges lighter than this before anything else.
        #[arg(long, default_value_t = 0.0)]
        weight_min: f64,
        /// Drop layers whose largest connected component is smaller than this.
        #[arg(long, default_value_t = 0)]
        min_component: usize,
        /// Keep only nodes present in every surviving layer's largest component.
        #[arg(long)]
        intersect: bool,
        /// Cluster layers by sup-norm distance scanning instead of k-means.
        #[arg(long)]
        supnorm: bool,
        /// Distance threshold for --supnorm; auto-tuned when omitted.
        #[arg(long)]
        epsilon0: Option<f64>,
        /// Warm-start strategy for the node factor.
        #[arg(long, value_enum, default_value_t = Init::LayerSum)]
        init: Init,
        /// Prefix for the output files.
        #[arg(long, default_value = "fit")]
        out_prefix: PathBuf,
    },
    /// Sample a planted instance and write it as a layered edge list.
    Sample {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        layers: usize,
        /// Number of layer classes.
        #[arg(long)]
        classes: usize,
        /// Communities per class.
        #[arg(long)]
        communities: usize,
        /// Average degree of each layer.
        #[arg(long)]
        degree: f64,
        /// Out-in ratio (cross-community over within-community probability).
        #[arg(long)]
        ratio: f64,
        /// Allow self loops.
        #[arg(long)]
        self_loops: bool,
        /// Output edge-list path.
        #[arg(long)]
        out: PathBuf,
        /// Also write the true layer labels here.
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Compare two label files and print the misclustering rate.
    Eval {
        truth: PathBuf,
        estimate: PathBuf,
    },
}

/// A failed run, split by exit code: usage problems exit 1, everything
/// else follows the library error's code.
enum Failure {
    Usage(String),
    Tool(Error),
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::Tool(err)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Tool(err) => err.exit_code() as u8,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(msg) => msg.clone(),
            Failure::Tool(err) => err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        // Only fails if a global pool already exists, which cannot
        // happen this early in main.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate { config, out, fast } => simulate(&config, out.as_deref(), fast, seed, cli.format),
        Command::Fit {
            input,
            ranks,
            global_k,
            local_k,
            weight_min,
            min_component,
            intersect,
            supnorm,
            epsilon0,
            init,
            out_prefix,
        } => fit(FitArgs {
            input,
            ranks,
            global_k,
            local_k,
            weight_min,
            min_component,
            intersect,
            supnorm,
            epsilon0,
            init,
            out_prefix,
            seed: seed.unwrap_or(0),
        }),
        Command::Sample {
            nodes,
            layers,
            classes,
            communities,
            degree,
            ratio,
            self_loops,
            out,
            labels_out,
        } => sample(
            nodes,
            layers,
            classes,
            communities,
            degree,
            ratio,
            self_loops,
            &out,
            labels_out.as_deref(),
            seed.unwrap_or(0),
        ),
        Command::Eval { truth, estimate } => eval(&truth, &estimate),
    }
}

fn simulate(
    config_path: &Path,
    out: Option<&Path>,
    fast: bool,
    seed: Option<u64>,
    format: Format,
) -> Result<(), Failure> {
    let text = std::fs::read_to_string(config_path).map_err(Error::from)?;
    let mut config = ExperimentConfig::from_key_values(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if fast {
        config.replicates = config.replicates.min(20);
    }
    log::info!(
        "running {}: {} sweep values x {} replicates",
        config.name,
        config.values.len(),
        config.replicates
    );
    let rows = run_experiment(&config)?;
    let write = |out: &mut dyn Write| -> Result<(), Error> {
        match format {
            Format::Csv => write_csv(&rows, out),
            Format::Json => write_json(&rows, out),
        }
    };
    match out {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path).map_err(Error::from)?);
            write(&mut file)?;
            file.flush().map_err(Error::from)?;
        }
        None => write(&mut std::io::stdout().lock())?,
    }
    Ok(())
}

struct FitArgs {
    input: PathBuf,
    ranks: String,
    global_k: Option<usize>,
    local_k: Option<String>,
    weight_min: f64,
    min_component: usize,
    intersect: bool,
    supnorm: bool,
    epsilon0: Option<f64>,
    init: Init,
    out_prefix: PathBuf,
    seed: u64,
}

fn fit(args: FitArgs) -> Result<(), Failure> {
    let (r, m) = parse_ranks(&args.ranks)?;
    let graph = load_layered_edgelist(&args.input)?;
    let pre = preprocess(&graph, args.weight_min, args.min_component, args.intersect)?;
    let (n, _, l) = pre.tensor.dims();
    if r > n || m > l {
        return Err(Error::InvalidParameter(format!(
            "ranks {r},{m} exceed the preprocessed size ({n} nodes, {l} layers)"
        ))
        .into());
    }
    let kbar = args.global_k.unwrap_or(r);
    if kbar < 1 || kbar > n {
        return Err(Error::InvalidParameter(format!(
            "global cluster count {kbar} outside 1..={n}"
        ))
        .into());
    }
    let k_local = parse_local_k(args.local_k.as_deref(), m, kbar)?;
    if let Some(&bad) = k_local.iter().find(|&&k| k < 1 || k > n) {
        return Err(Error::InvalidParameter(format!(
            "local community count {bad} outside 1..={n}"
        ))
        .into());
    }

    let mut config = TwistConfig::new(r, m);
    config.init = args.init.into();
    let layer_method = if args.supnorm {
        LayerClusterMethod::Supnorm { epsilon0: args.epsilon0 }
    } else {
        LayerClusterMethod::Kmeans
    };
    let km = KmeansConfig { seed: args.seed, ..KmeansConfig::default() };
    let result = twist_pipeline(&pre.tensor, &config, layer_method, kbar, &k_local, &km)?;

    let prefix = args.out_prefix.display();
    write_labels(
        &format!("{prefix}.global.tsv"),
        pre.node_ids.iter(),
        result.global.labels(),
    )?;
    write_labels(
        &format!("{prefix}.layers.tsv"),
        pre.layer_names.iter(),
        result.layers.labels(),
    )?;
    for (class, local) in result.locals.iter().enumerate() {
        match local {
            Some(part) => write_labels(
                &format!("{prefix}.local-{}.tsv", class + 1),
                pre.node_ids.iter(),
                part.labels(),
            )?,
            None => log::warn!(
                "class {} has no layers; skipping its local label file",
                class + 1
            ),
        }
    }
    write_embedding(
        &format!("{prefix}.u.tsv"),
        pre.node_ids.iter(),
        result.embedding.u.matrix(),
    )?;
    write_embedding(
        &format!("{prefix}.w.tsv"),
        pre.layer_names.iter(),
        result.embedding.w.matrix(),
    )?;
    log::info!(
        "fit converged after {} iterations over {} nodes and {} layers",
        result.embedding.iterations_run,
        n,
        l
    );
    Ok(())
}

fn parse_ranks(s: &str) -> Result<(usize, usize), Failure> {
    let usage = || Failure::Usage(format!("--ranks expects `R,M` with 1 <= M <= R, got {s:?}"));
    let (r, m) = s.split_once(',').ok_or_else(usage)?;
    let r: usize = r.trim().parse().map_err(|_| usage())?;
    let m: usize = m.trim().parse().map_err(|_| usage())?;
    if m < 1 || m > r {
        return Err(usage());
    }
    Ok((r, m))
}

fn parse_local_k(spec: Option<&str>, m: usize, default: usize) -> Result<Vec<usize>, Failure> {
    let Some(spec) = spec else {
        return Ok(vec![default; m]);
    };
    let parsed: Vec<usize> = spec
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("--local-k expects integers, got {spec:?}")))?;
    match parsed.len() {
        1 => Ok(vec![parsed[0]; m]),
        len if len == m => Ok(parsed),
        len => Err(Failure::Usage(format!(
            "--local-k expects 1 or {m} values, got {len}"
        ))),
    }
}

fn write_labels<'a>(
    path: &str,
    ids: impl Iterator<Item = &'a String>,
    labels: &[usize],
) -> Result<(), Failure> {
    let mut out = BufWriter::new(File::create(path).map_err(Error::from)?);
    for (id, label) in ids.zip(labels) {
        writeln!(out, "{id}\t{label}").map_err(Error::from)?;
    }
    out.flush().map_err(Error::from)?;
    Ok(())
}

fn write_embedding<'a>(
    path: &str,
    ids: impl Iterator<Item = &'a String>,
    factor: &twist::tensor::DenseMatrix,
) -> Result<(), Failure> {
    let mut out = BufWriter::new(File::create(path).map_err(Error::from)?);
    for (i, id) in ids.enumerate() {
        write!(out, "{id}").map_err(Error::from)?;
        for j in 0..factor.ncols() {
            write!(out, "\t{}", factor[(i, j)]).map_err(Error::from)?;
        }
        writeln!(out).map_err(Error::from)?;
    }
    out.flush().map_err(Error::from)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sample(
    nodes: usize,
    layers: usize,
    classes: usize,
    communities: usize,
    degree: f64,
    ratio: f64,
    self_loops: bool,
    out: &Path,
    labels_out: Option<&Path>,
    seed: u64,
) -> Result<(), Failure> {
    let params = planted_params(
        nodes,
        classes,
        communities,
        degree,
        ratio,
        derive_seed(seed, 0, 0),
    )?;
    let labels = sample_labels(&params, layers, derive_seed(seed, 1, 0));
    let tensor = sample_tensor(&params, &labels, derive_seed(seed, 2, 0), self_loops);
    let graph = LayeredGraph::from_tensor(&tensor)?;
    write_layered_edgelist(&graph, out)?;
    if let Some(path) = labels_out {
        write_labels(
            &path.display().to_string(),
            graph.layer_names().iter(),
            labels.labels(),
        )?;
    }
    Ok(())
}

fn eval(truth_path: &Path, estimate_path: &Path) -> Result<(), Failure> {
    let truth = read_labels(truth_path)?;
    let estimate = read_labels(estimate_path)?;
    let (truth_labels, estimate_labels) = align_labels(truth, estimate)?;
    let truth_part = compact_partition(&truth_labels);
    let estimate_part = compact_partition(&estimate_labels);
    let (_, rate) = misclustering(&estimate_part, &truth_part);
    // Debug formatting keeps a decimal point on whole numbers.
    println!("{rate:?}");
    Ok(())
}

/// A parsed label file: `label` per line, or `id<TAB>label`.
struct LabelFile {
    ids: Option<Vec<String>>,
    labels: Vec<usize>,
}

fn read_labels(path: &Path) -> Result<LabelFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|err| {
        Failure::Tool(Error::InvalidParameter(format!("{}: {err}", path.display())))
    })?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut with_ids: Option<bool> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.trim();
        if stripped.is_empty() || stripped.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = stripped.split('\t').collect();
        let (id, label) = match fields.as_slice() {
            [label] => (None, *label),
            [id, label] => (Some(*id), *label),
            _ => {
                return Err(Error::Parse {
                    line,
                    message: "expected `label` or `id<TAB>label`".into(),
                }
                .into())
            }
        };
        match (with_ids, id.is_some()) {
            (None, present) => with_ids = Some(present),
            (Some(a), b) if a != b => {
                return Err(Error::Parse {
                    line,
                    message: "mixed one-column and two-column rows".into(),
                }
                .into())
            }
            _ => {}
        }
        let label: usize = label.trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid label {label:?}"),
        })?;
        if let Some(id) = id {
            ids.push(id.to_string());
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{}: no labels found",
            path.display()
        ))
        .into());
    }
    Ok(LabelFile {
        ids: if with_ids == Some(true) { Some(ids) } else { None },
        labels,
    })
}

/// Puts the two label sequences in a common order: by id when both files
/// carry ids, positionally otherwise.
fn align_labels(truth: LabelFile, estimate: LabelFile) -> Result<(Vec<usize>, Vec<usize>), Failure> {
    if let (Some(truth_ids), Some(est_ids)) = (&truth.ids, &estimate.ids) {
        let mut by_id = std::collections::HashMap::new();
        for (id, &label) in est_ids.iter().zip(&estimate.labels) {
            if by_id.insert(id.as_str(), label).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate id {id:?}")).into());
            }
        }
        if truth_ids.len() != est_ids.len() {
            return Err(Error::InvalidParameter(format!(
                "label files cover {} vs {} items",
                truth_ids.len(),
                est_ids.len()
            ))
            .into());
        }
        let mut est_aligned = Vec::with_capacity(truth_ids.len());
        for id in truth_ids {
            match by_id.get(id.as_str()) {
                Some(&label) => est_aligned.push(label),
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "id {id:?} missing from the second file"
                    ))
                    .into())
                }
            }
        }
        Ok((truth.labels, est_aligned))
    } else {
        if truth.labels.len() != estimate.labels.len() {
            return Err(Error::InvalidParameter(format!(
                "label files cover {} vs {} items",
                truth.labels.len(),
                estimate.labels.len()
            ))
            .into());
        }
        Ok((truth.labels, estimate.labels))
    }
}

/// Renumbers arbitrary label values to 1..=k by first appearance, which
/// is all the permutation-invariant misclustering score needs.
fn compact_partition(labels: &[usize]) -> Partition {
    let mut seen: Vec<usize> = Vec::new();
    let mut compact = Vec::with_capacity(labels.len());
    for &value in labels {
        let pos = match seen.iter().position(|&v| v == value) {
            Some(pos) => pos,
            None => {
                seen.push(value);
                seen.len() - 1
            }
        };
        compact.push(pos + 1);
    }
    Partition::new(compact, seen.len())
}
