//! Command-line driver for the graph-explanation toolkit: dataset
//! generation, classifier training, pruning, adversarial explanation runs,
//! candidate evaluation, and embedding reports.
//!
//! Every run writes a `run.json` manifest (command, tool version, seed,
//! configuration hash, input hashes, outputs) sufficient to reproduce it.
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric or
//! training failure.

use std::fmt::Display;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ganex::datasets::{
    gen_cyclicity_dataset, gen_molecular_dataset, gen_motif_dataset, gen_shape_dataset,
    load_mutag, motif_graph, CyclicityConfig, MolecularConfig, MotifConfig, ShapeConfig,
};
use ganex::explainer::{train_explainer, ExplainerConfig, ExplainerError, ExplanationCandidate};
use ganex::gnn::{load_checkpoint, save_checkpoint, train_gnn, GnnError, GnnTrainConfig};
use ganex::graph::{load_dataset, save_dataset, Graph, GraphDataset, GraphError};
use ganex::metrics::{score_candidate, ScoringContext};
use ganex::pruning::{prune_dataset, PruneConfig, PruneError};
use ganex::report::{
    embedding_centroid_distance, embedding_report, mean_top_v, to_dot, EmbeddingReport,
    ReportError, ScoreTableRow,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

// ---------------------------------------------------------------------------
// Configuration file.
// ---------------------------------------------------------------------------

/// Which dataset to generate (or load). In the TOML file this appears as a
/// section such as `[dataset.shape]` with that family's fields inside.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum DatasetSpec {
    Shape(ShapeConfig),
    Motif(MotifConfig),
    Cyclicity(CyclicityConfig),
    Molecular(MolecularConfig),
    /// Load the real molecular benchmark from its on-disk directory.
    Mutag { dir: PathBuf },
}

/// Root of the `--config` TOML file. Every section is optional and defaults
/// apply; unknown keys anywhere are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    dataset: Option<DatasetSpec>,
    gnn: GnnTrainConfig,
    explainer: ExplainerConfig,
    prune: PruneConfig,
}

// ---------------------------------------------------------------------------
// CLI surface.
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "ganex",
    version,
    about = "Train graph classifiers and explain them with adversarially generated graphs"
)]
struct Cli {
    /// TOML configuration file; omitted sections use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate (or import) a dataset defined by the config's [dataset.*] section.
    GenData {
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Train a classifier on a dataset and write a checkpoint plus report.
    TrainGnn {
        /// Dataset file (.jsonl).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Prune a dataset under a frozen classifier.
    Prune {
        #[arg(long)]
        data: PathBuf,
        /// Classifier checkpoint (.json).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train the explanation generator for one class and emit candidates.
    Explain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Target class index.
        #[arg(long)]
        class: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured number of final candidates.
        #[arg(long)]
        top_n: Option<usize>,
        /// Keep every scored candidate instead of applying the filter.
        #[arg(long)]
        no_filter: bool,
        #[arg(long)]
        force: bool,
    },
    /// Re-score saved candidates against a model and print a per-class table.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Candidate list produced by `explain` (candidates.json).
        #[arg(long)]
        candidates: PathBuf,
        /// Candidates per class entering the mean (default 10).
        #[arg(long)]
        top_n: Option<usize>,
        /// Also write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Project embeddings to 2D (fit on the reference dataset) and report
    /// motif-to-centroid distances.
    ReportEmbeddings {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Optional pruned counterpart of the dataset.
        #[arg(long)]
        pruned: Option<PathBuf>,
        /// Optional explanation candidates to project alongside.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

// ---------------------------------------------------------------------------
// Failure plumbing.
// ---------------------------------------------------------------------------

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Display) -> Failure {
    Failure { code, message: message.to_string() }
}

fn config_err(e: impl Display) -> Failure {
    fail(EXIT_CONFIG, e)
}

fn data_err(e: impl Display) -> Failure {
    fail(EXIT_DATA, e)
}

fn numeric_err(e: impl Display) -> Failure {
    fail(EXIT_NUMERIC, e)
}

fn classify_gnn(e: GnnError) -> Failure {
    match e {
        GnnError::Diverged { .. } => numeric_err(e),
        GnnError::Config(_) => config_err(e),
        other => data_err(other),
    }
}

fn classify_explainer(e: ExplainerError) -> Failure {
    match e {
        ExplainerError::Config(_) | ExplainerError::Domain(_) => config_err(e),
        ExplainerError::Numeric { .. } => numeric_err(e),
        other => data_err(other),
    }
}

fn classify_prune(e: PruneError) -> Failure {
    match e {
        PruneError::Config(_) => config_err(e),
        PruneError::Gnn(g) => classify_gnn(g),
        other => data_err(other),
    }
}

fn classify_report(e: ReportError) -> Failure {
    data_err(e)
}

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| config_err(format!("invalid config {}: {e}", path.display())))
}

fn prepare_out_dir(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out)
        .map_err(|e| data_err(format!("cannot create output directory {}: {e}", out.display())))
}

/// Refuse to clobber an existing file unless `--force` was given.
fn guard_overwrite(path: &Path, force: bool) -> Result<(), Failure> {
    if path.exists() && !force {
        return Err(config_err(format!(
            "refusing to overwrite {}; pass --force to allow it",
            path.display()
        )));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| data_err(format!("serialization failed: {e}")))?;
    fs::write(path, text)
        .map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn file_hash(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path)
        .map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

/// The self-describing record every command writes next to its outputs.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    tool_version: String,
    seed: Option<u64>,
    /// SHA-256 of the resolved configuration (after CLI overrides).
    config_hash: String,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
}

struct ManifestBuilder {
    command: String,
    seed: Option<u64>,
    config_hash: String,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
    notes: Option<String>,
}

impl ManifestBuilder {
    fn new(command: &str, seed: Option<u64>, cfg: &RunConfig) -> Self {
        let cfg_json = serde_json::to_vec(cfg).expect("config serializes");
        ManifestBuilder {
            command: command.to_string(),
            seed,
            config_hash: sha256_hex(&cfg_json),
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: None,
        }
    }

    fn input(&mut self, path: &Path) -> Result<(), Failure> {
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: file_hash(path)?,
        });
        Ok(())
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes = Some(text.into());
    }

    fn write(self, out_dir: &Path) -> Result<(), Failure> {
        let manifest = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config_hash: self.config_hash,
            inputs: self.inputs,
            outputs: self.outputs,
            notes: self.notes,
        };
        write_json(&out_dir.join("run.json"), &manifest)
    }
}

fn load_data(path: &Path) -> Result<GraphDataset, Failure> {
    load_dataset(path)
        .map_err(|e| data_err(format!("cannot load dataset {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ganex::gnn::GnnClassifier, Failure> {
    load_checkpoint(path)
        .map_err(|e| data_err(format!("cannot load checkpoint {}: {e}", path.display())))
}

fn load_candidates(path: &Path) -> Result<Vec<ExplanationCandidate>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| data_err(format!("cannot read candidates {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| data_err(format!("invalid candidates {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

fn cmd_gen_data(cfg: &RunConfig, seed: u64, out: &Path, force: bool) -> Result<(), Failure> {
    let Some(spec) = &cfg.dataset else {
        return Err(config_err(
            "gen-data needs a [dataset.<family>] section in the config file",
        ));
    };
    let ds = match spec {
        DatasetSpec::Shape(c) => gen_shape_dataset(c, seed),
        DatasetSpec::Motif(c) => gen_motif_dataset(c, seed),
        DatasetSpec::Cyclicity(c) => gen_cyclicity_dataset(c, seed),
        DatasetSpec::Molecular(c) => gen_molecular_dataset(c, seed),
        DatasetSpec::Mutag { dir } => load_mutag(dir),
    }
    .map_err(|e| match e {
        GraphError::Config(_) => config_err(e),
        other => data_err(other),
    })?;

    prepare_out_dir(out)?;
    let target = out.join("dataset.jsonl");
    guard_overwrite(&target, force)?;
    save_dataset(&target, &ds).map_err(data_err)?;

    let mut manifest = ManifestBuilder::new("gen-data", Some(seed), cfg);
    manifest.output(&target);
    if matches!(spec, DatasetSpec::Mutag { .. }) {
        manifest.note("dataset loaded from disk; the seed does not influence it");
    }
    manifest.write(out)?;
    println!(
        "wrote {} graphs across {} classes to {}",
        ds.len(),
        ds.class_count(),
        target.display()
    );
    Ok(())
}

fn cmd_train_gnn(
    cfg: &RunConfig,
    data: &Path,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<(), Failure> {
    let ds = load_data(data)?;
    let (model, report) = train_gnn(&ds, &cfg.gnn, seed).map_err(classify_gnn)?;

    prepare_out_dir(out)?;
    let ckpt = out.join("model.json");
    let report_path = out.join("train_report.json");
    guard_overwrite(&ckpt, force)?;
    guard_overwrite(&report_path, force)?;
    save_checkpoint(&ckpt, &model).map_err(classify_gnn)?;
    write_json(&report_path, &report)?;

    let mut manifest = ManifestBuilder::new("train-gnn", Some(seed), cfg);
    manifest.input(data)?;
    manifest.output(&ckpt);
    manifest.output(&report_path);
    manifest.write(out)?;
    println!(
        "trained {} epochs; train accuracy {:.3}, test accuracy {:.3}; checkpoint at {}",
        report.epoch_losses.len(),
        report.train_accuracy,
        report.test_accuracy,
        ckpt.display()
    );
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(())
}

fn cmd_prune(
    cfg: &RunConfig,
    data: &Path,
    model_path: &Path,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<(), Failure> {
    let ds = load_data(data)?;
    let model = load_model(model_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pruned = prune_dataset(&ds, &model, &cfg.prune, &mut rng).map_err(classify_prune)?;

    prepare_out_dir(out)?;
    let target = out.join("pruned.jsonl");
    guard_overwrite(&target, force)?;
    save_dataset(&target, &pruned).map_err(data_err)?;

    let mut manifest = ManifestBuilder::new("prune", Some(seed), cfg);
    manifest.input(data)?;
    manifest.input(model_path)?;
    manifest.output(&target);
    manifest.write(out)?;
    let before: usize = ds.graphs().iter().map(Graph::node_count).sum();
    let after: usize = pruned.graphs().iter().map(Graph::node_count).sum();
    println!(
        "pruned {} graphs: {} -> {} total nodes; wrote {}",
        ds.len(),
        before,
        after,
        target.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_explain(
    cfg: &RunConfig,
    data: &Path,
    model_path: &Path,
    class: usize,
    seed: u64,
    out: &Path,
    top_n: Option<usize>,
    no_filter: bool,
    force: bool,
) -> Result<(), Failure> {
    let ds = load_data(data)?;
    let model = load_model(model_path)?;
    if class >= ds.class_count() {
        return Err(config_err(format!(
            "class {class} out of range: dataset has {} classes",
            ds.class_count()
        )));
    }
    let mut explainer_cfg = cfg.explainer.clone();
    if let Some(n) = top_n {
        explainer_cfg.top_n = n;
    }
    if no_filter {
        explainer_cfg.filtering_enabled = false;
    }
    let resolved = RunConfig { explainer: explainer_cfg.clone(), ..cfg.clone() };

    let run =
        train_explainer(&model, &ds, class, &explainer_cfg, seed).map_err(classify_explainer)?;

    prepare_out_dir(out)?;
    let manifest_path = out.join("manifest.jsonl");
    let candidates_path = out.join("candidates.json");
    guard_overwrite(&manifest_path, force)?;
    guard_overwrite(&candidates_path, force)?;

    let mut lines = String::new();
    for record in &run.manifest {
        lines.push_str(
            &serde_json::to_string(record)
                .map_err(|e| data_err(format!("manifest serialization failed: {e}")))?,
        );
        lines.push('\n');
    }
    fs::write(&manifest_path, lines)
        .map_err(|e| data_err(format!("cannot write {}: {e}", manifest_path.display())))?;
    write_json(&candidates_path, &run.candidates)?;

    let mut manifest = ManifestBuilder::new("explain", Some(seed), &resolved);
    manifest.input(data)?;
    manifest.input(model_path)?;
    manifest.output(&manifest_path);
    manifest.output(&candidates_path);
    for (i, cand) in run.candidates.iter().enumerate() {
        let dot_path = out.join(format!("explanation_{i:03}.dot"));
        guard_overwrite(&dot_path, force)?;
        let dot = to_dot(&cand.graph, ds.node_category_names(), ds.edge_category_names());
        fs::write(&dot_path, dot)
            .map_err(|e| data_err(format!("cannot write {}: {e}", dot_path.display())))?;
        manifest.output(&dot_path);
    }
    manifest.note(format!(
        "target class {class}; iterations {}; pass rate {:.4}; degenerate {}; run config hash {}",
        run.iterations_completed, run.pass_rate, run.degenerate, run.config_hash
    ));
    manifest.write(out)?;

    println!(
        "explained class {class}: {} candidates after {} iterations (pass rate {:.3})",
        run.candidates.len(),
        run.iterations_completed,
        run.pass_rate
    );
    if run.degenerate {
        log::warn!(
            "run is degenerate: fewer than 5% of sampled graphs passed the filter; \
             consider raising lambda ramp time or loosening the filter"
        );
    }
    if let Some(reason) = run.diverged {
        return Err(numeric_err(format!("training diverged: {reason}")));
    }
    Ok(())
}

fn cmd_evaluate(
    cfg: &RunConfig,
    data: &Path,
    model_path: &Path,
    candidates_path: &Path,
    top_n: Option<usize>,
    out: Option<&Path>,
    force: bool,
) -> Result<(), Failure> {
    let ds = load_data(data)?;
    let model = load_model(model_path)?;
    let candidates = load_candidates(candidates_path)?;
    let n = top_n.unwrap_or(10);
    let dataset_name = data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| data.display().to_string());

    // Re-score every candidate from its graph alone, then summarize per class.
    let mut classes: Vec<usize> = candidates.iter().map(|c| c.graph.class_label()).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut rows = Vec::new();
    for class in classes {
        let ctx = ScoringContext::new(
            &model,
            &ds,
            class,
            cfg.explainer.filter.degree_sigma_multiplier,
        )
        .map_err(data_err)?;
        let rescored: Vec<ExplanationCandidate> = candidates
            .iter()
            .filter(|c| c.graph.class_label() == class)
            .map(|c| {
                score_candidate(&model, &c.graph, &ctx).map(|scores| ExplanationCandidate {
                    graph: c.graph.clone(),
                    scores,
                    iteration: c.iteration,
                    seed: c.seed,
                })
            })
            .collect::<Result<_, _>>()
            .map_err(data_err)?;
        rows.push(ScoreTableRow {
            dataset: dataset_name.clone(),
            class_label: class,
            class_name: ds
                .class_names()
                .get(class)
                .cloned()
                .unwrap_or_else(|| class.to_string()),
            candidates: rescored.len(),
            mean_top_v: mean_top_v(&rescored, n),
        });
    }

    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "{:<16} {:<6} {:<12} {:>10} {:>12}", "dataset", "class", "name", "candidates", "mean_top_v")
        .ok();
    for row in &rows {
        writeln!(
            w,
            "{:<16} {:<6} {:<12} {:>10} {:>12}",
            row.dataset,
            row.class_label,
            row.class_name,
            row.candidates,
            row.mean_top_v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
        )
        .ok();
    }

    if let Some(out) = out {
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| {
                    data_err(format!("cannot create {}: {e}", parent.display()))
                })?;
            }
        }
        guard_overwrite(out, force)?;
        write_json(out, &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CentroidDistanceRow {
    class_label: usize,
    class_name: String,
    reference: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pruned: Option<f64>,
}

#[derive(Serialize)]
struct EmbeddingArtifact {
    #[serde(flatten)]
    report: EmbeddingReport,
    centroid_distances: Vec<CentroidDistanceRow>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_report_embeddings(
    cfg: &RunConfig,
    data: &Path,
    model_path: &Path,
    pruned: Option<&Path>,
    candidates: Option<&Path>,
    out: &Path,
    force: bool,
) -> Result<(), Failure> {
    let ds = load_data(data)?;
    let model = load_model(model_path)?;
    let pruned_ds = pruned.map(load_data).transpose()?;
    let explanation_graphs: Option<Vec<Graph>> = candidates
        .map(load_candidates)
        .transpose()?
        .map(|cands| cands.into_iter().map(|c| c.graph).collect());

    // Bare motifs are meaningful only for datasets that annotate them.
    let has_motifs = ds.graphs().iter().any(|g| g.motif_nodes().is_some());
    let motifs: Option<Vec<Graph>> = if has_motifs {
        Some(
            (0..ds.class_count())
                .map(motif_graph)
                .collect::<Result<_, _>>()
                .map_err(data_err)?,
        )
    } else {
        None
    };

    let mut groups: Vec<(&str, &[Graph])> = Vec::new();
    if let Some(p) = &pruned_ds {
        groups.push(("pruned", p.graphs()));
    }
    if let Some(m) = &motifs {
        groups.push(("motifs", m));
    }
    if let Some(e) = &explanation_graphs {
        groups.push(("explanations", e));
    }
    let report = embedding_report(&model, &ds, &groups).map_err(classify_report)?;

    let mut centroid_distances = Vec::new();
    if let Some(m) = &motifs {
        for (class, motif) in m.iter().enumerate() {
            let reference = embedding_centroid_distance(&model, &ds, class, motif)
                .map_err(classify_report)?;
            let pruned_distance = pruned_ds
                .as_ref()
                .map(|p| embedding_centroid_distance(&model, p, class, motif))
                .transpose()
                .map_err(classify_report)?;
            centroid_distances.push(CentroidDistanceRow {
                class_label: class,
                class_name: ds
                    .class_names()
                    .get(class)
                    .cloned()
                    .unwrap_or_else(|| class.to_string()),
                reference,
                pruned: pruned_distance,
            });
        }
    }

    prepare_out_dir(out)?;
    let target = out.join("embeddings.json");
    guard_overwrite(&target, force)?;
    write_json(&target, &EmbeddingArtifact { report, centroid_distances })?;

    let mut manifest = ManifestBuilder::new("report-embeddings", None, cfg);
    manifest.input(data)?;
    manifest.input(model_path)?;
    if let Some(p) = pruned {
        manifest.input(p)?;
    }
    if let Some(c) = candidates {
        manifest.input(c)?;
    }
    manifest.output(&target);
    manifest.write(out)?;
    println!("wrote embedding report to {}", target.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry point.
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Cmd::GenData { seed, out, force } => cmd_gen_data(&cfg, seed, &out, force),
        Cmd::TrainGnn { data, seed, out, force } => {
            cmd_train_gnn(&cfg, &data, seed, &out, force)
        }
        Cmd::Prune { data, model, seed, out, force } => {
            cmd_prune(&cfg, &data, &model, seed, &out, force)
        }
        Cmd::Explain { data, model, class, seed, out, top_n, no_filter, force } => {
            cmd_explain(&cfg, &data, &model, class, seed, &out, top_n, no_filter, force)
        }
        Cmd::Evaluate { data, model, candidates, top_n, out, force } => {
            cmd_evaluate(&cfg, &data, &model, &candidates, top_n, out.as_deref(), force)
        }
        Cmd::ReportEmbeddings { data, model, pruned, candidates, out, force } => {
            cmd_report_embeddings(
                &cfg,
                &data,
                &model,
                pruned.as_deref(),
                candidates.as_deref(),
                &out,
                force,
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
