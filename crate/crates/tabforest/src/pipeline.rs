//! End-to-end pipeline orchestration behind the `tabforest` CLI.
//!
//! [`run_pipeline`] executes the full screening experiment into a run
//! directory: generate (or ingest) → sanitize → derive age → drop columns →
//! binarize → impute → split → scale → balance → tune → train → evaluate →
//! importance → boruta → post-selection refits → group models → pca study →
//! report tables → manifest. Imputation before the split leaks test
//! information into training; that is the source experiment's order and the
//! default here, with `split_first` as the leak-free alternative (the
//! manifest records whichever order ran).
//!
//! Every stage seed derives from the one master seed, no output contains a
//! timestamp, and the manifest hashes each artifact, so identical configs
//! produce byte-identical run directories.

use crate::balance::{smote_with_report, SmoteConfig, SmoteTarget};
use crate::dataset::{
    self, binarize_diagnosis, drop_columns, load_csv, merge_on_key, sanitize, split_stratified,
    write_csv, write_schema_file, DatasetError, MissingMarkers, Table, POSITIVE_CLASS,
};
use crate::eval::{self, EvalReport};
use crate::forest::{fit_forest, oob_error, tune_mtry, ForestConfig, Mtry, RandomForest};
use crate::impute::{missforest, ImputeConfig};
use crate::pca;
use crate::rng::{derive_seed, tag};
use crate::select::{boruta, permutation_importance, BorutaConfig, BorutaDecision, ImportanceConfig, LossKind};
use crate::synthgen::{self, generate_cohort, CohortConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_FORMAT: &str = "tabforest.manifest.v1";
pub const EVAL_FORMAT: &str = "tabforest.eval.v1";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage seed derives from it.
    pub seed: u64,
    /// Worker threads for tree fitting; 0 keeps the global default.
    pub threads: usize,
    /// Report the scaled variant (instead of original) in report.txt/roc.csv.
    pub scale: bool,
    /// Split before imputing and impute each side separately (leak-free).
    pub split_first: bool,
    pub input: InputConfig,
    pub prep: PrepConfig,
    pub impute: ImputeSettings,
    pub smote: SmoteSettings,
    pub forest: ForestSettings,
    pub tune: TuneSettings,
    pub importance: ImportanceSettings,
    pub boruta: BorutaSettings,
    pub pca: PcaSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            threads: 0,
            scale: false,
            split_first: false,
            input: InputConfig::default(),
            prep: PrepConfig::default(),
            impute: ImputeSettings::default(),
            smote: SmoteSettings::default(),
            forest: ForestSettings::default(),
            tune: TuneSettings::default(),
            importance: ImportanceSettings::default(),
            boruta: BorutaSettings::default(),
            pca: PcaSettings::default(),
        }
    }
}

/// Data source: the bundled synthetic cohort generator, or CSV files merged
/// on a key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// "synth" or "files".
    pub mode: String,
    pub files: Vec<String>,
    pub schema: String,
    pub merge_keys: Vec<String>,
    pub synth: SynthSettings,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            mode: "synth".to_string(),
            files: vec![],
            schema: String::new(),
            merge_keys: vec![],
            synth: SynthSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub n_subjects: usize,
    pub missing_rate: f64,
    pub class_balance: f64,
    pub neuropsych_signal: f64,
    pub nuisance_signal: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let c = CohortConfig::default();
        SynthSettings {
            n_subjects: c.n_subjects,
            missing_rate: c.missing_rate,
            class_balance: c.class_balance,
            neuropsych_signal: c.neuropsych_signal,
            nuisance_signal: c.nuisance_signal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    /// Columns to remove after sanitizing (superfluous/personal columns are
    /// a config choice, never hard-coded).
    pub drop: Vec<String>,
    pub birthdate_col: String,
    pub examdate_col: String,
    pub split_fraction: f64,
    pub extra_missing_markers: Vec<String>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            drop: vec![],
            birthdate_col: String::new(),
            examdate_col: String::new(),
            split_fraction: 0.7,
            extra_missing_markers: vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeSettings {
    pub ntree: usize,
    pub max_iter: usize,
}

impl Default for ImputeSettings {
    fn default() -> Self {
        let c = ImputeConfig::default();
        ImputeSettings { ntree: c.ntree, max_iter: c.max_iter }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteSettings {
    pub k_neighbors: usize,
}

impl Default for SmoteSettings {
    fn default() -> Self {
        SmoteSettings { k_neighbors: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSettings {
    pub ntree: usize,
    pub min_node_size: usize,
    /// 0 means unlimited depth.
    pub max_depth: usize,
}

impl Default for ForestSettings {
    fn default() -> Self {
        ForestSettings { ntree: 500, min_node_size: 1, max_depth: 0 }
    }
}

impl ForestSettings {
    fn to_config(&self, mtry: Mtry, seed: u64) -> ForestConfig {
        ForestConfig {
            ntree: self.ntree,
            mtry,
            min_node_size: self.min_node_size,
            max_depth: (self.max_depth > 0).then_some(self.max_depth),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSettings {
    pub grid: Vec<usize>,
}

impl Default for TuneSettings {
    fn default() -> Self {
        TuneSettings { grid: (1..=10).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceSettings {
    pub n_permutations: usize,
    /// "accuracy" or "auc".
    pub loss: String,
}

impl Default for ImportanceSettings {
    fn default() -> Self {
        ImportanceSettings { n_permutations: 50, loss: "accuracy".to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BorutaSettings {
    pub ntree: usize,
    pub max_rounds: usize,
    pub alpha: f64,
    /// Drop the Rejected features before the post-selection refit.
    pub drop_rejected: bool,
}

impl Default for BorutaSettings {
    fn default() -> Self {
        BorutaSettings { ntree: 500, max_rounds: 20, alpha: 0.05, drop_rejected: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSettings {
    pub ks: Vec<usize>,
}

impl Default for PcaSettings {
    fn default() -> Self {
        PcaSettings { ks: vec![1, 2, 3, 5, 8, 10, 15, 20, 25, 30] }
    }
}

/// Read a pipeline config from TOML; missing keys take defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig, PipelineError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| PipelineError::Config(format!("cannot read config: {e}")))?;
    toml::from_str(&text).map_err(|e| PipelineError::Config(format!("bad config: {e}")))
}

pub fn save_config(config: &PipelineConfig, path: impl AsRef<Path>) -> Result<(), PipelineError> {
    let text = toml::to_string_pretty(config)
        .map_err(|e| PipelineError::Config(format!("cannot serialize config: {e}")))?;
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum PipelineError {
    /// Invalid configuration (CLI exit code 2).
    Config(String),
    /// Input data problem (CLI exit code 3).
    Data(DatasetError),
    /// A pipeline stage failed (CLI exit code 4).
    Stage { stage: String, message: String },
    /// emit_reports on an incomplete run directory.
    MissingStage { stage: String, artifact: String },
    Io(std::io::Error),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Config(msg) => write!(f, "config error: {msg}"),
            PipelineError::Data(e) => write!(f, "data error: {e}"),
            PipelineError::Stage { stage, message } => {
                write!(f, "stage `{stage}` failed: {message}")
            }
            PipelineError::MissingStage { stage, artifact } => {
                write!(f, "stage `{stage}` incomplete: missing artifact `{artifact}`")
            }
            PipelineError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e)
    }
}

impl From<DatasetError> for PipelineError {
    fn from(e: DatasetError) -> Self {
        PipelineError::Data(e)
    }
}

impl PipelineError {
    /// Process exit code contract: 0 ok, 2 config, 3 data, 4 stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            _ => 4,
        }
    }
}

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

/// Which preprocessing flavour produced a training table.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Variant {
    Original,
    Scaled,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Scaled => "scaled",
        }
    }
}

pub struct RunSummary {
    pub out_dir: PathBuf,
    pub stages: Vec<String>,
    /// Tuned-model evaluation of the variant selected by `config.scale`.
    pub headline: EvalReport,
    pub best_mtry_original: usize,
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    out: PathBuf,
    stages: Vec<String>,
}

impl<'a> Runner<'a> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Self) -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        match f(self) {
            Ok(v) => {
                self.stages.push(name.to_string());
                Ok(v)
            }
            Err(e) => {
                // keep partial outputs, flag the failure and where it happened
                let message = format!("FAILED at stage: {name}\n{e}\n");
                let _ = std::fs::write(self.out.join("FAILED"), message);
                match e {
                    PipelineError::Config(_) | PipelineError::Data(_) => Err(e),
                    other => Err(PipelineError::Stage {
                        stage: name.to_string(),
                        message: other.to_string(),
                    }),
                }
            }
        }
    }

    fn seed_for(&self, stage: &str) -> u64 {
        derive_seed(self.config.seed, tag(stage))
    }
}

/// Execute the full pipeline into `out_dir` (created if absent).
pub fn run_pipeline(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<RunSummary, PipelineError> {
    validate_config(config)?;
    let out = out_dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&out)?;

    let mut r = Runner { config, out, stages: Vec::new() };

    // -- input -------------------------------------------------------------
    let raw = if config.input.mode == "synth" {
        r.stage("generate", |r| {
            let cohort_config = CohortConfig {
                n_subjects: config.input.synth.n_subjects,
                seed: config.seed,
                missing_rate: config.input.synth.missing_rate,
                class_balance: config.input.synth.class_balance,
                neuropsych_signal: config.input.synth.neuropsych_signal,
                nuisance_signal: config.input.synth.nuisance_signal,
            };
            let (table, truth) = generate_cohort(&cohort_config)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            write_csv(&table, r.path("cohort.csv"))?;
            write_schema_file(table.schema(), r.path("schema.toml"))?;
            write_truth_files(&truth, &r.out)?;
            Ok(table)
        })?
    } else {
        r.stage("ingest", |r| {
            let schema = dataset::read_schema_file(&config.input.schema)?;
            let markers = MissingMarkers::with_extra(&config.prep.extra_missing_markers);
            let mut tables = Vec::new();
            for f in &config.input.files {
                tables.push(load_csv(f, &schema, &markers)?);
            }
            let table = if tables.len() == 1 {
                tables.pop().expect("one table")
            } else {
                let (merged, report) = merge_on_key(&tables, &config.input.merge_keys)?;
                std::fs::write(
                    r.path("join_report.txt"),
                    format!("rows_dropped_per_input = {:?}\n", report.dropped_per_table),
                )?;
                merged
            };
            write_csv(&table, r.path("ingested.csv"))?;
            write_schema_file(table.schema(), r.path("schema.toml"))?;
            Ok(table)
        })?
    };

    // -- prep ----------------------------------------------------------------
    let cleaned = r.stage("sanitize", |r| {
        let (clean, report) = sanitize(&raw);
        let mut text = String::new();
        let _ = writeln!(text, "total_replaced = {}", report.total());
        for (col, n) in &report.replaced {
            let _ = writeln!(text, "{col} = {n}");
        }
        std::fs::write(r.path("sanitize_report.txt"), text)?;
        write_csv(&clean, r.path("sanitized.csv"))?;
        Ok(clean)
    })?;

    let aged = if !config.prep.birthdate_col.is_empty() && !config.prep.examdate_col.is_empty() {
        r.stage("derive_age", |r| {
            let (table, report) =
                dataset::derive_age(&cleaned, &config.prep.birthdate_col, &config.prep.examdate_col)?;
            std::fs::write(
                r.path("age_report.txt"),
                format!("invalid_chronology_rows = {:?}\n", report.invalid_chronology_rows),
            )?;
            write_csv(&table, r.path("with_age.csv"))?;
            Ok(table)
        })?
    } else {
        cleaned
    };

    let slim = if config.prep.drop.is_empty() {
        aged
    } else {
        r.stage("drop_columns", |r| {
            let table = drop_columns(&aged, &config.prep.drop, false)?;
            write_csv(&table, r.path("dropped.csv"))?;
            Ok(table)
        })?
    };

    let binarized = r.stage("binarize", |r| {
        let table = binarize_diagnosis(&slim)?;
        write_csv(&table, r.path("binarized.csv"))?;
        Ok(table)
    })?;

    // -- impute / split (order depends on the leak flag) ---------------------
    let impute_config = ImputeConfig {
        ntree: config.impute.ntree,
        max_iter: config.impute.max_iter,
        seed: r.seed_for("stage-impute"),
    };
    let split_seed = r.seed_for("stage-split");

    let (train_raw, test_raw) = if config.split_first {
        let (train_part, test_part) = r.stage("split", |r| {
            let (a, b) = split_stratified(&binarized, config.prep.split_fraction, split_seed)?;
            write_csv(&a, r.path("train_presplit.csv"))?;
            write_csv(&b, r.path("test_presplit.csv"))?;
            Ok((a, b))
        })?;
        r.stage("impute", |r| {
            let train = missforest(
                &train_part,
                &ImputeConfig { seed: derive_seed(impute_config.seed, 0), ..impute_config.clone() },
            )
            .map_err(|e| PipelineError::Stage { stage: "impute".into(), message: e.to_string() })?;
            let test = missforest(
                &test_part,
                &ImputeConfig { seed: derive_seed(impute_config.seed, 1), ..impute_config.clone() },
            )
            .map_err(|e| PipelineError::Stage { stage: "impute".into(), message: e.to_string() })?;
            write_impute_trace(&r.path("impute_trace.txt"), &[&train, &test])?;
            write_csv(&train.table, r.path("train.csv"))?;
            write_csv(&test.table, r.path("test.csv"))?;
            Ok((train.table, test.table))
        })?
    } else {
        let imputed = r.stage("impute", |r| {
            let result = missforest(&binarized, &impute_config).map_err(|e| {
                PipelineError::Stage { stage: "impute".into(), message: e.to_string() }
            })?;
            write_impute_trace(&r.path("impute_trace.txt"), &[&result])?;
            write_csv(&result.table, r.path("imputed.csv"))?;
            Ok(result.table)
        })?;
        r.stage("split", |r| {
            let (a, b) = split_stratified(&imputed, config.prep.split_fraction, split_seed)?;
            write_csv(&a, r.path("train.csv"))?;
            write_csv(&b, r.path("test.csv"))?;
            Ok((a, b))
        })?
    };

    // -- scale (the scaled variant runs alongside the original) -------------
    let (train_scaled, test_scaled) = r.stage("scale", |r| {
        let params = dataset::fit_scaler(&train_raw);
        let train = dataset::apply_scaler(&train_raw, &params)?;
        let test = dataset::apply_scaler(&test_raw, &params)?;
        let mut text = String::new();
        for e in &params.entries {
            let _ = writeln!(text, "{} mean={} stddev={}", e.column, e.mean, e.stddev);
        }
        for c in params.constant_columns() {
            let _ = writeln!(text, "warning: constant column {c} scaled to zeros");
        }
        std::fs::write(r.path("scaler.txt"), text)?;
        write_csv(&train, r.path("train_scaled.csv"))?;
        write_csv(&test, r.path("test_scaled.csv"))?;
        Ok((train, test))
    })?;

    // -- balance (training data only; the test set is never resampled) ------
    let smote_seed = r.seed_for("stage-smote");
    let (balanced, balanced_scaled) = r.stage("balance", |r| {
        let cfg = SmoteConfig {
            k_neighbors: config.smote.k_neighbors,
            target: SmoteTarget::Parity,
            seed: smote_seed,
        };
        let (orig, report) = smote_with_report(&train_raw, &cfg)
            .map_err(|e| PipelineError::Stage { stage: "balance".into(), message: e.to_string() })?;
        let (scaled, _) = smote_with_report(&train_scaled, &cfg)
            .map_err(|e| PipelineError::Stage { stage: "balance".into(), message: e.to_string() })?;
        let mut text = String::new();
        let _ = writeln!(text, "minority_class = {}", report.minority_class);
        let _ = writeln!(text, "n_synthetic = {}", report.n_synthetic);
        let _ = writeln!(text, "k_used = {}", report.k_used);
        let _ = writeln!(text, "k_clamped = {}", report.k_clamped);
        std::fs::write(r.path("smote_report.txt"), text)?;
        write_csv(&orig, r.path("train_balanced.csv"))?;
        write_csv(&scaled, r.path("train_scaled_balanced.csv"))?;
        Ok((orig, scaled))
    })?;

    let variant_data = |v: Variant| -> (&Table, &Table) {
        match v {
            Variant::Original => (&balanced, &test_raw),
            Variant::Scaled => (&balanced_scaled, &test_scaled),
        }
    };

    // -- tune ----------------------------------------------------------------
    let mut best_mtry = [0usize; 2];
    for (i, variant) in [Variant::Original, Variant::Scaled].into_iter().enumerate() {
        let (train, _) = variant_data(variant);
        let name = format!("tune_{}", variant.as_str());
        let result = r.stage(&name, |r| {
            let base = config.forest.to_config(
                Mtry::Auto,
                r.seed_for(&format!("stage-tune-{}", variant.as_str())),
            );
            let result = tune_mtry(train, &base, &config.tune.grid)
                .map_err(|e| PipelineError::Stage { stage: name.clone(), message: e.to_string() })?;
            let mut csv = String::from("mtry,oob_error\n");
            for (m, err) in &result.errors {
                let _ = writeln!(csv, "{m},{err}");
            }
            std::fs::write(r.path(&format!("tuning_{}.csv", variant.as_str())), csv)?;
            Ok(result)
        })?;
        best_mtry[i] = result.best_mtry;
    }

    // -- train + evaluate (untuned and tuned, both variants) -----------------
    let mut tuned_models: Vec<Option<RandomForest>> = vec![None, None];
    for (i, variant) in [Variant::Original, Variant::Scaled].into_iter().enumerate() {
        let (train, test) = variant_data(variant);
        let v = variant.as_str();
        let name = format!("train_{v}");
        let tuned = r.stage(&name, |r| {
            let untuned_cfg = config
                .forest
                .to_config(Mtry::Auto, r.seed_for(&format!("stage-train-untuned-{v}")));
            let untuned = fit_forest(train, &untuned_cfg)
                .map_err(|e| PipelineError::Stage { stage: name.clone(), message: e.to_string() })?;
            let tuned_cfg = config.forest.to_config(
                Mtry::Fixed(best_mtry[i]),
                r.seed_for(&format!("stage-train-tuned-{v}")),
            );
            let tuned = fit_forest(train, &tuned_cfg)
                .map_err(|e| PipelineError::Stage { stage: name.clone(), message: e.to_string() })?;

            let untuned_eval = evaluate_model(&untuned, test)
                .map_err(|e| PipelineError::Stage { stage: name.clone(), message: e })?;
            let tuned_eval = evaluate_model(&tuned, test)
                .map_err(|e| PipelineError::Stage { stage: name.clone(), message: e })?;
            write_eval_file(
                &r.path(&format!("eval_untuned_{v}.txt")),
                &untuned_eval,
                "untuned",
                v,
                &format!("ntree={} mtry=auto", untuned.ntree()),
                config.seed,
            )?;
            write_eval_file(
                &r.path(&format!("eval_tuned_{v}.txt")),
                &tuned_eval,
                "tuned",
                v,
                &format!("ntree={} mtry={}", tuned.ntree(), best_mtry[i]),
                config.seed,
            )?;
            if variant == Variant::Original {
                tuned.save(r.path("model_tuned_original.json")).map_err(|e| {
                    PipelineError::Stage { stage: name.clone(), message: e.to_string() }
                })?;
            }
            Ok(tuned)
        })?;
        tuned_models[i] = Some(tuned);
    }
    let tuned_original = tuned_models[0].take().expect("fitted above");
    let tuned_scaled = tuned_models[1].take().expect("fitted above");

    // -- permutation importance (headline variant's tuned model) -------------
    let headline_variant = if config.scale { Variant::Scaled } else { Variant::Original };
    let headline_model =
        if config.scale { &tuned_scaled } else { &tuned_original };
    r.stage("importance", |r| {
        let (train, _) = variant_data(headline_variant);
        let loss = match config.importance.loss.as_str() {
            "accuracy" => LossKind::Accuracy,
            "auc" => LossKind::Auc,
            other => {
                return Err(PipelineError::Config(format!("unknown importance loss `{other}`")))
            }
        };
        let report = permutation_importance(
            headline_model,
            train,
            &ImportanceConfig {
                n_permutations: config.importance.n_permutations,
                loss,
                seed: r.seed_for("stage-importance"),
            },
        )
        .map_err(|e| PipelineError::Stage { stage: "importance".into(), message: e.to_string() })?;
        let mut csv = String::from("feature,mean_loss_drop,stddev\n");
        for e in &report.entries {
            let _ = writeln!(csv, "{},{},{}", e.feature, e.mean_loss_drop, e.stddev);
        }
        std::fs::write(r.path("importance.csv"), csv)?;
        Ok(())
    })?;

    // -- boruta (original variant) + post-selection refits -------------------
    let boruta_report = r.stage("boruta", |r| {
        let report = boruta(
            &balanced,
            &BorutaConfig {
                forest_ntree: config.boruta.ntree,
                max_rounds: config.boruta.max_rounds,
                alpha: config.boruta.alpha,
                seed: r.seed_for("stage-boruta"),
            },
        )
        .map_err(|e| PipelineError::Stage { stage: "boruta".into(), message: e.to_string() })?;
        let mut csv = String::from("feature,decision,hits,rounds\n");
        for f in &report.features {
            let _ = writeln!(csv, "{},{},{},{}", f.feature, f.decision.as_str(), f.hits, f.rounds);
        }
        std::fs::write(r.path("boruta.csv"), csv)?;
        Ok(report)
    })?;

    let rejected: Vec<String> = if config.boruta.drop_rejected {
        boruta_report
            .decided(BorutaDecision::Rejected)
            .into_iter()
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };

    for (i, variant) in [Variant::Original, Variant::Scaled].into_iter().enumerate() {
        let (train, test) = variant_data(variant);
        let v = variant.as_str();
        let name = format!("select_refit_{v}");
        r.stage(&name, |r| {
            let (train_sel, test_sel) = if rejected.is_empty() {
                (train.clone(), test.clone())
            } else {
                (drop_columns(train, &rejected, false)?, drop_columns(test, &rejected, false)?)
            };
            let n_predictors = train_sel
                .schema()
                .columns()
                .iter()
                .filter(|c| c.kind.is_predictor())
                .count();
            let mtry = best_mtry[i].min(n_predictors);
            let cfg = config.forest.to_config(
                Mtry::Fixed(mtry),
                r.seed_for(&format!("stage-train-selected-{v}")),
            );
            let model = fit_forest(&train_sel, &cfg)
                .map_err(|e| PipelineError::Stage { stage: name.clone(), message: e.to_string() })?;
            let report = evaluate_model(&model, &test_sel)
                .map_err(|e| PipelineError::Stage { stage: name.clone(), message: e })?;
            write_eval_file(
                &r.path(&format!("eval_selected_{v}.txt")),
                &report,
                "selected",
                v,
                &format!("ntree={} mtry={mtry} dropped={}", model.ntree(), rejected.join("+")),
                config.seed,
            )?;
            Ok(())
        })?;
    }

    // -- per-group models (original variant), the Table 3 analog -------------
    r.stage("group_models", |r| {
        let groups: [(&str, &str, Vec<&str>); 3] = [
            ("medical_history", "Medical history", synthgen::medical_history_features()),
            ("neuropsych", "Neuropsychology assessments", synthgen::neuropsych_features()),
            ("blood_apoe", "Blood analyses & ApoE genotypes", synthgen::blood_apoe_features()),
        ];
        for (gi, (slug, _, keep)) in groups.iter().enumerate() {
            // group runs only make sense when the schema has those columns
            let present: Vec<&str> = keep
                .iter()
                .copied()
                .filter(|name| balanced.schema().index_of(name).is_some())
                .collect();
            if present.is_empty() {
                continue;
            }
            let drop_list: Vec<String> = balanced
                .schema()
                .columns()
                .iter()
                .filter(|c| c.kind.is_predictor() && !present.contains(&c.name.as_str()))
                .map(|c| c.name.clone())
                .collect();
            let train_g = drop_columns(&balanced, &drop_list, false)?;
            let test_g = drop_columns(&test_raw, &drop_list, false)?;
            let cfg = config.forest.to_config(
                Mtry::Auto,
                derive_seed(r.seed_for("stage-group"), gi as u64),
            );
            let model = fit_forest(&train_g, &cfg).map_err(|e| PipelineError::Stage {
                stage: "group_models".into(),
                message: e.to_string(),
            })?;
            let report = evaluate_model(&model, &test_g)
                .map_err(|e| PipelineError::Stage { stage: "group_models".into(), message: e })?;
            write_eval_file(
                &r.path(&format!("eval_group_{slug}.txt")),
                &report,
                &format!("group_{slug}"),
                "original",
                &format!("ntree={} mtry=auto features={}", model.ntree(), present.len()),
                config.seed,
            )?;
        }
        Ok(())
    })?;

    // -- pca study (original variant) ----------------------------------------
    r.stage("pca", |r| {
        let n_predictors = balanced
            .schema()
            .columns()
            .iter()
            .filter(|c| c.kind.is_predictor())
            .count();
        let enc = pca::one_hot_encode(&balanced)
            .map_err(|e| PipelineError::Stage { stage: "pca".into(), message: e.to_string() })?;
        let n_components = enc.schema().columns().iter().filter(|c| c.kind.is_predictor()).count();
        let ks: Vec<usize> = config
            .pca
            .ks
            .iter()
            .copied()
            .filter(|&k| k >= 1 && k <= n_components)
            .collect();
        let _ = n_predictors;
        let cfg = ForestConfig {
            ntree: config.forest.ntree,
            mtry: Mtry::Auto,
            min_node_size: config.forest.min_node_size,
            max_depth: (config.forest.max_depth > 0).then_some(config.forest.max_depth),
            seed: r.seed_for("stage-pca"),
        };
        let curve = pca::accuracy_vs_components(&balanced, &test_raw, &ks, &cfg)
            .map_err(|e| PipelineError::Stage { stage: "pca".into(), message: e.to_string() })?;
        let mut csv = String::from("k,test_accuracy\n");
        for (k, acc) in &curve {
            let _ = writeln!(csv, "{k},{acc}");
        }
        std::fs::write(r.path("pca_curve.csv"), csv)?;

        let model = pca::fit_pca(&enc)
            .map_err(|e| PipelineError::Stage { stage: "pca".into(), message: e.to_string() })?;
        let ev = pca::explained_variance(&model);
        let mut csv = String::from("k,cumulative_fraction\n");
        for (k, frac) in ev.iter().enumerate() {
            let _ = writeln!(csv, "{},{frac}", k + 1);
        }
        std::fs::write(r.path("variance.csv"), csv)?;
        Ok(())
    })?;

    // -- headline report + roc ------------------------------------------------
    let headline = r.stage("report", |r| {
        let (_, test) = variant_data(headline_variant);
        let report = evaluate_model(headline_model, test)
            .map_err(|e| PipelineError::Stage { stage: "report".into(), message: e })?;
        let mut roc = String::from("threshold,fpr,tpr\n");
        for p in &report.roc {
            let _ = writeln!(roc, "{},{},{}", p.threshold, p.fpr, p.tpr);
        }
        std::fs::write(r.path("roc.csv"), roc)?;
        write_eval_file(
            &r.path("report.txt"),
            &report,
            "tuned",
            headline_variant.as_str(),
            &format!(
                "ntree={} mtry={}",
                config.forest.ntree,
                best_mtry[usize::from(headline_variant == Variant::Scaled)]
            ),
            config.seed,
        )?;
        Ok(report)
    })?;

    // -- analog tables from persisted artifacts -------------------------------
    r.stage("tables", |r| {
        emit_reports(&r.out)?;
        Ok(())
    })?;

    // -- manifest ---------------------------------------------------------------
    write_manifest(&r.out, config, &r.stages)?;

    Ok(RunSummary {
        out_dir: r.out,
        stages: r.stages,
        headline,
        best_mtry_original: best_mtry[0],
    })
}

fn validate_config(config: &PipelineConfig) -> Result<(), PipelineError> {
    match config.input.mode.as_str() {
        "synth" => {}
        "files" => {
            if config.input.files.is_empty() {
                return Err(PipelineError::Config("files mode needs input files".into()));
            }
            if config.input.schema.is_empty() {
                return Err(PipelineError::Config("files mode needs a schema path".into()));
            }
            if config.input.files.len() > 1 && config.input.merge_keys.is_empty() {
                return Err(PipelineError::Config(
                    "merging several files needs merge_keys".into(),
                ));
            }
        }
        other => {
            return Err(PipelineError::Config(format!(
                "input.mode must be `synth` or `files`, got `{other}`"
            )))
        }
    }
    if !(config.prep.split_fraction > 0.0 && config.prep.split_fraction < 1.0) {
        return Err(PipelineError::Config(format!(
            "split_fraction must be in (0, 1), got {}",
            config.prep.split_fraction
        )));
    }
    if config.forest.ntree == 0 || config.impute.ntree == 0 {
        return Err(PipelineError::Config("ntree must be at least 1".into()));
    }
    if config.tune.grid.is_empty() {
        return Err(PipelineError::Config("tune.grid must not be empty".into()));
    }
    Ok(())
}

/// Predict a test table and assemble the evaluation report (positive class
/// NonHC).
pub fn evaluate_model(model: &RandomForest, test: &Table) -> Result<EvalReport, String> {
    let preds = model.predict_table(test).map_err(|e| e.to_string())?;
    let predicted: Vec<String> = preds.iter().map(|p| p.label.clone()).collect();
    let truth: Vec<String> = (0..test.n_rows())
        .map(|r| test.target_cell(r).unwrap_or("").to_string())
        .collect();
    let scores = model.scores_for(test, POSITIVE_CLASS).map_err(|e| e.to_string())?;
    eval::evaluate(&predicted, &truth, &scores, POSITIVE_CLASS).map_err(|e| e.to_string())
}

fn write_impute_trace(
    path: &Path,
    results: &[&crate::impute::ImputeResult],
) -> Result<(), PipelineError> {
    let mut text = String::new();
    for (i, result) in results.iter().enumerate() {
        let _ = writeln!(text, "table {i}: iterations_run = {}", result.iterations_run);
        for (iter, (nd, cd)) in result.diff_trace.iter().enumerate() {
            let _ = writeln!(text, "table {i} sweep {}: numeric={nd} categorical={cd}", iter + 1);
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_truth_files(truth: &synthgen::GroundTruth, out: &Path) -> Result<(), PipelineError> {
    let mut rows = String::from("row,raw_label,binary_label,latent,p_disease\n");
    for (i, label) in truth.labels.iter().enumerate() {
        let _ = writeln!(
            rows,
            "{i},{},{},{},{}",
            label.raw.as_str(),
            label.binary.as_str(),
            truth.latent[i],
            truth.p_disease[i]
        );
    }
    std::fs::write(out.join("truth.csv"), rows)?;

    let mut weights = String::from("feature,weight\n");
    for (name, w) in &truth.weights {
        let _ = writeln!(weights, "{name},{w}");
    }
    let _ = writeln!(weights, "__threshold,{}", truth.threshold);
    std::fs::write(out.join("weights.csv"), weights)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Eval files and report tables
// ---------------------------------------------------------------------------

fn write_eval_file(
    path: &Path,
    report: &EvalReport,
    model: &str,
    variant: &str,
    config_echo: &str,
    seed: u64,
) -> Result<(), PipelineError> {
    let mut text = String::new();
    let _ = writeln!(text, "format = {EVAL_FORMAT}");
    let _ = writeln!(text, "model = {model}");
    let _ = writeln!(text, "variant = {variant}");
    let _ = writeln!(text, "positive_class = {POSITIVE_CLASS}");
    let _ = writeln!(text, "accuracy = {}", eval::fmt_pct(Some(report.scores.accuracy)));
    let _ = writeln!(text, "precision = {}", eval::fmt_pct(report.scores.precision));
    let _ = writeln!(text, "recall = {}", eval::fmt_pct(report.scores.recall));
    let _ = writeln!(text, "auc = {:.6}", report.auc);
    let _ = writeln!(text, "tp = {}", report.confusion.true_pos);
    let _ = writeln!(text, "fp = {}", report.confusion.false_pos);
    let _ = writeln!(text, "fn = {}", report.confusion.false_neg);
    let _ = writeln!(text, "tn = {}", report.confusion.true_neg);
    let _ = writeln!(text, "n = {}", report.confusion.total());
    let _ = writeln!(text, "seed = {seed}");
    let _ = writeln!(text, "config = {config_echo}");
    std::fs::write(path, text)?;
    Ok(())
}

/// Parsed metrics of one eval file.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalFileMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn read_eval_file(path: &Path) -> Result<EvalFileMetrics, PipelineError> {
    let stage = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_default();
    let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingStage {
        stage,
        artifact: path.display().to_string(),
    })?;
    let field = |key: &str| -> Option<f64> {
        text.lines()
            .find(|l| l.starts_with(&format!("{key} = ")))
            .and_then(|l| l.split(" = ").nth(1))
            .and_then(|v| v.trim().parse().ok())
    };
    Ok(EvalFileMetrics {
        accuracy: field("accuracy"),
        precision: field("precision"),
        recall: field("recall"),
    })
}

/// Assemble the three analog report tables from the persisted eval files.
/// Every value is re-read from the run directory, never from memory.
pub fn emit_reports(run_dir: impl AsRef<Path>) -> Result<(), PipelineError> {
    let dir = run_dir.as_ref();
    let read = |name: &str| read_eval_file(&dir.join(name));

    // Table 1 analog: classifier × data type × scores.
    let rows = [
        ("Not tuned RF classifier", "Scaled data", "eval_untuned_scaled.txt"),
        ("Tuned RF classifier", "Scaled data", "eval_tuned_scaled.txt"),
        ("After feature selection", "Scaled data", "eval_selected_scaled.txt"),
        ("Not tuned RF classifier", "Original data", "eval_untuned_original.txt"),
        ("Tuned RF classifier", "Original data", "eval_tuned_original.txt"),
        ("After feature selection", "Original data", "eval_selected_original.txt"),
    ];
    let mut table1 = String::from("classifier,data_type,accuracy,precision,recall\n");
    for (classifier, data_type, file) in rows {
        let m = read(file)?;
        let _ = writeln!(
            table1,
            "{classifier},{data_type},{},{},{}",
            eval::fmt_pct(m.accuracy),
            eval::fmt_pct(m.precision),
            eval::fmt_pct(m.recall)
        );
    }
    std::fs::write(dir.join("table1_analog.csv"), table1)?;

    // Table 2 analog: scaled minus original per classifier.
    let pairs = [
        ("After feature selection", "eval_selected_scaled.txt", "eval_selected_original.txt"),
        ("Tuned RF classifier", "eval_tuned_scaled.txt", "eval_tuned_original.txt"),
        ("Not tuned RF classifier", "eval_untuned_scaled.txt", "eval_untuned_original.txt"),
    ];
    let mut table2 = String::from("classifier,accuracy,precision,recall\n");
    for (classifier, scaled, original) in pairs {
        let s = read(scaled)?;
        let o = read(original)?;
        let diff = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        let _ = writeln!(
            table2,
            "{classifier},{},{},{}",
            eval::fmt_pct(diff(s.accuracy, o.accuracy)),
            eval::fmt_pct(diff(s.precision, o.precision)),
            eval::fmt_pct(diff(s.recall, o.recall))
        );
    }
    std::fs::write(dir.join("table2_analog.csv"), table2)?;

    // Table 3 analog: per-feature-group models.
    let groups = [
        ("Medical history", "eval_group_medical_history.txt"),
        ("Neuropsychology assessments", "eval_group_neuropsych.txt"),
        ("Blood analyses & ApoE genotypes", "eval_group_blood_apoe.txt"),
    ];
    let mut table3 = String::from("classifier_based_on,accuracy,precision,recall\n");
    let mut any_group = false;
    for (label, file) in groups {
        if !dir.join(file).exists() {
            continue;
        }
        any_group = true;
        let m = read(file)?;
        let _ = writeln!(
            table3,
            "{label},{},{},{}",
            eval::fmt_pct(m.accuracy),
            eval::fmt_pct(m.precision),
            eval::fmt_pct(m.recall)
        );
    }
    if any_group {
        std::fs::write(dir.join("table3_analog.csv"), table3)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: String,
    seed: u64,
    stages: Vec<String>,
    config: PipelineConfig,
    artifacts: Vec<ArtifactHash>,
}

#[derive(Serialize, Deserialize)]
struct ArtifactHash {
    path: String,
    sha256: String,
}

fn write_manifest(
    out: &Path,
    config: &PipelineConfig,
    stages: &[String],
) -> Result<(), PipelineError> {
    let mut artifacts = Vec::new();
    let mut names: Vec<String> = std::fs::read_dir(out)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().to_string())
        .filter(|n| n != "manifest.json")
        .collect();
    names.sort();
    for name in names {
        let bytes = std::fs::read(out.join(&name))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        artifacts.push(ArtifactHash { path: name, sha256: format!("{:x}", hasher.finalize()) });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        stages: stages.to_vec(),
        config: config.clone(),
        artifacts,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::Config(format!("manifest serialization: {e}")))?;
    std::fs::write(out.join("manifest.json"), json)?;
    Ok(())
}

/// Stage names recorded in a manifest, for order checks.
pub fn manifest_stages(run_dir: impl AsRef<Path>) -> Result<Vec<String>, PipelineError> {
    let text = std::fs::read_to_string(run_dir.as_ref().join("manifest.json")).map_err(|_| {
        PipelineError::MissingStage { stage: "manifest".into(), artifact: "manifest.json".into() }
    })?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Config(format!("bad manifest: {e}")))?;
    Ok(manifest.stages)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small-but-real pipeline config for integration-ish checks.
    pub(crate) fn tiny_config(seed: u64) -> PipelineConfig {
        PipelineConfig {
            seed,
            input: InputConfig {
                synth: SynthSettings {
                    n_subjects: 150,
                    missing_rate: 0.03,
                    ..Default::default()
                },
                ..Default::default()
            },
            impute: ImputeSettings { ntree: 15, max_iter: 3 },
            forest: ForestSettings { ntree: 25, min_node_size: 1, max_depth: 0 },
            tune: TuneSettings { grid: vec![1, 3, 5] },
            importance: ImportanceSettings { n_permutations: 5, loss: "accuracy".into() },
            boruta: BorutaSettings { ntree: 20, max_rounds: 4, alpha: 0.05, drop_rejected: true },
            pca: PcaSettings { ks: vec![2, 5] },
            ..Default::default()
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = tiny_config(99);
        let f = tempfile::NamedTempFile::new().unwrap();
        save_config(&config, f.path()).unwrap();
        let loaded = load_config(f.path()).unwrap();
        assert_eq!(config, loaded);
    }

    #[test]
    fn empty_config_file_means_defaults() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "").unwrap();
        let loaded = load_config(f.path()).unwrap();
        assert_eq!(loaded, PipelineConfig::default());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "sed = 42\n").unwrap();
        assert!(matches!(load_config(f.path()), Err(PipelineError::Config(_))));
    }

    #[test]
    fn bad_mode_is_a_config_error_with_exit_code_2() {
        let mut config = tiny_config(1);
        config.input.mode = "cloud".into();
        let dir = tempfile::tempdir().unwrap();
        let err = run_pipeline(&config, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn eval_file_round_trips_metrics() {
        let report = EvalReport {
            confusion: crate::eval::ConfusionMatrix {
                true_pos: 30,
                false_pos: 5,
                false_neg: 7,
                true_neg: 58,
            },
            scores: crate::eval::scores(&crate::eval::ConfusionMatrix {
                true_pos: 30,
                false_pos: 5,
                false_neg: 7,
                true_neg: 58,
            })
            .unwrap(),
            roc: vec![],
            auc: 0.91,
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        write_eval_file(f.path(), &report, "tuned", "original", "ntree=5", 7).unwrap();
        let m = read_eval_file(f.path()).unwrap();
        assert_eq!(m.accuracy, Some(88.0));
        assert_eq!(m.precision, Some(85.71));
        assert_eq!(m.recall, Some(81.08));
    }

    #[test]
    fn missing_eval_file_is_missing_stage() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_reports(dir.path()).unwrap_err();
        assert!(matches!(err, PipelineError::MissingStage { .. }));
    }
}
