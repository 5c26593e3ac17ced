//! Deterministic synthetic cohort generator with known ground truth.
//!
//! The cohort mimics a baseline clinical screening table: 30 predictors
//! (3 demographics, 10 binary medical-history flags, 1 three-level ApoE
//! genotype, 4 neuropsychological scores, 12 blood analytes) plus a
//! three-level diagnosis target. The predictive signal is planted almost
//! entirely in the four neuropsychology scores, which share a latent
//! cognition factor; ApoE, age, and three blood analytes carry a weak
//! nuisance signal; everything else is noise. Blood analytes correlate
//! within two panels so that forest-based imputation has structure to
//! exploit.
//!
//! Labels come from a logistic latent index: z = Σ w·x + ε with standard
//! logistic noise, thresholded at the empirical quantile that yields the
//! configured class balance exactly. The generative weights and threshold
//! are returned as [`GroundTruth`], from which [`bayes_rate`] prices the
//! best achievable accuracy of any feature subset by Monte-Carlo.

use crate::dataset::{
    Column, ColumnSpec, DatasetError, FeatureGroup, FeatureKind, Label, RawLabel, Schema, Table,
};
use crate::rng::{derive_seed, seeded_rng, tag};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct CohortConfig {
    pub n_subjects: usize,
    pub seed: u64,
    /// MCAR cell-masking probability applied to every non-target cell.
    pub missing_rate: f64,
    /// Fraction of subjects labelled NonHC (exactly, by count rounding).
    pub class_balance: f64,
    /// Multiplier on the neuropsychology weights.
    pub neuropsych_signal: f64,
    /// Multiplier on the ApoE/age/blood weights.
    pub nuisance_signal: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_subjects: 862,
            seed: 0,
            missing_rate: 0.05,
            class_balance: 320.0 / 862.0,
            neuropsych_signal: 1.0,
            nuisance_signal: 0.15,
        }
    }
}

#[derive(Debug)]
pub enum SynthError {
    BadConfig(String),
    Dataset(DatasetError),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::BadConfig(msg) => write!(f, "bad cohort config: {msg}"),
            SynthError::Dataset(e) => write!(f, "dataset error during generation: {e}"),
        }
    }
}

impl std::error::Error for SynthError {}

impl From<DatasetError> for SynthError {
    fn from(e: DatasetError) -> Self {
        SynthError::Dataset(e)
    }
}

/// The generative answer key for one cohort.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Raw-scale logistic weight per predictor, in schema order (the ApoE
    /// weight applies to the allele count 0/1/2).
    pub weights: Vec<(String, f64)>,
    /// Label rule for fresh draws: NonHC iff w·x + ε ≥ threshold.
    pub threshold: f64,
    /// Per subject: the realized latent index w·x + ε.
    pub latent: Vec<f64>,
    /// Per subject: P(NonHC | features) = σ(w·x − threshold).
    pub p_disease: Vec<f64>,
    pub labels: Vec<Label>,
    pub config: CohortConfig,
}

/// How one predictor is generated.
enum GenKind {
    UniformInt { lo: i64, hi: i64 },
    Bernoulli { p: f64 },
    /// ε4 allele count with P(0), P(1), P(2).
    ApoeCount { probs: [f64; 3] },
    /// base + loading·factor + noise·N(0,1), clipped.
    FactorLinear { base: f64, factor: FactorId, loading: f64, noise: f64, clip: (f64, f64) },
}

#[derive(Clone, Copy, PartialEq)]
enum FactorId {
    /// Shared cognition factor behind the neuropsych scores (higher = worse).
    Cognition,
    /// Haematology-style blood panel factor.
    BloodA,
    /// Chemistry-style blood panel factor.
    BloodB,
}

enum SignalClass {
    Neuropsych,
    Nuisance,
    None,
}

struct GenFeature {
    name: &'static str,
    group: FeatureGroup,
    kind: GenKind,
    /// Weight on the standardized scale, before the signal multipliers.
    std_weight: f64,
    signal: SignalClass,
}

impl GenFeature {
    fn nominal_sd(&self) -> f64 {
        match &self.kind {
            GenKind::UniformInt { lo, hi } => {
                let span = (hi - lo + 1) as f64;
                ((span * span - 1.0) / 12.0).sqrt()
            }
            GenKind::Bernoulli { p } => (p * (1.0 - p)).sqrt(),
            GenKind::ApoeCount { probs } => {
                let mean = probs[1] + 2.0 * probs[2];
                let ex2 = probs[1] + 4.0 * probs[2];
                (ex2 - mean * mean).max(1e-12).sqrt()
            }
            GenKind::FactorLinear { loading, noise, .. } => {
                (loading * loading + noise * noise).sqrt()
            }
        }
    }

    fn raw_weight(&self, config: &CohortConfig) -> f64 {
        let multiplier = match self.signal {
            SignalClass::Neuropsych => config.neuropsych_signal,
            SignalClass::Nuisance => config.nuisance_signal,
            SignalClass::None => 0.0,
        };
        self.std_weight * multiplier / self.nominal_sd()
    }

    fn feature_kind(&self) -> FeatureKind {
        match &self.kind {
            GenKind::UniformInt { .. } | GenKind::FactorLinear { .. } => FeatureKind::Numeric,
            GenKind::Bernoulli { .. } => FeatureKind::Binary,
            GenKind::ApoeCount { .. } => FeatureKind::Categorical {
                levels: vec!["0".to_string(), "1".to_string(), "2".to_string()],
            },
        }
    }

    fn valid_range(&self) -> Option<(f64, f64)> {
        match &self.kind {
            GenKind::UniformInt { lo, hi } => Some((*lo as f64, *hi as f64)),
            GenKind::FactorLinear { clip, .. } => Some(*clip),
            _ => None,
        }
    }
}

/// The 30 predictors, in schema order.
fn features() -> Vec<GenFeature> {
    use FactorId::*;
    use GenKind::*;
    use SignalClass::*;
    vec![
        GenFeature {
            name: "age",
            group: FeatureGroup::Demographic,
            kind: UniformInt { lo: 55, hi: 96 },
            std_weight: 0.6,
            signal: Nuisance,
        },
        GenFeature {
            name: "PTGENDER",
            group: FeatureGroup::Demographic,
            kind: Bernoulli { p: 0.5 },
            std_weight: 0.0,
            signal: None,
        },
        GenFeature {
            name: "PTEDUCAT",
            group: FeatureGroup::Demographic,
            kind: UniformInt { lo: 6, hi: 20 },
            std_weight: 0.0,
            signal: None,
        },
        GenFeature { name: "MHPSYCH", group: FeatureGroup::MedicalHistory, kind: Bernoulli { p: 0.12 }, std_weight: 0.0, signal: None },
        GenFeature { name: "MH2NEURL", group: FeatureGroup::MedicalHistory, kind: Bernoulli { p: 0.18 }, std_weight: 0.0, signal: None },
        GenFeature { name: "MH4CARD", group: FeatureGroup::MedicalHistory, kind: Bernoulli { p: 0.25 }, std_weight: 0.0, signal: None },
        GenFeature { name: "MH6HEPAT", group: FeatureGroup::MedicalHistory, kind: Bernoulli { p: 0.10 }, std_weight: 0.0, signal: None },
        GenFeature { name: "MH8MUSCL", group: FeatureGroup::MedicalHistory, kind: Bernoulli { p: 0.15 }, std_weight: 0.0, signal: None },
        GenFeature { name: "MH9ENDO", group: FeatureGroup::MedicalHistory, kind: Bernoulli { p: 0.22 }, std_weight: 0.0, signal: None },
        GenFeature { name: "MH10GAST", group: FeatureGroup::MedicalHistory, kind: Bernoulli { p: 0.30 }, std_weight: 0.0, signal: None },
        GenFeature { name: "MH12RENA", group: FeatureGroup::MedicalHistory, kind: Bernoulli { p: 0.08 }, std_weight: 0.0, signal: None },
        GenFeature { name: "MH16SMOK", group: FeatureGroup::MedicalHistory, kind: Bernoulli { p: 0.35 }, std_weight: 0.0, signal: None },
        GenFeature { name: "MH17MALI", group: FeatureGroup::MedicalHistory, kind: Bernoulli { p: 0.14 }, std_weight: 0.0, signal: None },
        GenFeature {
            name: "APOE4",
            group: FeatureGroup::ApoE,
            kind: ApoeCount { probs: [0.55, 0.33, 0.12] },
            std_weight: 1.0,
            signal: Nuisance,
        },
        GenFeature {
            name: "CDGLOBAL",
            group: FeatureGroup::Neuropsych,
            kind: FactorLinear { base: 0.7, factor: Cognition, loading: 0.65, noise: 0.30, clip: (0.0, 3.0) },
            std_weight: 1.6,
            signal: Neuropsych,
        },
        GenFeature {
            name: "MMSCORE",
            group: FeatureGroup::Neuropsych,
            kind: FactorLinear { base: 26.0, factor: Cognition, loading: -3.0, noise: 1.5, clip: (0.0, 30.0) },
            std_weight: -1.4,
            signal: Neuropsych,
        },
        GenFeature {
            name: "LIMMTOTAL",
            group: FeatureGroup::Neuropsych,
            kind: FactorLinear { base: 10.0, factor: Cognition, loading: -3.8, noise: 2.0, clip: (0.0, 25.0) },
            std_weight: -1.1,
            signal: Neuropsych,
        },
        GenFeature {
            name: "LDELTOTAL",
            group: FeatureGroup::Neuropsych,
            kind: FactorLinear { base: 8.5, factor: Cognition, loading: -4.0, noise: 2.1, clip: (0.0, 25.0) },
            std_weight: -1.2,
            signal: Neuropsych,
        },
        GenFeature {
            name: "AXT117",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 1.7, factor: BloodA, loading: 0.50, noise: 0.45, clip: (0.2, 4.5) },
            std_weight: 0.0,
            signal: None,
        },
        GenFeature {
            name: "BAT126",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 390.0, factor: BloodA, loading: 110.0, noise: 95.0, clip: (80.0, 900.0) },
            std_weight: -0.8,
            signal: Nuisance,
        },
        GenFeature {
            name: "HMT3",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 4.7, factor: BloodA, loading: 0.42, noise: 0.36, clip: (3.0, 6.5) },
            std_weight: 0.0,
            signal: None,
        },
        GenFeature {
            name: "HMT40",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 14.2, factor: BloodA, loading: 1.1, noise: 0.9, clip: (9.0, 19.0) },
            std_weight: -0.7,
            signal: Nuisance,
        },
        GenFeature {
            name: "HMT100",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 30.0, factor: BloodA, loading: 1.6, noise: 1.5, clip: (22.0, 38.0) },
            std_weight: 0.0,
            signal: None,
        },
        GenFeature {
            name: "HMT102",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 33.0, factor: BloodA, loading: 1.0, noise: 0.9, clip: (28.0, 38.0) },
            std_weight: 0.0,
            signal: None,
        },
        GenFeature {
            name: "HMT7",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 6.8, factor: BloodB, loading: 1.3, noise: 1.2, clip: (2.0, 15.0) },
            std_weight: 0.0,
            signal: None,
        },
        GenFeature {
            name: "HMT13",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 250.0, factor: BloodB, loading: 52.0, noise: 48.0, clip: (80.0, 500.0) },
            std_weight: 0.0,
            signal: None,
        },
        GenFeature {
            name: "RCT6",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 5.8, factor: BloodB, loading: 1.1, noise: 1.0, clip: (1.5, 15.0) },
            std_weight: 0.0,
            signal: None,
        },
        GenFeature {
            name: "RCT11",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 5.6, factor: BloodB, loading: 0.9, noise: 0.85, clip: (3.0, 12.0) },
            std_weight: 0.0,
            signal: None,
        },
        GenFeature {
            name: "RCT20",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 5.4, factor: BloodB, loading: 0.85, noise: 0.8, clip: (2.5, 9.5) },
            std_weight: 0.6,
            signal: Nuisance,
        },
        GenFeature {
            name: "RCT392",
            group: FeatureGroup::Blood,
            kind: FactorLinear { base: 1.5, factor: BloodB, loading: 0.45, noise: 0.42, clip: (0.3, 4.5) },
            std_weight: 0.0,
            signal: None,
        },
    ]
}

/// Target column name in the generated schema.
pub const TARGET_COLUMN: &str = "DXCURREN";

/// Schema of the generated cohort (30 predictors + 3-level diagnosis).
pub fn cohort_schema() -> Schema {
    let mut specs: Vec<ColumnSpec> = features()
        .iter()
        .map(|f| {
            let mut spec = ColumnSpec::new(f.name, f.feature_kind(), f.group);
            if let Some((lo, hi)) = f.valid_range() {
                spec = spec.with_range(lo, hi);
            }
            spec
        })
        .collect();
    specs.push(ColumnSpec::new(
        TARGET_COLUMN,
        FeatureKind::Target {
            levels: vec!["HC".to_string(), "MCI".to_string(), "AD".to_string()],
        },
        FeatureGroup::Target,
    ));
    Schema::new(specs).expect("generator schema is valid")
}

/// One subject's predictor values in schema order (ApoE as allele count).
/// Consumes: 3 factor normals, then one draw per feature in order.
fn sample_subject(rng: &mut ChaCha8Rng, specs: &[GenFeature]) -> Vec<f64> {
    let cognition: f64 = StandardNormal.sample(rng);
    let blood_a: f64 = StandardNormal.sample(rng);
    let blood_b: f64 = StandardNormal.sample(rng);
    specs
        .iter()
        .map(|f| match &f.kind {
            GenKind::UniformInt { lo, hi } => rng.random_range(*lo..=*hi) as f64,
            GenKind::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < *p)),
            GenKind::ApoeCount { probs } => {
                let u: f64 = rng.random();
                if u < probs[0] {
                    0.0
                } else if u < probs[0] + probs[1] {
                    1.0
                } else {
                    2.0
                }
            }
            GenKind::FactorLinear { base, factor, loading, noise, clip } => {
                let shared = match factor {
                    FactorId::Cognition => cognition,
                    FactorId::BloodA => blood_a,
                    FactorId::BloodB => blood_b,
                };
                let eps: f64 = StandardNormal.sample(rng);
                (base + loading * shared + noise * eps).clamp(clip.0, clip.1)
            }
        })
        .collect()
}

fn logistic_noise(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
    (u / (1.0 - u)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generate a cohort and its answer key.
pub fn generate_cohort(config: &CohortConfig) -> Result<(Table, GroundTruth), SynthError> {
    if config.n_subjects < 2 {
        return Err(SynthError::BadConfig("need at least 2 subjects".into()));
    }
    if !(config.missing_rate >= 0.0 && config.missing_rate < 1.0) {
        return Err(SynthError::BadConfig(format!(
            "missing_rate must be in [0, 1), got {}",
            config.missing_rate
        )));
    }
    if !(config.class_balance > 0.0 && config.class_balance < 1.0) {
        return Err(SynthError::BadConfig(format!(
            "class_balance must be in (0, 1), got {}",
            config.class_balance
        )));
    }

    let specs = features();
    let weights: Vec<f64> = specs.iter().map(|f| f.raw_weight(config)).collect();
    let n = config.n_subjects;

    let mut feature_rng = seeded_rng(derive_seed(config.seed, tag("cohort-features")));
    let mut label_rng = seeded_rng(derive_seed(config.seed, tag("cohort-labels")));

    let mut subjects: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    for _ in 0..n {
        let values = sample_subject(&mut feature_rng, &specs);
        let wx: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
        latent.push(wx + logistic_noise(&mut label_rng));
        subjects.push(values);
    }

    // Threshold at the k-th largest latent index for exact class counts.
    let k = ((n as f64) * config.class_balance).round() as usize;
    let k = k.clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| latent[b].partial_cmp(&latent[a]).expect("finite").then(a.cmp(&b)));
    let threshold = latent[order[k - 1]];

    let mut labels: Vec<Label> = vec![Label::from_raw(RawLabel::Hc); n];
    // Severity split among the diseased: the top share by latent index is AD.
    let n_ad = ((k as f64) * 0.4).ceil() as usize;
    for (rank, &idx) in order.iter().take(k).enumerate() {
        let raw = if rank < n_ad { RawLabel::Ad } else { RawLabel::Mci };
        labels[idx] = Label::from_raw(raw);
    }

    let p_disease: Vec<f64> = subjects
        .iter()
        .map(|values| {
            let wx: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
            sigmoid(wx - threshold)
        })
        .collect();

    // Assemble the table.
    let schema = cohort_schema();
    let mut columns: Vec<Column> = Vec::with_capacity(schema.len());
    for (j, f) in specs.iter().enumerate() {
        match f.feature_kind() {
            FeatureKind::Numeric | FeatureKind::Binary => {
                columns.push(Column::Numeric(subjects.iter().map(|s| s[j]).collect()));
            }
            FeatureKind::Categorical { .. } => {
                columns.push(Column::Categorical(
                    subjects.iter().map(|s| format!("{}", s[j] as i64)).collect(),
                ));
            }
            _ => unreachable!(),
        }
    }
    columns.push(Column::Categorical(
        labels.iter().map(|l| l.raw.as_str().to_string()).collect(),
    ));
    let missing = vec![vec![false; n]; schema.len()];
    let mut table = Table::new(schema, columns, missing)?;

    if config.missing_rate > 0.0 {
        table = inject_missing(
            &table,
            config.missing_rate,
            derive_seed(config.seed, tag("cohort-missing")),
        )?;
    }

    let truth = GroundTruth {
        weights: specs
            .iter()
            .zip(&weights)
            .map(|(f, &w)| (f.name.to_string(), w))
            .collect(),
        threshold,
        latent,
        p_disease,
        labels,
        config: config.clone(),
    };
    Ok((table, truth))
}

/// Mask each non-target cell independently with probability `rate` (MCAR).
/// Cells are visited column-major; the target column is never touched.
pub fn inject_missing(table: &Table, rate: f64, seed: u64) -> Result<Table, SynthError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(SynthError::BadConfig(format!("rate must be in [0, 1), got {rate}")));
    }
    if rate == 0.0 {
        return Ok(table.clone());
    }
    let mut rng = seeded_rng(derive_seed(seed, tag("inject-missing")));
    let (schema, columns, missing) = table.parts();
    let mut out_missing = missing.to_vec();
    for (idx, spec) in schema.columns().iter().enumerate() {
        if spec.kind.is_target() {
            continue;
        }
        for row in 0..table.n_rows() {
            if rng.random::<f64>() < rate {
                out_missing[idx][row] = true;
            }
        }
    }
    Ok(Table::new(schema.clone(), columns.to_vec(), out_missing)?)
}

/// Monte-Carlo estimate of the best achievable accuracy using only the
/// named features, under the cohort's generative model.
///
/// Draws fresh subjects, computes the posterior P(NonHC | subset values) by
/// integrating the unobserved features' weighted sum over a sampled
/// reference set, and scores the Bayes decision. `draws` below 10⁵ is
/// bumped up to 10⁵.
pub fn bayes_rate(
    truth: &GroundTruth,
    feature_subset: &[&str],
    draws: usize,
    seed: u64,
) -> Result<f64, SynthError> {
    let specs = features();
    for name in feature_subset {
        if !specs.iter().any(|f| f.name == *name) {
            return Err(SynthError::BadConfig(format!("unknown feature `{name}`")));
        }
    }
    let in_subset: Vec<bool> = specs
        .iter()
        .map(|f| feature_subset.contains(&f.name))
        .collect();
    let weights: Vec<f64> = specs.iter().map(|f| f.raw_weight(&truth.config)).collect();
    let draws = draws.max(100_000);

    // Distribution of the unobserved features' contribution.
    let complement_active = specs
        .iter()
        .enumerate()
        .any(|(j, _)| !in_subset[j] && weights[j] != 0.0);
    let mut complement_rng = seeded_rng(derive_seed(seed, tag("bayes-complement")));
    let complement: Vec<f64> = if complement_active {
        (0..2000)
            .map(|_| {
                let values = sample_subject(&mut complement_rng, &specs);
                values
                    .iter()
                    .zip(&weights)
                    .enumerate()
                    .filter(|(j, _)| !in_subset[*j])
                    .map(|(_, (v, w))| v * w)
                    .sum()
            })
            .collect()
    } else {
        vec![0.0]
    };

    let mut outer_rng = seeded_rng(derive_seed(seed, tag("bayes-outer")));
    let mut total = 0.0;
    for _ in 0..draws {
        let values = sample_subject(&mut outer_rng, &specs);
        let observed: f64 = values
            .iter()
            .zip(&weights)
            .enumerate()
            .filter(|(j, _)| in_subset[*j])
            .map(|(_, (v, w))| v * w)
            .sum();
        let posterior: f64 = complement
            .iter()
            .map(|c| sigmoid(observed + c - truth.threshold))
            .sum::<f64>()
            / complement.len() as f64;
        total += posterior.max(1.0 - posterior);
    }
    Ok(total / draws as f64)
}

/// Names of the four neuropsychology features (the planted signal).
pub fn neuropsych_features() -> Vec<&'static str> {
    features()
        .iter()
        .filter(|f| f.group == FeatureGroup::Neuropsych)
        .map(|f| f.name)
        .collect()
}

/// Names of the medical-history flags.
pub fn medical_history_features() -> Vec<&'static str> {
    features()
        .iter()
        .filter(|f| f.group == FeatureGroup::MedicalHistory)
        .map(|f| f.name)
        .collect()
}

/// Names of the blood analytes plus the ApoE genotype.
pub fn blood_apoe_features() -> Vec<&'static str> {
    features()
        .iter()
        .filter(|f| f.group == FeatureGroup::Blood || f.group == FeatureGroup::ApoE)
        .map(|f| f.name)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sanitize;

    fn small_config() -> CohortConfig {
        CohortConfig { n_subjects: 300, seed: 7, missing_rate: 0.0, ..Default::default() }
    }

    /// Large enough that the empirical threshold sits close to its
    /// population quantile (the majority-rate comparisons need that).
    fn wide_config(seed: u64) -> CohortConfig {
        CohortConfig { n_subjects: 2000, seed, missing_rate: 0.0, ..Default::default() }
    }

    #[test]
    fn default_cohort_matches_paper_counts() {
        let (table, truth) = generate_cohort(&CohortConfig::default()).unwrap();
        assert_eq!(table.n_rows(), 862);
        assert_eq!(table.n_cols(), 31); // 30 predictors + target
        let non_hc = truth
            .labels
            .iter()
            .filter(|l| l.binary == crate::dataset::BinaryLabel::NonHc)
            .count();
        assert_eq!(non_hc, 320);
        let counts = table.class_counts();
        let mci_ad: usize = counts
            .iter()
            .filter(|(l, _)| l == "MCI" || l == "AD")
            .map(|(_, c)| c)
            .sum();
        assert_eq!(mci_ad, 320);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = CohortConfig::default();
        let (t1, g1) = generate_cohort(&cfg).unwrap();
        let (t2, g2) = generate_cohort(&cfg).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(g1.latent, g2.latent);
        assert_eq!(g1.threshold, g2.threshold);
        let other = CohortConfig { seed: 1, ..cfg };
        let (t3, _) = generate_cohort(&other).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn fresh_cohort_needs_no_sanitizing() {
        let (table, _) = generate_cohort(&small_config()).unwrap();
        let (clean, report) = sanitize(&table);
        assert_eq!(report.total(), 0);
        assert_eq!(clean, table);
    }

    #[test]
    fn ages_stay_in_declared_span() {
        let (table, _) = generate_cohort(&small_config()).unwrap();
        let idx = table.schema().index_of("age").unwrap();
        match table.column(idx) {
            Column::Numeric(v) => {
                for &x in v {
                    assert!((55.0..=96.0).contains(&x));
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn null_signal_means_majority_rate_is_optimal() {
        let cfg = CohortConfig {
            neuropsych_signal: 0.0,
            nuisance_signal: 0.0,
            ..wide_config(7)
        };
        let (_, truth) = generate_cohort(&cfg).unwrap();
        let acc = bayes_rate(&truth, &["CDGLOBAL", "MMSCORE", "BAT126"], 100_000, 5).unwrap();
        let majority = 1.0 - cfg.class_balance;
        assert!(
            (acc - majority).abs() < 0.03,
            "null-model bayes accuracy {acc} vs majority {majority}"
        );
    }

    #[test]
    fn bayes_rate_is_monotone_in_features() {
        let (_, truth) = generate_cohort(&small_config()).unwrap();
        let neuro = neuropsych_features();
        let full: Vec<&str> = features().iter().map(|f| f.name).collect();
        let full_acc = bayes_rate(&truth, &full, 100_000, 11).unwrap();
        let neuro_acc = bayes_rate(&truth, &neuro, 100_000, 11).unwrap();
        assert!(
            full_acc >= neuro_acc - 0.005,
            "information monotonicity violated: full {full_acc} vs neuro {neuro_acc}"
        );
    }

    #[test]
    fn medical_history_carries_no_signal() {
        let (_, truth) = generate_cohort(&wide_config(13)).unwrap();
        let mh = medical_history_features();
        let acc = bayes_rate(&truth, &mh, 100_000, 13).unwrap();
        let majority = 1.0 - truth.config.class_balance;
        assert!(
            (acc - majority).abs() < 0.03,
            "medical-history bayes accuracy {acc} should be ≈ {majority}"
        );
    }

    #[test]
    fn inject_rate_zero_is_identity() {
        let (table, _) = generate_cohort(&small_config()).unwrap();
        let out = inject_missing(&table, 0.0, 3).unwrap();
        assert_eq!(out, table);
    }

    #[test]
    fn inject_masks_binomial_share_of_cells() {
        let (table, _) = generate_cohort(&CohortConfig {
            n_subjects: 862,
            missing_rate: 0.0,
            ..Default::default()
        })
        .unwrap();
        let out = inject_missing(&table, 0.1, 99).unwrap();
        let cells: f64 = 862.0 * 30.0;
        let expect = cells * 0.1;
        let sigma = (cells * 0.1f64 * 0.9).sqrt();
        let masked = out.missing_cells() as f64;
        assert!(
            (masked - expect).abs() <= 3.0 * sigma,
            "masked {masked} outside 3σ of {expect}"
        );
    }

    #[test]
    fn target_is_never_masked() {
        let (table, _) = generate_cohort(&CohortConfig {
            n_subjects: 500,
            missing_rate: 0.4,
            ..Default::default()
        })
        .unwrap();
        let t_idx = table.schema().target_index().unwrap();
        assert!(table.mask(t_idx).iter().all(|&m| !m));
        let out = inject_missing(&table, 0.5, 1).unwrap();
        assert!(out.mask(t_idx).iter().all(|&m| !m));
    }

    #[test]
    fn empty_subset_prices_the_majority_class() {
        let (_, truth) = generate_cohort(&wide_config(2)).unwrap();
        let acc = bayes_rate(&truth, &[], 100_000, 2).unwrap();
        let majority = 1.0 - truth.config.class_balance;
        assert!((acc - majority).abs() < 0.03, "empty-subset accuracy {acc} vs {majority}");
    }

    #[test]
    fn group_helpers_cover_the_schema() {
        assert_eq!(neuropsych_features().len(), 4);
        assert_eq!(medical_history_features().len(), 10);
        assert_eq!(blood_apoe_features().len(), 13);
        let schema = cohort_schema();
        assert_eq!(schema.len(), 31);
        assert_eq!(schema.target_name(), Some(TARGET_COLUMN));
    }
}
