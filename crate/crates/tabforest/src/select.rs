//! Feature relevance: model-level permutation importance and Boruta
//! all-relevant selection with shadow features.
//!
//! Permutation importance shuffles one feature column of the evaluation
//! table at a time and reports the mean loss increase over repetitions.
//! Loss defaults to 1 − accuracy; 1 − AUC is available behind the config
//! switch for parity with explainers that default to AUC loss.
//!
//! Boruta appends a shuffled "shadow" copy of every active predictor each
//! round, refits the forest, and scores a hit for every real feature whose
//! OOB permutation importance beats the best shadow. A two-sided binomial
//! test (Bonferroni-corrected across the features still undecided) promotes
//! features to Confirmed or Rejected; whatever survives `max_rounds`
//! undecided is Tentative. Rejected features leave the design for later
//! rounds; Confirmed features keep supporting the model but stop being
//! tested.

use crate::dataset::Table;
use crate::design::{self, DesignMatrix, FeatureData};
use crate::forest::{self, ForestError, RandomForest};
use crate::rng::{derive_seed, seeded_rng, tag};
use rand::seq::SliceRandom;
use std::fmt;

#[derive(Debug)]
pub enum SelectError {
    /// Zero permutations or zero rounds requested.
    EmptyConfig(String),
    Forest(ForestError),
}

impl fmt::Display for SelectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectError::EmptyConfig(msg) => write!(f, "empty config: {msg}"),
            SelectError::Forest(e) => write!(f, "forest error during selection: {e}"),
        }
    }
}

impl std::error::Error for SelectError {}

impl From<ForestError> for SelectError {
    fn from(e: ForestError) -> Self {
        SelectError::Forest(e)
    }
}

/// Loss whose increase a permutation measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// 1 − accuracy.
    Accuracy,
    /// 1 − AUC of the positive-class score (positive = last class).
    Auc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceConfig {
    pub n_permutations: usize,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig { n_permutations: 50, loss: LossKind::Accuracy, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean of (permuted loss − baseline loss) over the repetitions.
    pub mean_loss_drop: f64,
    /// Population standard deviation over the repetitions.
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceReport {
    pub entries: Vec<FeatureImportance>,
    pub n_permutations: usize,
    pub baseline_loss: f64,
}

/// Permutation importance of a fitted model on a fully observed table.
pub fn permutation_importance(
    model: &RandomForest,
    data: &Table,
    config: &ImportanceConfig,
) -> Result<ImportanceReport, SelectError> {
    if config.n_permutations == 0 {
        return Err(SelectError::EmptyConfig("n_permutations must be at least 1".into()));
    }
    let design = model.checked_design(data)?;
    let (_, target) = design::predictors_and_target(data)
        .map_err(|e| SelectError::Forest(ForestError::SchemaMismatch(e.to_string())))?;

    let loss_of = |d: &DesignMatrix| -> f64 {
        match config.loss {
            LossKind::Accuracy => {
                let correct = (0..d.n_rows)
                    .filter(|&row| {
                        let pred = model.predict_design_row(d, row);
                        let pred_idx = model
                            .classes()
                            .iter()
                            .position(|c| *c == pred.label)
                            .expect("own class");
                        pred_idx == target.codes[row] as usize
                    })
                    .count();
                1.0 - correct as f64 / d.n_rows as f64
            }
            LossKind::Auc => {
                let pos = model.classes().len() - 1;
                let scores: Vec<f64> = (0..d.n_rows)
                    .map(|row| model.predict_design_row(d, row).vote_fractions[pos])
                    .collect();
                let truth: Vec<bool> =
                    target.codes.iter().map(|&c| c as usize == pos).collect();
                match crate::eval::roc_curve(&scores, &truth) {
                    Ok(curve) => 1.0 - crate::eval::auc(&curve),
                    Err(_) => 1.0,
                }
            }
        }
    };

    let baseline_loss = loss_of(&design);
    let mut scratch = design.clone();
    let all_rows: Vec<u32> = (0..design.n_rows as u32).collect();

    let mut entries = Vec::with_capacity(design.n_features());
    for feat in 0..design.n_features() {
        let mut rng = seeded_rng(derive_seed(
            derive_seed(config.seed, tag("perm-importance")),
            feat as u64,
        ));
        let mut drops = Vec::with_capacity(config.n_permutations);
        for _ in 0..config.n_permutations {
            let mut order = all_rows.clone();
            order.shuffle(&mut rng);
            overwrite_feature(&mut scratch, &design, feat, &order);
            drops.push(loss_of(&scratch) - baseline_loss);
        }
        restore_feature(&mut scratch, &design, feat);
        let n = drops.len() as f64;
        let mean = drops.iter().sum::<f64>() / n;
        let var = drops.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        entries.push(FeatureImportance {
            feature: design.names[feat].clone(),
            mean_loss_drop: mean,
            stddev: var.sqrt(),
        });
    }

    Ok(ImportanceReport { entries, n_permutations: config.n_permutations, baseline_loss })
}

fn overwrite_feature(
    scratch: &mut DesignMatrix,
    original: &DesignMatrix,
    feat: usize,
    order: &[u32],
) {
    match (&mut scratch.features[feat], &original.features[feat]) {
        (FeatureData::Numeric(dst), FeatureData::Numeric(src)) => {
            for (row, &from) in order.iter().enumerate() {
                dst[row] = src[from as usize];
            }
        }
        (
            FeatureData::Categorical { codes: dst, .. },
            FeatureData::Categorical { codes: src, .. },
        ) => {
            for (row, &from) in order.iter().enumerate() {
                dst[row] = src[from as usize];
            }
        }
        _ => unreachable!(),
    }
}

fn restore_feature(scratch: &mut DesignMatrix, original: &DesignMatrix, feat: usize) {
    scratch.features[feat] = original.features[feat].clone();
}

// ---------------------------------------------------------------------------
// Boruta
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct BorutaConfig {
    /// Trees per round's forest.
    pub forest_ntree: usize,
    pub max_rounds: usize,
    /// Two-sided binomial test level before Bonferroni correction.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BorutaConfig {
    fn default() -> Self {
        BorutaConfig { forest_ntree: 500, max_rounds: 20, alpha: 0.05, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BorutaDecision {
    Confirmed,
    Rejected,
    Tentative,
}

impl BorutaDecision {
    pub fn as_str(&self) -> &'static str {
        match self {
            BorutaDecision::Confirmed => "Confirmed",
            BorutaDecision::Rejected => "Rejected",
            BorutaDecision::Tentative => "Tentative",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BorutaFeature {
    pub feature: String,
    pub decision: BorutaDecision,
    /// Rounds in which this feature beat the best shadow.
    pub hits: usize,
    /// Rounds in which this feature was tested (frozen once decided).
    pub rounds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BorutaReport {
    /// One entry per original predictor, in design order.
    pub features: Vec<BorutaFeature>,
    pub rounds_run: usize,
    pub config: BorutaConfig,
}

impl BorutaReport {
    pub fn decided(&self, decision: BorutaDecision) -> Vec<&str> {
        self.features
            .iter()
            .filter(|f| f.decision == decision)
            .map(|f| f.feature.as_str())
            .collect()
    }
}

/// Boruta all-relevant feature selection on a fully observed training table.
pub fn boruta(train: &Table, config: &BorutaConfig) -> Result<BorutaReport, SelectError> {
    if config.max_rounds == 0 {
        return Err(SelectError::EmptyConfig("max_rounds must be at least 1".into()));
    }
    if config.forest_ntree == 0 {
        return Err(SelectError::EmptyConfig("forest_ntree must be at least 1".into()));
    }
    let (design, target) = design::predictors_and_target(train).map_err(|e| {
        SelectError::Forest(match e {
            design::DesignError::MaskedCell { row, column } => {
                ForestError::MaskedCell { row, column }
            }
            design::DesignError::NoTarget => ForestError::NoTarget,
            design::DesignError::NoPredictors => ForestError::NoPredictors,
            design::DesignError::UnknownLevel { column, level } => {
                ForestError::UnknownLevel { column, level }
            }
        })
    })?;

    let p = design.n_features();
    let n = design.n_rows;
    let all_rows: Vec<u32> = (0..n as u32).collect();
    let base_seed = derive_seed(config.seed, tag("boruta"));

    let mut hits = vec![0usize; p];
    let mut rounds_tested = vec![0usize; p];
    let mut decision: Vec<Option<BorutaDecision>> = vec![None; p];
    // rejected features leave the working design; confirmed ones stay in
    let mut active: Vec<usize> = (0..p).collect();
    let mut rounds_run = 0usize;

    for round in 1..=config.max_rounds {
        rounds_run = round;

        // Working design: active originals then one shadow per active.
        let mut features = Vec::with_capacity(active.len() * 2);
        let mut names = Vec::with_capacity(active.len() * 2);
        for &orig in &active {
            features.push(design.features[orig].clone());
            names.push(design.names[orig].clone());
        }
        for &orig in &active {
            let mut rng = seeded_rng(derive_seed(
                derive_seed(derive_seed(base_seed, tag("shadow")), round as u64),
                orig as u64,
            ));
            let mut order = all_rows.clone();
            order.shuffle(&mut rng);
            let shadow = match &design.features[orig] {
                FeatureData::Numeric(src) => FeatureData::Numeric(
                    order.iter().map(|&r| src[r as usize]).collect(),
                ),
                FeatureData::Categorical { codes, n_levels } => FeatureData::Categorical {
                    codes: order.iter().map(|&r| codes[r as usize]).collect(),
                    n_levels: *n_levels,
                },
            };
            features.push(shadow);
            names.push(format!("shadow_{}", design.names[orig]));
        }
        let extended = DesignMatrix { names, features, n_rows: n };

        let p_ext = extended.n_features();
        let mtry = ((p_ext as f64).sqrt().floor() as usize).max(1);
        let model = forest::fit_design_forest(
            &extended,
            &target.codes,
            target.n_classes(),
            &all_rows,
            config.forest_ntree,
            mtry,
            1,
            derive_seed(derive_seed(base_seed, tag("fit")), round as u64),
        );
        let importances = forest::design_oob_importance(
            &model.trees,
            &model.in_bag,
            &extended,
            &target.codes,
            &all_rows,
            derive_seed(derive_seed(base_seed, tag("importance")), round as u64),
        )
        .ok_or_else(|| {
            SelectError::Forest(ForestError::SchemaMismatch(
                "no out-of-bag rows available for importance".into(),
            ))
        })?;

        let n_active = active.len();
        let max_shadow = importances[n_active..]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);

        for (pos, &orig) in active.iter().enumerate() {
            if decision[orig].is_some() {
                continue;
            }
            rounds_tested[orig] += 1;
            if importances[pos] > max_shadow {
                hits[orig] += 1;
            }
        }

        // Test every still-undecided feature at the corrected level.
        let undecided: Vec<usize> =
            (0..p).filter(|&i| decision[i].is_none()).collect();
        if undecided.is_empty() {
            break;
        }
        let alpha_adj = config.alpha / undecided.len() as f64;
        for &i in &undecided {
            let (p_low, p_high) = binomial_two_sided(hits[i], rounds_tested[i]);
            if p_high < alpha_adj {
                decision[i] = Some(BorutaDecision::Confirmed);
            } else if p_low < alpha_adj {
                decision[i] = Some(BorutaDecision::Rejected);
            }
        }
        active.retain(|&i| decision[i] != Some(BorutaDecision::Rejected));

        if (0..p).all(|i| decision[i].is_some()) {
            break;
        }
        if active.is_empty() {
            break;
        }
    }

    let features = (0..p)
        .map(|i| BorutaFeature {
            feature: design.names[i].clone(),
            decision: decision[i].unwrap_or(BorutaDecision::Tentative),
            hits: hits[i],
            rounds: rounds_tested[i],
        })
        .collect();
    Ok(BorutaReport { features, rounds_run, config: config.clone() })
}

/// Exact binomial tail probabilities under p = 1/2:
/// returns (P[X ≤ hits], P[X ≥ hits]) for X ~ Bin(rounds, 1/2).
fn binomial_two_sided(hits: usize, rounds: usize) -> (f64, f64) {
    if rounds == 0 {
        return (1.0, 1.0);
    }
    // pmf(k+1) = pmf(k) · (n−k)/(k+1)
    let mut pmf = 0.5f64.powi(rounds as i32);
    let mut cdf_low = 0.0;
    let mut sf_high = 0.0;
    for k in 0..=rounds {
        if k <= hits {
            cdf_low += pmf;
        }
        if k >= hits {
            sf_high += pmf;
        }
        if k < rounds {
            pmf *= (rounds - k) as f64 / (k + 1) as f64;
        }
    }
    (cdf_low.min(1.0), sf_high.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnSpec, FeatureGroup, FeatureKind, Schema};
    use crate::forest::{fit_forest, ForestConfig};
    use rand::Rng;

    /// `signal` equals the label exactly; `noise` is uniform junk.
    fn copy_and_noise_table(n: usize, seed: u64) -> Table {
        let schema = Schema::new(vec![
            ColumnSpec::new("signal", FeatureKind::Numeric, FeatureGroup::Neuropsych),
            ColumnSpec::new("noise", FeatureKind::Numeric, FeatureGroup::Blood),
            ColumnSpec::new(
                "dx",
                FeatureKind::Target { levels: vec!["HC".into(), "NonHC".into()] },
                FeatureGroup::Target,
            ),
        ])
        .unwrap();
        let mut rng = crate::rng::seeded_rng(seed);
        let mut signal = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        let mut dx = Vec::with_capacity(n);
        for _ in 0..n {
            let positive = rng.random::<f64>() < 0.5;
            signal.push(f64::from(u8::from(positive)));
            noise.push(rng.random::<f64>());
            dx.push(if positive { "NonHC".to_string() } else { "HC".to_string() });
        }
        Table::new(
            schema,
            vec![
                Column::Numeric(signal),
                Column::Numeric(noise),
                Column::Categorical(dx),
            ],
            vec![vec![false; n]; 3],
        )
        .unwrap()
    }

    #[test]
    fn copy_of_target_dominates_importance() {
        let t = copy_and_noise_table(400, 1);
        let model = fit_forest(&t, &ForestConfig::default().with_ntree(60).with_seed(2)).unwrap();
        let report = permutation_importance(
            &model,
            &t,
            &ImportanceConfig { n_permutations: 20, ..Default::default() },
        )
        .unwrap();
        let signal = report.entries.iter().find(|e| e.feature == "signal").unwrap();
        let noise = report.entries.iter().find(|e| e.feature == "noise").unwrap();
        assert!(signal.mean_loss_drop > 0.2, "signal drop {}", signal.mean_loss_drop);
        assert!(signal.mean_loss_drop > noise.mean_loss_drop);
    }

    #[test]
    fn pure_noise_importance_is_tiny() {
        let t = copy_and_noise_table(1000, 3);
        let model = fit_forest(&t, &ForestConfig::default().with_ntree(60).with_seed(4)).unwrap();
        let report = permutation_importance(&model, &t, &ImportanceConfig::default()).unwrap();
        assert_eq!(report.n_permutations, 50);
        let noise = report.entries.iter().find(|e| e.feature == "noise").unwrap();
        assert!(
            noise.mean_loss_drop.abs() <= 0.02,
            "noise importance {}",
            noise.mean_loss_drop
        );
    }

    #[test]
    fn zero_permutations_is_empty_config() {
        let t = copy_and_noise_table(50, 5);
        let model = fit_forest(&t, &ForestConfig::default().with_ntree(5)).unwrap();
        let cfg = ImportanceConfig { n_permutations: 0, ..Default::default() };
        assert!(matches!(
            permutation_importance(&model, &t, &cfg),
            Err(SelectError::EmptyConfig(_))
        ));
    }

    #[test]
    fn auc_loss_variant_runs_and_ranks_signal_first() {
        let t = copy_and_noise_table(300, 6);
        let model = fit_forest(&t, &ForestConfig::default().with_ntree(40).with_seed(7)).unwrap();
        let cfg = ImportanceConfig { n_permutations: 15, loss: LossKind::Auc, seed: 8 };
        let report = permutation_importance(&model, &t, &cfg).unwrap();
        let signal = report.entries.iter().find(|e| e.feature == "signal").unwrap();
        let noise = report.entries.iter().find(|e| e.feature == "noise").unwrap();
        assert!(signal.mean_loss_drop > noise.mean_loss_drop);
    }

    #[test]
    fn importance_is_deterministic() {
        let t = copy_and_noise_table(200, 9);
        let model = fit_forest(&t, &ForestConfig::default().with_ntree(30).with_seed(1)).unwrap();
        let cfg = ImportanceConfig { n_permutations: 10, seed: 42, ..Default::default() };
        let a = permutation_importance(&model, &t, &cfg).unwrap();
        let b = permutation_importance(&model, &t, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn binomial_tails_are_exact() {
        // Bin(10, 1/2): P(X ≥ 10) = 2^-10, P(X ≤ 0) = 2^-10
        let (lo, hi) = binomial_two_sided(10, 10);
        assert!((hi - 2f64.powi(-10)).abs() < 1e-15);
        assert!((lo - 1.0).abs() < 1e-12);
        let (lo0, hi0) = binomial_two_sided(0, 10);
        assert!((lo0 - 2f64.powi(-10)).abs() < 1e-15);
        assert!((hi0 - 1.0).abs() < 1e-12);
        // symmetric midpoint
        let (lo5, hi5) = binomial_two_sided(5, 10);
        assert!((lo5 + hi5 - 1.0 - binomial_pmf_10_5()).abs() < 1e-12);
    }

    fn binomial_pmf_10_5() -> f64 {
        252.0 * 0.5f64.powi(10)
    }

    #[test]
    fn boruta_defaults_match_convention() {
        let c = BorutaConfig::default();
        assert_eq!(c.forest_ntree, 500);
        assert_eq!(c.max_rounds, 20);
        assert!((c.alpha - 0.05).abs() < 1e-15);
    }

    #[test]
    fn target_copy_is_confirmed_with_full_hits() {
        let t = copy_and_noise_table(120, 11);
        let cfg = BorutaConfig { forest_ntree: 50, max_rounds: 12, alpha: 0.05, seed: 3 };
        let report = boruta(&t, &cfg).unwrap();
        let signal = report.features.iter().find(|f| f.feature == "signal").unwrap();
        assert_eq!(signal.decision, BorutaDecision::Confirmed);
        assert_eq!(signal.hits, signal.rounds, "perfect predictor must hit every round");
        // shadow names never leak
        assert!(report.features.iter().all(|f| !f.feature.starts_with("shadow_")));
    }

    #[test]
    fn decisions_partition_the_feature_set() {
        let t = copy_and_noise_table(150, 13);
        let cfg = BorutaConfig { forest_ntree: 40, max_rounds: 8, alpha: 0.05, seed: 5 };
        let report = boruta(&t, &cfg).unwrap();
        assert_eq!(report.features.len(), 2);
        for f in &report.features {
            assert!(f.hits <= f.rounds);
            assert!(f.rounds <= report.rounds_run);
        }
        let confirmed = report.decided(BorutaDecision::Confirmed);
        let rejected = report.decided(BorutaDecision::Rejected);
        for c in &confirmed {
            assert!(!rejected.contains(c));
        }
    }

    #[test]
    fn boruta_is_deterministic() {
        let t = copy_and_noise_table(100, 17);
        let cfg = BorutaConfig { forest_ntree: 30, max_rounds: 6, alpha: 0.05, seed: 21 };
        assert_eq!(boruta(&t, &cfg).unwrap(), boruta(&t, &cfg).unwrap());
    }

    #[test]
    fn zero_rounds_is_empty_config() {
        let t = copy_and_noise_table(50, 19);
        let cfg = BorutaConfig { max_rounds: 0, ..Default::default() };
        assert!(matches!(boruta(&t, &cfg), Err(SelectError::EmptyConfig(_))));
    }
}
