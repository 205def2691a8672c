//! Bradley–Terry concept utility learned from pairwise preferences.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Concept, DocumentCluster};
use crate::error::{Error, Result};
use crate::scalar::{all_finite, dot, Scalar};

pub const DEFAULT_CONCEPT_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_EPOCHS: usize = 50;
const LOG_CLAMP: f64 = 1e-12;
const MODEL_VERSION: u32 = 1;

/// One answered pairwise query. `label == 1` means left was preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub left_id: usize,
    pub right_id: usize,
    pub label: u8,
    pub round: usize,
}

impl PreferenceRecord {
    pub fn new(left_id: usize, right_id: usize, label: u8, round: usize) -> Result<Self> {
        if left_id == right_id {
            return Err(Error::validation("a preference needs two distinct items"));
        }
        if label > 1 {
            return Err(Error::validation(format!("label must be 0 or 1, got {label}")));
        }
        Ok(Self { left_id, right_id, label, round })
    }

    /// Same judgment with the sides swapped.
    pub fn flipped(self) -> Self {
        Self { left_id: self.right_id, right_id: self.left_id, label: 1 - self.label, ..self }
    }

    pub fn winner(&self) -> usize {
        if self.label == 1 {
            self.left_id
        } else {
            self.right_id
        }
    }
}

/// Linear utility `U*(c) = w·φ(c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityModel<T> {
    #[serde(default = "model_version")]
    pub version: u32,
    pub schema: Vec<String>,
    pub weights: Vec<T>,
    pub learning_rate: T,
    pub epochs: usize,
    pub seed: u64,
}

fn model_version() -> u32 {
    MODEL_VERSION
}

impl<T: Scalar> UtilityModel<T> {
    /// Zero weights over `schema`.
    pub fn new(schema: Vec<String>) -> Self {
        let n = schema.len();
        Self {
            version: MODEL_VERSION,
            schema,
            weights: vec![T::zero(); n],
            learning_rate: T::of(DEFAULT_CONCEPT_LEARNING_RATE),
            epochs: DEFAULT_EPOCHS,
            seed: 0,
        }
    }

    pub fn for_cluster(cluster: &DocumentCluster) -> Self {
        Self::new(cluster.schema.clone())
    }

    pub fn with_learning_rate(mut self, lr: T) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self> {
        if weights.len() != self.schema.len() {
            return Err(Error::SchemaMismatch { expected: self.schema.len(), got: weights.len() });
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let model: Self = serde_json::from_str(raw).map_err(|e| Error::Parse(e.to_string()))?;
        if model.version != MODEL_VERSION {
            return Err(Error::validation(format!("unsupported model version {}", model.version)));
        }
        if model.weights.len() != model.schema.len() || !all_finite(&model.weights) {
            return Err(Error::validation("model weights do not match schema"));
        }
        Ok(model)
    }

    fn check(&self, concept: &Concept) -> Result<()> {
        if concept.features.len() != self.weights.len() {
            return Err(Error::SchemaMismatch { expected: self.weights.len(), got: concept.features.len() });
        }
        Ok(())
    }
}

pub fn utility<T: Scalar>(model: &UtilityModel<T>, concept: &Concept) -> Result<T> {
    model.check(concept)?;
    Ok(dot(&model.weights, concept.features.values()))
}

/// Utilities of every concept, indexed by concept id.
pub fn utilities<T: Scalar>(model: &UtilityModel<T>, cluster: &DocumentCluster) -> Result<Vec<T>> {
    cluster.concepts.iter().map(|c| utility(model, c)).collect()
}

/// `1 / (1 + exp(U*(b) − U*(a)))`.
pub fn preference_probability<T: Scalar>(model: &UtilityModel<T>, a: &Concept, b: &Concept) -> Result<T> {
    Ok((utility(model, a)? - utility(model, b)?).sigmoid())
}

fn concept<'a>(cluster: &'a DocumentCluster, id: usize) -> Result<&'a Concept> {
    cluster
        .concepts
        .get(id)
        .ok_or_else(|| Error::validation(format!("unknown concept id {id}")))
}

fn feature_diff<T: Scalar>(cluster: &DocumentCluster, p: &PreferenceRecord) -> Result<Vec<T>> {
    let a = concept(cluster, p.left_id)?;
    let b = concept(cluster, p.right_id)?;
    if a.features.len() != b.features.len() {
        return Err(Error::SchemaMismatch { expected: a.features.len(), got: b.features.len() });
    }
    Ok(a.features.values().iter().zip(b.features.values()).map(|(x, y)| T::of(x - y)).collect())
}

/// Log-likelihood of a set of labeled differences under weights `w`.
pub fn log_likelihood_of<T: Scalar>(w: &[T], diffs: &[(Vec<T>, u8)]) -> T {
    let eps = T::of(LOG_CLAMP);
    let hi = T::one() - eps;
    diffs
        .iter()
        .map(|(d, label)| {
            let h = crate::scalar::dot_t(w, d).sigmoid().max(eps).min(hi);
            let y = if *label == 1 { T::one() } else { T::zero() };
            y * h.ln() + (T::one() - y) * (T::one() - h).ln()
        })
        .sum()
}

/// Analytic gradient of [`log_likelihood_of`]: `Σ (y − H)(φa − φb)`.
pub fn gradient_of<T: Scalar>(w: &[T], diffs: &[(Vec<T>, u8)]) -> Vec<T> {
    let mut g = vec![T::zero(); w.len()];
    for (d, label) in diffs {
        let h = crate::scalar::dot_t(w, d).sigmoid();
        let y = if *label == 1 { T::one() } else { T::zero() };
        let r = y - h;
        g.iter_mut().zip(d).for_each(|(gi, &di)| *gi = *gi + r * di);
    }
    g
}

fn labeled_diffs<T: Scalar>(prefs: &[PreferenceRecord], cluster: &DocumentCluster) -> Result<Vec<(Vec<T>, u8)>> {
    prefs.iter().map(|p| Ok((feature_diff(cluster, p)?, p.label))).collect()
}

/// The objective `J_x(w)` for the current weights.
pub fn log_likelihood<T: Scalar>(model: &UtilityModel<T>, prefs: &[PreferenceRecord], cluster: &DocumentCluster) -> Result<T> {
    Ok(log_likelihood_of(&model.weights, &labeled_diffs(prefs, cluster)?))
}

pub fn gradient<T: Scalar>(model: &UtilityModel<T>, prefs: &[PreferenceRecord], cluster: &DocumentCluster) -> Result<Vec<T>> {
    Ok(gradient_of(&model.weights, &labeled_diffs(prefs, cluster)?))
}

fn ascend<T: Scalar>(w: &mut [T], lr: T, d: &[T], label: u8) {
    let h = crate::scalar::dot_t(w, d).sigmoid();
    let y = if label == 1 { T::one() } else { T::zero() };
    let step = lr * (y - h);
    w.iter_mut().zip(d).for_each(|(wi, &di)| *wi = *wi + step * di);
}

/// Stochastic gradient ascent on `J_x`, reshuffling every epoch.
pub fn fit<T: Scalar>(model: &UtilityModel<T>, prefs: &[PreferenceRecord], cluster: &DocumentCluster) -> Result<UtilityModel<T>> {
    if prefs.is_empty() {
        return Err(Error::validation("cannot fit a utility model without preferences"));
    }
    let diffs = labeled_diffs::<T>(prefs, cluster)?;
    check_width(model, &diffs)?;
    let mut out = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    for _ in 0..model.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            ascend(&mut out.weights, model.learning_rate, &diffs[i].0, diffs[i].1);
        }
    }
    Ok(out)
}

/// Full-batch gradient ascent; returns the model and `J_x` after each step.
pub fn fit_full_batch<T: Scalar>(
    model: &UtilityModel<T>,
    prefs: &[PreferenceRecord],
    cluster: &DocumentCluster,
    iterations: usize,
) -> Result<(UtilityModel<T>, Vec<T>)> {
    if prefs.is_empty() {
        return Err(Error::validation("cannot fit a utility model without preferences"));
    }
    let diffs = labeled_diffs::<T>(prefs, cluster)?;
    check_width(model, &diffs)?;
    let mut out = model.clone();
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(log_likelihood_of(&out.weights, &diffs));
    for _ in 0..iterations {
        let g = gradient_of(&out.weights, &diffs);
        out.weights.iter_mut().zip(&g).for_each(|(w, &gi)| *w = *w + model.learning_rate * gi);
        trace.push(log_likelihood_of(&out.weights, &diffs));
    }
    Ok((out, trace))
}

/// Warm-start update after a new answer: one step on `latest`, then one
/// in-order pass over `history` (which normally already contains it).
pub fn refit_incremental<T: Scalar>(
    model: &UtilityModel<T>,
    latest: &PreferenceRecord,
    history: &[PreferenceRecord],
    cluster: &DocumentCluster,
) -> Result<UtilityModel<T>> {
    let mut out = model.clone();
    let d = feature_diff::<T>(cluster, latest)?;
    check_width(model, &[(d.clone(), latest.label)])?;
    ascend(&mut out.weights, model.learning_rate, &d, latest.label);
    for p in history {
        let d = feature_diff::<T>(cluster, p)?;
        ascend(&mut out.weights, model.learning_rate, &d, p.label);
    }
    Ok(out)
}

fn check_width<T: Scalar>(model: &UtilityModel<T>, diffs: &[(Vec<T>, u8)]) -> Result<()> {
    match diffs.first() {
        Some((d, _)) if d.len() != model.weights.len() => {
            Err(Error::SchemaMismatch { expected: model.weights.len(), got: d.len() })
        }
        _ => Ok(()),
    }
}

/// `rank[i]` = number of items strictly below item `i`, ties ordered by id.
pub fn rank_values<T: PartialOrd + Copy>(values: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos;
    }
    rank
}

/// Summary weights from utilities: `(rank / (N - 1))²`, so the top concept
/// weighs 1 and the bottom one 0.
pub fn rank_weights<T: PartialOrd + Copy>(values: &[T]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![1.0; n];
    }
    let top = (n - 1) as f64;
    rank_values(values).into_iter().map(|r| (r as f64 / top).powi(2)).collect()
}

/// Rank of every concept (indexed by concept id) under the model.
pub fn rank<T: Scalar>(model: &UtilityModel<T>, cluster: &DocumentCluster) -> Result<Vec<usize>> {
    Ok(rank_values(&utilities(model, cluster)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ConceptUnit, FeatureVector};
    use std::collections::BTreeSet;

    pub(crate) fn synthetic(features: Vec<Vec<f64>>) -> DocumentCluster {
        let n = features[0].len();
        let concepts = features
            .into_iter()
            .enumerate()
            .map(|(id, f)| Concept {
                id,
                unit: ConceptUnit::Unigram,
                surface: format!("c{id}"),
                sentence_ids: BTreeSet::from([0]),
                features: FeatureVector(f),
            })
            .collect();
        let mut cluster = DocumentCluster::from_documents(
            "s",
            vec![crate::corpus::Document { id: "d".into(), text: "x.".into() }],
            vec![],
            ConceptUnit::Unigram,
        )
        .unwrap();
        cluster.concepts = concepts;
        cluster.schema = (0..n).map(|k| format!("f{k}")).collect();
        cluster
    }

    #[test]
    fn record_validation() {
        assert!(PreferenceRecord::new(1, 1, 1, 0).is_err());
        assert!(PreferenceRecord::new(1, 2, 2, 0).is_err());
        let p = PreferenceRecord::new(1, 2, 1, 0).unwrap();
        assert_eq!(p.flipped(), PreferenceRecord { left_id: 2, right_id: 1, label: 0, round: 0 });
        assert_eq!(p.winner(), 1);
    }

    #[test]
    fn zero_and_one_hot_utilities() {
        let cluster = synthetic(vec![vec![0.2, 0.7, 0.1], vec![0.9, 0.3, 0.5]]);
        let model = UtilityModel::<f64>::for_cluster(&cluster);
        assert_eq!(utility(&model, &cluster.concepts[1]).unwrap(), 0.0);
        let model = model.with_weights(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(utility(&model, &cluster.concepts[0]).unwrap(), 0.7);
        assert_eq!(utility(&model, &cluster.concepts[1]).unwrap(), 0.3);
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let cluster = synthetic(vec![vec![0.2, 0.7], vec![0.9, 0.3]]);
        let model = UtilityModel::<f64>::new(vec!["x".into()]);
        assert!(matches!(utility(&model, &cluster.concepts[0]), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn logistic_values() {
        let cluster = synthetic(vec![vec![2.0], vec![0.0]]);
        let model = UtilityModel::<f64>::for_cluster(&cluster);
        let p = preference_probability(&model, &cluster.concepts[0], &cluster.concepts[1]).unwrap();
        assert_eq!(p, 0.5);
        let model = model.with_weights(vec![1.0]).unwrap();
        let p = preference_probability(&model, &cluster.concepts[0], &cluster.concepts[1]).unwrap();
        assert!((p - 0.8807970779778823).abs() < 1e-12);
    }

    #[test]
    fn single_preference_fit() {
        let cluster = synthetic(vec![vec![0.1, 0.8], vec![0.6, 0.2]]);
        let model = UtilityModel::<f64>::for_cluster(&cluster);
        assert_eq!(model.learning_rate, 0.001);
        let fitted = fit(&model, &[PreferenceRecord::new(0, 1, 1, 0).unwrap()], &cluster).unwrap();
        let p = preference_probability(&fitted, &cluster.concepts[0], &cluster.concepts[1]).unwrap();
        assert!(p > 0.5);
    }

    #[test]
    fn empty_preferences_rejected() {
        let cluster = synthetic(vec![vec![0.1], vec![0.6]]);
        let model = UtilityModel::<f64>::for_cluster(&cluster);
        assert!(fit(&model, &[], &cluster).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_values(&[3.0, 1.0, 2.0]), vec![2, 0, 1]);
        assert_eq!(rank_values(&[1.0; 4]), vec![0, 1, 2, 3]);
        assert_eq!(rank_values(&[5.0, 1.0, 5.0]), vec![1, 0, 2]);
    }

    #[test]
    fn model_json_roundtrip_and_version_check() {
        let model = UtilityModel::<f64>::new(vec!["a".into(), "b".into()]).with_weights(vec![0.5, -1.0]).unwrap();
        let back = UtilityModel::<f64>::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        let bad = model.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(UtilityModel::<f64>::from_json(&bad).is_err());
    }

    #[test]
    fn full_batch_objective_is_non_decreasing() {
        let cluster = synthetic(vec![vec![0.1, 0.8], vec![0.6, 0.2], vec![0.3, 0.3], vec![0.9, 0.9]]);
        let prefs = vec![
            PreferenceRecord::new(0, 1, 1, 0).unwrap(),
            PreferenceRecord::new(3, 2, 1, 1).unwrap(),
            PreferenceRecord::new(2, 1, 0, 2).unwrap(),
            PreferenceRecord::new(0, 3, 0, 3).unwrap(),
        ];
        let model = UtilityModel::<f64>::for_cluster(&cluster).with_learning_rate(0.1);
        let (_, trace) = fit_full_batch(&model, &prefs, &cluster, 200).unwrap();
        assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn f32_and_f64_agree_on_ranking() {
        let cluster = synthetic(vec![vec![0.1, 0.8], vec![0.6, 0.2], vec![0.3, 0.3], vec![0.9, 0.9]]);
        let prefs = vec![
            PreferenceRecord::new(0, 1, 1, 0).unwrap(),
            PreferenceRecord::new(3, 2, 1, 1).unwrap(),
            PreferenceRecord::new(3, 0, 1, 2).unwrap(),
        ];
        let m64 = fit(&UtilityModel::<f64>::for_cluster(&cluster), &prefs, &cluster).unwrap();
        let m32 = fit(&UtilityModel::<f32>::for_cluster(&cluster), &prefs, &cluster).unwrap();
        assert_eq!(rank(&m64, &cluster).unwrap(), rank(&m32, &cluster).unwrap());
    }
}
