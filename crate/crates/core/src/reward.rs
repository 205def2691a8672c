//! Summary reward `V*(y) = w·λ(y)` learned from expert judgments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentCluster;
use crate::error::{Error, Result};
use crate::eval::rouge::{rouge_n, TRUNCATION_TOKENS};
use crate::preflearn::PreferenceRecord;
use crate::scalar::{all_finite, dot, Scalar};
use crate::sumgen::{Summary, SummaryPool};

pub const DEFAULT_REWARD_LEARNING_RATE: f64 = 0.005;
pub const DEFAULT_L2: f64 = 1e-4;
pub const DEFAULT_ITERATIONS: usize = 3000;
const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SummaryFeatureVector(pub Vec<f64>);

impl SummaryFeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Names of the summary features for a concept schema.
pub fn summary_schema(concept_schema: &[String]) -> Vec<String> {
    let mut names: Vec<String> = concept_schema
        .iter()
        .flat_map(|n| [format!("mean_{n}"), format!("max_{n}")])
        .collect();
    names.extend(["length_ratio", "redundancy", "rouge1", "rouge2"].map(String::from));
    names
}

/// Mean and max of every concept feature over the covered concepts, then
/// length ratio, redundancy and ROUGE-1/2 (zeros without references).
pub fn summary_features(
    summary: &Summary,
    cluster: &DocumentCluster,
    references: Option<&[Vec<String>]>,
    length_budget: usize,
) -> SummaryFeatureVector {
    let width = cluster.schema.len();
    let mut mean = vec![0.0; width];
    let mut max = vec![0.0; width];
    let mut n = 0.0;
    for &c in &summary.concept_cover {
        let f = cluster.concepts[c].features.values();
        for k in 0..width {
            mean[k] += f[k];
            max[k] = if n == 0.0 { f[k] } else { f64::max(max[k], f[k]) };
        }
        n += 1.0;
    }
    if n > 0.0 {
        mean.iter_mut().for_each(|m| *m /= n);
    }
    let mut values: Vec<f64> = mean.into_iter().zip(max).flat_map(|(a, b)| [a, b]).collect();
    values.push(summary.length as f64 / length_budget.max(1) as f64);
    values.push(summary.redundancy);
    let (r1, r2) = match references {
        Some(refs) if !refs.is_empty() => {
            let tokens = summary.tokens(cluster);
            (
                rouge_n::<f64, _>(&tokens, refs, 1, Some(TRUNCATION_TOKENS)).unwrap_or(0.0),
                rouge_n::<f64, _>(&tokens, refs, 2, Some(TRUNCATION_TOKENS)).unwrap_or(0.0),
            )
        }
        _ => (0.0, 0.0),
    };
    values.push(r1);
    values.push(r2);
    SummaryFeatureVector(values)
}

pub fn pool_features(
    pool: &SummaryPool,
    cluster: &DocumentCluster,
    references: Option<&[Vec<String>]>,
) -> Vec<SummaryFeatureVector> {
    pool.summaries
        .iter()
        .map(|s| summary_features(s, cluster, references, pool.budget_l))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Point,
    #[default]
    Pairwise,
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMode::Point => "point",
            RewardMode::Pairwise => "pairwise",
        })
    }
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(RewardMode::Point),
            "pairwise" => Ok(RewardMode::Pairwise),
            other => Err(Error::validation(format!("unknown reward mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel<T> {
    pub schema: Vec<String>,
    pub weights: Vec<T>,
    pub mode: RewardMode,
    pub learning_rate: T,
    pub l2: T,
    pub iterations: usize,
}

impl<T: Scalar> RewardModel<T> {
    pub fn new(schema: Vec<String>, mode: RewardMode) -> Self {
        Self {
            weights: vec![T::zero(); schema.len()],
            schema,
            mode,
            learning_rate: T::of(DEFAULT_REWARD_LEARNING_RATE),
            l2: T::of(DEFAULT_L2),
            iterations: DEFAULT_ITERATIONS,
        }
    }

    pub fn for_cluster(cluster: &DocumentCluster, mode: RewardMode) -> Self {
        Self::new(summary_schema(&cluster.schema), mode)
    }

    pub fn with_learning_rate(mut self, lr: T) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_l2(mut self, l2: T) -> Self {
        self.l2 = l2;
        self
    }

    pub fn value(&self, features: &SummaryFeatureVector) -> T {
        dot(&self.weights, features.values())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.weights.len() {
            return Err(Error::SchemaMismatch { expected: self.weights.len(), got: x.len() });
        }
        Ok(())
    }
}

fn to_t<T: Scalar>(x: &[f64]) -> Vec<T> {
    x.iter().map(|&v| T::of(v)).collect()
}

/// `(1/L) Σ (w·x − v)² + l2·‖w‖²`.
pub fn mse_loss<T: Scalar>(w: &[T], samples: &[(Vec<T>, T)], l2: T) -> T {
    let n = T::of_usize(samples.len().max(1));
    let data: T = samples
        .iter()
        .map(|(x, v)| {
            let e = crate::scalar::dot_t(w, x) - *v;
            e * e
        })
        .sum();
    data / n + l2 * crate::scalar::dot_t(w, w)
}

pub fn mse_gradient<T: Scalar>(w: &[T], samples: &[(Vec<T>, T)], l2: T) -> Vec<T> {
    let n = T::of_usize(samples.len().max(1));
    let two = T::of(2.0);
    let mut g: Vec<T> = w.iter().map(|&wi| two * l2 * wi).collect();
    for (x, v) in samples {
        let e = crate::scalar::dot_t(w, x) - *v;
        g.iter_mut().zip(x).for_each(|(gi, &xi)| *gi = *gi + two * e * xi / n);
    }
    g
}

/// `−Σ [y log H + (1 − y) log(1 − H)] + l2·‖w‖²` with `H = σ(w·(x₁ − x₂))`.
pub fn cross_entropy_loss<T: Scalar>(w: &[T], diffs: &[(Vec<T>, u8)], l2: T) -> T {
    let eps = T::of(LOG_CLAMP);
    let hi = T::one() - eps;
    let data: T = diffs
        .iter()
        .map(|(d, label)| {
            let h = crate::scalar::dot_t(w, d).sigmoid().max(eps).min(hi);
            if *label == 1 { -h.ln() } else { -(T::one() - h).ln() }
        })
        .sum();
    data + l2 * crate::scalar::dot_t(w, w)
}

pub fn cross_entropy_gradient<T: Scalar>(w: &[T], diffs: &[(Vec<T>, u8)], l2: T) -> Vec<T> {
    let two = T::of(2.0);
    let mut g: Vec<T> = w.iter().map(|&wi| two * l2 * wi).collect();
    for (d, label) in diffs {
        let h = crate::scalar::dot_t(w, d).sigmoid();
        let y = if *label == 1 { T::one() } else { T::zero() };
        g.iter_mut().zip(d).for_each(|(gi, &di)| *gi = *gi + (h - y) * di);
    }
    g
}

fn descend<T: Scalar>(model: &mut RewardModel<T>, grad: impl Fn(&[T]) -> Vec<T>) {
    for _ in 0..model.iterations {
        let g = grad(&model.weights);
        let lr = model.learning_rate;
        model.weights.iter_mut().zip(&g).for_each(|(w, &gi)| *w = *w - lr * gi);
    }
}

/// Regression on expert scores by full-batch gradient descent.
pub fn fit_point<T: Scalar>(model: &RewardModel<T>, samples: &[(SummaryFeatureVector, f64)]) -> Result<RewardModel<T>> {
    if samples.is_empty() {
        return Err(Error::validation("point-based reward fitting needs at least one sample"));
    }
    let data: Vec<(Vec<T>, T)> = samples
        .iter()
        .map(|(x, v)| {
            model.check(x.values())?;
            Ok((to_t(x.values()), T::of(*v)))
        })
        .collect::<Result<_>>()?;
    let mut out = model.clone();
    out.mode = RewardMode::Point;
    let l2 = model.l2;
    descend(&mut out, |w| mse_gradient(w, &data, l2));
    finite(out)
}

/// Full-batch MSE after every iteration, for monitoring.
pub fn point_training_curve<T: Scalar>(model: &RewardModel<T>, samples: &[(SummaryFeatureVector, f64)]) -> Result<Vec<T>> {
    let data: Vec<(Vec<T>, T)> = samples.iter().map(|(x, v)| (to_t(x.values()), T::of(*v))).collect();
    let mut w = model.weights.clone();
    let mut curve = vec![mse_loss(&w, &data, model.l2)];
    for _ in 0..model.iterations {
        let g = mse_gradient(&w, &data, model.l2);
        w.iter_mut().zip(&g).for_each(|(wi, &gi)| *wi = *wi - model.learning_rate * gi);
        curve.push(mse_loss(&w, &data, model.l2));
    }
    Ok(curve)
}

/// Cross-entropy fit on summary preferences; ids index into `features`.
pub fn fit_pairwise<T: Scalar>(
    model: &RewardModel<T>,
    prefs: &[PreferenceRecord],
    features: &[SummaryFeatureVector],
) -> Result<RewardModel<T>> {
    if prefs.is_empty() {
        return Err(Error::validation("pairwise reward fitting needs at least one preference"));
    }
    let diffs: Vec<(Vec<T>, u8)> = prefs
        .iter()
        .map(|p| {
            let get = |i: usize| {
                features
                    .get(i)
                    .ok_or_else(|| Error::validation(format!("unknown summary id {i}")))
            };
            let (a, b) = (get(p.left_id)?, get(p.right_id)?);
            model.check(a.values())?;
            Ok((a.values().iter().zip(b.values()).map(|(x, y)| T::of(x - y)).collect(), p.label))
        })
        .collect::<Result<_>>()?;
    let mut out = model.clone();
    out.mode = RewardMode::Pairwise;
    let l2 = model.l2;
    descend(&mut out, |w| cross_entropy_gradient(w, &diffs, l2));
    finite(out)
}

fn finite<T: Scalar>(model: RewardModel<T>) -> Result<RewardModel<T>> {
    if all_finite(&model.weights) {
        Ok(model)
    } else {
        Err(Error::validation("reward fitting diverged; lower the learning rate"))
    }
}

/// `H(y1, y2) = 1 / (1 + exp(V*(y2) − V*(y1)))`.
pub fn summary_preference_probability<T: Scalar>(
    model: &RewardModel<T>,
    a: &SummaryFeatureVector,
    b: &SummaryFeatureVector,
) -> T {
    (model.value(a) - model.value(b)).sigmoid()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Greedy max–min diversity: start from the top-scoring summary (index 0)
/// unless something was already asked, then repeatedly add the summary
/// farthest from everything selected so far.
pub fn select_query_summaries(features: &[SummaryFeatureVector], asked: &[usize], k: usize) -> Result<Vec<usize>> {
    let available = features.len().saturating_sub(asked.len());
    if k > available {
        return Err(Error::validation(format!("asked for {k} summaries but only {available} are available")));
    }
    let mut selected: Vec<usize> = asked.to_vec();
    let mut picked = Vec::with_capacity(k);
    while picked.len() < k {
        let next = if selected.is_empty() {
            0
        } else {
            let mut best: Option<(f64, usize)> = None;
            for i in 0..features.len() {
                if selected.contains(&i) {
                    continue;
                }
                let d = selected
                    .iter()
                    .map(|&j| distance(features[i].values(), features[j].values()))
                    .fold(f64::INFINITY, f64::min);
                if best.is_none_or(|(bd, _)| d > bd + 1e-12) {
                    best = Some((d, i));
                }
            }
            best.expect("k ≤ available").1
        };
        selected.push(next);
        picked.push(next);
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> SummaryFeatureVector {
        SummaryFeatureVector(v.to_vec())
    }

    #[test]
    fn schema_layout() {
        let s = summary_schema(&["a".into(), "b".into()]);
        assert_eq!(s, ["mean_a", "max_a", "mean_b", "max_b", "length_ratio", "redundancy", "rouge1", "rouge2"]);
    }

    #[test]
    fn single_point_fit() {
        let model = RewardModel::<f64>::new(vec!["x".into(), "y".into()], RewardMode::Point).with_iterations(20_000);
        assert_eq!(model.learning_rate, 0.005);
        let sample = (fv(&[0.5, 1.0]), 0.8);
        let fitted = fit_point(&model, std::slice::from_ref(&sample)).unwrap();
        assert!((fitted.value(&sample.0) - 0.8).abs() < 1e-3);
        assert!(fit_point(&model, &[]).is_err());
    }

    #[test]
    fn point_curve_is_non_increasing() {
        let model = RewardModel::<f64>::new(vec!["x".into(), "y".into()], RewardMode::Point).with_iterations(500);
        let samples = vec![(fv(&[0.1, 0.9]), 0.3), (fv(&[0.7, 0.2]), 0.9), (fv(&[0.4, 0.4]), 0.5)];
        let curve = point_training_curve(&model, &samples).unwrap();
        assert!(curve.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn single_preference_fit() {
        let model = RewardModel::<f64>::new(vec!["x".into(), "y".into()], RewardMode::Pairwise);
        let feats = vec![fv(&[0.2, 0.9]), fv(&[0.8, 0.1])];
        let fitted = fit_pairwise(&model, &[PreferenceRecord::new(0, 1, 1, 0).unwrap()], &feats).unwrap();
        assert!(fitted.value(&feats[0]) > fitted.value(&feats[1]));
        assert!(fit_pairwise(&model, &[], &feats).is_err());
        let p = summary_preference_probability(&fitted, &feats[0], &feats[1]);
        let q = summary_preference_probability(&fitted, &feats[1], &feats[0]);
        assert!((p + q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn swapped_preferences_fit_identically() {
        let model = RewardModel::<f64>::new(vec!["x".into(), "y".into()], RewardMode::Pairwise);
        let feats = vec![fv(&[0.2, 0.9]), fv(&[0.8, 0.1]), fv(&[0.5, 0.5])];
        let prefs = vec![PreferenceRecord::new(0, 1, 1, 0).unwrap(), PreferenceRecord::new(2, 1, 0, 1).unwrap()];
        let flipped: Vec<_> = prefs.iter().map(|p| p.flipped()).collect();
        let a = fit_pairwise(&model, &prefs, &feats).unwrap();
        let b = fit_pairwise(&model, &flipped, &feats).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn diversity_selection() {
        let feats = vec![fv(&[0.0, 0.0]), fv(&[0.1, 0.0]), fv(&[1.0, 1.0]), fv(&[0.0, 1.0])];
        assert_eq!(select_query_summaries(&feats, &[], 4).unwrap().len(), 4);
        let picks = select_query_summaries(&feats, &[], 2).unwrap();
        assert_eq!(picks, vec![0, 2]);
        assert_eq!(select_query_summaries(&feats, &[0, 2], 1).unwrap(), vec![3]);
        assert!(select_query_summaries(&feats, &[], 5).is_err());
    }
}
