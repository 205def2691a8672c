//! Run configuration shared by the offline pipeline and the service.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::active::{SigmoidForm, Strategy};
use crate::corpus::ConceptUnit;
use crate::error::{Error, Result};
use crate::policy::PolicyConfig;
use crate::preflearn::{DEFAULT_CONCEPT_LEARNING_RATE, DEFAULT_EPOCHS};
use crate::reward::{RewardMode, DEFAULT_ITERATIONS, DEFAULT_L2, DEFAULT_REWARD_LEARNING_RATE};
use crate::simuser::{DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_GAMMA};

/// Which parts of the pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Active selection, preference learning, reward and policy.
    #[default]
    Full,
    /// Random concept pairs instead of active selection.
    Ac,
    /// No preference learner: every concept weighs the same.
    Pr,
    /// The generator's best summary, without reward or policy learning.
    Ge,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::Ac, Variant::Pr, Variant::Ge];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Ac => "ac",
            Variant::Pr => "pr",
            Variant::Ge => "ge",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub unit: ConceptUnit,
    /// Query budget `t`.
    pub budget: usize,
    /// Summary length limit `L`; summaries hold fewer than `L` tokens.
    pub length_budget: usize,
    pub strategy: Strategy,
    pub variant: Variant,
    pub seed: u64,
    /// γ₁.
    pub concept_learning_rate: f64,
    pub epochs: usize,
    /// Retrain from scratch after every answer instead of a warm-start pass.
    pub full_refit: bool,
    pub sigmoid_form: SigmoidForm,
    pub local_search_iters: usize,
    pub pool_size: usize,
    pub redundancy_cap: f64,
    pub reward_mode: RewardMode,
    /// Number of expert judgments collected for the reward model.
    pub reward_budget: usize,
    /// γ₂.
    pub reward_learning_rate: f64,
    pub reward_iterations: usize,
    pub reward_l2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub policy: PolicyConfig,
    /// Label-flip probability of the simulated user.
    pub user_noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            unit: ConceptUnit::Bigram,
            budget: 20,
            length_budget: 40,
            strategy: Strategy::Heuristic,
            variant: Variant::Full,
            seed: 0,
            concept_learning_rate: DEFAULT_CONCEPT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            full_refit: false,
            sigmoid_form: SigmoidForm::Logistic,
            local_search_iters: 200,
            pool_size: 20,
            redundancy_cap: 0.25,
            reward_mode: RewardMode::Pairwise,
            reward_budget: 10,
            reward_learning_rate: DEFAULT_REWARD_LEARNING_RATE,
            reward_iterations: DEFAULT_ITERATIONS,
            reward_l2: DEFAULT_L2,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            policy: PolicyConfig::default(),
            user_noise: 0.0,
        }
    }
}

impl RunConfig {
    pub fn from_json(raw: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(raw).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::validation(m));
        if self.budget == 0 && self.variant != Variant::Pr {
            return fail("query budget must be at least 1");
        }
        if self.length_budget == 0 {
            return fail("summary length must be at least 1");
        }
        if self.pool_size == 0 {
            return fail("pool size must be at least 1");
        }
        if self.epochs == 0 || self.reward_iterations == 0 || self.policy.episodes == 0 {
            return fail("epochs, reward iterations and policy episodes must be positive");
        }
        let rates = [self.concept_learning_rate, self.reward_learning_rate, self.policy.learning_rate];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return fail("learning rates must be positive");
        }
        if !(self.reward_l2 >= 0.0) || !(self.redundancy_cap >= 0.0) {
            return fail("regularization and redundancy cap must be non-negative");
        }
        if !(0.0..1.0).contains(&self.user_noise) {
            return fail("user noise must lie in [0, 1)");
        }
        if ![self.alpha, self.beta, self.gamma].iter().all(|v| v.is_finite()) {
            return fail("reward coefficients must be finite");
        }
        Ok(())
    }

    /// The strategy actually used once the variant is taken into account.
    pub fn effective_strategy(&self) -> Strategy {
        if self.variant == Variant::Ac {
            Strategy::Random
        } else {
            self.strategy
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_constants() {
        let c = RunConfig::default();
        assert_eq!(c.concept_learning_rate, 0.001);
        assert_eq!(c.reward_learning_rate, 0.005);
        assert_eq!((c.alpha, c.beta, c.gamma), (0.8, 0.5, 0.25));
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let c = RunConfig::from_json(r#"{"budget": 7, "variant": "ge", "unit": "sentence"}"#).unwrap();
        assert_eq!((c.budget, c.variant, c.unit), (7, Variant::Ge, ConceptUnit::Sentence));
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert!(RunConfig::from_json(r#"{"budget": 0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"nonsense": 1}"#).is_err());
    }

    #[test]
    fn variant_names() {
        assert_eq!("GE".parse::<Variant>().unwrap(), Variant::Ge);
        assert!("xx".parse::<Variant>().is_err());
        let ac = RunConfig { variant: Variant::Ac, ..RunConfig::default() };
        assert_eq!(ac.effective_strategy(), Strategy::Random);
    }
}
