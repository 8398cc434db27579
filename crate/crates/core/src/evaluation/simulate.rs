//! Monte Carlo estimate of majority-vote accuracy for independent models.
//!
//! Each model is correct on a video with its own fixed probability,
//! independently of the other models. Real fine-tuned models make
//! correlated mistakes, so the estimate is an upper-bound style sanity
//! check of the ensemble gain, not a prediction of measured accuracy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{majority_vote, EvalError, TiePolicy};
use crate::label::Label;

const MAX_EXACT_MODELS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub per_model_accuracy: Vec<f64>,
    pub n_videos: usize,
    pub seed: u64,
    /// Share of positive videos. Only matters when ties can occur.
    pub prevalence: f64,
    pub tie_policy: TiePolicy,
}

impl SimulationConfig {
    pub fn new(per_model_accuracy: Vec<f64>, n_videos: usize, seed: u64) -> Self {
        Self {
            per_model_accuracy,
            n_videos,
            seed,
            prevalence: 0.5,
            tie_policy: TiePolicy::Positive,
        }
    }

    fn check(&self) -> Result<(), EvalError> {
        if self.per_model_accuracy.is_empty() {
            return Err(EvalError::Domain("at least one model accuracy is required".into()));
        }
        if let Some(bad) = self
            .per_model_accuracy
            .iter()
            .find(|a| !(**a > 0.0 && **a <= 1.0))
        {
            return Err(EvalError::Domain(format!("accuracy {bad} must lie in (0, 1]")));
        }
        if self.n_videos == 0 {
            return Err(EvalError::Domain("n_videos must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.prevalence) {
            return Err(EvalError::Domain(format!(
                "prevalence {} must lie in [0, 1]",
                self.prevalence
            )));
        }
        if self.tie_policy == TiePolicy::Error && self.per_model_accuracy.len() % 2 == 0 {
            return Err(EvalError::Domain(
                "tie policy `error` cannot be simulated with an even number of models".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub vote_accuracy: f64,
    pub simulated_model_accuracy: Vec<f64>,
    /// Exact vote accuracy under the same independence model, when the
    /// ensemble is small enough to enumerate.
    pub exact_vote_accuracy: Option<f64>,
    pub n_videos: usize,
    pub seed: u64,
    pub assumption: String,
}

pub fn simulate_ensemble(config: &SimulationConfig) -> Result<SimulationResult, EvalError> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.per_model_accuracy.len();
    let mut model_correct = vec![0usize; k];
    let mut vote_correct = 0usize;
    let mut labels = vec![Label::Negative; k];
    for _ in 0..config.n_videos {
        let truth = Label::from(rng.random_bool(config.prevalence));
        for (i, &acc) in config.per_model_accuracy.iter().enumerate() {
            let correct = rng.random_bool(acc);
            if correct {
                model_correct[i] += 1;
            }
            labels[i] = if correct { truth } else { flip(truth) };
        }
        if majority_vote(&labels, config.tie_policy)? == truth {
            vote_correct += 1;
        }
    }
    let n = config.n_videos as f64;
    Ok(SimulationResult {
        vote_accuracy: vote_correct as f64 / n,
        simulated_model_accuracy: model_correct.iter().map(|&c| c as f64 / n).collect(),
        exact_vote_accuracy: ensemble_accuracy_exact(
            &config.per_model_accuracy,
            config.prevalence,
            config.tie_policy,
        ),
        n_videos: config.n_videos,
        seed: config.seed,
        assumption: "models err independently of each other".into(),
    })
}

/// Sums over every correct/incorrect pattern of the ensemble. `None` when
/// there are too many models to enumerate or ties raise errors.
pub fn ensemble_accuracy_exact(accuracies: &[f64], prevalence: f64, tie: TiePolicy) -> Option<f64> {
    let k = accuracies.len();
    if k == 0 || k > MAX_EXACT_MODELS || (tie == TiePolicy::Error && k % 2 == 0) {
        return None;
    }
    let mut total = 0.0;
    for mask in 0u32..(1 << k) {
        let p: f64 = accuracies
            .iter()
            .enumerate()
            .map(|(i, &a)| if mask >> i & 1 == 1 { a } else { 1.0 - a })
            .product();
        let correct = mask.count_ones() as usize;
        let wrong = k - correct;
        let hit = |truth: Label| -> f64 {
            let decided = if correct > wrong {
                truth
            } else if wrong > correct {
                flip(truth)
            } else {
                match tie {
                    TiePolicy::Positive => Label::Positive,
                    TiePolicy::Negative => Label::Negative,
                    TiePolicy::Error => unreachable!("odd ensembles cannot tie"),
                }
            };
            f64::from(u8::from(decided == truth))
        };
        total += p * (prevalence * hit(Label::Positive) + (1.0 - prevalence) * hit(Label::Negative));
    }
    Some(total)
}

fn flip(label: Label) -> Label {
    match label {
        Label::Positive => Label::Negative,
        Label::Negative => Label::Positive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_models_vote_perfectly() {
        let r = simulate_ensemble(&SimulationConfig::new(vec![1.0, 1.0, 1.0], 1000, 1)).unwrap();
        assert_eq!(r.vote_accuracy, 1.0);
        assert_eq!(r.exact_vote_accuracy, Some(1.0));
    }

    #[test]
    fn single_model_is_identity() {
        let r = simulate_ensemble(&SimulationConfig::new(vec![0.819], 200_000, 3)).unwrap();
        assert!((r.vote_accuracy - 0.819).abs() < 0.01, "{}", r.vote_accuracy);
        assert!((r.exact_vote_accuracy.unwrap() - 0.819).abs() < 1e-12);
    }

    #[test]
    fn seeded_runs_repeat() {
        let cfg = SimulationConfig::new(vec![0.7, 0.6, 0.8], 5000, 42);
        assert_eq!(simulate_ensemble(&cfg).unwrap(), simulate_ensemble(&cfg).unwrap());
        let other = SimulationConfig { seed: 43, ..cfg.clone() };
        assert_ne!(
            simulate_ensemble(&cfg).unwrap().vote_accuracy,
            simulate_ensemble(&other).unwrap().vote_accuracy
        );
    }

    #[test]
    fn invalid_inputs() {
        for cfg in [
            SimulationConfig::new(vec![], 10, 0),
            SimulationConfig::new(vec![0.0], 10, 0),
            SimulationConfig::new(vec![1.2], 10, 0),
            SimulationConfig::new(vec![0.5], 0, 0),
            SimulationConfig {
                tie_policy: TiePolicy::Error,
                ..SimulationConfig::new(vec![0.5, 0.6], 10, 0)
            },
        ] {
            assert!(matches!(simulate_ensemble(&cfg), Err(EvalError::Domain(_))), "{cfg:?}");
        }
    }

    #[test]
    fn even_ensemble_tie_depends_on_prevalence() {
        // Two coin-flip models: ties half the time, resolved positive.
        let all_pos = ensemble_accuracy_exact(&[0.5, 0.5], 1.0, TiePolicy::Positive).unwrap();
        let all_neg = ensemble_accuracy_exact(&[0.5, 0.5], 0.0, TiePolicy::Positive).unwrap();
        assert!((all_pos - 0.75).abs() < 1e-12);
        assert!((all_neg - 0.25).abs() < 1e-12);
    }
}
