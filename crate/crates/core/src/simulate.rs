//! Monte Carlo play of a promise-form scheme against an obedient receiver,
//! optionally with a receiver that deviates once at a chosen step.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{deviation_values, DeviationValues, PersuasionMdp};
use crate::scheme::PromiseScheme;

/// At `step` (0-based) the receiver plays `action` whatever is recommended.
/// If that differs from the recommendation, recommendations stop and the
/// receiver plays its pooled deviation-optimal action for the rest of the
/// episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationPolicy {
    pub step: usize,
    pub action: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `√episodes`.
    pub stderr: f64,
}

impl Estimate {
    fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let constant = samples.windows(2).all(|w| w[0] == w[1]);
        let var = if samples.len() > 1 && !constant {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationComparison {
    pub policy: DeviationPolicy,
    pub sender: Estimate,
    pub receiver: Estimate,
    /// Episodes in which the receiver actually departed from a recommendation.
    pub deviated_episodes: usize,
    /// Deviating minus obedient receiver return, paired by episode seed.
    pub receiver_gain: Estimate,
    /// `√(se_obedient² + se_deviating²)` of the receiver means.
    pub combined_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub episodes: usize,
    pub seed: u64,
    pub sender: Estimate,
    pub receiver: Estimate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub episode_seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationComparison>,
}

#[derive(Clone, Copy, Debug)]
struct Episode {
    sender: f64,
    receiver: f64,
    deviated: bool,
}

fn draw(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    match WeightedIndex::new(weights) {
        Ok(d) => d.sample(rng),
        // Rows are validated distributions; this only guards degenerate input.
        Err(_) => 0,
    }
}

fn play(
    inst: &PersuasionMdp,
    scheme: &PromiseScheme,
    dev: &DeviationValues,
    seed: u64,
    policy: Option<DeviationPolicy>,
) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = draw(&inst.beta, &mut rng);
    let mut iota = 0;
    let mut deviated = false;
    let (mut sender, mut receiver) = (0.0, 0.0);
    for h in 0..inst.horizon {
        let theta = draw(&inst.mu[h][s], &mut rng);
        let a = if deviated {
            dev.argmax[h][s]
        } else {
            let recommended = draw(&scheme.recommend[h][s][iota][theta], &mut rng);
            match policy {
                Some(p) if p.step == h && p.action != recommended => {
                    deviated = true;
                    p.action
                }
                _ => recommended,
            }
        };
        sender += inst.sender_reward[h][s][a][theta];
        receiver += inst.receiver_reward[h][s][a][theta];
        let next = draw(&inst.transition[h][s][a][theta], &mut rng);
        if !deviated {
            iota = scheme.next(h, s, a, iota, next);
        }
        s = next;
    }
    Episode {
        sender,
        receiver,
        deviated,
    }
}

fn run_all(
    inst: &PersuasionMdp,
    scheme: &PromiseScheme,
    dev: &DeviationValues,
    seeds: &[u64],
    policy: Option<DeviationPolicy>,
) -> Vec<Episode> {
    seeds
        .par_iter()
        .map(|&seed| play(inst, scheme, dev, seed, policy))
        .collect()
}

/// Plays `episodes` episodes. Episode `i` uses the `i`-th draw of a ChaCha8
/// stream seeded with `seed`; with a deviation policy the same episode seeds
/// are replayed with the deviating receiver.
pub fn simulate(
    inst: &PersuasionMdp,
    scheme: &PromiseScheme,
    episodes: usize,
    seed: u64,
    deviation: Option<DeviationPolicy>,
) -> Result<SimulationReport> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("at least one episode is required".into()));
    }
    inst.ensure_valid()?;
    scheme.validate(inst)?;
    if let Some(p) = deviation {
        if p.step >= inst.horizon || p.action >= inst.num_actions() {
            return Err(Error::InvalidArgument(format!(
                "deviation at step {} with action {} is outside the instance",
                p.step, p.action
            )));
        }
    }
    let dev = deviation_values(inst);
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let episode_seeds: Vec<u64> = (0..episodes).map(|_| master.gen()).collect();

    let obedient = run_all(inst, scheme, &dev, &episode_seeds, None);
    let sender_samples: Vec<f64> = obedient.iter().map(|e| e.sender).collect();
    let receiver_samples: Vec<f64> = obedient.iter().map(|e| e.receiver).collect();
    let receiver = Estimate::of(&receiver_samples);

    let deviation = deviation.map(|policy| {
        let runs = run_all(inst, scheme, &dev, &episode_seeds, Some(policy));
        let dev_receiver: Vec<f64> = runs.iter().map(|e| e.receiver).collect();
        let gains: Vec<f64> = dev_receiver.iter().zip(&receiver_samples).map(|(d, o)| d - o).collect();
        let dev_estimate = Estimate::of(&dev_receiver);
        DeviationComparison {
            policy,
            sender: Estimate::of(&runs.iter().map(|e| e.sender).collect::<Vec<_>>()),
            receiver: dev_estimate,
            deviated_episodes: runs.iter().filter(|e| e.deviated).count(),
            receiver_gain: Estimate::of(&gains),
            combined_stderr: receiver.stderr.hypot(dev_estimate.stderr),
        }
    });

    Ok(SimulationReport {
        episodes,
        seed,
        sender: Estimate::of(&sender_samples),
        receiver,
        episode_seeds,
        deviation,
    })
}
