use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{non_atomic_arbitrage, AtomicityError, SyntheticSpec, TradeStream, TwoExchangeMarket};

/// Where each trial's intermediary trades come from.
#[derive(Debug, Clone)]
pub enum StreamSource {
    /// A fresh random stream per trial.
    Synthetic(SyntheticSpec),
    /// Trial `t` replays the trace starting at its `t`-th event.
    Replay(TradeStream),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub trials: usize,
    pub seed: u64,
    pub resamples: usize,
    /// Two-sided confidence level of the bootstrap interval.
    pub level: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            trials: 1_000,
            seed: 0,
            resamples: 2_000,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub i: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Percentile bootstrap interval of the mean. Every call with the same
/// `seed` and sample count draws the same resamples.
fn bootstrap_ci(samples: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let n = samples.len();
    let mut rng = trial_rng(seed, u64::MAX);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    let pick = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (pick(tail), pick(1.0 - tail))
}

/// Mean profit difference and its bootstrap interval for each `i`. Every
/// trial uses one stream for all `i`, so rows differ only in how many of its
/// events land between the legs.
pub fn sweep(
    market: &TwoExchangeMarket,
    budget: f64,
    source: &StreamSource,
    i_values: &[usize],
    config: &SweepConfig,
) -> Result<Vec<SweepRow>, AtomicityError> {
    market.validate()?;
    if config.trials == 0 || config.resamples == 0 {
        return Err(AtomicityError::Invalid(
            "trials and resamples must be >= 1".into(),
        ));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(AtomicityError::Invalid(
            "confidence level must lie in (0, 1)".into(),
        ));
    }
    let longest = i_values.iter().copied().max().unwrap_or(0);
    if let StreamSource::Replay(trace) = source {
        let needed = config.trials - 1 + longest;
        if trace.events.len() < needed {
            return Err(AtomicityError::StreamExhausted {
                needed,
                available: trace.events.len(),
            });
        }
    }

    let per_trial: Vec<Vec<f64>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let owned;
            let events = match source {
                StreamSource::Synthetic(spec) => {
                    owned = TradeStream::synthetic(
                        spec,
                        longest,
                        &mut trial_rng(config.seed, t as u64),
                    )?;
                    &owned.events[..]
                }
                StreamSource::Replay(trace) => &trace.events[t..],
            };
            i_values
                .iter()
                .map(|&i| {
                    non_atomic_arbitrage(market, budget, events, i).map(|o| o.profit_difference)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    Ok(i_values
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let samples: Vec<f64> = per_trial.iter().map(|row| row[k]).collect();
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let (ci_low, ci_high) =
                bootstrap_ci(&samples, config.resamples, config.level, config.seed);
            SweepRow {
                i,
                mean,
                ci_low,
                ci_high,
                trials: samples.len(),
            }
        })
        .collect())
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}
