use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

pub const DEFAULT_REPETITIONS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    EmpiricalResample,
    UniformGuess,
    FixedValue,
}

impl BaselineKind {
    pub fn token(self) -> &'static str {
        match self {
            BaselineKind::EmpiricalResample => "empirical",
            BaselineKind::UniformGuess => "uniform",
            BaselineKind::FixedValue => "fixed",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" | "empirical_resample" => Ok(BaselineKind::EmpiricalResample),
            "uniform" | "uniform_guess" => Ok(BaselineKind::UniformGuess),
            "fixed" | "fixed_value" => Ok(BaselineKind::FixedValue),
            other => Err(Error::validation(format!("unknown baseline kind \"{other}\""))),
        }
    }
}

/// How uniform guesses are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformDraw {
    /// Whole years in `[a, b]`.
    #[default]
    Integer,
    /// Reals in `[a, b)`.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub kind: BaselineKind,
    pub mae: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_value: Option<u32>,
    pub repetitions: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Standard error of the Monte Carlo mean.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<[u32; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draw: Option<UniformDraw>,
}

fn check_inputs(ages: &[u32], repetitions: u64) -> Result<()> {
    if ages.is_empty() {
        return Err(Error::validation("baseline needs at least one test age"));
    }
    if repetitions == 0 {
        return Err(Error::validation("baseline needs at least one repetition"));
    }
    Ok(())
}

/// Runs `repetitions` independent trials in parallel, each with its own
/// stream, and returns (mean, standard error). Results are gathered in
/// repetition order, so the sum does not depend on the thread count.
fn monte_carlo<F>(repetitions: u64, seed: u64, label: &str, trial: F) -> (f64, Option<f64>)
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
{
    let values: Vec<f64> = (0..repetitions)
        .into_par_iter()
        .map(|rep| trial(&mut seeding::repetition_rng(seed, label, rep)))
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = (values.len() > 1).then(|| {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    (mean, se)
}

/// Predicts each test age with a draw (with replacement) from the test ages
/// themselves, averaged over repetitions.
pub fn baseline_empirical(ages: &[u32], repetitions: u64, seed: u64) -> Result<BaselineResult> {
    check_inputs(ages, repetitions)?;
    let n = ages.len();
    let (mae, std_error) = monte_carlo(repetitions, seed, "baseline-empirical", |rng| {
        let total: u64 = ages
            .iter()
            .map(|&y| y.abs_diff(ages[rng.random_range(0..n)]) as u64)
            .sum();
        total as f64 / n as f64
    });
    Ok(BaselineResult {
        kind: BaselineKind::EmpiricalResample,
        mae,
        fixed_value: None,
        repetitions,
        seed: Some(seed),
        std_error,
        range: None,
        draw: None,
    })
}

/// Predicts each test age with a uniform guess on `range`, by default the
/// test set's own `[min, max]`.
pub fn baseline_uniform(
    ages: &[u32],
    range: Option<(u32, u32)>,
    draw: UniformDraw,
    repetitions: u64,
    seed: u64,
) -> Result<BaselineResult> {
    check_inputs(ages, repetitions)?;
    let (a, b) = match range {
        Some((a, b)) if a <= b => (a, b),
        Some((a, b)) => return Err(Error::validation(format!("empty uniform range [{a}, {b}]"))),
        None => (*ages.iter().min().unwrap(), *ages.iter().max().unwrap()),
    };
    let n = ages.len() as f64;
    let (mae, std_error) = match draw {
        UniformDraw::Integer => monte_carlo(repetitions, seed, "baseline-uniform", |rng| {
            let total: u64 = ages.iter().map(|&y| y.abs_diff(rng.random_range(a..=b)) as u64).sum();
            total as f64 / n
        }),
        UniformDraw::Continuous => monte_carlo(repetitions, seed, "baseline-uniform", |rng| {
            let (lo, width) = (a as f64, (b - a) as f64);
            ages.iter()
                .map(|&y| (y as f64 - (lo + width * rng.random::<f64>())).abs())
                .sum::<f64>()
                / n
        }),
    };
    Ok(BaselineResult {
        kind: BaselineKind::UniformGuess,
        mae,
        fixed_value: None,
        repetitions,
        seed: Some(seed),
        std_error,
        range: Some([a, b]),
        draw: Some(draw),
    })
}

/// Best constant integer guess over `[min, max]`, found by exhaustive search.
/// Ties go to the smaller age.
pub fn baseline_fixed(ages: &[u32]) -> Result<BaselineResult> {
    check_inputs(ages, 1)?;
    let (lo, hi) = (*ages.iter().min().unwrap(), *ages.iter().max().unwrap());
    let mut best = (lo, u64::MAX);
    for c in lo..=hi {
        let total: u64 = ages.iter().map(|&y| y.abs_diff(c) as u64).sum();
        if total < best.1 {
            best = (c, total);
        }
    }
    Ok(BaselineResult {
        kind: BaselineKind::FixedValue,
        mae: best.1 as f64 / ages.len() as f64,
        fixed_value: Some(best.0),
        repetitions: 1,
        seed: None,
        std_error: None,
        range: Some([lo, hi]),
        draw: None,
    })
}
