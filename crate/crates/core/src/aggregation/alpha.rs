use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AggregationConfig;
use crate::error::Error;

/// How the anchor interpolation weight evolves over rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    Fixed,
    Arithmetic,
    Geometric,
}

impl fmt::Display for AlphaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlphaMode::Fixed => "fixed",
            AlphaMode::Arithmetic => "arithmetic",
            AlphaMode::Geometric => "geometric",
        })
    }
}

impl FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "fixed" => Ok(AlphaMode::Fixed),
            "arithmetic" => Ok(AlphaMode::Arithmetic),
            "geometric" => Ok(AlphaMode::Geometric),
            other => Err(Error::Config(format!("unknown alpha_mode `{other}`"))),
        }
    }
}

/// Anchor weight for round `round` (1-based).
///
/// Warm-up rounds pin it to 1. Otherwise, with `steps = floor(round / z)`:
/// arithmetic is `max(alpha_t, alpha0 - gamma * steps)` and geometric is
/// `max(alpha_t, alpha0 ^ (gamma * steps))`.
pub fn alpha_schedule(cfg: &AggregationConfig, round: usize) -> f64 {
    if round <= cfg.warmup_rounds {
        return 1.0;
    }
    let steps = (round / cfg.z.max(1)) as f64;
    match cfg.alpha_mode {
        AlphaMode::Fixed => cfg.alpha,
        AlphaMode::Arithmetic => cfg.alpha_t.max(cfg.alpha0 - cfg.gamma * steps),
        AlphaMode::Geometric => cfg.alpha_t.max(cfg.alpha0.powf(cfg.gamma * steps)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: AlphaMode, alpha0: f64, gamma: f64, z: usize, alpha_t: f64) -> AggregationConfig {
        AggregationConfig {
            alpha_mode: mode,
            alpha0,
            gamma,
            z,
            alpha_t,
            ..Default::default()
        }
    }

    #[test]
    fn arithmetic_worked_value() {
        let c = cfg(AlphaMode::Arithmetic, 1.0, 0.1, 10, 0.2);
        assert_eq!(alpha_schedule(&c, 25), 0.8);
        assert_eq!(alpha_schedule(&c, 9), 1.0);
        assert_eq!(alpha_schedule(&c, 500), 0.2);
    }

    #[test]
    fn geometric_worked_value() {
        let c = cfg(AlphaMode::Geometric, 0.9, 2.0, 10, 0.1);
        assert_eq!(alpha_schedule(&c, 25), 0.6561);
        assert_eq!(alpha_schedule(&c, 1000), 0.1);
    }

    #[test]
    fn warmup_pins_to_one() {
        let c = AggregationConfig {
            alpha_mode: AlphaMode::Fixed,
            alpha: 0.3,
            warmup_rounds: 5,
            ..Default::default()
        };
        assert_eq!(alpha_schedule(&c, 5), 1.0);
        assert_eq!(alpha_schedule(&c, 6), 0.3);
    }

    #[test]
    fn mode_ids_round_trip() {
        for m in [AlphaMode::Fixed, AlphaMode::Arithmetic, AlphaMode::Geometric] {
            assert_eq!(m.to_string().parse::<AlphaMode>().unwrap(), m);
        }
        assert!("linear".parse::<AlphaMode>().is_err());
    }
}
