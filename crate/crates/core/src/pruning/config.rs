use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Segment count used when none is configured.
pub const DEFAULT_SEGMENTS: usize = 10;

/// Contextual-to-dominant token ratio used by the VisionZip-style strategy.
pub const DEFAULT_CONTEXTUAL_RATIO: f64 = 0.18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TopK,
    SegmentwiseTopK,
    VisionZip,
    Random,
    BottomK,
    Identity,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::TopK,
        Strategy::SegmentwiseTopK,
        Strategy::VisionZip,
        Strategy::Random,
        Strategy::BottomK,
        Strategy::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::TopK => "top_k",
            Strategy::SegmentwiseTopK => "segmentwise_top_k",
            Strategy::VisionZip => "visionzip",
            Strategy::Random => "random",
            Strategy::BottomK => "bottom_k",
            Strategy::Identity => "identity",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-'))
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "topk" => Ok(Strategy::TopK),
            "segmentwise" | "segmentwisetopk" => Ok(Strategy::SegmentwiseTopK),
            "visionzip" => Ok(Strategy::VisionZip),
            "random" => Ok(Strategy::Random),
            "bottomk" => Ok(Strategy::BottomK),
            "identity" | "none" => Ok(Strategy::Identity),
            _ => Err(Error::InvalidConfig(format!("unknown strategy {s:?}"))),
        }
    }
}

/// Order in which kept indices are listed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeptOrder {
    /// Highest score first, ties by lower index.
    #[default]
    DescendingAttention,
    /// Increasing token index.
    Temporal,
}

impl FromStr for KeptOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "descending_attention" | "descending" | "attention" => {
                Ok(KeptOrder::DescendingAttention)
            }
            "temporal" => Ok(KeptOrder::Temporal),
            _ => Err(Error::InvalidConfig(format!("unknown ordering {s:?}"))),
        }
    }
}

/// What segment-wise selection does with the `K mod S` leftover budget and
/// with quota unmet by short segments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderPolicy {
    /// Keep exactly `floor(K/S)` per segment (capped by segment size).
    #[default]
    Strict,
    /// Top up to `K` with the best tokens not yet selected.
    GreedyFill,
}

impl FromStr for RemainderPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "strict" => Ok(RemainderPolicy::Strict),
            "greedy_fill" | "greedy" | "fill" => Ok(RemainderPolicy::GreedyFill),
            _ => Err(Error::InvalidConfig(format!(
                "unknown remainder policy {s:?}"
            ))),
        }
    }
}

/// Token budget, either absolute or as a fraction of the input length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Count(usize),
    Rate(f64),
}

impl Budget {
    /// Resolves to a token count for a sequence of `n` tokens.
    ///
    /// Rates map to `max(1, round(rate * n))`.
    pub fn resolve(self, n: usize) -> Result<usize> {
        let k = match self {
            Budget::Count(k) => k,
            Budget::Rate(rate) => {
                if !(rate > 0.0 && rate <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "retention rate must be in (0, 1], got {rate}"
                    )));
                }
                ((rate * n as f64).round() as usize).max(1)
            }
        };
        if k == 0 {
            return Err(Error::ZeroBudget);
        }
        if k > n {
            return Err(Error::BudgetExceedsTokens { k, n });
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub strategy: Strategy,
    pub budget: Budget,
    pub segments: usize,
    pub ordering: KeptOrder,
    pub contextual_ratio: f64,
    pub seed: u64,
    pub remainder: RemainderPolicy,
}

impl PruneConfig {
    pub fn new(strategy: Strategy, budget: Budget) -> Self {
        Self {
            strategy,
            budget,
            segments: DEFAULT_SEGMENTS,
            ordering: KeptOrder::default(),
            contextual_ratio: DEFAULT_CONTEXTUAL_RATIO,
            seed: 0,
            remainder: RemainderPolicy::default(),
        }
    }

    pub fn top_k(k: usize) -> Self {
        Self::new(Strategy::TopK, Budget::Count(k))
    }

    pub fn segmentwise(k: usize, segments: usize) -> Self {
        Self::new(Strategy::SegmentwiseTopK, Budget::Count(k)).with_segments(segments)
    }

    pub fn with_segments(mut self, segments: usize) -> Self {
        self.segments = segments;
        self
    }

    pub fn with_ordering(mut self, ordering: KeptOrder) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_contextual_ratio(mut self, ratio: f64) -> Self {
        self.contextual_ratio = ratio;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_remainder(mut self, remainder: RemainderPolicy) -> Self {
        self.remainder = remainder;
        self
    }

    pub fn resolve_k(&self, n: usize) -> Result<usize> {
        self.budget.resolve(n)
    }

    pub(crate) fn check_ratio(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.contextual_ratio) {
            return Err(Error::InvalidConfig(format!(
                "contextual ratio must be in [0, 1), got {}",
                self.contextual_ratio
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_rounding() {
        assert_eq!(Budget::Rate(0.25).resolve(750).unwrap(), 188);
        assert_eq!(Budget::Rate(0.5).resolve(750).unwrap(), 375);
        assert_eq!(Budget::Rate(0.1).resolve(750).unwrap(), 75);
        assert_eq!(Budget::Rate(0.01).resolve(10).unwrap(), 1);
        assert_eq!(Budget::Rate(1.0).resolve(7).unwrap(), 7);
        assert!(Budget::Rate(0.0).resolve(7).is_err());
        assert!(Budget::Rate(1.5).resolve(7).is_err());
    }

    #[test]
    fn count_bounds() {
        assert!(matches!(
            Budget::Count(0).resolve(3),
            Err(Error::ZeroBudget)
        ));
        assert!(matches!(
            Budget::Count(4).resolve(3),
            Err(Error::BudgetExceedsTokens { k: 4, n: 3 })
        ));
    }

    #[test]
    fn names_parse() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!(
            "segmentwise".parse::<Strategy>().unwrap(),
            Strategy::SegmentwiseTopK
        );
        assert_eq!("topk".parse::<Strategy>().unwrap(), Strategy::TopK);
        assert_eq!(
            "descending-attention".parse::<KeptOrder>().unwrap(),
            KeptOrder::DescendingAttention
        );
        assert_eq!(
            "greedy-fill".parse::<RemainderPolicy>().unwrap(),
            RemainderPolicy::GreedyFill
        );
    }
}
