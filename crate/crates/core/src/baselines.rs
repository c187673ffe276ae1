//! Comparison selection rules that share the search engine with LinUCT.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Linuct,
    Puct,
    FlatUcb,
    Random,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 4] = [Self::Linuct, Self::Puct, Self::FlatUcb, Self::Random];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Linuct => "linuct",
            Self::Puct => "puct",
            Self::FlatUcb => "flat_ucb",
            Self::Random => "random",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown selector `{s}`")))
    }
}

/// `Q(s,a) + c(s) P(s,a) sqrt(sum_b N(s,b)) / (N(s,a) + 1)`.
pub fn puct_score(q: f64, prior: f64, visits: u64, total_visits: u64, c: f64) -> f64 {
    q + c * prior * (total_visits as f64).sqrt() / (visits as f64 + 1.0)
}

/// UCB1: `mean + sqrt(2 ln(total) / pulls)`, infinite for unpulled arms.
pub fn flat_ucb_score(mean: f64, pulls: u64, total_pulls: u64) -> f64 {
    if pulls == 0 {
        return f64::INFINITY;
    }
    let total = (total_pulls.max(1)) as f64;
    mean + (2.0 * total.ln() / pulls as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn puct_unvisited_ties() {
        assert_eq!(puct_score(0.0, 0.25, 0, 0, 1.25), 0.0);
    }

    #[test]
    fn puct_prefers_less_visited() {
        let visited = puct_score(1.0, 0.5, 9, 9, 1.0);
        let fresh = puct_score(1.0, 0.5, 0, 9, 1.0);
        assert!((visited - (1.0 + 0.5 * 3.0 / 10.0)).abs() < 1e-15);
        assert!((fresh - (1.0 + 0.5 * 3.0)).abs() < 1e-15);
        assert!(fresh > visited);
    }

    #[test]
    fn ucb1_rules() {
        assert!(flat_ucb_score(0.0, 0, 10).is_infinite());
        assert!(flat_ucb_score(1.0, 5, 10) > flat_ucb_score(0.0, 5, 10));
        let s = flat_ucb_score(0.5, 4, 16);
        assert!((s - (0.5 + (2.0 * 16f64.ln() / 4.0).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn parse_kinds() {
        for k in SelectorKind::ALL {
            assert_eq!(k.as_str().parse::<SelectorKind>().unwrap(), k);
        }
        assert!("ucb".parse::<SelectorKind>().is_err());
    }
}
