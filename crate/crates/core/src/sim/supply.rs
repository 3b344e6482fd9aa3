use serde::{Deserialize, Serialize};

use crate::reservation::ReservationConfig;

/// Where each server's `E` units of service sit inside its window
/// `[jP, (j+1)P)`. All `m` servers of a task follow the same pattern.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupplyPattern {
    /// `[jP, jP + E)`.
    Front,
    /// `[(j+1)P - E, (j+1)P)`.
    Back,
    /// Front in window 0, back afterwards: the longest possible gap
    /// `2 (P - E)` directly follows the first service.
    #[default]
    WorstCase,
}

impl SupplyPattern {
    pub fn name(self) -> &'static str {
        match self {
            SupplyPattern::Front => "front",
            SupplyPattern::Back => "back",
            SupplyPattern::WorstCase => "worst_case",
        }
    }
}

impl std::str::FromStr for SupplyPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "front" => Ok(SupplyPattern::Front),
            "back" => Ok(SupplyPattern::Back),
            "worst_case" => Ok(SupplyPattern::WorstCase),
            other => Err(format!(
                "unknown supply pattern {other:?} (front|back|worst_case)"
            )),
        }
    }
}

/// Iterator over maximal service segments `[start, end)`, in time order.
pub(crate) struct Supply {
    pattern: SupplyPattern,
    budget: f64,
    period: f64,
    next_window: u64,
}

impl Supply {
    pub(crate) fn new(pattern: SupplyPattern, cfg: &ReservationConfig) -> Self {
        Supply {
            pattern,
            budget: cfg.budget(),
            period: cfg.period(),
            next_window: 0,
        }
    }

    fn window(&self, j: u64) -> (f64, f64) {
        let start = j as f64 * self.period;
        let end = (j + 1) as f64 * self.period;
        let front = match self.pattern {
            SupplyPattern::Front => true,
            SupplyPattern::Back => false,
            SupplyPattern::WorstCase => j == 0,
        };
        if front {
            (start, start + self.budget)
        } else {
            (end - self.budget, end)
        }
    }

    pub(crate) fn next_segment(&mut self) -> (f64, f64) {
        if self.budget >= self.period {
            // fully dedicated servers: one unbounded segment
            self.next_window = u64::MAX;
            return (0.0, f64::INFINITY);
        }
        let (start, mut end) = self.window(self.next_window);
        self.next_window += 1;
        loop {
            let (s, e) = self.window(self.next_window);
            if s > end {
                break;
            }
            end = end.max(e);
            self.next_window += 1;
        }
        (start, end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segments(pattern: SupplyPattern, e: f64, p: f64, n: usize) -> Vec<(f64, f64)> {
        let cfg = ReservationConfig::new(1, e, p).unwrap();
        let mut s = Supply::new(pattern, &cfg);
        (0..n).map(|_| s.next_segment()).collect()
    }

    #[test]
    fn patterns() {
        assert_eq!(
            segments(SupplyPattern::Front, 3.0, 5.0, 3),
            vec![(0.0, 3.0), (5.0, 8.0), (10.0, 13.0)]
        );
        assert_eq!(
            segments(SupplyPattern::Back, 3.0, 5.0, 3),
            vec![(2.0, 5.0), (7.0, 10.0), (12.0, 15.0)]
        );
        assert_eq!(
            segments(SupplyPattern::WorstCase, 3.0, 5.0, 3),
            vec![(0.0, 3.0), (7.0, 10.0), (12.0, 15.0)]
        );
    }

    #[test]
    fn dedicated_is_one_segment() {
        assert_eq!(
            segments(SupplyPattern::WorstCase, 5.0, 5.0, 1),
            vec![(0.0, f64::INFINITY)]
        );
    }

    #[test]
    fn worst_case_gap_equals_sbf_gap() {
        let s = segments(SupplyPattern::WorstCase, 3.0, 5.0, 2);
        assert_eq!(s[1].0 - s[0].1, 2.0 * (5.0 - 3.0));
    }
}
