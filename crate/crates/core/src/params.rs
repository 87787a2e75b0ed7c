use serde::{Deserialize, Serialize};

use crate::error::ParamsError;

/// Server count, Byzantine bound, and every quorum threshold derived from them.
///
/// Strict bounds ("more than x") resolve to the smallest integer strictly
/// greater than `x`. Amplification and acceptance in the reliable broadcast
/// are non-strict (`>= f+1`, `>= 2f+1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub n: usize,
    pub f: usize,
    #[serde(default)]
    pub allow_threshold_violation: bool,
}

impl SystemParams {
    /// Requires `n > 5f`.
    pub fn new(n: usize, f: usize) -> Result<Self, ParamsError> {
        SystemParams {
            n,
            f,
            allow_threshold_violation: false,
        }
        .validated()
    }

    /// Admits `n <= 5f`; only meant for reproducing lower-bound counterexamples.
    pub fn with_threshold_violation(n: usize, f: usize) -> Result<Self, ParamsError> {
        SystemParams {
            n,
            f,
            allow_threshold_violation: true,
        }
        .validated()
    }

    /// Checks a deserialized value.
    pub fn validated(self) -> Result<Self, ParamsError> {
        if self.n == 0 {
            return Err(ParamsError::NoServers);
        }
        if self.f >= self.n {
            return Err(ParamsError::AllFaulty { n: self.n, f: self.f });
        }
        if !self.allow_threshold_violation && self.n <= 5 * self.f {
            return Err(ParamsError::ResilienceBound { n: self.n, f: self.f });
        }
        Ok(self)
    }

    /// Smallest integer strictly greater than `(n + 3f) / 2`.
    pub fn fast_quorum(&self) -> usize {
        (self.n + 3 * self.f) / 2 + 1
    }

    /// Smallest integer strictly greater than `(n + f) / 2`.
    pub fn brb_ack_quorum(&self) -> usize {
        (self.n + self.f) / 2 + 1
    }

    pub fn brb_amplify_threshold(&self) -> usize {
        self.f + 1
    }

    pub fn brb_accept_threshold(&self) -> usize {
        2 * self.f + 1
    }

    /// Acks a server waits for before it may trigger the slow path.
    pub fn slow_path_sample(&self) -> usize {
        self.n - self.f
    }

    pub fn multishot_equal_quorum(&self) -> usize {
        self.f + 1
    }

    pub fn multishot_total_quorum(&self) -> usize {
        2 * self.f + 1
    }

    /// The smallest ack count a one-round fast path can wait for and still
    /// fire when `f` servers stay silent: `min(fast_quorum, n - f)`.
    ///
    /// Equals [`fast_quorum`](Self::fast_quorum) whenever `n > 5f`.
    pub fn live_fast_threshold(&self) -> usize {
        self.fast_quorum().min(self.slow_path_sample())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: usize, f: usize) -> SystemParams {
        SystemParams::new(n, f).unwrap()
    }

    #[test]
    fn threshold_table() {
        // (n, f, fast, brb_ack, amplify, accept, sample)
        let table = [
            (6, 1, 5, 4, 2, 3, 5),
            (11, 2, 9, 7, 3, 5, 9),
            (16, 3, 13, 10, 4, 7, 13),
        ];
        for (n, f, fast, ack, amp, acc, sample) in table {
            let p = p(n, f);
            assert_eq!(p.fast_quorum(), fast, "fast n={n}");
            assert_eq!(p.brb_ack_quorum(), ack, "ack n={n}");
            assert_eq!(p.brb_amplify_threshold(), amp, "amplify n={n}");
            assert_eq!(p.brb_accept_threshold(), acc, "accept n={n}");
            assert_eq!(p.slow_path_sample(), sample, "sample n={n}");
        }
    }

    #[test]
    fn violation_flag_admits_small_systems() {
        let p = SystemParams::with_threshold_violation(5, 1).unwrap();
        assert_eq!(p.slow_path_sample(), 4);
        assert_eq!(p.live_fast_threshold(), 4);
        assert!(SystemParams::new(5, 1).is_err());
        assert!(SystemParams::new(10, 2).is_err());
    }

    #[test]
    fn construction_errors() {
        assert_eq!(SystemParams::new(0, 0), Err(ParamsError::NoServers));
        assert_eq!(
            SystemParams::with_threshold_violation(2, 2),
            Err(ParamsError::AllFaulty { n: 2, f: 2 })
        );
        assert_eq!(
            SystemParams::new(5, 1),
            Err(ParamsError::ResilienceBound { n: 5, f: 1 })
        );
        assert!(SystemParams::new(1, 0).is_ok());
    }

    #[test]
    fn fast_quorum_fits_in_slow_sample_up_to_64() {
        for n in 1..=64 {
            for f in 0..n {
                if n <= 5 * f {
                    continue;
                }
                let p = p(n, f);
                assert!(
                    p.fast_quorum() <= p.slow_path_sample(),
                    "n={n} f={f}: fast {} > sample {}",
                    p.fast_quorum(),
                    p.slow_path_sample()
                );
                assert_eq!(p.live_fast_threshold(), p.fast_quorum());
                // n - f honest servers outnumber the accept threshold.
                assert!(p.n - p.f >= p.brb_accept_threshold());
            }
        }
    }

    #[test]
    fn thresholds_monotone_in_n() {
        for f in 0..=10 {
            let mut prev: Option<[usize; 5]> = None;
            for n in (5 * f + 1)..=80 {
                let p = p(n, f);
                let cur = [
                    p.fast_quorum(),
                    p.brb_ack_quorum(),
                    p.brb_amplify_threshold(),
                    p.brb_accept_threshold(),
                    p.slow_path_sample(),
                ];
                if let Some(prev) = prev {
                    for i in 0..5 {
                        assert!(cur[i] >= prev[i], "f={f} n={n} threshold {i}");
                    }
                }
                prev = Some(cur);
            }
        }
    }
}
