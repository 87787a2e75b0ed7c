//! Exhaustive check that a fast-path acceptance pins the slow-path plurality.
//!
//! Every server acknowledges `t`, `t'`, or is Byzantine (at most `f` of
//! them). Byzantine servers may support `t` towards a server that then sees a
//! fast quorum, and `t'` towards everyone else. Whenever some server can
//! reach the live fast threshold for `t`, every `n - f` sample must still
//! show `t` as the strict plurality.

use serde::Serialize;

use ondemand_core::SystemParams;

/// Largest `n` the enumeration accepts (3^n assignments).
pub const MAX_EXHAUSTIVE_N: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    T,
    TPrime,
    Byzantine,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub assignment: Vec<Slot>,
    /// Servers in the offending `n - f` sample.
    pub sample: Vec<usize>,
    pub sample_t: usize,
    /// `t'` plus Byzantine acknowledgements in the sample.
    pub sample_other: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MajorityVerdict {
    pub n: usize,
    pub f: usize,
    pub fast_threshold: usize,
    pub assignments: u64,
    pub samples: u64,
    pub counterexample: Option<Counterexample>,
}

impl MajorityVerdict {
    pub fn pass(&self) -> bool {
        self.counterexample.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MajorityError {
    #[error("n = {0} exceeds the exhaustive bound {MAX_EXHAUSTIVE_N}")]
    TooLarge(usize),
    #[error("need 0 <= f < n, got n = {n}, f = {f}")]
    BadParams { n: usize, f: usize },
}

/// Runs the enumeration. Works for any `f < n`, including systems below the
/// resilience bound, where it is expected to find a counterexample.
pub fn check_fastpath_majority(n: usize, f: usize) -> Result<MajorityVerdict, MajorityError> {
    if n > MAX_EXHAUSTIVE_N {
        return Err(MajorityError::TooLarge(n));
    }
    let params = SystemParams::with_threshold_violation(n, f)
        .map_err(|_| MajorityError::BadParams { n, f })?;
    let threshold = params.live_fast_threshold();
    let sample_size = n - f;
    let samples: Vec<u32> = (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == sample_size)
        .collect();

    let mut verdict = MajorityVerdict {
        n,
        f,
        fast_threshold: threshold,
        assignments: 0,
        samples: 0,
        counterexample: None,
    };
    let total = 3u64.pow(n as u32);
    for code in 0..total {
        // Decode base 3 into bitmasks of t and Byzantine slots.
        let (mut t_mask, mut b_mask, mut c) = (0u32, 0u32, code);
        for i in 0..n {
            match c % 3 {
                0 => t_mask |= 1 << i,
                2 => b_mask |= 1 << i,
                _ => {}
            }
            c /= 3;
        }
        if b_mask.count_ones() as usize > f {
            continue;
        }
        verdict.assignments += 1;
        if ((t_mask | b_mask).count_ones() as usize) < threshold {
            continue;
        }
        for &s in &samples {
            verdict.samples += 1;
            let ts = (s & t_mask).count_ones() as usize;
            let others = sample_size - ts;
            if ts <= others {
                let assignment = (0..n)
                    .map(|i| {
                        if t_mask >> i & 1 == 1 {
                            Slot::T
                        } else if b_mask >> i & 1 == 1 {
                            Slot::Byzantine
                        } else {
                            Slot::TPrime
                        }
                    })
                    .collect();
                verdict.counterexample = Some(Counterexample {
                    assignment,
                    sample: (0..n).filter(|i| s >> i & 1 == 1).collect(),
                    sample_t: ts,
                    sample_other: others,
                });
                return Ok(verdict);
            }
        }
    }
    Ok(verdict)
}
