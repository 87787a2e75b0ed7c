//! Exhaustive validity check for the sequencer: when every honest server
//! proposes `t`, no mix of Byzantine proposals and arrival orders makes it
//! accept anything else.

use ondemand_core::{MultishotInstance, ServerId, SystemParams, Transaction};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidityCounterexample {
    /// `(proposer, value)` in arrival order.
    pub arrivals: Vec<(usize, String)>,
    pub accepted: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidityVerdict {
    pub n: usize,
    pub f: usize,
    pub byzantine_choices: u64,
    pub orders: u64,
    pub counterexample: Option<ValidityCounterexample>,
}

/// `f` alternatives to `t`, each with a smaller digest so that they win any
/// plurality tie.
pub fn alternatives(t: &Transaction, f: usize) -> Vec<Transaction> {
    let mut out = Vec::with_capacity(f);
    let mut i = 0u64;
    while out.len() < f {
        let alt = Transaction::signed(t.sender.clone(), t.sn, format!("alt{i}").as_str(), t.amount);
        if alt.digest() < t.digest() && alt != *t {
            out.push(alt);
        }
        i += 1;
    }
    out
}

/// Servers `0..n-f` are honest and propose `t`; the last `f` each propose
/// nothing, `t`, or one of `f` alternatives. Every arrival order of the
/// resulting proposals is fed to a fresh instance.
pub fn multishot_validity(n: usize, f: usize, t: &Transaction) -> ValidityVerdict {
    let params = SystemParams::with_threshold_violation(n, f).expect("caller keeps f < n");
    let alts = alternatives(t, f);
    let mut options: Vec<Option<&Transaction>> = vec![None, Some(t)];
    options.extend(alts.iter().map(Some));

    let mut verdict = ValidityVerdict {
        n,
        f,
        byzantine_choices: 0,
        orders: 0,
        counterexample: None,
    };
    let combos = options.len().pow(f as u32);
    for mut code in 0..combos {
        verdict.byzantine_choices += 1;
        let mut proposals: Vec<(usize, &Transaction)> = (0..n - f).map(|h| (h, t)).collect();
        for b in n - f..n {
            if let Some(v) = options[code % options.len()] {
                proposals.push((b, v));
            }
            code /= options.len();
        }
        let mut order = Vec::with_capacity(proposals.len());
        let mut used = vec![false; proposals.len()];
        if let Some(cx) = permute(params, t, &proposals, &mut used, &mut order, &mut verdict.orders) {
            verdict.counterexample = Some(cx);
            return verdict;
        }
    }
    verdict
}

/// Depth-first over arrival orders. Honest proposals are interchangeable, so
/// only the first unused honest one is tried at each position.
fn permute(
    params: SystemParams,
    t: &Transaction,
    proposals: &[(usize, &Transaction)],
    used: &mut Vec<bool>,
    order: &mut Vec<usize>,
    orders: &mut u64,
) -> Option<ValidityCounterexample> {
    if order.len() == proposals.len() {
        *orders += 1;
        let mut inst = MultishotInstance::new(t.key(), params);
        for &i in order.iter() {
            let (who, v) = proposals[i];
            if let Some(acc) = inst.on_propose(ServerId(who), v) {
                if acc != *t {
                    return Some(ValidityCounterexample {
                        arrivals: order
                            .iter()
                            .map(|&j| (proposals[j].0, proposals[j].1.to_string()))
                            .collect(),
                        accepted: acc.to_string(),
                    });
                }
            }
        }
        return None;
    }
    let honest = params.n - params.f;
    let mut tried_honest = false;
    for i in 0..proposals.len() {
        if used[i] {
            continue;
        }
        if proposals[i].0 < honest {
            if tried_honest {
                continue;
            }
            tried_honest = true;
        }
        used[i] = true;
        order.push(i);
        let found = permute(params, t, proposals, used, order, orders);
        order.pop();
        used[i] = false;
        if found.is_some() {
            return found;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternatives_beat_t_on_ties() {
        let t = Transaction::signed("A", 0, "B", 5);
        let alts = alternatives(&t, 2);
        assert_eq!(alts.len(), 2);
        assert!(alts.iter().all(|a| a.digest() < t.digest() && a.key() == t.key()));
        assert_ne!(alts[0], alts[1]);
    }

    #[test]
    fn small_system_counts() {
        let t = Transaction::signed("A", 0, "B", 5);
        let v = multishot_validity(3, 1, &t);
        assert!(v.counterexample.is_none());
        // Byzantine: none (1 order), t (3 orders of one distinct slot among 3), alt (3).
        assert_eq!(v.byzantine_choices, 3);
        assert_eq!(v.orders, 1 + 3 + 3);
    }
}
