use ondemand_core::{CodInstance, MultishotInstance, ServerId, SystemParams, Transaction};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn values() -> [Transaction; 3] {
    [
        Transaction::signed("A", 0, "B", 5),
        Transaction::signed("A", 0, "C", 5),
        Transaction::signed("A", 0, "D", 1),
    ]
}

fn system(rng: &mut ChaCha8Rng) -> SystemParams {
    let (n, f) = *[(6, 1), (7, 1), (11, 2), (12, 2), (16, 3)]
        .choose(rng)
        .expect("non-empty");
    SystemParams::new(n, f).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// The sequencer accepts at most once and never changes its mind, and it
    /// always accepts once every server proposed.
    #[test]
    fn multishot_accepts_once(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = system(&mut rng);
        let vs = values();
        let mut inst = MultishotInstance::new(vs[0].key(), p);
        let mut arrivals: Vec<(usize, usize)> = (0..p.n).map(|u| (u, rng.gen_range(0..3))).collect();
        // Repeated proposals from the same origin must be ignored.
        for _ in 0..rng.gen_range(0..p.n) {
            arrivals.push((rng.gen_range(0..p.n), rng.gen_range(0..3)));
        }
        arrivals.shuffle(&mut rng);
        let mut decided = Vec::new();
        for (u, v) in arrivals {
            if let Some(t) = inst.on_propose(ServerId(u), &vs[v]) {
                decided.push(t);
            }
        }
        prop_assert_eq!(decided.len(), 1);
        prop_assert_eq!(inst.accepted(), decided.first());
    }

    /// Honest servers all propose `t`; Byzantine ones propose anything, in
    /// any order. The sequencer accepts `t`.
    #[test]
    fn multishot_validity_randomized(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = system(&mut rng);
        let vs = values();
        let mut byz: Vec<usize> = (0..p.n).collect();
        byz.shuffle(&mut rng);
        byz.truncate(p.f);
        let mut arrivals: Vec<(usize, &Transaction)> = (0..p.n)
            .filter_map(|u| {
                if byz.contains(&u) {
                    rng.gen_bool(0.8).then(|| (u, &vs[rng.gen_range(0..3)]))
                } else {
                    Some((u, &vs[0]))
                }
            })
            .collect();
        arrivals.shuffle(&mut rng);
        let mut inst = MultishotInstance::new(vs[0].key(), p);
        for (u, t) in arrivals {
            inst.on_propose(ServerId(u), t);
        }
        prop_assert_eq!(inst.accepted(), Some(&vs[0]));
    }

    /// Honest servers acknowledge one value each; Byzantine servers tell each
    /// receiver whatever they like. If some receiver fast-accepts `x`, no
    /// receiver fast-accepts anything else and every slow-path proposal is `x`.
    #[test]
    fn fast_accept_pins_every_proposal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = system(&mut rng);
        let vs = values();
        let bias = rng.gen_range(0.5..1.0);
        let honest: Vec<usize> = (0..p.n).map(|_| usize::from(!rng.gen_bool(bias))).collect();
        let byz: Vec<usize> = (p.n - p.f..p.n).collect();

        let mut fast = Vec::new();
        let mut proposed = Vec::new();
        for r in 0..p.n - p.f {
            let mut inst = CodInstance::new(vs[0].key(), ServerId(r), p, false);
            let mut port = Vec::new();
            let mut order: Vec<usize> = (0..p.n).collect();
            order.shuffle(&mut rng);
            for u in order {
                let v = if byz.contains(&u) { rng.gen_range(0..2) } else { honest[u] };
                let fx = inst.on_ack(ServerId(u), &vs[v], &mut port);
                if let Some((t, _)) = fx.accepted {
                    fast.push(t);
                }
            }
            proposed.extend(port.into_iter().map(|(_, _, t)| t));
        }
        if let Some(x) = fast.first() {
            prop_assert!(fast.iter().all(|t| t == x));
            prop_assert!(proposed.iter().all(|t| t == x), "fast {} but proposals {:?}", x, proposed);
        }
    }
}
