use std::collections::HashSet;

use proptest::prelude::*;
use treepar_core::accel::Accelerator;
use treepar_core::env::{BanditConfig, BanditTree, CountingGame, Environment, Gomoku};
use treepar_core::policy::{argmax_edges, UctParams, VirtualLoss};
use treepar_core::reference::{self, run_iteration_serial};
use treepar_core::{FixedFormat, FixedWeight, NodeId, SearchConfig, StateTable, TreeConfig, UctTree};

const HALF_ULP: f64 = 1.0 / (1u64 << 17) as f64;

proptest! {
    #[test]
    fn quantization_error_is_at_most_half_an_ulp(int_bits in 1u32..20, frac in -1.0f64..1.0) {
        let fmt = FixedFormat::new(int_bits);
        let x = frac * fmt.max().to_f64();
        let q = fmt.quantize(x);
        prop_assert!(!q.saturated);
        prop_assert!((q.weight.to_f64() - x).abs() <= HALF_ULP);
    }

    #[test]
    fn quantization_saturates(int_bits in 1u32..20, over in 1.0f64..1e6) {
        let fmt = FixedFormat::new(int_bits);
        let hi = fmt.max().to_f64() + over;
        prop_assert_eq!(fmt.quantize(hi).weight, fmt.max());
        prop_assert!(fmt.quantize(hi).saturated);
        prop_assert_eq!(fmt.to_fixed(-hi), fmt.min());
    }

    #[test]
    fn quantized_argmax_agrees_when_gap_is_wide(ws in prop::collection::vec(-4.0f64..4.0, 2..40)) {
        let fmt = FixedFormat::new(4);
        let mut sorted = ws.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assume!(sorted[0] - sorted[1] > 1.0 / (1u64 << 15) as f64);
        let real = ws.iter().enumerate().fold(0, |b, (i, &w)| if w > ws[b] { i } else { b });
        let q: Vec<FixedWeight> = ws.iter().map(|&w| fmt.to_fixed(w)).collect();
        let all = if ws.len() == 64 { u64::MAX } else { (1u64 << ws.len()) - 1 };
        prop_assert_eq!(argmax_edges(&q, all).unwrap(), real);
    }

    #[test]
    fn state_table_round_trips(gamma in 1usize..600, ids in prop::collection::btree_set(0u32..64, 1..20), fill in any::<u8>()) {
        let mut st = StateTable::new(64, gamma);
        for &i in &ids {
            st.write(NodeId(i), &vec![fill ^ i as u8; gamma]).unwrap();
        }
        for &i in &ids {
            prop_assert_eq!(st.read(NodeId(i)).unwrap(), &vec![fill ^ i as u8; gamma][..]);
            prop_assert!(st.write(NodeId(i), &vec![0; gamma]).is_err());
        }
        prop_assert_eq!(st.occupancy(), ids.len());
        prop_assert!(st.write(NodeId(99), &vec![0; gamma]).is_err());
        let keep = *ids.iter().next_back().unwrap();
        st.flush_to(NodeId(keep), NodeId(0)).unwrap();
        prop_assert_eq!(st.occupancy(), 1);
        prop_assert_eq!(st.read(NodeId(0)).unwrap(), &vec![fill ^ keep as u8; gamma][..]);
    }
}

#[derive(Debug, Clone)]
struct Case {
    fanout: usize,
    depth: usize,
    budget: usize,
    workers: usize,
    expand_all: bool,
    visit_vl: bool,
    salt: u64,
}

fn case() -> impl Strategy<Value = Case> {
    (2usize..7, 1usize..5, 2usize..160, 1usize..12, any::<bool>(), any::<bool>(), any::<u64>()).prop_map(
        |(fanout, depth, budget, workers, expand_all, visit_vl, salt)| Case { fanout, depth, budget, workers, expand_all, visit_vl, salt },
    )
}

fn search(c: &Case) -> SearchConfig {
    let vl = if c.visit_vl { VirtualLoss::VisitTracking } else { VirtualLoss::Constant(0.25) };
    let uct = UctParams::new(1.0, vl, 1.0, c.budget).unwrap().alternating(c.salt & 1 == 1);
    SearchConfig::new(TreeConfig::new(c.fanout, c.depth, c.budget, c.workers).unwrap(), uct)
        .unwrap()
        .with_expand_all(c.expand_all)
}

fn reward(salt: u64, leaf: NodeId, worker: usize, it: usize) -> f64 {
    let h = (salt ^ (leaf.0 as u64) << 20 ^ (worker as u64) << 40 ^ it as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn accelerator_tracks_reference_and_keeps_invariants(c in case()) {
        let cfg = search(&c);
        let mut a = UctTree::new(cfg.tree, NodeId(0)).unwrap();
        let mut b = a.clone();
        let mut acc = Accelerator::new(cfg, 6).unwrap();
        let mut it = 0;
        while !a.is_full() && it < cfg.max_iterations {
            let out = run_iteration_serial(&mut a, &cfg, |t| Ok(reward(c.salt, t.leaf, t.worker, it))).unwrap();
            let mut traces = acc.run_selection(&mut b).unwrap();
            acc.run_insertion(&mut b, &mut traces).unwrap();
            prop_assert_eq!(&traces, &out.traces);

            let ids: Vec<NodeId> = traces.iter().flat_map(|t| t.inserted.iter().copied()).collect();
            prop_assert_eq!(ids.iter().collect::<HashSet<_>>().len(), ids.len());
            prop_assert!(b.node_count() <= c.budget);
            prop_assert!(traces.iter().all(|t| t.edges.len() <= c.depth));

            acc.run_backup(&mut b, &traces, &out.rewards).unwrap();
            prop_assert_eq!(b.pending_vl_total(), 0);
            prop_assert_eq!(a.digest(), b.digest());
            if let Err(e) = b.check_invariants() {
                return Err(TestCaseError::fail(e));
            }
            it += 1;
        }
        prop_assert!(acc.ledger.conflicts.is_empty());
        prop_assert_eq!(acc.ledger.clut_mismatches, 0);
        if a.root().expanded > 0 {
            prop_assert_eq!(reference::best_action(&a, &cfg).unwrap(), reference::best_action(&b, &cfg).unwrap());
        }
    }

    #[test]
    fn gomoku_states_round_trip(moves in prop::collection::vec(0usize..36, 0..40)) {
        let g = Gomoku::new();
        let mut s = g.reset(0);
        for m in moves {
            let b = g.encode(&s);
            prop_assert_eq!(b.len(), g.spec().state_bytes);
            prop_assert_eq!(g.decode(&b).unwrap(), s);
            s = g.step(&s, m).unwrap();
        }
        prop_assert_eq!(g.decode(&g.encode(&s)).unwrap(), s);
    }

    #[test]
    fn bandit_and_counting_states_round_trip(moves in prop::collection::vec(0usize..6, 0..12), h in 2usize..12) {
        let b = BanditTree::new(BanditConfig { horizon: h, ..BanditConfig::default() });
        let c = CountingGame::new(h);
        let mut s = b.reset(0);
        let mut t = c.reset(0);
        for m in moves {
            prop_assert_eq!(b.decode(&b.encode(&s)).unwrap(), s);
            prop_assert_eq!(c.decode(&c.encode(&t)).unwrap(), t);
            s = b.step(&s, m).unwrap();
            t = c.step(&t, m % 2).unwrap();
        }
        prop_assert_eq!(b.encode(&s).len(), b.spec().state_bytes);
    }
}
