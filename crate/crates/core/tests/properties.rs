//! Property tests: histogram structural invariants under arbitrary gap
//! streams, cluster exactness against a brute-force oracle, and CSV codec
//! round trips.

use pirate_core::ingest::{FlowKey, PacketObservation, parse_csv, write_csv};
use pirate_core::modehist::{EpsilonPolicy, ModeHistogram};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn check_invariants(h: &ModeHistogram, updates: u64) {
    let modes = h.modes();
    for w in modes.windows(2) {
        assert!(w[0].max_ns < w[1].min_ns, "modes must be disjoint and ascending: {modes:?}");
    }
    for m in modes {
        assert!(m.count >= 1);
        assert!(m.min_ns <= m.max_ns);
        assert!(m.min_ns as u128 * m.count as u128 <= m.sum_ns as u128, "mean below min: {m:?}");
        assert!(m.sum_ns as u128 <= m.max_ns as u128 * m.count as u128, "mean above max: {m:?}");
    }
    assert_eq!(h.total_offered(), updates, "counts + discarded must equal updates");
}

fn gap_stream() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(
        prop_oneof![
            0u64..100_000,                    // burst-scale gaps
            100_000u64..100_000_000,          // response-scale gaps
            100_000_000u64..10_000_000_000,   // timeout/idle-scale gaps
        ],
        0..400,
    )
}

proptest! {
    #[test]
    fn invariants_hold_after_every_update(
        gaps in gap_stream(),
        capacity in 1usize..=16,
        floor_ns in 1u64..100_000,
        frac in prop_oneof![Just(0.0), Just(0.1), Just(0.2), Just(0.4)],
    ) {
        let mut h = ModeHistogram::new(capacity, EpsilonPolicy { floor_ns, frac });
        for (i, &gap) in gaps.iter().enumerate() {
            h.update(gap, i % 3 == 0);
            check_invariants(&h, i as u64 + 1);
        }
    }

    // Gaps forming k <= N clusters of diameter <= eps with inter-cluster
    // spacing > 3*eps must produce exactly k modes whose (count, sum, min,
    // max) equal per-cluster ground truth, independent of arrival order.
    #[test]
    fn well_separated_clusters_are_recovered_exactly(
        seed in any::<u64>(),
        k in 1usize..=10,
        eps_us in 1u64..=50,
    ) {
        let eps = eps_us * 1_000;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut gaps: Vec<u64> = Vec::new();
        let mut next_min = rng.random_range(0..1_000_000u64);
        for _ in 0..k {
            let diameter = rng.random_range(0..=eps);
            let n = rng.random_range(1..=30usize);
            let base = next_min;
            // Guarantee the diameter is realized so the oracle split is
            // unambiguous.
            gaps.push(base);
            gaps.push(base + diameter);
            for _ in 2..n.max(2) {
                gaps.push(base + rng.random_range(0..=diameter));
            }
            next_min = base + diameter + 3 * eps + 1 + rng.random_range(0..1_000_000u64);
        }
        gaps.shuffle(&mut rng);

        // Brute-force oracle: sort and split wherever adjacent values are
        // more than eps apart.
        let mut sorted = gaps.clone();
        sorted.sort_unstable();
        let mut clusters: Vec<Vec<u64>> = vec![vec![sorted[0]]];
        for w in sorted.windows(2) {
            if w[1] - w[0] > eps {
                clusters.push(Vec::new());
            }
            clusters.last_mut().unwrap().push(w[1]);
        }
        prop_assert_eq!(clusters.len(), k);

        let mut h = ModeHistogram::new(10, EpsilonPolicy::absolute(eps));
        for &g in &gaps {
            h.update(g, false);
        }
        prop_assert_eq!(h.discarded(), 0);
        let modes = h.modes();
        prop_assert_eq!(modes.len(), k);
        for (mode, cluster) in modes.iter().zip(&clusters) {
            prop_assert_eq!(mode.count as usize, cluster.len());
            prop_assert_eq!(mode.sum_ns, cluster.iter().sum::<u64>());
            prop_assert_eq!(mode.min_ns, *cluster.first().unwrap());
            prop_assert_eq!(mode.max_ns, *cluster.last().unwrap());
        }
    }

    #[test]
    fn csv_round_trips_synthetic_sequences(
        rows in prop::collection::vec(
            (0usize..4, 0u64..10_000_000, 0u32..65_536, any::<bool>(), any::<bool>()),
            0..200,
        ),
    ) {
        let flow_names = ["alpha", "b2", "flow-3", "z"];
        let mut clocks = [0u64; 4];
        let seq: Vec<PacketObservation> = rows
            .into_iter()
            .map(|(f, delta, len, ack, mtu)| {
                clocks[f] += delta;
                PacketObservation {
                    flow: FlowKey::synthetic(flow_names[f]),
                    timestamp_ns: clocks[f],
                    payload_len: len,
                    is_pure_ack: ack,
                    is_full_mtu: mtu,
                }
            })
            .collect();
        let mut bytes = Vec::new();
        write_csv(&mut bytes, &seq).unwrap();
        let parsed = parse_csv(&bytes[..]).unwrap();
        prop_assert_eq!(parsed, seq);
    }
}
