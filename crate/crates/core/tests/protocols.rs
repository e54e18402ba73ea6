mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use common::{graph, honest_leaves, ring, ring_phase_start};
use ratdup::engine::{
    classify_output, EdgeDir, ExecutionTrace, Output, Payload, PieceKind, Randomness,
    RandomnessSource, SlotMode, TraceLevel, Verdict,
};
use ratdup::protocols::color_ring::ring_colors;
use ratdup::protocols::coloring::{choose_color, min_free};
use ratdup::protocols::ks::split;
use ratdup::protocols::orientation::edge_direction;
use ratdup::protocols::partition::partition_output;
use ratdup::protocols::{
    run_honest_seeded, sum_mod, verify_full_knowledge, ProtocolName, ProtocolSpec,
};
use ratdup::rationality::{view_key, DeviationStrategy, Game, Override};
use ratdup::topology::{AgentId, Topology};

fn honest(t: &Arc<Topology>, spec: &ProtocolSpec, seed: u64) -> ExecutionTrace {
    run_honest_seeded(
        t,
        spec,
        &RandomnessSource::seeded(seed),
        TraceLevel::Messages,
    )
    .unwrap()
}

#[test]
fn every_protocol_runs_legally_on_a_ring() {
    for name in ProtocolName::ALL {
        for n in [4usize, 5, 6, 8] {
            if name == ProtocolName::Partition && n % 2 == 1 {
                continue;
            }
            let t = ring(n);
            let spec = ProtocolSpec::new(name);
            for seed in 0..5 {
                let tr = run_honest_seeded(
                    &t,
                    &spec,
                    &RandomnessSource::seeded(seed),
                    TraceLevel::Outputs,
                )
                .unwrap();
                assert!(
                    tr.aborted.is_none(),
                    "{name} n={n} seed={seed}: {:?}",
                    tr.aborted
                );
                assert_eq!(
                    classify_output(&t, &tr.outputs, &spec.problem()),
                    Verdict::Legal,
                    "{name} n={n}"
                );
            }
        }
    }
}

#[test]
fn ks_fixed_inputs_sum() {
    let t = ring(4);
    let mut spec = ProtocolSpec::new(ProtocolName::Ks);
    let ids: Vec<AgentId> = t.layout().unwrap().to_vec();
    spec.inputs = ids
        .iter()
        .copied()
        .zip([1, 2, 3, 0])
        .collect::<BTreeMap<_, _>>();
    let tr =
        run_honest_seeded(&t, &spec, &RandomnessSource::seeded(7), TraceLevel::Outputs).unwrap();
    assert!(tr.outputs.values().all(|o| *o == Output::Value(2)));
}

#[test]
fn xor_split_example() {
    assert_eq!(split(5, 3), (3, 6));
    assert_eq!(split(0, 7), (7, 7));
    for input in 0..8 {
        for r in 0..8 {
            let (a, b) = split(input, r);
            assert_eq!(a ^ b, input);
        }
    }
}

#[test]
fn full_knowledge_examples() {
    assert!(verify_full_knowledge(&sum_mod(4), 4, 3));
    assert!(verify_full_knowledge(&sum_mod(2), 4, 3));
    assert!(verify_full_knowledge(
        &|xs: &[u64]| xs.iter().fold(0, |a, x| a ^ x),
        8,
        2
    ));
    assert!(!verify_full_knowledge(&sum_mod(3), 4, 2));
    assert!(!verify_full_knowledge(
        &|xs: &[u64]| *xs.iter().max().unwrap(),
        2,
        3
    ));
    assert!(!verify_full_knowledge(&|_: &[u64]| 1, 4, 2));
}

/// Segments that have seen both the R and the X piece of one transmission
/// from `sender` by `cut`.
fn holds_both(tr: &ExecutionTrace, seg: &BTreeSet<AgentId>, sender: AgentId, cut: u32) -> bool {
    let mut seen: BTreeMap<AgentId, BTreeSet<PieceKind>> = BTreeMap::new();
    for m in tr.messages() {
        if let Payload::Piece {
            origin,
            target,
            kind,
            ..
        } = &m.payload
        {
            let reached =
                (seg.contains(&m.dst) && m.round < cut) || (seg.contains(&m.src) && m.round <= cut);
            if *origin == sender && reached {
                seen.entry(*target).or_default().insert(*kind);
            }
        }
    }
    seen.values().any(|k| k.len() == 2)
}

#[test]
fn segments_without_both_pieces_learn_nothing() {
    for n in [5usize, 6] {
        let t = ring(n);
        let layout = t.layout().unwrap().to_vec();
        let spec = ProtocolSpec::new(ProtocolName::Ks).with_ks(8, 8);
        for (s, &sender) in layout.iter().enumerate() {
            let segments: Vec<BTreeSet<AgentId>> = (1..n)
                .flat_map(|from| (1..=n / 2).map(move |len| (from, len)))
                .filter(|&(from, len)| from + len <= n)
                .map(|(from, len)| (from..from + len).map(|j| layout[(s + j) % n]).collect())
                .collect();
            for seed in [1, 2] {
                let src = RandomnessSource::seeded(seed).with_slot(sender, SlotMode::Enumerate);
                // (segment, cut) -> view -> input -> count
                let mut counts: BTreeMap<(usize, u32), BTreeMap<String, BTreeMap<u64, u64>>> =
                    BTreeMap::new();
                let mut exposed: BTreeSet<(usize, u32)> = BTreeSet::new();
                honest_leaves(&t, &spec, &src, TraceLevel::Messages, |_, tr| {
                    let input = tr.draws.iter().find(|d| d.slot == sender).unwrap().value;
                    let w = ring_phase_start(&tr);
                    for cut in w..=w + n as u32 {
                        for (i, seg) in segments.iter().enumerate() {
                            if holds_both(&tr, seg, sender, cut) {
                                exposed.insert((i, cut));
                            }
                            *counts
                                .entry((i, cut))
                                .or_default()
                                .entry(view_key(&tr, seg, cut))
                                .or_default()
                                .entry(input)
                                .or_default() += 1;
                        }
                    }
                });
                for (key, views) in &counts {
                    if exposed.contains(key) {
                        continue;
                    }
                    for by_input in views.values() {
                        assert_eq!(
                            by_input.len(),
                            8,
                            "n={n} segment {:?} cut {}",
                            segments[key.0],
                            key.1
                        );
                        assert_eq!(by_input.values().collect::<BTreeSet<_>>().len(), 1);
                    }
                }
            }
        }
    }
}

#[test]
fn late_input_lies_are_caught() {
    for n in [4usize, 5, 6] {
        let t = ring(n);
        let game = Game::new(t.clone(), ProtocolSpec::new(ProtocolName::Ks));
        let me = t.layout().unwrap()[0];
        for seed in 0..5 {
            let w = ring_phase_start(&honest(&t, &game.spec, seed));
            for (round, caught) in [(w + 1, false), (w + 2, true), (w + n as u32 + 1, true)] {
                let p = game
                    .prepare(&DeviationStrategy::new(
                        me,
                        1,
                        Override::LieAboutInput { round },
                    ))
                    .unwrap();
                let src = game.randomness(&p, &RandomnessSource::seeded(seed), None);
                let o = game
                    .run(&p, &mut Randomness::new(&src), TraceLevel::Outputs)
                    .unwrap();
                assert_eq!(o.trace.aborted.is_some(), caught, "n={n} round {round}");
            }
        }
    }
}

#[test]
fn color_choice_examples() {
    assert_eq!(min_free(&BTreeSet::from([0, 1, 3])), 2);
    assert_eq!(choose_color(3, &BTreeSet::from([0, 1])), 3);
    assert_eq!(choose_color(1, &BTreeSet::from([0, 1])), 2);
    let t = ring(6);
    assert_eq!(
        ring_colors(t.layout().unwrap(), &[0, 0, 0, 1, 1, 2], 0),
        vec![0, 1, 0, 1, 0, 2]
    );
}

#[test]
fn partition_output_examples() {
    assert_eq!(partition_output(0, 0, 0), 0);
    assert_eq!(partition_output(1, 0, 0), 1);
    assert_eq!(partition_output(1, 1, 0), 0);
    assert_eq!(partition_output(1, 1, 1), 1);
    for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        assert_ne!(partition_output(a, b, 0), partition_output(b, a, 1));
    }
}

#[test]
fn edge_direction_examples() {
    let (lo, hi) = (AgentId(1), AgentId(2));
    assert_eq!(edge_direction(lo, hi, 0, 1), EdgeDir::Out);
    assert_eq!(edge_direction(hi, lo, 1, 0), EdgeDir::In);
    assert_eq!(edge_direction(lo, hi, 1, 1), EdgeDir::In);
    assert_eq!(edge_direction(hi, lo, 0, 0), EdgeDir::Out);
}

#[test]
fn speaking_out_of_turn_is_caught() {
    for name in [ProtocolName::ColorRenaming, ProtocolName::ColorOrient] {
        let t = ring(5);
        let game = Game::new(t.clone(), ProtocolSpec::new(name));
        for seed in 0..5 {
            // The first speaker: a delay by the last one reaches nobody who
            // still has to choose.
            let tr = honest(&t, &game.spec, seed);
            let first = tr
                .messages()
                .filter(|m| matches!(m.payload, Payload::Color { .. }))
                .min_by_key(|m| m.round)
                .unwrap();
            let (me, turn) = (first.src, first.round);
            let p = game
                .prepare(&DeviationStrategy::new(
                    me,
                    1,
                    Override::DelayByOne { round: turn },
                ))
                .unwrap();
            let src = game.randomness(&p, &RandomnessSource::seeded(seed), None);
            let o = game
                .run(&p, &mut Randomness::new(&src), TraceLevel::Outputs)
                .unwrap();
            assert!(o.trace.aborted.is_some(), "{name} seed {seed}");
        }
    }
}

fn ring_with_chords(n: usize, chords: &[(usize, usize)]) -> Arc<Topology> {
    let ids: Vec<u64> = (1..=n as u64).collect();
    let mut edges: Vec<(u64, u64)> = (0..n).map(|i| (ids[i], ids[(i + 1) % n])).collect();
    for &(a, b) in chords {
        let (a, b) = (a % n, b % n);
        if a != b && (a + 1) % n != b && (b + 1) % n != a {
            edges.push((ids[a.min(b)], ids[a.max(b)]));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    graph(&ids, &edges)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sharing_agrees_on_the_sum(inputs in prop::collection::vec(0u64..4, 4..9), seed: u64) {
        let t = ring(inputs.len());
        let mut spec = ProtocolSpec::new(ProtocolName::Ks);
        spec.inputs = t.layout().unwrap().iter().copied().zip(inputs.iter().copied()).collect();
        let tr = run_honest_seeded(&t, &spec, &RandomnessSource::seeded(seed), TraceLevel::Outputs).unwrap();
        let want = Output::Value(inputs.iter().sum::<u64>() % 4);
        prop_assert!(tr.outputs.values().all(|o| *o == want));
    }

    #[test]
    fn colorings_are_proper(
        name in prop::sample::select(vec![ProtocolName::ColorRenaming, ProtocolName::ColorOrient, ProtocolName::ColorRing]),
        prefs in prop::collection::vec(0u64..4, 4..8),
        seed: u64,
    ) {
        let t = ring(prefs.len());
        let spec = ProtocolSpec::new(name).with_prefs(t.layout().unwrap().iter().copied().zip(prefs).collect());
        let tr = run_honest_seeded(&t, &spec, &RandomnessSource::seeded(seed), TraceLevel::Outputs).unwrap();
        prop_assert!(tr.aborted.is_none());
        for (a, b) in t.edges() {
            prop_assert_ne!(tr.outputs[&a].value(), tr.outputs[&b].value());
        }
    }

    #[test]
    fn partitions_are_balanced(half in 2usize..6, seed: u64) {
        let t = ring(2 * half);
        let tr = run_honest_seeded(&t, &ProtocolSpec::new(ProtocolName::Partition), &RandomnessSource::seeded(seed), TraceLevel::Outputs)
            .unwrap();
        let ones = tr.outputs.values().filter(|o| **o == Output::Value(1)).count();
        let zeros = tr.outputs.values().filter(|o| **o == Output::Value(0)).count();
        prop_assert_eq!((ones, zeros), (half, half));
    }

    #[test]
    fn orientations_agree(n in 4usize..8, chords in prop::collection::vec((0usize..8, 0usize..8), 0..3), seed: u64) {
        let t = ring_with_chords(n, &chords);
        let tr = run_honest_seeded(&t, &ProtocolSpec::new(ProtocolName::Orientation), &RandomnessSource::seeded(seed), TraceLevel::Outputs)
            .unwrap();
        let dirs = |a: AgentId| -> BTreeMap<AgentId, EdgeDir> {
            match &tr.outputs[&a] {
                Output::Edges(l) => l.iter().copied().collect(),
                o => panic!("unexpected {o}"),
            }
        };
        for (a, b) in t.edges() {
            let (da, db) = (dirs(a)[&b], dirs(b)[&a]);
            prop_assert_ne!(da, db);
        }
    }
}
