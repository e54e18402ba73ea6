mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Zero};

use common::{frac, graph, prefs, ring};
use ratdup::engine::{Output, RandomnessSource, SlotMode, TraceLevel, Verdict};
use ratdup::protocols::{ProtocolName, ProtocolSpec};
use ratdup::rationality::estimate::{enumerate_outcomes, first_computable_round};
use ratdup::rationality::{
    check_equilibrium, expected_utility_exact, expected_utility_mc, group_expected_utility,
    preference, sybil_emulation_strategy, utility, view_key, CatalogSpec, DeviationStrategy,
    EstimationMode, Family, Game, Override, RationalityError,
};
use ratdup::topology::{AgentId, DuplicationScheme, Topology};

fn ks_game(n: usize, k: u64, field: u64) -> Game {
    Game::new(
        ring(n),
        ProtocolSpec::new(ProtocolName::Ks).with_ks(k, field),
    )
}

fn first(game: &Game) -> AgentId {
    game.topology.layout().unwrap()[0]
}

#[test]
fn honest_sharing_pays_one_over_k_per_own_input() {
    let game = ks_game(4, 2, 2);
    let me = first(&game);
    for class in game.classes() {
        let u = expected_utility_exact(&game, &DeviationStrategy::honest(me), class).unwrap();
        assert_eq!(u, frac(1, 2), "class {class:?}");
    }
}

#[test]
fn swing_wins_every_branch() {
    let game = ks_game(4, 2, 2);
    let me = first(&game);
    let s = DeviationStrategy::new(me, 5, Override::SybilSwing);
    let p = game.prepare(&s).unwrap();
    for class in game.classes() {
        let mut branches = 0;
        enumerate_outcomes(&game, &p, class, TraceLevel::Outputs, |_, o| {
            branches += 1;
            assert_eq!(o.verdict, Verdict::Legal);
            assert_eq!(o.utility, 1);
        })
        .unwrap();
        assert!(branches > 0);
    }
}

#[test]
fn small_segments_do_not_swing() {
    let game = ks_game(4, 2, 2);
    let me = first(&game);
    for d in 2..=4 {
        let u = expected_utility_exact(
            &game,
            &DeviationStrategy::new(me, d, Override::SybilSwing),
            Some(0),
        )
        .unwrap();
        assert!(u <= frac(1, 2), "d={d} gave {u}");
    }
}

#[test]
fn preferred_value_already_reached_needs_no_swing() {
    let mut game = ks_game(4, 2, 2);
    let ids: Vec<AgentId> = game.topology.layout().unwrap().to_vec();
    game.spec.inputs = ids.iter().copied().zip([1, 0, 1, 0]).collect();
    game.spec.prefs = BTreeMap::from([(ids[0], 0)]);
    let s = DeviationStrategy::new(ids[0], 5, Override::SybilSwing);
    let p = game.prepare(&s).unwrap();
    enumerate_outcomes(&game, &p, None, TraceLevel::Outputs, |_, o| {
        assert_eq!(o.verdict, Verdict::Legal);
        assert!(o.outputs.values().all(|v| *v == Output::Value(0)));
    })
    .unwrap();
}

#[test]
fn emulation_needs_a_late_binding_value() {
    let t = ring(5);
    for name in ProtocolName::ALL {
        let spec = ProtocolSpec::new(name);
        let me = t.layout().unwrap()[0];
        let scheme = DuplicationScheme::segment_fresh(&t, me, 3, 1).unwrap();
        let r = sybil_emulation_strategy(&spec, &t, scheme);
        match name {
            ProtocolName::Ks | ProtocolName::Ks2 => {
                assert_eq!(r.unwrap().program, Override::SybilSwing)
            }
            _ => assert!(
                matches!(r, Err(RationalityError::NotApplicable(_))),
                "{name}"
            ),
        }
    }
}

#[test]
fn emulated_segment_learns_the_inputs_first() {
    let game = ks_game(4, 4, 4);
    let me = first(&game);
    let scheme = DuplicationScheme::segment_fresh(&game.topology, me, 5, 3).unwrap();
    let s = sybil_emulation_strategy(&game.spec, &game.topology, scheme).unwrap();
    let p = game.prepare(&s).unwrap();
    let e: BTreeSet<AgentId> = p.scheme.virtual_ids.iter().copied().collect();
    let d: BTreeSet<AgentId> = p.exec.nodes().filter(|a| !e.contains(a)).collect();
    assert_eq!((d.len(), e.len()), (3, 5));
    for seed in 0..4 {
        let src = game.randomness(&p, &RandomnessSource::seeded(seed), None);
        let o = game
            .run(
                &p,
                &mut ratdup::engine::Randomness::new(&src),
                TraceLevel::Messages,
            )
            .unwrap();
        let te = first_computable_round(&o.trace, &e).unwrap();
        let td = first_computable_round(&o.trace, &d).unwrap();
        assert!(te < td, "seed {seed}: E' at {te}, D at {td}");
    }
}

#[test]
fn erroneous_vectors_never_pay() {
    let t = ring(4);
    let spec = ProtocolSpec::new(ProtocolName::Ks).with_ks(2, 2);
    let ids: Vec<AgentId> = t.nodes().collect();
    let pref = preference(&spec, &t, ids[0]);
    let mut o: BTreeMap<AgentId, Output> = ids.iter().map(|&a| (a, Output::Value(0))).collect();
    assert_eq!(utility(&t, &o, &pref, &spec.problem()), 1);
    o.insert(ids[2], Output::Bottom);
    assert_eq!(utility(&t, &o, &pref, &spec.problem()), 0);
    o.insert(ids[2], Output::Value(1));
    assert_eq!(utility(&t, &o, &pref, &spec.problem()), 0);

    let game = ks_game(4, 2, 2);
    let me = first(&game);
    for program in [
        Override::Withhold { round: 6 },
        Override::LieAboutInput { round: 9 },
        Override::OutputOverride,
    ] {
        let p = game
            .prepare(&DeviationStrategy::new(me, 1, program))
            .unwrap();
        enumerate_outcomes(&game, &p, Some(1), TraceLevel::Outputs, |_, o| {
            assert!(o.utility == 0 || o.verdict == Verdict::Legal);
        })
        .unwrap();
    }
}

#[test]
fn output_override_loses_nothing_and_gains_nothing() {
    let game = ks_game(4, 2, 2);
    let me = first(&game);
    let honest = expected_utility_exact(&game, &DeviationStrategy::honest(me), Some(0)).unwrap();
    let lie = expected_utility_exact(
        &game,
        &DeviationStrategy::new(me, 1, Override::OutputOverride),
        Some(0),
    )
    .unwrap();
    assert!(lie <= honest);
}

#[test]
fn proper_groups_are_uncertain_at_round_zero() {
    let game = ks_game(4, 2, 2);
    let ids: Vec<AgentId> = game.topology.layout().unwrap().to_vec();
    let me = ids[0];
    let group: BTreeSet<AgentId> = [ids[1], ids[2]].into();
    let views =
        group_expected_utility(&game, &DeviationStrategy::honest(me), &group, me, 0, None).unwrap();
    assert!(!views.is_empty());
    let total: BigRational = views.values().map(|v| v.probability.clone()).sum();
    assert_eq!(total, BigRational::one());
    for v in views.values() {
        assert!(
            v.utility > BigRational::zero() && v.utility < BigRational::one(),
            "{}",
            v.utility
        );
    }

    let all: BTreeSet<AgentId> = ids.iter().copied().collect();
    let end = 40;
    let views =
        group_expected_utility(&game, &DeviationStrategy::honest(me), &all, me, end, None).unwrap();
    assert!(views
        .values()
        .all(|v| v.utility.is_zero() || v.utility.is_one()));
}

#[test]
fn larger_groups_know_at_least_as_much() {
    let game = ks_game(4, 2, 2);
    let ids: Vec<AgentId> = game.topology.layout().unwrap().to_vec();
    let me = ids[0];
    let small: BTreeSet<AgentId> = [ids[1]].into();
    let large: BTreeSet<AgentId> = [ids[1], ids[2]].into();
    let p = game.prepare(&DeviationStrategy::honest(me)).unwrap();
    let mut traces = Vec::new();
    enumerate_outcomes(&game, &p, None, TraceLevel::Messages, |_, o| traces.push(o)).unwrap();
    let last = traces.iter().map(|o| o.trace.final_round).max().unwrap();
    for round in 0..=last + 1 {
        let mut by_small: BTreeMap<String, BTreeSet<u8>> = BTreeMap::new();
        let mut by_large: BTreeMap<String, BTreeSet<u8>> = BTreeMap::new();
        let mut large_to_small: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for o in &traces {
            let s = view_key(&o.trace, &small, round);
            let l = view_key(&o.trace, &large, round);
            by_small.entry(s.clone()).or_default().insert(o.utility);
            by_large.entry(l.clone()).or_default().insert(o.utility);
            large_to_small.entry(l).or_default().insert(s);
        }
        for (l, smalls) in &large_to_small {
            assert_eq!(
                smalls.len(),
                1,
                "round {round}: the larger view must refine the smaller"
            );
            let s = smalls.iter().next().unwrap();
            if by_small[s].len() == 1 {
                assert_eq!(by_large[l].len(), 1, "round {round}");
            }
        }
    }
}

#[test]
fn widened_segment_a_round_earlier_knows_more() {
    let t = ring(6);
    let ids: Vec<AgentId> = t.layout().unwrap().to_vec();
    let spec =
        ProtocolSpec::new(ProtocolName::ColorRing).with_prefs(prefs(&t, &[0, 0, 1, 1, 0, 2]));
    let l: BTreeSet<AgentId> = [ids[2], ids[3]].into();
    let l_wide: BTreeSet<AgentId> = [ids[1], ids[2], ids[3], ids[4]].into();
    for seed in 0..3 {
        let src = RandomnessSource::seeded(seed)
            .with_slot(ids[0], SlotMode::Enumerate)
            .with_slot(ids[5], SlotMode::Enumerate);
        let mut traces = Vec::new();
        common::honest_leaves(
            &Arc::new((*t).clone()),
            &spec,
            &src,
            TraceLevel::Messages,
            |_, tr| traces.push(tr),
        );
        let last = traces.iter().map(|tr| tr.final_round).max().unwrap();
        for round in 1..=last + 1 {
            let mut refine: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
            for tr in &traces {
                refine
                    .entry(view_key(tr, &l_wide, round - 1))
                    .or_default()
                    .insert(view_key(tr, &l, round));
            }
            assert!(
                refine.values().all(|s| s.len() == 1),
                "seed {seed} round {round}"
            );
        }
    }
}

fn relabel(t: &Topology, map: &BTreeMap<AgentId, AgentId>) -> Arc<Topology> {
    let nodes: Vec<AgentId> = t.nodes().map(|a| map[&a]).collect();
    let edges: Vec<(AgentId, AgentId)> = t.edges().map(|(a, b)| (map[&a], map[&b])).collect();
    let out = Topology::new(nodes, edges).unwrap();
    Arc::new(match t.layout() {
        Some(l) => out.with_layout(l.iter().map(|a| map[a]).collect()).unwrap(),
        None => out,
    })
}

#[test]
fn verdict_survives_relabeling() {
    let cases: Vec<(Arc<Topology>, ProtocolName, Vec<u64>)> = vec![
        (
            graph(&[1, 2, 3, 4], &[(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)]),
            ProtocolName::Orientation,
            vec![7, 3, 0, 1],
        ),
        (ring(4), ProtocolName::Partition, vec![0, 1, 1, 0]),
    ];
    let catalog = CatalogSpec::up_to(2).with_families(&[
        Family::Duplication,
        Family::BiasedDraw,
        Family::Forced,
    ]);
    for (t, name, pv) in cases {
        let ids: Vec<AgentId> = t.nodes().collect();
        let mut verdicts = Vec::new();
        for perm in [vec![0, 1, 2, 3], vec![2, 0, 3, 1], vec![3, 2, 1, 0]] {
            let map: BTreeMap<AgentId, AgentId> = ids
                .iter()
                .enumerate()
                .map(|(i, &a)| (a, AgentId(100 + 7 * perm[i] as u64)))
                .collect();
            let tt = relabel(&t, &map);
            let mut spec = ProtocolSpec::new(name);
            spec.prefs = ids
                .iter()
                .zip(pv.iter().cycle())
                .map(|(a, &v)| (map[a], v))
                .collect();
            let r = check_equilibrium(
                &Game::new(tt, spec),
                &catalog,
                EstimationMode::Exact,
                "relabel",
            )
            .unwrap();
            verdicts.push(r.deviation_found());
        }
        assert!(
            verdicts.iter().all(|v| *v == verdicts[0]),
            "{name}: {verdicts:?}"
        );
    }
}

#[test]
fn sampled_estimate_brackets_the_exact_value() {
    let t = graph(&[1, 2, 3, 4], &[(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)]);
    let spec = ProtocolSpec::new(ProtocolName::Orientation).with_prefs(prefs(&t, &[5]));
    let game = Game::new(t, spec);
    let me = AgentId(1);
    let exact = expected_utility_exact(&game, &DeviationStrategy::honest(me), None).unwrap();
    let mc = expected_utility_mc(&game, &DeviationStrategy::honest(me), 100_000, 11, None).unwrap();
    let exact_f = exact.numer().to_string().parse::<f64>().unwrap()
        / exact.denom().to_string().parse::<f64>().unwrap();
    let se = mc.half_width / 1.96;
    assert!(
        (mc.mean - exact_f).abs() <= 3.0 * se,
        "exact {exact}, sampled {mc:?}"
    );

    let again =
        expected_utility_mc(&game, &DeviationStrategy::honest(me), 100_000, 11, None).unwrap();
    assert_eq!(mc, again);
    let one = expected_utility_mc(&game, &DeviationStrategy::honest(me), 1, 11, None).unwrap();
    assert!(one.mean == 0.0 || one.mean == 1.0);
}

#[test]
fn sybil_catalog_entry_is_found() {
    let game = ks_game(4, 2, 2);
    let spec = CatalogSpec {
        min_d: 5,
        max_d: 5,
        families: vec![Family::SybilSwing],
        positions: vec![first(&game)],
        seed: 0,
    };
    let r = check_equilibrium(&game, &spec, EstimationMode::Exact, "swing").unwrap();
    assert!(r.deviation_found());
    let m = r.deviations.last().unwrap();
    assert!(m.profitable && m.margin.parse::<BigRational>().unwrap() > BigRational::zero());
}

#[test]
fn orientation_resists_bit_biasing() {
    let t = ring(4);
    let spec = ProtocolSpec::new(ProtocolName::Orientation).with_prefs(prefs(&t, &[3, 1, 2, 0]));
    let catalog = CatalogSpec::up_to(3).with_families(&[
        Family::Duplication,
        Family::BiasedDraw,
        Family::Forced,
    ]);
    let r = check_equilibrium(
        &Game::new(t, spec),
        &catalog,
        EstimationMode::Exact,
        "orientation",
    )
    .unwrap();
    assert!(!r.deviation_found(), "{}", r.table());
}
