mod common;

use coalition_sense::detection::{Point, SuId};
use coalition_sense::formation::*;
use coalition_sense::game::{
    is_minimal_winning, is_winning, max_coalition_size, pareto_preferred, DetectionRequirement, PayoffVector,
    DEFAULT_EPSILON,
};
use coalition_sense::oracle::{centralized_min_miss, enumerate_partitions};
use coalition_sense::theory::{is_dhp_stable, MergeScope};
use coalition_sense::{Coalition, Network, Partition};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{dense_net, net_at, random_net, ALPHA};

fn ids(v: &[usize]) -> Vec<SuId> {
    v.iter().map(|&i| SuId(i)).collect()
}

fn groups(p: &Partition) -> Vec<Vec<usize>> {
    p.canonical().iter().map(|g| g.iter().map(|s| s.0).collect()).collect()
}

fn chi() -> DetectionRequirement {
    DetectionRequirement::new(0.95).unwrap()
}

#[test]
fn discovery_radius_examples() {
    let net = net_at(&[(1000.0, 0.0), (1300.0, 0.0), (1900.0, 0.0)], 0.01);
    let p = Partition::singletons(&net);
    let me = net.singleton(SuId(0));
    let all = discover_neighbors(&me, &p, &FormationConfig::cf(), &net);
    assert_eq!(all.iter().map(|c| c.min_id()).collect::<Vec<_>>(), ids(&[1, 2]));
    assert!(discover_neighbors(&me, &p, &FormationConfig::cf().with_radius(Some(0.0)), &net).is_empty());
    let near = discover_neighbors(&me, &p, &FormationConfig::cf().with_radius(Some(500.0)), &net);
    assert_eq!(near.iter().map(|c| c.min_id()).collect::<Vec<_>>(), ids(&[1]));
}

#[test]
fn merge_examples() {
    let net = net_at(&[(1400.0, 0.0), (1400.0, 200.0), (-1400.0, 0.0)], 0.01);
    let (a, b, far) = (net.singleton(SuId(0)), net.singleton(SuId(1)), net.singleton(SuId(2)));
    let ab = try_merge(&a, &b, &net, DEFAULT_EPSILON).unwrap().expect("close pair merges");
    assert_eq!(ab.members(), ids(&[0, 1]).as_slice());
    assert!(ab.value(ALPHA) > a.value(ALPHA) && ab.value(ALPHA) > b.value(ALPHA));
    assert!(try_merge(&a, &far, &net, DEFAULT_EPSILON).unwrap().is_none());
    assert!(try_merge(&a, &ab, &net, DEFAULT_EPSILON).is_err());

    // P_f just under α: any partner pushes Q_f past the cap.
    let tight = net_at(&[(1400.0, 0.0), (1400.0, 10.0)], 0.099);
    let (x, y) = (tight.singleton(SuId(0)), tight.singleton(SuId(1)));
    assert!(try_merge(&x, &y, &tight, DEFAULT_EPSILON).unwrap().is_none());
}

#[test]
fn spread_out_singletons_stay_put() {
    let net = net_at(&[(1400.0, 0.0), (-1400.0, 0.0), (0.0, 1400.0), (0.0, -1400.0)], 0.01);
    let (p, trace) = cf_round(&Partition::singletons(&net), &FormationConfig::cf(), &net).unwrap();
    assert_eq!(p.len(), 4);
    assert!(trace.is_empty());
}

#[test]
fn chain_merge_forms_triple() {
    let net = net_at(&[(1400.0, 0.0), (1400.0, 100.0), (1400.0, 200.0)], 0.01);
    let (p, trace) = cf_round(&Partition::singletons(&net), &FormationConfig::cf(), &net).unwrap();
    assert_eq!(groups(&p), vec![vec![0, 1, 2]]);
    assert_eq!(trace.merges(), 2);
    let first = &trace.events[0];
    assert_eq!(first.after, vec![ids(&[0, 1])]);
    // The final payoff beats every intermediate one.
    let end = p.coalitions()[0].value(ALPHA);
    for e in &trace.events {
        for g in e.before.iter().chain(&e.after) {
            assert!(end >= net.coalition(g).unwrap().value(ALPHA));
        }
    }
}

#[test]
fn moved_member_splits_off() {
    let net = net_at(&[(1400.0, 0.0), (1400.0, 100.0), (1400.0, 200.0)], 0.01);
    let (p, _) = cf_round(&Partition::singletons(&net), &FormationConfig::cf(), &net).unwrap();
    let moved = net
        .with_positions(&[Point::new(1400.0, 0.0), Point::new(1400.0, 100.0), Point::new(1400.0, 2700.0)])
        .unwrap();
    let stale = p.rescored(&moved).unwrap();
    let parts = find_split(&stale.coalitions()[0], &moved, DEFAULT_EPSILON).expect("distant member leaves");
    let mut found: Vec<Vec<SuId>> = parts.iter().map(|c| c.members().to_vec()).collect();
    found.sort();
    assert_eq!(found, vec![ids(&[0, 1]), ids(&[2])]);

    // Brute force over the five partitions of the triple: the chosen split
    // improves on staying together and no alternative improves on it.
    let of = |g: &Vec<Vec<usize>>| {
        let gs: Vec<Vec<SuId>> = g.iter().map(|b| ids(b)).collect();
        Partition::from_groups(&moved, &gs).unwrap().payoffs(ALPHA)
    };
    let chosen = of(&vec![vec![0, 1], vec![2]]);
    assert!(pareto_preferred(&chosen, &stale.payoffs(ALPHA), DEFAULT_EPSILON).unwrap());
    for g in enumerate_partitions(3).unwrap() {
        assert!(!pareto_preferred(&of(&g), &chosen, DEFAULT_EPSILON).unwrap(), "{g:?}");
    }

    let (after, trace) = cf_round(&stale, &FormationConfig::cf(), &moved).unwrap();
    assert_eq!(groups(&after), vec![vec![0, 1], vec![2]]);
    assert_eq!(trace.splits(), 1);
}

#[test]
fn merged_pair_never_splits() {
    let net = net_at(&[(1400.0, 0.0), (1400.0, 200.0)], 0.01);
    let (p, _) = cf_round(&Partition::singletons(&net), &FormationConfig::cf(), &net).unwrap();
    assert_eq!(p.len(), 1);
    assert!(find_split(&p.coalitions()[0], &net, DEFAULT_EPSILON).is_none());
}

#[test]
fn trivial_and_pair_networks() {
    let one = net_at(&[(1000.0, 0.0)], 0.01);
    let (p, trace) = cf_round(&Partition::singletons(&one), &FormationConfig::cf(), &one).unwrap();
    assert_eq!(groups(&p), vec![vec![0]]);
    assert!(trace.is_empty());

    let two = net_at(&[(1400.0, 0.0), (1400.0, 200.0)], 0.01);
    let (p, trace) = cf_round(&Partition::singletons(&two), &FormationConfig::cf(), &two).unwrap();
    assert_eq!(trace.merges(), 1);
    assert_eq!(p.canonical(), centralized_min_miss(&two).unwrap().partition.canonical());
}

#[test]
fn cfpd_individually_winning_users_stay_alone() {
    let net = net_at(&[(300.0, 0.0), (0.0, 350.0), (-320.0, 0.0), (0.0, -310.0)], 0.01);
    let out = cfpd_round(&Partition::singletons(&net), &FormationConfig::cf_pd(chi()), &net).unwrap();
    assert_eq!(out.partition.len(), 4);
    assert!(out.classes.iter().all(|&c| c == Class::InitialWinning));
    assert_eq!(out.trace.merges(), 0);
}

#[test]
fn cfpd_losing_pair_becomes_minimal_winning() {
    let net = net_at(&[(1000.0, 0.0), (1000.0, 60.0)], 0.01);
    let req = chi();
    assert!(net.ids().all(|i| !is_winning(&net.singleton(i), &req, ALPHA)));
    let pair = net.coalition(&ids(&[0, 1])).unwrap();
    assert!(is_minimal_winning(&pair, &net, &req));
    let out = cfpd_round(&Partition::singletons(&net), &FormationConfig::cf_pd(req), &net).unwrap();
    assert_eq!(groups(&out.partition), vec![vec![0, 1]]);
    assert_eq!(out.classes, vec![Class::FormedWinning]);
}

#[test]
fn cfpd_isolated_user_stays_losing() {
    let net = net_at(&[(1000.0, 0.0), (1000.0, 60.0), (-1450.0, -1450.0)], 0.01);
    let out = cfpd_round(&Partition::singletons(&net), &FormationConfig::cf_pd(chi()), &net).unwrap();
    assert_eq!(groups(&out.partition), vec![vec![0, 1], vec![2]]);
    assert_eq!(out.classes, vec![Class::FormedWinning, Class::Losing]);
}

#[test]
fn zero_speed_rounds_are_quiet() {
    let net = random_net(7, 20, 0.01);
    let still = Mobility::new(0.0, common::AREA_M).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for cfg in [FormationConfig::cf(), FormationConfig::cf_pd(chi())] {
        let (snaps, trace) = periodic_reformation(&net, 5.0, 60.0, &still, &cfg, &mut rng).unwrap();
        assert_eq!(snaps.len(), 13);
        assert!(snaps[1..].iter().all(|s| s.merges + s.splits + s.adjusts == 0));
        assert!(trace.events.iter().all(|e| e.round == 0));
        assert!(snaps.iter().all(|s| s.groups == snaps[0].groups));
    }
}

#[test]
fn trace_serializes_as_json_lines() {
    let net = net_at(&[(1400.0, 0.0), (1400.0, 100.0), (1400.0, 200.0)], 0.01);
    let (_, trace) = cf_round(&Partition::singletons(&net), &FormationConfig::cf(), &net).unwrap();
    let mut buf = Vec::new();
    trace.write_json_lines(&mut buf).unwrap();
    let lines: Vec<serde_json::Value> =
        String::from_utf8(buf).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), trace.len());
    assert_eq!(lines[0]["type"], "merge");
    assert_eq!(lines[1]["iteration"], 1);
}

fn check_cf_properties(net: &Network, cfg: &FormationConfig) -> Result<(), TestCaseError> {
    let start = Partition::singletons(net);
    let (p, trace) = cf_round(&start, cfg, net).unwrap();
    let initial: Vec<Vec<SuId>> = start.canonical();
    prop_assert_eq!(trace.replay(&initial).unwrap(), p.canonical());
    for e in &trace.events {
        prop_assert!(e.kind != EventKind::Adjust);
        for d in e.payoff_deltas.values() {
            prop_assert!(d.is_none_or(|d| d >= 0.0));
        }
        prop_assert!(e.payoff_deltas.values().any(|d| d.is_none_or(|d| d > 0.0)));
    }
    let bound = max_coalition_size(ALPHA, net.pf());
    prop_assert!(p.coalitions().iter().all(|c| bound.admits(c.len())));
    prop_assert!(p.coalitions().iter().all(|c| c.q_false_alarm() < ALPHA));
    let (again, quiet) = cf_round(&p, cfg, net).unwrap();
    prop_assert_eq!(again.canonical(), p.canonical());
    prop_assert!(quiet.is_empty());
    Ok(())
}

fn class_is_sound(c: &Coalition, class: Class, net: &Network, req: &DetectionRequirement) -> bool {
    match class {
        Class::InitialWinning | Class::FormedWinning => is_minimal_winning(c, net, req),
        Class::Losing => !is_winning(c, req, net.alpha()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cf_outputs_are_consistent(seed in 0u64..1_000_000, n in 2usize..25, pf_i in 0usize..10) {
        let pf = common::pf_grid()[pf_i];
        check_cf_properties(&dense_net(seed, n, 2000.0, pf), &FormationConfig::cf())?;
    }

    #[test]
    fn cf_orders_share_invariants(seed in 0u64..1_000_000, n in 2usize..16, order_seed in any::<u64>()) {
        let net = dense_net(seed, n, 1800.0, 0.01);
        for order in [OrderPolicy::NearestFirst, OrderPolicy::SeededRandom(order_seed)] {
            check_cf_properties(&net, &FormationConfig::cf().with_order(order))?;
        }
        check_cf_properties(&net, &FormationConfig::cf().with_radius(Some(600.0)))?;
    }

    #[test]
    fn cf_output_is_dhp_stable(seed in 0u64..1_000_000, n in 2usize..7) {
        let net = dense_net(seed, n, 1500.0, 0.01);
        let (p, _) = cf_round(&Partition::singletons(&net), &FormationConfig::cf(), &net).unwrap();
        prop_assert!(is_dhp_stable(&p, &net, MergeScope::Pairwise, DEFAULT_EPSILON).unwrap());
    }

    #[test]
    fn cfpd_classes_are_sound(seed in 0u64..1_000_000, n in 2usize..25, chi in 0.85f64..0.99, pf_i in 0usize..10) {
        let pf = common::pf_grid()[pf_i];
        let net = dense_net(seed, n, 2200.0, pf);
        let req = DetectionRequirement::new(chi).unwrap();
        let start = Partition::singletons(&net);
        let out = cfpd_round(&start, &FormationConfig::cf_pd(req), &net).unwrap();
        prop_assert_eq!(out.classes.len(), out.partition.len());
        prop_assert_eq!(out.trace.replay(&start.canonical()).unwrap(), out.partition.canonical());
        let mut members: Vec<SuId> = out.partition.coalitions().iter().flat_map(|c| c.members().to_vec()).collect();
        members.sort();
        prop_assert_eq!(members, net.ids().collect::<Vec<_>>());
        for (c, &class) in out.partition.coalitions().iter().zip(&out.classes) {
            prop_assert!(class_is_sound(c, class, &net, &req), "{:?} {:?}", c.members(), class);
        }
        for e in out.trace.events.iter().filter(|e| e.kind != EventKind::Adjust) {
            prop_assert!(e.payoff_deltas.values().all(|d| d.is_none_or(|d| d >= 0.0)));
        }
        let winners_before = net.ids().filter(|&i| is_winning(&net.singleton(i), &req, ALPHA)).count();
        let winners_after: usize = out
            .partition
            .coalitions()
            .iter()
            .zip(&out.classes)
            .filter(|(_, c)| **c != Class::Losing)
            .map(|(s, _)| s.len())
            .sum();
        prop_assert!(winners_after >= winners_before);
    }

    #[test]
    fn later_rounds_keep_partitions_valid(seed in 0u64..1_000_000, speed in 0.0f64..150.0) {
        let net = dense_net(seed, 12, 2000.0, 0.01);
        let mobility = Mobility::from_kmh(speed, common::AREA_M).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let req = chi();
        let (snaps, _) = periodic_reformation(&net, 5.0, 30.0, &mobility, &FormationConfig::cf_pd(req), &mut rng).unwrap();
        for s in &snaps {
            let mut all: Vec<SuId> = s.groups.iter().flatten().copied().collect();
            all.sort();
            prop_assert_eq!(all, net.ids().collect::<Vec<_>>());
            prop_assert!(s.positions.iter().all(|p| (0.0..=common::AREA_M).contains(&p.x) && (0.0..=common::AREA_M).contains(&p.y)));
        }
    }
}

#[test]
fn payoff_vector_covers_every_user() {
    let net = random_net(1, 10, 0.01);
    let (p, _) = cf_round(&Partition::singletons(&net), &FormationConfig::cf(), &net).unwrap();
    let pv: PayoffVector = p.payoffs(ALPHA);
    assert_eq!(pv.0.len(), 10);
}
