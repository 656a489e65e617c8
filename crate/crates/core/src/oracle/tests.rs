use super::*;
use crate::domain::lava::{lava_task, LavaSim, FORWARD, LEFT};
use crate::domain::pointnav::{pointnav_task, PointNavSim};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::Rng;
use std::collections::BTreeSet;

fn lava(n: i64, tiles: &[(i64, i64)], start: (i64, i64, &str), goal: (i64, i64, &str)) -> LavaSim {
    LavaSim::new(&lava_task(n, tiles, start, goal).unwrap()).unwrap()
}

fn floor_bin(v: f64, lo: f64, hi: f64, b: usize) -> usize {
    ((b as f64 * (v - lo) / (hi - lo)).floor() as usize + 1).min(b)
}

#[test]
fn worked_example_bins() {
    assert_eq!(bin_index(32.0, 0.0, 32.0, 100), 100);
    assert_eq!(bin_index(13.0, 0.0, 32.0, 100), 41);
    assert_eq!(bin_index(23.0, 0.0, 32.0, 100), 72);
    assert_eq!(bin_index(2.0, 0.0, 32.0, 100), 7);
}

#[test]
fn lower_edge_and_degenerate() {
    assert_eq!(bin_index(0.0, 0.0, 32.0, 100), 1);
    assert_eq!(bin_index(-5.0, 0.0, 32.0, 100), 1);
    assert_eq!(bin_index(99.0, 0.0, 32.0, 100), 100);
    assert_eq!(bin_index(4.0, 4.0, 4.0, 10), 1);
}

#[test]
fn matches_floor_formula_off_boundaries() {
    for i in 0..=10_000 {
        let v = i as f64 * 0.0037;
        let (lo, hi, b) = (0.0, 37.0, 10);
        let t = b as f64 * (v - lo) / (hi - lo);
        if t.fract() == 0.0 {
            continue;
        }
        assert_eq!(bin_index(v, lo, hi, b), floor_bin(v, lo, hi, b), "v={v}");
    }
}

#[test]
fn worked_example_heuristic() {
    let sim = lava(32, &[], (32, 23, "north"), (13, 2, "north"));
    assert_eq!(try_heuristic(sim.schema(), sim.start(), sim.goal(), 100), Ok(124));
    assert_eq!(heuristic(sim.schema(), sim.goal(), sim.goal(), 100), 0);
}

#[test]
fn heuristic_floor_of_one() {
    let sim = PointNavSim::new(&pointnav_task(10.0, &[], (1.0, 1.0), (5.0, 5.0)).unwrap()).unwrap();
    let a = PointNavSim::at(1.01, 3.0);
    let b = PointNavSim::at(1.02, 3.0);
    assert_eq!(bin_index(1.01, 0.0, 10.0, 100), bin_index(1.02, 0.0, 10.0, 100));
    assert_eq!(heuristic(sim.schema(), &a, &b, 100), 1);
}

#[test]
fn heuristic_schema_mismatch() {
    let sim = lava(5, &[], (1, 1, "north"), (2, 2, "north"));
    let bad = SimState::new([1.0, 2.0]);
    assert!(matches!(
        try_heuristic(sim.schema(), &bad, sim.goal(), 100),
        Err(OracleError::SchemaMismatch { .. })
    ));
}

#[test]
fn one_step_task_is_found() {
    let sim = lava(3, &[], (1, 1, "north"), (1, 2, "north"));
    let r = search(&sim, &SearchParams::default());
    assert_eq!(r.verdict, SearchVerdict::Feasible);
    assert!(plan_is_sound(&sim, &r.plan));
}

fn enclosed_goal() -> LavaSim {
    let ring = [(2, 2), (3, 2), (4, 2), (2, 3), (4, 3), (2, 4), (3, 4), (4, 4)];
    lava(5, &ring, (1, 1, "east"), (3, 3, "north"))
}

#[test]
fn ring_of_lava_is_infeasible() {
    let sim = enclosed_goal();
    let params = SearchParams {
        max_sim_steps: 200_000,
        ..SearchParams::default()
    };
    let r = search(&sim, &params);
    assert!(matches!(r.verdict, SearchVerdict::Exhausted | SearchVerdict::Timeout));
    let out = decide(&sim, &params);
    assert_eq!(out.verdict, SearchVerdict::Infeasible);
    assert_eq!(out.source, VerdictSource::Bfs);
}

#[test]
fn start_on_lava_expands_nothing() {
    let sim = lava(5, &[(1, 1)], (1, 1, "east"), (3, 3, "north"));
    let r = search(&sim, &SearchParams::default());
    assert_eq!(r.verdict, SearchVerdict::Exhausted);
    assert_eq!(r.stats.nodes_expanded, 0);
    assert_eq!(
        bfs_verify(&sim, Duration::from_secs(1), 1000).verdict,
        SearchVerdict::Infeasible
    );
}

#[test]
fn start_equals_goal() {
    let sim = lava(5, &[], (2, 2, "east"), (2, 2, "east"));
    let b = bfs_verify(&sim, Duration::from_secs(1), 1000);
    assert_eq!(b.verdict, SearchVerdict::Feasible);
    assert!(b.plan.is_empty());
    let r = search(&sim, &SearchParams::default());
    assert_eq!(r.verdict, SearchVerdict::Feasible);
    assert!(r.plan.is_empty());
}

#[test]
fn backtrack_single_segment_returns_start() {
    let sim = lava(5, &[], (1, 1, "east"), (5, 5, "north"));
    let (s, rest) = backtrack(&sim, &[vec![FORWARD, FORWARD]]).unwrap();
    assert_eq!(s, *sim.start());
    assert!(rest.is_empty());
    assert_eq!(backtrack(&sim, &[]), Err(OracleError::EmptyPlan));
}

#[test]
fn backtrack_matches_cached_states() {
    let sim = lava(6, &[(4, 4)], (1, 1, "east"), (6, 6, "north"));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut segments: Vec<Vec<Action>> = Vec::new();
    let mut cached = vec![sim.start().clone()];
    for _ in 0..8 {
        let seg: Vec<Action> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..3)).collect();
        let out = sim.apply(cached.last().unwrap(), &seg);
        if out.status != StepStatus::Ok {
            break;
        }
        segments.push(seg);
        cached.push(out.final_state);
    }
    while !segments.is_empty() {
        let (s, rest) = backtrack(&sim, &segments).unwrap();
        assert_eq!(s, cached[rest.len()]);
        segments = rest;
    }
}

#[test]
fn expansions_never_repeat() {
    let sim = lava(6, &[(3, 3), (4, 2), (2, 5)], (1, 1, "east"), (6, 6, "south"));
    let params = SearchParams {
        record_expansions: true,
        max_sim_steps: 300_000,
        ..SearchParams::default()
    };
    let r = search(&sim, &params);
    assert_eq!(r.stats.duplicate_expansions, 0);
    let distinct: HashSet<_> = r.expansions.iter().cloned().collect();
    assert_eq!(distinct.len(), r.expansions.len());
    assert_eq!(r.expansions.len() as u64, r.stats.nodes_expanded);
}

#[test]
fn backtrack_reruns_from_predecessor() {
    // lava two cells ahead of the start kills some samples
    let sim = lava(8, &[(3, 1)], (1, 1, "east"), (3, 3, "north"));
    let r = search(&sim, &SearchParams::default());
    assert!(r.stats.backtracks > 0);
    assert_eq!(r.verdict, SearchVerdict::Feasible);
    assert!(plan_is_sound(&sim, &r.plan));
}

#[test]
fn search_is_deterministic() {
    let sim = lava(7, &[(3, 3), (5, 2), (2, 6)], (1, 1, "east"), (7, 6, "west"));
    let params = SearchParams {
        seed: 99,
        ..SearchParams::default()
    };
    let a = search(&sim, &params);
    let b = search(&sim, &params);
    assert_eq!(a.plan, b.plan);
    assert_eq!(a.stats.nodes_expanded, b.stats.nodes_expanded);
    assert_eq!(a.stats.sim_steps, b.stats.sim_steps);
}

#[test]
fn bfs_plans_are_shortest() {
    let sim = lava(5, &[], (1, 1, "north"), (1, 3, "north"));
    let b = bfs_verify(&sim, Duration::from_secs(1), 10_000);
    assert_eq!(b.plan, vec![FORWARD, FORWARD]);
    let sim = lava(5, &[], (1, 1, "north"), (1, 1, "south"));
    let b = bfs_verify(&sim, Duration::from_secs(1), 10_000);
    assert_eq!(b.plan, vec![LEFT, LEFT]);
}

#[test]
fn bfs_state_cap_is_timeout() {
    let sim = lava(10, &[], (1, 1, "north"), (10, 10, "south"));
    assert_eq!(
        bfs_verify(&sim, Duration::from_secs(5), 5).verdict,
        SearchVerdict::Timeout
    );
}

/// Reachability by depth-first enumeration over (x, y, heading), written
/// against compass geometry directly.
fn exhaustive_reachable(n: i64, tiles: &BTreeSet<(i64, i64)>, start: (i64, i64, i32), goal: (i64, i64, i32)) -> bool {
    if tiles.contains(&(start.0, start.1)) {
        return false;
    }
    let mut seen = HashSet::new();
    let mut stack = vec![start];
    while let Some((x, y, deg)) = stack.pop() {
        if (x, y, deg) == goal {
            return true;
        }
        if !seen.insert((x, y, deg)) {
            continue;
        }
        let rad = (deg as f64).to_radians();
        let (fx, fy) = (x + rad.cos().round() as i64, y + rad.sin().round() as i64);
        let fwd = if (1..=n).contains(&fx) && (1..=n).contains(&fy) {
            (fx, fy, deg)
        } else {
            (x, y, deg)
        };
        for next in [(x, y, (deg + 90) % 360), (x, y, (deg + 270) % 360), fwd] {
            if !tiles.contains(&(next.0, next.1)) {
                stack.push(next);
            }
        }
    }
    false
}

fn deg(label: &str) -> i32 {
    match label {
        "east" => 0,
        "north" => 90,
        "west" => 180,
        _ => 270,
    }
}

#[test]
fn bfs_agrees_with_exhaustive_enumeration_on_4x4() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cells: Vec<(i64, i64)> = (1..=4).flat_map(|x| (1..=4).map(move |y| (x, y))).collect();
    let headings = ["north", "south", "east", "west"];
    let mut infeasible = 0;
    for _ in 0..1500 {
        let k = rng.random_range(0..=3);
        let tiles: Vec<(i64, i64)> = cells.choose_multiple(&mut rng, k).copied().collect();
        let pick = |rng: &mut ChaCha8Rng| {
            let (x, y) = cells[rng.random_range(0..16)];
            (x, y, headings[rng.random_range(0..4)])
        };
        let (s, g) = (pick(&mut rng), pick(&mut rng));
        let sim = lava(4, &tiles, s, g);
        let set: BTreeSet<_> = tiles.iter().copied().collect();
        let expected =
            exhaustive_reachable(4, &set, (s.0, s.1, deg(s.2)), (g.0, g.1, deg(g.2))) && !set.contains(&(g.0, g.1));
        let b = bfs_verify(&sim, Duration::from_secs(5), 100_000);
        let got = match b.verdict {
            SearchVerdict::Feasible => true,
            SearchVerdict::Infeasible => false,
            v => panic!("unexpected {v:?}"),
        };
        assert_eq!(got, expected, "tiles {tiles:?} {s:?} -> {g:?}");
        if got {
            assert!(plan_is_sound(&sim, &b.plan));
        } else {
            infeasible += 1;
        }
    }
    assert!(infeasible > 0);
}

#[test]
fn search_never_contradicts_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = SearchParams {
        max_sim_steps: 50_000,
        ..SearchParams::default()
    };
    for i in 0..150 {
        let n = rng.random_range(3..=6);
        let k = rng.random_range(0..=4);
        let tiles: Vec<(i64, i64)> = (0..k)
            .map(|_| (rng.random_range(1..=n), rng.random_range(1..=n)))
            .collect();
        let h = ["north", "south", "east", "west"];
        let s = (
            rng.random_range(1..=n),
            rng.random_range(1..=n),
            h[rng.random_range(0..4)],
        );
        let g = (
            rng.random_range(1..=n),
            rng.random_range(1..=n),
            h[rng.random_range(0..4)],
        );
        let sim = lava(n, &tiles, s, g);
        let r = search(
            &sim,
            &SearchParams {
                seed: i,
                ..params.clone()
            },
        );
        let b = bfs_verify(&sim, Duration::from_secs(5), 100_000);
        if r.verdict == SearchVerdict::Feasible {
            assert!(plan_is_sound(&sim, &r.plan));
            assert_eq!(b.verdict, SearchVerdict::Feasible);
            assert!(b.plan.len() <= r.plan.len());
        }
        assert_ne!(r.verdict, SearchVerdict::Infeasible);
    }
}

#[test]
fn larger_budgets_keep_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let small = SearchParams {
        paths_per_iteration: 2,
        max_depth: 10,
        max_sim_steps: 5_000_000,
        time_budget: Duration::from_secs(60),
        ..SearchParams::default()
    };
    let mut checked = 0;
    for i in 0..60 {
        let n = rng.random_range(3..=5);
        let tiles: Vec<(i64, i64)> = (0..2)
            .map(|_| (rng.random_range(1..=n), rng.random_range(1..=n)))
            .collect();
        let s = (rng.random_range(1..=n), rng.random_range(1..=n), "north");
        let g = (rng.random_range(1..=n), rng.random_range(1..=n), "east");
        let sim = lava(n, &tiles, s, g);
        let base = SearchParams {
            seed: i,
            ..small.clone()
        };
        if search(&sim, &base).verdict != SearchVerdict::Feasible {
            continue;
        }
        checked += 1;
        for bigger in [
            SearchParams {
                paths_per_iteration: 4,
                ..base.clone()
            },
            SearchParams {
                max_depth: 20,
                ..base.clone()
            },
            SearchParams {
                max_sim_steps: 10_000_000,
                ..base.clone()
            },
        ] {
            assert_eq!(search(&sim, &bigger).verdict, SearchVerdict::Feasible);
        }
    }
    assert!(checked > 10);
}

proptest! {
    #[test]
    fn bin_index_in_range(v in -10.0f64..110.0, lo in -5.0f64..50.0, w in 0.0f64..60.0, b in 1usize..200) {
        let k = bin_index(v, lo, lo + w, b);
        prop_assert!((1..=b).contains(&k));
    }

    #[test]
    fn bin_index_agrees_with_floor(v in 0.0f64..=1.0, b in 1usize..50) {
        let t = b as f64 * v;
        prop_assume!(t.fract() != 0.0);
        prop_assert_eq!(bin_index(v, 0.0, 1.0, b), floor_bin(v, 0.0, 1.0, b));
    }

    #[test]
    fn heuristic_symmetric_and_positive(x1 in 1i64..=8, y1 in 1i64..=8, x2 in 1i64..=8, y2 in 1i64..=8, d1 in 0usize..4, d2 in 0usize..4) {
        let sim = lava(8, &[], (1, 1, "north"), (8, 8, "north"));
        let h = ["north", "south", "east", "west"];
        let a = sim.state_of(x1, y1, h[d1]);
        let b = sim.state_of(x2, y2, h[d2]);
        let ab = heuristic(sim.schema(), &a, &b, 100);
        prop_assert_eq!(ab, heuristic(sim.schema(), &b, &a, 100));
        prop_assert_eq!(ab == 0, a == b);
    }
}
