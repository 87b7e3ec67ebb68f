use std::collections::{BTreeMap, VecDeque};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlnav::world::{
    generate_world, navigable_actions, observe, sample_trajectory, shortest_path, step, Action,
    Pose, World, WorldConfig,
};

fn seed7() -> World {
    let cfg = WorldConfig {
        n_viewpoints: 40,
        target_degree: 3,
        ..WorldConfig::default()
    };
    generate_world(7, &cfg).unwrap()
}

/// All-pairs distances by Floyd–Warshall over the edge list.
fn floyd_warshall(world: &World) -> Vec<Vec<f64>> {
    let n = world.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in world.edges() {
        d[e.a][e.b] = e.length;
        d[e.b][e.a] = e.length;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

fn angle_sector(world: &World, from: usize, to: usize) -> usize {
    let (a, b) = (world.viewpoints()[from], world.viewpoints()[to]);
    let deg = (b.y - a.y).atan2(b.x - a.x).to_degrees().rem_euclid(360.0);
    ((deg + 22.5) / 45.0).floor() as usize % 8
}

#[test]
fn generation_is_deterministic() {
    let a = seed7();
    let b = seed7();
    assert_eq!(a, b);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_ne!(a, generate_world(8, &WorldConfig::default()).unwrap());
}

#[test]
fn json_round_trip_is_exact() {
    let w = seed7();
    let text = w.to_json().unwrap();
    let back = World::from_json(&text).unwrap();
    assert_eq!(w, back);
    assert_eq!(text, back.to_json().unwrap());
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
    assert!(["seed", "K", "viewpoints", "edges", "landmarks"]
        .iter()
        .all(|k| keys.contains(&k.to_string())));
}

#[test]
fn two_viewpoints_share_one_edge() {
    let cfg = WorldConfig {
        n_viewpoints: 2,
        ..WorldConfig::default()
    };
    let w = generate_world(3, &cfg).unwrap();
    assert_eq!(w.edges().len(), 1);
    for (v, other) in [(0, 1), (1, 0)] {
        let acts = navigable_actions(&w, &Pose::new(&w, v, 0).unwrap()).unwrap();
        assert_eq!(acts, vec![Action::MoveTo(other), Action::Stop]);
    }
}

#[test]
fn seed7_world_passes_brute_force_validation() {
    let w = seed7();
    let n = w.len();
    assert_eq!(n, 40);
    let mut adj = vec![Vec::new(); n];
    for e in w.edges() {
        let (a, b) = (w.viewpoints()[e.a], w.viewpoints()[e.b]);
        assert!((e.length - (b.x - a.x).hypot(b.y - a.y)).abs() <= 1e-6);
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    // BFS connectivity
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    assert!(seen.iter().all(|&s| s));
    for v in 0..n {
        assert!((1..=8).contains(&adj[v].len()), "degree of {v}");
        let mut sectors: Vec<usize> = adj[v].iter().map(|&u| angle_sector(&w, v, u)).collect();
        sectors.sort_unstable();
        sectors.dedup();
        assert_eq!(
            sectors.len(),
            adj[v].len(),
            "two neighbors share a sector at {v}"
        );
        let marks: Vec<_> = w.landmarks().iter().filter(|l| l.vp == v).collect();
        assert!((1..=3).contains(&marks.len()));
    }
}

#[test]
fn degree_three_actions_follow_sector_order() {
    let w = seed7();
    let v = (0..w.len())
        .find(|&v| w.degree(v) == 3)
        .expect("some degree-3 viewpoint");
    let acts = navigable_actions(&w, &Pose::new(&w, v, 5).unwrap()).unwrap();
    assert_eq!(acts.len(), 4);
    assert_eq!(acts[3], Action::Stop);
    let mut expect: Vec<(usize, usize)> = w
        .neighbors(v)
        .iter()
        .map(|&(u, _)| (angle_sector(&w, v, u), u))
        .collect();
    expect.sort_unstable();
    let expect: Vec<Action> = expect.into_iter().map(|(_, u)| Action::MoveTo(u)).collect();
    assert_eq!(acts[..3], expect[..]);
}

#[test]
fn seed7_dijkstra_matches_floyd_warshall() {
    let w = seed7();
    let fw = floyd_warshall(&w);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let (a, b) = (rng.gen_range(0..40), rng.gen_range(0..40));
        let (path, len) = shortest_path(&w, a, b).unwrap();
        assert_eq!(len, fw[a][b]);
        let sum: f64 = path
            .windows(2)
            .map(|p| w.edge_length(p[0], p[1]).unwrap())
            .sum();
        assert_eq!(sum, len);
    }
}

#[test]
fn seed7_hop_histogram_within_bounds() {
    let w = seed7();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut hist = BTreeMap::new();
    for _ in 0..1000 {
        let p = sample_trajectory(&w, &mut rng, 3, 6).unwrap();
        p.validate(&w).unwrap();
        *hist.entry(p.hops()).or_insert(0) += 1;
    }
    assert!(hist.keys().all(|h| (3..=6).contains(h)), "{hist:?}");
}

fn any_world() -> impl Strategy<Value = World> {
    (any::<u64>(), 2usize..=60, 1usize..=4).prop_map(|(seed, n, degree)| {
        let cfg = WorldConfig {
            n_viewpoints: n,
            target_degree: degree,
            ..WorldConfig::default()
        };
        generate_world(seed, &cfg).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn shortest_paths_equal_floyd_warshall_exactly(w in any_world()) {
        let fw = floyd_warshall(&w);
        for a in 0..w.len() {
            for b in 0..w.len() {
                prop_assert_eq!(w.distance(a, b), fw[a][b]);
            }
        }
    }

    #[test]
    fn triangle_inequality(w in any_world(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = w.len();
        for _ in 0..50 {
            let (a, b, c) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
            prop_assert!(w.distance(a, c) <= w.distance(a, b) + w.distance(b, c));
        }
    }

    #[test]
    fn observe_is_pure_and_move_round_trips(w in any_world(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = rng.gen_range(0..w.len());
        let pose = Pose::new(&w, v, rng.gen_range(0..8)).unwrap();
        prop_assert_eq!(observe(&w, &pose).unwrap(), observe(&w, &pose).unwrap());
        for act in navigable_actions(&w, &pose).unwrap() {
            if let Action::MoveTo(q) = act {
                let there = step(&w, &pose, act).unwrap();
                prop_assert_eq!(there.viewpoint, q);
                let back = step(&w, &there, Action::MoveTo(v)).unwrap();
                prop_assert_eq!(back.viewpoint, v);
            }
        }
        let obs = observe(&w, &pose).unwrap();
        for j in 0..8 {
            let view = obs.view(j);
            prop_assert!(view[..w.n_categories()].iter().filter(|&&x| x != 0.0).count() <= 1);
            let nav = view[w.n_categories() + w.n_attributes()];
            prop_assert!(nav == 0.0 || nav == 1.0);
        }
    }

    #[test]
    fn sampled_paths_are_geodesics(w in any_world(), seed in any::<u64>()) {
        prop_assume!(w.len() >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = sample_trajectory(&w, &mut rng, 1, 40).unwrap();
        prop_assert_eq!(p.length, shortest_path(&w, p.start(), p.goal).unwrap().1);
        p.validate(&w).unwrap();
    }
}
