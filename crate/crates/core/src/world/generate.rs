use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sector_of, Landmark, World, WorldError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_viewpoints: usize,
    pub target_degree: usize,
    pub n_categories: usize,
    pub n_attributes: usize,
    #[serde(rename = "K")]
    pub k: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_viewpoints: 40,
            target_degree: 3,
            n_categories: 10,
            n_attributes: 6,
            k: 8,
        }
    }
}

// Grid spacing and minimum separation (meters); with the degree cap these
// give a mean edge length close to 2.2 m.
const SPACING: f64 = 1.9;
const MIN_SEPARATION: f64 = 1.1;
const LANDMARK_ON_PATH: f64 = 0.75;
const ATTEMPTS: usize = 32;

pub fn generate_world(seed: u64, cfg: &WorldConfig) -> Result<World, WorldError> {
    let WorldConfig {
        n_viewpoints: n,
        target_degree,
        n_categories,
        n_attributes,
        k,
    } = *cfg;
    if n < 2 {
        return Err(WorldError::Infeasible(format!(
            "need at least 2 viewpoints, got {n}"
        )));
    }
    if k < 2 {
        return Err(WorldError::Infeasible(format!(
            "need at least 2 sectors, got {k}"
        )));
    }
    if target_degree == 0 || target_degree >= k {
        return Err(WorldError::Infeasible(format!(
            "target degree {target_degree} must be in 1..{k}"
        )));
    }
    if n_categories == 0 || n_attributes == 0 {
        return Err(WorldError::Infeasible(
            "need at least one category and attribute".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ATTEMPTS {
        let Some(coords) = place_points(&mut rng, n) else {
            continue;
        };
        let Some(edges) = connect(&coords, target_degree, k) else {
            continue;
        };
        let landmarks = place_landmarks(&mut rng, &coords, &edges, k, n_categories, n_attributes);
        return World::from_parts(
            seed,
            k,
            n_categories,
            n_attributes,
            coords,
            &edges,
            landmarks,
        );
    }
    Err(WorldError::Infeasible(format!(
        "no valid layout for {n} viewpoints after {ATTEMPTS} attempts"
    )))
}

fn place_points(rng: &mut ChaCha8Rng, n: usize) -> Option<Vec<(f64, f64)>> {
    let side = SPACING * (n as f64).sqrt();
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut tries = 0;
    while pts.len() < n {
        tries += 1;
        if tries > 1000 * n {
            return None;
        }
        // coordinates on a 2⁻¹⁰ m grid keep the JSON text short and exact
        let x = (rng.gen_range(0.0..side) * 1024.0).round() / 1024.0;
        let y = (rng.gen_range(0.0..side) * 1024.0).round() / 1024.0;
        if pts
            .iter()
            .all(|&(px, py)| (px - x).hypot(py - y) >= MIN_SEPARATION)
        {
            pts.push((x, y));
        }
    }
    Some(pts)
}

/// Greedy shortest-first edges under the degree cap and the one-neighbor-per
/// sector rule, then shortest feasible bridges until connected.
fn connect(coords: &[(f64, f64)], target_degree: usize, k: usize) -> Option<Vec<(usize, usize)>> {
    let n = coords.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let d = (coords[b].0 - coords[a].0).hypot(coords[b].1 - coords[a].1);
            pairs.push((d, a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let sectors = |a: usize, b: usize| {
        let (pa, pb) = (coords[a], coords[b]);
        (
            sector_of(pb.0 - pa.0, pb.1 - pa.1, k),
            sector_of(pa.0 - pb.0, pa.1 - pb.1, k),
        )
    };
    let mut used = vec![vec![false; k]; n];
    let mut degree = vec![0usize; n];
    let mut comp = UnionFind::new(n);
    let mut edges = Vec::new();

    for &(_, a, b) in &pairs {
        let (sa, sb) = sectors(a, b);
        if degree[a] < target_degree && degree[b] < target_degree && !used[a][sa] && !used[b][sb] {
            used[a][sa] = true;
            used[b][sb] = true;
            degree[a] += 1;
            degree[b] += 1;
            comp.union(a, b);
            edges.push((a, b));
        }
    }
    while comp.count > 1 {
        let bridge = pairs.iter().find(|&&(_, a, b)| {
            let (sa, sb) = sectors(a, b);
            comp.find(a) != comp.find(b) && !used[a][sa] && !used[b][sb]
        });
        let &(_, a, b) = bridge?;
        let (sa, sb) = sectors(a, b);
        used[a][sa] = true;
        used[b][sb] = true;
        comp.union(a, b);
        edges.push((a, b));
    }
    Some(edges)
}

fn place_landmarks(
    rng: &mut ChaCha8Rng,
    coords: &[(f64, f64)],
    edges: &[(usize, usize)],
    k: usize,
    n_categories: usize,
    n_attributes: usize,
) -> Vec<Landmark> {
    let n = coords.len();
    let mut navigable = vec![vec![false; k]; n];
    for &(a, b) in edges {
        let (pa, pb) = (coords[a], coords[b]);
        navigable[a][sector_of(pb.0 - pa.0, pb.1 - pa.1, k)] = true;
        navigable[b][sector_of(pa.0 - pb.0, pa.1 - pb.1, k)] = true;
    }
    let mut out = Vec::new();
    for (vp, nav) in navigable.iter().enumerate() {
        let count = rng.gen_range(1..=3usize.min(k));
        let mut taken = vec![false; k];
        for _ in 0..count {
            let on_path: Vec<usize> = (0..k).filter(|&s| nav[s] && !taken[s]).collect();
            let off_path: Vec<usize> = (0..k).filter(|&s| !nav[s] && !taken[s]).collect();
            let pool =
                if off_path.is_empty() || (!on_path.is_empty() && rng.gen_bool(LANDMARK_ON_PATH)) {
                    &on_path
                } else {
                    &off_path
                };
            let &sector = pool.choose(rng).expect("count ≤ k leaves a free sector");
            taken[sector] = true;
            out.push(Landmark {
                vp,
                sector,
                cat: rng.gen_range(0..n_categories),
                attr: rng.gen_range(0..n_attributes),
            });
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
    count: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            count: n,
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
            self.count -= 1;
        }
    }
}
