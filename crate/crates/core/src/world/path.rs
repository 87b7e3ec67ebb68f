use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{World, WorldError};

/// A reference trajectory: the geodesic from `path[0]` to `goal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub path: Vec<usize>,
    pub heading: usize,
    pub goal: usize,
    pub length: f64,
}

impl PathSpec {
    pub fn start(&self) -> usize {
        self.path[0]
    }

    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }

    pub fn validate(&self, world: &World) -> Result<(), WorldError> {
        let invalid = |m: String| Err(WorldError::Invalid(m));
        if self.path.is_empty() {
            return invalid("empty path".into());
        }
        for &v in &self.path {
            world.check_viewpoint(v)?;
        }
        if self.heading >= world.k() {
            return Err(WorldError::BadHeading {
                heading: self.heading,
                k: world.k(),
            });
        }
        if let Some(w) = self
            .path
            .windows(2)
            .find(|w| !world.is_adjacent(w[0], w[1]))
        {
            return Err(WorldError::NotAdjacent {
                from: w[0],
                to: w[1],
            });
        }
        if *self.path.last().unwrap() != self.goal {
            return invalid("path does not end at the goal".into());
        }
        let geodesic = world.distance(self.start(), self.goal);
        if self.length != geodesic {
            return invalid(format!(
                "length {} differs from geodesic {geodesic}",
                self.length
            ));
        }
        Ok(())
    }
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on (dist, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source distances and predecessors. Among equal-length routes the
/// smaller predecessor id wins.
pub(super) fn dijkstra(world: &World, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = world.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry {
        dist: 0.0,
        node: source,
    });
    while let Some(Entry { dist: d, node: v }) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        for &(u, w) in world.neighbors(v) {
            if done[u] {
                continue;
            }
            let nd = d + w;
            let better = nd < dist[u] || (nd == dist[u] && pred[u].map_or(true, |p| v < p));
            if better {
                dist[u] = nd;
                pred[u] = Some(v);
                heap.push(Entry { dist: nd, node: u });
            }
        }
    }
    (dist, pred)
}

pub fn shortest_path(world: &World, a: usize, b: usize) -> Result<(Vec<usize>, f64), WorldError> {
    world.check_viewpoint(a)?;
    world.check_viewpoint(b)?;
    if a == b {
        return Ok((vec![a], 0.0));
    }
    let (dist, pred) = dijkstra(world, a);
    let mut path = vec![b];
    let mut v = b;
    while v != a {
        v = pred[v].ok_or_else(|| WorldError::Invalid(format!("{b} unreachable from {a}")))?;
        path.push(v);
    }
    path.reverse();
    Ok((path, dist[b]))
}

const SAMPLE_TRIES: usize = 10_000;

/// Rejection-samples endpoint pairs until the geodesic between them has a
/// hop count in `min_hops..=max_hops`. The start heading is uniform.
pub fn sample_trajectory<R: Rng + ?Sized>(
    world: &World,
    rng: &mut R,
    min_hops: usize,
    max_hops: usize,
) -> Result<PathSpec, WorldError> {
    if min_hops == 0 || max_hops < min_hops {
        return Err(WorldError::Infeasible(format!(
            "hop range {min_hops}..={max_hops} is empty or includes 0"
        )));
    }
    let n = world.len();
    for _ in 0..SAMPLE_TRIES {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let heading = rng.gen_range(0..world.k());
        if a == b {
            continue;
        }
        let (path, length) = shortest_path(world, a, b)?;
        let hops = path.len() - 1;
        if (min_hops..=max_hops).contains(&hops) {
            return Ok(PathSpec {
                path,
                heading,
                goal: b,
                length,
            });
        }
    }
    Err(WorldError::NoQualifyingPair {
        min: min_hops,
        max: max_hops,
        tries: SAMPLE_TRIES,
    })
}
