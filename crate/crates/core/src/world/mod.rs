//! Procedural navigation graphs with panoramic, sector-based observations.
//!
//! A world is a connected undirected graph of viewpoints in the plane. Each
//! viewpoint sees `k` angular sectors; a sector may hold one navigable
//! neighbor and one landmark (category + attribute).

mod generate;
mod nav;
mod path;

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_world, WorldConfig};
pub use nav::{navigable_actions, observe, step, Action, PanoramicObservation, Pose};
pub use path::{sample_trajectory, shortest_path, PathSpec};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("infeasible world parameters: {0}")]
    Infeasible(String),
    #[error("unknown viewpoint {0}")]
    UnknownViewpoint(usize),
    #[error("heading {heading} out of range for {k} sectors")]
    BadHeading { heading: usize, k: usize },
    #[error("viewpoint {to} is not adjacent to {from}")]
    NotAdjacent { from: usize, to: usize },
    #[error("no path with {min}..={max} hops found after {tries} tries")]
    NoQualifyingPair {
        min: usize,
        max: usize,
        tries: usize,
    },
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error("world json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Landmark {
    pub vp: usize,
    pub sector: usize,
    pub cat: usize,
    pub attr: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// Edge lengths live on a dyadic grid (multiples of 2⁻²⁰ m) so that every
/// path sum is exact and independent of summation order.
pub const LENGTH_QUANTUM: f64 = 1.0 / (1u64 << 20) as f64;

pub fn quantize_length(d: f64) -> f64 {
    (d / LENGTH_QUANTUM).round() * LENGTH_QUANTUM
}

/// Sector of the direction `(dx, dy)`; sector 0 is centred on +x and indices
/// grow counter-clockwise.
pub fn sector_of(dx: f64, dy: f64, k: usize) -> usize {
    let width = 2.0 * PI / k as f64;
    let theta = dy.atan2(dx).rem_euclid(2.0 * PI);
    ((theta + width / 2.0) / width).floor() as usize % k
}

#[derive(Debug)]
pub struct World {
    seed: u64,
    k: usize,
    n_categories: usize,
    n_attributes: usize,
    viewpoints: Vec<Viewpoint>,
    edges: Vec<Edge>,
    landmarks: Vec<Landmark>,
    // per viewpoint, per absolute sector
    neighbor_at: Vec<Vec<Option<usize>>>,
    landmark_at: Vec<Vec<Option<(usize, usize)>>>,
    adjacency: Vec<Vec<(usize, f64)>>,
    distances: OnceLock<Vec<f64>>,
}

impl Clone for World {
    fn clone(&self) -> Self {
        Self {
            seed: self.seed,
            k: self.k,
            n_categories: self.n_categories,
            n_attributes: self.n_attributes,
            viewpoints: self.viewpoints.clone(),
            edges: self.edges.clone(),
            landmarks: self.landmarks.clone(),
            neighbor_at: self.neighbor_at.clone(),
            landmark_at: self.landmark_at.clone(),
            adjacency: self.adjacency.clone(),
            distances: OnceLock::new(),
        }
    }
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.k == other.k
            && self.n_categories == other.n_categories
            && self.n_attributes == other.n_attributes
            && self.viewpoints == other.viewpoints
            && self.edges == other.edges
            && self.landmarks == other.landmarks
    }
}

impl World {
    /// Builds and validates a world. Edge lengths are derived from the
    /// coordinates; `edges` may be given in any order or orientation.
    pub fn from_parts(
        seed: u64,
        k: usize,
        n_categories: usize,
        n_attributes: usize,
        coords: Vec<(f64, f64)>,
        edges: &[(usize, usize)],
        landmarks: Vec<Landmark>,
    ) -> Result<Self, WorldError> {
        let n = coords.len();
        if k < 2 {
            return Err(WorldError::Invalid(format!(
                "need at least 2 sectors, got {k}"
            )));
        }
        if n == 0 {
            return Err(WorldError::Invalid("no viewpoints".into()));
        }
        if n_categories == 0 || n_attributes == 0 {
            return Err(WorldError::Invalid(
                "need at least one category and attribute".into(),
            ));
        }
        if coords.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(WorldError::Invalid("non-finite coordinate".into()));
        }
        let viewpoints: Vec<Viewpoint> = coords
            .iter()
            .enumerate()
            .map(|(id, &(x, y))| Viewpoint { id, x, y })
            .collect();

        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n {
                return Err(WorldError::UnknownViewpoint(a));
            }
            if b >= n {
                return Err(WorldError::UnknownViewpoint(b));
            }
            if a == b {
                return Err(WorldError::Invalid(format!("self loop at {a}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        if norm.windows(2).any(|w| w[0] == w[1]) {
            return Err(WorldError::Invalid("duplicate edge".into()));
        }

        let mut neighbor_at = vec![vec![None; k]; n];
        let mut adjacency = vec![Vec::new(); n];
        let mut out_edges = Vec::with_capacity(norm.len());
        for &(a, b) in &norm {
            let (pa, pb) = (viewpoints[a], viewpoints[b]);
            let length = quantize_length((pb.x - pa.x).hypot(pb.y - pa.y));
            if length <= 0.0 {
                return Err(WorldError::Invalid(format!("zero-length edge {a}-{b}")));
            }
            for (from, to) in [(a, b), (b, a)] {
                let (pf, pt) = (viewpoints[from], viewpoints[to]);
                let s = sector_of(pt.x - pf.x, pt.y - pf.y, k);
                if let Some(other) = neighbor_at[from][s] {
                    return Err(WorldError::Invalid(format!(
                        "viewpoint {from} has neighbors {other} and {to} in sector {s}"
                    )));
                }
                neighbor_at[from][s] = Some(to);
                adjacency[from].push((to, length));
            }
            out_edges.push(Edge { a, b, length });
        }
        for adj in &mut adjacency {
            adj.sort_unstable_by_key(|&(v, _)| v);
        }

        let mut landmarks = landmarks;
        landmarks.sort_unstable();
        let mut landmark_at = vec![vec![None; k]; n];
        for l in &landmarks {
            if l.vp >= n {
                return Err(WorldError::UnknownViewpoint(l.vp));
            }
            if l.sector >= k || l.cat >= n_categories || l.attr >= n_attributes {
                return Err(WorldError::Invalid(format!("landmark out of range: {l:?}")));
            }
            if landmark_at[l.vp][l.sector].is_some() {
                return Err(WorldError::Invalid(format!(
                    "two landmarks at viewpoint {} sector {}",
                    l.vp, l.sector
                )));
            }
            landmark_at[l.vp][l.sector] = Some((l.cat, l.attr));
        }

        let world = Self {
            seed,
            k,
            n_categories,
            n_attributes,
            viewpoints,
            edges: out_edges,
            landmarks,
            neighbor_at,
            landmark_at,
            adjacency,
            distances: OnceLock::new(),
        };
        if n > 1 {
            if let Some(v) = (0..n).find(|&v| world.adjacency[v].is_empty()) {
                return Err(WorldError::Invalid(format!("viewpoint {v} is isolated")));
            }
        }
        if !world.is_connected() {
            return Err(WorldError::Invalid("graph is not connected".into()));
        }
        Ok(world)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sectors per panorama.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn n_attributes(&self) -> usize {
        self.n_attributes
    }

    /// Width of one view vector.
    pub fn view_dim(&self) -> usize {
        self.n_categories + self.n_attributes + 3
    }

    pub fn len(&self) -> usize {
        self.viewpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.viewpoints.is_empty()
    }

    pub fn viewpoints(&self) -> &[Viewpoint] {
        &self.viewpoints
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn check_viewpoint(&self, v: usize) -> Result<(), WorldError> {
        if v < self.len() {
            Ok(())
        } else {
            Err(WorldError::UnknownViewpoint(v))
        }
    }

    /// Neighbors of `v` with edge lengths, sorted by id.
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Neighbor lying in absolute sector `s` of `v`, if any.
    pub fn neighbor_in_sector(&self, v: usize, s: usize) -> Option<usize> {
        self.neighbor_at[v][s]
    }

    /// `(category, attribute)` of the landmark in absolute sector `s` of `v`.
    pub fn landmark_in_sector(&self, v: usize, s: usize) -> Option<(usize, usize)> {
        self.landmark_at[v][s]
    }

    /// Absolute sector at `from` pointing toward `to`.
    pub fn direction_sector(&self, from: usize, to: usize) -> usize {
        let (a, b) = (self.viewpoints[from], self.viewpoints[to]);
        sector_of(b.x - a.x, b.y - a.y, self.k)
    }

    pub fn edge_length(&self, a: usize, b: usize) -> Option<f64> {
        let adj = self.adjacency.get(a)?;
        adj.binary_search_by_key(&b, |&(v, _)| v)
            .ok()
            .map(|i| adj[i].1)
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.edge_length(a, b).is_some()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(u, _) in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }

    /// Geodesic distance between two viewpoints (all-pairs table built on
    /// first use).
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let n = self.len();
        let table = self.distances.get_or_init(|| {
            let mut t = Vec::with_capacity(n * n);
            for s in 0..n {
                t.extend(path::dijkstra(self, s).0);
            }
            t
        });
        table[a * n + b]
    }

    /// Copy with every coordinate and edge length multiplied by `c`.
    /// Lengths are scaled directly rather than re-quantized.
    pub fn scaled(&self, c: f64) -> Self {
        let mut w = self.clone();
        for v in &mut w.viewpoints {
            v.x *= c;
            v.y *= c;
        }
        for e in &mut w.edges {
            e.length *= c;
        }
        for adj in &mut w.adjacency {
            for (_, l) in adj.iter_mut() {
                *l *= c;
            }
        }
        w
    }

    pub fn to_json(&self) -> Result<String, WorldError> {
        Ok(serde_json::to_string_pretty(&WorldFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: WorldFile = serde_json::from_str(text)?;
        file.into_world()
    }
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    seed: u64,
    #[serde(rename = "K")]
    k: usize,
    n_categories: usize,
    n_attributes: usize,
    viewpoints: Vec<Viewpoint>,
    edges: Vec<[usize; 2]>,
    landmarks: Vec<Landmark>,
}

impl From<&World> for WorldFile {
    fn from(w: &World) -> Self {
        Self {
            seed: w.seed,
            k: w.k,
            n_categories: w.n_categories,
            n_attributes: w.n_attributes,
            viewpoints: w.viewpoints.clone(),
            edges: w.edges.iter().map(|e| [e.a, e.b]).collect(),
            landmarks: w.landmarks.clone(),
        }
    }
}

impl WorldFile {
    fn into_world(self) -> Result<World, WorldError> {
        for (i, v) in self.viewpoints.iter().enumerate() {
            if v.id != i {
                return Err(WorldError::Invalid(format!(
                    "viewpoint ids must be 0..n in order; found {} at {i}",
                    v.id
                )));
            }
        }
        let coords = self.viewpoints.iter().map(|v| (v.x, v.y)).collect();
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        World::from_parts(
            self.seed,
            self.k,
            self.n_categories,
            self.n_attributes,
            coords,
            &edges,
            self.landmarks,
        )
    }
}
