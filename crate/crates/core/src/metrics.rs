//! Trajectory evaluation: path length, navigation error, success, oracle
//! success, SPL and CLS, plus seed-level aggregation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{World, WorldError};

pub const SUCCESS_RADIUS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty path")]
    EmptyPath,
    #[error("reference path must end at the goal {goal}, ends at {last}")]
    ReferenceGoal { goal: usize, last: usize },
    #[error("no episodes to aggregate")]
    NoEpisodes,
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Sum of edge lengths along `path`.
pub fn path_length(world: &World, path: &[usize]) -> Result<f64, MetricsError> {
    if path.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    for &v in path {
        world.check_viewpoint(v)?;
    }
    path.windows(2).try_fold(0.0, |acc, w| {
        world
            .edge_length(w[0], w[1])
            .map(|l| acc + l)
            .ok_or(MetricsError::World(WorldError::NotAdjacent {
                from: w[0],
                to: w[1],
            }))
    })
}

/// Geodesic distance from where the agent stopped to the goal.
pub fn nav_error(world: &World, final_node: usize, goal: usize) -> Result<f64, MetricsError> {
    world.check_viewpoint(final_node)?;
    world.check_viewpoint(goal)?;
    Ok(world.distance(final_node, goal))
}

/// 1 if strictly inside the radius.
pub fn success(ne: f64, radius: f64) -> f64 {
    if ne < radius {
        1.0
    } else {
        0.0
    }
}

/// 1 if any visited node was strictly inside the radius.
pub fn oracle_success(
    world: &World,
    path: &[usize],
    goal: usize,
    radius: f64,
) -> Result<f64, MetricsError> {
    if path.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    let mut best = f64::INFINITY;
    for &v in path {
        best = best.min(nav_error(world, v, goal)?);
    }
    Ok(success(best, radius))
}

/// `S · l / max(p, l)`; a zero-length reference and zero-length prediction
/// count as a perfect ratio.
pub fn spl(s: f64, pred_length: f64, geodesic_length: f64) -> f64 {
    let denom = pred_length.max(geodesic_length);
    if denom == 0.0 {
        return s;
    }
    s * geodesic_length / denom
}

/// Coverage weighted by length score. Coverage is the mean over reference
/// nodes of `exp(−d/radius)` with `d` the geodesic distance to the nearest
/// predicted node; the expected length is coverage times the reference
/// length in meters.
pub fn cls(
    world: &World,
    predicted: &[usize],
    reference: &[usize],
    radius: f64,
) -> Result<f64, MetricsError> {
    if predicted.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    let mut pc = 0.0;
    for &r in reference {
        let mut d = f64::INFINITY;
        for &p in predicted {
            d = d.min(nav_error(world, p, r)?);
        }
        pc += (-d / radius).exp();
    }
    pc /= reference.len() as f64;
    let epl = pc * path_length(world, reference)?;
    let pl = path_length(world, predicted)?;
    let denom = epl + (epl - pl).abs();
    let ls = if denom == 0.0 { 1.0 } else { epl / denom };
    Ok(pc * ls)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub predicted: Vec<usize>,
    pub reference: Vec<usize>,
    pub goal: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub pl: f64,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub cls: f64,
}

pub const METRIC_NAMES: [&str; 6] = ["PL", "NE", "SR", "OSR", "SPL", "CLS"];

impl TrajectoryMetrics {
    pub fn to_array(self) -> [f64; 6] {
        [self.pl, self.ne, self.sr, self.osr, self.spl, self.cls]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            pl: a[0],
            ne: a[1],
            sr: a[2],
            osr: a[3],
            spl: a[4],
            cls: a[5],
        }
    }
}

pub fn evaluate_episode(
    world: &World,
    rec: &TrajectoryRecord,
) -> Result<TrajectoryMetrics, MetricsError> {
    let last = *rec.reference.last().ok_or(MetricsError::EmptyPath)?;
    if last != rec.goal {
        return Err(MetricsError::ReferenceGoal {
            goal: rec.goal,
            last,
        });
    }
    let end = *rec.predicted.last().ok_or(MetricsError::EmptyPath)?;
    let pl = path_length(world, &rec.predicted)?;
    let ne = nav_error(world, end, rec.goal)?;
    let sr = success(ne, rec.radius);
    let geodesic = world.distance(rec.reference[0], rec.goal);
    Ok(TrajectoryMetrics {
        pl,
        ne,
        sr,
        osr: oracle_success(world, &rec.predicted, rec.goal, rec.radius)?,
        spl: spl(sr, pl, geodesic),
        cls: cls(world, &rec.predicted, &rec.reference, rec.radius)?,
    })
}

/// Per-seed episode means, then mean and population standard deviation
/// across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub split: String,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub per_seed: Vec<TrajectoryMetrics>,
    pub mean: TrajectoryMetrics,
    pub std: TrajectoryMetrics,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn episode_mean(episodes: &[TrajectoryMetrics]) -> TrajectoryMetrics {
    let mut acc = [0.0; 6];
    for e in episodes {
        for (a, v) in acc.iter_mut().zip(e.to_array()) {
            *a += v;
        }
    }
    TrajectoryMetrics::from_array(acc.map(|a| a / episodes.len() as f64))
}

/// `runs` pairs each seed with its episodes' metrics, listed in episode-id
/// order.
pub fn aggregate(
    split: &str,
    runs: &[(u64, Vec<TrajectoryMetrics>)],
) -> Result<AggregateReport, MetricsError> {
    if runs.is_empty() || runs.iter().any(|(_, eps)| eps.is_empty()) {
        return Err(MetricsError::NoEpisodes);
    }
    let per_seed: Vec<TrajectoryMetrics> = runs.iter().map(|(_, eps)| episode_mean(eps)).collect();
    let mut mean = [0.0; 6];
    let mut std = [0.0; 6];
    for m in 0..6 {
        let column: Vec<f64> = per_seed.iter().map(|p| p.to_array()[m]).collect();
        (mean[m], std[m]) = mean_std(&column);
    }
    Ok(AggregateReport {
        split: split.to_string(),
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        episodes: runs[0].1.len(),
        per_seed,
        mean: TrajectoryMetrics::from_array(mean),
        std: TrajectoryMetrics::from_array(std),
    })
}

pub const RESULTS_HEADER: &str = "split,seed,episodes,PL,NE,SR,OSR,SPL,CLS";

fn push_row(out: &mut String, split: &str, seed: &str, episodes: usize, m: &TrajectoryMetrics) {
    write!(out, "{split},{seed},{episodes}").unwrap();
    for v in m.to_array() {
        write!(out, ",{v:.4}").unwrap();
    }
    out.push('\n');
}

impl AggregateReport {
    /// One row per seed, then `mean` and `std` rows.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (seed, m) in self.seeds.iter().zip(&self.per_seed) {
            push_row(&mut out, &self.split, &seed.to_string(), self.episodes, m);
        }
        push_row(&mut out, &self.split, "mean", self.episodes, &self.mean);
        push_row(&mut out, &self.split, "std", self.episodes, &self.std);
        out
    }
}

pub fn results_csv<'a>(reports: impl IntoIterator<Item = &'a AggregateReport>) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // 0 - 1 - 2 - 3 along the x axis, 2 m apart, plus 4 hanging 2 m north of 0
    fn line() -> World {
        let coords = vec![(0.0, 0.0), (2.0, 0.0), (4.0, 0.0), (6.0, 0.0), (0.0, 2.0)];
        World::from_parts(
            0,
            8,
            1,
            1,
            coords,
            &[(0, 1), (1, 2), (2, 3), (0, 4)],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn path_length_cases() {
        let w = line();
        assert_eq!(path_length(&w, &[2]).unwrap(), 0.0);
        assert_eq!(path_length(&w, &[0, 1]).unwrap(), 2.0);
        assert_eq!(path_length(&w, &[4, 0, 1, 2]).unwrap(), 6.0);
        assert!(path_length(&w, &[0, 2]).is_err());
        assert!(path_length(&w, &[]).is_err());
    }

    #[test]
    fn success_boundary_is_strict() {
        assert_eq!(success(0.0, 3.0), 1.0);
        assert_eq!(success(3.0, 3.0), 0.0);
        assert_eq!(success(2.999, 3.0), 1.0);
    }

    #[test]
    fn passing_through_goal_counts_for_oracle_only() {
        let w = line();
        // goal 3, agent goes 0 → 3 and back to 0 (6 m away)
        let rec = TrajectoryRecord {
            predicted: vec![0, 1, 2, 3, 2, 1, 0],
            reference: vec![0, 1, 2, 3],
            goal: 3,
            radius: 3.0,
        };
        let m = evaluate_episode(&w, &rec).unwrap();
        assert_eq!((m.sr, m.osr, m.spl), (0.0, 1.0, 0.0));
        assert_eq!(m.ne, 6.0);
    }

    #[test]
    fn spl_formula() {
        assert_eq!(spl(1.0, 8.0, 6.0), 0.75);
        assert_eq!(spl(0.0, 8.0, 6.0), 0.0);
        assert_eq!(spl(1.0, 6.0, 6.0), 1.0);
    }

    #[test]
    fn cls_hand_computed() {
        let w = line();
        // reference 0→1→2→3, prediction 0→4: distances to nearest predicted
        // node are 0, 2, 4, 6
        let got = cls(&w, &[0, 4], &[0, 1, 2, 3], 3.0).unwrap();
        let pc = (1.0 + (-2.0f64 / 3.0).exp() + (-4.0f64 / 3.0).exp() + (-2.0f64).exp()) / 4.0;
        let epl = pc * 6.0;
        let ls = epl / (epl + (epl - 2.0f64).abs());
        assert!((got - pc * ls).abs() < 1e-15);
        assert_eq!(cls(&w, &[0, 1, 2, 3], &[0, 1, 2, 3], 3.0).unwrap(), 1.0);
        assert_eq!(cls(&w, &[2], &[2], 3.0).unwrap(), 1.0);
    }

    #[test]
    fn aggregate_hand_arithmetic() {
        let m = |v: f64| TrajectoryMetrics::from_array([v; 6]);
        let one = aggregate("val", &[(1, vec![m(0.5)])]).unwrap();
        assert_eq!(one.mean, m(0.5));
        assert_eq!(one.std, m(0.0));
        let runs = vec![
            (1, vec![m(0.2), m(0.4)]),
            (2, vec![m(0.6), m(0.6)]),
            (3, vec![m(0.9), m(0.9)]),
        ];
        let r = aggregate("val", &runs).unwrap();
        // seed means 0.3, 0.6, 0.9
        assert!((r.mean.sr - 0.6).abs() < 1e-12);
        assert!((r.std.sr - (0.06f64).sqrt()).abs() < 1e-12);
        assert!(aggregate("val", &[]).is_err());
        let csv = results_csv([&one]);
        assert_eq!(
            csv,
            "split,seed,episodes,PL,NE,SR,OSR,SPL,CLS\n\
             val,1,1,0.5000,0.5000,0.5000,0.5000,0.5000,0.5000\n\
             val,mean,1,0.5000,0.5000,0.5000,0.5000,0.5000,0.5000\n\
             val,std,1,0.0000,0.0000,0.0000,0.0000,0.0000,0.0000\n"
        );
    }
}
