use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{World, WorldError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub viewpoint: usize,
    /// Absolute sector the agent faces.
    pub heading: usize,
    /// Always 0; carried for completeness.
    pub elevation: f64,
}

impl Pose {
    pub fn new(world: &World, viewpoint: usize, heading: usize) -> Result<Self, WorldError> {
        world.check_viewpoint(viewpoint)?;
        if heading >= world.k() {
            return Err(WorldError::BadHeading {
                heading,
                k: world.k(),
            });
        }
        Ok(Self {
            viewpoint,
            heading,
            elevation: 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveTo(usize),
    Stop,
}

/// `k` view vectors, view `j` describing absolute sector `(heading + j) mod k`.
/// Layout per view: category one-hot, attribute one-hot, navigable bit,
/// sin and cos of the angle relative to the heading.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoramicObservation {
    k: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PanoramicObservation {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn view_dim(&self) -> usize {
        self.dim
    }

    pub fn view(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    /// Row-major `k × view_dim` values.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

fn check_pose(world: &World, pose: &Pose) -> Result<(), WorldError> {
    world.check_viewpoint(pose.viewpoint)?;
    if pose.heading >= world.k() {
        return Err(WorldError::BadHeading {
            heading: pose.heading,
            k: world.k(),
        });
    }
    Ok(())
}

pub fn observe(world: &World, pose: &Pose) -> Result<PanoramicObservation, WorldError> {
    check_pose(world, pose)?;
    let (k, nc, na) = (world.k(), world.n_categories(), world.n_attributes());
    let dim = world.view_dim();
    let mut data = vec![0.0; k * dim];
    for j in 0..k {
        let s = (pose.heading + j) % k;
        let row = &mut data[j * dim..(j + 1) * dim];
        if let Some((cat, attr)) = world.landmark_in_sector(pose.viewpoint, s) {
            row[cat] = 1.0;
            row[nc + attr] = 1.0;
        }
        if world.neighbor_in_sector(pose.viewpoint, s).is_some() {
            row[nc + na] = 1.0;
        }
        let angle = 2.0 * PI * j as f64 / k as f64;
        row[nc + na + 1] = angle.sin();
        row[nc + na + 2] = angle.cos();
    }
    Ok(PanoramicObservation { k, dim, data })
}

/// One `MoveTo` per neighbor in absolute sector order, then `Stop`.
pub fn navigable_actions(world: &World, pose: &Pose) -> Result<Vec<Action>, WorldError> {
    check_pose(world, pose)?;
    let mut out: Vec<Action> = (0..world.k())
        .filter_map(|s| world.neighbor_in_sector(pose.viewpoint, s))
        .map(Action::MoveTo)
        .collect();
    out.push(Action::Stop);
    Ok(out)
}

/// Applies an action. After a move the agent faces the direction it travelled.
pub fn step(world: &World, pose: &Pose, action: Action) -> Result<Pose, WorldError> {
    check_pose(world, pose)?;
    match action {
        Action::Stop => Ok(*pose),
        Action::MoveTo(to) => {
            world.check_viewpoint(to)?;
            if !world.is_adjacent(pose.viewpoint, to) {
                return Err(WorldError::NotAdjacent {
                    from: pose.viewpoint,
                    to,
                });
            }
            Ok(Pose {
                viewpoint: to,
                heading: world.direction_sector(pose.viewpoint, to),
                elevation: 0.0,
            })
        }
    }
}
