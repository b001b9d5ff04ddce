//! Pitch coordinates, the space weight and goal geometry.
//!
//! Coordinates are meters with the origin at the center spot, the x-axis
//! along the line joining the goals and the y-axis along the halfway line.
//! After [`normalize_attack_direction`] the attacking team always plays
//! toward +x.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TrackedFrame;

/// Tolerance used when deciding whether a point lies on the pitch.
const BOUNDS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn mirror_x(self) -> Self {
        Point2::new(-self.x, self.y)
    }

    pub fn mirror_y(self) -> Self {
        Point2::new(self.x, -self.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Pitch dimensions and the resolution of the dominance grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PitchSpec {
    pub length: f64,
    pub width: f64,
    pub grid_cell: f64,
}

impl Default for PitchSpec {
    fn default() -> Self {
        PitchSpec {
            length: 105.0,
            width: 68.0,
            grid_cell: 0.5,
        }
    }
}

impl PitchSpec {
    pub fn new(length: f64, width: f64, grid_cell: f64) -> Result<Self> {
        let spec = PitchSpec {
            length,
            width,
            grid_cell,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::InvalidParam(format!(
                "pitch length must be > 0, got {}",
                self.length
            )));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::InvalidParam(format!(
                "pitch width must be > 0, got {}",
                self.width
            )));
        }
        let max_cell = self.length.min(self.width) / 10.0;
        if !(self.grid_cell > 0.0 && self.grid_cell <= max_cell) {
            return Err(Error::InvalidParam(format!(
                "grid cell must lie in (0, {max_cell}], got {}",
                self.grid_cell
            )));
        }
        Ok(())
    }

    pub fn half_length(&self) -> f64 {
        self.length / 2.0
    }

    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    /// Number of grid columns along x.
    pub fn nx(&self) -> usize {
        (self.length / self.grid_cell - 1e-9).ceil() as usize
    }

    /// Number of grid rows along y.
    pub fn ny(&self) -> usize {
        (self.width / self.grid_cell - 1e-9).ceil() as usize
    }

    pub fn cell_count(&self) -> usize {
        self.nx() * self.ny()
    }

    // Cells tile the pitch exactly; when the length is not a multiple of
    // grid_cell the cells are stretched slightly instead of overhanging.
    pub fn cell_dx(&self) -> f64 {
        self.length / self.nx() as f64
    }

    pub fn cell_dy(&self) -> f64 {
        self.width / self.ny() as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_dx() * self.cell_dy()
    }

    /// Center of cell (ix, iy); ix runs along x, iy along y.
    pub fn cell_center(&self, ix: usize, iy: usize) -> Point2 {
        Point2::new(
            -self.half_length() + (ix as f64 + 0.5) * self.cell_dx(),
            -self.half_width() + (iy as f64 + 0.5) * self.cell_dy(),
        )
    }

    /// Cell centers in row-major order (iy outer, ix inner).
    pub fn cell_centers(&self) -> Vec<Point2> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut out = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                out.push(self.cell_center(ix, iy));
            }
        }
        out
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x.abs() <= self.half_length() + BOUNDS_EPS && p.y.abs() <= self.half_width() + BOUNDS_EPS
    }

    /// Within the pitch extended by `slack` meters on every side.
    pub fn contains_with_slack(&self, p: Point2, slack: f64) -> bool {
        p.x.abs() <= self.half_length() + slack && p.y.abs() <= self.half_width() + slack
    }

    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(
            p.x.clamp(-self.half_length(), self.half_length()),
            p.y.clamp(-self.half_width(), self.half_width()),
        )
    }

    /// Center of the goal the normalized attack plays toward.
    pub fn opponent_goal(&self) -> Point2 {
        Point2::new(self.half_length(), 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightParams {
    /// Lateral falloff: weight at the touchline is `1 - beta` times the
    /// weight on the pitch's long axis.
    pub beta: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams { beta: 0.5 }
    }
}

impl WeightParams {
    pub fn new(beta: f64) -> Result<Self> {
        let w = WeightParams { beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParam(format!(
                "weight beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Mirror a frame left-right unless its attacking team already plays toward +x.
///
/// Only x coordinates and x velocity components change sign. The frame's
/// `right_team` is swapped to the opposing team and `mirrored` toggled, so
/// applying the mirror twice restores the original frame.
pub fn normalize_attack_direction(frame: &TrackedFrame, attacking_team_attacks_right: bool) -> TrackedFrame {
    let mut out = frame.clone();
    if attacking_team_attacks_right {
        return out;
    }
    out.ball.pos = out.ball.pos.mirror_x();
    out.ball.vel = out.ball.vel.mirror_x();
    for p in &mut out.players {
        p.pos = p.pos.mirror_x();
        p.vel = p.vel.mirror_x();
    }
    if let Some(right) = out.meta.right_team.take() {
        out.meta.right_team = frame.other_team(&right).or(Some(right));
    }
    out.meta.mirrored = !out.meta.mirrored;
    out
}

/// Space weight in [0, 1] for a point on the pitch.
///
/// With `attacking_right` the weight is `x_norm * (1 - beta * y_norm)`,
/// where `x_norm` runs from 0 at the left goal line to 1 at the right one
/// and `y_norm = |y| / (width / 2)`. Without it `x_norm` is replaced by
/// `1 - x_norm` (the weight of the team defending the right goal).
pub fn field_weight(p: Point2, pitch: &PitchSpec, w: &WeightParams, attacking_right: bool) -> Result<f64> {
    if !p.is_finite() || !pitch.contains(p) {
        return Err(Error::Domain(format!(
            "point ({}, {}) lies outside the {}x{} pitch",
            p.x, p.y, pitch.length, pitch.width
        )));
    }
    Ok(weight_unchecked(pitch.clamp(p), pitch, w, attacking_right))
}

/// [`field_weight`] for tracking points, which are clamped onto the pitch.
pub fn field_weight_clamped(p: Point2, pitch: &PitchSpec, w: &WeightParams, attacking_right: bool) -> f64 {
    weight_unchecked(pitch.clamp(p), pitch, w, attacking_right)
}

fn weight_unchecked(p: Point2, pitch: &PitchSpec, w: &WeightParams, attacking_right: bool) -> f64 {
    let x_norm = (p.x + pitch.half_length()) / pitch.length;
    let x_norm = if attacking_right { x_norm } else { 1.0 - x_norm };
    let y_norm = p.y.abs() / pitch.half_width();
    (x_norm * (1.0 - w.beta * y_norm)).clamp(0.0, 1.0)
}

/// Distance (m) and absolute angle (rad, in [0, pi]) from `p` to the center
/// of the goal at +x. The angle is measured between `goal - p` and +x and is
/// defined as 0 at the goal center itself.
pub fn goal_distance_angle(p: Point2, pitch: &PitchSpec) -> (f64, f64) {
    let d = pitch.opponent_goal() - p;
    let dist = d.norm();
    if dist == 0.0 {
        return (0.0, 0.0);
    }
    (dist, d.y.atan2(d.x).abs())
}
