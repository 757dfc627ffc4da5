use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a place class, row-major over a [`PlaceGrid`].
pub type ClassId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians in [-pi, pi).
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }
}

/// Wraps an angle into [-pi, pi).
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Axis-aligned rectangle in meters, half-open on the upper edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn from_extent(width: f64, height: f64) -> Self {
        Self::new(0.0, 0.0, width, height)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x < self.max_x && y >= self.min_y && y < self.max_y
    }

    /// Clamps a point into the half-open box.
    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        let eps_x = self.width() * 1e-12;
        let eps_y = self.height() * 1e-12;
        (
            x.clamp(self.min_x, self.max_x - eps_x),
            y.clamp(self.min_y, self.max_y - eps_y),
        )
    }
}

/// Regular partition of the workspace into `rows x cols` place classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaceGrid {
    pub bounds: Bounds,
    pub rows: usize,
    pub cols: usize,
}

impl PlaceGrid {
    pub fn new(bounds: Bounds, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(
                "place grid needs at least one cell".into(),
            ));
        }
        if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
            return Err(Error::InvalidConfig("place grid bounds are empty".into()));
        }
        Ok(Self { bounds, rows, cols })
    }

    pub fn num_classes(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major cell index; rows run along y, columns along x.
    pub fn class_of(&self, pose: &Pose) -> Result<ClassId> {
        self.class_of_point(pose.x, pose.y)
    }

    pub fn class_of_point(&self, x: f64, y: f64) -> Result<ClassId> {
        let b = &self.bounds;
        if !b.contains(x, y) {
            return Err(Error::PoseOutOfBounds { x, y });
        }
        let col = cell_index(x - b.min_x, b.width(), self.cols);
        let row = cell_index(y - b.min_y, b.height(), self.rows);
        Ok(row * self.cols + col)
    }

    pub fn cell_bounds(&self, class: ClassId) -> Bounds {
        let (row, col) = (class / self.cols, class % self.cols);
        let cw = self.bounds.width() / self.cols as f64;
        let ch = self.bounds.height() / self.rows as f64;
        Bounds::new(
            self.bounds.min_x + col as f64 * cw,
            self.bounds.min_y + row as f64 * ch,
            self.bounds.min_x + (col + 1) as f64 * cw,
            self.bounds.min_y + (row + 1) as f64 * ch,
        )
    }
}

// floor(offset * n / extent), computed so that exact cell edges land in the upper cell.
fn cell_index(offset: f64, extent: f64, n: usize) -> usize {
    let cell = extent / n as f64;
    let mut i = (offset / cell).floor() as usize;
    // Division can round an exact edge down; nudge back up.
    while i + 1 < n && offset >= (i + 1) as f64 * cell {
        i += 1;
    }
    while i > 0 && offset < i as f64 * cell {
        i -= 1;
    }
    i.min(n - 1)
}
