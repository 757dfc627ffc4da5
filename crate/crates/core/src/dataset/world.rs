//! Deterministic desk-scale worlds: box landmarks beside a road route.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::grid::{wrap_angle, Bounds, Pose};
use super::labels::SemanticLabel;
use crate::error::{Error, Result};

const PLACEMENT_RETRIES: usize = 2000;
const LANDMARK_GAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkKind {
    Building,
    Tree,
    Pole,
    TrafficSign,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LandmarkCounts {
    pub building: usize,
    pub tree: usize,
    pub pole: usize,
    pub traffic_sign: usize,
    pub other: usize,
}

impl LandmarkCounts {
    pub fn total(&self) -> usize {
        self.building + self.tree + self.pole + self.traffic_sign + self.other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub fov_deg: f64,
    /// Horizon row as a fraction of image height, measured from the top.
    pub horizon_frac: f64,
    pub height: f64,
    pub near: f64,
    pub max_range: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fov_deg: 90.0,
            horizon_frac: 0.45,
            height: 1.6,
            near: 0.5,
            max_range: 60.0,
        }
    }
}

/// How the road route through the world is laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteSpec {
    /// Back-and-forth lanes along x, evenly spaced in y, joined at the ends.
    Serpentine {
        lanes: usize,
        margin: f64,
    },
    Polyline {
        points: Vec<(f64, f64)>,
    },
}

impl Default for RouteSpec {
    fn default() -> Self {
        RouteSpec::Serpentine {
            lanes: 5,
            margin: 10.0,
        }
    }
}

/// Per-domain perturbation standing in for seasonal/weather appearance change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainShift {
    pub tag: String,
    pub seed: u64,
    /// Fraction of "other" landmarks whose label is replaced by a random palette label.
    pub label_flip_fraction: f64,
    /// Std-dev (meters) of Gaussian jitter added to landmark centers.
    pub jitter_sigma: f64,
    /// Horizon offset as a fraction of image height (positive = lower).
    pub horizon_shift: f64,
    /// Mislabeled blobs painted over each frame, mimicking segmentation errors.
    pub speckle_blobs: usize,
    /// Blob side length range in pixels at the 808x616 reference size.
    pub speckle_side: (f64, f64),
}

impl Default for DomainShift {
    fn default() -> Self {
        Self {
            tag: "base".into(),
            seed: 0,
            label_flip_fraction: 0.0,
            jitter_sigma: 0.0,
            horizon_shift: 0.0,
            speckle_blobs: 0,
            speckle_side: (12.0, 30.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub extent: (f64, f64),
    pub landmark_counts: LandmarkCounts,
    pub seed: u64,
    pub render_dims: (u32, u32),
    pub camera: CameraConfig,
    pub route: RouteSpec,
    pub road_half_width: f64,
    /// Landmarks whose footprints are fixed by the caller, placed before the random ones.
    pub fixed_landmarks: Vec<Landmark>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            extent: (100.0, 100.0),
            landmark_counts: LandmarkCounts {
                building: 20,
                tree: 30,
                pole: 10,
                traffic_sign: 10,
                other: 15,
            },
            seed: 0,
            render_dims: (808, 616),
            camera: CameraConfig::default(),
            route: RouteSpec::default(),
            road_half_width: 3.0,
            fixed_landmarks: Vec::new(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.extent;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "extent {w} x {h} must be positive"
            )));
        }
        if self.render_dims.0 < 3 || self.render_dims.1 < 3 {
            return Err(Error::InvalidConfig(
                "render dims must be at least 3x3".into(),
            ));
        }
        let cam = &self.camera;
        if !(cam.fov_deg > 0.0 && cam.fov_deg < 180.0) {
            return Err(Error::InvalidConfig(
                "field of view must lie in (0, 180)".into(),
            ));
        }
        if !(cam.near > 0.0 && cam.max_range > cam.near) {
            return Err(Error::InvalidConfig(
                "camera range must satisfy 0 < near < max_range".into(),
            ));
        }
        if let RouteSpec::Serpentine { lanes, margin } = self.route {
            if lanes == 0 || 2.0 * margin >= w {
                return Err(Error::InvalidConfig(
                    "serpentine route does not fit the extent".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::from_extent(self.extent.0, self.extent.1)
    }
}

/// Axis-aligned box landmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub kind: LandmarkKind,
    pub label: SemanticLabel,
    pub center: (f64, f64),
    /// Footprint extent along x and y.
    pub size: (f64, f64),
    pub height: f64,
}

impl Landmark {
    pub fn footprint(&self) -> Bounds {
        Bounds::new(
            self.center.0 - self.size.0 / 2.0,
            self.center.1 - self.size.1 / 2.0,
            self.center.0 + self.size.0 / 2.0,
            self.center.1 + self.size.1 / 2.0,
        )
    }
}

/// Polyline route parameterized by arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub points: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl Route {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidConfig(
                "route needs at least two points".into(),
            ));
        }
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            if d <= 0.0 {
                return Err(Error::InvalidConfig(
                    "route has a zero-length segment".into(),
                ));
            }
            cumulative.push(cumulative.last().unwrap() + d);
        }
        Ok(Self { points, cumulative })
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Pose at arc length `s`, clamped to the route; heading follows the current segment.
    pub fn pose_at(&self, s: f64) -> Pose {
        let s = s.clamp(0.0, self.length());
        let seg = match self.cumulative.iter().position(|&c| c > s) {
            Some(i) => i - 1,
            None => self.points.len() - 2,
        };
        let (a, b) = (self.points[seg], self.points[seg + 1]);
        let len = self.cumulative[seg + 1] - self.cumulative[seg];
        let t = (s - self.cumulative[seg]) / len;
        Pose::new(
            a.0 + t * (b.0 - a.0),
            a.1 + t * (b.1 - a.1),
            (b.1 - a.1).atan2(b.0 - a.0),
        )
    }

    pub fn segments(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub landmarks: Vec<Landmark>,
    pub route: Route,
    pub domain: DomainShift,
}

impl World {
    pub fn bounds(&self) -> Bounds {
        self.config.bounds()
    }

    /// Returns a copy of this world perturbed for another acquisition domain.
    pub fn with_domain(&self, shift: &DomainShift) -> World {
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.config.seed ^ shift.seed.rotate_left(32) ^ 0x5eed);
        let bounds = self.bounds();
        let mut landmarks = self.landmarks.clone();
        let jitter =
            (shift.jitter_sigma > 0.0).then(|| Normal::new(0.0, shift.jitter_sigma).unwrap());
        for lm in &mut landmarks {
            if let Some(n) = &jitter {
                let (x, y) = (
                    lm.center.0 + n.sample(&mut rng),
                    lm.center.1 + n.sample(&mut rng),
                );
                lm.center = bounds.clamp(x, y);
            }
            if lm.kind == LandmarkKind::Other && rng.gen::<f64>() < shift.label_flip_fraction {
                let mut label = lm.label;
                while label == lm.label {
                    label = SemanticLabel(rng.gen_range(0..SemanticLabel::COUNT as u8));
                }
                lm.label = label;
            }
        }
        World {
            config: self.config.clone(),
            landmarks,
            route: self.route.clone(),
            domain: shift.clone(),
        }
    }
}

fn build_route(config: &WorldConfig) -> Result<Route> {
    match &config.route {
        RouteSpec::Polyline { points } => Route::new(points.clone()),
        RouteSpec::Serpentine { lanes, margin } => {
            let (w, h) = config.extent;
            let mut points = Vec::with_capacity(lanes * 2);
            for lane in 0..*lanes {
                let y = h * (lane as f64 + 0.5) / *lanes as f64;
                let (x0, x1) = if lane % 2 == 0 {
                    (*margin, w - margin)
                } else {
                    (w - margin, *margin)
                };
                points.push((x0, y));
                points.push((x1, y));
            }
            Route::new(points)
        }
    }
}

fn overlaps(a: &Bounds, b: &Bounds, gap: f64) -> bool {
    a.min_x < b.max_x + gap
        && b.min_x < a.max_x + gap
        && a.min_y < b.max_y + gap
        && b.min_y < a.max_y + gap
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((a.0 + t * dx - p.0).powi(2) + (a.1 + t * dy - p.1).powi(2)).sqrt()
}

fn point_box_distance(p: (f64, f64), b: &Bounds) -> f64 {
    let dx = (b.min_x - p.0).max(0.0).max(p.0 - b.max_x);
    let dy = (b.min_y - p.1).max(0.0).max(p.1 - b.max_y);
    (dx * dx + dy * dy).sqrt()
}

fn segment_hits_box(a: (f64, f64), b: (f64, f64), r: &Bounds) -> bool {
    // Liang-Barsky clip of the segment against the box.
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [
        (-dx, a.0 - r.min_x),
        (dx, r.max_x - a.0),
        (-dy, a.1 - r.min_y),
        (dy, r.max_y - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    t0 <= t1
}

/// Exact distance between a route segment and a box footprint.
pub(crate) fn segment_box_distance(a: (f64, f64), b: (f64, f64), r: &Bounds) -> f64 {
    if segment_hits_box(a, b, r) {
        return 0.0;
    }
    let corners = [
        (r.min_x, r.min_y),
        (r.max_x, r.min_y),
        (r.min_x, r.max_y),
        (r.max_x, r.max_y),
    ];
    let from_corners = corners
        .iter()
        .map(|&c| point_segment_distance(c, a, b))
        .fold(f64::INFINITY, f64::min);
    from_corners
        .min(point_box_distance(a, r))
        .min(point_box_distance(b, r))
}

const OTHER_LABELS: [SemanticLabel; 8] = [
    SemanticLabel::CAR,
    SemanticLabel::TRUCK,
    SemanticLabel::BUS,
    SemanticLabel::PERSON,
    SemanticLabel::BICYCLE,
    SemanticLabel::MOTORCYCLE,
    SemanticLabel::FENCE,
    SemanticLabel::WALL,
];

fn sample_shape(kind: LandmarkKind, rng: &mut ChaCha8Rng) -> (SemanticLabel, (f64, f64), f64) {
    match kind {
        LandmarkKind::Building => (
            SemanticLabel::BUILDING,
            (rng.gen_range(6.0..14.0), rng.gen_range(6.0..14.0)),
            rng.gen_range(6.0..20.0),
        ),
        LandmarkKind::Tree => {
            let s = rng.gen_range(2.0..4.5);
            (SemanticLabel::VEGETATION, (s, s), rng.gen_range(4.0..9.0))
        }
        LandmarkKind::Pole => (SemanticLabel::POLE, (0.3, 0.3), rng.gen_range(5.0..8.0)),
        LandmarkKind::TrafficSign => {
            let label = if rng.gen_bool(0.5) {
                SemanticLabel::TRAFFIC_SIGN
            } else {
                SemanticLabel::TRAFFIC_LIGHT
            };
            (label, (0.8, 0.8), rng.gen_range(2.5..3.5))
        }
        LandmarkKind::Other => {
            let label = OTHER_LABELS[rng.gen_range(0..OTHER_LABELS.len())];
            let (a, b) = (rng.gen_range(1.5..2.5), rng.gen_range(3.0..5.5));
            let size = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            (label, size, rng.gen_range(1.2..2.2))
        }
    }
}

/// Builds a world from its config; a pure function of the config (and hence of the seed).
pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let route = build_route(config)?;
    let bounds = config.bounds();
    let clearance = config.road_half_width + 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut landmarks: Vec<Landmark> = config.fixed_landmarks.clone();

    let counts = &config.landmark_counts;
    let requested = landmarks.len() + counts.total();
    let plan = [
        (LandmarkKind::Building, counts.building),
        (LandmarkKind::Tree, counts.tree),
        (LandmarkKind::Other, counts.other),
        (LandmarkKind::TrafficSign, counts.traffic_sign),
        (LandmarkKind::Pole, counts.pole),
    ];
    for (kind, count) in plan {
        for _ in 0..count {
            let mut placed = false;
            for _ in 0..PLACEMENT_RETRIES {
                let (label, size, height) = sample_shape(kind, &mut rng);
                if size.0 >= bounds.width() || size.1 >= bounds.height() {
                    continue;
                }
                let center = (
                    rng.gen_range(size.0 / 2.0..bounds.width() - size.0 / 2.0),
                    rng.gen_range(size.1 / 2.0..bounds.height() - size.1 / 2.0),
                );
                let candidate = Landmark {
                    kind,
                    label,
                    center,
                    size,
                    height,
                };
                let fp = candidate.footprint();
                if landmarks
                    .iter()
                    .any(|o| overlaps(&o.footprint(), &fp, LANDMARK_GAP))
                {
                    continue;
                }
                if route
                    .segments()
                    .any(|(a, b)| segment_box_distance(a, b, &fp) < clearance)
                {
                    continue;
                }
                landmarks.push(candidate);
                placed = true;
                break;
            }
            if !placed {
                return Err(Error::WorldTooCrowded {
                    placed: landmarks.len(),
                    requested,
                });
            }
        }
    }
    Ok(World {
        config: config.clone(),
        landmarks,
        route,
        domain: DomainShift::default(),
    })
}

/// Heading change between two poses, wrapped.
pub fn heading_delta(from: &Pose, to: &Pose) -> f64 {
    wrap_angle(to.heading - from.heading)
}
