//! Synthetic localization benchmarks: a multi-domain city-block world with
//! training, held-out and query frames, and a corridor world for planning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    generate_world, render_label_map, ClassId, DomainShift, Landmark, LandmarkCounts, LandmarkKind,
    PlaceGrid, Pose, RouteSpec, SemanticLabel, World, WorldConfig,
};
use crate::error::{Error, Result};
use crate::scene_graph::{
    extract_regions, graph_from_regions, merge_small_regions, scale_area, RegionMap, SceneGraph,
    SceneGraphParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub world: WorldConfig,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Appearance of the frames the classifier is trained on.
    pub train_domain: DomainShift,
    /// Appearance of the frames the non-parametric baselines index.
    pub map_domain: DomainShift,
    /// Appearance of the query sequences.
    pub query_domain: DomainShift,
    /// Frames evenly spaced along the route.
    pub train_frames: usize,
    /// Frames halfway between consecutive training frames, in the training domain.
    pub test_frames: usize,
    pub query_sequences: usize,
    pub sequence_len: usize,
    /// Route distance between consecutive query frames (meters).
    pub sequence_step: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let base = DomainShift {
            speckle_blobs: 5,
            ..Default::default()
        };
        Self {
            world: WorldConfig::default(),
            grid_rows: 5,
            grid_cols: 5,
            train_domain: base.clone(),
            map_domain: base.clone(),
            query_domain: DomainShift {
                tag: "shifted".into(),
                seed: 1,
                label_flip_fraction: 0.3,
                jitter_sigma: 0.5,
                horizon_shift: 0.02,
                ..base
            },
            train_frames: 200,
            test_frames: 200,
            query_sequences: 10,
            sequence_len: 10,
            sequence_step: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub pose: Pose,
    pub class: ClassId,
}

/// Worlds and frame poses of one benchmark instance. Frames are rendered on
/// demand so several graph variants can share a single rendering pass.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub grid: PlaceGrid,
    pub train_world: World,
    pub map_world: World,
    pub query_world: World,
    pub train: Vec<FrameSpec>,
    pub test: Vec<FrameSpec>,
    pub queries: Vec<Vec<FrameSpec>>,
}

fn frame(world: &World, grid: &PlaceGrid, s: f64) -> Result<FrameSpec> {
    let pose = world.route.pose_at(s);
    Ok(FrameSpec {
        pose,
        class: grid.class_of(&pose)?,
    })
}

impl Benchmark {
    pub fn build(config: &BenchmarkConfig) -> Result<Self> {
        if config.sequence_len == 0 || config.train_frames == 0 {
            return Err(Error::InvalidConfig(
                "benchmark needs training frames and non-empty sequences".into(),
            ));
        }
        let base = generate_world(&config.world)?;
        let grid = PlaceGrid::new(config.world.bounds(), config.grid_rows, config.grid_cols)?;
        let len = base.route.length();
        let spacing = len / config.train_frames as f64;
        let train = (0..config.train_frames)
            .map(|i| frame(&base, &grid, i as f64 * spacing))
            .collect::<Result<Vec<_>>>()?;
        let test_spacing = len / config.test_frames.max(1) as f64;
        let test = (0..config.test_frames)
            .map(|i| frame(&base, &grid, (i as f64 + 0.5) * test_spacing))
            .collect::<Result<Vec<_>>>()?;
        let span = config.sequence_step * (config.sequence_len - 1) as f64;
        if span >= len {
            return Err(Error::InvalidConfig(format!(
                "query sequences span {span} m but the route is {len} m"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.world.seed ^ 0x5e_ed0f_0ae7);
        let queries = (0..config.query_sequences)
            .map(|_| {
                let start = rng.gen_range(0.0..len - span);
                (0..config.sequence_len)
                    .map(|t| frame(&base, &grid, start + t as f64 * config.sequence_step))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            train_world: base.with_domain(&config.train_domain),
            map_world: base.with_domain(&config.map_domain),
            query_world: base.with_domain(&config.query_domain),
            train,
            test,
            queries,
        })
    }
}

/// Renders each frame once and builds one graph per parameter set:
/// `result[p][f]` is frame `f` under `params[p]`.
pub fn frame_graphs(
    world: &World,
    frames: &[FrameSpec],
    params: &[SceneGraphParams],
) -> Result<Vec<Vec<SceneGraph>>> {
    let mut out: Vec<Vec<SceneGraph>> = params
        .iter()
        .map(|_| Vec::with_capacity(frames.len()))
        .collect();
    for f in frames {
        let map = render_label_map(world, &f.pose)?;
        let mut extracted: Vec<(u64, RegionMap)> = Vec::new();
        for (p, graphs) in params.iter().zip(&mut out) {
            let noise = scale_area(p.noise_area, map.dims());
            let regions = match extracted.iter().find(|(n, _)| *n == noise) {
                Some((_, r)) => r,
                None => {
                    extracted.push((noise, extract_regions(&map, noise)));
                    &extracted.last().expect("just pushed").1
                }
            };
            let graph = if p.merging {
                graph_from_regions(
                    &merge_small_regions(regions, p.min_area, p.merge_strategy),
                    p.mode,
                )?
            } else {
                graph_from_regions(regions, p.mode)?
            };
            graphs.push(graph);
        }
    }
    Ok(out)
}

/// A straight road with a single building beside it. Only a short stretch of
/// the route sees the building, so the place is ambiguous everywhere else.
#[derive(Debug, Clone)]
pub struct Corridor {
    pub world: World,
    pub grid: PlaceGrid,
    /// Interval of route distances episodes start from.
    pub start_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorridorConfig {
    pub length: f64,
    pub width: f64,
    pub cell: f64,
    /// Building center along the road.
    pub landmark_x: f64,
    pub landmark_size: f64,
    pub max_range: f64,
    pub render_dims: (u32, u32),
    pub start_range: (f64, f64),
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self {
            length: 130.0,
            width: 20.0,
            cell: 10.0,
            landmark_x: 75.0,
            landmark_size: 6.0,
            max_range: 25.0,
            render_dims: (202, 154),
            start_range: (0.0, 60.0),
        }
    }
}

pub fn corridor(config: &CorridorConfig) -> Result<Corridor> {
    let road_y = 6.0;
    let world_config = WorldConfig {
        extent: (config.length, config.width),
        landmark_counts: LandmarkCounts::default(),
        seed: 0,
        render_dims: config.render_dims,
        camera: crate::dataset::CameraConfig {
            max_range: config.max_range,
            ..Default::default()
        },
        route: RouteSpec::Polyline {
            points: vec![(2.0, road_y), (config.length - 32.0, road_y)],
        },
        road_half_width: 3.0,
        fixed_landmarks: vec![Landmark {
            kind: LandmarkKind::Building,
            label: SemanticLabel::BUILDING,
            center: (config.landmark_x, config.width - config.landmark_size),
            size: (config.landmark_size, config.landmark_size),
            height: 12.0,
        }],
    };
    let world = generate_world(&world_config)?;
    let cols = (config.length / config.cell).round() as usize;
    let grid = PlaceGrid::new(world_config.bounds(), 1, cols)?;
    Ok(Corridor {
        world,
        grid,
        start_range: config.start_range,
    })
}

/// Route-ordered frames of the corridor for training a classifier.
pub fn corridor_frames(c: &Corridor, spacing: f64) -> Result<Vec<FrameSpec>> {
    let len = c.world.route.length();
    let n = (len / spacing).floor() as usize + 1;
    (0..n)
        .map(|i| frame(&c.world, &c.grid, i as f64 * spacing))
        .collect()
}
