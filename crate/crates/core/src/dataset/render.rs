//! Flat "semantic billboard" projection of a world into a label map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::Pose;
use super::labels::SemanticLabel;
use super::world::World;
use super::LabelMap;
use crate::descriptor::REFERENCE_DIMS;
use crate::error::{Error, Result};

/// Pixel rectangle `[u0, u1) x [v0, v1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PixelRect {
    u0: usize,
    u1: usize,
    v0: usize,
    v1: usize,
}

fn to_pixel_range(lo: f64, hi: f64, limit: usize) -> Option<(usize, usize)> {
    let lo = lo.round().max(0.0);
    let hi = hi.round().min(limit as f64);
    (hi > lo).then_some((lo as usize, hi as usize))
}

/// Renders the label map seen from `pose`.
///
/// Rows above the horizon are sky and rows below are road. Every landmark with
/// its center in front of the camera becomes an axis-aligned rectangle whose
/// size scales with the inverse of its forward distance; rectangles are painted
/// far-to-near so nearer landmarks occlude farther ones.
pub fn render_label_map(world: &World, pose: &Pose) -> Result<LabelMap> {
    if !world.bounds().contains(pose.x, pose.y) {
        return Err(Error::PoseOutOfBounds {
            x: pose.x,
            y: pose.y,
        });
    }
    let (width, height) = world.config.render_dims;
    let (w, h) = (width as usize, height as usize);
    let cam = &world.config.camera;
    let focal = (w as f64 / 2.0) / (cam.fov_deg.to_radians() / 2.0).tan();
    let cx = w as f64 / 2.0;
    let horizon = (cam.horizon_frac + world.domain.horizon_shift) * h as f64;
    let horizon_row = (horizon.round().max(0.0) as usize).min(h);

    let mut labels = vec![SemanticLabel::ROAD.0; w * h];
    labels[..horizon_row * w].fill(SemanticLabel::SKY.0);

    let (sin_h, cos_h) = pose.heading.sin_cos();
    let mut visible: Vec<(f64, usize, PixelRect)> = Vec::new();
    for (idx, lm) in world.landmarks.iter().enumerate() {
        let (dx, dy) = (lm.center.0 - pose.x, lm.center.1 - pose.y);
        let forward = dx * cos_h + dy * sin_h;
        let lateral = -dx * sin_h + dy * cos_h;
        if forward <= cam.near || forward > cam.max_range {
            continue;
        }
        let half_width = (lm.size.0 * sin_h.abs() + lm.size.1 * cos_h.abs()) / 2.0;
        let scale = focal / forward;
        let u_center = cx - lateral * scale;
        let cols = to_pixel_range(
            u_center - half_width * scale,
            u_center + half_width * scale,
            w,
        );
        let rows = to_pixel_range(
            horizon - (lm.height - cam.height) * scale,
            horizon + cam.height * scale,
            h,
        );
        if let (Some((u0, u1)), Some((v0, v1))) = (cols, rows) {
            visible.push((forward, idx, PixelRect { u0, u1, v0, v1 }));
        }
    }
    // Painter's order: farthest first, index breaks ties.
    visible.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, idx, r) in visible {
        let label = world.landmarks[idx].label.0;
        for row in r.v0..r.v1 {
            labels[row * w + r.u0..row * w + r.u1].fill(label);
        }
    }
    paint_speckle(world, pose, w, h, &mut labels);
    LabelMap::new(width, height, labels)
}

/// Seed derived from the world, the domain and the exact pose, so a frame
/// always gets the same blobs.
fn speckle_seed(world: &World, pose: &Pose) -> u64 {
    let mut h = world.config.seed ^ world.domain.seed.rotate_left(17);
    for v in [pose.x, pose.y, pose.heading] {
        h = (h ^ v.to_bits()).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        h ^= h >> 29;
    }
    h
}

fn paint_speckle(world: &World, pose: &Pose, w: usize, h: usize, labels: &mut [u8]) {
    let d = &world.domain;
    if d.speckle_blobs == 0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(speckle_seed(world, pose));
    let reference = REFERENCE_DIMS.0 as f64 * REFERENCE_DIMS.1 as f64;
    let scale = ((w * h) as f64 / reference).sqrt();
    let (lo, hi) = (d.speckle_side.0 * scale, d.speckle_side.1 * scale);
    for _ in 0..d.speckle_blobs {
        let bw = (if hi > lo { rng.gen_range(lo..hi) } else { lo })
            .round()
            .max(1.0) as usize;
        let bh = (if hi > lo { rng.gen_range(lo..hi) } else { lo })
            .round()
            .max(1.0) as usize;
        let u0 = rng.gen_range(0..w.saturating_sub(bw).max(1));
        let v0 = rng.gen_range(0..h.saturating_sub(bh).max(1));
        let label = rng.gen_range(0..SemanticLabel::COUNT as u8);
        for row in v0..(v0 + bh).min(h) {
            labels[row * w + u0..row * w + (u0 + bw).min(w)].fill(label);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::world::{
        generate_world, Landmark, LandmarkCounts, LandmarkKind, RouteSpec, WorldConfig,
    };
    use crate::scene_graph::extract_regions;

    fn empty_world() -> World {
        generate_world(&WorldConfig {
            landmark_counts: LandmarkCounts::default(),
            ..Default::default()
        })
        .unwrap()
    }

    fn world_with(landmarks: Vec<Landmark>) -> World {
        generate_world(&WorldConfig {
            landmark_counts: LandmarkCounts::default(),
            route: RouteSpec::Polyline {
                points: vec![(1.0, 50.0), (99.0, 50.0)],
            },
            fixed_landmarks: landmarks,
            ..Default::default()
        })
        .unwrap()
    }

    fn building(x: f64, y: f64, w: f64, height: f64) -> Landmark {
        Landmark {
            kind: LandmarkKind::Building,
            label: SemanticLabel::BUILDING,
            center: (x, y),
            size: (2.0, w),
            height,
        }
    }

    fn count(map: &LabelMap, label: SemanticLabel) -> usize {
        map.labels().iter().filter(|&&l| l == label.0).count()
    }

    #[test]
    fn empty_view_has_sky_and_road_only() {
        let world = empty_world();
        let map = render_label_map(&world, &Pose::new(50.0, 50.0, 0.3)).unwrap();
        let regions = extract_regions(&map, 1);
        assert_eq!(regions.regions.len(), 2);
        assert_eq!(
            count(&map, SemanticLabel::SKY) + count(&map, SemanticLabel::ROAD),
            map.labels().len()
        );
    }

    #[test]
    fn nearer_landmark_is_larger() {
        let near = world_with(vec![building(20.0, 50.0, 4.0, 8.0)]);
        let far = world_with(vec![building(30.0, 50.0, 4.0, 8.0)]);
        let pose = Pose::new(10.0, 50.0, 0.0);
        let a = count(
            &render_label_map(&near, &pose).unwrap(),
            SemanticLabel::BUILDING,
        );
        let b = count(
            &render_label_map(&far, &pose).unwrap(),
            SemanticLabel::BUILDING,
        );
        assert!(a > b && b > 0, "{a} vs {b}");
    }

    #[test]
    fn occluded_landmark_invisible() {
        let mut tree = building(40.0, 50.0, 3.0, 6.0);
        tree.kind = LandmarkKind::Tree;
        tree.label = SemanticLabel::VEGETATION;
        let world = world_with(vec![building(20.0, 50.0, 8.0, 6.0), tree]);
        let map = render_label_map(&world, &Pose::new(10.0, 50.0, 0.0)).unwrap();
        assert!(count(&map, SemanticLabel::BUILDING) > 0);
        assert_eq!(count(&map, SemanticLabel::VEGETATION), 0);
        // Without the occluder the tree shows up.
        let alone = world_with(vec![world.landmarks[1].clone()]);
        let map = render_label_map(&alone, &Pose::new(10.0, 50.0, 0.0)).unwrap();
        assert!(count(&map, SemanticLabel::VEGETATION) > 0);
    }

    #[test]
    fn behind_camera_not_drawn() {
        let world = world_with(vec![building(20.0, 50.0, 4.0, 8.0)]);
        let map = render_label_map(&world, &Pose::new(30.0, 50.0, 0.0)).unwrap();
        assert_eq!(count(&map, SemanticLabel::BUILDING), 0);
    }

    #[test]
    fn pose_outside_is_error() {
        let world = empty_world();
        assert!(render_label_map(&world, &Pose::new(-1.0, 5.0, 0.0)).is_err());
    }

    #[test]
    fn renders_are_pure_and_void_free() {
        let world = generate_world(&WorldConfig {
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        for i in 0..20 {
            let pose = world.route.pose_at(i as f64 * 23.0);
            let a = render_label_map(&world, &pose).unwrap();
            assert_eq!(a, render_label_map(&world, &pose).unwrap());
            assert_eq!(count(&a, SemanticLabel::VOID), 0);
            let mut distinct: Vec<u8> = a.labels().to_vec();
            distinct.sort_unstable();
            distinct.dedup();
            assert!(distinct.len() >= 2);
        }
    }
}
