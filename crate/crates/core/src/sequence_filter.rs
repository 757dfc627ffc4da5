//! Particle-filter fusion of per-viewpoint class predictions.
//!
//! Each particle holds a pose hypothesis. A perception arrives as a
//! reciprocal-rank vector over place classes and a particle's weight grows by
//! the entry of the class its pose falls in.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{heading_delta, wrap_angle, Bounds, ClassId, PlaceGrid, Pose};
use crate::error::{Error, Result};
use crate::gcn::{argmax, gcn_forward, GcnParams, Pdv};
use crate::scene_graph::SceneGraph;

/// Class-specific reciprocal ranks: entry `i` is `1 / rank(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rrv(pub Vec<f64>);

impl Rrv {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Ranks classes by descending score (lower index first on ties) and returns `1 / rank`.
pub fn reciprocal_rank_vector(scores: &[f64]) -> Rrv {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut rrv = vec![0.0; scores.len()];
    for (rank, &class) in order.iter().enumerate() {
        rrv[class] = 1.0 / (rank + 1) as f64;
    }
    Rrv(rrv)
}

/// Anything that maps a scene graph to class probabilities.
pub trait PlaceClassifier {
    fn num_classes(&self) -> usize;
    fn pdv(&self, graph: &SceneGraph) -> Result<Pdv>;
}

impl PlaceClassifier for GcnParams {
    fn num_classes(&self) -> usize {
        self.dims.classes
    }

    fn pdv(&self, graph: &SceneGraph) -> Result<Pdv> {
        gcn_forward(graph, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// `w += rrv[class]`
    #[default]
    AdditiveRank,
    /// `w *= pdv[class]`
    MultiplicativePdv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionNoise {
    /// Translation std-dev per meter traveled.
    pub sigma_trans: f64,
    /// Heading std-dev per step (radians).
    pub sigma_head: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            sigma_trans: 0.1,
            sigma_head: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfConfig {
    pub particles: usize,
    pub noise: MotionNoise,
    pub mode: UpdateMode,
    /// Resample when ESS drops below this fraction of N.
    pub resample_fraction: f64,
    pub seed: u64,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            particles: 1000,
            noise: MotionNoise::default(),
            mode: UpdateMode::AdditiveRank,
            resample_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pose: Pose,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    bounds: Bounds,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    pub ess: f64,
    pub resampled: bool,
    pub reinitialized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub probs: Vec<f64>,
    pub top1: ClassId,
}

impl Belief {
    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }
}

fn uniform_pose(bounds: &Bounds, rng: &mut ChaCha8Rng) -> Pose {
    use std::f64::consts::PI;
    Pose {
        x: rng.gen_range(bounds.min_x..bounds.max_x),
        y: rng.gen_range(bounds.min_y..bounds.max_y),
        heading: rng.gen_range(-PI..PI),
    }
}

/// `n` poses uniform over the grid's workspace with equal weights.
pub fn pf_init(n: usize, grid: &PlaceGrid, seed: u64) -> Result<ParticleSet> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "particle count must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = grid.bounds;
    let w = 1.0 / n as f64;
    let particles = (0..n)
        .map(|_| Particle {
            pose: uniform_pose(&bounds, &mut rng),
            weight: w,
        })
        .collect();
    Ok(ParticleSet {
        particles,
        bounds,
        rng,
    })
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn ess(&self) -> f64 {
        1.0 / self
            .particles
            .iter()
            .map(|p| p.weight * p.weight)
            .sum::<f64>()
    }

    /// Advances every particle `forward` meters along its heading, then turns it by `turn`.
    pub fn motion_update(&mut self, forward: f64, turn: f64, noise: &MotionNoise) -> Result<()> {
        if !(forward >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "forward motion {forward} must be non-negative"
            )));
        }
        let trans = Normal::new(0.0, noise.sigma_trans * forward)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let head =
            Normal::new(0.0, noise.sigma_head).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let noisy = noise.sigma_trans > 0.0 || noise.sigma_head > 0.0;
        for p in &mut self.particles {
            let (dist, dh) = if noisy {
                (
                    forward + trans.sample(&mut self.rng),
                    head.sample(&mut self.rng),
                )
            } else {
                (forward, 0.0)
            };
            let (s, c) = p.pose.heading.sin_cos();
            let (x, y) = self.bounds.clamp(p.pose.x + dist * c, p.pose.y + dist * s);
            p.pose = Pose {
                x,
                y,
                heading: wrap_angle(p.pose.heading + turn + dh),
            };
        }
        Ok(())
    }

    /// Reweights without resampling; weights are renormalized.
    pub fn reweight(
        &mut self,
        grid: &PlaceGrid,
        rrv: &Rrv,
        pdv: &Pdv,
        mode: UpdateMode,
    ) -> Result<bool> {
        let classes = grid.num_classes();
        if rrv.0.len() != classes || pdv.len() != classes {
            return Err(Error::LengthMismatch(rrv.0.len().max(pdv.len()), classes));
        }
        for p in &mut self.particles {
            let c = grid.class_of(&p.pose)?;
            match mode {
                UpdateMode::AdditiveRank => p.weight += rrv.0[c],
                UpdateMode::MultiplicativePdv => p.weight *= pdv.0[c],
            }
        }
        let total = self.total_weight();
        if !(total > 0.0) || !total.is_finite() {
            log::warn!("all particle weights vanished; reinitializing uniformly");
            let n = self.particles.len();
            for i in 0..n {
                let pose = uniform_pose(&self.bounds, &mut self.rng);
                self.particles[i] = Particle {
                    pose,
                    weight: 1.0 / n as f64,
                };
            }
            return Ok(true);
        }
        for p in &mut self.particles {
            p.weight /= total;
        }
        Ok(false)
    }

    /// Systematic resampling; afterwards all weights are `1 / N`.
    pub fn resample(&mut self) {
        let n = self.particles.len();
        let step = 1.0 / n as f64;
        let mut u = self.rng.gen_range(0.0..step);
        let mut cumulative = self.particles[0].weight;
        let mut i = 0;
        let mut next = Vec::with_capacity(n);
        for _ in 0..n {
            while u > cumulative && i + 1 < n {
                i += 1;
                cumulative += self.particles[i].weight;
            }
            next.push(Particle {
                pose: self.particles[i].pose,
                weight: step,
            });
            u += step;
        }
        self.particles = next;
    }

    pub fn resample_if_needed(&mut self, fraction: f64) -> (f64, bool) {
        let ess = self.ess();
        if ess < fraction * self.particles.len() as f64 {
            self.resample();
            (ess, true)
        } else {
            (ess, false)
        }
    }

    /// Reweight, then resample if ESS fell below `fraction * N`.
    pub fn measurement_update(
        &mut self,
        grid: &PlaceGrid,
        rrv: &Rrv,
        pdv: &Pdv,
        mode: UpdateMode,
        fraction: f64,
    ) -> Result<UpdateInfo> {
        let reinitialized = self.reweight(grid, rrv, pdv, mode)?;
        let (ess, resampled) = self.resample_if_needed(fraction);
        Ok(UpdateInfo {
            ess,
            resampled,
            reinitialized,
        })
    }

    /// Total particle weight per class; argmax with lowest index on ties.
    pub fn estimate(&self, grid: &PlaceGrid) -> Result<Belief> {
        let mut probs = vec![0.0; grid.num_classes()];
        for p in &self.particles {
            probs[grid.class_of(&p.pose)?] += p.weight;
        }
        let top1 = argmax(&probs);
        Ok(Belief { probs, top1 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub frame: usize,
    pub pdv: Pdv,
    pub single_view_top1: ClassId,
    pub belief: Belief,
    pub truth: ClassId,
    pub ess: f64,
    pub resampled: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

pub const TRACE_CSV_HEADER: &str = "frame,top1,truth,belief_entropy,ess";

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.3}",
                s.frame,
                s.belief.top1,
                s.truth,
                s.belief.entropy(),
                s.ess
            );
        }
        out
    }

    pub fn final_step(&self) -> Option<&TraceStep> {
        self.steps.last()
    }
}

/// Odometry between consecutive poses: forward component along the earlier heading, and the heading change.
pub fn odometry(from: &Pose, to: &Pose) -> (f64, f64) {
    let (s, c) = from.heading.sin_cos();
    let forward = (to.x - from.x) * c + (to.y - from.y) * s;
    (forward.max(0.0), heading_delta(from, to))
}

/// Runs the filter over per-frame class probabilities observed at `poses`.
pub fn localize_with_pdvs(
    poses: &[Pose],
    pdvs: &[Pdv],
    grid: &PlaceGrid,
    config: &PfConfig,
) -> Result<Trace> {
    if poses.is_empty() {
        return Err(Error::EmptySequence);
    }
    if poses.len() != pdvs.len() {
        return Err(Error::LengthMismatch(poses.len(), pdvs.len()));
    }
    let mut set = pf_init(config.particles, grid, config.seed)?;
    let mut steps = Vec::with_capacity(poses.len());
    for (t, (pose, pdv)) in poses.iter().zip(pdvs).enumerate() {
        if t > 0 {
            let (forward, turn) = odometry(&poses[t - 1], pose);
            set.motion_update(forward, turn, &config.noise)?;
        }
        let rrv = reciprocal_rank_vector(pdv.probs());
        set.reweight(grid, &rrv, pdv, config.mode)?;
        let belief = set.estimate(grid)?;
        let (ess, resampled) = set.resample_if_needed(config.resample_fraction);
        steps.push(TraceStep {
            frame: t,
            pdv: pdv.clone(),
            single_view_top1: pdv.top1(),
            belief,
            truth: grid.class_of(pose)?,
            ess,
            resampled,
        });
    }
    Ok(Trace { steps })
}

/// Classifies every frame, then fuses the predictions along the sequence.
pub fn localize_sequence(
    frames: &[(Pose, SceneGraph)],
    classifier: &dyn PlaceClassifier,
    grid: &PlaceGrid,
    config: &PfConfig,
) -> Result<Trace> {
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    let pdvs = frames
        .iter()
        .map(|(_, g)| classifier.pdv(g))
        .collect::<Result<Vec<_>>>()?;
    let poses: Vec<Pose> = frames.iter().map(|(p, _)| *p).collect();
    localize_with_pdvs(&poses, &pdvs, grid, config)
}
