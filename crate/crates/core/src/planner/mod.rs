//! Viewpoint planning: choose forward step lengths along a route so that the
//! particle filter's final belief ranks the true place class as high as possible.
//! Q-values come from nearest-neighbor averaging over stored experience.

mod store;

pub use store::{nnql_update, select_action, QStore, Transition, QSTORE_SCHEMA_VERSION};

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{heading_delta, render_label_map, ClassId, PlaceGrid, World};
use crate::error::{Error, Result};
use crate::gcn::Pdv;
use crate::scene_graph::{build_scene_graph, SceneGraphParams};
use crate::sequence_filter::{
    pf_init, reciprocal_rank_vector, Belief, ParticleSet, PfConfig, PlaceClassifier,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSource {
    /// Reciprocal ranks of the fused particle-filter belief.
    #[default]
    Belief,
    /// Reciprocal ranks of the latest single-view prediction.
    Pdv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdpConfig {
    /// Forward step lengths in meters.
    pub actions: Vec<f64>,
    pub horizon: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub k: usize,
    pub capacity: usize,
    pub state_source: StateSource,
}

impl Default for MdpConfig {
    fn default() -> Self {
        Self {
            actions: (1..=10).map(f64::from).collect(),
            horizon: 10,
            gamma: 0.9,
            alpha: 0.1,
            epsilon_start: 0.5,
            epsilon_end: 0.05,
            k: 4,
            capacity: 50_000,
            state_source: StateSource::Belief,
        }
    }
}

impl MdpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig("gamma must lie in (0, 1)".into()));
        }
        if self.horizon == 0 || self.actions.is_empty() {
            return Err(Error::InvalidConfig(
                "horizon and action set must be non-empty".into(),
            ));
        }
        if self.actions.iter().any(|&a| !(a >= 0.0)) {
            return Err(Error::InvalidConfig("actions must be non-negative".into()));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over `episodes`.
    pub fn epsilon(&self, episode: usize, episodes: usize) -> f64 {
        if episodes <= 1 {
            return self.epsilon_start;
        }
        let t = episode as f64 / (episodes - 1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }

    pub fn new_store(&self) -> Result<QStore> {
        QStore::new(self.actions.len(), self.k, self.capacity)
    }
}

/// Reciprocal rank of `truth` under the belief; lies in `[1/C, 1]`.
pub fn reciprocal_rank_reward(belief: &Belief, truth: ClassId) -> f64 {
    reciprocal_rank_vector(&belief.probs).0[truth]
}

/// World, route and perception stack the agent acts in.
pub struct PlanningEnv<'a> {
    pub world: &'a World,
    pub grid: PlaceGrid,
    pub classifier: &'a dyn PlaceClassifier,
    pub graph_params: SceneGraphParams,
    pub pf: PfConfig,
    /// Interval of route arc length episode starts are drawn from.
    pub start_range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Epsilon-greedy over the store.
    Learned { epsilon: f64 },
    /// Always the given action index.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Route arc length at each viewpoint (horizon + 1 entries).
    pub positions: Vec<f64>,
    pub actions: Vec<usize>,
    pub final_reward: f64,
    /// The route ended before the commanded travel was complete.
    pub clamped: bool,
}

impl PlanningEnv<'_> {
    fn observe(
        &self,
        set: &mut ParticleSet,
        s: f64,
        source: StateSource,
    ) -> Result<(Belief, Vec<f64>)> {
        let pose = self.world.route.pose_at(s);
        let map = render_label_map(self.world, &pose)?;
        let classes = self.grid.num_classes();
        let pdv = match build_scene_graph(&map, &self.graph_params) {
            Ok(g) => self.classifier.pdv(&g)?,
            Err(Error::EmptyGraph) => Pdv(vec![1.0 / classes as f64; classes]),
            Err(e) => return Err(e),
        };
        let rrv = reciprocal_rank_vector(pdv.probs());
        set.reweight(&self.grid, &rrv, &pdv, self.pf.mode)?;
        let belief = set.estimate(&self.grid)?;
        set.resample_if_needed(self.pf.resample_fraction);
        let state = match source {
            StateSource::Belief => reciprocal_rank_vector(&belief.probs).0,
            StateSource::Pdv => rrv.0,
        };
        Ok((belief, state))
    }
}

/// One episode of `config.horizon` actions. In train mode every transition
/// updates the store; only the last one carries a (terminal) reward.
pub fn run_episode(
    env: &PlanningEnv,
    store: &mut QStore,
    config: &MdpConfig,
    mode: EpisodeMode,
    policy: Policy,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    config.validate()?;
    let route_len = env.world.route.length();
    let (lo, hi) = env.start_range;
    let mut s = if hi > lo { rng.gen_range(lo..hi) } else { lo }.clamp(0.0, route_len);
    let mut set = pf_init(env.pf.particles, &env.grid, rng.gen())?;
    let (_, mut state) = env.observe(&mut set, s, config.state_source)?;
    let mut positions = vec![s];
    let mut actions = Vec::with_capacity(config.horizon);
    let mut clamped = false;
    let mut final_reward = 0.0;
    for step in 0..config.horizon {
        let action = match policy {
            Policy::Learned { epsilon } => select_action(store, &state, epsilon, rng),
            Policy::Fixed(a) => a,
        };
        let step_len = *config
            .actions
            .get(action)
            .ok_or_else(|| Error::InvalidConfig(format!("action {action} out of range")))?;
        let before = env.world.route.pose_at(s);
        let target = s + step_len;
        if target > route_len {
            clamped = true;
        }
        s = target.min(route_len);
        let after = env.world.route.pose_at(s);
        // The filter is driven by the commanded step, even when the route ran out.
        set.motion_update(step_len, heading_delta(&before, &after), &env.pf.noise)?;
        let (belief, next_state) = env.observe(&mut set, s, config.state_source)?;
        let terminal = step + 1 == config.horizon;
        let reward = if terminal {
            let truth = env.grid.class_of(&after)?;
            reciprocal_rank_reward(&belief, truth)
        } else {
            0.0
        };
        if mode == EpisodeMode::Train {
            let t = Transition {
                state: std::mem::take(&mut state),
                action,
                reward,
                next: next_state.clone(),
                terminal,
            };
            nnql_update(store, &t, config.gamma, config.alpha)?;
        }
        state = next_state;
        positions.push(s);
        actions.push(action);
        if terminal {
            final_reward = reward;
        }
    }
    Ok(Episode {
        positions,
        actions,
        final_reward,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub reward: f64,
    pub epsilon: f64,
    pub store_size: usize,
}

pub const CURVE_CSV_HEADER: &str = "episode,reward,epsilon,store_size";

pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for p in curve {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{}",
            p.episode, p.reward, p.epsilon, p.store_size
        );
    }
    out
}

/// Runs `episodes` training episodes with decaying epsilon.
pub fn train_planner(
    env: &PlanningEnv,
    episodes: usize,
    config: &MdpConfig,
    seed: u64,
) -> Result<(QStore, Vec<CurvePoint>)> {
    let mut store = config.new_store()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let epsilon = config.epsilon(e, episodes);
        let ep = run_episode(
            env,
            &mut store,
            config,
            EpisodeMode::Train,
            Policy::Learned { epsilon },
            &mut rng,
        )?;
        curve.push(CurvePoint {
            episode: e,
            reward: ep.final_reward,
            epsilon,
            store_size: store.len(),
        });
    }
    Ok((store, curve))
}

/// Mean final reward of `policy` over `episodes` evaluation episodes. Episode
/// `i` draws its start and filter seed from `(seed, i)` alone, so different
/// policies face identical starts.
pub fn evaluate_policy(
    env: &PlanningEnv,
    store: &QStore,
    config: &MdpConfig,
    policy: Policy,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut frozen = store.clone();
    let mut total = 0.0;
    for i in 0..episodes {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        total += run_episode(
            env,
            &mut frozen,
            config,
            EpisodeMode::Eval,
            policy,
            &mut rng,
        )?
        .final_reward;
    }
    Ok(total / episodes as f64)
}
