//! Reproducible experiment harness: configuration, data preparation, per-cell
//! evaluation, ablation sweeps and their CSV reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{knn_class_distances, knn_classify, nbnn_classify, TrainIndex};
use crate::benchmark::{
    corridor, corridor_frames, frame_graphs, Benchmark, BenchmarkConfig, CorridorConfig, FrameSpec,
};
use crate::dataset::{load_sequence, ClassId, LabelMap, PlaceGrid, Pose, World};
use crate::descriptor::{brs_index, FeatureMode, ImageHistogram};
use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, softmax, train, GcnParams, Pdv, TrainHyper, TrainOutcome};
use crate::planner::{
    evaluate_policy, train_planner, CurvePoint, MdpConfig, PlanningEnv, Policy, QStore,
};
use crate::scene_graph::{
    build_scene_graph, build_sequence_chain_graph, SceneGraph, SceneGraphParams,
};
use crate::sequence_filter::{localize_with_pdvs, PfConfig, Trace};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    Gcn,
    Knn,
    Nbnn,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gcn => "gcn",
            Self::Knn => "knn",
            Self::Nbnn => "nbnn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    /// One node per image region, edges between adjacent regions.
    #[default]
    Region,
    /// One node per frame of a short window, chained in time order.
    Chain,
}

impl GraphKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Region => "region",
            Self::Chain => "chain",
        }
    }
}

/// On-disk sequences (directories holding a manifest and PGM frames).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub train: PathBuf,
    /// Defaults to the training sequence.
    #[serde(default)]
    pub map: Option<PathBuf>,
    /// Held-out frames in the training domain.
    #[serde(default)]
    pub test: Option<PathBuf>,
    pub query: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSection {
    pub mdp: MdpConfig,
    pub episodes: usize,
    pub eval_episodes: usize,
    pub eval_seeds: usize,
    /// Plan in the corridor world instead of the benchmark world.
    pub corridor: Option<CorridorConfig>,
    /// Spacing of the frames the corridor classifier is trained on.
    pub corridor_frame_spacing: f64,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            mdp: MdpConfig::default(),
            episodes: 500,
            eval_episodes: 20,
            eval_seeds: 10,
            corridor: Some(CorridorConfig::default()),
            corridor_frame_spacing: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationAxes {
    /// Number of consecutive seeds starting at the experiment seed.
    pub seeds: usize,
    pub classifiers: Vec<ClassifierKind>,
    pub graphs: Vec<GraphKind>,
    pub descriptors: Vec<FeatureMode>,
    pub merging: Vec<bool>,
}

impl Default for AblationAxes {
    fn default() -> Self {
        Self {
            seeds: 1,
            classifiers: vec![ClassifierKind::Gcn],
            graphs: vec![GraphKind::Region, GraphKind::Chain],
            descriptors: vec![FeatureMode::OneHot189, FeatureMode::SemanticOnly7],
            merging: vec![true, false],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub benchmark: BenchmarkConfig,
    /// Use these sequences instead of rendering the synthetic benchmark.
    pub datasets: Option<DatasetPaths>,
    pub graph: SceneGraphParams,
    pub classifier: ClassifierKind,
    pub graph_kind: GraphKind,
    pub gcn: TrainHyper,
    pub knn_k: usize,
    pub knn_normalize: bool,
    /// Frames per sequence-chain graph.
    pub chain_window: usize,
    pub pf: PfConfig,
    pub planner: PlannerSection,
    pub ablation: AblationAxes,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            benchmark: BenchmarkConfig::default(),
            datasets: None,
            graph: SceneGraphParams::default(),
            classifier: ClassifierKind::Gcn,
            graph_kind: GraphKind::Region,
            gcn: TrainHyper {
                lr: 0.01,
                epochs: 60,
                batch: 16,
                ..Default::default()
            },
            knn_k: 3,
            knn_normalize: false,
            chain_window: 3,
            pf: PfConfig::default(),
            planner: PlannerSection::default(),
            ablation: AblationAxes::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.benchmark.world.validate()?;
        self.planner.mdp.validate()?;
        if self.chain_window == 0 {
            return Err(Error::InvalidConfig(
                "chain_window must be at least 1".into(),
            ));
        }
        if self.knn_k == 0 {
            return Err(Error::InvalidConfig("knn_k must be at least 1".into()));
        }
        if let Some(d) = &self.datasets {
            let paths = std::iter::once(&d.train)
                .chain(&d.map)
                .chain(&d.test)
                .chain(&d.query);
            for p in paths {
                if !p.is_dir() {
                    return Err(Error::InvalidConfig(format!(
                        "dataset path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Copy with every seeded component driven by `seed`.
    pub fn seeded(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.benchmark.world.seed = seed;
        c.gcn.seed = seed;
        c.pf.seed = seed;
        c
    }

    /// The single configuration selected by `classifier`, `graph_kind` and `graph`.
    pub fn cell(&self) -> Cell {
        Cell {
            classifier: self.classifier,
            graph: self.graph_kind,
            descriptor: self.graph.mode,
            merging: self.graph.merging,
        }
    }

    /// FNV-1a over the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Fraction of positions where prediction and truth agree.
pub fn evaluate_top1(predictions: &[ClassId], truths: &[ClassId]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitCost {
    pub mean_nodes: f64,
    pub mean_node_bits: f64,
    pub mean_edge_bits: f64,
}

impl BitCost {
    pub fn mean_total_bits(&self) -> f64 {
        self.mean_node_bits + self.mean_edge_bits
    }
}

/// Bits to index one of `n` nodes.
fn index_bits(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// One byte per node; each edge stores two node indices of `ceil(log2 n)` bits.
pub fn bit_cost_report(graphs: &[SceneGraph]) -> Result<BitCost> {
    if graphs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = graphs.len() as f64;
    let nodes: usize = graphs.iter().map(|g| g.num_nodes()).sum();
    let edge_bits: u64 = graphs
        .iter()
        .map(|g| g.edges.len() as u64 * 2 * index_bits(g.num_nodes()) as u64)
        .sum();
    Ok(BitCost {
        mean_nodes: nodes as f64 / n,
        mean_node_bits: 8.0 * nodes as f64 / n,
        mean_edge_bits: edge_bits as f64 / n,
    })
}

/// Frames of one split with graphs per merging variant.
#[derive(Debug, Clone)]
pub struct Split {
    pub frames: Vec<FrameSpec>,
    /// `graphs[v][f]`: frame `f` under variant `v`, one-hot features.
    pub graphs: Vec<Vec<SceneGraph>>,
}

impl Split {
    fn truths(&self) -> Vec<ClassId> {
        self.frames.iter().map(|f| f.class).collect()
    }

    fn poses(&self) -> Vec<Pose> {
        self.frames.iter().map(|f| f.pose).collect()
    }
}

/// Everything a cell needs, shared across the cells of one seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: PlaceGrid,
    pub variants: Vec<SceneGraphParams>,
    pub train: Split,
    /// `None` when the map frames are the training frames.
    pub map: Option<Split>,
    pub test: Split,
    pub queries: Vec<Split>,
}

impl Prepared {
    pub fn map(&self) -> &Split {
        self.map.as_ref().unwrap_or(&self.train)
    }

    pub fn variant(&self, merging: bool) -> Result<usize> {
        self.variants
            .iter()
            .position(|p| p.merging == merging)
            .ok_or_else(|| {
                Error::InvalidConfig(format!("no graphs prepared with merging = {merging}"))
            })
    }
}

fn variants(base: &SceneGraphParams, merging: &[bool]) -> Vec<SceneGraphParams> {
    let mut out: Vec<SceneGraphParams> = Vec::new();
    for &m in merging {
        if !out.iter().any(|p| p.merging == m) {
            out.push(SceneGraphParams {
                merging: m,
                mode: FeatureMode::OneHot189,
                ..*base
            });
        }
    }
    out
}

fn loaded_split(dir: &Path, grid: &PlaceGrid, params: &[SceneGraphParams]) -> Result<Split> {
    let (manifest, maps): (_, Vec<LabelMap>) = load_sequence(dir)?;
    let frames = manifest
        .frames
        .iter()
        .map(|r| {
            let pose = r.pose();
            Ok(FrameSpec {
                pose,
                class: grid.class_of(&pose)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let graphs = params
        .iter()
        .map(|p| maps.iter().map(|m| build_scene_graph(m, p)).collect())
        .collect::<Result<Vec<_>>>()?;
    Ok(Split { frames, graphs })
}

/// Renders or loads all splits and builds their graphs for every merging value.
pub fn prepare(config: &ExperimentConfig, merging: &[bool], need_map: bool) -> Result<Prepared> {
    let params = variants(&config.graph, merging);
    if params.is_empty() {
        return Err(Error::InvalidConfig("no merging variants requested".into()));
    }
    let bc = &config.benchmark;
    if let Some(d) = &config.datasets {
        let grid = PlaceGrid::new(bc.world.bounds(), bc.grid_rows, bc.grid_cols)?;
        let train = loaded_split(&d.train, &grid, &params)?;
        let map = match &d.map {
            Some(p) if need_map => Some(loaded_split(p, &grid, &params)?),
            _ => None,
        };
        let test = match &d.test {
            Some(p) => loaded_split(p, &grid, &params)?,
            None => train.clone(),
        };
        let queries = d
            .query
            .iter()
            .map(|q| loaded_split(q, &grid, &params))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Prepared {
            grid,
            variants: params,
            train,
            map,
            test,
            queries,
        });
    }
    let b = Benchmark::build(bc)?;
    let split = |world, frames: &[FrameSpec]| -> Result<Split> {
        Ok(Split {
            frames: frames.to_vec(),
            graphs: frame_graphs(world, frames, &params)?,
        })
    };
    let train = split(&b.train_world, &b.train)?;
    let map = if need_map && bc.map_domain != bc.train_domain {
        Some(split(&b.map_world, &b.train)?)
    } else {
        None
    };
    let test = split(&b.train_world, &b.test)?;
    let queries = b
        .queries
        .iter()
        .map(|q| split(&b.query_world, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        grid: b.grid,
        variants: params,
        train,
        map,
        test,
        queries,
    })
}

/// Per-frame feature of a chain node: the sum of the frame's node features.
fn frame_feature(graph: &SceneGraph, mode: FeatureMode) -> Vec<f64> {
    let g = graph.with_mode(mode);
    let mut sum = vec![0.0; mode.dim()];
    for n in &g.nodes {
        for (s, v) in sum.iter_mut().zip(&n.feature) {
            *s += v;
        }
    }
    sum
}

/// Chain graph ending at each frame, over up to `window` frames.
fn chain_graphs(
    graphs: &[SceneGraph],
    mode: FeatureMode,
    window: usize,
) -> Result<Vec<SceneGraph>> {
    let features: Vec<Vec<f64>> = graphs.iter().map(|g| frame_feature(g, mode)).collect();
    (0..features.len())
        .map(|t| build_sequence_chain_graph(&features[(t + 1).saturating_sub(window)..=t]))
        .collect()
}

/// Descriptor codes the non-parametric baselines compare. Semantic-only mode
/// keeps just the category, folded onto bearing and range bin 0.
fn node_codes(graph: &SceneGraph, mode: FeatureMode) -> Result<Vec<u8>> {
    graph
        .nodes
        .iter()
        .filter_map(|n| n.brs)
        .map(|d| match mode {
            FeatureMode::OneHot189 => Ok(d.index()),
            FeatureMode::SemanticOnly7 => brs_index(d.semantic as usize, 0, 0),
            FeatureMode::ThreeHot19 => Err(Error::InvalidConfig(
                "kNN/NBNN compare single descriptor codes; three-hot features have none".into(),
            )),
        })
        .collect()
}

enum Model {
    Gcn(GcnParams),
    Knn { index: TrainIndex, k: usize },
    Nbnn(TrainIndex),
}

impl Model {
    /// Class scores as probabilities plus the classifier's own decision.
    fn classify(&self, graph: &SceneGraph, mode: FeatureMode) -> Result<(Pdv, ClassId)> {
        match self {
            Model::Gcn(p) => {
                let pdv = gcn_forward(graph, p)?;
                let top = pdv.top1();
                Ok((pdv, top))
            }
            Model::Knn { index, k } => {
                let h = ImageHistogram::from_indices(node_codes(graph, mode)?);
                let neg: Vec<f64> = knn_class_distances(&h, index).iter().map(|d| -d).collect();
                Ok((Pdv(softmax(&neg)), knn_classify(&h, index, *k)?))
            }
            Model::Nbnn(index) => {
                let r = nbnn_classify(&node_codes(graph, mode)?, index)?;
                let neg: Vec<f64> = r.scores.iter().map(|d| -d).collect();
                Ok((Pdv(softmax(&neg)), r.class))
            }
        }
    }
}

/// One sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub classifier: ClassifierKind,
    pub graph: GraphKind,
    pub descriptor: FeatureMode,
    pub merging: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub cell: Cell,
    /// Single-view accuracy on held-out frames of the training domain.
    pub test_top1: f64,
    /// Single-view accuracy over all query frames.
    pub single_view_top1: f64,
    /// Filter accuracy over all query viewpoints.
    pub pf_top1_all: f64,
    /// Filter accuracy at the last viewpoint of each sequence.
    pub pf_top1_final: f64,
    /// Single-view accuracy at the last viewpoint of each sequence.
    pub single_view_top1_final: f64,
    /// Costs of the per-frame region graphs of the query frames.
    pub bits: BitCost,
    pub inference_ms_per_frame: f64,
}

/// Outcome of one cell: metrics and filter traces, or the error that stopped it.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: std::result::Result<(MetricsReport, Vec<Trace>), String>,
}

fn mode_graphs(graphs: &[SceneGraph], mode: FeatureMode) -> Vec<SceneGraph> {
    graphs.iter().map(|g| g.with_mode(mode)).collect()
}

/// Graphs the classifier consumes for a split, in frame order.
fn inputs(
    config: &ExperimentConfig,
    cell: &Cell,
    graphs: &[SceneGraph],
) -> Result<Vec<SceneGraph>> {
    match cell.graph {
        GraphKind::Region => Ok(mode_graphs(graphs, cell.descriptor)),
        GraphKind::Chain => chain_graphs(graphs, cell.descriptor, config.chain_window),
    }
}

fn fit(config: &ExperimentConfig, data: &Prepared, cell: &Cell, v: usize) -> Result<Model> {
    let classes = data.grid.num_classes();
    match (cell.classifier, cell.graph) {
        (ClassifierKind::Gcn, _) => {
            let graphs = inputs(config, cell, &data.train.graphs[v])?;
            let set: Vec<(SceneGraph, ClassId)> =
                graphs.into_iter().zip(data.train.truths()).collect();
            Ok(Model::Gcn(train(&set, classes, &config.gcn)?.params))
        }
        (_, GraphKind::Chain) => Err(Error::InvalidConfig(
            "kNN/NBNN baselines operate on single-frame region graphs".into(),
        )),
        (kind, GraphKind::Region) => {
            let map = data.map();
            let mut index = TrainIndex::new(classes);
            index.normalize = config.knn_normalize;
            for (g, f) in map.graphs[v].iter().zip(&map.frames) {
                index.insert(
                    ImageHistogram::from_indices(node_codes(g, cell.descriptor)?),
                    f.class,
                )?;
            }
            Ok(if kind == ClassifierKind::Knn {
                Model::Knn {
                    index,
                    k: config.knn_k,
                }
            } else {
                Model::Nbnn(index)
            })
        }
    }
}

/// GCN of `cell` trained on the training split, with its test-split accuracy.
pub fn train_gcn(
    config: &ExperimentConfig,
    data: &Prepared,
    cell: &Cell,
) -> Result<(TrainOutcome, f64)> {
    if cell.classifier != ClassifierKind::Gcn {
        return Err(Error::InvalidConfig(
            "only the GCN classifier has trainable weights".into(),
        ));
    }
    let v = data.variant(cell.merging)?;
    let graphs = inputs(config, cell, &data.train.graphs[v])?;
    let set: Vec<(SceneGraph, ClassId)> = graphs.into_iter().zip(data.train.truths()).collect();
    let outcome = train(&set, data.grid.num_classes(), &config.gcn)?;
    let test: Vec<(SceneGraph, ClassId)> = inputs(config, cell, &data.test.graphs[v])?
        .into_iter()
        .zip(data.test.truths())
        .collect();
    let top1 = crate::gcn::accuracy(&test, &outcome.params)?;
    Ok((outcome, top1))
}

/// Trains the cell's classifier and evaluates it in and across domains.
pub fn evaluate_cell(
    config: &ExperimentConfig,
    data: &Prepared,
    cell: &Cell,
) -> Result<(MetricsReport, Vec<Trace>)> {
    let v = data.variant(cell.merging)?;
    if data.queries.is_empty() {
        return Err(Error::EmptySequence);
    }
    let model = fit(config, data, cell, v)?;

    let test_inputs = inputs(config, cell, &data.test.graphs[v])?;
    let test_pred = test_inputs
        .iter()
        .map(|g| model.classify(g, cell.descriptor).map(|r| r.1))
        .collect::<Result<Vec<_>>>()?;
    let test_top1 = evaluate_top1(&test_pred, &data.test.truths())?;

    let (mut sv, mut sv_final, mut pf_all, mut pf_final, mut truths, mut truths_final) = (
        Vec::new(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
    );
    let mut traces = Vec::with_capacity(data.queries.len());
    let mut frames = 0usize;
    let mut elapsed = 0.0;
    for (i, q) in data.queries.iter().enumerate() {
        let start = Instant::now();
        let query_inputs = inputs(config, cell, &q.graphs[v])?;
        let outputs = query_inputs
            .iter()
            .map(|g| model.classify(g, cell.descriptor))
            .collect::<Result<Vec<_>>>()?;
        elapsed += start.elapsed().as_secs_f64();
        frames += outputs.len();
        let (pdvs, top): (Vec<Pdv>, Vec<ClassId>) = outputs.into_iter().unzip();
        let pf = PfConfig {
            seed: config.pf.seed.wrapping_add(i as u64),
            ..config.pf
        };
        let trace = localize_with_pdvs(&q.poses(), &pdvs, &data.grid, &pf)?;
        let t = q.truths();
        sv.extend_from_slice(&top);
        sv_final.push(*top.last().expect("sequence is non-empty"));
        pf_all.extend(trace.steps.iter().map(|s| s.belief.top1));
        pf_final.push(
            trace
                .final_step()
                .expect("sequence is non-empty")
                .belief
                .top1,
        );
        truths_final.push(*t.last().expect("sequence is non-empty"));
        truths.extend(t);
        traces.push(trace);
    }
    let query_graphs: Vec<SceneGraph> = data
        .queries
        .iter()
        .flat_map(|q| q.graphs[v].iter().cloned())
        .collect();
    let report = MetricsReport {
        seed: config.seed,
        cell: *cell,
        test_top1,
        single_view_top1: evaluate_top1(&sv, &truths)?,
        pf_top1_all: evaluate_top1(&pf_all, &truths)?,
        pf_top1_final: evaluate_top1(&pf_final, &truths_final)?,
        single_view_top1_final: evaluate_top1(&sv_final, &truths_final)?,
        bits: bit_cost_report(&query_graphs)?,
        inference_ms_per_frame: 1e3 * elapsed / frames.max(1) as f64,
    };
    Ok((report, traces))
}

impl AblationAxes {
    /// Cross product in axis order: classifier, graph, descriptor, merging.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &classifier in &self.classifiers {
            for &graph in &self.graphs {
                for &descriptor in &self.descriptors {
                    for &merging in &self.merging {
                        out.push(Cell {
                            classifier,
                            graph,
                            descriptor,
                            merging,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub seed: u64,
    pub config_hash: String,
    pub outcome: CellOutcome,
}

/// Every cell for every seed. Failing cells and seeds whose data could not be
/// prepared are recorded as error rows.
pub fn run_ablation(config: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    config.validate()?;
    let axes = &config.ablation;
    let cells = axes.cells();
    if cells.is_empty() || axes.seeds == 0 {
        return Err(Error::InvalidConfig("ablation sweep is empty".into()));
    }
    let need_map = axes.classifiers.iter().any(|&c| c != ClassifierKind::Gcn);
    let hash = config.hash();
    let mut rows = Vec::with_capacity(cells.len() * axes.seeds);
    for s in 0..axes.seeds as u64 {
        let seeded = config.seeded(config.seed.wrapping_add(s));
        let prepared = prepare(&seeded, &axes.merging, need_map);
        for cell in &cells {
            let result = match &prepared {
                Ok(data) => evaluate_cell(&seeded, data, cell).map_err(|e| e.to_string()),
                Err(e) => Err(format!("data preparation failed: {e}")),
            };
            if let Err(e) = &result {
                log::warn!("seed {} cell {cell:?} failed: {e}", seeded.seed);
            }
            rows.push(AblationRow {
                seed: seeded.seed,
                config_hash: hash.clone(),
                outcome: CellOutcome {
                    cell: *cell,
                    result,
                },
            });
        }
    }
    Ok(rows)
}

pub const ABLATION_CSV_HEADER: &str = "schema_version,config_hash,seed,classifier,graph,descriptor,merging,\
test_top1,single_view_top1,single_view_top1_final,pf_top1_all,pf_top1_final,mean_nodes,mean_node_bits,mean_edge_bits,status";

fn csv_safe(s: &str) -> String {
    s.replace([',', '\n', '"'], " ")
}

/// Stable, deterministic table; timing is left out so reruns compare equal.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let c = &r.outcome.cell;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},",
            REPORT_SCHEMA_VERSION,
            r.config_hash,
            r.seed,
            c.classifier.name(),
            c.graph.name(),
            c.descriptor.name(),
            c.merging
        );
        match &r.outcome.result {
            Ok((m, _)) => {
                let _ = writeln!(
                    out,
                    "{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},ok",
                    m.test_top1,
                    m.single_view_top1,
                    m.single_view_top1_final,
                    m.pf_top1_all,
                    m.pf_top1_final,
                    m.bits.mean_nodes,
                    m.bits.mean_node_bits,
                    m.bits.mean_edge_bits
                );
            }
            Err(e) => {
                let _ = writeln!(out, ",,,,,,,,error: {}", csv_safe(e));
            }
        }
    }
    out
}

/// Mean metrics of one cell over the seeds where it succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub runs: usize,
    pub failures: usize,
    pub test_top1: f64,
    pub single_view_top1: f64,
    pub single_view_top1_final: f64,
    pub pf_top1_all: f64,
    pub pf_top1_final: f64,
    pub mean_nodes: f64,
    pub mean_total_bits: f64,
}

/// Per-cell means in first-appearance order.
pub fn summarize(rows: &[AblationRow]) -> Vec<CellSummary> {
    let mut cells: Vec<Cell> = Vec::new();
    for r in rows {
        if !cells.contains(&r.outcome.cell) {
            cells.push(r.outcome.cell);
        }
    }
    cells
        .into_iter()
        .map(|cell| {
            let mine: Vec<&AblationRow> = rows.iter().filter(|r| r.outcome.cell == cell).collect();
            let ok: Vec<&MetricsReport> = mine
                .iter()
                .filter_map(|r| r.outcome.result.as_ref().ok().map(|x| &x.0))
                .collect();
            let n = ok.len().max(1) as f64;
            let mean = |f: &dyn Fn(&MetricsReport) -> f64| ok.iter().map(|m| f(m)).sum::<f64>() / n;
            CellSummary {
                cell,
                runs: ok.len(),
                failures: mine.len() - ok.len(),
                test_top1: mean(&|m| m.test_top1),
                single_view_top1: mean(&|m| m.single_view_top1),
                single_view_top1_final: mean(&|m| m.single_view_top1_final),
                pf_top1_all: mean(&|m| m.pf_top1_all),
                pf_top1_final: mean(&|m| m.pf_top1_final),
                mean_nodes: mean(&|m| m.bits.mean_nodes),
                mean_total_bits: mean(&|m| m.bits.mean_total_bits()),
            }
        })
        .collect()
}

pub const SUMMARY_CSV_HEADER: &str = "schema_version,classifier,graph,descriptor,merging,runs,failures,\
test_top1,single_view_top1,single_view_top1_final,pf_top1_all,pf_top1_final,mean_nodes,mean_total_bits";

pub fn summary_csv(summary: &[CellSummary]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for s in summary {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            REPORT_SCHEMA_VERSION,
            s.cell.classifier.name(),
            s.cell.graph.name(),
            s.cell.descriptor.name(),
            s.cell.merging,
            s.runs,
            s.failures,
        );
        if s.runs == 0 {
            out.push_str(",,,,,,,\n");
            continue;
        }
        let _ = writeln!(
            out,
            ",{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4}",
            s.test_top1,
            s.single_view_top1,
            s.single_view_top1_final,
            s.pf_top1_all,
            s.pf_top1_final,
            s.mean_nodes,
            s.mean_total_bits
        );
    }
    out
}

fn parse_name<T: serde::de::DeserializeOwned>(s: &str) -> Option<T> {
    serde_json::from_value(serde_json::Value::String(s.into())).ok()
}

/// Rebuilds summary input from an ablation CSV written by [`ablation_csv`].
pub fn parse_ablation_csv(text: &str) -> Result<Vec<AblationRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(ABLATION_CSV_HEADER) {
        return Err(Error::InvalidConfig(
            "not an ablation report (header mismatch)".into(),
        ));
    }
    let bad = |l: &str| Error::InvalidConfig(format!("malformed ablation row: {l}"));
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 16 {
            return Err(bad(line));
        }
        let cell = Cell {
            classifier: parse_name(f[3]).ok_or_else(|| bad(line))?,
            graph: parse_name(f[4]).ok_or_else(|| bad(line))?,
            descriptor: parse_name(f[5]).ok_or_else(|| bad(line))?,
            merging: f[6].parse().map_err(|_| bad(line))?,
        };
        let seed: u64 = f[2].parse().map_err(|_| bad(line))?;
        let result = if f[15] == "ok" {
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(line));
            Ok((
                MetricsReport {
                    seed,
                    cell,
                    test_top1: num(7)?,
                    single_view_top1: num(8)?,
                    single_view_top1_final: num(9)?,
                    pf_top1_all: num(10)?,
                    pf_top1_final: num(11)?,
                    bits: BitCost {
                        mean_nodes: num(12)?,
                        mean_node_bits: num(13)?,
                        mean_edge_bits: num(14)?,
                    },
                    inference_ms_per_frame: 0.0,
                },
                Vec::new(),
            ))
        } else {
            Err(f[15].strip_prefix("error: ").unwrap_or(f[15]).to_string())
        };
        rows.push(AblationRow {
            seed,
            config_hash: f[1].to_string(),
            outcome: CellOutcome { cell, result },
        });
    }
    Ok(rows)
}

/// Outcome of training a viewpoint planner and comparing it with fixed step sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStudy {
    /// Top-1 accuracy of the planner's classifier on its own training frames.
    pub classifier_top1: f64,
    pub curve: Vec<CurvePoint>,
    /// Greedy learned policy, mean final reward per evaluation seed.
    pub learned: Vec<f64>,
    /// `fixed[a][j]`: always taking action `a`, evaluation seed `j`.
    pub fixed: Vec<Vec<f64>>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl PlanStudy {
    pub fn learned_mean(&self) -> f64 {
        mean(&self.learned)
    }

    pub fn fixed_means(&self) -> Vec<f64> {
        self.fixed.iter().map(|f| mean(f)).collect()
    }

    /// Best fixed action and its mean reward.
    pub fn best_fixed(&self) -> (usize, f64) {
        let means = self.fixed_means();
        let a = crate::gcn::argmax(&means);
        (a, means[a])
    }
}

pub const PLAN_CSV_HEADER: &str = "policy,eval_seed,mean_reward";

pub fn plan_csv(study: &PlanStudy, actions: &[f64]) -> String {
    let mut out = String::from(PLAN_CSV_HEADER);
    out.push('\n');
    for (j, r) in study.learned.iter().enumerate() {
        let _ = writeln!(out, "learned,{j},{r:.6}");
    }
    for (a, rows) in study.fixed.iter().enumerate() {
        for (j, r) in rows.iter().enumerate() {
            let _ = writeln!(out, "fixed_{},{j},{r:.6}", actions[a]);
        }
    }
    out
}

/// World, grid, start interval and labelled training frames of the planning task.
type PlanningWorld = (World, PlaceGrid, (f64, f64), Vec<FrameSpec>);

fn planning_world(config: &ExperimentConfig) -> Result<PlanningWorld> {
    match &config.planner.corridor {
        Some(cc) => {
            let c = corridor(cc)?;
            let frames = corridor_frames(&c, config.planner.corridor_frame_spacing)?;
            Ok((c.world, c.grid, c.start_range, frames))
        }
        None => {
            let b = Benchmark::build(&config.benchmark)?;
            let len = b.train_world.route.length();
            Ok((b.train_world, b.grid, (0.0, 0.5 * len), b.train))
        }
    }
}

/// Trains a GCN on the planning world, learns a planner and evaluates it
/// against every fixed action on `eval_seeds` sets of `eval_episodes` starts.
pub fn plan_study(config: &ExperimentConfig) -> Result<(PlanStudy, QStore, GcnParams)> {
    let ps = &config.planner;
    if ps.eval_seeds == 0 || ps.eval_episodes == 0 {
        return Err(Error::InvalidConfig(
            "planner evaluation needs seeds and episodes".into(),
        ));
    }
    let (world, grid, start_range, frames) = planning_world(config)?;
    let graphs = frame_graphs(&world, &frames, std::slice::from_ref(&config.graph))?;
    let data: Vec<(SceneGraph, ClassId)> = graphs
        .into_iter()
        .next()
        .unwrap_or_default()
        .into_iter()
        .zip(&frames)
        .map(|(g, f)| (g, f.class))
        .collect();
    let outcome = train(&data, grid.num_classes(), &config.gcn)?;
    let classifier_top1 = crate::gcn::accuracy(&data, &outcome.params)?;
    let env = PlanningEnv {
        world: &world,
        grid,
        classifier: &outcome.params,
        graph_params: config.graph,
        pf: config.pf,
        start_range,
    };
    let (store, curve) = train_planner(&env, ps.episodes, &ps.mdp, config.seed)?;
    let eval_seed = |j: usize| config.seed.wrapping_add(0x0e7a_1000).wrapping_add(j as u64);
    let learned = (0..ps.eval_seeds)
        .map(|j| {
            evaluate_policy(
                &env,
                &store,
                &ps.mdp,
                Policy::Learned { epsilon: 0.0 },
                ps.eval_episodes,
                eval_seed(j),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let fixed = (0..ps.mdp.actions.len())
        .map(|a| {
            (0..ps.eval_seeds)
                .map(|j| {
                    evaluate_policy(
                        &env,
                        &store,
                        &ps.mdp,
                        Policy::Fixed(a),
                        ps.eval_episodes,
                        eval_seed(j),
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        PlanStudy {
            classifier_top1,
            curve,
            learned,
            fixed,
        },
        store,
        outcome.params,
    ))
}
