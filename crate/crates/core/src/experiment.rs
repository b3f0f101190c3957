//! Randomized flow-set generation, batch analysis and improvement statistics.
//!
//! Every set is generated from its own seed derived from the experiment seed,
//! the category index and the set index, so sets can be produced in parallel
//! and any single set can be replayed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_flowset, AnalysisOptions, JitterPolicy, Method};
use crate::error::{Error, Result};
use crate::flow::{Flow, FlowId, FlowSet};
use crate::platform::{PathDecomposition, PlatformConfig, TileCoord};
use crate::sim::{simulate, SimConfig};
use crate::timing::{solve_fixed_point, Preemptor};
use crate::Picos;

pub const MS: Picos = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FlowSizeSweep,
    PathLengthSweep,
    JointSweep,
    FlowsetSizeSweep,
    PriorityProfile,
    Tightness,
    TwoFlowSurface,
}

/// One x-axis point of an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub label: String,
    /// Inclusive payload size range in bytes.
    pub size_bytes: (u64, u64),
    /// Inclusive range of `|L|`; `None` leaves endpoints unconstrained.
    #[serde(default)]
    pub path_links: Option<(usize, usize)>,
    /// Overrides the spec's `flows_per_set`.
    #[serde(default)]
    pub flows: Option<usize>,
    /// Contention-domain length, two-flow surfaces only.
    #[serde(default)]
    pub cd_links: Option<usize>,
}

impl Category {
    pub fn sizes(label: impl Into<String>, lo: u64, hi: u64) -> Self {
        Category {
            label: label.into(),
            size_bytes: (lo, hi),
            path_links: None,
            flows: None,
            cd_links: None,
        }
    }

    pub fn with_paths(mut self, lo: usize, hi: usize) -> Self {
        self.path_links = Some((lo, hi));
        self
    }

    pub fn with_flows(mut self, n: usize) -> Self {
        self.flows = Some(n);
        self
    }
}

/// How flow periods are drawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeriodModel {
    /// Uniform integer picoseconds in `[min_ps, max_ps]`; unschedulable sets
    /// are rescaled by 1.1.
    Uniform { min_ps: Picos, max_ps: Picos },
    /// Uniform choice from a fixed set; unschedulable sets are rescaled by 2
    /// so the hyper-period stays small.
    Grid { values_ps: Vec<Picos> },
}

impl Default for PeriodModel {
    fn default() -> Self {
        PeriodModel::Uniform {
            min_ps: MS,
            max_ps: 10 * MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub categories: Vec<Category>,
    pub sets_per_category: usize,
    pub flows_per_set: usize,
    pub seed: u64,
    #[serde(default)]
    pub platform: PlatformConfig,
    #[serde(default)]
    pub periods: PeriodModel,
    #[serde(default)]
    pub jitter: JitterPolicy,
    /// Simulator settings for the tightness experiment.
    #[serde(default)]
    pub sim: Option<SimConfig>,
    /// Width of the rank groups of the priority profile.
    #[serde(default = "one")]
    pub rank_bucket: usize,
}

fn one() -> usize {
    1
}

fn pow2_label(bytes: u64) -> String {
    if bytes >= 1024 {
        format!("{}kB", bytes / 1024)
    } else {
        format!("{bytes}B")
    }
}

impl ExperimentSpec {
    fn desk(kind: ExperimentKind, categories: Vec<Category>) -> Self {
        ExperimentSpec {
            kind,
            categories,
            sets_per_category: 20,
            flows_per_set: 50,
            seed: 2014,
            platform: PlatformConfig::reference(),
            periods: PeriodModel::default(),
            jitter: JitterPolicy::ShiBurns,
            sim: None,
            rank_bucket: 1,
        }
    }

    /// Sizes 1–16 B, 16–64 B, …, 64–256 kB on the reference platform.
    pub fn flow_sizes() -> Self {
        let mut cats = vec![Category::sizes("1B-16B", 1, 16)];
        let mut lo = 16;
        while lo < 64 * 1024 {
            let hi = lo * 4;
            cats.push(Category::sizes(format!("{}-{}", pow2_label(lo), pow2_label(hi)), lo, hi));
            lo = hi;
        }
        Self::desk(ExperimentKind::FlowSizeSweep, cats)
    }

    /// Path lengths 3–4, 3–6, …, 3–16 links, sizes 1 B–1 kB.
    pub fn path_lengths() -> Self {
        let cats = (4..=16)
            .step_by(2)
            .map(|hi| Category::sizes(format!("3-{hi}"), 1, 1024).with_paths(3, hi))
            .collect();
        Self::desk(ExperimentKind::PathLengthSweep, cats)
    }

    /// Cross product of four size ranges and four path-length ranges.
    pub fn joint() -> Self {
        let sizes = [(1, 16), (16, 256), (256, 4096), (4096, 65536)];
        let paths = [4, 8, 12, 16];
        let cats = sizes
            .iter()
            .flat_map(|&(lo, hi)| {
                paths.iter().map(move |&p| {
                    Category::sizes(format!("{}-{}/3-{p}", pow2_label(lo), pow2_label(hi)), lo, hi)
                        .with_paths(3, p)
                })
            })
            .collect();
        Self::desk(ExperimentKind::JointSweep, cats)
    }

    /// 100, 150, …, 500 flows per set, sizes 1 B–1 kB.
    pub fn flowset_sizes() -> Self {
        let cats = (100..=500)
            .step_by(50)
            .map(|n| Category::sizes(format!("{n} flows"), 1, 1024).with_flows(n))
            .collect();
        Self::desk(ExperimentKind::FlowsetSizeSweep, cats)
    }

    /// One category; results are grouped by priority rank, ten ranks per
    /// group.
    pub fn priorities() -> Self {
        let mut spec = Self::desk(
            ExperimentKind::PriorityProfile,
            vec![Category::sizes("1B-1kB", 1, 1024)],
        );
        spec.rank_bucket = 10;
        spec
    }

    /// 42 flows on a 6×6 mesh at 100 MHz, payloads of 2–48 flits, periods
    /// from a 0.5–9 ms grid, simulated for two hyper-periods.
    pub fn tightness() -> Self {
        let platform = PlatformConfig::slow_clock(6, 6);
        let flit = platform.flit_bytes;
        let mut spec = Self::desk(
            ExperimentKind::Tightness,
            vec![Category::sizes("2-48 flits", 2 * flit, 48 * flit)],
        );
        spec.sets_per_category = 1;
        spec.flows_per_set = 42;
        spec.platform = platform;
        spec.periods = PeriodModel::Grid {
            values_ps: [1, 2, 3, 4, 6, 9, 12, 18].iter().map(|k| k * MS / 2).collect(),
        };
        spec.sim = Some(SimConfig::default());
        spec
    }

    /// Two-flow surfaces for CD lengths 1, 5 and 10 over `|L_1|` 1–16.
    pub fn two_flow_surface() -> Self {
        let cats = [1, 5, 10]
            .iter()
            .map(|&cd| Category {
                label: format!("cd={cd}"),
                size_bytes: (16, 1024),
                path_links: Some((1, 16)),
                flows: None,
                cd_links: Some(cd),
            })
            .collect();
        let mut spec = Self::desk(ExperimentKind::TwoFlowSurface, cats);
        spec.sets_per_category = 1;
        spec.flows_per_set = 2;
        spec
    }

    /// 100 sets of 200 flows per category.
    pub fn full_scale(mut self) -> Self {
        if !matches!(self.kind, ExperimentKind::Tightness | ExperimentKind::TwoFlowSurface) {
            self.sets_per_category = 100;
            self.flows_per_set = 200;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.platform.validate()?;
        if self.categories.is_empty() {
            return Err(Error::Config("experiment has no categories".into()));
        }
        if self.rank_bucket == 0 {
            return Err(Error::Config("rank_bucket must be at least 1".into()));
        }
        if self.sets_per_category == 0 {
            return Err(Error::Config("sets_per_category must be at least 1".into()));
        }
        match &self.periods {
            PeriodModel::Uniform { min_ps, max_ps } if *min_ps == 0 || min_ps > max_ps => {
                return Err(Error::Config(format!(
                    "period range [{min_ps}, {max_ps}] ps is empty or starts at zero"
                )));
            }
            PeriodModel::Grid { values_ps } if values_ps.is_empty() || values_ps.contains(&0) => {
                return Err(Error::Config("period grid must hold positive values".into()));
            }
            _ => {}
        }
        let max_links = (self.platform.rows + self.platform.cols) as usize; // manhattan max + 2
        for c in &self.categories {
            let (lo, hi) = c.size_bytes;
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("{}: size range [{lo}, {hi}] invalid", c.label)));
            }
            if self.kind == ExperimentKind::TwoFlowSurface {
                let cd = c.cd_links.unwrap_or(1);
                let (plo, phi) = c.path_links.unwrap_or((1, 16));
                if cd == 0 || plo == 0 || plo > phi {
                    return Err(Error::Config(format!("{}: invalid surface geometry", c.label)));
                }
                continue;
            }
            if let Some((plo, phi)) = c.path_links {
                if plo > phi || phi < 3 || plo > max_links {
                    return Err(Error::Config(format!(
                        "{}: path length range [{plo}, {phi}] unattainable on a {}x{} mesh (3..={max_links})",
                        c.label, self.platform.cols, self.platform.rows
                    )));
                }
            }
            if c.flows.unwrap_or(self.flows_per_set) == 0 {
                return Err(Error::Config(format!("{}: no flows per set", c.label)));
            }
        }
        if self.platform.tiles() < 2 && self.kind != ExperimentKind::TwoFlowSurface {
            return Err(Error::Config("mesh needs at least two tiles".into()));
        }
        Ok(())
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            jitter: self.jitter,
            ..Default::default()
        }
    }
}

/// Seed of set `set` in category `category`.
pub fn set_seed(seed: u64, category: usize, set: usize) -> u64 {
    // splitmix64 over the combined key
    let mut z = seed
        ^ (category as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (set as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MAX_ENDPOINT_DRAWS: usize = 100_000;
const MAX_RESCALES: usize = 400;

/// Draws one flow-set for `category`; periods are scaled up until the set is
/// schedulable under the classic analysis.
pub fn generate_flowset(spec: &ExperimentSpec, category: &Category, seed: u64) -> Result<FlowSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = spec.platform;
    let n = category.flows.unwrap_or(spec.flows_per_set);
    let tiles: Vec<TileCoord> = cfg.tile_coords().collect();

    let mut priorities: Vec<u32> = (1..=n as u32).collect();
    priorities.shuffle(&mut rng);

    let mut flows = Vec::with_capacity(n);
    for (k, &priority) in priorities.iter().enumerate() {
        let (src, dst) = draw_endpoints(&mut rng, &tiles, category, &cfg)?;
        let size = rng.gen_range(category.size_bytes.0..=category.size_bytes.1);
        let period = match &spec.periods {
            PeriodModel::Uniform { min_ps, max_ps } => rng.gen_range(*min_ps..=*max_ps),
            PeriodModel::Grid { values_ps } => *values_ps.choose(&mut rng).expect("non-empty grid"),
        };
        flows.push(Flow::new(k as u32 + 1, src, dst, size, priority, period));
    }

    let mut fs = FlowSet::new(cfg, flows)?;
    let opts = spec.analysis_options();
    for _ in 0..MAX_RESCALES {
        if analyze_flowset(&fs, opts)?.schedulable(Method::Classic) {
            return Ok(fs);
        }
        fs = match spec.periods {
            PeriodModel::Uniform { .. } => fs.map_periods(|p| p + p.div_ceil(10))?,
            PeriodModel::Grid { .. } => fs.map_periods(|p| p * 2)?,
        };
    }
    Err(Error::Config(format!(
        "{}: no schedulable period scaling found after {MAX_RESCALES} rounds",
        category.label
    )))
}

fn draw_endpoints(
    rng: &mut ChaCha8Rng,
    tiles: &[TileCoord],
    category: &Category,
    cfg: &PlatformConfig,
) -> Result<(TileCoord, TileCoord)> {
    let (lo, hi) = category.path_links.unwrap_or((3, usize::MAX));
    for _ in 0..MAX_ENDPOINT_DRAWS {
        let src = *tiles.choose(rng).expect("tiles");
        let dst = *tiles.choose(rng).expect("tiles");
        if src == dst {
            continue;
        }
        let links = src.manhattan(dst) as usize + 2;
        if (lo..=hi).contains(&links) {
            return Ok((src, dst));
        }
    }
    Err(Error::Config(format!(
        "{}: could not draw endpoints with {lo}..={hi} links on a {}x{} mesh",
        category.label, cfg.cols, cfg.rows
    )))
}

/// One analysed (and possibly simulated) flow of a generated set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub category: String,
    pub set: usize,
    pub flow: FlowId,
    pub rank: usize,
    pub size_bytes: u64,
    pub path_links: usize,
    pub c_ps: Picos,
    pub r_ps: Option<Picos>,
    pub rstar_ps: Option<Picos>,
    pub improvement_rel: Option<f64>,
    pub observed_min_ps: Option<Picos>,
    pub observed_avg_ps: Option<f64>,
    pub observed_max_ps: Option<Picos>,
}

/// Box-plot summary of one group of relative improvements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementStats {
    pub group: String,
    pub samples: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
    pub mean: f64,
    /// Values outside the 1.5·IQR fences.
    pub outliers: Vec<f64>,
    pub diverged: usize,
    pub schedulable_classic: usize,
    pub schedulable_tight: usize,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl ImprovementStats {
    pub fn from_rows<'a>(group: impl Into<String>, rows: impl IntoIterator<Item = &'a FlowRow>) -> Self {
        let rows: Vec<&FlowRow> = rows.into_iter().collect();
        let mut values: Vec<f64> = rows.iter().filter_map(|r| r.improvement_rel).collect();
        values.sort_by(f64::total_cmp);
        let diverged = rows.len() - values.len();
        let schedulable_classic = rows.iter().filter(|r| r.r_ps.is_some()).count();
        let schedulable_tight = rows.iter().filter(|r| r.rstar_ps.is_some()).count();
        if values.is_empty() {
            return ImprovementStats {
                group: group.into(),
                samples: 0,
                min: f64::NAN,
                p25: f64::NAN,
                median: f64::NAN,
                p75: f64::NAN,
                max: f64::NAN,
                mean: f64::NAN,
                outliers: vec![],
                diverged,
                schedulable_classic,
                schedulable_tight,
            };
        }
        let p25 = percentile(&values, 0.25);
        let p75 = percentile(&values, 0.75);
        let iqr = p75 - p25;
        let (lo, hi) = (p25 - 1.5 * iqr, p75 + 1.5 * iqr);
        ImprovementStats {
            group: group.into(),
            samples: values.len(),
            min: values[0],
            p25,
            median: percentile(&values, 0.5),
            p75,
            max: values[values.len() - 1],
            mean: values.iter().sum::<f64>() / values.len() as f64,
            outliers: values.iter().copied().filter(|&v| v < lo || v > hi).collect(),
            diverged,
            schedulable_classic,
            schedulable_tight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub rows: Vec<FlowRow>,
    /// One entry per x-axis group: categories, or priority ranks for the
    /// priority profile.
    pub stats: Vec<ImprovementStats>,
    /// Filled for the two-flow surface only.
    pub surface: Vec<SurfacePoint>,
}

impl ExperimentOutput {
    pub fn rows_in<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a FlowRow> + 'a {
        self.rows.iter().filter(move |r| r.category == category)
    }

    pub fn medians(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.median).collect()
    }
}

/// Generates, analyses and (for tightness) simulates every set of `spec`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    if spec.kind == ExperimentKind::TwoFlowSurface {
        return run_surface(spec);
    }
    let jobs: Vec<(usize, usize)> = (0..spec.categories.len())
        .flat_map(|c| (0..spec.sets_per_category).map(move |s| (c, s)))
        .collect();
    let per_set: Vec<Vec<FlowRow>> = jobs
        .par_iter()
        .map(|&(c, s)| run_set(spec, c, s))
        .collect::<Result<_>>()?;
    let rows: Vec<FlowRow> = per_set.into_iter().flatten().collect();

    let stats = if spec.kind == ExperimentKind::PriorityProfile {
        let max_rank = rows.iter().map(|r| r.rank).max().unwrap_or(0);
        let w = spec.rank_bucket;
        (1..=max_rank)
            .step_by(w)
            .map(|lo| {
                let hi = (lo + w - 1).min(max_rank);
                let group = if lo == hi {
                    format!("rank {lo}")
                } else {
                    format!("ranks {lo}-{hi}")
                };
                ImprovementStats::from_rows(group, rows.iter().filter(|r| (lo..=hi).contains(&r.rank)))
            })
            .collect()
    } else {
        spec.categories
            .iter()
            .map(|c| ImprovementStats::from_rows(c.label.clone(), rows.iter().filter(|r| r.category == c.label)))
            .collect()
    };
    Ok(ExperimentOutput {
        kind: spec.kind,
        rows,
        stats,
        surface: vec![],
    })
}

fn run_set(spec: &ExperimentSpec, c: usize, s: usize) -> Result<Vec<FlowRow>> {
    let category = &spec.categories[c];
    let fs = generate_flowset(spec, category, set_seed(spec.seed, c, s))?;
    let analysis = analyze_flowset(&fs, spec.analysis_options())?;
    let trace = match (spec.kind, &spec.sim) {
        (ExperimentKind::Tightness, Some(sim)) => Some(simulate(&fs, sim)?),
        (ExperimentKind::Tightness, None) => Some(simulate(&fs, &SimConfig::default())?),
        _ => None,
    };
    Ok(analysis
        .flows
        .iter()
        .enumerate()
        .map(|(i, rep)| {
            let obs = trace.as_ref().map(|t| &t.summaries[i]);
            FlowRow {
                category: category.label.clone(),
                set: s,
                flow: rep.id,
                rank: rep.rank,
                size_bytes: fs.flow(i).size_bytes,
                path_links: fs.path(i).len(),
                c_ps: rep.c_ps,
                r_ps: rep.r_classic.bound(),
                rstar_ps: rep.r_tight.bound(),
                improvement_rel: rep.improvement_rel,
                observed_min_ps: obs.and_then(|o| o.min_ps),
                observed_avg_ps: obs.and_then(|o| o.avg_ps),
                observed_max_ps: obs.and_then(|o| o.max_ps),
            }
        })
        .collect())
}

/// Where the contention domain sits on the higher-priority path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    /// Everything outside the CD precedes it (upper surface).
    AllPre,
    /// Everything outside the CD follows it (lower surface).
    AllPost,
}

/// Two contending flows described only by path-section lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoFlowGeometry {
    /// Decomposition of the higher-priority path w.r.t. the lower one.
    pub higher: PathDecomposition,
    /// `|L_2|`, at least `higher.cd`.
    pub lower_links: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub higher_links: usize,
    pub size_bytes: u64,
    pub split: Split,
    pub pre: usize,
    pub cd: usize,
    pub post: usize,
    pub r_ps: Picos,
    pub rstar_ps: Picos,
    pub improvement_abs_ps: Picos,
    pub improvement_rel: f64,
}

/// `R_2` and `R*_2` of the lower-priority flow when both flows carry
/// `size_bytes` and share `period_ps` (implicit deadline).
pub fn two_flow_wctt(
    platform: &PlatformConfig,
    geom: TwoFlowGeometry,
    size_bytes: u64,
    period_ps: Picos,
) -> Result<(Picos, Picos)> {
    if geom.higher.cd == 0 || geom.lower_links < geom.higher.cd {
        return Err(Error::Config(format!(
            "two-flow geometry {:?} has no valid contention domain",
            geom
        )));
    }
    let timing = platform.timing::<Picos>();
    let c1 = timing.basic_latency(geom.higher.total(), size_bytes);
    let c2 = timing.basic_latency(geom.lower_links, size_bytes);
    let i12 = timing.interference(c1, &geom.higher);
    let solve = |cost| {
        let fp = solve_fixed_point(
            c2,
            period_ps,
            &[Preemptor {
                period: period_ps,
                jitter: 0,
                cost,
            }],
        );
        if fp.converged() {
            Ok(fp.value())
        } else {
            Err(Error::Config(format!(
                "two-flow scenario diverges with period {period_ps} ps"
            )))
        }
    };
    Ok((solve(c1)?, solve(i12)?))
}

/// Relative improvement grid over `|L_1|` in `len_range` and the given sizes.
/// `|L_2| = |L_1|`; the CD is clamped to `|L_1|` for short paths.
pub fn two_flow_surface(
    platform: &PlatformConfig,
    len_range: (usize, usize),
    sizes: &[u64],
    cd_len: usize,
    split: Split,
    period_ps: Picos,
) -> Result<Vec<SurfacePoint>> {
    if cd_len == 0 {
        return Err(Error::Config("CD length must be at least 1".into()));
    }
    let mut out = Vec::new();
    for links in len_range.0.max(1)..=len_range.1 {
        let cd = cd_len.min(links);
        let rest = links - cd;
        let (pre, post) = match split {
            Split::AllPre => (rest, 0),
            Split::AllPost => (0, rest),
        };
        let geom = TwoFlowGeometry {
            higher: PathDecomposition { pre, cd, post },
            lower_links: links,
        };
        for &size in sizes {
            let (r, rs) = two_flow_wctt(platform, geom, size, period_ps)?;
            out.push(SurfacePoint {
                higher_links: links,
                size_bytes: size,
                split,
                pre,
                cd,
                post,
                r_ps: r,
                rstar_ps: rs,
                improvement_abs_ps: r - rs,
                improvement_rel: (r - rs) as f64 / r as f64,
            });
        }
    }
    Ok(out)
}

fn run_surface(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut surface = Vec::new();
    let mut stats = Vec::new();
    for c in &spec.categories {
        let (lo, hi) = c.size_bytes;
        let flit = spec.platform.flit_bytes;
        let sizes: Vec<u64> = (lo.div_ceil(flit)..=hi / flit).map(|k| k * flit).collect();
        let lens = c.path_links.unwrap_or((1, 16));
        let cd = c.cd_links.unwrap_or(1);
        for split in [Split::AllPre, Split::AllPost] {
            let pts = two_flow_surface(&spec.platform, lens, &sizes, cd, split, MS)?;
            let rows: Vec<FlowRow> = pts
                .iter()
                .map(|p| FlowRow {
                    category: c.label.clone(),
                    set: 0,
                    flow: FlowId(2),
                    rank: 2,
                    size_bytes: p.size_bytes,
                    path_links: p.higher_links,
                    c_ps: 0,
                    r_ps: Some(p.r_ps),
                    rstar_ps: Some(p.rstar_ps),
                    improvement_rel: Some(p.improvement_rel),
                    observed_min_ps: None,
                    observed_avg_ps: None,
                    observed_max_ps: None,
                })
                .collect();
            let label = match split {
                Split::AllPre => format!("{} all-pre", c.label),
                Split::AllPost => format!("{} all-post", c.label),
            };
            stats.push(ImprovementStats::from_rows(label, &rows));
            surface.extend(pts);
        }
    }
    Ok(ExperimentOutput {
        kind: spec.kind,
        rows: vec![],
        stats,
        surface,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert_eq!(percentile(&v, 0.25), 1.0);
        assert_eq!(percentile(&[0.0, 1.0], 0.5), 0.5);
        assert_eq!(percentile(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn generated_sizes_respect_category() {
        let spec = ExperimentSpec::flow_sizes();
        let mut cat = spec.categories[1].clone();
        assert_eq!(cat.size_bytes, (16, 64));
        cat.flows = Some(200);
        let fs = generate_flowset(&spec, &cat, 7).unwrap();
        assert_eq!(fs.len(), 200);
        assert!(fs.flows().iter().all(|f| (16..=64).contains(&f.size_bytes)));
    }

    #[test]
    fn generated_paths_respect_category() {
        let spec = ExperimentSpec::path_lengths();
        let cat = &spec.categories[1];
        assert_eq!(cat.path_links, Some((3, 6)));
        let fs = generate_flowset(&spec, cat, 11).unwrap();
        assert!((0..fs.len()).all(|i| (3..=6).contains(&fs.path(i).len())));
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = ExperimentSpec::priorities();
        let a = generate_flowset(&spec, &spec.categories[0], 99).unwrap();
        let b = generate_flowset(&spec, &spec.categories[0], 99).unwrap();
        let c = generate_flowset(&spec, &spec.categories[0], 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unattainable_path_length_is_a_config_error() {
        let mut spec = ExperimentSpec::path_lengths();
        spec.platform = spec.platform.with_size(2, 2);
        assert!(spec.validate().is_ok());
        let cat = Category::sizes("x", 1, 8).with_paths(5, 6);
        spec.categories = vec![cat.clone()];
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        assert!(matches!(generate_flowset(&spec, &cat, 1), Err(Error::Config(_))));
    }

    #[test]
    fn overloaded_sets_get_rescaled() {
        let mut spec = ExperimentSpec::priorities();
        spec.periods = PeriodModel::Uniform { min_ps: 20_000, max_ps: 40_000 };
        let fs = generate_flowset(&spec, &spec.categories[0], 3).unwrap();
        assert!(fs.flows().iter().any(|f| f.period_ps > 40_000));
        let res = analyze_flowset(&fs, spec.analysis_options()).unwrap();
        assert!(res.schedulable(Method::Classic));
    }

    #[test]
    fn two_flow_worked_values() {
        let p = PlatformConfig::reference();
        let g = |pre, cd, post, lower| TwoFlowGeometry {
            higher: PathDecomposition { pre, cd, post },
            lower_links: lower,
        };
        assert_eq!(two_flow_wctt(&p, g(3, 1, 3, 3), 48, MS).unwrap(), (20_000, 14_000));
        assert_eq!(two_flow_wctt(&p, g(3, 1, 3, 3), 160, MS).unwrap(), (27_000, 21_000));
        assert_eq!(two_flow_wctt(&p, g(4, 1, 2, 3), 48, MS).unwrap(), (20_000, 12_500));
        assert_eq!(two_flow_wctt(&p, g(2, 3, 2, 5), 48, MS).unwrap(), (24_000, 20_500));
        assert_eq!(two_flow_wctt(&p, g(6, 1, 0, 7), 48, MS).unwrap(), (28_000, 17_500));
        assert!(two_flow_wctt(&p, g(3, 0, 3, 3), 48, MS).is_err());
    }

    #[test]
    fn surface_full_overlap_is_zero() {
        let p = PlatformConfig::reference();
        let pts = two_flow_surface(&p, (1, 8), &[16, 48, 1024], 5, Split::AllPre, MS).unwrap();
        for pt in pts.iter().filter(|pt| pt.cd == pt.higher_links) {
            assert_eq!(pt.improvement_rel, 0.0);
        }
        assert!(pts.iter().any(|pt| pt.improvement_rel > 0.0));
    }
}
