//! Periodic traffic flows and flow-sets.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::platform::{xy_route, Link, Path, PlatformConfig, TileCoord};
use crate::Picos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

/// A periodic flow. A larger `priority` preempts a smaller one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flow {
    pub id: FlowId,
    pub src: TileCoord,
    pub dst: TileCoord,
    pub size_bytes: u64,
    pub priority: u32,
    pub period_ps: Picos,
    pub deadline_ps: Picos,
    pub release_jitter_ps: Picos,
}

impl Flow {
    /// A flow with an implicit deadline and no release jitter.
    pub fn new(
        id: u32,
        src: TileCoord,
        dst: TileCoord,
        size_bytes: u64,
        priority: u32,
        period_ps: Picos,
    ) -> Self {
        Flow {
            id: FlowId(id),
            src,
            dst,
            size_bytes,
            priority,
            period_ps,
            deadline_ps: period_ps,
            release_jitter_ps: 0,
        }
    }

    pub fn with_jitter(mut self, jitter_ps: Picos) -> Self {
        self.release_jitter_ps = jitter_ps;
        self
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidFlow {
            flow: self.id.to_string(),
            reason: reason.into(),
        }
    }

    /// Checks the per-flow invariants and returns the flow's XY path.
    pub fn route(&self, cfg: &PlatformConfig) -> Result<Path> {
        if self.size_bytes == 0 {
            return Err(self.invalid("size must be at least 1 byte"));
        }
        if self.period_ps == 0 {
            return Err(self.invalid("period must be positive"));
        }
        if self.deadline_ps != self.period_ps {
            return Err(self.invalid(format!(
                "deadline {} ps differs from period {} ps (only implicit deadlines are supported)",
                self.deadline_ps, self.period_ps
            )));
        }
        xy_route(self.src, self.dst, cfg).map_err(|e| match e {
            Error::Config(msg) => self.invalid(msg),
            other => other,
        })
    }
}

/// Basic network latency of `flow` on `cfg`, in picoseconds.
pub fn basic_latency(flow: &Flow, cfg: &PlatformConfig) -> Result<Picos> {
    let path = flow.route(cfg)?;
    Ok(cfg.timing::<Picos>().basic_latency(path.len(), flow.size_bytes))
}

/// A validated collection of flows on one platform, with their routes and
/// direct-interference relations precomputed.
#[derive(Debug, Clone)]
pub struct FlowSet {
    platform: PlatformConfig,
    flows: Vec<Flow>,
    paths: Vec<Path>,
    latencies: Vec<Picos>,
    direct: Vec<Vec<usize>>,
}

impl PartialEq for FlowSet {
    fn eq(&self, other: &Self) -> bool {
        self.platform == other.platform && self.flows == other.flows
    }
}

impl FlowSet {
    pub fn new(platform: PlatformConfig, flows: Vec<Flow>) -> Result<Self> {
        platform.validate()?;
        if flows.is_empty() {
            return Err(Error::InvalidFlowSet("no flows".into()));
        }
        let mut ids = HashSet::new();
        let mut priorities = HashMap::new();
        for f in &flows {
            if !ids.insert(f.id) {
                return Err(Error::InvalidFlowSet(format!("duplicate flow id {}", f.id)));
            }
            if let Some(other) = priorities.insert(f.priority, f.id) {
                return Err(Error::InvalidFlow {
                    flow: f.id.to_string(),
                    reason: format!("priority {} already used by {}", f.priority, other),
                });
            }
        }
        let paths = flows
            .iter()
            .map(|f| f.route(&platform))
            .collect::<Result<Vec<_>>>()?;
        let timing = platform.timing::<Picos>();
        let latencies = flows
            .iter()
            .zip(&paths)
            .map(|(f, p)| timing.basic_latency(p.len(), f.size_bytes))
            .collect();

        // Users of every link, then pairwise overlap via the link index.
        let mut users: HashMap<Link, Vec<usize>> = HashMap::new();
        for (i, p) in paths.iter().enumerate() {
            for l in p.links() {
                users.entry(*l).or_default().push(i);
            }
        }
        let direct = (0..flows.len())
            .map(|i| {
                let mut set: Vec<usize> = paths[i]
                    .links()
                    .iter()
                    .flat_map(|l| users[l].iter().copied())
                    .filter(|&j| flows[j].priority > flows[i].priority)
                    .collect();
                set.sort_unstable();
                set.dedup();
                set
            })
            .collect();

        Ok(FlowSet {
            platform,
            flows,
            paths,
            latencies,
            direct,
        })
    }

    pub fn platform(&self) -> &PlatformConfig {
        &self.platform
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn flow(&self, idx: usize) -> &Flow {
        &self.flows[idx]
    }

    pub fn path(&self, idx: usize) -> &Path {
        &self.paths[idx]
    }

    pub fn index_of(&self, id: FlowId) -> Option<usize> {
        self.flows.iter().position(|f| f.id == id)
    }

    /// Basic latency `C_i` of flow `idx`.
    pub fn basic_latency(&self, idx: usize) -> Picos {
        self.latencies[idx]
    }

    /// Indices of the directly interfering flows of `idx`, ascending.
    pub fn direct_interferers(&self, idx: usize) -> &[usize] {
        &self.direct[idx]
    }

    /// Flows in descending priority order.
    pub fn by_priority(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.flows.len()).collect();
        order.sort_by(|&a, &b| self.flows[b].priority.cmp(&self.flows[a].priority));
        order
    }

    /// 1-based priority rank of every flow (1 = highest priority).
    pub fn priority_ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.flows.len()];
        for (rank, idx) in self.by_priority().into_iter().enumerate() {
            ranks[idx] = rank + 1;
        }
        ranks
    }

    /// A copy with every period (and implicit deadline) replaced by `f(period)`.
    pub fn map_periods(&self, f: impl Fn(Picos) -> Picos) -> Result<Self> {
        let flows = self
            .flows
            .iter()
            .map(|fl| {
                let p = f(fl.period_ps);
                Flow {
                    period_ps: p,
                    deadline_ps: p,
                    ..fl.clone()
                }
            })
            .collect();
        FlowSet::new(self.platform, flows)
    }

    /// Keeps only the flows selected by `keep`.
    pub fn subset(&self, keep: impl Fn(&Flow) -> bool) -> Result<Self> {
        FlowSet::new(
            self.platform,
            self.flows.iter().filter(|f| keep(f)).cloned().collect(),
        )
    }
}

/// `F_D(f)`: flows of `fs` with higher priority than `f` whose paths share a
/// link with `f`'s path.
pub fn direct_interference_set<'a>(f: &Flow, fs: &'a FlowSet) -> Result<Vec<&'a Flow>> {
    let path = f.route(fs.platform())?;
    Ok(fs
        .flows()
        .iter()
        .zip(&fs.paths)
        .filter(|(g, p)| g.priority > f.priority && p.shares_link_with(&path))
        .map(|(g, _)| g)
        .collect())
}
