//! Cycle-accurate model of the wormhole-switched, priority-preemptive,
//! virtual-channel mesh.
//!
//! Timing:
//! - a header waits `d_r` cycles in every router before it may leave;
//! - every flit occupies a link for `d_l` cycles;
//! - each output link grants, per cycle, the highest-priority flow whose head
//!   flit is ready and whose downstream VC has a credit (flit-level
//!   preemption);
//! - a credit travels back upstream `credit_delay` cycles after its flit
//!   leaves a buffer.
//!
//! Every flow owns one VC per input port on its path (the platform is
//! assumed to provide enough VCs); `vcs_per_port` caps how many flows may
//! hold buffered flits at one port at once.
//!
//! Time advances from event to event (releases, link completions, header
//! routing completions, credit returns), which is exact because nothing can
//! change state between two events.

use std::collections::VecDeque;

use num_integer::Integer;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowId, FlowSet};
use crate::platform::Link;
use crate::Picos;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    HyperPeriods(u64),
    Cycles(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReleasePolicy {
    /// Every flow releases at 0, T, 2T, …
    Synchronous,
    /// Each flow gets a random phase in `[0, T)`.
    Phased { seed: u64 },
    /// Nominal synchronous releases, each delayed by a random amount in
    /// `[0, J^R]`.
    Jittered { seed: u64 },
    /// Explicit per-flow phase in cycles, in flow-set order.
    Offsets(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Flits per VC buffer.
    pub vc_depth: usize,
    pub credit_delay_cycles: u64,
    /// Maximum flows buffered at one input port; `None` means one VC per flow.
    pub vcs_per_port: Option<usize>,
    pub horizon: Horizon,
    pub release: ReleasePolicy,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            vc_depth: 4,
            credit_delay_cycles: 1,
            vcs_per_port: None,
            horizon: Horizon::HyperPeriods(2),
            release: ReleasePolicy::Synchronous,
        }
    }
}

/// One packet and its fate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub flow_id: FlowId,
    pub release_ps: Picos,
    /// Tail arrival at the destination core; `None` when censored.
    pub completion_ps: Option<Picos>,
    pub latency_ps: Option<Picos>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummaryStatus {
    Observed,
    /// No packet of the flow completed within the horizon.
    Censored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub flow_id: FlowId,
    pub released: usize,
    pub completed: usize,
    pub censored: usize,
    pub status: SummaryStatus,
    pub min_ps: Option<Picos>,
    pub avg_ps: Option<f64>,
    pub max_ps: Option<Picos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub horizon_ps: Picos,
    pub packets: Vec<PacketRecord>,
    /// Same order as the flow-set.
    pub summaries: Vec<FlowSummary>,
}

impl SimTrace {
    pub fn summary(&self, id: FlowId) -> Option<&FlowSummary> {
        self.summaries.iter().find(|s| s.flow_id == id)
    }

    /// Observed latencies of one flow, in release order.
    pub fn latencies(&self, id: FlowId) -> Vec<Picos> {
        self.packets
            .iter()
            .filter(|p| p.flow_id == id)
            .filter_map(|p| p.latency_ps)
            .collect()
    }
}

/// Runs `fs` under `cfg` and collects per-packet latencies.
pub fn simulate(fs: &FlowSet, cfg: &SimConfig) -> Result<SimTrace> {
    let mut sim = Simulator::new(fs, cfg)?;
    while sim.step()?.is_some() {}
    Ok(sim.finish())
}

/// Least common multiple of all periods, in cycles.
pub fn hyper_period_cycles(fs: &FlowSet) -> Result<u64> {
    let clock = fs.platform().clock_period_ps;
    fs.flows().iter().try_fold(1u64, |acc, f| {
        if f.period_ps % clock != 0 {
            return Err(Error::Config(format!(
                "period of {} ({} ps) is not a whole number of {} ps cycles",
                f.id, f.period_ps, clock
            )));
        }
        let p = f.period_ps / clock;
        (acc / acc.gcd(&p))
            .checked_mul(p)
            .ok_or_else(|| Error::Config("hyper-period does not fit in 64 bits".into()))
    })
}

/// Grant decision for one link in one cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grant {
    pub cycle: u64,
    pub link: Link,
    /// Flow index that won the link.
    pub flow: usize,
    /// Every flow that had a ready flit with credit for this link.
    pub contenders: Vec<usize>,
}

/// Highest-priority candidate; `None` if there is none.
pub fn arbitrate(candidates: &[(usize, u32)]) -> Option<usize> {
    candidates
        .iter()
        .max_by_key(|(_, prio)| *prio)
        .map(|(flow, _)| *flow)
}

/// Flit counts for the conservation check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlitCounters {
    /// Flits of released packets (waiting at the source or beyond).
    pub released: u64,
    /// Flits that have left their source core.
    pub injected: u64,
    /// Flits that have been placed on their final link.
    pub ejected: u64,
    /// Flits buffered in routers or on router-bound links.
    pub in_network: u64,
    /// Flits still waiting at a source core.
    pub at_source: u64,
}

#[derive(Debug, Clone, Copy)]
struct Flit {
    packet: usize,
    head: bool,
    tail: bool,
    ready_at: u64,
}

struct FlowState {
    priority: u32,
    links: Vec<usize>,
    flits_per_packet: u64,
    releases: Vec<u64>,
    next_release: usize,
    source: VecDeque<Flit>,
    /// `buffers[h]`: VC at the router the `h`-th link leads to (excludes the sink).
    buffers: Vec<VecDeque<Flit>>,
    credits: Vec<usize>,
}

struct LinkState {
    link: Link,
    busy_until: u64,
    users: Vec<(usize, usize)>,
}

/// Stepwise simulator; [`simulate`] drives it to the horizon.
pub struct Simulator<'a> {
    fs: &'a FlowSet,
    link_cycles: u64,
    router_cycles: u64,
    credit_delay: u64,
    vc_depth: usize,
    vcs_per_port: Option<usize>,
    horizon: u64,
    now: u64,
    started: bool,
    flows: Vec<FlowState>,
    links: Vec<LinkState>,
    pending_credits: VecDeque<(u64, usize, usize)>,
    packets: Vec<(usize, u64, Option<u64>)>,
    counters: FlitCounters,
}

impl<'a> Simulator<'a> {
    pub fn new(fs: &'a FlowSet, cfg: &SimConfig) -> Result<Self> {
        if cfg.vc_depth == 0 {
            return Err(Error::Config("VC depth must be at least one flit".into()));
        }
        if cfg.credit_delay_cycles == 0 {
            return Err(Error::Config("credit delay must be at least one cycle".into()));
        }
        let platform = fs.platform();
        let clock = platform.clock_period_ps;
        let hyper = hyper_period_cycles(fs)?;
        let horizon = match cfg.horizon {
            Horizon::Cycles(c) => c,
            Horizon::HyperPeriods(k) => hyper
                .checked_mul(k)
                .ok_or_else(|| Error::Config("horizon does not fit in 64 bits".into()))?,
        };

        let mut rng = match cfg.release {
            ReleasePolicy::Phased { seed } | ReleasePolicy::Jittered { seed } => {
                Some(ChaCha8Rng::seed_from_u64(seed))
            }
            _ => None,
        };
        if let ReleasePolicy::Offsets(ref o) = cfg.release {
            if o.len() != fs.len() {
                return Err(Error::Config(format!(
                    "{} release offsets given for {} flows",
                    o.len(),
                    fs.len()
                )));
            }
        }

        let mut link_ids: std::collections::HashMap<Link, usize> = Default::default();
        let mut links: Vec<LinkState> = Vec::new();
        let timing = platform.timing::<u64>();
        let mut flows = Vec::with_capacity(fs.len());
        for (i, f) in fs.flows().iter().enumerate() {
            let path = fs.path(i);
            let ids: Vec<usize> = path
                .links()
                .iter()
                .enumerate()
                .map(|(h, l)| {
                    let id = *link_ids.entry(*l).or_insert_with(|| {
                        links.push(LinkState {
                            link: *l,
                            busy_until: 0,
                            users: Vec::new(),
                        });
                        links.len() - 1
                    });
                    links[id].users.push((i, h));
                    id
                })
                .collect();

            let period = f.period_ps / clock;
            let jitter = f.release_jitter_ps / clock;
            let phase = match &cfg.release {
                ReleasePolicy::Synchronous | ReleasePolicy::Jittered { .. } => 0,
                ReleasePolicy::Phased { .. } => rng.as_mut().expect("seeded").gen_range(0..period),
                ReleasePolicy::Offsets(o) => o[i],
            };
            let mut releases = Vec::new();
            let mut nominal = phase;
            while nominal < horizon {
                let delay = match cfg.release {
                    ReleasePolicy::Jittered { .. } if jitter > 0 => {
                        rng.as_mut().expect("seeded").gen_range(0..=jitter)
                    }
                    _ => 0,
                };
                if nominal + delay < horizon {
                    releases.push(nominal + delay);
                }
                nominal += period;
            }

            let hops = path.len();
            flows.push(FlowState {
                priority: f.priority,
                links: ids,
                flits_per_packet: 1 + timing.payload_flits(f.size_bytes),
                releases,
                next_release: 0,
                source: VecDeque::new(),
                buffers: vec![VecDeque::new(); hops - 1],
                credits: vec![cfg.vc_depth; hops - 1],
            });
        }

        Ok(Simulator {
            fs,
            link_cycles: platform.link_cycles(),
            router_cycles: platform.router_cycles(),
            credit_delay: cfg.credit_delay_cycles,
            vc_depth: cfg.vc_depth,
            vcs_per_port: cfg.vcs_per_port,
            horizon,
            now: 0,
            started: false,
            flows,
            links,
            pending_credits: VecDeque::new(),
            packets: Vec::new(),
            counters: FlitCounters::default(),
        })
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn counters(&self) -> FlitCounters {
        let mut c = self.counters;
        c.in_network = self
            .flows
            .iter()
            .flat_map(|f| f.buffers.iter())
            .map(|b| b.len() as u64)
            .sum();
        c.at_source = self.flows.iter().map(|f| f.source.len() as u64).sum();
        c
    }

    /// Largest buffer occupancy seen right now, for the depth invariant.
    pub fn max_buffer_occupancy(&self) -> usize {
        self.flows
            .iter()
            .flat_map(|f| f.buffers.iter())
            .map(VecDeque::len)
            .max()
            .unwrap_or(0)
    }

    pub fn vc_depth(&self) -> usize {
        self.vc_depth
    }

    /// Advances to the next event and processes it. Returns the grants made,
    /// or `None` once the horizon is reached.
    pub fn step(&mut self) -> Result<Option<Vec<Grant>>> {
        if self.started {
            match self.next_event() {
                Some(t) if t < self.horizon => self.now = t,
                _ => return Ok(None),
            }
        } else {
            self.started = true;
            if self.horizon == 0 {
                return Ok(None);
            }
        }
        let t = self.now;

        while let Some(&(at, f, h)) = self.pending_credits.front() {
            if at > t {
                break;
            }
            self.flows[f].credits[h] += 1;
            self.pending_credits.pop_front();
        }

        for (i, fl) in self.flows.iter_mut().enumerate() {
            while fl.next_release < fl.releases.len() && fl.releases[fl.next_release] <= t {
                let release = fl.releases[fl.next_release];
                fl.next_release += 1;
                let packet = self.packets.len();
                self.packets.push((i, release, None));
                let n = fl.flits_per_packet;
                for k in 0..n {
                    fl.source.push_back(Flit {
                        packet,
                        head: k == 0,
                        tail: k + 1 == n,
                        ready_at: release,
                    });
                }
                self.counters.released += n;
            }
        }

        let mut grants = Vec::new();
        for l in 0..self.links.len() {
            if self.links[l].busy_until > t {
                continue;
            }
            let mut candidates: Vec<(usize, u32)> = Vec::new();
            let mut hop_of = Vec::new();
            for &(f, h) in &self.links[l].users {
                let fl = &self.flows[f];
                let queue = if h == 0 { &fl.source } else { &fl.buffers[h - 1] };
                let Some(flit) = queue.front() else { continue };
                let last = h + 1 == fl.links.len();
                if flit.ready_at <= t && (last || fl.credits[h] > 0) {
                    candidates.push((f, fl.priority));
                    hop_of.push((f, h));
                }
            }
            let Some(winner) = arbitrate(&candidates) else { continue };
            let h = hop_of.iter().find(|(f, _)| *f == winner).expect("candidate").1;
            self.grant(l, winner, h, t);
            grants.push(Grant {
                cycle: t,
                link: self.links[l].link,
                flow: winner,
                contenders: candidates.iter().map(|c| c.0).collect(),
            });
        }

        if let Some(cap) = self.vcs_per_port {
            for ls in &self.links {
                let held = ls
                    .users
                    .iter()
                    .filter(|&&(f, h)| {
                        let fl = &self.flows[f];
                        h + 1 < fl.links.len() && !fl.buffers[h].is_empty()
                    })
                    .count();
                if held > cap {
                    return Err(Error::ModelViolation(format!(
                        "{held} flows hold VCs behind link {} at cycle {t}, only {cap} available",
                        ls.link
                    )));
                }
            }
        }
        Ok(Some(grants))
    }

    fn grant(&mut self, l: usize, f: usize, h: usize, t: u64) {
        let dl = self.link_cycles;
        let fl = &mut self.flows[f];
        let hops = fl.links.len();
        let mut flit = if h == 0 {
            self.counters.injected += 1;
            fl.source.pop_front()
        } else {
            fl.buffers[h - 1].pop_front()
        }
        .expect("granted flit exists");
        if h > 0 {
            self.pending_credits.push_back((t + self.credit_delay, f, h - 1));
        }
        if h + 1 == hops {
            self.counters.ejected += 1;
            if flit.tail {
                self.packets[flit.packet].2 = Some(t + dl);
            }
        } else {
            fl.credits[h] -= 1;
            flit.ready_at = t + dl + if flit.head { self.router_cycles } else { 0 };
            fl.buffers[h].push_back(flit);
        }
        self.links[l].busy_until = t + dl;
    }

    fn next_event(&self) -> Option<u64> {
        let t = self.now;
        let later = |x: u64| (x > t).then_some(x);
        let credits = self.pending_credits.front().map(|c| c.0);
        let links = self.links.iter().filter_map(|l| later(l.busy_until));
        let flits = self.flows.iter().flat_map(|f| {
            std::iter::once(&f.source)
                .chain(f.buffers.iter())
                .filter_map(|q| q.front())
                .filter_map(|fl| later(fl.ready_at))
        });
        let releases = self
            .flows
            .iter()
            .filter_map(|f| f.releases.get(f.next_release).copied());
        credits
            .into_iter()
            .chain(links)
            .chain(flits)
            .chain(releases)
            .filter(|&x| x > t)
            .min()
    }

    /// Collects the trace; packets whose tail has not arrived by the horizon
    /// are censored.
    pub fn finish(self) -> SimTrace {
        let clock = self.fs.platform().clock_period_ps;
        let horizon = self.horizon;
        let packets: Vec<PacketRecord> = self
            .packets
            .iter()
            .map(|&(f, release, done)| {
                let done = done.filter(|&d| d <= horizon);
                PacketRecord {
                    flow_id: self.fs.flow(f).id,
                    release_ps: release * clock,
                    completion_ps: done.map(|d| d * clock),
                    latency_ps: done.map(|d| (d - release) * clock),
                }
            })
            .collect();
        let summaries = self
            .fs
            .flows()
            .iter()
            .map(|fl| {
                let mine: Vec<&PacketRecord> =
                    packets.iter().filter(|p| p.flow_id == fl.id).collect();
                let lat: Vec<Picos> = mine.iter().filter_map(|p| p.latency_ps).collect();
                let completed = lat.len();
                FlowSummary {
                    flow_id: fl.id,
                    released: mine.len(),
                    completed,
                    censored: mine.len() - completed,
                    status: if completed > 0 {
                        SummaryStatus::Observed
                    } else {
                        SummaryStatus::Censored
                    },
                    min_ps: lat.iter().copied().min(),
                    avg_ps: (completed > 0)
                        .then(|| lat.iter().map(|&v| v as f64).sum::<f64>() / completed as f64),
                    max_ps: lat.iter().copied().max(),
                }
            })
            .collect();
        SimTrace {
            horizon_ps: horizon * clock,
            packets,
            summaries,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Flow;
    use crate::platform::{PlatformConfig, TileCoord};

    fn t(x: u32, y: u32) -> TileCoord {
        TileCoord::new(x, y)
    }

    #[test]
    fn arbitration_picks_highest_priority() {
        assert_eq!(arbitrate(&[]), None);
        assert_eq!(arbitrate(&[(3, 1), (5, 9), (1, 4)]), Some(5));
    }

    #[test]
    fn single_flow_matches_basic_latency() {
        let cfg = PlatformConfig::reference();
        let fs = FlowSet::new(cfg, vec![Flow::new(1, t(0, 0), t(5, 0), 48, 1, 100_000)]).unwrap();
        let trace = simulate(&fs, &SimConfig::default()).unwrap();
        assert_eq!(trace.latencies(FlowId(1)), vec![14_000, 14_000]);
        let s = &trace.summaries[0];
        assert_eq!((s.completed, s.censored, s.status), (2, 0, SummaryStatus::Observed));
    }

    #[test]
    fn zero_horizon_censors_everything() {
        let cfg = PlatformConfig::reference();
        let fs = FlowSet::new(cfg, vec![Flow::new(1, t(0, 0), t(5, 0), 48, 1, 100_000)]).unwrap();
        let sim = SimConfig {
            horizon: Horizon::Cycles(0),
            ..Default::default()
        };
        let trace = simulate(&fs, &sim).unwrap();
        assert!(trace.packets.is_empty());
        assert_eq!(trace.summaries[0].status, SummaryStatus::Censored);
    }

    #[test]
    fn unfinished_packets_are_censored_not_dropped() {
        let cfg = PlatformConfig::reference();
        let fs = FlowSet::new(cfg, vec![Flow::new(1, t(0, 0), t(5, 0), 48, 1, 100_000)]).unwrap();
        let sim = SimConfig {
            horizon: Horizon::Cycles(10),
            ..Default::default()
        };
        let trace = simulate(&fs, &sim).unwrap();
        assert_eq!(trace.packets.len(), 1);
        assert_eq!(trace.packets[0].latency_ps, None);
        assert_eq!(trace.summaries[0].censored, 1);
    }

    #[test]
    fn periods_must_be_whole_cycles() {
        let cfg = PlatformConfig::reference();
        let fs = FlowSet::new(cfg, vec![Flow::new(1, t(0, 0), t(1, 0), 8, 1, 100_250)]).unwrap();
        assert!(matches!(simulate(&fs, &SimConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn vc_exhaustion_is_reported() {
        let cfg = PlatformConfig::reference();
        let flows = (0..3)
            .map(|k| Flow::new(k + 1, t(0, k), t(5, 0), 256, k + 1, 1_000_000))
            .collect();
        let fs = FlowSet::new(cfg, flows).unwrap();
        let sim = SimConfig {
            vcs_per_port: Some(1),
            ..Default::default()
        };
        assert!(matches!(simulate(&fs, &sim), Err(Error::ModelViolation(_))));
        let sim = SimConfig {
            vcs_per_port: Some(3),
            ..Default::default()
        };
        assert!(simulate(&fs, &sim).is_ok());
    }

    #[test]
    fn hyper_period() {
        let cfg = PlatformConfig::reference();
        let fs = FlowSet::new(
            cfg,
            vec![
                Flow::new(1, t(0, 0), t(1, 0), 8, 1, 3_000),
                Flow::new(2, t(0, 1), t(1, 1), 8, 2, 2_000),
            ],
        )
        .unwrap();
        assert_eq!(hyper_period_cycles(&fs).unwrap(), 12);
    }
}
