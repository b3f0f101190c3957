//! Worst-case traversal times: the classic per-preemption `C_j` charge and
//! the tighter contention-domain-aware `I_{j,i}` charge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowId, FlowSet};
use crate::platform::decompose;
use crate::timing::{solve_fixed_point, FixedPoint, Preemptor};
use crate::Picos;

/// How each directly interfering flow is charged per preemption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Full basic latency `C_j`.
    Classic,
    /// `C_j` minus the pre-CD header and post-CD tail traversal.
    Tight,
}

/// Interference jitter `J^I` used for the higher-priority flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterPolicy {
    /// `J^I = 0` everywhere.
    Zero,
    /// `J^I_j = R_j − C_j` whenever `f_j` suffers interference from a flow
    /// that does not directly interfere with the flow under analysis.
    #[default]
    ShiBurns,
}

/// Which response times feed `J^I_j` under [`JitterPolicy::ShiBurns`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterSource {
    /// Each method uses its own bounds (`R` for classic, `R*` for tight).
    #[default]
    SameMethod,
    /// Both methods use the classic `R_j`.
    Classic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub jitter: JitterPolicy,
    pub jitter_source: JitterSource,
}

impl AnalysisOptions {
    pub fn zero_jitter() -> Self {
        AnalysisOptions {
            jitter: JitterPolicy::Zero,
            ..Default::default()
        }
    }
}

/// Interference one packet of `higher` causes to `lower` under both methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterferenceTerm {
    pub higher_flow: FlowId,
    pub lower_flow: FlowId,
    pub full_c_ps: Picos,
    pub sigma_pre_ps: Picos,
    pub sigma_post_ps: Picos,
    pub tight_i_ps: Picos,
}

impl InterferenceTerm {
    /// `σ_{j,i} = C_j − I_{j,i}`.
    pub fn sigma(&self) -> Picos {
        self.sigma_pre_ps + self.sigma_post_ps
    }
}

/// Interference term of flow `higher` on flow `lower` (indices into `fs`).
/// The pair must contend; callers filter through the interference set.
pub fn interference_term(fs: &FlowSet, higher: usize, lower: usize) -> Result<InterferenceTerm> {
    let d = decompose(fs.path(higher), fs.path(lower))?.ok_or_else(|| {
        Error::ModelViolation(format!(
            "{} and {} share no link",
            fs.flow(higher).id,
            fs.flow(lower).id
        ))
    })?;
    let timing = fs.platform().timing::<Picos>();
    let full = fs.basic_latency(higher);
    let sigma_pre = timing.sigma_pre(&d);
    let sigma_post = timing.sigma_post(&d);
    Ok(InterferenceTerm {
        higher_flow: fs.flow(higher).id,
        lower_flow: fs.flow(lower).id,
        full_c_ps: full,
        sigma_pre_ps: sigma_pre,
        sigma_post_ps: sigma_post,
        tight_i_ps: full - sigma_pre - sigma_post,
    })
}

/// Release and interference jitter of one flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Jitter {
    pub release_ps: Picos,
    pub interference_ps: Picos,
}

/// Outcome of one response-time computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "ps", rename_all = "kebab-case")]
pub enum Wctt {
    Bounded(Picos),
    /// The iteration passed the deadline; carries the last iterate.
    Diverged(Picos),
}

impl Wctt {
    pub fn bound(&self) -> Option<Picos> {
        match *self {
            Wctt::Bounded(v) => Some(v),
            Wctt::Diverged(_) => None,
        }
    }

    pub fn last(&self) -> Picos {
        match *self {
            Wctt::Bounded(v) | Wctt::Diverged(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WcttSolution {
    pub wctt: Wctt,
    pub iterates: Vec<Picos>,
    /// `(interferer index, ⌈(R + J^R + J^I)/T⌉)` at the final iterate.
    pub preemptions: Vec<(usize, u64)>,
}

impl WcttSolution {
    pub fn iterations(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }
}

/// Solves the response-time recurrence of flow `idx` with `method`.
/// `jitters[j]` supplies `J^R_j` and `J^I_j` for every interferer `j`.
pub fn fixed_point_wctt(
    fs: &FlowSet,
    idx: usize,
    method: Method,
    jitters: &[Jitter],
) -> Result<WcttSolution> {
    let interferers = fs.direct_interferers(idx);
    let preemptors = interferers
        .iter()
        .map(|&j| {
            let cost = match method {
                Method::Classic => fs.basic_latency(j),
                Method::Tight => interference_term(fs, j, idx)?.tight_i_ps,
            };
            Ok(Preemptor {
                period: fs.flow(j).period_ps,
                jitter: jitters[j].release_ps + jitters[j].interference_ps,
                cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let flow = fs.flow(idx);
    let fp: FixedPoint<Picos> =
        solve_fixed_point(fs.basic_latency(idx), flow.deadline_ps, &preemptors);
    let value = fp.value();
    let preemptions = interferers
        .iter()
        .zip(&preemptors)
        .map(|(&j, p)| (j, p.count(value)))
        .collect();
    Ok(WcttSolution {
        wctt: if fp.converged() {
            Wctt::Bounded(value)
        } else {
            Wctt::Diverged(value)
        },
        iterates: fp.iterates,
        preemptions,
    })
}

/// Per-flow analysis record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub id: FlowId,
    pub priority: u32,
    /// 1 = highest priority in the set.
    pub rank: usize,
    pub deadline_ps: Picos,
    pub c_ps: Picos,
    pub r_classic: Wctt,
    pub r_tight: Wctt,
    pub schedulable_classic: bool,
    pub schedulable_tight: bool,
    /// `R − R*`, present when both methods converge.
    pub improvement_abs_ps: Option<Picos>,
    /// `(R − R*) / R`, present when both methods converge.
    pub improvement_rel: Option<f64>,
    pub iterations_classic: usize,
    pub iterations_tight: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    /// Same order as the flow-set.
    pub flows: Vec<FlowReport>,
}

impl AnalysisResult {
    pub fn schedulable(&self, method: Method) -> bool {
        self.flows.iter().all(|f| match method {
            Method::Classic => f.schedulable_classic,
            Method::Tight => f.schedulable_tight,
        })
    }

    pub fn get(&self, id: FlowId) -> Option<&FlowReport> {
        self.flows.iter().find(|f| f.id == id)
    }
}

/// Runs both methods on every flow, highest priority first.
pub fn analyze_flowset(fs: &FlowSet, opts: AnalysisOptions) -> Result<AnalysisResult> {
    let n = fs.len();
    let ranks = fs.priority_ranks();
    let mut classic: Vec<Option<WcttSolution>> = vec![None; n];
    let mut tight: Vec<Option<WcttSolution>> = vec![None; n];

    for i in fs.by_priority() {
        for method in [Method::Classic, Method::Tight] {
            let source = match (method, opts.jitter_source) {
                (Method::Classic, _) | (_, JitterSource::Classic) => &classic,
                (Method::Tight, JitterSource::SameMethod) => &tight,
            };
            let solution = match interference_jitters(fs, i, opts.jitter, source) {
                Some(jitters) => fixed_point_wctt(fs, i, method, &jitters)?,
                // An interferer whose jitter is needed has no bound.
                None => WcttSolution {
                    wctt: Wctt::Diverged(fs.basic_latency(i)),
                    iterates: vec![fs.basic_latency(i)],
                    preemptions: vec![],
                },
            };
            match method {
                Method::Classic => classic[i] = Some(solution),
                Method::Tight => tight[i] = Some(solution),
            }
        }
    }

    let flows = (0..n)
        .map(|i| {
            let f = fs.flow(i);
            let rc = classic[i].as_ref().expect("analysed");
            let rt = tight[i].as_ref().expect("analysed");
            let sched = |w: Wctt| w.bound().is_some_and(|r| r <= f.deadline_ps);
            let (abs, rel) = match (rc.wctt.bound(), rt.wctt.bound()) {
                (Some(r), Some(rs)) => {
                    let abs = r - rs;
                    (Some(abs), Some(abs as f64 / r as f64))
                }
                _ => (None, None),
            };
            FlowReport {
                id: f.id,
                priority: f.priority,
                rank: ranks[i],
                deadline_ps: f.deadline_ps,
                c_ps: fs.basic_latency(i),
                r_classic: rc.wctt,
                r_tight: rt.wctt,
                schedulable_classic: sched(rc.wctt),
                schedulable_tight: sched(rt.wctt),
                improvement_abs_ps: abs,
                improvement_rel: rel,
                iterations_classic: rc.iterations(),
                iterations_tight: rt.iterations(),
            }
        })
        .collect();
    Ok(AnalysisResult { flows })
}

/// Jitters of every flow as seen by flow `i`; `None` if a needed `R_j` diverged.
fn interference_jitters(
    fs: &FlowSet,
    i: usize,
    policy: JitterPolicy,
    solved: &[Option<WcttSolution>],
) -> Option<Vec<Jitter>> {
    let mut jitters: Vec<Jitter> = fs
        .flows()
        .iter()
        .map(|f| Jitter {
            release_ps: f.release_jitter_ps,
            interference_ps: 0,
        })
        .collect();
    if policy == JitterPolicy::Zero {
        return Some(jitters);
    }
    let direct_i = fs.direct_interferers(i);
    for &j in direct_i {
        let indirect = fs
            .direct_interferers(j)
            .iter()
            .any(|k| direct_i.binary_search(k).is_err());
        if indirect {
            let rj = solved[j].as_ref().expect("higher priority analysed first");
            jitters[j].interference_ps = rj.wctt.bound()? - fs.basic_latency(j);
        }
    }
    Some(jitters)
}
