//! Traversal-time formulas and the response-time fixed point, generic over
//! the time scalar.

use crate::platform::PathDecomposition;
use crate::scalar::TimeScalar;

/// Per-hop delays and flit size in some time unit `S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel<S> {
    /// `d_l`: time to move one flit across one link.
    pub link: S,
    /// `d_r`: time for a router to route a header.
    pub router: S,
    pub flit_bytes: u64,
}

impl<S: TimeScalar> TimingModel<S> {
    pub fn new(link: S, router: S, flit_bytes: u64) -> Self {
        assert!(flit_bytes > 0, "flit size must be positive");
        TimingModel {
            link,
            router,
            flit_bytes,
        }
    }

    /// Flits needed for `size_bytes` of payload, `⌈size / flit⌉`.
    pub fn payload_flits(&self, size_bytes: u64) -> u64 {
        size_bytes.div_ceil(self.flit_bytes)
    }

    /// Time for a header to cross `links` consecutive links, paying the router
    /// delay between each pair of them.
    pub fn header_traversal(&self, links: usize) -> S {
        let routers = links.saturating_sub(1);
        S::from_count(links as u64) * self.link + S::from_count(routers as u64) * self.router
    }

    /// Zero-interference latency `C` of a packet crossing `links` links.
    pub fn basic_latency(&self, links: usize, size_bytes: u64) -> S {
        self.header_traversal(links) + S::from_count(self.payload_flits(size_bytes)) * self.link
    }

    /// Header time through the pre-CD section.
    pub fn sigma_pre(&self, d: &PathDecomposition) -> S {
        self.header_traversal(d.pre)
    }

    /// Tail time through the post-CD section.
    pub fn sigma_post(&self, d: &PathDecomposition) -> S {
        S::from_count(d.post as u64) * self.link
    }

    /// Per-preemption interference `C_j − σ_pre − σ_post` of a higher-priority
    /// packet with basic latency `full` and decomposition `d`.
    pub fn interference(&self, full: S, d: &PathDecomposition) -> S {
        full - self.sigma_pre(d) - self.sigma_post(d)
    }
}

/// One higher-priority source of preemptions in the response-time recurrence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preemptor<S> {
    pub period: S,
    /// `J^R + J^I` of the preempting flow.
    pub jitter: S,
    /// Cost charged per preemption (`C_j` or `I_{j,i}`).
    pub cost: S,
}

impl<S: TimeScalar> Preemptor<S> {
    /// Number of preemptions within a window of length `window`.
    pub fn count(&self, window: S) -> S {
        (window + self.jitter).ceil_div(self.period)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    /// An iterate exceeded the deadline.
    Diverged,
}

/// Result of iterating `R = C + Σ ⌈(R + J)/T⌉ · X` from `R⁰ = C`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint<S> {
    /// `R⁰, R¹, …`; the last entry is the fixed point or the first iterate
    /// beyond the deadline.
    pub iterates: Vec<S>,
    pub outcome: Outcome,
}

impl<S: TimeScalar> FixedPoint<S> {
    pub fn value(&self) -> S {
        *self.iterates.last().expect("at least the seed iterate")
    }

    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }

    /// Recomputations performed after the seed.
    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }
}

/// Solves the response-time recurrence, stopping at the first iterate that
/// either repeats or exceeds `deadline`.
///
/// Iterates are non-decreasing, so the loop ends after at most
/// `(deadline − own) / min cost` steps.
pub fn solve_fixed_point<S: TimeScalar>(
    own: S,
    deadline: S,
    preemptors: &[Preemptor<S>],
) -> FixedPoint<S> {
    let mut iterates = vec![own];
    let mut current = own;
    loop {
        let next = preemptors
            .iter()
            .fold(own, |acc, p| acc + p.count(current) * p.cost);
        iterates.push(next);
        if next == current {
            return FixedPoint {
                iterates,
                outcome: Outcome::Converged,
            };
        }
        if next > deadline {
            return FixedPoint {
                iterates,
                outcome: Outcome::Diverged,
            };
        }
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use num_rational::Ratio;

    use super::*;

    fn ps() -> TimingModel<u64> {
        TimingModel::new(500, 1_500, 16)
    }

    #[test]
    fn basic_latency_worked_examples() {
        let m = ps();
        assert_eq!(m.basic_latency(7, 48), 14_000);
        assert_eq!(m.basic_latency(3, 48), 6_000);
        assert_eq!(m.basic_latency(7, 160), 17_500);
        assert_eq!(m.basic_latency(3, 160), 9_500);
        // Partial flits round up.
        assert_eq!(m.basic_latency(3, 49), 6_500);
    }

    #[test]
    fn sigma_examples() {
        let m = ps();
        let d = |pre, post| PathDecomposition { pre, cd: 1, post };
        assert_eq!(m.sigma_pre(&d(3, 0)), 4_500);
        assert_eq!(m.sigma_pre(&d(0, 0)), 0);
        assert_eq!(m.sigma_pre(&d(1, 0)), 500);
        assert_eq!(m.sigma_post(&d(0, 3)), 1_500);
        assert_eq!(m.sigma_post(&d(0, 0)), 0);
        assert_eq!(m.sigma_post(&d(0, 6)), 3_000);
        assert_eq!(m.interference(14_000, &d(3, 3)), 8_000);
        assert_eq!(m.interference(17_500, &d(3, 3)), 11_500);
        let full = PathDecomposition { pre: 0, cd: 7, post: 0 };
        assert_eq!(m.interference(14_000, &full), 14_000);
    }

    #[test]
    fn fixed_point_iterates() {
        let classic = Preemptor { period: 1_000_000u64, jitter: 0, cost: 14_000 };
        let fp = solve_fixed_point(6_000, 1_000_000, &[classic]);
        assert_eq!(fp.iterates, vec![6_000, 20_000, 20_000]);
        assert!(fp.converged());
        assert_eq!(fp.iterations(), 2);

        let tight = Preemptor { cost: 8_000, ..classic };
        let fp = solve_fixed_point(6_000, 1_000_000, &[tight]);
        assert_eq!(fp.iterates, vec![6_000, 14_000, 14_000]);
    }

    #[test]
    fn no_preemptors_is_one_iteration() {
        let fp = solve_fixed_point::<u64>(6_000, 1_000, &[]);
        assert_eq!(fp.iterates, vec![6_000, 6_000]);
        assert!(fp.converged());
    }

    #[test]
    fn divergence_stops_past_deadline() {
        // Utilisation above one: never converges.
        let p = Preemptor { period: 10u64, jitter: 0, cost: 10 };
        let fp = solve_fixed_point(5, 1_000, &[p]);
        assert_eq!(fp.outcome, Outcome::Diverged);
        assert!(fp.value() > 1_000);
        assert!(fp.iterates.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn scalars_agree_on_the_worked_example() {
        let ns: TimingModel<f64> = TimingModel::new(0.5, 1.5, 16);
        assert_eq!(ns.basic_latency(7, 48), 14.0);
        let c1 = ns.basic_latency(7, 48);
        let i = ns.interference(c1, &PathDecomposition { pre: 3, cd: 1, post: 3 });
        let fp = solve_fixed_point(
            ns.basic_latency(3, 48),
            1000.0,
            &[Preemptor { period: 1000.0, jitter: 0.0, cost: i }],
        );
        assert_eq!(fp.value(), 14.0);

        let half = Ratio::new(1i64, 2);
        let exact = TimingModel::new(half, half * 3, 16);
        let c1 = exact.basic_latency(7, 160);
        assert_eq!(c1, Ratio::new(35, 2));
        let i = exact.interference(c1, &PathDecomposition { pre: 3, cd: 1, post: 3 });
        let fp = solve_fixed_point(
            exact.basic_latency(3, 160),
            Ratio::from_integer(1000),
            &[Preemptor { period: Ratio::from_integer(1000), jitter: Ratio::from_integer(0), cost: i }],
        );
        assert_eq!(fp.value(), Ratio::from_integer(21));
    }
}
