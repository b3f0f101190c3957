use noc_wctt::experiment::{generate_flowset, run_experiment, Category, ExperimentSpec, PeriodModel};
use noc_wctt::sim::{simulate, Horizon, ReleasePolicy, SimConfig, Simulator};
use noc_wctt::{analyze_flowset, AnalysisOptions, Flow, FlowSet, PlatformConfig, TileCoord};
use proptest::prelude::*;

fn t(x: u32, y: u32) -> TileCoord {
    TileCoord::new(x, y)
}

fn small_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::priorities();
    spec.platform = PlatformConfig::reference().with_size(4, 4);
    spec.flows_per_set = 8;
    spec.periods = PeriodModel::Grid {
        values_ps: vec![50_000, 100_000, 200_000],
    };
    spec
}

fn small_set(seed: u64) -> FlowSet {
    generate_flowset(&small_spec(), &Category::sizes("s", 1, 512), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn isolated_flow_takes_exactly_c(
        seed in any::<u64>(),
        depth in 4usize..=9,
        credit in 1u64..=3,
        policy in 0usize..4,
    ) {
        let fs = small_set(seed);
        let f = fs.flow(0).clone().with_jitter(fs.flow(0).period_ps / 2);
        let alone = FlowSet::new(*fs.platform(), vec![f]).unwrap();
        let release = match policy {
            0 => ReleasePolicy::Synchronous,
            1 => ReleasePolicy::Phased { seed },
            2 => ReleasePolicy::Jittered { seed },
            _ => ReleasePolicy::Offsets(vec![seed % 97]),
        };
        let cfg = SimConfig {
            vc_depth: depth,
            credit_delay_cycles: credit.min(depth as u64 - 3),
            release,
            horizon: Horizon::HyperPeriods(4),
            ..SimConfig::default()
        };
        let trace = simulate(&alone, &cfg).unwrap();
        let c = alone.basic_latency(0);
        prop_assert!(trace.packets.iter().any(|p| p.latency_ps.is_some()));
        for p in &trace.packets {
            if let Some(l) = p.latency_ps {
                prop_assert_eq!(l, c);
            }
        }
    }

    #[test]
    fn stepping_preserves_invariants(seed in any::<u64>(), depth in 1usize..=6) {
        let fs = small_set(seed);
        let cfg = SimConfig {
            vc_depth: depth,
            release: ReleasePolicy::Phased { seed },
            horizon: Horizon::HyperPeriods(1),
            ..SimConfig::default()
        };
        let mut sim = Simulator::new(&fs, &cfg).unwrap();
        let mut last = 0;
        while let Some(grants) = sim.step().unwrap() {
            prop_assert!(sim.now() >= last);
            last = sim.now();
            let c = sim.counters();
            prop_assert_eq!(c.released, c.at_source + c.in_network + c.ejected);
            prop_assert_eq!(c.injected, c.released - c.at_source);
            prop_assert!(sim.max_buffer_occupancy() <= sim.vc_depth());
            for g in &grants {
                prop_assert!(g.contenders.contains(&g.flow));
                let winner = fs.flow(g.flow).priority;
                prop_assert!(g.contenders.iter().all(|&k| fs.flow(k).priority <= winner));
            }
        }
    }

    #[test]
    fn observed_latency_within_tight_bound(seed in any::<u64>(), phased in any::<bool>()) {
        let fs = small_set(seed);
        let rep = analyze_flowset(&fs, AnalysisOptions::default()).unwrap();
        let release = if phased { ReleasePolicy::Phased { seed } } else { ReleasePolicy::Synchronous };
        let trace = simulate(&fs, &SimConfig { release, ..SimConfig::default() }).unwrap();
        for (s, r) in trace.summaries.iter().zip(&rep.flows) {
            if let (Some(max), Some(bound)) = (s.max_ps, r.r_tight.bound()) {
                prop_assert!(max <= bound, "{}: {} > {}", r.id, max, bound);
                prop_assert!(s.min_ps.unwrap() >= r.c_ps);
            }
        }
    }
}

#[test]
fn preempting_pair_offset_sweep() {
    let period = 200_000;
    let fs = FlowSet::new(
        PlatformConfig::reference(),
        vec![
            Flow::new(1, t(0, 0), t(5, 0), 48, 2, period),
            Flow::new(2, t(2, 0), t(3, 0), 48, 1, period),
        ],
    )
    .unwrap();
    let cycles = period / 500;
    let mut worst = 0;
    for off in 0..cycles {
        let cfg = SimConfig {
            release: ReleasePolicy::Offsets(vec![off, 0]),
            horizon: Horizon::Cycles(2 * cycles),
            ..SimConfig::default()
        };
        let trace = simulate(&fs, &cfg).unwrap();
        assert_eq!(trace.summary(fs.flow(0).id).unwrap().max_ps, Some(14_000));
        worst = worst.max(trace.summary(fs.flow(1).id).unwrap().max_ps.unwrap());
    }
    assert!(worst > 6_000, "the sweep never made f1 block f2");
    assert!(worst <= 14_000);
}

#[test]
fn indirect_chain_offset_sweep() {
    let period = 100_000;
    let fs = FlowSet::new(
        PlatformConfig::reference(),
        vec![
            Flow::new(1, t(3, 0), t(6, 0), 160, 3, period),
            Flow::new(2, t(1, 0), t(6, 0), 160, 2, period),
            Flow::new(3, t(0, 0), t(2, 0), 160, 1, period),
        ],
    )
    .unwrap();
    let rep = analyze_flowset(&fs, AnalysisOptions::default()).unwrap();
    let cycles = period / 500;
    for o1 in (0..cycles).step_by(3) {
        for o2 in (0..60).step_by(2) {
            let cfg = SimConfig {
                release: ReleasePolicy::Offsets(vec![o1, o2, 0]),
                horizon: Horizon::Cycles(2 * cycles),
                ..SimConfig::default()
            };
            let trace = simulate(&fs, &cfg).unwrap();
            for (s, r) in trace.summaries.iter().zip(&rep.flows) {
                if let Some(max) = s.max_ps {
                    assert!(max <= r.r_tight.bound().unwrap(), "{o1}/{o2} {}: {max}", r.id);
                }
            }
        }
    }
}

#[test]
fn tightness_experiment_stays_below_bounds() {
    let out = run_experiment(&ExperimentSpec::tightness()).unwrap();
    assert_eq!(out.rows.len(), 42);
    for r in &out.rows {
        let (max, bound) = (r.observed_max_ps.unwrap(), r.rstar_ps.unwrap());
        assert!(r.c_ps <= r.observed_min_ps.unwrap());
        assert!(max <= bound, "{}: observed {max} > R* {bound}", r.flow);
        assert!(bound <= r.r_ps.unwrap());
    }
}
