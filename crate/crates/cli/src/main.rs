//! `wctt`: analysis, simulation and experiment driver.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use noc_wctt::experiment::{
    self, set_seed, ExperimentKind, ExperimentOutput, ExperimentSpec, FlowRow, ImprovementStats,
    Split, SurfacePoint, MS,
};
use noc_wctt::format::{parse_flowset, write_flowset};
use noc_wctt::sim::{simulate, Horizon, PacketRecord, ReleasePolicy, SimConfig, SummaryStatus};
use noc_wctt::{
    analyze_flowset, interference_term, AnalysisOptions, AnalysisResult, FlowSet, JitterPolicy,
    JitterSource, Method, Picos, PlatformConfig, Wctt,
};

/// Appends a formatted line to a `String`.
macro_rules! say {
    ($o:expr, $($arg:tt)*) => {
        let _ = writeln!($o, $($arg)*);
    };
}

const EXIT_INPUT: u8 = 2;
const EXIT_CLASSIC_ONLY: u8 = 3;
const EXIT_BOTH: u8 = 4;

#[derive(Parser)]
#[command(name = "wctt", version, about = "Worst-case traversal times for wormhole NoCs")]
struct Cli {
    /// Directory for result tables.
    #[arg(long, global = true, env = "WCTT_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// Suppress the summary printed to standard output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bound every flow of a flow-set file with both analyses.
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Simulate a flow-set file and compare with the bounds.
    Simulate {
        file: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Run a randomized experiment from a TOML spec or a preset.
    Experiment {
        /// Experiment spec (TOML).
        spec: Option<PathBuf>,
        #[command(flatten)]
        select: SpecArgs,
        /// Print the resolved spec as TOML and exit.
        #[arg(long)]
        print_spec: bool,
    },
    /// Two-flow improvement surface over path length and flow size.
    Surface {
        /// Contention-domain lengths, one surface pair each.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        cd: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        min_links: usize,
        #[arg(long, default_value_t = 16)]
        max_links: usize,
        /// Largest flow size in bytes; sizes step by one flit.
        #[arg(long, default_value_t = 1024)]
        max_size: u64,
        #[arg(long, default_value_t = MS)]
        period_ps: Picos,
    },
    /// Write one generated flow-set of an experiment as a flow-set file.
    Generate {
        spec: Option<PathBuf>,
        #[command(flatten)]
        select: SpecArgs,
        #[arg(long, default_value_t = 0)]
        category: usize,
        #[arg(long, default_value_t = 0)]
        set: usize,
        /// Output file name inside the output directory.
        #[arg(long, default_value = "generated.flows")]
        name: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum JitterArg {
    Zero,
    ShiBurns,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    SameMethod,
    Classic,
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long, value_enum, default_value = "shi-burns")]
    jitter_policy: JitterArg,
    /// Whose `R_j` feeds the interference jitter of the tight analysis.
    #[arg(long, value_enum, default_value = "same-method")]
    jitter_source: SourceArg,
}

impl AnalysisArgs {
    fn options(&self) -> AnalysisOptions {
        AnalysisOptions {
            jitter: match self.jitter_policy {
                JitterArg::Zero => JitterPolicy::Zero,
                JitterArg::ShiBurns => JitterPolicy::ShiBurns,
            },
            jitter_source: match self.jitter_source {
                SourceArg::SameMethod => JitterSource::SameMethod,
                SourceArg::Classic => JitterSource::Classic,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReleaseArg {
    Synchronous,
    Phased,
    Jittered,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, conflicts_with = "horizon_hyperperiods")]
    horizon_cycles: Option<u64>,
    #[arg(long, default_value_t = 2)]
    horizon_hyperperiods: u64,
    #[arg(long, default_value_t = 4)]
    vc_depth: usize,
    #[arg(long, default_value_t = 1)]
    credit_delay: u64,
    /// Cap on flows buffered per input port.
    #[arg(long)]
    vcs_per_port: Option<usize>,
    #[arg(long, value_enum, default_value = "synchronous")]
    release: ReleaseArg,
    /// Seed of phased and jittered releases.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig {
            vc_depth: self.vc_depth,
            credit_delay_cycles: self.credit_delay,
            vcs_per_port: self.vcs_per_port,
            horizon: match self.horizon_cycles {
                Some(c) => Horizon::Cycles(c),
                None => Horizon::HyperPeriods(self.horizon_hyperperiods),
            },
            release: match self.release {
                ReleaseArg::Synchronous => ReleasePolicy::Synchronous,
                ReleaseArg::Phased => ReleasePolicy::Phased { seed: self.seed },
                ReleaseArg::Jittered => ReleasePolicy::Jittered { seed: self.seed },
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    FlowSizes,
    PathLengths,
    Joint,
    FlowsetSizes,
    Priorities,
    Tightness,
    Surface,
}

#[derive(Args)]
struct SpecArgs {
    /// Built-in spec, used when no spec file is given.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Use 100 sets of 200 flows per category.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sets: Option<usize>,
    #[arg(long)]
    flows: Option<usize>,
}

impl SpecArgs {
    fn resolve(&self, file: Option<&Path>) -> Result<ExperimentSpec> {
        let mut spec = match (file, self.preset) {
            (Some(path), _) => {
                let text = read(path)?;
                toml::from_str(&text).with_context(|| format!("invalid spec {}", path.display()))?
            }
            (None, Some(p)) => match p {
                Preset::FlowSizes => ExperimentSpec::flow_sizes(),
                Preset::PathLengths => ExperimentSpec::path_lengths(),
                Preset::Joint => ExperimentSpec::joint(),
                Preset::FlowsetSizes => ExperimentSpec::flowset_sizes(),
                Preset::Priorities => ExperimentSpec::priorities(),
                Preset::Tightness => ExperimentSpec::tightness(),
                Preset::Surface => ExperimentSpec::two_flow_surface(),
            },
            (None, None) => bail!("give a spec file or --preset"),
        };
        if self.full_scale {
            spec = spec.full_scale();
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(n) = self.sets {
            spec.sets_per_category = n;
        }
        if let Some(n) = self.flows {
            spec.flows_per_set = n;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Prints `text`; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = io::stdout().lock().write_all(text.as_bytes());
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_flowset(path: &Path) -> Result<FlowSet> {
    parse_flowset(&read(path)?).with_context(|| format!("invalid flow-set file {}", path.display()))
}

/// Writes `rows` as `<stem>.csv` and `<stem>.json` with the same field names.
fn write_table<T: Serialize>(dir: &Path, stem: &str, rows: &[T]) -> Result<()> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let json_path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(rows)?;
    text.push('\n');
    fs::write(&json_path, text).with_context(|| format!("cannot write {}", json_path.display()))?;
    Ok(())
}

fn ns(ps: Picos) -> String {
    let v = ps as f64 / 1000.0;
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn ns_opt(ps: Option<Picos>) -> String {
    ps.map(ns).unwrap_or_else(|| "-".into())
}

#[derive(Serialize)]
struct AnalysisRow {
    flow: u32,
    priority: u32,
    rank: usize,
    period_ps: Picos,
    c_ps: Picos,
    r_ps: Option<Picos>,
    rstar_ps: Option<Picos>,
    r_status: &'static str,
    rstar_status: &'static str,
    schedulable_classic: bool,
    schedulable_tight: bool,
    improvement_abs_ps: Option<Picos>,
    improvement_rel: Option<f64>,
    iterations_classic: usize,
    iterations_tight: usize,
}

fn status(w: Wctt) -> &'static str {
    match w {
        Wctt::Bounded(_) => "bounded",
        Wctt::Diverged(_) => "diverged",
    }
}

fn analysis_rows(res: &AnalysisResult) -> Vec<AnalysisRow> {
    res.flows
        .iter()
        .map(|r| AnalysisRow {
            flow: r.id.0,
            priority: r.priority,
            rank: r.rank,
            period_ps: r.deadline_ps,
            c_ps: r.c_ps,
            r_ps: r.r_classic.bound(),
            rstar_ps: r.r_tight.bound(),
            r_status: status(r.r_classic),
            rstar_status: status(r.r_tight),
            schedulable_classic: r.schedulable_classic,
            schedulable_tight: r.schedulable_tight,
            improvement_abs_ps: r.improvement_abs_ps,
            improvement_rel: r.improvement_rel,
            iterations_classic: r.iterations_classic,
            iterations_tight: r.iterations_tight,
        })
        .collect()
}

#[derive(Serialize)]
struct InterferenceRow {
    higher_flow: u32,
    lower_flow: u32,
    pre_links: usize,
    cd_links: usize,
    post_links: usize,
    c_ps: Picos,
    sigma_pre_ps: Picos,
    sigma_post_ps: Picos,
    i_ps: Picos,
}

fn interference_rows(fs: &FlowSet) -> Result<Vec<InterferenceRow>> {
    let mut rows = Vec::new();
    for lower in fs.by_priority() {
        for &higher in fs.direct_interferers(lower) {
            let term = interference_term(fs, higher, lower)?;
            let d = noc_wctt::decompose(fs.path(higher), fs.path(lower))?
                .expect("direct interferers share a link");
            rows.push(InterferenceRow {
                higher_flow: term.higher_flow.0,
                lower_flow: term.lower_flow.0,
                pre_links: d.pre,
                cd_links: d.cd,
                post_links: d.post,
                c_ps: term.full_c_ps,
                sigma_pre_ps: term.sigma_pre_ps,
                sigma_post_ps: term.sigma_post_ps,
                i_ps: term.tight_i_ps,
            });
        }
    }
    Ok(rows)
}

fn verdict_code(res: &AnalysisResult) -> u8 {
    match (res.schedulable(Method::Classic), res.schedulable(Method::Tight)) {
        (true, _) => 0,
        (false, true) => EXIT_CLASSIC_ONLY,
        (false, false) => EXIT_BOTH,
    }
}

fn cmd_analyze(cli: &Cli, file: &Path, args: &AnalysisArgs) -> Result<u8> {
    let fs = load_flowset(file)?;
    let res = analyze_flowset(&fs, args.options())?;
    let rows = analysis_rows(&res);
    let terms = interference_rows(&fs)?;
    write_table(&cli.out, "analysis", &rows)?;
    write_table(&cli.out, "interference", &terms)?;
    if !cli.quiet {
        let mut o = String::new();
        say!(o, "flow  prio  C(ns)  R(ns)  R*(ns)  sched  sched*  improvement");
        for r in &rows {
            say!(o, 
                "f{:<4} {:<5} {:<6} {:<6} {:<7} {:<6} {:<7} {}",
                r.flow,
                r.priority,
                ns(r.c_ps),
                ns_opt(r.r_ps),
                ns_opt(r.rstar_ps),
                r.schedulable_classic,
                r.schedulable_tight,
                r.improvement_rel.map(|v| format!("{:.1}%", v * 100.0)).unwrap_or_else(|| "-".into())
            );
        }
        for t in &terms {
            say!(o, 
                "I(f{} -> f{}) = {} ns (C = {} ns, pre/cd/post = {}/{}/{})",
                t.higher_flow,
                t.lower_flow,
                ns(t.i_ps),
                ns(t.c_ps),
                t.pre_links,
                t.cd_links,
                t.post_links
            );
        }
        emit(&o);
    }
    Ok(verdict_code(&res))
}

#[derive(Serialize)]
struct TraceRow {
    flow_id: u32,
    release_ps: Picos,
    completion_ps: Option<Picos>,
    latency_ps: Option<Picos>,
}

impl From<&PacketRecord> for TraceRow {
    fn from(p: &PacketRecord) -> Self {
        TraceRow {
            flow_id: p.flow_id.0,
            release_ps: p.release_ps,
            completion_ps: p.completion_ps,
            latency_ps: p.latency_ps,
        }
    }
}

#[derive(Serialize)]
struct SummaryRow {
    flow_id: u32,
    released: usize,
    completed: usize,
    censored: usize,
    status: &'static str,
    best_ps: Option<Picos>,
    avg_ps: Option<f64>,
    worst_ps: Option<Picos>,
    c_ps: Picos,
    r_ps: Option<Picos>,
    rstar_ps: Option<Picos>,
}

fn cmd_simulate(cli: &Cli, file: &Path, analysis: &AnalysisArgs, sim: &SimArgs) -> Result<u8> {
    let fs = load_flowset(file)?;
    let res = analyze_flowset(&fs, analysis.options())?;
    let trace = simulate(&fs, &sim.config())?;
    let packets: Vec<TraceRow> = trace.packets.iter().map(TraceRow::from).collect();
    let summary: Vec<SummaryRow> = trace
        .summaries
        .iter()
        .zip(&res.flows)
        .map(|(s, r)| SummaryRow {
            flow_id: s.flow_id.0,
            released: s.released,
            completed: s.completed,
            censored: s.censored,
            status: match s.status {
                SummaryStatus::Observed => "observed",
                SummaryStatus::Censored => "censored",
            },
            best_ps: s.min_ps,
            avg_ps: s.avg_ps,
            worst_ps: s.max_ps,
            c_ps: r.c_ps,
            r_ps: r.r_classic.bound(),
            rstar_ps: r.r_tight.bound(),
        })
        .collect();
    write_table(&cli.out, "trace", &packets)?;
    write_table(&cli.out, "summary", &summary)?;
    if !cli.quiet {
        let mut o = String::new();
        say!(o, "horizon {} ns, {} packets", ns(trace.horizon_ps), packets.len());
        say!(o, "flow  best(ns)  avg(ns)  worst(ns)  R(ns)  R*(ns)  status");
        for s in &summary {
            say!(o, 
                "f{:<4} {:<9} {:<8} {:<10} {:<6} {:<7} {}",
                s.flow_id,
                ns_opt(s.best_ps),
                s.avg_ps.map(|v| format!("{:.3}", v / 1000.0)).unwrap_or_else(|| "-".into()),
                ns_opt(s.worst_ps),
                ns_opt(s.r_ps),
                ns_opt(s.rstar_ps),
                s.status
            );
        }
        emit(&o);
    }
    Ok(0)
}

#[derive(Serialize)]
struct StatsRow {
    group: String,
    samples: usize,
    min: f64,
    p25: f64,
    median: f64,
    p75: f64,
    max: f64,
    mean: f64,
    outliers: usize,
    diverged: usize,
    schedulable_classic: usize,
    schedulable_tight: usize,
}

impl From<&ImprovementStats> for StatsRow {
    fn from(s: &ImprovementStats) -> Self {
        StatsRow {
            group: s.group.clone(),
            samples: s.samples,
            min: s.min,
            p25: s.p25,
            median: s.median,
            p75: s.p75,
            max: s.max,
            mean: s.mean,
            outliers: s.outliers.len(),
            diverged: s.diverged,
            schedulable_classic: s.schedulable_classic,
            schedulable_tight: s.schedulable_tight,
        }
    }
}

#[derive(Serialize)]
struct ExperimentRow {
    category: String,
    set: usize,
    flow: u32,
    rank: usize,
    size_bytes: u64,
    path_links: usize,
    c_ps: Picos,
    r_ps: Option<Picos>,
    rstar_ps: Option<Picos>,
    improvement_rel: Option<f64>,
    observed_min_ps: Option<Picos>,
    observed_avg_ps: Option<f64>,
    observed_max_ps: Option<Picos>,
}

impl From<&FlowRow> for ExperimentRow {
    fn from(r: &FlowRow) -> Self {
        ExperimentRow {
            category: r.category.clone(),
            set: r.set,
            flow: r.flow.0,
            rank: r.rank,
            size_bytes: r.size_bytes,
            path_links: r.path_links,
            c_ps: r.c_ps,
            r_ps: r.r_ps,
            rstar_ps: r.rstar_ps,
            improvement_rel: r.improvement_rel,
            observed_min_ps: r.observed_min_ps,
            observed_avg_ps: r.observed_avg_ps,
            observed_max_ps: r.observed_max_ps,
        }
    }
}

fn slug(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    while s.contains("--") {
        s = s.replace("--", "-");
    }
    s.trim_matches('-').to_string()
}

fn kind_name(kind: ExperimentKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn write_experiment(cli: &Cli, spec: &ExperimentSpec, out: &ExperimentOutput) -> Result<()> {
    let kind = kind_name(spec.kind);
    for (i, c) in spec.categories.iter().enumerate() {
        let rows: Vec<ExperimentRow> = out.rows_in(&c.label).map(ExperimentRow::from).collect();
        if !rows.is_empty() {
            write_table(&cli.out, &format!("{kind}-{i:02}-{}", slug(&c.label)), &rows)?;
        }
    }
    let stats: Vec<StatsRow> = out.stats.iter().map(StatsRow::from).collect();
    write_table(&cli.out, &format!("{kind}-summary"), &stats)?;
    if !out.surface.is_empty() {
        write_table(&cli.out, &format!("{kind}-surface"), &out.surface)?;
    }
    if !cli.quiet {
        let mut o = String::new();
        say!(o, "{kind}: {} categories, seed {}", spec.categories.len(), spec.seed);
        say!(o, "group                      n      min    p25    median p75    max    outliers");
        for s in &stats {
            say!(o, 
                "{:<26} {:<6} {:<6.3} {:<6.3} {:<6.3} {:<6.3} {:<6.3} {}",
                s.group, s.samples, s.min, s.p25, s.median, s.p75, s.max, s.outliers
            );
        }
        emit(&o);
    }
    Ok(())
}

fn cmd_experiment(cli: &Cli, file: Option<&Path>, select: &SpecArgs, print_spec: bool) -> Result<u8> {
    let spec = select.resolve(file)?;
    if print_spec {
        emit(&toml::to_string(&spec)?);
        return Ok(0);
    }
    let out = experiment::run_experiment(&spec)?;
    write_experiment(cli, &spec, &out)?;
    Ok(0)
}

fn cmd_surface(
    cli: &Cli,
    cds: &[usize],
    links: (usize, usize),
    max_size: u64,
    period_ps: Picos,
) -> Result<u8> {
    let platform = PlatformConfig::reference();
    let flit = platform.flit_bytes;
    let sizes: Vec<u64> = (1..=max_size.div_ceil(flit)).map(|k| k * flit).collect();
    let mut points: Vec<SurfacePoint> = Vec::new();
    for &cd in cds {
        for split in [Split::AllPre, Split::AllPost] {
            points.extend(experiment::two_flow_surface(&platform, links, &sizes, cd, split, period_ps)?);
        }
    }
    write_table(&cli.out, "surface", &points)?;
    if !cli.quiet {
        let mut o = String::new();
        say!(o, "{} surface points written", points.len());
        emit(&o);
    }
    Ok(0)
}

fn cmd_generate(cli: &Cli, file: Option<&Path>, select: &SpecArgs, category: usize, set: usize, name: &str) -> Result<u8> {
    let spec = select.resolve(file)?;
    let cat = spec
        .categories
        .get(category)
        .with_context(|| format!("category {category} out of range (spec has {})", spec.categories.len()))?;
    let fs = experiment::generate_flowset(&spec, cat, set_seed(spec.seed, category, set))?;
    let path = cli.out.join(name);
    fs::write(&path, write_flowset(&fs)).with_context(|| format!("cannot write {}", path.display()))?;
    if !cli.quiet {
        let mut o = String::new();
        say!(o, "{} flows written to {}", fs.len(), path.display());
        emit(&o);
    }
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8> {
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    match &cli.command {
        Command::Analyze { file, analysis } => cmd_analyze(cli, file, analysis),
        Command::Simulate { file, analysis, sim } => cmd_simulate(cli, file, analysis, sim),
        Command::Experiment { spec, select, print_spec } => {
            cmd_experiment(cli, spec.as_deref(), select, *print_spec)
        }
        Command::Surface { cd, min_links, max_links, max_size, period_ps } => {
            cmd_surface(cli, cd, (*min_links, *max_links), *max_size, *period_ps)
        }
        Command::Generate { spec, select, category, set, name } => {
            cmd_generate(cli, spec.as_deref(), select, *category, *set, name)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
