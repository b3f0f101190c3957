use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn wctt(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wctt"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("WCTT_OUT_DIR")
        .output()
        .expect("run wctt")
}

fn table(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn header(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path)
        .unwrap()
        .headers()
        .unwrap()
        .iter()
        .map(str::to_string)
        .collect()
}

fn col(path: &Path, name: &str) -> usize {
    header(path).iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const PAIR: &str = "\
[platform]
rows = 8
cols = 8
flit_bytes = 16
link_delay_ps = 500
router_delay_ps = 1500
clock_period_ps = 500

[flows]
id=1 src=0,0 dst=5,0 size_bytes=48 priority=2 period_ps=PERIOD
id=2 src=2,0 dst=3,0 size_bytes=48 priority=1 period_ps=PERIOD
";

#[test]
fn analyze_worked_example() {
    let dir = TempDir::new().unwrap();
    let out = wctt(dir.path(), &["analyze", data("pair-48b.flows").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("I(f1 -> f2) = 8 ns"));

    let a = dir.path().join("analysis.csv");
    let rows = table(&a);
    let get = |r: usize, c: &str| rows[r][col(&a, c)].to_string();
    assert_eq!((get(0, "c_ps"), get(1, "c_ps")), ("14000".into(), "6000".into()));
    assert_eq!((get(1, "r_ps"), get(1, "rstar_ps")), ("20000".into(), "14000".into()));
    assert_eq!(get(1, "improvement_rel"), "0.3");
    let i = dir.path().join("interference.csv");
    assert_eq!(&table(&i)[0][col(&i, "i_ps")], "8000");

    // JSON documents carry the same field names as the CSV headers.
    for stem in ["analysis", "interference"] {
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("{stem}.json"))).unwrap()).unwrap();
        let keys: Vec<String> = json[0].as_object().unwrap().keys().cloned().collect();
        let mut csv_keys = header(&dir.path().join(format!("{stem}.csv")));
        let mut keys_sorted = keys.clone();
        keys_sorted.sort();
        csv_keys.sort();
        assert_eq!(keys_sorted, csv_keys);
    }
}

#[test]
fn exit_status_partitions_verdicts() {
    let dir = TempDir::new().unwrap();
    for (period, code) in [("1000000", 0), ("19000", 3), ("10000", 4)] {
        let f = dir.path().join(format!("p{period}.flows"));
        fs::write(&f, PAIR.replace("PERIOD", period)).unwrap();
        let out = wctt(dir.path(), &["analyze", f.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(code), "period {period}");
    }
    let empty = dir.path().join("empty.flows");
    fs::write(&empty, PAIR.split("[flows]").next().unwrap().to_string() + "[flows]\n").unwrap();
    let out = wctt(dir.path(), &["analyze", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no flows"));

    let bad = dir.path().join("bad.flows");
    fs::write(&bad, PAIR.replace("PERIOD", "1000").replace("dst=3,0", "dst=9,0")).unwrap();
    let out = wctt(dir.path(), &["analyze", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("f2"));
}

#[test]
fn random_file_exit_status_matches_table() {
    let dir = TempDir::new().unwrap();
    let mut codes = Vec::new();
    for seed in 0..6 {
        let name = format!("r{seed}.flows");
        let out = wctt(
            dir.path(),
            &["generate", "--preset", "priorities", "--flows", "50", "--seed", &seed.to_string(), "--name", &name],
        );
        assert!(out.status.success());
        // Shrink every period so some sets become unschedulable.
        let path = dir.path().join(&name);
        let text = fs::read_to_string(&path).unwrap();
        let shrunk: String = text
            .lines()
            .map(|l| match l.split_once("period_ps=") {
                Some((head, rest)) => {
                    let (p, tail) = rest.split_once(' ').unwrap_or((rest, ""));
                    let p: u64 = p.parse().unwrap();
                    format!("{head}period_ps={} {tail}\n", (p / (4_000 * (seed + 1))).max(1))
                }
                None => format!("{l}\n"),
            })
            .collect();
        fs::write(&path, shrunk).unwrap();
        let out = wctt(dir.path(), &["analyze", "-q", path.to_str().unwrap()]);
        let a = dir.path().join("analysis.csv");
        let rows = table(&a);
        assert_eq!(rows.len(), 50);
        let all = |c: &str| rows.iter().all(|r| &r[col(&a, c)] == "true");
        let expect = match (all("schedulable_classic"), all("schedulable_tight")) {
            (true, _) => 0,
            (false, true) => 3,
            (false, false) => 4,
        };
        assert_eq!(out.status.code(), Some(expect));
        codes.push(expect);
    }
    assert!(codes.iter().any(|&c| c != 0), "{codes:?}");
}

#[test]
fn simulate_reports_observed_and_bounds() {
    let dir = TempDir::new().unwrap();
    let out = wctt(dir.path(), &["simulate", data("pair-48b.flows").to_str().unwrap()]);
    assert!(out.status.success());
    let s = dir.path().join("summary.csv");
    let rows = table(&s);
    let worst: u64 = rows[1][col(&s, "worst_ps")].parse().unwrap();
    assert!(worst <= 14_000);
    for c in ["best_ps", "avg_ps", "worst_ps", "r_ps", "rstar_ps"] {
        col(&s, c);
    }
    let t = dir.path().join("trace.csv");
    assert_eq!(header(&t), ["flow_id", "release_ps", "completion_ps", "latency_ps"]);

    let out = wctt(
        dir.path(),
        &["simulate", "--horizon-cycles", "0", data("pair-48b.flows").to_str().unwrap()],
    );
    assert!(out.status.success());
    assert!(table(&t).is_empty());
    assert!(table(&s).iter().all(|r| &r[col(&s, "status")] == "censored"));
}

#[test]
fn simulate_tightness_file() {
    let dir = TempDir::new().unwrap();
    let out = wctt(dir.path(), &["simulate", "-q", data("tightness.flows").to_str().unwrap()]);
    assert!(out.status.success());
    let s = dir.path().join("summary.csv");
    let rows = table(&s);
    assert_eq!(rows.len(), 42);
    for r in &rows {
        let worst: u64 = r[col(&s, "worst_ps")].parse().unwrap();
        let bound: u64 = r[col(&s, "rstar_ps")].parse().unwrap();
        assert!(worst <= bound);
    }
}

fn medians(path: &Path) -> Vec<f64> {
    table(path).iter().map(|r| r[col(path, "median")].parse().unwrap()).collect()
}

#[test]
fn flow_size_experiment_is_monotone() {
    let dir = TempDir::new().unwrap();
    let out = wctt(dir.path(), &["experiment", "-q", data("experiments/flow-sizes.toml").to_str().unwrap()]);
    assert!(out.status.success());
    let m = medians(&dir.path().join("flow-size-sweep-summary.csv"));
    assert_eq!(m.len(), 7);
    assert!(m.windows(2).all(|w| w[1] <= w[0]), "{m:?}");
    assert!(dir.path().join("flow-size-sweep-00-1b-16b.csv").exists());
}

#[test]
fn set_size_experiment_has_outliers_everywhere() {
    let dir = TempDir::new().unwrap();
    let out = wctt(dir.path(), &["experiment", "-q", "--preset", "flowset-sizes", "--sets", "5"]);
    assert!(out.status.success());
    let s = dir.path().join("flowset-size-sweep-summary.csv");
    for r in table(&s) {
        let n: usize = r[col(&s, "outliers")].parse().unwrap();
        assert!(n > 0, "{r:?}");
    }
}

#[test]
fn single_set_experiment_equals_analyze() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("one.toml");
    fs::write(
        &spec,
        "kind = \"priority-profile\"\nsets_per_category = 1\nflows_per_set = 2\nseed = 7\n\n\
         [[categories]]\nlabel = \"one\"\nsize_bytes = [16, 256]\n",
    )
    .unwrap();
    let spec = spec.to_str().unwrap();
    assert!(wctt(dir.path(), &["experiment", "-q", spec]).status.success());
    assert!(wctt(dir.path(), &["generate", "-q", spec, "--name", "one.flows"]).status.success());
    let flows = dir.path().join("one.flows");
    wctt(dir.path(), &["analyze", "-q", flows.to_str().unwrap()]);

    let e = dir.path().join("priority-profile-00-one.csv");
    let a = dir.path().join("analysis.csv");
    let (er, ar) = (table(&e), table(&a));
    assert_eq!(er.len(), 2);
    for (x, y) in er.iter().zip(&ar) {
        for c in ["c_ps", "r_ps", "rstar_ps", "improvement_rel"] {
            assert_eq!(x[col(&e, c)], y[col(&a, c)], "{c}");
        }
    }
}

#[test]
fn outputs_are_deterministic() {
    let (d1, d2) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let flows = data("tightness.flows");
    for d in [&d1, &d2] {
        let args = ["experiment", "-q", "--preset", "path-lengths", "--sets", "2", "--flows", "15"];
        assert!(wctt(d.path(), &args).status.success());
        let sim = ["simulate", "-q", "--release", "phased", "--seed", "3", flows.to_str().unwrap()];
        assert!(wctt(d.path(), &sim).status.success());
    }
    for f in ["path-length-sweep-summary.csv", "path-length-sweep-03-3-10.json", "trace.csv", "summary.json"] {
        assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_spec_fails_before_generation() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(
        &spec,
        "kind = \"path-length-sweep\"\nsets_per_category = 1\nflows_per_set = 5\nseed = 1\n\n\
         [[categories]]\nlabel = \"x\"\nsize_bytes = [8, 4]\n",
    )
    .unwrap();
    let out = wctt(dir.path(), &["experiment", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(fs::read_dir(dir.path()).unwrap().count() == 1);
}

#[test]
fn surface_and_env_out_dir() {
    let dir = TempDir::new().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_wctt"))
        .args(["surface", "-q", "--cd", "1,5", "--max-size", "256"])
        .env("WCTT_OUT_DIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let s = dir.path().join("surface.csv");
    let rows = table(&s);
    assert_eq!(rows.len(), 2 * 2 * 16 * 16);
    let target = rows.iter().find(|r| {
        &r[col(&s, "split")] == "all-pre" && &r[col(&s, "higher_links")] == "7" && &r[col(&s, "size_bytes")] == "48" && &r[col(&s, "cd")] == "1"
    });
    assert_eq!(&target.unwrap()[col(&s, "improvement_rel")], "0.375");
}
