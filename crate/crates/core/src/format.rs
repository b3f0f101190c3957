//! Line-oriented flow-set files.
//!
//! ```text
//! # comment
//! [platform]
//! rows = 8
//! cols = 8
//! flit_bytes = 16
//! link_delay_ps = 500
//! router_delay_ps = 1500
//! clock_period_ps = 500
//!
//! [flows]
//! id=1 src=0,0 dst=5,0 size_bytes=48 priority=2 period_ps=1000000 jitter_ps=0
//! ```
//!
//! Times are integer picoseconds, sizes bytes. Deadlines equal periods.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::flow::{Flow, FlowId, FlowSet};
use crate::platform::{PlatformConfig, TileCoord};

const PLATFORM_KEYS: [&str; 6] = [
    "rows",
    "cols",
    "flit_bytes",
    "link_delay_ps",
    "router_delay_ps",
    "clock_period_ps",
];

const FLOW_KEYS: [&str; 7] = [
    "id",
    "src",
    "dst",
    "size_bytes",
    "priority",
    "period_ps",
    "jitter_ps",
];

fn parse_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(line: usize, field: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| parse_err(line, field, format!("expected a non-negative integer, got `{v}`")))
}

fn coord(line: usize, field: &str, v: &str) -> Result<TileCoord> {
    let (x, y) = v
        .split_once(',')
        .ok_or_else(|| parse_err(line, field, format!("expected `x,y`, got `{v}`")))?;
    Ok(TileCoord::new(
        number(line, field, x.trim())?,
        number(line, field, y.trim())?,
    ))
}

#[derive(PartialEq)]
enum Section {
    None,
    Platform,
    Flows,
}

/// Parses a flow-set file and validates it.
pub fn parse_flowset(text: &str) -> Result<FlowSet> {
    let mut section = Section::None;
    let mut platform: BTreeMap<&str, (usize, u64)> = BTreeMap::new();
    let mut flows = Vec::new();
    let mut flows_line = 0;
    let mut platform_line = 1;

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        match content {
            "[platform]" => {
                section = Section::Platform;
                platform_line = line;
                continue;
            }
            "[flows]" => {
                section = Section::Flows;
                flows_line = line;
                continue;
            }
            s if s.starts_with('[') => {
                return Err(parse_err(line, "section", format!("unknown section {s}")));
            }
            _ => {}
        }
        match section {
            Section::None => {
                return Err(parse_err(line, "section", "expected [platform] or [flows] first"));
            }
            Section::Platform => {
                let (k, v) = content
                    .split_once('=')
                    .ok_or_else(|| parse_err(line, content, "expected `key = value`"))?;
                let (k, v) = (k.trim(), v.trim());
                let key = PLATFORM_KEYS
                    .iter()
                    .find(|&&p| p == k)
                    .ok_or_else(|| parse_err(line, k, "unknown platform field"))?;
                if platform.insert(key, (line, number(line, k, v)?)).is_some() {
                    return Err(parse_err(line, k, "given twice"));
                }
            }
            Section::Flows => flows.push(parse_flow(line, content)?),
        }
    }

    let get = |k: &str| -> Result<u64> {
        platform
            .get(k)
            .map(|v| v.1)
            .ok_or_else(|| parse_err(platform_line, k, "missing from [platform]"))
    };
    let narrow = |k: &str| -> Result<u32> {
        u32::try_from(get(k)?).map_err(|_| parse_err(platform[k].0, k, "too large"))
    };
    let cfg = PlatformConfig::new(
        narrow("rows")?,
        narrow("cols")?,
        get("flit_bytes")?,
        get("link_delay_ps")?,
        get("router_delay_ps")?,
        get("clock_period_ps")?,
    )?;
    if flows.is_empty() {
        return Err(Error::InvalidFlowSet(format!(
            "no flows (section starting at line {flows_line})"
        )));
    }
    FlowSet::new(cfg, flows)
}

fn parse_flow(line: usize, content: &str) -> Result<Flow> {
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for token in content.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| parse_err(line, token, "expected `key=value`"))?;
        if !FLOW_KEYS.contains(&k) {
            return Err(parse_err(line, k, "unknown flow field"));
        }
        if fields.insert(k, v).is_some() {
            return Err(parse_err(line, k, "given twice"));
        }
    }
    let req = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| parse_err(line, k, "missing"))
    };
    let period: u64 = number(line, "period_ps", req("period_ps")?)?;
    Ok(Flow {
        id: FlowId(number(line, "id", req("id")?)?),
        src: coord(line, "src", req("src")?)?,
        dst: coord(line, "dst", req("dst")?)?,
        size_bytes: number(line, "size_bytes", req("size_bytes")?)?,
        priority: number(line, "priority", req("priority")?)?,
        period_ps: period,
        deadline_ps: period,
        release_jitter_ps: match fields.get("jitter_ps") {
            Some(v) => number(line, "jitter_ps", v)?,
            None => 0,
        },
    })
}

/// Writes `fs` in the format read by [`parse_flowset`].
pub fn write_flowset(fs: &FlowSet) -> String {
    let p = fs.platform();
    let mut out = String::new();
    out.push_str("[platform]\n");
    for (k, v) in [
        ("rows", p.rows as u64),
        ("cols", p.cols as u64),
        ("flit_bytes", p.flit_bytes),
        ("link_delay_ps", p.link_delay_ps),
        ("router_delay_ps", p.router_delay_ps),
        ("clock_period_ps", p.clock_period_ps),
    ] {
        writeln!(out, "{k} = {v}").unwrap();
    }
    out.push_str("\n[flows]\n");
    for f in fs.flows() {
        writeln!(
            out,
            "id={} src={} dst={} size_bytes={} priority={} period_ps={} jitter_ps={}",
            f.id.0, f.src, f.dst, f.size_bytes, f.priority, f.period_ps, f.release_jitter_ps
        )
        .unwrap();
    }
    out
}
