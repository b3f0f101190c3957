//! 2D-mesh platform: geometry, XY routing and contention-domain decomposition.
//!
//! A path always starts with the core-to-router link of the source tile and
//! ends with the router-to-core link of the destination tile, so a flow
//! between adjacent tiles crosses three links and two routers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::TimeScalar;
use crate::timing::TimingModel;
use crate::Picos;

/// Mesh geometry and per-hop delays. All durations are integer picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlatformConfig {
    pub rows: u32,
    pub cols: u32,
    pub flit_bytes: u64,
    pub link_delay_ps: Picos,
    pub router_delay_ps: Picos,
    pub clock_period_ps: Picos,
}

impl PlatformConfig {
    pub fn new(
        rows: u32,
        cols: u32,
        flit_bytes: u64,
        link_delay_ps: Picos,
        router_delay_ps: Picos,
        clock_period_ps: Picos,
    ) -> Result<Self> {
        let cfg = PlatformConfig {
            rows,
            cols,
            flit_bytes,
            link_delay_ps,
            router_delay_ps,
            clock_period_ps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 8×8 mesh, 16 B flits, 2 GHz, d_l = 1 cycle, d_r = 3 cycles.
    pub fn reference() -> Self {
        PlatformConfig {
            rows: 8,
            cols: 8,
            flit_bytes: 16,
            link_delay_ps: 500,
            router_delay_ps: 1_500,
            clock_period_ps: 500,
        }
    }

    /// The reference delays (in cycles) on a `rows × cols` mesh clocked at 100 MHz.
    pub fn slow_clock(rows: u32, cols: u32) -> Self {
        PlatformConfig {
            rows,
            cols,
            flit_bytes: 16,
            link_delay_ps: 10_000,
            router_delay_ps: 30_000,
            clock_period_ps: 10_000,
        }
    }

    /// The reference platform resized to `rows × cols`.
    pub fn with_size(mut self, rows: u32, cols: u32) -> Self {
        self.rows = rows;
        self.cols = cols;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config(format!(
                "mesh must have at least one row and column, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.flit_bytes == 0 {
            return Err(Error::Config("flit size must be at least 1 byte".into()));
        }
        if self.clock_period_ps == 0 {
            return Err(Error::Config("clock period must be positive".into()));
        }
        for (name, v) in [
            ("link delay", self.link_delay_ps),
            ("router delay", self.router_delay_ps),
        ] {
            if v == 0 || v % self.clock_period_ps != 0 {
                return Err(Error::Config(format!(
                    "{name} {v} ps is not a positive multiple of the {} ps clock period",
                    self.clock_period_ps
                )));
            }
        }
        Ok(())
    }

    pub fn link_cycles(&self) -> u64 {
        self.link_delay_ps / self.clock_period_ps
    }

    pub fn router_cycles(&self) -> u64 {
        self.router_delay_ps / self.clock_period_ps
    }

    pub fn tiles(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn contains(&self, t: TileCoord) -> bool {
        t.x < self.cols && t.y < self.rows
    }

    /// All tiles in row-major order.
    pub fn tile_coords(&self) -> impl Iterator<Item = TileCoord> + '_ {
        (0..self.rows).flat_map(move |y| (0..self.cols).map(move |x| TileCoord { x, y }))
    }

    /// Delays of this platform expressed in picoseconds as scalar `S`.
    pub fn timing<S: TimeScalar>(&self) -> TimingModel<S> {
        TimingModel::new(
            S::from_count(self.link_delay_ps),
            S::from_count(self.router_delay_ps),
            self.flit_bytes,
        )
    }
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self::reference()
    }
}

/// Tile position: `x` is the column, `y` the row (row 0 is the north edge).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileCoord {
    pub x: u32,
    pub y: u32,
}

impl TileCoord {
    pub const fn new(x: u32, y: u32) -> Self {
        TileCoord { x, y }
    }

    pub fn manhattan(self, other: TileCoord) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for TileCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    North,
    South,
    East,
    West,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkKind {
    CoreToRouter,
    RouterToRouter,
    RouterToCore,
}

/// One unidirectional link. Local links have `from == to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub kind: LinkKind,
    pub from: TileCoord,
    pub to: TileCoord,
    pub direction: Direction,
}

impl Link {
    pub fn injection(tile: TileCoord) -> Self {
        Link {
            kind: LinkKind::CoreToRouter,
            from: tile,
            to: tile,
            direction: Direction::Local,
        }
    }

    pub fn ejection(tile: TileCoord) -> Self {
        Link {
            kind: LinkKind::RouterToCore,
            from: tile,
            to: tile,
            direction: Direction::Local,
        }
    }

    fn hop(from: TileCoord, direction: Direction) -> Self {
        let to = match direction {
            Direction::East => TileCoord::new(from.x + 1, from.y),
            Direction::West => TileCoord::new(from.x - 1, from.y),
            Direction::South => TileCoord::new(from.x, from.y + 1),
            Direction::North => TileCoord::new(from.x, from.y - 1),
            Direction::Local => unreachable!("local hops are injection/ejection links"),
        };
        Link {
            kind: LinkKind::RouterToRouter,
            from,
            to,
            direction,
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LinkKind::CoreToRouter => write!(f, "core({})->router", self.from),
            LinkKind::RouterToCore => write!(f, "router({})->core", self.to),
            LinkKind::RouterToRouter => write!(f, "({})->({})", self.from, self.to),
        }
    }
}

/// Ordered list of links from the source core to the destination core.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    links: Vec<Link>,
}

impl Path {
    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Number of links, `|L|`.
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Routers crossed, one per routing decision.
    pub fn routers(&self) -> usize {
        self.links.len().saturating_sub(1)
    }

    pub fn source(&self) -> TileCoord {
        self.links[0].from
    }

    pub fn destination(&self) -> TileCoord {
        self.links[self.links.len() - 1].to
    }

    pub fn position(&self, link: &Link) -> Option<usize> {
        self.links.iter().position(|l| l == link)
    }

    pub fn shares_link_with(&self, other: &Path) -> bool {
        self.links.iter().any(|l| other.links.contains(l))
    }
}

/// Dimension-ordered route: all X movement first, then Y.
pub fn xy_route(src: TileCoord, dst: TileCoord, cfg: &PlatformConfig) -> Result<Path> {
    for (what, t) in [("source", src), ("destination", dst)] {
        if !cfg.contains(t) {
            return Err(Error::Config(format!(
                "{what} tile ({t}) outside the {}x{} mesh",
                cfg.cols, cfg.rows
            )));
        }
    }
    if src == dst {
        return Err(Error::Config(format!(
            "source and destination are the same tile ({src})"
        )));
    }

    let mut links = Vec::with_capacity(src.manhattan(dst) as usize + 2);
    links.push(Link::injection(src));
    let mut at = src;
    while at.x != dst.x {
        let dir = if dst.x > at.x { Direction::East } else { Direction::West };
        let l = Link::hop(at, dir);
        at = l.to;
        links.push(l);
    }
    while at.y != dst.y {
        let dir = if dst.y > at.y { Direction::South } else { Direction::North };
        let l = Link::hop(at, dir);
        at = l.to;
        links.push(l);
    }
    links.push(Link::ejection(dst));
    Ok(Path { links })
}

/// Lengths of the pre-CD, CD and post-CD sections of a higher-priority path
/// relative to a lower-priority one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathDecomposition {
    pub pre: usize,
    pub cd: usize,
    pub post: usize,
}

impl PathDecomposition {
    /// Builds a decomposition from section lengths; `cd` must be at least 1.
    pub fn new(pre: usize, cd: usize, post: usize) -> Result<Self> {
        if cd == 0 {
            return Err(Error::Config(
                "a contention domain has at least one link".into(),
            ));
        }
        Ok(PathDecomposition { pre, cd, post })
    }

    /// `|L|` of the decomposed (higher-priority) path.
    pub fn total(&self) -> usize {
        self.pre + self.cd + self.post
    }

    pub fn is_full_overlap(&self) -> bool {
        self.pre == 0 && self.post == 0
    }
}

/// Splits `higher` into the sections before, inside and after the links it
/// shares with `lower`. Returns `Ok(None)` when the paths share no link.
pub fn decompose(higher: &Path, lower: &Path) -> Result<Option<PathDecomposition>> {
    let shared: Vec<usize> = higher
        .links
        .iter()
        .enumerate()
        .filter(|(_, l)| lower.links.contains(l))
        .map(|(i, _)| i)
        .collect();
    let (Some(&first), Some(&last)) = (shared.first(), shared.last()) else {
        return Ok(None);
    };
    if last - first + 1 != shared.len() {
        return Err(Error::ModelViolation(format!(
            "shared links between paths {} -> {} and {} -> {} are not contiguous",
            higher.source(),
            higher.destination(),
            lower.source(),
            lower.destination()
        )));
    }
    Ok(Some(PathDecomposition {
        pre: first,
        cd: shared.len(),
        post: higher.len() - last - 1,
    }))
}
