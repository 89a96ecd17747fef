//! Node placement on the plane and the geometric queries built on it.
//!
//! Placements are generated with a minimum pairwise spacing of 1 and then
//! normalized so the closest pair sits at distance exactly 1. Under that
//! normalization the diameter of the deployment equals `gamma`, the ratio of
//! the largest to the smallest pairwise distance.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Resample budget per point before generation gives up.
pub const RESAMPLE_BUDGET: usize = 1000;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Default)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(&self, other: &Point<T>) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    Normal,
    Exponential,
}

impl Distribution {
    pub const ALL: [Distribution; 3] = [Distribution::Uniform, Distribution::Normal, Distribution::Exponential];

    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::Normal => "normal",
            Distribution::Exponential => "exponential",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Distribution {
    type Err = DeploymentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Distribution::Uniform),
            "normal" => Ok(Distribution::Normal),
            "exponential" => Ok(Distribution::Exponential),
            other => Err(DeploymentError::InvalidSpec(format!("unknown distribution `{other}`"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum DeploymentError {
    #[error("invalid deployment spec: {0}")]
    InvalidSpec(String),
    #[error("could not place node {placed} of {n} with unit spacing after {budget} resamples")]
    Infeasible { placed: usize, n: usize, budget: usize },
    #[error("node {0} is not part of the placement")]
    InvalidNode(NodeId),
    #[error("placement text line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What to generate: node count, plane, distribution and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct DeploymentSpec<T> {
    pub distribution: Distribution,
    pub width: T,
    pub height: T,
    pub n: usize,
    pub seed: u64,
    /// Standard deviation of the normal distribution as a fraction of each extent.
    pub normal_sd_frac: f64,
    /// Mean offset from the origin corner of the exponential distribution, as a
    /// fraction of each extent.
    pub exp_mean_frac: f64,
}

impl<T: Scalar> DeploymentSpec<T> {
    pub fn new(distribution: Distribution, width: T, height: T, n: usize, seed: u64) -> Self {
        Self {
            distribution,
            width,
            height,
            n,
            seed,
            normal_sd_frac: 1.0 / 6.0,
            exp_mean_frac: 0.25,
        }
    }

    pub fn uniform(side: T, n: usize, seed: u64) -> Self {
        Self::new(Distribution::Uniform, side, side, n, seed)
    }

    pub fn validate(&self) -> Result<(), DeploymentError> {
        if self.n == 0 {
            return Err(DeploymentError::InvalidSpec("n must be at least 1".into()));
        }
        if !(self.width > T::zero() && self.height > T::zero()) {
            return Err(DeploymentError::InvalidSpec("plane extents must be positive".into()));
        }
        if !(self.normal_sd_frac > 0.0 && self.exp_mean_frac > 0.0) {
            return Err(DeploymentError::InvalidSpec("distribution parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Immutable geometry of a deployment.
#[derive(Clone, Debug, PartialEq)]
pub struct NodePlacement<T> {
    positions: Vec<Point<T>>,
    gamma: T,
    width: T,
    height: T,
}

impl<T: Scalar> NodePlacement<T> {
    /// Wraps explicit coordinates without rescaling.
    ///
    /// Every pair must be at least 1 apart. `gamma` is taken as the largest
    /// pairwise distance (1 for a single node), which coincides with the
    /// max/min ratio when the closest pair is exactly 1 apart.
    pub fn from_positions(positions: Vec<Point<T>>) -> Result<Self, DeploymentError> {
        if positions.is_empty() {
            return Err(DeploymentError::InvalidSpec("placement needs at least one node".into()));
        }
        let (min, max) = extreme_distances(&positions);
        if positions.len() > 1 && min < T::one() {
            return Err(DeploymentError::InvalidSpec(format!("pairwise distance {min} below 1")));
        }
        let (width, height) = bounding_extents(&positions);
        Ok(Self {
            gamma: max.max(T::one()),
            positions,
            width,
            height,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn plane(&self) -> (T, T) {
        (self.width, self.height)
    }

    pub fn positions(&self) -> &[Point<T>] {
        &self.positions
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n()).map(NodeId)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.0 < self.n()
    }

    pub fn position(&self, v: NodeId) -> Result<Point<T>, DeploymentError> {
        self.positions.get(v.0).copied().ok_or(DeploymentError::InvalidNode(v))
    }

    pub fn distance(&self, u: NodeId, v: NodeId) -> Result<T, DeploymentError> {
        let a = self.position(u)?;
        let b = self.position(v)?;
        Ok(a.dist(&b))
    }

    /// Unchecked distance for hot loops; panics on an invalid id.
    #[inline]
    pub fn d(&self, u: NodeId, v: NodeId) -> T {
        self.positions[u.0].dist(&self.positions[v.0])
    }

    /// Ids `u != v` with `d(u, v) <= r`, ascending.
    pub fn neighbors_within(&self, v: NodeId, r: T) -> Result<Vec<NodeId>, DeploymentError> {
        let pv = self.position(v)?;
        Ok(self
            .positions
            .iter()
            .enumerate()
            .filter(|&(u, pu)| u != v.0 && pu.dist(&pv) <= r)
            .map(|(u, _)| NodeId(u))
            .collect())
    }

    /// Writes the `n gamma` header followed by one `id x y` line per node.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<(), DeploymentError> {
        writeln!(out, "{} {:.16e}", self.n(), self.gamma.as_f64())?;
        for (i, p) in self.positions.iter().enumerate() {
            writeln!(out, "{} {:.16e} {:.16e}", i, p.x.as_f64(), p.y.as_f64())?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self, DeploymentError> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or(DeploymentError::Parse { line: 1, msg: "missing header".into() })?;
        let header = header?;
        let mut fields = header.split_whitespace();
        let n: usize = parse_field(fields.next(), 1, "n")?;
        let _gamma: f64 = parse_field(fields.next(), 1, "gamma")?;
        let mut slots: Vec<Option<Point<T>>> = vec![None; n];
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let id: usize = parse_field(f.next(), lineno, "id")?;
            let x: f64 = parse_field(f.next(), lineno, "x")?;
            let y: f64 = parse_field(f.next(), lineno, "y")?;
            let slot = slots.get_mut(id).ok_or(DeploymentError::Parse {
                line: lineno,
                msg: format!("id {id} out of range"),
            })?;
            if slot.is_some() {
                return Err(DeploymentError::Parse { line: lineno, msg: format!("duplicate id {id}") });
            }
            *slot = Some(Point::new(T::of(x), T::of(y)));
        }
        let positions = slots
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or(DeploymentError::Parse { line: 0, msg: format!("missing node {i}") }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_positions(positions)
    }
}

fn parse_field<F: FromStr>(s: Option<&str>, line: usize, what: &str) -> Result<F, DeploymentError> {
    s.ok_or_else(|| DeploymentError::Parse { line, msg: format!("missing {what}") })?
        .parse()
        .map_err(|_| DeploymentError::Parse { line, msg: format!("bad {what}") })
}

/// Smallest and largest pairwise distance by exhaustive scan. For a single
/// node both are reported as 1.
pub fn extreme_distances<T: Scalar>(pts: &[Point<T>]) -> (T, T) {
    if pts.len() < 2 {
        return (T::one(), T::one());
    }
    let mut min = T::infinity();
    let mut max = T::zero();
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let d = a.dist(b);
            min = min.min(d);
            max = max.max(d);
        }
    }
    (min, max)
}

fn bounding_extents<T: Scalar>(pts: &[Point<T>]) -> (T, T) {
    let w = pts.iter().fold(T::zero(), |m, p| m.max(p.x));
    let h = pts.iter().fold(T::zero(), |m, p| m.max(p.y));
    (w.max(T::one()), h.max(T::one()))
}

/// Uniform-grid index with unit cells used for the spacing check.
struct SpacingGrid {
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl SpacingGrid {
    fn new() -> Self {
        Self { cells: HashMap::new() }
    }

    fn cell<T: Scalar>(p: &Point<T>) -> (i64, i64) {
        (p.x.as_f64().floor() as i64, p.y.as_f64().floor() as i64)
    }

    fn clear_of<T: Scalar>(&self, pts: &[Point<T>], p: &Point<T>) -> bool {
        let (cx, cy) = Self::cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) {
                    if ids.iter().any(|&i| pts[i].dist(p) < T::one()) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn insert<T: Scalar>(&mut self, idx: usize, p: &Point<T>) {
        self.cells.entry(Self::cell(p)).or_default().push(idx);
    }
}

fn sample_point<T: Scalar>(spec: &DeploymentSpec<T>, rng: &mut ChaCha8Rng) -> Point<T> {
    let w = spec.width.as_f64();
    let h = spec.height.as_f64();
    // Truncation to the plane is by redrawing the offending coordinate.
    let draw = |rng: &mut ChaCha8Rng, extent: f64| -> f64 {
        match spec.distribution {
            Distribution::Uniform => rng.random_range(0.0..=extent),
            Distribution::Normal => {
                let normal = Normal::new(extent / 2.0, extent * spec.normal_sd_frac).expect("positive sd");
                loop {
                    let v = normal.sample(rng);
                    if (0.0..=extent).contains(&v) {
                        break v;
                    }
                }
            }
            Distribution::Exponential => {
                let exp = Exp::new(1.0 / (extent * spec.exp_mean_frac)).expect("positive rate");
                loop {
                    let v: f64 = exp.sample(rng);
                    if v <= extent {
                        break v;
                    }
                }
            }
        }
    };
    let x = draw(rng, w);
    let y = draw(rng, h);
    Point::new(T::of(x), T::of(y))
}

/// Generates a placement: min spacing 1 by rejection, then normalized so the
/// closest pair is exactly 1 apart. Deterministic in `spec.seed`.
pub fn generate<T: Scalar>(spec: &DeploymentSpec<T>) -> Result<NodePlacement<T>, DeploymentError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pts: Vec<Point<T>> = Vec::with_capacity(spec.n);
    let mut grid = SpacingGrid::new();
    for placed in 0..spec.n {
        let mut accepted = None;
        for _ in 0..RESAMPLE_BUDGET {
            let p = sample_point(spec, &mut rng);
            if grid.clear_of(&pts, &p) {
                accepted = Some(p);
                break;
            }
        }
        let p = accepted.ok_or(DeploymentError::Infeasible {
            placed,
            n: spec.n,
            budget: RESAMPLE_BUDGET,
        })?;
        grid.insert(placed, &p);
        pts.push(p);
    }

    if pts.len() == 1 {
        return Ok(NodePlacement {
            positions: pts,
            gamma: T::one(),
            width: spec.width,
            height: spec.height,
        });
    }

    let (dmin, _) = extreme_distances(&pts);
    let original = pts.clone();
    let mut scale = T::one() / dmin;
    let bump = T::one() + T::epsilon() * T::of(4.0);
    let positions = loop {
        let scaled: Vec<Point<T>> = original.iter().map(|p| Point::new(p.x * scale, p.y * scale)).collect();
        let (min, _) = extreme_distances(&scaled);
        if min >= T::one() {
            break scaled;
        }
        scale = scale * bump;
    };
    let (_, dmax) = extreme_distances(&positions);
    Ok(NodePlacement {
        positions,
        gamma: dmax.max(T::one()),
        width: spec.width,
        height: spec.height,
    })
}
