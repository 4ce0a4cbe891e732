//! Problem configuration: flat `key = value` text with `[section]` headers.
//!
//! Sections and keys are fixed; unknown names are errors so typos surface
//! instead of silently falling back to defaults. [`ProblemConfig::serialize`]
//! writes the canonical form (fixed section and key order, canonical
//! expression printing, LF endings), so parse then serialize is idempotent.
//!
//! ```text
//! [problem]
//! T = 20
//! f = sin(t)
//! g = 0
//! h = 0
//! a = 1
//!
//! [temporal]
//! K = 100
//! nref = 1
//! spacing = uniform
//! seed = 0
//!
//! [mesh]
//! builtin = lshape 1
//!
//! [solver]
//! tol = 1e-4
//! maxit = 100
//! quadrature = trapz
//!
//! [output]
//! snapshots = 0 1 2 3 4 5
//!
//! [sweep]
//! K = 8 16 32 64 128
//! nref = 0 1
//!
//! [compare]
//! K = 8 16 32 64
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::expr::{self, Expr};
use stheat::spacetime::QuadratureRule;
use stheat::{Error, Result};

/// Temporal node placement.
#[derive(Debug, Clone, PartialEq)]
pub enum Spacing {
    Uniform,
    /// Seeded random interior nodes.
    Random,
    /// Explicit node list from 0 to the horizon.
    Explicit(Vec<f64>),
}

/// Spatial mesh source.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    UnitInterval(usize),
    Lshape(usize),
    Dir(PathBuf),
}

/// Everything a run needs; defaults reproduce the reference problem
/// (T = 20, K = 100, f = sin(t), homogeneous data, tol = 1e-4, maxit = 100,
/// one test-mesh refinement, snapshots at seconds 0 through 5).
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub horizon: f64,
    pub f: Expr,
    pub g: Expr,
    pub h: Expr,
    pub a: Expr,
    pub num_elements: usize,
    pub nref: usize,
    pub spacing: Spacing,
    pub seed: u64,
    pub mesh: MeshSpec,
    pub tol: f64,
    pub maxit: usize,
    pub quadrature: QuadratureRule,
    pub snapshots: Vec<f64>,
    pub sweep_k: Vec<usize>,
    pub sweep_nref: Vec<usize>,
    pub compare_k: Vec<usize>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            horizon: 20.0,
            f: expr::parse("sin(t)").unwrap(),
            g: expr::parse("0").unwrap(),
            h: expr::parse("0").unwrap(),
            a: expr::parse("1").unwrap(),
            num_elements: 100,
            nref: 1,
            spacing: Spacing::Uniform,
            seed: 0,
            mesh: MeshSpec::Lshape(1),
            tol: 1e-4,
            maxit: 100,
            quadrature: QuadratureRule::Trapezoid,
            snapshots: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            sweep_k: vec![8, 16, 32, 64, 128],
            sweep_nref: vec![0, 1],
            compare_k: vec![8, 16, 32, 64],
        }
    }
}

fn invalid(line: usize, message: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("config line {line}: {message}"))
}

fn parse_expr(value: &str, line: usize) -> Result<Expr> {
    expr::parse(value).map_err(|e| invalid(line, e))
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(line, format!("cannot read {what} from `{value}`")))
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize, what: &str) -> Result<Vec<T>> {
    value
        .split_whitespace()
        .map(|tok| parse_num(tok, line, what))
        .collect()
}

impl ProblemConfig {
    /// Parses the `key = value` format; keys omitted keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ProblemConfig::default();
        let mut snapshots_set = false;
        let mut section = String::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| invalid(line, "unterminated section header"))?;
                section = match name {
                    "problem" | "temporal" | "mesh" | "solver" | "output" | "sweep"
                    | "compare" => name.to_string(),
                    other => return Err(invalid(line, format!("unknown section `{other}`"))),
                };
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| invalid(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            match (section.as_str(), key) {
                ("problem", "T") => cfg.horizon = parse_num(value, line, "the horizon")?,
                ("problem", "f") => cfg.f = parse_expr(value, line)?,
                ("problem", "g") => cfg.g = parse_expr(value, line)?,
                ("problem", "h") => cfg.h = parse_expr(value, line)?,
                ("problem", "a") => cfg.a = parse_expr(value, line)?,
                ("temporal", "K") => cfg.num_elements = parse_num(value, line, "K")?,
                ("temporal", "nref") => cfg.nref = parse_num(value, line, "nref")?,
                ("temporal", "spacing") => {
                    cfg.spacing = match value {
                        "uniform" => Spacing::Uniform,
                        "random" => Spacing::Random,
                        "explicit" => Spacing::Explicit(Vec::new()),
                        other => {
                            return Err(invalid(
                                line,
                                format!("spacing must be uniform, random or explicit, got `{other}`"),
                            ))
                        }
                    }
                }
                ("temporal", "nodes") => {
                    cfg.spacing = Spacing::Explicit(parse_list(value, line, "a node")?)
                }
                ("temporal", "seed") => cfg.seed = parse_num(value, line, "the seed")?,
                ("mesh", "builtin") => {
                    let mut parts = value.split_whitespace();
                    let kind = parts.next().unwrap_or("");
                    let arg = parts
                        .next()
                        .ok_or_else(|| invalid(line, "builtin mesh needs a size argument"))?;
                    if parts.next().is_some() {
                        return Err(invalid(line, "too many builtin mesh arguments"));
                    }
                    let n = parse_num(arg, line, "the mesh size")?;
                    cfg.mesh = match kind {
                        "unit-interval" => MeshSpec::UnitInterval(n),
                        "lshape" => MeshSpec::Lshape(n),
                        other => {
                            return Err(invalid(
                                line,
                                format!("builtin mesh must be unit-interval or lshape, got `{other}`"),
                            ))
                        }
                    };
                }
                ("mesh", "dir") => cfg.mesh = MeshSpec::Dir(PathBuf::from(value)),
                ("solver", "tol") => cfg.tol = parse_num(value, line, "the tolerance")?,
                ("solver", "maxit") => cfg.maxit = parse_num(value, line, "maxit")?,
                ("solver", "quadrature") => {
                    cfg.quadrature = match value {
                        "trapz" => QuadratureRule::Trapezoid,
                        "gauss2" => QuadratureRule::TwoPointGauss,
                        other => {
                            return Err(invalid(
                                line,
                                format!("quadrature must be trapz or gauss2, got `{other}`"),
                            ))
                        }
                    }
                }
                ("output", "snapshots") => {
                    cfg.snapshots = parse_list(value, line, "a snapshot time")?;
                    snapshots_set = true;
                }
                ("sweep", "K") => cfg.sweep_k = parse_list(value, line, "K")?,
                ("sweep", "nref") => cfg.sweep_nref = parse_list(value, line, "nref")?,
                ("compare", "K") => cfg.compare_k = parse_list(value, line, "K")?,
                ("", _) => return Err(invalid(line, "key before any [section] header")),
                (section, key) => {
                    return Err(invalid(
                        line,
                        format!("unknown key `{key}` in section [{section}]"),
                    ))
                }
            }
        }
        // An explicit node list determines the element count.
        if let Spacing::Explicit(nodes) = &cfg.spacing {
            if nodes.len() >= 2 {
                cfg.num_elements = nodes.len() - 1;
            }
        }
        // Default snapshots are the integer seconds that fit the horizon.
        if !snapshots_set {
            cfg.snapshots.retain(|&t| t <= cfg.horizon);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ProblemConfig::parse(&text)
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[problem]");
        let _ = writeln!(out, "T = {}", self.horizon);
        let _ = writeln!(out, "f = {}", self.f);
        let _ = writeln!(out, "g = {}", self.g);
        let _ = writeln!(out, "h = {}", self.h);
        let _ = writeln!(out, "a = {}", self.a);
        let _ = writeln!(out, "\n[temporal]");
        let _ = writeln!(out, "K = {}", self.num_elements);
        let _ = writeln!(out, "nref = {}", self.nref);
        match &self.spacing {
            Spacing::Uniform => {
                let _ = writeln!(out, "spacing = uniform");
            }
            Spacing::Random => {
                let _ = writeln!(out, "spacing = random");
            }
            Spacing::Explicit(nodes) => {
                let _ = writeln!(out, "nodes = {}", join_floats(nodes));
            }
        }
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "\n[mesh]");
        match &self.mesh {
            MeshSpec::UnitInterval(n) => {
                let _ = writeln!(out, "builtin = unit-interval {n}");
            }
            MeshSpec::Lshape(n) => {
                let _ = writeln!(out, "builtin = lshape {n}");
            }
            MeshSpec::Dir(path) => {
                let _ = writeln!(out, "dir = {}", path.display());
            }
        }
        let _ = writeln!(out, "\n[solver]");
        let _ = writeln!(out, "tol = {}", self.tol);
        let _ = writeln!(out, "maxit = {}", self.maxit);
        let quadrature = match self.quadrature {
            QuadratureRule::Trapezoid => "trapz",
            QuadratureRule::TwoPointGauss => "gauss2",
        };
        let _ = writeln!(out, "quadrature = {quadrature}");
        let _ = writeln!(out, "\n[output]");
        let _ = writeln!(out, "snapshots = {}", join_floats(&self.snapshots));
        let _ = writeln!(out, "\n[sweep]");
        let _ = writeln!(out, "K = {}", join_counts(&self.sweep_k));
        let _ = writeln!(out, "nref = {}", join_counts(&self.sweep_nref));
        let _ = writeln!(out, "\n[compare]");
        let _ = writeln!(out, "K = {}", join_counts(&self.compare_k));
        out
    }

    /// The invariants a run relies on.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Err(Error::InvalidInput(format!("config: {message}")));
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return fail(format!("T must be positive and finite, got {}", self.horizon));
        }
        if self.num_elements == 0 {
            return fail("K must be at least 1".into());
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return fail(format!("tol must be positive and finite, got {}", self.tol));
        }
        if self.maxit == 0 {
            return fail("maxit must be at least 1".into());
        }
        for &t in &self.snapshots {
            if !(0.0..=self.horizon).contains(&t) {
                return fail(format!("snapshot time {t} outside [0, {}]", self.horizon));
            }
        }
        if let Spacing::Explicit(nodes) = &self.spacing {
            if nodes.len() < 2 {
                return fail("explicit spacing needs at least two nodes".into());
            }
            if nodes[0] != 0.0 {
                return fail(format!("explicit nodes must start at 0, got {}", nodes[0]));
            }
            if !nodes.windows(2).all(|w| w[0] < w[1]) {
                return fail("explicit nodes must be strictly increasing".into());
            }
            let last = *nodes.last().unwrap();
            if last != self.horizon {
                return fail(format!(
                    "explicit nodes must end at T = {}, got {last}",
                    self.horizon
                ));
            }
        }
        match self.mesh {
            MeshSpec::UnitInterval(n) if n == 0 => {
                return fail("unit-interval mesh needs at least one element".into())
            }
            _ => {}
        }
        if self.h.uses_time() {
            return fail("initial datum h may not reference t".into());
        }
        if self.a.uses_time() {
            return fail("diffusion coefficient a may not reference t".into());
        }
        if self.sweep_k.is_empty() || self.sweep_nref.is_empty() || self.compare_k.is_empty() {
            return fail("sweep and compare lists must not be empty".into());
        }
        if self.sweep_k.contains(&0) || self.compare_k.contains(&0) {
            return fail("K lists must contain positive counts".into());
        }
        Ok(())
    }
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn join_counts(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
