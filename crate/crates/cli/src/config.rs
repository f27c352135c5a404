//! Flat `key = value` run configuration. Parsing is fail-closed: unknown,
//! duplicate, or malformed keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};
use xcf_core::boundary::{BoundaryMode, BoundarySpec, Face, Lambda};
use xcf_core::chart::{make_chart, read_snapshot, ChartSpec, MetricField};
use xcf_core::curvature::{compute_bundle, sectional_report, SectionalClass};
use xcf_core::deturck::BackgroundKind;
use xcf_core::oracles::SpaceFormKind;
use xcf_core::tensor::IDENTITY;

pub const DEFAULT_CFL: f64 = xcf_core::evolve::DEFAULT_CFL;
pub const DEFAULT_N: usize = 16;

const KEYS: [&str; 21] = [
    "initial",
    "nx",
    "ny",
    "nz",
    "lx",
    "ly",
    "z_min",
    "z_max",
    "sign",
    "force_sign",
    "background",
    "boundary",
    "lambda",
    "faces",
    "t_end",
    "cfl",
    "cadence",
    "seed",
    "diagnostics",
    "snapshot",
    "pullback_delta_steps",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    SpaceForm(SpaceFormKind),
    Flat,
    Snapshot(PathBuf),
}

impl Initial {
    fn parse(s: &str) -> Result<Self> {
        if s == "flat" {
            return Ok(Initial::Flat);
        }
        if let Some(p) = s.strip_prefix("snapshot:") {
            let p = p.trim();
            if p.is_empty() {
                bail!("snapshot initial data needs a path");
            }
            return Ok(Initial::Snapshot(PathBuf::from(p)));
        }
        s.parse::<SpaceFormKind>()
            .map(Initial::SpaceForm)
            .map_err(|e| anyhow!(e))
    }

    fn describe(&self) -> String {
        match self {
            Initial::SpaceForm(k) => k.name().to_string(),
            Initial::Flat => "flat".to_string(),
            Initial::Snapshot(p) => format!("snapshot:{}", p.display()),
        }
    }

    fn default_chart(&self, n: usize) -> Option<ChartSpec> {
        match self {
            Initial::SpaceForm(k) => Some(k.default_chart(n)),
            Initial::Flat => Some(ChartSpec::slab(n, n, n, 1.0, 1.0, 0.0, 1.0)),
            Initial::Snapshot(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub initial: Initial,
    /// `None` when the chart comes from a snapshot file.
    pub chart: Option<ChartSpec>,
    pub sign: f64,
    pub force_sign: bool,
    pub background: BackgroundKind,
    pub boundary: BoundaryMode,
    /// Kept as written (`power`, a number, or `table:<path>`).
    pub lambda: String,
    pub faces: Vec<Face>,
    pub t_end: f64,
    pub cfl: f64,
    pub cadence: usize,
    pub seed: u64,
    pub diagnostics: String,
    pub snapshot: String,
    pub pullback_delta_steps: usize,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| anyhow!("key '{key}': cannot parse '{v}': {e}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => bail!("key '{key}': expected true or false, got '{v}'"),
    }
}

fn parse_faces(v: &str) -> Result<Vec<Face>> {
    let mut out = Vec::new();
    for name in v.split(',').map(str::trim) {
        let f = match name {
            "z_min" => Face::ZMin,
            "z_max" => Face::ZMax,
            "" => continue,
            other => bail!("key 'faces': unknown face '{other}'"),
        };
        if out.contains(&f) {
            bail!("key 'faces': face '{name}' listed twice");
        }
        out.push(f);
    }
    Ok(out)
}

fn file_name(key: &str, v: &str) -> Result<String> {
    if v.is_empty() || v.contains('/') || v.contains('\\') || v == "." || v == ".." {
        bail!("key '{key}': expected a plain file name, got '{v}'");
    }
    Ok(v.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected 'key = value', got '{line}'", n + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                bail!("line {}: unknown key '{k}'", n + 1);
            }
            if kv.insert(k, v).is_some() {
                bail!("line {}: duplicate key '{k}'", n + 1);
            }
        }
        let take = |k: &str| kv.get(k).copied();
        let initial = Initial::parse(
            take("initial").ok_or_else(|| anyhow!("missing required key 'initial'"))?,
        )?;
        let t_end: f64 = parse_num(
            "t_end",
            take("t_end").ok_or_else(|| anyhow!("missing required key 't_end'"))?,
        )?;
        if !(t_end >= 0.0) || !t_end.is_finite() {
            bail!("key 't_end': must be a finite nonnegative time, got {t_end}");
        }

        let chart_keys = ["nx", "ny", "nz", "lx", "ly", "z_min", "z_max"];
        let chart = match initial.default_chart(DEFAULT_N) {
            None => {
                if let Some(k) = chart_keys.iter().find(|k| kv.contains_key(**k)) {
                    bail!("key '{k}': the chart of snapshot initial data comes from the file");
                }
                None
            }
            Some(d) => {
                let size =
                    |k: &str, dv: usize| take(k).map_or(Ok(dv), |v| parse_num::<usize>(k, v));
                let ext = |k: &str, dv: f64| take(k).map_or(Ok(dv), |v| parse_num::<f64>(k, v));
                let spec = ChartSpec::slab(
                    size("nx", d.nx)?,
                    size("ny", d.ny)?,
                    size("nz", d.nz)?,
                    ext("lx", d.lx)?,
                    ext("ly", d.ly)?,
                    ext("z_min", d.z_min)?,
                    ext("z_max", d.z_max)?,
                );
                Some(make_chart(spec).map_err(|e| anyhow!("invalid chart: {e}"))?)
            }
        };

        let sign = match take("sign").unwrap_or("+1") {
            "+1" | "1" => 1.0,
            "-1" => -1.0,
            other => bail!("key 'sign': expected +1 or -1, got '{other}'"),
        };
        let force_sign = take("force_sign").map_or(Ok(false), |v| parse_bool("force_sign", v))?;
        let background = take("background")
            .unwrap_or("initial-metric")
            .parse::<BackgroundKind>()
            .map_err(|e| anyhow!("key 'background': {e}"))?;
        let boundary = take("boundary")
            .unwrap_or("umbilic")
            .parse::<BoundaryMode>()
            .map_err(|e| anyhow!("key 'boundary': {e}"))?;
        if boundary == BoundaryMode::DirichletExact && !matches!(initial, Initial::SpaceForm(_)) {
            bail!("key 'boundary': dirichlet-exact needs a space-form initial preset");
        }
        let lambda = take("lambda").unwrap_or("power").to_string();
        Lambda::parse(&lambda).map_err(|e| anyhow!("key 'lambda': {e}"))?;
        let faces = take("faces").map_or(Ok(Face::BOTH.to_vec()), parse_faces)?;
        let cfl: f64 = take("cfl").map_or(Ok(DEFAULT_CFL), |v| parse_num("cfl", v))?;
        if !(cfl > 0.0) || !cfl.is_finite() {
            bail!("key 'cfl': must be positive, got {cfl}");
        }
        let cadence: usize = take("cadence").map_or(Ok(10), |v| parse_num("cadence", v))?;
        if cadence == 0 {
            bail!("key 'cadence': must be at least 1");
        }
        let seed: u64 = take("seed").map_or(Ok(0), |v| parse_num("seed", v))?;
        let diagnostics = file_name(
            "diagnostics",
            take("diagnostics").unwrap_or("diagnostics.tsv"),
        )?;
        let snapshot = file_name("snapshot", take("snapshot").unwrap_or("final.xcf"))?;
        let pullback_delta_steps: usize =
            take("pullback_delta_steps").map_or(Ok(5), |v| parse_num("pullback_delta_steps", v))?;
        if pullback_delta_steps == 0 {
            bail!("key 'pullback_delta_steps': must be at least 1");
        }
        Ok(RunConfig {
            initial,
            chart,
            sign,
            force_sign,
            background,
            boundary,
            lambda,
            faces,
            t_end,
            cfl,
            cadence,
            seed,
            diagnostics,
            snapshot,
            pullback_delta_steps,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Every key with its resolved value, one per line, in a fixed order.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("initial", self.initial.describe());
        if let Some(c) = &self.chart {
            put("nx", c.nx.to_string());
            put("ny", c.ny.to_string());
            put("nz", c.nz.to_string());
            put("lx", c.lx.to_string());
            put("ly", c.ly.to_string());
            put("z_min", c.z_min.to_string());
            put("z_max", c.z_max.to_string());
        }
        put(
            "sign",
            if self.sign > 0.0 { "+1" } else { "-1" }.to_string(),
        );
        put("force_sign", self.force_sign.to_string());
        put("background", self.background.name().to_string());
        put("boundary", self.boundary.name().to_string());
        put("lambda", self.lambda.clone());
        put(
            "faces",
            self.faces
                .iter()
                .map(|f| f.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("t_end", self.t_end.to_string());
        put("cfl", self.cfl.to_string());
        put("cadence", self.cadence.to_string());
        put("seed", self.seed.to_string());
        put("diagnostics", self.diagnostics.clone());
        put("snapshot", self.snapshot.clone());
        put(
            "pullback_delta_steps",
            self.pullback_delta_steps.to_string(),
        );
        s
    }

    /// Hex SHA-256 of the serialized config.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.serialize().as_bytes()))
    }

    /// `<base>/run-<first 16 hex digits of the hash>`.
    pub fn run_dir(&self, base: &Path) -> PathBuf {
        base.join(format!("run-{}", &self.hash()[..16]))
    }

    pub fn boundary_spec(&self) -> Result<BoundarySpec> {
        let mut spec = BoundarySpec::new(self.boundary, Lambda::parse(&self.lambda)?);
        spec.faces = self.faces.clone();
        if self.boundary == BoundaryMode::DirichletExact {
            match &self.initial {
                Initial::SpaceForm(k) => spec = spec.with_exact(k.exact_solution()),
                _ => bail!("dirichlet-exact needs a space-form initial preset"),
            }
        }
        Ok(spec)
    }

    /// The initial metric with ghosts filled.
    pub fn initial_metric(&self) -> Result<MetricField> {
        let mut g = match (&self.initial, &self.chart) {
            (Initial::SpaceForm(k), Some(c)) => k.metric(*c, 0.0)?,
            (Initial::Flat, Some(c)) => MetricField::constant(*c, IDENTITY),
            (Initial::Snapshot(p), _) => {
                read_snapshot(p).with_context(|| format!("reading {}", p.display()))?
            }
            _ => bail!("no chart for initial data {}", self.initial.describe()),
        };
        if !g.ghosts_filled() {
            g.extrapolate_ghosts();
        }
        Ok(g)
    }
}

/// Flow sign required by the curvature sign of `g0`, if it has one.
pub fn required_sign(g0: &MetricField) -> Result<(SectionalClass, Option<f64>)> {
    let report = sectional_report(&compute_bundle(g0)?);
    let s = match report.classification {
        SectionalClass::AllNegative => Some(1.0),
        SectionalClass::AllPositive => Some(-1.0),
        SectionalClass::Mixed => None,
    };
    Ok((report.classification, s))
}

/// Rejects a flow sign that contradicts the curvature sign of the initial
/// data unless `force` is set.
pub fn check_sign(sign: f64, g0: &MetricField, force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    let (class, want) = required_sign(g0)?;
    if let Some(w) = want {
        if w != sign {
            bail!(
                "initial data are {} but sign = {:+}; the existence result needs sign {:+} for this curvature sign \
                 (set force_sign = true or pass --force-sign to override)",
                class.label(),
                sign,
                w
            );
        }
    }
    Ok(())
}
