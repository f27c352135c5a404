//! Method-of-lines time integration of `∂g/∂t = ±2c + L_W g` with classical
//! RK4, boundary closures before every stage, and diagnostics records.

use std::fmt;

use rayon::prelude::*;

use crate::boundary::{boundary_residuals, fill_ghosts, BoundarySpec};
use crate::chart::{metric_jet, MetricField};
use crate::curvature::point_curvature;
use crate::deturck::{gauge_vector, rhs_point, BackgroundConnection, BackgroundKind};
use crate::error::{Result, XcfError};
use crate::symbol::parabolicity_report;
use crate::tensor::{relative_eigenvalues, Sym3, Vec3};

/// Default safety factor of the step-size rule.
pub const DEFAULT_CFL: f64 = 0.2;

/// Nodes sampled for the symbol diagnostic.
const SYMBOL_SAMPLE_NODES: usize = 64;

/// The evolving metric and everything needed to advance it.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub g: MetricField,
    /// Initial data, used by pinned faces.
    pub g0: MetricField,
    /// `+1` for `∂g/∂t = 2c`, `−1` for `∂g/∂t = −2c`.
    pub sign: f64,
    pub bg: BackgroundConnection,
    pub spec: BoundarySpec,
    /// Last step taken (0 before the first step).
    pub dt: f64,
    pub cfl: f64,
    pub steps: usize,
}

/// One line of the diagnostics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    pub min_eig_e: f64,
    pub max_eig_e: f64,
    pub symbol_min_eig: f64,
    pub umbilic_res: f64,
    pub offdiag_res: f64,
    pub w3_res: f64,
    pub xcf_residual: Option<f64>,
}

impl DiagnosticsRecord {
    pub const HEADER: &'static str =
        "# t\tdt\tmin_eig_E\tmax_eig_E\tsymbol_min_eig\tumbilic_res\toffdiag_res\tw3_res\txcf_residual";

    fn values(&self) -> [f64; 8] {
        [
            self.t,
            self.dt,
            self.min_eig_e,
            self.max_eig_e,
            self.symbol_min_eig,
            self.umbilic_res,
            self.offdiag_res,
            self.w3_res,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
            && self.xcf_residual.map_or(true, f64::is_finite)
    }
}

impl fmt::Display for DiagnosticsRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in self.values() {
            write!(f, "{v:.16e}\t")?;
        }
        match self.xcf_residual {
            Some(v) => write!(f, "{v:.16e}"),
            None => write!(f, "-"),
        }
    }
}

impl FlowState {
    /// Builds the state at `t = 0` and applies the boundary closure to `g0`.
    /// An initial-metric background is taken from the closed data.
    ///
    /// `g0` may arrive without ghosts (for example from a snapshot); they are
    /// then filled by polynomial extrapolation before the background is built.
    pub fn new(
        mut g0: MetricField,
        sign: f64,
        background: BackgroundKind,
        spec: BoundarySpec,
        cfl: f64,
    ) -> Result<Self> {
        if !(sign == 1.0 || sign == -1.0) {
            return Err(XcfError::InvalidTime(format!(
                "flow sign must be ±1, got {sign}"
            )));
        }
        if !(cfl > 0.0) || !cfl.is_finite() {
            return Err(XcfError::InvalidTime(format!(
                "cfl must be positive, got {cfl}"
            )));
        }
        g0.check_positive_definite()?;
        if !g0.ghosts_filled() {
            g0.extrapolate_ghosts();
        }
        let mut bg = BackgroundConnection::new(background, &g0)?;
        let mut g = g0.clone();
        fill_ghosts(&mut g, 0.0, &spec, &bg, &g0)?;
        if background == BackgroundKind::InitialMetric && g.chart.is_slab() {
            // The background is the initial metric as closed by the boundary
            // treatment, so that `W` vanishes identically at `t = 0`.
            bg = BackgroundConnection::from_metric(&g)?;
            fill_ghosts(&mut g, 0.0, &spec, &bg, &g0)?;
        }
        g.check_positive_definite()?;
        Ok(FlowState {
            t: 0.0,
            g,
            g0,
            sign,
            bg,
            spec,
            dt: 0.0,
            cfl,
            steps: 0,
        })
    }

    /// Nodes whose values the PDE updates: all but the two faces.
    fn evolved_layers(&self) -> std::ops::Range<usize> {
        let c = &self.g.chart;
        if c.is_slab() {
            1..c.nz - 1
        } else {
            0..c.nz
        }
    }

    /// Right-hand side on evolved nodes, and the largest spectral radius of
    /// `E^i_j` among them.
    fn stage(&self, y: &MetricField, want_rho: bool) -> Result<(Vec<Sym3>, f64)> {
        let c = y.chart;
        let layers = self.evolved_layers();
        let plane = c.plane_len();
        let first = layers.start * plane;
        let out: Vec<(Sym3, f64)> = (first..layers.end * plane)
            .into_par_iter()
            .map(|n| {
                let (i, j, k) = (n % c.nx, (n / c.nx) % c.ny, n / plane);
                let jet = metric_jet(y, i, j, k);
                let (r, pc) = rhs_point(&jet, self.bg.gamma(n), self.bg.dgamma(n), self.sign);
                let rho = if want_rho {
                    relative_eigenvalues(&pc.einstein_lo, &jet.g)
                        .map_or(f64::NAN, |e| e[0].abs().max(e[2].abs()))
                } else {
                    0.0
                };
                (r, rho)
            })
            .collect();
        let mut rho = 0.0_f64;
        let mut rhs = Vec::with_capacity(out.len());
        for (r, p) in out {
            if p.is_nan() || r.iter().any(|v| !v.is_finite()) {
                return Err(XcfError::NonFinite {
                    what: format!("right-hand side at t = {}", self.t),
                });
            }
            rho = rho.max(p);
            rhs.push(r);
        }
        Ok((rhs, rho))
    }

    fn dt_from_rho(&self, rho_e: f64) -> Result<f64> {
        let rho = rho_e + 1.0;
        if !rho.is_finite() {
            return Err(XcfError::NonFinite {
                what: "spectral radius of the Einstein tensor".into(),
            });
        }
        let h = self.g.chart.min_spacing();
        Ok(self.cfl * h * h / (2.0 * 3.0 * rho))
    }

    /// `cfl · h_min² / (2 · 3 · ρ)` with `ρ` the largest spectral radius of
    /// `E^i_j` over evolved nodes plus one for the gauge block.
    pub fn cfl_dt(&self) -> Result<f64> {
        let (_, rho) = self.stage(&self.g, true)?;
        self.dt_from_rho(rho)
    }

    fn combine(&self, base: &MetricField, parts: &[(&[Sym3], f64)]) -> MetricField {
        let mut y = base.clone();
        let c = y.chart;
        let layers = self.evolved_layers();
        let offset = c.idx(0, 0, layers.start as isize);
        let len = (layers.end - layers.start) * c.plane_len();
        y.data[offset..offset + len]
            .par_iter_mut()
            .enumerate()
            .for_each(|(n, v)| {
                for (k, w) in parts {
                    for s in 0..6 {
                        v[s] += w * k[n][s];
                    }
                }
            });
        y.set_ghosts_filled(false);
        y
    }

    /// One RK4 step of size `min(cfl_dt, dt_max)`. Returns the step taken.
    pub fn step(&mut self, dt_max: f64) -> Result<f64> {
        if !(dt_max > 0.0) {
            return Err(XcfError::InvalidTime(format!(
                "step bound must be positive, got {dt_max}"
            )));
        }
        let (k1, rho) = self.stage(&self.g, true)?;
        let dt_cfl = self.dt_from_rho(rho)?;
        let (dt, clipped) = if dt_max <= dt_cfl {
            (dt_max, true)
        } else {
            (dt_cfl, false)
        };
        let t = self.t;

        let mut y = self.combine(&self.g, &[(&k1, 0.5 * dt)]);
        fill_ghosts(&mut y, t + 0.5 * dt, &self.spec, &self.bg, &self.g0)?;
        let (k2, _) = self.stage(&y, false)?;
        let mut y = self.combine(&self.g, &[(&k2, 0.5 * dt)]);
        fill_ghosts(&mut y, t + 0.5 * dt, &self.spec, &self.bg, &self.g0)?;
        let (k3, _) = self.stage(&y, false)?;
        let mut y = self.combine(&self.g, &[(&k3, dt)]);
        fill_ghosts(&mut y, t + dt, &self.spec, &self.bg, &self.g0)?;
        let (k4, _) = self.stage(&y, false)?;

        let w = dt / 6.0;
        let mut next = self.combine(
            &self.g,
            &[(&k1, w), (&k2, 2.0 * w), (&k3, 2.0 * w), (&k4, w)],
        );
        let t_next = if clipped { t + dt_max } else { t + dt };
        fill_ghosts(&mut next, t_next, &self.spec, &self.bg, &self.g0)?;
        next.check_positive_definite()?;
        self.g = next;
        self.t = t_next;
        self.dt = dt;
        self.steps += 1;
        Ok(dt)
    }

    /// `W` at every node of the current metric, in node order.
    pub fn w_field(&self) -> Vec<Vec3> {
        let c = self.g.chart;
        let coords: Vec<_> = c.nodes().collect();
        coords
            .par_iter()
            .enumerate()
            .map(|(n, &(i, j, k))| {
                let jet = metric_jet(&self.g, i, j, k);
                let chr = crate::curvature::christoffel(&jet);
                gauge_vector(&chr, self.bg.gamma(n))
            })
            .collect()
    }

    /// Eigenvalue range of `E^i_j` over all nodes.
    pub fn einstein_range(&self) -> Result<(f64, f64)> {
        let c = self.g.chart;
        let coords: Vec<_> = c.nodes().collect();
        let eigs: Vec<Option<Vec3>> = coords
            .par_iter()
            .map(|&(i, j, k)| {
                let jet = metric_jet(&self.g, i, j, k);
                let pc = point_curvature(&jet);
                relative_eigenvalues(&pc.einstein_lo, &jet.g)
            })
            .collect();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for e in eigs {
            let e = e.ok_or_else(|| XcfError::NonFinite {
                what: "Einstein eigenvalues".into(),
            })?;
            lo = lo.min(e[0]);
            hi = hi.max(e[2]);
        }
        Ok((lo, hi))
    }

    pub fn diagnostics(&self) -> Result<DiagnosticsRecord> {
        let (min_eig_e, max_eig_e) = self.einstein_range()?;
        let symbol = parabolicity_report(&self.g, self.sign, SYMBOL_SAMPLE_NODES)?;
        let res = boundary_residuals(&self.g, self.t, &self.spec, &self.bg)?;
        let rec = DiagnosticsRecord {
            t: self.t,
            dt: self.dt,
            min_eig_e,
            max_eig_e,
            symbol_min_eig: symbol.min_eig_combined,
            umbilic_res: res.umbilic_res,
            offdiag_res: res.offdiag_res,
            w3_res: res.w3_res,
            xcf_residual: None,
        };
        if !rec.is_finite() {
            return Err(XcfError::NonFinite {
                what: format!("diagnostics at t = {}", self.t),
            });
        }
        Ok(rec)
    }

    /// Steps until `t_stop`, clipping the last step to land on it exactly.
    /// Calls `on_step` after every step.
    pub fn advance_to(
        &mut self,
        t_stop: f64,
        mut on_step: impl FnMut(&FlowState, f64) -> Result<()>,
    ) -> Result<()> {
        while self.t < t_stop {
            let dt = self.step(t_stop - self.t)?;
            on_step(self, dt)?;
        }
        Ok(())
    }
}

/// Advances to `t_end`, recording diagnostics initially, every `cadence`
/// steps, and at `t_end`. Each record is also passed to `sink` as it is made.
pub fn run(
    state: &mut FlowState,
    t_end: f64,
    cadence: usize,
    mut sink: impl FnMut(&DiagnosticsRecord) -> Result<()>,
) -> Result<Vec<DiagnosticsRecord>> {
    if !(t_end >= state.t) || !t_end.is_finite() {
        return Err(XcfError::InvalidTime(format!(
            "t_end = {t_end} precedes the current time {}",
            state.t
        )));
    }
    let cadence = cadence.max(1);
    let mut records = Vec::new();
    let first = state.diagnostics()?;
    sink(&first)?;
    records.push(first);
    let start_steps = state.steps;
    while state.t < t_end {
        state.step(t_end - state.t)?;
        let n = state.steps - start_steps;
        if n % cadence == 0 || state.t >= t_end {
            let rec = state.diagnostics()?;
            sink(&rec)?;
            records.push(rec);
        }
    }
    Ok(records)
}
