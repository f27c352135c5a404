//! Gauge recovery. The map `ψ_t` with `∂ψ/∂t = −W(ψ, t)`, `ψ_0 = id`, turns
//! a solution of the modified flow into `ḡ = ψ_t* g`, a solution of the
//! unmodified flow. For a time-independent `W`, `ψ_t` is the inverse of the
//! flow of `W` and `ḡ = (φ_t⁻¹)* g`; for a general `W` only the `ψ_t` form
//! cancels the Lie-derivative term.

use std::path::Path;

use rayon::prelude::*;

use crate::boundary::{boundary_residuals, BoundaryResiduals, BoundarySpec};
use crate::chart::{metric_jet, write_snapshot_with_magic, ChartSpec, MetricField, PULLBACK_MAGIC};
use crate::curvature::point_curvature;
use crate::deturck::BackgroundConnection;
use crate::error::{Result, XcfError};
use crate::evolve::FlowState;
use crate::interp::{interpolate, interpolate_with_gradient};
use crate::tensor::{congruence, mat_inv, Mat3, Sym3, Vec3};

/// Newton iterations allowed per preimage.
pub const NEWTON_MAX_ITER: usize = 50;

/// Preimage tolerance in grid units.
const NEWTON_TOL: f64 = 1e-12;

/// A map `ψ` stored as the displacement `ψ(x) − x` at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffeoField {
    pub chart: ChartSpec,
    pub disp: Vec<Vec3>,
    pub t: f64,
}

impl DiffeoField {
    pub fn identity(chart: ChartSpec, t: f64) -> Self {
        DiffeoField {
            chart,
            disp: vec![[0.0; 3]; chart.node_count()],
            t,
        }
    }

    /// `ψ` at node `n`, in chart coordinates.
    pub fn map_at(&self, n: usize) -> Vec3 {
        let c = &self.chart;
        let (i, j, k) = (n % c.nx, (n / c.nx) % c.ny, n / c.plane_len());
        let x = c.coord(i as isize, j as isize, k as isize);
        std::array::from_fn(|a| x[a] + self.disp[n][a])
    }

    pub fn max_displacement(&self) -> f64 {
        self.disp
            .iter()
            .flat_map(|d| d.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// The numerical inverse map, as a displacement field on the same nodes.
    pub fn inverse(&self) -> Result<DiffeoField> {
        let c = self.chart;
        let h = c.spacing();
        let pre = preimages(self)?;
        Ok(DiffeoField {
            chart: c,
            disp: pre
                .iter()
                .map(|e| std::array::from_fn(|a| e[a] * h[a]))
                .collect(),
            t: self.t,
        })
    }
}

fn node_coords(c: &ChartSpec, n: usize) -> [f64; 3] {
    [
        (n % c.nx) as f64,
        ((n / c.nx) % c.ny) as f64,
        (n / c.plane_len()) as f64,
    ]
}

fn check_in_chart(c: &ChartSpec, pos: &[f64; 3], n: usize) -> Result<()> {
    if !c.is_slab() {
        return Ok(());
    }
    let margin = c.ghost_width as f64;
    if !(pos[2] >= -margin && pos[2] <= (c.nz - 1) as f64 + margin)
        || pos.iter().any(|v| !v.is_finite())
    {
        let k = n / c.plane_len();
        return Err(XcfError::GaugeDrift {
            i: n % c.nx,
            j: (n / c.nx) % c.ny,
            k,
        });
    }
    Ok(())
}

/// Advances `ψ` by `dt` under `∂ψ/∂t = V(ψ, t)` with per-node RK4. `V` is
/// given at the start and end of the step and blended linearly in time.
pub fn advance_diffeo(
    d: &DiffeoField,
    w_start: &[Vec3],
    w_end: &[Vec3],
    dt: f64,
) -> Result<DiffeoField> {
    let c = d.chart;
    assert_eq!(w_start.len(), c.node_count());
    assert_eq!(w_end.len(), c.node_count());
    let h = c.spacing();
    let w_at = |disp: &Vec3, n: usize, s: f64| -> Result<Vec3> {
        let y = node_coords(&c, n);
        let pos: [f64; 3] = std::array::from_fn(|a| y[a] + disp[a] / h[a]);
        check_in_chart(&c, &pos, n)?;
        let a = interpolate(&c, |i, j, k| w_start[c.node_index(i, j, k)], pos);
        let b = interpolate(&c, |i, j, k| w_end[c.node_index(i, j, k)], pos);
        Ok(std::array::from_fn(|q| (1.0 - s) * a[q] + s * b[q]))
    };
    let disp: Result<Vec<Vec3>> = d
        .disp
        .par_iter()
        .enumerate()
        .map(|(n, d0)| {
            let shift =
                |k: &Vec3, f: f64| -> Vec3 { std::array::from_fn(|a| d0[a] + f * dt * k[a]) };
            let k1 = w_at(d0, n, 0.0)?;
            let k2 = w_at(&shift(&k1, 0.5), n, 0.5)?;
            let k3 = w_at(&shift(&k2, 0.5), n, 0.5)?;
            let k4 = w_at(&shift(&k3, 1.0), n, 1.0)?;
            let out: Vec3 = std::array::from_fn(|a| {
                d0[a] + dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])
            });
            let y = node_coords(&c, n);
            check_in_chart(&c, &std::array::from_fn(|a| y[a] + out[a] / h[a]), n)?;
            Ok(out)
        })
        .collect();
    Ok(DiffeoField {
        chart: c,
        disp: disp?,
        t: d.t + dt,
    })
}

/// Preimage offsets `ε` with `ψ(y + ε) = y`, in grid units.
fn preimages(d: &DiffeoField) -> Result<Vec<Vec3>> {
    let c = d.chart;
    let u = grid_displacement(d);
    let get = |i: usize, j: usize, k: usize| u[c.node_index(i, j, k)];
    (0..c.node_count())
        .into_par_iter()
        .map(|n| {
            let y = node_coords(&c, n);
            let (i, j, k) = (n % c.nx, (n / c.nx) % c.ny, n / c.plane_len());
            // ψ(ξ) = y  ⇔  ε + U(y + ε) = 0.
            let mut eps = [0.0; 3];
            for _ in 0..=NEWTON_MAX_ITER {
                let pos: [f64; 3] = std::array::from_fn(|a| y[a] + eps[a]);
                check_in_chart(&c, &pos, n)?;
                let (val, grad) = interpolate_with_gradient(&c, get, pos);
                let res: Vec3 = std::array::from_fn(|a| eps[a] + val[a]);
                let norm = res.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if norm <= NEWTON_TOL {
                    return Ok(eps);
                }
                let dpsi: Mat3 = std::array::from_fn(|a| {
                    std::array::from_fn(|b| if a == b { 1.0 } else { 0.0 } + grad[b][a])
                });
                let inv = mat_inv(&dpsi).ok_or(XcfError::SingularJacobian { i, j, k })?;
                let step: Vec3 = std::array::from_fn(|a| (0..3).map(|b| inv[a][b] * res[b]).sum());
                // Damped update: halve until the residual decreases.
                let mut scale = 1.0;
                loop {
                    let trial: Vec3 = std::array::from_fn(|a| eps[a] - scale * step[a]);
                    let tpos: [f64; 3] = std::array::from_fn(|a| y[a] + trial[a]);
                    let tval = interpolate(&c, get, tpos);
                    let tnorm = (0..3).fold(0.0_f64, |m, a| m.max((trial[a] + tval[a]).abs()));
                    if tnorm < norm || scale < 1e-3 {
                        eps = trial;
                        break;
                    }
                    scale *= 0.5;
                }
            }
            Err(XcfError::NewtonFailed { i, j, k })
        })
        .collect()
}

fn grid_displacement(d: &DiffeoField) -> Vec<Vec3> {
    let h = d.chart.spacing();
    d.disp
        .iter()
        .map(|v| std::array::from_fn(|a| v[a] / h[a]))
        .collect()
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// `ḡ = ψ* g`: at each node `y`, `ḡ_ij = ∂ψ^k/∂y^i ∂ψ^l/∂y^j g_kl(ψ(y))`,
/// with `Dψ` from the interpolated displacement. The result carries no
/// ghosts.
pub fn pullback_metric(g: &MetricField, d: &DiffeoField) -> Result<MetricField> {
    let c = g.chart;
    if d.chart != c {
        return Err(XcfError::InvalidChart(
            "diffeomorphism and metric live on different charts".into(),
        ));
    }
    let h = c.spacing();
    let u = grid_displacement(d);
    let get_u = |i: usize, j: usize, k: usize| u[c.node_index(i, j, k)];
    let get_g = |i: usize, j: usize, k: usize| *g.at(i, j, k as isize);
    let nodes: Result<Vec<Sym3>> = (0..c.node_count())
        .into_par_iter()
        .map(|n| {
            let y = node_coords(&c, n);
            let (i, j, k) = (n % c.nx, (n / c.nx) % c.ny, n / c.plane_len());
            let (_, grad) = interpolate_with_gradient(&c, get_u, y);
            let pos: [f64; 3] = std::array::from_fn(|a| y[a] + u[n][a]);
            check_in_chart(&c, &pos, n)?;
            // Dψ in chart coordinates: δ_ab + ∂_b d_a.
            let jac: Mat3 = std::array::from_fn(|a| {
                std::array::from_fn(|b| if a == b { 1.0 } else { 0.0 } + grad[b][a] * h[a] / h[b])
            });
            if !(det3(&jac) > 0.0) {
                return Err(XcfError::SingularJacobian { i, j, k });
            }
            let v = congruence(&interpolate(&c, get_g, pos), &jac);
            if !crate::tensor::is_positive_definite(&v) {
                return Err(XcfError::NotPositiveDefinite { i, j, k });
            }
            Ok(v)
        })
        .collect();
    Ok(MetricField::from_nodes(c, &nodes?))
}

/// `max |∂_t ḡ − sign·2c(ḡ)| / max |c(ḡ)|` at the middle snapshot, with
/// `∂_t` the three-point difference on the given (possibly uneven) times.
/// Only nodes strictly between the faces enter, since `ḡ` has no ghosts.
pub fn xcf_residual(snapshots: [(f64, &MetricField); 3], sign: f64) -> Result<f64> {
    let [(t0, g0), (t1, g1), (t2, g2)] = snapshots;
    if !(t0 < t1 && t1 < t2) {
        return Err(XcfError::InvalidTime(format!(
            "snapshot times {t0}, {t1}, {t2} are not increasing"
        )));
    }
    let c = g1.chart;
    let (a, b) = (t1 - t0, t2 - t1);
    let (w0, w1, w2) = (-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b)));
    let layers = if c.is_slab() { 1..c.nz - 1 } else { 0..c.nz };
    let coords: Vec<_> = c.nodes().filter(|&(_, _, k)| layers.contains(&k)).collect();
    let per: Vec<(f64, f64)> = coords
        .par_iter()
        .map(|&(i, j, k)| {
            let kk = k as isize;
            let cross = point_curvature(&metric_jet(g1, i, j, k)).cross;
            let (p, q, r) = (g0.at(i, j, kk), g1.at(i, j, kk), g2.at(i, j, kk));
            let mut worst = 0.0_f64;
            let mut scale = 0.0_f64;
            for s in 0..6 {
                let dt = w0 * p[s] + w1 * q[s] + w2 * r[s];
                worst = worst.max((dt - 2.0 * sign * cross[s]).abs());
                scale = scale.max(cross[s].abs());
            }
            (worst, scale)
        })
        .collect();
    let (worst, scale) = per
        .iter()
        .fold((0.0_f64, 0.0_f64), |(w, s), &(a, b)| (w.max(a), s.max(b)));
    if !worst.is_finite() || !scale.is_finite() {
        return Err(XcfError::NonFinite {
            what: "cross curvature of the pulled-back metric".into(),
        });
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// Outcome of a run with gauge tracking.
#[derive(Debug, Clone)]
pub struct PullbackOutcome {
    pub t: f64,
    pub delta: f64,
    pub xcf_residual: f64,
    /// Boundary residuals of `ḡ(t)`; `w3_res` is not meaningful for `ḡ`
    /// and is reported as zero.
    pub boundary: BoundaryResiduals,
    pub max_displacement: f64,
    pub gbar: MetricField,
    pub diffeo: DiffeoField,
}

/// Advances `state` to `t + δ` while integrating `ψ` under `−W`, pulls back at
/// `t − δ, t, t + δ`, and measures the residual at `t`. `δ` is
/// `delta_steps` step sizes of the initial state.
pub fn run_with_pullback(
    state: &mut FlowState,
    t: f64,
    delta_steps: usize,
) -> Result<PullbackOutcome> {
    let delta = delta_steps.max(1) as f64 * state.cfl_dt()?;
    if !(t - delta >= state.t) {
        return Err(XcfError::InvalidTime(format!(
            "pullback time {t} must exceed the current time by δ = {delta}"
        )));
    }
    let mut diffeo = DiffeoField::identity(state.g.chart, state.t);
    let gauge =
        |s: &FlowState| -> Vec<Vec3> { s.w_field().iter().map(|w| w.map(|v| -v)).collect() };
    let mut w_prev = gauge(state);
    let mut snaps = Vec::with_capacity(3);
    for stop in [t - delta, t, t + delta] {
        state.advance_to(stop, |s, dt| {
            let w_next = gauge(s);
            diffeo = advance_diffeo(&diffeo, &w_prev, &w_next, dt)?;
            w_prev = w_next;
            Ok(())
        })?;
        snaps.push((state.t, pullback_metric(&state.g, &diffeo)?, diffeo.clone()));
    }
    let residual = xcf_residual(
        [
            (snaps[0].0, &snaps[0].1),
            (snaps[1].0, &snaps[1].1),
            (snaps[2].0, &snaps[2].1),
        ],
        state.sign,
    )?;
    let (_, gbar, d_mid) = snaps.swap_remove(1);
    let mut boundary = pulled_back_boundary(&gbar, t, &state.spec, &state.bg)?;
    boundary.w3_res = 0.0;
    Ok(PullbackOutcome {
        t,
        delta,
        xcf_residual: residual,
        boundary,
        max_displacement: d_mid.max_displacement(),
        gbar,
        diffeo: d_mid,
    })
}

fn pulled_back_boundary(
    gbar: &MetricField,
    t: f64,
    spec: &BoundarySpec,
    bg: &BackgroundConnection,
) -> Result<BoundaryResiduals> {
    if !gbar.chart.is_slab() || spec.faces.is_empty() {
        return Ok(BoundaryResiduals::default());
    }
    boundary_residuals(gbar, t, spec, bg)
}

/// Writes `ḡ` in the snapshot format under the pulled-back magic.
pub fn write_pullback_snapshot(gbar: &MetricField, path: &Path) -> Result<()> {
    write_snapshot_with_magic(gbar, path, PULLBACK_MAGIC)
}
