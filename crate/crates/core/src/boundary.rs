//! Boundary conditions on the two `x³` faces.
//!
//! Every closure here works the same way: the face values are set
//! algebraically from the interior so that the boundary condition holds for
//! a one-sided derivative `D`, and the ghost layers are then filled by
//! polynomial extrapolation. `D` is defined as the fourth-order central
//! difference through the extrapolated ghosts, which is exactly what the
//! face jets use. The conditions are therefore satisfied by the same
//! stencils that measure them.
//!
//! The unit normal is the coordinate normal along `+x³` on both
//! faces, so a half-space slab has the same `λ` at the top and bottom.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::chart::{
    face_derivative_weights, metric_jet, MetricField, EXTRAP_NODES, FACE_DERIVATIVE_DENOM,
};
use crate::curvature::christoffel;
use crate::deturck::{gauge_vector, BackgroundConnection};
use crate::error::{Result, XcfError};
use crate::tensor::{sym_get, sym_inv, Sym3, Vec3};

/// Pointwise exact solution `(x, t) ↦ g(x, t)` for pinned faces.
pub type ExactSolution = Arc<dyn Fn([f64; 3], f64) -> Sym3 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    ZMin,
    ZMax,
}

impl Face {
    pub const BOTH: [Face; 2] = [Face::ZMin, Face::ZMax];

    pub fn name(&self) -> &'static str {
        match self {
            Face::ZMin => "z_min",
            Face::ZMax => "z_max",
        }
    }

    /// Grid index of the face layer.
    pub fn layer(&self, nz: usize) -> isize {
        match self {
            Face::ZMin => 0,
            Face::ZMax => nz as isize - 1,
        }
    }

    /// Step from the face into the interior.
    pub fn inward(&self) -> isize {
        match self {
            Face::ZMin => 1,
            Face::ZMax => -1,
        }
    }
}

impl FromStr for Face {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "z_min" => Ok(Face::ZMin),
            "z_max" => Ok(Face::ZMax),
            other => Err(format!("unknown face '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    DirichletG0,
    DirichletExact,
    Umbilic,
}

impl BoundaryMode {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryMode::DirichletG0 => "dirichlet-g0",
            BoundaryMode::DirichletExact => "dirichlet-exact",
            BoundaryMode::Umbilic => "umbilic",
        }
    }
}

impl FromStr for BoundaryMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dirichlet-g0" => Ok(BoundaryMode::DirichletG0),
            "dirichlet-exact" => Ok(BoundaryMode::DirichletExact),
            "umbilic" => Ok(BoundaryMode::Umbilic),
            other => Err(format!("unknown boundary mode '{other}'")),
        }
    }
}

/// The umbilic coefficient `λ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Lambda {
    Constant(f64),
    /// `(1 + 4t)^(−1/4)`.
    Power,
    /// Samples `(t, λ)` with strictly increasing `t`; linear in between,
    /// clamped outside.
    Table(Vec<(f64, f64)>),
}

impl Lambda {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Lambda::Constant(v) => *v,
            Lambda::Power => (1.0 + 4.0 * t).powf(-0.25),
            Lambda::Table(rows) => {
                let first = rows[0];
                let last = rows[rows.len() - 1];
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let n = rows.partition_point(|r| r.0 <= t);
                let (t0, l0) = rows[n - 1];
                let (t1, l1) = rows[n];
                l0 + (l1 - l0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Parses a two-column `t λ` table. Blank lines and `#` comments are skipped.
    pub fn from_table_text(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(XcfError::InvalidLambda(format!(
                    "line {}: expected two columns, found {}",
                    n + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| XcfError::InvalidLambda(format!("line {}: {e}", n + 1)))
            };
            let (t, l) = (parse(cols[0])?, parse(cols[1])?);
            if !t.is_finite() || !l.is_finite() {
                return Err(XcfError::InvalidLambda(format!(
                    "line {}: non-finite value",
                    n + 1
                )));
            }
            if let Some(&(prev, _)) = rows.last() {
                if !(t > prev) {
                    return Err(XcfError::InvalidLambda(format!(
                        "line {}: times must increase strictly ({t} after {prev})",
                        n + 1
                    )));
                }
            }
            rows.push((t, l));
        }
        if rows.is_empty() {
            return Err(XcfError::InvalidLambda("empty table".into()));
        }
        Ok(Lambda::Table(rows))
    }

    pub fn from_table_file(path: &Path) -> Result<Self> {
        Self::from_table_text(&std::fs::read_to_string(path)?)
    }

    /// `power`, a number, or `table:<path>`.
    pub fn parse(desc: &str) -> Result<Self> {
        let desc = desc.trim();
        if desc == "power" {
            return Ok(Lambda::Power);
        }
        if let Some(path) = desc.strip_prefix("table:") {
            return Self::from_table_file(Path::new(path.trim()));
        }
        match desc.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Lambda::Constant(v)),
            _ => Err(XcfError::InvalidLambda(format!("cannot parse '{desc}'"))),
        }
    }
}

/// Boundary treatment of a run.
#[derive(Clone)]
pub struct BoundarySpec {
    pub mode: BoundaryMode,
    pub lambda: Lambda,
    /// Faces carrying `mode`; any other face is pinned to the initial metric.
    pub faces: Vec<Face>,
    /// Needed by [`BoundaryMode::DirichletExact`].
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for BoundarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundarySpec")
            .field("mode", &self.mode)
            .field("lambda", &self.lambda)
            .field("faces", &self.faces)
            .field("exact", &self.exact.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl BoundarySpec {
    pub fn new(mode: BoundaryMode, lambda: Lambda) -> Self {
        BoundarySpec {
            mode,
            lambda,
            faces: Face::BOTH.to_vec(),
            exact: None,
        }
    }

    pub fn with_exact(mut self, exact: ExactSolution) -> Self {
        self.exact = Some(exact);
        self
    }

    fn mode_on(&self, face: Face) -> BoundaryMode {
        if self.faces.contains(&face) {
            self.mode
        } else {
            BoundaryMode::DirichletG0
        }
    }
}

/// Boundary-condition residuals over the faces of a spec.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundaryResiduals {
    /// `max |h_αβ − λ g_αβ|` relative to `max |g_αβ|` on the faces.
    pub umbilic_res: f64,
    /// `max |g_3α|` on the faces.
    pub offdiag_res: f64,
    /// `max |W³|` on the faces.
    pub w3_res: f64,
}

/// One-sided derivative along `x³` at a face from four samples ordered inward.
#[inline]
fn one_sided(f: [f64; EXTRAP_NODES], h: f64, face: Face) -> f64 {
    let d = (-face_weight() * f[0] + rest_sum(&f)) / (FACE_DERIVATIVE_DENOM * h);
    match face {
        Face::ZMin => d,
        Face::ZMax => -d,
    }
}

/// Minus the weight of the face value in `12h D f`.
#[inline]
fn face_weight() -> f64 {
    -face_derivative_weights()[0]
}

/// The part of `12h D f` that does not involve the face value.
#[inline]
fn rest_sum(f: &[f64; EXTRAP_NODES]) -> f64 {
    let w = face_derivative_weights();
    (1..EXTRAP_NODES).map(|m| w[m] * f[m]).sum::<f64>()
}

fn column(g: &MetricField, i: usize, j: usize, face: Face) -> [Sym3; EXTRAP_NODES] {
    let k0 = face.layer(g.chart.nz);
    let s = face.inward();
    std::array::from_fn(|m| *g.at(i, j, k0 + s * m as isize))
}

/// `e₃^i = g^{3i} / √(g^{33})` at every node of a face, in `i + nx j` order.
pub fn unit_normal(g: &MetricField, face: Face) -> Vec<Vec3> {
    let c = g.chart;
    let k = face.layer(c.nz);
    let mut out = Vec::with_capacity(c.plane_len());
    for j in 0..c.ny {
        for i in 0..c.nx {
            let (ginv, _) = sym_inv(g.at(i, j, k)).expect("metric must be invertible on the face");
            let g33 = ginv[5];
            assert!(
                g33 > 0.0,
                "g^33 must be positive for a positive-definite metric"
            );
            let s = g33.sqrt();
            out.push([ginv[2] / s, ginv[4] / s, g33 / s]);
        }
    }
    out
}

/// Tolerance on `|g_3α| / max|g|` accepted by [`second_fundamental_form`].
pub const ADAPTED_GAUGE_TOL: f64 = 1e-10;

/// `h_αβ = −½ (L_{e₃} g)_αβ` on a face, as `(h11, h12, h22)` per face node.
///
/// The `x³` derivative is the one-sided face stencil `D`. When
/// `g_3α = 0` along the face this reduces exactly to `−½ √(g^{33}) ∂₃ g_αβ`.
pub fn second_fundamental_form(g: &MetricField, face: Face) -> Result<Vec<[f64; 3]>> {
    second_fundamental_form_tol(g, face, ADAPTED_GAUGE_TOL)
}

/// As [`second_fundamental_form`] with an explicit tolerance on `|g_3α|`
/// relative to the largest face component.
pub fn second_fundamental_form_tol(g: &MetricField, face: Face, tol: f64) -> Result<Vec<[f64; 3]>> {
    let c = g.chart;
    let k0 = face.layer(c.nz);
    let hz = c.spacing();
    let mut scale = 0.0_f64;
    let mut off = 0.0_f64;
    for j in 0..c.ny {
        for i in 0..c.nx {
            let v = g.at(i, j, k0);
            scale = scale.max(crate::tensor::sym_max_abs(v));
            off = off.max(v[2].abs()).max(v[4].abs());
        }
    }
    if off > tol * scale {
        return Err(XcfError::AdaptedGaugeViolated {
            face: face.name(),
            value: off,
        });
    }
    let normal = unit_normal(g, face);
    let e_at = |i: isize, j: isize| normal[c.wrap_x(i) + c.nx * c.wrap_y(j)];
    let mut out = Vec::with_capacity(c.plane_len());
    for j in 0..c.ny {
        for i in 0..c.nx {
            let col = column(g, i, j, face);
            let gf = col[0];
            let e = e_at(i as isize, j as isize);
            // ∂_k g_αβ for k = 1, 2 (central) and 3 (one-sided).
            let d3: Sym3 = std::array::from_fn(|s| one_sided(col.map(|v| v[s]), hz[2], face));
            let d1: Sym3 = std::array::from_fn(|s| {
                (g.at(c.wrap_x(i as isize + 1), j, k0)[s]
                    - g.at(c.wrap_x(i as isize - 1), j, k0)[s])
                    / (2.0 * hz[0])
            });
            let d2: Sym3 = std::array::from_fn(|s| {
                (g.at(i, c.wrap_y(j as isize + 1), k0)[s]
                    - g.at(i, c.wrap_y(j as isize - 1), k0)[s])
                    / (2.0 * hz[1])
            });
            let dg = [d1, d2, d3];
            // ∂_α e^k along the face.
            let de: [Vec3; 2] = [
                {
                    let (p, m) = (
                        e_at(i as isize + 1, j as isize),
                        e_at(i as isize - 1, j as isize),
                    );
                    std::array::from_fn(|k| (p[k] - m[k]) / (2.0 * hz[0]))
                },
                {
                    let (p, m) = (
                        e_at(i as isize, j as isize + 1),
                        e_at(i as isize, j as isize - 1),
                    );
                    std::array::from_fn(|k| (p[k] - m[k]) / (2.0 * hz[1]))
                },
            ];
            let mut h = [0.0; 3];
            for (slot, (a, b)) in [(0usize, 0usize), (0, 1), (1, 1)].into_iter().enumerate() {
                let mut lie = 0.0;
                for k in 0..3 {
                    lie += e[k] * sym_get(&dg[k], a, b)
                        + sym_get(&gf, k, b) * de[a][k]
                        + sym_get(&gf, a, k) * de[b][k];
                }
                h[slot] = -0.5 * lie;
            }
            out.push(h);
        }
    }
    Ok(out)
}

/// Sets the face values of one umbilic face and leaves ghosts to the caller.
///
/// Per face node: `g_3α = 0`; `g_αβ` solves `D g_αβ = −2λ √g₃₃ g_αβ`, which
/// is linear in the face value; `g₃₃` solves `W³ = 0`, which with the other
/// two conditions reads `D g₃₃ = 2 (B g₃₃² + Γ̃³₃₃ g₃₃ − 2λ g₃₃^{3/2})` with
/// `B = g^{αβ} Γ̃³_αβ`. The two solves are coupled through `g₃₃` and are
/// alternated to convergence; the `g₃₃` equation uses Newton's method.
fn close_umbilic_face(
    g: &mut MetricField,
    face: Face,
    lambda: f64,
    bg: &BackgroundConnection,
) -> Result<()> {
    let c = g.chart;
    let h = c.spacing()[2];
    let k0 = face.layer(c.nz);
    let sgn = match face {
        Face::ZMin => 1.0,
        Face::ZMax => -1.0,
    };
    for j in 0..c.ny {
        for i in 0..c.nx {
            let col = column(g, i, j, face);
            let rest = |s: usize| rest_sum(&col.map(|v| v[s]));
            let a = face_weight();
            let dh = FACE_DERIVATIVE_DENOM * h;
            let n = c.node_index(i, j, k0 as usize);
            let gamma3 = bg.gamma(n)[2];
            let mut f = col[0];
            f[2] = 0.0;
            f[4] = 0.0;
            let mut converged = false;
            for _ in 0..50 {
                let prev = f;
                let s33 = f[5].sqrt();
                // D f = sgn (−a f₀ + R) / 12h = −2λ s f₀  ⇒  f₀ (a − sgn 24hλ s) = R
                for s in [0, 1, 3] {
                    f[s] = rest(s) / (a - sgn * 2.0 * dh * lambda * s33);
                }
                let det2 = f[0] * f[3] - f[1] * f[1];
                let b = (f[3] * gamma3[0] - 2.0 * f[1] * gamma3[1] + f[0] * gamma3[3]) / det2;
                let gt = gamma3[5];
                let r33 = rest(5);
                // sgn (−a x + R) = 12h · 2 (b x² + gt x − 2λ x^{3/2})
                let mut x = f[5];
                for _ in 0..50 {
                    let q = b * x * x + gt * x - 2.0 * lambda * x * x.sqrt();
                    let dq = 2.0 * b * x + gt - 3.0 * lambda * x.sqrt();
                    let fx = sgn * (r33 - a * x) - 2.0 * dh * q;
                    let dfx = -a * sgn - 2.0 * dh * dq;
                    let mut step = fx / dfx;
                    while x - step <= 0.0 {
                        step *= 0.5;
                    }
                    x -= step;
                    if step.abs() <= 1e-15 * x {
                        break;
                    }
                }
                f[5] = x;
                let change = (0..6).fold(0.0_f64, |m, s| m.max((f[s] - prev[s]).abs()));
                if change <= 1e-15 * f[5].max(f[0]).max(f[3]) {
                    converged = true;
                    break;
                }
            }
            if !converged || f.iter().any(|v| !v.is_finite()) {
                return Err(XcfError::NonFinite {
                    what: format!("umbilic closure at face {} node ({i}, {j})", face.name()),
                });
            }
            *g.at_mut(i, j, k0) = f;
        }
    }
    Ok(())
}

fn pin_face(g: &mut MetricField, face: Face, value: impl Fn(usize, usize) -> Sym3) {
    let c = g.chart;
    let k0 = face.layer(c.nz);
    for j in 0..c.ny {
        for i in 0..c.nx {
            *g.at_mut(i, j, k0) = value(i, j);
        }
    }
}

/// Applies the umbilic closure on the spec's faces (and pins the others to
/// `g0`), then fills ghosts.
pub fn fill_umbilic_ghosts(
    g: &mut MetricField,
    t: f64,
    spec: &BoundarySpec,
    bg: &BackgroundConnection,
    g0: &MetricField,
) -> Result<()> {
    let lambda = spec.lambda.eval(t);
    if !lambda.is_finite() {
        return Err(XcfError::InvalidLambda(format!("λ({t}) is not finite")));
    }
    for face in Face::BOTH {
        if spec.faces.contains(&face) {
            close_umbilic_face(g, face, lambda, bg)?;
        } else {
            let k0 = face.layer(g.chart.nz);
            pin_face(g, face, |i, j| *g0.at(i, j, k0));
        }
    }
    g.extrapolate_ghosts();
    Ok(())
}

/// Pins face values to `g0` or to the exact solution at `t`, then fills ghosts.
pub fn fill_dirichlet(
    g: &mut MetricField,
    t: f64,
    spec: &BoundarySpec,
    g0: &MetricField,
) -> Result<()> {
    let c = g.chart;
    for face in Face::BOTH {
        let k0 = face.layer(c.nz);
        match spec.mode_on(face) {
            BoundaryMode::DirichletExact => {
                let exact = spec.exact.as_ref().ok_or(XcfError::MissingExactSolution)?;
                pin_face(g, face, |i, j| {
                    exact(c.coord(i as isize, j as isize, k0), t)
                });
            }
            _ => pin_face(g, face, |i, j| *g0.at(i, j, k0)),
        }
    }
    g.extrapolate_ghosts();
    Ok(())
}

/// Applies the spec's boundary treatment at time `t`.
pub fn fill_ghosts(
    g: &mut MetricField,
    t: f64,
    spec: &BoundarySpec,
    bg: &BackgroundConnection,
    g0: &MetricField,
) -> Result<()> {
    if !g.chart.is_slab() {
        return Ok(());
    }
    match spec.mode {
        BoundaryMode::Umbilic => fill_umbilic_ghosts(g, t, spec, bg, g0),
        _ => fill_dirichlet(g, t, spec, g0),
    }
}

/// `W³` at every node of a face. Needs filled ghosts.
pub fn face_w3(g: &MetricField, face: Face, bg: &BackgroundConnection) -> Vec<f64> {
    let c = g.chart;
    let k0 = face.layer(c.nz) as usize;
    let mut out = Vec::with_capacity(c.plane_len());
    for j in 0..c.ny {
        for i in 0..c.nx {
            let jet = metric_jet(g, i, j, k0);
            let chr = christoffel(&jet);
            out.push(gauge_vector(&chr, bg.gamma(c.node_index(i, j, k0)))[2]);
        }
    }
    out
}

/// Residuals of the three umbilic conditions on the spec's faces.
///
/// Missing ghosts are replaced by polynomial extrapolation on a copy, which is
/// what every closure in this module produces anyway.
pub fn boundary_residuals(
    g: &MetricField,
    t: f64,
    spec: &BoundarySpec,
    bg: &BackgroundConnection,
) -> Result<BoundaryResiduals> {
    let filled;
    let g = if g.ghosts_filled() {
        g
    } else {
        let mut copy = g.clone();
        copy.extrapolate_ghosts();
        filled = copy;
        &filled
    };
    let c = g.chart;
    let lambda = spec.lambda.eval(t);
    let mut res = BoundaryResiduals::default();
    for &face in &spec.faces {
        let k0 = face.layer(c.nz);
        let h = second_fundamental_form_tol(g, face, f64::INFINITY)?;
        let mut scale = 0.0_f64;
        let mut worst = 0.0_f64;
        for j in 0..c.ny {
            for i in 0..c.nx {
                let v = g.at(i, j, k0);
                res.offdiag_res = res.offdiag_res.max(v[2].abs()).max(v[4].abs());
                let hf = h[i + c.nx * j];
                for (slot, s) in [0usize, 1, 3].into_iter().enumerate() {
                    scale = scale.max(v[s].abs());
                    worst = worst.max((hf[slot] - lambda * v[s]).abs());
                }
            }
        }
        if scale > 0.0 {
            res.umbilic_res = res.umbilic_res.max(worst / scale);
        }
        for w in face_w3(g, face, bg) {
            res.w3_res = res.w3_res.max(w.abs());
        }
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{make_chart, ChartSpec};
    use crate::oracles::{random_smooth_metric, SpaceFormKind};
    use crate::tensor::IDENTITY;

    fn hyperbolic(n: usize) -> MetricField {
        let k = SpaceFormKind::HyperbolicHalfspace;
        k.metric(k.default_chart(n), 0.0).unwrap()
    }

    #[test]
    fn normals() {
        let c = make_chart(ChartSpec::slab(4, 4, 6, 1.0, 1.0, 0.0, 1.0)).unwrap();
        let e = unit_normal(&MetricField::constant(c, IDENTITY), Face::ZMin);
        assert!(e.iter().all(|v| *v == [0.0, 0.0, 1.0]));

        let g = hyperbolic(8);
        for face in Face::BOTH {
            let z = if face == Face::ZMin { 1.0 } else { 2.0 };
            for v in unit_normal(&g, face) {
                assert!(v[0] == 0.0 && v[1] == 0.0 && (v[2] - z).abs() < 1e-14);
            }
        }
        let r = random_smooth_metric(
            make_chart(ChartSpec::slab(6, 6, 6, 1.0, 1.0, 0.0, 1.0)).unwrap(),
            2,
            0.3,
        );
        let e = unit_normal(&r, Face::ZMax);
        let gm = r.at(3, 4, 5);
        let v = e[3 + 6 * 4];
        assert!((crate::tensor::sym_quad(gm, &v) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn flat_face_is_totally_geodesic() {
        let c = make_chart(ChartSpec::slab(5, 5, 6, 1.0, 1.0, 0.0, 1.0)).unwrap();
        let g = MetricField::constant(c, IDENTITY);
        for face in Face::BOTH {
            assert!(second_fundamental_form(&g, face)
                .unwrap()
                .iter()
                .all(|h| *h == [0.0; 3]));
        }
    }

    #[test]
    fn half_space_faces_are_umbilic_with_unit_lambda() {
        // The one-sided stencil is second order; its error is bounded by a
        // fixed multiple of h² on every level.
        for n in [16, 32, 64] {
            let g = hyperbolic(n);
            let h2 = g.chart.spacing()[2].powi(2);
            let mut worst = 0.0_f64;
            for face in Face::BOTH {
                let k0 = face.layer(n);
                for (m, h) in second_fundamental_form(&g, face)
                    .unwrap()
                    .iter()
                    .enumerate()
                {
                    let gf = g.at(m % n, m / n, k0);
                    worst = worst.max((h[0] - gf[0]).abs() / gf[0]).max(h[1].abs());
                    assert!((h[2] - h[0]).abs() < 1e-14);
                }
            }
            assert!(worst < 2.5 * h2, "n = {n}: {worst}");
        }
    }

    #[test]
    fn scaled_half_space_follows_scaling_law() {
        let k = SpaceFormKind::HyperbolicHalfspace;
        let phi = 1.7_f64;
        let g = MetricField::from_fn(k.default_chart(32), |x| k.base(x).map(|v| phi * v));
        let h = second_fundamental_form(&g, Face::ZMin).unwrap();
        let g11 = g.at(0, 0, 0)[0];
        assert!((h[0][0] / g11 - phi.powf(-0.5)).abs() < 5e-3);
    }

    #[test]
    fn adapted_gauge_violation_reported() {
        let c = make_chart(ChartSpec::slab(4, 4, 6, 1.0, 1.0, 0.0, 1.0)).unwrap();
        let mut g = MetricField::constant(c, IDENTITY);
        g.at_mut(1, 1, 0)[2] = 1e-3;
        let err = second_fundamental_form(&g, Face::ZMin).unwrap_err();
        assert!(err.to_string().contains("adapted-gauge violated"));
        assert!(second_fundamental_form(&g, Face::ZMax).is_ok());
    }

    #[test]
    fn lambda_forms() {
        assert_eq!(Lambda::parse("0.5").unwrap().eval(3.0), 0.5);
        assert!((Lambda::parse("power").unwrap().eval(0.05) - 1.2f64.powf(-0.25)).abs() < 1e-15);
        let t = Lambda::from_table_text("# t lambda\n0 1\n1 3\n\n2 2\n").unwrap();
        assert_eq!(t.eval(-1.0), 1.0);
        assert_eq!(t.eval(0.5), 2.0);
        assert_eq!(t.eval(1.5), 2.5);
        assert_eq!(t.eval(9.0), 2.0);
        assert!(Lambda::from_table_text("0 1\n0 2\n").is_err());
        assert!(Lambda::from_table_text("0 1 2\n").is_err());
        assert!(Lambda::from_table_text("").is_err());
        assert!(Lambda::parse("nope").is_err());
    }

    #[test]
    fn umbilic_fill_on_own_background_keeps_half_space() {
        for n in [16, 32] {
            let g0 = hyperbolic(n);
            let bg = BackgroundConnection::from_metric(&g0).unwrap();
            let spec = BoundarySpec::new(BoundaryMode::Umbilic, Lambda::Constant(1.0));
            let mut g = g0.clone();
            fill_ghosts(&mut g, 0.0, &spec, &bg, &g0).unwrap();
            let h = g.chart.spacing()[2];
            for (i, j) in [(0, 0), (3, 5)] {
                for k in [-1isize, 0, n as isize - 1, n as isize] {
                    let (a, b) = (g.at(i, j, k), g0.at(i, j, k));
                    for s in 0..6 {
                        assert!(
                            (a[s] - b[s]).abs() < 10.0 * h * h * b[s].abs().max(1.0),
                            "n {n} k {k} s {s}"
                        );
                    }
                }
            }
            let r = boundary_residuals(&g, 0.0, &spec, &bg).unwrap();
            assert!(r.w3_res <= 1e-9, "{r:?}");
            assert!(r.umbilic_res <= 1e-12, "{r:?}");
            assert_eq!(r.offdiag_res, 0.0);
        }
    }

    #[test]
    fn flat_background_closure_reduces_to_power_law() {
        // With a flat background, W³ = 0 at the face means D g33 = −4λ g33^{3/2}.
        let g0 = random_smooth_metric(
            make_chart(ChartSpec::slab(8, 8, 10, 1.0, 1.0, 0.0, 1.0)).unwrap(),
            8,
            0.3,
        );
        let bg = BackgroundConnection::flat(g0.chart);
        let lambda = 0.7;
        let spec = BoundarySpec::new(BoundaryMode::Umbilic, Lambda::Constant(lambda));
        let mut g = g0.clone();
        fill_ghosts(&mut g, 0.0, &spec, &bg, &g0).unwrap();
        let h = g.chart.spacing()[2];
        for face in Face::BOTH {
            for j in 0..8 {
                for i in 0..8 {
                    let col = column(&g, i, j, face);
                    let d33 = one_sided(col.map(|v| v[5]), h, face);
                    let want = -4.0 * lambda * col[0][5].powf(1.5);
                    assert!((d33 - want).abs() < 1e-10 * want.abs());
                    for s in [0, 1, 3] {
                        let d = one_sided(col.map(|v| v[s]), h, face);
                        assert!((d + 2.0 * lambda * col[0][5].sqrt() * col[0][s]).abs() < 1e-10);
                    }
                }
            }
        }
        let r = boundary_residuals(&g, 0.0, &spec, &bg).unwrap();
        assert!(
            r.w3_res < 1e-10 && r.offdiag_res == 0.0 && r.umbilic_res < 1e-12,
            "{r:?}"
        );
    }

    #[test]
    fn zero_lambda_is_free_slip() {
        let g0 = hyperbolic(12);
        let bg = BackgroundConnection::flat(g0.chart);
        let spec = BoundarySpec::new(BoundaryMode::Umbilic, Lambda::Constant(0.0));
        let mut g = g0.clone();
        fill_ghosts(&mut g, 0.0, &spec, &bg, &g0).unwrap();
        for h in second_fundamental_form(&g, Face::ZMin).unwrap() {
            assert!(h.iter().all(|v| v.abs() < 1e-12));
        }
        assert!(boundary_residuals(&g, 0.0, &spec, &bg).unwrap().w3_res < 1e-10);
    }

    #[test]
    fn dirichlet_pins_faces() {
        let kind = SpaceFormKind::HyperbolicHalfspace;
        let chart = kind.default_chart(8);
        let g0 = kind.metric(chart, 0.0).unwrap();
        let bg = BackgroundConnection::flat(chart);
        let mut g = g0.clone();
        for v in g.data.iter_mut() {
            v[0] *= 1.5;
        }
        fill_ghosts(
            &mut g,
            0.3,
            &BoundarySpec::new(BoundaryMode::DirichletG0, Lambda::Constant(0.0)),
            &bg,
            &g0,
        )
        .unwrap();
        for k in [0isize, 7] {
            assert_eq!(g.at(2, 3, k), g0.at(2, 3, k));
        }

        let spec = BoundarySpec::new(BoundaryMode::DirichletExact, Lambda::Constant(0.0));
        assert!(matches!(
            fill_ghosts(&mut g, 0.1, &spec, &bg, &g0),
            Err(XcfError::MissingExactSolution)
        ));
        let spec = spec.with_exact(kind.exact_solution());
        fill_ghosts(&mut g, 0.1, &spec, &bg, &g0).unwrap();
        let s = (1.4f64).sqrt();
        for k in [0isize, 7] {
            let (a, b) = (g.at(1, 1, k), g0.at(1, 1, k));
            for c in 0..6 {
                assert!((a[c] - s * b[c]).abs() < 1e-15);
            }
        }

        // Linear profiles extend exactly.
        let c = make_chart(ChartSpec::slab(4, 4, 6, 1.0, 1.0, 0.0, 1.0)).unwrap();
        let lin = MetricField::from_fn(c, |x| {
            [1.0 + 0.5 * x[2], 0.1 * x[2], 0.0, 1.0, 0.0, 2.0 - x[2]]
        });
        let mut g = lin.clone();
        fill_ghosts(
            &mut g,
            0.0,
            &BoundarySpec::new(BoundaryMode::DirichletG0, Lambda::Constant(0.0)),
            &bg,
            &lin,
        )
        .unwrap();
        for k in [-2isize, -1, 6, 7] {
            for s in 0..6 {
                assert!((g.at(0, 0, k)[s] - lin.at(0, 0, k)[s]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_offdiag_residual_reports_face_data() {
        let c = make_chart(ChartSpec::slab(6, 6, 6, 1.0, 1.0, 0.0, 1.0)).unwrap();
        let g0 = random_smooth_metric(c, 4, 0.3);
        let spec = BoundarySpec::new(BoundaryMode::DirichletG0, Lambda::Constant(0.0));
        let r = boundary_residuals(&g0, 0.0, &spec, &BackgroundConnection::flat(c)).unwrap();
        let mut want = 0.0_f64;
        for face in Face::BOTH {
            for j in 0..6 {
                for i in 0..6 {
                    let v = g0.at(i, j, face.layer(6));
                    want = want.max(v[2].abs()).max(v[4].abs());
                }
            }
        }
        assert_eq!(r.offdiag_res, want);
    }
}
