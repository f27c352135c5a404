//! Reference solutions and independent cross-checks.
//!
//! Constant-curvature metrics evolve under the flow by a pure scale factor:
//! `c(φ g₀) = φ⁻¹ c(g₀)` and `c(g₀) = g₀` for curvature `±1`, so
//! `g(t) = φ(t) g₀` with `φ φ' = 2` (negative curvature, flow `+2c`) or
//! `φ φ' = -2` (positive curvature, flow `-2c`).

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Complex, Matrix6, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boundary::ExactSolution;
use crate::chart::{make_chart, metric_jet, ChartSpec, MetricField};
use crate::curvature::point_curvature;
use crate::error::{Result, XcfError};
use crate::symbol::{pack, sigma_dx, SymbolProbe};
use crate::tensor::Sym3;

/// Closed-form constant-curvature initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceFormKind {
    /// `g = (x³)⁻² δ`, sectional curvature `-1`.
    HyperbolicHalfspace,
    /// `g = 4 (1 + |x|²)⁻² δ`, curvature `+1`. Not laterally periodic.
    SphereStereographic,
    /// `g = diag(sin² x³, cos² x³, 1)`, curvature `+1`, independent of `x¹, x²`.
    SphereHopf,
}

impl FromStr for SpaceFormKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hyperbolic-halfspace" => Ok(SpaceFormKind::HyperbolicHalfspace),
            "sphere-stereographic" => Ok(SpaceFormKind::SphereStereographic),
            "sphere-hopf" => Ok(SpaceFormKind::SphereHopf),
            other => Err(format!("unknown space form '{other}'")),
        }
    }
}

impl SpaceFormKind {
    pub fn name(&self) -> &'static str {
        match self {
            SpaceFormKind::HyperbolicHalfspace => "hyperbolic-halfspace",
            SpaceFormKind::SphereStereographic => "sphere-stereographic",
            SpaceFormKind::SphereHopf => "sphere-hopf",
        }
    }

    /// Sectional curvature of the initial metric.
    pub fn curvature(&self) -> f64 {
        match self {
            SpaceFormKind::HyperbolicHalfspace => -1.0,
            _ => 1.0,
        }
    }

    /// Flow sign matching the curvature sign: `+1` for `∂g/∂t = 2c`.
    pub fn flow_sign(&self) -> f64 {
        -self.curvature()
    }

    /// Scale factor `φ(t)`.
    pub fn phi(&self, t: f64) -> Result<f64> {
        let sq = 1.0 + 4.0 * self.flow_sign() * t;
        if !(t >= 0.0) || !(sq > 0.0) {
            return Err(XcfError::OutsideLifetime { t });
        }
        Ok(sq.sqrt())
    }

    /// Umbilic coefficient of the coordinate faces, `h = λ g`, when the faces are umbilic.
    pub fn lambda(&self, t: f64) -> Result<Option<f64>> {
        let phi = self.phi(t)?;
        Ok(match self {
            SpaceFormKind::HyperbolicHalfspace => Some(phi.powf(-0.5)),
            _ => None,
        })
    }

    pub fn base(&self, x: [f64; 3]) -> Sym3 {
        match self {
            SpaceFormKind::HyperbolicHalfspace => {
                let s = 1.0 / (x[2] * x[2]);
                [s, 0.0, 0.0, s, 0.0, s]
            }
            SpaceFormKind::SphereStereographic => {
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let s = 4.0 / ((1.0 + r2) * (1.0 + r2));
                [s, 0.0, 0.0, s, 0.0, s]
            }
            SpaceFormKind::SphereHopf => {
                let (sn, cs) = x[2].sin_cos();
                [sn * sn, 0.0, 0.0, cs * cs, 0.0, 1.0]
            }
        }
    }

    /// A chart with `n³` nodes on which the metric is valid and laterally
    /// periodic (except the stereographic patch, which has no lateral symmetry).
    pub fn default_chart(&self, n: usize) -> ChartSpec {
        match self {
            SpaceFormKind::HyperbolicHalfspace => ChartSpec::slab(n, n, n, 1.0, 1.0, 1.0, 2.0),
            SpaceFormKind::SphereStereographic => ChartSpec::slab(n, n, n, 1.0, 1.0, -0.5, 0.5),
            SpaceFormKind::SphereHopf => {
                ChartSpec::slab(n, n, n, 2.0, 2.0, PI / 8.0, 3.0 * PI / 8.0)
            }
        }
    }

    /// The exact solution `φ(t) g₀` sampled on `chart`, ghosts included.
    pub fn metric(&self, chart: ChartSpec, t: f64) -> Result<MetricField> {
        let chart = make_chart(chart)?;
        let phi = self.phi(t)?;
        let h = chart.spacing()[2];
        let gw = chart.ghost_width as f64;
        let (lo, hi) = (chart.z_min - gw * h, chart.z_max + gw * h);
        match self {
            SpaceFormKind::HyperbolicHalfspace if lo <= 0.0 => {
                return Err(XcfError::InvalidChart(format!(
                    "half-space metric needs x³ > 0 including ghosts, lowest layer at {lo}"
                )))
            }
            SpaceFormKind::SphereHopf if lo <= 0.0 || hi >= PI / 2.0 => {
                return Err(XcfError::InvalidChart(format!(
                    "Hopf metric needs x³ in (0, π/2) including ghosts, got [{lo}, {hi}]"
                )))
            }
            _ => {}
        }
        let kind = *self;
        Ok(MetricField::from_fn(chart, move |x| {
            kind.base(x).map(|v| phi * v)
        }))
    }

    /// Pointwise exact solution, for pinning Dirichlet faces.
    pub fn exact_solution(&self) -> ExactSolution {
        let kind = *self;
        Arc::new(move |x: [f64; 3], t: f64| {
            let phi = kind.phi(t).unwrap_or(f64::NAN);
            kind.base(x).map(|v| phi * v)
        })
    }
}

/// The exact space-form solution at time `t`.
pub fn spaceform_metric(kind: SpaceFormKind, t: f64, chart: ChartSpec) -> Result<MetricField> {
    kind.metric(chart, t)
}

/// Integrates `φ' = 2 sign K² / φ`, `φ(0) = 1`, with RK4 at step `1e-6`.
///
/// `curvature` is the sectional curvature of `g₀`; it enters squared because
/// `c(g₀) = K² g₀` for a space form.
pub fn scaling_ode_oracle(curvature: f64, sign: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(XcfError::InvalidTime(format!("t = {t}")));
    }
    let a = 2.0 * sign * curvature * curvature;
    let f = |phi: f64| a / phi;
    let dt_max = 1e-6;
    let steps = (t / dt_max).ceil() as usize;
    if steps == 0 {
        return Ok(1.0);
    }
    let dt = t / steps as f64;
    let mut phi = 1.0_f64;
    for n in 0..steps {
        let k1 = f(phi);
        let k2 = f(phi + 0.5 * dt * k1);
        let k3 = f(phi + 0.5 * dt * k2);
        let k4 = f(phi + dt * k3);
        phi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(XcfError::OutsideLifetime { t: n as f64 * dt });
        }
    }
    Ok(phi)
}

/// A smooth positive-definite metric built from a few random Fourier modes.
///
/// Every component is `δ_ij + amp·m_ij(x)` scaled so that the field stays
/// diagonally dominant for `amp < 2/3`. Lateral modes are periodic; the
/// `x³` modes are periodic over `z_max - z_min` so the same field also works
/// on a torus chart.
pub fn random_smooth_metric(chart: ChartSpec, seed: u64, amp: f64) -> MetricField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lz = chart.z_max - chart.z_min;
    let mut modes = Vec::with_capacity(6);
    for s in 0..6 {
        let mut m = Vec::new();
        for _ in 0..2 {
            let k: [f64; 3] = [
                rng.gen_range(-2..=2) as f64 * 2.0 * PI / chart.lx,
                rng.gen_range(-2..=2) as f64 * 2.0 * PI / chart.ly,
                rng.gen_range(-1..=1) as f64 * 2.0 * PI / lz,
            ];
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            let weight: f64 = rng.gen_range(-0.5..0.5);
            m.push((k, phase, weight));
        }
        let scale = if matches!(s, 0 | 3 | 5) { 1.0 } else { 0.5 };
        modes.push((m, scale));
    }
    let z0 = chart.z_min;
    MetricField::from_fn(chart, move |x| {
        let mut g = crate::tensor::IDENTITY;
        for (s, (m, scale)) in modes.iter().enumerate() {
            let v: f64 = m
                .iter()
                .map(|(k, ph, w)| w * (k[0] * x[0] + k[1] * x[1] + k[2] * (x[2] - z0) + ph).sin())
                .sum();
            g[s] += amp * scale * v;
        }
        g
    })
}

/// Outcome of one plane-wave linearization probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierProbeResult {
    /// `max |measured - predicted| / max |predicted|`.
    pub deviation: f64,
    /// `max |measured|`, where measured is `-2 Δc / s_k`.
    pub max_response: f64,
    /// `max |predicted|`, where predicted is `σDX(e₁) v cos θ`.
    pub max_predicted: f64,
}

/// Compares the centred linear response of `c` to a plane wave `v cos(κ x¹)`
/// against the principal symbol of the linearized operator.
///
/// `κ = 2π k / lx`. The response is scaled by the discrete symbol of the
/// second difference, `s_k = (4/h²) sin²(κh/2)`, so the comparison isolates
/// the lower-order terms, which decay like `1/k`.
pub fn fourier_symbol_probe(
    g: &MetricField,
    k: usize,
    eps: f64,
    v: Sym3,
) -> Result<FourierProbeResult> {
    let c = g.chart;
    if c.is_slab() {
        return Err(XcfError::ProbeRejected(
            "probe needs a fully periodic chart".into(),
        ));
    }
    if k == 0 || 8 * k > c.nx {
        return Err(XcfError::ProbeRejected(format!(
            "mode {k} is beyond a quarter of the Nyquist mode for nx = {}",
            c.nx
        )));
    }
    if !(eps > 0.0) {
        return Err(XcfError::ProbeRejected(format!(
            "amplitude must be positive, got {eps}"
        )));
    }
    let h = c.spacing()[0];
    let kappa = 2.0 * PI * k as f64 / c.lx;
    let s_k = 4.0 / (h * h) * (0.5 * kappa * h).sin().powi(2);
    let perturbed = |sgn: f64| {
        let mut f = g.clone();
        for (i, j, kk) in c.nodes() {
            let ct = (kappa * c.coord(i as isize, j as isize, kk as isize)[0]).cos();
            let node = f.at_mut(i, j, kk as isize);
            for s in 0..6 {
                node[s] += sgn * eps * v[s] * ct;
            }
        }
        f
    };
    let gp = perturbed(1.0);
    let gm = perturbed(-1.0);
    let v_packed = pack(&v);
    let mut worst = 0.0_f64;
    let mut max_resp = 0.0_f64;
    let mut max_pred = 0.0_f64;
    for (i, j, kk) in c.nodes() {
        let cp = point_curvature(&metric_jet(&gp, i, j, kk)).cross;
        let cm = point_curvature(&metric_jet(&gm, i, j, kk)).cross;
        let base = point_curvature(&metric_jet(g, i, j, kk));
        let probe = SymbolProbe::new(base.einstein_hi, base.chr.ginv, [1.0, 0.0, 0.0])?;
        let sv = sigma_dx(&probe).apply(&v_packed);
        let ct = (kappa * c.coord(i as isize, j as isize, kk as isize)[0]).cos();
        let measured = pack(&std::array::from_fn(|s| {
            -2.0 * (cp[s] - cm[s]) / (2.0 * eps) / s_k
        }));
        for s in 0..6 {
            let pred = sv[s] * ct;
            worst = worst.max((measured[s] - pred).abs());
            max_resp = max_resp.max(measured[s].abs());
            max_pred = max_pred.max(pred.abs());
        }
    }
    Ok(FourierProbeResult {
        deviation: if max_pred > 0.0 {
            worst / max_pred
        } else {
            f64::INFINITY
        },
        max_response: max_resp,
        max_predicted: max_pred,
    })
}

/// Eigenvalues of a dense 6×6 matrix through a real Schur decomposition,
/// sorted by real part then imaginary part.
pub fn dense_eig_oracle(m: &[[f64; 6]; 6]) -> Result<[Complex<f64>; 6]> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(XcfError::EigenNoConvergence(format!("{m:?}")));
    }
    // Deflation is judged relative to the diagonal, so clustered eigenvalues
    // near zero can stall the QR sweeps. Retry with spectral shifts, which
    // change the iteration path but not the eigenvalues.
    let norm = m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let (ev, shift) = [1.0 + norm, 0.0, 1.0, 3.0 + norm]
        .into_iter()
        .find_map(|shift| {
            let a = Matrix6::from_fn(|i, j| m[i][j] + if i == j { shift } else { 0.0 });
            Schur::try_new(a, f64::EPSILON, 10_000).map(|s| (s.complex_eigenvalues(), shift))
        })
        .ok_or_else(|| XcfError::EigenNoConvergence(format!("{m:?}")))?;
    let mut out: [Complex<f64>; 6] = std::array::from_fn(|i| ev[i] - shift);
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

/// Hand-written symbol of the curvature part for `g = δ`, `ζ = e₁`, in the
/// basis `(v₁₁, v₁₂, v₁₃, v₂₂, v₃₃, v₂₃)`. `e_hi` is `E^{ij}`.
pub fn unit_covector_x_pattern(e_hi: &Sym3) -> [[f64; 6]; 6] {
    let [e11, e12, e13, e22, e23, e33] = *e_hi;
    [
        [0.0, 0.0, 0.0, e22, e33, 2.0 * e23],
        [0.0, 0.0, 0.0, -e12, 0.0, -e13],
        [0.0, 0.0, 0.0, 0.0, -e13, -e12],
        [0.0, 0.0, 0.0, e11, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, e11, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, e11],
    ]
}

/// Hand-written symbol of the gauge part for `g = δ`, `ζ = e₁`, same basis.
pub fn unit_covector_y_pattern() -> [[f64; 6]; 6] {
    let mut m = [[0.0; 6]; 6];
    for (d, row) in m.iter_mut().enumerate().take(3) {
        row[d] = 1.0;
    }
    m[0][3] = -1.0;
    m[0][4] = -1.0;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::compute_bundle;
    use crate::tensor::sym_max_abs;

    #[test]
    fn patterns_match_assembled_symbols() {
        use crate::symbol::{sigma_dx, sigma_dy};
        use crate::tensor::IDENTITY;
        let e = [0.7, -0.3, 0.2, 1.1, 0.45, -0.6];
        let p = SymbolProbe::new(e, IDENTITY, [1.0, 0.0, 0.0]).unwrap();
        let x = sigma_dx(&p).m;
        let want = unit_covector_x_pattern(&e);
        for r in 0..6 {
            for c in 0..6 {
                assert!((x[r][c] - want[r][c]).abs() < 1e-14, "{r} {c}");
            }
        }
        assert_eq!(sigma_dy(&p).m, unit_covector_y_pattern());
    }

    #[test]
    fn closed_forms_match_ode() {
        for t in [0.0, 0.01, 0.05, 0.1, 0.2] {
            let h = scaling_ode_oracle(-1.0, 1.0, t).unwrap();
            assert!((h - (1.0 + 4.0 * t).sqrt()).abs() < 1e-10);
            assert!((h - SpaceFormKind::HyperbolicHalfspace.phi(t).unwrap()).abs() < 1e-10);
            let s = scaling_ode_oracle(1.0, -1.0, t).unwrap();
            assert!((s - (1.0 - 4.0 * t).sqrt()).abs() < 1e-10);
        }
        assert!((scaling_ode_oracle(-1.0, 1.0, 0.05).unwrap() - 1.095445).abs() < 1e-6);
        assert!((scaling_ode_oracle(1.0, -1.0, 0.05).unwrap() - 0.894427).abs() < 1e-6);
        assert_eq!(scaling_ode_oracle(1.0, -1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn ode_stops_at_blow_down() {
        assert!(matches!(
            scaling_ode_oracle(1.0, -1.0, 0.3),
            Err(XcfError::OutsideLifetime { .. })
        ));
    }

    #[test]
    fn sphere_lifetime_enforced() {
        let k = SpaceFormKind::SphereHopf;
        assert!(k.metric(k.default_chart(8), 0.25).is_err());
        assert!(k.metric(k.default_chart(8), 0.2).is_ok());
    }

    #[test]
    fn hyperbolic_initial_data() {
        let k = SpaceFormKind::HyperbolicHalfspace;
        let g = k.metric(k.default_chart(8), 0.0).unwrap();
        let z = 1.0 + 3.0 / 7.0;
        let v = g.at(2, 3, 3);
        assert!((v[0] - 1.0 / (z * z)).abs() < 1e-15);
        assert_eq!(v[1], 0.0);
        assert!((k.lambda(0.05).unwrap().unwrap() - 1.2f64.powf(-0.25)).abs() < 1e-15);
    }

    #[test]
    fn cross_scales_inversely_with_phi() {
        for kind in [
            SpaceFormKind::HyperbolicHalfspace,
            SpaceFormKind::SphereHopf,
        ] {
            let chart = kind.default_chart(12);
            let b0 = compute_bundle(&kind.metric(chart, 0.0).unwrap()).unwrap();
            let t = 0.05;
            let phi = kind.phi(t).unwrap();
            let b1 = compute_bundle(&kind.metric(chart, t).unwrap()).unwrap();
            for (n0, n1) in b0.nodes.iter().zip(&b1.nodes) {
                let want = n0.cross.map(|v| v / phi);
                let err = (0..6).fold(0.0_f64, |m, s| m.max((n1.cross[s] - want[s]).abs()));
                assert!(err <= 1e-10 * sym_max_abs(&want).max(1.0));
            }
        }
    }

    #[test]
    fn random_metric_is_spd_and_reproducible() {
        let c = make_chart(ChartSpec::slab(8, 8, 8, 1.0, 1.0, 0.0, 1.0)).unwrap();
        let a = random_smooth_metric(c, 42, 0.3);
        let b = random_smooth_metric(c, 42, 0.3);
        assert_eq!(a, b);
        a.check_positive_definite().unwrap();
        assert_ne!(a, random_smooth_metric(c, 43, 0.3));
    }

    #[test]
    fn dense_oracle_basic() {
        let mut m = [[0.0; 6]; 6];
        for i in 0..6 {
            m[i][i] = (6 - i) as f64;
        }
        let ev = dense_eig_oracle(&m).unwrap();
        for (i, e) in ev.iter().enumerate() {
            assert!((e.re - (i + 1) as f64).abs() < 1e-12 && e.im == 0.0);
        }
    }

    #[test]
    fn probe_rejects_aliasing_and_slabs() {
        let t = make_chart(ChartSpec::torus(16, 8, 8, 1.0, 1.0, 1.0)).unwrap();
        let g = random_smooth_metric(t, 1, 0.1);
        assert!(fourier_symbol_probe(&g, 3, 1e-4, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        let s = SpaceFormKind::HyperbolicHalfspace;
        let gs = s.metric(s.default_chart(16), 0.0).unwrap();
        assert!(fourier_symbol_probe(&gs, 1, 1e-4, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }
}
