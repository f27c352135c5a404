//! The DeTurck vector field `W^k = g^{pq}(Γ^k_pq − Γ̃^k_pq)`, its Lie
//! derivative term, and the right-hand side `±2c + L_W g` of the modified flow.
//!
//! Derivatives of `W` are taken analytically from the metric jet, so the
//! whole right-hand side at a node depends only on the 19-point stencil.

use rayon::prelude::*;

use crate::chart::{metric_jet, ChartSpec, Jet, MetricField, TensorField};
use crate::curvature::{christoffel, point_curvature, Christoffel, PointCurvature};
use crate::error::{Result, XcfError};
use crate::tensor::{sym_contract, sym_get, sym_mul_vec, sym_sandwich, Sym3, Vec3, SYM_PAIRS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundKind {
    Flat,
    InitialMetric,
}

impl BackgroundKind {
    pub fn name(&self) -> &'static str {
        match self {
            BackgroundKind::Flat => "flat",
            BackgroundKind::InitialMetric => "initial-metric",
        }
    }
}

impl std::str::FromStr for BackgroundKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "flat" => Ok(BackgroundKind::Flat),
            "initial-metric" => Ok(BackgroundKind::InitialMetric),
            other => Err(format!("unknown background '{other}'")),
        }
    }
}

const ZERO_GAMMA: [Sym3; 3] = [[0.0; 6]; 3];
const ZERO_DGAMMA: [[Sym3; 3]; 3] = [[[0.0; 6]; 3]; 3];

/// Background Christoffel symbols `Γ̃^k_pq` and their partials at every node.
#[derive(Debug, Clone)]
pub struct BackgroundConnection {
    pub kind: BackgroundKind,
    pub chart: ChartSpec,
    /// `gamma[n][k][SYM[p][q]]`; empty for the flat background.
    gamma: Vec<[Sym3; 3]>,
    /// `dgamma[n][a][k][SYM[p][q]] = ∂_a Γ̃^k_pq`; empty for the flat background.
    dgamma: Vec<[[Sym3; 3]; 3]>,
}

impl BackgroundConnection {
    pub fn flat(chart: ChartSpec) -> Self {
        BackgroundConnection {
            kind: BackgroundKind::Flat,
            chart,
            gamma: Vec::new(),
            dgamma: Vec::new(),
        }
    }

    /// Levi-Civita connection of `g0`, which must have filled ghosts.
    pub fn from_metric(g0: &MetricField) -> Result<Self> {
        if !g0.ghosts_filled() {
            return Err(XcfError::GhostsUnfilled);
        }
        let c = g0.chart;
        let coords: Vec<_> = c.nodes().collect();
        let (gamma, dgamma): (Vec<_>, Vec<_>) = coords
            .par_iter()
            .map(|&(i, j, k)| {
                let jet = metric_jet(g0, i, j, k);
                let chr = christoffel(&jet);
                (chr.hi, christoffel_derivative(&jet, &chr))
            })
            .unzip();
        Ok(BackgroundConnection {
            kind: BackgroundKind::InitialMetric,
            chart: c,
            gamma,
            dgamma,
        })
    }

    pub fn new(kind: BackgroundKind, g0: &MetricField) -> Result<Self> {
        match kind {
            BackgroundKind::Flat => Ok(Self::flat(g0.chart)),
            BackgroundKind::InitialMetric => Self::from_metric(g0),
        }
    }

    /// `Γ̃` at node index `n = i + nx (j + ny k)`.
    #[inline]
    pub fn gamma(&self, n: usize) -> &[Sym3; 3] {
        self.gamma.get(n).unwrap_or(&ZERO_GAMMA)
    }

    #[inline]
    pub fn dgamma(&self, n: usize) -> &[[Sym3; 3]; 3] {
        self.dgamma.get(n).unwrap_or(&ZERO_DGAMMA)
    }
}

/// `∂_a Γ^k_pq` from the jet: `∂g⁻¹ Γ_lo + g⁻¹ ∂Γ_lo`, with `∂g⁻¹ = −g⁻¹ ∂g g⁻¹`.
pub fn christoffel_derivative(jet: &Jet, chr: &Christoffel) -> [[Sym3; 3]; 3] {
    let mut out = [[[0.0; 6]; 3]; 3];
    for a in 0..3 {
        let dginv = sym_sandwich(&chr.ginv, &jet.dg[a]).map(|v| -v);
        let mut dlo = [[0.0; 6]; 3];
        for l in 0..3 {
            for (s, &(p, q)) in SYM_PAIRS.iter().enumerate() {
                dlo[l][s] = 0.5
                    * (sym_get(jet.dd(a, p), l, q) + sym_get(jet.dd(a, q), l, p)
                        - sym_get(jet.dd(a, l), p, q));
            }
        }
        for k in 0..3 {
            for s in 0..6 {
                let mut acc = 0.0;
                for l in 0..3 {
                    acc +=
                        sym_get(&dginv, k, l) * chr.lo[l][s] + sym_get(&chr.ginv, k, l) * dlo[l][s];
                }
                out[a][k][s] = acc;
            }
        }
    }
    out
}

/// `W` and its first partials at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeJet {
    pub w: Vec3,
    /// `dw[a][k] = ∂_a W^k`.
    pub dw: [Vec3; 3],
}

#[inline]
pub fn gauge_vector(chr: &Christoffel, bg_gamma: &[Sym3; 3]) -> Vec3 {
    std::array::from_fn(|k| {
        let mut diff = chr.hi[k];
        for s in 0..6 {
            diff[s] -= bg_gamma[k][s];
        }
        sym_contract(&chr.ginv, &diff)
    })
}

pub fn gauge_jet(
    jet: &Jet,
    chr: &Christoffel,
    bg_gamma: &[Sym3; 3],
    bg_dgamma: &[[Sym3; 3]; 3],
) -> GaugeJet {
    let dchr = christoffel_derivative(jet, chr);
    let mut diff = [[0.0; 6]; 3];
    for k in 0..3 {
        for s in 0..6 {
            diff[k][s] = chr.hi[k][s] - bg_gamma[k][s];
        }
    }
    let w = std::array::from_fn(|k| sym_contract(&chr.ginv, &diff[k]));
    let mut dw = [[0.0; 3]; 3];
    for a in 0..3 {
        let dginv = sym_sandwich(&chr.ginv, &jet.dg[a]).map(|v| -v);
        for k in 0..3 {
            let mut dd = [0.0; 6];
            for s in 0..6 {
                dd[s] = dchr[a][k][s] - bg_dgamma[a][k][s];
            }
            dw[a][k] = sym_contract(&dginv, &diff[k]) + sym_contract(&chr.ginv, &dd);
        }
    }
    GaugeJet { w, dw }
}

/// `(L_W g)_ij = W^k ∂_k g_ij + g_kj ∂_i W^k + g_ik ∂_j W^k`.
#[inline]
pub fn lie_derivative(jet: &Jet, gj: &GaugeJet) -> Sym3 {
    let mut out = [0.0; 6];
    for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let mut acc = 0.0;
        for k in 0..3 {
            acc += gj.w[k] * jet.dg[k][s]
                + sym_get(&jet.g, k, j) * gj.dw[i][k]
                + sym_get(&jet.g, i, k) * gj.dw[j][k];
        }
        out[s] = acc;
    }
    out
}

/// `∂_i W_j + ∂_j W_i − 2 Γ^k_ij W_k`, the same tensor written with the
/// Levi-Civita connection of `g`.
pub fn lie_covariant_form(jet: &Jet, chr: &Christoffel, gj: &GaugeJet) -> Sym3 {
    let w_lo = sym_mul_vec(&jet.g, &gj.w);
    // ∂_a W_j = ∂_a g_jk W^k + g_jk ∂_a W^k
    let dw_lo = |a: usize, j: usize| -> f64 {
        (0..3)
            .map(|k| sym_get(&jet.dg[a], j, k) * gj.w[k] + sym_get(&jet.g, j, k) * gj.dw[a][k])
            .sum()
    };
    let mut out = [0.0; 6];
    for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let gamma_term: f64 = (0..3).map(|k| chr.hi[k][s] * w_lo[k]).sum();
        out[s] = dw_lo(i, j) + dw_lo(j, i) - 2.0 * gamma_term;
    }
    out
}

/// `W` lowered with `g`, its Lie-derivative term, at every node.
#[derive(Debug, Clone)]
pub struct DeTurckField {
    pub chart: ChartSpec,
    pub w_hi: Vec<Vec3>,
    pub w_lo: Vec<Vec3>,
    pub lie: Vec<Sym3>,
}

/// `W` and `L_W g` on every node. Needs filled ghosts.
pub fn compute_w(g: &MetricField, bg: &BackgroundConnection) -> Result<DeTurckField> {
    if !g.ghosts_filled() {
        return Err(XcfError::GhostsUnfilled);
    }
    let c = g.chart;
    let coords: Vec<_> = c.nodes().collect();
    let per: Vec<(Vec3, Vec3, Sym3)> = coords
        .par_iter()
        .enumerate()
        .map(|(n, &(i, j, k))| {
            let jet = metric_jet(g, i, j, k);
            let chr = christoffel(&jet);
            let gj = gauge_jet(&jet, &chr, bg.gamma(n), bg.dgamma(n));
            (gj.w, sym_mul_vec(&jet.g, &gj.w), lie_derivative(&jet, &gj))
        })
        .collect();
    let mut out = DeTurckField {
        chart: c,
        w_hi: Vec::with_capacity(per.len()),
        w_lo: Vec::with_capacity(per.len()),
        lie: Vec::with_capacity(per.len()),
    };
    for (a, b, l) in per {
        out.w_hi.push(a);
        out.w_lo.push(b);
        out.lie.push(l);
    }
    Ok(out)
}

/// Right-hand side `sign·2c + L_W g` at one node, with the curvature it used.
#[inline]
pub fn rhs_point(
    jet: &Jet,
    bg_gamma: &[Sym3; 3],
    bg_dgamma: &[[Sym3; 3]; 3],
    sign: f64,
) -> (Sym3, PointCurvature) {
    let pc = point_curvature(jet);
    let gj = gauge_jet(jet, &pc.chr, bg_gamma, bg_dgamma);
    let lie = lie_derivative(jet, &gj);
    let mut out = [0.0; 6];
    for s in 0..6 {
        out[s] = 2.0 * sign * pc.cross[s] + lie[s];
    }
    (out, pc)
}

/// `sign·2c + L_W g` on every node as a symmetric field.
pub fn modified_rhs(g: &MetricField, sign: f64, bg: &BackgroundConnection) -> Result<TensorField> {
    if !g.ghosts_filled() {
        return Err(XcfError::GhostsUnfilled);
    }
    let c = g.chart;
    let coords: Vec<_> = c.nodes().collect();
    let vals: Vec<Sym3> = coords
        .par_iter()
        .enumerate()
        .map(|(n, &(i, j, k))| {
            rhs_point(&metric_jet(g, i, j, k), bg.gamma(n), bg.dgamma(n), sign).0
        })
        .collect();
    let mut out = TensorField::zeros(c, 2, true);
    for (n, (i, j, k)) in c.nodes().enumerate() {
        out.node_mut(i, j, k as isize).copy_from_slice(&vals[n]);
    }
    if let Some(n) = vals.iter().position(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(XcfError::NonFinite {
            what: format!("right-hand side at node {n}"),
        });
    }
    Ok(out)
}
