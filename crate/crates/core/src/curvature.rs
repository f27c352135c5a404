//! Curvature of a sampled metric: Christoffel symbols, Riemann, Ricci,
//! scalar and Einstein tensors, and the cross curvature tensor.
//!
//! Sign convention: `R_ijji` is the sectional curvature of the `(i, j)` plane
//! in an orthonormal frame, so a space form of curvature `K` has
//! `R_ijkl = K (g_il g_jk - g_ik g_jl)`, `Ric = 2K g` and `E = -K g`.
//!
//! Everything is evaluated pointwise from the metric jet `(g, ∂g, ∂∂g)` that
//! [`metric_jet`] builds from compact stencils. The Riemann tensor is
//! `∂Γ - ∂Γ + ΓΓ` with the Christoffel derivatives expanded by the chain rule,
//! so the algebraic symmetries of the discrete tensor hold to rounding.

use rayon::prelude::*;

use crate::chart::{metric_jet, ChartSpec, Jet, MetricField, TensorField};
use crate::error::{Result, XcfError};
use crate::tensor::{
    relative_eigenvalues, sym_adj, sym_det, sym_get, sym_inv, sym_max_abs, sym_sandwich,
    sym_to_mat, Mat3, Sym3, EPSILON_TERMS, SYM_PAIRS,
};

pub type Riemann = [[[[f64; 3]; 3]; 3]; 3];

/// Christoffel symbols at a point in both index positions.
#[derive(Debug, Clone, Copy)]
pub struct Christoffel {
    pub ginv: Sym3,
    pub detg: f64,
    /// `lo[l][SYM[p][q]] = Γ_{l,pq}`.
    pub lo: [Sym3; 3],
    /// `hi[k][SYM[p][q]] = Γ^k_pq`.
    pub hi: [Sym3; 3],
}

#[inline]
pub fn christoffel(jet: &Jet) -> Christoffel {
    let (ginv, detg) = sym_inv(&jet.g).unwrap_or(([f64::NAN; 6], f64::NAN));
    let mut lo = [[0.0; 6]; 3];
    for l in 0..3 {
        for (s, &(p, q)) in SYM_PAIRS.iter().enumerate() {
            lo[l][s] = 0.5
                * (sym_get(&jet.dg[p], l, q) + sym_get(&jet.dg[q], l, p)
                    - sym_get(&jet.dg[l], p, q));
        }
    }
    let mut hi = [[0.0; 6]; 3];
    for k in 0..3 {
        for s in 0..6 {
            hi[k][s] = sym_get(&ginv, k, 0) * lo[0][s]
                + sym_get(&ginv, k, 1) * lo[1][s]
                + sym_get(&ginv, k, 2) * lo[2][s];
        }
    }
    Christoffel { ginv, detg, lo, hi }
}

/// One component `R_ijkl` from the jet and Christoffels.
#[inline]
fn riemann_component(jet: &Jet, chr: &Christoffel, i: usize, j: usize, k: usize, l: usize) -> f64 {
    let second = 0.5
        * (sym_get(jet.dd(i, k), j, l) + sym_get(jet.dd(j, l), i, k)
            - sym_get(jet.dd(i, l), j, k)
            - sym_get(jet.dd(j, k), i, l));
    let mut quad = 0.0;
    for a in 0..3 {
        quad += sym_get(&chr.lo[a], k, i) * sym_get(&chr.hi[a], l, j)
            - sym_get(&chr.lo[a], l, i) * sym_get(&chr.hi[a], k, j);
    }
    second + quad
}

/// All 81 Riemann components, each evaluated independently from the formula.
pub fn riemann_full(jet: &Jet, chr: &Christoffel) -> Riemann {
    let mut r = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    r[i][j][k][l] = riemann_component(jet, chr, i, j, k, l);
                }
            }
        }
    }
    r
}

/// Curvature quantities the flow needs at one point.
#[derive(Debug, Clone, Copy)]
pub struct PointCurvature {
    pub chr: Christoffel,
    pub ricci: Sym3,
    pub scalar: f64,
    pub einstein_lo: Sym3,
    pub einstein_hi: Sym3,
    /// Cross curvature `c_ij = det E (E⁻¹)_ij`, evaluated as `det g · adj(E^{ij})`,
    /// which is the same polynomial without the division.
    pub cross: Sym3,
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Fast path: six independent Riemann components, then Ricci through `c`.
#[inline]
pub fn point_curvature(jet: &Jet) -> PointCurvature {
    let chr = christoffel(jet);
    // Riemann as a symmetric 3×3 matrix over antisymmetric index pairs.
    let mut rp = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let (i, j) = PAIRS[a];
            let (k, l) = PAIRS[b];
            let v = riemann_component(jet, &chr, i, j, k, l);
            rp[a][b] = v;
            rp[b][a] = v;
        }
    }
    let rfull = |i: usize, j: usize, k: usize, l: usize| -> f64 {
        if i == j || k == l {
            return 0.0;
        }
        let (a, sa) = pair_slot(i, j);
        let (b, sb) = pair_slot(k, l);
        sa * sb * rp[a][b]
    };
    let gi = &chr.ginv;
    let mut ricci = [0.0; 6];
    for (s, &(j, k)) in SYM_PAIRS.iter().enumerate() {
        let mut acc = 0.0;
        for i in 0..3 {
            for l in 0..3 {
                if i != j && k != l {
                    acc += sym_get(gi, i, l) * rfull(i, j, k, l);
                }
            }
        }
        ricci[s] = acc;
    }
    finish_point(chr, ricci, &jet.g)
}

#[inline]
fn pair_slot(i: usize, j: usize) -> (usize, f64) {
    match (i, j) {
        (0, 1) => (0, 1.0),
        (1, 0) => (0, -1.0),
        (0, 2) => (1, 1.0),
        (2, 0) => (1, -1.0),
        (1, 2) => (2, 1.0),
        _ => (2, -1.0),
    }
}

#[inline]
fn finish_point(chr: Christoffel, ricci: Sym3, g: &Sym3) -> PointCurvature {
    let scalar = crate::tensor::sym_contract(&chr.ginv, &ricci);
    let mut einstein_lo = [0.0; 6];
    for s in 0..6 {
        einstein_lo[s] = ricci[s] - 0.5 * scalar * g[s];
    }
    let einstein_hi = sym_sandwich(&chr.ginv, &einstein_lo);
    let adj = sym_adj(&einstein_hi);
    let cross = adj.map(|a| chr.detg * a);
    PointCurvature {
        chr,
        ricci,
        scalar,
        einstein_lo,
        einstein_hi,
        cross,
    }
}

/// Ricci contraction `R_jk = g^{il} R_ijkl` of a full Riemann tensor.
pub fn ricci_from_riemann(r: &Riemann, ginv: &Sym3) -> Sym3 {
    let mut ricci = [0.0; 6];
    for (s, &(j, k)) in SYM_PAIRS.iter().enumerate() {
        let mut acc = 0.0;
        for i in 0..3 {
            for l in 0..3 {
                acc += sym_get(ginv, i, l) * r[i][j][k][l];
            }
        }
        ricci[s] = acc;
    }
    ricci
}

/// Which of the three equivalent cross-curvature formulas to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossFormula {
    /// `det E · (E⁻¹)_ij` with `det E = det(E_ij) / det(g_ij)`.
    DetE,
    /// `½ μ^{ipq} μ^{jrs} E_pr E_qs`, lowered with `g`.
    Mu2,
    /// `⅛ μ^{pqk} μ^{rsl} R_ilpq R_kjrs`.
    Mu4,
}

/// Curvature data at one node.
#[derive(Debug, Clone)]
pub struct NodeCurvature {
    pub g: Sym3,
    pub ginv: Sym3,
    pub detg: f64,
    /// `gamma[k][SYM[i][j]] = Γ^k_ij`.
    pub gamma: [Sym3; 3],
    pub riemann: Riemann,
    pub ricci: Sym3,
    pub scalar: f64,
    pub einstein_lo: Sym3,
    pub einstein_hi: Sym3,
    pub cross: Sym3,
}

impl NodeCurvature {
    /// `μ^{ijk} = ε^{ijk} / √det g`.
    pub fn mu_hi(&self) -> [[[f64; 3]; 3]; 3] {
        let s = 1.0 / self.detg.sqrt();
        let mut m = [[[0.0; 3]; 3]; 3];
        for &(i, j, k, e) in &EPSILON_TERMS {
            m[i][j][k] = e * s;
        }
        m
    }

    /// `det E` as the ratio `det(E_ij) / det(g_ij)`.
    pub fn det_e(&self) -> f64 {
        sym_det(&self.einstein_lo) / self.detg
    }
}

/// Per-node curvature of a whole field (interior nodes, storage order).
#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    pub chart: ChartSpec,
    pub nodes: Vec<NodeCurvature>,
    /// Nodes where `det E` vanished and `cross` fell back to the μ formula.
    pub fallback_nodes: Vec<usize>,
}

pub fn node_curvature(jet: &Jet) -> NodeCurvature {
    let chr = christoffel(jet);
    let riemann = riemann_full(jet, &chr);
    let ricci = ricci_from_riemann(&riemann, &chr.ginv);
    let pc = finish_point(chr, ricci, &jet.g);
    let mut node = NodeCurvature {
        g: jet.g,
        ginv: chr.ginv,
        detg: chr.detg,
        gamma: chr.hi,
        riemann,
        ricci,
        scalar: pc.scalar,
        einstein_lo: pc.einstein_lo,
        einstein_hi: pc.einstein_hi,
        cross: [0.0; 6],
    };
    node.cross = cross_det_e(&node).unwrap_or([f64::NAN; 6]);
    node
}

/// Computes the bundle at every interior node. Requires filled ghosts.
///
/// `cross` uses the `det E` formula; nodes with singular `E` are listed in
/// `fallback_nodes` and use the two-μ contraction instead.
pub fn compute_bundle(g: &MetricField) -> Result<CurvatureBundle> {
    if !g.ghosts_filled() {
        return Err(XcfError::GhostsUnfilled);
    }
    let c = g.chart;
    let coords: Vec<(usize, usize, usize)> = c.nodes().collect();
    let mut nodes: Vec<NodeCurvature> = coords
        .par_iter()
        .map(|&(i, j, k)| node_curvature(&metric_jet(g, i, j, k)))
        .collect();
    let mut fallback_nodes = Vec::new();
    for (n, node) in nodes.iter_mut().enumerate() {
        if node.cross[0].is_nan() {
            fallback_nodes.push(n);
            node.cross = cross_mu2(node);
        }
    }
    Ok(CurvatureBundle {
        chart: c,
        nodes,
        fallback_nodes,
    })
}

fn cross_det_e(node: &NodeCurvature) -> Option<Sym3> {
    let scale = sym_max_abs(&node.einstein_hi);
    if scale == 0.0 {
        // c is quadratic in E, so it vanishes with E.
        return Some([0.0; 6]);
    }
    let det_hi = sym_det(&node.einstein_hi);
    if det_hi.abs() <= 1e-14 * scale.powi(3) {
        return None;
    }
    let (inv_hi, _) = sym_inv(&node.einstein_hi)?;
    let det_e = node.det_e();
    Some(inv_hi.map(|v| det_e * v))
}

fn cross_mu2(node: &NodeCurvature) -> Sym3 {
    let mu = node.mu_hi();
    let e = sym_to_mat(&node.einstein_lo);
    let mut upper = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for p in 0..3 {
                for q in 0..3 {
                    let a = mu[i][p][q];
                    if a == 0.0 {
                        continue;
                    }
                    for r in 0..3 {
                        for s in 0..3 {
                            acc += a * mu[j][r][s] * e[p][r] * e[q][s];
                        }
                    }
                }
            }
            upper[i][j] = 0.5 * acc;
        }
    }
    lower_both(&upper, &node.g)
}

fn lower_both(upper: &Mat3, g: &Sym3) -> Sym3 {
    let gm = sym_to_mat(g);
    let mut out = [0.0; 6];
    for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let mut acc = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                acc += gm[i][a] * gm[j][b] * upper[a][b];
            }
        }
        out[s] = acc;
    }
    out
}

fn cross_mu4(node: &NodeCurvature) -> Sym3 {
    let r = &node.riemann;
    let inv_det = 1.0 / node.detg;
    let mut out = [0.0; 6];
    for (slot, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let mut acc = 0.0;
        for &(p, q, k, e1) in &EPSILON_TERMS {
            for &(rr, s, l, e2) in &EPSILON_TERMS {
                acc += e1 * e2 * r[i][l][p][q] * r[k][j][rr][s];
            }
        }
        out[slot] = 0.125 * acc * inv_det;
    }
    out
}

/// The cross curvature tensor by the selected formula, as a symmetric field.
pub fn cross_variant(bundle: &CurvatureBundle, which: CrossFormula) -> Result<TensorField> {
    let c = bundle.chart;
    let mut out = TensorField::zeros(c, 2, true);
    for (n, (i, j, k)) in c.nodes().enumerate() {
        let node = &bundle.nodes[n];
        let v = match which {
            CrossFormula::DetE => {
                cross_det_e(node).ok_or(XcfError::DegenerateEinstein { node: n })?
            }
            CrossFormula::Mu2 => cross_mu2(node),
            CrossFormula::Mu4 => cross_mu4(node),
        };
        out.node_mut(i, j, k as isize).copy_from_slice(&v);
    }
    Ok(out)
}

/// Largest residual of `μ^{pqk} μ^{rsl} R_kjrs = 2 (E^{ql} δ^p_j - E^{pl} δ^q_j)`
/// over nodes and free indices, relative to `max |E^{ij}|`.
pub fn check_mu_identity(bundle: &CurvatureBundle) -> f64 {
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    for node in &bundle.nodes {
        scale = scale.max(sym_max_abs(&node.einstein_hi));
        let inv_det = 1.0 / node.detg;
        let r = &node.riemann;
        for p in 0..3 {
            for q in 0..3 {
                for l in 0..3 {
                    for j in 0..3 {
                        let mut lhs = 0.0;
                        for &(p2, q2, k, e1) in &EPSILON_TERMS {
                            if p2 != p || q2 != q {
                                continue;
                            }
                            for &(rr, s, l2, e2) in &EPSILON_TERMS {
                                if l2 == l {
                                    lhs += e1 * e2 * r[k][j][rr][s];
                                }
                            }
                        }
                        lhs *= inv_det;
                        let dpj = if p == j { 1.0 } else { 0.0 };
                        let dqj = if q == j { 1.0 } else { 0.0 };
                        let rhs = 2.0
                            * (sym_get(&node.einstein_hi, q, l) * dpj
                                - sym_get(&node.einstein_hi, p, l) * dqj);
                        worst = worst.max((lhs - rhs).abs());
                    }
                }
            }
        }
    }
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

/// Residuals of the algebraic Riemann identities, relative to `max |R_ijkl|`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RiemannIdentityResiduals {
    pub antisym_first: f64,
    pub antisym_second: f64,
    pub pair_symmetry: f64,
    pub bianchi: f64,
}

impl RiemannIdentityResiduals {
    pub fn max(&self) -> f64 {
        self.antisym_first
            .max(self.antisym_second)
            .max(self.pair_symmetry)
            .max(self.bianchi)
    }
}

pub fn riemann_identity_residuals(bundle: &CurvatureBundle) -> RiemannIdentityResiduals {
    let mut res = RiemannIdentityResiduals::default();
    let mut scale = 0.0_f64;
    for node in &bundle.nodes {
        let r = &node.riemann;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let v = r[i][j][k][l];
                        scale = scale.max(v.abs());
                        res.antisym_first = res.antisym_first.max((v + r[j][i][k][l]).abs());
                        res.antisym_second = res.antisym_second.max((v + r[i][j][l][k]).abs());
                        res.pair_symmetry = res.pair_symmetry.max((v - r[k][l][i][j]).abs());
                        res.bianchi = res.bianchi.max((v + r[i][k][l][j] + r[i][l][j][k]).abs());
                    }
                }
            }
        }
    }
    if scale > 0.0 {
        res.antisym_first /= scale;
        res.antisym_second /= scale;
        res.pair_symmetry /= scale;
        res.bianchi /= scale;
    }
    res
}

/// Largest pairwise difference among the three cross formulas, relative to `max |c|`.
pub fn cross_formula_agreement(bundle: &CurvatureBundle) -> Result<f64> {
    let a = cross_variant(bundle, CrossFormula::DetE)?;
    let b = cross_variant(bundle, CrossFormula::Mu2)?;
    let c = cross_variant(bundle, CrossFormula::Mu4)?;
    let scale = a.max_abs().max(b.max_abs()).max(c.max_abs());
    let mut worst = 0.0_f64;
    for n in 0..a.data.len() {
        worst = worst
            .max((a.data[n] - b.data[n]).abs())
            .max((a.data[n] - c.data[n]).abs())
            .max((b.data[n] - c.data[n]).abs());
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionalClass {
    AllNegative,
    AllPositive,
    Mixed,
}

impl SectionalClass {
    pub fn label(&self) -> &'static str {
        match self {
            SectionalClass::AllNegative => "all-negative-sectional",
            SectionalClass::AllPositive => "all-positive-sectional",
            SectionalClass::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionalReport {
    pub min_eig_e: f64,
    pub max_eig_e: f64,
    pub classification: SectionalClass,
}

/// Eigenvalues of `E^i_j = g^{ik} E_kj` over all nodes.
///
/// `E` is positive definite exactly when every sectional curvature is negative.
pub fn sectional_report(bundle: &CurvatureBundle) -> SectionalReport {
    let (min, max) = bundle
        .nodes
        .iter()
        .map(|n| relative_eigenvalues(&n.einstein_lo, &n.g).unwrap_or([f64::NAN; 3]))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(e[0]), hi.max(e[2]))
        });
    SectionalReport {
        min_eig_e: min,
        max_eig_e: max,
        classification: classify(min, max),
    }
}

pub fn classify(min_eig: f64, max_eig: f64) -> SectionalClass {
    if min_eig > 0.0 {
        SectionalClass::AllNegative
    } else if max_eig < 0.0 {
        SectionalClass::AllPositive
    } else {
        SectionalClass::Mixed
    }
}

/// Sectional curvature of the plane spanned by `x`, `y`.
pub fn sectional_curvature(node: &NodeCurvature, x: &[f64; 3], y: &[f64; 3]) -> f64 {
    let r = &node.riemann;
    let mut num = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    num += r[i][j][k][l] * x[i] * y[j] * y[k] * x[l];
                }
            }
        }
    }
    let gxx = crate::tensor::sym_quad(&node.g, x);
    let gyy = crate::tensor::sym_quad(&node.g, y);
    let gm = sym_to_mat(&node.g);
    let mut gxy = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            gxy += gm[a][b] * x[a] * y[b];
        }
    }
    num / (gxx * gyy - gxy * gxy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::make_chart;
    use crate::oracles::{random_smooth_metric, SpaceFormKind};
    use crate::tensor::IDENTITY;
    use rand::{Rng, SeedableRng};

    fn slab(n: usize) -> ChartSpec {
        make_chart(ChartSpec::slab(n, n, n, 1.0, 1.0, 1.0, 2.0)).unwrap()
    }

    fn max_rel_diff(a: &Sym3, b: &Sym3) -> f64 {
        let s = sym_max_abs(b).max(1e-300);
        (0..6).fold(0.0_f64, |m, k| m.max((a[k] - b[k]).abs())) / s
    }

    #[test]
    fn flat_metric_has_no_curvature() {
        let g = MetricField::constant(slab(8), IDENTITY);
        let b = compute_bundle(&g).unwrap();
        for n in &b.nodes {
            assert_eq!(n.einstein_lo, [0.0; 6]);
            assert_eq!(n.cross, [0.0; 6]);
            assert!(n
                .riemann
                .iter()
                .flatten()
                .flatten()
                .flatten()
                .all(|v| *v == 0.0));
        }
        for f in [CrossFormula::DetE, CrossFormula::Mu2, CrossFormula::Mu4] {
            assert_eq!(cross_variant(&b, f).unwrap().max_abs(), 0.0);
        }
        assert_eq!(check_mu_identity(&b), 0.0);
        let rep = sectional_report(&b);
        assert_eq!(rep.classification, SectionalClass::Mixed);
        assert_eq!(rep.min_eig_e, 0.0);
    }

    #[test]
    fn hyperbolic_slab_is_an_einstein_space_form() {
        let c = slab(16);
        let g = SpaceFormKind::HyperbolicHalfspace.metric(c, 0.0).unwrap();
        let b = compute_bundle(&g).unwrap();
        let h2 = c.spacing()[2].powi(2);
        for n in &b.nodes {
            assert!(max_rel_diff(&n.einstein_lo, &n.g) < 5.0 * h2);
            assert!(max_rel_diff(&n.cross, &n.g) < 10.0 * h2);
            assert!((n.scalar + 6.0).abs() < 20.0 * h2);
        }
        let rep = sectional_report(&b);
        assert_eq!(rep.classification, SectionalClass::AllNegative);
        assert!((rep.min_eig_e - 1.0).abs() < 5.0 * h2);
        assert!(cross_formula_agreement(&b).unwrap() < 1e-10);
        assert!(check_mu_identity(&b) < 1e-9);
    }

    #[test]
    fn riemann_matches_space_form_tensor() {
        let c = slab(16);
        let g = SpaceFormKind::HyperbolicHalfspace.metric(c, 0.0).unwrap();
        let b = compute_bundle(&g).unwrap();
        let n = &b.nodes[c.node_index(3, 5, 7)];
        let gm = sym_to_mat(&n.g);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let expect = -(gm[i][l] * gm[j][k] - gm[i][k] * gm[j][l]);
                        assert!((n.riemann[i][j][k][l] - expect).abs() < 1e-2);
                    }
                }
            }
        }
    }

    #[test]
    fn stereographic_sphere_patch() {
        // Lateral wrap is not a symmetry of this metric; check nodes away from it.
        let c = make_chart(ChartSpec::slab(16, 16, 16, 1.0, 1.0, -0.5, 0.5)).unwrap();
        let g = SpaceFormKind::SphereStereographic.metric(c, 0.0).unwrap();
        let b = compute_bundle(&g).unwrap();
        let h2 = c.spacing()[2].powi(2);
        for (n, (i, j, _)) in c.nodes().enumerate() {
            if i == 0 || j == 0 || i == c.nx - 1 || j == c.ny - 1 {
                continue;
            }
            let node = &b.nodes[n];
            let neg_g = node.g.map(|v| -v);
            assert!(max_rel_diff(&node.einstein_lo, &neg_g) < 20.0 * h2);
            assert!(max_rel_diff(&node.cross, &node.g) < 40.0 * h2);
        }
    }

    #[test]
    fn hopf_sphere_is_positive_space_form() {
        let c = SpaceFormKind::SphereHopf.default_chart(16);
        let g = SpaceFormKind::SphereHopf.metric(c, 0.0).unwrap();
        let b = compute_bundle(&g).unwrap();
        let rep = sectional_report(&b);
        assert_eq!(rep.classification, SectionalClass::AllPositive);
        let h2 = c.spacing()[2].powi(2);
        assert!((rep.max_eig_e + 1.0).abs() < 10.0 * h2);
        assert!((rep.min_eig_e + 1.0).abs() < 10.0 * h2);
        for n in &b.nodes {
            assert!(max_rel_diff(&n.cross, &n.g) < 10.0 * h2);
        }
    }

    #[test]
    fn identities_on_random_metric() {
        let c = slab(12);
        let g = random_smooth_metric(c, 7, 0.2);
        let b = compute_bundle(&g).unwrap();
        assert!(riemann_identity_residuals(&b).max() < 1e-12);
        assert!(check_mu_identity(&b) < 1e-10);
        assert!(cross_formula_agreement(&b).unwrap() < 1e-10);
        for n in &b.nodes {
            assert!(n.ricci.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn fast_path_agrees_with_full_riemann() {
        let c = slab(10);
        let g = random_smooth_metric(c, 3, 0.25);
        for (i, j, k) in [(1, 2, 3), (0, 0, 0), (9, 4, 9)] {
            let jet = metric_jet(&g, i, j, k);
            let fast = point_curvature(&jet);
            let full = node_curvature(&jet);
            assert!(max_rel_diff(&fast.ricci, &full.ricci) < 1e-12);
            assert!(max_rel_diff(&fast.cross, &full.cross) < 1e-11);
        }
    }

    #[test]
    fn det_e_variant_errors_on_singular_einstein() {
        // E = diag(1, 0, 0) style degeneracy built by hand.
        let c = slab(6);
        let mut b = compute_bundle(&MetricField::constant(c, IDENTITY)).unwrap();
        b.nodes[5].einstein_lo = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        b.nodes[5].einstein_hi = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(matches!(
            cross_variant(&b, CrossFormula::DetE),
            Err(XcfError::DegenerateEinstein { node: 5 })
        ));
        assert!(cross_variant(&b, CrossFormula::Mu2).is_ok());
    }

    #[test]
    fn sectional_sign_coherence() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cases = [
            (
                SpaceFormKind::HyperbolicHalfspace
                    .metric(slab(8), 0.0)
                    .unwrap(),
                true,
            ),
            (
                SpaceFormKind::SphereHopf
                    .metric(SpaceFormKind::SphereHopf.default_chart(8), 0.0)
                    .unwrap(),
                false,
            ),
        ];
        for (g, negative) in cases {
            let b = compute_bundle(&g).unwrap();
            let rep = sectional_report(&b);
            let mut all_neg = true;
            let mut all_pos = true;
            for node in b.nodes.iter().step_by(7) {
                for _ in 0..100 {
                    let x: [f64; 3] = [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ];
                    let y: [f64; 3] = [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ];
                    let k = sectional_curvature(node, &x, &y);
                    all_neg &= k < 0.0;
                    all_pos &= k > 0.0;
                }
            }
            assert_eq!(all_neg, rep.classification == SectionalClass::AllNegative);
            assert_eq!(all_pos, rep.classification == SectionalClass::AllPositive);
            assert_eq!(negative, all_neg);
        }
    }

    #[test]
    fn conformal_scaling_scales_cross_inversely() {
        let c = slab(12);
        let g0 = random_smooth_metric(c, 5, 0.2);
        let mut g1 = g0.clone();
        for v in g1.data.iter_mut() {
            *v = v.map(|x| 2.5 * x);
        }
        let b0 = compute_bundle(&g0).unwrap();
        let b1 = compute_bundle(&g1).unwrap();
        for (n0, n1) in b0.nodes.iter().zip(&b1.nodes) {
            let expect = n0.cross.map(|x| x / 2.5);
            assert!(max_rel_diff(&n1.cross, &expect) < 1e-11);
        }
    }
}
