//! Principal symbols of the linearized cross-curvature operator `X` and of the
//! gauge term `Y = L_W g`, as 6×6 matrices acting on symmetric perturbations.
//!
//! Perturbations are packed in the order `(v11, v12, v13, v22, v33, v23)`.
//! Note that this differs from the storage order of [`Sym3`].

use nalgebra::Complex;
use rayon::prelude::*;

use crate::chart::{metric_jet, MetricField};
use crate::curvature::point_curvature;
use crate::error::{Result, XcfError};
use crate::tensor::{is_positive_definite, sym_get, sym_quad, Mat3, Sym3, Vec3};

/// Index pairs of the packed basis.
pub const BASIS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (2, 2), (1, 2)];

/// Storage-order symmetric tensor to packed symbol basis.
#[inline]
pub fn pack(s: &Sym3) -> [f64; 6] {
    [s[0], s[1], s[2], s[3], s[5], s[4]]
}

#[inline]
pub fn unpack(p: &[f64; 6]) -> Sym3 {
    [p[0], p[1], p[2], p[3], p[5], p[4]]
}

/// Inputs of a symbol evaluation: `E^{ij}`, `g^{ij}` and a covector `ζ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolProbe {
    pub e_hi: Sym3,
    pub g_hi: Sym3,
    pub zeta: Vec3,
}

impl SymbolProbe {
    pub fn new(e_hi: Sym3, g_hi: Sym3, zeta: Vec3) -> Result<Self> {
        if !is_positive_definite(&g_hi) {
            return Err(XcfError::ProbeRejected(
                "g^ij is not positive definite".into(),
            ));
        }
        if zeta.iter().all(|z| *z == 0.0) {
            return Err(XcfError::ProbeRejected("covector is zero".into()));
        }
        Ok(SymbolProbe { e_hi, g_hi, zeta })
    }
}

/// A 6×6 symbol matrix in the packed basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolMatrix {
    pub m: [[f64; 6]; 6],
}

impl SymbolMatrix {
    pub fn zeros() -> Self {
        SymbolMatrix { m: [[0.0; 6]; 6] }
    }

    pub fn apply(&self, v: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|r| (0..6).map(|c| self.m[r][c] * v[c]).sum())
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymbolMatrix {
            m: self.m.map(|row| row.map(|v| s * v)),
        }
    }

    pub fn add(&self, other: &SymbolMatrix) -> Self {
        SymbolMatrix {
            m: std::array::from_fn(|r| std::array::from_fn(|c| self.m[r][c] + other.m[r][c])),
        }
    }
}

fn basis_tensor(b: usize) -> Mat3 {
    let (p, q) = BASIS[b];
    let mut v = [[0.0; 3]; 3];
    v[p][q] = 1.0;
    v[q][p] = 1.0;
    v
}

/// `[σDX v]_ij = E^{ml}(ζ_iζ_j v_lm + ζ_lζ_m v_ij − ζ_iζ_m v_lj − ζ_lζ_j v_im)`.
pub fn sigma_dx_formula(probe: &SymbolProbe, v: &Mat3) -> Mat3 {
    let z = &probe.zeta;
    let e = |m: usize, l: usize| sym_get(&probe.e_hi, m, l);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for m in 0..3 {
                for l in 0..3 {
                    acc += e(m, l)
                        * (z[i] * z[j] * v[l][m] + z[l] * z[m] * v[i][j]
                            - z[i] * z[m] * v[l][j]
                            - z[l] * z[j] * v[i][m]);
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

/// `[σDY v]_ij = g^{pq}(ζ_jζ_q v_pi + ζ_iζ_q v_pj − ζ_jζ_i v_pq)`.
pub fn sigma_dy_formula(probe: &SymbolProbe, v: &Mat3) -> Mat3 {
    let z = &probe.zeta;
    let g = |p: usize, q: usize| sym_get(&probe.g_hi, p, q);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for p in 0..3 {
                for q in 0..3 {
                    acc += g(p, q)
                        * (z[j] * z[q] * v[p][i] + z[i] * z[q] * v[p][j] - z[j] * z[i] * v[p][q]);
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

fn assemble(probe: &SymbolProbe, f: fn(&SymbolProbe, &Mat3) -> Mat3) -> SymbolMatrix {
    let mut m = [[0.0; 6]; 6];
    for b in 0..6 {
        let col = f(probe, &basis_tensor(b));
        for (r, &(i, j)) in BASIS.iter().enumerate() {
            m[r][b] = col[i][j];
        }
    }
    SymbolMatrix { m }
}

pub fn sigma_dx(probe: &SymbolProbe) -> SymbolMatrix {
    assemble(probe, sigma_dx_formula)
}

pub fn sigma_dy(probe: &SymbolProbe) -> SymbolMatrix {
    assemble(probe, sigma_dy_formula)
}

/// Symbol of the modified operator `sign·X + Y`.
pub fn sigma_combined(probe: &SymbolProbe, sign: f64) -> SymbolMatrix {
    sigma_dx(probe).scaled(sign).add(&sigma_dy(probe))
}

type C64 = Complex<f64>;

/// Eigenvalues sorted by real part, then imaginary part.
///
/// Exact zero blocks below the diagonal are deflated first, so triangular
/// and block-triangular matrices return their diagonal blocks' spectra
/// without rounding. Remaining blocks use the characteristic polynomial
/// from Faddeev–LeVerrier, simultaneous Aberth iteration on its roots, and
/// a final Aberth polish that evaluates `p/p'` as `1 / tr((λI − A)⁻¹)`
/// directly from the matrix, which keeps clustered roots accurate.
pub fn spectrum(m: &SymbolMatrix) -> Result<[C64; 6]> {
    if m.m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(XcfError::EigenNoConvergence(format!("{:?}", m.m)));
    }
    let mut out = Vec::with_capacity(6);
    deflate(&m.m, 0, 6, &mut out)
        .map_err(|_| XcfError::EigenNoConvergence(format!("{:?}", m.m)))?;
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(std::array::from_fn(|i| out[i]))
}

fn deflate(
    a: &[[f64; 6]; 6],
    lo: usize,
    hi: usize,
    out: &mut Vec<C64>,
) -> std::result::Result<(), ()> {
    for s in lo + 1..hi {
        let zero_block = (s..hi).all(|i| (lo..s).all(|j| a[i][j] == 0.0));
        if zero_block {
            deflate(a, lo, s, out)?;
            return deflate(a, s, hi, out);
        }
    }
    let n = hi - lo;
    match n {
        1 => out.push(C64::new(a[lo][lo], 0.0)),
        2 => {
            let (p, q, r, s) = (a[lo][lo], a[lo][lo + 1], a[lo + 1][lo], a[lo + 1][lo + 1]);
            let half_tr = 0.5 * (p + s);
            let disc = 0.25 * (p - s) * (p - s) + q * r;
            if disc >= 0.0 {
                let d = disc.sqrt();
                out.push(C64::new(half_tr + d, 0.0));
                out.push(C64::new(half_tr - d, 0.0));
            } else {
                let d = (-disc).sqrt();
                out.push(C64::new(half_tr, d));
                out.push(C64::new(half_tr, -d));
            }
        }
        _ => {
            let block: Vec<Vec<f64>> = (lo..hi).map(|i| a[i][lo..hi].to_vec()).collect();
            out.extend(block_eigenvalues(&block)?);
        }
    }
    Ok(())
}

/// Characteristic polynomial coefficients `c[0..=n]` (monic, `c[n] = 1`)
/// of `det(λI − A)` by the Faddeev–LeVerrier recursion.
pub fn faddeev_leverrier(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut mk = vec![vec![0.0; n]; n];
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += a[i][l] * mk[l][j];
                }
                next[i][j] = acc;
            }
            next[i][i] += c[n - k + 1];
        }
        mk = next;
        let mut tr = 0.0;
        for i in 0..n {
            for l in 0..n {
                tr += a[i][l] * mk[l][i];
            }
        }
        c[n - k] = -tr / k as f64;
    }
    c
}

fn poly_ratio(c: &[f64], z: C64) -> C64 {
    let n = c.len() - 1;
    let mut p = C64::new(c[n], 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for k in (0..n).rev() {
        dp = dp * z + p;
        p = p * z + c[k];
    }
    if dp.norm() == 0.0 {
        return C64::new(0.0, 0.0);
    }
    p / dp
}

/// `p(z)/p'(z) = 1 / tr((zI − A)⁻¹)`; zero when `zI − A` is exactly singular.
fn resolvent_ratio(a: &[Vec<f64>], z: C64) -> C64 {
    let n = a.len();
    let mut m: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = if i == j { z } else { C64::new(0.0, 0.0) };
                    d - a[i][j]
                })
                .collect()
        })
        .collect();
    let mut inv: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm()))
            .unwrap();
        if m[piv][col].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        m.swap(col, piv);
        inv.swap(col, piv);
        let d = m[col][col];
        for j in 0..n {
            m[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f.norm() != 0.0 {
                    for j in 0..n {
                        let (mc, ic) = (m[col][j], inv[col][j]);
                        m[r][j] -= f * mc;
                        inv[r][j] -= f * ic;
                    }
                }
            }
        }
    }
    let tr: C64 = (0..n).map(|i| inv[i][i]).sum();
    if tr.norm() == 0.0 || !tr.is_finite() {
        return C64::new(0.0, 0.0);
    }
    C64::new(1.0, 0.0) / tr
}

fn aberth(
    roots: &mut [C64],
    ratio: impl Fn(C64) -> C64,
    scale: f64,
    max_iter: usize,
    stall_floor: f64,
) -> bool {
    let n = roots.len();
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..max_iter {
        let mut biggest = 0.0_f64;
        for k in 0..n {
            let r = ratio(roots[k]);
            let mut s = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != k {
                    let d = roots[k] - roots[j];
                    if d.norm() > 0.0 {
                        s += C64::new(1.0, 0.0) / d;
                    }
                }
            }
            let denom = C64::new(1.0, 0.0) - r * s;
            let w = if denom.norm() > 0.0 { r / denom } else { r };
            if w.is_finite() {
                roots[k] -= w;
                biggest = biggest.max(w.norm());
            }
        }
        if biggest <= 4.0 * f64::EPSILON * scale {
            return true;
        }
        // Clustered roots stop improving at a noise floor above `4ε`.
        if biggest < best {
            best = biggest;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 8 && best <= stall_floor * scale {
                return true;
            }
        }
    }
    false
}

fn block_eigenvalues(a: &[Vec<f64>]) -> std::result::Result<Vec<C64>, ()> {
    let n = a.len();
    let c = faddeev_leverrier(a);
    // Cauchy bound on root magnitudes.
    let bound = 1.0 + c[..n].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = a
        .iter()
        .flatten()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut roots: Vec<C64> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            C64::from_polar(0.5 * bound, th)
        })
        .collect();
    aberth(&mut roots, |z| poly_ratio(&c, z), bound, 500, 1e-3);
    if roots.iter().any(|r| !r.is_finite()) {
        return Err(());
    }
    let sums = power_traces(a);
    for radius in [1e-4, 1e-7] {
        if let Some(r) = cluster_newton(a, &roots, radius * bound, scale) {
            if matches_power_traces(&r, &sums, scale) {
                return Ok(r);
            }
        }
    }
    let polished = aberth(&mut roots, |z| resolvent_ratio(a, z), scale, 200, 1e-10);
    if roots.iter().any(|r| !r.is_finite()) {
        return Err(());
    }
    if !polished {
        // Accept a stalled polish only if the roots still move at noise level.
        let mut probe = roots.clone();
        aberth(&mut probe, |z| resolvent_ratio(a, z), scale, 1, 1e-10);
        let drift = roots
            .iter()
            .zip(&probe)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()));
        if drift > 1e-8 * scale {
            return Err(());
        }
    }
    Ok(roots)
}

/// `tr(Aᵏ)` for `k = 1..=n`.
fn power_traces(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut p = a.to_vec();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push((0..n).map(|i| p[i][i]).sum());
        p = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|l| p[i][l] * a[l][j]).sum())
                    .collect()
            })
            .collect();
    }
    out
}

/// Whether the power sums of `roots` reproduce `tr(Aᵏ)`, which rejects
/// clusters that merged distinct eigenvalues.
fn matches_power_traces(roots: &[C64], sums: &[f64], scale: f64) -> bool {
    let rho = roots.iter().fold(scale, |m, z| m.max(z.norm()));
    let mut pw: Vec<C64> = roots.to_vec();
    for (k, want) in sums.iter().enumerate() {
        let got: C64 = pw.iter().sum();
        let tol = 1e-10 * roots.len() as f64 * (k + 1) as f64 * rho.powi(k as i32 + 1);
        if (got.re - want).abs() > tol || got.im.abs() > tol {
            return false;
        }
        for (p, z) in pw.iter_mut().zip(roots) {
            *p *= z;
        }
    }
    true
}

/// Groups roots closer than `radius` and refines each group's mean with
/// Newton's method for a root of that multiplicity, which converges
/// quadratically where Aberth iteration on a cluster is only linear.
/// `None` when some group fails to converge, e.g. distinct close roots.
fn cluster_newton(a: &[Vec<f64>], roots: &[C64], radius: f64, scale: f64) -> Option<Vec<C64>> {
    let n = roots.len();
    let mut group: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..i {
            if (roots[i] - roots[j]).norm() < radius {
                let (gi, gj) = (group[i], group[j]);
                for g in group.iter_mut() {
                    if *g == gi {
                        *g = gj;
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    for id in 0..n {
        let members: Vec<C64> = (0..n)
            .filter(|&i| group[i] == id)
            .map(|i| roots[i])
            .collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let mut z = members.iter().sum::<C64>() / m;
        let mut converged = false;
        let mut best = f64::INFINITY;
        for _ in 0..50 {
            let step = resolvent_ratio(a, z) * m;
            if !step.is_finite() {
                return None;
            }
            z -= step;
            let size = step.norm();
            if size <= 4.0 * f64::EPSILON * scale {
                converged = true;
                break;
            }
            if size >= best {
                converged = best <= 1e-10 * scale;
                break;
            }
            best = size;
        }
        if !converged || (z - members[0]).norm() > radius {
            return None;
        }
        out.extend(std::iter::repeat(z).take(members.len()));
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParabolicityClass {
    StrictlyParabolic,
    WeaklyParabolic,
    NotParabolic,
}

impl ParabolicityClass {
    pub fn label(&self) -> &'static str {
        match self {
            ParabolicityClass::StrictlyParabolic => "strictly-parabolic",
            ParabolicityClass::WeaklyParabolic => "weakly-parabolic",
            ParabolicityClass::NotParabolic => "not-parabolic",
        }
    }

    pub fn from_min_eig(min: f64, scale: f64) -> Self {
        let tol = 1e-9 * scale.max(1.0);
        if min > tol {
            ParabolicityClass::StrictlyParabolic
        } else if min >= -tol {
            ParabolicityClass::WeaklyParabolic
        } else {
            ParabolicityClass::NotParabolic
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicityReport {
    /// Smallest real eigenvalue of `sign·σDX`.
    pub min_eig_x: f64,
    /// Smallest real eigenvalue of `sign·σDX + σDY`.
    pub min_eig_combined: f64,
    pub class_x: ParabolicityClass,
    pub class_combined: ParabolicityClass,
    pub nodes_sampled: usize,
}

/// The 26 nonzero covectors with entries in `{-1, 0, 1}`.
pub fn cube_directions() -> Vec<Vec3> {
    let mut dirs = Vec::with_capacity(26);
    for a in -1..=1 {
        for b in -1..=1 {
            for c in -1..=1 {
                if (a, b, c) != (0, 0, 0) {
                    dirs.push([a as f64, b as f64, c as f64]);
                }
            }
        }
    }
    dirs
}

/// Symbol spectra of the flow operator over sampled nodes and unit covectors.
///
/// Nodes are taken with a fixed stride so at most `max_nodes` are visited;
/// every covector is normalised to unit length in `g`. Needs filled ghosts.
pub fn parabolicity_report(
    g: &MetricField,
    sign: f64,
    max_nodes: usize,
) -> Result<ParabolicityReport> {
    if !g.ghosts_filled() {
        return Err(XcfError::GhostsUnfilled);
    }
    let c = g.chart;
    let nodes: Vec<_> = c.nodes().collect();
    let stride = nodes.len().div_ceil(max_nodes.max(1)).max(1);
    let sampled: Vec<_> = nodes.iter().step_by(stride).copied().collect();
    let dirs = cube_directions();
    let per_node: Vec<Result<(f64, f64, f64)>> = sampled
        .par_iter()
        .map(|&(i, j, k)| {
            let pc = point_curvature(&metric_jet(g, i, j, k));
            let mut min_x = f64::INFINITY;
            let mut min_c = f64::INFINITY;
            let mut scale = 0.0_f64;
            for d in &dirs {
                let len = sym_quad(&pc.chr.ginv, d).sqrt();
                let zeta = d.map(|v| v / len);
                let probe = SymbolProbe::new(pc.einstein_hi, pc.chr.ginv, zeta)?;
                let x = sigma_dx(&probe).scaled(sign);
                let comb = x.add(&sigma_dy(&probe));
                scale = scale.max(x.m.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs())));
                min_x = min_x.min(spectrum(&x)?[0].re);
                min_c = min_c.min(spectrum(&comb)?[0].re);
            }
            Ok((min_x, min_c, scale))
        })
        .collect();
    let mut min_x = f64::INFINITY;
    let mut min_c = f64::INFINITY;
    let mut scale = 0.0_f64;
    for r in per_node {
        let (a, b, s) = r?;
        min_x = min_x.min(a);
        min_c = min_c.min(b);
        scale = scale.max(s);
    }
    Ok(ParabolicityReport {
        min_eig_x: min_x,
        min_eig_combined: min_c,
        class_x: ParabolicityClass::from_min_eig(min_x, scale),
        class_combined: ParabolicityClass::from_min_eig(min_c, scale),
        nodes_sampled: sampled.len(),
    })
}
