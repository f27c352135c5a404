//! Fixed-size 3×3 linear algebra used pointwise at every grid node.
//!
//! Symmetric rank-2 tensors are packed as `[f64; 6]` in the order
//! `(11, 12, 13, 22, 23, 33)`, which is also the on-disk order of metric
//! snapshots.

pub type Sym3 = [f64; 6];
pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

/// Packed slot of the `(i, j)` entry of a symmetric 3×3 tensor.
pub const SYM: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

/// `(i, j)` index pair of each packed slot.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Multiplicity of each packed slot in a full double sum over `i, j`.
pub const SYM_WEIGHT: [f64; 6] = [1.0, 2.0, 2.0, 1.0, 2.0, 1.0];

pub const IDENTITY: Sym3 = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0];

#[inline]
pub fn sym_get(s: &Sym3, i: usize, j: usize) -> f64 {
    s[SYM[i][j]]
}

#[inline]
pub fn sym_to_mat(s: &Sym3) -> Mat3 {
    [[s[0], s[1], s[2]], [s[1], s[3], s[4]], [s[2], s[4], s[5]]]
}

/// Packs the symmetric part of `m`.
#[inline]
pub fn mat_to_sym(m: &Mat3) -> Sym3 {
    [
        m[0][0],
        0.5 * (m[0][1] + m[1][0]),
        0.5 * (m[0][2] + m[2][0]),
        m[1][1],
        0.5 * (m[1][2] + m[2][1]),
        m[2][2],
    ]
}

#[inline]
pub fn sym_det(s: &Sym3) -> f64 {
    s[0] * (s[3] * s[5] - s[4] * s[4]) - s[1] * (s[1] * s[5] - s[4] * s[2])
        + s[2] * (s[1] * s[4] - s[3] * s[2])
}

/// Adjugate (transposed cofactor matrix) of a symmetric matrix; symmetric by construction.
#[inline]
pub fn sym_adj(s: &Sym3) -> Sym3 {
    [
        s[3] * s[5] - s[4] * s[4],
        s[2] * s[4] - s[1] * s[5],
        s[1] * s[4] - s[2] * s[3],
        s[0] * s[5] - s[2] * s[2],
        s[1] * s[2] - s[0] * s[4],
        s[0] * s[3] - s[1] * s[1],
    ]
}

/// Inverse and determinant. Returns `None` for a singular matrix.
#[inline]
pub fn sym_inv(s: &Sym3) -> Option<(Sym3, f64)> {
    let adj = sym_adj(s);
    let det = s[0] * adj[0] + s[1] * adj[1] + s[2] * adj[2];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let r = 1.0 / det;
    Some((adj.map(|a| a * r), det))
}

/// `a · b · a` for symmetric `a`, `b` (index raising/lowering of a 2-tensor).
#[inline]
pub fn sym_sandwich(a: &Sym3, b: &Sym3) -> Sym3 {
    let am = sym_to_mat(a);
    let bm = sym_to_mat(b);
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = am[i][0] * bm[0][j] + am[i][1] * bm[1][j] + am[i][2] * bm[2][j];
        }
    }
    let mut out = [0.0; 6];
    for (slot, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        out[slot] = t[i][0] * am[0][j] + t[i][1] * am[1][j] + t[i][2] * am[2][j];
    }
    out
}

/// Full contraction `a^{ij} b_{ij}`.
#[inline]
pub fn sym_contract(a: &Sym3, b: &Sym3) -> f64 {
    let mut s = 0.0;
    for k in 0..6 {
        s += SYM_WEIGHT[k] * a[k] * b[k];
    }
    s
}

#[inline]
pub fn sym_quad(s: &Sym3, v: &Vec3) -> f64 {
    s[0] * v[0] * v[0]
        + s[3] * v[1] * v[1]
        + s[5] * v[2] * v[2]
        + 2.0 * (s[1] * v[0] * v[1] + s[2] * v[0] * v[2] + s[4] * v[1] * v[2])
}

#[inline]
pub fn sym_mul_vec(s: &Sym3, v: &Vec3) -> Vec3 {
    [
        s[0] * v[0] + s[1] * v[1] + s[2] * v[2],
        s[1] * v[0] + s[3] * v[1] + s[4] * v[2],
        s[2] * v[0] + s[4] * v[1] + s[5] * v[2],
    ]
}

pub fn sym_max_abs(s: &Sym3) -> f64 {
    s.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Leading-minor test for positive definiteness.
#[inline]
pub fn is_positive_definite(s: &Sym3) -> bool {
    let m1 = s[0];
    let m2 = s[0] * s[3] - s[1] * s[1];
    let m3 = sym_det(s);
    m1 > 0.0 && m2 > 0.0 && m3 > 0.0 && m3.is_finite()
}

/// Eigenvalues of a symmetric 3×3 matrix in ascending order (trigonometric closed form).
pub fn sym_eigenvalues(s: &Sym3) -> Vec3 {
    let p1 = s[1] * s[1] + s[2] * s[2] + s[4] * s[4];
    let q = (s[0] + s[3] + s[5]) / 3.0;
    if p1 == 0.0 {
        let mut e = [s[0], s[3], s[5]];
        e.sort_by(|a, b| a.total_cmp(b));
        return e;
    }
    let p2 = (s[0] - q).powi(2) + (s[3] - q).powi(2) + (s[5] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = [
        (s[0] - q) / p,
        s[1] / p,
        s[2] / p,
        (s[3] - q) / p,
        s[4] / p,
        (s[5] - q) / p,
    ];
    let r = (sym_det(&b) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e_max = q + 2.0 * p * phi.cos();
    let e_min = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e_mid = 3.0 * q - e_max - e_min;
    [e_min, e_mid, e_max]
}

/// Eigenvalues of the mixed tensor `g^{ik} a_{kj}` for SPD `g`, ascending.
///
/// Solved as the symmetric problem `L⁻¹ a L⁻ᵀ` with `g = L Lᵀ`.
pub fn relative_eigenvalues(a: &Sym3, g: &Sym3) -> Option<Vec3> {
    let l = cholesky(g)?;
    let am = sym_to_mat(a);
    // y = L⁻¹ A L⁻ᵀ via forward substitution on columns, then rows.
    let mut t = [[0.0; 3]; 3];
    for c in 0..3 {
        let col = [am[0][c], am[1][c], am[2][c]];
        let y = forward_sub(&l, &col);
        for r in 0..3 {
            t[r][c] = y[r];
        }
    }
    let mut m = [[0.0; 3]; 3];
    for r in 0..3 {
        let y = forward_sub(&l, &t[r]);
        m[r] = y;
    }
    Some(sym_eigenvalues(&mat_to_sym(&m)))
}

fn cholesky(g: &Sym3) -> Option<Mat3> {
    let a = sym_to_mat(g);
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn forward_sub(l: &Mat3, b: &Vec3) -> Vec3 {
    let y0 = b[0] / l[0][0];
    let y1 = (b[1] - l[1][0] * y0) / l[1][1];
    let y2 = (b[2] - l[2][0] * y0 - l[2][1] * y1) / l[2][2];
    [y0, y1, y2]
}

pub fn mat_inv(m: &Mat3) -> Option<Mat3> {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let r = 1.0 / det;
    Some([
        [
            c00 * r,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * r,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * r,
        ],
        [
            c01 * r,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * r,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * r,
        ],
        [
            c02 * r,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * r,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * r,
        ],
    ])
}

/// `Aᵀ S A` for symmetric `S` and general `A`.
pub fn congruence(s: &Sym3, a: &Mat3) -> Sym3 {
    let sm = sym_to_mat(s);
    let mut out = [0.0; 6];
    for (slot, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let mut acc = 0.0;
        for k in 0..3 {
            for l in 0..3 {
                acc += a[k][i] * sm[k][l] * a[l][j];
            }
        }
        out[slot] = acc;
    }
    out
}

/// Levi-Civita permutation symbol.
#[inline]
pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// The six non-zero entries of the permutation symbol as `(i, j, k, sign)`.
pub const EPSILON_TERMS: [(usize, usize, usize, f64); 6] = [
    (0, 1, 2, 1.0),
    (1, 2, 0, 1.0),
    (2, 0, 1, 1.0),
    (0, 2, 1, -1.0),
    (2, 1, 0, -1.0),
    (1, 0, 2, -1.0),
];
