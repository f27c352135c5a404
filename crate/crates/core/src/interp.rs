//! Tricubic Lagrange interpolation of node data at fractional grid
//! positions. Lateral axes wrap; on a slab the `x³` stencil is shifted to
//! stay inside the node range, so evaluation near a face extrapolates from
//! interior nodes rather than reading ghosts.

use crate::chart::ChartSpec;

/// Weights of the four-node Lagrange basis on nodes `0, 1, 2, 3` at `s`.
#[inline]
pub fn lagrange4(s: f64) -> [f64; 4] {
    let (a, b, c, d) = (s, s - 1.0, s - 2.0, s - 3.0);
    [
        -(b * c * d) / 6.0,
        (a * c * d) / 2.0,
        -(a * b * d) / 2.0,
        (a * b * c) / 6.0,
    ]
}

/// Derivatives of [`lagrange4`] with respect to `s`.
#[inline]
pub fn lagrange4_deriv(s: f64) -> [f64; 4] {
    let (a, b, c, d) = (s, s - 1.0, s - 2.0, s - 3.0);
    [
        -(c * d + b * d + b * c) / 6.0,
        (c * d + a * d + a * c) / 2.0,
        -(b * d + a * d + a * b) / 2.0,
        (b * c + a * c + a * b) / 6.0,
    ]
}

#[derive(Debug, Clone, Copy)]
struct AxisStencil {
    nodes: [usize; 4],
    w: [f64; 4],
    dw: [f64; 4],
}

fn periodic_stencil(pos: f64, n: usize) -> AxisStencil {
    let base = pos.floor();
    let s = pos - base + 1.0;
    let b = base as isize - 1;
    let nn = n as isize;
    AxisStencil {
        nodes: std::array::from_fn(|m| (b + m as isize).rem_euclid(nn) as usize),
        w: lagrange4(s),
        dw: lagrange4_deriv(s),
    }
}

fn bounded_stencil(pos: f64, n: usize) -> AxisStencil {
    let top = n as isize - 4;
    let b = (pos.floor() as isize - 1).clamp(0, top.max(0));
    let s = pos - b as f64;
    AxisStencil {
        nodes: std::array::from_fn(|m| (b + m as isize).min(n as isize - 1) as usize),
        w: lagrange4(s),
        dw: lagrange4_deriv(s),
    }
}

fn stencils(chart: &ChartSpec, pos: [f64; 3]) -> [AxisStencil; 3] {
    [
        periodic_stencil(pos[0], chart.nx),
        periodic_stencil(pos[1], chart.ny),
        if chart.is_slab() {
            bounded_stencil(pos[2], chart.nz)
        } else {
            periodic_stencil(pos[2], chart.nz)
        },
    ]
}

/// Value at the fractional index position `pos = (i, j, k)`. `get` returns
/// the data at an in-range node.
pub fn interpolate<const N: usize>(
    chart: &ChartSpec,
    get: impl Fn(usize, usize, usize) -> [f64; N],
    pos: [f64; 3],
) -> [f64; N] {
    let [sx, sy, sz] = stencils(chart, pos);
    let mut out = [0.0; N];
    for c in 0..4 {
        if sz.w[c] == 0.0 {
            continue;
        }
        for b in 0..4 {
            let wyz = sy.w[b] * sz.w[c];
            if wyz == 0.0 {
                continue;
            }
            for a in 0..4 {
                let w = sx.w[a] * wyz;
                if w == 0.0 {
                    continue;
                }
                let v = get(sx.nodes[a], sy.nodes[b], sz.nodes[c]);
                for q in 0..N {
                    out[q] += w * v[q];
                }
            }
        }
    }
    out
}

/// Value and gradient with respect to the index coordinates.
pub fn interpolate_with_gradient<const N: usize>(
    chart: &ChartSpec,
    get: impl Fn(usize, usize, usize) -> [f64; N],
    pos: [f64; 3],
) -> ([f64; N], [[f64; N]; 3]) {
    let [sx, sy, sz] = stencils(chart, pos);
    let mut val = [0.0; N];
    let mut grad = [[0.0; N]; 3];
    for c in 0..4 {
        for b in 0..4 {
            for a in 0..4 {
                let v = get(sx.nodes[a], sy.nodes[b], sz.nodes[c]);
                let w = [
                    sx.w[a] * sy.w[b] * sz.w[c],
                    sx.dw[a] * sy.w[b] * sz.w[c],
                    sx.w[a] * sy.dw[b] * sz.w[c],
                    sx.w[a] * sy.w[b] * sz.dw[c],
                ];
                for q in 0..N {
                    val[q] += w[0] * v[q];
                    for d in 0..3 {
                        grad[d][q] += w[d + 1] * v[q];
                    }
                }
            }
        }
    }
    (val, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::make_chart;
    use proptest::prelude::*;

    fn slab() -> ChartSpec {
        make_chart(ChartSpec::slab(8, 6, 9, 1.0, 1.0, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn weights_partition_unity_and_hit_nodes() {
        for m in 0..4 {
            let w = lagrange4(m as f64);
            for (q, wq) in w.iter().enumerate() {
                assert_eq!(*wq, if q == m { 1.0 } else { 0.0 });
            }
        }
        for s in [0.3, 1.7, 2.5, -0.2] {
            let w = lagrange4(s);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(lagrange4_deriv(s).iter().sum::<f64>().abs() < 1e-13);
        }
    }

    #[test]
    fn node_positions_are_reproduced_exactly() {
        let c = slab();
        let f = |i: usize, j: usize, k: usize| [(i * 31 + j * 7 + k) as f64 * 0.37 + 0.1];
        for (i, j, k) in c.nodes() {
            let v = interpolate(&c, f, [i as f64, j as f64, k as f64]);
            assert_eq!(v, f(i, j, k));
        }
    }

    #[test]
    fn cubic_in_z_and_trig_laterally() {
        let c = slab();
        let h = c.spacing();
        let f = |x: [f64; 3]| (x[2] - 0.3).powi(3) + 2.0 * x[2];
        let get = |i: usize, j: usize, k: usize| [f(c.coord(i as isize, j as isize, k as isize))];
        for pos in [
            [0.5, 1.0, 0.25],
            [3.2, 4.9, 7.8],
            [1.0, 2.0, -0.5],
            [7.5, 5.5, 8.3],
        ] {
            let want = f([0.0, 0.0, pos[2] * h[2]]);
            let (v, g) = interpolate_with_gradient(&c, get, pos);
            assert!((v[0] - want).abs() < 1e-12, "{pos:?}");
            let dz = (3.0 * (pos[2] * h[2] - 0.3).powi(2) + 2.0) * h[2];
            assert!((g[2][0] - dz).abs() < 1e-12);
            assert!(g[0][0].abs() < 1e-12 && g[1][0].abs() < 1e-12);
        }
    }

    #[test]
    fn lateral_wrap_is_consistent() {
        let c = slab();
        let get = |i: usize, j: usize, k: usize| [(i as f64).sin() + j as f64 * 0.1 + k as f64];
        let a = interpolate(&c, get, [7.6, 2.2, 3.0]);
        let b = interpolate(&c, get, [-0.4, 8.2, 3.0]);
        assert!((a[0] - b[0]).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn smooth_field_error_is_small(x in 0.0..8.0f64, y in 0.0..6.0f64, z in 0.0..8.0f64) {
            let c = make_chart(ChartSpec::slab(32, 32, 33, 1.0, 1.0, 0.0, 1.0)).unwrap();
            let tau = std::f64::consts::TAU;
            let f = |p: [f64; 3]| (tau * p[0]).cos() * (tau * p[1]).sin() + p[2].exp();
            let get = |i: usize, j: usize, k: usize| [f(c.coord(i as isize, j as isize, k as isize))];
            let pos = [x * 4.0, y * 5.0, z * 4.0];
            let h = c.spacing();
            let v = interpolate(&c, get, pos);
            let want = f([pos[0] * h[0], pos[1] * h[1], c.z_min + pos[2] * h[2]]);
            prop_assert!((v[0] - want).abs() < 5e-4);
        }
    }
}
