use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xcf_core::chart::{decode_snapshot, encode_snapshot, make_chart, ChartSpec, Jet, MetricField};
use xcf_core::curvature::{
    check_mu_identity, christoffel, compute_bundle, cross_formula_agreement,
    riemann_identity_residuals, sectional_curvature, sectional_report, SectionalClass,
};
use xcf_core::deturck::gauge_vector;
use xcf_core::oracles::{dense_eig_oracle, random_smooth_metric, SpaceFormKind};
use xcf_core::symbol::{sigma_dx, sigma_dy, spectrum, SymbolProbe};
use xcf_core::tensor::{sym_quad, Mat3, Sym3, Vec3, IDENTITY};

fn sym_strategy(lo: f64, hi: f64) -> impl Strategy<Value = Sym3> {
    prop::array::uniform6(lo..hi)
}

fn spd_strategy() -> impl Strategy<Value = Sym3> {
    sym_strategy(-0.3, 0.3).prop_map(|mut g| {
        g[0] += 1.2;
        g[3] += 1.2;
        g[5] += 1.2;
        g
    })
}

fn covector_strategy() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-1.0..1.0f64).prop_filter("nonzero covector", |z| {
        z.iter().map(|v| v * v).sum::<f64>() > 1e-2
    })
}

/// Orthogonal matrix from three Euler angles.
fn rotation(a: f64, b: f64, c: f64) -> Mat3 {
    let rz = |t: f64| {
        [
            [t.cos(), -t.sin(), 0.0],
            [t.sin(), t.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ]
    };
    let rx = |t: f64| {
        [
            [1.0, 0.0, 0.0],
            [0.0, t.cos(), -t.sin()],
            [0.0, t.sin(), t.cos()],
        ]
    };
    matmul(&matmul(&rz(a), &rx(b)), &rz(c))
}

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

fn sym(m: &Mat3) -> Sym3 {
    [m[0][0], m[0][1], m[0][2], m[1][1], m[1][2], m[2][2]]
}

fn full(s: &Sym3) -> Mat3 {
    [[s[0], s[1], s[2]], [s[1], s[3], s[4]], [s[2], s[4], s[5]]]
}

/// `A s Aᵀ` for a symmetric `s`.
fn conjugate(a: &Mat3, s: &Sym3) -> Sym3 {
    let at: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]));
    sym(&matmul(&matmul(a, &full(s)), &at))
}

fn sorted_re(ev: &[nalgebra::Complex<f64>; 6]) -> [f64; 6] {
    let mut r = ev.map(|z| z.re);
    r.sort_by(f64::total_cmp);
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapshot_round_trip_is_identity(
        dims in (4usize..7, 4usize..7, 6usize..8),
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 6 * 6 * 6 * 7),
        extent in (0.1..10.0f64, 0.1..10.0f64, -5.0..5.0f64, 0.1..5.0f64),
    ) {
        let (nx, ny, nz) = dims;
        let (lx, ly, z0, lz) = extent;
        let c = make_chart(ChartSpec::slab(nx, ny, nz, lx, ly, z0, z0 + lz)).unwrap();
        let nodes: Vec<Sym3> = (0..c.node_count()).map(|n| std::array::from_fn(|s| values[6 * n + s])).collect();
        let g = MetricField::from_nodes(c, &nodes);
        let bytes = encode_snapshot(&g, *b"XCF1");
        let (back, magic) = decode_snapshot(&bytes, &[*b"XCF1"]).unwrap();
        prop_assert_eq!(magic, *b"XCF1");
        prop_assert_eq!(back.chart, c);
        let same = back.interior().iter().zip(g.interior().iter()).all(|(a, b)| {
            a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        });
        prop_assert!(same);
    }

    #[test]
    fn symbol_homogeneity_of_degree_two(e in sym_strategy(-1.0, 1.0), g in spd_strategy(), z in covector_strategy(), s in 0.1..5.0f64) {
        let p = SymbolProbe::new(e, g, z).unwrap();
        let ps = SymbolProbe::new(e, g, z.map(|v| s * v)).unwrap();
        for (a, b) in [(sigma_dx(&p), sigma_dx(&ps)), (sigma_dy(&p), sigma_dy(&ps))] {
            for r in 0..6 {
                for c in 0..6 {
                    prop_assert!((b.m[r][c] - s * s * a.m[r][c]).abs() <= 1e-12 * (1.0 + (s * s * a.m[r][c]).abs()));
                }
            }
        }
    }

    #[test]
    fn curvature_symbol_spectrum_law(e in sym_strategy(-1.0, 1.0), g in spd_strategy(), z in covector_strategy()) {
        let p = SymbolProbe::new(e, g, z).unwrap();
        let m = sigma_dx(&p);
        let q = sym_quad(&e, &z);
        let ours = spectrum(&m).unwrap();
        let dense = dense_eig_oracle(&m.m).unwrap();
        let mut want = [0.0, 0.0, 0.0, q, q, q];
        want.sort_by(f64::total_cmp);
        for (k, w) in sorted_re(&ours).iter().zip(want) {
            prop_assert!((k - w).abs() <= 1e-9, "{:?} vs {}", ours, q);
        }
        for (k, w) in sorted_re(&dense).iter().zip(want) {
            prop_assert!((k - w).abs() <= 1e-9, "{:?} vs {}", dense, q);
        }
        prop_assert!(ours.iter().all(|z| z.im.abs() <= 1e-9));
    }

    #[test]
    fn semidefinite_curvature_gives_nonnegative_spectrum(a in sym_strategy(-1.0, 1.0), z in covector_strategy()) {
        // E = A Aᵀ.
        let am = full(&a);
        let e = sym(&matmul(&am, &am));
        let p = SymbolProbe::new(e, IDENTITY, z).unwrap();
        let ev = spectrum(&sigma_dx(&p)).unwrap();
        prop_assert!(ev.iter().all(|z| z.re >= -1e-9));
    }

    #[test]
    fn curvature_symbol_spectrum_is_frame_invariant(
        e in sym_strategy(-1.0, 1.0),
        g in spd_strategy(),
        z in covector_strategy(),
        angles in (0.0..6.3f64, 0.0..3.2f64, 0.0..6.3f64),
    ) {
        // Contravariant tensors transform by Q · Qᵀ, covectors by Q.
        let q = rotation(angles.0, angles.1, angles.2);
        let zr: Vec3 = std::array::from_fn(|i| (0..3).map(|k| q[i][k] * z[k]).sum());
        let p = SymbolProbe::new(e, g, z).unwrap();
        let pr = SymbolProbe::new(conjugate(&q, &e), conjugate(&q, &g), zr).unwrap();
        for (a, b) in [(sigma_dx(&p), sigma_dx(&pr)), (sigma_dy(&p), sigma_dy(&pr))] {
            let (sa, sb) = (sorted_re(&spectrum(&a).unwrap()), sorted_re(&spectrum(&b).unwrap()));
            for (x, y) in sa.iter().zip(sb) {
                prop_assert!((x - y).abs() <= 1e-9, "{:?} vs {:?}", sa, sb);
            }
        }
    }

    #[test]
    fn face_gauge_component_vanishes_iff_normal_condition(
        lateral in (0.4..2.0f64, -0.3..0.3f64, 0.4..2.0f64),
        g33 in 0.3..3.0f64,
        lambda in -2.0..2.0f64,
        free in prop::array::uniform16(-1.0..1.0f64),
        offset in prop_oneof![Just(0.0), 1e-8..1e-6f64, -1e-6..-1e-8f64, 1e-6..1.0f64, -1.0..-1e-6f64],
        top in any::<bool>(),
    ) {
        // g_3α = 0 on the face; ∂₃g_αβ = −2λ s √g₃₃ g_αβ with s = ±1 by face orientation.
        let (g11, g12, g22) = lateral;
        prop_assume!(g11 * g22 - g12 * g12 > 0.05);
        let s = if top { -1.0 } else { 1.0 };
        let g: Sym3 = [g11, g12, 0.0, g22, 0.0, g33];
        let mut dg = [[0.0; 6]; 3];
        for a in 0..2 {
            // Lateral derivatives: g_3α stays zero along the face.
            dg[a] = [free[6 * a], free[6 * a + 1], 0.0, free[6 * a + 2], 0.0, free[6 * a + 3]];
        }
        let target = -4.0 * lambda * s * g33.powf(1.5);
        let normal = -2.0 * lambda * s * g33.sqrt();
        dg[2] = [normal * g11, normal * g12, free[12], normal * g22, free[13], target + offset];
        let jet = Jet { g, dg, ddg: [[0.0; 6]; 6] };
        let w = gauge_vector(&christoffel(&jet), &[[0.0; 6]; 3]);
        let w3_zero = w[2].abs() <= 1e-10;
        let cond = (dg[2][5] - target).abs() <= 1e-10;
        prop_assert_eq!(w3_zero, cond, "W³ = {:e}, offset {:e}", w[2], offset);
        // Closed form: W³ = (∂₃g₃₃ − target) / (2 g₃₃²).
        prop_assert!((w[2] - offset / (2.0 * g33 * g33)).abs() <= 1e-12 * (1.0 + target.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn curvature_identities_on_random_metrics(seed in any::<u64>(), amp in 0.05..0.4f64) {
        let c = make_chart(ChartSpec::slab(8, 8, 8, 1.0, 1.0, 0.0, 1.0)).unwrap();
        let b = compute_bundle(&random_smooth_metric(c, seed, amp)).unwrap();
        prop_assert!(riemann_identity_residuals(&b).max() <= 1e-9);
        prop_assert!(check_mu_identity(&b) <= 1e-8);
        prop_assert!(cross_formula_agreement(&b).unwrap() <= 1e-9);
    }

    #[test]
    fn sampled_sectional_signs_agree_with_report(seed in any::<u64>(), amp in 0.0..0.6f64, sphere in any::<bool>()) {
        let kind = if sphere { SpaceFormKind::SphereHopf } else { SpaceFormKind::HyperbolicHalfspace };
        let chart = kind.default_chart(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(Vec3, f64)> = (0..3)
            .map(|_| {
                let k = [rng.gen_range(-2..=2) as f64, rng.gen_range(-2..=2) as f64, rng.gen_range(-2.0..2.0)];
                (k.map(|v| v * std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        // Conformal perturbation of a space form.
        let g = MetricField::from_fn(chart, |x| {
            let f: f64 = modes
                .iter()
                .map(|(k, ph)| (k[0] * x[0] / chart.lx + k[1] * x[1] / chart.ly + k[2] * x[2] + ph).sin())
                .sum();
            kind.base(x).map(|v| v * (1.0 + amp * f / 3.0))
        });
        let b = compute_bundle(&g).unwrap();
        let report = sectional_report(&b);
        let mut any_nonneg = false;
        let mut any_nonpos = false;
        for node in &b.nodes {
            for _ in 0..100 {
                let x: Vec3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let y: Vec3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let k = sectional_curvature(node, &x, &y);
                any_nonneg |= k >= 0.0;
                any_nonpos |= k <= 0.0;
            }
        }
        match report.classification {
            SectionalClass::AllNegative => prop_assert!(!any_nonneg),
            SectionalClass::AllPositive => prop_assert!(!any_nonpos),
            SectionalClass::Mixed => {}
        }
        if any_nonneg {
            prop_assert!(report.classification != SectionalClass::AllNegative);
        }
        if any_nonpos {
            prop_assert!(report.classification != SectionalClass::AllPositive);
        }
    }
}

#[test]
fn symbol_matrices_reproduce_index_formulas() {
    use xcf_core::symbol::{sigma_dx_formula, sigma_dy_formula, unpack, BASIS};
    use xcf_core::tensor::sym_to_mat;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..1000 {
        let e: Sym3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let mut g: Sym3 = std::array::from_fn(|_| rng.gen_range(-0.3..0.3));
        g[0] += 1.2;
        g[3] += 1.2;
        g[5] += 1.2;
        let z: Vec3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let p = SymbolProbe::new(e, g, z).unwrap();
        let v: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let vm = sym_to_mat(&unpack(&v));
        for (a, b) in [
            (sigma_dx(&p).apply(&v), sigma_dx_formula(&p, &vm)),
            (sigma_dy(&p).apply(&v), sigma_dy_formula(&p, &vm)),
        ] {
            for (r, &(i, j)) in BASIS.iter().enumerate() {
                assert!((a[r] - b[i][j]).abs() <= 1e-12);
            }
        }
    }
}
