//! Subcommand pipelines. Each returns `Ok(true)` when its checks pass.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xcf_core::chart::{make_chart, write_snapshot, ChartSpec, MetricField};
use xcf_core::curvature::{
    check_mu_identity, compute_bundle, cross_formula_agreement, riemann_identity_residuals,
};
use xcf_core::evolve::{run, DiagnosticsRecord, FlowState};
use xcf_core::oracles::{
    dense_eig_oracle, fourier_symbol_probe, random_smooth_metric, unit_covector_x_pattern,
    unit_covector_y_pattern, SpaceFormKind,
};
use xcf_core::pullback::{run_with_pullback, write_pullback_snapshot};
use xcf_core::symbol::{sigma_combined, sigma_dx, sigma_dy, spectrum, SymbolMatrix, SymbolProbe};
use xcf_core::tensor::{sym_max_abs, Sym3, IDENTITY};

use crate::config::{check_sign, Initial, RunConfig};

pub const IDENTITY_TOL: f64 = 1e-9;
pub const MU_TOL: f64 = 1e-8;

/// A prepared run: config, its directory, and the initial state.
pub struct Prepared {
    pub config: RunConfig,
    pub dir: PathBuf,
    pub state: FlowState,
}

pub fn prepare(config: RunConfig, out: &Path, force_sign: bool) -> Result<Prepared> {
    let g0 = config.initial_metric()?;
    check_sign(config.sign, &g0, force_sign || config.force_sign)?;
    let state = FlowState::new(
        g0,
        config.sign,
        config.background,
        config.boundary_spec()?,
        config.cfl,
    )?;
    let dir = config.run_dir(out);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.txt"), config.serialize())?;
    Ok(Prepared { config, dir, state })
}

/// Runs to `t_end`, writing diagnostics and the initial and final snapshots.
pub fn run_config(p: &mut Prepared) -> Result<Vec<DiagnosticsRecord>> {
    write_snapshot(&p.state.g, &p.dir.join("initial.xcf"))?;
    let mut w = BufWriter::new(File::create(p.dir.join(&p.config.diagnostics))?);
    writeln!(w, "{}", DiagnosticsRecord::HEADER)?;
    let records = run(&mut p.state, p.config.t_end, p.config.cadence, |r| {
        writeln!(w, "{r}").map_err(xcf_core::XcfError::from)
    })?;
    w.flush()?;
    write_snapshot(&p.state.g, &p.dir.join(&p.config.snapshot))?;
    Ok(records)
}

pub fn cmd_run(mut p: Prepared) -> Result<bool> {
    let records = run_config(&mut p)?;
    let last = records.last().expect("run emits at least one record");
    println!("run directory: {}", p.dir.display());
    println!(
        "steps: {}  records: {}  t: {:.6e}",
        p.state.steps,
        records.len(),
        last.t
    );
    println!("{}", DiagnosticsRecord::HEADER);
    println!("{last}");
    Ok(true)
}

/// Max relative deviation of `g` from `exact` over chart nodes.
pub fn relative_error(g: &MetricField, exact: &MetricField) -> f64 {
    let mut worst = 0.0_f64;
    for (i, j, k) in g.chart.nodes() {
        let (a, b) = (g.at(i, j, k as isize), exact.at(i, j, k as isize));
        let s = sym_max_abs(b);
        for c in 0..6 {
            worst = worst.max((a[c] - b[c]).abs() / s);
        }
    }
    worst
}

pub fn cmd_oracle_spaceform(mut p: Prepared, max_error: f64) -> Result<bool> {
    let kind = match p.config.initial {
        Initial::SpaceForm(k) => k,
        _ => bail!("oracle-spaceform needs a space-form initial preset"),
    };
    run_config(&mut p)?;
    let exact = kind.metric(p.state.g.chart, p.state.t)?;
    let err = relative_error(&p.state.g, &exact);
    let pass = err <= max_error;
    println!(
        "space form: {}  t: {:.6e}  steps: {}",
        kind.name(),
        p.state.t,
        p.state.steps
    );
    println!(
        "max relative error: {err:.6e}  (bound {max_error:.1e})  {}",
        verdict(pass)
    );
    Ok(pass)
}

pub fn cmd_pullback_check(mut p: Prepared, max_residual: f64) -> Result<bool> {
    let (t, steps) = (p.config.t_end, p.config.pullback_delta_steps);
    let o = run_with_pullback(&mut p.state, t, steps)?;
    write_pullback_snapshot(&o.gbar, &p.dir.join("pullback.xcfp"))?;
    let mut s = String::new();
    writeln!(
        s,
        "# t\tdelta\txcf_residual\tumbilic_res\toffdiag_res\tmax_displacement"
    )?;
    writeln!(
        s,
        "{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}",
        o.t,
        o.delta,
        o.xcf_residual,
        o.boundary.umbilic_res,
        o.boundary.offdiag_res,
        o.max_displacement
    )?;
    fs::write(p.dir.join("pullback.tsv"), &s)?;
    let pass = o.xcf_residual <= max_residual;
    println!("run directory: {}", p.dir.display());
    print!("{s}");
    println!(
        "xcf_residual {:.6e} (bound {max_residual:.1e})  {}",
        o.xcf_residual,
        verdict(pass)
    );
    Ok(pass)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn format_matrix(out: &mut String, title: &str, m: &[[f64; 6]; 6]) {
    let _ = writeln!(out, "{title}");
    for row in m {
        let cells: Vec<String> = row.iter().map(|v| format!("{:>10.6}", v + 0.0)).collect();
        let _ = writeln!(out, "  [{}]", cells.join(" "));
    }
}

fn format_spectrum(out: &mut String, m: &SymbolMatrix) -> Result<()> {
    let ev = spectrum(m)?;
    let cells: Vec<String> = ev.iter().map(|z| format!("{:.6}", z.re + 0.0)).collect();
    let _ = writeln!(out, "  spectrum: {}", cells.join(" "));
    Ok(())
}

/// Symbol matrices at `g = δ`, `ζ = e₁` for a seeded random symmetric `E`,
/// checked against the hand-written patterns and the dense oracle.
pub fn check_symbol_report(seed: u64) -> Result<(String, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Sym3 = std::array::from_fn(|_| (rng.gen_range(-1.0..1.0) * 1e3_f64).round() / 1e3);
    let probe = SymbolProbe::new(e, IDENTITY, [1.0, 0.0, 0.0])?;
    let x = sigma_dx(&probe);
    let y = sigma_dy(&probe);
    let comb = sigma_combined(&probe, 1.0);
    let mut out = String::new();
    let _ = writeln!(out, "basis: v11 v12 v13 v22 v33 v23");
    let _ = writeln!(out, "E^ij (11 12 13 22 23 33): {:?}", e);
    format_matrix(&mut out, "curvature part sigma DX", &x.m);
    format_spectrum(&mut out, &x)?;
    format_matrix(&mut out, "gauge part sigma DY", &y.m);
    format_spectrum(&mut out, &y)?;
    format_matrix(&mut out, "combined", &comb.m);
    format_spectrum(&mut out, &comb)?;

    let want_x = unit_covector_x_pattern(&e);
    let x_ok = (0..6).all(|r| (0..6).all(|c| (x.m[r][c] - want_x[r][c]).abs() <= 1e-14));
    let y_ok = y.m == unit_covector_y_pattern();
    let upper = (0..6).all(|r| (0..r).all(|c| comb.m[r][c] == 0.0));
    let diag_want = [1.0, 1.0, 1.0, e[0], e[0], e[0]];
    let diag_ok = (0..6).all(|d| comb.m[d][d] == diag_want[d]);
    let mut sorted = diag_want;
    sorted.sort_by(f64::total_cmp);
    let ours = spectrum(&comb)?;
    let dense = dense_eig_oracle(&comb.m)?;
    let spec_ok = ours.iter().zip(&dense).zip(sorted).all(|((a, b), w)| {
        (a.re - w).abs() <= 1e-10 && a.im.abs() <= 1e-10 && (b.re - w).abs() <= 1e-10
    });
    let checks = [
        ("curvature part matches pattern", x_ok),
        ("gauge part matches pattern", y_ok),
        ("combined is upper triangular", upper),
        ("combined diagonal is (1,1,1,E11,E11,E11)", diag_ok),
        ("combined spectrum equals diagonal", spec_ok),
    ];
    let mut pass = true;
    for (name, ok) in checks {
        let _ = writeln!(out, "{}: {name}", verdict(ok));
        pass &= ok;
    }
    Ok((out, pass))
}

pub fn cmd_check_symbol(seed: u64) -> Result<bool> {
    let (text, pass) = check_symbol_report(seed)?;
    print!("{text}");
    Ok(pass)
}

/// Initial data used by `verify-identities`.
pub fn identity_preset(name: &str, n: usize, seed: u64) -> Result<MetricField> {
    if name == "flat" {
        let c = make_chart(ChartSpec::slab(n, n, n, 1.0, 1.0, 0.0, 1.0))?;
        return Ok(MetricField::constant(c, IDENTITY));
    }
    if name == "random" {
        let c = make_chart(ChartSpec::slab(n, n, n, 1.0, 1.0, 0.0, 1.0))?;
        return Ok(random_smooth_metric(c, seed, 0.2));
    }
    let kind: SpaceFormKind = name.parse().map_err(anyhow::Error::msg)?;
    Ok(kind.metric(kind.default_chart(n), 0.0)?)
}

/// Identity residuals `(riemann, mu, cross agreement)` of a metric.
pub fn identity_residuals(g: &MetricField) -> Result<(f64, f64, f64)> {
    let b = compute_bundle(g)?;
    Ok((
        riemann_identity_residuals(&b).max(),
        check_mu_identity(&b),
        cross_formula_agreement(&b)?,
    ))
}

pub fn cmd_verify_identities(presets: &[String], sizes: &[usize], seed: u64) -> Result<bool> {
    let mut pass = true;
    println!("# preset\tn\triemann\tmu\tcross\tverdict");
    for name in presets {
        for &n in sizes {
            let g = identity_preset(name, n, seed)?;
            let (r, m, c) = identity_residuals(&g)?;
            let ok = r <= IDENTITY_TOL && m <= MU_TOL && c <= IDENTITY_TOL;
            pass &= ok;
            println!("{name}\t{n}\t{r:.3e}\t{m:.3e}\t{c:.3e}\t{}", verdict(ok));
        }
    }
    Ok(pass)
}

/// Deviations of the linear response from the principal symbol at modes
/// `k` and `2k` on a smooth periodic metric.
pub fn linearize_deviations(n: usize, seed: u64, k: usize) -> Result<(f64, f64)> {
    let c = make_chart(ChartSpec::torus(n, 16, 16, 1.0, 1.0, 1.0))?;
    let g = random_smooth_metric(c, seed, 0.2);
    let v = [0.3, 0.1, -0.2, 1.0, 0.25, 0.7];
    let a = fourier_symbol_probe(&g, k, 1e-4, v)?;
    let b = fourier_symbol_probe(&g, 2 * k, 1e-4, v)?;
    Ok((a.deviation, b.deviation))
}

pub fn cmd_linearize_check(n: usize, seed: u64, k: usize, min_ratio: f64) -> Result<bool> {
    let (a, b) = linearize_deviations(n, seed, k)?;
    let ratio = a / b;
    let pass = ratio >= min_ratio;
    println!("mode {k}: deviation {a:.6e}");
    println!("mode {}: deviation {b:.6e}", 2 * k);
    println!("ratio {ratio:.4} (bound {min_ratio})  {}", verdict(pass));
    Ok(pass)
}
