//! Structured chart `T² × [z_min, z_max]`, node-centred fields, finite
//! differences, and snapshot files.
//!
//! Nodes are indexed `(i, j, k)` with `i < nx`, `j < ny`, `k < nz`. The lateral
//! directions are periodic and wrap by index arithmetic. In `x³` the slab keeps
//! `ghost_width` extra layers below `k = 0` and above `k = nz - 1`; the boundary
//! module is responsible for filling them. A fully periodic [`Topology::Torus`]
//! variant exists for boundary-free probes and wraps `x³` the same way.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, XcfError};
use crate::tensor::{Sym3, SYM};

/// Snapshot magic for modified-flow metrics.
pub const SNAPSHOT_MAGIC: [u8; 4] = *b"XCF1";
/// Snapshot magic for pulled-back metrics.
pub const PULLBACK_MAGIC: [u8; 4] = *b"XCFP";
/// Bytes before the node payload: magic, three `u32`, four `f64`.
pub const SNAPSHOT_HEADER_BYTES: usize = 4 + 3 * 4 + 4 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Periodic in `x¹, x²`; two boundary faces in `x³`, nodes on both faces.
    Slab,
    /// Periodic in all three directions.
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub ghost_width: usize,
    pub topology: Topology,
}

impl ChartSpec {
    pub fn slab(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, z_min: f64, z_max: f64) -> Self {
        ChartSpec {
            nx,
            ny,
            nz,
            lx,
            ly,
            z_min,
            z_max,
            ghost_width: 2,
            topology: Topology::Slab,
        }
    }

    pub fn torus(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, lz: f64) -> Self {
        ChartSpec {
            nx,
            ny,
            nz,
            lx,
            ly,
            z_min: 0.0,
            z_max: lz,
            ghost_width: 2,
            topology: Topology::Torus,
        }
    }

    /// Grid spacings `(h₁, h₂, h₃)`.
    ///
    /// Lateral directions are periodic, so `h = extent / count`. On the slab
    /// both faces carry nodes and `h₃ = (z_max - z_min) / (nz - 1)`.
    pub fn spacing(&self) -> [f64; 3] {
        let hz = match self.topology {
            Topology::Slab => (self.z_max - self.z_min) / (self.nz as f64 - 1.0),
            Topology::Torus => (self.z_max - self.z_min) / self.nz as f64,
        };
        [self.lx / self.nx as f64, self.ly / self.ny as f64, hz]
    }

    pub fn min_spacing(&self) -> f64 {
        let h = self.spacing();
        h[0].min(h[1]).min(h[2])
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn padded_nz(&self) -> usize {
        match self.topology {
            Topology::Slab => self.nz + 2 * self.ghost_width,
            Topology::Torus => self.nz,
        }
    }

    pub fn padded_len(&self) -> usize {
        self.nx * self.ny * self.padded_nz()
    }

    pub fn plane_len(&self) -> usize {
        self.nx * self.ny
    }

    /// Storage offset of node `(i, j, k)`; `k` may reach into the ghost layers.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: isize) -> usize {
        let kp = match self.topology {
            Topology::Slab => (k + self.ghost_width as isize) as usize,
            Topology::Torus => k.rem_euclid(self.nz as isize) as usize,
        };
        i + self.nx * (j + self.ny * kp)
    }

    /// Index of `(i, j, k)` in the unpadded node order `i + nx (j + ny k)`.
    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn wrap_x(&self, i: isize) -> usize {
        i.rem_euclid(self.nx as isize) as usize
    }

    #[inline]
    pub fn wrap_y(&self, j: isize) -> usize {
        j.rem_euclid(self.ny as isize) as usize
    }

    /// Chart coordinates of a node; `k` may be a ghost index.
    #[inline]
    pub fn coord(&self, i: isize, j: isize, k: isize) -> [f64; 3] {
        let h = self.spacing();
        [
            i as f64 * h[0],
            j as f64 * h[1],
            self.z_min + k as f64 * h[2],
        ]
    }

    pub fn is_slab(&self) -> bool {
        self.topology == Topology::Slab
    }

    /// Iterator over all `(i, j, k)` nodes in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.nz)
            .flat_map(move |k| (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j, k))))
    }
}

/// Validates a chart description.
pub fn make_chart(spec: ChartSpec) -> Result<ChartSpec> {
    let min_nz = if spec.topology == Topology::Slab {
        EXTRAP_NODES
    } else {
        4
    };
    if spec.nx < 4 || spec.ny < 4 || spec.nz < min_nz {
        return Err(XcfError::InvalidChart(format!(
            "node counts must be at least (4, 4, {min_nz}), got ({}, {}, {})",
            spec.nx, spec.ny, spec.nz
        )));
    }
    if !(spec.lx > 0.0 && spec.ly > 0.0) || !spec.lx.is_finite() || !spec.ly.is_finite() {
        return Err(XcfError::InvalidChart(format!(
            "lateral extents must be positive, got ({}, {})",
            spec.lx, spec.ly
        )));
    }
    if !(spec.z_min < spec.z_max) || !spec.z_min.is_finite() || !spec.z_max.is_finite() {
        return Err(XcfError::InvalidChart(format!(
            "need z_min < z_max, got [{}, {}]",
            spec.z_min, spec.z_max
        )));
    }
    if spec.ghost_width < 1 {
        return Err(XcfError::InvalidChart(
            "ghost_width must be at least 1".into(),
        ));
    }
    if spec.spacing().iter().any(|h| !(*h > 0.0)) {
        return Err(XcfError::InvalidChart("non-positive spacing".into()));
    }
    Ok(spec)
}

/// A symmetric positive-definite metric sampled at every node (and ghost layer).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub chart: ChartSpec,
    pub data: Vec<Sym3>,
    ghosts_filled: bool,
}

impl MetricField {
    pub fn constant(chart: ChartSpec, g: Sym3) -> Self {
        MetricField {
            chart,
            data: vec![g; chart.padded_len()],
            ghosts_filled: true,
        }
    }

    /// Samples `f` at every node including ghost layers, so the ghosts hold the
    /// analytic extension of `f`.
    pub fn from_fn(chart: ChartSpec, f: impl Fn([f64; 3]) -> Sym3) -> Self {
        let mut data = vec![[0.0; 6]; chart.padded_len()];
        let (lo, hi) = k_range_padded(&chart);
        for k in lo..hi {
            for j in 0..chart.ny {
                for i in 0..chart.nx {
                    data[chart.idx(i, j, k)] = f(chart.coord(i as isize, j as isize, k));
                }
            }
        }
        MetricField {
            chart,
            data,
            ghosts_filled: true,
        }
    }

    /// Builds a field from node values in `i + nx (j + ny k)` order; ghosts unfilled.
    pub fn from_nodes(chart: ChartSpec, nodes: &[Sym3]) -> Self {
        assert_eq!(nodes.len(), chart.node_count());
        let mut data = vec![[0.0; 6]; chart.padded_len()];
        for (i, j, k) in chart.nodes() {
            data[chart.idx(i, j, k as isize)] = nodes[chart.node_index(i, j, k)];
        }
        MetricField {
            chart,
            data,
            ghosts_filled: !chart.is_slab(),
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: isize) -> &Sym3 {
        &self.data[self.chart.idx(i, j, k)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize, k: isize) -> &mut Sym3 {
        let idx = self.chart.idx(i, j, k);
        &mut self.data[idx]
    }

    pub fn ghosts_filled(&self) -> bool {
        self.ghosts_filled || !self.chart.is_slab()
    }

    /// Records that the ghost layers are (or are no longer) consistent with the interior.
    pub fn set_ghosts_filled(&mut self, filled: bool) {
        self.ghosts_filled = filled;
    }

    /// Node values in `i + nx (j + ny k)` order.
    pub fn interior(&self) -> Vec<Sym3> {
        self.chart
            .nodes()
            .map(|(i, j, k)| *self.at(i, j, k as isize))
            .collect()
    }

    /// Largest absolute component over interior nodes.
    pub fn max_abs(&self) -> f64 {
        self.chart.nodes().fold(0.0_f64, |m, (i, j, k)| {
            m.max(crate::tensor::sym_max_abs(self.at(i, j, k as isize)))
        })
    }

    /// Leading-minor positive-definiteness check over interior nodes.
    pub fn check_positive_definite(&self) -> Result<()> {
        for (i, j, k) in self.chart.nodes() {
            if !crate::tensor::is_positive_definite(self.at(i, j, k as isize)) {
                return Err(XcfError::NotPositiveDefinite { i, j, k });
            }
        }
        Ok(())
    }

    /// Fills slab ghost layers by polynomial extrapolation through the
    /// [`EXTRAP_NODES`] nodes nearest each face.
    ///
    /// The central differences at a face then act as one-sided stencils
    /// whose error is dominated by the usual central truncation term.
    pub fn extrapolate_ghosts(&mut self) {
        if !self.chart.is_slab() {
            return;
        }
        let c = self.chart;
        let top = c.nz as isize - 1;
        for j in 0..c.ny {
            for i in 0..c.nx {
                let lo: [Sym3; EXTRAP_NODES] = std::array::from_fn(|m| *self.at(i, j, m as isize));
                let hi: [Sym3; EXTRAP_NODES] =
                    std::array::from_fn(|m| *self.at(i, j, top - m as isize));
                for layer in 1..=c.ghost_width {
                    *self.at_mut(i, j, -(layer as isize)) = extrapolate(&lo, layer);
                    *self.at_mut(i, j, top + layer as isize) = extrapolate(&hi, layer);
                }
            }
        }
        self.ghosts_filled = true;
    }

    /// Metric components as a generic rank-2 symmetric tensor field.
    pub fn to_tensor_field(&self) -> TensorField {
        TensorField {
            chart: self.chart,
            rank: 2,
            symmetric: true,
            data: self.data.iter().flat_map(|s| s.iter().copied()).collect(),
            ghosts_filled: self.ghosts_filled(),
        }
    }
}

/// Nodes nearest a face used to extrapolate into its ghost layers.
pub const EXTRAP_NODES: usize = 6;

/// Lagrange weights of the polynomial through nodes `0..EXTRAP_NODES` at unit
/// spacing, evaluated `layer` steps beyond node 0. They are integers, and
/// are rounded so that constants extrapolate exactly.
pub fn extrapolation_weights(layer: usize) -> [f64; EXTRAP_NODES] {
    let x = -(layer as f64);
    std::array::from_fn(|m| {
        let mut l = 1.0;
        for q in 0..EXTRAP_NODES {
            if q != m {
                l *= (x - q as f64) / (m as f64 - q as f64);
            }
        }
        l.round()
    })
}

/// Denominator of [`face_derivative_weights`] in units of `h`.
pub const FACE_DERIVATIVE_DENOM: f64 = 12.0;

/// Integer weights `w` with `∂₃f ≈ Σ w_m f_m / (12 h)` at a bottom face,
/// for `f` ordered inward: the fourth-order central stencil through the two
/// extrapolated ghosts. At a top face the sign flips.
pub fn face_derivative_weights() -> [f64; EXTRAP_NODES] {
    let (g1, g2) = (extrapolation_weights(1), extrapolation_weights(2));
    std::array::from_fn(|m| {
        let mut w = g2[m] - 8.0 * g1[m];
        if m == 1 {
            w += 8.0;
        }
        if m == 2 {
            w -= 1.0;
        }
        w
    })
}

/// Polynomial extrapolation of `f` (ordered inward from a face) into ghost
/// layer `layer`.
#[inline]
pub fn extrapolate(f: &[Sym3; EXTRAP_NODES], layer: usize) -> Sym3 {
    let w = extrapolation_weights(layer);
    let mut out = [0.0; 6];
    for s in 0..6 {
        out[s] = (0..EXTRAP_NODES).map(|m| w[m] * f[m][s]).sum();
    }
    out
}

fn k_range_padded(chart: &ChartSpec) -> (isize, isize) {
    match chart.topology {
        Topology::Slab => (
            -(chart.ghost_width as isize),
            (chart.nz + chart.ghost_width) as isize,
        ),
        Topology::Torus => (0, chart.nz as isize),
    }
}

/// A generic per-node tensor field with the same storage layout as [`MetricField`].
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub chart: ChartSpec,
    pub rank: u32,
    /// Rank-2 fields may store only the six symmetric components.
    pub symmetric: bool,
    pub data: Vec<f64>,
    ghosts_filled: bool,
}

impl TensorField {
    pub fn zeros(chart: ChartSpec, rank: u32, symmetric: bool) -> Self {
        let mut f = TensorField {
            chart,
            rank,
            symmetric,
            data: Vec::new(),
            ghosts_filled: false,
        };
        f.data = vec![0.0; chart.padded_len() * f.components()];
        f
    }

    /// Scalar field sampled from `f` at every node including ghosts.
    pub fn scalar_from_fn(chart: ChartSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut out = TensorField::zeros(chart, 0, false);
        let (lo, hi) = k_range_padded(&chart);
        for k in lo..hi {
            for j in 0..chart.ny {
                for i in 0..chart.nx {
                    out.data[chart.idx(i, j, k)] = f(chart.coord(i as isize, j as isize, k));
                }
            }
        }
        out.ghosts_filled = true;
        out
    }

    /// Components per node: `3^rank`, or 6 for symmetric rank-2 storage.
    pub fn components(&self) -> usize {
        if self.symmetric && self.rank == 2 {
            6
        } else {
            3usize.pow(self.rank)
        }
    }

    pub fn node(&self, i: usize, j: usize, k: isize) -> &[f64] {
        let n = self.components();
        let o = self.chart.idx(i, j, k) * n;
        &self.data[o..o + n]
    }

    pub fn node_mut(&mut self, i: usize, j: usize, k: isize) -> &mut [f64] {
        let n = self.components();
        let o = self.chart.idx(i, j, k) * n;
        &mut self.data[o..o + n]
    }

    pub fn ghosts_filled(&self) -> bool {
        self.ghosts_filled || !self.chart.is_slab()
    }

    pub fn set_ghosts_filled(&mut self, filled: bool) {
        self.ghosts_filled = filled;
    }

    /// Largest absolute component over interior nodes.
    pub fn max_abs(&self) -> f64 {
        self.chart.nodes().fold(0.0_f64, |m, (i, j, k)| {
            self.node(i, j, k as isize)
                .iter()
                .fold(m, |m, v| m.max(v.abs()))
        })
    }
}

/// Second-order central difference of every component along `axis` (1, 2 or 3).
///
/// Output is defined on interior nodes; its ghost layers are left unfilled.
pub fn fd_partial(field: &TensorField, axis: usize) -> Result<TensorField> {
    assert!((1..=3).contains(&axis), "axis must be 1, 2 or 3");
    if !field.ghosts_filled() {
        return Err(XcfError::GhostsUnfilled);
    }
    let c = field.chart;
    let h = c.spacing()[axis - 1];
    let mut out = TensorField::zeros(c, field.rank, field.symmetric);
    let n = field.components();
    for (i, j, k) in c.nodes() {
        let k = k as isize;
        let (p, m) = match axis {
            1 => (
                field.node(c.wrap_x(i as isize + 1), j, k),
                field.node(c.wrap_x(i as isize - 1), j, k),
            ),
            2 => (
                field.node(i, c.wrap_y(j as isize + 1), k),
                field.node(i, c.wrap_y(j as isize - 1), k),
            ),
            _ => (field.node(i, j, k + 1), field.node(i, j, k - 1)),
        };
        let dst = out.node_mut(i, j, k);
        for s in 0..n {
            dst[s] = (p[s] - m[s]) / (2.0 * h);
        }
    }
    Ok(out)
}

/// First and second derivatives of the metric at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub g: Sym3,
    /// `dg[a] = ∂_a g`.
    pub dg: [Sym3; 3],
    /// `ddg[SYM[a][b]] = ∂_a ∂_b g`.
    pub ddg: [Sym3; 6],
}

impl Jet {
    #[inline]
    pub fn dd(&self, a: usize, b: usize) -> &Sym3 {
        &self.ddg[SYM[a][b]]
    }
}

/// Compact second-order stencils (19 points) for the metric jet at a node.
///
/// On slab faces the `x³` derivatives use the fourth-order central stencils
/// through both ghost layers instead. Face values are fixed algebraically
/// from derivative conditions, and a second-order face derivative would
/// leave the face curvature only first-order accurate.
///
/// Uses ghost layers at `k = 0` and `k = nz - 1` on the slab; callers check
/// [`MetricField::ghosts_filled`] once per sweep.
#[inline]
pub fn metric_jet(field: &MetricField, i: usize, j: usize, k: usize) -> Jet {
    let c = &field.chart;
    let h = c.spacing();
    let k = k as isize;
    let ip = c.wrap_x(i as isize + 1);
    let im = c.wrap_x(i as isize - 1);
    let jp = c.wrap_y(j as isize + 1);
    let jm = c.wrap_y(j as isize - 1);
    let d = &field.data;
    let at = |a: usize, b: usize, kk: isize| -> &Sym3 { &d[c.idx(a, b, kk)] };

    let g0 = *at(i, j, k);
    let xp = at(ip, j, k);
    let xm = at(im, j, k);
    let yp = at(i, jp, k);
    let ym = at(i, jm, k);
    let zp = at(i, j, k + 1);
    let zm = at(i, j, k - 1);
    let xpyp = at(ip, jp, k);
    let xpym = at(ip, jm, k);
    let xmyp = at(im, jp, k);
    let xmym = at(im, jm, k);
    let xpzp = at(ip, j, k + 1);
    let xpzm = at(ip, j, k - 1);
    let xmzp = at(im, j, k + 1);
    let xmzm = at(im, j, k - 1);
    let ypzp = at(i, jp, k + 1);
    let ypzm = at(i, jp, k - 1);
    let ymzp = at(i, jm, k + 1);
    let ymzm = at(i, jm, k - 1);

    let (i2x, i2y, i2z) = (0.5 / h[0], 0.5 / h[1], 0.5 / h[2]);
    let (ixx, iyy, izz) = (
        1.0 / (h[0] * h[0]),
        1.0 / (h[1] * h[1]),
        1.0 / (h[2] * h[2]),
    );
    let (ixy, ixz, iyz) = (
        0.25 / (h[0] * h[1]),
        0.25 / (h[0] * h[2]),
        0.25 / (h[1] * h[2]),
    );

    let mut dg = [[0.0; 6]; 3];
    let mut ddg = [[0.0; 6]; 6];
    for s in 0..6 {
        dg[0][s] = (xp[s] - xm[s]) * i2x;
        dg[1][s] = (yp[s] - ym[s]) * i2y;
        dg[2][s] = (zp[s] - zm[s]) * i2z;
        ddg[0][s] = (xp[s] - 2.0 * g0[s] + xm[s]) * ixx;
        ddg[3][s] = (yp[s] - 2.0 * g0[s] + ym[s]) * iyy;
        ddg[5][s] = (zp[s] - 2.0 * g0[s] + zm[s]) * izz;
        ddg[1][s] = (xpyp[s] - xpym[s] - xmyp[s] + xmym[s]) * ixy;
        ddg[2][s] = (xpzp[s] - xpzm[s] - xmzp[s] + xmzm[s]) * ixz;
        ddg[4][s] = (ypzp[s] - ypzm[s] - ymzp[s] + ymzm[s]) * iyz;
    }
    if c.is_slab() && (k == 0 || k == c.nz as isize - 1) {
        let i12 = 1.0 / (12.0 * h[2]);
        let d4 = |a: usize, b: usize, s: usize| {
            (at(a, b, k - 2)[s] - 8.0 * at(a, b, k - 1)[s] + 8.0 * at(a, b, k + 1)[s]
                - at(a, b, k + 2)[s])
                * i12
        };
        let zpp = at(i, j, k + 2);
        let zmm = at(i, j, k - 2);
        for s in 0..6 {
            dg[2][s] = d4(i, j, s);
            ddg[5][s] =
                (-zmm[s] + 16.0 * zm[s] - 30.0 * g0[s] + 16.0 * zp[s] - zpp[s]) * i12 / h[2];
            ddg[2][s] = (d4(ip, j, s) - d4(im, j, s)) * i2x;
            ddg[4][s] = (d4(i, jp, s) - d4(i, jm, s)) * i2y;
        }
    }
    Jet { g: g0, dg, ddg }
}

/// Writes the interior nodes of `field` in the little-endian snapshot layout.
pub fn write_snapshot(field: &MetricField, path: &Path) -> Result<()> {
    write_snapshot_with_magic(field, path, SNAPSHOT_MAGIC)
}

pub fn write_snapshot_with_magic(field: &MetricField, path: &Path, magic: [u8; 4]) -> Result<()> {
    fs::write(path, encode_snapshot(field, magic))?;
    Ok(())
}

pub fn encode_snapshot(field: &MetricField, magic: [u8; 4]) -> Vec<u8> {
    let c = &field.chart;
    let mut buf = Vec::with_capacity(SNAPSHOT_HEADER_BYTES + c.node_count() * 48);
    buf.extend_from_slice(&magic);
    for n in [c.nx, c.ny, c.nz] {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in [c.lx, c.ly, c.z_min, c.z_max] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for (i, j, k) in c.nodes() {
        for v in field.at(i, j, k as isize) {
            buf.write_all(&v.to_le_bytes()).expect("write to Vec");
        }
    }
    buf
}

/// Reads an `XCF1` snapshot as a slab field with unfilled ghosts.
pub fn read_snapshot(path: &Path) -> Result<MetricField> {
    let (field, _) = read_snapshot_any(path, &[SNAPSHOT_MAGIC])?;
    Ok(field)
}

/// Reads a snapshot accepting any of `magics`; returns the field and its magic.
pub fn read_snapshot_any(path: &Path, magics: &[[u8; 4]]) -> Result<(MetricField, [u8; 4])> {
    let bytes = fs::read(path)?;
    decode_snapshot(&bytes, magics)
}

pub fn decode_snapshot(bytes: &[u8], magics: &[[u8; 4]]) -> Result<(MetricField, [u8; 4])> {
    if bytes.len() < 4 {
        return Err(XcfError::BadMagic);
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if !magics.contains(&magic) {
        return Err(XcfError::BadMagic);
    }
    if bytes.len() < SNAPSHOT_HEADER_BYTES {
        return Err(XcfError::Truncated {
            expected: SNAPSHOT_HEADER_BYTES,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (nx, ny, nz) = (u32_at(4), u32_at(8), u32_at(12));
    let chart = make_chart(ChartSpec::slab(
        nx,
        ny,
        nz,
        f64_at(16),
        f64_at(24),
        f64_at(32),
        f64_at(40),
    ))?;
    let expected = SNAPSHOT_HEADER_BYTES + chart.node_count() * 48;
    if bytes.len() != expected {
        return Err(XcfError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let mut nodes = Vec::with_capacity(chart.node_count());
    for n in 0..chart.node_count() {
        let mut s = [0.0; 6];
        for (c, v) in s.iter_mut().enumerate() {
            *v = f64_at(SNAPSHOT_HEADER_BYTES + (6 * n + c) * 8);
            if !v.is_finite() {
                return Err(XcfError::NonFiniteSnapshot { node: n });
            }
        }
        nodes.push(s);
    }
    Ok((MetricField::from_nodes(chart, &nodes), magic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn chart(nx: usize, nz: usize) -> ChartSpec {
        make_chart(ChartSpec::slab(nx, nx, nz, 1.0, 1.0, 1.0, 2.0)).unwrap()
    }

    #[test]
    fn spacing_conventions() {
        let c = make_chart(ChartSpec::slab(8, 8, 8, 1.0, 1.0, 1.0, 2.0)).unwrap();
        let h = c.spacing();
        assert_eq!(h[0], 0.125);
        assert_eq!(h[1], 0.125);
        assert!((h[2] - 1.0 / 7.0).abs() < 1e-15);

        let c = make_chart(ChartSpec::slab(16, 16, 32, 1.0, 1.0, 0.5, 1.5)).unwrap();
        assert!((c.spacing()[2] - 1.0 / 31.0).abs() < 1e-15);

        let t = make_chart(ChartSpec::torus(8, 8, 8, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(t.spacing(), [0.125, 0.125, 0.125]);
    }

    #[test]
    fn degenerate_charts_rejected() {
        assert!(make_chart(ChartSpec::slab(4, 4, 6, 1.0, 1.0, 1.0, 1.0)).is_err());
        assert!(make_chart(ChartSpec::slab(4, 4, 5, 1.0, 1.0, 0.0, 1.0)).is_err());
        assert!(make_chart(ChartSpec::torus(4, 4, 4, 1.0, 1.0, 1.0)).is_ok());
        assert!(make_chart(ChartSpec::slab(3, 4, 6, 1.0, 1.0, 0.0, 1.0)).is_err());
        assert!(make_chart(ChartSpec::slab(4, 4, 6, 0.0, 1.0, 0.0, 1.0)).is_err());
        assert!(make_chart(ChartSpec::slab(4, 4, 6, 1.0, -1.0, 0.0, 1.0)).is_err());
        let mut s = ChartSpec::slab(4, 4, 6, 1.0, 1.0, 0.0, 1.0);
        s.ghost_width = 0;
        assert!(make_chart(s).is_err());
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let f = TensorField::scalar_from_fn(chart(8, 8), |_| 3.5);
        for axis in 1..=3 {
            assert_eq!(fd_partial(&f, axis).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn derivative_of_linear_is_exact() {
        let f = TensorField::scalar_from_fn(chart(8, 9), |x| x[2]);
        let d = fd_partial(&f, 3).unwrap();
        for (i, j, k) in d.chart.nodes() {
            assert!((d.node(i, j, k as isize)[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unfilled_ghosts_are_a_hard_error() {
        let mut f = TensorField::scalar_from_fn(chart(8, 8), |x| x[2]);
        f.set_ghosts_filled(false);
        assert!(matches!(fd_partial(&f, 1), Err(XcfError::GhostsUnfilled)));
    }

    #[test]
    fn quadratic_profile_is_exact() {
        let f = TensorField::scalar_from_fn(chart(8, 12), |x| 2.0 * x[2] * x[2] - x[2] + 0.5);
        let d = fd_partial(&f, 3).unwrap();
        for (i, j, k) in d.chart.nodes() {
            let z = d.chart.coord(i as isize, j as isize, k as isize)[2];
            assert!((d.node(i, j, k as isize)[0] - (4.0 * z - 1.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn refinement_of_periodic_sine_is_second_order() {
        // Oracle: analytic derivative 2π cos(2πx).
        let err = |n: usize| {
            let c = make_chart(ChartSpec::slab(n, 4, 6, 1.0, 1.0, 0.0, 1.0)).unwrap();
            let f = TensorField::scalar_from_fn(c, |x| (2.0 * PI * x[0]).sin());
            let d = fd_partial(&f, 1).unwrap();
            c.nodes().fold(0.0_f64, |m, (i, j, k)| {
                let x = c.coord(i as isize, 0, 0)[0];
                m.max((d.node(i, j, k as isize)[0] - 2.0 * PI * (2.0 * PI * x).cos()).abs())
            })
        };
        let (e32, e64) = (err(32), err(64));
        let h = 1.0 / 32.0;
        assert!(e32 <= (2.0 * PI).powi(3) / 6.0 * h * h * 1.01);
        let ratio = e32 / e64;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lateral_period_shift_leaves_derivatives_unchanged() {
        let c = chart(8, 8);
        let f = |x: [f64; 3]| (2.0 * PI * x[0]).sin() * x[2] + (2.0 * PI * x[1]).cos();
        let a = TensorField::scalar_from_fn(c, f);
        let b = TensorField::scalar_from_fn(c, |x| f([x[0] + 1.0, x[1] - 1.0, x[2]]));
        for axis in 1..=3 {
            let da = fd_partial(&a, axis).unwrap();
            let db = fd_partial(&b, axis).unwrap();
            for (i, j, k) in c.nodes() {
                let (u, v) = (da.node(i, j, k as isize)[0], db.node(i, j, k as isize)[0]);
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jet_exact_on_quadratic_metric() {
        let c = chart(8, 8);
        let g = MetricField::from_fn(c, |x| {
            [
                1.0 + 0.1 * x[2] * x[2],
                0.05 * x[2],
                0.0,
                1.0 + 0.2 * x[2],
                0.0,
                2.0 + 0.3 * x[2] * x[2],
            ]
        });
        let jet = metric_jet(&g, 3, 4, 0);
        let z = c.coord(3, 4, 0)[2];
        assert!((jet.dg[2][0] - 0.2 * z).abs() < 1e-12);
        assert!((jet.dg[2][1] - 0.05).abs() < 1e-12);
        assert!((jet.dd(2, 2)[5] - 0.6).abs() < 1e-10);
        assert_eq!(jet.dg[0], [0.0; 6]);
        assert_eq!(*jet.dd(0, 2), [0.0; 6]);
    }

    #[test]
    fn snapshot_round_trip_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("id.xcf");
        let c = chart(8, 8);
        let g = MetricField::constant(c, crate::tensor::IDENTITY);
        write_snapshot(&g, &path).unwrap();
        assert_eq!(
            fs::metadata(&path).unwrap().len() as usize,
            SNAPSHOT_HEADER_BYTES + 8 * 8 * 8 * 6 * 8
        );
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.interior(), g.interior());
        assert_eq!(back.chart.spacing(), c.spacing());
    }

    #[test]
    fn snapshot_errors() {
        let c = chart(4, 6);
        let g = MetricField::constant(c, crate::tensor::IDENTITY);
        let mut bytes = encode_snapshot(&g, SNAPSHOT_MAGIC);
        let mut bad = bytes.clone();
        bad[0] = b'Y';
        let e = decode_snapshot(&bad, &[SNAPSHOT_MAGIC]).unwrap_err();
        assert_eq!(e.to_string(), "bad magic");
        assert!(matches!(
            decode_snapshot(&bytes[..bytes.len() - 3], &[SNAPSHOT_MAGIC]),
            Err(XcfError::Truncated { .. })
        ));
        let o = SNAPSHOT_HEADER_BYTES + 8 * 7;
        bytes[o..o + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            decode_snapshot(&bytes, &[SNAPSHOT_MAGIC]),
            Err(XcfError::NonFiniteSnapshot { node: 1 })
        ));
        // The pull-back magic is a distinct format.
        let p = encode_snapshot(&g, PULLBACK_MAGIC);
        assert!(decode_snapshot(&p, &[SNAPSHOT_MAGIC]).is_err());
        assert!(decode_snapshot(&p, &[PULLBACK_MAGIC]).is_ok());
    }

    #[test]
    fn ghosts_reproduce_polynomial_profiles() {
        let c = chart(4, 9);
        let f = |z: f64| {
            2.0 - 3.0 * z + 0.5 * z * z - 0.25 * z.powi(3) + 0.3 * z.powi(4) - 0.1 * z.powi(5)
        };
        let exact = MetricField::from_fn(c, |x| [f(x[2]), 0.0, 0.0, 1.0, 0.0, 1.0]);
        let mut g = MetricField::from_nodes(c, &exact.interior());
        g.extrapolate_ghosts();
        for k in [-2isize, -1, 9, 10] {
            let got = g.at(1, 2, k)[0];
            let want = exact.at(1, 2, k)[0];
            assert!((got - want).abs() < 1e-10, "layer {k}: {got} vs {want}");
        }
        assert_eq!(
            extrapolation_weights(1),
            [6.0, -15.0, 20.0, -15.0, 6.0, -1.0]
        );
        for layer in 1..=3 {
            assert!((extrapolation_weights(layer).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
