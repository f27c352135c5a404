//! Cross curvature flow on a three-dimensional slab chart with boundary.
//!
//! The crate evolves a Riemannian metric `g` on `T² × [z_min, z_max]` under the
//! gauge-fixed flow `∂g/∂t = ±2c + L_W g`, where `c` is the cross curvature
//! tensor and `W` the DeTurck vector field relative to a background
//! connection. Boundary faces carry either pinned (Dirichlet) data or the
//! umbilic condition `h_αβ = λ(t) g_αβ`. The gauge is removed afterwards by
//! pulling back along the gauge map generated by `−W`.
//!
//! Module map:
//!
//! * [`chart`]: grid, tensor fields, finite differences, snapshot files.
//! * [`curvature`]: Christoffels through cross curvature, identity checks.
//! * [`deturck`]: the vector field `W`, `L_W g`, and the modified right-hand side.
//! * [`boundary`]: ghost closures and boundary residuals.
//! * [`symbol`]: principal symbols and their spectra.
//! * [`evolve`]: RK4 time integration with diagnostics.
//! * [`pullback`]: the gauge map, pulled-back metric, and the flow residual.
//! * [`oracles`]: independent reference solutions and cross-checks.

pub mod boundary;
pub mod chart;
pub mod curvature;
pub mod deturck;
pub mod error;
pub mod evolve;
pub mod interp;
pub mod oracles;
pub mod pullback;
pub mod symbol;
pub mod tensor;

pub use boundary::{BoundaryMode, BoundaryResiduals, BoundarySpec, Face, Lambda};
pub use chart::{ChartSpec, MetricField, TensorField, Topology};
pub use curvature::{CrossFormula, CurvatureBundle, SectionalClass, SectionalReport};
pub use deturck::{BackgroundConnection, BackgroundKind, DeTurckField};
pub use error::{Result, XcfError};
pub use evolve::{DiagnosticsRecord, FlowState};
pub use oracles::SpaceFormKind;
pub use symbol::{ParabolicityClass, SymbolMatrix, SymbolProbe};
