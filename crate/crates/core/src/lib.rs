//! Inviscid Burgers' equation on directed metric trees.
//!
//! The equation `∂t u + u ∂x u = 0` is posed edge-wise on a metric graph and
//! coupled at vertices through transmission conditions that conserve the
//! squared-velocity flux (the Kirchhoff condition). Two solvers are provided:
//!
//! * [`lax_oleinik`] — an explicit variational solver for non-negative data,
//!   recursing edge by edge in topological order with boundary-flux histories;
//! * [`godunov`] — a first-order finite-volume solver for data of arbitrary
//!   sign, coupled each step through the vertex transmission solvers.
//!
//! [`vertex`] implements the transmission solvers themselves (minimal and
//! maximal energy-change solvers for non-negative traces, and the signed
//! case dispatch for honeycomb-type vertices), [`graph`] the metric trees,
//! [`diagnostics`] TV/energy/shock analyses, and [`scenario`] the scenario
//! file format plus the built-in reproductions driven by the CLI.

pub mod diagnostics;
pub mod godunov;
pub mod graph;
pub mod lax_oleinik;
pub mod scenario;
pub mod vertex;

mod parallel;

pub use graph::{DirectedMetricTree, GraphError, VertexClass, VertexDirection};
pub use vertex::{FlowDirection, SolverKind, TieBreak, TransmissionPolicy, VertexTrace};
