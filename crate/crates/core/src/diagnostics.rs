//! Runtime analyses over solver output: total-variation norms, graph
//! energy, shock detection with Rankine-Hugoniot/Lax auditing, the
//! TV-estimate inequality, and monotone-sign class membership.
//!
//! All functions here are pure read-only passes over immutable snapshots.

use crate::godunov::{GodunovRun, NetworkState};
use crate::graph::{DirectedMetricTree, VertexKind};
use serde::Serialize;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("TV estimate hypothesis violated: negative value {value} on edge {edge}")]
    HypothesisViolated { edge: usize, value: f64 },
}

fn tv_of(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Discrete total variation per edge, of `u` and of `u^2`.
#[derive(Debug, Clone, Serialize)]
pub struct TvReport {
    pub per_edge: Vec<f64>,
    pub total: f64,
    pub per_edge_squared: Vec<f64>,
    pub total_squared: f64,
}

pub fn tv_norm(state: &NetworkState) -> TvReport {
    let per_edge: Vec<f64> = state.grids.iter().map(|g| tv_of(&g.u)).collect();
    let per_edge_squared: Vec<f64> = state
        .grids
        .iter()
        .map(|g| {
            let sq: Vec<f64> = g.u.iter().map(|&v| v * v).collect();
            tv_of(&sq)
        })
        .collect();
    TvReport {
        total: per_edge.iter().sum(),
        total_squared: per_edge_squared.iter().sum(),
        per_edge,
        per_edge_squared,
    }
}

/// Graph energy `int_G u^2/2 dx` by the midpoint rule on cell averages.
pub fn graph_energy(state: &NetworkState) -> f64 {
    state.energy()
}

/// One detected discontinuity, with the implied Rankine-Hugoniot speed
/// and the Lax admissibility flag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShockRecord {
    pub edge: usize,
    pub position: f64,
    pub left: f64,
    pub right: f64,
    pub speed: f64,
    pub lax_ok: bool,
}

/// Default detection threshold: five times the average per-interface
/// variation, so rarefaction staircases stay below it.
pub fn default_shock_threshold(values: &[f64]) -> f64 {
    5.0 * tv_of(values) / values.len().max(1) as f64
}

/// Scan sampled values for jumps above `threshold`; consecutive flagged
/// interfaces with the same jump sign merge into one record (a captured
/// shock is smeared over a few cells).
pub fn detect_shocks(edge: usize, xs: &[f64], us: &[f64], threshold: f64) -> Vec<ShockRecord> {
    let mut records: Vec<ShockRecord> = Vec::new();
    let mut open: Option<(usize, usize, f64)> = None; // (start, end, sign)
    let flush = |start: usize, end: usize, records: &mut Vec<ShockRecord>| {
        let left = us[start];
        let right = us[end];
        records.push(ShockRecord {
            edge,
            position: 0.5 * (xs[start] + xs[end]),
            left,
            right,
            speed: 0.5 * (left + right),
            lax_ok: left > right,
        });
    };
    for i in 0..us.len().saturating_sub(1) {
        let jump = us[i + 1] - us[i];
        if jump.abs() > threshold {
            let sign = jump.signum();
            open = match open {
                Some((start, _, s)) if s == sign => Some((start, i + 1, s)),
                Some((start, end, _)) => {
                    flush(start, end, &mut records);
                    Some((i, i + 1, sign))
                }
                None => Some((i, i + 1, sign)),
            };
        } else if let Some((start, end, _)) = open.take() {
            flush(start, end, &mut records);
        }
    }
    if let Some((start, end, _)) = open {
        flush(start, end, &mut records);
    }
    records
}

/// Energy change rate of a piecewise-continuous profile on one edge:
/// boundary flux terms minus the cubic dissipation of each shock.
pub fn energy_dissipation_rate(tail_value: f64, head_value: f64, shocks: &[ShockRecord]) -> f64 {
    let boundary = tail_value.powi(3) / 3.0 - head_value.powi(3) / 3.0;
    let dissipation: f64 = shocks
        .iter()
        .map(|s| (s.left - s.right).powi(3) / 12.0)
        .sum();
    boundary - dissipation
}

/// Result of the TV-estimate inequality check. The bound is
/// `2^kappa (TV(u0^2) + source flux variation + initial vertex
/// adjustments)`; `kappa` is assembled constructively from the per-vertex
/// doubling factors (one doubling per first- or second-kind vertex, none
/// for path vertices) plus one doubling for passing from the endpoint
/// estimate to the running supremum.
#[derive(Debug, Clone, Serialize)]
pub struct TvEstimateReport {
    pub metric: String,
    pub lhs_sup_tv_squared: f64,
    pub sink_flux_variation: f64,
    pub source_flux_variation: f64,
    pub initial_adjustment: f64,
    pub initial_tv_squared: f64,
    pub kappa: f64,
    pub per_vertex_doublings: Vec<(usize, f64)>,
    pub per_edge: Vec<f64>,
    pub total: f64,
    pub bound: f64,
    pub holds: bool,
    pub margin: f64,
}

/// Evaluate the TV-estimate inequality on a finished non-negative run:
/// `sup_t ||u^2(t)||_TV + int |d/dt u^2|(sinks) <= bound`.
pub fn tv_estimate_check(
    tree: &DirectedMetricTree,
    run: &GodunovRun,
) -> Result<TvEstimateReport, DiagnosticsError> {
    for state in std::iter::once(&run.initial).chain(run.snapshots.iter()) {
        for g in &state.grids {
            for &v in &g.u {
                if v < -1e-10 {
                    return Err(DiagnosticsError::HypothesisViolated {
                        edge: g.edge,
                        value: v,
                    });
                }
            }
        }
    }

    // Constructive doubling bookkeeping.
    let mut per_vertex_doublings = Vec::new();
    let mut kappa = 1.0; // endpoint estimate -> running supremum
    for v in 0..tree.vertex_count() {
        let class = tree.classify_vertex(v).expect("vertex in range");
        let doublings = match class.kind {
            VertexKind::Source | VertexKind::Sink | VertexKind::PathVertex => 0.0,
            VertexKind::FirstKind | VertexKind::SecondKind => 1.0,
            VertexKind::General => (class.deg_in.max(class.deg_out) as f64).log2().ceil(),
        };
        if doublings > 0.0 {
            per_vertex_doublings.push((v, doublings));
            kappa += doublings;
        }
    }

    // Left side: running supremum of the squared TV over the recorded
    // snapshots, plus the sink-side flux variation.
    let mut sup_tv = tv_norm(&run.initial).total_squared;
    let mut per_edge = tv_norm(&run.initial).per_edge_squared;
    for s in &run.snapshots {
        let r = tv_norm(s);
        if r.total_squared > sup_tv {
            sup_tv = r.total_squared;
            per_edge = r.per_edge_squared;
        }
    }
    let abs_var_sq = |series: &[f64]| -> f64 {
        series
            .windows(2)
            .map(|w| (w[1] * w[1] - w[0] * w[0]).abs())
            .sum()
    };
    let sink_flux_variation: f64 = tree
        .sinks()
        .iter()
        .flat_map(|&v| tree.direction(v).in_edges.iter())
        .map(|&e| abs_var_sq(&run.endpoints.head[e]))
        .sum();
    let lhs = sup_tv + sink_flux_variation;

    // Right side: the initial squared TV, the source boundary flux
    // variation, and the instantaneous t = 0+ vertex adjustments (first
    // ghost value against the initial endpoint value).
    let initial_tv_squared = tv_norm(&run.initial).total_squared;
    let source_flux_variation: f64 = tree
        .sources()
        .iter()
        .flat_map(|&v| tree.direction(v).out_edges.iter())
        .map(|&e| abs_var_sq(&run.endpoints.tail_ghost[e]))
        .sum();
    let source_tails: std::collections::BTreeSet<usize> = tree
        .sources()
        .iter()
        .flat_map(|&v| tree.direction(v).out_edges.iter().copied())
        .collect();
    let mut initial_adjustment = 0.0;
    for e in 0..tree.edge_count() {
        if source_tails.contains(&e) {
            continue;
        }
        let g = &run.endpoints.tail_ghost[e];
        if g.len() >= 2 {
            initial_adjustment += (g[1] * g[1] - g[0] * g[0]).abs();
        }
    }
    let bound =
        2f64.powf(kappa) * (initial_tv_squared + source_flux_variation + initial_adjustment);

    Ok(TvEstimateReport {
        metric: "tv_estimate".into(),
        lhs_sup_tv_squared: sup_tv,
        sink_flux_variation,
        source_flux_variation,
        initial_adjustment,
        initial_tv_squared,
        kappa,
        per_vertex_doublings,
        per_edge,
        total: lhs,
        bound,
        holds: lhs <= bound,
        margin: bound - lhs,
    })
}

/// Monotone-sign classification of a sampled profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum WClass {
    /// Non-decreasing and non-negative.
    WPlus,
    /// Non-increasing and non-positive.
    WMinus,
    /// Finitely many constant-sign blocks.
    W { blocks: usize },
    /// More sign blocks than the cap allows.
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct WClassification {
    pub class: WClass,
    /// `(start index, end index inclusive, sign)` per block.
    pub partition: Vec<(usize, usize, i8)>,
}

/// Segment the profile into maximal constant-sign blocks (zeros attach to
/// the running block) and classify. Values within `tol` count as zero;
/// more than `max_blocks` blocks classify as none.
pub fn w_class_membership(us: &[f64], tol: f64, max_blocks: usize) -> WClassification {
    let non_decreasing = us.windows(2).all(|w| w[1] >= w[0] - tol);
    let non_increasing = us.windows(2).all(|w| w[1] <= w[0] + tol);
    let non_negative = us.iter().all(|&v| v >= -tol);
    let non_positive = us.iter().all(|&v| v <= tol);

    let mut partition: Vec<(usize, usize, i8)> = Vec::new();
    let mut current_sign = 0i8;
    let mut start = 0usize;
    for (i, &v) in us.iter().enumerate() {
        let s = if v > tol {
            1
        } else if v < -tol {
            -1
        } else {
            0
        };
        if s != 0 && s != current_sign {
            if current_sign != 0 {
                partition.push((start, i - 1, current_sign));
                start = i;
            }
            current_sign = s;
        }
    }
    partition.push((start, us.len().saturating_sub(1), current_sign));

    let class = if non_decreasing && non_negative {
        WClass::WPlus
    } else if non_increasing && non_positive {
        WClass::WMinus
    } else if partition.len() <= max_blocks {
        WClass::W {
            blocks: partition.len(),
        }
    } else {
        WClass::None
    };
    WClassification { class, partition }
}
