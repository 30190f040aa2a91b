//! First-order Godunov finite-volume solver on the whole network.
//!
//! Each edge carries a uniform cell grid; every time step the endpoint
//! cell averages are gathered at each vertex, the transmission solver
//! produces ghost values, and the edges update independently with exact
//! Riemann fluxes. Sources and sinks carry ghost value 0. Kirchhoff is
//! audited (not imposed) on the solver outputs each step.
//!
//! The scheme serves both as the general-sign solver and as the
//! independent cross-check for the explicit variational solver.

use crate::graph::{DirectedMetricTree, VertexKind};
use crate::lax_oleinik::PiecewiseData;
use crate::parallel;
use crate::vertex::{
    kirchhoff_residual, solve_policy, solve_signed, SignedBranch, TransmissionError,
    TransmissionPolicy, EPS_KIRCHHOFF,
};
use thiserror::Error;

/// Velocity floor guarding the CFL bound in an all-zero state.
pub const U_FLOOR: f64 = 1e-8;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GodunovError {
    #[error("time step {dt} violates the CFL bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("negative value {value} on edge {edge} in non-negative mode")]
    NegativeValue { edge: usize, value: f64 },
    #[error("Kirchhoff audit failed at vertex {vertex}, t = {t}: residual {residual}")]
    KirchhoffAudit { vertex: usize, t: f64, residual: f64 },
    #[error(transparent)]
    Transmission(#[from] TransmissionError),
}

/// Exact Godunov flux for the convex flux `f(u) = u^2/2`.
pub fn godunov_flux(u_left: f64, u_right: f64) -> f64 {
    let f = |u: f64| 0.5 * u * u;
    f(u_left.max(0.0)).max(f(u_right.min(0.0)))
}

/// Uniform cell grid on one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGrid {
    pub edge: usize,
    pub dx: f64,
    pub u: Vec<f64>,
}

impl EdgeGrid {
    pub fn new(edge: usize, length: f64, n_cells: usize) -> Self {
        let n = n_cells.max(4);
        EdgeGrid {
            edge,
            dx: length / n as f64,
            u: vec![0.0; n],
        }
    }

    /// Fill with exact cell averages of a piecewise datum.
    pub fn project(&mut self, datum: &PiecewiseData) {
        let n = self.u.len();
        for i in 0..n {
            let a = self.dx * i as f64;
            let b = self.dx * (i + 1) as f64;
            self.u[i] = datum.mean(a, b);
        }
    }

    pub fn n_cells(&self) -> usize {
        self.u.len()
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        (0..self.u.len())
            .map(|i| (i as f64 + 0.5) * self.dx)
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// All edge grids at one instant (synchronous stepping).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub grids: Vec<EdgeGrid>,
    pub t: f64,
}

impl NetworkState {
    pub fn max_abs(&self) -> f64 {
        self.grids.iter().fold(0.0f64, |m, g| m.max(g.max_abs()))
    }

    /// Graph energy `sum_j int u^2/2 dx` by the midpoint rule.
    pub fn energy(&self) -> f64 {
        self.grids
            .iter()
            .map(|g| g.u.iter().map(|&v| 0.5 * v * v * g.dx).sum::<f64>())
            .sum()
    }

    /// Total mass `sum_j int u dx`.
    pub fn mass(&self) -> f64 {
        self.grids
            .iter()
            .map(|g| g.u.iter().sum::<f64>() * g.dx)
            .sum()
    }

    /// Energy of the positive and negative parts separately.
    pub fn signed_energies(&self) -> (f64, f64) {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for g in &self.grids {
            for &v in &g.u {
                if v > 0.0 {
                    pos += 0.5 * v * v * g.dx;
                } else {
                    neg += 0.5 * v * v * g.dx;
                }
            }
        }
        (pos, neg)
    }
}

/// CFL-stable step: `cfl * min dx / max(|u|, floor)`.
pub fn cfl_dt(state: &NetworkState, cfl: f64) -> f64 {
    let min_dx = state
        .grids
        .iter()
        .map(|g| g.dx)
        .fold(f64::INFINITY, f64::min);
    cfl * min_dx / state.max_abs().max(U_FLOOR)
}

/// Whether vertices couple through the non-negative policy solvers or
/// the signed case dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    NonNegative,
    Signed,
}

/// Ghost values produced by the vertex solves of one step.
#[derive(Debug, Clone)]
pub struct GhostValues {
    /// Ghost at each edge's tail (x = 0 side).
    pub tail: Vec<f64>,
    /// Ghost at each edge's head (x = l side).
    pub head: Vec<f64>,
}

/// Worst Kirchhoff residual observed in one sweep of vertex solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KirchhoffObs {
    pub residual: f64,
    pub vertex: usize,
}

/// Gather endpoint cell averages, run every vertex solve, and return the
/// ghost values plus the worst Kirchhoff residual over interior vertices
/// (callers decide whether to fail on it). Balanced ties that freeze a
/// vertex carry no flow and are excluded from the residual.
pub fn vertex_ghosts(
    tree: &DirectedMetricTree,
    state: &NetworkState,
    policies: &dyn Fn(usize) -> TransmissionPolicy,
    mode: CouplingMode,
) -> Result<(GhostValues, KirchhoffObs), GodunovError> {
    let m = tree.edge_count();
    let mut ghosts = GhostValues {
        tail: vec![0.0; m],
        head: vec![0.0; m],
    };
    let mut worst = KirchhoffObs {
        residual: 0.0,
        vertex: 0,
    };
    for v in 0..tree.vertex_count() {
        let dir = tree.direction(v);
        let class = tree.classify_vertex(v).expect("vertex in range");
        if matches!(class.kind, VertexKind::Source | VertexKind::Sink) {
            // Ghost 0: free outflow, no inflow.
            continue;
        }
        let in_before: Vec<f64> = dir
            .in_edges
            .iter()
            .map(|&e| *state.grids[e].u.last().unwrap())
            .collect();
        let out_before: Vec<f64> = dir
            .out_edges
            .iter()
            .map(|&e| state.grids[e].u[0])
            .collect();
        let (in_after, out_after, audit) = match mode {
            CouplingMode::NonNegative => {
                for (&u, &e) in in_before
                    .iter()
                    .zip(&dir.in_edges)
                    .chain(out_before.iter().zip(&dir.out_edges))
                {
                    if u < -1e-12 {
                        return Err(GodunovError::NegativeValue { edge: e, value: u });
                    }
                }
                let inb: Vec<f64> = in_before.iter().map(|&u| u.max(0.0)).collect();
                let outb: Vec<f64> = out_before.iter().map(|&u| u.max(0.0)).collect();
                let trace = solve_policy(dir, &inb, &outb, &policies(v))?;
                let r = kirchhoff_residual(&trace)?;
                (trace.in_after(), trace.out_after(), Some(r))
            }
            CouplingMode::Signed => {
                let solved = solve_signed(class, dir, &in_before, &out_before, &policies(v))?;
                let audit = if solved.branch == SignedBranch::Frozen {
                    None
                } else {
                    Some(kirchhoff_residual(&solved.trace)?)
                };
                (solved.trace.in_after(), solved.trace.out_after(), audit)
            }
        };
        if let Some(r) = audit {
            if r.abs() > worst.residual {
                worst = KirchhoffObs {
                    residual: r.abs(),
                    vertex: v,
                };
            }
        }
        for (&e, &g) in dir.in_edges.iter().zip(&in_after) {
            ghosts.head[e] = g;
        }
        for (&e, &g) in dir.out_edges.iter().zip(&out_after) {
            ghosts.tail[e] = g;
        }
    }
    Ok((ghosts, worst))
}

/// One synchronous step: vertex solves, then the per-edge conservative
/// update with ghost cells at both ends. Edge updates run in parallel.
/// Returns the injected ghosts and the step's worst Kirchhoff residual.
pub fn step(
    tree: &DirectedMetricTree,
    state: &mut NetworkState,
    dt: f64,
    policies: &dyn Fn(usize) -> TransmissionPolicy,
    mode: CouplingMode,
) -> Result<(GhostValues, KirchhoffObs), GodunovError> {
    let (ghosts, residual) = vertex_ghosts(tree, state, policies, mode)?;
    let speed = state
        .max_abs()
        .max(ghosts.tail.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
        .max(ghosts.head.iter().fold(0.0f64, |m, &v| m.max(v.abs())));
    let min_dx = state
        .grids
        .iter()
        .map(|g| g.dx)
        .fold(f64::INFINITY, f64::min);
    if dt * speed > min_dx * (1.0 + 1e-12) {
        return Err(GodunovError::CflViolation {
            dt,
            bound: min_dx / speed.max(U_FLOOR),
        });
    }
    parallel::for_each_mut(&mut state.grids, |e, grid| {
        let n = grid.u.len();
        let lam = dt / grid.dx;
        let mut flux = Vec::with_capacity(n + 1);
        flux.push(godunov_flux(ghosts.tail[e], grid.u[0]));
        for i in 0..n - 1 {
            flux.push(godunov_flux(grid.u[i], grid.u[i + 1]));
        }
        flux.push(godunov_flux(grid.u[n - 1], ghosts.head[e]));
        for i in 0..n {
            grid.u[i] -= lam * (flux[i + 1] - flux[i]);
        }
    });
    state.t += dt;
    Ok((ghosts, residual))
}

/// Time histories of endpoint cell averages and injected ghosts, one
/// record per step (used by the TV-estimate diagnostics).
#[derive(Debug, Clone, Default)]
pub struct EndpointHistory {
    pub ts: Vec<f64>,
    /// `tail[e][k]`: first cell average of edge `e` at record `k`.
    pub tail: Vec<Vec<f64>>,
    pub head: Vec<Vec<f64>>,
    pub tail_ghost: Vec<Vec<f64>>,
    pub head_ghost: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub cfl: f64,
    pub mode: CouplingMode,
    /// Fail the run when a vertex solve leaves a Kirchhoff residual above
    /// tolerance. Off, the worst residual is still recorded.
    pub audit_kirchhoff: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cfl: 0.45,
            mode: CouplingMode::NonNegative,
            audit_kirchhoff: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GodunovRun {
    pub initial: NetworkState,
    pub snapshots: Vec<NetworkState>,
    pub snapshot_times: Vec<f64>,
    pub endpoints: EndpointHistory,
    pub steps: usize,
    pub worst_kirchhoff: f64,
}

/// Build the initial state from piecewise data (exact cell averages).
pub fn initial_state(
    tree: &DirectedMetricTree,
    data: &[PiecewiseData],
    cells_per_unit: f64,
) -> NetworkState {
    let grids = (0..tree.edge_count())
        .map(|e| {
            let length = tree.length(e);
            let n = ((length * cells_per_unit).round() as usize).max(4);
            let mut g = EdgeGrid::new(e, length, n);
            g.project(&data[e]);
            g
        })
        .collect();
    NetworkState { grids, t: 0.0 }
}

/// Time loop with CFL-adaptive steps snapped to the output times.
pub fn run(
    tree: &DirectedMetricTree,
    data: &[PiecewiseData],
    policies: &dyn Fn(usize) -> TransmissionPolicy,
    horizon: f64,
    cells_per_unit: f64,
    output_times: &[f64],
    cfg: &RunConfig,
) -> Result<GodunovRun, GodunovError> {
    let mut state = initial_state(tree, data, cells_per_unit);
    let initial = state.clone();
    let m = tree.edge_count();
    let mut endpoints = EndpointHistory {
        ts: vec![0.0],
        tail: (0..m).map(|e| vec![state.grids[e].u[0]]).collect(),
        head: (0..m)
            .map(|e| vec![*state.grids[e].u.last().unwrap()])
            .collect(),
        tail_ghost: vec![Vec::new(); m],
        head_ghost: vec![Vec::new(); m],
    };
    for e in 0..m {
        endpoints.tail_ghost[e].push(state.grids[e].u[0]);
        endpoints.head_ghost[e].push(*state.grids[e].u.last().unwrap());
    }

    let mut outputs: Vec<f64> = output_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t <= horizon + 1e-12)
        .collect();
    outputs.sort_by(|a, b| a.total_cmp(b));
    outputs.dedup();

    let mut snapshots = Vec::new();
    let mut snapshot_times = Vec::new();
    if output_times.contains(&0.0) {
        snapshots.push(state.clone());
        snapshot_times.push(0.0);
    }

    let mut next_output = 0usize;
    let mut steps = 0usize;
    let mut worst_kirchhoff = 0.0f64;
    while state.t < horizon - 1e-12 {
        let mut dt = cfl_dt(&state, cfg.cfl);
        let target = if next_output < outputs.len() {
            outputs[next_output]
        } else {
            horizon
        };
        dt = dt.min(target - state.t).min(horizon - state.t);
        let (ghosts, obs) = step(tree, &mut state, dt, policies, cfg.mode)?;
        worst_kirchhoff = worst_kirchhoff.max(obs.residual);
        if cfg.audit_kirchhoff && obs.residual > EPS_KIRCHHOFF {
            return Err(GodunovError::KirchhoffAudit {
                vertex: obs.vertex,
                t: state.t,
                residual: obs.residual,
            });
        }
        endpoints.ts.push(state.t);
        for e in 0..m {
            endpoints.tail[e].push(state.grids[e].u[0]);
            endpoints.head[e].push(*state.grids[e].u.last().unwrap());
            endpoints.tail_ghost[e].push(ghosts.tail[e]);
            endpoints.head_ghost[e].push(ghosts.head[e]);
        }
        steps += 1;
        if next_output < outputs.len() && (state.t - outputs[next_output]).abs() < 1e-12 {
            snapshots.push(state.clone());
            snapshot_times.push(outputs[next_output]);
            next_output += 1;
        }
    }
    Ok(GodunovRun {
        initial,
        snapshots,
        snapshot_times,
        endpoints,
        steps,
        worst_kirchhoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{honeycomb_star_first_kind, path_graph, DirectedMetricTree};
    use crate::lax_oleinik::{self, LaxConfig};

    #[test]
    fn flux_trivia() {
        assert_eq!(godunov_flux(1.0, 0.0), 0.5);
        assert_eq!(godunov_flux(-1.0, 1.0), 0.0);
        assert_eq!(godunov_flux(0.0, 0.0), 0.0);
        // Facing shock between 1 and -1: both sides push, the max wins.
        assert_eq!(godunov_flux(1.0, -1.0), 0.5);
    }

    #[test]
    fn cfl_dt_arithmetic() {
        let tree = path_graph(1, None).unwrap();
        let data = vec![PiecewiseData::constant(0.0, 1.0, 1.0)];
        let state = initial_state(&tree, &data, 100.0);
        assert!((cfl_dt(&state, 0.5) - 0.5 * 0.01).abs() < 1e-15);
        // All-zero state: the velocity floor takes over.
        let data = vec![PiecewiseData::constant(0.0, 1.0, 0.0)];
        let state = initial_state(&tree, &data, 100.0);
        assert!((cfl_dt(&state, 0.5) - 0.5 * 0.01 / U_FLOOR).abs() < 1.0);
    }

    #[test]
    fn cfl_governed_by_smallest_cell() {
        let tree = DirectedMetricTree::build(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let data = vec![
            PiecewiseData::constant(0.0, 1.0, 1.0),
            PiecewiseData::constant(0.0, 1.0, 1.0),
        ];
        let mut state = initial_state(&tree, &data, 100.0);
        // Coarsen edge 1 to dx = 0.02; edge 0 keeps dx = 0.01.
        let mut g = EdgeGrid::new(1, 1.0, 50);
        g.project(&data[1]);
        state.grids[1] = g;
        assert!((cfl_dt(&state, 0.5) - 0.5 * 0.01).abs() < 1e-15);
    }

    #[test]
    fn single_edge_riemann_shock_position() {
        // The (1,0) shock starting at x0 moves at speed 1/2 (the block is
        // wide enough that the trailing fan has not caught it by t_end).
        let tree = path_graph(1, Some(&[2.0])).unwrap();
        let x0 = 0.8;
        let data = vec![PiecewiseData::from_segments(2.0, &[(0.0, x0, 1.0)]).unwrap()];
        let t_end = 1.0;
        let run = run(
            &tree,
            &data,
            &|_| TransmissionPolicy::minimal(),
            t_end,
            200.0,
            &[t_end],
            &RunConfig::default(),
        )
        .unwrap();
        let grid = &run.snapshots.last().unwrap().grids[0];
        let xs = grid.cell_centers();
        let expected_front = x0 + 0.5 * t_end;
        let front = xs
            .iter()
            .zip(&grid.u)
            .filter(|(_, &u)| u > 0.5)
            .map(|(&x, _)| x)
            .fold(0.0f64, f64::max);
        assert!(
            (front - expected_front).abs() <= 2.0 * grid.dx,
            "front at {front}, expected {expected_front}"
        );
    }

    #[test]
    fn zero_state_stays_zero() {
        let tree = path_graph(2, None).unwrap();
        let data = vec![
            PiecewiseData::constant(0.0, 1.0, 0.0),
            PiecewiseData::constant(0.0, 1.0, 0.0),
        ];
        let run = run(
            &tree,
            &data,
            &|_| TransmissionPolicy::minimal(),
            0.5,
            50.0,
            &[0.5],
            &RunConfig::default(),
        )
        .unwrap();
        assert!(run.snapshots[0].max_abs() < 1e-14);
    }

    #[test]
    fn max_principle_on_edge_interior() {
        let tree = path_graph(1, None).unwrap();
        let data =
            vec![PiecewiseData::from_segments(1.0, &[(0.2, 0.4, 0.9), (0.6, 0.8, 0.3)]).unwrap()];
        let mut state = initial_state(&tree, &data, 200.0);
        let policies = |_: usize| TransmissionPolicy::minimal();
        for _ in 0..200 {
            let dt = cfl_dt(&state, 0.45);
            let before = state.grids[0].u.clone();
            step(&tree, &mut state, dt, &policies, CouplingMode::NonNegative).unwrap();
            let n = before.len();
            for i in 0..n {
                let lo = before[i.saturating_sub(1)]
                    .min(before[i])
                    .min(before[(i + 1).min(n - 1)])
                    .min(0.0);
                let hi = before[i.saturating_sub(1)]
                    .max(before[i])
                    .max(before[(i + 1).min(n - 1)]);
                let u = state.grids[0].u[i];
                assert!(u >= lo - 1e-12 && u <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn riemann_l1_error_drops_with_refinement() {
        // Unit block on [0.2, 0.7]: left edge opens a fan, right edge is
        // the (1,0) shock at 0.7 + t/2 (plateau alive until t = 1).
        let exact = |x: f64, t: f64| {
            if x < 0.2 || x > 0.7 + 0.5 * t {
                0.0
            } else if x < 0.2 + t {
                (x - 0.2) / t
            } else {
                1.0
            }
        };
        let tree = path_graph(1, Some(&[2.0])).unwrap();
        let data = vec![PiecewiseData::from_segments(2.0, &[(0.2, 0.7, 1.0)]).unwrap()];
        let t_end = 0.8;
        let mut errors = Vec::new();
        for &cells in &[100.0, 200.0, 400.0] {
            let run = run(
                &tree,
                &data,
                &|_| TransmissionPolicy::minimal(),
                t_end,
                cells,
                &[t_end],
                &RunConfig::default(),
            )
            .unwrap();
            let grid = &run.snapshots.last().unwrap().grids[0];
            let err: f64 = grid
                .cell_centers()
                .iter()
                .zip(&grid.u)
                .map(|(&x, &u)| (u - exact(x, t_end)).abs() * grid.dx)
                .sum();
            errors.push(err);
        }
        for w in errors.windows(2) {
            assert!(w[0] / w[1] >= 1.5, "errors: {errors:?}");
        }
    }

    #[test]
    fn p2_riemann_converges_to_entropy_solution() {
        // The a = 0 entropy solution: edge 2 carries clamp(x/t, 0, 1).
        let tree = path_graph(2, None).unwrap();
        let data = vec![
            PiecewiseData::constant(0.0, 1.0, 0.0),
            PiecewiseData::constant(0.0, 1.0, 1.0),
        ];
        let t_end = 0.5;
        let mut prev_err = f64::INFINITY;
        for &cells in &[100.0, 200.0, 400.0] {
            let run = run(
                &tree,
                &data,
                &|_| TransmissionPolicy::minimal(),
                t_end,
                cells,
                &[t_end],
                &RunConfig::default(),
            )
            .unwrap();
            let grid = &run.snapshots.last().unwrap().grids[1];
            let err: f64 = grid
                .cell_centers()
                .iter()
                .zip(&grid.u)
                .map(|(&x, &u)| (u - (x / t_end).min(1.0)).abs() * grid.dx)
                .sum();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 6e-3, "final error {prev_err}");
    }

    #[test]
    fn kirchhoff_audited_every_step() {
        let tree = honeycomb_star_first_kind(0, 0).unwrap();
        let data = vec![
            PiecewiseData::constant(0.0, 1.0, 0.5),
            PiecewiseData::constant(0.0, 1.0, 1.0),
            PiecewiseData::constant(0.0, 1.0, 1.0),
        ];
        let run = run(
            &tree,
            &data,
            &|_| TransmissionPolicy::minimal(),
            0.5,
            100.0,
            &[0.5],
            &RunConfig::default(),
        )
        .unwrap();
        assert!(run.worst_kirchhoff <= EPS_KIRCHHOFF);
    }

    #[test]
    fn godunov_tracks_lax_oleinik_on_a_single_edge() {
        // Block datum on a lone edge, zero inflow: the two solvers agree
        // in L1 under refinement.
        let tree = path_graph(1, None).unwrap();
        let data = vec![PiecewiseData::from_segments(1.0, &[(0.3, 0.4, 1.0)]).unwrap()];
        let t_end = 0.3;
        let mut prev = f64::INFINITY;
        for &cells in &[200.0, 400.0] {
            let g = run(
                &tree,
                &data,
                &|_| TransmissionPolicy::minimal(),
                t_end,
                cells,
                &[t_end],
                &RunConfig::default(),
            )
            .unwrap();
            let grid = &g.snapshots.last().unwrap().grids[0];
            let xs = grid.cell_centers();
            let sol = lax_oleinik::solve_tree(
                &tree,
                &data,
                &|_| TransmissionPolicy::minimal(),
                t_end,
                &[t_end],
                &[xs.clone()],
                &LaxConfig::default(),
            )
            .unwrap();
            let err: f64 = sol.profiles[0][0]
                .us
                .iter()
                .zip(&grid.u)
                .map(|(&a, &b)| (a - b).abs() * grid.dx)
                .sum();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 6e-3, "final L1 distance {prev}");
    }

    #[test]
    fn signed_mode_rejects_general_vertices() {
        // Two in, two out.
        let tree =
            DirectedMetricTree::build(5, &[(0, 2, 1.0), (1, 2, 1.0), (2, 3, 1.0), (2, 4, 1.0)])
                .unwrap();
        let data: Vec<PiecewiseData> = (0..4)
            .map(|_| PiecewiseData::constant(0.0, 1.0, 0.1))
            .collect();
        let err = run(
            &tree,
            &data,
            &|_| TransmissionPolicy::minimal(),
            0.2,
            50.0,
            &[0.2],
            &RunConfig {
                mode: CouplingMode::Signed,
                ..RunConfig::default()
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            GodunovError::Transmission(TransmissionError::UnsupportedVertexClass { .. })
        ));
    }

    #[test]
    fn cfl_violation_detected() {
        let tree = path_graph(1, None).unwrap();
        let data = vec![PiecewiseData::constant(0.0, 1.0, 1.0)];
        let mut state = initial_state(&tree, &data, 100.0);
        let err = step(
            &tree,
            &mut state,
            1.0,
            &|_| TransmissionPolicy::minimal(),
            CouplingMode::NonNegative,
        )
        .unwrap_err();
        assert!(matches!(err, GodunovError::CflViolation { .. }));
    }

    #[test]
    fn negative_wave_exits_through_source() {
        // A negative block on a lone edge moves left and drains through
        // the tail.
        let tree = path_graph(1, Some(&[2.0])).unwrap();
        let data = vec![PiecewiseData::from_segments(2.0, &[(0.5, 1.0, -1.0)]).unwrap()];
        let cfg = RunConfig {
            mode: CouplingMode::Signed,
            ..RunConfig::default()
        };
        let run = run(
            &tree,
            &data,
            &|_| TransmissionPolicy::minimal(),
            2.0,
            100.0,
            &[2.0],
            &cfg,
        )
        .unwrap();
        // After the shock exits (t = 1) the remaining trailing fan is
        // u = (x-1)/t on [0, 1], mass -1/(2t).
        let final_mass = run.snapshots.last().unwrap().mass();
        assert!(
            (final_mass - (-0.25)).abs() < 0.02,
            "mass left: {final_mass}"
        );
    }
}
