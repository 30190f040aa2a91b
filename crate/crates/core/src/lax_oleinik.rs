//! Explicit recursive solver for non-negative data on a tree.
//!
//! On each edge the solution is the variational representative
//! `u(x,t) = (x - y*)/t`, where `y*` minimizes a value functional `G` built
//! from the edge's initial datum (for `y` in `[0, x]`) and, for `y < 0`,
//! from the cumulative half-flux history of the edge's tail boundary. The
//! negative branch is searched through the vertex-crossing time
//! `tau = -y t / (x - y)`, minimizing `H(tau) = x^2/(2(t-tau)) - F(tau)`
//! over `tau` in `[0, t)`.
//!
//! Edges are processed in topological order: a head trace is computed on
//! the full horizon before downstream edges are solved, and each
//! downstream tail trace is the transmission solver applied pointwise in
//! time to the upstream head traces.

use crate::graph::DirectedMetricTree;
use crate::parallel;
use crate::vertex::{solve_policy, SolverKind, TieBreak, TransmissionError, TransmissionPolicy};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum LaxError {
    #[error("the explicit solver requires a tree (no rejoined branches)")]
    RequiresTree,
    #[error("negative initial value {value} on edge {edge}; the explicit solver handles non-negative data only")]
    NegativeInput { edge: usize, value: f64 },
    #[error("the maximal policy depends on the increasing edge order; reindex the tree first")]
    OrderRequired,
    #[error("tree is not unrollable: {0}")]
    NotUnrollable(String),
    #[error("zero routing coefficient on the path at vertex {vertex}")]
    ZeroCoefficient { vertex: usize },
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error(transparent)]
    Transmission(#[from] TransmissionError),
}

/// Piecewise-linear initial datum with jumps, on `[lo, hi]`. Piece `i`
/// spans `[xs[i], xs[i+1]]` with endpoint values `left[i]`, `right[i]`;
/// the running integral is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseData {
    xs: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
    cum: Vec<f64>,
}

impl PiecewiseData {
    pub fn constant(lo: f64, hi: f64, value: f64) -> Self {
        Self::from_pieces(vec![lo, hi], vec![value], vec![value])
    }

    /// Build from `(from, to, value)` segments on `[0, length]`; gaps are
    /// filled with zero. Segments must be disjoint and ordered.
    pub fn from_segments(length: f64, segments: &[(f64, f64, f64)]) -> Result<Self, LaxError> {
        let mut segs: Vec<(f64, f64, f64)> = segments.to_vec();
        segs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut xs = vec![0.0];
        let mut vals: Vec<f64> = Vec::new();
        let mut cursor = 0.0;
        for &(from, to, value) in &segs {
            if from < cursor - 1e-12 || to > length + 1e-12 || to <= from {
                return Err(LaxError::DomainViolation(format!(
                    "segment [{from}, {to}] outside [{cursor}, {length}] or empty"
                )));
            }
            if from > cursor + 1e-12 {
                xs.push(from);
                vals.push(0.0);
            }
            xs.push(to.min(length));
            vals.push(value);
            cursor = to;
        }
        if cursor < length - 1e-12 {
            xs.push(length);
            vals.push(0.0);
        }
        if vals.is_empty() {
            return Ok(Self::constant(0.0, length, 0.0));
        }
        Ok(Self::from_pieces(xs, vals.clone(), vals))
    }

    pub fn from_pieces(xs: Vec<f64>, left: Vec<f64>, right: Vec<f64>) -> Self {
        assert_eq!(xs.len(), left.len() + 1);
        assert_eq!(left.len(), right.len());
        let mut cum = Vec::with_capacity(xs.len());
        cum.push(0.0);
        for i in 0..left.len() {
            let w = xs[i + 1] - xs[i];
            cum.push(cum[i] + 0.5 * (left[i] + right[i]) * w);
        }
        PiecewiseData {
            xs,
            left,
            right,
            cum,
        }
    }

    pub fn lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn hi(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    pub fn min_value(&self) -> f64 {
        self.left
            .iter()
            .chain(self.right.iter())
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max_value(&self) -> f64 {
        self.left
            .iter()
            .chain(self.right.iter())
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    fn piece_index(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => i.min(self.left.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.left.len() - 1),
        }
    }

    /// Value inside the piece containing `x` (right-continuous at jumps).
    pub fn value(&self, x: f64) -> f64 {
        let i = self.piece_index(x);
        let (a, b) = (self.xs[i], self.xs[i + 1]);
        if b == a {
            return self.left[i];
        }
        let s = ((x - a) / (b - a)).clamp(0.0, 1.0);
        self.left[i] + s * (self.right[i] - self.left[i])
    }

    /// Left limit at `x` (value of the piece ending there).
    pub fn value_left(&self, x: f64) -> f64 {
        if x <= self.lo() {
            return self.left[0];
        }
        let i = match self.xs.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) if i > 0 => i - 1,
            Ok(_) => 0,
            Err(i) => i.saturating_sub(1).min(self.left.len() - 1),
        };
        let (a, b) = (self.xs[i], self.xs[i + 1]);
        if b == a {
            return self.right[i];
        }
        let s = ((x - a) / (b - a)).clamp(0.0, 1.0);
        self.left[i] + s * (self.right[i] - self.left[i])
    }

    /// Exact integral from `lo()` to `y`.
    pub fn integral_to(&self, y: f64) -> f64 {
        if y <= self.lo() {
            return 0.0;
        }
        if y >= self.hi() {
            return *self.cum.last().unwrap();
        }
        let i = self.piece_index(y);
        let (a, b) = (self.xs[i], self.xs[i + 1]);
        let w = y - a;
        if b == a || w <= 0.0 {
            return self.cum[i];
        }
        let vy = self.left[i] + (self.right[i] - self.left[i]) * w / (b - a);
        self.cum[i] + 0.5 * (self.left[i] + vy) * w
    }

    /// Mean value over `[a, b]` (exact; used for finite-volume cells).
    pub fn mean(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return self.value(a);
        }
        (self.integral_to(b) - self.integral_to(a)) / (b - a)
    }
}

/// Sampled boundary trace with its cumulative half-flux integral
/// `F(t) = int_0^t u^2(0,s)/2 ds` (trapezoid on the samples; within a
/// segment `u` interpolates linearly).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    ts: Vec<f64>,
    us: Vec<f64>,
    fs: Vec<f64>,
}

impl BoundaryTrace {
    pub fn new(ts: Vec<f64>, us: Vec<f64>) -> Self {
        assert_eq!(ts.len(), us.len());
        assert!(!ts.is_empty());
        let mut fs = Vec::with_capacity(ts.len());
        fs.push(0.0);
        for i in 1..ts.len() {
            let dt = ts[i] - ts[i - 1];
            fs.push(fs[i - 1] + 0.25 * dt * (us[i - 1] * us[i - 1] + us[i] * us[i]));
        }
        BoundaryTrace { ts, us, fs }
    }

    pub fn zero(horizon: f64) -> Self {
        Self::new(vec![0.0, horizon], vec![0.0, 0.0])
    }

    pub fn times(&self) -> &[f64] {
        &self.ts
    }

    pub fn values(&self) -> &[f64] {
        &self.us
    }

    pub fn horizon(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    fn segment(&self, t: f64) -> usize {
        match self.ts.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => i.min(self.ts.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.ts.len() - 2),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.ts[0] {
            return self.us[0];
        }
        if t >= self.horizon() {
            return *self.us.last().unwrap();
        }
        let i = self.segment(t);
        let (a, b) = (self.ts[i], self.ts[i + 1]);
        if b == a {
            return self.us[i + 1];
        }
        let s = (t - a) / (b - a);
        self.us[i] + s * (self.us[i + 1] - self.us[i])
    }

    /// Cumulative half-flux `F(tau)`; non-decreasing, `F(0) = 0`.
    pub fn cum_flux(&self, tau: f64) -> f64 {
        if tau <= self.ts[0] {
            return 0.0;
        }
        if tau >= self.horizon() {
            return *self.fs.last().unwrap();
        }
        let i = self.segment(tau);
        let dt = tau - self.ts[i];
        let u = self.value(tau);
        self.fs[i] + 0.25 * dt * (self.us[i] * self.us[i] + u * u)
    }

    /// Summed absolute increments of `u^2` along the trace, the discrete
    /// stand-in for `int |d/dt u^2| dt`.
    pub fn abs_flux_variation(&self) -> f64 {
        self.us
            .windows(2)
            .map(|w| (w[1] * w[1] - w[0] * w[0]).abs())
            .sum()
    }
}

/// Search controls for the variational solver.
#[derive(Debug, Clone)]
pub struct LaxConfig {
    /// Base uniform samples for head traces on `[0, T]`.
    pub trace_samples: usize,
    /// Bisection passes when refining a trace near a kink.
    pub refine_depth: u32,
    /// Jump in `u` between neighbouring trace samples that triggers
    /// refinement.
    pub refine_jump: f64,
    /// Golden-section iterations on the negative-branch bracket.
    pub golden_iters: usize,
}

impl Default for LaxConfig {
    fn default() -> Self {
        LaxConfig {
            trace_samples: 1024,
            refine_depth: 10,
            refine_jump: 2e-3,
            golden_iters: 70,
        }
    }
}

/// The value functional `y -> G(x, t, y)`.
///
/// For `y` in `[0, x]` this is `(x-y)^2/(2t) + int_0^y u0`; for `y < 0`
/// it is `x(x-y)/(2t) - F(-y t/(x-y))`, the boundary-history branch.
pub fn g_functional(
    x: f64,
    t: f64,
    y: f64,
    datum: &PiecewiseData,
    trace: &BoundaryTrace,
) -> Result<f64, LaxError> {
    if t <= 0.0 {
        return Err(LaxError::DomainViolation("t must be positive".into()));
    }
    if x < 0.0 || x > datum.hi() + 1e-12 {
        return Err(LaxError::DomainViolation(format!(
            "x = {x} outside [0, {}]",
            datum.hi()
        )));
    }
    if y > x {
        return Err(LaxError::DomainViolation("y must not exceed x".into()));
    }
    if y >= 0.0 {
        Ok((x - y) * (x - y) / (2.0 * t) + datum.integral_to(y))
    } else {
        let tau = -y * t / (x - y);
        Ok(x * (x - y) / (2.0 * t) - trace.cum_flux(tau))
    }
}

fn h_functional(x: f64, t: f64, tau: f64, trace: &BoundaryTrace) -> f64 {
    x * x / (2.0 * (t - tau)) - trace.cum_flux(tau)
}

/// Result of one variational minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimizer {
    pub y: f64,
    pub u: f64,
    pub value: f64,
    /// Vertex-crossing time when the minimizer lies on the boundary
    /// branch (`y < 0`).
    pub tau: Option<f64>,
}

/// Minimize `G` over `y <= x`. `y_floor` prunes the search using the
/// monotonicity of `x -> y(x, t)` along a sweep; ties resolve toward the
/// rightmost minimizer.
pub fn minimize_g(
    x: f64,
    t: f64,
    datum: &PiecewiseData,
    trace: &BoundaryTrace,
    cfg: &LaxConfig,
    y_floor: Option<f64>,
) -> Result<Minimizer, LaxError> {
    if t <= 0.0 {
        return Err(LaxError::DomainViolation("t must be positive".into()));
    }
    let tie = 1e-13 * (1.0 + x * x / t + datum.hi().abs());
    let floor = y_floor.unwrap_or(f64::NEG_INFINITY);

    let mut best: Option<Minimizer> = None;
    let mut consider = |y: f64, value: f64, tau: Option<f64>| {
        let cand = Minimizer {
            y,
            u: if let Some(tau) = tau {
                x / (t - tau)
            } else {
                (x - y) / t
            },
            value,
            tau,
        };
        best = Some(match best {
            None => cand,
            Some(b) => {
                if value < b.value - tie || (value <= b.value + tie && y > b.y) {
                    cand
                } else {
                    b
                }
            }
        });
    };

    // Positive branch: interval ends, datum breakpoints, and the
    // stationary point of each smooth piece in closed form.
    let mut pos_candidates: Vec<f64> = vec![0.0, x];
    for &bp in datum.breakpoints() {
        if bp > 0.0 && bp < x {
            pos_candidates.push(bp);
        }
    }
    for i in 0..datum.left.len() {
        let (a, b) = (datum.xs[i], datum.xs[i + 1]);
        if a >= x || b <= 0.0 || b <= a {
            continue;
        }
        let beta = (datum.right[i] - datum.left[i]) / (b - a);
        let alpha = datum.left[i] - beta * a;
        let denom = 1.0 + beta * t;
        if denom.abs() > 1e-14 {
            let y_star = (x - alpha * t) / denom;
            if y_star > a && y_star < b && y_star >= 0.0 && y_star <= x {
                pos_candidates.push(y_star);
            }
        }
    }
    for y in pos_candidates {
        if y < floor - 1e-12 {
            continue;
        }
        consider(y, g_functional(x, t, y, datum, trace)?, None);
    }

    // Negative branch, searched through tau in [0, t): the trace grid
    // plus a golden-section refinement around the best bracket. Skipped
    // when the sweep floor already excludes negative minimizers.
    if floor < 0.0 && x > 0.0 {
        let tau_cap = if floor.is_finite() {
            // y >= floor (< 0) corresponds to tau <= floor t / (floor - x).
            (-floor * t / (x - floor)).min(t)
        } else {
            t
        };
        let guard = t * (1.0 - 1e-12);
        let mut taus: Vec<f64> = vec![0.0];
        for &ts in trace.times() {
            if ts > 0.0 && ts < tau_cap.min(guard) {
                taus.push(ts);
            }
        }
        taus.push(tau_cap.min(guard));
        taus.sort_by(|a, b| a.total_cmp(b));
        taus.dedup();
        let mut best_i = 0;
        let mut best_h = f64::INFINITY;
        for (i, &tau) in taus.iter().enumerate() {
            let h = h_functional(x, t, tau, trace);
            if h < best_h {
                best_h = h;
                best_i = i;
            }
        }
        let (mut a, mut b) = (
            if best_i > 0 { taus[best_i - 1] } else { taus[0] },
            taus[(best_i + 1).min(taus.len() - 1)],
        );
        let phi = 0.618_033_988_749_894_9;
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let mut fc = h_functional(x, t, c, trace);
        let mut fd = h_functional(x, t, d, trace);
        for _ in 0..cfg.golden_iters {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = h_functional(x, t, c, trace);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = h_functional(x, t, d, trace);
            }
        }
        let refined = if fc < fd { (c, fc) } else { (d, fd) };
        let (tau, h) = if refined.1 < best_h {
            refined
        } else {
            (taus[best_i], best_h)
        };
        if tau > 0.0 {
            let y = -tau * x / (t - tau);
            if y >= floor - 1e-12 {
                consider(y, h, Some(tau));
            }
        }
    }

    Ok(best.expect("candidate set is never empty"))
}

/// Snapshot of `u` on one edge at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProfile {
    pub edge: usize,
    pub t: f64,
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
}

/// Solve one edge given its tail boundary trace: the profiles at the
/// requested times plus the head trace for downstream coupling.
pub fn solve_edge(
    edge: usize,
    length: f64,
    datum: &PiecewiseData,
    tail_trace: &BoundaryTrace,
    times: &[f64],
    xs: &[f64],
    horizon: f64,
    cfg: &LaxConfig,
) -> Result<(Vec<EdgeProfile>, BoundaryTrace), LaxError> {
    if datum.min_value() < 0.0 {
        return Err(LaxError::NegativeInput {
            edge,
            value: datum.min_value(),
        });
    }
    if tail_trace.horizon() < horizon - 1e-12 {
        return Err(LaxError::DomainViolation(
            "tail trace does not cover the horizon".into(),
        ));
    }

    let head = sample_head_trace(length, datum, tail_trace, horizon, cfg)?;
    let mut profiles = Vec::with_capacity(times.len());
    for &t in times {
        profiles.push(profile_at(edge, length, datum, tail_trace, t, xs, cfg)?);
    }
    Ok((profiles, head))
}

fn profile_at(
    edge: usize,
    length: f64,
    datum: &PiecewiseData,
    tail_trace: &BoundaryTrace,
    t: f64,
    xs: &[f64],
    cfg: &LaxConfig,
) -> Result<EdgeProfile, LaxError> {
    let mut us = Vec::with_capacity(xs.len());
    if t <= 0.0 {
        for &x in xs {
            us.push(datum.value(x));
        }
        return Ok(EdgeProfile {
            edge,
            t,
            xs: xs.to_vec(),
            us,
        });
    }
    let mut y_floor: Option<f64> = None;
    for &x in xs {
        if x <= 0.0 {
            us.push(tail_trace.value(t).max(0.0));
            continue;
        }
        let m = minimize_g(x.min(length), t, datum, tail_trace, cfg, y_floor)?;
        debug_assert!(y_floor.is_none_or(|f| m.y >= f - 1e-9));
        y_floor = Some(m.y);
        us.push(m.u);
    }
    Ok(EdgeProfile {
        edge,
        t,
        xs: xs.to_vec(),
        us,
    })
}

/// Head trace `u(l, t)` on an adaptive grid: a uniform base refined by
/// bisection wherever neighbouring samples jump (shock arrivals).
fn sample_head_trace(
    length: f64,
    datum: &PiecewiseData,
    tail_trace: &BoundaryTrace,
    horizon: f64,
    cfg: &LaxConfig,
) -> Result<BoundaryTrace, LaxError> {
    let n = cfg.trace_samples.max(8);
    let value_at = |t: f64| -> Result<f64, LaxError> {
        if t <= 0.0 {
            return Ok(datum.value_left(length));
        }
        Ok(minimize_g(length, t, datum, tail_trace, cfg, None)?.u)
    };
    let mut ts: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    let mut us: Vec<f64> = Vec::with_capacity(ts.len());
    for &t in &ts {
        us.push(value_at(t)?);
    }
    for _ in 0..cfg.refine_depth {
        let mut inserts = Vec::new();
        for i in 0..ts.len() - 1 {
            if (us[i + 1] - us[i]).abs() > cfg.refine_jump && ts[i + 1] - ts[i] > 1e-10 * horizon {
                inserts.push(0.5 * (ts[i] + ts[i + 1]));
            }
        }
        if inserts.is_empty() {
            break;
        }
        for t in inserts {
            let u = value_at(t)?;
            let at = ts.partition_point(|&s| s < t);
            ts.insert(at, t);
            us.insert(at, u);
        }
    }
    Ok(BoundaryTrace::new(ts, us))
}

/// Network solution: per-time, per-edge profiles and all boundary traces.
#[derive(Debug, Clone)]
pub struct NetworkSolution {
    /// `profiles[k][j]`: edge `j` at output time `k`.
    pub profiles: Vec<Vec<EdgeProfile>>,
    pub times: Vec<f64>,
    pub tail_traces: Vec<BoundaryTrace>,
    pub head_traces: Vec<BoundaryTrace>,
}

/// Solve the whole tree: sources get zero inflow, every downstream tail
/// trace is produced from the upstream head traces via the vertex policy
/// applied pointwise in time. Edges at the same topological depth are
/// solved in parallel.
pub fn solve_tree(
    tree: &DirectedMetricTree,
    data: &[PiecewiseData],
    policies: &(dyn Fn(usize) -> TransmissionPolicy + Sync),
    horizon: f64,
    times: &[f64],
    xs_per_edge: &[Vec<f64>],
    cfg: &LaxConfig,
) -> Result<NetworkSolution, LaxError> {
    if !tree.is_tree() {
        return Err(LaxError::RequiresTree);
    }
    assert_eq!(data.len(), tree.edge_count());
    for (j, d) in data.iter().enumerate() {
        if d.min_value() < 0.0 {
            return Err(LaxError::NegativeInput {
                edge: j,
                value: d.min_value(),
            });
        }
    }
    let needs_order = (0..tree.vertex_count()).any(|v| {
        matches!(policies(v).kind, SolverKind::Maximal) && tree.direction(v).deg_out() > 1
    });
    if needs_order && !tree.has_increasing_order() {
        return Err(LaxError::OrderRequired);
    }

    let topo = tree
        .topological_vertices()
        .map_err(|_| LaxError::RequiresTree)?;

    // Longest chain of edges from a source down to each vertex.
    let mut vdepth = vec![0usize; tree.vertex_count()];
    for &v in &topo {
        for &e in &tree.direction(v).out_edges {
            let head = tree.edge(e).head;
            vdepth[head] = vdepth[head].max(vdepth[v] + 1);
        }
    }
    let max_depth = vdepth.iter().copied().max().unwrap_or(0);

    let m = tree.edge_count();
    let mut tail_traces: Vec<Option<BoundaryTrace>> = vec![None; m];
    let mut head_traces: Vec<Option<BoundaryTrace>> = vec![None; m];
    let mut edge_profiles: Vec<Option<Vec<EdgeProfile>>> = vec![None; m];

    for depth in 0..=max_depth {
        // Tail traces for edges rooted at this depth.
        for v in 0..tree.vertex_count() {
            if vdepth[v] != depth {
                continue;
            }
            let dir = tree.direction(v);
            if dir.deg_out() == 0 {
                continue;
            }
            if dir.deg_in() == 0 {
                for &e in &dir.out_edges {
                    tail_traces[e] = Some(BoundaryTrace::zero(horizon));
                }
                continue;
            }
            let heads: Vec<&BoundaryTrace> = dir
                .in_edges
                .iter()
                .map(|&e| head_traces[e].as_ref().expect("upstream edge solved"))
                .collect();
            let mut grid: Vec<f64> = heads
                .iter()
                .flat_map(|h| h.times().iter().copied())
                .collect();
            grid.sort_by(|a, b| a.total_cmp(b));
            grid.dedup();
            let policy = policies(v);
            let mut outs: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); dir.deg_out()];
            for &t in &grid {
                let in_values: Vec<f64> = heads.iter().map(|h| h.value(t).max(0.0)).collect();
                let trace = solve_policy(dir, &in_values, &vec![0.0; dir.deg_out()], &policy)?;
                for (k, &o) in trace.out_after().iter().enumerate() {
                    outs[k].push(o);
                }
            }
            for (k, &e) in dir.out_edges.iter().enumerate() {
                tail_traces[e] = Some(BoundaryTrace::new(grid.clone(), outs[k].clone()));
            }
        }

        // Solve every edge rooted at this depth, in parallel.
        let ready: Vec<usize> = (0..m)
            .filter(|&e| vdepth[tree.edge(e).tail] == depth)
            .collect();
        let solved = parallel::map_collect(&ready, |&e| {
            let tail = tail_traces[e].as_ref().expect("tail trace ready");
            solve_edge(
                e,
                tree.length(e),
                &data[e],
                tail,
                times,
                &xs_per_edge[e],
                horizon,
                cfg,
            )
        });
        for (&e, result) in ready.iter().zip(solved) {
            let (profiles, head) = result?;
            edge_profiles[e] = Some(profiles);
            head_traces[e] = Some(head);
        }
    }

    let mut profiles: Vec<Vec<EdgeProfile>> = vec![Vec::with_capacity(m); times.len()];
    for e in 0..m {
        let per_edge = edge_profiles[e].take().expect("edge solved");
        for (k, p) in per_edge.into_iter().enumerate() {
            profiles[k].push(p);
        }
    }
    Ok(NetworkSolution {
        profiles,
        times: times.to_vec(),
        tail_traces: tail_traces.into_iter().map(Option::unwrap).collect(),
        head_traces: head_traces.into_iter().map(Option::unwrap).collect(),
    })
}

/// One segment of an unrolled path datum: edge `edge` occupies
/// `[x_lo, x_hi]` in unrolled coordinates, its data scaled by `scale`
/// (the inverse product of the routing coefficients downstream of it).
#[derive(Debug, Clone, PartialEq)]
pub struct UnrollSegment {
    pub edge: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct UnrolledDatum {
    pub target_edge: usize,
    pub segments: Vec<UnrollSegment>,
    pub datum: PiecewiseData,
}

/// Unroll the unique upstream path of `target` into a single 1-D initial
/// datum on `[-L, l_target]`. Requires every vertex of the tree to have
/// in-degree at most 1 (otherwise the upstream path is not unique and the
/// upstream characteristic slope is not defined).
pub fn path_unroll(
    tree: &DirectedMetricTree,
    data: &[PiecewiseData],
    target: usize,
    policies: &dyn Fn(usize) -> TransmissionPolicy,
) -> Result<UnrolledDatum, LaxError> {
    if !tree.is_tree() {
        return Err(LaxError::RequiresTree);
    }
    for v in 0..tree.vertex_count() {
        if tree.direction(v).deg_in() > 1 {
            return Err(LaxError::NotUnrollable(format!(
                "vertex {v} has in-degree {} (> 1): upstream slopes are not defined",
                tree.direction(v).deg_in()
            )));
        }
    }
    // Walk upstream from the target's tail, dividing by the routing
    // coefficient of each crossed vertex.
    let mut path = vec![target];
    let mut scales = vec![1.0f64];
    let mut vertex = tree.edge(target).tail;
    let mut scale = 1.0;
    while tree.direction(vertex).deg_in() == 1 {
        let dir = tree.direction(vertex);
        let e_cur = *path.last().unwrap();
        let local = dir
            .out_edges
            .iter()
            .position(|&e| e == e_cur)
            .expect("edge leaves its tail vertex");
        let policy = policies(vertex);
        let b = match &policy.kind {
            SolverKind::Minimal => 1.0 / (dir.deg_out() as f64).sqrt(),
            SolverKind::Maximal => {
                let preferred_edge = match policy.tie_break {
                    TieBreak::LowestIndex => *dir.out_edges.iter().min().unwrap(),
                    TieBreak::HighestIndex => *dir.out_edges.iter().max().unwrap(),
                };
                if preferred_edge == e_cur {
                    1.0
                } else {
                    0.0
                }
            }
            SolverKind::ExplicitCoefficients(rows) => rows[local][0],
        };
        if b <= 0.0 {
            return Err(LaxError::ZeroCoefficient { vertex });
        }
        scale /= b;
        let e_up = dir.in_edges[0];
        path.push(e_up);
        scales.push(scale);
        vertex = tree.edge(e_up).tail;
    }
    path.reverse();
    scales.reverse();

    // Concatenate: the target edge keeps its own coordinates [0, l];
    // each upstream edge shifts left by the downstream lengths.
    let mut segments: Vec<UnrollSegment> = Vec::with_capacity(path.len());
    let mut x_hi = tree.length(target);
    for (k, &e) in path.iter().enumerate().rev() {
        let x_lo = x_hi - tree.length(e);
        segments.push(UnrollSegment {
            edge: e,
            x_lo,
            x_hi,
            scale: scales[k],
        });
        x_hi = x_lo;
    }
    segments.reverse();

    let mut xs = vec![segments[0].x_lo];
    let mut left = Vec::new();
    let mut right = Vec::new();
    for seg in &segments {
        let d = &data[seg.edge];
        for i in 0..d.left.len() {
            xs.push(seg.x_lo + (d.xs[i + 1] - d.xs[0]));
            left.push(seg.scale * d.left[i]);
            right.push(seg.scale * d.right[i]);
        }
    }
    let datum = PiecewiseData::from_pieces(xs, left, right);
    Ok(UnrolledDatum {
        target_edge: target,
        segments,
        datum,
    })
}

/// Classic whole-line minimization for a compact datum on `[lo, hi]`,
/// zero-extended to the left: `G(y) = int_lo^y u0 + (x-y)^2/(2t)`.
pub fn solve_line(datum: &PiecewiseData, x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return datum.value(x);
    }
    let mut candidates: Vec<f64> = datum
        .breakpoints()
        .iter()
        .copied()
        .filter(|&y| y <= x)
        .collect();
    candidates.push(x);
    for i in 0..datum.left.len() {
        let (a, b) = (datum.xs[i], datum.xs[i + 1]);
        if a >= x || b <= a {
            continue;
        }
        let beta = (datum.right[i] - datum.left[i]) / (b - a);
        let alpha = datum.left[i] - beta * a;
        let denom = 1.0 + beta * t;
        if denom.abs() > 1e-14 {
            let y_star = (x - alpha * t) / denom;
            if y_star > a && y_star < b.min(x) {
                candidates.push(y_star);
            }
        }
    }
    let g = |y: f64| (x - y) * (x - y) / (2.0 * t) + datum.integral_to(y);
    let mut best_y = candidates[0];
    let mut best_g = g(best_y);
    for &y in &candidates[1..] {
        let v = g(y);
        let tie = 1e-13 * (1.0 + best_g.abs());
        if v < best_g - tie || (v <= best_g + tie && y > best_y) {
            best_g = v;
            best_y = y;
        }
    }
    (x - best_y) / t
}

/// One-sided entropy check: `u(x2) - u(x1) <= (x2-x1)/t + eps` for all
/// sampled pairs `x1 <= x2`. The worst margin over all pairs comes from a
/// prefix-minimum scan of `u - x/t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OleinikReport {
    pub ok: bool,
    pub worst_margin: f64,
    pub worst_pair: Option<(f64, f64)>,
}

pub fn oleinik_check(profile: &EdgeProfile, t: f64, eps: f64) -> OleinikReport {
    if t <= 0.0 || profile.xs.len() < 2 {
        return OleinikReport {
            ok: true,
            worst_margin: f64::NEG_INFINITY,
            worst_pair: None,
        };
    }
    let w: Vec<f64> = profile
        .xs
        .iter()
        .zip(&profile.us)
        .map(|(&x, &u)| u - x / t)
        .collect();
    let mut min_w = w[0];
    let mut min_at = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut pair = None;
    for j in 1..w.len() {
        let margin = w[j] - min_w;
        if margin > worst {
            worst = margin;
            pair = Some((profile.xs[min_at], profile.xs[j]));
        }
        if w[j] < min_w {
            min_w = w[j];
            min_at = j;
        }
    }
    OleinikReport {
        ok: worst <= eps,
        worst_margin: worst,
        worst_pair: pair,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{honeycomb_star_first_kind, path_graph};
    use crate::vertex::TieBreak;

    fn uniform_xs(length: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| length * i as f64 / n as f64).collect()
    }

    #[test]
    fn g_functional_trivial_forms() {
        let zero = PiecewiseData::constant(0.0, 1.0, 0.0);
        let trace = BoundaryTrace::zero(2.0);
        let (x, t, y) = (0.8, 0.3, 0.2);
        let g = g_functional(x, t, y, &zero, &trace).unwrap();
        assert!((g - (x - y) * (x - y) / (2.0 * t)).abs() < 1e-15);

        let ones = PiecewiseData::constant(0.0, 1.0, 1.0);
        let g = g_functional(1.0, 0.05, 1.0, &ones, &trace).unwrap();
        assert!((g - 1.0).abs() < 1e-15);

        // Negative y against a zero boundary history.
        let y = -0.4;
        let g = g_functional(x, t, y, &zero, &trace).unwrap();
        assert!((g - x * (x - y) / (2.0 * t)).abs() < 1e-15);

        assert!(g_functional(x, 0.0, y, &zero, &trace).is_err());
    }

    #[test]
    fn minimize_matches_dense_grid_oracle() {
        // Independent oracle: brute-force scan of G over 1e5 grid points.
        let datum = PiecewiseData::from_segments(
            1.0,
            &[(0.1, 0.25, 0.7), (0.4, 0.6, 0.2), (0.8, 0.95, 1.3)],
        )
        .unwrap();
        let trace = BoundaryTrace::new(
            vec![0.0, 0.2, 0.5, 1.0, 2.0],
            vec![0.0, 0.6, 0.9, 0.3, 0.3],
        );
        let cfg = LaxConfig::default();
        for &(x, t) in &[(0.9, 0.35), (0.5, 0.8), (1.0, 1.7), (0.3, 0.1)] {
            let m = minimize_g(x, t, &datum, &trace, &cfg, None).unwrap();
            let n = 100_000;
            let y_min = -4.0 * x.max(1.0);
            let mut best = f64::INFINITY;
            for i in 0..=n {
                let y = (y_min + (x - y_min) * i as f64 / n as f64).min(x);
                let g = g_functional(x, t, y, &datum, &trace).unwrap();
                if g < best {
                    best = g;
                }
            }
            let dy = (x - y_min) / n as f64;
            assert!(
                m.value <= best + dy,
                "candidate search missed the oracle minimum at x={x}, t={t}"
            );
        }
    }

    #[test]
    fn rarefaction_on_p2_is_exact() {
        // Downstream edge of the P2 Riemann problem: u = clamp(x/t, 0, 1).
        let datum = PiecewiseData::constant(0.0, 1.0, 1.0);
        let trace = BoundaryTrace::zero(1.0);
        let cfg = LaxConfig::default();
        for &t in &[0.2, 0.5] {
            for &x in &[0.05, 0.1, 0.15, 0.3, 0.7, 0.95] {
                let m = minimize_g(x, t, &datum, &trace, &cfg, None).unwrap();
                let expect = (x / t).min(1.0);
                assert!(
                    (m.u - expect).abs() < 1e-12,
                    "x={x} t={t}: {} vs {expect}",
                    m.u
                );
            }
        }
    }

    #[test]
    fn constant_state_persists() {
        let datum = PiecewiseData::constant(0.0, 2.0, 0.8);
        let trace = BoundaryTrace::zero(1.0);
        let cfg = LaxConfig::default();
        // Interior point before the tail rarefaction arrives.
        let m = minimize_g(1.5, 0.5, &datum, &trace, &cfg, None).unwrap();
        assert!((m.u - 0.8).abs() < 1e-12);
    }

    #[test]
    fn minimizers_monotone_in_x() {
        let datum =
            PiecewiseData::from_segments(1.0, &[(0.2, 0.5, 1.0), (0.6, 0.9, 0.4)]).unwrap();
        let trace = BoundaryTrace::new(vec![0.0, 0.5, 1.0], vec![0.3, 0.5, 0.2]);
        let cfg = LaxConfig::default();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..=60 {
            let x = i as f64 / 60.0;
            let m = minimize_g(x, 0.6, &datum, &trace, &cfg, None).unwrap();
            assert!(m.y >= prev - 1e-9, "y not monotone at x={x}");
            prev = m.y;
        }
    }

    #[test]
    fn solve_edge_zero_everything() {
        let datum = PiecewiseData::constant(0.0, 1.0, 0.0);
        let trace = BoundaryTrace::zero(1.0);
        let (profiles, head) = solve_edge(
            0,
            1.0,
            &datum,
            &trace,
            &[0.5, 1.0],
            &uniform_xs(1.0, 16),
            1.0,
            &LaxConfig::default(),
        )
        .unwrap();
        for p in &profiles {
            assert!(p.us.iter().all(|&u| u.abs() < 1e-14));
        }
        assert!(head.values().iter().all(|&u| u.abs() < 1e-14));
    }

    #[test]
    fn p2_tree_solution_matches_closed_form() {
        let tree = path_graph(2, None).unwrap();
        let data = vec![
            PiecewiseData::constant(0.0, 1.0, 0.0),
            PiecewiseData::constant(0.0, 1.0, 1.0),
        ];
        let xs: Vec<Vec<f64>> = vec![uniform_xs(1.0, 64), uniform_xs(1.0, 64)];
        let sol = solve_tree(
            &tree,
            &data,
            &|_| TransmissionPolicy::minimal(),
            0.5,
            &[0.2, 0.5],
            &xs,
            &LaxConfig::default(),
        )
        .unwrap();
        for (k, &t) in [0.2, 0.5].iter().enumerate() {
            let p = &sol.profiles[k][1];
            for (&x, &u) in p.xs.iter().zip(&p.us) {
                if x == 0.0 {
                    continue;
                }
                let expect = (x / t).min(1.0);
                assert!((u - expect).abs() < 1e-10, "t={t} x={x}: {u} vs {expect}");
            }
            // Upstream edge stays zero.
            assert!(sol.profiles[k][0].us.iter().all(|&u| u.abs() < 1e-12));
        }
    }

    #[test]
    fn h3_split_traces_carry_the_equal_split() {
        let tree = honeycomb_star_first_kind(0, 0).unwrap();
        let a = 0.6;
        let data: Vec<PiecewiseData> = (0..3)
            .map(|j| {
                if j == 0 {
                    PiecewiseData::constant(0.0, 1.0, a)
                } else {
                    PiecewiseData::constant(0.0, 1.0, 1.0)
                }
            })
            .collect();
        let xs: Vec<Vec<f64>> = (0..3).map(|_| uniform_xs(1.0, 32)).collect();
        let sol = solve_tree(
            &tree,
            &data,
            &|_| TransmissionPolicy::minimal(),
            0.5,
            &[0.4],
            &xs,
            &LaxConfig::default(),
        )
        .unwrap();
        let expected = std::f64::consts::FRAC_1_SQRT_2 * a;
        for e in 1..3 {
            let trace = &sol.tail_traces[e];
            for (&t, &u) in trace.times().iter().zip(trace.values()) {
                if t > 0.0 && t < 0.5 {
                    assert!((u - expected).abs() < 1e-10, "t={t}: {u}");
                }
            }
        }
        // Kirchhoff along the coupled traces.
        let head = &sol.head_traces[0];
        for &t in head.times().iter().filter(|&&t| t > 0.0 && t < 0.5) {
            let s_in = head.value(t).powi(2);
            let s_out: f64 = (1..3).map(|e| sol.tail_traces[e].value(t).powi(2)).sum();
            assert!((s_in - s_out).abs() < 1e-8);
        }
    }

    #[test]
    fn unroll_p2_concatenates() {
        let tree = path_graph(2, None).unwrap();
        let data = vec![
            PiecewiseData::constant(0.0, 1.0, 0.0),
            PiecewiseData::constant(0.0, 1.0, 1.0),
        ];
        let u = path_unroll(&tree, &data, 1, &|_| TransmissionPolicy::minimal()).unwrap();
        assert_eq!(u.segments.len(), 2);
        assert_eq!(u.datum.lo(), -1.0);
        assert_eq!(u.datum.hi(), 1.0);
        assert_eq!(u.segments[0].scale, 1.0);
        assert!((u.datum.value(-0.5) - 0.0).abs() < 1e-15);
        assert!((u.datum.value(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unroll_scales_by_sqrt2_through_a_first_kind_vertex() {
        let tree = honeycomb_star_first_kind(0, 0).unwrap();
        let data: Vec<PiecewiseData> = (0..3)
            .map(|_| PiecewiseData::constant(0.0, 1.0, 0.5))
            .collect();
        let u = path_unroll(&tree, &data, 1, &|_| TransmissionPolicy::minimal()).unwrap();
        assert_eq!(u.segments.len(), 2);
        assert!((u.segments[0].scale - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((u.datum.value(-0.5) - 0.5 * std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn unroll_rejects_second_kind_upstream() {
        let tree = crate::graph::honeycomb_star_second_kind(0, 0).unwrap();
        let data: Vec<PiecewiseData> = (0..3)
            .map(|_| PiecewiseData::constant(0.0, 1.0, 0.5))
            .collect();
        let err = path_unroll(&tree, &data, 2, &|_| TransmissionPolicy::minimal()).unwrap_err();
        assert!(matches!(err, LaxError::NotUnrollable(_)));
    }

    #[test]
    fn unroll_zero_coefficient_under_maximal_routing() {
        let tree = honeycomb_star_first_kind(0, 0).unwrap();
        let data: Vec<PiecewiseData> = (0..3)
            .map(|_| PiecewiseData::constant(0.0, 1.0, 0.5))
            .collect();
        // The maximal policy routes everything to the lower-indexed
        // outgoing edge; unrolling the other one hits a zero coefficient.
        let err = path_unroll(&tree, &data, 2, &|_| {
            TransmissionPolicy::maximal(TieBreak::LowestIndex)
        })
        .unwrap_err();
        assert!(matches!(err, LaxError::ZeroCoefficient { .. }));
    }

    #[test]
    fn chain_solution_equals_unrolled_line_solution() {
        // P3 chain with step data: the network solution equals the 1-D
        // formula on the unrolled interval.
        let tree = path_graph(3, None).unwrap();
        let data = vec![
            PiecewiseData::from_segments(1.0, &[(0.4, 0.8, 0.9)]).unwrap(),
            PiecewiseData::constant(0.0, 1.0, 0.3),
            PiecewiseData::from_segments(1.0, &[(0.2, 0.5, 0.6)]).unwrap(),
        ];
        let t = 0.7;
        let xs: Vec<Vec<f64>> = (0..3).map(|_| uniform_xs(1.0, 40)).collect();
        let sol = solve_tree(
            &tree,
            &data,
            &|_| TransmissionPolicy::minimal(),
            t,
            &[t],
            &xs,
            &LaxConfig::default(),
        )
        .unwrap();
        for target in 0..3 {
            let unrolled =
                path_unroll(&tree, &data, target, &|_| TransmissionPolicy::minimal()).unwrap();
            let p = &sol.profiles[0][target];
            for (&x, &u) in p.xs.iter().zip(&p.us) {
                if x < 1e-9 {
                    continue;
                }
                // Agreement is limited by the sampled boundary-history
                // interpolation; the unrolled line solve is exact.
                let expect = solve_line(&unrolled.datum, x, t);
                assert!(
                    (u - expect).abs() < 1e-6,
                    "edge {target} x={x}: {u} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn oleinik_check_cases() {
        // Rarefaction x/t: the equality case, margin ~ 0.
        let t = 0.5;
        let xs: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let us: Vec<f64> = xs.iter().map(|&x| x / t).collect();
        let p = EdgeProfile {
            edge: 0,
            t,
            xs: xs.clone(),
            us,
        };
        let r = oleinik_check(&p, t, 1e-8);
        assert!(r.ok);
        assert!(r.worst_margin.abs() < 1e-12);

        // Admissible decreasing jump.
        let us: Vec<f64> = xs
            .iter()
            .map(|&x| if x < 0.5 { 1.0 } else { 0.0 })
            .collect();
        let p = EdgeProfile {
            edge: 0,
            t,
            xs: xs.clone(),
            us,
        };
        assert!(oleinik_check(&p, t, 1e-8).ok);

        // An increasing jump violates the one-sided inequality.
        let us: Vec<f64> = xs
            .iter()
            .map(|&x| if x < 0.5 { 0.0 } else { 1.0 })
            .collect();
        let p = EdgeProfile { edge: 0, t, xs, us };
        let r = oleinik_check(&p, t, 1e-8);
        assert!(!r.ok);
        assert!(r.worst_margin > 0.9);
    }

    #[test]
    fn boundary_trace_cum_flux_is_monotone() {
        let trace = BoundaryTrace::new(vec![0.0, 0.5, 1.0, 1.5], vec![1.0, 0.2, 0.8, 0.0]);
        assert_eq!(trace.cum_flux(0.0), 0.0);
        let mut prev = 0.0;
        for i in 0..=60 {
            let f = trace.cum_flux(1.5 * i as f64 / 60.0);
            assert!(f >= prev - 1e-15);
            prev = f;
        }
    }

    #[test]
    fn negative_data_rejected() {
        let tree = path_graph(1, None).unwrap();
        let data = vec![PiecewiseData::constant(0.0, 1.0, -0.5)];
        let err = solve_tree(
            &tree,
            &data,
            &|_| TransmissionPolicy::minimal(),
            1.0,
            &[1.0],
            &[uniform_xs(1.0, 8)],
            &LaxConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, LaxError::NegativeInput { .. }));
    }
}
