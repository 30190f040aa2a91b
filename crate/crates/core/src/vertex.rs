//! Vertex transmission solvers.
//!
//! At a vertex the solution values just before an interaction (`t-`) are
//! mapped to values just after (`t+`) while conserving the squared-velocity
//! flux (Kirchhoff). For non-negative traces the minimal and maximal
//! solvers are the two extremes of the vertex energy-change functional:
//! the minimal solver equalizes the outgoing values, the maximal solver
//! routes the whole flux to a single outgoing edge, tie-broken by edge
//! index (decreasing flow with respect to edge enumeration, lowest index
//! first by default).
//!
//! For traces of arbitrary sign the flow may run against the structural
//! direction of the vertex. [`solve_signed`] dispatches on the vertex class
//! and the sign pattern of the endpoint values: mass-entering edges on the
//! effective inflow side keep their values, non-entering inflow edges are
//! clamped to zero, and the effective outflow side receives the Kirchhoff
//! budget subject to per-edge domain floors (an outgoing edge whose own
//! mass is entering can be pushed back no further than its reflection
//! `-u(0,t-)`). Second-kind vertices (two in, one out) reuse the splitting
//! case table under the mirror `u -> -u` with all edge directions reversed.

use crate::graph::{VertexClass, VertexDirection, VertexKind};
use thiserror::Error;

/// Tolerance on squared sums when deciding the flow direction sign.
pub const EPS_FLOW: f64 = 1e-12;
/// Kirchhoff audit tolerance for the signed solver.
pub const EPS_KIRCHHOFF: f64 = 1e-10;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TransmissionError {
    #[error("negative input value {value} at edge {edge}; use the signed solver")]
    NegativeInput { edge: usize, value: f64 },
    #[error("vertex is a source or a sink; transmission is trivial there")]
    SourceOrSink,
    #[error("trace is missing a value (non-finite entry at edge {edge})")]
    MissingValue { edge: usize },
    #[error("fixed point iteration did not converge within {max_iter} steps (residual {residual})")]
    NoConvergence { max_iter: usize, residual: f64 },
    #[error("signed transmission at a general vertex (deg_in {deg_in}, deg_out {deg_out}) is unsupported")]
    UnsupportedVertexClass { deg_in: usize, deg_out: usize },
    #[error("explicit coefficient rows are infeasible: {0}")]
    ExplicitInfeasible(String),
    #[error("explicit coefficients cannot express this signed interaction ({0})")]
    ExplicitUnsupported(String),
}

/// Which endpoint of an edge sits at the vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeEnd {
    /// Incoming edge: the head, metric coordinate `x = l_j`.
    Head,
    /// Outgoing edge: the tail, metric coordinate `x = 0`.
    Tail,
}

/// Endpoint values of one edge at the vertex, before and after a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub edge: usize,
    pub side: EdgeEnd,
    pub before: f64,
    pub after: f64,
}

/// Per-edge endpoint values at a vertex: incoming edges (head side) first,
/// then outgoing edges (tail side), in the order of the direction lists.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexTrace {
    pub entries: Vec<TraceEntry>,
    deg_in: usize,
}

impl VertexTrace {
    pub fn new(direction: &VertexDirection, in_before: &[f64], out_before: &[f64]) -> Self {
        assert_eq!(direction.deg_in(), in_before.len());
        assert_eq!(direction.deg_out(), out_before.len());
        let mut entries = Vec::with_capacity(direction.deg());
        for (&edge, &v) in direction.in_edges.iter().zip(in_before) {
            entries.push(TraceEntry {
                edge,
                side: EdgeEnd::Head,
                before: v,
                after: v,
            });
        }
        for (&edge, &v) in direction.out_edges.iter().zip(out_before) {
            entries.push(TraceEntry {
                edge,
                side: EdgeEnd::Tail,
                before: v,
                after: v,
            });
        }
        VertexTrace {
            entries,
            deg_in: direction.deg_in(),
        }
    }

    pub fn in_entries(&self) -> &[TraceEntry] {
        &self.entries[..self.deg_in]
    }

    pub fn out_entries(&self) -> &[TraceEntry] {
        &self.entries[self.deg_in..]
    }

    pub fn in_after(&self) -> Vec<f64> {
        self.in_entries().iter().map(|e| e.after).collect()
    }

    pub fn out_after(&self) -> Vec<f64> {
        self.out_entries().iter().map(|e| e.after).collect()
    }

    fn set_in_after(&mut self, values: &[f64]) {
        for (e, &v) in self.entries[..self.deg_in].iter_mut().zip(values) {
            e.after = v;
        }
    }

    fn set_out_after(&mut self, values: &[f64]) {
        let deg_in = self.deg_in;
        for (e, &v) in self.entries[deg_in..].iter_mut().zip(values) {
            e.after = v;
        }
    }
}

/// Kirchhoff residual on the after-values:
/// `sum_in u^2(l_j)/2 - sum_out u^2(0)/2`.
pub fn kirchhoff_residual(trace: &VertexTrace) -> Result<f64, TransmissionError> {
    for e in &trace.entries {
        if !e.after.is_finite() {
            return Err(TransmissionError::MissingValue { edge: e.edge });
        }
    }
    let s_in: f64 = trace.in_entries().iter().map(|e| e.after * e.after).sum();
    let s_out: f64 = trace.out_entries().iter().map(|e| e.after * e.after).sum();
    Ok(0.5 * (s_in - s_out))
}

/// Flow direction of a vertex: sign of the squared-flux imbalance between
/// the mass-entering edges, and the effective in/out partition (swapped
/// when the flow runs against the structural direction).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDirection {
    pub sign: i8,
    pub effective_in: Vec<usize>,
    pub effective_out: Vec<usize>,
    /// Structural in-edges whose head value is >= 0 (mass entering).
    pub entering_in: Vec<bool>,
    /// Structural out-edges whose tail value is <= 0 (mass entering).
    pub entering_out: Vec<bool>,
}

/// Compute the entering sets and the flow sign. Entering squared sums are
/// compared with tolerance `eps_f`; within it the sign is 0 (no flow).
pub fn flow_direction(
    direction: &VertexDirection,
    in_before: &[f64],
    out_before: &[f64],
    eps_f: f64,
) -> FlowDirection {
    let entering_in: Vec<bool> = in_before.iter().map(|&u| u >= 0.0).collect();
    let entering_out: Vec<bool> = out_before.iter().map(|&u| u <= 0.0).collect();
    let s_in: f64 = in_before
        .iter()
        .zip(&entering_in)
        .filter(|(_, &e)| e)
        .map(|(&u, _)| u * u)
        .sum();
    let s_out: f64 = out_before
        .iter()
        .zip(&entering_out)
        .filter(|(_, &e)| e)
        .map(|(&u, _)| u * u)
        .sum();
    let sign = if s_in > s_out + eps_f {
        1
    } else if s_out > s_in + eps_f {
        -1
    } else {
        0
    };
    let (effective_in, effective_out) = if sign < 0 {
        (direction.out_edges.clone(), direction.in_edges.clone())
    } else {
        (direction.in_edges.clone(), direction.out_edges.clone())
    };
    FlowDirection {
        sign,
        effective_in,
        effective_out,
        entering_in,
        entering_out,
    }
}

fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Energy change on one edge across the interaction. `incoming` selects the
/// effective-inflow orientation of the flux and jump terms; `gate` is the
/// flow-direction sign inside the Heaviside argument (1 in non-negative
/// mode).
fn edge_energy(before: f64, after: f64, incoming: bool, gate: f64) -> f64 {
    let (hi, lo) = if incoming { (before, after) } else { (after, before) };
    let cubic = (hi * hi * hi - lo * lo * lo) / 3.0;
    let jump = hi - lo;
    cubic - jump * jump * jump / 12.0 * heaviside(gate * jump)
}

/// Vertex energy-change functional on a completed trace.
///
/// Effective-inflow terms vanish whenever the value is kept across the
/// interaction; effective-outflow edges contribute the flux change plus
/// the cubic dissipation of an entering shock. In signed mode the whole
/// sum and the Heaviside gates carry the flow-direction sign.
pub fn vertex_energy_change(trace: &VertexTrace, flow: &FlowDirection) -> f64 {
    let gate = if flow.sign == 0 { 1.0 } else { flow.sign as f64 };
    let mut total = 0.0;
    for e in &trace.entries {
        let structurally_in = matches!(e.side, EdgeEnd::Head);
        let effective_in = if flow.sign < 0 {
            !structurally_in
        } else {
            structurally_in
        };
        total += edge_energy(e.before, e.after, effective_in, gate);
    }
    gate * total
}

/// Solver selection per vertex.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverKind {
    Minimal,
    Maximal,
    /// Rows indexed `[out local][in local]`, all entries non-negative;
    /// outgoing values are produced as `row . in_values` and validated
    /// against Kirchhoff at solve time.
    ExplicitCoefficients(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Decreasing flow with respect to edge enumeration: the full flux
    /// goes to the lowest-numbered outgoing edge.
    #[default]
    LowestIndex,
    /// The printed max-index variant, kept behind this switch.
    HighestIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionPolicy {
    pub kind: SolverKind,
    pub tie_break: TieBreak,
}

impl TransmissionPolicy {
    pub fn minimal() -> Self {
        TransmissionPolicy {
            kind: SolverKind::Minimal,
            tie_break: TieBreak::default(),
        }
    }

    pub fn maximal(tie_break: TieBreak) -> Self {
        TransmissionPolicy {
            kind: SolverKind::Maximal,
            tie_break,
        }
    }

    pub fn explicit(rows: Vec<Vec<f64>>) -> Result<Self, TransmissionError> {
        for row in &rows {
            for &c in row {
                if !(c >= 0.0) || !c.is_finite() {
                    return Err(TransmissionError::ExplicitInfeasible(format!(
                        "coefficient {c} is negative or non-finite"
                    )));
                }
            }
        }
        Ok(TransmissionPolicy {
            kind: SolverKind::ExplicitCoefficients(rows),
            tie_break: TieBreak::default(),
        })
    }
}

fn check_non_negative(values: &[f64], edges: &[usize]) -> Result<(), TransmissionError> {
    for (&v, &edge) in values.iter().zip(edges) {
        if !v.is_finite() {
            return Err(TransmissionError::MissingValue { edge });
        }
        if v < 0.0 {
            return Err(TransmissionError::NegativeInput { edge, value: v });
        }
    }
    Ok(())
}

fn require_interior(direction: &VertexDirection) -> Result<(), TransmissionError> {
    if direction.deg_in() == 0 || direction.deg_out() == 0 {
        return Err(TransmissionError::SourceOrSink);
    }
    Ok(())
}

/// Minimal transmission solver for non-negative traces: incoming values
/// are kept, every outgoing edge receives `sqrt(sum_in u^2 / deg_out)`.
pub fn solve_minimal(
    direction: &VertexDirection,
    in_before: &[f64],
    out_before: &[f64],
) -> Result<VertexTrace, TransmissionError> {
    require_interior(direction)?;
    check_non_negative(in_before, &direction.in_edges)?;
    check_non_negative(out_before, &direction.out_edges)?;
    let s: f64 = in_before.iter().map(|u| u * u).sum();
    let out = (s / direction.deg_out() as f64).sqrt();
    let mut trace = VertexTrace::new(direction, in_before, out_before);
    trace.set_out_after(&vec![out; direction.deg_out()]);
    Ok(trace)
}

/// Maximal transmission solver for non-negative traces: incoming values
/// are kept, the tie-break-selected outgoing edge receives the full
/// `sqrt(sum_in u^2)`, all other outgoing edges receive 0.
pub fn solve_maximal(
    direction: &VertexDirection,
    in_before: &[f64],
    out_before: &[f64],
    tie_break: TieBreak,
) -> Result<VertexTrace, TransmissionError> {
    require_interior(direction)?;
    check_non_negative(in_before, &direction.in_edges)?;
    check_non_negative(out_before, &direction.out_edges)?;
    let s: f64 = in_before.iter().map(|u| u * u).sum();
    let chosen = preferred_local_index(&direction.out_edges, tie_break);
    let mut out = vec![0.0; direction.deg_out()];
    out[chosen] = s.sqrt();
    let mut trace = VertexTrace::new(direction, in_before, out_before);
    trace.set_out_after(&out);
    Ok(trace)
}

fn preferred_local_index(out_edges: &[usize], tie_break: TieBreak) -> usize {
    let mut best = 0;
    for (local, &edge) in out_edges.iter().enumerate() {
        let better = match tie_break {
            TieBreak::LowestIndex => edge < out_edges[best],
            TieBreak::HighestIndex => edge > out_edges[best],
        };
        if better {
            best = local;
        }
    }
    best
}

/// Apply explicit coefficient rows and validate Kirchhoff feasibility.
/// Infeasible rows are an error, never silently renormalized.
pub fn solve_explicit(
    direction: &VertexDirection,
    in_before: &[f64],
    out_before: &[f64],
    rows: &[Vec<f64>],
) -> Result<VertexTrace, TransmissionError> {
    require_interior(direction)?;
    check_non_negative(in_before, &direction.in_edges)?;
    if rows.len() != direction.deg_out() || rows.iter().any(|r| r.len() != direction.deg_in()) {
        return Err(TransmissionError::ExplicitInfeasible(format!(
            "need {} rows of {} coefficients",
            direction.deg_out(),
            direction.deg_in()
        )));
    }
    let out: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().zip(in_before).map(|(c, u)| c * u).sum())
        .collect();
    let s_in: f64 = in_before.iter().map(|u| u * u).sum();
    let s_out: f64 = out.iter().map(|u| u * u).sum();
    if (s_in - s_out).abs() > 1e-9 * s_in.max(1.0) {
        return Err(TransmissionError::ExplicitInfeasible(format!(
            "rows map squared flux {s_in} to {s_out}; Kirchhoff violated"
        )));
    }
    let mut trace = VertexTrace::new(direction, in_before, out_before);
    trace.set_out_after(&out);
    Ok(trace)
}

/// Dispatch on the policy kind (non-negative mode).
pub fn solve_policy(
    direction: &VertexDirection,
    in_before: &[f64],
    out_before: &[f64],
    policy: &TransmissionPolicy,
) -> Result<VertexTrace, TransmissionError> {
    match &policy.kind {
        SolverKind::Minimal => solve_minimal(direction, in_before, out_before),
        SolverKind::Maximal => solve_maximal(direction, in_before, out_before, policy.tie_break),
        SolverKind::ExplicitCoefficients(rows) => {
            solve_explicit(direction, in_before, out_before, rows)
        }
    }
}

/// Coupling coefficient rows `b[out local][in local]` reproducing the
/// chosen solver: `b_js = TS_j(u) u_s / sum_k u_k^2`, so that
/// `row . in_values` equals the solver output on `values_before`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingCoefficients {
    pub rows: Vec<Vec<f64>>,
    /// All incoming values were zero: rows are zero by convention.
    pub zero_inflow: bool,
}

pub fn coupling_coefficients(
    direction: &VertexDirection,
    in_before: &[f64],
    policy: &TransmissionPolicy,
) -> Result<CouplingCoefficients, TransmissionError> {
    require_interior(direction)?;
    check_non_negative(in_before, &direction.in_edges)?;
    let s: f64 = in_before.iter().map(|u| u * u).sum();
    if s == 0.0 {
        return Ok(CouplingCoefficients {
            rows: vec![vec![0.0; direction.deg_in()]; direction.deg_out()],
            zero_inflow: true,
        });
    }
    let out_before = vec![0.0; direction.deg_out()];
    let trace = solve_policy(direction, in_before, &out_before, policy)?;
    let rows = trace
        .out_after()
        .iter()
        .map(|&o| in_before.iter().map(|&u| o * u / s).collect())
        .collect();
    Ok(CouplingCoefficients {
        rows,
        zero_inflow: false,
    })
}

/// Iterate a one-step redistribution of the outgoing squared values until
/// it stabilizes, starting from the `t-` outgoing values; the limit must
/// agree with the closed-form minimal/maximal solver output within `eps`.
///
/// Each minimal step moves a quarter of the squared gap from the largest
/// to the smallest outgoing value (the pairwise energy-decreasing move);
/// each maximal step moves half of the largest non-preferred squared value
/// onto the preferred edge. Both conserve the Kirchhoff budget exactly.
pub fn fixed_point_solver(
    direction: &VertexDirection,
    in_before: &[f64],
    out_before: &[f64],
    policy: &TransmissionPolicy,
    max_iter: usize,
    eps: f64,
) -> Result<VertexTrace, TransmissionError> {
    require_interior(direction)?;
    check_non_negative(in_before, &direction.in_edges)?;
    check_non_negative(out_before, &direction.out_edges)?;
    if matches!(policy.kind, SolverKind::ExplicitCoefficients(_)) {
        return Err(TransmissionError::ExplicitUnsupported(
            "fixed point iteration applies to the minimal and maximal solvers".into(),
        ));
    }
    let s: f64 = in_before.iter().map(|u| u * u).sum();
    let n_out = direction.deg_out();

    // Project the t- outgoing squared values onto the Kirchhoff budget.
    let s_out: f64 = out_before.iter().map(|u| u * u).sum();
    let mut f: Vec<f64> = if s == 0.0 {
        vec![0.0; n_out]
    } else if s_out > 0.0 {
        out_before.iter().map(|u| u * u * s / s_out).collect()
    } else {
        // Nothing to redistribute from; seed uniformly.
        vec![s / n_out as f64; n_out]
    };

    let preferred = preferred_local_index(&direction.out_edges, policy.tie_break);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let prev: Vec<f64> = f.iter().map(|x| x.sqrt()).collect();
        match policy.kind {
            SolverKind::Minimal => {
                let (mut hi, mut lo) = (0, 0);
                for i in 0..n_out {
                    if f[i] > f[hi] {
                        hi = i;
                    }
                    if f[i] < f[lo] {
                        lo = i;
                    }
                }
                let delta = (f[hi] - f[lo]) / 4.0;
                f[hi] -= delta;
                f[lo] += delta;
            }
            SolverKind::Maximal => {
                let mut donor: Option<usize> = None;
                for i in 0..n_out {
                    if i != preferred && f[i] > 0.0 && donor.is_none_or(|d| f[i] > f[d]) {
                        donor = Some(i);
                    }
                }
                if let Some(d) = donor {
                    let delta = f[d] / 2.0;
                    f[d] -= delta;
                    f[preferred] += delta;
                }
            }
            SolverKind::ExplicitCoefficients(_) => unreachable!(),
        }
        residual = f
            .iter()
            .zip(&prev)
            .map(|(x, p)| (x.sqrt() - p).abs())
            .fold(0.0, f64::max);
        if residual < eps {
            break;
        }
    }
    if residual >= eps {
        return Err(TransmissionError::NoConvergence { max_iter, residual });
    }
    let out: Vec<f64> = f.iter().map(|x| x.sqrt()).collect();

    // The limit must agree with the closed form.
    let closed = solve_policy(direction, in_before, out_before, policy)?;
    for (a, b) in out.iter().zip(closed.out_after()) {
        if (a - b).abs() > eps.max(1e-9) * (1.0 + b.abs()) {
            return Err(TransmissionError::NoConvergence {
                max_iter,
                residual: (a - b).abs(),
            });
        }
    }
    let mut trace = VertexTrace::new(direction, in_before, out_before);
    trace.set_out_after(&out);
    Ok(trace)
}

/// Which branch of the signed dispatch produced a trace. Reflection
/// branches launch a new outgoing wave, so re-solving their output state
/// legitimately re-splits the forward flux; every other branch output is
/// a fixed point of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignedBranch {
    /// Source or sink endpoint clamped to zero.
    Boundary,
    /// No mass enters the vertex; every endpoint value is released to 0.
    AllOutward,
    /// Entering squared sums balance within tolerance; values frozen.
    Frozen,
    /// Flow along the effective direction, no domain floor active.
    Forward,
    /// Flow along the effective direction with a counter-wave reflected
    /// at its domain floor.
    ForwardReflected,
    /// Flow against the structural direction: entering values kept, the
    /// far side receives the (negated) merged flux.
    Reverse,
}

impl SignedBranch {
    pub fn is_reflection(self) -> bool {
        matches!(self, SignedBranch::ForwardReflected)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedSolve {
    pub trace: VertexTrace,
    pub branch: SignedBranch,
    pub flow: FlowDirection,
}

/// Signed transmission at a vertex of class source, sink, path, first or
/// second kind. General vertices are rejected.
pub fn solve_signed(
    class: VertexClass,
    direction: &VertexDirection,
    in_before: &[f64],
    out_before: &[f64],
    policy: &TransmissionPolicy,
) -> Result<SignedSolve, TransmissionError> {
    for (&v, &edge) in in_before
        .iter()
        .zip(&direction.in_edges)
        .chain(out_before.iter().zip(&direction.out_edges))
    {
        if !v.is_finite() {
            return Err(TransmissionError::MissingValue { edge });
        }
    }
    match class.kind {
        VertexKind::General => Err(TransmissionError::UnsupportedVertexClass {
            deg_in: class.deg_in,
            deg_out: class.deg_out,
        }),
        VertexKind::Source | VertexKind::Sink => {
            let mut trace = VertexTrace::new(direction, in_before, out_before);
            trace.set_in_after(&vec![0.0; direction.deg_in()]);
            trace.set_out_after(&vec![0.0; direction.deg_out()]);
            Ok(SignedSolve {
                trace,
                branch: SignedBranch::Boundary,
                flow: flow_direction(direction, in_before, out_before, EPS_FLOW),
            })
        }
        VertexKind::PathVertex | VertexKind::FirstKind => {
            signed_split(direction, in_before[0], out_before, policy)
        }
        VertexKind::SecondKind => {
            // Mirror: reverse all directions and negate. The single
            // outgoing edge plays the incoming role of the split table.
            let mirror_dir = VertexDirection {
                in_edges: direction.out_edges.clone(),
                out_edges: direction.in_edges.clone(),
            };
            let m_in = -out_before[0];
            let m_out: Vec<f64> = in_before.iter().map(|&u| -u).collect();
            let solved = signed_split(&mirror_dir, m_in, &m_out, policy)?;
            let mut trace = VertexTrace::new(direction, in_before, out_before);
            let outs: Vec<f64> = solved.trace.in_after().iter().map(|&u| -u).collect();
            let ins: Vec<f64> = solved.trace.out_after().iter().map(|&u| -u).collect();
            trace.set_out_after(&outs);
            trace.set_in_after(&ins);
            Ok(SignedSolve {
                trace,
                branch: solved.branch,
                flow: flow_direction(direction, in_before, out_before, EPS_FLOW),
            })
        }
    }
}

/// Signed case dispatch for the splitting structure: one incoming edge
/// (value at its head) and one or two outgoing edges (values at their
/// tails). Path vertices are the single-outgoing special case.
fn signed_split(
    direction: &VertexDirection,
    in_value: f64,
    out_before: &[f64],
    policy: &TransmissionPolicy,
) -> Result<SignedSolve, TransmissionError> {
    let flow = flow_direction(direction, &[in_value], out_before, EPS_FLOW);
    let mut trace = VertexTrace::new(direction, &[in_value], out_before);
    let n = out_before.len();

    // Zero-valued endpoints carry no mass; only strict signs count here.
    let any_mass_entering = in_value > 0.0 || out_before.iter().any(|&u| u < 0.0);
    if !any_mass_entering {
        // The vertex drains like a source: every endpoint is released to 0.
        let all_zero = in_value == 0.0 && out_before.iter().all(|&u| u == 0.0);
        trace.set_in_after(&[0.0]);
        trace.set_out_after(&vec![0.0; n]);
        return Ok(SignedSolve {
            trace,
            branch: if all_zero {
                SignedBranch::Frozen
            } else {
                SignedBranch::AllOutward
            },
            flow,
        });
    }

    match flow.sign {
        0 => Ok(SignedSolve {
            // Balanced tie: no flow through the vertex, values frozen.
            trace,
            branch: SignedBranch::Frozen,
            flow,
        }),
        1 => {
            // Flow along the structural direction. The incoming edge keeps
            // its value; each outgoing edge receives its share of the
            // Kirchhoff budget, floored at the reflection of its own
            // entering mass (`-u(0,t-)`, or 0 when none enters).
            let budget = in_value * in_value;
            let floors: Vec<f64> = out_before
                .iter()
                .map(|&u| if u < 0.0 { -u } else { 0.0 })
                .collect();
            let (out_after, reflected) = match &policy.kind {
                SolverKind::Minimal => split_minimal(budget, &floors),
                SolverKind::Maximal => {
                    let preferred = preferred_local_index(&direction.out_edges, policy.tie_break);
                    split_maximal(budget, &floors, preferred)
                }
                SolverKind::ExplicitCoefficients(rows) => {
                    if floors.iter().any(|&fl| fl > 0.0) {
                        return Err(TransmissionError::ExplicitUnsupported(
                            "a counter-wave must be reflected; fixed rows cannot do that".into(),
                        ));
                    }
                    let t = solve_explicit(direction, &[in_value], out_before, rows)?;
                    (t.out_after(), false)
                }
            };
            trace.set_out_after(&out_after);
            Ok(SignedSolve {
                trace,
                branch: if reflected {
                    SignedBranch::ForwardReflected
                } else {
                    SignedBranch::Forward
                },
                flow,
            })
        }
        _ => {
            // Flow against the structural direction: entering outgoing
            // edges keep their values, non-entering ones are clamped to
            // zero, and the incoming edge receives the negated merge of
            // the entering flux (a reverse shock moving upstream).
            let mut merged = 0.0;
            let mut out_after = Vec::with_capacity(n);
            for &u in out_before {
                if u < 0.0 {
                    merged += u * u;
                    out_after.push(u);
                } else {
                    out_after.push(0.0);
                }
            }
            trace.set_out_after(&out_after);
            trace.set_in_after(&[-merged.sqrt()]);
            Ok(SignedSolve {
                trace,
                branch: SignedBranch::Reverse,
                flow,
            })
        }
    }
}

/// Equal split of the squared budget subject to the per-edge floors.
/// Floored edges absorb their reflection; the rest share the remainder
/// equally. The flow-direction inequality guarantees feasibility.
fn split_minimal(budget: f64, floors: &[f64]) -> (Vec<f64>, bool) {
    let n = floors.len();
    let mut clamped = vec![false; n];
    loop {
        let taken: f64 = floors
            .iter()
            .zip(&clamped)
            .filter(|(_, &c)| c)
            .map(|(&fl, _)| fl * fl)
            .sum();
        let free = clamped.iter().filter(|&&c| !c).count();
        if free == 0 {
            break;
        }
        let share = ((budget - taken).max(0.0) / free as f64).sqrt();
        let mut newly = false;
        for i in 0..n {
            if !clamped[i] && floors[i] > share {
                clamped[i] = true;
                newly = true;
            }
        }
        if !newly {
            let out: Vec<f64> = (0..n)
                .map(|i| if clamped[i] { floors[i] } else { share })
                .collect();
            let reflected = (0..n).any(|i| clamped[i] && floors[i] > 0.0);
            return (out, reflected);
        }
    }
    (floors.to_vec(), floors.iter().any(|&fl| fl > 0.0))
}

/// Route the squared budget to the preferred edge, clamping every other
/// edge at its floor.
fn split_maximal(budget: f64, floors: &[f64], preferred: usize) -> (Vec<f64>, bool) {
    let taken: f64 = floors
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != preferred)
        .map(|(_, &fl)| fl * fl)
        .sum();
    let mut out = floors.to_vec();
    out[preferred] = (budget - taken).max(0.0).sqrt();
    let reflected = floors
        .iter()
        .enumerate()
        .any(|(i, &fl)| i != preferred && fl > 0.0);
    (out, reflected)
}
