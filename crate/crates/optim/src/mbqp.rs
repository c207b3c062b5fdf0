use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::error::QpError;
use crate::ipm::{solve_validated, QpOptions};
use crate::problem::{QpProblem, Solution, Status};
use crate::INTEGER_GAP_TOL;

/// A convex QP in which some variables are restricted to `{0, 1}`.
///
/// Linking constraints (a binary upper-bounding a continuous variable) are
/// ordinary rows of the underlying QP.
#[derive(Debug, Clone)]
pub struct MbqpProblem {
    qp: QpProblem,
    binaries: Vec<usize>,
}

impl MbqpProblem {
    /// Binary variables keep their bounds intersected with `[0, 1]`; a bound
    /// outside that range is an error.
    pub fn new(mut qp: QpProblem, binaries: Vec<usize>) -> Result<Self, QpError> {
        let n = qp.num_vars();
        let (lower, upper) = qp.bounds_mut();
        for &j in &binaries {
            if j >= n {
                return Err(QpError::IndexOutOfRange { index: j, n });
            }
            let lo = lower[j].max(0.0);
            let hi = upper[j].min(1.0);
            if lo > 1.0 || hi < 0.0 || (lo > 0.0 && lo < 1.0) || (hi > 0.0 && hi < 1.0) {
                return Err(QpError::BinaryBounds { index: j });
            }
            lower[j] = lo;
            upper[j] = hi;
        }
        let mut binaries = binaries;
        binaries.sort_unstable();
        binaries.dedup();
        Ok(Self { qp, binaries })
    }

    pub fn relaxation(&self) -> &QpProblem {
        &self.qp
    }

    pub fn binaries(&self) -> &[usize] {
        &self.binaries
    }
}

/// Interchangeable blocks of variables.
///
/// Every block has the same length and position `k` of one block plays the
/// role of position `k` in every other. The caller guarantees that permuting
/// whole blocks maps the original problem onto itself; per-block bound
/// differences (such as symmetry-breaking restrictions) are respected
/// automatically, since only blocks with identical bounds at a node are
/// treated as equivalent there.
#[derive(Debug, Clone)]
pub struct SymmetryGroup {
    pub blocks: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct MbqpOptions {
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    pub symmetry: Vec<SymmetryGroup>,
    /// Absolute gap at which the search stops.
    pub gap_tol: f64,
    /// Integer-feasibility tolerance on binaries in a relaxation.
    pub int_tol: f64,
    /// Optional starting point; only its binary entries are used.
    pub incumbent: Option<Vec<f64>>,
    pub qp: QpOptions,
}

impl Default for MbqpOptions {
    fn default() -> Self {
        Self {
            node_limit: 100_000,
            time_limit: None,
            symmetry: Vec::new(),
            gap_tol: INTEGER_GAP_TOL,
            int_tol: 1e-6,
            incumbent: None,
            qp: QpOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MbqpSolution {
    /// Best integer-feasible point; its KKT residuals are those of the QP with
    /// all binaries fixed at their values.
    pub solution: Solution,
    /// Proven lower bound on the integer optimum.
    pub bound: f64,
    pub root_bound: f64,
    /// `objective - bound`, or infinity without an incumbent.
    pub gap: f64,
    pub nodes: usize,
    /// `(node, objective)` each time the incumbent improved.
    pub incumbent_trace: Vec<(usize, f64)>,
}

struct Node {
    bound: f64,
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Reversed so the max-heap pops the smallest bound, then the oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    prob: &'a MbqpProblem,
    opts: &'a MbqpOptions,
    incumbent: Option<Solution>,
    trace: Vec<(usize, f64)>,
    work: QpProblem,
}

impl Search<'_> {
    fn solve_with(&mut self, lower: &[f64], upper: &[f64]) -> Solution {
        let (lo, hi) = self.work.bounds_mut();
        lo.copy_from_slice(lower);
        hi.copy_from_slice(upper);
        solve_validated(&self.work, &self.opts.qp)
    }

    /// Fixes every binary to the rounding of `x` and solves the remaining QP.
    fn try_rounding(&mut self, x: &[f64], lower: &[f64], upper: &[f64], node: usize) {
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        for &j in &self.prob.binaries {
            let v: f64 = if x[j] >= 0.5 { 1.0 } else { 0.0 };
            let v = v.clamp(lower[j], upper[j]);
            lo[j] = v;
            hi[j] = v;
        }
        let sol = self.solve_with(&lo, &hi);
        if sol.status != Status::Optimal {
            return;
        }
        let better = match &self.incumbent {
            Some(inc) => sol.objective < inc.objective - 1e-12 * (1.0 + inc.objective.abs()),
            None => true,
        };
        if better {
            self.trace.push((node, sol.objective));
            self.incumbent = Some(sol);
        }
    }

    fn cutoff(&self) -> f64 {
        self.incumbent
            .as_ref()
            .map_or(f64::INFINITY, |s| s.objective - self.opts.gap_tol)
    }

    /// Variables that are interchangeable with `j` at a node with the given
    /// bounds, `j` included.
    fn orbit(&self, j: usize, lower: &[f64], upper: &[f64]) -> Vec<usize> {
        let same = |a: &[usize], b: &[usize]| {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|(&p, &q)| lower[p] == lower[q] && upper[p] == upper[q])
        };
        let mut orbit = vec![j];
        for group in &self.opts.symmetry {
            for (bi, block) in group.blocks.iter().enumerate() {
                let Some(k) = block.iter().position(|&v| v == j) else {
                    continue;
                };
                for (ci, other) in group.blocks.iter().enumerate() {
                    if ci != bi && other.len() > k && same(block, other) {
                        orbit.push(other[k]);
                    }
                }
            }
        }
        orbit.sort_unstable();
        orbit.dedup();
        orbit
    }
}

/// Best-first branch-and-bound over the binaries of `prob`.
///
/// Branches on the most fractional binary (ties to the lowest index). When the
/// branching variable lies in a declared symmetry group, the down branch fixes
/// its whole orbit at zero.
pub fn solve_mbqp(prob: &MbqpProblem, opts: &MbqpOptions) -> Result<MbqpSolution, QpError> {
    let qp = &prob.qp;
    qp.validate()?;
    if opts.qp.check_convexity {
        qp.check_convex()?;
    }
    let n = qp.num_vars();
    if let Some(x) = &opts.incumbent {
        if x.len() != n {
            return Err(QpError::IncumbentLength { got: x.len(), expected: n });
        }
    }
    let start = Instant::now();
    let mut search = Search {
        prob,
        opts,
        incumbent: None,
        trace: Vec::new(),
        work: qp.clone(),
    };
    if let Some(x) = &opts.incumbent {
        search.try_rounding(x, qp.lower(), qp.upper(), 0);
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        id: 0,
        lower: qp.lower().to_vec(),
        upper: qp.upper().to_vec(),
    });
    let mut next_id = 1;
    let mut nodes = 0;
    let mut root_bound = f64::NEG_INFINITY;
    let mut status = None;
    let mut bound = f64::NEG_INFINITY;

    while let Some(node) = heap.pop() {
        if node.bound >= search.cutoff() {
            continue;
        }
        if nodes >= opts.node_limit {
            heap.push(node);
            status = Some(Status::IterationLimit);
            break;
        }
        if opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
            heap.push(node);
            status = Some(Status::TimeLimit);
            break;
        }
        let id = nodes;
        nodes += 1;
        let relax = search.solve_with(&node.lower, &node.upper);
        if relax.status == Status::Infeasible {
            continue;
        }
        // An unconverged relaxation gives no valid bound; keep the parent's.
        let node_bound = if relax.status == Status::Optimal {
            relax.objective.max(node.bound)
        } else {
            node.bound
        };
        if id == 0 {
            root_bound = node_bound;
        }
        if node_bound >= search.cutoff() {
            continue;
        }
        let x = &relax.x;
        let mut branch = None;
        let mut best_frac = opts.int_tol;
        for &j in &prob.binaries {
            let frac = x[j].min(1.0 - x[j]);
            if frac > best_frac {
                best_frac = frac;
                branch = Some(j);
            }
        }
        let Some(j) = branch else {
            search.try_rounding(x, &node.lower, &node.upper, id);
            continue;
        };
        if id % 16 == 0 {
            let x = x.clone();
            search.try_rounding(&x, &node.lower, &node.upper, id);
            if node_bound >= search.cutoff() {
                continue;
            }
        }

        let mut up_lower = node.lower.clone();
        up_lower[j] = 1.0;
        heap.push(Node { bound: node_bound, id: next_id, lower: up_lower, upper: node.upper.clone() });
        next_id += 1;
        let mut down_upper = node.upper.clone();
        for v in search.orbit(j, &node.lower, &node.upper) {
            down_upper[v] = 0.0;
        }
        heap.push(Node { bound: node_bound, id: next_id, lower: node.lower, upper: down_upper });
        next_id += 1;
    }

    let open_bound = heap.iter().map(|nd| nd.bound).fold(f64::INFINITY, f64::min);
    let trace = search.trace;
    let (solution, gap) = match search.incumbent {
        Some(mut sol) => {
            bound = bound.max(open_bound.min(sol.objective));
            let gap = (sol.objective - bound).max(0.0);
            sol.status = match status {
                Some(s) if gap > opts.gap_tol => s,
                _ => Status::Optimal,
            };
            (sol, gap)
        }
        None => {
            let mut sol = Solution::infeasible(n, qp.num_rows(), 0);
            if let Some(s) = status {
                sol.status = s;
                bound = open_bound;
            } else {
                bound = f64::INFINITY;
            }
            (sol, f64::INFINITY)
        }
    };
    Ok(MbqpSolution { solution, bound, root_bound, gap, nodes, incumbent_trace: trace })
}
