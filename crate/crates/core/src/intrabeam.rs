//! Step two: assigning the users of one beam to its carriers and sharing each
//! carrier in time.
//!
//! Rates are normalized by the carrier bandwidth, so user `n` served a time
//! fraction `f_n` gets `c_n f_n` with `c_n` its spectral efficiency, against a
//! demand `d_n`. The scheduler minimizes `sum_n (c_n f_n)^2 - 2 d_n c_n f_n`.

use std::time::Duration;

use beamflex_optim::{
    solve_mbqp, solve_qp, MbqpOptions, MbqpProblem, QpError, QpOptions, QpProblem, Status, SymmetryGroup,
};

#[derive(Debug, Clone, PartialEq)]
pub struct BeamSchedulingInstance {
    /// Spectral efficiency per user, bits/s/Hz, equal on every carrier.
    pub efficiency: Vec<f64>,
    /// Demanded rate per user, bps.
    pub demand: Vec<f64>,
    pub carriers: usize,
    pub carrier_bw: f64,
}

impl BeamSchedulingInstance {
    pub fn users(&self) -> usize {
        self.efficiency.len()
    }

    fn normalized_demand(&self) -> Vec<f64> {
        self.demand.iter().map(|d| d / self.carrier_bw).collect()
    }

    /// Objective of per-user total time fractions `f`.
    pub fn objective_of(&self, f: &[f64]) -> f64 {
        let d = self.normalized_demand();
        f.iter()
            .zip(&self.efficiency)
            .zip(&d)
            .map(|((&f, &c), &d)| (c * f) * (c * f) - 2.0 * d * c * f)
            .sum()
    }
}

/// Time fractions per carrier and user, with at most one carrier per user.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierSchedule {
    /// `fractions[c][n]`.
    pub fractions: Vec<Vec<f64>>,
    pub assignment: Vec<Option<usize>>,
}

impl CarrierSchedule {
    pub fn empty(carriers: usize, users: usize) -> Self {
        Self { fractions: vec![vec![0.0; users]; carriers], assignment: vec![None; users] }
    }

    pub fn user_fractions(&self) -> Vec<f64> {
        self.assignment
            .iter()
            .enumerate()
            .map(|(n, a)| a.map_or(0.0, |c| self.fractions[c][n]))
            .collect()
    }

    pub fn offered(&self, inst: &BeamSchedulingInstance) -> Vec<f64> {
        self.user_fractions()
            .iter()
            .zip(&inst.efficiency)
            .map(|(f, c)| f * c * inst.carrier_bw)
            .collect()
    }

    pub fn objective(&self, inst: &BeamSchedulingInstance) -> f64 {
        inst.objective_of(&self.user_fractions())
    }

    /// Largest violation of the per-carrier time budget or of the
    /// single-carrier rule.
    pub fn violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, row) in self.fractions.iter().enumerate() {
            worst = worst.max(row.iter().sum::<f64>() - 1.0);
            for (n, &v) in row.iter().enumerate() {
                worst = worst.max(-v);
                if self.assignment[n] != Some(c) {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct SchedulerOptions {
    /// Beams whose scheduling program has more binaries than this (after
    /// symmetry breaking) are scheduled by the packing heuristic.
    pub max_binaries: usize,
    /// Beams with at most this many users are solved by exact enumeration of
    /// user partitions (`M 3^N` work) instead of branch-and-bound.
    pub enumerate_users: usize,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
}

impl Default for SchedulerOptions {
    fn default() -> Self {
        Self { max_binaries: 48, enumerate_users: 14, node_limit: 2000, time_limit: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMethod {
    Trivial,
    Enumeration,
    BranchAndBound,
    Heuristic,
}

#[derive(Debug, Clone)]
pub struct ScheduleOutcome {
    pub schedule: CarrierSchedule,
    pub objective: f64,
    /// Proven lower bound on the optimal objective.
    pub bound: f64,
    /// `(objective - bound) / |bound|`, 0 when proven optimal.
    pub gap: f64,
    pub method: ScheduleMethod,
    pub nodes: usize,
}

fn relative_gap(obj: f64, bound: f64) -> f64 {
    let diff = (obj - bound).max(0.0);
    if diff <= 1e-12 * (1.0 + obj.abs()) {
        0.0
    } else {
        diff / bound.abs().max(1e-12)
    }
}

/// Optimal time fractions of one carrier shared by users with efficiencies
/// `c` and demands `d` (normalized): `f_n = clamp(d_n / c_n - lam / (2 c_n^2),
/// 0, 1)` with `lam >= 0` chosen so that the fractions fit, found exactly by
/// scanning the breakpoints of the piecewise-linear total.
pub fn water_fill(c: &[f64], d: &[f64], capacity: f64) -> Vec<f64> {
    let target: Vec<f64> = c.iter().zip(d).map(|(&c, &d)| d / c).collect();
    let at = |lam: f64| -> Vec<f64> {
        c.iter()
            .zip(&target)
            .map(|(&c, &t)| (t - lam / (2.0 * c * c)).clamp(0.0, 1.0))
            .collect()
    };
    let free = at(0.0);
    if free.iter().sum::<f64>() <= capacity {
        return free;
    }
    // Breakpoints where a fraction leaves 1 or reaches 0.
    let mut bps: Vec<f64> = Vec::with_capacity(2 * c.len());
    for (&c, &t) in c.iter().zip(&target) {
        let s = 2.0 * c * c;
        for v in [s * (t - 1.0), s * t] {
            if v > 0.0 {
                bps.push(v);
            }
        }
    }
    bps.sort_by(f64::total_cmp);
    let total = |lam: f64| at(lam).iter().sum::<f64>();
    let mut lo = 0.0;
    for &hi in &bps {
        let (t_lo, t_hi) = (total(lo), total(hi));
        if t_hi <= capacity {
            // Linear on [lo, hi].
            let lam = if t_lo > t_hi { lo + (t_lo - capacity) / (t_lo - t_hi) * (hi - lo) } else { hi };
            let mut f = at(lam);
            let s: f64 = f.iter().sum();
            if s > capacity {
                f.iter_mut().for_each(|v| *v *= capacity / s);
            }
            return f;
        }
        lo = hi;
    }
    at(lo)
}

/// Pooled relaxation: per-user fractions with `sum f <= M_b` and `f <= 1`,
/// ignoring how users split over carriers. Its optimum bounds the schedule's.
pub fn pooled_relaxation(inst: &BeamSchedulingInstance) -> Result<(Vec<f64>, f64), QpError> {
    let n = inst.users();
    if n == 0 || inst.carriers == 0 {
        return Ok((vec![0.0; n], 0.0));
    }
    let d = inst.normalized_demand();
    let mut qp = QpProblem::new(n);
    for i in 0..n {
        qp.add_square(&[(i, inst.efficiency[i])], 1.0, -d[i]);
        qp.set_bounds(i, 0.0, 1.0);
    }
    qp.set_offset(0.0);
    let ones: Vec<(usize, f64)> = (0..n).map(|i| (i, 1.0)).collect();
    qp.add_le(&ones, inst.carriers as f64);
    let sol = solve_qp(&qp, &QpOptions::default())?;
    let f: Vec<f64> = if sol.is_optimal() {
        sol.x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
    } else {
        // The pooled program is a single-row water-filling problem; fall back
        // to its closed form if the interior point did not certify.
        water_fill(&inst.efficiency, &d, inst.carriers as f64)
    };
    // A bound must be valid, so recompute it from the exact form.
    let exact = water_fill(&inst.efficiency, &d, inst.carriers as f64);
    let bound = inst.objective_of(&exact).min(inst.objective_of(&f));
    Ok((f, bound))
}

fn schedule_from_groups(groups: &[Vec<usize>], fracs: &[Vec<f64>], carriers: usize, users: usize) -> CarrierSchedule {
    let mut s = CarrierSchedule::empty(carriers, users);
    for (c, (g, f)) in groups.iter().zip(fracs).enumerate() {
        for (&n, &v) in g.iter().zip(f) {
            s.fractions[c][n] = v;
            s.assignment[n] = Some(c);
        }
    }
    s
}

/// Relaxed fractions packed first-fit-decreasing into carriers; an overfull
/// carrier has its fractions shrunk proportionally. Always feasible.
pub fn pack_heuristic(inst: &BeamSchedulingInstance) -> Result<CarrierSchedule, QpError> {
    let n = inst.users();
    let m = inst.carriers;
    if n == 0 || m == 0 {
        return Ok(CarrierSchedule::empty(m, n));
    }
    let (f, _) = pooled_relaxation(inst)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| f[b].total_cmp(&f[a]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut load = vec![0.0; m];
    for &i in &order {
        if f[i] <= 0.0 {
            continue;
        }
        let c = (0..m).find(|&c| load[c] + f[i] <= 1.0 + 1e-12).unwrap_or_else(|| {
            (0..m).fold(0, |best, c| if load[c] < load[best] { c } else { best })
        });
        groups[c].push(i);
        load[c] += f[i];
    }
    let fracs: Vec<Vec<f64>> = groups
        .iter()
        .zip(&load)
        .map(|(g, &l)| {
            let scale = if l > 1.0 { 1.0 / l } else { 1.0 };
            g.iter().map(|&i| f[i] * scale).collect()
        })
        .collect();
    Ok(schedule_from_groups(&groups, &fracs, m, n))
}

/// Refines a schedule: optimal time sharing within each carrier, then single
/// moves and pairwise swaps of users between carriers while they help.
pub fn improve_schedule(inst: &BeamSchedulingInstance, schedule: &CarrierSchedule) -> CarrierSchedule {
    let n = inst.users();
    let m = inst.carriers;
    if n == 0 || m == 0 {
        return schedule.clone();
    }
    let d = inst.normalized_demand();
    let c = &inst.efficiency;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut unserved = Vec::new();
    for i in 0..n {
        match schedule.assignment[i] {
            Some(k) => groups[k].push(i),
            None => unserved.push(i),
        }
    }
    // Unserved users join the least-loaded carrier; water-filling decides
    // whether they get time.
    for i in unserved {
        let k = (0..m).fold(0, |b, k| if groups[k].len() < groups[b].len() { k } else { b });
        groups[k].push(i);
    }
    let value = |g: &[usize]| -> (f64, Vec<f64>) {
        let cc: Vec<f64> = g.iter().map(|&i| c[i]).collect();
        let dd: Vec<f64> = g.iter().map(|&i| d[i]).collect();
        let f = water_fill(&cc, &dd, 1.0);
        let v = g.iter().zip(&f).map(|(&i, &f)| (c[i] * f).powi(2) - 2.0 * d[i] * c[i] * f).sum();
        (v, f)
    };
    let mut vals: Vec<f64> = groups.iter().map(|g| value(g).0).collect();
    let eps = 1e-13;
    for _pass in 0..50 {
        let mut improved = false;
        for a in 0..m {
            let mut idx = 0;
            while idx < groups[a].len() {
                let user = groups[a][idx];
                let mut moved = false;
                for b in 0..m {
                    if b == a {
                        continue;
                    }
                    let mut ga = groups[a].clone();
                    ga.remove(idx);
                    let mut gb = groups[b].clone();
                    gb.push(user);
                    let (va, vb) = (value(&ga).0, value(&gb).0);
                    if va + vb < vals[a] + vals[b] - eps * (1.0 + vals[a].abs() + vals[b].abs()) {
                        groups[a] = ga;
                        groups[b] = gb;
                        vals[a] = va;
                        vals[b] = vb;
                        moved = true;
                        improved = true;
                        break;
                    }
                }
                if !moved {
                    idx += 1;
                }
            }
        }
        for a in 0..m {
            for b in a + 1..m {
                let mut ia = 0;
                while ia < groups[a].len() {
                    let mut swapped = false;
                    for ib in 0..groups[b].len() {
                        let mut ga = groups[a].clone();
                        let mut gb = groups[b].clone();
                        std::mem::swap(&mut ga[ia], &mut gb[ib]);
                        let (va, vb) = (value(&ga).0, value(&gb).0);
                        if va + vb < vals[a] + vals[b] - eps * (1.0 + vals[a].abs() + vals[b].abs()) {
                            groups[a] = ga;
                            groups[b] = gb;
                            vals[a] = va;
                            vals[b] = vb;
                            swapped = true;
                            improved = true;
                            break;
                        }
                    }
                    if !swapped {
                        ia += 1;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    let mut fracs = Vec::with_capacity(m);
    for g in groups.iter_mut() {
        let (_, f) = value(g);
        fracs.push(f);
    }
    // Users left with no time are reported unassigned.
    let mut out = CarrierSchedule::empty(m, n);
    for (k, (g, f)) in groups.iter().zip(&fracs).enumerate() {
        for (&i, &v) in g.iter().zip(f) {
            if v > 0.0 {
                out.fractions[k][i] = v;
                out.assignment[i] = Some(k);
            }
        }
    }
    if out.objective(inst) <= schedule.objective(inst) {
        out
    } else {
        schedule.clone()
    }
}

/// Binaries left after demand-sorted relabeling and triangular activation.
pub fn binaries_after_symmetry_breaking(users: usize, carriers: usize) -> usize {
    (0..users).map(|i| (i + 1).min(carriers)).sum()
}

/// Exact schedule by dynamic programming over user subsets: the best cost of
/// serving subset `S` with `k` carriers is the best split of `S` into one
/// carrier's group (containing the lowest user of `S`) and the rest on `k - 1`
/// carriers. Each group is water-filled on its own carrier.
pub fn enumerate_partitions(inst: &BeamSchedulingInstance) -> CarrierSchedule {
    let n = inst.users();
    let m = inst.carriers;
    assert!(n < 20, "partition enumeration over {n} users");
    if n == 0 || m == 0 {
        return CarrierSchedule::empty(m, n);
    }
    let d = inst.normalized_demand();
    let full = (1usize << n) - 1;
    let members = |s: usize| (0..n).filter(move |&i| s >> i & 1 == 1);
    let fill = |s: usize| {
        let c: Vec<f64> = members(s).map(|i| inst.efficiency[i]).collect();
        let dd: Vec<f64> = members(s).map(|i| d[i]).collect();
        water_fill(&c, &dd, 1.0)
    };
    let cost: Vec<f64> = (0..=full)
        .map(|s| {
            members(s)
                .zip(fill(s))
                .map(|(i, f)| {
                    let r = inst.efficiency[i] * f;
                    r * r - 2.0 * d[i] * r
                })
                .sum()
        })
        .collect();
    // best[k][s] with k carriers available; choice records the group taken.
    let mut best = vec![cost.clone()];
    let mut choice = vec![(0..=full).collect::<Vec<usize>>()];
    for _ in 1..m {
        let prev = best.last().unwrap();
        let mut cur = prev.clone();
        let mut pick = vec![0usize; full + 1];
        for s in 1..=full {
            let low = s & s.wrapping_neg();
            let rest = s ^ low;
            // Enumerate groups T = low | sub for sub a subset of rest.
            let mut sub = rest;
            loop {
                let t = low | sub;
                let v = cost[t] + prev[s ^ t];
                if v < cur[s] - 1e-15 {
                    cur[s] = v;
                    pick[s] = t;
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
        best.push(cur);
        choice.push(pick);
    }
    let mut groups = Vec::new();
    let mut s = full;
    for k in (0..m).rev() {
        if s == 0 {
            break;
        }
        // pick == 0 means "no carrier used at this level".
        let t = if k == 0 { s } else { choice[k][s] };
        if t == 0 {
            continue;
        }
        groups.push(t);
        s ^= t;
    }
    let mut schedule = CarrierSchedule::empty(m, n);
    for (c, &g) in groups.iter().enumerate() {
        for (i, f) in members(g).zip(fill(g)) {
            schedule.fractions[c][i] = f;
            schedule.assignment[i] = Some(c);
        }
    }
    schedule
}

/// Users ranked by normalized demand fraction `d_n / c_n`, largest first.
fn demand_rank(inst: &BeamSchedulingInstance) -> Vec<usize> {
    let d = inst.normalized_demand();
    let mut order: Vec<usize> = (0..inst.users()).collect();
    let key = |i: usize| d[i] / inst.efficiency[i];
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    order
}

/// The scheduling program as a mixed-binary QP over ranked users; variable
/// `c * N + i` is the time fraction of ranked user `i` on carrier `c`, and
/// `(M + c) * N + i` its activity flag.
pub fn scheduling_mbqp(inst: &BeamSchedulingInstance, symmetry_breaking: bool) -> (MbqpProblem, SymmetryGroup, Vec<usize>) {
    let n = inst.users();
    let m = inst.carriers;
    let rank = if symmetry_breaking { demand_rank(inst) } else { (0..n).collect() };
    let d = inst.normalized_demand();
    let w = |c: usize, i: usize| c * n + i;
    let u = |c: usize, i: usize| (m + c) * n + i;
    let mut qp = QpProblem::new(2 * m * n);
    for (i, &user) in rank.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> = (0..m).map(|c| (w(c, i), inst.efficiency[user])).collect();
        qp.add_square(&coeffs, 1.0, -d[user]);
        for c in 0..m {
            let hi = if symmetry_breaking && c > i { 0.0 } else { 1.0 };
            qp.set_bounds(w(c, i), 0.0, hi);
            qp.set_bounds(u(c, i), 0.0, hi);
            qp.add_le(&[(w(c, i), 1.0), (u(c, i), -1.0)], 0.0);
        }
        let row: Vec<(usize, f64)> = (0..m).map(|c| (u(c, i), 1.0)).collect();
        qp.add_le(&row, 1.0);
    }
    qp.set_offset(0.0);
    for c in 0..m {
        let row: Vec<(usize, f64)> = (0..n).map(|i| (w(c, i), 1.0)).collect();
        qp.add_le(&row, 1.0);
    }
    let binaries = (0..m).flat_map(|c| (0..n).map(move |i| u(c, i))).collect();
    let group = SymmetryGroup {
        blocks: (0..m)
            .map(|c| (0..n).map(|i| w(c, i)).chain((0..n).map(|i| u(c, i))).collect())
            .collect(),
    };
    (MbqpProblem::new(qp, binaries).expect("binary bounds within [0, 1]"), group, rank)
}

/// Assigns the users of one beam to carriers.
///
/// Small beams are solved exactly by branch-and-bound with carrier symmetry
/// declared and triangular activation bounds; larger ones use the packing
/// heuristic refined by local search, with the pooled relaxation as bound.
pub fn schedule_carriers(inst: &BeamSchedulingInstance, opts: &SchedulerOptions) -> Result<ScheduleOutcome, QpError> {
    let n = inst.users();
    let m = inst.carriers;
    if n == 0 || m == 0 {
        return Ok(ScheduleOutcome {
            schedule: CarrierSchedule::empty(m, n),
            objective: 0.0,
            bound: 0.0,
            gap: 0.0,
            method: ScheduleMethod::Trivial,
            nodes: 0,
        });
    }
    let (_, pooled) = pooled_relaxation(inst)?;
    let heuristic = improve_schedule(inst, &pack_heuristic(inst)?);
    let h_obj = heuristic.objective(inst);
    let h_gap = relative_gap(h_obj, pooled);
    if h_gap == 0.0 || binaries_after_symmetry_breaking(n, m) > opts.max_binaries {
        return Ok(ScheduleOutcome {
            schedule: heuristic,
            objective: h_obj,
            bound: pooled,
            gap: h_gap,
            method: ScheduleMethod::Heuristic,
            nodes: 0,
        });
    }
    if n <= opts.enumerate_users {
        let exact = enumerate_partitions(inst);
        let e_obj = exact.objective(inst);
        let (schedule, objective) = if e_obj <= h_obj { (exact, e_obj) } else { (heuristic, h_obj) };
        return Ok(ScheduleOutcome {
            schedule,
            objective,
            bound: objective,
            gap: 0.0,
            method: ScheduleMethod::Enumeration,
            nodes: 0,
        });
    }

    let (prob, group, rank) = scheduling_mbqp(inst, true);
    // Warm start: carriers relabeled by their best-ranked user so the
    // heuristic respects the triangular bounds.
    let mut pos = vec![0; n];
    for (i, &user) in rank.iter().enumerate() {
        pos[user] = i;
    }
    let mut first: Vec<(usize, usize)> = (0..m)
        .map(|c| {
            let best = (0..n).filter(|&u| heuristic.assignment[u] == Some(c)).map(|u| pos[u]).min();
            (best.unwrap_or(usize::MAX), c)
        })
        .collect();
    first.sort();
    let mut relabel = vec![0; m];
    for (new, &(_, old)) in first.iter().enumerate() {
        relabel[old] = new;
    }
    let mut x0 = vec![0.0; 2 * m * n];
    for (user, a) in heuristic.assignment.iter().enumerate() {
        if let Some(c) = a {
            x0[(m + relabel[*c]) * n + pos[user]] = 1.0;
        }
    }
    let mopts = MbqpOptions {
        node_limit: opts.node_limit,
        time_limit: opts.time_limit,
        symmetry: vec![group],
        incumbent: Some(x0),
        ..MbqpOptions::default()
    };
    let sol = solve_mbqp(&prob, &mopts)?;
    if sol.solution.status == Status::Infeasible || sol.solution.objective > h_obj {
        return Ok(ScheduleOutcome {
            schedule: heuristic,
            objective: h_obj,
            bound: pooled.max(sol.bound.min(h_obj)),
            gap: relative_gap(h_obj, pooled.max(sol.bound.min(h_obj))),
            method: ScheduleMethod::Heuristic,
            nodes: sol.nodes,
        });
    }
    let x = &sol.solution.x;
    let mut schedule = CarrierSchedule::empty(m, n);
    for (i, &user) in rank.iter().enumerate() {
        for c in 0..m {
            if x[(m + c) * n + i] > 0.5 {
                let v = x[c * n + i].clamp(0.0, 1.0);
                if v > 0.0 {
                    schedule.fractions[c][user] = v;
                    schedule.assignment[user] = Some(c);
                }
            }
        }
    }
    // Interior-point fractions may exceed a carrier by round-off.
    for row in schedule.fractions.iter_mut() {
        let s: f64 = row.iter().sum();
        if s > 1.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    let objective = schedule.objective(inst);
    let bound = sol.bound.max(pooled).min(objective);
    Ok(ScheduleOutcome {
        schedule,
        objective,
        bound,
        gap: relative_gap(objective, bound),
        method: ScheduleMethod::BranchAndBound,
        nodes: sol.nodes,
    })
}
