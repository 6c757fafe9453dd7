//! Top-level solver: preprocessing, initial eigenvalue approximation,
//! task creation and scheduling, and assembly of the eigensystem.
//!
//! The eigenvector phase runs as a dynamic task graph. Singleton tasks
//! (S) compute final eigenpairs, cluster tasks (C) shift the spectrum and
//! reclassify, refinement tasks (R) split the eigenvalue refinement of
//! large clusters across workers. Three FIFO queues order the work R > S >
//! C; each worker polls them from the highest priority down, so singleton
//! work drains before new clusters are broken up and at most one batch of
//! cluster representations is alive per worker.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use crate::counter::OpCounter;
use crate::profile::{OutVector, OutputPrecision, RqiMode};
use crate::qd::Representation;
use crate::rrr::{self, GroupKind};
use crate::sturm::{self, bisect, default_atol, negcount_ldl, negcount_t};
use crate::tridiag::{self, Interval, SolverConfig, Tridiagonal};
use crate::vector::rqi_singleton;
use crate::Error;

/// Which eigenpairs to compute.
#[derive(Clone, Copy, Debug)]
pub enum Selection {
    All,
    /// Global eigenvalue indices, 1-based inclusive.
    ByIndex(usize, usize),
    /// Eigenvalues in the half-open interval `[lo, hi)`.
    ByValue(f64, f64),
}

/// Column-major eigenvector storage in output precision.
#[derive(Clone, Debug)]
pub enum VectorMatrix {
    F64 { n: usize, data: Vec<f64> },
    F32 { n: usize, data: Vec<f32> },
}

impl VectorMatrix {
    pub fn n(&self) -> usize {
        match self {
            VectorMatrix::F64 { n, .. } | VectorMatrix::F32 { n, .. } => *n,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            VectorMatrix::F64 { n, data } => data.len() / n,
            VectorMatrix::F32 { n, data } => data.len() / n,
        }
    }

    /// Entry (i, j) as f64 whatever the storage precision.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            VectorMatrix::F64 { n, data } => data[j * n + i],
            VectorMatrix::F32 { n, data } => data[j * n + i] as f64,
        }
    }
}

/// Counters and timings accumulated during one solve.
#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    /// Maximum representation-tree depth among nodes that produced
    /// eigenvectors (root = 0).
    pub d_max: usize,
    /// Largest top-level cluster size (singletons count as 1).
    pub largest_cluster: usize,
    pub shift_count: usize,
    /// Shifts accepted without passing the element-growth test.
    pub uncertified_count: usize,
    pub bracket_repairs: usize,
    /// Flop-proxy counter of the eigenvalue phase (root construction plus
    /// initial approximation).
    pub ops_values_phase: u64,
    /// Flop-proxy counter of the eigenvector phase (the task loop).
    pub ops_vectors_phase: u64,
    pub t_values_s: f64,
    pub t_vectors_s: f64,
    /// Busy seconds per worker during the eigenvector phase.
    pub worker_busy_s: Vec<f64>,
    pub singleton_count: u64,
    pub rqi_iters_total: u64,
    /// Singletons that needed at most 6 RQI iterations.
    pub rqi_le6: u64,
}

/// Computed eigenvalue approximations, uncertainties, and eigenvectors for
/// the requested index set.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub n: usize,
    /// Global 1-based eigenvalue indices, ascending.
    pub requested: Vec<usize>,
    /// Eigenvalue approximations, one per requested index.
    pub values: Vec<f64>,
    /// Half-width error estimates.
    pub errors: Vec<f64>,
    /// Eigenvector columns, `None` in values-only mode.
    pub vectors: Option<VectorMatrix>,
    pub stats: SolveStats,
}

/// Compute eigenpairs of `t` for `selection`.
pub fn solve(t: &Tridiagonal, selection: Selection, cfg: &SolverConfig) -> Result<EigenSystem, Error> {
    solve_inner(t, selection, cfg, true)
}

/// Eigenvalues only: root construction plus full-accuracy bisection, no
/// representation tree.
pub fn solve_values(t: &Tridiagonal, selection: Selection, cfg: &SolverConfig) -> Result<EigenSystem, Error> {
    solve_inner(t, selection, cfg, false)
}

// ---------------------------------------------------------------------------
// Shared output sink
// ---------------------------------------------------------------------------

/// Raw-pointer sink for results. Tasks own pairwise disjoint slot sets, so
/// unsynchronized column writes are race free; the claim bitmap asserts the
/// disjointness at runtime.
struct Sink {
    n: usize,
    values: *mut f64,
    errors: *mut f64,
    vec_f64: *mut f64,
    vec_f32: *mut f32,
    claimed: Vec<AtomicUsize>,
}

unsafe impl Send for Sink {}
unsafe impl Sync for Sink {}

impl Sink {
    /// Write one result; the vector is block local and lands at
    /// `row_offset` inside its zero-initialized column.
    fn emit(&self, slot: usize, value: f64, err: f64, vector: Option<&OutVector>, row_offset: usize) {
        let prev = self.claimed[slot].fetch_add(1, Ordering::Relaxed);
        assert_eq!(prev, 0, "slot {slot} written twice");
        unsafe {
            *self.values.add(slot) = value;
            *self.errors.add(slot) = err;
            match vector {
                Some(OutVector::F64(z)) => {
                    debug_assert!(!self.vec_f64.is_null());
                    debug_assert!(row_offset + z.len() <= self.n);
                    std::ptr::copy_nonoverlapping(z.as_ptr(), self.vec_f64.add(slot * self.n + row_offset), z.len());
                }
                Some(OutVector::F32(z)) => {
                    debug_assert!(!self.vec_f32.is_null());
                    debug_assert!(row_offset + z.len() <= self.n);
                    std::ptr::copy_nonoverlapping(z.as_ptr(), self.vec_f32.add(slot * self.n + row_offset), z.len());
                }
                None => {}
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Scheduler
// ---------------------------------------------------------------------------

struct Queues {
    high: VecDeque<Task>,
    medium: VecDeque<Task>,
    low: VecDeque<Task>,
    /// Tasks enqueued or running. The solve is finished when this is zero.
    pending: usize,
}

struct Sched {
    q: Mutex<Queues>,
    cv: Condvar,
}

#[derive(Clone, Copy)]
enum Priority {
    High,
    Medium,
    Low,
}

impl Sched {
    fn new() -> Self {
        Self {
            q: Mutex::new(Queues {
                high: VecDeque::new(),
                medium: VecDeque::new(),
                low: VecDeque::new(),
                pending: 0,
            }),
            cv: Condvar::new(),
        }
    }

    fn push(&self, task: Task) {
        let mut q = self.q.lock().unwrap();
        q.pending += 1;
        match task.priority() {
            Priority::High => q.high.push_back(task),
            Priority::Medium => q.medium.push_back(task),
            Priority::Low => q.low.push_back(task),
        }
        drop(q);
        self.cv.notify_one();
    }

    /// Next task, highest priority first; `None` once everything is done.
    fn pop_or_wait(&self) -> Option<Task> {
        let mut q = self.q.lock().unwrap();
        loop {
            if let Some(t) = q.high.pop_front().or_else(|| q.medium.pop_front()).or_else(|| q.low.pop_front()) {
                return Some(t);
            }
            if q.pending == 0 {
                return None;
            }
            q = self.cv.wait(q).unwrap();
        }
    }

    /// Mark one dequeued task as finished (its children are already pushed).
    fn task_done(&self) {
        let mut q = self.q.lock().unwrap();
        q.pending -= 1;
        if q.pending == 0 {
            drop(q);
            self.cv.notify_all();
        }
    }
}

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

struct SingletonItem {
    /// 1-based eigenvalue index local to the block.
    k: usize,
    /// Output slot.
    slot: usize,
    interval: Interval,
    /// Distance to the nearest other eigenvalue approximation.
    gap: f64,
}

struct STask {
    block: usize,
    rep: Arc<Representation>,
    items: Vec<SingletonItem>,
}

struct CTask {
    block: usize,
    rep: Arc<Representation>,
    ks: Vec<usize>,
    slots: Vec<usize>,
    intervals: Vec<Interval>,
    /// Absolute distances from the cluster edges to the nearest outside
    /// eigenvalue approximations (shift invariant).
    outer: (f64, f64),
}

struct RTask {
    cont: Arc<ClusterCont>,
    /// Position slice within the continuation arrays.
    lo: usize,
    hi: usize,
}

/// State shared by the R-task siblings refining one cluster; the last
/// sibling to finish runs the reclassification exactly once.
struct ClusterCont {
    block: usize,
    rep: Arc<Representation>,
    tau: f64,
    ks: Vec<usize>,
    slots: Vec<usize>,
    input: Vec<Interval>,
    outer: (f64, f64),
    refined: Mutex<Vec<Option<Interval>>>,
    remaining: AtomicUsize,
}

enum Task {
    S(STask),
    C(CTask),
    R(RTask),
}

impl Task {
    fn priority(&self) -> Priority {
        match self {
            Task::R(_) => Priority::High,
            Task::S(_) => Priority::Medium,
            Task::C(_) => Priority::Low,
        }
    }
}

/// Minimum cluster size before its refinement is split into R-tasks.
const MIN_R_SPLIT: usize = 64;

// ---------------------------------------------------------------------------
// Solve context
// ---------------------------------------------------------------------------

struct BlockData {
    n: usize,
    offset: usize,
    spdiam: f64,
}

struct Ctx {
    cfg: SolverConfig,
    blocks: Vec<BlockData>,
    sink: Sink,
    sched: Sched,
    nleft: AtomicUsize,
    ops: OpCounter,
    d_max: AtomicUsize,
    shift_count: AtomicUsize,
    uncertified: AtomicUsize,
    bracket_repairs: AtomicUsize,
    singletons: AtomicU64,
    rqi_total: AtomicU64,
    rqi_le6: AtomicU64,
}

impl Ctx {
    fn s_max(&self) -> usize {
        let nleft = self.nleft.load(Ordering::Relaxed).max(1);
        nleft.div_ceil(self.cfg.worker_count)
    }
}

// ---------------------------------------------------------------------------
// Task bodies
// ---------------------------------------------------------------------------

fn exec_task(ctx: &Ctx, task: Task) {
    match task {
        Task::S(t) => run_s_task(ctx, t),
        Task::C(t) => run_c_task(ctx, t),
        Task::R(t) => run_r_task(ctx, t),
    }
}

fn run_s_task(ctx: &Ctx, task: STask) {
    let rep = &task.rep;
    ctx.d_max.fetch_max(rep.depth, Ordering::Relaxed);
    for item in &task.items {
        let out = rqi_singleton(rep, item.k, item.interval, item.gap, &ctx.cfg, &ctx.ops);
        ctx.singletons.fetch_add(1, Ordering::Relaxed);
        ctx.rqi_total.fetch_add(out.rqi_iters as u64, Ordering::Relaxed);
        if out.rqi_iters <= 6 {
            ctx.rqi_le6.fetch_add(1, Ordering::Relaxed);
        }
        let value = out.value_local + rep.shift_accum;
        let err = if out.fell_back {
            out.residual_est.min(item.interval.half_width()).max(crate::EPS_WORK * value.abs())
        } else {
            out.residual_est.max(crate::EPS_WORK * value.abs())
        };
        let converted = ctx.cfg.profile.convert_out(&out.z);
        ctx.sink.emit(item.slot, value, err, Some(&converted), ctx.blocks[task.block].offset);
        ctx.nleft.fetch_sub(1, Ordering::Relaxed);
    }
    rep.dependents.fetch_sub(1, Ordering::Release);
}

fn run_c_task(ctx: &Ctx, task: CTask) {
    let CTask { block, rep, ks, slots, intervals, outer } = task;
    let spdiam = ctx.blocks[block].spdiam;
    ctx.shift_count.fetch_add(1, Ordering::Relaxed);
    let outcome = match rrr::select_shift(&rep, &ks, &intervals, &ctx.cfg, spdiam, &ctx.ops) {
        Ok(o) => o,
        Err(_) => {
            // No shifted factorization exists at all (pathological). Tally
            // the failure and degrade: treat the cluster eigenvalues as
            // singletons of the parent so the solve stays total.
            ctx.uncertified.fetch_add(1, Ordering::Relaxed);
            degrade_cluster_to_singletons(ctx, block, &rep, &ks, &slots, &intervals, outer);
            rep.dependents.fetch_sub(1, Ordering::Release);
            return;
        }
    };
    if !outcome.certified {
        ctx.uncertified.fetch_add(1, Ordering::Relaxed);
    }
    let new_rep = Arc::new(outcome.rep);
    let tau = outcome.tau;

    let s_max = ctx.s_max();
    if ks.len() > s_max.max(MIN_R_SPLIT) {
        // Split the refinement across R-tasks; the continuation fires once.
        let chunk = s_max.max(1);
        let m = ks.len();
        let cont = Arc::new(ClusterCont {
            block,
            rep: Arc::clone(&new_rep),
            tau,
            ks,
            slots,
            input: intervals,
            outer,
            refined: Mutex::new(vec![None; m]),
            remaining: AtomicUsize::new(m.div_ceil(chunk)),
        });
        let mut lo = 0;
        while lo < m {
            let hi = (lo + chunk).min(m);
            ctx.sched.push(Task::R(RTask { cont: Arc::clone(&cont), lo, hi }));
            lo = hi;
        }
    } else {
        let refined = sturm::refine_all(&new_rep, &ks, &intervals, tau, ctx.cfg.bisect_rtol_classify);
        ctx.ops.add(ctx.blocks[block].n * ks.len());
        ctx.bracket_repairs.fetch_add(refined.bracket_repairs, Ordering::Relaxed);
        finish_cluster(ctx, block, new_rep, ks, slots, refined.intervals, outer);
    }
    rep.dependents.fetch_sub(1, Ordering::Release);
}

fn run_r_task(ctx: &Ctx, task: RTask) {
    let cont = task.cont;
    let refined = sturm::refine_all(
        &cont.rep,
        &cont.ks[task.lo..task.hi],
        &cont.input[task.lo..task.hi],
        cont.tau,
        ctx.cfg.bisect_rtol_classify,
    );
    ctx.ops.add(ctx.blocks[cont.block].n * (task.hi - task.lo));
    ctx.bracket_repairs.fetch_add(refined.bracket_repairs, Ordering::Relaxed);
    {
        let mut slot = cont.refined.lock().unwrap();
        for (i, iv) in refined.intervals.into_iter().enumerate() {
            slot[task.lo + i] = Some(iv);
        }
    }
    if cont.remaining.fetch_sub(1, Ordering::AcqRel) == 1 {
        let refined: Vec<Interval> =
            cont.refined.lock().unwrap().iter().map(|iv| iv.expect("all slices refined")).collect();
        let cont = Arc::try_unwrap(cont).unwrap_or_else(|arc| ClusterCont {
            block: arc.block,
            rep: Arc::clone(&arc.rep),
            tau: arc.tau,
            ks: arc.ks.clone(),
            slots: arc.slots.clone(),
            input: arc.input.clone(),
            outer: arc.outer,
            refined: Mutex::new(Vec::new()),
            remaining: AtomicUsize::new(0),
        });
        finish_cluster(ctx, cont.block, cont.rep, cont.ks, cont.slots, refined, cont.outer);
    }
}

/// Reclassify a refined cluster and emit its child tasks.
fn finish_cluster(
    ctx: &Ctx,
    block: usize,
    rep: Arc<Representation>,
    ks: Vec<usize>,
    slots: Vec<usize>,
    intervals: Vec<Interval>,
    outer: (f64, f64),
) {
    spawn_children(ctx, block, rep, &ks, &slots, &intervals, outer, false);
}

/// Partition an index window, bundle singleton runs, and enqueue the child
/// tasks. Shared by the driver kickoff and cluster continuations.
#[allow(clippy::too_many_arguments)]
fn spawn_children(
    ctx: &Ctx,
    block: usize,
    rep: Arc<Representation>,
    ks: &[usize],
    slots: &[usize],
    intervals: &[Interval],
    outer: (f64, f64),
    top_level: bool,
) -> usize {
    let part = rrr::classify(intervals, &ctx.cfg);
    let spdiam = ctx.blocks[block].spdiam;
    let s_max = ctx.s_max();

    // Absolute gap from position p to its neighbors, using the carried
    // outer distances at the window edges.
    let gap_at = |p: usize| -> f64 {
        let left = if p == 0 { outer.0 } else { (intervals[p].lo - intervals[p - 1].hi).max(0.0) };
        let right = if p + 1 == intervals.len() {
            outer.1
        } else {
            (intervals[p + 1].lo - intervals[p].hi).max(0.0)
        };
        left.min(right).min(spdiam).max(0.0)
    };

    let mut largest = 1usize;
    let mut tasks: Vec<Task> = Vec::new();
    let mut bundle: Vec<SingletonItem> = Vec::new();
    let flush_bundle = |bundle: &mut Vec<SingletonItem>, tasks: &mut Vec<Task>| {
        if !bundle.is_empty() {
            tasks.push(Task::S(STask { block, rep: Arc::clone(&rep), items: std::mem::take(bundle) }));
        }
    };

    for &(s, e, kind) in &part.groups {
        largest = largest.max(e - s);
        match kind {
            GroupKind::Singleton => {
                if bundle.len() >= s_max {
                    flush_bundle(&mut bundle, &mut tasks);
                }
                bundle.push(SingletonItem {
                    k: ks[s],
                    slot: slots[s],
                    interval: intervals[s],
                    gap: gap_at(s),
                });
            }
            GroupKind::Cluster => {
                flush_bundle(&mut bundle, &mut tasks);
                let left_out = if s == 0 { outer.0 } else { (intervals[s].lo - intervals[s - 1].hi).max(0.0) };
                let right_out = if e == intervals.len() {
                    outer.1
                } else {
                    (intervals[e].lo - intervals[e - 1].hi).max(0.0)
                };
                tasks.push(Task::C(CTask {
                    block,
                    rep: Arc::clone(&rep),
                    ks: ks[s..e].to_vec(),
                    slots: slots[s..e].to_vec(),
                    intervals: intervals[s..e].to_vec(),
                    outer: (left_out, right_out),
                }));
            }
        }
    }
    flush_bundle(&mut bundle, &mut tasks);

    rep.dependents.store(tasks.len(), Ordering::Release);

    // The mixed profile walks the tree depth first: clusters are processed
    // immediately in this worker instead of queueing behind other blocks'
    // work, so at most d_max representations per worker stay alive.
    let depth_first = ctx.cfg.profile.rqi_mode == RqiMode::Relaxed;
    let mut recurse: Vec<CTask> = Vec::new();
    for task in tasks {
        match task {
            Task::C(c) if depth_first => recurse.push(c),
            t => ctx.sched.push(t),
        }
    }
    for c in recurse {
        run_c_task(ctx, c);
    }
    if top_level {
        largest
    } else {
        0
    }
}

/// Last-resort path when no shifted representation exists for a cluster:
/// compute its eigenpairs from the parent representation directly.
fn degrade_cluster_to_singletons(
    ctx: &Ctx,
    block: usize,
    rep: &Arc<Representation>,
    ks: &[usize],
    slots: &[usize],
    intervals: &[Interval],
    outer: (f64, f64),
) {
    let spdiam = ctx.blocks[block].spdiam;
    let mut items = Vec::with_capacity(ks.len());
    for p in 0..ks.len() {
        let left = if p == 0 { outer.0 } else { (intervals[p].lo - intervals[p - 1].hi).max(0.0) };
        let right =
            if p + 1 == ks.len() { outer.1 } else { (intervals[p + 1].lo - intervals[p].hi).max(0.0) };
        items.push(SingletonItem {
            k: ks[p],
            slot: slots[p],
            interval: intervals[p],
            gap: left.min(right).min(spdiam).max(f64::MIN_POSITIVE),
        });
    }
    let task = STask { block, rep: Arc::clone(rep), items };
    rep.dependents.fetch_add(1, Ordering::Release);
    run_s_task(ctx, task);
}

// ---------------------------------------------------------------------------
// Initial eigenvalue approximation
// ---------------------------------------------------------------------------

/// Bisection over a shared interval tree: approximate the eigenvalues
/// `k_first..=k_last` (1-based) of `rep` to `rtol`, reusing counts across
/// neighboring eigenvalues.
fn initial_intervals(
    rep: &Representation,
    k_first: usize,
    k_last: usize,
    start: Interval,
    rtol: f64,
    ops: &OpCounter,
) -> Vec<Interval> {
    let n = rep.n();
    let count = |x: f64| {
        ops.add(n);
        negcount_ldl(rep, x)
    };
    let mut lo = start.lo;
    let mut hi = start.hi;
    // The random perturbation of the root may push extreme eigenvalues
    // slightly past the carried Gershgorin bounds; inflate until bracketed.
    let mut step = (hi - lo).max(1e-3 * lo.abs().max(hi.abs())).max(f64::MIN_POSITIVE);
    while count(lo) >= k_first {
        lo -= step;
        step *= 2.0;
    }
    let mut step = (hi - lo).max(1e-3 * lo.abs().max(hi.abs())).max(f64::MIN_POSITIVE);
    while count(hi) < k_last {
        hi += step;
        step *= 2.0;
    }

    let atol = default_atol();
    let mut out = vec![None; k_last - k_first + 1];
    let mut stack = vec![(lo, hi, count(lo), count(hi))];
    while let Some((lo, hi, clo, chi)) = stack.pop() {
        let ka = (clo + 1).max(k_first);
        let kb = chi.min(k_last);
        if ka > kb {
            continue;
        }
        let width = hi - lo;
        let mid = lo + width / 2.0;
        if width <= rtol * lo.abs().max(hi.abs()) || width <= atol || mid <= lo || mid >= hi {
            for k in ka..=kb {
                out[k - k_first] = Some(Interval::new(lo, hi));
            }
            continue;
        }
        let cmid = count(mid);
        stack.push((lo, mid, clo, cmid));
        stack.push((mid, hi, cmid, chi));
    }
    out.into_iter().map(|iv| iv.expect("bracketed eigenvalue")).collect()
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

struct PreparedBlock {
    offset: usize,
    t: Tridiagonal,
    root: Arc<Representation>,
    spdiam: f64,
    /// Requested local index range (1-based, inclusive).
    k_lo: usize,
    k_hi: usize,
    /// Classification-accuracy intervals for the requested locals, in root
    /// coordinates.
    intervals: Vec<Interval>,
    /// Neighbor intervals just outside the requested range, for gaps.
    sentinel_lo: Option<Interval>,
    sentinel_hi: Option<Interval>,
    /// Output slot per requested local, filled after global ranking.
    slots: Vec<usize>,
}

fn solve_inner(
    t: &Tridiagonal,
    selection: Selection,
    cfg: &SolverConfig,
    want_vectors: bool,
) -> Result<EigenSystem, Error> {
    cfg.validate()?;
    let n = t.n();
    match selection {
        Selection::ByIndex(il, iu) => {
            if il < 1 || iu > n || il > iu {
                return Err(Error::InvalidArgument(format!(
                    "index selection {il}..{iu} invalid for n = {n}"
                )));
            }
        }
        Selection::ByValue(vl, vu) => {
            if !(vl < vu) {
                return Err(Error::InvalidArgument(format!(
                    "value selection [{vl}, {vu}) is empty or not ordered"
                )));
            }
        }
        Selection::All => {}
    }

    let t_values_start = Instant::now();
    let ops_values = OpCounter::default();

    // Scaling and splitting.
    let (work_t, scale) = match tridiag::safe_scale(t) {
        Some((scaled, s)) => (scaled, s),
        None => (t.clone(), 1.0),
    };
    let selection = match selection {
        Selection::ByValue(vl, vu) => Selection::ByValue(vl * scale, vu * scale),
        other => other,
    };
    let blocks = tridiag::split(&work_t, cfg);
    let single_block = blocks.len() == 1;

    // Candidate local index ranges per block.
    let mut prepared: Vec<PreparedBlock> = Vec::with_capacity(blocks.len());
    for block in &blocks {
        let nb = block.tridiag.n();
        let (mut k_lo, mut k_hi) = match selection {
            Selection::All => (1, nb),
            Selection::ByIndex(il, iu) => {
                if single_block {
                    (il, iu)
                } else {
                    (1, nb) // rank globally afterwards
                }
            }
            Selection::ByValue(vl, vu) => {
                ops_values.add(2 * nb);
                (negcount_t(&block.tridiag, vl) + 1, negcount_t(&block.tridiag, vu))
            }
        };
        if k_lo > k_hi {
            // Block contributes nothing.
            k_lo = 1;
            k_hi = 0;
        }
        let mut rng = rrr::block_rng(cfg.seed, block.offset);
        let root = rrr::make_root(block, cfg, &mut rng, &ops_values)?;
        let spdiam = root.gershgorin.width();
        let mu = root.mu;
        let rep = Arc::new(root.rep);

        let (intervals, sentinel_lo, sentinel_hi) = if k_lo > k_hi {
            (Vec::new(), None, None)
        } else {
            let want_lo = k_lo.saturating_sub(1).max(1);
            let want_hi = (k_hi + 1).min(nb);
            let start = Interval::new(root.gershgorin.lo - mu, root.gershgorin.hi - mu);
            let ivs = initial_block_intervals(&rep, want_lo, want_hi, start, cfg, &ops_values);
            let sent_lo = (want_lo < k_lo).then(|| ivs[0]);
            let sent_hi = (want_hi > k_hi).then(|| *ivs.last().unwrap());
            let first = k_lo - want_lo;
            let sel = ivs[first..first + (k_hi - k_lo + 1)].to_vec();
            (sel, sent_lo, sent_hi)
        };
        prepared.push(PreparedBlock {
            offset: block.offset,
            t: block.tridiag.clone(),
            root: rep,
            spdiam,
            k_lo,
            k_hi,
            intervals,
            sentinel_lo,
            sentinel_hi,
            slots: Vec::new(),
        });
    }

    // Global ranking across blocks by approximate eigenvalue.
    let mut order: Vec<(f64, usize, usize)> = Vec::new(); // (value, block, pos)
    for (b, pb) in prepared.iter().enumerate() {
        for (pos, iv) in pb.intervals.iter().enumerate() {
            order.push((iv.mid() + pb.root.shift_accum, b, pos));
        }
    }
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Resolve which global ranks are requested.
    let rank_base = match selection {
        Selection::All => 1,
        Selection::ByIndex(il, _) if !single_block => {
            // Candidates cover everything; select the requested window.
            il
        }
        Selection::ByIndex(il, _) => il,
        Selection::ByValue(vl, _) => {
            let mut below = 0usize;
            for block in &blocks {
                ops_values.add(block.tridiag.n());
                below += negcount_t(&block.tridiag, vl);
            }
            below + 1
        }
    };
    let keep: Vec<(usize, usize)> = match selection {
        Selection::ByIndex(il, iu) if !single_block => {
            order[il - 1..iu].iter().map(|&(_, b, p)| (b, p)).collect()
        }
        _ => order.iter().map(|&(_, b, p)| (b, p)).collect(),
    };
    let total = keep.len();

    // Assign slots and trim per-block windows for the multi-block ByIndex
    // case (requested positions are contiguous per block).
    {
        let mut per_block: Vec<Vec<usize>> = vec![Vec::new(); prepared.len()];
        for (slot, &(b, p)) in keep.iter().enumerate() {
            per_block[b].push(p);
            let _ = slot;
        }
        for (b, positions) in per_block.iter().enumerate() {
            let pb = &mut prepared[b];
            if positions.is_empty() {
                pb.k_lo = 1;
                pb.k_hi = 0;
                pb.intervals.clear();
                pb.slots.clear();
                continue;
            }
            let lo_pos = *positions.first().unwrap();
            let hi_pos = *positions.last().unwrap();
            debug_assert_eq!(hi_pos - lo_pos + 1, positions.len(), "requested locals contiguous");
            if lo_pos > 0 {
                pb.sentinel_lo = Some(pb.intervals[lo_pos - 1]);
            }
            if hi_pos + 1 < pb.intervals.len() {
                pb.sentinel_hi = Some(pb.intervals[hi_pos + 1]);
            }
            pb.k_lo += lo_pos;
            pb.k_hi = pb.k_lo + (hi_pos - lo_pos);
            pb.intervals = pb.intervals[lo_pos..=hi_pos].to_vec();
            pb.slots = vec![0; positions.len()];
        }
        for (slot, &(b, p)) in keep.iter().enumerate() {
            let base = keep.iter().position(|&(bb, _)| bb == b).unwrap();
            let lo_pos = keep[base].1;
            prepared[b].slots[p - lo_pos] = slot;
        }
    }

    let requested: Vec<usize> = (0..total).map(|i| rank_base + i).collect();

    // Output buffers.
    let mut values = vec![f64::NAN; total];
    let mut errors = vec![f64::NAN; total];
    let mut vec_f64: Vec<f64> = Vec::new();
    let mut vec_f32: Vec<f32> = Vec::new();
    let store_f64 = matches!(cfg.profile.output, OutputPrecision::F64);
    if want_vectors {
        if store_f64 {
            vec_f64 = vec![0.0; n * total];
        } else {
            vec_f32 = vec![0.0; n * total];
        }
    }

    let sink = Sink {
        n,
        values: values.as_mut_ptr(),
        errors: errors.as_mut_ptr(),
        vec_f64: if want_vectors && store_f64 { vec_f64.as_mut_ptr() } else { std::ptr::null_mut() },
        vec_f32: if want_vectors && !store_f64 { vec_f32.as_mut_ptr() } else { std::ptr::null_mut() },
        claimed: (0..total).map(|_| AtomicUsize::new(0)).collect(),
    };

    let t_values_s = t_values_start.elapsed().as_secs_f64();
    let t_vectors_start = Instant::now();

    let ctx = Ctx {
        cfg: *cfg,
        blocks: prepared
            .iter()
            .map(|pb| BlockData { n: pb.t.n(), offset: pb.offset, spdiam: pb.spdiam })
            .collect(),
        sink,
        sched: Sched::new(),
        nleft: AtomicUsize::new(total),
        ops: OpCounter::default(),
        d_max: AtomicUsize::new(0),
        shift_count: AtomicUsize::new(0),
        uncertified: AtomicUsize::new(0),
        bracket_repairs: AtomicUsize::new(0),
        singletons: AtomicU64::new(0),
        rqi_total: AtomicU64::new(0),
        rqi_le6: AtomicU64::new(0),
    };

    let mut largest_cluster = 1usize;
    let mut worker_busy: Vec<f64> = vec![0.0; cfg.worker_count];

    if want_vectors {
        // Kick off the per-block top-level tasks.
        for (b, pb) in prepared.iter().enumerate() {
            if pb.intervals.is_empty() {
                continue;
            }
            let ks: Vec<usize> = (pb.k_lo..=pb.k_hi).collect();
            let outer_lo = pb
                .sentinel_lo
                .map(|s| (pb.intervals[0].lo - s.hi).max(0.0))
                .unwrap_or(pb.spdiam);
            let outer_hi = pb
                .sentinel_hi
                .map(|s| (s.lo - pb.intervals.last().unwrap().hi).max(0.0))
                .unwrap_or(pb.spdiam);
            let l = spawn_children(
                &ctx,
                b,
                Arc::clone(&pb.root),
                &ks,
                &pb.slots,
                &pb.intervals,
                (outer_lo, outer_hi),
                true,
            );
            largest_cluster = largest_cluster.max(l);
        }

        // Run the task loop.
        if cfg.worker_count == 1 {
            let t0 = Instant::now();
            while let Some(task) = ctx.sched.pop_or_wait() {
                exec_task(&ctx, task);
                ctx.sched.task_done();
            }
            worker_busy[0] = t0.elapsed().as_secs_f64();
        } else {
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for _ in 0..cfg.worker_count {
                    handles.push(scope.spawn(|| {
                        let mut busy = 0.0f64;
                        while let Some(task) = ctx.sched.pop_or_wait() {
                            let t0 = Instant::now();
                            exec_task(&ctx, task);
                            ctx.sched.task_done();
                            busy += t0.elapsed().as_secs_f64();
                        }
                        busy
                    }));
                }
                for (w, h) in handles.into_iter().enumerate() {
                    worker_busy[w] = h.join().expect("worker panicked");
                }
            });
        }
    } else {
        // Values-only mode: full-accuracy bisection on the root, no tree.
        for pb in prepared.iter() {
            if pb.intervals.is_empty() {
                continue;
            }
            for (pos, iv) in pb.intervals.iter().enumerate() {
                let k = pb.k_lo + pos;
                let nb = pb.t.n();
                let refined = bisect(
                    |x| {
                        ctx.ops.add(nb);
                        negcount_ldl(&pb.root, x)
                    },
                    k,
                    *iv,
                    cfg.bisect_rtol_full,
                    default_atol(),
                );
                ctx.sink.emit(
                    pb.slots[pos],
                    refined.mid() + pb.root.shift_accum,
                    refined.half_width(),
                    None,
                    pb.offset,
                );
            }
            // classification for the largest-cluster statistic
            let part = rrr::classify(&pb.intervals, cfg);
            for &(s, e, _) in &part.groups {
                largest_cluster = largest_cluster.max(e - s);
            }
        }
    }

    let t_vectors_s = t_vectors_start.elapsed().as_secs_f64();

    debug_assert!(values.iter().all(|v| !v.is_nan()), "every requested slot filled");

    // Undo the input scaling (exact: power of two).
    if scale != 1.0 {
        for v in values.iter_mut() {
            *v /= scale;
        }
        for e in errors.iter_mut() {
            *e /= scale;
        }
    }

    let stats = SolveStats {
        d_max: ctx.d_max.load(Ordering::Relaxed),
        largest_cluster,
        shift_count: ctx.shift_count.load(Ordering::Relaxed),
        uncertified_count: ctx.uncertified.load(Ordering::Relaxed),
        bracket_repairs: ctx.bracket_repairs.load(Ordering::Relaxed),
        ops_values_phase: ops_values.get(),
        ops_vectors_phase: ctx.ops.get(),
        t_values_s,
        t_vectors_s,
        worker_busy_s: worker_busy,
        singleton_count: ctx.singletons.load(Ordering::Relaxed),
        rqi_iters_total: ctx.rqi_total.load(Ordering::Relaxed),
        rqi_le6: ctx.rqi_le6.load(Ordering::Relaxed),
    };

    let vectors = if want_vectors {
        Some(if store_f64 {
            VectorMatrix::F64 { n, data: vec_f64 }
        } else {
            VectorMatrix::F32 { n, data: vec_f32 }
        })
    } else {
        None
    };

    Ok(EigenSystem { n, requested, values, errors, vectors, stats })
}

/// Classification-accuracy intervals for the locals `k_first..=k_last` of a
/// block root, split into chunks so multiple workers can share the work.
fn initial_block_intervals(
    rep: &Arc<Representation>,
    k_first: usize,
    k_last: usize,
    start: Interval,
    cfg: &SolverConfig,
    ops: &OpCounter,
) -> Vec<Interval> {
    let count = k_last - k_first + 1;
    let rtol = cfg.bisect_rtol_classify;
    if cfg.worker_count == 1 || count < 32 {
        return initial_intervals(rep, k_first, k_last, start, rtol, ops);
    }
    let chunk = count.div_ceil(4 * cfg.worker_count).max(1);
    let nchunks = count.div_ceil(chunk);
    let mut results: Vec<Vec<Interval>> = vec![Vec::new(); nchunks];
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for _ in 0..cfg.worker_count.min(nchunks) {
            handles.push(scope.spawn(|| {
                let mut mine: Vec<(usize, Vec<Interval>)> = Vec::new();
                loop {
                    let c = next.fetch_add(1, Ordering::Relaxed);
                    if c >= nchunks {
                        break;
                    }
                    let ka = k_first + c * chunk;
                    let kb = (ka + chunk - 1).min(k_last);
                    mine.push((c, initial_intervals(rep, ka, kb, start, rtol, ops)));
                }
                mine
            }));
        }
        for h in handles {
            for (c, ivs) in h.join().expect("bisection worker panicked") {
                results[c] = ivs;
            }
        }
    });
    results.concat()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmat::{generate, MatrixKind};

    #[test]
    fn diagonal_matrix_solves_to_permuted_identity() {
        let t = Tridiagonal::new(vec![3.0, 1.0, 2.0], vec![0.0, 0.0]).unwrap();
        let cfg = SolverConfig::standard64();
        let es = solve(&t, Selection::All, &cfg).unwrap();
        assert_eq!(es.values.len(), 3);
        for (got, want) in es.values.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() <= 4.0 * crate::EPS_WORK * want);
        }
        // Vectors are the permutation of the identity.
        let v = es.vectors.as_ref().unwrap();
        let expect_cols = [1usize, 2, 0];
        for (j, &i) in expect_cols.iter().enumerate() {
            for row in 0..3 {
                let want = if row == i { 1.0 } else { 0.0 };
                assert!((v.get(row, j).abs() - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn one21_small_matches_closed_form() {
        let n = 25;
        let t = generate(MatrixKind::OneTwoOne, n).unwrap();
        let cfg = SolverConfig::standard64();
        let es = solve(&t, Selection::All, &cfg).unwrap();
        for (k, v) in es.values.iter().enumerate() {
            let want = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n as f64 + 1.0)).cos();
            assert!(
                (v - want).abs() <= 100.0 * n as f64 * crate::EPS_WORK * 4.0,
                "k = {k}: {v} vs {want}"
            );
        }
    }

    #[test]
    fn by_index_subset_matches_all() {
        let n = 40;
        let t = generate(MatrixKind::OneTwoOne, n).unwrap();
        let cfg = SolverConfig::standard64();
        let all = solve(&t, Selection::All, &cfg).unwrap();
        let sub = solve(&t, Selection::ByIndex(5, 12), &cfg).unwrap();
        assert_eq!(sub.requested, (5..=12).collect::<Vec<_>>());
        for (i, v) in sub.values.iter().enumerate() {
            assert!((v - all.values[i + 4]).abs() <= 1e-12);
        }
    }

    #[test]
    fn by_value_subset_selects_window() {
        let t = Tridiagonal::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 3]).unwrap();
        let cfg = SolverConfig::standard64();
        let es = solve(&t, Selection::ByValue(1.5, 3.5), &cfg).unwrap();
        assert_eq!(es.requested, vec![2, 3]);
        assert!((es.values[0] - 2.0).abs() <= 1e-12);
        assert!((es.values[1] - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn values_only_matches_full_solve() {
        let t = generate(MatrixKind::Clement, 12).unwrap();
        let cfg = SolverConfig::standard64();
        let full = solve(&t, Selection::All, &cfg).unwrap();
        let vals = solve_values(&t, Selection::All, &cfg).unwrap();
        assert!(vals.vectors.is_none());
        for (a, b) in full.values.iter().zip(&vals.values) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn split_blocks_are_merged_in_global_order() {
        // Two decoupled blocks with interleaved spectra.
        let t = Tridiagonal::new(vec![1.0, 3.0, 2.0, 4.0], vec![0.1, 0.0, 0.1]).unwrap();
        let cfg = SolverConfig::standard64();
        let es = solve(&t, Selection::All, &cfg).unwrap();
        let mut sorted = es.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(es.values, sorted);
        assert_eq!(es.requested, vec![1, 2, 3, 4]);
    }

    #[test]
    fn determinism_single_worker() {
        let t = generate(MatrixKind::Wilkinson, 21).unwrap();
        let cfg = SolverConfig::standard64().with_seed(7);
        let a = solve(&t, Selection::All, &cfg).unwrap();
        let b = solve(&t, Selection::All, &cfg).unwrap();
        assert_eq!(
            a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        match (a.vectors.unwrap(), b.vectors.unwrap()) {
            (VectorMatrix::F64 { data: da, .. }, VectorMatrix::F64 { data: db, .. }) => {
                assert_eq!(
                    da.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    db.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
            }
            _ => panic!("expected f64 vectors"),
        }
    }

    #[test]
    fn wilkinson_builds_a_tree() {
        let t = generate(MatrixKind::Wilkinson, 21).unwrap();
        let cfg = SolverConfig::standard64();
        let es = solve(&t, Selection::All, &cfg).unwrap();
        assert!(es.stats.d_max >= 1, "d_max = {}", es.stats.d_max);
        assert!(es.stats.shift_count >= 1);
    }

    #[test]
    fn scaling_is_undone_exactly() {
        let t = Tridiagonal::new(vec![1e120, 3e120], vec![1e119]).unwrap();
        let cfg = SolverConfig::standard64();
        let es = solve(&t, Selection::All, &cfg).unwrap();
        // Gershgorin: eigenvalues within [1e120 - 1e119, 3e120 + 1e119].
        assert!(es.values[0] > 8e119 && es.values[1] < 3.2e120);
        let prod = es.values[0] * es.values[1];
        let det = 1e120 * 3e120 - 1e119 * 1e119;
        assert!((prod - det).abs() <= 1e-10 * det);
    }

    #[test]
    fn rejects_bad_selections() {
        let t = generate(MatrixKind::OneTwoOne, 5).unwrap();
        let cfg = SolverConfig::standard64();
        assert!(solve(&t, Selection::ByIndex(3, 2), &cfg).is_err());
        assert!(solve(&t, Selection::ByIndex(0, 2), &cfg).is_err());
        assert!(solve(&t, Selection::ByIndex(1, 6), &cfg).is_err());
        assert!(solve(&t, Selection::ByValue(2.0, 2.0), &cfg).is_err());
    }

    #[test]
    fn one_by_one_matrix() {
        let t = Tridiagonal::new(vec![-5.0], vec![]).unwrap();
        let cfg = SolverConfig::standard64();
        let es = solve(&t, Selection::All, &cfg).unwrap();
        assert_eq!(es.values.len(), 1);
        assert!((es.values[0] + 5.0).abs() <= 1e-13);
        assert_eq!(es.vectors.unwrap().get(0, 0).abs(), 1.0);
    }
}
