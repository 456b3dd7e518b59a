//! Policy iteration: alternating Galerkin policy evaluation with Monte-Carlo
//! policy improvement over representative states, plus value-propagation
//! failure detection and iteration checkpoints.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::assembly::{
    apply_boundary, assemble, assemble_pure_mesh, solve, BoundaryMode, CoefficientProvider,
    HybridBasis,
};
use crate::error::{Error, Result};
use crate::mesh::NodeLabel;
use crate::model::{CoefficientField, DmdpModel, KernelAxisKind, MAX_DIM};
use crate::quad::QuadKind;
use crate::value::ValueFunction;

/// Weighted Euclidean metric with wrap-aware angle axes.
#[derive(Debug, Clone)]
pub struct StateMetric {
    pub weights: Vec<f64>,
    pub angle: Vec<bool>,
}

impl StateMetric {
    /// Per-axis normalization by range; mesh axes first, kernel axes after.
    pub fn for_problem(basis: &HybridBasis, model: &DmdpModel) -> StateMetric {
        let mut weights = Vec::new();
        let mut angle = Vec::new();
        for a in basis.mesh.axes() {
            weights.push(1.0 / (a.max - a.min));
            angle.push(a.periodic);
        }
        for kind in &model.kernel_axes {
            match kind {
                KernelAxisKind::Angle => {
                    weights.push(1.0 / (2.0 * std::f64::consts::PI));
                    angle.push(true);
                }
                KernelAxisKind::Bounded { lo, hi } => {
                    weights.push(1.0 / (hi - lo));
                    angle.push(false);
                }
            }
        }
        weights.truncate(basis.state_dim());
        angle.truncate(basis.state_dim());
        StateMetric { weights, angle }
    }

    pub fn distance2(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..a.len() {
            let mut d = a[k] - b[k];
            if self.angle[k] {
                d = crate::model::wrap_angle(d);
            }
            let wd = d * self.weights[k];
            acc += wd * wd;
        }
        acc
    }
}

/// Cell-bucketed exact nearest-neighbor index over the position plane.
#[derive(Debug, Clone)]
struct BucketIndex {
    nx: usize,
    ny: usize,
    min: [f64; 2],
    inv_h: [f64; 2],
    buckets: Vec<Vec<u32>>,
    /// Minimum weighted cell extent, for ring lower bounds.
    wmin_cell: f64,
}

impl BucketIndex {
    fn build(states: &[Vec<f64>], metric: &StateMetric, basis: &HybridBasis) -> BucketIndex {
        let axes = basis.mesh.axes();
        let nx = axes[0].cells;
        let ny = axes[1].cells;
        let min = [axes[0].min, axes[1].min];
        let inv_h = [1.0 / axes[0].spacing(), 1.0 / axes[1].spacing()];
        let mut buckets = vec![Vec::new(); nx * ny];
        for (i, s) in states.iter().enumerate() {
            let (cx, cy) = Self::cell_of(s, min, inv_h, nx, ny);
            buckets[cy * nx + cx].push(i as u32);
        }
        let wmin_cell = (axes[0].spacing() * metric.weights[0])
            .min(axes[1].spacing() * metric.weights[1]);
        BucketIndex {
            nx,
            ny,
            min,
            inv_h,
            buckets,
            wmin_cell,
        }
    }

    fn cell_of(
        p: &[f64],
        min: [f64; 2],
        inv_h: [f64; 2],
        nx: usize,
        ny: usize,
    ) -> (usize, usize) {
        let cx = (((p[0] - min[0]) * inv_h[0]).floor() as isize).clamp(0, nx as isize - 1);
        let cy = (((p[1] - min[1]) * inv_h[1]).floor() as isize).clamp(0, ny as isize - 1);
        (cx as usize, cy as usize)
    }

    fn nearest(&self, p: &[f64], states: &[Vec<f64>], metric: &StateMetric) -> usize {
        let (cx, cy) = Self::cell_of(p, self.min, self.inv_h, self.nx, self.ny);
        let mut best = usize::MAX;
        let mut best2 = f64::INFINITY;
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            if best != usize::MAX {
                let bound = (ring as f64 - 1.0).max(0.0) * self.wmin_cell;
                if bound * bound > best2 {
                    break;
                }
            }
            let lo_x = cx as isize - ring as isize;
            let hi_x = cx as isize + ring as isize;
            let lo_y = cy as isize - ring as isize;
            let hi_y = cy as isize + ring as isize;
            for by in lo_y..=hi_y {
                if by < 0 || by >= self.ny as isize {
                    continue;
                }
                for bx in lo_x..=hi_x {
                    if bx < 0 || bx >= self.nx as isize {
                        continue;
                    }
                    // Only the ring frontier.
                    let on_ring = bx == lo_x || bx == hi_x || by == lo_y || by == hi_y;
                    if !on_ring {
                        continue;
                    }
                    for &idx in &self.buckets[by as usize * self.nx + bx as usize] {
                        let d2 = metric.distance2(p, &states[idx as usize]);
                        if d2 < best2 {
                            best2 = d2;
                            best = idx as usize;
                        }
                    }
                }
            }
        }
        best
    }
}

/// Action assignment over representative states with nearest-state lookup.
#[derive(Debug, Clone)]
pub struct Policy {
    states: Arc<Vec<Vec<f64>>>,
    actions: Vec<u32>,
    metric: StateMetric,
    index: Arc<BucketIndex>,
}

impl Policy {
    pub fn new(
        basis: &HybridBasis,
        model: &DmdpModel,
        states: Vec<Vec<f64>>,
        actions: Vec<u32>,
    ) -> Result<Policy> {
        if states.is_empty() {
            return Err(Error::Config("empty representative state set".into()));
        }
        if states.len() != actions.len() {
            return Err(Error::Config("states/actions length mismatch".into()));
        }
        let metric = StateMetric::for_problem(basis, model);
        let states = Arc::new(states);
        let index = Arc::new(BucketIndex::build(&states, &metric, basis));
        Ok(Policy {
            states,
            actions,
            metric,
            index,
        })
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn actions(&self) -> &[u32] {
        &self.actions
    }

    pub fn with_actions(&self, actions: Vec<u32>) -> Policy {
        debug_assert_eq!(actions.len(), self.states.len());
        Policy {
            states: Arc::clone(&self.states),
            actions,
            metric: self.metric.clone(),
            index: Arc::clone(&self.index),
        }
    }

    /// Index of the nearest representative state.
    pub fn nearest(&self, x: &[f64]) -> usize {
        self.index.nearest(x, &self.states, &self.metric)
    }

    /// Action index at the nearest representative state.
    pub fn lookup(&self, x: &[f64]) -> usize {
        self.actions[self.nearest(x)] as usize
    }
}

/// Representative states: active mesh nodes crossed with the deduplicated
/// support midpoints, with obstacle-interior nodes removed. `midpoint_cap`
/// of zero keeps every midpoint; otherwise the midpoints are subsampled
/// uniformly (by even stride over the sorted list).
pub fn representative_states(basis: &HybridBasis, midpoint_cap: usize) -> Vec<Vec<f64>> {
    let mesh = &basis.mesh;
    let mut midpoints: Vec<Vec<f64>> = basis.midpoints().to_vec();
    midpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if midpoint_cap > 0 && midpoints.len() > midpoint_cap {
        let len = midpoints.len();
        midpoints = (0..midpoint_cap)
            .map(|i| midpoints[i * len / midpoint_cap].clone())
            .collect();
    }
    let mut states = Vec::new();
    for dof in 0..mesh.dof_count() {
        if mesh.dof_label(dof) == NodeLabel::Obstacle {
            continue;
        }
        let pos = mesh.node_position(mesh.canonical_node(dof));
        for mid in &midpoints {
            let mut s = pos.clone();
            s.extend_from_slice(mid);
            states.push(s);
        }
    }
    states
}

/// Coefficient provider that evaluates the model under a fixed policy. The
/// assembled source is the unshifted right-hand side `-R(x, pi(x))`: the
/// goal value enters through the Dirichlet data instead of the source term.
pub struct PolicyCoefficients<'a> {
    pub model: &'a DmdpModel,
    pub policy: &'a Policy,
}

impl CoefficientProvider for PolicyCoefficients<'_> {
    fn eval(&self, x: &[f64]) -> CoefficientField {
        let action = &self.model.actions()[self.policy.lookup(x)];
        let mut cf = self.model.coefficients(x, action);
        cf.source = -self.model.reward(x, action);
        cf
    }
}

/// Lower factor `L` with `L L^T = projection of C onto the PSD cone`
/// (eigenvalue floor at zero).
fn psd_factor(cov: &[[f64; MAX_DIM]; MAX_DIM], d: usize) -> nalgebra::DMatrix<f64> {
    let mat = nalgebra::DMatrix::from_fn(d, d, |i, j| 0.5 * (cov[i][j] + cov[j][i]));
    let eig = mat.symmetric_eigen();
    let mut l = nalgebra::DMatrix::zeros(d, d);
    for k in 0..d {
        let lambda = eig.eigenvalues[k].max(0.0);
        let s = lambda.sqrt();
        for i in 0..d {
            l[(i, k)] = eig.eigenvectors[(i, k)] * s;
        }
    }
    l
}

/// Monte-Carlo action values at one state: for each action, sample next
/// states from the Gaussian surrogate `N(x + mu, sigma - mu mu^T)` and
/// average the value; samples that leave the domain or land in obstacles
/// contribute zero (absorbing).
pub fn action_values<R: Rng>(
    vf: &ValueFunction,
    model: &DmdpModel,
    x: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = model.state_dim();
    let d2 = vf.basis.mesh.dim();
    let mut q = Vec::with_capacity(model.actions().len());
    let mut z = vec![0.0; d];
    let mut xs = vec![0.0; d];
    for action in model.actions() {
        let m = model.dynamics.moments(x, action);
        let l = psd_factor(&m.covariance(), d);
        let mut acc = 0.0;
        for _ in 0..samples {
            for zk in z.iter_mut() {
                *zk = rng.sample(StandardNormal);
            }
            for i in 0..d {
                let mut v = x[i] + m.mu[i];
                for j in 0..d {
                    v += l[(i, j)] * z[j];
                }
                xs[i] = v;
            }
            model.normalize_state(&mut xs, d2);
            acc += vf.eval_absorbing(&xs);
        }
        let qv = model.reward(x, action) + model.gamma() * acc / samples as f64;
        if !qv.is_finite() {
            return Err(Error::Numeric {
                element: 0,
                msg: format!("non-finite action value at state {x:?}"),
            });
        }
        q.push(qv);
    }
    Ok(q)
}

/// One policy improvement pass. Each state uses an independent random stream
/// derived from `seed` and the state index, so results do not depend on
/// scheduling. Ties break to the lowest action index.
pub fn improve(
    vf: &ValueFunction,
    model: &DmdpModel,
    states: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<Vec<u32>> {
    let results: Vec<Result<u32>> = states
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let q = action_values(vf, model, x, samples, &mut rng)?;
            let mut best = 0usize;
            for (a, &v) in q.iter().enumerate() {
                if v > q[best] {
                    best = a;
                }
            }
            Ok(best as u32)
        })
        .collect();
    results.into_iter().collect()
}

/// Per-iteration wall-clock phase timings, seconds.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PhaseTimes {
    pub assembly_s: f64,
    pub solve_s: f64,
    pub improve_s: f64,
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iterations: usize,
    pub coeff_deltas: Vec<f64>,
    pub wall_times: Vec<PhaseTimes>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct IterationOptions {
    /// Max-norm coefficient tolerance (absolute).
    pub tol: f64,
    pub max_iters: usize,
    pub improve_samples: usize,
    pub seed: u64,
    pub quad: QuadKind,
    pub boundary_mode: BoundaryMode,
    pub residual_tol: f64,
    pub midpoint_cap: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub initial_actions: Option<Vec<u32>>,
}

impl IterationOptions {
    /// Defaults: tolerance `1e-4 * goal_value`, 50 iterations, 32 samples.
    pub fn defaults(goal_value: f64) -> IterationOptions {
        IterationOptions {
            tol: 1e-4 * goal_value,
            max_iters: 50,
            improve_samples: 32,
            seed: 0,
            quad: QuadKind::GaussLegendre(2),
            boundary_mode: BoundaryMode::DirichletZero,
            residual_tol: 1e-8,
            midpoint_cap: 0,
            checkpoint_dir: None,
            initial_actions: None,
        }
    }
}

/// Alternates policy evaluation (assemble + solve) and Monte-Carlo policy
/// improvement until the max-norm coefficient change drops below tolerance.
/// Non-convergence at `max_iters` is reported, not an error.
pub fn policy_iteration(
    basis: Arc<HybridBasis>,
    model: &DmdpModel,
    opts: &IterationOptions,
) -> Result<(ValueFunction, Policy, IterationReport)> {
    let states = representative_states(&basis, opts.midpoint_cap);
    if states.is_empty() {
        return Err(Error::Config("no representative states".into()));
    }
    let n_states = states.len();
    let initial = match &opts.initial_actions {
        Some(a) => {
            if a.len() != n_states {
                return Err(Error::Config(format!(
                    "initial policy has {} actions, expected {n_states}",
                    a.len()
                )));
            }
            a.clone()
        }
        None => vec![0u32; n_states],
    };
    let mut policy = Policy::new(&basis, model, states, initial)?;

    let mut prev = vec![0.0; basis.size()];
    let mut deltas = Vec::new();
    let mut times = Vec::new();
    let mut converged = false;
    let mut vf = ValueFunction::new(Arc::clone(&basis), prev.clone(), 0.0);

    for iteration in 0..opts.max_iters {
        let t0 = Instant::now();
        let provider = PolicyCoefficients {
            model,
            policy: &policy,
        };
        let raw = if basis.kernels.dim() == 0 {
            assemble_pure_mesh(&basis.mesh, &provider, opts.quad)?
        } else {
            assemble(&basis, &provider, opts.quad)?
        };
        let system = apply_boundary(&basis, &raw, opts.boundary_mode, model.goal_value())?;
        let t1 = Instant::now();
        let coeffs = solve(&system, opts.residual_tol).map_err(|e| match e {
            Error::Solver { msg, residual } => Error::Solver {
                msg: format!("iteration {iteration}: {msg}"),
                residual,
            },
            other => other,
        })?;
        let t2 = Instant::now();

        let delta = coeffs
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        deltas.push(delta);
        prev = coeffs.clone();
        vf = ValueFunction::new(Arc::clone(&basis), coeffs, 0.0);

        let actions = improve(&vf, model, policy.states(), opts.improve_samples, opts.seed)?;
        policy = policy.with_actions(actions);
        let t3 = Instant::now();
        times.push(PhaseTimes {
            assembly_s: (t1 - t0).as_secs_f64(),
            solve_s: (t2 - t1).as_secs_f64(),
            improve_s: (t3 - t2).as_secs_f64(),
        });

        if let Some(dir) = &opts.checkpoint_dir {
            let ckpt = Checkpoint {
                iteration: iteration as u32,
                coeffs: vf.coeffs.clone(),
                actions: policy.actions().to_vec(),
            };
            save_checkpoint(&dir.join(format!("iter_{iteration:04}.ckpt")), &ckpt)?;
        }

        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    let report = IterationReport {
        iterations: deltas.len(),
        coeff_deltas: deltas,
        wall_times: times,
        converged,
    };
    Ok((vf, policy, report))
}

/// Free interior nodes whose value stays at or below `epsilon * goal_value`:
/// regions the goal value failed to propagate into. Nonempty results are
/// reported with their connected components.
pub fn detect_unreachable(vf: &ValueFunction, epsilon: f64, goal_value: f64) -> Vec<usize> {
    let basis = &vf.basis;
    let mesh = &basis.mesh;
    let threshold = epsilon * goal_value;
    let mut flagged = Vec::new();
    for dof in 0..mesh.dof_count() {
        if mesh.dof_label(dof) != NodeLabel::Interior {
            continue;
        }
        let pos = mesh.node_position(mesh.canonical_node(dof));
        let mut best = f64::NEG_INFINITY;
        for t in 0..basis.kernels.len() {
            let mut state = pos.clone();
            state.extend_from_slice(basis.kernels.support(t));
            best = best.max(vf.eval_absorbing(&state));
        }
        if best <= threshold {
            flagged.push(dof);
        }
    }
    if !flagged.is_empty() {
        let components = connected_components(mesh, &flagged);
        let summary: Vec<String> = components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let p = mesh.node_position(mesh.canonical_node(c[0]));
                format!("component {i}: {} nodes near {:?}", c.len(), p)
            })
            .collect();
        log::warn!(
            "value propagation failure: {} nodes below {:.2e} in {} components [{}]",
            flagged.len(),
            threshold,
            components.len(),
            summary.join("; ")
        );
    }
    flagged
}

/// Groups flagged dofs into grid-adjacent connected components.
pub fn connected_components(mesh: &crate::mesh::Mesh, flagged: &[usize]) -> Vec<Vec<usize>> {
    use std::collections::{BTreeSet, VecDeque};
    let set: BTreeSet<usize> = flagged.iter().copied().collect();
    let mut remaining = set.clone();
    let mut components = Vec::new();
    let counts = mesh.node_counts().to_vec();
    while let Some(&start) = remaining.iter().next() {
        remaining.remove(&start);
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(dof) = queue.pop_front() {
            let node = mesh.canonical_node(dof);
            let mut rest = node;
            let mut idx = Vec::with_capacity(counts.len());
            for &n in &counts {
                idx.push(rest % n);
                rest /= n;
            }
            for k in 0..counts.len() {
                for step in [-1i64, 1] {
                    let j = idx[k] as i64 + step;
                    if j < 0 || j >= counts[k] as i64 {
                        continue;
                    }
                    let mut flat = 0usize;
                    for kk in (0..counts.len()).rev() {
                        let comp_idx = if kk == k { j as usize } else { idx[kk] };
                        flat = flat * counts[kk] + comp_idx;
                    }
                    let ndof = mesh.dof_of_node(flat);
                    if remaining.remove(&ndof) {
                        comp.push(ndof);
                        queue.push_back(ndof);
                    }
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    components
}

/// Fraction of interior representative states whose chosen action's drift
/// ascends the value function.
pub fn ascent_fraction(vf: &ValueFunction, model: &DmdpModel, policy: &Policy) -> f64 {
    let basis = &vf.basis;
    let mesh = &basis.mesh;
    let mut total = 0usize;
    let mut ascending = 0usize;
    for dof in 0..mesh.dof_count() {
        if mesh.dof_label(dof) != NodeLabel::Interior {
            continue;
        }
        let pos = mesh.node_position(mesh.canonical_node(dof));
        for mid in basis.midpoints() {
            let mut state = pos.clone();
            state.extend_from_slice(mid);
            let Ok(grad) = vf.grad(&state) else {
                continue;
            };
            let action = &model.actions()[policy.lookup(&state)];
            let m = model.dynamics.moments(&state, action);
            let dot: f64 = (0..model.state_dim()).map(|i| m.mu[i] * grad[i]).sum();
            total += 1;
            if dot > 0.0 {
                ascending += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        ascending as f64 / total as f64
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"DMDPCKP1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: u32,
    pub coeffs: Vec<f64>,
    pub actions: Vec<u32>,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + ckpt.coeffs.len() * 8 + ckpt.actions.len() * 4);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&ckpt.iteration.to_le_bytes());
    buf.extend_from_slice(&(ckpt.coeffs.len() as u64).to_le_bytes());
    for c in &ckpt.coeffs {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    buf.extend_from_slice(&(ckpt.actions.len() as u64).to_le_bytes());
    for a in &ckpt.actions {
        buf.extend_from_slice(&a.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |msg: &str| Error::Format {
        line: 0,
        msg: msg.to_string(),
    };
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fail("not a checkpoint file"));
    }
    struct Cursor<'a> {
        bytes: &'a [u8],
        off: usize,
    }
    impl<'a> Cursor<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8]> {
            if self.off + n > self.bytes.len() {
                return Err(Error::Format {
                    line: 0,
                    msg: "truncated checkpoint".into(),
                });
            }
            let s = &self.bytes[self.off..self.off + n];
            self.off += n;
            Ok(s)
        }
    }
    let mut cur = Cursor {
        bytes: &bytes,
        off: 8,
    };
    let iteration = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    let n_coeffs = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let mut coeffs = Vec::with_capacity(n_coeffs);
    for _ in 0..n_coeffs {
        coeffs.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
    }
    let n_actions = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let mut actions = Vec::with_capacity(n_actions);
    for _ in 0..n_actions {
        actions.push(u32::from_le_bytes(cur.take(4)?.try_into().unwrap()));
    }
    Ok(Checkpoint {
        iteration,
        coeffs,
        actions,
    })
}
