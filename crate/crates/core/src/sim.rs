//! Stochastic rollout simulator with continuous collision checking, the
//! benchmark harness over random environments, and trajectory density
//! estimation.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::HybridBasis;
use crate::env::{generate_random_environment, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::grid::{grid_value_iteration, GridPolicy};
use crate::kernel::KernelSet;
use crate::mesh::{Axis, Mesh};
use crate::model::DmdpModel;
use crate::policy::{action_values, policy_iteration, IterationOptions, Policy};
use crate::value::ValueFunction;

/// Deterministic substream derivation from a root seed.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    let mut x = root;
    for &t in tags {
        x = splitmix64(x ^ splitmix64(t.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Goal,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<u32>,
    pub outcome: Outcome,
    pub steps: usize,
}

/// Action source for rollouts.
pub enum PolicySource<'a> {
    /// Nearest-representative-state lookup.
    Representative(&'a Policy),
    /// Greedy one-step lookahead on the value function.
    Lookahead {
        vf: &'a ValueFunction,
        model: &'a DmdpModel,
        samples: usize,
    },
    Grid(&'a GridPolicy),
}

/// True when the motion segment leaves the bounds or passes through any
/// obstacle cell. Uses a supercover grid traversal; segments through exact
/// cell corners check all four incident cells.
pub fn segment_collides(env: &Environment, from: [f64; 2], to: [f64; 2]) -> bool {
    let bounds = env.bounds();
    if !bounds.contains(to) {
        return true;
    }
    let delta = [to[0] - from[0], to[1] - from[1]];
    let cell = env.cell_size();
    let [nx, ny] = env.cell_counts();

    // Crossing parameters of interior grid lines per axis.
    let mut ts: Vec<f64> = vec![0.0, 1.0];
    let mut axis_ts: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for axis in 0..2 {
        if delta[axis] == 0.0 {
            continue;
        }
        let n_lines = if axis == 0 { nx } else { ny };
        let lo = from[axis].min(to[axis]);
        let hi = from[axis].max(to[axis]);
        let first = ((lo - bounds.min[axis]) / cell[axis]).ceil() as i64;
        let last = ((hi - bounds.min[axis]) / cell[axis]).floor() as i64;
        for k in first.max(0)..=last.min(n_lines as i64) {
            let x = bounds.min[axis] + k as f64 * cell[axis];
            let t = (x - from[axis]) / delta[axis];
            if (0.0..=1.0).contains(&t) {
                axis_ts[axis].push(t);
                ts.push(t);
            }
        }
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Interval midpoints give the traversed cells.
    for win in ts.windows(2) {
        if win[1] - win[0] < 1e-15 {
            continue;
        }
        let t = 0.5 * (win[0] + win[1]);
        let p = [from[0] + t * delta[0], from[1] + t * delta[1]];
        match env.cell_of(p) {
            Some(c) => {
                if env.is_obstacle(c) {
                    return true;
                }
            }
            None => return true,
        }
    }

    // Corner crossings: both axes cross at the same parameter.
    for &tx in &axis_ts[0] {
        for &ty in &axis_ts[1] {
            if (tx - ty).abs() > 1e-12 {
                continue;
            }
            let p = [from[0] + tx * delta[0], from[1] + tx * delta[1]];
            let cx = ((p[0] - bounds.min[0]) / cell[0]).round() as i64;
            let cy = ((p[1] - bounds.min[1]) / cell[1]).round() as i64;
            for dx in -1i64..=0 {
                for dy in -1i64..=0 {
                    let c = [cx + dx, cy + dy];
                    if c[0] < 0 || c[1] < 0 || c[0] >= nx as i64 || c[1] >= ny as i64 {
                        continue;
                    }
                    if env.is_obstacle([c[0] as usize, c[1] as usize]) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Simulates one episode: look up the action, step the noisy dynamics, check
/// the motion segment for collisions, stop on goal, collision, or timeout.
pub fn rollout<R: Rng>(
    env: &Environment,
    model: &DmdpModel,
    source: &PolicySource,
    start: Vec<f64>,
    max_steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let start_pos = [start[0], start[1]];
    match env.cell_of(start_pos) {
        Some(c) if !env.is_obstacle(c) => {}
        _ => return Err(Error::invalid("rollout start is not in free space")),
    }
    let mut states = vec![start.clone()];
    let mut actions = Vec::new();
    let mut state = start;
    for _ in 0..max_steps {
        if env.goal().contains([state[0], state[1]]) {
            return Ok(Trajectory {
                states,
                actions: actions.clone(),
                outcome: Outcome::Goal,
                steps: actions.len(),
            });
        }
        let action_idx = match source {
            PolicySource::Representative(policy) => policy.lookup(&state),
            PolicySource::Lookahead { vf, model, samples } => {
                let q = action_values(vf, model, &state, *samples, rng)?;
                let mut best = 0;
                for (a, &v) in q.iter().enumerate() {
                    if v > q[best] {
                        best = a;
                    }
                }
                best
            }
            PolicySource::Grid(grid) => grid.lookup(&state),
        };
        let next = model
            .dynamics
            .sample_next_state(&state, &model.actions()[action_idx], rng);
        actions.push(action_idx as u32);
        let collided = segment_collides(env, [state[0], state[1]], [next[0], next[1]]);
        states.push(next.clone());
        state = next;
        if collided {
            return Ok(Trajectory {
                states,
                actions: actions.clone(),
                outcome: Outcome::Collision,
                steps: actions.len(),
            });
        }
    }
    if env.goal().contains([state[0], state[1]]) {
        let steps = actions.len();
        return Ok(Trajectory {
            states,
            actions,
            outcome: Outcome::Goal,
            steps,
        });
    }
    let steps = actions.len();
    Ok(Trajectory {
        states,
        actions,
        outcome: Outcome::Timeout,
        steps,
    })
}

/// Benchmark method selection.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    /// 2D mesh with a 1D heading kernel.
    Hybrid2d1k { supports: usize, lengthscale: f64 },
    /// Pure 3D mesh with a periodic heading axis.
    Mesh3d { theta_cells: usize },
    /// Tabular grid baseline.
    Grid {
        resolution: [usize; 3],
        samples_per_pair: usize,
    },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Hybrid2d1k { .. } => "mesh2d+kernel1d",
            MethodSpec::Mesh3d { .. } => "mesh3d",
            MethodSpec::Grid { .. } => "grid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartHeading {
    Fixed(f64),
    Uniform,
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub ratios: Vec<f64>,
    pub envs_per_ratio: usize,
    pub runs_per_env: usize,
    pub max_steps: usize,
    pub methods: Vec<MethodSpec>,
    pub env_spec: EnvSpec,
    pub iteration: IterationOptions,
    pub start_heading: StartHeading,
}

impl BenchmarkConfig {
    /// Desk-scale protocol: 5 environments per ratio in {0.05, 0.15, 0.25},
    /// 10 rollouts each, 700 steps, fixed initial heading.
    pub fn desk_default(seed: u64) -> BenchmarkConfig {
        BenchmarkConfig {
            seed,
            ratios: vec![0.05, 0.15, 0.25],
            envs_per_ratio: 5,
            runs_per_env: 10,
            max_steps: 700,
            methods: vec![
                MethodSpec::Hybrid2d1k {
                    supports: 8,
                    lengthscale: std::f64::consts::FRAC_PI_4,
                },
                MethodSpec::Mesh3d { theta_cells: 8 },
                MethodSpec::Grid {
                    resolution: [20, 20, 8],
                    samples_per_pair: 64,
                },
            ],
            env_spec: EnvSpec::desk_default(),
            iteration: IterationOptions::defaults(1.0),
            start_heading: StartHeading::Fixed(0.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub method: String,
    pub ratio: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub mean_steps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvSummary {
    pub method: String,
    pub ratio: f64,
    pub env_index: usize,
    pub env_seed: u64,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub runs: usize,
    pub mean_steps: f64,
    pub solver_ok: bool,
    pub converged: bool,
    pub solve_seconds: f64,
    /// Value at the start state under the solved value function (zero when
    /// the goal value failed to propagate there); NaN for tabular methods.
    pub start_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub method: String,
    pub ratio: f64,
    pub env_index: usize,
    pub env_seed: u64,
    pub run: usize,
    pub outcome: Outcome,
    pub steps: usize,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkResults {
    pub metrics: Vec<MetricsRow>,
    pub per_env: Vec<EnvSummary>,
    pub trajectories: Vec<TrajectoryRecord>,
}

enum SolvedMethod {
    Continuous {
        vf: ValueFunction,
        policy: Policy,
        converged: bool,
    },
    Tabular(GridPolicy),
}

fn solve_method(
    env: &Environment,
    method: &MethodSpec,
    iteration: &IterationOptions,
    seed: u64,
) -> Result<(SolvedMethod, DmdpModel)> {
    let model = DmdpModel::dubins3d_default(env.goal().center);
    match method {
        MethodSpec::Hybrid2d1k {
            supports,
            lengthscale,
        } => {
            let mesh = Mesh::build(env, &[])?;
            let kernels = KernelSet::uniform_angle_grid(*supports, *lengthscale)?;
            let basis = Arc::new(HybridBasis::new(mesh, kernels));
            let mut opts = iteration.clone();
            opts.seed = seed;
            let (vf, policy, report) = policy_iteration(basis, &model, &opts)?;
            Ok((
                SolvedMethod::Continuous {
                    vf,
                    policy,
                    converged: report.converged,
                },
                model,
            ))
        }
        MethodSpec::Mesh3d { theta_cells } => {
            let theta = Axis {
                min: -std::f64::consts::PI,
                max: std::f64::consts::PI,
                cells: *theta_cells,
                periodic: true,
            };
            let mesh = Mesh::build(env, &[theta])?;
            let basis = Arc::new(HybridBasis::pure_mesh(mesh));
            // The heading axis is part of the mesh here.
            let model3 = DmdpModel::new(
                model.gamma(),
                model.goal_value(),
                model.actions().to_vec(),
                model.dynamics.clone(),
                model.reward,
                model.goal_center,
                vec![],
            )?;
            let mut opts = iteration.clone();
            opts.seed = seed;
            let (vf, policy, report) = policy_iteration(basis, &model3, &opts)?;
            Ok((
                SolvedMethod::Continuous {
                    vf,
                    policy,
                    converged: report.converged,
                },
                model3,
            ))
        }
        MethodSpec::Grid {
            resolution,
            samples_per_pair,
        } => {
            let policy = grid_value_iteration(env, &model, *resolution, *samples_per_pair, seed)?;
            Ok((SolvedMethod::Tabular(policy), model))
        }
    }
}

/// Runs the full benchmark protocol. Per-environment solver failures are
/// logged and counted as failed runs. Fully reproducible from the seed.
pub fn benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkResults> {
    let mut per_env = Vec::new();
    let mut trajectories = Vec::new();

    for (ratio_idx, &ratio) in cfg.ratios.iter().enumerate() {
        for env_idx in 0..cfg.envs_per_ratio {
            let env_seed = derive_seed(cfg.seed, &[1, ratio_idx as u64, env_idx as u64]);
            let env = generate_random_environment(env_seed, ratio, &cfg.env_spec)?;
            for (method_idx, method) in cfg.methods.iter().enumerate() {
                let solve_seed = derive_seed(
                    cfg.seed,
                    &[2, ratio_idx as u64, env_idx as u64, method_idx as u64],
                );
                let t0 = Instant::now();
                let solved = solve_method(&env, method, &cfg.iteration, solve_seed);
                let solve_seconds = t0.elapsed().as_secs_f64();
                let mut summary = EnvSummary {
                    method: method.name().to_string(),
                    ratio,
                    env_index: env_idx,
                    env_seed,
                    successes: 0,
                    collisions: 0,
                    timeouts: 0,
                    runs: cfg.runs_per_env,
                    mean_steps: cfg.max_steps as f64,
                    solver_ok: true,
                    converged: true,
                    solve_seconds,
                    start_value: f64::NAN,
                };
                let (solved, model) = match solved {
                    Ok(s) => s,
                    Err(err) => {
                        log::warn!(
                            "solver failure for {} on env {env_seed:#x} (ratio {ratio}): {err}",
                            method.name()
                        );
                        summary.solver_ok = false;
                        summary.converged = false;
                        summary.timeouts = cfg.runs_per_env;
                        per_env.push(summary);
                        continue;
                    }
                };
                if let SolvedMethod::Continuous { vf, converged, .. } = &solved {
                    summary.converged = *converged;
                    let pos = env.start_position();
                    let head = match cfg.start_heading {
                        StartHeading::Fixed(h) => h,
                        StartHeading::Uniform => 0.0,
                    };
                    summary.start_value = vf.eval_absorbing(&[pos[0], pos[1], head]);
                }

                let run_results: Vec<Result<Trajectory>> = (0..cfg.runs_per_env)
                    .into_par_iter()
                    .map(|run| {
                        let run_seed = derive_seed(
                            cfg.seed,
                            &[
                                3,
                                ratio_idx as u64,
                                env_idx as u64,
                                method_idx as u64,
                                run as u64,
                            ],
                        );
                        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
                        let pos = env.start_position();
                        let heading = match cfg.start_heading {
                            StartHeading::Fixed(h) => h,
                            StartHeading::Uniform => {
                                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
                            }
                        };
                        let start = vec![pos[0], pos[1], heading];
                        let source = match &solved {
                            SolvedMethod::Continuous { policy, .. } => {
                                PolicySource::Representative(policy)
                            }
                            SolvedMethod::Tabular(grid) => PolicySource::Grid(grid),
                        };
                        rollout(&env, &model, &source, start, cfg.max_steps, &mut rng)
                    })
                    .collect();

                let mut total_steps = 0usize;
                for (run, result) in run_results.into_iter().enumerate() {
                    let traj = result?;
                    match traj.outcome {
                        Outcome::Goal => {
                            summary.successes += 1;
                            total_steps += traj.steps;
                        }
                        Outcome::Collision => {
                            summary.collisions += 1;
                            total_steps += cfg.max_steps;
                        }
                        Outcome::Timeout => {
                            summary.timeouts += 1;
                            total_steps += cfg.max_steps;
                        }
                    }
                    trajectories.push(TrajectoryRecord {
                        method: method.name().to_string(),
                        ratio,
                        env_index: env_idx,
                        env_seed,
                        run,
                        outcome: traj.outcome,
                        steps: traj.steps,
                        states: traj.states,
                        actions: traj.actions,
                    });
                }
                summary.mean_steps = total_steps as f64 / cfg.runs_per_env as f64;
                per_env.push(summary);
            }
        }
    }

    // Aggregate per (method, ratio) in configuration order.
    let mut metrics = Vec::new();
    for method in &cfg.methods {
        for &ratio in &cfg.ratios {
            let rows: Vec<&EnvSummary> = per_env
                .iter()
                .filter(|s| s.method == method.name() && s.ratio == ratio)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let runs: usize = rows.iter().map(|s| s.runs).sum();
            let successes: usize = rows.iter().map(|s| s.successes).sum();
            let collisions: usize = rows.iter().map(|s| s.collisions).sum();
            let steps: f64 = rows.iter().map(|s| s.mean_steps * s.runs as f64).sum();
            metrics.push(MetricsRow {
                method: method.name().to_string(),
                ratio,
                success_rate: successes as f64 / runs as f64,
                collision_rate: collisions as f64 / runs as f64,
                mean_steps: steps / runs as f64,
            });
        }
    }

    Ok(BenchmarkResults {
        metrics,
        per_env,
        trajectories,
    })
}

/// Writes the metrics table as CSV.
pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: &mut W) -> Result<()> {
    writeln!(out, "method,ratio,success_rate,collision_rate,mean_steps")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.method, r.ratio, r.success_rate, r.collision_rate, r.mean_steps
        )?;
    }
    Ok(())
}

/// Writes trajectories as JSON lines.
pub fn write_trajectories_jsonl<W: Write>(records: &[TrajectoryRecord], out: &mut W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Validation(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Normalized visit-count histogram over a position grid, row-major
/// `iy * nx + ix`. Sums to one when any state falls inside the grid.
pub fn density_estimate(
    trajectories: &[&Trajectory],
    env: &Environment,
    grid: [usize; 2],
) -> Result<Vec<f64>> {
    if trajectories.is_empty() {
        return Err(Error::invalid("density estimate needs at least one trajectory"));
    }
    let bounds = env.bounds();
    let mut hist = vec![0.0f64; grid[0] * grid[1]];
    let mut total = 0.0;
    for traj in trajectories {
        for s in &traj.states {
            let p = [s[0], s[1]];
            if !bounds.contains(p) {
                continue;
            }
            let fx = (p[0] - bounds.min[0]) / bounds.extent(0);
            let fy = (p[1] - bounds.min[1]) / bounds.extent(1);
            let ix = ((fx * grid[0] as f64).floor() as usize).min(grid[0] - 1);
            let iy = ((fy * grid[1] as f64).floor() as usize).min(grid[1] - 1);
            hist[iy * grid[0] + ix] += 1.0;
            total += 1.0;
        }
    }
    if total > 0.0 {
        for h in hist.iter_mut() {
            *h /= total;
        }
    }
    Ok(hist)
}

/// Writes a density histogram as CSV rows `ix,iy,mass`.
pub fn write_density_csv<W: Write>(hist: &[f64], grid: [usize; 2], out: &mut W) -> Result<()> {
    writeln!(out, "ix,iy,mass")?;
    for iy in 0..grid[1] {
        for ix in 0..grid[0] {
            writeln!(out, "{},{},{}", ix, iy, hist[iy * grid[0] + ix])?;
        }
    }
    Ok(())
}
