//! Stationary distributions of finite continuous-time Markov chains.
//!
//! A [`RateMatrix`] stores the off-diagonal generator entries as labeled
//! transitions; the diagonal is implied as the negative row sum. Small chains
//! are solved directly (one balance equation replaced by the normalization
//! row); larger chains use power iteration on the uniformized jump chain
//! `P = I + Q/Λ` with `Λ = 1.05 · max_i |q_ii|`.

use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;
use thiserror::Error;

/// Chains up to this many states are solved by dense LU.
pub const DENSE_STATE_LIMIT: usize = 2000;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;
const UNIFORMIZATION_FACTOR: f64 = 1.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("transition graph is not strongly connected")]
    NotIrreducible,
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("balance system is singular")]
    Singular,
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

/// Sparse CTMC generator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateMatrix {
    n_states: usize,
    transitions: Vec<Transition>,
}

impl RateMatrix {
    pub fn new(n_states: usize) -> Self {
        assert!(n_states > 0, "a chain needs at least one state");
        Self {
            n_states,
            transitions: Vec::new(),
        }
    }

    /// Adds `rate` to the `from → to` entry. Zero rates and self loops are
    /// dropped since they do not change the generator.
    pub fn add(&mut self, from: usize, to: usize, rate: f64) {
        assert!(
            rate.is_finite() && rate >= 0.0,
            "transition rate must be finite and nonnegative, got {rate}"
        );
        assert!(from < self.n_states && to < self.n_states, "state index out of range");
        if rate > 0.0 && from != to {
            self.transitions.push(Transition { from, to, rate });
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Total outgoing rate of every state (`-q_ii`).
    pub fn out_rates(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        for t in &self.transitions {
            out[t.from] += t.rate;
        }
        out
    }

    /// Dense generator including the diagonal.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.n_states, self.n_states);
        for t in &self.transitions {
            q[(t.from, t.to)] += t.rate;
            q[(t.from, t.from)] -= t.rate;
        }
        q
    }

    /// Multiplies every rate by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0);
        Self {
            n_states: self.n_states,
            transitions: self
                .transitions
                .iter()
                .map(|t| Transition {
                    rate: t.rate * factor,
                    ..*t
                })
                .collect(),
        }
    }

    fn adjacency(&self, reverse: bool) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_states];
        for t in &self.transitions {
            if reverse {
                adj[t.to].push(t.from);
            } else {
                adj[t.from].push(t.to);
            }
        }
        adj
    }

    fn search(adj: &[Vec<usize>], root: usize) -> Vec<bool> {
        let mut seen = vec![false; adj.len()];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// States reachable from `root` along positive-rate transitions.
    pub fn reachable_from(&self, root: usize) -> Vec<bool> {
        Self::search(&self.adjacency(false), root)
    }

    /// Sub-generator over the states flagged in `keep`, with the index map
    /// from sub-chain states back to the original states. Transitions leaving
    /// the kept set are discarded.
    pub fn restrict(&self, keep: &[bool]) -> (RateMatrix, Vec<usize>) {
        assert_eq!(keep.len(), self.n_states);
        let kept: Vec<usize> = (0..self.n_states).filter(|&i| keep[i]).collect();
        let mut new_index = vec![usize::MAX; self.n_states];
        for (k, &i) in kept.iter().enumerate() {
            new_index[i] = k;
        }
        let mut sub = RateMatrix::new(kept.len());
        for t in &self.transitions {
            if keep[t.from] && keep[t.to] {
                sub.add(new_index[t.from], new_index[t.to], t.rate);
            }
        }
        (sub, kept)
    }
}

/// True iff the transition graph is strongly connected.
pub fn check_irreducible(matrix: &RateMatrix) -> bool {
    if matrix.n_states == 1 {
        return true;
    }
    let forward = matrix.reachable_from(0);
    if !forward.iter().all(|&b| b) {
        return false;
    }
    RateMatrix::search(&matrix.adjacency(true), 0).iter().all(|&b| b)
}

/// `‖πQ‖∞` for a probability vector over the chain.
pub fn residual(matrix: &RateMatrix, pi: &[f64]) -> f64 {
    assert_eq!(pi.len(), matrix.n_states);
    let mut flow = vec![0.0; matrix.n_states];
    for t in &matrix.transitions {
        let f = pi[t.from] * t.rate;
        flow[t.to] += f;
        flow[t.from] -= f;
    }
    flow.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Dense up to [`DENSE_STATE_LIMIT`] states, power iteration above.
    Auto,
    Dense,
    PowerIteration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub method: SolveMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            method: SolveMethod::Auto,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    probabilities: Vec<f64>,
    residual: f64,
    iterations: usize,
}

impl StationaryDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn into_probabilities(self) -> Vec<f64> {
        self.probabilities
    }

    /// `‖πQ‖∞` of the reported (clamped, renormalized) vector.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Power-iteration sweeps used; 0 for the direct solve.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Solves `πQ = 0, Σπ = 1` with default options and the given tolerance.
pub fn solve_stationary(
    matrix: &RateMatrix,
    tolerance: f64,
) -> Result<StationaryDistribution, SolverError> {
    solve_with(matrix, &SolverOptions::with_tolerance(tolerance))
}

pub fn solve_with(
    matrix: &RateMatrix,
    options: &SolverOptions,
) -> Result<StationaryDistribution, SolverError> {
    if !(options.tolerance > 0.0) {
        return Err(SolverError::InvalidTolerance(options.tolerance));
    }
    if !check_irreducible(matrix) {
        return Err(SolverError::NotIrreducible);
    }
    if matrix.n_states == 1 {
        return Ok(StationaryDistribution {
            probabilities: vec![1.0],
            residual: 0.0,
            iterations: 0,
        });
    }
    let dense = match options.method {
        SolveMethod::Auto => matrix.n_states <= DENSE_STATE_LIMIT,
        SolveMethod::Dense => true,
        SolveMethod::PowerIteration => false,
    };
    if dense {
        dense_solve(matrix, options.tolerance)
    } else {
        power_iteration(matrix, options)
    }
}

/// Stationary law of the closed communicating class containing `root`.
///
/// Every state reachable from `root` must be able to return to it; states
/// outside the class get probability zero. This is how chains with
/// structurally unreachable states (e.g. PU occupancy when PUs never arrive)
/// are solved.
pub fn solve_recurrent_class(
    matrix: &RateMatrix,
    root: usize,
    options: &SolverOptions,
) -> Result<StationaryDistribution, SolverError> {
    let keep = matrix.reachable_from(root);
    if keep.iter().all(|&k| k) {
        return solve_with(matrix, options);
    }
    let (sub, kept) = matrix.restrict(&keep);
    // Mass leaking out of the class would make it transient.
    let leaks = matrix
        .transitions
        .iter()
        .any(|t| keep[t.from] && !keep[t.to]);
    if leaks {
        return Err(SolverError::NotIrreducible);
    }
    let sub_pi = solve_with(&sub, options)?;
    let mut probabilities = vec![0.0; matrix.n_states];
    for (k, &i) in kept.iter().enumerate() {
        probabilities[i] = sub_pi.probabilities[k];
    }
    Ok(StationaryDistribution {
        probabilities,
        residual: sub_pi.residual,
        iterations: sub_pi.iterations,
    })
}

fn finalize(
    matrix: &RateMatrix,
    mut pi: Vec<f64>,
    iterations: usize,
) -> StationaryDistribution {
    for p in pi.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= total;
    }
    let residual = residual(matrix, &pi);
    StationaryDistribution {
        probabilities: pi,
        residual,
        iterations,
    }
}

fn dense_solve(matrix: &RateMatrix, tolerance: f64) -> Result<StationaryDistribution, SolverError> {
    let n = matrix.n_states;
    let mut a = matrix.to_dense().transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(SolverError::Singular)?;
    let result = finalize(matrix, x.iter().copied().collect(), 0);
    if !(result.residual <= tolerance) {
        return Err(SolverError::SolverDiverged {
            iterations: 0,
            residual: result.residual,
        });
    }
    Ok(result)
}

/// Source-sorted adjacency with rates pre-divided by `Λ`.
struct Uniformized {
    start: Vec<usize>,
    target: Vec<usize>,
    prob: Vec<f64>,
    stay: Vec<f64>,
    lambda: f64,
}

impl Uniformized {
    fn new(matrix: &RateMatrix) -> Self {
        let n = matrix.n_states;
        let out = matrix.out_rates();
        let lambda = UNIFORMIZATION_FACTOR * out.iter().cloned().fold(0.0, f64::max);
        let mut start = vec![0usize; n + 1];
        for t in &matrix.transitions {
            start[t.from + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let m = matrix.transitions.len();
        let mut target = vec![0usize; m];
        let mut prob = vec![0.0; m];
        for t in &matrix.transitions {
            let k = fill[t.from];
            fill[t.from] += 1;
            target[k] = t.to;
            prob[k] = t.rate / lambda;
        }
        let stay = out.iter().map(|o| 1.0 - o / lambda).collect();
        Self {
            start,
            target,
            prob,
            stay,
            lambda,
        }
    }

    /// `next = x P`; returns `max_i |next_i - x_i|`.
    fn step(&self, x: &[f64], next: &mut [f64]) -> f64 {
        for (nx, (xi, s)) in next.iter_mut().zip(x.iter().zip(&self.stay)) {
            *nx = xi * s;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for k in self.start[i]..self.start[i + 1] {
                next[self.target[k]] += xi * self.prob[k];
            }
        }
        next.iter()
            .zip(x)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn power_iteration(
    matrix: &RateMatrix,
    options: &SolverOptions,
) -> Result<StationaryDistribution, SolverError> {
    let n = matrix.n_states;
    let chain = Uniformized::new(matrix);
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut last_residual = f64::INFINITY;
    for iteration in 1..=options.max_iterations {
        // ‖xQ‖∞ = Λ · ‖xP − x‖∞
        let change = chain.step(&x, &mut next);
        std::mem::swap(&mut x, &mut next);
        last_residual = chain.lambda * change;
        if iteration % 64 == 0 {
            let total: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= total);
        }
        if last_residual <= 0.5 * options.tolerance {
            let result = finalize(matrix, x.clone(), iteration);
            if result.residual <= options.tolerance {
                return Ok(result);
            }
        }
    }
    Err(SolverError::SolverDiverged {
        iterations: options.max_iterations,
        residual: last_residual,
    })
}
