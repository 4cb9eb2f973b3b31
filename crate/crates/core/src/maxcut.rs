//! Max-cut on the co-occurrence graph via a low-rank (Burer–Monteiro style)
//! relaxation: each vertex gets a unit vector y_i in R^k and we maximize
//! ½·Σ w_ij (1 − y_i·y_j) by Riemannian gradient ascent on the product of
//! unit spheres, with backtracking line search. The relaxed solution is
//! rounded with random hyperplanes and polished by 1-flip local search. A
//! brute-force oracle over 2^(n−1) assignments validates small instances.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CooccurGraph;
use crate::seed;

pub const BRUTE_FORCE_MAX_VERTICES: usize = 24;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Factor rank k. Defaults to ⌈√(2·|V|)⌉ capped at 32, floor 2.
    pub rank: Option<usize>,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    /// Random-hyperplane rounding trials.
    pub rounding_trials: usize,
    /// Cap on local-search passes; `None` runs until no improving 1-flip
    /// exists.
    pub local_search_passes: Option<usize>,
    /// Use co-occurrence counts as weights instead of unit weights.
    pub weighted: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rank: None,
            max_iterations: 1000,
            grad_tolerance: 1e-6,
            rounding_trials: 64,
            local_search_passes: None,
            weighted: false,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.rank {
            if k < 2 {
                return Err(Error::SolverConfig(format!("rank {k} < 2")));
            }
        }
        if self.rounding_trials < 1 {
            return Err(Error::SolverConfig("rounding_trials must be >= 1".into()));
        }
        Ok(())
    }

    pub fn effective_rank(&self, n: usize) -> usize {
        match self.rank {
            Some(k) => k.max(2),
            None => (((2.0 * n as f64).sqrt().ceil()) as usize).clamp(2, 32),
        }
    }
}

/// A bipartition of the graph: side 0 stays in the structured source, side 1
/// moves to the unstructured source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutResult {
    pub side: Vec<u8>,
    pub cut_value: f64,
    /// Relaxation objective at termination (equals cut_value for exact and
    /// fallback paths).
    pub sdp_objective: f64,
    /// Accepted ascent iterations.
    pub iterations: usize,
    pub seed: u64,
    pub weighted: bool,
    /// Set when the relaxation failed and the greedy fallback produced the
    /// cut.
    pub used_fallback: bool,
}

fn edge_weight(w: u32, weighted: bool) -> f64 {
    if weighted {
        w as f64
    } else {
        1.0
    }
}

/// Cut value of a side assignment: total weight of crossing edges, summed in
/// edge order. The same routine is used to store and to recheck cut values,
/// so equality is exact.
pub fn cut_value(graph: &CooccurGraph, side: &[u8], weighted: bool) -> f64 {
    graph
        .edges
        .iter()
        .filter(|e| side[e.i as usize] != side[e.j as usize])
        .map(|e| edge_weight(e.weight, weighted))
        .sum()
}

/// The factor matrix: n rows, each a unit vector in R^k, stored row-major.
pub struct FactorMatrix {
    pub n: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl FactorMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(graph: &CooccurGraph, y: &FactorMatrix, weighted: bool) -> f64 {
    graph
        .edges
        .iter()
        .map(|e| {
            let w = edge_weight(e.weight, weighted);
            0.5 * w * (1.0 - dot(y.row(e.i as usize), y.row(e.j as usize)))
        })
        .sum()
}

fn normalize_rows(data: &mut [f64], n: usize, k: usize) {
    for i in 0..n {
        let row = &mut data[i * k..(i + 1) * k];
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in row.iter_mut() {
                *x /= norm;
            }
        } else {
            row[0] = 1.0;
        }
    }
}

/// Riemannian gradient of the objective: the Euclidean gradient
/// −½·Σ_j w_ij y_j projected onto the tangent space of each sphere.
fn riemannian_gradient(graph: &CooccurGraph, y: &FactorMatrix, weighted: bool) -> Vec<f64> {
    let (n, k) = (y.n, y.k);
    let mut grad = vec![0.0; n * k];
    for e in &graph.edges {
        let w = 0.5 * edge_weight(e.weight, weighted);
        let (i, j) = (e.i as usize, e.j as usize);
        for d in 0..k {
            grad[i * k + d] -= w * y.data[j * k + d];
            grad[j * k + d] -= w * y.data[i * k + d];
        }
    }
    for i in 0..n {
        let yi = &y.data[i * k..(i + 1) * k];
        let gi = &grad[i * k..(i + 1) * k];
        let proj = dot(gi, yi);
        for d in 0..k {
            grad[i * k + d] -= proj * yi[d];
        }
    }
    grad
}

/// Solve the low-rank relaxation. Each returned row is unit-norm within
/// 1e-9; the objective never decreases across accepted iterations.
pub fn solve_bm(graph: &CooccurGraph, config: &SolverConfig) -> Result<(FactorMatrix, f64, usize)> {
    config.validate()?;
    let n = graph.vertex_count();
    let k = config.effective_rank(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "bm-init"));
    let mut data = vec![0.0; n * k];
    for x in data.iter_mut() {
        *x = rng.sample::<f64, _>(StandardNormal);
    }
    normalize_rows(&mut data, n, k);
    let mut y = FactorMatrix { n, k, data };

    let mut f = objective(graph, &y, config.weighted);
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective {
            iteration: 0,
            last_objective: 0.0,
        });
    }
    let mut iterations = 0;
    // warm-started backtracking: begin each search from twice the last
    // accepted step
    let mut step: f64 = 1.0;
    for it in 0..config.max_iterations {
        let grad = riemannian_gradient(graph, &y, config.weighted);
        let grad_norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::NonFiniteObjective {
                iteration: it,
                last_objective: f,
            });
        }
        if grad_norm <= config.grad_tolerance {
            break;
        }
        step = (step * 2.0).min(1e6);
        let mut accepted = false;
        while step > 1e-14 {
            let mut trial = y.data.clone();
            for (t, g) in trial.iter_mut().zip(&grad) {
                *t += step * g;
            }
            normalize_rows(&mut trial, n, k);
            let trial_y = FactorMatrix { n, k, data: trial };
            let f_trial = objective(graph, &trial_y, config.weighted);
            if !f_trial.is_finite() {
                return Err(Error::NonFiniteObjective {
                    iteration: it,
                    last_objective: f,
                });
            }
            if f_trial >= f + 0.2 * step * grad_norm * grad_norm {
                y = trial_y;
                f = f_trial;
                accepted = true;
                iterations += 1;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((y, f, iterations))
}

/// Random-hyperplane rounding: sample `trials` standard-normal directions,
/// split by the sign of the projection, keep the best cut. Trial t uses an
/// RNG stream derived from (seed, t), so the result is independent of
/// evaluation order.
pub fn round_cut(
    y: &FactorMatrix,
    graph: &CooccurGraph,
    trials: usize,
    base_seed: u64,
    weighted: bool,
) -> Vec<u8> {
    let mut best_side = vec![0u8; y.n];
    let mut best_value = f64::NEG_INFINITY;
    for t in 0..trials.max(1) {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::derive_indexed(base_seed, "rounding-trial", t as u64));
        let g: Vec<f64> = (0..y.k).map(|_| rng.sample(StandardNormal)).collect();
        let side: Vec<u8> = (0..y.n)
            .map(|i| if dot(y.row(i), &g) > 0.0 { 1 } else { 0 })
            .collect();
        let value = cut_value(graph, &side, weighted);
        if value > best_value {
            best_value = value;
            best_side = side;
        }
    }
    best_side
}

/// 1-flip local search: scan vertices in ascending order, flip the first
/// vertex whose flip strictly increases the cut, repeat until a full pass
/// makes no flip (or the pass cap is hit). Returns the number of flips.
pub fn refine_1flip(graph: &CooccurGraph, side: &mut [u8], weighted: bool) -> usize {
    refine_1flip_capped(graph, side, weighted, None)
}

pub fn refine_1flip_capped(
    graph: &CooccurGraph,
    side: &mut [u8],
    weighted: bool,
    max_passes: Option<usize>,
) -> usize {
    let n = graph.vertex_count();
    let mut flips = 0;
    let mut passes = 0;
    loop {
        let mut changed = false;
        for v in 0..n {
            // gain of flipping v: same-side neighbor weight minus
            // crossing neighbor weight
            let mut gain = 0.0;
            for &(u, w) in graph.neighbors(v) {
                let w = edge_weight(w, weighted);
                if side[v] == side[u as usize] {
                    gain += w;
                } else {
                    gain -= w;
                }
            }
            if gain > 0.0 {
                side[v] ^= 1;
                flips += 1;
                changed = true;
            }
        }
        passes += 1;
        if !changed || max_passes.is_some_and(|cap| passes >= cap) {
            return flips;
        }
    }
}

/// Exact maximum cut by enumeration, vertex 0 fixed to side 0. Refuses
/// graphs above [`BRUTE_FORCE_MAX_VERTICES`]. Uses Gray-code order so each
/// step flips one vertex and updates the cut incrementally.
pub fn brute_force_maxcut(graph: &CooccurGraph, weighted: bool) -> Result<CutResult> {
    let n = graph.vertex_count();
    if n > BRUTE_FORCE_MAX_VERTICES {
        return Err(Error::BruteForceTooLarge {
            vertices: n,
            max: BRUTE_FORCE_MAX_VERTICES,
        });
    }
    let mut side = vec![0u8; n];
    let mut current = 0.0;
    let mut best_value = 0.0;
    let mut best_side = side.clone();
    if n > 1 {
        let free = n - 1;
        for code in 1u64..(1u64 << free) {
            // vertex to flip: lowest set bit position of the Gray-code step,
            // offset by one because vertex 0 is pinned
            let v = code.trailing_zeros() as usize + 1;
            let mut delta = 0.0;
            for &(u, w) in graph.neighbors(v) {
                let w = edge_weight(w, weighted);
                if side[v] == side[u as usize] {
                    delta += w;
                } else {
                    delta -= w;
                }
            }
            side[v] ^= 1;
            current += delta;
            if current > best_value {
                best_value = current;
                best_side = side.clone();
            }
        }
    }
    // store the recount so the stored value matches recomputation exactly
    let best_value = cut_value(graph, &best_side, weighted);
    Ok(CutResult {
        cut_value: best_value,
        sdp_objective: best_value,
        side: best_side,
        iterations: 0,
        seed: 0,
        weighted,
        used_fallback: false,
    })
}

/// Greedy construction: place each vertex on the side that crosses more
/// weight against the already-placed vertices. Fallback when the relaxation
/// fails.
fn greedy_cut(graph: &CooccurGraph, weighted: bool) -> Vec<u8> {
    let n = graph.vertex_count();
    let mut side = vec![0u8; n];
    for v in 1..n {
        let mut to_zero = 0.0;
        let mut to_one = 0.0;
        for &(u, w) in graph.neighbors(v) {
            let u = u as usize;
            if u >= v {
                continue;
            }
            let w = edge_weight(w, weighted);
            if side[u] == 0 {
                to_one += w; // placing v on side 1 cuts this edge
            } else {
                to_zero += w;
            }
        }
        side[v] = if to_one >= to_zero { 1 } else { 0 };
    }
    side
}

/// Full pipeline: relax, round, refine. Degenerate graphs (no edges) short
/// circuit to the trivial cut; a solver failure falls back to greedy +
/// refine with a warning flag in the result.
pub fn maxcut_pipeline(graph: &CooccurGraph, config: &SolverConfig) -> Result<CutResult> {
    config.validate()?;
    let n = graph.vertex_count();
    if graph.edges.is_empty() {
        return Ok(CutResult {
            side: vec![0u8; n],
            cut_value: 0.0,
            sdp_objective: 0.0,
            iterations: 0,
            seed: config.seed,
            weighted: config.weighted,
            used_fallback: false,
        });
    }
    match solve_bm(graph, config) {
        Ok((y, sdp_objective, iterations)) => {
            let mut side = round_cut(
                &y,
                graph,
                config.rounding_trials,
                seed::derive(config.seed, "rounding"),
                config.weighted,
            );
            refine_1flip_capped(
                graph,
                &mut side,
                config.weighted,
                config.local_search_passes,
            );
            let value = cut_value(graph, &side, config.weighted);
            Ok(CutResult {
                side,
                cut_value: value,
                sdp_objective,
                iterations,
                seed: config.seed,
                weighted: config.weighted,
                used_fallback: false,
            })
        }
        Err(Error::NonFiniteObjective { .. }) => {
            let mut side = greedy_cut(graph, config.weighted);
            refine_1flip_capped(
                graph,
                &mut side,
                config.weighted,
                config.local_search_passes,
            );
            let value = cut_value(graph, &side, config.weighted);
            Ok(CutResult {
                side,
                cut_value: value,
                sdp_objective: value,
                iterations: 0,
                seed: config.seed,
                weighted: config.weighted,
                used_fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}
