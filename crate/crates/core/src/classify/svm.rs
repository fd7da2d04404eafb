//! Soft-margin kernel SVM trained on the dual with two-variable analytic
//! updates, combined one-vs-one for multiclass problems.
//!
//! The binary dual is
//!
//! ```text
//! min_α ½ αᵀQα - Σ αᵢ   s.t.  0 ≤ αᵢ ≤ C,  Σ αᵢyᵢ = 0,   Qᵢⱼ = yᵢyⱼK(xᵢ, xⱼ)
//! ```
//!
//! With gradient `G = Qα - 1` and `vᵢ = -yᵢGᵢ`, the sets
//! `I_up = {αᵢ < C, yᵢ = +1} ∪ {αᵢ > 0, yᵢ = -1}` and
//! `I_low = {αᵢ < C, yᵢ = -1} ∪ {αᵢ > 0, yᵢ = +1}` give the optimality gap
//! `max_{I_up} v - min_{I_low} v`. A sweep makes up to `n` steps. Each step
//! takes the point of `I_up` with the largest `v` (lowest index on ties),
//! pairs it with the `I_low` partner of largest second-order gain among those
//! violating by more than `tol`, and updates both multipliers in closed form.
//! A sweep without updates counts as a clean pass; training stops after
//! `max_passes` consecutive clean passes, at which point the gap is below
//! `tol` and the bias is placed at the middle of it.
//!
//! Unscaled inputs under a polynomial kernel can make the dual so badly
//! conditioned that the sweep cap is reached first; that surfaces as
//! [`Error::Convergence`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classify::kernel::{gram_matrix, KernelSpec};
use crate::classify::TrainingSet;
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

/// Pairs beyond this many vectors are subsampled by the median heuristic.
pub const MEDIAN_HEURISTIC_SAMPLE: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Box constraint.
    pub c: f64,
    /// KKT tolerance.
    pub tol: f64,
    /// Consecutive update-free sweeps required to stop.
    pub max_passes: usize,
    /// Hard cap on sweeps before giving up with a convergence error.
    pub max_sweeps: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 10.0,
            tol: 1e-3,
            max_passes: 10,
            max_sweeps: 10_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Parameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Parameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_passes == 0 || self.max_sweeps == 0 {
            return Err(Error::Parameter("max_passes and max_sweeps must be positive".into()));
        }
        Ok(())
    }
}

/// Dual solution of one binary problem over all of its training points.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub sweeps: usize,
}

struct Solver<'a> {
    k: &'a [f64],
    y: &'a [f64],
    c: f64,
    n: usize,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl Solver<'_> {
    #[inline]
    fn kern(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.kern(i, j)
    }

    #[inline]
    fn v(&self, i: usize) -> f64 {
        -self.y[i] * self.grad[i]
    }

    #[inline]
    fn in_up(&self, i: usize) -> bool {
        (self.y[i] > 0.0 && self.alpha[i] < self.c) || (self.y[i] < 0.0 && self.alpha[i] > 0.0)
    }

    #[inline]
    fn in_low(&self, i: usize) -> bool {
        (self.y[i] < 0.0 && self.alpha[i] < self.c) || (self.y[i] > 0.0 && self.alpha[i] > 0.0)
    }

    /// `(max_{I_up} v, min_{I_low} v)`.
    fn extremes(&self) -> (f64, f64) {
        let mut up = f64::NEG_INFINITY;
        let mut low = f64::INFINITY;
        for t in 0..self.n {
            let v = self.v(t);
            if self.in_up(t) {
                up = up.max(v);
            }
            if self.in_low(t) {
                low = low.min(v);
            }
        }
        (up, low)
    }

    fn curvature(&self, i: usize, j: usize) -> f64 {
        let a = self.kern(i, i) + self.kern(j, j) - 2.0 * self.kern(i, j);
        if a > 0.0 {
            a
        } else {
            TAU
        }
    }

    /// Best `I_low` partner for `i ∈ I_up` among points whose value is below
    /// `vᵢ` by more than `tol`.
    fn partner(&self, i: usize, tol: f64) -> Option<usize> {
        let vi = self.v(i);
        let mut best: Option<(usize, f64)> = None;
        for t in 0..self.n {
            if t == i || !self.in_low(t) {
                continue;
            }
            let gap = vi - self.v(t);
            if gap <= tol {
                continue;
            }
            let gain = gap * gap / self.curvature(i, t);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((t, gain));
            }
        }
        best.map(|(t, _)| t)
    }

    /// Analytic two-variable step on `(i ∈ I_up, j ∈ I_low)`.
    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if self.y[i] != self.y[j] {
            let quad = {
                let q = self.q(i, i) + self.q(j, j) + 2.0 * self.q(i, j);
                if q > 0.0 {
                    q
                } else {
                    TAU
                }
            };
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = {
                let q = self.q(i, i) + self.q(j, j) - 2.0 * self.q(i, j);
                if q > 0.0 {
                    q
                } else {
                    TAU
                }
            };
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..self.n {
            self.grad[t] += self.q(i, t) * di + self.q(j, t) * dj;
        }
    }

    /// One sweep of up to `n` steps, each on the maximal violating point of
    /// `I_up` (lowest index on ties) and its best partner; returns the number
    /// of updates made.
    fn sweep(&mut self, tol: f64) -> usize {
        let mut updates = 0;
        for _ in 0..self.n {
            let mut best: Option<(usize, f64)> = None;
            for t in 0..self.n {
                if self.in_up(t) && best.is_none_or(|(_, v)| self.v(t) > v) {
                    best = Some((t, self.v(t)));
                }
            }
            let Some((i, _)) = best else { break };
            let Some(j) = self.partner(i, tol) else {
                break;
            };
            self.update(i, j);
            updates += 1;
        }
        updates
    }
}

/// Solves one binary problem given its kernel matrix and ±1 labels.
pub fn solve_binary(kernel_matrix: &[f64], y: &[f64], params: &SvmParams) -> Result<BinarySolution> {
    params.validate()?;
    let n = y.len();
    if kernel_matrix.len() != n * n {
        return Err(Error::Parameter("kernel matrix does not match label count".into()));
    }
    if !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(Error::Training("binary problem needs both labels".into()));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Parameter("labels must be +1 or -1".into()));
    }
    let mut solver = Solver {
        k: kernel_matrix,
        y,
        c: params.c,
        n,
        alpha: vec![0.0; n],
        grad: vec![-1.0; n],
    };
    let mut clean = 0;
    let mut sweeps = 0;
    while clean < params.max_passes {
        if sweeps == params.max_sweeps {
            let bias = midpoint_bias(&solver);
            let worst = kkt_residuals(kernel_matrix, y, params.c, &solver.alpha, bias)
                .into_iter()
                .fold(0.0, f64::max);
            return Err(Error::Convergence {
                worst_residual: worst,
            });
        }
        sweeps += 1;
        if solver.sweep(params.tol) == 0 {
            clean += 1;
        } else {
            clean = 0;
        }
    }
    let bias = midpoint_bias(&solver);
    let worst = kkt_residuals(kernel_matrix, y, params.c, &solver.alpha, bias)
        .into_iter()
        .fold(0.0, f64::max);
    if worst > params.tol {
        return Err(Error::Convergence {
            worst_residual: worst,
        });
    }
    Ok(BinarySolution {
        alpha: solver.alpha,
        bias,
        sweeps,
    })
}

fn midpoint_bias(solver: &Solver<'_>) -> f64 {
    let (up, low) = solver.extremes();
    match (up.is_finite(), low.is_finite()) {
        (true, true) => 0.5 * (up + low),
        (true, false) => up,
        (false, true) => low,
        (false, false) => 0.0,
    }
}

/// Per-point violation of the KKT conditions for decision
/// `f(x) = Σ αⱼyⱼK(xⱼ, x) + b`:
/// `αᵢ = 0 ⇒ yᵢf ≥ 1`, `0 < αᵢ < C ⇒ yᵢf = 1`, `αᵢ = C ⇒ yᵢf ≤ 1`.
pub fn kkt_residuals(kernel_matrix: &[f64], y: &[f64], c: f64, alpha: &[f64], bias: f64) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let f: f64 = (0..n)
                .filter(|&j| alpha[j] != 0.0)
                .map(|j| alpha[j] * y[j] * kernel_matrix[j * n + i])
                .sum::<f64>()
                + bias;
            let margin = y[i] * f;
            if alpha[i] <= 0.0 {
                (1.0 - margin).max(0.0)
            } else if alpha[i] >= c {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            }
        })
        .collect()
}

/// One pairwise machine: `positive` votes when the decision is `>= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    pub support_vectors: Vec<Vec<f64>>,
    /// `αᵢyᵢ` for each support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl BinaryMachine {
    pub fn decision(&self, kernel: &KernelSpec, query: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * kernel.apply(sv, query))
            .sum::<f64>()
            + self.bias
    }
}

/// One-vs-one multiclass SVM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedSvm {
    pub class_set: Vec<String>,
    pub kernel: KernelSpec,
    pub c: f64,
    pub dim: usize,
    pub machines: Vec<BinaryMachine>,
}

/// Trains one machine per unordered class pair `(a, b)`, `a < b` in class
/// set order, with class `a` labelled `+1`. Pairs train in parallel; each
/// solve is sequential and deterministic.
pub fn svm_train(train: &TrainingSet, kernel: KernelSpec, params: &SvmParams) -> Result<TrainedSvm> {
    kernel.validate()?;
    params.validate()?;
    let classes = train.class_set().len();
    let mut members = vec![Vec::new(); classes];
    for (i, &l) in train.labels().iter().enumerate() {
        members[l].push(i);
    }
    let present: Vec<usize> = (0..classes).filter(|&c| !members[c].is_empty()).collect();
    if present.len() < 2 {
        return Err(Error::Training(format!(
            "need at least two classes with samples, found {}",
            present.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = present
        .iter()
        .enumerate()
        .flat_map(|(n, &a)| present[n + 1..].iter().map(move |&b| (a, b)))
        .collect();
    let machines = pairs
        .par_iter()
        .map(|&(a, b)| {
            let idx: Vec<usize> = members[a].iter().chain(&members[b]).copied().collect();
            let x: Vec<Vec<f64>> = idx.iter().map(|&i| train.vectors()[i].clone()).collect();
            let y: Vec<f64> = idx
                .iter()
                .map(|&i| if train.labels()[i] == a { 1.0 } else { -1.0 })
                .collect();
            let k = gram_matrix(&x, &kernel)?;
            let sol = solve_binary(&k, &y, params)?;
            let (support_vectors, coefficients) = x
                .into_iter()
                .zip(sol.alpha.iter().zip(&y))
                .filter(|(_, (alpha, _))| **alpha > 0.0)
                .map(|(v, (alpha, y))| (v, alpha * y))
                .unzip();
            Ok(BinaryMachine {
                positive: a,
                negative: b,
                support_vectors,
                coefficients,
                bias: sol.bias,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainedSvm {
        class_set: train.class_set().to_vec(),
        kernel,
        c: params.c,
        dim: train.dim(),
        machines,
    })
}

/// Majority vote over the pairwise machines. Ties go to the class whose won
/// machines have the largest summed `|decision|`, then to class set order.
pub fn svm_predict(model: &TrainedSvm, query: &[f64]) -> Result<usize> {
    if query.len() != model.dim {
        return Err(Error::Parameter(format!(
            "query has {} dimensions, model expects {}",
            query.len(),
            model.dim
        )));
    }
    let classes = model.class_set.len();
    let mut votes = vec![0usize; classes];
    let mut confidence = vec![0.0f64; classes];
    for m in &model.machines {
        let f = m.decision(&model.kernel, query);
        let winner = if f >= 0.0 { m.positive } else { m.negative };
        votes[winner] += 1;
        confidence[winner] += f.abs();
    }
    Ok((0..classes)
        .min_by(|&a, &b| {
            votes[b]
                .cmp(&votes[a])
                .then(confidence[b].total_cmp(&confidence[a]))
                .then(a.cmp(&b))
        })
        .expect("at least two classes"))
}

impl TrainedSvm {
    pub fn predict(&self, query: &[f64]) -> Result<usize> {
        svm_predict(self, query)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("bad model dump: {e}")))
    }
}

/// Median pairwise Euclidean distance over pairs of non-identical vectors.
/// Above [`MEDIAN_HEURISTIC_SAMPLE`] vectors, a seeded subsample of that size
/// is used.
pub fn sigma_median_heuristic(vectors: &[Vec<f64>], seed: u64) -> Result<f64> {
    let chosen: Vec<&Vec<f64>> = if vectors.len() > MEDIAN_HEURISTIC_SAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, vectors.len(), MEDIAN_HEURISTIC_SAMPLE).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &vectors[i]).collect()
    } else {
        vectors.iter().collect()
    };
    let mut dists = Vec::new();
    for (n, a) in chosen.iter().enumerate() {
        for b in &chosen[n + 1..] {
            if a.len() != b.len() {
                return Err(Error::Parameter("vectors differ in dimension".into()));
            }
            let d = a
                .iter()
                .zip(b.iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::Degenerate(
            "median heuristic needs two distinct vectors".into(),
        ));
    }
    dists.sort_unstable_by(f64::total_cmp);
    let mid = dists.len() / 2;
    Ok(if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    })
}
