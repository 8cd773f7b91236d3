//! Numerical estimation of the dimension of the space of closed
//! anti-invariant 2-forms `α = aβ + bγ` on the 4-torus.
//!
//! The four closedness equations are collocated at every grid node with
//! second-order central differences and periodic wraparound; products such as
//! `(fa)_{x2}` are differenced as products sampled at the neighbor nodes. Each
//! equation additionally carries an `O(h²)`-consistent stabilizer,
//! `κ h² Δ` over the equation's own differentiated axes, applied to `a` or
//! `b`. Plain odd-symmetric stencils annihilate every Nyquist mode on an even
//! grid, which pollutes the null space with lattice doubler modes (the f ≡ 0
//! kernel would be 32-dimensional instead of 2); the stabilizer lifts those
//! modes by `O(1)` while leaving constants exactly in the kernel and keeping
//! the truncation error at second order.
//!
//! Kernel dimensions are decided from the singular spectrum by a two-sided
//! rule: values below `σ_max · N⁻² · 1e-2` count as zero only when they are
//! separated from the rest by the demanded gap ratio; anything else is
//! reported as ambiguous, never guessed.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::r4family::PointwiseAcs;
use crate::symexpr::DEFAULT_SEED;

/// Stabilizer weight `κ`.
pub const STABILIZER: f64 = 0.5;
/// Number of singular values tracked per report.
pub const DEFAULT_K: usize = 8;
/// Default spectral-gap requirement.
pub const DEFAULT_TOL_RATIO: f64 = 1e3;

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
const ROW_SETS: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
/// Row sets whose stabilizer acts on `a`; the other two act on `b`. Together
/// they cover all four axes for each unknown.
const STAB_ON_A: [bool; 4] = [true, false, true, false];

fn pair_index(j: usize, k: usize) -> usize {
    PAIRS
        .iter()
        .position(|&(a, b)| (a, b) == (j, k))
        .expect("strictly increasing pair")
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("grid resolution must be even and at least 4, got {0}")]
    BadResolution(usize),
    #[error("field is not 1-periodic across the seam (deviation {0:e})")]
    NotPeriodic(f64),
    #[error("iteration budget of {0} matrix applications exhausted")]
    BudgetExceeded(usize),
    #[error("kernel basis requested but the estimated dimension is 0")]
    EmptyKernel,
}

/// Uniform periodic grid, `n` nodes per axis over period 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self, KernelError> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(KernelError::BadResolution(n));
        }
        Ok(GridSpec { n })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(4)
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn coords(&self, idx: usize) -> [f64; 4] {
        let n = self.n;
        let i3 = idx % n;
        let i2 = (idx / n) % n;
        let i1 = (idx / (n * n)) % n;
        let i0 = idx / (n * n * n);
        [
            i0 as f64 / n as f64,
            i1 as f64 / n as f64,
            i2 as f64 / n as f64,
            i3 as f64 / n as f64,
        ]
    }

    fn shift(&self, idx: usize, axis: usize, step: isize) -> usize {
        let n = self.n;
        let stride = [n * n * n, n * n, n, 1][axis];
        let digit = (idx / stride) % n;
        let moved = (digit as isize + step).rem_euclid(n as isize) as usize;
        idx - digit * stride + moved * stride
    }
}

/// Pointwise anti-invariant frame `(β, γ)` cached at the grid nodes, with
/// components over the coordinate pairs `(x1x2, x1y1, x1y2, x2y1, x2y2, y1y2)`.
pub struct FrameField {
    grid: GridSpec,
    beta: Vec<[f64; 6]>,
    gamma: Vec<[f64; 6]>,
}

impl FrameField {
    /// Frame of `J_f`: `β = (1, -f, 0, 0, 0, -1)`, `γ = (0, 0, 1, -1, 0, 0)`.
    /// The field must be 1-periodic; the seam is checked by sampling.
    pub fn from_f(f: &dyn Fn(&[f64; 4]) -> f64, grid: GridSpec) -> Result<Self, KernelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED ^ 0x5ea);
        for axis in 0..4 {
            for _ in 0..50 {
                let mut p = [(); 4].map(|_| rng.gen_range(0.0..1.0));
                p[axis] = 0.0;
                let mut q = p;
                q[axis] = 1.0;
                let deviation = (f(&p) - f(&q)).abs();
                if deviation > 1e-8 {
                    return Err(KernelError::NotPeriodic(deviation));
                }
            }
        }
        let mut beta = Vec::with_capacity(grid.node_count());
        for idx in 0..grid.node_count() {
            let value = f(&grid.coords(idx));
            beta.push([1.0, -value, 0.0, 0.0, 0.0, -1.0]);
        }
        let gamma = vec![[0.0, 0.0, 1.0, -1.0, 0.0, 0.0]; grid.node_count()];
        Ok(FrameField { grid, beta, gamma })
    }

    /// Frame of a pointwise structure via its (1,0)-coframe:
    /// `φ¹ = dx1 - i J*dx1`, `φ² = dx2 - i J*dx2`, `β + iγ = φ¹ ∧ φ²`.
    pub fn from_structure(acs: &PointwiseAcs, grid: GridSpec) -> Self {
        let mut beta = Vec::with_capacity(grid.node_count());
        let mut gamma = Vec::with_capacity(grid.node_count());
        for idx in 0..grid.node_count() {
            let m = acs.matrix_at(&grid.coords(idx));
            let r1 = [1.0, 0.0, 0.0, 0.0];
            let r2 = [0.0, 1.0, 0.0, 0.0];
            let s1: [f64; 4] = std::array::from_fn(|j| -m[0][j]);
            let s2: [f64; 4] = std::array::from_fn(|j| -m[1][j]);
            let wedge = |u: &[f64; 4], v: &[f64; 4]| -> [f64; 6] {
                std::array::from_fn(|p| {
                    let (j, k) = PAIRS[p];
                    u[j] * v[k] - u[k] * v[j]
                })
            };
            let rr = wedge(&r1, &r2);
            let ss = wedge(&s1, &s2);
            let rs = wedge(&r1, &s2);
            let sr = wedge(&s1, &r2);
            beta.push(std::array::from_fn(|p| rr[p] - ss[p]));
            gamma.push(std::array::from_fn(|p| rs[p] + sr[p]));
        }
        FrameField { grid, beta, gamma }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn beta_at(&self, idx: usize) -> &[f64; 6] {
        &self.beta[idx]
    }

    pub fn gamma_at(&self, idx: usize) -> &[f64; 6] {
        &self.gamma[idx]
    }
}

/// The discretized closedness system. Unknowns are `[a-block, b-block]`
/// (length `2·n⁴`), rows are the four equations at every node (length `4·n⁴`).
pub struct SparseOperator {
    field: FrameField,
    kappa: f64,
}

impl SparseOperator {
    pub fn rows(&self) -> usize {
        4 * self.field.grid.node_count()
    }

    pub fn cols(&self) -> usize {
        2 * self.field.grid.node_count()
    }

    pub fn grid(&self) -> GridSpec {
        self.field.grid
    }

    pub fn field(&self) -> &FrameField {
        &self.field
    }

    fn with_stabilizer(field: FrameField, kappa: f64) -> Self {
        SparseOperator { field, kappa }
    }

    /// Enumerates the raw entries of one row as `(column, coefficient)`.
    /// Entries hitting the same column are emitted separately.
    fn for_each_entry(&self, rs: usize, node: usize, mut visit: impl FnMut(usize, f64)) {
        let grid = self.field.grid;
        let npts = grid.node_count();
        let inv_2h = 0.5 * grid.resolution() as f64;
        let set = ROW_SETS[rs];
        for (m, &axis) in set.iter().enumerate() {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let rest: Vec<usize> = set.iter().copied().filter(|&x| x != axis).collect();
            let pair = pair_index(rest[0], rest[1]);
            let plus = grid.shift(node, axis, 1);
            let minus = grid.shift(node, axis, -1);
            visit(plus, sign * inv_2h * self.field.beta[plus][pair]);
            visit(minus, -sign * inv_2h * self.field.beta[minus][pair]);
            visit(npts + plus, sign * inv_2h * self.field.gamma[plus][pair]);
            visit(npts + minus, -sign * inv_2h * self.field.gamma[minus][pair]);
        }
        if self.kappa != 0.0 {
            let offset = if STAB_ON_A[rs] { 0 } else { npts };
            for &axis in &set {
                visit(offset + grid.shift(node, axis, 1), self.kappa);
                visit(offset + grid.shift(node, axis, -1), self.kappa);
                visit(offset + node, -2.0 * self.kappa);
            }
        }
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.cols());
        assert_eq!(out.len(), self.rows());
        let npts = self.field.grid.node_count();
        out.fill(0.0);
        for rs in 0..4 {
            for node in 0..npts {
                let mut acc = 0.0;
                self.for_each_entry(rs, node, |col, coeff| {
                    acc += coeff * v[col];
                });
                out[rs * npts + node] = acc;
            }
        }
    }

    pub fn apply_transpose(&self, w: &[f64], out: &mut [f64]) {
        assert_eq!(w.len(), self.rows());
        assert_eq!(out.len(), self.cols());
        let npts = self.field.grid.node_count();
        out.fill(0.0);
        for rs in 0..4 {
            for node in 0..npts {
                let weight = w[rs * npts + node];
                if weight == 0.0 {
                    continue;
                }
                self.for_each_entry(rs, node, |col, coeff| {
                    out[col] += coeff * weight;
                });
            }
        }
    }

    /// Explicit sparse triplets with per-row duplicate columns merged and
    /// exact zeros dropped.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let npts = self.field.grid.node_count();
        let mut out = Vec::new();
        let mut row_acc: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for rs in 0..4 {
            for node in 0..npts {
                row_acc.clear();
                self.for_each_entry(rs, node, |col, coeff| {
                    *row_acc.entry(col).or_insert(0.0) += coeff;
                });
                let row = rs * npts + node;
                for (&col, &coeff) in &row_acc {
                    if coeff != 0.0 {
                        out.push((row, col, coeff));
                    }
                }
            }
        }
        out
    }

    /// Largest per-row count of merged nonzero entries.
    pub fn max_row_nnz(&self) -> usize {
        let mut per_row = vec![0usize; self.rows()];
        for (row, _, _) in self.triplets() {
            per_row[row] += 1;
        }
        per_row.into_iter().max().unwrap_or(0)
    }
}

/// Discretizes the closedness system for `J_f` with the given pointwise `f`.
pub fn assemble(
    f: &dyn Fn(&[f64; 4]) -> f64,
    grid: GridSpec,
) -> Result<SparseOperator, KernelError> {
    Ok(SparseOperator::with_stabilizer(
        FrameField::from_f(f, grid)?,
        STABILIZER,
    ))
}

/// Discretizes the closedness system for a pointwise structure, deriving the
/// anti-invariant frame at every node. With a general frame every component
/// can be nonzero, so rows carry more entries than the ≤ 9 of the `J_f`
/// stencil (up to 13).
pub fn assemble_from_structure(acs: &PointwiseAcs, grid: GridSpec) -> SparseOperator {
    SparseOperator::with_stabilizer(FrameField::from_structure(acs, grid), STABILIZER)
}

// ---------------------------------------------------------------------------
// Spectrum estimation
// ---------------------------------------------------------------------------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Budget {
    used: usize,
    limit: usize,
}

impl Budget {
    fn charge(&mut self, n: usize) -> Result<(), KernelError> {
        self.used += n;
        if self.used > self.limit {
            return Err(KernelError::BudgetExceeded(self.limit));
        }
        Ok(())
    }
}

/// One kernel vector as grid fields.
#[derive(Debug, Clone, Serialize)]
pub struct KernelVector {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Spectrum summary and extracted kernel basis for one resolution.
#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub resolution: usize,
    /// The smallest tracked singular values, ascending.
    pub singular_values: Vec<f64>,
    pub sigma_max: f64,
    /// Numerical-zero threshold `σ_max · N⁻² · 1e-2`.
    pub threshold: f64,
    pub tol_ratio: f64,
    /// `σ_{d+1}/σ_d` when `d ≥ 1` and a next value exists.
    pub gap_ratio: Option<f64>,
    pub dim: usize,
    pub ambiguous: bool,
    #[serde(skip_serializing)]
    pub basis: Vec<KernelVector>,
    pub basis_residuals: Vec<f64>,
    pub matrix_applications: usize,
}

fn normal_apply(
    op: &SparseOperator,
    v: &[f64],
    tmp: &mut [f64],
    out: &mut [f64],
    budget: &mut Budget,
) -> Result<(), KernelError> {
    budget.charge(2)?;
    op.apply(v, tmp);
    op.apply_transpose(tmp, out);
    Ok(())
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(v, q);
        for (x, y) in v.iter_mut().zip(q) {
            *x -= c * y;
        }
    }
}

struct LanczosOutcome {
    basis: Vec<Vec<f64>>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
}

/// Symmetric Lanczos on `AᵀA` restricted to the orthogonal complement of
/// `deflated`, with full reorthogonalization.
fn lanczos(
    op: &SparseOperator,
    deflated: &[Vec<f64>],
    steps: usize,
    seed: u64,
    scale: f64,
    budget: &mut Budget,
) -> Result<LanczosOutcome, KernelError> {
    let ncols = op.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..ncols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    project_out(&mut v, deflated);
    let nv = norm(&v);
    for x in &mut v {
        *x /= nv;
    }
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut tmp = vec![0.0; op.rows()];
    let mut w = vec![0.0; ncols];
    for j in 0..steps {
        let vj = basis[j].clone();
        normal_apply(op, &vj, &mut tmp, &mut w, budget)?;
        let alpha = dot(&w, &vj);
        alphas.push(alpha);
        for (x, y) in w.iter_mut().zip(&vj) {
            *x -= alpha * y;
        }
        if j > 0 {
            let beta_prev = betas[j - 1];
            let vprev = &basis[j - 1];
            for (x, y) in w.iter_mut().zip(vprev) {
                *x -= beta_prev * y;
            }
        }
        project_out(&mut w, deflated);
        // Full reorthogonalization, twice for safety.
        project_out(&mut w, &basis);
        project_out(&mut w, &basis);
        let beta = norm(&w);
        if beta <= 1e-12 * scale.max(1.0) {
            break; // invariant subspace reached
        }
        betas.push(beta);
        for x in &mut w {
            *x /= beta;
        }
        basis.push(w.clone());
    }
    Ok(LanczosOutcome {
        basis,
        alphas,
        betas,
    })
}

/// Ritz pairs of the Lanczos tridiagonal matrix, ascending by value.
fn ritz_pairs(out: &LanczosOutcome) -> Vec<(f64, Vec<f64>)> {
    let m = out.alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = out.alphas[i];
        if i + 1 < m && i < out.betas.len() {
            t[(i, i + 1)] = out.betas[i];
            t[(i + 1, i)] = out.betas[i];
        }
    }
    let eigen = t.symmetric_eigen();
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..m)
        .map(|k| {
            let y: Vec<f64> = (0..m).map(|i| eigen.eigenvectors[(i, k)]).collect();
            (eigen.eigenvalues[k], y)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs
}

/// Estimates the kernel dimension from the smallest singular values of the
/// operator, via deflated Lanczos on the normal operator. Kernel candidates
/// are certified directly by `‖A v‖`, never by the Ritz value alone.
pub fn estimate_kernel_dim(
    op: &SparseOperator,
    tol_ratio: f64,
) -> Result<KernelReport, KernelError> {
    let ncols = op.cols();
    let n = op.grid().resolution();
    let limit = (10.0 * DEFAULT_K as f64 * (ncols as f64).sqrt()).ceil() as usize;
    let mut budget = Budget { used: 0, limit };

    // Largest singular value by power iteration on the normal operator.
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED ^ 0xb1f);
    let mut v: Vec<f64> = (0..ncols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    for x in &mut v {
        *x /= nv;
    }
    let mut tmp = vec![0.0; op.rows()];
    let mut w = vec![0.0; ncols];
    let mut lambda_max: f64 = 0.0;
    for _ in 0..40 {
        normal_apply(op, &v, &mut tmp, &mut w, &mut budget)?;
        lambda_max = norm(&w);
        if lambda_max == 0.0 {
            break;
        }
        for (x, y) in v.iter_mut().zip(&w) {
            *x = y / lambda_max;
        }
    }
    let sigma_max = lambda_max.sqrt();
    let threshold = sigma_max * (n as f64).powi(-2) * 1e-2;

    let sigma_of =
        |vec: &[f64], tmp: &mut [f64], budget: &mut Budget| -> Result<f64, KernelError> {
            budget.charge(1)?;
            op.apply(vec, tmp);
            Ok(norm(tmp))
        };

    let mut kernel: Vec<Vec<f64>> = Vec::new();
    let mut kernel_sigmas: Vec<f64> = Vec::new();
    let mut tail: Vec<f64> = Vec::new();
    for round in 0..=DEFAULT_K {
        let steps = 250.min(ncols.saturating_sub(kernel.len() + 1));
        let outcome = lanczos(
            op,
            &kernel,
            steps,
            DEFAULT_SEED ^ ((round as u64 + 1) * 0x9e37),
            lambda_max,
            &mut budget,
        )?;
        let pairs = ritz_pairs(&outcome);
        let mut added = 0;
        tail.clear();
        for (theta, y) in &pairs {
            let mut cand = vec![0.0; ncols];
            for (coeff, basis_vec) in y.iter().zip(&outcome.basis) {
                for (x, b) in cand.iter_mut().zip(basis_vec) {
                    *x += coeff * b;
                }
            }
            project_out(&mut cand, &kernel);
            let len = norm(&cand);
            if len < 1e-6 {
                continue; // ghost copy of an already-deflated direction
            }
            for x in &mut cand {
                *x /= len;
            }
            let sigma = sigma_of(&cand, &mut tmp, &mut budget)?;
            if sigma <= threshold && kernel.len() < DEFAULT_K {
                kernel.push(cand);
                kernel_sigmas.push(sigma);
                added += 1;
            } else {
                tail.push(theta.max(0.0).sqrt());
            }
        }
        if added == 0 || kernel.len() >= DEFAULT_K {
            break;
        }
    }
    tail.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut singular_values = kernel_sigmas.clone();
    singular_values.extend(
        tail.iter()
            .take(DEFAULT_K - singular_values.len().min(DEFAULT_K)),
    );
    singular_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    singular_values.truncate(DEFAULT_K);

    let dim = kernel.len();
    let gap_ratio = if dim >= 1 && dim < singular_values.len() {
        Some(singular_values[dim] / singular_values[dim - 1].max(1e-300))
    } else {
        None
    };
    let ambiguous = match gap_ratio {
        Some(ratio) => ratio < tol_ratio,
        None => dim > 0, // every tracked value below threshold: no visible gap
    };

    let basis_residuals = kernel_sigmas.clone();
    let basis = kernel
        .into_iter()
        .map(|v| {
            let npts = op.grid().node_count();
            KernelVector {
                a: v[..npts].to_vec(),
                b: v[npts..].to_vec(),
            }
        })
        .collect();

    Ok(KernelReport {
        resolution: n,
        singular_values,
        sigma_max,
        threshold,
        tol_ratio,
        gap_ratio,
        dim,
        ambiguous,
        basis,
        basis_residuals,
        matrix_applications: budget.used,
    })
}

/// All singular values of the operator, ascending, via a dense symmetric
/// eigendecomposition of `AᵀA` assembled from the exported triplets. This is
/// the direct oracle the iterative path is checked against.
///
/// Squaring floors tiny singular values at `√eps · σ_max`; values near that
/// floor are therefore re-measured as `‖A v‖` on their eigenvectors, which is
/// exact to machine precision.
pub fn dense_singular_values(op: &SparseOperator) -> Vec<f64> {
    let ncols = op.cols();
    let triplets = op.triplets();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); op.rows()];
    for (r, c, v) in triplets {
        rows[r].push((c, v));
    }
    let mut gram: DMatrix<f64> = DMatrix::zeros(ncols, ncols);
    for entries in &rows {
        for &(c1, v1) in entries {
            for &(c2, v2) in entries {
                gram[(c1, c2)] += v1 * v2;
            }
        }
    }
    let eigen = gram.symmetric_eigen();
    let lambda_max = eigen.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let refine_below = 1e-12 * lambda_max.max(1e-300);
    let mut sigmas: Vec<f64> = Vec::with_capacity(ncols);
    for (k, &lambda) in eigen.eigenvalues.iter().enumerate() {
        if lambda <= refine_below {
            let mut av = vec![0.0; op.rows()];
            for (entries, slot) in rows.iter().zip(av.iter_mut()) {
                *slot = entries
                    .iter()
                    .map(|&(c, v)| v * eigen.eigenvectors[(c, k)])
                    .sum();
            }
            sigmas.push(norm(&av));
        } else {
            sigmas.push(lambda.max(0.0).sqrt());
        }
    }
    sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sigmas
}

/// Kernel dimension decision applied to a full (dense-oracle) spectrum.
pub fn decide_dim(sigmas: &[f64], n: usize, tol_ratio: f64) -> (usize, bool) {
    let sigma_max = sigmas.last().copied().unwrap_or(0.0);
    let threshold = sigma_max * (n as f64).powi(-2) * 1e-2;
    let dim = sigmas.iter().take_while(|&&s| s <= threshold).count();
    let ambiguous = if dim >= 1 && dim < sigmas.len() {
        sigmas[dim] / sigmas[dim - 1].max(1e-300) < tol_ratio
    } else {
        dim > 0 && dim == sigmas.len()
    };
    (dim, ambiguous)
}

/// Reports per resolution plus the cross-resolution stability verdict.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub reports: Vec<KernelReport>,
    /// True when at least one report is unambiguous and all unambiguous
    /// reports agree on the dimension.
    pub stable: bool,
    pub dim: Option<usize>,
}

pub fn resolution_sweep_with(
    build: impl Fn(GridSpec) -> Result<SparseOperator, KernelError>,
    resolutions: &[usize],
    tol_ratio: f64,
) -> Result<SweepReport, KernelError> {
    let mut reports = Vec::new();
    for &n in resolutions {
        let op = build(GridSpec::new(n)?)?;
        reports.push(estimate_kernel_dim(&op, tol_ratio)?);
    }
    let dims: Vec<usize> = reports
        .iter()
        .filter(|r| !r.ambiguous)
        .map(|r| r.dim)
        .collect();
    let stable = !dims.is_empty() && dims.iter().all(|&d| d == dims[0]);
    Ok(SweepReport {
        stable,
        dim: if stable { Some(dims[0]) } else { None },
        reports,
    })
}

/// Sweeps the `J_f` system over ascending resolutions.
pub fn resolution_sweep(
    f: &dyn Fn(&[f64; 4]) -> f64,
    resolutions: &[usize],
    tol_ratio: f64,
) -> Result<SweepReport, KernelError> {
    resolution_sweep_with(|grid| assemble(f, grid), resolutions, tol_ratio)
}

/// A 2-form sampled on the grid, reconstructed from a kernel vector.
#[derive(Debug, Clone, Serialize)]
pub struct GridTwoForm {
    pub resolution: usize,
    /// Per-node components over the six coordinate pairs.
    #[serde(skip_serializing)]
    pub components: Vec<[f64; 6]>,
    /// Norm of the raw (unstabilized) finite-difference exterior derivative.
    pub residual: f64,
    pub norm: f64,
}

/// Reconstructs `α = aβ + bγ` on the grid for every kernel vector of the
/// report and measures its raw finite-difference exterior derivative.
pub fn kernel_basis_forms(
    report: &KernelReport,
    field: &FrameField,
) -> Result<Vec<GridTwoForm>, KernelError> {
    if report.dim == 0 || report.basis.is_empty() {
        return Err(KernelError::EmptyKernel);
    }
    let grid = field.grid();
    let npts = grid.node_count();
    // Raw exterior derivative: the same stencil with the stabilizer off.
    let raw = SparseOperator {
        field: FrameField {
            grid,
            beta: field.beta.clone(),
            gamma: field.gamma.clone(),
        },
        kappa: 0.0,
    };
    let mut out = Vec::new();
    for vec in &report.basis {
        let mut components = Vec::with_capacity(npts);
        let mut norm_sq = 0.0;
        for idx in 0..npts {
            let comp: [f64; 6] = std::array::from_fn(|p| {
                vec.a[idx] * field.beta[idx][p] + vec.b[idx] * field.gamma[idx][p]
            });
            norm_sq += comp.iter().map(|c| c * c).sum::<f64>();
            components.push(comp);
        }
        let mut u = vec.a.clone();
        u.extend_from_slice(&vec.b);
        let mut rows = vec![0.0; raw.rows()];
        raw.apply(&u, &mut rows);
        out.push(GridTwoForm {
            resolution: grid.resolution(),
            components,
            residual: norm(&rows),
            norm: norm_sq.sqrt(),
        });
    }
    Ok(out)
}
