//! The `J_f` family on ℝ⁴ ≅ ℂ²: anti-invariant frame `β, γ`, the equivalent
//! first-order / second-order / complex closedness systems for `α = aβ + bγ`,
//! the explicit closed families on the constraint circle `s² + t² + t = 0`,
//! compatibility forms, linear pullbacks, and pointwise-numeric piecewise
//! structures used by the kernel estimator.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::Matrix4;
use thiserror::Error;

use crate::acs::{AcsError, AlmostComplexStructure, EndomorphismField};
use crate::forms::{complex_wedge, Coframe, DifferentialForm, FormsError};
use crate::symexpr::{EvalError, SampleDomain, ScalarExpr};

/// Chart coordinates, in basis order `dx1, dx2, dy1, dy2`.
pub const CHART: [&str; 4] = ["x1", "x2", "y1", "y2"];

/// Tolerance on the constraint circle `s² + t² + t = 0`.
pub const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum R4Error {
    #[error("`{0}` is not a chart coordinate")]
    ForeignVariable(String),
    #[error("(s, t) violates s^2 + t^2 + t = 0 by {residual:e}")]
    ConstraintViolation { residual: f64 },
    #[error("family index must be at least 1")]
    InvalidFamilyIndex,
    #[error("linear map is singular")]
    SingularMap,
    #[error("operation requires a coordinate coframe")]
    NotCoordinateChart,
    #[error("overlapping regions disagree at {point:?}")]
    RegionConflict { point: [f64; 4] },
    #[error("piece deviates from background by {deviation:e} on its boundary collar at {point:?}")]
    CollarMismatch { point: [f64; 4], deviation: f64 },
    #[error("pointwise field does not square to -Id at {point:?}")]
    NotAlmostComplexAt { point: [f64; 4] },
    #[error(transparent)]
    Acs(#[from] AcsError),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// The coordinate coframe `dx1, dx2, dy1, dy2`.
pub fn chart() -> Arc<Coframe> {
    Coframe::coordinate(&CHART)
}

pub fn unit_domain() -> SampleDomain {
    SampleDomain::unit(&CHART)
}

fn check_chart_vars(f: &ScalarExpr) -> Result<(), R4Error> {
    for v in f.free_vars() {
        if !CHART.contains(&v.as_str()) {
            return Err(R4Error::ForeignVariable(v));
        }
    }
    Ok(())
}

fn d(e: &ScalarExpr, v: &str) -> ScalarExpr {
    e.differentiate(v)
}

/// `J_f` with its cached anti-invariant frame.
pub struct JfStructure {
    f: ScalarExpr,
    acs: AlmostComplexStructure,
    beta: DifferentialForm,
    gamma: DifferentialForm,
}

impl JfStructure {
    pub fn f(&self) -> &ScalarExpr {
        &self.f
    }

    pub fn acs(&self) -> &AlmostComplexStructure {
        &self.acs
    }

    pub fn beta(&self) -> &DifferentialForm {
        &self.beta
    }

    pub fn gamma(&self) -> &DifferentialForm {
        &self.gamma
    }
}

/// The tangent-space matrix of `J_f` in the frame order `(∂x1, ∂x2, ∂y1, ∂y2)`:
/// `J ∂x1 = f ∂x2 + ∂y1`, `J ∂x2 = ∂y2`, `J ∂y1 = -∂x1 - f ∂y2`, `J ∂y2 = -∂x2`.
pub fn jf_entries(f: &ScalarExpr) -> Vec<Vec<ScalarExpr>> {
    let zero = ScalarExpr::zero;
    let one = ScalarExpr::one;
    vec![
        vec![zero(), zero(), -one(), zero()],
        vec![f.clone(), zero(), zero(), -one()],
        vec![one(), zero(), zero(), zero()],
        vec![zero(), one(), -f.clone(), zero()],
    ]
}

/// Builds `J_f` together with `β = Re(φ¹∧φ²)`, `γ = Im(φ¹∧φ²)` from the
/// (1,0)-coframe `φ¹ = dx1 + i dy1`, `φ² = dx2 + i(-f dx1 + dy2)`.
pub fn build_jf(f: ScalarExpr) -> Result<JfStructure, R4Error> {
    check_chart_vars(&f)?;
    let cf = chart();
    let dom = unit_domain();
    let acs =
        AlmostComplexStructure::new(EndomorphismField::new(cf.clone(), jf_entries(&f)), &dom)?;
    let dx1 = DifferentialForm::basis(cf.clone(), &[0])?;
    let dx2 = DifferentialForm::basis(cf.clone(), &[1])?;
    let dy1 = DifferentialForm::basis(cf.clone(), &[2])?;
    let dy2 = DifferentialForm::basis(cf.clone(), &[3])?;
    let phi2_im = dy2.add(&dx1.scale(&-f.clone()))?;
    let (beta, gamma) = complex_wedge((&dx1, &dy1), (&dx2, &phi2_im))?;
    Ok(JfStructure {
        f,
        acs,
        beta,
        gamma,
    })
}

/// Coefficients of a candidate anti-invariant form `α = aβ + bγ`.
#[derive(Debug, Clone)]
pub struct AntiInvariantCandidate {
    pub a: ScalarExpr,
    pub b: ScalarExpr,
}

/// Left-hand sides of the first-order system; `α = aβ + bγ` is closed iff all
/// four vanish:
/// `a_{y1} - b_{x1} + (fa)_{x2}`, `a_{x1} + b_{y1} + (fa)_{y2}`,
/// `a_{y2} - b_{x2}`, `a_{x2} + b_{y2}`.
pub fn first_order_residual(c: &AntiInvariantCandidate, f: &ScalarExpr) -> [ScalarExpr; 4] {
    let fa = f.clone() * c.a.clone();
    [
        d(&c.a, "y1") - d(&c.b, "x1") + d(&fa, "x2"),
        d(&c.a, "x1") + d(&c.b, "y1") + d(&fa, "y2"),
        d(&c.a, "y2") - d(&c.b, "x2"),
        d(&c.a, "x2") + d(&c.b, "y2"),
    ]
}

/// Left-hand sides of the second-order system in `a` alone; all five vanish
/// iff some `b` completes `a` to a closed `aβ + bγ`.
pub fn second_order_residual(a: &ScalarExpr, f: &ScalarExpr) -> [ScalarExpr; 5] {
    let af = a.clone() * f.clone();
    let d2 = |e: &ScalarExpr, u: &str, v: &str| d(&d(e, u), v);
    [
        d2(a, "x1", "y2") - d2(a, "x2", "y1") - d2(&af, "x2", "x2"),
        d2(a, "x1", "y2") - d2(a, "x2", "y1") + d2(&af, "y2", "y2"),
        d2(a, "x1", "x1") + d2(a, "y1", "y1") + d2(&af, "x2", "y1") + d2(&af, "x1", "y2"),
        d2(a, "x1", "x2") + d2(a, "y1", "y2") + d2(&af, "x2", "y2"),
        d2(a, "x2", "x2") + d2(a, "y2", "y2"),
    ]
}

/// Real and imaginary parts of the perturbed Cauchy–Riemann system
/// `∂_{z̄1} w + (i/2) ∂_{z2}(f(w + w̄)) = 0`, `∂_{z̄2} w = 0` for
/// `w = w_re + i·w_im`, with the Wirtinger operators expanded in coordinates.
/// All four vanish iff `(a, b) = (w_re, -w_im)` solves the first-order system.
pub fn complex_residual(w_re: &ScalarExpr, w_im: &ScalarExpr, f: &ScalarExpr) -> [ScalarExpr; 4] {
    let half = ScalarExpr::constant(0.5);
    let f_wre = f.clone() * w_re.clone();
    [
        half.clone() * (d(w_re, "x1") - d(w_im, "y1")) + half.clone() * d(&f_wre, "y2"),
        half.clone() * (d(w_im, "x1") + d(w_re, "y1")) + half.clone() * d(&f_wre, "x2"),
        half.clone() * (d(w_re, "x2") - d(w_im, "y2")),
        half * (d(w_im, "x2") + d(w_re, "y2")),
    ]
}

/// `α_{s,t} = t e^{s x1 + t y1} β - s e^{s x1 + t y1} γ` for the structure
/// with `f = x2`; closed exactly on the constraint circle `s² + t² + t = 0`.
pub fn alpha_family(s: f64, t: f64) -> Result<DifferentialForm, R4Error> {
    let residual = s * s + t * t + t;
    if residual.abs() > CONSTRAINT_TOL {
        return Err(R4Error::ConstraintViolation { residual });
    }
    let jf = build_jf(ScalarExpr::var("x2"))?;
    let envelope = (ScalarExpr::constant(s) * ScalarExpr::var("x1")
        + ScalarExpr::constant(t) * ScalarExpr::var("y1"))
    .exp();
    let a = ScalarExpr::constant(t) * envelope.clone();
    let b = -(ScalarExpr::constant(s) * envelope);
    Ok(jf.beta().scale(&a).add(&jf.gamma().scale(&b))?)
}

/// The countable family `α_n` at `s = √(n-1)/n`, `t = -1/n`.
pub fn alpha_n(n: u32) -> Result<DifferentialForm, R4Error> {
    if n == 0 {
        return Err(R4Error::InvalidFamilyIndex);
    }
    let nf = f64::from(n);
    alpha_family((nf - 1.0).sqrt() / nf, -1.0 / nf)
}

/// `(s, t)` parameters of `α_n`.
pub fn alpha_n_parameters(n: u32) -> (f64, f64) {
    let nf = f64::from(n);
    ((nf - 1.0).sqrt() / nf, -1.0 / nf)
}

/// `ω_f = dx1∧dy1 + dx2∧dy2 + f dx1∧dx2`, with its compatibility checks
/// against `J_f`. The compatibility claim applies when `f = f(x1, x2)`; for
/// other `f` the form is still built but flagged unverified.
pub struct CompatibilityCheck {
    pub form: DifferentialForm,
    /// `J ω_f = ω_f` passed the sampled zero test.
    pub invariant: bool,
    /// `dω_f = 0` passed the sampled zero test.
    pub closed: bool,
    /// `ω_f(v, J_f v) > 0` at all sampled nonzero `v`.
    pub positive: bool,
    /// `f` is free of `y1, y2`, so the compatibility claim applies.
    pub claim_applicable: bool,
}

impl CompatibilityCheck {
    pub fn compatible(&self) -> bool {
        self.invariant && self.closed && self.positive
    }
}

pub fn compatibility_form(f: &ScalarExpr) -> Result<CompatibilityCheck, R4Error> {
    check_chart_vars(f)?;
    let jf = build_jf(f.clone())?;
    let cf = chart();
    let dom = unit_domain();
    let form = DifferentialForm::from_terms(
        cf.clone(),
        2,
        vec![
            (vec![0, 2], ScalarExpr::one()),
            (vec![1, 3], ScalarExpr::one()),
            (vec![0, 1], f.clone()),
        ],
    )?;
    let j_omega = jf.acs().act_on_two_form(&form)?;
    let invariant = j_omega.sub(&form)?.is_zero_form(&dom)?;
    let closed = form.exterior_derivative()?.is_zero_form(&dom)?;

    let mut positive = true;
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(dom.seed ^ 0x9d);
    'outer: for point in dom.points().into_iter().take(200) {
        let jmat: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| jf.acs().entry(i, j).evaluate(&point))
                    .collect::<Result<_, _>>()
            })
            .collect::<Result<_, _>>()?;
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        let jv: Vec<f64> = (0..4)
            .map(|i| (0..4).map(|k| jmat[i][k] * v[k]).sum())
            .collect();
        let value = form.evaluate(&point, &[v, jv])?;
        if value <= 0.0 {
            positive = false;
            break 'outer;
        }
    }

    let vars = f.free_vars();
    let claim_applicable = !vars.contains("y1") && !vars.contains("y2");
    Ok(CompatibilityCheck {
        form,
        invariant,
        closed,
        positive,
        claim_applicable,
    })
}

/// An invertible linear map of ℝ⁴ in chart coordinates:
/// `(T x)_i = Σ_j m[i][j] x_j`.
#[derive(Debug, Clone, Copy)]
pub struct LinearMap4(pub [[f64; 4]; 4]);

impl LinearMap4 {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        LinearMap4(m)
    }

    /// The coordinate form of `(z1, z2) ↦ (z2, -i z1)`.
    pub fn z_swap() -> Self {
        LinearMap4([
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [-1.0, 0.0, 0.0, 0.0],
        ])
    }

    pub fn apply(&self, p: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, row) in self.0.iter().enumerate() {
            out[i] = (0..4).map(|j| row[j] * p[j]).sum();
        }
        out
    }

    fn inverse(&self) -> Result<LinearMap4, R4Error> {
        let m = Matrix4::from_fn(|i, j| self.0[i][j]);
        let inv = m.try_inverse().ok_or(R4Error::SingularMap)?;
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = inv[(i, j)];
            }
        }
        Ok(LinearMap4(out))
    }

    /// Substitution `x_m ↦ (T x)_m` applied to a coefficient function.
    fn substitution(&self) -> HashMap<String, ScalarExpr> {
        CHART
            .iter()
            .enumerate()
            .map(|(m, name)| {
                let mut acc = ScalarExpr::zero();
                for (j, var) in CHART.iter().enumerate() {
                    if self.0[m][j] != 0.0 {
                        acc = acc + ScalarExpr::constant(self.0[m][j]) * ScalarExpr::var(var);
                    }
                }
                ((*name).to_owned(), acc)
            })
            .collect()
    }
}

/// Pullback `T*ω`: coefficients are composed with `T` and each `dx_i` is
/// replaced by `Σ_j T_{ij} dx_j`.
pub fn pullback_form(
    t: &LinearMap4,
    omega: &DifferentialForm,
) -> Result<DifferentialForm, R4Error> {
    t.inverse()?; // invertibility is part of the contract
    if !omega.coframe().is_coordinate() {
        return Err(R4Error::NotCoordinateChart);
    }
    let cf = omega.coframe().clone();
    let subs = t.substitution();
    let pulled_basis: Vec<DifferentialForm> = (0..4)
        .map(|i| {
            let mut terms = Vec::new();
            for j in 0..4usize {
                if t.0[i][j] != 0.0 {
                    terms.push((vec![j as u8], ScalarExpr::constant(t.0[i][j])));
                }
            }
            DifferentialForm::from_terms(cf.clone(), 1, terms)
        })
        .collect::<Result<_, _>>()?;
    let mut out = DifferentialForm::zero(cf.clone(), omega.degree());
    for (idx, coeff) in omega.terms() {
        let mut factor = DifferentialForm::scalar(cf.clone(), coeff.substitute(&subs));
        for &i in idx {
            factor = factor.wedge(&pulled_basis[i as usize])?;
        }
        out = out.add(&factor)?;
    }
    Ok(out)
}

/// Pullback `T*J = T⁻¹ ∘ J∘T ∘ T` of an almost complex structure, entries
/// composed with `T`.
pub fn pullback_acs(
    t: &LinearMap4,
    j: &AlmostComplexStructure,
) -> Result<AlmostComplexStructure, R4Error> {
    if !j.coframe().is_coordinate() {
        return Err(R4Error::NotCoordinateChart);
    }
    let inv = t.inverse()?;
    let subs = t.substitution();
    let n = 4;
    let mut entries = vec![vec![ScalarExpr::zero(); n]; n];
    for (i, row) in entries.iter_mut().enumerate() {
        for (jx, slot) in row.iter_mut().enumerate() {
            let mut acc = ScalarExpr::zero();
            for k in 0..n {
                if inv.0[i][k] == 0.0 {
                    continue;
                }
                for l in 0..n {
                    if t.0[l][jx] == 0.0 {
                        continue;
                    }
                    acc = acc
                        + ScalarExpr::constant(inv.0[i][k] * t.0[l][jx])
                            * j.entry(k, l).substitute(&subs);
                }
            }
            *slot = acc;
        }
    }
    let field = EndomorphismField::new(j.coframe().clone(), entries);
    Ok(AlmostComplexStructure::new(field, &unit_domain())?)
}

// ---------------------------------------------------------------------------
// Pointwise-numeric structures for the kernel estimator.
// ---------------------------------------------------------------------------

pub type Mat4 = [[f64; 4]; 4];
pub type RegionFn = Arc<dyn Fn(&[f64; 4]) -> bool + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64; 4]) -> Mat4 + Send + Sync>;

/// Numeric `J_f` matrix at a point with the given `f` value.
pub fn jf_matrix(f: f64) -> Mat4 {
    [
        [0.0, 0.0, -1.0, 0.0],
        [f, 0.0, 0.0, -1.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, -f, 0.0],
    ]
}

/// Distance on the unit circle between `x` and `c` (period 1).
pub fn periodic_distance(x: f64, c: f64) -> f64 {
    let d = (x - c).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// `C²` periodic bump: `(1 - (d/r)²)³` inside radius `r`, zero outside.
pub fn periodic_bump(x: f64, center: f64, radius: f64) -> f64 {
    let s = periodic_distance(x, center) / radius;
    if s < 1.0 {
        let t = 1.0 - s * s;
        t * t * t
    } else {
        0.0
    }
}

/// A pointwise-evaluable almost complex structure assembled from regions.
pub struct PointwiseAcs {
    pieces: Vec<(RegionFn, MatrixFn)>,
    background: MatrixFn,
}

impl PointwiseAcs {
    pub fn matrix_at(&self, p: &[f64; 4]) -> Mat4 {
        for (region, value) in &self.pieces {
            if region(p) {
                return value(p);
            }
        }
        (self.background)(p)
    }
}

const COLLAR_STEP: f64 = 1.0 / 256.0;
const COLLAR_TOL: f64 = 1e-3;
const PIECE_TOL: f64 = 1e-9;

fn mat_diff_norm(a: &Mat4, b: &Mat4) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            worst = worst.max((a[i][j] - b[i][j]).abs());
        }
    }
    worst
}

fn mat_square_plus_id_norm(m: &Mat4) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += m[i][k] * m[k][j];
            }
            if i == j {
                acc += 1.0;
            }
            worst = worst.max(acc.abs());
        }
    }
    worst
}

/// Assembles a pointwise structure and validates it on a sampled lattice of
/// the unit 4-torus: pieces must agree wherever regions overlap, every piece
/// must approach the background across its region boundary (collar check),
/// and the assembled matrix must square to `-Id` everywhere.
pub fn piecewise_structure(
    pieces: Vec<(RegionFn, MatrixFn)>,
    background: MatrixFn,
) -> Result<PointwiseAcs, R4Error> {
    use rand::Rng;
    use rand::SeedableRng;
    let structure = PointwiseAcs { pieces, background };

    let mut points: Vec<[f64; 4]> = Vec::new();
    let lattice = 8;
    for i in 0..lattice {
        for j in 0..lattice {
            for k in 0..lattice {
                for l in 0..lattice {
                    let g = |v: usize| v as f64 / lattice as f64;
                    points.push([g(i), g(j), g(k), g(l)]);
                }
            }
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xACE5);
    for _ in 0..400 {
        points.push([(); 4].map(|_| rng.gen_range(0.0..1.0)));
    }

    for p in &points {
        let matching: Vec<usize> = structure
            .pieces
            .iter()
            .enumerate()
            .filter(|(_, (region, _))| region(p))
            .map(|(i, _)| i)
            .collect();
        if matching.len() > 1 {
            let first = (structure.pieces[matching[0]].1)(p);
            for &other in &matching[1..] {
                if mat_diff_norm(&first, &(structure.pieces[other].1)(p)) > PIECE_TOL {
                    return Err(R4Error::RegionConflict { point: *p });
                }
            }
        }
        // Collar: a piece point whose axis neighbors leave the region must
        // already agree with the background.
        for &idx in &matching {
            let (region, value) = &structure.pieces[idx];
            let mut near_boundary = false;
            for axis in 0..4 {
                for sign in [-1.0, 1.0] {
                    let mut q = *p;
                    q[axis] = (q[axis] + sign * COLLAR_STEP).rem_euclid(1.0);
                    if !region(&q) {
                        near_boundary = true;
                    }
                }
            }
            if near_boundary {
                let deviation = mat_diff_norm(&value(p), &(structure.background)(p));
                if deviation > COLLAR_TOL {
                    return Err(R4Error::CollarMismatch {
                        point: *p,
                        deviation,
                    });
                }
            }
        }
        let m = structure.matrix_at(p);
        if mat_square_plus_id_norm(&m) > PIECE_TOL {
            return Err(R4Error::NotAlmostComplexAt { point: *p });
        }
    }
    Ok(structure)
}

/// The gluing used for the zero-kernel probe: `J_{f1}` supported in a bump
/// region, the pullback of a second copy under [`LinearMap4::z_swap`]
/// supported in a transverse region, and the standard structure elsewhere.
/// Both supports are disjoint by construction.
pub fn transverse_glued_structure() -> Result<PointwiseAcs, R4Error> {
    const RADIUS: f64 = 0.22;
    const CENTER: [f64; 4] = [0.25, 0.25, 0.25, 0.25];

    fn bump4(p: &[f64; 4], center: &[f64; 4]) -> f64 {
        (0..4)
            .map(|i| periodic_bump(p[i], center[i], RADIUS))
            .product()
    }

    let t = LinearMap4::z_swap();
    let t_inv = t.inverse()?;

    let region1: RegionFn = Arc::new(move |p| bump4(p, &CENTER) != 0.0);
    let value1: MatrixFn = Arc::new(move |p| jf_matrix(bump4(p, &CENTER)));

    let region2: RegionFn = Arc::new(move |p| {
        let q = LinearMap4::z_swap().apply(p).map(|x| x.rem_euclid(1.0));
        bump4(&q, &CENTER) != 0.0
    });
    let value2: MatrixFn = Arc::new(move |p| {
        let q = t.apply(p).map(|x| x.rem_euclid(1.0));
        let inner = jf_matrix(bump4(&q, &CENTER));
        // T* J = T⁻¹ · J(Tp) · T
        let mut tmp = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                tmp[i][j] = (0..4).map(|k| inner[i][k] * t.0[k][j]).sum();
            }
        }
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = (0..4).map(|k| t_inv.0[i][k] * tmp[k][j]).sum();
            }
        }
        out
    });

    let background: MatrixFn = Arc::new(|_| jf_matrix(0.0));
    piecewise_structure(vec![(region1, value1), (region2, value2)], background)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::is_zero;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ex(text: &str) -> ScalarExpr {
        crate::symexpr::parse(text, &CHART).unwrap()
    }

    #[test]
    fn jf_zero_gives_standard_frame() {
        let jf = build_jf(ScalarExpr::zero()).unwrap();
        // beta = dx1∧dx2 - dy1∧dy2
        assert_eq!(jf.beta().coefficient(&[0, 1]), ScalarExpr::one());
        assert_eq!(jf.beta().coefficient(&[2, 3]), ScalarExpr::constant(-1.0));
        assert!(jf.beta().coefficient(&[0, 2]).is_const_zero());
        // gamma = dx1∧dy2 - dx2∧dy1
        assert_eq!(jf.gamma().coefficient(&[0, 3]), ScalarExpr::one());
        assert_eq!(jf.gamma().coefficient(&[1, 2]), ScalarExpr::constant(-1.0));
    }

    #[test]
    fn jf_x2_matches_stated_beta() {
        let jf = build_jf(ex("x2")).unwrap();
        let dom = unit_domain();
        // beta = dx1∧dx2 - f dx1∧dy1 - dy1∧dy2 with f = x2
        assert!(is_zero(&(jf.beta().coefficient(&[0, 1]) - ScalarExpr::one()), &dom).unwrap());
        assert!(is_zero(&(jf.beta().coefficient(&[0, 2]) + ex("x2")), &dom).unwrap());
        assert!(is_zero(&(jf.beta().coefficient(&[2, 3]) + ScalarExpr::one()), &dom).unwrap());
    }

    #[test]
    fn frame_is_anti_invariant_for_random_f() {
        let dom = unit_domain();
        for f in ["0", "x2", "x1*y1 - y2", "sin(2*pi*x1)*x2"] {
            let jf = build_jf(ex(f)).unwrap();
            for form in [jf.beta(), jf.gamma()] {
                let (plus, minus) = jf.acs().anti_invariant_projection(form).unwrap();
                assert!(plus.is_zero_form(&dom).unwrap(), "f = {f}");
                assert!(minus.sub(form).unwrap().is_zero_form(&dom).unwrap());
            }
        }
    }

    #[test]
    fn foreign_variables_are_rejected() {
        let f = ScalarExpr::var("t1");
        assert!(matches!(build_jf(f), Err(R4Error::ForeignVariable(_))));
    }

    #[test]
    fn gamma_is_always_closed() {
        let c = AntiInvariantCandidate {
            a: ScalarExpr::zero(),
            b: ScalarExpr::one(),
        };
        for f in ["0", "x2", "sin(2*pi*x2)*x1"] {
            for r in first_order_residual(&c, &ex(f)) {
                assert!(r.is_const_zero(), "f = {f}");
            }
        }
    }

    #[test]
    fn beta_alone_fails_exactly_in_first_slot_for_f_x2() {
        let c = AntiInvariantCandidate {
            a: ScalarExpr::one(),
            b: ScalarExpr::zero(),
        };
        let r = first_order_residual(&c, &ex("x2"));
        let dom = unit_domain();
        assert!(is_zero(&(r[0].clone() - ScalarExpr::one()), &dom).unwrap());
        assert!(is_zero(&r[1], &dom).unwrap());
        assert!(is_zero(&r[2], &dom).unwrap());
        assert!(is_zero(&r[3], &dom).unwrap());
    }

    fn alpha_candidate(s: f64, t: f64) -> AntiInvariantCandidate {
        let envelope = (ScalarExpr::constant(s) * ScalarExpr::var("x1")
            + ScalarExpr::constant(t) * ScalarExpr::var("y1"))
        .exp();
        AntiInvariantCandidate {
            a: ScalarExpr::constant(t) * envelope.clone(),
            b: -(ScalarExpr::constant(s) * envelope),
        }
    }

    #[test]
    fn constraint_family_solves_first_order_system() {
        let dom = unit_domain();
        for (s, t) in [
            (0.0, -1.0),
            (0.5, -0.5),
            ((2.0_f64).sqrt() / 3.0, -1.0 / 3.0),
        ] {
            assert!((s * s + t * t + t).abs() < 1e-15);
            let c = alpha_candidate(s, t);
            for r in first_order_residual(&c, &ex("x2")) {
                assert!(is_zero(&r, &dom).unwrap(), "(s,t)=({s},{t})");
            }
        }
    }

    #[test]
    fn residuals_match_exterior_derivative_coefficients() {
        // Coefficients of d(aβ + bγ) on (dx1∧dx2∧dy1, dx1∧dx2∧dy2,
        // dx1∧dy1∧dy2, dx2∧dy1∧dy2) are (r1, r3, -r2, -r4).
        let dom = unit_domain();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let vars = CHART;
        let poly = |rng: &mut ChaCha8Rng| -> ScalarExpr {
            let mut acc = ScalarExpr::constant(rng.gen_range(-1.0..1.0));
            for _ in 0..3 {
                let v = ScalarExpr::var(vars[rng.gen_range(0..4)]);
                let w = ScalarExpr::var(vars[rng.gen_range(0..4)]);
                acc = acc + ScalarExpr::constant(rng.gen_range(-1.0..1.0)) * v * w;
            }
            acc
        };
        for _ in 0..5 {
            let a = poly(&mut rng);
            let b = poly(&mut rng);
            let f = poly(&mut rng);
            let jf = build_jf(f.clone()).unwrap();
            let alpha = jf.beta().scale(&a).add(&jf.gamma().scale(&b)).unwrap();
            let da = alpha.exterior_derivative().unwrap();
            let r = first_order_residual(&AntiInvariantCandidate { a, b }, &f);
            let pairs = [
                (vec![0u8, 1, 2], r[0].clone()),
                (vec![0, 1, 3], r[2].clone()),
                (vec![0, 2, 3], -r[1].clone()),
                (vec![1, 2, 3], -r[3].clone()),
            ];
            for (idx, expect) in pairs {
                let diff = da.coefficient(&idx) - expect;
                assert!(is_zero(&diff, &dom).unwrap());
            }
        }
    }

    #[test]
    fn second_order_residual_basics() {
        let dom = unit_domain();
        for r in second_order_residual(&ScalarExpr::zero(), &ex("x1*x2")) {
            assert!(r.is_const_zero());
        }
        // The closed family solves the second-order system too.
        let c = alpha_candidate(0.5, -0.5);
        for r in second_order_residual(&c.a, &ex("x2")) {
            assert!(is_zero(&r, &dom).unwrap());
        }
    }

    #[test]
    fn complex_and_first_order_systems_agree() {
        let dom = unit_domain();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let vars = ["x1", "x2", "y1", "y2"];
        let poly = |rng: &mut ChaCha8Rng| -> ScalarExpr {
            let v = ScalarExpr::var(vars[rng.gen_range(0..4)]);
            let w = ScalarExpr::var(vars[rng.gen_range(0..4)]);
            ScalarExpr::constant(rng.gen_range(-1.0..1.0)) * v.clone() * w
                + ScalarExpr::constant(rng.gen_range(-1.0..1.0)) * v
        };
        for _ in 0..20 {
            let a = poly(&mut rng);
            let b = poly(&mut rng);
            let f = poly(&mut rng);
            let first = first_order_residual(
                &AntiInvariantCandidate {
                    a: a.clone(),
                    b: b.clone(),
                },
                &f,
            );
            let complex = complex_residual(&a, &-b.clone(), &f);
            let first_zero = first.iter().all(|r| is_zero(r, &dom).unwrap());
            let complex_zero = complex.iter().all(|r| is_zero(r, &dom).unwrap());
            assert_eq!(first_zero, complex_zero);
        }
        // And the explicit solution really solves the complex system.
        let c = alpha_candidate(0.5, -0.5);
        for r in complex_residual(&c.a, &-c.b.clone(), &ex("x2")) {
            assert!(is_zero(&r, &dom).unwrap());
        }
    }

    #[test]
    fn constant_w_reduces_to_the_gradient_of_f() {
        // For real constant w = c the system collapses to (c/2)·(f_{y2}, f_{x2}, 0, 0):
        // zero exactly when f has no z2-dependence.
        let dom = unit_domain();
        let c = ScalarExpr::constant(2.0);
        let f = ex("x1*y1");
        for r in complex_residual(&c, &ScalarExpr::zero(), &f) {
            assert!(is_zero(&r, &dom).unwrap());
        }
        let f = ex("x2");
        let r = complex_residual(&c, &ScalarExpr::zero(), &f);
        assert!(is_zero(&(r[1].clone() - ScalarExpr::one()), &dom).unwrap()); // (c/2)·f_{x2} = 1
        assert!(is_zero(&r[0], &dom).unwrap());
        assert!(is_zero(&r[2], &dom).unwrap());
        assert!(is_zero(&r[3], &dom).unwrap());
    }

    #[test]
    fn alpha_family_validates_the_constraint() {
        assert!(matches!(
            alpha_family(0.5, 0.5),
            Err(R4Error::ConstraintViolation { residual }) if (residual - 1.0).abs() < 1e-12
        ));
        // (0,0) is on the circle and gives the zero form.
        assert!(alpha_family(0.0, 0.0).unwrap().is_structurally_zero());
    }

    #[test]
    fn alpha_one_is_minus_exp_envelope_beta() {
        let alpha1 = alpha_n(1).unwrap();
        let jf = build_jf(ex("x2")).unwrap();
        let envelope = (-ScalarExpr::var("y1")).exp();
        let expect = jf.beta().scale(&-envelope);
        let dom = unit_domain();
        assert!(alpha1.sub(&expect).unwrap().is_zero_form(&dom).unwrap());
        let (s2, t2) = alpha_n_parameters(2);
        assert!((s2 - 0.5).abs() < 1e-15 && (t2 + 0.5).abs() < 1e-15);
        assert!(matches!(alpha_n(0), Err(R4Error::InvalidFamilyIndex)));
    }

    #[test]
    fn alpha_n_is_closed_for_small_n() {
        let dom = unit_domain();
        for n in 1..=4 {
            let d = alpha_n(n).unwrap().exterior_derivative().unwrap();
            assert!(d.is_zero_form(&dom).unwrap(), "n = {n}");
        }
    }

    #[test]
    fn off_circle_parameters_leave_nonzero_residual() {
        let dom = unit_domain();
        for (s, t) in [(0.5 + 1e-3, -0.5), (0.0, -1.0 + 1e-3)] {
            let c = alpha_candidate(s, t);
            let all_zero = first_order_residual(&c, &ex("x2"))
                .iter()
                .all(|r| is_zero(r, &dom).unwrap());
            assert!(!all_zero);
        }
    }

    #[test]
    fn compatibility_checks() {
        let standard = compatibility_form(&ScalarExpr::zero()).unwrap();
        assert!(standard.compatible() && standard.claim_applicable);
        let skew = compatibility_form(&ex("x1*x2")).unwrap();
        assert!(skew.invariant && skew.closed && skew.positive);
        assert!(skew.claim_applicable);
        let bad = compatibility_form(&ex("y1")).unwrap();
        assert!(!bad.claim_applicable);
        assert!(!bad.closed); // d(y1 dx1∧dx2) ≠ 0
        assert!(bad.invariant); // invariance holds pointwise for any f
    }

    #[test]
    fn pullback_identity_and_naturality() {
        let jf = build_jf(ex("x2")).unwrap();
        let id = LinearMap4::identity();
        let dom = unit_domain();
        let g = jf.gamma();
        assert!(pullback_form(&id, g)
            .unwrap()
            .sub(g)
            .unwrap()
            .is_zero_form(&dom)
            .unwrap());
        // T* commutes with d on a non-constant form.
        let t = LinearMap4::z_swap();
        let omega = jf.beta().scale(&ex("x1 + y2^2"));
        let lhs = pullback_form(&t, &omega.exterior_derivative().unwrap()).unwrap();
        let rhs = pullback_form(&t, &omega)
            .unwrap()
            .exterior_derivative()
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().is_zero_form(&dom).unwrap());
    }

    #[test]
    fn z_swap_pulls_gamma_to_rho() {
        let jf = build_jf(ex("x2")).unwrap();
        let rho = pullback_form(&LinearMap4::z_swap(), jf.gamma()).unwrap();
        // rho = dx1∧dx2 - dy1∧dy2
        assert_eq!(rho.coefficient(&[0, 1]), ScalarExpr::one());
        assert_eq!(rho.coefficient(&[2, 3]), ScalarExpr::constant(-1.0));
        assert_eq!(rho.terms().count(), 2);
    }

    #[test]
    fn singular_map_is_rejected() {
        let jf = build_jf(ex("0")).unwrap();
        let singular = LinearMap4([[0.0; 4]; 4]);
        assert!(matches!(
            pullback_form(&singular, jf.gamma()),
            Err(R4Error::SingularMap)
        ));
    }

    #[test]
    fn pullback_acs_squares_to_minus_id() {
        let jf = build_jf(ex("x2")).unwrap();
        // Constructor revalidates J² = -Id, so success is the assertion.
        let pulled = pullback_acs(&LinearMap4::z_swap(), jf.acs()).unwrap();
        assert_eq!(pulled.dim(), 4);
    }

    #[test]
    fn piecewise_single_piece_equal_to_background() {
        let bg: MatrixFn = Arc::new(|_| jf_matrix(0.0));
        let region: RegionFn = Arc::new(|_| true);
        let value: MatrixFn = Arc::new(|_| jf_matrix(0.0));
        let pw = piecewise_structure(vec![(region, value)], bg).unwrap();
        let m = pw.matrix_at(&[0.3, 0.1, 0.9, 0.5]);
        assert_eq!(m, jf_matrix(0.0));
    }

    #[test]
    fn piecewise_bump_piece_is_consistent() {
        let region: RegionFn = Arc::new(|p| {
            (0..4)
                .map(|i| periodic_bump(p[i], 0.5, 0.2))
                .product::<f64>()
                != 0.0
        });
        let value: MatrixFn = Arc::new(|p| {
            jf_matrix(
                (0..4)
                    .map(|i| periodic_bump(p[i], 0.5, 0.2))
                    .product::<f64>(),
            )
        });
        let bg: MatrixFn = Arc::new(|_| jf_matrix(0.0));
        let pw = piecewise_structure(vec![(region, value)], bg).unwrap();
        let inside = pw.matrix_at(&[0.5, 0.5, 0.5, 0.5]);
        assert!((inside[1][0] - 1.0).abs() < 1e-12); // f = 1 at the center
        assert_eq!(pw.matrix_at(&[0.0, 0.0, 0.0, 0.0]), jf_matrix(0.0));
    }

    #[test]
    fn piecewise_conflicting_overlap_is_rejected() {
        let r1: RegionFn = Arc::new(|p| p[0] < 0.6);
        let r2: RegionFn = Arc::new(|p| p[0] > 0.4);
        let v1: MatrixFn = Arc::new(|_| jf_matrix(0.0));
        let v2: MatrixFn = Arc::new(|_| jf_matrix(1.0));
        let bg: MatrixFn = Arc::new(|_| jf_matrix(0.0));
        let err = piecewise_structure(vec![(r1, v1), (r2, v2)], bg);
        assert!(matches!(
            err,
            Err(R4Error::RegionConflict { .. }) | Err(R4Error::CollarMismatch { .. })
        ));
    }

    #[test]
    fn glued_structure_builds_and_is_standard_far_away() {
        let glued = transverse_glued_structure().unwrap();
        assert_eq!(glued.matrix_at(&[0.0, 0.75, 0.75, 0.75]), jf_matrix(0.0));
        // Inside region 1 it is a genuine J_f with f > 0.
        let m = glued.matrix_at(&[0.25, 0.25, 0.25, 0.25]);
        assert!((m[1][0] - 1.0).abs() < 1e-12);
        // Inside region 2 it differs from the standard structure.
        let m2 = glued.matrix_at(&[0.75, 0.25, 0.25, 0.25]);
        assert!(mat_diff_norm(&m2, &jf_matrix(0.0)) > 0.5);
    }

    #[test]
    fn nijenhuis_closed_form_battery() {
        // N(∂x1, ∂x2) = -f_{y2} ∂x2 + f_{x2} ∂y2 for every f in the battery.
        let dom = unit_domain();
        for f in ["x2", "y2", "x1*y1", "sin(2*pi*x1)", "x2 + y2"] {
            let fexpr = ex(f);
            let jf = build_jf(fexpr.clone()).unwrap();
            let n = jf.acs().nijenhuis(0, 1);
            let expect = [
                ScalarExpr::zero(),
                -fexpr.differentiate("y2"),
                ScalarExpr::zero(),
                fexpr.differentiate("x2"),
            ];
            for i in 0..4 {
                assert!(
                    is_zero(&(n[i].clone() - expect[i].clone()), &dom).unwrap(),
                    "f = {f}, component {i}"
                );
            }
        }
    }
}
