//! Almost complex structures as endomorphism fields: the induced action on
//! 2-forms, ±1-eigenbundle projections, the Nijenhuis tensor, fractional
//! powers `J^r = cos(πr/2)·Id + sin(πr/2)·J`, and the bilinear construction
//! `θ^r(v, w) = ω(v, J^r w)` that manufactures anti-invariant forms from a
//! given one.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::forms::{Coframe, DifferentialForm, FormsError};
use crate::symexpr::{is_zero, EvalError, SampleDomain, ScalarExpr};

#[derive(Debug, Error)]
pub enum AcsError {
    #[error("coframe dimension must be even, got {0}")]
    OddDimension(usize),
    #[error("endomorphism does not square to -Id (entry ({0},{1}) is nonzero)")]
    NotAlmostComplex(usize, usize),
    #[error("form is not anti-invariant under the structure")]
    NotAntiInvariant,
    #[error("form is not closed")]
    NotClosed,
    #[error("form vanishes identically")]
    ZeroForm,
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A field of endomorphisms of the tangent bundle, written in a frame:
/// `T E_j = Σ_i entries[i][j] E_i`.
#[derive(Clone)]
pub struct EndomorphismField {
    coframe: Arc<Coframe>,
    entries: Vec<Vec<ScalarExpr>>,
}

impl fmt::Debug for EndomorphismField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EndomorphismField({}×{})", self.dim(), self.dim())
    }
}

impl EndomorphismField {
    pub fn new(coframe: Arc<Coframe>, entries: Vec<Vec<ScalarExpr>>) -> Self {
        let n = coframe.dim();
        assert_eq!(entries.len(), n, "entry rows must match the dimension");
        assert!(entries.iter().all(|r| r.len() == n));
        EndomorphismField { coframe, entries }
    }

    pub fn identity(coframe: Arc<Coframe>) -> Self {
        let n = coframe.dim();
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            ScalarExpr::one()
                        } else {
                            ScalarExpr::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        EndomorphismField { coframe, entries }
    }

    pub fn coframe(&self) -> &Arc<Coframe> {
        &self.coframe
    }

    pub fn dim(&self) -> usize {
        self.coframe.dim()
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarExpr {
        &self.entries[i][j]
    }

    /// Column `j`: the frame components of the image of `E_j`.
    pub fn column(&self, j: usize) -> Vec<ScalarExpr> {
        (0..self.dim())
            .map(|i| self.entries[i][j].clone())
            .collect()
    }

    pub fn apply_to_vector(&self, v: &[ScalarExpr]) -> Vec<ScalarExpr> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut acc = ScalarExpr::zero();
                for j in 0..n {
                    if !v[j].is_const_zero() && !self.entries[i][j].is_const_zero() {
                        acc = acc + self.entries[i][j].clone() * v[j].clone();
                    }
                }
                acc
            })
            .collect()
    }

    pub fn compose(&self, other: &EndomorphismField) -> EndomorphismField {
        let n = self.dim();
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut acc = ScalarExpr::zero();
                        for k in 0..n {
                            acc = acc + self.entries[i][k].clone() * other.entries[k][j].clone();
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        EndomorphismField::new(self.coframe.clone(), entries)
    }

    pub fn scale(&self, factor: &ScalarExpr) -> EndomorphismField {
        let entries = self
            .entries
            .iter()
            .map(|row| row.iter().map(|e| factor.clone() * e.clone()).collect())
            .collect();
        EndomorphismField::new(self.coframe.clone(), entries)
    }

    pub fn add(&self, other: &EndomorphismField) -> EndomorphismField {
        let n = self.dim();
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.entries[i][j].clone() + other.entries[i][j].clone())
                    .collect()
            })
            .collect();
        EndomorphismField::new(self.coframe.clone(), entries)
    }
}

/// An endomorphism field validated to satisfy `J² = -Id` on an
/// even-dimensional coframe.
#[derive(Clone, Debug)]
pub struct AlmostComplexStructure {
    field: EndomorphismField,
}

impl AlmostComplexStructure {
    /// Validates `J·J + Id = 0` entrywise with the sampled zero test.
    pub fn new(field: EndomorphismField, dom: &SampleDomain) -> Result<Self, AcsError> {
        let n = field.dim();
        if !n.is_multiple_of(2) {
            return Err(AcsError::OddDimension(n));
        }
        let square = field.compose(&field);
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { -1.0 } else { 0.0 };
                let diff = square.entry(i, j).clone() - ScalarExpr::constant(expect);
                if !is_zero(&diff, dom)? {
                    return Err(AcsError::NotAlmostComplex(i, j));
                }
            }
        }
        Ok(AlmostComplexStructure { field })
    }

    pub fn field(&self) -> &EndomorphismField {
        &self.field
    }

    pub fn coframe(&self) -> &Arc<Coframe> {
        self.field.coframe()
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarExpr {
        self.field.entry(i, j)
    }

    /// Induced involution on 2-forms: `(Jα)(X, Y) = α(JX, JY)`, i.e.
    /// coefficientwise `(Jα)_{kl} = Σ_{i<j} α_{ij} (J^i_k J^j_l - J^j_k J^i_l)`.
    pub fn act_on_two_form(&self, alpha: &DifferentialForm) -> Result<DifferentialForm, AcsError> {
        if alpha.degree() != 2 {
            return Err(FormsError::DegreeMismatch {
                expected: 2,
                found: alpha.degree(),
            }
            .into());
        }
        let n = self.dim();
        let mut terms = Vec::new();
        for k in 0..n {
            for l in (k + 1)..n {
                let mut acc = ScalarExpr::zero();
                for (idx, coeff) in alpha.terms() {
                    let (i, j) = (idx[0] as usize, idx[1] as usize);
                    let m = self.entry(i, k).clone() * self.entry(j, l).clone()
                        - self.entry(j, k).clone() * self.entry(i, l).clone();
                    acc = acc + coeff.clone() * m;
                }
                terms.push((vec![k as u8, l as u8], acc));
            }
        }
        Ok(DifferentialForm::from_terms(
            self.coframe().clone(),
            2,
            terms,
        )?)
    }

    /// Eigenbundle split `α = α⁺ + α⁻` with `α± = (α ± Jα)/2`.
    pub fn anti_invariant_projection(
        &self,
        alpha: &DifferentialForm,
    ) -> Result<(DifferentialForm, DifferentialForm), AcsError> {
        let j_alpha = self.act_on_two_form(alpha)?;
        let half = ScalarExpr::constant(0.5);
        let plus = alpha.add(&j_alpha)?.scale(&half);
        let minus = alpha.sub(&j_alpha)?.scale(&half);
        Ok((plus, minus))
    }

    /// Components of `N_J(E_j, E_k) = [JE_j, JE_k] - [E_j, E_k] - J[JE_j,
    /// E_k] - J[E_j, JE_k]` in the frame, using structure constants for
    /// brackets of frame fields and the coordinate realizations for the
    /// derivative terms.
    pub fn nijenhuis(&self, j: usize, k: usize) -> Vec<ScalarExpr> {
        assert_ne!(j, k, "Nijenhuis arguments must differ");
        let cf = self.coframe();
        let n = self.dim();
        let unit = |a: usize| -> Vec<ScalarExpr> {
            (0..n)
                .map(|m| {
                    if m == a {
                        ScalarExpr::one()
                    } else {
                        ScalarExpr::zero()
                    }
                })
                .collect()
        };
        let ej = unit(j);
        let ek = unit(k);
        let jj = self.field.column(j);
        let jk = self.field.column(k);
        let t1 = cf.bracket(&jj, &jk);
        let t2 = cf.bracket(&ej, &ek);
        let t3 = self.field.apply_to_vector(&cf.bracket(&jj, &ek));
        let t4 = self.field.apply_to_vector(&cf.bracket(&ej, &jk));
        (0..n)
            .map(|i| t1[i].clone() - t2[i].clone() - t3[i].clone() - t4[i].clone())
            .collect()
    }

    /// True iff every Nijenhuis component over all frame pairs passes the
    /// sampled zero test.
    pub fn is_integrable(&self, dom: &SampleDomain) -> Result<bool, AcsError> {
        let n = self.dim();
        for j in 0..n {
            for k in (j + 1)..n {
                for comp in self.nijenhuis(j, k) {
                    if !is_zero(&comp, dom)? {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// `J^r = cos(πr/2)·Id + sin(πr/2)·J`, the conjugation-invariant closed
    /// form of the fractional power; `J^0 = Id` and `J^1 = J` exactly.
    pub fn fractional_power(&self, r: &ScalarExpr) -> EndomorphismField {
        let half_pi_r = ScalarExpr::pi() * r.clone() / ScalarExpr::constant(2.0);
        let id = EndomorphismField::identity(self.coframe().clone());
        id.scale(&half_pi_r.cos())
            .add(&self.field.scale(&half_pi_r.sin()))
    }

    /// The full bilinear matrix `B_{kl} = θ^r(E_k, E_l) = ω(E_k, J^r E_l)`.
    /// Not antisymmetrized: sampling this matrix is what makes the skewness
    /// checks meaningful.
    pub fn theta_bilinear(
        &self,
        omega: &DifferentialForm,
        r: &ScalarExpr,
    ) -> Result<Vec<Vec<ScalarExpr>>, AcsError> {
        if omega.degree() != 2 {
            return Err(FormsError::DegreeMismatch {
                expected: 2,
                found: omega.degree(),
            }
            .into());
        }
        let n = self.dim();
        let jr = self.fractional_power(r);
        let omega_at = |k: usize, m: usize| -> ScalarExpr {
            if k < m {
                omega.coefficient(&[k as u8, m as u8])
            } else if m < k {
                -omega.coefficient(&[m as u8, k as u8])
            } else {
                ScalarExpr::zero()
            }
        };
        let mut out = vec![vec![ScalarExpr::zero(); n]; n];
        for (k, row) in out.iter_mut().enumerate() {
            for (l, slot) in row.iter_mut().enumerate() {
                let mut acc = ScalarExpr::zero();
                for m in 0..n {
                    let jrml = jr.entry(m, l);
                    if !jrml.is_const_zero() {
                        acc = acc + omega_at(k, m) * jrml.clone();
                    }
                }
                *slot = acc;
            }
        }
        Ok(out)
    }

    /// `θ^r` as a 2-form. Requires `ω` anti-invariant (checked by projection);
    /// skewness of the assembled bilinear form is then automatic and the
    /// upper triangle is stored.
    pub fn theta_r(
        &self,
        omega: &DifferentialForm,
        r: &ScalarExpr,
        dom: &SampleDomain,
    ) -> Result<DifferentialForm, AcsError> {
        let (plus, _) = self.anti_invariant_projection(omega)?;
        if !plus.is_zero_form(dom)? {
            return Err(AcsError::NotAntiInvariant);
        }
        let b = self.theta_bilinear(omega, r)?;
        let n = self.dim();
        let mut terms = Vec::new();
        for (k, row) in b.iter().enumerate() {
            for l in (k + 1)..n {
                terms.push((vec![k as u8, l as u8], row[l].clone()));
            }
        }
        Ok(DifferentialForm::from_terms(
            self.coframe().clone(),
            2,
            terms,
        )?)
    }

    /// Closedness of `θ = θ¹` against vanishing of the Nijenhuis tensor, for a
    /// closed anti-invariant `ω ≠ 0`. Also checks that `Ψ = ω - iθ` has no
    /// (1,1) or (0,2) part at sampled points, which is the mechanism tying the
    /// two flags together. The implication `theta_closed ⇒ nijenhuis_vanishes`
    /// is reported, not asserted.
    pub fn integrability_from_theta(
        &self,
        omega: &DifferentialForm,
        dom: &SampleDomain,
    ) -> Result<ThetaIntegrabilityReport, AcsError> {
        let (plus, _) = self.anti_invariant_projection(omega)?;
        if !plus.is_zero_form(dom)? {
            return Err(AcsError::NotAntiInvariant);
        }
        if !omega.exterior_derivative()?.is_zero_form(dom)? {
            return Err(AcsError::NotClosed);
        }
        if omega.is_zero_form(dom)? {
            return Err(AcsError::ZeroForm);
        }
        let theta = self.theta_r(omega, &ScalarExpr::one(), dom)?;
        let theta_closed = theta.exterior_derivative()?.is_zero_form(dom)?;
        let nijenhuis_vanishes = self.is_integrable(dom)?;
        let psi_type_20 = self.psi_type_check(omega, &theta, dom)?;
        Ok(ThetaIntegrabilityReport {
            theta_closed,
            nijenhuis_vanishes,
            psi_type_20,
        })
    }

    /// Ψ = ω - iθ must kill every (0,1)-direction: both Ψ(v+iJv, w+iJw) and
    /// Ψ(v-iJv, w+iJw) vanish. Checked numerically on random vectors at the
    /// domain's sample points.
    fn psi_type_check(
        &self,
        omega: &DifferentialForm,
        theta: &DifferentialForm,
        dom: &SampleDomain,
    ) -> Result<bool, AcsError> {
        use rand::Rng;
        use rand::SeedableRng;
        let n = self.dim();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(dom.seed ^ 0x7e7a);
        for point in dom.points() {
            let jmat: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| self.entry(i, j).evaluate(&point))
                        .collect::<Result<_, _>>()
                })
                .collect::<Result<_, _>>()?;
            let apply = |v: &[f64]| -> Vec<f64> {
                (0..n)
                    .map(|i| (0..n).map(|j| jmat[i][j] * v[j]).sum())
                    .collect()
            };
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let jv = apply(&v);
            let jw = apply(&w);
            let pair = |f: &DifferentialForm, a: &[f64], b: &[f64]| -> Result<f64, AcsError> {
                Ok(f.evaluate(&point, &[a.to_vec(), b.to_vec()])?)
            };
            // Complex bilinear expansion of Ψ(v + s·iJv, w + iJw), s = ±1:
            // re = ω(v,w) - s·ω(Jv,Jw) + s·θ(v,Jw) + θ(Jv,w)
            // im = -θ(v,w) + s·θ(Jv,Jw) + s·ω(v,Jw) + ω(Jv,w)
            for s in [1.0, -1.0] {
                let re = pair(omega, &v, &w)? - s * pair(omega, &jv, &jw)?
                    + s * pair(theta, &v, &jw)?
                    + pair(theta, &jv, &w)?;
                let im = -pair(theta, &v, &w)?
                    + s * pair(theta, &jv, &jw)?
                    + s * pair(omega, &v, &jw)?
                    + pair(omega, &jv, &w)?;
                if re.abs() > 1e-8 || im.abs() > 1e-8 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Outcome of [`AlmostComplexStructure::integrability_from_theta`].
#[derive(Debug, Clone, Serialize)]
pub struct ThetaIntegrabilityReport {
    pub theta_closed: bool,
    pub nijenhuis_vanishes: bool,
    pub psi_type_20: bool,
}
