//! Graded exterior algebra with symbolic coefficients over a coframe.
//!
//! A [`Coframe`] fixes the playing field: names `e^1..e^n`, structure
//! constants encoding `d e^i = -Σ_{j<k} c^i_{jk} e^j ∧ e^k`, and coordinate
//! realizations of both the dual frame fields `E_i` (so they can
//! differentiate coefficient functions) and of the coframe itself (so duality
//! can be checked numerically). Coordinate coframes have vanishing structure
//! constants and identity realizations, and the exterior derivative reduces to
//! the usual coordinate `d`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symexpr::{self, is_zero, EvalError, SampleDomain, ScalarExpr};

#[derive(Debug, Error)]
pub enum FormsError {
    #[error("coframe mismatch: `{0}` vs `{1}`")]
    CoframeMismatch(String, String),
    #[error("degree {degree} exceeds coframe dimension {dim}")]
    DegreeOverflow { degree: usize, dim: usize },
    #[error("expected a form of degree {expected}, got degree {found}")]
    DegreeMismatch { expected: usize, found: usize },
    #[error("a {degree}-form takes {degree} vectors, got {got}")]
    ArityMismatch { degree: usize, got: usize },
    #[error("term indices must be strictly increasing and below the dimension")]
    InvalidIndices,
    #[error("structure constants rejected: {0}")]
    Structure(String),
    #[error("coframe realization rejected: {0}")]
    Realization(String),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("form deserialization failed: {0}")]
    Decode(String),
}

/// A named coframe with structure constants and coordinate realizations of
/// the dual frame fields.
pub struct Coframe {
    id: String,
    names: Vec<String>,
    vars: Vec<String>,
    /// Dense `c[i][j][k]`, antisymmetric in `(j, k)`.
    structure: Vec<f64>,
    /// `frame[i][m]`: the `∂/∂vars[m]` component of `E_i`.
    frame: Vec<Vec<ScalarExpr>>,
    /// `coframe[i][m]`: the `d vars[m]` component of `e^i`.
    coframe: Vec<Vec<ScalarExpr>>,
    has_structure: bool,
}

impl fmt::Debug for Coframe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coframe({}, dim {})", self.id, self.dim())
    }
}

impl Coframe {
    /// Coordinate coframe `d vars[0], ..., d vars[n-1]` with identity
    /// realizations and no structure constants.
    pub fn coordinate(vars: &[&str]) -> Arc<Coframe> {
        let n = vars.len();
        let names = vars.iter().map(|v| format!("d{v}")).collect();
        let ident = |i: usize| -> Vec<ScalarExpr> {
            (0..n)
                .map(|m| {
                    if m == i {
                        ScalarExpr::one()
                    } else {
                        ScalarExpr::zero()
                    }
                })
                .collect()
        };
        Arc::new(Coframe {
            id: format!("coord({})", vars.join(",")),
            names,
            vars: vars.iter().map(|v| (*v).to_owned()).collect(),
            structure: vec![0.0; n * n * n],
            frame: (0..n).map(ident).collect(),
            coframe: (0..n).map(ident).collect(),
            has_structure: false,
        })
    }

    /// General coframe. `constants` lists `(i, j, k, c)` with `j < k` for
    /// `d e^i = -Σ c^i_{jk} e^j ∧ e^k`; antisymmetry is filled in. The Jacobi
    /// identity is checked on the constants, and duality together with the
    /// bracket relations of the realizations is checked by sampling.
    pub fn with_structure(
        id: &str,
        names: &[&str],
        vars: &[&str],
        constants: &[(usize, usize, usize, f64)],
        frame: Vec<Vec<ScalarExpr>>,
        coframe: Vec<Vec<ScalarExpr>>,
    ) -> Result<Arc<Coframe>, FormsError> {
        let n = names.len();
        let mut structure = vec![0.0; n * n * n];
        for &(i, j, k, c) in constants {
            if i >= n || j >= n || k >= n || j >= k {
                return Err(FormsError::Structure(format!(
                    "bad constant index ({i},{j},{k})"
                )));
            }
            structure[(i * n + j) * n + k] = c;
            structure[(i * n + k) * n + j] = -c;
        }
        let cf = Coframe {
            id: id.to_owned(),
            names: names.iter().map(|s| (*s).to_owned()).collect(),
            vars: vars.iter().map(|s| (*s).to_owned()).collect(),
            structure,
            frame,
            coframe,
            has_structure: constants.iter().any(|&(_, _, _, c)| c != 0.0),
        };
        cf.check_jacobi()?;
        cf.check_duality()?;
        cf.check_bracket_realization()?;
        Ok(Arc::new(cf))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vars(&self) -> Vec<&str> {
        self.vars.iter().map(String::as_str).collect()
    }

    pub fn is_coordinate(&self) -> bool {
        !self.has_structure
    }

    pub fn unit_domain(&self) -> SampleDomain {
        let vars = self.vars();
        SampleDomain::unit(&vars)
    }

    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.structure[(i * self.dim() + j) * self.dim() + k]
    }

    /// Applies the frame field `E_i` to a coefficient function.
    pub fn frame_apply(&self, i: usize, f: &ScalarExpr) -> ScalarExpr {
        let mut acc = ScalarExpr::zero();
        for (m, comp) in self.frame[i].iter().enumerate() {
            if comp.is_const_zero() {
                continue;
            }
            acc = acc + comp.clone() * f.differentiate(&self.vars[m]);
        }
        acc
    }

    /// Lie bracket of two vector fields given in frame components:
    /// `[X, Y]^i = Σ_a (X^a E_a(Y^i) - Y^a E_a(X^i)) + Σ_{a,b} X^a Y^b c^i_{ab}`.
    pub fn bracket(&self, x: &[ScalarExpr], y: &[ScalarExpr]) -> Vec<ScalarExpr> {
        let n = self.dim();
        let mut out = vec![ScalarExpr::zero(); n];
        for i in 0..n {
            let mut acc = ScalarExpr::zero();
            for a in 0..n {
                if !x[a].is_const_zero() {
                    acc = acc + x[a].clone() * self.frame_apply(a, &y[i]);
                }
                if !y[a].is_const_zero() {
                    acc = acc - y[a].clone() * self.frame_apply(a, &x[i]);
                }
            }
            for a in 0..n {
                for b in 0..n {
                    let c = self.structure_constant(i, a, b);
                    if c != 0.0 && !x[a].is_const_zero() && !y[b].is_const_zero() {
                        acc = acc + ScalarExpr::constant(c) * x[a].clone() * y[b].clone();
                    }
                }
            }
            out[i] = acc;
        }
        out
    }

    fn check_jacobi(&self) -> Result<(), FormsError> {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut sum = 0.0;
                        for m in 0..n {
                            sum += self.structure_constant(m, j, k)
                                * self.structure_constant(i, m, l)
                                + self.structure_constant(m, k, l)
                                    * self.structure_constant(i, m, j)
                                + self.structure_constant(m, l, j)
                                    * self.structure_constant(i, m, k);
                        }
                        if sum.abs() > 1e-12 {
                            return Err(FormsError::Structure(format!(
                                "Jacobi identity fails on triple ({j},{k},{l}) component {i}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_duality(&self) -> Result<(), FormsError> {
        let n = self.dim();
        let dom = self.unit_domain().with_samples(20);
        for point in dom.points() {
            for i in 0..n {
                for j in 0..n {
                    let mut pairing = 0.0;
                    for m in 0..n {
                        pairing += self.coframe[i][m].evaluate(&point)?
                            * self.frame[j][m].evaluate(&point)?;
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    if (pairing - expect).abs() > 1e-9 {
                        return Err(FormsError::Realization(format!(
                            "e^{} (E_{}) = {pairing}, expected {expect}",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The coordinate bracket of the realized frame fields must reproduce the
    /// structure constants.
    fn check_bracket_realization(&self) -> Result<(), FormsError> {
        let n = self.dim();
        let dom = self.unit_domain();
        for j in 0..n {
            for k in (j + 1)..n {
                for m in 0..n {
                    // Coordinate bracket component m of [E_j, E_k].
                    let mut actual = ScalarExpr::zero();
                    for l in 0..n {
                        actual = actual
                            + self.frame[j][l].clone()
                                * self.frame[k][m].differentiate(&self.vars[l])
                            - self.frame[k][l].clone()
                                * self.frame[j][m].differentiate(&self.vars[l]);
                    }
                    let mut expect = ScalarExpr::zero();
                    for i in 0..n {
                        let c = self.structure_constant(i, j, k);
                        if c != 0.0 {
                            expect = expect + ScalarExpr::constant(c) * self.frame[i][m].clone();
                        }
                    }
                    if !is_zero(&(actual - expect), &dom)? {
                        return Err(FormsError::Realization(format!(
                            "[E_{}, E_{}] disagrees with structure constants",
                            j + 1,
                            k + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `d e^i` expanded from the structure constants.
    fn d_basis_one_form(self: &Arc<Self>, i: usize) -> DifferentialForm {
        let mut out = DifferentialForm::zero(self.clone(), 2);
        let n = self.dim();
        for j in 0..n {
            for k in (j + 1)..n {
                let c = self.structure_constant(i, j, k);
                if c != 0.0 {
                    out.insert_term(vec![j as u8, k as u8], ScalarExpr::constant(-c));
                }
            }
        }
        out
    }
}

fn same_coframe(a: &Arc<Coframe>, b: &Arc<Coframe>) -> Result<(), FormsError> {
    if a.id() != b.id() {
        return Err(FormsError::CoframeMismatch(
            a.id().to_owned(),
            b.id().to_owned(),
        ));
    }
    Ok(())
}

/// Wedge of two strictly increasing index lists: merged list and sign, or
/// `None` when an index repeats.
fn wedge_indices(a: &[u8], b: &[u8]) -> Option<(Vec<u8>, f64)> {
    let mut merged: Vec<u8> = a.iter().chain(b.iter()).copied().collect();
    let mut sign = 1.0;
    // Insertion sort, counting transpositions.
    for i in 1..merged.len() {
        let mut j = i;
        while j > 0 && merged[j - 1] >= merged[j] {
            if merged[j - 1] == merged[j] {
                return None;
            }
            merged.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    Some((merged, sign))
}

/// Graded element with [`ScalarExpr`] coefficients over strictly increasing
/// wedge basis multi-indices. Missing index means zero coefficient.
#[derive(Clone)]
pub struct DifferentialForm {
    coframe: Arc<Coframe>,
    degree: usize,
    terms: BTreeMap<Vec<u8>, ScalarExpr>,
}

impl fmt::Debug for DifferentialForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DifferentialForm(deg {}: ", self.degree)?;
        let mut first = true;
        for (idx, coeff) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({coeff})·")?;
            let names: Vec<&str> = idx
                .iter()
                .map(|i| self.coframe.names()[*i as usize].as_str())
                .collect();
            write!(f, "{}", names.join("∧"))?;
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, ")")
    }
}

impl DifferentialForm {
    pub fn zero(coframe: Arc<Coframe>, degree: usize) -> Self {
        DifferentialForm {
            coframe,
            degree,
            terms: BTreeMap::new(),
        }
    }

    /// Degree-0 form wrapping a single scalar expression.
    pub fn scalar(coframe: Arc<Coframe>, value: ScalarExpr) -> Self {
        let mut f = Self::zero(coframe, 0);
        f.insert_term(vec![], value);
        f
    }

    /// Basis form `e^{indices[0]} ∧ ... (0-based, strictly increasing)`.
    pub fn basis(coframe: Arc<Coframe>, indices: &[usize]) -> Result<Self, FormsError> {
        let mut f = Self::zero(coframe, indices.len());
        let idx: Vec<u8> = indices.iter().map(|&i| i as u8).collect();
        if !f.indices_valid(&idx) {
            return Err(FormsError::InvalidIndices);
        }
        f.insert_term(idx, ScalarExpr::one());
        Ok(f)
    }

    pub fn from_terms(
        coframe: Arc<Coframe>,
        degree: usize,
        terms: Vec<(Vec<u8>, ScalarExpr)>,
    ) -> Result<Self, FormsError> {
        let mut f = Self::zero(coframe, degree);
        for (idx, coeff) in terms {
            if idx.len() != degree || !f.indices_valid(&idx) {
                return Err(FormsError::InvalidIndices);
            }
            f.insert_term(idx, coeff);
        }
        Ok(f)
    }

    fn indices_valid(&self, idx: &[u8]) -> bool {
        idx.windows(2).all(|w| w[0] < w[1])
            && idx.iter().all(|&i| (i as usize) < self.coframe.dim())
    }

    fn insert_term(&mut self, idx: Vec<u8>, coeff: ScalarExpr) {
        if coeff.is_const_zero() {
            return;
        }
        match self.terms.entry(idx) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get().clone() + coeff;
                if sum.is_const_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn coframe(&self) -> &Arc<Coframe> {
        &self.coframe
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u8], &ScalarExpr)> {
        self.terms.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn coefficient(&self, indices: &[u8]) -> ScalarExpr {
        self.terms
            .get(indices)
            .cloned()
            .unwrap_or_else(ScalarExpr::zero)
    }

    pub fn is_structurally_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Result<Self, FormsError> {
        same_coframe(&self.coframe, &other.coframe)?;
        if self.degree != other.degree {
            return Err(FormsError::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        let mut out = self.clone();
        for (idx, coeff) in &other.terms {
            out.insert_term(idx.clone(), coeff.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FormsError> {
        self.add(&other.scale(&ScalarExpr::constant(-1.0)))
    }

    pub fn scale(&self, factor: &ScalarExpr) -> Self {
        let mut out = Self::zero(self.coframe.clone(), self.degree);
        for (idx, coeff) in &self.terms {
            out.insert_term(idx.clone(), factor.clone() * coeff.clone());
        }
        out
    }

    /// Bilinear associative wedge product with the sign coming from sorting
    /// the merged multi-index.
    pub fn wedge(&self, other: &Self) -> Result<Self, FormsError> {
        same_coframe(&self.coframe, &other.coframe)?;
        let degree = self.degree + other.degree;
        if degree > self.coframe.dim() {
            return Err(FormsError::DegreeOverflow {
                degree,
                dim: self.coframe.dim(),
            });
        }
        let mut out = Self::zero(self.coframe.clone(), degree);
        for (ia, ca) in &self.terms {
            for (ib, cb) in &other.terms {
                if let Some((idx, sign)) = wedge_indices(ia, ib) {
                    out.insert_term(idx, ScalarExpr::constant(sign) * ca.clone() * cb.clone());
                }
            }
        }
        Ok(out)
    }

    /// Exterior derivative driven by the frame realizations and structure
    /// constants: `d(f e^I) = Σ_i (E_i f) e^i ∧ e^I + f · d(e^I)`.
    pub fn exterior_derivative(&self) -> Result<Self, FormsError> {
        let n = self.coframe.dim();
        if self.degree >= n {
            return Err(FormsError::DegreeOverflow {
                degree: self.degree + 1,
                dim: n,
            });
        }
        let mut out = Self::zero(self.coframe.clone(), self.degree + 1);
        for (idx, coeff) in &self.terms {
            // Derivative part.
            for i in 0..n {
                let df = self.coframe.frame_apply(i, coeff);
                if df.is_const_zero() {
                    continue;
                }
                if let Some((merged, sign)) = wedge_indices(&[i as u8], idx) {
                    out.insert_term(merged, ScalarExpr::constant(sign) * df);
                }
            }
            // Structure part: f · Σ_pos (-1)^pos d(e^{i_pos}) ∧ e^{I \ pos}.
            if self.coframe.has_structure {
                for (pos, &i) in idx.iter().enumerate() {
                    let de = self.coframe.d_basis_one_form(i as usize);
                    if de.is_structurally_zero() {
                        continue;
                    }
                    let rest: Vec<u8> = idx
                        .iter()
                        .enumerate()
                        .filter(|(q, _)| *q != pos)
                        .map(|(_, &v)| v)
                        .collect();
                    let pos_sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                    for (de_idx, de_coeff) in &de.terms {
                        if let Some((merged, sign)) = wedge_indices(de_idx, &rest) {
                            out.insert_term(
                                merged,
                                ScalarExpr::constant(pos_sign * sign)
                                    * coeff.clone()
                                    * de_coeff.clone(),
                            );
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Alternating multilinear evaluation: `vectors` hold frame components,
    /// one vector per degree.
    pub fn evaluate(
        &self,
        point: &HashMap<String, f64>,
        vectors: &[Vec<f64>],
    ) -> Result<f64, FormsError> {
        if vectors.len() != self.degree {
            return Err(FormsError::ArityMismatch {
                degree: self.degree,
                got: vectors.len(),
            });
        }
        let p = self.degree;
        let mut total = 0.0;
        for (idx, coeff) in &self.terms {
            let c = coeff.evaluate(point)?;
            if p == 0 {
                total += c;
                continue;
            }
            let m = DMatrix::from_fn(p, p, |r, cix| vectors[cix][idx[r] as usize]);
            total += c * m.determinant();
        }
        Ok(total)
    }

    /// True iff every coefficient passes the sampled zero test.
    pub fn is_zero_form(&self, dom: &SampleDomain) -> Result<bool, EvalError> {
        for coeff in self.terms.values() {
            if !is_zero(coeff, dom)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn to_dto(&self) -> FormDto {
        FormDto {
            degree: self.degree,
            coframe: self.coframe.id().to_owned(),
            terms: self
                .terms
                .iter()
                .map(|(idx, coeff)| TermDto {
                    indices: idx.iter().map(|&i| i as usize + 1).collect(),
                    coeff: coeff.to_string(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.to_dto()).expect("form serialization cannot fail")
    }

    pub fn from_dto(dto: &FormDto, coframe: &Arc<Coframe>) -> Result<Self, FormsError> {
        if dto.coframe != coframe.id() {
            return Err(FormsError::CoframeMismatch(
                dto.coframe.clone(),
                coframe.id().to_owned(),
            ));
        }
        if dto.degree > coframe.dim() {
            return Err(FormsError::DegreeOverflow {
                degree: dto.degree,
                dim: coframe.dim(),
            });
        }
        let vars = coframe.vars();
        let mut terms = Vec::new();
        for term in &dto.terms {
            let idx: Vec<u8> = term
                .indices
                .iter()
                .map(|&i| {
                    if i >= 1 && i <= coframe.dim() {
                        Ok((i - 1) as u8)
                    } else {
                        Err(FormsError::InvalidIndices)
                    }
                })
                .collect::<Result<_, _>>()?;
            let coeff = symexpr::parse(&term.coeff, &vars)
                .map_err(|e| FormsError::Decode(e.to_string()))?;
            terms.push((idx, coeff));
        }
        Self::from_terms(coframe.clone(), dto.degree, terms)
    }

    pub fn from_json(
        value: &serde_json::Value,
        coframe: &Arc<Coframe>,
    ) -> Result<Self, FormsError> {
        let dto: FormDto =
            serde_json::from_value(value.clone()).map_err(|e| FormsError::Decode(e.to_string()))?;
        Self::from_dto(&dto, coframe)
    }
}

/// Serialized form: 1-based indices and canonical expression strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormDto {
    pub degree: usize,
    pub coframe: String,
    pub terms: Vec<TermDto>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermDto {
    pub indices: Vec<usize>,
    pub coeff: String,
}

/// Wedge of two complex forms given as (real, imaginary) pairs:
/// `(a + ib) ∧ (c + id) = (a∧c - b∧d) + i(a∧d + b∧c)`.
pub fn complex_wedge(
    a: (&DifferentialForm, &DifferentialForm),
    b: (&DifferentialForm, &DifferentialForm),
) -> Result<(DifferentialForm, DifferentialForm), FormsError> {
    let re = a.0.wedge(b.0)?.sub(&a.1.wedge(b.1)?)?;
    let im = a.0.wedge(b.1)?.add(&a.1.wedge(b.0)?)?;
    Ok((re, im))
}
