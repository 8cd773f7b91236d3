//! Local-chart checks for the 6-dimensional product construction: the block
//! structure `𝒥(V, a∂t₁ + b∂t₂) = (JV, -(b/f)∂t₁ + f a ∂t₂)` over a complex
//! surface chart times a 2-torus, its non-integrability through the Nijenhuis
//! tensor, and anti-invariance/closedness of the (2,0)-type forms pulled back
//! from the surface factor.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::acs::{AcsError, AlmostComplexStructure, EndomorphismField};
use crate::forms::{complex_wedge, Coframe, DifferentialForm, FormsError};
use crate::symexpr::{is_zero, EvalError, SampleDomain, ScalarExpr};

/// Chart coordinates: two holomorphic chart pairs and the torus directions.
pub const CHART: [&str; 6] = ["x1", "y1", "x2", "y2", "t1", "t2"];

#[derive(Debug, Error)]
pub enum ProductError {
    #[error("`{0}` is not a chart coordinate of the product chart")]
    ForeignVariable(String),
    #[error("torus factor coordinates are not allowed in f: `{0}`")]
    TorusVariable(String),
    #[error("f must be positive on the sample domain; f = {value} at a sample point")]
    NotPositive { value: f64 },
    #[error(transparent)]
    Acs(#[from] AcsError),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub fn chart() -> Arc<Coframe> {
    Coframe::coordinate(&CHART)
}

pub fn unit_domain() -> SampleDomain {
    SampleDomain::unit(&CHART)
}

/// The product chart with its induced 6×6 structure.
pub struct ProductChart {
    f: ScalarExpr,
    acs: AlmostComplexStructure,
}

impl ProductChart {
    pub fn f(&self) -> &ScalarExpr {
        &self.f
    }

    pub fn acs(&self) -> &AlmostComplexStructure {
        &self.acs
    }
}

/// Builds the structure for a positive `f(x1, y1, x2, y2)`. Positivity is
/// checked by sampling before the `𝒥² = -Id` validation, since the torus
/// block carries `1/f`.
pub fn build_product_acs(f: ScalarExpr) -> Result<ProductChart, ProductError> {
    for v in f.free_vars() {
        if v == "t1" || v == "t2" {
            return Err(ProductError::TorusVariable(v));
        }
        if !CHART.contains(&v.as_str()) {
            return Err(ProductError::ForeignVariable(v));
        }
    }
    let dom = unit_domain();
    for point in dom.points() {
        let value = f.evaluate(&point)?;
        if value <= 0.0 {
            return Err(ProductError::NotPositive { value });
        }
    }
    let cf = chart();
    let zero = ScalarExpr::zero;
    let one = ScalarExpr::one;
    // Columns are images of (∂x1, ∂y1, ∂x2, ∂y2, ∂t1, ∂t2).
    let inv_f = ScalarExpr::one() / f.clone();
    let entries = vec![
        vec![zero(), -one(), zero(), zero(), zero(), zero()],
        vec![one(), zero(), zero(), zero(), zero(), zero()],
        vec![zero(), zero(), zero(), -one(), zero(), zero()],
        vec![zero(), zero(), one(), zero(), zero(), zero()],
        vec![zero(), zero(), zero(), zero(), zero(), -inv_f],
        vec![zero(), zero(), zero(), zero(), f.clone(), zero()],
    ];
    let acs = AlmostComplexStructure::new(EndomorphismField::new(cf, entries), &dom)?;
    Ok(ProductChart { f, acs })
}

/// Nijenhuis check on the mixed pair `(∂x1, ∂t1)`: the bracket expansion
/// yields `N = (f_{x1}/f) ∂t₁ + f_{y1} ∂t₂`, nonvanishing wherever the
/// surface gradient of `f` is.
#[derive(Debug, Clone, Serialize)]
pub struct ProductNijenhuisReport {
    pub f: String,
    /// `N(∂x1, ∂t1) - ((f_{x1}/f) ∂t₁ + f_{y1} ∂t₂)` passes the zero test.
    pub identity_holds: bool,
    /// The obstruction is nonzero at some sampled point.
    pub nonvanishing: bool,
    pub integrable: bool,
}

impl ProductNijenhuisReport {
    pub fn confirms_nonintegrable(&self) -> bool {
        self.identity_holds && self.nonvanishing && !self.integrable
    }
}

pub fn product_nijenhuis_check(
    chart: &ProductChart,
) -> Result<ProductNijenhuisReport, ProductError> {
    let dom = unit_domain();
    let n = chart.acs.nijenhuis(0, 4);
    let f = &chart.f;
    let expected_t1 = f.differentiate("x1") / f.clone();
    let expected_t2 = f.differentiate("y1");
    let mut identity_holds = is_zero(&(n[4].clone() - expected_t1.clone()), &dom)?
        && is_zero(&(n[5].clone() - expected_t2.clone()), &dom)?;
    for i in 0..4 {
        identity_holds = identity_holds && is_zero(&n[i], &dom)?;
    }
    let mut nonvanishing = false;
    for point in dom.points() {
        let t1 = expected_t1.evaluate(&point)?;
        let t2 = expected_t2.evaluate(&point)?;
        if t1.abs() > 1e-6 || t2.abs() > 1e-6 {
            nonvanishing = true;
            break;
        }
    }
    let integrable = chart.acs.is_integrable(&dom)?;
    Ok(ProductNijenhuisReport {
        f: f.to_string(),
        identity_holds,
        nonvanishing,
        integrable,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FormCheck {
    pub label: String,
    pub anti_invariant: bool,
    pub closed: bool,
}

/// Anti-invariance and closedness for the (2,0)-type forms from the surface
/// factor: `Re/Im(dz1∧dz2)` and, as a holomorphic-coefficient sample,
/// `Re/Im(z1·dz1∧dz2)`.
#[derive(Debug, Clone, Serialize)]
pub struct ProductFormsReport {
    pub checks: Vec<FormCheck>,
}

impl ProductFormsReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.anti_invariant && c.closed)
    }
}

pub fn local_anti_invariant_check(
    chart: &ProductChart,
) -> Result<ProductFormsReport, ProductError> {
    let cf = chart.acs.coframe().clone();
    let dom = unit_domain();
    let basis = |i: usize| DifferentialForm::basis(cf.clone(), &[i]);
    let dx1 = basis(0)?;
    let dy1 = basis(1)?;
    let dx2 = basis(2)?;
    let dy2 = basis(3)?;
    let (re, im) = complex_wedge((&dx1, &dy1), (&dx2, &dy2))?;
    // z1·dz1∧dz2 = (x1 + i y1)(dz1∧dz2)
    let x1 = ScalarExpr::var("x1");
    let y1 = ScalarExpr::var("y1");
    let re_h = re.scale(&x1).sub(&im.scale(&y1))?;
    let im_h = re.scale(&y1).add(&im.scale(&x1))?;
    let mut checks = Vec::new();
    for (label, form) in [
        ("re_dz1_dz2", &re),
        ("im_dz1_dz2", &im),
        ("re_z1_dz1_dz2", &re_h),
        ("im_z1_dz1_dz2", &im_h),
    ] {
        let (plus, _) = chart.acs.anti_invariant_projection(form)?;
        let anti_invariant = plus.is_zero_form(&dom)?;
        let closed = form.exterior_derivative()?.is_zero_form(&dom)?;
        checks.push(FormCheck {
            label: label.to_owned(),
            anti_invariant,
            closed,
        });
    }
    Ok(ProductFormsReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::parse;

    fn ex(text: &str) -> ScalarExpr {
        parse(text, &CHART).unwrap()
    }

    #[test]
    fn constant_f_gives_block_standard_structure() {
        let chart = build_product_acs(ScalarExpr::one()).unwrap();
        let dom = unit_domain();
        // Torus block is the standard rotation for f = 1.
        assert!(is_zero(&(chart.acs().entry(5, 4).clone() - ScalarExpr::one()), &dom).unwrap());
        assert!(is_zero(&(chart.acs().entry(4, 5).clone() + ScalarExpr::one()), &dom).unwrap());
        let report = product_nijenhuis_check(&chart).unwrap();
        assert!(report.identity_holds);
        assert!(!report.nonvanishing);
        assert!(report.integrable);
    }

    #[test]
    fn oscillating_f_builds_and_squares_to_minus_id() {
        // Constructor validates 𝒥² = -Id by sampling, exercising the
        // (-b/f)·(fa) cancellation.
        let chart = build_product_acs(ex("2 + sin(2*pi*x1)")).unwrap();
        assert_eq!(chart.acs().dim(), 6);
    }

    #[test]
    fn sign_changing_f_is_rejected() {
        assert!(matches!(
            build_product_acs(ex("x1")),
            Err(ProductError::NotPositive { .. })
        ));
    }

    #[test]
    fn torus_variables_in_f_are_rejected() {
        assert!(matches!(
            build_product_acs(ex("2 + t1")),
            Err(ProductError::TorusVariable(_))
        ));
    }

    #[test]
    fn nijenhuis_matches_bracket_expansion() {
        for f in ["2 + sin(2*pi*x1)", "2 + x1*y1/10"] {
            let chart = build_product_acs(ex(f)).unwrap();
            let report = product_nijenhuis_check(&chart).unwrap();
            assert!(report.identity_holds, "f = {f}");
            assert!(report.nonvanishing, "f = {f}");
            assert!(!report.integrable, "f = {f}");
            assert!(report.confirms_nonintegrable());
        }
    }

    #[test]
    fn surface_forms_are_anti_invariant_and_closed() {
        let chart = build_product_acs(ex("2 + sin(2*pi*x1)")).unwrap();
        let report = local_anti_invariant_check(&chart).unwrap();
        assert_eq!(report.checks.len(), 4);
        assert!(report.all_pass());
    }

    #[test]
    fn anti_invariance_is_independent_of_f() {
        // The action on the surface covectors ignores f entirely.
        for f in ["1", "2 + sin(2*pi*x1)", "2 + x1*y1/10"] {
            let chart = build_product_acs(ex(f)).unwrap();
            assert!(local_anti_invariant_check(&chart).unwrap().all_pass());
        }
    }
}
