//! The Kodaira–Thurston manifold: invariant coframe with the single structure
//! equation `dE³ = -E¹∧E²`, the two-function structure family
//! `J E₁ = e^{λ(x₄)}E₂, J E₃ = e^{μ(x₄)}E₄`, its global anti-invariant frame
//! `θ¹, θ²`, and the closedness checks that sandwich the dimension of the
//! closed anti-invariant space at 2.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::acs::{AcsError, AlmostComplexStructure, EndomorphismField};
use crate::forms::{Coframe, DifferentialForm, FormsError};
use crate::symexpr::{is_zero, EvalError, SampleDomain, ScalarExpr};

/// Chart coordinates on the universal cover.
pub const CHART: [&str; 4] = ["x1", "x2", "x3", "x4"];

/// Second Betti-number bound used by the dimension sandwich. Taken as given
/// for this manifold, not computed here.
pub const B_PLUS: usize = 2;

#[derive(Debug, Error)]
pub enum KtError {
    #[error("`{0}` must depend on x4 only (found `{1}`)")]
    ForeignVariable(&'static str, String),
    #[error("`{0}` is not 1-periodic in x4 (deviation {1:e})")]
    NotPeriodic(&'static str, f64),
    #[error(transparent)]
    Acs(#[from] AcsError),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// The invariant coframe `E¹ = dx1, E² = dx2, E³ = dx3 - x1 dx2, E⁴ = dx4`
/// with dual frame `E₁ = ∂x1, E₂ = ∂x2 + x1 ∂x3, E₃ = ∂x3, E₄ = ∂x4`; the
/// construction re-checks duality and `[E₁, E₂] = E₃`.
pub fn kt_coframe() -> Arc<Coframe> {
    let unit = |i: usize| -> Vec<ScalarExpr> {
        (0..4)
            .map(|m| {
                if m == i {
                    ScalarExpr::one()
                } else {
                    ScalarExpr::zero()
                }
            })
            .collect()
    };
    let mut frame = vec![unit(0), unit(1), unit(2), unit(3)];
    frame[1][2] = ScalarExpr::var("x1");
    let mut coframe = vec![unit(0), unit(1), unit(2), unit(3)];
    coframe[2][1] = -ScalarExpr::var("x1");
    Coframe::with_structure(
        "kodaira-thurston",
        &["E1", "E2", "E3", "E4"],
        &CHART,
        &[(2, 0, 1, 1.0)],
        frame,
        coframe,
    )
    .expect("the Kodaira-Thurston coframe data is consistent")
}

pub fn unit_domain() -> SampleDomain {
    SampleDomain::unit(&CHART)
}

fn check_x4_only(label: &'static str, e: &ScalarExpr) -> Result<(), KtError> {
    for v in e.free_vars() {
        if v != "x4" {
            return Err(KtError::ForeignVariable(label, v));
        }
    }
    Ok(())
}

/// Sampled check that `e(x4) = e(x4 + 1)`; exact periodicity of arbitrary
/// expressions is undecidable, so 20 points stand in for it.
fn check_periodic(label: &'static str, e: &ScalarExpr) -> Result<(), KtError> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5e4d);
    for _ in 0..20 {
        let x4 = rng.gen_range(-1.0..1.0);
        let at = |x: f64| -> Result<f64, EvalError> {
            let point = [("x4".to_owned(), x)].into_iter().collect();
            e.evaluate(&point)
        };
        let deviation = (at(x4)? - at(x4 + 1.0)?).abs();
        if deviation > 1e-9 {
            return Err(KtError::NotPeriodic(label, deviation));
        }
    }
    Ok(())
}

/// `J E₁ = e^λ E₂, J E₂ = -e^{-λ} E₁, J E₃ = e^μ E₄, J E₄ = -e^{-μ} E₃`
/// for `λ, μ` depending on `x4` only.
pub fn build_j_lambda_mu(
    lambda: &ScalarExpr,
    mu: &ScalarExpr,
) -> Result<AlmostComplexStructure, KtError> {
    check_x4_only("lambda", lambda)?;
    check_x4_only("mu", mu)?;
    check_periodic("lambda", lambda)?;
    check_periodic("mu", mu)?;
    let cf = kt_coframe();
    let zero = ScalarExpr::zero;
    let e = |x: &ScalarExpr| x.exp();
    let em = |x: &ScalarExpr| (-x.clone()).exp();
    let entries = vec![
        vec![zero(), -em(lambda), zero(), zero()],
        vec![e(lambda), zero(), zero(), zero()],
        vec![zero(), zero(), zero(), -em(mu)],
        vec![zero(), zero(), e(mu), zero()],
    ];
    Ok(AlmostComplexStructure::new(
        EndomorphismField::new(cf, entries),
        &unit_domain(),
    )?)
}

/// The global anti-invariant frame of `J_{λ,μ}`:
/// `θ¹ = E¹∧E³ - e^{-(λ+μ)} E²∧E⁴` and `θ² = e^{-μ} E¹∧E⁴ + e^{-λ} E²∧E³`,
/// together with the closed rescaling `e^λ θ²`.
pub struct ThetaBasis {
    pub theta1: DifferentialForm,
    pub theta2: DifferentialForm,
    pub theta2_scaled: DifferentialForm,
}

pub fn theta_basis(lambda: &ScalarExpr, mu: &ScalarExpr) -> Result<ThetaBasis, KtError> {
    let cf = kt_coframe();
    let theta1 = DifferentialForm::from_terms(
        cf.clone(),
        2,
        vec![
            (vec![0, 2], ScalarExpr::one()),
            (vec![1, 3], -((-(lambda.clone() + mu.clone())).exp())),
        ],
    )?;
    let theta2 = DifferentialForm::from_terms(
        cf.clone(),
        2,
        vec![
            (vec![0, 3], (-mu.clone()).exp()),
            (vec![1, 2], (-lambda.clone()).exp()),
        ],
    )?;
    let theta2_scaled = theta2.scale(&lambda.exp());
    Ok(ThetaBasis {
        theta1,
        theta2,
        theta2_scaled,
    })
}

/// Verification record for the dimension sandwich `2 ≤ h⁻ ≤ b⁺ = 2`.
#[derive(Debug, Clone, Serialize)]
pub struct KodairaReport {
    pub lambda: String,
    pub mu: String,
    pub theta1_closed: bool,
    pub theta2_scaled_closed: bool,
    pub theta1_anti_invariant: bool,
    pub theta2_anti_invariant: bool,
    pub pointwise_independent: bool,
    /// `N(E₁,E₃) + λ' e^{λ+μ} E₂ = 0` under the sampled zero test.
    pub nijenhuis_identity: bool,
    pub integrable: bool,
    pub h_minus_lower: usize,
    pub b_plus: usize,
    pub h_minus: Option<usize>,
}

impl KodairaReport {
    pub fn passed(&self) -> bool {
        self.theta1_closed
            && self.theta2_scaled_closed
            && self.theta1_anti_invariant
            && self.theta2_anti_invariant
            && self.pointwise_independent
            && self.nijenhuis_identity
            && self.h_minus == Some(2)
    }
}

/// Runs the full check battery: closedness and anti-invariance of the frame,
/// pointwise linear independence, and the Nijenhuis obstruction identity.
/// Two independent closed anti-invariant forms against the bound `b⁺ = 2`
/// pins `h⁻ = 2`.
pub fn verify_h_minus_2(lambda: &ScalarExpr, mu: &ScalarExpr) -> Result<KodairaReport, KtError> {
    let dom = unit_domain();
    let j = build_j_lambda_mu(lambda, mu)?;
    let basis = theta_basis(lambda, mu)?;

    let theta1_closed = basis.theta1.exterior_derivative()?.is_zero_form(&dom)?;
    let theta2_scaled_closed = basis
        .theta2_scaled
        .exterior_derivative()?
        .is_zero_form(&dom)?;

    let anti = |form: &DifferentialForm| -> Result<bool, KtError> {
        let (plus, _) = j.anti_invariant_projection(form)?;
        Ok(plus.is_zero_form(&dom)?)
    };
    let theta1_anti_invariant = anti(&basis.theta1)?;
    let theta2_anti_invariant = anti(&basis.theta2)?;

    // 2×2 minor of the coefficient matrix over the pairs (E¹∧E³, E¹∧E⁴):
    // θ¹ has coefficient 1 there while θ² has e^{-μ} ≠ 0, so the minor is
    // e^{-μ}; sampled nonvanishing certifies pointwise independence.
    let minor = basis.theta1.coefficient(&[0, 2]) * basis.theta2.coefficient(&[0, 3])
        - basis.theta2.coefficient(&[0, 2]) * basis.theta1.coefficient(&[0, 3]);
    let mut pointwise_independent = true;
    for point in dom.points() {
        if minor.evaluate(&point)?.abs() < 1e-12 {
            pointwise_independent = false;
            break;
        }
    }

    // N(E₁,E₃) = -λ'(x4) e^{λ+μ} E₂ from the bracket expansion.
    let n13 = j.nijenhuis(0, 2);
    let lambda_prime = lambda.differentiate("x4");
    let expected_e2 = -(lambda_prime * (lambda.clone() + mu.clone()).exp());
    let nijenhuis_identity = is_zero(&(n13[1].clone() - expected_e2), &dom)?
        && is_zero(&n13[0], &dom)?
        && is_zero(&n13[2], &dom)?
        && is_zero(&n13[3], &dom)?;

    let integrable = j.is_integrable(&dom)?;

    let have_two = theta1_closed
        && theta2_scaled_closed
        && theta1_anti_invariant
        && theta2_anti_invariant
        && pointwise_independent;
    let h_minus = if have_two && B_PLUS == 2 {
        Some(2)
    } else {
        None
    };

    Ok(KodairaReport {
        lambda: lambda.to_string(),
        mu: mu.to_string(),
        theta1_closed,
        theta2_scaled_closed,
        theta1_anti_invariant,
        theta2_anti_invariant,
        pointwise_independent,
        nijenhuis_identity,
        integrable,
        h_minus_lower: 2,
        b_plus: B_PLUS,
        h_minus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::parse;

    fn ex(text: &str) -> ScalarExpr {
        parse(text, &CHART).unwrap()
    }

    #[test]
    fn coframe_has_the_structure_equation() {
        let cf = kt_coframe();
        let e3 = DifferentialForm::basis(cf.clone(), &[2]).unwrap();
        let d = e3.exterior_derivative().unwrap();
        assert_eq!(d.coefficient(&[0, 1]), ScalarExpr::constant(-1.0));
        assert_eq!(d.terms().count(), 1);
        for i in [0usize, 1, 3] {
            let e = DifferentialForm::basis(cf.clone(), &[i]).unwrap();
            assert!(e.exterior_derivative().unwrap().is_structurally_zero());
        }
    }

    #[test]
    fn constant_structure_is_integrable() {
        let j = build_j_lambda_mu(&ScalarExpr::zero(), &ScalarExpr::zero()).unwrap();
        assert!(j.is_integrable(&unit_domain()).unwrap());
    }

    #[test]
    fn nonconstant_lambda_obstructs_integrability() {
        let j = build_j_lambda_mu(&ex("sin(2*pi*x4)"), &ScalarExpr::zero()).unwrap();
        let dom = unit_domain();
        assert!(!j.is_integrable(&dom).unwrap());
        // N(E₁,E₃) = -e^λ λ' E₂ when μ = 0.
        let n = j.nijenhuis(0, 2);
        let lambda = ex("sin(2*pi*x4)");
        let expect = -(lambda.differentiate("x4") * lambda.exp());
        assert!(is_zero(&(n[1].clone() - expect), &dom).unwrap());
        assert!(is_zero(&n[0], &dom).unwrap());
        assert!(is_zero(&n[2], &dom).unwrap());
        assert!(is_zero(&n[3], &dom).unwrap());
    }

    #[test]
    fn general_mu_scales_the_obstruction() {
        // With μ ≠ 0 the full obstruction carries e^{λ+μ}.
        let lambda = ex("sin(2*pi*x4)");
        let mu = ex("cos(2*pi*x4)");
        let j = build_j_lambda_mu(&lambda, &mu).unwrap();
        let dom = unit_domain();
        let n = j.nijenhuis(0, 2);
        let expect = -(lambda.differentiate("x4") * (lambda.clone() + mu).exp());
        assert!(is_zero(&(n[1].clone() - expect), &dom).unwrap());
    }

    #[test]
    fn nonconstant_mu_alone_stays_integrable() {
        // Every Nijenhuis component is proportional to λ'; μ never obstructs.
        let j = build_j_lambda_mu(&ScalarExpr::zero(), &ex("cos(2*pi*x4)")).unwrap();
        assert!(j.is_integrable(&unit_domain()).unwrap());
    }

    #[test]
    fn rejects_foreign_variables_and_non_periodic_input() {
        assert!(matches!(
            build_j_lambda_mu(&ex("x1"), &ScalarExpr::zero()),
            Err(KtError::ForeignVariable("lambda", _))
        ));
        assert!(matches!(
            build_j_lambda_mu(&ScalarExpr::zero(), &ex("x4")),
            Err(KtError::NotPeriodic("mu", _))
        ));
    }

    #[test]
    fn theta_frame_closedness() {
        let lambda = ex("sin(2*pi*x4)");
        let mu = ex("cos(2*pi*x4)");
        let basis = theta_basis(&lambda, &mu).unwrap();
        let dom = unit_domain();
        assert!(basis
            .theta1
            .exterior_derivative()
            .unwrap()
            .is_zero_form(&dom)
            .unwrap());
        assert!(basis
            .theta2_scaled
            .exterior_derivative()
            .unwrap()
            .is_zero_form(&dom)
            .unwrap());
        // The unscaled θ² is not closed for non-constant λ.
        assert!(!basis
            .theta2
            .exterior_derivative()
            .unwrap()
            .is_zero_form(&dom)
            .unwrap());
    }

    #[test]
    fn constant_case_theta1_is_constant_coefficient() {
        let basis = theta_basis(&ScalarExpr::zero(), &ScalarExpr::zero()).unwrap();
        assert_eq!(basis.theta1.coefficient(&[0, 2]), ScalarExpr::one());
        assert_eq!(
            basis.theta1.coefficient(&[1, 3]),
            ScalarExpr::constant(-1.0)
        );
        assert!(basis
            .theta1
            .exterior_derivative()
            .unwrap()
            .is_structurally_zero());
    }

    #[test]
    fn psi_frame_reproduces_thetas() {
        // ψ¹ = E¹ + i e^{-λ}E², ψ² = E³ + i e^{-μ}E⁴; Re/Im of ψ¹∧ψ² give θ¹, θ².
        let lambda = ex("sin(2*pi*x4)");
        let mu = ex("cos(4*pi*x4)");
        let cf = kt_coframe();
        let dom = unit_domain();
        let e = |i: usize| DifferentialForm::basis(cf.clone(), &[i]).unwrap();
        let psi1_im = e(1).scale(&(-lambda.clone()).exp());
        let psi2_im = e(3).scale(&(-mu.clone()).exp());
        let (re, im) = crate::forms::complex_wedge((&e(0), &psi1_im), (&e(2), &psi2_im)).unwrap();
        let basis = theta_basis(&lambda, &mu).unwrap();
        assert!(re.sub(&basis.theta1).unwrap().is_zero_form(&dom).unwrap());
        assert!(im.sub(&basis.theta2).unwrap().is_zero_form(&dom).unwrap());
    }

    #[test]
    fn anti_invariant_space_is_two_dimensional() {
        // A random anti-invariant form is pointwise a combination of θ¹ and
        // θ²: all 3×3 minors of the stacked coefficient matrix vanish.
        use rand::Rng;
        use rand::SeedableRng;
        let lambda = ex("sin(2*pi*x4)");
        let mu = ex("cos(2*pi*x4)");
        let j = build_j_lambda_mu(&lambda, &mu).unwrap();
        let basis = theta_basis(&lambda, &mu).unwrap();
        let cf = kt_coframe();
        let dom = unit_domain();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let pairs: [(u8, u8); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        for _ in 0..5 {
            let mut terms = Vec::new();
            for (a, b) in pairs {
                let c = rng.gen_range(-1.0..1.0);
                terms.push((
                    vec![a, b],
                    ScalarExpr::constant(c)
                        * (ScalarExpr::constant(2.0) * ScalarExpr::pi() * ScalarExpr::var("x4"))
                            .sin()
                        + ScalarExpr::constant(rng.gen_range(-1.0..1.0)),
                ));
            }
            let raw = DifferentialForm::from_terms(cf.clone(), 2, terms).unwrap();
            let (_, minus) = j.anti_invariant_projection(&raw).unwrap();
            for point in dom.points().into_iter().take(25) {
                let row = |form: &DifferentialForm| -> Vec<f64> {
                    pairs
                        .iter()
                        .map(|(a, b)| form.coefficient(&[*a, *b]).evaluate(&point).unwrap())
                        .collect()
                };
                let m = [row(&basis.theta1), row(&basis.theta2), row(&minus)];
                // Rank of the 3×6 matrix must be ≤ 2: all 3×3 minors vanish.
                for c1 in 0..6 {
                    for c2 in (c1 + 1)..6 {
                        for c3 in (c2 + 1)..6 {
                            let det = m[0][c1] * (m[1][c2] * m[2][c3] - m[1][c3] * m[2][c2])
                                - m[0][c2] * (m[1][c1] * m[2][c3] - m[1][c3] * m[2][c1])
                                + m[0][c3] * (m[1][c1] * m[2][c2] - m[1][c2] * m[2][c1]);
                            assert!(det.abs() < 1e-9, "anti-invariant rank exceeded 2");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn verify_reports_the_sandwich() {
        let report = verify_h_minus_2(&ex("sin(2*pi*x4)"), &ScalarExpr::zero()).unwrap();
        assert!(report.passed());
        assert_eq!(report.h_minus, Some(2));
        assert!(!report.integrable);
        // Degenerate constant case: closedness and independence still hold.
        let constant = verify_h_minus_2(&ScalarExpr::zero(), &ScalarExpr::zero()).unwrap();
        assert!(constant.passed());
        assert!(constant.integrable);
        // Second non-trivial sample of the family.
        let second = verify_h_minus_2(&ex("sin(2*pi*x4)"), &ex("cos(4*pi*x4)")).unwrap();
        assert!(second.passed());
    }
}
