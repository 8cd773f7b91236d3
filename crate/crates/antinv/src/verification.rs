//! The built-in verification battery: every headline identity and numerical
//! dimension claim the toolkit makes, bundled as callable checks with pinned
//! tolerances. The acceptance test target and the `reproduce-paper` CLI
//! subcommand both run exactly these functions.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::acs::AlmostComplexStructure;
use crate::forms::DifferentialForm;
use crate::kernel::{
    self, assemble, assemble_from_structure, decide_dim, dense_singular_values, GridSpec,
    DEFAULT_TOL_RATIO,
};
use crate::nilmanifold;
use crate::product6d;
use crate::r4family::{self, build_jf, AntiInvariantCandidate};
use crate::symexpr::{is_zero, parse, SampleDomain, ScalarExpr};

/// Gram-rank certificate floor: smallest/largest singular value of the
/// sampled family matrix must exceed this.
pub const RANK_SIGMA_RATIO: f64 = 1e-10;
/// Relative tolerance for the symbolic-vs-finite-difference derivative check.
pub const DERIVATIVE_FD_TOL: f64 = 1e-6;
/// Relative tolerance for the operator adjoint identity.
pub const ADJOINT_TOL: f64 = 1e-12;
/// Sampled skewness tolerance for the theta construction.
pub const SKEWNESS_TOL: f64 = 1e-9;
/// Required spectral gap for the kernel-dimension criteria.
pub const KERNEL_GAP: f64 = 1e3;
/// Relative distance allowed between the single kernel vector and the
/// constant field in the one-dimensional case.
pub const KERNEL_VECTOR_TOL: f64 = 1e-6;

/// Wall-clock budgets per criterion, seconds.
pub const BUDGETS: [f64; 10] = [10.0, 5.0, 10.0, 5.0, 30.0, 60.0, 300.0, 300.0, 5.0, 180.0];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub details: serde_json::Value,
}

fn finish(
    id: usize,
    name: &str,
    started: Instant,
    checks_passed: bool,
    details: serde_json::Value,
) -> CriterionReport {
    let seconds = started.elapsed().as_secs_f64();
    let budget_seconds = BUDGETS[id - 1];
    CriterionReport {
        id,
        name: name.to_owned(),
        passed: checks_passed && seconds < budget_seconds,
        seconds,
        budget_seconds,
        details,
    }
}

fn r4_expr(text: &str) -> ScalarExpr {
    parse(text, &r4family::CHART).expect("battery expression parses")
}

/// Criterion 1: the forms `α_n`, `n = 1..8`, are closed, and the sampled
/// family matrix has numerical rank 8 (singular-value ratio above 1e-10).
pub fn infinite_family() -> CriterionReport {
    let started = Instant::now();
    let dom = r4family::unit_domain();
    let mut closed = Vec::new();
    let mut alphas = Vec::new();
    for n in 1..=8u32 {
        let alpha = r4family::alpha_n(n).expect("n >= 1");
        let d = alpha.exterior_derivative().expect("degree 2 < 4");
        closed.push(d.is_zero_form(&dom).unwrap_or(false));
        alphas.push(alpha);
    }
    let all_closed = closed.iter().all(|&c| c);

    // Sampled family matrix: 8 rows, one column block of six wedge
    // coefficients per sample point.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pairs: [[u8; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
    let npts = 200;
    let mut matrix = DMatrix::zeros(8, npts * 6);
    for s in 0..npts {
        let point: std::collections::HashMap<String, f64> = r4family::CHART
            .iter()
            .map(|v| ((*v).to_owned(), rng.gen_range(-1.0..1.0)))
            .collect();
        for (row, alpha) in alphas.iter().enumerate() {
            for (c, pair) in pairs.iter().enumerate() {
                matrix[(row, s * 6 + c)] = alpha.coefficient(pair).evaluate(&point).unwrap();
            }
        }
    }
    let mut sigmas: Vec<f64> = matrix.svd(false, false).singular_values.as_slice().to_vec();
    sigmas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_ratio = sigmas[7] / sigmas[0];
    let rank_ok = sigma_ratio > RANK_SIGMA_RATIO;

    finish(
        1,
        "infinite-family",
        started,
        all_closed && rank_ok,
        json!({
            "closed": closed,
            "rank_sigma_ratio": sigma_ratio,
            "rank_threshold": RANK_SIGMA_RATIO,
        }),
    )
}

/// Criterion 2: integrability of `J_f` across the battery is decided exactly
/// by `f_{x2} = f_{y2} = 0`.
pub fn integrability_battery() -> CriterionReport {
    let started = Instant::now();
    let dom = r4family::unit_domain();
    let battery = [
        ("0", true),
        ("x2", false),
        ("y2", false),
        ("x1*y1", true),
        ("sin(2*pi*x1)", true),
        ("x2 + y2", false),
    ];
    let mut outcomes = Vec::new();
    let mut ok = true;
    for (text, expected) in battery {
        let jf = build_jf(r4_expr(text)).expect("chart expression");
        let integrable = jf.acs().is_integrable(&dom).unwrap();
        outcomes.push(json!({"f": text, "integrable": integrable, "expected": expected}));
        ok = ok && integrable == expected;
    }
    finish(
        2,
        "integrability-criterion",
        started,
        ok,
        json!({ "battery": outcomes }),
    )
}

/// Criterion 3: for 20 seeded random polynomial triples `(a, b, f)` of degree
/// at most 3, the four first-order residuals match the coefficients of
/// `d(aβ + bγ)` with the signs `(r1, r3, -r2, -r4)` on the ascending basis.
pub fn first_order_equivalence() -> CriterionReport {
    let started = Instant::now();
    let dom = r4family::unit_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    let vars = r4family::CHART;
    let poly = |rng: &mut ChaCha8Rng| -> ScalarExpr {
        // Random polynomial of total degree <= 3 with a few monomials.
        let mut acc = ScalarExpr::constant(rng.gen_range(-1.0..1.0));
        for _ in 0..4 {
            let mut mono = ScalarExpr::constant(rng.gen_range(-1.0..1.0));
            for _ in 0..rng.gen_range(1..=3) {
                mono = mono * ScalarExpr::var(vars[rng.gen_range(0..4)]);
            }
            acc = acc + mono;
        }
        acc
    };
    let mut matched = 0;
    for _ in 0..20 {
        let a = poly(&mut rng);
        let b = poly(&mut rng);
        let f = poly(&mut rng);
        let jf = build_jf(f.clone()).unwrap();
        let alpha = jf.beta().scale(&a).add(&jf.gamma().scale(&b)).unwrap();
        let da = alpha.exterior_derivative().unwrap();
        let r = r4family::first_order_residual(
            &AntiInvariantCandidate {
                a: a.clone(),
                b: b.clone(),
            },
            &f,
        );
        let expectations = [
            (vec![0u8, 1, 2], r[0].clone()),
            (vec![0, 1, 3], r[2].clone()),
            (vec![0, 2, 3], -r[1].clone()),
            (vec![1, 2, 3], -r[3].clone()),
        ];
        let all = expectations
            .iter()
            .all(|(idx, expect)| is_zero(&(da.coefficient(idx) - expect.clone()), &dom).unwrap());
        if all {
            matched += 1;
        }
    }
    finish(
        3,
        "first-order-system-equivalence",
        started,
        matched == 20,
        json!({ "matched": matched, "total": 20 }),
    )
}

/// Criterion 4: on the Kodaira–Thurston coframe, `θ¹` and `e^λ θ²` are closed
/// anti-invariant forms for three (λ, μ) samples, the Nijenhuis obstruction
/// `N(E₁,E₃) = -λ' e^{λ+μ} E₂` holds symbolically, and the dimension sandwich
/// pins `h⁻ = 2` against the recorded bound `b⁺ = 2`.
pub fn kodaira_thurston() -> CriterionReport {
    let started = Instant::now();
    let kt_vars = nilmanifold::CHART;
    let ex = |text: &str| parse(text, &kt_vars).unwrap();
    let tuples = [
        ("sin(2*pi*x4)", "0"),
        ("sin(2*pi*x4)", "cos(2*pi*x4)"),
        ("0", "0"),
    ];
    let mut reports = Vec::new();
    let mut ok = true;
    let dom = nilmanifold::unit_domain();
    for (lt, mt) in tuples {
        let lambda = ex(lt);
        let mu = ex(mt);
        let report = nilmanifold::verify_h_minus_2(&lambda, &mu).unwrap();
        ok = ok && report.passed();
        // Where μ ≡ 0 the obstruction reduces to the bare -λ' e^λ E₂; check
        // that literal form too.
        if mt == "0" {
            let j = nilmanifold::build_j_lambda_mu(&lambda, &mu).unwrap();
            let n = j.nijenhuis(0, 2);
            let literal = n[1].clone() + lambda.differentiate("x4") * lambda.exp();
            ok = ok && is_zero(&literal, &dom).unwrap();
        }
        reports.push(serde_json::to_value(&report).unwrap());
    }
    finish(
        4,
        "kodaira-thurston-dimension",
        started,
        ok,
        json!({ "tuples": reports }),
    )
}

/// Criterion 5: for `J_{x2}` and `ω = γ`, the bilinear `θ^r` is skew at 100
/// sampled point/vector pairs, `J θ^r = -θ^r`, and `θ⁰ = ω` exactly, for
/// `r ∈ {0, 1/2, 1, 2}` and `r = sin(2πx1)`.
pub fn theta_power_family() -> CriterionReport {
    let started = Instant::now();
    let jf = build_jf(r4_expr("x2")).unwrap();
    let j = jf.acs();
    let gamma = jf.gamma();
    let dom = r4family::unit_domain();
    let r_values = [
        ("0", ScalarExpr::zero()),
        ("1/2", ScalarExpr::constant(0.5)),
        ("1", ScalarExpr::one()),
        ("2", ScalarExpr::constant(2.0)),
        ("sin(2*pi*x1)", r4_expr("sin(2*pi*x1)")),
    ];
    let mut per_r = Vec::new();
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for (label, r) in r_values {
        let bilinear = j.theta_bilinear(gamma, &r).unwrap();
        let mut skew_ok = true;
        for point in dom.points() {
            let bval: Vec<Vec<f64>> = bilinear
                .iter()
                .map(|row| row.iter().map(|e| e.evaluate(&point).unwrap()).collect())
                .collect();
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eval = |a: &[f64], b: &[f64]| -> f64 {
                let mut acc = 0.0;
                for k in 0..4 {
                    for l in 0..4 {
                        acc += a[k] * b[l] * bval[k][l];
                    }
                }
                acc
            };
            if (eval(&v, &w) + eval(&w, &v)).abs() > SKEWNESS_TOL {
                skew_ok = false;
                break;
            }
        }
        let theta = j.theta_r(gamma, &r, &dom).unwrap();
        let j_theta = j.act_on_two_form(&theta).unwrap();
        let anti_ok = j_theta.add(&theta).unwrap().is_zero_form(&dom).unwrap();
        let exact_at_zero = if label == "0" {
            theta.terms().count() == gamma.terms().count()
                && gamma
                    .terms()
                    .all(|(idx, coeff)| &theta.coefficient(idx) == coeff)
        } else {
            true
        };
        ok = ok && skew_ok && anti_ok && exact_at_zero;
        per_r.push(json!({
            "r": label,
            "skew": skew_ok,
            "anti_invariant": anti_ok,
            "exact_at_zero": exact_at_zero,
        }));
    }
    finish(
        5,
        "theta-power-construction",
        started,
        ok,
        json!({ "r_values": per_r }),
    )
}

fn flat_f(_: &[f64; 4]) -> f64 {
    0.0
}

fn half_sin_x2(p: &[f64; 4]) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * p[1]).sin()
}

/// Criterion 6: the flat system has kernel dimension exactly 2, stable over
/// N ∈ {4, 6, 8}, gap ratio at least 1e3, with the dense spectral oracle
/// agreeing at N = 4 and N = 6.
pub fn kernel_flat(quick: bool) -> CriterionReport {
    let started = Instant::now();
    let resolutions: &[usize] = if quick { &[4] } else { &[4, 6, 8] };
    let sweep = kernel::resolution_sweep(&flat_f, resolutions, KERNEL_GAP).unwrap();
    let gap_ok = sweep
        .reports
        .iter()
        .all(|r| r.gap_ratio.map(|g| g >= KERNEL_GAP).unwrap_or(false));
    let mut dense_dims = Vec::new();
    let dense_resolutions: &[usize] = if quick { &[4] } else { &[4, 6] };
    for &n in dense_resolutions {
        let op = assemble(&flat_f, GridSpec::new(n).unwrap()).unwrap();
        let sigmas = dense_singular_values(&op);
        let (dim, ambiguous) = decide_dim(&sigmas, n, KERNEL_GAP);
        dense_dims.push(json!({"n": n, "dim": dim, "ambiguous": ambiguous}));
        if dim != 2 || ambiguous {
            return finish(
                6,
                "kernel-dimension-flat",
                started,
                false,
                json!({"sweep_dim": sweep.dim, "dense": dense_dims}),
            );
        }
    }
    let ok = sweep.stable && sweep.dim == Some(2) && gap_ok;
    finish(
        6,
        "kernel-dimension-flat",
        started,
        ok,
        json!({
            "sweep_stable": sweep.stable,
            "sweep_dim": sweep.dim,
            "gap_ok": gap_ok,
            "dense": dense_dims,
            "singular_values_smallest": sweep.reports.iter().map(|r| r.singular_values.clone()).collect::<Vec<_>>(),
        }),
    )
}

/// Criterion 7: for `f = (1/2) sin(2πx2)` the kernel is one-dimensional,
/// pinned by the dense oracle at N = 6 and stable over N ∈ {8, 12}, and the
/// kernel vector is the constant `(a, b) = (0, 1)` field up to 1e-6.
pub fn kernel_theorem_analog(quick: bool) -> CriterionReport {
    let started = Instant::now();
    let mut details = serde_json::Map::new();
    let mut ok = true;

    if !quick {
        let op = assemble(&half_sin_x2, GridSpec::new(6).unwrap()).unwrap();
        let sigmas = dense_singular_values(&op);
        let (dense_dim, dense_ambiguous) = decide_dim(&sigmas, 6, KERNEL_GAP);
        details.insert("dense_dim_n6".into(), json!(dense_dim));
        ok = ok && dense_dim == 1 && !dense_ambiguous;
    }

    let resolutions: &[usize] = if quick { &[8] } else { &[8, 12] };
    let sweep = kernel::resolution_sweep(&half_sin_x2, resolutions, KERNEL_GAP).unwrap();
    ok = ok && sweep.stable && sweep.dim == Some(1);
    details.insert("sweep_dim".into(), json!(sweep.dim));
    details.insert("sweep_stable".into(), json!(sweep.stable));

    // Kernel vector against the normalized constant (a, b) = (0, 1) field.
    let mut vector_distances = Vec::new();
    for report in &sweep.reports {
        let npts = report.resolution.pow(4);
        let scale = 1.0 / (npts as f64).sqrt();
        let v = &report.basis[0];
        let mut dist_plus = 0.0;
        let mut dist_minus = 0.0;
        for &x in &v.a {
            dist_plus += x * x;
            dist_minus += x * x;
        }
        for &x in &v.b {
            dist_plus += (x - scale) * (x - scale);
            dist_minus += (x + scale) * (x + scale);
        }
        let dist = dist_plus.min(dist_minus).sqrt();
        vector_distances.push(dist);
        ok = ok && dist <= KERNEL_VECTOR_TOL;
    }
    details.insert("kernel_vector_distances".into(), json!(vector_distances));
    finish(
        7,
        "kernel-dimension-sin",
        started,
        ok,
        serde_json::Value::Object(details),
    )
}

/// Criterion 8: the glued transverse structure. The dense oracle at N = 6
/// fixes the ground-truth dimension (expected 0); the iterative estimator at
/// N = 8 must reproduce it. A nonzero measured dimension is flagged as a
/// deviation rather than hidden.
pub fn kernel_glued(quick: bool) -> CriterionReport {
    let started = Instant::now();
    let glued = r4family::transverse_glued_structure().unwrap();

    let dense_n = 6;
    let op6 = assemble_from_structure(&glued, GridSpec::new(dense_n).unwrap());
    let sigmas = dense_singular_values(&op6);
    let (oracle_dim, oracle_ambiguous) = decide_dim(&sigmas, dense_n, KERNEL_GAP);

    let mut details = serde_json::Map::new();
    details.insert("oracle_dim_n6".into(), json!(oracle_dim));
    details.insert("oracle_ambiguous".into(), json!(oracle_ambiguous));
    details.insert(
        "oracle_smallest_sigmas".into(),
        json!(sigmas.iter().take(4).collect::<Vec<_>>()),
    );
    details.insert("expected_dim".into(), json!(0));
    details.insert("deviates_from_expected".into(), json!(oracle_dim != 0));

    let mut ok = !oracle_ambiguous;
    if !quick {
        let op8 = assemble_from_structure(&glued, GridSpec::new(8).unwrap());
        let report = kernel::estimate_kernel_dim(&op8, DEFAULT_TOL_RATIO).unwrap();
        details.insert("iterative_dim_n8".into(), json!(report.dim));
        details.insert("iterative_ambiguous".into(), json!(report.ambiguous));
        ok = ok && !report.ambiguous && report.dim == oracle_dim;
    }
    finish(
        8,
        "kernel-dimension-glued",
        started,
        ok,
        serde_json::Value::Object(details),
    )
}

/// Criterion 9: the 6-dimensional product chart. The Nijenhuis value on
/// `(∂x1, ∂t1)` matches the bracket-expansion closed form and is nonvanishing
/// for both sample densities, and the (2,0)-type surface forms are closed and
/// anti-invariant.
pub fn product_chart() -> CriterionReport {
    let started = Instant::now();
    let mut ok = true;
    let mut per_f = Vec::new();
    for f in ["2 + sin(2*pi*x1)", "2 + x1*y1/10"] {
        let expr = parse(f, &product6d::CHART).unwrap();
        let chart = product6d::build_product_acs(expr).unwrap();
        let nij = product6d::product_nijenhuis_check(&chart).unwrap();
        let forms = product6d::local_anti_invariant_check(&chart).unwrap();
        ok = ok && nij.identity_holds && nij.nonvanishing && forms.all_pass();
        per_f.push(json!({
            "f": f,
            "nijenhuis": serde_json::to_value(&nij).unwrap(),
            "forms": serde_json::to_value(&forms).unwrap(),
        }));
    }
    finish(9, "product-chart", started, ok, json!({ "cases": per_f }))
}

fn random_form_on(
    rng: &mut ChaCha8Rng,
    cf: &std::sync::Arc<crate::forms::Coframe>,
    degree: usize,
    trig: bool,
) -> DifferentialForm {
    let n = cf.dim() as u8;
    let vars = cf.vars();
    fn subsets(n: u8, k: usize, start: u8, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            subsets(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut sets = Vec::new();
    subsets(n, degree, 0, &mut Vec::new(), &mut sets);
    let terms = sets
        .into_iter()
        .map(|set| {
            let v = vars[rng.gen_range(0..vars.len())];
            let w = vars[rng.gen_range(0..vars.len())];
            let c = ScalarExpr::constant(rng.gen_range(-1.0..1.0));
            let coeff = if trig {
                c * (ScalarExpr::constant(2.0) * ScalarExpr::pi() * ScalarExpr::var(v)).sin()
                    * ScalarExpr::var(w).exp()
            } else {
                c * ScalarExpr::var(v) * ScalarExpr::var(w) + ScalarExpr::var(v)
            };
            (set, coeff)
        })
        .collect();
    DifferentialForm::from_terms(cf.clone(), degree, terms).unwrap()
}

/// Criterion 10: the property suites. `d∘d = 0` on both coframes, graded
/// commutativity, the Leibniz rule, projection idempotence, Nijenhuis
/// antisymmetry, `J^r` additivity, the finite-difference derivative oracle,
/// and the operator adjoint identity.
pub fn property_battery() -> CriterionReport {
    let started = Instant::now();
    let mut fails: Vec<&str> = Vec::new();

    // d∘d on 50 random forms per coframe.
    let coords = r4family::chart();
    let kt = nilmanifold::kt_coframe();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for cf in [&coords, &kt] {
        let dom = cf.unit_domain().with_samples(40);
        for round in 0..50 {
            let degree = rng.gen_range(0..=2);
            let form = random_form_on(&mut rng, cf, degree, round % 2 == 0);
            let dd = form
                .exterior_derivative()
                .unwrap()
                .exterior_derivative()
                .unwrap();
            if !dd.is_zero_form(&dom).unwrap() {
                fails.push("d_squared");
            }
        }
    }

    // Graded commutativity and Leibniz on sampled pairs.
    for _ in 0..15 {
        let dom = coords.unit_domain().with_samples(40);
        let p = rng.gen_range(1..=2usize);
        let q = rng.gen_range(1..=2usize);
        let a = random_form_on(&mut rng, &coords, p, false);
        let b = random_form_on(&mut rng, &coords, q, true);
        let sign = if (p * q) % 2 == 0 { 1.0 } else { -1.0 };
        let comm = a
            .wedge(&b)
            .unwrap()
            .sub(&b.wedge(&a).unwrap().scale(&ScalarExpr::constant(sign)))
            .unwrap();
        if !comm.is_zero_form(&dom).unwrap() {
            fails.push("graded_commutativity");
        }
        if p + q < 4 {
            let left = a.wedge(&b).unwrap().exterior_derivative().unwrap();
            let sgn = if p % 2 == 0 { 1.0 } else { -1.0 };
            let right = a
                .exterior_derivative()
                .unwrap()
                .wedge(&b)
                .unwrap()
                .add(
                    &a.wedge(&b.exterior_derivative().unwrap())
                        .unwrap()
                        .scale(&ScalarExpr::constant(sgn)),
                )
                .unwrap();
            if !left.sub(&right).unwrap().is_zero_form(&dom).unwrap() {
                fails.push("leibniz");
            }
        }
    }

    // Projection idempotence and Nijenhuis antisymmetry for a non-flat J_f.
    let jf = build_jf(r4_expr("x2 + x1*y1/2")).unwrap();
    let dom = r4family::unit_domain().with_samples(40);
    for _ in 0..20 {
        let alpha = random_form_on(&mut rng, &coords, 2, false);
        let (_, minus) = jf.acs().anti_invariant_projection(&alpha).unwrap();
        let (pp, mm) = jf.acs().anti_invariant_projection(&minus).unwrap();
        if !pp.is_zero_form(&dom).unwrap() || !mm.sub(&minus).unwrap().is_zero_form(&dom).unwrap() {
            fails.push("projection_idempotence");
        }
    }
    for (a, b) in [(0usize, 1usize), (0, 2), (1, 3), (2, 3)] {
        let n1 = jf.acs().nijenhuis(a, b);
        let n2 = jf.acs().nijenhuis(b, a);
        for i in 0..4 {
            if !is_zero(&(n1[i].clone() + n2[i].clone()), &dom).unwrap() {
                fails.push("nijenhuis_antisymmetry");
            }
        }
    }

    // J^r additivity at random real exponents.
    for _ in 0..5 {
        let r = ScalarExpr::constant(rng.gen_range(-2.0..2.0));
        let s = ScalarExpr::constant(rng.gen_range(-2.0..2.0));
        let lhs = jf
            .acs()
            .fractional_power(&r)
            .compose(&jf.acs().fractional_power(&s));
        let rhs = jf.acs().fractional_power(&(r + s));
        for i in 0..4 {
            for k in 0..4 {
                let diff = lhs.entry(i, k).clone() - rhs.entry(i, k).clone();
                if !is_zero(&diff, &dom).unwrap() {
                    fails.push("fractional_power_additivity");
                }
            }
        }
    }

    // Symbolic-vs-finite-difference derivative agreement on 200 triples.
    let mut fd_rng = ChaCha8Rng::seed_from_u64(808);
    let vars = r4family::CHART;
    let mut fd_checked = 0;
    while fd_checked < 200 {
        let depth = 3;
        let e = random_symexpr(&mut fd_rng, &vars, depth);
        let v = vars[fd_rng.gen_range(0..4)];
        let point: std::collections::HashMap<String, f64> = vars
            .iter()
            .map(|n| ((*n).to_owned(), fd_rng.gen_range(-1.0..1.0)))
            .collect();
        let sym = match e.differentiate(v).evaluate(&point) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let h = 1e-5;
        let mut hi = point.clone();
        let mut lo = point.clone();
        *hi.get_mut(v).unwrap() += h;
        *lo.get_mut(v).unwrap() -= h;
        let (fh, fl) = match (e.evaluate(&hi), e.evaluate(&lo)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => continue,
        };
        let fd = (fh - fl) / (2.0 * h);
        if (sym - fd).abs() > DERIVATIVE_FD_TOL * (1.0 + sym.abs().max(fd.abs())) {
            fails.push("derivative_fd");
        }
        fd_checked += 1;
    }

    // Adjoint identity on the sparse operator.
    let op = assemble(&half_sin_x2, GridSpec::new(6).unwrap()).unwrap();
    let mut av = vec![0.0; op.rows()];
    let mut atw = vec![0.0; op.cols()];
    for _ in 0..5 {
        let v: Vec<f64> = (0..op.cols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..op.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        op.apply(&v, &mut av);
        op.apply_transpose(&w, &mut atw);
        let lhs: f64 = av.iter().zip(&w).map(|(x, y)| x * y).sum();
        let rhs: f64 = v.iter().zip(&atw).map(|(x, y)| x * y).sum();
        if (lhs - rhs).abs() > ADJOINT_TOL * lhs.abs().max(rhs.abs()).max(1.0) {
            fails.push("adjoint");
        }
    }

    fails.sort_unstable();
    fails.dedup();
    let ok = fails.is_empty();
    finish(
        10,
        "property-suites",
        started,
        ok,
        json!({ "failed_properties": fails }),
    )
}

fn random_symexpr(rng: &mut ChaCha8Rng, vars: &[&str], depth: usize) -> ScalarExpr {
    let choice = if depth == 0 {
        rng.gen_range(0..2)
    } else {
        rng.gen_range(0..9)
    };
    match choice {
        0 => ScalarExpr::constant(rng.gen_range(-2.0..2.0)),
        1 => ScalarExpr::var(vars[rng.gen_range(0..vars.len())]),
        2 => random_symexpr(rng, vars, depth - 1) + random_symexpr(rng, vars, depth - 1),
        3 => random_symexpr(rng, vars, depth - 1) * random_symexpr(rng, vars, depth - 1),
        4 => random_symexpr(rng, vars, depth - 1).sin(),
        5 => random_symexpr(rng, vars, depth - 1).cos(),
        6 => {
            let den = ScalarExpr::constant(rng.gen_range(2.0..3.0))
                + random_symexpr(rng, vars, depth - 1).sin();
            random_symexpr(rng, vars, depth - 1) / den
        }
        7 => (ScalarExpr::constant(rng.gen_range(2.0..3.0))
            + random_symexpr(rng, vars, depth - 1).cos())
        .sqrt(),
        _ => random_symexpr(rng, vars, depth - 1).pow(rng.gen_range(2..4)),
    }
}

/// Sanity statement shared by a unit test and the consolidated run: the theta
/// construction's two report flags satisfy the one-directional implication on
/// every tested input.
pub fn theta_implication_holds(
    j: &AlmostComplexStructure,
    omega: &DifferentialForm,
    dom: &SampleDomain,
) -> bool {
    match j.integrability_from_theta(omega, dom) {
        Ok(report) => !report.theta_closed || report.nijenhuis_vanishes,
        Err(_) => true,
    }
}

/// Runs the full battery in order. `quick` trims the expensive kernel
/// resolutions for smoke-test use.
pub fn run_battery(quick: bool) -> Vec<CriterionReport> {
    vec![
        infinite_family(),
        integrability_battery(),
        first_order_equivalence(),
        kodaira_thurston(),
        theta_power_family(),
        kernel_flat(quick),
        kernel_theorem_analog(quick),
        kernel_glued(quick),
        product_chart(),
        property_battery(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_implication_on_both_reference_structures() {
        let cf = r4family::chart();
        let dom = r4family::unit_domain();
        let j0 = build_jf(ScalarExpr::zero()).unwrap();
        let omega = DifferentialForm::from_terms(
            cf.clone(),
            2,
            vec![
                (vec![0, 1], ScalarExpr::one()),
                (vec![2, 3], ScalarExpr::constant(-1.0)),
            ],
        )
        .unwrap();
        assert!(theta_implication_holds(j0.acs(), &omega, &dom));
        let jx2 = build_jf(r4_expr("x2")).unwrap();
        let gamma = jx2.gamma().clone();
        assert!(theta_implication_holds(jx2.acs(), &gamma, &dom));
    }
}
