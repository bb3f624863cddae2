//! The acceptance suite: one PASS/FAIL line per criterion, then a single
//! assertion that every criterion passed.

mod common;

use common::*;
use fbma::apps::{identity_check, ot_cone_lift, reconstruct, IdentityMode, LiftOptions};
use fbma::convex_core::Polytope;
use fbma::functionals::{ehat_landscape, LandscapeSpec};
use fbma::radial::{dual_radial_probe, hemisphere_closed_form, hemisphere_residual, probe_trend_to_zero, radial_solve, RadialForm, RadialProblem};
use fbma::solver::{minimize_energy, SolveConfig, SolveStatus};
use fbma::structure::{classify_structure, Property, StructuralPair, WeightedDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn one_d_reconstruction() -> Outcome {
    let t = Instant::now();
    let p = Polytope::interval(-1.0, 1.0).map_err(e2s)?;
    let rec = reconstruct(&p, 0.0, &SolveConfig { big_lambda: 2.0, nodes: 100, ..Default::default() }).map_err(e2s)?;
    let secs = t.elapsed().as_secs_f64();
    ensure(rec.result.status == SolveStatus::Converged, || format!("status {:?}", rec.result.status))?;
    let sup = (0..=400)
        .map(|i| -1.0 + i as f64 / 200.0)
        .map(|x| (rec.u(&[x]) - 0.5 * (x * x - 1.0)).abs())
        .fold(0.0f64, f64::max);
    let (lo, hi) = (rec.omega.vertices[0][0], rec.omega.vertices[1][0]);
    ensure(sup <= 1e-2, || format!("sup-norm {sup:.3e}"))?;
    ensure((lo + 1.0).abs() <= 1e-2 && (hi - 1.0).abs() <= 1e-2, || format!("Ω = ({lo}, {hi})"))?;
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("sup {sup:.2e}, Ω = ({lo:.5}, {hi:.5}), {secs:.2}s"))
}

fn one_d_eigenvalue() -> Outcome {
    let p = Polytope::interval(-1.0, 1.0).map_err(e2s)?;
    let rec = reconstruct(&p, 1.0, &SolveConfig { big_lambda: 2.0, nodes: 100, ..Default::default() }).map_err(e2s)?;
    ensure(rec.result.status == SolveStatus::Converged, || format!("status {:?}", rec.result.status))?;
    let sup = (0..=400)
        .map(|i| -FRAC_PI_2 + std::f64::consts::PI * i as f64 / 400.0)
        .map(|x| (rec.u(&[x]).min(0.0) + x.cos()).abs())
        .fold(0.0f64, f64::max);
    let el = rec.result.report.el_total();
    ensure(sup <= 2e-2, || format!("sup-norm {sup:.3e}"))?;
    ensure(el <= 2e-2, || format!("el residual {el:.3e}"))?;
    Ok(format!("λ = {:.6}, sup {sup:.2e}, el residual {el:.2e}", rec.lambda))
}

fn disc_cross_validation() -> Outcome {
    let t = Instant::now();
    let disc = Polytope::regular_polygon(48, 1.0, 0.0).map_err(e2s)?;
    let rec = reconstruct(&disc, 0.0, &SolveConfig { big_lambda: 2.0, nodes: 200, ..Default::default() }).map_err(e2s)?;
    let rad = radial_solve(&RadialProblem::new(2, RadialForm::Eigenvalue { k: 0.0 }, Some(1.0))).map_err(e2s)?;
    let secs = t.elapsed().as_secs_f64();
    ensure(rec.result.status == SolveStatus::Converged, || format!("status {:?}", rec.result.status))?;
    let mut sup = 0.0f64;
    for i in 0..=60 {
        for j in 0..=60 {
            let x = [-1.2 + 2.4 * i as f64 / 60.0, -1.2 + 2.4 * j as f64 / 60.0];
            let r = x[0].hypot(x[1]);
            let radial = if r < rad.radius { rad.u_at(r) } else { 0.0 };
            sup = sup.max((radial - rec.u(&x).min(0.0)).abs());
        }
    }
    ensure(sup <= 5e-2, || format!("sup-norm {sup:.3e}"))?;
    ensure(secs < 300.0, || format!("took {secs:.1}s"))?;
    Ok(format!("sup {sup:.2e} against R = {:.5}, m = {:.5}; {secs:.1}s", rad.radius, rad.m))
}

fn hemisphere_identity() -> Outcome {
    let grid: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let mut worst_one = 0.0f64;
    let mut worst_two = 0.0f64;
    for n in 1..=4 {
        worst_one = worst_one.max(hemisphere_residual(1.0, n, &grid).map_err(e2s)?.max_residual);
        for (r, res) in hemisphere_residual(2.0, n, &grid).map_err(e2s)?.points {
            worst_two = worst_two.max((res - hemisphere_closed_form(2.0, n, r)).abs());
        }
    }
    ensure(worst_one <= 1e-12, || format!("a = 1 residual {worst_one:.3e}"))?;
    ensure(worst_two <= 1e-10, || format!("a = 2 closed-form mismatch {worst_two:.3e}"))?;
    Ok(format!("a = 1 residual {worst_one:.1e}, a = 2 mismatch {worst_two:.1e}"))
}

fn non_example() -> Outcome {
    let pair = StructuralPair::non_example(1);
    let class = classify_structure(&pair, 1).map_err(e2s)?;
    ensure(class.property == Property::None, || format!("classified {}", class.property))?;
    let w = WeightedDomain::uniform(Polytope::interval(-1.0, 1.0).map_err(e2s)?).map_err(e2s)?;
    let cfg = SolveConfig { nodes: 40, starts: 4, refinement: vec![80, 160], ..Default::default() };
    let failed = |s: SolveStatus| matches!(s, SolveStatus::DivergedDiam | SolveStatus::NormalizationFailure);
    let statuses: Vec<SolveStatus> = match minimize_energy(&cfg, &pair, &w) {
        Ok(r) => r.starts.iter().map(|s| s.status).collect(),
        Err(fbma::Error::NormalizationFailure(_)) => vec![SolveStatus::NormalizationFailure],
        Err(e) => return Err(e.to_string()),
    };
    ensure(statuses.len() == 4 && statuses.iter().all(|s| failed(*s)), || format!("start statuses {statuses:?}"))?;
    let grid = [4.0, 2.0, 1.0, 0.5, 0.25, 0.125, 0.0625];
    let rows = dual_radial_probe(1, 1.0, &grid).map_err(e2s)?;
    ensure(probe_trend_to_zero(&rows), || format!("probe rows {rows:?}"))?;
    Ok(format!("classified none; starts {statuses:?}; v⋆(1) from {:.3e} to {:.3e}", rows[0].v_star, rows[rows.len() - 1].v_star))
}

fn cone_lift() -> Outcome {
    let p = Polytope::interval(-1.0, 1.0).map_err(e2s)?;
    let (lift, result, rep) = ot_cone_lift(&p, 0.0, 2.0, &SolveConfig { nodes: 100, ..Default::default() }, &LiftOptions::default()).map_err(e2s)?;
    ensure(result.status == SolveStatus::Converged, || format!("status {:?}", result.status))?;
    ensure(lift.gamma == 0.5, || format!("γ = {}", lift.gamma))?;
    ensure(rep.homogeneity_error <= 1e-12, || format!("homogeneity error {:.3e}", rep.homogeneity_error))?;
    ensure(rep.fraction_within_tol >= 0.9, || format!("only {:.3} of samples within 5%", rep.fraction_within_tol))?;
    Ok(format!("γ = 1/2, homogeneity {:.1e}, {:.1}% within 5%", rep.homogeneity_error, 100.0 * rep.fraction_within_tol))
}

fn identities() -> Outcome {
    let sq = WeightedDomain::uniform(Polytope::cube(2, 1.0).map_err(e2s)?).map_err(e2s)?;
    let cfg = SolveConfig { big_lambda: 2.0, nodes: 100, ..Default::default() };
    let hom = StructuralPair::eigenvalue(1.0);
    let r = minimize_energy(&cfg, &hom, &sq).map_err(e2s)?;
    ensure(r.status == SolveStatus::Converged, || format!("homogeneous solve {:?}", r.status))?;
    let h = identity_check(&r.report, IdentityMode::Homogeneous, &hom, &sq).map_err(e2s)?;
    let exp = StructuralPair::exponential(1.0);
    let r = minimize_energy(&cfg, &exp, &sq).map_err(e2s)?;
    ensure(r.status == SolveStatus::Converged, || format!("exponential solve {:?}", r.status))?;
    let e = identity_check(&r.report, IdentityMode::Exponential, &exp, &sq).map_err(e2s)?;
    ensure(h.relative <= 0.02, || format!("ΛJ = {} vs {}", h.actual, h.expected))?;
    ensure(e.relative <= 0.02, || format!("I = {} vs {}", e.actual, e.expected))?;
    Ok(format!("ΛJ = {:.6} (expect {}), exponential relative error {:.2e}", h.actual, h.expected, e.relative))
}

fn landscape() -> Outcome {
    let spec = LandscapeSpec { n: 4, nx: 200, nd: 200, ..Default::default() };
    let land = ehat_landscape(&spec, &StructuralPair::two_component(4)).map_err(e2s)?;
    let level = land.two_component_level().ok_or("no level with one bounded and one boundary-touching component")?;
    Ok(format!("level {:.4}: {} bounded, {} touching", level.level, level.bounded, level.touching))
}

fn random_data(rng: &mut ChaCha8Rng) -> ConvexData {
    let kinks = (0..rng.gen_range(0..3)).map(|_| (rng.gen_range(0.0..0.5), rng.gen_range(-0.9..0.9))).collect();
    ConvexData {
        base: rng.gen_range(0.6..2.0),
        tilt: [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)],
        curv: rng.gen_range(0.1..1.5),
        kinks,
    }
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..40 {
        let two_d = rng.gen_bool(0.5);
        let (v, w, n) = random_data(&mut rng).instance(if two_d { rng.gen_range(4..7) } else { rng.gen_range(4..10) }, two_d);
        let ys: Vec<Vec<f64>> = (0..8).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        check_legendre(&v, &ys).map_err(|e| format!("Legendre: {e}"))?;
        check_normalization(&v, &StructuralPair::transport(n, 0.0, rng.gen_range(0.5..3.0)), &w).map_err(|e| format!("normalization: {e}"))?;
    }
    for _ in 0..100 {
        let two_d = rng.gen_bool(0.5);
        let (mut v, w, n) = random_data(&mut rng).instance(if two_d { rng.gen_range(4..6) } else { rng.gen_range(4..9) }, two_d);
        for c in v.intercepts.iter_mut() {
            *c += rng.gen_range(-0.01..0.01);
        }
        let pair = &pair_catalog(n)[rng.gen_range(0..4)];
        check_gradient(&v, pair, &w, rng.gen_range(0.5..4.0)).map_err(|e| format!("gradient: {e}"))?;
    }
    for _ in 0..50 {
        let (d0, d1) = (random_data(&mut rng), random_data(&mut rng));
        let pair = &pair_catalog(1)[rng.gen_range(0..3)];
        check_midpoint_convexity(&d0, &d1, rng.gen_range(5..14), pair, rng.gen_range(0.5..4.0)).map_err(|e| format!("convexity: {e}"))?;
    }
    Ok("Legendre and normalization on 40 instances, gradient on 100, convexity on 50; mass balance and J bounds at every evaluation".into())
}

fn classification_table() -> Outcome {
    let transport = classify_structure(&StructuralPair::transport(2, 0.5, 2.0), 2).map_err(e2s)?;
    ensure(transport.property == Property::SH3, || format!("transport pair classified {}", transport.property))?;
    let bad = classify_structure(&StructuralPair::non_example(2), 2).map_err(e2s)?;
    ensure(bad.property == Property::None, || format!("non-example classified {}", bad.property))?;
    let exp = classify_structure(&StructuralPair::exponential(1.0), 2).map_err(e2s)?;
    ensure(exp.satisfies(Property::H1) && !exp.satisfies(Property::SH1), || format!("exponential pair classified {}", exp.property))?;
    Ok(format!("transport {}, non-example {}, exponential {}", transport.property, bad.property, exp.property))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1-D reconstruction", one_d_reconstruction),
        ("1-D eigenvalue", one_d_eigenvalue),
        ("2-D disc against radial oracle", disc_cross_validation),
        ("hemisphere identity", hemisphere_identity),
        ("non-example reproduction", non_example),
        ("transport cone lift", cone_lift),
        ("integral identities", identities),
        ("landscape topology", landscape),
        ("property suites", property_suites),
        ("classification table", classification_table),
    ];
    let mut failures = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(why) => {
                println!("FAIL {:>2} {name}: {why}", k + 1);
                failures.push(k + 1);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
