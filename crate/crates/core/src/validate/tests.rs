use super::*;

fn quick() -> ValidateOptions {
    ValidateOptions { trials: 20_000, ..Default::default() }
}

#[test]
fn selector_parsing() {
    assert_eq!(parse_selector("appendix").unwrap().len(), 5);
    assert_eq!(parse_selector("all").unwrap().len(), Suite::ALL.len());
    assert_eq!(parse_selector("v").unwrap(), vec![Suite::SignedDistanceBound]);
    assert_eq!(parse_selector("zero-set, i,zero-set").unwrap(), vec![Suite::Polarization, Suite::ZeroSet]);
    assert!(matches!(parse_selector("nope"), Err(ValidateError::UnknownSuite(_))));
    assert!(matches!(parse_selector(" , "), Err(ValidateError::Empty)));
}

#[test]
fn appendix_suites_pass() {
    let r = run_suites(&parse_selector("appendix").unwrap(), &quick());
    for s in &r.suites {
        assert!(s.passed, "{s:?}");
        assert!(s.trials > 0);
    }
}

#[test]
fn flipped_sign_fails_signed_distance_suite() {
    let opts = ValidateOptions { mutation: Some(Mutation::FlipDistSoSign), ..quick() };
    let r = run_suite(Suite::SignedDistanceBound, &opts);
    assert!(!r.passed);
    assert!(r.violations > r.trials / 4, "{r:?}");
    // the mutation does not touch suites that avoid the SO distance
    assert!(run_suite(Suite::EqualLengthBound, &opts).passed);
}

#[test]
fn equal_length_constant_is_recovered_at_unit_ratio() {
    for t in [0.3, 1.0, 2.0, 2.9] {
        let c = ratio_angle_constant(1.0, t);
        assert!((c - 2.0 / (1.0 - f64::cos(t))).abs() < 1e-14);
        // continuity in r
        let c2 = ratio_angle_constant(1.0 + 1e-9, t);
        assert!((c2 - c).abs() < 1e-6 * c, "{c} {c2}");
    }
}

#[test]
fn ratio_angle_split_has_equal_lengths() {
    // oracle: recompute |v| and |w| directly
    for (r, t) in [(1.5, 0.7), (3.0, 2.5), (4.9, 0.1)] {
        let alpha = (r * r - 1.0) / (2.0 * r * (r + f64::cos(t)));
        let x = Vec2::new(1.0, 0.0);
        let y = Vec2::new(f64::cos(t), f64::sin(t)) * r;
        let (v, w) = (x + y * alpha, y * (1.0 - alpha));
        assert!((v.norm() - w.norm()).abs() < 1e-12);
        assert!(alpha > (r - 1.0) / (2.0 * r) && alpha < (r + 1.0) / (2.0 * r));
    }
}

#[test]
fn local_constant_for_orthonormal_pair() {
    // x = e1, y = e2: Σ (û·Bû)² = b11² + b22² + (b11 + b22 + 2 b12)²/4;
    // the worst unit direction is b11 = b22 = 0, √2 b12 = 1, giving 1/2
    let (c, b) = local_orthogonal_constant(&Vec2::new(1.0, 0.0), &Vec2::new(0.0, 1.0));
    assert!((b.norm() - 1.0).abs() < 1e-12 && (b - b.transpose()).norm() < 1e-15);
    // the ratio along the returned direction approaches the constant
    let p = Mat2::identity() + b * 1e-6;
    let us = [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0)];
    let q = dist2_o_reference(&p) / length_defect(&p, &us);
    assert!((q - c).abs() < 1e-3 * c, "{q} vs {c}");
    let m = nalgebra::Matrix3::new(1.25, 0.25, 0.5f64.sqrt() * 0.5, 0.25, 1.25, 0.5f64.sqrt() * 0.5, 0.5f64.sqrt() * 0.5, 0.5f64.sqrt() * 0.5, 0.5);
    assert!((c - 1.0 / m.symmetric_eigenvalues().min()).abs() < 1e-12);
}

#[test]
fn reports_are_deterministic() {
    let sel = parse_selector("iv,v").unwrap();
    let a = run_suites(&sel, &quick());
    let b = run_suites(&sel, &quick());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn geometry_energy_continuum_suites_pass() {
    let r = run_suites(&parse_selector("geometry,energy,continuum").unwrap(), &quick());
    assert!(r.passed(), "{:?}", r.suites);
}


#[test]
#[ignore = "full-size run; exercised by the acceptance target"]
fn default_run_passes() {
    let t = std::time::Instant::now();
    let r = run_suites(&Suite::ALL, &ValidateOptions::default());
    for s in &r.suites {
        eprintln!("{} {} {} {:?}", s.suite, s.trials, s.violations, s.metrics);
    }
    eprintln!("{:?}", t.elapsed());
    assert!(r.passed());
}
