use super::*;
use crate::field_expr::parse_field;
use crate::geometry::{segment_length, DistanceOptions, Mat2, MetricField};
use crate::quadrature::TriangleRule;

fn hex() -> LatticeFrame {
    LatticeFrame::hexagonal()
}

fn conformal() -> MetricField {
    MetricField::conformal(Chart::unit_square(), hex(), parse_field("exp((x^2+y^2)/2)").unwrap())
}

fn equilateral(eps: f64) -> [Vec2; 3] {
    let f = hex();
    let p = Vec2::new(0.2, 0.1);
    let q = p + f.a() * eps;
    [p, q, q + f.b() * eps]
}

// least-squares slope of log y against log x
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[test]
fn interior_vertices_have_six_lattice_neighbours() {
    for eps in [0.5, 0.2, 0.1, 0.07] {
        let tri = build_lattice(&Chart::unit_square(), &hex(), eps).unwrap();
        tri.check_invariants(&hex()).unwrap();
    }
    let skew = LatticeFrame::new(Vec2::new(1.0, 0.3), Vec2::new(-0.2, 0.9)).unwrap();
    let tri = build_lattice(&Chart::new(-1.0, 1.0, 0.0, 0.5).unwrap(), &skew, 0.05).unwrap();
    tri.check_invariants(&skew).unwrap();
    assert!(tri.boundary.iter().any(|b| !b));
}

#[test]
fn orientation_counts_match_brute_force() {
    // oracle: enumerate every lattice triangle of a generous index window directly
    let chart = Chart::unit_square();
    let eps = 0.5;
    let tri = build_lattice(&chart, &hex(), eps).unwrap();
    let o = Vec2::new(0.25, 0.25);
    let f = hex();
    let at = |i: i64, j: i64| o + (f.a() * i as f64 + f.b() * j as f64) * eps;
    let inside = |p: Vec2| p.x >= -1e-12 && p.x <= 1.0 + 1e-12 && p.y >= -1e-12 && p.y <= 1.0 + 1e-12;
    let (mut plus, mut minus) = (0, 0);
    let mut rows = std::collections::BTreeSet::new();
    for i in -20..20 {
        for j in -20..20 {
            if [at(i, j), at(i + 1, j), at(i + 1, j + 1)].into_iter().all(inside) {
                plus += 1;
                rows.insert(j);
            }
            if [at(i, j), at(i + 1, j), at(i, j - 1)].into_iter().all(inside) {
                minus += 1;
                rows.insert(j - 1);
            }
        }
    }
    let n_plus = tri.triangles.iter().filter(|t| t.orient == Orientation::Plus).count();
    let n_minus = tri.triangles.len() - n_plus;
    assert_eq!((n_plus, n_minus), (plus, minus));
    assert!(n_plus.abs_diff(n_minus) <= rows.len());

    let tri = build_lattice(&chart, &hex(), 0.1).unwrap();
    let n_plus = tri.triangles.iter().filter(|t| t.orient == Orientation::Plus).count();
    let n_minus = tri.triangles.len() - n_plus;
    let rows: std::collections::BTreeSet<i64> =
        tri.lattice.as_ref().unwrap().index.iter().map(|v| v[1]).collect();
    assert!(n_plus.abs_diff(n_minus) <= rows.len());
}

#[test]
fn halving_epsilon_quadruples_vertices() {
    let chart = Chart::unit_square();
    for eps in [0.1, 0.05, 0.025] {
        let coarse = build_lattice(&chart, &hex(), eps).unwrap().n_vertices() as f64;
        let fine = build_lattice(&chart, &hex(), eps / 2.0).unwrap().n_vertices() as f64;
        let ratio = fine / coarse;
        assert!((3.5..=4.5).contains(&ratio), "eps {eps}: ratio {ratio}");
    }
}

#[test]
fn too_large_epsilon_is_rejected() {
    assert!(matches!(
        build_lattice(&Chart::unit_square(), &hex(), 2.0),
        Err(MeshError::DomainTooSmall { .. })
    ));
    assert!(matches!(build_lattice(&Chart::unit_square(), &hex(), 0.0), Err(MeshError::BadEpsilon(_))));
}

#[test]
fn triangles_do_not_overlap() {
    let tri = build_lattice(&Chart::unit_square(), &hex(), 0.1).unwrap();
    let eps = tri.epsilon;
    let expected = tri.triangles.len() as f64 * 0.5 * eps * eps * hex().wedge();
    assert!((tri.chart_area() - expected).abs() < 1e-12);
    // no sample point lies strictly inside two triangles
    let mut state = 12345u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..2000 {
        let x = Vec2::new(next(), next());
        let n = (0..tri.triangles.len())
            .filter(|&t| barycentric(&tri.tri_points(t), &x).iter().all(|&l| l > 1e-9))
            .count();
        assert!(n <= 1);
    }
}

#[test]
fn adjacent_plus_and_minus_triangles_share_their_a_edge() {
    let tri = build_lattice(&Chart::unit_square(), &hex(), 0.1).unwrap();
    let mut checked = 0;
    for (e, ts) in tri.edge_tris.iter().enumerate() {
        if tri.edges[e].axis != Axis::A || ts.len() != 2 {
            continue;
        }
        let (t0, t1) = (tri.triangles[ts[0]], tri.triangles[ts[1]]);
        assert_ne!(t0.orient, t1.orient);
        let (plus, minus) = if t0.orient == Orientation::Plus { (t0, t1) } else { (t1, t0) };
        // T(p, q, r) and T(q, p, s)
        assert_eq!((plus.v[0], plus.v[1]), (minus.v[1], minus.v[0]));
        let (p, q) = (tri.vertices[plus.v[0]], tri.vertices[plus.v[1]]);
        let (r, s) = (tri.vertices[plus.v[2]], tri.vertices[minus.v[2]]);
        assert!(wedge(&(q - p), &(r - p)) * wedge(&(q - p), &(s - p)) < 0.0);
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn vertices_are_c_epsilon_dense() {
    let g = conformal();
    for eps in [0.2, 0.1, 0.05] {
        let tri = build_lattice(g.chart(), &hex(), eps).unwrap();
        // C = 2 max |u|_g over the domain; the metric grows towards (1, 1)
        let cmax = g.axis_norms(&Vec2::new(1.0, 1.0)).unwrap().into_iter().fold(0.0, f64::max);
        let bound = 2.0 * cmax * eps;
        for i in 0..=40 {
            for j in 0..=40 {
                let x = Vec2::new(i as f64 / 40.0, j as f64 / 40.0);
                let nearest = tri
                    .vertices
                    .iter()
                    .min_by(|a, b| (*a - x).norm().total_cmp(&(*b - x).norm()))
                    .unwrap();
                // segment length bounds the distance from above
                let d = segment_length(&g, &x, &(nearest - x), 8).unwrap();
                assert!(d <= bound, "eps {eps}: point {x:?} at {d} > {bound}");
            }
        }
    }
}

#[test]
fn json_round_trip() {
    let tri = build_lattice(&Chart::unit_square(), &hex(), 0.2).unwrap();
    let text = serde_json::to_string(&tri).unwrap();
    let back: Triangulation = serde_json::from_str(&text).unwrap();
    assert_eq!(back.vertices, tri.vertices);
    assert_eq!(back.edges, tri.edges);
    assert_eq!(back.triangles, tri.triangles);
    assert_eq!(back.boundary, tri.boundary);
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["edges"][0][2], "a");
    assert!(v["triangles"][0][3] == "+" || v["triangles"][0][3] == "-");

    let mut doc: serde_json::Value = v.clone();
    doc["edges"].as_array_mut().unwrap().pop();
    assert!(serde_json::from_value::<Triangulation>(doc).is_err());
}

#[test]
fn locate_finds_containing_triangle() {
    let tri = build_lattice(&Chart::unit_square(), &hex(), 0.1).unwrap();
    let mut scan = tri.clone();
    scan.lattice = None;
    for t in (0..tri.triangles.len()).step_by(7) {
        let [p, q, r] = tri.tri_points(t);
        let x = p * 0.2 + q * 0.5 + r * 0.3;
        let (found, l) = tri.locate(&x).unwrap();
        assert_eq!(found, t);
        assert!((l[0] - 0.2).abs() < 1e-9 && (l[1] - 0.5).abs() < 1e-9);
        assert_eq!(scan.locate(&x).unwrap().0, t);
    }
    assert!(tri.locate(&Vec2::new(5.0, 5.0)).is_none());
}

#[test]
fn triangle_area_examples() {
    let chart = Chart::new(-2.0, 2.0, -2.0, 2.0).unwrap();
    let rule = TriangleRule::degree6();
    let e = MetricField::euclidean(chart, hex());
    let v = equilateral(1.0);
    assert!((triangle_area(&e, &v, &rule).unwrap() - 3f64.sqrt() / 4.0).abs() < 1e-12);
    let c = MetricField::constant(chart, hex(), Mat2::identity() * 4.0).unwrap();
    assert!((triangle_area(&c, &v, &rule).unwrap() - 3f64.sqrt()).abs() < 1e-12);

    // oracle: centroid rule on 4^k congruent pieces with Richardson extrapolation
    let g = MetricField::conformal(chart, hex(), parse_field("exp((x^2+y^2)/2)").unwrap());
    let v = [Vec2::new(0.1, 0.2), Vec2::new(0.35, 0.2), Vec2::new(0.225, 0.4165)];
    fn refine(g: &MetricField, v: [Vec2; 3], depth: u32) -> f64 {
        if depth == 0 {
            let c = (v[0] + v[1] + v[2]) / 3.0;
            let area = 0.5 * wedge(&(v[1] - v[0]), &(v[2] - v[0])).abs();
            return area * g.sqrt_det(&c).unwrap();
        }
        let (m01, m12, m20) = ((v[0] + v[1]) / 2.0, (v[1] + v[2]) / 2.0, (v[2] + v[0]) / 2.0);
        [[v[0], m01, m20], [m01, v[1], m12], [m20, m12, v[2]], [m01, m12, m20]]
            .into_iter()
            .map(|t| refine(g, t, depth - 1))
            .sum()
    }
    let (a5, a6) = (refine(&g, v, 5), refine(&g, v, 6));
    let oracle = (4.0 * a6 - a5) / 3.0;
    let got = triangle_area(&g, &v, &rule).unwrap();
    assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
}

#[test]
fn equilateral_fractions_are_one_third() {
    let e = MetricField::euclidean(Chart::new(-2.0, 2.0, -2.0, 2.0).unwrap(), hex());
    let v = equilateral(0.5);
    for r in closest_edge_fractions(&e, &v, RhoMethod::Incenter).unwrap() {
        assert!((r - 1.0 / 3.0).abs() < 1e-12);
    }
    for r in closest_edge_fractions(&e, &v, RhoMethod::Sampled { n: 2048 }).unwrap() {
        assert!((r - 1.0 / 3.0).abs() < 5e-3, "{r}");
    }
}

#[test]
fn anisotropic_constant_metric_fractions() {
    // oracle: in a constant metric the region closest to a side is the triangle
    // (incenter, side), so its fraction is the side length over the perimeter
    let g = Mat2::new(3.0, 0.8, 0.8, 1.0);
    let m = MetricField::constant(Chart::new(-2.0, 2.0, -2.0, 2.0).unwrap(), hex(), g).unwrap();
    let v = equilateral(0.5);
    let len = |u: Vec2| u.dot(&(g * u)).sqrt();
    let sides = [len(v[1] - v[0]), len(v[2] - v[1]), len(v[0] - v[2])];
    let per: f64 = sides.iter().sum();
    let exact = closest_edge_fractions(&m, &v, RhoMethod::Incenter).unwrap();
    let sampled = closest_edge_fractions(&m, &v, RhoMethod::Sampled { n: 2048 }).unwrap();
    for k in 0..3 {
        assert!((exact[k] - sides[k] / per).abs() < 1e-12);
        assert!((sampled[k] - sides[k] / per).abs() < 5e-3, "{k}: {} vs {}", sampled[k], sides[k] / per);
    }
}

#[test]
fn fractions_converge_to_limit_density() {
    let g = conformal();
    let f = hex();
    let mut errs = Vec::new();
    let epss = [0.2, 0.1, 0.05, 0.025];
    for eps in epss {
        let tri = build_lattice(g.chart(), &f, eps).unwrap();
        let mut worst: f64 = 0.0;
        for t in 0..tri.triangles.len() {
            let v = tri.tri_points(t);
            let rho = closest_edge_fractions(&g, &v, RhoMethod::Incenter).unwrap();
            let n = g.axis_norms(&tri.centroid(t)).unwrap();
            let s: f64 = n.iter().sum();
            for k in 0..3 {
                worst = worst.max((rho[k] - n[k] / s).abs());
            }
        }
        errs.push(worst.max(1e-300));
    }
    // the frozen metric makes the exact limit reachable up to the density variation
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
    assert!(errs[3] < 1e-2);
}

#[test]
fn edge_weight_examples() {
    let e = MetricField::euclidean(Chart::unit_square(), hex());
    let tri = build_lattice(e.chart(), &hex(), 0.1).unwrap();
    let m = compute_measures(&tri, &e, &MeasureOptions::default()).unwrap();
    let eps = tri.epsilon;
    let interior = 2.0 * (1.0 / 3.0) * (3f64.sqrt() / 4.0) * eps * eps;
    for (k, ts) in tri.edge_tris.iter().enumerate() {
        let want = if ts.len() == 2 { interior } else { interior / 2.0 };
        assert!((m.mu_edge[k] - want).abs() < 1e-14, "edge {k}");
    }
    for t in 0..tri.triangles.len() {
        let s: f64 = m.rho[t].iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    // a lone triangle: its three edge weights add up to its area
    let v = equilateral(0.3);
    let lone = Triangulation::assemble(0.3, v.to_vec(), vec![Triangle { v: [0, 1, 2], orient: Orientation::Plus }]).unwrap();
    let lm = compute_measures(&lone, &conformal(), &MeasureOptions::default()).unwrap();
    let s: f64 = lm.mu_edge.iter().sum();
    assert!((s - lm.mu[0]).abs() < 1e-15);
}

#[test]
fn edge_regions_partition_the_triangles() {
    let g = conformal();
    let tri = build_lattice(g.chart(), &hex(), 0.1).unwrap();
    let m = compute_measures(&tri, &g, &MeasureOptions::default()).unwrap();
    let edges: f64 = m.mu_edge.iter().sum();
    let tris: f64 = m.mu.iter().sum();
    assert!((edges - tris).abs() < 1e-12 * tris);
    assert!(m.mu_edge.iter().chain(&m.mu).chain(&m.nu).all(|v| *v > 0.0));
    assert_eq!(m.distance_warnings, 0);
}

#[test]
fn rescaled_distance_examples() {
    let chart = Chart::new(-2.0, 2.0, -2.0, 2.0).unwrap();
    let e = MetricField::euclidean(chart, hex());
    let d = rescaled_distances(&e, &equilateral(0.1), 0.1, &DistanceOptions::default()).unwrap();
    for v in d {
        assert!((v - 1.0).abs() < 1e-12);
    }
    let g = Mat2::new(2.0, 0.5, 0.5, 1.0);
    let c = MetricField::constant(chart, hex(), g).unwrap();
    let norm_a = hex().a().dot(&(g * hex().a())).sqrt();
    for eps in [0.2, 0.05] {
        let d = rescaled_distances(&c, &equilateral(eps), eps, &DistanceOptions::default()).unwrap();
        assert!((d[0] - norm_a).abs() < 1e-12);
    }
}

#[test]
fn rescaled_distances_converge_linearly() {
    let g = conformal();
    let epss = [0.2, 0.1, 0.05];
    let mut errs = Vec::new();
    for eps in epss {
        let tri = build_lattice(g.chart(), &hex(), eps).unwrap();
        let m = compute_measures(&tri, &g, &MeasureOptions::default()).unwrap();
        let mut worst: f64 = 0.0;
        // a fixed window, so that the maximum is taken over the same region at every ε
        let window = |c: Vec2| (0.25..=0.75).contains(&c.x) && (0.25..=0.75).contains(&c.y);
        for t in (0..tri.triangles.len()).filter(|&t| window(tri.centroid(t))) {
            let n = g.axis_norms(&tri.centroid(t)).unwrap();
            for k in 0..3 {
                worst = worst.max((m.d[t][k] - n[k]).abs());
            }
        }
        errs.push(worst);
    }
    let s = slope(&epss, &errs);
    assert!(s >= 0.9, "slope {s}, errors {errs:?}");
}

#[test]
fn coverage_defect_is_order_epsilon() {
    let g = conformal();
    let mut ratios = Vec::new();
    for eps in [0.2, 0.1, 0.05, 0.025] {
        let tri = build_lattice(g.chart(), &hex(), eps).unwrap();
        let rule = TriangleRule::degree6();
        let mu: Vec<f64> = (0..tri.triangles.len()).map(|t| triangle_area(&g, &tri.tri_points(t), &rule).unwrap()).collect();
        let d = coverage_defect(&tri, &g, &mu).unwrap();
        assert!(d >= -1e-9);
        ratios.push(d / eps);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    assert!(hi / lo <= 3.0, "{ratios:?}");
}

#[test]
fn aligned_domain_is_fully_tiled() {
    let square = LatticeFrame::new(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)).unwrap();
    let g = MetricField::conformal(Chart::unit_square(), square, parse_field("exp((x^2+y^2)/2)").unwrap());
    let opts = LatticeOptions { origin: Some(Vec2::zeros()) };
    let tri = build_lattice_with(g.chart(), &square, 0.1, &opts).unwrap();
    assert_eq!(tri.triangles.len(), 200);
    let rule = TriangleRule::degree6();
    let mu: Vec<f64> = (0..tri.triangles.len()).map(|t| triangle_area(&g, &tri.tri_points(t), &rule).unwrap()).collect();
    let d = coverage_defect(&tri, &g, &mu).unwrap();
    assert!(d.abs() < 1e-10, "{d}");
}
