use finsler::curvature::{s_curvature, SRoute};
use finsler::spray::geodesic_integrate;
use finsler::{parse_metric, Domain, Error, Family, MetricSpec, PointDir, Tower, VolumeDensity, DEFAULT_ORDER};
use proptest::prelude::*;

/// `|y| + (b1 + c x2) y1 + b2 y2` on the unit box; strongly convex while
/// `|b1| + |c| + |b2| < 1`.
fn randers(b1: f64, c: f64, b2: f64) -> MetricSpec {
    let one = parse_metric("1").unwrap();
    let zero = parse_metric("0").unwrap();
    MetricSpec::new(
        "randers",
        2,
        Family::Randers {
            a: vec![vec![one.clone(), zero.clone()], vec![zero, one]],
            b: vec![
                parse_metric(&format!("{b1} + {c}*x2")).unwrap(),
                parse_metric(&format!("{b2}")).unwrap(),
            ],
        },
        Domain::Box {
            lo: vec![-1.0; 2],
            hi: vec![1.0; 2],
        },
    )
    .unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn randers_homogeneity(
        b1 in -0.3f64..0.3, c in -0.3f64..0.3, b2 in -0.3f64..0.3,
        x in prop::array::uniform2(-0.9f64..0.9),
        y in prop::array::uniform2(-1.0f64..1.0),
        lambda in 0.5f64..2.0,
    ) {
        prop_assume!(y[0].hypot(y[1]) > 0.2);
        let m = randers(b1, c, b2);
        let vol = VolumeDensity::default().with_quadrature(64);
        let t = Tower::new(&m, &vol, &x, &y, DEFAULT_ORDER).unwrap();
        let fd = t.fundamentals().unwrap();

        let ly: Vec<f64> = y.iter().map(|v| v * lambda).collect();
        let f_scaled = m.eval_f(&x, &ly).unwrap();
        prop_assert!(rel(f_scaled, lambda * fd.f) < 1e-13);

        let gy: Vec<f64> = fd.g.iter().map(|row| dot(row, &y)).collect();
        prop_assert!(rel(dot(&gy, &y), fd.f * fd.f) < 1e-12);

        for row in &fd.a {
            for col in row {
                prop_assert!(dot(col, &y).abs() < 1e-12);
            }
        }

        let p = PointDir::new(x.to_vec(), y.to_vec()).unwrap();
        let pl = PointDir::new(x.to_vec(), ly).unwrap();
        let s = s_curvature(&m, &vol, &p, SRoute::Distortion).unwrap();
        let sl = s_curvature(&m, &vol, &pl, SRoute::Distortion).unwrap();
        prop_assert!(rel(sl, lambda * s) < 1e-10);
    }

    #[test]
    fn s_routes_agree(
        b1 in -0.3f64..0.3, c in -0.3f64..0.3,
        x in prop::array::uniform2(-0.9f64..0.9),
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let m = randers(b1, c, 0.1);
        let vol = VolumeDensity::default().with_quadrature(64);
        let p = PointDir::new(x.to_vec(), vec![theta.cos(), theta.sin()]).unwrap();
        let a = s_curvature(&m, &vol, &p, SRoute::Distortion).unwrap();
        let b = s_curvature(&m, &vol, &p, SRoute::Divergence).unwrap();
        prop_assert!(rel(a, b) < 1e-9);
    }
}

#[test]
fn randers_condition_is_enforced() {
    let m = randers(0.8, 0.5, 0.0);
    assert!(m.check_point(&[0.0, 0.0]).is_ok());
    assert!(matches!(m.check_point(&[0.0, 0.9]), Err(Error::InvalidMetric(_))));
}

#[test]
fn non_convex_norm_is_rejected() {
    // F is positive but its unit ball is not convex around y = (1, 0.4).
    let m = MetricSpec::from_expression("bad", 2, "(y1^4 + y2^4 - 1.5*y1^2*y2^2)^0.25").unwrap();
    let vol = VolumeDensity::default();
    let t = Tower::new(&m, &vol, &[0.0, 0.0], &[1.0, 0.4], DEFAULT_ORDER);
    let err = t.and_then(|t| t.fundamentals()).unwrap_err();
    assert!(
        matches!(err, Error::NotPositiveDefinite(_) | Error::NonPositiveF(_)),
        "{err}"
    );
}

#[test]
fn zero_direction_is_rejected() {
    assert!(matches!(PointDir::new(vec![0.0, 0.0], vec![0.0, 0.0]), Err(Error::ZeroDirection)));
}

#[test]
fn geodesics_conserve_f() {
    for name in ["sphere", "funk2", "randers-generic"] {
        let m = MetricSpec::builtin(name).unwrap();
        let tr = geodesic_integrate(&m, &[0.05, -0.05], &[0.6, 0.3], 100, 0.002).unwrap();
        assert!(tr.stopped.is_none(), "{name}: {:?}", tr.stopped);
        assert!(tr.f_drift() < 1e-9, "{name}: drift {}", tr.f_drift());
    }
}

#[test]
fn geodesic_stops_at_the_domain_boundary() {
    let m = MetricSpec::builtin("funk2").unwrap();
    let tr = geodesic_integrate(&m, &[0.4, 0.0], &[1.0, 0.0], 1000, 0.01).unwrap();
    assert!(tr.stopped.as_deref().is_some_and(|s| s.contains("domain")));
}
