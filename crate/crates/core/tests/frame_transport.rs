//! The transported S identity on a non-Berwald Randers metric, and the sign
//! under which it holds.

use finsler::curvature::frame_identity_terms;
use finsler::sampling::Sampler;
use finsler::{MetricSpec, PointDir, VolumeDensity};

fn residuals(sign: f64) -> f64 {
    let m = MetricSpec::builtin("randers-generic").unwrap();
    let vol = VolumeDensity::default();
    let mut s = Sampler::new(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let p = PointDir::new(s.point(&m), s.direction(2)).unwrap();
        let t = frame_identity_terms(&m, &vol, &p).unwrap();
        let r = t.s_bar[0] + sign * t.s_comma_bar_n[0] - t.j_bar_n[0] - t.tr_r[0];
        worst = worst.max(r.abs());
    }
    worst
}

#[test]
fn transport_identity_holds_with_plus_sign() {
    let r = residuals(1.0);
    assert!(r < 1e-9, "residual {r}");
}

#[test]
fn transport_identity_fails_with_minus_sign() {
    // S_{|α} − S_{,α|n} = J_{α|n} + (tr R)_{αn} is off by 2 S_{,α|n}, which is
    // far from zero on this metric.
    let r = residuals(-1.0);
    assert!(r > 1e-2, "residual {r}");
}

#[test]
fn chern_and_berwald_transports_agree() {
    let m = MetricSpec::builtin("randers-generic").unwrap();
    let vol = VolumeDensity::default();
    let p = PointDir::<f64>::new(vec![0.2, -0.4], vec![0.3, 1.1]).unwrap();
    let t = frame_identity_terms(&m, &vol, &p).unwrap();
    assert!((t.s_comma_bar_n[0] - t.s_comma_bar_n_berwald[0]).abs() < 1e-10);
}
