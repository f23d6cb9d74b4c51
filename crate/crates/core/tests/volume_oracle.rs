//! Busemann-Hausdorff densities of `l^p` norms against closed forms.

use finsler::{MetricSpec, Tower, VolumeDensity, DEFAULT_ORDER};
use statrs::function::gamma::gamma;

/// Volume of the unit `l^p` ball in `R^n`.
fn lp_ball_volume(p: f64, n: usize) -> f64 {
    (2.0 * gamma(1.0 + 1.0 / p)).powi(n as i32) / gamma(1.0 + n as f64 / p)
}

fn euclidean_ball_volume(n: usize) -> f64 {
    lp_ball_volume(2.0, n)
}

fn bh_sigma(metric: &MetricSpec, vol: &VolumeDensity) -> f64 {
    let n = metric.dim;
    // l^p norms with p > 2 degenerate on the axes, so stay off them.
    let y: Vec<f64> = [1.0, 0.7, 0.4][..n].to_vec();
    let t = Tower::new(metric, vol, &vec![0.0; n], &y, DEFAULT_ORDER).unwrap();
    t.ln_sigma().unwrap().value().exp()
}

#[test]
fn quartic_plane_norm() {
    let m = MetricSpec::builtin("quartic-minkowski").unwrap();
    let exact = euclidean_ball_volume(2) / lp_ball_volume(4.0, 2);
    let got = bh_sigma(&m, &VolumeDensity::default());
    assert!((got - exact).abs() < 1e-12 * exact, "{got} vs {exact}");
}

#[test]
fn quartic_space_norm() {
    let m = MetricSpec::from_expression("quartic3", 3, "(y1^4 + y2^4 + y3^4)^0.25").unwrap();
    let exact = euclidean_ball_volume(3) / lp_ball_volume(4.0, 3);
    let got = bh_sigma(&m, &VolumeDensity::default());
    assert!((got - exact).abs() < 1e-6 * exact, "{got} vs {exact}");
}

#[test]
fn sixth_power_plane_norm_converges_with_quadrature() {
    let m = MetricSpec::from_expression("sextic", 2, "(y1^6 + y2^6)^(1/6)").unwrap();
    let exact = euclidean_ball_volume(2) / lp_ball_volume(6.0, 2);
    let coarse = (bh_sigma(&m, &VolumeDensity::default().with_quadrature(16)) - exact).abs();
    let fine = (bh_sigma(&m, &VolumeDensity::default().with_quadrature(128)) - exact).abs();
    assert!(fine < 1e-12 * exact, "fine error {fine}");
    assert!(fine <= coarse);
}

#[test]
fn euclidean_density_is_one() {
    for n in [2, 3] {
        let src = (1..=n).map(|i| format!("y{i}^2")).collect::<Vec<_>>().join(" + ");
        let m = MetricSpec::from_expression("flat", n, &format!("sqrt({src})")).unwrap();
        let got = bh_sigma(&m, &VolumeDensity::default());
        assert!((got - 1.0).abs() < 1e-12, "n = {n}: {got}");
    }
}
