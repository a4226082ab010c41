//! Cross-module checks that are cheap enough for every test run.

use mkdvq::rh_core::builders::{solve_sigma_u, BuildOptions};
use mkdvq::spectral::{build_reflection, FnSpec, HalfLineData, KGrid};

#[test]
fn initial_datum_is_recovered_from_its_reflection_coefficient() {
    let u0 = |x: f64| 0.1 * (-(x - 4.0) * (x - 4.0)).exp();
    let data = HalfLineData::initial_only(FnSpec::Gaussian { amp: 0.1, center: 4.0, width: 1.0 }, 20.0).unwrap();
    let grid = KGrid::Chebyshev { n: 513, half_width: 8.0 };
    let refl = build_reflection(&data, &grid, 1e-11).unwrap();
    let opts = BuildOptions::default();
    for x in [1.0, 3.5, 4.0, 6.0] {
        let u = solve_sigma_u(&refl, x, 0.0, &opts).unwrap();
        assert!((u - u0(x)).abs() < 1e-6, "x {x}: {u} vs {}", u0(x));
    }
}
