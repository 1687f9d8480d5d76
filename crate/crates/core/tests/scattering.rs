//! Amplitudes and cross sections against frozen reference values and
//! independent angular quadrature.

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qlbe::scattering::{
    amplitude, build_model, builtin_models, differential_cross_section, legendre, sigma_by_quadrature, spherical_j,
    spherical_y, total_cross_section, BornFormFactor, ConstantLength, HardSphere, ModelSpec, ScatteringModel,
    ShellPoint,
};
use qlbe::quadrature::GaussLegendre;
use qlbe::{Error, Momentum};
use serde_json::json;

// Reference values of j_l and y_l, l = 0..5, from an independent library.
const BESSEL: [(f64, [f64; 6], [f64; 6]); 4] = [
    (
        0.1,
        [0.9983341664682815, 0.033300011902557616, 0.0006661906084455694, 9.518519720865581e-06, 1.0577201502098764e-07, 9.61631023291645e-10],
        [-9.950041652780257, -100.49875069427084, -3005.0124791753447, -150150.12520807295, -10507503.752085932, -945525187.5625257],
    ),
    (
        1.0,
        [0.8414709848078965, 0.3011686789397571, 0.062035052011373916, 0.009006581117112524, 0.0010110158084137538, 9.256115861125825e-05],
        [-0.5403023058681398, -1.3817732906760363, -3.6050175661599693, -16.64331454012381, -112.8981842147067, -999.4403433922365],
    ),
    (
        2.5,
        [0.23938885764158263, 0.41621298927540656, 0.26006672948890525, 0.10392046970240404, 0.030910585677825824, 0.00735763873776894],
        [0.3204574462187735, -0.11120587915407323, -0.4539045012036614, -0.7966031232532497, -1.7765842439054378, -5.599100154806327],
    ),
    (
        10.0,
        [-0.05440211108893698, 0.07846694179875155, 0.07794219362856245, -0.03949584498447033, -0.10558928511769167, -0.05553451162145216],
        [0.08390715290764525, 0.0627928263797015, -0.0650693049937348, -0.0953274788765689, -0.001659930219863423, 0.09383354167869182],
    ),
];

#[test]
fn spherical_bessel_reference_values() {
    for (x, j_ref, y_ref) in BESSEL {
        let j = spherical_j(5, x);
        let y = spherical_y(5, x);
        for l in 0..6 {
            assert!((j[l] - j_ref[l]).abs() <= 1e-12 * j_ref[l].abs().max(1e-3), "j_{l}({x}) = {} vs {}", j[l], j_ref[l]);
            assert!((y[l] - y_ref[l]).abs() <= 1e-12 * y_ref[l].abs().max(1e-3), "y_{l}({x}) = {} vs {}", y[l], y_ref[l]);
        }
    }
}

#[test]
fn spherical_bessel_wronskian() {
    // j_{l+1} y_l - j_l y_{l+1} = 1/x².
    for x in [0.3, 1.7, 6.0, 25.0] {
        let j = spherical_j(30, x);
        let y = spherical_y(30, x);
        for l in 0..30 {
            let w = j[l + 1] * y[l] - j[l] * y[l + 1];
            assert!((w * x * x - 1.0).abs() < 1e-10, "l = {l}, x = {x}: {}", w * x * x);
        }
    }
}

#[test]
fn legendre_values() {
    let p = legendre(4, 0.5);
    let exact = [1.0, 0.5, -0.125, -0.4375, -0.2890625];
    for l in 0..5 {
        assert!((p[l] - exact[l]).abs() < 1e-15);
    }
    let p = legendre(10, -1.0);
    for (l, v) in p.iter().enumerate() {
        assert_eq!(*v, if l % 2 == 0 { 1.0 } else { -1.0 });
    }
}

// Hard sphere R = 1 from an independent partial-wave sum with 30+ waves:
// (k, σ, f(θ = 0), f(θ = π)).
const HARD_SPHERE: [(f64, f64, (f64, f64), (f64, f64)); 4] = [
    (0.01, 12.565951782806579, (-1.0000333297781716, 0.00999966670444041), (-0.9998333417773054, 0.009999666637781741)),
    (1.0, 10.626241899593982, (-1.1687530668115684, 0.845609462405297), (0.08726562148108225, 0.5734976430299945)),
    (2.0, 9.421911145355002, (-1.3313709618351006, 1.4995437321558698), (0.4215600041719185, -0.3320347629720649)),
    (10.0, 7.531115629402207, (-2.0023467617081177, 5.993071397079959), (-0.22734222370073875, 0.4485241710044588)),
];

#[test]
fn hard_sphere_reference_values() {
    let hs = HardSphere::new(1.0, None).unwrap();
    for (k, sigma, f0, fpi) in HARD_SPHERE {
        let s = hs.sigma(k).unwrap();
        assert!((s.value - sigma).abs() < 1e-6 * sigma, "σ({k}) = {} vs {sigma}", s.value);
        let a = hs.amplitude_at(&ShellPoint::from_angle(k, 1.0));
        let b = hs.amplitude_at(&ShellPoint::from_angle(k, -1.0));
        assert!((a - Complex64::new(f0.0, f0.1)).norm() < 1e-6 * a.norm(), "f(0) at k = {k}: {a}");
        assert!((b - Complex64::new(fpi.0, fpi.1)).norm() < 1e-6 * a.norm(), "f(π) at k = {k}: {b}");
    }
}

#[test]
fn hard_sphere_limits() {
    let r = 0.7;
    let hs = HardSphere::new(r, None).unwrap();
    // Low energy: isotropic with σ → 4πR².
    let s = hs.sigma(1e-4 / r).unwrap().value;
    assert!((s / (4.0 * PI * r * r) - 1.0).abs() < 1e-6);
    assert!((hs.amplitude_at(&ShellPoint::from_angle(1e-14, 0.3)) - Complex64::new(-r, 0.0)).norm() < 1e-15);
    // High energy: σ → 2πR² from above, with a k^{-2/3} correction.
    let s = hs.sigma(200.0 / r).unwrap().value;
    let ratio = s / (2.0 * PI * r * r);
    assert!(ratio > 1.0 && ratio < 1.1, "{ratio}");
    // Phase shift of the s-wave is -kR.
    let d = hs.phase_shifts(0.9 / r);
    assert!((d[0] + 0.9).abs() < 1e-13);
}

#[test]
fn hard_sphere_optical_theorem() {
    let hs = HardSphere::new(0.5, None).unwrap();
    for k in [0.02, 0.4, 1.0, 2.0, 6.0, 20.0, 60.0] {
        let s = hs.sigma(k).unwrap().value;
        let im0 = hs.amplitude_at(&ShellPoint::from_angle(k, 1.0)).im;
        assert!((4.0 * PI / k * im0 - s).abs() < 1e-12 * s, "k = {k}");
    }
}

#[test]
fn hard_sphere_rejects_bad_inputs() {
    assert!(HardSphere::new(0.0, None).is_err());
    assert!(HardSphere::new(-1.0, None).is_err());
    let hs = HardSphere::new(1.0, None).unwrap();
    assert!(hs.sigma(0.0).is_err());
    // Too few waves at large kR trip the truncation check.
    let short = HardSphere::new(1.0, Some(2)).unwrap();
    assert!(matches!(short.sigma(10.0), Err(Error::Truncation { .. })));
}

/// σ = 2π/k² ∫ |f|² Q dQ over Q ∈ [0, 2k], split at `kinks`, evaluated
/// through the angular amplitude interface.
fn sigma_piecewise(m: &dyn ScatteringModel, k: f64, kinks: &[f64]) -> f64 {
    let gl = GaussLegendre::new(16);
    let mut cuts = vec![0.0];
    cuts.extend(kinks.iter().copied().filter(|&q| q < 2.0 * k));
    cuts.push(2.0 * k);
    let mut s = 0.0;
    for w in cuts.windows(2) {
        s += gl.integrate(w[0], w[1], |q| {
            let c = 1.0 - q * q / (2.0 * k * k);
            q * m.amplitude_at(&ShellPoint::from_angle(k, c)).norm_sqr()
        });
    }
    2.0 * PI * s / (k * k)
}

#[test]
fn sigma_two_routes_agree() {
    let models: Vec<Box<dyn ScatteringModel>> = vec![
        Box::new(ConstantLength::new(0.25).unwrap()),
        Box::new(HardSphere::new(1.0, None).unwrap()),
        Box::new(BornFormFactor::gaussian(0.4, 0.6).unwrap()),
        Box::new(
            BornFormFactor::tabulated(
                vec![0.0, 0.5, 1.5, 3.0],
                vec![Complex64::new(-0.3, 0.1), Complex64::new(-0.2, 0.0), Complex64::new(0.05, -0.02), Complex64::new(0.0, 0.0)],
            )
            .unwrap(),
        ),
    ];
    for m in &models {
        for k in [0.1, 0.8, 2.0, 5.0] {
            let closed = m.sigma(k).unwrap().value;
            // The interpolated table has kinks in Q, so its angular rule
            // is split at the table nodes.
            let quad = if m.name() == "born_tabulated" {
                sigma_piecewise(m.as_ref(), k, &[0.5, 1.5, 3.0])
            } else {
                sigma_by_quadrature(m.as_ref(), k, 200)
            };
            assert!((closed - quad).abs() <= 1e-10 * closed.max(1e-300), "{} at k = {k}: {closed} vs {quad}", m.name());
            assert!(closed <= m.sigma_bound() * (1.0 + 1e-12), "{} exceeds its bound at k = {k}", m.name());
        }
    }
}

#[test]
fn born_gaussian_closed_form() {
    let (a, w) = (0.4, 0.6);
    let b = BornFormFactor::gaussian(a, w).unwrap();
    for k in [0.05, 1.0, 3.0] {
        let x = 4.0 * k * k * w * w;
        let exact = 2.0 * PI * a * a * (1.0 - (-2.0 * x).exp()) / x;
        assert!((b.sigma(k).unwrap().value - exact).abs() < 1e-13 * exact);
    }
    assert_eq!(b.at_transfer(0.0), Complex64::new(-a, 0.0));
    assert!((b.at_transfer(1.0).re + a * (-w * w).exp()).abs() < 1e-16);
    assert!(b.transfer_only());
}

#[test]
fn born_tabulated_interpolation() {
    let b = BornFormFactor::tabulated(vec![0.5, 1.0, 2.0], vec![Complex64::new(-1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0)])
        .unwrap();
    assert_eq!(b.at_transfer(0.1), Complex64::new(-1.0, 0.0));
    assert_eq!(b.at_transfer(0.75), Complex64::new(-0.5, 0.5));
    assert_eq!(b.at_transfer(1.5), Complex64::new(0.5, 0.5));
    assert_eq!(b.at_transfer(2.5), Complex64::new(0.0, 0.0));
    assert!(BornFormFactor::tabulated(vec![1.0, 0.5], vec![Complex64::new(0.0, 0.0); 2]).is_err());
    assert!(BornFormFactor::tabulated(vec![1.0], vec![Complex64::new(0.0, 0.0)]).is_err());
}

#[test]
fn constant_length_values() {
    let c = ConstantLength::new(0.25).unwrap();
    let p_in = Momentum::new(0.0, 0.0, 2.0);
    let p_out = Momentum::new(2.0, 0.0, 0.0);
    assert_eq!(amplitude(&c, p_out, p_in).unwrap(), Complex64::new(-0.25, 0.0));
    assert_eq!(differential_cross_section(&c, p_out, p_in).unwrap(), 0.0625);
    assert!((total_cross_section(&c, p_in).unwrap().value - PI / 4.0).abs() < 1e-15);
    assert!(ConstantLength::new(0.0).is_ok());
    assert!(ConstantLength::new(-0.1).is_err());
}

#[test]
fn off_shell_pair_is_rejected() {
    let c = ConstantLength::new(0.25).unwrap();
    let r = amplitude(&c, Momentum::new(1.0, 0.0, 0.0), Momentum::new(0.0, 1.1, 0.0));
    assert!(matches!(r, Err(Error::OffShell { .. })));
}

#[test]
fn registry_builds_models_by_name() {
    let r = builtin_models();
    assert_eq!(r.names(), vec!["born_gaussian", "born_tabulated", "constant_length", "hard_sphere"]);
    let m = build_model(&ModelSpec::new("hard_sphere", json!({ "radius": 0.5 }))).unwrap();
    assert_eq!(m.name(), "hard_sphere");
    let m = build_model(&ModelSpec::new("born_tabulated", json!({ "q": [0.0, 1.0], "re": [-0.2, 0.0] }))).unwrap();
    assert_eq!(m.name(), "born_tabulated");
    assert!(matches!(build_model(&ModelSpec::new("square_well", json!({}))), Err(Error::Unknown { .. })));
    assert!(matches!(
        build_model(&ModelSpec::new("constant_length", json!({ "radius": 1.0 }))),
        Err(Error::InvalidParameter(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hard_sphere_rotation_invariant(
        k in 0.05f64..8.0,
        a in prop::array::uniform3(-1.0f64..1.0),
        b in prop::array::uniform3(-1.0f64..1.0),
    ) {
        // f depends on the pair only through k and the angle between them.
        let (a, b) = (Momentum(a), Momentum(b));
        prop_assume!(a.norm() > 0.1 && b.norm() > 0.1);
        let hs = HardSphere::new(1.0, None).unwrap();
        let p_in = a / a.norm() * k;
        let p_out = b / b.norm() * k;
        let f = amplitude(&hs, p_out, p_in).unwrap();
        let g = amplitude(&hs, p_in, p_out).unwrap();
        let direct = hs.amplitude_at(&ShellPoint::from_angle(k, p_in.dot(&p_out) / (k * k)));
        prop_assert!((f - g).norm() <= 1e-12 * f.norm().max(1e-12));
        prop_assert!((f - direct).norm() <= 1e-9 * f.norm().max(1e-12));
        prop_assert!(f.norm() <= hs.amplitude_bound(k) * (1.0 + 1e-12));
    }

    #[test]
    fn hard_sphere_unitarity_bound(k in 0.01f64..30.0) {
        // σ ≤ 4π/k² Σ (2l+1) and Im f(0) ≥ 0.
        let hs = HardSphere::new(1.0, None).unwrap();
        let s = hs.sigma(k).unwrap().value;
        let l = hs.l_max_at(k) as f64;
        prop_assert!(s <= 4.0 * PI / (k * k) * (l + 1.0).powi(2));
        prop_assert!(hs.amplitude_at(&ShellPoint::from_angle(k, 1.0)).im >= 0.0);
        prop_assert!(s <= hs.sigma_bound());
    }
}
