use fracdiff::geometry::SigmaParams;
use fracdiff::grid::GridField;
use fracdiff::laplacian::{apply_quadrature, apply_spectral, calibrate, GridMeta, QuadratureScheme};
use std::f64::consts::PI;

const MATRIX: [(usize, f64); 6] = [(1, 0.5), (1, 1.0), (1, 1.5), (2, 0.5), (2, 1.0), (2, 1.5)];

fn rel_l2(a: &GridField, b: &GridField) -> f64 {
    a.lin_comb(1.0, b, -1.0).l2_norm() / b.l2_norm()
}

fn smooth_field(dim: usize, sigma: f64, n: usize) -> GridField {
    let p = SigmaParams::new(dim, sigma).unwrap();
    let l = 2.0 * PI;
    GridField::from_fn(p, l, n, |x| {
        x.iter().map(|v| (v.sin() + 0.5).exp()).product::<f64>() + (2.0 * x[0]).cos()
    })
    .unwrap()
}

#[test]
fn operators_agree_across_matrix() {
    for (dim, sigma) in MATRIX {
        let n = if dim == 1 { 256 } else { 128 };
        let f = smooth_field(dim, sigma, n);
        let s = calibrate(&QuadratureScheme::new(sigma).unwrap(), GridMeta::of(&f)).unwrap();
        let err = rel_l2(&apply_quadrature(&f, &s).unwrap(), &apply_spectral(&f, sigma).unwrap());
        println!("N={dim} σ={sigma}: rel L2 {err:e}, residuals {:?}", s.calibration.as_ref().unwrap().residuals);
        assert!(err < 1e-3, "N={dim} σ={sigma}: {err:e}");
    }
}

#[test]
fn gaussian_bump_half_order() {
    let p = SigmaParams::new(1, 0.5).unwrap();
    let l = 20.0;
    let f = GridField::from_fn(p, l, 512, |x| {
        (-3..=3).map(|q| (-(x[0] + q as f64 * l).powi(2)).exp()).sum()
    })
    .unwrap();
    let s = calibrate(&QuadratureScheme::new(0.5).unwrap(), GridMeta::of(&f)).unwrap();
    let err = rel_l2(&apply_quadrature(&f, &s).unwrap(), &apply_spectral(&f, 0.5).unwrap());
    println!("gaussian σ=0.5: {err:e}");
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn calibration_refinement() {
    let meta = |n| GridMeta { dim: 1, length: 2.0 * PI, n };
    let base = QuadratureScheme::new(1.0).unwrap();
    let coarse = calibrate(&base, meta(512)).unwrap();
    let fine = calibrate(&base, meta(1024)).unwrap();
    let rc = coarse.calibration.unwrap().residuals;
    let rf = fine.calibration.unwrap().residuals;
    println!("residuals {rc:?} -> {rf:?}");
    for k in 0..3 {
        assert!(rc[k] < 1e-3);
        assert!(rc[k] / rf[k] > 3.5, "mode {}: ratio {}", k + 2, rc[k] / rf[k]);
    }
}

fn dense(op: &dyn Fn(&GridField) -> GridField, proto: &GridField) -> Vec<Vec<f64>> {
    (0..proto.len())
        .map(|j| {
            let mut e = proto.zeros_like();
            e.values_mut()[j] = 1.0;
            op(&e).into_values()
        })
        .collect()
}

fn max_asymmetry(cols: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..cols.len() {
        for j in 0..i {
            worst = worst.max((cols[j][i] - cols[i][j]).abs());
        }
    }
    worst
}

#[test]
fn both_realizations_are_self_adjoint_1d() {
    let f = smooth_field(1, 0.8, 64);
    let s = calibrate(&QuadratureScheme::new(0.8).unwrap(), GridMeta::of(&f)).unwrap();
    let q = dense(&|g| apply_quadrature(g, &s).unwrap(), &f);
    let sp = dense(&|g| apply_spectral(g, 0.8).unwrap(), &f);
    assert!(max_asymmetry(&q) < 1e-10);
    assert!(max_asymmetry(&sp) < 1e-10);
}

#[test]
fn both_realizations_are_self_adjoint_2d() {
    // sampled entries of the 4096 x 4096 operator
    let f = smooth_field(2, 0.8, 64);
    let s = calibrate(&QuadratureScheme::new(0.8).unwrap(), GridMeta::of(&f)).unwrap();
    let unit = |j: usize| {
        let mut e = f.zeros_like();
        e.values_mut()[j] = 1.0;
        e
    };
    let pairs = [(0, 1), (5, 700), (63, 4095), (1000, 2047), (130, 3900), (2222, 17)];
    for (i, j) in pairs {
        let (ei, ej) = (unit(i), unit(j));
        let qi = apply_quadrature(&ei, &s).unwrap();
        let qj = apply_quadrature(&ej, &s).unwrap();
        assert!((qi.values()[j] - qj.values()[i]).abs() < 1e-10);
        let si = apply_spectral(&ei, 0.8).unwrap();
        let sj = apply_spectral(&ej, 0.8).unwrap();
        assert!((si.values()[j] - sj.values()[i]).abs() < 1e-10);
    }
}

#[test]
fn constants_are_annihilated_exactly() {
    let p = SigmaParams::new(1, 1.3).unwrap();
    let f = GridField::from_fn(p, 5.0, 128, |_| 7.25).unwrap();
    let s = calibrate(&QuadratureScheme::new(1.3).unwrap(), GridMeta::of(&f)).unwrap();
    assert!(apply_quadrature(&f, &s).unwrap().values().iter().all(|&v| v == 0.0));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn random_field(coeffs: &[f64], dim: usize) -> GridField {
        random_field_on(coeffs, dim, 32)
    }

    fn random_field_on(coeffs: &[f64], dim: usize, n: usize) -> GridField {
        let p = SigmaParams::new(dim, 1.0).unwrap();
        GridField::from_fn(p, 2.0 * PI, n, |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * ((k + 1) as f64 * x[0] + 0.3 * k as f64 * x[dim - 1]).sin())
                .sum()
        })
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn spectral_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64,
                              cf in prop::collection::vec(-1.0..1.0f64, 4),
                              cg in prop::collection::vec(-1.0..1.0f64, 4),
                              order in 0.05..2.0f64) {
            let f = random_field(&cf, 1);
            let g = random_field(&cg, 1);
            let lhs = apply_spectral(&f.lin_comb(a, &g, b), order).unwrap();
            let rhs = apply_spectral(&f, order).unwrap().lin_comb(a, &apply_spectral(&g, order).unwrap(), b);
            prop_assert!(lhs.lin_comb(1.0, &rhs, -1.0).sup_norm() < 1e-11 * (1.0 + rhs.sup_norm()));
        }

        #[test]
        fn quadratic_form_is_nonnegative(cf in prop::collection::vec(-1.0..1.0f64, 5),
                                         shift in -2.0..2.0f64, t in 0.0..1.0f64, two_d in any::<bool>()) {
            // (dim, n, δ range) pairs on which calibration is admissible
            let (dim, n, delta) = if two_d { (2, 64, 0.1 + 0.9 * t) } else { (1, 128, 0.1 + 1.4 * t) };
            let f = random_field_on(&cf, dim, n).map(|v| v + shift);
            let s = calibrate(&QuadratureScheme::new(delta).unwrap(), GridMeta::of(&f)).unwrap();
            let q = f.dot(&apply_quadrature(&f, &s).unwrap());
            let sp = f.dot(&apply_spectral(&f, delta).unwrap());
            let scale = f.l2_norm().powi(2);
            prop_assert!(q >= -1e-12 * scale && sp >= -1e-12 * scale);
            let nonconstant = f.lin_comb(1.0, &f.map(|_| f.mean()), -1.0).l2_norm() > 1e-8;
            if nonconstant {
                prop_assert!(q > 0.0 && sp > 0.0);
            }
        }

        #[test]
        fn spectral_composition(cf in prop::collection::vec(-1.0..1.0f64, 4), order in 0.05..1.0f64) {
            let f = random_field(&cf, 1);
            let twice = apply_spectral(&apply_spectral(&f, order).unwrap(), order).unwrap();
            let once = apply_spectral(&f, 2.0 * order).unwrap();
            prop_assert!(twice.lin_comb(1.0, &once, -1.0).sup_norm() < 1e-11 * (1.0 + once.sup_norm()));
        }
    }
}
