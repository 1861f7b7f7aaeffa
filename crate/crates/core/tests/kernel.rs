use fracdiff::geometry::SigmaParams;
use fracdiff::kernel::{
    build_phi_profile, build_psi_profile, cancellation_integral, invert_radial_symbol,
    verify_decay_bounds, DecaySampleSet, Half, KernelProfile, ProfileGrid,
};

const MATRIX: [(usize, f64); 6] = [(1, 0.5), (1, 1.0), (1, 1.5), (2, 0.5), (2, 1.0), (2, 1.5)];

fn profiles(n: usize, s: f64) -> (KernelProfile, KernelProfile) {
    let p = SigmaParams::new(n, s).unwrap();
    let phi = build_phi_profile(&p, ProfileGrid::for_params(&p)).unwrap();
    let psi = build_psi_profile(&phi).unwrap();
    (phi, psi)
}

#[test]
fn profiles_have_unit_mass_and_stated_tail() {
    for (n, s) in MATRIX {
        let (phi, psi) = profiles(n, s);
        let mass = phi.total_mass();
        assert!((mass - 1.0).abs() < 1e-8, "N={n} σ={s}: mass {mass}");
        let smax = phi.s_max();
        for frac in [0.5, 0.7, 1.0] {
            let x = frac * smax;
            let ratio = phi.eval(x) * x.powf(n as f64 + s) / phi.tail_amplitude();
            assert!((ratio - 1.0).abs() < 0.01, "N={n} σ={s}: tail ratio {ratio}");
        }
        let vals: Vec<f64> = phi.values().to_vec();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]), "Φ not monotone");
        assert!(psi.total_mass().abs() < 1e-9, "∫Ψ = {}", psi.total_mass());
    }
}

#[test]
fn slopes_agree_with_finite_differences() {
    for (n, s) in MATRIX {
        let (phi, _) = profiles(n, s);
        for &x in phi.nodes().iter().skip(5).step_by(97) {
            let h = 1e-3 * x;
            let fd = (phi.eval(x - 2.0 * h) - 8.0 * phi.eval(x - h) + 8.0 * phi.eval(x + h)
                - phi.eval(x + 2.0 * h))
                / (12.0 * h);
            let d = phi.derivative(x);
            assert!((fd - d).abs() < 1e-6 * d.abs().max(1e-12), "N={n} σ={s} s={x}: {fd} vs {d}");
        }
    }
}

#[test]
fn psi_matches_direct_inversion() {
    for (n, s) in MATRIX {
        let (_, psi) = profiles(n, s);
        let mut worst: f64 = 0.0;
        for (x, v) in psi.samples().step_by(7) {
            if x > psi.switch_radius() {
                break;
            }
            let direct = invert_radial_symbol(n, s, 1, x).unwrap();
            worst = worst.max((direct - v).abs());
        }
        assert!(worst < 1e-6, "N={n} σ={s}: worst {worst:e}");
    }
}

#[test]
fn decay_bounds_and_cancellation() {
    for (n, s) in MATRIX {
        let (_, psi) = profiles(n, s);
        let report = verify_decay_bounds(&psi, &DecaySampleSet::default()).unwrap();
        assert!(report.pass, "N={n} σ={s}: {report:?}");
        for half in [Half::Plus, Half::Minus] {
            let v = cancellation_integral(&psi, half, 1e-3, 1.0).unwrap();
            assert!(v.abs() < 1e-6, "N={n} σ={s}: {v:e}");
        }
    }
}
