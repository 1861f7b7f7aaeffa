use fracdiff::geometry::SigmaParams;
use fracdiff::grid::GridField;
use fracdiff::kernel::{build_phi_profile, build_psi_profile, KernelProfile, ProfileGrid};
use fracdiff::linear::{
    solve_duhamel, solve_spectral, weighted_l1_norm, DuhamelOptions, SourceTerm, WeightedNorm,
};
use std::f64::consts::PI;

const L: f64 = 10.0;

fn profiles(sigma: f64) -> (KernelProfile, KernelProfile) {
    let p = SigmaParams::new(1, sigma).unwrap();
    let phi = build_phi_profile(&p, ProfileGrid::for_params(&p)).unwrap();
    let psi = build_psi_profile(&phi).unwrap();
    (phi, psi)
}

fn initial(sigma: f64, n: usize) -> GridField {
    let p = SigmaParams::new(1, sigma).unwrap();
    GridField::from_fn(p, L, n, |x| (-(x[0] * x[0])).exp() + 0.3 * (2.0 * PI * x[0] / L).sin())
        .unwrap()
}

fn manufactured(proto: &GridField, alpha: f64) -> SourceTerm {
    let base = proto.clone();
    SourceTerm::new(alpha, move |t| {
        let g = 1.0 + t - 0.5 * t * t + 0.1 * t * t * t;
        let f = GridField::from_fn(*base.params(), L, base.n(), |x| {
            g * (2.0 * PI * x[0] / L).cos().exp() + (1.0 - t) * (6.0 * PI * x[0] / L).sin()
        })?;
        Ok(f)
    })
    .unwrap()
}

fn sup_diff(a: &GridField, b: &GridField) -> f64 {
    a.lin_comb(1.0, b, -1.0).sup_norm()
}

#[test]
fn spectral_closed_form_per_mode() {
    // f = cos(ξx) g(t): û' = -λ(û - g), u_p = Σ (-1)^i g^(i) / λ^i
    let sigma = 0.7;
    let p = SigmaParams::new(1, sigma).unwrap();
    let k = 3.0;
    let xi = 2.0 * PI * k / L;
    let lam = xi.powf(sigma);
    let g = [0.5, -1.0, 2.0, 0.25]; // g(t) = Σ g_j t^j
    let eval_g = move |t: f64, d: usize| -> f64 {
        let mut s = 0.0;
        for (j, c) in g.iter().enumerate().skip(d) {
            let mut fall = 1.0;
            for i in 0..d {
                fall *= (j - i) as f64;
            }
            s += c * fall * t.powi((j - d) as i32);
        }
        s
    };
    let up = |t: f64| (0..4).map(|i| (-1f64).powi(i as i32) * eval_g(t, i) / lam.powi(i as i32)).sum::<f64>();
    let u0 = GridField::from_fn(p, L, 64, |x| 2.0 * (xi * x[0]).cos()).unwrap();
    let proto = u0.clone();
    let src = SourceTerm::new(0.5, move |t| {
        GridField::from_fn(*proto.params(), L, 64, |x| eval_g(t, 0) * (xi * x[0]).cos())
    })
    .unwrap();
    let t_final = 1.7;
    let snaps = solve_spectral(&u0, &src, t_final, 7).unwrap();
    assert_eq!(snaps.len(), 8);
    let amp = up(t_final) + (2.0 - up(0.0)) * (-lam * t_final).exp();
    let exact = GridField::from_fn(p, L, 64, |x| amp * (xi * x[0]).cos()).unwrap();
    let err = sup_diff(snaps.last().unwrap(), &exact);
    assert!(err < 1e-10, "{err:e}");
}

#[test]
fn spectral_without_source_is_heat_semigroup() {
    let u0 = initial(1.5, 64);
    let zero = SourceTerm::zero(&u0);
    let snaps = solve_spectral(&u0, &zero, 0.8, 3).unwrap();
    let const_src = {
        let c = u0.map(|_| 4.0);
        SourceTerm::new(1.0, move |_| Ok(c.clone())).unwrap()
    };
    let snaps_c = solve_spectral(&u0, &const_src, 0.8, 3).unwrap();
    let expect = fracdiff::grid::Spectral::for_field(&u0)
        .multiply(&u0, |xi| (-xi.powf(1.5) * 0.8).exp());
    assert!(sup_diff(&snaps[3], &expect) < 1e-13);
    assert!(sup_diff(&snaps_c[3], &expect) < 1e-13);
    assert!((snaps[3].mean() - u0.mean()).abs() < 1e-15);
}

#[test]
fn duhamel_matches_spectral_oracle() {
    for sigma in [0.5, 1.0, 1.5] {
        let (phi, psi) = profiles(sigma);
        let u0 = initial(sigma, 256);
        let t_final = 0.6;
        let zero = SourceTerm::zero(&u0);
        let (d0, _) = solve_duhamel(&u0, &zero, t_final, &phi, &psi, DuhamelOptions::default()).unwrap();
        let s0 = solve_spectral(&u0, &zero, t_final, 1).unwrap().pop().unwrap();
        assert!(sup_diff(&d0, &s0) < 1e-6, "σ={sigma}: {:e}", sup_diff(&d0, &s0));
        assert!((d0.mean() - u0.mean()).abs() < 1e-14);

        let src = manufactured(&u0, sigma.min(1.0));
        let (d, report) = solve_duhamel(&u0, &src, t_final, &phi, &psi, DuhamelOptions::default()).unwrap();
        let s = solve_spectral(&u0, &src, t_final, 64).unwrap().pop().unwrap();
        let err = sup_diff(&d, &s);
        println!("σ={sigma}: L∞ {err:e}, {report:?}");
        assert!(err < 1e-4, "σ={sigma}: {err:e}");

        let half = DuhamelOptions { slab_fraction: 0.0625, ..DuhamelOptions::default() };
        let (dh, _) = solve_duhamel(&u0, &src, t_final, &phi, &psi, half).unwrap();
        assert!(sup_diff(&d, &dh) < 1e-5, "σ={sigma}: slab halving {:e}", sup_diff(&d, &dh));
    }
}

#[test]
fn duhamel_tends_to_initial_data() {
    let sigma = 1.0;
    let (phi, psi) = profiles(sigma);
    let u0 = initial(sigma, 256);
    let src = manufactured(&u0, 1.0);
    let w = WeightedNorm::for_grid(&u0);
    let mut prev = f64::INFINITY;
    for t in [1e-1, 1e-2, 1e-3, 1e-4] {
        let (u, _) = solve_duhamel(&u0, &src, t, &phi, &psi, DuhamelOptions::default()).unwrap();
        let d = weighted_l1_norm(&u.lin_comb(1.0, &u0, -1.0), &w).unwrap();
        assert!(d < prev, "t={t}: {d}");
        prev = d;
    }
    assert!(prev < 1e-3);
}

#[test]
fn sampled_kernels_match_symbols_where_resolved() {
    use fracdiff::linear::{kernel_convolve_direct, kernel_transform, KernelPath};
    for sigma in [0.5, 1.0, 1.5] {
        let (phi, psi) = profiles(sigma);
        let p = SigmaParams::new(1, sigma).unwrap();
        let proto = GridField::from_fn(p, L, 128, |_| 0.0).unwrap();
        let nyq = PI / proto.h();
        let t = 30.0 / nyq.powf(sigma);
        let sp = fracdiff::grid::Spectral::for_field(&proto);
        let lam: Vec<f64> = sp.wavenumbers(L).iter().map(|x| x.powf(sigma)).collect();
        for prof in [&phi, &psi] {
            let (hat, path) = kernel_transform(prof, t, &proto, 512).unwrap();
            assert_eq!(path, KernelPath::Sampled);
            let is_phi = std::ptr::eq(prof, &phi);
            let worst = hat
                .iter()
                .zip(&lam)
                .map(|(c, l)| {
                    let sym = if is_phi { (-l * t).exp() } else { l * (-l * t).exp() };
                    (c.re - sym).abs() + c.im.abs()
                })
                .fold(0.0, f64::max);
            assert!(worst < 1e-7, "σ={sigma}: {worst:e}");
        }
        // direct summation agrees with the transformed convolution
        let u0 = initial(sigma, 128);
        let direct = kernel_convolve_direct(&phi, t, &u0, 64).unwrap();
        let (hat, _) = kernel_transform(&phi, t, &u0, 64).unwrap();
        let mut c = sp.forward(u0.values());
        for (a, b) in c.iter_mut().zip(&hat) {
            *a *= b;
        }
        let fft = u0.with_values(sp.inverse(c)).unwrap();
        assert!(sup_diff(&direct, &fft) < 1e-12);
    }
}
