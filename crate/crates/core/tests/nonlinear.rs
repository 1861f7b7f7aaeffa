use fracdiff::geometry::SigmaParams;
use fracdiff::grid::{GridField, Spectral};
use fracdiff::laplacian::{calibrate, FractionalOperator, GridMeta, QuadratureScheme};
use fracdiff::nonlinear::{
    evolve_imex_frozen, evolve_semigroup, implicit_euler_step, StepOptions, Trajectory,
};
use fracdiff::nonlinearity::{Nonlinearity, NonlinearityKind};
use nalgebra::{DMatrix, DVector};

fn field(sigma: f64, l: f64, n: usize, f: impl Fn(f64) -> f64) -> GridField {
    GridField::from_fn(SigmaParams::new(1, sigma).unwrap(), l, n, |x| f(x[0])).unwrap()
}

fn dense(op: &FractionalOperator, proto: &GridField) -> DMatrix<f64> {
    let n = proto.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = op.apply(&proto.with_values(e).unwrap()).unwrap();
        for i in 0..n {
            m[(i, j)] = col.values()[i];
        }
    }
    m
}

/// Damped Newton on `u + τ L (|u| u) = g` in the original variables with LU.
fn dense_newton(l: &DMatrix<f64>, g: &[f64], tau: f64) -> Vec<f64> {
    let n = g.len();
    let gv = DVector::from_column_slice(g);
    let phi = |u: &DVector<f64>| u.map(|s| s.abs() * s);
    let resid = |u: &DVector<f64>| u + l * phi(u) * tau - &gv;
    let mut u = gv.clone();
    let mut r = resid(&u);
    for _ in 0..60 {
        if r.norm() < 1e-14 {
            break;
        }
        let d = DMatrix::from_diagonal(&u.map(|s| 2.0 * s.abs()));
        let jac = DMatrix::identity(n, n) + l * d * tau;
        let step = jac.lu().solve(&r).unwrap();
        let mut t = 1.0;
        loop {
            let trial = &u - &step * t;
            let rt = resid(&trial);
            if rt.norm() < r.norm() || t < 1e-8 {
                u = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    u.iter().copied().collect()
}

#[test]
fn resolvent_matches_dense_newton_oracle() {
    let sigma = 1.0;
    let g = field(sigma, 10.0, 32, |x| 0.2 + (-(x * x)).exp() + 0.3 * (-(x - 2.0).powi(2) * 4.0).exp());
    let nl = Nonlinearity::new(NonlinearityKind::Power { m: 2.0 }).regularize(1e-8).unwrap();
    let tau = 0.3;
    let spectral = FractionalOperator::Spectral { order: sigma };
    let opts = StepOptions { operator: Some(spectral.clone()), ..StepOptions::default() };
    let (u, rep) = implicit_euler_step(&g, tau, &nl, &opts).unwrap();
    let oracle = dense_newton(&dense(&spectral, &g), g.values(), tau);
    let err = u.values().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("spectral n=32: {err:e}, {rep:?}");
    assert!(err < 1e-8, "{err:e}");
    assert!(rep.residual < 1e-10 && rep.mass_drift < 1e-14);

    // the quadrature realization, on the smallest grid where it calibrates
    let g = field(sigma, 10.0, 128, |x| 0.2 + (-(x * x)).exp());
    let scheme = calibrate(&QuadratureScheme::new(sigma).unwrap(), GridMeta::of(&g)).unwrap();
    let quad = FractionalOperator::Quadrature(scheme);
    let opts = StepOptions { operator: Some(quad.clone()), ..StepOptions::default() };
    let (u, _) = implicit_euler_step(&g, tau, &nl, &opts).unwrap();
    let oracle = dense_newton(&dense(&quad, &g), g.values(), tau);
    let err = u.values().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "quadrature n=128: {err:e}");
}

#[test]
fn linear_semigroup_is_first_order() {
    let sigma = 0.8;
    let u0 = field(sigma, 10.0, 128, |x| (-(x * x)).exp());
    let nl = Nonlinearity::new(NonlinearityKind::Linear);
    let t = 1.0;
    let exact = Spectral::for_field(&u0).multiply(&u0, |xi| (-xi.powf(sigma) * t).exp());
    let errs: Vec<f64> = [10, 20, 40, 80]
        .iter()
        .map(|&k| {
            let tr = evolve_semigroup(&u0, t, k, &nl, &StepOptions::default(), &[]).unwrap();
            tr.last().lin_comb(1.0, &exact, -1.0).l1_norm()
        })
        .collect();
    for w in errs.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!((slope - 1.0).abs() < 0.15, "{errs:?}");
    }
}

fn fit_slope(taus: &[f64], errs: &[f64]) -> f64 {
    let n = taus.len() as f64;
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

#[test]
fn nonlinear_semigroup_is_first_order_against_finer_reference() {
    let sigma = 1.0;
    let u0 = field(sigma, 20.0, 128, |x| (-(x * x)).exp() * 2.0);
    let nl = Nonlinearity::new(NonlinearityKind::Log1p);
    let t = 0.5;
    let counts = [8usize, 16, 32];
    let opts = StepOptions::default();
    let mut taus = Vec::new();
    let mut errs = Vec::new();
    for &k in &counts {
        let coarse = evolve_semigroup(&u0, t, k, &nl, &opts, &[]).unwrap();
        let fine = evolve_semigroup(&u0, t, 4 * k, &nl, &opts, &[]).unwrap();
        taus.push(t / k as f64);
        errs.push(coarse.last().lin_comb(1.0, fine.last(), -1.0).l1_norm());
    }
    let slope = fit_slope(&taus, &errs);
    assert!((slope - 1.0).abs() < 0.15, "slope {slope}, {errs:?}");
}

fn box_data(sigma: f64, n: usize, c: f64, a: f64) -> GridField {
    field(sigma, 20.0, n, |x| if (x - c).abs() < a { 1.0 } else { 0.0 })
}

fn l1_trace(a: &Trajectory, b: &Trajectory) -> Vec<f64> {
    a.snapshots.iter().zip(&b.snapshots).map(|(x, y)| x.lin_comb(1.0, y, -1.0).l1_norm()).collect()
}

#[test]
fn mass_positivity_and_l1_contraction_across_registry() {
    let sigma = 0.7;
    let kinds = [
        NonlinearityKind::Linear,
        NonlinearityKind::Power { m: 2.0 },
        NonlinearityKind::Power { m: 0.5 },
        NonlinearityKind::ShiftedPower { m: 2.0 },
        NonlinearityKind::Log1p,
        NonlinearityKind::Stefan,
    ];
    for kind in kinds {
        let base = Nonlinearity::new(kind);
        let nl = base.regularize(1e-6 * 2.0).unwrap();
        let (u0, v0) = if kind == NonlinearityKind::Stefan {
            (box_data(sigma, 128, 0.0, 3.0).map(|s| 2.0 * s), box_data(sigma, 128, 1.0, 2.0).map(|s| 2.5 * s))
        } else {
            (box_data(sigma, 128, 0.0, 3.0), box_data(sigma, 128, 1.0, 2.0).map(|s| 1.5 * s))
        };
        let opts = StepOptions { tol: 1e-11, ..StepOptions::default() };
        let times = [0.1, 0.2, 0.4, 0.8, 1.0];
        let a = evolve_semigroup(&u0, 1.0, 40, &nl, &opts, &times).unwrap();
        let b = evolve_semigroup(&v0, 1.0, 40, &nl, &opts, &times).unwrap();
        assert_eq!(a.times.len(), 6);
        for s in &a.snapshots {
            assert!((s.mean() - u0.mean()).abs() < 1e-13, "{kind:?} mass");
            assert!(s.min_value() > -1e-8, "{kind:?} positivity {}", s.min_value());
        }
        let trace = l1_trace(&a, &b);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "{kind:?} contraction {trace:?}");
        }
    }
}

#[test]
fn regularization_refinement_is_first_order_in_eps() {
    let sigma = 1.0;
    let u0 = field(sigma, 20.0, 128, |x| (1.0 - x * x / 4.0).max(0.0));
    let base = Nonlinearity::new(NonlinearityKind::Power { m: 2.0 });
    let opts = StepOptions::default();
    let run = |eps: f64| {
        let nl = base.regularize(eps).unwrap();
        evolve_semigroup(&u0, 0.5, 20, &nl, &opts, &[]).unwrap().last().clone()
    };
    let e = 1e-2;
    let (a, b, c) = (run(e), run(e / 2.0), run(e / 4.0));
    let d1 = a.lin_comb(1.0, &b, -1.0).l1_norm();
    let d2 = b.lin_comb(1.0, &c, -1.0).l1_norm();
    println!("eps refinement: {d1:e} {d2:e}");
    assert!(d1 < 10.0 * e && d2 < d1, "{d1:e} {d2:e}");
    assert!((d1 / d2).log2() > 0.5, "{d1:e} {d2:e}");
}

#[test]
fn imex_agrees_with_semigroup_for_log_nonlinearity() {
    let sigma = 1.0;
    let u0 = field(sigma, 20.0, 256, |x| 2.0 * (-(x * x)).exp() + if x.abs() < 4.0 { 0.5 } else { 0.0 });
    let nl = Nonlinearity::new(NonlinearityKind::Log1p);
    let semi = evolve_semigroup(&u0, 1.0, 200, &nl, &StepOptions::default(), &[]).unwrap();
    let imex = evolve_imex_frozen(&u0, 1.0, 200, &nl, 1, &[]).unwrap();
    let d = semi.last().lin_comb(1.0, imex.last(), -1.0).sup_norm();
    println!("imex vs semigroup: {d:e}");
    assert!(d < 5e-3, "{d:e}");
    assert!((imex.last().mean() - u0.mean()).abs() < 1e-13);

    let gap = |k: usize| {
        let a = evolve_imex_frozen(&u0, 1.0, k, &nl, 1, &[]).unwrap();
        let b = evolve_imex_frozen(&u0, 1.0, k, &nl, 10, &[]).unwrap();
        a.last().lin_comb(1.0, b.last(), -1.0).sup_norm()
    };
    let (g1, g2) = (gap(50), gap(200));
    assert!(g2 < g1, "{g1:e} {g2:e}");

    let lin = Nonlinearity::new(NonlinearityKind::Linear);
    let tr = evolve_imex_frozen(&u0, 1.0, 3, &lin, 1, &[]).unwrap();
    let exact = Spectral::for_field(&u0).multiply(&u0, |xi| (-xi).exp());
    assert!(tr.last().lin_comb(1.0, &exact, -1.0).sup_norm() < 1e-13);

    let deg = Nonlinearity::new(NonlinearityKind::Power { m: 2.0 });
    let box0 = box_data(sigma, 64, 0.0, 2.0);
    assert!(evolve_imex_frozen(&box0, 1.0, 3, &deg, 1, &[]).is_err());
}
