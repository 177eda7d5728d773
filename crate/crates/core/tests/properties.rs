use num_complex::Complex64 as C64;
use parasqueeze::bloch::{squeezing_factors, SpinMoments};
use parasqueeze::two_mode::*;
use proptest::prelude::*;

fn state_strategy(max_n: usize) -> impl Strategy<Value = ManyBodyState<f64>> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n + 1).prop_filter_map("zero vector", |v| {
            ManyBodyState::normalized(v.into_iter().map(|(a, b)| C64::new(a, b)).collect(), 0.0).ok()
        })
    })
}

fn op(kind: SpinKind, n: usize) -> SpinOperator<f64> {
    build_spin_operator(kind, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn su2_commutators(psi in state_strategy(50)) {
        let n = psi.n_atoms();
        let v = psi.amplitudes();
        let (x, y, z) = (op(SpinKind::Jx, n), op(SpinKind::Jy, n), op(SpinKind::Jz, n));
        let i = C64::new(0.0, 1.0);
        for (a, b, c) in [(&x, &y, &z), (&y, &z, &x), (&z, &x, &y)] {
            let ab = a.apply(&b.apply(v));
            let ba = b.apply(&a.apply(v));
            let rhs = c.apply(v);
            for k in 0..v.len() {
                prop_assert!((ab[k] - ba[k] - i * rhs[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn operators_hermitian_and_jz_spectrum(n in 1usize..=50) {
        for kind in [SpinKind::Jx, SpinKind::Jy, SpinKind::Jz, SpinKind::Jz2] {
            prop_assert!(op(kind, n).matrix().is_hermitian(0.0));
        }
        let jz = op(SpinKind::Jz, n);
        for (k, d) in jz.matrix().diag.iter().enumerate() {
            prop_assert_eq!(d.re, k as f64 - n as f64 / 2.0);
        }
    }

    #[test]
    fn hamiltonian_symmetric(omega in 0.0f64..5.0, kappa in 0.0f64..1.0, n in 1usize..60) {
        let h = build_hamiltonian(omega, kappa, n).unwrap();
        let d = h.diag();
        for k in 0..=n {
            prop_assert_eq!(d[k], d[n - k]);
        }
        for (k, o) in h.offdiag().iter().enumerate() {
            let m = k as f64 - n as f64 / 2.0;
            let j = n as f64 / 2.0;
            prop_assert!((o + omega / 2.0 * (j * (j + 1.0) - m * (m + 1.0)).sqrt()).abs() < 1e-12 * (1.0 + omega * j));
        }
    }

    #[test]
    fn robertson_and_identity(psi in state_strategy(40)) {
        let r = squeezing_factors(&psi);
        let m = SpinMoments::of(&psi);
        prop_assert!(r.delta_n * r.delta_jy >= m.jx.abs() / 2.0 - 1e-9);
        prop_assert!(r.var_jz >= -1e-12);
        if r.alpha > 1e-6 {
            prop_assert!((r.xi_s - r.xi_n / r.alpha).abs() <= 1e-12 * r.xi_s.abs());
        }
    }

    #[test]
    fn unitarity_per_thousand_steps(psi in state_strategy(30), omega in 0.1f64..2.0, kappa in 0.0f64..0.5) {
        let schedule = move |t: f64| (omega * (1.0 + 0.3 * (3.0 * t).sin()), kappa);
        let (_, diag) = evolve_with(&psi, &schedule, 1.0, 1e-3, |_, _| {}).unwrap();
        prop_assert!(diag.max_norm_drift < 1e-10);
    }

    #[test]
    fn parity_is_preserved(psi in state_strategy(40), omega in 0.1f64..2.0, kappa in 0.0f64..0.5) {
        let n = psi.n_atoms();
        let a = psi.amplitudes();
        let sym: Vec<C64> = (0..=n).map(|k| a[k] + a[n - k]).collect();
        let psi = match ManyBodyState::normalized(sym, 0.0) {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        let schedule = move |t: f64| (omega * (1.0 + 0.2 * (5.0 * t).sin()), kappa);
        let (out, _) = evolve_with(&psi, &schedule, 2.0, 1e-3, |_, _| {}).unwrap();
        let c = out.amplitudes();
        for k in 0..=n {
            prop_assert!((c[k].norm() - c[n - k].norm()).abs() < 1e-9);
        }
    }
}

#[test]
fn static_energy_conserved_over_ten_ms() {
    let h = build_hamiltonian(0.58, 0.0135, 100).unwrap();
    let psi = ManyBodyState::<f64>::coherent(100, 1.2, 0.4).unwrap();
    let e0 = expectation(&psi, &h).unwrap();
    let (out, _) = evolve_with(&psi, &Static(0.58, 0.0135), 10.0, 1e-3, |_, _| {}).unwrap();
    let e1 = expectation(&out, &h).unwrap();
    assert!(((e1 - e0) / e0).abs() < 1e-8);
}
