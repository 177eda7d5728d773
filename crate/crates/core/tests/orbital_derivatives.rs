use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use parasqueeze::orbital::*;
use parasqueeze::two_mode::{build_hamiltonian, Operator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..len).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn jz_cost(grid: &Grid1D<f64>, g: &[C64], u: &[C64], c: &[C64]) -> f64 {
    let (_, ft) = compute_f(grid, g, u).unwrap();
    let jz = jz_orbital(ft, c.len() - 1).unwrap();
    jz.apply(c).iter().map(|z| z.norm_sqr()).sum()
}

fn pair_with(g: Vec<C64>, u: Vec<C64>, c: Vec<C64>) -> OrbitalPair<f64> {
    OrbitalPair {
        phi_g: g,
        phi_u: u,
        coeffs: c,
        time: 0.0,
    }
}

#[test]
fn coefficient_derivative_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2usize, 5, 10] {
        let c = rand_vec(n + 1, &mut rng);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let ft = C64::from_polar(1.0, phase);
        let h = build_hamiltonian(0.7, 0.05, n).unwrap();
        for gamma in [0.0, 1.0, 100.0] {
            let cost = |c: &[C64]| {
                let jz = jz_orbital(ft, n).unwrap();
                let jc: f64 = jz.apply(c).iter().map(|z| z.norm_sqr()).sum();
                let hc = h.apply(c);
                let e: C64 = c.iter().zip(&hc).map(|(a, b)| a.conj() * b).sum();
                jc + gamma / n as f64 * e.re
            };
            let grad = cost_derivative_c(&c, ft, &h, gamma).unwrap();
            let eps = 1e-6;
            for k in 0..=n {
                for (dir, part) in [(C64::new(eps, 0.0), 0), (C64::new(0.0, eps), 1)] {
                    let mut p = c.clone();
                    let mut m = c.clone();
                    p[k] += dir;
                    m[k] -= dir;
                    let fd = (cost(&p) - cost(&m)) / (2.0 * eps);
                    let an = 2.0 * if part == 0 { grad[k].re } else { grad[k].im };
                    assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "N={n} gamma={gamma} k={k}: {fd} vs {an}");
                }
            }
        }
    }
}

#[test]
fn orbital_derivative_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = Grid1D::<f64>::new(3.0, 64).unwrap();
    for n in [2usize, 6, 10] {
        let g = rand_vec(64, &mut rng);
        let u = rand_vec(64, &mut rng);
        let c = rand_vec(n + 1, &mut rng);
        let pair = pair_with(g.clone(), u.clone(), c.clone());
        let (dg, du) = cost_derivative_orbitals(&grid, &pair).unwrap();
        let scale = dg.iter().chain(&du).map(|z| z.norm()).fold(0.0f64, f64::max) * grid.dx();
        let eps = 1e-6;
        for i in (0..64).step_by(3) {
            for which in 0..2 {
                for (dir, part) in [(C64::new(eps, 0.0), 0), (C64::new(0.0, eps), 1)] {
                    let (mut gp, mut gm, mut up, mut um) = (g.clone(), g.clone(), u.clone(), u.clone());
                    if which == 0 {
                        gp[i] += dir;
                        gm[i] -= dir;
                    } else {
                        up[i] += dir;
                        um[i] -= dir;
                    }
                    let fd = (jz_cost(&grid, &gp, &up, &c) - jz_cost(&grid, &gm, &um, &c)) / (2.0 * eps);
                    let d = if which == 0 { dg[i] } else { du[i] };
                    let an = 2.0 * grid.weight(i) * if part == 0 { d.re } else { d.im };
                    assert!((fd - an).abs() < 1e-5 * scale.max(1e-12), "N={n} i={i} which={which}: {fd} vs {an}");
                }
            }
        }
        for (i, x) in grid.nodes().iter().enumerate() {
            if *x < 0.0 {
                assert_eq!(dg[i], C64::new(0.0, 0.0));
                assert_eq!(du[i], C64::new(0.0, 0.0));
            }
        }
    }
}

#[test]
fn sign_symmetric_pair_reduces_to_commutator_form() {
    let grid = Grid1D::<f64>::new(5.0, 256).unwrap();
    let norm = std::f64::consts::PI.powf(-0.25);
    let g: Vec<C64> = grid.nodes().iter().map(|x| C64::new(norm * (-x * x / 2.0).exp(), 0.0)).collect();
    let u: Vec<C64> = grid.nodes().iter().zip(&g).map(|(x, v)| v * x.signum()).collect();
    let (f, ft) = compute_f(&grid, &g, &u).unwrap();
    assert!((f.re - 0.5 * grid.norm(&g).powi(2)).abs() < 1e-14 && f.im == 0.0);
    assert!((ft - C64::new(1.0, 0.0)).norm() < 1e-14);

    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let j1 = jz_orbital(C64::new(1.0, 0.0), n).unwrap();
    let ji = jz_orbital(C64::new(0.0, 1.0), n).unwrap();
    let raise = |v: &[C64]| -> Vec<C64> {
        j1.apply(v).iter().zip(ji.apply(v)).map(|(a, b)| a - C64::new(0.0, 1.0) * b).collect()
    };
    let lower = |v: &[C64]| -> Vec<C64> {
        j1.apply(v).iter().zip(ji.apply(v)).map(|(a, b)| a + C64::new(0.0, 1.0) * b).collect()
    };
    let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };

    let real_c: Vec<C64> = (0..=n).map(|_| C64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
    let complex_c = rand_vec(n + 1, &mut rng);
    for c in [real_c, complex_c] {
        let pair = pair_with(g.clone(), u.clone(), c.clone());
        let (dg, _) = cost_derivative_orbitals(&grid, &pair).unwrap();
        let diff = dot(&c, &raise(&raise(&c))) - dot(&c, &lower(&lower(&c)));
        let scale = 2.0 * f.re;
        for i in 0..grid.points() {
            let want = u[i] * grid.theta(i) * diff * 0.5 / scale;
            assert!((dg[i] - want).norm() < 1e-12, "{i}: {} vs {}", dg[i], want);
        }
    }
}

#[test]
fn real_coefficients_give_vanishing_orbital_gradient() {
    let grid = Grid1D::<f64>::new(5.0, 128).unwrap();
    let norm = std::f64::consts::PI.powf(-0.25);
    let g: Vec<C64> = grid.nodes().iter().map(|x| C64::new(norm * (-x * x / 2.0).exp(), 0.0)).collect();
    let u: Vec<C64> = grid.nodes().iter().zip(&g).map(|(x, v)| v * x.signum()).collect();
    let c: Vec<C64> = (0..=8).map(|k| C64::new(1.0 / (1.0 + k as f64), 0.0)).collect();
    let (dg, du) = cost_derivative_orbitals(&grid, &pair_with(g, u, c)).unwrap();
    for z in dg.iter().chain(&du) {
        assert!(z.norm() < 1e-13);
    }
}

#[test]
fn overlap_converges_under_refinement() {
    let exact = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let overlap = |points: usize| {
        let grid = Grid1D::<f64>::new(8.0, points).unwrap();
        let norm = std::f64::consts::PI.powf(-0.25);
        let g: Vec<C64> = grid.nodes().iter().map(|x| C64::new(norm * (-x * x / 2.0).exp(), 0.0)).collect();
        let u: Vec<C64> = grid
            .nodes()
            .iter()
            .map(|x| C64::new(2f64.sqrt() * norm * x * (-x * x / 2.0).exp(), 0.0))
            .collect();
        compute_f(&grid, &g, &u).unwrap().0.re
    };
    let coarse = overlap(201);
    let fine = overlap(401);
    let finer = overlap(801);
    let order = ((coarse - exact) / (fine - exact)).log2();
    assert!((order - 2.0).abs() < 0.05, "order {order}");
    assert!((finer - exact).abs() < 5e-5);
    let rich = (4.0 * finer - fine) / 3.0;
    assert!((rich - exact).abs() < 1e-8, "{rich} vs {exact}");
}

#[test]
fn orbital_jz_two_atoms_dense_oracle() {
    for phase in [0.0, 0.7, 2.0, -1.3] {
        let ft = C64::from_polar(1.0, phase);
        let jz = jz_orbital(ft, 2).unwrap();
        assert!(jz.is_hermitian(1e-15));
        let d = jz.to_dense();
        let s = 0.5 * 2f64.sqrt();
        assert!((d[0][1] - ft * s).norm() < 1e-15);
        assert!((d[1][2] - ft * s).norm() < 1e-15);
        assert_eq!(d[0][2], C64::new(0.0, 0.0));
        // Hermitian 3x3 -> real 6x6 embedding; each eigenvalue appears twice
        let mut m = DMatrix::<f64>::zeros(6, 6);
        for a in 0..3 {
            for b in 0..3 {
                m[(a, b)] = d[a][b].re;
                m[(a + 3, b + 3)] = d[a][b].re;
                m[(a, b + 3)] = -d[a][b].im;
                m[(a + 3, b)] = d[a][b].im;
            }
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, want) in ev.iter().zip([-1.0, -1.0, 0.0, 0.0, 1.0, 1.0]) {
            assert!((e - want).abs() < 1e-12);
        }
    }
}
