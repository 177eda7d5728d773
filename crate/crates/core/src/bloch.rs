//! Squeezing and coherence diagnostics, and Husimi distributions on the Bloch
//! sphere.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::{czero, ln_binomial, Real};
use crate::two_mode::{imbalance, ladder, ManyBodyState, Operator};

/// First and second moments of the collective spin, computed in one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinMoments<T> {
    pub jx: T,
    pub jy: T,
    pub jz: T,
    pub jz2: T,
    pub jy2: T,
}

impl<T: Real> SpinMoments<T> {
    pub fn of(state: &ManyBodyState<T>) -> Self {
        let c = state.amplitudes();
        let n = state.n_atoms();
        let mut jz = T::zero();
        let mut jz2 = T::zero();
        for (k, a) in c.iter().enumerate() {
            let m: T = imbalance(n, k);
            let p = a.norm_sqr();
            jz += m * p;
            jz2 += m * m * p;
        }
        // <J+> = sum_k conj(c_{k+1}) l_k c_k ; <J+^2> likewise two steps up.
        let mut jp = czero::<T>();
        let mut jp2 = czero::<T>();
        for k in 0..n {
            let l = ladder::<T>(n, k);
            jp += c[k + 1].conj() * c[k] * l;
            if k + 1 < n {
                jp2 += c[k + 2].conj() * c[k] * l * ladder::<T>(n, k + 1);
            }
        }
        // Jy^2 = -(J+^2 + J-^2 - J+J- - J-J+)/4, and J+J- + J-J+ = 2(J^2 - Jz^2).
        let j = T::from_count(n) * T::lit(0.5);
        let casimir = j * (j + T::one());
        let sym = T::lit(2.0) * (casimir - jz2);
        let jy2 = (sym - T::lit(2.0) * jp2.re) * T::lit(0.25);
        Self {
            jx: jp.re,
            jy: jp.im,
            jz,
            jz2,
            jy2,
        }
    }

    pub fn var_jz(&self) -> T {
        self.jz2 - self.jz * self.jz
    }

    pub fn var_jy(&self) -> T {
        self.jy2 - self.jy * self.jy
    }
}

/// Snapshot of squeezing diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingReport<T> {
    pub t: T,
    pub delta_n: T,
    /// `+inf` when the phase is undefined (`alpha = 0`).
    pub delta_phi: T,
    pub xi_n: T,
    pub xi_phi: T,
    /// `+inf` when `alpha = 0`.
    pub xi_s: T,
    pub alpha: T,
    pub energy: Option<T>,
    pub jx: T,
    pub jy: T,
    pub jz: T,
    pub var_jz: T,
    pub delta_jy: T,
    pub phase_undefined: bool,
}

impl<T: Real> SqueezingReport<T> {
    /// `Delta Jz * Delta Jy - |<Jx>|/2`; non-negative for every physical state.
    pub fn robertson_margin(&self) -> T {
        self.delta_n * self.delta_jy - self.jx.abs() * T::lit(0.5)
    }

    pub fn xi_s_db(&self) -> T {
        squeezing_db(self.xi_s)
    }
}

/// `10 log10(xi^2)`.
pub fn squeezing_db<T: Real>(xi: T) -> T {
    T::lit(10.0) * (xi * xi).log10()
}

/// `Delta n = sqrt(<Jz^2> - <Jz>^2)`.
pub fn number_fluctuation<T: Real>(state: &ManyBodyState<T>) -> T {
    SpinMoments::of(state).var_jz().max(T::zero()).sqrt()
}

/// `alpha = (2/N) sqrt(<Jx>^2 + <Jy>^2)`.
pub fn coherence<T: Real>(state: &ManyBodyState<T>) -> T {
    let m = SpinMoments::of(state);
    coherence_from(&m, state.n_atoms())
}

fn coherence_from<T: Real>(m: &SpinMoments<T>, n_atoms: usize) -> T {
    T::lit(2.0) / T::from_count(n_atoms) * m.jx.hypot(m.jy)
}

fn phase_threshold<T: Real>() -> T {
    T::epsilon() * T::lit(16.0)
}

/// Linearized phase spread `Delta Jy / |<Jx>|`.
pub fn phase_fluctuation<T: Real>(state: &ManyBodyState<T>) -> Result<T> {
    let m = SpinMoments::of(state);
    if coherence_from(&m, state.n_atoms()) <= phase_threshold() || m.jx == T::zero() {
        return Err(Error::UndefinedPhase);
    }
    Ok(m.var_jy().max(T::zero()).sqrt() / m.jx.abs())
}

/// All squeezing factors of `state`.
pub fn squeezing_factors<T: Real>(state: &ManyBodyState<T>) -> SqueezingReport<T> {
    let n = state.n_atoms();
    let m = SpinMoments::of(state);
    let sqrt_n = T::from_count(n).sqrt();
    let delta_n = m.var_jz().max(T::zero()).sqrt();
    let delta_jy = m.var_jy().max(T::zero()).sqrt();
    let alpha = coherence_from(&m, n);
    let xi_n = delta_n / (sqrt_n * T::lit(0.5));
    let undefined = alpha <= phase_threshold() || m.jx == T::zero();
    let (delta_phi, xi_s) = if undefined {
        (T::infinity(), T::infinity())
    } else {
        (delta_jy / m.jx.abs(), xi_n / alpha)
    };
    SqueezingReport {
        t: state.time(),
        delta_n,
        delta_phi,
        xi_n,
        xi_phi: delta_phi * sqrt_n,
        xi_s,
        alpha,
        energy: None,
        jx: m.jx,
        jy: m.jy,
        jz: m.jz,
        var_jz: m.var_jz(),
        delta_jy,
        phase_undefined: undefined,
    }
}

/// Squeezing report with `<H>` filled in.
pub fn squeezing_report<T: Real, H: Operator<T> + ?Sized>(
    state: &ManyBodyState<T>,
    hamiltonian: &H,
) -> Result<SqueezingReport<T>> {
    let mut r = squeezing_factors(state);
    r.energy = Some(crate::two_mode::expectation(state, hamiltonian)?);
    Ok(r)
}

/// Husimi distribution sampled on a `theta x phi` grid, normalized to max 1.
#[derive(Debug, Clone, PartialEq)]
pub struct HusimiGrid<T> {
    pub theta: Vec<T>,
    pub phi: Vec<T>,
    /// Row-major: `values[i * phi.len() + j]` is `Q(theta[i], phi[j])`.
    pub values: Vec<T>,
}

impl<T: Real> HusimiGrid<T> {
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.phi.len() + j]
    }

    /// Grid indices of the maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let (idx, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        (idx / self.phi.len(), idx % self.phi.len())
    }

    /// Trapezoid estimate of `integral Q sin(theta) dtheta dphi`.
    pub fn sphere_integral(&self) -> T {
        let trap = |xs: &[T], i: usize| -> T {
            let n = xs.len();
            if n < 2 {
                return T::zero();
            }
            let left = if i > 0 { xs[i] - xs[i - 1] } else { T::zero() };
            let right = if i + 1 < n { xs[i + 1] - xs[i] } else { T::zero() };
            (left + right) * T::lit(0.5)
        };
        let mut total = T::zero();
        for (i, th) in self.theta.iter().enumerate() {
            let wt = trap(&self.theta, i) * th.sin();
            for j in 0..self.phi.len() {
                total += wt * trap(&self.phi, j) * self.get(i, j);
            }
        }
        total
    }
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * T::from_count(i) / T::from_count(n - 1))
            .collect(),
    }
}

/// The default 1-degree grid: 181 polar x 361 azimuthal nodes.
pub fn default_husimi_axes<T: Real>() -> (Vec<T>, Vec<T>) {
    (
        linspace(T::zero(), T::PI(), 181),
        linspace(-T::PI(), T::PI(), 361),
    )
}

/// `Q(theta, phi) = |<theta, phi|psi>|^2`, normalized so the maximum is 1.
pub fn husimi<T: Real>(state: &ManyBodyState<T>, theta: &[T], phi: &[T]) -> Result<HusimiGrid<T>> {
    if theta.is_empty() || phi.is_empty() {
        return Err(invalid("Husimi grid axes must be non-empty"));
    }
    let n = state.n_atoms();
    let c = state.amplitudes();
    let ln_binom: Vec<f64> = (0..=n).map(|k| 0.5 * ln_binomial(n, k)).collect();
    let nphi = phi.len();
    let rows: Vec<Vec<T>> = theta
        .par_iter()
        .map(|&th| {
            let half = th.to_f64_lossy() * 0.5;
            let (cs, sn) = (half.cos(), half.sin());
            // Real coherent-state weights b_k(theta) times psi_k.
            let weighted: Vec<Complex<T>> = (0..=n)
                .map(|k| {
                    let up = k as f64;
                    let down = (n - k) as f64;
                    let mut lm = ln_binom[k];
                    let mut sign = 1.0;
                    if k > 0 {
                        lm += up * cs.abs().ln();
                        sign *= cs.signum().powi(k as i32);
                    }
                    if n > k {
                        lm += down * sn.abs().ln();
                        sign *= sn.signum().powi((n - k) as i32);
                    }
                    let b = if lm.is_finite() { sign * lm.exp() } else { 0.0 };
                    c[k] * T::lit(b)
                })
                .collect();
            phi.iter()
                .map(|&ph| {
                    let mut acc = czero::<T>();
                    for (k, w) in weighted.iter().enumerate() {
                        let m: T = imbalance(n, k);
                        acc += *w * Complex::from_polar(T::one(), m * ph);
                    }
                    acc.norm_sqr()
                })
                .collect()
        })
        .collect();
    let mut values: Vec<T> = Vec::with_capacity(theta.len() * nphi);
    rows.into_iter().for_each(|r| values.extend(r));
    let max = values.iter().copied().fold(T::zero(), T::max);
    if !(max > T::zero()) {
        return Err(Error::Numerical("Husimi distribution vanishes on the grid".into()));
    }
    values.iter_mut().for_each(|v| *v /= max);
    Ok(HusimiGrid {
        theta: theta.to_vec(),
        phi: phi.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::two_mode::{build_hamiltonian, ground_state};
    use approx::assert_abs_diff_eq;

    #[test]
    fn binomial_is_shot_noise_reference() {
        for n in [2usize, 10, 100, 1000] {
            let psi = ManyBodyState::<f64>::binomial(n).unwrap();
            let r = squeezing_factors(&psi);
            assert_abs_diff_eq!(r.xi_n, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(r.xi_phi, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(r.xi_s, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(r.delta_n, (n as f64).sqrt() / 2.0, epsilon = 1e-9);
            assert_abs_diff_eq!(r.delta_phi, 1.0 / (n as f64).sqrt(), epsilon = 1e-10);
            assert_abs_diff_eq!(r.alpha, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fock_states() {
        let psi = ManyBodyState::<f64>::fock(10, 5).unwrap();
        assert_eq!(number_fluctuation(&psi), 0.0);
        let left = ManyBodyState::<f64>::fock(10, 10).unwrap();
        assert_eq!(coherence(&left), 0.0);
        assert!(matches!(phase_fluctuation(&left), Err(Error::UndefinedPhase)));
        let r = squeezing_factors(&left);
        assert!(r.phase_undefined);
        assert!(r.xi_s.is_infinite());
    }

    #[test]
    fn number_squeezed_ground_state_trades_phase() {
        let n = 200;
        let h = build_hamiltonian(1.0, 50.0 / n as f64, n).unwrap();
        let (psi, _) = ground_state(&h).unwrap();
        let r = squeezing_factors(&psi);
        assert!(r.xi_n < 1.0);
        assert!(r.delta_phi > 1.0 / (n as f64).sqrt());
        assert!(r.xi_s >= r.xi_n);
        assert!(r.robertson_margin() >= -1e-9);
    }

    #[test]
    fn db_helper() {
        assert_abs_diff_eq!(squeezing_db(0.12f64), -18.416, epsilon = 1e-3);
        assert_abs_diff_eq!(squeezing_db(1.0f64), 0.0);
    }

    #[test]
    fn husimi_peaks() {
        let (th, ph) = (linspace(0.0, std::f64::consts::PI, 37), linspace(-3.0, 3.0, 61));
        let left = ManyBodyState::<f64>::fock(20, 20).unwrap();
        let q = husimi(&left, &th, &ph).unwrap();
        assert_eq!(q.argmax().0, 0);

        let (t0, p0) = (th[12], ph[40]);
        let coh = ManyBodyState::<f64>::coherent(30, t0, p0).unwrap();
        let q = husimi(&coh, &th, &ph).unwrap();
        assert_eq!(q.argmax(), (12, 40));
        assert!(q.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(husimi(&coh, &[], &ph).is_err());
    }
}
