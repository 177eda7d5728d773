//! Control parameter `lambda`, its mapping onto `(Omega, kappa)`, the
//! Josephson frequency, and control ramps including the parametric drive.
//!
//! The two-mode Hamiltonian `-Omega Jx + 2 kappa Jz^2` linearized about the
//! balanced coherent state is the oscillator `(Omega_J/2) phi^2 + 2 kappa_eff n^2`
//! with Josephson coupling `Omega_J = N Omega / 2` and `kappa_eff = kappa +
//! Omega / (2N)`. [`josephson_frequency`] is the bare oscillator formula;
//! [`system_josephson_frequency`] feeds it those effective couplings and equals
//! the small-oscillation (plasma) frequency `sqrt(Omega (Omega + 2 N kappa))`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::two_mode::{build_hamiltonian, ground_state, TwoModeSchedule};
use crate::bloch::squeezing_factors;

/// `omega_J = 2 sqrt(kappa Omega)` in rad/ms.
pub fn josephson_frequency<T: Real>(omega: T, kappa: T) -> T {
    T::lit(2.0) * (kappa * omega).max(T::zero()).sqrt()
}

/// Oscillator couplings `(Omega_J, kappa_eff)` of the linearized two-mode model.
pub fn harmonic_couplings<T: Real>(omega: T, kappa: T, n_atoms: usize) -> (T, T) {
    let n = T::from_count(n_atoms);
    (n * omega * T::lit(0.5), kappa + omega / (T::lit(2.0) * n))
}

/// Josephson frequency of the two-mode system with `n_atoms` atoms.
pub fn system_josephson_frequency<T: Real>(omega: T, kappa: T, n_atoms: usize) -> T {
    let (oj, ke) = harmonic_couplings(omega, kappa, n_atoms);
    josephson_frequency(oj, ke)
}

/// `(mass, spring) = (1/Omega, 4 kappa)`; `sqrt(spring/mass)` is `omega_J`.
pub fn effective_oscillator_params<T: Real>(omega: T, kappa: T) -> Result<(T, T)> {
    if omega == T::zero() {
        return Err(invalid("singular oscillator mass: Omega = 0"));
    }
    Ok((T::one() / omega, T::lit(4.0) * kappa))
}

pub fn khz_from_angular<T: Real>(omega: T) -> T {
    omega / T::TAU()
}

pub fn angular_from_khz<T: Real>(f: T) -> T {
    f * T::TAU()
}

/// Mapping from the trap control `lambda` to `(Omega, kappa)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LambdaMap<T> {
    /// `Omega = omega_ref exp(-decay (lambda - lambda_ref)/lambda_ref)`, constant `kappa`.
    ExponentialSurrogate {
        omega_ref: T,
        kappa_ref: T,
        lambda_ref: T,
        decay: T,
        lambda_min: T,
        lambda_max: T,
    },
    /// Piecewise-linear interpolation of sampled `(lambda, Omega, kappa)`.
    Tabulated {
        lambda: Vec<T>,
        omega: Vec<T>,
        kappa: Vec<T>,
    },
}

impl<T: Real> LambdaMap<T> {
    pub fn exponential(
        omega_ref: T,
        kappa_ref: T,
        lambda_ref: T,
        decay: T,
        support: (T, T),
    ) -> Result<Self> {
        if !(omega_ref > T::zero()) || !(kappa_ref > T::zero()) {
            return Err(invalid("surrogate map needs positive Omega and kappa"));
        }
        if !(decay > T::zero()) || !(lambda_ref > T::zero()) {
            return Err(invalid("surrogate map needs positive decay and reference lambda"));
        }
        if !(support.0 < support.1) || lambda_ref < support.0 || lambda_ref > support.1 {
            return Err(invalid("reference lambda outside the supported interval"));
        }
        Ok(Self::ExponentialSurrogate {
            omega_ref,
            kappa_ref,
            lambda_ref,
            decay,
            lambda_min: support.0,
            lambda_max: support.1,
        })
    }

    /// Table with strictly increasing `lambda`, positive strictly decreasing
    /// `Omega`, and positive `kappa`.
    pub fn tabulated(lambda: Vec<T>, omega: Vec<T>, kappa: Vec<T>) -> Result<Self> {
        if lambda.len() < 2 || lambda.len() != omega.len() || lambda.len() != kappa.len() {
            return Err(invalid("lambda table needs at least two rows of equal length"));
        }
        if lambda.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("lambda table must be strictly increasing"));
        }
        if omega.iter().any(|&o| !(o > T::zero())) || omega.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("Omega must be positive and strictly decreasing in lambda"));
        }
        if kappa.iter().any(|&k| !(k > T::zero())) {
            return Err(invalid("kappa must be positive"));
        }
        Ok(Self::Tabulated { lambda, omega, kappa })
    }

    pub fn support(&self) -> (T, T) {
        match self {
            Self::ExponentialSurrogate {
                lambda_min,
                lambda_max,
                ..
            } => (*lambda_min, *lambda_max),
            Self::Tabulated { lambda, .. } => (lambda[0], lambda[lambda.len() - 1]),
        }
    }

    pub fn contains(&self, lambda: T) -> bool {
        let (lo, hi) = self.support();
        lambda.is_finite() && lambda >= lo && lambda <= hi
    }

    pub fn check(&self, lambda: T) -> Result<()> {
        if self.contains(lambda) {
            Ok(())
        } else {
            let (lo, hi) = self.support();
            Err(Error::OutOfSupport {
                value: lambda.to_f64_lossy(),
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            })
        }
    }

    fn segment(lambda: &[T], x: T) -> usize {
        let n = lambda.len();
        match lambda.iter().position(|&l| l > x) {
            Some(0) => 0,
            Some(i) => (i - 1).min(n - 2),
            None => n - 2,
        }
    }

    /// `(Omega, kappa)` at `lambda`. Tables extrapolate linearly; callers
    /// validate the support where it matters.
    pub fn params(&self, lambda: T) -> (T, T) {
        match self {
            Self::ExponentialSurrogate {
                omega_ref,
                kappa_ref,
                lambda_ref,
                decay,
                ..
            } => (
                *omega_ref * (-*decay * (lambda - *lambda_ref) / *lambda_ref).exp(),
                *kappa_ref,
            ),
            Self::Tabulated { lambda: ls, omega, kappa } => {
                let i = Self::segment(ls, lambda);
                let w = (lambda - ls[i]) / (ls[i + 1] - ls[i]);
                (
                    omega[i] + w * (omega[i + 1] - omega[i]),
                    kappa[i] + w * (kappa[i + 1] - kappa[i]),
                )
            }
        }
    }

    pub fn omega(&self, lambda: T) -> T {
        self.params(lambda).0
    }

    pub fn kappa(&self, lambda: T) -> T {
        self.params(lambda).1
    }

    /// `(dOmega/dlambda, dkappa/dlambda)`.
    pub fn derivatives(&self, lambda: T) -> (T, T) {
        match self {
            Self::ExponentialSurrogate {
                lambda_ref, decay, ..
            } => (-*decay / *lambda_ref * self.omega(lambda), T::zero()),
            Self::Tabulated { lambda: ls, omega, kappa } => {
                let i = Self::segment(ls, lambda);
                let dl = ls[i + 1] - ls[i];
                ((omega[i + 1] - omega[i]) / dl, (kappa[i + 1] - kappa[i]) / dl)
            }
        }
    }

    /// `Nkappa/Omega` at `lambda`.
    pub fn charging_ratio(&self, lambda: T, n_atoms: usize) -> T {
        let (o, k) = self.params(lambda);
        T::from_count(n_atoms) * k / o
    }

    /// Map with the same `Omega(lambda)` but flat in `lambda` (used by tests
    /// and penalty-only problems).
    pub fn frozen_at(&self, lambda: T) -> Self {
        let (o, k) = self.params(lambda);
        let (lo, hi) = self.support();
        Self::Tabulated {
            lambda: vec![lo, hi],
            omega: vec![o, o],
            kappa: vec![k, k],
        }
    }
}

/// Control trajectory `lambda(t)` sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRamp<T> {
    pub t0: T,
    pub dt: T,
    pub samples: Vec<T>,
}

impl<T: Real> ControlRamp<T> {
    pub fn new(t0: T, dt: T, samples: Vec<T>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(invalid("control ramp needs at least two samples"));
        }
        if !(dt > T::zero()) || !dt.is_finite() || !t0.is_finite() {
            return Err(invalid("control ramp needs finite t0 and positive dt"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("control ramp contains non-finite samples"));
        }
        Ok(Self { t0, dt, samples })
    }

    /// Samples `f` on `[t0, t_end]` with spacing close to `dt` (adjusted so the
    /// grid ends exactly at `t_end`).
    pub fn from_fn(t0: T, t_end: T, dt: T, f: impl Fn(T) -> T) -> Result<Self> {
        if !(t_end > t0) {
            return Err(invalid("control ramp needs t_end > t0"));
        }
        let (intervals, dt_eff) = crate::two_mode::step_grid(t_end - t0, dt)?;
        let samples = (0..=intervals)
            .map(|i| f(t0 + T::from_count(i) * dt_eff))
            .collect();
        Self::new(t0, dt_eff, samples)
    }

    pub fn linear(t0: T, t_end: T, dt: T, start: T, end: T) -> Result<Self> {
        let span = t_end - t0;
        Self::from_fn(t0, t_end, dt, |t| start + (end - start) * (t - t0) / span)
    }

    pub fn constant(t0: T, t_end: T, dt: T, value: T) -> Result<Self> {
        Self::from_fn(t0, t_end, dt, |_| value)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn intervals(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn t_end(&self) -> T {
        self.t0 + self.dt * T::from_count(self.intervals())
    }

    pub fn time(&self, i: usize) -> T {
        self.t0 + self.dt * T::from_count(i)
    }

    /// Linear interpolation, clamped to the end samples outside the grid.
    pub fn value_at(&self, t: T) -> T {
        let s = (t - self.t0) / self.dt;
        if !(s > T::zero()) {
            return self.samples[0];
        }
        let last = self.intervals();
        let i = s.floor().to_usize().unwrap_or(last).min(last);
        if i >= last {
            return self.samples[last];
        }
        let w = s - T::from_count(i);
        self.samples[i] + w * (self.samples[i + 1] - self.samples[i])
    }

    pub fn first(&self) -> T {
        self.samples[0]
    }

    pub fn last(&self) -> T {
        self.samples[self.intervals()]
    }

    /// Every sample finite and inside the map's support.
    pub fn validate(&self, map: &LambdaMap<T>) -> Result<()> {
        self.samples.iter().try_for_each(|&l| map.check(l))
    }

    /// Drives the two-mode model through `map`.
    pub fn schedule<'a>(&'a self, map: &'a LambdaMap<T>) -> RampSchedule<'a, T> {
        RampSchedule { ramp: self, map }
    }
}

/// `(Omega, kappa)(t) = map(ramp(t))`.
#[derive(Debug, Clone, Copy)]
pub struct RampSchedule<'a, T> {
    pub ramp: &'a ControlRamp<T>,
    pub map: &'a LambdaMap<T>,
}

impl<T: Real> TwoModeSchedule<T> for RampSchedule<'_, T> {
    fn params(&self, t: T) -> (T, T) {
        self.map.params(self.ramp.value_at(t))
    }
}

/// `lambda(t) = lambda0 (1 + amplitude sin(omega_drive (t - t_start)))` on
/// `[t_start, t_end]`. With a map, every sample must lie in its support.
pub fn parametric_drive<T: Real>(
    lambda0: T,
    amplitude: T,
    omega_drive: T,
    t_span: (T, T),
    dt_ctrl: T,
    map: Option<&LambdaMap<T>>,
) -> Result<ControlRamp<T>> {
    if !(amplitude >= T::zero()) {
        return Err(invalid(format!("drive amplitude must be non-negative, got {amplitude}")));
    }
    if !omega_drive.is_finite() || !lambda0.is_finite() {
        return Err(invalid("drive needs finite lambda0 and frequency"));
    }
    let (t_start, t_end) = t_span;
    let ramp = ControlRamp::from_fn(t_start, t_end, dt_ctrl, |t| {
        lambda0 * (T::one() + amplitude * (omega_drive * (t - t_start)).sin())
    })?;
    if let Some(map) = map {
        for extreme in [lambda0 * (T::one() - amplitude), lambda0 * (T::one() + amplitude)] {
            map.check(extreme)?;
        }
    }
    Ok(ramp)
}

/// Result of [`calibrate_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T> {
    pub map: LambdaMap<T>,
    /// `N kappa / Omega` at the reference lambda.
    pub charging_ratio: T,
    pub omega: T,
    pub kappa: T,
    /// Ground-state `xi_S` recomputed from the calibrated parameters.
    pub xi_s: T,
    /// System Josephson frequency in kHz.
    pub josephson_khz: T,
}

/// Ground-state coherent spin squeezing as a function of `Lambda = N kappa / Omega`.
pub fn ground_state_xi_s<T: Real>(charging_ratio: T, n_atoms: usize) -> Result<T> {
    let h = build_hamiltonian(T::one(), charging_ratio / T::from_count(n_atoms), n_atoms)?;
    let (psi, _) = ground_state(&h)?;
    Ok(squeezing_factors(&psi).xi_s)
}

/// Fixes `(Omega, kappa)` at `lambda_ref` so the ground state has
/// `xi_S = target_xi_s` and the system Josephson frequency is `target_fj_khz`.
///
/// `xi_S` of the ground state depends only on `Lambda = N kappa / Omega`, so
/// `Lambda` is found by bisection first and the overall scale afterwards.
pub fn calibrate_map<T: Real>(
    n_atoms: usize,
    target_fj_khz: T,
    target_xi_s: T,
    lambda_ref: T,
    decay: T,
    support: (T, T),
) -> Result<Calibration<T>> {
    if n_atoms < 2 {
        return Err(invalid("calibration needs N >= 2"));
    }
    if !(target_fj_khz > T::zero()) || !(target_xi_s > T::zero()) {
        return Err(invalid("calibration targets must be positive"));
    }
    if !(target_xi_s < T::one()) {
        return Err(Error::CalibrationFailure(format!(
            "target xi_S = {target_xi_s} is not below the binomial value 1"
        )));
    }
    let f = |ratio: T| ground_state_xi_s(ratio, n_atoms);

    let mut lo = T::zero();
    let mut hi = T::one();
    let mut f_hi = f(hi)?;
    let limit = T::lit(1e7);
    while f_hi > target_xi_s {
        lo = hi;
        hi *= T::lit(2.0);
        if hi > limit {
            return Err(Error::CalibrationFailure(format!(
                "no charging ratio up to {limit} reaches xi_S = {target_xi_s}"
            )));
        }
        f_hi = f(hi)?;
    }
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? > target_xi_s {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= T::epsilon() * T::lit(4.0) * hi {
            break;
        }
    }
    let ratio = T::lit(0.5) * (lo + hi);
    let xi_s = f(ratio)?;
    let tol = T::lit(1e-6).max(T::epsilon().sqrt());
    if ((xi_s - target_xi_s) / target_xi_s).abs() > tol {
        return Err(Error::CalibrationFailure(format!(
            "bisection closed at xi_S = {xi_s}, target {target_xi_s}"
        )));
    }
    let omega_j = angular_from_khz(target_fj_khz);
    let omega = omega_j / (T::one() + T::lit(2.0) * ratio).sqrt();
    let kappa = ratio * omega / T::from_count(n_atoms);
    let map = LambdaMap::exponential(omega, kappa, lambda_ref, decay, support)?;
    let josephson_khz = khz_from_angular(system_josephson_frequency(omega, kappa, n_atoms));
    Ok(Calibration {
        map,
        charging_ratio: ratio,
        omega,
        kappa,
        xi_s,
        josephson_khz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn josephson_examples() {
        assert_eq!(josephson_frequency(1.0f64, 1.0), 2.0);
        assert_eq!(josephson_frequency(0.0f64, 3.0), 0.0);
        assert_eq!(josephson_frequency(4.0f64, 1.0), 4.0);
    }

    #[test]
    fn oscillator_params_consistent() {
        let (m, k) = effective_oscillator_params(1.0f64, 1.0).unwrap();
        assert_eq!((m, k), (1.0, 4.0));
        assert_eq!((k / m).sqrt(), 2.0);
        assert!(effective_oscillator_params(0.0f64, 1.0).is_err());
    }

    #[test]
    fn system_frequency_is_plasma_frequency() {
        let (o, k, n) = (0.7f64, 0.002, 500);
        let expected = (o * (o + 2.0 * n as f64 * k)).sqrt();
        assert_abs_diff_eq!(system_josephson_frequency(o, k, n), expected, epsilon = 1e-14);
    }

    #[test]
    fn drive_amplitudes() {
        for amp in [0.0, 0.01, 0.05] {
            let r = parametric_drive(0.7f64, amp, 2.0, (0.0, 20.0), 1e-3, None).unwrap();
            let peak = r.samples.iter().map(|l| (l - 0.7).abs()).fold(0.0, f64::max);
            assert_abs_diff_eq!(peak, 0.7 * amp, epsilon = 1e-9);
            assert_eq!(r.first(), 0.7);
        }
        assert!(parametric_drive(0.7f64, -0.1, 2.0, (0.0, 1.0), 1e-3, None).is_err());
        let map = LambdaMap::exponential(1.0, 0.01, 0.7, 8.0, (0.6, 0.8)).unwrap();
        assert!(parametric_drive(0.7f64, 0.2, 2.0, (0.0, 1.0), 1e-3, Some(&map)).is_err());
    }

    #[test]
    fn surrogate_is_monotone() {
        let map = LambdaMap::exponential(0.5f64, 0.001, 0.7, 8.0, (0.0, 1.4)).unwrap();
        let ls: Vec<f64> = (0..=140).map(|i| i as f64 * 0.01).collect();
        assert!(ls.windows(2).all(|w| map.omega(w[1]) < map.omega(w[0])));
        let (d, _) = map.derivatives(0.9);
        let fd = (map.omega(0.9 + 1e-6) - map.omega(0.9 - 1e-6)) / 2e-6;
        assert_abs_diff_eq!(d, fd, epsilon = 1e-8);
    }

    #[test]
    fn tabulated_map_validation_and_interp() {
        assert!(LambdaMap::tabulated(vec![0.0, 1.0], vec![1.0, 2.0], vec![1.0, 1.0]).is_err());
        let m = LambdaMap::tabulated(vec![0.0, 1.0, 2.0], vec![3.0, 2.0, 0.5], vec![1.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.params(0.5), (2.5, 1.0));
        assert_eq!(m.params(1.5), (1.25, 1.5));
        assert_eq!(m.derivatives(1.5), (-1.5, 1.0));
        assert!(m.check(2.5).is_err());
    }

    #[test]
    fn ramp_interpolation() {
        let r = ControlRamp::linear(1.0f64, 3.0, 0.5, 0.0, 4.0).unwrap();
        assert_eq!(r.len(), 5);
        assert_abs_diff_eq!(r.value_at(1.25), 0.5, epsilon = 1e-15);
        assert_eq!(r.value_at(0.0), 0.0);
        assert_eq!(r.value_at(10.0), 4.0);
        assert_eq!(r.t_end(), 3.0);
    }

    #[test]
    fn calibration_rejects_unreachable_target() {
        assert!(matches!(
            calibrate_map(100, 0.22f64, 1.0, 0.7, 8.0, (0.0, 1.4)),
            Err(Error::CalibrationFailure(_))
        ));
        assert!(calibrate_map(1, 0.22f64, 0.5, 0.7, 8.0, (0.0, 1.4)).is_err());
    }
}
