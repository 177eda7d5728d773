//! Two-mode (left/right well) many-body model in the atom-number-imbalance
//! Fock basis.
//!
//! Basis index `k = 0..=N` corresponds to the imbalance `n = k - N/2`, so
//! `k = N` is the state with every atom in the left well. The collective spin
//! has length `j = N/2` and `J+` raises `k` by one with matrix element
//! `sqrt((N - k)(k + 1))`.
//!
//! Units: hbar = 1, energies in rad/ms, times in ms.

use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::linalg::{cayley_apply, cayley_solve, SymTridiagonal, Tridiagonal};
use crate::scalar::{czero, inner, ln_binomial, norm_sqr, Real};

/// Anything that acts linearly on two-mode coefficient vectors.
pub trait Operator<T: Real> {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]);

    fn apply(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut out = vec![czero(); x.len()];
        self.apply_into(x, &mut out);
        out
    }
}

/// Imbalance `n = k - N/2` of basis index `k`.
#[inline]
pub fn imbalance<T: Real>(n_atoms: usize, k: usize) -> T {
    T::from_count(k) - T::from_count(n_atoms) * T::lit(0.5)
}

/// `<k+1| J+ |k>` for spin `j = N/2`.
#[inline]
pub fn ladder<T: Real>(n_atoms: usize, k: usize) -> T {
    (T::from_count(n_atoms - k) * T::from_count(k + 1)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpinKind {
    Jx,
    Jy,
    Jz,
    Jz2,
}

/// Pseudo-spin operator stored as a (possibly diagonal) tridiagonal table.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperator<T> {
    kind: SpinKind,
    n_atoms: usize,
    matrix: Tridiagonal<T>,
}

/// Builds `Jx`, `Jy`, `Jz` or `Jz^2` for `n_atoms` bosons.
pub fn build_spin_operator<T: Real>(kind: SpinKind, n_atoms: usize) -> Result<SpinOperator<T>> {
    if n_atoms == 0 {
        return Err(invalid("spin operator needs at least one atom"));
    }
    let dim = n_atoms + 1;
    let half = T::lit(0.5);
    let zero = czero();
    let (lower, diag, upper) = match kind {
        SpinKind::Jx => {
            let l: Vec<_> = (0..n_atoms)
                .map(|k| Complex::new(half * ladder::<T>(n_atoms, k), T::zero()))
                .collect();
            (l.clone(), vec![zero; dim], l)
        }
        SpinKind::Jy => {
            // Jy = (J+ - J-) / 2i
            let l: Vec<_> = (0..n_atoms)
                .map(|k| Complex::new(T::zero(), -half * ladder::<T>(n_atoms, k)))
                .collect();
            let u = l.iter().map(|z| z.conj()).collect();
            (l, vec![zero; dim], u)
        }
        SpinKind::Jz => (
            vec![zero; n_atoms],
            (0..dim)
                .map(|k| Complex::new(imbalance::<T>(n_atoms, k), T::zero()))
                .collect(),
            vec![zero; n_atoms],
        ),
        SpinKind::Jz2 => (
            vec![zero; n_atoms],
            (0..dim)
                .map(|k| {
                    let m = imbalance::<T>(n_atoms, k);
                    Complex::new(m * m, T::zero())
                })
                .collect(),
            vec![zero; n_atoms],
        ),
    };
    Ok(SpinOperator {
        kind,
        n_atoms,
        matrix: Tridiagonal { lower, diag, upper },
    })
}

impl<T: Real> SpinOperator<T> {
    pub fn kind(&self) -> SpinKind {
        self.kind
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn matrix(&self) -> &Tridiagonal<T> {
        &self.matrix
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.kind, SpinKind::Jz | SpinKind::Jz2)
    }
}

impl<T: Real> Operator<T> for SpinOperator<T> {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn apply_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        self.matrix.apply_into(x, out)
    }
}

/// `H = -Omega Jx + 2 kappa Jz^2` as a real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeHamiltonian<T> {
    omega: T,
    kappa: T,
    n_atoms: usize,
    matrix: SymTridiagonal<T>,
}

pub fn build_hamiltonian<T: Real>(omega: T, kappa: T, n_atoms: usize) -> Result<TwoModeHamiltonian<T>> {
    TwoModeHamiltonian::new(omega, kappa, n_atoms)
}

impl<T: Real> TwoModeHamiltonian<T> {
    pub fn new(omega: T, kappa: T, n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(invalid("Hamiltonian needs at least one atom"));
        }
        if omega.is_nan() || kappa.is_nan() {
            return Err(invalid("NaN tunneling or charging energy"));
        }
        if omega < T::zero() || kappa < T::zero() {
            return Err(invalid(format!(
                "tunneling ({omega}) and charging ({kappa}) energies must be non-negative"
            )));
        }
        let two = T::lit(2.0);
        let diag = (0..=n_atoms)
            .map(|k| {
                let m = imbalance::<T>(n_atoms, k);
                two * kappa * m * m
            })
            .collect();
        let off = (0..n_atoms)
            .map(|k| -omega * T::lit(0.5) * ladder::<T>(n_atoms, k))
            .collect();
        Ok(Self {
            omega,
            kappa,
            n_atoms,
            matrix: SymTridiagonal::new(diag, off)?,
        })
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn matrix(&self) -> &SymTridiagonal<T> {
        &self.matrix
    }

    pub fn diag(&self) -> &[T] {
        &self.matrix.diag
    }

    pub fn offdiag(&self) -> &[T] {
        &self.matrix.off
    }

    pub fn spectral_bound(&self) -> T {
        self.matrix.spectral_bound()
    }
}

impl<T: Real> Operator<T> for TwoModeHamiltonian<T> {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn apply_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        self.matrix.apply_into(x, out)
    }
}

/// Normalized coefficient vector over the imbalance basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ManyBodyState<T> {
    amplitudes: Vec<Complex<T>>,
    time: T,
}

impl<T: Real> ManyBodyState<T> {
    /// Wraps amplitudes that are already unit-norm (checked).
    pub fn new(amplitudes: Vec<Complex<T>>, time: T) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(invalid("state needs at least two amplitudes (N >= 1)"));
        }
        let norm = norm_sqr(&amplitudes).sqrt();
        if !norm.is_finite() || (norm - T::one()).abs() > T::norm_tolerance() {
            return Err(invalid(format!("state norm {norm} is not 1")));
        }
        Ok(Self { amplitudes, time })
    }

    /// Normalizes arbitrary non-zero amplitudes.
    pub fn normalized(mut amplitudes: Vec<Complex<T>>, time: T) -> Result<Self> {
        let norm = norm_sqr(&amplitudes).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(invalid("cannot normalize a zero or non-finite vector"));
        }
        amplitudes.iter_mut().for_each(|z| *z = *z / norm);
        Self::new(amplitudes, time)
    }

    /// Fock state `|k>` (basis index, imbalance `k - N/2`).
    pub fn fock(n_atoms: usize, k: usize) -> Result<Self> {
        if n_atoms == 0 || k > n_atoms {
            return Err(invalid(format!("no Fock index {k} for N = {n_atoms}")));
        }
        let mut a = vec![czero(); n_atoms + 1];
        a[k] = Complex::new(T::one(), T::zero());
        Self::new(a, T::zero())
    }

    /// Binomial state: the spin-coherent state along +x (ground state at kappa = 0).
    pub fn binomial(n_atoms: usize) -> Result<Self> {
        Self::coherent(n_atoms, T::FRAC_PI_2(), T::zero())
    }

    /// Spin-coherent state pointing at polar angle `theta` (from the
    /// all-left pole) and azimuth `phi`.
    pub fn coherent(n_atoms: usize, theta: T, phi: T) -> Result<Self> {
        if n_atoms == 0 {
            return Err(invalid("coherent state needs at least one atom"));
        }
        let amps = coherent_amplitudes(n_atoms, theta, phi);
        Self::normalized(amps, T::zero())
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex<T>> {
        self.amplitudes
    }

    pub fn n_atoms(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn with_time(mut self, time: T) -> Self {
        self.time = time;
        self
    }

    pub fn norm(&self) -> T {
        norm_sqr(&self.amplitudes).sqrt()
    }

    /// Rotates the global phase so the largest-magnitude amplitude is real positive.
    pub fn fix_global_phase(&mut self) {
        let pivot = self
            .amplitudes
            .iter()
            .copied()
            .fold(czero::<T>(), |m, z| if z.norm_sqr() > m.norm_sqr() { z } else { m });
        if pivot.norm() > T::zero() {
            let phase = pivot.conj() / pivot.norm();
            self.amplitudes.iter_mut().for_each(|z| *z = *z * phase);
        }
    }

    /// Casts to another scalar width.
    pub fn cast<U: Real>(&self) -> ManyBodyState<U> {
        ManyBodyState {
            amplitudes: self
                .amplitudes
                .iter()
                .map(|z| Complex::new(U::lit(z.re.to_f64_lossy()), U::lit(z.im.to_f64_lossy())))
                .collect(),
            time: U::lit(self.time.to_f64_lossy()),
        }
    }
}

/// Unnormalized-safe spin-coherent amplitudes `b_k e^{-i m phi}`, with
/// `b_k = sqrt(C(N,k)) cos(theta/2)^k sin(theta/2)^(N-k)` built in log space.
pub fn coherent_amplitudes<T: Real>(n_atoms: usize, theta: T, phi: T) -> Vec<Complex<T>> {
    let half = theta.to_f64_lossy() * 0.5;
    let (c, s) = (half.cos().abs(), half.sin().abs());
    let (sign_c, sign_s) = (half.cos().signum(), half.sin().signum());
    let (lc, ls) = (c.ln(), s.ln());
    (0..=n_atoms)
        .map(|k| {
            let up = k as f64;
            let down = (n_atoms - k) as f64;
            let mut ln_mag = 0.5 * ln_binomial(n_atoms, k);
            if k > 0 {
                ln_mag += up * lc;
            }
            if n_atoms > k {
                ln_mag += down * ls;
            }
            let mag = if ln_mag.is_finite() { ln_mag.exp() } else { 0.0 };
            let sign = sign_c.powi(k as i32) * sign_s.powi((n_atoms - k) as i32);
            let m: T = imbalance(n_atoms, k);
            Complex::from_polar(T::lit(mag * sign), -m * phi)
        })
        .collect()
}

/// Lowest eigenpair of `H`; the state's largest amplitude is real positive.
///
/// The residual satisfies `||H psi - E psi|| < 1e-10 ||H||` (f64).
pub fn ground_state<T: Real>(h: &TwoModeHamiltonian<T>) -> Result<(ManyBodyState<T>, T)> {
    let (energy, vec) = h.matrix().eigenpair(0)?;
    let amps = vec.into_iter().map(|v| Complex::new(v, T::zero())).collect();
    let mut state = ManyBodyState::normalized(amps, T::zero())?;
    state.fix_global_phase();
    Ok((state, energy))
}

fn check_dim<T: Real>(state: &ManyBodyState<T>, dim: usize) -> Result<()> {
    if state.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: state.dim(),
        });
    }
    Ok(())
}

/// `<psi|A|psi>` with its imaginary residue.
pub fn expectation_complex<T: Real, A: Operator<T> + ?Sized>(
    state: &ManyBodyState<T>,
    op: &A,
) -> Result<Complex<T>> {
    check_dim(state, op.dim())?;
    let a_psi = op.apply(state.amplitudes());
    Ok(inner(state.amplitudes(), &a_psi))
}

/// Real expectation value of a Hermitian operator. An imaginary residue above
/// `1e-10` is logged as a diagnostic.
pub fn expectation<T: Real, A: Operator<T> + ?Sized>(state: &ManyBodyState<T>, op: &A) -> Result<T> {
    let z = expectation_complex(state, op)?;
    if z.im.abs() > T::lit(1e-10).max(T::epsilon() * T::lit(1e3)) * (T::one() + z.re.abs()) {
        log::warn!("expectation value has imaginary residue {}", z.im);
    }
    Ok(z.re)
}

/// `<A^2> - <A>^2` for Hermitian `A`, using `<A^2> = ||A psi||^2`.
pub fn variance<T: Real, A: Operator<T> + ?Sized>(state: &ManyBodyState<T>, op: &A) -> Result<T> {
    check_dim(state, op.dim())?;
    let a_psi = op.apply(state.amplitudes());
    let mean = inner(state.amplitudes(), &a_psi).re;
    Ok(norm_sqr(&a_psi) - mean * mean)
}

/// Time-dependent `(Omega(t), kappa(t))`.
pub trait TwoModeSchedule<T> {
    fn params(&self, t: T) -> (T, T);
}

impl<T, F> TwoModeSchedule<T> for F
where
    F: Fn(T) -> (T, T),
{
    fn params(&self, t: T) -> (T, T) {
        self(t)
    }
}

/// Constant `(Omega, kappa)`.
#[derive(Debug, Clone, Copy)]
pub struct Static<T>(pub T, pub T);

impl<T: Copy> TwoModeSchedule<T> for Static<T> {
    fn params(&self, _t: T) -> (T, T) {
        (self.0, self.1)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions<T> {
    /// Nominal step; adjusted down so an integer number of steps fits the span.
    pub dt: T,
    /// Record every `record_every`-th step (0 keeps only the final state).
    pub record_every: usize,
}

impl<T: Real> Default for EvolveOptions<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(1e-3),
            record_every: 1,
        }
    }
}

/// Non-fatal propagation diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvolveDiagnostics {
    pub steps: usize,
    pub dt: f64,
    /// Set when `dt` exceeded `1 / (10 ||H||)` at some step.
    pub step_guard_exceeded: bool,
    pub max_spectral_bound: f64,
    pub max_norm_drift: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub states: Vec<ManyBodyState<T>>,
    pub diagnostics: EvolveDiagnostics,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &ManyBodyState<T> {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

/// Crank-Nicolson propagator with reusable scratch buffers.
///
/// One step solves `(1 + i dt/2 H) psi' = (1 - i dt/2 H) psi` with `H` sampled at
/// the step midpoint.
#[derive(Debug, Clone)]
pub struct CrankNicolson<T> {
    n_atoms: usize,
    rhs: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> CrankNicolson<T> {
    pub fn new(n_atoms: usize) -> Self {
        Self {
            n_atoms,
            rhs: vec![czero(); n_atoms + 1],
            scratch: Vec::with_capacity(n_atoms + 1),
        }
    }

    /// Advances `psi` in place by `dt` under the fixed Hamiltonian `h`.
    pub fn step(&mut self, h: &TwoModeHamiltonian<T>, dt: T, psi: &mut [Complex<T>]) {
        debug_assert_eq!(h.n_atoms(), self.n_atoms);
        let z = Complex::new(T::zero(), dt * T::lit(0.5));
        cayley_apply(h.matrix(), -z, psi, &mut self.rhs);
        cayley_solve(h.matrix(), z, &self.rhs, psi, &mut self.scratch);
    }

    /// Applies the adjoint of one step, `(1 + i dt/2 H)(1 - i dt/2 H)^{-1}`, to
    /// `chi` in place. Returns the intermediate `(1 - i dt/2 H)^{-1} chi`.
    pub fn adjoint_step(
        &mut self,
        h: &TwoModeHamiltonian<T>,
        dt: T,
        chi: &mut [Complex<T>],
    ) -> Vec<Complex<T>> {
        let z = Complex::new(T::zero(), dt * T::lit(0.5));
        let mut eta = vec![czero(); chi.len()];
        cayley_solve(h.matrix(), -z, chi, &mut eta, &mut self.scratch);
        cayley_apply(h.matrix(), z, &eta, chi);
        eta
    }
}

/// Number of steps and the adjusted step for covering `span` with nominal `dt`.
pub fn step_grid<T: Real>(span: T, dt: T) -> Result<(usize, T)> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    if span < T::zero() || !span.is_finite() {
        return Err(invalid(format!("time span must be non-negative, got {span}")));
    }
    let steps = (span / dt).ceil().to_usize().unwrap_or(0);
    let steps = if steps == 0 && span > T::zero() { 1 } else { steps };
    let dt_eff = if steps == 0 { dt } else { span / T::from_count(steps) };
    Ok((steps, dt_eff))
}

/// Propagates from `state.time()` to `t_end`, calling `observer` on the initial
/// state and after every step.
pub fn evolve_with<T, S, F>(
    state: &ManyBodyState<T>,
    schedule: &S,
    t_end: T,
    dt: T,
    mut observer: F,
) -> Result<(ManyBodyState<T>, EvolveDiagnostics)>
where
    T: Real,
    S: TwoModeSchedule<T> + ?Sized,
    F: FnMut(usize, &ManyBodyState<T>),
{
    let n_atoms = state.n_atoms();
    let (steps, dt_eff) = step_grid(t_end - state.time(), dt)?;
    let mut diag = EvolveDiagnostics {
        steps,
        dt: dt_eff.to_f64_lossy(),
        ..Default::default()
    };
    let mut cn = CrankNicolson::new(n_atoms);
    let mut psi = state.clone();
    observer(0, &psi);
    let t0 = state.time();
    let half = T::lit(0.5);
    for s in 0..steps {
        let t_mid = t0 + (T::from_count(s) + half) * dt_eff;
        let (omega, kappa) = schedule.params(t_mid);
        let h = TwoModeHamiltonian::new(omega, kappa, n_atoms)?;
        let bound = h.spectral_bound();
        diag.max_spectral_bound = diag.max_spectral_bound.max(bound.to_f64_lossy());
        if dt_eff * bound * T::lit(10.0) > T::one() {
            if !diag.step_guard_exceeded {
                log::debug!(
                    "dt = {} exceeds 1/(10 ||H||) = {} at t = {}",
                    dt_eff,
                    T::one() / (T::lit(10.0) * bound),
                    t_mid
                );
            }
            diag.step_guard_exceeded = true;
        }
        cn.step(&h, dt_eff, &mut psi.amplitudes);
        psi.time = t0 + T::from_count(s + 1) * dt_eff;
        let drift = (psi.norm() - T::one()).abs().to_f64_lossy();
        diag.max_norm_drift = diag.max_norm_drift.max(drift);
        if !drift.is_finite() {
            return Err(Error::Numerical(format!("propagation diverged at t = {}", psi.time)));
        }
        observer(s + 1, &psi);
    }
    Ok((psi, diag))
}

/// Propagates and records states every `opts.record_every` steps (the initial
/// and final states are always kept).
pub fn evolve<T, S>(
    state: &ManyBodyState<T>,
    schedule: &S,
    t_end: T,
    opts: EvolveOptions<T>,
) -> Result<Trajectory<T>>
where
    T: Real,
    S: TwoModeSchedule<T> + ?Sized,
{
    let mut states = Vec::new();
    let every = opts.record_every;
    let (last, diagnostics) = evolve_with(state, schedule, t_end, opts.dt, |s, psi| {
        if s == 0 || (every > 0 && s % every == 0) {
            states.push(psi.clone());
        }
    })?;
    if states.last().map(|p| p.time() != last.time()).unwrap_or(true) {
        states.push(last);
    }
    Ok(Trajectory { states, diagnostics })
}

/// Step-doubling self-test: distance between the final states obtained with
/// `dt` and `dt / 2`. Crank-Nicolson is second order, so the true error of the
/// `dt` run is about `4/3` of this value.
pub fn convergence_check<T, S>(state: &ManyBodyState<T>, schedule: &S, t_end: T, dt: T) -> Result<T>
where
    T: Real,
    S: TwoModeSchedule<T> + ?Sized,
{
    let (coarse, _) = evolve_with(state, schedule, t_end, dt, |_, _| {})?;
    let (fine, _) = evolve_with(state, schedule, t_end, dt * T::lit(0.5), |_, _| {})?;
    Ok(crate::scalar::distance(coarse.amplitudes(), fine.amplitudes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jz_diagonal_for_four_atoms() {
        let jz = build_spin_operator::<f64>(SpinKind::Jz, 4).unwrap();
        let d: Vec<f64> = jz.matrix().diag.iter().map(|z| z.re).collect();
        assert_eq!(d, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn jx_two_atoms_ladder() {
        let jx = build_spin_operator::<f64>(SpinKind::Jx, 2).unwrap();
        for z in jx.matrix().lower.iter().chain(&jx.matrix().upper) {
            assert_abs_diff_eq!(z.re, 2f64.sqrt() / 2.0, epsilon = 1e-15);
            assert_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn zero_atoms_rejected() {
        assert!(build_spin_operator::<f64>(SpinKind::Jx, 0).is_err());
        assert!(build_hamiltonian::<f64>(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn hamiltonian_examples() {
        let h = build_hamiltonian(0.0, 1.0, 4).unwrap();
        assert_eq!(h.diag(), &[8.0, 2.0, 0.0, 2.0, 8.0]);
        assert!(h.offdiag().iter().all(|&v| v == 0.0));

        let h = build_hamiltonian(1.0, 0.0, 2).unwrap();
        for &v in h.offdiag() {
            assert_abs_diff_eq!(v, -(2f64.sqrt()) / 2.0, epsilon = 1e-15);
        }
        assert!(build_hamiltonian(0.0f64, 0.0, 3).is_ok());
        assert!(build_hamiltonian(f64::NAN, 0.0, 3).is_err());
        assert!(build_hamiltonian(-1.0f64, 0.0, 3).is_err());
    }

    #[test]
    fn ground_state_decoupled_is_balanced_fock() {
        let h = build_hamiltonian(0.0, 1.5, 6).unwrap();
        let (psi, e) = ground_state(&h).unwrap();
        assert_abs_diff_eq!(e, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(psi.amplitudes()[3].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ground_state_without_interaction_is_binomial() {
        let n = 40;
        let h = build_hamiltonian(0.8, 0.0, n).unwrap();
        let (psi, _) = ground_state(&h).unwrap();
        for k in 0..=n {
            let expected = (0.5 * ln_binomial(n, k) - 0.5 * n as f64 * 2f64.ln()).exp();
            assert_abs_diff_eq!(psi.amplitudes()[k].re, expected, epsilon = 1e-10);
        }
        let jz = build_spin_operator(SpinKind::Jz, n).unwrap();
        assert_abs_diff_eq!(variance(&psi, &jz).unwrap().sqrt(), (n as f64).sqrt() / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn binomial_state_moments() {
        let psi = ManyBodyState::<f64>::binomial(30).unwrap();
        let jz = build_spin_operator(SpinKind::Jz, 30).unwrap();
        assert_abs_diff_eq!(expectation(&psi, &jz).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(variance(&psi, &jz).unwrap(), 7.5, epsilon = 1e-10);
        let jz2 = build_spin_operator(SpinKind::Jz2, 30).unwrap();
        let balanced = ManyBodyState::<f64>::fock(30, 15).unwrap();
        assert_eq!(expectation(&balanced, &jz2).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let psi = ManyBodyState::<f64>::binomial(4).unwrap();
        let jz = build_spin_operator(SpinKind::Jz, 5).unwrap();
        assert!(matches!(
            expectation(&psi, &jz),
            Err(Error::DimensionMismatch { expected: 6, got: 5 })
        ));
    }

    #[test]
    fn rabi_rotation_of_all_left_state() {
        let n = 12;
        let omega = 1.3;
        let psi = ManyBodyState::<f64>::fock(n, n).unwrap();
        let jz = build_spin_operator(SpinKind::Jz, n).unwrap();
        let traj = evolve(
            &psi,
            &Static(omega, 0.0),
            2.0,
            EvolveOptions { dt: 2e-4, record_every: 500 },
        )
        .unwrap();
        for s in &traj.states {
            let expected = 0.5 * n as f64 * (omega * s.time()).cos();
            assert_abs_diff_eq!(expectation(s, &jz).unwrap(), expected, epsilon = 1e-5);
        }
    }

    #[test]
    fn step_grid_rounds_up() {
        let (steps, dt) = step_grid(1.0, 0.3).unwrap();
        assert_eq!(steps, 4);
        assert_abs_diff_eq!(dt, 0.25);
        assert!(step_grid(1.0, 0.0).is_err());
        assert_eq!(step_grid(0.0, 0.1).unwrap().0, 0);
    }

    #[test]
    fn large_step_sets_guard_flag() {
        let psi = ManyBodyState::<f64>::binomial(50).unwrap();
        let (_, diag) = evolve_with(&psi, &Static(1.0, 1.0), 0.1, 0.05, |_, _| {}).unwrap();
        assert!(diag.step_guard_exceeded);
        let (_, diag) = evolve_with(&psi, &Static(0.1, 0.0), 0.1, 1e-3, |_, _| {}).unwrap();
        assert!(!diag.step_guard_exceeded);
    }

    #[test]
    fn f32_instance_runs() {
        let h = build_hamiltonian::<f32>(1.0, 0.01, 20).unwrap();
        let (psi, _) = ground_state(&h).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-5);
        let (out, _) = evolve_with(&psi, &Static(1.0f32, 0.01), 0.5, 1e-2, |_, _| {}).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-4);
    }
}
