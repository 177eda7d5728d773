//! Gradient-based optimal control of the trapping ramp.
//!
//! The objective is `J = <Jz^2> + (gamma/N) <H(lambda(T))> + (nu/2) sum (dlambda/dt)^2 dt`,
//! evaluated on the discretized Crank-Nicolson propagation, and its gradient is
//! the exact derivative of that discrete objective (discretize, then
//! differentiate).

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::bloch::squeezing_factors;
use crate::error::{invalid, Error, Result};
use crate::nelder_mead::{self, NelderMeadOptions};
use crate::scalar::{czero, inner, Real};
use crate::schedules::{ControlRamp, LambdaMap};
use crate::two_mode::{
    expectation, imbalance, step_grid, CrankNicolson, ManyBodyState, Operator, TwoModeHamiltonian,
};

/// `<Jz^2> + (gamma/N) <H>`.
pub fn terminal_cost<T: Real>(
    state: &ManyBodyState<T>,
    hamiltonian: &TwoModeHamiltonian<T>,
    gamma: T,
) -> Result<T> {
    let n = state.n_atoms();
    if hamiltonian.n_atoms() != n {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: hamiltonian.dim(),
        });
    }
    let jz2 = jz2_expectation(state.amplitudes(), n);
    if gamma == T::zero() {
        return Ok(jz2);
    }
    Ok(jz2 + gamma / T::from_count(n) * expectation(state, hamiltonian)?)
}

fn jz2_expectation<T: Real>(c: &[Complex<T>], n: usize) -> T {
    c.iter()
        .enumerate()
        .map(|(k, a)| {
            let m: T = imbalance(n, k);
            m * m * a.norm_sqr()
        })
        .sum()
}

/// `(nu/2) sum_i ((lambda_{i+1} - lambda_i)/dt)^2 dt`.
pub fn smoothness_penalty<T: Real>(ramp: &ControlRamp<T>, nu: T) -> T {
    let dt = ramp.dt;
    let s: T = ramp
        .samples
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]) / dt;
            d * d * dt
        })
        .sum();
    nu * T::lit(0.5) * s
}

/// Gradient of [`smoothness_penalty`] with respect to each sample:
/// `nu (2 lambda_j - lambda_{j-1} - lambda_{j+1}) / dt`, i.e. `-nu dt` times the
/// discrete second derivative. End samples get the one-sided term.
pub fn penalty_gradient<T: Real>(ramp: &ControlRamp<T>, nu: T) -> Vec<T> {
    let l = &ramp.samples;
    let m = l.len();
    let scale = nu / ramp.dt;
    (0..m)
        .map(|j| {
            let mut g = T::zero();
            if j > 0 {
                g += l[j] - l[j - 1];
            }
            if j + 1 < m {
                g += l[j] - l[j + 1];
            }
            scale * g
        })
        .collect()
}

/// Trapping-stage optimal control problem.
#[derive(Debug, Clone)]
pub struct OctProblem<T> {
    /// State at `ramp.t0`.
    pub initial: ManyBodyState<T>,
    pub map: LambdaMap<T>,
    /// Current iterate; its end samples are the boundary conditions.
    pub ramp: ControlRamp<T>,
    pub gamma: T,
    pub nu: T,
    /// Nominal propagation step.
    pub dt: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective<T> {
    pub terminal: T,
    pub penalty: T,
    pub total: T,
}

impl<T: Real> OctProblem<T> {
    pub fn new(
        initial: ManyBodyState<T>,
        map: LambdaMap<T>,
        ramp: ControlRamp<T>,
        gamma: T,
        nu: T,
        dt: T,
    ) -> Result<Self> {
        if !(gamma >= T::zero()) || !(nu >= T::zero()) {
            return Err(invalid(format!("gamma ({gamma}) and nu ({nu}) must be non-negative")));
        }
        ramp.validate(&map)?;
        step_grid(ramp.t_end() - ramp.t0, dt)?;
        Ok(Self {
            initial,
            map,
            ramp,
            gamma,
            nu,
            dt,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.initial.n_atoms()
    }

    pub fn boundary(&self) -> (T, T) {
        (self.ramp.first(), self.ramp.last())
    }

    /// Same problem with a different ramp (boundary values taken from `ramp`).
    pub fn with_ramp(&self, ramp: ControlRamp<T>) -> Self {
        Self {
            ramp,
            ..self.clone()
        }
    }

    pub fn terminal_hamiltonian(&self, ramp: &ControlRamp<T>) -> Result<TwoModeHamiltonian<T>> {
        let (o, k) = self.map.params(ramp.last());
        TwoModeHamiltonian::new(o, k, self.n_atoms())
    }

    /// Final state after propagating `initial` under `ramp`.
    pub fn propagate(&self, ramp: &ControlRamp<T>) -> Result<ManyBodyState<T>> {
        Ok(self.forward(ramp, false)?.0)
    }

    /// Objective of the current ramp.
    pub fn objective(&self) -> Result<Objective<T>> {
        self.objective_of(&self.ramp)
    }

    pub fn objective_of(&self, ramp: &ControlRamp<T>) -> Result<Objective<T>> {
        let psi = self.propagate(ramp)?;
        let terminal = terminal_cost(&psi, &self.terminal_hamiltonian(ramp)?, self.gamma)?;
        let penalty = smoothness_penalty(ramp, self.nu);
        Ok(Objective {
            terminal,
            penalty,
            total: terminal + penalty,
        })
    }

    /// Gradient of the total objective at the current ramp.
    pub fn gradient(&self) -> Result<Vec<T>> {
        Ok(self.objective_and_gradient(&self.ramp)?.1)
    }

    /// Objective and its gradient with respect to every ramp sample. The end
    /// entries are zero because the boundary values are fixed.
    pub fn objective_and_gradient(&self, ramp: &ControlRamp<T>) -> Result<(Objective<T>, Vec<T>)> {
        let n = self.n_atoms();
        let (last, states, grid) = self.forward(ramp, true)?;
        let h_t = self.terminal_hamiltonian(ramp)?;
        let terminal = terminal_cost(&last, &h_t, self.gamma)?;
        let penalty = smoothness_penalty(ramp, self.nu);

        // chi_S = dJ_T / d<psi_S| = (Jz^2 + gamma/N H_T) psi_S
        let psi_t = last.amplitudes();
        let mut chi: Vec<Complex<T>> = psi_t
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let m: T = imbalance(n, k);
                *a * (m * m)
            })
            .collect();
        if self.gamma != T::zero() {
            let hpsi = h_t.apply(psi_t);
            let w = self.gamma / T::from_count(n);
            for (c, h) in chi.iter_mut().zip(hpsi) {
                *c += h * w;
            }
        }

        let mut grad = vec![T::zero(); ramp.len()];
        let mut cn = CrankNicolson::new(n);
        let mut dh_psi = vec![czero::<T>(); n + 1];
        let mut sum = vec![czero::<T>(); n + 1];
        let eps = grid.dt * T::lit(0.5);
        let two = T::lit(2.0);
        for s in (0..grid.steps).rev() {
            let t_mid = grid.mid(s);
            let lambda = ramp.value_at(t_mid);
            let (omega, kappa) = self.map.params(lambda);
            let h = TwoModeHamiltonian::new(omega, kappa, n)?;
            let eta = cn.adjoint_step(&h, grid.dt, &mut chi);
            for ((o, a), b) in sum.iter_mut().zip(&states[s]).zip(&states[s + 1]) {
                *o = *a + *b;
            }
            let (d_omega, d_kappa) = self.map.derivatives(lambda);
            apply_dh(n, d_omega, d_kappa, &sum, &mut dh_psi);
            // g = 2 Re(-i eps <eta|dH|psi_s + psi_{s+1}>) = 2 eps Im<eta|...>
            let g = two * eps * inner(&eta, &dh_psi).im;
            let (i, w) = interp_weights(ramp, t_mid);
            grad[i] += g * (T::one() - w);
            if w != T::zero() {
                grad[i + 1] += g * w;
            }
        }
        for (g, p) in grad.iter_mut().zip(penalty_gradient(ramp, self.nu)) {
            *g += p;
        }
        let last_index = grad.len() - 1;
        grad[0] = T::zero();
        grad[last_index] = T::zero();
        Ok((
            Objective {
                terminal,
                penalty,
                total: terminal + penalty,
            },
            grad,
        ))
    }

    fn forward(
        &self,
        ramp: &ControlRamp<T>,
        keep: bool,
    ) -> Result<(ManyBodyState<T>, Vec<Vec<Complex<T>>>, Grid<T>)> {
        let n = self.n_atoms();
        if ramp.len() != self.ramp.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ramp.len(),
                got: ramp.len(),
            });
        }
        let grid = Grid::new(ramp.t0, ramp.t_end(), self.dt)?;
        let mut psi = self.initial.amplitudes().to_vec();
        let mut states = Vec::new();
        if keep {
            states.reserve(grid.steps + 1);
            states.push(psi.clone());
        }
        let mut cn = CrankNicolson::new(n);
        for s in 0..grid.steps {
            let (omega, kappa) = self.map.params(ramp.value_at(grid.mid(s)));
            let h = TwoModeHamiltonian::new(omega, kappa, n)?;
            cn.step(&h, grid.dt, &mut psi);
            if keep {
                states.push(psi.clone());
            }
        }
        if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("control propagation diverged".into()));
        }
        let last = ManyBodyState::normalized(psi, ramp.t_end())?;
        Ok((last, states, grid))
    }
}

#[derive(Debug, Clone, Copy)]
struct Grid<T> {
    t0: T,
    dt: T,
    steps: usize,
}

impl<T: Real> Grid<T> {
    fn new(t0: T, t1: T, dt: T) -> Result<Self> {
        let (steps, dt) = step_grid(t1 - t0, dt)?;
        Ok(Self { t0, dt, steps })
    }

    fn mid(&self, s: usize) -> T {
        self.t0 + (T::from_count(s) + T::lit(0.5)) * self.dt
    }
}

/// Sample index `i` and weight `w` with `ramp.value_at(t) = (1-w) l_i + w l_{i+1}`.
fn interp_weights<T: Real>(ramp: &ControlRamp<T>, t: T) -> (usize, T) {
    let last = ramp.intervals();
    let s = (t - ramp.t0) / ramp.dt;
    if !(s > T::zero()) {
        return (0, T::zero());
    }
    let i = s.floor().to_usize().unwrap_or(last).min(last);
    if i >= last {
        return (last, T::zero());
    }
    (i, s - T::from_count(i))
}

/// `out = (-dOmega Jx + 2 dkappa Jz^2) x`.
fn apply_dh<T: Real>(n: usize, d_omega: T, d_kappa: T, x: &[Complex<T>], out: &mut [Complex<T>]) {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    for k in 0..=n {
        let m: T = imbalance(n, k);
        let mut v = x[k] * (two * d_kappa * m * m);
        if k > 0 {
            v += x[k - 1] * (-d_omega * half * crate::two_mode::ladder::<T>(n, k - 1));
        }
        if k < n {
            v += x[k + 1] * (-d_omega * half * crate::two_mode::ladder::<T>(n, k));
        }
        out[k] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OctOptions<T> {
    pub max_iters: usize,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: T,
    /// Stop when the relative decrease of an accepted step falls below this.
    pub rel_tol: T,
    pub armijo: T,
    pub max_halvings: usize,
    /// Largest change of any sample in the first trial step.
    pub initial_step: T,
}

impl<T: Real> Default for OctOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: T::lit(1e-8),
            rel_tol: T::lit(1e-7),
            armijo: T::lit(1e-4),
            max_halvings: 40,
            initial_step: T::lit(0.05),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OctIteration<T> {
    pub iteration: usize,
    pub terminal: T,
    pub penalty: T,
    pub total: T,
    pub grad_norm: T,
    /// Accepted step length (0 for the initial row).
    pub step: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    GradientTolerance,
    RelativeChange,
    MaxIterations,
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OctTrace<T> {
    pub iterations: Vec<OctIteration<T>>,
    pub stop: StopReason,
}

impl<T: Real> OctTrace<T> {
    pub fn stalled(&self) -> bool {
        self.stop == StopReason::LineSearchStalled
    }

    /// Total objective never increases between recorded iterations.
    pub fn is_monotone(&self) -> bool {
        self.iterations.windows(2).all(|w| w[1].total <= w[0].total)
    }

    pub fn first(&self) -> &OctIteration<T> {
        &self.iterations[0]
    }

    pub fn last(&self) -> &OctIteration<T> {
        self.iterations.last().expect("trace holds the initial row")
    }
}

/// Projected gradient descent with Armijo backtracking from `problem.ramp`;
/// each line search starts from the Barzilai-Borwein step length.
/// End samples stay at their boundary values; interior samples are clamped
/// into the map's support.
pub fn optimize<T: Real>(problem: &OctProblem<T>, opts: OctOptions<T>) -> Result<(ControlRamp<T>, OctTrace<T>)> {
    let (lo, hi) = problem.map.support();
    let mut ramp = problem.ramp.clone();
    let (mut obj, mut grad) = problem.objective_and_gradient(&ramp)?;
    let mut iterations = vec![OctIteration {
        iteration: 0,
        terminal: obj.terminal,
        penalty: obj.penalty,
        total: obj.total,
        grad_norm: l2(&grad),
        step: T::zero(),
    }];
    let gmax = grad.iter().fold(T::zero(), |a, g| a.max(g.abs()));
    let mut alpha = if gmax > T::zero() {
        opts.initial_step / gmax
    } else {
        T::zero()
    };
    let last_index = ramp.len() - 1;
    let mut stop = StopReason::MaxIterations;
    for it in 1..=opts.max_iters {
        let gnorm = l2(&grad);
        if !(gnorm > opts.grad_tol) {
            stop = StopReason::GradientTolerance;
            break;
        }
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = ramp.clone();
            for j in 1..last_index {
                trial.samples[j] = (ramp.samples[j] - alpha * grad[j]).max(lo).min(hi);
            }
            let decrease: T = (1..last_index)
                .map(|j| grad[j] * (ramp.samples[j] - trial.samples[j]))
                .sum();
            if decrease > T::zero() {
                let value = problem.objective_of(&trial)?;
                if value.total <= obj.total - opts.armijo * decrease {
                    accepted = Some((trial, value));
                    break;
                }
            }
            alpha = alpha * T::lit(0.5);
        }
        let Some((trial, value)) = accepted else {
            stop = StopReason::LineSearchStalled;
            break;
        };
        let rel = (obj.total - value.total) / obj.total.abs().max(T::min_positive_value());
        let accepted_step = alpha;
        let (o, g) = problem.objective_and_gradient(&trial)?;
        // Barzilai-Borwein length for the next trial step.
        let (mut ss, mut sy) = (T::zero(), T::zero());
        for j in 1..last_index {
            let dx = trial.samples[j] - ramp.samples[j];
            ss += dx * dx;
            sy += dx * (g[j] - grad[j]);
        }
        alpha = if sy > T::zero() { ss / sy } else { alpha * T::lit(2.0) };
        ramp = trial;
        obj = o;
        grad = g;
        iterations.push(OctIteration {
            iteration: it,
            terminal: obj.terminal,
            penalty: obj.penalty,
            total: obj.total,
            grad_norm: l2(&grad),
            step: accepted_step,
        });
        log::debug!("oct iter {it}: total {} step {}", obj.total, accepted_step);
        if rel < opts.rel_tol {
            stop = StopReason::RelativeChange;
            break;
        }
    }
    Ok((ramp, OctTrace { iterations, stop }))
}

fn l2<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

/// Sinusoidally modulated linear trapping ramp,
/// `lambda(t) = lin(t) (1 + A sin(pi s) sin(omega (t - t0)))` with `s = (t - t0)/(T - t0)`.
/// The envelope keeps both boundary values fixed.
pub fn modulated_ramp<T: Real>(
    t0: T,
    t_end: T,
    dt_ctrl: T,
    boundary: (T, T),
    amplitude: T,
    omega_drive: T,
    map: &LambdaMap<T>,
) -> Result<ControlRamp<T>> {
    let (lo, hi) = map.support();
    let span = t_end - t0;
    let pi = T::PI();
    ControlRamp::from_fn(t0, t_end, dt_ctrl, |t| {
        let s = (t - t0) / span;
        let lin = boundary.0 + (boundary.1 - boundary.0) * s;
        let v = lin * (T::one() + amplitude * (pi * s).sin() * (omega_drive * (t - t0)).sin());
        v.max(lo).min(hi)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoParameterResult<T> {
    pub amplitude: T,
    pub omega_drive: T,
    pub xi_s: T,
    pub evaluations: usize,
}

/// Nelder-Mead over `(amplitude, omega_drive)` of [`modulated_ramp`] with the
/// boundary values of `problem.ramp`, minimizing the terminal `xi_S`.
pub fn two_parameter_optimize<T: Real>(
    problem: &OctProblem<T>,
    amplitude_range: (T, T),
    frequency_range: (T, T),
    opts: NelderMeadOptions<T>,
) -> Result<(TwoParameterResult<T>, ControlRamp<T>)> {
    for (lo, hi) in [amplitude_range, frequency_range] {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid(format!("invalid search range [{lo}, {hi}]")));
        }
    }
    let t0 = problem.ramp.t0;
    let t_end = problem.ramp.t_end();
    let dt_ctrl = problem.ramp.dt;
    let boundary = problem.boundary();
    let build = |x: &[T]| modulated_ramp(t0, t_end, dt_ctrl, boundary, x[0], x[1], &problem.map);
    let xi = |x: &[T]| -> T {
        build(x)
            .and_then(|r| problem.propagate(&r))
            .map(|psi| squeezing_factors(&psi).xi_s)
            .unwrap_or(T::infinity())
    };
    let half = T::lit(0.5);
    let x0 = [
        (amplitude_range.0 + amplitude_range.1) * half,
        (frequency_range.0 + frequency_range.1) * half,
    ];
    let res = nelder_mead::minimize(xi, &x0, &[amplitude_range, frequency_range], opts);
    let ramp = build(&res.x)?;
    Ok((
        TwoParameterResult {
            amplitude: res.x[0],
            omega_drive: res.x[1],
            xi_s: res.value,
            evaluations: res.evals,
        },
        ramp,
    ))
}
