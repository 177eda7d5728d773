//! Two-orbital grid model of the double well.
//!
//! Lengths are measured in `l = sqrt(hbar * 1 ms / m)` (0.854 um for 87Rb), so
//! with `hbar = m = 1` energies come out in rad/ms and times in ms, the same
//! units as the two-mode model. The kinetic term is `-1/2 d^2/dx^2`.
//!
//! Many-body coefficients are stored over the gerade/ungerade occupation basis
//! `|n_g = N - k, n_u = k>`, `k = 0..=N`.
//!
//! Equations of motion, with `P = 1 - sum_k |phi_k><phi_k|`:
//!
//! ```text
//! i dC/dt      = H_C C,  H_C = sum h_ij a_i^+ a_j + 1/2 sum W_ijkl a_i^+ a_j^+ a_k a_l
//! i dphi_m/dt  = P [ h phi_m + sum_n (rho^-1)_mn sum_jkl rho_njkl g phi_j^* phi_k phi_l ]
//! W_ijkl       = g int phi_i^* phi_j^* phi_k phi_l
//! ```
//!
//! with `rho_ij = <a_i^+ a_j>` and `rho_ijkl = <a_i^+ a_j^+ a_k a_l>`. The
//! one-body density is regularized as `rho + eps exp(-rho/eps)` before
//! inversion. The conserved energy is `sum rho_ij h_ij + 1/2 sum rho_ijkl W_ijkl`.

use std::io::{Read, Write};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{SymTridiagonal, Tridiagonal};
use crate::scalar::{czero, Real};
use crate::two_mode::Operator;

/// Uniform grid on `[-x_max, x_max]` with Dirichlet end nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D<T> {
    x_max: T,
    points: usize,
    nodes: Vec<T>,
}

impl<T: Real> Grid1D<T> {
    pub fn new(x_max: T, points: usize) -> Result<Self> {
        if points < 5 {
            return Err(invalid("grid needs at least five points"));
        }
        if !(x_max > T::zero()) || !x_max.is_finite() {
            return Err(invalid("grid half-width must be positive"));
        }
        let dx = T::lit(2.0) * x_max / T::from_count(points - 1);
        let mut nodes = vec![T::zero(); points];
        for i in 0..points / 2 {
            let x = -x_max + T::from_count(i) * dx;
            nodes[i] = x;
            nodes[points - 1 - i] = -x;
        }
        Ok(Self {
            x_max,
            points,
            nodes,
        })
    }

    pub fn x_min(&self) -> T {
        -self.x_max
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dx(&self) -> T {
        T::lit(2.0) * self.x_max / T::from_count(self.points - 1)
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Index of the node at `-x_i`.
    pub fn mirror(&self, i: usize) -> usize {
        self.points - 1 - i
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> T {
        if i == 0 || i + 1 == self.points {
            self.dx() * T::lit(0.5)
        } else {
            self.dx()
        }
    }

    /// Step function `theta(x)` with value 1/2 on an `x = 0` node.
    pub fn theta(&self, i: usize) -> T {
        let x = self.nodes[i];
        if x > T::zero() {
            T::one()
        } else if x == T::zero() {
            T::lit(0.5)
        } else {
            T::zero()
        }
    }

    /// `int a^* b dx`.
    pub fn inner(&self, a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
        a.iter()
            .zip(b)
            .enumerate()
            .fold(czero(), |acc, (i, (x, y))| acc + x.conj() * *y * self.weight(i))
    }

    pub fn norm(&self, a: &[Complex<T>]) -> T {
        self.inner(a, a).re.max(T::zero()).sqrt()
    }

    /// `-1/2 d^2/dx^2` with zero boundary values.
    pub fn kinetic(&self, phi: &[Complex<T>], out: &mut [Complex<T>]) {
        let c = T::lit(-0.5) / (self.dx() * self.dx());
        let p = self.points;
        out[0] = czero();
        out[p - 1] = czero();
        for i in 1..p - 1 {
            out[i] = (phi[i - 1] - phi[i] * T::lit(2.0) + phi[i + 1]) * c;
        }
    }
}

/// `V(x; lambda) = a x^4 - b x^2 + max(b, 0)^2 / (4a)`, `b = slope (lambda - lambda_c)`.
/// The constant puts the well minima at zero energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarticPotential<T> {
    pub quartic: T,
    pub slope: T,
    pub lambda_c: T,
    pub lambda_min: T,
    pub lambda_max: T,
}

impl<T: Real> QuarticPotential<T> {
    pub fn new(quartic: T, slope: T, lambda_c: T, support: (T, T)) -> Result<Self> {
        if !(quartic > T::zero()) || !(slope > T::zero()) {
            return Err(invalid("quartic and slope coefficients must be positive"));
        }
        if !(support.0 < support.1) {
            return Err(invalid("empty lambda support"));
        }
        Ok(Self {
            quartic,
            slope,
            lambda_c,
            lambda_min: support.0,
            lambda_max: support.1,
        })
    }

    pub fn quadratic(&self, lambda: T) -> T {
        self.slope * (lambda - self.lambda_c)
    }

    /// Positions `+-sqrt(b / 2a)` of the two minima, `None` for a single well.
    pub fn minima(&self, lambda: T) -> Option<T> {
        let b = self.quadratic(lambda);
        (b > T::zero()).then(|| (b / (T::lit(2.0) * self.quartic)).sqrt())
    }

    /// `b^2 / 4a` for a double well, zero otherwise.
    pub fn barrier_height(&self, lambda: T) -> T {
        let b = self.quadratic(lambda).max(T::zero());
        b * b / (T::lit(4.0) * self.quartic)
    }

    pub fn value(&self, lambda: T, x: T) -> T {
        let b = self.quadratic(lambda);
        let x2 = x * x;
        self.quartic * x2 * x2 - b * x2 + self.barrier_height(lambda)
    }
}

/// `V(x)` rows sampled on a fixed grid for increasing `lambda`, linearly
/// interpolated in `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable<T> {
    pub lambda: Vec<T>,
    pub x: Vec<T>,
    /// `values[i][j] = V(x_j; lambda_i)`.
    pub values: Vec<Vec<T>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    lambda: f64,
    x: f64,
    v: f64,
}

impl<T: Real> PotentialTable<T> {
    pub fn new(lambda: Vec<T>, x: Vec<T>, values: Vec<Vec<T>>) -> Result<Self> {
        if lambda.is_empty() || lambda.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("potential table needs strictly increasing lambda"));
        }
        if values.len() != lambda.len() || values.iter().any(|r| r.len() != x.len()) {
            return Err(invalid("potential table rows do not match the x column"));
        }
        Ok(Self { lambda, x, values })
    }

    /// Reads `lambda,x,v` rows (header required), grouped by `lambda`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut lambda: Vec<T> = Vec::new();
        let mut x: Vec<T> = Vec::new();
        let mut values: Vec<Vec<T>> = Vec::new();
        for row in rdr.deserialize() {
            let row: TableRow = row?;
            let l = T::lit(row.lambda);
            if lambda.last() != Some(&l) {
                lambda.push(l);
                values.push(Vec::new());
            }
            let current = values.last_mut().expect("row group exists");
            if lambda.len() == 1 {
                x.push(T::lit(row.x));
            } else if x.get(current.len()) != Some(&T::lit(row.x)) {
                return Err(invalid(format!("x grid differs at lambda = {}", row.lambda)));
            }
            current.push(T::lit(row.v));
        }
        Self::new(lambda, x, values)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (l, row) in self.lambda.iter().zip(&self.values) {
            for (x, v) in self.x.iter().zip(row) {
                w.serialize(TableRow {
                    lambda: l.to_f64_lossy(),
                    x: x.to_f64_lossy(),
                    v: v.to_f64_lossy(),
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Samples a quartic surrogate on `grid` for each `lambda`.
    pub fn tabulate(potential: &QuarticPotential<T>, grid: &Grid1D<T>, lambda: Vec<T>) -> Result<Self> {
        let values = lambda
            .iter()
            .map(|&l| grid.nodes().iter().map(|&x| potential.value(l, x)).collect())
            .collect();
        Self::new(lambda, grid.nodes().to_vec(), values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential<T> {
    Quartic(QuarticPotential<T>),
    Table(PotentialTable<T>),
}

impl<T: Real> Potential<T> {
    pub fn support(&self) -> (T, T) {
        match self {
            Self::Quartic(q) => (q.lambda_min, q.lambda_max),
            Self::Table(t) => (t.lambda[0], t.lambda[t.lambda.len() - 1]),
        }
    }
}

/// `V(x; lambda)` on every grid node.
pub fn surrogate_potential<T: Real>(potential: &Potential<T>, lambda: T, grid: &Grid1D<T>) -> Result<Vec<T>> {
    let (lo, hi) = potential.support();
    if !(lambda >= lo && lambda <= hi) {
        return Err(Error::OutOfSupport {
            value: lambda.to_f64_lossy(),
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
        });
    }
    match potential {
        Potential::Quartic(q) => Ok(grid.nodes().iter().map(|&x| q.value(lambda, x)).collect()),
        Potential::Table(t) => {
            let tol = T::lit(1e-9) * grid.x_max();
            if t.x.len() != grid.points() || t.x.iter().zip(grid.nodes()).any(|(a, b)| (*a - *b).abs() > tol) {
                return Err(invalid("potential table grid does not match the simulation grid"));
            }
            let n = t.lambda.len();
            if n == 1 {
                return Ok(t.values[0].clone());
            }
            let i = t.lambda.partition_point(|&l| l <= lambda).clamp(1, n - 1) - 1;
            let w = (lambda - t.lambda[i]) / (t.lambda[i + 1] - t.lambda[i]);
            Ok(t.values[i]
                .iter()
                .zip(&t.values[i + 1])
                .map(|(a, b)| *a + w * (*b - *a))
                .collect())
        }
    }
}

/// Lowest two eigenpairs of `-1/2 d^2/dx^2 + V` with Dirichlet ends, returned as
/// normalized, parity-symmetrized grid functions: `phi_g` positive at the
/// centre and `phi_u` positive for `x > 0`.
pub fn single_particle_states<T: Real>(
    grid: &Grid1D<T>,
    potential: &[T],
) -> Result<((T, Vec<Complex<T>>), (T, Vec<Complex<T>>))> {
    let p = grid.points();
    if potential.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: potential.len(),
        });
    }
    let inv = T::one() / (grid.dx() * grid.dx());
    let diag = potential[1..p - 1].iter().map(|v| inv + *v).collect();
    let off = vec![-T::lit(0.5) * inv; p - 3];
    let h = SymTridiagonal::new(diag, off)?;
    let mut out = Vec::with_capacity(2);
    for (k, odd) in [(0usize, false), (1, true)] {
        let (e, v) = h.eigenpair(k)?;
        let mut phi = vec![T::zero(); p];
        phi[1..p - 1].copy_from_slice(&v);
        let sign = if odd { -T::one() } else { T::one() };
        let sym: Vec<T> = (0..p)
            .map(|i| T::lit(0.5) * (phi[i] + sign * phi[grid.mirror(i)]))
            .collect();
        let probe = if odd {
            (0..p).filter(|&i| grid.nodes()[i] > T::zero()).map(|i| sym[i]).sum::<T>()
        } else {
            sym[p / 2]
        };
        let flip = if probe < T::zero() { -T::one() } else { T::one() };
        let mut c: Vec<Complex<T>> = sym.iter().map(|v| Complex::new(*v * flip, T::zero())).collect();
        let norm = grid.norm(&c);
        if !(norm > T::zero()) {
            return Err(Error::Numerical(format!("single-particle state {k} has the wrong parity")));
        }
        c.iter_mut().for_each(|z| *z = *z / norm);
        out.push((e, c));
    }
    let u = out.pop().expect("two states");
    let g = out.pop().expect("two states");
    Ok((g, u))
}

/// Gerade/ungerade splitting `E_u - E_g` of the single-particle problem.
pub fn single_particle_gap<T: Real>(grid: &Grid1D<T>, potential: &[T]) -> Result<T> {
    let ((eg, _), (eu, _)) = single_particle_states(grid, potential)?;
    Ok(eu - eg)
}

/// Grid, potential and contact coupling of the two-orbital model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitalModel<T> {
    pub grid: Grid1D<T>,
    pub potential: Potential<T>,
    /// Contact interaction strength `g`.
    pub coupling: T,
}

impl<T: Real> OrbitalModel<T> {
    pub fn potential_at(&self, lambda: T) -> Result<Vec<T>> {
        surrogate_potential(&self.potential, lambda, &self.grid)
    }

    /// Orbitals from the single-particle problem at `lambda` with the given
    /// coefficients.
    pub fn split_pair(&self, lambda: T, coeffs: Vec<Complex<T>>) -> Result<OrbitalPair<T>> {
        let v = self.potential_at(lambda)?;
        let ((_, g), (_, u)) = single_particle_states(&self.grid, &v)?;
        OrbitalPair::new(&self.grid, g, u, coeffs, T::zero())
    }
}

/// Calibrates a quartic surrogate so the single-particle splitting at
/// `lambda_ref` equals `omega_target`, then fixes `g` so the left-orbital
/// charging energy `(g/2) int |phi_l|^4` equals `kappa_target`.
pub fn calibrate_orbital_model<T: Real>(
    grid: Grid1D<T>,
    quartic: T,
    lambda_c: T,
    lambda_ref: T,
    omega_target: T,
    kappa_target: T,
    support: (T, T),
) -> Result<OrbitalModel<T>> {
    if !(lambda_ref > lambda_c) {
        return Err(invalid("reference lambda must lie in the double-well regime"));
    }
    if !(omega_target > T::zero()) || !(kappa_target > T::zero()) {
        return Err(invalid("calibration targets must be positive"));
    }
    let reach = T::lit(0.75) * grid.x_max();
    let gap = |slope: T| -> Result<T> {
        let q = QuarticPotential::new(quartic, slope, lambda_c, support)?;
        let v: Vec<T> = grid.nodes().iter().map(|&x| q.value(lambda_ref, x)).collect();
        single_particle_gap(&grid, &v)
    };
    let max_slope = T::lit(2.0) * quartic * reach * reach / (lambda_ref - lambda_c);
    let mut lo = max_slope * T::lit(1e-6);
    if gap(lo)? < omega_target {
        return Err(Error::CalibrationFailure(format!(
            "a nearly harmonic-free quartic already splits below {omega_target}"
        )));
    }
    let mut hi = max_slope;
    if gap(hi)? > omega_target {
        return Err(Error::CalibrationFailure(format!(
            "splitting {omega_target} needs wells beyond the grid"
        )));
    }
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if gap(mid)? > omega_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * T::lit(8.0) * hi {
            break;
        }
    }
    let slope = T::lit(0.5) * (lo + hi);
    let q = QuarticPotential::new(quartic, slope, lambda_c, support)?;
    if let Some(xm) = q.minima(support.1) {
        if xm > reach {
            log::warn!("wells at lambda = {} sit at {}, near the grid edge", support.1, xm);
        }
    }
    let potential = Potential::Quartic(q);
    let v = surrogate_potential(&potential, lambda_ref, &grid)?;
    let ((_, g), (_, u)) = single_particle_states(&grid, &v)?;
    let (left, _) = lr_transform(&g, &u, Complex::new(T::one(), T::zero()))?;
    let quartic_overlap: T = (0..grid.points())
        .map(|i| {
            let d = left[i].norm_sqr();
            d * d * grid.weight(i)
        })
        .sum();
    Ok(OrbitalModel {
        grid,
        potential,
        coupling: T::lit(2.0) * kappa_target / quartic_overlap,
    })
}

/// Gerade/ungerade orbitals with their many-body coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalPair<T> {
    pub phi_g: Vec<Complex<T>>,
    pub phi_u: Vec<Complex<T>>,
    /// Coefficients over `|n_g = N - k, n_u = k>`.
    pub coeffs: Vec<Complex<T>>,
    pub time: T,
}

impl<T: Real> OrbitalPair<T> {
    pub fn new(
        grid: &Grid1D<T>,
        phi_g: Vec<Complex<T>>,
        phi_u: Vec<Complex<T>>,
        coeffs: Vec<Complex<T>>,
        time: T,
    ) -> Result<Self> {
        if phi_g.len() != grid.points() || phi_u.len() != grid.points() {
            return Err(Error::DimensionMismatch {
                expected: grid.points(),
                got: phi_g.len().min(phi_u.len()),
            });
        }
        if coeffs.len() < 2 {
            return Err(invalid("coefficient vector needs N >= 1"));
        }
        let pair = Self {
            phi_g,
            phi_u,
            coeffs,
            time,
        };
        let drift = pair.orthonormality_defect(grid);
        if drift > T::lit(1e-10) {
            return Err(invalid(format!("orbitals are not orthonormal (defect {drift})")));
        }
        Ok(pair)
    }

    pub fn n_atoms(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Largest deviation of the orbital overlap matrix from the identity and of
    /// the coefficient norm from one.
    pub fn orthonormality_defect(&self, grid: &Grid1D<T>) -> T {
        let gg = (grid.inner(&self.phi_g, &self.phi_g).re - T::one()).abs();
        let uu = (grid.inner(&self.phi_u, &self.phi_u).re - T::one()).abs();
        let gu = grid.inner(&self.phi_g, &self.phi_u).norm();
        let cc = (self.coeffs.iter().map(|z| z.norm_sqr()).sum::<T>() - T::one()).abs();
        gg.max(uu).max(gu).max(cc)
    }

    /// `max |phi_g(x) - phi_g(-x)|` and `max |phi_u(x) + phi_u(-x)|`.
    pub fn parity_defect(&self, grid: &Grid1D<T>) -> T {
        (0..grid.points()).fold(T::zero(), |acc, i| {
            let j = grid.mirror(i);
            acc.max((self.phi_g[i] - self.phi_g[j]).norm())
                .max((self.phi_u[i] + self.phi_u[j]).norm())
        })
    }

    fn orbital(&self, i: usize) -> &[Complex<T>] {
        if i == 0 {
            &self.phi_g
        } else {
            &self.phi_u
        }
    }
}

/// Applies `a_{c0}^+ ... a_{a0} ...` (creators in order, then annihilators) to
/// `|N - k, k>`; returns the target index and the bosonic amplitude.
fn act<T: Real>(n: usize, k: usize, create: &[usize], annihilate: &[usize]) -> Option<(usize, T)> {
    let mut occ = [n - k, k];
    let mut amp = T::one();
    for &l in annihilate.iter().rev() {
        if occ[l] == 0 {
            return None;
        }
        amp *= T::from_count(occ[l]).sqrt();
        occ[l] -= 1;
    }
    for &i in create.iter().rev() {
        occ[i] += 1;
        amp *= T::from_count(occ[i]).sqrt();
    }
    Some((occ[1], amp))
}

/// `rho_ij = <a_i^+ a_j>` over the g/u coefficients.
pub fn one_body_density<T: Real>(coeffs: &[Complex<T>]) -> [[Complex<T>; 2]; 2] {
    let n = coeffs.len() - 1;
    let mut rho = [[czero(); 2]; 2];
    for (i, row) in rho.iter_mut().enumerate() {
        for (j, r) in row.iter_mut().enumerate() {
            for (k, c) in coeffs.iter().enumerate() {
                if let Some((t, a)) = act::<T>(n, k, &[i], &[j]) {
                    *r += coeffs[t].conj() * *c * a;
                }
            }
        }
    }
    rho
}

type Tensor4<T> = [[[[Complex<T>; 2]; 2]; 2]; 2];

/// `rho_ijkl = <a_i^+ a_j^+ a_k a_l>`.
pub fn two_body_density<T: Real>(coeffs: &[Complex<T>]) -> Tensor4<T> {
    let n = coeffs.len() - 1;
    let mut rho = [[[[czero(); 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let mut acc = czero();
                    for (m, c) in coeffs.iter().enumerate() {
                        if let Some((t, a)) = act::<T>(n, m, &[i, j], &[k, l]) {
                            acc += coeffs[t].conj() * *c * a;
                        }
                    }
                    rho[i][j][k][l] = acc;
                }
            }
        }
    }
    rho
}

/// One- and two-body matrix elements of the current orbitals.
#[derive(Debug, Clone, Copy)]
struct Elements<T> {
    h: [[Complex<T>; 2]; 2],
    w: Tensor4<T>,
}

fn elements<T: Real>(
    grid: &Grid1D<T>,
    pair: &OrbitalPair<T>,
    h_phi: [&[Complex<T>]; 2],
    coupling: T,
) -> Elements<T> {
    let mut h = [[czero(); 2]; 2];
    for (i, row) in h.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = grid.inner(pair.orbital(i), h_phi[j]);
        }
    }
    let mut w = [[[[czero(); 2]; 2]; 2]; 2];
    if coupling != T::zero() {
        let p = grid.points();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let (a, b, c, d) = (pair.orbital(i), pair.orbital(j), pair.orbital(k), pair.orbital(l));
                        let s = (0..p).fold(czero(), |acc: Complex<T>, x| {
                            acc + a[x].conj() * b[x].conj() * c[x] * d[x] * grid.weight(x)
                        });
                        w[i][j][k][l] = s * coupling;
                    }
                }
            }
        }
    }
    Elements { h, w }
}

fn apply_many_body<T: Real>(el: &Elements<T>, coeffs: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = coeffs.len() - 1;
    let mut out = vec![czero(); n + 1];
    let half = T::lit(0.5);
    for (m, c) in coeffs.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                if let Some((t, a)) = act::<T>(n, m, &[i], &[j]) {
                    out[t] += el.h[i][j] * *c * a;
                }
                for k in 0..2 {
                    for l in 0..2 {
                        let w = el.w[i][j][k][l];
                        if w == czero() {
                            continue;
                        }
                        if let Some((t, a)) = act::<T>(n, m, &[i, j], &[k, l]) {
                            out[t] += w * *c * (a * half);
                        }
                    }
                }
            }
        }
    }
    out
}

/// `(rho + eps exp(-rho/eps))^{-1}` for a 2x2 Hermitian `rho`.
fn regularized_inverse<T: Real>(rho: [[Complex<T>; 2]; 2], eps: T) -> [[Complex<T>; 2]; 2] {
    let a = rho[0][0].re;
    let d = rho[1][1].re;
    let b = rho[0][1];
    let mean = T::lit(0.5) * (a + d);
    let r = (T::lit(0.25) * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let f = |x: T| T::one() / (x + eps * (-x / eps).exp());
    let identity = [[Complex::new(T::one(), T::zero()), czero()], [czero(), Complex::new(T::one(), T::zero())]];
    if r <= T::epsilon() * (T::one() + mean.abs()) {
        let s = f(mean);
        return identity.map(|row| row.map(|z| z * s));
    }
    let (l1, l2) = (mean + r, mean - r);
    let (f1, f2) = (f(l1), f(l2));
    // f(rho) = f1 (rho - l2)/(l1 - l2) + f2 (rho - l1)/(l2 - l1)
    let mut out = [[czero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let p1 = (rho[i][j] - identity[i][j] * l2) / (l1 - l2);
            let p2 = (rho[i][j] - identity[i][j] * l1) / (l2 - l1);
            out[i][j] = p1 * f1 + p2 * f2;
        }
    }
    out
}

/// Energy `sum rho_ij h_ij + 1/2 sum rho_ijkl W_ijkl` at a given `lambda`.
pub fn orbital_energy<T: Real>(model: &OrbitalModel<T>, pair: &OrbitalPair<T>, lambda: T) -> Result<T> {
    let v = model.potential_at(lambda)?;
    let grid = &model.grid;
    let hg = one_body_apply(grid, &v, &pair.phi_g);
    let hu = one_body_apply(grid, &v, &pair.phi_u);
    let el = elements(grid, pair, [&hg, &hu], model.coupling);
    let hc = apply_many_body(&el, &pair.coeffs);
    Ok(pair
        .coeffs
        .iter()
        .zip(&hc)
        .fold(czero::<T>(), |acc, (c, h)| acc + c.conj() * *h)
        .re)
}

fn one_body_apply<T: Real>(grid: &Grid1D<T>, v: &[T], phi: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut out = vec![czero(); phi.len()];
    grid.kinetic(phi, &mut out);
    let last = phi.len() - 1;
    for i in 1..last {
        out[i] += phi[i] * v[i];
    }
    out
}

/// Time derivative of `(phi_g, phi_u, C)`.
fn rhs<T: Real>(
    model: &OrbitalModel<T>,
    v: &[T],
    pair: &OrbitalPair<T>,
    eps: T,
) -> (Vec<Complex<T>>, Vec<Complex<T>>, Vec<Complex<T>>) {
    let grid = &model.grid;
    let p = grid.points();
    let g = model.coupling;
    let hg = one_body_apply(grid, v, &pair.phi_g);
    let hu = one_body_apply(grid, v, &pair.phi_u);
    let el = elements(grid, pair, [&hg, &hu], g);
    let mi = Complex::new(T::zero(), -T::one());
    let dc: Vec<Complex<T>> = apply_many_body(&el, &pair.coeffs).into_iter().map(|z| z * mi).collect();

    let mut bare = [hg, hu];
    if g != T::zero() {
        let rho1 = one_body_density(&pair.coeffs);
        let rho2 = two_body_density(&pair.coeffs);
        let inv = regularized_inverse(rho1, eps);
        // coefficient of phi_j^* phi_k phi_l in the mean field of orbital m
        for (m, target) in bare.iter_mut().enumerate() {
            let mut coef = [[[czero::<T>(); 2]; 2]; 2];
            for (j, cj) in coef.iter_mut().enumerate() {
                for (k, cjk) in cj.iter_mut().enumerate() {
                    for (l, c) in cjk.iter_mut().enumerate() {
                        *c = (0..2).fold(czero(), |acc, nn| acc + inv[m][nn] * rho2[nn][j][k][l]) * g;
                    }
                }
            }
            for x in 1..p - 1 {
                let o = [pair.phi_g[x], pair.phi_u[x]];
                let mut acc = czero();
                for j in 0..2 {
                    for k in 0..2 {
                        for l in 0..2 {
                            acc += coef[j][k][l] * o[j].conj() * o[k] * o[l];
                        }
                    }
                }
                target[x] += acc;
            }
        }
    }
    let [mut dg, mut du] = bare;
    for d in [&mut dg, &mut du] {
        let pg = grid.inner(&pair.phi_g, d);
        let pu = grid.inner(&pair.phi_u, d);
        for x in 0..p {
            d[x] = (d[x] - pair.phi_g[x] * pg - pair.phi_u[x] * pu) * mi;
        }
    }
    (dg, du, dc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalEvolveOptions<T> {
    pub dt: T,
    /// Density-matrix regularization `eps`.
    pub regularization: T,
    /// Abort when the orthonormality defect exceeds this.
    pub drift_limit: T,
}

impl<T: Real> Default for OrbitalEvolveOptions<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(1e-4),
            regularization: T::lit(1e-8),
            drift_limit: T::lit(1e-6),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrbitalDiagnostics {
    pub steps: usize,
    pub max_orthonormality_defect: f64,
    pub max_parity_defect: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Largest `|E(t) - E(0)| / |E(0)|` seen at the observed steps.
    pub max_relative_energy_error: f64,
}

/// RK4 propagation of orbitals and coefficients from `pair.time` to `t_end`
/// under `V(x; lambda(t))`. `observer` sees the initial pair and every
/// `observe_every`-th step (0 disables it) along with the current energy.
pub fn evolve_orbitals<T, L, F>(
    model: &OrbitalModel<T>,
    pair: &OrbitalPair<T>,
    lambda: L,
    t_end: T,
    opts: OrbitalEvolveOptions<T>,
    observe_every: usize,
    mut observer: F,
) -> Result<(OrbitalPair<T>, OrbitalDiagnostics)>
where
    T: Real,
    L: Fn(T) -> T,
    F: FnMut(usize, &OrbitalPair<T>, T),
{
    let grid = &model.grid;
    let (steps, dt) = crate::two_mode::step_grid(t_end - pair.time, opts.dt)?;
    let t0 = pair.time;
    let mut state = pair.clone();
    let e0 = orbital_energy(model, &state, lambda(t0))?;
    let mut diag = OrbitalDiagnostics {
        steps,
        initial_energy: e0.to_f64_lossy(),
        final_energy: e0.to_f64_lossy(),
        max_orthonormality_defect: state.orthonormality_defect(grid).to_f64_lossy(),
        max_parity_defect: state.parity_defect(grid).to_f64_lossy(),
        ..Default::default()
    };
    if observe_every > 0 {
        observer(0, &state, e0);
    }
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let shifted = |base: &OrbitalPair<T>, d: &(Vec<Complex<T>>, Vec<Complex<T>>, Vec<Complex<T>>), h: T| {
        let mut s = base.clone();
        s.phi_g.iter_mut().zip(&d.0).for_each(|(a, b)| *a += *b * h);
        s.phi_u.iter_mut().zip(&d.1).for_each(|(a, b)| *a += *b * h);
        s.coeffs.iter_mut().zip(&d.2).for_each(|(a, b)| *a += *b * h);
        s
    };
    for s in 0..steps {
        let t = t0 + T::from_count(s) * dt;
        let v0 = model.potential_at(lambda(t))?;
        let vm = model.potential_at(lambda(t + half * dt))?;
        let v1 = model.potential_at(lambda(t + dt))?;
        let k1 = rhs(model, &v0, &state, opts.regularization);
        let k2 = rhs(model, &vm, &shifted(&state, &k1, half * dt), opts.regularization);
        let k3 = rhs(model, &vm, &shifted(&state, &k2, half * dt), opts.regularization);
        let k4 = rhs(model, &v1, &shifted(&state, &k3, dt), opts.regularization);
        let w = dt * sixth;
        let two = T::lit(2.0);
        for (x, a) in state.phi_g.iter_mut().enumerate() {
            *a += (k1.0[x] + k2.0[x] * two + k3.0[x] * two + k4.0[x]) * w;
        }
        for (x, a) in state.phi_u.iter_mut().enumerate() {
            *a += (k1.1[x] + k2.1[x] * two + k3.1[x] * two + k4.1[x]) * w;
        }
        for (x, a) in state.coeffs.iter_mut().enumerate() {
            *a += (k1.2[x] + k2.2[x] * two + k3.2[x] * two + k4.2[x]) * w;
        }
        state.time = t0 + T::from_count(s + 1) * dt;

        let drift = state.orthonormality_defect(grid);
        if !(drift <= opts.drift_limit) {
            return Err(Error::OrthonormalityDrift {
                drift: drift.to_f64_lossy(),
                time: state.time.to_f64_lossy(),
                limit: opts.drift_limit.to_f64_lossy(),
            });
        }
        diag.max_orthonormality_defect = diag.max_orthonormality_defect.max(drift.to_f64_lossy());
        diag.max_parity_defect = diag.max_parity_defect.max(state.parity_defect(grid).to_f64_lossy());
        if observe_every > 0 && (s + 1) % observe_every == 0 {
            let e = orbital_energy(model, &state, lambda(state.time))?;
            let rel = ((e - e0) / e0).abs().to_f64_lossy();
            diag.max_relative_energy_error = diag.max_relative_energy_error.max(rel);
            observer(s + 1, &state, e);
        }
    }
    let e = orbital_energy(model, &state, lambda(state.time))?;
    diag.final_energy = e.to_f64_lossy();
    let rel = ((e - e0) / e0).abs().to_f64_lossy();
    diag.max_relative_energy_error = diag.max_relative_energy_error.max(rel);
    Ok((state, diag))
}

/// Relative-phase overlap `f = int theta(x) phi_g^* phi_u dx` and `f / |f|`.
pub fn compute_f<T: Real>(
    grid: &Grid1D<T>,
    phi_g: &[Complex<T>],
    phi_u: &[Complex<T>],
) -> Result<(Complex<T>, Complex<T>)> {
    let f = (0..grid.points()).fold(czero::<T>(), |acc, i| {
        acc + phi_g[i].conj() * phi_u[i] * (grid.theta(i) * grid.weight(i))
    });
    let m = f.norm();
    if !(m >= T::lit(1e-12)) {
        return Err(Error::DegeneratePhase(m.to_f64_lossy()));
    }
    Ok((f, f / m))
}

/// `phi_l = (phi_g + f~ phi_u)/sqrt 2`, `phi_r = (phi_g - f~ phi_u)/sqrt 2`.
pub fn lr_transform<T: Real>(
    phi_g: &[Complex<T>],
    phi_u: &[Complex<T>],
    f_tilde: Complex<T>,
) -> Result<(Vec<Complex<T>>, Vec<Complex<T>>)> {
    check_unit(f_tilde)?;
    let s = T::lit(0.5).sqrt();
    let l = phi_g.iter().zip(phi_u).map(|(g, u)| (*g + f_tilde * *u) * s).collect();
    let r = phi_g.iter().zip(phi_u).map(|(g, u)| (*g - f_tilde * *u) * s).collect();
    Ok((l, r))
}

/// Inverse of [`lr_transform`].
pub fn gu_transform<T: Real>(
    phi_l: &[Complex<T>],
    phi_r: &[Complex<T>],
    f_tilde: Complex<T>,
) -> Result<(Vec<Complex<T>>, Vec<Complex<T>>)> {
    check_unit(f_tilde)?;
    let s = T::lit(0.5).sqrt();
    let g = phi_l.iter().zip(phi_r).map(|(l, r)| (*l + *r) * s).collect();
    let u = phi_l
        .iter()
        .zip(phi_r)
        .map(|(l, r)| (*l - *r) * s * f_tilde.conj())
        .collect();
    Ok((g, u))
}

fn check_unit<T: Real>(z: Complex<T>) -> Result<()> {
    if (z.norm() - T::one()).abs() > T::lit(1e-10) {
        return Err(invalid(format!("phase factor {z} is not of unit modulus")));
    }
    Ok(())
}

/// `Jz = 1/2 (f~ a_g^+ a_u + f~^* a_u^+ a_g)` on the g/u occupation basis.
pub fn jz_orbital<T: Real>(f_tilde: Complex<T>, n_atoms: usize) -> Result<Tridiagonal<T>> {
    check_unit(f_tilde)?;
    if n_atoms == 0 {
        return Err(invalid("orbital Jz needs at least one atom"));
    }
    let half = T::lit(0.5);
    // upper (k, k+1): a_g^+ a_u lowers n_u; lower (k+1, k): a_u^+ a_g raises it.
    let upper = (0..n_atoms)
        .map(|k| f_tilde * (half * (T::from_count(k + 1) * T::from_count(n_atoms - k)).sqrt()))
        .collect();
    let lower = (0..n_atoms)
        .map(|k| f_tilde.conj() * (half * (T::from_count(n_atoms - k) * T::from_count(k + 1)).sqrt()))
        .collect();
    Ok(Tridiagonal {
        lower,
        diag: vec![czero(); n_atoms + 1],
        upper,
    })
}

impl<T: Real> Operator<T> for Tridiagonal<T> {
    fn dim(&self) -> usize {
        Tridiagonal::dim(self)
    }

    fn apply_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        Tridiagonal::apply_into(self, x, out)
    }
}

/// `J_T = <C|Jz(f~)^2|C> + (gamma/N) <C|H|C>` with `f~` computed from the orbitals.
pub fn orbital_cost<T: Real, H: Operator<T> + ?Sized>(
    grid: &Grid1D<T>,
    pair: &OrbitalPair<T>,
    hamiltonian: &H,
    gamma: T,
) -> Result<T> {
    let (_, ft) = compute_f(grid, &pair.phi_g, &pair.phi_u)?;
    let jz = jz_orbital(ft, pair.n_atoms())?;
    let jc = jz.apply(&pair.coeffs);
    let mut cost = jc.iter().map(|z| z.norm_sqr()).sum::<T>();
    if gamma != T::zero() {
        let hc = hamiltonian.apply(&pair.coeffs);
        let e = pair.coeffs.iter().zip(&hc).fold(czero::<T>(), |a, (c, h)| a + c.conj() * *h);
        cost += gamma / T::from_count(pair.n_atoms()) * e.re;
    }
    Ok(cost)
}

/// `dJ_T/dC^* = Jz^2 C + (gamma/N) H C`.
pub fn cost_derivative_c<T: Real, H: Operator<T> + ?Sized>(
    coeffs: &[Complex<T>],
    f_tilde: Complex<T>,
    hamiltonian: &H,
    gamma: T,
) -> Result<Vec<Complex<T>>> {
    let n = coeffs.len().saturating_sub(1);
    if hamiltonian.dim() != coeffs.len() {
        return Err(Error::DimensionMismatch {
            expected: coeffs.len(),
            got: hamiltonian.dim(),
        });
    }
    let jz = jz_orbital(f_tilde, n)?;
    let mut out = jz.apply(&jz.apply(coeffs));
    if gamma != T::zero() {
        let w = gamma / T::from_count(n);
        for (o, h) in out.iter_mut().zip(hamiltonian.apply(coeffs)) {
            *o += h * w;
        }
    }
    Ok(out)
}

/// `(dJ_T/dphi_g^*, dJ_T/dphi_u^*)` as grid functions:
///
/// ```text
/// dJz/dphi_g^* = theta phi_u / 4 (a_g^+ a_u / |f| - a_u^+ a_g (f^*)^2 / |f|^3)
/// dJz/dphi_u^* = theta phi_g / 4 (a_u^+ a_g / |f| - a_g^+ a_u f^2 / |f|^3)
/// dJ_T/dphi^*  = <C| Jz dJz/dphi^* + dJz/dphi^* Jz |C>
/// ```
///
/// The energy term is taken at fixed matrix elements and contributes nothing.
pub fn cost_derivative_orbitals<T: Real>(
    grid: &Grid1D<T>,
    pair: &OrbitalPair<T>,
) -> Result<(Vec<Complex<T>>, Vec<Complex<T>>)> {
    let (f, ft) = compute_f(grid, &pair.phi_g, &pair.phi_u)?;
    let n = pair.n_atoms();
    let c = &pair.coeffs;
    let jz = jz_orbital(ft, n)?;
    let jc = jz.apply(c);
    // <C| Jz A + A Jz |C> for A = a_g^+ a_u (raise) and a_u^+ a_g (lower)
    let sym = |create: usize, annihilate: usize| {
        let mut ac = vec![czero::<T>(); n + 1];
        for (k, z) in c.iter().enumerate() {
            if let Some((t, a)) = act::<T>(n, k, &[create], &[annihilate]) {
                ac[t] += *z * a;
            }
        }
        // <C|Jz A|C> = <Jz C|A C> since Jz is Hermitian; <C|A Jz|C> = <C|A (Jz C)>
        let mut ajc = vec![czero::<T>(); n + 1];
        for (k, z) in jc.iter().enumerate() {
            if let Some((t, a)) = act::<T>(n, k, &[create], &[annihilate]) {
                ajc[t] += *z * a;
            }
        }
        let first = jc.iter().zip(&ac).fold(czero::<T>(), |s, (x, y)| s + x.conj() * *y);
        let second = c.iter().zip(&ajc).fold(czero::<T>(), |s, (x, y)| s + x.conj() * *y);
        first + second
    };
    let s_gu = sym(0, 1);
    let s_ug = sym(1, 0);
    let m = f.norm();
    let m3 = m * m * m;
    let quarter = T::lit(0.25);
    let coef_g = (s_gu / m - s_ug * (f.conj() * f.conj()) / m3) * quarter;
    let coef_u = (s_ug / m - s_gu * (f * f) / m3) * quarter;
    let p = grid.points();
    let dg = (0..p).map(|i| pair.phi_u[i] * grid.theta(i) * coef_g).collect();
    let du = (0..p).map(|i| pair.phi_g[i] * grid.theta(i) * coef_u).collect();
    Ok((dg, du))
}

/// Occupation-weighted total density `sum rho_ij phi_i^* phi_j` (integrates to
/// `N`) and the two orbital densities.
pub fn densities<T: Real>(pair: &OrbitalPair<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rho = one_body_density(&pair.coeffs);
    let p = pair.phi_g.len();
    let total = (0..p)
        .map(|x| {
            let o = [pair.phi_g[x], pair.phi_u[x]];
            let mut acc = czero::<T>();
            for i in 0..2 {
                for j in 0..2 {
                    acc += rho[i][j] * o[i].conj() * o[j];
                }
            }
            acc.re
        })
        .collect();
    let g = pair.phi_g.iter().map(|z| z.norm_sqr()).collect();
    let u = pair.phi_u.iter().map(|z| z.norm_sqr()).collect();
    (total, g, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::two_mode::coherent_amplitudes;

    fn grid() -> Grid1D<f64> {
        Grid1D::new(3.0, 129).unwrap()
    }

    fn quartic() -> Potential<f64> {
        Potential::Quartic(QuarticPotential::new(5.0, 30.0, 0.5, (0.0, 1.4)).unwrap())
    }

    #[test]
    fn grid_is_symmetric() {
        let g = Grid1D::<f64>::new(3.0, 256).unwrap();
        for i in 0..256 {
            assert_eq!(g.nodes()[i], -g.nodes()[g.mirror(i)]);
        }
        assert!((g.dx() - 6.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn quartic_shape() {
        let q = QuarticPotential::<f64>::new(5.0, 30.0, 0.5, (0.0, 1.4)).unwrap();
        assert!(q.minima(0.4).is_none());
        let xm = q.minima(0.7).unwrap();
        let b = q.quadratic(0.7);
        assert!((xm - (b / 10.0).sqrt()).abs() < 1e-14);
        assert!(q.value(0.7, xm).abs() < 1e-12);
        assert!((q.value(0.7, 0.0) - b * b / 20.0).abs() < 1e-12);
        let g = grid();
        let v = surrogate_potential(&quartic(), 0.9, &g).unwrap();
        for i in 0..g.points() {
            assert_eq!(v[i], v[g.mirror(i)]);
        }
        assert!(surrogate_potential(&quartic(), 1.5, &g).is_err());
    }

    #[test]
    fn table_round_trip_and_interpolation() {
        let g = grid();
        let q = QuarticPotential::<f64>::new(5.0, 30.0, 0.5, (0.0, 1.4)).unwrap();
        let t = PotentialTable::tabulate(&q, &g, vec![0.6, 0.8]).unwrap();
        let mut buf = Vec::new();
        t.to_csv(&mut buf).unwrap();
        let back = PotentialTable::<f64>::from_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let v = surrogate_potential(&Potential::Table(back), 0.7, &g).unwrap();
        let want = 0.5 * (q.value(0.6, g.nodes()[40]) + q.value(0.8, g.nodes()[40]));
        assert!((v[40] - want).abs() < 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn single_particle_parity_and_order() {
        let g = grid();
        let v = surrogate_potential(&quartic(), 0.8, &g).unwrap();
        let ((eg, pg), (eu, pu)) = single_particle_states(&g, &v).unwrap();
        assert!(eu > eg);
        assert!(g.inner(&pg, &pu).norm() < 1e-12);
        let pair = OrbitalPair::new(&g, pg, pu, vec![Complex::new(1.0, 0.0), czero()], 0.0).unwrap();
        assert!(pair.parity_defect(&g) < 1e-14);
    }

    #[test]
    fn f_for_sign_symmetric_pair() {
        let g = Grid1D::<f64>::new(3.0, 256).unwrap();
        let v = surrogate_potential(&quartic(), 0.4, &g).unwrap();
        let ((_, pg), _) = single_particle_states(&g, &v).unwrap();
        let pu: Vec<Complex<f64>> = (0..g.points()).map(|i| pg[i] * g.nodes()[i].signum()).collect();
        let (f, ft) = compute_f(&g, &pg, &pu).unwrap();
        assert!((f.re - 0.5).abs() < 1e-12 && f.im.abs() < 1e-14);
        assert!((ft - Complex::new(1.0, 0.0)).norm() < 1e-14);
        let rot = Complex::from_polar(1.0, 0.4);
        let pu2: Vec<_> = pu.iter().map(|z| z * rot).collect();
        let (f2, ft2) = compute_f(&g, &pg, &pu2).unwrap();
        assert!((f2 - f * rot).norm() < 1e-14);
        assert!((ft2 - ft * rot).norm() < 1e-14);
        let zero = vec![czero(); g.points()];
        assert!(matches!(compute_f(&g, &pg, &zero), Err(Error::DegeneratePhase(_))));
    }

    #[test]
    fn lr_round_trip() {
        let g = grid();
        let v = surrogate_potential(&quartic(), 0.9, &g).unwrap();
        let ((_, pg), (_, pu)) = single_particle_states(&g, &v).unwrap();
        let ft = Complex::from_polar(1.0, 1.1);
        let (l, r) = lr_transform(&pg, &pu, ft).unwrap();
        assert!(g.inner(&l, &r).norm() < 1e-12);
        assert!((g.norm(&l) - 1.0).abs() < 1e-12);
        let (g2, u2) = gu_transform(&l, &r, ft).unwrap();
        let (l2, r2) = lr_transform(&g2, &u2, ft).unwrap();
        for i in 0..g.points() {
            assert!((l2[i] - l[i]).norm() < 1e-12 && (r2[i] - r[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn jz_orbital_spectrum() {
        for n in [1usize, 2, 5, 10] {
            let jz = jz_orbital(Complex::from_polar(1.0, 0.77), n).unwrap();
            assert!(jz.is_hermitian(1e-15));
            let off = jz.upper.iter().map(|z| z.norm()).collect();
            let sym = SymTridiagonal::new(vec![0.0; n + 1], off).unwrap();
            for k in 0..=n {
                let want = k as f64 - n as f64 / 2.0;
                assert!((sym.eigenvalue(k) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn densities_integrate() {
        let g = grid();
        let v = surrogate_potential(&quartic(), 0.9, &g).unwrap();
        let ((_, pg), (_, pu)) = single_particle_states(&g, &v).unwrap();
        let c = coherent_amplitudes::<f64>(6, 1.0, 0.3);
        let pair = OrbitalPair::new(&g, pg, pu, c, 0.0).unwrap();
        let (tot, dg, _) = densities(&pair);
        let w = |d: &[f64]| (0..g.points()).map(|i| d[i] * g.weight(i)).sum::<f64>();
        assert!((w(&tot) - 6.0).abs() < 1e-10);
        assert!((w(&dg) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn regularized_inverse_inverts() {
        let rho = [
            [Complex::new(3.0, 0.0), Complex::new(0.5, 0.2)],
            [Complex::new(0.5, -0.2), Complex::new(1.0, 0.0)],
        ];
        let inv = regularized_inverse(rho, 1e-8);
        for i in 0..2 {
            for j in 0..2 {
                let e = (0..2).fold(czero::<f64>(), |a, k| a + rho[i][k] * inv[k][j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e - Complex::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }
}
