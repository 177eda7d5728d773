//! Tridiagonal kernels: matrix-vector products, Cayley-form solves for
//! Crank-Nicolson stepping, and eigenpairs of real symmetric tridiagonal
//! matrices (Sturm bisection followed by inverse iteration).

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{czero, Real};

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal<T> {
    pub diag: Vec<T>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<T>,
}

impl<T: Real> SymTridiagonal<T> {
    pub fn new(diag: Vec<T>, off: Vec<T>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidArgument(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = x[i] * self.diag[i];
            if i > 0 {
                acc += x[i - 1] * self.off[i - 1];
            }
            if i + 1 < n {
                acc += x[i + 1] * self.off[i];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut out = vec![czero(); x.len()];
        self.apply_into(x, &mut out);
        out
    }

    fn apply_real(&self, x: &[T], out: &mut [T]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (T, T) {
        let n = self.dim();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..n {
            let mut r = T::zero();
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Upper bound on the spectral radius.
    pub fn spectral_bound(&self) -> T {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: T) -> usize {
        let tiny = T::min_positive_value().sqrt();
        let mut count = 0;
        let mut q = T::one();
        for i in 0..self.dim() {
            let coupling = if i == 0 {
                T::zero()
            } else {
                self.off[i - 1] * self.off[i - 1] / q
            };
            q = self.diag[i] - x - coupling;
            if q == T::zero() {
                q = -tiny;
            }
            if q < T::zero() {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> T {
        assert!(k < self.dim(), "eigenvalue index out of range");
        let (mut lo, mut hi) = self.gershgorin();
        let pad = (hi - lo).abs().max(T::one()) * T::epsilon();
        lo -= pad;
        hi += pad;
        for _ in 0..400 {
            let mid = T::lit(0.5) * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        T::lit(0.5) * (lo + hi)
    }

    /// Eigenpair `k` (0-based, ascending).
    ///
    /// The eigenvector is real, unit-norm and has its largest-magnitude entry
    /// positive. The returned eigenvalue is the Rayleigh quotient.
    pub fn eigenpair(&self, k: usize) -> Result<(T, Vec<T>)> {
        let n = self.dim();
        if n == 1 {
            return Ok((self.diag[0], vec![T::one()]));
        }
        let shift = self.eigenvalue(k);
        let scale = self.spectral_bound().max(T::min_positive_value());
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0)) * scale;

        let mut x: Vec<T> = (0..n)
            .map(|i| T::one() + T::lit(0.25) * T::from_count(i).sin())
            .collect();
        normalize_real(&mut x);
        let mut hx = vec![T::zero(); n];
        let mut lambda = shift;
        let mut residual = T::infinity();

        for _ in 0..8 {
            let mut y = shifted_solve(self, shift, &x)?;
            normalize_real(&mut y);
            x = y;
            self.apply_real(&x, &mut hx);
            lambda = x.iter().zip(&hx).map(|(a, b)| *a * *b).sum();
            residual = hx
                .iter()
                .zip(&x)
                .map(|(h, v)| {
                    let r = *h - lambda * *v;
                    r * r
                })
                .sum::<T>()
                .sqrt();
            if residual <= tol {
                break;
            }
        }
        if !residual.is_finite() || residual > tol * T::lit(1e3) {
            return Err(Error::Numerical(format!(
                "inverse iteration did not converge: residual {}",
                residual
            )));
        }
        let pivot = x
            .iter()
            .copied()
            .fold(T::zero(), |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < T::zero() {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        Ok((lambda, x))
    }

    /// Dense copy, row-major. Intended for small test oracles.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        let mut m = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i + 1 < n {
                m[i][i + 1] = self.off[i];
                m[i + 1][i] = self.off[i];
            }
        }
        m
    }
}

fn normalize_real<T: Real>(x: &mut [T]) {
    let n = x.iter().map(|v| *v * *v).sum::<T>().sqrt();
    if n > T::zero() {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Solves `(A - shift I) y = b` by Gaussian elimination with partial pivoting.
/// Exact zero pivots are replaced by a tiny value, as is customary for inverse
/// iteration where the shifted matrix is singular to working precision.
fn shifted_solve<T: Real>(a: &SymTridiagonal<T>, shift: T, b: &[T]) -> Result<Vec<T>> {
    let n = a.dim();
    let tiny = T::epsilon() * a.spectral_bound().max(T::one());
    // Row i holds entries in columns i, i+1, i+2 after elimination.
    let mut d: Vec<T> = a.diag.iter().map(|&v| v - shift).collect();
    let mut du: Vec<T> = a.off.clone();
    let mut du2 = vec![T::zero(); n.saturating_sub(2)];
    let dl: Vec<T> = a.off.clone();
    let mut rhs = b.to_vec();

    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == T::zero() {
                d[i] = tiny;
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            rhs[i + 1] = rhs[i + 1] - fact * rhs[i];
        } else {
            // Swap rows i and i + 1, then eliminate.
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let (ri, rn) = (rhs[i], rhs[i + 1]);
            rhs[i] = rn;
            rhs[i + 1] = ri - fact * rn;
        }
    }
    if d[n - 1] == T::zero() {
        d[n - 1] = tiny;
    }
    let mut y = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        if i + 1 < n {
            acc -= du[i] * y[i + 1];
        }
        if i + 2 < n {
            acc -= du2[i] * y[i + 2];
        }
        y[i] = acc / d[i];
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("tridiagonal solve produced non-finite values".into()));
    }
    Ok(y)
}

/// Solves `(I + z H) x = b` for real symmetric tridiagonal `H` and complex `z`
/// using the Thomas algorithm.
///
/// With `z` purely imaginary the matrix has positive definite Hermitian part,
/// so elimination without pivoting is stable.
pub fn cayley_solve<T: Real>(
    h: &SymTridiagonal<T>,
    z: Complex<T>,
    b: &[Complex<T>],
    out: &mut [Complex<T>],
    scratch: &mut Vec<Complex<T>>,
) {
    let n = h.dim();
    scratch.clear();
    scratch.resize(n, czero());
    let one = Complex::new(T::one(), T::zero());
    let mut denom = one + z * h.diag[0];
    out[0] = b[0] / denom;
    for i in 1..n {
        let off = z * h.off[i - 1];
        scratch[i - 1] = off / denom;
        denom = one + z * h.diag[i] - off * scratch[i - 1];
        out[i] = (b[i] - off * out[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        let next = out[i + 1];
        out[i] -= scratch[i] * next;
    }
}

/// Computes `(I + z H) x` without allocating.
pub fn cayley_apply<T: Real>(
    h: &SymTridiagonal<T>,
    z: Complex<T>,
    x: &[Complex<T>],
    out: &mut [Complex<T>],
) {
    h.apply_into(x, out);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = *xi + z * *o;
    }
}

/// General complex tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    /// `lower[i]` is entry `(i + 1, i)`.
    pub lower: Vec<Complex<T>>,
    pub diag: Vec<Complex<T>>,
    /// `upper[i]` is entry `(i, i + 1)`.
    pub upper: Vec<Complex<T>>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.diag.iter().all(|d| d.im.abs() <= tol)
            && self
                .lower
                .iter()
                .zip(&self.upper)
                .all(|(l, u)| (l - u.conj()).norm() <= tol)
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex<T>>> {
        let n = self.dim();
        let mut m = vec![vec![czero(); n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i + 1 < n {
                m[i][i + 1] = self.upper[i];
                m[i + 1][i] = self.lower[i];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymTridiagonal<f64> {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn sturm_bisection_matches_closed_form() {
        let n = 12;
        let a = laplacian(n);
        for k in 0..n {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((a.eigenvalue(k) - exact).abs() < 1e-13, "k = {k}");
        }
    }

    #[test]
    fn inverse_iteration_eigenvectors() {
        let n = 9;
        let a = laplacian(n);
        for k in [0, 1, 4, 8] {
            let (lam, v) = a.eigenpair(k).unwrap();
            let mut hv = vec![0.0; n];
            a.apply_real(&v, &mut hv);
            let res: f64 = hv.iter().zip(&v).map(|(h, x)| (h - lam * x).powi(2)).sum();
            assert!(res.sqrt() < 1e-12);
        }
    }

    #[test]
    fn pivoting_solve_handles_zero_diagonal() {
        let a = SymTridiagonal::new(vec![0.0f64; 4], vec![1.0; 3]).unwrap();
        let b = [1.0, 2.0, 3.0, 4.0];
        let y = shifted_solve(&a, 0.0, &b).unwrap();
        let mut ay = vec![0.0; 4];
        a.apply_real(&y, &mut ay);
        for (l, r) in ay.iter().zip(&b) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn cayley_solve_inverts_cayley_apply() {
        let h = SymTridiagonal::new(vec![1.0, -0.5, 3.0, 0.2], vec![0.7, -1.1, 0.4]).unwrap();
        let z = Complex::new(0.0, 0.3);
        let x: Vec<_> = (0..4).map(|i| Complex::new(i as f64, 1.0 - i as f64)).collect();
        let mut b = vec![Complex::new(0.0, 0.0); 4];
        cayley_apply(&h, z, &x, &mut b);
        let mut back = vec![Complex::new(0.0, 0.0); 4];
        let mut scratch = Vec::new();
        cayley_solve(&h, z, &b, &mut back, &mut scratch);
        for (p, q) in x.iter().zip(&back) {
            assert!((p - q).norm() < 1e-13);
        }
    }
}
