//! Box-constrained Nelder-Mead simplex search.

use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions<T> {
    pub max_evals: usize,
    /// Stop when the simplex spread in objective value falls below this.
    pub f_tol: T,
    /// Stop when every vertex is within this (relative to the box) of the best.
    pub x_tol: T,
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: T,
}

impl<T: Real> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        Self {
            max_evals: 200,
            f_tol: T::lit(1e-8),
            x_tol: T::lit(1e-6),
            initial_step: T::lit(0.25),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evals: usize,
}

/// Minimizes `f` over the box `bounds` starting from `x0`. Coordinates whose
/// interval is a single point are held fixed; trial points are clamped into
/// the box. Non-finite objective values count as `+inf`.
pub fn minimize<T: Real>(
    f: impl Fn(&[T]) -> T,
    x0: &[T],
    bounds: &[(T, T)],
    opts: NelderMeadOptions<T>,
) -> NelderMeadResult<T> {
    assert_eq!(x0.len(), bounds.len());
    let clamp = |x: &mut Vec<T>| {
        for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.max(lo).min(hi);
        }
    };
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[T]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };

    let mut start = x0.to_vec();
    clamp(&mut start);
    let free: Vec<usize> = (0..bounds.len())
        .filter(|&i| bounds[i].1 > bounds[i].0)
        .collect();
    let start_value = eval(&start);
    if free.is_empty() {
        return NelderMeadResult {
            x: start,
            value: start_value,
            evals: evals.get(),
        };
    }

    let mut simplex = vec![(start.clone(), start_value)];
    for &i in &free {
        let (lo, hi) = bounds[i];
        let step = (hi - lo) * opts.initial_step;
        let mut x = start.clone();
        x[i] = if x[i] + step <= hi { x[i] + step } else { x[i] - step };
        clamp(&mut x);
        let v = eval(&x);
        simplex.push((x, v));
    }

    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let n = free.len();
    while evals.get() < opts.max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = if worst.is_finite() { worst - best } else { T::infinity() };
        let mut size = T::zero();
        for (x, _) in &simplex[1..] {
            for &i in &free {
                let (lo, hi) = bounds[i];
                size = size.max((x[i] - simplex[0].0[i]).abs() / (hi - lo));
            }
        }
        if spread <= opts.f_tol * (T::one() + best.abs()) && size <= opts.x_tol {
            break;
        }
        if size <= opts.x_tol * T::lit(1e-3) {
            break;
        }

        let mut centroid = simplex[0].0.clone();
        for &i in &free {
            centroid[i] = simplex[..n].iter().map(|(x, _)| x[i]).sum::<T>() / T::from_count(n);
        }
        let along = |coef: T| {
            let mut x = centroid.clone();
            for &i in &free {
                x[i] = centroid[i] + coef * (simplex[n].0[i] - centroid[i]);
            }
            clamp(&mut x);
            x
        };

        let xr = along(-T::one());
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-two);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = along(-half);
            let v = eval(&x);
            (x, v)
        } else {
            let x = along(half);
            let v = eval(&x);
            (x, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            for &i in &free {
                vertex.0[i] = x_best[i] + half * (vertex.0[i] - x_best[i]);
            }
            vertex.1 = eval(&vertex.0);
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        evals: evals.get(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 2000,
            f_tol: 1e-14,
            x_tol: 1e-8,
            ..Default::default()
        };
        let r = minimize(f, &[-1.0, 1.5], &[(-2.0, 2.0), (-1.0, 3.0)], opts);
        assert!((r.x[0] - 1.0).abs() < 1e-4, "{:?}", r);
        assert!((r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn respects_box() {
        let r = minimize(|x: &[f64]| x[0], &[0.5], &[(0.2, 1.0)], Default::default());
        assert_eq!(r.x[0], 0.2);
    }

    #[test]
    fn degenerate_box_evaluates_once() {
        let r = minimize(|x: &[f64]| x[0] * x[1], &[3.0, 4.0], &[(3.0, 3.0), (4.0, 4.0)], Default::default());
        assert_eq!(r.evals, 1);
        assert_eq!(r.x, vec![3.0, 4.0]);
        assert_eq!(r.value, 12.0);
    }
}
