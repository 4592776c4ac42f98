//! Bounded Nelder-Mead simplex search.

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct NelderMeadOptions<T> {
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: T,
    pub max_evals: usize,
    /// Stop when all vertex values lie within `ftol_abs + ftol_rel * |f_best|` ...
    pub ftol_abs: T,
    pub ftol_rel: T,
    /// ... and all vertices lie within `xtol` (sup norm) of the best vertex.
    pub xtol: T,
    /// Box constraints, one `(lo, hi)` per coordinate. Points are projected.
    pub bounds: Vec<(T, T)>,
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult<T> {
    pub x: Vec<T>,
    pub f: T,
    pub evals: usize,
    pub converged: bool,
}

fn project<T: Scalar>(x: &mut [T], bounds: &[(T, T)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as `+inf`.
///
/// A converged search is restarted from its best vertex with a fresh simplex,
/// since projection onto the bounds can collapse the simplex prematurely.
pub fn nelder_mead<T: Scalar>(mut f: impl FnMut(&[T]) -> T, x0: &[T], opts: &NelderMeadOptions<T>) -> NelderMeadResult<T> {
    let mut res = simplex_search(&mut f, x0, opts, opts.max_evals);
    for _ in 0..2 {
        if !res.converged || res.evals >= opts.max_evals {
            break;
        }
        let again = simplex_search(&mut f, &res.x, opts, opts.max_evals - res.evals);
        let gain = res.f - again.f;
        let evals = res.evals + again.evals;
        let moved = again.f < res.f;
        if moved {
            res = NelderMeadResult { evals, ..again };
        } else {
            res.evals = evals;
        }
        if !moved || gain <= opts.ftol_abs + opts.ftol_rel * res.f.abs() {
            break;
        }
    }
    res
}

fn simplex_search<T: Scalar>(
    f: &mut impl FnMut(&[T]) -> T,
    x0: &[T],
    opts: &NelderMeadOptions<T>,
    max_evals: usize,
) -> NelderMeadResult<T> {
    let dim = x0.len();
    let inf = T::max_value().unwrap();
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            inf
        }
    };

    let mut start = x0.to_vec();
    project(&mut start, &opts.bounds);
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(dim + 1);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for i in 0..dim {
        let mut x = start.clone();
        x[i] += opts.initial_step;
        project(&mut x, &opts.bounds);
        if x[i] == start[i] {
            x[i] -= opts.initial_step;
            project(&mut x, &opts.bounds);
        }
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    let (alpha, gamma, rho, shrink) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let fspread = worst - best;
        let xspread =
            simplex[1..].iter().fold(T::zero(), |acc, (x, _)| x.iter().zip(&simplex[0].0).fold(acc, |a, (u, v)| a.max((*u - *v).abs())));
        if fspread <= opts.ftol_abs + opts.ftol_rel * best.abs() && xspread <= opts.xtol {
            converged = true;
            break;
        }
        if evals >= max_evals {
            break;
        }

        let mut centroid = vec![T::zero(); dim];
        for (x, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += *v;
            }
        }
        let inv = T::one() / T::lit(dim as f64);
        centroid.iter_mut().for_each(|c| *c *= inv);

        let along = |t: T, worst: &[T]| -> Vec<T> {
            let mut p: Vec<T> = centroid.iter().zip(worst).map(|(c, w)| *c + t * (*c - *w)).collect();
            project(&mut p, &opts.bounds);
            p
        };
        let xw = simplex[dim].0.clone();
        let xr = along(alpha, &xw);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(gamma, &xw);
            let fe = eval(&xe, &mut evals);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(rho, &xw);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho, &xw);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < worst.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let xb = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            for (v, b) in x.iter_mut().zip(&xb) {
                *v = *b + shrink * (*v - *b);
            }
            *fx = eval(x, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult { x, f, evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(dim: usize) -> NelderMeadOptions<f64> {
        NelderMeadOptions {
            initial_step: 0.5,
            max_evals: 5000,
            ftol_abs: 1e-14,
            ftol_rel: 0.0,
            xtol: 1e-8,
            bounds: vec![(-10.0, 10.0); dim],
        }
    }

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], &opts(2));
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] - 5.0).powi(2) + (x[1] + 1.0).powi(2);
        let mut o = opts(2);
        o.bounds = vec![(-1.0, 2.0), (-3.0, 3.0)];
        let r = nelder_mead(f, &[0.0, 0.0], &o);
        assert!((r.x[0] - 2.0).abs() < 1e-6, "{:?} {}", r.x, r.evals);
        assert!((r.x[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn treats_nan_as_infeasible() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) + x[1] * x[1] };
        let r = nelder_mead(f, &[0.5, 0.5], &opts(2));
        assert!((r.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn never_returns_worse_than_start() {
        let f = |x: &[f64]| x.iter().map(|v| v.abs().sqrt()).sum::<f64>();
        let x0 = [0.0, 0.0, 0.0];
        let r = nelder_mead(f, &x0, &opts(3));
        assert!(r.f <= f(&x0));
    }
}
