//! Box-constrained quasi-Newton minimizer for small dense problems.
//!
//! Projected BFGS: variables sitting on a bound with the gradient pushing
//! outward are held fixed, the inverse-Hessian estimate drives the remaining
//! ones, and a backtracking Armijo search runs along the projected path.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds<const N: usize> {
    pub lower: [f64; N],
    pub upper: [f64; N],
}

impl<const N: usize> Bounds<N> {
    pub fn project(&self, x: &mut [f64; N]) {
        for i in 0..N {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    /// Largest trial step (infinity norm) before backtracking.
    pub max_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Infinity norm of the projected gradient fell below tolerance.
    Gradient,
    /// Accepted step (or failed line search) shorter than tolerance.
    Step,
    MaxIterations,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::MaxIterations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum<const N: usize> {
    pub x: [f64; N],
    pub value: f64,
    pub iterations: usize,
    pub termination: Termination,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm<const N: usize>(a: &[f64; N]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn blocked<const N: usize>(x: &[f64; N], dir: &[f64; N], bounds: &Bounds<N>, i: usize) -> bool {
    (x[i] <= bounds.lower[i] && dir[i] < 0.0) || (x[i] >= bounds.upper[i] && dir[i] > 0.0)
}

/// Minimizes `f` over the box. `f` returns the value and the gradient.
pub fn minimize<const N: usize, F>(
    mut f: F,
    x0: [f64; N],
    bounds: &Bounds<N>,
    options: &Options,
) -> Minimum<N>
where
    F: FnMut(&[f64; N]) -> (f64, [f64; N]),
{
    let mut x = x0;
    bounds.project(&mut x);
    let (mut fx, mut g) = f(&x);
    let mut h = identity::<N>();
    let mut fresh = true;

    for iteration in 0..options.max_iterations {
        let mut pg = g;
        let neg: [f64; N] = g.map(|v| -v);
        for i in 0..N {
            if blocked(&x, &neg, bounds, i) {
                pg[i] = 0.0;
            }
        }
        if inf_norm(&pg) < options.gradient_tolerance {
            return Minimum { x, value: fx, iterations: iteration, termination: Termination::Gradient };
        }

        let mut d = [0.0; N];
        for i in 0..N {
            if pg[i] == 0.0 && g[i] != 0.0 {
                continue;
            }
            for j in 0..N {
                if pg[j] == 0.0 && g[j] != 0.0 {
                    continue;
                }
                d[i] -= h[i][j] * g[j];
            }
        }
        for i in 0..N {
            if blocked(&x, &d, bounds, i) {
                d[i] = 0.0;
            }
        }
        if dot(&d, &g) >= 0.0 || !d.iter().all(|v| v.is_finite()) {
            d = pg.map(|v| -v);
            h = identity::<N>();
            fresh = true;
        }

        let d_norm = inf_norm(&d);
        let mut alpha = if d_norm > options.max_step { options.max_step / d_norm } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut xn = x;
            for i in 0..N {
                xn[i] += alpha * d[i];
            }
            bounds.project(&mut xn);
            let s: [f64; N] = std::array::from_fn(|i| xn[i] - x[i]);
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && fn_ <= fx + ARMIJO * dot(&g, &s) {
                accepted = Some((xn, s, fn_, gn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, s, fn_, gn)) = accepted else {
            return Minimum { x, value: fx, iterations: iteration + 1, termination: Termination::Step };
        };

        let y: [f64; N] = std::array::from_fn(|i| gn[i] - g[i]);
        x = xn;
        fx = fn_;
        g = gn;
        if inf_norm(&s) < options.step_tolerance {
            return Minimum { x, value: fx, iterations: iteration + 1, termination: Termination::Step };
        }

        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h = identity::<N>();
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = scale;
                }
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
    }
    Minimum { x, value: fx, iterations: options.max_iterations, termination: Termination::MaxIterations }
}

fn identity<const N: usize>() -> [[f64; N]; N] {
    let mut m = [[0.0; N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update<const N: usize>(h: &mut [[f64; N]; N], s: &[f64; N], y: &[f64; N], sy: f64) {
    let rho = 1.0 / sy;
    let hy: [f64; N] = std::array::from_fn(|i| dot(&h[i], y));
    let yhy = dot(y, &hy);
    for i in 0..N {
        for j in 0..N {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
