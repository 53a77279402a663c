//! Dormand–Prince 5(4) integrator for complex-valued systems.
//!
//! The integrator is deliberately small: a right-hand side, an error scale,
//! and an observer that sees every accepted step and may modify the state in
//! place (used for renormalising fundamental matrices) or stop integration.

use num_complex::Complex64 as C;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Error coefficients: fifth-order minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// A first-order system `y' = f(t, y)` with complex state.
pub trait OdeSystem {
    fn rhs(&self, t: f64, y: &[C], dy: &mut [C]);

    /// Weight used to scale the local error of component `i`.
    fn error_scale(&self, y: &[C], i: usize, opts: &Dopri5Options) -> f64 {
        opts.atol + opts.rtol * y[i].norm()
    }

    /// Upper bound on the next step size at state `y` (default: unbounded).
    fn max_step(&self, _t: f64, _y: &[C]) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Dopri5Options {
            rtol: 1e-10,
            atol: 1e-12,
            h0: 1e-3,
            h_max: f64::INFINITY,
            max_steps: 100_000,
        }
    }
}

/// What the observer wants after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Why integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finish {
    /// Reached the requested end time.
    Reached,
    /// The observer asked to stop.
    Stopped,
    /// The step budget ran out.
    StepLimit,
    /// The step size underflowed.
    StepUnderflow,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<C>,
    pub finish: Finish,
    pub steps: usize,
}

/// Integrate from `t0` to `t_end` (which may be `f64::INFINITY`).
///
/// `observe(t, y)` is called after each accepted step and may modify `y`.
pub fn integrate<S, O>(
    sys: &S,
    t0: f64,
    y0: &[C],
    t_end: f64,
    opts: &Dopri5Options,
    mut observe: O,
) -> Outcome
where
    S: OdeSystem + ?Sized,
    O: FnMut(f64, &mut Vec<C>) -> Control,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<C>> = vec![vec![C::new(0.0, 0.0); n]; 7];
    let mut tmp = vec![C::new(0.0, 0.0); n];
    let mut y_new = vec![C::new(0.0, 0.0); n];
    let mut h = opts.h0.min(opts.h_max);
    let mut steps = 0usize;
    let mut fsal_valid = false;

    loop {
        if t >= t_end {
            return Outcome { t, y, finish: Finish::Reached, steps };
        }
        if steps >= opts.max_steps {
            return Outcome { t, y, finish: Finish::StepLimit, steps };
        }
        h = h.min(opts.h_max).min(sys.max_step(t, &y));
        let mut last = false;
        if t + h >= t_end {
            h = t_end - t;
            last = true;
        }
        if h <= 1e-14 * t.abs().max(1.0) * 1e-2 {
            return Outcome { t, y, finish: Finish::StepUnderflow, steps };
        }
        if !fsal_valid {
            sys.rhs(t, &y, &mut k[0]);
        }
        stage(&y, &k, &[A21], h, &mut tmp);
        sys.rhs(t + C2 * h, &tmp, &mut k[1]);
        stage(&y, &k, &[A31, A32], h, &mut tmp);
        sys.rhs(t + C3 * h, &tmp, &mut k[2]);
        stage(&y, &k, &[A41, A42, A43], h, &mut tmp);
        sys.rhs(t + C4 * h, &tmp, &mut k[3]);
        stage(&y, &k, &[A51, A52, A53, A54], h, &mut tmp);
        sys.rhs(t + C5 * h, &tmp, &mut k[4]);
        stage(&y, &k, &[A61, A62, A63, A64, A65], h, &mut tmp);
        sys.rhs(t + h, &tmp, &mut k[5]);
        stage(&y, &k, &[A71, 0.0, A73, A74, A75, A76], h, &mut y_new);
        sys.rhs(t + h, &y_new, &mut k[6]);

        let mut err = 0.0f64;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = sys.error_scale(&y, i, opts).max(sys.error_scale(&y_new, i, opts));
            let r = e.norm() / sc;
            err = err.max(r);
        }
        steps += 1;
        if !err.is_finite() {
            h *= 0.1;
            fsal_valid = true;
            continue;
        }
        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            let ctl = observe(t, &mut y);
            // The observer may have modified y; recompute the first stage then.
            fsal_valid = false;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
            if ctl == Control::Stop {
                return Outcome { t, y, finish: Finish::Stopped, steps };
            }
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            fsal_valid = true;
        }
    }
}

fn stage(y: &[C], k: &[Vec<C>], a: &[f64], h: f64, out: &mut [C]) {
    for i in 0..y.len() {
        let mut s = C::new(0.0, 0.0);
        for (j, &aj) in a.iter().enumerate() {
            if aj != 0.0 {
                s += aj * k[j][i];
            }
        }
        out[i] = y[i] + h * s;
    }
}
