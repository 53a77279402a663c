//! Real and slanted trajectories of `x' = p(x)` and the separatrices of infinity.
//!
//! Trajectories are integrated in arc length `s`:
//! `dx/ds = w p(x) / |p(x)|`, `dt/ds = w / |p(x)|`, where `w = +-e^{-i slant}`
//! (or any unit complex direction for auxiliary curves). Near a root the
//! unit-speed parametrisation keeps steps from collapsing, and the step size
//! is bounded by a fraction of the local length scale `|p| / |p'|`.

use crate::context::Tolerances;
use crate::ode::{self, Control, Dopri5Options, Finish, OdeSystem};
use crate::polyfield::{self, Parameter, PointKind, SingularPoint};
use crate::{Error, Result};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ConvergedToRoot(usize),
    EscapedToInfinity,
    StepLimit,
    /// The requested real-time horizon was reached first.
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: C,
    pub x: C,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub slant: f64,
    pub termination: Termination,
}

impl Trajectory {
    pub fn positions(&self) -> Vec<C> {
        self.samples.iter().map(|s| s.x).collect()
    }

    pub fn last(&self) -> Sample {
        *self.samples.last().expect("trajectory has samples")
    }

    /// Largest normalised residual `|dx - p(x) dt| / (|dt| max(1, |p(x)|))`.
    pub fn max_residual(&self, param: &Parameter) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                let dt = w[1].t - w[0].t;
                let p = param.eval(w[0].x);
                if dt.norm() == 0.0 {
                    return 0.0;
                }
                (w[1].x - w[0].x - p * dt).norm() / (dt.norm() * p.norm().max(1.0))
            })
            .fold(0.0, f64::max)
    }
}

/// Roots and scale-aware radii for one parameter value.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub param: Parameter,
    pub points: Vec<SingularPoint>,
    pub escape_radius: f64,
    pub capture_radius: f64,
    pub tol: Tolerances,
}

impl FlowField {
    pub fn new(param: &Parameter, tol: &Tolerances) -> Result<Self> {
        let points = polyfield::roots(param, tol)?;
        let norm = polyfield::eps_norm(param);
        let escape_radius = tol.escape_factor * norm.max(1.0);
        let min_dist = polyfield::min_root_distance(&points);
        let simple = points.iter().all(|p| p.kind != PointKind::Multiple);
        let capture_radius = if simple && min_dist.is_finite() {
            tol.capture_factor * min_dist
        } else {
            tol.capture_factor * norm.max(1e-8)
        };
        Ok(FlowField { param: param.clone(), points, escape_radius, capture_radius, tol: tol.clone() })
    }

    /// Refuse parameters whose roots are (numerically) colliding.
    pub fn require_simple(&self) -> Result<()> {
        if self.points.iter().any(|p| p.kind == PointKind::Multiple) {
            return Err(Error::NearCollision("multiple root".into()));
        }
        let d = polyfield::min_root_distance(&self.points);
        if d <= 1e-6 * polyfield::eps_norm(&self.param).max(1e-300) {
            return Err(Error::NearCollision(format!("roots {d:e} apart")));
        }
        Ok(())
    }

    pub fn nearest_root(&self, x: C) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = (x - p.position).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Radius of a disk around root `i` that trajectories of `x' = w p(x)`
    /// cannot leave, or 0 when the root does not attract them.
    ///
    /// With `z = x - r`, `d|z|²/dt = 2|z|² Re(w p(x)/z)`, and
    /// `|p(x)/z - p'(r)| ≤ Π(d_j + |z|) - Π d_j` over the other roots, so the
    /// radius keeps that bound below half of `-Re(w p'(r))`.
    pub fn trapping_radius(&self, i: usize, w: C) -> f64 {
        let a = -(w * self.points[i].eigenvalue).re;
        if !(a > 0.0) {
            return 0.0;
        }
        let r = self.points[i].position;
        let d: Vec<f64> = self.points.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| (q.position - r).norm()).collect();
        let base: f64 = d.iter().product();
        let excess = |rho: f64| d.iter().map(|dj| dj + rho).product::<f64>() - base;
        let (mut lo, mut hi) = (0.0, 0.5 * d.iter().cloned().fold(f64::INFINITY, f64::min));
        if excess(hi) <= 0.5 * a {
            return hi;
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if excess(mid) <= 0.5 * a {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn residues(&self) -> Vec<C> {
        self.points.iter().map(|p| p.nu()).collect()
    }
}

struct ArcSystem<'a> {
    field: &'a FlowField,
    w: C,
}

impl OdeSystem for ArcSystem<'_> {
    fn rhs(&self, _s: f64, y: &[C], dy: &mut [C]) {
        let p = self.field.param.eval(y[0]);
        let m = p.norm();
        if m == 0.0 {
            dy[0] = C::new(0.0, 0.0);
            dy[1] = C::new(0.0, 0.0);
            return;
        }
        dy[0] = self.w * p / m;
        dy[1] = self.w / m;
    }

    fn error_scale(&self, y: &[C], i: usize, opts: &Dopri5Options) -> f64 {
        if i == 0 {
            let (_, d) = self.field.nearest_root(y[0]);
            opts.rtol * d.max(1e-3 * self.field.capture_radius) + 1e-300
        } else {
            opts.rtol * y[1].norm().max(1.0)
        }
    }

    fn max_step(&self, _s: f64, y: &[C]) -> f64 {
        let (p, dp) = self.field.param.eval_both(y[0]);
        let (_, d) = self.field.nearest_root(y[0]);
        let scale = if dp.norm() > 0.0 { p.norm() / dp.norm() } else { d };
        0.05 * scale.min(y[0].norm().max(1.0))
    }
}

/// Integrate along the direction field `w p(x)` from `x0`.
///
/// Stops at root capture, at escape beyond `escape` while moving outward, when
/// the real time exceeds `horizon`, or on the step budget. `stop` may end the
/// integration early (it sees every accepted sample).
pub fn integrate_direction<F>(
    field: &FlowField,
    x0: C,
    w: C,
    horizon: f64,
    escape: f64,
    mut stop: F,
) -> Trajectory
where
    F: FnMut(&Sample) -> bool,
{
    let (i0, d0) = field.nearest_root(x0);
    let slant = -w.arg();
    let start = Sample { t: C::new(0.0, 0.0), x: x0 };
    if d0 == 0.0 || field.param.eval(x0).norm() == 0.0 {
        return Trajectory { samples: vec![start], slant, termination: Termination::ConvergedToRoot(i0) };
    }
    let sys = ArcSystem { field, w };
    let opts = Dopri5Options {
        rtol: field.tol.flow_rtol,
        atol: 0.0,
        h0: 1e-3 * d0.min(field.escape_radius),
        h_max: f64::INFINITY,
        max_steps: field.tol.flow_max_steps,
    };
    let mut samples = vec![start];
    let mut termination = Termination::StepLimit;
    let mut prev_r = x0.norm();
    let out = ode::integrate(&sys, 0.0, &[x0, C::new(0.0, 0.0)], f64::INFINITY, &opts, |_, y| {
        let s = Sample { t: y[1], x: y[0] };
        samples.push(s);
        let (i, d) = field.nearest_root(s.x);
        if d < field.capture_radius {
            termination = Termination::ConvergedToRoot(i);
            return Control::Stop;
        }
        let r = s.x.norm();
        if r > escape && r > prev_r {
            termination = Termination::EscapedToInfinity;
            return Control::Stop;
        }
        prev_r = r;
        if (s.t * w.conj()).re.abs() > horizon {
            termination = Termination::Horizon;
            return Control::Stop;
        }
        if stop(&s) {
            termination = Termination::Horizon;
            return Control::Stop;
        }
        Control::Continue
    });
    if out.finish == Finish::StepUnderflow {
        termination = Termination::StepLimit;
    }
    Trajectory { samples, slant, termination }
}

fn check_slant(slant: f64, tol: &Tolerances) -> Result<()> {
    if !(slant.abs() < tol.max_slant()) {
        return Err(Error::InvalidInput(format!(
            "slant {slant} outside the admissible range (|slant| < {})",
            tol.max_slant()
        )));
    }
    Ok(())
}

/// Integrate `x' = e^{-i slant} p(x)` forward or backward in real time.
pub fn integrate(
    param: &Parameter,
    x0: C,
    slant: f64,
    horizon: f64,
    orientation: Orientation,
    tol: &Tolerances,
) -> Result<Trajectory> {
    check_slant(slant, tol)?;
    let field = FlowField::new(param, tol)?;
    Ok(integrate_in(&field, x0, slant, horizon, orientation))
}

/// As [`integrate`], reusing a prepared field.
pub fn integrate_in(field: &FlowField, x0: C, slant: f64, horizon: f64, orientation: Orientation) -> Trajectory {
    let sign = if orientation == Orientation::Forward { 1.0 } else { -1.0 };
    let w = C::from_polar(sign, -slant);
    integrate_direction(field, x0, w, horizon, field.escape_radius, |_| false)
}

/// Asymptotic directions of the `2k` separatrices of `x' = e^{-i slant} x^{k+1}`.
///
/// Direction `s` is `(s pi + slant) / k`; even `s` are outgoing (escape to
/// infinity in forward time), odd `s` are incoming.
pub fn separatrix_directions_slanted(k: usize, slant: f64) -> Vec<f64> {
    (0..2 * k).map(|s| (s as f64 * PI + slant) / k as f64).collect()
}

/// Asymptotic directions of the real-time separatrices of `x' = x^{k+1}`.
pub fn separatrix_directions(k: usize) -> Vec<f64> {
    separatrix_directions_slanted(k, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Alpha,
    Omega,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub root: usize,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixSet {
    pub slant: f64,
    pub separatrices: Vec<Trajectory>,
    pub attachments: Vec<Option<Attachment>>,
    pub homoclinic: Vec<bool>,
}

impl SeparatrixSet {
    pub fn any_homoclinic(&self) -> bool {
        self.homoclinic.iter().any(|&h| h)
    }

    pub fn attachment(&self, s: usize) -> Result<Attachment> {
        if self.homoclinic[s] {
            return Err(Error::Homoclinic(s));
        }
        self.attachments[s].ok_or_else(|| Error::Integration(format!("separatrix {s} did not land")))
    }
}

/// Trace the `2k` separatrices of `x' = e^{-i slant} p(x)` inward from the escape circle.
pub fn trace_separatrices(param: &Parameter, slant: f64, tol: &Tolerances) -> Result<SeparatrixSet> {
    check_slant(slant, tol)?;
    let field = FlowField::new(param, tol)?;
    trace_separatrices_in(&field, slant)
}

pub fn trace_separatrices_in(field: &FlowField, slant: f64) -> Result<SeparatrixSet> {
    trace_with(field, slant, false)
}

/// As [`trace_separatrices_in`], but each separatrix stops as soon as it
/// enters the trapping disk of a root ([`FlowField::trapping_radius`]). The
/// attachments are the same; the trajectories are shorter.
pub fn trace_separatrices_trapped(field: &FlowField, slant: f64) -> Result<SeparatrixSet> {
    trace_with(field, slant, true)
}

/// Follow `x' = w p(x)` from `x0` until it escapes beyond `escape` or enters
/// the trapping disk of a root, which then counts as convergence.
pub fn integrate_trapped(field: &FlowField, x0: C, w: C, escape: f64) -> Trajectory {
    let radii: Vec<f64> = (0..field.points.len()).map(|i| field.trapping_radius(i, w)).collect();
    let trapped = |x: C| {
        let (i, d) = field.nearest_root(x);
        (d < radii[i]).then_some(i)
    };
    let mut tr = integrate_direction(field, x0, w, f64::INFINITY, escape, |sample| trapped(sample.x).is_some());
    if tr.termination == Termination::Horizon {
        if let Some(i) = trapped(tr.last().x) {
            tr.termination = Termination::ConvergedToRoot(i);
        }
    }
    tr
}

fn trace_with(field: &FlowField, slant: f64, trap: bool) -> Result<SeparatrixSet> {
    field.require_simple()?;
    let k = field.param.k;
    let dirs = separatrix_directions_slanted(k, slant);
    let results: Vec<Trajectory> = dirs
        .iter()
        .enumerate()
        .map(|(s, &theta)| {
            let x0 = C::from_polar(field.escape_radius, theta);
            // Outgoing separatrices are followed backward, incoming forward.
            let sign = if s % 2 == 0 { -1.0 } else { 1.0 };
            let w = C::from_polar(sign, -slant);
            let escape = field.tol.reescape_factor * field.escape_radius;
            if trap {
                integrate_trapped(field, x0, w, escape)
            } else {
                integrate_direction(field, x0, w, f64::INFINITY, escape, |_| false)
            }
        })
        .collect();
    let mut attachments = Vec::with_capacity(2 * k);
    let mut homoclinic = Vec::with_capacity(2 * k);
    for (s, tr) in results.iter().enumerate() {
        match tr.termination {
            Termination::ConvergedToRoot(i) => {
                let role = if s % 2 == 0 { Role::Alpha } else { Role::Omega };
                attachments.push(Some(Attachment { root: i, role }));
                homoclinic.push(false);
            }
            Termination::EscapedToInfinity => {
                attachments.push(None);
                homoclinic.push(true);
            }
            _ => {
                return Err(Error::Integration(format!("separatrix {s} exhausted its step budget")));
            }
        }
    }
    Ok(SeparatrixSet { slant, separatrices: results, attachments, homoclinic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn phase_line_examples() {
        let p = Parameter::real(&[-1.0]);
        let tr = integrate(&p, c(0.5, 0.0), 0.0, 1e6, Orientation::Forward, &tol()).unwrap();
        assert_eq!(tr.termination, Termination::ConvergedToRoot(0));
        assert!((tr.last().x - c(-1.0, 0.0)).norm() < 3e-4);
        let tr = integrate(&p, c(2.0, 0.0), 0.0, 1e6, Orientation::Forward, &tol()).unwrap();
        assert_eq!(tr.termination, Termination::EscapedToInfinity);
        let tr = integrate(&p, c(1.0, 0.0), 0.0, 1e6, Orientation::Forward, &tol()).unwrap();
        assert_eq!(tr.samples.len(), 1);
        assert_eq!(tr.termination, Termination::ConvergedToRoot(1));
    }

    #[test]
    fn residual_and_time_consistency() {
        let p = Parameter::new(vec![c(-0.7, 0.2), c(0.3, -0.1)]).unwrap();
        let tr = integrate(&p, c(0.4, 0.6), 0.1, 1e6, Orientation::Forward, &tol()).unwrap();
        assert!(matches!(tr.termination, Termination::ConvergedToRoot(_)));
        assert!(tr.max_residual(&p) <= tol().ode_residual_tol);
        // Sum of time increments equals the path integral of dx/p along the samples.
        let path = tr.positions();
        let field = FlowField::new(&p, &tol()).unwrap();
        let q = polyfield::line_integral(&|x| 1.0 / p.eval(x), &path, 1e-12);
        let dt = tr.last().t - tr.samples[0].t;
        let _ = field;
        assert!((q - dt).norm() <= 1e-6 * dt.norm().max(1.0), "{q} vs {dt}");
    }

    #[test]
    fn slant_outside_margin_is_rejected() {
        let p = Parameter::real(&[-1.0]);
        assert!(integrate(&p, c(0.5, 0.0), 1.5, 1.0, Orientation::Forward, &tol()).is_err());
    }

    #[test]
    fn directions_are_evenly_spaced() {
        for k in 1..=4 {
            let d = separatrix_directions(k);
            assert_eq!(d.len(), 2 * k);
            for w in d.windows(2) {
                assert!((w[1] - w[0] - PI / k as f64).abs() < 1e-15);
            }
        }
    }

    /// Oracle: trace the homogeneous flow `x' = x^{k+1}` from the unit circle.
    /// Forward trajectories fall into 0 tangent to the incoming rays and
    /// backward ones tangent to the outgoing rays; by homogeneity these are
    /// the separatrix directions at infinity.
    #[test]
    fn directions_match_traced_leading_flow() {
        for k in 1..=3usize {
            let field = FlowField {
                param: Parameter::zero(k),
                points: polyfield::roots(&Parameter::zero(k), &tol()).unwrap(),
                escape_radius: 1e6,
                capture_radius: 1e-3,
                tol: tol(),
            };
            let dirs = separatrix_directions(k);
            for i in 0..24 {
                let theta = 2.0 * PI * (i as f64 + 0.37) / 24.0;
                for (sign, parity) in [(1.0, 1usize), (-1.0, 0usize)] {
                    let tr = integrate_direction(&field, C::from_polar(1.0, theta), c(sign, 0.0), f64::INFINITY, 1e6, |_| false);
                    assert!(matches!(tr.termination, Termination::ConvergedToRoot(_)));
                    let a = tr.last().x.arg();
                    let best = dirs
                        .iter()
                        .skip(parity)
                        .step_by(2)
                        .map(|d| ((a - d + PI).rem_euclid(2.0 * PI) - PI).abs())
                        .fold(f64::INFINITY, f64::min);
                    assert!(best < 1e-2, "k={k} angle {a}");
                }
            }
        }
    }

    #[test]
    fn separatrices_of_real_saddle_free_case() {
        let s = trace_separatrices(&Parameter::real(&[-1.0]), 0.0, &tol()).unwrap();
        assert_eq!(s.separatrices.len(), 2);
        assert!(!s.any_homoclinic());
        assert_eq!(s.attachments[0], Some(Attachment { root: 1, role: Role::Alpha }));
        assert_eq!(s.attachments[1], Some(Attachment { root: 0, role: Role::Omega }));
    }

    #[test]
    fn centers_give_homoclinic_loops_resolved_by_slant() {
        let p = Parameter::real(&[1.0]);
        let s = trace_separatrices(&p, 0.0, &tol()).unwrap();
        assert!(s.homoclinic.iter().all(|&h| h));
        let s = trace_separatrices(&p, PI / 16.0, &tol()).unwrap();
        assert!(!s.any_homoclinic());
        let a = s.attachment(0).unwrap();
        let o = s.attachment(1).unwrap();
        assert_ne!(a.root, o.root);
    }

    #[test]
    fn trapping_keeps_attachments_and_shortens_trajectories() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (mut full_len, mut trapped_len) = (0, 0);
        for k in 1..=3 {
            for _ in 0..40 {
                let coeffs = (0..k).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                let field = FlowField::new(&Parameter::new(coeffs).unwrap(), &tol()).unwrap();
                let (Ok(full), Ok(trapped)) =
                    (trace_separatrices_in(&field, 0.0), trace_separatrices_trapped(&field, 0.0))
                else {
                    continue;
                };
                assert_eq!(full.attachments, trapped.attachments);
                assert_eq!(full.homoclinic, trapped.homoclinic);
                full_len += full.separatrices.iter().map(|t| t.samples.len()).sum::<usize>();
                trapped_len += trapped.separatrices.iter().map(|t| t.samples.len()).sum::<usize>();
            }
        }
        assert!(trapped_len < full_len);
    }

    #[test]
    fn collision_is_refused() {
        let p = Parameter::real(&[0.0]);
        assert!(matches!(trace_separatrices(&p, 0.0, &tol()), Err(Error::NearCollision(_))));
    }
}
