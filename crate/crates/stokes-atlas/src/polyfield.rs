//! The polynomial `p(x) = x^{k+1} + e_{k-1} x^{k-1} + ... + e_0`: roots,
//! discriminant, residues, the conic norm and the rescaling action.

use crate::context::Tolerances;
use crate::linalg::{c, CMat};
use crate::{Error, Result};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Unfolding parameter `(e_0, ..., e_{k-1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub k: usize,
    pub coeffs: Vec<C>,
}

impl Parameter {
    pub fn new(coeffs: Vec<C>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        Ok(Parameter { k: coeffs.len(), coeffs })
    }

    /// Convenience constructor from real coefficients.
    pub fn real(coeffs: &[f64]) -> Self {
        Parameter::new(coeffs.iter().map(|&r| c(r, 0.0)).collect()).expect("valid real coefficients")
    }

    pub fn zero(k: usize) -> Self {
        Parameter { k, coeffs: vec![c(0.0, 0.0); k] }
    }

    /// Coefficients of `p` in increasing degree, length `k + 2`.
    pub fn full_coeffs(&self) -> Vec<C> {
        let mut v = self.coeffs.clone();
        v.push(c(0.0, 0.0));
        v.push(c(1.0, 0.0));
        v
    }

    pub fn eval(&self, x: C) -> C {
        // Horner on (1, 0, e_{k-1}, ..., e_0).
        let mut acc = x;
        for j in (0..self.k).rev() {
            acc = acc * x + self.coeffs[j];
        }
        acc
    }

    pub fn deriv(&self, x: C) -> C {
        // Horner on (k+1, 0, (k-1) e_{k-1}, ..., 1 e_1).
        let mut acc = c((self.k + 1) as f64, 0.0) * x;
        for j in (1..self.k).rev() {
            acc = acc * x + c(j as f64, 0.0) * self.coeffs[j];
        }
        acc
    }

    pub fn eval_both(&self, x: C) -> (C, C) {
        (self.eval(x), self.deriv(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointKind {
    RadialNode,
    Center,
    Focus,
    Multiple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Attracting,
    Repelling,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub position: C,
    pub eigenvalue: C,
    /// `1 / p'(x)`; absent for multiple points.
    pub residue: Option<C>,
    pub kind: PointKind,
    pub stability: Stability,
    pub multiplicity: usize,
    /// Set when the classification is within a small band of a boundary.
    pub near_boundary: bool,
}

impl SingularPoint {
    /// Residue, which exists for simple points.
    pub fn nu(&self) -> C {
        self.residue.expect("residue of a simple point")
    }
}

/// The natural conic norm `max_j |e_j|^{1/(k+1-j)}`.
pub fn eps_norm(param: &Parameter) -> f64 {
    let k = param.k;
    param
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, z)| z.norm().powf(1.0 / (k + 1 - j) as f64))
        .fold(0.0, f64::max)
}

/// The action `e_j -> r^{k+1-j} e_j`.
pub fn rescale(param: &Parameter, r: f64) -> Result<Parameter> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!("rescale factor must be positive, got {r}")));
    }
    let k = param.k;
    let coeffs = param
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, z)| z * r.powi((k + 1 - j) as i32))
        .collect();
    Ok(Parameter { k, coeffs })
}

fn classify(lambda: C, tol: &Tolerances) -> (PointKind, Stability, bool) {
    let mag = lambda.norm();
    let band = tol.center_band * mag;
    let kind = if lambda.re.abs() <= band {
        PointKind::Center
    } else if lambda.im.abs() <= band {
        PointKind::RadialNode
    } else {
        PointKind::Focus
    };
    let stability = if kind == PointKind::Center {
        Stability::None
    } else if lambda.re < 0.0 {
        Stability::Attracting
    } else {
        Stability::Repelling
    };
    let wide = 1e3 * band;
    let near = kind != PointKind::Center && lambda.re.abs() <= wide
        || kind == PointKind::Focus && lambda.im.abs() <= wide;
    (kind, stability, near)
}

/// The `k + 1` roots with multiplicity, sorted by `(Re, Im)`.
pub fn roots(param: &Parameter, tol: &Tolerances) -> Result<Vec<SingularPoint>> {
    let k = param.k;
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let n = k + 1;
    let norm = eps_norm(param);
    if norm == 0.0 {
        return Ok(vec![multiple_point(c(0.0, 0.0), n); n]);
    }
    let scale = norm.max(1.0);
    let mut z = aberth(param, tol, norm)?;
    // Cluster nearby roots into multiple points.
    let cluster_tol = tol.root_cluster_rel * scale;
    let mut group: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..i {
            if (z[i] - z[j]).norm() <= cluster_tol {
                let (gi, gj) = (find(&mut group, i), find(&mut group, j));
                group[gi] = gj;
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let g = find(&mut group, i);
        members[g].push(i);
    }
    let mut out = Vec::with_capacity(n);
    for m in members.into_iter().filter(|m| !m.is_empty()) {
        if m.len() == 1 {
            let mut x = z[m[0]];
            for _ in 0..3 {
                let (p, dp) = param.eval_both(x);
                if dp.norm() == 0.0 {
                    break;
                }
                let dx = p / dp;
                x -= dx;
                if dx.norm() <= 1e-17 * x.norm() {
                    break;
                }
            }
            z[m[0]] = x;
            let lambda = param.deriv(x);
            let (kind, stability, near_boundary) = classify(lambda, tol);
            out.push(SingularPoint {
                position: x,
                eigenvalue: lambda,
                residue: Some(1.0 / lambda),
                kind,
                stability,
                multiplicity: 1,
                near_boundary,
            });
        } else {
            let mean = m.iter().map(|&i| z[i]).sum::<C>() / m.len() as f64;
            for _ in 0..m.len() {
                out.push(multiple_point(mean, m.len()));
            }
        }
    }
    out.sort_by(|a, b| {
        a.position
            .re
            .partial_cmp(&b.position.re)
            .unwrap()
            .then(a.position.im.partial_cmp(&b.position.im).unwrap())
    });
    Ok(out)
}

fn multiple_point(x: C, m: usize) -> SingularPoint {
    SingularPoint {
        position: x,
        eigenvalue: c(0.0, 0.0),
        residue: None,
        kind: PointKind::Multiple,
        stability: Stability::None,
        multiplicity: m,
        near_boundary: false,
    }
}

fn find(g: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while g[r] != r {
        r = g[r];
    }
    let mut j = i;
    while g[j] != r {
        let nx = g[j];
        g[j] = r;
        j = nx;
    }
    r
}

/// Simultaneous Aberth–Ehrlich iteration.
fn aberth(param: &Parameter, tol: &Tolerances, norm: f64) -> Result<Vec<C>> {
    let n = param.k + 1;
    let radius = 1.5 * norm.max(1e-300);
    let mut z: Vec<C> = (0..n)
        .map(|i| C::from_polar(radius, 2.0 * PI * i as f64 / n as f64 + 0.4))
        .collect();
    let scale_p = norm.max(1.0).powi(n as i32);
    let mut last_corr = f64::INFINITY;
    for _ in 0..tol.root_max_iter {
        let mut max_corr: f64 = 0.0;
        for i in 0..n {
            let (p, dp) = param.eval_both(z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let mut s = c(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    s += 1.0 / (z[i] - z[j]);
                }
            }
            let w = ratio / (1.0 - ratio * s);
            if w.re.is_finite() && w.im.is_finite() {
                z[i] -= w;
                max_corr = max_corr.max(w.norm());
            }
        }
        last_corr = max_corr;
        if max_corr <= 1e-15 * norm.max(1.0) {
            return Ok(z);
        }
    }
    let residual = z.iter().map(|&x| param.eval(x).norm()).fold(0.0, f64::max);
    if residual <= 1e-12 * scale_p {
        return Ok(z);
    }
    Err(Error::RootsNotConverged { iterations: tol.root_max_iter, max_correction: last_corr })
}

/// Discriminant of `p`, computed from the Sylvester resultant `Res(p, p')`.
pub fn discriminant(param: &Parameter) -> C {
    let p = param.full_coeffs(); // increasing degree, length n+1
    let n = p.len() - 1;
    let dp: Vec<C> = (1..=n).map(|j| p[j] * j as f64).collect(); // degree n-1
    let m = n - 1;
    let size = n + m;
    let mut s = CMat::zeros(size, size);
    for r in 0..m {
        for (j, coef) in p.iter().rev().enumerate() {
            s[(r, r + j)] = *coef;
        }
    }
    for r in 0..n {
        for (j, coef) in dp.iter().rev().enumerate() {
            s[(m + r, r + j)] = *coef;
        }
    }
    let res = s.determinant();
    let sign = if (n * (n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    res * sign
}

/// Whether the discriminant vanishes relative to the natural scale of `e`.
pub fn discriminant_is_zero(param: &Parameter, rel: f64) -> bool {
    let k = param.k;
    let scale = eps_norm(param).powi((k * (k + 1)) as i32);
    discriminant(param).norm() <= rel * scale
}

/// Minimal pairwise distance between roots.
pub fn min_root_distance(points: &[SingularPoint]) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            d = d.min((points[i].position - points[j].position).norm());
        }
    }
    d
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(C) -> C>(f: &F, a: C, b: C) -> (C, f64) {
    let mid = (a + b) * 0.5;
    let half = (b - a) * 0.5;
    let fc = f(mid);
    let mut kr = fc * WGK[7];
    let mut ga = fc * WG[3];
    for i in 0..7 {
        let f1 = f(mid - half * XGK[i]);
        let f2 = f(mid + half * XGK[i]);
        kr += (f1 + f2) * WGK[i];
        if i % 2 == 1 {
            ga += (f1 + f2) * WG[i / 2];
        }
    }
    (kr * half, ((kr - ga) * half).norm())
}

fn adaptive<F: Fn(C) -> C>(f: &F, a: C, b: C, rtol: f64, atol: f64, depth: usize) -> C {
    let (val, err) = gk15(f, a, b);
    if err <= rtol * val.norm() + atol || depth == 0 {
        return val;
    }
    let m = (a + b) * 0.5;
    adaptive(f, a, m, rtol, atol * 0.5, depth - 1) + adaptive(f, m, b, rtol, atol * 0.5, depth - 1)
}

/// Adaptive quadrature of a complex line integral along a polyline.
pub fn line_integral<F: Fn(C) -> C>(f: &F, path: &[C], rtol: f64) -> C {
    let mut total = c(0.0, 0.0);
    for w in path.windows(2) {
        let (rough, _) = gk15(f, w[0], w[1]);
        let atol = 1e-3 * rtol * rough.norm().max(1e-300);
        total += adaptive(f, w[0], w[1], rtol, atol, 40);
    }
    total
}

fn segment_distance(a: C, b: C, z: C) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = ((z - a) * d.conj()).re / len2;
    let t = t.clamp(0.0, 1.0);
    (a + d * t - z).norm()
}

/// Check that a polyline keeps distance `clearance` from every root.
pub fn check_clearance(points: &[SingularPoint], path: &[C], clearance: f64) -> Result<()> {
    for (s, w) in path.windows(2).enumerate() {
        for (r, pt) in points.iter().enumerate() {
            let d = segment_distance(w[0], w[1], pt.position);
            if d < clearance {
                return Err(Error::ClearanceViolation { segment: s, root: r, distance: d, clearance });
            }
        }
    }
    Ok(())
}

/// Complex time `int dx / p(x)` along a polyline kept `clearance` away from roots.
pub fn time_integral(param: &Parameter, path: &[C], clearance: f64, tol: &Tolerances) -> Result<C> {
    let pts = roots(param, tol)?;
    check_clearance(&pts, path, clearance)?;
    Ok(line_integral(&|x| 1.0 / param.eval(x), path, tol.quad_rtol))
}

/// Circle polyline with `n` segments, counter-clockwise.
pub fn circle_path(center: C, radius: f64, n: usize) -> Vec<C> {
    (0..=n)
        .map(|i| center + C::from_polar(radius, 2.0 * PI * i as f64 / n as f64))
        .collect()
}
