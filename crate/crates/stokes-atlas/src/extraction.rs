//! Numerical extraction of Stokes data from a concrete rational system
//! `y' = (A(x) / p(x) + Ahat / (x - R)) y`.
//!
//! For every sector at infinity the probe trajectory through its midpoint
//! runs from an alpha point to an omega point. Near each endpoint the
//! solutions are seeded with the eigenvectors of the residue matrix, ordered
//! by growth along the flow, and transported back to the probe start with QR
//! renormalisation: this yields the two flags, whose intersections give the
//! adapted basis of the sector. Transition matrices across separatrices are
//! computed by transport along the escape circle; gates are then fixed by the
//! local monodromy exponents.

use crate::dsdomain::{self, DSDiagram};
use crate::flow::{self, FlowField, Role, Termination};
use crate::linalg::{self, c, CMat};
use crate::monodromy::{self, MatrixRef};
use crate::polyfield::{self, Parameter};
use crate::stokesdata::{self, FormalInvariants, Position, StokesCollection};
use crate::{Error, Result, Tolerances};
use num_complex::Complex64 as C;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalSystem {
    pub n: usize,
    pub k: usize,
    pub param: Parameter,
    /// Coefficients `A_0, ..., A_d` of the numerator, `d <= k`.
    #[serde(with = "linalg::serde_mats")]
    pub numerator: Vec<CMat>,
    pub extra: Option<ExtraPole>,
}

/// Fuchsian term `Ahat / (x - R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraPole {
    #[serde(with = "linalg::serde_mat")]
    pub residue: CMat,
    pub pole: C,
}

impl RationalSystem {
    pub fn new(n: usize, param: Parameter, numerator: Vec<CMat>, extra: Option<ExtraPole>) -> Result<Self> {
        let k = param.k;
        if n == 0 || numerator.is_empty() || numerator.len() > k + 1 {
            return Err(Error::InvalidInput(format!("numerator must have 1..={} coefficients", k + 1)));
        }
        if numerator.iter().any(|a| a.shape() != (n, n)) {
            return Err(Error::InvalidInput("numerator coefficients must be n x n".into()));
        }
        if let Some(ExtraPole { residue: a, pole: r }) = &extra {
            if a.shape() != (n, n) {
                return Err(Error::InvalidInput("Ahat must be n x n".into()));
            }
            if param.eval(*r).norm() == 0.0 {
                return Err(Error::InvalidInput("extra pole coincides with a root of p".into()));
            }
        }
        Ok(RationalSystem { n, k, param, numerator, extra })
    }

    /// The diagonal normal form `Lambda(x) / p(x)`.
    pub fn normal_form(formal: &FormalInvariants, param: &Parameter) -> Result<Self> {
        if formal.k() != param.k {
            return Err(Error::InvalidInput("formal invariants and parameter disagree on k".into()));
        }
        let numerator = formal.lambdas.iter().map(|l| linalg::diag(l)).collect();
        RationalSystem::new(formal.n, param.clone(), numerator, None)
    }

    /// Normal form plus a random perturbation of every numerator entry,
    /// uniform in the square of half-width `magnitude`.
    pub fn perturbed<R: Rng>(formal: &FormalInvariants, param: &Parameter, rng: &mut R, magnitude: f64) -> Result<Self> {
        let mut sys = Self::normal_form(formal, param)?;
        for a in &mut sys.numerator {
            *a += linalg::random_matrix(rng, sys.n, magnitude);
        }
        Ok(sys)
    }

    pub fn numerator_at(&self, x: C) -> CMat {
        let mut acc = CMat::zeros(self.n, self.n);
        for a in self.numerator.iter().rev() {
            acc = acc * x + a;
        }
        acc
    }

    /// Coefficient matrix `B(x)` of `y' = B(x) y`.
    pub fn matrix_at(&self, x: C) -> CMat {
        let mut b = self.numerator_at(x) / self.param.eval(x);
        if let Some(ExtraPole { residue: a, pole: r }) = &self.extra {
            b += a / (x - r);
        }
        b
    }

    /// Eigenpairs of the residue matrix at a root, ordered by decreasing growth
    /// rate `Re(w lambda)` along the flow `x' = w p(x)`.
    fn ordered_eigen(&self, x: C, w: C) -> Vec<(C, linalg::CVec)> {
        let mut pairs = linalg::eigenpairs(&self.numerator_at(x));
        pairs.sort_by(|a, b| (w * b.0).re.partial_cmp(&(w * a.0).re).unwrap());
        pairs
    }
}

/// Distance from `z` to the segment `[a, b]`.
pub fn segment_distance(a: C, b: C, z: C) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let s = (((z - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (a + d * s - z).norm()
}

/// Nested subspaces `W_1 ⊂ ... ⊂ W_n` at a point: the first `m` columns of
/// `frame` span `W_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    /// End index of the sector.
    pub sector: usize,
    /// Root index of the endpoint.
    pub endpoint: usize,
    pub direction: Role,
    /// Point where the subspaces are expressed.
    pub point: C,
    #[serde(with = "linalg::serde_mat")]
    pub frame: CMat,
    /// Growth rates `Re(w lambda)` in the column order of `frame`.
    pub rates: Vec<f64>,
    /// Eigenvalues of the numerator at the endpoint, in the order of `rates`.
    pub exponents: Vec<C>,
}

fn probe_field(sys: &RationalSystem, tol: &Tolerances) -> Result<FlowField> {
    let mut field = FlowField::new(&sys.param, tol)?;
    field.require_simple()?;
    field.capture_radius = tol.flag_seed_radius * polyfield::min_root_distance(&field.points);
    Ok(field)
}

fn flag_from(sys: &RationalSystem, field: &FlowField, sector: usize, start: C, role: Role, slant: f64, tol: &Tolerances) -> Result<Flag> {
    let w = C::from_polar(1.0, -slant);
    let dir = if role == Role::Omega { w } else { -w };
    let esc = field.tol.reescape_factor * field.escape_radius;
    let tr = flow::integrate_direction(field, start, dir, f64::INFINITY, esc, |_| false);
    let endpoint = match tr.termination {
        Termination::ConvergedToRoot(r) => r,
        other => return Err(Error::Geometry(format!("probe from {start} ended with {other:?}"))),
    };
    let root = field.points[endpoint].position;
    let pairs = sys.ordered_eigen(root, w);
    let rates: Vec<f64> = pairs.iter().map(|(l, _)| (w * l).re).collect();
    let gap = rates.windows(2).map(|r| r[0] - r[1]).fold(f64::INFINITY, f64::min);
    if gap < tol.growth_floor {
        return Err(Error::GrowthRates { gap, floor: tol.growth_floor, context: format!("root {endpoint}") });
    }
    // Omega flags start with the slowest solutions, alpha flags with the fastest.
    let order: Vec<usize> = if role == Role::Omega { (0..sys.n).rev().collect() } else { (0..sys.n).collect() };
    let mut seed = CMat::zeros(sys.n, sys.n);
    for (col, &i) in order.iter().enumerate() {
        seed.set_column(col, &pairs[i].1);
    }
    let mut path = tr.positions();
    path.reverse();
    let frame = monodromy::transport(sys, &path, &linalg::orthonormalize(&seed), true, tol)?;
    Ok(Flag {
        sector,
        endpoint,
        direction: role,
        point: start,
        frame: linalg::orthonormalize(&frame),
        rates: order.iter().map(|&i| rates[i]).collect(),
        exponents: order.iter().map(|&i| pairs[i].0).collect(),
    })
}

/// Flag of the sector with end `sector` at its alpha or omega point,
/// expressed at the probe start on the escape circle.
pub fn levinson_flag(sys: &RationalSystem, sector: usize, endpoint: Role, slant: f64, tol: &Tolerances) -> Result<Flag> {
    let field = probe_field(sys, tol)?;
    if slant.abs() >= tol.max_slant() {
        return Err(Error::InvalidInput(format!("slant {slant} outside the admissible range")));
    }
    let start = dsdomain::sector_midpoint(&field, slant, sector);
    flag_from(sys, &field, sector, start, endpoint, slant, tol)
}

/// Smallest principal angle between the column spans of two orthonormal frames.
pub fn min_principal_angle(a: &CMat, b: &CMat) -> f64 {
    if a.ncols() == 0 || b.ncols() == 0 {
        return PI / 2.0;
    }
    let (a, b) = if a.ncols() >= b.ncols() { (a, b) } else { (b, a) };
    // Sines of the principal angles are the singular values of the part of
    // `b` orthogonal to `a`.
    let rest = b - a * (a.adjoint() * b);
    let s = rest.svd(false, false).singular_values;
    s.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0).asin()
}

/// Adapted basis: column `i` spans `W_i(alpha) ∩ W_{n-i+1}(omega)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedBasis {
    #[serde(with = "linalg::serde_mat")]
    pub basis: CMat,
    /// Smallest angle between `W_i(alpha)` and `W_{n-i}(omega)` over `i`.
    pub min_angle: f64,
}

/// Intersect the two flags. Columns have unit norm with the first nonzero
/// coordinate real positive.
pub fn adapted_basis(alpha: &Flag, omega: &Flag, tol: &Tolerances) -> Result<AdaptedBasis> {
    let n = alpha.frame.nrows();
    if (alpha.point - omega.point).norm() > 1e-12 * alpha.point.norm().max(1.0) {
        return Err(Error::InvalidInput("flags are expressed at different points".into()));
    }
    let mut min_angle = PI / 2.0;
    for i in 1..n {
        let ang = min_principal_angle(&alpha.frame.columns(0, i).into_owned(), &omega.frame.columns(0, n - i).into_owned());
        min_angle = min_angle.min(ang);
    }
    if min_angle < tol.transversality_floor {
        return Err(Error::Transversality { angle: min_angle, floor: tol.transversality_floor, sector: alpha.sector });
    }
    let mut basis = CMat::zeros(n, n);
    for i in 1..=n {
        let qa = alpha.frame.columns(0, i);
        let qo = omega.frame.columns(0, n - i + 1);
        let mut stacked = CMat::zeros(n, n + 1);
        stacked.columns_mut(0, i).copy_from(&qa);
        stacked.columns_mut(i, n - i + 1).copy_from(&(-qo.into_owned()));
        // The nullspace has dimension one: the smallest singular direction.
        let v = smallest_right_vector(&stacked);
        let e = qa * v.rows(0, i);
        basis.set_column(i - 1, &fix_scale(e.column(0).into_owned()));
    }
    Ok(AdaptedBasis { basis, min_angle })
}

fn smallest_right_vector(m: &CMat) -> linalg::CVec {
    let cols = m.ncols();
    let mut p = CMat::zeros(cols.max(m.nrows()), cols);
    p.view_mut((0, 0), m.shape()).copy_from(m);
    let svd = p.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let (i, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, s)| if *s < b.1 { (i, *s) } else { b });
    vt.row(i).adjoint().into_owned()
}

fn fix_scale(v: linalg::CVec) -> linalg::CVec {
    let scale = v.norm();
    let first = v.iter().find(|z| z.norm() > 1e-12 * scale).cloned().unwrap_or(c(1.0, 0.0));
    let phase = first.conj() / first.norm();
    (v * phase).unscale(scale)
}

/// Data recorded alongside an extracted collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub diagram: DSDiagram,
    pub slant: f64,
    pub collection: StokesCollection,
    /// Base point in `Omega_1^-` on the escape circle.
    pub base_point: C,
    /// Fundamental matrix at the base point whose columns are the normalised
    /// adapted solutions: loop words evaluate to monodromy in this basis.
    #[serde(with = "linalg::serde_mat")]
    pub x_base: CMat,
    /// Local exponents `lambda_i(x_l) / p'(x_l)` per root, in diagonal order.
    pub exponents: Vec<Vec<C>>,
    /// Smallest transversality angle over all sectors.
    pub min_angle: f64,
    /// Largest relative off-triangle residual of the separatrix matrices.
    pub triangularity: f64,
    /// Positions set to one by the final diagonal conjugation.
    pub normalized_positions: Vec<Position>,
}

/// Extract the normalised Stokes collection of `sys` for a diagram at a slant.
pub fn extract_stokes(sys: &RationalSystem, diagram: &DSDiagram, slant: f64, tol: &Tolerances) -> Result<Extraction> {
    let field = probe_field(sys, tol)?;
    let class = dsdomain::classify_at(&sys.param, slant, tol)?;
    if class.diagram.word != diagram.word || class.diagram.labels != diagram.labels {
        return Err(Error::InconsistentSectors(format!(
            "slant {slant} classifies as {}, not {}",
            class.diagram.word, diagram.word
        )));
    }
    let k = sys.k;
    let n = sys.n;
    let ends = 2 * k;
    let starts: Vec<C> = (0..ends).map(|e| dsdomain::sector_midpoint(&field, slant, e)).collect();
    let bases = (0..ends)
        .into_par_iter()
        .map(|e| {
            let a = flag_from(sys, &field, e, starts[e], Role::Alpha, slant, tol)?;
            let o = flag_from(sys, &field, e, starts[e], Role::Omega, slant, tol)?;
            if a.endpoint != diagram.alpha_of[e] || o.endpoint != diagram.omega_of[e] {
                return Err(Error::InconsistentSectors(format!("probe of sector {e} does not match the diagram")));
            }
            adapted_basis(&a, &o, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let min_angle = bases.iter().map(|b| b.min_angle).fold(PI / 2.0, f64::min);
    // Raw separatrix transitions: Y_{a+1} = Y_a C across arc a.
    let raw = (0..ends)
        .into_par_iter()
        .map(|a| {
            let b = (a + 1) % ends;
            let path = circle_arc(field.escape_radius, starts[a].arg(), starts[a].arg() + PI / k as f64, 32);
            let moved = monodromy::transport(sys, &path, &bases[a].basis, false, tol)?;
            Ok(linalg::inverse(&moved)? * &bases[b].basis)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut triangularity: f64 = 0.0;
    let mut d = vec![vec![c(1.0, 0.0); n]; ends];
    let mut mats = Vec::with_capacity(ends);
    for (a, m) in raw.into_iter().enumerate() {
        let lower = a % 2 == 0;
        let scale = linalg::max_norm(&m);
        let mut t = m;
        for i in 0..n {
            for j in 0..n {
                if (lower && i < j) || (!lower && i > j) {
                    triangularity = triangularity.max(t[(i, j)].norm() / scale);
                    t[(i, j)] = c(0.0, 0.0);
                }
            }
        }
        // Scale the next sector so that this matrix gets a unit diagonal
        // (all but the last arc, which carries the formal monodromy).
        let da = d[a].clone();
        let conj = |m: &CMat, db: &[C]| {
            CMat::from_fn(n, n, |i, j| m[(i, j)] * db[j] / da[i])
        };
        if a + 1 < ends {
            d[a + 1] = (0..n).map(|i| da[i] / t[(i, i)]).collect();
            mats.push(conj(&t, &d[a + 1]));
        } else {
            mats.push(conj(&t, &d[0]));
        }
    }
    if triangularity > tol.triangularity {
        return Err(Error::Triangularity { matrix: "separatrix transition".into(), residual: triangularity });
    }
    let mut collection = StokesCollection::identity(k, n, &diagram.word);
    for (a, m) in mats.into_iter().enumerate() {
        let r = if a % 2 == 0 { MatrixRef::Lower(a / 2 + 1) } else { MatrixRef::Upper((a / 2 + 1) % k + 1) };
        *collection.get_mut(r) = m;
    }
    // Local exponents per root from the flags (orders agree with the diagonal).
    let exponents = local_exponents(sys, &field, slant)?;
    let targets: Vec<Vec<C>> =
        exponents.iter().map(|ex| ex.iter().map(|mu| (c(0.0, 2.0 * PI) * mu).exp()).collect()).collect();
    collection.gates = stokesdata::compute_gates_for(&collection, diagram, &targets, tol.tau_check)?;
    let positions = spanning_positions(&collection, 1e-6);
    let mut x_base = &bases[1].basis * linalg::diag(&d[1]);
    let mut normalized_positions = Vec::new();
    if positions.len() + 1 == n {
        let (out, kmat) = stokesdata::normalize_diagonal_action(&collection, &positions)?;
        collection = out;
        x_base *= linalg::inverse(&kmat)?;
        normalized_positions = positions;
    }
    Ok(Extraction {
        diagram: diagram.clone(),
        slant,
        collection,
        base_point: starts[1],
        x_base,
        exponents,
        min_angle,
        triangularity,
        normalized_positions,
    })
}

/// Classify the system's parameter over the slant grid and extract.
pub fn extract(sys: &RationalSystem, tol: &Tolerances) -> Result<Extraction> {
    let class = dsdomain::classify_epsilon(&sys.param, &tol.slant_grid, tol)?;
    extract_stokes(sys, &class.diagram, class.slant, tol)
}

fn local_exponents(sys: &RationalSystem, field: &FlowField, slant: f64) -> Result<Vec<Vec<C>>> {
    let w = C::from_polar(1.0, -slant);
    Ok(field
        .points
        .iter()
        .map(|p| {
            let nu = p.nu();
            sys.ordered_eigen(p.position, w).into_iter().map(|(l, _)| l * nu).collect()
        })
        .collect())
}

/// Greedy spanning set of the largest off-diagonal entries (relative size
/// above `rel`), scanning matrices in the order of [`StokesCollection::all_refs`].
fn spanning_positions(col: &StokesCollection, rel: f64) -> Vec<Position> {
    let n = col.n;
    let mut cands = Vec::new();
    for m in col.all_refs() {
        let a = col.get(m);
        let scale = linalg::max_norm(a);
        for i in 0..n {
            for j in 0..n {
                if i != j && a[(i, j)].norm() > rel * scale {
                    cands.push((a[(i, j)].norm() / scale, Position { matrix: m, row: i, col: j }));
                }
            }
        }
    }
    cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut comp: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for (_, p) in cands {
        let (ci, cj) = (comp[p.row], comp[p.col]);
        if ci != cj {
            for x in comp.iter_mut() {
                if *x == cj {
                    *x = ci;
                }
            }
            out.push(p);
        }
    }
    out
}

/// Points on the circle of radius `r` from angle `a0` to `a1`.
pub fn circle_arc(r: f64, a0: f64, a1: f64, m: usize) -> Vec<C> {
    (0..=m).map(|i| C::from_polar(r, a0 + (a1 - a0) * i as f64 / m as f64)).collect()
}

/// Numerical monodromy around the escape circle from the base point,
/// expressed in the extracted basis.
pub fn boundary_monodromy(sys: &RationalSystem, ex: &Extraction, tol: &Tolerances) -> Result<CMat> {
    let r = ex.base_point.norm();
    let a0 = ex.base_point.arg();
    let path = circle_arc(r, a0, a0 + 2.0 * PI, 64 * sys.k);
    let m = monodromy::numerical_monodromy(sys, &path, 0.1 * r, tol)?;
    Ok(linalg::inverse(&ex.x_base)? * m * &ex.x_base)
}

/// One point of a transversality sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: Parameter,
    pub min_angle: Option<f64>,
    pub error: Option<String>,
}

/// Smallest transversality angle over all sectors, for each parameter.
pub fn transversality_sweep(
    numerator: &[CMat],
    params: &[Parameter],
    slant: f64,
    tol: &Tolerances,
) -> Vec<SweepPoint> {
    params
        .par_iter()
        .map(|p| {
            let res = RationalSystem::new(numerator[0].nrows(), p.clone(), numerator.to_vec(), None).and_then(|sys| {
                let field = probe_field(&sys, tol)?;
                let mut worst = PI / 2.0;
                for e in 0..2 * sys.k {
                    let start = dsdomain::sector_midpoint(&field, slant, e);
                    let a = flag_from(&sys, &field, e, start, Role::Alpha, slant, tol)?;
                    let o = flag_from(&sys, &field, e, start, Role::Omega, slant, tol)?;
                    let mut loose = tol.clone();
                    loose.transversality_floor = 0.0;
                    worst = worst.min(adapted_basis(&a, &o, &loose)?.min_angle);
                }
                Ok(worst)
            });
            match res {
                Ok(a) => SweepPoint { param: p.clone(), min_angle: Some(a), error: None },
                Err(e) => SweepPoint { param: p.clone(), min_angle: None, error: Some(e.to_string()) },
            }
        })
        .collect()
}
