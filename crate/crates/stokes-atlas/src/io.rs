//! Persistence formats and figure emission: modulus documents, system input
//! files, SVG portraits and parameter sweeps.
//!
//! Complex numbers serialise as `[re, im]` pairs and matrices as row-major
//! arrays of such pairs.

use crate::context::Tolerances;
use crate::dsdomain::{self, DSDiagram, Sign};
use crate::extraction::{ExtraPole, Extraction, RationalSystem};
use crate::flow::{self, FlowField};
use crate::linalg::{self, CMat};
use crate::monodromy::Presentation;
use crate::polyfield::Parameter;
use crate::stokesdata::StokesCollection;
use crate::{Error, Result};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Version written into, and required of, every modulus document.
pub const SCHEMA_VERSION: u32 = 1;

/// Outcome class of a command, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Refusal,
    Failure,
    Usage,
}

impl Status {
    pub fn of(err: &Error) -> Status {
        if err.is_refusal() {
            Status::Refusal
        } else if err.is_usage() {
            Status::Usage
        } else {
            Status::Failure
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Refusal => 2,
            Status::Failure => 3,
            Status::Usage => 4,
        }
    }
}

// ---------------------------------------------------------------------------
// Modulus documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionBody {
    #[serde(with = "linalg::serde_mats")]
    pub upper: Vec<CMat>,
    #[serde(with = "linalg::serde_mats")]
    pub lower: Vec<CMat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tolerances: Tolerances,
    pub slant: f64,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub created_unix: u64,
}

/// One point of the moduli space: formal invariants, a diagram and its
/// normalised Stokes collection with gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusDocument {
    pub schema_version: u32,
    pub k: usize,
    pub n: usize,
    pub epsilon: Vec<C>,
    /// Diagonals of `Lambda_0, ..., Lambda_k`.
    pub formal: Vec<Vec<C>>,
    pub diagram: String,
    pub collection: CollectionBody,
    #[serde(with = "linalg::serde_mats")]
    pub gates: Vec<CMat>,
    pub provenance: Provenance,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl ModulusDocument {
    pub fn new(
        param: &Parameter,
        formal: Vec<Vec<C>>,
        collection: &StokesCollection,
        slant: f64,
        tol: &Tolerances,
    ) -> Self {
        ModulusDocument {
            schema_version: SCHEMA_VERSION,
            k: collection.k,
            n: collection.n,
            epsilon: param.coeffs.clone(),
            formal,
            diagram: collection.diagram.clone(),
            collection: CollectionBody { upper: collection.upper.clone(), lower: collection.lower.clone() },
            gates: collection.gates.clone(),
            provenance: Provenance {
                tolerances: tol.clone(),
                slant,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                created_unix: now_unix(),
            },
        }
    }

    /// Document of an extraction; the formal invariants are interpolated
    /// from the eigenvalues of the numerator at the singular points.
    pub fn from_extraction(sys: &RationalSystem, ex: &Extraction, tol: &Tolerances) -> Result<Self> {
        let field = FlowField::new(&sys.param, tol)?;
        let formal = interpolate_formal(&field, &ex.exponents)?;
        Ok(Self::new(&sys.param, formal, &ex.collection, ex.slant, tol))
    }

    pub fn parameter(&self) -> Result<Parameter> {
        Parameter::new(self.epsilon.clone())
    }

    pub fn stokes_collection(&self) -> StokesCollection {
        StokesCollection {
            k: self.k,
            n: self.n,
            diagram: self.diagram.clone(),
            upper: self.collection.upper.clone(),
            lower: self.collection.lower.clone(),
            gates: self.gates.clone(),
        }
    }

    pub fn presentation(&self) -> Result<Presentation> {
        Ok(Presentation { diagram: DSDiagram::from_word(&self.diagram)?, collection: self.stokes_collection() })
    }

    /// True when two documents describe the same `(k, n, eps, Lambda)`.
    pub fn same_header(&self, other: &ModulusDocument) -> bool {
        self.k == other.k && self.n == other.n && self.epsilon == other.epsilon && self.formal == other.formal
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "schema version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let shape_ok = |v: &[CMat]| v.len() == self.k && v.iter().all(|m| m.nrows() == self.n && m.ncols() == self.n);
        if self.epsilon.len() != self.k
            || self.formal.len() != self.k + 1
            || self.formal.iter().any(|l| l.len() != self.n)
            || !shape_ok(&self.collection.upper)
            || !shape_ok(&self.collection.lower)
            || !shape_ok(&self.gates)
        {
            return Err(Error::Schema("array shapes disagree with k and n".into()));
        }
        dsdomain::partners(&self.diagram).map_err(|e| Error::Schema(e.to_string()))?;
        if self.diagram.len() != 2 * self.k {
            return Err(Error::Schema(format!("diagram {} does not have length 2k", self.diagram)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModulusDocument = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }
}

/// Degree-`k` interpolation of the per-root eigenvalues `lambda_i(x_l)`,
/// recovered from exponents `lambda_i(x_l) / p'(x_l)`.
pub fn interpolate_formal(field: &FlowField, exponents: &[Vec<C>]) -> Result<Vec<Vec<C>>> {
    let m = field.points.len();
    let n = exponents.first().map(|e| e.len()).unwrap_or(0);
    let vander = CMat::from_fn(m, m, |r, j| field.points[r].position.powu(j as u32));
    let lu = vander.lu();
    let mut out = vec![vec![C::new(0.0, 0.0); n]; m];
    for i in 0..n {
        let rhs = linalg::CVec::from_fn(m, |r, _| exponents[r][i] / field.points[r].nu());
        let coef = lu.solve(&rhs).ok_or_else(|| Error::Singular("Vandermonde matrix of the roots".into()))?;
        for (j, row) in out.iter_mut().enumerate() {
            row[i] = coef[j];
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// System input
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraInput {
    #[serde(with = "linalg::serde_mat")]
    pub residue: CMat,
    pub pole: C,
}

/// `y' = (A_0 + ... + A_k x^k) / p(x) y` with an optional extra pole term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemInput {
    pub k: usize,
    pub epsilon: Vec<C>,
    #[serde(with = "linalg::serde_mats")]
    pub numerator: Vec<CMat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<ExtraInput>,
}

impl SystemInput {
    pub fn from_system(sys: &RationalSystem) -> Self {
        SystemInput {
            k: sys.k,
            epsilon: sys.param.coeffs.clone(),
            numerator: sys.numerator.clone(),
            extra: sys.extra.as_ref().map(|e| ExtraInput { residue: e.residue.clone(), pole: e.pole }),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn to_system(&self) -> Result<RationalSystem> {
        if self.epsilon.len() != self.k {
            return Err(Error::InvalidInput(format!("epsilon has {} entries, k = {}", self.epsilon.len(), self.k)));
        }
        let n = self.numerator.first().map(|m| m.nrows()).unwrap_or(0);
        let extra = self.extra.as_ref().map(|e| ExtraPole { residue: e.residue.clone(), pole: e.pole });
        RationalSystem::new(n, Parameter::new(self.epsilon.clone())?, self.numerator.clone(), extra)
    }
}

// ---------------------------------------------------------------------------
// SVG portraits
// ---------------------------------------------------------------------------

fn num(x: f64) -> String {
    format!("{x:.8e}")
}

fn polyline(points: &[C]) -> String {
    let mut d = String::new();
    for (i, z) in points.iter().enumerate() {
        let _ = write!(d, "{}{} {}", if i == 0 { "M" } else { " L" }, num(z.re), num(-z.im));
    }
    d
}

/// Phase portrait of `x' = e^{i slant} p(x)`: roots, separatrices, sector
/// labels and the gate curves of the diagram read off at this slant.
pub fn portrait_svg(param: &Parameter, slant: f64, tol: &Tolerances) -> Result<String> {
    let field = FlowField::new(param, tol)?;
    field.require_simple()?;
    let sep = flow::trace_separatrices_in(&field, slant)?;
    let diagram = dsdomain::build_diagram_in(&sep, &field)?;
    let k = param.k;
    let taus = dsdomain::tau_coordinates_in(&diagram, &field, slant, false)?.taus;
    let gates = (0..k).map(|j| dsdomain::gate_loop(&field, slant, j, taus[j])).collect::<Result<Vec<_>>>()?;

    let extent = 1.25 * field.escape_radius;
    let stroke = extent / 400.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="600" height="600" viewBox="{} {} {} {}">"#,
        num(-extent),
        num(-extent),
        num(2.0 * extent),
        num(2.0 * extent)
    );
    let _ = writeln!(s, "<title>diagram {} slant {}</title>", diagram.word, num(slant));
    let _ = writeln!(
        s,
        r##"<circle class="escape" cx="0" cy="0" r="{}" fill="none" stroke="#bbbbbb" stroke-width="{}"/>"##,
        num(field.escape_radius),
        num(stroke)
    );
    for (j, path) in gates.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<path class="gate" data-gate="{}" d="{}" fill="none" stroke="#2a7ab0" stroke-dasharray="{} {}" stroke-width="{}"/>"##,
            j + 1,
            polyline(path),
            num(4.0 * stroke),
            num(3.0 * stroke),
            num(stroke)
        );
    }
    for (a, tr) in sep.separatrices.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<path class="separatrix" data-index="{a}" d="{}" fill="none" stroke="#c0392b" stroke-width="{}"/>"##,
            polyline(&tr.positions()),
            num(1.5 * stroke)
        );
    }
    for (r, p) in field.points.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<circle class="root" data-root="{r}" cx="{}" cy="{}" r="{}" fill="black"/>"#,
            num(p.position.re),
            num(-p.position.im),
            num(4.0 * stroke)
        );
    }
    let font = extent / 25.0;
    for (e, mark) in diagram.sectors.iter().enumerate() {
        let z = dsdomain::sector_midpoint(&field, slant, e) * 1.1;
        let sign = match mark.sign {
            Sign::Plus => "+",
            Sign::Minus => "\u{2212}",
        };
        let _ = writeln!(
            s,
            r#"<text class="sector" x="{}" y="{}" font-size="{}" text-anchor="middle">Ω<tspan baseline-shift="sub">{}</tspan><tspan baseline-shift="super">{sign}</tspan></text>"#,
            num(z.re),
            num(-z.im),
            num(font),
            mark.index
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

// ---------------------------------------------------------------------------
// Classification reports and sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub status: Status,
    pub epsilon: Vec<C>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagram: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagram_id: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slant: Option<f64>,
    pub taus: Vec<C>,
    /// Smallest `|Re sum_I nu|`, relative to `max |nu|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bifurcation_distance: Option<f64>,
    /// Root subsets inside the bifurcation band.
    pub boundary: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl ClassifyReport {
    fn failed(param: &Parameter, err: &Error) -> Self {
        ClassifyReport {
            status: Status::of(err),
            epsilon: param.coeffs.clone(),
            diagram: None,
            diagram_id: None,
            slant: None,
            taus: Vec::new(),
            bifurcation_distance: None,
            boundary: Vec::new(),
            message: Some(err.to_string()),
        }
    }
}

/// Classify `param`, refusing with status `refusal` inside the bifurcation band.
pub fn classify_report(param: &Parameter, slant: Option<f64>, tol: &Tolerances) -> ClassifyReport {
    let run = || -> Result<ClassifyReport> {
        let field = FlowField::new(param, tol)?;
        field.require_simple()?;
        let nu = field.residues();
        let scale = nu.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let distance = dsdomain::bifurcation_distance(&nu) / scale;
        let boundary = dsdomain::detect_bifurcation(param, tol.bifurcation_band * scale, tol)?;
        let mut report = ClassifyReport {
            status: Status::Refusal,
            epsilon: param.coeffs.clone(),
            diagram: None,
            diagram_id: None,
            slant: None,
            taus: Vec::new(),
            bifurcation_distance: Some(distance),
            boundary,
            message: Some("boundary".into()),
        };
        if !report.boundary.is_empty() {
            return Ok(report);
        }
        let class = match slant {
            Some(s) => dsdomain::classify_at(param, s, tol)?,
            None => dsdomain::classify_epsilon(param, &tol.slant_grid, tol)?,
        };
        let tau = dsdomain::tau_coordinates_in(&class.diagram, &field, class.slant, true)?;
        report.status = Status::Pass;
        report.diagram = Some(class.diagram.word.clone());
        report.diagram_id = Some(class.diagram_id);
        report.slant = Some(class.slant);
        report.taus = tau.taus;
        report.message = None;
        Ok(report)
    };
    run().unwrap_or_else(|e| ClassifyReport::failed(param, &e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    Re,
    Im,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Index into `epsilon`.
    pub component: usize,
    pub part: Part,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Cartesian grid of parameters around `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub k: usize,
    pub base: Vec<C>,
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: GridSpec = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if spec.base.len() != spec.k || spec.axes.iter().any(|a| a.component >= spec.k) {
            return Err(Error::Schema("grid base or axis component disagrees with k".into()));
        }
        Ok(spec)
    }

    /// All grid points, last axis varying fastest. A grid without axes, or
    /// with an axis of count zero, is empty.
    pub fn points(&self) -> Vec<Vec<C>> {
        if self.axes.is_empty() {
            return Vec::new();
        }
        let mut out = vec![self.base.clone()];
        for axis in &self.axes {
            let values: Vec<f64> = (0..axis.count)
                .map(|i| {
                    if axis.count == 1 {
                        axis.min
                    } else {
                        axis.min + (axis.max - axis.min) * i as f64 / (axis.count - 1) as f64
                    }
                })
                .collect();
            out = out
                .iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        match axis.part {
                            Part::Re => q[axis.component].re = v,
                            Part::Im => q[axis.component].im = v,
                        }
                        q
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub k: usize,
    pub points: Vec<ClassifyReport>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,epsilon,status,diagram,bifurcation_distance\n");
        for (i, p) in self.points.iter().enumerate() {
            let eps: Vec<String> = p.epsilon.iter().map(|z| format!("{}:{}", num(z.re), num(z.im))).collect();
            let _ = writeln!(
                s,
                "{i},{},{},{},{}",
                eps.join(" "),
                serde_json::to_value(p.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                p.diagram.as_deref().unwrap_or(""),
                p.bifurcation_distance.map(num).unwrap_or_default()
            );
        }
        s
    }
}

/// Classify every grid point in parallel; failures are recorded per point.
pub fn sweep_classify(spec: &GridSpec, slant: Option<f64>, tol: &Tolerances) -> SweepReport {
    let points = spec
        .points()
        .into_par_iter()
        .map(|eps| match Parameter::new(eps) {
            Ok(p) => classify_report(&p, slant, tol),
            Err(e) => ClassifyReport::failed(&Parameter { k: spec.k, coeffs: spec.base.clone() }, &e),
        })
        .collect();
    SweepReport { k: spec.k, points }
}
