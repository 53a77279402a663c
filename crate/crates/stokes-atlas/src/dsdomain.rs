//! Douady–Sentenac diagrams: sectors at infinity, the non-crossing pairing,
//! the dual tree, tau-coordinates and classification of parameters.
//!
//! Conventions. The boundary circle of the disk model carries `2k` *ends*
//! (sectors at infinity) alternating with `2k` *arcs* (separatrices). End `e`
//! sits between separatrices `e` and `e + 1`; separatrix `s` is arc
//! `s - 1 (mod 2k)`. Even ends are the `+` sectors `Omega_j^+` (end `2j - 2`),
//! odd ends the `-` sectors `Omega_j^-` (end `2j - 1`). Even separatrices
//! (`U_{s/2+1}`) land at alpha points, odd ones (`L_{(s+1)/2}`) at omega points.
//!
//! A diagram is encoded by the balanced-parenthesis word of its chords: the
//! matched positions of the word are the ends joined by a gate.

use crate::context::Tolerances;
use crate::flow::{self, FlowField, Role, SeparatrixSet, Termination};
use crate::polyfield::{self, Parameter};
use crate::{Error, Result};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

/// Sector mark `Omega_index^sign`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorMark {
    pub index: usize,
    pub sign: Sign,
}

/// An item met when walking counter-clockwise around a root inside its face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RingItem {
    /// The part of the face adjacent to end `e`.
    Region(usize),
    /// The separatrix on arc `a`.
    Separatrix(usize),
    /// The gate whose `+` end is `c`.
    Gate(usize),
}

/// A Douady–Sentenac diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DSDiagram {
    pub k: usize,
    /// Balanced-parenthesis word of length `2k`; the diagram id.
    pub word: String,
    /// Sector marks in cyclic order `Omega_1^+, Omega_1^-, ..., Omega_k^-`.
    pub sectors: Vec<SectorMark>,
    /// `pairing[j-1] = sigma(j)`, 1-based.
    pub pairing: Vec<usize>,
    /// Root index of the alpha point of each sector (indexed by end).
    pub alpha_of: Vec<usize>,
    /// Root index of the omega point of each sector (indexed by end).
    pub omega_of: Vec<usize>,
    /// Dual tree: edge `j-1` joins the endpoints of gate `j` (alpha, omega).
    pub tree: Vec<(usize, usize)>,
    /// `labels[i]` is the root index playing the role of `x_{i+1}`.
    pub labels: Vec<usize>,
}

/// Chord partner of every end for a balanced word.
pub fn partners(word: &str) -> Result<Vec<usize>> {
    let n = word.len();
    let mut p = vec![usize::MAX; n];
    let mut stack = Vec::new();
    for (i, ch) in word.chars().enumerate() {
        match ch {
            '(' => stack.push(i),
            ')' => {
                let j = stack.pop().ok_or_else(|| Error::InvalidInput(format!("unbalanced word {word}")))?;
                p[i] = j;
                p[j] = i;
            }
            _ => return Err(Error::InvalidInput(format!("bad character in diagram word {word}"))),
        }
    }
    if !stack.is_empty() || n == 0 {
        return Err(Error::InvalidInput(format!("unbalanced word {word}")));
    }
    Ok(p)
}

/// Combinatorial structure of a diagram derived from its word.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub k: usize,
    pub partner: Vec<usize>,
    /// Face (indexed by label) of every arc.
    pub label_of_arc: Vec<usize>,
    /// Counter-clockwise ring of items around each labelled root.
    pub rings: Vec<Vec<RingItem>>,
}

impl Geometry {
    pub fn new(word: &str) -> Result<Self> {
        let partner = partners(word)?;
        let n = partner.len();
        let k = n / 2;
        let mut face_of_arc = vec![usize::MAX; n];
        let mut faces: Vec<Vec<usize>> = Vec::new();
        for a in 0..n {
            if face_of_arc[a] != usize::MAX {
                continue;
            }
            let mut f = Vec::new();
            let mut x = a;
            while face_of_arc[x] == usize::MAX {
                face_of_arc[x] = faces.len();
                f.push(x);
                x = partner[(x + 1) % n];
            }
            faces.push(f);
        }
        // Labels: faces in order of first appearance along L_1..L_k, U_1, U_2, ..., U_k.
        let mut order: Vec<usize> = (0..k).map(|j| 2 * j).collect();
        order.push(n - 1);
        order.extend((2..=k).map(|j| 2 * j - 3));
        let mut label_of_face = vec![usize::MAX; faces.len()];
        let mut next = 0;
        for a in order {
            let f = face_of_arc[a];
            if label_of_face[f] == usize::MAX {
                label_of_face[f] = next;
                next += 1;
            }
        }
        let label_of_arc: Vec<usize> = face_of_arc.iter().map(|&f| label_of_face[f]).collect();
        let mut rings = vec![Vec::new(); faces.len()];
        for (fi, f) in faces.iter().enumerate() {
            let mut items = Vec::with_capacity(4 * f.len());
            for &a in f {
                let e = (a + 1) % n;
                let c = if e % 2 == 0 { e } else { partner[e] };
                items.extend([RingItem::Region(a), RingItem::Separatrix(a), RingItem::Region(e), RingItem::Gate(c)]);
            }
            rings[label_of_face[fi]] = items;
        }
        Ok(Geometry { k, partner, label_of_arc, rings })
    }

    pub fn n_ends(&self) -> usize {
        2 * self.k
    }

    /// Labels of the roots on each side of gate `c`: `(alpha, omega)`.
    pub fn gate_ends(&self, c: usize) -> (usize, usize) {
        let n = self.n_ends();
        (self.label_of_arc[(c + n - 1) % n], self.label_of_arc[c])
    }

    /// Labels of the roots enclosed by the gate with `+` end `c`: the faces of
    /// arcs running counter-clockwise from its `-` end to `c`.
    pub fn enclosed(&self, c: usize) -> Vec<usize> {
        let n = self.n_ends();
        let mut out = Vec::new();
        let mut a = self.partner[c];
        while a != c {
            let l = self.label_of_arc[a];
            if !out.contains(&l) {
                out.push(l);
            }
            a = (a + 1) % n;
        }
        out.sort_unstable();
        out
    }
}

fn sector_marks(k: usize) -> Vec<SectorMark> {
    (0..2 * k)
        .map(|e| SectorMark { index: e / 2 + 1, sign: if e % 2 == 0 { Sign::Plus } else { Sign::Minus } })
        .collect()
}

impl DSDiagram {
    /// The abstract diagram of a word, with roots identified with labels.
    pub fn from_word(word: &str) -> Result<Self> {
        let g = Geometry::new(word)?;
        let labels: Vec<usize> = (0..=g.k).collect();
        Self::assemble(word, &g, &labels)
    }

    fn assemble(word: &str, g: &Geometry, labels: &[usize]) -> Result<Self> {
        let k = g.k;
        let n = 2 * k;
        let mut alpha_of = vec![0; n];
        let mut omega_of = vec![0; n];
        for e in 0..n {
            let before = labels[g.label_of_arc[(e + n - 1) % n]];
            let after = labels[g.label_of_arc[e]];
            if e % 2 == 0 {
                alpha_of[e] = before;
                omega_of[e] = after;
            } else {
                omega_of[e] = before;
                alpha_of[e] = after;
            }
        }
        let pairing = (0..k).map(|j| g.partner[2 * j] / 2 + 1).collect();
        let tree = (0..k).map(|j| (alpha_of[2 * j], omega_of[2 * j])).collect();
        Ok(DSDiagram {
            k,
            word: word.to_string(),
            sectors: sector_marks(k),
            pairing,
            alpha_of,
            omega_of,
            tree,
            labels: labels.to_vec(),
        })
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(&self.word).expect("diagram word is valid")
    }

    /// Label of a root index.
    pub fn label_of_root(&self, root: usize) -> usize {
        self.labels.iter().position(|&r| r == root).expect("root in diagram")
    }

    /// Chords as (+ end, - end) pairs.
    pub fn chords(&self) -> Vec<(usize, usize)> {
        (0..self.k).map(|j| (2 * j, 2 * self.pairing[j] - 1)).collect()
    }

    /// Check all structural invariants.
    pub fn validate(&self) -> Result<()> {
        let chords = self.chords();
        for (i, &(a, b)) in chords.iter().enumerate() {
            for &(c, d) in &chords[..i] {
                if chords_cross((a, b), (c, d)) {
                    return Err(Error::InconsistentSectors(format!("chords {a}-{b} and {c}-{d} cross")));
                }
            }
        }
        if !is_spanning_tree(self.k + 1, &self.tree) {
            return Err(Error::InconsistentSectors("dual graph is not a spanning tree".into()));
        }
        for &(p, m) in &chords {
            if self.alpha_of[p] != self.alpha_of[m] || self.omega_of[p] != self.omega_of[m] {
                return Err(Error::InconsistentSectors(format!("paired sectors {p},{m} disagree")));
            }
        }
        Ok(())
    }
}

/// Whether two chords of the disk (given by end positions) cross.
pub fn chords_cross(a: (usize, usize), b: (usize, usize)) -> bool {
    let (lo, hi) = (a.0.min(a.1), a.0.max(a.1));
    let inside = |x: usize| lo < x && x < hi;
    inside(b.0) != inside(b.1)
}

fn is_spanning_tree(nv: usize, edges: &[(usize, usize)]) -> bool {
    if edges.len() + 1 != nv {
        return false;
    }
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for &(a, b) in edges {
        if a >= nv || b >= nv {
            return false;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

/// Balanced-parenthesis words of length `2k` in lexicographic order ('(' < ')').
pub fn catalan_words(k: usize) -> Vec<String> {
    fn rec(s: &mut String, open: usize, close: usize, k: usize, out: &mut Vec<String>) {
        if s.len() == 2 * k {
            out.push(s.clone());
            return;
        }
        if open < k {
            s.push('(');
            rec(s, open + 1, close, k, out);
            s.pop();
        }
        if close < open {
            s.push(')');
            rec(s, open, close + 1, k, out);
            s.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut String::new(), 0, 0, k, &mut out);
    out
}

/// All `C_k` abstract diagrams for `1 <= k <= 12`.
pub fn enumerate_diagrams(k: usize) -> Result<Vec<DSDiagram>> {
    if !(1..=12).contains(&k) {
        return Err(Error::InvalidInput(format!("k = {k} outside 1..=12")));
    }
    catalan_words(k).iter().map(|w| DSDiagram::from_word(w)).collect()
}

/// Index of a word among [`catalan_words`].
pub fn diagram_index(word: &str) -> Option<usize> {
    catalan_words(word.len() / 2).iter().position(|w| w == word)
}

/// Point on the escape circle in the middle of sector `e`.
pub fn sector_midpoint(field: &FlowField, slant: f64, e: usize) -> C {
    let k = field.param.k as f64;
    C::from_polar(field.escape_radius, ((e as f64 + 0.5) * PI + slant) / k)
}

/// Read a diagram off traced separatrices.
pub fn build_diagram(sep: &SeparatrixSet, param: &Parameter, tol: &Tolerances) -> Result<DSDiagram> {
    let field = FlowField::new(param, tol)?;
    build_diagram_in(sep, &field)
}

pub fn build_diagram_in(sep: &SeparatrixSet, field: &FlowField) -> Result<DSDiagram> {
    let k = field.param.k;
    let n = 2 * k;
    if sep.separatrices.len() != n {
        return Err(Error::InvalidInput("separatrix count does not match k".into()));
    }
    let mut root_of_sep = vec![0; n];
    for (s, r) in root_of_sep.iter_mut().enumerate() {
        let att = sep.attachment(s)?;
        let expect = if s % 2 == 0 { Role::Alpha } else { Role::Omega };
        if att.role != expect {
            return Err(Error::InconsistentSectors(format!("separatrix {s} has the wrong role")));
        }
        *r = att.root;
    }
    // Arc a carries separatrix a + 1.
    let root_of_arc: Vec<usize> = (0..n).map(|a| root_of_sep[(a + 1) % n]).collect();
    let alpha_omega = |e: usize| -> (usize, usize) {
        let (before, after) = (root_of_arc[(e + n - 1) % n], root_of_arc[e]);
        if e % 2 == 0 {
            (before, after)
        } else {
            (after, before)
        }
    };
    // Pair + ends with - ends sharing both endpoints.
    let mut partner = vec![usize::MAX; n];
    for p in (0..n).step_by(2) {
        let key = alpha_omega(p);
        let matches: Vec<usize> = (1..n).step_by(2).filter(|&m| alpha_omega(m) == key).collect();
        if matches.len() != 1 {
            return Err(Error::InconsistentSectors(format!(
                "sector Omega_{}^+ has {} partners with endpoints {:?}",
                p / 2 + 1,
                matches.len(),
                key
            )));
        }
        if partner[matches[0]] != usize::MAX {
            return Err(Error::InconsistentSectors(format!("sector Omega_{}^- paired twice", matches[0] / 2 + 1)));
        }
        partner[p] = matches[0];
        partner[matches[0]] = p;
    }
    let mut word = vec![' '; n];
    for e in 0..n {
        word[e] = if e < partner[e] { '(' } else { ')' };
    }
    let word: String = word.into_iter().collect();
    if partners(&word).map(|p| p != partner).unwrap_or(true) {
        return Err(Error::InconsistentSectors("pairing is crossing".into()));
    }
    let g = Geometry::new(&word)?;
    // Map labels to actual roots and check the face partition.
    let mut labels = vec![usize::MAX; k + 1];
    for a in 0..n {
        let l = g.label_of_arc[a];
        if labels[l] == usize::MAX {
            labels[l] = root_of_arc[a];
        } else if labels[l] != root_of_arc[a] {
            return Err(Error::InconsistentSectors(format!("face of arc {a} holds two roots")));
        }
    }
    let mut seen = labels.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != k + 1 || labels.contains(&usize::MAX) {
        return Err(Error::InconsistentSectors("faces do not hold one root each".into()));
    }
    let d = DSDiagram::assemble(&word, &g, &labels)?;
    d.validate()?;
    // Probe consistency: the trajectory through the middle of each sector
    // runs from its alpha point to its omega point.
    for e in 0..n {
        let q = sector_midpoint(field, sep.slant, e);
        let esc = field.tol.reescape_factor * field.escape_radius;
        for (sign, want) in [(1.0, d.omega_of[e]), (-1.0, d.alpha_of[e])] {
            let w = C::from_polar(sign, -sep.slant);
            let tr = flow::integrate_trapped(field, q, w, esc);
            if tr.termination != Termination::ConvergedToRoot(want) {
                return Err(Error::InconsistentSectors(format!(
                    "probe of sector {} ended with {:?}, expected root {want}",
                    e, tr.termination
                )));
            }
        }
    }
    Ok(d)
}

/// Tau-coordinates of a diagram at a parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCoordinates {
    pub taus: Vec<C>,
    /// Root indices enclosed by each `gamma_j`.
    pub enclosed: Vec<Vec<usize>>,
}

/// Closed polyline realising `gamma_j` for the gate with `+` end `2j - 2`,
/// closed by an arc outside the escape circle.
///
/// In the time coordinate `t = int dx / p` the strip is a band and its two
/// ends at infinity differ by `tau`; the gate is the straight segment between
/// them, i.e. the trajectory of `x' = (tau / |tau|) p(x)`.
pub fn gate_loop(field: &FlowField, slant: f64, j: usize, tau: C) -> Result<Vec<C>> {
    // Starting at finite radius offsets the segment by about `r^{-k} / k`
    // in `t`; push the start out until that is small against the height of
    // the band, which is thin near the homoclinic locus.
    let k = field.param.k as f64;
    let height = (tau * C::from_polar(1.0, slant)).im.abs();
    let wanted = (1.0 / (k * 1e-3 * height.max(1e-300))).powf(1.0 / k);
    let radius = wanted.clamp(field.escape_radius, 1e4 * field.escape_radius);
    let q = sector_midpoint(field, slant, 2 * j) * (radius / field.escape_radius);
    // The segment passes the far end at the same offset, which only reaches
    // about `radius` again: stop at half of it.
    let tr = flow::integrate_direction(field, q, tau / tau.norm(), f64::INFINITY, 0.5 * radius, |_| false);
    if tr.termination != Termination::EscapedToInfinity {
        return Err(Error::Geometry(format!("gate curve {} ended with {:?}", j + 1, tr.termination)));
    }
    let mut path = tr.positions();
    let exit = tr.last().x;
    let r = exit.norm();
    let mut a0 = exit.arg();
    let a1 = q.arg();
    while a0 > a1 {
        a0 -= 2.0 * PI;
    }
    let m = (((a1 - a0) / (2.0 * PI) * 256.0).ceil() as usize).max(4);
    for i in 1..=m {
        path.push(C::from_polar(r, a0 + (a1 - a0) * i as f64 / m as f64));
    }
    path.push(q);
    Ok(path)
}

/// Winding number of a closed polyline around `z`.
pub fn winding_number(path: &[C], z: C) -> i64 {
    let mut total = 0.0;
    for w in path.windows(2) {
        total += ((w[1] - z) / (w[0] - z)).arg();
    }
    (total / (2.0 * PI)).round() as i64
}

pub fn tau_coordinates(diagram: &DSDiagram, param: &Parameter, slant: f64, tol: &Tolerances) -> Result<TauCoordinates> {
    let field = FlowField::new(param, tol)?;
    tau_coordinates_in(diagram, &field, slant, true)
}

/// Residue values of tau, optionally cross-checked against path quadrature.
pub fn tau_coordinates_in(diagram: &DSDiagram, field: &FlowField, slant: f64, check: bool) -> Result<TauCoordinates> {
    field.require_simple()?;
    let g = diagram.geometry();
    let nu = field.residues();
    let mut taus = Vec::with_capacity(diagram.k);
    let mut enclosed = Vec::with_capacity(diagram.k);
    for j in 0..diagram.k {
        let mut set: Vec<usize> = g.enclosed(2 * j).iter().map(|&l| diagram.labels[l]).collect();
        set.sort_unstable();
        let tau = C::new(0.0, 2.0 * PI) * set.iter().map(|&r| nu[r]).sum::<C>();
        if check {
            let path = gate_loop(field, slant, j, tau)?;
            let wound: Vec<usize> =
                (0..nu.len()).filter(|&r| winding_number(&path, field.points[r].position) == 1).collect();
            if wound != set {
                return Err(Error::Geometry(format!("gamma_{} encloses {:?}, diagram says {:?}", j + 1, wound, set)));
            }
            polyfield::check_clearance(&field.points, &path, field.capture_radius)?;
            let val = polyfield::line_integral(&|x| 1.0 / field.param.eval(x), &path, field.tol.quad_rtol);
            let err = (val - tau).norm() / tau.norm().max(1e-300);
            if err > field.tol.tau_fail {
                return Err(Error::Geometry(format!("tau_{} residue {tau} vs path {val}", j + 1)));
            }
        }
        taus.push(tau);
        enclosed.push(set);
    }
    Ok(TauCoordinates { taus, enclosed })
}

/// Nonempty proper subsets `I` with `|Re sum_I nu| <= band`, one per
/// complementary pair (the representative containing root 0).
pub fn detect_bifurcation(param: &Parameter, band: f64, tol: &Tolerances) -> Result<Vec<Vec<usize>>> {
    let field = FlowField::new(param, tol)?;
    field.require_simple()?;
    let nu = field.residues();
    Ok(subsets_with_sums(&nu)
        .into_iter()
        .filter(|(_, s)| s.re.abs() <= band)
        .map(|(set, _)| set)
        .collect())
}

fn subsets_with_sums(nu: &[C]) -> Vec<(Vec<usize>, C)> {
    let n = nu.len();
    let mut out = Vec::new();
    for mask in 1u64..(1u64 << n) - 1 {
        if mask & 1 == 0 {
            continue;
        }
        let set: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let s = set.iter().map(|&i| nu[i]).sum();
        out.push((set, s));
    }
    out
}

/// Smallest `|Re sum_I nu|` over subsets: the distance to the homoclinic locus.
pub fn bifurcation_distance(nu: &[C]) -> f64 {
    subsets_with_sums(nu).iter().map(|(_, s)| s.re.abs()).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// Index among [`enumerate_diagrams`].
    pub diagram_id: usize,
    pub diagram: DSDiagram,
    pub slant: f64,
    /// Smallest `|Re sum_I nu|`, scaled by `max |nu|`.
    pub bifurcation_distance: f64,
}

/// Classify a parameter by tracing separatrices over a slant grid.
pub fn classify_epsilon(param: &Parameter, slant_grid: &[f64], tol: &Tolerances) -> Result<Classification> {
    let field = FlowField::new(param, tol)?;
    field.require_simple()?;
    let nu = field.residues();
    let scale = nu.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let distance = bifurcation_distance(&nu) / scale;
    for &slant in slant_grid {
        let sep = flow::trace_separatrices_trapped(&field, slant)?;
        if sep.any_homoclinic() {
            continue;
        }
        let diagram = build_diagram_in(&sep, &field)?;
        let diagram_id = diagram_index(&diagram.word).expect("built word is balanced");
        return Ok(Classification { diagram_id, diagram, slant, bifurcation_distance: distance });
    }
    Err(Error::AllSlantsHomoclinic)
}

/// Classify at a single slant, without the grid fallback.
pub fn classify_at(param: &Parameter, slant: f64, tol: &Tolerances) -> Result<Classification> {
    classify_epsilon(param, &[slant], tol)
}
