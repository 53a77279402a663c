//! Loop words of a diagram, their evaluation on Stokes collections,
//! numerical monodromy of concrete systems, and the compatibility check.
//!
//! Loops start at a base point in the sector `Omega_1^-`, on the gate of the
//! strip containing it. A loop around a root `x` crosses that gate (unless
//! `x` is one of its endpoints), walks along the dual tree to `x` crossing
//! the separatrices and gates in between, circles `x` counter-clockwise and
//! returns the same way. Matrices are then taken in the inverse order of
//! crossing, as in the usual presentation of the monodromy of Stokes data.

use crate::dsdomain::{DSDiagram, Geometry, RingItem};
use crate::extraction::RationalSystem;
use crate::linalg::{self, CMat, CVec};
use crate::ode::{self, Control, Dopri5Options, Finish, OdeSystem};
use crate::polyfield;
use crate::stokesdata::StokesCollection;
use crate::{Error, Result, Tolerances};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;

/// Reference to one matrix of a Stokes collection (indices are 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixRef {
    Upper(usize),
    Lower(usize),
    Gate(usize),
}

impl fmt::Display for MatrixRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixRef::Upper(j) => write!(f, "C_{j}^U"),
            MatrixRef::Lower(j) => write!(f, "C_{j}^L"),
            MatrixRef::Gate(j) => write!(f, "C^G_{{{j},σ({j})}}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub matrix: MatrixRef,
    pub inverted: bool,
}

impl Token {
    pub fn inverse(self) -> Token {
        Token { matrix: self.matrix, inverted: !self.inverted }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inverted {
            write!(f, "({})^{{-1}}", self.matrix)
        } else {
            write!(f, "{}", self.matrix)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopTarget {
    /// A finite singular point, by root index.
    Point(usize),
    /// The loop around all finite singular points (monodromy at infinity).
    Total,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopWord {
    pub target: LoopTarget,
    pub tokens: Vec<Token>,
}

impl fmt::Display for LoopWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.tokens.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl LoopWord {
    /// The word of the inverse loop.
    pub fn inverse(&self) -> LoopWord {
        LoopWord { target: self.target, tokens: self.tokens.iter().rev().map(|t| t.inverse()).collect() }
    }

    /// Free reduction (cancel adjacent `X X^{-1}`).
    pub fn reduced(&self) -> LoopWord {
        LoopWord { target: self.target, tokens: reduce(&self.tokens) }
    }
}

fn reduce(tokens: &[Token]) -> Vec<Token> {
    let mut out: Vec<Token> = Vec::with_capacity(tokens.len());
    for &t in tokens {
        if out.last().map(|l| l.matrix == t.matrix && l.inverted != t.inverted).unwrap_or(false) {
            out.pop();
        } else {
            out.push(t);
        }
    }
    out
}

struct Walker<'a> {
    g: &'a Geometry,
}

impl Walker<'_> {
    fn n(&self) -> usize {
        self.g.n_ends()
    }

    fn sides(&self, item: RingItem) -> (usize, usize) {
        match item {
            RingItem::Separatrix(a) => (a, (a + 1) % self.n()),
            RingItem::Gate(c) => (c, self.g.partner[c]),
            RingItem::Region(_) => unreachable!("regions are not crossed"),
        }
    }

    fn other_side(&self, item: RingItem, from: usize) -> usize {
        let (a, b) = self.sides(item);
        if a == from {
            b
        } else {
            a
        }
    }

    /// Token for crossing `item` from the region at end `from`.
    fn token(&self, item: RingItem, from: usize) -> Token {
        let k = self.g.k;
        match item {
            RingItem::Separatrix(a) => {
                let matrix = if a % 2 == 0 { MatrixRef::Lower(a / 2 + 1) } else { MatrixRef::Upper((a / 2 + 1) % k + 1) };
                Token { matrix, inverted: from != a }
            }
            RingItem::Gate(c) => Token { matrix: MatrixRef::Gate(c / 2 + 1), inverted: from != c },
            RingItem::Region(_) => unreachable!("regions are not crossed"),
        }
    }

    fn ring_index(&self, v: usize, r: usize) -> usize {
        self.g.rings[v].iter().position(|&it| it == RingItem::Region(r)).expect("region on ring")
    }

    /// At vertex `v`, starting in region `r` just past `from_item`, rotate
    /// away from it until `to_item`, recording crossings.
    fn rotate(&self, v: usize, mut r: usize, from_item: RingItem, to_item: RingItem, steps: &mut Vec<Token>) -> usize {
        let ring = &self.g.rings[v];
        let m = ring.len();
        let mut i = self.ring_index(v, r);
        let dir = if ring[(i + m - 1) % m] == from_item {
            1
        } else {
            assert_eq!(ring[(i + 1) % m], from_item, "entry item adjacent to region");
            m - 1
        };
        loop {
            let next = ring[(i + dir) % m];
            if next == to_item {
                return r;
            }
            steps.push(self.token(next, r));
            r = self.other_side(next, r);
            i = (i + 2 * dir) % m;
        }
    }

    /// Circle vertex `v` counter-clockwise starting in region `r`.
    fn circle(&self, v: usize, mut r: usize, steps: &mut Vec<Token>) {
        let ring = &self.g.rings[v];
        let m = ring.len();
        let i = self.ring_index(v, r);
        for s in (1..m).step_by(2) {
            let item = ring[(i + s) % m];
            steps.push(self.token(item, r));
            r = self.other_side(item, r);
        }
    }

    /// Tree path from `start` to `target` as (vertex, gate, next vertex).
    fn tree_path(&self, start: usize, target: usize) -> Vec<(usize, RingItem, usize)> {
        let k = self.g.k;
        let mut prev: Vec<Option<(usize, RingItem)>> = vec![None; k + 1];
        let mut seen = vec![false; k + 1];
        seen[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            for j in 0..k {
                let c = 2 * j;
                let (a, b) = self.g.gate_ends(c);
                for (x, y) in [(a, b), (b, a)] {
                    if x == u && !seen[y] {
                        seen[y] = true;
                        prev[y] = Some((u, RingItem::Gate(c)));
                        q.push_back(y);
                    }
                }
            }
        }
        let mut path = Vec::new();
        let mut v = target;
        while let Some((u, g)) = prev[v] {
            path.push((u, g, v));
            v = u;
        }
        path.reverse();
        path
    }
}

/// Loop word around the root with the given label.
pub fn loop_word_label(diagram: &DSDiagram, label: usize) -> LoopWord {
    let g = diagram.geometry();
    let w = Walker { g: &g };
    let base_end = 1;
    let g0 = RingItem::Gate(g.partner[base_end]);
    let (a, b) = g.gate_ends(g.partner[base_end]);
    let mut pre = Vec::new();
    let mut circ = Vec::new();
    if label == a || label == b {
        w.circle(label, base_end, &mut circ);
    } else {
        pre.push(w.token(g0, base_end));
        let mut r = w.other_side(g0, base_end);
        let pa = w.tree_path(a, label);
        let mut path = if pa[0].1 != g0 { pa } else { w.tree_path(b, label) };
        if path[0].1 == g0 {
            path.remove(0);
        }
        let mut prev_item = g0;
        for &(u, gate, _) in &path {
            r = w.rotate(u, r, prev_item, gate, &mut pre);
            prev_item = gate;
        }
        w.circle(label, r, &mut circ);
    }
    let mut crossing = pre.clone();
    crossing.extend(circ);
    crossing.extend(pre.iter().rev().map(|t| t.inverse()));
    let tokens = crossing.iter().rev().map(|t| t.inverse()).collect();
    LoopWord { target: LoopTarget::Point(diagram.labels[label]), tokens }
}

/// Loop word of the standard positive loop around a target.
///
/// For [`LoopTarget::Total`] this is `(C_k^L)^{-1} (C_k^U)^{-1} ... (C_1^L)^{-1} (C_1^U)^{-1}`.
pub fn loop_word(diagram: &DSDiagram, target: LoopTarget) -> LoopWord {
    match target {
        LoopTarget::Point(root) => loop_word_label(diagram, diagram.label_of_root(root)),
        LoopTarget::Total => {
            let mut tokens = Vec::with_capacity(2 * diagram.k);
            for j in (1..=diagram.k).rev() {
                tokens.push(Token { matrix: MatrixRef::Lower(j), inverted: true });
                tokens.push(Token { matrix: MatrixRef::Upper(j), inverted: true });
            }
            LoopWord { target, tokens }
        }
    }
}

/// The boundary loop read from the base point in `Omega_1^-`:
/// `(C_1^L)^{-1}(C_1^U)^{-1}(C_k^L)^{-1}(C_k^U)^{-1}...(C_2^L)^{-1}(C_2^U)^{-1}`,
/// which is the total word conjugated by `(C_1^L)^{-1}(C_1^U)^{-1}`.
pub fn boundary_word(k: usize) -> LoopWord {
    let mut tokens = vec![
        Token { matrix: MatrixRef::Lower(1), inverted: true },
        Token { matrix: MatrixRef::Upper(1), inverted: true },
    ];
    for j in (2..=k).rev() {
        tokens.push(Token { matrix: MatrixRef::Lower(j), inverted: true });
        tokens.push(Token { matrix: MatrixRef::Upper(j), inverted: true });
    }
    LoopWord { target: LoopTarget::Total, tokens }
}

/// An ordering of the root labels whose loop words multiply (in the free
/// group) to the boundary word. Searched exhaustively for `k <= 7`.
pub fn generator_order(diagram: &DSDiagram) -> Option<Vec<usize>> {
    if diagram.k > 7 {
        return None;
    }
    let words: Vec<Vec<Token>> = (0..=diagram.k).map(|l| loop_word_label(diagram, l).tokens).collect();
    let target = reduce(&boundary_word(diagram.k).tokens);
    let mut used = vec![false; diagram.k + 1];
    let mut order = Vec::new();
    fn dfs(words: &[Vec<Token>], target: &[Token], used: &mut [bool], order: &mut Vec<usize>, acc: &[Token]) -> bool {
        if order.len() == words.len() {
            return acc == target;
        }
        for l in 0..words.len() {
            if !used[l] {
                used[l] = true;
                order.push(l);
                let mut next = acc.to_vec();
                next.extend_from_slice(&words[l]);
                if dfs(words, target, used, order, &reduce(&next)) {
                    return true;
                }
                order.pop();
                used[l] = false;
            }
        }
        false
    }
    if dfs(&words, &target, &mut used, &mut order, &[]) {
        Some(order)
    } else {
        None
    }
}

/// Ordered product of the referenced matrices.
pub fn evaluate(word: &LoopWord, collection: &StokesCollection) -> Result<CMat> {
    let mut acc = CMat::identity(collection.n, collection.n);
    for t in &word.tokens {
        let m = collection.get(t.matrix);
        if t.inverted {
            acc *= linalg::inverse(m)?;
        } else {
            acc *= m;
        }
    }
    Ok(acc)
}

/// Monodromy representation: one generator per finite singular point,
/// ordered by root index, for loops based in `Omega_1^-`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonodromyRep {
    #[serde(with = "linalg::serde_mats")]
    pub generators: Vec<CMat>,
    #[serde(with = "linalg::serde_opt_mat")]
    pub total: Option<CMat>,
    pub basepoint: String,
}

impl MonodromyRep {
    pub fn from_collection(diagram: &DSDiagram, collection: &StokesCollection) -> Result<Self> {
        let generators = (0..=diagram.k)
            .map(|r| evaluate(&loop_word(diagram, LoopTarget::Point(r)), collection))
            .collect::<Result<Vec<_>>>()?;
        let total = Some(evaluate(&boundary_word(diagram.k), collection)?);
        Ok(MonodromyRep { generators, total, basepoint: "omega_1_minus".into() })
    }

    /// Residual of the product relation: generators, in the order found by
    /// [`generator_order`], multiply to the boundary monodromy.
    pub fn relation_residual(&self, diagram: &DSDiagram) -> Option<f64> {
        let order = generator_order(diagram)?;
        let total = self.total.as_ref()?;
        let n = total.nrows();
        let mut acc = CMat::identity(n, n);
        for l in order {
            acc *= &self.generators[diagram.labels[l]];
        }
        Some((acc - total).norm() / total.norm())
    }
}

/// Result of solving `G M_l = M'_l G` for all generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conjugacy {
    /// A certified invertible intertwiner, when one exists.
    #[serde(with = "linalg::serde_opt_mat")]
    pub g: Option<CMat>,
    /// Relative intertwining residual of the best candidate.
    pub residual: f64,
    /// Dimension of the numerical solution space.
    pub nullity: usize,
}

fn intertwining_residual(g: &CMat, a: &[CMat], b: &[CMat]) -> f64 {
    let gn = g.norm();
    a.iter()
        .zip(b)
        .map(|(m, mp)| (g * m - mp * g).norm() / (gn * m.norm().max(mp.norm())))
        .fold(0.0, f64::max)
}

/// Solve the joint intertwining equations via the nullspace of the stacked operator.
pub fn conjugacy_solve(rep1: &MonodromyRep, rep2: &MonodromyRep, tol: &Tolerances) -> Result<Conjugacy> {
    let (a, b) = (&rep1.generators, &rep2.generators);
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput("representations differ in generator count".into()));
    }
    let n = a[0].nrows();
    let id = CMat::identity(n, n);
    let mut op = CMat::zeros(n * n * a.len(), n * n);
    for (l, (m, mp)) in a.iter().zip(b).enumerate() {
        if m.shape() != (n, n) || mp.shape() != (n, n) {
            return Err(Error::InvalidInput("generator dimensions differ".into()));
        }
        let s = m.norm().max(mp.norm());
        let block = (linalg::kron(&m.transpose(), &id) - linalg::kron(&id, mp)).unscale(s);
        op.view_mut((l * n * n, 0), (n * n, n * n)).copy_from(&block);
    }
    let svd = op.clone().svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let basis: Vec<CVec> = order
        .iter()
        .filter(|&&i| svd.singular_values[i] <= tol.nullspace_rel * smax)
        .map(|&i| vt.row(i).adjoint().into_owned())
        .collect();
    let nullity = basis.len();
    let as_mat = |v: &CVec| CMat::from_column_slice(n, n, v.as_slice());
    if nullity == 0 {
        let best = as_mat(&vt.row(order[0]).adjoint().into_owned());
        return Ok(Conjugacy { g: None, residual: intertwining_residual(&best, a, b), nullity });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tol.seed);
    let mut best_res = f64::INFINITY;
    for _ in 0..16 {
        let mut v = CVec::zeros(n * n);
        for bv in &basis {
            v += bv * C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let g = as_mat(&v);
        let res = intertwining_residual(&g, a, b);
        best_res = best_res.min(res);
        let sv = g.clone().svd(false, false).singular_values;
        let cond = sv.iter().cloned().fold(f64::INFINITY, f64::min) / sv.iter().cloned().fold(0.0, f64::max);
        if cond > 1e-8 && res <= tol.conjugacy_residual {
            return Ok(Conjugacy { g: Some(linalg::scale_fix(&g)), residual: res, nullity });
        }
    }
    Ok(Conjugacy { g: None, residual: best_res, nullity })
}

/// One collection to compare, with the diagram it belongs to.
#[derive(Debug, Clone)]
pub struct Presentation {
    pub diagram: DSDiagram,
    pub collection: StokesCollection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub from: usize,
    pub to: usize,
    pub conjugate: bool,
    pub residual: f64,
    /// Braid applied to the loop system of `to` (signed 1-based generators).
    pub braid: Vec<i32>,
    #[serde(with = "linalg::serde_opt_mat")]
    pub g: Option<CMat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleResult {
    pub indices: [usize; 3],
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub pairs: Vec<PairResult>,
    pub triples: Vec<TripleResult>,
    pub pass: bool,
}

/// Generators of a presentation ordered so that their product is the
/// boundary monodromy.
pub fn ordered_generators(p: &Presentation) -> Result<Vec<CMat>> {
    let order = generator_order(&p.diagram)
        .ok_or_else(|| Error::Unsupported(format!("no generator order for diagram {}", p.diagram.word)))?;
    order.into_iter().map(|l| evaluate(&loop_word_label(&p.diagram, l), &p.collection)).collect()
}

/// Hurwitz action of `sigma_m^{±1}` on a tuple; preserves the ordered product.
pub fn hurwitz(tuple: &[CMat], m: usize, inverse: bool) -> Result<Vec<CMat>> {
    let mut out = tuple.to_vec();
    let (a, b) = (&tuple[m], &tuple[m + 1]);
    if inverse {
        out[m] = b.clone();
        out[m + 1] = linalg::inverse(b)? * a * b;
    } else {
        out[m] = a * b * linalg::inverse(a)?;
        out[m + 1] = a.clone();
    }
    Ok(out)
}

/// All braid words on `strands` strands up to length `depth`, shortest first.
pub fn braid_words(strands: usize, depth: usize) -> Vec<Vec<i32>> {
    let gens: Vec<i32> = (1..strands as i32).flat_map(|g| [g, -g]).collect();
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for w in &layer {
            for &g in &gens {
                if w.last() == Some(&-g) {
                    continue;
                }
                let mut v: Vec<i32> = w.clone();
                v.push(g);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn apply_braid(tuple: &[CMat], braid: &[i32]) -> Result<Vec<CMat>> {
    let mut t = tuple.to_vec();
    for &g in braid {
        t = hurwitz(&t, g.unsigned_abs() as usize - 1, g < 0)?;
    }
    Ok(t)
}

fn tuple_rep(generators: Vec<CMat>) -> MonodromyRep {
    MonodromyRep { generators, total: None, basepoint: "omega_1_minus".into() }
}

/// Conjugacy of two presentations. Each diagram comes with its own standard
/// loop system; both are geometric bases with the same boundary product, so
/// they differ by a braid. Braids are tried shortest first up to
/// `tol.braid_depth`.
pub fn compare_presentations(a: &Presentation, b: &Presentation, tol: &Tolerances) -> Result<(Conjugacy, Vec<i32>)> {
    let ta = tuple_rep(ordered_generators(a)?);
    let tb = ordered_generators(b)?;
    let mut best: Option<(Conjugacy, Vec<i32>)> = None;
    for braid in braid_words(tb.len(), tol.braid_depth) {
        let moved = tuple_rep(apply_braid(&tb, &braid)?);
        let c = conjugacy_solve(&ta, &moved, tol)?;
        if c.g.is_some() {
            return Ok((c, braid));
        }
        if best.as_ref().map(|(b, _)| c.residual < b.residual).unwrap_or(true) {
            best = Some((c, braid));
        }
    }
    Ok(best.expect("the empty braid is always tried"))
}

/// Pairwise conjugacy of the induced representations and the cocycle
/// identity `G(s, s'') = G(s', s'') G(s, s')` on triples.
pub fn compatibility_check(
    items: &[Presentation],
    pairs: &[(usize, usize)],
    triples: &[[usize; 3]],
    tol: &Tolerances,
) -> Result<CompatibilityReport> {
    let solve = |i: usize, j: usize| -> Result<PairResult> {
        let (c, braid) = compare_presentations(&items[i], &items[j], tol)?;
        Ok(PairResult { from: i, to: j, conjugate: c.g.is_some(), residual: c.residual, braid, g: c.g })
    };
    let pair_results = pairs.iter().map(|&(i, j)| solve(i, j)).collect::<Result<Vec<_>>>()?;
    let mut triple_results = Vec::new();
    for &[i, j, l] in triples {
        let gij = solve(i, j)?;
        let gjl = solve(j, l)?;
        let gil = solve(i, l)?;
        let (residual, pass) = match (gij.g, gjl.g, gil.g) {
            (Some(a), Some(b), Some(c)) => {
                let lhs = linalg::scale_fix(&(b * a));
                let r = (lhs - linalg::scale_fix(&c)).norm();
                (r, r <= tol.cocycle_residual)
            }
            _ => (f64::INFINITY, false),
        };
        triple_results.push(TripleResult { indices: [i, j, l], residual, pass });
    }
    let pass = pair_results.iter().all(|p| p.conjugate) && triple_results.iter().all(|t| t.pass);
    Ok(CompatibilityReport { pairs: pair_results, triples: triple_results, pass })
}

struct Transport<'a> {
    sys: &'a RationalSystem,
    a: C,
    b: C,
}

impl OdeSystem for Transport<'_> {
    fn rhs(&self, u: f64, y: &[C], dy: &mut [C]) {
        let n = self.sys.n;
        let x = self.a + (self.b - self.a) * u;
        let m = self.sys.matrix_at(x) * (self.b - self.a);
        for col in 0..y.len() / n {
            for row in 0..n {
                let mut s = C::new(0.0, 0.0);
                for l in 0..n {
                    s += m[(row, l)] * y[col * n + l];
                }
                dy[col * n + row] = s;
            }
        }
    }

    fn error_scale(&self, y: &[C], i: usize, opts: &Dopri5Options) -> f64 {
        let big = y.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        opts.atol + opts.rtol * big.max(y[i].norm())
    }
}

/// Transport a matrix of solutions along a polyline: returns `X(end)` for
/// `X(start) = x0`. With `renormalize`, the columns are replaced by their QR
/// frame after every step, which keeps the nested column spans and avoids
/// overflow when solutions grow at different exponential rates.
pub fn transport(sys: &RationalSystem, path: &[C], x0: &CMat, renormalize: bool, tol: &Tolerances) -> Result<CMat> {
    let n = sys.n;
    let m = x0.ncols();
    let mut y: Vec<C> = x0.as_slice().to_vec();
    for w in path.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        let t = Transport { sys, a: w[0], b: w[1] };
        let opts = Dopri5Options { rtol: tol.transport_rtol, atol: 1e-300, h0: 0.25, h_max: 1.0, max_steps: 200_000 };
        let out = ode::integrate(&t, 0.0, &y, 1.0, &opts, |_, y| {
            if renormalize {
                let q = linalg::orthonormalize(&CMat::from_column_slice(n, m, y));
                y.copy_from_slice(q.as_slice());
            }
            Control::Continue
        });
        if out.finish != Finish::Reached {
            return Err(Error::Integration(format!("transport stopped with {:?}", out.finish)));
        }
        y = out.y;
    }
    Ok(CMat::from_column_slice(n, m, &y))
}

/// Monodromy `M` with `X_e = X_b M` around a closed polyline, starting from `X_b = I`.
pub fn numerical_monodromy(sys: &RationalSystem, loop_path: &[C], clearance: f64, tol: &Tolerances) -> Result<CMat> {
    let pts = polyfield::roots(&sys.param, tol)?;
    polyfield::check_clearance(&pts, loop_path, clearance)?;
    if let Some(extra) = &sys.extra {
        for (s, w) in loop_path.windows(2).enumerate() {
            let d = crate::extraction::segment_distance(w[0], w[1], extra.pole);
            if d < clearance {
                return Err(Error::ClearanceViolation { segment: s, root: pts.len(), distance: d, clearance });
            }
        }
    }
    let n = sys.n;
    transport(sys, loop_path, &CMat::identity(n, n), false, tol)
}
