//! Formal invariants, normalised Stokes collections, gate matrices and the
//! normalisation and decomposition lemmas.

use crate::dsdomain::DSDiagram;
use crate::linalg::{self, c, CMat};
use crate::monodromy::{self, LoopTarget, MatrixRef};
use crate::polyfield::{self, Parameter, PointKind, SingularPoint};
use crate::{Error, Result, Tolerances};
use num_complex::Complex64 as C;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::PI;

/// Diagonal matrices `Lambda_0, ..., Lambda_k` of the formal normal form,
/// stored as their diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormalInvariants {
    pub n: usize,
    pub lambdas: Vec<Vec<C>>,
}

impl FormalInvariants {
    pub fn new(lambdas: Vec<Vec<C>>) -> Result<Self> {
        let n = lambdas.first().map(|l| l.len()).unwrap_or(0);
        if n == 0 || lambdas.iter().any(|l| l.len() != n) {
            return Err(Error::InvalidInput("formal invariants must be k+1 diagonals of equal length".into()));
        }
        for w in lambdas[0].windows(2) {
            if !(w[0].re > w[1].re) {
                return Err(Error::InvalidInput(
                    "Lambda_0 must have strictly decreasing real parts".into(),
                ));
            }
        }
        Ok(FormalInvariants { n, lambdas })
    }

    pub fn k(&self) -> usize {
        self.lambdas.len() - 1
    }

    /// Diagonal of `Lambda(x) = Lambda_0 + Lambda_1 x + ... + Lambda_k x^k`.
    pub fn at(&self, x: C) -> Vec<C> {
        (0..self.n)
            .map(|i| {
                let mut acc = c(0.0, 0.0);
                for l in self.lambdas.iter().rev() {
                    acc = acc * x + l[i];
                }
                acc
            })
            .collect()
    }

    /// Random invariants with `Lambda_0` ordered and well separated.
    pub fn random<R: Rng>(rng: &mut R, n: usize, k: usize, scale: f64) -> Self {
        let mut lambdas = Vec::with_capacity(k + 1);
        let l0: Vec<C> = (0..n)
            .map(|i| c(((n - 1 - i) as f64) * 1.5 - 0.75 * (n - 1) as f64 + rng.gen_range(-0.2..0.2), rng.gen_range(-0.5..0.5)))
            .collect();
        lambdas.push(l0);
        for _ in 0..k {
            lambdas.push((0..n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale).collect());
        }
        FormalInvariants { n, lambdas }
    }
}

/// Normalised Stokes collection of one diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesCollection {
    pub k: usize,
    pub n: usize,
    /// Diagram word.
    pub diagram: String,
    #[serde(with = "linalg::serde_mats")]
    pub upper: Vec<CMat>,
    #[serde(with = "linalg::serde_mats")]
    pub lower: Vec<CMat>,
    #[serde(with = "linalg::serde_mats")]
    pub gates: Vec<CMat>,
}

impl StokesCollection {
    pub fn identity(k: usize, n: usize, diagram: &str) -> Self {
        let i = CMat::identity(n, n);
        StokesCollection {
            k,
            n,
            diagram: diagram.to_string(),
            upper: vec![i.clone(); k],
            lower: vec![i.clone(); k],
            gates: vec![i; k],
        }
    }

    pub fn get(&self, m: MatrixRef) -> &CMat {
        match m {
            MatrixRef::Upper(j) => &self.upper[j - 1],
            MatrixRef::Lower(j) => &self.lower[j - 1],
            MatrixRef::Gate(j) => &self.gates[j - 1],
        }
    }

    pub fn get_mut(&mut self, m: MatrixRef) -> &mut CMat {
        match m {
            MatrixRef::Upper(j) => &mut self.upper[j - 1],
            MatrixRef::Lower(j) => &mut self.lower[j - 1],
            MatrixRef::Gate(j) => &mut self.gates[j - 1],
        }
    }

    pub fn all_refs(&self) -> Vec<MatrixRef> {
        let mut v = Vec::with_capacity(3 * self.k);
        for j in 1..=self.k {
            v.push(MatrixRef::Upper(j));
            v.push(MatrixRef::Lower(j));
            v.push(MatrixRef::Gate(j));
        }
        v
    }

    /// Check the shape, triangularity and normalisation of the collection.
    pub fn validate(&self, formal: &FormalInvariants, tol: f64) -> Result<()> {
        let n = self.n;
        for m in self.all_refs() {
            let a = self.get(m);
            if a.shape() != (n, n) {
                return Err(Error::InvalidInput(format!("{m} has the wrong shape")));
            }
            let scale = linalg::max_norm(a).max(1.0);
            for i in 0..n {
                for j in 0..n {
                    let bad = match m {
                        MatrixRef::Upper(_) => i > j,
                        MatrixRef::Lower(_) => i < j,
                        MatrixRef::Gate(_) => i != j,
                    };
                    if bad && a[(i, j)].norm() > tol * scale {
                        return Err(Error::Triangularity { matrix: m.to_string(), residual: a[(i, j)].norm() / scale });
                    }
                }
            }
            if a.determinant().norm() == 0.0 {
                return Err(Error::Singular(m.to_string()));
            }
        }
        let lk = &formal.lambdas[self.k];
        for i in 0..n {
            let want = (c(0.0, -2.0 * PI) * lk[i]).exp();
            if (self.upper[0][(i, i)] - want).norm() > tol * want.norm().max(1.0) {
                return Err(Error::InvalidInput("diagonal of C_1^U must be exp(-2 pi i Lambda_k)".into()));
            }
            for j in 1..=self.k {
                if j >= 2 && (self.upper[j - 1][(i, i)] - 1.0).norm() > tol {
                    return Err(Error::InvalidInput(format!("C_{j}^U must have unit diagonal")));
                }
                if (self.lower[j - 1][(i, i)] - 1.0).norm() > tol {
                    return Err(Error::InvalidInput(format!("C_{j}^L must have unit diagonal")));
                }
            }
        }
        Ok(())
    }

    /// Normalised collection with given off-diagonal parts and the diagonal of
    /// `C_1^U` fixed by `Lambda_k`; gates are left as identity.
    pub fn normalized_with<R: Rng>(k: usize, formal: &FormalInvariants, diagram: &str, rng: &mut R, off: f64) -> Self {
        let n = formal.n;
        let mut col = StokesCollection::identity(k, n, diagram);
        for j in 0..k {
            for r in 0..n {
                for s in 0..n {
                    let z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * off;
                    if r < s {
                        col.upper[j][(r, s)] = z;
                    } else if r > s {
                        col.lower[j][(r, s)] = z;
                    }
                }
            }
        }
        for i in 0..n {
            col.upper[0][(i, i)] = (c(0.0, -2.0 * PI) * formal.lambdas[k][i]).exp();
        }
        col
    }
}

/// `exp(2 pi i Lambda(x_l) nu_l)` at a simple singular point.
pub fn formal_local_monodromy(formal: &FormalInvariants, point: &SingularPoint) -> Result<CMat> {
    if point.kind == PointKind::Multiple {
        return Err(Error::Unsupported("formal monodromy at a multiple point".into()));
    }
    let nu = point.nu();
    let d: Vec<C> = formal.at(point.position).iter().map(|l| (c(0.0, 2.0 * PI) * l * nu).exp()).collect();
    Ok(linalg::diag(&d))
}

fn diag_of(m: &CMat) -> Vec<C> {
    (0..m.nrows()).map(|i| m[(i, i)]).collect()
}

/// Diagonal gates making every loop word carry the formal local monodromy.
///
/// Gates are found leaf by leaf on the dual tree; the equation of the last
/// root is then a consistency check.
pub fn compute_gates(
    collection: &StokesCollection,
    formal: &FormalInvariants,
    diagram: &DSDiagram,
    param: &Parameter,
    tol: &Tolerances,
) -> Result<Vec<CMat>> {
    let points = polyfield::roots(param, tol)?;
    let targets = (0..=diagram.k)
        .map(|r| Ok(diag_of(&formal_local_monodromy(formal, &points[r])?)))
        .collect::<Result<Vec<_>>>()?;
    compute_gates_for(collection, diagram, &targets, tol.gate_consistency)
}

/// Diagonal gates for prescribed local monodromy eigenvalues, given per root
/// index in the order of the collection's diagonal.
pub fn compute_gates_for(
    collection: &StokesCollection,
    diagram: &DSDiagram,
    root_targets: &[Vec<C>],
    consistency: f64,
) -> Result<Vec<CMat>> {
    let k = diagram.k;
    let n = collection.n;
    // Per root label: known diagonal product, gate exponents, target.
    let mut known = Vec::with_capacity(k + 1);
    let mut exps = Vec::with_capacity(k + 1);
    let mut targets = Vec::with_capacity(k + 1);
    for label in 0..=k {
        let word = monodromy::loop_word_label(diagram, label);
        let mut kn = vec![c(1.0, 0.0); n];
        let mut ex = vec![0i32; k];
        for t in &word.tokens {
            match t.matrix {
                MatrixRef::Gate(j) => ex[j - 1] += if t.inverted { -1 } else { 1 },
                m => {
                    let d = diag_of(collection.get(m));
                    for i in 0..n {
                        kn[i] *= if t.inverted { 1.0 / d[i] } else { d[i] };
                    }
                }
            }
        }
        known.push(kn);
        exps.push(ex);
        targets.push(root_targets[diagram.labels[label]].clone());
    }
    let mut gates: Vec<Option<Vec<C>>> = vec![None; k];
    let mut done = vec![false; k + 1];
    for _ in 0..k {
        let pick = (0..=k).find_map(|l| {
            if done[l] {
                return None;
            }
            let open: Vec<usize> = (0..k).filter(|&j| exps[l][j] != 0 && gates[j].is_none()).collect();
            if open.len() == 1 {
                Some((l, open[0]))
            } else {
                None
            }
        });
        let (l, j) = pick.ok_or_else(|| Error::GateInconsistent(f64::NAN))?;
        let mut rest = known[l].clone();
        for (jj, g) in gates.iter().enumerate() {
            if let Some(g) = g {
                for i in 0..n {
                    rest[i] *= g[i].powi(exps[l][jj]);
                }
            }
        }
        let e = exps[l][j];
        let g: Vec<C> = (0..n).map(|i| (targets[l][i] / rest[i]).powi(e)).collect();
        gates[j] = Some(g);
        done[l] = true;
    }
    let gates: Vec<Vec<C>> = gates.into_iter().map(|g| g.expect("all gates solved")).collect();
    let mut worst: f64 = 0.0;
    for l in (0..=k).filter(|&l| !done[l]) {
        for i in 0..n {
            let mut v = known[l][i];
            for j in 0..k {
                v *= gates[j][i].powi(exps[l][j]);
            }
            worst = worst.max((v - targets[l][i]).norm() / targets[l][i].norm());
        }
    }
    if worst > consistency {
        return Err(Error::GateInconsistent(worst));
    }
    Ok(gates.iter().map(|g| linalg::diag(g)).collect())
}

/// Split an invertible `B` as `C_1 C_2` with both factors having distinct eigenvalues.
pub fn factor_invertible<R: Rng>(b: &CMat, rng: &mut R, tol: &Tolerances) -> Result<(CMat, CMat)> {
    let n = b.nrows();
    if b.determinant().norm() == 0.0 {
        return Err(Error::Singular("B".into()));
    }
    let gap = |m: &CMat| {
        let s = linalg::max_norm(m).max(1e-300);
        linalg::eigen_discriminant(m) / s.powi((n * (n - 1)) as i32)
    };
    for _ in 0..100 {
        // Random upper-triangular matrix with prescribed distinct diagonal,
        // conjugated by a random unitary-ish change of basis.
        let mut t = linalg::random_matrix(rng, n, 0.5);
        for i in 0..n {
            for j in 0..i {
                t[(i, j)] = c(0.0, 0.0);
            }
            t[(i, i)] = C::from_polar(1.0 + 0.5 * i as f64 / n as f64, 2.0 * PI * (i as f64 + rng.gen_range(0.0..0.5)) / n as f64);
        }
        let q = linalg::random_invertible(rng, n);
        let c1 = &q * t * linalg::inverse(&q)?;
        let c2 = linalg::inverse(&c1)? * b;
        if gap(&c1) > tol.factor_margin && gap(&c2) > tol.factor_margin {
            return Ok((c1, c2));
        }
    }
    Err(Error::RetriesExhausted)
}

/// An off-diagonal entry of one matrix of a collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    pub matrix: MatrixRef,
    pub row: usize,
    pub col: usize,
}

/// Conjugate the collection by the unique diagonal `K` (first entry 1) that
/// makes the selected entries equal to 1.
pub fn normalize_diagonal_action(collection: &StokesCollection, positions: &[Position]) -> Result<(StokesCollection, CMat)> {
    let n = collection.n;
    let mut adj: Vec<Vec<(usize, C, bool)>> = vec![Vec::new(); n];
    for p in positions {
        if p.row == p.col || p.row >= n || p.col >= n {
            return Err(Error::InvalidInput(format!("position {p:?} is not off-diagonal")));
        }
        let v = collection.get(p.matrix)[(p.row, p.col)];
        let scale = linalg::max_norm(collection.get(p.matrix));
        if v.norm() <= 1e-12 * scale || v.norm() == 0.0 {
            return Err(Error::ZeroPosition(format!("{}[{},{}]", p.matrix, p.row + 1, p.col + 1)));
        }
        // K_row / K_col = 1 / v.
        adj[p.row].push((p.col, v, true));
        adj[p.col].push((p.row, v, false));
    }
    let mut kd: Vec<Option<C>> = vec![None; n];
    kd[0] = Some(c(1.0, 0.0));
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let ku = kd[u].unwrap();
        for &(w, v, u_is_row) in &adj[u] {
            if kd[w].is_none() {
                kd[w] = Some(if u_is_row { ku * v } else { ku / v });
                queue.push_back(w);
            }
        }
    }
    if kd.iter().any(|x| x.is_none()) || positions.len() != n - 1 {
        return Err(Error::DisconnectedPositions(n));
    }
    let kvec: Vec<C> = kd.into_iter().map(|x| x.unwrap()).collect();
    let k = linalg::diag(&kvec);
    let kinv = linalg::diag(&kvec.iter().map(|z| 1.0 / z).collect::<Vec<_>>());
    let mut out = collection.clone();
    for m in collection.all_refs() {
        *out.get_mut(m) = &k * collection.get(m) * &kinv;
    }
    for p in positions {
        out.get_mut(p.matrix)[(p.row, p.col)] = c(1.0, 0.0);
    }
    Ok((out, k))
}

/// Connected components of the index graph with edges at nonzero off-diagonal entries.
pub fn detect_block_structure(collection: &StokesCollection, rel: f64) -> Vec<Vec<usize>> {
    let n = collection.n;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for m in collection.all_refs() {
        let a = collection.get(m);
        let scale = linalg::max_norm(a);
        for i in 0..n {
            for j in 0..n {
                if i != j && a[(i, j)].norm() > rel * scale {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut root_block = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_block[r] == usize::MAX {
            root_block[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[root_block[r]].push(i);
    }
    blocks
}

/// True iff every entry of `m` is nonzero (relative to its max-norm).
pub fn entrywise_irreducibility_certificate(m: &CMat, rel: f64) -> bool {
    let scale = linalg::max_norm(m);
    scale > 0.0 && m.iter().all(|z| z.norm() > rel * scale)
}

/// Check that diagonal parts of a collection agree with the formal data at
/// every root: used by tests and the acceptance suite.
pub fn loop_spectra_match(
    collection: &StokesCollection,
    formal: &FormalInvariants,
    diagram: &DSDiagram,
    param: &Parameter,
    tol: &Tolerances,
) -> Result<f64> {
    let points = polyfield::roots(param, tol)?;
    let mut worst: f64 = 0.0;
    for label in 0..=diagram.k {
        let root = diagram.labels[label];
        let w = monodromy::loop_word(diagram, LoopTarget::Point(root));
        let m = monodromy::evaluate(&w, collection)?;
        let want = diag_of(&formal_local_monodromy(formal, &points[root])?);
        worst = worst.max(linalg::spectrum_distance(&linalg::eigenvalues(&m), &want));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsdomain;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn scalar_formal_monodromy() {
        let formal = FormalInvariants::new(vec![vec![c(1.0, 0.0)], vec![c(0.0, 0.0)]]).unwrap();
        let pts = polyfield::roots(&Parameter::real(&[-1.0]), &tol()).unwrap();
        let m = formal_local_monodromy(&formal, &pts[1]).unwrap();
        assert!((m[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-14);
        let zero = FormalInvariants::new(vec![vec![c(0.0, 0.0)], vec![c(0.0, 0.0)]]).unwrap();
        assert!((formal_local_monodromy(&zero, &pts[0]).unwrap()[(0, 0)] - 1.0).norm() < 1e-15);
        let mult = polyfield::roots(&Parameter::zero(1), &tol()).unwrap();
        assert!(formal_local_monodromy(&formal, &mult[0]).is_err());
    }

    #[test]
    fn residue_sum_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 1..=3 {
            let formal = FormalInvariants::random(&mut rng, 2, k, 0.5);
            let p = Parameter::new((0..k).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).unwrap();
            let pts = polyfield::roots(&p, &tol()).unwrap();
            for i in 0..2 {
                let s: C = pts.iter().map(|q| formal.at(q.position)[i] * q.nu()).sum();
                assert!((s - formal.lambdas[k][i]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn trivial_gates() {
        let formal = FormalInvariants::new(vec![vec![c(1.0, 0.0), c(0.0, 0.0)]; 3]).unwrap();
        let zero = FormalInvariants { n: 2, lambdas: vec![vec![c(0.0, 0.0); 2]; 3] };
        let _ = formal;
        let p = Parameter::real(&[0.3, -1.2]);
        for d in dsdomain::enumerate_diagrams(2).unwrap() {
            let col = StokesCollection::identity(2, 2, &d.word);
            let g = compute_gates(&col, &zero, &d, &p, &tol()).unwrap();
            for m in g {
                assert!((m - CMat::identity(2, 2)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn single_gate_is_formal_monodromy_or_inverse() {
        let p = Parameter::real(&[-1.0]);
        let formal = FormalInvariants::new(vec![vec![c(0.7, 0.1), c(-0.4, 0.0)], vec![c(0.0, 0.0); 2]]).unwrap();
        let d = DSDiagram::from_word("()").unwrap();
        let col = StokesCollection::normalized_with(1, &formal, "()", &mut ChaCha8Rng::seed_from_u64(1), 0.0);
        let g = compute_gates(&col, &formal, &d, &p, &tol()).unwrap();
        let pts = polyfield::roots(&p, &tol()).unwrap();
        let m0 = formal_local_monodromy(&formal, &pts[0]).unwrap();
        let m1 = formal_local_monodromy(&formal, &pts[1]).unwrap();
        let close = |a: &CMat, b: &CMat| (a - b).norm() < 1e-12;
        let inv = |a: &CMat| linalg::inverse(a).unwrap();
        assert!(close(&g[0], &m0) || close(&g[0], &inv(&m0)) || close(&g[0], &m1) || close(&g[0], &inv(&m1)));
    }

    #[test]
    fn gates_give_formal_spectra_k2() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Parameter::real(&[0.2, -1.1]);
        for d in dsdomain::enumerate_diagrams(2).unwrap() {
            let formal = FormalInvariants::random(&mut rng, 3, 2, 0.4);
            let mut col = StokesCollection::normalized_with(2, &formal, &d.word, &mut rng, 1.0);
            col.gates = compute_gates(&col, &formal, &d, &p, &tol()).unwrap();
            assert!(loop_spectra_match(&col, &formal, &d, &p, &tol()).unwrap() < 1e-8);
        }
    }

    #[test]
    fn factor_identity_and_repeated_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for b in [CMat::identity(3, 3), {
            let mut j = CMat::identity(3, 3);
            j[(0, 1)] = c(1.0, 0.0);
            j
        }] {
            let (c1, c2) = factor_invertible(&b, &mut rng, &tol()).unwrap();
            assert!((&c1 * &c2 - &b).norm() <= 1e-12);
            assert!(linalg::eigen_discriminant(&c1) > 0.0 && linalg::eigen_discriminant(&c2) > 0.0);
        }
    }

    #[test]
    fn diagonal_action_n2() {
        let mut col = StokesCollection::identity(1, 2, "()");
        col.upper[0][(0, 1)] = c(0.5, 2.0);
        let pos = [Position { matrix: MatrixRef::Upper(1), row: 0, col: 1 }];
        let (out, k) = normalize_diagonal_action(&col, &pos).unwrap();
        assert!((k[(1, 1)] - c(0.5, 2.0)).norm() < 1e-15);
        assert!((out.upper[0][(0, 1)] - 1.0).norm() < 1e-15);
        let (_, k2) = normalize_diagonal_action(&out, &pos).unwrap();
        assert!((k2 - CMat::identity(2, 2)).norm() < 1e-14);
        col.upper[0][(0, 1)] = c(0.0, 0.0);
        assert!(matches!(normalize_diagonal_action(&col, &pos), Err(Error::ZeroPosition(_))));
    }

    #[test]
    fn disconnected_positions_rejected() {
        let mut col = StokesCollection::identity(1, 3, "()");
        col.upper[0][(0, 1)] = c(1.0, 0.0);
        col.lower[0][(1, 0)] = c(2.0, 0.0);
        let pos = [
            Position { matrix: MatrixRef::Upper(1), row: 0, col: 1 },
            Position { matrix: MatrixRef::Lower(1), row: 1, col: 0 },
        ];
        assert!(matches!(normalize_diagonal_action(&col, &pos), Err(Error::DisconnectedPositions(3))));
    }

    #[test]
    fn block_examples() {
        let col = StokesCollection::identity(2, 3, "()()");
        assert_eq!(detect_block_structure(&col, 1e-12), vec![vec![0], vec![1], vec![2]]);
        let mut col2 = col.clone();
        col2.upper[1][(0, 1)] = c(0.3, 0.0);
        col2.lower[0][(1, 0)] = c(0.1, 0.0);
        assert_eq!(detect_block_structure(&col2, 1e-12), vec![vec![0, 1], vec![2]]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let formal = FormalInvariants::random(&mut rng, 3, 2, 0.3);
        let dense = StokesCollection::normalized_with(2, &formal, "()()", &mut rng, 1.0);
        assert_eq!(detect_block_structure(&dense, 1e-12).len(), 1);
    }

    #[test]
    fn irreducibility_certificate_examples() {
        assert!(entrywise_irreducibility_certificate(&CMat::from_element(3, 3, c(1.0, 0.0)), 1e-12));
        assert!(!entrywise_irreducibility_certificate(&CMat::identity(3, 3), 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = CMat::identity(3, 3) + linalg::random_matrix(&mut rng, 3, 0.01);
        assert!(entrywise_irreducibility_certificate(&m, 1e-12));
    }

    proptest! {
        #[test]
        fn factor_reassembles(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = linalg::random_invertible(&mut rng, 3);
            let (c1, c2) = factor_invertible(&b, &mut rng, &tol()).unwrap();
            prop_assert!((&c1 * &c2 - &b).norm() <= 1e-12);
        }

        #[test]
        fn gates_invariant_under_diagonal_action(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let formal = FormalInvariants::random(&mut rng, 3, 2, 0.4);
            let d = DSDiagram::from_word(if seed % 2 == 0 { "()()" } else { "(())" }).unwrap();
            let p = Parameter::real(&[0.2, -1.1]);
            let mut col = StokesCollection::normalized_with(2, &formal, &d.word, &mut rng, 1.0);
            col.gates = compute_gates(&col, &formal, &d, &p, &tol()).unwrap();
            let pos = [
                Position { matrix: MatrixRef::Upper(1), row: 0, col: 1 },
                Position { matrix: MatrixRef::Upper(2), row: 1, col: 2 },
            ];
            let (out, _) = normalize_diagonal_action(&col, &pos).unwrap();
            let g2 = compute_gates(&out, &formal, &d, &p, &tol()).unwrap();
            for (a, b) in col.gates.iter().zip(g2.iter()) {
                prop_assert!((a - b).norm() <= 1e-12 * a.norm());
            }
            let (_, k2) = normalize_diagonal_action(&out, &pos).unwrap();
            prop_assert!((k2 - CMat::identity(3, 3)).norm() <= 1e-12);
            prop_assert_eq!(detect_block_structure(&out, 1e-12), detect_block_structure(&col, 1e-12));
        }

        #[test]
        fn blocks_follow_permutation(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut col = StokesCollection::identity(1, 4, "()");
            col.upper[0][(0, 1)] = c(1.0, 0.0);
            col.lower[0][(3, 2)] = c(1.0, 0.0);
            let mut perm: Vec<usize> = (0..4).collect();
            for i in (1..4).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let pm = CMat::from_fn(4, 4, |i, j| if perm[i] == j { c(1.0, 0.0) } else { c(0.0, 0.0) });
            let mut moved = col.clone();
            for m in col.all_refs() {
                *moved.get_mut(m) = &pm * col.get(m) * pm.transpose();
            }
            let mut blocks = detect_block_structure(&moved, 1e-12);
            for b in blocks.iter_mut() {
                for x in b.iter_mut() {
                    *x = perm[*x];
                }
                b.sort_unstable();
            }
            blocks.sort();
            prop_assert_eq!(blocks, vec![vec![0, 1], vec![2, 3]]);
        }
    }
}
