//! Small complex linear-algebra helpers on top of `nalgebra`.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rand::Rng;

pub type CMat = DMatrix<C>;
pub type CVec = DVector<C>;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Largest entry modulus.
pub fn max_norm(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{}x{} matrix", m.nrows(), m.ncols())))
}

pub fn diag(entries: &[C]) -> CMat {
    CMat::from_diagonal(&CVec::from_column_slice(entries))
}

/// Eigenvalues of a square complex matrix via the Schur form.
pub fn eigenvalues(m: &CMat) -> Vec<C> {
    let n = m.nrows();
    if n == 1 {
        return vec![m[(0, 0)]];
    }
    if n == 2 {
        // Closed form is more accurate than iterating for 2x2.
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (tr * tr - 4.0 * det).sqrt();
        return vec![(tr + disc) / 2.0, (tr - disc) / 2.0];
    }
    let schur = m.clone().schur();
    let (_, t) = schur.unpack();
    (0..n).map(|i| t[(i, i)]).collect()
}

/// Eigenpairs of a matrix with distinct eigenvalues (Schur form plus back
/// substitution); eigenvectors have unit norm.
pub fn eigenpairs(m: &CMat) -> Vec<(C, CVec)> {
    let n = m.nrows();
    let (q, t) = m.clone().schur().unpack();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lam = t[(i, i)];
        let mut z = CVec::zeros(n);
        z[i] = c(1.0, 0.0);
        for j in (0..i).rev() {
            let mut s = c(0.0, 0.0);
            for l in j + 1..=i {
                s += t[(j, l)] * z[l];
            }
            let mut d = t[(j, j)] - lam;
            if d.norm() < 1e-300 {
                d = c(1e-300, 0.0);
            }
            z[j] = -s / d;
        }
        let v = &q * z;
        let nv = v.norm();
        out.push((lam, v.unscale(nv)));
    }
    out
}

/// Maximal distance between two spectra under the best matching.
pub fn spectrum_distance(a: &[C], b: &[C]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut idx, 0, &mut |p| {
        let d = (0..n).map(|i| (a[i] - b[p[i]]).norm()).fold(0.0, f64::max);
        best = best.min(d);
    });
    best
}

fn permute(v: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
    if i == v.len() {
        f(v);
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permute(v, i + 1, f);
        v.swap(i, j);
    }
}

/// Orthonormal basis of the right nullspace of `m`, using singular values
/// below `rel * sigma_max`.
pub fn nullspace(m: &CMat, rel: f64) -> Vec<CVec> {
    let (r, cols) = m.shape();
    let padded = if r < cols {
        let mut p = CMat::zeros(cols, cols);
        p.view_mut((0, 0), (r, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let floor = if smax == 0.0 { 0.0 } else { rel * smax };
    let mut out = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= floor {
            out.push(vt.row(i).adjoint().into_owned());
        }
    }
    out
}

/// Smallest singular value.
pub fn min_singular(m: &CMat) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Orthonormalize the columns of `m` (thin QR).
pub fn orthonormalize(m: &CMat) -> CMat {
    m.clone().qr().q()
}

/// Random matrix with entries uniform in the unit square.
pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, scale: f64) -> CMat {
    CMat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
}

/// Random well-conditioned invertible matrix (identity plus bounded noise).
pub fn random_invertible<R: Rng>(rng: &mut R, n: usize) -> CMat {
    loop {
        let m = CMat::identity(n, n) + random_matrix(rng, n, 0.5);
        if min_singular(&m) > 0.2 {
            return m;
        }
    }
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Discriminant of the characteristic polynomial, up to sign: the product of
/// squared eigenvalue differences.
pub fn eigen_discriminant(m: &CMat) -> f64 {
    let ev = eigenvalues(m);
    let mut d = 1.0;
    for i in 0..ev.len() {
        for j in i + 1..ev.len() {
            d *= (ev[i] - ev[j]).norm_sqr();
        }
    }
    d
}

/// Scale `g` so that its largest-modulus entry equals 1.
pub fn scale_fix(g: &CMat) -> CMat {
    let mut best = c(0.0, 0.0);
    for z in g.iter() {
        if z.norm() > best.norm() * (1.0 + 1e-12) {
            best = *z;
        }
    }
    if best.norm() == 0.0 {
        g.clone()
    } else {
        g / best
    }
}

/// Serde support: matrices as row-major arrays of `[re, im]` pairs.
pub mod serde_mat {
    use super::{CMat, C};
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &CMat) -> Vec<Vec<C>> {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<C>]) -> Result<CMat, String> {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        if rows.iter().any(|x| x.len() != c) {
            return Err("ragged matrix rows".into());
        }
        Ok(CMat::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let rows = Vec::<Vec<C>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Serde support for lists of matrices.
pub mod serde_mats {
    use super::{serde_mat, CMat, C};
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(serde_mat::to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        let all = Vec::<Vec<Vec<C>>>::deserialize(d)?;
        all.iter().map(|r| serde_mat::from_rows(r).map_err(D::Error::custom)).collect()
    }
}

/// Serde support for optional matrices.
pub mod serde_opt_mat {
    use super::{serde_mat, CMat, C};
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<CMat>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(serde_mat::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<CMat>, D::Error> {
        match Option::<Vec<Vec<C>>>::deserialize(d)? {
            Some(r) => serde_mat::from_rows(&r).map(Some).map_err(D::Error::custom),
            None => Ok(None),
        }
    }
}
