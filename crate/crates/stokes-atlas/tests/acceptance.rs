//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness; exits non-zero if any criterion fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use std::f64::consts::PI;
use std::time::{Duration, Instant};
use stokes_atlas::dsdomain::{self, chords_cross, DSDiagram};
use stokes_atlas::extraction::{self, RationalSystem};
use stokes_atlas::flow::FlowField;
use stokes_atlas::linalg::{self, c, CMat};
use stokes_atlas::monodromy::{self, LoopTarget, MatrixRef, Presentation};
use stokes_atlas::polyfield::{self, Parameter};
use stokes_atlas::stokesdata::{self, FormalInvariants, Position, StokesCollection};
use stokes_atlas::{Complex64 as C, Tolerances};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn tol() -> Tolerances {
    Tolerances::default()
}

fn random_param<R: Rng>(rng: &mut R, k: usize) -> Parameter {
    Parameter::new((0..k).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).unwrap()
}

fn elapsed_ok(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.2}s", e.as_secs_f64()))
}

/// Diagram enumeration: Catalan counts, distinct, non-crossing, fast.
fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut counts = Vec::new();
    let mut ok = true;
    for k in 1..=5 {
        let ds = dsdomain::enumerate_diagrams(k).unwrap();
        counts.push(ds.len());
        let mut words: Vec<&str> = ds.iter().map(|d| d.word.as_str()).collect();
        words.sort_unstable();
        words.dedup();
        ok &= words.len() == ds.len();
        for d in &ds {
            let ch = d.chords();
            for (i, a) in ch.iter().enumerate() {
                for b in &ch[i + 1..] {
                    ok &= !chords_cross(*a, *b);
                }
            }
        }
    }
    let (fast, time) = elapsed_ok(t, Duration::from_secs(1));
    outcome(ok && fast && counts == [1, 2, 5, 14, 42], format!("counts {counts:?}, {time}"))
}

/// Residue sums vanish; tau from residues matches path quadrature.
fn criterion_2() -> Outcome {
    let t = Instant::now();
    let tol = tol();
    let mut params = Vec::new();
    for k in 1..=3 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + k as u64);
        params.extend((0..1000).map(|_| random_param(&mut rng, k)));
    }
    // (residue-sum ratio, tau error) per parameter; None when refused.
    let results: Vec<(f64, Option<f64>)> = params
        .par_iter()
        .map(|p| {
            let pts = polyfield::roots(p, &tol).unwrap();
            let nu: Vec<C> = pts.iter().map(|x| x.nu()).collect();
            let scale = nu.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let sum = nu.iter().sum::<C>().norm() / scale;
            let Ok(cl) = dsdomain::classify_epsilon(p, &tol.slant_grid, &tol) else { return (sum, None) };
            let field = FlowField::new(p, &tol).unwrap();
            let taus = dsdomain::tau_coordinates_in(&cl.diagram, &field, cl.slant, false).unwrap().taus;
            let mut worst: f64 = 0.0;
            for (j, tau) in taus.iter().enumerate() {
                let err = match dsdomain::gate_loop(&field, cl.slant, j, *tau) {
                    Ok(path) => {
                        let v = polyfield::line_integral(&|x| 1.0 / p.eval(x), &path, tol.quad_rtol);
                        (v - tau).norm() / tau.norm()
                    }
                    Err(_) => f64::INFINITY,
                };
                worst = worst.max(err);
            }
            (sum, Some(worst))
        })
        .collect();
    let max_sum = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let checked: Vec<f64> = results.iter().filter_map(|r| r.1).collect();
    let max_tau = checked.iter().cloned().fold(0.0, f64::max);
    let refused = results.len() - checked.len();
    let (fast, time) = elapsed_ok(t, Duration::from_secs(30));
    outcome(
        max_sum <= 1e-10 && max_tau <= 1e-6 && fast,
        format!("max |sum nu|/max|nu| {max_sum:.1e}, max tau error {max_tau:.1e} over {} ({refused} refused), {time}", checked.len()),
    )
}

/// Rescaling: tau scales by r^{-k}, the diagram is unchanged.
fn criterion_3() -> Outcome {
    let tol = tol();
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let (mut worst, mut mismatched, mut tested) = (0.0f64, 0, 0);
    while tested < 100 {
        let k = rng.gen_range(1..=3);
        let p = random_param(&mut rng, k);
        let r = rng.gen_range(0.2..5.0f64);
        let q = polyfield::rescale(&p, r).unwrap();
        let (Ok(a), Ok(b)) = (dsdomain::classify_epsilon(&p, &tol.slant_grid, &tol), dsdomain::classify_epsilon(&q, &tol.slant_grid, &tol)) else {
            continue;
        };
        tested += 1;
        if a.diagram.word != b.diagram.word {
            mismatched += 1;
            continue;
        }
        let ta = dsdomain::tau_coordinates(&a.diagram, &p, a.slant, &tol).unwrap().taus;
        let tb = dsdomain::tau_coordinates(&b.diagram, &q, b.slant, &tol).unwrap().taus;
        for (x, y) in ta.iter().zip(&tb) {
            let want = x * r.powi(-(k as i32));
            worst = worst.max((y - want).norm() / want.norm());
        }
    }
    outcome(worst <= 1e-9 && mismatched == 0, format!("max relative tau error {worst:.1e}, {mismatched} diagram changes"))
}

const PRODUCTS: [(&str, usize, &str); 6] = [
    ("()()", 0, r"(C_{1, S_s}^L)^{-1}C_{1,\sigma(1), S_s}^G"),
    ("(())", 0, r"(C_{1, S_{s'}}^L)^{-1}C_{1,\sigma(1),S_{s'}}^G(C_{2, S_{s'}}^L)^{-1}C_{2,\sigma(2),S_{s'}}^G"),
    ("()()", 1, r"(C_{1,\sigma(1), S_s}^G)^{-1}(C_{1, S_s}^U)^{-1}(C_{2, S_s}^L)^{-1}C_{2,\sigma(2), S_s}^GC_{1,S_s}^UC_{1,\sigma(1), S_s}^G"),
    ("(())", 1, r"(C_{2,\sigma(2),S_{s'}}^G)^{-1}C_{2, S_{s'}}^L(C_{1,\sigma(1),S_{s'}}^G)^{-1}(C_{1, S_{s'}}^U)^{-1}(C_{2, S_{s'}}^L)^{-1}C_{2,\sigma(2),S_{s'}}^G"),
    ("()()", 2, r"(C_{1,\sigma(1), S_s}^G)^{-1}(C_{1, S_s}^U)^{-1}(C_{2,\sigma(2), S_s}^G)^{-1}(C_{2,S_s}^U)^{-1}"),
    ("(())", 2, r"(C_{2,\sigma(2),S_{s'}}^G)^{-1}(C_{2,S_{s'}}^U)^{-1}"),
];

/// Rewrite a LaTeX product of Stokes matrices into the crate's display form.
fn normalize_latex(s: &str) -> String {
    let token = Regex::new(r"(\()?C_\{(\d)(?:,\s*\\sigma\((\d)\))?,\s*S_(?:s|\{s'\})\}\^([LUG])(\)\^\{-1\})?").unwrap();
    token
        .captures_iter(s)
        .map(|cap| {
            let j = &cap[2];
            let base = match &cap[4] {
                "G" => format!("C^G_{{{j},σ({})}}", &cap[3]),
                x => format!("C_{j}^{x}"),
            };
            if cap.get(1).is_some() && cap.get(5).is_some() {
                format!("({base})^{{-1}}")
            } else {
                base
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Loop words reproduce the six reference products for k = 2.
fn criterion_4() -> Outcome {
    let mut matched = 0;
    let mut first_bad = String::new();
    for (word, root, latex) in PRODUCTS {
        let d = DSDiagram::from_word(word).unwrap();
        let got = monodromy::loop_word(&d, LoopTarget::Point(root)).to_string();
        let want = normalize_latex(latex);
        if got == want {
            matched += 1;
        } else if first_bad.is_empty() {
            first_bad = format!("; {word} x{}: got {got}, want {want}", root + 1);
        }
    }
    outcome(matched == 6, format!("{matched}/6 products match{first_bad}"))
}

/// Loop words with computed gates carry the formal local monodromy.
fn criterion_5() -> Outcome {
    let tol = tol();
    let params = [Parameter::real(&[-1.0]), Parameter::new(vec![c(0.2, 0.1), c(-1.1, 0.3)]).unwrap(), Parameter::new(vec![c(0.1, -0.2), c(-0.9, 0.1), c(0.3, 0.4)]).unwrap()];
    let (mut worst, mut worst_abs) = (0.0f64, 0.0f64);
    let mut cases = 0;
    for (i, p) in params.iter().enumerate() {
        let k = i + 1;
        let points = polyfield::roots(p, &tol).unwrap();
        for d in dsdomain::enumerate_diagrams(k).unwrap() {
            for seed in 0..10 {
                let mut rng = ChaCha8Rng::seed_from_u64(500 + 100 * k as u64 + seed);
                let formal = FormalInvariants::random(&mut rng, 3, k, 0.4);
                let mut col = StokesCollection::normalized_with(k, &formal, &d.word, &mut rng, 1.0);
                col.gates = stokesdata::compute_gates(&col, &formal, &d, p, &tol).unwrap();
                // Eigenvalues reach several hundred in modulus: compare relative to the spectrum.
                let scale = points
                    .iter()
                    .map(|x| linalg::max_norm(&stokesdata::formal_local_monodromy(&formal, x).unwrap()))
                    .fold(1.0, f64::max);
                let err = stokesdata::loop_spectra_match(&col, &formal, &d, p, &tol).unwrap();
                worst = worst.max(err / scale);
                worst_abs = worst_abs.max(err);
                cases += 1;
            }
        }
    }
    outcome(worst <= 1e-8, format!("max relative spectrum distance {worst:.1e} (absolute {worst_abs:.1e}) over {cases} collections"))
}

/// Extracted total words against numerical monodromy on the escape circle.
fn criterion_6() -> Outcome {
    let t = Instant::now();
    let tol = tol();
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let mut systems = Vec::new();
    for (k, count) in [(1usize, 20usize), (2, 5)] {
        let mut found = 0;
        while found < count {
            let p = if k == 1 {
                Parameter::new(vec![-C::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(-PI / 3.0..PI / 3.0))]).unwrap()
            } else {
                random_param(&mut rng, k)
            };
            match dsdomain::classify_epsilon(&p, &tol.slant_grid, &tol) {
                Ok(cl) if cl.bifurcation_distance > 0.05 => {}
                _ => continue,
            }
            let formal = FormalInvariants::random(&mut rng, 2, k, 0.3);
            systems.push(RationalSystem::perturbed(&formal, &p, &mut rng, 0.1).unwrap());
            found += 1;
        }
    }
    let errors: Vec<Result<f64, String>> = systems
        .par_iter()
        .map(|sys| {
            let ex = extraction::extract(sys, &tol).map_err(|e| e.to_string())?;
            let word = monodromy::evaluate(&monodromy::boundary_word(sys.k), &ex.collection).map_err(|e| e.to_string())?;
            let num = extraction::boundary_monodromy(sys, &ex, &tol).map_err(|e| e.to_string())?;
            Ok(linalg::spectrum_distance(&linalg::eigenvalues(&word), &linalg::eigenvalues(&num)))
        })
        .collect();
    let failures: Vec<&String> = errors.iter().filter_map(|e| e.as_ref().err()).collect();
    let worst = errors.iter().filter_map(|e| e.as_ref().ok()).cloned().fold(0.0, f64::max);
    let (fast, time) = elapsed_ok(t, Duration::from_secs(300));
    let mut detail = format!("max eigenvalue error {worst:.1e} over {} systems, {time}", errors.len() - failures.len());
    if let Some(f) = failures.first() {
        detail += &format!("; {} failed, first: {f}", failures.len());
    }
    outcome(failures.is_empty() && worst <= 1e-6 && fast, detail)
}

/// Diagonal normal forms have trivial Stokes data.
fn criterion_7() -> Outcome {
    let tol = tol();
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let params = [Parameter::real(&[-1.0]), Parameter::new(vec![c(-0.6, 0.4)]).unwrap(), Parameter::real(&[0.132, -1.31]), Parameter::new(vec![c(0.3, 0.2), c(-0.5, 0.4)]).unwrap()];
    let mut worst: f64 = 0.0;
    for p in &params {
        let formal = FormalInvariants::random(&mut rng, 2, p.k, 0.3);
        let sys = RationalSystem::normal_form(&formal, p).unwrap();
        let ex = match extraction::extract(&sys, &tol) {
            Ok(ex) => ex,
            Err(e) => return outcome(false, format!("extraction failed at {:?}: {e}", p.coeffs)),
        };
        for m in ex.collection.all_refs() {
            let a = ex.collection.get(m);
            for i in 0..2 {
                for j in 0..2 {
                    if i != j {
                        worst = worst.max(a[(i, j)].norm());
                    }
                }
            }
        }
    }
    outcome(worst <= 1e-8, format!("max off-diagonal {worst:.1e} over {} systems", params.len()))
}

/// Compatibility across a homoclinic transition, and its failure under a perturbation.
fn criterion_8() -> Outcome {
    let tol = tol();
    let p = Parameter::new(vec![c(0.4728217682712743, 0.5461994846880311), c(-0.31388839213167286, 0.2784442641092335)]).unwrap();
    let formal = FormalInvariants::new(vec![vec![c(0.8, 0.1), c(-0.7, 0.0)], vec![c(0.2, -0.1), c(-0.1, 0.15)], vec![c(0.1, 0.0), c(0.0, 0.1)]]).unwrap();
    let a = dsdomain::classify_at(&p, PI / 16.0, &tol).unwrap();
    let b = dsdomain::classify_at(&p, -PI / 16.0, &tol).unwrap();
    if a.diagram.word == b.diagram.word {
        return outcome(false, "slants do not straddle a homoclinic transition");
    }
    let (mut worst_pass, mut least_fail) = (0.0f64, f64::INFINITY);
    let mut ok = true;
    for seed in 0..6 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = RationalSystem::perturbed(&formal, &p, &mut rng, 0.1).unwrap();
        let run = || -> stokes_atlas::Result<(bool, f64, bool, f64)> {
            let ea = extraction::extract_stokes(&sys, &a.diagram, a.slant, &tol)?;
            let eb = extraction::extract_stokes(&sys, &b.diagram, b.slant, &tol)?;
            let pa = Presentation { diagram: ea.diagram, collection: ea.collection };
            let mut pb = Presentation { diagram: eb.diagram, collection: eb.collection };
            let r = monodromy::compatibility_check(&[pa.clone(), pb.clone()], &[(0, 1)], &[], &tol)?;
            *pb.collection.get_mut(MatrixRef::Upper(2)).index_mut((0, 1)) += c(1e-3, 0.0);
            let r2 = monodromy::compatibility_check(&[pa, pb], &[(0, 1)], &[], &tol)?;
            Ok((r.pass, r.pairs[0].residual, r2.pass, r2.pairs[0].residual))
        };
        match run() {
            Ok((pass, res, pass2, res2)) => {
                ok &= pass && res <= 1e-8 && !pass2 && res2 >= 1e-4;
                worst_pass = worst_pass.max(res);
                least_fail = least_fail.min(res2);
            }
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        }
    }
    outcome(
        ok,
        format!("{} vs {}: max residual {worst_pass:.1e} when compatible, min {least_fail:.1e} after 1e-3 perturbation", a.diagram.word, b.diagram.word),
    )
}

/// Lemma checks: factorisation, idempotent normalisation, block detection.
fn criterion_9() -> Outcome {
    let tol = tol();
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let mut factor_err: f64 = 0.0;
    for i in 0..1000 {
        let b = linalg::random_invertible(&mut rng, 2 + i % 3);
        match stokesdata::factor_invertible(&b, &mut rng, &tol) {
            Ok((c1, c2)) => factor_err = factor_err.max((&c1 * &c2 - &b).norm()),
            Err(_) => factor_err = f64::INFINITY,
        }
    }
    let mut idem_err: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=4);
        let formal = FormalInvariants::random(&mut rng, n, 2, 0.3);
        let col = StokesCollection::normalized_with(2, &formal, "(())", &mut rng, 1.0);
        let pos: Vec<Position> = (0..n - 1).map(|i| Position { matrix: MatrixRef::Upper(1 + i % 2), row: i, col: i + 1 }).collect();
        let (once, _) = stokesdata::normalize_diagonal_action(&col, &pos).unwrap();
        let (twice, k2) = stokesdata::normalize_diagonal_action(&once, &pos).unwrap();
        idem_err = idem_err.max((k2 - CMat::identity(n, n)).norm());
        for m in once.all_refs() {
            idem_err = idem_err.max((once.get(m) - twice.get(m)).norm());
        }
    }
    let mut recovered = 0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=7);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut planted: Vec<Vec<usize>> = Vec::new();
        for l in 0..n {
            let b: Vec<usize> = (0..n).filter(|&i| labels[i] == l).collect();
            if !b.is_empty() {
                planted.push(b);
            }
        }
        let k = rng.gen_range(1..=3);
        let mut col = StokesCollection::identity(k, n, &"()".repeat(k));
        for b in &planted {
            for w in b.windows(2) {
                let refs = col.all_refs();
                let m = refs[rng.gen_range(0..refs.len())];
                let (i, j) = if rng.gen_bool(0.5) { (w[0], w[1]) } else { (w[1], w[0]) };
                col.get_mut(m)[(i, j)] = c(rng.gen_range(0.1..2.0), rng.gen_range(-1.0..1.0));
            }
        }
        let mut found = stokesdata::detect_block_structure(&col, 1e-12);
        found.sort();
        planted.sort();
        recovered += (found == planted) as usize;
    }
    outcome(
        factor_err <= 1e-12 && idem_err <= 1e-12 && recovered == 200,
        format!("factor reassembly {factor_err:.1e}, idempotence {idem_err:.1e}, partitions {recovered}/200"),
    )
}

/// Flag transversality along the k = 1 spine and towards the center configuration.
fn criterion_10() -> Outcome {
    let tol = tol();
    let a0 = CMat::from_row_slice(2, 2, &[c(0.8, 0.1), c(0.08, -0.05), c(0.06, 0.03), c(-0.7, 0.0)]);
    let a1 = CMat::from_row_slice(2, 2, &[c(0.2, -0.1), c(0.05, 0.02), c(-0.04, 0.05), c(-0.1, 0.15)]);
    let num = [a0, a1];
    let spine: Vec<Parameter> = (1..=6).map(|i| Parameter::real(&[-0.05 * i as f64])).collect();
    let approach: Vec<Parameter> =
        (0..10).map(|i| Parameter::new(vec![C::from_polar(0.3, 3.0 * PI / 8.0 * (1.0 - i as f64 / 10.0))]).unwrap()).collect();
    let angles = |ps: &[Parameter]| -> Option<Vec<f64>> {
        extraction::transversality_sweep(&num, ps, 0.0, &tol).into_iter().map(|p| p.min_angle).collect()
    };
    let (Some(s), Some(a)) = (angles(&spine), angles(&approach)) else {
        return outcome(false, "sweep point failed");
    };
    let floor = tol.transversality_floor;
    let above = s.iter().chain(&a).all(|&x| x > floor);
    let monotone = a.windows(2).all(|w| w[1] < w[0]);
    let frozen_spine = [1.47638815, 1.47619244, 1.47599871, 1.47580657, 1.47561569, 1.47542578];
    let frozen_end = [1.48693066, 1.47935343];
    let drift = s
        .iter()
        .zip(&frozen_spine)
        .map(|(x, y)| (x - y).abs())
        .chain([(a[0] - frozen_end[0]).abs(), (a[9] - frozen_end[1]).abs()])
        .fold(0.0, f64::max);
    outcome(
        above && monotone && drift <= 1e-5,
        format!(
            "spine min {:.4}, approach {:.4} -> {:.4} (monotone {monotone}), floor {floor:.0e}, drift from frozen {drift:.1e}",
            s.iter().cloned().fold(f64::INFINITY, f64::min),
            a[0],
            a[9]
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("diagram enumeration", criterion_1),
        ("residues and tau quadrature", criterion_2),
        ("rescaling covariance", criterion_3),
        ("reference loop products", criterion_4),
        ("loop spectra with computed gates", criterion_5),
        ("total word vs numerical monodromy", criterion_6),
        ("normal form has trivial Stokes data", criterion_7),
        ("compatibility across a homoclinic transition", criterion_8),
        ("lemma checks", criterion_9),
        ("transversality sweep", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += !o.pass as usize;
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
