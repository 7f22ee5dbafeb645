//! Shared helpers for the integration suites: plain dense reference
//! implementations that the library results are checked against. Everything
//! here is written from scratch on top of `Mat` storage so that agreement
//! with the library is evidence, not circularity.
#![allow(dead_code)]

use flexikry::dense::Mat;
use flexikry::linops::{LinearOperator, SpdOperator};
use flexikry::problems::{ProblemMetadata, TestProblem};
use flexikry::transforms::Transform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat64 = Mat<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat64 {
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m.set(i, j, rng.sample::<f64, _>(StandardNormal));
        }
    }
    m
}

/// Random square matrix shifted to be comfortably nonsingular.
pub fn random_shifted_mat(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat64 {
    let mut m = random_mat(rng, n, n);
    for i in 0..n {
        m.set(i, i, m.get(i, i) + shift);
    }
    m
}

/// Random SPD matrix B Bᵀ + shift·I.
pub fn random_spd_mat(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat64 {
    let b = random_mat(rng, n, n);
    let mut m = b.matmul(&b.transpose());
    for i in 0..n {
        m.set(i, i, m.get(i, i) + shift);
    }
    m
}

pub fn mat_from_cols(rows: usize, cols: &[Vec<f64>]) -> Mat64 {
    Mat::from_columns(rows, cols)
}

/// Materializes a linear operator by applying it to unit vectors.
pub fn materialize(op: &dyn LinearOperator<f64>) -> Mat64 {
    let (m, n) = (op.rows(), op.cols());
    let mut out = Mat::zeros(m, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply(&e);
        for i in 0..m {
            out.set(i, j, col[i]);
        }
        e[j] = 0.0;
    }
    out
}

pub fn materialize_spd(op: &dyn SpdOperator<f64>) -> Mat64 {
    let n = op.dim();
    let mut out = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply(&e);
        for i in 0..n {
            out.set(i, j, col[i]);
        }
        e[j] = 0.0;
    }
    out
}

/// Materializes the forward map z = Ψ x of a transform.
pub fn materialize_transform(t: &dyn Transform<f64>) -> Mat64 {
    let n = t.dim();
    let mut out = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = t.forward(&e);
        for i in 0..n {
            out.set(i, j, col[i]);
        }
        e[j] = 0.0;
    }
    out
}

pub fn frob_diff(a: &Mat64, b: &Mat64) -> f64 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let mut acc = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let d = a.get(i, j) - b.get(i, j);
            acc += d * d;
        }
    }
    acc.sqrt()
}

/// ‖a − b‖_F / ‖a‖_F.
pub fn rel_frob_diff(a: &Mat64, b: &Mat64) -> f64 {
    frob_diff(a, b) / a.frob_norm().max(f64::MIN_POSITIVE)
}

/// ‖Gᵀ M G − I‖_F for a set of columns G and metric M (identity if None).
pub fn gram_identity_defect(cols: &[Vec<f64>], metric: Option<&Mat64>) -> f64 {
    let k = cols.len();
    let mut acc = 0.0;
    for i in 0..k {
        let mi = match metric {
            Some(m) => m.matvec(&cols[i]),
            None => cols[i].clone(),
        };
        for j in 0..k {
            let dot: f64 = mi.iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            acc += (dot - target) * (dot - target);
        }
    }
    acc.sqrt()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(x: &[f64], x_ref: &[f64]) -> f64 {
    assert_eq!(x.len(), x_ref.len());
    let mut num = 0.0;
    for (a, b) in x.iter().zip(x_ref) {
        num += (a - b) * (a - b);
    }
    num.sqrt() / norm2(x_ref).max(f64::MIN_POSITIVE)
}

/// Least squares min ‖A x − b‖₂ by Householder QR, written independently of
/// the library's solver. A must have full column rank.
pub fn hh_lstsq(a: &Mat64, b: &[f64]) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    assert!(m >= n, "need at least as many rows as columns");
    assert_eq!(b.len(), m);
    let mut r: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect();
    let mut rhs = b.to_vec();
    for j in 0..n {
        let mut alpha = 0.0;
        for i in j..m {
            alpha += r[i][j] * r[i][j];
        }
        let mut alpha = alpha.sqrt();
        if alpha == 0.0 {
            panic!("rank deficient column {j} in reference least squares");
        }
        if r[j][j] > 0.0 {
            alpha = -alpha;
        }
        let mut v: Vec<f64> = (j..m).map(|i| r[i][j]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for col in j..n {
                let mut dot = 0.0;
                for (t, vi) in v.iter().enumerate() {
                    dot += vi * r[j + t][col];
                }
                let scale = 2.0 * dot / vnorm2;
                for (t, vi) in v.iter().enumerate() {
                    r[j + t][col] -= scale * vi;
                }
            }
            let mut dot = 0.0;
            for (t, vi) in v.iter().enumerate() {
                dot += vi * rhs[j + t];
            }
            let scale = 2.0 * dot / vnorm2;
            for (t, vi) in v.iter().enumerate() {
                rhs[j + t] -= scale * vi;
            }
        }
    }
    // Back substitution on the upper-triangular factor.
    let mut x = vec![0.0; n];
    for j in (0..n).rev() {
        let mut s = rhs[j];
        for l in j + 1..n {
            s -= r[j][l] * x[l];
        }
        x[j] = s / r[j][j];
    }
    x
}

/// Solves min ‖A x − b‖² + λ ‖L x‖² through the stacked system [A; √λ L].
pub fn tikhonov_dense(a: &Mat64, b: &[f64], lambda: f64, l: &Mat64) -> Vec<f64> {
    assert_eq!(a.cols(), l.cols());
    let (m, n) = (a.rows(), a.cols());
    let p = l.rows();
    let mut stacked = Mat::zeros(m + p, n);
    for i in 0..m {
        for j in 0..n {
            stacked.set(i, j, a.get(i, j));
        }
    }
    let sq = lambda.sqrt();
    for i in 0..p {
        for j in 0..n {
            stacked.set(m + i, j, sq * l.get(i, j));
        }
    }
    let mut rhs = vec![0.0; m + p];
    rhs[..m].copy_from_slice(b);
    hh_lstsq(&stacked, &rhs)
}

/// Plain Arnoldi with double modified Gram-Schmidt, no preconditioning.
/// Returns the k+1 basis vectors and the (k+1) x k Hessenberg matrix.
pub fn plain_arnoldi(a: &Mat64, b: &[f64], k: usize) -> (Vec<Vec<f64>>, Mat64) {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    let beta = norm2(b);
    let mut v: Vec<Vec<f64>> = vec![b.iter().map(|x| x / beta).collect()];
    let mut h = Mat::zeros(k + 1, k);
    for j in 0..k {
        let mut w = a.matvec(&v[j]);
        for _pass in 0..2 {
            for (i, vi) in v.iter().enumerate() {
                let dot: f64 = w.iter().zip(vi).map(|(a, b)| a * b).sum();
                h.set(i, j, h.get(i, j) + dot);
                for (wt, vt) in w.iter_mut().zip(vi) {
                    *wt -= dot * vt;
                }
            }
        }
        let nw = norm2(&w);
        h.set(j + 1, j, nw);
        assert!(nw > 1e-12, "reference Arnoldi broke down at step {j}");
        v.push(w.into_iter().map(|x| x / nw).collect());
    }
    (v, h)
}

/// Plain Golub-Kahan bidiagonalization with double reorthogonalization.
/// Returns (U with k+1 columns, V with k columns, B of size (k+1) x k).
pub fn plain_golub_kahan(a: &Mat64, b: &[f64], k: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Mat64) {
    let beta = norm2(b);
    let mut u: Vec<Vec<f64>> = vec![b.iter().map(|x| x / beta).collect()];
    let mut v: Vec<Vec<f64>> = Vec::new();
    let mut bm = Mat::zeros(k + 1, k);
    for j in 0..k {
        let mut g = a.t_matvec(&u[j]);
        for _pass in 0..2 {
            for vi in v.iter() {
                let dot: f64 = g.iter().zip(vi).map(|(a, b)| a * b).sum();
                for (gt, vt) in g.iter_mut().zip(vi) {
                    *gt -= dot * vt;
                }
            }
        }
        let ng = norm2(&g);
        assert!(ng > 1e-12, "reference bidiagonalization broke down at step {j}");
        v.push(g.into_iter().map(|x| x / ng).collect());
        let mut w = a.matvec(&v[j]);
        for _pass in 0..2 {
            for ui in u.iter() {
                let dot: f64 = w.iter().zip(ui).map(|(a, b)| a * b).sum();
                for (wt, ut) in w.iter_mut().zip(ui) {
                    *wt -= dot * ut;
                }
            }
        }
        let nw = norm2(&w);
        assert!(nw > 1e-12, "reference bidiagonalization broke down at step {j}");
        u.push(w.into_iter().map(|x| x / nw).collect());
        // Recompute the projected entries directly for a full (not strictly
        // bidiagonal) projection; reorthogonalization spreads tiny mass off
        // the two diagonals and the projected solve should see it.
        let av = a.matvec(&v[j]);
        for (i, ui) in u.iter().enumerate() {
            let dot: f64 = av.iter().zip(ui).map(|(a, b)| a * b).sum();
            bm.set(i, j, dot);
        }
    }
    (u, v, bm)
}

/// Reference hybrid method: project with plain Arnoldi, then solve the
/// regularized projected problem by stacked least squares at every iterate.
/// Returns x_1..x_k.
pub fn plain_hybrid_gmres(a: &Mat64, b: &[f64], lambda: f64, k: usize) -> Vec<Vec<f64>> {
    let (v, h) = plain_arnoldi(a, b, k);
    let beta = norm2(b);
    let mut out = Vec::with_capacity(k);
    for j in 1..=k {
        let mut hj = Mat::zeros(j + 1, j);
        for r in 0..j + 1 {
            for c in 0..j {
                hj.set(r, c, h.get(r, c));
            }
        }
        let y = solve_projected_reference(&hj, beta, lambda);
        let n = a.rows();
        let mut x = vec![0.0; n];
        for (c, yc) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[c]) {
                *xi += yc * vi;
            }
        }
        out.push(x);
    }
    out
}

/// Reference hybrid method on the Golub-Kahan projection.
pub fn plain_hybrid_lsqr(a: &Mat64, b: &[f64], lambda: f64, k: usize) -> Vec<Vec<f64>> {
    let (_, v, bm) = plain_golub_kahan(a, b, k);
    let beta = norm2(b);
    let mut out = Vec::with_capacity(k);
    for j in 1..=k {
        let mut mj = Mat::zeros(j + 1, j);
        for r in 0..j + 1 {
            for c in 0..j {
                mj.set(r, c, bm.get(r, c));
            }
        }
        let y = solve_projected_reference(&mj, beta, lambda);
        let n = a.cols();
        let mut x = vec![0.0; n];
        for (c, yc) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[c]) {
                *xi += yc * vi;
            }
        }
        out.push(x);
    }
    out
}

/// min ‖H y − β e₁‖² + λ ‖y‖² by stacked Householder least squares.
pub fn solve_projected_reference(h: &Mat64, beta: f64, lambda: f64) -> Vec<f64> {
    let (m, k) = (h.rows(), h.cols());
    if lambda > 0.0 {
        let mut stacked = Mat::zeros(m + k, k);
        for i in 0..m {
            for j in 0..k {
                stacked.set(i, j, h.get(i, j));
            }
        }
        let sq = lambda.sqrt();
        for j in 0..k {
            stacked.set(m + j, j, sq);
        }
        let mut rhs = vec![0.0; m + k];
        rhs[0] = beta;
        hh_lstsq(&stacked, &rhs)
    } else {
        let mut rhs = vec![0.0; m];
        rhs[0] = beta;
        hh_lstsq(h, &rhs)
    }
}

/// Wraps a dense matrix and a right-hand side as a TestProblem for the
/// solver driver; noise_norm is a placeholder for fixed-λ runs.
pub fn dense_problem(
    a: Mat64,
    b: Vec<f64>,
    groups: flexikry::groups::GroupStructure,
) -> TestProblem<f64> {
    let n = a.cols();
    TestProblem {
        a: Box::new(flexikry::linops::DenseOp::new(a)),
        psi: Box::new(flexikry::transforms::IdentityTransform::new(n)),
        x_true: vec![0.0; n],
        b,
        noise_norm: 1.0,
        groups,
        priors: None,
        metadata: ProblemMetadata {
            kind: "dense-test".into(),
            dims: vec![n],
            seed: 0,
            noise_level: 0.0,
            extra: Vec::new(),
        },
    }
}
