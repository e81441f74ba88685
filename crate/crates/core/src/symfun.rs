//! Elementary symmetric functions `S_k` of a matrix, their cofactor
//! derivatives, and a generalized Newton inequality for products `A = BC`
//! of a positive semidefinite `B` with a symmetric `C`:
//!
//! `S_2(A) <= (n-1)/(2n) Tr(A)²`,
//!
//! with equality (at nonzero trace) forcing `A = (Tr A / n) Id` and `B`
//! positive definite.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// A square matrix together with an optional factorization `A = B·C`
/// (`B` symmetric psd, `C` symmetric) kept for equality-case diagnostics.
#[derive(Debug, Clone)]
pub struct MatrixFn {
    pub a: DMatrix<f64>,
    pub factors: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl MatrixFn {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("matrix must be square"));
        }
        Ok(MatrixFn { a, factors: None })
    }

    pub fn from_factors(b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let a = &b * &c;
        let norm_a = a.amax().max(1e-300);
        let recon = (&b * &c - &a).amax();
        if recon > 1e-12 * norm_a {
            return Err(Error::Construction("factor reconstruction mismatch".into()));
        }
        Ok(MatrixFn {
            a,
            factors: Some((b, c)),
        })
    }
}

/// `S_k(A)`: sum of the `k × k` principal minors.
///
/// Combinatorial minor sum up to `n = 8`, characteristic-polynomial
/// coefficients (Faddeev–LeVerrier) beyond.
pub fn s_k(a: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = check_square(a)?;
    if k < 1 || k > n {
        return Err(Error::invalid(format!("k = {k} out of range 1..={n}")));
    }
    if k == 1 {
        return Ok(a.trace());
    }
    if n <= 8 {
        Ok(s_k_minor_sum(a, k))
    } else {
        Ok(char_poly_elementary(a)[k])
    }
}

/// Combinatorial `S_k` by direct enumeration of principal minors.
pub fn s_k_minor_sum(a: &DMatrix<f64>, k: usize) -> f64 {
    let n = a.nrows();
    let mut total = 0.0;
    for subset in combinations(n, k) {
        let mut minor = DMatrix::zeros(k, k);
        for (i, &ri) in subset.iter().enumerate() {
            for (j, &cj) in subset.iter().enumerate() {
                minor[(i, j)] = a[(ri, cj)];
            }
        }
        total += minor.determinant();
    }
    total
}

/// All `S_k` via Faddeev–LeVerrier; index `k` holds `S_k`, index 0 holds 1.
pub fn char_poly_elementary(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut out = vec![0.0; n + 1];
    out[0] = 1.0;
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        if k > 1 {
            m = a * m;
            for i in 0..n {
                m[(i, i)] += c_prev;
            }
        }
        let am = a * &m;
        let c = -am.trace() / k as f64;
        // det(λI - A) = λ^n + c_1 λ^{n-1} + …, c_k = (-1)^k S_k
        out[k] = if k % 2 == 0 { c } else { -c };
        c_prev = c;
    }
    out
}

/// Cofactor matrix `S^k_{ij}(A) = ∂S_k/∂a_{ij}`, satisfying
/// `S_k(A) = (1/k) Σ_{ij} S^k_{ij}(A) a_{ij}`.
pub fn s_k_cofactor(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let n = check_square(a)?;
    if k < 1 || k > n {
        return Err(Error::invalid(format!("k = {k} out of range 1..={n}")));
    }
    // (Σ_{m=0}^{k-1} (-1)^m S_{k-1-m} A^m)ᵀ, the adjugate-expansion rule
    let s: Vec<f64> = if n <= 8 {
        let mut v = vec![1.0];
        for j in 1..k {
            v.push(s_k_minor_sum(a, j));
        }
        v
    } else {
        char_poly_elementary(a)[..k].to_vec()
    };
    let mut acc = DMatrix::<f64>::zeros(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    for m in 0..k {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        acc += &power * (sign * s[k - 1 - m]);
        if m + 1 < k {
            power = a * power;
        }
    }
    Ok(acc.transpose())
}

/// Directional derivative of the determinant:
/// `d/dt det(A + tB)|_{t=0} = Σ S^n_{ij}(A) b_{ij}`.
pub fn det_directional(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let n = check_square(a)?;
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::invalid("matrices must have the same size"));
    }
    let cof = s_k_cofactor(a, n)?;
    Ok(cof.component_mul(b).sum())
}

/// `S_2(A) = ½(Tr(A)² − Tr(A²))`; the O(n²) hot path.
pub fn s2_fast(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let tr = a.trace();
    let mut tr_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            tr_sq += a[(i, j)] * a[(j, i)];
        }
    }
    0.5 * (tr * tr - tr_sq)
}

/// Outcome of a single generalized-Newton-inequality check.
#[derive(Debug, Clone, Serialize)]
pub struct NewtonReport {
    pub n: usize,
    /// `S_2(BC)`
    pub lhs: f64,
    /// `(n-1)/(2n) Tr(BC)²`
    pub bound: f64,
    /// `bound - lhs`; the inequality demands this be >= -1e-10·max(1, bound)
    pub slack: f64,
    pub violated: bool,
    pub equality: bool,
    /// `max_ij |A - (Tr A / n) Id|` when the equality flag fires
    pub rigidity_residual: Option<f64>,
    /// smallest eigenvalue of `B`
    pub b_lambda_min: f64,
}

pub const NEWTON_SLACK_TOL: f64 = 1e-10;

/// Check `S_2(BC) <= (n-1)/(2n) Tr(BC)²` for `B` symmetric psd, `C` symmetric.
pub fn newton_check(b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<NewtonReport> {
    let n = check_square(b)?;
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::invalid("B and C must have the same size"));
    }
    let b_scale = b.amax().max(1e-300);
    let c_scale = c.amax().max(1e-300);
    if (b - b.transpose()).amax() > 1e-10 * b_scale {
        return Err(Error::invalid("B must be symmetric"));
    }
    if (c - c.transpose()).amax() > 1e-10 * c_scale {
        return Err(Error::invalid("C must be symmetric"));
    }
    let eig = b.clone().symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    let lmax = eig.eigenvalues.amax();
    if lmin < -1e-12 * lmax.max(1.0) {
        return Err(Error::invalid(format!(
            "B must be positive semidefinite (λ_min = {lmin:e})"
        )));
    }
    let mf = MatrixFn::from_factors(b.clone(), c.clone())?;
    let a = &mf.a;
    let lhs = s2_fast(a);
    let tr = a.trace();
    let bound = (n as f64 - 1.0) / (2.0 * n as f64) * tr * tr;
    let slack = bound - lhs;
    let tol = NEWTON_SLACK_TOL * bound.abs().max(1.0);
    let violated = slack < -tol;
    let equality = slack.abs() <= tol;
    let rigidity_residual = if equality {
        let mean = tr / n as f64;
        let mut res = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { mean } else { 0.0 };
                res = res.max((a[(i, j)] - target).abs());
            }
        }
        Some(res)
    } else {
        None
    };
    Ok(NewtonReport {
        n,
        lhs,
        bound,
        slack,
        violated,
        equality,
        rigidity_residual,
        b_lambda_min: lmin,
    })
}

/// Summary of a randomized Newton-inequality sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub seed: u64,
    pub trials_per_dim: usize,
    pub dims: Vec<usize>,
    pub checks: usize,
    pub violations: usize,
    pub worst_slack: f64,
    pub equality_hits: usize,
}

/// Seeded random sweep of [`newton_check`] over `B = GᵀG`, `C = ½(M + Mᵀ)`.
pub fn newton_sweep(seed: u64, trials_per_dim: usize, dims: &[usize]) -> Result<SweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SweepReport {
        seed,
        trials_per_dim,
        dims: dims.to_vec(),
        checks: 0,
        violations: 0,
        worst_slack: f64::INFINITY,
        equality_hits: 0,
    };
    for &n in dims {
        for _ in 0..trials_per_dim {
            let g = random_matrix(&mut rng, n);
            let b = g.transpose() * &g;
            let m = random_matrix(&mut rng, n);
            let c = (&m + m.transpose()) * 0.5;
            let rep = newton_check(&b, &c)?;
            report.checks += 1;
            report.worst_slack = report.worst_slack.min(rep.slack);
            if rep.violated {
                report.violations += 1;
            }
            if rep.equality {
                report.equality_hits += 1;
            }
        }
    }
    Ok(report)
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

fn check_square(a: &DMatrix<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid("matrix must be square"));
    }
    Ok(a.nrows())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // advance lexicographically
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values))
    }

    fn random(seed: u64, n: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_matrix(&mut rng, n)
    }

    #[test]
    fn s_k_identity_and_diagonal() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(s_k(&id, 2).unwrap(), 3.0);
        let d = diag(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(s_k(&d, 2).unwrap(), 11.0);
        assert_relative_eq!(s_k(&d, 1).unwrap(), 6.0);
        assert_relative_eq!(s_k(&d, 3).unwrap(), 6.0);
    }

    #[test]
    fn s_k_out_of_range() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!(s_k(&id, 0).is_err());
        assert!(s_k(&id, 4).is_err());
    }

    #[test]
    fn minor_sum_agrees_with_char_poly() {
        let a = random(42, 5);
        for k in 1..=5 {
            let combinatorial = s_k_minor_sum(&a, k);
            let poly = char_poly_elementary(&a)[k];
            assert_relative_eq!(combinatorial, poly, max_relative = 1e-10);
        }
    }

    #[test]
    fn cofactor_diagonal_case() {
        let d = diag(&[1.0, 2.0, 3.0]);
        let cof = s_k_cofactor(&d, 2).unwrap();
        let expect = diag(&[5.0, 4.0, 3.0]);
        assert_relative_eq!(cof, expect, max_relative = 1e-14);
    }

    #[test]
    fn cofactor_k2_explicit_form() {
        // off-diagonal -a_ji, diagonal Σ_{k≠i} a_kk
        let a = random(7, 4);
        let cof = s_k_cofactor(&a, 2).unwrap();
        let tr = a.trace();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { tr - a[(i, i)] } else { -a[(j, i)] };
                assert_relative_eq!(cof[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cofactor_top_order_is_adjugate() {
        let a = random(3, 4) + DMatrix::identity(4, 4) * 2.0;
        let det = a.determinant();
        let inv = a.clone().try_inverse().unwrap();
        let cof = s_k_cofactor(&a, 4).unwrap();
        let expect = inv.transpose() * det;
        assert_relative_eq!(cof, expect, max_relative = 1e-10);
    }

    #[test]
    fn cofactor_matches_finite_differences() {
        let a = random(11, 4);
        for k in 1..=4 {
            let cof = s_k_cofactor(&a, k).unwrap();
            let step = 1e-6;
            for i in 0..4 {
                for j in 0..4 {
                    let mut ap = a.clone();
                    let mut am = a.clone();
                    ap[(i, j)] += step;
                    am[(i, j)] -= step;
                    let fd = (s_k(&ap, k).unwrap() - s_k(&am, k).unwrap()) / (2.0 * step);
                    assert!(
                        (fd - cof[(i, j)]).abs() < 1e-6,
                        "k={k} ({i},{j}): fd {fd} vs {}",
                        cof[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn cofactor_euler_identity() {
        let a = random(13, 6);
        for k in 1..=6 {
            let cof = s_k_cofactor(&a, k).unwrap();
            let contraction = cof.component_mul(&a).sum() / k as f64;
            let direct = s_k(&a, k).unwrap();
            assert_relative_eq!(contraction, direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn det_directional_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        let b = random(5, 3);
        assert_relative_eq!(det_directional(&id, &b).unwrap(), b.trace(), max_relative = 1e-13);

        let a = diag(&[2.0, 3.0]);
        let id2 = DMatrix::<f64>::identity(2, 2);
        assert_relative_eq!(det_directional(&a, &id2).unwrap(), 5.0);
    }

    #[test]
    fn det_directional_matches_finite_differences() {
        let a = random(17, 5);
        let b = random(19, 5);
        let dd = det_directional(&a, &b).unwrap();
        let step = 1e-6;
        let fd = ((&a + &b * step).determinant() - (&a - &b * step).determinant()) / (2.0 * step);
        assert!((dd - fd).abs() < 1e-7, "{dd} vs {fd}");
    }

    #[test]
    fn s2_fast_agrees_with_minor_sum() {
        let a = random(23, 6);
        assert_relative_eq!(s2_fast(&a), s_k_minor_sum(&a, 2), max_relative = 1e-12);
    }

    #[test]
    fn similarity_invariance() {
        let a = random(29, 4);
        let p = random(31, 4) + DMatrix::identity(4, 4) * 3.0;
        let p_inv = p.clone().try_inverse().unwrap();
        let sim = &p_inv * &a * &p;
        for k in 1..=4 {
            assert_relative_eq!(
                s_k(&a, k).unwrap(),
                s_k(&sim, k).unwrap(),
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn homogeneity_in_scaling() {
        let a = random(37, 5);
        let t = 1.7;
        let at = &a * t;
        for k in 1..=5 {
            assert_relative_eq!(
                s_k(&at, k).unwrap(),
                t.powi(k as i32) * s_k(&a, k).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn newton_equality_identity_case() {
        let id = DMatrix::<f64>::identity(3, 3);
        let rep = newton_check(&id, &id).unwrap();
        assert_relative_eq!(rep.lhs, 3.0);
        assert_relative_eq!(rep.bound, 3.0);
        assert!(rep.equality);
        assert!(rep.rigidity_residual.unwrap() <= 1e-12);
        assert!(rep.b_lambda_min > 0.0);
    }

    #[test]
    fn newton_strict_case() {
        let b = DMatrix::<f64>::identity(2, 2);
        let c = diag(&[1.0, 2.0]);
        let rep = newton_check(&b, &c).unwrap();
        assert_relative_eq!(rep.lhs, 2.0);
        assert_relative_eq!(rep.bound, 2.25);
        assert!(!rep.violated && !rep.equality);
    }

    #[test]
    fn newton_rejects_bad_inputs() {
        let not_sym = random(41, 3);
        let id = DMatrix::<f64>::identity(3, 3);
        assert!(newton_check(&not_sym, &id).is_err());
        let neg = diag(&[1.0, -1.0, 1.0]);
        assert!(newton_check(&neg, &id).is_err());
    }

    #[test]
    fn newton_sweep_small() {
        let rep = newton_sweep(7, 200, &[2, 3, 4, 5, 6]).unwrap();
        assert_eq!(rep.violations, 0, "worst slack {}", rep.worst_slack);
        assert_eq!(rep.checks, 1000);
    }

    #[test]
    fn matrix_fn_reconstruction_invariant() {
        let g = random(43, 4);
        let b = g.transpose() * &g;
        let m = random(47, 4);
        let c = (&m + m.transpose()) * 0.5;
        let mf = MatrixFn::from_factors(b.clone(), c.clone()).unwrap();
        assert_relative_eq!(mf.a, b * c, max_relative = 1e-14);
    }
}
