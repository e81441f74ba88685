//! Smooth reconstruction of a norm from samples of `H` on a sphere grid.
//!
//! The samples are fitted by a homogeneous polynomial: `P(ξ) ≈ H(ξ)^{2m}` of
//! degree `2m` in least squares over the grid nodes, and the reconstructed
//! norm is `H(ξ) = P(ξ)^{1/2m}`. This is exactly 1-homogeneous and even, and
//! has analytic first and second derivatives wherever `P > 0`.

use crate::error::{Error, Result};
use crate::sphere::SphereGrid;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct PolyFit {
    pub dim: usize,
    /// Half-degree `m`; the polynomial has total degree `2m`.
    pub half_degree: u32,
    /// Exponent multi-indices, one per monomial.
    exponents: Vec<Vec<u32>>,
    coeffs: Vec<f64>,
    /// Max relative fit residual over the sample nodes.
    pub fit_residual: f64,
}

impl PolyFit {
    pub fn fit(grid: &SphereGrid, values: &[f64], half_degree: u32) -> Result<PolyFit> {
        let dim = grid.dim();
        if values.len() != grid.len() {
            return Err(Error::invalid("sample count does not match grid"));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid("norm samples must be finite and positive"));
        }
        let exponents = monomial_exponents(dim, 2 * half_degree);
        let n_mono = exponents.len();
        if grid.len() < 2 * n_mono {
            return Err(Error::invalid(format!(
                "need at least {} sphere samples for degree {}",
                2 * n_mono,
                2 * half_degree
            )));
        }
        let mut design = DMatrix::zeros(grid.len(), n_mono);
        let mut target = DVector::zeros(grid.len());
        for (row, theta) in grid.iter_nodes().enumerate() {
            for (col, ex) in exponents.iter().enumerate() {
                design[(row, col)] = monomial(theta, ex);
            }
            target[row] = values[row].powi(2 * half_degree as i32);
        }
        let svd = design.clone().svd(true, true);
        let coeffs = svd
            .solve(&target, 1e-12)
            .map_err(|e| Error::Construction(format!("polynomial fit failed: {e}")))?;
        let mut fit = PolyFit {
            dim,
            half_degree,
            exponents,
            coeffs: coeffs.iter().cloned().collect(),
            fit_residual: 0.0,
        };
        let mut max_rel = 0.0f64;
        for (row, theta) in grid.iter_nodes().enumerate() {
            let p = fit.eval(theta);
            if p <= 0.0 {
                return Err(Error::Construction(
                    "fitted polynomial is not positive on the sample grid".into(),
                ));
            }
            let rel = (p - target[row]).abs() / target[row];
            max_rel = max_rel.max(rel);
        }
        fit.fit_residual = max_rel;
        Ok(fit)
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(&self.coeffs)
            .map(|(ex, c)| c * monomial(xi, ex))
            .sum()
    }

    pub fn grad(&self, xi: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (ex, c) in self.exponents.iter().zip(&self.coeffs) {
            for i in 0..self.dim {
                if ex[i] > 0 {
                    g[i] += c * monomial_partial(xi, ex, i);
                }
            }
        }
        g
    }

    pub fn hess(&self, xi: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (ex, c) in self.exponents.iter().zip(&self.coeffs) {
            for i in 0..self.dim {
                if ex[i] == 0 {
                    continue;
                }
                for j in 0..self.dim {
                    let second = if i == j {
                        if ex[i] < 2 {
                            continue;
                        }
                        let mut m = c * (ex[i] * (ex[i] - 1)) as f64;
                        for (k, &e) in ex.iter().enumerate() {
                            let e = if k == i { e - 2 } else { e };
                            m *= xi[k].powi(e as i32);
                        }
                        m
                    } else {
                        if ex[j] == 0 {
                            continue;
                        }
                        let mut m = c * (ex[i] * ex[j]) as f64;
                        for (k, &e) in ex.iter().enumerate() {
                            let e = if k == i || k == j { e - 1 } else { e };
                            m *= xi[k].powi(e as i32);
                        }
                        m
                    };
                    h[(i, j)] += second;
                }
            }
        }
        h
    }
}

fn monomial(xi: &[f64], ex: &[u32]) -> f64 {
    xi.iter()
        .zip(ex)
        .map(|(x, &e)| x.powi(e as i32))
        .product()
}

fn monomial_partial(xi: &[f64], ex: &[u32], i: usize) -> f64 {
    let mut m = ex[i] as f64;
    for (k, &e) in ex.iter().enumerate() {
        let e = if k == i { e - 1 } else { e };
        m *= xi[k].powi(e as i32);
    }
    m
}

/// All exponent multi-indices of total degree `deg` in `dim` variables.
fn monomial_exponents(dim: usize, deg: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; dim];
    fill(&mut out, &mut cur, 0, deg);
    out
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos == cur.len() - 1 {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for e in 0..=remaining {
        cur[pos] = e;
        fill(out, cur, pos + 1, remaining - e);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fits_quadratic_norm_exactly() {
        // target H = sqrt(ξᵀ diag(1,2,3) ξ): H^4 is a degree-4 polynomial
        let grid = SphereGrid::standard(3, 16, 32).unwrap();
        let values: Vec<f64> = grid
            .iter_nodes()
            .map(|t| (t[0] * t[0] + 2.0 * t[1] * t[1] + 3.0 * t[2] * t[2]).sqrt())
            .collect();
        let fit = PolyFit::fit(&grid, &values, 2).unwrap();
        assert!(fit.fit_residual < 1e-10, "residual {}", fit.fit_residual);
        let xi = [0.3, -0.7, 0.5];
        let q: f64 = xi[0] * xi[0] + 2.0 * xi[1] * xi[1] + 3.0 * xi[2] * xi[2];
        assert_relative_eq!(fit.eval(&xi).powf(0.25), q.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn monomial_count() {
        // C(4+2, 2) = 15 monomials of degree 4 in 3 variables
        assert_eq!(monomial_exponents(3, 4).len(), 15);
    }
}
