//! Quadrature grids on the unit sphere `S^{N-1}`.
//!
//! For `N = 3` the grid is a product rule: Gauss–Legendre in `t = cos(polar)`
//! times a periodic trapezoid rule in azimuth, which integrates smooth
//! integrands spectrally and carries exact total weight `4π`. For `N = 2` the
//! grid is the periodic trapezoid rule on the circle. For `N > 3` a recursive
//! product of Gauss–Legendre rules in the polar angles is used; this is only
//! intended for analytic integrands.
//!
//! Every node carries a deterministic orthonormal tangent frame
//! `(e_1, …, e_{N-1})` with `e_N = θ`, needed to restrict Hessians of support
//! functions to the tangent space.

use crate::error::{Error, Result};

/// Quadrature nodes, weights and tangent frames on `S^{N-1}`.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    dim: usize,
    /// Node coordinates, flattened with stride `dim`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Tangent frames, `(dim-1) * dim` values per node (rows are frame vectors).
    frames: Vec<f64>,
    /// Orders used to build the grid (polar, azimuth); informational.
    pub orders: (usize, usize),
}

impl SphereGrid {
    /// Product rule with `n_pol` polar and `n_az` azimuthal points (`N = 3`).
    pub fn standard(dim: usize, n_pol: usize, n_az: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::UnsupportedDimension {
                dim,
                reason: "sphere grids need N >= 2".into(),
            });
        }
        if n_az < 4 || (dim > 2 && n_pol < 2) {
            return Err(Error::invalid("sphere grid orders too small"));
        }
        let (nodes, weights) = build_product_nodes(dim, n_pol, n_az);
        let mut grid = SphereGrid {
            dim,
            nodes,
            weights,
            frames: Vec::new(),
            orders: (n_pol, n_az),
        };
        grid.frames = grid
            .iter_nodes()
            .flat_map(|theta| tangent_frame(theta))
            .collect();
        Ok(grid)
    }

    /// Default resolution used by the geometry module for `N = 3`.
    pub fn default_for(dim: usize) -> Result<Self> {
        match dim {
            2 => SphereGrid::standard(2, 1, 256),
            3 => SphereGrid::standard(3, 64, 128),
            _ => SphereGrid::standard(dim, 24, 48),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// Tangent frame at node `k`: `dim - 1` orthonormal rows, each of length `dim`.
    pub fn frame(&self, k: usize) -> &[f64] {
        let step = (self.dim - 1) * self.dim;
        &self.frames[k * step..(k + 1) * step]
    }

    pub fn iter_nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim)
    }

    /// `Σ_k w_k f(θ_k)`.
    pub fn integrate<F: FnMut(usize, &[f64]) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.len() {
            acc += self.weights[k] * f(k, self.node(k));
        }
        acc
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Surface area of the unit sphere `S^{N-1}`: `2 π^{N/2} / Γ(N/2)`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * std::f64::consts::PI.powf(n / 2.0) / gamma_half_integer(dim)
}

/// `Γ(N/2)` for integer `N >= 1`.
fn gamma_half_integer(n: usize) -> f64 {
    if n % 2 == 0 {
        // Γ(k) = (k-1)!
        let k = n / 2;
        (1..k).map(|i| i as f64).product::<f64>().max(1.0)
    } else {
        // Γ(k + 1/2) = (2k)! / (4^k k!) √π
        let k = n / 2;
        let mut g = std::f64::consts::PI.sqrt();
        for i in 0..k {
            g *= i as f64 + 0.5;
        }
        g
    }
}

fn build_product_nodes(dim: usize, n_pol: usize, n_az: usize) -> (Vec<f64>, Vec<f64>) {
    if dim == 2 {
        let mut nodes = Vec::with_capacity(2 * n_az);
        let mut weights = Vec::with_capacity(n_az);
        let w = 2.0 * std::f64::consts::PI / n_az as f64;
        for j in 0..n_az {
            let a = 2.0 * std::f64::consts::PI * j as f64 / n_az as f64;
            nodes.push(a.cos());
            nodes.push(a.sin());
            weights.push(w);
        }
        return (nodes, weights);
    }
    if dim == 3 {
        // θ = (s cos α, s sin α, t), t Gauss–Legendre on [-1,1], α trapezoid.
        let (ts, tw) = gauss_legendre(n_pol);
        let wa = 2.0 * std::f64::consts::PI / n_az as f64;
        let mut nodes = Vec::with_capacity(3 * n_pol * n_az);
        let mut weights = Vec::with_capacity(n_pol * n_az);
        for (t, wt) in ts.iter().zip(tw.iter()) {
            let s = (1.0 - t * t).sqrt();
            for j in 0..n_az {
                let a = 2.0 * std::f64::consts::PI * j as f64 / n_az as f64;
                nodes.push(s * a.cos());
                nodes.push(s * a.sin());
                nodes.push(*t);
                weights.push(wt * wa);
            }
        }
        return (nodes, weights);
    }
    // dim > 3: θ = (sin φ ω, cos φ) with ω ∈ S^{dim-2}; Gauss–Legendre in φ
    // with the sin^{dim-2} φ Jacobian folded into the weight.
    let (sub_nodes, sub_weights) = build_product_nodes(dim - 1, n_pol, n_az);
    let sub_dim = dim - 1;
    let (xs, xw) = gauss_legendre(n_pol);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (x, wx) in xs.iter().zip(xw.iter()) {
        // map x ∈ [-1,1] to φ ∈ [0,π]
        let phi = std::f64::consts::FRAC_PI_2 * (x + 1.0);
        let jac = std::f64::consts::FRAC_PI_2 * phi.sin().powi(dim as i32 - 2);
        let (sp, cp) = (phi.sin(), phi.cos());
        for k in 0..sub_weights.len() {
            for c in &sub_nodes[k * sub_dim..(k + 1) * sub_dim] {
                nodes.push(sp * c);
            }
            nodes.push(cp);
            weights.push(wx * jac * sub_weights[k]);
        }
    }
    (nodes, weights)
}

/// Deterministic orthonormal tangent frame at a unit vector `theta`.
///
/// For `N = 3` the azimuth/polar frame is used, rotating continuously with the
/// node; the two polar directions are special-cased. For other dimensions a
/// Gram–Schmidt sweep over the coordinate axes is used, dropping the axis most
/// aligned with `theta`.
pub fn tangent_frame(theta: &[f64]) -> Vec<f64> {
    let dim = theta.len();
    if dim == 3 {
        let s = theta[0].hypot(theta[1]);
        if s < 1e-12 {
            let t = theta[2].signum();
            // pole rule: e_pol = (t,0,0), e_az = (0,1,0)
            return vec![t, 0.0, 0.0, 0.0, 1.0, 0.0];
        }
        let (ca, sa) = (theta[0] / s, theta[1] / s);
        let t = theta[2];
        // e_pol = dθ/d(polar), e_az = dθ/d(azimuth)/s
        return vec![t * ca, t * sa, -s, -sa, ca, 0.0];
    }
    if dim == 2 {
        return vec![-theta[1], theta[0]];
    }
    // general N: Gram–Schmidt of the axes against theta
    let skip = (0..dim)
        .max_by(|&a, &b| theta[a].abs().partial_cmp(&theta[b].abs()).unwrap())
        .unwrap();
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(dim - 1);
    for axis in 0..dim {
        if axis == skip {
            continue;
        }
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        let d = dot(&v, theta);
        for i in 0..dim {
            v[i] -= d * theta[i];
        }
        for prev in &frame {
            let d = dot(&v, prev);
            for i in 0..dim {
                v[i] -= d * prev[i];
            }
        }
        let n = norm(&v);
        for x in v.iter_mut() {
            *x /= n;
        }
        frame.push(v);
    }
    frame.into_iter().flatten().collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        ws[i] = w;
        xs[n - 1 - i] = x;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (xs, ws) = gauss_legendre(8);
        // ∫_{-1}^{1} x^k dx
        for k in 0..15usize {
            let num: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((num - exact).abs() < 1e-13, "k={k}: {num} vs {exact}");
        }
    }

    #[test]
    fn total_weight_matches_sphere_area() {
        for dim in 2..=4 {
            let grid = SphereGrid::default_for(dim).unwrap();
            assert_relative_eq!(
                grid.total_weight(),
                unit_sphere_area(dim),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn odd_moments_cancel() {
        let grid = SphereGrid::default_for(3).unwrap();
        for axis in 0..3 {
            let m = grid.integrate(|_, th| th[axis]);
            assert!(m.abs() < 1e-12, "axis {axis}: {m}");
        }
    }

    #[test]
    fn second_moments_match_closed_form() {
        // ∫_{S^2} θ_i θ_j dσ = (4π/3) δ_ij
        let grid = SphereGrid::default_for(3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let m = grid.integrate(|_, th| th[i] * th[j]);
                let exact = if i == j {
                    4.0 * std::f64::consts::PI / 3.0
                } else {
                    0.0
                };
                assert!((m - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frames_are_orthonormal_and_tangent() {
        let grid = SphereGrid::standard(3, 12, 24).unwrap();
        for k in 0..grid.len() {
            let th = grid.node(k);
            let fr = grid.frame(k);
            let e1 = &fr[0..3];
            let e2 = &fr[3..6];
            assert!(dot(e1, th).abs() < 1e-13);
            assert!(dot(e2, th).abs() < 1e-13);
            assert!(dot(e1, e2).abs() < 1e-13);
            assert_relative_eq!(norm(e1), 1.0, max_relative = 1e-13);
            assert_relative_eq!(norm(e2), 1.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn pole_frame_is_deterministic() {
        let f = tangent_frame(&[0.0, 0.0, 1.0]);
        assert_eq!(f, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let f = tangent_frame(&[0.0, 0.0, -1.0]);
        assert_eq!(f, vec![-1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }
}
