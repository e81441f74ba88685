//! Strictly convex bodies represented by their support function on a sphere
//! grid, with the geometry evaluated in Gauss-map coordinates.
//!
//! The support function of a centrally symmetric body is a norm, so a body is
//! stored as a positive combination of [`NormModel`] parts plus a center
//! offset: `h(θ) = Σ_i c_i H_i(θ) + <x_0, θ>`. The boundary point with outer
//! normal `θ` is `τ(θ) = ∇h(θ)`, the surface area measure has density
//! `det(h_ab + h δ_ab)` (the tangential block of the Hessian of the
//! 1-homogeneous extension), and volumes, anisotropic perimeters, mean
//! curvatures and the two mixed-volume patterns `V(B,Ω,…,Ω)`, `V(B,B,Ω,…,Ω)`
//! all become sphere-grid quadratures.

use crate::error::{Error, Result};
use crate::norms::NormModel;
use crate::sphere::{dot, tangent_frame, SphereGrid};
use nalgebra::DMatrix;
use serde::Serialize;
use std::sync::Arc;

/// A strictly convex body bound to a quadrature grid.
#[derive(Debug, Clone)]
pub struct ConvexBody {
    grid: Arc<SphereGrid>,
    /// `(coefficient, norm)` pairs; the support of the centered body is
    /// `Σ c_i H_i(θ)`.
    parts: Vec<(f64, NormModel)>,
    center: Vec<f64>,
    /// Cached per-node support values of the centered body.
    h_base: Vec<f64>,
    /// Cached tangential Hessians, `(N-1)²` entries per node, row-major.
    tang_hess: Vec<f64>,
    /// Cached area-measure density `det(tangential Hessian)` per node.
    area_density: Vec<f64>,
}

impl ConvexBody {
    /// Wulff ball of `model` with radius `r`: support `r·H(θ) + <center, θ>`.
    pub fn wulff_ball(
        model: &NormModel,
        r: f64,
        center: &[f64],
        grid: Arc<SphereGrid>,
    ) -> Result<ConvexBody> {
        if !(r > 0.0) {
            return Err(Error::invalid("radius must be positive"));
        }
        ConvexBody::from_parts(vec![(r, model.clone())], center.to_vec(), grid)
    }

    /// Axis-aligned ellipsoid with the given semi-axes.
    pub fn ellipsoid(semi_axes: &[f64], center: &[f64], grid: Arc<SphereGrid>) -> Result<ConvexBody> {
        if semi_axes.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::invalid("semi-axes must be positive"));
        }
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            semi_axes.len(),
            semi_axes.iter().map(|s| s * s),
        ));
        let norm = NormModel::ellipsoidal(a)?;
        ConvexBody::from_parts(vec![(1.0, norm)], center.to_vec(), grid)
    }

    pub fn euclidean_ball(r: f64, center: &[f64], grid: Arc<SphereGrid>) -> Result<ConvexBody> {
        let dim = grid.dim();
        ConvexBody::wulff_ball(&NormModel::euclidean(dim)?, r, center, grid)
    }

    /// Body reconstructed from support-function samples at the grid nodes.
    pub fn from_support_samples(
        grid: Arc<SphereGrid>,
        values: &[f64],
        half_degree: u32,
        center: &[f64],
    ) -> Result<ConvexBody> {
        let norm = NormModel::from_sphere_samples(&grid, values, half_degree)?;
        ConvexBody::from_parts(vec![(1.0, norm)], center.to_vec(), grid)
    }

    pub fn from_parts(
        parts: Vec<(f64, NormModel)>,
        center: Vec<f64>,
        grid: Arc<SphereGrid>,
    ) -> Result<ConvexBody> {
        let dim = grid.dim();
        if parts.is_empty() {
            return Err(Error::invalid("body needs at least one support part"));
        }
        if center.len() != dim {
            return Err(Error::invalid("center dimension mismatch"));
        }
        for (c, m) in &parts {
            if !(*c > 0.0) {
                return Err(Error::invalid("support coefficients must be positive"));
            }
            if m.dim() != dim {
                return Err(Error::invalid("norm dimension mismatch"));
            }
            if dim > 3 && !matches!(m.family_name(), "euclidean" | "ellipsoidal") {
                return Err(Error::UnsupportedDimension {
                    dim,
                    reason: "N > 3 bodies are limited to euclidean/ellipsoidal supports".into(),
                });
            }
        }
        let mut body = ConvexBody {
            grid,
            parts,
            center,
            h_base: Vec::new(),
            tang_hess: Vec::new(),
            area_density: Vec::new(),
        };
        body.build_cache()?;
        Ok(body)
    }

    fn build_cache(&mut self) -> Result<()> {
        let grid = self.grid.clone();
        let dim = grid.dim();
        let td = dim - 1;
        let n = grid.len();
        self.h_base = Vec::with_capacity(n);
        self.tang_hess = Vec::with_capacity(n * td * td);
        self.area_density = Vec::with_capacity(n);
        for k in 0..n {
            let theta = grid.node(k);
            let frame = grid.frame(k);
            let mut h = 0.0;
            let mut hess = DMatrix::<f64>::zeros(dim, dim);
            for (c, m) in &self.parts {
                h += c * m.h(theta);
                let part_hess = m.hess_h(theta).map_err(|e| {
                    Error::Construction(format!("support not smooth at grid node {k}: {e}"))
                })?;
                hess += part_hess * *c;
            }
            let mut q = DMatrix::<f64>::zeros(td, td);
            for a in 0..td {
                for b in 0..td {
                    let ea = &frame[a * dim..(a + 1) * dim];
                    let eb = &frame[b * dim..(b + 1) * dim];
                    let mut acc = 0.0;
                    for i in 0..dim {
                        for j in 0..dim {
                            acc += ea[i] * hess[(i, j)] * eb[j];
                        }
                    }
                    q[(a, b)] = acc;
                }
            }
            let det = q.determinant();
            let min_eig = q.clone().symmetric_eigen().eigenvalues.min();
            if !(min_eig > 0.0) {
                return Err(Error::Construction(format!(
                    "tangential Hessian not positive definite at node {k} (λ_min = {min_eig:e})"
                )));
            }
            self.h_base.push(h);
            for a in 0..td {
                for b in 0..td {
                    self.tang_hess.push(q[(a, b)]);
                }
            }
            self.area_density.push(det);
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn parts(&self) -> &[(f64, NormModel)] {
        &self.parts
    }

    /// Support value `h(θ)` at an arbitrary direction (θ need not be a node).
    pub fn support(&self, theta: &[f64]) -> f64 {
        let base: f64 = self.parts.iter().map(|(c, m)| c * m.h(theta)).sum();
        base + dot(&self.center, theta)
    }

    /// Support value at grid node `k`.
    pub fn support_at_node(&self, k: usize) -> f64 {
        self.h_base[k] + dot(&self.center, self.grid.node(k))
    }

    /// Boundary point with outer normal `θ` (inverse Gauss map `τ = ∇h`).
    pub fn boundary_point(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim();
        let mut x = self.center.clone();
        for (c, m) in &self.parts {
            let g = m.grad_h(theta)?;
            for i in 0..dim {
                x[i] += c * g[i];
            }
        }
        Ok(x)
    }

    /// Area-measure density `det(tangential Hessian)` at node `k`.
    pub fn area_density(&self, k: usize) -> f64 {
        self.area_density[k]
    }

    fn tangential_hessian(&self, k: usize) -> DMatrix<f64> {
        let td = self.dim() - 1;
        DMatrix::from_row_slice(td, td, &self.tang_hess[k * td * td..(k + 1) * td * td])
    }

    /// Minkowski sum; supports add exactly.
    pub fn minkowski_sum(&self, other: &ConvexBody) -> Result<ConvexBody> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid.len() != other.grid.len() {
            return Err(Error::invalid("bodies must share a grid"));
        }
        let mut parts = self.parts.clone();
        parts.extend(other.parts.iter().cloned());
        let center = self
            .center
            .iter()
            .zip(&other.center)
            .map(|(a, b)| a + b)
            .collect();
        ConvexBody::from_parts(parts, center, self.grid.clone())
    }

    pub fn scale(&self, lambda: f64) -> Result<ConvexBody> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("scale factor must be positive"));
        }
        let parts = self
            .parts
            .iter()
            .map(|(c, m)| (c * lambda, m.clone()))
            .collect();
        let center = self.center.iter().map(|c| c * lambda).collect();
        ConvexBody::from_parts(parts, center, self.grid.clone())
    }

    pub fn translate(&self, shift: &[f64]) -> Result<ConvexBody> {
        let center = self
            .center
            .iter()
            .zip(shift)
            .map(|(a, b)| a + b)
            .collect();
        ConvexBody::from_parts(self.parts.clone(), center, self.grid.clone())
    }

    /// `|Ω| = (1/N) ∫ h(θ) det(tangential Hessian) dσ`.
    pub fn volume(&self) -> f64 {
        let n = self.dim() as f64;
        self.grid
            .integrate(|k, theta| {
                (self.h_base[k] + dot(&self.center, theta)) * self.area_density[k]
            })
            / n
    }

    /// Anisotropic perimeter `P_H(Ω) = ∫_{∂Ω} H(ν) dH^{N-1}
    ///                               = ∫ H(θ) det(tangential Hessian) dσ`.
    pub fn perimeter_aniso(&self, model: &NormModel) -> Result<f64> {
        self.check_model(model)?;
        Ok(self
            .grid
            .integrate(|k, theta| model.h(theta) * self.area_density[k]))
    }

    /// Anisotropic mean curvature at the boundary point `τ(θ)`:
    /// `M_H = Σ_ab H_ab(θ) (h_ab)^{-1}` over a tangent frame at `θ`.
    ///
    /// `θ` may be any unit direction, not only a grid node.
    pub fn mean_curvature_aniso(&self, model: &NormModel, theta: &[f64]) -> Result<f64> {
        self.check_model(model)?;
        let dim = self.dim();
        let td = dim - 1;
        let frame = tangent_frame(theta);
        let mut body_hess = DMatrix::<f64>::zeros(dim, dim);
        for (c, m) in &self.parts {
            body_hess += m.hess_h(theta)? * *c;
        }
        let model_hess = model.hess_h(theta)?;
        let mut q = DMatrix::<f64>::zeros(td, td);
        let mut hm = DMatrix::<f64>::zeros(td, td);
        for a in 0..td {
            for b in 0..td {
                let ea = &frame[a * dim..(a + 1) * dim];
                let eb = &frame[b * dim..(b + 1) * dim];
                let mut qa = 0.0;
                let mut ha = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        qa += ea[i] * body_hess[(i, j)] * eb[j];
                        ha += ea[i] * model_hess[(i, j)] * eb[j];
                    }
                }
                q[(a, b)] = qa;
                hm[(a, b)] = ha;
            }
        }
        let q_inv = q.try_inverse().ok_or_else(|| {
            Error::CurvatureSingularity("singular tangential Hessian".into())
        })?;
        Ok((hm * q_inv).trace())
    }

    fn mean_curvature_at_node(&self, model_tang: &DMatrix<f64>, k: usize) -> Result<f64> {
        let q = self.tangential_hessian(k);
        let q_inv = q.try_inverse().ok_or_else(|| {
            Error::CurvatureSingularity(format!("singular tangential Hessian at node {k}"))
        })?;
        Ok((model_tang * q_inv).trace())
    }

    /// `V(B_{H_0}, Ω, …, Ω) = P_H(Ω)/N`.
    pub fn mixed_volume_vbkk(&self, model: &NormModel) -> Result<f64> {
        Ok(self.perimeter_aniso(model)? / self.dim() as f64)
    }

    /// `V(B_{H_0}, B_{H_0}, Ω, …, Ω)
    ///    = (1/N) ∫_{∂Ω} (M_H/(N-1)) H(ν) dH^{N-1}`.
    pub fn mixed_volume_vbbk(&self, model: &NormModel) -> Result<f64> {
        self.check_model(model)?;
        let dim = self.dim();
        let nf = dim as f64;
        let model_tangs = self.model_tangential_hessians(model)?;
        let mut acc = 0.0;
        for k in 0..self.grid.len() {
            let theta = self.grid.node(k);
            let mh = self.mean_curvature_at_node(&model_tangs[k], k)?;
            acc += self.grid.weight(k)
                * model.h(theta)
                * (mh / (nf - 1.0))
                * self.area_density[k];
        }
        Ok(acc / nf)
    }

    /// `∫_{∂Ω} (M_H/(N-1)) H(ν) dH^{N-1}`; the curvature-weighted perimeter
    /// appearing on the right of the Minkowski inequality.
    pub fn curvature_weighted_perimeter(&self, model: &NormModel) -> Result<f64> {
        Ok(self.mixed_volume_vbbk(model)? * self.dim() as f64)
    }

    /// Anisotropic Minkowski inequality
    /// `P_H(Ω)² >= N |Ω| ∫_{∂Ω} (M_H/(N-1)) H(ν)`,
    /// with equality exactly on Wulff balls of the model.
    pub fn minkowski_inequality_check(&self, model: &NormModel) -> Result<InequalityReport> {
        let per = self.perimeter_aniso(model)?;
        let lhs = per * per;
        let rhs = self.dim() as f64 * self.volume() * self.curvature_weighted_perimeter(model)?;
        let slack = lhs - rhs;
        let relative_slack = slack / lhs;
        Ok(InequalityReport {
            lhs,
            rhs,
            slack,
            relative_slack,
            equality: relative_slack.abs() <= EQUALITY_TOL_REL,
        })
    }

    /// Residual of the Minkowski-type formula
    /// `P_H(Ω) = ∫_{∂Ω} (M_H/(N-1)) <x, ν> dH^{N-1}` (relative to `P_H`).
    pub fn minkowski_formula_residual(&self, model: &NormModel) -> Result<f64> {
        let dim = self.dim();
        let nf = dim as f64;
        let model_tangs = self.model_tangential_hessians(model)?;
        let mut acc = 0.0;
        for k in 0..self.grid.len() {
            let theta = self.grid.node(k);
            let mh = self.mean_curvature_at_node(&model_tangs[k], k)?;
            let x = self.boundary_point(theta)?;
            acc += self.grid.weight(k) * (mh / (nf - 1.0)) * dot(&x, theta) * self.area_density[k];
        }
        let per = self.perimeter_aniso(model)?;
        Ok((acc - per).abs() / per)
    }

    fn model_tangential_hessians(&self, model: &NormModel) -> Result<Vec<DMatrix<f64>>> {
        let dim = self.dim();
        let td = dim - 1;
        let mut out = Vec::with_capacity(self.grid.len());
        for k in 0..self.grid.len() {
            let theta = self.grid.node(k);
            let frame = self.grid.frame(k);
            let hess = model.hess_h(theta)?;
            let mut hm = DMatrix::<f64>::zeros(td, td);
            for a in 0..td {
                for b in 0..td {
                    let ea = &frame[a * dim..(a + 1) * dim];
                    let eb = &frame[b * dim..(b + 1) * dim];
                    let mut acc = 0.0;
                    for i in 0..dim {
                        for j in 0..dim {
                            acc += ea[i] * hess[(i, j)] * eb[j];
                        }
                    }
                    hm[(a, b)] = acc;
                }
            }
            out.push(hm);
        }
        Ok(out)
    }

    fn check_model(&self, model: &NormModel) -> Result<()> {
        if model.dim() != self.dim() {
            return Err(Error::invalid("model dimension mismatch"));
        }
        Ok(())
    }
}

/// Relative equality-detection tolerance: dominated by quadrature error on
/// the default grid.
pub const EQUALITY_TOL_REL: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    /// `P_H(Ω)²`
    pub lhs: f64,
    /// `N |Ω| ∫ (M_H/(N-1)) H(ν)`
    pub rhs: f64,
    pub slack: f64,
    pub relative_slack: f64,
    pub equality: bool,
}

/// Relative change of volume/perimeter under grid doubling; used to flag
/// under-resolved bodies.
pub fn grid_convergence_flag(body: &ConvexBody, model: &NormModel) -> Result<(f64, bool)> {
    let (np, na) = body.grid().orders;
    let fine = Arc::new(SphereGrid::standard(body.dim(), np * 2, na * 2)?);
    let refined = ConvexBody::from_parts(body.parts().to_vec(), body.center().to_vec(), fine)?;
    let v0 = body.volume();
    let v1 = refined.volume();
    let p0 = body.perimeter_aniso(model)?;
    let p1 = refined.perimeter_aniso(model)?;
    let change = ((v1 - v0).abs() / v1).max((p1 - p0).abs() / p1);
    Ok((change, change < 1e-3))
}
