//! Pointwise operator diagnostics on solved fields: the Finsler Laplacian,
//! its curvature decomposition along level sets, far-field decay brackets,
//! and the auxiliary-matrix diagnostics `W = ∇²V(Dv)D²v` with `v = u^{2/(N-2)}`.

use crate::bodies::ConvexBody;
use crate::error::{Error, Result};
use crate::norms::NormModel;
use crate::pde::domain::NodeClass;
use crate::pde::field::ScalarField;
use crate::pde::solve::ExteriorSolution;
use crate::symfun;
use nalgebra::DMatrix;
use serde::Serialize;

/// Relative gradient floor below which norm derivatives are not evaluated.
fn gradient_floor(field: &ScalarField) -> f64 {
    let (lo, hi) = field.interior_min_max();
    let scale = (hi - lo).abs().max(hi.abs()).max(1e-300);
    let dx = field.domain.spacing.iter().cloned().fold(f64::MAX, f64::min);
    1e-12 * scale / dx
}

/// Centered second-difference Hessian at a node; `None` when the stencil
/// touches exterior nodes.
fn node_hessian(field: &ScalarField, idx: usize) -> Option<DMatrix<f64>> {
    let d = &field.domain;
    let nx = d.dims[0];
    let nxny = d.dims[0] * d.dims[1];
    let strides = [1usize, nx, nxny];
    let ok = |i: usize| d.class[i] != NodeClass::Exterior;
    let v = &field.values;
    let mut h = DMatrix::zeros(3, 3);
    for a in 0..3 {
        let p = idx + strides[a];
        let m = idx.checked_sub(strides[a])?;
        if !ok(p) || !ok(m) {
            return None;
        }
        h[(a, a)] = (v[p] - 2.0 * v[idx] + v[m]) / (d.spacing[a] * d.spacing[a]);
        for b in (a + 1)..3 {
            let pp = idx + strides[a] + strides[b];
            let mm = idx.checked_sub(strides[a] + strides[b])?;
            let pm = (idx + strides[a]).checked_sub(strides[b])?;
            let mp = (idx + strides[b]).checked_sub(strides[a])?;
            if !ok(pp) || !ok(mm) || !ok(pm) || !ok(mp) {
                return None;
            }
            let val = (v[pp] - v[pm] - v[mp] + v[mm]) / (4.0 * d.spacing[a] * d.spacing[b]);
            h[(a, b)] = val;
            h[(b, a)] = val;
        }
    }
    Some(h)
}

/// Pointwise Finsler Laplacian `Δ_H u = tr(∇²V(Du) D²u)` at interior nodes.
/// Nodes whose stencil leaves the domain or whose gradient falls below the
/// floor are flagged invalid.
pub fn finsler_laplacian_apply(field: &ScalarField, model: &NormModel) -> Result<LaplacianField> {
    if model.dim() != 3 {
        return Err(Error::UnsupportedDimension {
            dim: model.dim(),
            reason: "diagnostics are implemented for N = 3".into(),
        });
    }
    let n = field.domain.n_nodes();
    let floor = gradient_floor(field);
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    for idx in 0..n {
        if field.domain.class[idx] != NodeClass::Interior {
            continue;
        }
        let Some(g) = field.node_gradient(idx) else {
            continue;
        };
        let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if gn < floor {
            continue;
        }
        let Some(hess) = node_hessian(field, idx) else {
            continue;
        };
        let hv = model.hess_v(&g)?;
        values[idx] = (hv * hess).trace();
        valid[idx] = true;
    }
    Ok(LaplacianField { values, valid })
}

#[derive(Debug, Clone)]
pub struct LaplacianField {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl LaplacianField {
    pub fn max_abs_over_valid(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualStats {
    pub count: usize,
    pub mean_abs: f64,
    pub max_abs: f64,
    /// Scale of the terms entering the residual, for relative reading.
    pub scale: f64,
}

/// Residual of the decomposition `Δ_H u = M_H(S_t) H(Du) + H_ξi H_ξj u_ij`
/// on the level band `|u - t| <= band`, with the level-set curvature `M_H`
/// computed from the field's normal directions: `ν = Du/|Du|` is formed at
/// every node, differentiated by centered differences, and contracted with
/// `∇²H(ν)`.
pub fn curvature_decomposition_check(
    field: &ScalarField,
    model: &NormModel,
    level: f64,
    band: f64,
) -> Result<ResidualStats> {
    let d = &field.domain;
    let n = d.n_nodes();
    let floor = gradient_floor(field);
    // pass 1: normal field
    let mut nu = vec![[f64::NAN; 3]; n];
    for idx in 0..n {
        if d.class[idx] != NodeClass::Interior {
            continue;
        }
        if let Some(g) = field.node_gradient(idx) {
            let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if gn >= floor {
                nu[idx] = [g[0] / gn, g[1] / gn, g[2] / gn];
            }
        }
    }
    let nx = d.dims[0];
    let nxny = d.dims[0] * d.dims[1];
    let strides = [1usize, nx, nxny];
    let lap = finsler_laplacian_apply(field, model)?;
    let mut count = 0usize;
    let mut sum_abs = 0.0;
    let mut max_abs = 0.0f64;
    let mut scale = 0.0f64;
    for idx in 0..n {
        if !lap.valid[idx] || (field.values[idx] - level).abs() > band {
            continue;
        }
        let g = match field.node_gradient(idx) {
            Some(g) => g,
            None => continue,
        };
        let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if gn < floor || nu[idx][0].is_nan() {
            continue;
        }
        // ∂_i ν_j by centered differences of the normal field
        let mut dnu = DMatrix::zeros(3, 3);
        let mut ok = true;
        for a in 0..3 {
            let p = idx + strides[a];
            let m = match idx.checked_sub(strides[a]) {
                Some(m) => m,
                None => {
                    ok = false;
                    break;
                }
            };
            if nu[p][0].is_nan() || nu[m][0].is_nan() {
                ok = false;
                break;
            }
            for j in 0..3 {
                dnu[(a, j)] = (nu[p][j] - nu[m][j]) / (2.0 * d.spacing[a]);
            }
        }
        if !ok {
            continue;
        }
        let nu_i = nu[idx];
        let hess_h_nu = model.hess_h(&nu_i)?;
        let mut m_h = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                m_h += hess_h_nu[(i, j)] * dnu[(i, j)];
            }
        }
        let h_du = model.h(&g);
        let gh = model.grad_h(&g)?;
        let hess_u = match node_hessian(field, idx) {
            Some(h) => h,
            None => continue,
        };
        let mut second_term = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                second_term += gh[i] * gh[j] * hess_u[(i, j)];
            }
        }
        let rhs = m_h * h_du + second_term;
        let lhs = lap.values[idx];
        let r = (lhs - rhs).abs();
        sum_abs += r;
        max_abs = max_abs.max(r);
        scale = scale.max(lhs.abs()).max(rhs.abs()).max(m_h.abs() * h_du);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Domain("no usable nodes in the level band".into()));
    }
    Ok(ResidualStats {
        count,
        mean_abs: sum_abs / count as f64,
        max_abs,
        scale,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayBrackets {
    /// window in `H_0` over which the brackets were sampled
    pub window: (f64, f64),
    pub count: usize,
    /// min/max of `u · H_0^{N-2}`
    pub u_bracket: (f64, f64),
    /// min/max of `H(Du) · H_0^{N-1}`
    pub flux_bracket: (f64, f64),
}

impl DecayBrackets {
    pub fn u_ratio(&self) -> f64 {
        self.u_bracket.1 / self.u_bracket.0.max(1e-300)
    }
    pub fn flux_ratio(&self) -> f64 {
        self.flux_bracket.1 / self.flux_bracket.0.max(1e-300)
    }
}

/// Sample the decay products `u·H_0^{N-2}` and `H(Du)·H_0^{N-1}` over the
/// window `2 R_1 <= H_0 <= R_out/2` on the corrected exterior field.
pub fn decay_brackets(sol: &ExteriorSolution, model: &NormModel) -> Result<DecayBrackets> {
    let field = &sol.corrected;
    let d = &field.domain;
    let gauge = d
        .outer_gauge
        .as_ref()
        .ok_or_else(|| Error::invalid("exterior field lacks an outer gauge"))?;
    let r_max = sol.runs.last().map(|r| r.r_out).unwrap_or(0.0);
    let lo = 2.0 * sol.h0_circumradius;
    let hi = (r_max / 2.0).min(
        d.outer_region
            .as_ref()
            .map(|r| r.radius * 0.98)
            .unwrap_or(f64::MAX),
    );
    if !(hi > lo) {
        return Err(Error::invalid(format!(
            "empty decay window [{lo:.3}, {hi:.3}]"
        )));
    }
    let mut count = 0usize;
    let mut u_lo = f64::INFINITY;
    let mut u_hi = f64::NEG_INFINITY;
    let mut f_lo = f64::INFINITY;
    let mut f_hi = f64::NEG_INFINITY;
    for idx in 0..d.n_nodes() {
        if d.class[idx] != NodeClass::Interior {
            continue;
        }
        let h0 = gauge[idx];
        if h0 < lo || h0 > hi {
            continue;
        }
        let u = field.values[idx];
        u_lo = u_lo.min(u * h0);
        u_hi = u_hi.max(u * h0);
        if let Some(g) = field.node_gradient(idx) {
            let f = model.h(&g) * h0 * h0;
            f_lo = f_lo.min(f);
            f_hi = f_hi.max(f);
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Domain("no nodes in the decay window".into()));
    }
    Ok(DecayBrackets {
        window: (lo, hi),
        count,
        u_bracket: (u_lo, u_hi),
        flux_bracket: (f_lo, f_hi),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProofDiagnostics {
    /// Pointwise Newton slack `(N-1)/(2N)·Tr(W)² - S_2(W)` over the bulk:
    /// fraction of sampled nodes where it dips below `-tol`.
    pub newton_violation_fraction: f64,
    pub s2_mean: f64,
    pub s2_max: f64,
    /// Relative residual stats of `S²_ij(W) V_ξi(Dv) v_j = H(Dv)³ M_H` on the
    /// first interior layer next to `∂Ω`.
    pub boundary_identity: ResidualStats,
    /// Mean/max of `|Tr(W)/N ÷ (V(Dv)/v) - 1|`: the two expressions for the
    /// proportionality factor γ agree where `W` is near a multiple of `Id`.
    pub gamma_mismatch_mean: f64,
    pub gamma_mismatch_max: f64,
    pub sampled_nodes: usize,
}

/// Diagnostics of the auxiliary function `v = u^{2/(N-2)}` (`= u²` for
/// `N = 3`) on a corrected exterior solve. All quantities are reported, not
/// asserted; near curved boundaries they carry O(Δx) discretization error.
pub fn proof_diagnostics(
    sol: &ExteriorSolution,
    model: &NormModel,
    body: &ConvexBody,
) -> Result<ProofDiagnostics> {
    let u = &sol.corrected;
    let d = &u.domain;
    // v = u² on the same lattice
    let mut v = u.clone();
    for val in v.values.iter_mut() {
        *val = *val * *val;
    }
    let floor = gradient_floor(&v);
    let inner_gauge = d
        .inner_gauge
        .as_ref()
        .ok_or_else(|| Error::invalid("exterior field lacks an inner gauge"))?;
    let r_in = d.inner_region.as_ref().unwrap().radius;
    let dx = d.spacing.iter().cloned().fold(0.0f64, f64::max);

    let mut newton_violations = 0usize;
    let mut s2_sum = 0.0;
    let mut s2_max = f64::NEG_INFINITY;
    let mut sampled = 0usize;
    let mut boundary_count = 0usize;
    let mut boundary_sum = 0.0;
    let mut boundary_max = 0.0f64;
    let mut boundary_scale = 0.0f64;
    let mut gamma_sum = 0.0;
    let mut gamma_max = 0.0f64;
    let mut gamma_count = 0usize;

    for idx in 0..d.n_nodes() {
        if d.class[idx] != NodeClass::Interior {
            continue;
        }
        let Some(g) = v.node_gradient(idx) else { continue };
        let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if gn < floor {
            continue;
        }
        let Some(hess) = node_hessian(&v, idx) else {
            continue;
        };
        let hv = model.hess_v(&g)?;
        let w = &hv * &hess;
        let s2 = symfun::s2_fast(&w);
        let tr = w.trace();
        let bound = (2.0 / 6.0) * tr * tr;
        sampled += 1;
        s2_sum += s2;
        s2_max = s2_max.max(s2);
        if bound - s2 < -1e-8 * bound.abs().max(1.0) {
            newton_violations += 1;
        }
        // γ from Tr(W)/N vs V(Dv)/v
        let vval = v.values[idx];
        if vval > 1e-10 {
            let g1 = tr / 3.0;
            let g2 = model.v(&g) / vval;
            if g2.abs() > 1e-12 {
                let mism = (g1 / g2 - 1.0).abs();
                gamma_sum += mism;
                gamma_max = gamma_max.max(mism);
                gamma_count += 1;
            }
        }
        // boundary identity on the first interior layer
        if inner_gauge[idx] - r_in < 1.5 * dx {
            let cof = symfun::s_k_cofactor(&w, 2)?;
            let mut gv_buf = [0.0f64; 3];
            let _ = model.v_grad_v(&g, &mut gv_buf);
            let mut q = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    q += cof[(i, j)] * gv_buf[i] * g[j];
                }
            }
            // geometric curvature at the matching Gauss direction ν = -Dv/|Dv|
            let nu = [-g[0] / gn, -g[1] / gn, -g[2] / gn];
            let m_h = body.mean_curvature_aniso(model, &nu)?;
            let h3 = model.h(&g).powi(3);
            let target = h3 * m_h;
            let r = (q - target).abs();
            boundary_sum += r;
            boundary_max = boundary_max.max(r);
            boundary_scale = boundary_scale.max(target.abs());
            boundary_count += 1;
        }
    }
    if sampled == 0 {
        return Err(Error::Domain("no usable nodes for proof diagnostics".into()));
    }
    Ok(ProofDiagnostics {
        newton_violation_fraction: newton_violations as f64 / sampled as f64,
        s2_mean: s2_sum / sampled as f64,
        s2_max,
        boundary_identity: ResidualStats {
            count: boundary_count,
            mean_abs: if boundary_count > 0 {
                boundary_sum / boundary_count as f64
            } else {
                0.0
            },
            max_abs: boundary_max,
            scale: boundary_scale,
        },
        gamma_mismatch_mean: if gamma_count > 0 {
            gamma_sum / gamma_count as f64
        } else {
            0.0
        },
        gamma_mismatch_max: gamma_max,
        sampled_nodes: sampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::domain::{radial_bounds, DomainSpec, GhostInterp, RadialRegion, VoxelDomain};
    use crate::pde::field::{FieldMeta, ScalarField};
    use std::sync::Arc;

    fn euclid() -> NormModel {
        NormModel::euclidean(3).unwrap()
    }

    fn annulus(model: &NormModel, cells: usize) -> Arc<VoxelDomain> {
        let spec = DomainSpec {
            bounds: radial_bounds(model, 2.0, cells, &[0.0; 3]),
            cells,
            inner: Some(RadialRegion::wulff(model, 1.0, &[0.0; 3])),
            outer: Some(RadialRegion::wulff(model, 2.0, &[0.0; 3])),
            ghost_interp: GhostInterp::Linear,
        };
        Arc::new(VoxelDomain::build(spec).unwrap())
    }

    fn field_from(domain: Arc<VoxelDomain>, f: impl Fn(&[f64; 3]) -> f64) -> ScalarField {
        let mut field = ScalarField::constant(domain.clone(), 0.0);
        for idx in 0..domain.n_nodes() {
            let x = domain.node_coords(idx);
            field.values[idx] = f(&x);
        }
        field
    }

    #[test]
    fn laplacian_of_fundamental_profile_is_small() {
        // u = H_0^{2-N} is Δ_H-harmonic away from the origin
        let m = euclid();
        let d = annulus(&m, 32);
        let field = field_from(d, |x| {
            1.0 / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
        });
        let lap = finsler_laplacian_apply(&field, &m).unwrap();
        // scale: |D²u| ~ 6 near r=1; FD truncation ~ C dx²
        assert!(lap.max_abs_over_valid() < 0.1, "{}", lap.max_abs_over_valid());
    }

    #[test]
    fn laplacian_of_dual_potential_is_dimension() {
        // Δ_H (H_0²/2) = N exactly
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[1.0, 2.0, 3.0]));
        let m = NormModel::ellipsoidal(a.clone()).unwrap();
        let d = annulus(&m, 16);
        let a_inv = a.try_inverse().unwrap();
        let field = field_from(d.clone(), |x| {
            let mut q = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    q += x[i] * a_inv[(i, j)] * x[j];
                }
            }
            0.5 * q
        });
        let lap = finsler_laplacian_apply(&field, &m).unwrap();
        for idx in 0..d.n_nodes() {
            if lap.valid[idx] {
                assert!((lap.values[idx] - 3.0).abs() < 1e-8, "{}", lap.values[idx]);
            }
        }
    }

    #[test]
    fn curvature_decomposition_on_wulff_spheres() {
        let m = euclid();
        let d = annulus(&m, 32);
        let field = field_from(d, |x| {
            1.0 / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
        });
        let stats = curvature_decomposition_check(&field, &m, 1.0 / 1.5, 0.08).unwrap();
        assert!(stats.count > 100);
        // residual is O(dx) relative to the curvature term scale
        assert!(
            stats.max_abs <= 0.2 * stats.scale,
            "max {} scale {}",
            stats.max_abs,
            stats.scale
        );
    }
}
