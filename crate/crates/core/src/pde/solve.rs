//! Convex energy minimization on voxel domains and the three model problems:
//! two-boundary Dirichlet solves, the truncated exterior capacity problem
//! with Richardson extrapolation in the truncation radius, and the torsion
//! problem.
//!
//! The optimizer is a Polak–Ribière nonlinear conjugate gradient with a
//! curvature-probe line search that is exact for quadratic energies (the
//! euclidean and ellipsoidal families), restarted every `√n` iterations.
//! Accepted steps never increase the energy.

use crate::bodies::ConvexBody;
use crate::error::{Error, Result};
use crate::norms::{NormFamily, NormModel};
use crate::pde::domain::{
    radial_bounds, DomainSpec, GhostInterp, NodeClass, RadialRegion, VoxelDomain,
};
use crate::pde::energy::{EnergyBreakdown, EnergyModel};
use crate::pde::field::{FieldMeta, ScalarField};
use crate::sphere::SphereGrid;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Gradient sup-norm target, relative to `max(1, |g_0|_∞)`.
    pub tol_grad_rel: f64,
    /// Stop when the relative energy decrement over `stall_window` iterations
    /// falls below `stall_rel`.
    pub stall_window: usize,
    pub stall_rel: f64,
    pub ghost_interp: GhostInterp,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 20_000,
            tol_grad_rel: 1e-9,
            stall_window: 10,
            stall_rel: 1e-12,
            ghost_interp: GhostInterp::Linear,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveStats {
    pub iters: usize,
    pub unknowns: usize,
    pub initial_grad_inf: f64,
    pub final_grad_inf: f64,
    pub quadratic_energy: f64,
    pub stabilization_energy: f64,
    pub source_energy: f64,
    pub converged_by: String,
    /// Worst overshoot of interior values beyond the boundary-condition range.
    pub max_principle_excess: f64,
}

/// Minimize the discrete energy in place. `values` must be a full nodal
/// buffer; interior slots are the unknowns.
pub fn minimize(
    em: &EnergyModel,
    values: &mut Vec<f64>,
    opts: &SolverOptions,
) -> Result<(EnergyBreakdown, SolveStats)> {
    let domain = em.domain;
    let n = domain.n_unknowns();
    if n == 0 {
        return Err(Error::invalid("domain has no unknowns"));
    }
    em.refresh_ghosts(values);
    let mut grad_full = vec![0.0; domain.n_nodes()];
    let mut energy = em.energy_and_gradient(values, &mut grad_full);
    let mut j = energy.total();
    let pack = |full: &[f64], packed: &mut Vec<f64>| {
        packed.clear();
        packed.extend(domain.node_of_unknown.iter().map(|&i| full[i as usize]));
    };
    let mut g = Vec::with_capacity(n);
    pack(&grad_full, &mut g);
    let g0_inf = inf_norm(&g);
    let scale = g0_inf.max(1.0);
    let tol = opts.tol_grad_rel * scale;
    let mut dir: Vec<f64> = g.iter().map(|x| -x).collect();
    let mut trial = values.clone();
    let mut g_new = Vec::with_capacity(n);
    let restart_every = (n as f64).sqrt().ceil() as usize;
    let mut alpha_prev: Option<f64> = None;
    let mut j_history: Vec<f64> = vec![j];
    let mut residual_history: Vec<f64> = Vec::new();
    let mut converged_by = None;
    let mut iters = 0;

    for iter in 0..opts.max_iters {
        iters = iter;
        let g_inf = inf_norm(&g);
        residual_history.push(g_inf);
        if g_inf <= tol {
            converged_by = Some("gradient");
            break;
        }
        if j_history.len() > opts.stall_window {
            let prev = j_history[j_history.len() - 1 - opts.stall_window];
            if (prev - j) <= opts.stall_rel * j.abs().max(1e-300) {
                converged_by = Some("energy-stall");
                break;
            }
        }
        let mut dphi0 = dot(&g, &dir);
        if dphi0 >= 0.0 {
            for (d, gi) in dir.iter_mut().zip(&g) {
                *d = -gi;
            }
            dphi0 = -dot(&g, &g);
        }
        // curvature probe: exact step for quadratic energies; the probe is
        // floored so the energy difference stays above roundoff
        let d_inf = inf_norm(&dir).max(1e-300);
        let value_scale = 1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let probe_floor = 1e-5 * value_scale / d_inf;
        let apply = |trial: &mut Vec<f64>, base: &Vec<f64>, alpha: f64| {
            for (slot, &node) in domain.node_of_unknown.iter().enumerate() {
                trial[node as usize] = base[node as usize] + alpha * dir[slot];
            }
            em.refresh_ghosts(trial);
        };
        let mut probe = alpha_prev.unwrap_or(0.1 / d_inf).max(probe_floor);
        let mut q = 0.0;
        for _ in 0..6 {
            apply(&mut trial, values, probe);
            let jp = em.energy(&trial).total();
            q = 2.0 * (jp - j - probe * dphi0) / (probe * probe);
            if (jp - j).abs() > 1e-10 * j.abs().max(1e-300) || q > 0.0 {
                break;
            }
            probe *= 32.0;
        }
        let mut alpha = if q > 0.0 { -dphi0 / q } else { probe };
        // evaluate, Armijo backtracking
        let mut accepted = false;
        let mut e_new = energy;
        for _ in 0..60 {
            apply(&mut trial, values, alpha);
            grad_full.iter_mut().for_each(|x| *x = 0.0);
            e_new = em.energy_and_gradient(&trial, &mut grad_full);
            let j_new = e_new.total();
            if j_new <= j + 1e-4 * alpha * dphi0 || j_new < j {
                accepted = true;
                break;
            }
            alpha *= 0.5;
            if alpha * d_inf < 1e-16 * scale.max(1.0) {
                break;
            }
        }
        if !accepted {
            converged_by = Some("line-search-floor");
            break;
        }
        pack(&grad_full, &mut g_new);
        // one secant curvature correction for strongly nonquadratic energies
        let dphi_a = dot(&g_new, &dir);
        if dphi_a.abs() > 0.2 * dphi0.abs() && q > 0.0 {
            let denom = dphi0 - dphi_a;
            if denom.abs() > 1e-300 {
                let alpha2 = alpha * dphi0 / denom;
                if alpha2.is_finite() && alpha2 > 0.0 && alpha2 < 1e6 * alpha {
                    apply(&mut trial, values, alpha2);
                    grad_full.iter_mut().for_each(|x| *x = 0.0);
                    let e2 = em.energy_and_gradient(&trial, &mut grad_full);
                    if e2.total() <= e_new.total() {
                        alpha = alpha2;
                        e_new = e2;
                        pack(&grad_full, &mut g_new);
                    } else {
                        // keep the Armijo point; re-evaluate its gradient state
                        apply(&mut trial, values, alpha);
                        grad_full.iter_mut().for_each(|x| *x = 0.0);
                        let _ = em.energy_and_gradient(&trial, &mut grad_full);
                        pack(&grad_full, &mut g_new);
                    }
                }
            }
        }
        std::mem::swap(values, &mut trial);
        let j_new = e_new.total();
        energy = e_new;
        // Polak–Ribière+ with periodic restart
        let gg = dot(&g, &g);
        let mut beta = if gg > 0.0 {
            (dot(&g_new, &g_new) - dot(&g_new, &g)) / gg
        } else {
            0.0
        };
        if beta < 0.0 || (iter + 1) % restart_every == 0 {
            beta = 0.0;
        }
        for slot in 0..n {
            dir[slot] = -g_new[slot] + beta * dir[slot];
        }
        std::mem::swap(&mut g, &mut g_new);
        j = j_new;
        j_history.push(j);
        alpha_prev = Some(alpha);
    }

    let final_grad = inf_norm(&g);
    let converged_by = match converged_by {
        Some(c) => c,
        None => {
            return Err(Error::Convergence {
                context: format!("energy minimization ({n} unknowns)"),
                best_residual: final_grad / scale,
                history: residual_history
                    .iter()
                    .rev()
                    .take(50)
                    .rev()
                    .cloned()
                    .collect(),
            })
        }
    };
    Ok((
        energy,
        SolveStats {
            iters,
            unknowns: n,
            initial_grad_inf: g0_inf,
            final_grad_inf: final_grad,
            quadratic_energy: energy.quadratic,
            stabilization_energy: energy.stabilization,
            source_energy: energy.source,
            converged_by: converged_by.to_string(),
            max_principle_excess: 0.0,
        },
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn validate_model_for_pde(model: &NormModel) -> Result<()> {
    if model.dim() != 3 {
        return Err(Error::UnsupportedDimension {
            dim: model.dim(),
            reason: "voxel PDE solvers are implemented for N = 3".into(),
        });
    }
    if let NormFamily::PNorm { p, .. } = model.family() {
        if (*p - 2.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "p-norm energies with p != 2 must use the regularized wrapper",
            ));
        }
    }
    Ok(())
}

/// Minimize the Dirichlet energy on a prepared domain with the given
/// boundary values. The initial guess is the radial harmonic profile.
pub fn solve_dirichlet(
    domain: Arc<VoxelDomain>,
    model: &NormModel,
    bc_inner: f64,
    bc_outer: f64,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveStats)> {
    validate_model_for_pde(model)?;
    if !bc_inner.is_finite() || !bc_outer.is_finite() {
        return Err(Error::invalid("boundary values must be finite"));
    }
    if domain.ghosts.is_empty() {
        return Err(Error::invalid("domain has no Dirichlet boundary"));
    }
    let em = EnergyModel::new(&domain, model, 0.0, bc_inner, bc_outer);
    let mut values = initial_profile(&domain, bc_inner, bc_outer);
    let (energy, mut stats) = minimize(&em, &mut values, opts)?;
    let _ = energy;
    let lo = bc_inner.min(bc_outer);
    let hi = bc_inner.max(bc_outer);
    let mut field = ScalarField {
        domain: domain.clone(),
        values,
        meta: FieldMeta {
            problem: "dirichlet".into(),
            norm: model.family_name().into(),
            bc_inner: Some(bc_inner),
            bc_outer: Some(bc_outer),
            grid_cells: domain.dims[0] - 1,
            r_inner: domain.inner_region.as_ref().map(|r| r.radius),
            r_outer: domain.outer_region.as_ref().map(|r| r.radius),
        },
    };
    let (fmin, fmax) = field.interior_min_max();
    stats.max_principle_excess = (lo - fmin).max(fmax - hi).max(0.0);
    // pin exterior values to the nearest boundary level for clean plots
    for idx in 0..field.values.len() {
        if domain.class[idx] == NodeClass::Exterior {
            let inside_inner = domain
                .inner_gauge
                .as_ref()
                .map(|g| g[idx] <= domain.inner_region.as_ref().unwrap().radius)
                .unwrap_or(false);
            field.values[idx] = if inside_inner { bc_inner } else { bc_outer };
        }
    }
    Ok((field, stats))
}

/// Radial harmonic interpolant `(g^{2-N} - r_2^{2-N})/(r_1^{2-N} - r_2^{2-N})`
/// between the boundary levels; keeps gradients bounded away from zero.
fn initial_profile(domain: &VoxelDomain, bc_inner: f64, bc_outer: f64) -> Vec<f64> {
    let n = domain.n_nodes();
    let mut values = vec![0.0; n];
    let gauge = domain
        .inner_gauge
        .as_ref()
        .or(domain.outer_gauge.as_ref());
    let r1 = domain.inner_region.as_ref().map(|r| r.radius);
    let r2 = domain.outer_region.as_ref().map(|r| r.radius);
    match (gauge, r1, r2) {
        (Some(g), Some(r1), Some(r2)) => {
            let a = r1.powi(-1);
            let b = r2.powi(-1);
            for idx in 0..n {
                let t = ((g[idx].max(1e-12).powi(-1) - b) / (a - b)).clamp(0.0, 1.0);
                values[idx] = bc_outer + (bc_inner - bc_outer) * t;
            }
        }
        _ => {
            let mid = 0.5 * (bc_inner + bc_outer);
            values.iter_mut().for_each(|v| *v = mid);
        }
    }
    values
}

#[derive(Debug, Clone)]
pub struct ExteriorRun {
    pub r_out: f64,
    pub field: ScalarField,
    /// `∫ H(Du)² = 2 × (quadratic energy)` of the truncated problem.
    pub capacity: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone)]
pub struct ExteriorSolution {
    pub runs: Vec<ExteriorRun>,
    /// Finest-box field with the truncation-model correction applied;
    /// the primary output for near-field quantities.
    pub corrected: ScalarField,
    pub cap_extrapolated: f64,
    /// Far-field coefficient `c` in `u ≈ c·H_0^{2-N}`.
    pub far_coeff: f64,
    /// Volume of the unit Wulff ball `|B_{H_0}(1)|`.
    pub kappa_h: f64,
    /// Smallest `R_1` with `Ω ⊂ B_{H_0}(R_1)`.
    pub h0_circumradius: f64,
    pub monotonicity_checked: bool,
    pub monotonicity_worst: f64,
}

/// Solve the truncated exterior problems `u = 1` on `∂Ω`, `u = 0` on
/// `H_0 = R` for each `R`, verify nodewise monotonicity in `R` on exactly
/// shared lattice nodes, extrapolate the capacity in `R^{2-N}`, and correct
/// the finest-box field by the known truncation model.
pub fn solve_exterior_capacity(
    body: &ConvexBody,
    model: &NormModel,
    r_out_list: &[f64],
    cells: usize,
    opts: &SolverOptions,
) -> Result<ExteriorSolution> {
    validate_model_for_pde(model)?;
    if r_out_list.is_empty() {
        return Err(Error::invalid("need at least one truncation radius"));
    }
    let inner = RadialRegion::from_body(body)?;
    let center = inner.center.clone();
    let nf = 3.0f64;

    // H_0-circumradius of the body, sampled over its boundary
    let dual_gauge = RadialRegion::wulff(model, 1.0, &center);
    let mut r1 = 0.0f64;
    for k in (0..body.grid().len()).step_by(7) {
        let theta = body.grid().node(k);
        let x = body.boundary_point(theta)?;
        let shifted: Vec<f64> = x.iter().zip(&center).map(|(a, b)| a - b).collect();
        r1 = r1.max(dual_gauge.gauge.eval(&shifted)?);
    }

    let mut r_list = r_out_list.to_vec();
    r_list.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if r_list[0] <= r1 * 1.2 {
        return Err(Error::invalid(format!(
            "truncation radius {} too close to the body (H_0-circumradius {r1:.3})",
            r_list[0]
        )));
    }

    let mut runs = Vec::new();
    for &r_out in &r_list {
        let spec = DomainSpec {
            bounds: radial_bounds(model, r_out, cells, &center),
            cells,
            inner: Some(inner.clone()),
            outer: Some(RadialRegion::wulff(model, r_out, &center)),
            ghost_interp: opts.ghost_interp,
        };
        let domain = Arc::new(VoxelDomain::build(spec)?);
        let (mut field, stats) = solve_dirichlet(domain, model, 1.0, 0.0, opts)?;
        field.meta.problem = "exterior-capacity".into();
        let capacity = 2.0 * stats.quadratic_energy;
        runs.push(ExteriorRun {
            r_out,
            field,
            capacity,
            stats,
        });
    }

    // nodewise monotonicity u_R <= u_R' for R < R' on exactly shared nodes
    let mut monotonicity_checked = false;
    let mut worst = 0.0f64;
    for w in runs.windows(2) {
        let (small, large) = (&w[0], &w[1]);
        let da = &small.field.domain;
        let db = &large.field.domain;
        let mut shared = 0usize;
        for idx_b in 0..db.n_nodes() {
            if db.class[idx_b] != NodeClass::Interior {
                continue;
            }
            let x = db.node_coords(idx_b);
            let mut ia = [0usize; 3];
            let mut exact = true;
            for a in 0..3 {
                let t = (x[a] - da.origin[a]) / da.spacing[a];
                let r = t.round();
                if (t - r).abs() > 1e-9 || r < 0.0 || r > (da.dims[a] - 1) as f64 {
                    exact = false;
                    break;
                }
                ia[a] = r as usize;
            }
            if !exact {
                continue;
            }
            let idx_a = da.node_index(ia[0], ia[1], ia[2]);
            if da.class[idx_a] != NodeClass::Interior {
                continue;
            }
            shared += 1;
            worst = worst.max(small.field.values[idx_a] - large.field.values[idx_b]);
        }
        if shared > 0 {
            monotonicity_checked = true;
        }
    }
    if monotonicity_checked && worst > 1e-8 {
        return Err(Error::SolverInconsistency(format!(
            "truncation monotonicity violated by {worst:e}"
        )));
    }

    // κ_H and the capacity extrapolation
    let geo_grid = Arc::new(SphereGrid::default_for(3)?);
    let kappa_h = ConvexBody::wulff_ball(model, 1.0, &[0.0; 3], geo_grid)?.volume();
    let cap_extrapolated = if runs.len() >= 2 {
        // 1/Cap is affine in R^{2-N} for Wulff balls; least-squares fit
        let pts: Vec<(f64, f64)> = runs
            .iter()
            .map(|r| (r.r_out.powf(2.0 - nf), 1.0 / r.capacity))
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        let intercept = (sy * sxx - sx * sxy) / denom;
        1.0 / intercept
    } else {
        let run = &runs[0];
        run.capacity * (1.0 - (inner.radius / run.r_out).powf(nf - 2.0))
    };
    if !(cap_extrapolated > 0.0) {
        return Err(Error::SolverInconsistency(
            "capacity extrapolation produced a nonpositive value".into(),
        ));
    }
    let far_coeff = cap_extrapolated / (nf * (nf - 2.0) * kappa_h);

    // truncation-model correction of the finest-box (smallest R) field:
    // u_R = (u_∞ - δ)/(1 - δ) with δ = c R^{2-N}, inverted exactly
    let base = &runs[0];
    let delta = far_coeff * base.r_out.powf(2.0 - nf);
    let mut corrected = base.field.clone();
    for idx in 0..corrected.values.len() {
        match corrected.domain.class[idx] {
            NodeClass::Exterior => {}
            _ => corrected.values[idx] = base.field.values[idx] * (1.0 - delta) + delta,
        }
    }
    corrected.meta.problem = "exterior-capacity-corrected".into();

    Ok(ExteriorSolution {
        corrected,
        cap_extrapolated,
        far_coeff,
        kappa_h,
        h0_circumradius: r1,
        monotonicity_checked,
        monotonicity_worst: worst,
        runs,
    })
}

#[derive(Debug, Clone)]
pub struct TorsionSolution {
    pub field: ScalarField,
    pub stats: SolveStats,
    /// Worst positive interior value (the torsion function must be <= 0).
    pub positivity_excess: f64,
}

/// Minimize `∫ (½ H(Dψ)² + ψ)` over fields vanishing on `∂Ω`; the minimizer
/// solves `Δ_H ψ = 1` with `ψ = 0` on the boundary and is negative inside.
pub fn solve_torsion(
    body: &ConvexBody,
    model: &NormModel,
    cells: usize,
    opts: &SolverOptions,
) -> Result<TorsionSolution> {
    validate_model_for_pde(model)?;
    let region = RadialRegion::from_body(body)?;
    let (coef, part) = &body.parts()[0];
    let spec = DomainSpec {
        bounds: radial_bounds(part, *coef, cells, &region.center),
        cells,
        inner: None,
        outer: Some(region.clone()),
        ghost_interp: opts.ghost_interp,
    };
    let domain = Arc::new(VoxelDomain::build(spec)?);
    let em = EnergyModel::new(&domain, model, 1.0, 0.0, 0.0);
    // quadratic initial profile (exact for Wulff balls of the model)
    let mut values = vec![0.0; domain.n_nodes()];
    if let Some(g) = domain.outer_gauge.as_ref() {
        let r = region.radius;
        for idx in 0..values.len() {
            values[idx] = (g[idx] * g[idx] - r * r) / (2.0 * 3.0);
        }
    }
    let (_, mut stats) = minimize(&em, &mut values, opts)?;
    let mut field = ScalarField {
        domain: domain.clone(),
        values,
        meta: FieldMeta {
            problem: "torsion".into(),
            norm: model.family_name().into(),
            bc_inner: None,
            bc_outer: Some(0.0),
            grid_cells: cells,
            r_inner: None,
            r_outer: Some(region.radius),
        },
    };
    let (_, fmax) = field.interior_min_max();
    let positivity_excess = fmax.max(0.0);
    stats.max_principle_excess = positivity_excess;
    for idx in 0..field.values.len() {
        if domain.class[idx] == NodeClass::Exterior {
            field.values[idx] = 0.0;
        }
    }
    Ok(TorsionSolution {
        field,
        stats,
        positivity_excess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn euclid() -> NormModel {
        NormModel::euclidean(3).unwrap()
    }

    fn annulus_domain(model: &NormModel, r1: f64, r2: f64, cells: usize) -> Arc<VoxelDomain> {
        let spec = DomainSpec {
            bounds: radial_bounds(model, r2, cells, &[0.0; 3]),
            cells,
            inner: Some(RadialRegion::wulff(model, r1, &[0.0; 3])),
            outer: Some(RadialRegion::wulff(model, r2, &[0.0; 3])),
            ghost_interp: GhostInterp::Linear,
        };
        Arc::new(VoxelDomain::build(spec).unwrap())
    }

    #[test]
    fn equal_boundary_values_give_constant_field() {
        let m = euclid();
        let d = annulus_domain(&m, 1.0, 2.0, 16);
        let (field, stats) = solve_dirichlet(d, &m, 0.7, 0.7, &SolverOptions::default()).unwrap();
        let (lo, hi) = field.interior_min_max();
        assert!((lo - 0.7).abs() < 1e-10 && (hi - 0.7).abs() < 1e-10);
        assert!(stats.iters <= 2);
    }

    #[test]
    #[ignore]
    fn debug_annulus_convergence() {
        let m = euclid();
        for cells in [16usize, 24, 32, 48, 64] {
            let d = annulus_domain(&m, 1.0, 2.0, cells);
            let t0 = std::time::Instant::now();
            let (field, stats) =
                solve_dirichlet(d.clone(), &m, 1.0, 0.0, &SolverOptions::default()).unwrap();
            let mut worst = 0.0f64;
            for idx in 0..d.n_nodes() {
                if d.class[idx] != NodeClass::Interior {
                    continue;
                }
                let x = d.node_coords(idx);
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                let exact = 2.0 / r - 1.0;
                worst = worst.max((field.values[idx] - exact).abs());
            }
            // flux at inner boundary
            let grid = std::sync::Arc::new(SphereGrid::standard(3, 16, 32).unwrap());
            let body = ConvexBody::euclidean_ball(1.0, &[0.0; 3], grid).unwrap();
            let flux = crate::pde::flux::boundary_flux(
                &field,
                &m,
                &body,
                &crate::pde::flux::FluxOptions::default(),
            )
            .unwrap();
            eprintln!(
                "cells {cells:3} sup_err {worst:.5} J {:.5} flux_mean {:.4} cv {:.4} iters {} wall {:?}",
                stats.quadratic_energy,
                flux.mean,
                flux.cv,
                stats.iters,
                t0.elapsed()
            );
        }
    }

    #[test]
    fn euclidean_annulus_matches_closed_form() {
        let m = euclid();
        let d = annulus_domain(&m, 1.0, 2.0, 24);
        let (field, stats) =
            solve_dirichlet(d.clone(), &m, 1.0, 0.0, &SolverOptions::default()).unwrap();
        assert!(stats.max_principle_excess <= 1e-10, "{stats:?}");
        // u = 2/|x| - 1
        let mut worst = 0.0f64;
        for idx in 0..d.n_nodes() {
            if d.class[idx] != NodeClass::Interior {
                continue;
            }
            let x = d.node_coords(idx);
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let exact = 2.0 / r - 1.0;
            worst = worst.max((field.values[idx] - exact).abs());
        }
        assert!(worst < 0.02, "sup error {worst}");
    }

    #[test]
    fn comparison_principle_between_boundary_data() {
        let m = euclid();
        let d = annulus_domain(&m, 1.0, 2.0, 12);
        let (f1, _) = solve_dirichlet(d.clone(), &m, 0.5, 0.0, &SolverOptions::default()).unwrap();
        let (f2, _) = solve_dirichlet(d.clone(), &m, 1.0, 0.2, &SolverOptions::default()).unwrap();
        for idx in 0..d.n_nodes() {
            if d.class[idx] == NodeClass::Interior {
                assert!(f1.values[idx] <= f2.values[idx] + 1e-10);
            }
        }
    }

    #[test]
    fn unregularized_p4_rejected() {
        let p4 = NormModel::pnorm(3, 4.0, vec![1.0; 3]).unwrap();
        let d = annulus_domain(&euclid(), 1.0, 2.0, 8);
        assert!(solve_dirichlet(d, &p4, 1.0, 0.0, &SolverOptions::default()).is_err());
    }

    #[test]
    fn exterior_ball_solution_and_extrapolation() {
        let m = euclid();
        let grid = Arc::new(SphereGrid::standard(3, 24, 48).unwrap());
        let body = ConvexBody::euclidean_ball(1.0, &[0.0; 3], grid).unwrap();
        let sol =
            solve_exterior_capacity(&body, &m, &[3.0, 6.0], 32, &SolverOptions::default()).unwrap();
        assert!(sol.monotonicity_checked);
        // u -> 1/|x| after correction
        let d = &sol.corrected.domain;
        let mut worst = 0.0f64;
        for idx in 0..d.n_nodes() {
            if d.class[idx] != NodeClass::Interior {
                continue;
            }
            let x = d.node_coords(idx);
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            if r > 2.5 {
                continue;
            }
            worst = worst.max((sol.corrected.values[idx] - 1.0 / r).abs());
        }
        assert!(worst < 0.05, "sup error {worst}");
        // Cap = 4π for the unit ball
        assert_relative_eq!(
            sol.cap_extrapolated,
            4.0 * std::f64::consts::PI,
            max_relative = 0.05
        );
        // strict bounds 0 < u < 1
        let (lo, hi) = sol.corrected.interior_min_max();
        assert!(lo > 0.0 && hi < 1.0);
    }

    #[test]
    fn torsion_ball_matches_quadratic() {
        let m = euclid();
        let grid = Arc::new(SphereGrid::standard(3, 24, 48).unwrap());
        let body = ConvexBody::euclidean_ball(1.0, &[0.0; 3], grid).unwrap();
        let sol = solve_torsion(&body, &m, 24, &SolverOptions::default()).unwrap();
        assert!(sol.positivity_excess <= 1e-10);
        let d = &sol.field.domain;
        let mut worst = 0.0f64;
        for idx in 0..d.n_nodes() {
            if d.class[idx] != NodeClass::Interior {
                continue;
            }
            let x = d.node_coords(idx);
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let exact = (r2 - 1.0) / 6.0;
            worst = worst.max((sol.field.values[idx] - exact).abs());
        }
        // scale of ψ is 1/6
        assert!(worst < 0.03 / 6.0, "sup error {worst}");
    }
}
