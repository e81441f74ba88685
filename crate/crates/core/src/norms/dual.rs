//! Numeric evaluation of the dual norm `H_0(x) = sup_{ξ≠0} <x,ξ>/H(ξ)`.
//!
//! The objective is 0-homogeneous, so the sup is taken over the unit sphere:
//! coarse candidates come from a refinable geodesic grid (icosphere for
//! `N = 3`, a product grid otherwise), the best few are polished by a
//! projected Newton iteration in the tangent plane.

use crate::error::{Error, Result};
use crate::norms::NormModel;
use crate::sphere::{dot, norm, tangent_frame, SphereGrid};
use std::collections::BTreeMap;

/// Result of a numeric dual-norm evaluation.
#[derive(Debug, Clone)]
pub struct DualSolve {
    pub value: f64,
    /// Unit maximizer direction on the sphere.
    pub maximizer: Vec<f64>,
    /// Norm of the tangential gradient at the maximizer, relative to |x|.
    pub first_order_residual: f64,
}

// Tighter than the 1e-10 first-order target so that finite differences of
// the dual gradient stay quiet.
pub const DUAL_TOL: f64 = 1e-12;

/// Evaluate `H_0(x)` numerically with multi-start projected Newton.
pub fn numeric_dual(model: &NormModel, x: &[f64]) -> Result<DualSolve> {
    let starts = coarse_starts(model, x, 4);
    numeric_dual_with_starts(model, x, &starts, DUAL_TOL)
}

/// Same as [`numeric_dual`] but seeded with explicit start directions
/// (used to warm-start sweeps over neighboring points).
pub fn numeric_dual_with_starts(
    model: &NormModel,
    x: &[f64],
    starts: &[Vec<f64>],
    tol: f64,
) -> Result<DualSolve> {
    let nx = norm(x);
    if nx == 0.0 {
        return Ok(DualSolve {
            value: 0.0,
            maximizer: unit_axis(model.dim()),
            first_order_residual: 0.0,
        });
    }
    let mut best: Option<DualSolve> = None;
    let mut best_unconverged = f64::NEG_INFINITY;
    for s in starts {
        match newton_polish(model, x, s, tol) {
            Some(sol) => {
                if best.as_ref().map_or(true, |b| sol.value > b.value) {
                    best = Some(sol);
                }
            }
            None => {
                let f = objective(model, x, s);
                best_unconverged = best_unconverged.max(f);
            }
        }
    }
    match best {
        Some(sol) => Ok(sol),
        None => Err(Error::Convergence {
            context: format!("numeric dual norm at |x| = {nx:.3e}"),
            best_residual: best_unconverged,
            history: vec![],
        }),
    }
}

fn unit_axis(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    v
}

fn objective(model: &NormModel, x: &[f64], xi: &[f64]) -> f64 {
    dot(x, xi) / model.h(xi)
}

/// Coarse candidate directions: the best `k` geodesic-grid nodes plus ±x̂.
fn coarse_starts(model: &NormModel, x: &[f64], k: usize) -> Vec<Vec<f64>> {
    let dim = model.dim();
    let grid = candidate_directions(dim);
    let mut scored: Vec<(f64, usize)> = grid
        .iter()
        .enumerate()
        .map(|(i, xi)| (objective(model, x, xi), i))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut starts: Vec<Vec<f64>> = scored
        .iter()
        .take(k)
        .map(|&(_, i)| grid[i].clone())
        .collect();
    let nx = norm(x);
    if nx > 0.0 {
        starts.push(x.iter().map(|c| c / nx).collect());
    }
    starts
}

fn candidate_directions(dim: usize) -> Vec<Vec<f64>> {
    if dim == 3 {
        icosphere(2)
    } else {
        let grid = SphereGrid::standard(dim, 8, 16)
            .or_else(|_| SphereGrid::standard(dim, 8, 16))
            .expect("coarse grid");
        grid.iter_nodes().map(|n| n.to_vec()).collect()
    }
}

/// Projected Newton ascent of `<x,ξ>/H(ξ)` on the unit sphere.
fn newton_polish(model: &NormModel, x: &[f64], start: &[f64], tol: f64) -> Option<DualSolve> {
    let dim = model.dim();
    let nx = norm(x);
    let mut xi = start.to_vec();
    // evenness of H: work on the hemisphere where the objective is positive
    if dot(x, &xi) < 0.0 {
        for c in xi.iter_mut() {
            *c = -*c;
        }
    }
    let mut f = objective(model, x, &xi);
    for _ in 0..80 {
        let h = model.h(&xi);
        let gh = model.grad_h(&xi).ok()?;
        // ∇f = (x - f ∇H)/H, tangential by 0-homogeneity
        let gf: Vec<f64> = (0..dim).map(|i| (x[i] - f * gh[i]) / h).collect();
        let frame = tangent_frame(&xi);
        let td = dim - 1;
        let mut gt = vec![0.0; td];
        for a in 0..td {
            gt[a] = dot(&frame[a * dim..(a + 1) * dim], &gf);
        }
        let res = norm(&gt) / nx;
        if res <= tol {
            return Some(DualSolve {
                value: f,
                maximizer: xi,
                first_order_residual: res,
            });
        }
        // tangential Hessian: E (∇²f) Eᵀ with
        // ∇²f = -(∇f ∇Hᵀ + ∇H ∇fᵀ)/H - f ∇²H / H
        let hh = model.hess_h(&xi).ok()?;
        let mut ht = vec![0.0; td * td];
        for a in 0..td {
            for b in 0..td {
                let ea = &frame[a * dim..(a + 1) * dim];
                let eb = &frame[b * dim..(b + 1) * dim];
                let mut quad = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        quad += ea[i] * hh[(i, j)] * eb[j];
                    }
                }
                let v = -(dot(ea, &gf) * dot(eb, &gh) + dot(ea, &gh) * dot(eb, &gf)) / h
                    - f * quad / h;
                ht[a * td + b] = v;
            }
        }
        // Newton step if concave, otherwise gradient ascent
        let step = solve_descent(&ht, &gt, td).unwrap_or_else(|| {
            let s = 0.5 * h / nx.max(1e-300);
            gt.iter().map(|g| g * s).collect()
        });
        // inside the Newton contraction regime the objective sits on its
        // float plateau; accept the step without an improvement test
        let tiny_step = norm(&step) < 1e-7;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut cand = xi.clone();
            for a in 0..td {
                let e = &frame[a * dim..(a + 1) * dim];
                for i in 0..dim {
                    cand[i] += scale * step[a] * e[i];
                }
            }
            let n = norm(&cand);
            for c in cand.iter_mut() {
                *c /= n;
            }
            let fc = objective(model, x, &cand);
            if fc >= f || (tiny_step && fc >= f - 1e-13 * f.abs()) {
                xi = cand;
                f = fc;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // stuck on a flat spot; report as converged only if the residual is tiny
            return if res <= tol * 100.0 {
                Some(DualSolve {
                    value: f,
                    maximizer: xi,
                    first_order_residual: res,
                })
            } else {
                None
            };
        }
    }
    None
}

/// Solve `-H s = g` for a maximization Newton step; `None` if `H` is not
/// negative definite.
fn solve_descent(ht: &[f64], gt: &[f64], td: usize) -> Option<Vec<f64>> {
    match td {
        1 => {
            if ht[0] < 0.0 {
                Some(vec![-gt[0] / ht[0]])
            } else {
                None
            }
        }
        2 => {
            let (a, b, c, d) = (ht[0], ht[1], ht[2], ht[3]);
            let det = a * d - b * c;
            if a < 0.0 && det > 0.0 {
                Some(vec![
                    -(d * gt[0] - b * gt[1]) / det,
                    -(a * gt[1] - c * gt[0]) / det,
                ])
            } else {
                None
            }
        }
        _ => {
            let m = nalgebra::DMatrix::from_row_slice(td, td, ht);
            let ev = m.clone().symmetric_eigen();
            if ev.eigenvalues.iter().any(|&l| l >= 0.0) {
                return None;
            }
            let g = nalgebra::DVector::from_column_slice(gt);
            m.lu().solve(&g).map(|s| (-s).iter().cloned().collect())
        }
    }
}

/// Vertices of a subdivided icosahedron projected to the unit sphere.
/// Refinement keeps previous vertices, so vertex sets are nested across levels.
pub fn icosphere(level: usize) -> Vec<Vec<f64>> {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut verts: Vec<[f64; 3]> = raw
        .into_iter()
        .map(|v| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        })
        .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0u32; 3];
            for e in 0..3 {
                let a = f[e];
                let b = f[(e + 1) % 3];
                let key = (a.min(b), a.max(b));
                let idx = *midpoint.entry(key).or_insert_with(|| {
                    let va = verts[a as usize];
                    let vb = verts[b as usize];
                    let mut m = [
                        (va[0] + vb[0]) / 2.0,
                        (va[1] + vb[1]) / 2.0,
                        (va[2] + vb[2]) / 2.0,
                    ];
                    let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                    m = [m[0] / n, m[1] / n, m[2] / n];
                    verts.push(m);
                    (verts.len() - 1) as u32
                });
                mids[e] = idx;
            }
            next_faces.push([f[0], mids[0], mids[2]]);
            next_faces.push([f[1], mids[1], mids[0]]);
            next_faces.push([f[2], mids[2], mids[1]]);
            next_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = next_faces;
    }
    verts.into_iter().map(|v| v.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts_and_unit_norm() {
        assert_eq!(icosphere(0).len(), 12);
        assert_eq!(icosphere(1).len(), 42);
        assert_eq!(icosphere(2).len(), 162);
        for v in icosphere(2) {
            assert!((norm(&v) - 1.0).abs() < 1e-12);
        }
    }
}
