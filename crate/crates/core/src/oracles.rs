//! Independent brute-force oracles used to cross-check the primary
//! quadrature and solver paths. These deliberately use different
//! discretizations (polynomial fits, nested sampling, Monte-Carlo counting,
//! triangulated meshes) so that agreement is evidence rather than tautology.

use crate::bodies::ConvexBody;
use crate::error::{Error, Result};
use crate::norms::{icosphere, NormModel};
use crate::sphere::{dot, norm, tangent_frame, SphereGrid};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Mixed volumes of two bodies in `R³` recovered from the cubic volume
/// polynomial `|K + λL| = |K| + 3λ V(L,K,K) + 3λ² V(L,L,K) + λ³ |L|`.
#[derive(Debug, Clone, Serialize)]
pub struct MixedVolumeFit {
    pub vol_k: f64,
    pub vol_l: f64,
    /// `V(L,K,K)`
    pub v_lkk: f64,
    /// `V(L,L,K)`
    pub v_llk: f64,
    pub condition: f64,
    pub rescaled: bool,
}

/// Fit the volume polynomial of `|K + λ L|` over the given weights.
pub fn mixed_volumes_by_fit(
    body_k: &ConvexBody,
    body_l: &ConvexBody,
    lambdas: &[f64],
) -> Result<MixedVolumeFit> {
    if body_k.dim() != 3 {
        return Err(Error::UnsupportedDimension {
            dim: body_k.dim(),
            reason: "polynomial mixed-volume fit is implemented for N = 3".into(),
        });
    }
    if lambdas.len() < 4 {
        return Err(Error::invalid("need at least 4 lambda values"));
    }
    let mut lams = lambdas.to_vec();
    let mut rescaled = false;
    loop {
        let (coeffs, condition) = fit_cubic(body_k, body_l, &lams)?;
        if condition <= 1e8 {
            return Ok(MixedVolumeFit {
                vol_k: coeffs[0],
                v_lkk: coeffs[1] / 3.0,
                v_llk: coeffs[2] / 3.0,
                vol_l: coeffs[3],
                condition,
                rescaled,
            });
        }
        if rescaled {
            return Err(Error::Convergence {
                context: "mixed-volume fit stays ill-conditioned after rescaling".into(),
                best_residual: condition,
                history: vec![],
            });
        }
        // spread the weights geometrically around 1
        let n = lams.len();
        lams = (0..n)
            .map(|i| 0.5 * 2f64.powf(i as f64 / (n as f64 - 1.0) * 2.0))
            .collect();
        rescaled = true;
    }
}

fn fit_cubic(
    body_k: &ConvexBody,
    body_l: &ConvexBody,
    lambdas: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let m = lambdas.len();
    let mut design = DMatrix::zeros(m, 4);
    let mut target = DVector::zeros(m);
    for (row, &lam) in lambdas.iter().enumerate() {
        for c in 0..4 {
            design[(row, c)] = lam.powi(c as i32);
        }
        let sum = body_k.minkowski_sum(&body_l.scale(lam)?)?;
        target[row] = sum.volume();
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin.max(1e-300);
    let sol = svd
        .solve(&target, 1e-14)
        .map_err(|e| Error::Convergence {
            context: format!("cubic fit solve failed: {e}"),
            best_residual: condition,
            history: vec![],
        })?;
    Ok((sol.iter().cloned().collect(), condition))
}

/// `H_0(x)` by maximizing `<x,ξ>/H(ξ)` over nested sphere samplings:
/// level 0 is a global geodesic grid, each further level samples a shrinking
/// cap around the best direction found so far. The running best makes the
/// sequence monotone nondecreasing; no derivatives are used.
pub fn dual_norm_by_sampling(model: &NormModel, x: &[f64], refinement_levels: usize) -> Vec<f64> {
    let dim = model.dim();
    let mut out = Vec::with_capacity(refinement_levels + 1);
    let global: Vec<Vec<f64>> = if dim == 3 {
        icosphere(3)
    } else {
        SphereGrid::standard(dim, 16, 32)
            .expect("sampling grid")
            .iter_nodes()
            .map(|v| v.to_vec())
            .collect()
    };
    let mut best = f64::NEG_INFINITY;
    let mut best_dir = global[0].clone();
    for d in &global {
        let f = dot(x, d) / model.h(d);
        if f > best {
            best = f;
            best_dir = d.clone();
        }
    }
    out.push(best);
    let mut radius = 0.2f64;
    for _ in 1..=refinement_levels {
        let frame = tangent_frame(&best_dir);
        let td = dim - 1;
        let steps = 6i32;
        let center = best_dir.clone();
        let mut offsets = vec![vec![0.0f64; td]];
        // full tangent lattice for td <= 2, axis sweep otherwise
        if td <= 2 {
            let mut lattice = Vec::new();
            let mut idx = vec![-steps; td];
            loop {
                lattice.push(idx.iter().map(|&i| i as f64 / steps as f64).collect::<Vec<f64>>());
                let mut k = 0;
                loop {
                    idx[k] += 1;
                    if idx[k] <= steps {
                        break;
                    }
                    idx[k] = -steps;
                    k += 1;
                    if k == td {
                        break;
                    }
                }
                if k == td {
                    break;
                }
            }
            offsets = lattice;
        } else {
            for a in 0..td {
                for s in -steps..=steps {
                    let mut o = vec![0.0; td];
                    o[a] = s as f64 / steps as f64;
                    offsets.push(o);
                }
            }
        }
        for o in &offsets {
            let mut cand = center.clone();
            for a in 0..td {
                let e = &frame[a * dim..(a + 1) * dim];
                for i in 0..dim {
                    cand[i] += radius * o[a] * e[i];
                }
            }
            let n = norm(&cand);
            for c in cand.iter_mut() {
                *c /= n;
            }
            let f = dot(x, &cand) / model.h(&cand);
            if f > best {
                best = f;
                best_dir = cand;
            }
        }
        out.push(best);
        radius /= 8.0;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloVolume {
    pub estimate: f64,
    pub stderr: f64,
    pub n_points: u64,
    pub seed: u64,
    pub threads: usize,
}

/// Monte-Carlo volume by support-criterion membership counting:
/// `x ∈ Ω  iff  <x,θ> <= h(θ)` for all tested directions. A coarse direction
/// set rejects/accepts clear points, ambiguous ones go to a fine set, so the
/// test stays conservative under refinement. Sampling is sharded with
/// per-shard seeds and merged in fixed order.
pub fn montecarlo_volume(
    body: &ConvexBody,
    n_points: u64,
    seed: u64,
    threads: usize,
) -> Result<MonteCarloVolume> {
    if body.dim() != 3 {
        return Err(Error::UnsupportedDimension {
            dim: body.dim(),
            reason: "Monte-Carlo membership oracle is implemented for N = 3".into(),
        });
    }
    let threads = threads.max(1);
    // bounding box from the support function along the axes
    let mut half = [0.0f64; 3];
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let mut me = [0.0; 3];
        me[i] = -1.0;
        half[i] = body.support(&e).max(body.support(&me));
    }
    let box_vol = 8.0 * half[0] * half[1] * half[2];

    let coarse: Vec<(Vec<f64>, f64)> = icosphere(2)
        .into_iter()
        .map(|d| {
            let h = body.support(&d);
            (d, h)
        })
        .collect();
    let fine: Vec<(Vec<f64>, f64)> = icosphere(5)
        .into_iter()
        .map(|d| {
            let h = body.support(&d);
            (d, h)
        })
        .collect();
    // margin covering the gap between the circumscribed polytope gauge and
    // the true gauge at icosphere level 2 (cap half-angle ~ 0.2 rad)
    let coarse_margin = 0.05;

    let shards = threads as u64;
    let per_shard = n_points / shards;
    let mut counts: Vec<u64> = vec![0; threads];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for shard in 0..threads {
            let coarse = &coarse;
            let fine = &fine;
            let n = if shard == threads - 1 {
                n_points - per_shard * (shards - 1)
            } else {
                per_shard
            };
            handles.push(scope.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(shard as u64));
                let mut inside = 0u64;
                let mut p = [0.0f64; 3];
                for _ in 0..n {
                    for i in 0..3 {
                        p[i] = rng.gen_range(-half[i]..half[i]);
                    }
                    if member(&p, coarse, fine, coarse_margin) {
                        inside += 1;
                    }
                }
                inside
            }));
        }
        for (i, h) in handles.into_iter().enumerate() {
            counts[i] = h.join().expect("monte-carlo shard");
        }
    });
    let inside: u64 = counts.iter().sum();
    let p_hat = inside as f64 / n_points as f64;
    let estimate = p_hat * box_vol;
    let stderr = box_vol * (p_hat * (1.0 - p_hat) / n_points as f64).sqrt();
    Ok(MonteCarloVolume {
        estimate,
        stderr,
        n_points,
        seed,
        threads,
    })
}

fn member(p: &[f64; 3], coarse: &[(Vec<f64>, f64)], fine: &[(Vec<f64>, f64)], margin: f64) -> bool {
    // outer-polytope gauge: max <p,θ>/h(θ)
    let mut g = 0.0f64;
    for (d, h) in coarse {
        g = g.max((p[0] * d[0] + p[1] * d[1] + p[2] * d[2]) / h);
    }
    if g > 1.0 {
        return false;
    }
    if g < 1.0 - margin {
        return true;
    }
    let mut g = 0.0f64;
    for (d, h) in fine {
        g = g.max((p[0] * d[0] + p[1] * d[1] + p[2] * d[2]) / h);
    }
    g <= 1.0
}

/// Triangulated-surface integral of `H(ν)` over `∂Ω` on an independent
/// latitude/longitude mesh of the Gauss-map parametrization.
pub fn perimeter_by_mesh(body: &ConvexBody, model: &NormModel, n_lat: usize, n_lon: usize) -> Result<f64> {
    if body.dim() != 3 {
        return Err(Error::UnsupportedDimension {
            dim: body.dim(),
            reason: "mesh oracle is implemented for N = 3".into(),
        });
    }
    // vertex (i,j): polar φ_i ∈ (0,π), azimuth λ_j; poles added separately
    let vertex = |phi: f64, lam: f64| -> Result<Vec<f64>> {
        let theta = [phi.sin() * lam.cos(), phi.sin() * lam.sin(), phi.cos()];
        body.boundary_point(&theta)
    };
    let mut total = 0.0;
    for i in 0..n_lat {
        let phi0 = std::f64::consts::PI * (i as f64 + 0.0) / n_lat as f64;
        let phi1 = std::f64::consts::PI * (i as f64 + 1.0) / n_lat as f64;
        // avoid the exact poles where the chart frame degenerates
        let phi0 = phi0.max(1e-6);
        let phi1 = phi1.min(std::f64::consts::PI - 1e-6);
        for j in 0..n_lon {
            let lam0 = 2.0 * std::f64::consts::PI * j as f64 / n_lon as f64;
            let lam1 = 2.0 * std::f64::consts::PI * (j as f64 + 1.0) / n_lon as f64;
            let quad = [
                vertex(phi0, lam0)?,
                vertex(phi1, lam0)?,
                vertex(phi1, lam1)?,
                vertex(phi0, lam1)?,
            ];
            for tri in [[0usize, 1, 2], [0, 2, 3]] {
                let a = &quad[tri[0]];
                let b = &quad[tri[1]];
                let c = &quad[tri[2]];
                let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                let cross = [
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ];
                let area2 = norm(&cross);
                if area2 == 0.0 {
                    continue;
                }
                let nu: Vec<f64> = cross.iter().map(|c| c / area2).collect();
                // orient outward: the centroid direction dot nu should be > 0
                let centroid = [
                    (a[0] + b[0] + c[0]) / 3.0 - body.center()[0],
                    (a[1] + b[1] + c[1]) / 3.0 - body.center()[1],
                    (a[2] + b[2] + c[2]) / 3.0 - body.center()[2],
                ];
                let sign = if dot(&nu, &centroid) >= 0.0 { 1.0 } else { -1.0 };
                let nu: Vec<f64> = nu.iter().map(|c| c * sign).collect();
                total += 0.5 * area2 * model.h(&nu);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::SphereGrid;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid() -> Arc<SphereGrid> {
        Arc::new(SphereGrid::standard(3, 48, 96).unwrap())
    }

    #[test]
    fn fit_equal_balls() {
        let b = ConvexBody::euclidean_ball(1.0, &[0.0; 3], grid()).unwrap();
        let fit = mixed_volumes_by_fit(&b, &b, &[0.25, 0.5, 1.0, 1.5, 2.0]).unwrap();
        let v = 4.0 * PI / 3.0;
        assert_relative_eq!(fit.vol_k, v, max_relative = 1e-6);
        assert_relative_eq!(fit.vol_l, v, max_relative = 1e-6);
        assert_relative_eq!(fit.v_lkk, v, max_relative = 1e-6);
        assert_relative_eq!(fit.v_llk, v, max_relative = 1e-6);
    }

    #[test]
    fn fit_ball_r2_against_expansion() {
        let k = ConvexBody::euclidean_ball(2.0, &[0.0; 3], grid()).unwrap();
        let l = ConvexBody::euclidean_ball(1.0, &[0.0; 3], grid()).unwrap();
        let fit = mixed_volumes_by_fit(&k, &l, &[0.25, 0.5, 1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(fit.v_lkk, 16.0 * PI / 3.0, max_relative = 1e-6);
        assert_relative_eq!(fit.v_llk, 8.0 * PI / 3.0, max_relative = 1e-6);
    }

    #[test]
    fn fit_agrees_with_quadrature_formulas() {
        let g = grid();
        let m = NormModel::pnorm(3, 4.0, vec![1.0; 3])
            .unwrap()
            .regularized(0.05)
            .unwrap();
        let k = ConvexBody::ellipsoid(&[1.0, 1.0, 2.0], &[0.0; 3], g.clone()).unwrap();
        let l = ConvexBody::wulff_ball(&m, 1.0, &[0.0; 3], g).unwrap();
        let fit = mixed_volumes_by_fit(&k, &l, &[0.25, 0.5, 1.0, 1.5, 2.0]).unwrap();
        assert_relative_eq!(
            fit.v_lkk,
            k.mixed_volume_vbkk(&m).unwrap(),
            max_relative = 1e-2
        );
        assert_relative_eq!(
            fit.v_llk,
            k.mixed_volume_vbbk(&m).unwrap(),
            max_relative = 1e-2
        );
    }

    #[test]
    fn dual_sampling_monotone_and_convergent() {
        let m = NormModel::euclidean(3).unwrap();
        let x = [0.3, -1.1, 0.7];
        let vals = dual_norm_by_sampling(&m, &x, 4);
        for w in vals.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_relative_eq!(*vals.last().unwrap(), norm(&x), max_relative = 1e-6);
    }

    #[test]
    fn dual_sampling_pnorm_closed_form() {
        let m = NormModel::pnorm(3, 4.0, vec![1.0; 3]).unwrap();
        let vals = dual_norm_by_sampling(&m, &[1.0, 1.0, 1.0], 4);
        assert_relative_eq!(*vals.last().unwrap(), 3f64.powf(0.75), max_relative = 1e-5);
    }

    #[test]
    fn dual_sampling_ellipsoidal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[1.0, 2.0, 3.0]));
        let m = NormModel::ellipsoidal(a).unwrap();
        let x = [0.9, -0.4, 1.3];
        let vals = dual_norm_by_sampling(&m, &x, 4);
        assert_relative_eq!(*vals.last().unwrap(), m.dual(&x).unwrap(), max_relative = 1e-5);
    }

    #[test]
    fn montecarlo_unit_ball() {
        let b = ConvexBody::euclidean_ball(1.0, &[0.0; 3], grid()).unwrap();
        let mc = montecarlo_volume(&b, 400_000, 42, 2).unwrap();
        let exact = 4.0 * PI / 3.0;
        assert!(
            (mc.estimate - exact).abs() <= 3.0 * mc.stderr + 2e-3 * exact,
            "estimate {} ± {} vs {exact}",
            mc.estimate,
            mc.stderr
        );
    }

    #[test]
    fn montecarlo_deterministic_across_thread_counts() {
        let b = ConvexBody::euclidean_ball(1.0, &[0.0; 3], grid()).unwrap();
        let a1 = montecarlo_volume(&b, 100_000, 7, 1).unwrap();
        let a2 = montecarlo_volume(&b, 100_000, 7, 1).unwrap();
        assert_eq!(a1.estimate.to_bits(), a2.estimate.to_bits());
    }

    #[test]
    fn mesh_perimeter_oracle_ellipsoid() {
        let m = NormModel::euclidean(3).unwrap();
        let b = ConvexBody::ellipsoid(&[1.0, 1.0, 2.0], &[0.0; 3], grid()).unwrap();
        let mesh = perimeter_by_mesh(&b, &m, 200, 400).unwrap();
        let quad = b.perimeter_aniso(&m).unwrap();
        assert_relative_eq!(mesh, quad, max_relative = 5e-3);
    }
}
