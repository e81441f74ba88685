//! Nodal scalar fields on a voxel domain, interpolation, and the flat binary
//! serialization format.
//!
//! On-disk layout (little endian):
//! `u32×3` node dimensions, `f64×3` spacing, `f64×3` origin, `u32` metadata
//! length, that many bytes of UTF-8 JSON metadata, then `nx·ny·nz` payload
//! `f64` values in x-fastest order. A human-readable JSON summary is written
//! alongside as `<path>.json`.

use crate::error::{Error, Result};
use crate::pde::domain::{NodeClass, VoxelDomain};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct FieldMeta {
    pub problem: String,
    pub norm: String,
    pub bc_inner: Option<f64>,
    pub bc_outer: Option<f64>,
    pub grid_cells: usize,
    pub r_inner: Option<f64>,
    pub r_outer: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    pub domain: Arc<VoxelDomain>,
    /// One value per node, x-fastest; ghost and Dirichlet values filled in.
    pub values: Vec<f64>,
    pub meta: FieldMeta,
}

impl ScalarField {
    pub fn constant(domain: Arc<VoxelDomain>, value: f64) -> ScalarField {
        let n = domain.n_nodes();
        ScalarField {
            domain,
            values: vec![value; n],
            meta: FieldMeta::default(),
        }
    }

    pub fn interior_min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (idx, v) in self.values.iter().enumerate() {
            if self.domain.class[idx] == NodeClass::Interior {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        (lo, hi)
    }

    fn locate(&self, x: &[f64; 3]) -> Option<([usize; 3], [f64; 3])> {
        let d = &self.domain;
        let mut cell = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let t = (x[a] - d.origin[a]) / d.spacing[a];
            if !(t >= 0.0) || t > (d.dims[a] - 1) as f64 {
                return None;
            }
            let i = (t.floor() as usize).min(d.dims[a] - 2);
            cell[a] = i;
            frac[a] = t - i as f64;
        }
        Some((cell, frac))
    }

    /// Trilinear interpolation. Returns the value and `true` when every
    /// stencil node is interior or ghost (clean data).
    pub fn trilinear(&self, x: &[f64; 3]) -> Option<(f64, bool)> {
        let (cell, t) = self.locate(x)?;
        let d = &self.domain;
        let mut clean = true;
        let mut acc = 0.0;
        for c in 0..8usize {
            let ix = cell[0] + (c & 1);
            let iy = cell[1] + ((c >> 1) & 1);
            let iz = cell[2] + ((c >> 2) & 1);
            let idx = d.node_index(ix, iy, iz);
            if d.class[idx] == NodeClass::Exterior {
                clean = false;
            }
            let w = (if c & 1 == 1 { t[0] } else { 1.0 - t[0] })
                * (if c & 2 == 2 { t[1] } else { 1.0 - t[1] })
                * (if c & 4 == 4 { t[2] } else { 1.0 - t[2] });
            acc += w * self.values[idx];
        }
        Some((acc, clean))
    }

    /// Tensor-product quadratic (3³ Lagrange) interpolation centered on the
    /// node nearest to `x`. Falls back to `None` at the lattice edge.
    pub fn triquadratic(&self, x: &[f64; 3]) -> Option<(f64, bool)> {
        let d = &self.domain;
        let mut center = [0usize; 3];
        let mut s = [0.0f64; 3];
        for a in 0..3 {
            let t = (x[a] - d.origin[a]) / d.spacing[a];
            if !(t >= 1.0) || t > (d.dims[a] - 2) as f64 {
                return None;
            }
            let i = t.round() as usize;
            let i = i.clamp(1, d.dims[a] - 2);
            center[a] = i;
            s[a] = t - i as f64; // in [-1, 1]
        }
        let w_axis = |s: f64| -> [f64; 3] {
            [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)]
        };
        let wx = w_axis(s[0]);
        let wy = w_axis(s[1]);
        let wz = w_axis(s[2]);
        let mut clean = true;
        let mut acc = 0.0;
        for dz in 0..3usize {
            for dy in 0..3usize {
                for dx in 0..3usize {
                    let idx = d.node_index(center[0] + dx - 1, center[1] + dy - 1, center[2] + dz - 1);
                    if d.class[idx] == NodeClass::Exterior {
                        clean = false;
                    }
                    acc += wx[dx] * wy[dy] * wz[dz] * self.values[idx];
                }
            }
        }
        Some((acc, clean))
    }

    /// Centered-difference gradient at an interior node whose six axis
    /// neighbors are usable (interior or ghost).
    pub fn node_gradient(&self, idx: usize) -> Option<[f64; 3]> {
        let d = &self.domain;
        if d.class[idx] != NodeClass::Interior {
            return None;
        }
        let nx = d.dims[0];
        let nxny = d.dims[0] * d.dims[1];
        let strides = [1usize, nx, nxny];
        let mut g = [0.0; 3];
        for a in 0..3 {
            let plus = idx + strides[a];
            let minus = idx.checked_sub(strides[a])?;
            if d.class[plus] == NodeClass::Exterior || d.class[minus] == NodeClass::Exterior {
                return None;
            }
            g[a] = (self.values[plus] - self.values[minus]) / (2.0 * d.spacing[a]);
        }
        Some(g)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let meta_json = serde_json::to_vec(&self.meta)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for a in 0..3 {
            f.write_all(&(self.domain.dims[a] as u32).to_le_bytes())?;
        }
        for a in 0..3 {
            f.write_all(&self.domain.spacing[a].to_le_bytes())?;
        }
        for a in 0..3 {
            f.write_all(&self.domain.origin[a].to_le_bytes())?;
        }
        f.write_all(&(meta_json.len() as u32).to_le_bytes())?;
        f.write_all(&meta_json)?;
        for v in &self.values {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        // sidecar summary
        let (lo, hi) = self.interior_min_max();
        let summary = serde_json::json!({
            "meta": self.meta,
            "dims": self.domain.dims,
            "spacing": self.domain.spacing,
            "origin": self.domain.origin,
            "interior_min": lo,
            "interior_max": hi,
            "unknowns": self.domain.n_unknowns(),
        });
        let sidecar = path.with_extension(format!(
            "{}json",
            path.extension()
                .map(|e| format!("{}.", e.to_string_lossy()))
                .unwrap_or_default()
        ));
        std::fs::write(sidecar, serde_json::to_string_pretty(&summary).unwrap())?;
        Ok(())
    }

    /// Read back dimensions, spacing, origin, metadata and payload. The
    /// domain topology (classification) is not stored; the caller supplies a
    /// compatible domain when it needs one.
    pub fn read_binary(path: &Path) -> Result<(FieldMeta, [usize; 3], [f64; 3], [f64; 3], Vec<f64>)> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut u32buf = [0u8; 4];
        let mut f64buf = [0u8; 8];
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            f.read_exact(&mut u32buf)?;
            *d = u32::from_le_bytes(u32buf) as usize;
        }
        let mut spacing = [0.0f64; 3];
        for s in spacing.iter_mut() {
            f.read_exact(&mut f64buf)?;
            *s = f64::from_le_bytes(f64buf);
        }
        let mut origin = [0.0f64; 3];
        for o in origin.iter_mut() {
            f.read_exact(&mut f64buf)?;
            *o = f64::from_le_bytes(f64buf);
        }
        f.read_exact(&mut u32buf)?;
        let len = u32::from_le_bytes(u32buf) as usize;
        let mut meta_bytes = vec![0u8; len];
        f.read_exact(&mut meta_bytes)?;
        let meta: FieldMeta = serde_json::from_slice(&meta_bytes)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let n = dims[0] * dims[1] * dims[2];
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            f.read_exact(&mut f64buf)?;
            values.push(f64::from_le_bytes(f64buf));
        }
        Ok((meta, dims, spacing, origin, values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interpolation_reproduces_smooth_fields() {
        let domain =
            Arc::new(VoxelDomain::plain_box([(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)], 16).unwrap());
        let mut field = ScalarField::constant(domain.clone(), 0.0);
        for idx in 0..domain.n_nodes() {
            let x = domain.node_coords(idx);
            field.values[idx] = 1.0 + 2.0 * x[0] - 0.5 * x[1] + 0.25 * x[2];
        }
        // trilinear is exact on affine fields
        let p = [0.123, -0.456, 0.789];
        let (v, clean) = field.trilinear(&p).unwrap();
        assert!(clean);
        assert_relative_eq!(v, 1.0 + 2.0 * p[0] - 0.5 * p[1] + 0.25 * p[2], epsilon = 1e-13);
        // triquadratic is exact on quadratics
        for idx in 0..domain.n_nodes() {
            let x = domain.node_coords(idx);
            field.values[idx] = x[0] * x[0] + 0.5 * x[1] * x[2];
        }
        let (v, _) = field.triquadratic(&p).unwrap();
        assert_relative_eq!(v, p[0] * p[0] + 0.5 * p[1] * p[2], epsilon = 1e-12);
    }

    #[test]
    fn binary_round_trip() {
        let domain =
            Arc::new(VoxelDomain::plain_box([(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)], 6).unwrap());
        let mut field = ScalarField::constant(domain.clone(), 0.0);
        for (i, v) in field.values.iter_mut().enumerate() {
            *v = i as f64 * 0.5 - 3.0;
        }
        field.meta.problem = "test".into();
        field.meta.norm = "euclidean".into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.fbin");
        field.write_binary(&path).unwrap();
        let (meta, dims, spacing, origin, values) = ScalarField::read_binary(&path).unwrap();
        assert_eq!(meta.problem, "test");
        assert_eq!(dims, domain.dims);
        assert_eq!(spacing, domain.spacing);
        assert_eq!(origin, domain.origin);
        assert_eq!(values, field.values);
        assert!(path.with_extension("fbin.json").exists());
    }
}
