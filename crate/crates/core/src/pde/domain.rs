//! Voxel domains with level-set boundaries and interpolated Dirichlet ghosts.
//!
//! The computational region is cut out of a Cartesian node lattice by up to
//! two radial level sets: an inner body `{φ_in < 0}` that is excluded and an
//! outer shell `{φ_out < 0}` that contains the domain. Nodes just past a
//! boundary that neighbor interior nodes become Dirichlet ghosts whose values
//! are affine in their interior donors: along each grid line the boundary
//! crossing is located by bisection on the exact level set, and the ghost
//! value is chosen so that interpolation along the line matches the boundary
//! condition at the crossing.

use crate::bodies::ConvexBody;
use crate::error::{Error, Result};
use crate::norms::{numeric_dual_with_starts, NormModel};
use crate::sphere::norm;

/// A 1-homogeneous position gauge, evaluated directly or as a numeric dual.
#[derive(Debug, Clone)]
pub enum Gauge {
    /// Direct evaluation of a position-space norm.
    Closed(NormModel),
    /// Dual of a gradient-space norm without closed form; evaluated by the
    /// projected-Newton sup, warm-started along grid sweeps.
    Numeric(NormModel),
}

impl Gauge {
    /// Gauge of the Wulff ball `B_{H_0}` of a gradient-space norm `H`.
    pub fn wulff_gauge(model: &NormModel) -> Gauge {
        match model.dual_model() {
            Some(d) => Gauge::Closed(d),
            None => Gauge::Numeric(model.clone()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Gauge::Closed(m) => Ok(m.h(x)),
            Gauge::Numeric(m) => Ok(numeric_dual_with_starts(m, x, &default_starts(m, x), 1e-10)?.value),
        }
    }

    fn eval_warm(&self, x: &[f64], warm: &mut Option<Vec<f64>>) -> Result<f64> {
        match self {
            Gauge::Closed(m) => Ok(m.h(x)),
            Gauge::Numeric(m) => {
                if norm(x) == 0.0 {
                    return Ok(0.0);
                }
                if let Some(start) = warm.as_ref() {
                    if let Ok(sol) = numeric_dual_with_starts(m, x, &[start.clone()], 1e-10) {
                        *warm = Some(sol.maximizer.clone());
                        return Ok(sol.value);
                    }
                }
                let sol = numeric_dual_with_starts(m, x, &default_starts(m, x), 1e-10)?;
                *warm = Some(sol.maximizer.clone());
                Ok(sol.value)
            }
        }
    }
}

fn default_starts(m: &NormModel, x: &[f64]) -> Vec<Vec<f64>> {
    let n = norm(x);
    let mut starts: Vec<Vec<f64>> = crate::norms::icosphere(1);
    if n > 0.0 {
        starts.push(x.iter().map(|c| c / n).collect());
    }
    starts
}

/// A level-set region `{x : gauge(x - center) < radius}`.
#[derive(Debug, Clone)]
pub struct RadialRegion {
    pub gauge: Gauge,
    pub radius: f64,
    pub center: Vec<f64>,
}

impl RadialRegion {
    pub fn wulff(model: &NormModel, radius: f64, center: &[f64]) -> RadialRegion {
        RadialRegion {
            gauge: Gauge::wulff_gauge(model),
            radius,
            center: center.to_vec(),
        }
    }

    /// Region enclosed by a single-part convex body (its support is `c·H`,
    /// so its gauge is the dual norm of `H` at radius `c`).
    pub fn from_body(body: &ConvexBody) -> Result<RadialRegion> {
        if body.parts().len() != 1 {
            return Err(Error::invalid(
                "PDE domains need single-part bodies (no Minkowski sums)",
            ));
        }
        let (c, model) = &body.parts()[0];
        Ok(RadialRegion {
            gauge: Gauge::wulff_gauge(model),
            radius: *c,
            center: body.center().to_vec(),
        })
    }

    pub fn phi(&self, x: &[f64]) -> Result<f64> {
        let shifted: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        Ok(self.gauge.eval(&shifted)? - self.radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    InnerGhost,
    OuterGhost,
    /// Interior-side node next to a boundary crossing that sits too close to
    /// it; its value is interpolated between the crossing and the next
    /// interior node instead of being an unknown.
    Band,
    Exterior,
}

/// How ghost values interpolate the boundary condition onto the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhostInterp {
    /// Linear between the crossing and the first interior node.
    Linear,
    /// Quadratic through the crossing and the first two interior nodes.
    Quadratic,
}

/// A dependent node whose value is an affine function of the boundary value
/// and interior donors: `u = c_bc · bc + Σ coeff_i · u_donor_i`.
#[derive(Debug, Clone)]
pub struct Ghost {
    pub node: u32,
    pub inner: bool,
    pub c_bc: f64,
    pub terms: Vec<(u32, f64)>,
}

#[derive(Debug, Clone)]
pub struct Cell {
    /// Node index of the lowest corner; corner `c` adds `+1`, `+nx`, `+nx·ny`
    /// per set bit of `c`.
    pub corner0: u32,
    /// Cell volume times the in-domain fraction.
    pub weight: f64,
}

/// Crossing-parameter cap: boundaries closer than `1 - ALPHA_CAP` of a cell
/// to the donor node are snapped, keeping ghost coefficients bounded.
pub const ALPHA_CAP: f64 = 0.9;

/// Above this crossing parameter the ghost interpolates through the second
/// interior node on the doubled segment, which keeps both the coefficients
/// bounded and the boundary position exact.
pub const ALPHA_FAR_DONOR: f64 = 0.7;

#[derive(Debug, Clone)]
pub struct VoxelDomain {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub class: Vec<NodeClass>,
    /// Constrained interior-side nodes, refreshed before `ghosts` (ghost
    /// forms never reference them; they reference unknowns only).
    pub band_nodes: Vec<Ghost>,
    pub ghosts: Vec<Ghost>,
    pub cells: Vec<Cell>,
    /// node index -> unknown slot (`u32::MAX` for non-interior nodes)
    pub unknown_of_node: Vec<u32>,
    /// unknown slot -> node index
    pub node_of_unknown: Vec<u32>,
    /// Inner/outer gauge values per node (`gauge(x - center)`, radius not
    /// subtracted), when the corresponding region exists.
    pub inner_gauge: Option<Vec<f64>>,
    pub outer_gauge: Option<Vec<f64>>,
    pub inner_region: Option<RadialRegion>,
    pub outer_region: Option<RadialRegion>,
    pub ghost_interp: GhostInterp,
}

pub struct DomainSpec {
    pub bounds: [(f64, f64); 3],
    pub cells: usize,
    pub inner: Option<RadialRegion>,
    pub outer: Option<RadialRegion>,
    pub ghost_interp: GhostInterp,
}

impl VoxelDomain {
    pub fn node_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    pub fn node_coords(&self, idx: usize) -> [f64; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        let ix = idx % nx;
        let iy = (idx / nx) % ny;
        let iz = idx / (nx * ny);
        [
            self.origin[0] + ix as f64 * self.spacing[0],
            self.origin[1] + iy as f64 * self.spacing[1],
            self.origin[2] + iz as f64 * self.spacing[2],
        ]
    }

    pub fn n_nodes(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn n_unknowns(&self) -> usize {
        self.node_of_unknown.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Uniform box with every node interior and all cells at full weight.
    /// Not solvable (no Dirichlet data); used for raw energy evaluations.
    pub fn plain_box(bounds: [(f64, f64); 3], cells: usize) -> Result<VoxelDomain> {
        VoxelDomain::build(DomainSpec {
            bounds,
            cells,
            inner: None,
            outer: None,
            ghost_interp: GhostInterp::Linear,
        })
    }

    pub fn build(spec: DomainSpec) -> Result<VoxelDomain> {
        let n = spec.cells;
        if n < 4 {
            return Err(Error::invalid("need at least 4 cells per axis"));
        }
        let dims = [n + 1, n + 1, n + 1];
        let mut spacing = [0.0; 3];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            let (lo, hi) = spec.bounds[a];
            if !(hi > lo) {
                return Err(Error::invalid("empty bounding box"));
            }
            spacing[a] = (hi - lo) / n as f64;
            origin[a] = lo;
        }
        let n_nodes = dims[0] * dims[1] * dims[2];

        let mut domain = VoxelDomain {
            dims,
            spacing,
            origin,
            class: vec![NodeClass::Interior; n_nodes],
            band_nodes: Vec::new(),
            ghosts: Vec::new(),
            cells: Vec::new(),
            unknown_of_node: vec![u32::MAX; n_nodes],
            node_of_unknown: Vec::new(),
            inner_gauge: None,
            outer_gauge: None,
            inner_region: spec.inner,
            outer_region: spec.outer,
            ghost_interp: spec.ghost_interp,
        };

        // gauge fields, swept x-fastest with warm-started numeric duals
        domain.inner_gauge = match &domain.inner_region {
            Some(r) => Some(domain.gauge_field(r)?),
            None => None,
        };
        domain.outer_gauge = match &domain.outer_region {
            Some(r) => Some(domain.gauge_field(r)?),
            None => None,
        };

        let phi_in = |idx: usize| -> Option<f64> {
            domain
                .inner_gauge
                .as_ref()
                .map(|g| g[idx] - domain.inner_region.as_ref().unwrap().radius)
        };
        let phi_out = |idx: usize| -> Option<f64> {
            domain
                .outer_gauge
                .as_ref()
                .map(|g| g[idx] - domain.outer_region.as_ref().unwrap().radius)
        };

        // classification
        let mut class = vec![NodeClass::Exterior; n_nodes];
        for idx in 0..n_nodes {
            let inside_ok = phi_in(idx).map_or(true, |p| p > 0.0);
            let outside_ok = phi_out(idx).map_or(true, |p| p < 0.0);
            if inside_ok && outside_ok {
                class[idx] = NodeClass::Interior;
            }
        }

        // ghosts: non-interior nodes with an interior node in their cell
        // neighborhood (26 neighbors), so that every cell with an interior
        // corner has fully usable corner data
        let has_boundaries = domain.inner_region.is_some() || domain.outer_region.is_some();
        if has_boundaries {
            for idx in 0..n_nodes {
                if class[idx] == NodeClass::Interior {
                    continue;
                }
                if !domain.block_has_interior(idx, &class) {
                    continue;
                }
                if phi_in(idx).map_or(false, |p| p <= 0.0) {
                    class[idx] = NodeClass::InnerGhost;
                } else if phi_out(idx).map_or(false, |p| p >= 0.0) {
                    class[idx] = NodeClass::OuterGhost;
                }
            }
        }
        domain.class = class;

        // interior nodes must have full stencils and must not touch the box
        for idx in 0..n_nodes {
            if domain.class[idx] != NodeClass::Interior || !has_boundaries {
                continue;
            }
            for nb in domain.axis_neighbors(idx) {
                match nb {
                    None => {
                        return Err(Error::Construction(
                            "interior node on the bounding box; enlarge the box".into(),
                        ))
                    }
                    Some(nb) => {
                        if domain.class[nb] == NodeClass::Exterior {
                            return Err(Error::Construction(
                                "interior node with an exterior neighbor; refine the grid".into(),
                            ));
                        }
                    }
                }
            }
        }

        domain.build_ghost_links()?;
        domain.build_cells();

        // unknown numbering, x-fastest
        for idx in 0..n_nodes {
            if domain.class[idx] == NodeClass::Interior {
                domain.unknown_of_node[idx] = domain.node_of_unknown.len() as u32;
                domain.node_of_unknown.push(idx as u32);
            }
        }
        if has_boundaries && domain.node_of_unknown.is_empty() {
            return Err(Error::Construction("no interior nodes in the domain".into()));
        }
        Ok(domain)
    }

    /// Interior node anywhere in the 3×3×3 block around `idx`.
    fn block_has_interior(&self, idx: usize, class: &[NodeClass]) -> bool {
        let nx = self.dims[0];
        let ny = self.dims[1];
        let nz = self.dims[2];
        let ix = (idx % nx) as isize;
        let iy = ((idx / nx) % ny) as isize;
        let iz = (idx / (nx * ny)) as isize;
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (jx, jy, jz) = (ix + dx, iy + dy, iz + dz);
                    if jx < 0
                        || jy < 0
                        || jz < 0
                        || jx >= nx as isize
                        || jy >= ny as isize
                        || jz >= nz as isize
                    {
                        continue;
                    }
                    let j = jx as usize + nx * (jy as usize + ny * jz as usize);
                    if class[j] == NodeClass::Interior {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn axis_neighbors(&self, idx: usize) -> [Option<usize>; 6] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        let nz = self.dims[2];
        let ix = idx % nx;
        let iy = (idx / nx) % ny;
        let iz = idx / (nx * ny);
        [
            (ix > 0).then(|| idx - 1),
            (ix + 1 < nx).then(|| idx + 1),
            (iy > 0).then(|| idx - nx),
            (iy + 1 < ny).then(|| idx + nx),
            (iz > 0).then(|| idx - nx * ny),
            (iz + 1 < nz).then(|| idx + nx * ny),
        ]
    }

    fn gauge_field(&self, region: &RadialRegion) -> Result<Vec<f64>> {
        let n_nodes = self.n_nodes();
        let mut vals = vec![0.0; n_nodes];
        let mut warm: Option<Vec<f64>> = None;
        for idx in 0..n_nodes {
            let x = self.node_coords(idx);
            let shifted = [
                x[0] - region.center[0],
                x[1] - region.center[1],
                x[2] - region.center[2],
            ];
            vals[idx] = region.gauge.eval_warm(&shifted, &mut warm)?;
        }
        Ok(vals)
    }

    fn build_ghost_links(&mut self) -> Result<()> {
        let n_nodes = self.n_nodes();
        let quadratic = self.ghost_interp == GhostInterp::Quadratic;
        // pass 1: collect raw crossings per ghost and band constraints
        struct RawLink {
            dir: usize,
            donor: usize,
            alpha: f64,
        }
        let mut raw: Vec<(usize, bool, Vec<RawLink>)> = Vec::new();
        let mut band_requests: Vec<(usize, f64, usize)> = Vec::new(); // (node, alpha, far donor)
        for idx in 0..n_nodes {
            let inner = match self.class[idx] {
                NodeClass::InnerGhost => true,
                NodeClass::OuterGhost => false,
                _ => continue,
            };
            let region = if inner {
                self.inner_region.as_ref().unwrap()
            } else {
                self.outer_region.as_ref().unwrap()
            };
            let mut links = Vec::new();
            let neighbors = self.axis_neighbors(idx);
            for (dir, nb) in neighbors.iter().enumerate() {
                let Some(donor) = nb else { continue };
                if self.class[*donor] != NodeClass::Interior {
                    continue;
                }
                let alpha = self.crossing(idx, *donor, region, inner)?;
                if alpha > ALPHA_FAR_DONOR {
                    if let Some(d2) = self
                        .next_along(*donor, dir)
                        .filter(|&d2| self.class[d2] == NodeClass::Interior)
                    {
                        band_requests.push((*donor, alpha, d2));
                    }
                }
                links.push(RawLink {
                    dir,
                    donor: *donor,
                    alpha,
                });
            }
            raw.push((idx, inner, links));
        }
        // band nodes: constrained interior nodes (unless their far donor is
        // itself requested as a band node, which would cascade)
        let mut is_band = vec![false; n_nodes];
        for (node, _, _) in &band_requests {
            is_band[*node] = true;
        }
        let mut band_map: std::collections::BTreeMap<usize, Vec<(f64, usize)>> =
            std::collections::BTreeMap::new();
        for (node, alpha, d2) in &band_requests {
            if is_band[*d2] {
                continue;
            }
            band_map.entry(*node).or_default().push((*alpha, *d2));
        }
        let mut band_nodes = Vec::new();
        for (node, list) in &band_map {
            // boundary side: whichever level set passes closer to the node
            let in_inner_band = self
                .inner_gauge
                .as_ref()
                .zip(self.inner_region.as_ref())
                .map(|(g, r)| (g[*node] - r.radius).abs())
                .unwrap_or(f64::INFINITY);
            let in_outer_band = self
                .outer_gauge
                .as_ref()
                .zip(self.outer_region.as_ref())
                .map(|(g, r)| (g[*node] - r.radius).abs())
                .unwrap_or(f64::INFINITY);
            let inner = in_inner_band <= in_outer_band;
            // u(node) = avg_i [ bc/(2-α_i) + u_{d2,i} (1-α_i)/(2-α_i) ]
            let m = list.len() as f64;
            let mut c_bc = 0.0;
            let mut terms: Vec<(u32, f64)> = Vec::new();
            for (alpha, d2) in list {
                c_bc += 1.0 / (2.0 - alpha) / m;
                push_term(&mut terms, *d2 as u32, (1.0 - alpha) / (2.0 - alpha) / m);
            }
            self.class[*node] = NodeClass::Band;
            band_nodes.push(Ghost {
                node: *node as u32,
                inner,
                c_bc,
                terms,
            });
        }
        // pass 2: assemble ghost affine forms, composing through band nodes
        let mut ghosts = Vec::new();
        for (idx, inner, links) in raw {
            let mut c_bc = 0.0;
            let mut terms: Vec<(u32, f64)> = Vec::new();
            let usable: Vec<&RawLink> = links.iter().collect();
            if usable.is_empty() {
                // diagonal contact only: carry the boundary value
                ghosts.push(Ghost {
                    node: idx as u32,
                    inner,
                    c_bc: 1.0,
                    terms: Vec::new(),
                });
                continue;
            }
            let m = usable.len() as f64;
            for link in usable {
                let alpha = link.alpha;
                if self.class[link.donor] == NodeClass::Band {
                    // linear through (crossing, bc) and the far donor at 2:
                    // u_g = (2 bc - α u_d2)/(2 - α)
                    if let Some(d2) = self
                        .next_along(link.donor, link.dir)
                        .filter(|&d2| self.class[d2] == NodeClass::Interior)
                    {
                        c_bc += 2.0 / (2.0 - alpha) / m;
                        push_term(&mut terms, d2 as u32, -alpha / (2.0 - alpha) / m);
                        continue;
                    }
                    // no usable far donor: snap to the boundary value
                    c_bc += 1.0 / m;
                    continue;
                }
                let d2 = self
                    .next_along(link.donor, link.dir)
                    .filter(|&d2| self.class[d2] == NodeClass::Interior);
                match (quadratic, d2) {
                    (true, Some(d2)) => {
                        // quadratic through (α, bc), (1, u_d), (2, u_d2) at 0
                        c_bc += 2.0 / ((1.0 - alpha) * (2.0 - alpha)) / m;
                        push_term(&mut terms, link.donor as u32, -2.0 * alpha / (1.0 - alpha) / m);
                        push_term(&mut terms, d2 as u32, alpha / (2.0 - alpha) / m);
                    }
                    _ => {
                        let alpha = alpha.min(ALPHA_CAP);
                        c_bc += 1.0 / (1.0 - alpha) / m;
                        push_term(&mut terms, link.donor as u32, -alpha / (1.0 - alpha) / m);
                    }
                }
            }
            ghosts.push(Ghost {
                node: idx as u32,
                inner,
                c_bc,
                terms,
            });
        }
        self.band_nodes = band_nodes;
        self.ghosts = ghosts;
        Ok(())
    }

    fn next_along(&self, donor: usize, dir: usize) -> Option<usize> {
        self.axis_neighbors(donor)[dir]
    }

    /// Boundary crossing along the segment ghost -> donor, as a parameter in
    /// `[0, 1]` from the ghost, located by bisection on the exact level set.
    fn crossing(&self, ghost: usize, donor: usize, region: &RadialRegion, inner: bool) -> Result<f64> {
        let xg = self.node_coords(ghost);
        let xd = self.node_coords(donor);
        let phi_at = |s: f64| -> Result<f64> {
            let x = [
                xg[0] + s * (xd[0] - xg[0]),
                xg[1] + s * (xd[1] - xg[1]),
                xg[2] + s * (xd[2] - xg[2]),
            ];
            let p = region.phi(&x)?;
            // orient so the ghost side is negative
            Ok(if inner { p } else { -p })
        };
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut flo = phi_at(lo)?;
        let fhi = phi_at(hi)?;
        if flo > 0.0 {
            // ghost sits exactly on the boundary
            return Ok(0.0);
        }
        if fhi <= 0.0 {
            // donor numerically on the boundary; snap
            return Ok(ALPHA_CAP);
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let fm = phi_at(mid)?;
            if fm <= 0.0 {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        let _ = flo;
        Ok(0.5 * (lo + hi))
    }

    fn build_cells(&mut self) {
        let nx = self.dims[0];
        let ny = self.dims[1];
        let nz = self.dims[2];
        let vol = self.cell_volume();
        let corner_offsets = [
            0,
            1,
            nx,
            nx + 1,
            nx * ny,
            nx * ny + 1,
            nx * ny + nx,
            nx * ny + nx + 1,
        ];
        let mut cells = Vec::new();
        let inner = self.inner_region.as_ref().map(|r| r.radius);
        let outer = self.outer_region.as_ref().map(|r| r.radius);
        for iz in 0..nz - 1 {
            for iy in 0..ny - 1 {
                for ix in 0..nx - 1 {
                    let c0 = self.node_index(ix, iy, iz);
                    let mut any_ghost = false;
                    let mut excluded = false;
                    for off in corner_offsets {
                        match self.class[c0 + off] {
                            NodeClass::Exterior => {
                                excluded = true;
                                break;
                            }
                            NodeClass::Interior => {}
                            _ => any_ghost = true,
                        }
                    }
                    if excluded {
                        continue;
                    }
                    let weight = if !any_ghost {
                        vol
                    } else {
                        // stratified 3³ midpoint sampling of the trilinear
                        // level-set interpolants
                        let mut phi_in_c = [0.0f64; 8];
                        let mut phi_out_c = [0.0f64; 8];
                        for (c, off) in corner_offsets.iter().enumerate() {
                            if let (Some(g), Some(r)) = (self.inner_gauge.as_ref(), inner) {
                                phi_in_c[c] = g[c0 + off] - r;
                            }
                            if let (Some(g), Some(r)) = (self.outer_gauge.as_ref(), outer) {
                                phi_out_c[c] = g[c0 + off] - r;
                            }
                        }
                        let mut count = 0;
                        for sz in 0..3 {
                            for sy in 0..3 {
                                for sx in 0..3 {
                                    let t = [
                                        (2 * sx + 1) as f64 / 6.0,
                                        (2 * sy + 1) as f64 / 6.0,
                                        (2 * sz + 1) as f64 / 6.0,
                                    ];
                                    let pin = if self.inner_gauge.is_some() {
                                        trilinear_corners(&phi_in_c, t)
                                    } else {
                                        1.0
                                    };
                                    let pout = if self.outer_gauge.is_some() {
                                        trilinear_corners(&phi_out_c, t)
                                    } else {
                                        -1.0
                                    };
                                    if pin > 0.0 && pout < 0.0 {
                                        count += 1;
                                    }
                                }
                            }
                        }
                        vol * count as f64 / 27.0
                    };
                    if weight > 0.0 {
                        cells.push(Cell {
                            corner0: c0 as u32,
                            weight,
                        });
                    }
                }
            }
        }
        self.cells = cells;
    }
}

fn push_term(terms: &mut Vec<(u32, f64)>, donor: u32, coeff: f64) {
    for t in terms.iter_mut() {
        if t.0 == donor {
            t.1 += coeff;
            return;
        }
    }
    terms.push((donor, coeff));
}

fn trilinear_corners(c: &[f64; 8], t: [f64; 3]) -> f64 {
    let (tx, ty, tz) = (t[0], t[1], t[2]);
    let lerp = |a: f64, b: f64, s: f64| a + (b - a) * s;
    let c00 = lerp(c[0], c[1], tx);
    let c10 = lerp(c[2], c[3], tx);
    let c01 = lerp(c[4], c[5], tx);
    let c11 = lerp(c[6], c[7], tx);
    let c0 = lerp(c00, c10, ty);
    let c1 = lerp(c01, c11, ty);
    lerp(c0, c1, tz)
}

/// Box bounds for a radial domain truncated at gauge radius `r`, per axis
/// `±r·H(e_i)·(1 + 5/cells)` so the outer ghost layer keeps a margin of a
/// couple of cells. Linear in `r`, hence doubling `r` doubles the box and
/// node lattices nest exactly.
pub fn radial_bounds(model: &NormModel, r: f64, cells: usize, center: &[f64]) -> [(f64, f64); 3] {
    let m = 1.0 + 5.0 / cells as f64;
    let mut bounds = [(0.0, 0.0); 3];
    for a in 0..3 {
        let mut e = [0.0; 3];
        e[a] = 1.0;
        let half = r * model.h(&e) * m;
        bounds[a] = (center[a] - half, center[a] + half);
    }
    bounds
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid() -> NormModel {
        NormModel::euclidean(3).unwrap()
    }

    #[test]
    fn annulus_classification_counts() {
        let m = euclid();
        let spec = DomainSpec {
            bounds: radial_bounds(&m, 2.0, 24, &[0.0; 3]),
            cells: 24,
            inner: Some(RadialRegion::wulff(&m, 1.0, &[0.0; 3])),
            outer: Some(RadialRegion::wulff(&m, 2.0, &[0.0; 3])),
            ghost_interp: GhostInterp::Linear,
        };
        let d = VoxelDomain::build(spec).unwrap();
        let interior = d
            .class
            .iter()
            .filter(|c| **c == NodeClass::Interior)
            .count();
        assert_eq!(interior, d.n_unknowns());
        assert!(interior > 1000);
        assert!(!d.ghosts.is_empty());
        // volume of the annulus 1 <= |x| <= 2 from the cell weights
        let vol: f64 = d.cells.iter().map(|c| c.weight).sum();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * (8.0 - 1.0);
        assert!(
            (vol - exact).abs() / exact < 0.02,
            "cell volume {vol} vs {exact}"
        );
    }

    #[test]
    fn ghost_alphas_in_range() {
        let m = euclid();
        let spec = DomainSpec {
            bounds: radial_bounds(&m, 2.0, 16, &[0.0; 3]),
            cells: 16,
            inner: Some(RadialRegion::wulff(&m, 1.0, &[0.0; 3])),
            outer: Some(RadialRegion::wulff(&m, 2.0, &[0.0; 3])),
            ghost_interp: GhostInterp::Quadratic,
        };
        let d = VoxelDomain::build(spec).unwrap();
        let mut with_terms = 0;
        for g in &d.ghosts {
            with_terms += !g.terms.is_empty() as usize;
            for (donor, coeff) in &g.terms {
                assert!(coeff.is_finite() && coeff.abs() <= 10.0);
                assert_eq!(d.class[*donor as usize], NodeClass::Interior);
            }
        }
        for b in &d.band_nodes {
            // band nodes are convex interpolations of bc and an interior node
            assert!(b.c_bc > 0.0 && b.c_bc <= 1.0);
            let total: f64 = b.c_bc + b.terms.iter().map(|t| t.1).sum::<f64>();
            assert!((total - 1.0).abs() < 1e-12);
            for (donor, _) in &b.terms {
                assert_eq!(d.class[*donor as usize], NodeClass::Interior);
            }
        }
        assert!(with_terms * 2 > d.ghosts.len());
    }

    #[test]
    fn plain_box_has_full_weight_cells() {
        let d = VoxelDomain::plain_box([(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 8).unwrap();
        assert_eq!(d.cells.len(), 512);
        let vol: f64 = d.cells.iter().map(|c| c.weight).sum();
        assert!((vol - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_tight_box_rejected() {
        let m = euclid();
        let spec = DomainSpec {
            bounds: [(-1.5, 1.5); 3],
            cells: 16,
            inner: Some(RadialRegion::wulff(&m, 1.0, &[0.0; 3])),
            outer: Some(RadialRegion::wulff(&m, 2.0, &[0.0; 3])),
            ghost_interp: GhostInterp::Linear,
        };
        // the outer sphere pokes through the box; interior nodes reach the wall
        assert!(VoxelDomain::build(spec).is_err());
    }

    #[test]
    fn numeric_gauge_matches_closed_form() {
        // regularized p = 2 is exactly euclidean; numeric gauge must agree
        let p2 = NormModel::pnorm(3, 2.0, vec![1.0; 3]).unwrap();
        let g = Gauge::Numeric(p2);
        let x = [0.3, -1.1, 0.7];
        let v = g.eval(&x).unwrap();
        assert!((v - norm(&x)).abs() < 1e-9);
    }
}
