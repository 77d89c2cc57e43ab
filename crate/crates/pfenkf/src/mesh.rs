//! Meshes, quadrature, and basis evaluation.
//!
//! Two mesh families are supported: uniform bars of linear segments on an
//! interval, and graded triangulations of the unit square with a horizontal
//! slit modelled by duplicated nodes (the single-edge notched shear
//! geometry). All elements are linear, so strain-displacement matrices and
//! shape-function gradients are constant per element and precomputed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Quadrature rule on the reference element.
///
/// `points` are reference coordinates (a single ξ ∈ [-1, 1] per point for
/// lines, barycentric triples for triangles); `degree` is the highest total
/// polynomial degree the rule integrates exactly.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    /// Two-point Gauss rule on [-1, 1]; exact through degree 3.
    pub fn gauss_line_2() -> Self {
        let g = 1.0 / 3.0_f64.sqrt();
        QuadratureRule {
            points: vec![vec![-g], vec![g]],
            weights: vec![1.0, 1.0],
            degree: 3,
        }
    }

    /// Three interior points on the reference triangle; exact through
    /// degree 2. Weights sum to the reference area 1/2.
    pub fn tri_interior_3() -> Self {
        let a = 2.0 / 3.0;
        let b = 1.0 / 6.0;
        QuadratureRule {
            points: vec![vec![a, b, b], vec![b, a, b], vec![b, b, a]],
            weights: vec![1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0],
            degree: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Axis-aligned rectangle marking where the SENS mesh stays fine.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RefineBand {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl RefineBand {
    /// Lower-right region around the expected shear-crack path: from just
    /// left of the slit tip to the right edge, up to 0.1 above the slit.
    pub fn sens_default() -> Self {
        RefineBand {
            x_min: 0.45,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 0.6,
        }
    }
}

/// Per-element data precomputed at construction: constant
/// strain-displacement rows, shape gradients, and quadrature point data.
#[derive(Debug, Clone)]
pub struct ElemGeom {
    /// Strain rows such that strain = b · u_e. For lines a single row
    /// (axial strain, 2 dofs); for triangles three rows
    /// (εxx, εyy, γxy = 2εxy over 6 dofs, engineering shear).
    pub b: [[f64; 6]; 3],
    /// ∇N_i per node.
    pub grad_n: [[f64; 2]; 3],
    /// Physical integration weight per quadrature point (measure × weight).
    pub qp_w: [f64; 3],
    /// Shape values at each quadrature point: `shape[q][i]`.
    pub shape: [[f64; 3]; 3],
    /// Physical coordinates of each quadrature point.
    pub qp_x: [[f64; 2]; 3],
}

/// A finite element mesh of linear segments (1D) or triangles (2D).
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    coords: Vec<[f64; 2]>,
    elems: Vec<[usize; 3]>,
    nodes_per_elem: usize,
    boundaries: BTreeMap<String, Vec<usize>>,
    /// Co-located node pairs along the slit: (upper face, lower face).
    slit_pairs: Vec<(usize, usize)>,
    quad: QuadratureRule,
    geom: Vec<ElemGeom>,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.coords == other.coords
            && self.elems == other.elems
            && self.nodes_per_elem == other.nodes_per_elem
            && self.boundaries == other.boundaries
            && self.slit_pairs == other.slit_pairs
    }
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elems(&self) -> usize {
        self.elems.len()
    }

    pub fn nodes_per_elem(&self) -> usize {
        self.nodes_per_elem
    }

    pub fn coord(&self, node: usize) -> [f64; 2] {
        self.coords[node]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn elem(&self, e: usize) -> &[usize] {
        &self.elems[e][..self.nodes_per_elem]
    }

    pub fn elem_geom(&self, e: usize) -> &ElemGeom {
        &self.geom[e]
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn n_qp_per_elem(&self) -> usize {
        self.quad.len()
    }

    /// Total number of quadrature points; quadrature-point fields (the
    /// phase field, damage floors) are stored flat in this indexing.
    pub fn n_qp_total(&self) -> usize {
        self.n_elems() * self.n_qp_per_elem()
    }

    pub fn qp_index(&self, elem: usize, q: usize) -> usize {
        elem * self.n_qp_per_elem() + q
    }

    /// Physical coordinates of every quadrature point, flat-indexed.
    pub fn qp_coords(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.n_qp_total());
        for g in &self.geom {
            for q in 0..self.n_qp_per_elem() {
                out.push(g.qp_x[q]);
            }
        }
        out
    }

    pub fn boundary(&self, name: &str) -> Result<&[usize]> {
        self.boundaries
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Mesh(format!("no boundary set named `{name}`")))
    }

    pub fn boundary_names(&self) -> impl Iterator<Item = &str> {
        self.boundaries.keys().map(|s| s.as_str())
    }

    pub fn slit_pairs(&self) -> &[(usize, usize)] {
        &self.slit_pairs
    }

    // Degree-of-freedom layout: displacement components first
    // (dim per node), then one micromorphic dof per node.

    pub fn n_u_dofs(&self) -> usize {
        self.dim * self.n_nodes()
    }

    pub fn n_d_dofs(&self) -> usize {
        self.n_nodes()
    }

    pub fn n_total_dofs(&self) -> usize {
        self.n_u_dofs() + self.n_d_dofs()
    }

    pub fn u_dof(&self, node: usize, component: usize) -> usize {
        debug_assert!(component < self.dim);
        self.dim * node + component
    }

    /// Node coordinates for every entry of the stacked state vector
    /// [u-dofs, d-dofs]; used for distance-based localization.
    pub fn stacked_dof_locations(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.n_total_dofs());
        for node in 0..self.n_nodes() {
            for _ in 0..self.dim {
                out.push(self.coords[node]);
            }
        }
        out.extend_from_slice(&self.coords);
        out
    }

    /// Evaluate the nodal basis at a physical point: the containing
    /// element's shape values as a sparse row over node indices.
    pub fn eval_basis(&self, point: &[f64]) -> Result<Vec<(usize, f64)>> {
        if point.len() != self.dim {
            return Err(Error::Mesh(format!(
                "basis point has {} coordinates, mesh is {}-dimensional",
                point.len(),
                self.dim
            )));
        }
        match self.dim {
            1 => self.eval_basis_1d(point[0]),
            _ => self.eval_basis_2d(point[0], point[1]),
        }
    }

    fn eval_basis_1d(&self, x: f64) -> Result<Vec<(usize, f64)>> {
        let tol = 1e-12 * self.span();
        for e in 0..self.n_elems() {
            let [a, b] = [self.elems[e][0], self.elems[e][1]];
            let (xa, xb) = (self.coords[a][0], self.coords[b][0]);
            if x >= xa - tol && x <= xb + tol {
                let t = ((x - xa) / (xb - xa)).clamp(0.0, 1.0);
                return Ok(vec![(a, 1.0 - t), (b, t)]);
            }
        }
        Err(Error::SensorOutsideMesh(vec![x]))
    }

    fn eval_basis_2d(&self, x: f64, y: f64) -> Result<Vec<(usize, f64)>> {
        let tol = 1e-10;
        for e in 0..self.n_elems() {
            let n = &self.elems[e];
            let p: Vec<[f64; 2]> = (0..3).map(|i| self.coords[n[i]]).collect();
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let l1 = ((p[1][0] - x) * (p[2][1] - y) - (p[2][0] - x) * (p[1][1] - y)) / det;
            let l2 = ((p[2][0] - x) * (p[0][1] - y) - (p[0][0] - x) * (p[2][1] - y)) / det;
            let l3 = 1.0 - l1 - l2;
            if l1 >= -tol && l2 >= -tol && l3 >= -tol {
                return Ok(vec![(n[0], l1), (n[1], l2), (n[2], l3)]);
            }
        }
        Err(Error::SensorOutsideMesh(vec![x, y]))
    }

    fn span(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in &self.coords {
            lo = lo.min(c[0]);
            hi = hi.max(c[0]);
        }
        hi - lo
    }

    fn build_geometry(&mut self) -> Result<()> {
        let mut geom = Vec::with_capacity(self.n_elems());
        for e in 0..self.n_elems() {
            geom.push(match self.dim {
                1 => self.line_geom(e)?,
                _ => self.tri_geom(e)?,
            });
        }
        self.geom = geom;
        Ok(())
    }

    fn line_geom(&self, e: usize) -> Result<ElemGeom> {
        let [a, b] = [self.elems[e][0], self.elems[e][1]];
        let (xa, xb) = (self.coords[a][0], self.coords[b][0]);
        let h = xb - xa;
        if h <= 0.0 {
            return Err(Error::Mesh(format!("element {e} has non-positive length {h}")));
        }
        let mut g = ElemGeom {
            b: [[0.0; 6]; 3],
            grad_n: [[0.0; 2]; 3],
            qp_w: [0.0; 3],
            shape: [[0.0; 3]; 3],
            qp_x: [[0.0; 2]; 3],
        };
        g.b[0][0] = -1.0 / h;
        g.b[0][1] = 1.0 / h;
        g.grad_n[0] = [-1.0 / h, 0.0];
        g.grad_n[1] = [1.0 / h, 0.0];
        for (q, (pt, w)) in self.quad.points.iter().zip(&self.quad.weights).enumerate() {
            let xi = pt[0];
            g.shape[q][0] = 0.5 * (1.0 - xi);
            g.shape[q][1] = 0.5 * (1.0 + xi);
            g.qp_w[q] = w * 0.5 * h;
            g.qp_x[q] = [xa + 0.5 * (1.0 + xi) * h, 0.0];
        }
        Ok(g)
    }

    fn tri_geom(&self, e: usize) -> Result<ElemGeom> {
        let n = &self.elems[e];
        let p: Vec<[f64; 2]> = (0..3).map(|i| self.coords[n[i]]).collect();
        let det2a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        if det2a <= 0.0 {
            return Err(Error::Mesh(format!(
                "element {e} is degenerate or negatively oriented (2A = {det2a:.3e})"
            )));
        }
        let dn_dx = [
            (p[1][1] - p[2][1]) / det2a,
            (p[2][1] - p[0][1]) / det2a,
            (p[0][1] - p[1][1]) / det2a,
        ];
        let dn_dy = [
            (p[2][0] - p[1][0]) / det2a,
            (p[0][0] - p[2][0]) / det2a,
            (p[1][0] - p[0][0]) / det2a,
        ];
        let mut g = ElemGeom {
            b: [[0.0; 6]; 3],
            grad_n: [[0.0; 2]; 3],
            qp_w: [0.0; 3],
            shape: [[0.0; 3]; 3],
            qp_x: [[0.0; 2]; 3],
        };
        for i in 0..3 {
            g.grad_n[i] = [dn_dx[i], dn_dy[i]];
            g.b[0][2 * i] = dn_dx[i];
            g.b[1][2 * i + 1] = dn_dy[i];
            g.b[2][2 * i] = dn_dy[i];
            g.b[2][2 * i + 1] = dn_dx[i];
        }
        for (q, (pt, w)) in self.quad.points.iter().zip(&self.quad.weights).enumerate() {
            for i in 0..3 {
                g.shape[q][i] = pt[i];
            }
            // Reference-area weights sum to 1/2, so measure = det2a × weight.
            g.qp_w[q] = w * det2a;
            g.qp_x[q] = [
                pt[0] * p[0][0] + pt[1] * p[1][0] + pt[2] * p[2][0],
                pt[0] * p[0][1] + pt[1] * p[1][1] + pt[2] * p[2][1],
            ];
        }
        Ok(g)
    }

    /// Serialize to the plain-text mesh format. Coordinates are written in
    /// shortest round-trip notation, so import reproduces them bit-exactly.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pfenkf mesh v1");
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "nodes {}", self.n_nodes());
        for c in &self.coords {
            if self.dim == 1 {
                let _ = writeln!(s, "{:?}", c[0]);
            } else {
                let _ = writeln!(s, "{:?} {:?}", c[0], c[1]);
            }
        }
        let _ = writeln!(s, "elements {} {}", self.n_elems(), self.nodes_per_elem);
        for e in 0..self.n_elems() {
            let nodes = self.elem(e);
            let words: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "{}", words.join(" "));
        }
        for (name, nodes) in &self.boundaries {
            let words: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "boundary {} {}", name, words.join(" "));
        }
        for (u, l) in &self.slit_pairs {
            let _ = writeln!(s, "slitpair {u} {l}");
        }
        s
    }

    /// Parse the plain-text mesh format produced by [`Mesh::export_text`].
    pub fn import_text(text: &str) -> Result<Mesh> {
        let bad = |detail: &str| Error::Mesh(format!("mesh parse error: {detail}"));
        let mut lines = text.lines();
        if lines.next() != Some("pfenkf mesh v1") {
            return Err(bad("missing `pfenkf mesh v1` header"));
        }
        let dim: usize = expect_kv(lines.next(), "dim").ok_or_else(|| bad("bad dim line"))?;
        if dim != 1 && dim != 2 {
            return Err(bad("dim must be 1 or 2"));
        }
        let n_nodes: usize =
            expect_kv(lines.next(), "nodes").ok_or_else(|| bad("bad nodes line"))?;
        let mut coords = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = lines.next().ok_or_else(|| bad("truncated node list"))?;
            let mut it = line.split_whitespace();
            let x: f64 = it
                .next()
                .and_then(|w| w.parse().ok())
                .ok_or_else(|| bad("bad node coordinate"))?;
            let y: f64 = if dim == 2 {
                it.next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| bad("bad node coordinate"))?
            } else {
                0.0
            };
            coords.push([x, y]);
        }
        let elem_header = lines.next().ok_or_else(|| bad("missing elements line"))?;
        let mut it = elem_header.split_whitespace();
        if it.next() != Some("elements") {
            return Err(bad("missing elements line"));
        }
        let n_elems: usize = it
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| bad("bad element count"))?;
        let nodes_per_elem: usize = it
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| bad("bad element arity"))?;
        let mut elems = Vec::with_capacity(n_elems);
        for _ in 0..n_elems {
            let line = lines.next().ok_or_else(|| bad("truncated element list"))?;
            let ids: Vec<usize> = line
                .split_whitespace()
                .map(|w| w.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad element node id"))?;
            if ids.len() != nodes_per_elem || ids.iter().any(|&i| i >= n_nodes) {
                return Err(bad("bad element record"));
            }
            let mut rec = [0usize; 3];
            rec[..ids.len()].copy_from_slice(&ids);
            elems.push(rec);
        }
        let mut boundaries = BTreeMap::new();
        let mut slit_pairs = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("boundary") => {
                    let name = it.next().ok_or_else(|| bad("boundary without name"))?;
                    let ids: Vec<usize> = it
                        .map(|w| w.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad boundary node id"))?;
                    boundaries.insert(name.to_string(), ids);
                }
                Some("slitpair") => {
                    let u: usize = it
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| bad("bad slit pair"))?;
                    let l: usize = it
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| bad("bad slit pair"))?;
                    slit_pairs.push((u, l));
                }
                Some(other) => return Err(bad(&format!("unknown record `{other}`"))),
                None => {}
            }
        }
        let quad = if dim == 1 {
            QuadratureRule::gauss_line_2()
        } else {
            QuadratureRule::tri_interior_3()
        };
        let mut mesh = Mesh {
            dim,
            coords,
            elems,
            nodes_per_elem,
            boundaries,
            slit_pairs,
            quad,
            geom: Vec::new(),
        };
        mesh.build_geometry()?;
        Ok(mesh)
    }

    pub fn export_to_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.export_text()).map_err(Error::io(path))
    }

    pub fn import_from_file(path: &Path) -> Result<Mesh> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Mesh::import_text(&text)
    }
}

fn expect_kv<T: std::str::FromStr>(line: Option<&str>, key: &str) -> Option<T> {
    let line = line?;
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return None;
    }
    it.next()?.parse().ok()
}

/// Uniform bar of `n_elems` linear segments on [x_min, x_max], with
/// boundary sets `left` and `right`.
pub fn build_mesh_1d(n_elems: usize, x_min: f64, x_max: f64) -> Result<Mesh> {
    if n_elems < 2 {
        return Err(Error::Mesh(format!(
            "1d mesh needs at least 2 elements, got {n_elems}"
        )));
    }
    if !(x_max > x_min) {
        return Err(Error::Mesh(format!(
            "empty interval [{x_min}, {x_max}]"
        )));
    }
    let n_nodes = n_elems + 1;
    let h = (x_max - x_min) / n_elems as f64;
    let mut coords = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let x = if i == n_elems { x_max } else { x_min + i as f64 * h };
        coords.push([x, 0.0]);
    }
    let elems = (0..n_elems).map(|e| [e, e + 1, 0]).collect();
    let mut boundaries = BTreeMap::new();
    boundaries.insert("left".to_string(), vec![0]);
    boundaries.insert("right".to_string(), vec![n_elems]);
    let mut mesh = Mesh {
        dim: 1,
        coords,
        elems,
        nodes_per_elem: 2,
        boundaries,
        slit_pairs: Vec::new(),
        quad: QuadratureRule::gauss_line_2(),
        geom: Vec::new(),
    };
    mesh.build_geometry()?;
    Ok(mesh)
}

/// Y coordinate of the slit line in the unit-square shear geometry.
pub const SLIT_Y: f64 = 0.5;
/// X coordinate of the slit tip.
pub const SLIT_TIP_X: f64 = 0.5;

/// Graded axis from 0 to 1: spacing ≈ `h_fine` inside [lo, hi], growing
/// towards `h_coarse` outside, landing exactly on every anchor.
fn graded_axis(lo: f64, hi: f64, h_fine: f64, h_coarse: f64, anchors: &[f64]) -> Vec<f64> {
    let mut marks: Vec<f64> = vec![0.0, 1.0];
    marks.extend_from_slice(anchors);
    marks.extend_from_slice(&[lo, hi]);
    marks.retain(|&m| (0.0..=1.0).contains(&m));
    marks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    marks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    // Target spacing grows linearly with distance from the fine band,
    // which bounds the ratio of adjacent steps.
    let h_at = |x: f64| -> f64 {
        let d = if x < lo {
            lo - x
        } else if x > hi {
            x - hi
        } else {
            0.0
        };
        (h_fine + 1.8 * d).min(h_coarse)
    };

    let mut pts = vec![marks[0]];
    for seg in marks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        // Walk the segment with the local target spacing to estimate how
        // many steps it wants, then subdivide so the walk lands on `b`.
        let mut x = a;
        let mut n_steps = 0usize;
        while x < b - 1e-15 {
            let h = h_at(x + 0.5 * h_at(x)).max(1e-6);
            x += h;
            n_steps += 1;
            if n_steps > 100_000 {
                break;
            }
        }
        let n = n_steps.max(1);
        // Redistribute: keep the graded proportions of the walk by scaling
        // each step so the total matches the segment exactly.
        let mut raw = Vec::with_capacity(n);
        let mut xx = a;
        for _ in 0..n {
            let h = h_at(xx + 0.5 * h_at(xx)).max(1e-6);
            raw.push(h);
            xx += h;
        }
        let total: f64 = raw.iter().sum();
        let scale = (b - a) / total;
        let mut acc = a;
        for (k, h) in raw.iter().enumerate() {
            acc = if k + 1 == n { b } else { acc + h * scale };
            pts.push(acc);
        }
    }
    pts
}

/// Diagonal orientation of the structured triangulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Diagonal {
    /// Split each cell along the "/" diagonal.
    Rising,
    /// Split each cell along the "\" diagonal.
    Falling,
}

/// Build the single-edge notched shear mesh: unit square, slit from
/// (0, 0.5) to (0.5, 0.5) as duplicated nodes, graded so element edges stay
/// near `h_fine` inside `band` and grow to `h_coarse` away from it.
///
/// Boundary sets: `bottom`, `top`, `left`, `right` (the left set contains
/// both copies of the slit-mouth node). The tip node at (0.5, 0.5) is
/// shared between the faces.
pub fn build_mesh_sens(
    h_coarse: f64,
    h_fine: f64,
    band: RefineBand,
    diagonal: Diagonal,
) -> Result<Mesh> {
    if !(h_fine > 0.0) || !(h_coarse >= h_fine) {
        return Err(Error::Mesh(format!(
            "need 0 < h_fine <= h_coarse, got h_fine = {h_fine}, h_coarse = {h_coarse}"
        )));
    }
    if h_fine > 0.25 {
        return Err(Error::Mesh("h_fine too coarse for the slit geometry".into()));
    }
    let xs = graded_axis(band.x_min, band.x_max, h_fine, h_coarse, &[SLIT_TIP_X]);
    let ys = graded_axis(band.y_min, band.y_max, h_fine, h_coarse, &[SLIT_Y]);
    let (nx, ny) = (xs.len(), ys.len());

    let mut coords: Vec<[f64; 2]> = Vec::with_capacity(nx * ny + nx / 2);
    for &y in &ys {
        for &x in &xs {
            coords.push([x, y]);
        }
    }
    let grid = |i: usize, j: usize| j * nx + i;

    // Duplicate slit nodes: grid nodes with y = SLIT_Y, x < tip. The grid
    // node keeps the upper face; the copy takes the lower face.
    let j_slit = ys
        .iter()
        .position(|&y| y == SLIT_Y)
        .ok_or_else(|| Error::Mesh("slit line missing from axis".into()))?;
    let mut lower_copy: BTreeMap<usize, usize> = BTreeMap::new();
    let mut slit_pairs = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        if x < SLIT_TIP_X {
            let upper = grid(i, j_slit);
            let lower = coords.len();
            coords.push(coords[upper]);
            lower_copy.insert(upper, lower);
            slit_pairs.push((upper, lower));
        }
    }

    let mut elems: Vec<[usize; 3]> = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1));
            let tris: [[usize; 3]; 2] = match diagonal {
                Diagonal::Rising => [[a, b, c], [a, c, d]],
                Diagonal::Falling => [[a, b, d], [b, c, d]],
            };
            for tri in tris {
                let cy: f64 = tri.iter().map(|&n| coords[n][1]).sum::<f64>() / 3.0;
                let mut mapped = tri;
                if cy < SLIT_Y {
                    for n in &mut mapped {
                        if let Some(&low) = lower_copy.get(n) {
                            *n = low;
                        }
                    }
                }
                elems.push(mapped);
            }
        }
    }

    let mut boundaries: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut bottom = Vec::new();
    let mut top = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (n, c) in coords.iter().enumerate() {
        if c[1] == 0.0 {
            bottom.push(n);
        }
        if c[1] == 1.0 {
            top.push(n);
        }
        if c[0] == 0.0 {
            left.push(n);
        }
        if c[0] == 1.0 {
            right.push(n);
        }
    }
    boundaries.insert("bottom".into(), bottom);
    boundaries.insert("top".into(), top);
    boundaries.insert("left".into(), left);
    boundaries.insert("right".into(), right);

    let mut mesh = Mesh {
        dim: 2,
        coords,
        elems,
        nodes_per_elem: 3,
        boundaries,
        slit_pairs,
        quad: QuadratureRule::tri_interior_3(),
        geom: Vec::new(),
    };
    mesh.build_geometry()?;
    Ok(mesh)
}
