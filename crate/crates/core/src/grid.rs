//! Cell-centered structured mesh on `[0, Lx] × [0, Ly]` with a Robin /
//! Neumann partition of the boundary faces.
//!
//! Cells are stored row-major: cell `(i, j)` has index `j * nx + i`.
//! Boundary faces are numbered edge by edge: left (`j`), right (`ny + j`),
//! bottom (`2 ny + i`), top (`2 ny + nx + i`).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];
}

/// Contiguous faces `start..end` along one edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceRange {
    pub edge: Edge,
    pub start: usize,
    pub end: usize,
}

/// Grid config fragment `{"Lx":..,"Ly":..,"nx":..,"ny":..,"robin_edges":["right"]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub robin_edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub robin_ranges: Vec<FaceRange>,
    /// Require both boundary segments to be non-empty.
    #[serde(default = "default_strict")]
    pub strict: bool,
}

fn default_strict() -> bool {
    true
}

impl GridSpec {
    pub fn unit_square(n: usize, robin_edges: &[Edge]) -> Self {
        Self {
            lx: 1.0,
            ly: 1.0,
            nx: n,
            ny: n,
            robin_edges: robin_edges.to_vec(),
            robin_ranges: Vec::new(),
            strict: true,
        }
    }

    pub fn build(&self) -> Result<StructuredGrid> {
        StructuredGrid::build(self)
    }
}

/// Which boundary faces a boundary integral runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Robin,
    Neumann,
    All,
}

impl FromStr for Segment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "robin" | "gamma_r" => Ok(Segment::Robin),
            "neumann" | "gamma_n" => Ok(Segment::Neumann),
            "all" => Ok(Segment::All),
            other => Err(Error::Validation(format!("unknown boundary segment '{other}'"))),
        }
    }
}

/// One boundary face: its edge, position along the edge, and adjacent cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub edge: Edge,
    pub index: usize,
    pub cell: usize,
    pub length: f64,
    pub robin: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGrid {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    faces: Vec<BoundaryFace>,
    spec: GridSpec,
}

impl StructuredGrid {
    pub fn build(spec: &GridSpec) -> Result<Self> {
        let GridSpec { lx, ly, nx, ny, .. } = *spec;
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::Validation(format!(
                "domain lengths must be positive, got Lx={lx}, Ly={ly}"
            )));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::Validation(format!(
                "cell counts must be positive, got nx={nx}, ny={ny}"
            )));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        let mut faces = Vec::with_capacity(2 * (nx + ny));
        for j in 0..ny {
            faces.push(BoundaryFace { edge: Edge::Left, index: j, cell: j * nx, length: hy, robin: false });
        }
        for j in 0..ny {
            faces.push(BoundaryFace { edge: Edge::Right, index: j, cell: j * nx + nx - 1, length: hy, robin: false });
        }
        for i in 0..nx {
            faces.push(BoundaryFace { edge: Edge::Bottom, index: i, cell: i, length: hx, robin: false });
        }
        for i in 0..nx {
            faces.push(BoundaryFace { edge: Edge::Top, index: i, cell: (ny - 1) * nx + i, length: hx, robin: false });
        }
        let mut grid = Self { lx, ly, nx, ny, hx, hy, faces, spec: spec.clone() };
        for &edge in &spec.robin_edges {
            let len = grid.edge_len(edge);
            grid.tag(FaceRange { edge, start: 0, end: len })?;
        }
        for &range in &spec.robin_ranges {
            grid.tag(range)?;
        }
        let robin = grid.faces.iter().filter(|f| f.robin).count();
        let neumann = grid.faces.len() - robin;
        if robin == 0 || neumann == 0 {
            let msg = format!(
                "boundary partition needs non-empty Robin and Neumann parts (Robin faces: {robin}, Neumann faces: {neumann})"
            );
            if spec.strict {
                return Err(Error::Validation(msg));
            }
            log::warn!("{msg}");
        }
        Ok(grid)
    }

    fn edge_len(&self, edge: Edge) -> usize {
        match edge {
            Edge::Left | Edge::Right => self.ny,
            Edge::Bottom | Edge::Top => self.nx,
        }
    }

    fn edge_offset(&self, edge: Edge) -> usize {
        match edge {
            Edge::Left => 0,
            Edge::Right => self.ny,
            Edge::Bottom => 2 * self.ny,
            Edge::Top => 2 * self.ny + self.nx,
        }
    }

    fn tag(&mut self, range: FaceRange) -> Result<()> {
        let len = self.edge_len(range.edge);
        if range.start >= range.end || range.end > len {
            return Err(Error::Validation(format!(
                "face range {range:?} is empty or exceeds the {len} faces of that edge"
            )));
        }
        let off = self.edge_offset(range.edge);
        for f in &mut self.faces[off + range.start..off + range.end] {
            f.robin = true;
        }
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }
    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.faces
    }

    pub fn faces_in(&self, segment: Segment) -> impl Iterator<Item = (usize, &BoundaryFace)> {
        self.faces.iter().enumerate().filter(move |(_, f)| match segment {
            Segment::Robin => f.robin,
            Segment::Neumann => !f.robin,
            Segment::All => true,
        })
    }

    pub fn measure(&self, segment: Segment) -> f64 {
        self.faces_in(segment).map(|(_, f)| f.length).sum()
    }

    /// Field sampled at cell centers.
    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut values = Vec::with_capacity(self.cell_count());
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (x, y) = self.center(i, j);
                values.push(f(x, y));
            }
        }
        ScalarField { nx: self.nx, ny: self.ny, values }
    }

    pub fn constant_field(&self, c: f64) -> ScalarField {
        ScalarField { nx: self.nx, ny: self.ny, values: vec![c; self.cell_count()] }
    }

    pub fn check_field(&self, field: &ScalarField) -> Result<()> {
        if field.nx != self.nx || field.ny != self.ny {
            return Err(Error::Validation(format!(
                "field is {}x{} but grid is {}x{}",
                field.nx, field.ny, self.nx, self.ny
            )));
        }
        Ok(())
    }

    /// `∫ f` with the midpoint rule (exact for cell-wise constants).
    pub fn integrate(&self, field: &ScalarField) -> Result<f64> {
        self.check_field(field)?;
        Ok(field.values.iter().sum::<f64>() * self.cell_volume())
    }

    /// `(Σ |u|^p h_x h_y)^{1/p}`.
    pub fn lp_norm(&self, field: &ScalarField, p: f64) -> Result<f64> {
        Ok(self.lp_norm_pow(field, p)?.powf(1.0 / p))
    }

    /// `Σ |u|^p h_x h_y`, the `p`-th power of [`Self::lp_norm`].
    pub fn lp_norm_pow(&self, field: &ScalarField, p: f64) -> Result<f64> {
        self.check_field(field)?;
        if !(p >= 1.0) || p.is_infinite() {
            return Err(Error::Domain(format!("Lp norm requires finite p >= 1, got {p}")));
        }
        if let Some(v) = field.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field value {v}")));
        }
        Ok(field.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.cell_volume())
    }

    /// Cell-centered gradient: central differences inside, second-order
    /// one-sided differences at boundary cells. Exact for quadratics along
    /// each axis when at least three cells are available.
    pub fn gradient(&self, field: &ScalarField) -> Result<Vec<[f64; 2]>> {
        self.check_field(field)?;
        let (nx, ny) = (self.nx, self.ny);
        let u = &field.values;
        let mut out = Vec::with_capacity(u.len());
        for j in 0..ny {
            for i in 0..nx {
                let dx = diff_1d(nx, self.hx, i, |k| u[j * nx + k]);
                let dy = diff_1d(ny, self.hy, j, |k| u[k * nx + i]);
                out.push([dx, dy]);
            }
        }
        Ok(out)
    }

    /// `Σ |∇u|^q h_x h_y`.
    pub fn grad_norm_integral(&self, field: &ScalarField, q: f64) -> Result<f64> {
        if !(q > 0.0) {
            return Err(Error::Domain(format!("gradient exponent must be positive, got {q}")));
        }
        let grad = self.gradient(field)?;
        Ok(grad_power_sum(&grad, q) * self.cell_volume())
    }

    /// `Σ_{faces in segment} u(adjacent cell) · |face|`.
    pub fn boundary_integral(&self, field: &ScalarField, segment: Segment) -> Result<f64> {
        self.check_field(field)?;
        Ok(self.boundary_integral_with(segment, |_, f| field.values[f.cell]))
    }

    /// `Σ_{faces in segment} expr(face id, face) · |face|`.
    pub fn boundary_integral_with(
        &self,
        segment: Segment,
        expr: impl Fn(usize, &BoundaryFace) -> f64,
    ) -> f64 {
        self.faces_in(segment).map(|(k, f)| expr(k, f) * f.length).sum()
    }

    /// Writes `i,j,x,y,u,v` rows, one per cell.
    pub fn write_snapshot_csv<W: Write>(
        &self,
        mut out: W,
        u: &ScalarField,
        v: &ScalarField,
    ) -> Result<()> {
        self.check_field(u)?;
        self.check_field(v)?;
        writeln!(out, "i,j,x,y,u,v")?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (x, y) = self.center(i, j);
                let k = self.index(i, j);
                writeln!(out, "{i},{j},{x:e},{y:e},{:e},{:e}", u.values[k], v.values[k])?;
            }
        }
        Ok(())
    }
}

pub(crate) fn grad_power_sum(grad: &[[f64; 2]], q: f64) -> f64 {
    grad.iter()
        .map(|g| {
            let m = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if m == 0.0 {
                0.0
            } else {
                m.powf(q)
            }
        })
        .sum()
}

fn diff_1d(n: usize, h: f64, k: usize, u: impl Fn(usize) -> f64) -> f64 {
    match n {
        1 => 0.0,
        2 => (u(1) - u(0)) / h,
        _ if k == 0 => (-3.0 * u(0) + 4.0 * u(1) - u(2)) / (2.0 * h),
        _ if k == n - 1 => (3.0 * u(n - 1) - 4.0 * u(n - 2) + u(n - 3)) / (2.0 * h),
        _ => (u(k + 1) - u(k - 1)) / (2.0 * h),
    }
}

/// Cell averages on an `nx × ny` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::Validation(format!(
                "expected {} values for a {nx}x{ny} field, got {}",
                nx * ny,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field value {v}")));
        }
        Ok(Self { nx, ny, values })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { nx: self.nx, ny: self.ny, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise `f(self, other)`; both fields must have the same shape.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::Validation(format!(
                "field shapes differ: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(Self {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Segment::Robin => "robin",
            Segment::Neumann => "neumann",
            Segment::All => "all",
        };
        f.write_str(s)
    }
}
