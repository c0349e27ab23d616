//! Geometric kernel for polygonal lines: squared distances, projection
//! index, Voronoi cell queries, observation neighborhoods and local grids.
//!
//! Everything here is a pure function of its inputs.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::LatticeGrid;

/// Relative tolerance used to detect ties between squared distances.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polygonal line has no vertices")]
    EmptyLine,
    #[error("operation needs a line with at least two vertices, got {0}")]
    DegenerateLine(usize),
    #[error("consecutive vertices {0} and {next} coincide", next = .0 + 1)]
    RepeatedVertex(usize),
    #[error("non-finite coordinate")]
    NonFinite,
}

/// A point of R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point { coords }
    }

    pub fn zeros(dim: usize) -> Self {
        Point { coords: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    pub fn norm(&self) -> f64 {
        sq_norm(&self.coords).sqrt()
    }

    pub fn sq_dist(&self, other: &Point) -> f64 {
        sq_dist(&self.coords, &other.coords)
    }

    pub fn translated(&self, shift: &[f64]) -> Point {
        Point::new(self.coords.iter().zip(shift).map(|(a, b)| a + b).collect())
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Point::new(coords)
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(coords: [f64; N]) -> Self {
        Point::new(coords.to_vec())
    }
}

pub(crate) fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dim(expected: usize, got: usize) -> Result<(), GeometryError> {
    if expected != got {
        return Err(GeometryError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Parameter of the closest point of the closed segment `[a, b]` to `x`,
/// together with the squared distance. Endpoint distances are computed
/// directly so that exact ties at shared vertices stay exact.
#[inline]
pub(crate) fn segment_param(x: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut len2 = 0.0;
    let mut dot = 0.0;
    for i in 0..x.len() {
        let ab = b[i] - a[i];
        len2 += ab * ab;
        dot += (x[i] - a[i]) * ab;
    }
    if len2 == 0.0 || dot <= 0.0 {
        return (0.0, sq_dist(x, a));
    }
    if dot >= len2 {
        return (1.0, sq_dist(x, b));
    }
    let t = dot / len2;
    let mut d2 = 0.0;
    for i in 0..x.len() {
        let diff = x[i] - (a[i] + t * (b[i] - a[i]));
        d2 += diff * diff;
    }
    (t, d2)
}

/// Closest point of a closed segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentProjection {
    pub t_star: f64,
    pub foot: Point,
    pub sq_dist: f64,
}

/// Projects `x` on the closed segment `[a, b]`. For a degenerate segment
/// (`a == b`) the parameter is 0.
pub fn project_to_segment(
    x: &Point,
    a: &Point,
    b: &Point,
) -> Result<SegmentProjection, GeometryError> {
    check_dim(x.dim(), a.dim())?;
    check_dim(x.dim(), b.dim())?;
    let (t, d2) = segment_param(&x.coords, &a.coords, &b.coords);
    let foot = a
        .coords
        .iter()
        .zip(&b.coords)
        .map(|(p, q)| p + t * (q - p))
        .collect();
    Ok(SegmentProjection {
        t_star: t,
        foot: Point::new(foot),
        sq_dist: d2,
    })
}

/// A polygonal line given by its ordered vertices, stored flat.
///
/// Equality and hashing are bitwise on the coordinates (with `-0.0`
/// identified with `0.0`), which is exact for lattice vertices.
#[derive(Clone, Serialize, Deserialize)]
pub struct PolygonalLine {
    dim: usize,
    coords: Vec<f64>,
}

impl PolygonalLine {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let first = vertices.first().ok_or(GeometryError::EmptyLine)?;
        let dim = first.dim();
        let mut coords = Vec::with_capacity(dim * vertices.len());
        for v in &vertices {
            check_dim(dim, v.dim())?;
            coords.extend_from_slice(v.coords());
        }
        Self::from_flat(dim, coords)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self, GeometryError> {
        if dim == 0 || coords.is_empty() {
            return Err(GeometryError::EmptyLine);
        }
        if coords.len() % dim != 0 {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                got: coords.len() % dim,
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let line = PolygonalLine { dim, coords };
        for i in 0..line.segment_count() {
            if line.vertex(i) == line.vertex(i + 1) {
                return Err(GeometryError::RepeatedVertex(i + 1));
            }
        }
        Ok(line)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// K(f): number of segments.
    pub fn segment_count(&self) -> usize {
        self.vertex_count() - 1
    }

    /// Zero-based vertex access.
    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vertices(&self) -> impl DoubleEndedIterator<Item = &[f64]> + ExactSizeIterator + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn to_points(&self) -> Vec<Point> {
        self.vertices().map(|v| Point::new(v.to_vec())).collect()
    }

    pub fn flat_coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn length(&self) -> f64 {
        (0..self.segment_count())
            .map(|i| sq_dist(self.vertex(i), self.vertex(i + 1)).sqrt())
            .sum()
    }

    /// Squared distance from `x` to the line. `x` must have the line's
    /// dimension; see [`loss`] for the checked version.
    pub fn sq_dist_to(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let n = self.vertex_count();
        if n == 1 {
            return sq_dist(x, self.vertex(0));
        }
        let mut best = f64::INFINITY;
        for i in 0..n - 1 {
            let (_, d2) = segment_param(x, self.vertex(i), self.vertex(i + 1));
            if d2 < best {
                best = d2;
            }
        }
        best
    }

    /// Point at arc length `s` from the first vertex, clamped to the line.
    pub fn point_at(&self, s: f64) -> Point {
        let mut remaining = s.max(0.0);
        for i in 0..self.segment_count() {
            let a = self.vertex(i);
            let b = self.vertex(i + 1);
            let len = sq_dist(a, b).sqrt();
            if remaining <= len {
                let t = remaining / len;
                return Point::new(a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect());
            }
            remaining -= len;
        }
        Point::new(self.vertex(self.vertex_count() - 1).to_vec())
    }

    pub fn reversed(&self) -> PolygonalLine {
        let mut coords = Vec::with_capacity(self.coords.len());
        for v in self.vertices().rev() {
            coords.extend_from_slice(v);
        }
        PolygonalLine {
            dim: self.dim,
            coords,
        }
    }

    /// Representative of the line modulo reversal: the lexicographically
    /// smaller of the line and its reverse.
    pub fn canonical(&self) -> PolygonalLine {
        let rev = self.reversed();
        if rev.canonical_cmp(self) == Ordering::Less {
            rev
        } else {
            self.clone()
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.reversed().canonical_cmp(self) != Ordering::Less
    }

    /// Lexicographic order on the vertex coordinates; shorter lines first on
    /// a common prefix.
    pub fn canonical_cmp(&self, other: &PolygonalLine) -> Ordering {
        for (a, b) in self.coords.iter().zip(&other.coords) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.coords.len().cmp(&other.coords.len())
    }

    pub fn translated(&self, shift: &[f64]) -> PolygonalLine {
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(i, c)| c + shift[i % self.dim])
            .collect();
        PolygonalLine {
            dim: self.dim,
            coords,
        }
    }

    /// True when every vertex is distinct from every other.
    pub fn has_distinct_vertices(&self) -> bool {
        let n = self.vertex_count();
        for i in 0..n {
            for j in i + 1..n {
                if self.vertex(i) == self.vertex(j) {
                    return false;
                }
            }
        }
        true
    }
}

fn norm_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

impl PartialEq for PolygonalLine {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.coords.len() == other.coords.len()
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(a, b)| norm_bits(*a) == norm_bits(*b))
    }
}

impl Eq for PolygonalLine {}

impl Hash for PolygonalLine {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.dim.hash(state);
        for c in &self.coords {
            norm_bits(*c).hash(state);
        }
    }
}

impl fmt::Debug for PolygonalLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.vertices()).finish()
    }
}

/// Instantaneous loss: squared distance from `x` to its nearest point on `f`.
pub fn loss(f: &PolygonalLine, x: &Point) -> Result<f64, GeometryError> {
    check_dim(f.dim(), x.dim())?;
    Ok(f.sq_dist_to(x.coords()))
}

/// Nearest point of a line, resolved with the sup rule on the arc-length
/// parameter; a projection landing on a shared vertex belongs to the later
/// segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineProjection {
    /// Zero-based segment index.
    pub segment: usize,
    pub t: f64,
    /// Arc length from the first vertex.
    pub arc_length: f64,
    pub sq_dist: f64,
}

pub(crate) fn project_on_line(f: &PolygonalLine, x: &[f64]) -> LineProjection {
    let mut best = LineProjection {
        segment: 0,
        t: 0.0,
        arc_length: 0.0,
        sq_dist: f64::INFINITY,
    };
    let mut cum = 0.0;
    for i in 0..f.segment_count() {
        let a = f.vertex(i);
        let b = f.vertex(i + 1);
        let len = sq_dist(a, b).sqrt();
        let (t, d2) = segment_param(x, a, b);
        let s = cum + t * len;
        let tol = TIE_TOL * best.sq_dist.max(1.0);
        let better = d2 < best.sq_dist - tol
            || ((d2 - best.sq_dist).abs() <= tol && s >= best.arc_length);
        if better {
            best = LineProjection {
                segment: i,
                t,
                arc_length: s,
                sq_dist: d2.min(best.sq_dist),
            };
        }
        cum += len;
    }
    best
}

/// Projection index s_f(x): the largest arc length whose point on `f`
/// minimizes the distance to `x`.
pub fn projection_index(f: &PolygonalLine, x: &Point) -> Result<f64, GeometryError> {
    check_dim(f.dim(), x.dim())?;
    if f.vertex_count() < 2 {
        return Err(GeometryError::DegenerateLine(f.vertex_count()));
    }
    Ok(project_on_line(f, x.coords()).arc_length)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellKind {
    Vertex,
    Segment,
}

/// Voronoi cell of a polygonal line; `index` is one-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub kind: CellKind,
    pub index: usize,
}

impl CellId {
    pub fn vertex(index: usize) -> Self {
        CellId {
            kind: CellKind::Vertex,
            index,
        }
    }

    pub fn segment(index: usize) -> Self {
        CellId {
            kind: CellKind::Segment,
            index,
        }
    }

    /// Position in the order V_1, S_1, V_2, S_2, ...
    fn order_key(&self) -> usize {
        match self.kind {
            CellKind::Vertex => 2 * self.index,
            CellKind::Segment => 2 * self.index + 1,
        }
    }
}

impl Ord for CellId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

impl PartialOrd for CellId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CellKind::Vertex => write!(f, "V{}", self.index),
            CellKind::Segment => write!(f, "S{}", self.index),
        }
    }
}

pub(crate) fn assign_cell(f: &PolygonalLine, x: &[f64]) -> CellId {
    let n = f.vertex_count();
    let mut best = CellId::vertex(1);
    let mut best_d2 = sq_dist(x, f.vertex(0));
    for i in 0..n - 1 {
        // the open segment only generates its cell when the foot is interior
        let (t, d2) = segment_param(x, f.vertex(i), f.vertex(i + 1));
        if t > 0.0 && t < 1.0 && d2 < best_d2 {
            best = CellId::segment(i + 1);
            best_d2 = d2;
        }
        let dv = sq_dist(x, f.vertex(i + 1));
        if dv < best_d2 {
            best = CellId::vertex(i + 2);
            best_d2 = dv;
        }
    }
    best
}

/// Voronoi cell containing `x`: the vertex or open segment strictly nearest
/// to it, ties going to the lowest index and to the vertex at equal index.
pub fn voronoi_assign(f: &PolygonalLine, x: &Point) -> Result<CellId, GeometryError> {
    check_dim(f.dim(), x.dim())?;
    if f.vertex_count() < 2 {
        return Err(GeometryError::DegenerateLine(f.vertex_count()));
    }
    Ok(assign_cell(f, x.coords()))
}

/// Observations falling in the cells around the projection of a point.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodInfo {
    /// Sorted in the order V_1, S_1, V_2, ...
    pub cells: Vec<CellId>,
    pub members: Vec<Point>,
    pub mean: Point,
    pub diameter: f64,
}

/// Cells whose closure contains vertex `j` or `j + 1` (one-based) of a line
/// with `k` segments.
fn cells_around_segment(j: usize, k: usize) -> Vec<CellId> {
    let mut cells = Vec::with_capacity(5);
    if j >= 2 {
        cells.push(CellId::segment(j - 1));
    }
    cells.push(CellId::vertex(j));
    cells.push(CellId::segment(j));
    cells.push(CellId::vertex(j + 1));
    if j < k {
        cells.push(CellId::segment(j + 1));
    }
    cells
}

/// Largest pairwise distance of a point set, 0 for fewer than two points.
pub fn diameter(points: &[Point]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.max(points[i].sq_dist(&points[j]));
        }
    }
    best.sqrt()
}

pub fn mean(points: &[Point]) -> Option<Point> {
    let first = points.first()?;
    let mut acc = vec![0.0; first.dim()];
    for p in points {
        for (a, c) in acc.iter_mut().zip(p.coords()) {
            *a += c;
        }
    }
    let n = points.len() as f64;
    Some(Point::new(acc.into_iter().map(|a| a / n).collect()))
}

/// N(x) with respect to `f`, restricted to `history`.
///
/// The projection of `x` selects a segment s_j; N(x) collects every cell
/// whose closure contains v_j or v_{j+1}. With no member the mean falls
/// back to `x` and the diameter to 0.
pub fn observation_neighborhood(
    f: &PolygonalLine,
    history: &[Point],
    x: &Point,
) -> Result<NeighborhoodInfo, GeometryError> {
    check_dim(f.dim(), x.dim())?;
    if f.vertex_count() < 2 {
        return Err(GeometryError::DegenerateLine(f.vertex_count()));
    }
    let proj = project_on_line(f, x.coords());
    let cells = cells_around_segment(proj.segment + 1, f.segment_count());
    let mut members = Vec::new();
    for h in history {
        check_dim(f.dim(), h.dim())?;
        let cell = assign_cell(f, h.coords());
        if cells.contains(&cell) {
            members.push(h.clone());
        }
    }
    let (mean, diameter) = match mean(&members) {
        Some(m) => (m, diameter(&members)),
        None => (x.clone(), 0.0),
    };
    Ok(NeighborhoodInfo {
        cells,
        members,
        mean,
        diameter,
    })
}

/// Local grid: lattice points of the grid inside the closed ball centered at
/// the neighborhood mean with radius its diameter.
pub fn local_grid(grid: &LatticeGrid, nb: &NeighborhoodInfo) -> Result<Vec<Point>, GeometryError> {
    check_dim(grid.dim(), nb.mean.dim())?;
    Ok(grid.points_within(nb.mean.coords(), nb.diameter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec())
    }

    fn line(vs: &[&[f64]]) -> PolygonalLine {
        PolygonalLine::new(vs.iter().map(|v| p(v)).collect()).unwrap()
    }

    #[test]
    fn segment_projection_examples() {
        let a = p(&[0.0, 0.0]);
        let b = p(&[2.0, 0.0]);
        let pr = project_to_segment(&p(&[1.0, 3.0]), &a, &b).unwrap();
        assert_eq!(pr.t_star, 0.5);
        assert_eq!(pr.foot, p(&[1.0, 0.0]));
        assert_eq!(pr.sq_dist, 9.0);

        let pr = project_to_segment(&p(&[-1.0, 0.0]), &a, &b).unwrap();
        assert_eq!((pr.t_star, pr.sq_dist), (0.0, 1.0));
        assert_eq!(pr.foot, a);

        let pr = project_to_segment(&p(&[3.0, 4.0]), &a, &b).unwrap();
        assert_eq!((pr.t_star, pr.sq_dist), (1.0, 17.0));
        assert_eq!(pr.foot, b);
    }

    #[test]
    fn degenerate_segment_has_zero_parameter() {
        let a = p(&[1.0, 1.0]);
        let pr = project_to_segment(&p(&[4.0, 5.0]), &a, &a).unwrap();
        assert_eq!(pr.t_star, 0.0);
        assert_eq!(pr.sq_dist, 25.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = project_to_segment(&p(&[1.0]), &p(&[0.0, 0.0]), &p(&[1.0, 0.0])).unwrap_err();
        assert_eq!(err, GeometryError::DimensionMismatch { expected: 1, got: 2 });
        let f = line(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert!(loss(&f, &p(&[0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn loss_examples() {
        let f = line(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(loss(&f, &p(&[2.0, 2.0])).unwrap(), 2.0);
        let g = line(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(loss(&g, &p(&[0.5, 0.0])).unwrap(), 0.0);
        assert_eq!(loss(&g, &p(&[0.5, -1.0])).unwrap(), 1.0);
        let single = line(&[&[1.0, 1.0]]);
        assert_eq!(loss(&single, &p(&[1.0, 3.0])).unwrap(), 4.0);
    }

    #[test]
    fn line_construction_errors() {
        assert_eq!(PolygonalLine::new(vec![]).unwrap_err(), GeometryError::EmptyLine);
        let err = PolygonalLine::new(vec![p(&[0.0, 0.0]), p(&[0.0, 0.0])]).unwrap_err();
        assert_eq!(err, GeometryError::RepeatedVertex(1));
        assert!(PolygonalLine::new(vec![p(&[0.0, 0.0]), p(&[1.0])]).is_err());
        assert_eq!(
            PolygonalLine::new(vec![p(&[f64::NAN])]).unwrap_err(),
            GeometryError::NonFinite
        );
    }

    #[test]
    fn length_and_segment_count() {
        let f = line(&[&[0.0, 0.0], &[3.0, 4.0], &[3.0, 5.0]]);
        assert_eq!(f.segment_count(), 2);
        assert_eq!(f.length(), 6.0);
    }

    #[test]
    fn projection_index_examples() {
        let f = line(&[&[0.0, 0.0], &[2.0, 0.0]]);
        assert_eq!(projection_index(&f, &p(&[1.0, 1.0])).unwrap(), 1.0);
        let sq = line(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]]);
        assert_eq!(projection_index(&sq, &p(&[0.0, 0.5])).unwrap(), 3.0);
        let g = line(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(projection_index(&g, &p(&[1.0, 0.5])).unwrap(), 1.5);
        let single = line(&[&[0.0, 0.0]]);
        assert_eq!(
            projection_index(&single, &p(&[1.0, 0.0])).unwrap_err(),
            GeometryError::DegenerateLine(1)
        );
    }

    #[test]
    fn projection_on_shared_vertex_goes_to_later_segment() {
        let g = line(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]]);
        let pr = project_on_line(&g, &[2.0, -1.0]);
        assert_eq!(pr.segment, 1);
        assert_eq!(pr.t, 0.0);
        assert_eq!(pr.arc_length, 1.0);
    }

    #[test]
    fn voronoi_examples() {
        let f = line(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(voronoi_assign(&f, &p(&[-1.0, 1.0])).unwrap(), CellId::vertex(1));
        assert_eq!(voronoi_assign(&f, &p(&[0.5, 2.0])).unwrap(), CellId::segment(1));
        assert_eq!(voronoi_assign(&f, &p(&[2.0, 0.0])).unwrap(), CellId::vertex(2));
    }

    #[test]
    fn voronoi_tie_prefers_lowest_index() {
        // equidistant from V1 and V3 of a V shape, farther from V2 and the segments' interiors
        let f = line(&[&[-1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(voronoi_assign(&f, &p(&[0.0, 3.0])).unwrap(), CellId::vertex(1));
    }

    #[test]
    fn neighborhood_cells_match_figure_example() {
        let f = line(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]);
        let nb = observation_neighborhood(&f, &[], &p(&[2.5, 1.0])).unwrap();
        assert_eq!(
            nb.cells,
            vec![CellId::segment(2), CellId::vertex(3), CellId::segment(3), CellId::vertex(4)]
        );
        assert_eq!(nb.mean, p(&[2.5, 1.0]));
        assert_eq!(nb.diameter, 0.0);
    }

    #[test]
    fn neighborhood_cells_first_segment_against_closure_oracle() {
        let f = line(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]);
        let nb = observation_neighborhood(&f, &[], &p(&[0.5, 1.0])).unwrap();
        // brute force: enumerate every cell and keep those whose closure holds v1 or v2
        let adjacent = [1usize, 2];
        let mut expected = Vec::new();
        for i in 1..=4 {
            let closure = [i];
            if closure.iter().any(|v| adjacent.contains(v)) {
                expected.push(CellId::vertex(i));
            }
            if i <= 3 {
                let closure = [i, i + 1];
                if closure.iter().any(|v| adjacent.contains(v)) {
                    expected.push(CellId::segment(i));
                }
            }
        }
        expected.sort();
        assert_eq!(nb.cells, expected);
        assert_eq!(
            expected,
            vec![CellId::vertex(1), CellId::segment(1), CellId::vertex(2), CellId::segment(2)]
        );
    }

    #[test]
    fn neighborhood_members_mean_and_diameter() {
        let f = line(&[&[0.0, 0.0], &[2.0, 0.0], &[4.0, 0.0]]);
        let history = vec![p(&[0.0, 0.0]), p(&[2.0, 0.0]), p(&[4.0, 0.5])];
        // projection on s_1 -> cells V1, S1, V2, S2
        let nb = observation_neighborhood(&f, &history, &p(&[1.0, 1.0])).unwrap();
        assert_eq!(nb.members, vec![p(&[0.0, 0.0]), p(&[2.0, 0.0])]);
        assert_eq!(nb.mean, p(&[1.0, 0.0]));
        assert_eq!(nb.diameter, 2.0);
    }

    #[test]
    fn canonical_is_reversal_invariant() {
        let f = line(&[&[2.0, 0.0], &[1.0, 1.0], &[0.0, 0.0]]);
        let c = f.canonical();
        assert_eq!(c, f.reversed().canonical());
        assert_eq!(c.vertex(0), &[0.0, 0.0]);
        assert!(c.is_canonical());
    }

    fn arb_line(dim: usize) -> impl Strategy<Value = PolygonalLine> {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), 2..6).prop_filter_map(
            "distinct consecutive vertices",
            move |vs| PolygonalLine::new(vs.into_iter().map(Point::new).collect()).ok(),
        )
    }

    proptest! {
        #[test]
        fn loss_matches_dense_sampling(f in arb_line(2), x in prop::collection::vec(-6.0f64..6.0, 2)) {
            let x = Point::new(x);
            let exact = loss(&f, &x).unwrap();
            // sample every segment, endpoints included, with step at most 1e-3
            let mut sampled = f64::INFINITY;
            for j in 0..f.segment_count() {
                let (a, b) = (f.vertex(j), f.vertex(j + 1));
                let seg = sq_dist(a, b).sqrt();
                let steps = (seg / 1e-3).ceil() as usize;
                for i in 0..=steps {
                    let t = i as f64 / steps as f64;
                    let q: Vec<f64> = a.iter().zip(b).map(|(u, v)| u + t * (v - u)).collect();
                    sampled = sampled.min(sq_dist(&q, x.coords()));
                }
            }
            prop_assert!(exact <= sampled + 1e-12);
            prop_assert!(sampled - exact <= 1e-6);
        }

        #[test]
        fn voronoi_cell_is_a_valid_partition_label(f in arb_line(3), x in prop::collection::vec(-6.0f64..6.0, 3)) {
            let cell = voronoi_assign(&f, &Point::new(x.clone())).unwrap();
            match cell.kind {
                CellKind::Vertex => prop_assert!(cell.index >= 1 && cell.index <= f.vertex_count()),
                CellKind::Segment => prop_assert!(cell.index >= 1 && cell.index <= f.segment_count()),
            }
            // the generator of the cell realizes the loss
            let d = match cell.kind {
                CellKind::Vertex => sq_dist(&x, f.vertex(cell.index - 1)),
                CellKind::Segment => segment_param(&x, f.vertex(cell.index - 1), f.vertex(cell.index)).1,
            };
            prop_assert!((d - f.sq_dist_to(&x)).abs() <= 1e-12 * d.max(1.0));
        }

        #[test]
        fn neighborhood_is_translation_equivariant(
            f in arb_line(2),
            hist in prop::collection::vec(prop::collection::vec(-6.0f64..6.0, 2), 0..12),
            x in prop::collection::vec(-6.0f64..6.0, 2),
            shift in prop::collection::vec(-3.0f64..3.0, 2),
        ) {
            let history: Vec<Point> = hist.into_iter().map(Point::new).collect();
            let x = Point::new(x);
            let nb = observation_neighborhood(&f, &history, &x).unwrap();
            let moved: Vec<Point> = history.iter().map(|h| h.translated(&shift)).collect();
            let nb2 = observation_neighborhood(&f.translated(&shift), &moved, &x.translated(&shift)).unwrap();
            prop_assert_eq!(&nb.cells, &nb2.cells);
            prop_assert_eq!(nb.members.len(), nb2.members.len());
            prop_assert!((nb.diameter - nb2.diameter).abs() < 1e-9);
            for (a, b) in nb.mean.translated(&shift).coords().iter().zip(nb2.mean.coords()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sup_rule_on_symmetric_ties() {
        // a U shape symmetric around x = 0.5: the point (0.5, 2) is equidistant
        // from both arms' tops; the returned index is the larger arc length
        let f = line(&[&[0.0, 2.0], &[0.0, 0.0], &[1.0, 0.0], &[1.0, 2.0]]);
        let x = p(&[0.5, 2.0]);
        assert_eq!(projection_index(&f, &x).unwrap(), 5.0);
    }
}
