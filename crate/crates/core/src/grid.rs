//! Study region, its rectangular partition, rook adjacency and point binning.
//!
//! Boxes are indexed row-major from the `(x_min, y_min)` corner: box
//! `row * n_x + col` spans columns left to right and rows bottom to top. Boxes
//! are half-open `[x0, x1) x [y0, y1)`, except that the last column and the
//! last row are closed on the region's max boundary, so a point on a shared
//! edge belongs to the box with the larger column (row) index.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionSpec")]
pub struct StudyRegion {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Deserialize)]
struct RegionSpec {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl TryFrom<RegionSpec> for StudyRegion {
    type Error = Error;

    fn try_from(s: RegionSpec) -> Result<Self> {
        StudyRegion::new(s.x_min, s.x_max, s.y_min, s.y_max)
    }
}

impl StudyRegion {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidRegion(format!(
                "[{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    /// Closed-rectangle membership.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Regular `n_x` by `n_y` partition of a [`StudyRegion`] into equal boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec")]
pub struct Grid {
    region: StudyRegion,
    n_x: usize,
    n_y: usize,
}

#[derive(Deserialize)]
struct GridSpec {
    region: StudyRegion,
    n_x: usize,
    n_y: usize,
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;

    fn try_from(s: GridSpec) -> Result<Self> {
        Grid::new(s.region, s.n_x, s.n_y)
    }
}

impl Grid {
    pub fn new(region: StudyRegion, n_x: usize, n_y: usize) -> Result<Self> {
        if n_x == 0 || n_y == 0 || n_x.checked_mul(n_y).is_none() {
            return Err(Error::InvalidGrid { n_x, n_y });
        }
        Ok(Self { region, n_x, n_y })
    }

    pub fn region(&self) -> &StudyRegion {
        &self.region
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n_boxes(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn box_width(&self) -> f64 {
        (self.region.x_max - self.region.x_min) / self.n_x as f64
    }

    pub fn box_height(&self) -> f64 {
        (self.region.y_max - self.region.y_min) / self.n_y as f64
    }

    /// Area of every box; the partition is uniform.
    pub fn box_area(&self) -> f64 {
        self.region.area() / self.n_boxes() as f64
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n_y && col < self.n_x);
        row * self.n_x + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.n_x, index % self.n_x)
    }

    fn x_edge(&self, k: usize) -> f64 {
        let r = &self.region;
        if k == self.n_x {
            r.x_max
        } else {
            r.x_min + (r.x_max - r.x_min) * k as f64 / self.n_x as f64
        }
    }

    fn y_edge(&self, k: usize) -> f64 {
        let r = &self.region;
        if k == self.n_y {
            r.y_max
        } else {
            r.y_min + (r.y_max - r.y_min) * k as f64 / self.n_y as f64
        }
    }

    /// `(x0, x1, y0, y1)` of a box.
    pub fn box_bounds(&self, index: usize) -> (f64, f64, f64, f64) {
        let (row, col) = self.row_col(index);
        (
            self.x_edge(col),
            self.x_edge(col + 1),
            self.y_edge(row),
            self.y_edge(row + 1),
        )
    }

    pub fn box_center(&self, index: usize) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.box_bounds(index);
        ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }

    /// Index of the box containing `(x, y)`, or `None` outside the region.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        if !self.region.contains(x, y) {
            return None;
        }
        let col = Self::slot(
            x,
            self.n_x,
            |k| self.x_edge(k),
            self.region.x_min,
            self.region.x_max,
        );
        let row = Self::slot(
            y,
            self.n_y,
            |k| self.y_edge(k),
            self.region.y_min,
            self.region.y_max,
        );
        Some(self.index(row, col))
    }

    // The floor estimate can be off by one on an edge through roundoff; the
    // edge function is the single source of truth for the convention.
    fn slot(v: f64, n: usize, edge: impl Fn(usize) -> f64, lo: f64, hi: f64) -> usize {
        let guess = ((v - lo) / (hi - lo) * n as f64).floor();
        let mut k = if guess < 0.0 {
            0
        } else {
            (guess as usize).min(n - 1)
        };
        while k > 0 && v < edge(k) {
            k -= 1;
        }
        while k + 1 < n && v >= edge(k + 1) {
            k += 1;
        }
        k
    }

    /// Writes one value per box as a CSV matrix with `n_y` rows of `n_x`
    /// columns. The first CSV row is grid row 0 (the `y_min` edge).
    pub fn write_matrix_csv<T: std::fmt::Display, W: Write>(
        &self,
        values: &[T],
        mut out: W,
    ) -> Result<()> {
        if values.len() != self.n_boxes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_boxes(),
                actual: values.len(),
            });
        }
        for row in values.chunks(self.n_x) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Weighted, symmetric neighbor lists without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    /// Rook contiguity: boxes sharing an edge, all weights 1.
    pub fn rook(grid: &Grid) -> Self {
        let (n_x, n_y) = (grid.n_x(), grid.n_y());
        let mut adjacency = vec![Vec::with_capacity(4); grid.n_boxes()];
        for row in 0..n_y {
            for col in 0..n_x {
                let list = &mut adjacency[grid.index(row, col)];
                if row > 0 {
                    list.push((grid.index(row - 1, col), 1.0));
                }
                if col > 0 {
                    list.push((grid.index(row, col - 1), 1.0));
                }
                if col + 1 < n_x {
                    list.push((grid.index(row, col + 1), 1.0));
                }
                if row + 1 < n_y {
                    list.push((grid.index(row + 1, col), 1.0));
                }
            }
        }
        Self { adjacency }
    }

    /// Builds a graph on `n` nodes from undirected weighted edges `(i, j, d_ij)`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) out of range"
                )));
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at {i}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParameter(format!("edge weight {w}")));
            }
            if adjacency[i].iter().any(|&(k, _)| k == j) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate edge ({i}, {j})"
                )));
            }
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(Self { adjacency })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn n_directed_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }
}

/// Observed point locations inside a study region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PatternSpec")]
pub struct PointPattern {
    region: StudyRegion,
    points: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct PatternSpec {
    region: StudyRegion,
    points: Vec<(f64, f64)>,
}

impl TryFrom<PatternSpec> for PointPattern {
    type Error = Error;

    fn try_from(s: PatternSpec) -> Result<Self> {
        PointPattern::new(s.region, s.points)
    }
}

impl PointPattern {
    pub fn new(region: StudyRegion, points: Vec<(f64, f64)>) -> Result<Self> {
        if let Some((index, &(x, y))) = points
            .iter()
            .enumerate()
            .find(|(_, &(x, y))| !region.contains(x, y))
        {
            return Err(Error::PointOutsideRegion { index, x, y });
        }
        Ok(Self { region, points })
    }

    pub fn region(&self) -> &StudyRegion {
        &self.region
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-box counts `N(A_i)` of a pattern on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BinnedSpec")]
pub struct BinnedPattern {
    grid: Grid,
    counts: Vec<u64>,
    total: u64,
}

// `total` is recomputed on load.
#[derive(Deserialize)]
struct BinnedSpec {
    grid: Grid,
    counts: Vec<u64>,
}

impl TryFrom<BinnedSpec> for BinnedPattern {
    type Error = Error;

    fn try_from(s: BinnedSpec) -> Result<Self> {
        BinnedPattern::from_counts(s.grid, s.counts)
    }
}

impl BinnedPattern {
    pub fn from_counts(grid: Grid, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != grid.n_boxes() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_boxes(),
                actual: counts.len(),
            });
        }
        let total = counts.iter().sum();
        Ok(Self {
            grid,
            counts,
            total,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_boxes(&self) -> usize {
        self.counts.len()
    }

    /// Area `mu(A_i)` of box `i`.
    pub fn area(&self, _i: usize) -> f64 {
        self.grid.box_area()
    }
}

/// Counts the points of `pattern` falling in each box of `grid`.
pub fn bin_points(pattern: &PointPattern, grid: &Grid) -> Result<BinnedPattern> {
    let mut counts = vec![0u64; grid.n_boxes()];
    for (index, &(x, y)) in pattern.points().iter().enumerate() {
        let b = grid
            .locate(x, y)
            .ok_or(Error::PointOutsideRegion { index, x, y })?;
        counts[b] += 1;
    }
    BinnedPattern::from_counts(*grid, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid(n_x: usize, n_y: usize) -> Grid {
        let region = StudyRegion::new(0.0, n_x as f64, 0.0, n_y as f64).unwrap();
        Grid::new(region, n_x, n_y).unwrap()
    }

    #[test]
    fn simulation_grid_has_400_unit_boxes() {
        let g = unit_grid(20, 20);
        assert_eq!(g.n_boxes(), 400);
        assert_eq!(g.box_area(), 1.0);
    }

    #[test]
    fn single_box_grid() {
        let g = unit_grid(1, 1);
        assert_eq!(g.n_boxes(), 1);
        assert_eq!(g.box_area(), 1.0);
        assert_eq!(NeighborGraph::rook(&g).n_directed_edges(), 0);
    }

    #[test]
    fn court_grid_boxes_are_one_square_foot() {
        let region = StudyRegion::new(-250.0, 250.0, -50.0, 300.0).unwrap();
        let g = Grid::new(region, 50, 35).unwrap();
        assert_eq!(g.n_boxes(), 1750);
        assert!((g.box_area() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(StudyRegion::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(StudyRegion::new(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(StudyRegion::new(0.0, f64::NAN, 0.0, 1.0).is_err());
        let r = StudyRegion::new(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(Grid::new(r, 0, 3).is_err());
        assert!(Grid::new(r, 3, 0).is_err());
    }

    #[test]
    fn rook_degrees_on_3x3() {
        let g = unit_grid(3, 3);
        let nb = NeighborGraph::rook(&g);
        assert_eq!(nb.neighbors(g.index(1, 1)).len(), 4);
        assert_eq!(nb.neighbors(g.index(0, 0)).len(), 2);
        assert_eq!(nb.neighbors(g.index(0, 1)).len(), 3);
    }

    #[test]
    fn rook_edge_count_matches_pair_enumeration() {
        let g = unit_grid(20, 20);
        // Oracle: every ordered pair of boxes at Manhattan distance one.
        let mut pairs = 0;
        for a in 0..g.n_boxes() {
            for b in 0..g.n_boxes() {
                let (ra, ca) = g.row_col(a);
                let (rb, cb) = g.row_col(b);
                if ra.abs_diff(rb) + ca.abs_diff(cb) == 1 {
                    pairs += 1;
                }
            }
        }
        assert_eq!(pairs, 1520);
        assert_eq!(NeighborGraph::rook(&g).n_directed_edges(), pairs);
    }

    #[test]
    fn binning_edges_and_corners() {
        let g = unit_grid(2, 2);
        let r = *g.region();
        let pts = vec![(0.0, 0.0), (1.0, 0.5), (2.0, 2.0), (0.5, 1.0), (1.0, 1.0)];
        let binned = bin_points(&PointPattern::new(r, pts).unwrap(), &g).unwrap();
        assert_eq!(binned.counts(), &[1, 1, 1, 2]);
        assert_eq!(binned.total(), 5);
    }

    #[test]
    fn empty_and_center_point() {
        let g = unit_grid(3, 3);
        let r = *g.region();
        let empty = bin_points(&PointPattern::new(r, vec![]).unwrap(), &g).unwrap();
        assert!(empty.counts().iter().all(|&c| c == 0));
        let c = g.box_center(4);
        let one = bin_points(&PointPattern::new(r, vec![c]).unwrap(), &g).unwrap();
        assert_eq!(one.counts()[4], 1);
        assert_eq!(one.total(), 1);
    }

    #[test]
    fn outside_point_reports_index() {
        let g = unit_grid(2, 2);
        let big = StudyRegion::new(0.0, 5.0, 0.0, 5.0).unwrap();
        let p = PointPattern::new(big, vec![(0.5, 0.5), (3.0, 1.0)]).unwrap();
        match bin_points(&p, &g) {
            Err(Error::PointOutsideRegion { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(PointPattern::new(g.region().to_owned(), vec![(-0.1, 0.0)]).is_err());
    }

    #[test]
    fn court_integer_edges_follow_half_open_rule() {
        let region = StudyRegion::new(-250.0, 250.0, -50.0, 300.0).unwrap();
        let g = Grid::new(region, 50, 35).unwrap();
        for k in 1..50 {
            let x = -250.0 + 10.0 * k as f64;
            let b = g.locate(x, 0.0).unwrap();
            assert_eq!(g.row_col(b).1, k, "x = {x}");
        }
        for k in 1..35 {
            let y = -50.0 + 10.0 * k as f64;
            let b = g.locate(0.0, y).unwrap();
            assert_eq!(g.row_col(b).0, k, "y = {y}");
        }
        assert_eq!(g.locate(-250.0, -50.0), Some(0));
        assert_eq!(g.locate(250.0, 300.0), Some(1749));
    }

    #[test]
    fn grid_json_roundtrip_and_validation() {
        let g = unit_grid(4, 3);
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"n_x\":4"));
        let back: Grid = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"region":{"x_min":0,"x_max":1,"y_min":0,"y_max":1},"n_x":0,"n_y":1}"#;
        assert!(serde_json::from_str::<Grid>(bad).is_err());
    }

    #[test]
    fn patterns_validate_on_load() {
        let g = unit_grid(2, 1);
        let p = PointPattern::new(*g.region(), vec![(0.5, 0.5)]).unwrap();
        let back: PointPattern = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        let outside =
            r#"{"region":{"x_min":0,"x_max":1,"y_min":0,"y_max":1},"points":[[2.0,0.5]]}"#;
        assert!(serde_json::from_str::<PointPattern>(outside).is_err());

        let b = bin_points(&p, &g).unwrap();
        let back: BinnedPattern =
            serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(back, b);
        let short = serde_json::json!({ "grid": g, "counts": [1] });
        assert!(serde_json::from_value::<BinnedPattern>(short).is_err());
    }

    #[test]
    fn counts_csv_has_ny_rows() {
        let g = unit_grid(3, 2);
        let mut buf = Vec::new();
        g.write_matrix_csv(&[1, 2, 3, 4, 5, 6], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1,2,3\n4,5,6\n");
        assert!(g.write_matrix_csv(&[1, 2], Vec::new()).is_err());
    }

    proptest! {
        #[test]
        fn rook_graph_is_symmetric_with_bounded_degree(n_x in 1usize..12, n_y in 1usize..12) {
            let g = unit_grid(n_x, n_y);
            let nb = NeighborGraph::rook(&g);
            for i in 0..g.n_boxes() {
                let deg = nb.neighbors(i).len();
                prop_assert!(deg <= 4);
                let (r, c) = g.row_col(i);
                let expected = usize::from(r > 0) + usize::from(r + 1 < n_y)
                    + usize::from(c > 0) + usize::from(c + 1 < n_x);
                prop_assert_eq!(deg, expected);
                for &(j, w) in nb.neighbors(i) {
                    prop_assert!(j != i);
                    prop_assert!(nb.neighbors(j).iter().any(|&(k, wk)| k == i && wk == w));
                }
            }
        }

        #[test]
        fn tiling_and_mass_conservation(
            n_x in 1usize..30,
            n_y in 1usize..30,
            x0 in -100.0f64..100.0,
            w in 0.5f64..300.0,
            h in 0.5f64..300.0,
            us in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..200),
        ) {
            let region = StudyRegion::new(x0, x0 + w, -x0, -x0 + h).unwrap();
            let g = Grid::new(region, n_x, n_y).unwrap();
            let tiled = g.box_area() * g.n_boxes() as f64;
            prop_assert!((tiled - region.area()).abs() <= 1e-12 * region.area());
            let pts: Vec<_> = us.iter()
                .map(|&(u, v)| ((x0 + u * w).min(x0 + w), (-x0 + v * h).min(-x0 + h)))
                .collect();
            let p = PointPattern::new(region, pts.clone()).unwrap();
            let b = bin_points(&p, &g).unwrap();
            prop_assert_eq!(b.total() as usize, pts.len());
            for (i, &(x, y)) in pts.iter().enumerate() {
                let k = g.locate(x, y).unwrap();
                let (bx0, bx1, by0, by1) = g.box_bounds(k);
                prop_assert!(x >= bx0 && x <= bx1 && y >= by0 && y <= by1, "point {}", i);
            }
        }
    }
}
