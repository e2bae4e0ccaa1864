//! Piecewise-constant NHPP simulation and the three benchmark settings.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, PointPattern};
use crate::rng;

/// One positive intensity per grid box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensitySurface {
    grid: Grid,
    lambda: Vec<f64>,
}

impl IntensitySurface {
    pub fn new(grid: Grid, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != grid.n_boxes() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_boxes(),
                actual: lambda.len(),
            });
        }
        if let Some(v) = lambda.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "intensity {v} must be positive"
            )));
        }
        Ok(Self { grid, lambda })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda
    }

    /// Integral of the surface over the region.
    pub fn expected_total(&self) -> f64 {
        self.lambda.iter().map(|l| l * self.grid.box_area()).sum()
    }
}

/// Draws a pattern with a seeded stream. Same seed, same pattern.
pub fn simulate_nhpp(surface: &IntensitySurface, seed: u64) -> PointPattern {
    simulate_nhpp_with(surface, &mut rng::stream(seed))
}

/// Per box: a Poisson count with mean `lambda_i * mu(A_i)`, then that many
/// uniform locations inside the box.
pub fn simulate_nhpp_with<R: Rng + ?Sized>(
    surface: &IntensitySurface,
    rng: &mut R,
) -> PointPattern {
    let grid = surface.grid();
    let area = grid.box_area();
    let mut points = Vec::new();
    for (i, &l) in surface.values().iter().enumerate() {
        let count = Poisson::new(l * area)
            .map(|d| d.sample(rng) as u64)
            .unwrap_or(0);
        let (x0, x1, y0, y1) = grid.box_bounds(i);
        for _ in 0..count {
            let x = x0 + (x1 - x0) * rng.random::<f64>();
            let y = y0 + (y1 - y0) * rng.random::<f64>();
            points.push((x, y));
        }
    }
    PointPattern::new(*grid.region(), points).expect("simulated points lie in their boxes")
}

/// Ground truth for a recovery study: component intensities and the component
/// index of every box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSetting {
    pub id: u32,
    pub name: String,
    pub component_values: Vec<f64>,
    pub assignment: Vec<usize>,
    pub grid: Grid,
}

impl SimulationSetting {
    pub fn n_components(&self) -> usize {
        self.component_values.len()
    }

    pub fn counts_per_component(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_components()];
        for &c in &self.assignment {
            counts[c] += 1;
        }
        counts
    }

    pub fn surface(&self) -> IntensitySurface {
        let lambda = self
            .assignment
            .iter()
            .map(|&c| self.component_values[c])
            .collect();
        IntensitySurface::new(self.grid, lambda).expect("setting values are positive")
    }

    pub fn truth_labels(&self) -> &[usize] {
        &self.assignment
    }
}

struct Canvas {
    grid: Grid,
    labels: Vec<usize>,
}

impl Canvas {
    fn new(grid: Grid, fill: usize) -> Self {
        Self {
            labels: vec![fill; grid.n_boxes()],
            grid,
        }
    }

    /// Paints rows `r0..r1` by columns `c0..c1`.
    fn rect(&mut self, (r0, r1): (usize, usize), (c0, c1): (usize, usize), label: usize) {
        for r in r0..r1 {
            for c in c0..c1 {
                let i = self.grid.index(r, c);
                self.labels[i] = label;
            }
        }
    }
}

/// Builds benchmark setting 1, 2 or 3 on the 20x20 unit grid over `[0, 20]^2`.
///
/// Layouts (row 0 at the bottom):
/// * 1: intensities (0.2, 4, 12). A bottom band of 90 boxes at 0.2, a central
///   9x11 block of 99 boxes at 12 nested inside the 211-box background at 4.
/// * 2: intensities (0.2, 1, 4, 8, 16). Five vertical bands of four columns.
/// * 3: intensities (0.2, 4, 10, 20). The 4 component is split across two
///   mirrored corner blocks (72 + 73 boxes) that do not touch; 20 is a 9x11
///   block, 10 a 6x11 block, and 0.2 the 90-box corridor between them.
pub fn make_setting(id: u32, grid: &Grid) -> Result<SimulationSetting> {
    let r = grid.region();
    let expected = (r.x_min, r.x_max, r.y_min, r.y_max, grid.n_x(), grid.n_y());
    if expected != (0.0, 20.0, 0.0, 20.0, 20, 20) {
        return Err(Error::InvalidParameter(
            "benchmark settings require the 20x20 grid on [0, 20]^2".into(),
        ));
    }
    let (values, labels) = match id {
        1 => {
            let mut cv = Canvas::new(*grid, 1);
            cv.rect((0, 4), (0, 20), 0);
            cv.rect((4, 5), (0, 10), 0);
            cv.rect((8, 17), (5, 16), 2);
            (vec![0.2, 4.0, 12.0], cv.labels)
        }
        2 => {
            let labels = (0..grid.n_boxes()).map(|i| grid.row_col(i).1 / 4).collect();
            (vec![0.2, 1.0, 4.0, 8.0, 16.0], labels)
        }
        3 => {
            let mut cv = Canvas::new(*grid, 0);
            cv.rect((0, 8), (0, 9), 1);
            cv.rect((12, 20), (11, 20), 1);
            cv.rect((11, 12), (19, 20), 1);
            cv.rect((11, 20), (0, 11), 3);
            cv.rect((0, 6), (9, 20), 2);
            (vec![0.2, 4.0, 10.0, 20.0], cv.labels)
        }
        other => return Err(Error::UnknownSetting(other)),
    };
    Ok(SimulationSetting {
        id,
        name: format!("setting-{id}"),
        component_values: values,
        assignment: labels,
        grid: *grid,
    })
}

/// The 20x20 unit grid the benchmark settings live on.
pub fn benchmark_grid() -> Grid {
    let region = crate::grid::StudyRegion::new(0.0, 20.0, 0.0, 20.0).expect("valid region");
    Grid::new(region, 20, 20).expect("valid grid")
}
