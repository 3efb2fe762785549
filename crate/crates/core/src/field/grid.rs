use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Assignment of every voxel to one of `G³` equal spatial cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridIndexMap {
    grids: usize,
    indices: Vec<usize>,
    counts: Vec<usize>,
}

impl GridIndexMap {
    pub(crate) fn new(resolution: usize, grids: usize) -> Result<Self> {
        if grids == 0 {
            return Err(Error::invalid("grid count must be at least 1"));
        }
        if grids > resolution {
            return Err(Error::invalid(format!(
                "{grids} grids per axis exceed {resolution} voxels per axis; some grids would be empty"
            )));
        }
        let cell = |i: usize| i * grids / resolution;
        let mut indices = Vec::with_capacity(resolution.pow(3));
        let mut counts = vec![0usize; grids.pow(3)];
        for k in 0..resolution {
            for j in 0..resolution {
                for i in 0..resolution {
                    let g = cell(i) + grids * (cell(j) + grids * cell(k));
                    indices.push(g);
                    counts[g] += 1;
                }
            }
        }
        Ok(GridIndexMap {
            grids,
            indices,
            counts,
        })
    }

    /// Grids per axis.
    pub fn grids(&self) -> usize {
        self.grids
    }

    pub fn num_grids(&self) -> usize {
        self.counts.len()
    }

    pub fn num_voxels(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    fn check_rows(&self, rows: usize, expected: usize, what: &str) -> Result<()> {
        if rows != expected {
            return Err(Error::invalid(format!(
                "{what} has {rows} rows, expected {expected}"
            )));
        }
        if self.counts.contains(&0) {
            return Err(Error::state("grid map contains an empty grid"));
        }
        Ok(())
    }

    /// Per-grid mean of voxel rows: `M × D → G³ × D`.
    pub fn pool_mean(&self, voxels: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_rows(voxels.nrows(), self.num_voxels(), "voxel features")?;
        let mut pooled = Array2::zeros((self.num_grids(), voxels.ncols()));
        for (row, &g) in voxels.axis_iter(Axis(0)).zip(&self.indices) {
            let mut acc = pooled.row_mut(g);
            acc += &row;
        }
        for (mut acc, &c) in pooled.axis_iter_mut(Axis(0)).zip(&self.counts) {
            acc /= c as f64;
        }
        Ok(pooled)
    }

    /// Adjoint of [`pool_mean`](Self::pool_mean): each voxel receives its
    /// grid's gradient divided by the grid's voxel count.
    pub fn pool_mean_backward(&self, grad_pooled: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_rows(grad_pooled.nrows(), self.num_grids(), "pooled gradient")?;
        let scaled = {
            let mut s = grad_pooled.to_owned();
            for (mut row, &c) in s.axis_iter_mut(Axis(0)).zip(&self.counts) {
                row /= c as f64;
            }
            s
        };
        self.scatter(scaled.view())
    }

    /// Copies each grid row back to every voxel it contains: `G³ × D → M × D`.
    pub fn scatter(&self, grid_rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_rows(grid_rows.nrows(), self.num_grids(), "grid features")?;
        let mut out = Array2::zeros((self.num_voxels(), grid_rows.ncols()));
        for (mut row, &g) in out.axis_iter_mut(Axis(0)).zip(&self.indices) {
            row.assign(&grid_rows.row(g));
        }
        Ok(out)
    }

    /// Adjoint of [`scatter`](Self::scatter): per-grid sum of voxel gradients.
    pub fn scatter_backward(&self, grad_voxels: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_rows(grad_voxels.nrows(), self.num_voxels(), "voxel gradient")?;
        let mut out = Array2::zeros((self.num_grids(), grad_voxels.ncols()));
        for (row, &g) in grad_voxels.axis_iter(Axis(0)).zip(&self.indices) {
            let mut acc = out.row_mut(g);
            acc += &row;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Extent, VoxelGaussianField};

    fn map(n: usize, g: usize) -> GridIndexMap {
        VoxelGaussianField::new(n, Extent::default())
            .unwrap()
            .partition_grid(g)
            .unwrap()
    }

    #[test]
    fn one_voxel_per_grid_is_identity() {
        let m = map(16, 16);
        assert!(m.indices().iter().enumerate().all(|(i, &g)| i == g));
        assert!(m.counts().iter().all(|&c| c == 1));
    }

    #[test]
    fn equal_counts_when_divisible() {
        let m = map(32, 16);
        assert_eq!(m.num_grids(), 4096);
        assert!(m.counts().iter().all(|&c| c == 8));
    }

    #[test]
    fn corner_voxels() {
        let m = map(4, 2);
        assert_eq!(m.indices()[0], 0);
        assert_eq!(m.indices()[63], 7);
        // voxel (2,0,0) is the first voxel of grid (1,0,0)
        assert_eq!(m.indices()[2], 1);
    }

    #[test]
    fn uneven_partition_still_covers_every_grid() {
        let m = map(5, 3);
        assert_eq!(m.counts().iter().sum::<usize>(), 125);
        assert!(m.counts().iter().all(|&c| c > 0));
    }

    #[test]
    fn rejects_more_grids_than_voxels() {
        let f = VoxelGaussianField::new(4, Extent::default()).unwrap();
        assert!(matches!(f.partition_grid(5), Err(Error::InvalidArgument(_))));
        assert!(f.partition_grid(0).is_err());
    }

    #[test]
    fn pooling_adjoints_match_dot_products() {
        // <pool(x), y> == <x, pool_backward(y)> and likewise for scatter.
        let m = map(4, 2);
        let x = Array2::from_shape_fn((64, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let y = Array2::from_shape_fn((8, 3), |(i, j)| (i as f64 + 1.0) * (j as f64 - 1.5));
        let lhs = (&m.pool_mean(x.view()).unwrap() * &y).sum();
        let rhs = (&x * &m.pool_mean_backward(y.view()).unwrap()).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        let lhs = (&m.scatter(y.view()).unwrap() * &x).sum();
        let rhs = (&y * &m.scatter_backward(x.view()).unwrap()).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn scatter_then_pool_round_trips(
            n in 1usize..7,
            g_frac in 0.0f64..1.0,
            seed in proptest::collection::vec(-10.0f64..10.0, 1..400),
        ) {
            let g = 1 + ((n - 1) as f64 * g_frac) as usize;
            let m = map(n, g);
            let grid = Array2::from_shape_fn((m.num_grids(), 2), |(i, j)| seed[(2 * i + j) % seed.len()]);
            let back = m.pool_mean(m.scatter(grid.view()).unwrap().view()).unwrap();
            for (a, b) in grid.iter().zip(back.iter()) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }
}
