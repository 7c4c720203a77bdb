//! Egocentric observations.
//!
//! The raster is robot-centered and heading-aligned. Row 0 is the rearmost
//! row and rows increase forward; column 0 is the leftmost column. Channels
//! are path occupancy, pedestrian occupancy (with a fading motion trail) and
//! a goal-direction field. Rasters are mostly empty, so only nonzero cells
//! are stored.

use serde::{Deserialize, Serialize};

pub const CH_PATH: usize = 0;
pub const CH_PEDESTRIAN: usize = 1;
pub const CH_GOAL: usize = 2;
pub const N_CHANNELS: usize = 3;
pub const N_SCALARS: usize = 3;

/// Scalar feature slots.
pub const SCALAR_LATERAL: usize = 0;
pub const SCALAR_HEADING: usize = 1;
pub const SCALAR_SPEED: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterDims {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl RasterDims {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            channels: N_CHANNELS,
        }
    }

    pub fn cells(&self) -> usize {
        self.width * self.height * self.channels
    }

    /// Length of the flattened network input (raster then scalars).
    pub fn input_dim(&self) -> usize {
        self.cells() + N_SCALARS
    }

    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    fn mirror_index(&self, idx: usize) -> usize {
        let channel = idx % self.channels;
        let cell = idx / self.channels;
        let row = cell / self.width;
        let col = cell % self.width;
        self.index(row, self.width - 1 - col, channel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    dims: RasterDims,
    /// Nonzero raster cells, sorted by flattened index.
    cells: Vec<(u32, f32)>,
    scalars: [f64; N_SCALARS],
}

impl Observation {
    /// Builds from a dense raster buffer laid out as `RasterDims::index`.
    pub fn from_dense(dims: RasterDims, raster: &[f32], scalars: [f64; N_SCALARS]) -> Self {
        assert_eq!(raster.len(), dims.cells(), "raster buffer size");
        let cells = raster
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        Self {
            dims,
            cells,
            scalars,
        }
    }

    /// Builds from sparse cells; zero entries are dropped and order fixed.
    pub fn from_cells(
        dims: RasterDims,
        mut cells: Vec<(u32, f32)>,
        scalars: [f64; N_SCALARS],
    ) -> Option<Self> {
        cells.retain(|c| c.1 != 0.0);
        cells.sort_by_key(|c| c.0);
        if cells.windows(2).any(|w| w[0].0 == w[1].0)
            || cells.last().is_some_and(|c| c.0 as usize >= dims.cells())
        {
            return None;
        }
        Some(Self {
            dims,
            cells,
            scalars,
        })
    }

    pub fn dims(&self) -> RasterDims {
        self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims.input_dim()
    }

    pub fn cells(&self) -> &[(u32, f32)] {
        &self.cells
    }

    pub fn scalars(&self) -> [f64; N_SCALARS] {
        self.scalars
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        let idx = self.dims.index(row, col, channel) as u32;
        match self.cells.binary_search_by_key(&idx, |c| c.0) {
            Ok(i) => self.cells[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn dense_raster(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.dims.cells()];
        for &(i, v) in &self.cells {
            out[i as usize] = v;
        }
        out
    }

    /// Full network input: raster cells followed by the scalars.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.dense_raster().into_iter().map(f64::from).collect();
        out.extend_from_slice(&self.scalars);
        out
    }

    /// Nonzero inputs as (input index, value) pairs, scalars included.
    pub fn features(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let base = self.dims.cells();
        self.cells
            .iter()
            .map(|&(i, v)| (i as usize, f64::from(v)))
            .chain(
                self.scalars
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(k, v)| (base + k, *v)),
            )
    }

    pub fn is_finite(&self) -> bool {
        self.cells.iter().all(|c| c.1.is_finite()) && self.scalars.iter().all(|s| s.is_finite())
    }

    /// Left/right reflection: columns reversed, signed scalars negated.
    pub fn mirrored(&self) -> Self {
        let mut cells: Vec<(u32, f32)> = self
            .cells
            .iter()
            .map(|&(i, v)| (self.dims.mirror_index(i as usize) as u32, v))
            .collect();
        cells.sort_by_key(|c| c.0);
        let mut scalars = self.scalars;
        scalars[SCALAR_LATERAL] = -scalars[SCALAR_LATERAL];
        scalars[SCALAR_HEADING] = -scalars[SCALAR_HEADING];
        Self {
            dims: self.dims,
            cells,
            scalars,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims() -> RasterDims {
        RasterDims::new(6, 5)
    }

    proptest! {
        #[test]
        fn mirror_is_involution(
            raw in proptest::collection::vec(0.0f32..1.0, 6 * 5 * 3),
            keep in proptest::collection::vec(any::<bool>(), 6 * 5 * 3),
            lat in -1.0f64..1.0, head in -0.5f64..0.5, speed in 0.0f64..1.0,
        ) {
            let buf: Vec<f32> = raw.iter().zip(&keep).map(|(v, k)| if *k { *v } else { 0.0 }).collect();
            let obs = Observation::from_dense(dims(), &buf, [lat, head, speed]);
            prop_assert_eq!(obs.mirrored().mirrored(), obs.clone());
            prop_assert!(obs.is_finite());
        }
    }

    #[test]
    fn mirror_moves_columns() {
        let d = dims();
        let mut buf = vec![0.0; d.cells()];
        buf[d.index(2, 0, CH_PEDESTRIAN)] = 0.5;
        let obs = Observation::from_dense(d, &buf, [0.3, -0.1, 1.0]);
        let m = obs.mirrored();
        assert_eq!(m.get(2, 5, CH_PEDESTRIAN), 0.5);
        assert_eq!(m.get(2, 0, CH_PEDESTRIAN), 0.0);
        assert_eq!(m.scalars(), [-0.3, 0.1, 1.0]);
    }

    #[test]
    fn features_match_dense_vector() {
        let d = dims();
        let mut buf = vec![0.0; d.cells()];
        buf[7] = 0.25;
        buf[40] = 1.0;
        let obs = Observation::from_dense(d, &buf, [0.0, 0.2, 0.8]);
        let dense = obs.to_vec();
        let mut rebuilt = vec![0.0; d.input_dim()];
        for (i, v) in obs.features() {
            rebuilt[i] = v;
        }
        assert_eq!(dense, rebuilt);
    }

    #[test]
    fn from_cells_rejects_duplicates() {
        assert!(Observation::from_cells(dims(), vec![(3, 0.1), (3, 0.2)], [0.0; 3]).is_none());
        assert!(Observation::from_cells(dims(), vec![(90, 0.1)], [0.0; 3]).is_none());
        let o = Observation::from_cells(dims(), vec![(5, 0.1), (2, 0.0), (1, 0.4)], [0.0; 3]).unwrap();
        assert_eq!(o.cells(), &[(1, 0.4), (5, 0.1)]);
    }
}
