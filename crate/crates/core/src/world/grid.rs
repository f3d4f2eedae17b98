use super::config::WorldConfig;
use super::distance;
use crate::error::{Error, Result};

/// Candidate hover positions: lattice points within the placement radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub cells: Vec<[f64; 2]>,
}

impl Grid {
    /// Lattice of `spacing` aligned on `station`, keeping points within
    /// `radius`, ordered by row (south to north) then column (west to east).
    pub fn lattice(station: [f64; 2], radius: f64, spacing: f64) -> Result<Self> {
        if spacing.is_nan() || spacing <= 0.0 || !radius.is_finite() || radius < 0.0 {
            return Err(Error::Config(format!(
                "grid needs positive spacing and finite radius (spacing {spacing}, radius {radius})"
            )));
        }
        let n = (radius / spacing).floor() as i64;
        let mut cells = Vec::new();
        for r in -n..=n {
            for c in -n..=n {
                let p = [
                    station[0] + c as f64 * spacing,
                    station[1] + r as f64 * spacing,
                ];
                if distance(p, station) <= radius {
                    cells.push(p);
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::Config("placement grid is empty".into()));
        }
        Ok(Grid { cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Index of the cell closest to `p` (lowest index on ties).
    pub fn nearest(&self, p: [f64; 2]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.cells.iter().enumerate() {
            let d = distance(*c, p);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

pub fn build_grid(config: &WorldConfig) -> Result<Grid> {
    config.validate()?;
    Grid::lattice(
        config.station(),
        config.placement_radius_m,
        config.grid_spacing_m,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_disk_has_five_cells() {
        let g = Grid::lattice([0.0, 0.0], 50.0, 50.0).unwrap();
        assert_eq!(
            g.cells,
            vec![
                [0.0, -50.0],
                [-50.0, 0.0],
                [0.0, 0.0],
                [50.0, 0.0],
                [0.0, 50.0]
            ]
        );
    }

    #[test]
    fn tiny_radius_keeps_only_station() {
        let g = Grid::lattice([10.0, 20.0], 0.1, 50.0).unwrap();
        assert_eq!(g.cells, vec![[10.0, 20.0]]);
    }

    #[test]
    fn count_matches_brute_force_scan() {
        let (radius, spacing) = (1000.0, 50.0);
        let g = Grid::lattice([0.0, 0.0], radius, spacing).unwrap();
        let mut brute = 0;
        for i in -40i64..=40 {
            for j in -40i64..=40 {
                if ((i * i + j * j) as f64).sqrt() * spacing <= radius {
                    brute += 1;
                }
            }
        }
        assert_eq!(g.len(), brute);
        assert!(g.cells.iter().all(|c| distance(*c, [0.0, 0.0]) <= radius));
    }
}
