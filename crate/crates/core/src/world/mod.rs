//! Geometry and network semantics of a single control cycle.

mod config;
mod connectivity;
mod grid;
mod scoring;

pub use config::WorldConfig;
pub use connectivity::{connectivity, ConnectivityResult};
pub use grid::{build_grid, Grid};
pub use scoring::{deterred_count, evaluate_cycle, sensed_events, CycleOutcome};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sensing,
    Computing,
    Deterrence,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Sensing, Role::Computing, Role::Deterrence];

    pub fn index(self) -> usize {
        match self {
            Role::Sensing => 0,
            Role::Computing => 1,
            Role::Deterrence => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Role> {
        Role::ALL.get(i).copied()
    }
}

/// One deployed UAV: where it hovers and what it does this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UavAssignment {
    pub uav_id: usize,
    pub cell_index: usize,
    pub role: Role,
}

/// A full placement for one cycle, resolved against a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub assignments: Vec<UavAssignment>,
    pub positions: Vec<[f64; 2]>,
}

impl Placement {
    pub fn new(assignments: Vec<UavAssignment>, grid: &Grid, config: &WorldConfig) -> Result<Self> {
        if assignments.len() > config.uav_total {
            return Err(Error::Domain(format!(
                "{} UAVs deployed but only {} available",
                assignments.len(),
                config.uav_total
            )));
        }
        let positions = assignments
            .iter()
            .map(|a| {
                grid.cells.get(a.cell_index).copied().ok_or_else(|| {
                    Error::Domain(format!(
                        "UAV {} placed on cell {} of a {}-cell grid",
                        a.uav_id,
                        a.cell_index,
                        grid.len()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Placement {
            assignments,
            positions,
        })
    }

    pub fn role_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for a in &self.assignments {
            c[a.role.index()] += 1;
        }
        c
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = (usize, [f64; 2])> + '_ {
        self.assignments
            .iter()
            .zip(&self.positions)
            .enumerate()
            .filter(move |(_, (a, _))| a.role == role)
            .map(|(i, (_, p))| (i, *p))
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn write_assignments(path: &Path, assignments: &[UavAssignment]) -> Result<()> {
    crate::io::write_csv(path, assignments)
}

pub fn read_assignments(path: &Path) -> Result<Vec<UavAssignment>> {
    crate::io::read_csv(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_csv_round_trip() {
        let a = vec![
            UavAssignment {
                uav_id: 0,
                cell_index: 4,
                role: Role::Sensing,
            },
            UavAssignment {
                uav_id: 1,
                cell_index: 0,
                role: Role::Deterrence,
            },
        ];
        let bytes = crate::io::csv_bytes(&a).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "uav_id,cell_index,role\n0,4,sensing\n1,0,deterrence\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_assignments(&p, &a).unwrap();
        assert_eq!(read_assignments(&p).unwrap(), a);
    }

    #[test]
    fn placement_rejects_bad_cells_and_overdeployment() {
        let cfg = WorldConfig {
            uav_total: 1,
            ..WorldConfig::default()
        };
        let grid = build_grid(&cfg).unwrap();
        let a = UavAssignment {
            uav_id: 0,
            cell_index: grid.len(),
            role: Role::Sensing,
        };
        assert!(matches!(
            Placement::new(vec![a], &grid, &cfg),
            Err(Error::Domain(_))
        ));
        let ok = UavAssignment { cell_index: 0, ..a };
        assert!(Placement::new(vec![ok, ok], &grid, &cfg).is_err());
    }
}
