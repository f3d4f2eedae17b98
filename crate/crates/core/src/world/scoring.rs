use super::connectivity::{connectivity, ConnectivityResult};
use super::{distance, Placement, Role, WorldConfig};
use crate::crime::CrimeEvent;

/// Misdemeanors within sensing range of at least one sensing UAV that can
/// relay to a computing UAV. Majors are never sensed.
pub fn sensed_events<'a>(
    events: &[&'a CrimeEvent],
    placement: &Placement,
    conn: &ConnectivityResult,
    sensing_range_m: f64,
) -> Vec<&'a CrimeEvent> {
    let sensors: Vec<[f64; 2]> = placement
        .with_role(Role::Sensing)
        .filter(|(i, _)| conn.reachable[*i])
        .map(|(_, p)| p)
        .collect();
    if sensors.is_empty() {
        return Vec::new();
    }
    events
        .iter()
        .filter(|e| !e.is_major())
        .filter(|e| {
            sensors
                .iter()
                .any(|s| distance(*s, [e.x_m, e.y_m]) <= sensing_range_m)
        })
        .copied()
        .collect()
}

/// Majors within deterrence range of at least one deterrence UAV, each
/// counted once.
pub fn deterred_count(
    events: &[&CrimeEvent],
    placement: &Placement,
    deterrence_range_m: f64,
) -> usize {
    let guards: Vec<[f64; 2]> = placement
        .with_role(Role::Deterrence)
        .map(|(_, p)| p)
        .collect();
    if guards.is_empty() {
        return 0;
    }
    events
        .iter()
        .filter(|e| e.is_major())
        .filter(|e| {
            guards
                .iter()
                .any(|g| distance(*g, [e.x_m, e.y_m]) <= deterrence_range_m)
        })
        .count()
}

/// Everything one control cycle produces.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome<'a> {
    pub potential_majors: usize,
    pub deterred: usize,
    pub sensed: Vec<&'a CrimeEvent>,
    pub connectivity: ConnectivityResult,
}

pub fn evaluate_cycle<'a>(
    events: &[&'a CrimeEvent],
    placement: &Placement,
    config: &WorldConfig,
) -> CycleOutcome<'a> {
    let conn = connectivity(placement, config.comm_range_m);
    CycleOutcome {
        potential_majors: events.iter().filter(|e| e.is_major()).count(),
        deterred: deterred_count(events, placement, config.deterrence_range_m),
        sensed: sensed_events(events, placement, &conn, config.sensing_range_m),
        connectivity: conn,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crime::Severity;
    use crate::world::UavAssignment;
    use chrono::NaiveDate;

    fn event(x: f64, y: f64, severity: Severity) -> CrimeEvent {
        CrimeEvent {
            timestamp: NaiveDate::from_ymd_opt(2016, 1, 1)
                .unwrap()
                .and_hms_opt(20, 0, 0)
                .unwrap(),
            x_m: x,
            y_m: y,
            block_id: 0,
            severity,
        }
    }

    fn placement(items: &[([f64; 2], Role)]) -> Placement {
        Placement {
            assignments: items
                .iter()
                .enumerate()
                .map(|(i, (_, r))| UavAssignment {
                    uav_id: i,
                    cell_index: 0,
                    role: *r,
                })
                .collect(),
            positions: items.iter().map(|(p, _)| *p).collect(),
        }
    }

    #[test]
    fn deterrence_boundary_and_empty() {
        let major = event(79.0, 0.0, Severity::Major);
        let p = placement(&[([0.0, 0.0], Role::Deterrence)]);
        assert_eq!(deterred_count(&[&major], &p, 80.0), 1);
        let edge = event(80.0, 0.0, Severity::Major);
        assert_eq!(deterred_count(&[&edge], &p, 80.0), 1);
        let none = placement(&[([0.0, 0.0], Role::Sensing)]);
        assert_eq!(deterred_count(&[&major], &none, 80.0), 0);
    }

    #[test]
    fn each_major_counted_once() {
        let major = event(0.0, 0.0, Severity::Major);
        let p = placement(&[
            ([0.0, 0.0], Role::Deterrence),
            ([1.0, 0.0], Role::Deterrence),
        ]);
        assert_eq!(deterred_count(&[&major], &p, 80.0), 1);
    }

    #[test]
    fn sensing_requires_relay_path() {
        let minor = event(0.0, 50.0, Severity::Misdemeanor);
        let major = event(0.0, 50.0, Severity::Major);
        let linked = placement(&[([0.0, 0.0], Role::Sensing), ([0.0, 300.0], Role::Computing)]);
        let conn = connectivity(&linked, 500.0);
        assert_eq!(
            sensed_events(&[&minor, &major], &linked, &conn, 100.0).len(),
            1
        );

        let cut = placement(&[
            ([0.0, 0.0], Role::Sensing),
            ([0.0, 3000.0], Role::Computing),
        ]);
        let conn = connectivity(&cut, 500.0);
        assert!(sensed_events(&[&minor], &cut, &conn, 100.0).is_empty());
    }
}
