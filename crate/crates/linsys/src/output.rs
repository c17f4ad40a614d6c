//! Trajectory CSV emission.
//!
//! Fixed schema, one row per (run, sample time):
//!
//! ```text
//! run_id,time,log_mass,log_normalized_mass,rho_star,overlap,integrated_overlap,active_sites,survived
//! ```
//!
//! Floats are written with 17 significant digits so parsing the file back
//! reproduces the exact binary values; `-inf` marks extinct rows. `survived`
//! is the run-level outcome repeated on each row.

use crate::engine::TrajectoryRecord;
use std::io::{self, Write};

pub const CSV_HEADER: &str = "run_id,time,log_mass,log_normalized_mass,rho_star,overlap,integrated_overlap,active_sites,survived";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render trajectory records (indexed by run id) as a CSV document.
pub fn trajectories_to_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = String::with_capacity(64 * records.iter().map(|r| r.rows.len()).sum::<usize>());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (run_id, rec) in records.iter().enumerate() {
        for row in &rec.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                run_id,
                fmt(row.time),
                fmt(row.log_mass),
                fmt(row.log_normalized_mass),
                fmt(row.rho_star),
                fmt(row.overlap),
                fmt(row.integrated_overlap),
                row.active_sites,
                rec.survived,
            ));
        }
    }
    out
}

pub fn write_trajectories_csv<W: Write>(w: &mut W, records: &[TrajectoryRecord]) -> io::Result<()> {
    w.write_all(trajectories_to_csv(records).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Horizon, run};
    use crate::kernel::KernelDistribution;

    #[test]
    fn csv_round_trips_exact_floats() {
        let dist = KernelDistribution::bcpp(1, 1.0).unwrap();
        let rec = run(
            &dist,
            Horizon {
                t_max: 4.0,
                max_events: u64::MAX,
            },
            &[0.0, 1.0, 2.0, 3.0, 4.0],
            5,
            None,
        );
        let csv = trajectories_to_csv(std::slice::from_ref(&rec));
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        for (line, row) in lines.zip(&rec.rows) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 9);
            assert_eq!(cols[0], "0");
            assert_eq!(cols[1].parse::<f64>().unwrap(), row.time);
            let lm: f64 = cols[2].parse().unwrap();
            assert!(lm == row.log_mass || (lm.is_infinite() && row.log_mass.is_infinite()));
            assert_eq!(cols[4].parse::<f64>().unwrap(), row.rho_star);
            assert_eq!(cols[5].parse::<f64>().unwrap(), row.overlap);
            assert_eq!(cols[6].parse::<f64>().unwrap(), row.integrated_overlap);
            assert_eq!(cols[7].parse::<usize>().unwrap(), row.active_sites);
            assert_eq!(cols[8].parse::<bool>().unwrap(), rec.survived);
        }
    }
}
