//! Trajectory CSV serialization.
//!
//! Columns: `t`, leader states `x[0][k]` for leader-follower runs, follower
//! states `x[i][k]` (agents 1-based, components 1-based), controls `u[i][k]`,
//! adaptive gains `dbar[i]` / `ebar[i]` where the protocol carries them, and
//! the error norm `xi_norm`. Floats are written with 17 significant digits so
//! every value round-trips bit-exactly. Monitor events and divergence records
//! are not part of the CSV; they belong to the run report.

use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::metrics::{consensus_error, lf_consensus_error};
use crate::protocols::{AdaptiveState, ProtocolKind};
use crate::scenario::ResolvedScenario;
use crate::simulation::Trajectory;

/// Column plan for one scenario's trajectory files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrajectoryLayout {
    pub n_agents: usize,
    /// State dimension per agent.
    pub n: usize,
    /// Input dimension per agent.
    pub p: usize,
    pub has_leader: bool,
    pub d_columns: bool,
    pub e_columns: bool,
}

impl TrajectoryLayout {
    pub fn of(rs: &ResolvedScenario) -> Self {
        let kind = rs.protocol.kind;
        Self {
            n_agents: rs.n_agents,
            n: rs.n(),
            p: rs.p(),
            has_leader: kind.is_leader_follower(),
            d_columns: kind.is_adaptive(),
            e_columns: matches!(
                kind,
                ProtocolKind::AdaptiveLeaderless | ProtocolKind::AdaptiveLeaderFollower
            ),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        if self.has_leader {
            for k in 1..=self.n {
                h.push(format!("x[0][{k}]"));
            }
        }
        for i in 1..=self.n_agents {
            for k in 1..=self.n {
                h.push(format!("x[{i}][{k}]"));
            }
        }
        for i in 1..=self.n_agents {
            for k in 1..=self.p {
                h.push(format!("u[{i}][{k}]"));
            }
        }
        if self.d_columns {
            for i in 1..=self.n_agents {
                h.push(format!("dbar[{i}]"));
            }
        }
        if self.e_columns {
            for i in 1..=self.n_agents {
                h.push(format!("ebar[{i}]"));
            }
        }
        h.push("xi_norm".to_string());
        h
    }

    fn state_width(&self) -> usize {
        (if self.has_leader { self.n } else { 0 }) + self.n_agents * self.n
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a sampled trajectory. Rows cover whatever was recorded, so a
/// divergence-truncated run writes its partial trajectory.
pub fn write_trajectory_csv(
    path: &Path,
    traj: &Trajectory,
    layout: &TrajectoryLayout,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(layout.header())?;
    for (k, t) in traj.times.iter().enumerate() {
        let mut row = vec![fmt(*t)];
        row.extend(traj.states[k].iter().map(|&v| fmt(v)));
        row.extend(traj.controls[k].iter().map(|&v| fmt(v)));
        if let Some(ad) = traj.adaptive.as_ref() {
            if layout.d_columns {
                row.extend(ad[k].d_bar.iter().map(|&v| fmt(v)));
            }
            if layout.e_columns {
                row.extend(ad[k].e_bar.iter().map(|&v| fmt(v)));
            }
        }
        row.push(fmt(traj.error_norms[k]));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

fn parse_cell(raw: &str, row: usize, col: usize) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        Error::InvalidInput(format!("row {row}, column {col}: not a number: {raw:?}"))
    })
}

/// Read a trajectory written by [`write_trajectory_csv`]. The header must
/// match the layout exactly; consensus errors are recomputed from the states
/// and cross-checked against the stored `xi_norm` column.
pub fn read_trajectory_csv(path: &Path, layout: &TrajectoryLayout) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path)?;
    let expected = layout.header();
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(Error::InvalidInput(format!(
            "csv header does not match the scenario: expected {} columns starting {:?}, found {} starting {:?}",
            expected.len(),
            &expected[..expected.len().min(4)],
            got.len(),
            &got[..got.len().min(4)],
        )));
    }

    let nl = if layout.has_leader { layout.n } else { 0 };
    let sw = layout.state_width();
    let cw = layout.n_agents * layout.p;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        adaptive: if layout.d_columns { Some(Vec::new()) } else { None },
        errors: Vec::new(),
        error_norms: Vec::new(),
        monitor_events: Vec::new(),
        monitor_total: 0,
        divergence: None,
    };

    for (idx, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != expected.len() {
            return Err(Error::InvalidInput(format!(
                "row {idx}: {} fields, header has {}",
                rec.len(),
                expected.len()
            )));
        }
        let vals: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(c, raw)| parse_cell(raw, idx, c))
            .collect::<Result<_>>()?;
        let mut at = 0usize;
        let mut take = |len: usize| {
            let s = &vals[at..at + len];
            at += len;
            s.to_vec()
        };
        let t = take(1)[0];
        let state = DVector::from_vec(take(sw));
        let control = DVector::from_vec(take(cw));
        if let Some(ad) = traj.adaptive.as_mut() {
            let d_bar = take(layout.n_agents);
            let e_bar = if layout.e_columns {
                take(layout.n_agents)
            } else {
                vec![0.0; layout.n_agents]
            };
            ad.push(AdaptiveState { d_bar, e_bar });
        }
        let stored_norm = take(1)[0];

        let followers = state.rows(nl, layout.n_agents * layout.n).clone_owned();
        let err = if layout.has_leader {
            lf_consensus_error(&followers, &state.rows(0, layout.n).clone_owned())
        } else {
            consensus_error(&followers, layout.n_agents)
        };
        let norm = err.norm();
        if (norm - stored_norm).abs() > 1e-9 * (1.0 + stored_norm.abs()) {
            return Err(Error::InvalidInput(format!(
                "row {idx}: xi_norm {stored_norm} does not match the states (recomputed {norm}); csv and scenario disagree"
            )));
        }
        traj.times.push(t);
        traj.states.push(state);
        traj.controls.push(control);
        traj.errors.push(err);
        traj.error_norms.push(norm);
    }
    if traj.times.is_empty() {
        return Err(Error::InvalidInput("csv holds no samples".into()));
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{self, Graph};
    use crate::scenario::{
        build_chua_scenario, build_mass_spring_scenario, ChuaParams, GainsJson, MassSpringParams,
    };
    use crate::simulation::simulate;
    use crate::synthesis::{mass_spring_dynamics, synthesize, CouplingMode};

    fn temp_path(tag: &str) -> std::path::PathBuf {
        use std::sync::atomic::{AtomicUsize, Ordering};
        static SEQ: AtomicUsize = AtomicUsize::new(0);
        let k = SEQ.fetch_add(1, Ordering::Relaxed);
        std::env::temp_dir().join(format!("traj_{}_{}_{tag}.csv", std::process::id(), k))
    }

    #[test]
    fn headers_follow_the_protocol_family() {
        let lay = TrajectoryLayout {
            n_agents: 2,
            n: 2,
            p: 1,
            has_leader: false,
            d_columns: false,
            e_columns: false,
        };
        assert_eq!(
            lay.header(),
            ["t", "x[1][1]", "x[1][2]", "x[2][1]", "x[2][2]", "u[1][1]", "u[2][1]", "xi_norm"]
        );
        let lay = TrajectoryLayout {
            n_agents: 2,
            n: 1,
            p: 1,
            has_leader: true,
            d_columns: true,
            e_columns: true,
        };
        assert_eq!(
            lay.header(),
            [
                "t", "x[0][1]", "x[1][1]", "x[2][1]", "u[1][1]", "u[2][1]", "dbar[1]", "dbar[2]",
                "ebar[1]", "ebar[2]", "xi_norm"
            ]
        );
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = Graph::ring(6);
        let spec = graph::spectrum(&graph::laplacian(&g)).unwrap();
        let gains =
            synthesize(&mass_spring_dynamics(2.5), &spec, CouplingMode::Leaderless, None, None, 1.0)
                .unwrap();
        let mut params = MassSpringParams::default();
        params.kind = crate::protocols::ProtocolKind::AdaptiveLeaderless;
        params.t_final = 0.5;
        let mut sc = build_mass_spring_scenario(&g, &params).unwrap();
        sc.gains = Some(GainsJson::from_gain_set(&gains));
        let rs = sc.resolve().unwrap();
        let traj = simulate(&rs).unwrap();
        let lay = TrajectoryLayout::of(&rs);

        let path = temp_path("roundtrip");
        write_trajectory_csv(&path, &traj, &lay).unwrap();
        let back = read_trajectory_csv(&path, &lay).unwrap();
        std::fs::remove_file(&path).ok();

        assert_eq!(traj.times, back.times);
        assert_eq!(traj.states, back.states);
        assert_eq!(traj.controls, back.controls);
        assert_eq!(traj.error_norms, back.error_norms);
        let (a, b) = (traj.adaptive.unwrap(), back.adaptive.unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.d_bar, y.d_bar);
            assert_eq!(x.e_bar, y.e_bar);
        }
    }

    #[test]
    fn extreme_values_round_trip() {
        let vals = [0.1 + 0.2, std::f64::consts::PI, -1.0e-300, 1.0e300, 5.0e-324, -0.0];
        for v in vals {
            let s = fmt(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s}");
        }
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let g = Graph::ring(6);
        let spec = graph::spectrum(&graph::laplacian(&g)).unwrap();
        let gains =
            synthesize(&mass_spring_dynamics(2.5), &spec, CouplingMode::Leaderless, None, None, 1.0)
                .unwrap();
        let mut params = MassSpringParams::default();
        params.t_final = 0.01;
        let mut sc = build_mass_spring_scenario(&g, &params).unwrap();
        sc.gains = Some(GainsJson::from_gain_set(&gains));
        let rs = sc.resolve().unwrap();
        let traj = simulate(&rs).unwrap();
        let lay = TrajectoryLayout::of(&rs);

        let path = temp_path("mismatch");
        write_trajectory_csv(&path, &traj, &lay).unwrap();
        let mut wrong = lay;
        wrong.n_agents = 5;
        assert!(read_trajectory_csv(&path, &wrong).is_err());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn corrupted_cells_are_rejected() {
        let lay = TrajectoryLayout {
            n_agents: 1,
            n: 1,
            p: 1,
            has_leader: false,
            d_columns: false,
            e_columns: false,
        };
        let path = temp_path("corrupt");
        // Non-numeric control cell.
        std::fs::write(&path, "t,x[1][1],u[1][1],xi_norm\n0.0,1.0,abc,0.0\n").unwrap();
        let err = read_trajectory_csv(&path, &lay).unwrap_err();
        assert!(err.to_string().contains("not a number"), "{err}");
        // Tampered xi_norm.
        std::fs::write(&path, "t,x[1][1],u[1][1],xi_norm\n0.0,1.0,0.0,9.0\n").unwrap();
        let err = read_trajectory_csv(&path, &lay).unwrap_err();
        assert!(err.to_string().contains("xi_norm"), "{err}");
        // Empty body.
        std::fs::write(&path, "t,x[1][1],u[1][1],xi_norm\n").unwrap();
        assert!(read_trajectory_csv(&path, &lay).is_err());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn leader_runs_store_the_leader_block() {
        let g = Graph::with_leader(3, vec![(0, 1), (1, 2)], vec![0]);
        let mut params = ChuaParams::default();
        params.t_final = 0.05;
        let mut sc = build_chua_scenario(&g, &params).unwrap();
        let dyn_ = sc.dynamics.to_dynamics().unwrap();
        let (part, _) = graph::leader_follower_partition(&g).unwrap();
        let spec = graph::spectrum(&part).unwrap();
        let gains = synthesize(
            &dyn_,
            &spec,
            CouplingMode::LeaderFollower,
            Some(sc.protocol.gamma),
            None,
            1.0,
        )
        .unwrap();
        sc.gains = Some(GainsJson::from_gain_set(&gains));
        let rs = sc.resolve().unwrap();
        let traj = simulate(&rs).unwrap();
        let lay = TrajectoryLayout::of(&rs);
        assert!(lay.has_leader && lay.d_columns && lay.e_columns);

        let path = temp_path("leader");
        write_trajectory_csv(&path, &traj, &lay).unwrap();
        let back = read_trajectory_csv(&path, &lay).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(traj.states, back.states);
        assert_eq!(back.states[0].len(), 3 * (1 + 3));
    }
}
