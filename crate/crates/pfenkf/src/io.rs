//! Plain-text artifacts: CSV tables that open with a `# config = <hash>`
//! comment line and a header row, whitespace-delimited field and checkpoint
//! files, and the readers that round-trip them byte-exactly.
//!
//! All floats are written in shortest round-trip form, so re-reading a file
//! and re-writing it reproduces the original bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleState, MemberSlot};
use crate::error::{Error, Result};
use crate::filter::{AnalysisRecord, StepRecord};
use crate::kernel::MaternParams;
use crate::mesh::Mesh;
use crate::model::FieldState;
use crate::observation::DataBatch;

/// Shortest representation of `x` that parses back to the same bits.
fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

fn parse_f(field: &str, path: &Path, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        detail: format!("line {line}: expected a float, got `{field}`"),
    })
}

fn parse_u(field: &str, path: &Path, line: usize) -> Result<usize> {
    field.trim().parse::<usize>().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        detail: format!("line {line}: expected an integer, got `{field}`"),
    })
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(Error::io(parent))?;
        }
    }
    Ok(())
}

/// Write a CSV file: the config-hash comment, a header, then the rows.
fn write_csv(path: &Path, hash: &str, header: &str, rows: &[String]) -> Result<()> {
    create_parent(path)?;
    let mut text = String::new();
    let _ = writeln!(text, "# config = {hash}");
    let _ = writeln!(text, "{header}");
    for row in rows {
        let _ = writeln!(text, "{row}");
    }
    fs::write(path, text).map_err(Error::io(path))
}

/// Reaction-force curve of a single run: `step,u_d,force`.
pub fn write_forces_csv(path: &Path, hash: &str, rows: &[(usize, f64, f64)]) -> Result<()> {
    let lines: Vec<String> = rows
        .iter()
        .map(|(s, u, f)| format!("{s},{},{}", fmt_f(*u), fmt_f(*f)))
        .collect();
    write_csv(path, hash, "step,u_d,force", &lines)
}

/// Per-member reaction forces: `step,member,u_d,force`.
pub fn write_ensemble_forces_csv(
    path: &Path,
    hash: &str,
    rows: &[(usize, usize, f64, f64)],
) -> Result<()> {
    let lines: Vec<String> = rows
        .iter()
        .map(|(s, m, u, f)| format!("{s},{m},{},{}", fmt_f(*u), fmt_f(*f)))
        .collect();
    write_csv(path, hash, "step,member,u_d,force", &lines)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

/// Ensemble summary per step:
/// `step,u_d,mean_force,std_force,crack_mean,crack_std,n_alive`.
pub fn write_steps_csv(path: &Path, hash: &str, records: &[StepRecord]) -> Result<()> {
    let lines: Vec<String> = records
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.step,
                fmt_f(r.u_d),
                fmt_f(r.mean_force),
                fmt_f(r.std_force),
                fmt_opt(r.crack_mean),
                fmt_opt(r.crack_std),
                r.n_alive
            )
        })
        .collect();
    write_csv(
        path,
        hash,
        "step,u_d,mean_force,std_force,crack_mean,crack_std,n_alive",
        &lines,
    )
}

/// Per-member analysis diagnostics, one row per live member per analysis:
/// `step,member,pre_misfit,post_misfit,crack_position,phi_max,reaction_force,manifold_residual,retried`.
pub fn write_analyses_csv(path: &Path, hash: &str, records: &[AnalysisRecord]) -> Result<()> {
    let mut lines = Vec::new();
    for rec in records {
        for m in &rec.members {
            lines.push(format!(
                "{},{},{},{},{},{},{},{},{}",
                rec.step,
                m.member,
                fmt_f(m.pre_misfit),
                fmt_f(m.post_misfit),
                fmt_opt(m.crack_position),
                fmt_f(m.phi_max),
                fmt_f(m.reaction_force),
                fmt_f(m.manifold_residual),
                u8::from(m.retried)
            ));
        }
    }
    write_csv(
        path,
        hash,
        "step,member,pre_misfit,post_misfit,crack_position,phi_max,reaction_force,manifold_residual,retried",
        &lines,
    )
}

/// Discrepancy-kernel hyperparameters in effect at each analysis:
/// `step,nu,sigma,length`.
pub fn write_hyperparameters_csv(
    path: &Path,
    hash: &str,
    rows: &[(usize, MaternParams)],
) -> Result<()> {
    let lines: Vec<String> = rows
        .iter()
        .map(|(s, k)| {
            format!(
                "{s},{},{},{}",
                fmt_f(k.nu),
                fmt_f(k.sigma),
                fmt_f(k.length)
            )
        })
        .collect();
    write_csv(path, hash, "step,nu,sigma,length", &lines)
}

/// Sensor locations: `sensor_id,x` (1D) or `sensor_id,x,y` (2D).
pub fn write_sensors_csv(path: &Path, hash: &str, sensors: &[[f64; 2]], dim: usize) -> Result<()> {
    let header = if dim == 1 { "sensor_id,x" } else { "sensor_id,x,y" };
    let lines: Vec<String> = sensors
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if dim == 1 {
                format!("{i},{}", fmt_f(p[0]))
            } else {
                format!("{i},{},{}", fmt_f(p[0]), fmt_f(p[1]))
            }
        })
        .collect();
    write_csv(path, hash, header, &lines)
}

/// Synthetic measurements: `step,obs_index,sensor_id,component,value`, one
/// row per channel of each repeated observation.
pub fn write_data_csv(
    path: &Path,
    hash: &str,
    data: &BTreeMap<usize, DataBatch>,
    dim: usize,
) -> Result<()> {
    let mut lines = Vec::new();
    for (&step, batch) in data {
        for (j, y) in batch.ys.iter().enumerate() {
            for (row, &value) in y.iter().enumerate() {
                lines.push(format!(
                    "{step},{j},{},{},{}",
                    row / dim,
                    row % dim,
                    fmt_f(value)
                ));
            }
        }
    }
    write_csv(path, hash, "step,obs_index,sensor_id,component,value", &lines)
}

/// Read a data CSV back into per-step batches. Returns the config hash the
/// file was generated under (when recorded) alongside the data.
pub fn read_data_csv(path: &Path) -> Result<(Option<String>, BTreeMap<usize, DataBatch>)> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let mut hash = None;
    let mut header_seen = false;
    // (step, obs_index) -> rows in file order; channel index checked below.
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                if key.trim() == "config" {
                    hash = Some(value.trim().to_string());
                }
            }
            continue;
        }
        if !header_seen {
            if line != "step,obs_index,sensor_id,component,value" {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    detail: format!("line {line_no}: unexpected header `{line}`"),
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("line {line_no}: expected 5 fields, got {}", fields.len()),
            });
        }
        let step = parse_u(fields[0], path, line_no)?;
        let obs = parse_u(fields[1], path, line_no)?;
        let value = parse_f(fields[4], path, line_no)?;
        groups.entry((step, obs)).or_default().push(value);
    }
    if !header_seen {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: "missing header row".into(),
        });
    }
    let mut data: BTreeMap<usize, DataBatch> = BTreeMap::new();
    for ((step, obs), values) in groups {
        let batch = data.entry(step).or_insert_with(|| DataBatch {
            step,
            ys: Vec::new(),
        });
        if batch.ys.len() != obs {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("step {step}: observation indices are not contiguous"),
            });
        }
        batch.ys.push(DVector::from_vec(values));
    }
    for batch in data.values() {
        batch.validate()?;
    }
    Ok((hash, data))
}

/// Nodal fields as CSV: `node,x,u,d` (1D) or `node,x,y,u_x,u_y,d` (2D).
pub fn write_field_csv(path: &Path, hash: &str, mesh: &Mesh, state: &FieldState) -> Result<()> {
    let dim = mesh.dim();
    let header = if dim == 1 {
        "node,x,u,d"
    } else {
        "node,x,y,u_x,u_y,d"
    };
    let mut lines = Vec::with_capacity(mesh.n_nodes());
    for n in 0..mesh.n_nodes() {
        let c = mesh.coord(n);
        let mut row = format!("{n}");
        for k in 0..dim {
            let _ = write!(row, ",{}", fmt_f(c[k]));
        }
        for k in 0..dim {
            let _ = write!(row, ",{}", fmt_f(state.a_u[mesh.u_dof(n, k)]));
        }
        let _ = write!(row, ",{}", fmt_f(state.a_d[n]));
        lines.push(row);
    }
    write_csv(path, hash, header, &lines)
}

/// Quadrature-point phase field as CSV: `qp,x[,y],phi`.
pub fn write_phi_csv(path: &Path, hash: &str, mesh: &Mesh, phi_q: &[f64]) -> Result<()> {
    let dim = mesh.dim();
    let header = if dim == 1 { "qp,x,phi" } else { "qp,x,y,phi" };
    let coords = mesh.qp_coords();
    let mut lines = Vec::with_capacity(phi_q.len());
    for (q, &phi) in phi_q.iter().enumerate() {
        let mut row = format!("{q}");
        for k in 0..dim {
            let _ = write!(row, ",{}", fmt_f(coords[q][k]));
        }
        let _ = write!(row, ",{}", fmt_f(phi));
        lines.push(row);
    }
    write_csv(path, hash, header, &lines)
}

/// Serialize one solver state as a whitespace-delimited text block.
fn write_state_text(state: &FieldState) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "step {}", state.step);
    let _ = writeln!(out, "u_d {}", fmt_f(state.u_d));
    let _ = writeln!(out, "dt_last {}", fmt_f(state.dt_last));
    let _ = writeln!(out, "history_steps {}", state.history_steps);
    for (name, values) in [
        ("a_u", &state.a_u),
        ("a_d", &state.a_d),
        ("phi_q", &state.phi_q),
        ("a_d_prev", &state.a_d_prev),
        ("a_d_prev2", &state.a_d_prev2),
    ] {
        let _ = writeln!(out, "{name} {}", values.len());
        for &v in values.iter() {
            let _ = writeln!(out, "{}", fmt_f(v));
        }
    }
    out
}

fn read_state_text(text: &str, path: &Path) -> Result<FieldState> {
    let bad = |line: usize, detail: String| Error::Format {
        path: path.to_path_buf(),
        detail: format!("line {line}: {detail}"),
    };
    let mut lines = text.lines().enumerate();
    let mut scalar = |key: &str| -> Result<String> {
        let (k, line) = lines
            .next()
            .ok_or_else(|| bad(0, format!("missing `{key}` line")))?;
        let (name, value) = line
            .split_once(' ')
            .ok_or_else(|| bad(k + 1, format!("expected `{key} <value>`")))?;
        if name != key {
            return Err(bad(k + 1, format!("expected `{key}`, got `{name}`")));
        }
        Ok(value.to_string())
    };
    let step = scalar("step")?
        .parse::<usize>()
        .map_err(|e| bad(1, e.to_string()))?;
    let u_d = scalar("u_d")?
        .parse::<f64>()
        .map_err(|e| bad(2, e.to_string()))?;
    let dt_last = scalar("dt_last")?
        .parse::<f64>()
        .map_err(|e| bad(3, e.to_string()))?;
    let history_steps = scalar("history_steps")?
        .parse::<usize>()
        .map_err(|e| bad(4, e.to_string()))?;

    let mut blocks: Vec<Vec<f64>> = Vec::with_capacity(5);
    for key in ["a_u", "a_d", "phi_q", "a_d_prev", "a_d_prev2"] {
        let (k, line) = lines
            .next()
            .ok_or_else(|| bad(0, format!("missing `{key}` block")))?;
        let (name, len) = line
            .split_once(' ')
            .ok_or_else(|| bad(k + 1, format!("expected `{key} <len>`")))?;
        if name != key {
            return Err(bad(k + 1, format!("expected `{key}`, got `{name}`")));
        }
        let len = len.parse::<usize>().map_err(|e| bad(k + 1, e.to_string()))?;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let (j, line) = lines
                .next()
                .ok_or_else(|| bad(0, format!("truncated `{key}` block")))?;
            values.push(line.parse::<f64>().map_err(|e| bad(j + 1, e.to_string()))?);
        }
        blocks.push(values);
    }
    let a_d_prev2 = blocks.pop().unwrap();
    let a_d_prev = blocks.pop().unwrap();
    let phi_q = blocks.pop().unwrap();
    let a_d = blocks.pop().unwrap();
    let a_u = blocks.pop().unwrap();
    Ok(FieldState {
        a_u,
        a_d,
        phi_q,
        a_d_prev,
        a_d_prev2,
        dt_last,
        history_steps,
        step,
        u_d,
    })
}

/// Write one state to a standalone text file.
pub fn write_state_file(path: &Path, state: &FieldState) -> Result<()> {
    create_parent(path)?;
    fs::write(path, write_state_text(state)).map_err(Error::io(path))
}

/// Read one state from a standalone text file.
pub fn read_state_file(path: &Path) -> Result<FieldState> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    read_state_text(&text, path)
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    config: String,
    step: usize,
    members: Vec<MemberMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MemberMeta {
    seed: u64,
    alive: bool,
}

fn member_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("member_{index:03}.txt"))
}

/// Persist the whole ensemble under `dir`: `manifest.toml` plus one state
/// file per member (dead members keep their last state, flagged in the
/// manifest).
pub fn save_checkpoint(dir: &Path, hash: &str, ens: &EnsembleState) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let manifest = CheckpointManifest {
        config: hash.to_string(),
        step: ens.step,
        members: ens
            .members
            .iter()
            .map(|m| MemberMeta {
                seed: m.seed,
                alive: m.alive,
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    let manifest_path = dir.join("manifest.toml");
    let mut f = fs::File::create(&manifest_path).map_err(Error::io(&manifest_path))?;
    f.write_all(text.as_bytes()).map_err(Error::io(&manifest_path))?;
    for (i, m) in ens.members.iter().enumerate() {
        write_state_file(&member_file(dir, i), &m.state)?;
    }
    Ok(())
}

/// Load an ensemble checkpoint. Returns the config hash it was written
/// under together with the reconstructed ensemble.
pub fn load_checkpoint(dir: &Path) -> Result<(String, EnsembleState)> {
    let manifest_path = dir.join("manifest.toml");
    let text = fs::read_to_string(&manifest_path).map_err(Error::io(&manifest_path))?;
    let manifest: CheckpointManifest = toml::from_str(&text).map_err(|e| Error::Format {
        path: manifest_path.clone(),
        detail: e.to_string(),
    })?;
    let mut members = Vec::with_capacity(manifest.members.len());
    for (i, meta) in manifest.members.iter().enumerate() {
        let state = read_state_file(&member_file(dir, i))?;
        if meta.alive && state.step != manifest.step {
            return Err(Error::Format {
                path: member_file(dir, i),
                detail: format!(
                    "live member at step {} but the checkpoint is at step {}",
                    state.step, manifest.step
                ),
            });
        }
        members.push(MemberSlot {
            state,
            seed: meta.seed,
            alive: meta.alive,
        });
    }
    let ens = EnsembleState {
        members,
        step: manifest.step,
    };
    ens.validate()?;
    Ok((manifest.config, ens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_prior, PriorSpec};
    use crate::filter::MemberAnalysis;
    use crate::mesh::build_mesh_1d;
    use tempfile::tempdir;

    fn messy_state(mesh: &Mesh, salt: f64) -> FieldState {
        let mut s = FieldState::new(mesh);
        for (i, v) in s.a_u.iter_mut().enumerate() {
            *v = (i as f64 * 0.3 + salt).sin() * 1e-3;
        }
        for (i, v) in s.a_d.iter_mut().enumerate() {
            *v = (i as f64 * 0.7 + salt).cos().abs() * 1e-4;
        }
        for (i, v) in s.phi_q.iter_mut().enumerate() {
            *v = ((i as f64 * 1.1 + salt).sin() * 0.5 + 0.5).clamp(0.0, 1.0);
        }
        s.a_d_prev.copy_from_slice(&s.a_d);
        s.dt_last = 1.0;
        s.history_steps = 7;
        s.step = 7;
        s.u_d = 7e-4;
        s
    }

    #[test]
    fn state_file_round_trips_exactly() {
        let mesh = build_mesh_1d(9, -1.0, 1.0).unwrap();
        let state = messy_state(&mesh, 0.123456789012345);
        let dir = tempdir().unwrap();
        let path = dir.path().join("state.txt");
        write_state_file(&path, &state).unwrap();
        let back = read_state_file(&path).unwrap();
        assert_eq!(state, back, "bitwise state round trip");

        // Re-writing the parsed state reproduces the file bytes.
        let path2 = dir.path().join("state2.txt");
        write_state_file(&path2, &back).unwrap();
        assert_eq!(
            fs::read(&path).unwrap(),
            fs::read(&path2).unwrap(),
            "byte-identical rewrite"
        );
    }

    #[test]
    fn truncated_state_file_is_a_format_error() {
        let mesh = build_mesh_1d(5, 0.0, 1.0).unwrap();
        let state = messy_state(&mesh, 0.5);
        let dir = tempdir().unwrap();
        let path = dir.path().join("state.txt");
        write_state_file(&path, &state).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        fs::write(&path, cut).unwrap();
        assert!(matches!(
            read_state_file(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trips_the_ensemble() {
        let mesh = build_mesh_1d(8, -1.0, 1.0).unwrap();
        let mut ens = sample_prior(&PriorSpec::Pristine, &mesh, 4, 99).unwrap();
        for (i, m) in ens.members.iter_mut().enumerate() {
            m.state = messy_state(&mesh, i as f64);
            m.state.step = 3;
        }
        ens.step = 3;
        ens.members[2].alive = false;
        ens.members[2].state.step = 1; // dead members may lag

        let dir = tempdir().unwrap();
        save_checkpoint(dir.path(), "deadbeef", &ens).unwrap();
        let (hash, back) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(hash, "deadbeef");
        assert_eq!(back.step, 3);
        assert_eq!(back.members.len(), 4);
        for (a, b) in ens.members.iter().zip(&back.members) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.alive, b.alive);
            assert_eq!(a.state, b.state);
        }
    }

    #[test]
    fn checkpoint_step_mismatch_is_rejected() {
        let mesh = build_mesh_1d(8, -1.0, 1.0).unwrap();
        let mut ens = sample_prior(&PriorSpec::Pristine, &mesh, 3, 5).unwrap();
        ens.step = 2;
        for m in &mut ens.members {
            m.state.step = 2;
        }
        ens.members[1].state.step = 1; // live member out of sync
        let dir = tempdir().unwrap();
        save_checkpoint(dir.path(), "abc", &ens).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn data_csv_round_trips_and_reports_its_hash() {
        let mut data = BTreeMap::new();
        data.insert(
            82,
            DataBatch {
                step: 82,
                ys: vec![
                    DVector::from_vec(vec![0.1, -0.25e-3, 3.0]),
                    DVector::from_vec(vec![0.4, 0.5e-9, -6.0]),
                ],
            },
        );
        data.insert(
            92,
            DataBatch {
                step: 92,
                ys: vec![DVector::from_vec(vec![7.0, 8.0, 9.125])],
            },
        );
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_data_csv(&path, "cafe01", &data, 1).unwrap();

        let (hash, back) = read_data_csv(&path).unwrap();
        assert_eq!(hash.as_deref(), Some("cafe01"));
        assert_eq!(back.len(), 2);
        assert_eq!(back[&82].ys.len(), 2);
        assert_eq!(back[&82].ys[0], data[&82].ys[0]);
        assert_eq!(back[&82].ys[1], data[&82].ys[1]);
        assert_eq!(back[&92].ys[0], data[&92].ys[0]);

        // 2D layout: 2 sensors x 2 components per observation.
        let mut data2 = BTreeMap::new();
        data2.insert(
            5,
            DataBatch {
                step: 5,
                ys: vec![DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])],
            },
        );
        let path2 = dir.path().join("data2.csv");
        write_data_csv(&path2, "cafe02", &data2, 2).unwrap();
        let text = fs::read_to_string(&path2).unwrap();
        assert!(text.contains("5,0,0,0,1.0"), "sensor 0 component 0");
        assert!(text.contains("5,0,0,1,2.0"), "sensor 0 component 1");
        assert!(text.contains("5,0,1,0,3.0"), "sensor 1 component 0");
        let (_, back2) = read_data_csv(&path2).unwrap();
        assert_eq!(back2[&5].ys[0], data2[&5].ys[0]);
    }

    #[test]
    fn malformed_data_csv_is_rejected_with_context() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(
            &path,
            "# config = x\nstep,obs_index,sensor_id,component,value\n1,0,0,0,nope\n",
        )
        .unwrap();
        let err = read_data_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "got: {msg}");

        fs::write(&path, "# config = x\nwrong,header\n").unwrap();
        assert!(matches!(
            read_data_csv(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn csv_writers_emit_hash_comment_then_header() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("forces.csv");
        write_forces_csv(&path, "deadbeef", &[(1, 1e-4, 0.5), (2, 2e-4, 1.0)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# config = deadbeef"));
        assert_eq!(lines.next(), Some("step,u_d,force"));
        assert_eq!(lines.next(), Some("1,0.0001,0.5"));

        let path = dir.path().join("analyses.csv");
        let rec = AnalysisRecord {
            step: 82,
            mean_pre_misfit: 2.0,
            mean_post_misfit: 1.0,
            members: vec![MemberAnalysis {
                member: 0,
                pre_misfit: 2.0,
                post_misfit: 1.0,
                crack_position: None,
                phi_max: 0.5,
                reaction_force: 3.25,
                manifold_residual: 1e-9,
                retried: false,
            }],
            kernel: MaternParams {
                nu: 1.5,
                sigma: 2e-4,
                length: 0.3,
            },
        };
        write_analyses_csv(&path, "deadbeef", &[rec]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("82,0,2.0,1.0,,0.5,3.25,1e-9,0"), "got: {text}");
    }

    #[test]
    fn field_and_phi_csv_cover_every_node_and_qp() {
        let mesh = build_mesh_1d(4, 0.0, 1.0).unwrap();
        let state = messy_state(&mesh, 1.0);
        let dir = tempdir().unwrap();
        let field = dir.path().join("field.csv");
        write_field_csv(&field, "h", &mesh, &state).unwrap();
        let text = fs::read_to_string(&field).unwrap();
        // comment + header + one row per node
        assert_eq!(text.lines().count(), 2 + mesh.n_nodes());
        assert!(text.lines().nth(1).unwrap().starts_with("node,x,u,d"));

        let phi = dir.path().join("phi.csv");
        write_phi_csv(&phi, "h", &mesh, &state.phi_q).unwrap();
        let text = fs::read_to_string(&phi).unwrap();
        assert_eq!(text.lines().count(), 2 + mesh.n_qp_total());
    }
}
