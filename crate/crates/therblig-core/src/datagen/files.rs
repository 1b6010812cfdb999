//! Demo CSV format and file checksums.
//!
//! One row per timestep:
//!
//! ```text
//! t,q0..q6,qd0..qd6,x,y,z,roll,pitch,yaw,fx,fy,fz,tx,ty,tz,gripper,label
//! ```
//!
//! Feature values are written at f32 precision (shortest round-trip
//! form), gripper is 0/1, label is the therblig code 0..6.

use super::GenError;
use crate::domain::{
    validate_feature_rows, Demonstration, LabelSequence, RobotState, Therblig, FEATURE_DIM,
};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

pub const CSV_HEADER: &str = "t,q0,q1,q2,q3,q4,q5,q6,qd0,qd1,qd2,qd3,qd4,qd5,qd6,x,y,z,roll,pitch,yaw,fx,fy,fz,tx,ty,tz,gripper,label";

fn io_err(path: &Path, source: std::io::Error) -> GenError {
    GenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write a demonstration and its labels as CSV.
pub fn save_demo_csv(
    path: &Path,
    demo: &Demonstration,
    labels: &LabelSequence,
) -> Result<(), GenError> {
    assert_eq!(demo.len(), labels.len(), "labels must pair with states");
    let mut out = Vec::with_capacity(demo.len() * 220);
    writeln!(out, "{CSV_HEADER}").expect("vec write");
    for (t, state) in demo.states.iter().enumerate() {
        write!(out, "{t}").expect("vec write");
        for v in state.flatten() {
            // f32 shortest round-trip keeps files compact and loads exact
            write!(out, ",{}", v as f32).expect("vec write");
        }
        writeln!(
            out,
            ",{},{}",
            u8::from(demo.gripper[t]),
            labels.labels[t].code()
        )
        .expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a demonstration CSV back. Width and finiteness violations are
/// collected and reported together.
pub fn load_demo_csv(path: &Path, task_id: &str) -> Result<(Demonstration, LabelSequence), GenError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(GenError::Parse {
            path: path.to_path_buf(),
            detail: format!("unexpected header {header:?}"),
        });
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut gripper = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != FEATURE_DIM + 3 {
            return Err(GenError::Parse {
                path: path.to_path_buf(),
                detail: format!("line {}: {} fields, expected {}", lineno + 2, fields.len(), FEATURE_DIM + 3),
            });
        }
        let parse = |s: &str| -> Result<f64, GenError> {
            s.parse::<f64>().map_err(|e| GenError::Parse {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}: {s:?}", lineno + 2),
            })
        };
        let mut row = Vec::with_capacity(FEATURE_DIM);
        for field in &fields[1..1 + FEATURE_DIM] {
            row.push(parse(field)?);
        }
        rows.push(row);
        gripper.push(fields[FEATURE_DIM + 1] == "1");
        let code = fields[FEATURE_DIM + 2]
            .parse::<u8>()
            .map_err(|e| GenError::Parse {
                path: path.to_path_buf(),
                detail: format!("line {}: label: {e}", lineno + 2),
            })?;
        labels.push(Therblig::from_code(code).ok_or_else(|| GenError::Parse {
            path: path.to_path_buf(),
            detail: format!("line {}: label code {code} out of range", lineno + 2),
        })?);
    }

    let report = validate_feature_rows(&rows);
    if !report.is_ok() {
        return Err(GenError::Parse {
            path: path.to_path_buf(),
            detail: report.to_string(),
        });
    }
    let states = rows
        .iter()
        .map(|r| RobotState::from_flat(r))
        .collect::<Result<Vec<_>, _>>()?;
    let demo = Demonstration {
        states,
        sample_rate_hz: 10.0,
        task_id: task_id.to_string(),
        gripper,
    };
    Ok((demo, LabelSequence::new(labels)))
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String, GenError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_demo, generate_scene, GeneratorConfig};

    #[test]
    fn csv_round_trip_preserves_values_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demo.csv");
        let template = &crate::datagen::training_templates()[0];
        let scene = generate_scene(2, 0, 9).unwrap();
        let out = generate_demo(template, &scene, &GeneratorConfig::default(), 4).unwrap();

        save_demo_csv(&path, &out.demo, &out.labels).unwrap();
        let (loaded, labels) = load_demo_csv(&path, &out.demo.task_id).unwrap();

        assert_eq!(labels, out.labels);
        assert_eq!(loaded.gripper, out.demo.gripper);
        assert_eq!(loaded.len(), out.demo.len());
        for (a, b) in loaded.states.iter().zip(&out.demo.states) {
            for (x, y) in a.flatten().iter().zip(b.flatten()) {
                assert_eq!(*x as f32, y as f32);
            }
        }

        // byte-identical on re-save
        let path2 = dir.path().join("demo2.csv");
        save_demo_csv(&path2, &out.demo, &out.labels).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn load_rejects_wrong_width() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut text = format!("{CSV_HEADER}\n");
        text.push_str("0,1,2\n");
        std::fs::write(&path, text).unwrap();
        let err = load_demo_csv(&path, "t").unwrap_err();
        assert!(err.to_string().contains("fields"));
    }

    #[test]
    fn load_rejects_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.csv");
        let mut text = format!("{CSV_HEADER}\n");
        for t in 0..3 {
            let v = if t == 1 { "NaN" } else { "0" };
            let row: Vec<String> = (0..26).map(|k| if k == 3 { v.into() } else { "0".into() }).collect();
            text.push_str(&format!("{t},{},0,0\n", row.join(",")));
        }
        std::fs::write(&path, text).unwrap();
        let err = load_demo_csv(&path, "t").unwrap_err();
        assert!(err.to_string().contains("t=1, feature=3"), "{err}");
    }

    #[test]
    fn sha256_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        std::fs::write(&path, b"abc").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
