use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{atomic_write, io_err, FormatError};
use crate::kinematics::{ArticulatedState, CameraModel, Trajectory};

const HEADER: &str = "kvlr-trajectory 1";

/// One sequence on disk: identifier, camera and action trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub camera: CameraModel,
    pub trajectory: Trajectory,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Text layout:
///
/// ```text
/// kvlr-trajectory 1
/// sequence <id>
/// camera <fx> <fy> <cx> <cy> <width> <height>
/// extrinsic <12 values of [R | t], row-major>
/// dt <seconds>
/// frames <count>
/// <index from 1> <px py pz rx ry rz q_sw q_lg q_rg>
/// ```
pub fn format_trajectory(rec: &DatasetRecord) -> String {
    let c = &rec.camera;
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "sequence {}", rec.id).unwrap();
    writeln!(
        s,
        "camera {} {} {} {} {} {}",
        num(c.fx),
        num(c.fy),
        num(c.cx),
        num(c.cy),
        c.width,
        c.height
    )
    .unwrap();
    let ext: Vec<String> = (0..3)
        .flat_map(|r| {
            (0..3)
                .map(move |k| c.rotation[(r, k)])
                .chain(std::iter::once(c.translation[r]))
        })
        .map(num)
        .collect();
    writeln!(s, "extrinsic {}", ext.join(" ")).unwrap();
    writeln!(s, "dt {}", num(rec.trajectory.dt())).unwrap();
    writeln!(s, "frames {}", rec.trajectory.len()).unwrap();
    for (i, st) in rec.trajectory.states().iter().enumerate() {
        let vals: Vec<String> = st.to_array().into_iter().map(num).collect();
        writeln!(s, "{} {}", i + 1, vals.join(" ")).unwrap();
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), FormatError> {
        loop {
            let Some((i, line)) = self.inner.next() else {
                return Err(FormatError::Parse {
                    line: 0,
                    message: format!("unexpected end of file, expected '{key}'"),
                });
            };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let first = parts.next().unwrap_or_default();
            if !key.is_empty() && first != key {
                return Err(FormatError::Parse {
                    line: i + 1,
                    message: format!("expected '{key}', found '{first}'"),
                });
            }
            let mut fields: Vec<&str> = if key.is_empty() { vec![first] } else { Vec::new() };
            fields.extend(parts);
            return Ok((i + 1, fields));
        }
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64, FormatError> {
    s.parse().map_err(|_| FormatError::Parse {
        line,
        message: format!("'{s}' is not a number"),
    })
}

fn parse_usize(s: &str, line: usize) -> Result<usize, FormatError> {
    s.parse().map_err(|_| FormatError::Parse {
        line,
        message: format!("'{s}' is not a non-negative integer"),
    })
}

fn expect_len(fields: &[&str], n: usize, line: usize) -> Result<(), FormatError> {
    if fields.len() != n {
        return Err(FormatError::Parse {
            line,
            message: format!("expected {n} values, found {}", fields.len()),
        });
    }
    Ok(())
}

pub fn parse_trajectory(text: &str) -> Result<DatasetRecord, FormatError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (ln, head) = lines.next_fields("kvlr-trajectory")?;
    if head != ["1"] {
        return Err(FormatError::Parse {
            line: ln,
            message: format!("unsupported format version '{}'", head.join(" ")),
        });
    }
    let (_, id) = lines.next_fields("sequence")?;
    let id = id.join(" ");

    let (ln, cam) = lines.next_fields("camera")?;
    expect_len(&cam, 6, ln)?;
    let mut camera = CameraModel::new(
        parse_f64(cam[0], ln)?,
        parse_f64(cam[1], ln)?,
        parse_f64(cam[2], ln)?,
        parse_f64(cam[3], ln)?,
        parse_usize(cam[4], ln)?,
        parse_usize(cam[5], ln)?,
    );
    let (ln, ext) = lines.next_fields("extrinsic")?;
    expect_len(&ext, 12, ln)?;
    let e = ext.iter().map(|s| parse_f64(s, ln)).collect::<Result<Vec<_>, _>>()?;
    camera.rotation = Matrix3::new(e[0], e[1], e[2], e[4], e[5], e[6], e[8], e[9], e[10]);
    camera.translation = Vector3::new(e[3], e[7], e[11]);
    camera
        .validate()
        .map_err(|err| FormatError::InvariantViolation(format!("camera: {err}")))?;

    let (ln, dt) = lines.next_fields("dt")?;
    expect_len(&dt, 1, ln)?;
    let dt = parse_f64(dt[0], ln)?;
    let (ln, count) = lines.next_fields("frames")?;
    expect_len(&count, 1, ln)?;
    let count = parse_usize(count[0], ln)?;

    let mut states = Vec::with_capacity(count);
    for k in 1..=count {
        let (ln, f) = lines.next_fields("").map_err(|_| FormatError::Parse {
            line: 0,
            message: format!("file ends before frame {k} of {count}"),
        })?;
        expect_len(&f, 10, ln)?;
        let idx = parse_usize(f[0], ln)?;
        if idx != k {
            return Err(FormatError::InvariantViolation(format!(
                "line {ln}: frame index {idx}, expected {k}"
            )));
        }
        let mut a = [0.0; 9];
        for (slot, s) in a.iter_mut().zip(&f[1..]) {
            *slot = parse_f64(s, ln)?;
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::InvariantViolation(format!(
                "line {ln}: non-finite action value"
            )));
        }
        states.push(ArticulatedState::from_array(a));
    }
    let trajectory = Trajectory::new(states, dt).map_err(|e| FormatError::InvariantViolation(e.to_string()))?;
    Ok(DatasetRecord { id, camera, trajectory })
}

pub fn read_trajectory(path: &Path) -> crate::Result<DatasetRecord> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_trajectory(&text)?)
}

pub fn write_trajectory(path: &Path, rec: &DatasetRecord) -> crate::Result<()> {
    atomic_write(path, format_trajectory(rec).as_bytes())
}
