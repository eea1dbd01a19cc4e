use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};

const FORMAT: &str = "pts";

/// Parses iBUG `.pts` text. Coordinates in the file are 1-based and are
/// returned 0-based (pixel centres at integers).
pub fn parse_pts(text: &str) -> Result<Vec<Vector2<f64>>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut n_points = None;
    for line in lines.by_ref() {
        if line == "{" {
            break;
        }
        if let Some(rest) = line.strip_prefix("n_points:") {
            let n = rest
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::format(FORMAT, format!("bad n_points '{}': {e}", rest.trim())))?;
            n_points = Some(n);
        } else if !line.starts_with("version:") {
            return Err(Error::format(FORMAT, format!("unexpected header line '{line}'")));
        }
    }
    let n = n_points.ok_or_else(|| Error::format(FORMAT, "missing n_points"))?;
    let mut points = Vec::with_capacity(n);
    let mut closed = false;
    for line in lines.by_ref() {
        if line == "}" {
            closed = true;
            break;
        }
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y)), None) if x.is_finite() && y.is_finite() => {
                points.push(Vector2::new(x - 1.0, y - 1.0))
            }
            _ => return Err(Error::format(FORMAT, format!("bad point line '{line}'"))),
        }
    }
    if !closed {
        return Err(Error::format(FORMAT, "missing closing brace"));
    }
    if points.len() != n {
        return Err(Error::format(
            FORMAT,
            format!("header declares {n} points, found {}", points.len()),
        ));
    }
    Ok(points)
}

pub fn read_pts(path: &Path) -> Result<Vec<Vector2<f64>>> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::format(FORMAT, e.to_string()))?;
    parse_pts(text).map_err(|e| match e {
        Error::Format { format, message } => {
            Error::format(format, format!("{}: {message}", path.display()))
        }
        other => other,
    })
}

pub fn write_pts(path: &Path, points: &[Vector2<f64>]) -> Result<()> {
    let mut text = format!("version: 1\nn_points: {}\n{{\n", points.len());
    for p in points {
        writeln!(text, "{} {}", p.x + 1.0, p.y + 1.0).expect("writing to a String");
    }
    text.push_str("}\n");
    write_bytes(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_one_based_points() {
        let pts = parse_pts("version: 1\nn_points: 2\n{\n1 1\n10.5 3\n}\n").unwrap();
        assert_eq!(pts, vec![Vector2::new(0.0, 0.0), Vector2::new(9.5, 2.0)]);
    }

    #[test]
    fn count_mismatch_is_rejected() {
        assert!(matches!(
            parse_pts("version: 1\nn_points: 3\n{\n1 1\n}\n"),
            Err(Error::Format { .. })
        ));
        assert!(parse_pts("version: 1\nn_points: 1\n{\n1 1\n").is_err());
        assert!(parse_pts("n_points: 1\n{\n1 nan\n}\n").is_err());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pts");
        let pts = vec![Vector2::new(12.25, -0.5), Vector2::new(0.1, 200.0)];
        write_pts(&path, &pts).unwrap();
        for (a, b) in read_pts(&path).unwrap().iter().zip(&pts) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
