//! ASCII PLY and CSV readers/writers.
//!
//! Coordinates are written with Rust's shortest round-trip float formatting,
//! so a save/load cycle reproduces every `f64` bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{PartLabel, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    Ply,
    Csv,
}

impl CloudFormat {
    /// Guess from the file extension.
    pub fn from_path(path: &Path) -> Option<CloudFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(CloudFormat::Ply),
            "csv" => Some(CloudFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ply" => Ok(CloudFormat::Ply),
            "csv" => Ok(CloudFormat::Csv),
            other => Err(format!("unknown point cloud format `{other}`")),
        }
    }
}

pub fn load_point_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::Ply => parse_ply(path, &text),
        CloudFormat::Csv => parse_csv(path, &text),
    }
}

pub fn save_point_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let path = path.as_ref();
    cloud.ensure_non_empty()?;
    if let Some(labels) = &cloud.labels {
        if labels.len() != cloud.len() {
            return Err(Error::LabelCount {
                points: cloud.len(),
                labels: labels.len(),
            });
        }
    }
    let text = match format {
        CloudFormat::Ply => format_ply(cloud),
        CloudFormat::Csv => format_csv(cloud),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn format_ply(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48 + 128);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.labels.is_some() {
        out.push_str("property int label\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(labels) = &cloud.labels {
            let _ = write!(out, " {}", labels[i].code());
        }
        out.push('\n');
    }
    out
}

fn format_csv(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48 + 16);
    out.push_str(if cloud.labels.is_some() {
        "x,y,z,label\n"
    } else {
        "x,y,z\n"
    });
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{},{},{}", p.x, p.y, p.z);
        if let Some(labels) = &cloud.labels {
            let _ = write!(out, ",{}", labels[i].code());
        }
        out.push('\n');
    }
    out
}

fn parse_err(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.into(),
    }
}

fn parse_coord(path: &Path, location: &str, token: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(path, location, format!("invalid number `{token}`")))?;
    if !v.is_finite() {
        return Err(parse_err(path, location, format!("non-finite coordinate `{token}`")));
    }
    Ok(v)
}

fn parse_label(path: &Path, location: &str, token: &str) -> Result<PartLabel> {
    let code: u32 = token
        .parse()
        .map_err(|_| parse_err(path, location, format!("invalid label `{token}`")))?;
    PartLabel::from_code(code).ok_or_else(|| parse_err(path, location, format!("unknown label code {code}")))
}

fn parse_ply(path: &Path, text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, "line 1", "missing `ply` magic")),
    }

    let mut vertex_count: Option<usize> = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut header_done = false;
    for (n, line) in lines.by_ref() {
        let loc = format!("line {}", n + 1);
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(parse_err(path, loc, "only ASCII PLY is supported"));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().unwrap_or_default();
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(parse_err(path, loc, "duplicate vertex element"));
                    }
                    let count = tok
                        .next()
                        .and_then(|c| c.parse().ok())
                        .ok_or_else(|| parse_err(path, &loc, "malformed vertex count"))?;
                    vertex_count = Some(count);
                    in_vertex = true;
                } else {
                    if vertex_count.is_none() {
                        return Err(parse_err(path, loc, format!("element `{name}` precedes vertex")));
                    }
                    in_vertex = false;
                }
            }
            Some("property") => {
                if in_vertex {
                    let rest: Vec<&str> = tok.collect();
                    if rest.first() == Some(&"list") || rest.len() != 2 {
                        return Err(parse_err(path, loc, "unsupported vertex property"));
                    }
                    props.push(rest[1].to_string());
                }
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => return Err(parse_err(path, loc, format!("unexpected header keyword `{other}`"))),
        }
    }
    if !header_done {
        return Err(parse_err(path, "header", "missing end_header"));
    }
    let count = vertex_count.ok_or_else(|| parse_err(path, "header", "no vertex element"))?;
    let find = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(path, "header", "vertex element lacks x/y/z")),
    };
    let il = find("label");

    let mut points = Vec::with_capacity(count);
    let mut labels = il.map(|_| Vec::with_capacity(count));
    for v in 0..count {
        let (n, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, format!("vertex {v}"), "unexpected end of file"))?;
        let loc = format!("line {} (vertex {v})", n + 1);
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != props.len() {
            return Err(parse_err(
                path,
                loc,
                format!("expected {} values, found {}", props.len(), tokens.len()),
            ));
        }
        points.push(Point3::new(
            parse_coord(path, &loc, tokens[ix])?,
            parse_coord(path, &loc, tokens[iy])?,
            parse_coord(path, &loc, tokens[iz])?,
        ));
        if let (Some(i), Some(labels)) = (il, labels.as_mut()) {
            labels.push(parse_label(path, &loc, tokens[i])?);
        }
    }
    Ok(PointCloud { points, labels })
}

fn parse_csv(path: &Path, text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim().replace(' ', ""))
        .ok_or_else(|| parse_err(path, "line 1", "empty file"))?;
    let has_label = match header.as_str() {
        "x,y,z" => false,
        "x,y,z,label" => true,
        other => return Err(parse_err(path, "line 1", format!("unexpected header `{other}`"))),
    };
    let mut points = Vec::new();
    let mut labels = has_label.then(Vec::new);
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("line {}", n + 1);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = if has_label { 4 } else { 3 };
        if fields.len() != expected {
            return Err(parse_err(
                path,
                loc,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        points.push(Point3::new(
            parse_coord(path, &loc, fields[0])?,
            parse_coord(path, &loc, fields[1])?,
            parse_coord(path, &loc, fields[2])?,
        ));
        if let Some(labels) = labels.as_mut() {
            labels.push(parse_label(path, &loc, fields[3])?);
        }
    }
    Ok(PointCloud { points, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Side;
    use proptest::prelude::*;

    fn tmp(name: &str, body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        (dir, path)
    }

    #[test]
    fn three_line_csv_without_labels() {
        let (_d, path) = tmp("a.csv", "x,y,z\n0,0,0\n1,0,0\n0,1,0\n");
        let cloud = load_point_cloud(&path, CloudFormat::Csv).unwrap();
        assert_eq!(cloud.len(), 3);
        assert!(cloud.labels.is_none());
        assert_eq!(cloud.points[1], Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn ply_label_zero_is_sternum() {
        let body = "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\nproperty float y\n\
                    property float z\nproperty int label\nend_header\n0 0 0 0\n1 2 3 0\n";
        let (_d, path) = tmp("a.ply", body);
        let cloud = load_point_cloud(&path, CloudFormat::Ply).unwrap();
        assert_eq!(cloud.labels.unwrap(), vec![PartLabel::Sternum; 2]);
    }

    #[test]
    fn non_finite_coordinate_names_line() {
        let (_d, path) = tmp("a.csv", "x,y,z\n0,0,0\n1,NaN,0\n");
        let err = load_point_cloud(&path, CloudFormat::Csv).unwrap_err();
        match err {
            Error::Parse { location, .. } => assert_eq!(location, "line 3"),
            e => panic!("unexpected {e}"),
        }
        let body = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 inf 0\n";
        let (_d, path) = tmp("b.ply", body);
        let err = load_point_cloud(&path, CloudFormat::Ply).unwrap_err();
        assert!(err.to_string().contains("vertex 0"), "{err}");
    }

    #[test]
    fn malformed_header_rejected() {
        let (_d, path) = tmp("a.ply", "ply\nformat binary_little_endian 1.0\nend_header\n");
        assert!(load_point_cloud(&path, CloudFormat::Ply).is_err());
        let (_d, path) = tmp(
            "b.ply",
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n",
        );
        assert!(load_point_cloud(&path, CloudFormat::Ply).is_err());
        let (_d, path) = tmp("c.csv", "a,b,c\n1,2,3\n");
        assert!(load_point_cloud(&path, CloudFormat::Csv).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_point_cloud("/nonexistent/cloud.ply", CloudFormat::Ply).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn empty_cloud_refused() {
        let dir = tempfile::tempdir().unwrap();
        let err = save_point_cloud(&PointCloud::default(), dir.path().join("e.ply"), CloudFormat::Ply).unwrap_err();
        assert!(matches!(err, Error::EmptyCloud));
    }

    #[test]
    fn ply_ignores_trailing_elements() {
        let body = "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n1.5 2.5 3.5\n3 0 0 0\n";
        let (_d, path) = tmp("f.ply", body);
        let cloud = load_point_cloud(&path, CloudFormat::Ply).unwrap();
        assert_eq!(cloud.points, vec![Point3::new(1.5, 2.5, 3.5)]);
    }

    fn label_strategy() -> impl Strategy<Value = PartLabel> {
        prop_oneof![
            Just(PartLabel::Sternum),
            Just(PartLabel::Unassigned),
            (prop::bool::ANY, 2u8..=5).prop_map(|(left, level)| PartLabel::Cartilage {
                side: if left { Side::Left } else { Side::Right },
                level
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn save_load_round_trip(
            pts in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4, -1e-3f64..1e-3), 1..40),
            labels in prop::collection::vec(label_strategy(), 40),
            with_labels in prop::bool::ANY,
            csv in prop::bool::ANY,
        ) {
            let points: Vec<Point3> = pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let cloud = PointCloud {
                labels: with_labels.then(|| labels[..points.len()].to_vec()),
                points,
            };
            let format = if csv { CloudFormat::Csv } else { CloudFormat::Ply };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.out");
            save_point_cloud(&cloud, &path, format).unwrap();
            let back = load_point_cloud(&path, format).unwrap();
            prop_assert_eq!(back, cloud);
        }
    }
}
