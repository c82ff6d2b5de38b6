use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use ribgraph::cloud::{hausdorff, PartLabel, PointCloud};
use ribgraph::config::PipelineConfig;
use ribgraph::eval::{evaluate_fixtures, fixture_waypoints, EvalReport};
use ribgraph::geometry::Point3;
use ribgraph::nonrigid::Trajectory;
use ribgraph::pipeline::{run_coarse, run_graph, run_mapping, transfer_from_clouds, CoarseSummary};
use ribgraph::synthetic::{build_fixture, GroundTruth};
use ribgraph::Error;
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_cloud, read_json, read_text, unix_seconds, ArtifactDir, Metadata, StageClock};
use crate::CliError;

pub const CONFIG_ECHO: &str = "config.toml";
pub const REGISTER_REPORT: &str = "register.json";

fn label_counts(labels: &[PartLabel]) -> (usize, usize) {
    let sternum = labels.iter().filter(|l| **l == PartLabel::Sternum).count();
    let cartilage = labels.iter().filter(|l| l.is_cartilage()).count();
    (sternum, cartilage)
}

fn truth_rows(out: &mut String, cloud: &str, truth: &GroundTruth) {
    for (i, (label, id)) in truth.labels.iter().zip(&truth.correspondence_ids).enumerate() {
        writeln!(out, "{cloud},{i},{id},{}", label.code()).expect("string write");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudCounts {
    pub points: usize,
    pub sternum: usize,
    pub cartilage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub dir: PathBuf,
    pub seed: u64,
    pub ct: CloudCounts,
    pub us: CloudCounts,
    pub waypoints: usize,
}

impl fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "fixture seed {} written to {}", self.seed, self.dir.display())?;
        for (name, c) in [("ct.ply", &self.ct), ("us.ply", &self.us)] {
            writeln!(
                f,
                "  {name}: {} points ({} sternum, {} cartilage)",
                c.points, c.sternum, c.cartilage
            )?;
        }
        write!(f, "  waypoints.json: {} waypoints", self.waypoints)
    }
}

/// Write a synthetic template/target pair.
///
/// The clouds are written without labels; per-point labels and
/// correspondence ids go to `truth.csv`. `waypoints.json` holds the protocol
/// waypoints in template space and `waypoints_truth.json` their true target
/// positions.
pub fn cmd_generate(config: &PipelineConfig, out: &Path) -> Result<GenerateSummary, CliError> {
    config.validate()?;
    let fixture = build_fixture(&config.fixture)?;
    let (waypoints, truth) = fixture_waypoints(&fixture)?;
    let mut dir = ArtifactDir::create(out)?;
    dir.text(CONFIG_ECHO, &config.to_toml())?;
    dir.cloud("ct.ply", &PointCloud::new(fixture.ct.points.clone()))?;
    dir.cloud("us.ply", &PointCloud::new(fixture.us.points.clone()))?;
    let mut csv = String::from("cloud,index,correspondence_id,label\n");
    truth_rows(&mut csv, "ct", &fixture.ct_truth);
    truth_rows(&mut csv, "us", &fixture.us_truth);
    dir.text("truth.csv", &csv)?;
    dir.json("waypoints.json", &waypoints)?;
    let mut target = waypoints.clone();
    for (w, p) in target.waypoints.iter_mut().zip(&truth) {
        w.position = *p;
    }
    dir.json("waypoints_truth.json", &target)?;

    let counts = |cloud: &PointCloud, truth: &GroundTruth| {
        let (sternum, cartilage) = label_counts(&truth.labels);
        CloudCounts {
            points: cloud.len(),
            sternum,
            cartilage,
        }
    };
    Ok(GenerateSummary {
        dir: out.to_path_buf(),
        seed: config.fixture.seed,
        ct: counts(&fixture.ct, &fixture.ct_truth),
        us: counts(&fixture.us, &fixture.us_truth),
        waypoints: waypoints.len(),
    })
}

/// Contents of `register.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterReport {
    pub ct_path: PathBuf,
    pub us_path: PathBuf,
    pub ct_points: usize,
    pub us_points: usize,
    pub nodes: usize,
    /// Hausdorff distance between the mapped template and the target, mm.
    pub hausdorff: f64,
    /// Hausdorff distance after the coarse overlay alone, mm.
    pub coarse_hausdorff: f64,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct RegisterSummary {
    pub dir: PathBuf,
    pub report: RegisterReport,
    pub artifacts: Vec<PathBuf>,
}

impl fmt::Display for RegisterSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "registration written to {}", self.dir.display())?;
        writeln!(f, "  coarse Hausdorff distance: {:.3} mm", self.report.coarse_hausdorff)?;
        write!(f, "  Hausdorff distance: {:.3} mm", self.report.hausdorff)
    }
}

/// Register `ct_path` onto `us_path`, writing each stage's artifacts as soon
/// as that stage finishes.
pub fn cmd_register(
    ct_path: &Path,
    us_path: &Path,
    config: &PipelineConfig,
    out: &Path,
) -> Result<RegisterSummary, CliError> {
    config.validate()?;
    let ct = read_cloud(ct_path)?;
    let us = read_cloud(us_path)?;
    let started = unix_seconds();
    let mut clock = StageClock::default();
    let mut dir = ArtifactDir::create(out)?;
    dir.text(CONFIG_ECHO, &config.to_toml())?;

    let coarse = clock.time("coarse", || run_coarse(&ct, &us, &config.coarse))?;
    let t = coarse.transform();
    let ct_aligned = ct.transformed(&t);
    dir.json("coarse.json", &coarse.summary())?;
    dir.cloud("ct_aligned.ply", &ct_aligned)?;

    let graph = clock.time("graph", || {
        run_graph(&ct, &coarse.template, &t, &ct_aligned, &us, &config.layout, &config.som)
    })?;
    dir.text("template.json", &graph.template.to_json()?)?;
    dir.text("g_ct.json", &graph.g_ct.to_json()?)?;
    dir.text("g_us.json", &graph.g_us.to_json()?)?;

    let (transforms, mapped) = clock.time("mapping", || run_mapping(&graph, &ct_aligned, config))?;
    dir.json("transforms.json", &transforms)?;
    dir.cloud("mapped.ply", &mapped)?;

    let (coarse_hd, hd) = clock.time("hausdorff", || -> Result<(f64, f64), Error> {
        Ok((hausdorff(&ct_aligned, &us)?, hausdorff(&mapped, &us)?))
    })?;
    let report = RegisterReport {
        ct_path: ct_path.to_path_buf(),
        us_path: us_path.to_path_buf(),
        ct_points: ct.len(),
        us_points: us.len(),
        nodes: graph.g_ct.len(),
        hausdorff: hd,
        coarse_hausdorff: coarse_hd,
        config: config.clone(),
    };
    dir.json(REGISTER_REPORT, &report)?;
    dir.json(
        "metadata.json",
        &Metadata {
            command: "register",
            version: env!("CARGO_PKG_VERSION"),
            started_unix_s: started,
            finished_unix_s: unix_seconds(),
            runtime_ms: &clock.stages,
        },
    )?;
    Ok(RegisterSummary {
        dir: out.to_path_buf(),
        report,
        artifacts: dir.written().to_vec(),
    })
}

/// One row of `transferred.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub index: usize,
    pub side: ribgraph::cloud::Side,
    pub intercostal_space: u8,
    pub order: usize,
    /// Target-space position; absent when the transfer failed.
    pub position: Option<Point3>,
    /// Template points inside the fitting sphere.
    pub support: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TransferSummary {
    pub dir: PathBuf,
    pub records: Vec<TransferRecord>,
}

impl TransferSummary {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

impl fmt::Display for TransferSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} of {} waypoints transferred, written to {}",
            self.records.len() - self.failed(),
            self.records.len(),
            self.dir.display()
        )?;
        for r in self.records.iter().filter(|r| r.error.is_some()) {
            write!(
                f,
                "\n  waypoint {}: {}",
                r.index,
                r.error.as_deref().unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

fn records_csv(records: &[TransferRecord]) -> String {
    let mut out = String::from("index,side,intercostal_space,order,x,y,z,support,status\n");
    for r in records {
        let (x, y, z) = r.position.map_or((String::new(), String::new(), String::new()), |p| {
            (p.x.to_string(), p.y.to_string(), p.z.to_string())
        });
        let status = if r.error.is_some() { "failed" } else { "ok" };
        writeln!(
            out,
            "{},{},{},{},{x},{y},{z},{},{status}",
            r.index, r.side, r.intercostal_space, r.order, r.support
        )
        .expect("string write");
    }
    out
}

/// Carry the waypoints in `waypoints_path` (a trajectory JSON in template
/// space) through the registration stored in `registration_dir`.
pub fn cmd_transfer(registration_dir: &Path, waypoints_path: &Path, out: &Path) -> Result<TransferSummary, CliError> {
    let text = read_text(waypoints_path)?;
    if text.trim().is_empty() {
        return Err(CliError::input(format!(
            "{}: waypoint file is empty",
            waypoints_path.display()
        )));
    }
    let trajectory =
        Trajectory::from_json(&text).map_err(|e| CliError::input(format!("{}: {e}", waypoints_path.display())))?;
    if trajectory.is_empty() {
        return Err(CliError::input(format!("{}: no waypoints", waypoints_path.display())));
    }
    let report: RegisterReport = read_json(&registration_dir.join(REGISTER_REPORT))?;
    report.config.validate()?;
    let coarse: CoarseSummary = read_json(&registration_dir.join("coarse.json"))?;
    let ct_aligned = read_cloud(&registration_dir.join("ct_aligned.ply"))?;
    let mapped = read_cloud(&registration_dir.join("mapped.ply"))?;
    if ct_aligned.len() != mapped.len() {
        return Err(CliError::input(format!(
            "{}: aligned and mapped clouds differ in size ({} vs {})",
            registration_dir.display(),
            ct_aligned.len(),
            mapped.len()
        )));
    }

    let results = transfer_from_clouds(
        &coarse.transform,
        &trajectory,
        &ct_aligned,
        &mapped,
        report.config.transfer.sphere_radius,
    );
    let records: Vec<TransferRecord> = trajectory
        .waypoints
        .iter()
        .zip(results)
        .enumerate()
        .map(|(index, (w, r))| {
            let base = TransferRecord {
                index,
                side: w.side,
                intercostal_space: w.intercostal_space,
                order: w.index,
                position: None,
                support: 0,
                error: None,
            };
            match r {
                Ok(t) => TransferRecord {
                    position: Some(t.waypoint.position),
                    support: t.support,
                    ..base
                },
                Err(e) => TransferRecord {
                    support: match e.root() {
                        Error::InsufficientSupport { count, .. } => *count,
                        _ => 0,
                    },
                    error: Some(e.root().to_string()),
                    ..base
                },
            }
        })
        .collect();

    let mut dir = ArtifactDir::create(out)?;
    dir.json("transferred.json", &records)?;
    dir.text("transferred.csv", &records_csv(&records))?;
    Ok(TransferSummary {
        dir: out.to_path_buf(),
        records,
    })
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub dir: PathBuf,
    pub report: EvalReport,
    pub table: String,
    /// Method failures recorded across all subjects.
    pub failures: usize,
}

/// Evaluate every configured method over the configured seeds.
///
/// Writes `report.json` (no timings), `report.txt` (the table) and
/// `metadata.json` (timings and wall-clock times).
pub fn cmd_eval(config: &PipelineConfig, out: &Path) -> Result<EvalSummary, CliError> {
    let started = unix_seconds();
    let report = evaluate_fixtures(config)?;
    let table = report.to_table();
    let mut dir = ArtifactDir::create(out)?;
    dir.text(CONFIG_ECHO, &config.to_toml())?;
    dir.text("report.json", &(report.without_timings().to_json()? + "\n"))?;
    dir.text("report.txt", &table)?;
    dir.json(
        "metadata.json",
        &Metadata {
            command: "eval",
            version: env!("CARGO_PKG_VERSION"),
            started_unix_s: started,
            finished_unix_s: unix_seconds(),
            runtime_ms: report.timings(),
        },
    )?;
    let failures = report
        .subjects
        .iter()
        .flat_map(|s| &s.methods)
        .map(|m| m.failures.len())
        .sum();
    Ok(EvalSummary {
        dir: out.to_path_buf(),
        report,
        table,
        failures,
    })
}
