/*
  Copyright 2026 The trimanual Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/
//! On-disk formats: joint lists, raw depth, binary PGM masks and CSV tables.

use serde::{Deserialize, Serialize};
use trimanual_core::bimanual::HarvestPlan;
use trimanual_core::perception::{DepthFrame, DetectionSet, FruitEstimate, Intrinsics, Mask};
use trimanual_core::sim::{TrajSample, TrialRecord};
use trimanual_core::Pose;

use crate::CliError;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

/// Comma- or whitespace-separated joint angles.
pub fn parse_q(s: &str) -> Result<Vec<f64>, CliError> {
    let q: Result<Vec<f64>, _> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>())
        .collect();
    let q = q.map_err(|e| invalid(format!("bad joint value in `{s}`: {e}")))?;
    if q.is_empty() {
        return Err(invalid("empty joint list"));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite joint value in `{s}`")));
    }
    Ok(q)
}

/// One joint vector per non-empty line; `#` starts a comment.
pub fn parse_q_rows(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| invalid(format!("batch row {}: {e}", i + 1)))?;
        let line = rec.iter().collect::<Vec<_>>().join(",");
        if line.trim().is_empty() {
            continue;
        }
        rows.push(parse_q(&line).map_err(|e| invalid(format!("batch row {}: {e}", i + 1)))?);
    }
    Ok(rows)
}

pub fn encode_depth_raw(data: &[u16]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_depth_raw(bytes: &[u8], intr: &Intrinsics) -> Result<Vec<u16>, CliError> {
    if bytes.len() != 2 * intr.len() {
        return Err(invalid(format!(
            "depth file has {} bytes, expected {} for {}x{} u16",
            bytes.len(),
            2 * intr.len(),
            intr.width,
            intr.height
        )));
    }
    Ok(bytes.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect())
}

/// Binary (P5) PGM, 255 for set pixels.
pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.data.iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Reads an 8-bit P5 PGM; any non-zero pixel is part of the mask.
pub fn decode_pgm(bytes: &[u8]) -> Result<Mask, CliError> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(invalid("truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| invalid("bad PGM header"))?);
    }
    if fields[0] != "P5" {
        return Err(invalid(format!("expected a P5 PGM, found `{}`", fields[0])));
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| invalid(format!("bad PGM header field `{s}`")));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(invalid("only 8-bit PGM masks are supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = (w as usize) * (h as usize);
    if bytes.len() < pos + n {
        return Err(invalid(format!("PGM raster has {} bytes, expected {n}", bytes.len().saturating_sub(pos))));
    }
    Ok(Mask {
        width: w,
        height: h,
        data: bytes[pos..pos + n].iter().map(|&b| b != 0).collect(),
    })
}

/// Sidecar describing a raw depth file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMeta {
    pub depth: Intrinsics,
    /// Color camera; the depth camera when absent.
    #[serde(default)]
    pub color: Option<Intrinsics>,
    #[serde(default)]
    pub extrinsics_to_color: Pose,
}

pub fn depth_frame(meta: &DepthMeta, raw: &[u8]) -> Result<DepthFrame, CliError> {
    let data = decode_depth_raw(raw, &meta.depth)?;
    DepthFrame::new(data, meta.depth, meta.extrinsics_to_color).map_err(|e| invalid(e.to_string()))
}

pub fn detections(masks: Vec<Mask>) -> DetectionSet {
    DetectionSet { masks }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn csv_table(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

fn names(prefix: &str, fields: &[&str]) -> Vec<String> {
    fields.iter().map(|f| format!("{prefix}_{f}")).collect()
}

const POSE_FIELDS: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];

fn pose_cells(p: &Pose) -> Vec<String> {
    let (r, pi, y) = p.rpy();
    [p.position.x, p.position.y, p.position.z, r, pi, y].into_iter().map(num).collect()
}

/// Harvest sequence, one row per waypoint: `t, chain, phase, ee, q0..`.
/// Chains with fewer joints leave the trailing cells empty.
pub fn sequence_csv(plan: &HarvestPlan) -> Result<Vec<u8>, CliError> {
    let dof = plan.segments.iter().flat_map(|s| s.waypoints.iter().map(|w| w.q.0.len())).max().unwrap_or(0);
    let mut header: Vec<String> = ["t", "chain", "phase", "ee"].iter().map(|s| s.to_string()).collect();
    header.extend((0..dof).map(|i| format!("q{i}")));
    let mut rows = Vec::new();
    for s in &plan.segments {
        for w in &s.waypoints {
            let mut r = vec![num(w.t), s.chain.clone(), s.phase.as_str().to_string(), num(w.ee)];
            r.extend((0..dof).map(|i| w.q.0.get(i).map(|v| num(*v)).unwrap_or_default()));
            rows.push(r);
        }
    }
    csv_table(&header, &rows)
}

/// End-effector and target trajectories: `t` then x, y, z, roll, pitch, yaw
/// for the left tool, the right tool and the fruit.
pub fn pose_trajectory_csv(samples: &[TrajSample]) -> Result<Vec<u8>, CliError> {
    let mut header = vec!["t".to_string()];
    for p in ["left", "right", "target"] {
        header.extend(names(p, &POSE_FIELDS));
    }
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            let mut r = vec![num(s.t)];
            r.extend(pose_cells(&s.left));
            r.extend(pose_cells(&s.right));
            r.extend(pose_cells(&s.fruit));
            r
        })
        .collect();
    csv_table(&header, &rows)
}

/// Joint trajectories: `t, left_q0.., right_q0..`.
pub fn joint_trajectory_csv(samples: &[TrajSample]) -> Result<Vec<u8>, CliError> {
    let (nl, nr) = samples.first().map_or((0, 0), |s| (s.q_left.0.len(), s.q_right.0.len()));
    let mut header = vec!["t".to_string()];
    header.extend((0..nl).map(|i| format!("left_q{i}")));
    header.extend((0..nr).map(|i| format!("right_q{i}")));
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            let mut r = vec![num(s.t)];
            r.extend(s.q_left.0.iter().chain(s.q_right.0.iter()).map(|v| num(*v)));
            r
        })
        .collect();
    csv_table(&header, &rows)
}

pub fn trials_csv(records: &[TrialRecord]) -> Result<Vec<u8>, CliError> {
    let header: Vec<String> = [
        "trial_id",
        "seed",
        "environment",
        "success",
        "failure_cause",
        "wall_time",
        "attempts",
        "interventions",
        "phases",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let phases: Vec<String> = r
                .phases
                .iter()
                .map(|p| format!("{}:{}", p.phase.as_str(), if p.ok { "ok" } else { "fail" }))
                .collect();
            vec![
                r.trial_id.to_string(),
                r.seed.to_string(),
                r.environment.as_str().to_string(),
                r.success.to_string(),
                r.failure_cause.map(|c| c.as_str()).unwrap_or("").to_string(),
                num(r.wall_time),
                r.attempts.to_string(),
                r.interventions.to_string(),
                phases.join(";"),
            ]
        })
        .collect();
    csv_table(&header, &rows)
}

pub fn estimates_csv(est: &[FruitEstimate]) -> Result<Vec<u8>, CliError> {
    let mut header: Vec<String> = ["index", "cx", "cy", "cz", "sx", "sy", "sz", "roll", "pitch", "yaw", "ex", "ey", "ez"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(["point_count", "mean_range", "degenerate"].iter().map(|s| s.to_string()));
    let rows: Vec<Vec<String>> = est
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let s = e.sphere_center();
            let (r, p, y) = e.pose().rpy();
            let mut row = vec![i.to_string()];
            row.extend(
                [e.centroid.x, e.centroid.y, e.centroid.z, s.x, s.y, s.z, r, p, y, e.extent.x, e.extent.y, e.extent.z]
                    .into_iter()
                    .map(num),
            );
            row.extend([e.point_count.to_string(), num(e.mean_range), e.degenerate.to_string()]);
            row
        })
        .collect();
    csv_table(&header, &rows)
}
