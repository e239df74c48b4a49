//! Line-delimited JSON detection and annotation files.
//!
//! Detection record: `{"image_id", "x", "y", "w", "h", "score", "view_id"}`
//! plus optional `scale` and `votes`. Annotation records are boxes
//! `{"image_id", "x", "y", "w", "h", "ignore"?, "yaw"?}`, ellipses
//! `{"image_id", "ellipse": [major, minor, angle, cx, cy], "ignore"?}`
//! converted to their bounding rectangle at load, or a single
//! `{"style": "..."}` record naming the annotation style.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use acf_core::eval::{ellipse_to_bbox, Annotation, AnnotationSet};
use acf_core::{BBox, Detection};
use serde::{Deserialize, Serialize};

use crate::error::{ToolError, ToolResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub view_id: u32,
    #[serde(default)]
    pub scale: f64,
    #[serde(default)]
    pub votes: u32,
}

impl DetectionRecord {
    pub fn new(image_id: &str, d: &Detection) -> Self {
        DetectionRecord {
            image_id: image_id.to_string(),
            x: d.x,
            y: d.y,
            w: d.w,
            h: d.h,
            score: d.score,
            view_id: d.view_id,
            scale: d.scale,
            votes: d.votes,
        }
    }

    pub fn detection(&self) -> Detection {
        Detection {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
            score: self.score,
            view_id: self.view_id,
            scale: self.scale,
            votes: self.votes,
        }
    }
}

pub type DetectionMap = BTreeMap<String, Vec<Detection>>;

pub fn write_detections(out: &mut impl Write, dets: &DetectionMap) -> std::io::Result<()> {
    for (id, list) in dets {
        for d in list {
            serde_json::to_writer(&mut *out, &DetectionRecord::new(id, d))?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn save_detections(path: &Path, dets: &DetectionMap) -> ToolResult<()> {
    let file = std::fs::File::create(path).map_err(|e| ToolError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_detections(&mut w, dets)
        .and_then(|_| w.flush())
        .map_err(|e| ToolError::io(path, e))
}

fn read_lines(path: &Path) -> ToolResult<Vec<(usize, String)>> {
    let file = std::fs::File::open(path).map_err(|e| ToolError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ToolError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn parse_detections(text: &str) -> ToolResult<DetectionMap> {
    let mut map = DetectionMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: DetectionRecord = serde_json::from_str(line)
            .map_err(|e| ToolError::Validation(format!("detection line {}: {e}", i + 1)))?;
        if !(r.w > 0.0 && r.h > 0.0 && r.score.is_finite()) {
            return Err(ToolError::Validation(format!("detection line {}: invalid box or score", i + 1)));
        }
        map.entry(r.image_id.clone()).or_default().push(r.detection());
    }
    Ok(map)
}

pub fn load_detections(path: &Path) -> ToolResult<DetectionMap> {
    let text = std::fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
    parse_detections(&text).map_err(|e| match e {
        ToolError::Validation(m) => ToolError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum AnnotationRecord {
    Style {
        style: String,
    },
    Ellipse {
        image_id: String,
        ellipse: [f64; 5],
        #[serde(default)]
        ignore: bool,
        #[serde(default)]
        yaw: Option<u32>,
    },
    Box {
        image_id: String,
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        #[serde(default)]
        ignore: bool,
        #[serde(default)]
        yaw: Option<u32>,
    },
}

pub fn parse_annotations(text: &str) -> ToolResult<AnnotationSet> {
    let mut set = AnnotationSet::new("unspecified");
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let err = |m: String| ToolError::Validation(format!("annotation line {}: {m}", i + 1));
        let rec: AnnotationRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let (id, ann) = match rec {
            AnnotationRecord::Style { style } => {
                set.style = style;
                continue;
            }
            AnnotationRecord::Ellipse {
                image_id,
                ellipse: [a, b, t, cx, cy],
                ignore,
                yaw,
            } => (
                image_id,
                Annotation {
                    bbox: ellipse_to_bbox(a, b, t, cx, cy),
                    ignore,
                    yaw,
                },
            ),
            AnnotationRecord::Box {
                image_id,
                x,
                y,
                w,
                h,
                ignore,
                yaw,
            } => (
                image_id,
                Annotation {
                    bbox: BBox::new(x, y, w, h),
                    ignore,
                    yaw,
                },
            ),
        };
        if !ann.bbox.is_valid() {
            return Err(err(format!("box {:?} has non-positive size", ann.bbox)));
        }
        set.push(id, ann);
    }
    Ok(set)
}

pub fn load_annotations(path: &Path) -> ToolResult<AnnotationSet> {
    let mut lines = String::new();
    for (_, l) in read_lines(path)? {
        lines.push_str(&l);
        lines.push('\n');
    }
    parse_annotations(&lines).map_err(|e| match e {
        ToolError::Validation(m) => ToolError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_annotations(out: &mut impl Write, set: &AnnotationSet) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, &AnnotationRecord::Style { style: set.style.clone() })?;
    out.write_all(b"\n")?;
    for (id, anns) in &set.images {
        for a in anns {
            let rec = AnnotationRecord::Box {
                image_id: id.clone(),
                x: a.bbox.x,
                y: a.bbox.y,
                w: a.bbox.w,
                h: a.bbox.h,
                ignore: a.ignore,
                yaw: a.yaw,
            };
            serde_json::to_writer(&mut *out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn save_annotations(path: &Path, set: &AnnotationSet) -> ToolResult<()> {
    let file = std::fs::File::create(path).map_err(|e| ToolError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_annotations(&mut w, set)
        .and_then(|_| w.flush())
        .map_err(|e| ToolError::io(path, e))
}

/// Pretty JSON file, used for evaluation, ablation and bench reports.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> ToolResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ToolError::Validation(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| ToolError::io(path, e))
}
