//! Binary multi-view model files.
//!
//! Layout, little-endian: magic `ACFM`, `u32` format version, `u64` payload
//! length, payload, `u32` CRC-32 of the payload. The payload is a `u32`
//! length-prefixed JSON header (configs, view layout, per-view metadata)
//! followed by the trees of every trained view. Mirrored views store only
//! the index of their source and are re-derived on load.

use std::path::Path;

use acf_core::boosting::{DepthTwoTree, SoftCascadeModel, TreeNode, WeightedTree};
use acf_core::channels::ChannelDescriptor;
use acf_core::detector::{MultiViewModel, ViewSource};
use acf_core::postprocess::{AdjustmentParams, FusionConfig};
use acf_core::{ChannelConfig, PyramidConfig};
use serde::{Deserialize, Serialize};

use crate::error::{ModelFormatError, ToolError, ToolResult};

pub const MAGIC: [u8; 4] = *b"ACFM";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ViewEntry {
    Trained {
        window_size: usize,
        score_range: (f64, f64),
        descriptors: Vec<ChannelDescriptor>,
        num_trees: usize,
    },
    Mirror {
        of: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct Header {
    channel_config: ChannelConfig,
    pyramid: PyramidConfig,
    fusion: FusionConfig,
    stride: usize,
    adjustments: Vec<AdjustmentParams>,
    views: Vec<ViewEntry>,
}

const TREE_BYTES: usize = 3 * 8 + 4 * 4 + 8 + 8;

pub fn encode(model: &MultiViewModel) -> Vec<u8> {
    let views = model
        .sources()
        .iter()
        .map(|s| match s {
            ViewSource::Trained(m) => ViewEntry::Trained {
                window_size: m.window_size,
                score_range: m.score_range,
                descriptors: m.descriptors.clone(),
                num_trees: m.trees.len(),
            },
            ViewSource::Mirror { of } => ViewEntry::Mirror { of: *of },
        })
        .collect();
    let header = Header {
        channel_config: model.channel_config().clone(),
        pyramid: model.pyramid.clone(),
        fusion: model.fusion.clone(),
        stride: model.stride,
        adjustments: model.adjustments.clone(),
        views,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut payload = Vec::new();
    payload.extend_from_slice(&(json.len() as u32).to_le_bytes());
    payload.extend_from_slice(&json);
    for s in model.sources() {
        if let ViewSource::Trained(m) = s {
            for (wt, th) in m.trees.iter().zip(&m.stage_thresholds) {
                for n in &wt.tree.nodes {
                    payload.extend_from_slice(&n.feature.to_le_bytes());
                    payload.extend_from_slice(&n.threshold.to_le_bytes());
                }
                for l in &wt.tree.leaves {
                    payload.extend_from_slice(&l.to_le_bytes());
                }
                payload.extend_from_slice(&wt.alpha.to_le_bytes());
                payload.extend_from_slice(&th.to_le_bytes());
            }
        }
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelFormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelFormatError::Malformed("payload ends early".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, ModelFormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelFormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<MultiViewModel, ModelFormatError> {
    let truncated = |needed: usize| ModelFormatError::Truncated {
        needed: needed as u64,
        found: bytes.len() as u64,
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER_LEN));
    }
    if bytes[..4] != MAGIC {
        return Err(ModelFormatError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ModelFormatError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let needed = (HEADER_LEN as u64).saturating_add(len).saturating_add(4);
    if (bytes.len() as u64) < needed {
        return Err(ModelFormatError::Truncated {
            needed,
            found: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) > needed {
        return Err(ModelFormatError::Malformed("trailing bytes after checksum".into()));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + len as usize];
    let stored = u32::from_le_bytes(bytes[HEADER_LEN + len as usize..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(ModelFormatError::Checksum { stored, computed });
    }

    let mut r = Reader { buf: payload, pos: 0 };
    let json_len = r.u32()? as usize;
    let header: Header =
        serde_json::from_slice(r.take(json_len)?).map_err(|e| ModelFormatError::Malformed(e.to_string()))?;
    let mut sources = Vec::with_capacity(header.views.len());
    for v in header.views {
        match v {
            ViewEntry::Mirror { of } => sources.push(ViewSource::Mirror { of }),
            ViewEntry::Trained {
                window_size,
                score_range,
                descriptors,
                num_trees,
            } => {
                if num_trees.saturating_mul(TREE_BYTES) > payload.len() {
                    return Err(ModelFormatError::Malformed(format!("implausible tree count {num_trees}")));
                }
                let mut trees = Vec::with_capacity(num_trees);
                let mut thresholds = Vec::with_capacity(num_trees);
                for _ in 0..num_trees {
                    let mut nodes = [TreeNode {
                        feature: 0,
                        threshold: 0.0,
                    }; 3];
                    for n in &mut nodes {
                        n.feature = r.u32()?;
                        n.threshold = r.f32()?;
                    }
                    let mut leaves = [0.0f32; 4];
                    for l in &mut leaves {
                        *l = r.f32()?;
                    }
                    let alpha = r.f64()?;
                    thresholds.push(r.f64()?);
                    trees.push(WeightedTree {
                        tree: DepthTwoTree { nodes, leaves },
                        alpha,
                    });
                }
                sources.push(ViewSource::Trained(SoftCascadeModel {
                    trees,
                    stage_thresholds: thresholds,
                    window_size,
                    channel_config: header.channel_config.clone(),
                    descriptors,
                    score_range,
                    view_id: sources.len() as u32 + 1,
                }));
            }
        }
    }
    if r.pos != payload.len() {
        return Err(ModelFormatError::Malformed("unused payload bytes".into()));
    }
    MultiViewModel::new(sources, header.adjustments, header.fusion, header.pyramid, header.stride)
        .map_err(|e| ModelFormatError::Malformed(e.to_string()))
}

pub fn save_model(model: &MultiViewModel, path: &Path) -> ToolResult<()> {
    std::fs::write(path, encode(model)).map_err(|e| ToolError::io(path, e))
}

pub fn load_model(path: &Path) -> ToolResult<MultiViewModel> {
    let bytes = std::fs::read(path).map_err(|e| ToolError::io(path, e))?;
    decode(&bytes).map_err(|source| ToolError::Model {
        path: path.into(),
        source,
    })
}
