use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::EncodedDataset;
use crate::drawers::{DrawerMode, DrawerSet};
use crate::error::{Error, Result};
use crate::trainer::DraweredModel;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadRow {
    pub row: usize,
    /// Sigmoid outputs per boundary (nested) or drawer probabilities
    /// (disjoint).
    pub outputs: Vec<f64>,
    /// Drawer containing the row's target.
    pub true_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadAnalysis {
    pub mode: DrawerMode,
    pub rows: Vec<HeadRow>,
    /// Mean of `max(0, s[j+1] - s[j])` over all rows and adjacent pairs.
    /// Zero for outputs that never increase.
    pub mean_adjacent_violation: f64,
}

/// Runs the auxiliary head on `rows` and pairs its outputs with the drawer of
/// each row's target.
pub fn analyze_head(
    model: &DraweredModel,
    data: &EncodedDataset,
    rows: &[usize],
    drawers: &DrawerSet,
) -> Result<HeadAnalysis> {
    let head = model
        .head_s()
        .ok_or_else(|| Error::Config("model was trained without an auxiliary head".into()))?;
    if head.output_dim() != Some(drawers.head_width()) {
        return Err(Error::Shape(format!(
            "auxiliary head has {:?} outputs, drawers need {}",
            head.output_dim(),
            drawers.head_width()
        )));
    }
    let mut out = Vec::with_capacity(rows.len());
    let (mut violation, mut pairs) = (0.0, 0usize);
    for chunk in rows.chunks(CHUNK) {
        let probs = model.aux_probabilities(&data.batch(chunk))?;
        for (r, &row) in chunk.iter().enumerate() {
            let outputs = probs.row(r).to_vec();
            for w in outputs.windows(2) {
                violation += (w[1] - w[0]).max(0.0);
                pairs += 1;
            }
            out.push(HeadRow {
                row,
                outputs,
                true_index: drawers.assign_disjoint(data.targets()[row]),
            });
        }
    }
    Ok(HeadAnalysis {
        mode: model.mode(),
        rows: out,
        mean_adjacent_violation: if pairs == 0 {
            0.0
        } else {
            violation / pairs as f64
        },
    })
}

impl HeadAnalysis {
    /// Plot-ready CSV: `row,true_index,s0,s1,...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let width = self.rows.first().map_or(0, |r| r.outputs.len());
        let mut header = vec!["row".to_string(), "true_index".to_string()];
        header.extend((0..width).map(|j| format!("s{j}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.row.to_string(), r.true_index.to_string()];
            rec.extend(r.outputs.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}
