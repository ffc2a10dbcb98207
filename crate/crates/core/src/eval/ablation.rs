use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::JointAveraging;
use crate::error::{invalid, Result};
use crate::nn::{Architecture, Flags, LiftingNetwork};
use crate::scalar::Scalar;
use crate::train::{train, TrainingConfig, TrainingData};

/// Provenance written at the top of every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub seed: u64,
    pub averaging: JointAveraging,
}

impl ReportMeta {
    /// `# poselift <kind> config=<hash> seed=<seed> mpjpe_joints=<convention>`
    pub fn header_line(&self, kind: &str) -> String {
        format!(
            "# poselift {kind} config={} seed={} mpjpe_joints={}\n",
            self.config_hash,
            self.seed,
            self.averaging.as_str()
        )
    }

    /// `<kind>-<hash>-seed<seed>`
    pub fn file_stem(&self, kind: &str) -> String {
        format!("{kind}-{}-seed{}", self.config_hash, self.seed)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub flags: Flags,
    pub initial_val_mpjpe: Option<f64>,
    pub val_mpjpe: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub meta: ReportMeta,
    pub blocks: usize,
    pub width: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, flags: Flags) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.flags == flags)
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.meta.header_line("ablation");
        writeln!(s, "# blocks={} width={}", self.blocks, self.width).unwrap();
        s.push_str("max_norm,batch_norm,residual,val_mpjpe,diverged\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{}",
                r.flags.max_norm as u8,
                r.flags.batch_norm as u8,
                r.flags.residual as u8,
                fmt_opt(r.val_mpjpe),
                r.diverged as u8
            )
            .unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = self.meta.header_line("ablation");
        writeln!(s, "# blocks={} width={}", self.blocks, self.width).unwrap();
        writeln!(
            s,
            "{:<9} {:<10} {:<8} {:>12}",
            "max-norm", "batch-norm", "residual", "MPJPE (mm)"
        )
        .unwrap();
        for r in &self.rows {
            let score = if r.diverged {
                "diverged".to_string()
            } else {
                r.val_mpjpe.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
            };
            writeln!(
                s,
                "{:<9} {:<10} {:<8} {:>12}",
                yes_no(r.flags.max_norm),
                yes_no(r.flags.batch_norm),
                yes_no(r.flags.residual),
                score
            )
            .unwrap();
        }
        s
    }
}

/// Trains one network per toggle combination, all from the same seed and
/// data order, and records each final validation MPJPE. Rows come out in
/// [`Flags::grid`] order.
pub fn run_ablation<T: Scalar>(
    data: &TrainingData<T>,
    base: Architecture,
    config: &TrainingConfig,
    config_hash: &str,
) -> Result<AblationReport> {
    if data.val_poses.is_empty() {
        return Err(invalid("ablation needs a non-empty validation split"));
    }
    let rows = Flags::grid()
        .into_par_iter()
        .map(|flags| {
            let arch = Architecture { flags, ..base };
            let mut net = LiftingNetwork::<T>::init(data.spec.input_dim(), data.spec.output_dim(), arch, config.seed)?;
            let log = train(&mut net, data, config)?;
            let diverged = log.diverged().is_some();
            Ok(AblationRow {
                flags,
                initial_val_mpjpe: log.initial_val_mpjpe,
                val_mpjpe: if diverged {
                    None
                } else {
                    log.final_val_mpjpe().or(log.initial_val_mpjpe)
                },
                diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport {
        meta: ReportMeta {
            config_hash: config_hash.into(),
            seed: config.seed,
            averaging: data.averaging,
        },
        blocks: base.blocks,
        width: base.width,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub blocks: usize,
    pub width: usize,
    pub val_mpjpe: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub meta: ReportMeta,
    pub flags: Flags,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = self.meta.header_line("sweep");
        s.push_str("blocks,width,val_mpjpe,diverged\n");
        for c in &self.cells {
            writeln!(
                s,
                "{},{},{},{}",
                c.blocks,
                c.width,
                fmt_opt(c.val_mpjpe),
                c.diverged as u8
            )
            .unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = self.meta.header_line("sweep");
        writeln!(s, "{:>6} {:>6} {:>12}", "blocks", "width", "MPJPE (mm)").unwrap();
        for c in &self.cells {
            let score = if c.diverged {
                "diverged".to_string()
            } else {
                c.val_mpjpe.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
            };
            writeln!(s, "{:>6} {:>6} {:>12}", c.blocks, c.width, score).unwrap();
        }
        s
    }
}

/// One training run per `(blocks, width)` cell, row-major with block count
/// as the outer index.
pub fn capacity_sweep<T: Scalar>(
    data: &TrainingData<T>,
    base: Architecture,
    config: &TrainingConfig,
    blocks: &[usize],
    widths: &[usize],
    config_hash: &str,
) -> Result<SweepReport> {
    if blocks.is_empty() || widths.is_empty() {
        return Err(invalid("sweep needs at least one block count and one width"));
    }
    let grid: Vec<(usize, usize)> = blocks
        .iter()
        .flat_map(|&b| widths.iter().map(move |&w| (b, w)))
        .collect();
    let cells = grid
        .into_par_iter()
        .map(|(b, w)| {
            let arch = Architecture {
                blocks: b,
                width: w,
                ..base
            };
            let mut net = LiftingNetwork::<T>::init(data.spec.input_dim(), data.spec.output_dim(), arch, config.seed)?;
            let log = train(&mut net, data, config)?;
            let diverged = log.diverged().is_some();
            Ok(SweepCell {
                blocks: b,
                width: w,
                val_mpjpe: if diverged {
                    None
                } else {
                    log.final_val_mpjpe().or(log.initial_val_mpjpe)
                },
                diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        meta: ReportMeta {
            config_hash: config_hash.into(),
            seed: config.seed,
            averaging: data.averaging,
        },
        flags: base.flags,
        cells,
    })
}
