//! The single-versus-ensemble improvement table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use slidens_core::metrics::improvement;
use slidens_core::scene::BandSetting;
use slidens_core::Result;

/// Test F1 of one ensemble size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizedScore {
    pub k: usize,
    pub f1: f64,
    /// `100 · (ens − single) / ens`; filled in by [`fill_improvements`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improvement_pct: Option<f64>,
}

/// One setting's row: the best single model and its ensembles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub setting: BandSetting,
    pub single_f1: f64,
    pub ensembles: Vec<SizedScore>,
}

pub fn fill_improvements(rows: &mut [ImprovementRow]) -> Result<()> {
    for row in rows {
        for e in &mut row.ensembles {
            e.improvement_pct = Some(improvement(row.single_f1, e.f1)?);
        }
    }
    Ok(())
}

/// Plain-text table: one row per setting, `ens(K)` columns with the gain
/// as a signed whole percentage.
pub fn format_table(rows: &[ImprovementRow]) -> String {
    let mut ks: Vec<usize> = rows.iter().flat_map(|r| r.ensembles.iter().map(|e| e.k)).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut out = format!("{:<8} {:>7}", "setting", "single");
    for k in &ks {
        let _ = write!(out, "  {:>14}", format!("ens({k})"));
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{:<8} {:>7.2}", row.setting.name(), row.single_f1);
        for k in &ks {
            let cell = match row.ensembles.iter().find(|e| e.k == *k) {
                Some(SizedScore { f1, improvement_pct: Some(p), .. }) => format!("{f1:.2} ({p:+.0}%)"),
                Some(SizedScore { f1, .. }) => format!("{f1:.2}"),
                None => "-".to_string(),
            };
            let _ = write!(out, "  {cell:>14}");
        }
        out.push('\n');
    }
    out
}
