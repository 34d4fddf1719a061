//! Support filter plus the thresholded shortcut criterion:
//! `support_ood ≥ min_support ∧ g > λ1 ∧ iid_acc > λ2 ∧ Δ < λ3`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PatternStats;
use crate::miner::{CandidateSet, InferencePattern};

pub const DEFAULT_LAMBDA1: f64 = 50.0;
pub const DEFAULT_LAMBDA2: f64 = 70.0;
/// Percentage points; the same cut as -0.05 on a [0, 1] F1 scale.
pub const DEFAULT_LAMBDA3: f64 = -5.0;
pub const DEFAULT_MIN_SUPPORT_OOD: usize = 100;

pub const LAMBDA3_SCALE_NOTE: &str =
    "lambda3 is in F1 percentage points; -5.0 corresponds to -0.05 on a [0,1] F1 scale";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub min_support_ood: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            lambda3: DEFAULT_LAMBDA3,
            min_support_ood: DEFAULT_MIN_SUPPORT_OOD,
        }
    }
}

impl Thresholds {
    /// `lambda2` must beat chance (100 / label_count) and `lambda3` must be negative.
    pub fn validate(&self, label_count: usize) -> Result<()> {
        if label_count == 0 {
            return Err(Error::Config("label set is empty".into()));
        }
        if ![self.lambda1, self.lambda2, self.lambda3]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Config("thresholds must be finite".into()));
        }
        let chance = 100.0 / label_count as f64;
        if self.lambda2 <= chance {
            return Err(Error::Config(format!(
                "lambda2 = {} is not above chance level {chance:.2}",
                self.lambda2
            )));
        }
        if self.lambda3 >= 0.0 {
            return Err(Error::Config(format!(
                "lambda3 = {} must be negative",
                self.lambda3
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    MissingStats,
    LowSupport,
    UndefinedG,
    UndefinedIidAcc,
    UndefinedDelta,
    GeneralityNotAbove,
    IidAccNotAbove,
    DeltaNotBelow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortcutEntry {
    pub trigger: Vec<String>,
    pub label: usize,
    pub label_name: String,
    pub g: f64,
    pub iid_acc: f64,
    pub delta: f64,
    pub support_iid: usize,
    pub support_ood: usize,
    pub extraction_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub trigger: Vec<String>,
    pub label: usize,
    pub reasons: Vec<ExclusionReason>,
    pub support_ood: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub thresholds: Thresholds,
    pub lambda3_scale_note: String,
    pub label_names: Vec<String>,
    /// Seeds, corpus hashes, adapter identity and similar run metadata.
    pub run: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortcutReport {
    pub config: ReportConfig,
    pub baseline_f1_ood: f64,
    pub shortcuts: Vec<ShortcutEntry>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Debug, Default)]
pub struct ReportContext {
    pub label_names: Vec<String>,
    pub baseline_f1_ood: f64,
    pub run: BTreeMap<String, serde_json::Value>,
}

/// Reasons a stats row fails the criterion; empty when it passes.
pub fn exclusion_reasons(stats: &PatternStats, t: &Thresholds) -> Vec<ExclusionReason> {
    let mut reasons = Vec::new();
    if stats.support_ood < t.min_support_ood {
        reasons.push(ExclusionReason::LowSupport);
    }
    match stats.g {
        None => reasons.push(ExclusionReason::UndefinedG),
        Some(g) if g > t.lambda1 => {}
        Some(_) => reasons.push(ExclusionReason::GeneralityNotAbove),
    }
    match stats.iid_acc {
        None => reasons.push(ExclusionReason::UndefinedIidAcc),
        Some(a) if a > t.lambda2 => {}
        Some(_) => reasons.push(ExclusionReason::IidAccNotAbove),
    }
    match stats.delta {
        None => reasons.push(ExclusionReason::UndefinedDelta),
        Some(d) if d < t.lambda3 => {}
        Some(_) => reasons.push(ExclusionReason::DeltaNotBelow),
    }
    reasons
}

pub fn identify(
    candidates: &CandidateSet,
    stats: &[PatternStats],
    thresholds: &Thresholds,
    context: &ReportContext,
) -> Result<ShortcutReport> {
    thresholds.validate(context.label_names.len())?;
    let by_pattern: BTreeMap<&InferencePattern, &PatternStats> =
        stats.iter().map(|s| (&s.pattern, s)).collect();
    if let Some(s) = stats
        .iter()
        .find(|s| candidates.provenance(&s.pattern).is_none())
    {
        return Err(Error::Contract(format!(
            "stats row for {:?} -> {} has no matching candidate",
            s.pattern.trigger, s.pattern.label
        )));
    }

    let mut shortcuts = Vec::new();
    let mut diagnostics = Vec::new();
    for (pattern, prov) in candidates.iter() {
        let Some(s) = by_pattern.get(pattern) else {
            diagnostics.push(Diagnostic {
                trigger: pattern.trigger.clone(),
                label: pattern.label,
                reasons: vec![ExclusionReason::MissingStats],
                support_ood: None,
            });
            continue;
        };
        let reasons = exclusion_reasons(s, thresholds);
        if !reasons.is_empty() {
            diagnostics.push(Diagnostic {
                trigger: pattern.trigger.clone(),
                label: pattern.label,
                reasons,
                support_ood: Some(s.support_ood),
            });
            continue;
        }
        let label_name = context
            .label_names
            .get(pattern.label)
            .cloned()
            .ok_or_else(|| Error::Contract(format!("label {} has no name", pattern.label)))?;
        shortcuts.push(ShortcutEntry {
            trigger: pattern.trigger.clone(),
            label: pattern.label,
            label_name,
            g: s.g.expect("passing rows are defined"),
            iid_acc: s.iid_acc.expect("passing rows are defined"),
            delta: s.delta.expect("passing rows are defined"),
            support_iid: s.support_iid,
            support_ood: s.support_ood,
            extraction_count: prov.extraction_count,
        });
    }
    shortcuts.sort_by(|a, b| {
        b.g.total_cmp(&a.g)
            .then_with(|| a.trigger.cmp(&b.trigger))
            .then(a.label.cmp(&b.label))
    });

    Ok(ShortcutReport {
        config: ReportConfig {
            thresholds: *thresholds,
            lambda3_scale_note: LAMBDA3_SCALE_NOTE.into(),
            label_names: context.label_names.clone(),
            run: context.run.clone(),
        },
        baseline_f1_ood: context.baseline_f1_ood,
        shortcuts,
        diagnostics,
    })
}

fn escape_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

pub fn render_markdown(report: &ShortcutReport) -> String {
    let t = &report.config.thresholds;
    let mut out = String::new();
    let _ = writeln!(out, "# Shortcut report\n");
    let _ = writeln!(
        out,
        "OOD baseline F1: {:.1}. Thresholds: g > {}, iid_acc > {}, Δ < {}, |E_OOD| ≥ {}.\n",
        report.baseline_f1_ood, t.lambda1, t.lambda2, t.lambda3, t.min_support_ood
    );
    let _ = writeln!(
        out,
        "| pattern | g | iid_acc | Δ | \\|E_IID(w)\\| | \\|E_OOD(w)\\| | extractions |"
    );
    let _ = writeln!(out, "|---|---:|---:|---:|---:|---:|---:|");
    for s in &report.shortcuts {
        let trigger = s
            .trigger
            .iter()
            .map(|t| format!("\"{}\"", escape_cell(t)))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(
            out,
            "| [{}] → {} | {:.1} | {:.1} | {:.1} | {} | {} | {} |",
            trigger,
            escape_cell(&s.label_name),
            s.g,
            s.iid_acc,
            s.delta,
            s.support_iid,
            s.support_ood,
            s.extraction_count
        );
    }
    let _ = writeln!(
        out,
        "\n{} shortcut(s); {} candidate(s) excluded.",
        report.shortcuts.len(),
        report.diagnostics.len()
    );
    out
}
