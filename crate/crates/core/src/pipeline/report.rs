//! Report files: a JSON document and a text table.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EvalReport, Exemplar, Mode};
use crate::corpus::PersonaType;
use crate::error::{Error, Result};

/// Published full-corpus scores of the reference system, shown beside the
/// measured numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineReference {
    pub discovery: [f64; 3],
    /// Per-type F1 in `PersonaType::ALL` order.
    pub type_f1: [f64; 5],
    pub weighted_f1: f64,
    /// ROUGE-1, ROUGE-2, BLEU-1, BLEU-2, BLEU-3, already scaled by 100.
    pub generation: [f64; 5],
}

/// Standalone then pipeline.
pub const REFERENCE: [PipelineReference; 2] = [
    PipelineReference {
        discovery: [0.30, 0.50, 0.38],
        type_f1: [0.59, 0.60, 0.46, 0.28, 0.32],
        weighted_f1: 0.51,
        generation: [29.51, 2.97, 27.16, 2.27, 0.60],
    },
    PipelineReference {
        discovery: [0.30, 0.50, 0.38],
        type_f1: [0.56, 0.50, 0.35, 0.21, 0.26],
        weighted_f1: 0.43,
        generation: [23.40, 0.60, 22.12, 1.12, 0.08],
    },
];

impl PipelineReference {
    pub fn for_mode(mode: Mode) -> &'static Self {
        match mode {
            Mode::Standalone => &REFERENCE[0],
            Mode::Pipeline => &REFERENCE[1],
        }
    }
}

fn row(out: &mut String, label: &str, measured: f64, reference: f64) {
    let _ = writeln!(out, "  {label:<12} {measured:>9.4} {reference:>10.2}");
}

fn exemplars(out: &mut String, title: &str, list: &[Exemplar]) {
    let _ = writeln!(out, "{title} (utterance | gold | predicted)");
    if list.is_empty() {
        out.push_str("  none\n");
    }
    for e in list {
        let _ = writeln!(
            out,
            "  {}#{} {}: {} | {} | {}",
            e.dialogue_id, e.index, e.speaker, e.utterance, e.gold, e.predicted
        );
    }
}

/// Human-readable table of `report`.
pub fn render_report(report: &EvalReport) -> String {
    let reference = PipelineReference::for_mode(report.mode);
    let r = &report.results;
    let mut out = String::new();
    let _ = writeln!(out, "mode: {}", report.mode.as_str());
    let _ = writeln!(out, "split: {}", report.split);
    if report.mode == Mode::Pipeline {
        out.push_str(
            "scoring: gold persona utterances missed by discovery count as a wrong type and an empty value\n",
        );
    }
    out.push('\n');

    let _ = writeln!(out, "persona discovery {:>13} {:>10}", "measured", "reference");
    match &r.metrics.discovery {
        Some(d) => {
            row(&mut out, "precision", d.precision, reference.discovery[0]);
            row(&mut out, "recall", d.recall, reference.discovery[1]);
            row(&mut out, "f1", d.f1, reference.discovery[2]);
        }
        None => out.push_str("  none\n"),
    }
    out.push('\n');

    let _ = writeln!(out, "persona type f1 {:>15} {:>10} {:>8}", "measured", "reference", "support");
    match &r.metrics.typing {
        Some(t) => {
            for (k, p) in PersonaType::ALL.iter().enumerate() {
                let s = t.per_class.get(p).copied().unwrap_or_default();
                let _ = writeln!(
                    out,
                    "  {:<12} {:>9.4} {:>10.2} {:>8}",
                    p.as_str(),
                    s.prf.f1,
                    reference.type_f1[k],
                    s.support
                );
            }
            row(&mut out, "weighted", t.weighted_f1, reference.weighted_f1);
            let _ = writeln!(out, "  missed by discovery: {}", r.missed);
        }
        None => out.push_str("  none\n"),
    }
    out.push('\n');

    let _ = writeln!(out, "persona value (x100) {:>10} {:>10}", "measured", "reference");
    match &r.metrics.generation {
        Some(g) => {
            let measured = [g.rouge1, g.rouge2, g.bleu1, g.bleu2, g.bleu3];
            let names = ["rouge-1", "rouge-2", "bleu-1", "bleu-2", "bleu-3"];
            for ((name, m), rf) in names.iter().zip(measured).zip(reference.generation) {
                let _ = writeln!(out, "  {name:<12} {:>9.2} {rf:>10.2}", m * 100.0);
            }
            let _ = writeln!(out, "  instances: {}", g.count);
        }
        None => out.push_str("  none\n"),
    }
    out.push('\n');

    out.push_str("discovery confusion\n");
    out.push_str(&r.discovery_confusion.render());
    out.push('\n');
    out.push_str("type confusion\n");
    out.push_str(&r.type_confusion.render());
    out.push('\n');

    exemplars(&mut out, "false positives", &r.exemplars.false_positives);
    exemplars(&mut out, "false negatives", &r.exemplars.false_negatives);
    exemplars(&mut out, "type errors", &r.exemplars.type_errors);
    out
}

/// Write `<path>.json` and `<path>.txt`; returns both paths.
pub fn emit_report(report: &EvalReport, path: &Path) -> Result<(PathBuf, PathBuf)> {
    let json = path.with_extension("json");
    let text = path.with_extension("txt");
    if let Some(dir) = json.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&json, report.to_json()?).map_err(|e| Error::io(&json, e))?;
    fs::write(&text, render_report(report)).map_err(|e| Error::io(&text, e))?;
    Ok((json, text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{example_dialogue, Corpus};
    use crate::pipeline::{run_standalone, EvalOptions, GoldDetector, GoldTypes, GoldValues, Stages};

    fn report() -> EvalReport {
        let stages = Stages {
            detector: &GoldDetector,
            classifier: &GoldTypes,
            generator: &GoldValues,
        };
        run_standalone(
            &Corpus::from_dialogues([example_dialogue()]),
            stages,
            &EvalOptions::default(),
            serde_json::Value::Null,
        )
        .unwrap()
    }

    #[test]
    fn empty_exemplar_lists_say_none() {
        let text = render_report(&report());
        assert!(text.contains("false positives (utterance | gold | predicted)\n  none\n"));
        assert!(text.contains("type errors (utterance | gold | predicted)\n  none\n"));
    }

    #[test]
    fn reference_beside_measured_discovery_f1() {
        let text = render_report(&report());
        assert!(text.contains("  f1              1.0000       0.38\n"), "{text}");
    }

    #[test]
    fn writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let (j, t) = emit_report(&report(), &dir.path().join("out/report")).unwrap();
        let back: serde_json::Value = serde_json::from_str(&fs::read_to_string(j).unwrap()).unwrap();
        assert_eq!(back["mode"], "standalone");
        assert!(fs::read_to_string(t).unwrap().starts_with("mode: standalone\n"));
    }
}
