//! Markdown model card.

use std::fmt::Write;

use super::AuditReport;
use crate::metrics::{GroupDifference, MetricEstimate};

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.3}"))
}

fn interval(lo: Option<f64>, hi: Option<f64>) -> String {
    match (lo, hi) {
        (Some(a), Some(b)) => format!("[{a:.3}, {b:.3}]"),
        _ => "-".into(),
    }
}

fn estimates_table(out: &mut String, estimates: &[MetricEstimate]) {
    out.push_str("| group | metric | mean | 95% interval | defined |\n|---|---|---|---|---|\n");
    for e in estimates {
        writeln!(
            out,
            "| {} | {} | {} | {} | {}/{} |",
            e.group,
            e.metric,
            num(e.mean),
            interval(e.ci_low, e.ci_high),
            e.n_defined,
            e.n_replicates
        )
        .unwrap();
    }
}

fn differences_table(out: &mut String, diffs: &[GroupDifference]) {
    out.push_str("| metric | difference | 95% interval | excludes 0 |\n|---|---|---|---|\n");
    for d in diffs {
        writeln!(
            out,
            "| {} ({} - {}) | {} | {} | {} |",
            d.metric,
            d.group_a,
            d.group_b,
            num(d.delta_mean),
            interval(d.delta_ci_low, d.delta_ci_high),
            if d.interval_excludes_zero() { "yes" } else { "no" }
        )
        .unwrap();
    }
}

/// Renders everything except timing, so the card is reproducible.
pub fn render_markdown(report: &AuditReport) -> String {
    let mut out = String::new();
    writeln!(out, "# Model card: {} audit\n", report.data.outcome).unwrap();
    writeln!(out, "Generated by {} {}.\n", report.tool, report.version).unwrap();

    out.push_str("## Configuration\n\n```json\n");
    out.push_str(&serde_json::to_string_pretty(&report.config).expect("config serializes"));
    out.push_str("\n```\n\n");

    let d = &report.data;
    out.push_str("## Data and preprocessing\n\n");
    writeln!(
        out,
        "{} records ({:?}), {} for training and {} for testing; outcome rate {:.4}.\n",
        d.n_rows, d.provenance, d.n_train, d.n_test, d.outcome_rate
    )
    .unwrap();
    out.push_str("| column | partition | out of range | imputed | remapped |\n|---|---|---|---|---|\n");
    for (part, rep) in [("train", &report.preprocess.train), ("test", &report.preprocess.test)] {
        for (col, c) in &rep.columns {
            writeln!(
                out,
                "| {col} | {part} | {} | {} | {} |",
                c.out_of_range, c.imputed, c.remapped
            )
            .unwrap();
        }
    }
    out.push('\n');

    for sec in &report.learners {
        if sec.probes.is_empty() && sec.oob.is_none() {
            continue;
        }
        writeln!(out, "## Learner: {}\n", sec.learner).unwrap();
        if !sec.bias_panel.is_empty() {
            out.push_str("### Predicted-positive rate gap by condition\n\n");
            out.push_str("| condition | difference | 95% interval |\n|---|---|---|\n");
            for row in &sec.bias_panel {
                writeln!(
                    out,
                    "| {} | {} | {} |",
                    row.condition,
                    num(row.delta_mean),
                    interval(row.delta_ci_low, row.delta_ci_high)
                )
                .unwrap();
            }
            out.push('\n');
        }
        for p in &sec.probes {
            writeln!(out, "### Condition {}\n", p.label()).unwrap();
            let sizes: Vec<String> = p.group_sizes.iter().map(|(g, n)| format!("{g}: {n}")).collect();
            writeln!(out, "Evaluated {} records ({}).\n", p.n_evaluated, sizes.join(", ")).unwrap();
            for note in &p.notes {
                writeln!(out, "- {note}").unwrap();
            }
            if !p.notes.is_empty() {
                out.push('\n');
            }
            estimates_table(&mut out, &p.estimates);
            out.push('\n');
            differences_table(&mut out, &p.differences);
            out.push('\n');
        }
        if let Some(oob) = &sec.oob {
            writeln!(
                out,
                "### Out-of-bag estimates\n\n{} replicates, mean out-of-bag fraction {:.3}.\n",
                oob.replicates, oob.mean_oob_fraction
            )
            .unwrap();
            estimates_table(&mut out, &oob.estimates);
            out.push('\n');
            differences_table(&mut out, &oob.differences);
            out.push('\n');
        }
    }

    if !report.skipped.is_empty() {
        out.push_str("## Skipped conditions\n\n");
        for s in &report.skipped {
            writeln!(out, "- {s}").unwrap();
        }
        out.push('\n');
    }

    if let Some(b) = &report.balance {
        out.push_str("## Covariate balance\n\n");
        for n in &b.notes {
            writeln!(out, "- {n}").unwrap();
        }
        for s in &b.report.surrogates {
            writeln!(out, "- possible surrogate: {}", s.reason).unwrap();
        }
        if let Some(m) = &b.matched {
            writeln!(
                out,
                "- {} matched pairs at caliper {}; unmatched treated fraction {:.3}",
                m.pairs.len(),
                m.caliper,
                m.unmatched_fraction
            )
            .unwrap();
        }
        out.push_str("\n| feature | SMD before | SMD after |\n|---|---|---|\n");
        for f in &b.report.features {
            writeln!(
                out,
                "| {} | {} | {} |",
                f.feature,
                num(f.before.value),
                f.after.as_ref().map_or("-".to_string(), |a| num(a.value))
            )
            .unwrap();
        }
        out.push('\n');
    }

    if let Some(u) = &report.utility {
        out.push_str("## Who benefits from the model\n\n");
        writeln!(
            out,
            "Weights w1={} w2={}; {} test records; mean utility {:.3} (full) vs {:.3} (basic), mean gain {:.3}. \
             Tree pruned at alpha {}.\n",
            u.weights.w1, u.weights.w2, u.n_records, u.mean_iu_full, u.mean_iu_basic, u.mean_iu_diff, u.tree.alpha
        )
        .unwrap();
        for n in &u.tree.notes {
            writeln!(out, "- {n}").unwrap();
        }
        if !u.tree.notes.is_empty() {
            out.push('\n');
        }
        out.push_str("```text\n");
        out.push_str(&u.guide.text);
        out.push_str("```\n");
    }
    out
}
