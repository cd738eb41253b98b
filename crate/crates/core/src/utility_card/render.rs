//! Plain-text rules and a DOT graph for a utility tree.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::UtilityTree;
use crate::design::FeatureSource;
use crate::error::{Error, Result};

/// `{column: {code: label}}`
pub type Dictionary = BTreeMap<String, BTreeMap<String, String>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Guide {
    pub text: String,
    pub dot: String,
}

/// Four significant digits, trailing zeros dropped.
pub(crate) fn fmt_num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let decimals = (3 - v.abs().log10().floor() as i32).clamp(0, 8) as usize;
    let s = format!("{v:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn signed(v: f64) -> String {
    let s = fmt_num(v);
    if v > 0.0 {
        format!("+{s}")
    } else {
        s
    }
}

/// Without a dictionary entry for the column, raw codes are shown; a column
/// present in the dictionary must cover every code it is asked for.
fn label<'a>(dict: &'a Dictionary, column: &str, code: &'a str) -> Result<&'a str> {
    match dict.get(column) {
        None => Ok(code),
        Some(m) => m
            .get(code)
            .map(String::as_str)
            .ok_or_else(|| Error::MissingLabel(format!("{column}={code}"))),
    }
}

/// Condition text for the (left, right) branches of a split.
fn conditions(f: &FeatureSource, threshold: f64, dict: &Dictionary) -> Result<(String, String)> {
    Ok(match f {
        FeatureSource::Continuous { column } => {
            let t = fmt_num(threshold);
            (format!("{column}<={t}"), format!("{column}>{t}"))
        }
        FeatureSource::Indicator { column, code } => {
            let l = label(dict, column, code)?;
            (format!("{column}!={l}"), format!("{column}={l}"))
        }
    })
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn render_guide(tree: &UtilityTree, dictionary: &Dictionary) -> Result<Guide> {
    let mut text = String::new();
    let root = &tree.nodes[0];
    if root.split.is_none() {
        writeln!(
            text,
            "Across all {} patients the full model changes utility by {} on average.",
            root.n,
            signed(root.value)
        )
        .unwrap();
    } else {
        writeln!(
            text,
            "Utility gain of the full model over the basic model ({} patients).",
            root.n
        )
        .unwrap();
        writeln!(text).unwrap();
        let mut rules = Vec::new();
        outline(tree, 0, 0, &mut Vec::new(), dictionary, &mut text, &mut rules)?;
        writeln!(text).unwrap();
        writeln!(text, "Rules:").unwrap();
        for r in rules {
            writeln!(text, "  {r}").unwrap();
        }
    }

    let mut dot = String::from("digraph utility_tree {\n  node [shape=box];\n");
    for (i, node) in tree.nodes.iter().enumerate() {
        let head = match node.split {
            Some((f, t, _, _)) => format!("{}\\n", escape(&conditions(&tree.features[f], t, dictionary)?.0)),
            None => String::new(),
        };
        writeln!(
            dot,
            "  n{i} [label=\"{head}value = {}\\nn = {}\"];",
            fmt_num(node.value),
            node.n
        )
        .unwrap();
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        if let Some((_, _, l, r)) = node.split {
            writeln!(dot, "  n{i} -> n{l} [label=\"yes\"];").unwrap();
            writeln!(dot, "  n{i} -> n{r} [label=\"no\"];").unwrap();
        }
    }
    dot.push_str("}\n");
    Ok(Guide { text, dot })
}

fn outline(
    tree: &UtilityTree,
    t: usize,
    depth: usize,
    path: &mut Vec<String>,
    dict: &Dictionary,
    text: &mut String,
    rules: &mut Vec<String>,
) -> Result<()> {
    let node = &tree.nodes[t];
    let pad = "  ".repeat(depth);
    match node.split {
        None => {
            writeln!(text, "{pad}-> utility gain {}, n={}", signed(node.value), node.n).unwrap();
            rules.push(format!(
                "{} → utility gain {}, n={}",
                path.join(" AND "),
                signed(node.value),
                node.n
            ));
        }
        Some((f, th, l, r)) => {
            let (lc, rc) = conditions(&tree.features[f], th, dict)?;
            for (cond, child) in [(lc, l), (rc, r)] {
                writeln!(text, "{pad}{cond}:").unwrap();
                path.push(cond);
                outline(tree, child, depth + 1, path, dict, text, rules)?;
                path.pop();
            }
        }
    }
    Ok(())
}
