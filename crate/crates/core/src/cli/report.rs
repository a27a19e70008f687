// SPDX-License-Identifier: MIT OR Apache-2.0

//! Markdown summary of a finished run.

use std::fmt::Write;
use std::path::Path;

use super::stages::{
    LocalitySummary, Run, COMPONENTS_FILE, FIGURES_DIR, LOCALITY_FILE, SWEEP_FILE, TABLE1_FILE, TABLE2_FILE,
};
use crate::analysis::ComponentSpec;
use crate::error::{LabError, Result};

/// A CSV file as a markdown table, floats rounded to four places.
fn csv_table(path: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut s = format!("| {} |\n|{}\n", headers.join(" | "), "---|".repeat(headers.len()));
    for rec in r.records() {
        let rec = rec?;
        let cells: Vec<String> = rec
            .iter()
            .map(|c| match c.parse::<f64>() {
                Ok(v) if c.contains('.') || c.contains('e') => format!("{v:.4}"),
                _ => c.to_string(),
            })
            .collect();
        let _ = writeln!(s, "| {} |", cells.join(" | "));
    }
    Ok(s)
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| LabError::Corrupt { path: path.to_path_buf(), reason: e.to_string() })
}

pub fn render(run: &Run) -> Result<String> {
    let dir = &run.dir;
    let ck = run.checkpoint()?;
    let filtered = run.filtered()?;
    let world = run.world()?;
    let loc: LocalitySummary = read(&dir.join(LOCALITY_FILE))?;
    let spec: ComponentSpec = read(&dir.join(COMPONENTS_FILE))?;
    let c = ck.model.config();

    let mut s = String::new();
    let _ = writeln!(s, "# Run {}\n", &run.config_hash[..16]);
    let _ = writeln!(s, "Config hash `{}`.\n", run.config_hash);

    let _ = writeln!(s, "## World and model\n");
    let _ = writeln!(
        s,
        "{} subjects, {} relations, {} triples. Model: {} layers, d_model {}, {} heads, vocabulary {}.\n",
        world.subjects.len(),
        world.relations.len(),
        world.triples.len(),
        c.layers,
        c.d_model,
        c.heads,
        c.vocab_size
    );
    let _ = writeln!(
        s,
        "Training: {} steps, loss {:.4} to {:.4}. Recall filter keeps {} of {} triples ({:.1}%).\n",
        ck.meta.steps,
        ck.meta.initial_loss,
        ck.meta.final_loss,
        filtered.triples.len(),
        world.triples.len(),
        100.0 * filtered.pass_rate
    );

    let _ = writeln!(s, "## Locality\n");
    let _ = writeln!(s, "Share of cells with score above {} by token region.\n", loc.threshold);
    let _ = writeln!(s, "| template | score | cells | subject | relation | last | other |\n|---|---|---|---|---|---|---|");
    for (tpl, rep) in &loc.by_template {
        for k in &rep.kinds {
            let _ = writeln!(
                s,
                "| {tpl} | {} | {} | {:.3} | {:.3} | {:.3} | {:.3} |",
                k.kind.score_name(),
                k.high_cells,
                k.shares.subject,
                k.shares.relation,
                k.shares.last,
                k.shares.other
            );
        }
    }
    let _ = writeln!(
        s,
        "\nComponent bands ({:?}): subject {}..={}, relation {}..={}, object {}..={}.\n",
        spec.mode, spec.subject.lo, spec.subject.hi, spec.relation.lo, spec.relation.hi, spec.object.lo, spec.object.hi
    );

    let _ = writeln!(s, "## Mean interchange accuracy\n");
    s.push_str(&csv_table(&dir.join(TABLE1_FILE))?);
    let _ = writeln!(s, "\n## Layer sweep\n");
    s.push_str(&csv_table(&dir.join(SWEEP_FILE))?);
    let _ = writeln!(s, "\n## Contextual editing\n");
    s.push_str(&csv_table(&dir.join(TABLE2_FILE))?);

    let _ = writeln!(s, "\n## Figures\n");
    let mut figs: Vec<String> = std::fs::read_dir(dir.join(FIGURES_DIR))?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.ends_with(".svg"))
        .collect();
    figs.sort();
    for f in figs {
        let _ = writeln!(s, "- [{f}]({FIGURES_DIR}/{f})");
    }
    Ok(s)
}
