//! CSV and report rendering, and atomic file writes.

use std::fmt::Write as _;
use std::io::{IsTerminal, Write};
use std::path::Path;

use crate::chain::StateSpace;
use crate::consistency::{ComponentReport, ConsistencyReport};
use crate::error::Result;
use crate::measures::MeasureSeries;

pub const CSV_HEADER: &str = "t,nu_dep,nu_ind,rho,kl,kappa,classification";

/// Shortest decimal that reads back as the value rounded to 12 significant
/// digits, in exponent form outside `[1e-4, 1e15)`. Negative zero prints as
/// `0`.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        return "0".into();
    }
    if (1e-4..1e15).contains(&rounded.abs()) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}

pub fn series_csv(series: &MeasureSeries) -> String {
    let mut out = String::with_capacity(64 * (series.points.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in &series.points {
        let fields = [p.t, p.nu_dep, p.nu_ind, p.rho, p.kl, p.kappa].map(format_float);
        let _ = writeln!(out, "{},{}", fields.join(","), p.classification);
    }
    out
}

/// Writes `contents` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// File-name-safe version of a label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// PASS/FAIL markers, coloured on terminals unless `NO_COLOR` is set.
#[derive(Clone, Copy, Debug)]
pub struct Style {
    color: bool,
}

impl Style {
    pub fn plain() -> Self {
        Self { color: false }
    }

    pub fn for_stdout() -> Self {
        let no_color = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
        Self {
            color: !no_color && std::io::stdout().is_terminal(),
        }
    }

    pub fn verdict(self, ok: bool) -> String {
        match (ok, self.color) {
            (true, true) => "\x1b[32mPASS\x1b[0m".into(),
            (false, true) => "\x1b[31mFAIL\x1b[0m".into(),
            (true, false) => "PASS".into(),
            (false, false) => "FAIL".into(),
        }
    }
}

fn component_lines(out: &mut String, space: &StateSpace, c: &ComponentReport) {
    let _ = writeln!(out, "  component {}: {}", c.component, c.classification);
    let _ = writeln!(out, "    condition (M): {}", if c.condition_m { "holds" } else { "fails" });
    if let Some(w) = &c.m_witness {
        let _ = writeln!(
            out,
            "    (M) witness: segment {} (t={}), states {} and {} into value {}: rates {} vs {}",
            w.segment,
            format_float(w.t),
            space.label(w.x),
            space.label(w.x_hat),
            w.target,
            format_float(w.rate_x),
            format_float(w.rate_x_hat)
        );
    }
    if let Some(w) = &c.p_witness {
        let _ = writeln!(
            out,
            "    (P) witness: P({},{}) from {} and {} into value {}: {} vs {}",
            format_float(w.t),
            format_float(w.s),
            space.label(w.x),
            space.label(w.x_hat),
            w.target,
            format_float(w.prob_x),
            format_float(w.prob_x_hat)
        );
    }
    let _ = writeln!(
        out,
        "    intertwining residual: {}",
        format_float(c.intertwining.max_residual)
    );
    let _ = writeln!(out, "    single-jump certificate: {}", if c.single_jump { "yes" } else { "no" });
    if let Some(v) = &c.markov_identity {
        let _ = writeln!(
            out,
            "    Markov identity: {} ({} paths checked, max gap {})",
            if v.falsified() { "falsified" } else { "not falsified" },
            v.checked_paths,
            format_float(v.max_abs)
        );
    }
}

pub fn consistency_section(out: &mut String, space: &StateSpace, report: &ConsistencyReport) {
    let _ = writeln!(out, "classification: {}", report.overall());
    for c in &report.components {
        component_lines(out, space, c);
    }
}
