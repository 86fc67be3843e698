use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::output::{parse_meta, read_manifest};
use crate::error::{Error, Result};

fn read(dir: &Path, name: &str) -> Result<String> {
    fs::read_to_string(dir.join(name)).map_err(|e| Error::Manifest(format!("cannot read {name}: {e}")))
}

fn lookup<'a>(meta: &'a [(String, String)], key: &str) -> Result<&'a str> {
    meta.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Manifest(format!("metadata key {key} missing")))
}

fn num(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Manifest(format!("'{s}' is not a number")))
}

/// Data rows of a CSV as string cells, header dropped.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Worst pairwise order of `|y|` along the ladder, or a note when there is
/// only one point.
fn order_line(out: &mut String, label: &str, eps: &[f64], y: &[f64], need: f64) {
    if eps.len() < 2 {
        let _ = writeln!(out, "{label}: single epsilon, no order");
        return;
    }
    let orders: Vec<f64> = eps
        .windows(2)
        .zip(y.windows(2))
        .map(|(e, v)| (v[0].abs() / v[1].abs()).ln() / (e[0] / e[1]).ln())
        .collect();
    let min = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let shown: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
    let _ = writeln!(out, "{label}: orders [{}] (need >= {need})  {}", shown.join(", "), verdict(min >= need));
}

/// Human-readable summary of a finished run directory. Every file listed in
/// the manifest is re-hashed first.
pub fn report(dir: &Path) -> Result<String> {
    let files = read_manifest(dir)?;
    let run = parse_meta(&read(dir, "run.meta")?);
    let kind = lookup(&run, "kind")?.to_string();
    let mut out = String::new();
    let _ = writeln!(out, "run: {} ({} files, parameter set {})", kind, files.len(), lookup(&run, "parameter_set")?);
    match kind.as_str() {
        "lemma_suite" => {
            let _ = writeln!(out, "{:<34} {:>12} {:>10}  result", "check", "observed", "tolerance");
            for r in rows(&read(dir, "lemma_suite.csv")?) {
                let pass = r.get(3).map(String::as_str) == Some("true");
                let _ = writeln!(out, "{:<34} {:>12.3e} {:>10.1e}  {}", r[0], num(&r[1])?, num(&r[2])?, verdict(pass));
            }
        }
        "gap" => {
            let meta = parse_meta(&read(dir, "gap.meta")?);
            let slope = num(lookup(&meta, "fitted_slope")?)?;
            let rel = num(lookup(&meta, "constant_rel_dev")?)?;
            let gap = num(lookup(&meta, "mu_gap_smallest_eps")?)?;
            let tol = num(lookup(&meta, "root_tolerance")?)?;
            let sign = lookup(&meta, "sign_matches")? == "true";
            let _ = writeln!(out, "fitted log-log slope of delta: {slope:.4} (expected 2)  {}", verdict((1.9..=2.1).contains(&slope)));
            let _ = writeln!(
                out,
                "delta/eps^2 = {} vs predicted {} (rel. dev {rel:.3e})  {}",
                lookup(&meta, "fitted_constant")?,
                lookup(&meta, "predicted_constant")?,
                verdict(rel <= 0.1)
            );
            let _ = writeln!(out, "sign(delta) = sign(1/beta1 - 1/beta2) at every epsilon  {}", verdict(sign));
            let _ = writeln!(out, "|mu1 - mu0| = {gap:.3e} vs root tolerance {tol:.3e}  {}", verdict(gap > 10.0 * tol));
            let _ = writeln!(out, "{:>12} {:>14} {:>14} {:>14} {:>14}", "epsilon", "delta", "predicted", "mu0", "mu1");
            for r in rows(&read(dir, "gap.csv")?) {
                let v: Vec<f64> = r.iter().map(|c| num(c)).collect::<Result<_>>()?;
                let _ = writeln!(out, "{:>12.4e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}", v[0], v[1], v[2], v[3], v[4]);
            }
        }
        "mu_sweep" => {
            let meta = parse_meta(&read(dir, "mu_sweep.meta")?);
            for (k, v) in &meta {
                let orders: Vec<f64> = v.split_whitespace().map(num).collect::<Result<_>>()?;
                let min = orders.iter().cloned().fold(f64::INFINITY, f64::min);
                let need = if k.starts_with("grid") { 1.9 } else { 0.9 };
                let shown: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
                let _ = writeln!(out, "{k}: [{}] (need >= {need})  {}", shown.join(", "), verdict(min >= need));
            }
        }
        "steady" => {
            let table = rows(&read(dir, "steady_summary.csv")?);
            let col = |c: usize| table.iter().map(|r| num(&r[c])).collect::<Result<Vec<f64>>>();
            let eps = col(0)?;
            let rho4_dev: Vec<f64> = col(1)?.iter().zip(col(2)?).map(|(a, b)| a - b).collect();
            for (name, c, need) in [("L*", 3, 1.9), ("H*", 4, 1.9), ("F*", 5, 1.9)] {
                order_line(&mut out, &format!("{name} deviation from first-order expansion"), &eps, &col(c)?, need);
            }
            order_line(&mut out, "|rho4 - rho4_leading|", &eps, &rho4_dev, 0.9);
            let worst = col(6)?.into_iter().fold(0.0, f64::max);
            let _ = writeln!(out, "boundary residual {worst:.3e} (need <= 1e-10)  {}", verdict(worst <= 1e-10));
        }
        "modes" => {
            let table = rows(&read(dir, "modes_summary.csv")?);
            let mut ns: Vec<&str> = table.iter().map(|r| r[0].as_str()).collect();
            ns.dedup();
            ns.sort_unstable();
            ns.dedup();
            for n in ns {
                let sel: Vec<&Vec<String>> = table.iter().filter(|r| r[0] == n).collect();
                let col = |c: usize| sel.iter().map(|r| num(&r[c])).collect::<Result<Vec<f64>>>();
                let eps = col(1)?;
                let flux: Vec<f64> = col(4)?.iter().zip(col(5)?).map(|(a, b)| a - b).collect();
                order_line(&mut out, &format!("n={n} dp1/dr vs eps eta (1 + eps/2)"), &eps, &flux, 2.9);
                for (name, c) in [("L1", 6), ("H1", 7), ("F1", 8)] {
                    order_line(&mut out, &format!("n={n} {name} vs leading value"), &eps, &col(c)?, 0.9);
                }
            }
            if let Ok(text) = read(dir, "mode_differences.csv") {
                let table = rows(&text);
                let col = |c: usize| table.iter().map(|r| num(&r[c])).collect::<Result<Vec<f64>>>();
                let eps = col(0)?;
                for (name, c) in [("L", 1), ("H", 2), ("F", 3)] {
                    let dev: Vec<f64> = col(c)?.iter().zip(col(c + 3)?).map(|(a, b)| a - b).collect();
                    order_line(&mut out, &format!("mode difference {name}"), &eps, &dev, 0.9);
                }
            }
        }
        "distinctness" => {
            for (k, v) in parse_meta(&read(dir, "distinctness.meta")?) {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        _ => {}
    }
    let _ = writeln!(out, "files:");
    for (f, h) in &files {
        let _ = writeln!(out, "  {f}  {}", &h[..16]);
    }
    Ok(out)
}
