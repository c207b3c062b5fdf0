//! Tab-separated campaign outputs. Numbers are written with fixed precision
//! so repeated runs produce identical bytes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::campaign::CampaignOutcome;
use crate::metrics::{report_metrics, Metric};

pub const SUMMARY_FILE: &str = "summary.tsv";
pub const REALIZATIONS_FILE: &str = "realizations.tsv";

pub fn cdf_file_name(strategy: &str, metric: Metric) -> String {
    format!("cdf_{}_{}.tsv", metric.name(), strategy.to_ascii_lowercase())
}

fn num(x: f64) -> String {
    format!("{x:.9e}")
}

pub fn summary_table(outcome: &CampaignOutcome) -> String {
    let mut s = String::from("strategy\truns\tfailures\tnqu\tnu\toffered_bps\tmin_rate_bps\tmax_gap\n");
    for (strategy, sum) in &outcome.summary {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            strategy.label(),
            sum.runs,
            outcome.failures.get(strategy).copied().unwrap_or(0),
            num(sum.mean_nqu),
            num(sum.mean_nu),
            num(sum.mean_offered),
            num(sum.mean_min_rate),
            num(sum.max_gap),
        ));
    }
    for (strategy, &f) in &outcome.failures {
        if !outcome.summary.contains_key(strategy) {
            s.push_str(&format!("{}\t0\t{f}\tnan\tnan\tnan\tnan\tnan\n", strategy.label()));
        }
    }
    s
}

pub fn realization_log(outcome: &CampaignOutcome) -> String {
    let mut s = String::from(
        "realization\tseed\tstream\tdemand_std_bps\tstrategy\tstatus\tnqu\tnu\toffered_bps\tmin_rate_bps\tmax_gap\theuristic_beams\n",
    );
    for r in &outcome.realizations {
        for run in &r.runs {
            let head = format!("{}\t{}\t{}\t{}\t{}", r.index, r.seed, r.stream, num(r.demand_std), run.strategy.label());
            match &run.report {
                Ok(rep) => {
                    let m = report_metrics(rep, &outcome.metrics);
                    s.push_str(&format!(
                        "{head}\tok\t{}\t{}\t{}\t{}\t{}\t{}\n",
                        num(m.nqu),
                        num(m.nu),
                        num(m.offered),
                        num(m.min_rate),
                        num(rep.max_gap()),
                        run.heuristic_beams
                    ));
                }
                Err(msg) => {
                    let msg = msg.replace(['\t', '\n'], " ");
                    s.push_str(&format!("{head}\tfailed: {msg}\tnan\tnan\tnan\tnan\tnan\t0\n"));
                }
            }
        }
    }
    s
}

fn cdf_text(points: &[(f64, f64)]) -> String {
    points.iter().map(|(v, p)| format!("{}\t{}\n", num(*v), num(*p))).collect()
}

fn write(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> io::Result<()> {
    let path = dir.join(name);
    fs::File::create(&path)?.write_all(text.as_bytes())?;
    written.push(path);
    Ok(())
}

/// Writes the summary, the realization log, and optionally per-metric CDFs
/// and GA convergence traces. Returns the files written.
pub fn write_outputs(outcome: &CampaignOutcome, dir: &Path, cdf: bool, ga_trace: bool) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    write(dir, SUMMARY_FILE, &summary_table(outcome), &mut written)?;
    write(dir, REALIZATIONS_FILE, &realization_log(outcome), &mut written)?;
    if cdf {
        for (strategy, sum) in &outcome.summary {
            for metric in Metric::ALL {
                write(dir, &cdf_file_name(strategy.label(), metric), &cdf_text(&sum.cdf(metric)), &mut written)?;
            }
        }
    }
    if ga_trace {
        for r in &outcome.realizations {
            for run in &r.runs {
                if let Some(trace) = &run.ga_trace {
                    let text: String = trace.iter().map(|f| format!("{}\n", num(*f))).collect();
                    write(dir, &format!("ga_trace_{:04}.txt", r.index), &text, &mut written)?;
                }
            }
        }
    }
    Ok(written)
}
