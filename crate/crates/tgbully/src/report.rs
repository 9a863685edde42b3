//! Epoch log lines, metrics CSV and ablation tables.

use std::fmt::Write as _;

use tgbully_core::metrics::{MeanStd, Summary};
use tgbully_core::train::{AblationRow, EpochRecord, RunResult};
use tgbully_core::{Metrics, TrainConfig};

const CSV_HEADER: [&str; 6] = ["run", "seed", "split", "recall", "f1", "auc"];

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn pct_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), pct)
}

fn mean_std(m: &MeanStd) -> String {
    format!("{}±{}", pct(m.mean), pct(m.std))
}

/// First line of every epoch log.
pub fn log_header(cfg: &TrainConfig) -> String {
    let clip = cfg.grad_clip.map_or_else(|| "off".into(), |c| c.to_string());
    format!(
        "optimizer adam lr {} betas 0.9 0.999 eps 1e-8 batch {} clip {} dropout {} seed {}",
        cfg.learning_rate, cfg.batch_size, clip, cfg.dropout_rate, cfg.seed
    )
}

pub fn epoch_line(r: &EpochRecord) -> String {
    let mut s = format!(
        "epoch {:>3} train_loss {:.6} val_loss {:.6} val_recall {} val_f1 {} val_auc {}",
        r.epoch,
        r.train_loss,
        r.val_loss,
        pct(r.val.recall),
        pct(r.val.f1),
        pct_opt(r.val.auc)
    );
    if let Some(a) = r.train_accuracy {
        let _ = write!(s, " train_acc {}", pct(a));
    }
    if r.clipped_steps > 0 {
        let _ = write!(s, " clipped {}", r.clipped_steps);
    }
    if r.best {
        s.push_str(" *");
    }
    s
}

pub fn epoch_log(cfg: &TrainConfig, log: &[EpochRecord]) -> String {
    let mut out = log_header(cfg);
    out.push('\n');
    for r in log {
        out.push_str(&epoch_line(r));
        out.push('\n');
    }
    out
}

fn metric_fields(m: &Metrics) -> [String; 3] {
    [m.recall.to_string(), m.f1.to_string(), m.auc.map(|a| a.to_string()).unwrap_or_default()]
}

fn summary_rows(w: &mut csv::Writer<Vec<u8>>, split: &str, s: &Summary) -> csv::Result<()> {
    let auc = |f: fn(&MeanStd) -> f64| s.auc.as_ref().map(|a| f(a).to_string()).unwrap_or_default();
    w.write_record(["mean", "", split, &s.recall.mean.to_string(), &s.f1.mean.to_string(), &auc(|m| m.mean)])?;
    w.write_record(["std", "", split, &s.recall.std.to_string(), &s.f1.std.to_string(), &auc(|m| m.std)])
}

fn write_runs(
    w: &mut csv::Writer<Vec<u8>>,
    runs: &[RunResult],
    summaries: Option<(&Summary, &Summary)>,
) -> csv::Result<()> {
    w.write_record(CSV_HEADER)?;
    for r in runs {
        for (split, m) in [("val", &r.val), ("test", &r.test)] {
            let [recall, f1, auc] = metric_fields(m);
            w.write_record([&r.run.to_string(), &r.seed.to_string(), split, &recall, &f1, &auc])?;
        }
    }
    if let Some((val, test)) = summaries {
        summary_rows(w, "val", val)?;
        summary_rows(w, "test", test)?;
    }
    Ok(())
}

/// Per-run validation and test rows (raw fractions; empty AUC when
/// undefined), followed by `mean` and `std` rows when summaries are given.
pub fn metrics_csv(runs: &[RunResult], summaries: Option<(&Summary, &Summary)>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_runs(&mut w, runs, summaries).expect("in-memory CSV");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

/// Plain-text evaluation summary, metrics ×100.
pub fn metrics_line(label: &str, m: &Metrics) -> String {
    format!("{label}: recall {} f1 {} auc {}", pct(m.recall), pct(m.f1), pct_opt(m.auc))
}

/// Test metrics of every ablation variant, mean±std ×100.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(7);
    let mut out = format!("{:<width$}  {:>13}  {:>13}  {:>13}\n", "variant", "recall", "f1", "auc");
    for r in rows {
        let s = &r.results.test_summary;
        let auc = s.auc.as_ref().map_or_else(|| "n/a".into(), mean_std);
        let _ = writeln!(out, "{:<width$}  {:>13}  {:>13}  {:>13}", r.name, mean_std(&s.recall), mean_std(&s.f1), auc);
    }
    out
}

/// One row per variant: test mean and std of each metric (raw fractions).
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["variant", "flags", "recall_mean", "recall_std", "f1_mean", "f1_std", "auc_mean", "auc_std"];
    w.write_record(header).expect("in-memory CSV");
    for r in rows {
        let s = &r.results.test_summary;
        let (am, asd) = s.auc.map_or((String::new(), String::new()), |a| (a.mean.to_string(), a.std.to_string()));
        w.write_record([
            r.name.clone(),
            r.flags.names().join("+"),
            s.recall.mean.to_string(),
            s.recall.std.to_string(),
            s.f1.mean.to_string(),
            s.f1.std.to_string(),
            am,
            asd,
        ])
        .expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

/// Same columns as [`metrics_csv`] for named evaluation sets without seeds.
pub fn split_metrics_csv(rows: &[(&str, &Metrics)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory CSV");
    for (split, m) in rows {
        let [recall, f1, auc] = metric_fields(m);
        w.write_record(["0", "", split, &recall, &f1, &auc]).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}
