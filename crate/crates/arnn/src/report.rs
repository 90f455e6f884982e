//! Delimited and human-readable renderings of run outputs.

use std::fmt::Write;

use arnn_core::data::DatasetStats;
use arnn_core::eval::EvalReport;
use arnn_core::train::EpochRecord;

/// Tab-separated evaluation report, one row per system.
pub fn report_tsv(reports: &[EvalReport]) -> String {
    let mut out = String::from("system\tk\trecall\tmrr\tn_recs\tn_hits\n");
    for r in reports {
        writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
            r.system, r.k, r.recall, r.mrr, r.n_recs, r.n_hits
        )
        .expect("string write");
    }
    out
}

/// Aligned table with the systems as rows.
pub fn report_table(reports: &[EvalReport]) -> String {
    let k = reports.first().map_or(0, |r| r.k);
    let recall = format!("Recall@{k}");
    let mrr = format!("MRR@{k}");
    let mut out = format!(
        "{:<10} {:>10} {:>10} {:>8}\n",
        "System", recall, mrr, "N_recs"
    );
    for r in reports {
        writeln!(
            out,
            "{:<10} {:>10.4} {:>10.4} {:>8}",
            r.system, r.recall, r.mrr, r.n_recs
        )
        .expect("string write");
    }
    out
}

/// Per-epoch training history. Epoch 0 holds the metrics before training.
pub fn history_tsv(initial: (f64, f64), history: &[EpochRecord], k: usize) -> String {
    let mut out = format!("epoch\ttrain_loss\tval_recall@{k}\tval_mrr@{k}\n");
    writeln!(out, "0\t-\t{:.6}\t{:.6}", initial.0, initial.1).expect("string write");
    for h in history {
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}",
            h.epoch, h.train_loss, h.val_recall, h.val_mrr
        )
        .expect("string write");
    }
    out
}

/// Dataset statistics block.
pub fn stats_block(stats: &DatasetStats) -> String {
    let rows = [
        ("Users", stats.users),
        ("Items", stats.items),
        ("Sessions", stats.sessions),
        ("Transactions", stats.transactions),
        ("Context fields", stats.context_fields),
        ("Train sessions", stats.train_sessions),
        ("Test sessions", stats.test_sessions),
    ];
    let mut out = String::new();
    for (name, value) in rows {
        writeln!(out, "{name:<16}{value:>10}").expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(system: &str) -> EvalReport {
        EvalReport {
            system: system.into(),
            k: 20,
            recall: 0.5,
            mrr: 0.25,
            n_recs: 8,
            n_hits: 4,
        }
    }

    #[test]
    fn report_rows() {
        let tsv = report_tsv(&[report("GRU4REC"), report("ARNN")]);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "GRU4REC\t20\t0.500000\t0.250000\t8\t4");
        assert!(report_table(&[report("PNN")]).contains("Recall@20"));
    }

    #[test]
    fn history_starts_at_epoch_zero() {
        let rec = EpochRecord {
            epoch: 1,
            train_loss: 0.75,
            val_recall: 0.5,
            val_mrr: 0.2,
        };
        let tsv = history_tsv((0.1, 0.05), &[rec], 20);
        assert_eq!(
            tsv,
            "epoch\ttrain_loss\tval_recall@20\tval_mrr@20\n0\t-\t0.100000\t0.050000\n1\t0.750000\t0.500000\t0.200000\n"
        );
    }
}
