//! Confusion matrix, macro metrics and a two-fold summary.
//!
//!     cargo run --example metrics

use deltagate::metrics::{confusion, report, summarize_cv};

fn main() -> deltagate::Result<()> {
    let labels = [0, 0, 1, 1, 2, 2];
    let preds = [0, 1, 1, 1, 2, 0];
    let cm = confusion(&labels, &preds, 3)?;
    println!("confusion (rows true, columns predicted): {:?}", cm.counts);
    let r = report(&cm)?;
    println!(
        "acc {:.4} macro precision {:.4} macro recall {:.4} macro f1 {:.4}",
        r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1
    );
    for (c, m) in r.per_class.iter().enumerate() {
        println!("  class {c}: precision {:.4} recall {:.4} f1 {:.4}", m.precision, m.recall, m.f1);
    }
    let perfect = report(&confusion(&labels, &labels, 3)?)?;
    let s = summarize_cv(&[r, perfect])?;
    println!("two folds: {}", s.table_row());
    println!("{}", serde_json::to_string(&s.acc)?);
    Ok(())
}
