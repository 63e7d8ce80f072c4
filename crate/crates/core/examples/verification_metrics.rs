//! Verification metrics on hand-made score lists: best-threshold accuracy,
//! TAR at fixed FAR, the ROC curve, and rank-1 identification.
//!
//!     cargo run --example verification_metrics

use adadistill::eval::{rank1_identification, roc_curve, tar_at_far, verification_accuracy, ScoreSet};
use adadistill::{Mat, Result};

fn main() -> Result<()> {
    let scores = ScoreSet::new(
        vec![0.92, 0.85, 0.77, 0.70, 0.64, 0.40],
        vec![0.65, 0.31, 0.22, 0.18, 0.10, 0.05, -0.02, -0.10, -0.25, -0.40],
    )?;
    let acc = verification_accuracy(&scores)?;
    println!("accuracy {:.4} at threshold {:.4}", acc.accuracy, acc.threshold);
    for far in [0.1, 0.01] {
        let t = tar_at_far(&scores, far)?;
        let note = if t.unreliable { " (too few impostors)" } else { "" };
        println!("TAR@FAR={far}: {:.4} (threshold {:.4}, far {:.2}){note}", t.point.tar, t.point.threshold, t.point.far);
    }
    println!("roc:");
    for p in roc_curve(&scores)? {
        println!("  t {:>8.4}  tar {:.3}  far {:.3}", p.threshold, p.tar, p.far);
    }

    let gallery = Mat::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])?;
    let probes = Mat::from_rows(&[[0.9, 0.1], [0.2, 0.8], [-0.6, -0.7], [0.1, -1.0]])?;
    let r1 = rank1_identification(&probes, &[0, 1, 2, 1], &gallery, &[0, 1, 2])?;
    println!("rank-1 {r1:.2}");
    Ok(())
}
