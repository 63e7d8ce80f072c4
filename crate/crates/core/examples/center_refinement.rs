//! Adaptive center refinement: per-sample momentum from student/teacher
//! agreement, then an EMA pull of the class center toward the teacher feature.
//!
//!     cargo run --example center_refinement

use adadistill::losses::{adadistill_step, compute_alpha, compute_alpha_prime, AlphaMode, CenterBank, MarginConfig};
use adadistill::{Mat, Result};

fn main() -> Result<()> {
    let centers = Mat::from_rows(&[[1.0, 0.0], [0.0, 1.0]])?;
    let teacher = Mat::from_rows(&[[0.8, 0.6], [0.9, -0.1], [-0.2, 1.0]])?;
    let student = Mat::from_rows(&[[0.7, 0.7], [1.0, 0.0], [0.0, 1.0]])?;
    let labels = [0, 0, 1];

    for (i, &label) in labels.iter().enumerate() {
        let a = compute_alpha(student.row(i), teacher.row(i))?;
        let ap = compute_alpha_prime(student.row(i), teacher.row(i), centers.row(label))?;
        println!("sample {i}: alpha {a:.4}  alpha' {ap:.4}");
    }

    let cfg = MarginConfig::arcface(0.5, 64.0);
    for mode in [AlphaMode::Plain, AlphaMode::HardWeighted] {
        let mut bank = CenterBank::new(&centers)?;
        let out = adadistill_step(&student, &teacher, &labels, &mut bank, &cfg, mode)?;
        println!("{mode:?}: loss {:.4}, alphas {:?}", out.loss.value, out.alphas);
        for j in 0..bank.class_count() {
            println!("  center {j}: {:?}", bank.center(j));
        }
    }

    // a center repeatedly pulled toward a fixed direction converges to it
    let mut bank = CenterBank::new(&centers)?;
    for _ in 0..100 {
        bank.update_center(0, &[0.0, 1.0], 0.9)?;
    }
    println!("after 100 updates: {:?}", bank.center(0));
    Ok(())
}
