//! Margin-softmax losses on a tiny batch, with a finite-difference check of
//! the analytic feature gradient.
//!
//!     cargo run --example margin_losses

use adadistill::losses::{aml_loss, mse_kd_loss, MarginConfig};
use adadistill::numkit::{finite_diff_grad, max_relative_error};
use adadistill::{Mat, Result};

fn main() -> Result<()> {
    let features = Mat::from_rows(&[[0.9, 0.2, -0.1], [0.1, -0.8, 0.4], [-0.3, 0.1, 1.2]])?;
    let labels = [0, 1, 2];
    let centers = Mat::from_rows(&[[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.5, 0.5, 0.5]])?;

    for (name, cfg) in [
        ("softmax", MarginConfig::plain(8.0)),
        ("arcface m1=0.5", MarginConfig::arcface(0.5, 8.0)),
        ("cosface m2=0.35", MarginConfig::cosface(0.35, 8.0)),
    ] {
        let out = aml_loss(&features, &labels, &centers, &cfg)?;
        let numeric = finite_diff_grad(
            |x| {
                let f = Mat::from_vec(3, 3, x.to_vec()).unwrap();
                aml_loss(&f, &labels, &centers, &cfg).unwrap().value
            },
            features.as_slice(),
            1e-6,
        )?;
        let err = max_relative_error(out.grad_features.as_slice(), &numeric, 1e-8);
        println!("{name:16} loss {:10.6}  grad rel err {err:.2e}", out.value);
    }

    let teacher = Mat::from_rows(&[[1.0, 0.1, 0.0], [0.0, -1.0, 0.3], [0.0, 0.2, 1.0]])?;
    println!("mse kd           loss {:10.6}", mse_kd_loss(&features, &teacher)?.value);
    Ok(())
}
