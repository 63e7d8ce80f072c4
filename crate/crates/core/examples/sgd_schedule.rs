//! SGD with momentum and weight decay on a 2d quadratic, under the step
//! learning-rate schedule.
//!
//!     cargo run --example sgd_schedule

use adadistill::optim::{LrSchedule, SgdParams, SgdState, DEFAULT_MILESTONE_FRACTIONS};
use adadistill::Result;

fn main() -> Result<()> {
    let total = 400;
    let schedule = LrSchedule::from_fractions(0.1, total, &DEFAULT_MILESTONE_FRACTIONS, 0.1)?;
    println!("milestones {:?}", schedule.milestones);

    // f(x, y) = 2x^2 + 0.5y^2, minimum at the origin
    let mut p = vec![3.0, -4.0];
    let mut state = SgdState::new(&[2]);
    for it in 0..total {
        let g = [4.0 * p[0], p[1]];
        let hp = SgdParams { lr: schedule.lr_at(it), momentum: 0.9, weight_decay: 5e-4 };
        state.step(&mut [&mut p], &[&g], &hp)?;
        if it % 50 == 0 {
            println!("iter {it:3}  lr {:.0e}  p = ({:+.5}, {:+.5})", hp.lr, p[0], p[1]);
        }
    }
    println!("final p = ({:+.2e}, {:+.2e})", p[0], p[1]);
    Ok(())
}
