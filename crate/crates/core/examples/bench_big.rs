use std::time::Instant;
use walklab::group::{CayleyBall, Group};
use walklab::measure::StepMeasure;
use walklab::green::operator::green_column;

fn main() {
    let r: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(14);
    let g = Group::parse("free(2)").unwrap();
    let t0 = Instant::now();
    let ball = CayleyBall::build_with_cap(g.clone(), r, 600_000_000).unwrap();
    eprintln!("ball R={r}: {} elements, built in {:.1?}", ball.len(), t0.elapsed());
    let m: StepMeasure<f64> = StepMeasure::srw(g);
    let t1 = Instant::now();
    let col = green_column(&ball, &m, 0, None, 1e-12).unwrap();
    eprintln!("solve: G(e,e) = {:.12} in {:.1?} ({} sweeps, residual {:.2e})",
        col.value(0), t1.elapsed(), col.sweeps, col.residual);
}
