use std::time::Instant;

use rand::Rng;

use super::Model;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub frames: usize,
    pub mean_s: f64,
    pub max_s: f64,
}

/// Times `n_frames` single-frame forward passes on the calling thread,
/// reusing one workspace. Inputs are seeded random vectors in [0, 1].
pub fn measure_latency(model: &Model, n_frames: usize) -> Result<LatencyStats> {
    if n_frames < 100 {
        return Err(Error::Argument(format!("latency needs >= 100 frames, got {n_frames}")));
    }
    let mut rng = seed::rng(0x6c61_7465);
    let inputs: Vec<Vec<f64>> = (0..16)
        .map(|_| (0..model.input_dim()).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let mut ws = model.workspace();
    model.forward_ws(&inputs[0], &mut ws)?;
    let mut total = 0.0;
    let mut max = 0.0f64;
    for i in 0..n_frames {
        let t0 = Instant::now();
        let out = model.forward_ws(&inputs[i % inputs.len()], &mut ws)?;
        std::hint::black_box(out);
        let dt = t0.elapsed().as_secs_f64();
        total += dt;
        max = max.max(dt);
    }
    Ok(LatencyStats {
        frames: n_frames,
        mean_s: total / n_frames as f64,
        max_s: max,
    })
}
