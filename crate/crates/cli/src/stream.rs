//! Streaming inference. Input is one JSON object per line:
//!
//! ```text
//! {"id": <any, optional>, "features": [55 values in [0, 1]]}
//! ```
//!
//! Output is one line per input line, in arrival order:
//!
//! ```text
//! {"frame":0,"id":...,"servo":[25 values]}
//! {"frame":1,"error":"..."}
//! ```
//!
//! Servo values are clamped to the layout's channel limits. Landmark models
//! receive the landmarks composed from the features.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use mimic_core::face_sim::{compose_landmarks, flatten_landmarks, BlendBasis, FeatureVector};
use mimic_core::model::{load_checkpoint, Model, Workspace};
use mimic_core::servo_space::{clamp_frame, ServoLayout};

use crate::commands::{basis, layout};
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::MimicArgs;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InputLine {
    #[serde(default)]
    id: Option<serde_json::Value>,
    features: Vec<f64>,
}

#[derive(Serialize)]
struct OutputLine<'a> {
    frame: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<&'a serde_json::Value>,
    servo: &'a [f64],
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    frame: u64,
    error: &'a str,
}

pub struct Mimicker {
    model: Model,
    layout: ServoLayout,
    basis: BlendBasis,
    ws: Workspace,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct StreamStats {
    pub frames: u64,
    pub errors: u64,
    pub total_s: f64,
}

impl Mimicker {
    pub fn new(model: Model, layout: ServoLayout, basis: BlendBasis) -> Self {
        let ws = model.workspace();
        Mimicker {
            model,
            layout,
            basis,
            ws,
        }
    }

    fn servo(&mut self, features: &[f64]) -> Result<Vec<f64>, String> {
        let fv = FeatureVector::from_slice(features).map_err(|e| e.to_string())?;
        let input = if self.model.kind().uses_landmarks() {
            flatten_landmarks(&compose_landmarks(&fv, &self.basis))
        } else {
            fv.as_slice().to_vec()
        };
        let raw = self.model.forward_ws(&input, &mut self.ws).map_err(|e| e.to_string())?;
        let frame = clamp_frame(raw, &self.layout).map_err(|e| e.to_string())?;
        Ok(frame.as_slice().to_vec())
    }

    /// Answers every line of `input` on `out`, flushing after each one.
    pub fn serve(&mut self, input: impl BufRead, mut out: impl Write) -> std::io::Result<StreamStats> {
        let mut stats = StreamStats::default();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let frame = stats.frames;
            stats.frames += 1;
            let start = Instant::now();
            let parsed: Result<InputLine, String> = serde_json::from_str(&line).map_err(|e| format!("bad frame: {e}"));
            let reply = parsed.and_then(|p| self.servo(&p.features).map(|s| (p.id, s)));
            let text = match &reply {
                Ok((id, servo)) => serde_json::to_string(&OutputLine {
                    frame,
                    id: id.as_ref(),
                    servo,
                }),
                Err(msg) => {
                    stats.errors += 1;
                    serde_json::to_string(&ErrorLine { frame, error: msg })
                }
            }
            .expect("serializable");
            let dt = start.elapsed().as_secs_f64();
            stats.total_s += dt;
            writeln!(out, "{text}")?;
            out.flush()?;
            debug!("frame {frame}: {:.3} ms", dt * 1e3);
        }
        Ok(stats)
    }
}

fn report(stats: StreamStats) {
    let mean = if stats.frames > 0 { stats.total_s / stats.frames as f64 } else { 0.0 };
    info!(
        "{} frames, {} rejected, mean latency {:.3} ms",
        stats.frames,
        stats.errors,
        mean * 1e3
    );
}

pub fn mimic(file: &FileConfig, a: MimicArgs) -> CliResult {
    if a.once && a.listen.is_none() {
        return Err(CliError::Argument("--once needs --listen".into()));
    }
    let layout = layout(file)?;
    let basis = basis(file)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let mut m = Mimicker::new(ck.model, layout, basis);
    let stdout = std::io::stdout();
    match &a.listen {
        None => {
            let stats = m
                .serve(std::io::stdin().lock(), stdout.lock())
                .map_err(|e| CliError::io("stream", e))?;
            report(stats);
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(|e| CliError::io(addr, e))?;
            let local = listener.local_addr().map_err(|e| CliError::io(addr, e))?;
            info!("listening on {local}");
            for conn in listener.incoming() {
                let conn = conn.map_err(|e| CliError::io(local, e))?;
                let peer = conn.peer_addr().map(|p| p.to_string()).unwrap_or_default();
                info!("connection from {peer}");
                match m.serve(BufReader::new(conn), stdout.lock()) {
                    Ok(stats) => report(stats),
                    Err(e) => log::warn!("connection {peer}: {e}"),
                }
                if a.once {
                    break;
                }
            }
        }
    }
    Ok(())
}
