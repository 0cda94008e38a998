//! Minibatch scheduling shared by every trainer.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use crate::error::{Divergence, Error, Result};
use crate::nn::TrainConfig;
use crate::rng::{seeded, Stream};
use crate::trace::InvocationTrace;

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct Trained<N> {
    pub net: N,
    pub trace: InvocationTrace,
    pub iterations: usize,
    pub train_time: Duration,
}

/// Running means of the two losses within an epoch.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct EpochLosses {
    sum_a: f64,
    sum_p: f64,
    n: usize,
}

impl EpochLosses {
    pub fn add(&mut self, a: f64, p: f64) {
        self.sum_a += a;
        self.sum_p += p;
        self.n += 1;
    }

    pub fn take(&mut self) -> (f64, f64) {
        let n = self.n.max(1) as f64;
        let out = (self.sum_a / n, self.sum_p / n);
        *self = Self::default();
        out
    }
}

/// One trainer's per-batch and per-epoch hooks.
pub(crate) trait Session {
    fn step(&mut self, batch: &[usize]) -> Result<()>;
    fn epoch_end(&mut self, epoch: usize, iteration: usize, trace: &mut InvocationTrace) -> Result<()>;
}

/// Runs `cfg.max_iterations` minibatch steps over `indices`, reshuffled every
/// epoch. `Session::epoch_end` fires after each full pass and after
/// the final (possibly partial) one.
///
/// A non-finite failure inside either hook is converted to [`Error::Diverged`]
/// carrying whatever `trace` holds at that point.
pub(crate) fn run_schedule(
    phase: &str,
    indices: &[usize],
    cfg: &TrainConfig,
    stream_salt: u64,
    trace: &mut InvocationTrace,
    session: &mut impl Session,
) -> Result<usize> {
    cfg.validate()?;
    if indices.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut rng = seeded(cfg.seed ^ stream_salt.wrapping_mul(0x9E37_79B9_7F4A_7C15), Stream::Shuffle);
    let mut order = indices.to_vec();
    let mut epoch = 0;
    let mut iteration = 0;
    let mut last_stable = None;
    while iteration < cfg.max_iterations {
        order.shuffle(&mut rng);
        let mut ended_early = false;
        for batch in order.chunks(cfg.batch_size) {
            if iteration == cfg.max_iterations {
                ended_early = true;
                break;
            }
            if let Err(e) = session.step(batch) {
                return Err(diverged(phase, iteration, last_stable, e, trace));
            }
            iteration += 1;
        }
        if let Err(e) = session.epoch_end(epoch, iteration, trace) {
            return Err(diverged(phase, iteration, last_stable, e, trace));
        }
        last_stable = Some(epoch);
        epoch += 1;
        if ended_early {
            break;
        }
    }
    Ok(iteration)
}

fn diverged(phase: &str, iteration: usize, last_stable: Option<usize>, e: Error, trace: &InvocationTrace) -> Error {
    if !e.is_numerical() {
        return e;
    }
    if let Error::Diverged(_) = e {
        return e;
    }
    Error::Diverged(Box::new(Divergence {
        phase: phase.to_owned(),
        iteration,
        last_stable_epoch: last_stable,
        cause: e.to_string(),
        trace: trace.points.clone(),
    }))
}

/// CPU time consumed by the calling thread. Trainers are single-threaded,
/// so this excludes work done by other cells running concurrently.
pub(crate) struct Stopwatch {
    cpu_start: Option<Duration>,
    wall_start: Instant,
}

fn thread_cpu_time() -> Option<Duration> {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    (rc == 0).then(|| Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32))
}

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch {
            cpu_start: thread_cpu_time(),
            wall_start: Instant::now(),
        }
    }

    /// Falls back to wall time where thread CPU clocks are unavailable.
    pub fn elapsed(&self) -> Duration {
        match (self.cpu_start, thread_cpu_time()) {
            (Some(a), Some(b)) => b.saturating_sub(a),
            _ => self.wall_start.elapsed(),
        }
    }
}

/// Indices scored when recording a trace point.
pub(crate) fn trace_subset(indices: &[usize], cfg: &TrainConfig) -> Vec<usize> {
    indices.iter().copied().take(cfg.trace_samples).collect()
}
