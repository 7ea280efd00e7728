//! Calibrated synthetic work standing in for per-item inference.

use std::hint::black_box;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkMode {
    /// CPU-bound busy loop sized by a startup calibration.
    Spin,
    /// Plain sleep; timing-accurate on oversubscribed machines.
    Sleep,
}

impl std::str::FromStr for WorkMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "spin" => Ok(WorkMode::Spin),
            "sleep" => Ok(WorkMode::Sleep),
            other => Err(crate::Error::InvalidArgument(format!("bad work mode `{other}`"))),
        }
    }
}

const CHUNK: u64 = 4096;

fn kernel(iterations: u64, mut state: u64) -> u64 {
    for _ in 0..iterations {
        // xorshift64
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
    }
    state
}

#[derive(Debug, Clone, Copy)]
pub struct SyntheticWork {
    pub mode: WorkMode,
    /// Kernel iterations per second measured at calibration.
    pub iterations_per_sec: f64,
}

impl SyntheticWork {
    pub fn calibrate(mode: WorkMode) -> Self {
        let iterations_per_sec = match mode {
            WorkMode::Sleep => 0.0,
            WorkMode::Spin => {
                let window = Duration::from_millis(50);
                let start = Instant::now();
                let mut done = 0u64;
                let mut s = 0x9E37_79B9_7F4A_7C15;
                while start.elapsed() < window {
                    s = black_box(kernel(CHUNK, s));
                    done += CHUNK;
                }
                done as f64 / start.elapsed().as_secs_f64()
            }
        };
        Self { mode, iterations_per_sec }
    }

    /// Occupies the caller for roughly `seconds`.
    pub fn perform(&self, seconds: f64) {
        if seconds <= 0.0 {
            return;
        }
        match self.mode {
            WorkMode::Sleep => thread::sleep(Duration::from_secs_f64(seconds)),
            WorkMode::Spin => {
                let mut remaining = (seconds * self.iterations_per_sec) as u64;
                let mut s = 0x2545_F491_4F6C_DD1D;
                while remaining > 0 {
                    let n = remaining.min(CHUNK);
                    s = black_box(kernel(n, s));
                    remaining -= n;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sleep_mode_service_time() {
        let w = SyntheticWork::calibrate(WorkMode::Sleep);
        // 6 items at 53 items/sec -> 0.1132 s
        let t = Instant::now();
        w.perform(6.0 / 53.0);
        let got = t.elapsed().as_secs_f64();
        assert!((0.1132..0.1632).contains(&got), "took {got}");
    }

    #[test]
    fn spin_calibration_is_positive() {
        let w = SyntheticWork::calibrate(WorkMode::Spin);
        assert!(w.iterations_per_sec > 0.0);
        w.perform(0.001);
    }

    #[test]
    fn parse_modes() {
        assert_eq!("spin".parse::<WorkMode>().unwrap(), WorkMode::Spin);
        assert_eq!("sleep".parse::<WorkMode>().unwrap(), WorkMode::Sleep);
        assert!("nap".parse::<WorkMode>().is_err());
    }
}
