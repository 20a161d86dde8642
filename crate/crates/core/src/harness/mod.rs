//! Configuration, experiment orchestration and file output.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{Config, Experiment};
pub use experiments::{run_experiment, RunReport};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "BDY_THREADS";

/// Builds the global thread pool from `BDY_THREADS` (hardware count when
/// unset) and returns the number of worker threads.
pub fn init_thread_pool() -> crate::Result<usize> {
    let requested = match std::env::var(THREADS_ENV) {
        Ok(s) => Some(s.trim().parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(|| {
            crate::Error::Config {
                key: THREADS_ENV.into(),
                reason: format!("expected a positive integer, got `{s}`"),
            }
        })?),
        Err(_) => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = requested {
        builder = builder.num_threads(n);
    }
    if let Err(e) = builder.build_global() {
        log::debug!("global thread pool already initialized: {e}");
    }
    Ok(rayon::current_num_threads())
}
