//! Order-preserving parallel map used by the E-steps and the aligner.
//!
//! Work is split into fixed-size chunks; each chunk is mapped in parallel and
//! its results are consumed in input order. Anything accumulated by the consumer
//! therefore sees exactly the serial order, independent of the worker count.

const CHUNK: usize = 512;

/// Maps `items` with `map` and feeds every result, in input order, to `consume`.
pub(crate) fn map_in_order<T, R, E, M, C>(items: &[T], map: M, mut consume: C) -> Result<(), E>
where
    T: Sync,
    R: Send,
    E: Send,
    M: Fn(&T) -> Result<R, E> + Sync + Send,
    C: FnMut(R),
{
    for chunk in items.chunks(CHUNK) {
        for result in map_chunk(chunk, &map) {
            consume(result?);
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn map_chunk<T, R, E, M>(chunk: &[T], map: &M) -> Vec<Result<R, E>>
where
    T: Sync,
    R: Send,
    E: Send,
    M: Fn(&T) -> Result<R, E> + Sync + Send,
{
    use rayon::prelude::*;
    chunk.par_iter().map(map).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_chunk<T, R, E, M>(chunk: &[T], map: &M) -> Vec<Result<R, E>>
where
    M: Fn(&T) -> Result<R, E>,
{
    chunk.iter().map(map).collect()
}

/// Caps the global worker pool at `threads` (0 = one per core). Only the
/// first call has an effect; returns false if the pool was already set up.
#[cfg(feature = "parallel")]
pub fn init_threads(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn init_threads(_threads: usize) -> bool {
    false
}

/// Runs `f` on a dedicated pool of `threads` workers.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}
