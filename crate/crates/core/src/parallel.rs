use rayon::prelude::*;

use crate::error::{Error, Result};

/// Maps `f` over `items`, preserving input order in the output.
///
/// `threads == 1` runs inline; `0` uses rayon's default pool size.
pub(crate) fn ordered_map<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if threads == 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}
