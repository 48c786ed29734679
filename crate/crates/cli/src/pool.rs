//! Tiny index-stealing worker pool for embarrassingly parallel per-image
//! work (bench, sampling). `CKMFORGE_THREADS` caps the pool size.

use std::sync::atomic::{AtomicUsize, Ordering};

pub fn thread_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("CKMFORGE_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n > 0).unwrap_or(available),
        Err(_) => available,
    }
    .min(64)
}

/// Applies `f` to every item, spreading work over the pool; result order
/// matches input order.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let workers = thread_count().min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<U>> = (0..items.len()).map(|_| None).collect();
    let slots_ptr = slots.as_mut_ptr() as usize;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(&items[i]);
                // each index is claimed exactly once, so the write is exclusive
                unsafe {
                    let base = slots_ptr as *mut Option<U>;
                    *base.add(i) = Some(out);
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every index visited")).collect()
}
