//! Keep freed activation buffers inside the process heap.
//!
//! A training step allocates and frees tensors of tens of megabytes. glibc
//! serves blocks that large with fresh `mmap` calls, so every batch pays page
//! faults on memory it released a moment earlier. Turning off `mmap` and
//! trimming lets the pages be reused instead.

use std::sync::Once;

/// Tune the allocator once per process. A no-op off glibc.
pub fn retain_heap() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        #[cfg(all(target_os = "linux", target_env = "gnu"))]
        // SAFETY: mallopt only adjusts allocator tunables and is safe to call at any time.
        unsafe {
            libc::mallopt(libc::M_MMAP_MAX, 0);
            libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
            libc::mallopt(libc::M_TOP_PAD, 64 << 20);
        }
    });
}
