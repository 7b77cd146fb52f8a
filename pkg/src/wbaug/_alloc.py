"""Process-level allocator tuning for the pixel pipeline.

Augmenting a 12-megapixel image allocates ~3 GB of short-lived output and
scratch buffers. With glibc's defaults those go through mmap/munmap, so every
run re-faults every page; on hosts with slow demand paging (VMs, sandboxes)
fault service dominates the wall clock. Raising the mmap threshold keeps the
blocks on the heap, where freed pages stay resident and are reused.

Applied by the CLI and the service at startup; importing the library does
not touch global allocator state.
"""

from __future__ import annotations

import ctypes

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3

_applied = False


def tune_for_large_buffers() -> bool:
    """Keep large freed blocks on the heap. Returns True if applied."""
    global _applied
    if _applied:
        return True
    try:
        libc = ctypes.CDLL("libc.so.6")
        ok = libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30) == 1
        ok = libc.mallopt(_M_TRIM_THRESHOLD, -1) == 1 and ok
    except (OSError, AttributeError):
        return False
    _applied = bool(ok)
    return _applied


def release_free_heap() -> None:
    """Hand the allocator's free heap pages back to the OS (best effort)."""
    try:
        ctypes.CDLL("libc.so.6").malloc_trim(0)
    except (OSError, AttributeError):
        pass
