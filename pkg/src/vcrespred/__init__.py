"""TV-based DCT coefficient restoration and residual prediction codec testbed."""

__version__ = "0.1.0"
