"""Zero-delay source-channel mappings for links with low-resolution ADCs."""
__version__ = "0.1.0"
