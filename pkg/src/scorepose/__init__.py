"""Score-guided two-stage pose optimization over synthetic energy landscapes."""

__version__ = "0.1.0"
