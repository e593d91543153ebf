"""BRIDGE benchmark toolkit: feature alignment, LODO harness and TCH-Net kernel."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("bridge-bench")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.0.0+unknown"
