"""Allow running as `python -m bridge_bench`."""

from bridge_bench.cli import main

main()
