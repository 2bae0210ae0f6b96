#!/usr/bin/python3
"""
Run the toolkit as a package:

    python3 -m lar_spacing path --design x.csv --response y.csv --steps 5
    python3 -m lar_spacing simulate --config experiment.json --out results/

Everything is handled by cli.main(); see `cli.py` for the subcommands and
exit codes.
"""

from __future__ import annotations

from .cli import main


if __name__ == "__main__":
    main()
