#!/usr/bin/env python3
"""
ModalFit: K-modal density fitting by dynamic programming.

    python main.py fit data/faithful_waiting.csv --k 2 --m 10 --multigrid-l 15 --fitter grenander_mle
    python main.py select data/faithful_waiting.csv --method cross_validation
    python main.py simulate --kind laplace --replicates 20 --n 2000 --out results/laplace.json
    python main.py eval results/fit.json --points 55,70,80
"""

import sys

from src.commands import run


def main():
    """Main application entry point"""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
