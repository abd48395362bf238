"""Scaling benchmark on random box fields; prints per-M mean time per piece-iteration.

Usage: python3 scripts/bench.py [OUT_DIR] [M_LIST] [REPS]
"""

import sys

from omavtraj import cli


def main(out: str = "out/bench", m_list: str = "5,10,20,40", reps: str = "10") -> int:
    return cli.main(["bench", "--out", out, "--m-list", m_list, "--reps", reps])


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
