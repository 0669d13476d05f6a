"""Semiglobal practical stability sweep: fast and slow bounds for a seeded
draw of starts while eps shrinks. Writes ``sweep.csv``."""

import sys

from _common import parser

from hybrid_pmsm import cli


def main() -> int:
    p = parser(__doc__, "sweep.toml", "sweep")
    p.add_argument("--seed", type=int, default=None)
    args = p.parse_args()
    argv = ["sweep", "--config", str(args.config), "--out", str(args.out)]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    return cli.main(argv)


if __name__ == "__main__":
    sys.exit(main())
