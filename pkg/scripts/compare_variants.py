"""Adversarial-start comparison of the continuous, hybrid and
identifier-augmented observers.

Writes the ranking table (``compare.csv``) and one trajectory directory per
variant with the speed, position and flux estimates against the truth.
"""

import sys
from dataclasses import replace

from _common import parser

from hybrid_pmsm import cli
from hybrid_pmsm.config import ConfigError, load_scenario


def main() -> int:
    args = parser(__doc__, "adversarial_start.toml", "comparison").parse_args()
    try:
        sc = load_scenario(args.config)
    except ConfigError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return cli.EXIT_INVALID
    args.out.mkdir(parents=True, exist_ok=True)
    code = cli.cmd_compare(sc, args.out)
    for v in sc.run.variants:
        sub = args.out / v.replace("+", "_")
        sub.mkdir(exist_ok=True)
        code = max(code, cli.cmd_run(replace(sc, run=replace(sc.run, variant=v)), sub))
    return code


if __name__ == "__main__":
    sys.exit(main())
