"""Phase portrait of the reduced error dynamics, flow and hybrid, plus the
separatrix through the saddle. Writes ``portrait.csv`` for plotting."""

import sys

from _common import parser

from hybrid_pmsm import cli


def main() -> int:
    args = parser(__doc__, "portrait.toml", "portrait").parse_args()
    return cli.main(["portrait", "--config", str(args.config), "--out", str(args.out)])


if __name__ == "__main__":
    sys.exit(main())
