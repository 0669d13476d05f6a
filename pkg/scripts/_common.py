"""Shared bits for the experiment scripts."""

import argparse
from pathlib import Path

CONFIGS = Path(__file__).resolve().parent / "configs"


def parser(description: str, config: str, out: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", type=Path, default=CONFIGS / config)
    p.add_argument("--out", type=Path, default=Path("results") / out)
    return p
