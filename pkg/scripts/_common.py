import argparse
from pathlib import Path

from tvchan.channel import desk_config, paper_config


def base_parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--paths", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results"))
    return p


def preset(name: str):
    return paper_config() if name == "paper" else desk_config()
