"""Write the built-in scenarios to scenarios/*.json."""

import argparse
from pathlib import Path

from perchgen import scenarios
from perchgen.serialization import save_scenario

BUILTIN = {
    "stationary": scenarios.stationary,
    "vertical_climb": scenarios.vertical_climb,
    "perching_80": lambda: scenarios.perching_80(True),
    "perching_180": scenarios.perching_180,
    "dash": scenarios.dash,
    "adversarial_gap": scenarios.adversarial_gap,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "scenarios"))
    ap.add_argument("names", nargs="*", default=sorted(BUILTIN))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.names:
        path = out / f"{name}.json"
        save_scenario(BUILTIN[name](), path)
        print(path)


if __name__ == "__main__":
    main()
