"""Slot-wall scenario: write the map and config, then plan, check, profile and simulate.

Usage: python3 scripts/scenario_a.py [OUT_DIR]
"""

import json
import sys
from pathlib import Path

from omavtraj import cli
from omavtraj.config import write_map
from omavtraj.scenarios import scenario_a_config, slot_wall


def main(out: str = "out/scenario_a") -> int:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_map(slot_wall().points, out_dir / "map.csv")
    cfg = out_dir / "config.json"
    cfg.write_text(json.dumps(scenario_a_config("map.csv"), indent=1) + "\n")
    common = ["--config", str(cfg), "--out", str(out_dir)]
    for cmd in ("plan", "check", "profile", "simulate"):
        code = cli.main([cmd, *common])
        print(file=sys.stderr)
        if code != 0:
            print(f"{cmd} exited with {code}", file=sys.stderr)
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
