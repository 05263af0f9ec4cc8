"""Driving the batch front end.

Writes a JSON configuration, then runs each subcommand the way a shell
would and lists the artifacts.  The last call uses a metric that violates
the obstruction and exits with status 4.
"""

import json
import os
import tempfile

from inoue_flow.cli import main

with tempfile.TemporaryDirectory() as tmp:
    cfg = os.path.join(tmp, "run.json")
    with open(cfg, "w") as fh:
        json.dump({"family": "SM", "n_torus": 8, "n_y2": 9, "t_end": 1.0, "dt": 5e-3,
                   "metric": {"recipe": "tv_plus_potential", "amplitude": 0.05}}, fh)
    for cmd in ("surface", "check-gauduchon", "solve-slf", "flow"):
        code = main([cmd, "--config", cfg, "--out", os.path.join(tmp, cmd), "--seed", "3"])
        print(f"{cmd:<16} exit {code}  ->", sorted(os.listdir(os.path.join(tmp, cmd))))

    with open(cfg, "w") as fh:
        json.dump({"n_torus": 8, "n_y2": 9, "metric": {"recipe": "nonconstant_r"}}, fh)
    code = main(["solve-slf", "--config", cfg, "--out", os.path.join(tmp, "bad")])
    print(f"{'solve-slf (bad)':<16} exit {code}")
