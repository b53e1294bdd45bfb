"""
End-to-end command line pipeline
================================

Writes a small experiment config and drives every subcommand of the
``apriori-lab`` entry point against it, in a temporary directory.
"""
import tempfile
from pathlib import Path

from apriori_lab.cli import main

CONFIG = """\
[simulation]
system = qg
n = 32
t_end = 0.2
dt = 0.01
stride = 2
norms = 0:2, 0:4, 3:2
besov = true

[calibration]
trials = 4
seed = 3

[check]
theorems = 1.4upper, 1.4lower
c0 = calibrated
gamma_factor = 2

[output]
dir = {out}
"""

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "run"
    cfg = Path(tmp) / "experiment.cfg"
    cfg.write_text(CONFIG.format(out=out))
    for command in ("simulate", "calibrate", "check", "sweep", "plot"):
        code = main([command, "--config", str(cfg), "--strict"])
        print(f"-- {command}: exit {code}")
    print(sorted(p.name for p in out.iterdir()))
