"""Command line walk-through: simulate a panel, fit, forecast, score.

Every step shells out to the installed ``pdfmidas`` entry point so the
files written here are exactly what a user would get.

    python notebooks/cli_round_trip.py [workdir]
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path


def run(*args, cwd):
    print("$ pdfmidas", " ".join(args))
    out = subprocess.run([sys.executable, "-m", "pdfmidas", *args], cwd=cwd, check=True,
                         capture_output=True, text=True).stdout
    print(out.rstrip() + "\n")


work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="pdfmidas-"))
work.mkdir(parents=True, exist_ok=True)
(work / "sim.toml").write_text("""seed = 3
[simulate]
variant = "univariate"
T = 60
M = 200
R = 1
p = 3
holdout = 3
""")
(work / "ave.toml").write_text('[model]\nkind = "ave"\n')

# One replication of raw samples; the last three target periods are held out.
run("simulate", "--config", "sim.toml", "--out", "sim", "--emit-panel", cwd=work)
design = json.loads((work / "sim" / "design.json").read_text())
print("held-out target times:", design["holdout_times"], "\n")

# fit.toml describes the model that generated the panel.
run("fit", "--config", "sim/fit.toml", "--out", "midas", "sim/panel.csv", cwd=work)
run("fit", "--config", "ave.toml", "--out", "ave", "sim/panel.csv", cwd=work)

for at in design["holdout_times"]:
    for name in ("midas", "ave"):
        run("predict", f"{name}/model.json", "sim/panel.csv", "--at", at,
            "--truth", "sim/exact.csv", "--out", f"{name}/{at.replace('/', '_')}", cwd=work)

print("outputs under", work)
