"""
Dataset files and the command line
==================================

Datasets are JSON lines: a metadata line followed by one observation per
line.  The ``cmm`` command reads a JSON or YAML config; here it is driven
in-process through ``cmm.cli.main``.
"""

# %%
import json
import tempfile
from pathlib import Path

from cmm.cli import main
from cmm.io import read_dataset

work = Path(tempfile.mkdtemp())
(work / "sim.yaml").write_text("scenario:\n  name: GoodSep\n  inliers: 60\nseed: 4\n")
main(["simulate", "--config", str(work / "sim.yaml"), "--out", str(work / "scene.jsonl")])
print((work / "scene.jsonl").read_text().splitlines()[1])

# %%
obs, labels, meta = read_dataset(work / "scene.jsonl")
print(obs.M, obs.K, meta["scenario"]["name"])

# %%
(work / "fit.yaml").write_text("dataset: scene.jsonl\nn: 3\nsearch:\n  variant: IAAA\n")
code = main(["fit", "--config", str(work / "fit.yaml"), "--out", str(work / "fit.json")])
report = json.loads((work / "fit.json").read_text())
print("exit code", code, "positions", report["params"]["positions"])
