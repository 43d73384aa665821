"""
The two-stage command-line workflow
===================================

``windgain synth`` writes a synthetic farm together with a ready analysis
config; ``period1`` records its choices in a manifest; ``period2`` reads the
manifest and writes the gain report.  Here the same entry point is called
in-process.
"""

import json
import os
import tempfile

import pandas as pd

from windgain import cli

work = tempfile.mkdtemp(prefix="windgain-demo-")
scenario = os.path.join(work, "scenario.json")
with open(scenario, "w") as fh:
    json.dump({"seed": 4, "n_p1": 400, "n_p2": 400, "upgrade_gamma": 1.05,
               "output_dir": "farm"}, fh)

config = os.path.join(work, "farm", "analysis.json")
for argv in (["synth", "--config", scenario],
             ["period1", "--config", config],
             ["period2", "--config", config]):
    print("$ windgain", " ".join(argv))
    assert cli.main(argv) == 0

results = os.path.join(work, "farm", "results")
with open(os.path.join(results, "manifest.json")) as fh:
    print("\nmanifest:", json.dumps(json.load(fh), indent=1))

curves = pd.read_csv(os.path.join(results, "period2", "gain_curves.csv"))
print(curves.head(8).to_string(index=False))
print("\nartifacts under", results)
for d, _, files in sorted(os.walk(results)):
    for f in sorted(files):
        print("  ", os.path.relpath(os.path.join(d, f), results))
