"""
Building a balanced a-priori database
=====================================

Matched samples are labelled with a merged phase, split by land surface
(snow covered or not) and atmospheric class, and reservoir-sampled so that
each land class holds half clear-sky and half precipitating records with
the three phases in equal shares.
"""

import tempfile
from pathlib import Path

from nestknn import PhaseLabel, build_balanced_database, load_database, persist_database, synthetic
from nestknn.database import database_bytes, merge_ref_phase
from nestknn.formats import checksum64

###############################################################################
# The merged phase label: agreement gives a pure phase, anything else is mixed

for active in PhaseLabel:
    row = {prob: merge_ref_phase(active, prob).name for prob in (0.2, 0.8)}
    print(f"active {active.name:<7} passive 0.2 -> {row[0.2]:<7} passive 0.8 -> {row[0.8]}")

###############################################################################
# A synthetic archive of 8 classes x 3000 samples

scenario = synthetic.scenario_separable(6.0, 3000, seed=1, n_holdout=0)
db = build_balanced_database(scenario.build, 4000, seed=2)
for (land, atm), n in sorted(db.stratum_counts().items()):
    print(f"{land.name:<13} {atm.name:<10} {n}")

###############################################################################
# The same seed and input order always give the same bytes

again = build_balanced_database(scenario.build, 4000, seed=2)
print("checksum", hex(checksum64(database_bytes(db))), "repeat equal:",
      database_bytes(db) == database_bytes(again))

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "db.apdb"
    persist_database(db, path)
    loaded = load_database(path)
    print(f"{path.stat().st_size} bytes on disk, round trip equal:",
          database_bytes(loaded) == database_bytes(db))

###############################################################################
# Asking for more than an under-populated stratum holds is an error

try:
    build_balanced_database(scenario.build, 8000, seed=2)
except Exception as exc:
    print(type(exc).__name__, exc)
