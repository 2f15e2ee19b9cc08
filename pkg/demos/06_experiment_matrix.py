"""Running a full encoder x generator experiment matrix.

One YAML config drives the whole pipeline — vocabulary, label index,
retrieval, captioning, evaluation — for every encoder/generator pair.
Each stage writes a content-addressed artifact with a digest stamp, so
re-running is a no-op unless inputs changed, and a deleted artifact is
rebuilt without touching the rest.  This demo uses mock providers, so
it completes in seconds and is byte-for-byte reproducible.
"""

import csv
import io
import tempfile
from pathlib import Path

import yaml
from PIL import Image

from vlcap.runner import render_comparison, run_matrix, validate_config

root = Path(tempfile.mkdtemp())
(root / "images").mkdir()

captions = [("t%d" % i, "كلب كبير يلعب في الحديقه مع ولد صغير") for i in range(4)]
with open(root / "captions.csv", "w", newline="", encoding="utf-8") as f:
    w = csv.writer(f)
    w.writerow(["image_id", "caption"])
    w.writerows(captions)
(root / "external.txt").write_text("قطار\nجسر\nبحر\n", encoding="utf-8")

rows = []
for i in range(4):
    buf = io.BytesIO()
    Image.new("RGB", (2, 2), (40 * i, 90, 120)).save(buf, format="PNG")
    path = root / "images" / f"img{i}.png"
    path.write_bytes(buf.getvalue())
    rows.append((f"img{i}", str(path)))
with open(root / "images.csv", "w", newline="", encoding="utf-8") as f:
    w = csv.writer(f)
    w.writerow(["image_id", "path"])
    w.writerows(rows)
with open(root / "references.csv", "w", newline="", encoding="utf-8") as f:
    w = csv.writer(f)
    w.writerow(["image_id", "reference"])
    w.writerows((i, "كلب في الحديقه") for i, _ in rows)

(root / "config.yaml").write_text(yaml.safe_dump({
    "images_manifest": "images.csv",
    "captions": "captions.csv",
    "external_labels": "external.txt",
    "references": "references.csv",
    "encoders": ["mock_a", "mock_b"],
    "generators": ["mock_gen"],
    "k": 5,
    "output_dir": "out",
    "cache_dir": "cache",
}), encoding="utf-8")

config = validate_config(root / "config.yaml")
manifest = run_matrix(config)
print(f"ran {len(manifest.configurations)} configurations\n")

from vlcap.evaluation import EvalReport

reports = [
    EvalReport.from_json(Path(entry["artifacts"]["report"]["path"]).read_text(encoding="utf-8"))
    for entry in manifest.configurations.values()
]
print(render_comparison(reports))
