#!/usr/bin/env python3
"""Runs every JSON-emitting falip subcommand on toy inputs and validates the
output against the schemas in schemas/.

usage: check_schemas.py FALIP_BINARY SCHEMA_DIR
"""

import json
import random
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def write_ppm(path, width, height, seed):
    rng = random.Random(seed)
    pixels = bytes(rng.randrange(256) for _ in range(width * height * 3))
    path.write_bytes(f"P6\n{width} {height}\n255\n".encode() + pixels)


def main():
    binary, schema_dir = sys.argv[1], Path(sys.argv[2])
    schemas = {p.stem.removesuffix(".schema"): json.loads(p.read_text()) for p in schema_dir.glob("*.schema.json")}
    for schema in schemas.values():
        jsonschema.Draft202012Validator.check_schema(schema)

    failures = 0

    def check(name, doc, label):
        nonlocal failures
        try:
            jsonschema.validate(doc, schemas[name])
            print(f"PASS {label}")
        except jsonschema.ValidationError as e:
            failures += 1
            print(f"FAIL {label}: {e.message}")

    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        write_ppm(d / "a.ppm", 48, 32, 1)
        (d / "negs.txt").write_text("a dog\na tree\n")
        (d / "rec.jsonl").write_text(
            json.dumps({"image": "a.ppm", "boxes": [[0, 0, 24, 16], [24, 16, 48, 32], [90, 90, 99, 99]],
                        "caption": "a cup", "negatives_file": "negs.txt"}) + "\n")
        (d / "cls.jsonl").write_text(json.dumps({"image": "a.ppm", "box": [0, 0, 24, 16], "classes": ["cat", "dog"]}) + "\n")
        (d / "cloud.xyz").write_text("0 0 0\n1 0 0\n0 1 1\n0.3 0.6 0.2\n")
        toy = ["--toy", "--image-side", "32", "--patch", "16"]

        def run(*args):
            subprocess.run([binary, *args], check=True, capture_output=True)

        run("mask", "--box", "0,0,40,30", "--image-side", "64", "--patch", "16", "-o", str(d / "m.ntf"))
        check("mask_sidecar", json.loads((d / "m.ntf.json").read_text()), "mask sidecar")
        run("mask", "--box", "0,0,40,30", "--insert-layers", "9-12", "--form", "c", "-o", str(d / "m2.ntf"))
        check("mask_sidecar", json.loads((d / "m2.ntf.json").read_text()), "mask sidecar with layers")

        run("encode", *toy, "--image", str(d / "a.ppm"), "--box", "0,0,24,16", "--text", "a cup",
            "--trace", str(d / "trace.json"), "-o", str(d / "enc.json"))
        check("encode", json.loads((d / "enc.json").read_text()), "encode")
        check("trace", json.loads((d / "trace.json").read_text()), "encode trace")
        run("encode", *toy, "--text", "a cup", "-o", str(d / "enc_text.json"))
        check("encode", json.loads((d / "enc_text.json").read_text()), "encode text only")

        run("rec", *toy, "--manifest", str(d / "rec.jsonl"), "-o", str(d / "rec.out"))
        for i, line in enumerate((d / "rec.out").read_text().splitlines()):
            check("rec", json.loads(line), f"rec row {i}")

        run("classify", *toy, "--manifest", str(d / "cls.jsonl"), "-o", str(d / "cls.out"))
        for i, line in enumerate((d / "cls.out").read_text().splitlines()):
            check("classify", json.loads(line), f"classify row {i}")

        run("pointcloud", *toy, "--cloud", str(d / "cloud.xyz"), "--classes", "chair,lamp", "-o", str(d / "pc.out"))
        check("classify", json.loads((d / "pc.out").read_text()), "pointcloud")

        run("unleash", *toy, "--image", str(d / "a.ppm"), "--box", "0,0,24,16", "--exact", "-o", str(d / "u.ntf"))
        check("unleash_sidecar", json.loads((d / "u.ntf.json").read_text()), "unleash sidecar")

    print(f"{failures} schema failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
