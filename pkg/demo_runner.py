#!/usr/bin/env python3
"""
demo_runner.py - End-to-end demo of the development cycle
Usage: python3 demo_runner.py [--keep]

Runs the bottom-up path (assemble, explore, validate, cluster, ground) and the
top-down path (task and mission solving) twice in throwaway projects and checks
that both runs produce identical artifacts.
"""

import argparse
import json
import shutil
import sys
import tempfile
from pathlib import Path

from capcycle.cli import main as capcycle
from capcycle.project import Project

ARM_TARGET = ["--target", "end=0.1,0.3,0.2", "--target", "start=0,0,0"]
ARM_PART = "Arm-reach:end=0.1,0.3,0.2;start=0,0,0"
CART_PART = "Cart-reach-unconstrained:end=-1,1,0;start=0,0,0,0,0,0,0"

DEMO = [
    ["assemble", "--fixture", "arm", "--robot", "Arm"],
    ["assemble", "--fixture", "cart", "--robot", "Cart"],
    ["assemble", "--fixture", "shopping-cart", "--robot", "NewShoppingCart"],
    ["explore", "--robot", "Arm", "--samples", "600", "--seed", "7"],
    ["train-validator", "--robot", "Arm", "--seed", "7", "--epochs", "20"],
    ["cluster", "--robot", "Arm", "--seed", "7", "--ks", "8,8,3"],
    ["core", "create", "--robot", "Arm", "--bm", "reach", "--particles", "32", "--iterations", "60"],
    ["core", "create", "--robot", "Arm", "--bm", "reach-unconstrained", "--particles", "32", "--iterations", "60"],
    ["core", "sample", "--core", "Arm-reach", "--seed", "1", *ARM_TARGET],
    ["core", "annotate", "--core", "Arm-reach", "--add-label", "reach-planar"],
    ["explore", "--robot", "Cart", "--samples", "150", "--seed", "7", "--horizon", "20"],
    ["cluster", "--robot", "Cart", "--seed", "7", "--ks", "4,4,2"],
    ["core", "create", "--robot", "Cart", "--bm", "reach-unconstrained", "--particles", "32", "--iterations", "60"],
    ["core", "parallel", "--robot", "NewShoppingCart", "--part", ARM_PART, "--part", CART_PART],
    ["report", "--robot", "Arm", *ARM_TARGET, "--samples", "5", "--seed", "0"],
    ["solve-task", "--labels", "move"],
]

MISSIONS = {
    "reach.yaml": ["reach"],
    "reach-grasp.yaml": ["reach", "grasp"],
}


def run_demo(root):
    """Run every demo command in a fresh project; return artifact hashes."""
    print(f" Running demo in '{root}'...")
    for argv in DEMO:
        print(f"   capcycle {' '.join(argv)}")
        status = capcycle(["--project", str(root), *argv])
        if status != 0:
            raise RuntimeError(f"'{' '.join(argv)}' exited with {status}")

    for name, tasks in MISSIONS.items():
        mission = root / name
        mission.write_text(json.dumps({"mission": tasks}))
        status = capcycle(["--project", str(root), "mission", "solve", str(mission)])
        print(f"   mission {tasks}: exit {status}")

    project = Project(root)
    artifacts = [p for p in root.iterdir() if p.name not in ("manifests.jsonl", *MISSIONS)]
    return project.hashes(artifacts)


def compare(first, second):
    differing = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
    if differing:
        print(f"\n {len(differing)} artifacts differ between runs:")
        for key in differing:
            print(f"   {key}")
        return False
    print(f"\n All {len(first)} artifacts are identical across runs.")
    return True


def cleanup(paths):
    print("\n Cleaning up temporary projects...")
    for path in paths:
        shutil.rmtree(path, ignore_errors=True)
    print(" Cleanup complete.")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--keep", action="store_true", help="keep the demo projects")
    args = parser.parse_args()

    roots = [Path(tempfile.mkdtemp(prefix=f"capcycle-demo-{i}-")) for i in range(2)]
    try:
        hashes = [run_demo(root) for root in roots]
        ok = compare(*hashes)
        summary = json.loads((roots[0] / "reports" / "summary.json").read_text())
        print("\n" + "=" * 20 + " REPORT SUMMARY " + "=" * 20)
        print(json.dumps(summary, indent=2, sort_keys=True))
        print("=" * 56)
    except Exception as e:
        print(f"\n Demo failed: {e}")
        ok = False
    finally:
        if not args.keep:
            cleanup(roots)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
