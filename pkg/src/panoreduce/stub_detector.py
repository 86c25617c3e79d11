"""Reference child process for the external detector protocol.

Reads one JSON request per line on stdin and answers one JSON line on stdout.
By default it echoes a fixed box; with ``--truth`` it answers from a scene
truth file exactly like the in-process oracle. ``--delay`` emulates model
latency, ``--exit-after`` crashes after N requests (for fault testing).

    python -m panoreduce.stub_detector --box 10 20 50 60 --class face --score 0.9
"""

import argparse
import json
import sys
import time

import numpy as np

from .detection import OracleDetector


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="panoreduce.stub_detector")
    parser.add_argument("--box", type=float, nargs=4, metavar=("X0", "Y0", "X1", "Y1"))
    parser.add_argument("--class", dest="cls", default="face", choices=("face", "plate"))
    parser.add_argument("--score", type=float, default=0.9)
    parser.add_argument("--truth", help="scene truth JSON; answer with oracle detections")
    parser.add_argument("--delay", type=float, default=0.0, help="seconds to sleep per request")
    parser.add_argument("--exit-after", type=int, default=None)
    args = parser.parse_args(argv)

    oracle = None
    if args.truth:
        with open(args.truth, encoding="utf-8") as f:
            oracle = OracleDetector.from_truth(json.load(f))

    served = 0
    for line in sys.stdin:
        if args.exit_after is not None and served >= args.exit_after:
            return 3
        req = json.loads(line)
        if args.delay:
            time.sleep(args.delay)
        if oracle is not None:
            shape = (req["height"], req["width"], 0)
            dets = [d.to_json() for d in oracle.detect(np.empty(shape), req["origin"])]
        elif args.box:
            dets = [{"class": args.cls, "box": args.box, "score": args.score}]
        else:
            dets = []
        sys.stdout.write(json.dumps({"detections": dets}) + "\n")
        sys.stdout.flush()
        served += 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
