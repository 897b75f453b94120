"""Command-line surface: encode, infer, verify, bench, stats.

Exit codes: 0 success, 1 I/O or verification failure, 2 malformed input
(file formats, encodings), 3 shape/composition mismatch.  All subcommands
are deterministic under fixed --seed and --threads; json output is one
schema-tagged object per line with sorted keys.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import bench, images, model, modelfile, tensorio, verify
from .encoding import ThermometerConfig, make_encoder
from .errors import EncodingError, FormatError, ShapeError

EXIT_OK = 0
EXIT_IO = 1
EXIT_FORMAT = 2
EXIT_SHAPE = 3


def _jline(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _resolve_threads(value: int | None) -> int:
    if value is None:
        value = int(os.environ.get("FRACBNN_THREADS", "1"))
    if value < 1:
        raise ShapeError(f"thread count must be >= 1, got {value}")
    return value


def cmd_encode(args) -> int:
    img = images.read_ppm_file(args.image)
    cfg = ThermometerConfig(args.resolution)
    plane = make_encoder(args.encoder, cfg)(img)
    tensorio.save_plane_file(plane, args.out)
    info = {
        "schema": "fracbnn.encode/1",
        "encoder": args.encoder,
        "resolution": args.resolution,
        "channels": plane.channels,
        "height": plane.height,
        "width": plane.width,
        "out": str(args.out),
    }
    if args.json:
        print(_jline(info))
    else:
        print(f"encoded {args.image} -> {args.out} "
              f"({plane.channels}x{plane.height}x{plane.width} packed plane)")
    return EXIT_OK


def cmd_infer(args) -> int:
    threads = _resolve_threads(args.threads)
    loaded = modelfile.load_file(args.model)
    img = images.read_ppm_file(args.image)
    result = model.forward(loaded, img, threads=threads)
    if args.json:
        print(_jline({
            "schema": "fracbnn.infer/1",
            "class": result.predicted_class,
            "logits": [int(v) for v in result.logits],
            "stats": result.stats.to_dict(),
        }))
    else:
        stats = result.stats
        print(f"class: {result.predicted_class}")
        print("logits (Q16.16 raw):", " ".join(str(int(v)) for v in result.logits))
        print(f"effective bitwidth: {stats.effective_bitwidth:.4f}")
        print(f"mean update sparsity: {stats.mean_sparsity:.4f}")
        print(f"saturations: {stats.saturations}")
        for s in stats.layers:
            if s.sparsity is not None:
                print(f"  {s.name}: sparsity {s.sparsity:.4f} "
                      f"update_bmacs {s.update_bmacs_done}/{s.update_bmacs_max}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.cases == 0:
        print("warning: --cases 0 requested; nothing checked, trivially passing")
        return EXIT_OK
    report = verify.run_all(seed=args.seed, cases=args.cases)
    for line in report.lines():
        print(_jline({"schema": "fracbnn.verify/1", "line": line}) if args.json else line)
    if not report.ok:
        print("verification FAILED")
        return EXIT_IO
    print(f"all checks passed ({args.cases} cases per kernel)")
    return EXIT_OK


def cmd_stats(args) -> int:
    if args.model:
        spec = modelfile.load_file(args.model).spec
    else:
        spec = model.build_fracbnn_resnet20(args.resolution, args.classes)
    counts = model.count_ops(spec)
    payload = {
        "schema": "fracbnn.stats/1",
        "params_binary": counts.params_bits,
        "params_classifier_bits": counts.params_classifier_bits,
        "bmacs_input": counts.bmacs_input,
        "bmacs_base": counts.bmacs_base,
        "bmacs_update_max": counts.bmacs_update_max,
        "imacs": counts.imacs,
        "total_bmacs_at_sparsity": {
            str(s): int(counts.total_bmacs(s)) for s in (1.0, args.sparsity, 0.0)
        },
    }
    if args.json:
        print(_jline(payload))
    else:
        print(f"binary weight parameters: {counts.params_bits} "
              f"({counts.params_bits / 1e6:.3f}M, 1 bit each)")
        print(f"classifier parameter bits: {counts.params_classifier_bits}")
        print(f"input layer BMACs: {counts.bmacs_input} ({counts.bmacs_input / 1e6:.2f}M)")
        print(f"gated conv base BMACs: {counts.bmacs_base} ({counts.bmacs_base / 1e6:.2f}M)")
        print(f"gated conv update BMACs (all gates open): {counts.bmacs_update_max} "
              f"({counts.bmacs_update_max / 1e6:.2f}M)")
        print(f"classifier IMACs: {counts.imacs}")
        for s in (1.0, args.sparsity, 0.0):
            print(f"total BMACs at update sparsity {s:.2f}: "
                  f"{counts.total_bmacs(s) / 1e6:.2f}M")
    return EXIT_OK


def cmd_bench(args) -> int:
    threads = _resolve_threads(args.threads)
    if args.model:
        loaded = modelfile.load_file(args.model)
    else:
        loaded = modelfile.generate_synthetic(args.seed)
    report = bench.run(loaded, iterations=args.iters, threads=threads,
                       image_seed=args.seed)
    if args.json:
        print(_jline(report.to_dict()))
    else:
        for lane in report.lanes:
            print(f"{lane.name}: {lane.images_per_second:.2f} images/s "
                  f"({lane.seconds_per_image * 1e3:.3f} ms/image, "
                  f"{lane.iterations} iterations)")
            if args.layers:
                for name, secs in lane.layer_seconds:
                    print(f"    {name}: {secs * 1e6:.1f} us")
        print(f"packed engine vs oracle speedup: {report.speedup_vs_oracle:.2f}x")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracbnn",
                                description="binary network inference engine")
    sub = p.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="encode a PPM image to a packed plane")
    enc.add_argument("--image", required=True)
    enc.add_argument("--resolution", type=int, default=8)
    enc.add_argument("--encoder", default="thermometer",
                     choices=("thermometer", "bitplane", "rgb_sign"))
    enc.add_argument("--out", required=True)
    enc.add_argument("--json", action="store_true")
    enc.set_defaults(fn=cmd_encode)

    inf = sub.add_parser("infer", help="classify a PPM image with a model")
    inf.add_argument("--model", required=True)
    inf.add_argument("--image", required=True)
    inf.add_argument("--threads", type=int, default=None)
    inf.add_argument("--json", action="store_true")
    inf.set_defaults(fn=cmd_infer)

    ver = sub.add_parser("verify", help="run the engine-vs-oracle equivalence suite")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--cases", type=int, default=100)
    ver.add_argument("--json", action="store_true")
    ver.set_defaults(fn=cmd_verify)

    st = sub.add_parser("stats", help="static op and parameter accounting")
    st.add_argument("--model")
    st.add_argument("--resolution", type=int, default=8)
    st.add_argument("--classes", type=int, default=10)
    st.add_argument("--sparsity", type=float, default=0.6)
    st.add_argument("--json", action="store_true")
    st.set_defaults(fn=cmd_stats)

    be = sub.add_parser("bench", help="throughput: packed backends vs dense oracle")
    be.add_argument("--model")
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--iters", type=int, default=10)
    be.add_argument("--threads", type=int, default=None)
    be.add_argument("--layers", action="store_true", help="print per-layer times")
    be.add_argument("--json", action="store_true")
    be.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FormatError, EncodingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
