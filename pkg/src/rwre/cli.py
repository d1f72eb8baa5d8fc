"""Command line: ``rwre <kind> --config <path> [--out <dir>] [--threads <n>] [--seed <u64>]``.

``rwre report <dir>`` writes the summary bundle for a finished run.
Exit status 0 on success, 2 for configuration errors, 3 for runtime errors;
errors are printed to stderr as ``{code, module, message, context}``.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import KINDS, load_config
from .errors import ConfigInvalid, MissingManifest, RWREError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="rwre", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind)
        s.add_argument("--config", required=True)
        s.add_argument("--out")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--seed", type=int)
    r = sub.add_parser("report")
    r.add_argument("run_dir")
    return p


def _error(err, stream=None):
    (stream or sys.stderr).write(json.dumps(err, sort_keys=True) + "\n")


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.kind == "report":
            from .report import emit_report

            bundle = emit_report(args.run_dir)
            print(bundle.summary)
            return EXIT_OK
        cfg = load_config(args.config, args.kind)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigInvalid("--seed", "must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigInvalid("--threads", "must be at least 1")
        from .runner import resolve_out_dir, run_experiment

        man = run_experiment(cfg, args.out, args.threads)
        print(json.dumps({"out": str(resolve_out_dir(cfg, args.out)), "config_hash": man.config_hash,
                          "files": sorted(man.files)}))
        return EXIT_OK
    except (ConfigInvalid, MissingManifest) as exc:
        _error(exc.to_dict())
        return EXIT_CONFIG
    except RWREError as exc:
        _error(exc.to_dict())
        return EXIT_RUNTIME
    except Exception as exc:  # surfaced as machine-readable JSON as well
        _error({"code": "internal_error", "module": "cli_reporting", "message": f"{type(exc).__name__}: {exc}",
                "context": {}})
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
