"""Command-line entry point: ``run``, ``tables``, ``check`` and ``sweep``.

Exit codes: 0 success, 1 failed checks, 2 invalid configuration,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import runner as rn

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

UNIT_SCALE = {"rad/us": 1.0, "kHz": 1e-3, "MHz": 1.0, "GHz": 1e3, "THz": 1e6}
FREQUENCY_KEYS = ("Delta", "Omega", "g", "nu", "gamma", "omega_e", "omega_g")
_FREQ_RE = re.compile(
    r"^\s*(?P<tau>2pi\s*\*\s*)?(?P<num>[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)\s*(?P<unit>rad/us|kHz|MHz|GHz|THz)?\s*$"
)


class ConfigError(ValueError):
    pass


# -- config parsing -----------------------------------------------------------


def parse_frequency(value) -> float:
    """``'2pi*405 MHz'`` -> ``2 pi 405`` rad/us. Bare numbers are rad/us already.

    A unit without the ``2pi*`` prefix is read literally, so ``'1 MHz'`` is
    one inverse microsecond.
    """
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    m = _FREQ_RE.match(str(value))
    if not m:
        raise ConfigError(f"cannot parse frequency {value!r}")
    x = float(m["num"]) * UNIT_SCALE[m["unit"] or "rad/us"]
    return 2 * math.pi * x if m["tau"] else x


def load_schema() -> dict:
    return json.loads(resources.files("chiralcurrent").joinpath("configs/schema.json").read_text())


def _node_at(root, path):
    node = root
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
    return node


def _key_node(root, path, key):
    parent = _node_at(root, path)
    if isinstance(parent, yaml.MappingNode):
        for k, _ in parent.value:
            if k.value == key:
                return k
    return parent


def validate_document(text: str, source: str = "<config>") -> dict:
    """Parse YAML and validate against the schema; errors carry ``file:line``."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark else ""
        raise ConfigError(f"{source}{line}: malformed YAML: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: configuration must be a mapping")
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        msgs = []
        for err in errors:
            path = list(err.absolute_path)
            if err.validator == "additionalProperties":
                allowed = set(err.schema.get("properties", {}))
                for key in sorted(set(err.instance) - allowed):
                    node = _key_node(root, path, key)
                    where = ".".join(map(str, path + [key]))
                    msgs.append(f"{source}:{node.start_mark.line + 1}: unknown key '{where}'")
                continue
            node = _node_at(root, path)
            where = ".".join(map(str, path)) or "<root>"
            msgs.append(f"{source}:{node.start_mark.line + 1}: '{where}': {err.message}")
        raise ConfigError("\n".join(msgs))
    return data


def config_from_document(data: dict) -> rn.RunConfig:
    kw: dict = {}
    scen = data["scenario"]
    if "/" in scen:
        scen, inj = scen.split("/")
        if "injection" in data and data["injection"] != inj:
            raise ConfigError(f"scenario suffix /{inj} disagrees with injection {data['injection']!r}")
        kw["injection"] = inj
    elif "injection" in data:
        kw["injection"] = data["injection"]
    kw.update(scenario=scen, tier=data["tier"], seed=data.get("seed", 0))
    for key, val in data.get("params", {}).items():
        kw[key] = parse_frequency(val) if key in FREQUENCY_KEYS else val
    kw.update(data.get("numerics", {}))
    kw.update(data.get("time", {}))
    kw.update(data.get("analysis", {}))
    tog = data.get("toggling", {})
    if "order" in tog:
        kw["toggling_order"] = tog["order"]
    if "cycles" in tog:
        kw["toggling_cycles"] = tog["cycles"]
    if "weights" in tog:
        kw["toggling_weights"] = tuple(tog["weights"])
    if "segments" in tog:
        kw["toggling_segments"] = tuple((s["pulse"], s.get("weight", 1.0)) for s in tog["segments"])
    try:
        return rn.RunConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike) -> tuple[rn.RunConfig, dict]:
    text = _read_config_text(path)
    data = validate_document(text, str(path))
    return config_from_document(data), data


def _read_config_text(path) -> str:
    p = Path(path)
    if p.exists():
        return p.read_text()
    shipped = resources.files("chiralcurrent").joinpath(f"configs/{p.name}")
    if not p.suffix:
        shipped = resources.files("chiralcurrent").joinpath(f"configs/{p.name}.yaml")
    if shipped.is_file():
        return shipped.read_text()
    raise ConfigError(f"{path}: no such file (and no shipped config of that name)")


def shipped_configs() -> list[str]:
    root = resources.files("chiralcurrent").joinpath("configs")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


# -- output -------------------------------------------------------------------


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.11e}"
    return str(x)


def csv_text(columns: dict[str, np.ndarray]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in zip(*columns.values()):
        w.writerow([f"{float(v):.11e}" for v in row])
    return buf.getvalue()


def rows_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(rows[0])
    for r in rows:
        w.writerow([_fmt(v) for v in r.values()])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def parameter_echo(cfg: rn.RunConfig, document: dict | None) -> dict:
    """Each frequency as given, in rad/us, and divided by 2pi (MHz)."""
    given = (document or {}).get("params", {})
    out = {}
    for key in FREQUENCY_KEYS:
        val = getattr(cfg, key)
        out[key] = {"input": given.get(key), "rad_per_us": val, "MHz_over_2pi": val / (2 * math.pi)}
    return out


def write_run(out: rn.RunOutput, out_dir: Path, stem: str, document: dict | None = None) -> tuple[Path, Path]:
    summary = dict(out.summary)
    summary["config"] = {k: v for k, v in asdict(out.config).items()}
    summary["parameter_echo"] = parameter_echo(out.config, document)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.summary.json"
    atomic_write(csv_path, csv_text(out.columns()))
    atomic_write(json_path, json_text(summary))
    return csv_path, json_path


def _numeric_failure(exc: Exception) -> int:
    block = {"error": type(exc).__name__, "message": str(exc)}
    print("numerical failure:\n" + json.dumps(block, indent=2), file=sys.stderr)
    return EXIT_NUMERIC


def _apply_overrides(cfg: rn.RunConfig, args) -> rn.RunConfig:
    kw = {}
    if getattr(args, "model_tier", None):
        kw["tier"] = args.model_tier
    if getattr(args, "fock_cutoff", None) is not None:
        kw["fock_cutoff"] = args.fock_cutoff
    if getattr(args, "tolerance", None) is not None:
        kw["tolerance"] = args.tolerance
    if getattr(args, "cycles", None) is not None:
        kw["toggling_cycles"] = args.cycles
    if getattr(args, "order", None) is not None:
        kw["toggling_order"] = args.order
    return replace(cfg, **kw) if kw else cfg


# -- commands -----------------------------------------------------------------


def cmd_run(args) -> int:
    try:
        cfg, doc = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out_dir or doc.get("output", {}).get("out_dir", "runs"))
    stem = doc.get("output", {}).get("stem") or Path(args.config).stem
    try:
        out = rn.run(cfg)
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        return _numeric_failure(exc)
    csv_path, json_path = write_run(out, out_dir, stem, doc)
    s = out.summary
    print(f"{s['scenario']}/{s['injection']} tier={s['tier']}: wrote {csv_path} and {json_path}")
    if "period_us" in s:
        print(f"period {s['period_us']:.6f} us; order {s['chiral_report']['direction']}; "
              f"min fidelity {s['min_fidelity']:.6f}")
    return EXIT_OK


def cmd_tables(args) -> int:
    out_dir = Path(args.out_dir or "tables")
    which = ["fidelity", "nu-sweep", "schedule"] if args.which == "all" else [args.which]
    base_proj = _apply_overrides(rn.RunConfig(tier="projected"), args)
    makers = {
        "fidelity": lambda: rn.fidelity_table(base_proj),
        "nu-sweep": lambda: rn.nu_sweep_table(base_proj),
        "schedule": lambda: rn.schedule_table(),
    }
    status = EXIT_OK
    for name in which:
        try:
            rows = makers[name]()
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            return _numeric_failure(exc)
        stem = name.replace("-", "_") + "_table"
        atomic_write(out_dir / f"{stem}.csv", rows_csv_text(rows))
        atomic_write(out_dir / f"{stem}.json", json_text(rows))
        print(f"{name}: {len(rows)} rows -> {out_dir / (stem + '.csv')}")
        for r in rows:
            print("  " + "  ".join(f"{k}={_short(v)}" for k, v in r.items()))
        if name == "schedule" and not all(r["passed"] for r in rows):
            status = EXIT_CHECK
    return status


def _short(v):
    return f"{v:.4f}" if isinstance(v, float) else v


def cmd_check(args) -> int:
    from . import checks

    t0 = time.perf_counter()
    results = checks.run_checks(mutate=args.mutate)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {time.perf_counter() - t0:.1f} s")
    if failed:
        print("failures:\n" + "\n".join(f"  - {r.name}: {r.detail}" for r in failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _sweep_one(payload):
    cfg, doc, out_dir, stem = payload
    out = rn.run(cfg)
    write_run(out, Path(out_dir), stem, doc)
    s = out.summary
    return {"stem": stem, "min_fidelity": s["min_fidelity"],
            "fidelity_at_periods": s.get("fidelity_at_periods"), "period_us": s.get("period_us")}


def _sweep_value(key: str, text: str):
    if key in FREQUENCY_KEYS:
        return parse_frequency(text)
    if key in ("fock_cutoff", "toggling_cycles", "toggling_order", "magnus_steps", "points_per_period"):
        return int(text)
    if key in ("scenario", "injection", "tier", "method", "detuning_mode"):
        return text
    return float(text)


def cmd_sweep(args) -> int:
    try:
        cfg, doc = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        names = {f.name for f in fields(rn.RunConfig)}
        if args.param not in names:
            raise ConfigError(f"unknown sweep parameter {args.param!r}")
        values = [_sweep_value(args.param, v) for v in args.values]
        jobs = [replace(cfg, **{args.param: v}) for v in values]
    except (ConfigError, ValueError) as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out_dir or "sweeps")
    stem = doc.get("output", {}).get("stem") or Path(args.config).stem
    payloads = [(c, doc, str(out_dir), f"{stem}_{args.param}_{i:03d}") for i, c in enumerate(jobs)]
    try:
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as ex:
                results = list(ex.map(_sweep_one, payloads))
        else:
            results = [_sweep_one(p) for p in payloads]
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        return _numeric_failure(exc)
    rows = [{"index": i, args.param: v, **r} for i, (v, r) in enumerate(zip(args.values, results))]
    atomic_write(out_dir / f"{stem}_{args.param}_sweep.json", json_text(rows))
    for r in rows:
        print(f"  {args.param}={r[args.param]}: min fidelity {r['min_fidelity']:.6f}")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in shipped_configs():
        print(name)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", help="directory for output files")
    p.add_argument("--model-tier", choices=rn.TIERS, help="override the configured tier")
    p.add_argument("--fock-cutoff", type=int, help="photon-number cutoff n_max")
    p.add_argument("--tolerance", type=float, help="integrator tolerance")
    p.add_argument("--cycles", type=int, help="toggling cycles m")
    p.add_argument("--order", type=int, choices=(1, 2), help="Trotter order")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chiralcurrent", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration; writes a CSV trajectory and a JSON summary")
    p.add_argument("--config", required=True, help="YAML file or the name of a shipped config")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("tables", help="regenerate the fidelity, nu-sweep and schedule tables")
    p.add_argument("--which", choices=("fidelity", "nu-sweep", "schedule", "all"), default="all")
    _common(p)
    p.set_defaults(func=cmd_tables)

    p = sub.add_parser("check", help="fast invariant suite")
    p.add_argument("--mutate", choices=("kappa",), help="perturb a constant to confirm the suite notices")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", help="run a configuration over a list of values of one parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, help="RunConfig field, e.g. nu_ratio or fock_cutoff")
    p.add_argument("--values", nargs="+", required=True)
    p.add_argument("--workers", type=int, default=1)
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("configs", help="list shipped configurations")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
