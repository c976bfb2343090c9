"""Command-line front end.

Usage::

    riemcov {integrate,content,cov,sard,cousin} --config PATH [--out PATH]
            [--seed N] [--threads N] [--depth D] [--tol T]

Config files are line oriented::

    # comment
    dimension = 2
    seed = 0

    [domain]
    box = [[0, 1], [0, 6.283185307179586]]

    [map]
    components = ["x1*cos(x2)", "x1*sin(x2)"]

    [integrand]
    f = "1"

    [options]
    depths = [7, 9]

Every value is a Python literal (numbers, quoted strings, lists).  Unknown
sections and keys are errors.  Results are printed for humans and, with
``--out``, written as flat ``key.path = value`` lines whose values are JSON
literals; the record includes the resolved configuration.

Exit codes: 0 success or Verified, 1 usage or config error, 2 inconclusive
or budget exhausted, 3 violation detected.
"""

from __future__ import annotations

import argparse
import ast
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cousin import delta_fine_partition, partition_depth, verify_delta_fine
from .cov import VERIFIED, VIOLATED, CovOptions, change_of_variables, sard_image_content
from .darboux import Modulus, Sampled, integral_bracket
from .errors import MaxDepthExceeded, RiemcovError
from .expr import ExprError, compile_expr, compile_map
from .geometry import INSIDE, OUTSIDE, AxisBox, BoxSet, ClassifiedSet, Cube, CubeUnion, content_bracket
from .partition import validate

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INCONCLUSIVE = 2
EXIT_VIOLATED = 3


class ConfigError(RiemcovError):
    """A config problem, located by file and line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


SCHEMA = {
    "": {"dimension", "seed"},
    "domain": {"box", "cubes", "classify", "bounds"},
    "map": {"components", "jacobian", "lipschitz"},
    "integrand": {"f"},
    "gauge": {"delta", "max_depth"},
    "null_set": {"boxes"},
    "options": {
        "depths", "tol", "rel_tol", "mode", "lipschitz_f", "samples_per_axis", "radii", "k",
        "estimator", "det_tol", "probe_samples", "separation", "probe_tol", "strong_diff_points",
        "source_extra", "max_cells", "lipschitz_samples",
    },
}


def read_config_text(text: str, path: str = "<config>"):
    """Parse config text into ``{section: {key: (value, line)}}``."""
    sections = {"": {}}
    current = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", path, lineno)
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", path, lineno)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", path, lineno)
            sections[current] = {}
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", path, lineno)
        if key not in SCHEMA[current]:
            name = f"{current}.{key}" if current else key
            raise ConfigError(f"unknown key {name!r}", path, lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        try:
            parsed = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc.__class__.__name__}", path, lineno) from None
        sections[current][key] = (parsed, lineno)
    return sections


@dataclass
class ProblemConfig:
    """A resolved problem description; ``lines`` maps dotted keys to source lines."""

    dimension: int
    path: str = "<config>"
    seed: int = 0
    domain: dict = field(default_factory=dict)
    map: dict = field(default_factory=dict)
    integrand: dict = field(default_factory=dict)
    gauge: dict = field(default_factory=dict)
    null_set: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    def error(self, message, key=None):
        return ConfigError(message, self.path, self.lines.get(key))

    def resolved(self):
        out = {"dimension": self.dimension, "seed": self.seed}
        for name in ("domain", "map", "integrand", "gauge", "null_set", "options"):
            for k, v in getattr(self, name).items():
                out[f"{name}.{k}"] = v
        return out


def load_config(text: str, path: str = "<config>") -> ProblemConfig:
    sections = read_config_text(text, path)
    top = sections[""]
    if "dimension" not in top:
        raise ConfigError("missing 'dimension'", path)
    dim, line = top["dimension"]
    if not isinstance(dim, int) or dim < 1:
        raise ConfigError("dimension must be a positive integer", path, line)
    cfg = ProblemConfig(dimension=dim, path=path)
    cfg.lines["dimension"] = line
    if "seed" in top:
        cfg.seed, cfg.lines["seed"] = top["seed"]
    for name in ("domain", "map", "integrand", "gauge", "null_set", "options"):
        target = getattr(cfg, name)
        for k, (v, ln) in sections.get(name, {}).items():
            target[k] = v
            cfg.lines[f"{name}.{k}"] = ln
    _check_config(cfg)
    return cfg


def _check_config(cfg: ProblemConfig):
    dom = cfg.domain
    kinds = [k for k in ("box", "cubes", "classify") if k in dom]
    if len(kinds) > 1:
        raise cfg.error("domain needs exactly one of box, cubes, classify", f"domain.{kinds[1]}")
    if "classify" in dom and "bounds" not in dom:
        raise cfg.error("domain.classify needs domain.bounds", "domain.classify")
    depths = cfg.options.get("depths")
    if depths is not None:
        if not isinstance(depths, (list, tuple)) or not depths:
            raise cfg.error("options.depths must be a nonempty list", "options.depths")
        if any(not isinstance(d, int) or d < 0 for d in depths) or any(b <= a for a, b in zip(depths, depths[1:])):
            raise cfg.error("options.depths must be strictly increasing nonnegative integers", "options.depths")
    comps = cfg.map.get("components")
    if comps is not None and len(comps) != cfg.dimension:
        raise cfg.error(f"map.components needs {cfg.dimension} entries", "map.components")


def _box_from(cfg, value, key):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise cfg.error(f"{key} must be a list of [lo, hi] pairs", key) from None
    if arr.shape != (cfg.dimension, 2):
        raise cfg.error(f"{key} must be {cfg.dimension} [lo, hi] pairs", key)
    try:
        return AxisBox(arr[:, 0], arr[:, 1])
    except ValueError as exc:
        raise cfg.error(f"{key}: {exc}", key) from None


def _expr(cfg, src, key):
    if not isinstance(src, str):
        raise cfg.error(f"{key} must be a quoted expression", key)
    try:
        return compile_expr(src, cfg.dimension)
    except ExprError as exc:
        raise cfg.error(f"{key}: {type(exc).__name__}: {exc}", key) from None


def build_domain(cfg: ProblemConfig):
    dom = cfg.domain
    if "box" in dom:
        return BoxSet(_box_from(cfg, dom["box"], "domain.box"))
    if "cubes" in dom:
        boxes = [_box_from(cfg, c, "domain.cubes") for c in dom["cubes"]]
        bounds = _box_from(cfg, dom["bounds"], "domain.bounds") if "bounds" in dom else None
        try:
            return CubeUnion(boxes, bounds)
        except ValueError as exc:
            raise cfg.error(f"domain.cubes: {exc}", "domain.cubes") from None
    if "classify" in dom:
        phi = _expr(cfg, dom["classify"], "domain.classify")
        bounds = _box_from(cfg, dom["bounds"], "domain.bounds")

        def classify(P):
            return np.where(phi(P) <= 0, INSIDE, OUTSIDE)

        return ClassifiedSet(bounds, classify)
    raise cfg.error("missing [domain]")


def build_map(cfg: ProblemConfig):
    comps = cfg.map.get("components")
    if comps is None:
        raise cfg.error("missing map.components")
    for i, c in enumerate(comps):
        _expr(cfg, c, "map.components")
    return compile_map(comps, cfg.dimension)


def build_jacobian(cfg: ProblemConfig):
    rows = cfg.map.get("jacobian")
    if rows is None:
        return None
    m = cfg.dimension
    if len(rows) != m or any(len(r) != m for r in rows):
        raise cfg.error(f"map.jacobian must be {m}x{m}", "map.jacobian")
    entries = [[_expr(cfg, s, "map.jacobian") for s in row] for row in rows]

    def jac(P):
        return np.stack([np.stack([e(P) for e in row], axis=1) for row in entries], axis=1)

    return jac


def build_integrand(cfg: ProblemConfig):
    if "f" not in cfg.integrand:
        raise cfg.error("missing integrand.f")
    return _expr(cfg, cfg.integrand["f"], "integrand.f")


def build_mode(cfg: ProblemConfig):
    opts = cfg.options
    mode = opts.get("mode", "sampled")
    s = opts.get("samples_per_axis", 2)
    if mode == "sampled":
        return Sampled(s)
    if mode == "modulus":
        if "lipschitz_f" not in opts:
            raise cfg.error("mode 'modulus' needs options.lipschitz_f", "options.mode")
        return Modulus(float(opts["lipschitz_f"]), s)
    raise cfg.error(f"unknown mode {mode!r}", "options.mode")


def depth_schedule(cfg: ProblemConfig, default, override=None):
    sched = list(cfg.options.get("depths", default))
    if override is not None:
        sched = [d for d in sched if d < override] + [override]
    return sched


# -- output --------------------------------------------------------------------

def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def flatten(record, prefix=""):
    """Flatten nested dicts into ``(dotted.key, value)`` pairs."""
    out = []
    for k, v in record.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.extend(flatten(v, key + "."))
        else:
            out.append((key, _plain(v)))
    return out


def write_record(path, record):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in flatten(record):
            fh.write(f"{key} = {json.dumps(value)}\n")


def _bracket_dict(b):
    return {"lower": b.lower, "upper": b.upper, "width": b.width, "depth": b.depth, "label": b.label}


# -- subcommands -------------------------------------------------------------

def cmd_integrate(cfg: ProblemConfig, args):
    X = build_domain(cfg)
    f = build_integrand(cfg)
    tol = args.tol if args.tol is not None else cfg.options.get("tol", 1e-6)
    sched = depth_schedule(cfg, [6, 8, 10], args.depth)
    res = integral_bracket(f, X, sched, build_mode(cfg), tol, cfg.options.get("max_cells", 2**26))
    b = res.bracket
    print(f"integral in [{b.lower:.12g}, {b.upper:.12g}]  width {b.width:.3g}  ({b.label})")
    for t in res.trace:
        print(f"  depth {t.depth:2d}: [{t.lower:.12g}, {t.upper:.12g}]  boundary cells {t.boundary_cells}")
    print("converged" if res.converged else f"not converged to tol {tol:g}")
    record = {
        "command": "integrate",
        "result": _bracket_dict(b) | {"converged": res.converged, "tol": tol},
        "trace": {str(t.depth): {"lower": t.lower, "upper": t.upper, "boundary_cells": t.boundary_cells} for t in res.trace},
    }
    return (EXIT_OK if res.converged else EXIT_INCONCLUSIVE), record


def cmd_content(cfg: ProblemConfig, args):
    X = build_domain(cfg)
    depth = args.depth if args.depth is not None else depth_schedule(cfg, [8])[-1]
    br = content_bracket(X, depth, cfg.options.get("max_cells", 2**26))
    print(f"content in [{br.inner:.12g}, {br.outer:.12g}]  width {br.width:.3g}  depth {depth}  ({br.label})")
    record = {"command": "content", "result": {"inner": br.inner, "outer": br.outer, "width": br.width,
                                               "depth": depth, "label": br.label}}
    return EXIT_OK, record


def _null_boxes(cfg):
    return tuple(_box_from(cfg, b, "null_set.boxes") for b in cfg.null_set.get("boxes", []))


def cov_options(cfg: ProblemConfig, args):
    o = cfg.options
    kw = {}
    for key in ("tol", "rel_tol", "k", "estimator", "det_tol", "probe_samples", "separation",
                "probe_tol", "strong_diff_points", "source_extra", "max_cells"):
        if key in o:
            kw[key] = o[key]
    if "radii" in o:
        kw["radii"] = tuple(float(r) for r in o["radii"])
    if args.tol is not None:
        kw["tol"] = args.tol
    return CovOptions(
        depths=tuple(depth_schedule(cfg, [6, 8], args.depth)),
        mode=build_mode(cfg),
        L=cfg.map.get("lipschitz"),
        K=_null_boxes(cfg),
        jacobian=build_jacobian(cfg),
        seed=args.seed if args.seed is not None else cfg.seed,
        **kw,
    )


def cmd_cov(cfg: ProblemConfig, args):
    X = build_domain(cfg)
    G = build_map(cfg)
    f = build_integrand(cfg)
    opts = cov_options(cfg, args)
    rep = change_of_variables(f, G, X, opts)
    wit = rep.hypothesis_flags["injectivity_witnesses"]
    fails = rep.hypothesis_flags["strong_diff_failures"]
    lb, rb = rep.lhs.bracket, rep.rhs.bracket
    print(f"lhs  int_G(X) f          in [{lb.lower:.10g}, {lb.upper:.10g}]  ({lb.label})")
    print(f"rhs  int_X f(G)|det g|   in [{rb.lower:.10g}, {rb.upper:.10g}]  ({rb.label})")
    print(f"ratio rhs/lhs = {rep.ratio:.6g}  threshold {rep.threshold:.3g}")
    print(f"verdict: {rep.verdict}")
    print(f"injectivity witnesses: {rep.injectivity_pairs}")
    for w in wit[:5]:
        print(f"  G{w.x} = G{w.y} ~ {w.gx}")
    print(f"strong-diff failures: {len(fails)}")
    for x, defects in fails[:5]:
        print(f"  at {x}: defects {defects}")
    record = {
        "command": "cov",
        "lhs": _bracket_dict(lb),
        "rhs": _bracket_dict(rb),
        "ratio": rep.ratio,
        "threshold": rep.threshold,
        "verdict": rep.verdict,
        "lipschitz": rep.lipschitz,
        "density": rep.field,
        "injectivity": {"pairs": rep.injectivity_pairs,
                        "witnesses": [[list(w.x), list(w.y)] for w in wit]},
        "strong_diff": {"failures": [list(x) for x, _ in fails]},
    }
    code = {VERIFIED: EXIT_OK, VIOLATED: EXIT_VIOLATED}.get(rep.verdict, EXIT_INCONCLUSIVE)
    return code, record


def cmd_sard(cfg: ProblemConfig, args):
    X = build_domain(cfg)
    G = build_map(cfg)
    det_tol = float(cfg.options.get("det_tol", 0.05))
    sched = depth_schedule(cfg, [5, 6, 7, 8], args.depth)
    rep = sard_image_content(G, X, det_tol, sched, L=cfg.map.get("lipschitz"),
                             seed=args.seed if args.seed is not None else cfg.seed)
    print(f"det tolerance {det_tol:g}, Lipschitz bound {rep.lipschitz:.6g}")
    for (d, n), (_, v) in zip(rep.singular_cell_count, rep.image_outer_content_by_depth):
        print(f"  depth {d:2d}: singular cells {n:8d}  image outer content {v:.6g}")
    values = [v for _, v in rep.image_outer_content_by_depth]
    decreasing = all(b <= a for a, b in zip(values, values[1:]))
    print("trend: nonincreasing" if decreasing else "trend: not monotone")
    record = {
        "command": "sard",
        "det_tolerance": det_tol,
        "lipschitz": rep.lipschitz,
        "depths": {str(d): {"singular_cells": n, "image_outer_content": v}
                   for (d, n), (_, v) in zip(rep.singular_cell_count, rep.image_outer_content_by_depth)},
        "nonincreasing": decreasing,
    }
    return (EXIT_OK if decreasing else EXIT_INCONCLUSIVE), record


def cmd_cousin(cfg: ProblemConfig, args):
    X = build_domain(cfg)
    box = X.bounds
    widths = np.asarray(box.widths)
    if not isinstance(X, BoxSet) or not np.allclose(widths, widths[0], rtol=1e-12):
        raise cfg.error("cousin needs a cube domain (domain.box with equal sides)", "domain.box")
    Q = Cube(box.center, widths[0] / 2)
    if "delta" not in cfg.gauge:
        raise cfg.error("missing gauge.delta")
    delta = _expr(cfg, cfg.gauge["delta"], "gauge.delta")
    max_depth = args.depth if args.depth is not None else cfg.gauge.get("max_depth", 20)
    try:
        dotted = delta_fine_partition(Q, delta, max_depth)
    except MaxDepthExceeded as exc:
        w = exc.witness
        print(f"max depth {exc.depth} exceeded: {exc.remaining} cubes left, "
              f"witness cube centre {tuple(map(float, w.center))} half-width {w.half_width:g}")
        record = {"command": "cousin", "status": "MaxDepthExceeded", "depth": exc.depth,
                  "witness": {"center": list(map(float, w.center)), "half_width": w.half_width}}
        return EXIT_INCONCLUSIVE, record
    problems = verify_delta_fine(dotted, delta) + validate(dotted)
    depth = partition_depth(dotted, Q)
    print(f"{len(dotted.partition)} cells, deepest level {depth}")
    for msg in problems:
        print("  " + msg)
    print("verified" if not problems else "verification failed")
    record = {"command": "cousin", "status": "Verified" if not problems else "Failed",
              "cells": len(dotted.partition), "depth": depth, "problems": problems}
    return (EXIT_OK if not problems else EXIT_INCONCLUSIVE), record


COMMANDS = {
    "integrate": cmd_integrate,
    "content": cmd_content,
    "cov": cmd_cov,
    "sard": cmd_sard,
    "cousin": cmd_cousin,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="riemcov", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="problem config file")
    parser.add_argument("--out", help="write a flat key = value result record here")
    parser.add_argument("--seed", type=int, help="seed for randomized probes (overrides config)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap; execution is serial so any value is reproducible")
    parser.add_argument("--depth", type=int, help="final depth of the schedule")
    parser.add_argument("--tol", type=float, help="convergence tolerance")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(text, args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        code, record = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RiemcovError, ExprError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    if args.out:
        record["exit_code"] = code
        record["config"] = cfg.resolved()
        record["config.path"] = args.config
        write_record(args.out, record)
    return code


if __name__ == "__main__":
    sys.exit(main())
