"""Command-line front end: config parsing, dispatch, reproducible output.

Grammar: ``sepmix <module> <verb> --config FILE [--seed S] [--out PATH]
[--threads W]``.  The config is a JSON document with a law block, an
experiment block (kind + op + parameters), a seed, and optionally an
output path and format; --seed and --out override the file.  Every
output embeds the code version and a hash of the effective computation
(law, experiment, seed), so byte-identical files certify identical
inputs.  CSV outputs carry the metadata as # comment lines above a
mandatory header; floats are written in shortest round-trip form.

Exit codes: 0 success, 1 usage or config error, 2 property violation
(the message names the invariant).
"""

import argparse
import hashlib
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from csv import writer as csv_writer
from dataclasses import dataclass, replace
from importlib import metadata

import numpy as np

from . import estimators, exact
from .dynamics import build_sweep_scheme, trace_events, trace_flow, EventSource
from .environment import (Environment, constrained_max_gain, deepest_trap,
                          potential, sample_env)
from .equilibrium import EquilibriumTable
from .errors import SchemaError, SepmixError
from .law import LawSpec, q_n
from .state import extremal

try:
    _VERSION = metadata.version("sepmix")
except metadata.PackageNotFoundError:
    _VERSION = "0+unknown"

# experiment kinds: which ops they support and which parameter keys
# they accept.  censor-check additionally requires q, T and times.
_KINDS = {
    "env": (("dump", "traps"), {"n"}, {"omega"}),
    "equilibrium": (("marginals",), {"n", "k"}, {"omega"}),
    "exact": (("gap", "tmix", "paths", "censor-check"), {"n", "k"},
              {"omega", "eps", "q", "T", "times"}),
    "simulate": (("couple", "hit"), {"n", "k", "horizon", "replicas"}, set()),
    "flow": (("flow",), {"n", "x2", "y2", "horizon", "replicas"}, {"omega"}),
    "scaling": (("run",), {"beta", "ns", "eps", "replicas"}, {"cap"}),
}

# (cli module, verb) -> (experiment kind, op, output format)
_GRAMMAR = {
    ("env", "dump"): ("env", "dump", "csv"),
    ("env", "traps"): ("env", "traps", "csv"),
    ("equilibrium", "marginals"): ("equilibrium", "marginals", "csv"),
    ("exact", "gap"): ("exact", "gap", "json"),
    ("exact", "tmix"): ("exact", "tmix", "json"),
    ("exact", "paths"): ("exact", "paths", "json"),
    ("exact", "censor-check"): ("exact", "censor-check", "json"),
    ("simulate", "couple"): ("simulate", "couple", "csv"),
    ("simulate", "hit"): ("simulate", "hit", "csv"),
    ("simulate", "flow"): ("flow", "flow", "csv"),
    ("scaling", "run"): ("scaling", "run", "csv"),
}

_INT_KEYS = {"n", "k", "q", "replicas", "x2", "y2", "seed"}
_NUM_KEYS = {"horizon", "T", "eps", "beta", "cap"}
_LIST_KEYS = {"omega": float, "times": float, "ns": int}


@dataclass(frozen=True)
class RunConfig:
    """A validated run: law, experiment block, seed, output location."""

    law: LawSpec
    experiment: dict
    seed: int
    out: str = None
    fmt: str = None


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_value(path, key, value):
    if key in _INT_KEYS:
        if not _is_int(value):
            raise SchemaError(path, "must be an integer")
        if key in ("n", "q", "replicas", "x2", "y2") and value < 1:
            raise SchemaError(path, "must be a positive integer")
        if key == "k" and value < 0:
            raise SchemaError(path, "must be nonnegative")
    elif key in _NUM_KEYS:
        if not _is_num(value):
            raise SchemaError(path, "must be a number")
        if key in ("horizon", "T", "cap") and not value > 0:
            raise SchemaError(path, "must be positive")
        if key == "eps" and not 0.0 < value < 1.0:
            raise SchemaError(path, "must lie in (0, 1)")
        if key == "beta" and not 0.0 <= value <= 1.0:
            raise SchemaError(path, "must lie in [0, 1]")
    elif key in _LIST_KEYS:
        want = _LIST_KEYS[key]
        ok = isinstance(value, list) and value and all(
            (_is_int(v) if want is int else _is_num(v)) for v in value)
        if not ok:
            raise SchemaError(path, "must be a non-empty array of %ss"
                              % want.__name__)


def _parse_law(block):
    if not isinstance(block, dict):
        raise SchemaError("law", "must be an object")
    kind = block.get("kind")
    allowed = {
        "two-point": {"kind", "alpha", "p"},
        "finite-discrete": {"kind", "alpha", "values", "weights"},
        "quantile-table": {"kind", "alpha", "u", "omega"},
    }.get(kind)
    if allowed is None:
        raise SchemaError("law.kind", "unknown law kind %r" % (kind,))
    for key in block:
        if key not in allowed:
            raise SchemaError("law.%s" % key, "unknown key")
    for key in allowed - set(block):
        raise SchemaError("law.%s" % key, "missing required key")
    return LawSpec.from_dict(block)


def _parse_experiment(block):
    if not isinstance(block, dict):
        raise SchemaError("experiment", "must be an object")
    kind = block.get("kind")
    if kind not in _KINDS:
        raise SchemaError("experiment.kind",
                          "must be one of %s" % ", ".join(sorted(_KINDS)))
    ops, required, optional = _KINDS[kind]
    op = block.get("op")
    if op not in ops:
        raise SchemaError("experiment.op",
                          "kind %r supports ops %s" % (kind, ", ".join(ops)))
    need = set(required)
    if op == "censor-check":
        need |= {"q", "T", "times"}
    for key in block:
        if key in ("kind", "op"):
            continue
        if key not in need and key not in optional:
            raise SchemaError("experiment.%s" % key, "unknown key")
        _check_value("experiment.%s" % key, key, block[key])
    for key in sorted(need - set(block)):
        raise SchemaError("experiment.%s" % key, "missing required key")
    return dict(block)


def parse_config(text):
    """Parse and strictly validate a JSON config document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError("$", "invalid JSON at line %d column %d: %s"
                          % (e.lineno, e.colno, e.msg))
    if not isinstance(doc, dict):
        raise SchemaError("$", "top level must be an object")
    for key in doc:
        if key not in ("law", "experiment", "seed", "out", "format"):
            raise SchemaError(key, "unknown key")
    for key in ("law", "experiment", "seed"):
        if key not in doc:
            raise SchemaError(key, "missing required key")
    law = _parse_law(doc["law"])
    experiment = _parse_experiment(doc["experiment"])
    seed = doc["seed"]
    if not _is_int(seed) or not 0 <= seed < 2**64:
        raise SchemaError("seed", "must be an integer in [0, 2^64)")
    out = doc.get("out")
    if out is not None and (not isinstance(out, str) or not out):
        raise SchemaError("out", "must be a non-empty string")
    fmt = doc.get("format")
    if fmt is not None and fmt not in ("csv", "json"):
        raise SchemaError("format", "must be csv or json")
    return RunConfig(law=law, experiment=experiment, seed=seed,
                     out=out, fmt=fmt)


def _canonical(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(config):
    """Hash of the effective computation: law, experiment, seed."""
    doc = {"law": config.law.to_dict(), "experiment": config.experiment,
           "seed": config.seed}
    return hashlib.sha256(_canonical(doc).encode()).hexdigest()[:16]


def _instance_hash(config):
    exp = config.experiment
    doc = {"law": config.law.to_dict(), "n": exp["n"], "k": exp["k"],
           "seed": config.seed}
    if "omega" in exp:
        doc["omega"] = exp["omega"]
    return hashlib.sha256(_canonical(doc).encode()).hexdigest()[:16]


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".sepmix-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _csv_text(config, header, rows):
    buf = io.StringIO()
    buf.write("# sepmix %s\n" % _VERSION)
    buf.write("# config_hash %s\n" % config_hash(config))
    w = csv_writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _json_text(config, payload):
    doc = dict(payload)
    doc["version"] = _VERSION
    doc["config_hash"] = config_hash(config)
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _build_env(config):
    exp = config.experiment
    if "omega" in exp:
        if len(exp["omega"]) != exp["n"]:
            raise SchemaError("experiment.omega", "length must equal n")
        return Environment.from_omega(np.asarray(exp["omega"], float),
                                      config.law)
    return sample_env(config.law, exp["n"], config.seed)


def _run_env(config, op):
    env = _build_env(config)
    profile = potential(env)
    if op == "dump":
        rows = [(site, float(env.omega[site - 1]), float(profile.v[site - 1]),
                 float(profile.v_bar[site - 1])) for site in range(1, env.n + 1)]
        return _csv_text(config, ("site", "omega", "v", "v_bar"), rows)
    trap = deepest_trap(profile)
    gain = constrained_max_gain(profile, q_n(config.law, env.n))
    return _csv_text(config, ("x", "y", "depth", "constrained_gain_at_qN"),
                     [(trap.x, trap.y, float(trap.depth), float(gain))])


def _run_equilibrium(config):
    env = _build_env(config)
    table = EquilibriumTable.from_profile(potential(env),
                                          config.experiment["k"])
    rows = [(site, float(m)) for site, m in
            enumerate(table.marginals(), start=1)]
    return _csv_text(config, ("site", "marginal"), rows)


def _run_exact(config, op):
    exp = config.experiment
    env = _build_env(config)
    chain = exact.build(env, exp["k"])
    base = {"instance": {"law": config.law.to_dict(), "n": exp["n"],
                         "k": exp["k"], "seed": config.seed},
            "instance_hash": _instance_hash(config)}
    if op == "gap":
        base.update(gap=exact.spectral_gap(chain), states=chain.size,
                    uniformization_rate=float(chain.lambda_u),
                    db_residual=float(chain.db_residual))
    elif op == "tmix":
        eps = float(exp.get("eps", 0.25))
        gap = exact.spectral_gap(chain)
        pi_min_log = float(chain.log_pi.min())
        base.update(eps=eps, t_mix=exact.t_mix_exact(chain, eps), gap=gap,
                    lower_bound=math.log(1.0 / (2.0 * eps)) / gap,
                    upper_bound=(-math.log(eps) - pi_min_log) / gap)
    elif op == "paths":
        b = exact.canonical_path_bound(chain, env)
        alpha = config.law.alpha
        n = exp["n"]
        ceiling = (n * n * chain.size / alpha
                   * ((1.0 - alpha) / alpha) ** (n / 2.0))
        base.update(congestion=b, gap=exact.spectral_gap(chain),
                    gap_lower_bound=1.0 / b, ceiling=ceiling)
    else:
        scheme, disp = build_sweep_scheme(exp["n"], exp["k"], exp["q"],
                                          float(exp["T"]))
        rep = exact.censoring_inequality_check(
            chain, scheme, disp, [float(t) for t in exp["times"]])
        base.update(times=[float(t) for t in rep.times],
                    plain_min=[float(x) for x in rep.plain_min],
                    censored=[float(x) for x in rep.censored],
                    displaced=[float(x) for x in rep.displaced],
                    worst_slack=float(rep.worst_slack))
    return _json_text(config, base)


def _fan(worker, replicas, threads):
    # order-preserving, so output bytes never depend on the pool width
    if threads <= 1:
        return [worker(r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(replicas)))


_EVENT_HEADER = ("replica", "event_index", "time", "site", "mark_applied",
                 "moved")


def _run_simulate(config, op, threads):
    exp = config.experiment
    env = _build_env(config)
    n, k = exp["n"], exp["k"]
    horizon = float(exp["horizon"])
    tag = (estimators._SEED_COUPLE if op == "couple"
           else estimators._SEED_WALK)

    def worker(r):
        lo, hi = extremal(n, k)
        starts = [lo.occupancy, hi.occupancy] if op == "couple" \
            else [lo.occupancy]
        boards = np.array(starts, np.uint8)
        source = EventSource(n, estimators._replica_seed(config.seed, tag, r))
        return [(r, idx, t, site, mark, moved) for idx, t, site, mark, moved
                in trace_events(boards, env, source, horizon)]

    rows = _fan(worker, exp["replicas"], threads)
    return _csv_text(config, _EVENT_HEADER,
                     (row for rep in rows for row in rep))


def _run_flow(config, threads):
    exp = config.experiment
    env = _build_env(config)
    x2, y2 = exp["x2"], exp["y2"]
    horizon = float(exp["horizon"])

    def worker(r):
        win = np.zeros(y2 - x2 + 1, np.uint8)
        source = EventSource(env.n, estimators._replica_seed(
            config.seed, estimators._SEED_FLOW, r))
        return [(r, idx, t, site, mark, moved) for idx, t, site, mark, moved
                in trace_flow(env, x2, y2, win, source, horizon)]

    rows = _fan(worker, exp["replicas"], threads)
    return _csv_text(config, _EVENT_HEADER,
                     (row for rep in rows for row in rep))


def _run_scaling(config):
    exp = config.experiment
    kwargs = {"cap": float(exp["cap"])} if "cap" in exp else {}
    result = estimators.scaling_run(config.law, float(exp["beta"]),
                                    exp["ns"], float(exp["eps"]),
                                    exp["replicas"], config.seed, **kwargs)
    rows = [(row.n, row.k, float(row.beta), float(row.lambda_ref),
             float(row.t_hat), float(row.ci[0]), float(row.ci[1]),
             row.timeouts, float(row.predicted_exponent),
             int(row.censored)) for row in result.rows]
    return _csv_text(config, ("n", "k", "beta", "lambda", "t_hat", "ci_lo",
                              "ci_hi", "timeouts", "predicted_exponent",
                              "censored"), rows)


def run(config, module=None, verb=None, threads=1):
    """Execute a validated config and write its output atomically.

    module/verb, when given, must agree with the experiment block; by
    default they are inferred from it.  Returns 0 on success; schema
    and property violations raise and are mapped by main().
    """
    kind, op = config.experiment["kind"], config.experiment["op"]
    if module is None:
        module = "simulate" if kind == "flow" else kind
        verb = "flow" if kind == "flow" else op
    expect = _GRAMMAR.get((module, verb))
    if expect is None or expect[0] != kind or expect[1] != op:
        raise SchemaError("experiment",
                          "kind %r op %r does not match %s %s"
                          % (kind, op, module, verb))
    fmt = expect[2]
    if config.fmt is not None and config.fmt != fmt:
        raise SchemaError("format", "%s %s writes %s" % (module, verb, fmt))
    if not config.out:
        raise SchemaError("out", "no output path (config out or --out)")
    if kind == "env":
        text = _run_env(config, op)
    elif kind == "equilibrium":
        text = _run_equilibrium(config)
    elif kind == "exact":
        text = _run_exact(config, op)
    elif kind == "simulate":
        text = _run_simulate(config, op, threads)
    elif kind == "flow":
        text = _run_flow(config, threads)
    else:
        text = _run_scaling(config)
    _atomic_write(config.out, text)
    return 0


def _parser():
    p = argparse.ArgumentParser(
        prog="sepmix",
        description="exclusion process in random environment: exact "
                    "spectra, couplings, and scaling experiments")
    sub = p.add_subparsers(dest="module", required=True)
    verbs = {}
    for module, verb in _GRAMMAR:
        verbs.setdefault(module, []).append(verb)
    for module, vlist in verbs.items():
        mp = sub.add_parser(module)
        vsub = mp.add_subparsers(dest="verb", required=True)
        for verb in vlist:
            vp = vsub.add_parser(verb)
            vp.add_argument("--config", required=True)
            vp.add_argument("--seed", type=int, default=None)
            vp.add_argument("--out", default=None)
            vp.add_argument("--threads", type=int, default=None)
    return p


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("SEPMIX_THREADS", "1") or 1)
    if threads < 1:
        print("sepmix: --threads must be at least 1")
        return 1
    try:
        with open(args.config, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        print("sepmix: cannot read config: %s" % e)
        return 1
    try:
        config = parse_config(text)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise SchemaError("seed", "must be an integer in [0, 2^64)")
            config = replace(config, seed=args.seed)
        if args.out is not None:
            config = replace(config, out=args.out)
        return run(config, args.module, args.verb, threads)
    except SchemaError as e:
        print("sepmix: config error: %s" % e)
        return 1
    except SepmixError as e:
        print("sepmix: property violation: %s" % e)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
