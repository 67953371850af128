"""Parameter sweeps from a flat key=value config, written as CSV.

Config format: one ``key=value`` per line, ``#`` starts a comment, lists are
comma separated and ``start:step:stop`` expands to an inclusive range.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import check_ub_single, check_ub_two, coop_ub
from .core_model import NetworkParams
from .dpp import DEFAULT_CMAX_OFFSETS, DEFAULT_SLOTS, DEFAULT_V, DppConfig, dpp_run
from .schemes_single import DEFAULT_TCI_GRID, mmse_rate, qci_rate, tci_rate
from .schemes_two import fc_rate

MODES = ("ub-single", "ub-two", "check-ub-single", "check-ub-two", "dpp", "qci", "tci", "mmse",
         "fc", "fc-sweep-d")
TWO_USER_MODES = ("ub-two", "check-ub-two", "fc", "fc-sweep-d")
HEADER = "mode,snr_db,c1,c2,param,rate_bits,stderr,trials,seed,wall_ms"
DEFAULT_D_GRID = tuple(float(x) for x in np.logspace(-3, 0, 12))

EXIT_OK, EXIT_PARSE, EXIT_IO, EXIT_VERIFY = 0, 1, 2, 3


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    mode: str
    snr_db: tuple[float, ...]
    capacities: tuple[tuple[float, float], ...]
    trials: int = 100_000
    seed: int = 42
    j_levels: tuple[int, ...] = (2, 4, 8, 16)
    s_th: tuple[float, ...] = DEFAULT_TCI_GRID
    d: tuple[float, ...] = DEFAULT_D_GRID
    v: float = DEFAULT_V
    cmax_offsets: tuple[float, ...] = DEFAULT_CMAX_OFFSETS
    slots: int = DEFAULT_SLOTS
    select: str = "max"
    jobs: int = 1
    timing: bool = False
    out: str | None = None


@dataclass(frozen=True)
class SweepRecord:
    mode: str
    snr_db: float
    c1: float
    c2: float
    param: float
    rate_bits: float
    stderr: float
    trials: int
    seed: int
    wall_ms: float = 0.0
    error: str | None = field(default=None, compare=False)


def _expand(key: str, text: str) -> list[float]:
    values: list[float] = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            if ":" in item:
                start, step, stop = (float(x) for x in item.split(":"))
                if step <= 0:
                    raise ParseError(f"{key}: range step must be positive")
                n = int(math.floor((stop - start) / step + 1e-9))
                values.extend(round(start + i * step, 12) for i in range(n + 1))
            else:
                values.append(float(item))
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"{key}: non-numeric value {item!r}") from None
    if not values:
        raise ParseError(f"{key}: empty list")
    return values


def _int(key: str, text: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{key}: non-numeric value {text!r}") from None
    if value != int(value):
        raise ParseError(f"{key}: expected an integer, got {text!r}")
    return int(value)


def parse_config(text: str) -> SweepConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key.lower()] = value
    known = {"mode", "snr_db", "capacity", "c1", "c2", "trials", "seed", "j", "s_th", "d", "v",
             "cmax_offsets", "slots", "select", "jobs"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ParseError(f"unknown key: {unknown[0]}")
    if "mode" not in raw:
        raise ParseError("mode: missing")
    mode = raw["mode"]
    if mode not in MODES:
        raise ParseError(f"unknown mode: {mode}")
    if "snr_db" not in raw:
        raise ParseError("snr_db: missing")
    snr = tuple(_expand("snr_db", raw["snr_db"]))

    if "c1" in raw or "c2" in raw:
        if "capacity" in raw:
            raise ParseError("capacity: give either capacity or c1/c2")
        c1 = _expand("c1", raw.get("c1", raw.get("c2", "")))
        c2 = _expand("c2", raw.get("c2", raw.get("c1", "")))
        if len(c1) != len(c2) and 1 not in (len(c1), len(c2)):
            raise ParseError("c2: c1 and c2 lists must have equal length")
        n = max(len(c1), len(c2))
        caps = tuple((c1[i if len(c1) > 1 else 0], c2[i if len(c2) > 1 else 0]) for i in range(n))
    elif "capacity" in raw:
        caps = tuple((c, c) for c in _expand("capacity", raw["capacity"]))
    else:
        raise ParseError("capacity: missing")
    if any(c < 0 for pair in caps for c in pair):
        raise ParseError("capacity: values must be >= 0")

    kwargs: dict = {}
    if "trials" in raw:
        kwargs["trials"] = _int("trials", raw["trials"])
        if kwargs["trials"] < 2:
            raise ParseError("trials: must be >= 2")
    if "seed" in raw:
        kwargs["seed"] = _int("seed", raw["seed"])
    if "j" in raw:
        levels = tuple(int(x) for x in _expand("J", raw["j"]))
        if any(x < 2 for x in levels):
            raise ParseError("J: levels must be >= 2")
        kwargs["j_levels"] = levels
    if "s_th" in raw:
        kwargs["s_th"] = tuple(_expand("s_th", raw["s_th"]))
    if "d" in raw:
        grid = tuple(_expand("d", raw["d"]))
        if any(not 0 < x <= 1 for x in grid):
            raise ParseError("d: distortions must lie in (0, 1]")
        kwargs["d"] = grid
    if "v" in raw:
        kwargs["v"] = _expand("v", raw["v"])[0]
    if "cmax_offsets" in raw:
        kwargs["cmax_offsets"] = tuple(_expand("cmax_offsets", raw["cmax_offsets"]))
    if "slots" in raw:
        kwargs["slots"] = _int("slots", raw["slots"])
    if "jobs" in raw:
        kwargs["jobs"] = max(1, _int("jobs", raw["jobs"]))
    select = raw.get("select", "all" if mode == "fc-sweep-d" else "max")
    if select not in ("all", "max"):
        raise ParseError(f"select: expected all or max, got {select!r}")
    return SweepConfig(mode=mode, snr_db=snr, capacities=caps, select=select, **kwargs)


# A task evaluates one point and returns (param, rate, stderr, trials).
def _point_tasks(cfg: SweepConfig, params: NetworkParams) -> list:
    mode = cfg.mode
    if mode in ("ub-single", "ub-two"):
        model = "single" if mode == "ub-single" else "two"

        def ub():
            res = coop_ub(params.sigma2, params.csum, model)
            return res.nu, res.rate, 0.0, 0
        return [ub]
    if mode in ("check-ub-single", "check-ub-two", "mmse"):
        fn = {"check-ub-single": check_ub_single, "check-ub-two": check_ub_two,
              "mmse": mmse_rate}[mode]

        def mc():
            est = fn(params, cfg.trials, cfg.seed)
            return math.nan, est.mean, est.stderr, est.trials
        return [mc]
    if mode == "qci":
        return [lambda j=j: (float(j), qci_rate(params, j).rate, 0.0, 0) for j in cfg.j_levels]
    if mode == "tci":
        return [lambda s=s: (s, tci_rate(params, s), 0.0, 0) for s in cfg.s_th]
    if mode in ("fc", "fc-sweep-d"):
        def fc(d):
            est = fc_rate(params, d, cfg.trials, cfg.seed)
            return d, est.mean, est.stderr, est.trials
        return [lambda d=d: fc(d) for d in cfg.d]
    if mode == "dpp":
        base = max(params.c1, params.c2)

        def dpp(off):
            res = dpp_run(params, DppConfig(v=cfg.v, c_max=base + off, slots=cfg.slots), cfg.seed)
            return res.c_max, res.estimate.mean, res.estimate.stderr, res.estimate.trials
        return [lambda o=o: dpp(o) for o in cfg.cmax_offsets]
    raise ParseError(f"unknown mode: {mode}")


def _evaluate(cfg: SweepConfig, snr: float, cap: tuple[float, float], task) -> SweepRecord:
    start = time.perf_counter()
    try:
        params = NetworkParams.from_snr_db(snr, cap[0], cap[1])
        param, rate, stderr, trials = task(params)
        err = None
    except Exception as exc:  # one failed point must not abort the sweep
        param, rate, stderr, trials, err = math.nan, math.nan, math.nan, 0, f"{type(exc).__name__}: {exc}"
    wall = (time.perf_counter() - start) * 1e3 if cfg.timing else 0.0
    return SweepRecord(mode=cfg.mode, snr_db=snr, c1=cap[0], c2=cap[1], param=float(param),
                       rate_bits=float(rate), stderr=float(stderr), trials=int(trials),
                       seed=cfg.seed, wall_ms=wall, error=err)


def _n_tasks(cfg: SweepConfig) -> int:
    probe = NetworkParams(sigma2=1.0, c1=1.0, c2=1.0)
    return len(_point_tasks(cfg, probe))


def run_sweep(cfg: SweepConfig) -> list[SweepRecord]:
    """Evaluate every (snr, capacity, scheme parameter) point in config order.

    With ``select=max`` only the best parameter per (snr, capacity) is kept.
    Ties keep the larger distortion in the FC modes and the earlier
    parameter otherwise.
    """
    jobs = []
    n = _n_tasks(cfg)
    for snr in cfg.snr_db:
        for cap in cfg.capacities:
            for i in range(n):
                jobs.append((snr, cap, i))

    def run(job):
        snr, cap, i = job

        def task(params):
            return _point_tasks(cfg, params)[i]()
        return _evaluate(cfg, snr, cap, task)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(job) for job in jobs]

    if cfg.select == "all" or n == 1:
        return records
    selected = []
    for k in range(0, len(records), n):
        group = records[k:k + n]
        ok = [r for r in group if not math.isnan(r.rate_bits)]
        if not ok:
            selected.append(group[0])
            continue
        best = ok[0]
        for r in ok[1:]:
            tie_wins = cfg.mode in ("fc", "fc-sweep-d") and r.param > best.param
            if r.rate_bits > best.rate_bits or (r.rate_bits == best.rate_bits and tie_wins):
                best = r
        wall = sum(r.wall_ms for r in group)
        selected.append(replace(best, wall_ms=wall))
    return selected


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def format_record(r: SweepRecord) -> str:
    return ",".join(_fmt(x) for x in (r.mode, r.snr_db, r.c1, r.c2, r.param, r.rate_bits,
                                      r.stderr, r.trials, r.seed, r.wall_ms))


def write_csv(records, path) -> None:
    """Write records with the fixed header; ``path=None`` writes to stdout."""
    text = HEADER + "\n" + "".join(format_record(r) + "\n" for r in records)
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    keys = lines[0].split(",")
    return [dict(zip(keys, line.split(","))) for line in lines[1:]]


def verify_records(records) -> list[str]:
    """Check every finite rate against the matching cooperative bound."""
    failures = []
    cache: dict = {}
    for r in records:
        if math.isnan(r.rate_bits):
            continue
        model = "two" if r.mode in TWO_USER_MODES else "single"
        key = (r.snr_db, r.c1 + r.c2, model)
        if key not in cache:
            cache[key] = coop_ub(10.0 ** (-r.snr_db / 10.0), r.c1 + r.c2, model).rate
        ub = cache[key]
        slack = 3.0 * r.stderr + 1e-9
        if r.rate_bits < -1e-12:
            failures.append(f"{r.mode} snr={r.snr_db} C=({r.c1},{r.c2}): negative rate {r.rate_bits}")
        if r.rate_bits > ub + slack:
            failures.append(f"{r.mode} snr={r.snr_db} C=({r.c1},{r.c2}): rate {r.rate_bits:.6g} "
                            f"exceeds cooperative bound {ub:.6g}")
        if r.rate_bits > r.c1 + r.c2 + slack:
            failures.append(f"{r.mode} snr={r.snr_db} C=({r.c1},{r.c2}): rate exceeds c1 + c2")
    return failures


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diamond-relay", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="sweep config file")
    p.add_argument("--out", help="output CSV path (stdout if omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--trials", type=int, help="override the config trial count")
    p.add_argument("--jobs", type=int, help="evaluate sweep points concurrently")
    p.add_argument("--verify", action="store_true",
                   help="check every rate against the cooperative upper bound")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock milliseconds (output is then not byte-stable)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        if args.trials is not None:
            if args.trials < 2:
                raise ParseError("trials: must be >= 2")
            cfg = replace(cfg, trials=args.trials)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=max(1, args.jobs))
    cfg = replace(cfg, timing=args.timing, out=args.out)

    records = run_sweep(cfg)
    for r in records:
        if r.error:
            print(f"warning: {r.mode} snr={r.snr_db} C=({r.c1},{r.c2}): {r.error}", file=sys.stderr)
    try:
        write_csv(records, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.verify:
        failures = verify_records(records)
        for f in failures:
            print(f"verify: {f}", file=sys.stderr)
        if failures:
            return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
