"""Sweep driver: evaluates analytics, runs simulations, and writes one row
per parameter-grid point as CSV or JSON lines.

Seeds per grid point derive from the run seed XORed with a stable hash of
the point's coordinates, so reruns (and any worker-pool schedule) are
byte-identical. Progress goes to stderr; results go to the output file or
stdout, never mixed.

Exit codes: 0 success, 1 usage error, 2 self-check (``ok`` column) failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import analytic, rlnc, uplink
from .analytic import ChannelParams
from .gf import field_for_name

MODES = ("analytic-sweep", "simulate", "plr", "sic", "downlink-e2e", "oracle-check")
STOCHASTIC_MODES = ("simulate", "plr", "sic", "downlink-e2e")

WORKERS_ENV = "ALOHA_DIVERSITY_WORKERS"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2
EXIT_IO = 3


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    rho: list[float]
    eps: list[float]
    k: list[int]
    slots: int = 100_000
    trials: int = 100_000
    seed: int | None = None
    field_name: str = "gf256"
    slack: float = 0.05
    payload_symbols: int = rlnc.DEFAULT_PAYLOAD_SYMBOLS
    genie_rates: bool = False
    out: str = "-"
    format: str = "csv"
    plot: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise UsageError(f"mode: must be one of {', '.join(MODES)}")
        for name in ("rho", "eps", "k"):
            if not getattr(self, name):
                raise UsageError(f"{name}: empty range")
        if any(r < 0 for r in self.rho):
            raise UsageError("rho: must be >= 0")
        if any(not 0 <= e <= 1 for e in self.eps):
            raise UsageError("eps: must be in [0, 1]")
        if any(k < 1 for k in self.k):
            raise UsageError("k: must be >= 1")
        if self.mode in STOCHASTIC_MODES and self.seed is None:
            raise UsageError(f"seed: required for mode {self.mode}")
        if self.mode == "sic" and set(self.k) != {2}:
            raise UsageError("k: sic mode supports exactly k=2")
        if self.slots < 1:
            raise UsageError("slots: must be >= 1")
        if self.trials < 1:
            raise UsageError("trials: must be >= 1")
        if self.format not in ("csv", "jsonl"):
            raise UsageError("format: must be csv or jsonl")
        if self.slack < 0:
            raise UsageError("slack: must be >= 0")
        try:
            field_for_name(self.field_name)
        except ValueError:
            raise UsageError("field: must be gf256 or gf65536") from None


def parse_axis(text: str, cast=float) -> list:
    """``a:b:step`` inclusive range, or a comma list, or a single value."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range {text!r}: expected start:stop:step")
        start, stop, step = (float(x) for x in parts)
        if step <= 0:
            raise UsageError(f"range {text!r}: step must be > 0")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        if n < 1:
            raise UsageError(f"range {text!r}: empty")
        return [cast(round(start + i * step, 12)) for i in range(n)]
    return [cast(float(v)) for v in text.split(",") if v.strip()]


def point_seed(seed: int, rho: float, eps: float, k: int) -> int:
    tag = zlib.crc32(f"{rho!r}|{eps!r}|{k}".encode())
    return (seed ^ tag) & 0x7FFFFFFF


# -- per-point evaluation ---------------------------------------------------


def _row_analytic(cfg: ExperimentConfig, rho: float, eps: float, k: int) -> dict:
    p = ChannelParams(rho, eps, k)
    t_sa = analytic.throughput_sa(p)
    t_up = analytic.throughput_uplink(p)
    plr = analytic.packet_loss(p)
    ok = 0.0 <= plr <= 1.0 and t_up >= t_sa - 1e-12
    return {
        "rho": rho, "eps": eps, "k": k,
        "throughput_sa": t_sa, "throughput_uplink": t_up, "packet_loss": plr,
        "ok": ok,
    }


def _row_simulate(cfg: ExperimentConfig, rho: float, eps: float, k: int) -> dict:
    p = ChannelParams(rho, eps, k)
    ledger, _ = uplink.run_uplink(p, cfg.slots, point_seed(cfg.seed, rho, eps, k))
    est = uplink.throughput_estimate(ledger)
    ref = analytic.throughput_uplink(p)
    ok = abs(est.mean - ref) <= 4 * est.std_err + 1e-12
    return {
        "rho": rho, "eps": eps, "k": k,
        "throughput_sim": est.mean, "throughput_analytic": ref,
        "throughput_sim_stderr": est.std_err,
        "ok": ok,
    }


def _row_plr(cfg: ExperimentConfig, rho: float, eps: float, k: int) -> dict:
    p = ChannelParams(rho, eps, k)
    est = uplink.estimate_plr(p, cfg.trials, point_seed(cfg.seed, rho, eps, k))
    ref = analytic.packet_loss(p)
    ok = abs(est.mean - ref) <= 4 * est.std_err + 1e-12
    return {
        "rho": rho, "eps": eps, "k": k,
        "plr_sim": est.mean, "plr_analytic": ref, "plr_sim_stderr": est.std_err,
        "ok": ok,
    }


def _row_sic(cfg: ExperimentConfig, rho: float, eps: float, k: int) -> dict:
    p = ChannelParams(rho, eps, k)
    est = uplink.simulate_sic_two(p, cfg.slots, point_seed(cfg.seed, rho, eps, k))
    ref = analytic.sic_gain_two(p)
    ok = abs(est.mean - ref) <= 4 * est.std_err + 1e-12
    return {
        "rho": rho, "eps": eps, "k": k,
        "sic_sim": est.mean, "sic_analytic": ref,
        "throughput_af_analytic": analytic.throughput_af_two(p),
        "sic_sim_stderr": est.std_err,
        "ok": ok,
    }


def _row_downlink(cfg: ExperimentConfig, rho: float, eps: float, k: int) -> dict:
    p = ChannelParams(rho, eps, k)
    fld = field_for_name(cfg.field_name)
    base = point_seed(cfg.seed, rho, eps, k)
    successes = 0
    rank_sum = 0
    var_sum = 0
    ok = True
    for t in range(cfg.trials):
        out = rlnc.run_downlink_experiment(
            p, cfg.slots, fld, (base, t), slack=cfg.slack,
            payload_symbols=cfg.payload_symbols, genie=cfg.genie_rates,
        )
        rep = out.report
        successes += rep.success and out.payloads_exact
        rank_sum += rep.rank
        var_sum += rep.n_variables
        if not out.payloads_exact:
            ok = False
        if rep.success and rlnc.verify_rank_conditions(rep):
            ok = False  # a successful decode must satisfy the counting bound
    return {
        "rho": rho, "eps": eps, "k": k,
        "successes": successes, "trials": cfg.trials,
        "success_rate": successes / cfg.trials,
        "mean_rank": rank_sum / cfg.trials, "mean_variables": var_sum / cfg.trials,
        "ok": ok,
    }


def _row_oracle(cfg: ExperimentConfig, rho: float, eps: float, k: int) -> dict:
    p = ChannelParams(rho, eps, k)
    ref = analytic.throughput_uplink(p)
    orc = uplink.oracle_throughput(rho, eps, k)
    err = abs(ref - orc)
    return {
        "rho": rho, "eps": eps, "k": k,
        "throughput_analytic": ref, "throughput_oracle": orc, "abs_err": err,
        "ok": err <= 1e-9,
    }


_ROW_FN = {
    "analytic-sweep": _row_analytic,
    "simulate": _row_simulate,
    "plr": _row_plr,
    "sic": _row_sic,
    "downlink-e2e": _row_downlink,
    "oracle-check": _row_oracle,
}


def _eval_point(args: tuple) -> dict:
    cfg, rho, eps, k = args
    return _ROW_FN[cfg.mode](cfg, rho, eps, k)


def run_experiment(cfg: ExperimentConfig) -> tuple[list[dict], bool]:
    """Evaluate every grid point in grid order; returns (rows, all ok)."""
    cfg.validate()
    grid = [(cfg, rho, eps, k) for rho in cfg.rho for eps in cfg.eps for k in cfg.k]
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_eval_point, grid))
    else:
        rows = [_eval_point(g) for g in grid]
    print(f"{cfg.mode}: {len(rows)} grid points done", file=sys.stderr)
    return rows, all(r["ok"] for r in rows)


# -- serialization ----------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def write_rows(rows: list[dict], fmt: str, f) -> None:
    if fmt == "csv":
        if rows:
            f.write(",".join(rows[0].keys()) + "\n")
        for r in rows:
            f.write(",".join(_fmt(v) for v in r.values()) + "\n")
    else:
        for r in rows:
            f.write(json.dumps(r) + "\n")


# -- argument handling -------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> _Parser:
    ap = _Parser(prog="aloha-diversity", description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--rho", help="load axis: a:b:step, comma list, or value")
    ap.add_argument("--eps", help="erasure axis: a:b:step, comma list, or value")
    ap.add_argument("--k", help="receiver-count axis: a:b:step, comma list, or value")
    ap.add_argument("--slots", type=int, help="uplink slots per simulated point")
    ap.add_argument("--trials", type=int, help="trials per point (plr / downlink-e2e)")
    ap.add_argument("--seed", type=int, help="run seed; required for stochastic modes")
    ap.add_argument("--field", dest="field_name", choices=("gf256", "gf65536"))
    ap.add_argument("--slack", type=float, help="rate margin for downlink-e2e")
    ap.add_argument("--payload-symbols", type=int, dest="payload_symbols")
    ap.add_argument("--out", help="output path, or - for stdout")
    ap.add_argument("--format", choices=("csv", "jsonl"))
    ap.add_argument("--config", help="flat key=value file; flags override it")
    ap.add_argument("--genie-rates", action="store_true", default=None,
                    help="size downlink budgets from the realized ledger")
    ap.add_argument("--plot", action="store_true", default=None,
                    help="also render a PNG next to the output file")
    return ap


def read_config_file(path: str) -> dict:
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


_BOOL_KEYS = {"genie_rates", "plot"}
_INT_KEYS = {"slots", "trials", "seed", "payload_symbols"}
_FLOAT_KEYS = {"slack"}
_AXIS_KEYS = {"rho": float, "eps": float, "k": int}


def build_config(cli_values: dict, file_values: dict) -> ExperimentConfig:
    merged = dict(file_values)
    merged.update({k: v for k, v in cli_values.items() if v is not None})
    if "mode" not in merged:
        raise UsageError("mode: required")
    kwargs: dict = {"mode": merged["mode"]}
    for axis, cast in _AXIS_KEYS.items():
        if axis not in merged:
            raise UsageError(f"{axis}: required")
        raw = merged[axis]
        kwargs[axis] = parse_axis(raw, cast) if isinstance(raw, str) else raw
    for key in ("out", "format", "field_name"):
        if key in merged:
            kwargs[key] = merged[key]
    for key in _INT_KEYS:
        if key in merged:
            kwargs[key] = int(merged[key])
    for key in _FLOAT_KEYS:
        if key in merged:
            kwargs[key] = float(merged[key])
    for key in _BOOL_KEYS:
        if key in merged:
            v = merged[key]
            kwargs[key] = v if isinstance(v, bool) else v.lower() in ("1", "true", "yes")
    return ExperimentConfig(**kwargs)


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        file_values = read_config_file(ns.config) if ns.config else {}
        cli_values = {k: v for k, v in vars(ns).items() if k != "config"}
        cfg = build_config(cli_values, file_values)
        rows, all_ok = run_experiment(cfg)
    except UsageError as e:
        print(f"aloha-diversity: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"aloha-diversity: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        if cfg.out == "-":
            write_rows(rows, cfg.format, sys.stdout)
        else:
            with open(cfg.out, "w") as f:
                write_rows(rows, cfg.format, f)
            if cfg.plot:
                from . import plots

                stem, _, _ = cfg.out.rpartition(".")
                plots.render(cfg.mode, rows, (stem or cfg.out) + ".png")
    except OSError as e:
        print(f"aloha-diversity: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if all_ok else EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
