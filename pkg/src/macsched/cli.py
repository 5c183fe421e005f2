"""Config-driven command line front end.

One JSON schema serves every subcommand:

    {
      "users": [{"arrivals": [[value, prob], ...],
                 "fading": [[power_gain, prob], ...]}, ...],
      "gains": [a1, a2],            # fixed-fading channel power gains
      "dmax": 1,
      "scheduler": "identity" | "via" | "robust" | "dd",
      "vi":   {"gamma": 0.99, "delta": 1, "tol": 1e-9},
      "dd":   {"beta": 0.9},
      "sim":  {"slots": 100000, "reps": 1, "seed": 7, "trace": false},
      "sweep": {"axis": "alpha" | "gamma_a" | "p1", "grid": [...],
                "schemes": [...], "deltas": [...], "p_other": 0.25}
    }

Numbers may be given as JSON numbers or exact-rational strings ("1/12").
Specify either per-user "fading" laws (dynamic fading) or "gains"
(fixed fading), not both.  All outputs are deterministic functions of
(config, seed): re-running a command overwrites identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import baselines, sim
from .alloc_unit import (
    AllocationReport,
    allocate_dynamic,
    allocate_fixed,
    build_pseudo_cdf,
    verify_outage_free,
)
from .dist import DiscreteLaw, DistributionError, RateFadingLaw, as_fraction
from .iteropt import IterOptTrace, iteropt, rate_power_curve
from .mdp import VIConfig, stationary_rate_law, value_iteration


class ConfigError(ValueError):
    """Schema violation, annotated with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _fail(path: str, message: str):
    raise ConfigError(path, message)


def _num(raw, path: str) -> Fraction:
    try:
        return as_fraction(raw)
    except (DistributionError, ValueError, TypeError, ZeroDivisionError) as e:
        _fail(path, f"not a number: {e}")


def _law(raw, path: str) -> DiscreteLaw:
    if not isinstance(raw, list) or not raw:
        _fail(path, "expected a non-empty list of [value, prob] pairs")
    pairs = []
    for i, item in enumerate(raw):
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            _fail(f"{path}[{i}]", "expected a [value, prob] pair")
        pairs.append((_num(item[0], f"{path}[{i}][0]"), _num(item[1], f"{path}[{i}][1]")))
    try:
        return DiscreteLaw.from_pairs(pairs)
    except DistributionError as e:
        _fail(path, str(e))


class Config:
    """Validated view of the JSON document."""

    def __init__(self, doc: dict):
        if not isinstance(doc, dict):
            _fail("$", "config root must be an object")
        users = doc.get("users")
        if not isinstance(users, list) or not users:
            _fail("users", "expected a non-empty list")
        self.arrivals: list[DiscreteLaw] = []
        self.fading: list[DiscreteLaw | None] = []
        for i, u in enumerate(users):
            if not isinstance(u, dict) or "arrivals" not in u:
                _fail(f"users[{i}]", "expected an object with an 'arrivals' law")
            self.arrivals.append(_law(u["arrivals"], f"users[{i}].arrivals"))
            if "fading" in u:
                law = _law(u["fading"], f"users[{i}].fading")
                if any(v <= 0 for v in law.values):
                    _fail(f"users[{i}].fading", "power gains must be positive")
                self.fading.append(law)
            else:
                self.fading.append(None)

        self.gains: list[Fraction] | None = None
        if "gains" in doc:
            raw = doc["gains"]
            if not isinstance(raw, list) or len(raw) != len(users):
                _fail("gains", f"expected {len(users)} entries")
            self.gains = [_num(g, f"gains[{i}]") for i, g in enumerate(raw)]
            if any(g <= 0 for g in self.gains):
                _fail("gains", "power gains must be positive")

        self.dynamic = any(f is not None for f in self.fading)
        if self.dynamic and self.gains is not None and any(g != 1 for g in self.gains):
            _fail("gains", "specify per-user fading laws or gains, not both")

        self.dmax = doc.get("dmax", 1)
        if not isinstance(self.dmax, int) or self.dmax < 1:
            _fail("dmax", "expected an integer >= 1")
        self.scheduler = doc.get("scheduler", "identity")
        if self.scheduler not in ("identity", "via", "robust", "dd"):
            _fail("scheduler", f"unknown scheduler {self.scheduler!r}")

        vi = doc.get("vi", {})
        if not isinstance(vi, dict):
            _fail("vi", "expected an object")
        try:
            self.vi = VIConfig(
                gamma=float(vi.get("gamma", 0.99)),
                delta=_num(vi.get("delta", 1), "vi.delta"),
                tol=float(vi.get("tol", 1e-9)),
            )
        except Exception as e:
            _fail("vi", str(e))

        dd = doc.get("dd", {})
        self.dd_beta = float(dd.get("beta", 0.9)) if isinstance(dd, dict) else _fail("dd", "expected an object")

        s = doc.get("sim", {})
        if not isinstance(s, dict):
            _fail("sim", "expected an object")
        self.slots = s.get("slots", 10_000)
        self.reps = s.get("reps", 1)
        self.seed = s.get("seed", 0)
        self.trace = bool(s.get("trace", False))
        if not isinstance(self.slots, int) or self.slots < 1:
            _fail("sim.slots", "expected an integer >= 1")
        if not isinstance(self.reps, int) or self.reps < 1:
            _fail("sim.reps", "expected an integer >= 1")

        self.sweep = doc.get("sweep")
        if self.sweep is not None:
            if not isinstance(self.sweep, dict):
                _fail("sweep", "expected an object")
            axis = self.sweep.get("axis")
            if axis not in ("alpha", "gamma_a", "p1"):
                _fail("sweep.axis", f"unknown axis {axis!r}")
            grid = self.sweep.get("grid")
            if not isinstance(grid, list) or not grid:
                _fail("sweep.grid", "expected a non-empty list")

    def rate_fading_laws(self) -> list[RateFadingLaw]:
        out = []
        for i, (arr, fad) in enumerate(zip(self.arrivals, self.fading)):
            out.append(RateFadingLaw(arr, fad) if fad is not None else RateFadingLaw.fixed(arr, 1))
        return out

    def fixed_gains(self) -> list[Fraction]:
        if self.gains is not None:
            return self.gains
        return [Fraction(1)] * len(self.arrivals)


def load_config(path: str | Path) -> Config:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError("$", f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError("$", f"invalid JSON: {e}")
    return Config(doc)


def _allocate(cfg: Config) -> AllocationReport:
    if cfg.dynamic:
        if len(cfg.arrivals) != 2:
            _fail("users", "dynamic-fading allocation is two-user")
        return allocate_dynamic(build_pseudo_cdf(*cfg.rate_fading_laws()))
    gains = cfg.fixed_gains()
    if len(cfg.arrivals) == 2:
        return allocate_fixed(cfg.arrivals[0], cfg.arrivals[1], gains[0], gains[1])
    from .alloc_unit import allocate_l_user

    order = sorted(range(len(gains)), key=lambda i: gains[i], reverse=True)
    if order != list(range(len(gains))):
        _fail("gains", "L-user allocation expects gains sorted descending")
    return allocate_l_user(cfg.arrivals, gains)


def _write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    for row in rows:
        w.writerow([format(v, ".9g") if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_alloc(cfg: Config, out: Path, fmt: str) -> int:
    report = _allocate(cfg)
    audit = verify_outage_free(report.table, report.laws)
    doc = report.to_json()
    doc["outage_audit"] = {"ok": audit.ok, "checked": audit.checked}
    if fmt in ("json", "both"):
        _write(out / "alloc_report.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if fmt in ("csv", "both"):
        rows = [
            (u, float(r), float(g), p, float(g) * p)
            for u in range(len(report.laws))
            for r, g, p in report.user_points(u)
        ]
        _write(out / "power_table.csv", _csv(rows, ["user", "rate", "gain", "power", "received"]))
    if not audit.ok:
        print(f"outage audit failed: {audit.violation or audit.missing}", file=sys.stderr)
        return 1
    return 0


def cmd_iteropt(cfg: Config, out: Path, fmt: str, init: str) -> int:
    if cfg.dynamic:
        _fail("users", "iterative optimization requires fixed fading")
    if len(cfg.arrivals) != 2:
        _fail("users", "iterative optimization is two-user")
    gains = cfg.fixed_gains()
    trace = iteropt(cfg.arrivals, gains, cfg.dmax, cfg.vi, init=init)
    if fmt in ("json", "both"):
        _write(out / "iteropt_trace.json", trace.dumps() + "\n")
    text = []
    for u, pol in enumerate(trace.final.policies):
        text.append(f"user {u + 1} final scheduler:")
        text.append(pol.render_matrix() if pol.dmax == 2 else pol.dumps())
        text.append("")
    _write(out / "schedulers.txt", "\n".join(text))
    return 0


def _build_sim_users(cfg: Config, report: AllocationReport) -> list[sim.SimUser]:
    users = []
    r_max = [Fraction(cfg.dmax) * arr.max_value() for arr in cfg.arrivals]
    for u, arr in enumerate(cfg.arrivals):
        fading = cfg.fading[u] if cfg.fading[u] is not None else DiscreteLaw.singleton(1)
        if cfg.scheduler == "identity":
            power = sim.TablePower(report.table, u)
            users.append(sim.SimUser(arr, power, "identity", fading))
        elif cfg.scheduler == "robust":
            curve = rate_power_curve(report, u, r_max[u])
            source = sim.ReceivedCurvePower(curve) if cfg.dynamic else sim.CurvePower(curve)
            users.append(sim.SimUser(arr, source, "robust", fading))
        elif cfg.scheduler == "dd":
            curve = rate_power_curve(report, u, r_max[u])
            users.append(
                sim.SimUser(arr, sim.ReceivedCurvePower(curve), "dd", fading, dd_beta=cfg.dd_beta)
            )
        else:
            _fail("scheduler", f"{cfg.scheduler!r} needs the iteropt pipeline")
    return users


def cmd_simulate(cfg: Config, out: Path, fmt: str) -> int:
    if cfg.scheduler == "via":
        if cfg.dynamic:
            _fail("scheduler", "via scheduling requires fixed fading")
        gains = cfg.fixed_gains()
        trace = iteropt(cfg.arrivals, gains, cfg.dmax, cfg.vi)
        r_max = Fraction(cfg.dmax) * max(a.max_value() for a in cfg.arrivals)
        users = []
        for u, arr in enumerate(cfg.arrivals):
            curve = rate_power_curve(trace.final.report, u, r_max)
            users.append(
                sim.SimUser(arr, sim.CurvePower(curve), trace.final.policies[u],
                            DiscreteLaw.singleton(1))
            )
    else:
        users = _build_sim_users(cfg, _allocate(cfg))
    report = sim.run(
        sim.SimConfig(users, dmax=cfg.dmax, slots=cfg.slots, reps=cfg.reps,
                      seed=cfg.seed, collect_trace=cfg.trace)
    )
    if fmt in ("json", "both"):
        _write(out / "sim_report.json", report.dumps() + "\n")
    if cfg.trace and fmt in ("csv", "both"):
        _write(out / "trace.csv", report.trace_csv())
    return 0


def cmd_baselines(cfg: Config, out: Path, fmt: str) -> int:
    if len(cfg.arrivals) != 2 or cfg.dynamic:
        _fail("users", "baseline comparison covers two fixed-fading users")
    gains = cfg.fixed_gains()
    report = allocate_fixed(cfg.arrivals[0], cfg.arrivals[1], gains[0], gains[1])
    tau, gtdm = baselines.gtdm_optimize(cfg.arrivals, gains)
    doc = {
        "tau_star": tau,
        "avg_sum_power": {
            "centralized": baselines.centralized_average(*cfg.arrivals, *gains),
            "decentral": report.achieved,
            "gtdm": gtdm,
            "stdm": baselines.stdm_average(cfg.arrivals, gains),
        },
    }
    _write(out / "baselines.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def _truncated_geometric(p: Fraction, n: int = 5) -> DiscreteLaw:
    """Law of B on {0..n-1} with P(B = k-1) proportional to p(1-p)^(k-1)."""
    q = 1 - p
    norm = 1 - q**n
    return DiscreteLaw.from_pairs([(k - 1, p * q ** (k - 1) / norm) for k in range(1, n + 1)])


def _gtdm_dynamic(laws: list[RateFadingLaw]) -> float:
    inv = [law.fading_law.expect(lambda h: 1 / h) for law in laws]

    def cost(tau: float) -> float:
        shares = (tau, 1.0 - tau)
        total = 0.0
        for law, w, s in zip(laws, inv, shares):
            total += float(w) * sum(
                float(p) * s * (2.0 ** (2.0 * float(b) / s) - 1.0)
                for b, p in law.rate_law.support()
            )
        return total

    tau, value = baselines.golden_section(cost)
    return value


def _stdm_dynamic(laws: list[RateFadingLaw]) -> float:
    total = 0.0
    for law in laws:
        w = float(law.fading_law.expect(lambda h: 1 / h))
        total += w * sum(
            float(p) * 0.5 * (2.0 ** (4.0 * float(b)) - 1.0) for b, p in law.rate_law.support()
        )
    return total


def _centralized_dynamic(laws: list[RateFadingLaw]) -> float:
    total = 0.0
    for b1, h1, p1 in laws[0].support_pairs():
        for b2, h2, p2 in laws[1].support_pairs():
            q1, q2 = baselines.centralized_power(b1, b2, h1, h2)
            total += float(p1 * p2) * (q1 + q2)
    return total


def _sweep_rows_dmax1(cfg: Config, laws: list[RateFadingLaw], value) -> list[tuple]:
    report = allocate_dynamic(build_pseudo_cdf(*laws))
    rows = [
        (value, "centralized", _centralized_dynamic(laws), "analytic"),
        (value, "decentral", report.achieved, "analytic"),
        (value, "gtdm", _gtdm_dynamic(laws), "analytic"),
        (value, "stdm", _stdm_dynamic(laws), "analytic"),
    ]
    return rows


def _tdma_via_cost(arrival: DiscreteLaw, gain: Fraction, dmax: int, vi: VIConfig) -> float:
    curve = baselines.stdm_curve(gain, Fraction(1, 2))
    policy = value_iteration(curve, arrival, dmax, vi)
    marginal = stationary_rate_law(policy, arrival)
    return sum(float(p) * curve(b) for b, p in marginal.support())


def _robust_sim_cost(cfg: Config, gains, curves, tdma: bool) -> float:
    users = []
    for u, arr in enumerate(cfg.arrivals):
        curve = curves[u]
        users.append(sim.SimUser(arr, sim.CurvePower(curve), "robust", DiscreteLaw.singleton(1)))
    report = sim.run(
        sim.SimConfig(users, dmax=cfg.dmax, slots=cfg.slots, reps=cfg.reps, seed=cfg.seed)
    )
    return report.avg_sum_power


def _sweep_rows_dmax(cfg: Config, gains: list[Fraction], value) -> list[tuple]:
    rows = []
    schemes = cfg.sweep.get("schemes", ["iteropt", "tdma_via", "robust_opt", "robust_tdma"])
    r_max = [Fraction(cfg.dmax) * arr.max_value() for arr in cfg.arrivals]
    unit_report = allocate_fixed(cfg.arrivals[0], cfg.arrivals[1], gains[0], gains[1])
    opt_curves = [rate_power_curve(unit_report, u, r_max[u]) for u in range(2)]
    tdma_curves = [baselines.stdm_curve(g, Fraction(1, 2)) for g in gains]
    for scheme in schemes:
        if scheme == "iteropt":
            trace = iteropt(cfg.arrivals, gains, cfg.dmax, cfg.vi)
            rows.append((value, "iteropt", trace.final.avg_sum_power, "analytic"))
        elif scheme == "tdma_via":
            cost = sum(
                _tdma_via_cost(arr, g, cfg.dmax, cfg.vi)
                for arr, g in zip(cfg.arrivals, gains)
            )
            rows.append((value, "tdma_via", cost, "analytic"))
        elif scheme == "robust_opt":
            rows.append(
                (value, "robust_opt", _robust_sim_cost(cfg, gains, opt_curves, False), "simulated")
            )
        elif scheme == "robust_tdma":
            rows.append(
                (value, "robust_tdma", _robust_sim_cost(cfg, gains, tdma_curves, True), "simulated")
            )
        else:
            _fail("sweep.schemes", f"unknown scheme {scheme!r}")
    for delta in cfg.sweep.get("deltas", []):
        vi = VIConfig(gamma=cfg.vi.gamma, delta=as_fraction(delta), tol=cfg.vi.tol)
        trace = iteropt(cfg.arrivals, gains, cfg.dmax, vi)
        rows.append((value, f"via@{delta}", trace.final.avg_sum_power, "analytic"))
    return rows


def cmd_sweep(cfg: Config, out: Path, fmt: str) -> int:
    if cfg.sweep is None:
        _fail("sweep", "sweep section required")
    if len(cfg.arrivals) != 2:
        _fail("users", "sweeps are two-user")
    axis = cfg.sweep["axis"]
    rows = []
    for raw in cfg.sweep["grid"]:
        value = float(raw)
        if axis == "alpha":
            alpha = _num(raw, "sweep.grid[]")
            if cfg.dmax == 1:
                laws = [
                    RateFadingLaw.fixed(cfg.arrivals[0], 1),
                    RateFadingLaw.fixed(cfg.arrivals[1], alpha),
                ]
                rows.extend(_sweep_rows_dmax1(cfg, laws, value))
            else:
                rows.extend(_sweep_rows_dmax(cfg, [Fraction(1), alpha], value))
        elif axis == "gamma_a":
            ga = _num(raw, "sweep.grid[]")
            laws = cfg.rate_fading_laws()
            scaled = DiscreteLaw.from_pairs(
                [(v * ga * ga, p) for v, p in laws[0].fading_law.atoms]
            )
            laws = [RateFadingLaw(laws[0].rate_law, scaled), laws[1]]
            rows.extend(_sweep_rows_dmax1(cfg, laws, value))
        elif axis == "p1":
            p1 = _num(raw, "sweep.grid[]")
            if not 0 < p1 < 1:
                _fail("sweep.grid", f"p1 value {raw} outside (0, 1)")
            laws = cfg.rate_fading_laws()
            laws = [
                RateFadingLaw(_truncated_geometric(p1), laws[0].fading_law),
                laws[1],
            ]
            rows.extend(_sweep_rows_dmax1(cfg, laws, value))
    _write(out / "sweep.csv", _csv(rows, ["value", "scheme", "avg_sum_power", "source"]))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="macsched",
        description="Decentralized MAC scheduling and power allocation toolkit",
    )
    parser.add_argument("command", choices=["alloc", "iteropt", "simulate", "baselines", "sweep"])
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override sim.seed")
    parser.add_argument("--init", choices=["tdma", "unitdelay"], default="unitdelay",
                        help="iteropt initialization")
    parser.add_argument("--format", choices=["json", "csv", "both"], default="both")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out)
        if args.command == "alloc":
            return cmd_alloc(cfg, out, args.format)
        if args.command == "iteropt":
            return cmd_iteropt(cfg, out, args.format, args.init)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.format)
        if args.command == "baselines":
            return cmd_baselines(cfg, out, args.format)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.format)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # allocator/solver failures keep their message
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
