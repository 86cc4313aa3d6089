"""Command-line front end: ``fockreg verify | evolve | study``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for a bad
configuration.  A run is described by a :class:`RunConfig`, read from a YAML
or JSON file with ``--config`` and then overridden by flags.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .convergence import (
    DEFAULT_GUARD,
    DEFAULT_T_GRID,
    TWO_MODE_TOL,
    ConvergenceReport,
    run_convergence_study,
    two_mode_invariance,
)
from .dynamics import (
    alpha_spin_closed_form,
    closed_form_free,
    evolve_oracle,
    evolve_series,
    evolve_spin_boson_sectored,
)
from .fock_core import (
    EXACT_TOL,
    FockOperator,
    IdentityReport,
    TruncationError,
    TruncationSpec,
    annihilation,
    commutator,
    compose,
    identity,
    number,
    projection_pi,
    projection_q,
    truncated_annihilation,
    verify_ladder_identities,
)
from .models import Displaced, Free, SpinBoson, TwoMode, model_from_dict, regularize
from .seminorms import DECAY_FAMILIES, decay_function, lassner_opnorm, lassner_sum
from .spin_lattice import SpinSystem
from .tensor import TensorOperator

__all__ = ["RunConfig", "ConfigError", "parse_config", "serialize_config", "main", "EXIT_OK", "EXIT_FAIL", "EXIT_CONFIG"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
EVOLVE_TOL = 1e-9
VERIFY_AMBIENT_DIM = 40
VERIFY_MAX_INDEX = 30
# dense oracle comparison for spin-boson evolution is skipped above this size
ORACLE_MAX_DIM = 1200

MODEL_VARIANTS = ("free", "displaced", "two_mode", "spin_boson", "spin_boson_multi")
MODEL_KEYS = {"variant", "gamma", "J", "sites", "gammas"}
DEFAULT_SCHEDULES = {"free": [3, 6, 12], "displaced": [3, 6, 12], "two_mode": [1, 3, 6]}


class ConfigError(ValueError):
    """The run configuration is malformed or inconsistent."""


@dataclass
class RunConfig:
    model: dict
    ambient_dim: int | None = None
    guard: int = DEFAULT_GUARD
    max_index: int | None = None
    decay: dict = field(default_factory=lambda: {"name": "exp", "beta": 1.0})
    k: list = field(default_factory=lambda: [0, 1, 2])
    t_grid: list = field(default_factory=lambda: [float(t) for t in DEFAULT_T_GRID])
    schedule: list | None = None
    r: int | None = None
    observable: str = "a"
    out: str | None = None
    format: str = "json"
    seed: int = 0
    jobs: int = 1
    inject_fault: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        if "model" not in data or data["model"] is None:
            raise ConfigError("'model' is required")
        data = dict(data)
        model = data["model"]
        if isinstance(model, str):
            model = {"variant": model}
        data["model"] = dict(model) if isinstance(model, dict) else model
        try:
            if data.get("t_grid") is not None:
                data["t_grid"] = [float(t) for t in data["t_grid"]]
            if data.get("k") is not None:
                data["k"] = [_as_int(k, "k") for k in data["k"]]
            if data.get("schedule") is not None:
                data["schedule"] = [_as_int(L, "schedule") for L in data["schedule"]]
            for key in ("ambient_dim", "max_index", "r"):
                if data.get(key) is not None:
                    data[key] = _as_int(data[key], key)
            for key in ("guard", "seed", "jobs"):
                if key in data:
                    data[key] = _as_int(data[key], key)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        m = self.model
        if not isinstance(m, dict) or m.get("variant") not in MODEL_VARIANTS:
            raise ConfigError(f"model.variant must be one of {list(MODEL_VARIANTS)}")
        extra = sorted(set(m) - MODEL_KEYS)
        if extra:
            raise ConfigError(f"unknown model keys: {extra}")
        try:
            model_from_dict(m)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model: {exc}") from None
        if not self.t_grid:
            raise ConfigError("t grid must not be empty")
        if not all(math.isfinite(t) for t in self.t_grid):
            raise ConfigError("t grid values must be finite")
        if not self.k or any(k < 0 for k in self.k):
            raise ConfigError("k list must be non-empty with entries >= 0")
        if self.schedule is not None:
            if not self.schedule or any(L < 0 for L in self.schedule):
                raise ConfigError("cutoff schedule must be non-empty with entries >= 0")
            if list(self.schedule) != sorted(set(self.schedule)):
                raise ConfigError("cutoff schedule must be strictly ascending")
        if self.r is not None and self.r < 1:
            raise ConfigError("r must be >= 1")
        if self.ambient_dim is not None and self.ambient_dim < 1:
            raise ConfigError("ambient_dim must be >= 1")
        if self.max_index is not None and self.max_index < 0:
            raise ConfigError("max_index must be >= 0")
        if self.guard < 1:
            raise ConfigError("guard must be >= 1")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.observable not in ("a", "a+", "a2"):
            raise ConfigError("observable must be one of 'a', 'a+', 'a2'")
        if not isinstance(self.decay, dict) or self.decay.get("name") not in DECAY_FAMILIES:
            raise ConfigError(f"decay.name must be one of {sorted(DECAY_FAMILIES)}")
        try:
            self.decay_function()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid decay function: {exc}") from None

    def decay_function(self):
        params = {k: v for k, v in self.decay.items() if k != "name"}
        return decay_function(self.decay["name"], **params)

    def build_model(self):
        return model_from_dict(self.model)

    def variant(self) -> str:
        return self.model["variant"]

    def cutoffs(self) -> list:
        if self.schedule is not None:
            return list(self.schedule)
        v = self.variant()
        if v in DEFAULT_SCHEDULES:
            return DEFAULT_SCHEDULES[v]
        return [1, 2, 3] if self.r is not None else [2, 4, 6]

    def spec_for(self, L: int) -> TruncationSpec:
        if self.ambient_dim is None:
            return TruncationSpec.for_cutoff(L, self.guard)
        if L + 1 > self.ambient_dim:
            raise TruncationError(f"cutoff {L} does not fit in ambient dimension {self.ambient_dim}")
        return TruncationSpec(self.ambient_dim, L, min(self.guard, self.ambient_dim - L))


def _as_int(value, what):
    if isinstance(value, bool) or float(value) != int(value):
        raise ValueError(f"{what} must be an integer, got {value!r}")
    return int(value)


def parse_config(text: str) -> RunConfig:
    """YAML or JSON text to a validated config."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    return RunConfig.from_dict(data or {})


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False)


# ---- commands -----------------------------------------------------------------


def _projection_checks(spec: TruncationSpec, top: int, rng, report: IdentityReport, samples: int = 20):
    """Randomized projection algebra: ``Q_L Q_M = Q_min`` and ``Pi_l Pi_m = delta Pi_l``."""
    for _ in range(samples):
        L, M = (int(v) for v in rng.integers(0, top + 1, size=2))
        report.add("projection_product", (L, M), (projection_q(L, spec) @ projection_q(M, spec)).deviation(projection_q(min(L, M), spec)))
        l, m = (int(v) for v in rng.integers(0, top + 1, size=2))
        expected = projection_pi(l, spec) if l == m else projection_pi(l, spec) * 0.0
        report.add("projection_orthogonality", (l, m), (projection_pi(l, spec) @ projection_pi(m, spec)).deviation(expected))


def _corrupted_lowering(spec: TruncationSpec) -> FockOperator:
    a = annihilation(spec)
    m = np.array(a.entries, copy=True)
    m[2, 0] += 1e-3
    return FockOperator(m, a.trusted, "a_corrupt", a.upper, max(a.lower or 0, 2), a.support, a.growth)


def cmd_verify(cfg: RunConfig):
    D = cfg.ambient_dim if cfg.ambient_dim is not None else VERIFY_AMBIENT_DIM
    top = cfg.max_index if cfg.max_index is not None else min(VERIFY_MAX_INDEX, D - 1)
    spec = TruncationSpec(D)
    lowering = _corrupted_lowering(spec) if cfg.inject_fault else None
    report = verify_ladder_identities(spec, top, lowering=lowering)
    a = annihilation(spec) if lowering is None else lowering
    report.add("ccr", (), commutator(a, a.dag()).deviation(identity(spec)))
    N = number(spec)
    for L in range(0, min(20, D - 2) + 1):
        aL = truncated_annihilation(L, spec)
        q = projection_q(L, spec)
        report.add("regularization_coincidence", (L,), compose(aL.dag(), aL).deviation(q @ N @ q))
    _projection_checks(spec, top, np.random.default_rng(cfg.seed), report)
    rows = [
        {"identity": c.name, "indices": list(c.indices), "deviation": c.deviation, "satisfied": c.deviation <= EXACT_TOL}
        for c in sorted(report.worst().values(), key=lambda c: c.name)
    ]
    failed = [c.name for c in report.failures(EXACT_TOL)]
    payload = {
        "command": "verify",
        "ambient_dim": D,
        "max_index": top,
        "tolerance": EXACT_TOL,
        "max_deviation": report.max_deviation,
        "passed": not failed,
        "failures": failed,
        "worst": rows,
    }
    return payload, failed


def _evolve_single_mode(cfg, model, L, t, f):
    spec = cfg.spec_for(L)
    a = annihilation(spec)
    H = regularize(model, L, spec)
    oracle = evolve_oracle(H, a, t).operator
    out = []
    if isinstance(model, Free):
        closed = closed_form_free(L, t, spec).operator
        out.append(dict(check="closed_form_residual", measured=closed.deviation(oracle), bound=EVOLVE_TOL))
    series = evolve_series(H, a, t)
    out.append(dict(check="series_residual", measured=series.operator.deviation(oracle), bound=EVOLVE_TOL))
    for k in cfg.k:
        value, tail = lassner_sum(oracle, f, k)
        out.append(dict(check="seminorm_evolved", k=k, measured=value + tail, measured_opnorm=lassner_opnorm(oracle, f, k)))
    return out


def _evolve_spin_boson(cfg, model, L, t, f):
    spec = cfg.spec_for(L)
    if cfg.r is not None:
        model = model.with_sys(SpinSystem.chain(L**cfg.r))
    model.check_coupling(L)
    volume = model.volume
    out = []
    a = annihilation(spec)
    X = TensorOperator.product(None, a, spin_dim=model.sys.dim)
    boson_dim = spec.size ** len(model.gammas)
    if model.sys.dim * boson_dim <= ORACLE_MAX_DIM and len(model.gammas) == 1:
        sectored = evolve_spin_boson_sectored(model, X, t, L, spec).operator
        oracle = evolve_oracle(regularize(model, L, spec), X, t).operator
        dev = float(np.abs(sectored.to_dense() - oracle.to_dense()).max(initial=0.0))
        out.append(dict(check="sectored_vs_oracle", volume=volume, measured=dev, bound=EVOLVE_TOL))
    for k in cfg.k:
        cf = alpha_spin_closed_form(model, "x", model.sys.sites[0], t, L, spec, f, k)
        out.append(dict(check="closed_form_residual", volume=volume, k=k, measured=cf.residual))
    return out


def _evolve_point(cfg, model, L, t, f):
    if isinstance(model, TwoMode):
        return [dict(check="invariance_B", measured=two_mode_invariance(L, t), bound=TWO_MODE_TOL)]
    if isinstance(model, (Free, Displaced)):
        return _evolve_single_mode(cfg, model, L, t, f)
    if isinstance(model, SpinBoson):
        return _evolve_spin_boson(cfg, model, L, t, f)
    raise ConfigError(f"no evolution defined for {type(model).__name__}")


def cmd_evolve(cfg: RunConfig, report: ConvergenceReport):
    model = cfg.build_model()
    f = cfg.decay_function()
    grid = [(L, float(t)) for L in cfg.cutoffs() for t in cfg.t_grid]
    report.metadata.update({"command": "evolve", "model": cfg.model, "decay": f.name, "seed": cfg.seed})

    def work(point):
        L, t = point
        return point, _evolve_point(cfg, model, L, t, f)

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        for (L, t), rows in pool.map(work, grid):
            for row in rows:
                row.setdefault("decay", f.name)
                report.add(L=L, t=t, **row)
    return report


def cmd_study(cfg: RunConfig, report: ConvergenceReport):
    model = cfg.build_model()
    f = cfg.decay_function()
    indices = [(f, k) for k in cfg.k]
    report.metadata.update({"command": "study", "seed": cfg.seed})
    schedule = cfg.cutoffs()
    if not isinstance(model, TwoMode) and len(schedule) < 2:
        raise ConfigError("a study needs at least two cutoffs")
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        run_convergence_study(
            model, schedule, cfg.t_grid, indices, r=cfg.r, X=cfg.observable, mapper=pool.map, report=report
        )
    return report


# ---- output -------------------------------------------------------------------


def _verify_csv(payload) -> str:
    lines = ["identity,indices,deviation,satisfied"]
    for row in payload["worst"]:
        idx = " ".join(str(i) for i in row["indices"])
        lines.append(f"{row['identity']},{idx},{row['deviation']!r},{row['satisfied']}")
    return "\n".join(lines) + "\n"


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w") as fh:
        fh.write(text)


def _write_report(report: ConvergenceReport, cfg: RunConfig, both: bool):
    primary = report.to_json() if cfg.format == "json" else report.to_csv()
    _emit(primary, cfg.out)
    if both and cfg.out is not None:
        other = "csv" if cfg.format == "json" else "json"
        base, _ = os.path.splitext(cfg.out)
        report.write(f"{base}.{other}", other)


# ---- argument handling --------------------------------------------------------


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--out", help="output file (stdout if omitted)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--jobs", type=int, help="worker threads for grid points")
    common.add_argument("--seed", type=int, help="seed for randomized checks")
    common.add_argument("--model", help="model variant, e.g. free, displaced, two_mode, spin_boson")
    common.add_argument("--gamma", type=float, help="coupling or displacement strength")
    common.add_argument("--sites", type=int, help="number of spin sites")
    common.add_argument("--t-grid", type=_float_list, help="comma-separated times")
    common.add_argument("--schedule", type=_int_list, help="comma-separated ascending cutoffs")
    common.add_argument("--k", type=_int_list, help="comma-separated seminorm powers")
    common.add_argument("--r", type=int, help="couple volume to cutoff as |V| = L**r")
    common.add_argument("--ambient-dim", type=int, help="ambient Fock dimension D")
    common.add_argument("--max-index", type=int, help="largest index in the identity suite")
    common.add_argument("--observable", choices=("a", "a+", "a2"))
    common.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    common.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
    parser = argparse.ArgumentParser(prog="fockreg", description="Cutoff regularization of boson dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="projection and ladder identity suite")
    sub.add_parser("evolve", parents=[common], help="evolved-operator summaries per grid point")
    sub.add_parser("study", parents=[common], help="convergence study with bound checks")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {args.config}: {exc}") from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError("configuration must be a mapping")
        data.update(loaded or {})
    model = data.get("model", "free" if args.command == "verify" else None)
    model = {"variant": model} if isinstance(model, str) else dict(model or {})
    if args.model is not None:
        model = {"variant": args.model}
    if args.gamma is not None:
        model["gamma"] = args.gamma
    if args.sites is not None:
        model["sites"] = args.sites
    data["model"] = model or None
    for key in ("out", "format", "jobs", "seed", "t_grid", "schedule", "k", "r", "ambient_dim", "max_index", "observable"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    if args.inject_fault:
        data["inject_fault"] = True
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(serialize_config(cfg))
        return EXIT_OK

    if args.command == "verify":
        try:
            payload, failed = cmd_verify(cfg)
        except TruncationError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n" if cfg.format == "json" else _verify_csv(payload)
        _emit(text, cfg.out)
        if failed:
            print(f"FAILED identities: {', '.join(failed)}", file=sys.stderr)
            return EXIT_FAIL
        print(f"all identities hold (max deviation {payload['max_deviation']:.3e})", file=sys.stderr)
        return EXIT_OK

    report = ConvergenceReport()
    command = cmd_evolve if args.command == "evolve" else cmd_study
    try:
        command(cfg, report)
    except (ConfigError, TruncationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # flush what was computed, marked with the failure
        report.add(check="error", satisfied=False)
        report.metadata["error"] = f"{type(exc).__name__}: {exc}"
        _write_report(report, cfg, both=args.command == "study")
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _write_report(report, cfg, both=args.command == "study")
    failures = report.failures()
    if failures:
        names = sorted({r.check for r in failures})
        print(f"{len(failures)} failing rows: {', '.join(names)}", file=sys.stderr)
        return EXIT_FAIL
    print(f"{len(report.rows)} rows, all checks pass", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
