"""Command-line front end.

Subcommands mirror the library layers: diagnose, simulate, price, hedge,
utility, and report.  Every run writes a manifest.json echoing the resolved
configuration, the seed, the output file names, and the headline results, so
a run can be reproduced from its manifest alone.  All numeric CSV fields use
17 significant digits; outputs are byte-identical across reruns and worker
counts, with only the manifest's wall_clock_seconds varying.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import __version__, diagnostics, engine, gop, hedging, models, pricing, \
    utility as utility_mod
from .errors import BenchmarkPricerError, ConfigError

DEFAULT_PATHS = 10000
DEFAULT_STEPS = 256


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return _fmt(x)
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(c) for c in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return config


def _positive_int(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise ConfigError(f"{name} must be >= 1, got {value}")
    return int(value)


class _Run:
    """Resolved common settings for one subcommand invocation."""

    def __init__(self, args, command: str):
        self.command = command
        self.config = _load_config(args.config)
        self.seed = args.seed if args.seed is not None else self.config.get("seed", 0)
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        paths = args.paths if args.paths is not None else self.config.get(
            "paths", DEFAULT_PATHS)
        steps = args.steps if args.steps is not None else self.config.get(
            "steps", DEFAULT_STEPS)
        self.n_paths = _positive_int("paths", paths)
        self.n_steps = _positive_int("steps", steps)
        out = args.out if args.out is not None else self.config.get(
            "out", f"bp_{command}")
        self.out_dir = Path(out)
        self.model = self._resolve_model(args)
        self.started = time.perf_counter()
        self.outputs: dict[str, str] = {}
        self.results: dict = {}
        self._files: list[tuple[str, str, list, list]] = []
        self._json_files: list[tuple[str, str, dict]] = []

    def _resolve_model(self, args) -> models.MarketModel:
        if getattr(args, "model", None) is not None:
            return models.builtin_model(args.model)
        if "model" in self.config:
            return models.model_from_config(self.config["model"])
        raise ConfigError(
            "no model given: pass --model NAME or a config with a 'model' key")

    def bundle(self) -> engine.PathBundle:
        return engine.simulate_bundle(self.model, self.seed, self.n_paths,
                                      n_steps=self.n_steps)

    def add_csv(self, key: str, filename: str, header: list, rows: list) -> None:
        self._files.append((key, filename, header, rows))
        self.outputs[key] = filename

    def add_json(self, key: str, filename: str, payload: dict) -> None:
        self._json_files.append((key, filename, payload))
        self.outputs[key] = filename

    def config_echo(self) -> dict:
        echo = {"model": self.model.config(), "seed": int(self.seed),
                "paths": self.n_paths, "steps": self.n_steps}
        for key, value in self.config.items():
            if key not in ("model", "seed", "paths", "steps", "out"):
                echo[key] = value
        return echo

    def finish(self) -> int:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for _, filename, header, rows in self._files:
            _write_csv(self.out_dir / filename, header, rows)
        for _, filename, payload in self._json_files:
            (self.out_dir / filename).write_text(
                json.dumps(payload, indent=2, sort_keys=True,
                           default=_json_default) + "\n")
        manifest = {
            "command": self.command,
            "version": __version__,
            "config": self.config_echo(),
            "outputs": dict(self.outputs, manifest="manifest.json"),
            "results": self.results,
            "wall_clock_seconds": time.perf_counter() - self.started,
        }
        (self.out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True,
                       default=_json_default) + "\n")
        print(f"{self.command}: wrote {self.out_dir / 'manifest.json'}")
        return 0


def _cmd_diagnose(args) -> int:
    run = _Run(args, "diagnose")
    bundle = run.bundle()
    report = diagnostics.diagnose(run.model, bundle)
    verdicts = report.to_dict()
    run.results = verdicts
    run.add_json("diagnosis", "diagnose.json", verdicts)
    rows = []
    for i, total in enumerate(report.viability.profile):
        inc = report.viability.increments[i - 1] if i > 0 else 0.0
        rows.append([i, int(report.viability.octaves[i]), float(total), float(inc)])
    run.add_csv("viability_profile", "viability_profile.csv",
                ["level", "octaves", "mean_square_integral", "increment"], rows)
    return run.finish()


def _strategy_from_spec(spec, model: models.MarketModel):
    if isinstance(spec, str):
        if spec == "gop":
            return gop.gop_weights(model)
        if spec == "savings":
            return engine.constant_strategy("savings", np.zeros(model.n_assets))
        if spec.startswith("hold_"):
            idx = int(spec[5:]) - 1
            if not 0 <= idx < model.n_assets:
                raise ConfigError(
                    f"strategy '{spec}' refers to a missing asset "
                    f"(model has {model.n_assets})")
            w = np.zeros(model.n_assets)
            w[idx] = 1.0
            return engine.constant_strategy(spec, w)
        raise ConfigError(f"unknown strategy '{spec}'")
    if isinstance(spec, dict):
        if spec.get("kind") == "gop":
            return gop.gop_weights(model)
        if "weights" in spec:
            w = np.asarray(spec["weights"], dtype=float)
            if w.shape != (model.n_assets,):
                raise ConfigError(
                    f"strategy weights must have length {model.n_assets}, "
                    f"got shape {w.shape}")
            return engine.constant_strategy(spec.get("label", "custom"), w)
    raise ConfigError(f"cannot interpret strategy spec {spec!r}")


def _cmd_simulate(args) -> int:
    run = _Run(args, "simulate")
    if args.strategies is not None:
        specs = [s.strip() for s in args.strategies.split(",") if s.strip()]
    else:
        specs = run.config.get("strategies", ["gop", "hold_1", "savings"])
    strategies = [_strategy_from_spec(s, run.model) for s in specs]
    bundle = run.bundle()
    nodes = np.unique(np.linspace(0, run.n_steps, 11).astype(int))
    rows = []
    terminal = {}
    for strat in strategies:
        values = engine.simulate_portfolio(run.model, strat, 1.0, bundle)
        for node in nodes:
            col = values[:, node]
            rows.append([strat.label, float(bundle.grid.times[node]),
                         float(col.mean()),
                         float(col.std(ddof=1) / np.sqrt(col.size)),
                         float(col.min()), float(col.max())])
        terminal[strat.label] = {
            "mean": float(values[:, -1].mean()),
            "stderr": float(values[:, -1].std(ddof=1) / np.sqrt(values.shape[0])),
        }
    run.add_csv("portfolio_summary", "portfolio_summary.csv",
                ["strategy", "time", "mean", "stderr", "minimum", "maximum"],
                rows)
    if args.dump_paths:
        run.out_dir.mkdir(parents=True, exist_ok=True)
        engine.dump_paths_csv(bundle, run.out_dir / "paths.csv")
        run.outputs["paths"] = "paths.csv"
    run.results = {"terminal_discounted": terminal}
    return run.finish()


def _cmd_price(args) -> int:
    run = _Run(args, "price")
    claim_configs = run.config.get("claims", [{"kind": "zcb"},
                                              {"kind": "benchmark"}])
    claims = [pricing.claim_from_config(c) for c in claim_configs]
    bundle = run.bundle()
    complete = run.model.n_assets == run.model.n_drivers
    rows = []
    row_dicts = []
    for claim in claims:
        estimates = [pricing.real_world_price(claim, bundle)]
        if complete:
            estimates.append(pricing.upper_hedging_price(claim, bundle))
        for est in estimates:
            rows.append([run.model.name, est.claim_label, est.method,
                         est.value, est.stderr, est.n_paths, int(run.seed)])
            row_dicts.append({
                "model": run.model.name, "claim": est.claim_label,
                "method": est.method, "value": est.value,
                "stderr": est.stderr, "n_paths": est.n_paths,
                "seed": int(run.seed), "heavy_tailed": est.heavy_tailed,
            })
    run.add_csv("prices", "price.csv",
                ["model", "claim", "method", "value", "stderr", "n_paths",
                 "seed"], rows)
    run.results["rows"] = row_dicts
    if not complete:
        run.results["upper_hedging"] = (
            "skipped: market is incomplete (fewer assets than drivers)")
    if run.n_paths >= 1000:
        comparison = pricing.risk_neutral_comparison(bundle)
        run.results["risk_neutral"] = {
            "deflator_mean": comparison.deflator_gap.mean,
            "deflator_stderr": comparison.deflator_gap.stderr,
            "verdict": comparison.deflator_gap.verdict,
            "discrepancy": comparison.discrepancy,
            "reliable": comparison.risk_neutral_reliable,
            "note": comparison.note,
        }
    else:
        run.results["risk_neutral"] = "skipped: needs at least 1000 paths"
    return run.finish()


def _default_claim(model: models.MarketModel) -> dict:
    return {"kind": "call", "strike": float(model.initial_prices[0])}


def _cmd_hedge(args) -> int:
    run = _Run(args, "hedge")
    claim_config = run.config.get("claim", _default_claim(run.model))
    claim = pricing.claim_from_config(claim_config)
    bundle = run.bundle()
    result = hedging.replicate(claim, bundle)
    rows = [[k, float(bundle.grid.times[k]), float(result.mean_delta[k]),
             float(result.rms_running[k])] for k in range(run.n_steps)]
    run.add_csv("hedge_profile", "hedge.csv",
                ["step", "time", "mean_delta", "rms_running"], rows)
    summary = {
        "claim": result.claim_label,
        "initial_capital": result.initial_capital,
        "price_value": result.price.value,
        "price_stderr": result.price.stderr,
        "terminal_error_rms": result.terminal_error_rms,
        "terminal_error_max": result.terminal_error_max,
        "relative_rms": result.relative_rms,
        "fairness": {"fair": result.fairness.fair,
                     "worst_abs_z": result.fairness.worst_abs_z},
    }
    run.add_json("summary", "hedge_summary.json", summary)
    run.results = summary
    return run.finish()


def _cmd_utility(args) -> int:
    run = _Run(args, "utility")
    utility_configs = run.config.get(
        "utilities", [{"kind": "log"}, {"kind": "power", "exponent": 0.5}])
    capitals = run.config.get("initial_capitals", [1.0])
    claim_config = run.config.get("claim", {"kind": "zcb"})
    claim = pricing.claim_from_config(claim_config)
    specs = [utility_mod.utility_from_config(c) for c in utility_configs]
    bundle = run.bundle()
    rows = []
    row_dicts = []
    for spec in specs:
        for v in capitals:
            if not (isinstance(v, (int, float)) and not isinstance(v, bool)
                    and np.isfinite(v) and v > 0):
                raise ConfigError(f"initial capital must be positive, got {v!r}")
            sol = utility_mod.solve_lagrange(spec, float(v), bundle)
            wealth = utility_mod.optimal_terminal_wealth(
                spec, float(v), bundle, y_star=sol.y_star)
            eu = utility_mod.expected_utility(spec, wealth)
            price = utility_mod.indifference_price(
                spec, claim, bundle, float(v), y_star=sol.y_star)
            rows.append([spec.label, float(v), sol.y_star, eu,
                         claim.label, price.value, price.stderr])
            row_dicts.append({
                "utility": spec.label, "capital": float(v),
                "y_star": sol.y_star, "expected_utility": eu,
                "claim": claim.label, "indifference_price": price.value,
                "stderr": price.stderr,
            })
    run.add_csv("utility_summary", "utility.csv",
                ["utility", "capital", "y_star", "expected_utility", "claim",
                 "indifference_price", "stderr"], rows)
    run.results = {"rows": row_dicts}
    return run.finish()


def reference_value(model_config: dict, claim_label: str) -> float | None:
    """Closed-form real-world price for builtin model and claim families,
    used by the report subcommand to flag disagreements.  Returns None when
    no closed form is known."""
    if claim_label == "benchmark":
        return 1.0
    name = model_config.get("name")
    params = model_config.get("params", {})
    if name == "black_scholes":
        s0 = float(params.get("s0", 100.0))
        rate = float(params.get("rate", 0.02))
        vol = float(params.get("vol", 0.2))
        horizon = float(params.get("horizon", 1.0))
        if claim_label == "zcb":
            return float(np.exp(-rate * horizon))
        for prefix in ("call_", "put_"):
            if claim_label.startswith(prefix):
                strike = float(claim_label[len(prefix):])
                sq = vol * np.sqrt(horizon)
                d1 = (np.log(s0 / strike) + (rate + 0.5 * vol * vol) * horizon) / sq
                d2 = d1 - sq
                call = s0 * ndtr(d1) - strike * np.exp(-rate * horizon) * ndtr(d2)
                if prefix == "call_":
                    return float(call)
                return float(call - s0 + strike * np.exp(-rate * horizon))
    if name == "bessel3" and claim_label == "zcb":
        s0 = float(params.get("s0", 1.0))
        horizon = float(params.get("horizon", 1.0))
        return float(2.0 * ndtr(s0 / np.sqrt(horizon)) - 1.0)
    return None


def _cmd_report(args) -> int:
    config = _load_config(args.config)
    manifest_paths = list(args.manifests) + list(config.get("manifests", []))
    if not manifest_paths:
        raise ConfigError(
            "report needs manifest paths, via positional arguments or a "
            "config with a 'manifests' list")
    out_dir = Path(args.out if args.out is not None
                   else config.get("out", "bp_report"))
    started = time.perf_counter()
    rows = []
    skipped = []
    n_flagged = 0
    notes = []
    for path in manifest_paths:
        try:
            with open(path) as fh:
                manifest = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
        command = manifest.get("command")
        if command != "price":
            skipped.append({"source": str(path), "command": command})
            continue
        model_config = manifest.get("config", {}).get("model", {})
        rn = manifest.get("results", {}).get("risk_neutral")
        if isinstance(rn, dict) and rn.get("verdict") == "strict_supermartingale":
            notes.append(
                f"{path}: deflator strictly below martingale level "
                f"(E[Z_T] = {rn['deflator_mean']:.4f}); risk-neutral values "
                "are upper bounds only")
        for row in manifest.get("results", {}).get("rows", []):
            ref = reference_value(model_config, row["claim"])
            if ref is None:
                rows.append([str(path), row["model"], row["claim"],
                             row["method"], row["value"], row["stderr"],
                             "", "", ""])
                continue
            err = abs(row["value"] - ref)
            tol = max(4.0 * row["stderr"], 1e-9 * max(1.0, abs(ref)))
            ok = err <= tol
            if not ok:
                n_flagged += 1
            rows.append([str(path), row["model"], row["claim"], row["method"],
                         row["value"], row["stderr"], ref, err,
                         "yes" if ok else "no"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "summary.csv",
               ["source", "model", "claim", "method", "value", "stderr",
                "reference", "abs_error", "within_tolerance"], rows)
    manifest = {
        "command": "report",
        "version": __version__,
        "config": {"manifests": [str(p) for p in manifest_paths]},
        "outputs": {"manifest": "manifest.json", "summary": "summary.csv"},
        "results": {"n_rows": len(rows), "n_flagged": n_flagged,
                    "notes": notes, "skipped": skipped},
        "wall_clock_seconds": time.perf_counter() - started,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True,
                   default=_json_default) + "\n")
    print(f"report: wrote {out_dir / 'manifest.json'}")
    if n_flagged:
        print(f"report: {n_flagged} row(s) outside tolerance", file=sys.stderr)
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--model", help="builtin model name with default parameters")
    sub.add_argument("--seed", type=int, help="base seed for the path ensemble")
    sub.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    sub.add_argument("--steps", type=int, help="number of uniform time steps")
    sub.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="benchmark-pricer",
        description="diagnostics, simulation, pricing, hedging, and utility "
                    "valuation under the growth-optimal numeraire")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("diagnose", help="market viability diagnostics")
    _add_common(p)
    p.set_defaults(handler=_cmd_diagnose)

    p = subs.add_parser("simulate", help="simulate portfolios on a path bundle")
    _add_common(p)
    p.add_argument("--strategies",
                   help="comma list of gop, savings, hold_<i>")
    p.add_argument("--dump-paths", action="store_true",
                   help="also write the full path table")
    p.set_defaults(handler=_cmd_simulate)

    p = subs.add_parser("price", help="real-world and upper hedging prices")
    _add_common(p)
    p.set_defaults(handler=_cmd_price)

    p = subs.add_parser("hedge", help="construct and test a replicating hedge")
    _add_common(p)
    p.set_defaults(handler=_cmd_hedge)

    p = subs.add_parser("utility", help="optimal wealth and indifference prices")
    _add_common(p)
    p.set_defaults(handler=_cmd_utility)

    p = subs.add_parser("report", help="aggregate run manifests into a summary")
    p.add_argument("manifests", nargs="*", help="manifest.json paths")
    p.add_argument("--config", help="JSON config with a 'manifests' list")
    p.add_argument("--out", help="output directory")
    p.set_defaults(handler=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except BenchmarkPricerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
