"""Command-line entry point.

    poissonwf {trace,sweep,background,compare,theory,verify} [flags]

Settings come from, in increasing precedence: per-command defaults, a
``key = value`` file given with ``--config``, and command-line flags.
Exit status is 0 on success, 2 for an invalid configuration and 3 when a
``verify`` check fails.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as ex
from .errors import PoissonWFError
from .objective import parse_rule

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3

DEFAULT_GRID = ex.ExperimentConfig().m_over_n
KIND_DEFAULTS = {
    "trace": dict(m_over_n=(5.0,), trials=50),
    "sweep": dict(trials=100),
    "background": dict(m_over_n=(5.0,), trials=50, alpha1=ex.BACKGROUND_ALPHA1),
    "compare": dict(eta=0.1, trials=50),
    "theory": dict(n=64, m_over_n=(20.0,), alpha1=(0.8, 1.0), alpha2=(1.0, 1.2, 1.5),
                   rho=(0.02, 0.05, 1.0 / 15.0, 0.1, 0.15)),
    "verify": dict(n=64, m_over_n=(20.0,), probes=1000),
}


def parse_grid(text: str) -> tuple[float, ...]:
    """``3,4,5`` or ``start:step:stop`` (stop included)."""
    text = text.strip()
    if text.count(":") == 2:
        start, step, stop = (float(v) for v in text.split(":"))
        if not step > 0 or stop < start:
            raise ValueError(f"bad range {text!r}")
        count = int(round((stop - start) / step))
        return tuple(round(start + k * step, 10) for k in range(count + 1))
    return parse_list(text)


def parse_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# config key -> (ExperimentConfig field, converter)
OPTIONS = {
    "n": ("n", int),
    "m_over_n": ("m_over_n", parse_grid),
    "eta": ("eta", float),
    "rule": ("rule", parse_rule),
    "trials": ("trials", int),
    "iters": ("max_iters", int),
    "alpha1": ("alpha1", parse_list),
    "alpha2": ("alpha2", parse_list),
    "rho": ("rho", parse_list),
    "delta": ("delta", float),
    "threshold": ("threshold", float),
    "probes": ("probes", int),
    "seed": ("seed", int),
    "workers": ("workers", int),
    "out": ("out", str),
    "svg": ("svg", parse_bool),
}


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in OPTIONS:
            raise ValueError(f"{path}:{lineno}: expected '<option> = <value>', got {line!r}")
        values[key] = value.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poissonwf", description="Wirtinger Flow for Poisson phase retrieval experiments.")
    sub = p.add_subparsers(dest="kind", required=True)
    helps = {
        "trace": "mean NRMSE per iteration for the three step rules",
        "sweep": "success rate over an m/n grid",
        "background": "convergence for backgrounds in [alpha1, 1/alpha1] x clean",
        "compare": "Poisson vs least-squares model under Poisson and Gaussian noise",
        "theory": "convergence constants over an (alpha1, alpha2, rho) grid",
        "verify": "closed-form and Monte-Carlo checks of the convergence conditions",
    }
    for kind in ex.KINDS:
        s = sub.add_parser(kind, help=helps[kind], argument_default=argparse.SUPPRESS)
        s.add_argument("--config", help="key = value settings file; flags override it")
        s.add_argument("--n", help="signal dimension")
        s.add_argument("--m-over-n", dest="m_over_n", help="ratio list '3,4,5' or range '3:0.2:5'")
        s.add_argument("--eta", help="noise level")
        s.add_argument("--rule", help="heuristic | constant:<mu> | fisher")
        s.add_argument("--trials")
        s.add_argument("--iters", help="maximum iterations per solve")
        s.add_argument("--alpha1", help="lower background ratio (comma list for background/theory)")
        s.add_argument("--alpha2", help="upper background ratio (comma list for theory)")
        s.add_argument("--rho", help="basin radius (comma list for theory)")
        s.add_argument("--delta", help="concentration slack for theory constants")
        s.add_argument("--threshold", help="success threshold on NRMSE")
        s.add_argument("--probes", help="Monte-Carlo probes for theory/verify")
        s.add_argument("--seed", help="master seed")
        s.add_argument("--workers", help="worker processes for trials")
        s.add_argument("--out", help="output CSV path (default <command>.csv)")
        s.add_argument("--svg", action="store_const", const="true", help="also write an SVG plot next to the CSV")
    return p


def resolve(args: argparse.Namespace) -> tuple[ex.ExperimentConfig, Path, bool]:
    raw = {}
    if getattr(args, "config", None):
        raw.update(read_config(args.config))
    raw.update({k: v for k, v in vars(args).items() if k in OPTIONS})
    settings = dict(KIND_DEFAULTS[args.kind])
    out, svg = Path(f"{args.kind}.csv"), False
    for key, text in raw.items():
        name, conv = OPTIONS[key]
        value = conv(str(text))
        if name == "out":
            out = Path(value)
        elif name == "svg":
            svg = value
        else:
            settings[name] = value
    return ex.ExperimentConfig(kind=args.kind, **settings), out, svg


def run(cfg: ex.ExperimentConfig, out: Path, svg: bool) -> int:
    extra = {}
    status = EXIT_OK
    if cfg.kind == "trace":
        res = ex.run_convergence_trace(cfg)
        table = res.table()
        extra = {"success_threshold": res.threshold, "success_by_rule": res.successes}
    elif cfg.kind == "sweep":
        res = ex.run_success_sweep(cfg)
        table = res.table()
        extra = {"success_threshold": res.threshold}
    elif cfg.kind == "background":
        res = ex.run_background_influence(cfg)
        table = res.table()
    elif cfg.kind == "compare":
        res = ex.run_model_comparison(cfg)
        table = res.table()
    elif cfg.kind == "theory":
        res = ex.run_theory_report(cfg)
        table = res.constants
        if res.probes is not None:
            probe_path = ex.sibling(out, "_probes.csv")
            ex.write_csv(res.probes, probe_path)
            extra = {"probes_csv": probe_path.name}
    else:
        checks = ex.run_verify(cfg)
        table = ex.verify_table(checks)
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.measured!r} vs {c.bound} ({c.params})")
        if not all(c.passed for c in checks):
            status = EXIT_VERIFY

    out.parent.mkdir(parents=True, exist_ok=True)
    ex.write_csv(table, out)
    ex.write_meta(cfg, ex.sibling(out, ".meta.json"), extra)
    print(f"wrote {out}")
    if svg:
        if cfg.kind in ("theory", "verify"):
            print(f"no plot for {cfg.kind}", file=sys.stderr)
        else:
            path = out.with_suffix(".svg")
            ex.write_svg(path, *ex.svg_series(cfg.kind, res))
            print(f"wrote {path}")
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, out, svg = resolve(args)
        return run(cfg, out, svg)
    except (PoissonWFError, ValueError, OSError) as exc:
        print(f"poissonwf: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
