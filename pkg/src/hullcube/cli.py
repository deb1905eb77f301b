"""Command-line harness: generate instances, run the pipeline, verify suites, sweep, export DOT."""

from __future__ import annotations

import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import click
import numpy as np

from . import hhs, model, suites
from .errors import HullcubeError, InstanceFormatError

CONFIG_FORMAT = "hullcube.config/1"
SWEEP_COLUMNS = ["family", "separation", "realized", "deleted_eta", "deleted_eta_prime", "max_face",
                 "theta_convex", "left_square_mismatches", "failures"]
PARAM_KEYS = ("K", "eps", "eps_p", "E", "r1", "r2")
FIXTURES = ("tree",)


class InputError(Exception):
    """Bad input document; `path` locates the offending field."""

    def __init__(self, message: str, path: str) -> None:
        super().__init__(message)
        self.path = path


@dataclass
class RunConfig:
    generator: str = "G1"
    separation: int = 10
    separations: list[int] = field(default_factory=lambda: list(suites.SEPARATIONS))
    families: int = 3
    params: dict = field(default_factory=lambda: dict(suites.DIAGRAM_PARAMS))
    F: list[int] | None = None
    F_prime: list[int] | None = None

    def model_params(self) -> model.ModelParams:
        return model.ModelParams(**self.params)

    @classmethod
    def from_json(cls, doc: object) -> "RunConfig":
        if not isinstance(doc, dict):
            raise InputError("config must be a JSON object", "config")
        if doc.get("format", CONFIG_FORMAT) != CONFIG_FORMAT:
            raise InputError(f"expected format {CONFIG_FORMAT}", "config.format")
        cfg = cls()
        for key, val in doc.items():
            path = f"config.{key}"
            if key == "format":
                continue
            if key == "generator":
                if val not in ("G1", "G2", "G3"):
                    raise InputError("generator must be G1, G2 or G3", path)
                cfg.generator = val
            elif key in ("separation", "families"):
                setattr(cfg, key, _positive_int(val, path))
            elif key == "separations":
                if not isinstance(val, list) or not val:
                    raise InputError("separations must be a nonempty list", path)
                cfg.separations = [_positive_int(v, f"{path}[{i}]") for i, v in enumerate(val)]
            elif key in ("F", "F_prime"):
                if not isinstance(val, list):
                    raise InputError("point sets must be lists", path)
                setattr(cfg, key, [_nonneg_int(v, f"{path}[{i}]") for i, v in enumerate(val)])
            elif key == "params":
                if not isinstance(val, dict):
                    raise InputError("params must be an object", path)
                for pk, pv in val.items():
                    if pk not in PARAM_KEYS:
                        raise InputError(f"unknown parameter {pk!r}", f"{path}.{pk}")
                    try:
                        cfg.params[pk] = Fraction(str(pv)) if pk in ("eps", "eps_p", "E") else (float(pv) if pk == "K" else int(pv))
                    except (TypeError, ValueError, ZeroDivisionError):
                        raise InputError("parameter must be numeric", f"{path}.{pk}") from None
            else:
                raise InputError(f"unknown key {key!r}", path)
        return cfg


def _positive_int(v: object, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise InputError("expected a positive integer", path)
    return v


def _nonneg_int(v: object, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise InputError("expected a nonnegative integer", path)
    return v


def _read_json(path: str, what: str) -> object:
    try:
        if path.startswith("fixture:"):
            name = path.split(":", 1)[1]
            if name not in FIXTURES:
                raise InputError(f"unknown fixture {name!r}", what)
            text = resources.files("hullcube").joinpath("fixtures", f"{name}.json").read_text()
        else:
            text = Path(path).read_text()
        return json.loads(text)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}", what) from None
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON at line {exc.lineno}", what) from None


def load_config(path: str | None) -> RunConfig:
    return RunConfig() if path is None else RunConfig.from_json(_read_json(path, "config"))


def load_instance(path: str) -> hhs.HHSInstance:
    doc = _read_json(path, "instance")
    try:
        return hhs.HHSInstance.from_json(doc)
    except InstanceFormatError as exc:
        w = exc.witness if isinstance(exc.witness, dict) else {}
        raise InputError(str(exc.args[0]), "instance." + str(w.get("path", ""))) from None
    except HullcubeError as exc:
        raise InputError(str(exc.args[0]), "instance") from None


def point_sets(inst: hhs.HHSInstance, cfg: RunConfig) -> tuple[list[int], list[int]]:
    F = cfg.F if cfg.F is not None else inst.info.get("F")
    F2 = cfg.F_prime if cfg.F_prime is not None else inst.info.get("F_prime")
    if F is None or F2 is None:
        raise InputError("no base set F and extension F' in the instance info or the config", "instance.info.F")
    for key, pts in (("F", F), ("F_prime", F2)):
        if any(not isinstance(p, int) or not 0 <= p < inst.ambient.n for p in pts):
            raise InputError("point outside the ambient space", f"instance.info.{key}")
    if not set(F) <= set(F2):
        raise InputError("F must be contained in F'", "instance.info.F_prime")
    return sorted(F), sorted(F2)


def dumps(doc: object) -> str:
    return json.dumps(suites._plain(doc), sort_keys=True, indent=2) + "\n"


def emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text)


def generate(cfg: RunConfig, seed: int) -> hhs.HHSInstance:
    rng = np.random.default_rng([seed, ord(cfg.generator[1])])
    inst, F, F2, real = suites.diagram_instance(cfg.generator, rng, cfg.separation)
    inst.info = dict(inst.info, F=F, F_prime=F2, separation=real, seed=seed)
    return inst


def sweep_family(args: tuple[RunConfig, int, int]) -> list[dict]:
    cfg, seed, fam = args
    inst, F = suites.diagram_family(cfg.generator, np.random.default_rng([seed, fam]), max(cfg.separations))
    P = cfg.model_params()
    rows = []
    for sep in cfg.separations:
        x, real = suites._new_point(inst, F, sep, np.random.default_rng([seed, fam, sep]))
        b = model.stabler_pipeline(inst, F, sorted(set(F) | {x}), P, seed=fam)
        m = b.measures
        rows.append({"family": fam, "separation": sep, "realized": real, "deleted_eta": m["deleted_eta"],
                     "deleted_eta_prime": m["deleted_eta_prime"], "max_face": m["max_face"],
                     "theta_convex": int(bool(m["theta_convex"])), "left_square_mismatches": m["left_square_mismatches"],
                     "failures": len(b.failures)})
    return rows


def diagram_dot(b: model.DiagramBundle) -> str:
    """The four cube complexes of the diagram with the collapse and comparison maps as dashed arrows."""
    parts = [("Q", b.Q), ("Q0", b.Q0), ("Qp", b.Q2), ("Q0p", b.Q20)]
    lines = ["digraph diagram {", "  compound=true;"]
    for name, q in parts:
        lines.append(f'  subgraph cluster_{name} {{ label="{name}";')
        for v in range(q.n):
            lines.append(f'    {name}_{v} [label="{v}"];')
        for a, c in q.cx.edges.tolist():
            lines.append(f"    {name}_{a} -> {name}_{c} [dir=none];")
        lines.append("  }")
    for label, src, dst, mp in (("eta", "Q", "Q0", b.eta), ("eta_prime", "Qp", "Q0p", b.eta2), ("theta", "Q0", "Q0p", b.theta)):
        for v, w in enumerate(np.asarray(mp).tolist()):
            lines.append(f'  {src}_{v} -> {dst}_{w} [style=dashed, label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def instance_checks(inst: hhs.HHSInstance, cfg: RunConfig) -> suites.SuiteResult:
    res = suites.SuiteResult("instance", "validation and diagram checks on one instance")
    rep = hhs.validate_instance(inst)
    res.checks.append(suites.Check("instance axioms", rep.passed, rep.to_json()))
    F, F2 = point_sets(inst, cfg)
    b = model.stabler_pipeline(inst, F, F2, cfg.model_params())
    res.checks.append(suites.Check("theta convex", bool(b.measures["theta_convex"])))
    res.checks.append(suites.Check("left square exact", b.measures["left_square_mismatches"] == 0, b.measures["left_square_mismatches"]))
    res.checks.append(suites.Check("deletions and collapses verified", b.passed, [{"check": c, "witness": w} for c, w in b.failures]))
    res.measures = {"F": F, "F_prime": F2, "deleted_eta": b.measures["deleted_eta"],
                    "deleted_eta_prime": b.measures["deleted_eta_prime"], "max_face": b.measures["max_face"]}
    return res


def _fail_input(exc: InputError) -> None:
    click.echo(json.dumps({"error": str(exc), "path": exc.path}, sort_keys=True), err=True)
    sys.exit(2)


def _guard(fn):
    """Map input problems to exit status 2 with a schema path."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InputError as exc:
            _fail_input(exc)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group()
def main() -> None:
    """hullcube: cube-complex models of hulls in hierarchical spaces."""


@main.command()
@click.option("--config", "config_path", type=str, default=None, help="JSON run configuration.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, default=None, help="Output file (default stdout).")
@_guard
def gen(config_path: str | None, seed: int, out: str | None) -> None:
    """Emit a generated instance with F and F' recorded in its info block."""
    cfg = load_config(config_path)
    emit(dumps(generate(cfg, seed).to_json()), out)


@main.command()
@click.option("--instance", "instance_path", type=str, required=True, help="Instance JSON, or fixture:NAME.")
@click.option("--config", "config_path", type=str, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, default=None)
@_guard
def build(instance_path: str, config_path: str | None, seed: int, out: str | None) -> None:
    """Run the diagram pipeline on one instance and emit the bundle."""
    cfg = load_config(config_path)
    inst = load_instance(instance_path)
    F, F2 = point_sets(inst, cfg)
    b = model.stabler_pipeline(inst, F, F2, cfg.model_params(), seed=seed)
    emit(dumps(b.to_json()), out)
    if not b.passed:
        click.echo("FAIL build: " + ", ".join(sorted({c for c, _ in b.failures})), err=True)
        sys.exit(1)


@main.command()
@click.option("--suite", type=str, default=None, help="Suite name, or 'all'.")
@click.option("--instance", "instance_path", type=str, default=None, help="Check one instance instead of a suite.")
@click.option("--config", "config_path", type=str, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, default=None)
@_guard
def verify(suite: str | None, instance_path: str | None, config_path: str | None, seed: int, out: str | None) -> None:
    """Run a named suite (or the instance checks) and emit a pass/fail report."""
    if (suite is None) == (instance_path is None):
        raise InputError("give exactly one of --suite and --instance", "argv")
    if instance_path is not None:
        results = [instance_checks(load_instance(instance_path), load_config(config_path))]
    else:
        names = list(suites.SUITES) if suite == "all" else [suite]
        for name in names:
            if name not in suites.SUITES:
                raise InputError(f"unknown suite {name!r}; choose from {', '.join(suites.SUITES)} or all", "argv.suite")
        results = [suites.run_suite(name, seed) for name in names]
    doc = {"format": "hullcube.verify/1", "passed": all(r.passed for r in results), "reports": [r.to_json() for r in results]}
    emit(dumps(doc), out)
    for r in results:
        click.echo(r.line(), err=True)
    if not doc["passed"]:
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", type=str, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=click.IntRange(1, 64), default=1, show_default=True)
@click.option("--out", type=str, default=None)
@_guard
def sweep(config_path: str | None, seed: int, jobs: int, out: str | None) -> None:
    """Separation sweep over generated families, one CSV row per run."""
    cfg = load_config(config_path)
    tasks = [(cfg, seed, fam) for fam in range(cfg.families)]
    if jobs == 1:
        chunks = [sweep_family(t) for t in tasks]
    else:
        with ProcessPoolExecutor(jobs) as pool:
            chunks = list(pool.map(sweep_family, tasks))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    rows = [r for chunk in chunks for r in chunk]
    w.writerows(rows)
    emit(buf.getvalue(), out)
    if any(r["failures"] or not r["theta_convex"] or r["left_square_mismatches"] for r in rows):
        sys.exit(1)


@main.command("export-dot")
@click.option("--instance", "instance_path", type=str, required=True)
@click.option("--config", "config_path", type=str, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, default=None)
@_guard
def export_dot(instance_path: str, config_path: str | None, seed: int, out: str | None) -> None:
    """Emit the diagram of one instance as Graphviz DOT."""
    cfg = load_config(config_path)
    inst = load_instance(instance_path)
    F, F2 = point_sets(inst, cfg)
    emit(diagram_dot(model.stabler_pipeline(inst, F, F2, cfg.model_params(), seed=seed)), out)


if __name__ == "__main__":
    main()
