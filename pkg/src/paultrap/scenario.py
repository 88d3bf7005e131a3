"""Scenario files: an INI ``[scenario]`` header followed by ordered steps.

Each step section names a ``command`` and its parameters, with the same
names and unit suffixes as the CLI flags.  Relative input paths resolve
against the output directory when the file exists there (an earlier
step produced it), otherwise against the scenario file's directory.

A ``manifest.json`` records the scenario and input hashes, the seed, the
parsed parameters, library versions and output hashes.  It carries no
timestamps, so a rerun with the same seed reproduces it byte for byte.
"""

import configparser
import hashlib
import json
import platform
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, commands
from .core import DATA_DIR
from .plotting import emit_plot
from .units import parse_quantity

RESERVED = "scenario"


class ScenarioError(ValueError):
    """Malformed scenario file; ``lineno`` points at the offending section."""

    def __init__(self, message, lineno=None, path=None):
        where = f"{path}:{lineno}: " if lineno else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.lineno = lineno


@dataclass
class Step:
    name: str
    command: str
    params: dict
    lineno: int


@dataclass
class Scenario:
    name: str
    path: Path
    config: str
    seed: int
    output_dir: Path
    steps: list = field(default_factory=list)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _section_lines(text):
    out = {}
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            out.setdefault(m.group(1).strip(), i)
    return out


def resolve_scenario_path(path):
    """An existing path, or the name of a scenario shipped with the package."""
    p = Path(path)
    if p.exists():
        return p
    shipped = DATA_DIR / p.name
    if shipped.exists():
        return shipped
    raise FileNotFoundError(f"scenario file {path} not found")


def load_scenario(path, output_dir=None):
    path = resolve_scenario_path(path)
    text = path.read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        raise ScenarioError(f"parse error: {exc.message if hasattr(exc, 'message') else exc}",
                            lineno, path) from exc
    lines = _section_lines(text)
    if not parser.has_section(RESERVED):
        raise ScenarioError("missing [scenario] section", 1, path)
    head = parser[RESERVED]
    name = head.get("name", "").strip()
    if not name:
        raise ScenarioError("[scenario] name must be non-empty", lines[RESERVED], path)
    try:
        seed = int(head.get("seed", "0"))
    except ValueError as exc:
        raise ScenarioError(f"seed must be an integer: {exc}", lines[RESERVED], path) from exc
    out = Path(output_dir) if output_dir else Path(head.get("output_dir", f"{name}_out"))
    sc = Scenario(name=name, path=path, config=head.get("config", "default"), seed=seed,
                  output_dir=out)
    for section in parser.sections():
        if section == RESERVED:
            continue
        params = dict(parser[section])
        command = params.pop("command", None)
        if command not in STEPS:
            raise ScenarioError(
                f"step [{section}] has unknown command {command!r}; "
                f"valid commands: {', '.join(sorted(STEPS))}", lines.get(section), path)
        sc.steps.append(Step(section, command, params, lines.get(section)))
    return sc


# --- step execution ------------------------------------------------------------------


class _Context:
    def __init__(self, scenario):
        self.scenario = scenario
        self.inputs = {}

    def base_trap(self, params):
        cfg = self.scenario.config
        config = None if cfg == "default" else self.input_path(cfg)
        return commands.load_trap(
            config,
            urf=_q(params, "urf", "V"),
            uend=_q(params, "uend", "V"),
            uoff=_q(params, "uoff", "V"),
        )

    def input_path(self, value):
        p = Path(value)
        if p.is_absolute():
            found = p
        elif (self.scenario.output_dir / p).exists():
            return self.scenario.output_dir / p
        else:
            found = self.scenario.path.parent / p
        if not found.exists():
            raise FileNotFoundError(f"input file {value} not found")
        self.inputs[str(value)] = _sha256(found)
        return found

    def output_path(self, value):
        return self.scenario.output_dir / value


def _q(params, key, unit, default=None):
    if key not in params:
        return default
    return parse_quantity(params[key], unit)


def _list(params, key, unit):
    return [parse_quantity(v, unit) for v in params[key].split(",") if v.strip()]


def _step_circuit(ctx, p):
    loads = [s.strip() for s in p["load"].split(",") if s.strip()]
    return commands.run_circuit(ctx.base_trap(p), loads, ctx.output_path(p["out"]) if "out" in p else None)


def _step_balanced(ctx, p):
    return commands.run_balanced(ctx.base_trap(p), p.get("rod", "X+"), float(p.get("target", 0.96)),
                                 ctx.output_path(p["out"]) if "out" in p else None)


def _step_field(ctx, p):
    return commands.run_field(ctx.base_trap(p))


def _step_displace(ctx, p):
    rods = [s.strip() for s in p["rod"].split(",")]
    return commands.run_displace(ctx.base_trap(p), rods, int(p.get("points", 11)),
                                 ctx.output_path(p["out"]) if "out" in p else None)


def _step_displacement_vs_cp(ctx, p):
    return commands.run_displacement_vs_cp(ctx.base_trap(p), p.get("rod", "X+"), _list(p, "cp", "F"),
                                           ctx.output_path(p["out"]) if "out" in p else None)


def _step_ion(ctx, p):
    udc = tuple(_q(p, f"udc_{a}", "m", 0.0) for a in "xyz")
    return commands.run_ion(ctx.base_trap(p), udc, float(p.get("periods", 100)),
                            ctx.output_path(p["out"]) if "out" in p else None)


def _step_simulate(ctx, p):
    steps = int(p["steps"]) if "steps" in p else None
    return commands.run_simulate(
        ctx.base_trap(p), n=p.get("n"), mix=p.get("mix"), mode=p.get("mode", "pseudopotential"),
        steps=steps, duration=_q(p, "duration", "s"), gamma=_q(p, "gamma", None),
        temperature=_q(p, "temperature", "K", 0.01), seed=int(p.get("seed", ctx.scenario.seed)),
        out=ctx.output_path(p["out"]) if "out" in p else None)


def _step_analyze(ctx, p):
    return commands.run_analyze(ctx.input_path(p["state"]),
                                ctx.output_path(p["hist"]) if "hist" in p else None,
                                p.get("species"), float(p.get("max_temperature", 0.05)))


def _step_fit(ctx, p):
    return commands.run_fit(p["model"], ctx.input_path(p["in"]),
                            ctx.output_path(p["out"]) if "out" in p else None, ctx.base_trap(p))


def _step_tomography(ctx, p):
    return commands.run_tomography(
        axis=p.get("axis", "x"), scan_range=_q(p, "range", "m", 50e-6),
        points=int(p.get("points", 21)), noise=float(p.get("noise", 0.0)),
        seed=int(p.get("seed", ctx.scenario.seed)), waist=_q(p, "waist", "m"),
        radius=_q(p, "radius", "m"),
        mode_offset=(_q(p, "mode_offset_x", "m", 0.0), _q(p, "mode_offset_y", "m", 0.0)),
        out=ctx.output_path(p["out"]) if "out" in p else None, trap=ctx.base_trap(p))


def _step_plot(ctx, p):
    out = emit_plot(ctx.input_path(p["csv"]), p.get("kind", "scatter+fit"), ctx.output_path(p["out"]),
                    fit=p.get("fit", "linear"), x=p.get("x"), y=p.get("y"))
    return [f"wrote {out.name}"], [out]


STEPS = {
    "circuit": _step_circuit,
    "balanced": _step_balanced,
    "field": _step_field,
    "displace": _step_displace,
    "displacement-vs-cp": _step_displacement_vs_cp,
    "ion": _step_ion,
    "simulate": _step_simulate,
    "analyze": _step_analyze,
    "fit": _step_fit,
    "tomography": _step_tomography,
    "plot": _step_plot,
}


def _versions():
    import matplotlib
    import numba
    import numpy
    import scipy

    return {"python": platform.python_version(), "paultrap": __version__,
            "numpy": numpy.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "matplotlib": matplotlib.__version__}


def run_scenario(path, output_dir=None, echo=print):
    """Execute all steps in order and write ``manifest.json``; returns its path."""
    sc = load_scenario(path, output_dir)
    sc.output_dir.mkdir(parents=True, exist_ok=True)
    ctx = _Context(sc)
    if sc.config != "default":
        ctx.input_path(sc.config)
    record = []
    for step in sc.steps:
        echo(f"[{step.name}] {step.command}")
        try:
            lines, files = STEPS[step.command](ctx, step.params)
        except KeyError as exc:
            raise ScenarioError(f"step [{step.name}] is missing parameter {exc}",
                                step.lineno, sc.path) from exc
        for line in lines:
            echo("  " + line)
        record.append({
            "name": step.name,
            "command": step.command,
            "params": dict(sorted(step.params.items())),
            "outputs": {Path(f).name: _sha256(f) for f in files},
        })
    manifest = {
        "scenario": sc.name,
        "scenario_file": sc.path.name,
        "scenario_sha256": _sha256(sc.path),
        "seed": sc.seed,
        "config": sc.config,
        "inputs": dict(sorted(ctx.inputs.items())),
        "versions": _versions(),
        "steps": record,
    }
    out = sc.output_dir / "manifest.json"
    out.write_text(json.dumps(manifest, indent=2) + "\n")
    return out
