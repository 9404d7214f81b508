"""Line-oriented text configuration with sections, defaults, and overrides.

Format: ``[section]`` headers and ``key = value`` lines; ``#`` starts a
comment. Unknown sections or keys are hard errors, reported with their line
number, as are type mismatches and duplicate keys. Command-line ``--set
section.key=value`` overrides win over file values.

Defaults follow the benchmark setup: unit domain centered at the origin,
epsilon 0.01 in 2D and 0.02 in 3D, coarse step 0.1, fine step 0.001, and a
convergence tolerance of 1e-6 in 2D / 1e-8 in 3D.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields
from pathlib import Path

from .errors import ConfigurationError
from .grid import GridSpec, make_grid
from .physics import ModelKind, PhysicsParams, bounds_for
from .fine import StepperConfig
from .network import ArchSpec
from .parareal import PararealConfig, default_workers
from .training import TrainConfig


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# (section, key) -> (python type or converter, default or REQUIRED marker)
_REQUIRED = object()
_DEFERRED = object()  # resolved in finalize() because it depends on other keys

SCHEMA: dict[tuple[str, str], tuple] = {
    ("physics", "kind"): (str, "classic"),
    ("physics", "epsilon"): (float, _DEFERRED),
    ("grid", "dim"): (int, 2),
    ("grid", "n"): (int, 64),
    ("grid", "length"): (float, 1.0),
    ("ic", "kind"): (str, _DEFERRED),
    ("ic", "amplitude"): (float, 0.9),
    ("ic", "seed"): (int, 1),
    ("fine", "dt"): (float, 0.001),
    ("fine", "picard_tol"): (float, 1e-12),
    ("fine", "picard_max_iter"): (int, 100),
    ("coarse", "dt"): (float, 0.1),
    ("coarse", "checkpoint"): (str, ""),
    ("coarse", "composition"): (int, _DEFERRED),
    ("parareal", "s"): (int, _DEFERRED),
    ("parareal", "t_final"): (float, _DEFERRED),
    ("parareal", "tol"): (float, _DEFERRED),
    ("parareal", "max_iter"): (int, _DEFERRED),
    ("parareal", "workers"): (int, _DEFERRED),
    ("train", "r_total"): (int, 16),
    ("train", "subsets"): (int, 4),
    ("train", "subset_size"): (int, 4),
    ("train", "inner_updates"): (int, 5),
    ("train", "t_train"): (float, 10.0),
    ("train", "dt"): (float, 0.01),
    ("train", "epochs"): (int, 4),
    ("train", "learning_rate"): (float, 2e-3),
    ("train", "seed"): (int, 0),
    ("train", "optimizer"): (str, "adam"),
    ("train", "cosine_decay"): (_parse_bool, True),
    ("output", "directory"): (str, "runs"),
    ("output", "snapshot_every"): (int, 100),
}

IC_KINDS = ("bubbles", "random", "star")


@dataclass
class RunConfig:
    """Fully resolved configuration for every command."""

    values: dict[tuple[str, str], object]

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    # --- typed accessors used by the commands ---

    def make_grid(self) -> GridSpec:
        return make_grid(self.get("grid", "dim"), self.get("grid", "n"), self.get("grid", "length"))

    def make_physics(self) -> PhysicsParams:
        kind = ModelKind.parse(self.get("physics", "kind"))
        return PhysicsParams(kind=kind, epsilon=self.get("physics", "epsilon"))

    def fine_stepper(self) -> StepperConfig:
        return StepperConfig(
            dt=self.get("fine", "dt"),
            physics=self.make_physics(),
            picard_tol=self.get("fine", "picard_tol"),
            picard_max_iter=self.get("fine", "picard_max_iter"),
        )

    def train_config(self) -> TrainConfig:
        keys = {f.name for f in dc_fields(TrainConfig)}
        kwargs = {key: self.get("train", key) for (sec, key) in SCHEMA if sec == "train" and key in keys}
        return TrainConfig(**kwargs)

    def arch(self) -> ArchSpec:
        return ArchSpec(dim=self.get("grid", "dim"), kind=ModelKind.parse(self.get("physics", "kind")))

    def parareal_config(self) -> PararealConfig:
        return PararealConfig(
            slices=self.get("parareal", "s"),
            dt_coarse=self.get("coarse", "dt"),
            dt_fine=self.get("fine", "dt"),
            tol=self.get("parareal", "tol"),
            max_iter=self.get("parareal", "max_iter"),
            workers=self.get("parareal", "workers"),
        )

    def to_text(self) -> str:
        """Render back as a config file (the resolved copy stored per run)."""
        sections: dict[str, list[str]] = {}
        for (section, key), value in self.values.items():
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            sections.setdefault(section, []).append(f"{key} = {rendered}")
        chunks = []
        for section in sorted(sections):
            chunks.append(f"[{section}]")
            chunks.extend(sorted(sections[section]))
            chunks.append("")
        return "\n".join(chunks)


def _convert(section: str, key: str, text: str, line_no: int | None):
    converter = SCHEMA[(section, key)][0]
    where = f"line {line_no}: " if line_no is not None else ""
    try:
        if converter is int:
            return int(text)
        if converter is float:
            return float(text)
        if converter is str:
            return text
        return converter(text)
    except ValueError as exc:
        raise ConfigurationError(
            f"{where}value for {section}.{key} {text!r} is not a valid "
            f"{getattr(converter, '__name__', 'value')}"
        ) from exc


def parse_config_text(text: str, source: str = "<config>") -> dict[tuple[str, str], object]:
    """Parse the raw key/value pairs of a config file (no defaults applied)."""
    values: dict[tuple[str, str], object] = {}
    seen_lines: dict[tuple[str, str], int] = {}
    section = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not any(sec == section for sec, _ in SCHEMA):
                raise ConfigurationError(f"{source}: line {line_no}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}: line {line_no}: expected 'key = value', got {raw!r}")
        if section is None:
            raise ConfigurationError(f"{source}: line {line_no}: key outside any [section]")
        key, _, value_text = line.partition("=")
        key = key.strip()
        value_text = value_text.strip()
        if (section, key) not in SCHEMA:
            raise ConfigurationError(f"{source}: line {line_no}: unknown key {section}.{key}")
        if (section, key) in values:
            first = seen_lines[(section, key)]
            raise ConfigurationError(
                f"{source}: line {line_no}: duplicate key {section}.{key} (first set on line {first})"
            )
        values[(section, key)] = _convert(section, key, value_text, line_no)
        seen_lines[(section, key)] = line_no
    return values


def apply_overrides(values: dict, overrides: list[str]) -> None:
    """Apply ``section.key=value`` strings (command-line) over file values."""
    for item in overrides:
        head, eq, value_text = item.partition("=")
        if not eq or "." not in head:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        section, _, key = head.strip().partition(".")
        key = key.strip()
        if (section, key) not in SCHEMA:
            raise ConfigurationError(f"override names unknown key {section}.{key}")
        values[(section, key)] = _convert(section, key, value_text.strip(), None)


def finalize(values: dict[tuple[str, str], object]) -> RunConfig:
    """Fill defaults, resolve cross-key defaults, and validate consistency."""
    resolved = dict(values)
    for (section, key), (_, default) in SCHEMA.items():
        if (section, key) in resolved or default in (_REQUIRED, _DEFERRED):
            continue
        resolved[(section, key)] = default

    dim = resolved[("grid", "dim")]
    if dim not in (2, 3):
        raise ConfigurationError(f"grid.dim must be 2 or 3, got {dim}")
    resolved.setdefault(("physics", "epsilon"), 0.01 if dim == 2 else 0.02)
    resolved.setdefault(("ic", "kind"), "bubbles" if dim == 2 else "star")
    resolved.setdefault(("parareal", "tol"), 1e-6 if dim == 2 else 1e-8)
    resolved.setdefault(("parareal", "workers"), default_workers())

    # coarse composition: net evaluations per coarse step, at its training dt
    dt_coarse = resolved[("coarse", "dt")]
    train_dt = resolved[("train", "dt")]
    if ("coarse", "composition") not in resolved:
        ratio = dt_coarse / train_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigurationError(
                f"coarse.dt/train.dt = {ratio} is not a positive integer; "
                "set coarse.composition explicitly"
            )
        resolved[("coarse", "composition")] = round(ratio)

    # slices and horizon must agree: t_final = s * dt_coarse
    have_s = ("parareal", "s") in resolved
    have_t = ("parareal", "t_final") in resolved
    if not have_s and not have_t:
        resolved[("parareal", "s")] = 100
        have_s = True
    if have_s and have_t:
        s = resolved[("parareal", "s")]
        t_final = resolved[("parareal", "t_final")]
        if abs(s * dt_coarse - t_final) > 1e-9:
            raise ConfigurationError(
                f"parareal.t_final={t_final} inconsistent with s*dt_coarse="
                f"{s * dt_coarse} (parareal.s={s})"
            )
    elif have_t:
        t_final = resolved[("parareal", "t_final")]
        ratio = t_final / dt_coarse
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigurationError(
                f"parareal.t_final={t_final} is not an integer multiple of coarse.dt={dt_coarse}"
            )
        resolved[("parareal", "s")] = round(ratio)
    resolved[("parareal", "t_final")] = resolved[("parareal", "s")] * dt_coarse
    resolved.setdefault(("parareal", "max_iter"), resolved[("parareal", "s")])

    # eager validation so errors name the offending key
    epsilon = resolved[("physics", "epsilon")]
    if epsilon <= 0:
        raise ConfigurationError(f"physics.epsilon must be positive, got {epsilon}")
    kind = ModelKind.parse(resolved[("physics", "kind")])
    ic_kind = resolved[("ic", "kind")]
    if ic_kind not in IC_KINDS:
        raise ConfigurationError(f"ic.kind must be one of {IC_KINDS}, got {ic_kind!r}")
    if ic_kind == "bubbles" and dim != 2:
        raise ConfigurationError("ic.kind=bubbles requires grid.dim=2")
    if ic_kind == "star" and dim != 3:
        raise ConfigurationError("ic.kind=star requires grid.dim=3")
    amplitude = resolved[("ic", "amplitude")]
    if ic_kind == "random" and not 0 < amplitude <= bounds_for(kind)[1]:
        raise ConfigurationError(
            f"ic.amplitude={amplitude} outside (0, {bounds_for(kind)[1]:.6f}] for kind {kind.value}"
        )
    if resolved[("output", "snapshot_every")] < 1:
        raise ConfigurationError("output.snapshot_every must be at least 1")

    config = RunConfig(values=resolved)
    # These constructors re-validate their own invariants.
    config.make_grid()
    config.make_physics()
    config.fine_stepper()
    config.train_config()
    config.parareal_config()
    return config


def parse_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    """Load, override, and finalize a configuration.

    ``path`` may be None (defaults only); ``overrides`` are
    ``section.key=value`` strings that win over the file.
    """
    values: dict[tuple[str, str], object] = {}
    if path is not None:
        text = Path(path).read_text()
        values = parse_config_text(text, source=str(path))
    if overrides:
        apply_overrides(values, overrides)
    return finalize(values)
