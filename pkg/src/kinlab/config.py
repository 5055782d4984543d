"""Experiment configuration: TOML files with validated blocks and a content hash."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import ConfigError
from .kinetic import SIDES
from .viscous import DATA_SHAPES

BUNDLED = ("burgers_bump", "reference")


@dataclass(frozen=True)
class SystemBlock:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EntropyBlock:
    n_xi: int = 33
    grid: int = 65


@dataclass(frozen=True)
class RunBlock:
    far_field_wz: tuple[float, float]
    shape: str = "bump"
    component: str = "w"
    amplitudes: tuple[float, ...] = (0.2,)
    half_width: float = 0.5
    center: float = 0.0
    epsilons: tuple[float, ...] = (1e-2,)
    T: float = 4.0
    snapshots: int = 64
    cfl: float = 0.4
    dx_per_epsilon: float = 1.0
    reference_amplitude: float | None = None

    @property
    def reference(self) -> float:
        return self.amplitudes[0] if self.reference_amplitude is None else self.reference_amplitude


@dataclass(frozen=True)
class StripBlock:
    side: str
    r: float
    ell: float


@dataclass(frozen=True)
class AnalysisBlock:
    time_depth: int = 2
    space_depth: int = 3
    xi_depth: int = 3
    span_factor: float = 8.0
    trapezoid_M: tuple[float, ...] = ()
    sub: int = 4
    strips: tuple[StripBlock, ...] = ()
    decay_sides: tuple[str, ...] = SIDES
    base_times: tuple[float, ...] = ()
    modulus_window: float = 2.0
    tau0: float = 0.25
    levels: int = 8
    workers: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``resolution_scale`` refines the entropy grid and the viscous mesh by
    the same factor; ``seed`` only enters the ``random`` data shape.
    """

    name: str
    system: SystemBlock
    entropy: EntropyBlock
    run: RunBlock
    analysis: AnalysisBlock
    output_dir: str = "kinlab_out"
    seed: int | None = None
    resolution_scale: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """sha256 (first 16 hex digits) of the canonical JSON, output directory excluded."""
        d = self.to_dict()
        d.pop("output_dir")
        d["version"] = __version__
        path = self.system.params.get("path") if self.system.name == "tabulated" else None
        if path is not None and Path(str(path)).is_file():
            # a tabulated flux enters by content, not by file name
            d["system"]["table_sha256"] = hashlib.sha256(Path(str(path)).read_bytes()).hexdigest()
        return block_hash(d)

    @property
    def entropy_grid(self) -> int:
        return int(round((self.entropy.grid - 1) * self.resolution_scale)) + 1

    @property
    def dx_per_epsilon(self) -> float:
        return self.run.dx_per_epsilon / self.resolution_scale


def block_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(o):
    if isinstance(o, tuple):
        return list(o)
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


# ----------------------------------------------------------------------------
# parsing


def _take(block: dict, cls, where: str) -> dict:
    """Keyword dict for ``cls`` from ``block``; unknown keys are errors."""
    known = set(cls.__dataclass_fields__)
    extra = set(block) - known
    if extra:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(extra)}", stage="config")
    return {k: (tuple(v) if isinstance(v, list) else v) for k, v in block.items()}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg, stage="config")


def _positive(x, name: str) -> None:
    _require(isinstance(x, (int, float)) and math.isfinite(x) and x > 0, f"{name} must be a positive number, got {x!r}")


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig` from a nested mapping."""
    d = dict(d)
    for blk in ("system", "run"):
        _require(blk in d, f"missing [{blk}] block")
    top = {"name", "system", "entropy", "run", "analysis", "output", "seed", "resolution_scale"}
    _require(not (set(d) - top), f"unknown top-level keys: {sorted(set(d) - top)}")
    sysd = dict(d["system"])
    _require("name" in sysd, "[system] needs a name")
    system = SystemBlock(name=str(sysd.pop("name")), params=dict(sysd.pop("params", {})))
    _require(not sysd, f"unknown keys in [system]: {sorted(sysd)}")
    entropy = EntropyBlock(**_take(d.get("entropy", {}), EntropyBlock, "entropy"))
    rund = _take(d["run"], RunBlock, "run")
    _require("far_field_wz" in rund, "[run] needs far_field_wz")
    run = RunBlock(**rund)
    ad = dict(d.get("analysis", {}))
    strips = tuple(StripBlock(**_take(s, StripBlock, "analysis.strips")) for s in ad.pop("strips", []))
    analysis = AnalysisBlock(strips=strips, **_take(ad, AnalysisBlock, "analysis"))
    out = dict(d.get("output", {}))
    cfg = ExperimentConfig(
        name=str(d.get("name", "experiment")),
        system=system,
        entropy=entropy,
        run=run,
        analysis=analysis,
        output_dir=str(out.get("dir", "kinlab_out")),
        seed=d.get("seed"),
        resolution_scale=float(d.get("resolution_scale", 1.0)),
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Range checks on every numeric parameter.

    Raises
    ------
    ConfigError
        Naming the offending parameter.
    """
    e, r, a = cfg.entropy, cfg.run, cfg.analysis
    _require(isinstance(e.n_xi, int) and e.n_xi >= 3, f"entropy.n_xi must be an integer >= 3, got {e.n_xi!r}")
    _require(isinstance(e.grid, int) and e.grid >= 9, f"entropy.grid must be an integer >= 9, got {e.grid!r}")
    _require(len(r.far_field_wz) == 2, "run.far_field_wz needs two entries")
    _require(r.shape in DATA_SHAPES, f"run.shape must be one of {DATA_SHAPES}, got {r.shape!r}")
    _require(r.component in ("w", "z"), f"run.component must be 'w' or 'z', got {r.component!r}")
    _require(len(r.amplitudes) > 0, "run.amplitudes is empty")
    for A in r.amplitudes:
        _require(isinstance(A, (int, float)) and math.isfinite(A), f"run.amplitudes entry {A!r} is not a number")
    _require(r.reference in r.amplitudes, f"run.reference_amplitude {r.reference} not among run.amplitudes")
    _require(len(r.epsilons) > 0, "run.epsilons is empty")
    for eps in r.epsilons:
        _positive(eps, "run.epsilons entry")
    _require(len(set(r.epsilons)) == len(r.epsilons), "run.epsilons has duplicates")
    _positive(r.half_width, "run.half_width")
    _positive(r.T, "run.T")
    _positive(r.dx_per_epsilon, "run.dx_per_epsilon")
    _require(0 < r.cfl <= 0.5, f"run.cfl must lie in (0, 0.5], got {r.cfl}")
    _require(isinstance(r.snapshots, int) and r.snapshots >= 64 and r.snapshots % 2 == 0,
             f"run.snapshots must be an even integer >= 64, got {r.snapshots!r}")
    _positive(cfg.resolution_scale, "resolution_scale")
    for name in ("time_depth", "space_depth", "xi_depth"):
        v = getattr(a, name)
        _require(isinstance(v, int) and 0 <= v <= 6, f"analysis.{name} must be an integer in [0, 6], got {v!r}")
    _positive(a.span_factor, "analysis.span_factor")
    for M in a.trapezoid_M:
        _positive(M, "analysis.trapezoid_M entry")
    _require(isinstance(a.sub, int) and a.sub >= 1, f"analysis.sub must be a positive integer, got {a.sub!r}")
    for s in a.strips:
        _require(s.side in SIDES, f"analysis.strips side must be one of {SIDES}, got {s.side!r}")
        _positive(s.r, "analysis.strips r")
    for s in a.decay_sides:
        _require(s in SIDES, f"analysis.decay_sides entry must be one of {SIDES}, got {s!r}")
    for t in a.base_times:
        _require(0 <= t < r.T, f"analysis.base_times entry {t} outside [0, T)")
    _positive(a.modulus_window, "analysis.modulus_window")
    _positive(a.tau0, "analysis.tau0")
    _require(isinstance(a.levels, int) and 1 <= a.levels <= 20, f"analysis.levels must be in [1, 20], got {a.levels!r}")
    _require(isinstance(a.workers, int) and a.workers >= 1, f"analysis.workers must be >= 1, got {a.workers!r}")
    for tb in a.base_times:
        _require(tb + 2 * a.tau0 <= r.T, f"analysis.base_times entry {tb} plus 2 tau0 exceeds T = {r.T}")
    if cfg.seed is not None:
        _require(isinstance(cfg.seed, int) and cfg.seed >= 0, f"seed must be a nonnegative integer, got {cfg.seed!r}")


def load_config(source: str | Path) -> ExperimentConfig:
    """Read a TOML file, or a bundled config by name (``burgers_bump``, ``reference``)."""
    src = str(source)
    if src in BUNDLED:
        text = resources.files("kinlab.configs").joinpath(f"{src}.toml").read_text()
    else:
        p = Path(src)
        if not p.is_file():
            raise ConfigError(f"config file not found: {src} (bundled: {', '.join(BUNDLED)})", stage="config")
        text = p.read_text()
    try:
        d = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {src}: {exc}", stage="config") from exc
    if src not in BUNDLED:
        # relative table paths are taken from the config file's directory
        params = d.get("system", {}).get("params", {})
        if isinstance(params.get("path"), str) and not Path(params["path"]).is_absolute():
            params["path"] = str((Path(src).parent / params["path"]).resolve())
    return config_from_dict(d)


def with_overrides(
    cfg: ExperimentConfig,
    output_dir: str | None = None,
    resolution_scale: float | None = None,
    seed: int | None = None,
) -> ExperimentConfig:
    """Command-line overrides, re-validated."""
    kw = {}
    if output_dir is not None:
        kw["output_dir"] = str(output_dir)
    if resolution_scale is not None:
        kw["resolution_scale"] = float(resolution_scale)
    if seed is not None:
        kw["seed"] = int(seed)
    out = replace(cfg, **kw)
    validate(out)
    return out
