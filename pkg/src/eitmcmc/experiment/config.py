"""Run configuration: an INI file (``key = value`` under ``[section]``)
parsed into dataclasses.  Every key has a default; unknown keys are errors.

Sections and keys::

    [problem]  kind (eit | toy)
    [grid]     fine_side, coarse_side, coarse_mean, approx_iters
    [data]     data (voltage CSV), sigma (noise sd), truth, snr_ratio, data_seed
    [prior]    kind (tricube | gmrf | convolution), beta, s, knots, kernel_sd, sigma_u
    [kernel]   kind, sigma_z, order, tune, target, window, n_step, coupling_ratio,
               surrogate (approx | coarse), rwm_covariance (identity | diagonal | full),
               rwm_trace, alpha, bias_rule, bias_update, refresh_every
    [toy]      q, sigma
    [run]      budget, burn_in, thin, seed, tracked, pixels, record, checkpoint_records
    [cost]     fine, approx, coarse
    [output]   dir

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..samplers.runner import KERNELS


class ConfigError(ValueError):
    """Bad or inconsistent configuration (exit status 2)."""


@dataclass
class ProblemConfig:
    kind: str = "eit"


@dataclass
class GridConfig:
    fine_side: int = 12
    coarse_side: int = 4
    coarse_mean: str = "arithmetic"
    approx_iters: int = 20


@dataclass
class DataConfig:
    data: str = ""
    sigma: float = 0.0
    truth: str = ""
    snr_ratio: float = 0.003
    data_seed: int = 0


@dataclass
class PriorConfig:
    kind: str = "tricube"
    beta: float = 0.5
    s: float = 0.3
    knots: int = 10
    kernel_sd: float = 0.11
    sigma_u: float = 1.0


@dataclass
class KernelConfig:
    kind: str = "single_site"
    sigma_z: float = 0.5
    order: str = "deterministic"
    tune: bool = True
    target: float = 0.0
    window: int = 0
    n_step: int = 100
    coupling_ratio: int = 3
    surrogate: str = "approx"
    rwm_covariance: str = "identity"
    rwm_trace: str = ""
    alpha: float = 0.0
    bias_rule: str = "welford"
    bias_update: str = "every_step"
    refresh_every: int = 1


@dataclass
class ToyConfig:
    q: int = 2
    sigma: float = 0.05


@dataclass
class RunSection:
    budget: float = 2000.0
    burn_in: float = 0.0
    thin: int = 10
    seed: int = 0
    tracked: str = ""
    pixels: str = "all"
    record: str = "field"
    checkpoint_records: int = 100


@dataclass
class CostConfig:
    fine: float = 1.0
    approx: float = 1.0 / 3.0
    coarse: float = 0.01


@dataclass
class OutputConfig:
    dir: str = "out"


@dataclass
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    data: DataConfig = field(default_factory=DataConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    toy: ToyConfig = field(default_factory=ToyConfig)
    run: RunSection = field(default_factory=RunSection)
    cost: CostConfig = field(default_factory=CostConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_ini(self) -> str:
        lines = []
        for sec in fields(self):
            lines.append(f"[{sec.name}]")
            for k, v in asdict(getattr(self, sec.name)).items():
                lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
            lines.append("")
        return "\n".join(lines)

    @property
    def tracked(self) -> list[int] | None:
        t = self.run.tracked.replace(",", " ").split()
        return [int(v) for v in t] if t else None


def _coerce(section: str, key: str, raw: str, typ):
    try:
        if typ is bool or typ == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None


def parse_config(text: str, base_dir: str | Path = ".", overrides: list[str] = ()) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, value)
    cfg = RunConfig()
    known = {f.name: f for f in fields(cfg)}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")
        obj = getattr(cfg, sec)
        types = {f.name: f.type for f in fields(obj)}
        for key, raw in cp.items(sec):
            if key not in types:
                raise ConfigError(f"[{sec}] unknown key {key!r}")
            setattr(obj, key, _coerce(sec, key, raw, types[key]))
    base = Path(base_dir)
    for attr in ("data", "truth"):
        v = getattr(cfg.data, attr)
        if v and not Path(v).is_absolute():
            setattr(cfg.data, attr, str(base / v))
    if cfg.kernel.rwm_trace and not Path(cfg.kernel.rwm_trace).is_absolute():
        cfg.kernel.rwm_trace = str(base / cfg.kernel.rwm_trace)
    if not Path(cfg.output.dir).is_absolute():
        cfg.output.dir = str(base / cfg.output.dir)
    validate(cfg)
    return cfg


def load_config(path: str | Path, overrides: list[str] = ()) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, p.parent, overrides)


def _choice(section: str, key: str, value: str, allowed) -> None:
    if value not in allowed:
        raise ConfigError(f"[{section}] {key} = {value!r}; expected one of {', '.join(allowed)}")


def validate(cfg: RunConfig) -> None:
    """Checks done before any solve; raises ConfigError."""
    _choice("problem", "kind", cfg.problem.kind, ("eit", "toy"))
    _choice("kernel", "kind", cfg.kernel.kind, KERNELS)
    _choice("kernel", "order", cfg.kernel.order, ("deterministic", "random"))
    _choice("kernel", "surrogate", cfg.kernel.surrogate, ("approx", "coarse"))
    _choice("kernel", "rwm_covariance", cfg.kernel.rwm_covariance, ("identity", "diagonal", "full"))
    _choice("kernel", "bias_rule", cfg.kernel.bias_rule, ("welford", "literal"))
    _choice("kernel", "bias_update", cfg.kernel.bias_update, ("every_step", "on_fine_eval"))
    _choice("prior", "kind", cfg.prior.kind, ("tricube", "gmrf", "convolution"))
    _choice("grid", "coarse_mean", cfg.grid.coarse_mean, ("arithmetic", "harmonic"))
    _choice("run", "record", cfg.run.record, ("field", "parameter"))
    _choice("run", "pixels", cfg.run.pixels, ("all", "tracked"))
    if not cfg.run.budget > 0:
        raise ConfigError("[run] budget must be positive")
    if cfg.run.burn_in < 0 or cfg.run.burn_in > cfg.run.budget:
        raise ConfigError("[run] burn_in must lie in [0, budget]")
    if cfg.run.thin < 1:
        raise ConfigError("[run] thin must be >= 1")
    if cfg.kernel.sigma_z <= 0:
        raise ConfigError("[kernel] sigma_z must be positive")
    if cfg.kernel.n_step < 1 or cfg.kernel.coupling_ratio < 1 or cfg.kernel.refresh_every < 1:
        raise ConfigError("[kernel] n_step, coupling_ratio and refresh_every must be >= 1")
    if not 0.0 <= cfg.kernel.target < 1.0:
        raise ConfigError("[kernel] target must lie in (0, 1), or 0 for the kernel default")
    if cfg.problem.kind == "eit":
        g = cfg.grid
        if g.fine_side < 2 or g.coarse_side < 2 or g.fine_side % g.coarse_side:
            raise ConfigError(f"[grid] coarse_side {g.coarse_side} must divide fine_side {g.fine_side}")
        if g.approx_iters < 1:
            raise ConfigError("[grid] approx_iters must be >= 1")
        if cfg.data.data:
            if not Path(cfg.data.data).is_file():
                raise ConfigError(f"[data] data file not found: {cfg.data.data}")
            if cfg.data.sigma <= 0:
                raise ConfigError("[data] sigma must be given (> 0) together with a data file")
        if cfg.data.truth and not Path(cfg.data.truth).is_file():
            raise ConfigError(f"[data] truth file not found: {cfg.data.truth}")
        if cfg.data.sigma < 0:
            raise ConfigError("[data] sigma must be non-negative")
    else:
        if cfg.toy.q < 2 or cfg.toy.sigma <= 0:
            raise ConfigError("[toy] needs q >= 2 and sigma > 0")
        if cfg.prior.kind == "convolution":
            raise ConfigError("[prior] the toy problem needs an MRF prior")
    if cfg.kernel.kind == "rwm" and cfg.kernel.rwm_covariance != "identity":
        if not cfg.kernel.rwm_trace or not Path(cfg.kernel.rwm_trace).is_file():
            raise ConfigError(f"[kernel] rwm_trace file not found: {cfg.kernel.rwm_trace or '(unset)'}")
