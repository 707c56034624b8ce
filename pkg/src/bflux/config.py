"""Experiment configuration: INI-style files, overrides, validation.

A config has four sections.  ``[run]`` selects the preset and its scalar
knobs, ``[mesh]`` the discretisation, ``[f]`` and ``[g]`` the interior
reaction and boundary flux as ``kind=power`` blocks with coefficients
c, p, d, e.  Any key can be overridden from the command line with
``--set section.key=value``, so a config file plus its overrides fully
determines a run.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

from .errors import ConfigError
from .grid import Mesh1D
from .nonlinearity import Balance, PowerNonlinearity, classify_balance

PRESETS = ("smoothing", "dichotomy", "cascade", "equilibria", "calibrate")

_DEFAULTS = {
    "run": {
        "preset": "smoothing",
        "r": "2.0",
        "dt": "1e-3",
        "t_final": "1.0",
        "epsilon": "0.01",
        "sigma_list": "",
        "k_schedule": "4,8,16,32",
        "seed": "12345",
        "dim": "1",
        "output_dir": "out",
        "constants_file": "constants.txt",
        "blowup_threshold": "1e8",
        "newton_tol": "1e-10",
        "newton_max": "60",
        # preset-specific knobs (harmless elsewhere)
        "alpha": "1.5",
        "interior_fraction": "0.5",
        "spike_strength": "",
        "flat_level": "50.0",
        "continuity_tol": "1.0",
        "level": "4.0",
        "settle_tol": "1e-4",
        "t_max": "40.0",
        "sweep_p": "2.5,3,4",
        "sweep_q": "1.2,1.4,1.6,1.8,2.0,2.2,2.4,2.6",
        "refine_dts": "1e-3,2.5e-4,6.25e-5",
        "refine_level": "2.0",
        "probe_levels": "1,10,100,1e4",
    },
    "mesh": {"n": "257", "length": "1.0"},
}


@dataclass
class ExperimentConfig:
    preset: str
    mesh: Mesh1D
    f: PowerNonlinearity
    g: PowerNonlinearity
    r: float
    dt: float
    t_final: float
    epsilon: float
    sigma_list: list
    k_schedule: list
    seed: int
    dim: int
    output_dir: str
    constants_file: str
    blowup_threshold: float
    newton_tol: float
    newton_max: int
    alpha: float
    interior_fraction: float
    spike_strength: float | None
    flat_level: float
    continuity_tol: float
    level: float
    settle_tol: float
    t_max: float
    sweep_p: list
    sweep_q: list
    refine_dts: list
    refine_level: float
    probe_levels: list
    raw: dict = field(repr=False, default_factory=dict)

    def config_hash(self) -> str:
        buf = io.StringIO()
        for section in sorted(self.raw):
            for key in sorted(self.raw[section]):
                buf.write(f"{section}.{key}={self.raw[section][key]}\n")
        return hashlib.sha256(buf.getvalue().encode()).hexdigest()[:16]


def _float_list(text: str) -> list:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_nonlinearity(section) -> PowerNonlinearity:
    kind = section.get("kind", "power")
    if kind != "power":
        raise ConfigError(f"unsupported nonlinearity kind {kind!r}")
    try:
        return PowerNonlinearity(
            coeff=float(section.get("c", "1.0")),
            exponent=float(section.get("p", "2.0")),
            linear=float(section.get("d", "0.0")),
            offset=float(section.get("e", "0.0")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read the config file and apply ``section.key=value`` overrides."""
    parser = configparser.ConfigParser()
    parser.read_dict(_DEFAULTS)
    parser.read_dict({"f": {"kind": "power"}, "g": {"kind": "power"}})
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    for item in overrides:
        key, _, value = item.partition("=")
        section, _, name = key.partition(".")
        if not (section and name and value != ""):
            raise ConfigError(f"malformed override {item!r}; "
                              "expected section.key=value")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section.strip(), name.strip(), value.strip())

    run = parser["run"]
    mesh_sec = parser["mesh"]
    try:
        mesh = Mesh1D(n=int(mesh_sec.get("n")), length=float(mesh_sec.get("length")))
        f = _parse_nonlinearity(parser["f"])
        g = _parse_nonlinearity(parser["g"])
        r = float(run.get("r"))
        sigma_list = _float_list(run.get("sigma_list"))
        if not sigma_list:
            sigma_list = [r, 2.0 * r, 4.0 * r]
        spike_raw = run.get("spike_strength").strip()
        cfg = ExperimentConfig(
            preset=run.get("preset"),
            mesh=mesh, f=f, g=g, r=r,
            dt=float(run.get("dt")),
            t_final=float(run.get("t_final")),
            epsilon=float(run.get("epsilon")),
            sigma_list=sigma_list,
            k_schedule=_float_list(run.get("k_schedule")),
            seed=int(run.get("seed")),
            dim=int(run.get("dim")),
            output_dir=run.get("output_dir"),
            constants_file=run.get("constants_file"),
            blowup_threshold=float(run.get("blowup_threshold")),
            newton_tol=float(run.get("newton_tol")),
            newton_max=int(run.get("newton_max")),
            alpha=float(run.get("alpha")),
            interior_fraction=float(run.get("interior_fraction")),
            spike_strength=float(spike_raw) if spike_raw else None,
            flat_level=float(run.get("flat_level")),
            continuity_tol=float(run.get("continuity_tol")),
            level=float(run.get("level")),
            settle_tol=float(run.get("settle_tol")),
            t_max=float(run.get("t_max")),
            sweep_p=_float_list(run.get("sweep_p")),
            sweep_q=_float_list(run.get("sweep_q")),
            refine_dts=_float_list(run.get("refine_dts")),
            refine_level=float(run.get("refine_level")),
            probe_levels=_float_list(run.get("probe_levels")),
            raw={s: dict(parser[s]) for s in parser.sections()},
        )
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"bad config: {exc}") from None
    return cfg


def validate(cfg: ExperimentConfig) -> list:
    """Return human-readable violations; empty means runnable."""
    out = []
    if cfg.preset not in PRESETS:
        out.append(f"unknown preset {cfg.preset!r}; choose from {PRESETS}")
        return out
    if not cfg.r > 1.0:
        out.append(f"r = {cfg.r:g} must exceed 1")
    if not cfg.dt > 0:
        out.append("dt must be positive")
    if not 0 < cfg.epsilon < cfg.t_final:
        out.append(f"need 0 < epsilon < t_final, got {cfg.epsilon:g}, "
                   f"{cfg.t_final:g}")

    report = classify_balance(cfg.f, cfg.g, cfg.dim)
    p, q = cfg.f.exponent, cfg.g.exponent
    if cfg.preset != "dichotomy":
        if report.classification is Balance.CRITICAL:
            out.append(f"p+1 = 2q (= {p + 1:g}): not Dissipative")
        elif report.classification is Balance.EXPLOSIVE:
            out.append(f"p+1 = {p + 1:g} < 2q = {2 * q:g}: not Dissipative")

    if cfg.preset == "cascade":
        r0 = report.critical_exponent
        if r0 <= 1.0:
            out.append(f"r0 = {r0:g} <= 1: no supercritical range "
                       f"(p must exceed 1 + 2/N = {1 + 2 / cfg.dim:g})")
        elif not cfg.r < r0:
            out.append(f"r = {cfg.r:g} not inside the supercritical "
                       f"range (1, {r0:g})")
        if len(cfg.k_schedule) < 3:
            out.append("k_schedule needs at least 3 entries")
        elif any(b <= a for a, b in zip(cfg.k_schedule, cfg.k_schedule[1:])):
            out.append("k_schedule must be strictly increasing")
        if not 1.0 <= cfg.alpha < cfg.r:
            out.append(f"alpha = {cfg.alpha:g} must lie in [1, r = {cfg.r:g})")
        if not 0 < cfg.interior_fraction < 1:
            out.append("interior_fraction must lie in (0, 1)")
        if cfg.spike_strength is not None:
            lo, hi = 1.0 / max(r0, 1e-9), 1.0 / cfg.r
            if not lo < cfg.spike_strength < hi:
                out.append(f"spike_strength {cfg.spike_strength:g} outside "
                           f"({lo:g}, {hi:g}) = (1/r0, 1/r)")
    return out


def default_spike_strength(cfg: ExperimentConfig) -> float:
    """Midpoint of (1/r0, 1/r): rough enough to be supercritical, nodal-finite."""
    r0 = classify_balance(cfg.f, cfg.g, cfg.dim).critical_exponent
    return 0.5 * (1.0 / r0 + 1.0 / cfg.r)
