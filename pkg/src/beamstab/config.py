"""Reading and writing the INI-style configuration and certificate files.

Configuration layout::

    [system]
    lambda_diag = 15, 10
    M = 0.1, 0, 0, 0.3          # row-major
    F = 2, 0.4, -0.8, 1
    [gains]
    K = 20, 0, 0, 20
    Binv = 0.01, 0, 0, 0.02
    [ic]
    u1 = 0.03 sin_half_pi
    u2 = -0.02 cos_half_pi      # or "1.0 samples" with u2_samples = ...
    lift = true
    [sim]
    nx = 100
    dt = 1e-3
    t_final = 5
    scenario = full
    stride = 10
    [certify]                   # optional
    alpha = 0.1
    beta = 0.1
    [tolerances]                # optional overrides
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .model import (
    ControllerGains,
    InitialCondition,
    ProfileComponent,
    PROFILES,
    ScenarioConfig,
    SystemMatrices,
    Tolerances,
)


@dataclass
class CertifyOptions:
    alpha: float = 0.1
    beta: float = 0.1
    slack: float = 0.05
    margin_tol: float = 1e-8
    restarts: int = 10
    iterations: int = 5000


@dataclass
class ProblemConfig:
    system: SystemMatrices
    gains: ControllerGains
    ic: InitialCondition
    sim: ScenarioConfig
    certify: CertifyOptions = field(default_factory=CertifyOptions)
    tolerances: Tolerances = field(default_factory=Tolerances)
    source: str | None = None


def _floats(text: str) -> list[float]:
    parts = [p for p in text.replace(";", ",").replace("\n", ",").split(",") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ValidationError(f"cannot parse numbers from {text!r}") from exc


def _matrix(text: str, name: str) -> np.ndarray:
    vals = _floats(text)
    n = int(round(math.sqrt(len(vals))))
    if n * n != len(vals) or n == 0:
        raise ValidationError(f"{name}: expected n*n row-major entries, got {len(vals)}")
    return np.array(vals).reshape(n, n)


def _fmt(values) -> str:
    return ", ".join(repr(float(v)) for v in np.ravel(values))


def _require(cp: configparser.ConfigParser, section: str, key: str) -> str:
    try:
        return cp[section][key]
    except KeyError:
        raise ValidationError(f"config missing [{section}] {key}") from None


def parse_config(text: str, source: str | None = None) -> ProblemConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from exc

    lam = _floats(_require(cp, "system", "lambda_diag"))
    system = SystemMatrices(
        np.diag(lam),
        _matrix(_require(cp, "system", "M"), "M"),
        _matrix(_require(cp, "system", "F"), "F"),
    )
    gains = ControllerGains(
        K=_matrix(_require(cp, "gains", "K"), "K"),
        Binv=_matrix(_require(cp, "gains", "Binv"), "Binv"),
    )
    if gains.n != system.n:
        raise ValidationError(f"gains are {gains.n}x{gains.n} but system has n={system.n}")

    comps = []
    ic_sec = cp["ic"] if cp.has_section("ic") else {}
    for j in range(1, system.n + 1):
        spec = ic_sec.get(f"u{j}", "0 sin_half_pi").split()
        if len(spec) != 2:
            raise ValidationError(f"[ic] u{j}: expected '<amplitude> <profile>'")
        amp, profile = float(spec[0]), spec[1]
        samples = None
        if profile == "samples":
            samples = tuple(_floats(_require(cp, "ic", f"u{j}_samples")))
            if len(samples) < 4:
                raise ValidationError(f"[ic] u{j}_samples needs at least 4 values")
        elif profile not in PROFILES:
            raise ValidationError(f"[ic] u{j}: unknown profile {profile!r}")
        comps.append(ProfileComponent(amp, profile, samples))
    lift = str(ic_sec.get("lift", "true")).strip().lower() in ("1", "true", "yes", "on")
    ic = InitialCondition(tuple(comps), lift=lift)

    sim_sec = cp["sim"] if cp.has_section("sim") else {}
    try:
        sim = ScenarioConfig(
            scenario=sim_sec.get("scenario", "full"),
            nx=int(sim_sec.get("nx", 100)),
            dt=float(sim_sec.get("dt", 1e-3)),
            t_final=float(sim_sec.get("t_final", 5.0)),
            stride=int(sim_sec.get("stride", 10)),
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    opts = CertifyOptions()
    if cp.has_section("certify"):
        for f in fields(CertifyOptions):
            if f.name in cp["certify"]:
                setattr(opts, f.name, type(getattr(opts, f.name))(float(cp["certify"][f.name])))
    tol_kwargs = {}
    if cp.has_section("tolerances"):
        for f in fields(Tolerances):
            if f.name in cp["tolerances"]:
                tol_kwargs[f.name] = float(cp["tolerances"][f.name])
    return ProblemConfig(system, gains, ic, sim, opts, Tolerances(**tol_kwargs), source)


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def reference_config_text() -> str:
    return resources.files("beamstab").joinpath("data/reference.ini").read_text()


def load_reference_config() -> ProblemConfig:
    return parse_config(reference_config_text(), source="<bundled reference.ini>")


def dump_config(cfg: ProblemConfig) -> str:
    s = cfg.system
    lines = [
        "[system]",
        f"lambda_diag = {_fmt(s.lambda_diag)}",
        f"M = {_fmt(s.M)}",
        f"F = {_fmt(s.F)}",
        "",
        "[gains]",
        f"K = {_fmt(cfg.gains.K)}",
        f"Binv = {_fmt(cfg.gains.Binv)}",
        "",
        "[ic]",
    ]
    for j, c in enumerate(cfg.ic.components, start=1):
        lines.append(f"u{j} = {c.amplitude!r} {c.profile}")
        if c.samples is not None:
            lines.append(f"u{j}_samples = {_fmt(c.samples)}")
    lines.append(f"lift = {'true' if cfg.ic.lift else 'false'}")
    sim = cfg.sim
    lines += [
        "",
        "[sim]",
        f"nx = {sim.nx}",
        f"dt = {sim.dt!r}",
        f"t_final = {sim.t_final!r}",
        f"scenario = {sim.scenario.name.lower()}",
        f"stride = {sim.stride}",
        "",
        "[certify]",
    ]
    for f in fields(CertifyOptions):
        lines.append(f"{f.name} = {getattr(cfg.certify, f.name)!r}")
    return "\n".join(lines) + "\n"


# -- certificate files ----------------------------------------------------------

CERTIFICATE_KEYS = ("P_diag", "S_diag", "margin", "Q_diag", "alpha", "beta", "epsilon", "tau", "c0")


def write_certificate(path, cert, aux=None) -> None:
    """Write a certificate (and optionally its Lyapunov auxiliaries) as key/value text."""
    lines = ["[certificate]", f"P_diag = {_fmt(np.diag(cert.P))}", f"S_diag = {_fmt(np.diag(cert.S))}",
             f"margin = {cert.margin!r}"]
    if aux is not None:
        lines += [
            f"Q_diag = {_fmt(np.diag(aux.Q))}",
            f"alpha = {aux.alpha!r}",
            f"beta = {aux.beta!r}",
            f"epsilon = {aux.epsilon!r}",
            f"tau = {aux.tau!r}",
            f"c0 = {aux.c0!r}",
        ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_certificate(path) -> dict:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(Path(path).read_text())
        sec = cp["certificate"]
    except (OSError, configparser.Error, KeyError) as exc:
        raise ValidationError(f"cannot read certificate {path}: {exc}") from exc
    out = {}
    for key, val in sec.items():
        vals = _floats(val)
        out[key] = np.array(vals) if key.endswith("_diag") else vals[0]
    for key in ("P_diag", "S_diag"):
        if key not in out:
            raise ValidationError(f"certificate {path} lacks {key}")
    return out
