"""Experiment configuration files.

INI-style documents with sections [source], [detectors], [layout],
[matrix] and [analysis].  Unknown sections or keys are rejected so typos
cannot silently fall back to defaults.  Mode indices in config files are
1-based (matching how interferometer ports are labelled); the library
converts to 0-based indices internally.  Every stochastic step derives
its seed deterministically from ``analysis.master_seed``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

from .instrument import ConfigError, DetectorConfig, Layout, SourceConfig
from .matrix import TransferMatrix, builtin_matrix

_SCHEMA = "experiment-config/1"


@dataclass(frozen=True)
class AnalysisConfig:
    coincidence_window_ns: float = 300.0
    reference_offset_cycles: int = 2
    profile_bin_ns: float = 8.0
    profile_pitch_ns: float = 8.0
    display_bin_ns: float = 40.0
    display_pitch_ns: float = 4.0
    correlation_range_ns: float = 5976.0
    correlation_bin_ns: float = 100.0
    correlation_pitch_ns: float = 20.0
    half_window_ns: float = 25.0
    min_window_events: int = 5
    mc_trials: int = 1_000_000
    master_seed: int = 20260101

    def __post_init__(self):
        if self.coincidence_window_ns <= 0:
            raise ConfigError("coincidence window must be positive")
        if self.mc_trials < 1000:
            raise ConfigError("mc_trials unreasonably small")
        if self.reference_offset_cycles < 1:
            raise ConfigError("reference offset must be at least one duty cycle")


@dataclass(frozen=True)
class LayoutSpec:
    kind: str = "mmi"
    delay_line_ns: float = 664.0
    input_delayed: int = 1          # 1-based, as written in config files
    input_direct: int = 2
    polarization: str = "parallel"


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    detectors: DetectorConfig = field(default_factory=DetectorConfig)
    layout: LayoutSpec = field(default_factory=LayoutSpec)
    matrix_source: str = "builtin:chip_4x4_v1"
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    # -- assembly --------------------------------------------------------

    def build_matrix(self) -> TransferMatrix:
        kind, _, name = self.matrix_source.partition(":")
        if kind == "builtin":
            return builtin_matrix(name)
        if kind == "file":
            return TransferMatrix.from_file(name)
        raise ConfigError(f"matrix source must be 'builtin:<name>' or "
                          f"'file:<path>', got {self.matrix_source!r}")

    def build_layout(self) -> Layout:
        spec = self.layout
        if spec.kind == "hbt":
            return Layout.hbt()
        matrix = self.build_matrix()
        if spec.kind == "hom_splitter":
            from .matrix import balanced_splitter
            matrix = balanced_splitter()
        return Layout(kind=spec.kind, interference_matrix=matrix,
                      delay_line_ns=spec.delay_line_ns,
                      input_delayed=spec.input_delayed - 1,
                      input_direct=spec.input_direct - 1,
                      polarization=spec.polarization)

    def input_pair(self) -> tuple[int, int]:
        """0-based (i, j) input pair fed by the routing."""
        a, b = self.layout.input_delayed - 1, self.layout.input_direct - 1
        return (min(a, b), max(a, b))

    # -- seeds and provenance ---------------------------------------------

    def seed_for(self, purpose: str) -> int:
        digest = hashlib.sha256(
            f"{self.analysis.master_seed}:{purpose}".encode()).digest()
        return int.from_bytes(digest[:8], "little") % (2 ** 63)

    def to_dict(self) -> dict:
        return {
            "schema": _SCHEMA,
            "source": asdict(self.source),
            "detectors": asdict(self.detectors),
            "layout": asdict(self.layout),
            "matrix": {"source": self.matrix_source},
            "analysis": asdict(self.analysis),
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


_SECTION_TYPES = {
    "source": SourceConfig,
    "detectors": DetectorConfig,
    "layout": LayoutSpec,
    "analysis": AnalysisConfig,
}


def _parse_section(parser: configparser.ConfigParser, name: str, cls):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    if parser.has_section(name):
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"unknown key [{name}] {key!r}; "
                                  f"valid keys: {sorted(known)}")
            f = known[key]
            if f.type in ("float | None",):
                kwargs[key] = None if raw.strip().lower() in ("none", "auto", "calibrated") \
                    else float(raw)
            elif f.type in ("float",):
                kwargs[key] = float(raw)
            elif f.type in ("int",):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = raw.strip()
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{name}] section: {exc}") from exc


def loads(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    allowed = set(_SECTION_TYPES) | {"matrix"}
    unknown = set(parser.sections()) - allowed
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}; "
                          f"valid sections: {sorted(allowed)}")
    matrix_source = "builtin:chip_4x4_v1"
    if parser.has_section("matrix"):
        keys = dict(parser.items("matrix"))
        extra = set(keys) - {"source"}
        if extra:
            raise ConfigError(f"unknown key [matrix] {sorted(extra)}")
        matrix_source = keys.get("source", matrix_source).strip()
    return ExperimentConfig(
        source=_parse_section(parser, "source", SourceConfig),
        detectors=_parse_section(parser, "detectors", DetectorConfig),
        layout=_parse_section(parser, "layout", LayoutSpec),
        matrix_source=matrix_source,
        analysis=_parse_section(parser, "analysis", AnalysisConfig),
    )


def load(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def default_profile_text() -> str:
    """The bundled default experiment profile."""
    return resources.files("mmi_lab.data").joinpath("default.cfg").read_text()


def default_config() -> ExperimentConfig:
    return loads(default_profile_text())
