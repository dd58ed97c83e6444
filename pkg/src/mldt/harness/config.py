"""Scenario definitions and their INI file format.

Every section of the file is one scenario; ``[DEFAULT]`` values are shared.
Keys map one-to-one onto Scenario fields.  SNR grids are written either as
a comma list (``0, 5, 10``) or as an inclusive range ``start:stop:step``.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..analysis import CAPACITY_MODES
from ..errors import ConfigurationError

KINDS = ("uncoded_mldt", "ldpc_mldt", "raptor_mldt", "cdma_hw", "cdma_mseq", "mcds_cdma", "bounds", "capacity")
BER_KINDS = ("uncoded_mldt", "ldpc_mldt", "cdma_hw", "cdma_mseq", "mcds_cdma")

_RECEIVERS = {
    "ldpc_mldt": ("gspa", "spa", "conventional"),
    "mcds_cdma": ("gspa", "spa", "inter_spa"),
    "raptor_mldt": ("gspa", "spa"),
}


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    p_users: int = 1
    snr_db: tuple[float, ...] = ()
    seed: int = 0

    # stopping rule
    min_errors: int = 200
    min_frame_errors: int = 0
    max_bits: int = 10_000_000
    chunk_frames: int = 0  # 0 picks a per-kind default
    threads: int = 1

    # receivers and decoders
    receiver: str = "gspa"
    max_iter: int = 10
    early_exit: bool = True
    block_length: int = 1
    code_seed: int = 1
    alist: str = ""

    # spreading / multicarrier
    J: int = 16
    K: int = 0  # 0 picks a per-kind default
    L: int = 1
    m: int = 4
    weighting: str = "average"
    coded: bool = False
    n_sub: int = 16
    cp_len: int = 4
    rounds: int = 2
    feedback: str = "posterior"

    # raptor
    blocks: int = 20
    ir_chunk: int = 400
    min_rate: float = 0.25
    lt_iterations: int = 200
    decoder_iterations: int = 100
    precode_n: int = 1000
    precode_m: int = 50
    precode_seed: int = 1
    soliton_c: float = 0.05
    soliton_delta: float = 0.5

    # capacity
    mode: str = "two_user_bpsk_rayleigh"
    samples: int = 200_000

    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def bad(key, why):
            raise ConfigurationError(f"scenario {self.name!r}: key {key!r} {why}")

        if self.kind not in KINDS:
            bad("kind", f"must be one of {KINDS}, got {self.kind!r}")
        if not self.snr_db:
            bad("snr_db", "must be a nonempty grid")
        if any(not math.isfinite(s) for s in self.snr_db):
            bad("snr_db", "must contain finite values")
        if list(self.snr_db) != sorted(self.snr_db):
            bad("snr_db", "must be sorted ascending")
        if self.kind in BER_KINDS and self.min_errors < 100:
            bad("min_errors", "must be >= 100 for BER points")
        if self.kind == "raptor_mldt" and self.p_users != 2:
            bad("p_users", "must be 2 for raptor_mldt")
        if self.kind == "mcds_cdma" and self.receiver == "inter_spa" and self.p_users != 2:
            bad("receiver", "inter_spa needs p_users = 2")
        if not 1 <= self.p_users <= 3 and self.kind != "capacity":
            bad("p_users", "must be 1, 2 or 3")
        if self.kind in _RECEIVERS and self.receiver not in _RECEIVERS[self.kind]:
            bad("receiver", f"must be one of {_RECEIVERS[self.kind]} for {self.kind}")
        if self.kind == "capacity" and self.mode not in CAPACITY_MODES:
            bad("mode", f"must be one of {CAPACITY_MODES}")
        if self.weighting not in ("average", "per_user"):
            bad("weighting", "must be 'average' or 'per_user'")
        if self.feedback not in ("posterior", "extrinsic"):
            bad("feedback", "must be 'posterior' or 'extrinsic'")
        for key in ("max_iter", "block_length", "max_bits", "threads", "J", "L", "n_sub", "rounds", "blocks",
                    "ir_chunk", "lt_iterations", "decoder_iterations", "samples"):
            if getattr(self, key) < 1:
                bad(key, "must be >= 1")
        for key in ("chunk_frames", "K", "min_frame_errors", "cp_len"):
            if getattr(self, key) < 0:
                bad(key, "must be >= 0")
        if not 0 < self.min_rate <= 1:
            bad("min_rate", "must be in (0, 1]")

    def with_overrides(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})

    def items(self):
        """(key, value) pairs in field order, for provenance headers."""
        for f in dataclasses.fields(self):
            if f.name != "extra":
                yield f.name, getattr(self, f.name)


def parse_snr_grid(text: str) -> tuple[float, ...]:
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigurationError(f"SNR range must be start:stop:step with step > 0, got {text!r}")
        start, stop, step = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(round(v, 10)) for v in start + step * np.arange(count))
    return tuple(float(x) for x in text.replace(",", " ").split())


_FIELDS = {f.name: f for f in dataclasses.fields(Scenario) if f.name not in ("name", "extra")}


def _convert(key: str, raw: str, section: str):
    f = _FIELDS.get(key)
    if f is None:
        raise ConfigurationError(f"scenario {section!r}: unknown key {key!r}")
    try:
        if key == "snr_db":
            return parse_snr_grid(raw)
        default = f.default
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigurationError(f"scenario {section!r}: key {key!r} has invalid value {raw!r}") from None


def scenario_from_mapping(name: str, values: dict) -> Scenario:
    if "kind" not in values:
        raise ConfigurationError(f"scenario {name!r}: missing key 'kind'")
    kw = {k: _convert(k, str(v), name) for k, v in values.items()}
    return Scenario(name=name, **kw)


def load_scenarios(path) -> list[Scenario]:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read(p)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {p}: {exc}") from None
    out = [scenario_from_mapping(sec, dict(cp[sec])) for sec in cp.sections()]
    if not out:
        raise ConfigurationError(f"{p} defines no scenarios")
    return out
